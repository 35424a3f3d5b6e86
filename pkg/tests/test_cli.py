import json

import pytest

from msfeat import __version__
from msfeat.cli import main
from msfeat.serialization import load_features, load_model

SMALL = ["--patch", "6", "--dict-size", "8", "--patches", "300", "--epochs", "2",
         "--batch-size", "100"]


def records(log):
    return [json.loads(line) for line in log.read_text().splitlines()]


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "data"), "--train", "4", "--test", "4",
                 "--side", "16", "--log", str(root / "log")]) == 0
    return root


def test_stepwise_commands(corpus, tmp_path, capsys):
    log = tmp_path / "runs.ndjson"
    data = str(corpus / "data")
    common = ["--log", str(log)]
    assert main(["learn", "--data", data, "--model", "km", "--out", str(tmp_path / "m"),
                 *SMALL, *common]) == 0
    for split in ("train", "test"):
        assert main(["encode", "--data", data, "--model-file", str(tmp_path / "m"),
                     "--split", split, "--out", str(tmp_path / split), *common]) == 0
    assert main(["train", "--features", str(tmp_path / "train"), "--out",
                 str(tmp_path / "clf"), "--kind", "chi2", *common]) == 0
    assert main(["eval", "--classifier", str(tmp_path / "clf"), "--features",
                 str(tmp_path / "test"), *common]) == 0
    assert main(["viz", "--model-file", str(tmp_path / "m"), "--out",
                 str(tmp_path / "f.pgm"), *common]) == 0
    recs = records(log)
    assert [r["command"] for r in recs] == ["learn", "encode", "encode", "train", "eval", "viz"]
    assert all(r["version"] == __version__ and r["seed"] == 0 for r in recs)
    X, y, meta = load_features(tmp_path / "test")
    assert X.shape == (16, 32) and meta["split"] == "test"
    assert 0.0 <= recs[4]["metrics"]["accuracy"] <= 1.0
    assert load_model(tmp_path / "clf").kind == "chi2"
    out = capsys.readouterr().out.strip().splitlines()
    assert json.loads(out[-1])["command"] == "viz"


def test_config_file_and_override(corpus, tmp_path):
    log = tmp_path / "runs.ndjson"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"data": str(corpus / "data"), "model": "km", "patch": 6,
                               "dict-size": 6, "patches": 300, "grid": 1, "C": "cv"}))
    assert main(["pipeline", "--config", str(cfg), "--dict-size", "4", "--log", str(log),
                 "--out-dir", str(tmp_path / "out")]) == 0
    rec = records(log)[0]
    assert rec["config"]["dict_size"] == 4 and rec["config"]["grid"] == 1
    assert rec["config"]["patch"] == 6 and "selected_C" in rec["metrics"]
    assert (tmp_path / "out" / "model.msf").is_file()


def test_transfer_reports_chance(corpus, tmp_path):
    log = tmp_path / "log"
    d = str(corpus / "data")
    assert main(["transfer", "--source", d, "--target", d, "--model", "km", *SMALL,
                 "--log", str(log)]) == 0
    assert records(log)[0]["metrics"]["chance"] == 0.25


def test_errors_exit_codes(corpus, tmp_path, capsys):
    log = ["--log", str(tmp_path / "log")]
    assert main(["learn", "--data", str(tmp_path / "none"), "--out", "x", *log]) == 1
    assert "error" in capsys.readouterr().err
    assert main(["learn", "--data", "x"]) == 2
    assert main(["train", "--features", "f", "--out", "o", "--kind", "forest"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"no-such-flag": 1}))
    assert main(["eval", "--config", str(bad)]) == 2
    assert main(["learn", "--data", str(corpus / "data"), "--model", "s4c", "--color",
                 "--out", str(tmp_path / "m"), *SMALL, *log]) == 1
    assert not (tmp_path / "log").exists()


def test_version(capsys):
    assert main(["--version"]) == 0
    assert __version__ in capsys.readouterr().out
