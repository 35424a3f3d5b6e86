"""Command line interface.

Every subcommand accepts ``--config FILE`` (a JSON object whose keys are
option names, with ``-`` or ``_``); options given on the command line win
over the file. Each run appends one JSON record (command, resolved config,
seed, metrics, artifacts) to the run log, ``--log`` (default
``msfeat-runs.ndjson``).
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .classify import evaluate, svm_train
from .coders import AutoEncoderCoder, KMeansCoder, S3CCoder, SparseCoder
from .datasets import MANIFEST_NAME, SynthSpec, load_dataset, synth_generate
from .exceptions import MsfeatError
from .features import FeatureExtractor
from .multiscale import MultiScaleS3C, StackedS3C
from .serialization import load_features, load_model, save_features, save_model
from .viz import viz_filters

logger = logging.getLogger("msfeat")

MODEL_KINDS = ("km", "sc", "ae", "s3c", "s4c", "ms4c")
CLASSIFIER_KINDS = ("linear", "chi2", "knn")


class UsageError(Exception):
    pass


# -- argument parsing ----------------------------------------------------------


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _int_list(text):
    return [int(t) for t in str(text).split(",") if t.strip()]


def _float_list(text):
    return [float(t) for t in str(text).split(",") if t.strip()]


def _c_value(text):
    return text if text == "cv" else float(text)


def _add_common(p):
    p.add_argument("--config", help="JSON file with option values")
    p.add_argument("--log", default="msfeat-runs.ndjson", help="run log (NDJSON, appended)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")


def _add_data(p, name="--data"):
    p.add_argument(name, required=True, help="dataset root")
    p.add_argument(f"{name}-layout", dest=f"{name.strip('-').replace('-', '_')}_layout",
                   choices=("auto", "manifest", "flat", "kth-tips2", "fmd"), default="auto")
    p.add_argument(f"{name}-scales", dest=f"{name.strip('-').replace('-', '_')}_scales",
                   type=_int_list, default=None,
                   help="keep only these scale indices in the training split, e.g. 3,5,7")


def _add_model(p):
    p.add_argument("--model", choices=MODEL_KINDS, default="s3c")
    p.add_argument("--patch", type=_positive_int, default=12,
                   help="patch side (6, 12 and 24 are the reference sizes)")
    p.add_argument("--dict-size", type=_positive_int, default=64)
    p.add_argument("--patches", type=_positive_int, default=10000,
                   help="random training patches")
    p.add_argument("--epochs", type=_positive_int, default=20)
    p.add_argument("--batch-size", type=_positive_int, default=1000)
    p.add_argument("--levels", type=_positive_int, default=3, help="ms4c pyramid levels")
    p.add_argument("--sigmas", type=_float_list, default=[0.0, 1.0, 2.0], help="s4c blur widths")
    p.add_argument("--color", action="store_true")
    p.add_argument("--encoding", choices=("spike", "product"), default="spike")
    p.add_argument("--sc-beta", type=float, default=1.0, help="sparse coding L1 weight")
    p.add_argument("--iters", type=_positive_int, default=50, help="km/sc iterations")
    p.add_argument("--lr", type=float, default=0.5, help="autoencoder learning rate")


def _add_pooling(p):
    p.add_argument("--grid", type=int, choices=(1, 2, 3), default=2)
    p.add_argument("--reducer", choices=("mean", "max"), default="mean")
    p.add_argument("--stride", type=_positive_int, default=None)
    p.add_argument("--no-l2", dest="l2", action="store_false")


def _add_classifier(p):
    p.add_argument("--kind", choices=CLASSIFIER_KINDS, default="linear")
    p.add_argument("--C", dest="C", type=_c_value, default=1.0, help="number or 'cv'")
    p.add_argument("--gamma", type=float, default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="msfeat", description="Multi-scale feature learning "
                                     "for material and texture classification.")
    parser.add_argument("--version", action="version", version=f"msfeat {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic texture corpus")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=_positive_int, default=4)
    p.add_argument("--train", type=int, default=50, help="training images per class")
    p.add_argument("--test", type=int, default=50, help="test images per class")
    p.add_argument("--side", type=_positive_int, default=32)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--class-seed", type=int, default=0)
    p.add_argument("--disjoint-scales", action="store_true")

    p = sub.add_parser("learn", help="learn a dictionary from training images")
    _add_common(p)
    _add_data(p)
    _add_model(p)
    p.add_argument("--out", required=True, help="model file")

    p = sub.add_parser("encode", help="pooled features for one split")
    _add_common(p)
    _add_data(p)
    _add_pooling(p)
    p.add_argument("--model-file", required=True)
    p.add_argument("--split", choices=("train", "test"), default="train")
    p.add_argument("--out", required=True, help="feature file")

    p = sub.add_parser("train", help="train a classifier on a feature file")
    _add_common(p)
    _add_classifier(p)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True, help="classifier file")

    p = sub.add_parser("eval", help="evaluate a classifier on a feature file")
    _add_common(p)
    p.add_argument("--classifier", required=True)
    p.add_argument("--features", required=True)

    p = sub.add_parser("pipeline", help="learn, encode, train and evaluate on one corpus")
    _add_common(p)
    _add_data(p)
    _add_model(p)
    _add_pooling(p)
    _add_classifier(p)
    p.add_argument("--out-dir", default=None, help="keep model and feature files here")

    p = sub.add_parser("transfer", help="learn on one corpus, classify another")
    _add_common(p)
    _add_data(p, "--source")
    _add_data(p, "--target")
    _add_model(p)
    _add_pooling(p)
    _add_classifier(p)

    p = sub.add_parser("viz", help="filter montage of a model file")
    _add_common(p)
    p.add_argument("--model-file", required=True)
    p.add_argument("--out", required=True, help="image file (.pgm, .png)")
    p.add_argument("--cols", type=_positive_int, default=None)
    return parser


def _config_path(argv):
    """The ``--config`` value, found before argparse enforces required flags."""
    for k, tok in enumerate(argv):
        if tok == "--config" and k + 1 < len(argv):
            return argv[k + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _parse(argv):
    parser = build_parser()
    path = _config_path(argv)
    command = next((t for t in argv if not t.startswith("-")), None)
    subparsers = parser._subparsers._group_actions[0].choices
    if path is None or command not in subparsers:
        return parser, parser.parse_args(argv)
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    sub = subparsers[command]
    dests = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in cfg.items():
        dest = key.lstrip("-").replace("-", "_")
        if dest not in dests or dest in ("config", "help"):
            raise UsageError(f"unknown option {key!r} in {path}")
        action = dests[dest]
        if action.type is not None and isinstance(value, (str, int, float)) \
                and not isinstance(value, bool):
            try:
                value = action.type(str(value))
            except (TypeError, ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"{key}: {exc}") from exc
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"{key}: {value!r} is not one of {list(action.choices)}")
        defaults[dest] = value
    # file values become defaults, so explicit flags still override them
    for action in sub._actions:
        if action.dest in defaults:
            action.required = False
    sub.set_defaults(**defaults)
    return parser, parser.parse_args(argv)


# -- helpers -------------------------------------------------------------------


def _dataset(path, layout, scales):
    root = Path(path)
    if layout == "auto":
        layout = "manifest" if (root / MANIFEST_NAME).is_file() else "flat"
    return load_dataset(root, layout, scales=scales)


def _make_coder(a):
    N, p, seed = a.dict_size, a.patch, a.seed
    s3c_kw = dict(n_epochs=a.epochs, batch_size=a.batch_size, encoding=a.encoding,
                  random_state=seed)
    if a.model == "km":
        return KMeansCoder(N, p, max_iter=a.iters, color=a.color, random_state=seed)
    if a.model == "sc":
        return SparseCoder(N, p, beta=a.sc_beta, max_iter=a.iters, color=a.color,
                           random_state=seed)
    if a.model == "ae":
        return AutoEncoderCoder(N, p, learning_rate=a.lr, n_epochs=a.epochs, color=a.color,
                                random_state=seed)
    if a.model == "s3c":
        return S3CCoder(N, p, color=a.color, **s3c_kw)
    if a.model == "s4c":
        if a.color:
            raise UsageError("s4c codes gray images only; drop --color")
        return StackedS3C(N, p, tuple(a.sigmas), **s3c_kw)
    return MultiScaleS3C(N, p, a.levels, a.color, **s3c_kw)


def _learn(a, images):
    coder = _make_coder(a)
    coder.fit_images(images, a.patches, a.seed)
    return coder


def _extractor(coder, a):
    fe = FeatureExtractor(coder, stride=a.stride, grid=a.grid, reducer=a.reducer,
                          l2_normalize=a.l2, refit=False)
    return fe.fit(None)


def _train_eval(a, Ftr, ytr, Fte, yte):
    clf = svm_train(Ftr, ytr, a.kind, C=a.C, gamma=a.gamma, seed=a.seed)
    ev = evaluate(clf, Fte, yte)
    metrics = {"accuracy": ev.accuracy, "confusion": ev.confusion.tolist()}
    if hasattr(clf, "selected_C_"):
        metrics["selected_C"] = clf.selected_C_
    return clf, metrics


def _config_echo(args):
    skip = {"config", "log", "verbose", "command"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _append_log(path, record):
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True, default=str) + "\n")


# -- commands ------------------------------------------------------------------


def cmd_synth(a):
    spec = SynthSpec(n_classes=a.classes, n_train=a.train, n_test=a.test, side=a.side,
                     noise=a.noise, disjoint_scales=a.disjoint_scales, seed=a.seed,
                     class_seed=a.class_seed)
    ds = synth_generate(spec, a.out)
    return {"images": len(ds), "train": len(ds.subset("train")),
            "test": len(ds.subset("test"))}, {"corpus": str(a.out)}


def cmd_learn(a):
    ds = _dataset(a.data, a.data_layout, a.data_scales)
    coder = _learn(a, ds.images("train"))
    save_model(coder, a.out)
    metrics = {"train_images": len(ds.subset("train"))}
    trace = getattr(coder, "free_energy_trace_", None)
    if trace:
        metrics["final_free_energy"] = float(trace[-1])
    return metrics, {"model": str(a.out)}


def cmd_encode(a):
    ds = _dataset(a.data, a.data_layout, a.data_scales)
    coder = load_model(a.model_file)
    F = _extractor(coder, a).transform(ds.images(a.split))
    meta = {"split": a.split, "model_kind": coder.model_kind, "grid": a.grid,
            "reducer": a.reducer, "classes": ds.class_names}
    save_features(a.out, F, ds.labels(a.split), meta)
    return {"rows": int(F.shape[0]), "dim": int(F.shape[1])}, {"features": str(a.out)}


def cmd_train(a):
    X, y, _ = load_features(a.features)
    clf = svm_train(X, y, a.kind, C=a.C, gamma=a.gamma, seed=a.seed)
    save_model(clf, a.out)
    metrics = {"train_accuracy": float(np.mean(clf.predict(X) == y))}
    if hasattr(clf, "selected_C_"):
        metrics["selected_C"] = clf.selected_C_
    return metrics, {"classifier": str(a.out)}


def cmd_eval(a):
    X, y, _ = load_features(a.features)
    ev = evaluate(load_model(a.classifier), X, y)
    return {"accuracy": ev.accuracy, "confusion": ev.confusion.tolist()}, {}


def cmd_pipeline(a):
    ds = _dataset(a.data, a.data_layout, a.data_scales)
    coder = _learn(a, ds.images("train"))
    fe = _extractor(coder, a)
    Ftr, Fte = fe.transform(ds.images("train")), fe.transform(ds.images("test"))
    clf, metrics = _train_eval(a, Ftr, ds.labels("train"), Fte, ds.labels("test"))
    artifacts = {}
    if a.out_dir:
        out = Path(a.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_model(coder, out / "model.msf")
        save_model(clf, out / "classifier.msf")
        save_features(out / "train.feat", Ftr, ds.labels("train"))
        save_features(out / "test.feat", Fte, ds.labels("test"))
        artifacts["out_dir"] = str(out)
    return metrics, artifacts


def cmd_transfer(a):
    src = _dataset(a.source, a.source_layout, a.source_scales)
    tgt = _dataset(a.target, a.target_layout, a.target_scales)
    coder = _learn(a, src.images("train"))
    fe = _extractor(coder, a)
    Ftr, Fte = fe.transform(tgt.images("train")), fe.transform(tgt.images("test"))
    _, metrics = _train_eval(a, Ftr, tgt.labels("train"), Fte, tgt.labels("test"))
    metrics["chance"] = 1.0 / len(tgt.class_names)
    return metrics, {}


def cmd_viz(a):
    img = viz_filters(load_model(a.model_file), a.out, a.cols)
    return {"montage_shape": list(img.shape)}, {"image": str(a.out)}


COMMANDS = {"synth": cmd_synth, "learn": cmd_learn, "encode": cmd_encode,
            "train": cmd_train, "eval": cmd_eval, "pipeline": cmd_pipeline,
            "transfer": cmd_transfer, "viz": cmd_viz}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        _, args = _parse(argv)
    except UsageError as exc:
        print(f"msfeat: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse already printed the message
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.time()
    try:
        metrics, artifacts = COMMANDS[args.command](args)
    except (MsfeatError, UsageError, OSError) as exc:
        print(f"msfeat {args.command}: error: {exc}", file=sys.stderr)
        return 1
    record = {"command": args.command, "version": __version__, "seed": args.seed,
              "config": _config_echo(args), "metrics": metrics, "artifacts": artifacts,
              "started": started, "seconds": round(time.time() - started, 3)}
    _append_log(args.log, record)
    print(json.dumps({"command": args.command, "metrics": metrics}, sort_keys=True))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
