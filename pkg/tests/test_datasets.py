import json

import numpy as np
import pytest

from msfeat.datasets import (Item, LabeledDataset, SynthSpec, load_dataset, load_manifest,
                             scale_index, synth_generate, synth_images)
from msfeat.exceptions import ConfigError, LayoutError
from msfeat.imageio import write_pnm


def make_kth(root, classes=2, instances=4, scales=(1, 5, 9)):
    for c in range(classes):
        for k in range(instances):
            d = root / f"class{c}" / f"sample_{'abcd'[k]}"
            d.mkdir(parents=True)
            for s in scales:
                write_pnm(d / f"img_scale_{s}.pgm", np.full((8, 8), 0.1 * (c + 1)))


def test_kth_layout(tmp_path):
    make_kth(tmp_path)
    ds = load_dataset(tmp_path, "kth-tips2")
    assert ds.class_names == ["class0", "class1"]
    assert ds.class_counts("train").tolist() == [6, 6]
    assert {it.instance for it in ds.subset("test")} == {3, 4}
    assert sorted({it.scale for it in ds.items}) == [1, 5, 9]
    imgs = ds.images("train", n_jobs=2)
    assert len(imgs) == 12 and imgs[0].shape == (8, 8)


def test_kth_custom_instances_and_scale_filter(tmp_path):
    make_kth(tmp_path)
    ds = load_dataset(tmp_path, "kth-tips2", train_instances=(4,), scales=[5])
    train = ds.subset("train")
    assert {it.instance for it in train} == {4} and {it.scale for it in train} == {5}
    assert len(ds.subset("test")) == 18
    assert ds.provenance["scale_filter"] == {"split": "train", "scales": [5]}


def test_kth_missing_scale_tag(tmp_path):
    make_kth(tmp_path, classes=1)
    write_pnm(tmp_path / "class0" / "sample_a" / "odd.pgm", np.zeros((4, 4)))
    with pytest.raises(LayoutError, match="odd.pgm"):
        load_dataset(tmp_path, "kth-tips2")


def test_empty_class_named(tmp_path):
    make_kth(tmp_path, classes=1)
    (tmp_path / "class9").mkdir()
    with pytest.raises(LayoutError, match="class9"):
        load_dataset(tmp_path, "kth-tips2")


def test_fmd_layout_split_is_seeded(tmp_path):
    for c in ("fabric", "glass"):
        d = tmp_path / "image" / c
        d.mkdir(parents=True)
        for i in range(10):
            write_pnm(d / f"{c}_{i}.pgm", np.zeros((4, 4)))
    a = load_dataset(tmp_path, "fmd", seed=1)
    b = load_dataset(tmp_path, "fmd", seed=1)
    c = load_dataset(tmp_path, "fmd", seed=2)
    assert a.class_counts("train").tolist() == [5, 5]
    assert [it.split for it in a.items] == [it.split for it in b.items]
    assert [it.split for it in a.items] != [it.split for it in c.items]


def test_flat_layout_and_errors(tmp_path):
    for split in ("train", "test"):
        for c in ("a", "b"):
            (tmp_path / split / c).mkdir(parents=True)
            write_pnm(tmp_path / split / c / "x.pgm", np.zeros((4, 4)))
    ds = load_dataset(tmp_path, "flat")
    assert ds.labels("test").tolist() == [0, 1]
    (tmp_path / "train" / "a" / "notes.txt").write_text("hi")
    with pytest.raises(LayoutError, match="notes.txt"):
        load_dataset(tmp_path, "flat")
    with pytest.raises(LayoutError):
        load_dataset(tmp_path / "nowhere", "flat")
    with pytest.raises(ConfigError):
        load_dataset(tmp_path, "coco")


def test_scale_filter_needs_tags(tmp_path):
    ds = LabeledDataset(tmp_path, [Item("a.pgm", 0)], ["c"])
    with pytest.raises(ConfigError):
        ds.filter_scales([1])


def test_item_validation():
    with pytest.raises(LayoutError):
        Item("x", 0, split="val")
    with pytest.raises(LayoutError):
        Item("x", 0, scale=12)
    with pytest.raises(LayoutError):
        LabeledDataset(".", [Item("x", 1)], ["a", "b"])


def test_scale_index():
    assert scale_index("sample_a/22a-scale_7_im_3_col.png") == 7
    assert scale_index("plain.png") is None


def test_synth_deterministic_and_balanced():
    spec = SynthSpec(n_train=3, n_test=2, side=16, seed=5)
    a, b = synth_images(spec), synth_images(spec)
    for split in ("train", "test"):
        assert all(x.tobytes() == y.tobytes() for x, y in zip(a[split][0], b[split][0]))
    assert a["train"][1].tolist() == [0] * 3 + [1] * 3 + [2] * 3 + [3] * 3
    assert all(img.min() >= 0 and img.max() <= 1 for img in a["test"][0])


def test_synth_disjoint_scales():
    spec = SynthSpec(n_train=5, n_test=5, side=16, disjoint_scales=True)
    d = synth_images(spec)
    assert all(1.0 <= j["scale"] <= 1.3 for j in d["train"][2])
    assert all(1.5 <= j["scale"] <= 2.0 for j in d["test"][2])


def test_synth_seed_and_class_seed_change_corpus():
    base = synth_images(SynthSpec(n_train=1, n_test=0, side=16))["train"][0]
    other = synth_images(SynthSpec(n_train=1, n_test=0, side=16, seed=1))["train"][0]
    assert not np.array_equal(base[0], other[0])


@pytest.mark.parametrize("kw", [dict(side=4), dict(families=("stripes",)),
                                dict(scales=(2.0, 1.0)), dict(noise=-1.0),
                                dict(contrast=(0.0, 1.0))])
def test_synth_spec_validation(kw):
    with pytest.raises(ConfigError):
        SynthSpec(**kw)


def test_synth_generate_files_and_manifest(tmp_path):
    spec = SynthSpec(n_train=2, n_test=1, side=12)
    ds = synth_generate(spec, tmp_path / "a")
    synth_generate(spec, tmp_path / "b")
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.pgm"))
    assert len(files) == 12
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    doc = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert doc["format"] == "msfeat-manifest" and len(doc["items"]) == 12
    again = load_manifest(tmp_path / "a")
    assert again.to_manifest() == ds.to_manifest()
    flat = load_dataset(tmp_path / "a", "flat")
    assert flat.class_counts().tolist() == [3, 3, 3, 3]


def test_malformed_manifest(tmp_path):
    (tmp_path / "manifest.json").write_text(json.dumps({"items": [{"path": "x"}]}))
    with pytest.raises(LayoutError):
        load_manifest(tmp_path)
    with pytest.raises(LayoutError):
        load_manifest(tmp_path / "missing")
