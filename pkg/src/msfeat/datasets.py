"""Labeled image corpora: directory loaders, manifests and a synthetic generator.

Supported directory layouts
---------------------------
``kth-tips2``
    ``root/<class>/<instance>/<image>``. Instances are the sorted
    subdirectories of each class (``sample_a`` ... ``sample_d``); the scale
    index is parsed from ``scale_<k>`` in the file name.
``fmd``
    ``root/<class>/<image>``, or the same below ``root/image/``. Each class is
    split into seeded random halves.
``flat``
    ``root/train/<class>/<image>`` and ``root/test/<class>/<image>``.

Every corpus can be described by a manifest, a JSON document::

    {"format": "msfeat-manifest", "version": 1,
     "classes": ["name0", ...],
     "items": [{"path": "relative/path.pgm", "class": 0, "instance": 1,
                "scale": 3, "split": "train"}, ...],
     "provenance": {...}}

``scale`` and ``instance`` may be ``null``.
"""

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .exceptions import ConfigError, LayoutError
from .imageio import IMAGE_SUFFIXES, read_image, write_pnm

__all__ = [
    "FAMILIES",
    "Item",
    "LabeledDataset",
    "SynthSpec",
    "load_dataset",
    "load_manifest",
    "scale_index",
    "synth_generate",
    "synth_images",
]

MANIFEST_NAME = "manifest.json"
SCALE_RE = re.compile(r"scale_(\d+)")
FAMILIES = ("sinusoid", "checker", "blobs", "noise")


@dataclass(frozen=True)
class Item:
    path: str
    label: int
    instance: int | None = None
    scale: int | None = None
    split: str = "train"

    def __post_init__(self):
        if self.split not in ("train", "test"):
            raise LayoutError(f"{self.path}: split must be 'train' or 'test'")
        if self.scale is not None and not 1 <= self.scale <= 9:
            raise LayoutError(f"{self.path}: scale index {self.scale} outside 1..9")


@dataclass
class LabeledDataset:
    """Image items with dense class ids and train/test tags.

    Paths are relative to ``root``.
    """

    root: Path
    items: list
    class_names: list
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.root = Path(self.root)
        labels = {it.label for it in self.items}
        if labels and labels != set(range(len(self.class_names))):
            raise LayoutError("class ids must be dense 0..K-1")

    def __len__(self):
        return len(self.items)

    def subset(self, split):
        return [it for it in self.items if it.split == split]

    def labels(self, split):
        return np.array([it.label for it in self.subset(split)], dtype=np.int64)

    def images(self, split, n_jobs=1):
        """Load the images of one split, in manifest order."""
        paths = [self.root / it.path for it in self.subset(split)]
        if n_jobs == 1:
            return [read_image(p) for p in paths]
        with ThreadPoolExecutor(n_jobs) as pool:
            return list(pool.map(read_image, paths))

    def class_counts(self, split=None):
        items = self.items if split is None else self.subset(split)
        return np.bincount([it.label for it in items], minlength=len(self.class_names))

    def filter_scales(self, scales, split="train"):
        """Keep only items of ``split`` whose scale index is in ``scales``."""
        keep = set(int(s) for s in scales)
        out = []
        for it in self.items:
            if it.split == split:
                if it.scale is None:
                    raise ConfigError(f"{it.path}: scale filter needs scale-tagged items")
                if it.scale not in keep:
                    continue
            out.append(it)
        prov = dict(self.provenance, scale_filter={"split": split, "scales": sorted(keep)})
        return LabeledDataset(self.root, out, list(self.class_names), prov)

    def to_manifest(self):
        return {
            "format": "msfeat-manifest",
            "version": 1,
            "classes": list(self.class_names),
            "items": [{"path": it.path, "class": it.label, "instance": it.instance,
                       "scale": it.scale, "split": it.split} for it in self.items],
            "provenance": self.provenance,
        }

    def write_manifest(self, path=None):
        path = self.root / MANIFEST_NAME if path is None else Path(path)
        path.write_text(json.dumps(self.to_manifest(), indent=1, sort_keys=True) + "\n")
        return path


def load_manifest(path):
    """Read a manifest; item paths are taken relative to its directory."""
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.is_file():
        raise LayoutError(f"{path}: manifest not found")
    doc = json.loads(path.read_text())
    try:
        items = [Item(d["path"], int(d["class"]), d.get("instance"), d.get("scale"), d["split"])
                 for d in doc["items"]]
        classes = list(doc["classes"])
    except (KeyError, TypeError) as exc:
        raise LayoutError(f"{path}: malformed manifest ({exc})") from exc
    return LabeledDataset(path.parent, items, classes, doc.get("provenance", {}))


# -- directory layouts ---------------------------------------------------------


def _subdirs(path):
    return sorted(p for p in path.iterdir() if p.is_dir() and not p.name.startswith("."))


def _image_files(path):
    files = []
    for p in sorted(path.iterdir()):
        if p.name.startswith("."):
            continue
        if p.is_dir() or p.suffix.lower() not in IMAGE_SUFFIXES:
            raise LayoutError(f"{p}: expected only image files here")
        files.append(p)
    if not files:
        raise LayoutError(f"{path}: empty class (no images)")
    return files


def _class_dirs(root):
    classes = _subdirs(root)
    if not classes:
        raise LayoutError(f"{root}: no class directories")
    stray = [p for p in root.iterdir() if p.is_file() and p.name != MANIFEST_NAME
             and not p.name.startswith(".")]
    if stray:
        raise LayoutError(f"{stray[0]}: unexpected file among class directories")
    return classes


def scale_index(name):
    m = SCALE_RE.search(name)
    return int(m.group(1)) if m else None


def _load_kth(root, train_instances):
    items, names = [], []
    for label, cdir in enumerate(_class_dirs(root)):
        names.append(cdir.name)
        instances = _subdirs(cdir)
        if not instances:
            raise LayoutError(f"{cdir}: empty class (no instance directories)")
        for k, idir in enumerate(instances, start=1):
            for f in _image_files(idir):
                s = scale_index(f.name)
                if s is None:
                    raise LayoutError(f"{f}: file name has no scale_<k> tag")
                split = "train" if k in train_instances else "test"
                items.append(Item(f.relative_to(root).as_posix(), label, k, s, split))
    return items, names


def _load_fmd(root, seed, train_fraction):
    base = root / "image" if (root / "image").is_dir() else root
    rng = np.random.default_rng(seed)
    items, names = [], []
    for label, cdir in enumerate(_class_dirs(base)):
        names.append(cdir.name)
        files = _image_files(cdir)
        order = rng.permutation(len(files))
        n_train = int(round(train_fraction * len(files)))
        train = set(order[:n_train].tolist())
        for i, f in enumerate(files):
            items.append(Item(f.relative_to(root).as_posix(), label, None, scale_index(f.name),
                              "train" if i in train else "test"))
    return items, names


def _load_flat(root):
    splits = {}
    for split in ("train", "test"):
        if not (root / split).is_dir():
            raise LayoutError(f"{root / split}: missing split directory")
        splits[split] = {c.name: c for c in _class_dirs(root / split)}
    names = sorted(set(splits["train"]) | set(splits["test"]))
    items = []
    for split, classes in splits.items():
        for name, cdir in sorted(classes.items()):
            for f in _image_files(cdir):
                items.append(Item(f.relative_to(root).as_posix(), names.index(name), None,
                                  scale_index(f.name), split))
    return items, names


def load_dataset(root, layout="flat", *, train_instances=(1, 2), seed=0,
                 train_fraction=0.5, scales=None):
    """Index a dataset directory.

    Parameters
    ----------
    root : path-like
    layout : {"kth-tips2", "fmd", "flat", "manifest"}
    train_instances : tuple of int, default=(1, 2)
        KTH-TIPS2 only: 1-based positions of the training instances among
        the sorted instance directories; the others are test.
    seed : int
        FMD only: seed of the per-class random split.
    train_fraction : float, default=0.5
        FMD only.
    scales : iterable of int, optional
        Keep only these scale indices in the training split.

    Returns
    -------
    LabeledDataset
    """
    root = Path(root)
    if not root.is_dir():
        raise LayoutError(f"{root}: not a directory")
    if layout == "kth-tips2":
        items, names = _load_kth(root, set(train_instances))
        prov = {"layout": layout, "train_instances": sorted(set(train_instances))}
    elif layout == "fmd":
        items, names = _load_fmd(root, seed, train_fraction)
        prov = {"layout": layout, "seed": seed, "train_fraction": train_fraction}
    elif layout == "flat":
        items, names = _load_flat(root)
        prov = {"layout": layout}
    elif layout == "manifest":
        ds = load_manifest(root)
        return ds if scales is None else ds.filter_scales(scales)
    else:
        raise ConfigError(f"unknown layout {layout!r}")
    ds = LabeledDataset(root, items, names, prov)
    return ds if scales is None else ds.filter_scales(scales)


# -- synthetic textures --------------------------------------------------------


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a synthetic texture corpus.

    Each class is one texture family with class-specific parameters drawn
    from ``class_seed``; every image applies random jitter (scale factor,
    rotation in degrees, brightness offset, contrast, additive noise) drawn
    from ``seed``.

    With ``disjoint_scales`` the training images use scale factors from
    ``train_scales`` and the test images from ``test_scales``; otherwise both
    use ``scales``.
    """

    n_classes: int = 4
    families: tuple = FAMILIES
    n_train: int = 50
    n_test: int = 50
    side: int = 32
    scales: tuple = (1.0, 2.0)
    rotation: tuple = (-20.0, 20.0)
    brightness: tuple = (-0.1, 0.1)
    contrast: tuple = (0.6, 1.0)
    noise: float = 0.05
    disjoint_scales: bool = False
    train_scales: tuple = (1.0, 1.3)
    test_scales: tuple = (1.5, 2.0)
    seed: int = 0
    class_seed: int = 0

    def __post_init__(self):
        if self.n_classes < 1 or self.n_train < 0 or self.n_test < 0:
            raise ConfigError("class and image counts must be positive")
        if self.side < 8:
            raise ConfigError("synthetic images need side >= 8")
        unknown = set(self.families) - set(FAMILIES)
        if not self.families or unknown:
            raise ConfigError(f"unknown texture families {sorted(unknown)}")
        for name in ("scales", "rotation", "brightness", "contrast", "train_scales", "test_scales"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ConfigError(f"{name}: empty range ({lo}, {hi})")
        for name in ("scales", "train_scales", "test_scales", "contrast"):
            if getattr(self, name)[0] <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.noise < 0:
            raise ConfigError("noise must be nonnegative")

    def scale_range(self, split):
        if not self.disjoint_scales:
            return self.scales
        return self.train_scales if split == "train" else self.test_scales

    def to_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def _class_recipes(spec):
    recipes = []
    for k in range(spec.n_classes):
        rng = np.random.default_rng([spec.class_seed, k])
        family = spec.families[k % len(spec.families)]
        r = {"family": family, "angle": float(rng.uniform(0, 180))}
        if family == "sinusoid":
            r["period"] = float(rng.uniform(4.0, 8.0))
        elif family == "checker":
            r["period"] = float(rng.uniform(3.0, 6.0))
        elif family == "blobs":
            r["radius"] = float(rng.uniform(0.7, 1.2))
            r["density"] = float(rng.uniform(0.03, 0.06))
        else:
            r["sigma"] = float(rng.uniform(2.0, 3.0))
        recipes.append(r)
    return recipes


def _render(recipe, side, scale, rotation, rng):
    """Zero-mean, unit-variance texture on a ``side x side`` grid."""
    fam = recipe["family"]
    if fam == "noise":
        pad = int(np.ceil(4 * recipe["sigma"] * scale))
        n = rng.standard_normal((side + 2 * pad, side + 2 * pad))
        t = ndimage.gaussian_filter(n, recipe["sigma"] * scale, mode="wrap")[pad:-pad, pad:-pad]
    else:
        theta = np.deg2rad(recipe["angle"] + rotation)
        yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
        y0, x0 = rng.uniform(0, side, size=2)
        c, s = np.cos(theta), np.sin(theta)
        u = (c * (xx - x0) + s * (yy - y0)) / scale
        v = (-s * (xx - x0) + c * (yy - y0)) / scale
        if fam == "sinusoid":
            t = np.sin(2 * np.pi * u / recipe["period"])
        elif fam == "checker":
            t = np.tanh(4 * np.sin(np.pi * u / recipe["period"]) * np.sin(np.pi * v / recipe["period"]))
        else:
            half = side / scale
            area = (2 * half) ** 2
            n = max(1, rng.poisson(recipe["density"] * area))
            centers = rng.uniform(-half, half, size=(n, 2))
            r2 = recipe["radius"] ** 2
            t = np.zeros_like(u)
            for cu, cv in centers:
                t += np.exp(-((u - cu) ** 2 + (v - cv) ** 2) / (2 * r2))
    sd = t.std()
    return (t - t.mean()) / (sd if sd > 0 else 1.0)


def _jitter(spec, split, rng):
    lo, hi = spec.scale_range(split)
    # log-uniform scale factor
    scale = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
    return {"scale": scale,
            "rotation": float(rng.uniform(*spec.rotation)),
            "brightness": float(rng.uniform(*spec.brightness)),
            "contrast": float(rng.uniform(*spec.contrast))}


def _synth_one(spec, recipe, split, label, index):
    split_id = 0 if split == "train" else 1
    rng = np.random.default_rng([spec.seed, label, split_id, index])
    j = _jitter(spec, split, rng)
    t = _render(recipe, spec.side, j["scale"], j["rotation"], rng)
    img = 0.5 + j["brightness"] + 0.15 * j["contrast"] * t
    img = img + spec.noise * rng.standard_normal(img.shape)
    return np.clip(img, 0.0, 1.0), j


def _synth_scale_index(scale):
    # nine log-spaced bins over one octave, 1.0 -> 1 and 2.0 -> 9
    return int(np.clip(1 + np.rint(8 * np.log2(scale)), 1, 9))


def synth_images(spec):
    """Generate a synthetic corpus in memory.

    Returns
    -------
    dict with keys ``train`` and ``test``, each a tuple ``(images, labels,
    jitter)`` where ``jitter`` lists the per-image jitter draws.
    """
    recipes = _class_recipes(spec)
    out = {}
    for split, count in (("train", spec.n_train), ("test", spec.n_test)):
        imgs, labels, jit = [], [], []
        for label, recipe in enumerate(recipes):
            for i in range(count):
                img, j = _synth_one(spec, recipe, split, label, i)
                imgs.append(img)
                labels.append(label)
                jit.append(j)
        out[split] = (imgs, np.array(labels, dtype=np.int64), jit)
    return out


def synth_generate(spec, out):
    """Write a synthetic corpus as PGM files plus a manifest.

    Files go to ``out/<split>/<class>/<class>_<index>.pgm``, so the result
    also loads with the ``flat`` layout. Same spec, same bytes.
    """
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise LayoutError(f"{out}: cannot create output directory ({exc})") from exc
    recipes = _class_recipes(spec)
    names = [f"c{k}_{r['family']}" for k, r in enumerate(recipes)]
    items = []
    for split, count in (("train", spec.n_train), ("test", spec.n_test)):
        for label, recipe in enumerate(recipes):
            cdir = out / split / names[label]
            cdir.mkdir(parents=True, exist_ok=True)
            for i in range(count):
                img, j = _synth_one(spec, recipe, split, label, i)
                rel = f"{split}/{names[label]}/{names[label]}_{i:04d}.pgm"
                write_pnm(out / rel, img)
                items.append(Item(rel, label, None, _synth_scale_index(j["scale"]), split))
    prov = {"generator": "synth", "spec": spec.to_dict(), "recipes": recipes}
    ds = LabeledDataset(out, items, names, prov)
    ds.write_manifest()
    return ds
