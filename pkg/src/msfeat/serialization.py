"""Binary model files.

Byte layout (all integers little-endian)::

    offset  size  field
    0       8     magic  b"MSFEATM\\x00"
    8       2     format version (u16), currently 1
    10      2     reserved, zero
    12      8     total file length in bytes, trailer included (u64)
    20      1     kind length k (u8)
    21      k     kind, ASCII (e.g. "s3c")
    ..      17    geometry: D, N, p, M (u32 each), color flag (u8)
    ..      4+j   parameter JSON length j (u32), then UTF-8 JSON
    ..      4     array count (u32); then per array:
                    u16 name length, name (UTF-8),
                    u8 ndim, ndim x u64 shape,
                    u64 element count, count x f64 (row-major)
    end-4   4     CRC-32 of every preceding byte (u32)

Loading checks, in order: magic, declared length against the actual size
(:class:`TruncationError`), the CRC (:class:`ChecksumError`), the version
(:class:`VersionError`) and, if requested, the kind
(:class:`KindMismatchError`).
"""

import io
import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .classify import Chi2KernelSVM, KNNClassifier, LinearSVM
from .coders import AutoEncoderCoder, KMeansCoder, S3CCoder, SparseCoder
from .exceptions import (ChecksumError, KindMismatchError, ModelFileError,
                         TruncationError, VersionError)
from .features import FeatureExtractor, PoolingConfig
from .multiscale import MultiScaleS3C, StackedS3C

__all__ = [
    "FORMAT_VERSION",
    "MAGIC",
    "ModelFile",
    "dumps",
    "load_features",
    "load_model",
    "loads",
    "save_features",
    "save_model",
]

MAGIC = b"MSFEATM\x00"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sHHQ")
_GEOM = struct.Struct("<IIIIB")

CODERS = {cls.model_kind: cls for cls in
          (KMeansCoder, SparseCoder, AutoEncoderCoder, S3CCoder, StackedS3C, MultiScaleS3C)}
CLASSIFIERS = {"svm-linear": LinearSVM, "svm-chi2": Chi2KernelSVM, "knn": KNNClassifier}
_CLF_ARRAYS = {
    "svm-linear": ("coef_", "intercept_"),
    "svm-chi2": ("support_vectors_", "dual_coef_", "intercept_"),
    "knn": ("X_",),
}


class ModelFile:
    """Decoded contents of a model file."""

    def __init__(self, kind, geometry, params, arrays, version=FORMAT_VERSION):
        self.kind = kind
        self.geometry = dict(geometry)
        self.params = params
        self.arrays = arrays
        self.version = version

    def __repr__(self):
        return f"ModelFile(kind={self.kind!r}, geometry={self.geometry}, arrays={list(self.arrays)})"


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# -- model <-> ModelFile -------------------------------------------------------


def _classifier_state(model):
    kind = {LinearSVM: "svm-linear", Chi2KernelSVM: "svm-chi2", KNNClassifier: "knn"}[type(model)]
    params = {"init": model.get_params(deep=False),
              "classes": [c.item() if hasattr(c, "item") else c for c in model.classes_]}
    arrays = {name: getattr(model, name) for name in _CLF_ARRAYS[kind]}
    if kind == "svm-chi2":
        params["gamma_"] = model.gamma_
    if kind == "knn":
        arrays["y_index"] = model._y_idx.astype(np.float64)
    n_features = next(iter(arrays.values())).shape[-1]
    geometry = {"D": n_features, "N": len(model.classes_), "p": 0, "M": 1, "color": False}
    return kind, geometry, params, arrays


def _classifier_from(kind, params, arrays):
    model = CLASSIFIERS[kind](**params["init"])
    model.classes_ = np.array(params["classes"])
    for name in _CLF_ARRAYS[kind]:
        setattr(model, name, arrays[name])
    if kind == "svm-chi2":
        model.gamma_ = params["gamma_"]
    if kind == "knn":
        model._y_idx = arrays["y_index"].astype(np.int64)
    return model


FEATURES_KIND = "feature-matrix"


def save_features(path, X, y, meta=None):
    """Store a feature matrix and its labels in the model-file container."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y)
    if y.shape != (X.shape[0],):
        raise ModelFileError("labels must have one entry per feature row")
    mf = ModelFile(FEATURES_KIND, {"D": X.shape[1], "N": X.shape[0], "p": 0, "M": 1,
                                   "color": False},
                   dict(meta or {}), {"X": X, "y": y.astype(np.float64)})
    Path(path).write_bytes(_encode(mf))


def load_features(path):
    """Inverse of :func:`save_features`: ``(X, y, meta)``."""
    mf = _decode(Path(path).read_bytes(), FEATURES_KIND)
    return mf.arrays["X"], mf.arrays["y"].astype(np.int64), mf.params


def to_modelfile(model):
    """Describe a fitted coder, feature extractor or classifier as a :class:`ModelFile`."""
    if isinstance(model, FeatureExtractor):
        coder = to_modelfile(model.coder)
        params = {"init": {k: v for k, v in model.get_params(deep=False).items() if k != "coder"},
                  "coder_kind": coder.kind, "coder": coder.params}
        arrays = {f"coder.{k}": v for k, v in coder.arrays.items()}
        return ModelFile("features", coder.geometry, params, arrays)
    if type(model) in CLASSIFIERS.values():
        return ModelFile(*_classifier_state(model))
    if getattr(model, "model_kind", None) in CODERS:
        params, arrays = model._get_state()
        return ModelFile(model.model_kind, model.geometry(), params, arrays)
    raise ModelFileError(f"cannot serialize {type(model).__name__}")


def from_modelfile(mf):
    """Rebuild the estimator described by ``mf``."""
    if mf.kind == "features":
        coder = CODERS[mf.params["coder_kind"]]._from_state(
            mf.params["coder"],
            {k[len("coder."):]: v for k, v in mf.arrays.items() if k.startswith("coder.")},
        )
        model = FeatureExtractor(coder, **mf.params["init"])
        model.pooling_ = PoolingConfig(model.grid, model.reducer)
        return model
    if mf.kind in CLASSIFIERS:
        return _classifier_from(mf.kind, mf.params, mf.arrays)
    if mf.kind in CODERS:
        return CODERS[mf.kind]._from_state(mf.params, mf.arrays)
    raise KindMismatchError(f"unknown model kind {mf.kind!r}")


# -- bytes ---------------------------------------------------------------------


def _encode(mf):
    body = io.BytesIO()
    kind = mf.kind.encode("ascii")
    body.write(struct.pack("<B", len(kind)) + kind)
    g = mf.geometry
    body.write(_GEOM.pack(int(g["D"]), int(g["N"]), int(g["p"]), int(g["M"]), int(bool(g["color"]))))
    params = json.dumps(mf.params, sort_keys=True, default=_json_default).encode("utf-8")
    body.write(struct.pack("<I", len(params)) + params)
    body.write(struct.pack("<I", len(mf.arrays)))
    for name in sorted(mf.arrays):
        arr = np.ascontiguousarray(mf.arrays[name], dtype="<f8")
        key = name.encode("utf-8")
        body.write(struct.pack("<H", len(key)) + key)
        body.write(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        body.write(struct.pack("<Q", arr.size) + arr.tobytes())
    payload = body.getvalue()
    total = _PREFIX.size + len(payload) + 4
    head = _PREFIX.pack(MAGIC, mf.version, 0, total) + payload
    return head + struct.pack("<I", zlib.crc32(head))


class _Reader:
    def __init__(self, data, start, end):
        self.data = data
        self.pos = start
        self.end = end

    def take(self, n):
        if self.pos + n > self.end:
            raise TruncationError("model file ends inside a record")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))


def _decode(data, expected_kind=None):
    if len(data) < _PREFIX.size + 4:
        raise TruncationError(f"model file too short ({len(data)} bytes)")
    magic, version, _, total = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise ModelFileError("not a model file (bad magic)")
    if len(data) < total:
        raise TruncationError(f"model file truncated: {len(data)} of {total} bytes")
    if len(data) > total:
        raise ChecksumError(f"model file has {len(data) - total} trailing bytes")
    (crc,) = struct.unpack_from("<I", data, total - 4)
    if zlib.crc32(data[:total - 4]) != crc:
        raise ChecksumError("model file checksum mismatch")
    if version != FORMAT_VERSION:
        raise VersionError(f"model file version {version}, this library reads {FORMAT_VERSION}")
    r = _Reader(data, _PREFIX.size, total - 4)
    (klen,) = r.unpack("<B")
    kind = r.take(klen).decode("ascii")
    if expected_kind is not None and kind != expected_kind:
        raise KindMismatchError(f"expected a {expected_kind!r} model, file holds {kind!r}")
    D, N, p, M, color = r.unpack(_GEOM.format)
    (plen,) = r.unpack("<I")
    params = json.loads(r.take(plen).decode("utf-8"))
    (count,) = r.unpack("<I")
    arrays = {}
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}Q")
        (size,) = r.unpack("<Q")
        if int(np.prod(shape, dtype=np.int64)) != size:
            raise ModelFileError(f"array {name!r}: shape {shape} does not match length {size}")
        arrays[name] = np.frombuffer(r.take(8 * size), dtype="<f8").astype(np.float64).reshape(shape)
    if r.pos != r.end:
        raise ModelFileError("unparsed bytes before the checksum")
    geometry = {"D": D, "N": N, "p": p, "M": M, "color": bool(color)}
    return ModelFile(kind, geometry, params, arrays, version)


def dumps(model):
    """Serialize a fitted model (or a :class:`ModelFile`) to bytes."""
    mf = model if isinstance(model, ModelFile) else to_modelfile(model)
    return _encode(mf)


def loads(data, kind=None, raw=False):
    """Inverse of :func:`dumps`; ``raw=True`` returns the :class:`ModelFile`."""
    mf = _decode(bytes(data), kind)
    return mf if raw else from_modelfile(mf)


def save_model(model, path):
    Path(path).write_bytes(dumps(model))


def load_model(path, kind=None, raw=False):
    """Load a model file.

    Parameters
    ----------
    path : path-like
    kind : str, optional
        Required model kind; a different kind raises :class:`KindMismatchError`.
    raw : bool, default=False
        Return the decoded :class:`ModelFile` instead of an estimator.
    """
    return loads(Path(path).read_bytes(), kind, raw)
