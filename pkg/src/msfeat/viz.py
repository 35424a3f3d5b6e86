"""Filter montages."""

import math

import numpy as np

from .exceptions import ConfigError
from .imageio import write_image

__all__ = ["atom_tiles", "filter_montage", "viz_filters"]


def _unit_range(a):
    lo, hi = a.min(), a.max()
    if hi - lo <= 0:
        return np.full(a.shape, 0.5)
    return (a - lo) / (hi - lo)


def atom_tiles(W, p, levels=1):
    """Turn each dictionary column into an image tile.

    Parameters
    ----------
    W : ndarray of shape (D, N)
        ``D`` is ``levels * p**2`` (gray, levels stacked vertically) or
        ``3 * p**2`` (RGB, ``levels`` must be 1).
    p : int
    levels : int, default=1

    Returns
    -------
    list of ndarray
        ``(levels * p, p)`` gray or ``(p, p, 3)`` color tiles, each min-max
        scaled to [0, 1]; a constant atom becomes a flat 0.5 tile.
    """
    W = np.asarray(W, dtype=np.float64)
    D = W.shape[0]
    if D == levels * p * p:
        shape = (levels * p, p)
    elif levels == 1 and D == 3 * p * p:
        shape = (p, p, 3)
    else:
        raise ConfigError(f"atoms of length {D} do not fit p={p} with {levels} level(s)")
    return [_unit_range(W[:, i]).reshape(shape) for i in range(W.shape[1])]


def filter_montage(W, p, levels=1, cols=None, gap=1):
    """Tile all atoms into one image (row-major, mid-gray background)."""
    tiles = atom_tiles(W, p, levels)
    n = len(tiles)
    cols = cols or math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    th, tw = tiles[0].shape[:2]
    shape = (rows * (th + gap) + gap, cols * (tw + gap) + gap) + tiles[0].shape[2:]
    out = np.full(shape, 0.5)
    for k, tile in enumerate(tiles):
        r, c = divmod(k, cols)
        y, x = gap + r * (th + gap), gap + c * (tw + gap)
        out[y:y + th, x:x + tw] = tile
    return out


def _model_atoms(model):
    """Dictionary, patch side and stacked levels for a fitted coder."""
    geom = model.geometry()
    p = geom["p"]
    kind = getattr(model, "model_kind", None)
    if kind == "ms4c":
        return model.joint_params_.W, p, model.levels
    if kind == "s4c":
        # filters differ per scale; stack them like pyramid levels
        Ws = [sp.W for sp in model.scale_params_]
        return np.vstack(Ws), p, len(Ws)
    return model.components_, p, 1


def viz_filters(model, path=None, cols=None):
    """Montage of a fitted model's filters; written to ``path`` if given."""
    W, p, levels = _model_atoms(model)
    img = filter_montage(W, p, levels, cols)
    if path is not None:
        write_image(path, img)
    return img
