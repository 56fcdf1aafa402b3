"""
Update samplers feeding the distance matrix.

``linf`` is the windowed l-infinity representation used by default; the
other samplers exist for overhead comparisons.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

SAMPLERS = ('linf', 'row', 'align', 'maxpool')


@dataclass(frozen=True, eq=False)
class LUR:
    """Windowed l-infinity representation of a flattened update."""
    values: np.ndarray
    window: int

    def __len__(self) -> int:
        return int(self.values.size)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def lur_length(parameters: int, window: int) -> int:
    return parameters // window + (1 if parameters % window else 0)


def default_window(parameters: int) -> int:
    """Power of two nearest to parameters / 256 (at least 1)."""
    target = max(parameters / 256.0, 1.0)
    return 1 << int(round(math.log2(target)))


def linf_sample(update: np.ndarray, window: int) -> LUR:
    """
    Max of absolute values over consecutive windows of the flattened update.

    Args:
        update: Flattened model update
        window: Window size s >= 1; the last window may be shorter

    Returns:
        LUR of length ceil(len(update) / s)
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    flat = np.abs(np.asarray(update, dtype=np.float64).ravel())
    if flat.size == 0:
        raise ValueError("cannot sample an empty update")
    d = lur_length(flat.size, window)
    padded = np.zeros(d * window)
    padded[:flat.size] = flat
    return LUR(padded.reshape(d, window).max(axis=1), window)


def row_sample(update: np.ndarray) -> np.ndarray:
    return np.asarray(update, dtype=np.float64).ravel().copy()


def align_sample(update: np.ndarray, layer_sizes: Optional[Sequence[int]] = None) -> np.ndarray:
    """Replace every entry by sign(entry) times the max magnitude of its layer."""
    flat = np.asarray(update, dtype=np.float64).ravel()
    sizes = list(layer_sizes) if layer_sizes else [flat.size]
    if sum(sizes) != flat.size:
        raise ValueError(f"layer sizes sum to {sum(sizes)}, update has {flat.size} entries")
    out = np.empty_like(flat)
    start = 0
    for size in sizes:
        layer = flat[start:start + size]
        out[start:start + size] = np.sign(layer) * (np.abs(layer).max() if size else 0.0)
        start += size
    return out


def maxpool_sample(update: np.ndarray, kernel: int = 5) -> np.ndarray:
    """
    Non-overlapping max pooling of |update| laid out as a near-square matrix.

    Returns:
        Flattened pooled values, length ceil(r / k) * ceil(c / k)
    """
    flat = np.abs(np.asarray(update, dtype=np.float64).ravel())
    rows = int(math.ceil(math.sqrt(flat.size)))
    cols = int(math.ceil(flat.size / rows))
    out_rows = -(-rows // kernel)
    out_cols = -(-cols // kernel)
    grid = np.zeros((out_rows * kernel, out_cols * kernel))
    matrix = np.zeros(rows * cols)
    matrix[:flat.size] = flat
    grid[:rows, :cols] = matrix.reshape(rows, cols)
    return grid.reshape(out_rows, kernel, out_cols, kernel).max(axis=(1, 3)).ravel()


def sample(
    update: np.ndarray,
    method: str = 'linf',
    window: int = 1,
    layer_sizes: Optional[Sequence[int]] = None
) -> np.ndarray:
    """Dispatch to a sampler by name."""
    if method == 'linf':
        return linf_sample(update, window).values
    if method == 'row':
        return row_sample(update)
    if method == 'align':
        return align_sample(update, layer_sizes)
    if method == 'maxpool':
        return maxpool_sample(update)
    raise ValueError(f"unknown sampler {method!r}; choose from {SAMPLERS}")
