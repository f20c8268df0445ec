"""Frame-level cosine distance, DTW alignment cost, and triplet delta values.

The alignment cost is the classic dynamic program over the pairwise
cosine-distance grid with steps {(1,0), (0,1), (1,1)}, each step adding the
destination cell and the start cell included. The reported value is the mean
cell distance along the optimal (sum-minimizing) path, which removes length
bias between triplets of different durations. Equal-cost paths are resolved
deterministically during backtracking: diagonal first, then the step that
advances the first sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .featio import FeatureMatrix

NORM_EPSILON = 1e-12


@dataclass(frozen=True)
class AlignmentCost:
    value: float
    path_length: int
    degenerate_frames: int = 0  # frames whose norm fell below NORM_EPSILON


@dataclass(frozen=True)
class DeltaValue:
    triplet_id: str
    delta: float


def cosine_distance(u, v) -> float:
    """1 - cos(u, v), in [0, 2]; 1.0 when either norm is below NORM_EPSILON."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu < NORM_EPSILON or nv < NORM_EPSILON:
        return 1.0
    if np.array_equal(u, v):
        return 0.0
    d = 1.0 - float(np.dot(u, v) / (nu * nv))
    return min(max(d, 0.0), 2.0)


def cosine_distance_grid(a: np.ndarray, b: np.ndarray):
    """Pairwise cosine distances between rows of a and rows of b.

    Returns (grid, degenerate_frames). Pairs of bit-identical frames are
    pinned to exactly 0.0 so self-alignment costs vanish.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    a_bad = na < NORM_EPSILON
    b_bad = nb < NORM_EPSILON
    an = a / np.where(a_bad, 1.0, na)[:, None]
    bn = b / np.where(b_bad, 1.0, nb)[:, None]
    grid = 1.0 - an @ bn.T
    np.clip(grid, 0.0, 2.0, out=grid)
    # repair cells that should be exactly zero (identical frames)
    for i, j in np.argwhere(grid < 1e-9):
        if np.array_equal(a[i], b[j]):
            grid[i, j] = 0.0
    if a_bad.any():
        grid[a_bad, :] = 1.0
    if b_bad.any():
        grid[:, b_bad] = 1.0
    return grid, int(a_bad.sum() + b_bad.sum())


@njit(cache=True, nogil=True)
def _accumulate_and_backtrack(grid):
    ta, tb = grid.shape
    acc = np.empty((ta, tb), dtype=np.float64)
    acc[0, 0] = grid[0, 0]
    for j in range(1, tb):
        acc[0, j] = grid[0, j] + acc[0, j - 1]
    for i in range(1, ta):
        acc[i, 0] = grid[i, 0] + acc[i - 1, 0]
        for j in range(1, tb):
            m = acc[i - 1, j - 1]
            if acc[i - 1, j] < m:
                m = acc[i - 1, j]
            if acc[i, j - 1] < m:
                m = acc[i, j - 1]
            acc[i, j] = grid[i, j] + m
    i = ta - 1
    j = tb - 1
    length = 1
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            diag = acc[i - 1, j - 1]
            up = acc[i - 1, j]
            left = acc[i, j - 1]
            if diag <= up and diag <= left:
                i -= 1
                j -= 1
            elif up <= left:
                i -= 1
            else:
                j -= 1
        length += 1
    return acc[ta - 1, tb - 1], length


def dtw_cost(a: FeatureMatrix, b: FeatureMatrix) -> AlignmentCost:
    """Mean cosine distance along the optimal warping path between a and b."""
    if a.dims != b.dims:
        raise ValueError(
            f"dims mismatch: {a.stimulus_id!r} has {a.dims}, {b.stimulus_id!r} has {b.dims}"
        )
    grid, degenerate = cosine_distance_grid(a.data, b.data)
    total, length = _accumulate_and_backtrack(grid)
    return AlignmentCost(value=total / length, path_length=length,
                         degenerate_frames=degenerate)


def delta(target: FeatureMatrix, other: FeatureMatrix, x: FeatureMatrix,
          triplet_id: str = "") -> DeltaValue:
    """DTW(other, x) - DTW(target, x); positive favors the correct answer."""
    d_other = dtw_cost(other, x).value
    d_target = dtw_cost(target, x).value
    return DeltaValue(triplet_id=triplet_id, delta=d_other - d_target)
