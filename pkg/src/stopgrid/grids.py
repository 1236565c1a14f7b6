"""Tensor grids on the unit hypercube and node classifications defined on them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def symmetric_linspace(n: int) -> np.ndarray:
    """Uniform partition of [0,1] with exact floating-point flip symmetry.

    The upper half is k/(n-1); the lower half is constructed as 1 - mirror,
    which is exact because the mirror value lies in [1/2, 1].  As a result
    x[k] + x[n-1-k] == 1 holds without rounding, and evaluating 1 - x[k]
    reproduces x[n-1-k] bit for bit.  Plain ``np.linspace`` does not have
    this property, and the exact-symmetry checks downstream rely on it.
    """
    x = np.empty(n)
    for k in range(n // 2, n):
        x[k] = k / (n - 1)
    for k in range(n // 2):
        x[k] = 1.0 - x[n - 1 - k]
    return x


@dataclass(frozen=True)
class TensorGrid:
    """Tensor-product grid on [0,1]^n; axes are strictly increasing from 0 to 1."""

    axes: tuple[np.ndarray, ...]
    uniform: bool

    def __post_init__(self):
        for ax in self.axes:
            if len(ax) < 3:
                raise ValueError("each axis needs at least 3 nodes")
            if ax[0] != 0.0 or ax[-1] != 1.0 or np.any(np.diff(ax) <= 0):
                raise ValueError("axis nodes must increase strictly from 0 to 1")

    @property
    def n(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(ax) for ax in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def spacing(self, axis: int) -> float:
        return 1.0 / (len(self.axes[axis]) - 1)

    def points(self) -> np.ndarray:
        """All nodes as an array of shape ``shape + (n,)``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)


def build_grid(n: int, nodes_per_axis: int) -> TensorGrid:
    """Uniform grid with an odd node count so 0, 1/2 and 1 are all nodes."""
    if n < 1:
        raise ValueError("dimension must be >= 1")
    if nodes_per_axis < 3:
        raise ValueError("need at least 3 nodes per axis")
    if nodes_per_axis % 2 == 0:
        raise ValueError("nodes_per_axis must be odd so that 1/2 is a node")
    ax = symmetric_linspace(nodes_per_axis)
    return TensorGrid(axes=tuple(ax for _ in range(n)), uniform=True)


@dataclass(frozen=True)
class StoppingMask:
    """Boolean node classification: True marks nodes in the stopping region."""

    grid: TensorGrid
    stop: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.stop.shape != self.grid.shape:
            raise ValueError("mask shape does not match grid")
        if self.stop.dtype != np.bool_:
            object.__setattr__(self, "stop", self.stop.astype(bool))

    @property
    def continuation(self) -> np.ndarray:
        return ~self.stop


def multilinear(grid: TensorGrid, values: np.ndarray, x) -> np.ndarray:
    """Multilinear interpolation of node values; exact at nodes.

    ``x`` has shape (..., n); values outside [0,1]^n raise.
    """
    pts = np.asarray(x, dtype=float)
    if pts.shape[-1] != grid.n:
        raise ValueError(f"points have dimension {pts.shape[-1]}, grid has {grid.n}")
    if np.any(pts < 0.0) or np.any(pts > 1.0):
        raise ValueError("point outside [0,1]^n")
    flat = pts.reshape(-1, grid.n)
    out = np.zeros(len(flat))
    lo = np.empty((len(flat), grid.n), dtype=np.int64)
    frac = np.empty((len(flat), grid.n))
    for i, ax in enumerate(grid.axes):
        j = np.searchsorted(ax, flat[:, i], side="right") - 1
        j = np.clip(j, 0, len(ax) - 2)
        lo[:, i] = j
        frac[:, i] = (flat[:, i] - ax[j]) / (ax[j + 1] - ax[j])
    for corner in range(1 << grid.n):
        w = np.ones(len(flat))
        idx = []
        for i in range(grid.n):
            if (corner >> i) & 1:
                w = w * frac[:, i]
                idx.append(lo[:, i] + 1)
            else:
                w = w * (1.0 - frac[:, i])
                idx.append(lo[:, i])
        out += w * values[tuple(idx)]
    return out.reshape(pts.shape[:-1])
