"""The six multi-dimensional problem formulations and the two 1D baselines.

Each catalog entry fixes a penalty pair (g, h):

  ST1   determine every drift;           g = sum_i min(pi_i, 1-pi_i),      h = c
  ST2   determine one drift;             g = min_i min(pi_i, 1-pi_i),      h = c
  ST3   two drifts, shared-cost rebate;  g = min over i of
          (min(pi_i,1-pi_i) + u(pi_other)) with u the 1D testing value at
          observation cost c(1-gamma),                                     h = c
  QD1   detect the first change-point;   g = prod_i (1-pi_i),  h = c(1 - prod_i(1-pi_i))
  QD2   detect the last change-point;    g = 1 - prod_i pi_i,  h = c prod_i pi_i
  QD3   name one changed coordinate;     g = min_i (1-pi_i),   h = c sum_i pi_i
  ST_1D g = min(pi, 1-pi), h = c;   QD_1D g = 1-pi, h = c pi

ST kinds require lam = 0 on every axis; QD kinds require lam > 0 on every axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .grids import TensorGrid
from .model import ModelParams, PenaltyPair, validate_params

ST_KINDS = ("ST1", "ST2", "ST3", "ST_1D")
QD_KINDS = ("QD1", "QD2", "QD3", "QD_1D")
KINDS = ST_KINDS + QD_KINDS


@dataclass(frozen=True)
class ProblemSpec:
    """A catalog problem: kind, model parameters, and (for ST3) the cost rebate."""

    kind: str
    params: ModelParams
    gamma: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}; choose from {KINDS}")
        bad = validate_params(self.params)
        if bad:
            raise ValueError("invalid model parameters: " + "; ".join(bad))
        p = self.params
        if self.kind in ST_KINDS and any(l != 0.0 for l in p.lam):
            raise ValueError(f"{self.kind} requires lam[i] = 0 for all i")
        if self.kind in QD_KINDS and any(l <= 0.0 for l in p.lam):
            raise ValueError(f"{self.kind} requires lam[i] > 0 for all i")
        if self.kind.endswith("_1D") and p.n != 1:
            raise ValueError(f"{self.kind} requires n = 1")
        if self.kind in ("ST1", "ST2", "QD1", "QD2", "QD3") and p.n < 2:
            raise ValueError(f"{self.kind} requires n >= 2")
        if self.kind == "ST3":
            if p.n != 2:
                raise ValueError("ST3 requires n = 2")
            if p.mu[0] != p.mu[1]:
                raise ValueError("ST3 requires mu[0] == mu[1]")
            if self.gamma is None or not (0.0 < self.gamma < 1.0):
                raise ValueError("ST3 requires gamma strictly inside (0,1)")


@dataclass(frozen=True)
class OneDSolution:
    """Value function of a 1D baseline problem on a grid, with its thresholds.

    For the testing problem the continuation region is (threshold_low,
    threshold_high) = (A*, 1-A*); for the detection problem it is
    [0, threshold_low) with threshold_low = B* and threshold_high unused.
    Thresholds are located to grid resolution (half-cell offset, +- one cell).
    """

    kind: str
    mu: float
    lam: float
    cost: float
    grid: TensorGrid
    node_values: np.ndarray = field(repr=False)
    threshold_low: float
    threshold_high: Optional[float]
    uncertainty: float
    continuation_empty: bool = False

    def __call__(self, x) -> np.ndarray:
        """Piecewise-linear evaluation between nodes (keeps concavity)."""
        return np.interp(np.asarray(x, dtype=float), self.grid.axes[0], self.node_values)


def _wedge(x: np.ndarray) -> np.ndarray:
    return np.minimum(x, 1.0 - x)


def build_penalty(spec: ProblemSpec, one_d: Optional[OneDSolution] = None) -> PenaltyPair:
    """Construct the penalty pair for a catalog problem.

    For ST3, ``one_d`` must be the 1D testing solution at observation cost
    c(1-gamma) with the same signal strength; it enters g as data and is
    evaluated by piecewise-linear interpolation.
    """
    p = spec.params
    c = p.c
    n = p.n
    kind = spec.kind

    if kind == "ST1":
        g = lambda x: _wedge(np.asarray(x)[..., 0:n]).sum(axis=-1)
        h = _const(c)
        return PenaltyPair(n, g, h, (1.0,) * n, (0.0,) * n, True)
    if kind == "ST2":
        g = lambda x: _wedge(np.asarray(x)).min(axis=-1)
        h = _const(c)
        return PenaltyPair(n, g, h, (1.0,) * n, (0.0,) * n, True)
    if kind == "ST3":
        if one_d is None:
            raise ValueError("ST3 needs the 1D testing solution at cost c(1-gamma)")
        want = c * (1.0 - spec.gamma)
        if one_d.kind != "ST_1D" or one_d.mu != p.mu[0] or not np.isclose(one_d.cost, want):
            raise ValueError(
                f"ST3 expects the ST({p.mu[0]}, {want}) solution, "
                f"got {one_d.kind}({one_d.mu}, {one_d.cost})")
        u = one_d

        def g(x):
            x = np.asarray(x)
            a = _wedge(x[..., 0]) + u(x[..., 1])
            b = u(x[..., 0]) + _wedge(x[..., 1])
            return np.minimum(a, b)

        h = _const(c)
        return PenaltyPair(n, g, h, (1.0,) * n, (0.0,) * n, True)
    if kind == "QD1":
        g = lambda x: np.prod(1.0 - np.asarray(x), axis=-1)
        h = lambda x: c * (1.0 - np.prod(1.0 - np.asarray(x), axis=-1))
        return PenaltyPair(n, g, h, (1.0,) * n, (c,) * n, False)
    if kind == "QD2":
        g = lambda x: 1.0 - np.prod(np.asarray(x), axis=-1)
        h = lambda x: c * np.prod(np.asarray(x), axis=-1)
        return PenaltyPair(n, g, h, (1.0,) * n, (c,) * n, False)
    if kind == "QD3":
        g = lambda x: (1.0 - np.asarray(x)).min(axis=-1)
        h = lambda x: c * np.asarray(x).sum(axis=-1)
        return PenaltyPair(n, g, h, (1.0,) * n, (c,) * n, False)
    if kind == "ST_1D":
        g = lambda x: _wedge(np.asarray(x)[..., 0])
        h = _const(c)
        return PenaltyPair(1, g, h, (1.0,), (0.0,), True)
    if kind == "QD_1D":
        g = lambda x: 1.0 - np.asarray(x)[..., 0]
        h = lambda x: c * np.asarray(x)[..., 0]
        return PenaltyPair(1, g, h, (1.0,), (c,), False)
    raise AssertionError(kind)


def _const(value: float):
    def f(x):
        x = np.asarray(x)
        return np.full(x.shape[:-1], value)
    return f


@dataclass(frozen=True)
class Symmetry:
    """An affine coordinate map leaving (g, h) invariant: a flip or a swap."""

    kind: str                 # "flip" | "swap"
    axes: tuple[int, ...]     # flip: (i,); swap: (i, j)

    def apply_to_points(self, x: np.ndarray) -> np.ndarray:
        out = np.array(x, dtype=float, copy=True)
        if self.kind == "flip":
            i = self.axes[0]
            out[..., i] = 1.0 - out[..., i]
        else:
            i, j = self.axes
            out[..., [i, j]] = out[..., [j, i]]
        return out

    def apply_to_node_array(self, a: np.ndarray) -> np.ndarray:
        """The same map realized on node-indexed arrays of a symmetric grid."""
        if self.kind == "flip":
            return np.flip(a, axis=self.axes[0])
        return np.swapaxes(a, self.axes[0], self.axes[1])


def penalty_symmetries(spec: ProblemSpec) -> list[Symmetry]:
    """Coordinate maps S with g(S(x)) = g(x) and h(S(x)) = h(x).

    ST penalties depend on each coordinate only through min(pi, 1-pi) (for
    ST3, also through the symmetric 1D value), so every per-axis flip is a
    symmetry; flips are also dynamics symmetries because lam = 0.  Swaps
    require identical (mu, lam) on the swapped axes.
    """
    p = spec.params
    out: list[Symmetry] = []
    if spec.kind in ST_KINDS:
        for i in range(p.n):
            out.append(Symmetry("flip", (i,)))
    for i in range(p.n):
        for j in range(i + 1, p.n):
            if p.mu[i] == p.mu[j] and p.lam[i] == p.lam[j]:
                out.append(Symmetry("swap", (i, j)))
    return out
