"""Monotone finite differences and projected SOR for min(LV + h, g - V) = 0.

The generator of the posterior process is discretized with central second
differences for the degenerate diffusion (1/2) mu_i^2 pi_i^2 (1-pi_i)^2 and
forward (upwind) first differences for the inward drift lam_i (1 - pi_i).
No boundary conditions are imposed: the diffusion coefficient vanishes on
every face and the drift never points outward, so face rows are well posed
one-sided rows and faces decouple into lower-dimensional problems.

The obstacle problem is solved by red-black projected SOR.  Each node update
solves its row for the continuation value and projects onto [0, g]; the stop
or continue policy at a node is re-read from the obstacle contact on every
sweep, and iteration ends when the sup norm of min(LV + h, g - V) drops
below the tolerance.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _backend
from .catalog import OneDSolution, ProblemSpec, build_penalty
from .grids import StoppingMask, TensorGrid, multilinear
from .model import ModelParams, PenaltyPair, check_assumption

DEFAULT_TOL = 1e-9
DEFAULT_MAX_SWEEPS = 100_000
TIE_TOL_FACTOR = 10.0


@dataclass(frozen=True)
class DiscreteGenerator:
    """Finite-difference generator on a uniform tensor grid, stored per axis.

    The row of node x reads
        LV(x) = sum_i a_i(x) (V(x+e_i) + V(x-e_i) - 2 V(x)) + d_i(x) (V(x+e_i) - V(x))
    with a_i, d_i >= 0 (monotone stencil).  Out-of-range neighbors are mapped
    to the node itself; their coefficients vanish there, so the aliasing is
    never exercised.
    """

    params: ModelParams
    grid: TensorGrid
    a: np.ndarray = field(repr=False)       # (n, size) diffusion weights / h^2
    d: np.ndarray = field(repr=False)       # (n, size) drift weights / h
    east: np.ndarray = field(repr=False)    # (n, size) int64 neighbor indices
    west: np.ndarray = field(repr=False)
    diag: np.ndarray = field(repr=False)    # (size,) = sum_i (2 a_i + d_i)

    def apply(self, values: np.ndarray) -> np.ndarray:
        """LV at every node; accepts grid-shaped or flat values."""
        v = np.asarray(values, dtype=float).ravel()
        from ._kernels_numpy import _neighbor_sum
        out = _neighbor_sum(v, self.a, self.d, self.east, self.west) - self.diag * v
        return out.reshape(values.shape) if values.ndim > 1 else out

    def as_sparse(self):
        """The operator as a scipy CSR matrix (diagnostics and tests)."""
        import scipy.sparse as sp
        size = self.grid.size
        n = self.grid.n
        rows, cols, vals = [], [], []
        base = np.arange(size)
        rows.append(base)
        cols.append(base)
        vals.append(-self.diag)
        for i in range(n):
            rows.append(base)
            cols.append(self.east[i])
            vals.append(self.a[i] + self.d[i])
            rows.append(base)
            cols.append(self.west[i])
            vals.append(self.a[i])
        m = sp.coo_matrix((np.concatenate(vals),
                           (np.concatenate(rows), np.concatenate(cols))),
                          shape=(size, size))
        return m.tocsr()


def discretize_generator(p: ModelParams, grid: TensorGrid) -> DiscreteGenerator:
    """Build the monotone finite-difference generator for the posterior process."""
    if not grid.uniform:
        raise ValueError("generator discretization requires a uniform grid")
    if grid.n != p.n:
        raise ValueError(f"grid dimension {grid.n} does not match model n={p.n}")
    n = grid.n
    shape = grid.shape
    size = grid.size
    pts = grid.points().reshape(size, n)
    idxs = np.indices(shape).reshape(n, size)
    strides = [int(np.prod(shape[i + 1:], dtype=np.int64)) for i in range(n)]

    a = np.empty((n, size))
    d = np.empty((n, size))
    east = np.empty((n, size), dtype=np.int64)
    west = np.empty((n, size), dtype=np.int64)
    base = np.arange(size, dtype=np.int64)
    for i in range(n):
        h = grid.spacing(i)
        xi = pts[:, i]
        s = xi * (1.0 - xi)
        a[i] = 0.5 * p.mu[i] * p.mu[i] * s * s / (h * h)
        d[i] = p.lam[i] * (1.0 - xi) / h
        e = base + strides[i]
        w = base - strides[i]
        hi = idxs[i] == shape[i] - 1
        lo = idxs[i] == 0
        e[hi] = base[hi]
        w[lo] = base[lo]
        east[i] = e
        west[i] = w
    diag = (2.0 * a + d).sum(axis=0)
    return DiscreteGenerator(params=p, grid=grid, a=a, d=d,
                             east=east, west=west, diag=diag)


@dataclass(frozen=True)
class ValueField:
    """Cost function sampled on a grid, with its solve diagnostics."""

    grid: TensorGrid
    values: np.ndarray = field(repr=False)
    residual_norm: float
    iterations: int

    def __call__(self, x) -> np.ndarray:
        return multilinear(self.grid, self.values, x)


def evaluate(fld: ValueField, x):
    """Multilinear interpolation of a solved field; exact at nodes."""
    return fld(x)


@dataclass(frozen=True)
class SolveReport:
    tol: float
    obstacle_tie_tol: float
    omega: float
    sweeps: int
    residual_norm: float
    converged: bool
    wall_time: float
    obstacle_active_nodes: int
    backend: str

    def to_dict(self) -> dict:
        return {
            "tol": self.tol,
            "obstacle_tie_tol": self.obstacle_tie_tol,
            "omega": self.omega,
            "sweeps": self.sweeps,
            "residual_norm": self.residual_norm,
            "converged": self.converged,
            "wall_time": self.wall_time,
            "obstacle_active_nodes": self.obstacle_active_nodes,
            "backend": self.backend,
        }


class AssumptionError(ValueError):
    """The penalty pair violates the standing hypotheses."""


def _auto_omega(p: ModelParams, shape) -> float:
    # Pure-diffusion rows admit the classical near-optimal SOR parameter.
    # Upwind drift rows make the system nonsymmetric and shrink the stable
    # window (omega >= 1.7 stalls at desk grids), so stay at 1.5 there.
    if any(l > 0.0 for l in p.lam):
        return 1.5
    m = max(shape) - 1
    return 2.0 / (1.0 + math.sin(math.pi / m))


def solve_obstacle(gen: DiscreteGenerator, pen: PenaltyPair,
                   tol: float = DEFAULT_TOL, max_sweeps: int = DEFAULT_MAX_SWEEPS,
                   *, omega: Optional[float] = None,
                   obstacle_tie_tol: Optional[float] = None,
                   check_every: int = 25, backend: Optional[str] = None,
                   verify_assumption: bool = True):
    """Solve min(LV + h, g - V) = 0 on the generator's grid.

    Returns (ValueField, StoppingMask, SolveReport).  Stopping nodes are
    those with g - V <= obstacle_tie_tol (default 10 * tol, biased toward
    stopping so the continuation region stays open).  Non-convergence within
    ``max_sweeps`` is reported on the SolveReport, with the partial field
    returned.
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    if verify_assumption:
        rep = check_assumption(gen.params, pen)
        if not rep.all_ok:
            raise AssumptionError(f"penalty pair fails standing hypotheses: {rep.worst_violations}")
    grid = gen.grid
    if pen.n != grid.n:
        raise ValueError("penalty dimension does not match grid")
    tie = TIE_TOL_FACTOR * tol if obstacle_tie_tol is None else obstacle_tie_tol
    if omega is None:
        omega = _auto_omega(gen.params, grid.shape)

    pts = grid.points()
    gval = np.ascontiguousarray(np.asarray(pen.g(pts), dtype=float).ravel())
    hval = np.ascontiguousarray(np.asarray(pen.h(pts), dtype=float).ravel())
    if gval.shape != (grid.size,) or hval.shape != (grid.size,):
        raise ValueError("penalty evaluation returned wrong shape")

    idxs = np.indices(grid.shape).reshape(grid.n, grid.size)
    color = idxs.sum(axis=0) % 2
    active = gen.diag > 0.0
    red = np.ascontiguousarray(np.where(active & (color == 0))[0].astype(np.int64))
    black = np.ascontiguousarray(np.where(active & (color == 1))[0].astype(np.int64))
    inv_diag = np.zeros(grid.size)
    inv_diag[active] = 1.0 / gen.diag[active]

    v = gval.copy()
    kern = _backend.get_kernels(backend)
    t0 = time.perf_counter()
    sweeps, res = kern.psor_run(v, gval, hval, gen.diag, inv_diag,
                                gen.a, gen.d, gen.east, gen.west,
                                red, black, float(omega), float(tol),
                                int(max_sweeps), int(check_every))
    wall = time.perf_counter() - t0

    stop = (gval - v) <= tie
    fld = ValueField(grid=grid, values=v.reshape(grid.shape),
                     residual_norm=float(res), iterations=int(sweeps))
    mask = StoppingMask(grid=grid, stop=stop.reshape(grid.shape))
    report = SolveReport(tol=float(tol), obstacle_tie_tol=float(tie),
                         omega=float(omega), sweeps=int(sweeps),
                         residual_norm=float(res), converged=bool(res <= tol),
                         wall_time=wall,
                         obstacle_active_nodes=int(stop.sum()),
                         backend=_backend.backend_name(backend))
    return fld, mask, report


def solve_problem(spec: ProblemSpec, grid: TensorGrid, tol: float = DEFAULT_TOL,
                  max_sweeps: int = DEFAULT_MAX_SWEEPS, **kw):
    """Build the catalog penalty for ``spec`` and solve it on ``grid``.

    For ST3 the embedded 1D testing solution at cost c(1-gamma) is computed
    on the same axis grid first.  Returns (penalty, field, mask, report).
    """
    one_d = None
    if spec.kind == "ST3":
        axis_grid = TensorGrid(axes=(grid.axes[0],), uniform=grid.uniform)
        one_d = solve_1d_st(spec.params.mu[0], spec.params.c * (1.0 - spec.gamma),
                            axis_grid, tol=tol, max_sweeps=max_sweeps, **kw)
    pen = build_penalty(spec, one_d)
    gen = discretize_generator(spec.params, grid)
    fld, mask, report = solve_obstacle(gen, pen, tol, max_sweeps, **kw)
    return pen, fld, mask, report


def _first_continuation_node(gval, v, tie):
    cont = np.where(gval - v > tie)[0]
    return None if len(cont) == 0 else int(cont[0])


def solve_1d_st(mu: float, cost: float, grid: TensorGrid,
                tol: float = DEFAULT_TOL, max_sweeps: int = DEFAULT_MAX_SWEEPS,
                **kw) -> OneDSolution:
    """Value function and threshold A* of the 1D testing problem ST(mu, cost).

    The continuation region (A*, 1-A*) is located to grid resolution: A* sits
    half a cell below the first continuation node.  An empty continuation
    region on the grid is reported with thresholds collapsed to 1/2.
    """
    if grid.n != 1:
        raise ValueError("solve_1d_st needs a 1D grid")
    p = ModelParams(1, (mu,), (0.0,), cost, (0.5,))
    spec = ProblemSpec("ST_1D", p)
    pen = build_penalty(spec)
    gen = discretize_generator(p, grid)
    fld, mask, report = solve_obstacle(gen, pen, tol, max_sweeps, **kw)
    h = grid.spacing(0)
    gval = pen.g(grid.points()).ravel()
    k = _first_continuation_node(gval, fld.values.ravel(), report.obstacle_tie_tol)
    if k is None:
        a_star, empty = 0.5, True
    else:
        a_star, empty = float(grid.axes[0][k] - 0.5 * h), False
    return OneDSolution(kind="ST_1D", mu=float(mu), lam=0.0, cost=float(cost),
                        grid=grid, node_values=fld.values.copy(),
                        threshold_low=a_star, threshold_high=1.0 - a_star,
                        uncertainty=h, continuation_empty=empty)


def solve_1d_qd(mu: float, lam: float, cost: float, grid: TensorGrid,
                tol: float = DEFAULT_TOL, max_sweeps: int = DEFAULT_MAX_SWEEPS,
                **kw) -> OneDSolution:
    """Value function and threshold B* of the 1D detection problem QD(mu, lam, cost).

    The continuation region is [0, B*); B* sits half a cell below the first
    stopping node.
    """
    if grid.n != 1:
        raise ValueError("solve_1d_qd needs a 1D grid")
    if lam <= 0:
        raise ValueError("detection problem requires lam > 0")
    p = ModelParams(1, (mu,), (lam,), cost, (0.5,))
    spec = ProblemSpec("QD_1D", p)
    pen = build_penalty(spec)
    gen = discretize_generator(p, grid)
    fld, mask, report = solve_obstacle(gen, pen, tol, max_sweeps, **kw)
    h = grid.spacing(0)
    stop_nodes = np.where(mask.stop.ravel())[0]
    if len(stop_nodes) == 0 or stop_nodes[0] == 0:
        b_star, empty = 0.5, True
    else:
        b_star, empty = float(grid.axes[0][stop_nodes[0]] - 0.5 * h), False
    return OneDSolution(kind="QD_1D", mu=float(mu), lam=float(lam), cost=float(cost),
                        grid=grid, node_values=fld.values.copy(),
                        threshold_low=b_star, threshold_high=None,
                        uncertainty=h, continuation_empty=empty)
