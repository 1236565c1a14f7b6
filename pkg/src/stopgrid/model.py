"""Observation model, penalty pairs, and validation of their standing hypotheses.

The model: n independent coordinates, each with a hidden 0/1 chain that is
absorbed at 1 after an exponential(lambda_i) time, driving an observed
diffusion with drift mu_i while the chain is at 1.  Penalty pairs (g, h)
price the terminal decision and the running observation cost on [0,1]^n.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grids import symmetric_linspace

Violation = str


@dataclass(frozen=True)
class ModelParams:
    """Observation model: dimension, signal strengths, jump rates, time cost, prior."""

    n: int
    mu: tuple[float, ...]
    lam: tuple[float, ...]
    c: float
    prior: tuple[float, ...]

    def __init__(self, n, mu, lam, c, prior):
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "mu", tuple(float(m) for m in mu))
        object.__setattr__(self, "lam", tuple(float(l) for l in lam))
        object.__setattr__(self, "c", float(c))
        object.__setattr__(self, "prior", tuple(float(p) for p in prior))


def validate_params(p: ModelParams) -> list[Violation]:
    """Report every violated invariant; empty list means the model is admissible."""
    out: list[Violation] = []
    if p.n < 1:
        out.append("n must be >= 1")
    for name, seq in (("mu", p.mu), ("lam", p.lam), ("prior", p.prior)):
        if len(seq) != p.n:
            out.append(f"{name} must have length n={p.n}")
    for i, m in enumerate(p.mu):
        if not m > 0:
            out.append(f"mu[{i}] must be > 0")
    for i, l in enumerate(p.lam):
        if l < 0:
            out.append(f"lam[{i}] must be >= 0")
    for i, q in enumerate(p.prior):
        if not (0.0 <= q <= 1.0):
            out.append(f"prior[{i}] outside [0,1]")
    if not p.c > 0:
        out.append("c must be > 0")
    return out


def check_point(x, n: int) -> np.ndarray:
    """Validate a point of [0,1]^n and return it as a float array."""
    pt = np.asarray(x, dtype=float)
    if pt.shape != (n,):
        raise ValueError(f"point has shape {pt.shape}, expected ({n},)")
    if np.any(pt < 0.0) or np.any(pt > 1.0):
        raise ValueError("point outside [0,1]^n")
    return pt


@dataclass(frozen=True)
class PenaltyPair:
    """Evaluable terminal penalty g and running penalty h with declared regularity.

    ``g`` and ``h`` map arrays of shape (..., n) to shape (...).  The declared
    per-axis Lipschitz bounds are metadata, never inferred; ``h_is_constant``
    must be set whenever some lam[i] = 0 in the paired model.
    """

    n: int
    g: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    h: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    g_lip_per_axis: tuple[float, ...]
    h_lip_per_axis: tuple[float, ...]
    h_is_constant: bool

    def g_at(self, x) -> float:
        return float(self.g(check_point(x, self.n)[None, :])[0])

    def h_at(self, x) -> float:
        return float(self.h(check_point(x, self.n)[None, :])[0])


@dataclass(frozen=True)
class AssumptionReport:
    """Outcome of checking the standing penalty hypotheses on a sample grid."""

    lipschitz_ok: bool
    unilateral_concavity_ok: bool
    h_constant_rule_ok: bool
    nonnegative_ok: bool
    worst_violations: dict

    @property
    def all_ok(self) -> bool:
        return (self.lipschitz_ok and self.unilateral_concavity_ok
                and self.h_constant_rule_ok and self.nonnegative_ok)


def _axis_checks(vals: np.ndarray, coords: np.ndarray, axis: int):
    """Worst centered second difference and worst |slope| along one axis."""
    v = np.moveaxis(vals, axis, -1)
    second = v[..., :-2] + v[..., 2:] - 2.0 * v[..., 1:-1]
    dx = np.diff(coords)
    slopes = np.abs(np.diff(v, axis=-1)) / dx
    return second, slopes


def check_assumption(p: ModelParams, pen: PenaltyPair,
                     samples_per_axis: int = 101, tol: float = 1e-12) -> AssumptionReport:
    """Check nonnegativity, per-axis concavity, declared Lipschitz bounds, and
    the h-constant rule on a dense symmetric sample of [0,1]^n."""
    if samples_per_axis < 3:
        raise ValueError("samples_per_axis must be >= 3")
    if tol <= 0:
        raise ValueError("tol must be > 0")
    if p.n != pen.n:
        raise ValueError(f"dimension mismatch: params n={p.n}, penalty n={pen.n}")

    ax = symmetric_linspace(samples_per_axis)
    mesh = np.meshgrid(*(ax for _ in range(p.n)), indexing="ij")
    pts = np.stack(mesh, axis=-1)
    gv = np.asarray(pen.g(pts), dtype=float)
    hv = np.asarray(pen.h(pts), dtype=float)

    worst: dict = {}
    neg = min(float(gv.min()), float(hv.min()))
    nonneg_ok = neg >= -tol
    worst["negativity"] = max(0.0, -neg)

    conc_worst, conc_loc = -np.inf, None
    lip_worst, lip_loc = -np.inf, None
    for i in range(p.n):
        for name, vals, bounds in (("g", gv, pen.g_lip_per_axis),
                                   ("h", hv, pen.h_lip_per_axis)):
            second, slopes = _axis_checks(vals, ax, i)
            s = float(second.max())
            if s > conc_worst:
                conc_worst, conc_loc = s, (name, i)
            excess = float(slopes.max()) - bounds[i]
            if excess > lip_worst:
                lip_worst, lip_loc = excess, (name, i)
    worst["concavity"] = {"violation": max(0.0, conc_worst), "where": conc_loc}
    worst["lipschitz"] = {"violation": max(0.0, lip_worst), "where": lip_loc}

    h_rule_ok = True
    if any(l == 0.0 for l in p.lam):
        h_rule_ok = pen.h_is_constant and float(np.ptp(hv)) <= tol
    worst["h_constant"] = 0.0 if h_rule_ok else float(np.ptp(hv))

    return AssumptionReport(
        lipschitz_ok=lip_worst <= tol,
        unilateral_concavity_ok=conc_worst <= tol,
        h_constant_rule_ok=h_rule_ok,
        nonnegative_ok=nonneg_ok,
        worst_violations=worst,
    )
