"""Seeded Monte Carlo: hidden chains, observations, posteriors, and cost oracles.

All randomness derives from a 64-bit seed through a stateless counter scheme
(see ``_kernels_numpy``), so identical configurations reproduce bit-identical
output and paths are independent given their indices.

Two posterior schemes are available.  ``direct-filter`` simulates the hidden
chains and observations exactly (Gaussian increments conditioned on the
chain, with the drift integrated exactly across an in-interval jump) and
filters through the explicit likelihood-ratio solution, discretizing only
its time integral by the trapezoid rule.  ``innovation-euler`` discretizes
the posterior's own SDE driven by an independent Brownian motion; both give
the same law for the posterior.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _backend
from . import _kernels_numpy as knp
from .grids import StoppingMask
from .model import ModelParams, PenaltyPair, validate_params

SCHEMES = ("direct-filter", "innovation-euler")


def normalize_seed(seed: int) -> int:
    return int(seed) % (1 << 64)


@dataclass(frozen=True)
class SimConfig:
    """Step size, horizon, path count, seed, and posterior scheme."""

    dt: float
    horizon: float
    n_paths: int
    seed: int
    scheme: str = "direct-filter"
    store_stride: int = 1

    def __post_init__(self):
        if self.dt <= 0 or self.horizon <= 0 or self.dt > self.horizon:
            raise ValueError("need 0 < dt <= horizon")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.store_stride < 1:
            raise ValueError("store_stride must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


@dataclass(frozen=True)
class PathBundle:
    """Stored trajectories at (possibly subsampled) times.

    ``pi`` always holds the posterior; ``y``, ``x``, ``phi`` are present for
    the direct filter and None for the innovation scheme.  At every stored
    instant pi equals phi/(1+phi), with phi = +inf mapped to pi = 1 (the
    prior = 1 case).
    """

    params: ModelParams
    config: SimConfig
    times: np.ndarray = field(repr=False)
    pi: np.ndarray = field(repr=False)                 # (paths, times, n)
    y: Optional[np.ndarray] = field(default=None, repr=False)
    x: Optional[np.ndarray] = field(default=None, repr=False)
    phi: Optional[np.ndarray] = field(default=None, repr=False)

    def to_csv(self, path, max_paths: int = 100):
        """Write up to ``max_paths`` trajectories in long form."""
        import csv
        n = self.params.n
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            cols = ["path", "t"]
            for i in range(n):
                cols += [f"pi{i + 1}"]
                if self.phi is not None:
                    cols += [f"phi{i + 1}", f"x{i + 1}", f"y{i + 1}"]
            w.writerow(cols)
            for p in range(min(max_paths, self.pi.shape[0])):
                for k, t in enumerate(self.times):
                    row = [p, repr(float(t))]
                    for i in range(n):
                        row.append(repr(float(self.pi[p, k, i])))
                        if self.phi is not None:
                            row += [repr(float(self.phi[p, k, i])),
                                    repr(float(self.x[p, k, i])),
                                    int(self.y[p, k, i])]
                    w.writerow(row)


@dataclass(frozen=True)
class MCEstimate:
    """A Monte Carlo mean with its standard error and reliability flags."""

    mean: float
    std_error: float
    n_paths: int
    truncation_fraction: float
    unreliable: bool = False
    weight_cap_fraction: float = 0.0

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std_error": self.std_error,
            "n_paths": self.n_paths,
            "truncation_fraction": self.truncation_fraction,
            "unreliable": self.unreliable,
            "weight_cap_fraction": self.weight_cap_fraction,
        }


def _check_inputs(p: ModelParams, cfg: SimConfig):
    bad = validate_params(p)
    if bad:
        raise ValueError("invalid model parameters: " + "; ".join(bad))


def _stored_steps(cfg: SimConfig) -> np.ndarray:
    ks = np.arange(0, cfg.n_steps + 1, cfg.store_stride)
    if ks[-1] != cfg.n_steps:
        ks = np.append(ks, cfg.n_steps)
    return ks


def simulate_joint(p: ModelParams, cfg: SimConfig) -> PathBundle:
    """Simulate (Y, X, Phi, Pi) jointly under the physical measure.

    Per axis: the chain starts at 1 with the prior probability, otherwise
    jumps at an exponential time; observation increments are exact Gaussians
    given the chain; the likelihood ratio follows its explicit solution with
    the time integral discretized by the trapezoid rule on the dt mesh.
    """
    _check_inputs(p, cfg)
    n = p.n
    seed = normalize_seed(cfg.seed)
    pk = knp.path_keys(seed, cfg.n_paths)
    store = _stored_steps(cfg)
    n_store = len(store)
    shape = (cfg.n_paths, n_store, n)
    ybuf = np.empty(shape, dtype=np.int8)
    xbuf = np.empty(shape)
    phibuf = np.empty(shape)

    y, theta = knp._init_jumps(pk, n, p.lam, p.prior)
    x = np.zeros((cfg.n_paths, n))
    ipart = np.zeros((cfg.n_paths, n))
    eneg_prev = np.ones((cfg.n_paths, n))
    psi = np.tile(np.asarray(p.prior), (cfg.n_paths, 1))

    store_pos = {int(k): j for j, k in enumerate(store)}

    def record(k):
        j = store_pos[k]
        ybuf[:, j, :] = y
        xbuf[:, j, :] = x
        with np.errstate(divide="ignore"):
            for i in range(n):
                phibuf[:, j, i] = psi[:, i] / (1.0 - p.prior[i]) if p.prior[i] < 1.0 else np.inf

    record(0)
    for k in range(cfg.n_steps):
        for i in range(n):
            z = knp.normals(pk, 2 * n + 2 * (k * n + i))
            (y[:, i], x[:, i], ipart[:, i], eneg_prev[:, i], psi[:, i],
             _) = knp._filter_step(k, cfg.dt, p.mu[i], p.lam[i], p.prior[i],
                                   y[:, i], theta[:, i], x[:, i],
                                   ipart[:, i], eneg_prev[:, i], z)
        if (k + 1) in store_pos:
            record(k + 1)

    with np.errstate(invalid="ignore"):
        pibuf = np.where(np.isfinite(phibuf), phibuf / (1.0 + phibuf), 1.0)
    times = store * cfg.dt
    return PathBundle(params=p, config=cfg, times=times, pi=pibuf,
                      y=ybuf, x=xbuf, phi=phibuf)


def simulate_pi_innovation(p: ModelParams, cfg: SimConfig) -> PathBundle:
    """Simulate the posterior directly by Euler steps of its own SDE."""
    _check_inputs(p, cfg)
    n = p.n
    seed = normalize_seed(cfg.seed)
    pk = knp.path_keys(seed, cfg.n_paths)
    store = _stored_steps(cfg)
    pibuf = np.empty((cfg.n_paths, len(store), n))
    store_pos = {int(k): j for j, k in enumerate(store)}

    pi = np.tile(np.asarray(p.prior), (cfg.n_paths, 1))
    pibuf[:, 0, :] = pi
    for k in range(cfg.n_steps):
        for i in range(n):
            z = knp.normals(pk, 2 * n + 2 * (k * n + i))
            pi[:, i] = knp._innovation_step(pi[:, i], cfg.dt, p.mu[i], p.lam[i], z)
        if (k + 1) in store_pos:
            pibuf[:, store_pos[k + 1], :] = pi
    return PathBundle(params=p, config=cfg, times=store * cfg.dt, pi=pibuf)


def _mask_arrays(mask: StoppingMask):
    grid = mask.grid
    if not grid.uniform:
        raise ValueError("stopping-rule evaluation needs a uniform grid")
    dims = np.asarray(grid.shape, dtype=np.int64)
    strides = np.asarray([int(np.prod(grid.shape[i + 1:], dtype=np.int64))
                          for i in range(grid.n)], dtype=np.int64)
    return np.ascontiguousarray(mask.stop.ravel()), dims, strides


def _estimate(costs: np.ndarray, truncated: np.ndarray, **extra) -> MCEstimate:
    n = len(costs)
    mean = float(np.mean(costs))
    se = float(np.std(costs, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    frac = float(np.mean(truncated))
    return MCEstimate(mean=mean, std_error=se, n_paths=n,
                      truncation_fraction=frac,
                      unreliable=frac > 0.05, **extra)


def evaluate_stopping_rule(p: ModelParams, pen: PenaltyPair, mask: StoppingMask,
                           cfg: SimConfig, backend: Optional[str] = None) -> MCEstimate:
    """Estimate the cost of the rule "stop on first entry into a stopping cell".

    Cell membership uses nearest-node lookup, the running cost uses the
    left-endpoint rule (with h interpolated multilinearly between nodes,
    which is exact for every catalog running penalty), and the terminal
    penalty is evaluated exactly at the stopped posterior.  Paths reaching
    the horizon are stopped there and counted as truncated; a truncation
    fraction above 5% flags the estimate unreliable.
    """
    _check_inputs(p, cfg)
    if mask.grid.n != p.n or pen.n != p.n:
        raise ValueError("mask/penalty dimension does not match the model")
    mask_flat, dims, strides = _mask_arrays(mask)
    h_nodes = np.ascontiguousarray(np.asarray(pen.h(mask.grid.points()), dtype=float).ravel())
    kern = _backend.get_kernels(backend)
    seed = np.uint64(normalize_seed(cfg.seed))
    t_stop, pi_stop, h_int, truncated = kern.mask_rule_paths(
        seed, cfg.n_paths, cfg.dt, cfg.n_steps,
        np.asarray(p.mu), np.asarray(p.lam), np.asarray(p.prior),
        mask_flat, dims, strides, h_nodes,
        cfg.scheme == "direct-filter")
    costs = np.asarray(pen.g(pi_stop), dtype=float) + h_int
    return _estimate(costs, truncated)


def measure_change_value(p: ModelParams, pen: PenaltyPair, mask: StoppingMask,
                         cfg: SimConfig, weight_cap: float = 1e6,
                         backend: Optional[str] = None) -> MCEstimate:
    """Estimate the same rule cost under the driftless reference measure.

    Observations are simulated as standard Brownian motions; the likelihood
    weight exp(-sum(lam) t) prod(1+Phi_i), together with the prod(1-prior_i)
    prefactor, is carried along the path and applied to both the terminal
    and the running cost.  Paths whose bare likelihood product exceeds
    ``weight_cap`` are counted in ``weight_cap_fraction`` (heavy-tail
    warning).  Requires prior_i < 1 on every axis.
    """
    _check_inputs(p, cfg)
    if any(q >= 1.0 for q in p.prior):
        raise ValueError("measure change requires prior < 1 on every axis")
    if mask.grid.n != p.n or pen.n != p.n:
        raise ValueError("mask/penalty dimension does not match the model")
    mask_flat, dims, strides = _mask_arrays(mask)
    h_nodes = np.ascontiguousarray(np.asarray(pen.h(mask.grid.points()), dtype=float).ravel())
    kern = _backend.get_kernels(backend)
    seed = np.uint64(normalize_seed(cfg.seed))
    t_stop, pi_stop, hw_int, w_stop, cap_hit, truncated = kern.mask_rule_paths_tilde(
        seed, cfg.n_paths, cfg.dt, cfg.n_steps,
        np.asarray(p.mu), np.asarray(p.lam), np.asarray(p.prior),
        mask_flat, dims, strides, h_nodes, float(weight_cap))
    costs = w_stop * np.asarray(pen.g(pi_stop), dtype=float) + hw_int
    return _estimate(costs, truncated, weight_cap_fraction=float(np.mean(cap_hit)))


@dataclass(frozen=True)
class CouplingReport:
    """Mean decay of a coupled pair of posteriors started at two points."""

    times: np.ndarray
    mean_diff: np.ndarray
    se_diff: np.ndarray
    ordering_violations: int
    n_paths: int


def coupling_decay(p: ModelParams, axis: int, pi_lo: float, pi_hi: float,
                   t_grid, cfg: SimConfig) -> CouplingReport:
    """Drive two posteriors on one axis with common innovation noise.

    Both solve the posterior SDE with the same Gaussian draws (the
    comparison coupling), so the higher start stays above the lower one
    pathwise; the report counts any violations and returns the mean
    difference at the requested times, which decays like
    (pi_hi - pi_lo) e^{-lam t}.
    """
    _check_inputs(p, cfg)
    if not (0.0 <= pi_lo < pi_hi <= 1.0):
        raise ValueError("need 0 <= pi_lo < pi_hi <= 1")
    mu_i, lam_i = p.mu[axis], p.lam[axis]
    seed = normalize_seed(cfg.seed)
    pk = knp.path_keys(seed, cfg.n_paths)
    snap = sorted({int(round(t / cfg.dt)) for t in t_grid})
    if snap[-1] > cfg.n_steps:
        raise ValueError("t_grid exceeds the horizon")
    lo = np.full(cfg.n_paths, float(pi_lo))
    hi = np.full(cfg.n_paths, float(pi_hi))
    violations = np.zeros(cfg.n_paths, dtype=bool)
    times, means, ses = [], [], []

    def snapshot(k):
        d = hi - lo
        times.append(k * cfg.dt)
        means.append(float(np.mean(d)))
        ses.append(float(np.std(d, ddof=1) / np.sqrt(cfg.n_paths)))

    if 0 in snap:
        snapshot(0)
    for k in range(max(snap)):
        z = knp.normals(pk, 2 + 2 * k)
        lo = knp._innovation_step(lo, cfg.dt, mu_i, lam_i, z)
        hi = knp._innovation_step(hi, cfg.dt, mu_i, lam_i, z)
        violations |= hi < lo
        if (k + 1) in snap:
            snapshot(k + 1)
    return CouplingReport(times=np.asarray(times), mean_diff=np.asarray(means),
                          se_diff=np.asarray(ses),
                          ordering_violations=int(violations.sum()),
                          n_paths=cfg.n_paths)


def filter_refinement_ratios(p: ModelParams, cfg: SimConfig) -> np.ndarray:
    """Per-path ratio of filter discrepancies at dt versus dt/2.

    For one shared Brownian path per sample (fine increments summed in
    pairs for the coarse mesh), the likelihood ratio is computed two ways
    on each mesh: the explicit solution with a trapezoid time integral, and
    Euler integration of its SDE.  The returned ratio
    max|difference at dt| / max|difference at dt/2| measures how fast the
    two integrators agree as the mesh refines.  Single-coordinate models
    with prior < 1 only.
    """
    _check_inputs(p, cfg)
    if p.n != 1:
        raise ValueError("refinement check is defined for n = 1")
    prior = p.prior[0]
    if prior >= 1.0:
        raise ValueError("requires prior < 1")
    mu, lam = p.mu[0], p.lam[0]
    phi0 = prior / (1.0 - prior)
    seed = normalize_seed(cfg.seed)
    pk = knp.path_keys(seed, cfg.n_paths)
    n_coarse = cfg.n_steps
    dt_f = 0.5 * cfg.dt
    n_fine = 2 * n_coarse

    y, theta = knp._init_jumps(pk, 1, p.lam, p.prior)
    y = y[:, 0].copy()
    theta = theta[:, 0]

    # exact occupation times and Gaussian increments on the fine mesh
    dx = np.empty((cfg.n_paths, n_fine))
    for k in range(n_fine):
        z = knp.normals(pk, 2 + 2 * k)
        t_next = (k + 1) * dt_f
        occ = np.where(y, dt_f, 0.0)
        jumped = (~y) & (theta <= t_next)
        occ = np.where(jumped, t_next - theta, occ)
        y = y | jumped
        dx[:, k] = mu * occ + np.sqrt(dt_f) * z

    def discrepancy(dxs, dt):
        nsteps = dxs.shape[1]
        x = np.concatenate([np.zeros((cfg.n_paths, 1)), np.cumsum(dxs, axis=1)], axis=1)
        tt = dt * np.arange(nsteps + 1)
        e1 = (lam - 0.5 * mu * mu) * tt[None, :] + mu * x
        eneg = np.exp(-e1)
        integ = np.concatenate(
            [np.zeros((cfg.n_paths, 1)),
             np.cumsum(0.5 * dt * (eneg[:, :-1] + eneg[:, 1:]), axis=1)], axis=1)
        phi_exact = np.exp(e1) * (phi0 + lam * integ)
        phi_euler = np.empty_like(phi_exact)
        phi_euler[:, 0] = phi0
        for k in range(nsteps):
            f = phi_euler[:, k]
            phi_euler[:, k + 1] = f + lam * (1.0 + f) * dt + mu * f * dxs[:, k]
        return np.max(np.abs(phi_exact - phi_euler), axis=1)

    d_fine = discrepancy(dx, dt_f)
    d_coarse = discrepancy(dx[:, 0::2] + dx[:, 1::2], cfg.dt)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(d_fine > 0, d_coarse / d_fine, np.inf)
    return ratio


@dataclass(frozen=True)
class SweepResult:
    """Cost of every candidate threshold rule, estimated from one path set."""

    thresholds: np.ndarray
    mean_cost: np.ndarray
    std_error: np.ndarray
    truncation_fraction: np.ndarray
    n_paths: int

    @property
    def best_threshold(self) -> float:
        return float(self.thresholds[int(np.argmin(self.mean_cost))])


def threshold_sweep_st(mu: float, cost: float, cfg: SimConfig,
                       thresholds=None, prior: float = 0.5,
                       backend: Optional[str] = None) -> SweepResult:
    """Monte Carlo cost of every symmetric testing rule (a, 1-a).

    All candidate thresholds share the same simulated paths (common random
    numbers), which makes the cost-minimizing threshold a low-noise estimate
    of the optimal A*.
    """
    if thresholds is None:
        thresholds = np.arange(0.005, 0.5, 0.005)
    thr = np.sort(np.asarray(thresholds, dtype=float))
    kern = _backend.get_kernels(backend)
    seed = np.uint64(normalize_seed(cfg.seed))
    cs, cs2, tr = kern.sweep_st_thresholds(seed, cfg.n_paths, cfg.dt, cfg.n_steps,
                                           float(mu), float(cost), float(prior),
                                           thr[::-1].copy())
    return _sweep_result(thr, cs[::-1], cs2[::-1], tr[::-1], cfg.n_paths)


def threshold_sweep_qd(mu: float, lam: float, cost: float, cfg: SimConfig,
                       thresholds=None, prior: float = 0.2,
                       backend: Optional[str] = None) -> SweepResult:
    """Monte Carlo cost of every one-sided detection rule tau = inf{t: Pi >= b}."""
    if thresholds is None:
        thresholds = np.arange(0.005, 1.0, 0.005)
    thr = np.sort(np.asarray(thresholds, dtype=float))
    kern = _backend.get_kernels(backend)
    seed = np.uint64(normalize_seed(cfg.seed))
    cs, cs2, tr = kern.sweep_qd_thresholds(seed, cfg.n_paths, cfg.dt, cfg.n_steps,
                                           float(mu), float(lam), float(cost),
                                           float(prior), thr.copy())
    return _sweep_result(thr, cs, cs2, tr, cfg.n_paths)


def _sweep_result(thr, cost_sum, cost_sumsq, trunc, n) -> SweepResult:
    mean = cost_sum / n
    var = np.maximum(cost_sumsq / n - mean * mean, 0.0)
    se = np.sqrt(var / n)
    return SweepResult(thresholds=thr, mean_cost=mean, std_error=se,
                       truncation_fraction=trunc / n, n_paths=n)
