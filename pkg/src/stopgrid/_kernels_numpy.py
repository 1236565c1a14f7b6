"""Pure-numpy kernels: the fallback backend and the reference semantics.

Every function here has a numba twin in ``_kernels_numba`` implementing the
identical arithmetic in the identical order, so the two backends agree to
floating-point noise (and bit-exactly for the integer RNG stream).

RNG: a stateless counter scheme.  Each (seed, path, counter) triple maps
through a splitmix-style avalanche to one uint64, so any draw can be produced
independently of any other; kernels document their counter layout.  The
shared layout for path simulations with n axes is

    counter 2i      initial-state uniform for axis i
    counter 2i+1    jump-time uniform for axis i (reserved even if unused)
    counters 2n + 2(k n + i), +1   the Gaussian for step k, axis i

All uint64 arithmetic is done on arrays: numpy scalar uint64 ops emit
overflow warnings, array ops wrap silently like C.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
_K1 = np.uint64(0x9E3779B97F4A7C15)
_K2 = np.uint64(0xD1B54A32D192ED03)
_K3 = np.uint64(0x8CB92BA72F3D8DD7)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
TWO_NEG53 = 2.0 ** -53
TWO_PI = 6.283185307179586


def mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def path_keys(seed, n_paths: int) -> np.ndarray:
    """One independent key per path; ``seed`` must already lie in [0, 2^64)."""
    k0 = mix64(np.asarray(seed, dtype=np.uint64) + _K1)
    p = np.arange(1, n_paths + 1, dtype=np.uint64)
    return mix64(k0 + p * _K2)


def uniforms(pk: np.ndarray, ctr: int) -> np.ndarray:
    """Uniform draws in (0,1) at one counter for all given path keys."""
    t = np.asarray(ctr + 1, dtype=np.uint64) * _K3
    raw = mix64(pk + t)
    return ((raw >> _S11) + 0.5) * TWO_NEG53


def normals(pk: np.ndarray, ctr: int) -> np.ndarray:
    """Standard Gaussians via Box-Muller; consumes counters ctr and ctr+1."""
    u1 = uniforms(pk, ctr)
    u2 = uniforms(pk, ctr + 1)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(TWO_PI * u2)


# ---------------------------------------------------------------------------
# Projected SOR for the obstacle problem min(LV + h, g - V) = 0
# ---------------------------------------------------------------------------

def _neighbor_sum(v, a, d, east, west, idx=None):
    n = a.shape[0]
    if idx is None:
        s = np.zeros(v.shape[0])
        for i in range(n):
            s += a[i] * (v[east[i]] + v[west[i]]) + d[i] * v[east[i]]
    else:
        s = np.zeros(len(idx))
        for i in range(n):
            ai = a[i, idx]
            di = d[i, idx]
            s += ai * (v[east[i, idx]] + v[west[i, idx]]) + di * v[east[i, idx]]
    return s


def residual_norm(v, g, h, diag, a, d, east, west) -> float:
    """Sup norm of min(LV + h, g - V) over all nodes."""
    s = _neighbor_sum(v, a, d, east, west)
    r = np.minimum(s - diag * v + h, g - v)
    return float(np.max(np.abs(r)))


def psor_run(v, g, h, diag, inv_diag, a, d, east, west, red, black,
             omega, tol, max_sweeps, check_every):
    """Red-black projected SOR sweeps, in place, until the obstacle residual
    drops below ``tol``.  Returns (sweeps_done, final_residual)."""
    res = residual_norm(v, g, h, diag, a, d, east, west)
    if res <= tol:
        return 0, res
    sweeps = 0
    while sweeps < max_sweeps:
        for idx in (red, black):
            s = _neighbor_sum(v, a, d, east, west, idx)
            vhat = (h[idx] + s) * inv_diag[idx]
            vn = v[idx] + omega * (vhat - v[idx])
            v[idx] = np.minimum(g[idx], np.maximum(vn, 0.0))
        sweeps += 1
        if sweeps % check_every == 0 or sweeps == max_sweeps:
            res = residual_norm(v, g, h, diag, a, d, east, west)
            if res <= tol:
                break
    return sweeps, res


# ---------------------------------------------------------------------------
# Shared helpers for the Monte Carlo kernels (vectorized across paths)
# ---------------------------------------------------------------------------

def _nearest_flat(pi, dims, strides):
    """Flat index of the grid node nearest to each point; pi is (paths, n)."""
    flat = np.zeros(pi.shape[0], dtype=np.int64)
    for i in range(pi.shape[1]):
        ni = np.floor(pi[:, i] * (dims[i] - 1) + 0.5).astype(np.int64)
        np.clip(ni, 0, dims[i] - 1, out=ni)
        flat += ni * strides[i]
    return flat


def _interp_nodes(pi, dims, strides, nodes):
    """Multilinear interpolation of flat node values at points (paths, n)."""
    npaths, n = pi.shape
    lo = np.empty((npaths, n), dtype=np.int64)
    frac = np.empty((npaths, n))
    for i in range(n):
        pos = pi[:, i] * (dims[i] - 1)
        j = np.floor(pos).astype(np.int64)
        np.clip(j, 0, dims[i] - 2, out=j)
        lo[:, i] = j
        frac[:, i] = pos - j
    out = np.zeros(npaths)
    for corner in range(1 << n):
        w = np.ones(npaths)
        flat = np.zeros(npaths, dtype=np.int64)
        for i in range(n):
            if (corner >> i) & 1:
                w = w * frac[:, i]
                flat += (lo[:, i] + 1) * strides[i]
            else:
                w = w * (1.0 - frac[:, i])
                flat += lo[:, i] * strides[i]
        out += w * nodes[flat]
    return out


def _init_jumps(pk, n, lam, prior):
    """Initial chain states and absolute jump times for every path and axis."""
    npaths = len(pk)
    y = np.zeros((npaths, n), dtype=np.bool_)
    theta = np.full((npaths, n), np.inf)
    for i in range(n):
        u0 = uniforms(pk, 2 * i)
        y[:, i] = u0 < prior[i]
        if lam[i] > 0.0:
            uj = uniforms(pk, 2 * i + 1)
            theta[:, i] = np.where(y[:, i], np.inf, -np.log(uj) / lam[i])
    return y, theta


def _filter_step(k, dt, mu_i, lam_i, prior_i, y, theta, x, ipart, eneg_prev, z):
    """Advance one axis of the exact-increment filter by one step.

    Returns updated (y, x, ipart, eneg_prev, psi, pi).  ``ipart`` is the
    trapezoid approximation of the integral in the explicit likelihood
    solution; psi is the likelihood scaled by (1 - prior), which keeps the
    prior = 1 case finite and makes the time-zero weight exact.
    """
    t_next = (k + 1) * dt
    occ = np.where(y, dt, 0.0)
    jumped = (~y) & (theta <= t_next)
    occ = np.where(jumped, t_next - theta, occ)
    y = y | jumped
    x = x + mu_i * occ + np.sqrt(dt) * z
    e1 = (lam_i - 0.5 * mu_i * mu_i) * t_next + mu_i * x
    if lam_i > 0.0:
        eneg = np.exp(-e1)
        ipart = ipart + 0.5 * dt * (eneg_prev + eneg)
        eneg_prev = eneg
    psi = np.exp(e1) * (prior_i + (1.0 - prior_i) * lam_i * ipart)
    pi = np.where(np.isfinite(psi), psi / ((1.0 - prior_i) + psi), 1.0)
    return y, x, ipart, eneg_prev, psi, pi


def _innovation_step(pi, dt, mu_i, lam_i, z):
    p = pi + lam_i * (1.0 - pi) * dt + mu_i * pi * (1.0 - pi) * np.sqrt(dt) * z
    return np.clip(p, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Mask-rule cost paths under the physical measure
# ---------------------------------------------------------------------------

def mask_rule_paths(seed, n_paths, dt, max_steps, mu, lam, prior,
                    mask_flat, dims, strides, h_nodes, filter_scheme):
    """Run each path until its posterior enters a stopping cell (nearest-node
    lookup) or the horizon; returns per-path stop data.

    Returns (t_stop, pi_stop, h_int, truncated): the stop time, the posterior
    at the stop, the left-endpoint integral of h along the path, and the
    horizon-truncation flags.  The terminal penalty is evaluated by the
    caller so it stays exact.
    """
    n = len(mu)
    pk_all = path_keys(seed, n_paths)
    t_stop = np.empty(n_paths)
    pi_stop = np.empty((n_paths, n))
    h_int = np.zeros(n_paths)
    truncated = np.zeros(n_paths, dtype=np.bool_)

    alive = np.arange(n_paths)
    pk = pk_all
    pi = np.tile(np.asarray(prior, dtype=float), (n_paths, 1))
    hacc = np.zeros(n_paths)
    if filter_scheme:
        y, theta = _init_jumps(pk, n, lam, prior)
        x = np.zeros((n_paths, n))
        ipart = np.zeros((n_paths, n))
        eneg_prev = np.ones((n_paths, n))

    for k in range(max_steps + 1):
        flat = _nearest_flat(pi, dims, strides)
        stop_now = mask_flat[flat]
        if k == max_steps:
            stop_now = np.ones(len(alive), dtype=np.bool_)
        if stop_now.any():
            hit = alive[stop_now]
            t_stop[hit] = k * dt
            pi_stop[hit] = pi[stop_now]
            h_int[hit] = hacc[stop_now]
            truncated[hit] = (k == max_steps) & ~mask_flat[flat[stop_now]]
            keep = ~stop_now
            alive = alive[keep]
            if len(alive) == 0:
                break
            pk = pk[keep]
            pi = pi[keep]
            hacc = hacc[keep]
            if filter_scheme:
                y = y[keep]
                theta = theta[keep]
                x = x[keep]
                ipart = ipart[keep]
                eneg_prev = eneg_prev[keep]
        hacc = hacc + _interp_nodes(pi, dims, strides, h_nodes) * dt
        for i in range(n):
            z = normals(pk, 2 * n + 2 * (k * n + i))
            if filter_scheme:
                (y[:, i], x[:, i], ipart[:, i], eneg_prev[:, i], _,
                 pi[:, i]) = _filter_step(k, dt, mu[i], lam[i], prior[i],
                                          y[:, i], theta[:, i], x[:, i],
                                          ipart[:, i], eneg_prev[:, i], z)
            else:
                pi[:, i] = _innovation_step(pi[:, i], dt, mu[i], lam[i], z)
    return t_stop, pi_stop, h_int, truncated


# ---------------------------------------------------------------------------
# Mask-rule cost paths under the reference (driftless) measure
# ---------------------------------------------------------------------------

def mask_rule_paths_tilde(seed, n_paths, dt, max_steps, mu, lam, prior,
                          mask_flat, dims, strides, h_nodes, weight_cap):
    """Same stopping rule, simulated under the measure where the observations
    are driftless Brownian motions, with the likelihood-ratio weight carried
    along.  The weight is e^{-sum(lam) t} * prod((1-prior_i) + psi_i), which
    already includes the prod(1-prior_i) prefactor of the weighted value
    representation; at t = 0 it equals 1 exactly.

    Returns (t_stop, pi_stop, hw_int, w_stop, cap_hit, truncated) where
    hw_int is the weighted running-cost integral, w_stop the weight at the
    stop, and cap_hit flags paths whose bare likelihood product ever
    exceeded ``weight_cap``.
    """
    n = len(mu)
    lam_tot = float(np.sum(lam))
    inv_prior_prod = 1.0 / float(np.prod(1.0 - np.asarray(prior)))
    pk_all = path_keys(seed, n_paths)
    t_stop = np.empty(n_paths)
    pi_stop = np.empty((n_paths, n))
    hw_int = np.zeros(n_paths)
    w_stop = np.empty(n_paths)
    cap_hit = np.zeros(n_paths, dtype=np.bool_)
    truncated = np.zeros(n_paths, dtype=np.bool_)

    alive = np.arange(n_paths)
    pk = pk_all
    pi = np.tile(np.asarray(prior, dtype=float), (n_paths, 1))
    psi = np.tile(np.asarray(prior, dtype=float), (n_paths, 1))
    hacc = np.zeros(n_paths)
    caps = np.zeros(n_paths, dtype=np.bool_)
    x = np.zeros((n_paths, n))
    ipart = np.zeros((n_paths, n))
    eneg_prev = np.ones((n_paths, n))

    for k in range(max_steps + 1):
        w = np.exp(-lam_tot * (k * dt))
        for i in range(n):
            w = w * ((1.0 - prior[i]) + psi[:, i])
        caps = caps | (w * inv_prior_prod > weight_cap)
        flat = _nearest_flat(pi, dims, strides)
        stop_now = mask_flat[flat]
        if k == max_steps:
            stop_now = np.ones(len(alive), dtype=np.bool_)
        if stop_now.any():
            hit = alive[stop_now]
            t_stop[hit] = k * dt
            pi_stop[hit] = pi[stop_now]
            hw_int[hit] = hacc[stop_now]
            w_stop[hit] = w[stop_now]
            cap_hit[hit] = caps[stop_now]
            truncated[hit] = (k == max_steps) & ~mask_flat[flat[stop_now]]
            keep = ~stop_now
            alive = alive[keep]
            if len(alive) == 0:
                break
            pk, pi, psi, hacc, caps, w = (pk[keep], pi[keep], psi[keep],
                                          hacc[keep], caps[keep], w[keep])
            x, ipart, eneg_prev = x[keep], ipart[keep], eneg_prev[keep]
        hacc = hacc + w * _interp_nodes(pi, dims, strides, h_nodes) * dt
        for i in range(n):
            z = normals(pk, 2 * n + 2 * (k * n + i))
            t_next = (k + 1) * dt
            x[:, i] = x[:, i] + np.sqrt(dt) * z
            e1 = (lam[i] - 0.5 * mu[i] * mu[i]) * t_next + mu[i] * x[:, i]
            if lam[i] > 0.0:
                eneg = np.exp(-e1)
                ipart[:, i] = ipart[:, i] + 0.5 * dt * (eneg_prev[:, i] + eneg)
                eneg_prev[:, i] = eneg
            psi[:, i] = np.exp(e1) * (prior[i] + (1.0 - prior[i]) * lam[i] * ipart[:, i])
            pi[:, i] = np.where(np.isfinite(psi[:, i]),
                                psi[:, i] / ((1.0 - prior[i]) + psi[:, i]), 1.0)
    return t_stop, pi_stop, hw_int, w_stop, cap_hit, truncated


# ---------------------------------------------------------------------------
# Single-pass threshold sweeps for the 1D baselines
# ---------------------------------------------------------------------------

def sweep_st_thresholds(seed, n_paths, dt, max_steps, mu, cost, prior, thr_desc):
    """Costs of every symmetric testing rule tau_a = inf{t: min(Pi,1-Pi) <= a}
    from one set of paths.  ``thr_desc`` must be strictly decreasing.

    Each path is walked once; as the running minimum of min(Pi, 1-Pi) crosses
    successive thresholds the rule's terminal value and elapsed time are
    recorded.  Returns (cost_sum, cost_sumsq, truncated) per threshold.
    """
    kk = len(thr_desc)
    cost_sum = np.zeros(kk)
    cost_sumsq = np.zeros(kk)
    trunc = np.zeros(kk, dtype=np.int64)

    pk = path_keys(seed, n_paths)
    y, theta = _init_jumps(pk, 1, (0.0,), (prior,))
    y = y[:, 0]
    theta = theta[:, 0]
    x = np.zeros(n_paths)
    ipart = np.zeros(n_paths)
    eneg_prev = np.ones(n_paths)
    pi = np.full(n_paths, prior)
    m = np.minimum(pi, 1.0 - pi)
    jptr = np.zeros(n_paths, dtype=np.int64)

    k = 0
    alive = np.arange(n_paths)
    while len(alive):
        t = k * dt
        crossed = (jptr < kk) & (m <= thr_desc[np.minimum(jptr, kk - 1)])
        while crossed.any():
            c = np.where(crossed)[0]
            val = m[c] + cost * t
            np.add.at(cost_sum, jptr[c], val)
            np.add.at(cost_sumsq, jptr[c], val * val)
            jptr[c] += 1
            crossed = (jptr < kk) & (m <= thr_desc[np.minimum(jptr, kk - 1)])
        done = jptr >= kk
        if k == max_steps:
            open_idx = np.where(~done)[0]
            w = np.minimum(pi[open_idx], 1.0 - pi[open_idx])
            for p in open_idx:
                val = min(pi[p], 1.0 - pi[p]) + cost * t
                js = np.arange(jptr[p], kk)
                cost_sum[js] += val
                cost_sumsq[js] += val * val
                trunc[js] += 1
            break
        if done.any():
            keep = ~done
            alive = alive[keep]
            if len(alive) == 0:
                break
            pk, y, theta, x = pk[keep], y[keep], theta[keep], x[keep]
            ipart, eneg_prev = ipart[keep], eneg_prev[keep]
            pi, m, jptr = pi[keep], m[keep], jptr[keep]
        z = normals(pk, 2 + 2 * k)
        y, x, ipart, eneg_prev, _, pi = _filter_step(
            k, dt, mu, 0.0, prior, y, theta, x, ipart, eneg_prev, z)
        m = np.minimum(m, np.minimum(pi, 1.0 - pi))
        k += 1
    return cost_sum, cost_sumsq, trunc


def sweep_qd_thresholds(seed, n_paths, dt, max_steps, mu, lam, cost, prior, thr_asc):
    """Costs of every one-sided detection rule tau_b = inf{t: Pi >= b} from
    one set of paths; ``thr_asc`` must be strictly increasing.

    The running maximum of Pi is tracked and the rule cost
    (1 - Pi_tau) + c * int_0^tau Pi dt recorded as each threshold is first
    exceeded.  Returns (cost_sum, cost_sumsq, truncated) per threshold.
    """
    kk = len(thr_asc)
    cost_sum = np.zeros(kk)
    cost_sumsq = np.zeros(kk)
    trunc = np.zeros(kk, dtype=np.int64)

    pk = path_keys(seed, n_paths)
    y, theta = _init_jumps(pk, 1, (lam,), (prior,))
    y = y[:, 0]
    theta = theta[:, 0]
    x = np.zeros(n_paths)
    ipart = np.zeros(n_paths)
    eneg_prev = np.ones(n_paths)
    pi = np.full(n_paths, prior)
    mx = pi.copy()
    integ = np.zeros(n_paths)
    jptr = np.zeros(n_paths, dtype=np.int64)

    k = 0
    alive = np.arange(n_paths)
    while len(alive):
        crossed = (jptr < kk) & (mx >= thr_asc[np.minimum(jptr, kk - 1)])
        while crossed.any():
            c = np.where(crossed)[0]
            val = (1.0 - pi[c]) + integ[c]
            np.add.at(cost_sum, jptr[c], val)
            np.add.at(cost_sumsq, jptr[c], val * val)
            jptr[c] += 1
            crossed = (jptr < kk) & (mx >= thr_asc[np.minimum(jptr, kk - 1)])
        done = jptr >= kk
        if k == max_steps:
            open_idx = np.where(~done)[0]
            for p in open_idx:
                val = (1.0 - pi[p]) + integ[p]
                js = np.arange(jptr[p], kk)
                cost_sum[js] += val
                cost_sumsq[js] += val * val
                trunc[js] += 1
            break
        if done.any():
            keep = ~done
            alive = alive[keep]
            if len(alive) == 0:
                break
            pk, y, theta, x = pk[keep], y[keep], theta[keep], x[keep]
            ipart, eneg_prev = ipart[keep], eneg_prev[keep]
            pi, mx, integ, jptr = pi[keep], mx[keep], integ[keep], jptr[keep]
        integ = integ + cost * pi * dt
        z = normals(pk, 2 + 2 * k)
        y, x, ipart, eneg_prev, _, pi = _filter_step(
            k, dt, mu, lam, prior, y, theta, x, ipart, eneg_prev, z)
        mx = np.maximum(mx, pi)
        k += 1
    return cost_sum, cost_sumsq, trunc
