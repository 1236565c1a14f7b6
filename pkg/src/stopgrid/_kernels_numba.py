"""Numba-compiled kernels: the default backend.

Each public function mirrors its twin in ``_kernels_numpy`` operation for
operation (same RNG counters, same expression order), so the two backends
produce matching results; see that module for the counter-layout contract.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_K1 = np.uint64(0x9E3779B97F4A7C15)
_K2 = np.uint64(0xD1B54A32D192ED03)
_K3 = np.uint64(0x8CB92BA72F3D8DD7)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_U1 = np.uint64(1)
TWO_NEG53 = 2.0 ** -53
TWO_PI = 6.283185307179586


@njit(cache=True)
def _mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def _path_key(seed_u64, p):
    k0 = _mix64(seed_u64 + _K1)
    return _mix64(k0 + (np.uint64(p) + _U1) * _K2)


@njit(cache=True)
def _uniform(pk, ctr):
    raw = _mix64(pk + (np.uint64(ctr) + _U1) * _K3)
    return ((raw >> _S11) + 0.5) * TWO_NEG53


@njit(cache=True)
def _normal(pk, ctr):
    u1 = _uniform(pk, ctr)
    u2 = _uniform(pk, ctr + 1)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(TWO_PI * u2)


def uniform_stream(seed, n_paths, ctr):
    """Python-level helper matching _kernels_numpy.uniforms (for parity tests)."""
    seed_u64 = np.uint64(seed)
    return np.array([_uniform(_path_key(seed_u64, p), ctr) for p in range(n_paths)])


# ---------------------------------------------------------------------------
# Projected SOR
# ---------------------------------------------------------------------------

@njit(cache=True)
def residual_norm(v, g, h, diag, a, d, east, west):
    size = v.shape[0]
    n = a.shape[0]
    worst = 0.0
    for node in range(size):
        s = 0.0
        for i in range(n):
            s += a[i, node] * (v[east[i, node]] + v[west[i, node]]) + d[i, node] * v[east[i, node]]
        r = min(s - diag[node] * v[node] + h[node], g[node] - v[node])
        if abs(r) > worst:
            worst = abs(r)
    return worst


@njit(cache=True)
def _half_sweep(v, g, h, inv_diag, a, d, east, west, idx, omega):
    n = a.shape[0]
    for jj in range(idx.shape[0]):
        node = idx[jj]
        s = 0.0
        for i in range(n):
            s += a[i, node] * (v[east[i, node]] + v[west[i, node]]) + d[i, node] * v[east[i, node]]
        vhat = (h[node] + s) * inv_diag[node]
        vn = v[node] + omega * (vhat - v[node])
        if vn < 0.0:
            vn = 0.0
        if g[node] < vn:
            vn = g[node]
        v[node] = vn


@njit(cache=True)
def psor_run(v, g, h, diag, inv_diag, a, d, east, west, red, black,
             omega, tol, max_sweeps, check_every):
    res = residual_norm(v, g, h, diag, a, d, east, west)
    if res <= tol:
        return 0, res
    sweeps = 0
    while sweeps < max_sweeps:
        _half_sweep(v, g, h, inv_diag, a, d, east, west, red, omega)
        _half_sweep(v, g, h, inv_diag, a, d, east, west, black, omega)
        sweeps += 1
        if sweeps % check_every == 0 or sweeps == max_sweeps:
            res = residual_norm(v, g, h, diag, a, d, east, west)
            if res <= tol:
                break
    return sweeps, res


# ---------------------------------------------------------------------------
# Monte Carlo helpers
# ---------------------------------------------------------------------------

@njit(cache=True)
def _nearest_flat(pi, dims, strides):
    flat = 0
    for i in range(pi.shape[0]):
        ni = np.int64(np.floor(pi[i] * (dims[i] - 1) + 0.5))
        if ni < 0:
            ni = 0
        if ni > dims[i] - 1:
            ni = dims[i] - 1
        flat += ni * strides[i]
    return flat


@njit(cache=True)
def _interp_nodes(pi, dims, strides, nodes, lo, frac):
    n = pi.shape[0]
    for i in range(n):
        pos = pi[i] * (dims[i] - 1)
        j = np.int64(np.floor(pos))
        if j < 0:
            j = 0
        if j > dims[i] - 2:
            j = dims[i] - 2
        lo[i] = j
        frac[i] = pos - j
    out = 0.0
    for corner in range(1 << n):
        w = 1.0
        flat = 0
        for i in range(n):
            if (corner >> i) & 1:
                w = w * frac[i]
                flat += (lo[i] + 1) * strides[i]
            else:
                w = w * (1.0 - frac[i])
                flat += lo[i] * strides[i]
        out += w * nodes[flat]
    return out


@njit(cache=True)
def _filter_axis_step(k, dt, mu_i, lam_i, prior_i, y_i, theta_i, x_i,
                      ipart_i, eneg_prev_i, z):
    t_next = (k + 1) * dt
    if y_i:
        occ = dt
    elif theta_i <= t_next:
        occ = t_next - theta_i
        y_i = True
    else:
        occ = 0.0
    x_i = x_i + mu_i * occ + np.sqrt(dt) * z
    e1 = (lam_i - 0.5 * mu_i * mu_i) * t_next + mu_i * x_i
    if lam_i > 0.0:
        eneg = np.exp(-e1)
        ipart_i = ipart_i + 0.5 * dt * (eneg_prev_i + eneg)
        eneg_prev_i = eneg
    psi = np.exp(e1) * (prior_i + (1.0 - prior_i) * lam_i * ipart_i)
    if np.isfinite(psi):
        pi_i = psi / ((1.0 - prior_i) + psi)
    else:
        pi_i = 1.0
    return y_i, x_i, ipart_i, eneg_prev_i, psi, pi_i


@njit(cache=True)
def _innovation_axis_step(pi_i, dt, mu_i, lam_i, z):
    p = pi_i + lam_i * (1.0 - pi_i) * dt + mu_i * pi_i * (1.0 - pi_i) * np.sqrt(dt) * z
    if p < 0.0:
        p = 0.0
    if p > 1.0:
        p = 1.0
    return p


# ---------------------------------------------------------------------------
# Mask-rule cost paths under the physical measure
# ---------------------------------------------------------------------------

@njit(cache=True)
def mask_rule_paths(seed_u64, n_paths, dt, max_steps, mu, lam, prior,
                    mask_flat, dims, strides, h_nodes, filter_scheme):
    n = mu.shape[0]
    t_stop = np.empty(n_paths)
    pi_stop = np.empty((n_paths, n))
    h_int = np.zeros(n_paths)
    truncated = np.zeros(n_paths, dtype=np.bool_)

    y = np.zeros(n, dtype=np.bool_)
    theta = np.empty(n)
    x = np.empty(n)
    ipart = np.empty(n)
    eneg_prev = np.empty(n)
    pi = np.empty(n)
    lo = np.empty(n, dtype=np.int64)
    frac = np.empty(n)

    for p in range(n_paths):
        pk = _path_key(seed_u64, p)
        for i in range(n):
            u0 = _uniform(pk, 2 * i)
            y[i] = u0 < prior[i]
            theta[i] = np.inf
            if lam[i] > 0.0 and not y[i]:
                uj = _uniform(pk, 2 * i + 1)
                theta[i] = -np.log(uj) / lam[i]
            x[i] = 0.0
            ipart[i] = 0.0
            eneg_prev[i] = 1.0
            pi[i] = prior[i]
        hacc = 0.0
        for k in range(max_steps + 1):
            flat = _nearest_flat(pi, dims, strides)
            stopped = mask_flat[flat]
            if stopped or k == max_steps:
                t_stop[p] = k * dt
                for i in range(n):
                    pi_stop[p, i] = pi[i]
                h_int[p] = hacc
                truncated[p] = (k == max_steps) and not stopped
                break
            hacc = hacc + _interp_nodes(pi, dims, strides, h_nodes, lo, frac) * dt
            for i in range(n):
                z = _normal(pk, 2 * n + 2 * (k * n + i))
                if filter_scheme:
                    y[i], x[i], ipart[i], eneg_prev[i], _, pi[i] = _filter_axis_step(
                        k, dt, mu[i], lam[i], prior[i], y[i], theta[i], x[i],
                        ipart[i], eneg_prev[i], z)
                else:
                    pi[i] = _innovation_axis_step(pi[i], dt, mu[i], lam[i], z)
    return t_stop, pi_stop, h_int, truncated


# ---------------------------------------------------------------------------
# Mask-rule cost paths under the reference (driftless) measure
# ---------------------------------------------------------------------------

@njit(cache=True)
def mask_rule_paths_tilde(seed_u64, n_paths, dt, max_steps, mu, lam, prior,
                          mask_flat, dims, strides, h_nodes, weight_cap):
    n = mu.shape[0]
    lam_tot = 0.0
    prior_prod = 1.0
    for i in range(n):
        lam_tot += lam[i]
        prior_prod *= 1.0 - prior[i]
    inv_prior_prod = 1.0 / prior_prod

    t_stop = np.empty(n_paths)
    pi_stop = np.empty((n_paths, n))
    hw_int = np.zeros(n_paths)
    w_stop = np.empty(n_paths)
    cap_hit = np.zeros(n_paths, dtype=np.bool_)
    truncated = np.zeros(n_paths, dtype=np.bool_)

    x = np.empty(n)
    ipart = np.empty(n)
    eneg_prev = np.empty(n)
    psi = np.empty(n)
    pi = np.empty(n)
    lo = np.empty(n, dtype=np.int64)
    frac = np.empty(n)

    for p in range(n_paths):
        pk = _path_key(seed_u64, p)
        for i in range(n):
            x[i] = 0.0
            ipart[i] = 0.0
            eneg_prev[i] = 1.0
            psi[i] = prior[i]
            pi[i] = prior[i]
        hacc = 0.0
        cap = False
        for k in range(max_steps + 1):
            w = np.exp(-lam_tot * (k * dt))
            for i in range(n):
                w = w * ((1.0 - prior[i]) + psi[i])
            if w * inv_prior_prod > weight_cap:
                cap = True
            flat = _nearest_flat(pi, dims, strides)
            stopped = mask_flat[flat]
            if stopped or k == max_steps:
                t_stop[p] = k * dt
                for i in range(n):
                    pi_stop[p, i] = pi[i]
                hw_int[p] = hacc
                w_stop[p] = w
                cap_hit[p] = cap
                truncated[p] = (k == max_steps) and not stopped
                break
            hacc = hacc + w * _interp_nodes(pi, dims, strides, h_nodes, lo, frac) * dt
            for i in range(n):
                z = _normal(pk, 2 * n + 2 * (k * n + i))
                t_next = (k + 1) * dt
                x[i] = x[i] + np.sqrt(dt) * z
                e1 = (lam[i] - 0.5 * mu[i] * mu[i]) * t_next + mu[i] * x[i]
                if lam[i] > 0.0:
                    eneg = np.exp(-e1)
                    ipart[i] = ipart[i] + 0.5 * dt * (eneg_prev[i] + eneg)
                    eneg_prev[i] = eneg
                psi[i] = np.exp(e1) * (prior[i] + (1.0 - prior[i]) * lam[i] * ipart[i])
                if np.isfinite(psi[i]):
                    pi[i] = psi[i] / ((1.0 - prior[i]) + psi[i])
                else:
                    pi[i] = 1.0
    return t_stop, pi_stop, hw_int, w_stop, cap_hit, truncated


# ---------------------------------------------------------------------------
# Single-pass threshold sweeps for the 1D baselines
# ---------------------------------------------------------------------------

@njit(cache=True)
def sweep_st_thresholds(seed_u64, n_paths, dt, max_steps, mu, cost, prior, thr_desc):
    kk = thr_desc.shape[0]
    cost_sum = np.zeros(kk)
    cost_sumsq = np.zeros(kk)
    trunc = np.zeros(kk, dtype=np.int64)

    for p in range(n_paths):
        pk = _path_key(seed_u64, p)
        u0 = _uniform(pk, 0)
        y = u0 < prior
        theta = np.inf
        x = 0.0
        ipart = 0.0
        eneg_prev = 1.0
        pi = prior
        m = min(pi, 1.0 - pi)
        j = 0
        k = 0
        while True:
            t = k * dt
            while j < kk and m <= thr_desc[j]:
                val = m + cost * t
                cost_sum[j] += val
                cost_sumsq[j] += val * val
                j += 1
            if j == kk:
                break
            if k == max_steps:
                val = min(pi, 1.0 - pi) + cost * t
                for jj in range(j, kk):
                    cost_sum[jj] += val
                    cost_sumsq[jj] += val * val
                    trunc[jj] += 1
                break
            z = _normal(pk, 2 + 2 * k)
            y, x, ipart, eneg_prev, _, pi = _filter_axis_step(
                k, dt, mu, 0.0, prior, y, theta, x, ipart, eneg_prev, z)
            w = min(pi, 1.0 - pi)
            if w < m:
                m = w
            k += 1
    return cost_sum, cost_sumsq, trunc


@njit(cache=True)
def sweep_qd_thresholds(seed_u64, n_paths, dt, max_steps, mu, lam, cost, prior, thr_asc):
    kk = thr_asc.shape[0]
    cost_sum = np.zeros(kk)
    cost_sumsq = np.zeros(kk)
    trunc = np.zeros(kk, dtype=np.int64)

    for p in range(n_paths):
        pk = _path_key(seed_u64, p)
        u0 = _uniform(pk, 0)
        y = u0 < prior
        theta = np.inf
        if lam > 0.0 and not y:
            uj = _uniform(pk, 1)
            theta = -np.log(uj) / lam
        x = 0.0
        ipart = 0.0
        eneg_prev = 1.0
        pi = prior
        mx = pi
        integ = 0.0
        j = 0
        k = 0
        while True:
            while j < kk and mx >= thr_asc[j]:
                val = (1.0 - pi) + integ
                cost_sum[j] += val
                cost_sumsq[j] += val * val
                j += 1
            if j == kk:
                break
            if k == max_steps:
                val = (1.0 - pi) + integ
                for jj in range(j, kk):
                    cost_sum[jj] += val
                    cost_sumsq[jj] += val * val
                    trunc[jj] += 1
                break
            integ = integ + cost * pi * dt
            z = _normal(pk, 2 + 2 * k)
            y, x, ipart, eneg_prev, _, pi = _filter_axis_step(
                k, dt, mu, lam, prior, y, theta, x, ipart, eneg_prev, z)
            if pi > mx:
                mx = pi
            k += 1
    return cost_sum, cost_sumsq, trunc
