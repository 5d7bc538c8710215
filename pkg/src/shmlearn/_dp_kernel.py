"""Compiled inner loops for the collapsed Gibbs sampler.

The per-move work (remove a point, score every cluster's posterior
predictive plus the prior predictive, sample, reinsert) is a few hundred
floating-point operations on d x d matrices, far too small to amortise
NumPy call overhead, so the sweep runs as a numba kernel with a hand-rolled
Cholesky. Uniform draws are passed in, keeping runs bit-reproducible for a
fixed generator seed.

Cluster statistics live in padded arrays ordered by cluster birth; `k` is
the number of active clusters and `ids` carries persistent cluster ids.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

__all__ = ["score_log_weights", "assign_one", "sweep"]


@njit(cache=True)
def _cluster_logpdf(x, n, total, ssq, m0, kappa0, nu0, S0):
    """Log posterior-predictive density of x for one cluster's statistics.

    Returns the multivariate Student-t log density implied by the NIW
    posterior; n = 0 gives the prior predictive.
    """
    d = x.shape[0]
    kappa = kappa0 + n
    nu = nu0 + n
    scale = np.empty((d, d))
    m = np.empty(d)
    if n > 0.0:
        shrink = kappa0 * n / kappa
        for a in range(d):
            m[a] = (kappa0 * m0[a] + total[a]) / kappa
        for a in range(d):
            xbar_a = total[a] / n
            dm_a = xbar_a - m0[a]
            for b in range(d):
                xbar_b = total[b] / n
                dm_b = xbar_b - m0[b]
                scale[a, b] = S0[a, b] + ssq[a, b] - n * xbar_a * xbar_b + shrink * dm_a * dm_b
    else:
        for a in range(d):
            m[a] = m0[a]
            for b in range(d):
                scale[a, b] = S0[a, b]
    dof = nu - d + 1.0
    factor = (kappa + 1.0) / (kappa * dof)
    for a in range(d):
        for b in range(d):
            scale[a, b] *= factor

    # in-place lower Cholesky
    logdet = 0.0
    for a in range(d):
        for b in range(a + 1):
            acc = scale[a, b]
            for c in range(b):
                acc -= scale[a, c] * scale[b, c]
            if a == b:
                diag = math.sqrt(acc)
                scale[a, a] = diag
                logdet += 2.0 * math.log(diag)
            else:
                scale[a, b] = acc / scale[b, b]

    # forward solve L y = (x - m)
    quad = 0.0
    y = np.empty(d)
    for a in range(d):
        acc = x[a] - m[a]
        for c in range(a):
            acc -= scale[a, c] * y[c]
        y[a] = acc / scale[a, a]
        quad += y[a] * y[a]

    return (
        math.lgamma((dof + d) / 2.0)
        - math.lgamma(dof / 2.0)
        - 0.5 * (d * math.log(dof * math.pi) + logdet)
        - 0.5 * (dof + d) * math.log1p(quad / dof)
    )


@njit(cache=True)
def score_log_weights(x, counts, sums, ssqs, k, m0, kappa0, nu0, S0, alpha, out):
    """Unnormalised log weights over k clusters plus the new-table entry."""
    for p in range(k):
        out[p] = math.log(counts[p]) + _cluster_logpdf(
            x, counts[p], sums[p], ssqs[p], m0, kappa0, nu0, S0
        )
    out[k] = math.log(alpha) + _cluster_logpdf(
        x, 0.0, sums[0], ssqs[0], m0, kappa0, nu0, S0
    )


@njit(cache=True)
def _pick(out, k, u):
    """Inverse-CDF draw over out[:k+1] interpreted as log weights."""
    vmax = out[0]
    for p in range(1, k + 1):
        if out[p] > vmax:
            vmax = out[p]
    total = 0.0
    for p in range(k + 1):
        out[p] = math.exp(out[p] - vmax)
        total += out[p]
    acc = 0.0
    target = u * total
    for p in range(k + 1):
        acc += out[p]
        if target < acc:
            return p
    return k


@njit(cache=True)
def assign_one(x, counts, sums, ssqs, ids, k, next_id,
               m0, kappa0, nu0, S0, alpha, u, logw):
    """Seat one observation; returns (cluster id, k, next_id)."""
    d = x.shape[0]
    score_log_weights(x, counts, sums, ssqs, k, m0, kappa0, nu0, S0, alpha, logw)
    p = _pick(logw, k, u)
    if p == k:
        counts[k] = 0.0
        for a in range(d):
            sums[k, a] = 0.0
            for b in range(d):
                ssqs[k, a, b] = 0.0
        ids[k] = next_id
        next_id += 1
        k += 1
    counts[p] += 1.0
    for a in range(d):
        sums[p, a] += x[a]
        for b in range(d):
            ssqs[p, a, b] += x[a] * x[b]
    return ids[p], k, next_id


@njit(cache=True)
def sweep(obs, z, n_obs, counts, sums, ssqs, ids, k, next_id,
          m0, kappa0, nu0, S0, alpha, uniforms):
    """One collapsed Gibbs sweep over all retained observations in order."""
    d = obs.shape[1]
    logw = np.empty(counts.shape[0] + 1)
    for i in range(n_obs):
        x = obs[i]
        cid = z[i]
        pos = -1
        for p in range(k):
            if ids[p] == cid:
                pos = p
                break
        counts[pos] -= 1.0
        if counts[pos] < 0.5:
            for p in range(pos, k - 1):
                counts[p] = counts[p + 1]
                ids[p] = ids[p + 1]
                for a in range(d):
                    sums[p, a] = sums[p + 1, a]
                    for b in range(d):
                        ssqs[p, a, b] = ssqs[p + 1, a, b]
            k -= 1
            ids[k] = -1
            counts[k] = 0.0
        else:
            for a in range(d):
                sums[pos, a] -= x[a]
                for b in range(d):
                    ssqs[pos, a, b] -= x[a] * x[b]
        new_cid, k, next_id = assign_one(
            x, counts, sums, ssqs, ids, k, next_id,
            m0, kappa0, nu0, S0, alpha, uniforms[i], logw,
        )
        z[i] = new_cid
    return k, next_id
