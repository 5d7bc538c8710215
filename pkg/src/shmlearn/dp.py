"""Dirichlet-process Gaussian mixture with collapsed Gibbs sampling.

Cluster parameters are integrated out analytically (NIW conjugacy), so the
sampler works directly on assignments: an observation joins an existing
cluster with probability proportional to the cluster's size times its
posterior-predictive density, or opens a new cluster with probability
proportional to the dispersion times the prior predictive. Streaming use
retains the full history; each new observation is assigned by one draw and
followed by a configurable number of Gibbs sweeps over everything retained
(the hot loop is a compiled kernel, see `_dp_kernel`).

A cluster born after initialisation that grows to the alarm threshold raises
a novelty alarm, once per cluster. Initialisation should run enough sweeps
for the normal-condition clusters to consolidate; their ids are exempt.
Runs are bit-reproducible for a fixed seed; the state is single-owner
mutable and snapshots are copies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from . import _dp_kernel
from .conjugate import NiwParams
from .gmm import GmmHyper

__all__ = [
    "DpConfig",
    "AlarmEvent",
    "DpState",
    "k_profile",
    "crp_expected_tables",
    "simulate_crp_tables",
]

_INIT_SWEEPS = 25


@dataclass(frozen=True)
class DpConfig:
    """Dispersion, NIW prior (via GmmHyper; the class-weight part is unused),
    sweeps per streamed observation, and the novelty alarm threshold."""

    alpha: float
    hyper: GmmHyper
    sweeps_per_batch: int = 5
    alarm_threshold: int = 50

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.sweeps_per_batch < 1:
            raise ValueError("sweeps_per_batch must be at least 1")
        if self.alarm_threshold < 1:
            raise ValueError("alarm_threshold must be at least 1")


@dataclass(frozen=True)
class AlarmEvent:
    cluster_id: int
    stream_index: int
    size: int


class DpState:
    """Assignments, per-cluster sufficient statistics, and alarm bookkeeping.

    Clusters are held in birth order in padded arrays; each carries a
    persistent id that survives deletions of other clusters.
    """

    def __init__(self, config: DpConfig, d: int, seed: int = 0):
        self.config = config
        self.d = d
        self.rng = np.random.default_rng(seed)
        prior = config.hyper.niw_prior()
        if prior.d != d:
            raise ValueError(f"prior dimension {prior.d} does not match {d}")
        self._prior = prior
        cap = 64
        self._counts = np.zeros(cap)
        self._sums = np.zeros((cap, d))
        self._ssqs = np.zeros((cap, d, d))
        self._ids = np.full(cap, -1, dtype=np.int64)
        self._k = 0
        self._next_id = 0
        self.obs = np.empty((0, d))
        self.z = np.empty(0, dtype=np.int64)
        self._n = 0
        self.init_ids: set[int] = set()
        self.alarmed: set[int] = set()
        self.stream_count = 0

    # -- bookkeeping ------------------------------------------------------

    @property
    def n_clusters(self) -> int:
        return self._k

    @property
    def n_retained(self) -> int:
        return self._n

    @property
    def cluster_ids(self) -> list[int]:
        return self._ids[: self._k].tolist()

    @property
    def assignments(self) -> np.ndarray:
        return self.z[: self._n].copy()

    def cluster_size(self, cid: int) -> int:
        return int(round(self._counts[self._pos(cid)]))

    def members(self, cid: int) -> np.ndarray:
        return self.obs[: self._n][self.z[: self._n] == cid]

    def cluster_posterior(self, cid: int) -> NiwParams:
        """NIW posterior of one cluster, recomputable from its members."""
        p = self._pos(cid)
        prior = self._prior
        n = self._counts[p]
        total = self._sums[p]
        kappa = prior.kappa + n
        nu = prior.nu + n
        m = (prior.kappa * prior.m + total) / kappa
        xbar = total / n
        dm = (xbar - prior.m)[:, None]
        S = (
            prior.S
            + self._ssqs[p]
            - n * np.outer(xbar, xbar)
            + (prior.kappa * n / kappa) * (dm @ dm.T)
        )
        return NiwParams(m=m, kappa=kappa, nu=nu, S=S)

    def snapshot(self) -> dict:
        """Copy of the public state, safe to share across threads."""
        return {
            "assignments": self.assignments,
            "observations": self.obs[: self._n].copy(),
            "cluster_ids": tuple(self.cluster_ids),
            "counts": tuple(int(round(c)) for c in self._counts[: self._k]),
            "init_ids": frozenset(self.init_ids),
            "alarmed": frozenset(self.alarmed),
            "stream_count": self.stream_count,
        }

    def _pos(self, cid: int) -> int:
        hits = np.nonzero(self._ids[: self._k] == cid)[0]
        if hits.size == 0:
            raise KeyError(f"unknown cluster id {cid}")
        return int(hits[0])

    def _ensure_capacity(self) -> None:
        need = self._n + 2
        if self._counts.shape[0] >= need:
            return
        cap = max(need, 2 * self._counts.shape[0])
        for name in ("_counts", "_sums", "_ssqs"):
            arr = getattr(self, name)
            grown = np.zeros((cap,) + arr.shape[1:])
            grown[: self._k] = arr[: self._k]
            setattr(self, name, grown)
        ids = np.full(cap, -1, dtype=np.int64)
        ids[: self._k] = self._ids[: self._k]
        self._ids = ids

    def _grow_obs(self, x: np.ndarray) -> None:
        if self._n == self.obs.shape[0]:
            cap = max(64, 2 * self.obs.shape[0])
            grown = np.empty((cap, self.d))
            grown[: self._n] = self.obs[: self._n]
            self.obs = grown
            z_grown = np.full(cap, -1, dtype=np.int64)
            z_grown[: self._n] = self.z[: self._n]
            self.z = z_grown
        self.obs[self._n] = x
        self._n += 1
        self._ensure_capacity()

    # -- reference scoring path (used by assignment_probs and tests) -------

    def _stat_views(self, minus_x: np.ndarray | None = None, minus_cid: int | None = None):
        k = self._k
        n = self._counts[:k]
        sums = self._sums[:k]
        ssqs = self._ssqs[:k]
        ids = self._ids[:k].tolist()
        if minus_cid is not None:
            p = self._pos(minus_cid)
            n = n.copy()
            n[p] -= 1.0
            if n[p] < 0.5:
                keep = np.arange(k) != p
                n, sums, ssqs = n[keep], sums[keep], ssqs[keep]
                ids = [c for i, c in enumerate(ids) if i != p]
            else:
                sums = sums.copy()
                ssqs = ssqs.copy()
                sums[p] -= minus_x
                ssqs[p] -= np.outer(minus_x, minus_x)
        return n, sums, ssqs, ids

    def _log_weights(self, x: np.ndarray, n, sums, ssqs) -> np.ndarray:
        prior = self._prior
        d = self.d
        k = n.shape[0]
        out = np.empty(k + 1)
        if k:
            kappa = prior.kappa + n
            nu = prior.nu + n
            m = (prior.kappa * prior.m + sums) / kappa[:, None]
            xbar = sums / n[:, None]
            dm = xbar - prior.m
            S = (
                prior.S
                + ssqs
                - n[:, None, None] * (xbar[:, :, None] * xbar[:, None, :])
                + (prior.kappa * n / kappa)[:, None, None] * (dm[:, :, None] * dm[:, None, :])
            )
            dof = nu - d + 1.0
            scale = S * ((kappa + 1.0) / (kappa * dof))[:, None, None]
            L = np.linalg.cholesky(scale)
            diff = x - m
            sol = np.linalg.solve(L, diff[:, :, None])[:, :, 0]
            quad = (sol**2).sum(axis=1)
            logdet = 2.0 * np.log(np.diagonal(L, axis1=1, axis2=2)).sum(axis=1)
            out[:k] = np.log(n) + (
                gammaln((dof + d) / 2.0)
                - gammaln(dof / 2.0)
                - 0.5 * (d * np.log(dof * np.pi) + logdet)
                - 0.5 * (dof + d) * np.log1p(quad / dof)
            )
        dof0 = prior.nu - d + 1.0
        scale0 = prior.S * (prior.kappa + 1.0) / (prior.kappa * dof0)
        L0 = np.linalg.cholesky(scale0)
        y = np.linalg.solve(L0, x - prior.m)
        out[k] = np.log(self.config.alpha) + float(
            gammaln((dof0 + d) / 2.0)
            - gammaln(dof0 / 2.0)
            - 0.5 * (d * np.log(dof0 * np.pi) + 2.0 * np.log(np.diag(L0)).sum())
            - 0.5 * (dof0 + d) * np.log1p(float(y @ y) / dof0)
        )
        return out

    def assignment_probs(
        self, x: np.ndarray, exclude: int | None = None
    ) -> tuple[np.ndarray, list[int]]:
        """Normalised assignment distribution over existing clusters plus a
        new one (last entry, id -1), in cluster birth order.

        With `exclude` set, that retained observation's statistics are
        removed for the computation (the collapsed conditional used inside
        Gibbs sweeps); the state itself is not modified.
        """
        x = np.asarray(x, dtype=float)
        if exclude is not None:
            n, sums, ssqs, ids = self._stat_views(self.obs[exclude], int(self.z[exclude]))
        else:
            n, sums, ssqs, ids = self._stat_views()
        logw = self._log_weights(x, n, sums, ssqs)
        logw -= logw.max()
        w = np.exp(logw)
        return w / w.sum(), ids + [-1]

    # -- sampler ----------------------------------------------------------

    def _kernel_args(self):
        prior = self._prior
        return (
            prior.m,
            prior.kappa,
            prior.nu,
            prior.S,
            float(self.config.alpha),
        )

    def _seat(self, x: np.ndarray) -> None:
        logw = np.empty(self._counts.shape[0] + 1)
        cid, self._k, self._next_id = _dp_kernel.assign_one(
            x,
            self._counts,
            self._sums,
            self._ssqs,
            self._ids,
            self._k,
            self._next_id,
            *self._kernel_args(),
            self.rng.random(),
            logw,
        )
        self.z[self._n - 1] = cid

    def gibbs_sweep(self) -> None:
        """One collapsed sweep: every retained observation is removed,
        reassigned by its conditional, and reinserted. Emptied clusters die."""
        if self._n == 0:
            return
        uniforms = self.rng.random(self._n)
        self._k, self._next_id = _dp_kernel.sweep(
            self.obs,
            self.z,
            self._n,
            self._counts,
            self._sums,
            self._ssqs,
            self._ids,
            self._k,
            self._next_id,
            *self._kernel_args(),
            uniforms,
        )

    def seat_singletons(self, X0: np.ndarray) -> None:
        """Place each observation at its own table (no draws consumed).

        Useful as a sampler start: single-site Gibbs merges redundant tables
        quickly but splits overgrown ones slowly, so starting from
        singletons mixes far better on batch data.
        """
        X0 = np.atleast_2d(np.asarray(X0, dtype=float))
        for x in X0:
            self._grow_obs(x)
            cid = self._new_cluster()
            p = self._pos(cid)
            self._counts[p] += 1.0
            self._sums[p] += x
            self._ssqs[p] += np.outer(x, x)
            self.z[self._n - 1] = cid

    def seat_labelled(self, X0: np.ndarray, groups: np.ndarray) -> None:
        """Seat observations into tables given by a grouping vector.

        Groups are arbitrary hashable values; each distinct value becomes one
        cluster (in first-appearance order). No random draws are consumed.
        """
        X0 = np.atleast_2d(np.asarray(X0, dtype=float))
        groups = np.asarray(groups)
        if groups.shape[0] != X0.shape[0]:
            raise ValueError("group vector does not match observation count")
        group_to_cid: dict = {}
        for x, g in zip(X0, groups):
            self._grow_obs(x)
            key = g.item() if hasattr(g, "item") else g
            if key not in group_to_cid:
                group_to_cid[key] = self._new_cluster()
            cid = group_to_cid[key]
            p = self._pos(cid)
            self._counts[p] += 1.0
            self._sums[p] += x
            self._ssqs[p] += np.outer(x, x)
            self.z[self._n - 1] = cid

    def _new_cluster(self) -> int:
        p = self._k
        self._counts[p] = 0.0
        self._sums[p] = 0.0
        self._ssqs[p] = 0.0
        self._ids[p] = self._next_id
        self._next_id += 1
        self._k += 1
        return int(self._ids[p])

    def initialise(self, X0: np.ndarray, sweeps: int = _INIT_SWEEPS) -> None:
        """Absorb an initial sample: sequential assignment draws followed by
        enough Gibbs sweeps for the clustering to consolidate. The resulting
        cluster ids are exempt from alarms."""
        X0 = np.atleast_2d(np.asarray(X0, dtype=float))
        for x in X0:
            self._grow_obs(x)
            self._seat(x)
        for _ in range(sweeps):
            self.gibbs_sweep()
        self.init_ids = set(self.cluster_ids)

    def observe(self, x: np.ndarray) -> AlarmEvent | None:
        """Assign one streamed observation, resample the retained history,
        and raise at most one novelty alarm."""
        x = np.asarray(x, dtype=float)
        self._grow_obs(x)
        self._seat(x)
        for _ in range(self.config.sweeps_per_batch):
            self.gibbs_sweep()
        index = self.stream_count
        self.stream_count += 1
        for p in range(self._k):
            cand = int(self._ids[p])
            if cand in self.init_ids or cand in self.alarmed:
                continue
            size = int(round(self._counts[p]))
            if size >= self.config.alarm_threshold:
                self.alarmed.add(cand)
                return AlarmEvent(cluster_id=cand, stream_index=index, size=size)
        return None


def k_profile(
    data: np.ndarray,
    alphas,
    sweeps: int,
    seed: int,
    hyper: GmmHyper | None = None,
) -> list[tuple[float, int, float]]:
    """Post-burn-in distribution of the cluster count for each dispersion.

    Runs an independent sampler per dispersion value (singleton start, then
    `sweeps` full sweeps; the first half is burn-in) and tabulates how often
    each K occurred. Rows are (alpha, K, frequency). Data should be
    centred/scaled so the prior's zero-mean, unit-variance belief refers to
    within-class variability.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if hyper is None:
        hyper = GmmHyper.default(data.shape[1])
    rows = []
    for alpha in alphas:
        cfg = DpConfig(alpha=float(alpha), hyper=hyper, sweeps_per_batch=1)
        state = DpState(cfg, d=data.shape[1], seed=seed)
        state.seat_singletons(data)
        ks = []
        for s in range(sweeps):
            state.gibbs_sweep()
            if s >= sweeps // 2:
                ks.append(state.n_clusters)
        values, counts = np.unique(ks, return_counts=True)
        for v, c in zip(values, counts):
            rows.append((float(alpha), int(v), float(c) / len(ks)))
    return rows


def crp_expected_tables(alpha: float, n: int) -> float:
    """Expected number of occupied tables after n arrivals under the prior."""
    i = np.arange(1, n + 1)
    return float((alpha / (alpha + i - 1.0)).sum())


def simulate_crp_tables(alpha: float, n: int, rng: np.random.Generator) -> int:
    """Table count after n arrivals with the likelihood disabled."""
    counts: list[int] = []
    for i in range(n):
        total = i + alpha
        u = rng.random() * total
        acc = 0.0
        opened = True
        for j, c in enumerate(counts):
            acc += c
            if u < acc:
                counts[j] += 1
                opened = False
                break
        if opened:
            counts.append(1)
    return len(counts)
