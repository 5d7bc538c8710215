"""Semi-supervised MAP/EM training of a Gaussian mixture.

Labelled observations contribute hard sufficient statistics to their class;
unlabelled observations contribute soft statistics weighted by their current
class-membership probabilities. The M-step places each class at the mode of
its Normal-Inverse-Wishart posterior under the combined (possibly
fractional) statistics, and the weights at the Dirichlet posterior mode, so
every EM iteration ascends the penalised joint log-likelihood. Prediction
after fitting uses the plug-in Gaussians at the MAP parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import dirichlet as dirichlet_dist
from scipy.stats import invwishart, multivariate_normal

from .conjugate import log_sum_exp
from .gmm import GmmHyper

__all__ = [
    "EmConfig",
    "MapEstimate",
    "e_step",
    "m_step",
    "joint_log_likelihood",
    "fit_semisupervised",
    "predict_map",
]


@dataclass(frozen=True)
class EmConfig:
    """Stopping rule: relative joint log-likelihood improvement and a cap."""

    tol: float = 1e-6
    max_iters: int = 200

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass(frozen=True)
class MapEstimate:
    """Plug-in mixture parameters: one (mean, covariance, weight) per class."""

    means: np.ndarray    # (K, d)
    covs: np.ndarray     # (K, d, d)
    weights: np.ndarray  # (K,)

    def __post_init__(self):
        object.__setattr__(self, "means", np.asarray(self.means, dtype=float))
        object.__setattr__(self, "covs", np.asarray(self.covs, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))

    @property
    def n_classes(self) -> int:
        return self.means.shape[0]

    @property
    def d(self) -> int:
        return self.means.shape[1]


class ClassCollapseError(RuntimeError):
    """A mixture component lost all (hard plus soft) mass."""


def _gaussian_logpdf(X: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(X)
    L = np.linalg.cholesky(cov)
    diff = X - mean
    sol = np.linalg.solve(L, diff.T)
    quad = np.einsum("ij,ij->j", sol, sol)
    logdet = 2.0 * np.log(np.diag(L)).sum()
    d = mean.shape[0]
    return -0.5 * (d * np.log(2 * np.pi) + logdet + quad)


def _log_components(est: MapEstimate, X: np.ndarray) -> np.ndarray:
    """log(weight_k) + log N(x; mean_k, cov_k) for each row and class."""
    with np.errstate(divide="ignore"):
        logw = np.log(est.weights)
    return np.column_stack(
        [logw[k] + _gaussian_logpdf(X, est.means[k], est.covs[k]) for k in range(est.n_classes)]
    )


def e_step(est: MapEstimate, Xu: np.ndarray) -> np.ndarray:
    """Class-membership probabilities for unlabelled rows; shape (m, K)."""
    Xu = np.asarray(Xu, dtype=float)
    if Xu.size == 0:
        return np.empty((0, est.n_classes))
    lc = _log_components(est, np.atleast_2d(Xu))
    return np.exp(lc - log_sum_exp(lc, axis=1)[:, None])


def m_step(
    Xl: np.ndarray,
    yl: np.ndarray,
    Xu: np.ndarray,
    resp: np.ndarray,
    hyper: GmmHyper,
) -> MapEstimate:
    """MAP parameters from hard labelled counts plus soft unlabelled counts.

    Class k's statistics are the labelled rows with y = k plus the
    responsibility-weighted unlabelled rows; the mean/covariance are the
    joint mode of the resulting NIW posterior and the weights the Dirichlet
    posterior mode. A class with zero total mass raises ClassCollapseError.
    """
    Xl = np.atleast_2d(np.asarray(Xl, dtype=float))
    yl = np.asarray(yl, dtype=int)
    Xu = np.asarray(Xu, dtype=float).reshape(-1, Xl.shape[1]) if np.size(Xu) else np.empty((0, Xl.shape[1]))
    n_classes = int(yl.max()) if yl.size else resp.shape[1]
    if resp.size:
        n_classes = max(n_classes, resp.shape[1])
        if resp.shape[0] != Xu.shape[0]:
            raise ValueError("responsibility rows do not match unlabelled rows")
    d = Xl.shape[1]

    means = np.empty((n_classes, d))
    covs = np.empty((n_classes, d, d))
    counts = np.empty(n_classes)
    for k in range(1, n_classes + 1):
        Xk = Xl[yl == k]
        r_k = resp[:, k - 1] if resp.size else np.empty(0)
        n_k = Xk.shape[0] + (r_k.sum() if r_k.size else 0.0)
        if n_k <= 0:
            raise ClassCollapseError(f"class {k} has zero hard plus soft count")
        sum_k = Xk.sum(axis=0) + (r_k @ Xu if r_k.size else 0.0)
        xbar = sum_k / n_k
        centered_l = Xk - xbar
        scatter = centered_l.T @ centered_l
        if r_k.size:
            centered_u = Xu - xbar
            scatter = scatter + (centered_u * r_k[:, None]).T @ centered_u
        kappa_n = hyper.kappa0 + n_k
        nu_n = hyper.nu0 + n_k
        m_n = (hyper.kappa0 * hyper.m0 + sum_k) / kappa_n
        dm = (xbar - hyper.m0)[:, None]
        S_n = hyper.S0 + scatter + (hyper.kappa0 * n_k / kappa_n) * (dm @ dm.T)
        means[k - 1] = m_n
        covs[k - 1] = S_n / (nu_n + d + 2.0)
        counts[k - 1] = n_k

    total = counts.sum()
    mode_num = hyper.alpha_per_class + counts - 1.0
    if np.any(mode_num <= 0):
        raise ClassCollapseError("Dirichlet posterior mode is not interior")
    weights = mode_num / (n_classes * hyper.alpha_per_class + total - n_classes)
    return MapEstimate(means=means, covs=covs, weights=weights)


def _log_prior(est: MapEstimate, hyper: GmmHyper) -> float:
    total = 0.0
    for k in range(est.n_classes):
        cov = est.covs[k]
        total += float(
            multivariate_normal.logpdf(est.means[k], mean=hyper.m0, cov=cov / hyper.kappa0)
        )
        total += float(invwishart.logpdf(cov, df=hyper.nu0, scale=hyper.S0))
    total += float(
        dirichlet_dist.logpdf(est.weights, np.full(est.n_classes, hyper.alpha_per_class))
    )
    return total


def joint_log_likelihood(
    est: MapEstimate,
    Xl: np.ndarray,
    yl: np.ndarray,
    Xu: np.ndarray,
    hyper: GmmHyper,
) -> float:
    """Penalised data log-likelihood: labelled joint terms, unlabelled
    mixture terms, and the log prior density of the parameters."""
    Xl = np.atleast_2d(np.asarray(Xl, dtype=float))
    yl = np.asarray(yl, dtype=int)
    total = _log_prior(est, hyper)
    if Xl.size:
        lc = _log_components(est, Xl)
        total += float(lc[np.arange(Xl.shape[0]), yl - 1].sum())
    Xu = np.asarray(Xu, dtype=float)
    if Xu.size:
        lc = _log_components(est, np.atleast_2d(Xu))
        total += float(log_sum_exp(lc, axis=1).sum())
    return total


def fit_semisupervised(
    Xl: np.ndarray,
    yl: np.ndarray,
    Xu: np.ndarray,
    hyper: GmmHyper,
    cfg: EmConfig = EmConfig(),
) -> tuple[MapEstimate, list[float]]:
    """EM over labelled and unlabelled data from a supervised MAP start.

    Returns the final estimate and the joint log-likelihood trace (initial
    value followed by one entry per iteration). Labelled data must cover
    every class, so each class keeps at least one hard count throughout.
    """
    yl = np.asarray(yl, dtype=int)
    labels = np.unique(yl)
    if labels.size == 0 or labels.min() < 1 or labels.size != labels.max():
        raise ValueError("labelled data must cover the dense class set 1..K")
    empty = np.empty((0, np.atleast_2d(Xl).shape[1]))
    est = m_step(Xl, yl, empty, np.empty((0, labels.size)), hyper)
    ll = joint_log_likelihood(est, Xl, yl, Xu, hyper)
    trace = [ll]
    for iteration in range(1, cfg.max_iters + 1):
        resp = e_step(est, Xu)
        try:
            est = m_step(Xl, yl, Xu, resp, hyper)
        except ClassCollapseError as exc:
            raise ClassCollapseError(f"iteration {iteration}: {exc}") from exc
        new_ll = joint_log_likelihood(est, Xl, yl, Xu, hyper)
        trace.append(new_ll)
        if new_ll - ll < cfg.tol * max(1.0, abs(ll)):
            break
        ll = new_ll
    return est, trace


def predict_map(est: MapEstimate, X: np.ndarray) -> np.ndarray:
    """Most probable class (1..K) per row under the plug-in mixture."""
    lc = _log_components(est, np.atleast_2d(np.asarray(X, dtype=float)))
    return lc.argmax(axis=1) + 1
