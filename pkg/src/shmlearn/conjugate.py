"""Conjugate exponential-family building blocks.

Normal-Inverse-Wishart (NIW) updates for Gaussian mean/covariance,
Dirichlet-categorical updates for mixing weights, the Student-t posterior
predictive implied by an NIW posterior, and log-domain utilities.

All densities are computed and combined in the log domain; every value
object is immutable and every function is pure, so unrestricted concurrent
use is safe.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import gammaln

__all__ = [
    "NiwParams",
    "DirichletParams",
    "niw_update",
    "niw_predictive_logpdf",
    "niw_predictive_logpdf_batch",
    "student_t_logpdf",
    "dirichlet_update",
    "categorical_predictive",
    "log_sum_exp",
]

# A log-density is a plain float in nats.
LogDensity = float

_JITTER_REL = 1e-9


def _chol_with_repair(S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cholesky of S, repairing a PD failure once with bounded jitter.

    The repair adds 1e-9 * trace(S)/d to the diagonal; a second failure
    signals genuinely degenerate data and raises.

    Returns
    -------
    (L, S) : the lower Cholesky factor and the (possibly jittered) matrix.
    """
    try:
        return np.linalg.cholesky(S), S
    except np.linalg.LinAlgError:
        d = S.shape[0]
        jitter = _JITTER_REL * np.trace(S) / d
        S_fixed = S + jitter * np.eye(d)
        try:
            return np.linalg.cholesky(S_fixed), S_fixed
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(
                "scale matrix is not positive definite even after jitter"
            ) from exc


@dataclass(frozen=True)
class NiwParams:
    """Normal-Inverse-Wishart hyperparameters for one Gaussian component.

    Parameters
    ----------
    m : array of shape (d,)
        Location of the mean prior, in feature units.
    kappa : float
        Strength (pseudo-count) of the mean prior; must be > 0.
    nu : float
        Degrees of freedom of the covariance prior; must be > d - 1.
    S : array of shape (d, d)
        Scale matrix, symmetric positive definite (feature units squared).
    """

    m: np.ndarray
    kappa: float
    nu: float
    S: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.m, dtype=float))
        S = np.atleast_2d(np.asarray(self.S, dtype=float))
        d = m.shape[0]
        if S.shape != (d, d):
            raise ValueError(f"scale matrix shape {S.shape} does not match dimension {d}")
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not self.nu > d - 1:
            raise ValueError(f"nu must exceed d - 1 = {d - 1}, got {self.nu}")
        _, S = _chol_with_repair(S)
        m.setflags(write=False)
        S.setflags(write=False)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "kappa", float(self.kappa))
        object.__setattr__(self, "nu", float(self.nu))
        object.__setattr__(self, "S", S)

    @property
    def d(self) -> int:
        return self.m.shape[0]


@dataclass(frozen=True)
class DirichletParams:
    """Dirichlet concentration vector; entries are pseudo-counts > 0."""

    alpha: np.ndarray

    def __post_init__(self):
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        if alpha.ndim != 1 or alpha.size == 0:
            raise ValueError("alpha must be a non-empty vector")
        if not np.all(alpha > 0):
            raise ValueError("all Dirichlet concentrations must be strictly positive")
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)

    @property
    def k(self) -> int:
        return self.alpha.shape[0]


def niw_update(prior: NiwParams, data: np.ndarray) -> NiwParams:
    """Posterior NIW parameters after observing `data` (rows are observations).

    Standard conjugate update: kappa and nu grow by n, the location moves to
    the precision-weighted average of prior location and sample mean, and the
    scale absorbs the sample scatter plus the shrinkage (mean-discrepancy)
    term. An empty data matrix returns the prior unchanged.
    """
    X = np.asarray(data, dtype=float)
    if X.size == 0:
        return prior
    X = np.atleast_2d(X)
    n, d = X.shape
    if d != prior.d:
        raise ValueError(f"data dimension {d} does not match prior dimension {prior.d}")

    xbar = X.mean(axis=0)
    kappa_n = prior.kappa + n
    nu_n = prior.nu + n
    m_n = (prior.kappa * prior.m + n * xbar) / kappa_n
    centered = X - xbar
    scatter = centered.T @ centered
    dm = (xbar - prior.m)[:, None]
    shrink = (prior.kappa * n / kappa_n) * (dm @ dm.T)
    S_n = prior.S + scatter + shrink
    return NiwParams(m=m_n, kappa=kappa_n, nu=nu_n, S=S_n)


def student_t_logpdf(X: np.ndarray, loc: np.ndarray, scale: np.ndarray, dof: float) -> np.ndarray:
    """Multivariate Student-t log density, vectorised over rows of X.

    Uses a Cholesky factorisation of the scale matrix for numerical
    stability; returns an array of shape (n,).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    loc = np.asarray(loc, dtype=float)
    d = loc.shape[0]
    if X.shape[1] != d:
        raise ValueError(f"input dimension {X.shape[1]} does not match location dimension {d}")
    if not dof > 0:
        raise ValueError(f"degrees of freedom must be positive, got {dof}")
    L, _ = _chol_with_repair(np.asarray(scale, dtype=float))
    diff = X - loc
    y = np.linalg.solve(L, diff.T)  # lower-triangular solve, batched over columns
    quad = np.einsum("ij,ij->j", y, y)
    logdet = 2.0 * np.log(np.diag(L)).sum()
    logc = (
        gammaln((dof + d) / 2.0)
        - gammaln(dof / 2.0)
        - 0.5 * (d * np.log(dof * np.pi) + logdet)
    )
    return logc - 0.5 * (dof + d) * np.log1p(quad / dof)


def niw_predictive_logpdf(post: NiwParams, x: np.ndarray) -> LogDensity:
    """Log posterior-predictive density at a single point x.

    Marginalising the Gaussian parameters under an NIW posterior gives a
    multivariate Student-t with location m, dof nu - d + 1 and scale
    S (kappa + 1) / (kappa (nu - d + 1)).
    """
    return float(niw_predictive_logpdf_batch(post, np.atleast_2d(x))[0])


def niw_predictive_logpdf_batch(post: NiwParams, X: np.ndarray) -> np.ndarray:
    """Log posterior-predictive density for each row of X; shape (n,)."""
    d = post.d
    dof = post.nu - d + 1.0
    if dof <= 0:
        raise ValueError(f"predictive degrees of freedom must be positive, got {dof}")
    scale = post.S * (post.kappa + 1.0) / (post.kappa * dof)
    return student_t_logpdf(X, post.m, scale, dof)


def dirichlet_update(prior: DirichletParams, counts: np.ndarray) -> DirichletParams:
    """Posterior Dirichlet: element-wise alpha + counts."""
    c = np.asarray(counts, dtype=float)
    if c.shape != prior.alpha.shape:
        raise ValueError(f"counts shape {c.shape} does not match alpha shape {prior.alpha.shape}")
    if np.any(c < 0):
        raise ValueError("counts must be non-negative")
    return replace(prior, alpha=prior.alpha + c)


def categorical_predictive(post: DirichletParams) -> np.ndarray:
    """Posterior-predictive class probabilities: the Dirichlet mean."""
    return post.alpha / post.alpha.sum()


def log_sum_exp(values: np.ndarray, axis: int | None = None) -> float | np.ndarray:
    """log(sum(exp(values))) computed by max-shifting to avoid overflow."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("log_sum_exp of an empty vector is undefined")
    vmax = np.max(v, axis=axis, keepdims=True)
    out = vmax.squeeze(axis=axis) if axis is not None else vmax.reshape(())
    with np.errstate(divide="ignore"):
        summed = np.log(np.sum(np.exp(v - vmax), axis=axis))
    result = out + summed
    return float(result) if result.ndim == 0 else result
