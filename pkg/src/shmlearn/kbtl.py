"""Kernelised Bayesian multi-task binary classification.

Each domain embeds its observations through an RBF kernel, projects the
embedding into a shared low-dimensional subspace with a per-domain projection
matrix, and a single coupled linear classifier (weights + bias) acts on the
projected points of every domain. Gamma-Gaussian priors on projections and
classifier give a fully conjugate mean-field factorisation, fitted by
coordinate ascent in a fixed order: per-domain projection precisions,
projections, latent points; then the shared bias/weight precisions and the
joint (bias, weights) factor; then the truncated-Gaussian margin factors.

Labels are +/-1 with a margin parameter: the latent decision value f must
satisfy y * f > margin, so the label predictive passes f through a
truncated-Gaussian link.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.stats import norm

__all__ = [
    "DomainData",
    "KbtlConfig",
    "DomainFactors",
    "KbtlModel",
    "kernel_matrix",
    "median_lengthscale",
    "fit",
    "project",
    "predict",
    "predict_f",
    "model_to_json",
]


@dataclass(frozen=True)
class DomainData:
    """Training observations and +/-1 labels for one domain."""

    X: np.ndarray
    y: np.ndarray
    lengthscale: float | None = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=int)
        if X.shape[0] != y.shape[0]:
            raise ValueError("observation and label counts differ")
        if X.shape[0] < 2:
            raise ValueError("a domain needs at least two observations")
        if not np.all(np.isin(y, (-1, 1))):
            raise ValueError("labels must be -1 or +1")
        if self.lengthscale is not None and not self.lengthscale > 0:
            raise ValueError("lengthscale must be positive")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]


@dataclass(frozen=True)
class KbtlConfig:
    """Subspace size, margin, Gamma hyperpriors (shape/rate) and stopping rule.

    `sigma_h` is the noise scale of the latent projection; the remaining
    defaults are weakly informative.
    """

    subspace_dim: int = 2
    margin: float = 1.0
    alpha_lambda: float = 1.0
    beta_lambda: float = 1.0
    alpha_gamma: float = 1.0
    beta_gamma: float = 1.0
    alpha_eta: float = 1.0
    beta_eta: float = 1.0
    sigma_h: float = 0.1
    max_iters: int = 200
    param_tol: float = 1e-5

    def __post_init__(self):
        if self.subspace_dim < 1:
            raise ValueError("subspace_dim must be at least 1")
        if self.margin < 0:
            raise ValueError("margin must be non-negative")
        for name in ("alpha_lambda", "beta_lambda", "alpha_gamma", "beta_gamma",
                     "alpha_eta", "beta_eta", "sigma_h"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class DomainFactors:
    """Variational moments for one domain's factors."""

    lam_shape: np.ndarray  # (n, R) Gamma shapes of projection precisions
    lam_rate: np.ndarray   # (n, R) Gamma rates
    proj_mean: np.ndarray  # (n, R) projection matrix mean
    proj_cov: np.ndarray   # (R, n, n) per-column covariance
    latent_mean: np.ndarray  # (R, n) projected points
    latent_cov: np.ndarray   # (R, R) shared per-point covariance
    f_mean: np.ndarray     # (n,) decision-value means
    f_var: np.ndarray      # (n,) decision-value variances


@dataclass
class KbtlModel:
    """Fitted factors plus the training references needed for prediction."""

    domains: list[DomainData]
    lengthscales: list[float]
    kernels: list[np.ndarray]
    factors: list[DomainFactors]
    weight_mean: np.ndarray  # (R+1,), bias first
    weight_cov: np.ndarray   # (R+1, R+1)
    eta_shape: np.ndarray
    eta_rate: np.ndarray
    gamma_shape: float
    gamma_rate: float
    config: KbtlConfig
    change_trace: list[float] = field(default_factory=list)
    n_iters: int = 0

    @property
    def n_domains(self) -> int:
        return len(self.domains)


def kernel_matrix(X: np.ndarray, X2: np.ndarray, lengthscale: float) -> np.ndarray:
    """Gaussian RBF kernel K[i, j] = exp(-||x_i - x2_j||^2 / (2 l^2))."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    if X.shape[1] != X2.shape[1]:
        raise ValueError("column dimensions differ")
    if not lengthscale > 0:
        raise ValueError("lengthscale must be positive")
    sq = (
        (X**2).sum(axis=1)[:, None]
        + (X2**2).sum(axis=1)[None, :]
        - 2.0 * X @ X2.T
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / (2.0 * lengthscale**2))


def median_lengthscale(X: np.ndarray) -> float:
    """Median pairwise distance; a parameter-free RBF lengthscale."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    sq = (
        (X**2).sum(axis=1)[:, None]
        + (X**2).sum(axis=1)[None, :]
        - 2.0 * X @ X.T
    )
    np.maximum(sq, 0.0, out=sq)
    dists = np.sqrt(sq[np.triu_indices(X.shape[0], k=1)])
    positive = dists[dists > 0]
    if positive.size == 0:
        return 1.0
    return float(np.median(positive))


def _check_finite(name: str, iteration: int, *arrays) -> None:
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise RuntimeError(f"non-finite update in factor {name} at iteration {iteration}")


def _truncated_moments(mu: np.ndarray, y: np.ndarray, margin: float):
    """Mean/variance of N(mu, 1) truncated to y * f > margin."""
    z = y * mu - margin
    ratio = np.exp(norm.logpdf(z) - norm.logcdf(z))
    mean = mu + y * ratio
    var = np.clip(1.0 - ratio * (ratio + z), 1e-12, None)
    return mean, var


def fit(domains: list[DomainData], cfg: KbtlConfig, seed: int = 0) -> KbtlModel:
    """Coordinate-ascent variational fit over all domains jointly.

    Initialisation draws each domain's projection from an identically seeded
    generator (small-scale standard normal), which breaks the subspace
    symmetry while keeping duplicated domains on identical trajectories.
    Decision-value means start on the correct side of the margin.
    """
    if not domains:
        raise ValueError("at least one domain is required")
    for t, dom in enumerate(domains):
        if np.unique(dom.y).size < 2:
            raise ValueError(f"training domain {t + 1} must contain both classes")

    r = cfg.subspace_dim
    sh2 = cfg.sigma_h**2
    lengthscales, kernels, kkts, factors = [], [], [], []
    for dom in domains:
        ls = dom.lengthscale if dom.lengthscale is not None else median_lengthscale(dom.X)
        K = kernel_matrix(dom.X, dom.X, ls)
        lengthscales.append(ls)
        kernels.append(K)
        kkts.append(K @ K.T)
        n = dom.n
        rng = np.random.default_rng(seed)
        proj_mean = 1e-2 * rng.standard_normal((n, r))
        factors.append(
            DomainFactors(
                lam_shape=np.full((n, r), cfg.alpha_lambda),
                lam_rate=np.full((n, r), cfg.beta_lambda),
                proj_mean=proj_mean,
                proj_cov=np.broadcast_to(np.eye(n), (r, n, n)).copy(),
                latent_mean=proj_mean.T @ K,
                latent_cov=np.eye(r),
                f_mean=dom.y * (cfg.margin + 0.5),
                f_var=np.ones(n),
            )
        )

    weight_mean = np.zeros(r + 1)
    weight_cov = np.eye(r + 1)
    eta_shape = np.full(r, cfg.alpha_eta)
    eta_rate = np.full(r, cfg.beta_eta)
    gamma_shape, gamma_rate = cfg.alpha_gamma, cfg.beta_gamma

    trace: list[float] = []
    iteration = 0
    for iteration in range(1, cfg.max_iters + 1):
        change = 0.0

        b_mu = weight_mean[0]
        w_mu = weight_mean[1:]
        e_wwt = weight_cov[1:, 1:] + np.outer(w_mu, w_mu)
        e_wb = weight_cov[1:, 0] + w_mu * b_mu

        for t, (dom, K, KK, fac) in enumerate(zip(domains, kernels, kkts, factors)):
            n = dom.n
            diag_cov = np.stack([fac.proj_cov[s].diagonal() for s in range(r)], axis=1)
            e_a2 = fac.proj_mean**2 + diag_cov
            fac.lam_shape = np.full((n, r), cfg.alpha_lambda + 0.5)
            fac.lam_rate = cfg.beta_lambda + 0.5 * e_a2
            _check_finite("lambda", iteration, fac.lam_rate)

            e_lam = fac.lam_shape / fac.lam_rate
            new_proj = np.empty_like(fac.proj_mean)
            for s in range(r):
                prec = np.diag(e_lam[:, s]) + KK / sh2
                chol = cho_factor(prec, lower=True)
                fac.proj_cov[s] = cho_solve(chol, np.eye(n))
                new_proj[:, s] = cho_solve(chol, K @ fac.latent_mean[s] / sh2)
            _check_finite("projection", iteration, new_proj, fac.proj_cov)
            change = max(change, float(np.abs(new_proj - fac.proj_mean).max()))
            fac.proj_mean = new_proj

            latent_prec = np.eye(r) / sh2 + e_wwt
            latent_cov = np.linalg.inv(latent_prec)
            rhs = (
                fac.proj_mean.T @ K / sh2
                + np.outer(w_mu, fac.f_mean)
                - e_wb[:, None]
            )
            new_latent = latent_cov @ rhs
            _check_finite("latent", iteration, new_latent)
            change = max(change, float(np.abs(new_latent - fac.latent_mean).max()))
            fac.latent_mean = new_latent
            fac.latent_cov = latent_cov

        gamma_shape = cfg.alpha_gamma + 0.5
        gamma_rate = cfg.beta_gamma + 0.5 * (weight_mean[0] ** 2 + weight_cov[0, 0])
        eta_shape = np.full(r, cfg.alpha_eta + 0.5)
        eta_rate = cfg.beta_eta + 0.5 * (w_mu**2 + np.diag(weight_cov)[1:])
        _check_finite("gamma/eta", iteration, [gamma_rate], eta_rate)

        prec = np.zeros((r + 1, r + 1))
        rhs = np.zeros(r + 1)
        prec[0, 0] = gamma_shape / gamma_rate
        prec[1:, 1:] = np.diag(eta_shape / eta_rate)
        for dom, fac in zip(domains, factors):
            row_sums = fac.latent_mean.sum(axis=1)
            prec[0, 0] += dom.n
            prec[0, 1:] += row_sums
            prec[1:, 0] += row_sums
            prec[1:, 1:] += fac.latent_mean @ fac.latent_mean.T + dom.n * fac.latent_cov
            rhs[0] += fac.f_mean.sum()
            rhs[1:] += fac.latent_mean @ fac.f_mean
        chol = cho_factor(prec, lower=True)
        weight_cov = cho_solve(chol, np.eye(r + 1))
        new_weight = cho_solve(chol, rhs)
        _check_finite("classifier", iteration, new_weight, weight_cov)
        change = max(change, float(np.abs(new_weight - weight_mean).max()))
        weight_mean = new_weight

        b_mu = weight_mean[0]
        w_mu = weight_mean[1:]
        for dom, fac in zip(domains, factors):
            mu_pred = w_mu @ fac.latent_mean + b_mu
            f_mean, f_var = _truncated_moments(mu_pred, dom.y.astype(float), cfg.margin)
            _check_finite("decision", iteration, f_mean, f_var)
            change = max(change, float(np.abs(f_mean - fac.f_mean).max()))
            fac.f_mean = f_mean
            fac.f_var = f_var

        trace.append(change)
        if change < cfg.param_tol:
            break

    return KbtlModel(
        domains=list(domains),
        lengthscales=lengthscales,
        kernels=kernels,
        factors=factors,
        weight_mean=weight_mean,
        weight_cov=weight_cov,
        eta_shape=eta_shape,
        eta_rate=eta_rate,
        gamma_shape=float(gamma_shape),
        gamma_rate=float(gamma_rate),
        config=cfg,
        change_trace=trace,
        n_iters=iteration,
    )


def _domain_index(model: KbtlModel, t: int) -> int:
    if not 1 <= t <= model.n_domains:
        raise KeyError(f"unknown domain id {t}; fitted ids are 1..{model.n_domains}")
    return t - 1


def project(model: KbtlModel, t: int, Xnew: np.ndarray) -> np.ndarray:
    """Posterior-mean embedding of new observations of domain t; shape (R, n)."""
    i = _domain_index(model, t)
    dom = model.domains[i]
    Xnew = np.atleast_2d(np.asarray(Xnew, dtype=float))
    if Xnew.shape[1] != dom.X.shape[1]:
        raise ValueError(f"domain {t} expects dimension {dom.X.shape[1]}")
    k_star = kernel_matrix(dom.X, Xnew, model.lengthscales[i])
    return model.factors[i].proj_mean.T @ k_star


def predict_f(model: KbtlModel, t: int, Xnew: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Predictive mean and variance of the decision value for new points.

    The variance propagates the joint (bias, weights) covariance through the
    posterior-mean embedding; embedding uncertainty is not propagated.
    """
    h = project(model, t, Xnew)
    h_ext = np.vstack([np.ones(h.shape[1]), h])
    mean = model.weight_mean @ h_ext
    var = np.einsum("ij,ik,kj->j", h_ext, model.weight_cov, h_ext)
    return mean, var


def predict(model: KbtlModel, t: int, Xnew: np.ndarray) -> np.ndarray:
    """Probability of class +1 for each row of Xnew.

    The margin-truncated Gaussian link gives an unnormalised mass
    Phi((mu - margin)/sqrt(1 + var)) for +1 and the mirrored term for -1;
    the two are normalised to sum to one.
    """
    mean, var = predict_f(model, t, Xnew)
    scale = np.sqrt(1.0 + var)
    margin = model.config.margin
    p_pos = norm.cdf((mean - margin) / scale)
    p_neg = norm.cdf((-mean - margin) / scale)
    return p_pos / (p_pos + p_neg)


def model_to_json(model: KbtlModel) -> str:
    """Factor means and shared classifier moments as a JSON document."""
    doc = {
        "subspace_dim": model.config.subspace_dim,
        "margin": model.config.margin,
        "weight_mean": model.weight_mean.tolist(),
        "weight_cov": model.weight_cov.tolist(),
        "eta": {"shape": model.eta_shape.tolist(), "rate": model.eta_rate.tolist()},
        "gamma": {"shape": model.gamma_shape, "rate": model.gamma_rate},
        "domains": [
            {
                "lengthscale": ls,
                "proj_mean": fac.proj_mean.tolist(),
                "latent_mean": fac.latent_mean.tolist(),
                "f_mean": fac.f_mean.tolist(),
            }
            for ls, fac in zip(model.lengthscales, model.factors)
        ],
    }
    return json.dumps(doc)
