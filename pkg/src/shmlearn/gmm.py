"""Supervised Bayesian Gaussian mixture classifier.

Each class carries a Normal-Inverse-Wishart posterior over its Gaussian
parameters and the class weights carry a Dirichlet posterior, so label
prediction marginalises all parameters analytically: the class-conditional
predictive is multivariate Student-t and the label prior is the Dirichlet
mean. Models are immutable values; `fit` and `add_labeled` return new models.

Labels are dense integers 1..K in discovery order; a new class may only be
created with id K + 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .conjugate import (
    DirichletParams,
    NiwParams,
    categorical_predictive,
    log_sum_exp,
    niw_predictive_logpdf_batch,
    niw_update,
)

__all__ = [
    "GmmHyper",
    "GmmClass",
    "GmmModel",
    "LabelPosterior",
    "fit",
    "predict",
    "predict_batch",
    "entropy",
    "add_labeled",
    "model_to_json",
    "model_from_json",
]


@dataclass(frozen=True)
class GmmHyper:
    """Shared prior hyperparameters for every class.

    Defaults encode a zero-mean, unit-variance belief per class with the
    weakest nu giving a finite prior covariance mean (nu0 = d + 2 makes
    E[cov] = S0), and equal class weights a priori.
    """

    m0: np.ndarray
    kappa0: float
    nu0: float
    S0: np.ndarray
    alpha_per_class: float = 1.0

    def __post_init__(self):
        m0 = np.atleast_1d(np.asarray(self.m0, dtype=float))
        S0 = np.atleast_2d(np.asarray(self.S0, dtype=float))
        m0.setflags(write=False)
        S0.setflags(write=False)
        object.__setattr__(self, "m0", m0)
        object.__setattr__(self, "S0", S0)
        if not self.alpha_per_class > 0:
            raise ValueError("alpha_per_class must be positive")
        # NIW constraints checked eagerly by constructing the prior once.
        self.niw_prior()

    @staticmethod
    def default(d: int, alpha_per_class: float = 1.0) -> "GmmHyper":
        return GmmHyper(
            m0=np.zeros(d), kappa0=1.0, nu0=d + 2.0, S0=np.eye(d),
            alpha_per_class=alpha_per_class,
        )

    def niw_prior(self) -> NiwParams:
        return NiwParams(m=self.m0, kappa=self.kappa0, nu=self.nu0, S=self.S0)

    @property
    def d(self) -> int:
        return self.m0.shape[0]


@dataclass(frozen=True)
class GmmClass:
    label: int
    post: NiwParams
    count: int


@dataclass(frozen=True)
class GmmModel:
    """Per-class NIW posteriors plus the Dirichlet weight posterior."""

    classes: tuple[GmmClass, ...]
    dirichlet: DirichletParams
    hyper: GmmHyper
    d: int

    @property
    def n_classes(self) -> int:
        return len(self.classes)


@dataclass(frozen=True)
class LabelPosterior:
    """Posterior over labels for one observation plus its log evidence."""

    probs: np.ndarray
    log_marginal: float


def fit(X: np.ndarray, y: np.ndarray, hyper: GmmHyper) -> GmmModel:
    """Fit from fully labelled data; labels must be the dense set 1..K."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=int)
    if X.shape[0] == 0:
        raise ValueError("cannot fit on an empty dataset")
    if X.shape[0] != y.shape[0]:
        raise ValueError("observation and label counts differ")
    if X.shape[1] != hyper.d:
        raise ValueError(f"feature dimension {X.shape[1]} does not match prior {hyper.d}")
    labels = np.unique(y)
    n_classes = labels.max()
    if labels.min() < 1 or labels.size != n_classes:
        raise ValueError("labels must form a dense set 1..K")

    prior = hyper.niw_prior()
    classes = []
    counts = np.zeros(n_classes)
    for k in range(1, n_classes + 1):
        Xk = X[y == k]
        classes.append(GmmClass(label=k, post=niw_update(prior, Xk), count=Xk.shape[0]))
        counts[k - 1] = Xk.shape[0]
    dirichlet = DirichletParams(np.full(n_classes, hyper.alpha_per_class) + counts)
    return GmmModel(classes=tuple(classes), dirichlet=dirichlet, hyper=hyper, d=hyper.d)


def _log_joint(model: GmmModel, X: np.ndarray) -> np.ndarray:
    """log p(x | k) + log p(k) for every row of X and class k; shape (n, K)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.d:
        raise ValueError(f"input dimension {X.shape[1]} does not match model {model.d}")
    log_prior = np.log(categorical_predictive(model.dirichlet))
    cols = [
        niw_predictive_logpdf_batch(cls.post, X) + log_prior[i]
        for i, cls in enumerate(model.classes)
    ]
    return np.column_stack(cols)


def predict_batch(model: GmmModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Label posteriors for every row of X.

    Returns (probs, log_marginal): probs has shape (n, K) with rows summing
    to one, log_marginal is the log evidence of each observation under the
    model (the normaliser of the label posterior).
    """
    lj = _log_joint(model, X)
    log_marginal = log_sum_exp(lj, axis=1)
    probs = np.exp(lj - log_marginal[:, None])
    return probs, log_marginal


def predict(model: GmmModel, x: np.ndarray) -> LabelPosterior:
    """Label posterior for a single observation."""
    probs, log_marginal = predict_batch(model, np.atleast_2d(x))
    return LabelPosterior(probs=probs[0], log_marginal=float(log_marginal[0]))


def entropy(post) -> float:
    """Shannon entropy of a label posterior in nats, with 0 log 0 = 0."""
    p = np.asarray(post.probs if isinstance(post, LabelPosterior) else post, dtype=float)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def add_labeled(model: GmmModel, x: np.ndarray, y: int) -> GmmModel:
    """Incorporate one labelled observation, possibly opening class K + 1."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (model.d,):
        raise ValueError(f"observation shape {x.shape} does not match model dimension {model.d}")
    y = int(y)
    k = model.n_classes
    if 1 <= y <= k:
        cls = model.classes[y - 1]
        updated = replace(cls, post=niw_update(cls.post, x[None, :]), count=cls.count + 1)
        classes = model.classes[: y - 1] + (updated,) + model.classes[y:]
        counts = np.zeros(k)
        counts[y - 1] = 1
        dirichlet = DirichletParams(model.dirichlet.alpha + counts)
    elif y == k + 1:
        new = GmmClass(label=y, post=niw_update(model.hyper.niw_prior(), x[None, :]), count=1)
        classes = model.classes + (new,)
        dirichlet = DirichletParams(
            np.append(model.dirichlet.alpha, model.hyper.alpha_per_class + 1.0)
        )
    else:
        raise ValueError(f"label {y} is neither an existing class nor the next id {k + 1}")
    return GmmModel(classes=classes, dirichlet=dirichlet, hyper=model.hyper, d=model.d)


def model_to_json(model: GmmModel) -> str:
    """Serialise a model snapshot; floats survive a round trip bit-exactly."""
    doc = {
        "d": model.d,
        "hyper": {
            "m0": model.hyper.m0.tolist(),
            "kappa0": model.hyper.kappa0,
            "nu0": model.hyper.nu0,
            "S0": model.hyper.S0.ravel().tolist(),
            "alpha_per_class": model.hyper.alpha_per_class,
        },
        "classes": [
            {
                "label": cls.label,
                "m": cls.post.m.tolist(),
                "kappa": cls.post.kappa,
                "nu": cls.post.nu,
                "S": cls.post.S.ravel().tolist(),
                "count": cls.count,
            }
            for cls in model.classes
        ],
        "dirichlet": model.dirichlet.alpha.tolist(),
    }
    return json.dumps(doc)


def model_from_json(blob: str) -> GmmModel:
    doc = json.loads(blob)
    d = int(doc["d"])
    h = doc["hyper"]
    hyper = GmmHyper(
        m0=np.array(h["m0"]),
        kappa0=h["kappa0"],
        nu0=h["nu0"],
        S0=np.array(h["S0"]).reshape(d, d),
        alpha_per_class=h["alpha_per_class"],
    )
    classes = tuple(
        GmmClass(
            label=int(c["label"]),
            post=NiwParams(
                m=np.array(c["m"]),
                kappa=c["kappa"],
                nu=c["nu"],
                S=np.array(c["S"]).reshape(d, d),
            ),
            count=int(c["count"]),
        )
        for c in doc["classes"]
    )
    return GmmModel(
        classes=classes,
        dirichlet=DirichletParams(np.array(doc["dirichlet"])),
        hyper=hyper,
        d=d,
    )
