"""Probabilistic learning toolkit for streaming structural-monitoring features.

Modules cover conjugate Gaussian/Dirichlet building blocks (`conjugate`), a
Bayesian mixture classifier (`gmm`) with an online active-learning loop
(`active`), semi-supervised MAP/EM training (`semisup`), Dirichlet-process
streaming clustering with novelty alarms (`dp`), kernelised Bayesian
multi-task classification (`kbtl`), synthetic data generators and CSV I/O
(`datagen`), evaluation metrics (`metrics`), and a reproducible experiment
harness (`config`, `experiments`, `cli`).
"""

from .conjugate import DirichletParams, NiwParams
from .datagen import LabeledDataset
from .gmm import GmmHyper, GmmModel
from .kbtl import DomainData, KbtlConfig

__version__ = "0.1.0"

__all__ = [
    "DirichletParams",
    "NiwParams",
    "LabeledDataset",
    "GmmHyper",
    "GmmModel",
    "DomainData",
    "KbtlConfig",
    "__version__",
]
