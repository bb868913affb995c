"""Desk-scale laboratory for training energy-based models.

Analytically tractable energy families, score-based MCMC samplers, the full
set of estimator objectives (contrastive divergence, score matching and its
denoising/sliced variants, noise contrastive estimation, kernelized Stein
discrepancy), and a config-driven experiment runner that cross-validates the
estimators against closed-form Gaussian oracles.
"""

from .energy import (
    EnergyFamily,
    GaussianDensity,
    GaussianEnergy,
    MixtureRbfEnergy,
    MlpEnergy,
    ParamVector,
    Poly1dEnergy,
    gaussian_fisher_divergence,
    gaussian_kl,
    make_family,
)
from .estimators import (
    LossReport,
    NceConfig,
    SliceConfig,
    cd_gradient,
    dsm_cv_loss,
    dsm_loss,
    ksd,
    nce_loss,
    shifted_nce_loss,
    sm_loss,
    ssm_loss,
)
from .numerics import OptimizerState, RealVector, RngStream, optimizer_step
from .samplers import (
    LangevinConfig,
    NoiseSchedule,
    ReplayBuffer,
    annealed_langevin,
    langevin_chain,
    mala_log_accept_ratio,
)

__version__ = "0.1.0"

__all__ = [
    "EnergyFamily",
    "GaussianDensity",
    "GaussianEnergy",
    "LangevinConfig",
    "LossReport",
    "MixtureRbfEnergy",
    "MlpEnergy",
    "NceConfig",
    "NoiseSchedule",
    "OptimizerState",
    "ParamVector",
    "Poly1dEnergy",
    "RealVector",
    "ReplayBuffer",
    "RngStream",
    "SliceConfig",
    "annealed_langevin",
    "cd_gradient",
    "dsm_cv_loss",
    "dsm_loss",
    "gaussian_fisher_divergence",
    "gaussian_kl",
    "ksd",
    "langevin_chain",
    "mala_log_accept_ratio",
    "make_family",
    "nce_loss",
    "optimizer_step",
    "shifted_nce_loss",
    "sm_loss",
    "ssm_loss",
    "__version__",
]
