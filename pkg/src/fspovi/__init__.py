"""Function-space particle-optimization variational inference for Bayesian neural networks."""
from . import data, flows, kernels, metrics, nn, oracles, priors
from . import function_space
from .flows import FlowKind
from .function_space import ParticleEnsemble, fpovi_step, ensemble_step, weight_space_povi_step
from .nn import NetworkSpec

__version__ = "0.1.0"

__all__ = [
    "data", "flows", "kernels", "metrics", "nn", "oracles", "priors", "function_space",
    "FlowKind", "NetworkSpec", "ParticleEnsemble", "fpovi_step", "ensemble_step",
    "weight_space_povi_step",
]
