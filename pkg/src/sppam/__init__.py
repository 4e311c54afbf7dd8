"""Stochastic proximal point methods with momentum.

Update rules (SGD, SGDM, PPA, PPAM, SPPA, SPPAM), exact implicit updates for
linear and Poisson regression, closed-form stability and convergence
quantities, and experiment drivers for stability regions and GLM benchmarks.
"""
from .numcore import Spectrum, eig2x2, make_rng, random_orthogonal, sym_eigenvalues
from .optimizers import (
    IterateState,
    OptimizerSpec,
    Trajectory,
    glm_implicit_batch,
    glm_implicit_scalar,
    run,
)
from .problems import (
    GlmDataset,
    NoiseModel,
    QuadraticProblem,
    glm_grad,
    glm_precision,
    make_glm,
    make_quadratic,
    quad_grad,
    quad_value,
)

from .acceptance import verify_suite

__version__ = "0.1.0"
