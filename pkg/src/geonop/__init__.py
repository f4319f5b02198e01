"""Geometric neural operators on point-cloud manifolds.

Spectral geometry on radial manifolds (spherical-harmonic bases,
fundamental forms, Laplace-Beltrami solvers), a graph kernel-integral
neural operator with a hand-rolled reverse-mode autodiff core, and a
Bayesian shape-identification layer on top.
"""

from .autodiff import Mlp, Tensor, no_grad
from .bayes import (GnpSurrogate, Observation, PosteriorTable, ShapePrior,
                    SpectralSurrogate, free_energy, log_likelihood,
                    make_observation, posterior, xi_squared)
from .datasets import (GeometryDataset, LbDataset, ShapeResponseDataset,
                       build_task_a, build_task_b, build_task_c,
                       task_c_centers)
from .gnp import GnpConfig, GnpModel, RadiusGraph, build_graph
from .lb_solver import (ConditioningError, ContractViolation, LbSystem,
                        RhsSpec, assemble, make_rhs, solve)
from .manifold import (FundamentalForms, NoiseSpec, RadialManifold,
                       SingularChartError, apply_noise, barycentric_lattice,
                       embed, forms_at, reference_shapes, sample_barycentric,
                       sample_point_cloud, unit_sphere)
from .sphere import (PoleError, QuadratureRule, ShBasis, ShCoeffs, analyze,
                     build_quadrature, eval_sh, eval_sh_all,
                     fibonacci_sphere, synthesize)
from .storage import ChecksumError, Container, fnv1a64
from .training import (Adam, Metrics, Normalizer, Sample, Schedule,
                       TrainConfig, load_checkpoint, relative_l2,
                       save_checkpoint, train)

__version__ = "0.1.0"

__all__ = [
    "Adam", "ChecksumError", "ConditioningError", "Container",
    "ContractViolation", "FundamentalForms", "GeometryDataset", "GnpConfig",
    "GnpModel", "GnpSurrogate", "LbDataset", "LbSystem", "Metrics", "Mlp",
    "NoiseSpec", "Normalizer", "Observation", "PoleError", "PosteriorTable",
    "QuadratureRule", "RadialManifold", "RadiusGraph", "RhsSpec", "Sample",
    "Schedule", "ShBasis", "ShCoeffs", "ShapePrior", "ShapeResponseDataset",
    "SingularChartError", "SpectralSurrogate", "Tensor", "TrainConfig",
    "analyze", "apply_noise", "assemble", "barycentric_lattice",
    "build_graph", "build_quadrature", "build_task_a", "build_task_b",
    "build_task_c", "embed", "eval_sh", "eval_sh_all", "fibonacci_sphere",
    "fnv1a64", "forms_at", "free_energy", "load_checkpoint",
    "log_likelihood", "make_observation", "make_rhs", "no_grad", "posterior",
    "reference_shapes", "relative_l2", "sample_barycentric",
    "sample_point_cloud", "save_checkpoint", "solve", "synthesize",
    "task_c_centers", "train", "unit_sphere", "xi_squared",
]
