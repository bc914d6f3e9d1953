"""Random surfaces with Gaussian mixture potentials: exact fields, samplers, inequality checks and tail statistics."""
from .config import ConfigError, ExperimentConfig, ModelSpec, SamplerSpec
from .field import (
    Disconnected,
    PrecisionMatrix,
    SingularPrecision,
    assemble_precision,
    effective_resistance,
    lattice_green_origin,
    sample_gff,
    variance,
)
from .gibbs import Chain, sample_gaussian, sample_metropolis, sample_mixture_exact, sample_splice
from .graph import FunctionalModel, build_lattice_box, build_path, build_star, build_tree
from .mixtures import rho_alpha_eps, rho_tilted_stable
from .potentials import DecompositionFails, decompose, poly_splice, splice
from .stats import fit_power_tail, fit_stretched_tail, max_scaling, variance_growth

__version__ = "0.1.0"
