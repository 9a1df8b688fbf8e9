"""Semi-implicit Euler scheme for abstract stochastic fluid evolutions on a
Galerkin space, with Monte Carlo diagnostics of its convergence properties."""

__version__ = "0.1.0"

from .galerkin import GalerkinSpace, State, ValidationError, make_space, norm
from .models import ModelSpec, build_model
from .noise import NoiseSpec, SigmaN, WienerPath, make_psi, project_sigma, sample_wiener
from .operators import OperatorSet, verify_axioms
from .scheme import ForcingSpec, SchemeConfig, SchemePath, implicit_step, run_ensemble, run_path

__all__ = [
    "GalerkinSpace", "State", "ValidationError", "make_space", "norm",
    "ModelSpec", "build_model",
    "NoiseSpec", "SigmaN", "WienerPath", "make_psi", "project_sigma", "sample_wiener",
    "OperatorSet", "verify_axioms",
    "ForcingSpec", "SchemeConfig", "SchemePath", "implicit_step", "run_ensemble", "run_path",
]
