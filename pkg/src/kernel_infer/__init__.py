"""Learning interaction kernels of first-order particle systems from trajectories."""

__version__ = "0.1.0"

from .basis import (SplineModel, SplineSpace, constraint_value, difference_matrix,
                    evaluate, interpolate)
from .config import ConfigError, ExperimentConfig
from .diagnostics import (ContractViolation, DegenerateMisfit, Misfit,
                          convolution_lipschitz_check, discrete_coercivity,
                          estimate_cT, random_matrix_mc, trajectory_bound_check)
from .dynamics import (Kernel, KernelEvaluationError, SimulationError, Trajectory,
                       eval_force, finite_difference_velocities, get_kernel,
                       load_trajectory, model_velocities, radius_bound,
                       sample_initial, save_trajectory, simulate)
from .learn import (AssemblyError, LearnProblem, LearnReport, assemble,
                    error_functional, learn_kernel, m_sweep, minimize,
                    montecarlo_average)
from .measures import (DiscreteMeasure, RhoPair, SupportSizeError, empirical_rho,
                       l2_rho_norm, wasserstein1)

__all__ = [
    "SplineModel", "SplineSpace", "constraint_value", "difference_matrix", "evaluate",
    "interpolate", "ConfigError", "ExperimentConfig", "ContractViolation",
    "DegenerateMisfit", "Misfit", "convolution_lipschitz_check", "discrete_coercivity",
    "estimate_cT", "random_matrix_mc", "trajectory_bound_check", "Kernel",
    "KernelEvaluationError", "SimulationError", "Trajectory", "eval_force",
    "finite_difference_velocities", "get_kernel", "load_trajectory", "model_velocities",
    "radius_bound", "sample_initial", "save_trajectory", "simulate", "AssemblyError",
    "LearnProblem", "LearnReport", "assemble", "error_functional", "learn_kernel",
    "m_sweep", "minimize", "montecarlo_average", "DiscreteMeasure", "RhoPair",
    "SupportSizeError", "empirical_rho", "l2_rho_norm", "wasserstein1",
]
