"""Spectral Galerkin experiments for the stochastic 2D Navier-Stokes equations."""
from .errors import BlowUpError, ConfigurationError, ContractError, NumericError, SNSEError
from .spectral import (DomainKind, DomainSpec, StokesBasis, build_basis, build_dirichlet_basis,
                       build_periodic_basis, cached_basis, discrete_divergence, load_basis, norms,
                       project, reconstruct, save_basis)
from .nonlinear import (BilinearWorkspace, bilinear_b, grad_pairing, ladyzhenskaya_ratio, rhs_det,
                        skew_pairing, skew_ratio)
from .noise import (NoiseKind, NoiseModel, WienerIncrements, bdg_check, eval_g, hs_norm,
                    ito_integral, ito_isometry_check, sample_increments, verify_lipschitz)
from .integrator import (IntegratorConfig, MultilevelRun, TrajectoryRecord, error_trajectory,
                         simulate, simulate_coupled, step, stopping_time)
from .scenario import Scenario, build_scenario
from .moments import (EnsembleStats, FunctionalKind, MomentFunctional, NormSelector,
                      ProbabilityStats, StudyTable, eval_functional, mc_expectation, pathwise_sup,
                      study_breckner, study_h_moments, study_log_boundedness,
                      study_probability_tail, study_v_convergence)
from .config import ExperimentConfig, parse_config

__version__ = "0.1.0"
