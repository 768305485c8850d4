"""Numerical laboratory for cluster-growth oscillators.

Discrete Becker-Doring kinetics with monomer injection and cluster
depletion, the rescaled transport limit with its exponential nucleation
boundary condition, the full linear-stability / bifurcation-direction
analysis of the associated characteristic equation, and the reduced
moment and sharp-peak oracle models.
"""

__version__ = "0.1.0"

from .becker_doring import (ClusterState, ConstantFluxState, EquilibriumState,
                            RateCoefficients, SimulationTrace, coefficients,
                            constant_flux_state, equilibrium,
                            make_cluster_state, simulate)
from .kernels import (NumericalError, QuadratureError, QuadratureResult,
                      find_bracketed_root, integrate_semiinfinite,
                      power_trapezoid_weights, rk_step)
from .limit_model import (BlowUpError, FluxHistory, LimitTrace,
                          mass_balance_residual, reconstruct_flux,
                          simulate_limit, steady_state_u0)
from .params import (ModelParams, ScaleSet, compute_scales, critical_size,
                     load_config, log_flux_constant, monomer_rescale,
                     monomer_unrescale)
from .reduced import (MomentState, MomentTrace, SharpPeakParams,
                      SharpPeakResult, moment_steady_state, simulate_moments,
                      simulate_sharp_peak)
from .spectral import (BifurcationPoint, CharacteristicEvaluation,
                       DegenerateCrossingError, ResonanceError, SweepResult,
                       beta0_exact, char_function_zero, crossing_direction_fd,
                       evaluate_G, find_crossings, hopf_coefficients,
                       odd_beta_study, oddbeta_zero_asymptotics,
                       smalltheta_root_asymptotics, stability_eta_bound,
                       sweep, track_root)
