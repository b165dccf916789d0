"""toruslab: occupation-measure convergence laboratory on flat tori.

Simulates subordinated diffusions on [0,1)^d, extracts empirical
occupation measures, computes exact and spectral transport distances to
the flat measure, and checks the predicted convergence rates, variance
identities, deviation bounds, and the quadratic-distance renormalization
trend at desk scale.
"""

from .spectral import (SpectralModel, build_torus_spectrum, eigenfunction_eval,
                       heat_kernel, heat_kernel_sample, lattice_level_counts,
                       TruncationError)
from .simulate import (ProcessParams, Trajectory, philox_stream,
                       sample_stable_increment, simulate_path,
                       save_trajectory, load_trajectory)
from .empirical import (DiscreteMeasure, EmpiricalSpectrum, bin_measure,
                        mollified_density, psi_functional, spectral_coefficients,
                        uniform_measure, mode_power)
from .transport import (TransportResult, spectral_h_proxy, w1_circle_exact,
                        w1_circle_uniform, wp_discrete, wp_entropic_bracket,
                        w2_upper_bound_functional)
from .theory import (DeviationParams, RatePrediction, bernstein_bound,
                     epsilon_schedule, gamma_rate, heat_trace_weyl_check,
                     m_functional, psi_second_moment_symmetric, regime,
                     renorm_log_prediction, sigma_sq_eigenfunction, spectral_sum,
                     variance_const_drift)
from .harness import (ExperimentConfig, RateReport, fit_loglog_slope,
                      run_deviation_experiment, run_rate_experiment,
                      run_renorm_experiment, run_selftest)

__version__ = "0.1.0"
