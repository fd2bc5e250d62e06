"""Local hidden-variable models for two-photon polarization-correlation tests.

The package builds the best local model reproducing quantum coincidence
curves at detector efficiency eta and visibility v, computes the testable
deviation bound separating the model family from quantum mechanics,
simulates experiments event by event, and evaluates the resulting
inequalities on measured or simulated coincidence-rate data.
"""

from .periodic_math import (
    PERIOD,
    CosineSeries,
    PeriodicFn,
    autocorrelate,
    cosine_moment,
    default_grid_n,
    eval_series,
    grid,
    integrate_periodic,
    to_series,
    wrap_angle,
)
from .lhv_model import (
    DetectionFn,
    LhvModel,
    PairDensity,
    PairDensity2D,
    build_asymmetric_model,
    ck_moment,
    coincidence_curve,
    coincidence_prob,
    coincidence_prob_2d,
    singles_prob,
)
from .optimal_model import (
    BRANCH_AGREE,
    BRANCH_DEVIATE,
    OptimalModelParams,
    a_coeff,
    a_coeff_cubic,
    delta_closed,
    delta_rms,
    delta_series,
    deviation_d,
    deviation_report,
    epsilon_approx,
    epsilon_solve,
    fit_clip_parameter,
    make_optimal_model,
    predict_rates,
    rho_optimal,
    v_max,
)
from .variational_solver import (
    SolveResult,
    SolverError,
    VariationalProblem,
    objective_s,
    solve,
)
from .inequalities import (
    RateSeries,
    TestReport,
    TwoChannelRates,
    analyze,
    complete_symmetric,
    correlation_e,
    delta_exp,
    delta_min,
    fourier_b,
    nonideal_bound,
    s_param,
    v_fit,
    visibilities,
)
from .montecarlo import CountData, SimConfig, sample_pair, simulate

__version__ = "0.1.0"
