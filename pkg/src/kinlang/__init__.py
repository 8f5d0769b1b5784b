"""High-order numerical integrators for underdamped Langevin dynamics.

Modules: ``brownian`` (stochastic-integral generation and combination),
``coeffs`` (cancellation-safe exponential kernels), ``targets`` (potentials),
``samplers`` (one-step maps), ``harness`` (strong-error experiments),
``cli`` (command-line front end), ``selftest`` (built-in verification).
"""

from .brownian import (
    BrownianTriple,
    ExpIntegralPair,
    FinePathOracle,
    MidpointNoise,
    MidpointSplit,
    SpaceTimeMoments,
    combine_exp_pairs,
    combine_triples,
    exp_pair_covariance,
    fine_path_oracle,
    moments_to_triple,
    sample_exp_pair,
    sample_midpoint_noise,
    sample_triple,
    split_midpoint_structure,
    triple_to_moments,
)
from .coeffs import phi0, phi1, phi2, sofa_phi
from .harness import (
    DivergenceError,
    ErrorRow,
    StudyConfig,
    fit_order,
    run_study,
    stationary_moments,
    strong_error,
)
from .rng import Tag, stream
from .samplers import (
    DynamicsParams,
    PhaseState,
    StepResult,
    contraction_rate,
    left_point_step,
    log_ode_step,
    obabo_step,
    randomized_midpoint_step,
    shifted_ode_reference_step,
    sofa_step,
    sort_step,
    strang_step,
)
from .targets import (
    LogisticPotential,
    Potential,
    QuadraticPotential,
    load_dataset,
    logistic_grad,
    make_quadratic,
    synthetic_logistic_dataset,
)

__version__ = "0.1.0"
