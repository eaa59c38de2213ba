"""msbound: bounded saturated-feedback policies for noisy marginally stable
linear systems, with a seeded Monte Carlo verification engine.

Subpackage map:

- ``linalg``    saturation geometry, pseudoinverse allocation, reachability,
                stability classification, stable/orthogonal spectral split
- ``system``    validated (A, B) pairs and the built-in benchmark system
- ``noise``     seeded noise models with analytic moment metadata
- ``policies``  policy synthesis and phase-machine evaluation
- ``engine``    closed-loop simulation, parallel Monte Carlo moments,
                the exact uncontrolled second-moment oracle
- ``checks``    drift / fourth-difference hypothesis checks, boundedness
                verdicts, noiseless finite-time convergence
- ``config``    JSON experiment configs and the built-in benchmark preset
- ``cli``       ``msbound synth | simulate | verify``
"""

from .checks import (
    BoundednessReport,
    ConvergenceReport,
    DriftReport,
    FourthDifferenceReport,
    boundedness_verdict,
    drift_condition_check,
    fourth_difference_check,
    noiseless_convergence_check,
)
from .config import ExperimentConfig, paper_example_config, synthesize
from .engine import (
    MomentSeries,
    Trajectory,
    monte_carlo_moments,
    simulate_batch,
    simulate_trajectory,
    zero_control_moment_oracle,
    zero_control_moment_series,
)
from .errors import (
    HypothesisViolationError,
    InsufficientAuthorityError,
    MsboundError,
    NotStabilizableError,
    NumericalFailureError,
    PhaseContractError,
    RankDeficientError,
)
from .linalg import (
    SpectralSplit,
    StabilityClass,
    StabilityTag,
    classify_stability,
    min_singular_value,
    pinv_apply,
    reachability_index,
    reachability_matrix,
    saturate,
    spectral_split,
)
from .noise import (
    MomentBounds,
    NoiseModel,
    RngStream,
    cauchy_iid,
    estimate_c1,
    gaussian_iid,
    gaussian_scheduled,
    laplace_iid,
    moment_bounds,
    sample,
    student_t_iid,
    uniform_ball,
    zero_noise,
)
from .policies import (
    Policy,
    PolicyState,
    PolicyVariant,
    SynthesisReport,
    control_bound,
    initial_state,
    policy_step,
    scale_authority,
    synth_general,
    synth_orthogonal_stationary,
    synth_random_walk,
    synth_subsampled,
    zero_policy,
)
from .system import LinearSystem, benchmark_system, rotation

__version__ = "0.1.0"
