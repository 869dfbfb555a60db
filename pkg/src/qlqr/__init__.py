"""Model-free adaptive LQR for a simulated cart-pole.

A batch least-squares Q-learner discovers the optimal balancing gain of
a nonlinear inverted pendulum on a cart by interacting with it, and is
checked against the model-based Riccati solution it should agree with.
"""

from .harness import (
    ConfigError,
    Event,
    ExperimentConfig,
    FaultSpec,
    RunRecord,
    default_weights,
    gain_distance,
    read_log,
    run_experiment,
    simulate_fixed_gain,
    write_log,
)
from .linalg import (
    SingularMatrix,
    SingularNormalEquations,
    SvecBasis,
    invert_small,
    kron,
    least_squares,
    symmetrize,
    vec,
)
from .lqr_oracle import (
    CostWeights,
    NoConvergence,
    RiccatiSolution,
    closed_loop_spectral_radius,
    qmatrix_from_p,
    solve_dare,
)
from .plant import (
    LinearModel,
    NonFiniteState,
    PlantParams,
    apply_fault,
    derivatives,
    euler_step,
    linearize,
)
from .qlearning import (
    LearnerConfig,
    QLearner,
    SampleWindow,
    SingularM22,
    extract_gain,
    greedy_with_noise,
    init_m,
    init_x,
    q_target,
    regress_update,
)

__version__ = "0.1.0"
