"""Safe active learning for Gaussian-process ODE models.

Train a sparse variational GP over an unknown vector field, sample
consistent dynamics functions pathwise, score candidate initial states by
Monte-Carlo entropy under a sampled safety-probability constraint, and run
the full measure-train-plan loop against simulated benchmark systems.
"""

from .acquisition import (
    SafetyBounds,
    SamplingConfig,
    conditional_entropy_constant,
    covariance_acquisition,
    entropy_acquisition,
    safety_probability,
)
from .integrate import IntegratorConfig, Trajectory, integrate
from .kernels import RbfKernel, gram, kernel_eval
from .model import (
    Episode,
    GPODEModel,
    elbo,
    load_model,
    predict_trajectories,
    sample_observations,
    save_model,
)
from .planner import (
    Box,
    PlannerConfig,
    PlanResult,
    propose,
    random_baseline_propose,
)
from .sampling import (
    DynamicsEnsemble,
    FourierFeatureSet,
    InducingSet,
    SampledDynamics,
    draw_function,
    evaluate_dynamics,
    kl_divergence,
    sample_fourier_features,
)
from .systems import SystemSpec, get_system, is_truly_safe, lv_rhs, measure, vdp_rhs
from .training import TrainConfig, train

__version__ = "0.1.0"
