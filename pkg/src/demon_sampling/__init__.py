"""Reward-guided diffusion sampling on analytic Gaussian mixtures.

The sampler steers a discretized reverse-time SDE at inference time by
scoring candidate noises with the reward of their deterministic clean
completions and recombining them on the sqrt(N) sphere. Ships with a
Monte-Carlo verification harness for the method's theoretical properties, a
pairwise-comparison reward pipeline, an external-reward HTTP protocol, and
an interactive steering service.
"""

from .benchmarks import BUILTIN_MODELS, load_benchmark, resolve_model
from .core import (
    ConfigurationError,
    DensityUnderflowError,
    InvalidStateError,
    MixtureModel,
    Schedule,
    ScheduleError,
    diffusion_coeff,
    drift,
    heun_sde_step,
    karras_schedule,
    mixture_log_density,
    mixture_score,
    ode_map,
    sample_prior,
)
from .engine import (
    DegenerateCombinationError,
    DemonConfig,
    StepRecord,
    Trajectory,
    best_of_n,
    boltzmann_weights,
    demon_step,
    replay_trajectory,
    sample_ensemble,
    sample_trajectory,
    selection_weights,
    synthesize_noise,
    tanh_weights,
)
from .rewards import (
    ClosedFormSource,
    ComparisonSource,
    ExternalSource,
    GaussianBumpReward,
    LinearReward,
    NegDistanceReward,
    QuadraticReward,
    RewardSourceError,
    SimulatedJudge,
    StepContext,
    WeightedSumReward,
    estimate_reward,
    eval_reward,
    external_reward,
    partition_top,
)
from .verification import (
    LemmaReport,
    McEstimate,
    distribution_equivalence,
    estimator_spread_table,
    improvement_curves,
    lemma1_residual,
    martingale_check,
    max_onestep_check,
    mc_reward_estimate,
    sphere_concentration,
)

__version__ = "0.1.0"
