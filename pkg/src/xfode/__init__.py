"""xfode: interpretable additive fuzzy ODE models for system identification.

The package splits into small layers: dataset ingestion and normalization,
state construction, membership-function partitions, fuzzy TSK dynamics,
multi-step rollout, gradient training, and a benchmark/evaluation harness.
"""

from .dataset import (
    NormStats,
    RawDataset,
    denormalize,
    fit_normalizer,
    load_csv,
    normalize,
    save_csv,
    split_rows,
)
from .evaluation import (
    EvalReport,
    ExperimentSpec,
    benchmark,
    export_mfs,
    generate_synthetic,
    load_experiment_spec,
    rmse,
)
from .fuzzy_models import (
    AdditiveDynamics,
    FodeDynamics,
    FuzzyDynamicsModel,
    SingleInputFls,
    additive_infer,
    count_parameters,
    fls_infer,
    fls_infer_two_rule,
    fode_infer,
    init_additive,
    init_fode,
    load_model,
    save_model,
)
from .membership import (
    AntecedentChain,
    DecodedMFs,
    active_pair,
    decode,
    evaluate,
    init_chain,
    memberships,
    mf_grid,
    softplus,
    softplus_inverse,
)
from .rollout import RolloutResult, rollout, simulate, simulate_detailed
from .state_repr import (
    StateConfig,
    TrajectorySet,
    build_states,
    build_trajectories,
    lag_to_difference_matrix,
    output_of_state,
)
from .training import TrainConfig, TrainRun, compute_gradient, l1_loss, train

__version__ = "0.1.0"
