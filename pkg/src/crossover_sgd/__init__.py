"""Crossover-SGD: segment-wise gossip averaging over load-balanced random
topologies, with hierarchical and baseline protocols and a simulated cluster."""

from .baselines import PushSumPair, allreduce_average, pushsum_round, ring_round
from .config import METHODS, RunConfig
from .errors import CrossoverError, DivergedError, UsageError
from .gossip import RoundPlan, WorkerState, consensus_distance, crossover_round, plan_round
from .hierarchical import GroupLayout, build_groups, hierarchical_round
from .harness import LinkModel, MetricsRecord, QuadraticTask, quadratic_grad, simulate_round_time, train
from .model_core import (
    FlatSegment,
    LayerShape,
    ParamVector,
    SegmentPlan,
    build_segment_plan,
    flatten_tensors,
    unflatten_tensors,
)
from .optimizer import OptimizerConfig, accumulate_and_flush, lars_local_lr, sgd_momentum_step, warmup_lr
from .topology import (
    DestinationMap,
    RouletteMatrix,
    derive_seed,
    exponential_peer,
    init_roulettes,
    ring_neighbors,
    select_destinations,
)

__version__ = "0.1.0"
