"""Ground-truth and mismatched simulators plus synthetic benchmarks."""

from .photobioreactor import (
    BATCH_HOURS,
    INITIAL_STATE,
    LIGHT_BOUNDS,
    N_STAGES,
    NITRATE_FEED_BOUNDS,
    STAGE_EDGES,
    BatchOutcome,
    ControlSchedule,
    NoiseSpec,
    PbrParameters,
    evaluate_batch,
    evaluate_batches,
    load_pbr_parameters,
    pbr_domain,
    pbr_model_rhs,
    pbr_plant_rhs,
    pbr_problem,
)
from .synthetic import (
    XSINX_DOMAIN,
    XSINX_NOISE_STD,
    synthetic_benchmark,
    synthetic_true_optimum,
    xsinx_problem,
    xsinx_sample,
    xsinx_truth,
)

__all__ = [
    "BatchOutcome",
    "ControlSchedule",
    "NoiseSpec",
    "PbrParameters",
    "evaluate_batch",
    "evaluate_batches",
    "load_pbr_parameters",
    "pbr_domain",
    "pbr_model_rhs",
    "pbr_plant_rhs",
    "pbr_problem",
    "BATCH_HOURS",
    "INITIAL_STATE",
    "LIGHT_BOUNDS",
    "NITRATE_FEED_BOUNDS",
    "N_STAGES",
    "STAGE_EDGES",
    "synthetic_benchmark",
    "synthetic_true_optimum",
    "xsinx_problem",
    "xsinx_sample",
    "xsinx_truth",
    "XSINX_DOMAIN",
    "XSINX_NOISE_STD",
]
