"""Conformal prediction sets for regression with responses on a manifold."""
from .conformal import (
    ConformalModel,
    OracleSet,
    PredictionSet,
    conformity_rank,
    contains,
    fit,
    oracle_level,
    oracle_set,
    predict_set,
    predict_set_fast,
)
from .density import (
    BandwidthRule,
    CellDensity,
    EmptyCellError,
    TooFewPointsError,
    augmented_eval,
    joint_score_threshold,
    kde_eval,
)
from .geometry import (
    EmbeddedManifold,
    Kind,
    ambient_distance,
    cylinder,
    simplex,
    sphere,
    stiefel32,
    vmf_density,
    vmf_sample,
)
from .partition import (
    CDSplitPartition,
    GridPartition,
    Partition,
    cd_split_partition,
    cube_partition,
    grid_partition,
    h_hat,
    q_alpha_hat,
)

__version__ = "0.1.0"
