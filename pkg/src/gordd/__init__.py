"""Handicap effect estimation for go game archives.

Parses SGF game records, recovers continuous rating histories, builds the
rank-based running variable, and estimates the win-probability drop at each
handicap cutoff with local linear regression, validated against a
simulation oracle with known injected effects.
"""

from .dataset import (
    Candidate,
    DescribeCell,
    FilterReason,
    FilterReport,
    Observation,
    SetupClass,
    SetupKind,
    build_candidate,
    build_observation,
    classify_setup,
    describe_by_handicap,
    filter_dataset,
)
from .errors import (
    ChartError,
    EstimationError,
    EstimationWarning,
    GorddError,
    RatingError,
    RatingWindowWarning,
    RecordError,
    SeparationError,
    SgfParseError,
    SimulationError,
    SingularDesignError,
)
from .estimators import (
    LogisticFit,
    RddEstimate,
    WlsFit,
    estimate_all_cutoffs,
    fit_logistic_poly2,
    ik_bandwidth,
    local_linear_rdd,
    logistic_curve,
    predict_logistic,
    weighted_least_squares,
)
from .ratings import (
    ChartCalibration,
    DiscreteRating,
    RatingChart,
    RatingSeries,
    digitize_rating_chart,
    format_dan_kyu,
    load_rating_series,
    parse_dan_kyu,
    rating_at,
)
from .sgf import (
    Outcome,
    RawGameRecord,
    ResultKind,
    SgfGameTree,
    Winner,
    extract_game_record,
    parse_result,
    parse_sgf,
    serialize_sgf,
)
from .simulation import (
    DEFAULT_CONFIG,
    ORACLE_CONFIG,
    ORACLE_TARGET_DROPS,
    SimulatedWorld,
    SimulationConfig,
    calibrate_compensations,
    generate_world,
    noise_sd_for_inconsistent_share,
    render_rating_chart,
    true_effect,
)

__version__ = "0.1.0"
