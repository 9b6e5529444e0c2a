"""Drift estimation: increments, score statistics, MLE, covariance and inference."""
from mcarlab.estimate.increments import (
    CoarseDesign,
    DataDrivenRule,
    IncrementSource,
    NoThreshold,
    PowerRule,
    ThresholdSchedule,
    coarse_design,
    detrend,
    oracle_increments,
    summation_cap,
    thresholded_increments,
)
from mcarlab.estimate.inference import Ellipsoid, chi2_quantile, confidence_ellipsoid, z_statistic
from mcarlab.estimate.pipeline import DriftFit, estimate_drift, recover_levy_increments, score_stats_for
from mcarlab.estimate.scores import (
    DriftEstimate,
    ScoreStats,
    drift_mle,
    grcar_score_stats,
    grcar_stats_from_design,
    mcar_score_stats,
    mcar_stats_from_design,
    qv_condition,
)
from mcarlab.estimate.sigma import estimate_sigma_iterative, select_thresholds_data_driven
