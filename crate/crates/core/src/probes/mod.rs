//! Linear attribute probes on embeddings, direction sweeps and the
//! similarity-based privacy audit.

mod privacy;
mod probe;
pub mod render;
mod sweep;

pub use privacy::{
    audit_embeddings, calibrate_threshold, cosine_similarity, privacy_audit, Calibration, PrivacyAuditReport,
    SimilaritySummary, ThresholdPolicy, DUPLICATE_TOLERANCE,
};
pub use probe::{fit_binary_probe, fit_scalar_probe, BinaryProbe, ProbeMeta, ScalarProbe};
pub use sweep::{
    direction_correlations, flip_report, flip_sweep, range_report, range_sweep, strongest, sweep_scores,
    FlipOrientation, FlipRecord, FlipSweepReport, Histogram, RangeRecord, RangeSweepReport, SweepConfig,
    FLIP_BIN_WIDTH, SCORE_BIN_WIDTH,
};
