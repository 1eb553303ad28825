//! Streaming univariate KPI anomaly detection.
//!
//! A seasonal forecaster turns observations into residuals, a Z-Score model
//! turns residuals into outlier scores, and an adaptive threshold is chosen
//! per tail as the loosest score cut whose outliers are neither periodic
//! (in calendar-bucket differences) nor more frequent than a set proportion.
//! A drift monitor recomputes thresholds when live data breaks those
//! constraints or the residual operating range shrinks.
//!
//! ```
//! use ath_core::{apply_ath, AthConfig, Axis, ScoreSeries};
//!
//! let scores = ScoreSeries::new(Axis::new(0, 3600).unwrap(), vec![1., 1., 1., 9., 1., 1.]).unwrap();
//! let decision = apply_ath(&scores, &AthConfig::right().with_limits(2, 0.2)).unwrap();
//! assert_eq!(decision.threshold, 1.0);
//! assert_eq!(decision.outlier_count, 1);
//! ```

pub mod ath;
pub mod dataio;
pub mod detect;
pub mod drift;
pub mod error;
pub mod eval;
pub mod forecast;
pub mod par;
pub mod pipeline;
pub mod series;
pub mod stats;

pub use ath::{
    apply_ath, apply_ath_traced, apply_ath_with_candidates, check_constraints, collapse_consecutive_runs,
    label_anomalies, temporal_diff_histogram, two_tailed_thresholds, ConstraintStatus, ThresholdDecision,
};
pub use error::{Error, Result};
pub use par::Execution;
pub use pipeline::{warm_up, warm_up_stream, PipelineConfig, PipelineState, PointVerdict};
pub use series::{
    bucket_index, validate_series, AnomalyLabel, AthConfig, Axis, BucketGranularity, ScoreSeries, Tail,
    TimeSeries,
};
