//! Evaluation statistics for dialogue transcripts: annotation metrics,
//! inter-annotator agreement, rank tests, rating summaries and balanced
//! assignment of rating items to batches.

pub mod annotation;
pub mod balance;
pub mod formats;
pub mod kappa;
pub mod mann_whitney;
pub mod ratings;

pub use annotation::{
    annotation_metrics, averaged_metrics, percent, CorrectionOrder, GistLabel, MetricTable, MetricsError,
    ResponseLabel, TurnAnnotation,
};
pub use balance::{balance_hits, median_split, Assignment, BalanceConfig, BalanceError, BalanceItem};
pub use kappa::{cohens_kappa, KappaError};
pub use mann_whitney::{mann_whitney_u, midranks, MwError, MwMode, MwResult};
pub use ratings::{summarize_ratings, summarize_ratings_for, RaterScores, Rating, RatingItem, RatingSummary};
