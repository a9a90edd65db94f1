//! Metrics, rating scale, cross-validation and improvement arithmetic.

mod cv;
mod metrics;
mod rating;
mod records;

pub use cv::{fold_split, kfold_cv, kfold_indices, mean_std, CvReport};
pub use metrics::{auc, evaluate_probs, improvement, investment_score, mse_rating};
pub use rating::{RatingScale, GRADES, INVESTMENT_CUTOFF};
pub use records::{split_dominant_metrics, MetricsRecord, ModelKind, Scenario, SideMetrics};
