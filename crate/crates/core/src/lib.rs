//! Numerical laboratory for worst-group error of overparameterized linear
//! classifiers trained with the VS-loss family on Gaussian mixtures with
//! spurious features.
//!
//! Modules, bottom-up:
//! - [`model`]: problem spec, samples, group means.
//! - [`data`]: seeded sampling, label noise, dataset dumps.
//! - [`loss`]: VS / LA loss values and derivatives, tuning rules.
//! - [`gd`]: full-batch gradient descent with telemetry.
//! - [`svm`]: cost-sensitive SVM and the minimum-norm interpolator.
//! - [`risk`]: Q-function, worst-group error, bound evaluators.
//! - [`diagnostics`]: concentration checks, separability, ratio monitor.
//! - [`experiments`]: sweeps and the dimension-scaling preset.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod gd;
pub mod linalg;
pub mod loss;
pub mod model;
pub mod risk;
pub mod special;
pub mod svm;

pub use data::{sample_dataset, Dataset, RngStream};
pub use error::{Error, Result};
pub use gd::{run_gd, GdConfig, Init, StepSize, Trajectory};
pub use loss::{tune_la, tune_vs_defaults, GroupDeltas, LossShape, VsLossParams};
pub use model::{Classifier, ProblemSpec, Sample, SamplingMode};
pub use risk::{q_function, worst_group_error, ErrorReport};
pub use svm::{min_norm_interpolator, solve_cs_svm, SvmOptions, SvmSolution};

/// Formats a real with 17 significant digits (`NaN` for not-a-number).
pub fn fmt_real(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}
