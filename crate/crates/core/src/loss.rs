//! The VS-loss family.
//!
//! For a sample in group `b` with margin `m = <z, w>`, the exponential shape is
//! `omega_b * exp(-delta_b * m + iota_b)` and the logistic shape is
//! `omega_b * log(1 + exp(-delta_b * m + iota_b))`. Gradient descent uses the
//! negative derivative `l' = -d loss / d m`.
//!
//! Derivatives are handled as natural logs throughout: the exponential loss
//! underflows to zero within a few hundred steps in high dimension, and the
//! derivative ratios between samples are the quantities being monitored.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{dot, log_sum_exp};
use crate::model::Classifier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossShape {
    #[default]
    Exponential,
    Logistic,
}

/// Hyperparameters of one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupParams {
    pub omega: f64,
    pub iota: f64,
    pub delta: f64,
}

impl GroupParams {
    pub const NEUTRAL: GroupParams = GroupParams {
        omega: 1.0,
        iota: 0.0,
        delta: 1.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VsLossParams {
    pub shape: LossShape,
    pub plus: GroupParams,
    pub minus: GroupParams,
}

/// Default `c` in the logit-adjustment rule `iota_b = -c log(n_b / n)`.
pub const DEFAULT_IOTA_SCALE: f64 = 1.0;

impl VsLossParams {
    pub fn neutral(shape: LossShape) -> Self {
        VsLossParams {
            shape,
            plus: GroupParams::NEUTRAL,
            minus: GroupParams::NEUTRAL,
        }
    }

    pub fn group(&self, b: i8) -> &GroupParams {
        if b > 0 {
            &self.plus
        } else {
            &self.minus
        }
    }

    pub fn deltas(&self) -> GroupDeltas {
        GroupDeltas {
            plus: self.plus.delta,
            minus: self.minus.delta,
        }
    }

    pub fn with_shape(mut self, shape: LossShape) -> Self {
        self.shape = shape;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for g in [&self.plus, &self.minus] {
            if !(g.delta > 0.0 && g.delta.is_finite()) {
                return Err(Error::InvalidArgument(format!("delta must be > 0, got {}", g.delta)));
            }
            if !(g.omega > 0.0 && g.omega.is_finite()) {
                return Err(Error::InvalidArgument(format!("omega must be > 0, got {}", g.omega)));
            }
            if !g.iota.is_finite() {
                return Err(Error::InvalidArgument("iota must be finite".into()));
            }
        }
        Ok(())
    }

    /// Log of the loss value at `margin`.
    pub fn log_loss(&self, b: i8, margin: f64) -> Result<f64> {
        if margin.is_nan() {
            return Err(Error::NotANumber("margin"));
        }
        let g = self.group(b);
        let u = -g.delta * margin + g.iota;
        Ok(g.omega.ln()
            + match self.shape {
                LossShape::Exponential => u,
                LossShape::Logistic => log_softplus(u),
            })
    }

    /// Log of the negative derivative at `margin`.
    pub fn log_neg_derivative(&self, b: i8, margin: f64) -> Result<f64> {
        if margin.is_nan() {
            return Err(Error::NotANumber("margin"));
        }
        let g = self.group(b);
        let u = -g.delta * margin + g.iota;
        Ok(g.delta.ln()
            + g.omega.ln()
            + match self.shape {
                LossShape::Exponential => u,
                // log(e^u / (1 + e^u)) = -softplus(-u)
                LossShape::Logistic => -softplus(-u),
            })
    }
}

/// Per-group margin scales `Delta_b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupDeltas {
    pub plus: f64,
    pub minus: f64,
}

impl GroupDeltas {
    pub const ONES: GroupDeltas = GroupDeltas {
        plus: 1.0,
        minus: 1.0,
    };

    pub fn get(&self, b: i8) -> f64 {
        if b > 0 {
            self.plus
        } else {
            self.minus
        }
    }

    pub fn scaled(&self, k: f64) -> GroupDeltas {
        GroupDeltas {
            plus: self.plus * k,
            minus: self.minus * k,
        }
    }
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `log(softplus(x))`, accurate for very negative `x` where softplus underflows.
fn log_softplus(x: f64) -> f64 {
    if x > -30.0 {
        softplus(x).ln()
    } else {
        // log(log1p(e^x)) = x + log(1 - e^x/2 + ...)
        x - 0.5 * x.exp()
    }
}

fn group_sizes(n_plus: usize, n_minus: usize) -> Result<(f64, f64)> {
    if n_plus == 0 {
        return Err(Error::EmptyGroup(1));
    }
    if n_minus == 0 {
        return Err(Error::EmptyGroup(-1));
    }
    let n = (n_plus + n_minus) as f64;
    Ok((n_plus as f64 / n, n_minus as f64 / n))
}

/// VS tuning: `Delta_b = n_b / n`, `omega_b = 1`, `iota_b = -2 log(Delta_b)`.
pub fn tune_vs_defaults(n_plus: usize, n_minus: usize) -> Result<VsLossParams> {
    let (fp, fm) = group_sizes(n_plus, n_minus)?;
    let g = |f: f64| GroupParams {
        omega: 1.0,
        iota: -2.0 * f.ln(),
        delta: f,
    };
    Ok(VsLossParams {
        shape: LossShape::Exponential,
        plus: g(fp),
        minus: g(fm),
    })
}

/// Logit-adjusted tuning: `Delta_b = 1`, `iota_b = -iota_scale log(n_b / n)`.
pub fn tune_la(n_plus: usize, n_minus: usize, iota_scale: f64) -> Result<VsLossParams> {
    let (fp, fm) = group_sizes(n_plus, n_minus)?;
    let g = |f: f64| GroupParams {
        omega: 1.0,
        iota: if iota_scale == 0.0 { 0.0 } else { -iota_scale * f.ln() },
        delta: 1.0,
    };
    Ok(VsLossParams {
        shape: LossShape::Exponential,
        plus: g(fp),
        minus: g(fm),
    })
}

pub fn neg_derivative(params: &VsLossParams, b: i8, margin: f64) -> Result<f64> {
    params.log_neg_derivative(b, margin).map(f64::exp)
}

pub fn loss_value(params: &VsLossParams, b: i8, margin: f64) -> Result<f64> {
    params.log_loss(b, margin).map(f64::exp)
}

/// Per-sample and per-group loss derivatives at one iterate, in log form.
#[derive(Debug, Clone, PartialEq)]
pub struct GradSummary {
    pub margins: Vec<f64>,
    pub log_lp: Vec<f64>,
    pub log_loss: Vec<f64>,
    pub log_lp_plus: f64,
    pub log_lp_minus: f64,
    pub log_lp_total: f64,
    pub log_loss_total: f64,
}

impl GradSummary {
    pub fn lp_plus(&self) -> f64 {
        self.log_lp_plus.exp()
    }

    pub fn lp_minus(&self) -> f64 {
        self.log_lp_minus.exp()
    }

    pub fn lp_total(&self) -> f64 {
        self.log_lp_total.exp()
    }
}

pub fn grad_summary(params: &VsLossParams, ds: &Dataset, w: &Classifier) -> Result<GradSummary> {
    if w.dim() != ds.d() {
        return Err(Error::DimensionMismatch {
            what: "classifier",
            expected: ds.d(),
            got: w.dim(),
        });
    }
    let margins: Vec<f64> = ds.samples.par_iter().map(|s| dot(&s.z, &w.w)).collect();
    summarize_margins(params, ds, margins)
}

pub(crate) fn summarize_margins(
    params: &VsLossParams,
    ds: &Dataset,
    margins: Vec<f64>,
) -> Result<GradSummary> {
    let mut log_lp = Vec::with_capacity(margins.len());
    let mut log_loss = Vec::with_capacity(margins.len());
    for (s, &m) in ds.samples.iter().zip(&margins) {
        log_lp.push(params.log_neg_derivative(s.b, m)?);
        log_loss.push(params.log_loss(s.b, m)?);
    }
    let pick = |b: i8| -> Vec<f64> {
        ds.samples
            .iter()
            .zip(&log_lp)
            .filter(|(s, _)| s.b == b)
            .map(|(_, v)| *v)
            .collect()
    };
    let log_lp_plus = log_sum_exp(&pick(1));
    let log_lp_minus = log_sum_exp(&pick(-1));
    Ok(GradSummary {
        log_lp_total: log_sum_exp(&[log_lp_plus, log_lp_minus]),
        log_loss_total: log_sum_exp(&log_loss),
        margins,
        log_lp,
        log_loss,
        log_lp_plus,
        log_lp_minus,
    })
}
