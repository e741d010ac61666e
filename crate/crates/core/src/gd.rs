//! Full-batch gradient descent on the VS-loss,
//! `w_{t+1} = w_t + eta * sum_i l'_{i,t} z_i`, with telemetry.
//!
//! The sum is accumulated with a shared log-scale `s_t = max_i log l'_{i,t}`:
//! the applied update is `eta * e^{s_t} * sum_i e^{log l'_i - s_t} z_i`, which
//! is algebraically the plain update but does not lose the gradient once
//! individual derivatives underflow.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::diagnostics::ratio_from_logs;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, log_sum_exp, norm};
use crate::loss::{summarize_margins, GradSummary, VsLossParams};
use crate::model::Classifier;

/// Consecutive telemetry strides with small direction change needed to stop.
pub const STOP_WINDOW: usize = 10;
/// Consecutive loss increases tolerated at a user step size.
pub const DIVERGENCE_PATIENCE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSize {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Zero,
    Given(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GdConfig {
    pub step_size: StepSize,
    pub max_iters: usize,
    /// Threshold on `1 - cos` between successive telemetry directions.
    pub stop_direction_tol: f64,
    pub init: Init,
    pub telemetry_stride: usize,
    /// Radius constant `c0` of the `c0 / sqrt(d)` initialization ball.
    pub init_radius: f64,
    /// Keep per-sample `log l'` at every telemetry point.
    pub record_per_sample: bool,
}

impl Default for GdConfig {
    fn default() -> Self {
        GdConfig {
            step_size: StepSize::Auto,
            max_iters: 100_000,
            stop_direction_tol: 1e-12,
            init: Init::Zero,
            telemetry_stride: 100,
            init_radius: 1.0,
            record_per_sample: false,
        }
    }
}

impl GdConfig {
    pub fn validate(&self) -> Result<()> {
        if let StepSize::Fixed(eta) = self.step_size {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::InvalidArgument(format!("step size must be > 0, got {eta}")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
        }
        if !(self.stop_direction_tol > 0.0) {
            return Err(Error::InvalidArgument("stop_direction_tol must be > 0".into()));
        }
        if self.telemetry_stride == 0 {
            return Err(Error::InvalidArgument("telemetry_stride must be >= 1".into()));
        }
        Ok(())
    }
}

/// One telemetry record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TelemetryPoint {
    pub t: usize,
    pub norm_w: f64,
    /// `<w_t, nu_+>`
    pub rho_plus: f64,
    /// `<w_t, nu_->`
    pub rho_minus: f64,
    pub log_loss: f64,
    pub log_lp_plus: f64,
    pub log_lp_minus: f64,
    /// `max_{i,j} (l'_i / l'_j) (Delta_i / Delta_j)`
    pub max_norm_ratio: f64,
    pub min_scaled_margin: f64,
    pub max_scaled_margin: f64,
    /// `log sum_{s <= t} L'_{s,+}`
    pub log_cum_lp_plus: f64,
    /// `log sum_{s <= t} L'_{s,-}`
    pub log_cum_lp_minus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub records: Vec<TelemetryPoint>,
    pub final_w: Classifier,
    pub converged: bool,
    pub iters_run: usize,
    pub step_size: f64,
    /// Per-sample `log l'` at each record, when requested.
    pub per_sample_log_lp: Vec<Vec<f64>>,
}

pub const TRAJECTORY_COLUMNS: [&str; 10] = [
    "t",
    "norm_w",
    "rho_plus",
    "rho_minus",
    "log_loss",
    "log_Lp_plus",
    "log_Lp_minus",
    "max_norm_ratio",
    "min_scaled_margin",
    "max_scaled_margin",
];

impl Trajectory {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(TRAJECTORY_COLUMNS)?;
        for r in &self.records {
            let reals = [
                r.norm_w,
                r.rho_plus,
                r.rho_minus,
                r.log_loss,
                r.log_lp_plus,
                r.log_lp_minus,
                r.max_norm_ratio,
                r.min_scaled_margin,
                r.max_scaled_margin,
            ];
            let mut row = vec![r.t.to_string()];
            row.extend(reals.iter().map(|v| crate::fmt_real(*v)));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `log(2) / (16 d n)`: the small-step condition with a safety factor of 2.
pub fn auto_step_size(ds: &Dataset) -> Result<f64> {
    if ds.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(std::f64::consts::LN_2 / (16.0 * ds.d() as f64 * ds.n() as f64))
}

fn margins(ds: &Dataset, w: &[f64]) -> Vec<f64> {
    ds.samples.par_iter().map(|s| dot(&s.z, w)).collect()
}

/// `w + eta * sum_i l'_i z_i` given the per-sample log-derivatives at `w`.
fn apply_update(ds: &Dataset, w: &[f64], log_lp: &[f64], eta: f64) -> Vec<f64> {
    let shift = log_lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut acc = vec![0.0; w.len()];
    for (s, l) in ds.samples.iter().zip(log_lp) {
        axpy((l - shift).exp(), &s.z, &mut acc);
    }
    let k = eta * shift.exp();
    let mut next = w.to_vec();
    axpy(k, &acc, &mut next);
    next
}

/// One gradient step.
pub fn gd_step(params: &VsLossParams, ds: &Dataset, w: &Classifier, eta: f64) -> Result<Classifier> {
    if w.dim() != ds.d() {
        return Err(Error::DimensionMismatch {
            what: "classifier",
            expected: ds.d(),
            got: w.dim(),
        });
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!("eta must be > 0, got {eta}")));
    }
    let g = summarize_margins(params, ds, margins(ds, &w.w))?;
    let next = Classifier::new(apply_update(ds, &w.w, &g.log_lp, eta));
    if !next.is_finite() {
        return Err(Error::StepSize { iter: 0, eta });
    }
    Ok(next)
}

fn unit(w: &[f64]) -> Option<Vec<f64>> {
    let n = norm(w);
    (n > 0.0 && n.is_finite()).then(|| w.iter().map(|v| v / n).collect())
}

/// `1 - cos(a, b)` for unit vectors, computed as `||a - b||^2 / 2`.
fn direction_change(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    0.5 * d
}

fn record(
    t: usize,
    ds: &Dataset,
    params: &VsLossParams,
    w: &[f64],
    g: &GradSummary,
    cum: (f64, f64),
) -> TelemetryPoint {
    let nrm = norm(w);
    let deltas = params.deltas();
    let groups: Vec<i8> = ds.samples.iter().map(|s| s.b).collect();
    let (lo, hi) = if nrm > 0.0 {
        ds.samples
            .iter()
            .zip(&g.margins)
            .map(|(s, m)| deltas.get(s.b) * m / nrm)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    } else {
        (f64::NAN, f64::NAN)
    };
    TelemetryPoint {
        t,
        norm_w: nrm,
        rho_plus: dot(w, &ds.nu_plus),
        rho_minus: dot(w, &ds.nu_minus),
        log_loss: g.log_loss_total,
        log_lp_plus: g.log_lp_plus,
        log_lp_minus: g.log_lp_minus,
        max_norm_ratio: ratio_from_logs(&g.log_lp, &groups, &deltas).normalized,
        min_scaled_margin: lo,
        max_scaled_margin: hi,
        log_cum_lp_plus: cum.0,
        log_cum_lp_minus: cum.1,
    }
}

/// Runs gradient descent until the direction settles or `max_iters` is hit.
pub fn run_gd(params: &VsLossParams, ds: &Dataset, cfg: &GdConfig) -> Result<Trajectory> {
    cfg.validate()?;
    params.validate()?;
    if ds.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let d = ds.d();
    let (eta, auto) = match cfg.step_size {
        StepSize::Auto => (auto_step_size(ds)?, true),
        StepSize::Fixed(eta) => (eta, false),
    };
    let mut w = match &cfg.init {
        Init::Zero => vec![0.0; d],
        Init::Given(v) => {
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    what: "initial iterate",
                    expected: d,
                    got: v.len(),
                });
            }
            let limit = cfg.init_radius / (d as f64).sqrt();
            if norm(v) > limit {
                warn!(
                    "initial iterate norm {:.3e} exceeds c0/sqrt(d) = {:.3e}",
                    norm(v),
                    limit
                );
            }
            v.clone()
        }
    };

    let mut records = Vec::new();
    let mut per_sample = Vec::new();
    let mut g = summarize_margins(params, ds, margins(ds, &w))?;
    let mut cum = (g.log_lp_plus, g.log_lp_minus);
    records.push(record(0, ds, params, &w, &g, cum));
    if cfg.record_per_sample {
        per_sample.push(g.log_lp.clone());
    }

    let mut last_dir = unit(&w);
    let mut last_loss = g.log_loss_total;
    let mut calm = 0;
    let mut rises = 0;
    let mut converged = false;
    let mut t = 0;
    while t < cfg.max_iters {
        w = apply_update(ds, &w, &g.log_lp, eta);
        t += 1;
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::StepSize { iter: t, eta });
        }
        g = summarize_margins(params, ds, margins(ds, &w))?;
        cum = (
            log_sum_exp(&[cum.0, g.log_lp_plus]),
            log_sum_exp(&[cum.1, g.log_lp_minus]),
        );
        if t % cfg.telemetry_stride != 0 && t != cfg.max_iters {
            continue;
        }
        records.push(record(t, ds, params, &w, &g, cum));
        if cfg.record_per_sample {
            per_sample.push(g.log_lp.clone());
        }

        let loss = g.log_loss_total;
        if loss > last_loss + 1e-12 * last_loss.abs().max(1.0) {
            if auto {
                return Err(Error::Divergence { iter: t });
            }
            rises += 1;
            if rises > DIVERGENCE_PATIENCE {
                return Err(Error::Divergence { iter: t });
            }
        } else {
            rises = 0;
        }
        last_loss = loss;

        let dir = unit(&w);
        match (&last_dir, &dir) {
            (Some(a), Some(b)) if direction_change(a, b) < cfg.stop_direction_tol => calm += 1,
            _ => calm = 0,
        }
        last_dir = dir;
        if calm >= STOP_WINDOW {
            converged = true;
            break;
        }
    }

    Ok(Trajectory {
        records,
        final_w: Classifier::new(w),
        converged,
        iters_run: t,
        step_size: eta,
        per_sample_log_lp: per_sample,
    })
}
