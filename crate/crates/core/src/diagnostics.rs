//! Checks of the structural properties of realized data and trajectories.
//!
//! The concentration inequalities carry unnamed absolute constants, so every
//! check reports the smallest constant under which it would pass; pass/fail is
//! only evaluated at constants the caller supplies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gd::Trajectory;
use crate::linalg::{dot, norm, norm_sq};
use crate::loss::GroupDeltas;
use crate::model::{snr_summary, Classifier, ProblemSpec};
use crate::svm::scaled_margins;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Concentration constant `c1 >= 1`.
    pub c1: f64,
    /// Regime constant `C`.
    #[serde(rename = "C")]
    pub big_c: f64,
    /// Failure probability.
    pub delta: f64,
    pub kkt_tol: f64,
    pub margin_spread_tol: f64,
    pub ratio_ceiling: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            c1: 3.0,
            big_c: 10.0,
            delta: 0.05,
            kkt_tol: 1e-8,
            margin_spread_tol: 1e-2,
            ratio_ceiling: 10.0,
        }
    }
}

impl DiagnosticsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 >= 1.0) {
            return Err(Error::InvalidArgument(format!("c1 must be >= 1, got {}", self.c1)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "delta must be in (0,1), got {}",
                self.delta
            )));
        }
        for (name, v) in [
            ("big_c", self.big_c),
            ("kkt_tol", self.kkt_tol),
            ("margin_spread_tol", self.margin_spread_tol),
            ("ratio_ceiling", self.ratio_ceiling),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be > 0")));
            }
        }
        Ok(())
    }
}

/// Outcome of one inequality over all samples or pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub name: &'static str,
    pub pass: bool,
    /// Smallest `bound - lhs` over the quantifier (positive means passing).
    pub worst_slack: f64,
    /// Smallest `c1` for which the inequality holds; `None` when it has no
    /// constant, `Some(inf)` when no constant helps.
    pub min_constant: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoodEventReport {
    pub norm_upper: InequalityCheck,
    pub norm_lower: InequalityCheck,
    pub same_group: InequalityCheck,
    pub cross_group: InequalityCheck,
    pub pairwise: InequalityCheck,
    pub overall: bool,
    /// Smallest `c1` making every constant-bearing inequality pass.
    pub smallest_c1: f64,
}

impl GoodEventReport {
    pub fn checks(&self) -> [&InequalityCheck; 5] {
        [
            &self.norm_upper,
            &self.norm_lower,
            &self.same_group,
            &self.cross_group,
            &self.pairwise,
        ]
    }
}

fn check(
    name: &'static str,
    items: impl Iterator<Item = (f64, f64)>,
    unit_bound: Option<f64>,
) -> InequalityCheck {
    // items: (lhs, bound) with pass iff lhs <= bound
    let mut worst_slack = f64::INFINITY;
    let mut worst_ratio: f64 = 0.0;
    let mut count = 0;
    for (lhs, bound) in items {
        worst_slack = worst_slack.min(bound - lhs);
        if let Some(u) = unit_bound {
            worst_ratio = worst_ratio.max(lhs / u);
        }
        count += 1;
    }
    InequalityCheck {
        name,
        pass: worst_slack >= 0.0,
        worst_slack,
        min_constant: unit_bound.map(|_| worst_ratio.max(1.0)),
        count,
    }
}

/// Evaluates the good-event inequalities on a realized dataset.
pub fn good_event_check(ds: &Dataset, cfg: &DiagnosticsConfig) -> Result<GoodEventReport> {
    cfg.validate()?;
    let snr = snr_summary(&ds.spec)?;
    let d = ds.d() as f64;
    let n = ds.n() as f64;
    let c1 = cfg.c1;
    let log_term = (n / cfg.delta).ln().max(0.0).sqrt();
    let norms: Vec<f64> = ds.samples.par_iter().map(|s| norm_sq(&s.z)).collect();

    let norm_upper = check(
        "norm_upper",
        norms.iter().map(|v| (*v, c1 * d)),
        Some(d),
    );
    // ||z||^2 >= d / c1  <=>  d / ||z||^2 <= c1
    let norm_lower = check(
        "norm_lower",
        norms.iter().map(|v| (d / v, c1)),
        Some(1.0),
    );

    let same: Vec<f64> = ds
        .samples
        .iter()
        .map(|s| (dot(&s.z, ds.nu(s.b)) - snr.r_plus).abs())
        .collect();
    let same_group = check(
        "same_group",
        same.iter().map(|v| (*v, snr.r_plus / 2.0)),
        None,
    );

    let cross_unit = snr.r_plus.sqrt() * log_term;
    let cross: Vec<f64> = ds
        .samples
        .iter()
        .map(|s| (dot(&s.z, ds.nu(-s.b)) - snr.r_minus).abs())
        .collect();
    let cross_group = check(
        "cross_group",
        cross.iter().map(|v| (*v, c1 * cross_unit)),
        Some(cross_unit),
    );

    let pair_unit = d.sqrt() * log_term;
    let samples = &ds.samples;
    let pair_devs: Vec<f64> = (0..samples.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            (i + 1..samples.len()).map(move |j| {
                let target = if samples[i].b == samples[j].b {
                    snr.r_plus
                } else {
                    snr.r_minus
                };
                (dot(&samples[i].z, &samples[j].z) - target).abs()
            })
        })
        .collect();
    let pairwise = check(
        "pairwise",
        pair_devs.iter().map(|v| (*v, c1 * pair_unit)),
        Some(pair_unit),
    );

    let overall = [&norm_upper, &norm_lower, &same_group, &cross_group, &pairwise]
        .iter()
        .all(|c| c.pass);
    let smallest_c1 = if same_group.pass {
        [&norm_upper, &norm_lower, &cross_group, &pairwise]
            .iter()
            .filter_map(|c| c.min_constant)
            .fold(1.0, f64::max)
    } else {
        f64::INFINITY
    };
    Ok(GoodEventReport {
        norm_upper,
        norm_lower,
        same_group,
        cross_group,
        pairwise,
        overall,
        smallest_c1,
    })
}

/// Conditions (A)-(D) on the problem regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssumptionReport {
    /// `n >= C log(1/delta)`
    pub a: bool,
    /// `||mu_c||^2 >= C log(n/delta)`
    pub b: bool,
    /// `d >= C R+ n`
    pub c: bool,
    /// `d >= C n^2 log(n/delta)`
    pub d: bool,
    /// Largest `C` for which all four hold.
    pub largest_c: f64,
}

pub fn assumption_check(spec: &ProblemSpec, cfg: &DiagnosticsConfig) -> Result<AssumptionReport> {
    cfg.validate()?;
    let snr = snr_summary(spec)?;
    let n = spec.n() as f64;
    let d = spec.d() as f64;
    let core = norm_sq(&spec.mu_core);
    let log_n = (n / cfg.delta).ln();
    let ratios = [
        n / (1.0 / cfg.delta).ln(),
        core / log_n,
        d / (snr.r_plus * n),
        d / (n * n * log_n),
    ];
    let c = cfg.big_c;
    Ok(AssumptionReport {
        a: ratios[0] >= c,
        b: ratios[1] >= c,
        c: ratios[2] >= c,
        d: ratios[3] >= c,
        largest_c: ratios.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparabilityWitness {
    pub w_tilde: Classifier,
    /// `min_i <w~ / ||w~||, z_i>`
    pub min_margin: f64,
    pub separable: bool,
    /// `sqrt(d / n)`, the scale the margin is compared against.
    pub reference_scale: f64,
}

/// Witness direction built from the core blocks: `w~ = sum_i [z_{i,c} ; 0]`.
pub fn separability_witness(ds: &Dataset) -> Result<SeparabilityWitness> {
    if ds.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let d_core = ds.spec.d_core;
    let mut w = vec![0.0; ds.d()];
    for s in &ds.samples {
        for (wk, zk) in w[..d_core].iter_mut().zip(&s.z[..d_core]) {
            *wk += zk;
        }
    }
    let nrm = norm(&w);
    let min_margin = if nrm > 0.0 {
        ds.samples
            .iter()
            .map(|s| dot(&w, &s.z) / nrm)
            .fold(f64::INFINITY, f64::min)
    } else {
        0.0
    };
    Ok(SeparabilityWitness {
        w_tilde: Classifier::new(w),
        min_margin,
        separable: min_margin > 0.0,
        reference_scale: (ds.d() as f64 / ds.n() as f64).sqrt(),
    })
}

/// Derivative ratios at one iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioPoint {
    /// `max_{i,j} (l'_i / l'_j) (Delta_i / Delta_j)`
    pub normalized: f64,
    /// `max_{i,j} l'_i / l'_j`
    pub unnormalized: f64,
}

pub fn ratio_from_logs(log_lp: &[f64], groups: &[i8], deltas: &GroupDeltas) -> RatioPoint {
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    let mut raw_hi = f64::NEG_INFINITY;
    let mut raw_lo = f64::INFINITY;
    for (l, b) in log_lp.iter().zip(groups) {
        let v = l + deltas.get(*b).ln();
        hi = hi.max(v);
        lo = lo.min(v);
        raw_hi = raw_hi.max(*l);
        raw_lo = raw_lo.min(*l);
    }
    if log_lp.is_empty() {
        return RatioPoint {
            normalized: 1.0,
            unnormalized: 1.0,
        };
    }
    RatioPoint {
        normalized: (hi - lo).exp(),
        unnormalized: (raw_hi - raw_lo).exp(),
    }
}

/// Ratio series over a recorded per-sample `log l'` stream.
pub fn ratio_monitor(stream: &[Vec<f64>], groups: &[i8], deltas: &GroupDeltas) -> Vec<RatioPoint> {
    stream
        .iter()
        .map(|log_lp| ratio_from_logs(log_lp, groups, deltas))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginEquality {
    /// `(max - min) / mean` of the scaled margins.
    pub spread: f64,
    pub pass: bool,
}

pub fn margin_equality_check(
    ds: &Dataset,
    deltas: &GroupDeltas,
    w: &Classifier,
    tol: f64,
) -> Result<MarginEquality> {
    let m = scaled_margins(ds, deltas, w)?;
    let lo = m.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = m.iter().sum::<f64>() / m.len() as f64;
    let spread = if hi == lo { 0.0 } else { (hi - lo) / mean.abs() };
    Ok(MarginEquality {
        spread,
        pass: spread <= tol,
    })
}

/// Largest `c0` with `c0 L'_t <= L'_{t,b} / 2 + (R-/R+ - c1/C) L'_{t,-b}` for both `b`.
pub fn comparison_constant(
    log_lp_plus: f64,
    log_lp_minus: f64,
    r_ratio: f64,
    c1: f64,
    big_c: f64,
) -> f64 {
    let top = log_lp_plus.max(log_lp_minus);
    let p = (log_lp_plus - top).exp();
    let m = (log_lp_minus - top).exp();
    let k = r_ratio - c1 / big_c;
    let total = p + m;
    ((0.5 * p + k * m) / total).min((0.5 * m + k * p) / total)
}

/// One point of the correlation envelope overlay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopePoint {
    pub t: usize,
    /// Observed `<w_t / ||w_t||, nu_b>`, `b = +1, -1`.
    pub observed: [f64; 2],
    /// Predicted lower envelope from the cumulative derivative sums.
    pub envelope: [f64; 2],
    pub comparison_c0: f64,
}

/// Overlay of the correlation lower bound on a recorded trajectory:
/// `R+ / (c1 sqrt d) * (L_{0:t,b}/2 + (R-/R+ - c1/C) L_{0:t,-b}) / L_{0:t}`.
/// Constants come from `cfg`; nothing here is asserted.
pub fn correlation_envelope(
    traj: &Trajectory,
    spec: &ProblemSpec,
    cfg: &DiagnosticsConfig,
) -> Result<Vec<EnvelopePoint>> {
    let snr = snr_summary(spec)?;
    let d = spec.d() as f64;
    let scale = snr.r_plus / (cfg.c1 * d.sqrt());
    Ok(traj
        .records
        .iter()
        .filter(|r| r.norm_w > 0.0)
        .map(|r| {
            let top = r.log_cum_lp_plus.max(r.log_cum_lp_minus);
            let p = (r.log_cum_lp_plus - top).exp();
            let m = (r.log_cum_lp_minus - top).exp();
            let k = snr.ratio - cfg.c1 / cfg.big_c;
            EnvelopePoint {
                t: r.t,
                observed: [r.rho_plus / r.norm_w, r.rho_minus / r.norm_w],
                envelope: [
                    scale * (0.5 * p + k * m) / (p + m),
                    scale * (0.5 * m + k * p) / (p + m),
                ],
                comparison_c0: comparison_constant(
                    r.log_lp_plus,
                    r.log_lp_minus,
                    snr.ratio,
                    cfg.c1,
                    cfg.big_c,
                ),
            }
        })
        .collect())
}
