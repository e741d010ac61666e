//! Worst-group error: closed form, Monte Carlo cross-check and the bound
//! evaluators.
//!
//! For a test point from group `b`, `<w, z>` is Gaussian with mean `<w, nu_b>`
//! and variance `||w||^2`, so the group error is `Q(<w/||w||, nu_b>)`.
//!
//! Bound evaluators take their absolute constants explicitly. Their outputs
//! depend on those constants and are labelled as such in reports.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::data::{sample_test_point, RngStream, TEST_STREAM};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::model::{build_nu, Classifier, ProblemSpec};
use crate::special::erfc;

/// Gaussian tail `Q(x) = P(N(0,1) > x) = erfc(x / sqrt 2) / 2`.
pub fn q_function(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::NotANumber("q_function argument"));
    }
    Ok(0.5 * erfc(x * std::f64::consts::FRAC_1_SQRT_2))
}

fn q(x: f64) -> f64 {
    0.5 * erfc(x * std::f64::consts::FRAC_1_SQRT_2)
}

/// High-precision `(x, Q(x))` reference grid shipped with the crate.
/// Grid on which the Q-function is certified against the reference table.
pub const Q_FIXTURE_GRID: [f64; 9] = [-8.0, -4.0, -1.0, 0.0, 0.5, 1.0, 2.0, 4.0, 8.0];
pub const Q_FIXTURE_TOLERANCE: f64 = 1e-10;

pub const Q_REFERENCE_TABLE: &str = include_str!("../data/q_reference.csv");

/// Parses [`Q_REFERENCE_TABLE`].
pub fn q_reference() -> Vec<(f64, f64)> {
    Q_REFERENCE_TABLE
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("x,") && !l.trim().is_empty())
        .map(|l| {
            let (x, v) = l.split_once(',').expect("two columns");
            (x.parse().expect("x"), v.parse().expect("q"))
        })
        .collect()
}

/// Largest absolute deviation of [`q_function`] from the reference grid, over
/// the points in `xs` (all grid points when `xs` is empty).
pub fn q_fixture_max_error(xs: &[f64]) -> f64 {
    q_reference()
        .into_iter()
        .filter(|(x, _)| xs.is_empty() || xs.contains(x))
        .map(|(x, want)| (q(x) - want).abs())
        .fold(0.0, f64::max)
}

/// Monte Carlo estimate of a group error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub err: f64,
    /// `3 sqrt(p (1 - p) / m)`
    pub radius: f64,
    pub draws: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McReport {
    pub plus: McEstimate,
    pub minus: McEstimate,
}

impl McReport {
    pub fn worst(&self) -> McEstimate {
        if self.plus.err >= self.minus.err {
            self.plus
        } else {
            self.minus
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub corr_plus: f64,
    pub corr_minus: f64,
    pub err_plus: f64,
    pub err_minus: f64,
    pub wst_error: f64,
    pub mc: Option<McReport>,
    /// Named bound values; all depend on user-supplied absolute constants.
    pub bound_evals: BTreeMap<String, f64>,
}

/// Analytic per-group and worst-group error of `w`.
pub fn worst_group_error(w: &Classifier, nu_plus: &[f64], nu_minus: &[f64]) -> Result<ErrorReport> {
    if w.dim() != nu_plus.len() || w.dim() != nu_minus.len() {
        return Err(Error::DimensionMismatch {
            what: "classifier",
            expected: nu_plus.len(),
            got: w.dim(),
        });
    }
    let unit = w.normalized()?;
    let corr_plus = dot(&unit.w, nu_plus);
    let corr_minus = dot(&unit.w, nu_minus);
    let err_plus = q(corr_plus);
    let err_minus = q(corr_minus);
    Ok(ErrorReport {
        corr_plus,
        corr_minus,
        err_plus,
        err_minus,
        wst_error: err_plus.max(err_minus),
        mc: None,
        bound_evals: BTreeMap::new(),
    })
}

fn estimate(errors: usize, m: usize) -> McEstimate {
    let p = errors as f64 / m as f64;
    McEstimate {
        err: p,
        radius: 3.0 * (p * (1.0 - p) / m as f64).sqrt(),
        draws: m,
    }
}

/// Fraction of `m_per_group` fresh test vectors per group with `<w, z> < 0`.
///
/// Draws full `d`-dimensional vectors; group `+1` uses stream
/// `TEST_STREAM`, group `-1` uses `TEST_STREAM + 1`.
pub fn monte_carlo_error(
    w: &Classifier,
    spec: &ProblemSpec,
    m_per_group: usize,
    seed: u64,
) -> Result<McReport> {
    if m_per_group < 100 {
        return Err(Error::InvalidArgument(format!(
            "m_per_group must be >= 100, got {m_per_group}"
        )));
    }
    if w.dim() != spec.d() {
        return Err(Error::DimensionMismatch {
            what: "classifier",
            expected: spec.d(),
            got: w.dim(),
        });
    }
    let group = |b: i8, stream: u64| -> Result<McEstimate> {
        let mut rng = RngStream::new(seed, stream);
        let mut errors = 0;
        for _ in 0..m_per_group {
            let s = sample_test_point(spec, b, &mut rng)?;
            if dot(&w.w, &s.z) < 0.0 {
                errors += 1;
            }
        }
        Ok(estimate(errors, m_per_group))
    };
    Ok(McReport {
        plus: group(1, TEST_STREAM)?,
        minus: group(-1, TEST_STREAM + 1)?,
    })
}

/// Monte Carlo estimate drawing only the projection `<w, q> ~ N(0, ||w||^2)`.
///
/// Exact in distribution and `O(m)` instead of `O(m d)`; used by sweeps where
/// full test vectors at `d = 16384` would dominate the run time.
pub fn monte_carlo_error_projected(
    w: &Classifier,
    spec: &ProblemSpec,
    m_per_group: usize,
    seed: u64,
) -> Result<McReport> {
    if m_per_group < 100 {
        return Err(Error::InvalidArgument(format!(
            "m_per_group must be >= 100, got {m_per_group}"
        )));
    }
    let (nu_plus, nu_minus) = build_nu(spec)?;
    let nrm = w.norm();
    if nrm == 0.0 {
        return Err(Error::ZeroClassifier);
    }
    let group = |nu: &[f64], stream: u64| {
        let mean = dot(&w.w, nu);
        let mut rng = RngStream::new(seed, stream);
        let errors = (0..m_per_group)
            .filter(|_| mean + nrm * rng.normal() < 0.0)
            .count();
        estimate(errors, m_per_group)
    };
    Ok(McReport {
        plus: group(&nu_plus, TEST_STREAM + 2),
        minus: group(&nu_minus, TEST_STREAM + 3),
    })
}

/// `Q(c R+ / sqrt d)`.
pub fn eval_vs_upper_bound(r_plus: f64, d: f64, c: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::InvalidArgument(format!("d must be > 0, got {d}")));
    }
    q_function(c * r_plus / d.sqrt())
}

/// `Q(c R+ sqrt(n/d) (1/tau + R-/R+ + c1 sqrt(log(n/delta) / R+)))`.
#[allow(clippy::too_many_arguments)]
pub fn eval_la_lower_bound(
    r_plus: f64,
    r_minus: f64,
    n: f64,
    d: f64,
    tau: f64,
    delta: f64,
    c: f64,
    c1: f64,
) -> Result<f64> {
    if !(r_plus > 0.0) {
        return Err(Error::InvalidArgument(format!("R+ must be > 0, got {r_plus}")));
    }
    if !(tau >= 1.0) {
        return Err(Error::InvalidArgument(format!("tau must be >= 1, got {tau}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must be in (0,1), got {delta}")));
    }
    if !(d > 0.0 && n > 0.0) {
        return Err(Error::InvalidArgument("n and d must be > 0".into()));
    }
    let inner = 1.0 / tau + r_minus / r_plus + c1 * ((n / delta).ln() / r_plus).sqrt();
    q_function(c * r_plus * (n / d).sqrt() * inner)
}

/// `min(1, xi + Q(c R+ / sqrt d))`.
pub fn eval_benign_bound(xi: f64, r_plus: f64, d: f64, c: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&xi) {
        return Err(Error::InvalidArgument(format!("xi must be in [0,1), got {xi}")));
    }
    Ok((xi + eval_vs_upper_bound(r_plus, d, c)?).min(1.0))
}
