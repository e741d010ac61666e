//! Cost-sensitive hard-margin SVM without intercept:
//!
//! ```text
//! minimize ||w||  subject to  Delta_{b_i} <z_i, w> >= 1  for all i
//! ```
//!
//! Solved through its dual, `max sum(alpha) - alpha' K alpha / 2` over
//! `alpha >= 0`, with `K_ij = Delta_i Delta_j <z_i, z_j>`, by exact coordinate
//! ascent on a cached Gram matrix. The primal is recovered as
//! `w = sum_i alpha_i Delta_i z_i`.
//!
//! When every constraint is active the solution coincides with the
//! minimum-norm interpolator of the targets `1 / Delta_{b_i}`, which has a
//! closed form through the (unscaled) Gram matrix.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm};
use crate::loss::GroupDeltas;
use crate::model::Classifier;

/// Condition estimate above which the Gram matrix is treated as singular.
pub const GRAM_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SvmSolver {
    DualCd,
    MinNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmOptions {
    /// Stop when the largest KKT violation (on unit-target margins) is below this.
    pub tol: f64,
    pub max_passes: usize,
    /// Dual growth ceiling is `ceiling_factor * n`.
    pub ceiling_factor: f64,
    /// Try the closed-form interpolator first and accept it if all `alpha >= 0`.
    pub min_norm_fast_path: bool,
}

impl Default for SvmOptions {
    fn default() -> Self {
        SvmOptions {
            tol: 1e-10,
            max_passes: 100_000,
            ceiling_factor: 1e12,
            min_norm_fast_path: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SvmSolution {
    pub w: Classifier,
    pub alpha: Vec<f64>,
    pub kkt_max_violation: f64,
    pub active_set: Vec<bool>,
    pub solver_used: SvmSolver,
    pub passes: usize,
}

impl SvmSolution {
    /// Dual objective `sum(alpha) - ||w||^2 / 2`; equals `||w||^2 / 2` at optimum.
    pub fn dual_objective(&self) -> f64 {
        let nw = self.w.norm();
        self.alpha.iter().sum::<f64>() - 0.5 * nw * nw
    }

    pub fn primal_objective(&self) -> f64 {
        let nw = self.w.norm();
        0.5 * nw * nw
    }

    pub fn all_active(&self) -> bool {
        self.active_set.iter().all(|a| *a)
    }
}

/// Certificate of the four KKT conditions for a candidate solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktReport {
    /// `max_i max(0, 1 - Delta_i <z_i, w>)`
    pub primal: f64,
    /// `max_i max(0, -alpha_i)`
    pub dual: f64,
    /// `max_i alpha_i |Delta_i <z_i, w> - 1|`
    pub slackness: f64,
    /// `||w - sum alpha_i Delta_i z_i|| / max(1, ||w||)`
    pub stationarity: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.primal
            .max(self.dual)
            .max(self.slackness)
            .max(self.stationarity)
    }
}

fn scale_of(ds: &Dataset, deltas: &GroupDeltas) -> Vec<f64> {
    ds.samples.iter().map(|s| deltas.get(s.b)).collect()
}

fn check_inputs(ds: &Dataset, deltas: &GroupDeltas) -> Result<()> {
    if ds.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(deltas.plus > 0.0 && deltas.minus > 0.0) {
        return Err(Error::InvalidArgument("Delta must be positive".into()));
    }
    Ok(())
}

/// Unscaled Gram matrix `<z_i, z_j>`, row-major.
pub fn gram_matrix(ds: &Dataset) -> Vec<f64> {
    let n = ds.n();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if j < i {
                        0.0
                    } else {
                        dot(&ds.samples[i].z, &ds.samples[j].z)
                    }
                })
                .collect()
        })
        .collect();
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            g[i * n + j] = rows[i][j];
            g[j * n + i] = rows[i][j];
        }
    }
    g
}

/// `Delta_{b_i} <z_i, w / ||w||>` for every sample.
pub fn scaled_margins(ds: &Dataset, deltas: &GroupDeltas, w: &Classifier) -> Result<Vec<f64>> {
    let nrm = w.norm();
    if nrm == 0.0 {
        return Err(Error::ZeroClassifier);
    }
    Ok(ds
        .samples
        .par_iter()
        .map(|s| deltas.get(s.b) * dot(&s.z, &w.w) / nrm)
        .collect())
}

/// KKT certificate of `(w, alpha)` for the cost-sensitive program.
pub fn kkt_report(ds: &Dataset, deltas: &GroupDeltas, w: &Classifier, alpha: &[f64]) -> KktReport {
    let scale = scale_of(ds, deltas);
    let margins: Vec<f64> = ds
        .samples
        .par_iter()
        .zip(&scale)
        .map(|(s, k)| k * dot(&s.z, &w.w))
        .collect();
    let mut recon = vec![0.0; ds.d()];
    for ((s, k), a) in ds.samples.iter().zip(&scale).zip(alpha) {
        axpy(a * k, &s.z, &mut recon);
    }
    let diff: Vec<f64> = recon.iter().zip(&w.w).map(|(a, b)| a - b).collect();
    let mut rep = KktReport {
        primal: 0.0,
        dual: 0.0,
        slackness: 0.0,
        stationarity: norm(&diff) / w.norm().max(1.0),
    };
    for (m, a) in margins.iter().zip(alpha) {
        rep.primal = rep.primal.max(1.0 - m);
        rep.dual = rep.dual.max(-a);
        rep.slackness = rep.slackness.max(a * (m - 1.0).abs());
    }
    rep
}

fn finish(
    ds: &Dataset,
    deltas: &GroupDeltas,
    alpha: Vec<f64>,
    solver_used: SvmSolver,
    passes: usize,
    tol: f64,
) -> SvmSolution {
    let scale = scale_of(ds, deltas);
    let mut w = vec![0.0; ds.d()];
    for ((s, k), a) in ds.samples.iter().zip(&scale).zip(&alpha) {
        if *a != 0.0 {
            axpy(a * k, &s.z, &mut w);
        }
    }
    let w = Classifier::new(w);
    let margins: Vec<f64> = ds
        .samples
        .iter()
        .zip(&scale)
        .map(|(s, k)| k * dot(&s.z, &w.w))
        .collect();
    let active_tol = tol.sqrt().max(1e-6);
    let mut violation: f64 = 0.0;
    let mut active_set = Vec::with_capacity(margins.len());
    for (m, a) in margins.iter().zip(&alpha) {
        violation = violation.max((1.0 - m).max(0.0));
        if *a > 0.0 {
            violation = violation.max((m - 1.0).abs());
        }
        active_set.push((m - 1.0).abs() <= active_tol);
    }
    SvmSolution {
        w,
        alpha,
        kkt_max_violation: violation,
        active_set,
        solver_used,
        passes,
    }
}

/// Solves the cost-sensitive SVM by dual coordinate ascent.
pub fn solve_cs_svm(ds: &Dataset, deltas: &GroupDeltas, opts: &SvmOptions) -> Result<SvmSolution> {
    check_inputs(ds, deltas)?;
    let n = ds.n();

    if opts.min_norm_fast_path {
        if let Ok((_, coef)) = min_norm_coefficients(ds, deltas) {
            // coef_i = alpha_i Delta_i
            let alpha: Vec<f64> = ds
                .samples
                .iter()
                .zip(&coef)
                .map(|(s, c)| c / deltas.get(s.b))
                .collect();
            if alpha.iter().all(|a| *a >= 0.0) {
                let sol = finish(ds, deltas, alpha, SvmSolver::MinNorm, 0, opts.tol);
                if sol.kkt_max_violation <= opts.tol.max(1e-9) {
                    return Ok(sol);
                }
            }
        }
    }

    let scale = scale_of(ds, deltas);
    let gram = gram_matrix(ds);
    let k = |i: usize, j: usize| scale[i] * scale[j] * gram[i * n + j];
    for i in 0..n {
        if !(k(i, i) > 0.0) {
            return Err(Error::NonSeparable { ceiling: 0.0 });
        }
    }
    let ceiling = opts.ceiling_factor * n as f64;

    let mut alpha = vec![0.0; n];
    // ka[i] = (K alpha)_i = Delta_i <z_i, w>
    let mut ka = vec![0.0; n];
    let mut passes = 0;
    let mut violation = f64::INFINITY;
    while passes < opts.max_passes {
        passes += 1;
        for i in 0..n {
            let kii = k(i, i);
            let new = (alpha[i] + (1.0 - ka[i]) / kii).max(0.0);
            let step = new - alpha[i];
            if step != 0.0 {
                alpha[i] = new;
                for (j, kaj) in ka.iter_mut().enumerate() {
                    *kaj += step * k(i, j);
                }
            }
        }
        if passes % 64 == 0 {
            // refresh to shed accumulated rounding
            for (i, kai) in ka.iter_mut().enumerate() {
                *kai = (0..n).map(|j| k(i, j) * alpha[j]).sum();
            }
        }
        let total: f64 = alpha.iter().sum();
        if !total.is_finite() || total > ceiling {
            return Err(Error::NonSeparable { ceiling });
        }
        violation = alpha
            .iter()
            .zip(&ka)
            .map(|(a, m)| {
                if *a > 0.0 {
                    (m - 1.0).abs()
                } else {
                    (1.0 - m).max(0.0)
                }
            })
            .fold(0.0, f64::max);
        if violation <= opts.tol {
            break;
        }
    }
    let sol = finish(ds, deltas, alpha, SvmSolver::DualCd, passes, opts.tol);
    if violation > opts.tol && sol.kkt_max_violation > opts.tol {
        return Err(Error::Timeout {
            passes,
            violation: sol.kkt_max_violation,
            best: Box::new(sol),
        });
    }
    Ok(sol)
}

/// Solves `G c = u` with `u_i = 1 / Delta_{b_i}`; returns `(condition, c)`.
fn min_norm_coefficients(ds: &Dataset, deltas: &GroupDeltas) -> Result<(f64, Vec<f64>)> {
    check_inputs(ds, deltas)?;
    let n = ds.n();
    let g = DMatrix::from_row_slice(n, n, &gram_matrix(ds));
    let eig = g.clone().symmetric_eigenvalues();
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().copied().fold(0.0, f64::max);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= GRAM_CONDITION_LIMIT) {
        return Err(Error::RankDeficient { condition });
    }
    let chol = g
        .cholesky()
        .ok_or(Error::RankDeficient { condition })?;
    let u = DVector::from_iterator(n, ds.samples.iter().map(|s| 1.0 / deltas.get(s.b)));
    let c = chol.solve(&u);
    Ok((condition, c.iter().copied().collect()))
}

/// Minimum-norm `w` with `<z_i, w> = 1 / Delta_{b_i}` for every sample.
pub fn min_norm_interpolator(ds: &Dataset, deltas: &GroupDeltas) -> Result<Classifier> {
    let (_, coef) = min_norm_coefficients(ds, deltas)?;
    let mut w = vec![0.0; ds.d()];
    for (s, c) in ds.samples.iter().zip(&coef) {
        axpy(*c, &s.z, &mut w);
    }
    Ok(Classifier::new(w))
}

/// Largest sample count accepted by [`exhaustive_cs_svm`].
pub const EXHAUSTIVE_MAX_N: usize = 16;

/// Reference solver by enumeration of active sets.
///
/// For each nonempty subset `S` the minimum-norm `w` meeting the constraints
/// of `S` with equality is formed; the shortest one that satisfies every
/// constraint is the optimum. Exponential in `n`, for small checks only.
pub fn exhaustive_cs_svm(ds: &Dataset, deltas: &GroupDeltas) -> Result<Classifier> {
    check_inputs(ds, deltas)?;
    let n = ds.n();
    if n > EXHAUSTIVE_MAX_N {
        return Err(Error::InvalidArgument(format!(
            "exhaustive solver supports n <= {EXHAUSTIVE_MAX_N}, got {n}"
        )));
    }
    let g = gram_matrix(ds);
    let dl: Vec<f64> = ds.samples.iter().map(|s| deltas.get(s.b)).collect();
    let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
    for mask in 1u32..(1u32 << n) {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let k = idx.len();
        let gs = DMatrix::from_fn(k, k, |a, b| g[idx[a] * n + idx[b]]);
        let u = DVector::from_iterator(k, idx.iter().map(|&i| 1.0 / dl[i]));
        let Some(chol) = gs.cholesky() else { continue };
        let c = chol.solve(&u);
        let sq = c.dot(&u);
        if !sq.is_finite() || best.as_ref().is_some_and(|b| b.0 <= sq) {
            continue;
        }
        let feasible = (0..n).all(|j| {
            let m: f64 = idx.iter().zip(c.iter()).map(|(&i, ci)| g[j * n + i] * ci).sum();
            dl[j] * m >= 1.0 - 1e-9
        });
        if feasible {
            best = Some((sq, idx, c.iter().copied().collect()));
        }
    }
    let (_, idx, c) = best.ok_or(Error::NonSeparable { ceiling: f64::INFINITY })?;
    let mut w = vec![0.0; ds.d()];
    for (&i, ci) in idx.iter().zip(&c) {
        axpy(*ci, &ds.samples[i].z, &mut w);
    }
    Ok(Classifier::new(w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::sample_dataset;
    use crate::model::ProblemSpec;
    use approx::assert_relative_eq;

    fn hand(rows: Vec<(Vec<f64>, i8)>) -> Dataset {
        let d = rows[0].0.len();
        let spec = ProblemSpec::aligned(d / 2, d - d / 2, 1.0, 0.0, 1, 1).unwrap();
        Dataset::from_signed(spec, rows).unwrap()
    }

    #[test]
    fn exhaustive_matches_two_point_example() {
        let ds = hand(vec![(vec![1.0, 0.0], 1), (vec![3.0, 0.1], 1)]);
        let w = exhaustive_cs_svm(&ds, &GroupDeltas::ONES).unwrap();
        assert_relative_eq!(w.w[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(w.w[1], 0.0, epsilon = 1e-12);
        let bad = hand(vec![(vec![1.0, 0.0], 1), (vec![-1.0, 0.0], 1)]);
        assert!(matches!(
            exhaustive_cs_svm(&bad, &GroupDeltas::ONES),
            Err(Error::NonSeparable { .. })
        ));
    }

    #[test]
    fn two_orthogonal_points() {
        let ds = hand(vec![(vec![1.0, 0.0], 1), (vec![0.0, 1.0], 1)]);
        let sol = solve_cs_svm(&ds, &GroupDeltas::ONES, &SvmOptions::default()).unwrap();
        assert_relative_eq!(sol.w.w[0], 1.0, epsilon = 1e-10);
        assert_relative_eq!(sol.w.w[1], 1.0, epsilon = 1e-10);
        assert!(sol.all_active());
        let m = scaled_margins(&ds, &GroupDeltas::ONES, &sol.w).unwrap();
        assert_relative_eq!(m[0], 1.0 / 2f64.sqrt(), epsilon = 1e-10);
        assert_relative_eq!(m[1], m[0], epsilon = 1e-12);
    }

    #[test]
    fn single_scaled_point() {
        let ds = hand(vec![(vec![2.0, 0.0], 1)]);
        let deltas = GroupDeltas {
            plus: 0.5,
            minus: 1.0,
        };
        let sol = solve_cs_svm(&ds, &deltas, &SvmOptions::default()).unwrap();
        assert_relative_eq!(sol.w.w[0], 1.0, epsilon = 1e-12);
        assert_eq!(sol.w.w[1], 0.0);
        let mn = min_norm_interpolator(&ds, &deltas).unwrap();
        assert_relative_eq!(mn.w[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn identity_gram_interpolator() {
        let ds = hand(vec![
            (vec![1.0, 0.0, 0.0], 1),
            (vec![0.0, 1.0, 0.0], -1),
            (vec![0.0, 0.0, 1.0], 1),
        ]);
        let w = min_norm_interpolator(&ds, &GroupDeltas::ONES).unwrap();
        for v in &w.w {
            assert_relative_eq!(*v, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn inactive_constraint_gets_zero_alpha() {
        // second point far beyond the margin of the first
        let ds = hand(vec![(vec![1.0, 0.0], 1), (vec![3.0, 0.1], 1)]);
        let sol = solve_cs_svm(&ds, &GroupDeltas::ONES, &SvmOptions::default()).unwrap();
        assert_eq!(sol.alpha[1], 0.0);
        assert!(sol.active_set[0] && !sol.active_set[1]);
        let rep = kkt_report(&ds, &GroupDeltas::ONES, &sol.w, &sol.alpha);
        assert!(rep.max() < 1e-9, "{rep:?}");
    }

    #[test]
    fn non_separable_is_detected() {
        let ds = hand(vec![(vec![1.0, 0.0], 1), (vec![-1.0, 0.0], 1)]);
        // the dual grows linearly here, so use a low ceiling
        let opts = SvmOptions {
            ceiling_factor: 1e3,
            ..SvmOptions::default()
        };
        assert!(matches!(
            solve_cs_svm(&ds, &GroupDeltas::ONES, &opts),
            Err(Error::NonSeparable { .. })
        ));
    }

    #[test]
    fn timeout_carries_best_iterate() {
        let ds = hand(vec![(vec![1.0, 0.2], 1), (vec![0.9, 0.3], 1), (vec![0.2, 1.0], 1)]);
        let opts = SvmOptions {
            max_passes: 1,
            tol: 1e-14,
            ..SvmOptions::default()
        };
        match solve_cs_svm(&ds, &GroupDeltas::ONES, &opts) {
            Err(Error::Timeout { best, passes, .. }) => {
                assert_eq!(passes, 1);
                assert_eq!(best.alpha.len(), 3);
            }
            other => panic!("expected timeout, got {other:?}"),
        }
    }

    #[test]
    fn rank_deficient_gram() {
        let ds = hand(vec![(vec![1.0, 1.0], 1), (vec![2.0, 2.0], 1)]);
        assert!(matches!(
            min_norm_interpolator(&ds, &GroupDeltas::ONES),
            Err(Error::RankDeficient { .. })
        ));
        assert!(scaled_margins(&ds, &GroupDeltas::ONES, &Classifier::zeros(2)).is_err());
    }

    #[test]
    fn common_delta_scaling_rescales_solution() {
        let spec = ProblemSpec::aligned(15, 15, 9.0, 0.0, 6, 2).unwrap();
        let ds = sample_dataset(&spec, 8).unwrap();
        let deltas = GroupDeltas {
            plus: 0.75,
            minus: 0.25,
        };
        let opts = SvmOptions {
            tol: 1e-13,
            ..SvmOptions::default()
        };
        let base = solve_cs_svm(&ds, &deltas, &opts).unwrap();
        for kappa in [0.5, 4.0] {
            let sol = solve_cs_svm(&ds, &deltas.scaled(kappa), &opts).unwrap();
            for (a, b) in sol.w.w.iter().zip(&base.w.w) {
                assert_relative_eq!(*a, b / kappa, max_relative = 1e-9, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn fast_path_agrees_with_coordinate_ascent() {
        let spec = ProblemSpec::aligned(100, 100, 6.0, 0.0, 8, 2).unwrap();
        let ds = sample_dataset(&spec, 4).unwrap();
        let deltas = GroupDeltas {
            plus: 0.8,
            minus: 0.2,
        };
        let cd = solve_cs_svm(&ds, &deltas, &SvmOptions::default()).unwrap();
        let fast = solve_cs_svm(
            &ds,
            &deltas,
            &SvmOptions {
                min_norm_fast_path: true,
                ..SvmOptions::default()
            },
        )
        .unwrap();
        assert_eq!(cd.solver_used, SvmSolver::DualCd);
        assert_eq!(fast.solver_used, SvmSolver::MinNorm);
        let diff: Vec<f64> = cd.w.w.iter().zip(&fast.w.w).map(|(a, b)| a - b).collect();
        assert!(norm(&diff) / cd.w.norm() < 1e-8);
    }
}
