//! Generative-model types shared by every other module.
//!
//! Features are split into a core block and a spurious block. Conditional on
//! the label `y` and attribute `a`, a feature vector is isotropic Gaussian with
//! mean `[y * mu_core ; a * mu_spur]`. Everything downstream works with the
//! signed vectors `z = y x`, whose mean depends only on the group `b = y a`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm_sq};

/// How group membership of the training set is realized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplingMode {
    #[default]
    /// Exactly `n_plus` majority and `n_minus` minority samples.
    FixedCounts,
    /// Draw `y` with `P(y = +1) = pi_plus`, then `a` with `P(a = y | y) = p_agree`
    /// (keyed by the sign of `y`). `n_plus + n_minus` is the total sample size.
    Probabilistic {
        pi_plus: f64,
        p_agree_plus: f64,
        p_agree_minus: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub d_core: usize,
    pub d_spur: usize,
    pub mu_core: Vec<f64>,
    pub mu_spur: Vec<f64>,
    pub n_plus: usize,
    pub n_minus: usize,
    #[serde(default)]
    pub label_flip_rate: f64,
    #[serde(default)]
    pub sampling_mode: SamplingMode,
}

/// Signal-to-noise summary of a spec.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Snr {
    pub r_plus: f64,
    pub r_minus: f64,
    pub ratio: f64,
}

impl ProblemSpec {
    /// Builds a spec whose means live on the first coordinate of each block,
    /// with `||mu_core||^2 = R+ (1 + r) / 2` and `||mu_spur||^2 = R+ (1 - r) / 2`.
    pub fn aligned(
        d_core: usize,
        d_spur: usize,
        r_plus: f64,
        r_ratio: f64,
        n_plus: usize,
        n_minus: usize,
    ) -> Result<Self> {
        if !(-1.0..=1.0).contains(&r_ratio) {
            return Err(Error::InvalidSpec(format!(
                "R-/R+ target {r_ratio} outside [-1, 1]"
            )));
        }
        if d_core == 0 || d_spur == 0 {
            return Err(Error::InvalidSpec("block dimensions must be >= 1".into()));
        }
        let mut mu_core = vec![0.0; d_core];
        let mut mu_spur = vec![0.0; d_spur];
        mu_core[0] = (r_plus * (1.0 + r_ratio) / 2.0).max(0.0).sqrt();
        mu_spur[0] = (r_plus * (1.0 - r_ratio) / 2.0).max(0.0).sqrt();
        let spec = ProblemSpec {
            d_core,
            d_spur,
            mu_core,
            mu_spur,
            n_plus,
            n_minus,
            label_flip_rate: 0.0,
            sampling_mode: SamplingMode::FixedCounts,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn d(&self) -> usize {
        self.d_core + self.d_spur
    }

    pub fn n(&self) -> usize {
        self.n_plus + self.n_minus
    }

    /// Imbalance ratio `n_plus / n_minus`, if the minority group is nonempty.
    pub fn tau(&self) -> Option<f64> {
        (self.n_minus > 0).then(|| self.n_plus as f64 / self.n_minus as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_core == 0 || self.d_spur == 0 {
            return Err(Error::InvalidSpec("block dimensions must be >= 1".into()));
        }
        if self.mu_core.len() != self.d_core {
            return Err(Error::DimensionMismatch {
                what: "mu_core",
                expected: self.d_core,
                got: self.mu_core.len(),
            });
        }
        if self.mu_spur.len() != self.d_spur {
            return Err(Error::DimensionMismatch {
                what: "mu_spur",
                expected: self.d_spur,
                got: self.mu_spur.len(),
            });
        }
        if self.n() == 0 {
            return Err(Error::InvalidSpec("n_plus + n_minus must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.label_flip_rate) {
            return Err(Error::InvalidSpec(format!(
                "label_flip_rate {} outside [0, 1]",
                self.label_flip_rate
            )));
        }
        if self.mu_core.iter().chain(&self.mu_spur).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("means must be finite".into()));
        }
        if let SamplingMode::Probabilistic {
            pi_plus,
            p_agree_plus,
            p_agree_minus,
        } = self.sampling_mode
        {
            for (name, p) in [
                ("pi_plus", pi_plus),
                ("p_agree_plus", p_agree_plus),
                ("p_agree_minus", p_agree_minus),
            ] {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidSpec(format!("{name} = {p} outside [0, 1]")));
                }
            }
        }
        snr_summary(self)?;
        Ok(())
    }

    /// Stable 64-bit FNV-1a hash of the canonical JSON form.
    pub fn hash64(&self) -> u64 {
        let json = serde_json::to_string(self).expect("spec serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in json.bytes() {
            h ^= u64::from(byte);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

/// Weight vector of a linear classifier `x -> <w, x>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub w: Vec<f64>,
}

impl Classifier {
    pub fn new(w: Vec<f64>) -> Self {
        Classifier { w }
    }

    pub fn zeros(d: usize) -> Self {
        Classifier { w: vec![0.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm(&self.w)
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().all(|v| v.is_finite())
    }

    /// Unit-norm copy, or `ZeroClassifier` if `w = 0`.
    pub fn normalized(&self) -> Result<Classifier> {
        let nrm = self.norm();
        if nrm == 0.0 || !nrm.is_finite() {
            return Err(Error::ZeroClassifier);
        }
        Ok(Classifier {
            w: self.w.iter().map(|v| v / nrm).collect(),
        })
    }
}

/// One training or test example in signed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// `z = y x`
    pub z: Vec<f64>,
    pub b: i8,
    pub y: i8,
    pub a: i8,
    pub flipped: bool,
}

/// Group tag `b = y a`: `+1` when the attribute agrees with the label.
pub fn group_of(y: i8, a: i8) -> i8 {
    debug_assert!(y == 1 || y == -1);
    debug_assert!(a == 1 || a == -1);
    y * a
}

/// Group means of the signed vectors: `nu_pm = [mu_core ; +-mu_spur]`.
pub fn build_nu(spec: &ProblemSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    if spec.mu_core.len() != spec.d_core {
        return Err(Error::DimensionMismatch {
            what: "mu_core",
            expected: spec.d_core,
            got: spec.mu_core.len(),
        });
    }
    if spec.mu_spur.len() != spec.d_spur {
        return Err(Error::DimensionMismatch {
            what: "mu_spur",
            expected: spec.d_spur,
            got: spec.mu_spur.len(),
        });
    }
    let mut plus = spec.mu_core.clone();
    plus.extend_from_slice(&spec.mu_spur);
    let mut minus = spec.mu_core.clone();
    minus.extend(spec.mu_spur.iter().map(|v| -v));
    Ok((plus, minus))
}

pub fn snr_summary(spec: &ProblemSpec) -> Result<Snr> {
    let core = norm_sq(&spec.mu_core);
    let spur = norm_sq(&spec.mu_spur);
    let r_plus = core + spur;
    if r_plus <= 0.0 {
        return Err(Error::DegenerateModel);
    }
    let r_minus = core - spur;
    Ok(Snr {
        r_plus,
        r_minus,
        ratio: r_minus / r_plus,
    })
}

/// `<nu_+, nu_->`, equal to `R-` by construction.
pub fn nu_cross(nu_plus: &[f64], nu_minus: &[f64]) -> f64 {
    dot(nu_plus, nu_minus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec2(mu_c: [f64; 2], mu_s: [f64; 2]) -> ProblemSpec {
        ProblemSpec {
            d_core: 2,
            d_spur: 2,
            mu_core: mu_c.to_vec(),
            mu_spur: mu_s.to_vec(),
            n_plus: 1,
            n_minus: 1,
            label_flip_rate: 0.0,
            sampling_mode: SamplingMode::FixedCounts,
        }
    }

    #[test]
    fn build_nu_concatenates() {
        let s = spec2([1.0, 0.0], [2.0, 0.0]);
        let (p, m) = build_nu(&s).unwrap();
        assert_eq!(p, vec![1.0, 0.0, 2.0, 0.0]);
        assert_eq!(m, vec![1.0, 0.0, -2.0, 0.0]);
        let snr = snr_summary(&s).unwrap();
        assert_eq!(snr.r_plus, 5.0);
        assert_eq!(snr.r_minus, -3.0);
        assert_eq!(nu_cross(&p, &m), -3.0);
    }

    #[test]
    fn zero_spurious_mean_collapses_groups() {
        let s = spec2([1.5, -0.5], [0.0, 0.0]);
        let (p, m) = build_nu(&s).unwrap();
        assert_eq!(p, m);
        let snr = snr_summary(&s).unwrap();
        assert_eq!(snr.r_plus, snr.r_minus);
        assert_eq!(snr.ratio, 1.0);
    }

    #[test]
    fn fig2_style_means_have_requested_energy() {
        let d: f64 = 256.0;
        let r_plus = d.powf(0.6) / 4.0;
        let s = ProblemSpec::aligned(128, 128, r_plus, 0.0, 5, 1).unwrap();
        let (p, m) = build_nu(&s).unwrap();
        assert!((r_plus - 6.964).abs() < 1e-3);
        assert!((norm_sq(&p) - r_plus).abs() < 1e-12);
        assert!((norm_sq(&m) - r_plus).abs() < 1e-12);
        assert!(nu_cross(&p, &m).abs() < 1e-12);
    }

    #[test]
    fn group_of_table() {
        assert_eq!(group_of(1, 1), 1);
        assert_eq!(group_of(1, -1), -1);
        assert_eq!(group_of(-1, -1), 1);
        assert_eq!(group_of(-1, 1), -1);
        for y in [-1, 1] {
            for a in [-1, 1] {
                assert_eq!(group_of(-y, -a), group_of(y, a));
            }
        }
    }

    #[test]
    fn snr_summary_cases() {
        let s = spec2([1.0, 0.0], [1.0, 0.0]);
        assert_eq!(snr_summary(&s).unwrap().ratio, 0.0);
        let s = spec2([1.0, 0.0], [3f64.sqrt(), 0.0]);
        let snr = snr_summary(&s).unwrap();
        assert!((snr.r_plus - 4.0).abs() < 1e-12);
        assert!((snr.r_minus + 2.0).abs() < 1e-12);
        assert!((snr.ratio + 0.5).abs() < 1e-12);
        let s = spec2([0.0, 0.0], [0.0, 0.0]);
        assert!(matches!(snr_summary(&s), Err(Error::DegenerateModel)));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut s = spec2([1.0, 0.0], [1.0, 0.0]);
        s.mu_spur.push(0.0);
        assert!(matches!(build_nu(&s), Err(Error::DimensionMismatch { .. })));
        assert!(s.validate().is_err());
    }

    proptest! {
        #[test]
        fn nu_norms_match_snr(
            core in prop::collection::vec(-5.0f64..5.0, 1..6),
            spur in prop::collection::vec(-5.0f64..5.0, 1..6),
        ) {
            let s = ProblemSpec {
                d_core: core.len(),
                d_spur: spur.len(),
                mu_core: core,
                mu_spur: spur,
                n_plus: 1,
                n_minus: 0,
                label_flip_rate: 0.0,
                sampling_mode: SamplingMode::FixedCounts,
            };
            prop_assume!(snr_summary(&s).is_ok());
            let snr = snr_summary(&s).unwrap();
            let (p, m) = build_nu(&s).unwrap();
            let tol = 1e-12 * snr.r_plus.max(1.0);
            prop_assert!((norm_sq(&p) - snr.r_plus).abs() < tol);
            prop_assert!((norm_sq(&m) - snr.r_plus).abs() < tol);
            prop_assert!((nu_cross(&p, &m) - snr.r_minus).abs() < tol);
            prop_assert!(snr.r_minus.abs() <= snr.r_plus + tol);
        }
    }
}
