//! TOML configuration. Every section falls back to the library defaults and
//! unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use vslab::data::split_counts;
use vslab::diagnostics::DiagnosticsConfig;
use vslab::experiments::{LossConfig, LossKind, RPlusRule, SweepGrid, PRESET_N, PRESET_TAU};
use vslab::loss::{LossShape, VsLossParams, DEFAULT_IOTA_SCALE};
use vslab::{GdConfig, ProblemSpec, SvmOptions};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_D: usize = 1024;
pub const DEFAULT_OUT: &str = "out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub d: usize,
    /// Core block size; `ceil(d / 2)` when absent.
    pub d_core: Option<usize>,
    pub n: usize,
    /// Imbalance ratio used to split `n` when `n_minus` is absent.
    pub tau: f64,
    pub n_minus: Option<usize>,
    /// Overrides `r_plus_rule` when set.
    pub r_plus: Option<f64>,
    pub r_plus_rule: RPlusRule,
    pub r_ratio: f64,
    pub label_flip_rate: f64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            d: DEFAULT_D,
            d_core: None,
            n: PRESET_N,
            tau: PRESET_TAU,
            n_minus: None,
            r_plus: None,
            r_plus_rule: RPlusRule::default(),
            r_ratio: 0.0,
            label_flip_rate: 0.0,
        }
    }
}

impl ProblemConfig {
    pub fn to_spec(&self) -> vslab::Result<ProblemSpec> {
        let (n_plus, n_minus) = match self.n_minus {
            Some(m) if m < self.n => (self.n - m, m),
            Some(m) => {
                return Err(vslab::Error::InvalidSpec(format!(
                    "n_minus = {m} must be below n = {}",
                    self.n
                )))
            }
            None => split_counts(self.n, self.tau)?,
        };
        let d_core = self.d_core.unwrap_or(self.d.div_ceil(2));
        if d_core == 0 || d_core >= self.d {
            return Err(vslab::Error::InvalidSpec(format!(
                "d_core = {d_core} must lie in [1, d)"
            )));
        }
        let r_plus = self.r_plus.unwrap_or_else(|| self.r_plus_rule.r_plus(self.d));
        let mut spec =
            ProblemSpec::aligned(d_core, self.d - d_core, r_plus, self.r_ratio, n_plus, n_minus)?;
        spec.label_flip_rate = self.label_flip_rate;
        spec.validate()?;
        Ok(spec)
    }
}

/// How the loss hyperparameters are chosen for `kind = "vs"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Tuning {
    /// `Delta_b = n_b / n`, `omega = 1`, `iota_b = -2 log Delta_b`.
    #[default]
    Defaults,
    /// All parameters neutral: `Delta = omega = 1`, `iota = 0`.
    Neutral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub kind: LossKind,
    /// Defaults to exponential for vs/la and logistic for ce.
    pub shape: Option<LossShape>,
    pub tuning: Tuning,
    pub iota_scale: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        LossSection {
            kind: LossKind::Vs,
            shape: None,
            tuning: Tuning::Defaults,
            iota_scale: DEFAULT_IOTA_SCALE,
        }
    }
}

impl LossSection {
    pub fn params(&self, n_plus: usize, n_minus: usize) -> vslab::Result<VsLossParams> {
        let mut cfg = LossConfig::new(self.kind);
        if let Some(shape) = self.shape {
            cfg.shape = shape;
        }
        cfg.iota_scale = self.iota_scale;
        match (self.kind, self.tuning) {
            (LossKind::Vs, Tuning::Neutral) => Ok(VsLossParams::neutral(cfg.shape)),
            _ => cfg.params(n_plus, n_minus),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub workers: usize,
    pub problem: ProblemConfig,
    pub loss: LossSection,
    pub gd: GdConfig,
    pub svm: SvmOptions,
    pub diagnostics: DiagnosticsConfig,
    pub sweep: Option<SweepGrid>,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            seed: DEFAULT_SEED,
            out: PathBuf::from(DEFAULT_OUT),
            workers: 1,
            problem: ProblemConfig::default(),
            loss: LossSection::default(),
            gd: GdConfig::default(),
            svm: SvmOptions::default(),
            diagnostics: DiagnosticsConfig::default(),
            sweep: None,
        }
    }
}

impl CliConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))
    }

    /// Checks every section that does not depend on the chosen command.
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.workers == 0 {
            bail!("workers must be at least 1");
        }
        self.problem.to_spec().context("[problem]")?;
        self.gd.validate().context("[gd]")?;
        self.diagnostics.validate().context("[diagnostics]")?;
        if let Some(grid) = &self.sweep {
            grid.validate().context("[sweep]")?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_problem_is_preset_shaped() {
        let spec = ProblemConfig::default().to_spec().unwrap();
        assert_eq!(spec.d(), DEFAULT_D);
        assert_eq!((spec.n_plus, spec.n_minus), (196, 4));
        assert_eq!(spec.d_core, DEFAULT_D / 2);
    }

    #[test]
    fn explicit_minority_count_wins_over_tau() {
        let p = ProblemConfig {
            n_minus: Some(7),
            ..ProblemConfig::default()
        };
        let spec = p.to_spec().unwrap();
        assert_eq!((spec.n_plus, spec.n_minus), (193, 7));
        let bad = ProblemConfig {
            n_minus: Some(200),
            ..ProblemConfig::default()
        };
        assert!(bad.to_spec().is_err());
    }

    #[test]
    fn neutral_tuning_ignores_counts() {
        let l = LossSection {
            tuning: Tuning::Neutral,
            ..LossSection::default()
        };
        let p = l.params(190, 10).unwrap();
        assert_eq!(p.deltas().plus, 1.0);
        assert_eq!(p.minus.iota, 0.0);
        let vs = LossSection::default().params(190, 10).unwrap();
        assert!((vs.minus.delta - 0.05).abs() < 1e-15);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = CliConfig::default();
        let back: CliConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let cfg: CliConfig = toml::from_str("[gd]\nmax_iters = 7\n").unwrap();
        assert_eq!(cfg.gd.max_iters, 7);
        assert_eq!(cfg.gd.telemetry_stride, GdConfig::default().telemetry_stride);
        assert!(toml::from_str::<CliConfig>("[problem]\ndd = 3\n").is_err());
    }
}
