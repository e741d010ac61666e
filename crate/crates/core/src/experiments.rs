//! Parameter sweeps, the dimension-scaling preset and plot output.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{sample_dataset, split_counts, Dataset};
use crate::diagnostics::margin_equality_check;
use crate::error::{Error, Result};
use crate::fmt_real;
use crate::gd::{run_gd, GdConfig};
use crate::linalg::cosine;
use crate::loss::{tune_la, tune_vs_defaults, LossShape, VsLossParams, DEFAULT_IOTA_SCALE};
use crate::model::{snr_summary, ProblemSpec};
use crate::risk::{monte_carlo_error_projected, worst_group_error};
use crate::svm::{solve_cs_svm, SvmOptions};

pub const PRESET_DIMS: [usize; 4] = [256, 1024, 4096, 16384];
pub const PRESET_N: usize = 200;
pub const PRESET_TAU: f64 = 50.0;
/// Alternative fixed ratio, selectable from the CLI.
pub const PRESET_TAU_ALT: f64 = 30.0;
pub const PRESET_TAU_EXPONENT: f64 = 0.3;
pub const DEFAULT_MC_SAMPLES: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum TauRule {
    /// Constant imbalance ratio.
    Fixed(f64),
    /// `tau = d^exponent`.
    Power(f64),
}

impl TauRule {
    pub fn tau(&self, d: usize) -> f64 {
        match *self {
            TauRule::Fixed(t) => t,
            TauRule::Power(e) => (d as f64).powf(e),
        }
    }
}

/// `R+ = coef * d^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RPlusRule {
    pub coef: f64,
    pub exponent: f64,
}

impl Default for RPlusRule {
    fn default() -> Self {
        RPlusRule {
            coef: 0.25,
            exponent: 0.6,
        }
    }
}

impl RPlusRule {
    pub fn r_plus(&self, d: usize) -> f64 {
        self.coef * (d as f64).powf(self.exponent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Tuned VS-loss: `Delta_b = n_b / n`, `iota_b = -2 log Delta_b`.
    Vs,
    /// Logit-adjusted loss: `Delta_b = 1`.
    La,
    /// Plain cross-entropy: neutral parameters, logistic shape.
    Ce,
}

impl LossKind {
    pub fn label(&self) -> &'static str {
        match self {
            LossKind::Vs => "vs",
            LossKind::La => "la",
            LossKind::Ce => "ce",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub kind: LossKind,
    pub shape: LossShape,
    pub iota_scale: f64,
}

impl LossConfig {
    pub fn new(kind: LossKind) -> Self {
        LossConfig {
            kind,
            shape: if kind == LossKind::Ce {
                LossShape::Logistic
            } else {
                LossShape::Exponential
            },
            iota_scale: DEFAULT_IOTA_SCALE,
        }
    }

    pub fn params(&self, n_plus: usize, n_minus: usize) -> Result<VsLossParams> {
        let p = match self.kind {
            LossKind::Vs => tune_vs_defaults(n_plus, n_minus)?,
            LossKind::La => tune_la(n_plus, n_minus, self.iota_scale)?,
            LossKind::Ce => VsLossParams::neutral(self.shape),
        };
        Ok(p.with_shape(self.shape))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    Gd,
    CsSvm,
    Both,
}

/// Which group sizes the loss hyperparameters are tuned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TuningCounts {
    /// Counts implied by the stored (possibly noisy) labels.
    #[default]
    Observed,
    /// Counts of the clean groups.
    Clean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub label: String,
    pub dims: Vec<usize>,
    pub n: usize,
    pub tau_rule: TauRule,
    pub r_plus_rule: RPlusRule,
    /// Target `R- / R+`.
    pub r_ratio: f64,
    pub losses: Vec<LossConfig>,
    pub seeds: Vec<u64>,
    pub solver: SolverChoice,
    pub mc_samples: usize,
    #[serde(default)]
    pub label_flip_rate: f64,
    #[serde(default)]
    pub tuning_counts: TuningCounts,
    #[serde(default)]
    pub gd: GdConfig,
    #[serde(default)]
    pub svm: SvmOptions,
    /// Fill the `wall_ms` column. Off by default so output is reproducible.
    #[serde(default)]
    pub record_timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fig2Variant {
    FixedTau,
    GrowingTau,
}

/// Dimension-scaling preset: `n = 200`, `R+ = d^0.6 / 4`, `R- = 0`, means on
/// the first coordinate of each block, VS vs LA, CS-SVM solver, seeds 1..=10.
pub fn fig2_preset(variant: Fig2Variant) -> SweepGrid {
    let (label, tau_rule) = match variant {
        Fig2Variant::FixedTau => ("fixed_tau", TauRule::Fixed(PRESET_TAU)),
        Fig2Variant::GrowingTau => ("growing_tau", TauRule::Power(PRESET_TAU_EXPONENT)),
    };
    SweepGrid {
        label: label.into(),
        dims: PRESET_DIMS.to_vec(),
        n: PRESET_N,
        tau_rule,
        r_plus_rule: RPlusRule::default(),
        r_ratio: 0.0,
        losses: vec![LossConfig::new(LossKind::Vs), LossConfig::new(LossKind::La)],
        seeds: (1..=10).collect(),
        solver: SolverChoice::CsSvm,
        mc_samples: DEFAULT_MC_SAMPLES,
        label_flip_rate: 0.0,
        tuning_counts: TuningCounts::Observed,
        gd: GdConfig::default(),
        svm: SvmOptions::default(),
        record_timing: false,
    }
}

/// One expanded grid coordinate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub d: usize,
    pub n_plus: usize,
    pub n_minus: usize,
    pub tau_effective: f64,
    pub r_plus: f64,
    pub spec: ProblemSpec,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::EmptyGrid("no dimensions".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::EmptyGrid("no seeds".into()));
        }
        if self.losses.is_empty() {
            return Err(Error::EmptyGrid("no losses".into()));
        }
        if let Some(d) = self.dims.iter().find(|d| **d < 4) {
            return Err(Error::InvalidArgument(format!("dimension {d} < 4")));
        }
        if self.mc_samples < 100 {
            return Err(Error::InvalidArgument("mc_samples must be >= 100".into()));
        }
        Ok(())
    }

    /// Grid coordinates in ascending `d`.
    pub fn expand(&self) -> Result<Vec<GridPoint>> {
        self.validate()?;
        let mut dims = self.dims.clone();
        dims.sort_unstable();
        dims.dedup();
        dims.into_iter()
            .map(|d| {
                let tau = self.tau_rule.tau(d);
                let (n_plus, n_minus) = split_counts(self.n, tau)?;
                let r_plus = self.r_plus_rule.r_plus(d);
                let d_core = d.div_ceil(2);
                let mut spec =
                    ProblemSpec::aligned(d_core, d - d_core, r_plus, self.r_ratio, n_plus, n_minus)?;
                spec.label_flip_rate = self.label_flip_rate;
                spec.validate()?;
                Ok(GridPoint {
                    d,
                    n_plus,
                    n_minus,
                    tau_effective: n_plus as f64 / n_minus as f64,
                    r_plus,
                    spec,
                })
            })
            .collect()
    }
}

/// One output row; `None` prints as an empty field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub d: usize,
    pub n: usize,
    pub n_plus: usize,
    pub n_minus: usize,
    pub tau_effective: f64,
    pub r_plus: f64,
    pub r_minus: f64,
    pub loss: String,
    pub delta_plus: f64,
    pub delta_minus: f64,
    pub iota_plus: f64,
    pub iota_minus: f64,
    pub omega_plus: f64,
    pub omega_minus: f64,
    pub xi: f64,
    pub seed: u64,
    pub solver: String,
    pub status: String,
    pub corr_plus: Option<f64>,
    pub corr_minus: Option<f64>,
    pub err_plus: Option<f64>,
    pub err_minus: Option<f64>,
    pub wst_error: Option<f64>,
    pub mc_wst_error: Option<f64>,
    pub mc_radius: Option<f64>,
    pub margin_spread: Option<f64>,
    pub kkt_max_violation: Option<f64>,
    pub gd_iters: Option<usize>,
    pub gd_svm_cosine: Option<f64>,
    pub wall_ms: Option<f64>,
    /// Training error on the stored labels; not part of the CSV schema.
    #[serde(skip)]
    pub train_error: Option<f64>,
}

pub const SWEEP_COLUMNS: [&str; 30] = [
    "d",
    "n",
    "n_plus",
    "n_minus",
    "tau_effective",
    "R_plus",
    "R_minus",
    "loss",
    "delta_plus",
    "delta_minus",
    "iota_plus",
    "iota_minus",
    "omega_plus",
    "omega_minus",
    "xi",
    "seed",
    "solver",
    "status",
    "corr_plus",
    "corr_minus",
    "err_plus",
    "err_minus",
    "wst_error",
    "mc_wst_error",
    "mc_radius",
    "margin_spread",
    "kkt_max_violation",
    "gd_iters",
    "gd_svm_cosine",
    "wall_ms",
];

fn opt(v: Option<f64>) -> String {
    v.map(fmt_real).unwrap_or_default()
}

impl SweepRow {
    fn record(&self) -> Vec<String> {
        vec![
            self.d.to_string(),
            self.n.to_string(),
            self.n_plus.to_string(),
            self.n_minus.to_string(),
            fmt_real(self.tau_effective),
            fmt_real(self.r_plus),
            fmt_real(self.r_minus),
            self.loss.clone(),
            fmt_real(self.delta_plus),
            fmt_real(self.delta_minus),
            fmt_real(self.iota_plus),
            fmt_real(self.iota_minus),
            fmt_real(self.omega_plus),
            fmt_real(self.omega_minus),
            fmt_real(self.xi),
            self.seed.to_string(),
            self.solver.clone(),
            self.status.clone(),
            opt(self.corr_plus),
            opt(self.corr_minus),
            opt(self.err_plus),
            opt(self.err_minus),
            opt(self.wst_error),
            opt(self.mc_wst_error),
            opt(self.mc_radius),
            opt(self.margin_spread),
            opt(self.kkt_max_violation),
            self.gd_iters.map(|v| v.to_string()).unwrap_or_default(),
            opt(self.gd_svm_cosine),
            opt(self.wall_ms),
        ]
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

pub fn write_rows<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(SWEEP_COLUMNS)?;
    for r in rows {
        wtr.write_record(r.record())?;
    }
    wtr.flush()?;
    Ok(())
}

/// Seed-aggregated statistics for one `(d, loss, solver)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub label: String,
    pub d: usize,
    pub loss: String,
    pub solver: String,
    pub seeds_ok: usize,
    pub wst_mean: f64,
    /// Sample standard deviation over `sqrt(#seeds)`.
    pub wst_se: f64,
    pub err_plus_mean: f64,
    pub err_minus_mean: f64,
    pub mc_wst_mean: f64,
}

pub const SUMMARY_COLUMNS: [&str; 10] = [
    "label",
    "d",
    "loss",
    "solver",
    "seeds_ok",
    "wst_mean",
    "wst_se",
    "err_plus_mean",
    "err_minus_mean",
    "mc_wst_mean",
];

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_err(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let m = mean(v);
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
    var.sqrt() / (v.len() as f64).sqrt()
}

pub fn summarize(label: &str, rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut cells: BTreeMap<(usize, String, String), Vec<&SweepRow>> = BTreeMap::new();
    for r in rows {
        cells
            .entry((r.d, r.loss.clone(), r.solver.clone()))
            .or_default()
            .push(r);
    }
    cells
        .into_iter()
        .map(|((d, loss, solver), rs)| {
            let ok: Vec<&&SweepRow> = rs.iter().filter(|r| r.is_ok()).collect();
            let col = |f: &dyn Fn(&SweepRow) -> Option<f64>| -> Vec<f64> {
                ok.iter().filter_map(|r| f(r)).collect()
            };
            let wst = col(&|r| r.wst_error);
            SummaryRow {
                label: label.to_string(),
                d,
                loss,
                solver,
                seeds_ok: ok.len(),
                wst_mean: mean(&wst),
                wst_se: std_err(&wst),
                err_plus_mean: mean(&col(&|r| r.err_plus)),
                err_minus_mean: mean(&col(&|r| r.err_minus)),
                mc_wst_mean: mean(&col(&|r| r.mc_wst_error)),
            }
        })
        .collect()
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(SUMMARY_COLUMNS)?;
    for r in rows {
        wtr.write_record([
            r.label.clone(),
            r.d.to_string(),
            r.loss.clone(),
            r.solver.clone(),
            r.seeds_ok.to_string(),
            fmt_real(r.wst_mean),
            fmt_real(r.wst_se),
            fmt_real(r.err_plus_mean),
            fmt_real(r.err_minus_mean),
            fmt_real(r.mc_wst_mean),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SummaryRow>,
}

fn dataset_seed(seed: u64, d: usize) -> u64 {
    seed ^ (d as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn base_row(point: &GridPoint, grid: &SweepGrid, loss: &LossConfig, seed: u64) -> SweepRow {
    let snr = snr_summary(&point.spec).expect("validated spec");
    SweepRow {
        d: point.d,
        n: grid.n,
        n_plus: point.n_plus,
        n_minus: point.n_minus,
        tau_effective: point.tau_effective,
        r_plus: snr.r_plus,
        r_minus: snr.r_minus,
        loss: loss.kind.label().into(),
        delta_plus: f64::NAN,
        delta_minus: f64::NAN,
        iota_plus: f64::NAN,
        iota_minus: f64::NAN,
        omega_plus: f64::NAN,
        omega_minus: f64::NAN,
        xi: grid.label_flip_rate,
        seed,
        solver: String::new(),
        status: "ok".into(),
        corr_plus: None,
        corr_minus: None,
        err_plus: None,
        err_minus: None,
        wst_error: None,
        mc_wst_error: None,
        mc_radius: None,
        margin_spread: None,
        kkt_max_violation: None,
        gd_iters: None,
        gd_svm_cosine: None,
        wall_ms: None,
        train_error: None,
    }
}

fn train_error(ds: &Dataset, w: &[f64]) -> f64 {
    let wrong = ds
        .samples
        .iter()
        .filter(|s| crate::linalg::dot(&s.z, w) <= 0.0)
        .count();
    wrong as f64 / ds.n() as f64
}

fn evaluate_point(
    grid: &SweepGrid,
    point: &GridPoint,
    loss: &LossConfig,
    seed: u64,
    ds: &Result<Dataset>,
) -> Vec<SweepRow> {
    let started = Instant::now();
    let mut base = base_row(point, grid, loss, seed);
    let fail = |mut row: SweepRow, solver: &str, e: &Error| {
        row.solver = solver.into();
        row.status = format!("error: {e}");
        row
    };
    let solvers: Vec<&str> = match grid.solver {
        SolverChoice::Gd => vec!["gd"],
        SolverChoice::CsSvm => vec!["cs_svm"],
        SolverChoice::Both => vec!["cs_svm", "gd"],
    };
    let ds = match ds {
        Ok(ds) => ds,
        Err(e) => return solvers.iter().map(|s| fail(base.clone(), s, e)).collect(),
    };
    let (np, nm) = match grid.tuning_counts {
        TuningCounts::Observed => ds.group_counts(),
        TuningCounts::Clean => ds.clean_group_counts(),
    };
    let params = match loss.params(np, nm) {
        Ok(p) => p,
        Err(e) => return solvers.iter().map(|s| fail(base.clone(), s, &e)).collect(),
    };
    base.delta_plus = params.plus.delta;
    base.delta_minus = params.minus.delta;
    base.iota_plus = params.plus.iota;
    base.iota_minus = params.minus.iota;
    base.omega_plus = params.plus.omega;
    base.omega_minus = params.minus.omega;
    let deltas = params.deltas();
    let mc_seed = dataset_seed(seed, point.d).wrapping_add(1);

    let fill = |row: &mut SweepRow, w: &crate::model::Classifier| -> Result<()> {
        let rep = worst_group_error(w, &ds.nu_plus, &ds.nu_minus)?;
        let mc = monte_carlo_error_projected(w, &point.spec, grid.mc_samples, mc_seed)?;
        let spread = margin_equality_check(ds, &deltas, w, f64::INFINITY)?;
        row.corr_plus = Some(rep.corr_plus);
        row.corr_minus = Some(rep.corr_minus);
        row.err_plus = Some(rep.err_plus);
        row.err_minus = Some(rep.err_minus);
        row.wst_error = Some(rep.wst_error);
        row.mc_wst_error = Some(mc.worst().err);
        row.mc_radius = Some(mc.worst().radius);
        row.margin_spread = Some(spread.spread);
        row.train_error = Some(train_error(ds, &w.w));
        Ok(())
    };

    let mut out = Vec::new();
    let mut svm_w = None;
    if grid.solver != SolverChoice::Gd {
        let mut row = base.clone();
        row.solver = "cs_svm".into();
        match solve_cs_svm(ds, &deltas, &grid.svm) {
            Ok(sol) => {
                row.kkt_max_violation = Some(sol.kkt_max_violation);
                if let Err(e) = fill(&mut row, &sol.w) {
                    row = fail(row, "cs_svm", &e);
                }
                svm_w = Some(sol.w);
            }
            Err(e) => row = fail(row, "cs_svm", &e),
        }
        out.push(row);
    }
    if grid.solver != SolverChoice::CsSvm {
        let mut row = base.clone();
        row.solver = "gd".into();
        match run_gd(&params, ds, &grid.gd) {
            Ok(tr) => {
                row.gd_iters = Some(tr.iters_run);
                if let Err(e) = fill(&mut row, &tr.final_w) {
                    row = fail(row, "gd", &e);
                }
                if let Some(sw) = &svm_w {
                    let c = cosine(&sw.w, &tr.final_w.w);
                    row.gd_svm_cosine = Some(c);
                    out[0].gd_svm_cosine = Some(c);
                }
            }
            Err(e) => row = fail(row, "gd", &e),
        }
        out.push(row);
    }
    if grid.record_timing {
        let ms = started.elapsed().as_secs_f64() * 1e3;
        out.iter_mut().for_each(|r| r.wall_ms = Some(ms));
    }
    out
}

/// Runs every `(d, loss, seed)` of the grid on `workers` threads.
///
/// Rows come out sorted by `d`, then loss (grid order), then seed, whatever
/// the number of workers. With `out_dir`, writes `sweep.csv` and
/// `sweep_summary.csv` there.
pub fn run_sweep(grid: &SweepGrid, out_dir: Option<&Path>, workers: usize) -> Result<SweepOutput> {
    let points = grid.expand()?;
    let mut seeds = grid.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;

    let jobs: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|p| seeds.iter().map(move |s| (p, *s)))
        .collect();
    let results: Vec<Vec<Vec<SweepRow>>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(p, seed)| {
                let point = &points[p];
                let ds = sample_dataset(&point.spec, dataset_seed(seed, point.d));
                grid.losses
                    .iter()
                    .map(|loss| evaluate_point(grid, point, loss, seed, &ds))
                    .collect()
            })
            .collect()
    });

    let mut rows = Vec::new();
    for p in 0..points.len() {
        for l in 0..grid.losses.len() {
            for (job, res) in jobs.iter().zip(&results) {
                if job.0 == p {
                    rows.extend(res[l].iter().cloned());
                }
            }
        }
    }
    let summary = summarize(&grid.label, &rows);
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        write_rows(&rows, std::fs::File::create(dir.join("sweep.csv"))?)?;
        write_summary(&summary, std::fs::File::create(dir.join("sweep_summary.csv"))?)?;
    }
    Ok(SweepOutput { rows, summary })
}

pub const PLOT_DATA_FILE: &str = "fig2_data.csv";
pub const PLOT_SCRIPT_FILE: &str = "plot_fig2.py";

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Worst-group error against dimension.

Reads fig2_data.csv from this script's directory and writes fig2.png next to it.
Solid lines: fixed imbalance ratio. Dashed lines: ratio growing with d.
"""
import csv
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))
COLORS = {"vs": "tab:blue", "la": "tab:red", "ce": "tab:green"}
STYLES = {"fixed_tau": "-", "growing_tau": "--"}

series = defaultdict(list)
with open(os.path.join(HERE, "fig2_data.csv"), newline="") as fh:
    for row in csv.DictReader(fh):
        key = (row["label"], row["loss"])
        series[key].append((int(row["d"]), float(row["wst_mean"]), float(row["wst_se"] or "nan")))

fig, ax = plt.subplots(figsize=(5, 3.6))
for (label, loss), pts in sorted(series.items()):
    pts.sort()
    ds = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    es = [0.0 if p[2] != p[2] else p[2] for p in pts]
    ax.errorbar(ds, ys, yerr=es, linestyle=STYLES.get(label, ":"), marker="o",
                color=COLORS.get(loss, "black"), label=f"{loss.upper()} ({label})", capsize=2)
ax.set_xscale("log", base=2)
ax.set_xlabel("d")
ax.set_ylabel("worst-group error")
ax.set_ylim(bottom=0)
ax.grid(True, alpha=0.3)
ax.legend(fontsize=8)
fig.tight_layout()
fig.savefig(os.path.join(HERE, "fig2.png"), dpi=150)
"#;

/// Writes the aggregated data and a matplotlib script that plots it.
///
/// Only `cs_svm` rows are plotted when both solvers are present.
pub fn emit_plot_script(rows: &[SummaryRow], out_dir: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::EmptyGrid("no rows to plot".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let has_svm = rows.iter().any(|r| r.solver == "cs_svm");
    let picked: Vec<SummaryRow> = rows
        .iter()
        .filter(|r| !has_svm || r.solver == "cs_svm")
        .cloned()
        .collect();
    write_summary(&picked, std::fs::File::create(out_dir.join(PLOT_DATA_FILE))?)?;
    std::fs::write(out_dir.join(PLOT_SCRIPT_FILE), PLOT_SCRIPT)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_grid(solver: SolverChoice) -> SweepGrid {
        SweepGrid {
            label: "tiny".into(),
            dims: vec![64],
            n: 12,
            tau_rule: TauRule::Fixed(3.0),
            r_plus_rule: RPlusRule::default(),
            r_ratio: 0.0,
            losses: vec![LossConfig::new(LossKind::Vs)],
            seeds: vec![1],
            solver,
            mc_samples: 1000,
            label_flip_rate: 0.0,
            tuning_counts: TuningCounts::Observed,
            gd: GdConfig {
                step_size: crate::gd::StepSize::Fixed(1e-2),
                max_iters: 2000,
                ..GdConfig::default()
            },
            svm: SvmOptions::default(),
            record_timing: false,
        }
    }

    #[test]
    fn preset_values() {
        let g = fig2_preset(Fig2Variant::FixedTau);
        let pts = g.expand().unwrap();
        assert_eq!(pts.len(), 4);
        assert!((pts[0].r_plus - 6.964).abs() < 1e-3);
        assert_eq!((pts[0].n_plus, pts[0].n_minus), (196, 4));
        assert_eq!(pts[0].spec.d_core, 128);
        assert_eq!(g.seeds, (1..=10).collect::<Vec<u64>>());

        let g = fig2_preset(Fig2Variant::GrowingTau);
        let pts = g.expand().unwrap();
        assert!((pts[2].tau_effective - 185.0 / 15.0).abs() < 1e-12);
        assert_eq!(pts[2].n_minus, 15);

        let vs = LossConfig::new(LossKind::Vs).params(185, 15).unwrap();
        assert!((vs.plus.delta - 185.0 / 200.0).abs() < 1e-15);
        assert!((vs.minus.delta - 15.0 / 200.0).abs() < 1e-15);
        let la = LossConfig::new(LossKind::La).params(185, 15).unwrap();
        assert_eq!((la.plus.delta, la.minus.delta), (1.0, 1.0));
    }

    #[test]
    fn empty_seeds_fail_early() {
        let mut g = tiny_grid(SolverChoice::CsSvm);
        g.seeds.clear();
        assert!(matches!(run_sweep(&g, None, 1), Err(Error::EmptyGrid(_))));
    }

    #[test]
    fn both_solvers_emit_paired_rows() {
        let out = run_sweep(&tiny_grid(SolverChoice::Both), None, 1).unwrap();
        assert_eq!(out.rows.len(), 2);
        let (svm, gd) = (&out.rows[0], &out.rows[1]);
        assert_eq!(svm.solver, "cs_svm");
        assert_eq!(gd.solver, "gd");
        assert!(svm.is_ok() && gd.is_ok(), "{} / {}", svm.status, gd.status);
        assert!(svm.wst_error.is_some() && gd.wst_error.is_some());
        assert_eq!(svm.gd_svm_cosine, gd.gd_svm_cosine);
        assert!(gd.gd_svm_cosine.unwrap() > 0.5);
        assert!(gd.gd_iters.is_some());
        assert!(svm.kkt_max_violation.unwrap() <= 1e-9);
    }

    #[test]
    fn csv_has_schema_header_and_is_worker_independent() {
        let mut g = tiny_grid(SolverChoice::CsSvm);
        g.seeds = vec![3, 1, 2];
        g.dims = vec![128, 64];
        g.losses.push(LossConfig::new(LossKind::La));
        let a = run_sweep(&g, None, 1).unwrap();
        let b = run_sweep(&g, None, 4).unwrap();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        write_rows(&a.rows, &mut ca).unwrap();
        write_rows(&b.rows, &mut cb).unwrap();
        assert_eq!(ca, cb);
        let text = String::from_utf8(ca).unwrap();
        assert_eq!(text.lines().next().unwrap(), SWEEP_COLUMNS.join(","));
        let keys: Vec<(usize, String, u64)> =
            a.rows.iter().map(|r| (r.d, r.loss.clone(), r.seed)).collect();
        assert_eq!(keys[0], (64, "vs".into(), 1));
        assert_eq!(keys[2], (64, "vs".into(), 3));
        assert_eq!(keys[3], (64, "la".into(), 1));
        assert_eq!(keys[6], (128, "vs".into(), 1));
        // 17 significant digits
        let first = text.lines().nth(1).unwrap();
        let tau = first.split(',').nth(4).unwrap();
        assert_eq!(tau, "3.0000000000000000e0");
    }

    #[test]
    fn standard_error_uses_sample_stddev() {
        let mk = |seed, wst| SweepRow {
            wst_error: Some(wst),
            ..base_row(
                &tiny_grid(SolverChoice::CsSvm).expand().unwrap()[0],
                &tiny_grid(SolverChoice::CsSvm),
                &LossConfig::new(LossKind::Vs),
                seed,
            )
        };
        let rows = vec![mk(1, 0.1), mk(2, 0.3)];
        let s = summarize("x", &rows);
        assert_eq!(s.len(), 1);
        assert!((s[0].wst_mean - 0.2).abs() < 1e-15);
        // sd = 0.1414.., se = sd / sqrt 2 = 0.1
        assert!((s[0].wst_se - 0.1).abs() < 1e-15);
    }

    #[test]
    fn plot_script_is_relative_and_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            SummaryRow {
                label: "fixed_tau".into(),
                d: 256,
                loss: "vs".into(),
                solver: "cs_svm".into(),
                seeds_ok: 2,
                wst_mean: 0.2,
                wst_se: 0.01,
                err_plus_mean: 0.1,
                err_minus_mean: 0.2,
                mc_wst_mean: 0.2,
            },
            SummaryRow {
                label: "fixed_tau".into(),
                d: 1024,
                loss: "vs".into(),
                solver: "cs_svm".into(),
                seeds_ok: 2,
                wst_mean: 0.1,
                wst_se: 0.01,
                err_plus_mean: 0.05,
                err_minus_mean: 0.1,
                mc_wst_mean: 0.1,
            },
        ];
        emit_plot_script(&rows, dir.path()).unwrap();
        let script = std::fs::read_to_string(dir.path().join(PLOT_SCRIPT_FILE)).unwrap();
        assert!(script.contains("\"fig2_data.csv\""));
        assert!(!script.contains(&dir.path().display().to_string()));
        let first = std::fs::read(dir.path().join(PLOT_DATA_FILE)).unwrap();
        emit_plot_script(&rows, dir.path()).unwrap();
        assert_eq!(first, std::fs::read(dir.path().join(PLOT_DATA_FILE)).unwrap());
        assert!(emit_plot_script(&[], dir.path()).is_err());
    }
}
