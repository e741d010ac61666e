use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{anyhow, Context};
use log::info;
use serde::Serialize;
use vslab::data::{write_dataset, RngStream, TEST_STREAM};
use vslab::diagnostics::{
    assumption_check, good_event_check, margin_equality_check, separability_witness,
    AssumptionReport, GoodEventReport,
};
use vslab::experiments::{
    emit_plot_script, fig2_preset, run_sweep, Fig2Variant, LossConfig, SweepGrid, TauRule,
};
use vslab::linalg::norm;
use vslab::risk::{q_fixture_max_error, Q_FIXTURE_GRID};
use vslab::svm::{exhaustive_cs_svm, kkt_report};
use vslab::{
    run_gd, sample_dataset, solve_cs_svm, worst_group_error, Init, ProblemSpec, StepSize,
};

use crate::config::CliConfig;
use crate::{Cli, Command, InitKind, Preset, SweepArgs, TrainArgs, Variant, VerifyArgs};

/// Relative objective tolerance of the exhaustive cross-check.
const ORACLE_REL_TOL: f64 = 1e-6;
/// Stream offset for random initializations.
const INIT_STREAM: u64 = TEST_STREAM + 16;

#[derive(Debug)]
pub enum CliError {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Verification(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "configuration: {e:#}"),
            CliError::Runtime(e) => write!(f, "{e:#}"),
            CliError::Verification(msg) => write!(f, "verification failed: {msg}"),
        }
    }
}

type CmdResult = Result<(), CliError>;

fn runtime<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Runtime(e.into())
}

fn config_err<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Config(e.into())
}

/// Merges file and flag settings into the effective configuration.
pub fn effective_config(cli: &Cli) -> Result<CliConfig, CliError> {
    let mut cfg = match &cli.global.config {
        Some(path) => CliConfig::load(path).map_err(config_err)?,
        None => CliConfig::default(),
    };
    if let Some(seed) = cli.global.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.global.out {
        cfg.out = out.clone();
    }
    if let Some(w) = cli.global.workers {
        cfg.workers = w;
    }
    if let Command::Train(t) = &cli.command {
        if let Some(l) = t.loss {
            cfg.loss.kind = l.into();
        }
        if let Some(tuning) = t.tuning {
            cfg.loss.tuning = tuning;
        }
        if let Some(eta) = t.eta {
            cfg.gd.step_size = StepSize::Fixed(eta);
        }
        if let Some(m) = t.max_iters {
            cfg.gd.max_iters = m;
        }
    }
    cfg.validate().map_err(config_err)?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> CmdResult {
    let cfg = effective_config(&cli)?;
    let json = cli.global.json;
    match &cli.command {
        Command::Gen => cmd_gen(&cfg),
        Command::Train(args) => cmd_train(&cfg, args, json),
        Command::Sweep(args) => cmd_sweep(&cfg, args, json),
        Command::Verify(args) => cmd_verify(&cfg, args, json),
        Command::Config => {
            print!("{}", cfg.to_toml().map_err(runtime)?);
            Ok(())
        }
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .map_err(runtime)?;
    let path = dir.join(name);
    let f = File::create(&path)
        .with_context(|| format!("cannot create {}", path.display()))
        .map_err(runtime)?;
    Ok(BufWriter::new(f))
}

fn spec_of(cfg: &CliConfig) -> Result<ProblemSpec, CliError> {
    cfg.problem.to_spec().map_err(config_err)
}

fn cmd_gen(cfg: &CliConfig) -> CmdResult {
    let spec = spec_of(cfg)?;
    let ds = sample_dataset(&spec, cfg.seed).map_err(runtime)?;
    write_dataset(&ds, create(&cfg.out, "dataset.csv")?).map_err(runtime)?;
    info!("wrote {} samples of dimension {}", ds.n(), ds.d());
    println!("{}", cfg.out.join("dataset.csv").display());
    Ok(())
}

#[derive(Serialize)]
struct TrainReport {
    loss: String,
    iters: usize,
    converged: bool,
    step_size: f64,
    norm_w: f64,
    train_error: f64,
    corr_plus: f64,
    corr_minus: f64,
    err_plus: f64,
    err_minus: f64,
    wst_error: f64,
}

fn cmd_train(cfg: &CliConfig, args: &TrainArgs, json: bool) -> CmdResult {
    let spec = spec_of(cfg)?;
    let ds = sample_dataset(&spec, cfg.seed).map_err(runtime)?;
    let (np, nm) = ds.group_counts();
    let params = cfg.loss.params(np, nm).map_err(config_err)?;
    let mut gd = cfg.gd.clone();
    if args.init == InitKind::Random {
        let d = ds.d();
        let r = args
            .init_norm
            .unwrap_or(gd.init_radius / (d as f64).sqrt());
        let mut v = vec![0.0; d];
        RngStream::new(cfg.seed, INIT_STREAM).fill_normal(&mut v);
        let s = r / norm(&v);
        v.iter_mut().for_each(|x| *x *= s);
        gd.init = Init::Given(v);
    } else if args.init_norm.is_some() {
        return Err(config_err(anyhow!("--init-norm requires --init random")));
    }
    let traj = run_gd(&params, &ds, &gd).map_err(runtime)?;
    traj.write_csv(create(&cfg.out, "trajectory.csv")?)
        .map_err(runtime)?;
    let rep = worst_group_error(&traj.final_w, &ds.nu_plus, &ds.nu_minus).map_err(runtime)?;
    let wrong = ds
        .samples
        .iter()
        .filter(|s| vslab::linalg::dot(&s.z, &traj.final_w.w) <= 0.0)
        .count();
    let report = TrainReport {
        loss: cfg.loss.kind.label().into(),
        iters: traj.iters_run,
        converged: traj.converged,
        step_size: traj.step_size,
        norm_w: traj.final_w.norm(),
        train_error: wrong as f64 / ds.n() as f64,
        corr_plus: rep.corr_plus,
        corr_minus: rep.corr_minus,
        err_plus: rep.err_plus,
        err_minus: rep.err_minus,
        wst_error: rep.wst_error,
    };
    if json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(runtime)?);
    } else {
        println!("loss         {}", report.loss);
        println!("iterations   {} (converged: {})", report.iters, report.converged);
        println!("step size    {:.6e}", report.step_size);
        println!("||w||        {:.6e}", report.norm_w);
        println!("train error  {:.4}", report.train_error);
        println!("group  corr         error");
        println!("  +1   {:>11.6} {:>10.6}", report.corr_plus, report.err_plus);
        println!("  -1   {:>11.6} {:>10.6}", report.corr_minus, report.err_minus);
        println!("worst-group error {:.6}", report.wst_error);
    }
    Ok(())
}

fn preset_grid(variant: Fig2Variant, args: &SweepArgs) -> Result<SweepGrid, CliError> {
    let mut g = fig2_preset(variant);
    if let Some(t) = args.tau {
        if variant == Fig2Variant::FixedTau {
            g.tau_rule = TauRule::Fixed(t);
        }
    }
    Ok(g)
}

fn sweep_grids(cfg: &CliConfig, args: &SweepArgs) -> Result<Vec<SweepGrid>, CliError> {
    let mut grids = match args.preset {
        Some(Preset::Fig2) => {
            if args.tau.is_some() && args.variant == Variant::Growing {
                return Err(config_err(anyhow!("--tau only applies to the fixed variant")));
            }
            let variants: &[Fig2Variant] = match args.variant {
                Variant::Fixed => &[Fig2Variant::FixedTau],
                Variant::Growing => &[Fig2Variant::GrowingTau],
                Variant::Both => &[Fig2Variant::FixedTau, Fig2Variant::GrowingTau],
            };
            variants
                .iter()
                .map(|v| preset_grid(*v, args))
                .collect::<Result<Vec<_>, _>>()?
        }
        None => vec![cfg
            .sweep
            .clone()
            .ok_or_else(|| config_err(anyhow!("no [sweep] section and no --preset given")))?],
    };
    for grid in &mut grids {
        if let Some(l) = args.loss {
            let kind = l.into();
            grid.losses.retain(|c| c.kind == kind);
            if grid.losses.is_empty() {
                grid.losses.push(LossConfig::new(kind));
            }
        }
        if args.timing {
            grid.record_timing = true;
        }
        grid.validate().map_err(config_err)?;
    }
    Ok(grids)
}

fn print_plan(grid: &SweepGrid, json: bool) -> CmdResult {
    let points = grid.expand().map_err(config_err)?;
    if json {
        #[derive(Serialize)]
        struct Plan<'a> {
            grid: &'a SweepGrid,
            points: Vec<(usize, usize, usize, f64, f64)>,
        }
        let points = points
            .iter()
            .map(|p| (p.d, p.n_plus, p.n_minus, p.tau_effective, p.r_plus))
            .collect();
        println!("{}", serde_json::to_string_pretty(&Plan { grid, points }).map_err(runtime)?);
        return Ok(());
    }
    println!("# {}", grid.label);
    println!("{:>7} {:>7} {:>7} {:>10} {:>10}", "d", "n_plus", "n_minus", "tau_eff", "R_plus");
    for p in &points {
        println!(
            "{:>7} {:>7} {:>7} {:>10.4} {:>10.4}",
            p.d, p.n_plus, p.n_minus, p.tau_effective, p.r_plus
        );
    }
    let losses: Vec<&str> = grid.losses.iter().map(|l| l.kind.label()).collect();
    println!(
        "losses {:?}, {} seeds, solver {:?}: {} runs",
        losses,
        grid.seeds.len(),
        grid.solver,
        points.len() * losses.len() * grid.seeds.len()
    );
    Ok(())
}

fn cmd_sweep(cfg: &CliConfig, args: &SweepArgs, json: bool) -> CmdResult {
    let grids = sweep_grids(cfg, args)?;
    if args.dry_run {
        for grid in &grids {
            print_plan(grid, json)?;
        }
        return Ok(());
    }
    let mut summary = Vec::new();
    let mut failed = 0;
    let mut total = 0;
    for grid in &grids {
        let dir = if grids.len() > 1 {
            cfg.out.join(&grid.label)
        } else {
            cfg.out.clone()
        };
        let out = run_sweep(grid, Some(&dir), cfg.workers).map_err(runtime)?;
        failed += out.rows.iter().filter(|r| !r.is_ok()).count();
        total += out.rows.len();
        summary.extend(out.summary);
    }
    emit_plot_script(&summary, &cfg.out).map_err(runtime)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&summary).map_err(runtime)?);
    } else {
        println!(
            "{:<12} {:>7} {:>4} {:>7} {:>4} {:>10} {:>10}",
            "variant", "d", "loss", "solver", "ok", "wst_mean", "wst_se"
        );
        for s in &summary {
            println!(
                "{:<12} {:>7} {:>4} {:>7} {:>4} {:>10.6} {:>10.6}",
                s.label, s.d, s.loss, s.solver, s.seeds_ok, s.wst_mean, s.wst_se
            );
        }
        println!("wrote {}", cfg.out.display());
    }
    if failed > 0 {
        log::warn!("{failed} of {total} runs failed; see the status column");
    }
    Ok(())
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    hard: bool,
    pass: bool,
    value: f64,
    limit: f64,
}

#[derive(Serialize)]
struct VerifyReport {
    seed: u64,
    checks: Vec<Check>,
    good_event: GoodEventReport,
    assumptions: AssumptionReport,
    separability_margin: f64,
    separability_scale: f64,
}

/// Small instance for the exhaustive solver cross-check.
fn oracle_spec() -> vslab::Result<ProblemSpec> {
    ProblemSpec::aligned(20, 20, 8.0, 0.0, 5, 3)
}

fn cmd_verify(cfg: &CliConfig, args: &VerifyArgs, json: bool) -> CmdResult {
    let spec = spec_of(cfg)?;
    let dcfg = &cfg.diagnostics;
    let ds = sample_dataset(&spec, cfg.seed).map_err(runtime)?;
    let (np, nm) = ds.group_counts();
    let params = cfg.loss.params(np, nm).map_err(config_err)?;
    let deltas = params.deltas();
    let mut checks = Vec::new();

    let q_err = q_fixture_max_error(&Q_FIXTURE_GRID);
    checks.push(Check {
        name: "q_function_fixture",
        hard: true,
        pass: q_err <= args.q_tolerance,
        value: q_err,
        limit: args.q_tolerance,
    });

    let good_event = good_event_check(&ds, dcfg).map_err(runtime)?;
    checks.push(Check {
        name: "good_event",
        hard: false,
        pass: good_event.overall,
        value: good_event.smallest_c1,
        limit: dcfg.c1,
    });
    let assumptions = assumption_check(&spec, dcfg).map_err(runtime)?;
    checks.push(Check {
        name: "assumptions",
        hard: false,
        pass: assumptions.a && assumptions.b && assumptions.c && assumptions.d,
        value: assumptions.largest_c,
        limit: dcfg.big_c,
    });
    let witness = separability_witness(&ds).map_err(runtime)?;
    checks.push(Check {
        name: "separability_witness",
        hard: false,
        pass: witness.separable,
        value: witness.min_margin,
        limit: 0.0,
    });

    match solve_cs_svm(&ds, &deltas, &cfg.svm) {
        Ok(sol) => {
            let kkt = kkt_report(&ds, &deltas, &sol.w, &sol.alpha).max();
            checks.push(Check {
                name: "cs_svm_kkt",
                hard: true,
                pass: kkt <= dcfg.kkt_tol,
                value: kkt,
                limit: dcfg.kkt_tol,
            });
            let me = margin_equality_check(&ds, &deltas, &sol.w, dcfg.margin_spread_tol)
                .map_err(runtime)?;
            checks.push(Check {
                name: "margin_equality",
                hard: false,
                pass: me.pass,
                value: me.spread,
                limit: dcfg.margin_spread_tol,
            });
        }
        Err(e) => {
            checks.push(Check {
                name: "cs_svm_kkt",
                hard: !witness.separable,
                pass: false,
                value: f64::NAN,
                limit: dcfg.kkt_tol,
            });
            log::warn!("cs-svm failed: {e}");
        }
    }

    let small = sample_dataset(&oracle_spec().map_err(runtime)?, cfg.seed).map_err(runtime)?;
    let (snp, snm) = small.group_counts();
    let sdeltas = cfg.loss.params(snp, snm).map_err(config_err)?.deltas();
    let fast = solve_cs_svm(&small, &sdeltas, &cfg.svm).map_err(runtime)?;
    let exact = exhaustive_cs_svm(&small, &sdeltas).map_err(runtime)?;
    let (a, b) = (fast.w.norm().powi(2), exact.norm().powi(2));
    let rel = (a - b).abs() / b;
    checks.push(Check {
        name: "oracle_equivalence",
        hard: true,
        pass: rel <= ORACLE_REL_TOL,
        value: rel,
        limit: ORACLE_REL_TOL,
    });

    let report = VerifyReport {
        seed: cfg.seed,
        checks,
        good_event,
        assumptions,
        separability_margin: witness.min_margin,
        separability_scale: witness.reference_scale,
    };
    if json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(runtime)?);
    } else {
        for c in &report.checks {
            println!(
                "{:<5} {:<22} {:<4} value={:.6e} limit={:.6e}",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                if c.hard { "hard" } else { "soft" },
                c.value,
                c.limit
            );
        }
    }
    let failed: Vec<&str> = report
        .checks
        .iter()
        .filter(|c| c.hard && !c.pass)
        .map(|c| c.name)
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(failed.join(", ")))
    }
}
