//! `qhd`: run the solvers and experiment presets from a TOML config.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails or a run aborts,
//! 2 for usage and configuration errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use qhd_core::experiments::{
    initial_from_config, mass_drift, preset_balance, preset_decay, preset_inequalities, preset_relaxation,
};
use qhd_core::io::{dump_field, fmt_f64, read_config, write_qdd_csv_file, write_record_csv_file, RunConfig};
use qhd_core::qdd::run_qdd;
use qhd_core::sl::{run_sl_with, StepObserver};
use qhd_core::{QddStatus, QhdError, RunStatus, WaveFunction};

#[derive(Parser)]
#[command(name = "qhd", version, about = "Damped quantum hydrodynamics on the periodic unit square")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the Schrödinger-Langevin equation and record the functionals.
    RunSl(Common),
    /// Integrate the quantum drift-diffusion equation.
    RunQdd(Common),
    /// Sweep the relaxation time towards zero and fit the convergence rate.
    RelaxSweep(Common),
    /// Functional inequalities on random densities.
    CheckInequalities(Common),
    /// Exponential decay of the combined functional.
    Decay(Common),
    /// Balance-law residuals under dt-halving.
    Balance(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; defaults to `output.dir` from the config.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Suppress progress messages.
    #[arg(long)]
    quiet: bool,
}

/// One line of `verdict.csv`.
struct Check {
    name: &'static str,
    value: f64,
    pass: bool,
}

fn check(name: &'static str, value: f64, pass: bool) -> Check {
    Check { name, value, pass }
}

struct Progress {
    quiet: bool,
    every: usize,
}

impl Progress {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

impl StepObserver for Progress {
    fn observe(&mut self, step: usize, t: f64, _: &WaveFunction) -> qhd_core::Result<()> {
        if !self.quiet && self.every > 0 && step % self.every == 0 {
            eprintln!("  step {step}  t = {t:.6}");
        }
        Ok(())
    }
}

fn write_verdict(dir: &Path, checks: &[Check]) -> anyhow::Result<bool> {
    let mut s = String::from("check,value,pass\n");
    for c in checks {
        let _ = writeln!(s, "{},{},{}", c.name, fmt_f64(c.value), c.pass);
    }
    std::fs::write(dir.join("verdict.csv"), &s).context("writing verdict.csv")?;
    print!("{s}");
    Ok(checks.iter().all(|c| c.pass))
}

fn run_sl_cmd(cfg: &RunConfig, dir: &Path, progress: &mut Progress) -> anyhow::Result<Vec<Check>> {
    let (_, init) = initial_from_config(cfg)?;
    let params = cfg.sl_params();
    progress.every = (params.steps() / 10).max(1);
    progress.say(format!("run-sl: {} steps of dt = {}", params.steps(), params.dt));
    let traj = run_sl_with(&init.wave, &params, progress)?;
    write_record_csv_file(&dir.join("sl_records.csv"), &traj.records)?;
    dump_field(&dir.join("psi_final.qhdf"), "psi", &traj.final_state.psi)?;
    for (k, (t, w)) in traj.checkpoints.iter().enumerate() {
        dump_field(&dir.join(format!("psi_{k:05}.qhdf")), &format!("psi t={}", fmt_f64(*t)), &w.psi)?;
    }
    let breach = match traj.status {
        RunStatus::Completed => f64::NAN,
        RunStatus::VacuumBreach { t, .. } => t,
    };
    let drift = mass_drift(&traj);
    Ok(vec![
        check("completed", if traj.completed() { 1.0 } else { 0.0 }, traj.completed()),
        check("vacuum_breach_time", breach, traj.completed()),
        check("mass_drift", drift, drift <= 1e-10),
        check("admissible", if init.admissibility.holds { 1.0 } else { 0.0 }, true),
    ])
}

fn run_qdd_cmd(cfg: &RunConfig, dir: &Path, progress: &Progress) -> anyhow::Result<Vec<Check>> {
    let (_, init) = initial_from_config(cfg)?;
    let params = cfg.qdd_params();
    progress.say(format!("run-qdd: {} steps of dt = {}", params.steps(), params.dt));
    let traj = run_qdd(&init.state.rho, &params)?;
    write_qdd_csv_file(&dir.join("qdd_records.csv"), &traj.records)?;
    dump_field(&dir.join("rho_final.qhdf"), "rho", &traj.final_state)?;
    let done = traj.status == QddStatus::Completed;
    let m0 = traj.records.first().map_or(1.0, |r| r.mass);
    let drift = traj.records.iter().map(|r| (r.mass - m0).abs()).fold(0.0, f64::max) / m0;
    let rise = traj.max_entropy_increase();
    Ok(vec![
        check("completed", if done { 1.0 } else { 0.0 }, done),
        check("mass_drift", drift, drift <= 1e-10),
        check("max_entropy_increase", rise, rise <= 1e-8),
    ])
}

fn relax_cmd(cfg: &RunConfig, dir: &Path, progress: &Progress) -> anyhow::Result<Vec<Check>> {
    progress.say(format!("relax-sweep: taus = {:?}", cfg.physics.taus));
    let rep = preset_relaxation(cfg)?;
    rep.write_bundle(dir)?;
    progress.say(rep.summary());
    let slope = |k: Option<&qhd_core::RateFit>| k.map_or(f64::NAN, |f| f.slope);
    Ok(vec![
        check("completed_runs", rep.completed().len() as f64, rep.completed().len() == rep.taus.len()),
        check("errors_strictly_decreasing", 0.0, rep.errors_strictly_decreasing()),
        check("rate_slope", slope(rep.fit.as_ref()), rep.rate_in_band()),
        check("sandwich", 0.0, rep.sandwich_holds()),
        check("remainder_tau_slope", slope(rep.remainder_fits[0].as_ref()), rep.remainders_in_band()),
        check("remainder_pair_slope", slope(rep.remainder_fits[1].as_ref()), rep.remainders_in_band()),
        check("energy_hypothesis", 0.0, rep.energy_hypothesis_holds()),
    ])
}

fn inequalities_cmd(cfg: &RunConfig, dir: &Path, progress: &Progress) -> anyhow::Result<Vec<Check>> {
    progress.say("check-inequalities");
    let rep = preset_inequalities(cfg)?;
    rep.write(dir)?;
    progress.say(rep.summary());
    let rc = rep.resolution_change();
    Ok(vec![
        check("log_h2_worst_ratio", rep.log_h2_worst_ratio(), rep.log_h2_holds()),
        check("scale_defect_embedding", rep.scale_defect[0], rep.scale_defect[0] <= 1e-12),
        check("scale_defect_sobolev", rep.scale_defect[1], rep.scale_defect[1] <= 1e-12),
        check("resolution_change_embedding", rc[0], rc[0] <= 0.05),
        check("resolution_change_sobolev", rc[1], rc[1] <= 0.05),
    ])
}

fn decay_cmd(cfg: &RunConfig, dir: &Path, progress: &Progress) -> anyhow::Result<Vec<Check>> {
    progress.say("decay");
    let rep = preset_decay(cfg)?;
    rep.write(dir)?;
    progress.say(rep.summary());
    let done = rep.trajectory.completed();
    let mut out = vec![check("completed", if done { 1.0 } else { 0.0 }, done)];
    if !rep.degenerate {
        out.push(check("tail_slope", rep.slope, rep.slope < 0.0));
        out.push(check("tail_r2", rep.r_squared, rep.r_squared > 0.95));
        out.push(check(
            "tail_monotone",
            rep.tail_increase.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            rep.tail_monotone(),
        ));
    }
    Ok(out)
}

fn balance_cmd(cfg: &RunConfig, dir: &Path, progress: &Progress) -> anyhow::Result<Vec<Check>> {
    progress.say("balance");
    let rep = preset_balance(cfg)?;
    rep.write(dir)?;
    Ok(rep.rows.iter().map(|r| check(r.name, r.value, r.pass)).collect())
}

/// Marks failures that happen while loading or validating the config.
#[derive(Debug)]
struct ConfigError(anyhow::Error);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn is_config_error(e: &anyhow::Error) -> bool {
    e.downcast_ref::<ConfigError>().is_some()
        || matches!(
            e.downcast_ref::<QhdError>(),
            Some(
                QhdError::Parse { .. }
                    | QhdError::Validation(_)
                    | QhdError::InvalidParameter(_)
                    | QhdError::InvalidGrid { .. }
            )
        )
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let (Command::RunSl(c)
    | Command::RunQdd(c)
    | Command::RelaxSweep(c)
    | Command::CheckInequalities(c)
    | Command::Decay(c)
    | Command::Balance(c)) = &cli.command;
    let cfg = read_config(&c.config).with_context(|| format!("reading {}", c.config.display())).map_err(ConfigError)?;
    let dir = c.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut progress = Progress { quiet: c.quiet, every: 0 };
    let checks = match &cli.command {
        Command::RunSl(_) => run_sl_cmd(&cfg, &dir, &mut progress)?,
        Command::RunQdd(_) => run_qdd_cmd(&cfg, &dir, &progress)?,
        Command::RelaxSweep(_) => relax_cmd(&cfg, &dir, &progress)?,
        Command::CheckInequalities(_) => inequalities_cmd(&cfg, &dir, &progress)?,
        Command::Decay(_) => decay_cmd(&cfg, &dir, &progress)?,
        Command::Balance(_) => balance_cmd(&cfg, &dir, &progress)?,
    };
    write_verdict(&dir, &checks)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_config_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
