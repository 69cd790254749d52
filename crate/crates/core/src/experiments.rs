//! Initial data and the named experiment presets.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{QhdError, Result};
use crate::functionals::{
    check_admissible, check_log_embedding, check_log_h2, check_log_h2_planar, check_log_sobolev, dep_condition,
    energy_parts, gcp, Admissibility, DecayConstants, FunctionalRecord,
};
use crate::io::{write_csv_file, write_record_csv_file, RunConfig};
use crate::madelung::{check_potential_flow, lift_wavefunction, Coupling, HydroState, PressureLaw, WaveFunction};
use crate::relaxation::{sweep, uniform_grid, RelaxationReport};
use crate::sl::{
    appendix_energy_residual, energy_balance_residual, energy_rate_residual, entropy_balance_residual,
    entropy_estimate_violation, gcp_balance_initial, gcp_balance_residual, run_sl, SLParams, SLTrajectory,
};
use crate::spectral::{gradient, RealField, TorusGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialKind {
    Ground,
    Modal,
    #[serde(alias = "random-band-limited")]
    Random,
}

/// Recipe for `(ρ₀, v₀)`; `v₀ = ∇φ` is curl-free with zero circulation by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialDataSpec {
    pub kind: InitialKind,
    pub m0: f64,
    pub delta: f64,
    /// Modal: coefficient of each density cosine. Random: bound on `|ρ₀ − M₀|`.
    pub amplitude: f64,
    pub modes: Vec<[i64; 2]>,
    pub seed: u64,
    pub band: i64,
    /// Modal: speed carried by each velocity mode. Random: bound on `|v₀|`.
    pub velocity_amplitude: f64,
    pub velocity_modes: Vec<[i64; 2]>,
    /// Smallness parameter of the admissibility check.
    pub epsilon: f64,
}

impl InitialDataSpec {
    pub fn ground(m0: f64, delta: f64) -> Self {
        Self {
            kind: InitialKind::Ground,
            m0,
            delta,
            amplitude: 0.0,
            modes: Vec::new(),
            seed: 0,
            band: 1,
            velocity_amplitude: 0.0,
            velocity_modes: Vec::new(),
            epsilon: 0.1,
        }
    }

    pub fn modal(m0: f64, delta: f64, amplitude: f64, modes: Vec<[i64; 2]>) -> Self {
        Self { kind: InitialKind::Modal, amplitude, modes, ..Self::ground(m0, delta) }
    }

    pub fn random(m0: f64, delta: f64, amplitude: f64, band: i64, seed: u64) -> Self {
        Self { kind: InitialKind::Random, amplitude, band, seed, ..Self::ground(m0, delta) }
    }
}

/// Output of [`make_initial`].
#[derive(Clone, Debug)]
pub struct InitialData {
    pub state: HydroState,
    pub wave: WaveFunction,
    pub e0: f64,
    pub i0: f64,
    pub admissibility: Admissibility,
    /// `None` when `E₀ = 0`.
    pub decay: Option<DecayConstants>,
}

/// Random trigonometric polynomial `Σ a cos(2πj·x) + b sin(2πj·x)` over `0 < |j|∞ ≤ band`
/// (one representative of each `±j` pair), with its coefficients.
struct RandomModes {
    terms: Vec<([i64; 2], f64, f64)>,
}

impl RandomModes {
    fn new(band: i64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut terms = Vec::new();
        for j1 in 0..=band {
            for j2 in -band..=band {
                if j1 == 0 && j2 <= 0 {
                    continue;
                }
                terms.push(([j1, j2], rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            }
        }
        Self { terms }
    }

    fn eval(&self, x: f64, y: f64) -> f64 {
        self.terms
            .iter()
            .map(|(j, a, b)| {
                let th = 2.0 * PI * (j[0] as f64 * x + j[1] as f64 * y);
                a * th.cos() + b * th.sin()
            })
            .sum()
    }

    /// `Σ(|a| + |b|)·w(j)`, a grid-independent bound.
    fn bound(&self, w: impl Fn([i64; 2]) -> f64) -> f64 {
        self.terms.iter().map(|(j, a, b)| (a.abs() + b.abs()) * w(*j)).sum()
    }
}

fn check_modes(grid: &TorusGrid, modes: &[[i64; 2]], what: &str) -> Result<()> {
    for j in modes {
        if j[0] == 0 && j[1] == 0 {
            return Err(QhdError::InvalidParameter(format!("{what}: the zero mode is not a perturbation")));
        }
        if 3 * j[0].unsigned_abs() as usize > grid.n1() || 3 * j[1].unsigned_abs() as usize > grid.n2() {
            return Err(QhdError::InvalidParameter(format!("{what}: mode {j:?} lies above the dealiasing cutoff")));
        }
    }
    Ok(())
}

fn band_modes(band: i64) -> Vec<[i64; 2]> {
    vec![[band, band]]
}

/// Builds `(ρ₀, v₀)` with mean exactly `M₀`, checks positivity and potential flow,
/// and lifts it to a wave function.
pub fn make_initial(spec: &InitialDataSpec, grid: &TorusGrid, law: &PressureLaw) -> Result<InitialData> {
    make_initial_with(spec, grid, law, &Coupling::default())
}

pub fn make_initial_with(
    spec: &InitialDataSpec,
    grid: &TorusGrid,
    law: &PressureLaw,
    coupling: &Coupling,
) -> Result<InitialData> {
    if (law.m0 - spec.m0).abs() > 0.0 {
        return Err(QhdError::InvalidParameter("pressure law and initial data disagree on M0".into()));
    }
    let (dev, phi) = match spec.kind {
        InitialKind::Ground => (RealField::zeros(grid), RealField::zeros(grid)),
        InitialKind::Modal => {
            check_modes(grid, &spec.modes, "density")?;
            check_modes(grid, &spec.velocity_modes, "velocity")?;
            let a = spec.amplitude;
            let dev = RealField::from_fn(grid, |x, y| {
                spec.modes.iter().map(|j| a * (2.0 * PI * (j[0] as f64 * x + j[1] as f64 * y)).cos()).sum()
            });
            let phi = RealField::from_fn(grid, |x, y| {
                spec.velocity_modes
                    .iter()
                    .map(|j| {
                        let k = 2.0 * PI * ((j[0] * j[0] + j[1] * j[1]) as f64).sqrt();
                        spec.velocity_amplitude / k * (2.0 * PI * (j[0] as f64 * x + j[1] as f64 * y)).sin()
                    })
                    .sum()
            });
            (dev, phi)
        }
        InitialKind::Random => {
            check_modes(grid, &band_modes(spec.band), "random band")?;
            let m = RandomModes::new(spec.band, spec.seed);
            let s = spec.amplitude / m.bound(|_| 1.0);
            let dev = RealField::from_fn(grid, |x, y| s * m.eval(x, y));
            let phi = if spec.velocity_amplitude != 0.0 {
                let m = RandomModes::new(spec.band, spec.seed ^ 0x9e37_79b9_7f4a_7c15);
                let s = spec.velocity_amplitude / m.bound(|j| 2.0 * PI * ((j[0] * j[0] + j[1] * j[1]) as f64).sqrt());
                RealField::from_fn(grid, |x, y| s * m.eval(x, y))
            } else {
                RealField::zeros(grid)
            };
            (dev, phi)
        }
    };
    let mean = dev.mean();
    let rho = dev.map(|d| spec.m0 + (d - mean));
    let lo = rho.min();
    if lo < spec.delta || lo.is_nan() {
        return Err(QhdError::VacuumBreach { min_rho: lo, delta: spec.delta });
    }
    let v = gradient(&phi);
    check_potential_flow(&v)?;
    let state = HydroState::from_hydro(rho, v, law, coupling);
    let wave = lift_wavefunction(&state, 0.0, spec.delta)?;
    let e0: f64 = energy_parts(&state, law, coupling).iter().sum();
    let i0 = gcp(&state);
    let admissibility = check_admissible(e0, i0, spec.m0, spec.delta, spec.epsilon);
    let decay = DecayConstants::new(spec.m0, e0, spec.delta, law.n, 1.0).ok();
    Ok(InitialData { state, wave, e0, i0, admissibility, decay })
}

/// Grid and initial data described by a config.
pub fn initial_from_config(cfg: &RunConfig) -> Result<(TorusGrid, InitialData)> {
    let grid = cfg.grid()?;
    let data = make_initial_with(&cfg.initial_spec(), &grid, &cfg.law(), &cfg.coupling())?;
    Ok((grid, data))
}

fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum();
    (slope, icpt, if syy > 0.0 { 1.0 - sse / syy } else { 1.0 })
}

/// Monotonicity slack on the tail of the decay preset.
pub const TAIL_SLACK: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct DecayReport {
    pub tau: f64,
    pub degenerate: bool,
    pub trajectory: SLTrajectory,
    pub tail_start: f64,
    /// Least-squares fit of `log F` on the tail: slope, intercept, r².
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Largest increase of `H`, `E`, `I` between consecutive tail records.
    pub tail_increase: [f64; 3],
    /// `C₀` fitted to `log(F/F₀) = (C₀/τ)∫∫ρ|v|² − c₂τt`, and the largest `c₂` for which
    /// `F(t) ≤ F(0)exp((C₀/τ)∫∫ρ|v|² − c₂τt)` holds at every record.
    pub fitted_c0: f64,
    pub fitted_c2: f64,
    pub bound_c2: f64,
    pub admissibility: Admissibility,
    pub dep_condition: (f64, f64),
    pub constants: Option<DecayConstants>,
}

impl DecayReport {
    pub fn tail_monotone(&self) -> bool {
        self.tail_increase.iter().all(|d| *d <= TAIL_SLACK)
    }

    pub fn passed(&self) -> bool {
        if self.degenerate {
            return self.trajectory.completed();
        }
        self.trajectory.completed() && self.slope < 0.0 && self.r_squared > 0.95 && self.tail_monotone()
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "tau = {}", self.tau);
        let _ = writeln!(s, "status = {:?}", self.trajectory.status);
        if self.degenerate {
            let _ = writeln!(s, "degenerate = true (F(0) = 0, nothing to decay)");
        }
        let _ = writeln!(s, "tail_start = {}", self.tail_start);
        let _ = writeln!(s, "tail_slope = {:.10e}", self.slope);
        let _ = writeln!(s, "tail_intercept = {:.10e}", self.intercept);
        let _ = writeln!(s, "tail_r2 = {:.10}", self.r_squared);
        let _ = writeln!(
            s,
            "tail_max_increase H = {:.3e} E = {:.3e} I = {:.3e} (slack {TAIL_SLACK:e})",
            self.tail_increase[0], self.tail_increase[1], self.tail_increase[2]
        );
        let _ = writeln!(s, "fitted_C0 = {:.6e}", self.fitted_c0);
        let _ = writeln!(s, "fitted_c2 = {:.6e}", self.fitted_c2);
        let _ = writeln!(s, "bound_c2 = {:.6e}", self.bound_c2);
        let _ = writeln!(
            s,
            "admissible = {} (lhs {:.6e}, rhs {:.6e})",
            self.admissibility.holds, self.admissibility.lhs, self.admissibility.rhs
        );
        let _ = writeln!(s, "dep_condition lhs = {:.6e} rhs = {:.6e}", self.dep_condition.0, self.dep_condition.1);
        match &self.constants {
            Some(c) => {
                let _ = writeln!(s, "c1 = {:.6e}", c.c1);
                let _ = writeln!(s, "tau_star = {:.6e}", c.tau_star);
                if self.tau > c.tau_star {
                    let _ = writeln!(s, "note: tau exceeds tau_star");
                }
            }
            None => {
                let _ = writeln!(s, "c1 = 1 (E0 = 0)");
            }
        }
        let _ = writeln!(s, "pass = {}", self.passed());
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_record_csv_file(&dir.join("decay_records.csv"), &self.trajectory.records)?;
        std::fs::write(dir.join("decay_summary.txt"), self.summary())?;
        Ok(())
    }
}

fn max_increase(recs: &[&FunctionalRecord], f: impl Fn(&FunctionalRecord) -> f64) -> f64 {
    recs.windows(2).map(|w| f(w[1]) - f(w[0])).fold(f64::NEG_INFINITY, f64::max)
}

/// Runs the damped flow and fits the exponential decay of `F = H + E + c₁I` on `[5τ, T]`.
pub fn preset_decay(cfg: &RunConfig) -> Result<DecayReport> {
    let (_, init) = initial_from_config(cfg)?;
    let params = cfg.sl_params();
    let tau = params.tau;
    let traj = run_sl(&init.wave, &params)?;
    let f0 = traj.records.first().map_or(0.0, |r| r.combined);
    let tail_start = 5.0 * tau;
    let tail: Vec<&FunctionalRecord> = traj.records.iter().filter(|r| r.t >= tail_start - 1e-12).collect();
    let mut rep = DecayReport {
        tau,
        degenerate: f0 == 0.0,
        tail_start,
        slope: 0.0,
        intercept: 0.0,
        r_squared: 1.0,
        tail_increase: [0.0; 3],
        fitted_c0: 0.0,
        fitted_c2: 0.0,
        bound_c2: f64::INFINITY,
        admissibility: init.admissibility,
        dep_condition: dep_condition(init.e0, traj.c1, f0, cfg.physics.m0, cfg.physics.delta, cfg.physics.c0_cal),
        constants: init.decay,
        trajectory: traj.clone(),
    };
    if tail.len() >= 2 {
        rep.tail_increase =
            [max_increase(&tail, |r| r.entropy), max_increase(&tail, |r| r.energy), max_increase(&tail, |r| r.gcp)];
    }
    if rep.degenerate {
        return Ok(rep);
    }
    let pos: Vec<&&FunctionalRecord> = tail.iter().filter(|r| r.combined > 0.0).collect();
    if pos.len() < 3 {
        return Err(QhdError::DegenerateData("fewer than 3 positive tail samples of F".into()));
    }
    let x: Vec<f64> = pos.iter().map(|r| r.t).collect();
    let y: Vec<f64> = pos.iter().map(|r| r.combined.ln()).collect();
    let (slope, icpt, r2) = linear_fit(&x, &y);
    rep.slope = slope;
    rep.intercept = icpt;
    rep.r_squared = r2;
    // Two-parameter least squares for (C₀, c₂) over all records with t > 0.
    let pts: Vec<(f64, f64, f64)> = traj
        .records
        .iter()
        .filter(|r| r.t > 0.0 && r.combined > 0.0)
        .map(|r| (r.cum_diss_v / tau, -tau * r.t, (r.combined / f0).ln()))
        .collect();
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(p, q, y) in &pts {
        a11 += p * p;
        a12 += p * q;
        a22 += q * q;
        b1 += p * y;
        b2 += q * y;
    }
    let det = a11 * a22 - a12 * a12;
    if det.abs() > 0.0 {
        rep.fitted_c0 = (b1 * a22 - b2 * a12) / det;
        rep.fitted_c2 = (a11 * b2 - a12 * b1) / det;
    }
    let c0 = rep.fitted_c0.max(0.0);
    rep.bound_c2 = pts.iter().map(|&(p, q, y)| (c0 * p - y) / (-q)).fold(f64::INFINITY, f64::min);
    Ok(rep)
}

/// One line of the balance table.
#[derive(Clone, Debug, PartialEq)]
pub struct BalanceRow {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
    /// `true`: pass when `value ≤ threshold`; `false`: pass when `value ≥ threshold`.
    pub upper: bool,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct BalanceReport {
    pub dt: f64,
    pub rows: Vec<BalanceRow>,
    /// Residuals at `dt` and `dt/2`: energy, GCP, entropy, appendix.
    pub residuals: [[f64; 2]; 4],
}

impl BalanceReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn table(&self) -> String {
        let mut s = String::from("check,value,threshold,kind,pass\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.name,
                crate::io::fmt_f64(r.value),
                crate::io::fmt_f64(r.threshold),
                if r.upper { "max" } else { "min" },
                r.pass
            );
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("balance_table.csv"), self.table())?;
        write_csv_file(
            &dir.join("balance_residuals.csv"),
            "dt,energy,gcp,entropy,appendix",
            [0, 1].into_iter().map(|k| {
                let dt = self.dt / (1 << k) as f64;
                vec![dt, self.residuals[0][k], self.residuals[1][k], self.residuals[2][k], self.residuals[3][k]]
            }),
        )?;
        Ok(())
    }
}

/// `log₂(r(dt)/r(dt/2))`, infinite when both residuals vanish.
pub fn observed_order(coarse: f64, fine: f64) -> f64 {
    if coarse == 0.0 && fine == 0.0 {
        f64::INFINITY
    } else {
        (coarse / fine).log2()
    }
}

fn dense_run(wave: &WaveFunction, p: &SLParams) -> Result<SLTrajectory> {
    let mut p = p.clone();
    p.monitor_every = 1;
    p.balance_monitor = true;
    p.checkpoint_every = 0;
    let t = run_sl(wave, &p)?;
    if !t.completed() {
        return Err(QhdError::InvalidParameter(format!("balance run did not complete: {:?}", t.status)));
    }
    Ok(t)
}

/// Relative mass drift `max |M(t) − M₀| / M₀` along a trajectory.
pub fn mass_drift(traj: &SLTrajectory) -> f64 {
    let m0 = traj.records.first().map_or(1.0, |r| r.mass);
    traj.records.iter().map(|r| (r.mass - m0).abs()).fold(0.0, f64::max) / m0
}

/// Balance-law residual suite with a `dt`-halving refinement.
pub fn preset_balance(cfg: &RunConfig) -> Result<BalanceReport> {
    let (_, init) = initial_from_config(cfg)?;
    let base = cfg.sl_params();
    let coarse = dense_run(&init.wave, &base)?;
    let mut half = base.clone();
    half.dt = 0.5 * base.dt;
    let fine = dense_run(&init.wave, &half)?;
    let mut ham = base.clone();
    ham.tau = f64::INFINITY;
    ham.monitor_every = cfg.integrator.monitor_every;
    let hamiltonian = run_sl(&init.wave, &ham)?;

    let en = [energy_balance_residual(&coarse), energy_balance_residual(&fine)];
    let gc = [gcp_balance_residual(&coarse), gcp_balance_residual(&fine)];
    let ent = [entropy_balance_residual(&coarse), entropy_balance_residual(&fine)];
    let app = [appendix_energy_residual(&coarse), appendix_energy_residual(&fine)];
    let ratio = if en[0] == 0.0 && en[1] == 0.0 { 0.0 } else { en[1] / en[0] };
    let e0 = hamiltonian.e0();
    let ham_drift = hamiltonian.records.iter().map(|r| (r.energy - e0).abs()).fold(0.0, f64::max);
    let tol = cfg.output.tolerance;
    let up = |name, value: f64, thr: f64| {
        let threshold = tol.unwrap_or(thr);
        BalanceRow { name, value, threshold, upper: true, pass: value <= threshold }
    };
    let low = |name, value: f64, thr: f64| BalanceRow { name, value, threshold: thr, upper: false, pass: value >= thr };
    let mut rows = vec![
        up("mass_drift", mass_drift(&coarse).max(mass_drift(&fine)), 1e-10),
        up("energy_residual_ratio", ratio, 0.35),
        up("hamiltonian_energy_drift", ham_drift, 1e-6),
        low("gcp_order", observed_order(gc[0], gc[1]), 0.9),
        low("entropy_order", observed_order(ent[0], ent[1]), 0.9),
        up("entropy_estimate_violation", entropy_estimate_violation(&coarse).max(0.0), 1e-4),
        low("appendix_order", observed_order(app[0], app[1]), 0.9),
        up("appendix_vs_energy_rate", (app[0] - energy_rate_residual(&coarse)).abs(), 1e-8),
    ];
    // The first-record GCP check is an analytic reduction that needs v₀ = 0.
    if init.state.v.iter().all(|c| c.values().iter().all(|x| *x == 0.0)) {
        rows.insert(4, up("gcp_initial_residual", gcp_balance_initial(&coarse), 10.0 * base.dt));
    }
    Ok(BalanceReport { dt: base.dt, rows, residuals: [en, gc, ent, app] })
}

/// Sweep over the configured relaxation times.
pub fn preset_relaxation(cfg: &RunConfig) -> Result<RelaxationReport> {
    let (_, init) = initial_from_config(cfg)?;
    let taus = &cfg.physics.taus;
    let grid_t = uniform_grid(cfg.integrator.t_prime_end, cfg.integrator.t_prime_step);
    let tmpl = cfg.sl_params_for(taus[0]);
    let mut qdd = cfg.qdd_params();
    qdd.t_end = cfg.integrator.t_prime_end;
    sweep(&init.state, taus, &grid_t, &tmpl, &qdd)
}

#[derive(Clone, Debug)]
pub struct InequalityReport {
    /// `(lhs, rhs)` of the log-H² inequality for each random density.
    pub log_h2: Vec<(f64, f64)>,
    /// Left side of the planar form with constants `¼, ½, ¼` (same right side).
    pub log_h2_planar: Vec<f64>,
    /// Worst relative change of the two empirical ratios under `u → cu`.
    pub scale_defect: [f64; 2],
    /// Ratios at the configured and the doubled resolution.
    pub resolution: [[f64; 2]; 2],
    pub slack: f64,
}

impl InequalityReport {
    fn within(&self, l: f64, r: f64) -> bool {
        l <= r + self.slack * (1.0 + r.abs())
    }

    pub fn log_h2_holds(&self) -> bool {
        self.log_h2.iter().all(|&(l, r)| self.within(l, r))
    }

    pub fn log_h2_planar_holds(&self) -> bool {
        self.log_h2_planar.iter().zip(&self.log_h2).all(|(&l, &(_, r))| self.within(l, r))
    }

    /// Largest `lhs/rhs` of the stated log-H² form over the corpus.
    pub fn log_h2_worst_ratio(&self) -> f64 {
        self.log_h2.iter().map(|(l, r)| l / r).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn resolution_change(&self) -> [f64; 2] {
        [0, 1].map(|k| ((self.resolution[1][k] - self.resolution[0][k]) / self.resolution[0][k]).abs())
    }

    pub fn passed(&self) -> bool {
        self.log_h2_holds()
            && self.scale_defect.iter().all(|d| *d <= 1e-12)
            && self.resolution_change().iter().all(|d| *d <= 0.05)
    }

    pub fn table(&self) -> String {
        let mut s = String::from("case,lhs,rhs,holds,planar_lhs,planar_holds\n");
        for (k, (&(l, r), &pl)) in self.log_h2.iter().zip(&self.log_h2_planar).enumerate() {
            let _ = writeln!(
                s,
                "{k},{},{},{},{},{}",
                crate::io::fmt_f64(l),
                crate::io::fmt_f64(r),
                self.within(l, r),
                crate::io::fmt_f64(pl),
                self.within(pl, r)
            );
        }
        s
    }

    pub fn summary(&self) -> String {
        let rc = self.resolution_change();
        format!(
            "log_h2_cases = {}\nlog_h2_holds = {}\nlog_h2_violations = {}\nlog_h2_worst_ratio = {:.12e}\nlog_h2_planar_holds = {}\nscale_defect_embedding = {:.3e}\nscale_defect_sobolev = {:.3e}\n\
             embedding_ratio = {:.12e} -> {:.12e} (change {:.3e})\nsobolev_ratio = {:.12e} -> {:.12e} (change {:.3e})\npass = {}\n",
            self.log_h2.len(),
            self.log_h2_holds(),
            self.log_h2.iter().filter(|&&(l, r)| !self.within(l, r)).count(),
            self.log_h2_worst_ratio(),
            self.log_h2_planar_holds(),
            self.scale_defect[0],
            self.scale_defect[1],
            self.resolution[0][0],
            self.resolution[1][0],
            rc[0],
            self.resolution[0][1],
            self.resolution[1][1],
            rc[1],
            self.passed()
        )
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("inequalities_log_h2.csv"), self.table())?;
        std::fs::write(dir.join("inequalities_summary.txt"), self.summary())?;
        Ok(())
    }
}

/// Number of random densities in the inequality suite.
pub const INEQUALITY_CASES: u64 = 100;

fn ratios(rho: &RealField, m0: f64) -> Result<[f64; 2]> {
    let u = rho.map(|r| r - m0);
    Ok([check_log_embedding(&u)?, check_log_sobolev(&rho.map(f64::sqrt))])
}

/// Functional inequalities on random band-limited densities.
pub fn preset_inequalities(cfg: &RunConfig) -> Result<InequalityReport> {
    let grid = cfg.grid()?;
    let law = cfg.law();
    let base = cfg.initial_spec();
    let amplitude = if base.amplitude > 0.0 { base.amplitude } else { 0.5 * (base.m0 - base.delta) };
    let mut log_h2 = Vec::new();
    let mut log_h2_planar = Vec::new();
    let mut scale_defect = [0.0f64; 2];
    for k in 0..INEQUALITY_CASES {
        let spec = InitialDataSpec {
            kind: InitialKind::Random,
            amplitude: amplitude.min(0.95 * (base.m0 - base.delta)),
            seed: base.seed.wrapping_add(k),
            velocity_amplitude: 0.0,
            ..base.clone()
        };
        let init = make_initial(&spec, &grid, &law)?;
        let rho = &init.state.rho;
        let c = check_log_h2(rho, base.delta)?;
        log_h2.push((c.lhs, c.rhs));
        log_h2_planar.push(check_log_h2_planar(rho, base.delta)?.lhs);
        let r = ratios(rho, base.m0)?;
        for scale in [0.37, 11.0] {
            let u = rho.map(|x| scale * (x - base.m0));
            let e = check_log_embedding(&u)?;
            let s = check_log_sobolev(&rho.map(|x| scale * x.sqrt()));
            scale_defect[0] = scale_defect[0].max(((e - r[0]) / r[0]).abs());
            scale_defect[1] = scale_defect[1].max(((s - r[1]) / r[1]).abs());
        }
    }
    let spec = InitialDataSpec { kind: InitialKind::Random, amplitude, velocity_amplitude: 0.0, ..base.clone() };
    let fine = TorusGrid::new(2 * grid.n1(), 2 * grid.n2())?;
    let a = ratios(&make_initial(&spec, &grid, &law)?.state.rho, base.m0)?;
    let b = ratios(&make_initial(&spec, &fine, &law)?.state.rho, base.m0)?;
    Ok(InequalityReport { log_h2, log_h2_planar, scale_defect, resolution: [a, b], slack: 1e-10 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ground_initial_data() {
        let g = TorusGrid::square(16).unwrap();
        let law = PressureLaw::new(1, 1.0);
        let d = make_initial(&InitialDataSpec::ground(1.0, 0.25), &g, &law).unwrap();
        assert_eq!(d.e0, 0.0);
        assert_eq!(d.i0, 0.0);
        // lhs = e^0(1 + 0) = 1 against ε e^{M₀−δ}/(M₀−δ) ≈ 0.282 at ε = 0.1.
        assert_eq!(d.admissibility.lhs, 1.0);
        assert!(!d.admissibility.holds);
        let mut s = InitialDataSpec::ground(1.0, 0.25);
        s.epsilon = 1.0;
        assert!(make_initial(&s, &g, &law).unwrap().admissibility.holds);
        assert!(d.decay.is_none());
    }

    #[test]
    fn random_data_is_reproducible() {
        let g = TorusGrid::square(32).unwrap();
        let law = PressureLaw::new(1, 1.0);
        let mut s = InitialDataSpec::random(1.0, 0.25, 0.3, 4, 42);
        s.velocity_amplitude = 0.2;
        let a = make_initial(&s, &g, &law).unwrap();
        let b = make_initial(&s, &g, &law).unwrap();
        assert_eq!(a.wave, b.wave);
        assert!((a.state.rho.mean() - 1.0).abs() < 1e-15);
        assert!(a.state.rho.min() >= 0.7 - 1e-12);
    }

    #[test]
    fn modes_above_cutoff_are_rejected() {
        let g = TorusGrid::square(16).unwrap();
        let law = PressureLaw::new(1, 1.0);
        let s = InitialDataSpec::modal(1.0, 0.25, 0.1, vec![[6, 0]]);
        assert!(matches!(make_initial(&s, &g, &law), Err(QhdError::InvalidParameter(_))));
    }
}
