//! Strang-split integrator for the Schrödinger-Langevin equation
//! `iψₜ + ½Δψ = f'(|ψ|²)ψ + S ψ/τ + Vψ` and its balance-law monitors.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{QhdError, Result};
use crate::functionals::{
    dissipation, energy_parts, entropy, frob_sq, gcp, log_sqrt_hessian, record_with, DecayConstants, Dissipation,
    FunctionalRecord, RunningIntegrals,
};
use crate::madelung::{extract_hydro_with, phase_spectrum, Coupling, HydroState, PressureLaw, WaveFunction};
use crate::spectral::{mean_of, ComplexField, RealField, TorusGrid};

/// Run parameters of the Schrödinger-Langevin integrator.
///
/// `tau = f64::INFINITY` switches off both the damping and the `S/τ` potential.
#[derive(Clone, Debug, PartialEq)]
pub struct SLParams {
    pub tau: f64,
    pub law: PressureLaw,
    pub coupling: Coupling,
    pub delta: f64,
    pub dt: f64,
    pub t_end: f64,
    pub dealias: bool,
    pub monitor_every: usize,
    /// Store a wave-function checkpoint every this many records (0 = never).
    pub checkpoint_every: usize,
    /// Collect [`BalanceSample`]s at every record.
    pub balance_monitor: bool,
    pub c0_cal: f64,
}

impl SLParams {
    pub fn new(tau: f64, law: PressureLaw, delta: f64, dt: f64, t_end: f64) -> Self {
        Self {
            tau,
            law,
            coupling: Coupling::default(),
            delta,
            dt,
            t_end,
            dealias: true,
            monitor_every: 1,
            checkpoint_every: 0,
            balance_monitor: false,
            c0_cal: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(QhdError::InvalidParameter(m.to_string()));
        if !(self.tau > 0.0) {
            return bad("tau must be > 0");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be > 0");
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad("t_end must be > 0");
        }
        if !(self.delta > 0.0) {
            return bad("delta must be > 0");
        }
        if self.monitor_every == 0 {
            return bad("monitor_every must be >= 1");
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round().max(1.0) as usize
    }

    /// `(e^{−h/τ} − 1, τ(1 − e^{−h/τ}))` for the exact phase sub-flow.
    fn relax_coeffs(&self, h: f64) -> (f64, f64) {
        if self.tau.is_infinite() {
            (0.0, h)
        } else {
            let x = -h / self.tau;
            let em1 = x.exp_m1();
            (em1, -self.tau * em1)
        }
    }

    fn inv_tau(&self) -> f64 {
        if self.tau.is_infinite() {
            0.0
        } else {
            1.0 / self.tau
        }
    }
}

/// Unwrapped phase `S` and local potential `W = f'(ρ) + V` at a sub-step start.
#[derive(Clone, Debug)]
pub(crate) struct Stage {
    s: Vec<f64>,
    w: Vec<f64>,
}

/// Reusable single-trajectory integrator.
pub struct SlStepper {
    params: SLParams,
    grid: TorusGrid,
    propagator: Vec<Complex64>,
    cache: Option<Stage>,
}

impl SlStepper {
    pub fn new(params: &SLParams, grid: &TorusGrid) -> Result<Self> {
        params.validate()?;
        let propagator = (0..grid.len()).map(|i| Complex64::from_polar(1.0, -0.5 * grid.k_sq(i) * params.dt)).collect();
        Ok(Self { params: params.clone(), grid: grid.clone(), propagator, cache: None })
    }

    pub fn params(&self) -> &SLParams {
        &self.params
    }

    /// Drops cached sub-step data (call after modifying the state externally).
    pub fn reset(&mut self) {
        self.cache = None;
    }

    /// Phase and potential of `psi`, with the phase mean taken on the branch nearest `hint`.
    pub(crate) fn stage_of(&self, psi: &[Complex64], spec: Option<Vec<Complex64>>, hint: f64) -> Stage {
        let grid = &self.grid;
        let n = grid.len();
        let spec = spec.unwrap_or_else(|| grid.forward_complex(psi));
        let (mut g1, mut g2) = grid.grad_spectrum(&spec);
        grid.inverse_inplace(&mut g1);
        grid.inverse_inplace(&mut g2);
        let mut rho = Vec::with_capacity(n);
        let mut v1 = Vec::with_capacity(n);
        let mut v2 = Vec::with_capacity(n);
        for i in 0..n {
            let r = psi[i].norm_sqr();
            rho.push(r);
            v1.push((g1[i] * psi[i].conj()).im / r);
            v2.push((g2[i] * psi[i].conj()).im / r);
        }
        let (s1, s2) = grid.forward_real_pair(&v1, &v2);
        let sspec = phase_spectrum(grid, &s1, &s2);
        let vspec = if self.params.coupling.poisson {
            let mut r = grid.forward_real(&rho);
            crate::spectral::inverse_laplacian_spectrum(grid, &mut r);
            r
        } else {
            vec![Complex64::new(0.0, 0.0); n]
        };
        let (mut s, pot) = grid.inverse_real_pair(&sspec, &vspec);
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            acc += psi[i] / rho[i].sqrt() * Complex64::from_polar(1.0, -s[i]);
        }
        let raw = acc.arg();
        let c = raw + 2.0 * PI * ((hint - raw) / (2.0 * PI)).round();
        for x in s.iter_mut() {
            *x += c;
        }
        let law = self.params.law;
        let coupling = self.params.coupling;
        let w = (0..n).map(|i| coupling.f_prime(&law, rho[i]) + pot[i]).collect();
        Stage { s, w }
    }

    /// Applies the local phase flow over `h` with potentials frozen at `stage`;
    /// returns the applied phase increment.
    pub(crate) fn rotate(&self, psi: &mut [Complex64], stage: &Stage, h: f64) -> Vec<f64> {
        let (a, b) = self.params.relax_coeffs(h);
        let mut dtheta: Vec<f64> = stage.s.iter().zip(&stage.w).map(|(s, w)| a * s - b * w).collect();
        if self.params.dealias {
            let mut spec = self.grid.forward_real(&dtheta);
            self.grid.dealias_spectrum(&mut spec);
            dtheta = self.grid.inverse_real(spec);
        }
        for (p, d) in psi.iter_mut().zip(&dtheta) {
            *p *= Complex64::from_polar(1.0, *d);
        }
        dtheta
    }

    /// Free propagation over one full step; returns the new spectrum.
    pub(crate) fn kinetic(&self, psi: &mut [Complex64]) -> Vec<Complex64> {
        self.grid.forward_inplace(psi);
        for (p, e) in psi.iter_mut().zip(&self.propagator) {
            *p *= e;
        }
        let spec = psi.to_vec();
        self.grid.inverse_inplace(psi);
        spec
    }

    fn floor_check(&self, psi: &[Complex64]) -> Result<()> {
        let m = psi.iter().map(|c| c.norm_sqr()).fold(f64::INFINITY, f64::min);
        if m < self.params.delta || m.is_nan() {
            Err(QhdError::VacuumBreach { min_rho: m, delta: self.params.delta })
        } else {
            Ok(())
        }
    }

    /// One Strang step with potentials taken from the current iterate.
    pub fn step(&mut self, w: &mut WaveFunction) -> Result<()> {
        let h = self.params.dt;
        let psi = w.psi.values_mut();
        let stage_a = match self.cache.take() {
            Some(s) => s,
            None => {
                self.floor_check(psi)?;
                self.stage_of(psi, None, w.mean_phase)
            }
        };
        let da = self.rotate(psi, &stage_a, 0.5 * h);
        let hint = mean_of(&stage_a.s) + mean_of(&da);
        let spec = self.kinetic(psi);
        self.floor_check(psi)?;
        let stage_c = self.stage_of(psi, Some(spec), hint);
        let dc = self.rotate(psi, &stage_c, 0.5 * h);
        let s: Vec<f64> = stage_c.s.iter().zip(&dc).map(|(a, b)| a + b).collect();
        w.mean_phase = mean_of(&s);
        self.cache = Some(Stage { s, w: stage_c.w });
        Ok(())
    }

    /// One step with externally supplied sub-step potentials (frozen-coefficient
    /// linear problem); returns the potentials of the advanced state itself.
    pub(crate) fn step_frozen(
        &self,
        w: &mut WaveFunction,
        given_a: &Stage,
        given_c: &Stage,
        own_a: &Stage,
    ) -> Result<(Stage, Stage)> {
        let h = self.params.dt;
        let psi = w.psi.values_mut();
        let da = self.rotate(psi, given_a, 0.5 * h);
        let hint = mean_of(&own_a.s) + mean_of(&da);
        let spec = self.kinetic(psi);
        self.floor_check(psi)?;
        let own_c = self.stage_of(psi, Some(spec), hint);
        let dc = self.rotate(psi, given_c, 0.5 * h);
        let s: Vec<f64> = own_c.s.iter().zip(&dc).map(|(a, b)| a + b).collect();
        w.mean_phase = mean_of(&s);
        let next_a = Stage { s, w: own_c.w.clone() };
        Ok((own_c, next_a))
    }
}

/// One Strang step of the Schrödinger-Langevin flow.
pub fn sl_step(w: &WaveFunction, params: &SLParams) -> Result<WaveFunction> {
    let mut stepper = SlStepper::new(params, w.grid())?;
    let mut out = w.clone();
    stepper.step(&mut out)?;
    Ok(out)
}

/// Quantities entering the balance identities at one time.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BalanceSample {
    pub t: f64,
    pub energy: f64,
    /// `∫ρ|v|²`
    pub dissip_v: f64,
    pub gcp: f64,
    /// `∫ρσ²`
    pub dissip_sigma: f64,
    /// `∫μ p'(ρ)∂ₜρ + ∫ρμ∂ₜV − τ⁻¹∫ρ|v|²μ`
    pub gcp_rhs: f64,
    pub entropy: f64,
    /// `∫ρ|∇²log√ρ|²`
    pub log_hessian: f64,
    /// `∫p'(ρ)|∇√ρ|²`
    pub pressure: f64,
    /// `∫log ρ ∂ₜρ`
    pub log_flux: f64,
    /// `∫ρ v⊗v : ∇²log ρ`
    pub convection: f64,
    /// `∫(ρ − M₀)²`
    pub charge: f64,
    /// `∫ρ|v|⁴`
    pub v4: f64,
    /// `∫div(ρvμ − ∂ₜ√ρ∇√ρ − V∇∂ₜV)`
    pub flux_div: f64,
}

/// Evaluates every balance-law ingredient for `state`.
pub fn balance_sample(state: &HydroState, params: &SLParams, t: f64) -> BalanceSample {
    let grid = state.grid();
    let n = grid.len();
    let law = params.law;
    let coupling = params.coupling;
    let inv_tau = params.inv_tau();
    let rho = state.rho.values();
    let (v1, v2) = (state.v[0].values(), state.v[1].values());
    let mu = state.mu.values();

    let j1: Vec<f64> = (0..n).map(|i| rho[i] * v1[i]).collect();
    let j2: Vec<f64> = (0..n).map(|i| rho[i] * v2[i]).collect();
    let (sj1, sj2) = grid.forward_real_pair(&j1, &j2);
    let div = grid.div_spectrum(&sj1, &sj2);
    let mut dtv_spec: Vec<Complex64> = div.iter().map(|c| -c).collect();
    if coupling.poisson {
        crate::spectral::inverse_laplacian_spectrum(grid, &mut dtv_spec);
    } else {
        dtv_spec.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
    }
    let (divj, dt_v) = grid.inverse_real_pair(&div, &dtv_spec);
    let dt_rho: Vec<f64> = divj.iter().map(|d| -d).collect();

    let a: Vec<f64> = rho.iter().map(|r| r.sqrt()).collect();
    let sa = grid.forward_real(&a);
    let (ga1, ga2) = grid.grad_spectrum(&sa);
    let (a1, a2) = grid.inverse_real_pair(&ga1, &ga2);
    let (gw1, gw2) = grid.grad_spectrum(&dtv_spec);
    let (dtv1, dtv2) = grid.inverse_real_pair(&gw1, &gw2);

    let hess = log_sqrt_hessian(&state.rho);
    let pot = state.potential.values();

    let mut s = BalanceSample { t, ..Default::default() };
    let mut f1 = Vec::with_capacity(n);
    let mut f2 = Vec::with_capacity(n);
    for i in 0..n {
        let r = rho[i];
        let vv = v1[i] * v1[i] + v2[i] * v2[i];
        s.gcp_rhs += mu[i] * coupling.p_prime(&law, r) * dt_rho[i] + r * mu[i] * dt_v[i] - inv_tau * r * vv * mu[i];
        s.log_hessian += r * frob_sq(&hess, i);
        s.pressure += coupling.p_prime(&law, r) * (a1[i] * a1[i] + a2[i] * a2[i]);
        s.log_flux += r.ln() * dt_rho[i];
        let b = [hess[0].values()[i], hess[1].values()[i], hess[2].values()[i]];
        s.convection += 2.0 * r * (v1[i] * v1[i] * b[0] + 2.0 * v1[i] * v2[i] * b[1] + v2[i] * v2[i] * b[2]);
        if coupling.poisson {
            s.charge += (r - law.m0).powi(2);
        }
        let dta = dt_rho[i] / (2.0 * a[i]);
        f1.push(r * v1[i] * mu[i] - dta * a1[i] - pot[i] * dtv1[i]);
        f2.push(r * v2[i] * mu[i] - dta * a2[i] - pot[i] * dtv2[i]);
    }
    let (sf1, sf2) = grid.forward_real_pair(&f1, &f2);
    let fd = grid.inverse_real(grid.div_spectrum(&sf1, &sf2));
    s.flux_div = mean_of(&fd);
    let nf = n as f64;
    s.gcp_rhs /= nf;
    s.log_hessian /= nf;
    s.pressure /= nf;
    s.log_flux /= nf;
    s.convection /= nf;
    s.charge /= nf;
    let d = dissipation(state);
    s.dissip_v = d.v;
    s.dissip_sigma = d.sigma;
    s.v4 = d.v4;
    s.energy = energy_parts(state, &law, &coupling).iter().sum();
    s.gcp = gcp(state);
    s.entropy = entropy(&state.rho, law.m0);
    s
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RunStatus {
    Completed,
    VacuumBreach { t: f64, min_rho: f64 },
}

/// Output of [`run_sl`].
#[derive(Clone, Debug)]
pub struct SLTrajectory {
    pub params: SLParams,
    pub c1: f64,
    pub records: Vec<FunctionalRecord>,
    pub checkpoints: Vec<(f64, WaveFunction)>,
    pub balance: Vec<BalanceSample>,
    pub status: RunStatus,
    pub final_state: WaveFunction,
}

impl SLTrajectory {
    pub fn completed(&self) -> bool {
        self.status == RunStatus::Completed
    }

    pub fn e0(&self) -> f64 {
        self.records.first().map_or(0.0, |r| r.energy)
    }
}

/// Coefficient `c₁` used for `F = H + E + c₁I`; falls back to 1 for data with zero energy.
pub fn combined_weight(params: &SLParams, e0: f64) -> f64 {
    DecayConstants::new(params.law.m0, e0, params.delta, params.law.n, params.c0_cal).map(|d| d.c1).unwrap_or(1.0)
}

/// Observer hook for [`run_sl_with`]: called after every step with the step index.
pub trait StepObserver {
    fn observe(&mut self, step: usize, t: f64, w: &WaveFunction) -> Result<()>;
}

impl StepObserver for () {
    fn observe(&mut self, _: usize, _: f64, _: &WaveFunction) -> Result<()> {
        Ok(())
    }
}

struct Monitor<'a> {
    params: &'a SLParams,
    c1: f64,
    running: RunningIntegrals,
    last: Option<(f64, Dissipation)>,
    records: Vec<FunctionalRecord>,
    checkpoints: Vec<(f64, WaveFunction)>,
    balance: Vec<BalanceSample>,
}

impl Monitor<'_> {
    fn sample(&mut self, t: f64, w: &WaveFunction) -> Result<()> {
        let p = self.params;
        let state = extract_hydro_with(w, &p.law, &p.coupling, p.delta)?;
        let d = dissipation(&state);
        if let Some((t0, d0)) = self.last {
            self.running.advance(&d0, &d, t - t0);
        }
        self.last = Some((t, d));
        let rec = record_with(&state, w, &p.law, &p.coupling, self.c1, t, &self.running, p.delta)?;
        if p.checkpoint_every > 0 && self.records.len() % p.checkpoint_every == 0 {
            self.checkpoints.push((t, w.clone()));
        }
        self.records.push(rec);
        if p.balance_monitor {
            self.balance.push(balance_sample(&state, p, t));
        }
        Ok(())
    }
}

/// Integrates from `psi0` to `params.t_end`, recording functionals at the monitor stride.
pub fn run_sl(psi0: &WaveFunction, params: &SLParams) -> Result<SLTrajectory> {
    run_sl_with(psi0, params, &mut ())
}

pub fn run_sl_with(psi0: &WaveFunction, params: &SLParams, observer: &mut dyn StepObserver) -> Result<SLTrajectory> {
    params.validate()?;
    let grid = psi0.grid().clone();
    let state0 = extract_hydro_with(psi0, &params.law, &params.coupling, params.delta)?;
    crate::madelung::check_potential_flow(&state0.v)?;
    let e0: f64 = energy_parts(&state0, &params.law, &params.coupling).iter().sum();
    let c1 = combined_weight(params, e0);
    let mut mon = Monitor {
        params,
        c1,
        running: RunningIntegrals::default(),
        last: None,
        records: Vec::new(),
        checkpoints: Vec::new(),
        balance: Vec::new(),
    };
    let mut w = psi0.clone();
    mon.sample(0.0, &w)?;
    observer.observe(0, 0.0, &w)?;
    let mut stepper = SlStepper::new(params, &grid)?;
    let steps = params.steps();
    let mut status = RunStatus::Completed;
    for k in 1..=steps {
        let t = k as f64 * params.dt;
        if let Err(e) = stepper.step(&mut w) {
            match e {
                QhdError::VacuumBreach { min_rho, .. } => {
                    status = RunStatus::VacuumBreach { t, min_rho };
                    break;
                }
                other => return Err(other),
            }
        }
        if k % params.monitor_every == 0 || k == steps {
            if let Err(QhdError::VacuumBreach { min_rho, .. }) = mon.sample(t, &w) {
                status = RunStatus::VacuumBreach { t, min_rho };
                break;
            }
        }
        observer.observe(k, t, &w)?;
    }
    Ok(SLTrajectory {
        params: params.clone(),
        c1,
        records: mon.records,
        checkpoints: mon.checkpoints,
        balance: mon.balance,
        status,
        final_state: w,
    })
}

/// `max_t |E(t) + τ⁻¹∫₀ᵗ∫ρ|v|² − E₀| / (1 + E₀)`.
pub fn energy_balance_residual(traj: &SLTrajectory) -> f64 {
    let e0 = traj.e0();
    let it = traj.params.inv_tau();
    traj.records.iter().map(|r| (r.energy + it * r.cum_diss_v - e0).abs()).fold(0.0, f64::max) / (1.0 + e0)
}

fn centered<F: Fn(&BalanceSample) -> f64>(b: &[BalanceSample], k: usize, f: F) -> f64 {
    (f(&b[k + 1]) - f(&b[k - 1])) / (b[k + 1].t - b[k - 1].t)
}

fn require_dense(traj: &SLTrajectory) -> &[BalanceSample] {
    assert!(traj.params.balance_monitor, "balance residuals need a trajectory recorded with balance_monitor = true");
    &traj.balance
}

/// Pointwise residual series of the `dI/dt` identity at interior samples.
pub fn gcp_balance_series(traj: &SLTrajectory) -> Vec<(f64, f64)> {
    let b = require_dense(traj);
    let it = traj.params.inv_tau();
    (1..b.len().saturating_sub(1))
        .map(|k| {
            let di = centered(b, k, |s| s.gcp);
            (b[k].t, di + it * b[k].dissip_sigma - b[k].gcp_rhs)
        })
        .collect()
}

/// Residual of the `dI/dt` identity at the first sample, by a one-sided difference.
pub fn gcp_balance_initial(traj: &SLTrajectory) -> f64 {
    let b = require_dense(traj);
    let it = traj.params.inv_tau();
    // Second-order one-sided difference; needs uniform record spacing.
    let h = b[1].t - b[0].t;
    let di = (-3.0 * b[0].gcp + 4.0 * b[1].gcp - b[2].gcp) / (2.0 * h);
    (di + it * b[0].dissip_sigma - b[0].gcp_rhs).abs()
}

/// Max normalised residual of the `dI/dt` identity.
pub fn gcp_balance_residual(traj: &SLTrajectory) -> f64 {
    let b = require_dense(traj);
    let scale = 1.0 + b.iter().map(|s| s.gcp_rhs.abs()).fold(0.0, f64::max);
    gcp_balance_series(traj).iter().map(|(_, r)| r.abs()).fold(0.0, f64::max) / scale
}

/// Pointwise residual series of the entropy identity at interior samples.
pub fn entropy_balance_series(traj: &SLTrajectory) -> Vec<(f64, f64)> {
    let b = require_dense(traj);
    let tau = traj.params.tau;
    (1..b.len().saturating_sub(1))
        .map(|k| {
            let s = &b[k];
            let dh = centered(b, k, |x| x.entropy);
            let dg = centered(b, k, |x| x.log_flux);
            let rhs = -tau * s.log_hessian - 4.0 * tau * s.pressure - tau * dg
                + 4.0 * tau * s.dissip_sigma
                + tau * s.convection
                - tau * s.charge;
            (s.t, dh - rhs)
        })
        .collect()
}

fn entropy_scale(b: &[BalanceSample], tau: f64) -> f64 {
    1.0 + b
        .iter()
        .map(|s| tau * (s.log_hessian + 4.0 * s.pressure + 4.0 * s.dissip_sigma + s.convection.abs() + s.charge))
        .fold(0.0, f64::max)
}

/// Max normalised residual of the entropy identity.
pub fn entropy_balance_residual(traj: &SLTrajectory) -> f64 {
    let b = require_dense(traj);
    let scale = entropy_scale(b, traj.params.tau);
    entropy_balance_series(traj).iter().map(|(_, r)| r.abs()).fold(0.0, f64::max) / scale
}

/// Largest normalised violation of the one-sided entropy estimate
/// `d/dt[H + τG] + τD/2 + 4τP + τQ ≤ 4τΣ + τ∫ρ|v|⁴` (≤ 0 means it holds).
pub fn entropy_estimate_violation(traj: &SLTrajectory) -> f64 {
    let b = require_dense(traj);
    let tau = traj.params.tau;
    let scale = entropy_scale(b, tau);
    (1..b.len().saturating_sub(1))
        .map(|k| {
            let s = &b[k];
            let lhs = centered(b, k, |x| x.entropy + tau * x.log_flux)
                + 0.5 * tau * s.log_hessian
                + 4.0 * tau * s.pressure
                + tau * s.charge;
            let rhs = 4.0 * tau * s.dissip_sigma + tau * s.v4;
            (lhs - rhs) / scale
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Max normalised residual of `dE/dt + τ⁻¹∫ρ|v|² = 0` (differential energy balance).
pub fn energy_rate_residual(traj: &SLTrajectory) -> f64 {
    let b = require_dense(traj);
    let it = traj.params.inv_tau();
    let e0 = b.first().map_or(0.0, |s| s.energy);
    (1..b.len().saturating_sub(1))
        .map(|k| (centered(b, k, |s| s.energy) + it * b[k].dissip_v).abs())
        .fold(0.0, f64::max)
        / (1.0 + e0)
}

/// Local energy law integrated over the torus, flux term included.
pub fn appendix_energy_residual(traj: &SLTrajectory) -> f64 {
    let b = require_dense(traj);
    let it = traj.params.inv_tau();
    let e0 = b.first().map_or(0.0, |s| s.energy);
    (1..b.len().saturating_sub(1))
        .map(|k| (centered(b, k, |s| s.energy) + b[k].flux_div + it * b[k].dissip_v).abs())
        .fold(0.0, f64::max)
        / (1.0 + e0)
}

/// Discrete `H²` norm `(Σ (1+|k|²)² |ĉ_k|²)^{1/2}` of `a − b`.
fn h2_distance(grid: &TorusGrid, a: &[Complex64], b: &[Complex64]) -> f64 {
    let mut d: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    grid.forward_inplace(&mut d);
    d.iter().enumerate().map(|(i, c)| (1.0 + grid.k_sq(i)).powi(2) * c.norm_sqr()).sum::<f64>().sqrt()
}

/// Result of [`picard_solve`].
#[derive(Clone, Debug)]
pub struct PicardResult {
    /// States at every step of the converged iterate, starting with `psi0`.
    pub states: Vec<WaveFunction>,
    /// Successive differences `d_m = sup_t ‖ψ_m − ψ_{m−1}‖_{H²}`.
    pub diffs: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl PicardResult {
    pub fn contraction_factors(&self) -> Vec<f64> {
        self.diffs.windows(2).map(|w| w[1] / w[0]).collect()
    }
}

/// Fixed-point iteration of the frozen-coefficient linear problem on `[0, t_star]`.
///
/// Iterate `m` solves the linear equation whose potentials `f'(|ψ_{m−1}|²) + V_{m−1}`
/// and `S_{m−1}` are taken from the previous iterate at every sub-step, with the same
/// splitting as [`sl_step`]; the zeroth iterate is constant in time.
pub fn picard_solve(
    psi0: &WaveFunction,
    params: &SLParams,
    t_star: f64,
    max_iter: usize,
    tol: f64,
) -> Result<PicardResult> {
    let mut p = params.clone();
    p.t_end = t_star;
    let stepper = SlStepper::new(&p, psi0.grid())?;
    let steps = p.steps();
    let grid = psi0.grid().clone();
    let initial = stepper.stage_of(psi0.psi.values(), None, psi0.mean_phase);
    // Previous iterate: states and the potentials at each sub-step start.
    let mut prev_states: Vec<WaveFunction> = vec![psi0.clone(); steps + 1];
    let mut prev_a: Vec<Stage> = vec![initial.clone(); steps];
    let mut prev_c: Vec<Stage> = vec![initial.clone(); steps];
    let mut diffs = Vec::new();
    let mut non_decreasing = 0;
    for m in 1..=max_iter {
        let mut states = Vec::with_capacity(steps + 1);
        let mut own_a = Vec::with_capacity(steps);
        let mut own_c = Vec::with_capacity(steps);
        let mut w = psi0.clone();
        states.push(w.clone());
        let mut a = initial.clone();
        for k in 0..steps {
            let (c, next_a) = stepper.step_frozen(&mut w, &prev_a[k], &prev_c[k], &a)?;
            own_a.push(a);
            own_c.push(c);
            a = next_a;
            states.push(w.clone());
        }
        let d = states
            .iter()
            .zip(&prev_states)
            .map(|(x, y)| h2_distance(&grid, x.psi.values(), y.psi.values()))
            .fold(0.0, f64::max);
        if let Some(&last) = diffs.last() {
            if d >= last {
                non_decreasing += 1;
            } else {
                non_decreasing = 0;
            }
        }
        diffs.push(d);
        prev_states = states;
        prev_a = own_a;
        prev_c = own_c;
        if d < tol {
            return Ok(PicardResult { states: prev_states, diffs, iterations: m, converged: true });
        }
        if non_decreasing >= 3 {
            return Err(QhdError::NoContraction { diffs });
        }
    }
    Ok(PicardResult { states: prev_states, diffs, iterations: max_iter, converged: false })
}

/// Wave function built from `ψ` samples, with the phase mean read off the samples.
pub fn wave_function(psi: ComplexField) -> WaveFunction {
    let v = crate::madelung::velocity_of(&psi);
    let s = crate::madelung::phase_from_velocity(&v);
    let mut acc = Complex64::new(0.0, 0.0);
    for (p, ph) in psi.values().iter().zip(s.values()) {
        acc += p / p.norm() * Complex64::from_polar(1.0, -ph);
    }
    WaveFunction { psi, mean_phase: acc.arg() }
}

/// Convenience: the density field of a wave function as a [`RealField`].
pub fn density(w: &WaveFunction) -> RealField {
    w.density()
}
