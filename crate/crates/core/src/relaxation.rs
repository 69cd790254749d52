//! The `τ → 0` experiment: parabolic rescaling, τ-sweeps against the drift-diffusion
//! solution, relative-entropy bookkeeping and rate fits.
//!
//! Everything here works in the rescaled time `t' = τt` with `ρτ(t') = ρ(t'/τ)` and
//! `vτ(t') = v(t'/τ)/τ`.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{QhdError, Result};
use crate::functionals::{hessian_from_gradient, relative_entropy_unchecked};
use crate::madelung::{extract_hydro_with, Coupling, HydroState, PressureLaw, WaveFunction};
use crate::qdd::{consistent_momentum_with, qdd_rate, QDDParams, QddStepper};
use crate::sl::{RunStatus, SLParams, SLTrajectory, SlStepper};
use crate::spectral::{Field, RealField, TorusGrid};

/// Rescaled density and velocity at one comparison time.
#[derive(Clone, Debug, PartialEq)]
pub struct RescaledSample {
    pub t_prime: f64,
    pub rho: RealField,
    pub v: [RealField; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct RescaledTrajectory {
    pub tau: f64,
    pub samples: Vec<RescaledSample>,
}

/// Resamples the checkpoints of `traj` at `t = t'/τ` and divides the velocity by `τ`.
pub fn rescale(traj: &SLTrajectory, tau: f64, t_prime_grid: &[f64]) -> Result<RescaledTrajectory> {
    let p = &traj.params;
    if traj.checkpoints.is_empty() {
        return Err(QhdError::InvalidParameter("trajectory has no checkpoints (set checkpoint_every)".into()));
    }
    let available = traj.checkpoints.last().map_or(0.0, |c| c.0);
    let mut samples = Vec::with_capacity(t_prime_grid.len());
    for &tp in t_prime_grid {
        let t = tp / tau;
        if t > available + 0.5 * p.dt {
            return Err(QhdError::HorizonTooShort { required: t, available });
        }
        let (tc, w) =
            traj.checkpoints.iter().min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs())).expect("non-empty");
        if (tc - t).abs() >= p.dt {
            return Err(QhdError::InvalidParameter(format!(
                "nearest checkpoint to t = {t} is {tc}; checkpoint stride is too coarse"
            )));
        }
        let s = extract_hydro_with(w, &p.law, &p.coupling, p.delta)?;
        let v = [s.v[0].map(|x| x / tau), s.v[1].map(|x| x / tau)];
        samples.push(RescaledSample { t_prime: tp, rho: s.rho, v });
    }
    Ok(RescaledTrajectory { tau, samples })
}

/// Per-sample quantities of the relative-entropy identity.
///
/// The identity reads `dH(ρτ|ρ̄)/dt' = Σ groups + τ²[R(ρτ) − R(ρτ, ρ̄)]` with
/// `R(ρτ) = −dGτ/dt' + 4∫ρτστ² + ∫ρτvτ⊗vτ:∇²log ρτ` and
/// `R(ρτ, ρ̄) = −dḠ/dt' + ∫∂t'log ρ̄ ∂t'ρτ + ∫ρτvτ⊗vτ:∇²log ρ̄`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CurvePoint {
    pub t_prime: f64,
    /// `‖ρτ − ρ̄‖_{L²}`
    pub error: f64,
    pub rel_entropy: f64,
    /// `∫ρτ|∇²log√ρτ − ∇²log√ρ̄|²` and its running time integral.
    pub hess_diss: f64,
    pub hess_diss_cum: f64,
    /// Hessian difference, d⊗d, pressure, charge and Poisson cross groups.
    pub groups: [f64; 5],
    /// `Gτ = ∫log ρτ ∂t'ρτ` and `Ḡ = ∫log ρ̄ ∂t'ρτ`.
    pub g_tau: f64,
    pub g_bar: f64,
    /// Instantaneous parts of `R(ρτ)` and `R(ρτ, ρ̄)`.
    pub r_tau_inst: f64,
    pub r_pair_inst: f64,
    /// `τ²R(ρτ)` and `τ²R(ρτ, ρ̄)`; NaN at the ends of the grid.
    pub rem_tau: f64,
    pub rem_pair: f64,
    /// `dH/dt' − (Σ groups + τ²R(ρτ) − τ²R(ρτ,ρ̄))`; NaN at the ends of the grid.
    pub residual: f64,
    /// `Eτ + ∫₀^{t'}∫ρτ|vτ|²`, to be compared with `E₀`.
    pub energy_bound: f64,
    /// `Iτ + ∫₀^{t'}∫ρτστ² + τ²∫₀^{t'}∫ρτ|vτ|⁴`.
    pub gcp_bound: f64,
    /// `2δH ≤ ‖ρτ−ρ̄‖² ≤ 2C H` with `C = max(ρτ, ρ̄)`.
    pub sandwich_lower: f64,
    pub sandwich_upper: f64,
    /// `‖ρτvτ − J̄‖_{L²}` for `t' ≥ 0.1`, NaN before.
    pub momentum_gap: f64,
    // Instantaneous dissipation rates for the running integrals.
    diss_v: f64,
    diss_sigma: f64,
    diss_v4: f64,
}

/// Start of the window on which the momentum is compared with the constitutive flux.
pub const MOMENTUM_WINDOW_START: f64 = 0.1;

struct LogSqrt {
    a: Vec<f64>,
    grad_a: [Vec<f64>; 2],
    /// `∇log√ρ`
    w: [Vec<f64>; 2],
    hess: [RealField; 3],
}

fn log_sqrt_parts(rho: &RealField) -> LogSqrt {
    let grid = rho.grid();
    let a: Vec<f64> = rho.values().iter().map(|r| r.sqrt()).collect();
    let (g1, g2) = grid.grad_spectrum(&grid.forward_real(&a));
    let (a1, a2) = grid.inverse_real_pair(&g1, &g2);
    let w1: Vec<f64> = a1.iter().zip(&a).map(|(d, s)| d / s).collect();
    let w2: Vec<f64> = a2.iter().zip(&a).map(|(d, s)| d / s).collect();
    let hess = hessian_from_gradient(grid, &w1, &w2);
    LogSqrt { a, grad_a: [a1, a2], w: [w1, w2], hess }
}

/// Evaluates the instantaneous terms at one comparison time.
#[allow(clippy::too_many_arguments)]
fn pair_sample(
    tau: f64,
    t_prime: f64,
    rho: &RealField,
    v: &[RealField; 2],
    rho_bar: &RealField,
    dt_rho_bar: &RealField,
    j_bar: Option<&[RealField; 2]>,
    law: &PressureLaw,
    coupling: &Coupling,
) -> CurvePoint {
    let grid = rho.grid();
    let n = grid.len();
    let t2 = tau * tau;
    let r = rho.values();
    let rb = rho_bar.values();
    let (v1, v2) = (v[0].values(), v[1].values());
    let me = log_sqrt_parts(rho);
    let bar = log_sqrt_parts(rho_bar);

    let j1: Vec<f64> = (0..n).map(|i| r[i] * v1[i]).collect();
    let j2: Vec<f64> = (0..n).map(|i| r[i] * v2[i]).collect();
    let (sj1, sj2) = grid.forward_real_pair(&j1, &j2);
    let div = grid.div_spectrum(&sj1, &sj2);
    // Δ√ρτ for the chemical potential.
    let sa = grid.forward_real(&me.a);
    let lap_a: Vec<_> = sa.iter().enumerate().map(|(i, c)| -grid.k_sq(i) * c).collect();
    let (divj, lap_a) = grid.inverse_real_pair(&div, &lap_a);
    let dt_rho: Vec<f64> = divj.iter().map(|d| -d).collect();

    // Potentials: Vτ, ∇Vτ and ∇(Vτ − V̄).
    let zero = || vec![0.0; n];
    let (pot, gv1, gv2, dv) = if coupling.poisson {
        let diff: Vec<f64> = (0..n).map(|i| r[i] - rb[i]).collect();
        let (mut sv, mut sd) = grid.forward_real_pair(r, &diff);
        crate::spectral::inverse_laplacian_spectrum(grid, &mut sv);
        crate::spectral::inverse_laplacian_spectrum(grid, &mut sd);
        let (g1, g2) = grid.grad_spectrum(&sd);
        let (d1, d2) = grid.inverse_real_pair(&g1, &g2);
        let (g1, g2) = grid.grad_spectrum(&sv);
        let (gv1, gv2) = grid.inverse_real_pair(&g1, &g2);
        (grid.inverse_real(sv), gv1, gv2, Some([d1, d2]))
    } else {
        (zero(), zero(), zero(), None)
    };

    let mut cp =
        CurvePoint { t_prime, rem_tau: f64::NAN, rem_pair: f64::NAN, residual: f64::NAN, ..Default::default() };
    let (mut g, mut hd, mut l2, mut energy, mut gcp) = ([0.0; 5], 0.0, 0.0, 0.0, 0.0);
    let (mut gt, mut gb, mut rt, mut rp) = (0.0, 0.0, 0.0, 0.0);
    let (mut dv_, mut ds_, mut dv4_) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (ri, bi) = (r[i], rb[i]);
        let a = [me.hess[0].values()[i], me.hess[1].values()[i], me.hess[2].values()[i]];
        let b = [bar.hess[0].values()[i], bar.hess[1].values()[i], bar.hess[2].values()[i]];
        let diff_h = (a[0] - b[0]).powi(2) + 2.0 * (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2);
        let d = [me.w[0][i] - bar.w[0][i], me.w[1][i] - bar.w[1][i]];
        hd += ri * diff_h;
        g[1] += 2.0 * ri * (b[0] * d[0] * d[0] + 2.0 * b[1] * d[0] * d[1] + b[2] * d[1] * d[1]);
        let (pt, pb) = (coupling.p_prime(law, ri), coupling.p_prime(law, bi));
        for c in 0..2 {
            let (lt, lb) = (2.0 * me.w[c][i], 2.0 * bar.w[c][i]);
            g[2] -= ri * (pt * lt - pb * lb) * (lt - lb);
        }
        let e = ri - bi;
        l2 += e * e;
        if let Some(dv) = &dv {
            g[3] -= e * e;
            g[4] += e * 2.0 * (bar.w[0][i] * dv[0][i] + bar.w[1][i] * dv[1][i]);
        }
        let vv = v1[i] * v1[i] + v2[i] * v2[i];
        let sig = dt_rho[i] / (2.0 * ri);
        gt += ri.ln() * dt_rho[i];
        gb += bi.ln() * dt_rho[i];
        let conv = |h: [f64; 3]| 2.0 * ri * (v1[i] * v1[i] * h[0] + 2.0 * v1[i] * v2[i] * h[1] + v2[i] * v2[i] * h[2]);
        rt += 4.0 * ri * sig * sig + conv(a);
        rp += dt_rho_bar.values()[i] / bi * dt_rho[i] + conv(b);
        let ga = me.grad_a[0][i].powi(2) + me.grad_a[1][i].powi(2);
        energy += 0.5 * t2 * ri * vv + 0.5 * ga + coupling.f(law, ri) + 0.5 * (gv1[i] * gv1[i] + gv2[i] * gv2[i]);
        let mu = -lap_a[i] / (2.0 * me.a[i]) + 0.5 * t2 * vv + coupling.f_prime(law, ri) + pot[i];
        gcp += 0.5 * ri * (mu * mu + t2 * sig * sig);
        dv_ += ri * vv;
        ds_ += ri * sig * sig;
        dv4_ += ri * vv * vv;
    }
    let nf = n as f64;
    g[0] = -hd / nf;
    for x in g.iter_mut().skip(1) {
        *x /= nf;
    }
    cp.groups = g;
    cp.hess_diss = hd / nf;
    cp.error = (l2 / nf).sqrt();
    cp.rel_entropy = relative_entropy_unchecked(r, rb);
    cp.g_tau = gt / nf;
    cp.g_bar = gb / nf;
    cp.r_tau_inst = rt / nf;
    cp.r_pair_inst = rp / nf;
    cp.energy_bound = energy / nf;
    cp.gcp_bound = gcp / nf;
    cp.diss_v = dv_ / nf;
    cp.diss_sigma = ds_ / nf;
    cp.diss_v4 = t2 * dv4_ / nf;
    let lo = rho.min().min(rho_bar.min());
    let hi = rho.max().max(rho_bar.max());
    cp.sandwich_lower = 2.0 * lo * cp.rel_entropy;
    cp.sandwich_upper = 2.0 * hi * cp.rel_entropy;
    cp.momentum_gap = match j_bar {
        Some(jb) if t_prime >= MOMENTUM_WINDOW_START - 1e-12 => {
            let s: f64 =
                (0..n).map(|i| (j1[i] - jb[0].values()[i]).powi(2) + (j2[i] - jb[1].values()[i]).powi(2)).sum();
            (s / nf).sqrt()
        }
        _ => f64::NAN,
    };
    cp
}

/// Accumulates curve points and closes the centered differences as samples arrive.
#[derive(Clone, Debug, Default)]
struct CurveBuilder {
    tau: f64,
    points: Vec<CurvePoint>,
    cum: [f64; 4],
}

impl CurveBuilder {
    fn new(tau: f64) -> Self {
        Self { tau, ..Default::default() }
    }

    fn push(&mut self, mut p: CurvePoint) {
        if let Some(q) = self.points.last() {
            let h = p.t_prime - q.t_prime;
            self.cum[0] += 0.5 * h * (p.diss_v + q.diss_v);
            self.cum[1] += 0.5 * h * (p.diss_sigma + q.diss_sigma);
            self.cum[2] += 0.5 * h * (p.diss_v4 + q.diss_v4);
            self.cum[3] += 0.5 * h * (p.hess_diss + q.hess_diss);
        }
        p.energy_bound += self.cum[0];
        p.gcp_bound += self.cum[1] + self.cum[2];
        p.hess_diss_cum = self.cum[3];
        self.points.push(p);
        let k = self.points.len();
        if k >= 3 {
            let (a, c) = (self.points[k - 3], self.points[k - 1]);
            let h = c.t_prime - a.t_prime;
            let t2 = self.tau * self.tau;
            let m = &mut self.points[k - 2];
            let dh = (c.rel_entropy - a.rel_entropy) / h;
            m.rem_tau = t2 * (-(c.g_tau - a.g_tau) / h + m.r_tau_inst);
            m.rem_pair = t2 * (-(c.g_bar - a.g_bar) / h + m.r_pair_inst);
            m.residual = dh - (m.groups.iter().sum::<f64>() + m.rem_tau - m.rem_pair);
        }
    }
}

/// Max normalised residual of the relative-entropy identity over interior samples.
pub fn normalized_balance_residual(points: &[CurvePoint]) -> f64 {
    let inner = || points.iter().filter(|p| p.residual.is_finite());
    let scale = 1.0
        + inner()
            .map(|p| p.groups.iter().map(|g| g.abs()).sum::<f64>() + p.rem_tau.abs() + p.rem_pair.abs())
            .fold(0.0, f64::max);
    inner().map(|p| p.residual.abs()).fold(0.0, f64::max) / scale
}

/// Drift-diffusion density and its rate at the comparison times.
#[derive(Clone, Debug)]
pub struct QddSample {
    pub t_prime: f64,
    pub rho: RealField,
    pub rate: RealField,
}

pub fn qdd_samples(states: &[(f64, RealField)], law: &PressureLaw, coupling: &Coupling) -> Vec<QddSample> {
    states
        .iter()
        .map(|(t, rho)| QddSample { t_prime: *t, rho: rho.clone(), rate: qdd_rate(rho, law, coupling) })
        .collect()
}

/// Identity residual and per-sample breakdown for stored trajectories.
#[derive(Clone, Debug)]
pub struct EntropyBalance {
    pub residual: f64,
    pub points: Vec<CurvePoint>,
    /// Sup over samples of `|group|` for the five groups, `τ²R(ρτ)` and `τ²R(ρτ,ρ̄)`.
    pub group_sups: [f64; 7],
}

fn group_sups(points: &[CurvePoint]) -> [f64; 7] {
    let mut s = [0.0f64; 7];
    for p in points {
        for (k, g) in p.groups.iter().enumerate() {
            s[k] = s[k].max(g.abs());
        }
        if p.rem_tau.is_finite() {
            s[5] = s[5].max(p.rem_tau.abs());
            s[6] = s[6].max(p.rem_pair.abs());
        }
    }
    s
}

/// Residual of the relative-entropy identity between a rescaled trajectory and
/// drift-diffusion samples on the same `t'` grid.
pub fn relative_entropy_balance_residual(
    rescaled: &RescaledTrajectory,
    qdd: &[QddSample],
    law: &PressureLaw,
    coupling: &Coupling,
) -> Result<EntropyBalance> {
    if rescaled.samples.len() != qdd.len() {
        return Err(QhdError::InvalidParameter("comparison grids differ in length".into()));
    }
    let mut b = CurveBuilder::new(rescaled.tau);
    for (s, q) in rescaled.samples.iter().zip(qdd) {
        if (s.t_prime - q.t_prime).abs() > 1e-12 * (1.0 + s.t_prime.abs()) {
            return Err(QhdError::InvalidParameter(format!("grids misaligned at t' = {}", s.t_prime)));
        }
        if s.rho.grid() != q.rho.grid() {
            return Err(QhdError::GridMismatch);
        }
        b.push(pair_sample(rescaled.tau, s.t_prime, &s.rho, &s.v, &q.rho, &q.rate, None, law, coupling));
    }
    let residual = normalized_balance_residual(&b.points);
    let group_sups = group_sups(&b.points);
    Ok(EntropyBalance { residual, points: b.points, group_sups })
}

/// Least-squares power law `e ≈ C τ^slope`.
#[derive(Clone, Debug, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// 95% confidence half-width of the slope (infinite with fewer than 3 points).
    pub slope_half_width: f64,
    /// Indices of points left out because they were zero or not finite.
    pub excluded: Vec<usize>,
}

/// Fits `log e = intercept + slope·log τ` by least squares.
pub fn fit_rate(taus: &[f64], errors: &[f64]) -> Result<RateFit> {
    if taus.len() != errors.len() {
        return Err(QhdError::InvalidParameter("taus and errors differ in length".into()));
    }
    let mut excluded = Vec::new();
    let mut pts = Vec::new();
    for (i, (&t, &e)) in taus.iter().zip(errors).enumerate() {
        if t > 0.0 && e > 0.0 && e.is_finite() && t.is_finite() {
            pts.push((t.ln(), e.ln()));
        } else {
            excluded.push(i);
        }
    }
    if pts.len() < 3 {
        return Err(QhdError::DegenerateData(format!(
            "need at least 3 positive points, have {} (excluded indices {excluded:?})",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(QhdError::DegenerateData("all taus are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    let slope_half_width = if pts.len() > 2 {
        let dof = n - 2.0;
        let q = StudentsT::new(0.0, 1.0, dof).map(|d| d.inverse_cdf(0.975)).unwrap_or(f64::INFINITY);
        q * (sse / dof / sxx).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(RateFit { slope, intercept, r_squared, slope_half_width, excluded })
}

/// Sweep results for one relaxation time.
#[derive(Clone, Debug)]
pub struct TauReport {
    pub tau: f64,
    pub status: RunStatus,
    pub points: Vec<CurvePoint>,
    pub sup_error: f64,
    pub sup_rel_entropy: f64,
    pub hess_diss_total: f64,
    pub balance_residual: f64,
    /// Sup magnitudes of the five groups and the two `τ²` remainders.
    pub group_sups: [f64; 7],
    /// Sup of `|τ²R(ρτ) − τ²R(ρτ,ρ̄)|`.
    pub remainder_sup: f64,
    /// `max_t' (Eτ + ∫∫ρτ|vτ|²) − E₀`.
    pub energy_excess: f64,
    pub gcp_bound_sup: f64,
    /// Smallest slack of the two-sided entropy/L² equivalence, relative to `‖ρτ−ρ̄‖²`.
    pub sandwich_margin: f64,
    pub sandwich_holds: bool,
}

impl TauReport {
    pub fn completed(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

#[derive(Clone, Debug)]
pub struct RelaxationReport {
    pub taus: Vec<f64>,
    pub t_prime: Vec<f64>,
    /// Initial energy without the kinetic part, which enters the rescaled energy as `τ²·kinetic`.
    pub e0: f64,
    pub per_tau: Vec<TauReport>,
    pub fit: Option<RateFit>,
    /// Power-law fits of the sup magnitudes of `τ²R(ρτ)`, `τ²R(ρτ,ρ̄)` and their difference.
    pub remainder_fits: [Option<RateFit>; 3],
    pub notes: Vec<String>,
}

/// Accepted band for the fitted error exponent.
pub const RATE_BAND: (f64, f64) = (0.7, 1.3);
/// Accepted band for the exponents of the two `τ²` remainder groups.
pub const REMAINDER_BAND: (f64, f64) = (1.6, 2.4);

fn in_band(f: &Option<RateFit>, band: (f64, f64)) -> bool {
    f.as_ref().is_some_and(|f| f.slope >= band.0 && f.slope <= band.1)
}

/// Relative tolerance used when checking the energy hypothesis `Eτ + ∫∫ρτ|vτ|² ≤ E₀`.
pub const ENERGY_HYPOTHESIS_TOL: f64 = 1e-6;

impl RelaxationReport {
    pub fn completed(&self) -> Vec<&TauReport> {
        self.per_tau.iter().filter(|r| r.completed()).collect()
    }

    /// Sup errors of the completed runs, strictly decreasing as `τ` decreases.
    pub fn errors_strictly_decreasing(&self) -> bool {
        let c = self.completed();
        c.windows(2).all(|w| w[1].sup_error < w[0].sup_error)
    }

    pub fn sandwich_holds(&self) -> bool {
        self.completed().iter().all(|r| r.sandwich_holds)
    }

    pub fn energy_hypothesis_holds(&self) -> bool {
        self.completed().iter().all(|r| r.energy_excess <= ENERGY_HYPOTHESIS_TOL * (1.0 + self.e0))
    }

    pub fn rate_in_band(&self) -> bool {
        in_band(&self.fit, RATE_BAND)
    }

    /// Both `τ²R(ρτ)` and `τ²R(ρτ,ρ̄)` regress to an exponent inside [`REMAINDER_BAND`].
    pub fn remainders_in_band(&self) -> bool {
        in_band(&self.remainder_fits[0], REMAINDER_BAND) && in_band(&self.remainder_fits[1], REMAINDER_BAND)
    }

    pub fn passed(&self) -> bool {
        self.errors_strictly_decreasing() && self.rate_in_band() && self.sandwich_holds() && self.remainders_in_band()
    }

    /// Fits of the sup magnitudes of `τ²R(ρτ)` and `τ²R(ρτ,ρ̄)` restricted to `t' ≥ t0`.
    ///
    /// Diagnostic only: with ill-prepared data the sup over the whole grid sits in the
    /// initial layer, where `τ²·dGτ/dt'` is O(1) for every `τ`.
    pub fn remainder_fits_from(&self, t0: f64) -> [Option<RateFit>; 2] {
        let done = self.completed();
        let ts: Vec<f64> = done.iter().map(|r| r.tau).collect();
        let sup = |r: &TauReport, f: fn(&CurvePoint) -> f64| {
            r.points
                .iter()
                .filter(|p| p.t_prime >= t0)
                .map(f)
                .filter(|x| x.is_finite())
                .fold(0.0f64, |m, x| m.max(x.abs()))
        };
        [
            fit_rate(&ts, &done.iter().map(|r| sup(r, |p| p.rem_tau)).collect::<Vec<_>>()).ok(),
            fit_rate(&ts, &done.iter().map(|r| sup(r, |p| p.rem_pair)).collect::<Vec<_>>()).ok(),
        ]
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "taus = {:?}", self.taus);
        let _ = writeln!(s, "t_prime_end = {}", self.t_prime.last().copied().unwrap_or(0.0));
        let _ = writeln!(s, "samples = {}", self.t_prime.len());
        let _ = writeln!(s, "E0 = {}", self.e0);
        for r in &self.per_tau {
            let status = match r.status {
                RunStatus::Completed => "completed".to_string(),
                RunStatus::VacuumBreach { t, min_rho } => format!("vacuum_breach t={t} min_rho={min_rho}"),
            };
            let _ = writeln!(
                s,
                "tau={} status={} sup_error={:.6e} sup_rel_entropy={:.6e} hess_diss={:.6e} balance_residual={:.6e} \
                 rem_tau_sup={:.6e} rem_pair_sup={:.6e} rem_sup={:.6e} energy_excess={:.3e} gcp_bound_sup={:.6e} sandwich={}",
                r.tau,
                status,
                r.sup_error,
                r.sup_rel_entropy,
                r.hess_diss_total,
                r.balance_residual,
                r.group_sups[5],
                r.group_sups[6],
                r.remainder_sup,
                r.energy_excess,
                r.gcp_bound_sup,
                if r.sandwich_holds { "ok" } else { "violated" },
            );
        }
        match &self.fit {
            Some(f) => {
                let _ = writeln!(
                    s,
                    "rate_slope = {:.6} +/- {:.6} (r2 = {:.6}, intercept = {:.6})",
                    f.slope, f.slope_half_width, f.r_squared, f.intercept
                );
            }
            None => {
                let _ = writeln!(s, "rate_slope = none");
            }
        }
        for (name, f) in ["remainder_tau", "remainder_pair", "remainder_diff"].iter().zip(&self.remainder_fits) {
            match f {
                Some(f) => {
                    let _ = writeln!(s, "{name}_slope = {:.6} (r2 = {:.6})", f.slope, f.r_squared);
                }
                None => {
                    let _ = writeln!(s, "{name}_slope = none");
                }
            }
        }
        for (name, f) in ["remainder_tau", "remainder_pair"].iter().zip(self.remainder_fits_from(MOMENTUM_WINDOW_START))
        {
            let slope = f.map_or("none".to_string(), |f| format!("{:.6} (r2 = {:.6})", f.slope, f.r_squared));
            let _ = writeln!(s, "{name}_slope_after_t{MOMENTUM_WINDOW_START} = {slope}");
        }
        let _ = writeln!(s, "errors_strictly_decreasing = {}", self.errors_strictly_decreasing());
        let _ = writeln!(s, "sandwich_holds = {}", self.sandwich_holds());
        let _ = writeln!(s, "energy_hypothesis_holds = {}", self.energy_hypothesis_holds());
        let _ = writeln!(s, "rate_in_band = {}", self.rate_in_band());
        let _ = writeln!(s, "remainders_in_band = {}", self.remainders_in_band());
        let _ = writeln!(s, "pass = {}", self.passed());
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }

    /// Writes `rlx_tau<τ>_<curve>.csv` for every curve and `rlx_summary.txt`.
    pub fn write_bundle(&self, dir: &Path) -> Result<()> {
        use crate::io::write_csv_file;
        std::fs::create_dir_all(dir)?;
        for r in &self.per_tau {
            let name = |c: &str| dir.join(format!("rlx_tau{}_{c}.csv", r.tau));
            let pts = &r.points;
            write_csv_file(&name("error"), "t_prime,error", pts.iter().map(|p| vec![p.t_prime, p.error]))?;
            write_csv_file(
                &name("relent"),
                "t_prime,rel_entropy,sandwich_lower,l2_sq,sandwich_upper",
                pts.iter()
                    .map(|p| vec![p.t_prime, p.rel_entropy, p.sandwich_lower, p.error * p.error, p.sandwich_upper]),
            )?;
            write_csv_file(
                &name("hessdiss"),
                "t_prime,hess_diss,hess_diss_cum",
                pts.iter().map(|p| vec![p.t_prime, p.hess_diss, p.hess_diss_cum]),
            )?;
            write_csv_file(
                &name("balance"),
                "t_prime,residual,hessian,cross,pressure,charge,poisson,rem_tau,rem_pair",
                pts.iter().map(|p| {
                    let mut row = vec![p.t_prime, p.residual];
                    row.extend_from_slice(&p.groups);
                    row.extend_from_slice(&[p.rem_tau, p.rem_pair]);
                    row
                }),
            )?;
            write_csv_file(
                &name("hypotheses"),
                "t_prime,energy_bound,gcp_bound",
                pts.iter().map(|p| vec![p.t_prime, p.energy_bound, p.gcp_bound]),
            )?;
            write_csv_file(
                &name("momentum"),
                "t_prime,momentum_gap",
                pts.iter().filter(|p| p.momentum_gap.is_finite()).map(|p| vec![p.t_prime, p.momentum_gap]),
            )?;
        }
        std::fs::write(dir.join("rlx_summary.txt"), self.summary())?;
        Ok(())
    }
}

/// Number of sub-steps of length `dt` in `span`, requiring an exact multiple.
fn exact_steps(span: f64, dt: f64, what: &str) -> Result<usize> {
    let q = span / dt;
    let m = q.round();
    if m < 1.0 || (q - m).abs() > 1e-6 * m {
        return Err(QhdError::InvalidParameter(format!(
            "{what}: grid spacing {span} is not a whole number of steps {dt}"
        )));
    }
    Ok(m as usize)
}

struct Job {
    tau: f64,
    stepper: SlStepper,
    w: WaveFunction,
    steps_per_sample: usize,
    status: RunStatus,
    t: f64,
    curve: CurveBuilder,
}

/// Uniform comparison grid `0, h, 2h, …, t_end`.
pub fn uniform_grid(t_end: f64, h: f64) -> Vec<f64> {
    let n = (t_end / h).round() as usize;
    (0..=n).map(|j| j as f64 * h).collect()
}

/// Runs the Schrödinger-Langevin flow for every `τ` together with the drift-diffusion flow,
/// comparing them on the uniform `t'` grid without storing fields.
///
/// `initial.v` is the rescaled initial velocity `v_{τ,0}` shared by all runs.
pub fn sweep(
    initial: &HydroState,
    taus: &[f64],
    t_prime_grid: &[f64],
    sl_template: &SLParams,
    qdd_params: &QDDParams,
) -> Result<RelaxationReport> {
    if taus.is_empty() {
        return Err(QhdError::InvalidParameter("empty tau list".into()));
    }
    if taus.windows(2).any(|w| w[1] >= w[0]) {
        return Err(QhdError::InvalidParameter("taus must be strictly decreasing".into()));
    }
    if t_prime_grid.len() < 3 || t_prime_grid[0] != 0.0 {
        return Err(QhdError::InvalidParameter("comparison grid must start at 0 with >= 3 points".into()));
    }
    let h = t_prime_grid[1];
    if t_prime_grid.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h) {
        return Err(QhdError::InvalidParameter("comparison grid must be uniform".into()));
    }
    let grid: TorusGrid = initial.grid().clone();
    let law = sl_template.law;
    let coupling = sl_template.coupling;
    let delta = sl_template.delta;
    let qdd_sub = exact_steps(h, qdd_params.dt, "drift-diffusion step")?;
    let qdd = QddStepper::new(qdd_params, &grid)?;

    let mut jobs = Vec::with_capacity(taus.len());
    for &tau in taus {
        let mut p = sl_template.clone();
        p.tau = tau;
        p.t_end = t_prime_grid.last().copied().unwrap_or(0.0) / tau;
        let steps_per_sample = exact_steps(h / tau, p.dt, &format!("tau = {tau}"))?;
        let v0 = [initial.v[0].map(|x| tau * x), initial.v[1].map(|x| tau * x)];
        let state = HydroState::from_hydro(initial.rho.clone(), v0, &law, &coupling);
        let w = crate::madelung::lift_wavefunction(&state, 0.0, delta)?;
        jobs.push(Job {
            tau,
            stepper: SlStepper::new(&p, &grid)?,
            w,
            steps_per_sample,
            status: RunStatus::Completed,
            t: 0.0,
            curve: CurveBuilder::new(tau),
        });
    }
    // Rescaled energy Eτ = quantum + τ²·kinetic + internal + electric; `e0` is its τ-free part.
    let [quantum, kinetic, internal, electric] = crate::functionals::energy_parts(initial, &law, &coupling);
    let e0 = quantum + internal + electric;

    let mut rho_bar = initial.rho.clone();
    let mut notes = Vec::new();
    let mut qdd_alive = true;
    for (j, &tp) in t_prime_grid.iter().enumerate() {
        if j > 0 {
            for _ in 0..qdd_sub {
                if let Err(e) = qdd.step(&mut rho_bar) {
                    notes.push(format!("drift-diffusion run stopped at t' = {tp}: {e}"));
                    qdd_alive = false;
                    break;
                }
            }
        }
        if !qdd_alive {
            break;
        }
        let rate = qdd_rate(&rho_bar, &law, &coupling);
        let j_bar = if tp >= MOMENTUM_WINDOW_START - 1e-12 {
            Some(consistent_momentum_with(&rho_bar, &law, &coupling, delta)?)
        } else {
            None
        };
        let step_all = |job: &mut Job| -> Result<()> {
            if job.status != RunStatus::Completed {
                return Ok(());
            }
            if j > 0 {
                for _ in 0..job.steps_per_sample {
                    job.t += job.stepper.params().dt;
                    if let Err(e) = job.stepper.step(&mut job.w) {
                        return match e {
                            QhdError::VacuumBreach { min_rho, .. } => {
                                job.status = RunStatus::VacuumBreach { t: job.t, min_rho };
                                Ok(())
                            }
                            other => Err(other),
                        };
                    }
                }
            }
            let s = match extract_hydro_with(&job.w, &law, &coupling, delta) {
                Ok(s) => s,
                Err(QhdError::VacuumBreach { min_rho, .. }) => {
                    job.status = RunStatus::VacuumBreach { t: job.t, min_rho };
                    return Ok(());
                }
                Err(e) => return Err(e),
            };
            let v = [s.v[0].map(|x| x / job.tau), s.v[1].map(|x| x / job.tau)];
            let cp = pair_sample(job.tau, tp, &s.rho, &v, &rho_bar, &rate, j_bar.as_ref(), &law, &coupling);
            job.curve.push(cp);
            Ok(())
        };
        jobs.par_iter_mut().map(step_all).collect::<Result<Vec<()>>>()?;
    }

    let mut per_tau = Vec::with_capacity(jobs.len());
    for job in jobs {
        let pts = job.curve.points;
        let sups = group_sups(&pts);
        let e0_tau = e0 + job.tau * job.tau * kinetic;
        let excess = pts.iter().map(|p| p.energy_bound - e0_tau).fold(f64::NEG_INFINITY, f64::max);
        let mut margin = f64::INFINITY;
        for p in &pts {
            let l2 = p.error * p.error;
            let slack = 1e-10 * l2 + 1e-300;
            margin = margin
                .min((l2 - p.sandwich_lower + slack) / l2.max(1e-300))
                .min((p.sandwich_upper - l2 + slack) / l2.max(1e-300));
        }
        if let RunStatus::VacuumBreach { t, min_rho } = job.status {
            notes.push(format!(
                "tau = {} excluded from the fit: density floor breached at t = {t} (min rho = {min_rho})",
                job.tau
            ));
        }
        let gcp_sup = pts.iter().map(|p| p.gcp_bound).fold(0.0, f64::max);
        if !gcp_sup.is_finite() {
            notes.push(format!("tau = {}: higher-order bound is not finite", job.tau));
        }
        per_tau.push(TauReport {
            tau: job.tau,
            status: job.status,
            sup_error: pts.iter().map(|p| p.error).fold(0.0, f64::max),
            sup_rel_entropy: pts.iter().map(|p| p.rel_entropy).fold(0.0, f64::max),
            hess_diss_total: pts.last().map_or(0.0, |p| p.hess_diss_cum),
            balance_residual: normalized_balance_residual(&pts),
            group_sups: sups,
            remainder_sup: pts
                .iter()
                .filter(|p| p.rem_tau.is_finite())
                .map(|p| (p.rem_tau - p.rem_pair).abs())
                .fold(0.0, f64::max),
            energy_excess: excess,
            gcp_bound_sup: gcp_sup,
            sandwich_margin: margin,
            sandwich_holds: margin >= 0.0 || pts.iter().all(|p| p.error == 0.0),
            points: pts,
        });
    }
    let done: Vec<&TauReport> = per_tau.iter().filter(|r| r.completed()).collect();
    let ts: Vec<f64> = done.iter().map(|r| r.tau).collect();
    let fit_of = |vals: Vec<f64>, what: &str, notes: &mut Vec<String>| match fit_rate(&ts, &vals) {
        Ok(f) => Some(f),
        Err(e) => {
            notes.push(format!("{what}: {e}"));
            None
        }
    };
    let fit = fit_of(done.iter().map(|r| r.sup_error).collect(), "rate fit", &mut notes);
    let remainder_fits = [
        fit_of(done.iter().map(|r| r.group_sups[5]).collect(), "remainder fit (tau)", &mut notes),
        fit_of(done.iter().map(|r| r.group_sups[6]).collect(), "remainder fit (pair)", &mut notes),
        fit_of(done.iter().map(|r| r.remainder_sup).collect(), "remainder fit (difference)", &mut notes),
    ];
    Ok(RelaxationReport {
        taus: taus.to_vec(),
        t_prime: t_prime_grid[..per_tau.iter().map(|r| r.points.len()).max().unwrap_or(0).min(t_prime_grid.len())]
            .to_vec(),
        e0,
        per_tau,
        fit,
        remainder_fits,
        notes,
    })
}
