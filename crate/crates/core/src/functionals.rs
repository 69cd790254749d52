//! Scalar functionals, decay constants and inequality checks.

use crate::error::{QhdError, Result};
use crate::madelung::{Coupling, HydroState, PressureLaw, WaveFunction};
use crate::spectral::{gradient, laplacian, mean_of, Field, RealField, TorusGrid};

/// One time sample of the monitored functionals.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FunctionalRecord {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub quantum: f64,
    pub kinetic: f64,
    pub internal: f64,
    pub electric: f64,
    pub gcp: f64,
    pub entropy: f64,
    pub combined: f64,
    pub min_rho: f64,
    pub cum_diss_v: f64,
    pub cum_diss_sigma: f64,
    pub cum_diss_v4: f64,
}

/// Running time integrals of the dissipation densities.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunningIntegrals {
    pub cum_diss_v: f64,
    pub cum_diss_sigma: f64,
    pub cum_diss_v4: f64,
}

/// Instantaneous dissipation rates `(∫ρ|v|², ∫ρσ², ∫ρ|v|⁴)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dissipation {
    pub v: f64,
    pub sigma: f64,
    pub v4: f64,
}

impl RunningIntegrals {
    /// Trapezoid update over a step of length `dt`.
    pub fn advance(&mut self, prev: &Dissipation, next: &Dissipation, dt: f64) {
        self.cum_diss_v += 0.5 * dt * (prev.v + next.v);
        self.cum_diss_sigma += 0.5 * dt * (prev.sigma + next.sigma);
        self.cum_diss_v4 += 0.5 * dt * (prev.v4 + next.v4);
    }
}

pub fn dissipation(state: &HydroState) -> Dissipation {
    let n = state.rho.values().len();
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let r = state.rho.values()[i];
        let vv = state.v[0].values()[i].powi(2) + state.v[1].values()[i].powi(2);
        a += r * vv;
        b += r * state.sigma.values()[i].powi(2);
        c += r * vv * vv;
    }
    let n = n as f64;
    Dissipation { v: a / n, sigma: b / n, v4: c / n }
}

/// `φ(u) = (1+u) log(1+u) − u`, accurate for small `|u|`.
pub fn bregman_phi(u: f64) -> f64 {
    if u == -1.0 {
        return 1.0;
    }
    if u.abs() < 1e-3 {
        let u2 = u * u;
        u2 * (0.5 - u / 6.0 + u2 / 12.0 - u2 * u / 20.0 + u2 * u2 / 30.0)
    } else {
        (1.0 + u) * u.ln_1p() - u
    }
}

/// `H(ρ) = ∫ ρ log(ρ/M₀)`, evaluated in the Bregman form `∫ M₀ φ(ρ/M₀ − 1)`.
pub fn entropy(rho: &RealField, m0: f64) -> f64 {
    let vals: Vec<f64> = rho.values().iter().map(|&r| m0 * bregman_phi((r - m0) / m0)).collect();
    mean_of(&vals)
}

/// Energy split into (quantum, kinetic, internal, electric).
pub fn energy_parts(state: &HydroState, law: &PressureLaw, coupling: &Coupling) -> [f64; 4] {
    let a = state.rho.map(f64::sqrt);
    let [a1, a2] = gradient(&a);
    let [e1, e2] = gradient(&state.potential);
    let n = a.values().len();
    let mut parts = [0.0; 4];
    for i in 0..n {
        let r = state.rho.values()[i];
        parts[0] += 0.5 * (a1.values()[i].powi(2) + a2.values()[i].powi(2));
        parts[1] += 0.5 * r * (state.v[0].values()[i].powi(2) + state.v[1].values()[i].powi(2));
        parts[2] += coupling.f(law, r);
        parts[3] += 0.5 * (e1.values()[i].powi(2) + e2.values()[i].powi(2));
    }
    parts.map(|p| p / n as f64)
}

/// `I = ½∫ρ(μ² + σ²)`.
pub fn gcp(state: &HydroState) -> f64 {
    let vals: Vec<f64> = (0..state.rho.values().len())
        .map(|i| 0.5 * state.rho.values()[i] * (state.mu.values()[i].powi(2) + state.sigma.values()[i].powi(2)))
        .collect();
    mean_of(&vals)
}

/// Fills a [`FunctionalRecord`] for `state` (mass and floor taken from `w`).
pub fn record(
    state: &HydroState,
    w: &WaveFunction,
    law: &PressureLaw,
    c1: f64,
    t: f64,
    running: &RunningIntegrals,
    delta: f64,
) -> Result<FunctionalRecord> {
    record_with(state, w, law, &Coupling::default(), c1, t, running, delta)
}

#[allow(clippy::too_many_arguments)]
pub fn record_with(
    state: &HydroState,
    w: &WaveFunction,
    law: &PressureLaw,
    coupling: &Coupling,
    c1: f64,
    t: f64,
    running: &RunningIntegrals,
    delta: f64,
) -> Result<FunctionalRecord> {
    let min_rho = w.min_density();
    if min_rho < delta || min_rho.is_nan() {
        return Err(QhdError::VacuumBreach { min_rho, delta });
    }
    let [quantum, kinetic, internal, electric] = energy_parts(state, law, coupling);
    let energy = quantum + kinetic + internal + electric;
    let gcp = gcp(state);
    let entropy = entropy(&state.rho, law.m0);
    Ok(FunctionalRecord {
        t,
        mass: w.mass(),
        energy,
        quantum,
        kinetic,
        internal,
        electric,
        gcp,
        entropy,
        combined: entropy + energy + c1 * gcp,
        min_rho,
        cum_diss_v: running.cum_diss_v,
        cum_diss_sigma: running.cum_diss_sigma,
        cum_diss_v4: running.cum_diss_v4,
    })
}

/// `g₁(u, w) = C₀ u (1 + |log(w/u)|)`.
pub fn g1(u: f64, w: f64, c0: f64) -> f64 {
    c0 * u * (1.0 + (w / u).ln().abs())
}

/// `g₂(u, w) = C₀ g₁ u [1 + |log(M₀^½ + g₁)| + |log(w/u)|]`.
pub fn g2(u: f64, w: f64, m0: f64, c0: f64) -> f64 {
    let a = g1(u, w, c0);
    c0 * a * u * (1.0 + (m0.sqrt() + a).ln().abs() + (w / u).ln().abs())
}

/// `g₃ = M₀^½ + M₀(M₀−δ)^{4n−2} + M₀^{2/3} E₀^{1/3}`.
pub fn g3(m0: f64, e0: f64, delta: f64, n: u32) -> f64 {
    m0.sqrt() + m0 * (m0 - delta).powi(4 * n as i32 - 2) + m0.powf(2.0 / 3.0) * e0.cbrt()
}

/// `c₁ = (4 C₀ n M₀ E₀)⁻¹ min{g₃⁻¹, [δ⁻¹E₀(M₀ + |f'(δ)|)]⁻¹}`.
pub fn c1(m0: f64, e0: f64, delta: f64, n: u32, c0: f64) -> f64 {
    let fp = PressureLaw::new(n, m0).f_prime(delta).abs();
    let a = 1.0 / g3(m0, e0, delta, n);
    let b = 1.0 / (e0 * (m0 + fp) / delta);
    a.min(b) / (4.0 * c0 * n as f64 * m0 * e0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayConstants {
    pub c1: f64,
    pub c0_cal: f64,
    pub tau_star: f64,
    pub g3: f64,
}

impl DecayConstants {
    pub fn new(m0: f64, e0: f64, delta: f64, n: u32, c0_cal: f64) -> Result<Self> {
        if !(m0 > delta && delta > 0.0 && e0 > 0.0 && c0_cal > 0.0) {
            return Err(QhdError::InvalidParameter(format!(
                "decay constants need M0 > delta > 0 and E0 > 0 (M0 = {m0}, delta = {delta}, E0 = {e0})"
            )));
        }
        let c1 = c1(m0, e0, delta, n, c0_cal);
        let tau_star = (c1.sqrt() / 4.0).min((2.0 * c1 * delta / (8.0 + delta)).sqrt()).min(0.25);
        Ok(Self { c1, c0_cal, tau_star, g3: g3(m0, e0, delta, n) })
    }
}

/// Outcome of the initial-data smallness condition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Admissibility {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
}

/// `e^{E₀}(1 + I₀) ≤ ε e^{M₀−δ}/(M₀−δ)`.
pub fn check_admissible(e0: f64, i0: f64, m0: f64, delta: f64, epsilon: f64) -> Admissibility {
    let lhs = e0.exp() * (1.0 + i0);
    let d = m0 - delta;
    let rhs = epsilon * d.exp() / d;
    Admissibility { holds: lhs <= rhs, lhs, rhs }
}

/// Reformulated condition `C₀E₀[1 + |log c₁^{−½}| + |log F(0)|] ≤ M₀ − δ`,
/// returned as `(lhs, rhs)`.
pub fn dep_condition(e0: f64, c1: f64, f0: f64, m0: f64, delta: f64, c0: f64) -> (f64, f64) {
    let lf = if f0 > 0.0 { f0.ln().abs() } else { 0.0 };
    (c0 * e0 * (1.0 + (-0.5 * c1.ln()).abs() + lf), m0 - delta)
}

/// Relative entropy `∫ g(ρτ) − g(ρ̄) − g'(ρ̄)(ρτ − ρ̄)` with `g(s) = s log(s/M₀)`.
pub fn relative_entropy(rho_tau: &RealField, rho_bar: &RealField, m0: f64, delta: f64) -> Result<f64> {
    let _ = m0; // cancels identically
    let lo = rho_tau.min().min(rho_bar.min());
    if lo < delta || lo.is_nan() {
        return Err(QhdError::VacuumBreach { min_rho: lo, delta });
    }
    Ok(relative_entropy_unchecked(rho_tau.values(), rho_bar.values()))
}

pub(crate) fn relative_entropy_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let vals: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| y * bregman_phi((x - y) / y)).collect();
    mean_of(&vals)
}

/// `∇² log √ρ` as `(H₁₁, H₁₂, H₂₂)`, computed as `∇(∇√ρ/√ρ)` with the quotient dealiased.
pub fn log_sqrt_hessian(rho: &RealField) -> [RealField; 3] {
    let grid = rho.grid();
    let a = rho.map(f64::sqrt);
    let (a1, a2) = grid.grad_spectrum(&a.spectrum());
    let (a1, a2) = grid.inverse_real_pair(&a1, &a2);
    let w1: Vec<f64> = a1.iter().zip(a.values()).map(|(d, s)| d / s).collect();
    let w2: Vec<f64> = a2.iter().zip(a.values()).map(|(d, s)| d / s).collect();
    hessian_from_gradient(grid, &w1, &w2)
}

/// Symmetrised Jacobian of the vector field `(w1, w2)` after 2/3-rule truncation.
pub(crate) fn hessian_from_gradient(grid: &TorusGrid, w1: &[f64], w2: &[f64]) -> [RealField; 3] {
    let (mut s1, mut s2) = grid.forward_real_pair(w1, w2);
    grid.dealias_spectrum(&mut s1);
    grid.dealias_spectrum(&mut s2);
    let (d11, d21) = grid.grad_spectrum(&s1);
    let (d12, d22) = grid.grad_spectrum(&s2);
    let (h11, h22) = grid.inverse_real_pair(&d11, &d22);
    let (x, y) = grid.inverse_real_pair(&d21, &d12);
    let h12 = x.iter().zip(&y).map(|(p, q)| 0.5 * (p + q)).collect();
    [RealField::new(grid, h11), RealField::new(grid, h12), RealField::new(grid, h22)]
}

/// `|H|²` of a symmetric 2×2 field at sample `i`.
#[inline]
pub(crate) fn frob_sq(h: &[RealField; 3], i: usize) -> f64 {
    h[0].values()[i].powi(2) + 2.0 * h[1].values()[i].powi(2) + h[2].values()[i].powi(2)
}

/// `D = ∫ ρ |∇² log √ρ|²`.
pub fn log_hessian_dissipation(rho: &RealField) -> f64 {
    let h = log_sqrt_hessian(rho);
    let vals: Vec<f64> = (0..rho.values().len()).map(|i| rho.values()[i] * frob_sq(&h, i)).collect();
    mean_of(&vals)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// The four integrals entering the log-H² inequalities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogH2Terms {
    /// `∫(Δ√ρ)²`
    pub laplacian: f64,
    /// `∫|∇²√ρ|²`
    pub hessian: f64,
    /// `∫|∇√ρ|⁴/ρ`
    pub quartic: f64,
    /// `∫ρ|∇²log√ρ|²`
    pub dissipation: f64,
}

pub fn log_h2_terms(rho: &RealField, delta: f64) -> Result<LogH2Terms> {
    let lo = rho.min();
    if lo < delta || lo.is_nan() {
        return Err(QhdError::VacuumBreach { min_rho: lo, delta });
    }
    let grid = rho.grid();
    let a = rho.map(f64::sqrt);
    let sa = a.spectrum();
    let (a1, a2) = grid.grad_spectrum(&sa);
    let (a1, a2) = grid.inverse_real_pair(&a1, &a2);
    let h11 = grid.hessian_spectrum(&sa, 0, 0);
    let h22 = grid.hessian_spectrum(&sa, 1, 1);
    let h12 = grid.hessian_spectrum(&sa, 0, 1);
    let (h11, h22) = grid.inverse_real_pair(&h11, &h22);
    let h12 = grid.inverse_real(h12);
    let n = grid.len();
    let (mut lap, mut hess, mut quart) = (0.0, 0.0, 0.0);
    for i in 0..n {
        lap += (h11[i] + h22[i]).powi(2);
        hess += h11[i] * h11[i] + 2.0 * h12[i] * h12[i] + h22[i] * h22[i];
        quart += (a1[i] * a1[i] + a2[i] * a2[i]).powi(2) / rho.values()[i];
    }
    let nf = n as f64;
    Ok(LogH2Terms {
        laplacian: lap / nf,
        hessian: hess / nf,
        quartic: quart / nf,
        dissipation: log_hessian_dissipation(rho),
    })
}

fn inequality(lhs: f64, rhs: f64) -> InequalityCheck {
    InequalityCheck { lhs, rhs, holds: lhs <= rhs + 1e-10 * (1.0 + rhs) }
}

/// `⅓∫(Δ√ρ)² + ⅔∫|∇²√ρ|² + ⅓∫|∇√ρ|⁴/ρ ≤ ∫ρ|∇²log√ρ|²`.
///
/// This form is an identity in one dimension but is not true in general on `T²`; see
/// [`check_log_h2_planar`] for the version that holds there.
pub fn check_log_h2(rho: &RealField, delta: f64) -> Result<InequalityCheck> {
    let t = log_h2_terms(rho, delta)?;
    Ok(inequality(t.laplacian / 3.0 + 2.0 * t.hessian / 3.0 + t.quartic / 3.0, t.dissipation))
}

/// `¼∫(Δ√ρ)² + ½∫|∇²√ρ|² + ¼∫|∇√ρ|⁴/ρ ≤ ∫ρ|∇²log√ρ|²`.
///
/// Follows from `2D₁ + D₂ = 2∫|∇²√ρ|² + ∫(Δ√ρ)² + ∫|∇√ρ|⁴/ρ` with `D₁ = ∫ρ|∇²log√ρ|²`,
/// `D₂ = ∫ρ(Δlog√ρ)²` and the planar trace bound `D₂ ≤ 2D₁`.
pub fn check_log_h2_planar(rho: &RealField, delta: f64) -> Result<InequalityCheck> {
    let t = log_h2_terms(rho, delta)?;
    Ok(inequality(t.laplacian / 4.0 + t.hessian / 2.0 + t.quartic / 4.0, t.dissipation))
}

/// `‖u‖∞ / (‖∇u‖ (1 + |log(‖Δu‖/‖∇u‖)|))` for zero-mean `u`.
pub fn check_log_embedding(u: &RealField) -> Result<f64> {
    let sup = u.max_abs();
    let m = u.mean();
    if m.abs() > 1e-10 * sup.max(1.0) {
        return Err(QhdError::NonZeroMean { mean: m });
    }
    let [g1, g2] = gradient(u);
    let grad = (g1.norm_l2().powi(2) + g2.norm_l2().powi(2)).sqrt();
    let lap = laplacian(u).norm_l2();
    if grad == 0.0 {
        return Err(QhdError::DegenerateData("log embedding of a constant field".into()));
    }
    Ok(sup / (grad * (1.0 + (lap / grad).ln().abs())))
}

/// `∫u² log(u²/mean u²) / ∫|∇u|²` (zero for constants).
pub fn check_log_sobolev(u: &RealField) -> f64 {
    let u2: Vec<f64> = u.values().iter().map(|x| x * x).collect();
    let m = mean_of(&u2);
    if m == 0.0 {
        return 0.0;
    }
    // With w = u²/m the mean of w is 1, so ∫w log w = ∫φ(w − 1): nonnegative terms, no cancellation.
    let lhs = m * mean_of(&u2.iter().map(|&s| bregman_phi((s - m) / m)).collect::<Vec<_>>());
    let [g1, g2] = gradient(u);
    let rhs = g1.norm_l2().powi(2) + g2.norm_l2().powi(2);
    if rhs == 0.0 {
        0.0
    } else {
        lhs / rhs
    }
}

/// `½‖∇ψ‖²_{H¹} = ½(‖∇ψ‖² + ‖∇²ψ‖²)`.
pub fn half_gradient_h1_sq(w: &WaveFunction) -> f64 {
    let grid = w.grid();
    let spec = w.psi.spectrum();
    let mut acc = 0.0;
    for (idx, c) in spec.iter().enumerate() {
        let k2 = grid.k_sq(idx);
        acc += c.norm_sqr() * (k2 + k2 * k2);
    }
    0.5 * acc
}
