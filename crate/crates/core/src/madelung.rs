//! Polar factorisation `ψ = √ρ e^{iS}` and its inverse.

use num_complex::Complex64;

use crate::error::{QhdError, Result};
use crate::spectral::{curl, divergence, gradient, laplacian, mean_of, ComplexField, Field, RealField, TorusGrid};

/// Relative tolerance for the curl and zero-circulation checks on a velocity.
pub const VELOCITY_CHECK_TOL: f64 = 1e-8;

/// γ-law internal energy `f(ρ) = (ρ − M₀)^{2n} / (2n)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PressureLaw {
    pub n: u32,
    pub m0: f64,
}

impl PressureLaw {
    pub fn new(n: u32, m0: f64) -> Self {
        assert!(n >= 1, "pressure law exponent index must be >= 1");
        Self { n, m0 }
    }

    pub fn f(&self, rho: f64) -> f64 {
        let n2 = 2 * self.n as i32;
        (rho - self.m0).powi(n2) / n2 as f64
    }

    pub fn f_prime(&self, rho: f64) -> f64 {
        (rho - self.m0).powi(2 * self.n as i32 - 1)
    }

    pub fn p(&self, rho: f64) -> f64 {
        self.f_prime(rho) * rho - self.f(rho)
    }

    pub fn p_prime(&self, rho: f64) -> f64 {
        let e = 2 * self.n as i32;
        (e - 1) as f64 * rho * (rho - self.m0).powi(e - 2)
    }
}

/// Which self-consistent potentials act on the fluid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coupling {
    pub pressure: bool,
    pub poisson: bool,
}

impl Default for Coupling {
    fn default() -> Self {
        Self { pressure: true, poisson: true }
    }
}

impl Coupling {
    pub fn f_prime(&self, law: &PressureLaw, rho: f64) -> f64 {
        if self.pressure {
            law.f_prime(rho)
        } else {
            0.0
        }
    }

    pub fn f(&self, law: &PressureLaw, rho: f64) -> f64 {
        if self.pressure {
            law.f(rho)
        } else {
            0.0
        }
    }

    pub fn p(&self, law: &PressureLaw, rho: f64) -> f64 {
        if self.pressure {
            law.p(rho)
        } else {
            0.0
        }
    }

    pub fn p_prime(&self, law: &PressureLaw, rho: f64) -> f64 {
        if self.pressure {
            law.p_prime(rho)
        } else {
            0.0
        }
    }

    /// Zero-mean `V` with `−ΔV = ρ − mean(ρ)`, or zero when uncoupled.
    pub fn potential(&self, rho: &RealField) -> RealField {
        if self.poisson {
            crate::spectral::poisson_zero_mode(rho)
        } else {
            RealField::zeros(rho.grid())
        }
    }
}

/// Wave function together with the spatial mean of its unwrapped phase.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveFunction {
    pub psi: ComplexField,
    pub mean_phase: f64,
}

impl WaveFunction {
    pub fn grid(&self) -> &TorusGrid {
        self.psi.grid()
    }

    pub fn density(&self) -> RealField {
        self.psi.norm_sqr()
    }

    pub fn min_density(&self) -> f64 {
        self.psi.values().iter().map(|c| c.norm_sqr()).fold(f64::INFINITY, f64::min)
    }

    pub fn mass(&self) -> f64 {
        mean_of(&self.psi.values().iter().map(|c| c.norm_sqr()).collect::<Vec<_>>())
    }

    /// Unwrapped phase `S` with spatial mean `mean_phase`.
    pub fn phase(&self) -> RealField {
        let v = velocity_of(&self.psi);
        let mut s = phase_from_velocity(&v);
        for x in s.values_mut() {
            *x += self.mean_phase;
        }
        s
    }
}

/// Hydrodynamic snapshot `(ρ, v, V)` with cached `μ`, `σ`.
#[derive(Clone, Debug, PartialEq)]
pub struct HydroState {
    pub rho: RealField,
    pub v: [RealField; 2],
    pub potential: RealField,
    pub mu: RealField,
    pub sigma: RealField,
}

impl HydroState {
    /// Builds a state from `(ρ, v)`, computing `V`, `μ` and `σ` in hydrodynamic form.
    pub fn from_hydro(rho: RealField, v: [RealField; 2], law: &PressureLaw, coupling: &Coupling) -> Self {
        let potential = coupling.potential(&rho);
        let mu = chemical_potential(&rho, &v, &potential, law, coupling);
        let sigma = sigma_hydro(&rho, &v);
        Self { rho, v, potential, mu, sigma }
    }

    pub fn grid(&self) -> &TorusGrid {
        self.rho.grid()
    }

    /// Momentum `J = ρv`.
    pub fn momentum(&self) -> [RealField; 2] {
        [self.rho.zip_map(&self.v[0], |r, v| r * v), self.rho.zip_map(&self.v[1], |r, v| r * v)]
    }

    /// `Λ = √ρ v`.
    pub fn lambda(&self) -> [RealField; 2] {
        [self.rho.zip_map(&self.v[0], |r, v| r.sqrt() * v), self.rho.zip_map(&self.v[1], |r, v| r.sqrt() * v)]
    }

    pub fn min_rho(&self) -> f64 {
        self.rho.min()
    }
}

fn check_floor(min_rho: f64, delta: f64) -> Result<()> {
    if min_rho < delta || min_rho.is_nan() {
        Err(QhdError::VacuumBreach { min_rho, delta })
    } else {
        Ok(())
    }
}

/// `v = Im(∇ψ/ψ)`.
pub fn velocity_of(psi: &ComplexField) -> [RealField; 2] {
    let grid = psi.grid();
    let [g1, g2] = gradient(psi);
    let comp = |g: &ComplexField| {
        let vals = g.values().iter().zip(psi.values()).map(|(d, p)| (d * p.conj()).im / p.norm_sqr()).collect();
        RealField::new(grid, vals)
    };
    [comp(&g1), comp(&g2)]
}

/// Zero-mean `S` with `∇S = v`, by spectral inversion.
pub fn phase_from_velocity(v: &[RealField; 2]) -> RealField {
    let grid = v[0].grid();
    let (s1, s2) = grid.forward_real_pair(v[0].values(), v[1].values());
    let spec = phase_spectrum(grid, &s1, &s2);
    RealField::new(grid, grid.inverse_real(spec))
}

pub(crate) fn phase_spectrum(grid: &TorusGrid, s1: &[Complex64], s2: &[Complex64]) -> Vec<Complex64> {
    s1.iter()
        .zip(s2)
        .enumerate()
        .map(|(idx, (a, b))| {
            let (k1, k2) = grid.kd(idx);
            let kk = k1 * k1 + k2 * k2;
            if kk == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                let z = (a * k1 + b * k2) / kk;
                Complex64::new(z.im, -z.re)
            }
        })
        .collect()
}

/// `μ = −Δ√ρ/(2√ρ) + ½|v|² + f'(ρ) + V`.
pub fn chemical_potential(
    rho: &RealField,
    v: &[RealField; 2],
    potential: &RealField,
    law: &PressureLaw,
    coupling: &Coupling,
) -> RealField {
    let a = rho.map(f64::sqrt);
    let la = laplacian(&a);
    let vals = (0..rho.values().len())
        .map(|i| {
            let r = rho.values()[i];
            let (v1, v2) = (v[0].values()[i], v[1].values()[i]);
            -la.values()[i] / (2.0 * a.values()[i])
                + 0.5 * (v1 * v1 + v2 * v2)
                + coupling.f_prime(law, r)
                + potential.values()[i]
        })
        .collect();
    RealField::new(rho.grid(), vals)
}

/// `σ = −div(ρv)/(2ρ)`.
pub fn sigma_hydro(rho: &RealField, v: &[RealField; 2]) -> RealField {
    let j = [rho.zip_map(&v[0], |r, u| r * u), rho.zip_map(&v[1], |r, u| r * u)];
    let d = divergence(&j);
    d.zip_map(rho, |dj, r| -dj / (2.0 * r))
}

/// Polar factorisation of `w` into a hydrodynamic state (full coupling).
pub fn extract_hydro(w: &WaveFunction, law: &PressureLaw, delta: f64) -> Result<HydroState> {
    extract_hydro_with(w, law, &Coupling::default(), delta)
}

pub fn extract_hydro_with(w: &WaveFunction, law: &PressureLaw, coupling: &Coupling, delta: f64) -> Result<HydroState> {
    check_floor(w.min_density(), delta)?;
    Ok(hydro_from_psi(&w.psi, law, coupling))
}

pub(crate) fn hydro_from_psi(psi: &ComplexField, law: &PressureLaw, coupling: &Coupling) -> HydroState {
    let grid = psi.grid();
    let n = grid.len();
    let spec = psi.spectrum();
    let (mut g1, mut g2) = grid.grad_spectrum(&spec);
    let mut lap: Vec<Complex64> = spec.iter().enumerate().map(|(i, c)| c * -grid.k_sq(i)).collect();
    grid.inverse_inplace(&mut g1);
    grid.inverse_inplace(&mut g2);
    grid.inverse_inplace(&mut lap);
    let mut rho = Vec::with_capacity(n);
    let mut v1 = Vec::with_capacity(n);
    let mut v2 = Vec::with_capacity(n);
    let mut q = Vec::with_capacity(n);
    for i in 0..n {
        let p = psi.values()[i];
        let r = p.norm_sqr();
        rho.push(r);
        v1.push((g1[i] * p.conj()).im / r);
        v2.push((g2[i] * p.conj()).im / r);
        q.push(lap[i] / p);
    }
    let rho = RealField::new(grid, rho);
    let potential = coupling.potential(&rho);
    let mu = (0..n).map(|i| -0.5 * q[i].re + coupling.f_prime(law, rho.values()[i]) + potential.values()[i]).collect();
    let sigma = q.iter().map(|z| -0.5 * z.im).collect();
    HydroState {
        rho,
        v: [RealField::new(grid, v1), RealField::new(grid, v2)],
        potential,
        mu: RealField::new(grid, mu),
        sigma: RealField::new(grid, sigma),
    }
}

/// Largest line average of `v₁` along x1-lines and of `v₂` along x2-lines.
pub fn max_line_average(v: &[RealField; 2]) -> f64 {
    let grid = v[0].grid();
    let (n1, n2) = (grid.n1(), grid.n2());
    let mut worst: f64 = 0.0;
    for i2 in 0..n2 {
        let s: f64 = (0..n1).map(|i1| v[0].values()[i1 * n2 + i2]).sum();
        worst = worst.max((s / n1 as f64).abs());
    }
    for i1 in 0..n1 {
        let s: f64 = v[1].values()[i1 * n2..(i1 + 1) * n2].iter().sum();
        worst = worst.max((s / n2 as f64).abs());
    }
    worst
}

/// Checks that `v` is a single-valued gradient (curl free, zero circulation).
pub fn check_potential_flow(v: &[RealField; 2]) -> Result<()> {
    let scale = 1.0 + v[0].max_abs().max(v[1].max_abs());
    let c = curl(v).max_abs();
    if c > VELOCITY_CHECK_TOL * scale {
        return Err(QhdError::NotIrrotational { curl: c });
    }
    let a = max_line_average(v);
    if a > VELOCITY_CHECK_TOL * scale {
        return Err(QhdError::NonZeroCirculation { average: a });
    }
    Ok(())
}

/// Reconstructs `ψ = √ρ e^{iS}` with `∇S = v` and `mean(S) = s_star`.
pub fn lift_wavefunction(state: &HydroState, s_star: f64, delta: f64) -> Result<WaveFunction> {
    check_floor(state.min_rho(), delta)?;
    check_potential_flow(&state.v)?;
    let s = phase_from_velocity(&state.v);
    let grid = state.grid();
    let psi =
        state.rho.values().iter().zip(s.values()).map(|(r, ph)| Complex64::from_polar(r.sqrt(), ph + s_star)).collect();
    Ok(WaveFunction { psi: ComplexField::new(grid, psi), mean_phase: s_star })
}

/// `∫μ` via the integrated-by-parts form `∫ −|∇√ρ|²/(2ρ) + ½|v|² + f'(ρ) + V`.
pub fn mean_mu(state: &HydroState, law: &PressureLaw, delta: f64) -> Result<f64> {
    mean_mu_with(state, law, &Coupling::default(), delta)
}

pub fn mean_mu_with(state: &HydroState, law: &PressureLaw, coupling: &Coupling, delta: f64) -> Result<f64> {
    check_floor(state.min_rho(), delta)?;
    let a = state.rho.map(f64::sqrt);
    let [a1, a2] = gradient(&a);
    let vals: Vec<f64> = (0..a.values().len())
        .map(|i| {
            let r = state.rho.values()[i];
            let ga = a1.values()[i].powi(2) + a2.values()[i].powi(2);
            let vv = state.v[0].values()[i].powi(2) + state.v[1].values()[i].powi(2);
            -ga / (2.0 * r) + 0.5 * vv + coupling.f_prime(law, r) + state.potential.values()[i]
        })
        .collect();
    Ok(mean_of(&vals))
}

/// Exact update of `dS/dt = −μ̄ − S/τ` with `μ̄` frozen over the step.
pub fn evolve_mean_phase(mean_s: f64, mean_mu: f64, tau: f64, dt: f64) -> f64 {
    if tau.is_infinite() {
        return mean_s - dt * mean_mu;
    }
    let e = (-dt / tau).exp();
    e * mean_s - tau * (1.0 - e) * mean_mu
}

/// Pointwise `|∇ψ|² − |∇√ρ|² − ρ|v|²`.
pub fn polar_defect(w: &WaveFunction) -> RealField {
    let [p1, p2] = gradient(&w.psi);
    let rho = w.density();
    let a = rho.map(f64::sqrt);
    let [a1, a2] = gradient(&a);
    let v = velocity_of(&w.psi);
    let vals = (0..rho.values().len())
        .map(|i| {
            let lhs = p1.values()[i].norm_sqr() + p2.values()[i].norm_sqr();
            let ga = a1.values()[i].powi(2) + a2.values()[i].powi(2);
            let vv = v[0].values()[i].powi(2) + v[1].values()[i].powi(2);
            lhs - ga - rho.values()[i] * vv
        })
        .collect();
    RealField::new(rho.grid(), vals)
}
