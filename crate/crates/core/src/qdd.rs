//! Semi-implicit solver for the quantum drift-diffusion limit
//! `∂ₜρ = −¼Δ²ρ + div div(∇√ρ⊗∇√ρ) + Δp(ρ) + div(ρ∇V)`.

use num_complex::Complex64;

use crate::error::{QhdError, Result};
use crate::functionals::entropy;
use crate::madelung::{Coupling, PressureLaw};
use crate::spectral::{mean_of, Field, RealField, TorusGrid};

#[derive(Clone, Debug, PartialEq)]
pub struct QDDParams {
    pub law: PressureLaw,
    /// Switch off pressure and/or Poisson coupling (both off gives the DLSS equation).
    pub coupling: Coupling,
    pub delta: f64,
    pub dt: f64,
    pub t_end: f64,
    pub dealias: bool,
    pub monitor_every: usize,
}

impl QDDParams {
    pub fn new(law: PressureLaw, delta: f64, dt: f64, t_end: f64) -> Self {
        Self { law, coupling: Coupling::default(), delta, dt, t_end, dealias: true, monitor_every: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(QhdError::InvalidParameter("dt must be > 0".into()));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(QhdError::InvalidParameter("t_end must be > 0".into()));
        }
        if !(self.delta > 0.0) {
            return Err(QhdError::InvalidParameter("delta must be > 0".into()));
        }
        if self.monitor_every == 0 {
            return Err(QhdError::InvalidParameter("monitor_every must be >= 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round().max(1.0) as usize
    }
}

fn floor_check(rho: &[f64], delta: f64) -> Result<()> {
    let m = rho.iter().copied().fold(f64::INFINITY, f64::min);
    if m < delta || m.is_nan() {
        Err(QhdError::VacuumBreach { min_rho: m, delta })
    } else {
        Ok(())
    }
}

/// Explicit part of the right-hand side, returned as a spectrum together with `ρ̂`.
fn explicit_spectrum(
    grid: &TorusGrid,
    rho: &[f64],
    law: &PressureLaw,
    coupling: &Coupling,
    dealias: bool,
) -> (Vec<Complex64>, Vec<Complex64>) {
    let n = grid.len();
    let clip = |s: &mut Vec<Complex64>| {
        if dealias {
            grid.dealias_spectrum(s)
        }
    };
    let a: Vec<f64> = rho.iter().map(|r| r.sqrt()).collect();
    let (sa, rho_spec) = grid.forward_real_pair(&a, rho);
    let (g1, g2) = grid.grad_spectrum(&sa);
    let (a1, a2) = grid.inverse_real_pair(&g1, &g2);
    let m11: Vec<f64> = a1.iter().map(|x| x * x).collect();
    let m22: Vec<f64> = a2.iter().map(|x| x * x).collect();
    let m12: Vec<f64> = a1.iter().zip(&a2).map(|(x, y)| x * y).collect();
    let p: Vec<f64> = rho.iter().map(|&r| coupling.p(law, r)).collect();
    let (mut s11, mut s22) = grid.forward_real_pair(&m11, &m22);
    let (mut s12, mut sp) = grid.forward_real_pair(&m12, &p);
    clip(&mut s11);
    clip(&mut s22);
    clip(&mut s12);
    clip(&mut sp);
    let d11 = grid.hessian_spectrum(&s11, 0, 0);
    let d22 = grid.hessian_spectrum(&s22, 1, 1);
    let d12 = grid.hessian_spectrum(&s12, 0, 1);
    let mut out: Vec<Complex64> = (0..n).map(|i| d11[i] + 2.0 * d12[i] + d22[i] - grid.k_sq(i) * sp[i]).collect();
    if coupling.poisson {
        let mut vs = rho_spec.clone();
        crate::spectral::inverse_laplacian_spectrum(grid, &mut vs);
        let (v1, v2) = grid.grad_spectrum(&vs);
        let (v1, v2) = grid.inverse_real_pair(&v1, &v2);
        let f1: Vec<f64> = rho.iter().zip(&v1).map(|(r, v)| r * v).collect();
        let f2: Vec<f64> = rho.iter().zip(&v2).map(|(r, v)| r * v).collect();
        let (mut sf1, mut sf2) = grid.forward_real_pair(&f1, &f2);
        clip(&mut sf1);
        clip(&mut sf2);
        for (o, d) in out.iter_mut().zip(grid.div_spectrum(&sf1, &sf2)) {
            *o += d;
        }
    }
    out[0] = Complex64::new(0.0, 0.0);
    (out, rho_spec)
}

/// The full right-hand side `∂ₜρ` evaluated at `rho`.
pub fn qdd_rate(rho: &RealField, law: &PressureLaw, coupling: &Coupling) -> RealField {
    let grid = rho.grid();
    let (mut n, rs) = explicit_spectrum(grid, rho.values(), law, coupling, true);
    for (i, c) in n.iter_mut().enumerate() {
        *c -= 0.25 * grid.k_sq(i).powi(2) * rs[i];
    }
    RealField::new(grid, grid.inverse_real(n))
}

/// Reusable IMEX stepper with the implicit symbol precomputed.
pub struct QddStepper {
    params: QDDParams,
    grid: TorusGrid,
    implicit: Vec<f64>,
}

impl QddStepper {
    pub fn new(params: &QDDParams, grid: &TorusGrid) -> Result<Self> {
        params.validate()?;
        let implicit = (0..grid.len()).map(|i| 1.0 / (1.0 + 0.25 * params.dt * grid.k_sq(i).powi(2))).collect();
        Ok(Self { params: params.clone(), grid: grid.clone(), implicit })
    }

    pub fn step(&self, rho: &mut RealField) -> Result<()> {
        let p = &self.params;
        floor_check(rho.values(), p.delta)?;
        let (n, mut rs) = explicit_spectrum(&self.grid, rho.values(), &p.law, &p.coupling, p.dealias);
        for i in 0..rs.len() {
            rs[i] = (rs[i] + p.dt * n[i]) * self.implicit[i];
        }
        let out = self.grid.inverse_real(rs);
        floor_check(&out, p.delta)?;
        rho.values_mut().copy_from_slice(&out);
        Ok(())
    }
}

/// One IMEX step: `ρ̂ⁿ⁺¹ = (ρ̂ⁿ + dt·N̂(ρⁿ)) / (1 + dt|k|⁴/4)`.
pub fn qdd_step(rho: &RealField, params: &QDDParams) -> Result<RealField> {
    let stepper = QddStepper::new(params, rho.grid())?;
    let mut out = rho.clone();
    stepper.step(&mut out)?;
    Ok(out)
}

/// Constitutive momentum `J̄ = ¼∇Δρ − div(∇√ρ⊗∇√ρ) − ∇p(ρ) − ρ∇V`, so that `∂ₜρ + div J̄ = 0`.
pub fn consistent_momentum(rho: &RealField, law: &PressureLaw, delta: f64) -> Result<[RealField; 2]> {
    consistent_momentum_with(rho, law, &Coupling::default(), delta)
}

pub fn consistent_momentum_with(
    rho: &RealField,
    law: &PressureLaw,
    coupling: &Coupling,
    delta: f64,
) -> Result<[RealField; 2]> {
    floor_check(rho.values(), delta)?;
    let grid = rho.grid();
    let n = grid.len();
    let a = rho.map(f64::sqrt);
    let sa = a.spectrum();
    let (g1, g2) = grid.grad_spectrum(&sa);
    let (a1, a2) = grid.inverse_real_pair(&g1, &g2);
    let m11: Vec<f64> = a1.iter().map(|x| x * x).collect();
    let m22: Vec<f64> = a2.iter().map(|x| x * x).collect();
    let m12: Vec<f64> = a1.iter().zip(&a2).map(|(x, y)| x * y).collect();
    let p: Vec<f64> = rho.values().iter().map(|&r| coupling.p(law, r)).collect();
    let (mut s11, mut s22) = grid.forward_real_pair(&m11, &m22);
    let (mut s12, mut sp) = grid.forward_real_pair(&m12, &p);
    for s in [&mut s11, &mut s22, &mut s12, &mut sp] {
        grid.dealias_spectrum(s);
    }
    let rs = rho.spectrum();
    let lap: Vec<Complex64> = (0..n).map(|i| -0.25 * grid.k_sq(i) * rs[i] - sp[i]).collect();
    let (mut j1, mut j2) = grid.grad_spectrum(&lap);
    let (d1a, _) = grid.grad_spectrum(&s11);
    let (d1c, d2c) = grid.grad_spectrum(&s12);
    let (_, d2d) = grid.grad_spectrum(&s22);
    for i in 0..n {
        j1[i] -= d1a[i] + d2c[i];
        j2[i] -= d1c[i] + d2d[i];
    }
    let (mut j1, mut j2) = grid.inverse_real_pair(&j1, &j2);
    if coupling.poisson {
        let mut vs = rs;
        crate::spectral::inverse_laplacian_spectrum(grid, &mut vs);
        let (v1, v2) = grid.grad_spectrum(&vs);
        let (v1, v2) = grid.inverse_real_pair(&v1, &v2);
        for i in 0..n {
            j1[i] -= rho.values()[i] * v1[i];
            j2[i] -= rho.values()[i] * v2[i];
        }
    }
    Ok([RealField::new(grid, j1), RealField::new(grid, j2)])
}

/// Entropy and dissipation diagnostics of one QDD sample.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QddRecord {
    pub t: f64,
    pub mass: f64,
    pub entropy: f64,
    /// `∫|∇²√ρ|²`
    pub hessian_sqrt: f64,
    /// `∫|∇ρ^{1/4}|⁴`
    pub quarter_grad4: f64,
    pub min_rho: f64,
    /// `‖ρ − M₀‖_{L²}`
    pub deviation: f64,
}

pub fn qdd_record(rho: &RealField, m0: f64, t: f64) -> QddRecord {
    let grid = rho.grid();
    let sa = rho.map(f64::sqrt).spectrum();
    let h11 = grid.hessian_spectrum(&sa, 0, 0);
    let h22 = grid.hessian_spectrum(&sa, 1, 1);
    let h12 = grid.hessian_spectrum(&sa, 0, 1);
    let (h11, h22) = grid.inverse_real_pair(&h11, &h22);
    let h12 = grid.inverse_real(h12);
    let sb = rho.map(|r| r.sqrt().sqrt()).spectrum();
    let (b1, b2) = grid.grad_spectrum(&sb);
    let (b1, b2) = grid.inverse_real_pair(&b1, &b2);
    let hs: Vec<f64> = (0..grid.len()).map(|i| h11[i] * h11[i] + 2.0 * h12[i] * h12[i] + h22[i] * h22[i]).collect();
    let q: Vec<f64> = b1.iter().zip(&b2).map(|(x, y)| (x * x + y * y).powi(2)).collect();
    let dev: Vec<f64> = rho.values().iter().map(|r| (r - m0).powi(2)).collect();
    QddRecord {
        t,
        mass: rho.mean(),
        entropy: entropy(rho, m0),
        hessian_sqrt: mean_of(&hs),
        quarter_grad4: mean_of(&q),
        min_rho: rho.min(),
        deviation: mean_of(&dev).sqrt(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum QddStatus {
    Completed,
    VacuumBreach { t: f64, min_rho: f64 },
}

#[derive(Clone, Debug)]
pub struct QDDTrajectory {
    pub params: QDDParams,
    pub records: Vec<QddRecord>,
    pub status: QddStatus,
    pub final_state: RealField,
}

impl QDDTrajectory {
    /// Largest increase of `H` between consecutive records (≤ 0 for a monotone run).
    pub fn max_entropy_increase(&self) -> f64 {
        self.records.windows(2).map(|w| w[1].entropy - w[0].entropy).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `H(T) + ∫₀ᵀ(∫|∇²√ρ|² + ∫|∇ρ^{1/4}|⁴)` by the trapezoid rule, next to `H(0)`.
    pub fn dissipation_budget(&self) -> (f64, f64) {
        let mut acc = 0.0;
        for w in self.records.windows(2) {
            let a = w[0].hessian_sqrt + w[0].quarter_grad4;
            let b = w[1].hessian_sqrt + w[1].quarter_grad4;
            acc += 0.5 * (w[1].t - w[0].t) * (a + b);
        }
        let h_end = self.records.last().map_or(0.0, |r| r.entropy);
        let h0 = self.records.first().map_or(0.0, |r| r.entropy);
        (h_end + acc, h0)
    }
}

pub fn run_qdd(rho0: &RealField, params: &QDDParams) -> Result<QDDTrajectory> {
    let stepper = QddStepper::new(params, rho0.grid())?;
    floor_check(rho0.values(), params.delta)?;
    let m0 = params.law.m0;
    let mut rho = rho0.clone();
    let mut records = vec![qdd_record(&rho, m0, 0.0)];
    let steps = params.steps();
    let mut status = QddStatus::Completed;
    for k in 1..=steps {
        let t = k as f64 * params.dt;
        if let Err(e) = stepper.step(&mut rho) {
            match e {
                QhdError::VacuumBreach { min_rho, .. } => {
                    status = QddStatus::VacuumBreach { t, min_rho };
                    break;
                }
                other => return Err(other),
            }
        }
        if k % params.monitor_every == 0 || k == steps {
            records.push(qdd_record(&rho, m0, t));
        }
    }
    Ok(QDDTrajectory { params: params.clone(), records, status, final_state: rho })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_is_fixed() {
        let g = TorusGrid::square(16).unwrap();
        let rho = RealField::constant(&g, 1.0);
        let p = QDDParams::new(PressureLaw::new(1, 1.0), 0.25, 1e-4, 1e-3);
        assert_eq!(qdd_step(&rho, &p).unwrap(), rho);
        let j = consistent_momentum(&rho, &p.law, 0.25).unwrap();
        assert_eq!(j[0].max_abs(), 0.0);
        assert_eq!(j[1].max_abs(), 0.0);
    }

    #[test]
    fn momentum_divergence_matches_rate() {
        let g = TorusGrid::square(32).unwrap();
        let law = PressureLaw::new(1, 1.0);
        let rho = RealField::from_fn(&g, |x, y| 1.0 + 0.2 * (2.0 * PI * x).cos() * (2.0 * PI * y).sin());
        let j = consistent_momentum(&rho, &law, 0.25).unwrap();
        let div = crate::spectral::divergence(&j);
        let rate = qdd_rate(&rho, &law, &Coupling::default());
        let err = div.zip_map(&rate, |a, b| a + b).max_abs();
        assert!(err < 1e-9 * rate.max_abs(), "{err:e}");
    }
}
