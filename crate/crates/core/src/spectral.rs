//! Fourier collocation on the unit torus `[0,1)²`.
//!
//! Spectral coefficients are normalised so that `f(x) = Σ_k f̂_k e^{i k·x}`,
//! which makes the sample mean equal to `f̂_0` and Parseval read
//! `mean |f|² = Σ |f̂_k|²`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{QhdError, Result};

/// Tolerance on the mean of a Poisson right-hand side.
pub const POISSON_MEAN_TOL: f64 = 1e-10;

struct Plans {
    fwd1: Arc<dyn Fft<f64>>,
    inv1: Arc<dyn Fft<f64>>,
    fwd2: Arc<dyn Fft<f64>>,
    inv2: Arc<dyn Fft<f64>>,
    /// 2πj per axis, symmetric range, Nyquist kept (used by even operators).
    k1: Vec<f64>,
    k2: Vec<f64>,
    /// Same as `k1`/`k2` but with the Nyquist entry zeroed (odd operators).
    kd1: Vec<f64>,
    kd2: Vec<f64>,
    keep1: Vec<bool>,
    keep2: Vec<bool>,
}

/// Uniform periodic grid on `[0,1)²` with `n1 × n2` samples, row-major,
/// `x = (i1/n1, i2/n2)`.
#[derive(Clone)]
pub struct TorusGrid {
    n1: usize,
    n2: usize,
    plans: Arc<Plans>,
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TorusGrid({}x{})", self.n1, self.n2)
    }
}

impl PartialEq for TorusGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n1 == other.n1 && self.n2 == other.n2
    }
}

fn wavenumbers(n: usize) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    let mut k = Vec::with_capacity(n);
    let mut kd = Vec::with_capacity(n);
    let mut keep = Vec::with_capacity(n);
    for i in 0..n {
        let j = if i <= n / 2 { i as i64 } else { i as i64 - n as i64 };
        let kk = 2.0 * PI * j as f64;
        k.push(kk);
        kd.push(if i == n / 2 { 0.0 } else { kk });
        keep.push(3 * j.unsigned_abs() as usize <= n);
    }
    (k, kd, keep)
}

impl TorusGrid {
    pub fn new(n1: usize, n2: usize) -> Result<Self> {
        if n1 < 8 || n2 < 8 || n1 % 2 != 0 || n2 % 2 != 0 {
            return Err(QhdError::InvalidGrid { n1, n2 });
        }
        let mut planner = FftPlanner::new();
        let (k1, kd1, keep1) = wavenumbers(n1);
        let (k2, kd2, keep2) = wavenumbers(n2);
        let plans = Plans {
            fwd1: planner.plan_fft_forward(n1),
            inv1: planner.plan_fft_inverse(n1),
            fwd2: planner.plan_fft_forward(n2),
            inv2: planner.plan_fft_inverse(n2),
            k1,
            k2,
            kd1,
            kd2,
            keep1,
            keep2,
        };
        Ok(Self { n1, n2, plans: Arc::new(plans) })
    }

    /// Square `n × n` grid.
    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Sample point of flat index `idx`.
    pub fn point(&self, idx: usize) -> (f64, f64) {
        let i1 = idx / self.n2;
        let i2 = idx % self.n2;
        (i1 as f64 / self.n1 as f64, i2 as f64 / self.n2 as f64)
    }

    /// Integer wavenumber pair of flat spectral index `idx`.
    pub fn mode(&self, idx: usize) -> (i64, i64) {
        let signed = |i: usize, n: usize| if i <= n / 2 { i as i64 } else { i as i64 - n as i64 };
        (signed(idx / self.n2, self.n1), signed(idx % self.n2, self.n2))
    }

    /// Physical wavenumber `(k1, k2)` for odd (first-derivative) operators.
    #[inline]
    pub fn kd(&self, idx: usize) -> (f64, f64) {
        (self.plans.kd1[idx / self.n2], self.plans.kd2[idx % self.n2])
    }

    /// `|k|²` with the Nyquist modes kept.
    #[inline]
    pub fn k_sq(&self, idx: usize) -> f64 {
        let a = self.plans.k1[idx / self.n2];
        let b = self.plans.k2[idx % self.n2];
        a * a + b * b
    }

    #[inline]
    pub fn retained(&self, idx: usize) -> bool {
        self.plans.keep1[idx / self.n2] && self.plans.keep2[idx % self.n2]
    }

    fn transpose(&self, src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
        for r in 0..rows {
            let row = &src[r * cols..(r + 1) * cols];
            for (c, v) in row.iter().enumerate() {
                dst[c * rows + r] = *v;
            }
        }
    }

    fn transform(&self, data: &mut [Complex64], forward: bool) {
        assert_eq!(data.len(), self.len(), "field does not match grid");
        let (p1, p2) =
            if forward { (&self.plans.fwd1, &self.plans.fwd2) } else { (&self.plans.inv1, &self.plans.inv2) };
        let scratch_len = p1.get_inplace_scratch_len().max(p2.get_inplace_scratch_len());
        let mut scratch = vec![Complex64::new(0.0, 0.0); scratch_len];
        p2.process_with_scratch(data, &mut scratch);
        let mut t = vec![Complex64::new(0.0, 0.0); data.len()];
        self.transpose(data, &mut t, self.n1, self.n2);
        p1.process_with_scratch(&mut t, &mut scratch);
        self.transpose(&t, data, self.n2, self.n1);
        if forward {
            let s = 1.0 / self.len() as f64;
            for v in data.iter_mut() {
                *v *= s;
            }
        }
    }

    /// Forward transform in place (normalised coefficients).
    pub fn forward_inplace(&self, data: &mut [Complex64]) {
        self.transform(data, true);
    }

    /// Inverse transform in place.
    pub fn inverse_inplace(&self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    pub fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut d: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward_inplace(&mut d);
        d
    }

    pub fn forward_complex(&self, values: &[Complex64]) -> Vec<Complex64> {
        let mut d = values.to_vec();
        self.forward_inplace(&mut d);
        d
    }

    /// Inverse transform of a spectrum known to represent a real field.
    pub fn inverse_real(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.inverse_inplace(&mut spec);
        spec.into_iter().map(|c| c.re).collect()
    }

    /// Inverse transform of two real-field spectra with one complex transform.
    pub fn inverse_real_pair(&self, a: &[Complex64], b: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let i = Complex64::new(0.0, 1.0);
        let mut d: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x + i * y).collect();
        self.inverse_inplace(&mut d);
        d.into_iter().map(|c| (c.re, c.im)).unzip()
    }

    /// Forward transform of two real fields with one complex transform.
    pub fn forward_real_pair(&self, a: &[f64], b: &[f64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let mut d: Vec<Complex64> = a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect();
        self.forward_inplace(&mut d);
        let n = self.len();
        let mut fa = vec![Complex64::new(0.0, 0.0); n];
        let mut fb = vec![Complex64::new(0.0, 0.0); n];
        for idx in 0..n {
            let m = self.negate_index(idx);
            let z = d[idx];
            let zc = d[m].conj();
            fa[idx] = 0.5 * (z + zc);
            fb[idx] = Complex64::new(0.0, -0.5) * (z - zc);
        }
        (fa, fb)
    }

    /// Flat index of the mode `-k`.
    #[inline]
    pub fn negate_index(&self, idx: usize) -> usize {
        let i1 = idx / self.n2;
        let i2 = idx % self.n2;
        ((self.n1 - i1) % self.n1) * self.n2 + (self.n2 - i2) % self.n2
    }

    /// Zero coefficients outside the 2/3-rule band.
    pub fn dealias_spectrum(&self, spec: &mut [Complex64]) {
        for (idx, c) in spec.iter_mut().enumerate() {
            if !self.retained(idx) {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// Spectral derivative multipliers applied to a spectrum: returns `(i k1 f̂, i k2 f̂)`.
    pub fn grad_spectrum(&self, spec: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let mut g1 = Vec::with_capacity(spec.len());
        let mut g2 = Vec::with_capacity(spec.len());
        for (idx, c) in spec.iter().enumerate() {
            let (a, b) = self.kd(idx);
            let ic = Complex64::new(-c.im, c.re);
            g1.push(ic * a);
            g2.push(ic * b);
        }
        (g1, g2)
    }

    /// Spectrum of `∂_a ∂_b f` with `a, b ∈ {0, 1}`.
    pub fn hessian_spectrum(&self, spec: &[Complex64], a: usize, b: usize) -> Vec<Complex64> {
        spec.iter()
            .enumerate()
            .map(|(idx, c)| {
                let kk = [self.plans.k1[idx / self.n2], self.plans.k2[idx % self.n2]];
                let kd = self.kd(idx);
                let kd = [kd.0, kd.1];
                // Pure second derivatives keep the Nyquist mode, mixed ones do not.
                let m = if a == b { -kk[a] * kk[a] } else { -kd[a] * kd[b] };
                c * m
            })
            .collect()
    }

    /// Divergence spectrum of a vector field given by its component spectra.
    pub fn div_spectrum(&self, s1: &[Complex64], s2: &[Complex64]) -> Vec<Complex64> {
        s1.iter()
            .zip(s2)
            .enumerate()
            .map(|(idx, (a, b))| {
                let (k1, k2) = self.kd(idx);
                let z = a * k1 + b * k2;
                Complex64::new(-z.im, z.re)
            })
            .collect()
    }
}

/// Common access to real and complex sampled fields.
pub trait Field: Sized + Clone {
    fn grid(&self) -> &TorusGrid;
    fn spectrum(&self) -> Vec<Complex64>;
    fn from_spectrum(grid: &TorusGrid, spec: Vec<Complex64>) -> Self;
}

/// Real samples on a [`TorusGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct RealField {
    grid: TorusGrid,
    values: Vec<f64>,
}

/// Complex samples on a [`TorusGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    grid: TorusGrid,
    values: Vec<Complex64>,
}

impl RealField {
    pub fn new(grid: &TorusGrid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len(), "field does not match grid");
        Self { grid: grid.clone(), values }
    }

    pub fn zeros(grid: &TorusGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &TorusGrid, c: f64) -> Self {
        Self::new(grid, vec![c; grid.len()])
    }

    pub fn from_fn(grid: &TorusGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let (x1, x2) = grid.point(i);
                f(x1, x2)
            })
            .collect();
        Self::new(grid, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::new(&self.grid, self.values.iter().map(|&x| f(x)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self::new(&self.grid, self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn mean(&self) -> f64 {
        integrate(self)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `L²(T²)` norm.
    pub fn norm_l2(&self) -> f64 {
        (self.values.iter().map(|x| x * x).sum::<f64>() / self.values.len() as f64).sqrt()
    }

    pub fn to_complex(&self) -> ComplexField {
        ComplexField::new(&self.grid, self.values.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }
}

impl ComplexField {
    pub fn new(grid: &TorusGrid, values: Vec<Complex64>) -> Self {
        assert_eq!(values.len(), grid.len(), "field does not match grid");
        Self { grid: grid.clone(), values }
    }

    pub fn from_fn(grid: &TorusGrid, f: impl Fn(f64, f64) -> Complex64) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let (x1, x2) = grid.point(i);
                f(x1, x2)
            })
            .collect();
        Self::new(grid, values)
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn re(&self) -> RealField {
        RealField::new(&self.grid, self.values.iter().map(|c| c.re).collect())
    }

    pub fn im(&self) -> RealField {
        RealField::new(&self.grid, self.values.iter().map(|c| c.im).collect())
    }

    pub fn norm_sqr(&self) -> RealField {
        RealField::new(&self.grid, self.values.iter().map(|c| c.norm_sqr()).collect())
    }

    pub fn abs(&self) -> RealField {
        RealField::new(&self.grid, self.values.iter().map(|c| c.norm()).collect())
    }
}

impl Field for RealField {
    fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    fn spectrum(&self) -> Vec<Complex64> {
        self.grid.forward_real(&self.values)
    }

    fn from_spectrum(grid: &TorusGrid, spec: Vec<Complex64>) -> Self {
        RealField::new(grid, grid.inverse_real(spec))
    }
}

impl Field for ComplexField {
    fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    fn spectrum(&self) -> Vec<Complex64> {
        self.grid.forward_complex(&self.values)
    }

    fn from_spectrum(grid: &TorusGrid, mut spec: Vec<Complex64>) -> Self {
        grid.inverse_inplace(&mut spec);
        ComplexField::new(grid, spec)
    }
}

/// Spectral gradient `(∂₁f, ∂₂f)`; the Nyquist first-derivative coefficient is zero.
pub fn gradient<F: Field>(f: &F) -> [F; 2] {
    let grid = f.grid().clone();
    let (g1, g2) = grid.grad_spectrum(&f.spectrum());
    [F::from_spectrum(&grid, g1), F::from_spectrum(&grid, g2)]
}

pub fn laplacian<F: Field>(f: &F) -> F {
    let grid = f.grid().clone();
    let mut s = f.spectrum();
    for (idx, c) in s.iter_mut().enumerate() {
        *c *= -grid.k_sq(idx);
    }
    F::from_spectrum(&grid, s)
}

pub fn bilaplacian<F: Field>(f: &F) -> F {
    let grid = f.grid().clone();
    let mut s = f.spectrum();
    for (idx, c) in s.iter_mut().enumerate() {
        let k2 = grid.k_sq(idx);
        *c *= k2 * k2;
    }
    F::from_spectrum(&grid, s)
}

/// Divergence of a real vector field.
pub fn divergence(v: &[RealField; 2]) -> RealField {
    let grid = v[0].grid().clone();
    let (s1, s2) = grid.forward_real_pair(v[0].values(), v[1].values());
    RealField::new(&grid, grid.inverse_real(grid.div_spectrum(&s1, &s2)))
}

/// Scalar curl `∂₁v₂ − ∂₂v₁`.
pub fn curl(v: &[RealField; 2]) -> RealField {
    let grid = v[0].grid().clone();
    let (s1, s2) = grid.forward_real_pair(v[0].values(), v[1].values());
    let spec: Vec<Complex64> = s1
        .iter()
        .zip(&s2)
        .enumerate()
        .map(|(idx, (a, b))| {
            let (k1, k2) = grid.kd(idx);
            let z = b * k1 - a * k2;
            Complex64::new(-z.im, z.re)
        })
        .collect();
    RealField::new(&grid, grid.inverse_real(spec))
}

/// Unique zero-mean `V` with `−ΔV = rhs`.
pub fn solve_poisson(rhs: &RealField) -> Result<RealField> {
    let m = rhs.mean();
    if m.abs() > POISSON_MEAN_TOL {
        return Err(QhdError::NonZeroMeanRhs { mean: m });
    }
    Ok(poisson_zero_mode(rhs))
}

/// `(−Δ)⁻¹` on the non-constant modes; the mean of `rhs` is discarded.
pub(crate) fn poisson_zero_mode(rhs: &RealField) -> RealField {
    let grid = rhs.grid().clone();
    let mut s = rhs.spectrum();
    inverse_laplacian_spectrum(&grid, &mut s);
    RealField::new(&grid, grid.inverse_real(s))
}

pub(crate) fn inverse_laplacian_spectrum(grid: &TorusGrid, s: &mut [Complex64]) {
    s[0] = Complex64::new(0.0, 0.0);
    for (idx, c) in s.iter_mut().enumerate().skip(1) {
        *c /= grid.k_sq(idx);
    }
}

/// Integral over `T²`, i.e. the sample mean since `|T²| = 1`.
pub fn integrate(f: &RealField) -> f64 {
    f.values.iter().sum::<f64>() / f.values.len() as f64
}

/// Integral of a raw sample slice.
pub(crate) fn mean_of(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// 2/3-rule truncation.
pub fn dealias<F: Field>(f: &F) -> F {
    let grid = f.grid().clone();
    let mut s = f.spectrum();
    grid.dealias_spectrum(&mut s);
    F::from_spectrum(&grid, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> TorusGrid {
        TorusGrid::square(n).unwrap()
    }

    #[test]
    fn rejects_small_or_odd_grids() {
        assert!(TorusGrid::new(6, 8).is_err());
        assert!(TorusGrid::new(9, 8).is_err());
        assert!(TorusGrid::new(8, 10).is_ok());
    }

    #[test]
    fn gradient_of_single_mode() {
        let g = grid(32);
        let f = RealField::from_fn(&g, |x, _| (2.0 * PI * x).cos());
        let [d1, d2] = gradient(&f);
        for i in 0..g.len() {
            let (x, _) = g.point(i);
            assert!((d1.values()[i] + 2.0 * PI * (2.0 * PI * x).sin()).abs() < 1e-12);
            assert!(d2.values()[i].abs() < 1e-12);
        }
        let c = RealField::constant(&g, 2.5);
        let [c1, c2] = gradient(&c);
        assert_eq!(c1.max_abs(), 0.0);
        assert_eq!(c2.max_abs(), 0.0);
    }

    #[test]
    fn gradient_of_product_mode() {
        let g = TorusGrid::new(16, 32).unwrap();
        let f = RealField::from_fn(&g, |x, y| (2.0 * PI * x).sin() * (4.0 * PI * y).cos());
        let [d1, d2] = gradient(&f);
        for i in 0..g.len() {
            let (x, y) = g.point(i);
            let e1 = 2.0 * PI * (2.0 * PI * x).cos() * (4.0 * PI * y).cos();
            let e2 = -4.0 * PI * (2.0 * PI * x).sin() * (4.0 * PI * y).sin();
            assert!((d1.values()[i] - e1).abs() < 1e-12);
            assert!((d2.values()[i] - e2).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_and_bilaplacian_eigenfunctions() {
        let g = grid(16);
        let f = RealField::from_fn(&g, |x, _| (2.0 * PI * x).cos());
        let l = laplacian(&f);
        let b = bilaplacian(&f);
        for i in 0..g.len() {
            let fi = f.values()[i];
            assert!((l.values()[i] + 4.0 * PI * PI * fi).abs() < 1e-10);
            assert!((b.values()[i] - 16.0 * PI.powi(4) * fi).abs() < 1e-8);
        }
        assert_eq!(laplacian(&RealField::constant(&g, 1.0)).max_abs(), 0.0);
    }

    #[test]
    fn poisson_examples() {
        let g = grid(16);
        let zero = solve_poisson(&RealField::zeros(&g)).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
        let rhs = RealField::from_fn(&g, |x, _| (2.0 * PI * x).cos());
        let v = solve_poisson(&rhs).unwrap();
        for i in 0..g.len() {
            assert!((v.values()[i] - rhs.values()[i] / (4.0 * PI * PI)).abs() < 1e-14);
        }
        let bad = RealField::constant(&g, 1e-6);
        assert!(matches!(solve_poisson(&bad), Err(QhdError::NonZeroMeanRhs { .. })));
    }

    #[test]
    fn integrate_examples() {
        let g = grid(16);
        assert_eq!(integrate(&RealField::constant(&g, 3.0)), 3.0);
        assert!(integrate(&RealField::from_fn(&g, |x, _| (2.0 * PI * x).cos())).abs() < 1e-15);
        let c2 = RealField::from_fn(&g, |x, _| (2.0 * PI * x).cos().powi(2));
        assert!((integrate(&c2) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dealias_examples() {
        let g = grid(16);
        let high = RealField::from_fn(&g, |x, _| (2.0 * PI * 7.0 * x).cos());
        let r = dealias(&high).max_abs();
        assert!(r < 1e-14, "{r:e}");
        let low = RealField::from_fn(&g, |x, y| (2.0 * PI * 5.0 * x).cos() + (2.0 * PI * 3.0 * y).sin());
        let d = dealias(&low);
        for (a, b) in d.values().iter().zip(low.values()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn pair_transforms_match_single() {
        let g = TorusGrid::new(8, 12).unwrap();
        let a = RealField::from_fn(&g, |x, y| (x * 3.1).sin() + y * y);
        let b = RealField::from_fn(&g, |x, y| (x + 2.0 * y).cos());
        let (sa, sb) = g.forward_real_pair(a.values(), b.values());
        let (ea, eb) = (a.spectrum(), b.spectrum());
        for i in 0..g.len() {
            assert!((sa[i] - ea[i]).norm() < 1e-14);
            assert!((sb[i] - eb[i]).norm() < 1e-14);
        }
        let (ra, rb) = g.inverse_real_pair(&sa, &sb);
        for i in 0..g.len() {
            assert!((ra[i] - a.values()[i]).abs() < 1e-13);
            assert!((rb[i] - b.values()[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn curl_of_gradient_vanishes() {
        let g = grid(32);
        let phi = RealField::from_fn(&g, |x, y| (2.0 * PI * x).sin() * (4.0 * PI * y).sin());
        let v = gradient(&phi);
        assert!(curl(&v).max_abs() < 1e-11);
        let d = divergence(&v);
        let l = laplacian(&phi);
        for (a, b) in d.values().iter().zip(l.values()) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
