//! Periodic grid, transform-based differentiation, Fourier-multiplier
//! Sobolev norms, and dealiasing — the substrate every other module uses.
//!
//! Conventions (fixed so that independent implementations agree bit-for-bit):
//! - grid points are `x_j = -L/2 + j*dx`, `j = 0..n-1`;
//! - spectral coefficients are amplitude-normalized, `c_m = X_m / n` with
//!   `X` the unnormalized forward DFT, stored in transform ordering
//!   `m = 0, 1, ..., n/2, -n/2+1, ..., -1`;
//! - odd-order derivatives zero the Nyquist mode (a real grid carries no
//!   sign information for it);
//! - `sobolev_norm(f, s) = sqrt( sum_m (1 + k_m^2)^s |c_m|^2 * L )`, which at
//!   `s = 0` reproduces the discrete L2 norm `sqrt(dx * sum_j f_j^2)`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// A uniform periodic sampling of `[-L/2, L/2)`.
///
/// Cheap to clone; the transform plans and wavenumber table are shared.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridInner>,
}

struct GridInner {
    n: usize,
    length: f64,
    spacing: f64,
    wavenumbers: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Build a periodic grid with `n_points` samples over a box of size `length`.
///
/// `n_points` must be a power of two, at least 16; `length` must be positive.
pub fn make_grid(n_points: usize, length: f64) -> Result<Grid> {
    if !n_points.is_power_of_two() || n_points < 16 {
        return Err(Error::InvalidArgument(format!(
            "n_points must be a power of two >= 16, got {n_points}"
        )));
    }
    if !(length.is_finite() && length > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "length must be a positive finite real, got {length}"
        )));
    }
    let n = n_points;
    let base = 2.0 * std::f64::consts::PI / length;
    let wavenumbers = (0..n).map(|j| base * signed_mode(j, n) as f64).collect();
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    Ok(Grid {
        inner: Arc::new(GridInner {
            n,
            length,
            spacing: length / n as f64,
            wavenumbers,
            forward,
            inverse,
        }),
    })
}

/// Signed mode index for transform slot `j`: `0, 1, ..., n/2, -n/2+1, ..., -1`.
fn signed_mode(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

impl Grid {
    pub fn n_points(&self) -> usize {
        self.inner.n
    }

    pub fn length(&self) -> f64 {
        self.inner.length
    }

    pub fn spacing(&self) -> f64 {
        self.inner.spacing
    }

    /// Wavenumbers `k_m = 2*pi*m/L` in transform ordering.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.inner.wavenumbers
    }

    /// Signed integer mode for transform slot `j`.
    pub fn mode(&self, j: usize) -> i64 {
        signed_mode(j, self.inner.n)
    }

    /// j-th sample point, `x_j = -L/2 + j*dx`.
    pub fn point(&self, j: usize) -> f64 {
        -0.5 * self.inner.length + j as f64 * self.inner.spacing
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.inner.n).map(|j| self.point(j)).collect()
    }

    fn fft_forward(&self, buf: &mut [Complex64]) {
        let mut scratch =
            vec![Complex64::default(); self.inner.forward.get_inplace_scratch_len()];
        self.inner.forward.process_with_scratch(buf, &mut scratch);
    }

    fn fft_inverse(&self, buf: &mut [Complex64]) {
        let mut scratch =
            vec![Complex64::default(); self.inner.inverse.get_inplace_scratch_len()];
        self.inner.inverse.process_with_scratch(buf, &mut scratch);
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.inner.n == other.inner.n && self.inner.length == other.inner.length
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n_points", &self.inner.n)
            .field("length", &self.inner.length)
            .finish()
    }
}

/// A real-valued function sampled on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    samples: Vec<f64>,
}

impl Field {
    /// Wrap samples, checking length and finiteness.
    pub fn from_samples(grid: &Grid, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != grid.n_points() {
            return Err(Error::InvalidArgument(format!(
                "expected {} samples, got {}",
                grid.n_points(),
                samples.len()
            )));
        }
        let field = Field {
            grid: grid.clone(),
            samples,
        };
        field.check_finite(0.0)?;
        Ok(field)
    }

    /// Sample a function of `x` on the grid.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Self {
        let samples = (0..grid.n_points()).map(|j| f(grid.point(j))).collect();
        Field {
            grid: grid.clone(),
            samples,
        }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Field {
            grid: grid.clone(),
            samples: vec![0.0; grid.n_points()],
        }
    }

    pub(crate) fn from_raw(grid: &Grid, samples: Vec<f64>) -> Self {
        debug_assert_eq!(samples.len(), grid.n_points());
        Field {
            grid: grid.clone(),
            samples,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Non-finite samples are reported as solver divergence.
    pub fn check_finite(&self, at_time: f64) -> Result<()> {
        if self.samples.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::SolverDivergence {
                last_valid_time: at_time,
                reason: "non-finite field sample".into(),
            })
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_raw(&self.grid, self.samples.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination with another field on the same grid.
    ///
    /// Panics on grid mismatch; mixing grids is a programming error.
    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Field::from_raw(&self.grid, samples)
    }

    pub fn scaled(&self, factor: f64) -> Field {
        self.map(|v| factor * v)
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a - b)
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, factor: f64, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + factor * b)
    }

    /// Forward transform to amplitude-normalized coefficients.
    pub fn spectrum(&self) -> Spectrum {
        let n = self.grid.n_points();
        let mut buf: Vec<Complex64> = self
            .samples
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        self.grid.fft_forward(&mut buf);
        let scale = 1.0 / n as f64;
        for c in &mut buf {
            *c *= scale;
        }
        Spectrum {
            grid: self.grid.clone(),
            coeffs: buf,
        }
    }

    /// Discrete L2 inner product `dx * sum_j f_j g_j`.
    pub fn inner(&self, other: &Field) -> f64 {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        self.grid.spacing()
            * self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(&a, &b)| a * b)
                .sum::<f64>()
    }

    /// Periodic-trapezoid quadrature `dx * sum_j f_j`.
    pub fn integral(&self) -> f64 {
        self.grid.spacing() * self.samples.iter().sum::<f64>()
    }
}

/// Amplitude-normalized spectral coefficients of a [`Field`].
#[derive(Clone, Debug)]
pub struct Spectrum {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub(crate) fn from_coeffs(grid: &Grid, coeffs: Vec<Complex64>) -> Self {
        debug_assert_eq!(coeffs.len(), grid.n_points());
        Spectrum {
            grid: grid.clone(),
            coeffs,
        }
    }

    /// Inverse transform back to physical samples (real part).
    pub fn field(&self) -> Field {
        let mut buf = self.coeffs.clone();
        self.grid.fft_inverse(&mut buf);
        Field::from_raw(&self.grid, buf.into_iter().map(|c| c.re).collect())
    }

    /// Fraction of spectral mass (L2) carried by modes above the 2/3 cut-off.
    pub fn tail_fraction(&self) -> f64 {
        let n = self.grid.n_points();
        let mut tail = 0.0;
        let mut total = 0.0;
        for (j, c) in self.coeffs.iter().enumerate() {
            let power = c.norm_sqr();
            total += power;
            if 3 * signed_mode(j, n).unsigned_abs() as usize > n {
                tail += power;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            (tail / total).sqrt()
        }
    }
}

/// A Sobolev regularity index `s >= 0`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct SobolevIndex(f64);

impl SobolevIndex {
    pub fn new(s: f64) -> Result<Self> {
        if s.is_finite() && s >= 0.0 {
            Ok(SobolevIndex(s))
        } else {
            Err(Error::InvalidArgument(format!(
                "Sobolev index must be finite and >= 0, got {s}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Maximum derivative order accepted by [`spectral_derivative`].
pub const MAX_DERIVATIVE_ORDER: usize = 11;

/// Differentiate by multiplying coefficients with `(i k)^order`.
///
/// Odd orders zero the Nyquist mode. Exact for band-limited data.
pub fn spectral_derivative(f: &Field, order: usize) -> Result<Field> {
    if order > MAX_DERIVATIVE_ORDER {
        return Err(Error::InvalidArgument(format!(
            "derivative order {order} exceeds maximum {MAX_DERIVATIVE_ORDER}"
        )));
    }
    let mut spec = f.spectrum();
    derivative_in_place(&mut spec, order);
    Ok(spec.field())
}

/// Same as [`spectral_derivative`] but operating on coefficients directly.
pub(crate) fn derivative_in_place(spec: &mut Spectrum, order: usize) {
    if order == 0 {
        return;
    }
    let n = spec.grid.n_points();
    let ks: Vec<f64> = spec.grid.wavenumbers().to_vec();
    // (i k)^order = i^order * k^order, with i^order one of {1, i, -1, -i}.
    let rotation = match order % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    };
    for (j, c) in spec.coeffs.iter_mut().enumerate() {
        if order % 2 == 1 && j == n / 2 {
            *c = Complex64::new(0.0, 0.0);
            continue;
        }
        *c *= rotation * ks[j].powi(order as i32);
    }
}

/// `H^s` norm via the Fourier multiplier `(1 + k^2)^{s/2}`.
///
/// `sobolev_norm(f, 0)` equals the discrete L2 norm `sqrt(dx * sum f_j^2)`.
pub fn sobolev_norm(f: &Field, s: SobolevIndex) -> f64 {
    let spec = f.spectrum();
    let length = f.grid().length();
    let sum: f64 = spec
        .coeffs
        .iter()
        .zip(f.grid().wavenumbers())
        .map(|(c, &k)| (1.0 + k * k).powf(s.value()) * c.norm_sqr())
        .sum();
    (sum * length).sqrt()
}

/// Discrete L2 norm (same as `sobolev_norm` at `s = 0`, without the FFT).
pub fn l2_norm(f: &Field) -> f64 {
    (f.grid().spacing() * f.samples().iter().map(|v| v * v).sum::<f64>()).sqrt()
}

/// Standard 2/3-rule low-pass: zero all modes with `|m| > n/3`.
pub fn dealias(f: &Field) -> Field {
    let mut spec = f.spectrum();
    dealias_in_place(&mut spec);
    spec.field()
}

pub(crate) fn dealias_in_place(spec: &mut Spectrum) {
    let n = spec.grid.n_points();
    for (j, c) in spec.coeffs.iter_mut().enumerate() {
        if 3 * signed_mode(j, n).unsigned_abs() as usize > n {
            *c = Complex64::new(0.0, 0.0);
        }
    }
}

/// Apply a per-wavenumber multiplier in spectral space.
///
/// The symbol must satisfy the conjugate symmetry `symbol[-m] = conj(symbol[m])`
/// (in particular it must be real at `m = 0` and at the Nyquist slot), so that
/// real fields map to real fields.
pub fn apply_multiplier(f: &Field, symbol: &[Complex64]) -> Result<Field> {
    let n = f.grid().n_points();
    if symbol.len() != n {
        return Err(Error::InvalidArgument(format!(
            "symbol has {} entries, grid has {n}",
            symbol.len()
        )));
    }
    for j in 0..n {
        let pair = (n - j) % n;
        let diff = (symbol[pair] - symbol[j].conj()).norm();
        let scale = 1.0 + symbol[j].norm();
        if diff > 1e-12 * scale {
            return Err(Error::InvalidArgument(format!(
                "symbol breaks conjugate symmetry at slot {j} (mismatch {diff:.3e})"
            )));
        }
    }
    let mut spec = f.spectrum();
    for (c, s) in spec.coeffs.iter_mut().zip(symbol) {
        *c *= s;
    }
    Ok(spec.field())
}

/// The multiplier `(1 + k^2)^{s/2}` on a grid; `s` may be negative here so the
/// smoothing inverse is available too.
pub fn lambda_symbol(grid: &Grid, s: f64) -> Vec<Complex64> {
    grid.wavenumbers()
        .iter()
        .map(|&k| Complex64::new((1.0 + k * k).powf(s / 2.0), 0.0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn grid_basic_examples() {
        let g = make_grid(16, 2.0 * PI).unwrap();
        assert_close(g.spacing(), 2.0 * PI / 16.0, 1e-15);
        assert_close(g.spacing() * g.n_points() as f64, g.length(), 1e-15);

        let g = make_grid(256, 40.0 * PI).unwrap();
        assert_close(g.wavenumbers()[1], 1.0 / 20.0, 1e-15);

        assert!(make_grid(17, 2.0 * PI).is_err());
        assert!(make_grid(8, 2.0 * PI).is_err());
        assert!(make_grid(64, -1.0).is_err());
        assert!(make_grid(64, 0.0).is_err());
    }

    #[test]
    fn wavenumbers_antisymmetric_except_nyquist() {
        let g = make_grid(64, 5.0).unwrap();
        let n = g.n_points();
        let ks = g.wavenumbers();
        for j in 1..n {
            if j == n / 2 {
                continue;
            }
            assert_close(ks[j], -ks[(n - j) % n], 1e-15);
        }
        assert_close(ks[0], 0.0, 0.0);
        assert!(ks[n / 2] > 0.0);
    }

    #[test]
    fn derivative_of_sine_is_exact() {
        let g = make_grid(64, 2.0 * PI).unwrap();
        let f = Field::from_fn(&g, f64::sin);
        let d1 = spectral_derivative(&f, 1).unwrap();
        let d3 = spectral_derivative(&f, 3).unwrap();
        for j in 0..g.n_points() {
            let x = g.point(j);
            assert_close(d1.samples()[j], x.cos(), 5e-12);
            assert_close(d3.samples()[j], -x.cos(), 5e-12);
        }
    }

    #[test]
    fn derivative_matches_centered_differences_on_gaussian() {
        let g = make_grid(512, 40.0).unwrap();
        let f = Field::from_fn(&g, |x| (-x * x).exp());
        let d2 = spectral_derivative(&f, 2).unwrap();
        // Second-order centered finite differences as the independent check.
        let n = g.n_points();
        let dx = g.spacing();
        let mut max_err: f64 = 0.0;
        for j in 0..n {
            let fm = f.samples()[(j + n - 1) % n];
            let f0 = f.samples()[j];
            let fp = f.samples()[(j + 1) % n];
            let fd = (fp - 2.0 * f0 + fm) / (dx * dx);
            max_err = max_err.max((fd - d2.samples()[j]).abs());
        }
        // FD truncation error is O(dx^2 * |f''''|); |f''''| <= 12 for exp(-x^2).
        assert!(max_err < 4.0 * dx * dx, "max_err = {max_err}");
    }

    #[test]
    fn derivative_order_cap() {
        let g = make_grid(16, 1.0).unwrap();
        let f = Field::zeros(&g);
        assert!(spectral_derivative(&f, 11).is_ok());
        assert!(spectral_derivative(&f, 12).is_err());
    }

    #[test]
    fn sobolev_norm_of_sine() {
        let g = make_grid(128, 2.0 * PI).unwrap();
        let f = Field::from_fn(&g, f64::sin);
        let s0 = SobolevIndex::new(0.0).unwrap();
        let s1 = SobolevIndex::new(1.0).unwrap();
        assert_close(sobolev_norm(&f, s0), PI.sqrt(), 1e-12);
        assert_close(sobolev_norm(&f, s1), (2.0 * PI).sqrt(), 1e-12);

        // Independent quadrature of f^2 + f_x^2 for the H^1 value.
        let fx = spectral_derivative(&f, 1).unwrap();
        let quad = (f.inner(&f) + fx.inner(&fx)).sqrt();
        assert_close(sobolev_norm(&f, s1), quad, 1e-12);

        let zero = Field::zeros(&g);
        assert_close(sobolev_norm(&zero, s1), 0.0, 0.0);
    }

    #[test]
    fn sobolev_index_rejects_negative() {
        assert!(SobolevIndex::new(-0.5).is_err());
        assert!(SobolevIndex::new(f64::NAN).is_err());
    }

    #[test]
    fn dealias_keeps_low_modes_and_kills_nyquist() {
        let g = make_grid(64, 2.0 * PI).unwrap();
        let low = Field::from_fn(&g, |x| (16.0 * x).sin()); // mode n/4 = 16
        let kept = dealias(&low);
        for j in 0..g.n_points() {
            assert_close(kept.samples()[j], low.samples()[j], 1e-12);
        }
        let nyq = Field::from_fn(&g, |x| (32.0 * x).cos()); // mode n/2
        let killed = dealias(&nyq);
        assert!(killed.max_abs() < 1e-12);
    }

    #[test]
    fn dealias_matches_analytic_truncation_of_product() {
        // sin(m1 x) * sin(m2 x) = (cos((m1-m2)x) - cos((m1+m2)x)) / 2;
        // with m1 + m2 above the cut-off only the difference term survives.
        let g = make_grid(64, 2.0 * PI).unwrap();
        let (m1, m2) = (13.0, 11.0); // m1 + m2 = 24 > 64/3
        let product = Field::from_fn(&g, |x| (m1 * x).sin() * (m2 * x).sin());
        let truncated = dealias(&product);
        let expected = Field::from_fn(&g, |x| 0.5 * ((m1 - m2) * x).cos());
        for j in 0..g.n_points() {
            assert_close(truncated.samples()[j], expected.samples()[j], 1e-12);
        }
    }

    #[test]
    fn multiplier_identity_and_shift() {
        let g = make_grid(128, 2.0 * PI).unwrap();
        let f = Field::from_fn(&g, |x| (-4.0 * x * x).exp() + 0.3 * x.sin());

        let ones = vec![Complex64::new(1.0, 0.0); g.n_points()];
        let same = apply_multiplier(&f, &ones).unwrap();
        for j in 0..g.n_points() {
            assert_close(same.samples()[j], f.samples()[j], 1e-13);
        }

        // exp(i k c t) translates by -c t (periodically).
        let shift = 0.7;
        let n = g.n_points();
        let symbol: Vec<Complex64> = (0..n)
            .map(|j| {
                if j == n / 2 {
                    // keep the symbol conjugate-symmetric at Nyquist
                    Complex64::new((g.wavenumbers()[j] * shift).cos(), 0.0)
                } else {
                    Complex64::new(0.0, g.wavenumbers()[j] * shift).exp()
                }
            })
            .collect();
        let shifted = apply_multiplier(&f, &symbol).unwrap();
        let resampled = Field::from_fn(&g, |x| {
            let y = x + shift; // f(x + c t) = translate by -c t with c t = -shift
            (-4.0 * wrap(y, g.length()).powi(2)).exp() + 0.3 * y.sin()
        });
        for j in 0..n {
            assert_close(shifted.samples()[j], resampled.samples()[j], 1e-9);
        }
    }

    fn wrap(x: f64, length: f64) -> f64 {
        let mut y = x;
        while y >= length / 2.0 {
            y -= length;
        }
        while y < -length / 2.0 {
            y += length;
        }
        y
    }

    #[test]
    fn lambda_roundtrip_is_identity() {
        let g = make_grid(128, 10.0).unwrap();
        let f = Field::from_fn(&g, |x| (-x * x).exp());
        let s = 2.3;
        let up = apply_multiplier(&f, &lambda_symbol(&g, s)).unwrap();
        let back = apply_multiplier(&up, &lambda_symbol(&g, -s)).unwrap();
        for j in 0..g.n_points() {
            assert_close(back.samples()[j], f.samples()[j], 1e-12);
        }
    }

    #[test]
    fn multiplier_rejects_asymmetric_symbol() {
        let g = make_grid(16, 1.0).unwrap();
        let f = Field::zeros(&g);
        let mut symbol = vec![Complex64::new(1.0, 0.0); 16];
        symbol[1] = Complex64::new(0.0, 1.0); // partner at slot 15 stays 1
        assert!(apply_multiplier(&f, &symbol).is_err());
    }

    #[test]
    fn lambda_isometry_matches_norm() {
        let g = make_grid(128, 2.0 * PI).unwrap();
        let f = Field::from_fn(&g, |x| x.sin() + 0.2 * (3.0 * x).cos());
        let s = 1.7;
        let lifted = apply_multiplier(&f, &lambda_symbol(&g, s)).unwrap();
        let lhs = sobolev_norm(&f, SobolevIndex::new(s).unwrap());
        let rhs = sobolev_norm(&lifted, SobolevIndex::new(0.0).unwrap());
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1.0));
    }

    /// Random band-limited fields from a handful of low modes.
    fn band_limited() -> impl Strategy<Value = (Field, Grid)> {
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..6).prop_map(|amps| {
            let g = make_grid(64, 2.0 * PI).unwrap();
            let f = Field::from_fn(&g, |x| {
                amps.iter()
                    .enumerate()
                    .map(|(m, &(a, b))| {
                        let m = (m + 1) as f64;
                        a * (m * x).sin() + b * (m * x).cos()
                    })
                    .sum()
            });
            (f, g)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn parseval_holds((f, _g) in band_limited()) {
            let spectral = sobolev_norm(&f, SobolevIndex::new(0.0).unwrap());
            let physical = l2_norm(&f);
            prop_assert!((spectral - physical).abs() <= 1e-12 * physical.max(1.0));
        }

        #[test]
        fn derivatives_compose((f, _g) in band_limited()) {
            let d1 = spectral_derivative(&f, 1).unwrap();
            let d12 = spectral_derivative(&d1, 2).unwrap();
            let d3 = spectral_derivative(&f, 3).unwrap();
            let scale = d3.max_abs().max(1.0);
            for j in 0..f.grid().n_points() {
                prop_assert!((d12.samples()[j] - d3.samples()[j]).abs() <= 1e-12 * scale);
            }
        }

        #[test]
        fn dealias_is_a_projection((f, _g) in band_limited()) {
            // Exact idempotence holds at coefficient level.
            let mut spec = f.spectrum();
            dealias_in_place(&mut spec);
            let once: Vec<_> = spec.coeffs().to_vec();
            dealias_in_place(&mut spec);
            prop_assert_eq!(&once, spec.coeffs());

            // Through the physical round trip only FFT roundoff remains.
            let first = dealias(&f);
            let second = dealias(&first);
            let scale = first.max_abs().max(1.0);
            for j in 0..f.grid().n_points() {
                prop_assert!((first.samples()[j] - second.samples()[j]).abs() <= 1e-13 * scale);
            }
        }
    }
}
