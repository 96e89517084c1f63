//! Method of characteristics for the limit conservation law
//! `v0_t = a(v0) v0_x`: exact (to root-finding tolerance) evaluation of the
//! solution and its spatial derivatives, plus the gradient-catastrophe time.
//!
//! Along characteristics `x = xi - t a(phi(xi))` the solution is constant,
//! `v0(x, t) = phi(xi)`, and differentiation of the implicit relation gives
//!
//! ```text
//! v0_x   = phi' / D                 D(xi) = 1 - t a'(phi) phi'
//! v0_xx  = phi''/D^2 - phi' D'/D^3
//! v0_xxx = phi'''/D^3 - 3 phi'' D'/D^4 - phi' D''/D^4 + 3 phi' D'^2/D^5
//! ```
//!
//! with `D', D''` the xi-derivatives of `D`. The first time some `D` hits
//! zero is the catastrophe `t_c = 1 / max_xi^+ [ a'(phi(xi)) phi'(xi) ]`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::flux::FluxModel;
use crate::spectral::{spectral_derivative, Field, Grid};

/// Initial datum with analytic derivatives up to third order.
///
/// Implementations must be defined on all of `R` (the foot-point search can
/// leave the box); periodic or rapidly decaying data keep the periodic
/// truncation honest.
pub trait Profile: Send + Sync {
    fn value(&self, x: f64) -> f64;
    fn deriv(&self, x: f64) -> f64;
    fn deriv2(&self, x: f64) -> f64;
    fn deriv3(&self, x: f64) -> f64;

    /// Sample onto a grid.
    fn sample(&self, grid: &Grid) -> Field {
        Field::from_fn(grid, |x| self.value(x))
    }
}

/// `amp * exp(-((x - center)/width)^2)`.
#[derive(Clone, Debug)]
pub struct Gaussian {
    pub amp: f64,
    pub width: f64,
    pub center: f64,
}

impl Profile for Gaussian {
    fn value(&self, x: f64) -> f64 {
        let y = (x - self.center) / self.width;
        self.amp * (-y * y).exp()
    }

    fn deriv(&self, x: f64) -> f64 {
        let y = (x - self.center) / self.width;
        -2.0 * y / self.width * self.value(x)
    }

    fn deriv2(&self, x: f64) -> f64 {
        let y = (x - self.center) / self.width;
        (4.0 * y * y - 2.0) / (self.width * self.width) * self.value(x)
    }

    fn deriv3(&self, x: f64) -> f64 {
        let y = (x - self.center) / self.width;
        (12.0 * y - 8.0 * y * y * y) / (self.width * self.width * self.width) * self.value(x)
    }
}

/// `-amp * sin(x)`; 2*pi-periodic.
#[derive(Clone, Debug)]
pub struct NegSine {
    pub amp: f64,
}

impl Profile for NegSine {
    fn value(&self, x: f64) -> f64 {
        -self.amp * x.sin()
    }

    fn deriv(&self, x: f64) -> f64 {
        -self.amp * x.cos()
    }

    fn deriv2(&self, x: f64) -> f64 {
        self.amp * x.sin()
    }

    fn deriv3(&self, x: f64) -> f64 {
        self.amp * x.cos()
    }
}

/// The travelling-wave profile `12 eps1 kappa^2 sech^2(kappa x)` that the
/// third-order-dispersion flow with `a(u) = u` translates rigidly.
#[derive(Clone, Debug)]
pub struct Soliton {
    pub kappa: f64,
    pub eps1: f64,
}

impl Soliton {
    pub fn amplitude(&self) -> f64 {
        12.0 * self.eps1 * self.kappa * self.kappa
    }

    /// Leftward speed `4 eps1 kappa^2`: the profile at time `t` is centered
    /// at `x = -speed * t`.
    pub fn speed(&self) -> f64 {
        4.0 * self.eps1 * self.kappa * self.kappa
    }
}

impl Profile for Soliton {
    fn value(&self, x: f64) -> f64 {
        let sech = 1.0 / (self.kappa * x).cosh();
        self.amplitude() * sech * sech
    }

    fn deriv(&self, x: f64) -> f64 {
        let k = self.kappa;
        let sech = 1.0 / (k * x).cosh();
        let tanh = (k * x).tanh();
        -2.0 * k * self.amplitude() * sech * sech * tanh
    }

    fn deriv2(&self, x: f64) -> f64 {
        let k = self.kappa;
        let sech2 = (1.0 / (k * x).cosh()).powi(2);
        let tanh2 = (k * x).tanh().powi(2);
        self.amplitude() * 2.0 * k * k * sech2 * (2.0 * tanh2 - sech2)
    }

    fn deriv3(&self, x: f64) -> f64 {
        let k = self.kappa;
        let sech2 = (1.0 / (k * x).cosh()).powi(2);
        let tanh = (k * x).tanh();
        self.amplitude() * 4.0 * k * k * k * sech2 * tanh * (4.0 * sech2 - 2.0 * tanh * tanh)
    }
}

/// `amp * tanh(steepness * (x - center))`: a monotone step.
#[derive(Clone, Debug)]
pub struct TanhStep {
    pub amp: f64,
    pub steepness: f64,
    pub center: f64,
}

impl Profile for TanhStep {
    fn value(&self, x: f64) -> f64 {
        self.amp * (self.steepness * (x - self.center)).tanh()
    }

    fn deriv(&self, x: f64) -> f64 {
        let k = self.steepness;
        let sech2 = (1.0 / (k * (x - self.center)).cosh()).powi(2);
        self.amp * k * sech2
    }

    fn deriv2(&self, x: f64) -> f64 {
        let k = self.steepness;
        let y = k * (x - self.center);
        let sech2 = (1.0 / y.cosh()).powi(2);
        -2.0 * self.amp * k * k * sech2 * y.tanh()
    }

    fn deriv3(&self, x: f64) -> f64 {
        let k = self.steepness;
        let y = k * (x - self.center);
        let sech2 = (1.0 / y.cosh()).powi(2);
        let tanh2 = y.tanh().powi(2);
        self.amp * k * k * k * sech2 * (4.0 * tanh2 - 2.0 * sech2)
    }
}

/// Constant datum.
#[derive(Clone, Debug)]
pub struct Constant(pub f64);

impl Profile for Constant {
    fn value(&self, _x: f64) -> f64 {
        self.0
    }
    fn deriv(&self, _x: f64) -> f64 {
        0.0
    }
    fn deriv2(&self, _x: f64) -> f64 {
        0.0
    }
    fn deriv3(&self, _x: f64) -> f64 {
        0.0
    }
}

/// A sampled field promoted to a profile by trigonometric interpolation;
/// derivatives come from spectral differentiation of the samples.
pub struct SampledProfile {
    grid: Grid,
    // amplitude coefficients of the field and its first three derivatives
    spectra: [Vec<num_complex::Complex64>; 4],
}

impl SampledProfile {
    pub fn new(field: &Field) -> Result<Self> {
        let grid = field.grid().clone();
        let base = field.spectrum().coeffs().to_vec();
        let d1 = spectral_derivative(field, 1)?.spectrum().coeffs().to_vec();
        let d2 = spectral_derivative(field, 2)?.spectrum().coeffs().to_vec();
        let d3 = spectral_derivative(field, 3)?.spectrum().coeffs().to_vec();
        Ok(SampledProfile {
            grid,
            spectra: [base, d1, d2, d3],
        })
    }

    /// Evaluate the trigonometric interpolant of derivative `order` at `x`.
    fn interp(&self, order: usize, x: f64) -> f64 {
        let ks = self.grid.wavenumbers();
        // Coefficients are amplitudes over the basis e^{i k (x + L/2)}.
        let y = x + 0.5 * self.grid.length();
        let coeffs = &self.spectra[order];
        // Real part of sum_m c_m e^{i k_m y}; the Nyquist coefficient of a
        // real field is itself real, so no special casing is needed.
        let mut sum = 0.0;
        for (c, &k) in coeffs.iter().zip(ks) {
            let (sin, cos) = (k * y).sin_cos();
            sum += c.re * cos - c.im * sin;
        }
        sum
    }
}

impl Profile for SampledProfile {
    fn value(&self, x: f64) -> f64 {
        self.interp(0, x)
    }
    fn deriv(&self, x: f64) -> f64 {
        self.interp(1, x)
    }
    fn deriv2(&self, x: f64) -> f64 {
        self.interp(2, x)
    }
    fn deriv3(&self, x: f64) -> f64 {
        self.interp(3, x)
    }
}

/// The first breaking time of the conservation law, together with the
/// foot-point that breaks first.
#[derive(Clone, Copy, Debug)]
pub struct CriticalTime {
    /// `1 / max_xi^+ [a'(phi) phi']`, or `+inf` when that sup is <= 0.
    pub t_c: f64,
    /// Foot-point achieving the maximum; `None` when `t_c` is infinite.
    pub arg_xi: Option<f64>,
}

impl CriticalTime {
    pub fn is_finite(&self) -> bool {
        self.t_c.is_finite()
    }
}

/// Locate `t_c = 1 / max_xi [a'(phi(xi)) phi'(xi)]` (over the positive part)
/// by dense sampling on the grid's box followed by golden-section refinement.
///
/// Returns `t_c = +inf` (not an error) when the expression is nowhere
/// positive.
pub fn critical_time(phi: &dyn Profile, model: &FluxModel, grid: &Grid) -> CriticalTime {
    let rate = |xi: f64| model.a_deriv(phi.value(xi), 1) * phi.deriv(xi);
    let length = grid.length();
    let samples = (4 * grid.n_points()).max(4096);
    let step = length / samples as f64;
    let mut best_xi = -0.5 * length;
    let mut best = f64::NEG_INFINITY;
    for j in 0..samples {
        let xi = -0.5 * length + j as f64 * step;
        let v = rate(xi);
        if v > best {
            best = v;
            best_xi = xi;
        }
    }
    if best.is_nan() || best <= 0.0 {
        return CriticalTime {
            t_c: f64::INFINITY,
            arg_xi: None,
        };
    }
    // Golden-section refinement of the bracketing interval.
    let golden = 0.5 * (3.0 - 5.0f64.sqrt());
    let (mut lo, mut hi) = (best_xi - step, best_xi + step);
    let mut x1 = lo + golden * (hi - lo);
    let mut x2 = hi - golden * (hi - lo);
    let mut f1 = rate(x1);
    let mut f2 = rate(x2);
    while hi - lo > 1e-13 * length {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = lo + golden * (hi - lo);
            f1 = rate(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = hi - golden * (hi - lo);
            f2 = rate(x2);
        }
    }
    let xi = 0.5 * (lo + hi);
    let peak = rate(xi).max(best);
    CriticalTime {
        t_c: 1.0 / peak,
        arg_xi: Some(xi),
    }
}

/// The conservation-law solution at one time, with the foot-point map and
/// analytically propagated spatial derivatives.
#[derive(Clone, Debug)]
pub struct HopfSolution {
    pub t: f64,
    /// Foot-points `xi(x)` solving `x = xi - t a(phi(xi))`.
    pub xi_map: Field,
    pub v0: Field,
    pub v0_x: Field,
    pub v0_xx: Field,
    pub v0_xxx: Field,
}

impl HopfSolution {
    /// Largest back-substitution residual `|x - xi + t a(phi(xi))|`.
    pub fn residual_max(&self, phi: &dyn Profile, model: &FluxModel) -> f64 {
        let grid = self.xi_map.grid();
        let mut worst = 0.0f64;
        for (j, &xi) in self.xi_map.samples().iter().enumerate() {
            let r = (grid.point(j) - xi + self.t * model.a(phi.value(xi))).abs();
            worst = worst.max(r);
        }
        worst
    }
}

const NEWTON_TOL: f64 = 1e-13;
const NEWTON_MAX_ITER: usize = 50;

/// Solve the conservation law at time `t` on `grid` by per-point Newton
/// iteration on the characteristic relation.
///
/// Requires `0 <= t < t_c`; a non-positive characteristic Jacobian anywhere
/// reports a past-breaking error.
pub fn solve_hopf(
    phi: &dyn Profile,
    model: &FluxModel,
    t: f64,
    grid: &Grid,
) -> Result<HopfSolution> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "time must be finite and >= 0, got {t}"
        )));
    }
    let n = grid.n_points();

    // Global bound on |a(phi)| for the root bracket: phi's range is attained
    // on the box for the decaying/periodic data this module works with.
    let mut phi_min = f64::INFINITY;
    let mut phi_max = f64::NEG_INFINITY;
    let probes = (4 * n).max(4096);
    for j in 0..probes {
        let v = phi.value(-0.5 * grid.length() + grid.length() * j as f64 / probes as f64);
        phi_min = phi_min.min(v);
        phi_max = phi_max.max(v);
    }
    let mut speed_bound = 0.0f64;
    for j in 0..=256 {
        let u = phi_min + (phi_max - phi_min) * j as f64 / 256.0;
        speed_bound = speed_bound.max(model.a(u).abs());
    }
    let radius = t * speed_bound + 1.0;

    let mut xi_map = vec![0.0; n];
    let mut v0 = vec![0.0; n];
    let mut v0_x = vec![0.0; n];
    let mut v0_xx = vec![0.0; n];
    let mut v0_xxx = vec![0.0; n];

    for j in 0..n {
        let x = grid.point(j);
        let residual = |xi: f64| xi - t * model.a(phi.value(xi)) - x;
        let jacobian = |xi: f64| 1.0 - t * model.a_deriv(phi.value(xi), 1) * phi.deriv(xi);

        let (mut lo, mut hi) = (x - radius, x + radius);
        let mut xi = x;
        let mut converged = false;
        let mut g = residual(xi);
        for _ in 0..NEWTON_MAX_ITER {
            if g.abs() <= NEWTON_TOL {
                converged = true;
                break;
            }
            let d = jacobian(xi);
            if d <= 0.0 {
                return Err(Error::PastBreaking { t });
            }
            if g > 0.0 {
                hi = xi;
            } else {
                lo = xi;
            }
            let newton = xi - g / d;
            xi = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            g = residual(xi);
        }
        if !converged && g.abs() > NEWTON_TOL {
            return Err(Error::NewtonNonconvergence {
                x,
                residual: g.abs(),
            });
        }

        let u = phi.value(xi);
        let p1 = phi.deriv(xi);
        let p2 = phi.deriv2(xi);
        let p3 = phi.deriv3(xi);
        let a1 = model.a_deriv(u, 1);
        let a2 = model.a_deriv(u, 2);
        let a3 = model.a_deriv(u, 3);

        let d = 1.0 - t * a1 * p1;
        if d <= 0.0 {
            return Err(Error::PastBreaking { t });
        }
        // xi-derivatives of D(xi) = 1 - t a'(phi) phi'
        let d1 = -t * (a2 * p1 * p1 + a1 * p2);
        let d2 = -t * (a3 * p1.powi(3) + 3.0 * a2 * p1 * p2 + a1 * p3);

        xi_map[j] = xi;
        v0[j] = u;
        v0_x[j] = p1 / d;
        v0_xx[j] = p2 / (d * d) - p1 * d1 / d.powi(3);
        v0_xxx[j] = p3 / d.powi(3) - 3.0 * p2 * d1 / d.powi(4) - p1 * d2 / d.powi(4)
            + 3.0 * p1 * d1 * d1 / d.powi(5);
    }

    Ok(HopfSolution {
        t,
        xi_map: Field::from_raw(grid, xi_map),
        v0: Field::from_raw(grid, v0),
        v0_x: Field::from_raw(grid, v0_x),
        v0_xx: Field::from_raw(grid, v0_xx),
        v0_xxx: Field::from_raw(grid, v0_xxx),
    })
}

/// `1 + t a'(v0) v0_x` pointwise — the reciprocal of the characteristic
/// Jacobian, strictly positive before breaking.
pub fn denominator_field(sol: &HopfSolution, model: &FluxModel) -> Field {
    sol.v0
        .zip_map(&sol.v0_x, |u, ux| 1.0 + sol.t * model.a_deriv(u, 1) * ux)
}

/// A reusable characteristics pipeline: initial datum, flux model, and grid
/// bundled so the solution can be queried at arbitrary pre-breaking times.
#[derive(Clone)]
pub struct HopfFlow {
    phi: Arc<dyn Profile>,
    model: FluxModel,
    grid: Grid,
    critical: CriticalTime,
}

impl HopfFlow {
    pub fn new(phi: Arc<dyn Profile>, model: FluxModel, grid: Grid) -> Self {
        let critical = critical_time(phi.as_ref(), &model, &grid);
        HopfFlow {
            phi,
            model,
            grid,
            critical,
        }
    }

    pub fn critical_time(&self) -> CriticalTime {
        self.critical
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn model(&self) -> &FluxModel {
        &self.model
    }

    pub fn profile(&self) -> &dyn Profile {
        self.phi.as_ref()
    }

    /// Solve at time `t`; rejects `t >= t_c` up front.
    pub fn at(&self, t: f64) -> Result<HopfSolution> {
        if t >= self.critical.t_c {
            return Err(Error::PastBreaking { t });
        }
        solve_hopf(self.phi.as_ref(), &self.model, t, &self.grid)
    }

    /// Initial datum sampled on the grid.
    pub fn initial_field(&self) -> Field {
        self.phi.sample(&self.grid)
    }
}

/// A [`HopfFlow`] with a small time-keyed cache, so that integrators whose
/// stages revisit the same times (RK4 hits `t`, `t + h/2`, `t + h`, and the
/// next step reuses `t + h`) share one characteristics solve per time.
pub struct HopfCache {
    flow: HopfFlow,
    cache: std::sync::Mutex<Vec<(f64, Arc<HopfSolution>)>>,
}

const HOPF_CACHE_SLOTS: usize = 8;

impl HopfCache {
    pub fn new(flow: HopfFlow) -> Self {
        HopfCache {
            flow,
            cache: std::sync::Mutex::new(Vec::with_capacity(HOPF_CACHE_SLOTS)),
        }
    }

    pub fn flow(&self) -> &HopfFlow {
        &self.flow
    }

    pub fn at(&self, t: f64) -> Result<Arc<HopfSolution>> {
        {
            let cache = self.cache.lock().unwrap();
            if let Some((_, sol)) = cache.iter().find(|(ts, _)| *ts == t) {
                return Ok(sol.clone());
            }
        }
        let sol = Arc::new(self.flow.at(t)?);
        let mut cache = self.cache.lock().unwrap();
        if cache.len() == HOPF_CACHE_SLOTS {
            cache.remove(0);
        }
        cache.push((t, sol.clone()));
        Ok(sol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{l2_norm, make_grid};
    use std::f64::consts::PI;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn critical_time_neg_sine_is_one() {
        let grid = make_grid(256, 2.0 * PI).unwrap();
        let tc = critical_time(&NegSine { amp: 1.0 }, &FluxModel::kdv(), &grid);
        assert_close(tc.t_c, 1.0, 1e-9);
        // max of -cos is at xi = +-pi
        assert_close(tc.arg_xi.unwrap().abs(), PI, 1e-4);
    }

    #[test]
    fn critical_time_infinite_cases() {
        let grid = make_grid(256, 20.0).unwrap();
        let kdv = FluxModel::kdv();
        // a' = 1, phi' < 0 everywhere: the rate is nowhere positive.
        let decreasing = TanhStep {
            amp: -1.0,
            steepness: 0.5,
            center: 0.0,
        };
        let tc = critical_time(&decreasing, &kdv, &grid);
        assert!(tc.t_c.is_infinite());
        assert!(tc.arg_xi.is_none());

        let tc = critical_time(&Constant(3.0), &kdv, &grid);
        assert!(tc.t_c.is_infinite());

        // Increasing data with a' = 1 does break.
        let increasing = TanhStep {
            amp: 1.0,
            steepness: 0.5,
            center: 0.0,
        };
        let tc = critical_time(&increasing, &kdv, &grid);
        assert_close(tc.t_c, 2.0, 1e-9); // 1 / (amp * steepness)
    }

    #[test]
    fn solve_at_zero_returns_the_datum() {
        let grid = make_grid(128, 2.0 * PI).unwrap();
        let phi = NegSine { amp: 1.0 };
        let sol = solve_hopf(&phi, &FluxModel::kdv(), 0.0, &grid).unwrap();
        for j in 0..grid.n_points() {
            let x = grid.point(j);
            assert_close(sol.v0.samples()[j], phi.value(x), 1e-13);
            assert_close(sol.v0_x.samples()[j], phi.deriv(x), 1e-13);
            assert_close(sol.xi_map.samples()[j], x, 1e-13);
        }
    }

    #[test]
    fn implicit_relation_residual_is_tiny() {
        let grid = make_grid(512, 2.0 * PI).unwrap();
        let phi = NegSine { amp: 1.0 };
        let model = FluxModel::kdv();
        let sol = solve_hopf(&phi, &model, 0.5, &grid).unwrap();
        assert!(sol.residual_max(&phi, &model) <= 1e-12);
        // v0 = -sin(x + t v0) pointwise.
        for j in 0..grid.n_points() {
            let x = grid.point(j);
            let v = sol.v0.samples()[j];
            assert!((v + (x + 0.5 * v).sin()).abs() <= 1e-12);
        }
    }

    #[test]
    fn pde_residual_shrinks_quadratically_in_dt() {
        let grid = make_grid(256, 30.0).unwrap();
        let phi = Gaussian {
            amp: 1.0,
            width: 1.5,
            center: 0.0,
        };
        let model = FluxModel::kdv();
        let t = 0.45;
        let residual = |delta: f64| -> f64 {
            let plus = solve_hopf(&phi, &model, t + delta, &grid).unwrap();
            let minus = solve_hopf(&phi, &model, t - delta, &grid).unwrap();
            let here = solve_hopf(&phi, &model, t, &grid).unwrap();
            let dt_term = plus.v0.sub(&minus.v0).scaled(1.0 / (2.0 * delta));
            let advection = here.v0.zip_map(&here.v0_x, |u, ux| model.a(u) * ux);
            l2_norm(&dt_term.sub(&advection))
        };
        let coarse = residual(1e-3);
        let fine = residual(5e-4);
        let ratio = coarse / fine;
        assert!(
            (3.0..5.0).contains(&ratio),
            "expected O(dt^2): coarse={coarse:.3e} fine={fine:.3e} ratio={ratio}"
        );
    }

    #[test]
    fn rejects_times_past_breaking() {
        let grid = make_grid(128, 2.0 * PI).unwrap();
        let phi = NegSine { amp: 1.0 };
        let err = solve_hopf(&phi, &FluxModel::kdv(), 1.2, &grid).unwrap_err();
        assert!(matches!(err, Error::PastBreaking { .. }));
    }

    #[test]
    fn denominator_identity_and_monotone_approach() {
        let grid = make_grid(256, 2.0 * PI).unwrap();
        let phi = NegSine { amp: 1.0 };
        let model = FluxModel::kdv();

        let sol0 = solve_hopf(&phi, &model, 0.0, &grid).unwrap();
        let d0 = denominator_field(&sol0, &model);
        assert!(d0.samples().iter().all(|&v| (v - 1.0).abs() < 1e-13));

        // denominator * (1 - t a'(phi(xi)) phi'(xi)) = 1
        let t = 0.6;
        let sol = solve_hopf(&phi, &model, t, &grid).unwrap();
        let denom = denominator_field(&sol, &model);
        for j in 0..grid.n_points() {
            let xi = sol.xi_map.samples()[j];
            let jac = 1.0 - t * model.a_deriv(phi.value(xi), 1) * phi.deriv(xi);
            assert_close(denom.samples()[j] * jac, 1.0, 1e-12);
        }

        // min denominator decreases monotonically toward breaking
        let mut last = f64::INFINITY;
        for frac in [0.2, 0.4, 0.6, 0.8, 0.9] {
            let sol = solve_hopf(&phi, &model, frac, &grid).unwrap();
            let denom = denominator_field(&sol, &model);
            let min = denom.samples().iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min > 0.0 && min < last, "min {min} at t = {frac}");
            last = min;
        }
    }

    #[test]
    fn values_are_a_rearrangement_of_the_datum() {
        let grid = make_grid(512, 2.0 * PI).unwrap();
        let phi = NegSine { amp: 1.0 };
        let sol = solve_hopf(&phi, &FluxModel::kdv(), 0.7, &grid).unwrap();
        let max = sol.v0.samples().iter().cloned().fold(f64::MIN, f64::max);
        let min = sol.v0.samples().iter().cloned().fold(f64::MAX, f64::min);
        assert!((1.0 - 1e-2..=1.0 + 1e-10).contains(&max));
        assert!((-1.0 - 1e-10..=-1.0 + 1e-2).contains(&min));
    }

    #[test]
    fn chain_rule_second_derivative_matches_spectral_route() {
        let grid = make_grid(8192, 30.0).unwrap();
        let phi = Gaussian {
            amp: 1.0,
            width: 1.5,
            center: 0.0,
        };
        let model = FluxModel::kdv();
        let flow = HopfFlow::new(Arc::new(phi), model, grid.clone());
        let t_c = flow.critical_time().t_c;
        for frac in [0.3, 0.6, 0.9] {
            let sol = flow.at(frac * t_c).unwrap();
            let spectral = spectral_derivative(&sol.v0, 2).unwrap();
            let diff = l2_norm(&spectral.sub(&sol.v0_xx));
            let scale = l2_norm(&sol.v0_xx);
            assert!(
                diff <= 1e-8 * scale,
                "t = {frac} t_c: relative mismatch {}",
                diff / scale
            );
        }
    }

    #[test]
    fn sampled_profile_reproduces_analytic_data() {
        let grid = make_grid(256, 30.0).unwrap();
        let analytic = Gaussian {
            amp: 0.8,
            width: 2.0,
            center: 1.0,
        };
        let sampled = SampledProfile::new(&analytic.sample(&grid)).unwrap();
        for &x in &[-3.0, -0.37, 0.0, 1.91, 5.5] {
            assert_close(sampled.value(x), analytic.value(x), 1e-10);
            assert_close(sampled.deriv(x), analytic.deriv(x), 1e-9);
            assert_close(sampled.deriv2(x), analytic.deriv2(x), 1e-8);
        }
    }

    #[test]
    fn flow_caches_critical_time_and_guards() {
        let grid = make_grid(128, 2.0 * PI).unwrap();
        let flow = HopfFlow::new(
            Arc::new(NegSine { amp: 1.0 }),
            FluxModel::kdv(),
            grid,
        );
        assert_close(flow.critical_time().t_c, 1.0, 1e-9);
        assert!(flow.at(0.99).is_ok());
        assert!(matches!(flow.at(1.0), Err(Error::PastBreaking { .. })));
    }
}
