//! Time integration of `u_t = a(u) u_x + sum_i eps_i d_x^{2i+1} u`.
//!
//! The stiff linear dispersion has a purely imaginary symbol, so its
//! propagator is unitary and can be applied exactly; only the advective
//! nonlinearity is integrated explicitly. Two schemes are offered:
//!
//! - `IfRk4`: classical RK4 on the integrating-factor variable
//!   `w = exp(-t L) u_hat`;
//! - `Etdrk4`: exponential time differencing with contour-averaged
//!   phi-function coefficients.
//!
//! The advective CFL bound `dt <= cfl_safety * dx / max|a(u)|` is re-checked
//! every step, and mass/momentum/energy drift is monitored at snapshots.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::flux::{gkdv_invariants, DispersionParams, FluxModel, Invariants};
use crate::spectral::{dealias_in_place, derivative_in_place, l2_norm, Field, Grid, Spectrum};

/// Relative momentum drift beyond which a run is declared divergent.
pub const MOMENTUM_DRIFT_LIMIT: f64 = 1e-3;

/// Time stepping scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    IfRk4,
    Etdrk4,
}

/// Integration parameters.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct SolverConfig {
    /// Nominal step; the final step shrinks to land on `t_end` exactly.
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    /// Apply the 2/3 rule to the nonlinear product.
    pub dealiasing: bool,
    /// Fraction of the advective CFL bound the step may use, in (0, 1].
    pub cfl_safety: f64,
    /// Keep every `snapshot_stride`-th state (first and last are always
    /// kept); `None` targets about 200 snapshots.
    pub snapshot_stride: Option<usize>,
}

impl SolverConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        SolverConfig {
            dt,
            t_end,
            scheme: Scheme::IfRk4,
            dealiasing: true,
            cfl_safety: 0.5,
            snapshot_stride: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "t_end must be > 0, got {}",
                self.t_end
            )));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            )));
        }
        Ok(())
    }
}

/// A stored run: snapshot times, states, and conserved-quantity diagnostics.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Field>,
    pub diagnostics: Vec<Invariants>,
}

impl Trajectory {
    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory is never empty")
    }

    pub fn final_state(&self) -> &Field {
        self.states.last().expect("trajectory is never empty")
    }

    /// Absolute drift of each invariant between the first and last snapshot.
    pub fn drift(&self) -> Invariants {
        let first = self.diagnostics.first().expect("trajectory is never empty");
        let last = self.diagnostics.last().expect("trajectory is never empty");
        Invariants {
            mass: last.mass - first.mass,
            momentum: last.momentum - first.momentum,
            energy: last.energy - first.energy,
        }
    }
}

/// Spectral symbol of `sum_i eps_i d_x^{2i+1}`:
/// `symbol(k) = i * sum_i eps_i (-1)^i k^{2i+1}`, purely imaginary, giving a
/// unitary propagator. The Nyquist slot is zeroed (odd-derivative convention).
pub fn linear_symbol(grid: &Grid, eps: &DispersionParams) -> Vec<Complex64> {
    let n = grid.n_points();
    grid.wavenumbers()
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            if j == n / 2 {
                return Complex64::new(0.0, 0.0);
            }
            let mut imag = 0.0;
            for (i, &eps_i) in eps.eps().iter().enumerate() {
                let sign = if (i + 1) % 2 == 0 { 1.0 } else { -1.0 };
                imag += eps_i * sign * k.powi(2 * (i as i32 + 1) + 1);
            }
            Complex64::new(0.0, imag)
        })
        .collect()
}

/// The advective term `a(u) u_x`, differentiated spectrally and optionally
/// dealiased. Non-finite output is reported as solver divergence.
pub fn nonlinear_term(f: &Field, model: &FluxModel, dealiasing: bool) -> Result<Field> {
    let mut spec = f.spectrum();
    derivative_in_place(&mut spec, 1);
    let fx = spec.field();
    let product = f.zip_map(&fx, |u, ux| model.a(u) * ux);
    let result = if dealiasing {
        let mut p = product.spectrum();
        dealias_in_place(&mut p);
        p.field()
    } else {
        product
    };
    result.check_finite(f64::NAN).map_err(|_| Error::SolverDivergence {
        last_valid_time: 0.0,
        reason: "non-finite nonlinear term".into(),
    })?;
    Ok(result)
}

/// Spectral-space advective term used inside the steppers: returns the
/// (dealiased) coefficients of `a(u) u_x` given the coefficients of `u`,
/// plus `max |a(u)|` for the CFL monitor.
struct NonlinearOp<'a> {
    grid: &'a Grid,
    model: &'a FluxModel,
    dealiasing: bool,
}

impl NonlinearOp<'_> {
    fn apply(&self, u_hat: &[Complex64]) -> (Vec<Complex64>, f64) {
        let u = Spectrum::from_coeffs(self.grid, u_hat.to_vec()).field();
        let mut dspec = Spectrum::from_coeffs(self.grid, u_hat.to_vec());
        derivative_in_place(&mut dspec, 1);
        let ux = dspec.field();
        let speeds = u.map(|u_j| self.model.a(u_j));
        let max_speed = speeds.max_abs();
        let product = speeds.zip_map(&ux, |a, ux_j| a * ux_j);
        let mut spec = product.spectrum();
        if self.dealiasing {
            dealias_in_place(&mut spec);
        }
        (spec.coeffs().to_vec(), max_speed)
    }
}

/// Uniform step times `0, dt, 2 dt, ...` closed by `t_end` itself; the mesh
/// is built from products (not accumulation) so it is strictly increasing
/// and always lands on `t_end` exactly, even when `t_end/dt` sits on a
/// rounding boundary. The final step may be shorter than `dt`.
pub(crate) fn step_times(dt: f64, t_end: f64) -> Vec<f64> {
    let mut times = vec![0.0];
    let mut k = 1usize;
    loop {
        let t = k as f64 * dt;
        if t >= t_end * (1.0 - 1e-12) {
            break;
        }
        times.push(t);
        k += 1;
    }
    times.push(t_end);
    times
}

fn cfl_limit(grid: &Grid, cfg: &SolverConfig, max_speed: f64) -> f64 {
    if max_speed == 0.0 {
        f64::INFINITY
    } else {
        cfg.cfl_safety * grid.spacing() / max_speed
    }
}

/// ETDRK4 per-step coefficients, one complex value per mode.
struct EtdCoeffs {
    e_full: Vec<Complex64>,
    e_half: Vec<Complex64>,
    q: Vec<Complex64>,
    f1: Vec<Complex64>,
    f2: Vec<Complex64>,
    f3: Vec<Complex64>,
}

/// Evaluate the phi-function coefficients by averaging over a unit circle
/// around each `z = lambda * dt`; stable for the purely imaginary symbols
/// used here (no cancellation at small |z|, no overflow at large |z|).
fn etd_coeffs(symbol: &[Complex64], dt: f64) -> EtdCoeffs {
    const M: usize = 32;
    let n = symbol.len();
    let mut out = EtdCoeffs {
        e_full: Vec::with_capacity(n),
        e_half: Vec::with_capacity(n),
        q: Vec::with_capacity(n),
        f1: Vec::with_capacity(n),
        f2: Vec::with_capacity(n),
        f3: Vec::with_capacity(n),
    };
    for &lambda in symbol {
        let z0 = lambda * dt;
        out.e_full.push(z0.exp());
        out.e_half.push((z0 * 0.5).exp());
        let mut q = Complex64::new(0.0, 0.0);
        let mut f1 = Complex64::new(0.0, 0.0);
        let mut f2 = Complex64::new(0.0, 0.0);
        let mut f3 = Complex64::new(0.0, 0.0);
        for m in 0..M {
            let theta = std::f64::consts::PI * (2.0 * m as f64 + 1.0) / M as f64;
            let z = z0 + Complex64::new(theta.cos(), theta.sin());
            let ez = z.exp();
            let z2 = z * z;
            let z3 = z2 * z;
            q += ((z * 0.5).exp() - 1.0) / z;
            f1 += (-4.0 - z + ez * (4.0 - 3.0 * z + z2)) / z3;
            f2 += (2.0 + z + ez * (-2.0 + z)) / z3;
            f3 += (-4.0 - 3.0 * z - z2 + ez * (4.0 - z)) / z3;
        }
        let scale = dt / M as f64;
        out.q.push(q * scale);
        out.f1.push(f1 * scale);
        out.f2.push(f2 * scale);
        out.f3.push(f3 * scale);
    }
    out
}

fn zip_scale_add(dst: &mut [Complex64], coeff: &[Complex64], src: &[Complex64]) {
    for ((d, &c), &s) in dst.iter_mut().zip(coeff).zip(src) {
        *d += c * s;
    }
}

/// Integrate the Cauchy problem from `phi` to `cfg.t_end`.
///
/// Errors: `CflViolation` when `dt` exceeds the runtime advective bound,
/// `SolverDivergence` on non-finite values or relative momentum drift above
/// [`MOMENTUM_DRIFT_LIMIT`] (carrying the last valid snapshot time).
pub fn evolve(
    phi: &Field,
    model: &FluxModel,
    eps: &DispersionParams,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    phi.check_finite(0.0)?;
    let grid = phi.grid().clone();
    let symbol = linear_symbol(&grid, eps);
    let op = NonlinearOp {
        grid: &grid,
        model,
        dealiasing: cfg.dealiasing,
    };

    let times = step_times(cfg.dt, cfg.t_end);
    let n_steps = times.len() - 1;
    let stride = cfg
        .snapshot_stride
        .unwrap_or_else(|| (n_steps / 200).max(1));

    let mut u_hat = phi.spectrum().coeffs().to_vec();

    let initial_inv = gkdv_invariants(phi, model, eps);
    let momentum_scale = initial_inv.momentum.abs().max(1e-12);
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![phi.clone()],
        diagnostics: vec![initial_inv],
    };
    let mut last_valid = 0.0;

    // Per-dt scheme coefficients, rebuilt once for the final partial step.
    let mut current_dt = cfg.dt;
    let mut if_half: Vec<Complex64> = symbol.iter().map(|&l| (l * (cfg.dt / 2.0)).exp()).collect();
    let mut if_full: Vec<Complex64> = symbol.iter().map(|&l| (l * cfg.dt).exp()).collect();
    let mut etd = match cfg.scheme {
        Scheme::Etdrk4 => Some(etd_coeffs(&symbol, cfg.dt)),
        Scheme::IfRk4 => None,
    };

    for (step, window) in times.windows(2).enumerate() {
        let (t, t_next) = (window[0], window[1]);
        let dt = t_next - t;
        if (dt - current_dt).abs() > 1e-15 * cfg.dt {
            current_dt = dt;
            if_half = symbol.iter().map(|&l| (l * (dt / 2.0)).exp()).collect();
            if_full = symbol.iter().map(|&l| (l * dt).exp()).collect();
            if matches!(cfg.scheme, Scheme::Etdrk4) {
                etd = Some(etd_coeffs(&symbol, dt));
            }
        }

        match cfg.scheme {
            Scheme::IfRk4 => {
                // RK4 in the rotating frame w = exp(-tL) u_hat, written out
                // in u_hat variables:
                //   a = N(u)
                //   b = N(E(u + dt/2 a)),  E = exp(L dt/2)
                //   c = N(E u + dt/2 b)
                //   d = N(E^2 u + dt E c)
                //   u' = E^2 u + dt/6 (E^2 a + 2 E (b + c) + d)
                let (na, max_speed) = op.apply(&u_hat);
                let limit = cfl_limit(&grid, cfg, max_speed);
                if dt > limit {
                    return Err(Error::CflViolation { t, dt, limit });
                }

                let mut stage: Vec<Complex64> = u_hat
                    .iter()
                    .zip(&na)
                    .zip(&if_half)
                    .map(|((&u, &a), &e)| e * (u + a * (dt / 2.0)))
                    .collect();
                let (nb, _) = op.apply(&stage);

                for ((s, &u), (&e, &b)) in stage
                    .iter_mut()
                    .zip(&u_hat)
                    .zip(if_half.iter().zip(&nb))
                {
                    *s = e * u + b * (dt / 2.0);
                }
                let (nc, _) = op.apply(&stage);

                for ((s, &u), ((&ef, &eh), &c)) in stage
                    .iter_mut()
                    .zip(&u_hat)
                    .zip(if_full.iter().zip(&if_half).zip(&nc))
                {
                    *s = ef * u + eh * c * dt;
                }
                let (nd, _) = op.apply(&stage);

                for (j, u) in u_hat.iter_mut().enumerate() {
                    let acc = if_full[j] * (*u + na[j] * (dt / 6.0))
                        + if_half[j] * (nb[j] + nc[j]) * (dt / 3.0)
                        + nd[j] * (dt / 6.0);
                    *u = acc;
                }
            }
            Scheme::Etdrk4 => {
                let k = etd.as_ref().expect("coefficients exist for ETDRK4");
                let (nu, max_speed) = op.apply(&u_hat);
                let limit = cfl_limit(&grid, cfg, max_speed);
                if dt > limit {
                    return Err(Error::CflViolation { t, dt, limit });
                }

                let mut a_stage: Vec<Complex64> =
                    u_hat.iter().zip(&k.e_half).map(|(&u, &e)| e * u).collect();
                zip_scale_add(&mut a_stage, &k.q, &nu);
                let (na, _) = op.apply(&a_stage);

                let mut b_stage: Vec<Complex64> =
                    u_hat.iter().zip(&k.e_half).map(|(&u, &e)| e * u).collect();
                zip_scale_add(&mut b_stage, &k.q, &na);
                let (nb, _) = op.apply(&b_stage);

                let mut c_stage: Vec<Complex64> =
                    a_stage.iter().zip(&k.e_half).map(|(&a, &e)| e * a).collect();
                let mixed: Vec<Complex64> =
                    nb.iter().zip(&nu).map(|(&b, &u)| b * 2.0 - u).collect();
                zip_scale_add(&mut c_stage, &k.q, &mixed);
                let (nc, _) = op.apply(&c_stage);

                for (j, u) in u_hat.iter_mut().enumerate() {
                    *u = k.e_full[j] * *u
                        + k.f1[j] * nu[j]
                        + k.f2[j] * (na[j] + nb[j]) * 2.0
                        + k.f3[j] * nc[j];
                }
            }
        }

        let last_step = (step + 1) == n_steps;
        if (step + 1) % stride == 0 || last_step {
            let state = Spectrum::from_coeffs(&grid, u_hat.clone()).field();
            state.check_finite(last_valid)?;
            let inv = gkdv_invariants(&state, model, eps);
            if (inv.momentum - initial_inv.momentum).abs() > MOMENTUM_DRIFT_LIMIT * momentum_scale
            {
                return Err(Error::SolverDivergence {
                    last_valid_time: last_valid,
                    reason: format!(
                        "relative momentum drift {:.3e} exceeds {MOMENTUM_DRIFT_LIMIT:.1e}",
                        (inv.momentum - initial_inv.momentum).abs() / momentum_scale
                    ),
                });
            }
            traj.times.push(t_next);
            traj.states.push(state);
            traj.diagnostics.push(inv);
            last_valid = t_next;
        }
    }

    Ok(traj)
}

/// A step-doubling wrapper around [`evolve`].
#[derive(Clone, Debug)]
pub struct ControlledRun {
    pub trajectory: Trajectory,
    /// L2 distance between the final states of the last two resolutions.
    pub error_estimate: f64,
    /// Number of halvings applied beyond the initial `cfg.dt`.
    pub halvings: usize,
}

/// Halve `dt` until two successive resolutions agree to `tol` in L2 at
/// `t_end`; returns the finer run. Fails with `Nonconvergence` after
/// `max_halvings`.
pub fn evolve_with_error_control(
    phi: &Field,
    model: &FluxModel,
    eps: &DispersionParams,
    cfg: &SolverConfig,
    tol: f64,
    max_halvings: usize,
) -> Result<ControlledRun> {
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be finite and >= 0, got {tol}"
        )));
    }
    let mut coarse_cfg = cfg.clone();
    let mut coarse = evolve(phi, model, eps, &coarse_cfg)?;
    let mut estimate = f64::INFINITY;
    for halvings in 0..=max_halvings {
        let mut fine_cfg = coarse_cfg.clone();
        fine_cfg.dt = coarse_cfg.dt / 2.0;
        let fine = evolve(phi, model, eps, &fine_cfg)?;
        estimate = l2_norm(&fine.final_state().sub(coarse.final_state()));
        if estimate <= tol && tol > 0.0 {
            return Ok(ControlledRun {
                trajectory: fine,
                error_estimate: estimate,
                halvings,
            });
        }
        coarse_cfg = fine_cfg;
        coarse = fine;
    }
    Err(Error::Nonconvergence {
        halvings: max_halvings,
        estimate,
        tol,
    })
}
