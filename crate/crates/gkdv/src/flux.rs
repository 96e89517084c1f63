//! The nonlinearity `a(u)`, its Hamiltonian potential `h` (`h'' = a`), the
//! perturbation data `(c, p, s)` of the normal-form Hamiltonian, the
//! coefficient map tying dispersion strengths to that data, and the exact
//! conserved quantities of the generalized KdV flow.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::spectral::{spectral_derivative, Field};

/// Shared scalar function of one real variable.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

fn constant(v: f64) -> ScalarFn {
    Arc::new(move |_| v)
}

/// The nonlinearity `a(u)` with derivatives up to order four, the potential
/// `h` with `h'' = a`, and the primitive `A` with `A'(u) = u a(u)` (used by
/// conservation checks).
///
/// Derivatives are supplied analytically; the built-in constructors cover the
/// models the test-bed needs, [`FluxModel::polynomial`] covers config-defined
/// models, and [`FluxModel::from_fns`] accepts arbitrary closures (with `h`
/// and `A` filled in by quadrature, normalized so `h(0) = h'(0) = 0`).
#[derive(Clone)]
pub struct FluxModel {
    name: String,
    a: [ScalarFn; 5],
    h: ScalarFn,
    primitive: ScalarFn,
}

impl fmt::Debug for FluxModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FluxModel").field("name", &self.name).finish()
    }
}

impl FluxModel {
    /// KdV: `a(u) = u`, `h(u) = u^3/6`, `A(u) = u^3/3`.
    pub fn kdv() -> Self {
        FluxModel {
            name: "kdv".into(),
            a: [
                Arc::new(|u| u),
                constant(1.0),
                constant(0.0),
                constant(0.0),
                constant(0.0),
            ],
            h: Arc::new(|u| u * u * u / 6.0),
            primitive: Arc::new(|u| u * u * u / 3.0),
        }
    }

    /// `a(u) = u^2/2`, `h(u) = u^4/24`, `A(u) = u^4/8`.
    pub fn quadratic() -> Self {
        FluxModel {
            name: "quadratic".into(),
            a: [
                Arc::new(|u| 0.5 * u * u),
                Arc::new(|u| u),
                constant(1.0),
                constant(0.0),
                constant(0.0),
            ],
            h: Arc::new(|u| u.powi(4) / 24.0),
            primitive: Arc::new(|u| u.powi(4) / 8.0),
        }
    }

    /// `a(u) = u^4`, `h(u) = u^6/30`, `A(u) = u^6/6`.
    pub fn quartic() -> Self {
        FluxModel {
            name: "quartic".into(),
            a: [
                Arc::new(|u| u.powi(4)),
                Arc::new(|u| 4.0 * u.powi(3)),
                Arc::new(|u| 12.0 * u * u),
                Arc::new(|u| 24.0 * u),
                constant(24.0),
            ],
            h: Arc::new(|u| u.powi(6) / 30.0),
            primitive: Arc::new(|u| u.powi(6) / 6.0),
        }
    }

    /// `a(u) = 0` — pure linear dispersion, useful for unitarity checks.
    pub fn zero() -> Self {
        FluxModel {
            name: "zero".into(),
            a: [
                constant(0.0),
                constant(0.0),
                constant(0.0),
                constant(0.0),
                constant(0.0),
            ],
            h: constant(0.0),
            primitive: constant(0.0),
        }
    }

    /// Polynomial nonlinearity `a(u) = sum_i coeffs[i] u^i`, with `h` and `A`
    /// integrated in closed form.
    pub fn polynomial(coeffs: &[f64]) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(
                "polynomial coefficients must be finite".into(),
            ));
        }
        let c = coeffs.to_vec();
        let eval_deriv = |order: usize| -> ScalarFn {
            let c = c.clone();
            Arc::new(move |u| {
                let mut sum = 0.0;
                for (i, &ci) in c.iter().enumerate() {
                    if i < order {
                        continue;
                    }
                    let mut factor = ci;
                    for d in 0..order {
                        factor *= (i - d) as f64;
                    }
                    sum += factor * u.powi((i - order) as i32);
                }
                sum
            })
        };
        let ch = c.clone();
        let h: ScalarFn = Arc::new(move |u| {
            ch.iter()
                .enumerate()
                .map(|(i, &ci)| ci * u.powi(i as i32 + 2) / ((i + 1) as f64 * (i + 2) as f64))
                .sum()
        });
        let cp = c.clone();
        let primitive: ScalarFn = Arc::new(move |u| {
            cp.iter()
                .enumerate()
                .map(|(i, &ci)| ci * u.powi(i as i32 + 2) / (i + 2) as f64)
                .sum()
        });
        Ok(FluxModel {
            name: format!(
                "poly[{}]",
                c.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
            ),
            a: [
                eval_deriv(0),
                eval_deriv(1),
                eval_deriv(2),
                eval_deriv(3),
                eval_deriv(4),
            ],
            h,
            primitive,
        })
    }

    /// Arbitrary nonlinearity from closures for `a` and its derivatives.
    ///
    /// `h(u) = int_0^u (u - s) a(s) ds` (so `h(0) = h'(0) = 0`) and
    /// `A(u) = int_0^u s a(s) ds` are evaluated by 64-point Gauss-Legendre
    /// quadrature per call.
    pub fn from_fns(
        name: &str,
        a: ScalarFn,
        a1: ScalarFn,
        a2: ScalarFn,
        a3: ScalarFn,
        a4: ScalarFn,
    ) -> Self {
        let a_for_h = a.clone();
        let h: ScalarFn = Arc::new(move |u| gauss_integral(0.0, u, |s| (u - s) * a_for_h(s)));
        let a_for_p = a.clone();
        let primitive: ScalarFn = Arc::new(move |u| gauss_integral(0.0, u, |s| s * a_for_p(s)));
        FluxModel {
            name: name.into(),
            a: [a, a1, a2, a3, a4],
            h,
            primitive,
        }
    }

    /// Built-in registry: `"kdv"`, `"quadratic"`, `"quartic"`, `"zero"`.
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "kdv" => Some(Self::kdv()),
            "quadratic" => Some(Self::quadratic()),
            "quartic" => Some(Self::quartic()),
            "zero" => Some(Self::zero()),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn a(&self, u: f64) -> f64 {
        (self.a[0])(u)
    }

    /// k-th derivative of `a`, `k <= 4`.
    pub fn a_deriv(&self, u: f64, k: usize) -> f64 {
        assert!(k <= 4, "a is carried with derivatives up to order 4");
        (self.a[k])(u)
    }

    /// Hamiltonian potential, `h''(u) = a(u)` with `h(0) = h'(0) = 0` for the
    /// built-in models.
    pub fn h(&self, u: f64) -> f64 {
        (self.h)(u)
    }

    /// Primitive of `u a(u)`; `d/dx A(u) = u a(u) u_x` drives momentum
    /// conservation.
    pub fn flux_primitive(&self, u: f64) -> f64 {
        (self.primitive)(u)
    }
}

/// Composite 64-point Gauss-Legendre integral of `f` over `[lo, hi]`.
fn gauss_integral(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (nodes, weights) = gauss_legendre_64();
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut sum = 0.0;
    for (&x, &w) in nodes.iter().zip(weights.iter()) {
        sum += w * f(mid + half * x);
    }
    sum * half
}

/// Nodes and weights of the 64-point Gauss-Legendre rule on `[-1, 1]`,
/// computed once by Newton iteration on the Legendre polynomial.
fn gauss_legendre_64() -> (&'static [f64], &'static [f64]) {
    use std::sync::OnceLock;
    static TABLE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    let (n, w) = TABLE.get_or_init(|| {
        let n = 64usize;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            // Chebyshev-like initial guess.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre_and_deriv(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (_, dp) = legendre_and_deriv(n, x);
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (nodes, weights)
    });
    (n, w)
}

fn legendre_and_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// The dispersion strengths `(eps_1, ..., eps_n)`, `n` in `{1, 2}`,
/// multiplying the odd derivatives `d_x^{2i+1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DispersionParams {
    eps: Vec<f64>,
}

impl DispersionParams {
    pub fn new(eps: Vec<f64>) -> Result<Self> {
        if eps.is_empty() || eps.len() > 2 {
            return Err(Error::InvalidArgument(format!(
                "dispersion takes 1 or 2 parameters, got {}",
                eps.len()
            )));
        }
        if eps.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidArgument(
                "dispersion parameters must be finite".into(),
            ));
        }
        Ok(DispersionParams { eps })
    }

    /// Third-order dispersion only: `eps_1 * u_xxx`.
    pub fn single(eps1: f64) -> Result<Self> {
        Self::new(vec![eps1])
    }

    /// Third- plus fifth-order dispersion.
    pub fn pair(eps1: f64, eps2: f64) -> Result<Self> {
        Self::new(vec![eps1, eps2])
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    pub fn order(&self) -> usize {
        self.eps.len()
    }
}

/// The arbitrary functions `c(u)`, `p(u)`, `s(u)` (plus the derivatives of
/// `c` and `p` the formulas consume) that parameterize a fourth-order
/// Hamiltonian perturbation in normal form.
#[derive(Clone)]
pub struct PerturbationData {
    c: [ScalarFn; 3],
    p: [ScalarFn; 2],
    s: ScalarFn,
}

impl fmt::Debug for PerturbationData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PerturbationData {..}")
    }
}

impl PerturbationData {
    pub fn from_fns(
        c: ScalarFn,
        c1: ScalarFn,
        c2: ScalarFn,
        p: ScalarFn,
        p1: ScalarFn,
        s: ScalarFn,
    ) -> Self {
        PerturbationData {
            c: [c, c1, c2],
            p: [p, p1],
            s,
        }
    }

    /// Constant data; derivative slots are zero.
    pub fn constants(c0: f64, p0: f64, s0: f64) -> Self {
        Self::from_fns(
            constant(c0),
            constant(0.0),
            constant(0.0),
            constant(p0),
            constant(0.0),
            constant(s0),
        )
    }

    /// The KdV normalization: `c = 1`, `p = s = 0`.
    pub fn kdv() -> Self {
        Self::constants(1.0, 0.0, 0.0)
    }

    /// The data induced by dispersion strengths `(alpha, beta)` through the
    /// coefficient map (`c = alpha/a'` and friends), as functions of `u`.
    ///
    /// At points where `a'(u) = 0` the closures return non-finite values;
    /// use [`map_coefficients`] for a checked point evaluation.
    pub fn from_dispersion(alpha: f64, beta: f64, model: &FluxModel) -> Self {
        let m = model.clone();
        let c: ScalarFn = Arc::new(move |u| alpha / m.a_deriv(u, 1));
        let m = model.clone();
        let c1: ScalarFn = Arc::new(move |u| {
            let a1 = m.a_deriv(u, 1);
            -alpha * m.a_deriv(u, 2) / (a1 * a1)
        });
        let m = model.clone();
        let c2: ScalarFn = Arc::new(move |u| {
            let a1 = m.a_deriv(u, 1);
            let a2 = m.a_deriv(u, 2);
            let a3 = m.a_deriv(u, 3);
            alpha * (2.0 * a2 * a2 / a1.powi(3) - a3 / (a1 * a1))
        });
        let m = model.clone();
        let p: ScalarFn = Arc::new(move |u| {
            let a1 = m.a_deriv(u, 1);
            beta / (2.0 * a1) - 0.3 * alpha * alpha * m.a_deriv(u, 2) / a1.powi(3)
        });
        let m = model.clone();
        let p1: ScalarFn = Arc::new(move |u| {
            let a1 = m.a_deriv(u, 1);
            let a2 = m.a_deriv(u, 2);
            let a3 = m.a_deriv(u, 3);
            -beta * a2 / (2.0 * a1 * a1)
                - 0.3 * alpha * alpha * (a3 / a1.powi(3) - 3.0 * a2 * a2 / a1.powi(4))
        });
        let m = model.clone();
        let s: ScalarFn = Arc::new(move |u| {
            let a1 = m.a_deriv(u, 1);
            let a2 = m.a_deriv(u, 2);
            let a3 = m.a_deriv(u, 3);
            let a4 = m.a_deriv(u, 4);
            alpha * alpha
                * (0.4 * a2.powi(3) / a1.powi(5) - 0.35 * a2 * a3 / a1.powi(4)
                    + a4 / (24.0 * a1.powi(3)))
                - beta / 12.0 * (a2 * a2 / a1.powi(3) - a3 / (a1 * a1))
        });
        Self::from_fns(c, c1, c2, p, p1, s)
    }

    pub fn c(&self, u: f64) -> f64 {
        (self.c[0])(u)
    }

    /// k-th derivative of `c`, `k <= 2`.
    pub fn c_deriv(&self, u: f64, k: usize) -> f64 {
        assert!(k <= 2);
        (self.c[k])(u)
    }

    pub fn p(&self, u: f64) -> f64 {
        (self.p[0])(u)
    }

    pub fn p_deriv(&self, u: f64) -> f64 {
        (self.p[1])(u)
    }

    pub fn s(&self, u: f64) -> f64 {
        (self.s)(u)
    }
}

/// Coefficients `(c, p, s)` at the point `u` for dispersion strengths
/// `(alpha, beta)`:
///
/// ```text
/// c = alpha / a'
/// p = beta / (2 a') - (3 alpha^2 / 10) a'' / a'^3
/// s = alpha^2 ( (2/5) a''^3/a'^5 - (7/20) a'' a'''/a'^4 + a''''/(24 a'^3) )
///     - (beta/12) ( a''^2/a'^3 - a'''/a'^2 )
/// ```
///
/// Fails with a degenerate-flux error when `a'(u) = 0`.
pub fn map_coefficients(
    alpha: f64,
    beta: f64,
    model: &FluxModel,
    u: f64,
) -> Result<(f64, f64, f64)> {
    let a1 = model.a_deriv(u, 1);
    if a1 == 0.0 {
        return Err(Error::DegenerateFlux { u });
    }
    let a2 = model.a_deriv(u, 2);
    let a3 = model.a_deriv(u, 3);
    let a4 = model.a_deriv(u, 4);
    let c = alpha / a1;
    let p = beta / (2.0 * a1) - 0.3 * alpha * alpha * a2 / a1.powi(3);
    let s = alpha * alpha
        * (0.4 * a2.powi(3) / a1.powi(5) - 0.35 * a2 * a3 / a1.powi(4) + a4 / (24.0 * a1.powi(3)))
        - beta / 12.0 * (a2 * a2 / a1.powi(3) - a3 / (a1 * a1));
    Ok((c, p, s))
}

/// The normal-form Hamiltonian density through order `eps^4`:
///
/// ```text
/// h - (eps^2/2) c h''' u_x^2
///   + eps^4 [ (p h''' + (3/10) c^2 h'''') u_xx^2
///             - ( c c''/8 h'''' + c c'/8 h^(5) + c^2/24 h^(6)
///                 + p'/6 h'''' + p/6 h^(5) - s h''' ) u_x^4 ]
/// ```
///
/// with `h''' = a'`, `h'''' = a''`, `h^(5) = a'''`, `h^(6) = a''''`.
pub fn hamiltonian_density(
    u: f64,
    u_x: f64,
    u_xx: f64,
    eps: f64,
    model: &FluxModel,
    pert: &PerturbationData,
) -> f64 {
    let h3 = model.a_deriv(u, 1);
    let h4 = model.a_deriv(u, 2);
    let h5 = model.a_deriv(u, 3);
    let h6 = model.a_deriv(u, 4);
    let c = pert.c(u);
    let c1 = pert.c_deriv(u, 1);
    let c2 = pert.c_deriv(u, 2);
    let p = pert.p(u);
    let p1 = pert.p_deriv(u);
    let s = pert.s(u);
    let e2 = eps * eps;
    let e4 = e2 * e2;
    model.h(u) - 0.5 * e2 * c * h3 * u_x * u_x
        + e4 * ((p * h3 + 0.3 * c * c * h4) * u_xx * u_xx
            - (c * c2 / 8.0 * h4
                + c * c1 / 8.0 * h5
                + c * c / 24.0 * h6
                + p1 / 6.0 * h4
                + p / 6.0 * h5
                - s * h3)
                * u_x.powi(4))
}

/// Mass, momentum, and energy of a state — the exact invariants of the flow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Invariants {
    /// `int u dx`
    pub mass: f64,
    /// `int u^2/2 dx`
    pub momentum: f64,
    /// `int [ h(u) + sum_i (-1)^i (eps_i/2) (d_x^i u)^2 ] dx`
    pub energy: f64,
}

/// Conserved quantities of `u_t = a(u) u_x + sum_i eps_i d_x^{2i+1} u`,
/// by spectral differentiation and periodic-trapezoid quadrature.
pub fn gkdv_invariants(f: &Field, model: &FluxModel, eps: &DispersionParams) -> Invariants {
    let mass = f.integral();
    let momentum = 0.5 * f.inner(f);
    let mut energy = f.map(|u| model.h(u)).integral();
    for (i, &eps_i) in eps.eps().iter().enumerate() {
        let order = i + 1;
        let d = spectral_derivative(f, order).expect("order <= 2");
        let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
        energy += sign * 0.5 * eps_i * d.inner(&d);
    }
    Invariants {
        mass,
        momentum,
        energy,
    }
}
