//! Epsilon sweeps: evolve the dispersive equation along a shrinking list of
//! dispersion strengths, compare against the expansion partial sums in the
//! matching Sobolev norms, and fit empirical convergence orders.
//!
//! Two bookkeepings are supported, selected by `n_dispersion`:
//!
//! - `n = 1`: the sweep values are the third-derivative coefficient itself
//!   (`u_t = a u_x + eps u_xxx`), expansion `u = sum eps^k v^k`;
//! - `n = 2`: the sweep values are a path parameter `q` with
//!   `eps_1 = alpha q`, `eps_2 = beta q^2`, expansion `u = sum q^k v^k`.
//!   Fitted orders are reported against the raw sweep parameter; the
//!   `bookkeeping` diagnostic records which substitution was active.
//!
//! Reports are deterministic: identical plans produce byte-identical JSON
//! (timings are deliberately excluded).

use std::sync::Arc;

use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flux::{DispersionParams, FluxModel, PerturbationData};
use crate::hopf::{
    Constant, Gaussian, HopfCache, HopfFlow, NegSine, Profile, Soliton, TanhStep,
};
use crate::solver::{evolve, Scheme, SolverConfig, Trajectory};
use crate::spectral::{l2_norm, make_grid, sobolev_norm, Field, Grid};
use crate::transport::{kdv_expansion, v1_closed_form, ExpansionCoefficients};

/// Named initial-datum descriptors, mirroring the config file's `[phi]` table.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhiSpec {
    Gaussian {
        amp: f64,
        width: f64,
        #[serde(default)]
        center: f64,
    },
    NegSine {
        amp: f64,
    },
    Soliton {
        kappa: f64,
        eps1: f64,
    },
    Tanh {
        amp: f64,
        steepness: f64,
        #[serde(default)]
        center: f64,
    },
    Constant {
        value: f64,
    },
}

impl PhiSpec {
    pub fn build(&self) -> Arc<dyn Profile> {
        match *self {
            PhiSpec::Gaussian { amp, width, center } => Arc::new(Gaussian { amp, width, center }),
            PhiSpec::NegSine { amp } => Arc::new(NegSine { amp }),
            PhiSpec::Soliton { kappa, eps1 } => Arc::new(Soliton { kappa, eps1 }),
            PhiSpec::Tanh {
                amp,
                steepness,
                center,
            } => Arc::new(TanhStep {
                amp,
                steepness,
                center,
            }),
            PhiSpec::Constant { value } => Arc::new(Constant(value)),
        }
    }
}

/// Path direction for two-parameter dispersion: `eps_1 = alpha q`,
/// `eps_2 = beta q^2` along the sweep parameter `q`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Direction {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_points: usize,
    pub length: f64,
}

/// Solver knobs inside a plan; `dt`/`transport_dt` default to CFL-derived
/// values when omitted.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub dt: Option<f64>,
    pub transport_dt: Option<f64>,
    pub scheme: Scheme,
    pub dealiasing: bool,
    pub cfl_safety: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            dt: None,
            transport_dt: None,
            scheme: Scheme::IfRk4,
            dealiasing: true,
            cfl_safety: 0.5,
        }
    }
}

fn default_eps_values() -> Vec<f64> {
    (0..6).map(|j| 1e-2 * 0.5f64.powi(j)).collect()
}

fn default_n_dispersion() -> u8 {
    1
}

fn default_sobolev_s() -> f64 {
    3.0
}

/// Everything one sweep needs; parses directly from the TOML config.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    pub model_name: String,
    /// Coefficients of `a(u)` (low order first) when `model_name = "poly"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_coeffs: Option<Vec<f64>>,
    pub phi: PhiSpec,
    #[serde(default = "default_eps_values")]
    pub eps_values: Vec<f64>,
    #[serde(default = "default_n_dispersion")]
    pub n_dispersion: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default)]
    pub expansion_order: usize,
    #[serde(default = "default_sobolev_s")]
    pub sobolev_s: f64,
    /// Absolute evaluation time; mutually exclusive with `t_eval_frac`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_eval: Option<f64>,
    /// Evaluation time as a fraction of the critical time (default 0.5).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_eval_frac: Option<f64>,
    pub grid: GridSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    /// Skip the smallest-wavelength resolution check.
    #[serde(default)]
    pub allow_underresolved: bool,
}

impl SweepPlan {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn build_model(&self) -> Result<FluxModel> {
        match self.model_name.as_str() {
            "poly" => {
                let coeffs = self.model_coeffs.as_deref().ok_or_else(|| {
                    Error::Config("model_name = \"poly\" requires model_coeffs".into())
                })?;
                FluxModel::polynomial(coeffs)
            }
            name => FluxModel::by_name(name).ok_or_else(|| {
                Error::Config(format!(
                    "unknown model \"{name}\" (built-ins: kdv, quadratic, quartic, zero; \
                     or \"poly\" with model_coeffs)"
                ))
            }),
        }
    }
}

/// A validated plan with its derived quantities.
pub struct ResolvedSweep {
    pub plan: SweepPlan,
    pub grid: Grid,
    pub model: FluxModel,
    pub cache: Arc<HopfCache>,
    pub t_c: f64,
    pub t_eval: f64,
    pub dt: f64,
    pub transport_dt: f64,
    pub warnings: Vec<String>,
}

/// Validate a plan and precompute the characteristics pipeline.
pub fn resolve_plan(plan: &SweepPlan) -> Result<ResolvedSweep> {
    let mut warnings = Vec::new();
    let grid = make_grid(plan.grid.n_points, plan.grid.length)?;
    let model = plan.build_model()?;

    if plan.eps_values.is_empty() {
        return Err(Error::InvalidArgument("eps_values must be non-empty".into()));
    }
    if plan
        .eps_values
        .iter()
        .any(|&e| !(e.is_finite() && e > 0.0))
    {
        return Err(Error::InvalidArgument(
            "eps_values must be strictly positive".into(),
        ));
    }
    if plan.eps_values.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument(
            "eps_values must be strictly descending".into(),
        ));
    }
    match plan.n_dispersion {
        1 => {
            if plan.direction.is_some() {
                warnings.push("direction is ignored for n_dispersion = 1".into());
            }
        }
        2 => {
            if plan.direction.is_none() {
                return Err(Error::InvalidArgument(
                    "n_dispersion = 2 requires a [direction] with alpha and beta".into(),
                ));
            }
        }
        n => {
            return Err(Error::InvalidArgument(format!(
                "n_dispersion must be 1 or 2, got {n}"
            )))
        }
    }
    if plan.expansion_order >= 2 && (plan.model_name != "kdv" || plan.n_dispersion != 1) {
        return Err(Error::InvalidArgument(
            "expansion_order >= 2 needs the KdV hierarchy (model kdv, n_dispersion 1); \
             general transport data is only available through order 1"
                .into(),
        ));
    }

    let phi = plan.phi.build();
    let flow = HopfFlow::new(phi, model.clone(), grid.clone());
    let t_c = flow.critical_time().t_c;
    let t_eval = match (plan.t_eval, plan.t_eval_frac) {
        (Some(_), Some(_)) => {
            return Err(Error::InvalidArgument(
                "t_eval and t_eval_frac are mutually exclusive".into(),
            ))
        }
        (Some(t), None) => t,
        (None, Some(frac)) => {
            if !t_c.is_finite() {
                return Err(Error::InvalidArgument(
                    "t_eval_frac needs a finite critical time; give t_eval explicitly".into(),
                ));
            }
            frac * t_c
        }
        (None, None) => {
            if t_c.is_finite() {
                0.5 * t_c
            } else {
                return Err(Error::InvalidArgument(
                    "no critical time to scale by; give t_eval explicitly".into(),
                ));
            }
        }
    };
    if !(t_eval.is_finite() && t_eval > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "evaluation time must be positive and finite, got {t_eval}"
        )));
    }

    // Smallest dispersive wavelength across the sweep must clear the grid:
    // ~2 pi eps1^(1/2) for third-order, ~2 pi eps2^(1/4) for fifth-order.
    let q_min = *plan.eps_values.last().expect("non-empty");
    let (e1_min, e2_min) = dispersion_components(plan, q_min);
    let mut wavelength = f64::INFINITY;
    if e1_min.abs() > 0.0 {
        wavelength = wavelength.min(2.0 * std::f64::consts::PI * e1_min.abs().sqrt());
    }
    if e2_min.abs() > 0.0 {
        wavelength = wavelength.min(2.0 * std::f64::consts::PI * e2_min.abs().powf(0.25));
    }
    if wavelength.is_finite() && wavelength < 8.0 * grid.spacing() && !plan.allow_underresolved {
        return Err(Error::InvalidArgument(format!(
            "smallest dispersive wavelength ~{wavelength:.3e} is below 8 grid spacings \
             ({:.3e}); refine the grid, raise the smallest eps, or set \
             allow_underresolved = true",
            8.0 * grid.spacing()
        )));
    }

    // Regularity bookkeeping (advisory on a discrete grid, so warn only).
    let budget = (plan.sobolev_s / 3.0 - 1.0).floor();
    if (plan.expansion_order as f64) > budget {
        warnings.push(format!(
            "expansion_order {} exceeds the regularity budget floor(s/3 - 1) = {} for s = {}",
            plan.expansion_order, budget, plan.sobolev_s
        ));
    }

    // Advective CFL from the datum's range (characteristics rearrange values,
    // so the initial max speed bounds the run).
    let datum = flow.initial_field();
    let max_speed = datum.map(|u| model.a(u)).max_abs();
    let cfl_dt = if max_speed > 0.0 {
        plan.solver.cfl_safety * grid.spacing() / max_speed
    } else {
        f64::INFINITY
    };
    let dt = plan
        .solver
        .dt
        .unwrap_or_else(|| (0.8 * cfl_dt).min(t_eval / 100.0));
    let transport_dt = plan
        .solver
        .transport_dt
        .unwrap_or_else(|| (0.8 * cfl_dt).min(t_eval / 50.0));

    let cache = Arc::new(HopfCache::new(flow));
    Ok(ResolvedSweep {
        plan: plan.clone(),
        grid,
        model,
        cache,
        t_c,
        t_eval,
        dt,
        transport_dt,
        warnings,
    })
}

impl ResolvedSweep {
    /// Sweeps compare against the dispersionless solution, which only exists
    /// before breaking; plain dispersive runs have no such restriction.
    pub fn ensure_pre_breaking(&self) -> Result<()> {
        if self.t_eval >= self.t_c {
            return Err(Error::PastBreaking { t: self.t_eval });
        }
        Ok(())
    }
}

/// Dispersion components at sweep value `q`.
fn dispersion_components(plan: &SweepPlan, q: f64) -> (f64, f64) {
    match plan.n_dispersion {
        1 => (q, 0.0),
        _ => {
            let d = plan.direction.expect("validated");
            (d.alpha * q, d.beta * q * q)
        }
    }
}

/// Least-squares slope of `log err` vs `log eps` over the 4 smallest eps
/// (or all pairs if fewer). A vanishing error short-circuits to the
/// `+infinity` sentinel (rendered as `null` in JSON).
pub fn fit_order(eps: &[f64], errs: &[f64]) -> Result<f64> {
    if eps.len() != errs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} eps values vs {} errors",
            eps.len(),
            errs.len()
        )));
    }
    let mut pairs: Vec<(f64, f64)> = eps
        .iter()
        .zip(errs)
        .filter(|(&e, &r)| e.is_finite() && e > 0.0 && r.is_finite() && r >= 0.0)
        .map(|(&e, &r)| (e, r))
        .collect();
    if pairs.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "need at least 2 positive (eps, err) pairs, got {}",
            pairs.len()
        )));
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.truncate(4);
    if pairs.iter().any(|&(_, r)| r == 0.0) {
        return Ok(f64::INFINITY);
    }
    let logs: Vec<(f64, f64)> = pairs.iter().map(|&(e, r)| (e.ln(), r.ln())).collect();
    let n = logs.len() as f64;
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in &logs {
        num += (x - mean_x) * (y - mean_y);
        den += (x - mean_x) * (x - mean_x);
    }
    if den == 0.0 {
        return Err(Error::DegenerateInput("all eps values coincide".into()));
    }
    Ok(num / den)
}

/// One sweep value's results.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    /// `|u(eps) - sum_{k<=m} eps^k v^k|` in `H^{max(s-3m, 0)}`, `m = 0..N`.
    #[serde(serialize_with = "ser_mkeys")]
    pub remainders: Vec<f64>,
    /// Same remainders measured in plain L2.
    #[serde(serialize_with = "ser_mkeys")]
    pub remainders_l2: Vec<f64>,
    /// The Sobolev index actually used at each order.
    #[serde(serialize_with = "ser_mkeys")]
    pub sobolev_indices: Vec<f64>,
    pub mass_drift: f64,
    pub momentum_drift_rel: f64,
    pub energy_drift_rel: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Diagnostics {
    pub t_c: f64,
    pub t_eval: f64,
    pub bookkeeping: String,
    pub warnings: Vec<String>,
}

/// The sweep outcome; serialize with [`ExpansionReport::to_json`] for the
/// stable-key-order report.
#[derive(Clone, Debug, Serialize)]
pub struct ExpansionReport {
    pub plan_echo: SweepPlan,
    pub rows: Vec<SweepRow>,
    /// Slope per order `m`; empty when the sweep has a single value.
    #[serde(serialize_with = "ser_mkeys")]
    pub fitted_orders: Vec<f64>,
    pub diagnostics: Diagnostics,
}

fn ser_mkeys<S: Serializer>(values: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    let mut map = s.serialize_map(Some(values.len()))?;
    for (m, v) in values.iter().enumerate() {
        map.serialize_entry(&format!("m{m}"), v)?;
    }
    map.end()
}

impl ExpansionReport {
    /// Deterministic pretty JSON (`m`-keys in order, struct fields in
    /// declaration order; infinite fitted orders render as `null`).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// Expansion coefficients for a resolved plan: the KdV hierarchy when the
/// model is `a(u) = u` (any order), the closed-form first correction
/// otherwise (order <= 1).
pub fn expansion_for(resolved: &ResolvedSweep) -> Result<ExpansionCoefficients> {
    resolved.ensure_pre_breaking()?;
    let plan = &resolved.plan;
    let order = plan.expansion_order;
    let transport_cfg = SolverConfig {
        dt: resolved.transport_dt,
        t_end: resolved.t_eval,
        scheme: plan.solver.scheme,
        dealiasing: plan.solver.dealiasing,
        cfl_safety: plan.solver.cfl_safety,
        snapshot_stride: None,
    };
    let pert = match plan.n_dispersion {
        1 => PerturbationData::from_dispersion(1.0, 0.0, &resolved.model),
        _ => {
            let d = plan.direction.expect("validated");
            PerturbationData::from_dispersion(d.alpha, d.beta, &resolved.model)
        }
    };
    if plan.model_name == "kdv" && plan.n_dispersion == 1 {
        return kdv_expansion(
            &resolved.cache,
            order,
            plan.sobolev_s,
            &transport_cfg,
            resolved.t_eval,
        );
    }
    let mut fields = vec![resolved.cache.at(resolved.t_eval)?.v0.clone()];
    if order >= 1 {
        let sol = resolved.cache.at(resolved.t_eval)?;
        fields.push(v1_closed_form(&sol, &resolved.model, &pert)?);
    }
    Ok(ExpansionCoefficients {
        order,
        time: resolved.t_eval,
        sobolev_budget: plan.sobolev_s,
        fields,
    })
}

fn evolve_one(resolved: &ResolvedSweep, q: f64) -> Result<Trajectory> {
    let plan = &resolved.plan;
    let (e1, e2) = dispersion_components(plan, q);
    let eps = match plan.n_dispersion {
        1 => DispersionParams::single(e1)?,
        _ => DispersionParams::pair(e1, e2)?,
    };
    let cfg = SolverConfig {
        dt: resolved.dt,
        t_end: resolved.t_eval,
        scheme: plan.solver.scheme,
        dealiasing: plan.solver.dealiasing,
        cfl_safety: plan.solver.cfl_safety,
        snapshot_stride: None,
    };
    let datum = resolved.cache.flow().initial_field();
    evolve(&datum, &resolved.model, &eps, &cfg).map_err(|e| attach_eps(e, q))
}

/// Tag numerical failures with the sweep value that produced them.
fn attach_eps(err: Error, q: f64) -> Error {
    match err {
        Error::SolverDivergence {
            last_valid_time,
            reason,
        } => Error::SolverDivergence {
            last_valid_time,
            reason: format!("{reason} (at sweep value eps = {q:.6e})"),
        },
        Error::CflViolation { t, dt, limit } => Error::CflViolation { t, dt, limit },
        other => other,
    }
}

fn row_for(
    resolved: &ResolvedSweep,
    coeffs: &ExpansionCoefficients,
    q: f64,
) -> Result<SweepRow> {
    let traj = evolve_one(resolved, q)?;
    let state = traj.final_state();
    let order = coeffs.order;
    let mut remainders = Vec::with_capacity(order + 1);
    let mut remainders_l2 = Vec::with_capacity(order + 1);
    let mut indices = Vec::with_capacity(order + 1);
    // fields[m] is the raw m-th eps-derivative, so the Taylor weight is
    // q^m / m!.
    let mut partial = Field::zeros(&resolved.grid);
    let mut weight = 1.0;
    for (m, vk) in coeffs.fields.iter().enumerate() {
        if m > 0 {
            weight *= q / m as f64;
        }
        partial = partial.add_scaled(weight, vk);
        let diff = state.sub(&partial);
        let index = coeffs.remainder_index(m);
        remainders.push(sobolev_norm(&diff, index));
        remainders_l2.push(l2_norm(&diff));
        indices.push(index.value());
    }
    let drift = traj.drift();
    let first = &traj.diagnostics[0];
    Ok(SweepRow {
        eps: q,
        remainders,
        remainders_l2,
        sobolev_indices: indices,
        mass_drift: drift.mass,
        momentum_drift_rel: drift.momentum.abs() / first.momentum.abs().max(1e-300),
        energy_drift_rel: drift.energy.abs() / first.energy.abs().max(1e-300),
    })
}

/// Run the full sweep: coefficients once, one dispersive solve per sweep
/// value (concurrently; aggregation is ordered by value, so the output is
/// independent of scheduling), then remainders and fitted orders.
pub fn run_sweep(plan: &SweepPlan) -> Result<ExpansionReport> {
    let resolved = resolve_plan(plan)?;
    resolved.ensure_pre_breaking()?;
    let coeffs = expansion_for(&resolved)?;

    let mut slots: Vec<Option<Result<SweepRow>>> =
        (0..plan.eps_values.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (slot, &q) in slots.iter_mut().zip(&plan.eps_values) {
            let resolved = &resolved;
            let coeffs = &coeffs;
            scope.spawn(move || {
                *slot = Some(row_for(resolved, coeffs, q));
            });
        }
    });
    let mut rows = Vec::with_capacity(slots.len());
    for slot in slots {
        rows.push(slot.expect("thread filled its slot")?);
    }

    let fitted_orders = if rows.len() >= 2 {
        let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
        (0..=coeffs.order)
            .map(|m| {
                let errs: Vec<f64> = rows.iter().map(|r| r.remainders[m]).collect();
                fit_order(&eps, &errs)
            })
            .collect::<Result<Vec<f64>>>()?
    } else {
        Vec::new()
    };

    let bookkeeping = match plan.n_dispersion {
        1 => "eps (third-derivative coefficient; expansion in eps)".to_string(),
        _ => {
            let d = plan.direction.expect("validated");
            format!(
                "path parameter q: eps1 = {} q, eps2 = {} q^2 (expansion in q)",
                d.alpha, d.beta
            )
        }
    };
    Ok(ExpansionReport {
        plan_echo: resolved.plan.clone(),
        rows,
        fitted_orders,
        diagnostics: Diagnostics {
            t_c: resolved.t_c,
            t_eval: resolved.t_eval,
            bookkeeping,
            warnings: resolved.warnings.clone(),
        },
    })
}

/// The two-parameter continuity check: evolve along the shrinking path
/// `(eps_1, eps_2) = (alpha q, beta q^2)` and report `|u - v0|` per value.
/// This is [`run_sweep`] pinned to `n_dispersion = 2` and order 0.
pub fn run_continuity_check(plan: &SweepPlan) -> Result<ExpansionReport> {
    if plan.n_dispersion != 2 {
        return Err(Error::InvalidArgument(
            "continuity check needs n_dispersion = 2 (use run_sweep otherwise)".into(),
        ));
    }
    let mut plan = plan.clone();
    plan.expansion_order = 0;
    run_sweep(&plan)
}
