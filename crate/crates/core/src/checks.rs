//! Numerical verification suites behind `opkdv check`.
//!
//! Each suite returns a [`CheckOutcome`]: named metrics with their bounds and
//! a pass flag. Nothing here reads the clock, so outcomes are reproducible.

use serde::Serialize;
use thiserror::Error;

use crate::algebra::{validate_algebra, Algebra, AlgebraDescriptor, AlgebraKind, OddValue};
use crate::dynamics::{rhs_extended, DynamicsError, Integrator, IntegratorConfig, Scheme, SystemKind, SystemState};
use crate::fields::{build_initial_condition, EvenField, FieldError, IcProfile, OddField, PeriodicGrid};
use crate::symbolic::{reproduce_eq15, MonteCarlo, SymbolicError};
use crate::transforms::{
    gardner_map, inverse_gardner_series, miura, susy_variation, susy_variation_grassmann, TransformError,
};

#[derive(Debug, Error)]
pub enum CheckError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Symbolic(#[from] SymbolicError),
    #[error("{0}")]
    Setup(String),
}

/// Acceptance bound for a metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Bound {
    AtMost { max: f64 },
    Within { min: f64, max: f64 },
}

impl Bound {
    pub fn admits(&self, x: f64) -> bool {
        match *self {
            Self::AtMost { max } => x <= max,
            Self::Within { min, max } => (min..=max).contains(&x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
    pub passed: bool,
}

impl Metric {
    pub fn new(name: impl Into<String>, value: f64, bound: Bound) -> Self {
        Self { name: name.into(), value, passed: bound.admits(value), bound }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub check: String,
    pub passed: bool,
    pub metrics: Vec<Metric>,
    pub notes: Vec<String>,
}

impl CheckOutcome {
    pub fn new(check: &str, metrics: Vec<Metric>, notes: Vec<String>) -> Self {
        Self { check: check.to_string(), passed: metrics.iter().all(|m| m.passed), metrics, notes }
    }

    /// One line per metric.
    pub fn summary(&self) -> String {
        let mut s = format!("check {}: {}\n", self.check, if self.passed { "PASS" } else { "FAIL" });
        for m in &self.metrics {
            let bound = match m.bound {
                Bound::AtMost { max } => format!("<= {max:e}"),
                Bound::Within { min, max } => format!("in [{min}, {max}]"),
            };
            s.push_str(&format!(
                "  {:<4} {:<32} {:>14.6e}  {}\n",
                if m.passed { "ok" } else { "FAIL" },
                m.name,
                m.value,
                bound
            ));
        }
        for n in &self.notes {
            s.push_str(&format!("  note: {n}\n"));
        }
        s
    }
}

/// Simulation settings shared by the suites.
#[derive(Debug, Clone, PartialEq)]
pub struct RunParams {
    pub algebra: AlgebraDescriptor,
    pub lambda: f64,
    pub length: f64,
    pub points: usize,
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub ic: IcProfile,
    pub gardner_eps: f64,
}

impl Default for RunParams {
    fn default() -> Self {
        Self {
            algebra: AlgebraDescriptor::Symplectic(1),
            lambda: 1.0,
            length: 40.0,
            points: 256,
            dt: 1e-3,
            t_end: 0.5,
            scheme: Scheme::Ifrk4,
            ic: IcProfile::RandomBandlimited { max_mode: 4, amplitude: 0.3, seed: 1 },
            gardner_eps: 0.1,
        }
    }
}

impl RunParams {
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn initial_fields(&self) -> Result<(EvenField, OddField), CheckError> {
        let grid = PeriodicGrid::new(self.length, self.points)?;
        let ic = build_initial_condition(&self.ic, &grid, &Algebra::new(self.algebra))?;
        Ok((ic.even, ic.odd))
    }

    fn evolve(&self, state: &SystemState, steps: usize) -> Result<Vec<SystemState>, CheckError> {
        let cfg = IntegratorConfig::new(self.dt, steps, self.scheme);
        Ok(Integrator::new(cfg).run(state, None)?.states)
    }
}

/// Max-norm residual of `∂ₜ(u, ξ) − rhs_extended(u, ξ)` along an equally
/// spaced path, with the time derivative taken by the fourth-order centered
/// difference on interior samples.
pub fn transport_residual(path: &[(EvenField, OddField)], dt: f64, lambda: f64) -> Result<f64, CheckError> {
    if path.len() < 5 {
        return Err(CheckError::Setup("transport residual needs at least 5 samples".into()));
    }
    let mut worst = 0.0f64;
    for i in 2..path.len() - 2 {
        let (a, b, c, d) = (&path[i - 2], &path[i - 1], &path[i + 1], &path[i + 2]);
        let w = 1.0 / (12.0 * dt);
        let de = a.0.sub(&b.0.scale(8.0)).add(&c.0.scale(8.0)).sub(&d.0).scale(w);
        let dodd = a.1.sub(&b.1.scale(8.0)).add(&c.1.scale(8.0)).sub(&d.1).scale(w);
        let (re, ro) = rhs_extended(&path[i].0, &path[i].1, lambda)?;
        worst = worst.max(de.distance(&re)).max(dodd.distance(&ro));
    }
    Ok(worst)
}

pub const TRANSPORT_TOL: f64 = 1e-5;
pub const RATIO_RANGE: (f64, f64) = (3.4, 4.6);

fn ratio_bound() -> Bound {
    Bound::Within { min: RATIO_RANGE.0, max: RATIO_RANGE.1 }
}

/// Algebra axioms.
pub fn check_algebra(desc: AlgebraDescriptor) -> CheckOutcome {
    let report = validate_algebra(desc);
    let metrics = report
        .checks
        .iter()
        .map(|c| Metric::new(c.axiom.clone(), if c.passed { 0.0 } else { 1.0 }, Bound::AtMost { max: 0.0 }))
        .collect();
    let notes = report.violations().map(|c| format!("{}: {}", c.axiom, c.detail)).collect();
    CheckOutcome::new(&format!("algebra {desc}"), metrics, notes)
}

/// Evolves the modified system and measures how well the Miura image obeys
/// the extended system.
pub fn check_miura(p: &RunParams) -> Result<CheckOutcome, CheckError> {
    let (v, eta) = p.initial_fields()?;
    let s0 = SystemState::new(SystemKind::Modified, v, eta, p.lambda, 0.0)?;
    let states = p.evolve(&s0, p.steps())?;
    let path = states
        .iter()
        .map(|s| miura(&s.even, &s.odd, s.lambda))
        .collect::<Result<Vec<_>, _>>()?;
    let r = transport_residual(&path, p.dt, p.lambda)?;
    Ok(CheckOutcome::new(
        "miura",
        vec![Metric::new("miura_transport_residual", r, Bound::AtMost { max: TRANSPORT_TOL })],
        vec![format!("{} on {}, t in [0, {}]", p.algebra, p.points, p.t_end)],
    ))
}

/// Gardner transport residual at `eps`.
pub fn gardner_transport_residual(p: &RunParams, eps: f64) -> Result<(f64, f64), CheckError> {
    let (z, sigma) = p.initial_fields()?;
    let s0 = SystemState::new(SystemKind::Gardner, z, sigma, p.lambda, eps)?;
    let states = p.evolve(&s0, p.steps())?;
    let path = states
        .iter()
        .map(|s| gardner_map(&s.even, &s.odd, eps, s.lambda))
        .collect::<Result<Vec<_>, _>>()?;
    let masses: Vec<_> = states.iter().map(|s| s.even.quadrature()).collect();
    let drift = crate::invariants::relative_drift(&masses);
    Ok((transport_residual(&path, p.dt, p.lambda)?, drift))
}

/// `‖z_ε(T) − u(T)‖` for Gardner and extended evolutions from the same data.
pub fn gardner_deviation(p: &RunParams, eps: f64) -> Result<f64, CheckError> {
    let (e, o) = p.initial_fields()?;
    let g = SystemState::new(SystemKind::Gardner, e.clone(), o.clone(), p.lambda, eps)?;
    let x = SystemState::new(SystemKind::Extended, e, o, p.lambda, 0.0)?;
    let gz = p.evolve(&g, p.steps())?.pop().unwrap();
    let xu = p.evolve(&x, p.steps())?.pop().unwrap();
    Ok(gz.even.distance(&xu.even).max(gz.odd.distance(&xu.odd)))
}

/// Round-trip error of `gardner_map ∘ inverse_gardner_series` and its order
/// under ε-halving.
pub fn round_trip_slope(u: &EvenField, xi: &OddField, lambda: f64, order: usize, eps: f64) -> Result<(f64, f64, f64), CheckError> {
    let err = |e: f64| -> Result<f64, CheckError> {
        let (z, s) = inverse_gardner_series(u, xi, e, lambda, order)?;
        let (u2, x2) = gardner_map(&z, &s, e, lambda)?;
        Ok(u2.distance(u).max(x2.distance(xi)))
    };
    let (a, b) = (err(eps)?, err(eps / 2.0)?);
    Ok((a, b, (a / b).log2()))
}

/// Fields used by the round-trip measurement: smooth, order one, on a 2π box.
pub fn round_trip_fields(algebra: AlgebraDescriptor, seed: u64) -> Result<(EvenField, OddField), CheckError> {
    let grid = PeriodicGrid::new(2.0 * std::f64::consts::PI, 64)?;
    let ic = build_initial_condition(
        &IcProfile::RandomBandlimited { max_mode: 2, amplitude: 0.5, seed },
        &grid,
        &Algebra::new(algebra),
    )?;
    Ok((ic.even, ic.odd))
}

pub const ROUND_TRIP_ORDER: usize = 6;
pub const ROUND_TRIP_EPS: f64 = 0.04;

/// Gardner suite: transport residual, O(ε²) deviation from the extended
/// flow, mass conservation and the inverse-series round trip.
pub fn check_gardner(p: &RunParams) -> Result<CheckOutcome, CheckError> {
    let eps = p.gardner_eps;
    let (residual, mass_drift) = gardner_transport_residual(p, eps)?;
    let d1 = gardner_deviation(p, eps)?;
    let d2 = gardner_deviation(p, eps / 2.0)?;
    let (u, xi) = round_trip_fields(p.algebra, 7)?;
    let (_, _, slope) = round_trip_slope(&u, &xi, p.lambda, ROUND_TRIP_ORDER, ROUND_TRIP_EPS)?;
    Ok(CheckOutcome::new(
        "gardner",
        vec![
            Metric::new("gardner_transport_residual", residual, Bound::AtMost { max: TRANSPORT_TOL }),
            Metric::new("gardner_mass_drift", mass_drift, Bound::AtMost { max: 1e-8 }),
            Metric::new("eps_halving_deviation_ratio", d1 / d2, ratio_bound()),
            Metric::new("round_trip_order6_slope", slope, Bound::Within { min: 6.5, max: 7.5 }),
        ],
        vec![format!("eps = {eps}, deviations {d1:.3e} / {d2:.3e}")],
    ))
}

/// Default supersymmetry parameter: every odd coordinate `1/2`.
pub fn default_susy_param(algebra: &Algebra) -> OddValue {
    algebra.odd(vec![0.5; algebra.odd_dim()]).expect("dimension matches")
}

/// Variation used for the backend: the Grassmann form on Grassmann
/// algebras, the commutator form otherwise.
pub fn variation(u: &EvenField, xi: &OddField, lambda: f64, param: &OddValue) -> Result<(EvenField, OddField), CheckError> {
    Ok(if u.algebra().descriptor().kind() == AlgebraKind::Grassmann {
        susy_variation_grassmann(u, xi, lambda, param)?
    } else {
        susy_variation(u, xi, lambda, param)?
    })
}

/// `‖Φ_T(x + hδx) − (Φ_T(x) + h·δ(Φ_T(x)))‖` for the extended flow.
pub fn flow_commutation_error(p: &RunParams, param: &OddValue, h: f64) -> Result<f64, CheckError> {
    let (u, xi) = p.initial_fields()?;
    let (du, dxi) = variation(&u, &xi, p.lambda, param)?;
    let base = SystemState::new(SystemKind::Extended, u.clone(), xi.clone(), p.lambda, 0.0)?;
    let moved = SystemState::new(SystemKind::Extended, u.axpy(h, &du), xi.axpy(h, &dxi), p.lambda, 0.0)?;
    let end = p.evolve(&base, p.steps())?.pop().unwrap();
    let end_moved = p.evolve(&moved, p.steps())?.pop().unwrap();
    let (eu, ex) = variation(&end.even, &end.odd, p.lambda, param)?;
    let pu = end.even.axpy(h, &eu);
    let px = end.odd.axpy(h, &ex);
    Ok(end_moved.even.distance(&pu).max(end_moved.odd.distance(&px)))
}

pub const SUSY_STEPS: (f64, f64) = (1e-3, 5e-4);

/// Supersymmetry as first-order flow commutation.
pub fn check_susy(p: &RunParams) -> Result<CheckOutcome, CheckError> {
    let alg = Algebra::new(p.algebra);
    if alg.odd_dim() == 0 {
        return Err(CheckError::Setup(format!("{} has no odd sector", p.algebra)));
    }
    let param = default_susy_param(&alg);
    let e1 = flow_commutation_error(p, &param, SUSY_STEPS.0)?;
    let e2 = flow_commutation_error(p, &param, SUSY_STEPS.1)?;
    Ok(CheckOutcome::new(
        "susy",
        vec![Metric::new("h_halving_error_ratio", e1 / e2, ratio_bound())],
        vec![format!("errors {e1:.3e} (h = {}) / {e2:.3e} (h = {})", SUSY_STEPS.0, SUSY_STEPS.1)],
    ))
}

/// Conserved-density table; fails on any discrepancy.
pub fn check_eq15(max_order: usize, mc: &MonteCarlo) -> Result<(CheckOutcome, crate::symbolic::Eq15Table), CheckError> {
    let table = reproduce_eq15(max_order, mc)?;
    let metrics = table
        .rows
        .iter()
        .map(|r| {
            let bad = matches!(r.status, crate::symbolic::Eq15Status::Discrepancy { .. });
            Metric::new(format!("z{}", r.order), if bad { 1.0 } else { 0.0 }, Bound::AtMost { max: 0.0 })
        })
        .collect();
    let notes = table.to_string().lines().map(str::to_string).collect();
    Ok((CheckOutcome::new("eq15", metrics, notes), table))
}
