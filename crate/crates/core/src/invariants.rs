//! Hamiltonian densities, the conserved quantities H0–H6 and drift tracking.
//!
//! Commutators appear with the orientation `[ξ′,ξ]` exactly as written in the
//! densities; nothing here flips an orientation silently.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use thiserror::Error;

use crate::algebra::EvenValue;
use crate::dynamics::{SystemKind, SystemState, Trajectory};
use crate::fields::{EvenField, FieldError, OddField};
use crate::transforms::{gardner_map, miura, TransformError};

/// Relative drift denominator floor.
pub const DRIFT_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum InvariantError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("cannot build a drift report from an empty trajectory")]
    EmptyTrajectory,
    #[error("unknown tracked quantity `{0}` (H0, H2, H4, H6, H, M)")]
    UnknownQuantity(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// `ℋ = ½(v′)² + ½v⁴ + ½λ²[η,η′]² + ½λ[η″,η′] + (3/2)λ v²[η′,η]`.
pub fn hamiltonian_density(v: &EvenField, eta: &OddField, lambda: f64) -> Result<EvenField, FieldError> {
    v.compatible(eta)?;
    let dv = v.d(1);
    let de = eta.derivatives(&[1, 2]);
    let c = eta.commutator(&de[0]);
    let v2 = v.mul(v);
    Ok(dv
        .mul(&dv)
        .scale(0.5)
        .add(&v2.mul(&v2).scale(0.5))
        .add(&c.mul(&c).scale(0.5 * lambda * lambda))
        .add(&de[1].commutator(&de[0]).scale(0.5 * lambda))
        .add(&v2.mul(&de[0].commutator(eta)).scale(1.5 * lambda)))
}

/// `½u² + (λ/2)[ξ′,ξ]`.
pub fn reduced_hamiltonian_density(u: &EvenField, xi: &OddField, lambda: f64) -> Result<EvenField, FieldError> {
    u.compatible(xi)?;
    Ok(u.mul(u).scale(0.5).add(&xi.d(1).commutator(xi).scale(0.5 * lambda)))
}

/// Densities of H0, H2, H4, H6 (integrands, before quadrature).
pub fn conserved_densities(u: &EvenField, xi: &OddField, lambda: f64) -> Result<[EvenField; 4], FieldError> {
    u.compatible(xi)?;
    let du = u.derivatives(&[1, 2]);
    let (u1, u2) = (&du[0], &du[1]);
    let dx = xi.derivatives(&[1, 2, 3]);
    let (x1, x2, x3) = (&dx[0], &dx[1], &dx[2]);
    let c10 = x1.commutator(xi);
    let c21 = x2.commutator(x1);
    let c30 = x3.commutator(xi);
    let c32 = x3.commutator(x2);
    let uu = u.mul(u);
    let l = lambda;

    let h0 = u.clone();
    let h2 = uu.axpy(l, &c10);
    let h4 = uu
        .mul(u)
        .scale(2.0)
        .add(&u1.mul(u1))
        .add(&u.mul(&c10).scale(4.0 * l))
        .add(&c21.scale(l));
    let h6 = uu
        .mul(&uu)
        .scale(5.0)
        .add(&u.mul(&u1.mul(u1)).scale(10.0))
        .add(&u2.mul(u2))
        .add(&uu.mul(&c10).scale(15.0 * l))
        .add(&u.mul(&c21).scale(-2.0 * l))
        .add(&u.mul(&c30).scale(-8.0 * l))
        .add(&c10.mul(&c10).scale(3.0 * l * l))
        .add(&c32.scale(l));
    Ok([h0, h2, h4, h6])
}

/// The first four nontrivial conserved quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct ConservedSet {
    pub h0: EvenValue,
    pub h2: EvenValue,
    pub h4: EvenValue,
    pub h6: EvenValue,
}

pub fn conserved_quantities(u: &EvenField, xi: &OddField, lambda: f64) -> Result<ConservedSet, FieldError> {
    let [h0, h2, h4, h6] = conserved_densities(u, xi, lambda)?;
    Ok(ConservedSet { h0: h0.quadrature(), h2: h2.quadrature(), h4: h4.quadrature(), h6: h6.quadrature() })
}

/// A tracked scalar-in-P quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Quantity {
    /// `H_k`, `k ∈ {0,2,4,6}`, evaluated on the extended-system variables of
    /// the state (Miura image for `modified`, Gardner image for `gardner`).
    H(u8),
    /// Hamiltonian: full density for `modified`, reduced density otherwise.
    Hamiltonian,
    /// `∫` of the state's own even field (∫v, ∫u or ∫z).
    Mass,
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::H(k) => write!(f, "H{k}"),
            Self::Hamiltonian => write!(f, "H"),
            Self::Mass => write!(f, "M"),
        }
    }
}

impl FromStr for Quantity {
    type Err = InvariantError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "H0" => Ok(Self::H(0)),
            "H2" => Ok(Self::H(2)),
            "H4" => Ok(Self::H(4)),
            "H6" => Ok(Self::H(6)),
            "H" => Ok(Self::Hamiltonian),
            "M" => Ok(Self::Mass),
            other => Err(InvariantError::UnknownQuantity(other.to_string())),
        }
    }
}

/// Quantities tracked by default for a system.
pub fn default_quantities(kind: SystemKind) -> Vec<Quantity> {
    match kind {
        SystemKind::Modified => vec![Quantity::Hamiltonian],
        SystemKind::Extended | SystemKind::SkdvGrassmann => {
            vec![Quantity::H(0), Quantity::H(2), Quantity::H(4), Quantity::H(6)]
        }
        SystemKind::Gardner => vec![Quantity::Mass, Quantity::H(0), Quantity::H(2), Quantity::H(4), Quantity::H(6)],
    }
}

fn extended_variables(state: &SystemState) -> Result<(EvenField, OddField), InvariantError> {
    Ok(match state.kind {
        SystemKind::Extended | SystemKind::SkdvGrassmann => (state.even.clone(), state.odd.clone()),
        SystemKind::Modified => miura(&state.even, &state.odd, state.lambda)?,
        SystemKind::Gardner => gardner_map(&state.even, &state.odd, state.epsilon, state.lambda)?,
    })
}

/// Evaluates `quantities` on one state.
pub fn evaluate(state: &SystemState, quantities: &[Quantity]) -> Result<Vec<EvenValue>, InvariantError> {
    let needs_ext = quantities.iter().any(|q| matches!(q, Quantity::H(_)))
        || (state.kind != SystemKind::Modified && quantities.contains(&Quantity::Hamiltonian));
    let ext = if needs_ext { Some(extended_variables(state)?) } else { None };
    let dens = match (&ext, quantities.iter().any(|q| matches!(q, Quantity::H(_)))) {
        (Some((u, xi)), true) => Some(conserved_densities(u, xi, state.lambda)?),
        _ => None,
    };
    quantities
        .iter()
        .map(|q| {
            Ok(match q {
                Quantity::H(k) => {
                    let idx = match k {
                        0 => 0,
                        2 => 1,
                        4 => 2,
                        6 => 3,
                        _ => return Err(InvariantError::UnknownQuantity(q.to_string())),
                    };
                    dens.as_ref().unwrap()[idx].quadrature()
                }
                Quantity::Hamiltonian => match state.kind {
                    SystemKind::Modified => hamiltonian_density(&state.even, &state.odd, state.lambda)?.quadrature(),
                    _ => {
                        let (u, xi) = ext.as_ref().unwrap();
                        reduced_hamiltonian_density(u, xi, state.lambda)?.quadrature()
                    }
                },
                Quantity::Mass => state.even.quadrature(),
            })
        })
        .collect()
}

/// Values of tracked quantities along a trajectory, with their drift.
#[derive(Debug, Clone, PartialEq)]
pub struct ConservedReport {
    pub times: Vec<f64>,
    pub quantities: Vec<Quantity>,
    /// `values[q][t]`.
    pub values: Vec<Vec<EvenValue>>,
    /// Max over time of `‖Q(t) − Q(t₀)‖ / max(‖Q(t₀)‖, floor)`.
    pub drift: Vec<f64>,
    /// Labels of the even basis, for CSV headers.
    pub channel_labels: Vec<String>,
}

/// Accumulates a report one state at a time (usable from an integrator callback).
#[derive(Debug, Clone)]
pub struct ReportBuilder {
    quantities: Vec<Quantity>,
    times: Vec<f64>,
    values: Vec<Vec<EvenValue>>,
    channel_labels: Vec<String>,
}

impl ReportBuilder {
    pub fn new(quantities: Vec<Quantity>) -> Self {
        let n = quantities.len();
        Self { quantities, times: Vec::new(), values: vec![Vec::new(); n], channel_labels: Vec::new() }
    }

    pub fn record(&mut self, state: &SystemState) -> Result<(), InvariantError> {
        let vals = evaluate(state, &self.quantities)?;
        if self.channel_labels.is_empty() {
            self.channel_labels = state.even.algebra().even_labels().to_vec();
        }
        self.times.push(state.time);
        for (slot, v) in self.values.iter_mut().zip(vals) {
            slot.push(v);
        }
        Ok(())
    }

    pub fn finish(self) -> Result<ConservedReport, InvariantError> {
        if self.times.is_empty() {
            return Err(InvariantError::EmptyTrajectory);
        }
        let drift = self.values.iter().map(|row| relative_drift(row)).collect();
        Ok(ConservedReport {
            times: self.times,
            quantities: self.quantities,
            values: self.values,
            drift,
            channel_labels: self.channel_labels,
        })
    }
}

/// Max relative deviation of a series from its first element.
pub fn relative_drift(series: &[EvenValue]) -> f64 {
    let Some(first) = series.first() else { return 0.0 };
    let denom = first.norm().max(DRIFT_FLOOR);
    series
        .iter()
        .map(|v| v.sub(first).map(|d| d.norm()).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max)
        / denom
}

/// Drift report over the default quantities for the trajectory's system.
pub fn drift_report(trajectory: &Trajectory) -> Result<ConservedReport, InvariantError> {
    let first = trajectory.states.first().ok_or(InvariantError::EmptyTrajectory)?;
    drift_report_for(trajectory, &default_quantities(first.kind))
}

pub fn drift_report_for(trajectory: &Trajectory, quantities: &[Quantity]) -> Result<ConservedReport, InvariantError> {
    let mut b = ReportBuilder::new(quantities.to_vec());
    for s in &trajectory.states {
        b.record(s)?;
    }
    b.finish()
}

/// Fixed-width scientific notation with 17 significant digits.
pub fn format_number(x: f64) -> String {
    format!("{x:.16e}")
}

impl ConservedReport {
    pub fn drift_of(&self, q: Quantity) -> Option<f64> {
        self.quantities.iter().position(|&p| p == q).map(|i| self.drift[i])
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["time".to_string()];
        for q in &self.quantities {
            for label in &self.channel_labels {
                h.push(format!("{q}[{label}]"));
            }
        }
        h
    }

    /// CSV: `time`, then one column per quantity per even coordinate.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), InvariantError> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| InvariantError::Io(std::io::Error::other(e));
        w.write_record(self.header()).map_err(io)?;
        for (t, time) in self.times.iter().enumerate() {
            let mut row = vec![format_number(*time)];
            for q in &self.values {
                row.extend(q[t].coords().iter().map(|c| format_number(*c)));
            }
            w.write_record(&row).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}
