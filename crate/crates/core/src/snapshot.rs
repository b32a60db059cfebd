//! JSON snapshots of a [`SystemState`].
//!
//! Layout: `{"header": {algebra, system, L, N, time, lambda, epsilon},
//! "fields": {<even name>: [[channel samples]...], <odd name>: [...]}}`.
//! Numbers are written with 17 significant digits so a read-back state is
//! bit-identical and repeated runs produce identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::algebra::{Algebra, AlgebraDescriptor};
use crate::dynamics::{DynamicsError, SystemKind, SystemState};
use crate::fields::{EvenField, FieldError, OddField, PeriodicGrid};
use crate::invariants::format_number;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed snapshot: {0}")]
    Format(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

fn channels_json(out: &mut String, channels: &[Vec<f64>]) {
    out.push('[');
    for (i, c) in channels.iter().enumerate() {
        if i > 0 {
            out.push_str(",\n    ");
        }
        out.push('[');
        for (j, x) in c.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format_number(*x));
        }
        out.push(']');
    }
    out.push(']');
}

/// Serializes a state to the snapshot layout.
pub fn to_json(state: &SystemState) -> String {
    let grid = state.grid();
    let (en, on) = state.kind.field_names();
    let mut s = String::new();
    s.push_str("{\n  \"header\": {");
    let _ = write!(
        s,
        "\"algebra\": \"{}\", \"system\": \"{}\", \"coupling\": \"{}\", \"L\": {}, \"N\": {}, \"time\": {}, \"lambda\": {}, \"epsilon\": {}",
        state.even.algebra().descriptor(),
        state.kind,
        state.coupling,
        format_number(grid.length()),
        grid.points(),
        format_number(state.time),
        format_number(state.lambda),
        format_number(state.epsilon),
    );
    s.push_str("},\n  \"fields\": {\n    ");
    let _ = write!(s, "\"{en}\": ");
    channels_json(&mut s, state.even.channels());
    let _ = write!(s, ",\n    \"{on}\": ");
    channels_json(&mut s, state.odd.channels());
    s.push_str("\n  }\n}\n");
    s
}

pub fn write(path: &Path, state: &SystemState) -> Result<(), SnapshotError> {
    std::fs::write(path, to_json(state))?;
    Ok(())
}

#[derive(Deserialize)]
struct Header {
    algebra: String,
    system: String,
    #[serde(default)]
    coupling: Option<String>,
    #[serde(rename = "L")]
    length: f64,
    #[serde(rename = "N")]
    points: usize,
    time: f64,
    lambda: f64,
    #[serde(default)]
    epsilon: f64,
}

#[derive(Deserialize)]
struct Raw {
    header: Header,
    fields: serde_json::Map<String, serde_json::Value>,
}

fn field_channels(fields: &serde_json::Map<String, serde_json::Value>, name: &str) -> Result<Vec<Vec<f64>>, SnapshotError> {
    let v = fields.get(name).ok_or_else(|| SnapshotError::Format(format!("missing field `{name}`")))?;
    serde_json::from_value(v.clone()).map_err(|e| SnapshotError::Format(format!("field `{name}`: {e}")))
}

/// Parses a snapshot back into a state.
pub fn from_json(text: &str) -> Result<SystemState, SnapshotError> {
    let raw: Raw = serde_json::from_str(text).map_err(|e| SnapshotError::Format(e.to_string()))?;
    let h = raw.header;
    let desc: AlgebraDescriptor = h.algebra.parse().map_err(|e| SnapshotError::Format(format!("{e}")))?;
    let kind: SystemKind = h.system.parse().map_err(SnapshotError::Format)?;
    let grid = PeriodicGrid::new(h.length, h.points)?;
    let alg = Algebra::new(desc);
    let (en, on) = kind.field_names();
    let even = EvenField::from_channels(&grid, &alg, field_channels(&raw.fields, en)?)?;
    let odd = OddField::from_channels(&grid, &alg, field_channels(&raw.fields, on)?)?;
    let mut state = SystemState::new(kind, even, odd, h.lambda, h.epsilon)?;
    if let Some(c) = h.coupling {
        state = state.with_coupling(c.parse().map_err(SnapshotError::Format)?);
    }
    state.time = h.time;
    Ok(state)
}

pub fn read(path: &Path) -> Result<SystemState, SnapshotError> {
    from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{build_initial_condition, IcProfile};

    #[test]
    fn round_trip_is_exact() {
        let grid = PeriodicGrid::new(40.0, 32).unwrap();
        let alg = Algebra::new(AlgebraDescriptor::Grassmann(3));
        let ic = build_initial_condition(&IcProfile::RandomBandlimited { max_mode: 4, amplitude: 0.3, seed: 2 }, &grid, &alg)
            .unwrap();
        let mut s = SystemState::new(SystemKind::Gardner, ic.even, ic.odd, -1.25, 0.1).unwrap();
        s.time = 0.3;
        let text = to_json(&s);
        let back = from_json(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(to_json(&back), text);
    }

    #[test]
    fn malformed_input_is_reported() {
        assert!(matches!(from_json("{}"), Err(SnapshotError::Format(_))));
        let grid = PeriodicGrid::new(1.0, 16).unwrap();
        let alg = Algebra::new(AlgebraDescriptor::Scalar);
        let s = SystemState::new(SystemKind::Extended, EvenField::zeros(&grid, &alg), OddField::zeros(&grid, &alg), 1.0, 0.0)
            .unwrap();
        let text = to_json(&s).replace("\"u\"", "\"w\"");
        assert!(matches!(from_json(&text), Err(SnapshotError::Format(_))));
    }
}
