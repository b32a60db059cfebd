//! Graded algebra backends.
//!
//! Every backend provides a commutative even part `P` with unit and an odd
//! part `Q`, together with the three products the field equations need:
//! even·even, even·odd (left and right agree because `[Q,P] = 0`) and the odd
//! commutator `[Q,Q] ⊂ P`. The Grassmann backend additionally exposes its full
//! odd·odd product.
//!
//! All products are stored as sparse structure-constant tables, so the same
//! code multiplies single values and whole grid fields.
//!
//! Basis order:
//! - Grassmann(N): monomials indexed by generator bitmask, ascending, split by
//!   popcount parity. Even index 0 is the unit.
//! - Symplectic(n): even basis is the unit only; odd basis `e1..en, e(n+1)..e(2n)`
//!   with `ω(e_i, e_(n+i)) = 1`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported Grassmann generator count.
pub const MAX_GRASSMANN_GENERATORS: u32 = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgebraError {
    #[error("algebra descriptor mismatch: {0} vs {1}")]
    Mismatch(AlgebraDescriptor, AlgebraDescriptor),
    #[error("expected {expected} coordinates for {descriptor}, got {got}")]
    Dimension {
        descriptor: AlgebraDescriptor,
        expected: usize,
        got: usize,
    },
    #[error("the full odd product is only defined on Grassmann backends, not {0}")]
    NotGrassmann(AlgebraDescriptor),
    #[error("invalid algebra descriptor `{0}` (expected scalar, grassmann:N or symplectic:n)")]
    Parse(String),
    #[error("unsupported generator count {0} for {1}")]
    Generators(u32, &'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgebraKind {
    Scalar,
    Grassmann,
    Symplectic,
}

/// Selects and parameterizes an algebra backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AlgebraDescriptor {
    Scalar,
    /// Grassmann algebra on `N` anticommuting generators.
    Grassmann(u32),
    /// Real symplectic space of dimension `2n` with `[q, q'] = ω(q, q')·1`.
    Symplectic(u32),
}

impl AlgebraDescriptor {
    pub fn grassmann(generators: u32) -> Result<Self, AlgebraError> {
        if generators == 0 || generators > MAX_GRASSMANN_GENERATORS {
            return Err(AlgebraError::Generators(generators, "grassmann"));
        }
        Ok(Self::Grassmann(generators))
    }

    pub fn symplectic(half_dim: u32) -> Result<Self, AlgebraError> {
        if half_dim == 0 || half_dim > 64 {
            return Err(AlgebraError::Generators(half_dim, "symplectic"));
        }
        Ok(Self::Symplectic(half_dim))
    }

    pub fn kind(&self) -> AlgebraKind {
        match self {
            Self::Scalar => AlgebraKind::Scalar,
            Self::Grassmann(_) => AlgebraKind::Grassmann,
            Self::Symplectic(_) => AlgebraKind::Symplectic,
        }
    }

    pub fn generators(&self) -> u32 {
        match *self {
            Self::Scalar => 0,
            Self::Grassmann(n) | Self::Symplectic(n) => n,
        }
    }

    pub fn even_dim(&self) -> usize {
        match *self {
            Self::Scalar | Self::Symplectic(_) => 1,
            Self::Grassmann(n) => 1 << (n - 1),
        }
    }

    pub fn odd_dim(&self) -> usize {
        match *self {
            Self::Scalar => 0,
            Self::Grassmann(n) => 1 << (n - 1),
            Self::Symplectic(n) => 2 * n as usize,
        }
    }
}

impl fmt::Display for AlgebraDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Scalar => write!(f, "scalar"),
            Self::Grassmann(n) => write!(f, "grassmann:{n}"),
            Self::Symplectic(n) => write!(f, "symplectic:{n}"),
        }
    }
}

impl FromStr for AlgebraDescriptor {
    type Err = AlgebraError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "scalar" {
            return Ok(Self::Scalar);
        }
        let (kind, n) = s
            .split_once(':')
            .ok_or_else(|| AlgebraError::Parse(s.to_string()))?;
        let n: u32 = n.trim().parse().map_err(|_| AlgebraError::Parse(s.to_string()))?;
        match kind.trim() {
            "grassmann" => Self::grassmann(n),
            "symplectic" => Self::symplectic(n),
            _ => Err(AlgebraError::Parse(s.to_string())),
        }
    }
}

impl Serialize for AlgebraDescriptor {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AlgebraDescriptor {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One structure constant: `basis_lhs * basis_rhs += coeff * basis_out`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Term {
    pub lhs: usize,
    pub rhs: usize,
    pub out: usize,
    pub coeff: f64,
}

#[derive(Debug)]
struct Tables {
    descriptor: AlgebraDescriptor,
    even_even: Vec<Term>,
    even_odd: Vec<Term>,
    odd_commutator: Vec<Term>,
    odd_odd: Option<Vec<Term>>,
    even_labels: Vec<String>,
    odd_labels: Vec<String>,
}

/// A concrete algebra backend: descriptor plus its product tables.
#[derive(Debug, Clone)]
pub struct Algebra {
    tables: Arc<Tables>,
}

impl PartialEq for Algebra {
    fn eq(&self, other: &Self) -> bool {
        self.descriptor() == other.descriptor()
    }
}

/// Product of two Grassmann monomials given as generator bitmasks.
/// Returns `None` when a generator repeats.
pub(crate) fn grassmann_monomial_product(a: u32, b: u32) -> Option<(u32, f64)> {
    if a & b != 0 {
        return None;
    }
    // Move each generator of `b` left past the generators of `a` that are larger.
    let mut swaps = 0;
    let mut rest = b;
    while rest != 0 {
        let j = rest.trailing_zeros();
        swaps += (a >> (j + 1)).count_ones();
        rest &= rest - 1;
    }
    let sign = if swaps % 2 == 0 { 1.0 } else { -1.0 };
    Some((a | b, sign))
}

fn grassmann_label(mask: u32) -> String {
    if mask == 0 {
        return "unit".to_string();
    }
    (0..32)
        .filter(|i| mask >> i & 1 == 1)
        .map(|i| format!("t{}", i + 1))
        .collect()
}

fn collect_terms(acc: BTreeMap<(usize, usize, usize), f64>) -> Vec<Term> {
    acc.into_iter()
        .filter(|(_, c)| *c != 0.0)
        .map(|((lhs, rhs, out), coeff)| Term { lhs, rhs, out, coeff })
        .collect()
}

impl Tables {
    fn scalar() -> Self {
        Self {
            descriptor: AlgebraDescriptor::Scalar,
            even_even: vec![Term { lhs: 0, rhs: 0, out: 0, coeff: 1.0 }],
            even_odd: Vec::new(),
            odd_commutator: Vec::new(),
            odd_odd: None,
            even_labels: vec!["unit".into()],
            odd_labels: Vec::new(),
        }
    }

    fn symplectic(n: u32) -> Self {
        let n = n as usize;
        let mut odd_commutator = Vec::with_capacity(2 * n);
        for i in 0..n {
            odd_commutator.push(Term { lhs: i, rhs: n + i, out: 0, coeff: 1.0 });
            odd_commutator.push(Term { lhs: n + i, rhs: i, out: 0, coeff: -1.0 });
        }
        Self {
            descriptor: AlgebraDescriptor::Symplectic(n as u32),
            even_even: vec![Term { lhs: 0, rhs: 0, out: 0, coeff: 1.0 }],
            even_odd: (0..2 * n)
                .map(|j| Term { lhs: 0, rhs: j, out: j, coeff: 1.0 })
                .collect(),
            odd_commutator,
            odd_odd: None,
            even_labels: vec!["unit".into()],
            odd_labels: (1..=2 * n).map(|i| format!("e{i}")).collect(),
        }
    }

    fn grassmann(n: u32) -> Self {
        let masks = 0u32..(1 << n);
        let even: Vec<u32> = masks.clone().filter(|m| m.count_ones() % 2 == 0).collect();
        let odd: Vec<u32> = masks.filter(|m| m.count_ones() % 2 == 1).collect();
        let mut index = vec![0usize; 1 << n];
        for (i, &m) in even.iter().enumerate() {
            index[m as usize] = i;
        }
        for (i, &m) in odd.iter().enumerate() {
            index[m as usize] = i;
        }

        let product_table = |left: &[u32], right: &[u32]| {
            let mut acc = BTreeMap::new();
            for (i, &a) in left.iter().enumerate() {
                for (j, &b) in right.iter().enumerate() {
                    if let Some((m, s)) = grassmann_monomial_product(a, b) {
                        *acc.entry((i, j, index[m as usize])).or_insert(0.0) += s;
                    }
                }
            }
            collect_terms(acc)
        };

        // [a, b] = ab - ba assembled from the full product, not from the 2ab shortcut.
        let mut comm = BTreeMap::new();
        for (i, &a) in odd.iter().enumerate() {
            for (j, &b) in odd.iter().enumerate() {
                if let Some((m, s)) = grassmann_monomial_product(a, b) {
                    *comm.entry((i, j, index[m as usize])).or_insert(0.0) += s;
                }
                if let Some((m, s)) = grassmann_monomial_product(b, a) {
                    *comm.entry((i, j, index[m as usize])).or_insert(0.0) -= s;
                }
            }
        }

        Self {
            descriptor: AlgebraDescriptor::Grassmann(n),
            even_even: product_table(&even, &even),
            even_odd: product_table(&even, &odd),
            odd_commutator: collect_terms(comm),
            odd_odd: Some(product_table(&odd, &odd)),
            even_labels: even.iter().map(|&m| grassmann_label(m)).collect(),
            odd_labels: odd.iter().map(|&m| grassmann_label(m)).collect(),
        }
    }
}

/// Even element: coordinates on the fixed even basis (index 0 is the unit).
#[derive(Debug, Clone, PartialEq)]
pub struct EvenValue {
    descriptor: AlgebraDescriptor,
    coords: Vec<f64>,
}

/// Odd element: coordinates on the fixed odd basis.
#[derive(Debug, Clone, PartialEq)]
pub struct OddValue {
    descriptor: AlgebraDescriptor,
    coords: Vec<f64>,
}

macro_rules! value_common {
    ($ty:ident) => {
        impl $ty {
            pub fn descriptor(&self) -> AlgebraDescriptor {
                self.descriptor
            }

            pub fn coords(&self) -> &[f64] {
                &self.coords
            }

            /// Max-abs coordinate norm.
            pub fn norm(&self) -> f64 {
                self.coords.iter().fold(0.0, |m, c| m.max(c.abs()))
            }

            pub fn is_finite(&self) -> bool {
                self.coords.iter().all(|c| c.is_finite())
            }

            pub fn scale(&self, s: f64) -> Self {
                Self {
                    descriptor: self.descriptor,
                    coords: self.coords.iter().map(|c| c * s).collect(),
                }
            }

            pub fn add(&self, other: &Self) -> Result<Self, AlgebraError> {
                check_same(self.descriptor, other.descriptor)?;
                Ok(Self {
                    descriptor: self.descriptor,
                    coords: self.coords.iter().zip(&other.coords).map(|(a, b)| a + b).collect(),
                })
            }

            pub fn sub(&self, other: &Self) -> Result<Self, AlgebraError> {
                self.add(&other.scale(-1.0))
            }
        }
    };
}

value_common!(EvenValue);
value_common!(OddValue);

fn check_same(a: AlgebraDescriptor, b: AlgebraDescriptor) -> Result<(), AlgebraError> {
    if a == b {
        Ok(())
    } else {
        Err(AlgebraError::Mismatch(a, b))
    }
}

fn apply_terms(terms: &[Term], lhs: &[f64], rhs: &[f64], out_dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; out_dim];
    for t in terms {
        out[t.out] += t.coeff * lhs[t.lhs] * rhs[t.rhs];
    }
    out
}

impl Algebra {
    pub fn new(descriptor: AlgebraDescriptor) -> Self {
        let tables = match descriptor {
            AlgebraDescriptor::Scalar => Tables::scalar(),
            AlgebraDescriptor::Grassmann(n) => Tables::grassmann(n),
            AlgebraDescriptor::Symplectic(n) => Tables::symplectic(n),
        };
        Self { tables: Arc::new(tables) }
    }

    pub fn descriptor(&self) -> AlgebraDescriptor {
        self.tables.descriptor
    }

    pub fn even_dim(&self) -> usize {
        self.descriptor().even_dim()
    }

    pub fn odd_dim(&self) -> usize {
        self.descriptor().odd_dim()
    }

    /// Human-readable names of the even basis (`unit`, `t1t2`, ...).
    pub fn even_labels(&self) -> &[String] {
        &self.tables.even_labels
    }

    pub fn odd_labels(&self) -> &[String] {
        &self.tables.odd_labels
    }

    pub(crate) fn even_even_terms(&self) -> &[Term] {
        &self.tables.even_even
    }

    pub(crate) fn even_odd_terms(&self) -> &[Term] {
        &self.tables.even_odd
    }

    pub(crate) fn commutator_terms(&self) -> &[Term] {
        &self.tables.odd_commutator
    }

    pub(crate) fn odd_odd_terms(&self) -> Result<&[Term], AlgebraError> {
        self.tables
            .odd_odd
            .as_deref()
            .ok_or(AlgebraError::NotGrassmann(self.descriptor()))
    }

    pub fn even(&self, coords: Vec<f64>) -> Result<EvenValue, AlgebraError> {
        let d = self.descriptor();
        if coords.len() != d.even_dim() {
            return Err(AlgebraError::Dimension { descriptor: d, expected: d.even_dim(), got: coords.len() });
        }
        Ok(EvenValue { descriptor: d, coords })
    }

    pub fn odd(&self, coords: Vec<f64>) -> Result<OddValue, AlgebraError> {
        let d = self.descriptor();
        if coords.len() != d.odd_dim() {
            return Err(AlgebraError::Dimension { descriptor: d, expected: d.odd_dim(), got: coords.len() });
        }
        Ok(OddValue { descriptor: d, coords })
    }

    pub fn unit(&self) -> EvenValue {
        self.even_basis(0)
    }

    pub fn even_zero(&self) -> EvenValue {
        EvenValue { descriptor: self.descriptor(), coords: vec![0.0; self.even_dim()] }
    }

    pub fn odd_zero(&self) -> OddValue {
        OddValue { descriptor: self.descriptor(), coords: vec![0.0; self.odd_dim()] }
    }

    pub fn even_basis(&self, i: usize) -> EvenValue {
        let mut v = self.even_zero();
        v.coords[i] = 1.0;
        v
    }

    pub fn odd_basis(&self, i: usize) -> OddValue {
        let mut v = self.odd_zero();
        v.coords[i] = 1.0;
        v
    }

    /// Scalar multiple of the unit.
    pub fn scalar(&self, s: f64) -> EvenValue {
        self.unit().scale(s)
    }

    fn own(&self, d: AlgebraDescriptor) -> Result<(), AlgebraError> {
        check_same(self.descriptor(), d)
    }

    pub fn even_mul(&self, a: &EvenValue, b: &EvenValue) -> Result<EvenValue, AlgebraError> {
        self.own(a.descriptor)?;
        self.own(b.descriptor)?;
        Ok(EvenValue {
            descriptor: a.descriptor,
            coords: apply_terms(self.even_even_terms(), &a.coords, &b.coords, self.even_dim()),
        })
    }

    /// `a·q` (equal to `q·a` since `[Q,P] = 0`).
    pub fn mixed_mul(&self, a: &EvenValue, q: &OddValue) -> Result<OddValue, AlgebraError> {
        self.own(a.descriptor)?;
        self.own(q.descriptor)?;
        Ok(OddValue {
            descriptor: q.descriptor,
            coords: apply_terms(self.even_odd_terms(), &a.coords, &q.coords, self.odd_dim()),
        })
    }

    pub fn odd_commutator(&self, q1: &OddValue, q2: &OddValue) -> Result<EvenValue, AlgebraError> {
        self.own(q1.descriptor)?;
        self.own(q2.descriptor)?;
        Ok(EvenValue {
            descriptor: q1.descriptor,
            coords: apply_terms(self.commutator_terms(), &q1.coords, &q2.coords, self.even_dim()),
        })
    }

    /// Full associative product of two odd Grassmann elements.
    pub fn odd_mul_grassmann(&self, q1: &OddValue, q2: &OddValue) -> Result<EvenValue, AlgebraError> {
        self.own(q1.descriptor)?;
        self.own(q2.descriptor)?;
        let terms = self.odd_odd_terms()?;
        Ok(EvenValue {
            descriptor: q1.descriptor,
            coords: apply_terms(terms, &q1.coords, &q2.coords, self.even_dim()),
        })
    }
}

/// One checked axiom.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomCheck {
    pub axiom: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub descriptor: AlgebraDescriptor,
    pub checks: Vec<AxiomCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn violations(&self) -> impl Iterator<Item = &AxiomCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

const SAMPLES: usize = 16;
const REL_TOL: f64 = 1e-12;

fn close(a: &[f64], b: &[f64]) -> bool {
    let scale = a.iter().chain(b).fold(1.0f64, |m, x| m.max(x.abs()));
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= REL_TOL * scale)
}

/// Checks the graded-algebra axioms on a backend: nondegeneracy of the odd
/// commutator over the odd basis, plus commutativity/associativity/unit of
/// the even product, module compatibility and antisymmetry on random samples.
pub fn validate_algebra(descriptor: AlgebraDescriptor) -> ValidationReport {
    let alg = Algebra::new(descriptor);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_a19e);
    let mut checks = Vec::new();
    let mut record = |axiom: &str, failures: Vec<String>| {
        checks.push(AxiomCheck {
            axiom: axiom.to_string(),
            passed: failures.is_empty(),
            detail: if failures.is_empty() { "ok".into() } else { failures.join("; ") },
        });
    };

    // Nondegeneracy: each odd basis element needs a partner with nonzero commutator.
    let mut degenerate = Vec::new();
    for i in 0..alg.odd_dim() {
        let q = alg.odd_basis(i);
        let has_partner = (0..alg.odd_dim()).any(|j| {
            alg.odd_commutator(&q, &alg.odd_basis(j)).map(|c| c.norm() > 0.0).unwrap_or(false)
        });
        if !has_partner {
            degenerate.push(format!("[{}, q] = 0 for every odd basis q", alg.odd_labels()[i]));
        }
    }
    record("nondegeneracy", degenerate);

    let rand_even = |rng: &mut ChaCha8Rng| {
        alg.even((0..alg.even_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    };
    let rand_odd = |rng: &mut ChaCha8Rng| {
        alg.odd((0..alg.odd_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    };

    let mut comm = Vec::new();
    let mut assoc = Vec::new();
    let mut unit = Vec::new();
    let mut module = Vec::new();
    let mut antisym = Vec::new();
    for s in 0..SAMPLES {
        let (a, b, c) = (rand_even(&mut rng), rand_even(&mut rng), rand_even(&mut rng));
        let ab = alg.even_mul(&a, &b).unwrap();
        if !close(&ab.coords, &alg.even_mul(&b, &a).unwrap().coords) {
            comm.push(format!("sample {s}"));
        }
        let left = alg.even_mul(&ab, &c).unwrap();
        let right = alg.even_mul(&a, &alg.even_mul(&b, &c).unwrap()).unwrap();
        if !close(&left.coords, &right.coords) {
            assoc.push(format!("sample {s}"));
        }
        if !close(&alg.even_mul(&alg.unit(), &a).unwrap().coords, &a.coords) {
            unit.push(format!("sample {s}"));
        }
        if alg.odd_dim() > 0 {
            let (q1, q2) = (rand_odd(&mut rng), rand_odd(&mut rng));
            let lhs = alg.mixed_mul(&ab, &q1).unwrap();
            let rhs = alg.mixed_mul(&a, &alg.mixed_mul(&b, &q1).unwrap()).unwrap();
            if !close(&lhs.coords, &rhs.coords)
                || !close(&alg.mixed_mul(&alg.unit(), &q1).unwrap().coords, &q1.coords)
            {
                module.push(format!("sample {s}"));
            }
            let c12 = alg.odd_commutator(&q1, &q2).unwrap();
            let c21 = alg.odd_commutator(&q2, &q1).unwrap();
            let neg: Vec<f64> = c21.coords.iter().map(|x| -x).collect();
            let zero = vec![0.0; c12.coords.len()];
            if !close(&c12.coords, &neg) || !close(&alg.odd_commutator(&q1, &q1).unwrap().coords, &zero) {
                antisym.push(format!("sample {s}"));
            }
        }
    }
    record("even commutativity", comm);
    record("even associativity", assoc);
    record("unit", unit);
    record("odd module (PQ ⊂ Q)", module);
    record("commutator antisymmetry", antisym);

    match descriptor {
        AlgebraDescriptor::Grassmann(_) => {
            let mut bad = Vec::new();
            for i in 0..alg.odd_dim() {
                for j in 0..alg.odd_dim() {
                    let (qi, qj) = (alg.odd_basis(i), alg.odd_basis(j));
                    let c = alg.odd_commutator(&qi, &qj).unwrap();
                    let p = alg.odd_mul_grassmann(&qi, &qj).unwrap().scale(2.0);
                    if c != p {
                        bad.push(format!("({}, {})", alg.odd_labels()[i], alg.odd_labels()[j]));
                    }
                }
            }
            record("commutator = 2 × odd product", bad);
        }
        AlgebraDescriptor::Symplectic(_) => {
            let mut bad = Vec::new();
            for _ in 0..SAMPLES {
                let c = alg.odd_commutator(&rand_odd(&mut rng), &rand_odd(&mut rng)).unwrap();
                if c.coords[1..].iter().any(|x| *x != 0.0) {
                    bad.push("commutator outside span of unit".to_string());
                }
            }
            record("commutator in unit span", bad);
        }
        AlgebraDescriptor::Scalar => {}
    }

    ValidationReport { descriptor, checks }
}
