//! Right-hand sides of the four evolution systems and fixed-step integrators.
//!
//! Sign convention: every system is written as `f_t = RHS(f)`, i.e. all
//! non-time terms of the "LHS = 0" form moved to the right. Each RHS splits
//! into the dispersive part `−f‴` (shared by all four systems, both sectors)
//! and a nonlinear remainder; the integrating-factor scheme uses that split.
//!
//! | system           | even sector                                         | odd sector |
//! |------------------|-----------------------------------------------------|------------|
//! | `modified`       | `v_t = −v‴ + 6v²v′ + 3λ(v[η′,η])′`                  | `η_t = −η‴ + 3v²η′ + 3vv′η + (cubic coupling)` |
//! | `extended`       | `u_t = −u‴ + 6uu′ + 3λ[ξ″,ξ]`                       | `ξ_t = −ξ‴ + 3(uξ)′` |
//! | `skdv_grassmann` | `u_t = −u‴ + 6uu′ − 6λ ξξ″`                         | `ξ_t = −ξ‴ + 3(uξ)′` |
//! | `gardner`        | `z_t = (−z″ + 3z² + 3λ[σ′,σ])′ + ε²(2z³ + 3λz[σ′,σ])′` | `σ_t = (−σ″ + 3zσ)′ + 3ε²(z²σ′ + zz′σ + λσ′[σ′,σ])` |

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::AlgebraKind;
use crate::fields::{EvenField, Field, FieldError, Grade, OddField, PeriodicGrid};

#[derive(Debug, Error, Clone)]
pub enum DynamicsError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("the skdv_grassmann system needs a Grassmann algebra, got {0}")]
    NotGrassmann(String),
    #[error("a nonzero Gardner epsilon is only meaningful for the gardner system")]
    EpsilonOutsideGardner,
    #[error("dt = {dt:e} exceeds the {scheme} stability limit {limit:e}; use dt <= {limit:e} or force")]
    Unstable { dt: f64, limit: f64, scheme: Scheme },
    #[error("dt must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("non-finite value at step {step} (t = {time}); last finite state kept")]
    NonFinite { step: usize, time: f64, last: Box<SystemState> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    /// `(v, η)` system related to `extended` by the Miura map.
    Modified,
    /// Grassmann-specific SKdV form with the full odd product.
    SkdvGrassmann,
    /// Operator-extended system in `(u, ξ)`.
    Extended,
    /// ε-deformed system in `(z, σ)`.
    Gardner,
}

impl SystemKind {
    /// Names of the even and odd field in this system.
    pub fn field_names(&self) -> (&'static str, &'static str) {
        match self {
            Self::Modified => ("v", "eta"),
            Self::SkdvGrassmann | Self::Extended => ("u", "xi"),
            Self::Gardner => ("z", "sigma"),
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Modified => "modified",
            Self::SkdvGrassmann => "skdv",
            Self::Extended => "extended",
            Self::Gardner => "gardner",
        })
    }
}

impl FromStr for SystemKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "modified" => Ok(Self::Modified),
            "skdv" | "skdv_grassmann" => Ok(Self::SkdvGrassmann),
            "extended" => Ok(Self::Extended),
            "gardner" => Ok(Self::Gardner),
            _ => Err(format!("unknown system `{s}` (modified, skdv, extended, gardner)")),
        }
    }
}

/// Cubic odd self-coupling in the η equation of the modified system.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModifiedCoupling {
    /// `−3λ η′[η,η′]`: the unique choice for which the Miura map sends
    /// solutions to solutions of the extended system on every backend.
    #[default]
    MiuraConsistent,
    /// `−λ η′[η,η′] − (λ/2) η[η,η″]`, as printed in the source equations.
    Published,
}

impl fmt::Display for ModifiedCoupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::MiuraConsistent => "miura_consistent",
            Self::Published => "published",
        })
    }
}

impl FromStr for ModifiedCoupling {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "miura_consistent" | "miura" => Ok(Self::MiuraConsistent),
            "published" => Ok(Self::Published),
            _ => Err(format!("unknown coupling `{s}` (miura_consistent, published)")),
        }
    }
}

/// A field pair together with time and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub kind: SystemKind,
    pub even: EvenField,
    pub odd: OddField,
    pub time: f64,
    pub lambda: f64,
    /// Gardner deformation parameter; zero for every other system.
    pub epsilon: f64,
    pub coupling: ModifiedCoupling,
}

impl SystemState {
    pub fn new(
        kind: SystemKind,
        even: EvenField,
        odd: OddField,
        lambda: f64,
        epsilon: f64,
    ) -> Result<Self, DynamicsError> {
        even.compatible(&odd)?;
        if kind == SystemKind::SkdvGrassmann && even.algebra().descriptor().kind() != AlgebraKind::Grassmann {
            return Err(DynamicsError::NotGrassmann(even.algebra().descriptor().to_string()));
        }
        if kind != SystemKind::Gardner && epsilon != 0.0 {
            return Err(DynamicsError::EpsilonOutsideGardner);
        }
        Ok(Self { kind, even, odd, time: 0.0, lambda, epsilon, coupling: ModifiedCoupling::default() })
    }

    pub fn with_coupling(mut self, coupling: ModifiedCoupling) -> Self {
        self.coupling = coupling;
        self
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.even.grid()
    }

    pub fn is_finite(&self) -> bool {
        self.even.is_finite() && self.odd.is_finite()
    }

    /// Full right-hand side at this state.
    pub fn rhs(&self) -> Result<(EvenField, OddField), DynamicsError> {
        let (ne, no) = self.nonlinear()?;
        Ok((ne.sub(&self.even.d(3)), no.sub(&self.odd.d(3))))
    }

    /// Right-hand side without the dispersive `−f‴` term.
    fn nonlinear(&self) -> Result<(EvenField, OddField), DynamicsError> {
        let (e, o, l) = (&self.even, &self.odd, self.lambda);
        match self.kind {
            SystemKind::Modified => Ok(nonlinear_modified(e, o, l, self.coupling)),
            SystemKind::Extended => Ok(nonlinear_extended(e, o, l)),
            SystemKind::SkdvGrassmann => nonlinear_skdv(e, o, l),
            SystemKind::Gardner => Ok(nonlinear_gardner(e, o, l, self.epsilon)),
        }
    }
}

fn check<A: Grade, B: Grade>(a: &Field<A>, b: &Field<B>) -> Result<(), DynamicsError> {
    a.compatible(b)?;
    if !(a.is_finite() && b.is_finite()) {
        return Err(FieldError::NonFinite.into());
    }
    Ok(())
}

fn with_dispersion(
    (ne, no): (EvenField, OddField),
    even: &EvenField,
    odd: &OddField,
) -> (EvenField, OddField) {
    (ne.sub(&even.d(3)), no.sub(&odd.d(3)))
}

fn nonlinear_modified(v: &EvenField, eta: &OddField, lambda: f64, coupling: ModifiedCoupling) -> (EvenField, OddField) {
    let dv = v.d(1);
    let de = eta.derivatives(&[1, 2]);
    let (de1, de2) = (&de[0], &de[1]);
    let v2 = v.mul(v);
    let even = v2.mul(&dv).scale(6.0).add(&v.mul(&de1.commutator(eta)).d(1).scale(3.0 * lambda));
    let mut odd = v2.mul_odd(de1).scale(3.0).add(&v.mul(&dv).mul_odd(eta).scale(3.0));
    match coupling {
        ModifiedCoupling::MiuraConsistent => {
            odd = odd.axpy(-3.0 * lambda, &eta.commutator(de1).mul_odd(de1));
        }
        ModifiedCoupling::Published => {
            let (a, b) = published_terms(eta, de1, de2, lambda);
            odd = odd.add(&a).add(&b);
        }
    }
    (even, odd)
}

fn published_terms(eta: &OddField, de1: &OddField, de2: &OddField, lambda: f64) -> (OddField, OddField) {
    let a = eta.commutator(de1).mul_odd(de1).scale(-lambda);
    let b = eta.commutator(de2).mul_odd(eta).scale(-0.5 * lambda);
    (a, b)
}

/// The two cubic odd terms of the η equation as printed:
/// `(−λ η′[η,η′], −(λ/2) η[η,η″])`. Both vanish identically on Grassmann backends.
pub fn published_cubic_terms(eta: &OddField, lambda: f64) -> (OddField, OddField) {
    let de = eta.derivatives(&[1, 2]);
    published_terms(eta, &de[0], &de[1], lambda)
}

fn nonlinear_extended(u: &EvenField, xi: &OddField, lambda: f64) -> (EvenField, OddField) {
    let du = u.d(1);
    let dxi2 = xi.d(2);
    let even = u.mul(&du).scale(6.0).add(&dxi2.commutator(xi).scale(3.0 * lambda));
    let odd = u.mul_odd(xi).d(1).scale(3.0);
    (even, odd)
}

fn nonlinear_skdv(u: &EvenField, xi: &OddField, lambda: f64) -> Result<(EvenField, OddField), DynamicsError> {
    let du = u.d(1);
    let dxi2 = xi.d(2);
    let xx = xi
        .grassmann_mul(&dxi2)
        .map_err(|_| DynamicsError::NotGrassmann(u.algebra().descriptor().to_string()))?;
    let even = u.mul(&du).scale(6.0).axpy(-6.0 * lambda, &xx);
    let odd = u.mul_odd(xi).d(1).scale(3.0);
    Ok((even, odd))
}

fn nonlinear_gardner(z: &EvenField, sigma: &OddField, lambda: f64, eps: f64) -> (EvenField, OddField) {
    let ds = sigma.d(1);
    let c = ds.commutator(sigma);
    let z2 = z.mul(z);
    let e2 = eps * eps;
    let flux = z2
        .scale(3.0)
        .axpy(3.0 * lambda, &c)
        .add(&z2.mul(z).scale(2.0 * e2))
        .add(&z.mul(&c).scale(3.0 * lambda * e2));
    let even = flux.d(1);
    let dz = z.d(1);
    let cubic = z2
        .mul_odd(&ds)
        .add(&z.mul(&dz).mul_odd(sigma))
        .add(&c.mul_odd(&ds).scale(lambda));
    let odd = z.mul_odd(sigma).d(1).scale(3.0).axpy(3.0 * e2, &cubic);
    (even, odd)
}

/// `(v_t, η_t)` of the modified system with the Miura-consistent coupling.
pub fn rhs_modified(v: &EvenField, eta: &OddField, lambda: f64) -> Result<(EvenField, OddField), DynamicsError> {
    rhs_modified_with(v, eta, lambda, ModifiedCoupling::MiuraConsistent)
}

pub fn rhs_modified_with(
    v: &EvenField,
    eta: &OddField,
    lambda: f64,
    coupling: ModifiedCoupling,
) -> Result<(EvenField, OddField), DynamicsError> {
    check(v, eta)?;
    Ok(with_dispersion(nonlinear_modified(v, eta, lambda, coupling), v, eta))
}

/// `(u_t, ξ_t)` of the operator-extended system.
pub fn rhs_extended(u: &EvenField, xi: &OddField, lambda: f64) -> Result<(EvenField, OddField), DynamicsError> {
    check(u, xi)?;
    Ok(with_dispersion(nonlinear_extended(u, xi, lambda), u, xi))
}

/// `(u_t, ξ_t)` of the Grassmann SKdV form, using the full odd product.
pub fn rhs_skdv_grassmann(u: &EvenField, xi: &OddField, lambda: f64) -> Result<(EvenField, OddField), DynamicsError> {
    check(u, xi)?;
    let nl = nonlinear_skdv(u, xi, lambda)?;
    Ok(with_dispersion(nl, u, xi))
}

/// `(z_t, σ_t)` of the Gardner system.
pub fn rhs_gardner(
    z: &EvenField,
    sigma: &OddField,
    lambda: f64,
    eps: f64,
) -> Result<(EvenField, OddField), DynamicsError> {
    check(z, sigma)?;
    Ok(with_dispersion(nonlinear_gardner(z, sigma, lambda, eps), z, sigma))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Classical fourth-order Runge–Kutta on the full right-hand side.
    Rk4,
    /// Fourth-order Runge–Kutta in the integrating-factor variables: the
    /// dispersive term is advanced exactly in Fourier space.
    Ifrk4,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Rk4 => "rk4",
            Self::Ifrk4 => "ifrk4",
        })
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rk4" => Ok(Self::Rk4),
            "ifrk4" => Ok(Self::Ifrk4),
            _ => Err(format!("unknown scheme `{s}` (rk4, ifrk4)")),
        }
    }
}

/// Stability constant `C` in `dt ≤ C / k_max³` for rk4; ifrk4 gets `10·C`.
pub const RK4_STABILITY_CONSTANT: f64 = 0.5;

/// Largest admissible step for the given grid and scheme.
pub fn stability_limit(grid: &PeriodicGrid, scheme: Scheme, dealias: bool) -> f64 {
    let k = grid.k_max(dealias);
    let base = RK4_STABILITY_CONSTANT / (k * k * k);
    match scheme {
        Scheme::Rk4 => base,
        Scheme::Ifrk4 => 10.0 * base,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub steps: usize,
    pub scheme: Scheme,
    /// Apply the 2/3-rule filter to every right-hand-side evaluation.
    pub dealias: bool,
    /// Skip the stability guard.
    pub force: bool,
    /// Keep every `record_every`-th state (the initial and final states are always kept).
    pub record_every: usize,
}

impl IntegratorConfig {
    pub fn new(dt: f64, steps: usize, scheme: Scheme) -> Self {
        Self { dt, steps, scheme, dealias: true, force: false, record_every: 1 }
    }

    pub fn record_every(mut self, n: usize) -> Self {
        self.record_every = n.max(1);
        self
    }

    pub fn dealias(mut self, on: bool) -> Self {
        self.dealias = on;
        self
    }

    pub fn force(mut self, on: bool) -> Self {
        self.force = on;
        self
    }
}

/// Recorded states, time-ordered.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<SystemState>,
}

impl Trajectory {
    pub fn last(&self) -> &SystemState {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.time).collect()
    }
}

/// Fourier coefficients of every channel of both sectors.
#[derive(Clone)]
struct Spectra {
    even: Vec<Vec<Complex64>>,
    odd: Vec<Vec<Complex64>>,
}

impl Spectra {
    fn of(grid: &PeriodicGrid, even: &EvenField, odd: &OddField) -> Self {
        Self {
            even: even.channels().iter().map(|c| grid.forward(c)).collect(),
            odd: odd.channels().iter().map(|c| grid.forward(c)).collect(),
        }
    }

    fn map(&self, mut f: impl FnMut(usize, Complex64) -> Complex64) -> Self {
        let mut g = |chs: &Vec<Vec<Complex64>>| {
            chs.iter().map(|c| c.iter().enumerate().map(|(i, z)| f(i, *z)).collect()).collect()
        };
        Self { even: g(&self.even), odd: g(&self.odd) }
    }

    fn zip(&self, other: &Self, f: impl Fn(usize, Complex64, Complex64) -> Complex64) -> Self {
        let g = |a: &Vec<Vec<Complex64>>, b: &Vec<Vec<Complex64>>| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.iter().zip(y).enumerate().map(|(i, (p, q))| f(i, *p, *q)).collect())
                .collect()
        };
        Self { even: g(&self.even, &other.even), odd: g(&self.odd, &other.odd) }
    }

    fn is_finite(&self) -> bool {
        self.even.iter().chain(&self.odd).flatten().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Fixed-step integrator over a [`SystemState`].
pub struct Integrator {
    config: IntegratorConfig,
}

impl Integrator {
    pub fn new(config: IntegratorConfig) -> Self {
        Self { config }
    }

    fn filtered_rhs(&self, state: &SystemState) -> Result<(EvenField, OddField), DynamicsError> {
        let (e, o) = state.rhs()?;
        if self.config.dealias {
            Ok((e.dealiased(), o.dealiased()))
        } else {
            Ok((e, o))
        }
    }

    /// Runs the configured number of steps. `on_step` sees every state,
    /// including the initial one.
    pub fn run(
        &self,
        initial: &SystemState,
        mut on_step: Option<&mut dyn FnMut(&SystemState)>,
    ) -> Result<Trajectory, DynamicsError> {
        let cfg = self.config;
        if !(cfg.dt.is_finite() && cfg.dt > 0.0) {
            return Err(DynamicsError::InvalidStep(cfg.dt));
        }
        let limit = stability_limit(initial.grid(), cfg.scheme, cfg.dealias);
        if !cfg.force && cfg.dt > limit {
            return Err(DynamicsError::Unstable { dt: cfg.dt, limit, scheme: cfg.scheme });
        }
        if !initial.is_finite() {
            return Err(FieldError::NonFinite.into());
        }
        // Validates kind/backend combinations before stepping.
        initial.nonlinear()?;

        let mut states = vec![initial.clone()];
        if let Some(cb) = on_step.as_mut() {
            cb(initial);
        }
        match cfg.scheme {
            Scheme::Rk4 => self.run_rk4(initial, &mut states, on_step)?,
            Scheme::Ifrk4 => self.run_ifrk4(initial, &mut states, on_step)?,
        }
        Ok(Trajectory { states })
    }

    fn keep(&self, step: usize) -> bool {
        step.is_multiple_of(self.config.record_every) || step == self.config.steps
    }

    fn run_rk4(
        &self,
        initial: &SystemState,
        states: &mut Vec<SystemState>,
        mut on_step: Option<&mut dyn FnMut(&SystemState)>,
    ) -> Result<(), DynamicsError> {
        let dt = self.config.dt;
        let mut cur = initial.clone();
        let stage = |base: &SystemState, k: &(EvenField, OddField), h: f64| {
            let mut s = base.clone();
            s.even = base.even.axpy(h, &k.0);
            s.odd = base.odd.axpy(h, &k.1);
            s
        };
        for step in 1..=self.config.steps {
            let k1 = self.filtered_rhs(&cur)?;
            let k2 = self.filtered_rhs(&stage(&cur, &k1, 0.5 * dt))?;
            let k3 = self.filtered_rhs(&stage(&cur, &k2, 0.5 * dt))?;
            let k4 = self.filtered_rhs(&stage(&cur, &k3, dt))?;
            let mut next = cur.clone();
            next.even = cur
                .even
                .axpy(dt / 6.0, &k1.0)
                .axpy(dt / 3.0, &k2.0)
                .axpy(dt / 3.0, &k3.0)
                .axpy(dt / 6.0, &k4.0);
            next.odd = cur
                .odd
                .axpy(dt / 6.0, &k1.1)
                .axpy(dt / 3.0, &k2.1)
                .axpy(dt / 3.0, &k3.1)
                .axpy(dt / 6.0, &k4.1);
            next.time = initial.time + step as f64 * dt;
            if !next.is_finite() {
                return Err(DynamicsError::NonFinite { step, time: next.time, last: Box::new(cur) });
            }
            cur = next;
            if let Some(cb) = on_step.as_mut() {
                cb(&cur);
            }
            if self.keep(step) {
                states.push(cur.clone());
            }
        }
        Ok(())
    }

    fn run_ifrk4(
        &self,
        initial: &SystemState,
        states: &mut Vec<SystemState>,
        mut on_step: Option<&mut dyn FnMut(&SystemState)>,
    ) -> Result<(), DynamicsError> {
        let dt = self.config.dt;
        let grid = initial.grid().clone();
        let n = grid.points();
        // Fourier symbol of −∂ₓ³.
        let lin: Vec<Complex64> = (0..n).map(|i| -grid.derivative_symbol(i, 3)).collect();
        let half: Vec<Complex64> = lin.iter().map(|l| (l * (0.5 * dt)).exp()).collect();
        let full: Vec<Complex64> = lin.iter().map(|l| (l * dt).exp()).collect();

        let to_state = |spectra: &Spectra, time: f64| {
            let mut s = initial.clone();
            s.even = s.even.with_channels(spectra.even.iter().map(|c| grid.inverse(c)).collect());
            s.odd = s.odd.with_channels(spectra.odd.iter().map(|c| grid.inverse(c)).collect());
            s.time = time;
            s
        };
        let dealias = self.config.dealias;
        let nonlinear = |spectra: &Spectra| -> Result<Spectra, DynamicsError> {
            let s = to_state(spectra, 0.0);
            let (e, o) = s.nonlinear()?;
            let mut out = Spectra::of(&grid, &e, &o);
            if dealias {
                for c in out.even.iter_mut().chain(out.odd.iter_mut()) {
                    grid.dealias_spectrum(c);
                }
            }
            Ok(out)
        };

        let mut v = Spectra::of(&grid, &initial.even, &initial.odd);
        for step in 1..=self.config.steps {
            let a = nonlinear(&v)?;
            let b = nonlinear(&v.zip(&a, |i, x, y| half[i] * (x + 0.5 * dt * y)))?;
            let ev = v.map(|i, x| half[i] * x);
            let c = nonlinear(&ev.zip(&b, |_, x, y| x + 0.5 * dt * y))?;
            let d = nonlinear(&v.zip(&c, |i, x, y| full[i] * x + dt * half[i] * y))?;
            let bc = b.zip(&c, |_, x, y| x + y);
            let incr = a.zip(&bc, |i, x, y| full[i] * x + 2.0 * half[i] * y).zip(&d, |_, x, y| x + y);
            let next = v.zip(&incr, |i, x, y| full[i] * x + dt / 6.0 * y);
            let time = initial.time + step as f64 * dt;
            if !next.is_finite() {
                let prev = to_state(&v, time - dt);
                return Err(DynamicsError::NonFinite { step, time, last: Box::new(prev) });
            }
            v = next;
            let want = self.keep(step);
            if want || on_step.is_some() {
                let s = to_state(&v, time);
                if let Some(cb) = on_step.as_mut() {
                    cb(&s);
                }
                if want {
                    states.push(s);
                }
            }
        }
        Ok(())
    }
}

/// Integrates `steps` steps of size `dt`, keeping every state.
pub fn integrate(state: &SystemState, dt: f64, steps: usize, scheme: Scheme) -> Result<Trajectory, DynamicsError> {
    Integrator::new(IntegratorConfig::new(dt, steps, scheme)).run(state, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{Algebra, AlgebraDescriptor};
    use crate::fields::{build_initial_condition, IcProfile};
    use std::f64::consts::PI;

    fn random(desc: AlgebraDescriptor, l: f64, n: usize, seed: u64, amp: f64) -> (EvenField, OddField) {
        let grid = PeriodicGrid::new(l, n).unwrap();
        let alg = Algebra::new(desc);
        let ic = build_initial_condition(&IcProfile::RandomBandlimited { max_mode: 3, amplitude: amp, seed }, &grid, &alg)
            .unwrap();
        (ic.even, ic.odd)
    }

    #[test]
    fn zero_and_constant_states() {
        for desc in [AlgebraDescriptor::Symplectic(1), AlgebraDescriptor::Grassmann(3)] {
            let (e, o) = random(desc, 2.0 * PI, 32, 1, 0.3);
            let (ze, zo) = (e.scale(0.0), o.scale(0.0));
            let (a, b) = rhs_modified(&ze, &zo, 1.0).unwrap();
            assert!(a.is_zero() && b.is_zero());
            let (a, b) = rhs_extended(&ze, &zo, 1.0).unwrap();
            assert!(a.is_zero() && b.is_zero());
            let (a, b) = rhs_gardner(&ze, &zo, 1.0, 0.3).unwrap();
            assert!(a.is_zero() && b.is_zero());
            let c = EvenField::constant(e.grid(), &e.algebra().scalar(2.5));
            let (a, b) = rhs_modified(&c, &zo, 0.7).unwrap();
            assert!(a.max_norm() < 1e-12 && b.max_norm() < 1e-12);
        }
    }

    #[test]
    fn skdv_requires_grassmann() {
        let (e, o) = random(AlgebraDescriptor::Symplectic(1), 2.0 * PI, 32, 1, 0.3);
        assert!(matches!(rhs_skdv_grassmann(&e, &o, 1.0), Err(DynamicsError::NotGrassmann(_))));
        assert!(SystemState::new(SystemKind::SkdvGrassmann, e.clone(), o.clone(), 1.0, 0.0).is_err());
        assert!(matches!(
            SystemState::new(SystemKind::Extended, e, o, 1.0, 0.1),
            Err(DynamicsError::EpsilonOutsideGardner)
        ));
    }

    #[test]
    fn grassmann_extended_matches_skdv() {
        let (e, o) = random(AlgebraDescriptor::Grassmann(4), 2.0 * PI, 64, 3, 0.5);
        let (a1, b1) = rhs_extended(&e, &o, 0.8).unwrap();
        let (a2, b2) = rhs_skdv_grassmann(&e, &o, 0.8).unwrap();
        assert!(a1.distance(&a2) <= 1e-12, "{}", a1.distance(&a2));
        assert!(b1.distance(&b2) <= 1e-12);
    }

    #[test]
    fn couplings_agree_on_grassmann() {
        let (e, o) = random(AlgebraDescriptor::Grassmann(4), 2.0 * PI, 64, 5, 0.5);
        let (a1, b1) = rhs_modified_with(&e, &o, 1.3, ModifiedCoupling::Published).unwrap();
        let (a2, b2) = rhs_modified_with(&e, &o, 1.3, ModifiedCoupling::MiuraConsistent).unwrap();
        assert!(a1.distance(&a2) <= 1e-12 && b1.distance(&b2) <= 1e-12);
        let (t1, t2) = published_cubic_terms(&o, 1.3);
        assert!(t1.max_norm() <= 1e-14 && t2.max_norm() <= 1e-14);
    }

    #[test]
    fn lambda_zero_even_sector_is_kdv() {
        let (e, o) = random(AlgebraDescriptor::Symplectic(2), 2.0 * PI, 64, 7, 0.5);
        let (a, _) = rhs_extended(&e, &o, 0.0).unwrap();
        let zero = o.scale(0.0);
        let (b, _) = rhs_extended(&e, &zero, 0.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gardner_at_zero_eps_is_extended() {
        let (e, o) = random(AlgebraDescriptor::Symplectic(1), 2.0 * PI, 64, 9, 0.5);
        let (a1, b1) = rhs_gardner(&e, &o, -1.0, 0.0).unwrap();
        let (a2, b2) = rhs_extended(&e, &o, -1.0).unwrap();
        assert!(a1.distance(&a2) <= 1e-12 && b1.distance(&b2) <= 1e-12);
    }

    #[test]
    fn scalar_gardner_matches_classical_form() {
        // Independent scalar evaluation of z_t = (−z″ + 3z²)′ + ε²(2z³)′ by
        // expanding the derivative: −z‴ + 6zz′ + 6ε²z²z′.
        let (e, o) = random(AlgebraDescriptor::Scalar, 2.0 * PI, 64, 2, 0.6);
        let eps = 0.4;
        let (zt, _) = rhs_gardner(&e, &o, 1.0, eps).unwrap();
        let grid = e.grid();
        let z = e.channel(0);
        let spectra = grid.forward(z);
        let deriv = |order| {
            let d: Vec<_> = spectra.iter().enumerate().map(|(i, c)| c * grid.derivative_symbol(i, order)).collect();
            grid.inverse(&d)
        };
        let (z1, z3) = (deriv(1), deriv(3));
        for i in 0..64 {
            let expect = -z3[i] + 6.0 * z[i] * z1[i] + 6.0 * eps * eps * z[i] * z[i] * z1[i];
            assert!((zt.channel(0)[i] - expect).abs() < 1e-11);
        }
    }

    #[test]
    fn guard_refuses_large_steps() {
        let (e, o) = random(AlgebraDescriptor::Scalar, 2.0 * PI, 64, 2, 0.6);
        let s = SystemState::new(SystemKind::Extended, e, o, 1.0, 0.0).unwrap();
        let err = integrate(&s, 0.1, 1, Scheme::Rk4).unwrap_err();
        assert!(matches!(err, DynamicsError::Unstable { .. }));
        let limit = stability_limit(s.grid(), Scheme::Rk4, true);
        assert!((stability_limit(s.grid(), Scheme::Ifrk4, true) / limit - 10.0).abs() < 1e-12);
        assert!(integrate(&s, -1.0, 1, Scheme::Rk4).is_err());
    }

    #[test]
    fn blow_up_keeps_last_finite_state() {
        let grid = PeriodicGrid::new(2.0 * PI, 16).unwrap();
        let alg = Algebra::new(AlgebraDescriptor::Scalar);
        let e = EvenField::from_profile(&grid, &alg, 0, |x| 1e150 * x.sin()).unwrap();
        let s = SystemState::new(SystemKind::Extended, e, OddField::zeros(&grid, &alg), 1.0, 0.0).unwrap();
        let cfg = IntegratorConfig::new(0.1, 50, Scheme::Rk4).force(true);
        match Integrator::new(cfg).run(&s, None) {
            Err(DynamicsError::NonFinite { last, .. }) => assert!(last.is_finite()),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn zero_trajectory() {
        let (e, o) = random(AlgebraDescriptor::Grassmann(2), 2.0 * PI, 32, 2, 0.6);
        let s = SystemState::new(SystemKind::Extended, e.scale(0.0), o.scale(0.0), 1.0, 0.0).unwrap();
        for scheme in [Scheme::Rk4, Scheme::Ifrk4] {
            let tr = Integrator::new(IntegratorConfig::new(1e-6, 3, scheme)).run(&s, None).unwrap();
            assert_eq!(tr.states.len(), 4);
            assert!(tr.states.iter().all(|st| st.even.is_zero() && st.odd.is_zero()));
            assert!((tr.last().time - 3e-6).abs() < 1e-18);
        }
    }
}
