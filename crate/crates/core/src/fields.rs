//! Algebra-valued fields on a periodic grid, with Fourier differentiation and
//! trapezoid quadrature.
//!
//! A field stores one real sample array per algebra coordinate ("channel").
//! Differentiation and filtering act channel by channel; algebra products act
//! pointwise through the backend's structure-constant tables.

use std::f64::consts::PI;
use std::fmt;
use std::marker::PhantomData;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::algebra::{Algebra, AlgebraError, EvenValue, OddValue, Term};
use crate::exec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("field shape: {0}")]
    Shape(String),
    #[error("non-finite sample in field")]
    NonFinite,
    #[error("invalid initial condition `{0}`")]
    InitialCondition(String),
}

struct SpectralPlan {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Angular wavenumber of each FFT bin.
    wavenumbers: Vec<f64>,
}

/// Uniform periodic grid on `[0, L)` with `N` points, `N` a power of two ≥ 16.
#[derive(Clone)]
pub struct PeriodicGrid {
    length: f64,
    points: usize,
    plan: Arc<SpectralPlan>,
}

impl fmt::Debug for PeriodicGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeriodicGrid")
            .field("length", &self.length)
            .field("points", &self.points)
            .finish()
    }
}

impl PartialEq for PeriodicGrid {
    fn eq(&self, other: &Self) -> bool {
        self.length == other.length && self.points == other.points
    }
}

impl PeriodicGrid {
    pub fn new(length: f64, points: usize) -> Result<Self, FieldError> {
        if !(length.is_finite() && length > 0.0) {
            return Err(FieldError::Grid(format!("length must be positive, got {length}")));
        }
        if points < 16 || !points.is_power_of_two() {
            return Err(FieldError::Grid(format!("points must be a power of two >= 16, got {points}")));
        }
        let mut planner = FftPlanner::new();
        let n = points as i64;
        let wavenumbers = (0..n)
            .map(|i| {
                let m = if i < n / 2 { i } else { i - n };
                2.0 * PI * m as f64 / length
            })
            .collect();
        let plan = SpectralPlan {
            forward: planner.plan_fft_forward(points),
            inverse: planner.plan_fft_inverse(points),
            wavenumbers,
        };
        Ok(Self { length, points, plan: Arc::new(plan) })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn dx(&self) -> f64 {
        self.length / self.points as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.x(i)).collect()
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.plan.wavenumbers
    }

    /// Highest mode index kept by the 2/3-rule filter.
    pub fn dealias_cutoff(&self) -> usize {
        self.points / 3
    }

    /// Largest angular wavenumber that the evolution actually advances.
    pub fn k_max(&self, dealias: bool) -> f64 {
        let m = if dealias { self.dealias_cutoff() } else { self.points / 2 };
        2.0 * PI * m as f64 / self.length
    }

    pub fn forward(&self, samples: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.plan.forward.process(&mut buf);
        buf
    }

    /// Inverse transform, normalized, real part.
    pub fn inverse(&self, spectrum: &[Complex64]) -> Vec<f64> {
        let mut buf = spectrum.to_vec();
        self.plan.inverse.process(&mut buf);
        let scale = 1.0 / self.points as f64;
        buf.into_iter().map(|c| c.re * scale).collect()
    }

    /// Fourier symbol of `∂ₓ^order` at bin `i` (Nyquist zeroed for odd orders).
    pub fn derivative_symbol(&self, i: usize, order: u32) -> Complex64 {
        if order == 0 {
            return Complex64::new(1.0, 0.0);
        }
        if order % 2 == 1 && i == self.points / 2 {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::new(0.0, self.plan.wavenumbers[i]).powu(order)
    }

    fn derivatives_of(&self, samples: &[f64], orders: &[u32]) -> Vec<Vec<f64>> {
        let coeffs = self.forward(samples);
        orders
            .iter()
            .map(|&order| {
                if order == 0 {
                    return samples.to_vec();
                }
                let d: Vec<Complex64> = coeffs
                    .iter()
                    .enumerate()
                    .map(|(i, c)| c * self.derivative_symbol(i, order))
                    .collect();
                self.inverse(&d)
            })
            .collect()
    }

    pub(crate) fn dealias_spectrum(&self, coeffs: &mut [Complex64]) {
        let cut = self.dealias_cutoff() as i64;
        let n = self.points as i64;
        for (i, c) in coeffs.iter_mut().enumerate() {
            let i = i as i64;
            let m = if i < n / 2 { i } else { i - n };
            if m.abs() > cut {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }

    fn dealias_samples(&self, samples: &[f64]) -> Vec<f64> {
        let mut coeffs = self.forward(samples);
        self.dealias_spectrum(&mut coeffs);
        self.inverse(&coeffs)
    }
}

/// Grade marker for a field.
pub trait Grade: Clone + fmt::Debug + Send + Sync + 'static {
    const NAME: &'static str;
    fn dim(algebra: &Algebra) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Even;
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Odd;

impl Grade for Even {
    const NAME: &'static str = "even";
    fn dim(algebra: &Algebra) -> usize {
        algebra.even_dim()
    }
}

impl Grade for Odd {
    const NAME: &'static str = "odd";
    fn dim(algebra: &Algebra) -> usize {
        algebra.odd_dim()
    }
}

/// Periodic-grid sampling of a `P`- or `Q`-valued function of x.
#[derive(Clone)]
pub struct Field<K: Grade> {
    grid: PeriodicGrid,
    algebra: Algebra,
    channels: Vec<Vec<f64>>,
    _grade: PhantomData<K>,
}

pub type EvenField = Field<Even>;
pub type OddField = Field<Odd>;

impl<K: Grade> fmt::Debug for Field<K> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct(&format!("{}Field", K::NAME))
            .field("grid", &self.grid)
            .field("algebra", &self.algebra.descriptor())
            .field("channels", &self.channels.len())
            .finish()
    }
}

impl<K: Grade> PartialEq for Field<K> {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.algebra == other.algebra && self.channels == other.channels
    }
}

fn product<A: Grade, B: Grade, C: Grade>(
    terms: &[Term],
    a: &Field<A>,
    b: &Field<B>,
) -> Field<C> {
    assert!(a.grid == b.grid, "product of fields on different grids");
    assert!(a.algebra == b.algebra, "product of fields over different algebras");
    let dim = C::dim(&a.algebra);
    let n = a.grid.points;
    let channels = exec::map_indexed(dim, n * terms.len(), |out| {
        let mut acc = vec![0.0; n];
        for t in terms.iter().filter(|t| t.out == out) {
            let (x, y) = (&a.channels[t.lhs], &b.channels[t.rhs]);
            for ((r, xi), yi) in acc.iter_mut().zip(x).zip(y) {
                *r += t.coeff * xi * yi;
            }
        }
        acc
    });
    Field { grid: a.grid.clone(), algebra: a.algebra.clone(), channels, _grade: PhantomData }
}

impl<K: Grade> Field<K> {
    pub fn zeros(grid: &PeriodicGrid, algebra: &Algebra) -> Self {
        let channels = vec![vec![0.0; grid.points]; K::dim(algebra)];
        Self { grid: grid.clone(), algebra: algebra.clone(), channels, _grade: PhantomData }
    }

    pub fn from_channels(
        grid: &PeriodicGrid,
        algebra: &Algebra,
        channels: Vec<Vec<f64>>,
    ) -> Result<Self, FieldError> {
        if channels.len() != K::dim(algebra) {
            return Err(FieldError::Shape(format!(
                "{} field over {} needs {} channels, got {}",
                K::NAME,
                algebra.descriptor(),
                K::dim(algebra),
                channels.len()
            )));
        }
        if channels.iter().any(|c| c.len() != grid.points) {
            return Err(FieldError::Shape(format!("every channel needs {} samples", grid.points)));
        }
        Ok(Self { grid: grid.clone(), algebra: algebra.clone(), channels, _grade: PhantomData })
    }

    /// Field with `profile(x)` on channel `channel` and zeros elsewhere.
    pub fn from_profile(
        grid: &PeriodicGrid,
        algebra: &Algebra,
        channel: usize,
        profile: impl Fn(f64) -> f64,
    ) -> Result<Self, FieldError> {
        let mut f = Self::zeros(grid, algebra);
        let slot = f
            .channels
            .get_mut(channel)
            .ok_or_else(|| FieldError::Shape(format!("no {} channel {channel}", K::NAME)))?;
        for (i, s) in slot.iter_mut().enumerate() {
            *s = profile(grid.x(i));
        }
        Ok(f)
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn algebra(&self) -> &Algebra {
        &self.algebra
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    pub(crate) fn with_channels(&self, channels: Vec<Vec<f64>>) -> Self {
        debug_assert_eq!(channels.len(), self.channels.len());
        Self { grid: self.grid.clone(), algebra: self.algebra.clone(), channels, _grade: PhantomData }
    }

    pub fn compatible<L: Grade>(&self, other: &Field<L>) -> Result<(), FieldError> {
        if self.grid != other.grid {
            return Err(FieldError::GridMismatch);
        }
        if self.algebra != other.algebra {
            return Err(AlgebraError::Mismatch(self.algebra.descriptor(), other.algebra.descriptor()).into());
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.channels.iter().flatten().all(|x| x.is_finite())
    }

    /// Max-abs over all samples and channels.
    pub fn max_norm(&self) -> f64 {
        self.channels.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.channels.iter().flatten().all(|x| *x == 0.0)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert!(self.grid == other.grid && self.algebra == other.algebra, "incompatible fields");
        let channels = self
            .channels
            .iter()
            .zip(&other.channels)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect())
            .collect();
        self.with_channels(channels)
    }

    /// Panics on grid/algebra mismatch (as do the other arithmetic helpers).
    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.with_channels(self.channels.iter().map(|c| c.iter().map(|x| x * s).collect()).collect())
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + s * b)
    }

    /// Max-abs of `self − other`.
    pub fn distance(&self, other: &Self) -> f64 {
        self.sub(other).max_norm()
    }

    /// Cyclic shift: `out[i] = self[i − m]`.
    pub fn shift(&self, m: isize) -> Self {
        let n = self.grid.points as isize;
        let channels = self
            .channels
            .iter()
            .map(|c| (0..n).map(|i| c[(i - m).rem_euclid(n) as usize]).collect())
            .collect();
        self.with_channels(channels)
    }

    pub(crate) fn derivatives(&self, orders: &[u32]) -> Vec<Self> {
        let per_channel = exec::map_indexed(self.channels.len(), self.channels.len() * self.grid.points, |c| {
            self.grid.derivatives_of(&self.channels[c], orders)
        });
        (0..orders.len())
            .map(|k| self.with_channels(per_channel.iter().map(|d| d[k].clone()).collect()))
            .collect()
    }

    pub(crate) fn d(&self, order: u32) -> Self {
        self.derivatives(&[order]).pop().unwrap()
    }

    /// `∂ₓ^order`, channel by channel, by Fourier multiplication.
    pub fn spectral_derivative(&self, order: u32) -> Result<Self, FieldError> {
        if !self.is_finite() {
            return Err(FieldError::NonFinite);
        }
        Ok(self.d(order))
    }

    /// 2/3-rule low-pass filter.
    pub fn dealiased(&self) -> Self {
        let channels = exec::map_indexed(self.channels.len(), self.channels.len() * self.grid.points, |c| {
            self.grid.dealias_samples(&self.channels[c])
        });
        self.with_channels(channels)
    }

    /// `dx · Σ samples` per channel.
    pub fn integral_coords(&self) -> Vec<f64> {
        let dx = self.grid.dx();
        self.channels.iter().map(|c| dx * c.iter().sum::<f64>()).collect()
    }
}

impl EvenField {
    pub fn sample(&self, i: usize) -> EvenValue {
        self.algebra.even(self.channels.iter().map(|c| c[i]).collect()).unwrap()
    }

    /// Constant field equal to `value` everywhere.
    pub fn constant(grid: &PeriodicGrid, value: &EvenValue) -> Self {
        let algebra = Algebra::new(value.descriptor());
        let channels = value.coords().iter().map(|&c| vec![c; grid.points]).collect();
        Self { grid: grid.clone(), algebra, channels, _grade: PhantomData }
    }

    /// Pointwise even·even product.
    pub fn mul(&self, other: &EvenField) -> EvenField {
        product(self.algebra.even_even_terms(), self, other)
    }

    /// Pointwise even·odd product.
    pub fn mul_odd(&self, q: &OddField) -> OddField {
        product(self.algebra.even_odd_terms(), self, q)
    }

    /// Multiplies by a constant even value.
    pub fn mul_value(&self, a: &EvenValue) -> EvenField {
        self.mul(&EvenField::constant(&self.grid, a))
    }

    /// `∫ f dx` over one period.
    pub fn quadrature(&self) -> EvenValue {
        self.algebra.even(self.integral_coords()).unwrap()
    }
}

impl OddField {
    pub fn sample(&self, i: usize) -> OddValue {
        self.algebra.odd(self.channels.iter().map(|c| c[i]).collect()).unwrap()
    }

    pub fn constant(grid: &PeriodicGrid, value: &OddValue) -> Self {
        let algebra = Algebra::new(value.descriptor());
        let channels = value.coords().iter().map(|&c| vec![c; grid.points]).collect();
        Self { grid: grid.clone(), algebra, channels, _grade: PhantomData }
    }

    /// Pointwise `[self, other]`.
    pub fn commutator(&self, other: &OddField) -> EvenField {
        product(self.algebra.commutator_terms(), self, other)
    }

    /// Pointwise full Grassmann product `self·other`.
    pub fn grassmann_mul(&self, other: &OddField) -> Result<EvenField, FieldError> {
        let terms = self.algebra.odd_odd_terms()?;
        Ok(product(terms, self, other))
    }

    /// Pointwise `self·a` for a constant even `a`.
    pub fn mul_value(&self, a: &EvenValue) -> OddField {
        EvenField::constant(&self.grid, a).mul_odd(self)
    }
}

/// Which sector and coordinate a profile goes to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelRef {
    Even(usize),
    Odd(usize),
}

impl fmt::Display for ChannelRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Even(i) => write!(f, "even:{i}"),
            Self::Odd(i) => write!(f, "odd:{i}"),
        }
    }
}

impl FromStr for ChannelRef {
    type Err = FieldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || FieldError::InitialCondition(format!("bad channel `{s}` (use even:K or odd:K)"));
        let (sector, idx) = s.split_once(':').ok_or_else(err)?;
        let idx = idx.parse().map_err(|_| err())?;
        match sector {
            "even" => Ok(Self::Even(idx)),
            "odd" => Ok(Self::Odd(idx)),
            _ => Err(err()),
        }
    }
}

/// Initial-condition recipe.
#[derive(Debug, Clone, PartialEq)]
pub enum IcProfile {
    Zero,
    /// `u = −2κ² sech²(κ(x − x₀))` on the unit channel, zero odd field.
    Soliton { kappa: f64, x0: f64 },
    /// Periodized Gaussian bump on one coordinate channel.
    Gaussian { amplitude: f64, width: f64, center: f64, channel: ChannelRef },
    /// Random Fourier modes `0..=max_mode` on every even and odd channel,
    /// each channel rescaled to max-abs `amplitude`.
    RandomBandlimited { max_mode: usize, amplitude: f64, seed: u64 },
}

impl fmt::Display for IcProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "zero"),
            Self::Soliton { kappa, x0 } => write!(f, "soliton:kappa={kappa},x0={x0}"),
            Self::Gaussian { amplitude, width, center, channel } => write!(
                f,
                "gaussian:amplitude={amplitude},width={width},center={center},channel={channel}"
            ),
            Self::RandomBandlimited { max_mode, amplitude, seed } => {
                write!(f, "random:max_mode={max_mode},amplitude={amplitude},seed={seed}")
            }
        }
    }
}

impl FromStr for IcProfile {
    type Err = FieldError;

    /// `zero`, `soliton:kappa=1,x0=20`, `gaussian:amplitude=..,width=..,center=..,channel=odd:0`,
    /// `random:max_mode=4,amplitude=0.5[,seed=7]`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |why: &str| FieldError::InitialCondition(format!("{s}: {why}"));
        let (kind, args) = s.trim().split_once(':').unwrap_or((s.trim(), ""));
        let mut kv = std::collections::BTreeMap::new();
        for part in args.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let num = |key: &str, default: Option<f64>| -> Result<f64, FieldError> {
            match kv.get(key) {
                Some(v) => v.parse().map_err(|_| bad(&format!("`{key}` is not a number"))),
                None => default.ok_or_else(|| bad(&format!("missing `{key}`"))),
            }
        };
        let profile = match kind {
            "zero" => Self::Zero,
            "soliton" => Self::Soliton { kappa: num("kappa", Some(1.0))?, x0: num("x0", None)? },
            "gaussian" => Self::Gaussian {
                amplitude: num("amplitude", None)?,
                width: num("width", None)?,
                center: num("center", None)?,
                channel: kv.get("channel").map(|c| c.parse()).transpose()?.unwrap_or(ChannelRef::Even(0)),
            },
            "random" => Self::RandomBandlimited {
                max_mode: num("max_mode", None)? as usize,
                amplitude: num("amplitude", None)?,
                seed: num("seed", Some(0.0))? as u64,
            },
            _ => return Err(bad("unknown kind")),
        };
        Ok(profile)
    }
}

/// Fields produced by [`build_initial_condition`], with any warnings raised.
#[derive(Debug, Clone)]
pub struct InitialCondition {
    pub even: EvenField,
    pub odd: OddField,
    pub warnings: Vec<String>,
}

fn random_channel(grid: &PeriodicGrid, rng: &mut ChaCha8Rng, max_mode: usize, amplitude: f64) -> Vec<f64> {
    let coeffs: Vec<(f64, f64)> = (0..=max_mode)
        .map(|m| {
            let a = rng.gen_range(-1.0..1.0);
            let b = if m == 0 { 0.0 } else { rng.gen_range(-1.0..1.0) };
            (a, b)
        })
        .collect();
    let raw: Vec<f64> = (0..grid.points)
        .map(|i| {
            let x = grid.x(i);
            coeffs
                .iter()
                .enumerate()
                .map(|(m, (a, b))| {
                    let th = 2.0 * PI * m as f64 * x / grid.length;
                    a * th.cos() + b * th.sin()
                })
                .sum()
        })
        .collect();
    let peak = raw.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak == 0.0 {
        return raw;
    }
    raw.into_iter().map(|x| amplitude * x / peak).collect()
}

pub fn build_initial_condition(
    profile: &IcProfile,
    grid: &PeriodicGrid,
    algebra: &Algebra,
) -> Result<InitialCondition, FieldError> {
    let mut even = EvenField::zeros(grid, algebra);
    let mut odd = OddField::zeros(grid, algebra);
    let mut warnings = Vec::new();
    match *profile {
        IcProfile::Zero => {}
        IcProfile::Soliton { kappa, x0 } => {
            if !(kappa.is_finite() && kappa > 0.0) {
                return Err(FieldError::InitialCondition(format!("kappa must be positive, got {kappa}")));
            }
            let tail = 1.0 / (kappa * grid.length / 2.0).cosh().powi(2);
            if tail > 1e-10 {
                warnings.push(format!(
                    "soliton tail sech²(κL/2) = {tail:.3e} exceeds 1e-10; periodic box too small"
                ));
            }
            even = EvenField::from_profile(grid, algebra, 0, |x| soliton_profile(kappa, x - x0, grid.length))?;
        }
        IcProfile::Gaussian { amplitude, width, center, channel } => {
            if !(width.is_finite() && width > 0.0) {
                return Err(FieldError::InitialCondition(format!("width must be positive, got {width}")));
            }
            let l = grid.length;
            let bump = move |x: f64| {
                (-3..=3)
                    .map(|j| {
                        let y = (x - center - j as f64 * l) / width;
                        (-y * y).exp()
                    })
                    .sum::<f64>()
                    * amplitude
            };
            match channel {
                ChannelRef::Even(c) => even = EvenField::from_profile(grid, algebra, c, bump)?,
                ChannelRef::Odd(c) => odd = OddField::from_profile(grid, algebra, c, bump)?,
            }
        }
        IcProfile::RandomBandlimited { max_mode, amplitude, seed } => {
            if max_mode >= grid.dealias_cutoff() {
                return Err(FieldError::InitialCondition(format!(
                    "max_mode {max_mode} not below the dealiasing cutoff {}",
                    grid.dealias_cutoff()
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e = (0..algebra.even_dim()).map(|_| random_channel(grid, &mut rng, max_mode, amplitude)).collect();
            let o = (0..algebra.odd_dim()).map(|_| random_channel(grid, &mut rng, max_mode, amplitude)).collect();
            even = EvenField::from_channels(grid, algebra, e)?;
            odd = OddField::from_channels(grid, algebra, o)?;
        }
    }
    Ok(InitialCondition { even, odd, warnings })
}

/// `−2κ² sech²(κ y)` with `y` wrapped to the nearest periodic image.
pub fn soliton_profile(kappa: f64, y: f64, length: f64) -> f64 {
    let y = y - length * (y / length).round();
    -2.0 * kappa * kappa / (kappa * y).cosh().powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::AlgebraDescriptor;

    fn scalar() -> Algebra {
        Algebra::new(AlgebraDescriptor::Scalar)
    }

    #[test]
    fn grid_validation() {
        assert!(PeriodicGrid::new(1.0, 8).is_err());
        assert!(PeriodicGrid::new(1.0, 48).is_err());
        assert!(PeriodicGrid::new(0.0, 64).is_err());
        let g = PeriodicGrid::new(3.0, 64).unwrap();
        assert!((g.dx() * 64.0 - 3.0).abs() < 1e-15);
    }

    #[test]
    fn sine_derivative_is_exact() {
        let l = 7.0;
        let g = PeriodicGrid::new(l, 64).unwrap();
        let w = 2.0 * PI / l;
        let f = EvenField::from_profile(&g, &scalar(), 0, |x| (w * x).sin()).unwrap();
        let df = f.spectral_derivative(1).unwrap();
        let err = (0..64).map(|i| (df.channel(0)[i] - w * (w * g.x(i)).cos()).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-10, "{err}");
    }

    #[test]
    fn constant_derivative_vanishes() {
        let g = PeriodicGrid::new(2.0, 32).unwrap();
        let f = EvenField::from_profile(&g, &scalar(), 0, |_| 3.5).unwrap();
        assert!(f.spectral_derivative(1).unwrap().max_norm() < 1e-13);
        assert!(f.spectral_derivative(3).unwrap().max_norm() < 1e-13);
    }

    #[test]
    fn odd_channel_derivative_matches_scalar_case() {
        let l = 2.0 * PI;
        let g = PeriodicGrid::new(l, 32).unwrap();
        let alg = Algebra::new(AlgebraDescriptor::Grassmann(2));
        // odd basis of grassmann(2): t1 (mask 01), t2 (mask 10)
        let q = OddField::from_profile(&g, &alg, 0, |x| x.sin()).unwrap();
        let dq = q.spectral_derivative(1).unwrap();
        for i in 0..32 {
            assert!((dq.channel(0)[i] - g.x(i).cos()).abs() < 1e-12);
            assert_eq!(dq.channel(1)[i], 0.0);
        }
    }

    #[test]
    fn non_finite_is_rejected() {
        let g = PeriodicGrid::new(1.0, 16).unwrap();
        let f = EvenField::from_profile(&g, &scalar(), 0, |x| if x > 0.5 { f64::NAN } else { 0.0 }).unwrap();
        assert_eq!(f.spectral_derivative(1), Err(FieldError::NonFinite));
    }

    #[test]
    fn quadrature_examples() {
        let l = 2.0 * PI;
        let g = PeriodicGrid::new(l, 64).unwrap();
        let s = EvenField::from_profile(&g, &scalar(), 0, |x| x.sin()).unwrap();
        assert!(s.quadrature().norm() <= 1e-12);
        let c = EvenField::from_profile(&g, &scalar(), 0, |_| 1.5).unwrap();
        assert!((c.quadrature().coords()[0] - 2.0 * PI * 1.5).abs() < 1e-12);
        let smooth = EvenField::from_profile(&g, &scalar(), 0, |x| (x.sin()).exp()).unwrap();
        assert!(smooth.spectral_derivative(1).unwrap().quadrature().norm() <= 1e-10);
    }

    #[test]
    fn soliton_ic() {
        let g = PeriodicGrid::new(40.0, 512).unwrap();
        let ic = build_initial_condition(&IcProfile::Soliton { kappa: 1.0, x0: 20.0 }, &g, &scalar()).unwrap();
        let min = ic.even.channel(0).iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((min + 2.0).abs() < 1e-12);
        assert!(ic.warnings.is_empty());
        let small = PeriodicGrid::new(8.0, 64).unwrap();
        let ic = build_initial_condition(&IcProfile::Soliton { kappa: 1.0, x0: 4.0 }, &small, &scalar()).unwrap();
        assert_eq!(ic.warnings.len(), 1);
    }

    #[test]
    fn random_ic_is_seeded() {
        let g = PeriodicGrid::new(10.0, 64).unwrap();
        let alg = Algebra::new(AlgebraDescriptor::Symplectic(1));
        let profile = IcProfile::RandomBandlimited { max_mode: 4, amplitude: 0.5, seed: 11 };
        let a = build_initial_condition(&profile, &g, &alg).unwrap();
        let b = build_initial_condition(&profile, &g, &alg).unwrap();
        assert_eq!(a.even, b.even);
        assert_eq!(a.odd, b.odd);
        assert!((a.odd.max_norm() - 0.5).abs() < 1e-12);
        let other = IcProfile::RandomBandlimited { max_mode: 4, amplitude: 0.5, seed: 12 };
        assert_ne!(build_initial_condition(&other, &g, &alg).unwrap().even, a.even);
    }

    #[test]
    fn zero_gaussian() {
        let g = PeriodicGrid::new(10.0, 64).unwrap();
        let alg = Algebra::new(AlgebraDescriptor::Grassmann(2));
        let profile = IcProfile::Gaussian { amplitude: 0.0, width: 1.0, center: 5.0, channel: ChannelRef::Odd(1) };
        let ic = build_initial_condition(&profile, &g, &alg).unwrap();
        assert!(ic.even.is_zero() && ic.odd.is_zero());
    }

    #[test]
    fn ic_spec_strings() {
        for s in [
            "zero",
            "soliton:kappa=1,x0=20",
            "gaussian:amplitude=1,width=2,center=3,channel=odd:1",
            "random:max_mode=4,amplitude=0.5,seed=9",
        ] {
            let profile: IcProfile = s.parse().unwrap();
            assert_eq!(profile.to_string(), s);
        }
        assert!("wave:x=1".parse::<IcProfile>().is_err());
        assert!("soliton:kappa=1".parse::<IcProfile>().is_err());
    }

    #[test]
    fn dealias_removes_top_third() {
        let g = PeriodicGrid::new(2.0 * PI, 32).unwrap();
        let f = EvenField::from_profile(&g, &scalar(), 0, |x| x.cos() + (12.0 * x).cos()).unwrap();
        let d = f.dealiased();
        for i in 0..32 {
            assert!((d.channel(0)[i] - g.x(i).cos()).abs() < 1e-12);
        }
    }
}
