//! Miura map, Gardner map and its truncated inverse, supersymmetry variation.

use thiserror::Error;

use crate::algebra::{AlgebraKind, OddValue};
use crate::fields::{EvenField, FieldError, OddField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("inverse Gardner series supports order <= {max}, got {0}", max = MAX_SERIES_ORDER)]
    Order(usize),
    #[error("supersymmetry variation needs a backend with odd elements, got {0}")]
    NoOddSector(String),
    #[error("the Grassmann form of the variation needs a Grassmann backend, got {0}")]
    NotGrassmann(String),
}

/// Highest truncation order of [`inverse_gardner_series`].
pub const MAX_SERIES_ORDER: usize = 8;

/// `u = v′ + v² − λ[η,η′]`, `ξ = η′ + vη`.
pub fn miura(v: &EvenField, eta: &OddField, lambda: f64) -> Result<(EvenField, OddField), TransformError> {
    v.compatible(eta)?;
    let de = eta.d(1);
    let u = v.d(1).add(&v.mul(v)).axpy(-lambda, &eta.commutator(&de));
    let xi = de.add(&v.mul_odd(eta));
    Ok((u, xi))
}

/// `u = z + εz′ + ε²(z² + λ[σ′,σ])`, `ξ = σ + εσ′ + ε²zσ`.
pub fn gardner_map(
    z: &EvenField,
    sigma: &OddField,
    eps: f64,
    lambda: f64,
) -> Result<(EvenField, OddField), TransformError> {
    z.compatible(sigma)?;
    if eps == 0.0 {
        return Ok((z.clone(), sigma.clone()));
    }
    let ds = sigma.d(1);
    let e2 = eps * eps;
    let u = z
        .axpy(eps, &z.d(1))
        .axpy(e2, &z.mul(z).axpy(lambda, &ds.commutator(sigma)));
    let xi = sigma.axpy(eps, &ds).axpy(e2, &z.mul_odd(sigma));
    Ok((u, xi))
}

/// Coefficients `(z_n, σ_n)`, `n = 0..=order`, of the formal inverse of the
/// Gardner map: `z₀ = u`, `σ₀ = ξ`,
/// `z_n = −z′_{n−1} − Σ_{a+b=n−2} (z_a z_b + λ[σ′_a, σ_b])`,
/// `σ_n = −σ′_{n−1} − Σ_{a+b=n−2} z_a σ_b`.
pub fn inverse_gardner_coefficients(
    u: &EvenField,
    xi: &OddField,
    lambda: f64,
    order: usize,
) -> Result<Vec<(EvenField, OddField)>, TransformError> {
    u.compatible(xi)?;
    let mut z: Vec<EvenField> = vec![u.clone()];
    let mut s: Vec<OddField> = vec![xi.clone()];
    let mut ds: Vec<OddField> = vec![xi.d(1)];
    for n in 1..=order {
        let mut zn = z[n - 1].d(1).scale(-1.0);
        let mut sn = ds[n - 1].scale(-1.0);
        for a in 0..n.saturating_sub(1) {
            let b = n - 2 - a;
            zn = zn.sub(&z[a].mul(&z[b])).axpy(-lambda, &ds[a].commutator(&s[b]));
            sn = sn.sub(&z[a].mul_odd(&s[b]));
        }
        ds.push(sn.d(1));
        z.push(zn);
        s.push(sn);
    }
    Ok(z.into_iter().zip(s).collect())
}

/// Truncated inverse Gardner series `Σ_{n≤order} εⁿ (z_n, σ_n)`.
pub fn inverse_gardner_series(
    u: &EvenField,
    xi: &OddField,
    eps: f64,
    lambda: f64,
    order: usize,
) -> Result<(EvenField, OddField), TransformError> {
    if order > MAX_SERIES_ORDER {
        return Err(TransformError::Order(order));
    }
    let coeffs = inverse_gardner_coefficients(u, xi, lambda, order)?;
    let mut z = u.scale(0.0);
    let mut s = xi.scale(0.0);
    // Horner in ε
    for (zn, sn) in coeffs.iter().rev() {
        z = z.scale(eps).add(zn);
        s = s.scale(eps).add(sn);
    }
    Ok((z, s))
}

fn require_odd(u: &EvenField) -> Result<(), TransformError> {
    if u.algebra().odd_dim() == 0 {
        return Err(TransformError::NoOddSector(u.algebra().descriptor().to_string()));
    }
    Ok(())
}

/// Infinitesimal supersymmetry with constant odd parameter:
/// `δu = λ[param, ξ′]`, `δξ = u·param`.
pub fn susy_variation(
    u: &EvenField,
    xi: &OddField,
    lambda: f64,
    param: &OddValue,
) -> Result<(EvenField, OddField), TransformError> {
    u.compatible(xi)?;
    require_odd(u)?;
    let p = OddField::constant(u.grid(), param);
    u.compatible(&p)?;
    let du = p.commutator(&xi.d(1)).scale(lambda);
    let dxi = u.mul_odd(&p);
    Ok((du, dxi))
}

/// Grassmann form of the variation: `δu = 2λ param·ξ′` with the full odd
/// product, `δξ = u·param`.
pub fn susy_variation_grassmann(
    u: &EvenField,
    xi: &OddField,
    lambda: f64,
    param: &OddValue,
) -> Result<(EvenField, OddField), TransformError> {
    u.compatible(xi)?;
    if u.algebra().descriptor().kind() != AlgebraKind::Grassmann {
        return Err(TransformError::NotGrassmann(u.algebra().descriptor().to_string()));
    }
    let p = OddField::constant(u.grid(), param);
    u.compatible(&p)?;
    let du = p.grassmann_mul(&xi.d(1))?.scale(2.0 * lambda);
    let dxi = u.mul_odd(&p);
    Ok((du, dxi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{Algebra, AlgebraDescriptor};
    use crate::fields::{build_initial_condition, IcProfile, PeriodicGrid};
    use std::f64::consts::PI;

    fn fields(desc: AlgebraDescriptor, seed: u64) -> (EvenField, OddField) {
        let grid = PeriodicGrid::new(2.0 * PI, 64).unwrap();
        let alg = Algebra::new(desc);
        let ic = build_initial_condition(&IcProfile::RandomBandlimited { max_mode: 3, amplitude: 0.4, seed }, &grid, &alg)
            .unwrap();
        (ic.even, ic.odd)
    }

    #[test]
    fn miura_of_constants() {
        let (v, eta) = fields(AlgebraDescriptor::Symplectic(1), 1);
        let c = EvenField::constant(v.grid(), &v.algebra().scalar(1.5));
        let zero = eta.scale(0.0);
        let (u, xi) = miura(&c, &zero, 2.0).unwrap();
        assert!(u.distance(&EvenField::constant(v.grid(), &v.algebra().scalar(2.25))) < 1e-12);
        assert!(xi.is_zero());
        let (u, xi) = miura(&v.scale(0.0), &zero, 2.0).unwrap();
        assert!(u.is_zero() && xi.is_zero());
    }

    #[test]
    fn gardner_identity_at_zero_eps() {
        let (z, s) = fields(AlgebraDescriptor::Grassmann(3), 2);
        let (u, xi) = gardner_map(&z, &s, 0.0, 1.0).unwrap();
        assert_eq!(u, z);
        assert_eq!(xi, s);
    }

    #[test]
    fn series_low_orders() {
        let (u, xi) = fields(AlgebraDescriptor::Symplectic(2), 3);
        let lambda = 0.7;
        let c = inverse_gardner_coefficients(&u, &xi, lambda, 2).unwrap();
        assert_eq!(c[0].0, u);
        assert!(c[1].0.distance(&u.d(1).scale(-1.0)) < 1e-12);
        let z2 = u.d(2).sub(&u.mul(&u)).axpy(-lambda, &xi.d(1).commutator(&xi));
        assert!(c[2].0.distance(&z2) < 1e-11);
        let s2 = xi.d(2).sub(&u.mul_odd(&xi));
        assert!(c[2].1.distance(&s2) < 1e-11);
        let (z, s) = inverse_gardner_series(&u, &xi, 0.3, lambda, 0).unwrap();
        assert_eq!((z, s), (u.clone(), xi.clone()));
        assert!(inverse_gardner_series(&u, &xi, 0.3, lambda, 9).is_err());
    }

    #[test]
    fn susy_forms_agree_on_grassmann() {
        let (u, xi) = fields(AlgebraDescriptor::Grassmann(4), 4);
        let alg = u.algebra().clone();
        let param = alg.odd((0..alg.odd_dim()).map(|i| 0.1 * (i as f64 + 1.0)).collect()).unwrap();
        let (a, b) = susy_variation(&u, &xi, 1.3, &param).unwrap();
        let (c, d) = susy_variation_grassmann(&u, &xi, 1.3, &param).unwrap();
        assert!(a.distance(&c) < 1e-13);
        assert_eq!(b, d);
    }

    #[test]
    fn susy_with_zero_xi() {
        let (u, xi) = fields(AlgebraDescriptor::Symplectic(1), 5);
        let param = u.algebra().odd(vec![0.5, -1.0]).unwrap();
        let (du, dxi) = susy_variation(&u, &xi.scale(0.0), 1.0, &param).unwrap();
        assert!(du.is_zero());
        assert_eq!(dxi, u.mul_odd(&OddField::constant(u.grid(), &param)));
        let scalar = fields(AlgebraDescriptor::Scalar, 1);
        let p = scalar.0.algebra().odd_zero();
        assert!(matches!(
            susy_variation(&scalar.0, &scalar.1, 1.0, &p),
            Err(TransformError::NoOddSector(_))
        ));
    }

    #[test]
    fn maps_are_translation_equivariant() {
        let (v, eta) = fields(AlgebraDescriptor::Symplectic(1), 6);
        let (u, xi) = miura(&v, &eta, 0.9).unwrap();
        let (us, xis) = miura(&v.shift(5), &eta.shift(5), 0.9).unwrap();
        assert!(us.distance(&u.shift(5)) < 1e-12 && xis.distance(&xi.shift(5)) < 1e-12);
        let (u, xi) = gardner_map(&v, &eta, 0.2, 0.9).unwrap();
        let (us, xis) = gardner_map(&v.shift(-7), &eta.shift(-7), 0.2, 0.9).unwrap();
        assert!(us.distance(&u.shift(-7)) < 1e-12 && xis.distance(&xi.shift(-7)) < 1e-12);
    }
}
