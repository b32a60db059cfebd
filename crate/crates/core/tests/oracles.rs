//! Closed-form values computed independently of the library.

use opkdv::algebra::{Algebra, AlgebraDescriptor};
use opkdv::dynamics::{rhs_extended, rhs_modified};
use opkdv::fields::{build_initial_condition, EvenField, IcProfile, OddField, PeriodicGrid};
use opkdv::invariants::conserved_quantities;
use opkdv::symbolic::{equal_mod_total_derivative, parse, MonteCarlo};
use opkdv::transforms::miura;

fn soliton(kappa: f64, length: f64, n: usize) -> (PeriodicGrid, EvenField, OddField) {
    let grid = PeriodicGrid::new(length, n).unwrap();
    let ic = build_initial_condition(&IcProfile::Soliton { kappa, x0: length / 2.0 }, &grid, &Algebra::new(AlgebraDescriptor::Scalar))
        .unwrap();
    (grid, ic.even, ic.odd)
}

#[test]
fn soliton_rhs_is_rigid_translation() {
    let (kappa, length) = (0.8, 40.0);
    let (grid, u, xi) = soliton(kappa, length, 512);
    let (ut, _) = rhs_extended(&u, &xi, 1.0).unwrap();
    let c = 4.0 * kappa * kappa;
    let mut worst = 0.0f64;
    for i in 0..grid.points() {
        let y = grid.x(i) - length / 2.0;
        let s = 1.0 / (kappa * y).cosh();
        // u′ of −2κ² sech²(κy)
        let du = 4.0 * kappa.powi(3) * s * s * (kappa * y).tanh();
        worst = worst.max((ut.channel(0)[i] + c * du).abs());
    }
    assert!(worst < 1e-9, "{worst}");
}

#[test]
fn soliton_conserved_values() {
    let kappa: f64 = 1.2;
    let (_, u, xi) = soliton(kappa, 40.0, 512);
    let h = conserved_quantities(&u, &xi, 1.0).unwrap();
    let expect = [
        (h.h0.coords()[0], -4.0 * kappa),
        (h.h2.coords()[0], 16.0 * kappa.powi(3) / 3.0),
        (h.h4.coords()[0], -64.0 * kappa.powi(5) / 5.0),
    ];
    for (got, want) in expect {
        assert!((got - want).abs() < 1e-10 * want.abs(), "{got} vs {want}");
    }
}

#[test]
fn miura_of_constant_is_its_square() {
    let grid = PeriodicGrid::new(5.0, 16).unwrap();
    let alg = Algebra::new(AlgebraDescriptor::Grassmann(2));
    let v = EvenField::constant(&grid, &alg.scalar(1.5));
    let (u, xi) = miura(&v, &OddField::zeros(&grid, &alg), 1.0).unwrap();
    assert!(u.distance(&EvenField::constant(&grid, &alg.scalar(2.25))) < 1e-14);
    assert!(xi.is_zero());
}

#[test]
fn constant_is_a_modified_equilibrium() {
    // v constant, eta zero: nothing moves
    let grid = PeriodicGrid::new(3.0, 16).unwrap();
    let alg = Algebra::new(AlgebraDescriptor::Symplectic(1));
    let v = EvenField::constant(&grid, &alg.scalar(-0.7));
    let (vt, et) = rhs_modified(&v, &OddField::zeros(&grid, &alg), 1.0).unwrap();
    assert!(vt.max_norm() < 1e-14 && et.max_norm() < 1e-14);
}

#[test]
fn integration_by_parts_identities() {
    let mc = MonteCarlo::default();
    // ∫u u″ = −∫u′²; u²u′ is a total derivative
    assert!(equal_mod_total_derivative(&parse("u*u''").unwrap(), &parse("-u'^2").unwrap(), &mc).unwrap().is_equal());
    assert!(!equal_mod_total_derivative(&parse("u^2").unwrap(), &parse("u^3").unwrap(), &mc).unwrap().is_equal());
    assert!(equal_mod_total_derivative(&parse("u^2*u'").unwrap(), &parse("0").unwrap(), &mc).unwrap().is_equal());
}
