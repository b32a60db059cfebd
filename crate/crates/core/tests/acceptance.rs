//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use opkdv::algebra::{validate_algebra, Algebra, AlgebraDescriptor};
use opkdv::checks::{self, RunParams, RATIO_RANGE, ROUND_TRIP_EPS, ROUND_TRIP_ORDER, TRANSPORT_TOL};
use opkdv::dynamics::{published_cubic_terms, rhs_extended, rhs_skdv_grassmann, stability_limit, Integrator, IntegratorConfig};
use opkdv::fields::{build_initial_condition, EvenField, IcProfile, OddField, PeriodicGrid};
use opkdv::invariants::{drift_report, Quantity};
use opkdv::symbolic::{reproduce_eq15, Eq15Status, MonteCarlo};
use opkdv::{exec, Scheme, SystemKind, SystemState};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn within(x: f64, (lo, hi): (f64, f64)) -> bool {
    x >= lo && x <= hi
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fields(algebra: AlgebraDescriptor, length: f64, points: usize, ic: IcProfile) -> (EvenField, OddField) {
    let grid = PeriodicGrid::new(length, points).unwrap();
    let ic = build_initial_condition(&ic, &grid, &Algebra::new(algebra)).unwrap();
    (ic.even, ic.odd)
}

fn run_to_end(state: &SystemState, dt: f64, steps: usize, scheme: Scheme) -> SystemState {
    let cfg = IntegratorConfig::new(dt, steps, scheme).record_every(steps);
    Integrator::new(cfg).run(state, None).unwrap().last().clone()
}

fn c1_algebra() -> Outcome {
    let start = Instant::now();
    let mut cases = vec![(AlgebraDescriptor::Scalar, true)];
    cases.extend((1..=6).map(|n| (AlgebraDescriptor::Grassmann(n), n >= 2)));
    cases.extend((1..=3).map(|n| (AlgebraDescriptor::Symplectic(n), true)));
    let mut wrong = Vec::new();
    for (desc, expect) in cases {
        let r = validate_algebra(desc);
        if r.passed() != expect {
            let why: Vec<_> = r.violations().map(|c| c.axiom.clone()).collect();
            wrong.push(format!("{desc} passed={} expected={expect} {why:?}", r.passed()));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(wrong.is_empty() && secs < 1.0, format!("{secs:.3}s; mismatches: {wrong:?}"))
}

/// Analytic KdV soliton, nearest periodic image.
fn soliton_oracle(kappa: f64, x0: f64, t: f64, x: f64, length: f64) -> f64 {
    let mut y = x - x0 - 4.0 * kappa * kappa * t;
    y -= length * (y / length).round();
    let s = 1.0 / (kappa * y).cosh();
    -2.0 * kappa * kappa * s * s
}

fn self_convergence(state: &SystemState, dt: f64, t_end: f64, scheme: Scheme) -> f64 {
    let steps = (t_end / dt).round() as usize;
    let a = run_to_end(state, dt, steps, scheme);
    let b = run_to_end(state, dt / 2.0, 2 * steps, scheme);
    let c = run_to_end(state, dt / 4.0, 4 * steps, scheme);
    (a.even.distance(&b.even) / b.even.distance(&c.even)).log2()
}

fn c2_soliton() -> Outcome {
    let (kappa, x0, length, n) = (1.0, 15.0, 40.0, 512);
    let (u, xi) = fields(AlgebraDescriptor::Scalar, length, n, IcProfile::Soliton { kappa, x0 });
    let s0 = SystemState::new(SystemKind::Extended, u, xi, 1.0, 0.0).unwrap();
    let end = run_to_end(&s0, 1e-4, 10_000, Scheme::Ifrk4);
    let grid = end.grid().clone();
    let err = (0..n)
        .map(|i| (end.even.channel(0)[i] - soliton_oracle(kappa, x0, end.time, grid.x(i), length)).abs())
        .fold(0.0f64, f64::max);

    // At N = 512 the rk4 time error sits at roundoff inside its stability
    // region, so the orders are measured on a coarser grid.
    let (u, xi) = fields(AlgebraDescriptor::Scalar, length, 128, IcProfile::Soliton { kappa, x0 });
    let coarse = SystemState::new(SystemKind::Extended, u, xi, 1.0, 0.0).unwrap();
    let order = |scheme| self_convergence(&coarse, 0.5 * stability_limit(coarse.grid(), scheme, true), 0.1, scheme);
    let (p_rk4, p_if) = (order(Scheme::Rk4), order(Scheme::Ifrk4));
    let ok = err <= 1e-4 && within(p_rk4, (3.7, 4.3)) && within(p_if, (3.7, 4.3));
    verdict(ok, format!("L∞ error {err:.3e} at t = {:.4}; order rk4 {p_rk4:.3}, ifrk4 {p_if:.3}", end.time))
}

fn c3_conservation() -> Outcome {
    let mut worst = BTreeMap::new();
    let mut ok = true;
    for alg in [AlgebraDescriptor::Symplectic(1), AlgebraDescriptor::Grassmann(4)] {
        for lambda in [-1.0, 1.0] {
            let ic = IcProfile::RandomBandlimited { max_mode: 4, amplitude: 0.5, seed: 3 };
            let (u, xi) = fields(alg, 40.0, 256, ic);
            // independent H0: plain rectangle rule on the unit channel
            let h0_oracle = u.grid().dx() * u.channel(0).iter().sum::<f64>();
            let s0 = SystemState::new(SystemKind::Extended, u, xi, lambda, 0.0).unwrap();
            let traj = Integrator::new(IntegratorConfig::new(1e-3, 1000, Scheme::Ifrk4).record_every(10))
                .run(&s0, None)
                .unwrap();
            let report = drift_report(&traj).unwrap();
            if (report.values[0][0].coords()[0] - h0_oracle).abs() > 1e-12 * h0_oracle.abs().max(1.0) {
                ok = false;
            }
            for (q, d) in report.quantities.iter().zip(&report.drift) {
                let bound = if *q == Quantity::H(0) { 1e-10 } else { 1e-6 };
                ok &= *d <= bound;
                let w = worst.entry(q.to_string()).or_insert(0.0f64);
                *w = w.max(*d);
            }
        }
    }
    let detail = worst.iter().map(|(q, d)| format!("{q} {d:.2e}")).collect::<Vec<_>>().join(", ");
    verdict(ok, format!("worst drift: {detail}"))
}

fn transport_params(alg: AlgebraDescriptor) -> RunParams {
    RunParams { algebra: alg, lambda: 1.0, ..RunParams::default() }
}

const TRANSPORT_ALGEBRAS: [AlgebraDescriptor; 2] = [AlgebraDescriptor::Grassmann(4), AlgebraDescriptor::Symplectic(1)];

fn c4_miura() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for alg in TRANSPORT_ALGEBRAS {
        let o = checks::check_miura(&transport_params(alg)).unwrap();
        ok &= o.passed && o.metrics[0].value <= TRANSPORT_TOL;
        parts.push(format!("{alg} residual {:.2e}", o.metrics[0].value));
    }
    verdict(ok, parts.join(", "))
}

fn c5_gardner() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for alg in TRANSPORT_ALGEBRAS {
        let p = transport_params(alg);
        let (res, _) = checks::gardner_transport_residual(&p, 0.1).unwrap();
        let ratio = checks::gardner_deviation(&p, 0.1).unwrap() / checks::gardner_deviation(&p, 0.05).unwrap();
        ok &= res <= TRANSPORT_TOL && within(ratio, RATIO_RANGE);
        parts.push(format!("{alg} residual {res:.2e} ratio {ratio:.3}"));
    }
    verdict(ok, parts.join(", "))
}

fn c6_round_trip() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for alg in TRANSPORT_ALGEBRAS {
        let (u, xi) = checks::round_trip_fields(alg, 7).unwrap();
        let (_, _, slope) = checks::round_trip_slope(&u, &xi, 1.0, ROUND_TRIP_ORDER, ROUND_TRIP_EPS).unwrap();
        ok &= within(slope, (6.5, 7.5));
        parts.push(format!("{alg} slope {slope:.3}"));
    }
    verdict(ok, parts.join(", "))
}

fn c7_grassmann_equivalence() -> Outcome {
    let (mut rhs_gap, mut cubic, mut square) = (0.0f64, 0.0f64, 0.0f64);
    for seed in 0..4 {
        let ic = IcProfile::RandomBandlimited { max_mode: 6, amplitude: 0.5, seed };
        let (u, xi) = fields(AlgebraDescriptor::Grassmann(4), 40.0, 128, ic);
        for lambda in [-1.0, 0.7] {
            let (a, b) = rhs_skdv_grassmann(&u, &xi, lambda).unwrap();
            let (c, d) = rhs_extended(&u, &xi, lambda).unwrap();
            rhs_gap = rhs_gap.max(a.distance(&c)).max(b.distance(&d));
            let (t1, t2) = published_cubic_terms(&xi, lambda);
            cubic = cubic.max(t1.max_norm()).max(t2.max_norm());
        }
        let c = xi.commutator(&xi.spectral_derivative(1).unwrap());
        square = square.max(c.mul(&c).max_norm());
    }
    let ok = rhs_gap <= 1e-12 && cubic <= 1e-14 && square <= 1e-14;
    verdict(ok, format!("rhs gap {rhs_gap:.2e}, cubic terms {cubic:.2e}, [eta,eta']^2 {square:.2e}"))
}

fn c8_susy() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for alg in [AlgebraDescriptor::Symplectic(1), AlgebraDescriptor::Grassmann(4)] {
        let p = RunParams { algebra: alg, t_end: 0.1, ..RunParams::default() };
        let o = checks::check_susy(&p).unwrap();
        ok &= o.passed;
        parts.push(format!("{alg} ratio {:.3} ({})", o.metrics[0].value, o.notes.join("; ")));
    }
    verdict(ok, parts.join(", "))
}

/// Constants c_n in ∫z_n ≡ c_n ∫H_n, derived by hand from the first
/// Gardner coefficients and frozen here.
const GOLDEN: [(usize, i64); 4] = [(0, 1), (2, -1), (4, 1), (6, -1)];

fn c9_eq15() -> Outcome {
    let start = Instant::now();
    let table = reproduce_eq15(6, &MonteCarlo::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let mut ok = table.passed() && secs < 60.0 && table.trials == 32 && table.tol == 1e-8;
    let constants: BTreeMap<usize, String> =
        table.constants().into_iter().map(|(n, c)| (n, c.to_string())).collect();
    for (n, c) in GOLDEN {
        ok &= constants.get(&n) == Some(&c.to_string());
    }
    for row in &table.rows {
        if row.order % 2 == 1 {
            ok &= row.status == Eq15Status::Trivial;
        }
    }
    verdict(ok, format!("constants {constants:?}, {secs:.2}s"))
}

fn cli(args: &[&str]) -> i32 {
    let (mut o, mut e) = (Vec::new(), Vec::new());
    opkdv::cli::run(std::iter::once("opkdv").chain(args.iter().copied()), &mut o, &mut e)
}

fn snapshot_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn c10_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let dir = |name: &str| tmp.path().join(name);
    let sim = |out: &Path| {
        cli(&[
            "simulate", "--system", "gardner", "--algebra", "grassmann:2", "--gardner-eps", "0.1", "--L", "20",
            "--grid", "64", "--t-end", "0.05", "--ic", "random:max_mode=3,amplitude=0.4", "--seed", "5",
            "--snapshot-every", "10", "--out", out.to_str().unwrap(),
        ])
    };
    let mut codes = vec![sim(&dir("a")), sim(&dir("b"))];
    exec::set_execution(exec::Execution::Sequential);
    codes.push(sim(&dir("seq")));
    exec::set_execution(exec::Execution::Parallel);

    // rerun from the recorded manifest
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir("a").join("manifest.json")).unwrap()).unwrap();
    let cfg_path = dir("config.json");
    std::fs::write(&cfg_path, manifest["config"].to_string()).unwrap();
    codes.push(cli(&["simulate", "--config", cfg_path.to_str().unwrap(), "--out", dir("m").to_str().unwrap()]));

    for d in ["c1", "c2"] {
        codes.push(cli(&["check", "gardner", "--algebra", "grassmann:2", "--t-end", "0.05", "--out", dir(d).to_str().unwrap()]));
    }
    let a = snapshot_dir(&dir("a"));
    let same = ["b", "seq", "m"].iter().all(|d| snapshot_dir(&dir(d)) == a)
        && snapshot_dir(&dir("c1")) == snapshot_dir(&dir("c2"));
    let ok = same && codes.iter().all(|&c| c == 0) && a.len() >= 4;
    verdict(ok, format!("{} simulate files compared, exit codes {codes:?}", a.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("algebra axioms", c1_algebra),
        ("KdV soliton benchmark", c2_soliton),
        ("conservation of H0..H6", c3_conservation),
        ("Miura transport", c4_miura),
        ("Gardner transport", c5_gardner),
        ("inverse Gardner round trip", c6_round_trip),
        ("Grassmann/extended equivalence", c7_grassmann_equivalence),
        ("supersymmetry flow commutation", c8_susy),
        ("conserved-density table (eq15)", c9_eq15),
        ("determinism", c10_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let r = f();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match &r {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        failed += r.is_err() as usize;
        println!("criterion {:>2} {tag} {name} [{secs:.1}s]: {detail}", i + 1);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
