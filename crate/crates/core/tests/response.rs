use inertia_core::netmodel::{build_base_system, load_case};
use inertia_core::response::{
    find_overshoot, find_rocof, residues, search_grid, simulate_oracle, simulate_system, step_response, ExtremumKind,
};
use inertia_core::spectral::eigensolve;
use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

fn random_system(seed: u64) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=30usize);
    let (m, d) = (rng.random_range(1..=3usize), rng.random_range(1..=3usize));
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0) / (n as f64).sqrt());
    let shift = a.complex_eigenvalues().iter().map(|l| l.re).fold(f64::MIN, f64::max);
    let a = a - DMatrix::identity(n, n) * (shift + rng.random_range(0.1..0.5));
    let b = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
    let c = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    (a, b, c)
}

#[test]
fn modal_response_matches_integration() {
    for seed in 0..20 {
        let (a, b, c) = random_system(seed);
        let res = residues(&eigensolve(&a).unwrap(), &b, &c).unwrap();
        let oracle = simulate_oracle(&a, &b, &c, 20.0, 1e-13).unwrap();
        for k in 0..=100 {
            let t = 0.2 * k as f64;
            let tm = DMatrix::from_element(c.nrows(), b.ncols(), t);
            let (y, dy, ddy) = oracle.sample(t);
            for (n, reference) in [(0, &y), (1, &dy), (2, &ddy)] {
                let modal = step_response(&res, &tm, n).unwrap();
                let err = (&modal - reference).amax();
                assert!(err < 1e-8, "seed {seed} t {t} n {n}: {err}");
            }
        }
    }
}

#[test]
fn initial_values_follow_from_b_and_c() {
    let (a, b, c) = random_system(42);
    let res = residues(&eigensolve(&a).unwrap(), &b, &c).unwrap();
    let zero = DMatrix::zeros(c.nrows(), b.ncols());
    assert_eq!(step_response(&res, &zero, 0).unwrap().amax(), 0.0);
    let cb = &c * &b;
    let dy0 = step_response(&res, &zero, 1).unwrap();
    assert!((&dy0 - &cb).amax() < 1e-10 * cb.amax());
}

fn three_machine() -> inertia_core::netmodel::PowerSystemCase {
    load_case(
        &json!({
            "nominal_frequency_hz": 50.0,
            "buses": [{"id": 1}, {"id": 2}, {"id": 3}, {"id": 4}],
            "lines": [
                {"from": 1, "to": 2, "susceptance": 6.0},
                {"from": 2, "to": 3, "susceptance": 4.0},
                {"from": 3, "to": 4, "susceptance": 7.0},
                {"from": 4, "to": 1, "susceptance": 3.0}
            ],
            "generators": [
                {"bus": 1, "inertia": 5.0, "damping": 1.5},
                {"bus": 2, "inertia": 3.0, "damping": 1.0},
                {"bus": 3, "inertia": 7.0, "damping": 2.0}
            ],
            "loads": [{"bus": 4, "power": 3.0}],
            "disturbances": [{"bus": 4, "magnitude": -0.15}, {"bus": 2, "magnitude": 0.1}],
            "outputs": [1, 2, 3, 4]
        })
        .to_string(),
    )
    .unwrap()
}

#[test]
fn extrema_dominate_dense_oracle_scan() {
    let sys = build_base_system(&three_machine()).unwrap();
    let res = residues(&eigensolve(&sys.a).unwrap(), &sys.scaled_input(), &sys.c).unwrap();
    let overshoot = find_overshoot(&res).unwrap();
    let rocof = find_rocof(&res).unwrap();
    let horizon = search_grid(&res.eigenvalues).unwrap().horizon;
    let oracle = simulate_system(&sys, horizon, 1e-12).unwrap();

    let points = 100_000;
    let scan = |t_end: f64, o: usize, j: usize| {
        let (mut ymax, mut dymax) = (0.0f64, 0.0f64);
        for k in 0..=points {
            let (y, dy, _) = oracle.sample(t_end * k as f64 / points as f64);
            ymax = ymax.max(y[(o, j)].abs());
            dymax = dymax.max(dy[(o, j)].abs());
        }
        (ymax, dymax)
    };
    for o in 0..sys.outputs() {
        for j in 0..sys.inputs() {
            let (mp, r) = (overshoot.get(o, j), rocof.get(o, j));
            let pair = res.pair(o, j);

            // Dominance over the whole horizon.
            let (ymax, dymax) = scan(horizon, o, j);
            assert!(mp.value >= ymax * (1.0 - 1e-9), "Mp {o},{j}");
            assert!(r.value >= dymax * (1.0 - 1e-9), "R {o},{j}");

            // Agreement with a fine scan around each extremum.
            match mp.kind {
                ExtremumKind::Steady => assert_eq!(mp.value, pair.final_value().abs()),
                _ => {
                    let (fine, _) = scan(1.25 * mp.time, o, j);
                    assert!((mp.value - fine).abs() < 1e-6 * fine, "Mp {o},{j}: {} vs {fine}", mp.value);
                    assert!(pair.eval(mp.time, 1).abs() < 1e-10 * pair.magnitude(1));
                }
            }
            let t_end = if r.kind == ExtremumKind::Interior { 1.25 * r.time } else { 1.0 };
            let (_, fine) = scan(t_end, o, j);
            assert!((r.value - fine).abs() < 1e-6 * fine, "R {o},{j}: {} vs {fine}", r.value);
        }
    }
}

#[test]
fn single_machine_initial_rocof() {
    let case = load_case(
        &json!({
            "nominal_frequency_hz": 50.0,
            "buses": [{"id": 1}],
            "generators": [{"bus": 1, "inertia": 10.0, "damping": 1.0}],
            "disturbances": [{"bus": 1, "magnitude": 0.1}],
            "outputs": [1]
        })
        .to_string(),
    )
    .unwrap();
    let sys = build_base_system(&case).unwrap();
    let res = residues(&eigensolve(&sys.a).unwrap(), &sys.scaled_input(), &sys.c).unwrap();
    let r = *find_rocof(&res).unwrap().get(0, 0);
    assert_eq!(r.kind, ExtremumKind::Initial);
    assert_eq!(r.time, 0.0);
    assert!((r.value - std::f64::consts::PI).abs() < 1e-12);
    assert!((r.value / (2.0 * std::f64::consts::PI) - 0.5).abs() < 1e-12);
}
