//! Library results against fixtures evaluated independently with numpy
//! (`golden/make_golden.py`).

use hankel_doa::array::{synthesize, ArrayConfig, Snapshot, SnapshotKind, SourceSet};
use hankel_doa::doa::beamform;
use hankel_doa::solvers::{fiht_solve, iht_solve, iht_step, spectral_init, SolverConfig};
use hankel_doa::{Complex64, HankelIndexMap, ResidualMode};
use serde_json::Value;

fn fixture(name: &str) -> Value {
    let path = format!("{}/tests/golden/{name}", env!("CARGO_MANIFEST_DIR"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn reals(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn complex(v: &Value) -> Vec<Complex64> {
    reals(&v["re"]).into_iter().zip(reals(&v["im"])).map(|(r, i)| Complex64::new(r, i)).collect()
}

fn max_rel(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max);
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
}

#[test]
fn synthesize_matches_direct_evaluation() {
    let f = fixture("synthesize.json");
    let cfg = ArrayConfig::ula(f["m"].as_u64().unwrap() as usize).unwrap();
    let src = SourceSet::new(reals(&f["angles_deg"]), reals(&f["amplitudes"]), reals(&f["phases_rad"])).unwrap();
    let x = synthesize(&cfg, &src).unwrap();
    assert!(max_rel(&x.values, &complex(&f["x"])) < 1e-13);
}

struct StepFixture {
    f: Value,
    map: HankelIndexMap,
    x_s: Snapshot,
    cfg: SolverConfig,
}

fn step_fixture() -> StepFixture {
    let f = fixture("solver_steps.json");
    let omega = f["omega"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap() as usize).collect();
    let array = ArrayConfig::new(f["m"].as_u64().unwrap() as usize, 0.5, omega).unwrap();
    let cfg = SolverConfig {
        rank: f["rank"].as_u64().unwrap() as usize,
        step_beta: f["beta"].as_f64().unwrap(),
        ..SolverConfig::default()
    };
    let x_s = Snapshot::new(complex(&f["x_s"]), SnapshotKind::Masked);
    StepFixture { map: HankelIndexMap::new(&array), x_s, cfg, f }
}

#[test]
fn spectral_init_matches_oracle() {
    let s = step_fixture();
    let got = spectral_init(&s.x_s, &s.cfg, &s.map).unwrap();
    assert!(max_rel(&got, &complex(&s.f["spectral_init"])) < 1e-10);
}

#[test]
fn iht_step_matches_oracle_in_both_modes() {
    let mut s = step_fixture();
    let x_i = complex(&s.f["x_i"]);
    let got = iht_step(&x_i, &s.x_s, &s.cfg, &s.map).unwrap();
    assert!(max_rel(&got, &complex(&s.f["iht_step_masked"])) < 1e-10);
    s.cfg.residual_mode = ResidualMode::Literal;
    let got = iht_step(&x_i, &s.x_s, &s.cfg, &s.map).unwrap();
    assert!(max_rel(&got, &complex(&s.f["iht_step_literal"])) < 1e-10);
}

#[test]
fn first_solver_iterates_match_oracle() {
    let mut s = step_fixture();
    s.cfg.max_iters = 1;
    let iht = iht_solve(&s.x_s, &s.cfg, &s.map).unwrap();
    assert!(max_rel(&iht.estimate.values, &complex(&s.f["iht_first_iterate"])) < 1e-10);
    for structured in [true, false] {
        s.cfg.structured = structured;
        let fiht = fiht_solve(&s.x_s, &s.cfg, &s.map).unwrap();
        assert!(max_rel(&fiht.estimate.values, &complex(&s.f["fiht_first_iterate"])) < 1e-10, "structured={structured}");
    }
}

#[test]
fn beamform_matches_oracle() {
    let f = fixture("beamform.json");
    let cfg = ArrayConfig::ula(f["m"].as_u64().unwrap() as usize).unwrap();
    let x = Snapshot::new(complex(&f["x"]), SnapshotKind::FullNoisy);
    let s = beamform(&x, &cfg, f["grid_step_deg"].as_f64().unwrap()).unwrap();
    let (grid, power) = (reals(&f["grid_deg"]), reals(&f["power"]));
    assert_eq!(s.grid_deg.len(), grid.len());
    for (a, b) in s.grid_deg.iter().zip(&grid) {
        assert!((a - b).abs() < 1e-9);
    }
    let peak = power.iter().cloned().fold(0.0, f64::max);
    for (a, b) in s.power.iter().zip(&power) {
        assert!((a - b).abs() < 1e-12 * peak);
    }
}
