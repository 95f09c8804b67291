use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sepmarg::classical::DiscreteDistribution;
use sepmarg::hierarchy::{Operator, StateEnsemble};
use sepmarg::io::{
    matrix_to_json, CompletionFile, DistributionFile, EnsembleFile, HamiltonianFile, HamiltonianJson, LocalTermJson, ScenarioFile, WitnessFile,
};
use sepmarg::linalg::C;
use sepmarg::models::{Boundary, Pauli, PauliTerm};
use sepmarg::qops::kron;
use sepmarg::scenarios::MarginalScenario;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sepmarg")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &TempDir, name: &str, value: &impl serde::Serialize) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, serde_json::to_string(value).unwrap()).unwrap();
    p
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn pair() -> MarginalScenario {
    MarginalScenario::custom(vec![(1, 2), (2, 2)], vec![vec![1, 2]]).unwrap()
}

fn bell() -> Operator {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Operator::pure(vec![2, 2], &[C::new(h, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(h, 0.0)]).unwrap()
}

fn pauli_pair(a: Pauli, b: Pauli) -> Operator {
    kron(&Operator::new(vec![2], a.matrix()).unwrap(), &Operator::new(vec![2], b.matrix()).unwrap())
}

fn hamiltonian(s: &MarginalScenario, h: HamiltonianJson) -> HamiltonianFile {
    let base = ScenarioFile::from_scenario(s);
    HamiltonianFile {
        version: base.version,
        sites: base.sites,
        scenario: base.scenario,
        hamiltonian: h,
    }
}

fn local(terms: &[(Vec<usize>, Operator)]) -> HamiltonianJson {
    HamiltonianJson::Local {
        terms: terms
            .iter()
            .map(|(set, op)| LocalTermJson {
                set: set.clone(),
                matrix: matrix_to_json(op.matrix()),
            })
            .collect(),
    }
}

#[test]
fn bell_state_is_rejected_with_sidecar() {
    let dir = TempDir::new().unwrap();
    let e = StateEnsemble::new(pair(), vec![bell()]).unwrap();
    let f = write(&dir, "bell.json", &EnsembleFile::from_ensemble(&e));
    let o = run(&["check", arg(&f), "--level", "1"]);
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
    assert!(stdout(&o).starts_with("INFEASIBLE"));
    let sidecar = dir.path().join("bell.json.witness.json");
    let w: WitnessFile = serde_json::from_str(&std::fs::read_to_string(sidecar).unwrap()).unwrap();
    assert!(w.violation > 0.0);
    assert_eq!(w.terms.keys().collect::<Vec<_>>(), vec!["1,2"]);
}

#[test]
fn maximally_mixed_is_feasible_and_json_is_structured() {
    let dir = TempDir::new().unwrap();
    let e = StateEnsemble::new(pair(), vec![Operator::maximally_mixed(vec![2, 2]).unwrap()]).unwrap();
    let f = write(&dir, "mm.json", &EnsembleFile::from_ensemble(&e));
    let dump = dir.path().join("mm.dat-s");
    let o = run(&["check", arg(&f), "--json", "--dump-sdp", arg(&dump)]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["verdict"], "feasible");
    assert_eq!(v["hierarchy"], "h");
    assert!(v["witness"].is_null());
    assert!(!std::fs::read_to_string(dump).unwrap().is_empty());
}

#[test]
fn non_hermitian_input_names_the_key() {
    let dir = TempDir::new().unwrap();
    let e = StateEnsemble::new(pair(), vec![Operator::maximally_mixed(vec![2, 2]).unwrap()]).unwrap();
    let mut file = EnsembleFile::from_ensemble(&e);
    file.states.get_mut("1,2").unwrap()[0][1] = [0.3, 0.0];
    let f = write(&dir, "bad.json", &file);
    let o = run(&["check", arg(&f)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("1,2"));
}

#[test]
fn argument_errors_exit_with_one() {
    assert_eq!(run(&["check"]).status.code(), Some(1));
    assert_eq!(run(&["check", "x.json", "--hierarchy", "bogus"]).status.code(), Some(1));
    assert_eq!(run(&["check", "/nonexistent/file.json"]).status.code(), Some(1));
}

fn energy(args: &[&str]) -> f64 {
    let o = run(args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    stdout(&o).trim().parse().unwrap()
}

#[test]
fn separable_energies() {
    let dir = TempDir::new().unwrap();
    let star = MarginalScenario::star(4, 2).unwrap();
    let h = local(&[
        (vec![1, 2], pauli_pair(Pauli::X, Pauli::X)),
        (vec![1, 3], pauli_pair(Pauli::Y, Pauli::Y)),
        (vec![1, 4], pauli_pair(Pauli::Z, Pauli::Z)),
    ]);
    let f = write(&dir, "star.json", &hamiltonian(&star, h));
    let v = energy(&["sep-energy", arg(&f), "--hierarchy", "hbar", "--level", "2"]);
    assert!((v + 3f64.sqrt()).abs() < 1e-4, "{v}");

    let zz = write(&dir, "zz.json", &hamiltonian(&pair(), local(&[(vec![1, 2], pauli_pair(Pauli::Z, Pauli::Z))])));
    assert!((energy(&["sep-energy", arg(&zz)]) + 1.0).abs() < 1e-6);

    let ti = MarginalScenario::ti1d(2, 2).unwrap();
    let xz = write(&dir, "xz.json", &hamiltonian(&ti, local(&[(vec![1, 2], pauli_pair(Pauli::X, Pauli::Z))])));
    assert!((energy(&["sep-energy", arg(&xz), "--level", "2"]) + 0.5).abs() < 1e-4);
}

#[test]
fn heisenberg_scan_brackets_the_transition() {
    let dir = TempDir::new().unwrap();
    let terms = [Pauli::X, Pauli::Y, Pauli::Z].map(|p| PauliTerm::new(1.0, vec![(1, p), (2, p)])).to_vec();
    let f = write(&dir, "heis.json", &hamiltonian(&pair(), HamiltonianJson::Pauli { boundary: Boundary::Open, terms }));
    let o = run(&["beta-scan", arg(&f), "--range", "0,1", "--grid", "11", "--resolution", "1e-4"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| !l.starts_with('#')).count(), 11);
    let t: Vec<f64> = out
        .lines()
        .find(|l| l.starts_with("# transition"))
        .unwrap()
        .split_whitespace()
        .skip(2)
        .take(2)
        .map(|x| x.parse().unwrap())
        .collect();
    let exact = 3f64.ln() / 4.0;
    assert!(t[0] <= exact + 1e-6 && exact - 1e-6 <= t[1], "{t:?}");
}

#[test]
fn bounds_table() {
    let o = run(&["bounds", "--level", "2", "--dims", "2", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let eps = v["epsilon"].as_array().unwrap();
    assert_eq!(eps.len(), 2);
    assert!((eps[0]["epsilon"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert!((eps[1]["epsilon"].as_f64().unwrap() - (1.0 - 1.0 / 3f64.sqrt())).abs() < 1e-12);
}

#[test]
fn glue_and_complete_round_trip() {
    let dir = TempDir::new().unwrap();
    let p12 = DiscreteDistribution::new(vec![(1, 2), (2, 2)], vec![0.3, 0.2, 0.1, 0.4]).unwrap();
    let p23 = DiscreteDistribution::new(vec![(2, 2), (3, 2)], vec![0.25, 0.15, 0.5, 0.1]).unwrap();
    let f = write(&dir, "dist.json", &DistributionFile::new(&[p12.clone(), p23]));
    let out = dir.path().join("glued.json");
    assert_eq!(run(&["glue", arg(&f), "-o", arg(&out)]).status.code(), Some(0));
    let glued: DistributionFile = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let g = &glued.to_distributions().unwrap()[0];
    assert!(g.marginalize(&[1, 2]).unwrap().max_deviation(&p12).unwrap() < 1e-12);

    let ring = write(&dir, "ring.json", &ScenarioFile::from_scenario(&MarginalScenario::ring(6, 2).unwrap()));
    let o = run(&["complete", arg(&ring)]);
    assert_eq!(o.status.code(), Some(0));
    let c: CompletionFile = serde_json::from_slice(&o.stdout).unwrap();
    let expect: Vec<Vec<usize>> = (1..=4).map(|j| vec![1, j + 1, j + 2]).collect();
    assert_eq!(c.cliques, expect);
}
