use std::path::Path;
use std::process::Command;

use cmc_bench::{compare, parse_param, parse_solvers, run_one, CliError, Options, Solver};
use cmc_opt::Values;
use nalgebra::DVector;

fn opts(dir: &Path) -> Options {
    Options {
        out: dir.to_path_buf(),
        ..Options::default()
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cmcopt"))
}

#[test]
fn run_half_sphere_lm_is_feasible() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_one("half_sphere", Solver::CmcLm, &opts(dir.path())).unwrap();
    assert!(out.summary.violation <= 1e-10);
    assert_eq!(out.summary.status, "converged");
    assert_eq!((out.summary.dimension, out.summary.ambient_dim), (2, 3));
    assert!(out.log_path.ends_with("half_sphere_cmc_lm_log.csv"));
    assert!(out.final_path.ends_with("half_sphere_cmc_lm_final.json"));

    let log = std::fs::read_to_string(&out.log_path).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next().unwrap(), "iter,cost,violation,grad_norm,step,accepted");
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first.len(), 6);
    // 17 significant digits: one leading digit plus sixteen decimals.
    let mantissa = first[1].split('e').next().unwrap();
    assert_eq!(mantissa.split('.').nth(1).unwrap().len(), 16);
    assert_eq!(first[1].parse::<f64>().unwrap(), 3.0250000000000004);
}

#[test]
fn summary_violation_is_recomputed_from_final_values() {
    let dir = tempfile::tempdir().unwrap();
    let o = Options {
        outer_iters: Some(3),
        ..opts(dir.path())
    };
    let out = run_one("hopper", Solver::Penalty, &o).unwrap();

    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out.final_path).unwrap()).unwrap();
    let problem = cmc_opt::problems::find("hopper").unwrap().build(&[], 0).unwrap();
    let mut values = Values::new();
    for (key, var) in problem
        .graph
        .variables()
        .iter()
        .zip(json["variables"].as_array().unwrap())
    {
        assert_eq!(var["id"].as_u64().unwrap() as usize, key.id());
        let v: Vec<f64> = var["value"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect();
        values.insert(*key, DVector::from_vec(v)).unwrap();
    }
    assert_eq!(out.summary.violation, problem.graph.total_violation(&values).unwrap());
    assert_eq!(out.summary.cost, problem.graph.total_cost(&values).unwrap());
    assert!(out.summary.violation > 0.0);
}

#[test]
fn compare_single_solver_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cmp = compare("corner_pinned", &[Solver::CmcRgd], &opts(dir.path())).unwrap();
    assert_eq!(cmp.rows.len(), 1);
    let summary = std::fs::read_to_string(&cmp.summary_path).unwrap();
    assert_eq!(summary.lines().count(), 2);
    assert!(cmp.timing_path.exists());
    assert!(cmp.failure().is_none());
    assert!(cmp.render_table().contains("cmc_rgd"));
}

#[test]
fn compare_is_byte_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let solvers = parse_solvers("cmc_lm,penalty,cmopt").unwrap();
    let noisy = |d: &Path| Options {
        params: vec![("init_noise".into(), 0.05)],
        seed: 42,
        outer_iters: Some(4),
        ..opts(d)
    };
    compare("hopper", &solvers, &noisy(a.path())).unwrap();
    compare("hopper", &solvers, &noisy(b.path())).unwrap();
    let mut files = 0;
    for entry in std::fs::read_dir(a.path()).unwrap() {
        let name = entry.unwrap().file_name();
        if name == "timing.csv" {
            continue;
        }
        files += 1;
        let x = std::fs::read(a.path().join(&name)).unwrap();
        let y = std::fs::read(b.path().join(&name)).unwrap();
        assert_eq!(x, y, "{name:?} differs");
    }
    assert_eq!(files, 1 + 2 * solvers.len());
}

#[test]
fn unknown_names_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let e = run_one("nosuch", Solver::CmcLm, &opts(dir.path())).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    assert!(matches!(Solver::parse("newton"), Err(CliError::Usage(_))));
    let bad = Options {
        params: vec![("nosuch".into(), 1.0)],
        ..opts(dir.path())
    };
    assert_eq!(run_one("half_sphere", Solver::CmcLm, &bad).unwrap_err().exit_code(), 2);
    assert_eq!(
        compare("half_sphere", &[], &opts(dir.path())).unwrap_err().exit_code(),
        2
    );
}

#[test]
fn param_parsing() {
    assert_eq!(parse_param("w_g=0.5").unwrap(), ("w_g".to_string(), 0.5));
    assert_eq!(parse_param(" steps = 6").unwrap(), ("steps".to_string(), 6.0));
    assert!(parse_param("w_g").is_err());
    assert!(parse_param("w_g=abc").is_err());
    assert!(parse_param("=1").is_err());
    assert_eq!(
        parse_solvers("cmc_lm, auglag").unwrap(),
        vec![Solver::CmcLm, Solver::Auglag]
    );
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = bin()
        .args(["run", "half_sphere", "cmc_lm", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let line = String::from_utf8(ok.stdout).unwrap();
    let json: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    assert_eq!(json["method"], "cmc_lm");
    assert!(json["violation"].as_f64().unwrap() <= 1e-10);
    assert!(json["time_s"].as_f64().is_some());
    assert!(dir.path().join("summary.csv").exists());

    let code = |args: &[&str]| {
        bin()
            .args(args)
            .arg("--out")
            .arg(dir.path())
            .output()
            .unwrap()
            .status
            .code()
    };
    assert_eq!(code(&["run", "nosuch", "cmc_lm"]), Some(2));
    assert_eq!(code(&["run", "half_sphere", "nosuch"]), Some(2));
    assert_eq!(code(&["run", "half_sphere", "cmc_lm", "--param", "oops"]), Some(2));
    assert_eq!(code(&["run", "hopper", "cmc_lm", "--param", "steps=0"]), Some(2));
    assert_eq!(code(&["compare", "half_sphere", "cmc_lm,bogus"]), Some(2));
}

#[test]
fn binary_penalty_on_hopper_leaks() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "hopper", "penalty", "--outer-iters", "8", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(json["violation"].as_f64().unwrap() > 0.0);
    assert_eq!(json["dimension"], 120);
}

#[test]
fn binary_list_names_everything() {
    let out = bin().arg("list").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["half_sphere", "corner_pinned", "hopper", "cmc_rgd", "cmopt"] {
        assert!(text.contains(name));
    }
}
