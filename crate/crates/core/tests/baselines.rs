use cmc_opt::baselines::{
    solve_auglag, solve_auglag_with_sink, solve_cmopt, solve_penalty, solve_penalty_with_sink, BaselineConfig,
};
use cmc_opt::graph::{affine_fn, ConstraintFactor, CostFactor};
use cmc_opt::optimizer::{solve_lm, IterationRecord, SolveStatus};
use cmc_opt::problems::{find, half_sphere_problem};
use cmc_opt::{FactorGraph, Values};
use nalgebra::{DMatrix, DVector};

/// min x^2 + y^2 subject to x + y = 1, started at the origin.
fn line_problem() -> (FactorGraph, Values) {
    let mut g = FactorGraph::new();
    let x = g.add_variable(2).unwrap();
    g.add_cost(CostFactor::residual(
        vec![x],
        affine_fn(DMatrix::identity(2, 2), DVector::zeros(2)),
    ))
    .unwrap();
    g.add_equality(ConstraintFactor::new(
        vec![x],
        affine_fn(
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_element(1, -1.0),
        ),
    ))
    .unwrap();
    let mut init = Values::new();
    init.insert(x, DVector::zeros(2)).unwrap();
    (g, init)
}

fn config(outer: usize) -> BaselineConfig {
    BaselineConfig {
        outer_iters: outer,
        ..BaselineConfig::default()
    }
}

#[test]
fn penalty_violation_matches_closed_form() {
    // Penalty minimizer x = y = mu / (1 + 2 mu), violation 1 / (1 + 2 mu).
    let (g, init) = line_problem();
    for outer in 1..=6 {
        let cfg = config(outer);
        let r = solve_penalty(&g, &init, &cfg).unwrap();
        let mu = cfg.penalty(outer - 1);
        let viol = g.total_violation(&r.final_values).unwrap();
        let expected = 1.0 / (1.0 + 2.0 * mu);
        assert!(
            (viol - expected).abs() <= 1e-8 * expected,
            "mu {mu}: {viol} vs {expected}"
        );
    }
}

#[test]
fn penalty_violation_is_nonincreasing_in_mu() {
    let (g, init) = line_problem();
    let mut last = f64::INFINITY;
    for outer in 1..=8 {
        let r = solve_penalty(&g, &init, &config(outer)).unwrap();
        let v = g.total_violation(&r.final_values).unwrap();
        assert!(v <= last);
        last = v;
    }
}

#[test]
fn auglag_beats_penalty_at_equal_budget() {
    let (g, init) = line_problem();
    for outer in 2..=5 {
        let p = solve_penalty(&g, &init, &config(outer)).unwrap();
        let a = solve_auglag(&g, &init, &config(outer)).unwrap();
        let vp = g.total_violation(&p.final_values).unwrap();
        let va = g.total_violation(&a.final_values).unwrap();
        assert!(va < vp, "outer {outer}: auglag {va} penalty {vp}");
    }
}

#[test]
fn auglag_recovers_exact_solution() {
    let (g, init) = line_problem();
    let r = solve_auglag(&g, &init, &BaselineConfig::default()).unwrap();
    let x = r.final_values.iter().next().unwrap().1;
    assert!((x - DVector::from_element(2, 0.5)).norm() < 1e-8);
}

#[test]
fn unconstrained_graph_reduces_to_lm() {
    let mut g = FactorGraph::new();
    let x = g.add_variable(2).unwrap();
    g.add_cost(CostFactor::residual(
        vec![x],
        affine_fn(
            DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 3.0]),
            DVector::from_column_slice(&[1.0, -2.0]),
        ),
    ))
    .unwrap();
    let mut init = Values::new();
    init.insert(x, DVector::from_column_slice(&[4.0, 4.0])).unwrap();
    let cfg = BaselineConfig::default();
    let lm = solve_lm(&g, &g.extract_components(), &init, &cfg.inner).unwrap();
    for r in [
        solve_penalty(&g, &init, &cfg).unwrap(),
        solve_auglag(&g, &init, &cfg).unwrap(),
        solve_cmopt(&g, &init, &cfg).unwrap(),
    ] {
        assert_eq!(r.final_values, lm.final_values);
        let costs: Vec<f64> = r.history.iter().map(|h| h.cost).collect();
        let lm_costs: Vec<f64> = lm.history.iter().map(|h| h.cost).collect();
        assert_eq!(costs, lm_costs);
    }
}

#[test]
fn cmopt_without_inequalities_follows_lm_trajectory() {
    let (g, init) = line_problem();
    let cfg = BaselineConfig::default();
    let lm = solve_lm(&g, &g.extract_components(), &init, &cfg.inner).unwrap();
    let cm = solve_cmopt(&g, &init, &cfg).unwrap();
    assert_eq!(cm.final_values, lm.final_values);
    let strip = |h: &[IterationRecord]| -> Vec<(usize, f64, f64, f64, f64, bool)> {
        h.iter()
            .map(|r| (r.iter, r.cost, r.violation, r.grad_norm, r.step, r.accepted))
            .collect()
    };
    assert_eq!(strip(&cm.history), strip(&lm.history));
    assert_eq!(cm.search_dim, lm.search_dim);
}

#[test]
fn cmopt_leaks_through_active_inequality() {
    // Gravity pulls the point below z = 0; the hinge only resists it.
    let p = half_sphere_problem(1.0, [2.0, 0.0, 0.5], 1.0).unwrap();
    let r = solve_cmopt(&p.graph, &p.init, &BaselineConfig::default()).unwrap();
    let x = r.final_values.iter().next().unwrap().1;
    assert!(x[2] < 0.0, "z = {}", x[2]);
    assert!((x.norm() - 1.0).abs() < 1e-10);
    assert!(p.graph.total_violation(&r.final_values).unwrap() > 0.0);
}

#[test]
fn cmopt_and_lm_report_same_dimension() {
    for name in ["half_sphere", "corner_bottom", "corner_pinned", "hopper"] {
        let p = find(name).unwrap().build(&[], 0).unwrap();
        let cfg = BaselineConfig {
            outer_iters: 2,
            ..BaselineConfig::default()
        };
        let cm = solve_cmopt(&p.graph, &p.init, &cfg).unwrap();
        let lm = solve_lm(&p.graph, &p.graph.extract_components(), &p.init, &cfg.inner).unwrap();
        assert_eq!(cm.search_dim, lm.search_dim, "{name}");
        assert_eq!(cm.ambient_dim, lm.ambient_dim, "{name}");
    }
}

#[test]
fn penalty_methods_search_the_full_space() {
    let p = find("hopper").unwrap().build(&[], 0).unwrap();
    let cfg = BaselineConfig {
        outer_iters: 1,
        ..BaselineConfig::default()
    };
    let r = solve_penalty(&p.graph, &p.init, &cfg).unwrap();
    assert_eq!(r.search_dim, p.graph.ambient_dim());
}

#[test]
fn records_report_original_graph_and_are_numbered_continuously() {
    let (g, init) = line_problem();
    let mut seen = Vec::new();
    let r = solve_penalty_with_sink(&g, &init, &config(3), &mut |h| seen.push(h.clone())).unwrap();
    assert_eq!(seen, r.history);
    for (i, h) in r.history.iter().enumerate() {
        assert_eq!(h.iter, i);
    }
    // Costs and violations are those of the original problem.
    let last = r.history.last().unwrap();
    assert_eq!(last.cost, g.total_cost(&r.final_values).unwrap());
    assert_eq!(last.violation, g.total_violation(&r.final_values).unwrap());

    let mut n = 0;
    solve_auglag_with_sink(&g, &init, &config(2), &mut |_| n += 1).unwrap();
    assert!(n > 0);
}

#[test]
fn huge_penalty_from_feasible_start_stays_near_feasible() {
    let (g, _) = line_problem();
    let mut init = Values::new();
    init.insert(g.variables()[0], DVector::from_column_slice(&[1.0, 0.0]))
        .unwrap();
    let cfg = BaselineConfig {
        outer_iters: 1,
        penalty_init: 1e8,
        ..BaselineConfig::default()
    };
    let r = solve_penalty(&g, &init, &cfg).unwrap();
    assert!(g.total_violation(&r.final_values).unwrap() < 1e-8);
    assert_ne!(r.status, SolveStatus::RetractionFailure);
}
