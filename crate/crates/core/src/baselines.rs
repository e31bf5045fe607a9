//! Reference solvers: quadratic penalty, augmented Lagrangian, and an
//! equality-only manifold solver that treats inequalities as hinge penalties.
//!
//! All three take the same [`FactorGraph`] as the manifold solvers. They add
//! constraint terms as extra residual cost factors and reuse the LM iteration,
//! while the reported cost and violation always refer to the original graph.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::graph::{vector_fn, ConstraintFactor, CostFactor, FactorGraph, Values};
use crate::optimizer::{lm_core, CmcProblem, Recorder, Sink, SolveResult, SolveStatus, SolverConfig};

#[derive(Clone, Debug)]
pub struct BaselineConfig {
    /// Settings for each inner LM solve; `max_iters` is per outer iteration.
    pub inner: SolverConfig,
    pub outer_iters: usize,
    pub penalty_init: f64,
    pub penalty_growth: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            inner: SolverConfig::default(),
            outer_iters: 8,
            penalty_init: 1.0,
            penalty_growth: 10.0,
        }
    }
}

impl BaselineConfig {
    /// Penalty weight used in outer iteration `k`.
    pub fn penalty(&self, k: usize) -> f64 {
        self.penalty_init * self.penalty_growth.powi(k as i32)
    }
}

/// `sqrt(mu) (h - shift)` for an equality factor.
fn equality_residual(f: &ConstraintFactor, mu: f64, shift: DVector<f64>) -> CostFactor {
    let func = f.func().clone();
    let jf = func.clone();
    let s = mu.sqrt();
    CostFactor::residual(
        f.keys().to_vec(),
        vector_fn(
            func.output_dim(),
            move |x| s * (func.eval(x) - &shift),
            move |x| s * jf.jacobian(x),
        ),
    )
}

/// `sqrt(mu) min(0, g - shift)`; the kink gets a zero derivative.
fn hinge_residual(f: &ConstraintFactor, mu: f64, shift: DVector<f64>) -> CostFactor {
    let func = f.func().clone();
    let jf = func.clone();
    let shift2 = shift.clone();
    let s = mu.sqrt();
    CostFactor::residual(
        f.keys().to_vec(),
        vector_fn(
            func.output_dim(),
            move |x| (func.eval(x) - &shift).map(|v| s * v.min(0.0)),
            move |x| {
                let g = jf.eval(x) - &shift2;
                let mut j: DMatrix<f64> = s * jf.jacobian(x);
                for (r, &v) in g.iter().enumerate() {
                    if v >= 0.0 {
                        j.row_mut(r).fill(0.0);
                    }
                }
                j
            },
        ),
    )
}

/// Multiplier state of the augmented-Lagrangian outer loop, one vector per factor.
struct Multipliers {
    eq: Vec<DVector<f64>>,
    ineq: Vec<DVector<f64>>,
}

impl Multipliers {
    fn zeros(graph: &FactorGraph) -> Self {
        Self {
            eq: graph.equalities().iter().map(|f| DVector::zeros(f.rows())).collect(),
            ineq: graph.inequalities().iter().map(|f| DVector::zeros(f.rows())).collect(),
        }
    }

    /// `nu <- nu - 2 mu h`, `lambda <- max(0, lambda - 2 mu g)`; the factor two
    /// matches the `mu |.|^2` scaling of the penalty terms.
    fn update(&mut self, graph: &FactorGraph, values: &Values, mu: f64) -> Result<()> {
        for (nu, f) in self.eq.iter_mut().zip(graph.equalities()) {
            *nu -= 2.0 * mu * f.eval(values)?;
        }
        for (lam, f) in self.ineq.iter_mut().zip(graph.inequalities()) {
            let g = f.eval(values)?;
            *lam = (&*lam - 2.0 * mu * g).map(|v| v.max(0.0));
        }
        Ok(())
    }
}

fn shift(m: &DVector<f64>, mu: f64) -> DVector<f64> {
    m / (2.0 * mu)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Scheme {
    Penalty,
    AugLag,
}

fn penalized_graph(graph: &FactorGraph, mult: &Multipliers, mu: f64) -> Result<FactorGraph> {
    let mut g = graph.without_constraints();
    for (f, nu) in graph.equalities().iter().zip(&mult.eq) {
        g.add_cost(equality_residual(f, mu, shift(nu, mu)))?;
    }
    for (f, lam) in graph.inequalities().iter().zip(&mult.ineq) {
        g.add_cost(hinge_residual(f, mu, shift(lam, mu)))?;
    }
    Ok(g)
}

fn outer_loop(
    graph: &FactorGraph,
    init: &Values,
    config: &BaselineConfig,
    scheme: Scheme,
    sink: Sink<'_>,
) -> Result<SolveResult> {
    config.inner.validate()?;
    let mut rec = Recorder::new(graph, sink, config.inner.log_every);
    let mut mult = Multipliers::zeros(graph);
    let mut values = init.clone();
    let mut status = SolveStatus::MaxIterations;
    let constrained = !graph.equalities().is_empty() || !graph.inequalities().is_empty();
    let outer = if constrained { config.outer_iters.max(1) } else { 1 };
    for k in 0..outer {
        let mu = config.penalty(k);
        let inner = penalized_graph(graph, &mult, mu)?;
        let partition = inner.extract_components();
        let problem = CmcProblem::new(&inner, &partition, config.inner.active_tol);
        let out = lm_core(&problem, &values, &config.inner, &mut rec)?;
        values = out.values;
        status = out.status;
        if scheme == Scheme::AugLag {
            mult.update(graph, &values, mu)?;
        }
    }
    let n = graph.ambient_dim();
    Ok(SolveResult {
        final_values: values,
        history: rec.history,
        status,
        search_dim: n,
        ambient_dim: n,
    })
}

/// Quadratic penalty `f + mu (|h|^2 + |min(g, 0)|^2)` with geometric `mu`.
pub fn solve_penalty(graph: &FactorGraph, init: &Values, config: &BaselineConfig) -> Result<SolveResult> {
    outer_loop(graph, init, config, Scheme::Penalty, &mut |_| {})
}

pub fn solve_penalty_with_sink(
    graph: &FactorGraph,
    init: &Values,
    config: &BaselineConfig,
    sink: Sink<'_>,
) -> Result<SolveResult> {
    outer_loop(graph, init, config, Scheme::Penalty, sink)
}

/// Augmented Lagrangian with first-order multiplier updates.
pub fn solve_auglag(graph: &FactorGraph, init: &Values, config: &BaselineConfig) -> Result<SolveResult> {
    outer_loop(graph, init, config, Scheme::AugLag, &mut |_| {})
}

pub fn solve_auglag_with_sink(
    graph: &FactorGraph,
    init: &Values,
    config: &BaselineConfig,
    sink: Sink<'_>,
) -> Result<SolveResult> {
    outer_loop(graph, init, config, Scheme::AugLag, sink)
}

/// Manifold LM on the equality constraints only, with the inequalities as
/// hinge-squared penalties under the same `mu` continuation as the penalty
/// method. Without inequalities this is a single [`crate::optimizer::solve_lm`] run.
pub fn solve_cmopt(graph: &FactorGraph, init: &Values, config: &BaselineConfig) -> Result<SolveResult> {
    solve_cmopt_with_sink(graph, init, config, &mut |_| {})
}

pub fn solve_cmopt_with_sink(
    graph: &FactorGraph,
    init: &Values,
    config: &BaselineConfig,
    sink: Sink<'_>,
) -> Result<SolveResult> {
    config.inner.validate()?;
    let mut rec = Recorder::new(graph, sink, config.inner.log_every);
    let mut values = init.clone();
    let mut status = SolveStatus::MaxIterations;
    let outer = if graph.inequalities().is_empty() {
        1
    } else {
        config.outer_iters.max(1)
    };
    let mut dims = (0, 0);
    for k in 0..outer {
        let mu = config.penalty(k);
        let mut inner = graph.without_inequalities();
        for f in graph.inequalities() {
            inner.add_cost(hinge_residual(f, mu, DVector::zeros(f.rows())))?;
        }
        let partition = inner.extract_components();
        let problem = CmcProblem::new(&inner, &partition, config.inner.active_tol);
        dims = (problem.search_dim(), problem.ambient_dim());
        let out = lm_core(&problem, &values, &config.inner, &mut rec)?;
        values = out.values;
        status = out.status;
    }
    Ok(SolveResult {
        final_values: values,
        history: rec.history,
        status,
        search_dim: dims.0,
        ambient_dim: dims.1,
    })
}
