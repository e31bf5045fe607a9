//! Descent on products of constraint manifolds with corners.
//!
//! Every constraint-connected component of a factor graph becomes one
//! [`ConstrainedManifold`]; free variables become Euclidean blocks. Iterates
//! are kept on the manifolds by retraction, so the solvers here never see a
//! constraint directly. [`solve_rgd`] is projected-gradient descent with an
//! Armijo line search; [`solve_lm`] builds a Gauss-Newton model in the stacked
//! tangent coordinates and solves it subject to the tangent cone.

use std::collections::HashMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::calculus::{gradient_from_basis, project_to_cone_warm, project_to_polyhedron_warm};
use crate::cmc::{ConstrainedManifold, TangentBasis};
use crate::error::{Error, Result};
use crate::graph::{ComponentPartition, CostKind, FactorGraph, Values, VariableKey};
use crate::retraction::RetractionConfig;

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Threshold on the largest per-manifold `|theta*|`.
    pub grad_tol: f64,
    /// Relative cost decrease below which an accepted step counts as settled.
    pub rel_cost_tol: f64,
    pub step_init: f64,
    pub armijo_c: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
    pub trust_radius_init: f64,
    pub trust_radius_min: f64,
    pub trust_radius_max: f64,
    /// Initial LM damping, relative to the largest Gauss-Newton diagonal entry.
    pub damping_init: f64,
    /// Sink callback period; the returned history always holds every record.
    pub log_every: usize,
    pub active_tol: f64,
    pub retraction: RetractionConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            grad_tol: 1e-8,
            rel_cost_tol: 1e-12,
            step_init: 1.0,
            armijo_c: 1e-4,
            shrink: 0.5,
            max_backtracks: 40,
            trust_radius_init: 1e2,
            trust_radius_min: 1e-12,
            trust_radius_max: 1e3,
            damping_init: 1e-9,
            log_every: 1,
            active_tol: crate::cmc::DEFAULT_ACTIVE_TOL,
            retraction: RetractionConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("grad_tol", self.grad_tol),
            ("rel_cost_tol", self.rel_cost_tol),
            ("step_init", self.step_init),
            ("armijo_c", self.armijo_c),
            ("shrink", self.shrink),
            ("trust_radius_init", self.trust_radius_init),
            ("trust_radius_min", self.trust_radius_min),
            ("trust_radius_max", self.trust_radius_max),
            ("damping_init", self.damping_init),
            ("active_tol", self.active_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.armijo_c >= 1.0 || self.shrink >= 1.0 {
            return Err(Error::InvalidParameter("armijo_c and shrink must be below 1".into()));
        }
        if self.trust_radius_min > self.trust_radius_max {
            return Err(Error::InvalidParameter(
                "trust_radius_min exceeds trust_radius_max".into(),
            ));
        }
        if self.log_every == 0 {
            return Err(Error::InvalidParameter("log_every must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub cost: f64,
    pub violation: f64,
    /// Largest per-manifold `|theta*|` at this iterate.
    pub grad_norm: f64,
    /// Length of the step that produced this iterate (or was rejected).
    pub step: f64,
    pub accepted: bool,
    pub wall_ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    RetractionFailure,
    /// No acceptable step could be found although the stationarity test failed.
    Stalled,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterations => "max_iters",
            SolveStatus::RetractionFailure => "retraction_failure",
            SolveStatus::Stalled => "stalled",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub final_values: Values,
    pub history: Vec<IterationRecord>,
    pub status: SolveStatus,
    /// Number of free coordinates the solver searched over.
    pub search_dim: usize,
    pub ambient_dim: usize,
}

impl SolveResult {
    pub fn final_cost(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.cost)
    }
}

/// A factor graph viewed as a product of constraint manifolds.
pub struct CmcProblem<'g> {
    graph: &'g FactorGraph,
    manifolds: Vec<ConstrainedManifold>,
    /// Variable -> (manifold index, offset in that manifold's stacked point).
    slots: HashMap<VariableKey, (usize, usize)>,
}

impl<'g> CmcProblem<'g> {
    pub fn new(graph: &'g FactorGraph, partition: &ComponentPartition, active_tol: f64) -> Self {
        let mut manifolds: Vec<ConstrainedManifold> = partition
            .components
            .iter()
            .map(|c| ConstrainedManifold::from_component(graph, c).with_active_tol(active_tol))
            .collect();
        manifolds.extend(
            partition
                .free_variables
                .iter()
                .map(|&k| ConstrainedManifold::euclidean(k)),
        );
        let mut slots = HashMap::new();
        for (i, m) in manifolds.iter().enumerate() {
            let mut off = 0;
            for &k in m.keys() {
                slots.insert(k, (i, off));
                off += k.dim();
            }
        }
        Self {
            graph,
            manifolds,
            slots,
        }
    }

    pub fn manifolds(&self) -> &[ConstrainedManifold] {
        &self.manifolds
    }

    pub fn search_dim(&self) -> usize {
        self.manifolds.iter().map(|m| m.intrinsic_dim()).sum()
    }

    pub fn ambient_dim(&self) -> usize {
        self.manifolds.iter().map(|m| m.ambient_dim()).sum()
    }

    pub fn points(&self, values: &Values) -> Result<Vec<DVector<f64>>> {
        self.manifolds.iter().map(|m| m.stack(values)).collect()
    }

    pub fn values(&self, points: &[DVector<f64>]) -> Values {
        let mut values = Values::new();
        for (m, x) in self.manifolds.iter().zip(points) {
            values.scatter(m.keys(), x);
        }
        values
    }

    /// Projects every block of `values` onto its manifold.
    pub fn restore(&self, values: &Values) -> Result<Vec<DVector<f64>>> {
        self.points(values)?
            .iter()
            .zip(&self.manifolds)
            .map(|(x, m)| m.project_feasible(x))
            .collect()
    }

    pub fn bases(&self, points: &[DVector<f64>]) -> Result<Vec<TangentBasis>> {
        self.manifolds
            .iter()
            .zip(points)
            .map(|(m, x)| m.tangent_basis(x))
            .collect()
    }

    /// Ambient cost gradient split per manifold.
    pub fn split_gradient(&self, values: &Values) -> Result<Vec<DVector<f64>>> {
        let grad = self.graph.cost_gradient(values)?;
        self.manifolds.iter().map(|m| m.stack(&grad)).collect()
    }

    /// Retracts every block along `B_i theta_i`; unchanged blocks are copied.
    fn retract_all(
        &self,
        points: &[DVector<f64>],
        bases: &[TangentBasis],
        thetas: &[DVector<f64>],
        config: &RetractionConfig,
    ) -> Result<Vec<DVector<f64>>> {
        self.manifolds
            .iter()
            .zip(points)
            .zip(bases.iter().zip(thetas))
            .map(|((m, x), (b, t))| {
                if m.is_unconstrained() {
                    Ok(x + b.to_ambient(t))
                } else {
                    m.retract_with(x, &b.to_ambient(t), config)
                }
            })
            .collect()
    }

    /// Gauss-Newton model in stacked tangent coordinates: residual vector,
    /// its Jacobian `J B`, and the gradient of the scalar cost factors.
    fn gauss_newton(&self, values: &Values, bases: &[TangentBasis]) -> Result<GnModel> {
        let offsets = block_offsets(bases);
        let dim = *offsets.last().unwrap_or(&0);
        let rows: usize = self
            .graph
            .costs()
            .iter()
            .map(|c| match c.kind() {
                CostKind::SumOfSquares(f) => f.output_dim(),
                CostKind::Scalar(_) => 0,
            })
            .sum();
        let mut residual = DVector::zeros(rows);
        let mut jac = DMatrix::zeros(rows, dim);
        let mut scalar_grad = DVector::zeros(dim);
        let mut r0 = 0;
        for cost in self.graph.costs() {
            let x = values.stack(cost.keys())?;
            match cost.kind() {
                CostKind::SumOfSquares(f) => {
                    let nr = f.output_dim();
                    residual.rows_mut(r0, nr).copy_from(&f.eval(&x));
                    let j = f.jacobian(&x);
                    let mut col = 0;
                    for &k in cost.keys() {
                        let (mi, off) = self.slots[&k];
                        let b = bases[mi].basis.rows(off, k.dim());
                        let n = bases[mi].dim();
                        let mut block = jac.view_mut((r0, offsets[mi]), (nr, n));
                        block += j.columns(col, k.dim()) * b;
                        col += k.dim();
                    }
                    r0 += nr;
                }
                CostKind::Scalar(f) => {
                    let g = f.gradient(&x);
                    let mut col = 0;
                    for &k in cost.keys() {
                        let (mi, off) = self.slots[&k];
                        let b = bases[mi].basis.rows(off, k.dim());
                        let mut block = scalar_grad.rows_mut(offsets[mi], bases[mi].dim());
                        block += b.transpose() * g.rows(col, k.dim());
                        col += k.dim();
                    }
                }
            }
        }
        Ok(GnModel {
            residual,
            jac,
            scalar_grad,
        })
    }
}

struct GnModel {
    residual: DVector<f64>,
    jac: DMatrix<f64>,
    scalar_grad: DVector<f64>,
}

impl GnModel {
    fn gradient(&self) -> DVector<f64> {
        2.0 * self.jac.transpose() * &self.residual + &self.scalar_grad
    }
}

fn block_offsets(bases: &[TangentBasis]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(bases.len() + 1);
    let mut acc = 0;
    offsets.push(0);
    for b in bases {
        acc += b.dim();
        offsets.push(acc);
    }
    offsets
}

/// Maps a warm working set, given as inequality indices of a manifold, onto
/// positions in the current active list.
fn warm_positions(active: &[usize], previous: &[usize]) -> Vec<usize> {
    active
        .iter()
        .enumerate()
        .filter(|(_, i)| previous.contains(i))
        .map(|(p, _)| p)
        .collect()
}

/// Sink for iteration records.
pub type Sink<'a> = &'a mut dyn FnMut(&IterationRecord);

/// Cost and violation are reported against `report`, which lets the penalty
/// baselines log the original objective while optimizing a modified one.
pub(crate) struct Recorder<'a, 'g> {
    report: &'g FactorGraph,
    sink: Sink<'a>,
    log_every: usize,
    start: Instant,
    pub(crate) history: Vec<IterationRecord>,
}

impl<'a, 'g> Recorder<'a, 'g> {
    pub(crate) fn new(report: &'g FactorGraph, sink: Sink<'a>, log_every: usize) -> Self {
        Self {
            report,
            sink,
            log_every,
            start: Instant::now(),
            history: Vec::new(),
        }
    }

    fn push(&mut self, values: &Values, grad_norm: f64, step: f64, accepted: bool) -> Result<()> {
        let rec = IterationRecord {
            iter: self.history.len(),
            cost: self.report.total_cost(values)?,
            violation: self.report.total_violation(values)?,
            grad_norm,
            step,
            accepted,
            wall_ms: self.start.elapsed().as_secs_f64() * 1e3,
        };
        if rec.iter.is_multiple_of(self.log_every) {
            (self.sink)(&rec);
        }
        self.history.push(rec);
        Ok(())
    }
}

fn relative_decrease(before: f64, after: f64) -> f64 {
    (before - after) / before.abs().max(f64::MIN_POSITIVE)
}

/// Riemannian gradient descent with Armijo backtracking.
pub fn solve_rgd(
    graph: &FactorGraph,
    partition: &ComponentPartition,
    init: &Values,
    config: &SolverConfig,
) -> Result<SolveResult> {
    solve_rgd_with_sink(graph, partition, init, config, &mut |_| {})
}

pub fn solve_rgd_with_sink(
    graph: &FactorGraph,
    partition: &ComponentPartition,
    init: &Values,
    config: &SolverConfig,
    sink: Sink<'_>,
) -> Result<SolveResult> {
    config.validate()?;
    let problem = CmcProblem::new(graph, partition, config.active_tol);
    let mut rec = Recorder::new(graph, sink, config.log_every);

    let mut points = problem.restore(init)?;
    let mut values = problem.values(&points);
    let mut cost = graph.total_cost(&values)?;
    let mut warm: Vec<Vec<usize>> = vec![Vec::new(); points.len()];
    let mut last_decrease: Option<f64> = None;
    let (mut last_step, mut last_accepted) = (0.0, true);
    let mut status = SolveStatus::MaxIterations;

    for iter in 0..=config.max_iters {
        let grads = problem.split_gradient(&values)?;
        let mut bases = Vec::with_capacity(points.len());
        let mut thetas = Vec::with_capacity(points.len());
        let mut gnorm = 0.0f64;
        for (i, (m, x)) in problem.manifolds.iter().zip(&points).enumerate() {
            let basis = m.tangent_basis(x)?;
            let w = warm_positions(&basis.active.active, &warm[i]);
            let g = gradient_from_basis(basis, &grads[i], &w)?;
            warm[i] = active_rows_in_use(&g.basis, &g.multipliers);
            gnorm = gnorm.max(g.stationarity());
            thetas.push(g.projected_theta);
            bases.push(g.basis);
        }
        rec.push(&values, gnorm, last_step, last_accepted)?;

        let settled = last_decrease.is_none_or(|d| d <= config.rel_cost_tol);
        if gnorm <= config.grad_tol && settled {
            status = SolveStatus::Converged;
            break;
        }
        if iter == config.max_iters {
            break;
        }

        let sq: f64 = thetas.iter().map(|t| t.norm_squared()).sum();
        let dir_norm = sq.sqrt();
        let mut alpha = config
            .step_init
            .min(config.trust_radius_max / dir_norm.max(f64::MIN_POSITIVE));
        let mut retracted_once = false;
        let mut accepted: Option<(Vec<DVector<f64>>, Values, f64)> = None;
        let mut accepted_alpha = 0.0;
        // Backtrack to the first Armijo point, then keep shrinking while the
        // cost still improves. The second phase stops a unit step from
        // bouncing across a curved valley; every alpha it picks also
        // satisfies the Armijo condition.
        for _ in 0..config.max_backtracks {
            let scaled: Vec<DVector<f64>> = thetas.iter().map(|t| alpha * t).collect();
            match problem.retract_all(&points, &bases, &scaled, &config.retraction) {
                Ok(trial) => {
                    retracted_once = true;
                    let trial_values = problem.values(&trial);
                    let trial_cost = graph.total_cost(&trial_values)?;
                    match &accepted {
                        None if trial_cost <= cost - config.armijo_c * alpha * sq => {
                            accepted = Some((trial, trial_values, trial_cost));
                            accepted_alpha = alpha;
                        }
                        None => {}
                        Some((_, _, best)) if trial_cost < *best => {
                            accepted = Some((trial, trial_values, trial_cost));
                            accepted_alpha = alpha;
                        }
                        Some(_) => break,
                    }
                }
                Err(Error::RetractionFailed { .. }) | Err(Error::NotInTangentCone { .. }) => {
                    if accepted.is_some() {
                        break;
                    }
                }
                Err(e) => return Err(e),
            }
            alpha *= config.shrink;
        }
        let alpha = accepted_alpha;

        match accepted {
            Some((trial, trial_values, trial_cost)) => {
                last_decrease = Some(relative_decrease(cost, trial_cost));
                last_step = alpha * dir_norm;
                last_accepted = true;
                points = trial;
                values = trial_values;
                cost = trial_cost;
            }
            None => {
                status = if gnorm <= config.grad_tol {
                    SolveStatus::Converged
                } else if retracted_once {
                    SolveStatus::Stalled
                } else {
                    SolveStatus::RetractionFailure
                };
                break;
            }
        }
    }

    Ok(SolveResult {
        final_values: values,
        history: rec.history,
        status,
        search_dim: problem.search_dim(),
        ambient_dim: problem.ambient_dim(),
    })
}

/// Inequality indices whose cone multiplier is positive.
fn active_rows_in_use(basis: &TangentBasis, multipliers: &DVector<f64>) -> Vec<usize> {
    basis
        .active
        .active
        .iter()
        .zip(multipliers.iter())
        .filter(|(_, &l)| l > 0.0)
        .map(|(&i, _)| i)
        .collect()
}

/// LM-like trust-region solver on the product of manifolds.
pub fn solve_lm(
    graph: &FactorGraph,
    partition: &ComponentPartition,
    init: &Values,
    config: &SolverConfig,
) -> Result<SolveResult> {
    solve_lm_with_sink(graph, partition, init, config, &mut |_| {})
}

pub fn solve_lm_with_sink(
    graph: &FactorGraph,
    partition: &ComponentPartition,
    init: &Values,
    config: &SolverConfig,
    sink: Sink<'_>,
) -> Result<SolveResult> {
    config.validate()?;
    let problem = CmcProblem::new(graph, partition, config.active_tol);
    let mut rec = Recorder::new(graph, sink, config.log_every);
    let outcome = lm_core(&problem, init, config, &mut rec)?;
    Ok(SolveResult {
        final_values: outcome.values,
        history: rec.history,
        status: outcome.status,
        search_dim: problem.search_dim(),
        ambient_dim: problem.ambient_dim(),
    })
}

pub(crate) struct LmOutcome {
    pub(crate) values: Values,
    pub(crate) status: SolveStatus,
}

/// The LM iteration itself; records go to `rec`, whose report graph may
/// differ from the problem's graph.
pub(crate) fn lm_core(
    problem: &CmcProblem<'_>,
    init: &Values,
    config: &SolverConfig,
    rec: &mut Recorder<'_, '_>,
) -> Result<LmOutcome> {
    let graph = problem.graph;
    let mut points = problem.restore(init)?;
    let mut values = problem.values(&points);
    let mut cost = graph.total_cost(&values)?;
    let mut damping: Option<f64> = None;
    let mut radius = config.trust_radius_init;
    let mut warm: Vec<(usize, usize)> = Vec::new();
    let mut last_decrease: Option<f64> = None;
    let (mut last_step, mut last_accepted) = (0.0, true);
    let mut status = SolveStatus::MaxIterations;
    let mut failures = 0usize;

    for iter in 0..=config.max_iters {
        let bases = problem.bases(&points)?;
        let offsets = block_offsets(&bases);
        let dim = *offsets.last().unwrap_or(&0);
        let model = problem.gauss_newton(&values, &bases)?;
        let grad = model.gradient();

        let mut gnorm = 0.0f64;
        for (i, b) in bases.iter().enumerate() {
            let gi = grad.rows(offsets[i], b.dim()).into_owned();
            let p = project_to_cone_warm(&-gi, &b.cone_rows, &[])?;
            gnorm = gnorm.max(p.theta.norm());
        }
        rec.push(&values, gnorm, last_step, last_accepted)?;

        let settled = last_decrease.is_none_or(|d| d <= config.rel_cost_tol);
        if gnorm <= config.grad_tol && settled {
            status = SolveStatus::Converged;
            break;
        }
        if iter == config.max_iters {
            break;
        }

        // Linearized inequality rows of every manifold, tagged with
        // (manifold, inequality index) for warm starts. Active rows keep a
        // zero offset and form the tangent cone; inactive rows only limit
        // how far the step may run before crossing their boundary.
        let mut tags = Vec::new();
        let mut blocks = Vec::new();
        for (i, (m, x)) in problem.manifolds.iter().zip(&points).enumerate() {
            if m.num_inequalities() == 0 {
                continue;
            }
            let rows = m.jac_ineq(x) * &bases[i].basis;
            let g = m.eval_ineq(x);
            let active = &bases[i].active.active;
            for r in 0..g.len() {
                let offset = if active.contains(&r) { 0.0 } else { -g[r].max(0.0) };
                tags.push((i, r));
                blocks.push((i, rows.row(r).into_owned(), offset));
            }
        }
        let mut cone = DMatrix::zeros(tags.len(), dim);
        let mut lower = DVector::zeros(tags.len());
        for (r, (i, row, offset)) in blocks.into_iter().enumerate() {
            cone.view_mut((r, offsets[i]), (1, bases[i].dim())).copy_from(&row);
            lower[r] = offset;
        }

        let jtj = model.jac.transpose() * &model.jac;
        let h = 2.0 * &jtj;
        let lambda = *damping.get_or_insert_with(|| {
            let scale = (0..dim).map(|i| h[(i, i)]).fold(1.0f64, f64::max);
            config.damping_init * scale
        });

        let mut hd = h.clone();
        for i in 0..dim {
            hd[(i, i)] += lambda;
        }
        let chol = crate::linalg::cholesky(hd)?;
        let l = chol.l();
        // With u = L^T delta the model is |u - c|^2 / 2 + const and the rows
        // become {u : cone L^{-T} u >= lower}.
        let c = -l.solve_lower_triangular(&grad).ok_or(Error::NotPositiveDefinite)?;
        let lt = l.transpose();
        let cone_u = lt
            .tr_solve_upper_triangular(&cone.transpose())
            .ok_or(Error::NotPositiveDefinite)?
            .transpose();
        let warm_rows: Vec<usize> = tags
            .iter()
            .enumerate()
            .filter(|(_, t)| warm.contains(t))
            .map(|(p, _)| p)
            .collect();
        let proj = project_to_polyhedron_warm(&c, &cone_u, &lower, &warm_rows)?;
        warm = proj.working_set.iter().map(|&p| tags[p]).collect();
        let mut delta = lt
            .solve_upper_triangular(&proj.theta)
            .ok_or(Error::NotPositiveDefinite)?;
        let norm = delta.norm();
        if norm > radius {
            delta *= radius / norm;
        }
        let step = delta.norm();
        let jd = &model.jac * &delta;
        let predicted = -(grad.dot(&delta) + jd.norm_squared());

        let thetas: Vec<DVector<f64>> = bases
            .iter()
            .enumerate()
            .map(|(i, b)| delta.rows(offsets[i], b.dim()).into_owned())
            .collect();
        let trial = if predicted > 0.0 {
            match problem.retract_all(&points, &bases, &thetas, &config.retraction) {
                Ok(t) => Some(t),
                Err(Error::RetractionFailed { .. }) | Err(Error::NotInTangentCone { .. }) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };

        // Below this the cost difference is rounding noise and rho says nothing.
        let noise = predicted <= 16.0 * f64::EPSILON * cost.abs().max(f64::MIN_POSITIVE);
        let mut rho = f64::NEG_INFINITY;
        let mut accepted = None;
        if let Some(t) = trial {
            let tv = problem.values(&t);
            let tc = graph.total_cost(&tv)?;
            rho = (cost - tc) / predicted;
            if (rho > 0.0 && tc < cost) || (noise && tc <= cost) {
                accepted = Some((t, tv, tc));
            }
        }

        let mut lambda = lambda;
        if noise && predicted > 0.0 {
            lambda = (lambda * 0.5).max(f64::MIN_POSITIVE);
        } else if rho < 0.25 {
            lambda *= 4.0;
            radius = (0.5 * step).max(config.trust_radius_min);
        } else if rho > 0.75 {
            lambda = (lambda * 0.5).max(f64::MIN_POSITIVE);
            radius = (2.0 * step).max(radius).min(config.trust_radius_max);
        }
        damping = Some(lambda);

        last_step = step;
        match accepted {
            Some((t, tv, tc)) => {
                last_decrease = Some(relative_decrease(cost, tc));
                last_accepted = true;
                points = t;
                values = tv;
                cost = tc;
                failures = 0;
            }
            None => {
                last_decrease = Some(0.0);
                last_accepted = false;
                failures += 1;
                if gnorm <= config.grad_tol {
                    continue;
                }
                if step <= config.trust_radius_min || lambda > 1e32 || failures > 60 {
                    status = SolveStatus::Stalled;
                    break;
                }
            }
        }
    }

    Ok(LmOutcome { values, status })
}

/// Stationarity of one manifold block.
#[derive(Clone, Debug)]
pub struct ManifoldStationarity {
    pub manifold: usize,
    pub theta_norm: f64,
    /// Inequality indices (within the manifold) active at the point.
    pub active: Vec<usize>,
    /// Cone multipliers in the order of `active`.
    pub multipliers: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct StationarityReport {
    pub manifolds: Vec<ManifoldStationarity>,
    pub max_theta_norm: f64,
    /// Smallest multiplier over all active rows; `+inf` without active rows.
    pub min_multiplier: f64,
    pub passed: bool,
}

/// First-order test at `values`: `|theta*| <= tol` on every manifold and no
/// active multiplier below `-1e-10`.
pub fn check_stationarity(
    graph: &FactorGraph,
    partition: &ComponentPartition,
    values: &Values,
    tol: f64,
) -> Result<StationarityReport> {
    let problem = CmcProblem::new(graph, partition, crate::cmc::DEFAULT_ACTIVE_TOL);
    let points = problem.points(values)?;
    let grads = problem.split_gradient(values)?;
    let mut manifolds = Vec::new();
    for (i, (m, x)) in problem.manifolds.iter().zip(&points).enumerate() {
        let g = gradient_from_basis(m.tangent_basis(x)?, &grads[i], &[])?;
        manifolds.push(ManifoldStationarity {
            manifold: i,
            theta_norm: g.stationarity(),
            active: g.basis.active.active.clone(),
            multipliers: g.multipliers.iter().copied().collect(),
        });
    }
    let max_theta_norm = manifolds.iter().map(|m| m.theta_norm).fold(0.0, f64::max);
    let min_multiplier = manifolds
        .iter()
        .flat_map(|m| m.multipliers.iter().copied())
        .fold(f64::INFINITY, f64::min);
    Ok(StationarityReport {
        passed: max_theta_norm <= tol && min_multiplier >= -1e-10,
        manifolds,
        max_theta_norm,
        min_multiplier,
    })
}
