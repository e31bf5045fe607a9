//! Constraint manifolds with corners.
//!
//! A [`ConstrainedManifold`] is the feasible set `{x : h(x) = 0, g(x) >= 0}`
//! of one constraint-connected component, embedded in `R^N_c`. At a point the
//! inequality rows split into active (on the boundary) and inactive ones; the
//! tangent set is the cone
//!
//! ```text
//! T_x M = { B theta : A_cone theta >= 0 },   A_cone = dg_A(x) B
//! ```
//!
//! where the orthonormal columns of `B` span the null space of `dh(x)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::graph::{Component, FactorGraph, Values, VariableKey, VectorFunction};
use crate::linalg::{self, RANK_TOL};

/// Default absolute tolerance below which an inequality counts as active.
pub const DEFAULT_ACTIVE_TOL: f64 = 1e-8;

#[derive(Clone)]
struct LocalConstraint {
    /// Indices into the manifold's stacked coordinate vector.
    columns: Vec<usize>,
    func: Arc<dyn VectorFunction>,
}

impl LocalConstraint {
    fn gather(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.columns.len(), self.columns.iter().map(|&c| x[c]))
    }
}

#[derive(Clone)]
pub struct ConstrainedManifold {
    keys: Vec<VariableKey>,
    dim: usize,
    equalities: Vec<LocalConstraint>,
    inequalities: Vec<LocalConstraint>,
    n_eq: usize,
    n_ineq: usize,
    active_tol: f64,
    corner_aligned: bool,
}

impl fmt::Debug for ConstrainedManifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConstrainedManifold")
            .field("keys", &self.keys)
            .field("ambient_dim", &self.dim)
            .field("n_eq", &self.n_eq)
            .field("n_ineq", &self.n_ineq)
            .finish()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActiveSet {
    pub active: Vec<usize>,
    pub inactive: Vec<usize>,
}

impl ActiveSet {
    pub fn is_interior(&self) -> bool {
        self.active.is_empty()
    }
}

/// Which stacked constraint row a rank report refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintRow {
    Equality(usize),
    Inequality(usize),
}

#[derive(Clone, Debug, Error, PartialEq)]
#[error("constraint Jacobian has rank {rank}, expected {expected}; near-dependent rows {rows:?}")]
pub struct RankDeficiency {
    pub rank: usize,
    pub expected: usize,
    pub rows: Vec<ConstraintRow>,
}

#[derive(Clone, Debug)]
pub struct TangentBasis {
    pub base: DVector<f64>,
    /// `N_c x n`, orthonormal columns spanning the null space of `dh(base)`.
    pub basis: DMatrix<f64>,
    /// `|A| x n` rows of `dg_A(base) B`.
    pub cone_rows: DMatrix<f64>,
    pub active: ActiveSet,
}

impl TangentBasis {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn to_ambient(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.basis * theta
    }

    /// Whether `theta` lies in the cone, up to `tol`.
    pub fn contains(&self, theta: &DVector<f64>, tol: f64) -> bool {
        (&self.cone_rows * theta).iter().all(|&v| v >= -tol)
    }

    pub fn tangent_vector(&self, theta: DVector<f64>) -> TangentVector {
        TangentVector {
            base: self.base.clone(),
            ambient: self.to_ambient(&theta),
            theta,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TangentVector {
    pub base: DVector<f64>,
    pub theta: DVector<f64>,
    pub ambient: DVector<f64>,
}

impl ConstrainedManifold {
    /// Builds a manifold over `R^dim` from functions of the full stacked vector.
    pub fn from_functions(
        dim: usize,
        equalities: Vec<Arc<dyn VectorFunction>>,
        inequalities: Vec<Arc<dyn VectorFunction>>,
    ) -> Self {
        let all: Vec<usize> = (0..dim).collect();
        let wrap = |fs: Vec<Arc<dyn VectorFunction>>| {
            fs.into_iter()
                .map(|func| LocalConstraint {
                    columns: all.clone(),
                    func,
                })
                .collect::<Vec<_>>()
        };
        Self::assemble(Vec::new(), dim, wrap(equalities), wrap(inequalities))
    }

    /// The manifold of one constraint-connected component of `graph`.
    pub fn from_component(graph: &FactorGraph, component: &Component) -> Self {
        let keys = component.variables.clone();
        let mut offsets = std::collections::HashMap::new();
        let mut off = 0;
        for k in &keys {
            offsets.insert(*k, off);
            off += k.dim();
        }
        let local = |f: &crate::graph::ConstraintFactor| {
            let columns = f
                .keys()
                .iter()
                .flat_map(|k| {
                    let o = offsets[k];
                    o..o + k.dim()
                })
                .collect();
            LocalConstraint {
                columns,
                func: f.func().clone(),
            }
        };
        let eqs = component
            .equalities
            .iter()
            .map(|&j| local(&graph.equalities()[j]))
            .collect();
        let ineqs = component
            .inequalities
            .iter()
            .map(|&j| local(&graph.inequalities()[j]))
            .collect();
        Self::assemble(keys, off, eqs, ineqs)
    }

    /// An unconstrained block `R^d`: identity basis, identity retraction.
    pub fn euclidean(key: VariableKey) -> Self {
        Self::assemble(vec![key], key.dim(), Vec::new(), Vec::new())
    }

    fn assemble(
        keys: Vec<VariableKey>,
        dim: usize,
        equalities: Vec<LocalConstraint>,
        inequalities: Vec<LocalConstraint>,
    ) -> Self {
        let n_eq = equalities.iter().map(|c| c.func.output_dim()).sum();
        let n_ineq = inequalities.iter().map(|c| c.func.output_dim()).sum();
        Self {
            keys,
            dim,
            equalities,
            inequalities,
            n_eq,
            n_ineq,
            active_tol: DEFAULT_ACTIVE_TOL,
            corner_aligned: false,
        }
    }

    pub fn with_active_tol(mut self, tol: f64) -> Self {
        self.active_tol = tol;
        self
    }

    /// Rotates the basis so that only its leading coordinates are constrained
    /// by the active rows.
    pub fn with_corner_alignment(mut self, on: bool) -> Self {
        self.corner_aligned = on;
        self
    }

    pub fn active_tol(&self) -> f64 {
        self.active_tol
    }

    pub fn keys(&self) -> &[VariableKey] {
        &self.keys
    }

    pub fn ambient_dim(&self) -> usize {
        self.dim
    }

    pub fn num_equalities(&self) -> usize {
        self.n_eq
    }

    pub fn num_inequalities(&self) -> usize {
        self.n_ineq
    }

    /// Interior dimension `n = N_c - n_h`.
    pub fn intrinsic_dim(&self) -> usize {
        self.dim.saturating_sub(self.n_eq)
    }

    pub fn is_unconstrained(&self) -> bool {
        self.n_eq == 0 && self.n_ineq == 0
    }

    pub fn stack(&self, values: &Values) -> Result<DVector<f64>> {
        values.stack(&self.keys)
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    fn eval_stack(cs: &[LocalConstraint], rows: usize, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(rows);
        let mut r = 0;
        for c in cs {
            let v = c.func.eval(&c.gather(x));
            out.rows_mut(r, v.len()).copy_from(&v);
            r += v.len();
        }
        out
    }

    fn jac_stack(cs: &[LocalConstraint], rows: usize, dim: usize, x: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(rows, dim);
        let mut r = 0;
        for c in cs {
            let j = c.func.jacobian(&c.gather(x));
            for (jc, &col) in c.columns.iter().enumerate() {
                for i in 0..j.nrows() {
                    out[(r + i, col)] += j[(i, jc)];
                }
            }
            r += j.nrows();
        }
        out
    }

    /// Stacked equality values `h(x)`.
    pub fn eval_eq(&self, x: &DVector<f64>) -> DVector<f64> {
        Self::eval_stack(&self.equalities, self.n_eq, x)
    }

    /// `n_h x N_c` equality Jacobian.
    pub fn jac_eq(&self, x: &DVector<f64>) -> DMatrix<f64> {
        Self::jac_stack(&self.equalities, self.n_eq, self.dim, x)
    }

    pub fn eval_ineq(&self, x: &DVector<f64>) -> DVector<f64> {
        Self::eval_stack(&self.inequalities, self.n_ineq, x)
    }

    pub fn jac_ineq(&self, x: &DVector<f64>) -> DMatrix<f64> {
        Self::jac_stack(&self.inequalities, self.n_ineq, self.dim, x)
    }

    /// Largest `|h|` or `max(0, -g)` at `x`.
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        let h = self.eval_eq(x);
        let g = self.eval_ineq(x);
        let hv = linalg::inf_norm(&h);
        g.iter().fold(hv, |m, &v| m.max(-v))
    }

    pub fn classify_active(&self, x: &DVector<f64>) -> Result<ActiveSet> {
        self.check_dim(x)?;
        let g = self.eval_ineq(x);
        let mut active = Vec::new();
        let mut inactive = Vec::new();
        for (i, &v) in g.iter().enumerate() {
            if v < -self.active_tol {
                return Err(Error::Infeasible { row: i, value: v });
            }
            if v <= self.active_tol {
                active.push(i);
            } else {
                inactive.push(i);
            }
        }
        Ok(ActiveSet { active, inactive })
    }

    /// Equality rows stacked over the active inequality rows.
    pub fn active_jacobian(&self, x: &DVector<f64>, active: &ActiveSet) -> DMatrix<f64> {
        let jh = self.jac_eq(x);
        if active.active.is_empty() {
            return jh;
        }
        let jg = self.jac_ineq(x).select_rows(&active.active);
        linalg::vstack(&[&jh, &jg], self.dim)
    }

    /// Checks that equality and active inequality gradients are independent.
    pub fn check_rank(&self, x: &DVector<f64>, active: &ActiveSet) -> std::result::Result<(), RankDeficiency> {
        let m = self.active_jacobian(x, active);
        let expected = m.nrows();
        if expected == 0 {
            return Ok(());
        }
        let s = linalg::singular_values(&m);
        let smax = s.first().copied().unwrap_or(0.0);
        let rank = if smax > 0.0 {
            s.iter().filter(|&&v| v > RANK_TOL * smax).count()
        } else {
            0
        };
        if rank == expected {
            return Ok(());
        }

        // Rows taking part in the (expected - rank) weakest combinations of M M^T.
        let labels: Vec<ConstraintRow> = (0..self.n_eq)
            .map(ConstraintRow::Equality)
            .chain(active.active.iter().map(|&i| ConstraintRow::Inequality(i)))
            .collect();
        let eig = (&m * m.transpose()).symmetric_eigen();
        let mut order: Vec<usize> = (0..expected).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let mut rows = Vec::new();
        for &k in order.iter().take(expected - rank) {
            for (i, label) in labels.iter().enumerate() {
                if eig.eigenvectors[(i, k)].abs() > 0.1 && !rows.contains(label) {
                    rows.push(*label);
                }
            }
        }
        Err(RankDeficiency { rank, expected, rows })
    }

    pub fn tangent_basis(&self, x: &DVector<f64>) -> Result<TangentBasis> {
        let active = self.classify_active(x)?;
        self.check_rank(x, &active)?;
        let jh = self.jac_eq(x);
        let mut basis = linalg::orthonormal_complement(&jh.transpose());
        let mut cone_rows = if active.active.is_empty() {
            DMatrix::zeros(0, basis.ncols())
        } else {
            self.jac_ineq(x).select_rows(&active.active) * &basis
        };
        if self.corner_aligned && cone_rows.nrows() > 0 {
            // Leading k directions span the active gradients; the rest are free.
            let k = cone_rows.nrows();
            let n = basis.ncols();
            let mut rot = DMatrix::zeros(n, n);
            let lead = cone_rows.transpose().qr().q();
            rot.columns_mut(0, k).copy_from(&lead.columns(0, k));
            rot.columns_mut(k, n - k)
                .copy_from(&linalg::orthonormal_complement(&cone_rows.transpose()));
            basis = &basis * &rot;
            cone_rows = &cone_rows * &rot;
        }
        Ok(TangentBasis {
            base: x.clone(),
            basis,
            cone_rows,
            active,
        })
    }

    /// `(n, m)` of the local corner model `H^n_m`.
    pub fn corner_model_dims(&self, x: &DVector<f64>) -> Result<(usize, usize)> {
        let active = self.classify_active(x)?;
        let n = self.intrinsic_dim();
        Ok((n, n.saturating_sub(active.active.len())))
    }
}
