//! Factor-graph representation of a constrained nonlinear program.
//!
//! Variable nodes carry real vectors. Three kinds of factor nodes attach to
//! them: cost factors (summed into the objective), equality constraints
//! `h(x) = 0` and inequality constraints `g(x) >= 0`. Constraint factors
//! induce a partition of the variables into constraint-connected components,
//! each of which becomes one manifold with corners; cost factors may span
//! several components without merging them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VariableKey {
    id: usize,
    dim: usize,
}

impl VariableKey {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl fmt::Display for VariableKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.id)
    }
}

/// A smooth map from the stacked values of a factor's keys to `R^m`.
pub trait VectorFunction: Send + Sync {
    fn output_dim(&self) -> usize;
    fn eval(&self, x: &DVector<f64>) -> DVector<f64>;
    /// `output_dim x input_dim` Jacobian at `x`.
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

/// A smooth real-valued function with explicit gradient.
pub trait ScalarFunction: Send + Sync {
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
}

struct FnVector<F, J> {
    dim: usize,
    f: F,
    j: J,
}

impl<F, J> VectorFunction for FnVector<F, J>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
    J: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync,
{
    fn output_dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.f)(x)
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.j)(x)
    }
}

/// Wraps a pair of closures as a [`VectorFunction`].
pub fn vector_fn<F, J>(output_dim: usize, f: F, j: J) -> Arc<dyn VectorFunction>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    J: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
{
    Arc::new(FnVector { dim: output_dim, f, j })
}

/// Affine map `x -> a x + b`.
pub fn affine_fn(a: DMatrix<f64>, b: DVector<f64>) -> Arc<dyn VectorFunction> {
    assert_eq!(a.nrows(), b.len());
    let a2 = a.clone();
    vector_fn(b.len(), move |x| &a * x + &b, move |_| a2.clone())
}

struct FnScalar<F, G> {
    f: F,
    g: G,
}

impl<F, G> ScalarFunction for FnScalar<F, G>
where
    F: Fn(&DVector<f64>) -> f64 + Send + Sync,
    G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
{
    fn value(&self, x: &DVector<f64>) -> f64 {
        (self.f)(x)
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.g)(x)
    }
}

pub fn scalar_fn<F, G>(f: F, g: G) -> Arc<dyn ScalarFunction>
where
    F: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
    G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
{
    Arc::new(FnScalar { f, g })
}

/// Linear scalar cost `c^T x`.
pub fn linear_fn(c: DVector<f64>) -> Arc<dyn ScalarFunction> {
    let c2 = c.clone();
    scalar_fn(move |x| c.dot(x), move |_| c2.clone())
}

/// Assignment of a real vector to each variable.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Values {
    map: BTreeMap<VariableKey, DVector<f64>>,
}

impl Values {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: VariableKey, value: DVector<f64>) -> Result<()> {
        if value.len() != key.dim() {
            return Err(Error::DimensionMismatch {
                expected: key.dim(),
                found: value.len(),
            });
        }
        self.map.insert(key, value);
        Ok(())
    }

    pub fn get(&self, key: VariableKey) -> Option<&DVector<f64>> {
        self.map.get(&key)
    }

    pub fn try_get(&self, key: VariableKey) -> Result<&DVector<f64>> {
        self.map.get(&key).ok_or(Error::MissingValue(key))
    }

    pub fn iter(&self) -> impl Iterator<Item = (VariableKey, &DVector<f64>)> {
        self.map.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Concatenates the values of `keys` in order.
    pub fn stack(&self, keys: &[VariableKey]) -> Result<DVector<f64>> {
        let n = keys.iter().map(|k| k.dim()).sum();
        let mut out = DVector::zeros(n);
        let mut off = 0;
        for &k in keys {
            out.rows_mut(off, k.dim()).copy_from(self.try_get(k)?);
            off += k.dim();
        }
        Ok(out)
    }

    /// Inverse of [`Values::stack`]: writes slices of `x` back into `keys`.
    pub fn scatter(&mut self, keys: &[VariableKey], x: &DVector<f64>) {
        let mut off = 0;
        for &k in keys {
            self.map.insert(k, x.rows(off, k.dim()).into_owned());
            off += k.dim();
        }
    }
}

/// A constraint factor; its function is read as `h(x) = 0` for equality
/// factors and `g(x) >= 0` (componentwise) for inequality factors.
#[derive(Clone)]
pub struct ConstraintFactor {
    keys: Vec<VariableKey>,
    func: Arc<dyn VectorFunction>,
}

pub type EqualityFactor = ConstraintFactor;
pub type InequalityFactor = ConstraintFactor;

impl ConstraintFactor {
    pub fn new(keys: Vec<VariableKey>, func: Arc<dyn VectorFunction>) -> Self {
        Self { keys, func }
    }

    pub fn keys(&self) -> &[VariableKey] {
        &self.keys
    }

    pub fn func(&self) -> &Arc<dyn VectorFunction> {
        &self.func
    }

    pub fn rows(&self) -> usize {
        self.func.output_dim()
    }

    pub fn eval(&self, values: &Values) -> Result<DVector<f64>> {
        Ok(self.func.eval(&values.stack(&self.keys)?))
    }
}

impl fmt::Debug for ConstraintFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConstraintFactor")
            .field("keys", &self.keys)
            .field("rows", &self.rows())
            .finish()
    }
}

#[derive(Clone)]
pub enum CostKind {
    /// Contributes `||r(x)||^2`.
    SumOfSquares(Arc<dyn VectorFunction>),
    /// Contributes `f(x)`; used for costs without a residual form.
    Scalar(Arc<dyn ScalarFunction>),
}

#[derive(Clone)]
pub struct CostFactor {
    keys: Vec<VariableKey>,
    kind: CostKind,
}

impl CostFactor {
    pub fn residual(keys: Vec<VariableKey>, func: Arc<dyn VectorFunction>) -> Self {
        Self {
            keys,
            kind: CostKind::SumOfSquares(func),
        }
    }

    pub fn scalar(keys: Vec<VariableKey>, func: Arc<dyn ScalarFunction>) -> Self {
        Self {
            keys,
            kind: CostKind::Scalar(func),
        }
    }

    pub fn keys(&self) -> &[VariableKey] {
        &self.keys
    }

    pub fn kind(&self) -> &CostKind {
        &self.kind
    }

    pub fn cost(&self, values: &Values) -> Result<f64> {
        let x = values.stack(&self.keys)?;
        Ok(match &self.kind {
            CostKind::SumOfSquares(r) => r.eval(&x).norm_squared(),
            CostKind::Scalar(s) => s.value(&x),
        })
    }

    /// Gradient of this factor's cost with respect to its stacked keys.
    pub fn gradient(&self, values: &Values) -> Result<DVector<f64>> {
        let x = values.stack(&self.keys)?;
        Ok(match &self.kind {
            CostKind::SumOfSquares(r) => 2.0 * r.jacobian(&x).transpose() * r.eval(&x),
            CostKind::Scalar(s) => s.gradient(&x),
        })
    }
}

impl fmt::Debug for CostFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            CostKind::SumOfSquares(_) => "sum_of_squares",
            CostKind::Scalar(_) => "scalar",
        };
        f.debug_struct("CostFactor")
            .field("keys", &self.keys)
            .field("kind", &kind)
            .finish()
    }
}

#[derive(Clone, Debug, Default)]
pub struct FactorGraph {
    variables: Vec<VariableKey>,
    costs: Vec<CostFactor>,
    equalities: Vec<EqualityFactor>,
    inequalities: Vec<InequalityFactor>,
}

/// One constraint-connected component: its variables (sorted by id) and the
/// indices of the constraint factors it owns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub variables: Vec<VariableKey>,
    pub equalities: Vec<usize>,
    pub inequalities: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentPartition {
    pub components: Vec<Component>,
    pub free_variables: Vec<VariableKey>,
}

impl FactorGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(&mut self, dim: usize) -> Result<VariableKey> {
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        let key = VariableKey {
            id: self.variables.len(),
            dim,
        };
        self.variables.push(key);
        Ok(key)
    }

    fn check_keys(&self, keys: &[VariableKey]) -> Result<()> {
        for &k in keys {
            if self.variables.get(k.id()) != Some(&k) {
                return Err(Error::UnknownVariable(k));
            }
        }
        Ok(())
    }

    pub fn add_cost(&mut self, factor: CostFactor) -> Result<usize> {
        self.check_keys(factor.keys())?;
        self.costs.push(factor);
        Ok(self.costs.len() - 1)
    }

    pub fn add_equality(&mut self, factor: EqualityFactor) -> Result<usize> {
        self.check_keys(factor.keys())?;
        self.equalities.push(factor);
        Ok(self.equalities.len() - 1)
    }

    pub fn add_inequality(&mut self, factor: InequalityFactor) -> Result<usize> {
        self.check_keys(factor.keys())?;
        self.inequalities.push(factor);
        Ok(self.inequalities.len() - 1)
    }

    pub fn variables(&self) -> &[VariableKey] {
        &self.variables
    }

    pub fn costs(&self) -> &[CostFactor] {
        &self.costs
    }

    pub fn equalities(&self) -> &[EqualityFactor] {
        &self.equalities
    }

    pub fn inequalities(&self) -> &[InequalityFactor] {
        &self.inequalities
    }

    /// Total ambient dimension `N`.
    pub fn ambient_dim(&self) -> usize {
        self.variables.iter().map(|k| k.dim()).sum()
    }

    pub fn num_equality_rows(&self) -> usize {
        self.equalities.iter().map(|f| f.rows()).sum()
    }

    /// Same variables and costs, no constraint factors.
    pub fn without_constraints(&self) -> FactorGraph {
        FactorGraph {
            variables: self.variables.clone(),
            costs: self.costs.clone(),
            equalities: Vec::new(),
            inequalities: Vec::new(),
        }
    }

    /// Same variables, costs and equalities; inequalities dropped.
    pub fn without_inequalities(&self) -> FactorGraph {
        FactorGraph {
            inequalities: Vec::new(),
            ..self.clone()
        }
    }

    pub fn total_cost(&self, values: &Values) -> Result<f64> {
        self.costs.iter().map(|c| c.cost(values)).sum()
    }

    /// Gradient of the total cost, per variable.
    pub fn cost_gradient(&self, values: &Values) -> Result<Values> {
        let mut grad = Values::new();
        for &k in &self.variables {
            grad.map.insert(k, DVector::zeros(k.dim()));
        }
        for c in &self.costs {
            let g = c.gradient(values)?;
            let mut off = 0;
            for &k in c.keys() {
                let slot = grad.map.get_mut(&k).expect("keys checked on insertion");
                *slot += g.rows(off, k.dim());
                off += k.dim();
            }
        }
        Ok(grad)
    }

    /// Infinity-norm constraint violation: the largest `|h|` or `max(0, -g)`.
    pub fn total_violation(&self, values: &Values) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for h in &self.equalities {
            worst = h.eval(values)?.iter().fold(worst, |m, v| m.max(v.abs()));
        }
        for g in &self.inequalities {
            worst = g.eval(values)?.iter().fold(worst, |m, v| m.max(-v));
        }
        // f64::max may keep the sign of a zero; report +0.
        Ok(worst.abs())
    }

    /// Partitions variables into constraint-connected components.
    ///
    /// Two variables share a component iff a path of constraint factors
    /// connects them. Components are ordered by their smallest variable id.
    pub fn extract_components(&self) -> ComponentPartition {
        let mut uf = UnionFind::new(self.variables.len());
        let mut constrained = vec![false; self.variables.len()];
        for f in self.equalities.iter().chain(&self.inequalities) {
            let ids: Vec<usize> = f.keys().iter().map(|k| k.id()).collect();
            for &i in &ids {
                constrained[i] = true;
            }
            for w in ids.windows(2) {
                uf.union(w[0], w[1]);
            }
        }

        let mut groups: BTreeMap<usize, Component> = BTreeMap::new();
        let mut root_to_min: BTreeMap<usize, usize> = BTreeMap::new();
        for (i, &key) in self.variables.iter().enumerate() {
            if !constrained[i] {
                continue;
            }
            let root = uf.find(i);
            let min = *root_to_min.entry(root).or_insert(i);
            groups
                .entry(min)
                .or_insert_with(|| Component {
                    variables: Vec::new(),
                    equalities: Vec::new(),
                    inequalities: Vec::new(),
                })
                .variables
                .push(key);
        }
        for (j, f) in self.equalities.iter().enumerate() {
            if let Some(k) = f.keys().first() {
                let min = root_to_min[&uf.find(k.id())];
                groups.get_mut(&min).unwrap().equalities.push(j);
            }
        }
        for (j, f) in self.inequalities.iter().enumerate() {
            if let Some(k) = f.keys().first() {
                let min = root_to_min[&uf.find(k.id())];
                groups.get_mut(&min).unwrap().inequalities.push(j);
            }
        }

        let free_variables = self
            .variables
            .iter()
            .zip(&constrained)
            .filter(|(_, &c)| !c)
            .map(|(k, _)| *k)
            .collect();
        ComponentPartition {
            components: groups.into_values().collect(),
            free_variables,
        }
    }
}

impl ComponentPartition {
    /// Variable sets of all components, as sets of ids.
    pub fn variable_sets(&self) -> BTreeSet<BTreeSet<usize>> {
        self.components
            .iter()
            .map(|c| c.variables.iter().map(|k| k.id()).collect())
            .collect()
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}
