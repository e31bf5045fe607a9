//! Differentials of costs on constraint manifolds with corners and the
//! cone-projected gradient.
//!
//! The pulled-back differential is `dF = B^T grad f(x)`. Because the tangent
//! set at a corner is a cone `{theta : A theta >= 0}` rather than a subspace,
//! the steepest feasible descent direction is the Euclidean projection of
//! `-dF` onto that cone, computed here by a small primal active-set QP.

use nalgebra::{DMatrix, DVector};

use crate::cmc::{ConstrainedManifold, TangentBasis};
use crate::error::{Error, Result};
use crate::linalg;

/// Result of projecting a vector onto `{theta : A theta >= b}`.
#[derive(Clone, Debug)]
pub struct ConeProjection {
    pub theta: DVector<f64>,
    /// One multiplier per cone row; zero outside the working set. At the
    /// solution `theta = v + A^T multipliers` with `multipliers >= 0`.
    pub multipliers: DVector<f64>,
    pub working_set: Vec<usize>,
    pub iterations: usize,
}

/// Euclidean projection of `v` onto the polyhedral cone `{theta : A theta >= 0}`.
pub fn project_to_cone(v: &DVector<f64>, cone_rows: &DMatrix<f64>) -> Result<ConeProjection> {
    project_to_cone_warm(v, cone_rows, &[])
}

/// [`project_to_cone`] started from a guessed working set.
///
/// Rows in `warm` that are out of range or linearly dependent are ignored.
pub fn project_to_cone_warm(v: &DVector<f64>, cone_rows: &DMatrix<f64>, warm: &[usize]) -> Result<ConeProjection> {
    project_to_polyhedron_warm(v, cone_rows, &DVector::zeros(cone_rows.nrows()), warm)
}

/// Euclidean projection of `v` onto `{theta : A theta >= b}` for `b <= 0`,
/// so that `theta = 0` is feasible. With `b = 0` this is the cone projection.
pub fn project_to_polyhedron_warm(
    v: &DVector<f64>,
    cone_rows: &DMatrix<f64>,
    b: &DVector<f64>,
    warm: &[usize],
) -> Result<ConeProjection> {
    let (k, n) = cone_rows.shape();
    if b.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: b.len(),
        });
    }
    if b.iter().any(|&x| x > 0.0) {
        return Err(Error::InvalidParameter("polyhedron offsets must be nonpositive".into()));
    }
    if n != v.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: v.len(),
        });
    }
    if k == 0 {
        return Ok(ConeProjection {
            theta: v.clone(),
            multipliers: DVector::zeros(0),
            working_set: Vec::new(),
            iterations: 0,
        });
    }

    let scale = 1.0 + v.norm();
    let zero_tol = 1e-13 * scale;
    let mult_tol = 1e-12 * scale;

    let mut work: Vec<usize> = warm.iter().copied().filter(|&i| i < k).collect();
    work.sort_unstable();
    work.dedup();
    if !work.is_empty() && linalg::numerical_rank(&cone_rows.select_rows(&work)) < work.len() {
        work.clear();
    }

    // theta = 0 is always feasible for a cone.
    let mut theta = DVector::zeros(n);
    let max_iter = 50 * (k + n) + 100;
    for iter in 1..=max_iter {
        let (target, lambda) = equality_projection(v, cone_rows, b, &work)?;
        let p = &target - &theta;
        if p.norm() <= zero_tol {
            theta = target;
            // Bland: drop the lowest-indexed row with a negative multiplier.
            let drop = work
                .iter()
                .zip(lambda.iter())
                .filter(|(_, &l)| l < -mult_tol)
                .map(|(&i, _)| i)
                .min();
            match drop {
                Some(i) => work.retain(|&j| j != i),
                None => {
                    let mut multipliers = DVector::zeros(k);
                    for (&i, &l) in work.iter().zip(lambda.iter()) {
                        multipliers[i] = l;
                    }
                    return Ok(ConeProjection {
                        theta,
                        multipliers,
                        working_set: work,
                        iterations: iter,
                    });
                }
            }
            continue;
        }

        // Ratio test over rows outside the working set; ties go to the lowest index.
        let ap = cone_rows * &p;
        let at = cone_rows * &theta - b;
        let mut alpha = 1.0;
        let mut blocking = None;
        for i in 0..k {
            if work.contains(&i) || ap[i] >= -1e-15 * scale {
                continue;
            }
            let ratio = (at[i].max(0.0) / -ap[i]).max(0.0);
            if ratio < alpha {
                alpha = ratio;
                blocking = Some(i);
            }
        }
        match blocking {
            Some(i) => {
                theta += alpha * p;
                work.push(i);
                work.sort_unstable();
            }
            None => theta = target,
        }
    }
    let residual = (cone_rows * &theta - b).iter().fold(0.0f64, |m, &x| m.max(-x));
    Err(Error::QpNotConverged {
        iterations: max_iter,
        residual,
    })
}

/// Minimizer of `||theta - v||^2` on `{A_W theta = b_W}` and its multipliers.
fn equality_projection(
    v: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    work: &[usize],
) -> Result<(DVector<f64>, DVector<f64>)> {
    if work.is_empty() {
        return Ok((v.clone(), DVector::zeros(0)));
    }
    let aw = a.select_rows(work);
    let bw = b.select_rows(work);
    let lambda = linalg::solve_gram(&aw, &(bw - &aw * v))?;
    let theta = v + aw.transpose() * &lambda;
    Ok((theta, lambda))
}

/// Pulled-back differential `B^T grad f`.
pub fn differential(basis: &TangentBasis, ambient_cost_gradient: &DVector<f64>) -> Result<DVector<f64>> {
    if ambient_cost_gradient.len() != basis.basis.nrows() {
        return Err(Error::DimensionMismatch {
            expected: basis.basis.nrows(),
            found: ambient_cost_gradient.len(),
        });
    }
    Ok(basis.basis.transpose() * ambient_cost_gradient)
}

#[derive(Clone, Debug)]
pub struct ManifoldGradient {
    pub base: DVector<f64>,
    /// `B^T grad f`.
    pub euclidean_coeffs: DVector<f64>,
    /// Steepest feasible descent coordinates: the projection of
    /// `-euclidean_coeffs` onto the tangent cone. Zero iff stationary.
    pub projected_theta: DVector<f64>,
    /// Cone multipliers of the projection, one per active inequality row.
    pub multipliers: DVector<f64>,
    /// `-B projected_theta`; the ordinary Riemannian gradient at interior points.
    pub ambient_grad: DVector<f64>,
    pub basis: TangentBasis,
}

impl ManifoldGradient {
    pub fn stationarity(&self) -> f64 {
        self.projected_theta.norm()
    }

    /// Ambient descent direction `B projected_theta`.
    pub fn descent_direction(&self) -> DVector<f64> {
        -&self.ambient_grad
    }
}

/// Tangent basis, differential and cone-projected descent direction at `x`.
pub fn riemannian_gradient(
    manifold: &ConstrainedManifold,
    x: &DVector<f64>,
    ambient_cost_gradient: &DVector<f64>,
) -> Result<ManifoldGradient> {
    let basis = manifold.tangent_basis(x)?;
    gradient_from_basis(basis, ambient_cost_gradient, &[])
}

pub(crate) fn gradient_from_basis(
    basis: TangentBasis,
    ambient_cost_gradient: &DVector<f64>,
    warm: &[usize],
) -> Result<ManifoldGradient> {
    let coeffs = differential(&basis, ambient_cost_gradient)?;
    let proj = project_to_cone_warm(&-&coeffs, &basis.cone_rows, warm)?;
    let ambient_grad = -(&basis.basis * &proj.theta);
    Ok(ManifoldGradient {
        base: basis.base.clone(),
        euclidean_coeffs: coeffs,
        projected_theta: proj.theta,
        multipliers: proj.multipliers,
        ambient_grad,
        basis,
    })
}
