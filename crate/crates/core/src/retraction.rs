//! Metric-projection retraction onto a constraint manifold with corners.
//!
//! `retract(x, v)` returns the nearest feasible point to `x + v`:
//!
//! ```text
//! argmin_y ||y - (x + v)||^2   s.t.   h(y) = 0,  g(y) >= 0
//! ```
//!
//! The subproblem is solved by an augmented-Lagrangian loop with Gauss-Newton
//! inner steps, warm-started at `x + v`. Once the outer loop has settled the
//! active set, a polishing phase iterates the linearized-constraint
//! least-distance step on the equality and active rows; its fixed points are
//! exactly the KKT points of the projection, so the returned point is feasible
//! to rounding error rather than to the AL tolerance.

use nalgebra::{DMatrix, DVector};

use crate::cmc::ConstrainedManifold;
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Clone, Debug)]
pub struct RetractionConfig {
    /// Required `|h|` and `max(0, -g)` of the returned point.
    pub feasibility_tol: f64,
    pub kkt_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub penalty_init: f64,
    pub penalty_max: f64,
    /// Tangent-cone membership tolerance for `v`, relative to `1 + |v|`.
    pub cone_tol: f64,
}

impl Default for RetractionConfig {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-10,
            kkt_tol: 1e-8,
            max_outer: 50,
            max_inner: 100,
            penalty_init: 10.0,
            penalty_max: 1e12,
            cone_tol: 1e-8,
        }
    }
}

/// A solved projection subproblem.
#[derive(Clone, Debug)]
pub struct Projection {
    pub point: DVector<f64>,
    /// KKT multipliers: `y - target = dh^T eq + dg^T ineq`, `ineq >= 0`.
    pub eq_multipliers: DVector<f64>,
    pub ineq_multipliers: DVector<f64>,
    pub kkt_residual: f64,
    pub outer_iterations: usize,
}

impl ConstrainedManifold {
    /// Retraction with default settings.
    pub fn retract(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.retract_with(x, v, &RetractionConfig::default())
    }

    pub fn retract_with(&self, x: &DVector<f64>, v: &DVector<f64>, config: &RetractionConfig) -> Result<DVector<f64>> {
        if v.len() != self.ambient_dim() || x.len() != self.ambient_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.ambient_dim(),
                found: v.len().min(x.len()),
            });
        }
        if v.iter().all(|&c| c == 0.0) {
            return Ok(x.clone());
        }
        self.check_tangent(x, v, config)?;
        let target = x + v;
        Ok(self.project_with(&target, config)?.point)
    }

    fn check_tangent(&self, x: &DVector<f64>, v: &DVector<f64>, config: &RetractionConfig) -> Result<()> {
        let active = self.classify_active(x)?;
        let tol = config.cone_tol * (1.0 + v.norm());
        let eq_res = linalg::inf_norm(&(self.jac_eq(x) * v));
        if eq_res > tol {
            return Err(Error::NotInTangentCone { residual: eq_res });
        }
        if !active.active.is_empty() {
            let jg = self.jac_ineq(x).select_rows(&active.active);
            let worst = (jg * v).iter().fold(0.0f64, |m, &r| m.max(-r));
            if worst > tol {
                return Err(Error::NotInTangentCone { residual: worst });
            }
        }
        Ok(())
    }

    /// Nearest feasible point to an arbitrary guess.
    pub fn project_feasible(&self, guess: &DVector<f64>) -> Result<DVector<f64>> {
        let config = RetractionConfig::default();
        if self.violation(guess) <= config.feasibility_tol {
            return Ok(guess.clone());
        }
        Ok(self.project_with(guess, &config)?.point)
    }

    /// Solves the projection subproblem for `target`.
    pub fn project_with(&self, target: &DVector<f64>, config: &RetractionConfig) -> Result<Projection> {
        let (n_h, n_g) = (self.num_equalities(), self.num_inequalities());
        if n_h == 0 && self.eval_ineq(target).iter().all(|&g| g >= 0.0) {
            return Ok(Projection {
                point: target.clone(),
                eq_multipliers: DVector::zeros(0),
                ineq_multipliers: DVector::zeros(n_g),
                kkt_residual: 0.0,
                outer_iterations: 0,
            });
        }

        let mut y = target.clone();
        let mut nu = DVector::zeros(n_h);
        let mut lam = DVector::zeros(n_g);
        let mut mu = config.penalty_init;
        let mut last_viol = f64::INFINITY;
        let mut best = (f64::INFINITY, y.clone(), f64::INFINITY);

        for outer in 1..=config.max_outer {
            self.al_inner(&mut y, target, &nu, &lam, mu, config);

            let h = self.eval_eq(&y);
            let g = self.eval_ineq(&y);
            let viol = g.iter().fold(linalg::inf_norm(&h), |m, &v| m.max(-v));
            let shifted = &lam - mu * &g;

            if viol <= 1e-3 {
                let guess: Vec<usize> = (0..n_g)
                    .filter(|&i| shifted[i] > 0.0 || g[i] <= config.feasibility_tol)
                    .collect();
                match self.polish(&y, target, guess, config) {
                    Ok(mut p) => {
                        p.outer_iterations = outer;
                        return Ok(p);
                    }
                    Err((point, v, kkt)) if v < best.0 => best = (v, point, kkt),
                    Err(_) => {}
                }
            }
            if viol < best.0 {
                best = (viol, y.clone(), f64::INFINITY);
            }

            nu -= mu * &h;
            lam = shifted.map(|v| v.max(0.0));
            if viol > 0.25 * last_viol {
                mu = (mu * 10.0).min(config.penalty_max);
            }
            last_viol = viol;
        }
        Err(Error::RetractionFailed {
            best: best.1,
            violation: best.0,
            kkt_residual: best.2,
        })
    }

    /// Gauss-Newton minimization of the augmented Lagrangian
    /// `1/2 |y - t|^2 - nu.h + mu/2 |h|^2 + 1/(2 mu) sum(max(0, lam - mu g)^2 - lam^2)`.
    fn al_inner(
        &self,
        y: &mut DVector<f64>,
        target: &DVector<f64>,
        nu: &DVector<f64>,
        lam: &DVector<f64>,
        mu: f64,
        config: &RetractionConfig,
    ) {
        let merit = |y: &DVector<f64>| {
            let h = self.eval_eq(y);
            let g = self.eval_ineq(y);
            let mut m = 0.5 * (y - target).norm_squared() - nu.dot(&h) + 0.5 * mu * h.norm_squared();
            for i in 0..g.len() {
                let s = (lam[i] - mu * g[i]).max(0.0);
                m += (s * s - lam[i] * lam[i]) / (2.0 * mu);
            }
            m
        };
        let n = y.len();
        let tol = 1e-13 * (1.0 + target.norm());
        for _ in 0..config.max_inner {
            let h = self.eval_eq(y);
            let g = self.eval_ineq(y);
            let jh = self.jac_eq(y);
            let jg = self.jac_ineq(y);
            let shifted = (lam - mu * &g).map(|v| v.max(0.0));
            let grad = (&*y - target) + jh.transpose() * (mu * &h - nu) - jg.transpose() * &shifted;
            if linalg::inf_norm(&grad) <= tol {
                break;
            }
            let mut hess = DMatrix::identity(n, n) + mu * jh.transpose() * &jh;
            for i in 0..g.len() {
                if shifted[i] > 0.0 {
                    let r = jg.row(i);
                    hess += mu * r.transpose() * r;
                }
            }
            let Ok(chol) = linalg::cholesky(hess) else { break };
            let step = chol.solve(&-&grad);
            let m0 = merit(y);
            let slope = grad.dot(&step);
            let mut alpha = 1.0;
            let mut moved = false;
            for _ in 0..40 {
                let trial = &*y + alpha * &step;
                if merit(&trial) <= m0 + 1e-4 * alpha * slope {
                    *y = trial;
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !moved || alpha * step.norm() <= 1e-16 * (1.0 + y.norm()) {
                break;
            }
        }
    }

    /// Jacobian of the equality rows stacked over the listed inequality rows.
    fn active_rows_jacobian(&self, y: &DVector<f64>, active: &[usize]) -> DMatrix<f64> {
        let jh = self.jac_eq(y);
        let jg = self.jac_ineq(y).select_rows(active);
        linalg::vstack(&[&jh, &jg], y.len())
    }

    /// Newton's method on the KKT system of the projection restricted to a
    /// guessed active set,
    ///
    /// ```text
    /// y - t - J_A(y)^T m = 0,   c_A(y) = 0,
    /// ```
    ///
    /// correcting the set from multiplier signs and violations. The Hessian
    /// of `m^T c_A` comes from central differences of the Jacobian; it only
    /// affects the convergence rate, not the fixed point.
    /// On failure returns the best point with its violation and KKT residual.
    fn polish(
        &self,
        start: &DVector<f64>,
        target: &DVector<f64>,
        mut active: Vec<usize>,
        config: &RetractionConfig,
    ) -> std::result::Result<Projection, (DVector<f64>, f64, f64)> {
        let n_h = self.num_equalities();
        let n_g = self.num_inequalities();
        let n = start.len();
        let mut fallback = (start.clone(), f64::INFINITY, f64::INFINITY);
        let scale = 1.0 + target.norm();

        for _ in 0..=n_g + 2 {
            let mut y = start.clone();
            let ja = self.active_rows_jacobian(&y, &active);
            let k = ja.nrows();
            let mut mult = linalg::solve_gram_pinv(&ja, &(&ja * (&y - target))).unwrap_or_else(|_| DVector::zeros(k));
            let mut converged = false;
            for _ in 0..100 {
                let ja = self.active_rows_jacobian(&y, &active);
                let mut c = self.eval_eq(&y).as_slice().to_vec();
                let g = self.eval_ineq(&y);
                c.extend(active.iter().map(|&i| g[i]));
                let c = DVector::from_vec(c);
                let r1 = &y - target - ja.transpose() * &mult;

                let mut w = DMatrix::identity(n, n);
                for j in 0..n {
                    let eps = 1e-6 * (1.0 + y[j].abs());
                    let mut yp = y.clone();
                    let mut ym = y.clone();
                    yp[j] += eps;
                    ym[j] -= eps;
                    let dp = self.active_rows_jacobian(&yp, &active).transpose() * &mult;
                    let dm = self.active_rows_jacobian(&ym, &active).transpose() * &mult;
                    let col = (dp - dm) / (2.0 * eps);
                    let mut wc = w.column_mut(j);
                    wc -= col;
                }
                let mut kkt = DMatrix::zeros(n + k, n + k);
                kkt.view_mut((0, 0), (n, n)).copy_from(&w);
                kkt.view_mut((0, n), (n, k)).copy_from(&-ja.transpose());
                kkt.view_mut((n, 0), (k, n)).copy_from(&ja);
                let mut rhs = DVector::zeros(n + k);
                rhs.rows_mut(0, n).copy_from(&-&r1);
                rhs.rows_mut(n, k).copy_from(&-&c);
                let step = match kkt.clone().lu().solve(&rhs) {
                    Some(s) if s.iter().all(|v| v.is_finite()) => s,
                    _ => match kkt.svd(true, true).solve(&rhs, 1e-12) {
                        Ok(s) => s,
                        Err(_) => break,
                    },
                };
                let dy = step.rows(0, n).into_owned();
                y += &dy;
                mult += step.rows(n, k);
                if dy.norm() <= 1e-15 * (1.0 + y.norm()) {
                    converged = true;
                    break;
                }
            }

            let h = self.eval_eq(&y);
            let g = self.eval_ineq(&y);
            let viol = g.iter().fold(linalg::inf_norm(&h), |m, &v| m.max(-v));
            let kkt = if mult.len() == n_h + active.len() {
                let jh = self.jac_eq(&y);
                let jg = self.jac_ineq(&y).select_rows(&active);
                let ja = linalg::vstack(&[&jh, &jg], y.len());
                linalg::inf_norm(&(&y - target - ja.transpose() * &mult))
            } else {
                f64::INFINITY
            };
            if viol < fallback.1 {
                fallback = (y.clone(), viol, kkt);
            }
            if !converged && kkt > config.kkt_tol {
                return Err(fallback);
            }

            // Active-set corrections: negative multiplier first, then violation.
            let neg = active
                .iter()
                .enumerate()
                .map(|(j, &i)| (i, mult[n_h + j]))
                .filter(|&(_, m)| m < -1e-10 * scale)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((i, _)) = neg {
                active.retain(|&j| j != i);
                continue;
            }
            let violated = (0..n_g)
                .filter(|i| !active.contains(i) && g[*i] < -config.feasibility_tol)
                .min_by(|&a, &b| g[a].total_cmp(&g[b]));
            if let Some(i) = violated {
                active.push(i);
                active.sort_unstable();
                continue;
            }
            if viol > config.feasibility_tol || kkt > config.kkt_tol {
                return Err(fallback);
            }

            let mut ineq = DVector::zeros(n_g);
            for (j, &i) in active.iter().enumerate() {
                ineq[i] = mult[n_h + j].max(0.0);
            }
            return Ok(Projection {
                point: y,
                eq_multipliers: mult.rows(0, n_h).into_owned(),
                ineq_multipliers: ineq,
                kkt_residual: kkt,
                outer_iterations: 0,
            });
        }
        Err(fallback)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{affine_fn, vector_fn, VectorFunction};
    use std::sync::Arc;

    fn sphere_eq() -> Arc<dyn VectorFunction> {
        vector_fn(
            1,
            |x| DVector::from_element(1, x.norm_squared() - 1.0),
            |x| DMatrix::from_row_slice(1, x.len(), (2.0 * x).as_slice()),
        )
    }

    fn half_sphere() -> ConstrainedManifold {
        let z = affine_fn(DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0]), DVector::zeros(1));
        ConstrainedManifold::from_functions(3, vec![sphere_eq()], vec![z])
    }

    fn v3(a: f64, b: f64, c: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b, c])
    }

    #[test]
    fn zero_step_is_identity() {
        let m = half_sphere();
        let x = v3(0.6, 0.0, 0.8);
        assert_eq!(m.retract(&x, &v3(0.0, 0.0, 0.0)).unwrap(), x);
    }

    #[test]
    fn sphere_projection_normalizes() {
        let m = half_sphere();
        let y = m.retract(&v3(0.0, 0.0, 1.0), &v3(1.0, 0.0, 0.0)).unwrap();
        let expect = v3(1.0, 0.0, 1.0) / 2f64.sqrt();
        assert!((y - expect).norm() < 1e-12);
    }

    #[test]
    fn step_outside_cone_is_rejected() {
        let m = half_sphere();
        assert!(matches!(
            m.retract(&v3(1.0, 0.0, 0.0), &v3(0.0, 0.0, -0.1)),
            Err(Error::NotInTangentCone { .. })
        ));
    }

    #[test]
    fn step_into_boundary_lands_on_it() {
        let m = half_sphere();
        let x = v3(0.0, 0.6, 0.8);
        // Tangent at x, pointing down hard enough to cross z = 0.
        let v = v3(0.0, 0.8, -0.6) * 1.5;
        let y = m.retract(&x, &v).unwrap();
        assert!(m.violation(&y) <= 1e-10);
        assert!(y[2].abs() <= 1e-10);
        // Nearest point of the boundary circle to x + v is its radial direction in the xy-plane.
        let t = &x + &v;
        let expect = v3(t[0], t[1], 0.0).normalize();
        assert!((y - expect).norm() < 1e-8);
    }

    #[test]
    fn project_feasible_fixes_and_keeps() {
        let m = half_sphere();
        let x = v3(0.0, 0.0, 1.0);
        assert_eq!(m.project_feasible(&x).unwrap(), x);
        let y = m.project_feasible(&v3(0.0, 0.0, 2.0)).unwrap();
        assert!((y - x).norm() < 1e-12);
    }

    #[test]
    fn projection_reports_kkt_multipliers() {
        let m = half_sphere();
        let target = v3(2.0, 0.0, -0.5);
        let p = m.project_with(&target, &RetractionConfig::default()).unwrap();
        assert!((&p.point - v3(1.0, 0.0, 0.0)).norm() < 1e-10);
        assert!(p.ineq_multipliers[0] > 0.0);
        assert!(p.kkt_residual <= 1e-8);
    }

    #[test]
    fn unconstrained_block_is_identity_retraction() {
        let m = ConstrainedManifold::from_functions(2, vec![], vec![]);
        let x = DVector::from_vec(vec![1.0, 2.0]);
        let v = DVector::from_vec(vec![0.5, -1.0]);
        assert_eq!(m.retract(&x, &v).unwrap(), &x + &v);
    }
}
