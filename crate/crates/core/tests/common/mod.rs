//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use cmc_opt::graph::{FactorGraph, Values};
use nalgebra::{DMatrix, DVector};

/// Dense grid search of `graph`'s single 3-vector over the upper unit
/// half-sphere, refined by zooming in around the best cell. The boundary
/// circle `z = 0` is on the grid.
pub fn half_sphere_grid_minimizer(graph: &FactorGraph) -> DVector<f64> {
    let key = graph.variables()[0];
    let cost = |polar: f64, az: f64| {
        let x = DVector::from_column_slice(&[polar.sin() * az.cos(), polar.sin() * az.sin(), polar.cos()]);
        let mut v = Values::new();
        v.insert(key, x.clone()).unwrap();
        (graph.total_cost(&v).unwrap(), x)
    };
    let half_pi = std::f64::consts::FRAC_PI_2;
    let tau = std::f64::consts::TAU;
    let (mut lo_p, mut hi_p, mut lo_a, mut hi_a) = (0.0, half_pi, 0.0, tau);
    let mut best = (f64::INFINITY, DVector::zeros(3), 0.0, 0.0);
    for _ in 0..12 {
        let n = 200;
        for i in 0..=n {
            let p = (lo_p + (hi_p - lo_p) * i as f64 / n as f64).clamp(0.0, half_pi);
            for j in 0..=n {
                let a = lo_a + (hi_a - lo_a) * j as f64 / n as f64;
                let (c, x) = cost(p, a);
                if c < best.0 {
                    best = (c, x, p, a);
                }
            }
        }
        let (dp, da) = ((hi_p - lo_p) / 20.0, (hi_a - lo_a) / 20.0);
        lo_p = (best.2 - dp).max(0.0);
        hi_p = (best.2 + dp).min(half_pi);
        lo_a = best.3 - da;
        hi_a = best.3 + da;
    }
    best.1
}

/// Root of a continuous `f` with a sign change on `[a, b]`.
pub fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    assert!(fa * f(b) <= 0.0, "no sign change");
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (f(m) > 0.0) == (fa > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Projection onto `{theta : A theta >= 0}` by enumerating every face: for
/// each subset W of rows, project onto `{A_W theta = 0}` with an SVD
/// pseudo-inverse and keep the closest feasible candidate.
pub fn brute_force_cone_projection(v: &DVector<f64>, a: &DMatrix<f64>) -> DVector<f64> {
    let k = a.nrows();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << k) {
        let rows: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let cand = if rows.is_empty() {
            v.clone()
        } else {
            let aw = a.select_rows(&rows);
            let pinv = aw.clone().pseudo_inverse(1e-12).unwrap();
            v - &pinv * (&aw * v)
        };
        if (a * &cand).iter().all(|&r| r >= -1e-10) {
            let d = (&cand - v).norm();
            if best.as_ref().is_none_or(|b| d < b.0) {
                best = Some((d, cand));
            }
        }
    }
    best.unwrap().1
}

/// Least-squares slope of `log err` against `log t`.
pub fn loglog_slope(ts: &[f64], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

/// A manifold from a benchmark problem, with the graph and the values of the
/// other blocks so that the cost can be evaluated along it.
pub struct Sample {
    pub label: String,
    pub problem: cmc_opt::problems::Problem,
    pub manifold: usize,
    pub point: DVector<f64>,
}

fn unit_sphere_point(rng: &mut impl rand::Rng) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Feasible points with every inequality slack at least about 0.2 on each
/// benchmark manifold, so short tangent steps stay inside the stratum.
pub fn interior_samples(per_manifold: usize, seed: u64) -> Vec<Sample> {
    use cmc_opt::problems::find;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let build = |name: &str| find(name).unwrap().build(&[], 0).unwrap();

    for name in ["half_sphere", "corner_bottom"] {
        let problem = build(name);
        let mut n = 0;
        while n < per_manifold {
            let x = unit_sphere_point(&mut rng);
            if x[2] >= 0.2 && x[2] - x[0] * x[0] * x[0] + 0.1 >= 0.2 {
                out.push(Sample {
                    label: name.into(),
                    problem: problem.clone(),
                    manifold: 0,
                    point: x,
                });
                n += 1;
            }
        }
    }

    let problem = build("corner_top");
    let mut n = 0;
    while n < per_manifold {
        let x = DVector::from_fn(3, |_, _| rng.random_range(-0.8..0.8));
        if x.norm() <= 0.85 && x[2] >= 0.2 && x[2] - x[0] * x[0] * x[0] + 0.1 >= 0.2 {
            out.push(Sample {
                label: "corner_top".into(),
                problem: problem.clone(),
                manifold: 0,
                point: x,
            });
            n += 1;
        }
    }

    // Hopper: component 0 is a stance step, component 4 a flight step.
    let problem = build("hopper");
    let (m, grav, mu) = (
        problem.params.get("mass"),
        problem.params.get("gravity"),
        problem.params.get("mu_f"),
    );
    for _ in 0..per_manifold {
        let qx = rng.random_range(-1.0..1.0);
        let qy = rng.random_range(0.55..0.75);
        let fy = rng.random_range(5.0..25.0);
        let fx = rng.random_range(-0.5..0.5) * mu * fy;
        let px = qx + rng.random_range(-0.3..0.3);
        let (vx, vy) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let x = DVector::from_column_slice(&[qx, qy, vx, vy, fx / m, fy / m - grav, px, 0.0, fx, fy]);
        out.push(Sample {
            label: "hopper_stance".into(),
            problem: problem.clone(),
            manifold: 0,
            point: x,
        });
    }
    for _ in 0..per_manifold {
        let qx = rng.random_range(-1.0..1.0);
        let qy = rng.random_range(0.6..1.0);
        let py = rng.random_range(0.2..0.4);
        let px = qx + rng.random_range(-0.3..0.3);
        let (vx, vy) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let x = DVector::from_column_slice(&[qx, qy, vx, vy, 0.0, -grav, px, py, 0.0, 0.0]);
        out.push(Sample {
            label: "hopper_flight".into(),
            problem: problem.clone(),
            manifold: 4,
            point: x,
        });
    }
    out
}

/// Random unit vector in the tangent cone at `x`.
pub fn unit_tangent(
    manifold: &cmc_opt::cmc::ConstrainedManifold,
    x: &DVector<f64>,
    rng: &mut impl rand::Rng,
) -> DVector<f64> {
    let basis = manifold.tangent_basis(x).unwrap();
    loop {
        let theta = DVector::from_fn(basis.dim(), |_, _| rng.random_range(-1.0..1.0));
        let theta = cmc_opt::calculus::project_to_cone(&theta, &basis.cone_rows)
            .unwrap()
            .theta;
        // Samples projecting onto the apex carry no direction.
        if theta.norm() > 1e-6 {
            let v = basis.to_ambient(&theta);
            let n = v.norm();
            return v / n;
        }
    }
}

/// Random point of the cone `{t : A t >= 0}` for full-row-rank `A`, written
/// as `A^+ s + N z` with `s >= 0` and `N` spanning the nullspace of `A`.
/// Some entries of `s` are zeroed so faces get sampled too.
pub fn sample_cone_point(a: &DMatrix<f64>, rng: &mut impl rand::Rng) -> DVector<f64> {
    let (k, n) = a.shape();
    let pinv = a.clone().pseudo_inverse(1e-12).unwrap();
    let eig = (a.transpose() * a).symmetric_eigen();
    let top = eig.eigenvalues.max();
    let cols: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] <= 1e-10 * top).collect();
    assert_eq!(cols.len(), n - k, "rank-deficient rows");
    let null = eig.eigenvectors.select_columns(&cols);
    let s = DVector::from_fn(k, |_, _| {
        if rng.random_bool(0.3) {
            0.0
        } else {
            rng.random_range(0.0..2.0)
        }
    });
    let z = DVector::from_fn(n - k, |_, _| rng.random_range(-2.0..2.0));
    pinv * s + null * z
}
