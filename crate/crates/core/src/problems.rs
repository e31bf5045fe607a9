//! Built-in benchmark problems, addressable by name with numeric overrides.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{affine_fn, linear_fn, vector_fn, ConstraintFactor, CostFactor, FactorGraph, Values, VariableKey};

/// Numeric problem parameters after defaults and overrides are merged.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params(BTreeMap<String, f64>);

impl Params {
    pub fn get(&self, name: &str) -> f64 {
        self.0
            .get(name)
            .copied()
            .unwrap_or_else(|| panic!("parameter {name} has no default"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// A reference minimizer shipped with a problem.
#[derive(Clone, Debug)]
pub struct KnownSolution {
    pub values: Values,
    /// Indices of the inequality rows active at the solution, per component.
    pub active: Vec<usize>,
    pub note: &'static str,
}

/// A built problem instance.
#[derive(Clone, Debug)]
pub struct Problem {
    pub name: String,
    pub graph: FactorGraph,
    pub init: Values,
    pub known_solution: Option<KnownSolution>,
    pub params: Params,
}

type Builder = fn(&Params) -> Result<Problem>;

/// A registered problem: a name, default parameters, and a deterministic builder.
#[derive(Clone, Copy)]
pub struct ProblemSpec {
    pub name: &'static str,
    pub description: &'static str,
    pub defaults: &'static [(&'static str, f64)],
    builder: Builder,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec").field("name", &self.name).finish()
    }
}

impl ProblemSpec {
    pub fn params(&self, overrides: &[(String, f64)]) -> Result<Params> {
        let mut map: BTreeMap<String, f64> = self.defaults.iter().map(|&(k, v)| (k.to_string(), v)).collect();
        map.insert("init_noise".into(), 0.0);
        for (k, v) in overrides {
            match map.get_mut(k) {
                Some(slot) => *slot = *v,
                None => {
                    return Err(Error::InvalidParameter(format!(
                        "problem {} has no parameter {k}",
                        self.name
                    )))
                }
            }
        }
        Ok(Params(map))
    }

    /// Builds the instance. The seed only matters when `init_noise > 0`, in
    /// which case every initial coordinate gets uniform noise of that size.
    pub fn build(&self, overrides: &[(String, f64)], seed: u64) -> Result<Problem> {
        let params = self.params(overrides)?;
        let mut problem = (self.builder)(&params)?;
        let noise = params.get("init_noise");
        if noise > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut noisy = Values::new();
            for (k, v) in problem.init.iter() {
                noisy.insert(k, v.map(|c| c + rng.random_range(-noise..=noise)))?;
            }
            problem.init = noisy;
        }
        problem.params = params;
        Ok(problem)
    }
}

pub fn registry() -> Vec<ProblemSpec> {
    vec![
        ProblemSpec {
            name: "half_sphere",
            description: "point on the upper unit half-sphere under gravity and a remote attraction",
            defaults: &[("w_g", 1.0), ("w_a", 1.0), ("px", 2.0), ("py", 0.0), ("pz", 0.5)],
            builder: build_half_sphere,
        },
        ProblemSpec {
            name: "corner_top",
            description: "linear cost over the unit ball cut by z >= x^3 - 0.1 and z >= 0",
            defaults: &[("ax", 0.0), ("ay", 0.0), ("az", -1.0)],
            builder: build_corner_top,
        },
        ProblemSpec {
            name: "corner_bottom",
            description: "linear cost over the unit sphere cut by z >= x^3 - 0.1 and z >= 0",
            defaults: &[("ax", 0.0), ("ay", 0.0), ("az", 1.0)],
            builder: build_corner_bottom,
        },
        ProblemSpec {
            name: "corner_pinned",
            description: "sphere corner problem whose minimizer has both inequalities active",
            defaults: &[("ax", -0.866), ("ay", -0.5), ("az", 5.0)],
            builder: build_corner_pinned,
        },
        ProblemSpec {
            name: "hopper",
            description: "planar point-mass hopper: stance, flight, stance with contact and friction",
            defaults: HOPPER_DEFAULTS,
            builder: build_hopper,
        },
    ]
}

pub fn find(name: &str) -> Option<ProblemSpec> {
    registry().into_iter().find(|s| s.name == name)
}

fn vec3(x: f64, y: f64, z: f64) -> DVector<f64> {
    DVector::from_column_slice(&[x, y, z])
}

fn sphere_equality() -> std::sync::Arc<dyn crate::graph::VectorFunction> {
    vector_fn(
        1,
        |x| DVector::from_element(1, x.norm_squared() - 1.0),
        |x| DMatrix::from_row_slice(1, x.len(), (2.0 * x).as_slice()),
    )
}

/// `z - x^3 + 0.1 >= 0` and `z >= 0`, as one two-row factor.
fn cubic_and_floor() -> std::sync::Arc<dyn crate::graph::VectorFunction> {
    vector_fn(
        2,
        |x| DVector::from_column_slice(&[x[2] - x[0].powi(3) + 0.1, x[2]]),
        |x| DMatrix::from_row_slice(2, 3, &[-3.0 * x[0] * x[0], 0.0, 1.0, 0.0, 0.0, 1.0]),
    )
}

/// Gravity `w_g z` plus attraction `(w_a / 2) |X - P|^2` on the upper half-sphere.
pub fn half_sphere_problem(w_g: f64, p: [f64; 3], w_a: f64) -> Result<Problem> {
    if w_g < 0.0 || w_a < 0.0 {
        return Err(Error::InvalidParameter(
            "half_sphere weights must be nonnegative".into(),
        ));
    }
    let mut graph = FactorGraph::new();
    let x = graph.add_variable(3)?;
    graph.add_equality(ConstraintFactor::new(vec![x], sphere_equality()))?;
    graph.add_inequality(ConstraintFactor::new(
        vec![x],
        affine_fn(DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0]), DVector::zeros(1)),
    ))?;
    graph.add_cost(CostFactor::scalar(vec![x], linear_fn(vec3(0.0, 0.0, w_g))))?;
    let s = (w_a / 2.0).sqrt();
    graph.add_cost(CostFactor::residual(
        vec![x],
        affine_fn(DMatrix::identity(3, 3) * s, -s * vec3(p[0], p[1], p[2])),
    ))?;
    let mut init = Values::new();
    init.insert(x, vec3(0.0, 0.6, 0.8))?;
    Ok(Problem {
        name: "half_sphere".into(),
        graph,
        init,
        known_solution: None,
        params: Params::default(),
    })
}

fn build_half_sphere(p: &Params) -> Result<Problem> {
    half_sphere_problem(p.get("w_g"), [p.get("px"), p.get("py"), p.get("pz")], p.get("w_a"))
}

fn corner_graph(sphere: bool, a: [f64; 3]) -> Result<(FactorGraph, VariableKey)> {
    let mut graph = FactorGraph::new();
    let x = graph.add_variable(3)?;
    if sphere {
        graph.add_equality(ConstraintFactor::new(vec![x], sphere_equality()))?;
    } else {
        let ball = vector_fn(
            1,
            |x| DVector::from_element(1, 1.0 - x.norm_squared()),
            |x| DMatrix::from_row_slice(1, x.len(), (-2.0 * x).as_slice()),
        );
        graph.add_inequality(ConstraintFactor::new(vec![x], ball))?;
    }
    graph.add_inequality(ConstraintFactor::new(vec![x], cubic_and_floor()))?;
    graph.add_cost(CostFactor::scalar(vec![x], linear_fn(vec3(a[0], a[1], a[2]))))?;
    Ok((graph, x))
}

fn corner_problem(name: &str, sphere: bool, a: [f64; 3], init: DVector<f64>) -> Result<Problem> {
    let (graph, x) = corner_graph(sphere, a)?;
    let mut values = Values::new();
    values.insert(x, init)?;
    Ok(Problem {
        name: name.into(),
        graph,
        init: values,
        known_solution: None,
        params: Params::default(),
    })
}

/// The two corner manifolds with linear costs `a^T X`: the solid ball
/// version and the spherical-shell version, both cut by `z >= x^3 - 0.1`
/// and `z >= 0`.
pub fn corner_manifold_problems() -> Result<(Problem, Problem)> {
    let mut top = corner_problem("corner_top", false, [0.0, 0.0, -1.0], vec3(0.1, 0.1, 0.5))?;
    let mut sol = Values::new();
    sol.insert(top.graph.variables()[0], vec3(0.0, 0.0, 1.0))?;
    // Rows: ball, cubic, floor.
    top.known_solution = Some(KnownSolution {
        values: sol,
        active: vec![0],
        note: "maximizing z inside the unit ball",
    });
    let bottom = corner_problem("corner_bottom", true, [0.0, 0.0, 1.0], vec3(0.0, 0.6, 0.8))?;
    Ok((top, bottom))
}

fn build_corner_top(p: &Params) -> Result<Problem> {
    let a = [p.get("ax"), p.get("ay"), p.get("az")];
    let mut prob = corner_problem("corner_top", false, a, vec3(0.1, 0.1, 0.5))?;
    if a == [0.0, 0.0, -1.0] {
        prob.known_solution = corner_manifold_problems()?.0.known_solution;
    }
    Ok(prob)
}

fn build_corner_bottom(p: &Params) -> Result<Problem> {
    corner_problem(
        "corner_bottom",
        true,
        [p.get("ax"), p.get("ay"), p.get("az")],
        vec3(0.0, 0.6, 0.8),
    )
}

/// Corner of the spherical shell where both `z = 0` and `z = x^3 - 0.1` hold
/// with `y > 0`.
pub fn pinned_corner() -> DVector<f64> {
    let x = 0.1f64.cbrt();
    vec3(x, (1.0 - x * x).sqrt(), 0.0)
}

/// Spherical-shell corner problem whose cost pushes into both inequality
/// boundaries at once.
pub fn corner_pinned_problem(a: [f64; 3]) -> Result<Problem> {
    let mut prob = corner_problem("corner_pinned", true, a, vec3(0.0, 0.6, 0.8))?;
    if a == [-0.866, -0.5, 5.0] {
        let mut sol = Values::new();
        sol.insert(prob.graph.variables()[0], pinned_corner())?;
        prob.known_solution = Some(KnownSolution {
            values: sol,
            active: vec![0, 1],
            note: "intersection of x^3 = 0.1 with the unit circle in z = 0",
        });
    }
    Ok(prob)
}

fn build_corner_pinned(p: &Params) -> Result<Problem> {
    corner_pinned_problem([p.get("ax"), p.get("ay"), p.get("az")])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Stance,
    Flight,
}

/// Stance, flight, stance with the flight taking a third of the steps.
/// Short horizons are all stance.
pub fn default_schedule(steps: usize) -> Result<Vec<Phase>> {
    if steps == 0 {
        return Err(Error::InvalidSchedule("hopper needs at least one step".into()));
    }
    if steps < 3 {
        return Ok(vec![Phase::Stance; steps]);
    }
    let flight = steps / 3;
    let first = (steps - flight) / 2;
    let mut phases = vec![Phase::Stance; first];
    phases.extend(std::iter::repeat_n(Phase::Flight, flight));
    phases.extend(std::iter::repeat_n(Phase::Stance, steps - first - flight));
    Ok(phases)
}

pub const HOPPER_DEFAULTS: &[(&str, f64)] = &[
    ("steps", 12.0),
    ("dt", 0.1),
    ("mass", 1.0),
    ("gravity", 9.81),
    ("mu_f", 0.3),
    ("f_max", 30.0),
    ("leg_length", 1.0),
    ("h_min", 0.3),
    ("start_x", 0.0),
    ("start_y", 0.6),
    ("goal_x", 2.0),
    ("goal_y", 0.6),
    ("w_coll", 100.0),
    ("w_start", 10.0),
    ("w_goal", 10.0),
    ("w_foot", 10.0),
    ("w_nominal", 1e-2),
    ("w_effort", 1e-3),
    ("w_acc", 1e-3),
    ("w_jerk", 1e-4),
];

// Per-step layout: state (qx, qy, vx, vy, ax, ay), contact (px, py, fx, fy).
const QX: usize = 0;
const QY: usize = 1;
const VX: usize = 2;
const AX: usize = 4;
const AY: usize = 5;
const PX: usize = 6;
const PY: usize = 7;
const FX: usize = 8;
const FY: usize = 9;

/// Affine factor from `(row, column, coefficient)` triples.
fn sparse_affine(
    rows: usize,
    cols: usize,
    entries: &[(usize, usize, f64)],
    b: &[f64],
) -> std::sync::Arc<dyn crate::graph::VectorFunction> {
    let mut a = DMatrix::zeros(rows, cols);
    for &(r, c, v) in entries {
        a[(r, c)] += v;
    }
    affine_fn(a, DVector::from_column_slice(b))
}

/// Planar point-mass hopper over `phases.len()` steps.
pub fn hopper_problem(phases: &[Phase], p: &Params) -> Result<Problem> {
    if phases.is_empty() {
        return Err(Error::InvalidSchedule("hopper needs at least one step".into()));
    }
    if phases[0] != Phase::Stance {
        return Err(Error::InvalidSchedule("hopper must start in stance".into()));
    }
    let (dt, m, grav, mu) = (p.get("dt"), p.get("mass"), p.get("gravity"), p.get("mu_f"));
    let (f_max, leg, h_min) = (p.get("f_max"), p.get("leg_length"), p.get("h_min"));
    if dt <= 0.0 || m <= 0.0 || mu <= 0.0 || f_max <= 0.0 || leg <= h_min || h_min < 0.0 {
        return Err(Error::InvalidParameter("hopper parameters out of range".into()));
    }
    if f_max < m * grav {
        return Err(Error::InvalidSchedule(
            "force limit cannot support the body in stance".into(),
        ));
    }

    let mut graph = FactorGraph::new();
    let mut steps = Vec::new();
    for _ in phases {
        let s = graph.add_variable(6)?;
        let c = graph.add_variable(4)?;
        steps.push((s, c));
    }

    for (&(s, c), &phase) in steps.iter().zip(phases) {
        let keys = vec![s, c];
        // m a - f - m g = 0, with g = (0, -grav).
        graph.add_equality(ConstraintFactor::new(
            keys.clone(),
            sparse_affine(
                2,
                10,
                &[(0, AX, m), (0, FX, -1.0), (1, AY, m), (1, FY, -1.0)],
                &[0.0, m * grav],
            ),
        ))?;
        let reach = vector_fn(
            1,
            move |x| {
                let (dx, dy) = (x[QX] - x[PX], x[QY] - x[PY]);
                DVector::from_element(1, leg * leg - dx * dx - dy * dy)
            },
            move |x| {
                let (dx, dy) = (x[QX] - x[PX], x[QY] - x[PY]);
                let mut j = DMatrix::zeros(1, 10);
                j[(0, QX)] = -2.0 * dx;
                j[(0, QY)] = -2.0 * dy;
                j[(0, PX)] = 2.0 * dx;
                j[(0, PY)] = 2.0 * dy;
                j
            },
        );
        graph.add_inequality(ConstraintFactor::new(keys.clone(), reach))?;
        graph.add_inequality(ConstraintFactor::new(
            keys.clone(),
            sparse_affine(1, 10, &[(0, QY, 1.0)], &[-h_min]),
        ))?;
        match phase {
            Phase::Stance => {
                graph.add_equality(ConstraintFactor::new(
                    keys.clone(),
                    sparse_affine(1, 10, &[(0, PY, 1.0)], &[0.0]),
                ))?;
                // The friction rows imply fy >= 0, so that row is left out.
                graph.add_inequality(ConstraintFactor::new(
                    keys.clone(),
                    sparse_affine(
                        3,
                        10,
                        &[(0, FY, mu), (0, FX, -1.0), (1, FY, mu), (1, FX, 1.0), (2, FY, -1.0)],
                        &[0.0, 0.0, f_max],
                    ),
                ))?;
            }
            Phase::Flight => {
                graph.add_equality(ConstraintFactor::new(
                    keys.clone(),
                    sparse_affine(2, 10, &[(0, FX, 1.0), (1, FY, 1.0)], &[0.0, 0.0]),
                ))?;
                graph.add_inequality(ConstraintFactor::new(
                    keys.clone(),
                    sparse_affine(1, 10, &[(0, PY, 1.0)], &[0.0]),
                ))?;
            }
        }
    }

    let w = |name: &str| p.get(name).max(0.0).sqrt();
    let (wc, wj, wf) = (w("w_coll"), w("w_jerk"), w("w_foot"));
    for t in 0..steps.len().saturating_sub(1) {
        let (s0, c0) = steps[t];
        let (s1, c1) = steps[t + 1];
        // Trapezoidal collocation over [state_t, state_t+1].
        let h = 0.5 * dt;
        let coll: Vec<(usize, usize, f64)> = [
            (0, QX, 6 + QX, VX, 6 + VX),
            (1, QY, 6 + QY, VX + 1, 6 + VX + 1),
            (2, VX, 6 + VX, AX, 6 + AX),
            (3, VX + 1, 6 + VX + 1, AY, 6 + AY),
        ]
        .iter()
        .flat_map(|&(r, x0, x1, d0, d1)| [(r, x1, wc), (r, x0, -wc), (r, d0, -wc * h), (r, d1, -wc * h)])
        .collect();
        graph.add_cost(CostFactor::residual(
            vec![s0, s1],
            sparse_affine(4, 12, &coll, &[0.0; 4]),
        ))?;
        let jerk = wj / dt;
        graph.add_cost(CostFactor::residual(
            vec![s0, s1],
            sparse_affine(
                2,
                12,
                &[(0, 6 + AX, jerk), (0, AX, -jerk), (1, 6 + AY, jerk), (1, AY, -jerk)],
                &[0.0; 2],
            ),
        ))?;
        if phases[t] == Phase::Stance && phases[t + 1] == Phase::Stance {
            graph.add_cost(CostFactor::residual(
                vec![c0, c1],
                sparse_affine(2, 8, &[(0, 4, wf), (0, 0, -wf), (1, 5, wf), (1, 1, -wf)], &[0.0; 2]),
            ))?;
        }
    }

    let (wn, we, wa) = (w("w_nominal"), w("w_effort"), w("w_acc"));
    for &(s, c) in &steps {
        graph.add_cost(CostFactor::residual(
            vec![s, c],
            sparse_affine(
                4,
                10,
                &[(0, PX, wn), (0, QX, -wn), (1, PY, wn), (2, FX, we), (3, FY, we)],
                &[0.0; 4],
            ),
        ))?;
        graph.add_cost(CostFactor::residual(
            vec![s],
            sparse_affine(2, 6, &[(0, AX, wa), (1, AY, wa)], &[0.0; 2]),
        ))?;
    }

    let endpoint = |weight: f64, x: f64, y: f64| {
        sparse_affine(
            4,
            6,
            &[(0, QX, weight), (1, QY, weight), (2, VX, weight), (3, VX + 1, weight)],
            &[-weight * x, -weight * y, 0.0, 0.0],
        )
    };
    let first = steps[0].0;
    let last = steps[steps.len() - 1].0;
    graph.add_cost(CostFactor::residual(
        vec![first],
        endpoint(w("w_start"), p.get("start_x"), p.get("start_y")),
    ))?;
    graph.add_cost(CostFactor::residual(
        vec![last],
        endpoint(w("w_goal"), p.get("goal_x"), p.get("goal_y")),
    ))?;

    let mut init = Values::new();
    for &(s, c) in &steps {
        init.insert(s, DVector::zeros(6))?;
        init.insert(c, DVector::zeros(4))?;
    }
    Ok(Problem {
        name: "hopper".into(),
        graph,
        init,
        known_solution: None,
        params: p.clone(),
    })
}

fn build_hopper(p: &Params) -> Result<Problem> {
    let steps = p.get("steps");
    if steps < 1.0 || steps.fract() != 0.0 {
        return Err(Error::InvalidSchedule(format!(
            "steps must be a positive integer, got {steps}"
        )));
    }
    hopper_problem(&default_schedule(steps as usize)?, p)
}

/// Hopper parameters with overrides applied.
pub fn hopper_params(overrides: &[(&str, f64)]) -> Result<Params> {
    let spec = find("hopper").expect("hopper is registered");
    let owned: Vec<(String, f64)> = overrides.iter().map(|&(k, v)| (k.to_string(), v)).collect();
    spec.params(&owned)
}
