//! Discrete LTI systems, benchmark scenarios, closed-loop rollouts and
//! settling-time metrics.

use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::numerics::{min_eigenvalue, norm_inf, Cholesky, Matrix, Vector};
pub use crate::polytope::Polytope;

/// `x⁺ = A x + B u`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LtiSystem {
    #[serde(rename = "A")]
    pub a: Matrix,
    #[serde(rename = "B")]
    pub b: Matrix,
}

impl LtiSystem {
    pub fn new(a: Matrix, b: Matrix) -> Result<Self> {
        dim_check(a.is_square(), || format!("A is {}x{}", a.rows(), a.cols()))?;
        dim_check(b.rows() == a.rows(), || format!("B has {} rows, A has {}", b.rows(), a.rows()))?;
        Ok(Self { a, b })
    }

    pub fn n_x(&self) -> usize {
        self.a.rows()
    }

    pub fn n_u(&self) -> usize {
        self.b.cols()
    }

    pub fn step(&self, x: &[f64], u: &[f64]) -> Result<Vector> {
        let mut next = self.a.matvec(x)?;
        let bu = self.b.matvec(u)?;
        for (n, v) in next.iter_mut().zip(bu) {
            *n += v;
        }
        Ok(next)
    }
}

/// Anything that maps a state to an input. Failing means the controller
/// has no admissible input at that state.
pub trait Controller {
    fn control(&self, x: &[f64]) -> Result<Vector>;
}

impl<F> Controller for F
where
    F: Fn(&[f64]) -> Result<Vector>,
{
    fn control(&self, x: &[f64]) -> Result<Vector> {
        self(x)
    }
}

/// Axis-aligned sampling region for initial states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    pub lo: Vector,
    pub hi: Vector,
}

impl SampleBox {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        self.lo.iter().zip(&self.hi).map(|(l, h)| l + (h - l) * rng.gen::<f64>()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(flatten)]
    pub system: LtiSystem,
    #[serde(rename = "Q")]
    pub q: Matrix,
    #[serde(rename = "R")]
    pub r: Matrix,
    #[serde(rename = "P")]
    pub p: Matrix,
    #[serde(rename = "N")]
    pub horizon: usize,
    #[serde(rename = "X")]
    pub state_set: Polytope,
    #[serde(rename = "U")]
    pub input_set: Polytope,
    #[serde(rename = "Xf", default)]
    pub terminal_set: Option<Polytope>,
    pub sample_box: SampleBox,
    #[serde(default = "default_settle_tol")]
    pub settle_tol: f64,
    pub k_end: usize,
}

fn default_settle_tol() -> f64 {
    1e-2
}

impl Scenario {
    pub fn n_x(&self) -> usize {
        self.system.n_x()
    }

    pub fn n_u(&self) -> usize {
        self.system.n_u()
    }

    pub fn validate(&self) -> Result<()> {
        let (nx, nu) = (self.n_x(), self.n_u());
        let sq = |m: &Matrix, n: usize, name: &str| {
            dim_check(m.rows() == n && m.cols() == n, || format!("{name} is {}x{}, expected {n}x{n}", m.rows(), m.cols()))
        };
        sq(&self.q, nx, "Q")?;
        sq(&self.p, nx, "P")?;
        sq(&self.r, nu, "R")?;
        dim_check(self.state_set.dim() == nx, || "X dimension".into())?;
        dim_check(self.input_set.dim() == nu, || "U dimension".into())?;
        if let Some(xf) = &self.terminal_set {
            dim_check(xf.dim() == nx, || "Xf dimension".into())?;
        }
        dim_check(self.sample_box.dim() == nx && self.sample_box.hi.len() == nx, || "sample_box dimension".into())?;
        if self.horizon == 0 {
            return Err(Error::InvalidInput("horizon N must be at least 1".into()));
        }
        for (m, name, floor) in [(&self.q, "Q", -1e-10), (&self.p, "P", -1e-10), (&self.r, "R", 1e-10)] {
            if !m.is_symmetric(1e-10) {
                return Err(Error::InvalidInput(format!("{name} is not symmetric")));
            }
            let lmin = min_eigenvalue(m)?;
            if lmin < floor {
                return Err(Error::InvalidInput(format!("{name} has eigenvalue {lmin:e} below {floor:e}")));
            }
        }
        if !(self.settle_tol > 0.0) {
            return Err(Error::InvalidInput("settle_tol must be positive".into()));
        }
        Ok(())
    }

    /// Stable identifier of the scenario contents (FNV-1a over its JSON form).
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        let mut h: u64 = 0xcbf29ce484222325;
        for b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }

    pub fn with_horizon(&self, n: usize) -> Scenario {
        Scenario { horizon: n, ..self.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vector>,
    pub inputs: Vec<Vector>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Closed-loop simulation for `k_end` steps. Stops with
/// [`Error::ControllerInfeasible`] at the first step the controller fails.
pub fn rollout<C: Controller + ?Sized>(sys: &LtiSystem, controller: &C, x0: &[f64], k_end: usize) -> Result<Trajectory> {
    dim_check(x0.len() == sys.n_x(), || format!("x0 has length {}, system has {} states", x0.len(), sys.n_x()))?;
    let mut states = Vec::with_capacity(k_end + 1);
    let mut inputs = Vec::with_capacity(k_end);
    states.push(x0.to_vec());
    for k in 0..k_end {
        let x = &states[k];
        let u = controller.control(x).map_err(|_| Error::ControllerInfeasible { step: k })?;
        let next = sys.step(x, &u)?;
        inputs.push(u);
        states.push(next);
    }
    Ok(Trajectory { states, inputs })
}

/// First index from which every remaining state satisfies `‖x‖∞ ≤ tol`.
pub fn settling_time(traj: &Trajectory, tol: f64) -> Option<usize> {
    let mut settled = None;
    for (k, x) in traj.states.iter().enumerate().rev() {
        if norm_inf(x) <= tol {
            settled = Some(k);
        } else {
            break;
        }
    }
    settled
}

/// Mean settling time; trajectories that never settle count as `k_end`.
pub fn average_settling_time<'a, I>(trajs: I, tol: f64, k_end: usize) -> Result<f64>
where
    I: IntoIterator<Item = &'a Trajectory>,
{
    let times: Vec<usize> = trajs.into_iter().map(|t| settling_time(t, tol).unwrap_or(k_end)).collect();
    if times.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(times.iter().sum::<usize>() as f64 / times.len() as f64)
}

pub fn relative_ast(ast: f64, ast_reference: f64) -> f64 {
    ast / ast_reference
}

/// Stabilizing solution of the discrete algebraic Riccati equation,
/// by fixed-point iteration of the Riccati recursion.
pub fn solve_dare(sys: &LtiSystem, q: &Matrix, r: &Matrix) -> Result<Matrix> {
    let (a, b) = (&sys.a, &sys.b);
    let at = a.transpose();
    let bt = b.transpose();
    let mut p = q.clone();
    for _ in 0..200_000 {
        let pa = p.matmul(a)?;
        let pb = p.matmul(b)?;
        let s = r.add(&bt.matmul(&pb)?)?;
        let k = Cholesky::new(&s)?.solve_matrix(&bt.matmul(&pa)?)?;
        let next = q.add(&at.matmul(&pa)?)?.sub(&at.matmul(&pb)?.matmul(&k)?)?.symmetrize();
        let delta = next.sub(&p)?.max_abs();
        p = next;
        if delta <= 1e-13 * p.max_abs().max(1.0) {
            return Ok(p);
        }
    }
    Err(Error::NoConvergence(200_000))
}

pub const SCENARIO_NAMES: [&str; 3] = ["oscillator", "oscillating_masses", "inverted_pendulum"];

/// The three benchmark problems with their published matrices.
pub fn builtin_scenario(name: &str) -> Result<Scenario> {
    match name {
        "oscillator" => {
            let a = Matrix::from_rows(&[[0.5403, 0.8415], [0.8415, 0.5403]])?;
            let b = Matrix::from_rows(&[[-0.4597], [0.8415]])?;
            let state_set = Polytope::symmetric_box(&[1.0, 1.0])?;
            Ok(Scenario {
                system: LtiSystem::new(a, b)?,
                q: Matrix::identity(2).scale(2.0),
                r: Matrix::identity(1),
                p: Matrix::zeros(2, 2),
                horizon: 1,
                sample_box: box_of(&state_set),
                state_set,
                input_set: Polytope::symmetric_box(&[1.0])?,
                terminal_set: None,
                settle_tol: 1e-2,
                k_end: 30,
            })
        }
        "oscillating_masses" => {
            let a = Matrix::from_rows(&[
                [0.763, 0.460, 0.115, 0.020],
                [-0.899, 0.763, 0.420, 0.115],
                [0.115, 0.020, 0.763, 0.460],
                [0.420, 0.115, -0.899, 0.763],
            ])?;
            let b = Matrix::from_rows(&[[0.014], [0.063], [0.221], [0.367]])?;
            weighted_scenario(a, b, &[4.0, 10.0, 4.0, 10.0], 0.5, 7, 120)
        }
        "inverted_pendulum" => {
            let a = Matrix::from_rows(&[
                [1.0, 0.1, 0.0, 0.0],
                [0.0, 0.9818, 0.2673, 0.0],
                [0.0, 0.0, 1.0, 0.1],
                [0.0, -0.0455, 3.1182, 1.0],
            ])?;
            let b = Matrix::from_rows(&[[0.0], [0.1818], [0.0], [0.4546]])?;
            weighted_scenario(a, b, &[1.0, 1.5, 0.35, 1.0], 1.0, 10, 150)
        }
        other => Err(Error::UnknownScenario(other.to_string())),
    }
}

/// Q = I, R = 0.1·I and P from the Riccati equation.
fn weighted_scenario(a: Matrix, b: Matrix, state_bounds: &[f64], input_bound: f64, horizon: usize, k_end: usize) -> Result<Scenario> {
    let system = LtiSystem::new(a, b)?;
    let q = Matrix::identity(system.n_x());
    let r = Matrix::identity(system.n_u()).scale(0.1);
    let p = solve_dare(&system, &q, &r)?;
    let state_set = Polytope::symmetric_box(state_bounds)?;
    Ok(Scenario {
        system,
        q,
        r,
        p,
        horizon,
        sample_box: box_of(&state_set),
        state_set,
        input_set: Polytope::symmetric_box(&[input_bound])?,
        terminal_set: None,
        settle_tol: 1e-2,
        k_end,
    })
}

fn box_of(p: &Polytope) -> SampleBox {
    let (lo, hi) = p.as_box().expect("builtin state sets are boxes");
    SampleBox { lo, hi }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn traj(states: &[f64]) -> Trajectory {
        Trajectory {
            states: states.iter().map(|s| vec![*s]).collect(),
            inputs: vec![vec![0.0]; states.len() - 1],
        }
    }

    #[test]
    fn step_cases() {
        let sys = LtiSystem::new(Matrix::identity(2), Matrix::zeros(2, 1)).unwrap();
        assert_eq!(sys.step(&[1.0, 2.0], &[5.0]).unwrap(), vec![1.0, 2.0]);
        let osc = builtin_scenario("oscillator").unwrap();
        assert_eq!(osc.system.step(&[1.0, 0.0], &[0.0]).unwrap(), vec![0.5403, 0.8415]);
        assert!(matches!(sys.step(&[1.0], &[0.0]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn step_matches_hand_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Matrix::from_row_major(3, 3, (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let b = Matrix::from_row_major(3, 2, (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let sys = LtiSystem::new(a.clone(), b.clone()).unwrap();
        let x = [0.3, -0.7, 1.1];
        let u = [0.5, -2.0];
        let got = sys.step(&x, &u).unwrap();
        for i in 0..3 {
            let mut acc = 0.0;
            for j in 0..3 {
                acc += a[(i, j)] * x[j];
            }
            for j in 0..2 {
                acc += b[(i, j)] * u[j];
            }
            assert_eq!(got[i], acc);
        }
    }

    #[test]
    fn rollout_zero_and_deadbeat() {
        let sys = LtiSystem::new(Matrix::zeros(2, 2), Matrix::zeros(2, 1)).unwrap();
        let zero = |_: &[f64]| -> Result<Vector> { Ok(vec![0.0]) };
        let t = rollout(&sys, &zero, &[1.0, -1.0], 5).unwrap();
        assert_eq!(t.states.len(), 6);
        assert!(t.states[1..].iter().all(|x| x == &vec![0.0, 0.0]));

        let scalar = LtiSystem::new(Matrix::identity(1), Matrix::identity(1)).unwrap();
        let deadbeat = |x: &[f64]| -> Result<Vector> { Ok(vec![-x[0]]) };
        let t = rollout(&scalar, &deadbeat, &[3.0], 4).unwrap();
        assert!(t.states[1..].iter().all(|x| x[0] == 0.0));
    }

    #[test]
    fn rollout_reports_failing_step() {
        let sys = LtiSystem::new(Matrix::identity(1), Matrix::identity(1)).unwrap();
        let picky = |x: &[f64]| -> Result<Vector> {
            if x[0] > 2.5 {
                Err(Error::Infeasible)
            } else {
                Ok(vec![1.0])
            }
        };
        let err = rollout(&sys, &picky, &[0.0], 10).unwrap_err();
        assert!(matches!(err, Error::ControllerInfeasible { step: 3 }));
    }

    #[test]
    fn settling_examples() {
        assert_eq!(settling_time(&traj(&[0.0, 0.0, 0.0]), 1e-2), Some(0));
        assert_eq!(settling_time(&traj(&[1.0, 0.005, 0.003]), 1e-2), Some(1));
        assert_eq!(settling_time(&traj(&[1.0, 0.005, 0.02, 0.001]), 1e-2), Some(3));
        assert_eq!(settling_time(&traj(&[1.0, 0.5]), 1e-2), None);
    }

    #[test]
    fn ast_examples() {
        let a = traj(&[1.0, 1.0, 0.0, 0.0, 0.0]);
        let b = traj(&[1.0, 1.0, 1.0, 1.0, 0.0]);
        let ast = average_settling_time([&a, &b], 1e-2, 4).unwrap();
        assert_eq!(ast, 3.0);
        assert_eq!(relative_ast(ast, ast), 1.0);
        let unsettled = traj(&[1.0, 1.0, 1.0]);
        assert_eq!(average_settling_time([&unsettled], 1e-2, 2).unwrap(), 2.0);
        assert!(matches!(average_settling_time(std::iter::empty(), 1e-2, 2), Err(Error::EmptySet)));
    }

    #[test]
    fn builtin_matrices() {
        let osc = builtin_scenario("oscillator").unwrap();
        assert_eq!(osc.system.a[(0, 0)], 0.5403);
        osc.validate().unwrap();
        let om = builtin_scenario("oscillating_masses").unwrap();
        assert_eq!(om.system.b.col(0), vec![0.014, 0.063, 0.221, 0.367]);
        om.validate().unwrap();
        let ip = builtin_scenario("inverted_pendulum").unwrap();
        assert_eq!(ip.system.a[(3, 2)], 3.1182);
        assert_eq!(ip.state_set.as_box().unwrap().1, vec![1.0, 1.5, 0.35, 1.0]);
        ip.validate().unwrap();
        assert!(matches!(builtin_scenario("nope"), Err(Error::UnknownScenario(_))));
    }

    #[test]
    fn dare_fixed_point() {
        let om = builtin_scenario("oscillating_masses").unwrap();
        let p = &om.p;
        let (a, b) = (&om.system.a, &om.system.b);
        let pb = p.matmul(b).unwrap();
        let s = om.r.add(&b.transpose().matmul(&pb).unwrap()).unwrap();
        let k = Cholesky::new(&s).unwrap().solve_matrix(&pb.transpose().matmul(a).unwrap()).unwrap();
        let rhs = om.q.add(&a.transpose().matmul(&p.matmul(a).unwrap()).unwrap()).unwrap()
            .sub(&a.transpose().matmul(&pb).unwrap().matmul(&k).unwrap()).unwrap();
        assert!(rhs.sub(p).unwrap().max_abs() < 1e-8);
    }

    #[test]
    fn scenario_json_roundtrip() {
        let om = builtin_scenario("oscillating_masses").unwrap();
        let s = serde_json::to_string(&om).unwrap();
        for key in ["\"A\"", "\"B\"", "\"Q\"", "\"R\"", "\"P\"", "\"N\"", "\"X\"", "\"U\"", "\"Xf\"", "\"sample_box\"", "\"settle_tol\"", "\"k_end\""] {
            assert!(s.contains(key), "{key}");
        }
        let back: Scenario = serde_json::from_str(&s).unwrap();
        assert_eq!(back, om);
    }

    proptest::proptest! {
        #[test]
        fn stable_zero_input_bound(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Matrix::from_row_major(3, 3, (0..9).map(|_| rng.gen_range(-0.3..0.3)).collect()).unwrap();
            let sys = LtiSystem::new(a.clone(), Matrix::zeros(3, 1)).unwrap();
            let zero = |_: &[f64]| -> Result<Vector> { Ok(vec![0.0]) };
            let x0: Vector = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let t = rollout(&sys, &zero, &x0, 15).unwrap();
            let an = a.norm_inf();
            for (k, x) in t.states.iter().enumerate() {
                proptest::prop_assert!(norm_inf(x) <= an.powi(k as i32) * norm_inf(&x0) + 1e-12);
            }
        }

        #[test]
        fn settling_monotone_in_tol(vals in proptest::collection::vec(0.0f64..0.05, 2..12), t1 in 1e-3f64..0.05, t2 in 1e-3f64..0.05) {
            let tr = traj(&vals);
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            let s_lo = settling_time(&tr, lo).unwrap_or(usize::MAX);
            let s_hi = settling_time(&tr, hi).unwrap_or(usize::MAX);
            proptest::prop_assert!(s_hi <= s_lo);
        }
    }
}
