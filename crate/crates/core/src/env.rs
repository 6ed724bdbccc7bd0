//! Desk-scale deterministic-physics continuous-control tasks, plus
//! vectorization and return normalization. The true reward exists only for
//! expert training and evaluation; the imitator never sees it.

use alloc::string::String;
use alloc::vec::Vec;

use crate::rng::{self, Rng};

pub const DT: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TaskId {
    PointMassReach,
    PendulumSwingup,
    CartpoleSwingup,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnknownTask(pub String);

impl core::fmt::Display for UnknownTask {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "unknown task id: {}", self.0)
    }
}

impl TaskId {
    pub fn parse(s: &str) -> Result<TaskId, UnknownTask> {
        match s {
            "point_mass_reach" => Ok(TaskId::PointMassReach),
            "pendulum_swingup" => Ok(TaskId::PendulumSwingup),
            "cartpole_swingup" => Ok(TaskId::CartpoleSwingup),
            other => Err(UnknownTask(String::from(other))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TaskId::PointMassReach => "point_mass_reach",
            TaskId::PendulumSwingup => "pendulum_swingup",
            TaskId::CartpoleSwingup => "cartpole_swingup",
        }
    }

    pub fn all() -> [TaskId; 3] {
        [TaskId::PointMassReach, TaskId::PendulumSwingup, TaskId::CartpoleSwingup]
    }

    pub fn state_dim(&self) -> usize {
        match self {
            TaskId::PointMassReach => 4,
            TaskId::PendulumSwingup => 3,
            TaskId::CartpoleSwingup => 5,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            TaskId::PointMassReach => 2,
            _ => 1,
        }
    }

    pub fn horizon(&self) -> u32 {
        match self {
            TaskId::CartpoleSwingup => 500,
            _ => 200,
        }
    }
}

/// Physical state; the observation vector is derived from it.
#[derive(Clone, Debug, PartialEq)]
enum Phys {
    /// pos (2), vel (2)
    PointMass { pos: [f64; 2], vel: [f64; 2] },
    /// angle from upright in [-pi, pi], angular velocity
    Pendulum { theta: f64, theta_dot: f64 },
    /// cart position/velocity, pole angle from upright, angular velocity
    Cartpole { x: f64, x_dot: f64, theta: f64, theta_dot: f64 },
}

#[derive(Clone, Debug)]
pub struct Env {
    pub task: TaskId,
    rng: Rng,
    phys: Phys,
    pub steps: u32,
    pub fault: bool,
}

pub struct StepOutcome {
    pub obs: Vec<f64>,
    pub reward: f64,
    /// True termination (only on numerical fault at desk scale); zeroes the
    /// bootstrap.
    pub terminated: bool,
    /// Time-limit truncation; does not zero the bootstrap.
    pub truncated: bool,
}

const PENDULUM_G: f64 = 10.0;
const PENDULUM_TORQUE: f64 = 2.0;
const PENDULUM_MAX_SPEED: f64 = 8.0;

fn wrap_angle(mut t: f64) -> f64 {
    while t > core::f64::consts::PI {
        t -= core::f64::consts::TAU;
    }
    while t < -core::f64::consts::PI {
        t += core::f64::consts::TAU;
    }
    t
}

impl Env {
    pub fn new(task: TaskId, seed: u64) -> Env {
        let mut env = Env {
            task,
            rng: rng::seeded(seed),
            phys: Phys::PointMass { pos: [0.0; 2], vel: [0.0; 2] },
            steps: 0,
            fault: false,
        };
        env.reset();
        env
    }

    /// Draw a fresh initial state from the task's (deliberately wide)
    /// initial distribution.
    pub fn reset(&mut self) {
        self.steps = 0;
        self.fault = false;
        self.phys = match self.task {
            TaskId::PointMassReach => {
                // Uniform in a disc of radius 1.5, velocity zero.
                let r = 1.5 * libm::sqrt(rng::uniform(&mut self.rng));
                let ang = rng::uniform_in(&mut self.rng, 0.0, core::f64::consts::TAU);
                Phys::PointMass { pos: [r * libm::cos(ang), r * libm::sin(ang)], vel: [0.0; 2] }
            }
            TaskId::PendulumSwingup => Phys::Pendulum {
                theta: rng::uniform_in(&mut self.rng, -core::f64::consts::PI, core::f64::consts::PI),
                theta_dot: rng::uniform_in(&mut self.rng, -1.0, 1.0),
            },
            TaskId::CartpoleSwingup => Phys::Cartpole {
                x: rng::uniform_in(&mut self.rng, -0.5, 0.5),
                x_dot: 0.0,
                theta: wrap_angle(
                    core::f64::consts::PI + rng::uniform_in(&mut self.rng, -0.6, 0.6),
                ),
                theta_dot: rng::uniform_in(&mut self.rng, -0.5, 0.5),
            },
        };
    }

    pub fn observe(&self) -> Vec<f64> {
        match &self.phys {
            Phys::PointMass { pos, vel } => alloc::vec![pos[0], pos[1], vel[0], vel[1]],
            Phys::Pendulum { theta, theta_dot } => {
                alloc::vec![libm::cos(*theta), libm::sin(*theta), *theta_dot]
            }
            Phys::Cartpole { x, x_dot, theta, theta_dot } => {
                alloc::vec![*x, *x_dot, libm::cos(*theta), libm::sin(*theta), *theta_dot]
            }
        }
    }

    /// Semi-implicit Euler step. Actions are clipped to [-1, 1] per
    /// dimension.
    pub fn step(&mut self, action: &[f64]) -> StepOutcome {
        assert_eq!(action.len(), self.task.action_dim(), "action dimension");
        let a: Vec<f64> = action.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        let reward = match &mut self.phys {
            Phys::PointMass { pos, vel } => {
                let force_scale = 4.0;
                let drag = 1.0;
                for i in 0..2 {
                    vel[i] += (force_scale * a[i] - drag * vel[i]) * DT;
                    pos[i] += vel[i] * DT;
                    // Soft walls keep the state space bounded, matching
                    // the bounded-support assumption of the analysis.
                    if pos[i].abs() > 3.0 {
                        pos[i] = pos[i].clamp(-3.0, 3.0);
                        vel[i] = 0.0;
                    }
                }
                let d2 = pos[0] * pos[0] + pos[1] * pos[1];
                -d2 - 0.01 * (a[0] * a[0] + a[1] * a[1])
            }
            Phys::Pendulum { theta, theta_dot } => {
                // Rod pendulum, theta = 0 upright: theta_dd = 3g/(2l) sin
                // theta + 3 tau / (m l^2).
                let torque = PENDULUM_TORQUE * a[0];
                let acc = 1.5 * PENDULUM_G * libm::sin(*theta) + 3.0 * torque;
                *theta_dot = (*theta_dot + acc * DT).clamp(-PENDULUM_MAX_SPEED, PENDULUM_MAX_SPEED);
                *theta = wrap_angle(*theta + *theta_dot * DT);
                libm::cos(*theta) - 0.01 * *theta_dot * *theta_dot - 0.001 * a[0] * a[0]
            }
            Phys::Cartpole { x, x_dot, theta, theta_dot } => {
                let (mc, mp, l, g) = (1.0, 0.1, 0.5, 9.8);
                let force = 10.0 * a[0];
                let (st, ct) = (libm::sin(*theta), libm::cos(*theta));
                let temp = (force + mp * l * *theta_dot * *theta_dot * st) / (mc + mp);
                let theta_acc =
                    (g * st - ct * temp) / (l * (4.0 / 3.0 - mp * ct * ct / (mc + mp)));
                let x_acc = temp - mp * l * theta_acc * ct / (mc + mp);
                *theta_dot += theta_acc * DT;
                *theta = wrap_angle(*theta + *theta_dot * DT);
                *x_dot += x_acc * DT;
                *x += *x_dot * DT;
                // Soft walls.
                if x.abs() > 2.5 {
                    *x = x.clamp(-2.5, 2.5);
                    *x_dot = 0.0;
                }
                libm::cos(*theta)
                    - 0.01 * *theta_dot * *theta_dot
                    - 0.001 * a[0] * a[0]
                    - 0.05 * *x * *x
            }
        };
        self.steps += 1;
        let obs = self.observe();
        let finite = obs.iter().all(|v| v.is_finite()) && reward.is_finite();
        if !finite {
            self.fault = true;
        }
        StepOutcome {
            obs,
            reward: if finite { reward } else { 0.0 },
            terminated: !finite,
            truncated: self.steps >= self.task.horizon(),
        }
    }
}

/// Fixed-width vector of environments stepped elementwise with auto-reset.
/// Interaction bookkeeping counts one vectorized step as `width()` true
/// environment interactions.
pub struct VecEnv {
    pub envs: Vec<Env>,
    /// Total environment interactions so far (increments by width per step).
    pub counter: u64,
}

pub struct VecStepOutcome {
    pub results: Vec<StepOutcome>,
}

impl VecEnv {
    pub fn new(task: TaskId, n: usize, base_seed: u64) -> VecEnv {
        VecEnv {
            envs: (0..n).map(|i| Env::new(task, base_seed.wrapping_add(i as u64))).collect(),
            counter: 0,
        }
    }

    pub fn width(&self) -> usize {
        self.envs.len()
    }

    pub fn observe(&self) -> Vec<Vec<f64>> {
        self.envs.iter().map(|e| e.observe()).collect()
    }

    /// Step every slot; slots that terminate or truncate reset in place
    /// (their next initial state comes from their own seeded stream).
    pub fn step(&mut self, actions: &[Vec<f64>]) -> VecStepOutcome {
        assert_eq!(actions.len(), self.envs.len());
        let results = self
            .envs
            .iter_mut()
            .zip(actions)
            .map(|(env, a)| {
                let out = env.step(a);
                if out.terminated || out.truncated {
                    env.reset();
                }
                out
            })
            .collect();
        self.counter += self.envs.len() as u64;
        VecStepOutcome { results }
    }
}

/// Per-task return anchors: 0 is a uniform-random policy, 1 the expert.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizationRefs {
    pub random_return: f64,
    pub expert_return: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DegenerateRefs;

impl core::fmt::Display for DegenerateRefs {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "normalization refs must satisfy expert_return > random_return")
    }
}

pub fn normalized_return(raw: f64, refs: &NormalizationRefs) -> Result<f64, DegenerateRefs> {
    let gap = refs.expert_return - refs.random_return;
    if gap <= 0.0 {
        return Err(DegenerateRefs);
    }
    Ok((raw - refs.random_return) / gap)
}

/// Roll one full episode, choosing actions with the given closure. Returns
/// the raw (true-reward) episode return.
pub fn rollout<F: FnMut(&[f64]) -> Vec<f64>>(env: &mut Env, mut policy: F) -> f64 {
    env.reset();
    let mut total = 0.0;
    let mut obs = env.observe();
    loop {
        let action = policy(&obs);
        let out = env.step(&action);
        total += out.reward;
        obs = out.obs;
        if out.terminated || out.truncated {
            break;
        }
    }
    total
}

/// Mean return of a uniform-random policy over `episodes` episodes.
pub fn random_policy_return(task: TaskId, seed: u64, episodes: usize) -> f64 {
    let mut env = Env::new(task, seed);
    let mut r = rng::seeded(seed ^ 0x9e3779b97f4a7c15);
    let adim = task.action_dim();
    let mut total = 0.0;
    for _ in 0..episodes {
        total += rollout(&mut env, |_| {
            (0..adim).map(|_| rng::uniform_in(&mut r, -1.0, 1.0)).collect()
        });
    }
    total / episodes as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_deterministic_given_seed() {
        for task in TaskId::all() {
            let a = Env::new(task, 123);
            let b = Env::new(task, 123);
            assert_eq!(a.observe(), b.observe());
        }
    }

    #[test]
    fn trajectories_are_bit_identical_across_runs() {
        for task in TaskId::all() {
            let mut a = Env::new(task, 9);
            let mut b = Env::new(task, 9);
            let adim = task.action_dim();
            let mut r = rng::seeded(1);
            for _ in 0..300 {
                let act: Vec<f64> = (0..adim).map(|_| rng::uniform_in(&mut r, -1.0, 1.0)).collect();
                let oa = a.step(&act);
                let ob = b.step(&act);
                assert_eq!(oa.obs, ob.obs);
                assert_eq!(oa.reward.to_bits(), ob.reward.to_bits());
            }
        }
    }

    #[test]
    fn point_mass_initial_velocity_zero_and_pos_in_disc() {
        for seed in 0..50 {
            let env = Env::new(TaskId::PointMassReach, seed);
            let o = env.observe();
            assert!(o[0] * o[0] + o[1] * o[1] <= 1.5 * 1.5 + 1e-12);
            assert_eq!(o[2], 0.0);
            assert_eq!(o[3], 0.0);
        }
    }

    #[test]
    fn pendulum_initial_distribution_bounds() {
        for seed in 0..50 {
            let mut env = Env::new(TaskId::PendulumSwingup, seed);
            env.reset();
            let o = env.observe();
            assert!(o[2].abs() <= 1.0);
            assert!((o[0] * o[0] + o[1] * o[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn point_mass_zero_action_zero_velocity_stays_put() {
        let mut env = Env::new(TaskId::PointMassReach, 3);
        let before = env.observe();
        let out = env.step(&[0.0, 0.0]);
        assert_eq!(out.obs[0], before[0]);
        assert_eq!(out.obs[1], before[1]);
    }

    #[test]
    fn point_mass_position_stays_inside_walls() {
        let mut env = Env::new(TaskId::PointMassReach, 5);
        for _ in 0..2_000 {
            let out = env.step(&[1.0, 1.0]);
            assert!(out.obs[0].abs() <= 3.0 && out.obs[1].abs() <= 3.0);
            if out.truncated {
                env.reset();
            }
        }
    }

    #[test]
    fn pendulum_stable_equilibrium_is_fixed() {
        let mut env = Env::new(TaskId::PendulumSwingup, 0);
        env.phys = Phys::Pendulum { theta: core::f64::consts::PI, theta_dot: 0.0 };
        for _ in 0..100 {
            env.step(&[0.0]);
        }
        if let Phys::Pendulum { theta, theta_dot } = env.phys {
            assert!((theta.abs() - core::f64::consts::PI).abs() < 1e-9);
            assert!(theta_dot.abs() < 1e-9);
        } else {
            unreachable!()
        }
    }

    #[test]
    fn pendulum_energy_conserved_without_torque() {
        // Rod pendulum energy with m = l = 1:
        // E = theta_dot^2 / 6 + (g / 2) cos theta.
        let energy = |theta: f64, theta_dot: f64| {
            theta_dot * theta_dot / 6.0 + 0.5 * PENDULUM_G * libm::cos(theta)
        };
        let mut env = Env::new(TaskId::PendulumSwingup, 0);
        let theta0 = core::f64::consts::PI - 0.05;
        env.phys = Phys::Pendulum { theta: theta0, theta_dot: 0.0 };
        let e0 = energy(theta0, 0.0);
        let mut max_drift: f64 = 0.0;
        for _ in 0..200 {
            env.step(&[0.0]);
            if let Phys::Pendulum { theta, theta_dot } = env.phys {
                max_drift = max_drift.max((energy(theta, theta_dot) - e0).abs());
            }
        }
        assert!(max_drift < 1e-3, "energy drift {max_drift}");
    }

    #[test]
    fn horizon_truncates() {
        let mut env = Env::new(TaskId::PointMassReach, 1);
        for i in 0..200 {
            let out = env.step(&[0.1, -0.1]);
            assert_eq!(out.truncated, i == 199);
            assert!(!out.terminated);
        }
    }

    #[test]
    fn vec_env_identical_slots_move_identically() {
        let mut v = VecEnv::new(TaskId::PendulumSwingup, 4, 7);
        // Force identical states.
        let template = v.envs[0].clone();
        for e in &mut v.envs {
            *e = template.clone();
        }
        let acts = alloc::vec![alloc::vec![0.3]; 4];
        let out = v.step(&acts);
        for r in &out.results[1..] {
            assert_eq!(r.obs, out.results[0].obs);
        }
    }

    #[test]
    fn vec_env_counter_increments_by_width() {
        let mut v = VecEnv::new(TaskId::PointMassReach, 4, 7);
        assert_eq!(v.counter, 0);
        let acts = alloc::vec![alloc::vec![0.0, 0.0]; 4];
        v.step(&acts);
        v.step(&acts);
        assert_eq!(v.counter, 8);
    }

    #[test]
    fn vec_env_only_done_slot_resets() {
        let mut v = VecEnv::new(TaskId::PointMassReach, 2, 7);
        // Push slot 0 to its horizon.
        v.envs[0].steps = 199;
        let pos_before_1 = v.envs[1].observe();
        let acts = alloc::vec![alloc::vec![0.5, 0.5]; 2];
        v.step(&acts);
        assert_eq!(v.envs[0].steps, 0, "slot 0 must have reset");
        assert_eq!(v.envs[1].steps, 1);
        assert_ne!(v.envs[1].observe(), pos_before_1);
    }

    #[test]
    fn normalized_return_anchors() {
        let refs = NormalizationRefs { random_return: -100.0, expert_return: -10.0 };
        assert_eq!(normalized_return(-100.0, &refs).unwrap(), 0.0);
        assert_eq!(normalized_return(-10.0, &refs).unwrap(), 1.0);
        assert!(normalized_return(-150.0, &refs).unwrap() < 0.0);
        let bad = NormalizationRefs { random_return: 0.0, expert_return: 0.0 };
        assert_eq!(normalized_return(1.0, &bad), Err(DegenerateRefs));
    }

    #[test]
    fn unknown_task_is_an_error() {
        assert!(TaskId::parse("mujoco_humanoid").is_err());
        assert_eq!(TaskId::parse("pendulum_swingup").unwrap(), TaskId::PendulumSwingup);
    }
}
