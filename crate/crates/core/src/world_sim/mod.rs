//! Deterministic kinematic episode simulator.

pub mod world;

use std::fmt::Write as _;

use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{combine, CostSpec};
use crate::error::{Error, Result};
use crate::kinematics::{
    arm_position_jacobian, forward_kinematics, joint_limit_measure, manipulability, JointConfig, Pose2D,
    RobotModel,
};
use crate::scalar::{wrap_angle, Real};
use crate::stack::{compose_outputs, StackOfTasks};
use crate::tasks::{step_task, StepContext, TaskDictionary, TaskKind, TaskOutput, TaskState};

pub use world::{Circle, Mover, RangeSensor, Segment, SensorScan, World, WorldView, RAY_COUNT};

/// Where episodes start and how much the start is randomized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct InitSpec<T: Real = f64> {
    /// Nominal base pose (ignored for fixed-base models).
    #[serde(default)]
    pub base: Pose2D<T>,
    /// Nominal arm angles; mid-range when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm: Option<Vec<T>>,
    /// Half-widths of the uniform draw around `base` (x m, y m, θ rad).
    #[serde(default = "zero3")]
    pub base_spread: (T, T, T),
    /// Half-width of the uniform draw around each arm angle (rad).
    #[serde(default = "zero")]
    pub arm_spread: T,
    /// Extra clearance a drawn start must keep beyond `collision_distance` (m).
    #[serde(default = "default_margin")]
    pub margin: T,
}

impl<T: Real> Default for InitSpec<T> {
    fn default() -> Self {
        Self {
            base: Pose2D::default(),
            arm: None,
            base_spread: zero3(),
            arm_spread: T::zero(),
            margin: default_margin(),
        }
    }
}

fn zero<T: Real>() -> T {
    T::zero()
}

fn zero3<T: Real>() -> (T, T, T) {
    (T::zero(), T::zero(), T::zero())
}

fn default_margin<T: Real>() -> T {
    T::lit(0.05)
}

macro_rules! default_fn {
    ($name:ident, $v:expr) => {
        fn $name<T: Real>() -> T {
            T::lit($v)
        }
    };
}

default_fn!(default_dt, 0.01);
default_fn!(default_max_time, 20.0);
default_fn!(default_tolerance, 0.05);
default_fn!(default_collision, 0.02);
default_fn!(default_epsilon, 2.0);
default_fn!(default_lambda, 1e-3);
default_fn!(default_near, 1.0);
default_fn!(default_w_floor, 1e-6);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct EpisodeConfig<T: Real = f64> {
    #[serde(default = "default_dt")]
    pub dt: T,
    #[serde(default = "default_max_time")]
    pub max_time: T,
    /// Pose error norm counted as reaching the goal.
    #[serde(default = "default_tolerance")]
    pub goal_tolerance: T,
    #[serde(default = "default_collision")]
    pub collision_distance: T,
    /// Gain ε of the position-limit velocity clamp (1/s).
    #[serde(default = "default_epsilon")]
    pub epsilon_limit: T,
    /// Per-DOF speed caps; the whole command is scaled down to respect them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity_caps: Option<Vec<T>>,
    #[serde(default)]
    pub init: InitSpec<T>,
    #[serde(default)]
    pub rng_seed: u64,
    /// Damping λ of every pseudo-inverse.
    #[serde(default = "default_lambda")]
    pub lambda: T,
    /// Rays closer than this are kept in the trace (m).
    #[serde(default = "default_near")]
    pub near_range: T,
    /// Arm manipulability below which an IK episode is broken.
    #[serde(default = "default_w_floor")]
    pub w_floor: T,
}

impl<T: Real> Default for EpisodeConfig<T> {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            max_time: default_max_time(),
            goal_tolerance: default_tolerance(),
            collision_distance: default_collision(),
            epsilon_limit: default_epsilon(),
            velocity_caps: None,
            init: InitSpec::default(),
            rng_seed: 0,
            lambda: default_lambda(),
            near_range: default_near(),
            w_floor: default_w_floor(),
        }
    }
}

impl<T: Real> EpisodeConfig<T> {
    pub fn validate(&self, model: &RobotModel<T>) -> Result<()> {
        let pos = |v: T, path: &str| {
            if v > T::zero() {
                Ok(())
            } else {
                Err(Error::config(path, "must be positive"))
            }
        };
        pos(self.dt, "episode.dt")?;
        pos(self.epsilon_limit, "episode.epsilon_limit")?;
        pos(self.goal_tolerance, "episode.goal_tolerance")?;
        pos(self.near_range, "episode.near_range")?;
        pos(self.w_floor, "episode.w_floor")?;
        if !(self.max_time > self.dt) {
            return Err(Error::config("episode.max_time", "must exceed dt"));
        }
        if self.epsilon_limit * self.dt > T::one() {
            return Err(Error::config(
                "episode.epsilon_limit",
                "epsilon_limit * dt must not exceed 1 or joint limits can be overshot",
            ));
        }
        if self.collision_distance < T::zero() || self.lambda < T::zero() {
            return Err(Error::config("episode", "collision_distance and lambda must be non-negative"));
        }
        if let Some(caps) = &self.velocity_caps {
            if caps.len() != model.dof() {
                return Err(Error::config(
                    "episode.velocity_caps",
                    format!("expected {} caps, got {}", model.dof(), caps.len()),
                ));
            }
            if caps.iter().any(|c| !(*c > T::zero())) {
                return Err(Error::config("episode.velocity_caps", "caps must be positive"));
            }
        }
        if let Some(arm) = &self.init.arm {
            if arm.len() != model.arm_dof() {
                return Err(Error::config(
                    "episode.init.arm",
                    format!("expected {} angles, got {}", model.arm_dof(), arm.len()),
                ));
            }
        }
        let s = self.init.base_spread;
        if s.0 < T::zero() || s.1 < T::zero() || s.2 < T::zero() || self.init.arm_spread < T::zero() {
            return Err(Error::config("episode.init", "spreads must be non-negative"));
        }
        Ok(())
    }
}

/// How an episode ended.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", rename_all = "snake_case", tag = "reason")]
pub enum Termination<T: Real = f64> {
    /// `t` is the first of the two consecutive in-tolerance steps.
    GoalReached { t: T },
    Timeout,
    Collision { t: T },
    Singularity { t: T },
}

impl<T: Real> Termination<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Termination::GoalReached { .. } => "goal_reached",
            Termination::Timeout => "timeout",
            Termination::Collision { .. } => "collision",
            Termination::Singularity { .. } => "singularity",
        }
    }
}

/// One recorded simulation step.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow<T: Real = f64> {
    pub t: T,
    pub q: JointConfig<T>,
    /// End-effector pose.
    pub pose: Pose2D<T>,
    /// `goal ⊖ pose`.
    pub goal_error: Vector3<T>,
    pub err_norm: T,
    /// `(ray, distance)` for rays closer than the configured near range.
    pub near_rays: Vec<(u16, T)>,
    pub min_ray: T,
    pub w: T,
    pub w_mjl: T,
    /// Command applied after this row (zero on the final row).
    pub qdot: DVector<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeTrace<T: Real = f64> {
    pub rows: Vec<TraceRow<T>>,
    pub termination: Termination<T>,
    pub dt: T,
    pub max_time: T,
}

impl<T: Real> EpisodeTrace<T> {
    pub fn min_ray(&self) -> T {
        self.rows
            .iter()
            .map(|r| r.min_ray)
            .fold(T::max_value().unwrap_or_else(|| T::lit(1e300)), |a, b| a.min(b))
    }

    pub fn goal_time(&self) -> Option<T> {
        match self.termination {
            Termination::GoalReached { t } => Some(t),
            _ => None,
        }
    }

    pub fn csv_header(n: usize) -> String {
        let mut h = String::from("t");
        for i in 0..n {
            let _ = write!(h, ",q_{i}");
        }
        h.push_str(",err_norm,min_ray,w,w_mjl");
        for i in 0..n {
            let _ = write!(h, ",qdot_{i}");
        }
        h
    }

    pub fn to_csv(&self) -> String {
        let n = self.rows.first().map_or(0, |r| r.q.len());
        let mut out = Self::csv_header(n);
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{}", r.t.as_f64());
            for v in r.q.iter() {
                let _ = write!(out, ",{}", v.as_f64());
            }
            for v in [r.err_norm, r.min_ray, r.w, r.w_mjl] {
                let _ = write!(out, ",{}", v.as_f64());
            }
            for v in r.qdot.iter() {
                let _ = write!(out, ",{}", v.as_f64());
            }
            out.push('\n');
        }
        out
    }
}

/// Everything an episode needs besides the stack and the seed.
#[derive(Clone, Debug)]
pub struct Scenario<T: Real = f64> {
    pub model: RobotModel<T>,
    pub world: World<T>,
    pub dictionary: TaskDictionary<T>,
    pub cost: CostSpec<T>,
    pub episode: EpisodeConfig<T>,
}

impl<T: Real> Scenario<T> {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.world.validate()?;
        self.episode.validate(&self.model)?;
        if self.cost.max_rest() > self.episode.near_range {
            return Err(Error::config(
                "cost.safety_rest",
                "rest lengths must not exceed episode.near_range",
            ));
        }
        Ok(())
    }

    /// Runs one episode with initial-state seed `seed`.
    pub fn run(&self, stack: &StackOfTasks<T>, seed: u64) -> Result<(EpisodeTrace<T>, T)> {
        let mut cfg = self.episode.clone();
        cfg.rng_seed = seed;
        run_episode(stack, &self.world, &self.model, &self.dictionary, &self.cost, &cfg)
    }
}

/// Position-limit clamp `ε(q_min − q) ≤ q̇ ≤ ε(q_max − q)` on arm joints
/// (and on the base position against the workspace), then a uniform scale
/// so every component respects its cap.
pub fn clamp_velocities<T: Real>(
    qdot: &DVector<T>,
    q: &JointConfig<T>,
    model: &RobotModel<T>,
    cfg: &EpisodeConfig<T>,
) -> DVector<T> {
    let eps = cfg.epsilon_limit;
    let mut out = qdot.clone();
    let mut limit = |i: usize, lo: T, hi: T| {
        out[i] = out[i].max(eps * (lo - q[i])).min(eps * (hi - q[i]));
    };
    if model.base_enabled {
        limit(0, model.base_limits.x.0, model.base_limits.x.1);
        limit(1, model.base_limits.y.0, model.base_limits.y.1);
    }
    let off = model.base_dof();
    for (i, (lo, hi)) in model.joint_limits.iter().enumerate() {
        limit(off + i, *lo, *hi);
    }
    if let Some(caps) = &cfg.velocity_caps {
        let scale = caps
            .iter()
            .zip(out.iter())
            .fold(T::one(), |s, (cap, v)| if v.abs() > *cap { s.min(*cap / v.abs()) } else { s });
        out *= scale;
    }
    out
}

/// Draws a collision-free start uniformly around the nominal configuration.
pub fn randomize_initial<T: Real>(
    cfg: &EpisodeConfig<T>,
    model: &RobotModel<T>,
    world: &World<T>,
    seed: u64,
) -> Result<JointConfig<T>> {
    const ATTEMPTS: usize = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = &cfg.init;
    let mut nominal = model.mid_range(init.base);
    let off = model.base_dof();
    if let Some(arm) = &init.arm {
        for (i, a) in arm.iter().enumerate() {
            nominal[off + i] = *a;
        }
    }
    let mut draw = |half: T| -> T {
        if half > T::zero() {
            T::lit(rng.random_range(-1.0..1.0)) * half
        } else {
            T::zero()
        }
    };
    let needed = cfg.collision_distance + init.margin;
    for _ in 0..ATTEMPTS {
        let mut q = nominal.clone();
        if model.base_enabled {
            q[0] += draw(init.base_spread.0);
            q[1] += draw(init.base_spread.1);
            q[2] = wrap_angle(q[2] + draw(init.base_spread.2));
        }
        for (i, (lo, hi)) in model.joint_limits.iter().enumerate() {
            q[off + i] = (q[off + i] + draw(init.arm_spread)).max(*lo).min(*hi);
        }
        let base = model.base_pose(&q);
        if model.base_enabled && !model.base_limits.contains(base.x, base.y) {
            continue;
        }
        let view = world.view(T::zero(), model.base_radius);
        if view.scan(&base).min() > needed && world.clearance(base.x, base.y, model.base_radius, T::zero()) > needed {
            return Ok(q);
        }
    }
    Err(Error::Infeasible(format!(
        "no collision-free initial configuration after {ATTEMPTS} draws"
    )))
}

fn integrate<T: Real>(q: &mut JointConfig<T>, qdot: &DVector<T>, model: &RobotModel<T>, dt: T) {
    *q += qdot * dt;
    if model.base_enabled {
        q[0] = q[0].max(model.base_limits.x.0).min(model.base_limits.x.1);
        q[1] = q[1].max(model.base_limits.y.0).min(model.base_limits.y.1);
        q[2] = wrap_angle(q[2]);
    }
    let off = model.base_dof();
    for (i, (lo, hi)) in model.joint_limits.iter().enumerate() {
        q[off + i] = q[off + i].max(*lo).min(*hi);
    }
}

/// Mixes an episode seed with a task index into a distractor stream seed.
fn task_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs one episode: scan, step the active tasks, compose, clamp, integrate,
/// until the goal is held for two consecutive steps, time runs out, the base
/// collides, or the arm hits a singularity while IK is active.
pub fn run_episode<T: Real>(
    stack: &StackOfTasks<T>,
    world: &World<T>,
    model: &RobotModel<T>,
    dictionary: &TaskDictionary<T>,
    cost: &CostSpec<T>,
    cfg: &EpisodeConfig<T>,
) -> Result<(EpisodeTrace<T>, T)> {
    stack.validate(dictionary)?;
    let n = model.dof();
    let mut q = randomize_initial(cfg, model, world, cfg.rng_seed)?;

    let mut active = Vec::new();
    for entry in stack.active_entries() {
        let idx = dictionary.index_of(&entry.task_id).expect("validated");
        let def = &dictionary.tasks()[idx];
        active.push((def, entry.params, TaskState::new(def.kind, task_seed(cfg.rng_seed, idx))));
    }
    let ik_active = active.iter().any(|(d, _, _)| d.kind == TaskKind::Ik);
    let watch_singularity = ik_active && model.arm_dof() >= 2;

    let steps = (cfg.max_time / cfg.dt).round().to_usize().unwrap_or(0);
    let mut rows: Vec<TraceRow<T>> = Vec::with_capacity(steps + 1);
    let mut prev_in_tolerance = false;
    let mut termination = Termination::Timeout;
    for k in 0..=steps {
        let t = T::from_usize(k).unwrap() * cfg.dt;
        let base = model.base_pose(&q);
        let view = world.view(t, model.base_radius);
        let scan = view.scan(&base);
        let pose = forward_kinematics(model, &q)?;
        let goal_error = pose.error_to(&world.goal);
        let err_norm = goal_error.norm();
        let w = if model.arm_dof() > 0 {
            manipulability(&arm_position_jacobian(model, &q)?)
        } else {
            T::zero()
        };
        let w_mjl = joint_limit_measure(&q, model);
        let min_ray = scan.min();
        let near_rays = scan
            .distances
            .iter()
            .enumerate()
            .filter(|(_, d)| **d < cfg.near_range)
            .map(|(i, d)| (i as u16, *d))
            .collect();
        let mut row = TraceRow {
            t,
            q: q.clone(),
            pose,
            goal_error,
            err_norm,
            near_rays,
            min_ray,
            w,
            w_mjl,
            qdot: DVector::zeros(n),
        };

        let clearance = world.clearance(base.x, base.y, model.base_radius, t);
        let in_tolerance = err_norm <= cfg.goal_tolerance;
        let ended = if model.base_enabled && (min_ray <= cfg.collision_distance || clearance <= cfg.collision_distance) {
            Some(Termination::Collision { t })
        } else if in_tolerance && prev_in_tolerance {
            Some(Termination::GoalReached { t: t - cfg.dt })
        } else if watch_singularity && w < cfg.w_floor {
            Some(Termination::Singularity { t })
        } else if k == steps {
            Some(Termination::Timeout)
        } else {
            None
        };
        prev_in_tolerance = in_tolerance;
        if let Some(end) = ended {
            termination = end;
            rows.push(row);
            break;
        }

        let ctx = StepContext {
            model,
            q: &q,
            t,
            goal: world.goal,
            scan: &scan,
            sensor: &view,
            lambda: cfg.lambda,
        };
        let outputs = active
            .iter_mut()
            .map(|(def, params, state)| step_task(def, params, state, &ctx))
            .collect::<Result<Vec<TaskOutput<T>>>>()?;
        let qdot = compose_outputs(&outputs, n, cfg.lambda)?;
        let qdot = clamp_velocities(&qdot, &q, model, cfg);
        if qdot.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular(format!("non-finite joint velocity at t = {}", t.as_f64())));
        }
        row.qdot = qdot.clone();
        rows.push(row);
        integrate(&mut q, &qdot, model, cfg.dt);
    }
    let trace = EpisodeTrace {
        rows,
        termination,
        dt: cfg.dt,
        max_time: cfg.max_time,
    };
    let c = combine(cost, &trace);
    Ok((trace, c))
}
