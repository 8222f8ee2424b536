//! The task dictionary: useful tasks, distractors, and their per-step laws.

pub mod distractor;
pub mod oa;
pub mod params;
pub mod trajectory;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{
    forward_kinematics, jacobian, joint_limit_gradient, joint_limit_measure, manipulability_gradient,
    pseudo_inverse, JacobianMatrix, JointConfig, Pose2D, RobotModel,
};
use crate::scalar::Real;
use crate::world_sim::world::{RangeSensor, SensorScan};

pub use distractor::{distractor_step, DistractorState};
pub use oa::{oa_task_step, OaState};
pub use params::{Bound, ParamBounds, ParamKind, TaskParams};
pub use trajectory::{plan_pose, plan_trajectory, TrajectoryPlan};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Ik,
    Oa,
    MaxManip,
    MaxMjl,
    BaseCircle,
    BaseSpin,
    EeCircle,
    JointOscillation,
}

impl TaskKind {
    pub fn is_distractor(self) -> bool {
        matches!(
            self,
            TaskKind::BaseCircle | TaskKind::BaseSpin | TaskKind::EeCircle | TaskKind::JointOscillation
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Ik => "ik",
            TaskKind::Oa => "oa",
            TaskKind::MaxManip => "max_manip",
            TaskKind::MaxMjl => "max_mjl",
            TaskKind::BaseCircle => "base_circle",
            TaskKind::BaseSpin => "base_spin",
            TaskKind::EeCircle => "ee_circle",
            TaskKind::JointOscillation => "joint_oscillation",
        }
    }

    /// Bounds and default values used when the configuration leaves them out.
    pub fn default_params<T: Real>(self) -> (ParamBounds<T>, TaskParams<T>) {
        let l = T::lit;
        let mut b = ParamBounds::default();
        let mut p = TaskParams::default();
        match self {
            TaskKind::Ik => {
                b.gamma_cl = Some(Bound::open_closed(l(0.0), l(2.0)));
                b.t_traj = Some(Bound::closed(l(0.5), l(15.0)));
                p.gamma_cl = Some(l(1.0));
                p.t_traj = Some(l(5.0));
            }
            TaskKind::Oa => {
                b.r_rest = Some(Bound::open_closed(l(0.0), l(1.0)));
                b.gamma_cl = Some(Bound::open_closed(l(0.0), l(2.0)));
                b.t_traj = Some(Bound::closed(l(0.2), l(5.0)));
                p.r_rest = Some(l(0.4));
                p.gamma_cl = Some(l(1.0));
                p.t_traj = Some(l(1.0));
            }
            TaskKind::MaxManip | TaskKind::MaxMjl => {
                b.gamma_ol = Some(Bound::open_closed(l(0.0), l(60.0)));
                p.gamma_ol = Some(l(10.0));
            }
            _ => {
                b.gamma_ol = Some(Bound::open_closed(l(0.0), l(2.0)));
                p.gamma_ol = Some(l(1.0));
            }
        }
        (b, p)
    }
}

/// Jacobian rows a distractor claims.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JMode {
    #[default]
    FullBlock,
    PartialBlock,
    Random,
}

/// One entry of the dictionary D.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct TaskDef<T: Real = f64> {
    pub id: String,
    pub kind: TaskKind,
    #[serde(default)]
    pub bounds: ParamBounds<T>,
    #[serde(default)]
    pub defaults: TaskParams<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_mode: Option<JMode>,
}

impl<T: Real> TaskDef<T> {
    pub fn new(id: impl Into<String>, kind: TaskKind) -> Self {
        let (bounds, defaults) = kind.default_params();
        Self {
            id: id.into(),
            kind,
            bounds,
            defaults,
            j_mode: kind.is_distractor().then_some(JMode::FullBlock),
        }
    }

    pub fn with_j_mode(mut self, mode: JMode) -> Self {
        self.j_mode = Some(mode);
        self
    }

    /// Fills missing bounds and defaults from the kind.
    fn resolve(&mut self) {
        let (kb, kp) = self.kind.default_params::<T>();
        for k in kb.kinds() {
            if self.bounds.get(k).is_none() {
                *self.bounds.slot(k) = kb.get(k);
            }
            if self.defaults.get(k).is_none() {
                *self.defaults.slot(k) = kp.get(k).map(|v| self.bounds.get(k).unwrap().clamp(v));
            }
        }
        if self.kind.is_distractor() && self.j_mode.is_none() {
            self.j_mode = Some(JMode::FullBlock);
        }
    }

    fn validate(&self, model: &RobotModel<T>, path: &str) -> Result<()> {
        let (kb, _) = self.kind.default_params::<T>();
        if self.bounds.kinds() != kb.kinds() {
            return Err(Error::config(
                format!("{path}.bounds"),
                format!("task kind `{}` takes parameters {:?}", self.kind.name(), names(&kb.kinds())),
            ));
        }
        for k in self.bounds.kinds() {
            self.bounds
                .get(k)
                .unwrap()
                .validate(&format!("{path}.bounds.{}", k.name()))?;
        }
        self.bounds.check(&self.defaults, &format!("{path}.defaults"))?;
        if self.j_mode.is_some() && !self.kind.is_distractor() {
            return Err(Error::config(format!("{path}.j_mode"), "only distractors take a j_mode"));
        }
        let need_base = matches!(self.kind, TaskKind::Oa | TaskKind::BaseCircle | TaskKind::BaseSpin);
        if need_base && !model.base_enabled {
            return Err(Error::config(
                format!("{path}.kind"),
                format!("`{}` requires a mobile base", self.kind.name()),
            ));
        }
        let min_links = match self.kind {
            TaskKind::MaxManip => 2,
            TaskKind::MaxMjl | TaskKind::EeCircle | TaskKind::JointOscillation => 1,
            _ => 0,
        };
        if model.arm_dof() < min_links {
            return Err(Error::config(
                format!("{path}.kind"),
                format!("`{}` requires at least {min_links} arm link(s)", self.kind.name()),
            ));
        }
        Ok(())
    }
}

fn names(kinds: &[ParamKind]) -> Vec<&'static str> {
    kinds.iter().map(|k| k.name()).collect()
}

/// The dictionary D of tasks a stack is built from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", transparent)]
pub struct TaskDictionary<T: Real = f64> {
    tasks: Vec<TaskDef<T>>,
}

impl<T: Real> TaskDictionary<T> {
    /// Resolves kind defaults and validates every task against `model`.
    pub fn new(mut tasks: Vec<TaskDef<T>>, model: &RobotModel<T>) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::config("tasks", "dictionary is empty"));
        }
        for (i, t) in tasks.iter_mut().enumerate() {
            t.resolve();
            t.validate(model, &format!("tasks[{i}]"))?;
        }
        for (i, t) in tasks.iter().enumerate() {
            if tasks[..i].iter().any(|o| o.id == t.id) {
                return Err(Error::config(format!("tasks[{i}].id"), format!("duplicate id `{}`", t.id)));
            }
        }
        Ok(Self { tasks })
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn tasks(&self) -> &[TaskDef<T>] {
        &self.tasks
    }

    pub fn get(&self, id: &str) -> Option<&TaskDef<T>> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t.id == id)
    }
}

/// Scalars a task reports alongside its command.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Diagnostics<T: Real = f64> {
    /// Tracking error norm ‖k_d(t) ⊖ k(q)‖.
    pub err_norm: Option<T>,
    /// Total pseudo-energy Σ ε over activated rays.
    pub sigma: Option<T>,
    pub active_rays: usize,
    pub w: Option<T>,
    pub w_mjl: Option<T>,
    /// The manipulability gradient was suppressed near a singularity.
    pub singular: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskOutput<T: Real = f64> {
    pub qdot: DVector<T>,
    /// Rows protected from lower-priority tasks; may have zero rows.
    pub j_claim: JacobianMatrix<T>,
    pub diagnostics: Diagnostics<T>,
}

impl<T: Real> TaskOutput<T> {
    pub fn idle(n: usize) -> Self {
        Self {
            qdot: DVector::zeros(n),
            j_claim: DMatrix::zeros(0, n),
            diagnostics: Diagnostics::default(),
        }
    }
}

/// `q̇_d = J†(ẋ_d + γ_CL e)` with `e = k_d(t) ⊖ k(q)`; claims the full Jacobian.
pub fn ik_task_step<T: Real>(
    model: &RobotModel<T>,
    q: &JointConfig<T>,
    plan: &TrajectoryPlan<T>,
    t: T,
    params: &TaskParams<T>,
    lambda: T,
) -> Result<TaskOutput<T>> {
    let gamma = params.require(ParamKind::GammaCl)?;
    let pose = forward_kinematics(model, q)?;
    let e = pose.error_to(&plan.pose(t));
    let v = plan.velocity(t);
    let xdot = nalgebra::Vector3::new(v[0], v[1], v[2]) + e * gamma;
    let j = jacobian(model, q)?;
    let pinv = pseudo_inverse(&j, lambda);
    let xdot = DVector::from_column_slice(xdot.as_slice());
    Ok(TaskOutput {
        qdot: pinv * xdot,
        j_claim: j,
        diagnostics: Diagnostics {
            err_norm: Some(e.norm()),
            ..Default::default()
        },
    })
}

/// `q̇_d = γ_OL ∂w/∂q`; claims nothing.
pub fn manip_task_step<T: Real>(
    model: &RobotModel<T>,
    q: &JointConfig<T>,
    params: &TaskParams<T>,
) -> Result<TaskOutput<T>> {
    let gamma = params.require(ParamKind::GammaOl)?;
    let g = manipulability_gradient(model, q)?;
    Ok(TaskOutput {
        qdot: g.gradient * gamma,
        j_claim: DMatrix::zeros(0, model.dof()),
        diagnostics: Diagnostics {
            w: Some(g.w),
            singular: g.singular,
            ..Default::default()
        },
    })
}

/// `q̇_d = γ_OL ∂w_MJL/∂q`; claims nothing.
pub fn mjl_task_step<T: Real>(
    model: &RobotModel<T>,
    q: &JointConfig<T>,
    params: &TaskParams<T>,
) -> Result<TaskOutput<T>> {
    model.check_config(q)?;
    let gamma = params.require(ParamKind::GammaOl)?;
    Ok(TaskOutput {
        qdot: joint_limit_gradient(q, model) * gamma,
        j_claim: DMatrix::zeros(0, model.dof()),
        diagnostics: Diagnostics {
            w_mjl: Some(joint_limit_measure(q, model)),
            ..Default::default()
        },
    })
}

/// Mutable per-episode state of one task.
#[derive(Clone, Debug)]
pub enum TaskState<T: Real = f64> {
    Ik { plan: Option<TrajectoryPlan<T>> },
    Oa(OaState<T>),
    Distractor(Box<DistractorState<T>>),
    Stateless,
}

impl<T: Real> TaskState<T> {
    /// Fresh state; `seed` drives random Jacobian rows.
    pub fn new(kind: TaskKind, seed: u64) -> Self {
        match kind {
            TaskKind::Ik => TaskState::Ik { plan: None },
            TaskKind::Oa => TaskState::Oa(OaState::default()),
            k if k.is_distractor() => {
                TaskState::Distractor(Box::new(DistractorState::new(ChaCha8Rng::seed_from_u64(seed))))
            }
            _ => TaskState::Stateless,
        }
    }
}

/// Everything a task may read at one simulation step.
pub struct StepContext<'a, T: Real> {
    pub model: &'a RobotModel<T>,
    pub q: &'a JointConfig<T>,
    pub t: T,
    pub goal: Pose2D<T>,
    pub scan: &'a SensorScan<T>,
    pub sensor: &'a dyn RangeSensor<T>,
    pub lambda: T,
}

/// Runs one step of task `def` with parameters `params`.
pub fn step_task<T: Real>(
    def: &TaskDef<T>,
    params: &TaskParams<T>,
    state: &mut TaskState<T>,
    ctx: &StepContext<'_, T>,
) -> Result<TaskOutput<T>> {
    match (def.kind, state) {
        (TaskKind::Ik, TaskState::Ik { plan }) => {
            if plan.is_none() {
                let start = forward_kinematics(ctx.model, ctx.q)?;
                let dur = params.require(ParamKind::TTraj)?;
                *plan = Some(plan_pose(&start, &ctx.goal, ctx.t, dur)?);
            }
            ik_task_step(ctx.model, ctx.q, plan.as_ref().unwrap(), ctx.t, params, ctx.lambda)
        }
        (TaskKind::Oa, TaskState::Oa(s)) => {
            oa_task_step(ctx.model, ctx.q, ctx.scan, ctx.sensor, ctx.t, params, s, ctx.lambda)
        }
        (TaskKind::MaxManip, _) => manip_task_step(ctx.model, ctx.q, params),
        (TaskKind::MaxMjl, _) => mjl_task_step(ctx.model, ctx.q, params),
        (kind, TaskState::Distractor(s)) => distractor_step(
            kind,
            ctx.model,
            ctx.q,
            ctx.t,
            params,
            def.j_mode.unwrap_or_default(),
            s,
            ctx.lambda,
        ),
        (kind, _) => Err(Error::Protocol(format!(
            "task `{}` ({}) stepped with a mismatched state",
            def.id,
            kind.name()
        ))),
    }
}
