//! Tasks that move the robot without serving the mission.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::params::{ParamKind, TaskParams};
use super::{Diagnostics, JMode, TaskKind, TaskOutput};
use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics, jacobian, pseudo_inverse, JointConfig, Pose2D, RobotModel};
use crate::scalar::Real;

/// Radius of the base and end-effector circles (m).
pub const CIRCLE_RADIUS: f64 = 0.5;
/// Period of the base and end-effector circles (s).
pub const CIRCLE_PERIOD: f64 = 8.0;
pub const SPIN_PERIOD: f64 = 6.0;
pub const OSCILLATION_PERIOD: f64 = 5.0;
/// Joint oscillation amplitude as a fraction of the half range.
pub const OSCILLATION_SPAN: f64 = 0.9;

/// Episode-local memory of a distractor.
#[derive(Clone, Debug)]
pub struct DistractorState<T: Real = f64> {
    /// Base and end-effector poses at the first step.
    origin: Option<(Pose2D<T>, Pose2D<T>)>,
    rng: ChaCha8Rng,
}

impl<T: Real> DistractorState<T> {
    pub fn new(rng: ChaCha8Rng) -> Self {
        Self { origin: None, rng }
    }
}

fn circle<T: Real>(center: (T, T), t: T) -> ((T, T), (T, T)) {
    let rho = T::lit(CIRCLE_RADIUS);
    let w = T::two_pi() / T::lit(CIRCLE_PERIOD);
    let (s, c) = (w * t).sin_cos();
    (
        (center.0 + rho * c, center.1 + rho * s),
        (-rho * w * s, rho * w * c),
    )
}

fn claim<T: Real>(
    kind: TaskKind,
    model: &RobotModel<T>,
    mode: JMode,
    rng: &mut ChaCha8Rng,
) -> DMatrix<T> {
    let n = model.dof();
    let half = n.div_ceil(2);
    match mode {
        JMode::FullBlock => DMatrix::identity(n, n),
        JMode::PartialBlock => {
            let rows = if matches!(kind, TaskKind::BaseCircle | TaskKind::BaseSpin) {
                3
            } else {
                half
            };
            DMatrix::identity(rows, n)
        }
        JMode::Random => DMatrix::from_fn(half, n, |_, _| {
            let z: f64 = rng.sample(StandardNormal);
            T::lit(z)
        }),
    }
}

/// One step of a distractor with gain `γ_OL` and claim mode `mode`.
///
/// * `base_circle`: base tracks a circle through its initial position.
/// * `base_spin`: `θ̇ = A ω cos(ωt)` with `A = γ_OL`.
/// * `ee_circle`: end effector tracks a circle through its initial position.
/// * `joint_oscillation`: each arm joint follows a sinusoid between its limits.
#[allow(clippy::too_many_arguments)]
pub fn distractor_step<T: Real>(
    kind: TaskKind,
    model: &RobotModel<T>,
    q: &JointConfig<T>,
    t: T,
    params: &TaskParams<T>,
    mode: JMode,
    state: &mut DistractorState<T>,
    lambda: T,
) -> Result<TaskOutput<T>> {
    model.check_config(q)?;
    let gamma = params.require(ParamKind::GammaOl)?;
    let needs_base = matches!(kind, TaskKind::BaseCircle | TaskKind::BaseSpin);
    if !kind.is_distractor() || (needs_base && !model.base_enabled) || (!needs_base && model.arm_dof() == 0) {
        return Err(Error::config(
            "kind",
            format!("`{}` does not match the robot model", kind.name()),
        ));
    }
    let n = model.dof();
    let ee = forward_kinematics(model, q)?;
    let base = model.base_pose(q);
    let (base0, ee0) = *state.origin.get_or_insert((base, ee));
    let rho = T::lit(CIRCLE_RADIUS);
    let mut qdot = DVector::zeros(n);
    match kind {
        TaskKind::BaseCircle => {
            let (p, v) = circle((base0.x - rho, base0.y), t);
            qdot[0] = v.0 + gamma * (p.0 - base.x);
            qdot[1] = v.1 + gamma * (p.1 - base.y);
        }
        TaskKind::BaseSpin => {
            let w = T::two_pi() / T::lit(SPIN_PERIOD);
            qdot[2] = gamma * w * (w * t).cos();
        }
        TaskKind::EeCircle => {
            let (p, v) = circle((ee0.x - rho, ee0.y), t);
            let jp = jacobian(model, q)?.rows(0, 2).into_owned();
            let xdot = DVector::from_vec(vec![v.0 + gamma * (p.0 - ee.x), v.1 + gamma * (p.1 - ee.y)]);
            qdot = pseudo_inverse(&jp, lambda) * xdot;
        }
        TaskKind::JointOscillation => {
            let w = T::two_pi() / T::lit(OSCILLATION_PERIOD);
            let off = model.base_dof();
            for (i, (lo, hi)) in model.joint_limits.iter().enumerate() {
                let mid = (*lo + *hi) * T::lit(0.5);
                let amp = (*hi - *lo) * T::lit(0.5 * OSCILLATION_SPAN);
                let phase = w * t + T::lit(i as f64) * T::frac_pi_3();
                let target = mid + amp * phase.sin();
                qdot[off + i] = amp * w * phase.cos() + gamma * (target - q[off + i]);
            }
        }
        _ => unreachable!(),
    }
    Ok(TaskOutput {
        qdot,
        j_claim: claim(kind, model, mode, &mut state.rng),
        diagnostics: Diagnostics::default(),
    })
}
