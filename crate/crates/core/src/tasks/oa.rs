//! Obstacle avoidance through per-ray pseudo-energies.

use nalgebra::{DMatrix, DVector};

use super::params::{ParamKind, TaskParams};
use super::trajectory::{plan_trajectory, TrajectoryPlan};
use super::{Diagnostics, TaskOutput};
use crate::error::{Error, Result};
use crate::kinematics::{pseudo_inverse, JointConfig, Pose2D, RobotModel};
use crate::scalar::Real;
use crate::world_sim::world::{RangeSensor, SensorScan};

/// Finite-difference step for `∂d/∂q` (m).
pub const FD_STEP: f64 = 1e-5;

/// A ray is re-planned when its energy exceeds the energy its current plan
/// started from by this factor.
pub const REPLAN_FACTOR: f64 = 1.1;

/// Per-ray energy plans carried between steps.
#[derive(Clone, Debug, Default)]
pub struct OaState<T: Real = f64> {
    plans: Vec<Option<TrajectoryPlan<T>>>,
}

impl<T: Real> OaState<T> {
    pub fn active_plans(&self) -> usize {
        self.plans.iter().filter(|p| p.is_some()).count()
    }
}

/// `ε = ½(r − d)²` for `d < r`, else 0.
pub fn pseudo_energy<T: Real>(d: T, r_rest: T) -> T {
    if d < r_rest {
        let v = r_rest - d;
        T::lit(0.5) * v * v
    } else {
        T::zero()
    }
}

/// `q̇_d = J_o†(σ̇_d + γ_CL(σ_d − σ))` with one row of `J_o` per activated ray.
///
/// Rows are `∂ε/∂q = −(r − d) ∂d/∂q`, where `∂d/∂q` is a central difference
/// of the sensor model over the base translation with each ray held at its
/// world bearing. Arm joints carry no sensors, so their columns are zero.
#[allow(clippy::too_many_arguments)]
pub fn oa_task_step<T: Real>(
    model: &RobotModel<T>,
    q: &JointConfig<T>,
    scan: &SensorScan<T>,
    sensor: &dyn RangeSensor<T>,
    t: T,
    params: &TaskParams<T>,
    state: &mut OaState<T>,
    lambda: T,
) -> Result<TaskOutput<T>> {
    model.check_config(q)?;
    if !model.base_enabled {
        return Err(Error::config("kind", "obstacle avoidance requires a mobile base"));
    }
    let r = params.require(ParamKind::RRest)?;
    let gamma = params.require(ParamKind::GammaCl)?;
    let dur = params.require(ParamKind::TTraj)?;
    let n = model.dof();
    let rays = scan.distances.len();
    state.plans.resize(rays, None);

    let base = model.base_pose(q);
    let h = T::lit(FD_STEP);
    let mut rows: Vec<[T; 2]> = Vec::new();
    let mut rates: Vec<T> = Vec::new();
    let mut sigma = T::zero();
    for (ray, d) in scan.distances.iter().copied().enumerate() {
        if d >= r {
            state.plans[ray] = None;
            continue;
        }
        let eps = pseudo_energy(d, r);
        sigma += eps;
        let replan = match &state.plans[ray] {
            None => true,
            Some(p) => eps > T::lit(REPLAN_FACTOR) * p.value(p.t0())[0],
        };
        if replan {
            state.plans[ray] = Some(plan_trajectory(&[eps], &[T::zero()], &[false], t, dur)?);
        }
        let plan = state.plans[ray].as_ref().unwrap();
        let rate = plan.velocity(t)[0] + gamma * (plan.value(t)[0] - eps);

        let probe = |dx: T, dy: T| sensor.ray_distance(&Pose2D { x: base.x + dx, y: base.y + dy, phi: base.phi }, ray);
        let two_h = h + h;
        let dd_dx = (probe(h, T::zero()) - probe(-h, T::zero())) / two_h;
        let dd_dy = (probe(T::zero(), h) - probe(T::zero(), -h)) / two_h;
        let k = -(r - d);
        rows.push([k * dd_dx, k * dd_dy]);
        rates.push(rate);
    }

    let mut j = DMatrix::zeros(rows.len(), n);
    for (i, row) in rows.iter().enumerate() {
        j[(i, 0)] = row[0];
        j[(i, 1)] = row[1];
    }
    let qdot = if rows.is_empty() {
        DVector::zeros(n)
    } else {
        pseudo_inverse(&j, lambda) * DVector::from_vec(rates)
    };
    Ok(TaskOutput {
        qdot,
        j_claim: j,
        diagnostics: Diagnostics {
            sigma: Some(sigma),
            active_rays: rows.len(),
            ..Default::default()
        },
    })
}
