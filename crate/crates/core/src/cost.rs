//! Cost operators over an episode trace and their weighted combination C.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::world_sim::{EpisodeTrace, Termination};

/// Floor on `w` in the manipulability cost, bounding `1/w²`.
pub const W_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostOp {
    Precision,
    PrecisionPosition,
    PrecisionOrientation,
    SafetyAll,
    SafetyMin,
    MaxManip,
    MaxMjl,
    Time,
}

impl CostOp {
    pub fn name(self) -> &'static str {
        match self {
            CostOp::Precision => "precision",
            CostOp::PrecisionPosition => "precision_position",
            CostOp::PrecisionOrientation => "precision_orientation",
            CostOp::SafetyAll => "safety_all",
            CostOp::SafetyMin => "safety_min",
            CostOp::MaxManip => "max_manip",
            CostOp::MaxMjl => "max_mjl",
            CostOp::Time => "time",
        }
    }

    /// Normalization scale when none is configured.
    pub fn default_scale<T: Real>(self, max_time: T) -> T {
        match self {
            CostOp::Precision | CostOp::PrecisionPosition | CostOp::PrecisionOrientation => T::one(),
            CostOp::SafetyAll | CostOp::SafetyMin => T::lit(0.5),
            CostOp::MaxManip => T::lit(10.0),
            CostOp::MaxMjl => T::lit(0.1),
            CostOp::Time => max_time * max_time,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct CostTerm<T: Real = f64> {
    pub op: CostOp,
    pub weight: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<T>,
}

fn default_penalty<T: Real>() -> T {
    T::lit(1e3)
}

fn default_rest<T: Real>() -> T {
    T::lit(0.4)
}

fn default_min_rest<T: Real>() -> T {
    T::lit(0.3)
}

fn default_w_floor<T: Real>() -> T {
    T::lit(W_FLOOR)
}

/// The user's weighted cost C.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct CostSpec<T: Real = f64> {
    pub terms: Vec<CostTerm<T>>,
    #[serde(default = "default_penalty")]
    pub collision_penalty: T,
    /// Divide the weights by their sum instead of requiring Σα = 1.
    #[serde(default)]
    pub normalize: bool,
    /// Rest length applied to every ray by `safety_all` (m).
    #[serde(default = "default_rest")]
    pub safety_rest: T,
    /// Threshold on the minimum ray for `safety_min` (m).
    #[serde(default = "default_min_rest")]
    pub safety_min_rest: T,
    #[serde(default = "default_w_floor")]
    pub w_floor: T,
}

impl<T: Real> CostSpec<T> {
    pub fn new(terms: Vec<CostTerm<T>>) -> Self {
        Self {
            terms,
            collision_penalty: default_penalty(),
            normalize: false,
            safety_rest: default_rest(),
            safety_min_rest: default_min_rest(),
            w_floor: default_w_floor(),
        }
    }

    /// Terms from `(op, weight)` pairs with default scales.
    pub fn weighted(pairs: &[(CostOp, f64)]) -> Self {
        Self::new(
            pairs
                .iter()
                .map(|(op, w)| CostTerm {
                    op: *op,
                    weight: T::lit(*w),
                    scale: None,
                })
                .collect(),
        )
    }

    /// Validates the spec and, with `normalize` set, rescales the weights to sum to 1.
    pub fn validated(mut self) -> Result<Self> {
        if self.terms.is_empty() {
            return Err(Error::config("cost.terms", "at least one cost term is required"));
        }
        let mut sum = T::zero();
        for (i, term) in self.terms.iter().enumerate() {
            if !(term.weight >= T::zero()) {
                return Err(Error::config(format!("cost.terms[{i}].weight"), "must be non-negative"));
            }
            if let Some(s) = term.scale {
                if !(s > T::zero()) {
                    return Err(Error::config(format!("cost.terms[{i}].scale"), "must be positive"));
                }
            }
            if self.terms[..i].iter().any(|o| o.op == term.op) {
                return Err(Error::config(
                    format!("cost.terms[{i}].op"),
                    format!("`{}` listed twice", term.op.name()),
                ));
            }
            sum += term.weight;
        }
        if self.normalize {
            if !(sum > T::zero()) {
                return Err(Error::config("cost.terms", "weights sum to zero"));
            }
            for term in &mut self.terms {
                term.weight /= sum;
            }
        } else if (sum - T::one()).abs() > T::lit(1e-9) {
            return Err(Error::config(
                "cost.terms",
                format!("weights sum to {} instead of 1 (set cost.normalize to rescale)", sum.as_f64()),
            ));
        }
        if !(self.collision_penalty >= T::zero()) {
            return Err(Error::config("cost.collision_penalty", "must be non-negative"));
        }
        if !(self.safety_rest > T::zero()) || !(self.safety_min_rest > T::zero()) {
            return Err(Error::config("cost.safety_rest", "rest lengths must be positive"));
        }
        if !(self.w_floor > T::zero()) {
            return Err(Error::config("cost.w_floor", "must be positive"));
        }
        Ok(self)
    }

    pub fn uses(&self, op: CostOp) -> bool {
        self.terms.iter().any(|t| t.op == op && t.weight > T::zero())
    }

    /// Largest rest length any safety term reads from the trace.
    pub fn max_rest(&self) -> T {
        self.safety_rest.max(self.safety_min_rest)
    }

    /// Whether the penalty exceeds the largest normalized cost a collision-free
    /// episode can reach, using worst-case bounds on each raw term.
    /// `diag` is the workspace diagonal; `rays` the scan size.
    pub fn collision_dominates(&self, max_time: T, diag: T, rays: usize) -> bool {
        let half = T::lit(0.5);
        let worst = self.terms.iter().fold(T::zero(), |acc, term| {
            let raw = match term.op {
                CostOp::Precision => diag * diag + T::pi() * T::pi(),
                CostOp::PrecisionPosition => diag * diag,
                CostOp::PrecisionOrientation => T::pi() * T::pi(),
                CostOp::SafetyAll => half * self.safety_rest * self.safety_rest * T::from_usize(rays).unwrap(),
                CostOp::SafetyMin => half * self.safety_min_rest * self.safety_min_rest,
                CostOp::MaxManip => T::one() / (self.w_floor * self.w_floor),
                CostOp::MaxMjl => T::lit(1.0 / 64.0),
                CostOp::Time => max_time * max_time,
            };
            acc + term.weight * raw / self.scale(term, max_time)
        });
        self.collision_penalty > worst
    }

    fn scale(&self, term: &CostTerm<T>, max_time: T) -> T {
        term.scale.unwrap_or_else(|| term.op.default_scale(max_time))
    }
}

fn time_average<T: Real>(trace: &EpisodeTrace<T>, f: impl Fn(usize) -> T) -> T {
    let n = trace.rows.len();
    if n == 0 {
        return T::zero();
    }
    (0..n).fold(T::zero(), |acc, i| acc + f(i)) / T::from_usize(n).unwrap()
}

/// `‖k_d − k‖²` at the end of the episode (pose error, angle wrapped).
pub fn cost_precision<T: Real>(trace: &EpisodeTrace<T>) -> T {
    trace.rows.last().map_or(T::zero(), |r| r.goal_error.norm_squared())
}

pub fn cost_precision_position<T: Real>(trace: &EpisodeTrace<T>) -> T {
    trace
        .rows
        .last()
        .map_or(T::zero(), |r| r.goal_error[0] * r.goal_error[0] + r.goal_error[1] * r.goal_error[1])
}

pub fn cost_precision_orientation<T: Real>(trace: &EpisodeTrace<T>) -> T {
    trace.rows.last().map_or(T::zero(), |r| r.goal_error[2] * r.goal_error[2])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SafetyMode {
    All,
    Min,
}

/// Time average of `Σ_l ½(d_l − r)²` over rays closer than `r` (`All`), or of
/// `½(d_min − r)²` when the closest ray is within `r` (`Min`).
pub fn cost_safety<T: Real>(trace: &EpisodeTrace<T>, mode: SafetyMode, rest: T) -> T {
    let half = T::lit(0.5);
    time_average(trace, |i| {
        let row = &trace.rows[i];
        match mode {
            SafetyMode::All => row
                .near_rays
                .iter()
                .filter(|(_, d)| *d < rest)
                .fold(T::zero(), |acc, (_, d)| acc + half * (*d - rest) * (*d - rest)),
            SafetyMode::Min => {
                if row.min_ray < rest {
                    half * (row.min_ray - rest) * (row.min_ray - rest)
                } else {
                    T::zero()
                }
            }
        }
    })
}

/// Time average of `1/max(w, w_floor)²`.
pub fn cost_manip<T: Real>(trace: &EpisodeTrace<T>, w_floor: T) -> T {
    time_average(trace, |i| {
        let w = trace.rows[i].w.max(w_floor);
        T::one() / (w * w)
    })
}

/// Time average of `w_MJL²`.
pub fn cost_mjl<T: Real>(trace: &EpisodeTrace<T>) -> T {
    time_average(trace, |i| trace.rows[i].w_mjl * trace.rows[i].w_mjl)
}

/// `t²` at goal attainment, else `max_time²`.
pub fn cost_time<T: Real>(trace: &EpisodeTrace<T>) -> T {
    let t = match trace.termination {
        Termination::GoalReached { t } => t,
        _ => trace.max_time,
    };
    t * t
}

/// Raw (unweighted, unscaled) value of one operator.
pub fn evaluate_op<T: Real>(spec: &CostSpec<T>, op: CostOp, trace: &EpisodeTrace<T>) -> T {
    match op {
        CostOp::Precision => cost_precision(trace),
        CostOp::PrecisionPosition => cost_precision_position(trace),
        CostOp::PrecisionOrientation => cost_precision_orientation(trace),
        CostOp::SafetyAll => cost_safety(trace, SafetyMode::All, spec.safety_rest),
        CostOp::SafetyMin => cost_safety(trace, SafetyMode::Min, spec.safety_min_rest),
        CostOp::MaxManip => cost_manip(trace, spec.w_floor),
        CostOp::MaxMjl => cost_mjl(trace),
        CostOp::Time => cost_time(trace),
    }
}

/// `C = Σ α_i cost_i / s_i + P·[collision] + P·[singularity]`.
pub fn combine<T: Real>(spec: &CostSpec<T>, trace: &EpisodeTrace<T>) -> T {
    let mut c = spec.terms.iter().fold(T::zero(), |acc, term| {
        acc + term.weight * evaluate_op(spec, term.op, trace) / spec.scale(term, trace.max_time)
    });
    match trace.termination {
        Termination::Collision { .. } | Termination::Singularity { .. } => c += spec.collision_penalty,
        _ => {}
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::Pose2D;
    use crate::world_sim::TraceRow;
    use nalgebra::{DVector, Vector3};

    fn row(t: f64, err: Vector3<f64>, min_ray: f64, w: f64, w_mjl: f64) -> TraceRow {
        TraceRow {
            t,
            q: DVector::zeros(1),
            pose: Pose2D::default(),
            goal_error: err,
            err_norm: err.norm(),
            near_rays: if min_ray < 5.0 { vec![(0, min_ray)] } else { vec![] },
            min_ray,
            w,
            w_mjl,
            qdot: DVector::zeros(1),
        }
    }

    fn trace(rows: Vec<TraceRow>, termination: Termination) -> EpisodeTrace {
        EpisodeTrace {
            rows,
            termination,
            dt: 0.01,
            max_time: 20.0,
        }
    }

    fn steady(err: Vector3<f64>, min_ray: f64, w: f64, w_mjl: f64, end: Termination) -> EpisodeTrace {
        trace((0..10).map(|k| row(k as f64 * 0.01, err, min_ray, w, w_mjl)).collect(), end)
    }

    #[test]
    fn precision_hand_values() {
        let z = steady(Vector3::zeros(), 5.0, 1.0, 0.0, Termination::Timeout);
        assert_eq!(cost_precision(&z), 0.0);
        let e = steady(Vector3::new(0.3, 0.4, 0.0), 5.0, 1.0, 0.0, Termination::Timeout);
        assert!((cost_precision(&e) - 0.25).abs() < 1e-15);
        let e2 = steady(Vector3::new(0.6, 0.8, 0.0), 5.0, 1.0, 0.0, Termination::Timeout);
        assert!((cost_precision(&e2) - 4.0 * cost_precision(&e)).abs() < 1e-14);
    }

    #[test]
    fn safety_hand_values() {
        let far = steady(Vector3::zeros(), 5.0, 1.0, 0.0, Termination::Timeout);
        assert_eq!(cost_safety(&far, SafetyMode::All, 1.0), 0.0);
        let near = steady(Vector3::zeros(), 0.5, 1.0, 0.0, Termination::Timeout);
        assert!((cost_safety(&near, SafetyMode::All, 1.0) - 0.125).abs() < 1e-15);
        assert!((cost_safety(&near, SafetyMode::Min, 1.0) - 0.125).abs() < 1e-15);
        let nearer = steady(Vector3::zeros(), 0.4, 1.0, 0.0, Termination::Timeout);
        assert!(cost_safety(&nearer, SafetyMode::Min, 1.0) > cost_safety(&near, SafetyMode::Min, 1.0));
    }

    #[test]
    fn manip_mjl_time_hand_values() {
        let one = steady(Vector3::zeros(), 5.0, 1.0, -0.125, Termination::GoalReached { t: 3.0 });
        assert!((cost_manip(&one, 1e-6) - 1.0).abs() < 1e-15);
        let half = steady(Vector3::zeros(), 5.0, 0.5, 0.0, Termination::Timeout);
        assert!((cost_manip(&half, 1e-6) - 4.0).abs() < 1e-15);
        assert!((cost_mjl(&one) - 0.015625).abs() < 1e-15);
        assert_eq!(cost_mjl(&half), 0.0);
        assert_eq!(cost_time(&one), 9.0);
        assert_eq!(cost_time(&half), 400.0);
    }

    #[test]
    fn validator_accepts_published_weightings() {
        let c1 = CostSpec::<f64>::weighted(&[(CostOp::Precision, 0.4), (CostOp::SafetyMin, 0.5), (CostOp::MaxManip, 0.1)]);
        assert!(c1.validated().is_ok());
        let c2 = CostSpec::<f64>::weighted(&[(CostOp::Precision, 0.5), (CostOp::Time, 0.5)]);
        assert!(c2.validated().is_ok());
        let bad = CostSpec::<f64>::weighted(&[(CostOp::Precision, 0.5), (CostOp::Time, 0.4)]);
        let msg = bad.clone().validated().unwrap_err().to_string();
        assert!(msg.contains("cost"), "{msg}");
        let mut norm = bad;
        norm.normalize = true;
        let n = norm.validated().unwrap();
        assert!((n.terms[0].weight - 5.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn combine_adds_penalties() {
        let spec = CostSpec::<f64>::weighted(&[(CostOp::Precision, 0.5), (CostOp::Time, 0.5)])
            .validated()
            .unwrap();
        let zero = steady(Vector3::zeros(), 5.0, 1.0, 0.0, Termination::GoalReached { t: 0.0 });
        assert_eq!(combine(&spec, &zero), 0.0);
        let hit = steady(Vector3::zeros(), 0.0, 1.0, 0.0, Termination::Collision { t: 0.09 });
        assert!(combine(&spec, &hit) >= 1e3);
        assert!(spec.collision_dominates(20.0, 10.0, 360));
    }
}
