//! Minimum-jerk point-to-point plans.

use crate::error::{Error, Result};
use crate::kinematics::Pose2D;
use crate::scalar::{wrap_angle, Real};

/// Coefficients `c0..c5` of the normalized profile `s(τ) = Σ c_k τ^k`.
pub const QUINTIC: [f64; 6] = [0.0, 0.0, 0.0, 10.0, -15.0, 6.0];

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryPlan<T: Real = f64> {
    start: Vec<T>,
    delta: Vec<T>,
    angular: Vec<bool>,
    t0: T,
    duration: T,
}

/// Plans a quintic interpolation per coordinate; coordinates flagged in
/// `angular` travel along the shortest wrapped arc.
pub fn plan_trajectory<T: Real>(
    start: &[T],
    goal: &[T],
    angular: &[bool],
    t0: T,
    duration: T,
) -> Result<TrajectoryPlan<T>> {
    if !(duration > T::zero()) {
        return Err(Error::config("t_traj", "trajectory duration must be positive"));
    }
    if start.len() != goal.len() || angular.len() != start.len() {
        return Err(Error::Dimension {
            expected: start.len(),
            got: goal.len().min(angular.len()),
        });
    }
    let delta = start
        .iter()
        .zip(goal)
        .zip(angular)
        .map(|((s, g), ang)| if *ang { wrap_angle(*g - *s) } else { *g - *s })
        .collect();
    Ok(TrajectoryPlan {
        start: start.to_vec(),
        delta,
        angular: angular.to_vec(),
        t0,
        duration,
    })
}

/// Pose plan with the heading interpolated on the circle.
pub fn plan_pose<T: Real>(
    start: &Pose2D<T>,
    goal: &Pose2D<T>,
    t0: T,
    duration: T,
) -> Result<TrajectoryPlan<T>> {
    plan_trajectory(
        &[start.x, start.y, start.phi],
        &[goal.x, goal.y, goal.phi],
        &[false, false, true],
        t0,
        duration,
    )
}

impl<T: Real> TrajectoryPlan<T> {
    pub fn t0(&self) -> T {
        self.t0
    }

    pub fn duration(&self) -> T {
        self.duration
    }

    pub fn end_time(&self) -> T {
        self.t0 + self.duration
    }

    fn tau(&self, t: T) -> T {
        ((t - self.t0) / self.duration).max(T::zero()).min(T::one())
    }

    fn s(tau: T) -> T {
        let t3 = tau * tau * tau;
        t3 * (T::lit(QUINTIC[3]) + tau * (T::lit(QUINTIC[4]) + tau * T::lit(QUINTIC[5])))
    }

    fn ds(tau: T) -> T {
        let t2 = tau * tau;
        t2 * (T::lit(3.0 * QUINTIC[3])
            + tau * (T::lit(4.0 * QUINTIC[4]) + tau * T::lit(5.0 * QUINTIC[5])))
    }

    pub fn value(&self, t: T) -> Vec<T> {
        let s = Self::s(self.tau(t));
        self.start
            .iter()
            .zip(&self.delta)
            .zip(&self.angular)
            .map(|((a, d), ang)| {
                let v = *a + *d * s;
                if *ang {
                    wrap_angle(v)
                } else {
                    v
                }
            })
            .collect()
    }

    /// Time derivative of [`value`](Self::value); zero outside the active window.
    pub fn velocity(&self, t: T) -> Vec<T> {
        let in_window = t > self.t0 && t < self.end_time();
        let ds = if in_window {
            Self::ds(self.tau(t)) / self.duration
        } else {
            T::zero()
        };
        self.delta.iter().map(|d| *d * ds).collect()
    }

    pub fn pose(&self, t: T) -> Pose2D<T> {
        let v = self.value(t);
        Pose2D::new(v[0], v[1], v[2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_plan_holds_goal() {
        let p = plan_trajectory(&[1.5], &[1.5], &[false], 0.0, 3.0).unwrap();
        for t in [0.0, 0.7, 3.0, 9.0] {
            assert_eq!(p.value(t), vec![1.5]);
            assert_eq!(p.velocity(t), vec![0.0]);
        }
    }

    #[test]
    fn quintic_midpoint() {
        let p = plan_trajectory(&[0.0f64], &[1.0], &[false], 0.0, 10.0).unwrap();
        assert!((p.value(5.0)[0] - 0.5).abs() < 1e-15);
        assert!((p.velocity(5.0)[0] - 0.1875).abs() < 1e-15);
        assert_eq!(p.velocity(0.0)[0], 0.0);
        assert_eq!(p.velocity(10.0)[0], 0.0);
        assert_eq!(p.value(10.0)[0], 1.0);
        assert_eq!(p.value(25.0)[0], 1.0);
    }

    #[test]
    fn velocity_matches_finite_differences() {
        let p = plan_trajectory(&[0.2f64, -1.0], &[1.0, 3.0], &[false, false], 1.0, 4.0).unwrap();
        let h = 1e-6;
        for t in [1.3, 2.0, 3.1, 4.9] {
            let v = p.velocity(t);
            for (i, vi) in v.iter().enumerate() {
                let fd = (p.value(t + h)[i] - p.value(t - h)[i]) / (2.0 * h);
                assert!((vi - fd).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn heading_takes_shortest_arc() {
        let a = Pose2D::new(0.0f64, 0.0, 3.0);
        let b = Pose2D::new(0.0, 0.0, -3.0);
        let p = plan_pose(&a, &b, 0.0, 1.0).unwrap();
        // 2π − 6 ≈ 0.283 rad counter-clockwise through ±π.
        assert!(p.velocity(0.5)[2] > 0.0);
        assert!((p.pose(1.0).phi + 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_positive_duration() {
        assert!(plan_trajectory(&[0.0], &[1.0], &[false], 0.0, 0.0).is_err());
    }
}
