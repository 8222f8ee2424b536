//! Planar kinematics of a holonomic base carrying a serial revolute arm.
//!
//! Configuration layout: `[x, y, θ]` for the base when it is enabled, then
//! one angle per arm joint (relative to the previous link). The task space
//! is the planar end-effector pose `(x, y, φ)`.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{wrap_angle, Real};

/// Task-space dimension of the planar pose.
pub const TASK_DIM: usize = 3;

/// Below this manipulability the analytic gradient is not evaluated.
pub const SINGULAR_MANIPULABILITY: f64 = 1e-9;

/// Joint vector: base coordinates first (when enabled), then arm angles.
pub type JointConfig<T = f64> = DVector<T>;

/// Jacobian with one column per degree of freedom.
pub type JacobianMatrix<T = f64> = DMatrix<T>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct Pose2D<T: Real = f64> {
    pub x: T,
    pub y: T,
    pub phi: T,
}

impl<T: Real> Default for Pose2D<T> {
    fn default() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }
}

impl<T: Real> Pose2D<T> {
    /// Builds a pose, wrapping `phi` into (−π, π].
    pub fn new(x: T, y: T, phi: T) -> Self {
        Self {
            x,
            y,
            phi: wrap_angle(phi),
        }
    }

    /// `self ∘ other`: `other` expressed in the frame of `self`.
    pub fn compose(&self, other: &Pose2D<T>) -> Pose2D<T> {
        let (s, c) = self.phi.sin_cos();
        Pose2D::new(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.phi + other.phi,
        )
    }

    /// Task-space error `target ⊖ self` with the angular part wrapped.
    pub fn error_to(&self, target: &Pose2D<T>) -> Vector3<T> {
        Vector3::new(
            target.x - self.x,
            target.y - self.y,
            wrap_angle(target.phi - self.phi),
        )
    }

    pub fn to_vector(&self) -> Vector3<T> {
        Vector3::new(self.x, self.y, self.phi)
    }
}

/// Workspace rectangle the base center must stay in.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct BaseLimits<T: Real = f64> {
    pub x: (T, T),
    pub y: (T, T),
}

impl<T: Real> BaseLimits<T> {
    pub fn contains(&self, x: T, y: T) -> bool {
        x >= self.x.0 && x <= self.x.1 && y >= self.y.0 && y <= self.y.1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct RobotModel<T: Real = f64> {
    pub arm_link_lengths: Vec<T>,
    pub base_enabled: bool,
    /// `(q_min, q_max)` per arm joint, radians.
    pub joint_limits: Vec<(T, T)>,
    pub base_limits: BaseLimits<T>,
    /// Chassis disc radius; ray distances are measured from its edge.
    #[serde(default = "zero")]
    pub base_radius: T,
    /// Fixed base placement, used when `base_enabled` is false.
    #[serde(default)]
    pub base_origin: Pose2D<T>,
}

fn zero<T: Real>() -> T {
    T::zero()
}

impl<T: Real> RobotModel<T> {
    /// A fixed-base arm at the origin.
    pub fn arm(link_lengths: Vec<T>, joint_limits: Vec<(T, T)>) -> Self {
        let big = T::lit(1e6);
        Self {
            arm_link_lengths: link_lengths,
            base_enabled: false,
            joint_limits,
            base_limits: BaseLimits {
                x: (-big, big),
                y: (-big, big),
            },
            base_radius: T::zero(),
            base_origin: Pose2D::default(),
        }
    }

    /// A holonomic base with an optional arm on top.
    pub fn mobile(
        link_lengths: Vec<T>,
        joint_limits: Vec<(T, T)>,
        base_limits: BaseLimits<T>,
        base_radius: T,
    ) -> Self {
        Self {
            arm_link_lengths: link_lengths,
            base_enabled: true,
            joint_limits,
            base_limits,
            base_radius,
            base_origin: Pose2D::default(),
        }
    }

    pub fn base_dof(&self) -> usize {
        if self.base_enabled {
            3
        } else {
            0
        }
    }

    pub fn arm_dof(&self) -> usize {
        self.arm_link_lengths.len()
    }

    /// Total degrees of freedom `n`.
    pub fn dof(&self) -> usize {
        self.base_dof() + self.arm_dof()
    }

    pub fn is_redundant(&self) -> bool {
        self.dof() > TASK_DIM
    }

    pub fn validate(&self) -> Result<()> {
        if self.dof() == 0 {
            return Err(Error::config("robot", "model has no degrees of freedom"));
        }
        for (i, l) in self.arm_link_lengths.iter().enumerate() {
            if !(*l > T::zero()) {
                return Err(Error::config(
                    format!("robot.arm_link_lengths[{i}]"),
                    "link length must be strictly positive",
                ));
            }
        }
        if self.joint_limits.len() != self.arm_dof() {
            return Err(Error::config(
                "robot.joint_limits",
                format!(
                    "expected {} joint limits, got {}",
                    self.arm_dof(),
                    self.joint_limits.len()
                ),
            ));
        }
        for (i, (lo, hi)) in self.joint_limits.iter().enumerate() {
            if !(lo < hi) {
                return Err(Error::config(
                    format!("robot.joint_limits[{i}]"),
                    "q_min must be below q_max",
                ));
            }
        }
        let bl = &self.base_limits;
        if !(bl.x.0 < bl.x.1) || !(bl.y.0 < bl.y.1) {
            return Err(Error::config("robot.base_limits", "bounds must be ordered"));
        }
        if self.base_radius < T::zero() {
            return Err(Error::config("robot.base_radius", "must be non-negative"));
        }
        Ok(())
    }

    pub fn check_config(&self, q: &JointConfig<T>) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::Dimension {
                expected: self.dof(),
                got: q.len(),
            });
        }
        Ok(())
    }

    /// Pose of the chassis for configuration `q`.
    pub fn base_pose(&self, q: &JointConfig<T>) -> Pose2D<T> {
        if self.base_enabled {
            Pose2D::new(q[0], q[1], q[2])
        } else {
            self.base_origin
        }
    }

    /// Mid-range configuration of the arm joints, base at `base`.
    pub fn mid_range(&self, base: Pose2D<T>) -> JointConfig<T> {
        let mut q = DVector::zeros(self.dof());
        if self.base_enabled {
            q[0] = base.x;
            q[1] = base.y;
            q[2] = base.phi;
        }
        let off = self.base_dof();
        for (i, (lo, hi)) in self.joint_limits.iter().enumerate() {
            q[off + i] = (*lo + *hi) * T::lit(0.5);
        }
        q
    }

    /// Absolute link angles and the suffix sums `Σ_{j≥i} l_j (cos α_j, sin α_j)`.
    fn chain(&self, q: &JointConfig<T>) -> (Pose2D<T>, Vec<T>, Vec<T>) {
        let base = self.base_pose(q);
        let k = self.arm_dof();
        let off = self.base_dof();
        let mut sc = vec![T::zero(); k + 1];
        let mut ss = vec![T::zero(); k + 1];
        let mut alpha = Vec::with_capacity(k);
        let mut a = base.phi;
        for i in 0..k {
            a += q[off + i];
            alpha.push(a);
        }
        for i in (0..k).rev() {
            let (s, c) = alpha[i].sin_cos();
            sc[i] = sc[i + 1] + self.arm_link_lengths[i] * c;
            ss[i] = ss[i + 1] + self.arm_link_lengths[i] * s;
        }
        (base, sc, ss)
    }
}

/// End-effector pose `x = k(q)`.
pub fn forward_kinematics<T: Real>(model: &RobotModel<T>, q: &JointConfig<T>) -> Result<Pose2D<T>> {
    model.check_config(q)?;
    let (base, sc, ss) = model.chain(q);
    let off = model.base_dof();
    let arm_sum = (0..model.arm_dof()).fold(T::zero(), |acc, i| acc + q[off + i]);
    Ok(Pose2D::new(base.x + sc[0], base.y + ss[0], base.phi + arm_sum))
}

/// Analytic `3 × n` Jacobian of [`forward_kinematics`] (rows x, y, φ).
pub fn jacobian<T: Real>(model: &RobotModel<T>, q: &JointConfig<T>) -> Result<JacobianMatrix<T>> {
    model.check_config(q)?;
    let (_, sc, ss) = model.chain(q);
    let n = model.dof();
    let mut j = DMatrix::zeros(TASK_DIM, n);
    let mut col = 0;
    if model.base_enabled {
        j[(0, 0)] = T::one();
        j[(1, 1)] = T::one();
        j[(0, 2)] = -ss[0];
        j[(1, 2)] = sc[0];
        j[(2, 2)] = T::one();
        col = 3;
    }
    for i in 0..model.arm_dof() {
        j[(0, col + i)] = -ss[i];
        j[(1, col + i)] = sc[i];
        j[(2, col + i)] = T::one();
    }
    Ok(j)
}

/// Positional (`2 × n`) Jacobian of the arm alone; base columns are zero.
///
/// This is the Jacobian the manipulability measure is taken on: the base
/// columns would make `JJᵀ` full rank everywhere.
pub fn arm_position_jacobian<T: Real>(
    model: &RobotModel<T>,
    q: &JointConfig<T>,
) -> Result<JacobianMatrix<T>> {
    model.check_config(q)?;
    let (_, sc, ss) = model.chain(q);
    let off = model.base_dof();
    let mut j = DMatrix::zeros(2, model.dof());
    for i in 0..model.arm_dof() {
        j[(0, off + i)] = -ss[i];
        j[(1, off + i)] = sc[i];
    }
    Ok(j)
}

fn svd_pinv<T: Real>(j: &DMatrix<T>, lambda: T, truncate: bool) -> (DMatrix<T>, bool) {
    let (r, c) = j.shape();
    if r == 0 || c == 0 {
        return (DMatrix::zeros(c, r), false);
    }
    let svd = j.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let sigma = &svd.singular_values;
    let smax = sigma.iter().fold(T::zero(), |m, s| m.max(*s));
    let tol = T::from_usize(r.max(c)).unwrap_or_else(T::one) * T::rank_eps() * smax;
    let l2 = lambda * lambda;
    let mut deficient = sigma.len() < r.min(c);
    let mut scaled = DMatrix::zeros(sigma.len(), r);
    for (k, s) in sigma.iter().enumerate() {
        let s = *s;
        let inv = if l2 > T::zero() {
            s / (s * s + l2)
        } else if s > tol && s > T::zero() {
            T::one() / s
        } else {
            deficient = true;
            if truncate {
                T::zero()
            } else {
                T::one() / s
            }
        };
        for row in 0..r {
            scaled[(k, row)] = inv * u[(row, k)];
        }
    }
    (v_t.transpose() * scaled, deficient)
}

/// `Jᵀ(JJᵀ + λ²I)⁻¹`, computed through an SVD so it is valid for any shape.
///
/// With `lambda == 0` this is the Moore–Penrose inverse and a rank-deficient
/// `J` is reported as [`Error::Singular`].
pub fn damped_pseudo_inverse<T: Real>(j: &JacobianMatrix<T>, lambda: T) -> Result<JacobianMatrix<T>> {
    if lambda < T::zero() {
        return Err(Error::config("damping", "lambda must be non-negative"));
    }
    let (pinv, deficient) = svd_pinv(j, lambda, true);
    if lambda == T::zero() && deficient {
        return Err(Error::Singular(format!(
            "{}x{} Jacobian is rank deficient and undamped",
            j.nrows(),
            j.ncols()
        )));
    }
    Ok(pinv)
}

/// Total variant of [`damped_pseudo_inverse`]: at `lambda == 0` singular
/// directions are truncated instead of reported.
pub fn pseudo_inverse<T: Real>(j: &JacobianMatrix<T>, lambda: T) -> JacobianMatrix<T> {
    svd_pinv(j, lambda.max(T::zero()), true).0
}

/// `w = sqrt(det(J Jᵀ))`.
pub fn manipulability<T: Real>(j: &JacobianMatrix<T>) -> T {
    if j.nrows() == 0 {
        return T::zero();
    }
    let jjt = j * j.transpose();
    jjt.determinant().max(T::zero()).sqrt()
}

/// Result of [`manipulability_gradient`].
#[derive(Clone, Debug)]
pub struct ManipulabilityGradient<T: Real = f64> {
    pub gradient: DVector<T>,
    pub w: T,
    /// Set when `w` was below [`SINGULAR_MANIPULABILITY`]; the gradient is zero.
    pub singular: bool,
}

/// `∂w/∂q = w · tr((JJᵀ)⁻¹ (∂J/∂q_k) Jᵀ)` on the arm positional Jacobian,
/// with `∂J/∂q_k` in closed form. Base components are zero since `w` does
/// not depend on where the base is.
pub fn manipulability_gradient<T: Real>(
    model: &RobotModel<T>,
    q: &JointConfig<T>,
) -> Result<ManipulabilityGradient<T>> {
    model.check_config(q)?;
    let n = model.dof();
    let off = model.base_dof();
    let k = model.arm_dof();
    let (_, sc, ss) = model.chain(q);
    let mut jp = DMatrix::zeros(2, k);
    for i in 0..k {
        jp[(0, i)] = -ss[i];
        jp[(1, i)] = sc[i];
    }
    let w = manipulability(&jp);
    let mut gradient = DVector::zeros(n);
    let a = &jp * jp.transpose();
    let a_inv = match a.try_inverse() {
        Some(inv) if w >= T::lit(SINGULAR_MANIPULABILITY) => inv,
        _ => {
            return Ok(ManipulabilityGradient {
                gradient,
                w,
                singular: true,
            })
        }
    };
    // tr(A⁻¹ dJ Jᵀ) = Σ_{r,c} (A⁻¹ dJ)[r,c] · J[r,c]
    let mut dj = DMatrix::zeros(2, k);
    for kk in 0..k {
        for i in 0..k {
            let m = i.max(kk);
            dj[(0, i)] = -sc[m];
            dj[(1, i)] = -ss[m];
        }
        let prod = &a_inv * &dj;
        gradient[off + kk] = w * prod.component_mul(&jp).sum();
    }
    Ok(ManipulabilityGradient {
        gradient,
        w,
        singular: false,
    })
}

/// `w = −(1/2n) Σ ((q_i − q̄_i)/(q_max_i − q_min_i))²` over the arm joints.
pub fn joint_limit_measure<T: Real>(q: &JointConfig<T>, model: &RobotModel<T>) -> T {
    let k = model.arm_dof();
    if k == 0 {
        return T::zero();
    }
    let off = model.base_dof();
    let sum = model
        .joint_limits
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (i, (lo, hi))| {
            let mid = (*lo + *hi) * T::lit(0.5);
            let r = (q[off + i] - mid) / (*hi - *lo);
            acc + r * r
        });
    -sum / (T::lit(2.0) * T::from_usize(k).unwrap())
}

/// Per-joint gradient `−(1/n)(q_i − q̄_i)/(q_max_i − q_min_i)²`; zero on base DOFs.
pub fn joint_limit_gradient<T: Real>(q: &JointConfig<T>, model: &RobotModel<T>) -> DVector<T> {
    let n = model.dof();
    let k = model.arm_dof();
    let mut g = DVector::zeros(n);
    if k == 0 {
        return g;
    }
    let off = model.base_dof();
    let kf = T::from_usize(k).unwrap();
    for (i, (lo, hi)) in model.joint_limits.iter().enumerate() {
        let mid = (*lo + *hi) * T::lit(0.5);
        let range = *hi - *lo;
        g[off + i] = -(q[off + i] - mid) / (kf * range * range);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_6, PI};

    fn two_link() -> RobotModel {
        RobotModel::arm(vec![1.0, 1.0], vec![(-PI, PI), (-PI, PI)])
    }

    /// Brute-force homogeneous-matrix chain, independent of `chain`.
    fn fk_homogeneous(model: &RobotModel, q: &DVector<f64>) -> (f64, f64, f64) {
        use nalgebra::Matrix3;
        let rot = |a: f64, tx: f64, ty: f64| {
            Matrix3::new(a.cos(), -a.sin(), tx, a.sin(), a.cos(), ty, 0.0, 0.0, 1.0)
        };
        let b = model.base_pose(q);
        let mut t = rot(b.phi, b.x, b.y);
        let off = model.base_dof();
        for (i, l) in model.arm_link_lengths.iter().enumerate() {
            t = t * rot(q[off + i], 0.0, 0.0) * rot(0.0, *l, 0.0);
        }
        (t[(0, 2)], t[(1, 2)], t[(1, 0)].atan2(t[(0, 0)]))
    }

    #[test]
    fn fk_straight_and_quarter_turn() {
        let m = two_link();
        let p = forward_kinematics(&m, &DVector::from_vec(vec![0.0, 0.0])).unwrap();
        assert!((p.x - 2.0).abs() < 1e-15 && p.y.abs() < 1e-15 && p.phi == 0.0);
        let p = forward_kinematics(&m, &DVector::from_vec(vec![FRAC_PI_2, 0.0])).unwrap();
        assert!(p.x.abs() < 1e-15 && (p.y - 2.0).abs() < 1e-15);
        assert!((p.phi - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn fk_base_plus_link_matches_homogeneous_oracle() {
        let lim = BaseLimits {
            x: (-10.0, 10.0),
            y: (-10.0, 10.0),
        };
        let m = RobotModel::mobile(vec![1.0], vec![(-PI, PI)], lim, 0.0);
        let q = DVector::from_vec(vec![1.0, 2.0, FRAC_PI_2, 0.0]);
        let p = forward_kinematics(&m, &q).unwrap();
        let (ox, oy, ophi) = fk_homogeneous(&m, &q);
        assert!((p.x - 1.0).abs() < 1e-12 && (p.y - 3.0).abs() < 1e-12);
        assert!((p.phi - FRAC_PI_2).abs() < 1e-12);
        assert!((p.x - ox).abs() < 1e-12 && (p.y - oy).abs() < 1e-12);
        assert!((p.phi - ophi).abs() < 1e-12);
    }

    #[test]
    fn fk_dimension_mismatch() {
        let err = forward_kinematics(&two_link(), &DVector::from_vec(vec![0.0])).unwrap_err();
        assert!(matches!(err, Error::Dimension { expected: 2, got: 1 }));
    }

    #[test]
    fn jacobian_examples() {
        let m = two_link();
        let j = jacobian(&m, &DVector::from_vec(vec![0.0, FRAC_PI_2])).unwrap();
        assert!((j[(0, 1)] + 1.0).abs() < 1e-15);
        assert!(j[(1, 1)].abs() < 1e-15);
        assert_eq!(j.ncols(), 2);

        let base_only = RobotModel::mobile(
            vec![],
            vec![],
            BaseLimits {
                x: (-5.0, 5.0),
                y: (-5.0, 5.0),
            },
            0.2,
        );
        let j = jacobian(&base_only, &DVector::from_vec(vec![0.3, -1.0, 2.0])).unwrap();
        assert_eq!(j, DMatrix::identity(3, 3));
    }

    #[test]
    fn pseudo_inverse_examples() {
        let j = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let p = damped_pseudo_inverse(&j, 0.0).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.25]);
        assert!((p - expect).norm() < 1e-14);

        let row = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let p = damped_pseudo_inverse(&row, 0.0).unwrap();
        assert!((p - DMatrix::from_row_slice(2, 1, &[1.0, 0.0])).norm() < 1e-14);
    }

    #[test]
    fn undamped_rank_deficient_is_singular() {
        let j = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(damped_pseudo_inverse(&j, 0.0), Err(Error::Singular(_))));
        assert!(damped_pseudo_inverse(&j, 1e-3).is_ok());
        let p = pseudo_inverse(&j, 0.0);
        // Moore–Penrose identity J J⁺ J = J still holds after truncation.
        assert!((&j * &p * &j - &j).norm() < 1e-12);
    }

    #[test]
    fn damped_matches_normal_equation_form() {
        let j = DMatrix::from_row_slice(2, 3, &[1.0, 0.5, -0.2, 0.0, 2.0, 1.0]);
        let lambda = 0.3;
        let p = damped_pseudo_inverse(&j, lambda).unwrap();
        let normal = j.transpose()
            * (&j * j.transpose() + DMatrix::identity(2, 2) * lambda * lambda)
                .try_inverse()
                .unwrap();
        assert!((p - normal).norm() < 1e-12);
    }

    #[test]
    fn manipulability_examples() {
        let m = two_link();
        let w = |q2: f64| {
            manipulability(&arm_position_jacobian(&m, &DVector::from_vec(vec![0.3, q2])).unwrap())
        };
        assert!((w(FRAC_PI_2) - 1.0).abs() < 1e-12);
        assert!(w(0.0).abs() < 1e-7);
        assert!((w(FRAC_PI_6) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn manipulability_gradient_examples() {
        let m = two_link();
        let g = manipulability_gradient(&m, &DVector::from_vec(vec![0.7, FRAC_PI_2])).unwrap();
        assert!(g.gradient[1].abs() < 1e-12 && !g.singular);
        let g = manipulability_gradient(&m, &DVector::from_vec(vec![0.7, FRAC_PI_4])).unwrap();
        assert!((g.gradient[1] - FRAC_PI_4.cos()).abs() < 1e-12);
        assert!(g.gradient[0].abs() < 1e-12);
        let g = manipulability_gradient(&m, &DVector::from_vec(vec![0.7, 0.0])).unwrap();
        assert!(g.singular);
        assert_eq!(g.gradient, DVector::zeros(2));
    }

    #[test]
    fn joint_limit_examples() {
        let m = RobotModel::arm(vec![1.0], vec![(-1.0, 1.0)]);
        let q = |v: f64| DVector::from_vec(vec![v]);
        assert_eq!(joint_limit_measure(&q(0.0), &m), 0.0);
        assert!((joint_limit_measure(&q(1.0), &m) + 0.125).abs() < 1e-15);
        assert_eq!(joint_limit_measure(&q(0.3), &m), joint_limit_measure(&q(-0.3), &m));
        assert!((joint_limit_gradient(&q(0.5), &m)[0] + 0.125).abs() < 1e-15);
        assert_eq!(joint_limit_gradient(&q(0.0), &m)[0], 0.0);
        assert!(joint_limit_gradient(&q(-0.4), &m)[0] > 0.0);
    }

    #[test]
    fn f32_core_agrees_with_f64() {
        let m32: RobotModel<f32> = RobotModel::arm(vec![1.0, 1.0], vec![(-3.0, 3.0), (-3.0, 3.0)]);
        let g = manipulability_gradient(&m32, &DVector::from_vec(vec![0.1f32, std::f32::consts::FRAC_PI_4])).unwrap();
        assert!((g.gradient[1] - std::f32::consts::FRAC_1_SQRT_2).abs() < 1e-5);
    }
}
