use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use sotgen::kinematics::{forward_kinematics, jacobian, joint_limit_measure, pseudo_inverse, BaseLimits};
use sotgen::Robot;

fn robot() -> Robot {
    Robot::mobile(
        vec![0.3, 0.25, 0.2],
        vec![(-2.5, 2.5); 3],
        BaseLimits { x: (-5.0, 5.0), y: (-5.0, 5.0) },
        0.3,
    )
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0..2.0f64, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn config() -> impl Strategy<Value = DVector<f64>> {
    (
        -4.0..4.0f64,
        -4.0..4.0f64,
        -3.0..3.0f64,
        prop::collection::vec(-2.4..2.4f64, 3),
    )
        .prop_map(|(x, y, t, arm)| DVector::from_iterator(6, [x, y, t].into_iter().chain(arm)))
}

proptest! {
    #[test]
    fn pseudo_inverse_satisfies_penrose_identities(j in (1usize..5, 1usize..7).prop_flat_map(|(r, c)| matrix(r, c))) {
        let p = pseudo_inverse(&j, 0.0);
        let tol = 1e-9 * (1.0 + j.norm() * p.norm()).powi(2);
        prop_assert!((&j * &p * &j - &j).norm() < tol);
        prop_assert!((&p * &j * &p - &p).norm() < tol);
        prop_assert!(((&j * &p).transpose() - &j * &p).norm() < tol);
    }

    #[test]
    fn jacobian_matches_central_differences(q in config()) {
        let m = robot();
        let jac = jacobian(&m, &q).unwrap();
        let h = 1e-6;
        for c in 0..q.len() {
            let (mut a, mut b) = (q.clone(), q.clone());
            a[c] += h;
            b[c] -= h;
            let (pa, pb) = (forward_kinematics(&m, &a).unwrap(), forward_kinematics(&m, &b).unwrap());
            let fd = [(pa.x - pb.x) / (2.0 * h), (pa.y - pb.y) / (2.0 * h), (pa.phi - pb.phi) / (2.0 * h)];
            for r in 0..3 {
                prop_assert!((jac[(r, c)] - fd[r]).abs() < 1e-6, "({r},{c}) {} vs {}", jac[(r, c)], fd[r]);
            }
        }
    }

    #[test]
    fn joint_limit_measure_is_non_positive_and_zero_at_mid_range(q in config()) {
        let m = robot();
        prop_assert!(joint_limit_measure(&q, &m) <= 0.0);
        let mid = m.mid_range(m.base_pose(&q));
        prop_assert!(joint_limit_measure(&mid, &m).abs() < 1e-15);
    }
}
