//! The Stack-of-Tasks genome, its composition by null-space projection,
//! the distance between two stacks, and its JSON form.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{pseudo_inverse, JacobianMatrix};
use crate::scalar::Real;
use crate::tasks::{ParamKind, TaskDictionary, TaskOutput, TaskParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct TaskEntry<T: Real = f64> {
    pub task_id: String,
    pub active: bool,
    pub params: TaskParams<T>,
}

impl<T: Real> TaskEntry<T> {
    pub fn new(task_id: impl Into<String>, active: bool, params: TaskParams<T>) -> Self {
        Self {
            task_id: task_id.into(),
            active,
            params,
        }
    }
}

/// One genome: every dictionary task in priority order (index 0 first),
/// flagged active or not, plus the cost once evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct StackOfTasks<T: Real = f64> {
    pub cost: Option<T>,
    pub entries: Vec<TaskEntry<T>>,
}

/// Rank of an entry among the active entries of its stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PriorityIndex(pub usize);

impl<T: Real> StackOfTasks<T> {
    pub fn new(entries: Vec<TaskEntry<T>>) -> Self {
        Self { cost: None, entries }
    }

    /// All tasks active, dictionary order, default parameters.
    pub fn from_dictionary(dict: &TaskDictionary<T>) -> Self {
        Self::new(
            dict.tasks()
                .iter()
                .map(|d| TaskEntry::new(d.id.clone(), true, d.defaults))
                .collect(),
        )
    }

    pub fn with_cost(mut self, cost: T) -> Self {
        self.cost = Some(cost);
        self
    }

    pub fn without_cost(mut self) -> Self {
        self.cost = None;
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, task_id: &str) -> Option<&TaskEntry<T>> {
        self.entries.iter().find(|e| e.task_id == task_id)
    }

    /// Position in the full entry list, active or not.
    pub fn position(&self, task_id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.task_id == task_id)
    }

    pub fn active_entries(&self) -> impl Iterator<Item = &TaskEntry<T>> {
        self.entries.iter().filter(|e| e.active)
    }

    pub fn active_count(&self) -> usize {
        self.active_entries().count()
    }

    /// Task ids of the active entries in priority order.
    pub fn active_order(&self) -> Vec<&str> {
        self.active_entries().map(|e| e.task_id.as_str()).collect()
    }

    pub fn order(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.task_id.as_str()).collect()
    }

    /// `π` of an active task; `None` for inactive or unknown ids.
    pub fn priority_index(&self, task_id: &str) -> Option<PriorityIndex> {
        self.active_entries()
            .position(|e| e.task_id == task_id)
            .map(PriorityIndex)
    }

    /// Checks the genome against the dictionary: each task exactly once,
    /// parameters in bounds, at least one task active, cost non-negative.
    pub fn validate(&self, dict: &TaskDictionary<T>) -> Result<()> {
        if self.entries.len() != dict.len() {
            return Err(Error::config(
                "entries",
                format!("expected {} entries, got {}", dict.len(), self.entries.len()),
            ));
        }
        for (i, e) in self.entries.iter().enumerate() {
            let path = format!("entries[{i}]");
            let def = dict
                .get(&e.task_id)
                .ok_or_else(|| Error::config(format!("{path}.task_id"), format!("unknown task `{}`", e.task_id)))?;
            if self.entries[..i].iter().any(|o| o.task_id == e.task_id) {
                return Err(Error::config(
                    format!("{path}.task_id"),
                    format!("duplicate task `{}`", e.task_id),
                ));
            }
            def.bounds.check(&e.params, &format!("{path}.params"))?;
        }
        if self.active_count() == 0 {
            return Err(Error::config("entries", "no active task"));
        }
        if let Some(c) = self.cost {
            if !(c >= T::zero()) {
                return Err(Error::config("cost", "must be non-negative"));
            }
        }
        Ok(())
    }
}

/// `N = I − J†J`; the identity for an empty `J`.
pub fn null_space_projector<T: Real>(j_aug: &JacobianMatrix<T>, lambda: T) -> DMatrix<T> {
    let n = j_aug.ncols();
    if j_aug.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    DMatrix::identity(n, n) - pseudo_inverse(j_aug, lambda) * j_aug
}

/// Row-space summary `diag(σ) Vᵀ` of `J`: same `JᵀJ`, hence same projector,
/// with at most `n` rows.
fn compress<T: Real>(j: DMatrix<T>) -> DMatrix<T> {
    if j.nrows() <= j.ncols() {
        return j;
    }
    let svd = j.svd(false, true);
    let vt = svd.v_t.expect("requested Vᵀ");
    let mut out = vt;
    for (k, s) in svd.singular_values.iter().enumerate() {
        out.row_mut(k).scale_mut(*s);
    }
    out
}

/// `q̇ = Σ_i N_{i−1} q̇_i` over outputs in priority order, with `N_i` the
/// projector onto the null space of all rows claimed by tasks `1..=i`.
pub fn compose_outputs<T: Real>(outputs: &[TaskOutput<T>], n: usize, lambda: T) -> Result<DVector<T>> {
    let mut qdot = DVector::zeros(n);
    let mut j_aug: DMatrix<T> = DMatrix::zeros(0, n);
    let mut proj: Option<DMatrix<T>> = None;
    for (i, out) in outputs.iter().enumerate() {
        if out.qdot.len() != n || out.j_claim.ncols() != n {
            return Err(Error::Composition(format!(
                "output {i} has {} velocities and {} Jacobian columns, expected {n}",
                out.qdot.len(),
                out.j_claim.ncols()
            )));
        }
        match &proj {
            None => qdot += &out.qdot,
            Some(p) => qdot += p * &out.qdot,
        }
        if out.j_claim.nrows() > 0 && i + 1 < outputs.len() {
            let rows = j_aug.nrows();
            let mut stacked = j_aug.resize_vertically(rows + out.j_claim.nrows(), T::zero());
            stacked.rows_mut(rows, out.j_claim.nrows()).copy_from(&out.j_claim);
            j_aug = compress(stacked);
            proj = Some(null_space_projector(&j_aug, lambda));
        }
    }
    Ok(qdot)
}

/// [`compose_outputs`] with a check that `outputs` lines up with the active entries.
pub fn compose<T: Real>(stack: &StackOfTasks<T>, outputs: &[TaskOutput<T>], lambda: T) -> Result<DVector<T>> {
    if outputs.len() != stack.active_count() {
        return Err(Error::Composition(format!(
            "{} outputs for {} active entries",
            outputs.len(),
            stack.active_count()
        )));
    }
    let n = outputs.first().map_or(0, |o| o.qdot.len());
    compose_outputs(outputs, n, lambda)
}

/// `d = Σ_i δ_θ + δ_prior` over the tasks of the shared dictionary.
///
/// `δ_θ` is the Euclidean distance between parameter vectors (inactive tasks
/// included); `δ_prior = |π_a − π_b|` when the task is active in both stacks
/// and `n_tasks` otherwise.
pub fn sot_distance<T: Real>(a: &StackOfTasks<T>, b: &StackOfTasks<T>) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::Comparison(format!("{} vs {} entries", a.len(), b.len())));
    }
    let n = T::from_usize(a.len()).unwrap();
    let mut d = T::zero();
    // Canonical id order keeps the floating-point sum symmetric in (a, b).
    let mut ids: Vec<&TaskEntry<T>> = a.entries.iter().collect();
    ids.sort_by(|x, y| x.task_id.cmp(&y.task_id));
    for ea in ids {
        let eb = b
            .entry(&ea.task_id)
            .ok_or_else(|| Error::Comparison(format!("task `{}` missing from second stack", ea.task_id)))?;
        let mut sq = T::zero();
        for k in ParamKind::ALL {
            match (ea.params.get(k), eb.params.get(k)) {
                (Some(x), Some(y)) => sq += (x - y) * (x - y),
                (None, None) => {}
                _ => {
                    return Err(Error::Comparison(format!(
                        "task `{}` carries `{}` in only one stack",
                        ea.task_id,
                        k.name()
                    )))
                }
            }
        }
        d += sq.sqrt();
        d += match (a.priority_index(&ea.task_id), b.priority_index(&ea.task_id)) {
            (Some(pa), Some(pb)) => T::from_usize(pa.0.abs_diff(pb.0)).unwrap(),
            _ => n,
        };
    }
    Ok(d)
}

pub fn serialize_stack<T: Real>(stack: &StackOfTasks<T>) -> String {
    serde_json::to_string_pretty(stack).expect("stack serialization is infallible")
}

pub fn deserialize_stack<T: Real>(text: &str) -> Result<StackOfTasks<T>> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::damped_pseudo_inverse;
    use proptest::prelude::*;

    fn out(qdot: Vec<f64>, rows: Vec<Vec<f64>>) -> TaskOutput {
        let n = qdot.len();
        let j = DMatrix::from_fn(rows.len(), n, |r, c| rows[r][c]);
        TaskOutput {
            qdot: DVector::from_vec(qdot),
            j_claim: j,
            diagnostics: Default::default(),
        }
    }

    #[test]
    fn single_task_passes_through() {
        let q = compose_outputs(&[out(vec![1.0, -2.0], vec![vec![1.0, 0.0]])], 2, 0.0).unwrap();
        assert_eq!(q, DVector::from_vec(vec![1.0, -2.0]));
    }

    #[test]
    fn square_claim_blocks_lower_tasks() {
        let outs = [
            out(vec![0.3, 0.4], vec![vec![2.0, 1.0], vec![0.0, 1.0]]),
            out(vec![5.0, 7.0], vec![]),
        ];
        let q = compose_outputs(&outs, 2, 0.0).unwrap();
        assert!((q - DVector::from_vec(vec![0.3, 0.4])).norm() < 1e-12);
    }

    #[test]
    fn row_claim_hand_example() {
        let outs = [out(vec![0.0, 0.0], vec![vec![1.0, 0.0]]), out(vec![5.0, 7.0], vec![])];
        let q = compose_outputs(&outs, 2, 0.0).unwrap();
        // Dense oracle: N = I − J⁺J with J⁺ = Jᵀ(JJᵀ)⁻¹.
        let j = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let jp = j.transpose() * (&j * j.transpose()).try_inverse().unwrap();
        let oracle = (DMatrix::<f64>::identity(2, 2) - jp * j) * DVector::from_vec(vec![5.0, 7.0]);
        assert_eq!(q, DVector::from_vec(vec![0.0, 7.0]));
        assert!((q - oracle).norm() < 1e-15);
    }

    #[test]
    fn column_mismatch_is_an_error() {
        let outs = [out(vec![0.0, 0.0], vec![]), out(vec![1.0, 2.0, 3.0], vec![])];
        assert!(matches!(compose_outputs(&outs, 2, 0.0), Err(Error::Composition(_))));
    }

    #[test]
    fn projector_trivial_cases() {
        let empty = DMatrix::<f64>::zeros(0, 3);
        assert_eq!(null_space_projector(&empty, 0.0), DMatrix::identity(3, 3));
        assert!(null_space_projector(&DMatrix::<f64>::identity(3, 3), 0.0).norm() < 1e-15);
    }

    #[test]
    fn compression_keeps_projector() {
        let j = DMatrix::from_fn(9, 4, |r, c| ((r * 7 + c * 3) % 5) as f64 - 2.0);
        let a = null_space_projector(&j, 0.0);
        let b = null_space_projector(&compress(j.clone()), 0.0);
        assert!((a - b).norm() < 1e-10);
    }

    fn entry(id: &str, active: bool, g: f64) -> TaskEntry {
        TaskEntry::new(
            id,
            active,
            TaskParams {
                gamma_cl: Some(g),
                ..Default::default()
            },
        )
    }

    fn four(order: [&str; 4]) -> StackOfTasks {
        StackOfTasks::new(order.iter().map(|id| entry(id, true, 1.0)).collect())
    }

    #[test]
    fn distance_hand_examples() {
        let a = four(["t1", "t2", "t3", "t4"]);
        assert_eq!(sot_distance(&a, &a).unwrap(), 0.0);
        let b = four(["t1", "t3", "t2", "t4"]);
        assert_eq!(sot_distance(&a, &b).unwrap(), 2.0);
        let mut c = a.clone();
        c.entries[2].params.gamma_cl = Some(1.5);
        assert_eq!(sot_distance(&a, &c).unwrap(), 0.5);
        let mut off = a.clone();
        off.entries[3].active = false;
        assert_eq!(sot_distance(&a, &off).unwrap(), 4.0);
    }

    #[test]
    fn parse_error_carries_position() {
        let err = deserialize_stack::<f64>("{\n  \"cost\": null,\n  \"entries\": [,]\n}").unwrap_err();
        match err {
            Error::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert!(column > 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unset_cost_is_explicit_null() {
        let s = four(["a", "b", "c", "d"]);
        let text = serialize_stack(&s);
        assert!(text.contains("\"cost\": null"));
        assert_eq!(deserialize_stack::<f64>(&text).unwrap(), s);
    }

    fn wide_full_rank() -> impl Strategy<Value = DMatrix<f64>> {
        (1usize..4, 0usize..4).prop_flat_map(|(r, extra)| {
            let c = r + extra + 1;
            proptest::collection::vec(-2.0f64..2.0, r * c)
                .prop_map(move |v| DMatrix::from_vec(r, c, v))
                .prop_filter("full row rank", |j| damped_pseudo_inverse(j, 0.0).is_ok())
        })
    }

    proptest! {
        #[test]
        fn projector_is_idempotent_and_annihilates(j in wide_full_rank()) {
            let n = null_space_projector(&j, 0.0);
            prop_assert!((&j * &n).norm() < 1e-9);
            prop_assert!((&n * &n - &n).norm() < 1e-9);
        }

        #[test]
        fn primary_claim_is_protected(
            j in wide_full_rank(),
            seed in proptest::collection::vec(-3.0f64..3.0, 32),
        ) {
            let c = j.ncols();
            let v = |k: usize| DVector::from_fn(c, |i, _| seed[(i + k * c) % seed.len()]);
            let outs = vec![
                TaskOutput { qdot: v(0), j_claim: j.clone(), diagnostics: Default::default() },
                TaskOutput { qdot: v(1), j_claim: DMatrix::from_fn(1, c, |_, i| seed[i]), diagnostics: Default::default() },
                TaskOutput { qdot: v(2), j_claim: DMatrix::zeros(0, c), diagnostics: Default::default() },
            ];
            let q = compose_outputs(&outs, c, 0.0).unwrap();
            prop_assert!((&j * (&q - &outs[0].qdot)).norm() < 1e-8 * (1.0 + q.norm()));
        }

        #[test]
        fn distance_is_symmetric_and_nonnegative(
            perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
            flags in proptest::collection::vec(any::<bool>(), 4),
            gains in proptest::collection::vec(0.1f64..2.0, 4),
        ) {
            let ids = ["t1", "t2", "t3", "t4"];
            let a = four(ids);
            let b = StackOfTasks::new(perm.iter().map(|&i| entry(ids[i], flags[i], gains[i])).collect());
            let ab = sot_distance(&a, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, sot_distance(&b, &a).unwrap());
        }

        #[test]
        fn serialization_round_trips(
            gains in proptest::collection::vec(1e-9f64..60.0, 4),
            cost in proptest::option::of(0.0f64..1e6),
            flags in proptest::collection::vec(any::<bool>(), 4),
        ) {
            let mut s = StackOfTasks::new(
                ["a", "b", "c", "d"].iter().zip(&gains).zip(&flags).map(|((id, g), f)| entry(id, *f, *g)).collect(),
            );
            s.cost = cost;
            let back: StackOfTasks = deserialize_stack(&serialize_stack(&s)).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
