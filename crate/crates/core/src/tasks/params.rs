//! Task parameters θ and their admissible ranges.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    RRest,
    GammaCl,
    GammaOl,
    TTraj,
}

impl ParamKind {
    /// Canonical order used for parameter vectors.
    pub const ALL: [ParamKind; 4] = [
        ParamKind::RRest,
        ParamKind::GammaCl,
        ParamKind::GammaOl,
        ParamKind::TTraj,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamKind::RRest => "r_rest",
            ParamKind::GammaCl => "gamma_cl",
            ParamKind::GammaOl => "gamma_ol",
            ParamKind::TTraj => "t_traj",
        }
    }
}

/// Parameter set of one task. Only the parameters meaningful for the task
/// kind are present.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct TaskParams<T: Real = f64> {
    /// Spring rest length (m), obstacle avoidance only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_rest: Option<T>,
    /// Closed-loop gain (1/s).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_cl: Option<T>,
    /// Open-loop gain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_ol: Option<T>,
    /// Trajectory duration (s).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_traj: Option<T>,
}

impl<T: Real> TaskParams<T> {
    pub fn get(&self, kind: ParamKind) -> Option<T> {
        match kind {
            ParamKind::RRest => self.r_rest,
            ParamKind::GammaCl => self.gamma_cl,
            ParamKind::GammaOl => self.gamma_ol,
            ParamKind::TTraj => self.t_traj,
        }
    }

    pub fn slot(&mut self, kind: ParamKind) -> &mut Option<T> {
        match kind {
            ParamKind::RRest => &mut self.r_rest,
            ParamKind::GammaCl => &mut self.gamma_cl,
            ParamKind::GammaOl => &mut self.gamma_ol,
            ParamKind::TTraj => &mut self.t_traj,
        }
    }

    pub fn set(&mut self, kind: ParamKind, value: T) {
        *self.slot(kind) = Some(value);
    }

    /// Kinds present in this set, in canonical order.
    pub fn kinds(&self) -> Vec<ParamKind> {
        ParamKind::ALL
            .into_iter()
            .filter(|k| self.get(*k).is_some())
            .collect()
    }

    /// Present values in canonical order.
    pub fn values(&self) -> Vec<T> {
        ParamKind::ALL.into_iter().filter_map(|k| self.get(k)).collect()
    }

    /// Reads a parameter the task kind requires.
    pub fn require(&self, kind: ParamKind) -> Result<T> {
        self.get(kind)
            .ok_or_else(|| Error::config(kind.name(), "parameter missing for this task"))
    }
}

/// Interval `(lo, hi]` when `lo_open`, otherwise `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct Bound<T: Real = f64> {
    pub lo: T,
    pub hi: T,
    #[serde(default)]
    pub lo_open: bool,
}

impl<T: Real> Bound<T> {
    pub fn open_closed(lo: T, hi: T) -> Self {
        Self { lo, hi, lo_open: true }
    }

    pub fn closed(lo: T, hi: T) -> Self {
        Self {
            lo,
            hi,
            lo_open: false,
        }
    }

    pub fn width(&self) -> T {
        self.hi - self.lo
    }

    /// Smallest admissible value (an open lower end is approached to 0.1%
    /// of the width).
    pub fn floor(&self) -> T {
        if self.lo_open {
            self.lo + self.width() * T::lit(1e-3)
        } else {
            self.lo
        }
    }

    pub fn contains(&self, v: T) -> bool {
        let above = if self.lo_open { v > self.lo } else { v >= self.lo };
        above && v <= self.hi
    }

    pub fn clamp(&self, v: T) -> T {
        v.max(self.floor()).min(self.hi)
    }

    /// Maps `u ∈ [0, 1)` onto the interval, never producing an open end.
    pub fn sample(&self, u: T) -> T {
        if self.lo_open {
            self.clamp(self.hi - self.width() * u)
        } else {
            self.lo + self.width() * u
        }
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        if !(self.lo < self.hi) {
            return Err(Error::config(path, "bound must satisfy lo < hi"));
        }
        Ok(())
    }
}

/// Admissible range for each parameter a task carries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct ParamBounds<T: Real = f64> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_rest: Option<Bound<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_cl: Option<Bound<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_ol: Option<Bound<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_traj: Option<Bound<T>>,
}

impl<T: Real> ParamBounds<T> {
    pub fn get(&self, kind: ParamKind) -> Option<Bound<T>> {
        match kind {
            ParamKind::RRest => self.r_rest,
            ParamKind::GammaCl => self.gamma_cl,
            ParamKind::GammaOl => self.gamma_ol,
            ParamKind::TTraj => self.t_traj,
        }
    }

    pub fn slot(&mut self, kind: ParamKind) -> &mut Option<Bound<T>> {
        match kind {
            ParamKind::RRest => &mut self.r_rest,
            ParamKind::GammaCl => &mut self.gamma_cl,
            ParamKind::GammaOl => &mut self.gamma_ol,
            ParamKind::TTraj => &mut self.t_traj,
        }
    }

    pub fn kinds(&self) -> Vec<ParamKind> {
        ParamKind::ALL
            .into_iter()
            .filter(|k| self.get(*k).is_some())
            .collect()
    }

    /// Clips every present parameter into its bound.
    pub fn clamp(&self, params: &TaskParams<T>) -> TaskParams<T> {
        let mut out = *params;
        for k in ParamKind::ALL {
            if let (Some(b), Some(v)) = (self.get(k), params.get(k)) {
                out.set(k, b.clamp(v));
            }
        }
        out
    }

    /// Checks that `params` carries exactly the bounded kinds, each in range.
    pub fn check(&self, params: &TaskParams<T>, path: &str) -> Result<()> {
        for k in ParamKind::ALL {
            match (self.get(k), params.get(k)) {
                (Some(b), Some(v)) => {
                    if !b.contains(v) {
                        return Err(Error::config(
                            format!("{path}.{}", k.name()),
                            format!("value {} outside bound", v.as_f64()),
                        ));
                    }
                }
                (Some(_), None) => {
                    return Err(Error::config(format!("{path}.{}", k.name()), "missing"));
                }
                (None, Some(_)) => {
                    return Err(Error::config(
                        format!("{path}.{}", k.name()),
                        "parameter not used by this task",
                    ));
                }
                (None, None) => {}
            }
        }
        Ok(())
    }
}
