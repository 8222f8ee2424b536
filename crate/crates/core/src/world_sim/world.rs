//! World geometry and the simulated range sensors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{BaseLimits, Pose2D};
use crate::scalar::Real;

/// Number of merged rays: one per degree around the base.
pub const RAY_COUNT: usize = 360;

/// Smallest reported range; readings are strictly positive.
const MIN_RANGE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct Circle<T: Real = f64> {
    pub center: (T, T),
    pub radius: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct Segment<T: Real = f64> {
    pub a: (T, T),
    pub b: (T, T),
}

/// Disc moving along a piecewise-linear path at constant speed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct Mover<T: Real = f64> {
    pub radius: T,
    pub waypoints: Vec<(T, T)>,
    pub speed: T,
    /// Return to the first waypoint and repeat instead of stopping at the last.
    #[serde(default)]
    pub looped: bool,
}

impl<T: Real> Mover<T> {
    fn legs(&self) -> Vec<((T, T), (T, T))> {
        let mut legs: Vec<_> = self.waypoints.windows(2).map(|w| (w[0], w[1])).collect();
        if self.looped && self.waypoints.len() > 1 {
            legs.push((*self.waypoints.last().unwrap(), self.waypoints[0]));
        }
        legs
    }

    pub fn position(&self, t: T) -> (T, T) {
        let legs = self.legs();
        if legs.is_empty() {
            return self.waypoints[0];
        }
        let len = |(a, b): &((T, T), (T, T))| ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        let total = legs.iter().map(len).fold(T::zero(), |a, b| a + b);
        let mut s = self.speed * t.max(T::zero());
        if total <= T::zero() {
            return self.waypoints[0];
        }
        if self.looped {
            s %= total;
        } else if s >= total {
            return legs.last().unwrap().1;
        }
        for leg in &legs {
            let l = len(leg);
            if s <= l && l > T::zero() {
                let f = s / l;
                let (a, b) = *leg;
                return (a.0 + (b.0 - a.0) * f, a.1 + (b.1 - a.1) * f);
            }
            s -= l;
        }
        legs.last().unwrap().1
    }

    pub fn at(&self, t: T) -> Circle<T> {
        Circle {
            center: self.position(t),
            radius: self.radius,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct World<T: Real = f64> {
    #[serde(default)]
    pub circles: Vec<Circle<T>>,
    #[serde(default)]
    pub segments: Vec<Segment<T>>,
    #[serde(default)]
    pub movers: Vec<Mover<T>>,
    pub goal: Pose2D<T>,
    pub bounds: BaseLimits<T>,
    /// Scanner range cap (m).
    #[serde(default = "default_max_range")]
    pub max_range: T,
}

fn default_max_range<T: Real>() -> T {
    T::lit(5.0)
}

/// Merged 360-ray reading, index `i` looking `i` degrees counter-clockwise
/// from the base heading.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorScan<T: Real = f64> {
    pub distances: Vec<T>,
    pub max_range: T,
}

impl<T: Real> SensorScan<T> {
    pub fn min(&self) -> T {
        self.distances
            .iter()
            .fold(self.max_range, |m, d| m.min(*d))
    }
}

/// Range sensing interface the obstacle-avoidance task differentiates through.
pub trait RangeSensor<T: Real> {
    /// Distance from the chassis edge along ray `ray` for a base at `base`.
    fn ray_distance(&self, base: &Pose2D<T>, ray: usize) -> T;

    fn scan(&self, base: &Pose2D<T>) -> SensorScan<T>;
}

fn ray_circle<T: Real>(p: (T, T), u: (T, T), c: &Circle<T>) -> Option<T> {
    let (dx, dy) = (p.0 - c.center.0, p.1 - c.center.1);
    let b = u.0 * dx + u.1 * dy;
    let cc = dx * dx + dy * dy - c.radius * c.radius;
    if cc <= T::zero() {
        return Some(T::zero());
    }
    let disc = b * b - cc;
    if disc < T::zero() {
        return None;
    }
    let s = -b - disc.sqrt();
    (s >= T::zero()).then_some(s)
}

fn ray_segment<T: Real>(p: (T, T), u: (T, T), seg: &Segment<T>) -> Option<T> {
    let e = (seg.b.0 - seg.a.0, seg.b.1 - seg.a.1);
    let denom = u.0 * e.1 - u.1 * e.0;
    if denom.abs() <= T::default_epsilon() {
        return None;
    }
    let w = (seg.a.0 - p.0, seg.a.1 - p.1);
    let s = (w.0 * e.1 - w.1 * e.0) / denom;
    let v = (w.0 * u.1 - w.1 * u.0) / denom;
    (s >= T::zero() && v >= T::zero() && v <= T::one()).then_some(s)
}

fn point_segment_distance<T: Real>(p: (T, T), seg: &Segment<T>) -> T {
    let e = (seg.b.0 - seg.a.0, seg.b.1 - seg.a.1);
    let len2 = e.0 * e.0 + e.1 * e.1;
    let f = if len2 > T::zero() {
        (((p.0 - seg.a.0) * e.0 + (p.1 - seg.a.1) * e.1) / len2)
            .max(T::zero())
            .min(T::one())
    } else {
        T::zero()
    };
    let (cx, cy) = (seg.a.0 + e.0 * f, seg.a.1 + e.1 * f);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

impl<T: Real> World<T> {
    pub fn empty(goal: Pose2D<T>, bounds: BaseLimits<T>) -> Self {
        Self {
            circles: vec![],
            segments: vec![],
            movers: vec![],
            goal,
            bounds,
            max_range: default_max_range(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.bounds.contains(self.goal.x, self.goal.y) {
            return Err(Error::config("world.goal", "goal lies outside the workspace bounds"));
        }
        for (i, c) in self.circles.iter().enumerate() {
            if !(c.radius > T::zero()) {
                return Err(Error::config(format!("world.circles[{i}].radius"), "must be positive"));
            }
        }
        for (i, s) in self.segments.iter().enumerate() {
            if s.a == s.b {
                return Err(Error::config(format!("world.segments[{i}]"), "degenerate segment"));
            }
        }
        for (i, m) in self.movers.iter().enumerate() {
            if !(m.radius > T::zero()) || m.waypoints.is_empty() || m.speed < T::zero() {
                return Err(Error::config(
                    format!("world.movers[{i}]"),
                    "needs a positive radius, a waypoint and a non-negative speed",
                ));
            }
        }
        if !(self.max_range > T::zero()) {
            return Err(Error::config("world.max_range", "must be positive"));
        }
        Ok(())
    }

    /// All discs (static and moving) at time `t`.
    pub fn circles_at(&self, t: T) -> Vec<Circle<T>> {
        self.circles
            .iter()
            .copied()
            .chain(self.movers.iter().map(|m| m.at(t)))
            .collect()
    }

    /// Signed clearance between a chassis disc at `(x, y)` and the nearest obstacle.
    pub fn clearance(&self, x: T, y: T, base_radius: T, t: T) -> T {
        let mut best = T::max_value().unwrap_or_else(|| T::lit(1e300));
        for c in self.circles_at(t) {
            let d = ((x - c.center.0).powi(2) + (y - c.center.1).powi(2)).sqrt() - c.radius;
            best = best.min(d);
        }
        for s in &self.segments {
            best = best.min(point_segment_distance((x, y), s));
        }
        best - base_radius
    }

    /// Sensor view of the world frozen at time `t`.
    pub fn view(&self, t: T, base_radius: T) -> WorldView<'_, T> {
        WorldView {
            circles: self.circles_at(t),
            segments: &self.segments,
            max_range: self.max_range,
            base_radius,
        }
    }
}

/// World snapshot with moving obstacles resolved at one instant.
pub struct WorldView<'a, T: Real> {
    circles: Vec<Circle<T>>,
    segments: &'a [Segment<T>],
    max_range: T,
    base_radius: T,
}

impl<T: Real> WorldView<'_, T> {
    fn cast(&self, p: (T, T), heading: T) -> T {
        let (s, c) = heading.sin_cos();
        let u = (c, s);
        let mut hit: Option<T> = None;
        for circle in &self.circles {
            if let Some(d) = ray_circle(p, u, circle) {
                hit = Some(hit.map_or(d, |h| h.min(d)));
            }
        }
        for seg in self.segments {
            if let Some(d) = ray_segment(p, u, seg) {
                hit = Some(hit.map_or(d, |h| h.min(d)));
            }
        }
        match hit {
            Some(h) => (h - self.base_radius).min(self.max_range).max(T::lit(MIN_RANGE)),
            None => self.max_range,
        }
    }

    /// One 270° scanner looking along `axis_deg`, reduced to its ±90° sector.
    fn sector(&self, base: &Pose2D<T>, axis_deg: i32, skip_edges: bool) -> Vec<(usize, T)> {
        let span = if skip_edges { -89..=89 } else { -90..=90 };
        span.map(|off| {
            let deg = (axis_deg + off).rem_euclid(360) as usize;
            let heading = base.phi + T::lit((deg as f64).to_radians());
            (deg, self.cast((base.x, base.y), heading))
        })
        .collect()
    }
}

impl<T: Real> RangeSensor<T> for WorldView<'_, T> {
    fn ray_distance(&self, base: &Pose2D<T>, ray: usize) -> T {
        let heading = base.phi + T::lit((ray as f64).to_radians());
        self.cast((base.x, base.y), heading)
    }

    /// Front sector (181 rays) plus rear sector with its two edge rays
    /// switched off where they coincide with the front ones (179 rays).
    fn scan(&self, base: &Pose2D<T>) -> SensorScan<T> {
        let mut distances = vec![self.max_range; RAY_COUNT];
        for (deg, d) in self.sector(base, 180, true) {
            distances[deg] = d;
        }
        for (deg, d) in self.sector(base, 0, false) {
            distances[deg] = d;
        }
        SensorScan {
            distances,
            max_range: self.max_range,
        }
    }
}
