//! Planar kinematic types and roundabout-frame projections.
//!
//! Everything lives in a local metric frame. A roundabout is a single
//! circulating annulus with yield-controlled approach legs; each leg carries
//! a centerline polyline that runs toward the ring, crosses the yield line and
//! ends at the conflict point where it meets the circulating lane.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type AgentId = u32;

/// Tolerance used when checking that a point lies on a polyline.
const ON_LINE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_polar(radius: f64, angle: f64) -> Self {
        Self::new(radius * angle.cos(), radius * angle.sin())
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    /// Unit vector in the same direction, or zero for a zero vector.
    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n > 0.0 {
            self * (1.0 / n)
        } else {
            Vec2::ZERO
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wrap an angle into `[-π, π)`.
pub fn wrap_angle(angle: f64) -> f64 {
    let a = (angle + PI).rem_euclid(TAU) - PI;
    if a >= PI {
        a - TAU
    } else {
        a
    }
}

/// Kinematic state of one vehicle at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub acceleration: Vec2,
    /// Radians in `[-π, π)`.
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl AgentState {
    /// A state moving with `velocity`; heading follows the velocity direction
    /// (or +x when stationary).
    pub fn moving(position: Vec2, velocity: Vec2, length: f64, width: f64) -> Self {
        let heading = if velocity.norm() > 0.0 {
            wrap_angle(velocity.angle())
        } else {
            0.0
        };
        Self {
            position,
            velocity,
            acceleration: Vec2::ZERO,
            heading,
            length,
            width,
        }
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }

    /// Unit vector of travel: velocity direction, falling back to heading.
    pub fn direction(&self) -> Vec2 {
        if self.velocity.norm() > 1e-9 {
            self.velocity.normalized()
        } else {
            Vec2::from_polar(1.0, self.heading)
        }
    }

    /// Acceleration projected onto the direction of travel.
    pub fn longitudinal_acceleration(&self) -> f64 {
        self.acceleration.dot(self.direction())
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.position.is_finite()
            && self.velocity.is_finite()
            && self.acceleration.is_finite()
            && self.heading.is_finite();
        if !finite {
            return Err(Error::Schema("agent state has non-finite components".into()));
        }
        if !(self.length > 0.0 && self.width > 0.0) {
            return Err(Error::Schema(format!(
                "vehicle dimensions must be positive (length {}, width {})",
                self.length, self.width
            )));
        }
        if !(-PI..PI).contains(&self.heading) {
            return Err(Error::Schema(format!("heading {} outside [-pi, pi)", self.heading)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedState {
    pub time: f64,
    pub state: AgentState,
}

/// Uniformly sampled track of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub agent_id: AgentId,
    pub dt: f64,
    pub states: Vec<TimedState>,
}

/// Frame index of `time` on a shared time base sampled every `dt` seconds.
pub fn frame_index(time: f64, dt: f64) -> i64 {
    (time / dt).round() as i64
}

impl Trajectory {
    /// Build a trajectory, checking it is non-empty and uniformly sampled.
    pub fn new(agent_id: AgentId, dt: f64, states: Vec<TimedState>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Schema(format!("agent {agent_id}: dt must be positive")));
        }
        if states.is_empty() {
            return Err(Error::Schema(format!("agent {agent_id}: empty trajectory")));
        }
        for pair in states.windows(2) {
            let gap = pair[1].time - pair[0].time;
            if gap <= 0.0 {
                return Err(Error::Schema(format!(
                    "agent {agent_id}: times not strictly increasing at t={}",
                    pair[1].time
                )));
            }
            if (gap - dt).abs() > 1e-9 {
                return Err(Error::Schema(format!(
                    "agent {agent_id}: time gap {gap} at t={} differs from dt {dt}",
                    pair[1].time
                )));
            }
        }
        Ok(Self {
            agent_id,
            dt,
            states,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn first_frame(&self) -> i64 {
        frame_index(self.states[0].time, self.dt)
    }

    pub fn last_frame(&self) -> i64 {
        self.first_frame() + self.states.len() as i64 - 1
    }

    /// State at a global frame index, if the agent exists then.
    pub fn at_frame(&self, frame: i64) -> Option<&TimedState> {
        let idx = frame - self.first_frame();
        if idx < 0 {
            return None;
        }
        self.states.get(idx as usize)
    }
}

/// One agent in a single-instant snapshot of the scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneAgent {
    pub id: AgentId,
    pub state: AgentState,
}

/// Result of projecting a point onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the foot point measured from the first vertex; may be
    /// negative or exceed the polyline length when the point lies beyond an
    /// end segment.
    pub arc_length: f64,
    /// Perpendicular distance from the point to the polyline.
    pub offset: f64,
    pub foot: Vec2,
    pub segment: usize,
}

/// Polyline with cumulative arc lengths.
#[derive(Debug, Clone, PartialEq)]
struct Polyline {
    points: Vec<Vec2>,
    cumulative: Vec<f64>,
}

impl Polyline {
    fn new(points: Vec<Vec2>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Schema("polyline needs at least 2 points".into()));
        }
        let mut cumulative = Vec::with_capacity(points.len());
        cumulative.push(0.0);
        for pair in points.windows(2) {
            let len = pair[0].distance(pair[1]);
            if !(len > 0.0) {
                return Err(Error::Schema("polyline has a zero-length segment".into()));
            }
            let last = *cumulative.last().unwrap();
            cumulative.push(last + len);
        }
        Ok(Self { points, cumulative })
    }

    fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn segments(&self) -> usize {
        self.points.len() - 1
    }

    fn segment_direction(&self, i: usize) -> Vec2 {
        (self.points[i + 1] - self.points[i]).normalized()
    }

    /// Nearest-segment orthogonal projection. End segments extrapolate past
    /// the polyline ends. Ties go to the segment whose arc range is closer to
    /// `anchor_arc`.
    fn project(&self, p: Vec2, anchor_arc: f64) -> Projection {
        let last = self.segments() - 1;
        let mut best: Option<(Projection, f64)> = None;
        for i in 0..self.segments() {
            let a = self.points[i];
            let b = self.points[i + 1];
            let ab = b - a;
            let mut t = (p - a).dot(ab) / ab.norm_sq();
            if i > 0 {
                t = t.max(0.0);
            }
            if i < last {
                t = t.min(1.0);
            }
            let foot = a + ab * t;
            let offset = p.distance(foot);
            let seg_len = self.cumulative[i + 1] - self.cumulative[i];
            let arc_length = self.cumulative[i] + t * seg_len;
            let (lo, hi) = (self.cumulative[i], self.cumulative[i + 1]);
            let anchor_gap = if anchor_arc < lo {
                lo - anchor_arc
            } else if anchor_arc > hi {
                anchor_arc - hi
            } else {
                0.0
            };
            let candidate = Projection {
                arc_length,
                offset,
                foot,
                segment: i,
            };
            best = match best {
                None => Some((candidate, anchor_gap)),
                Some((cur, cur_gap)) => {
                    if offset < cur.offset - 1e-12
                        || ((offset - cur.offset).abs() <= 1e-12 && anchor_gap < cur_gap)
                    {
                        Some((candidate, anchor_gap))
                    } else {
                        Some((cur, cur_gap))
                    }
                }
            };
        }
        best.unwrap().0
    }

    /// Point at arc length `s`, extrapolating linearly beyond either end.
    fn point_at(&self, s: f64) -> Vec2 {
        let i = self.segment_for(s);
        self.points[i] + self.segment_direction(i) * (s - self.cumulative[i])
    }

    fn segment_for(&self, s: f64) -> usize {
        let last = self.segments() - 1;
        (0..last)
            .find(|&i| s < self.cumulative[i + 1])
            .unwrap_or(last)
    }
}

/// One yield-controlled entry into the roundabout.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproachLeg {
    leg_id: u32,
    centerline: Polyline,
    yield_point: Vec2,
    conflict_point: Vec2,
    yield_arc: f64,
}

impl ApproachLeg {
    /// `centerline` is ordered toward the roundabout; `yield_point` must lie
    /// on it.
    pub fn new(
        leg_id: u32,
        centerline: Vec<Vec2>,
        yield_point: Vec2,
        conflict_point: Vec2,
    ) -> Result<Self> {
        if centerline.iter().any(|p| !p.is_finite()) {
            return Err(Error::Schema(format!("leg {leg_id}: non-finite centerline point")));
        }
        let centerline = Polyline::new(centerline)
            .map_err(|e| Error::Schema(format!("leg {leg_id}: {e}")))?;
        let proj = centerline.project(yield_point, 0.0);
        if proj.offset > ON_LINE_EPS
            || proj.arc_length < -ON_LINE_EPS
            || proj.arc_length > centerline.length() + ON_LINE_EPS
        {
            return Err(Error::Schema(format!(
                "leg {leg_id}: yield point is {:.3e} m off the centerline",
                proj.offset
            )));
        }
        Ok(Self {
            leg_id,
            centerline,
            yield_point,
            conflict_point,
            yield_arc: proj.arc_length,
        })
    }

    pub fn leg_id(&self) -> u32 {
        self.leg_id
    }

    pub fn centerline(&self) -> &[Vec2] {
        &self.centerline.points
    }

    pub fn yield_point(&self) -> Vec2 {
        self.yield_point
    }

    pub fn conflict_point(&self) -> Vec2 {
        self.conflict_point
    }

    /// Arc length of the yield point along the centerline.
    pub fn yield_arc(&self) -> f64 {
        self.yield_arc
    }

    pub fn length(&self) -> f64 {
        self.centerline.length()
    }

    pub fn project(&self, p: Vec2) -> Projection {
        self.centerline.project(p, self.yield_arc)
    }

    pub fn point_at(&self, arc_length: f64) -> Vec2 {
        self.centerline.point_at(arc_length)
    }

    /// Unit travel direction of the centerline at `arc_length`.
    pub fn direction_at(&self, arc_length: f64) -> Vec2 {
        self.centerline
            .segment_direction(self.centerline.segment_for(arc_length))
    }
}

/// Direction traffic flows around the ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Circulation {
    #[default]
    CounterClockwise,
    Clockwise,
}

impl Circulation {
    /// +1 for counter-clockwise travel, -1 for clockwise.
    pub fn sign(self) -> f64 {
        match self {
            Circulation::CounterClockwise => 1.0,
            Circulation::Clockwise => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundaboutMap {
    pub center: Vec2,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub lane_width: f64,
    pub circulation: Circulation,
    pub legs: Vec<ApproachLeg>,
}

impl RoundaboutMap {
    pub fn new(
        center: Vec2,
        inner_radius: f64,
        outer_radius: f64,
        lane_width: f64,
        circulation: Circulation,
        legs: Vec<ApproachLeg>,
    ) -> Result<Self> {
        if !(inner_radius > 0.0 && inner_radius < outer_radius) {
            return Err(Error::Schema(format!(
                "radii must satisfy 0 < inner ({inner_radius}) < outer ({outer_radius})"
            )));
        }
        if !(lane_width > 0.0) {
            return Err(Error::Schema("lane width must be positive".into()));
        }
        if legs.is_empty() {
            return Err(Error::Schema("map needs at least one approach leg".into()));
        }
        let map = Self {
            center,
            inner_radius,
            outer_radius,
            lane_width,
            circulation,
            legs,
        };
        for leg in &map.legs {
            let r = leg.conflict_point.distance(center);
            if !(map.inner_radius..=map.outer_radius).contains(&r) {
                return Err(Error::Schema(format!(
                    "leg {}: conflict point at radius {r:.3} is outside the annulus",
                    leg.leg_id
                )));
            }
        }
        Ok(map)
    }

    pub fn leg(&self, leg_id: u32) -> Option<&ApproachLeg> {
        self.legs.iter().find(|l| l.leg_id == leg_id)
    }

    /// Radius of the circulating lane centerline.
    pub fn circulating_radius(&self) -> f64 {
        0.5 * (self.inner_radius + self.outer_radius)
    }

    /// Polar angle of `p` about the roundabout center.
    pub fn angle_of(&self, p: Vec2) -> f64 {
        (p - self.center).angle()
    }

    /// Angle swept from `from` to `to` in the direction of circulation, in `[0, 2π)`.
    pub fn angular_gap(&self, from: f64, to: f64) -> f64 {
        let raw = self.circulation.sign() * (to - from);
        let gap = raw.rem_euclid(TAU);
        if gap >= TAU {
            0.0
        } else {
            gap
        }
    }

    /// Point on the circle of `radius` at polar `angle`.
    pub fn ring_point(&self, radius: f64, angle: f64) -> Vec2 {
        self.center + Vec2::from_polar(radius, angle)
    }

    /// Unit tangent in the direction of circulation at polar `angle`.
    pub fn ring_tangent(&self, angle: f64) -> Vec2 {
        Vec2::new(-angle.sin(), angle.cos()) * self.circulation.sign()
    }
}

/// Signed arc length from the agent's centerline projection to the yield
/// point: positive upstream of the yield line, negative past it.
pub fn distance_to_yield(state: &AgentState, leg: &ApproachLeg, lane_width: f64) -> Result<f64> {
    let proj = leg.project(state.position);
    if proj.offset >= lane_width {
        return Err(Error::NotOnLeg {
            leg: leg.leg_id,
            offset: proj.offset,
        });
    }
    Ok(leg.yield_arc - proj.arc_length)
}

pub fn in_circulating_lane(state: &AgentState, map: &RoundaboutMap) -> bool {
    let r = state.position.distance(map.center);
    map.inner_radius <= r && r <= map.outer_radius
}

/// Arc length a circulating agent covers, at its current radius and in the
/// direction of circulation, before reaching the angular position of the
/// leg's conflict point. Lies in `[0, 2πr)`.
pub fn arc_distance_to_conflict(
    state: &AgentState,
    leg: &ApproachLeg,
    map: &RoundaboutMap,
) -> Result<f64> {
    let radius = state.position.distance(map.center);
    if !in_circulating_lane(state, map) {
        return Err(Error::NotCirculating { radius });
    }
    let from = map.angle_of(state.position);
    let to = map.angle_of(leg.conflict_point);
    Ok(radius * map.angular_gap(from, to))
}

/// Where an agent sits relative to the roundabout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Placement {
    /// On a leg, upstream of its yield line and not moving away from it.
    Approaching { leg_id: u32, distance_to_yield: f64 },
    /// On a leg between the yield line and the conflict point.
    Entering { leg_id: u32, distance_to_yield: f64 },
    Circulating,
    Elsewhere,
}

impl Placement {
    pub fn leg_id(&self) -> Option<u32> {
        match *self {
            Placement::Approaching { leg_id, .. } | Placement::Entering { leg_id, .. } => {
                Some(leg_id)
            }
            _ => None,
        }
    }
}

/// Classify an agent. Legs take precedence over the annulus when the agent
/// still lies on a leg segment before its conflict point.
pub fn locate(state: &AgentState, map: &RoundaboutMap) -> Placement {
    let mut best: Option<(f64, u32, f64)> = None;
    for leg in &map.legs {
        let proj = leg.project(state.position);
        if proj.offset >= map.lane_width || proj.arc_length > leg.length() {
            continue;
        }
        let downstream = state.velocity.dot(leg.direction_at(proj.arc_length)) >= -1e-9;
        if !downstream {
            continue;
        }
        if best.is_none_or(|(off, _, _)| proj.offset < off) {
            best = Some((proj.offset, leg.leg_id, leg.yield_arc - proj.arc_length));
        }
    }
    let circulating = in_circulating_lane(state, map);
    match best {
        Some((_, leg_id, d)) if d > 0.0 && !circulating => Placement::Approaching {
            leg_id,
            distance_to_yield: d,
        },
        Some((_, leg_id, d)) if !circulating || (d <= 0.0 && d > -map.lane_width) => {
            Placement::Entering {
                leg_id,
                distance_to_yield: d,
            }
        }
        _ if circulating => Placement::Circulating,
        _ => Placement::Elsewhere,
    }
}

/// A travel path: a polyline followed by an optional circular arc.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutePath {
    line: Option<Polyline>,
    start: Vec2,
    arc: Option<RingArc>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct RingArc {
    center: Vec2,
    radius: f64,
    start_angle: f64,
    sign: f64,
}

impl RoutePath {
    /// Straight path from `start` along `direction`.
    pub fn straight(start: Vec2, direction: Vec2) -> Self {
        let dir = direction.normalized();
        let dir = if dir == Vec2::ZERO { Vec2::new(1.0, 0.0) } else { dir };
        Self {
            line: Polyline::new(vec![start, start + dir]).ok(),
            start,
            arc: None,
        }
    }

    /// Pure arc around the ring starting at `start`.
    pub fn ring(start: Vec2, map: &RoundaboutMap) -> Self {
        let radius = start.distance(map.center);
        Self {
            line: None,
            start,
            arc: Some(RingArc {
                center: map.center,
                radius,
                start_angle: map.angle_of(start),
                sign: map.circulation.sign(),
            }),
        }
    }

    /// From `start` along the remainder of `leg` (from arc length
    /// `leg_arc` onward) and then around the ring at the conflict point's
    /// radius.
    pub fn along_leg(start: Vec2, leg: &ApproachLeg, leg_arc: f64, map: &RoundaboutMap) -> Self {
        let mut points = vec![start];
        let cl = &leg.centerline;
        for (i, p) in cl.points.iter().enumerate() {
            if cl.cumulative[i] > leg_arc + 1e-9 && p.distance(*points.last().unwrap()) > 1e-9 {
                points.push(*p);
            }
        }
        let end = leg.conflict_point;
        let arc = Some(RingArc {
            center: map.center,
            radius: end.distance(map.center),
            start_angle: map.angle_of(end),
            sign: map.circulation.sign(),
        });
        if points.len() < 2 {
            // Already at or past the end of the leg: continue on the ring from
            // the agent's own angular position.
            return Self {
                line: None,
                start,
                arc: Some(RingArc {
                    center: map.center,
                    radius: start.distance(map.center).max(1e-6),
                    start_angle: map.angle_of(start),
                    sign: map.circulation.sign(),
                }),
            };
        }
        let line = Polyline::new(points).ok();
        Self { line, start, arc }
    }

    fn line_length(&self) -> f64 {
        self.line.as_ref().map_or(0.0, |l| l.length())
    }

    pub fn point_at(&self, s: f64) -> Vec2 {
        let len = self.line_length();
        match (&self.line, &self.arc) {
            (Some(line), None) => line.point_at(s),
            (Some(line), Some(_)) if s <= len => line.point_at(s),
            (_, Some(arc)) => {
                let angle = arc.start_angle + arc.sign * (s - len) / arc.radius;
                arc.center + Vec2::from_polar(arc.radius, angle)
            }
            (None, None) => self.start,
        }
    }

    /// Unit travel direction at `s`.
    pub fn direction_at(&self, s: f64) -> Vec2 {
        let len = self.line_length();
        match (&self.line, &self.arc) {
            (Some(line), None) => line.segment_direction(line.segment_for(s)),
            (Some(line), Some(_)) if s <= len => line.segment_direction(line.segment_for(s)),
            (_, Some(arc)) => {
                let angle = arc.start_angle + arc.sign * (s - len) / arc.radius;
                Vec2::new(-angle.sin(), angle.cos()) * arc.sign
            }
            (None, None) => Vec2::new(1.0, 0.0),
        }
    }
}
