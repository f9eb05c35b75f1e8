//! Seeded single-lane roundabout micro-simulator.
//!
//! Vehicles arrive on each leg as a Poisson stream (plus optional ring
//! injections and scheduled arrivals), follow their leader with an
//! intelligent-driver-model rule, yield to circulating traffic at the yield
//! line and leave after one to three quarter turns. At every recorded frame
//! the virtual signal is evaluated on the same snapshot the labeller will
//! later see; a driver who is warned while inside the dilemma zone either
//! brakes hard or carries on.

use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::dilemma::APPROACH_SPEED_RANGE;
use crate::error::{Error, Result};
use crate::geometry::{
    wrap_angle, AgentId, AgentState, ApproachLeg, Circulation, RoundaboutMap, RoutePath,
    SceneAgent, TimedState, Trajectory, Vec2,
};
use crate::signal::{assess_agent, label_dz_events, DzEvent, SignalParams, SignalState};

// Car-following constants.
const MAX_ACCEL: f64 = 1.5;
const COMFORT_DECEL: f64 = 2.0;
const MIN_GAP: f64 = 2.0;
const TIME_GAP: f64 = 2.0;
const MAX_BRAKE: f64 = 9.0;
/// Deceleration a driver accepts to stop for a gap they do not like.
const YIELD_DECEL_LIMIT: f64 = 4.5;
/// Below this speed a driver who finds the gap unsafe always stops.
const CREEP_COMMIT_SPEED: f64 = 4.0;
/// Distance short of the yield line at which a yielding car comes to rest.
const STOP_MARGIN: f64 = 1.0;
/// Accepted-gap margins: a circulating car must clear the conflict area this
/// long before the entering car reaches it, or reach it this long after.
const GAP_MARGIN_BEHIND: f64 = 0.5;
const GAP_MARGIN_AHEAD: f64 = 1.0;
/// Approach deceleration that shapes the desired-speed profile near the ring.
const APPROACH_DECEL: f64 = 1.5;

/// Standard test roundabout: four tangential entries around a ring of
/// centerline radius 25 m.
pub fn standard_map() -> RoundaboutMap {
    let (inner, outer) = (22.0, 28.0);
    let ring = 0.5 * (inner + outer);
    let approach_angle: f64 = 0.1;
    let conflict_offset: f64 = 0.12;
    let approach_length = 120.0;
    let legs = (0..4)
        .map(|k| {
            let phi = k as f64 * FRAC_PI_2;
            let radial = Vec2::from_polar(1.0, phi);
            let tangent = Vec2::new(-phi.sin(), phi.cos());
            let travel = tangent * approach_angle.cos() - radial * approach_angle.sin();
            let yield_point = radial * outer;
            let start = yield_point - travel * approach_length;
            let conflict = Vec2::from_polar(ring, phi + conflict_offset);
            ApproachLeg::new(k, vec![start, yield_point, conflict], yield_point, conflict)
                .expect("standard leg geometry is valid")
        })
        .collect();
    RoundaboutMap::new(Vec2::ZERO, inner, outer, 6.0, Circulation::CounterClockwise, legs)
        .expect("standard map is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriverProfile {
    pub desired_speed: f64,
    /// Start-up delay after a standstill, seconds.
    pub reaction_time: f64,
    pub hard_brake_decel: f64,
    pub dz_brake_probability: f64,
}

impl DriverProfile {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = APPROACH_SPEED_RANGE;
        if !(lo..=hi).contains(&self.desired_speed) {
            return Err(Error::Config(format!(
                "desired speed {} outside [{lo}, {hi}] m/s",
                self.desired_speed
            )));
        }
        if !(0.0..=1.0).contains(&self.dz_brake_probability) {
            return Err(Error::Config("dz_brake_probability must lie in [0, 1]".into()));
        }
        if !(self.reaction_time >= 0.0) || !(self.hard_brake_decel > 0.0) {
            return Err(Error::Config("reaction time and braking must be positive".into()));
        }
        Ok(())
    }
}

/// Ranges profiles are drawn from, uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileRanges {
    pub desired_speed: [f64; 2],
    pub reaction_time: [f64; 2],
    pub hard_brake_decel: [f64; 2],
    pub dz_brake_probability: f64,
}

impl Default for ProfileRanges {
    fn default() -> Self {
        Self {
            desired_speed: [8.5, 11.2],
            reaction_time: [0.8, 1.2],
            hard_brake_decel: [6.0, 8.0],
            dz_brake_probability: 0.5,
        }
    }
}

impl ProfileRanges {
    fn draw(&self, rng: &mut ChaCha8Rng) -> DriverProfile {
        let mut pick = |r: [f64; 2]| {
            if r[1] > r[0] {
                rng.random_range(r[0]..r[1])
            } else {
                r[0]
            }
        };
        DriverProfile {
            desired_speed: pick(self.desired_speed),
            reaction_time: pick(self.reaction_time),
            hard_brake_decel: pick(self.hard_brake_decel),
            dz_brake_probability: self.dz_brake_probability,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for r in [self.desired_speed, self.reaction_time, self.hard_brake_decel] {
            if r[0] > r[1] {
                return Err(Error::Config(format!("profile range {r:?} is reversed")));
            }
        }
        for bound in self.desired_speed {
            DriverProfile {
                desired_speed: bound,
                reaction_time: self.reaction_time[0],
                hard_brake_decel: self.hard_brake_decel[0],
                dz_brake_probability: self.dz_brake_probability,
            }
            .validate()?;
        }
        Ok(())
    }
}

/// Where a vehicle enters the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    /// Start of an approach leg, `offset` metres along its centerline.
    Leg { leg_id: u32, offset: f64 },
    /// Directly on the ring centerline at a polar angle.
    Ring { angle: f64 },
}

/// A vehicle that enters at a fixed time regardless of the random streams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduledArrival {
    pub time: f64,
    pub origin: Origin,
    pub profile: DriverProfile,
    /// Quarter turns driven on the ring before leaving.
    pub quarter_turns: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Recording step, seconds.
    pub dt: f64,
    /// Integration steps per recording step.
    pub substeps: usize,
    /// Simulated time, seconds.
    pub duration: f64,
    /// Poisson arrival rate on every leg, vehicles per second.
    pub arrival_rate: f64,
    /// Poisson rate of vehicles injected directly onto the ring.
    pub circulating_rate: f64,
    pub profiles: ProfileRanges,
    pub seed: u64,
    /// Distance to the yield line at which drivers start judging gaps, m.
    pub look_distance: f64,
    /// Speed drivers slow towards at the yield line when unimpeded, m/s.
    pub entry_speed: f64,
    pub vehicle_length: f64,
    pub vehicle_width: f64,
    pub scheduled: Vec<ScheduledArrival>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.5,
            substeps: 5,
            duration: 600.0,
            arrival_rate: 0.05,
            circulating_rate: 0.02,
            profiles: ProfileRanges::default(),
            seed: 1,
            look_distance: 12.0,
            entry_speed: 6.0,
            vehicle_length: 4.5,
            vehicle_width: 1.8,
            scheduled: Vec::new(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || self.substeps == 0 || !(self.duration >= 0.0) {
            return Err(Error::Config("sim needs dt > 0, substeps > 0, duration >= 0".into()));
        }
        if !(self.arrival_rate >= 0.0) || !(self.circulating_rate >= 0.0) {
            return Err(Error::Config("arrival rates must be non-negative".into()));
        }
        if !(self.vehicle_length > 0.0 && self.vehicle_width > 0.0) {
            return Err(Error::Config("vehicle dimensions must be positive".into()));
        }
        self.profiles.validate()?;
        for s in &self.scheduled {
            s.profile.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Collision {
    pub time: f64,
    pub a: AgentId,
    pub b: AgentId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub trajectories: Vec<Trajectory>,
    pub ground_truth_events: Vec<DzEvent>,
    pub collisions: Vec<Collision>,
}

/// Bounding-circle overlap test.
pub fn collision_check(a: &AgentState, b: &AgentState) -> bool {
    a.position.distance(b.position) < (a.length + b.length) / 2.0 * 0.5 + 0.3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Behavior {
    Normal,
    /// Will enter regardless of circulating traffic.
    Committed,
    /// Emergency stop after a dilemma warning.
    HardBrake,
}

#[derive(Debug, Clone)]
enum Route {
    Leg {
        leg: usize,
        leg_len: f64,
        yield_s: f64,
        conflict_angle: f64,
    },
    Ring {
        start_angle: f64,
    },
}

#[derive(Debug, Clone)]
struct Vehicle {
    id: AgentId,
    profile: DriverProfile,
    route: Route,
    path: RoutePath,
    s: f64,
    v: f64,
    a: f64,
    exit_s: f64,
    behavior: Behavior,
    yielding: bool,
    red_hold: bool,
    dz_decided: bool,
    standstill: f64,
    length: f64,
    width: f64,
    first_frame: i64,
    states: Vec<TimedState>,
}

impl Vehicle {
    fn distance_to_yield(&self) -> Option<f64> {
        match self.route {
            Route::Leg { yield_s, .. } => Some(yield_s - self.s),
            Route::Ring { .. } => None,
        }
    }

    fn leg(&self) -> Option<usize> {
        match self.route {
            Route::Leg { leg, .. } => Some(leg),
            Route::Ring { .. } => None,
        }
    }

    /// Angular position used for ordering around the ring. Vehicles still on
    /// a leg get a virtual angle behind their conflict point once they have
    /// crossed the yield line or committed to entering.
    fn ring_angle(&self, map: &RoundaboutMap, radius: f64) -> Option<f64> {
        let sign = map.circulation.sign();
        match self.route {
            Route::Ring { start_angle } => Some(start_angle + sign * self.s / radius),
            Route::Leg {
                leg_len,
                yield_s,
                conflict_angle,
                ..
            } => {
                if self.s >= leg_len {
                    Some(conflict_angle + sign * (self.s - leg_len) / radius)
                } else if self.s >= yield_s || self.behavior == Behavior::Committed {
                    Some(conflict_angle - sign * (leg_len - self.s) / radius)
                } else {
                    None
                }
            }
        }
    }

    fn agent_state(&self) -> AgentState {
        let dir = self.path.direction_at(self.s);
        AgentState {
            position: self.path.point_at(self.s),
            velocity: dir * self.v,
            acceleration: dir * self.a,
            heading: wrap_angle(dir.angle()),
            length: self.length,
            width: self.width,
        }
    }
}

/// Intelligent-driver-model acceleration towards `v0`, optionally behind a
/// leader at net gap `gap` moving at `v_lead`.
fn idm(v: f64, v0: f64, leader: Option<(f64, f64)>) -> f64 {
    let free = 1.0 - (v / v0.max(0.1)).powi(4);
    let interaction = leader.map_or(0.0, |(gap, v_lead)| {
        let desired = MIN_GAP
            + (v * TIME_GAP + v * (v - v_lead) / (2.0 * (MAX_ACCEL * COMFORT_DECEL).sqrt())).max(0.0);
        (desired / gap.max(0.1)).powi(2)
    });
    (MAX_ACCEL * (free - interaction)).clamp(-MAX_BRAKE, MAX_ACCEL)
}

struct World<'a> {
    map: &'a RoundaboutMap,
    config: &'a SimConfig,
    signal: &'a SignalParams,
    radius: f64,
    rng: ChaCha8Rng,
    next_id: AgentId,
    active: Vec<Vehicle>,
    finished: Vec<Vehicle>,
    pending: Vec<VecDeque<(f64, Option<ScheduledArrival>)>>,
    contacts: BTreeSet<(AgentId, AgentId)>,
    collisions: Vec<Collision>,
}

impl<'a> World<'a> {
    fn desired_speed(&self, veh: &Vehicle) -> f64 {
        match veh.distance_to_yield() {
            Some(d) if d > 0.0 => {
                let e = self.config.entry_speed;
                veh.profile
                    .desired_speed
                    .min((e * e + 2.0 * APPROACH_DECEL * d).sqrt())
            }
            _ => veh.profile.desired_speed,
        }
    }

    fn spawn(&mut self, origin: Origin, profile: DriverProfile, quarter_turns: u32, time: f64) -> bool {
        let (route, path, s, exit_s) = match origin {
            Origin::Leg { leg_id, offset } => {
                let Some(leg_idx) = self.map.legs.iter().position(|l| l.leg_id() == leg_id) else {
                    return true;
                };
                let leg = &self.map.legs[leg_idx];
                let path = RoutePath::along_leg(leg.centerline()[0], leg, 0.0, self.map);
                let leg_len = leg.length();
                let conflict_angle = self.map.angle_of(leg.conflict_point());
                let clear = self
                    .active
                    .iter()
                    .filter(|v| v.leg() == Some(leg_idx))
                    .all(|v| v.s - offset > (profile.desired_speed * 2.2).max(25.0));
                if !clear {
                    return false;
                }
                let exit = leg_len + quarter_turns as f64 * FRAC_PI_2 * self.radius;
                (
                    Route::Leg {
                        leg: leg_idx,
                        leg_len,
                        yield_s: leg.yield_arc(),
                        conflict_angle,
                    },
                    path,
                    offset,
                    exit,
                )
            }
            Origin::Ring { angle } => {
                let radius = self.radius;
                let clear = self.active.iter().all(|v| {
                    v.ring_angle(self.map, radius).is_none_or(|th| {
                        let ahead = radius * self.map.angular_gap(angle, th);
                        let behind = radius * self.map.angular_gap(th, angle);
                        ahead.min(behind) > 25.0
                    })
                });
                if !clear {
                    return true;
                }
                let start = self.map.ring_point(radius, angle);
                let path = RoutePath::ring(start, self.map);
                let exit = quarter_turns as f64 * FRAC_PI_2 * radius;
                (Route::Ring { start_angle: angle }, path, 0.0, exit)
            }
        };
        let id = self.next_id;
        self.next_id += 1;
        let mut veh = Vehicle {
            id,
            profile,
            route,
            path,
            s,
            v: 0.0,
            a: 0.0,
            exit_s,
            behavior: Behavior::Normal,
            yielding: false,
            red_hold: false,
            dz_decided: false,
            standstill: 0.0,
            length: self.config.vehicle_length,
            width: self.config.vehicle_width,
            first_frame: 0,
            states: Vec::new(),
        };
        veh.v = self.desired_speed(&veh);
        log::trace!("t={time:.1} spawn vehicle {id} at {origin:?}");
        self.active.push(veh);
        true
    }

    /// Net gap and speed of the nearest vehicle ahead of `i`.
    fn leader(&self, i: usize) -> Option<(f64, f64)> {
        let me = &self.active[i];
        let my_angle = me.ring_angle(self.map, self.radius);
        let mut best: Option<(f64, f64)> = None;
        let mut consider = |gap: f64, other: &Vehicle| {
            let net = gap - 0.5 * (me.length + other.length);
            if best.is_none_or(|(g, _)| net < g) {
                best = Some((net, other.v));
            }
        };
        for (j, other) in self.active.iter().enumerate() {
            if j == i {
                continue;
            }
            if me.leg().is_some() && me.leg() == other.leg() {
                if other.s > me.s {
                    consider(other.s - me.s, other);
                }
                continue;
            }
            if let (Some(a), Some(b)) = (my_angle, other.ring_angle(self.map, self.radius)) {
                let gap = self.radius * self.map.angular_gap(a, b);
                if gap < std::f64::consts::PI * self.radius {
                    consider(gap, other);
                }
            }
        }
        best
    }

    /// Whether circulating traffic leaves enough room for vehicle `i` to enter.
    fn gap_is_safe(&self, i: usize) -> bool {
        let me = &self.active[i];
        let Route::Leg {
            leg_len,
            conflict_angle,
            ..
        } = me.route
        else {
            return true;
        };
        let to_conflict = (leg_len - me.s).max(0.0);
        // Entry plan: accelerate from the current speed. The conflict area is
        // occupied while either car's body overlaps the other's path.
        let reach = 0.5 * (me.length + me.width) + 0.5;
        let time_to = |dist: f64| (-me.v + (me.v * me.v + 2.0 * MAX_ACCEL * dist.max(0.0)).sqrt()) / MAX_ACCEL;
        let (my_in, my_out) = (time_to(to_conflict - reach), time_to(to_conflict + reach));
        self.active.iter().enumerate().all(|(j, other)| {
            if j == i || (other.leg().is_some() && other.leg() == me.leg()) {
                return true;
            }
            let Some(angle) = other.ring_angle(self.map, self.radius) else {
                return true;
            };
            let arriving = self.radius * self.map.angular_gap(angle, conflict_angle);
            let passed = self.radius * self.map.angular_gap(conflict_angle, angle);
            if passed < 10.0 && to_conflict < 10.0 {
                return false;
            }
            let v = other.v.max(0.1);
            let their_in = (arriving - reach) / v;
            let their_out = (arriving + reach) / v;
            their_out + GAP_MARGIN_BEHIND < my_in || their_in > my_out + GAP_MARGIN_AHEAD
        })
    }

    fn acceleration(&mut self, i: usize) -> f64 {
        let leader = self.leader(i);
        let v0 = self.desired_speed(&self.active[i]);
        let me = &self.active[i];
        let follow = idm(me.v, v0, leader);
        let Some(d) = me.distance_to_yield() else {
            return follow;
        };
        if me.behavior == Behavior::HardBrake {
            return follow.min(-me.profile.hard_brake_decel);
        }
        if d <= 0.0 {
            return follow;
        }
        if me.behavior == Behavior::Committed {
            if me.v >= CREEP_COMMIT_SPEED {
                return follow;
            }
            // Held up behind a queue: the commitment no longer holds.
            self.active[i].behavior = Behavior::Normal;
        }
        if d <= self.config.look_distance {
            let safe = self.gap_is_safe(i);
            let me = &mut self.active[i];
            if safe {
                me.yielding = false;
            } else {
                let needed = me.v * me.v / (2.0 * (d - STOP_MARGIN).max(0.1));
                if needed <= YIELD_DECEL_LIMIT || me.v < CREEP_COMMIT_SPEED {
                    me.yielding = true;
                } else {
                    me.yielding = false;
                    me.behavior = Behavior::Committed;
                }
            }
        }
        let me = &self.active[i];
        if me.yielding || me.red_hold {
            // Constant deceleration that brings the car to rest just short of the line.
            let room = (d - STOP_MARGIN).max(0.1);
            let stop = if me.v < 0.5 {
                -MAX_BRAKE
            } else {
                -(me.v * me.v / (2.0 * room)).min(MAX_BRAKE)
            };
            follow.min(stop)
        } else {
            follow
        }
    }

    /// Signal-driven decisions at a recorded frame.
    fn frame_decisions(&mut self) {
        let scene: Vec<SceneAgent> = self
            .active
            .iter()
            .map(|v| SceneAgent {
                id: v.id,
                state: v.agent_state(),
            })
            .collect();
        for idx in 0..self.active.len() {
            let assessed = assess_agent(&scene[idx], &scene, self.map, self.signal);
            let veh = &mut self.active[idx];
            veh.red_hold = false;
            let Some(sig) = assessed else { continue };
            if veh.behavior != Behavior::Normal {
                continue;
            }
            let warned = sig.signal != SignalState::Green;
            if warned && sig.in_dilemma_zone {
                if !veh.dz_decided {
                    veh.dz_decided = true;
                    let brake = self.rng.random::<f64>() < veh.profile.dz_brake_probability;
                    veh.behavior = if brake {
                        Behavior::HardBrake
                    } else {
                        Behavior::Committed
                    };
                }
            } else if sig.signal == SignalState::Red {
                let d = sig.distance_to_yield;
                let needed = veh.v * veh.v / (2.0 * (d - STOP_MARGIN).max(0.1));
                if needed <= self.signal.dz.a_dec {
                    veh.red_hold = true;
                }
            }
        }
    }

    fn integrate(&mut self, h: f64, accels: &[f64]) {
        for (veh, &a) in self.active.iter_mut().zip(accels) {
            let mut a = a;
            if veh.v < 0.05 && a > 0.0 {
                veh.standstill += h;
                if veh.standstill < veh.profile.reaction_time {
                    a = 0.0;
                }
            } else if veh.v > 0.5 {
                veh.standstill = 0.0;
            }
            let v_next = veh.v + a * h;
            if v_next < 0.0 {
                veh.s += veh.v * veh.v / (2.0 * -a);
                veh.v = 0.0;
                if veh.behavior == Behavior::HardBrake {
                    veh.behavior = Behavior::Normal;
                    veh.yielding = true;
                }
            } else {
                veh.s += 0.5 * (veh.v + v_next) * h;
                veh.v = v_next;
            }
            veh.a = a;
        }
    }

    fn check_collisions(&mut self, time: f64) {
        let states: Vec<(AgentId, AgentState)> =
            self.active.iter().map(|v| (v.id, v.agent_state())).collect();
        let mut now = BTreeSet::new();
        for (i, (a_id, a)) in states.iter().enumerate() {
            for (b_id, b) in &states[i + 1..] {
                if collision_check(a, b) {
                    let pair = ((*a_id).min(*b_id), (*a_id).max(*b_id));
                    if !self.contacts.contains(&pair) {
                        self.collisions.push(Collision {
                            time,
                            a: pair.0,
                            b: pair.1,
                        });
                    }
                    now.insert(pair);
                }
            }
        }
        self.contacts = now;
    }

    fn retire(&mut self) {
        let (done, keep): (Vec<_>, Vec<_>) =
            std::mem::take(&mut self.active).into_iter().partition(|v| v.s >= v.exit_s);
        self.active = keep;
        self.finished.extend(done);
    }

    fn record(&mut self, frame: i64) {
        let time = frame as f64 * self.config.dt;
        for veh in &mut self.active {
            if veh.states.is_empty() {
                veh.first_frame = frame;
            }
            let state = veh.agent_state();
            veh.states.push(TimedState { time, state });
        }
    }

    fn release_arrivals(&mut self, time: f64) {
        for leg_idx in 0..self.pending.len() {
            while let Some(&(t, scheduled)) = self.pending[leg_idx].front() {
                if t > time {
                    break;
                }
                let (origin, profile, turns) = match scheduled {
                    Some(s) => (s.origin, s.profile, s.quarter_turns),
                    None => {
                        let profile = self.config.profiles.draw(&mut self.rng);
                        let turns = self.rng.random_range(1..=2);
                        let origin = if leg_idx < self.map.legs.len() {
                            Origin::Leg {
                                leg_id: self.map.legs[leg_idx].leg_id(),
                                offset: 0.0,
                            }
                        } else {
                            let k = self.rng.random_range(0..self.map.legs.len());
                            let base = self.map.angle_of(self.map.legs[k].conflict_point());
                            Origin::Ring {
                                angle: base - self.map.circulation.sign() * FRAC_PI_2 * 0.5,
                            }
                        };
                        (origin, profile, turns)
                    }
                };
                if self.spawn(origin, profile, turns, time) {
                    self.pending[leg_idx].pop_front();
                } else {
                    // Leg blocked: keep the arrival queued, resolved with the
                    // same draws next time.
                    if scheduled.is_none() {
                        let entry = self.pending[leg_idx].front_mut().unwrap();
                        entry.1 = Some(ScheduledArrival {
                            time: t,
                            origin,
                            profile,
                            quarter_turns: turns,
                        });
                    }
                    break;
                }
            }
        }
    }
}

fn poisson_times(rate: f64, duration: f64, rng: &mut ChaCha8Rng) -> VecDeque<(f64, Option<ScheduledArrival>)> {
    let mut out = VecDeque::new();
    if rate <= 0.0 {
        return out;
    }
    let exp = Exp::new(rate).expect("positive rate");
    let mut t = exp.sample(rng);
    while t < duration {
        out.push_back((t, None));
        t += exp.sample(rng);
    }
    out
}

/// Run the simulator. Identical inputs give identical results.
pub fn simulate(map: &RoundaboutMap, config: &SimConfig, signal: &SignalParams) -> Result<SimResult> {
    config.validate()?;
    signal.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // One queue per leg, one for ring injections, one for scheduled arrivals.
    let mut pending: Vec<VecDeque<_>> = map
        .legs
        .iter()
        .map(|_| poisson_times(config.arrival_rate, config.duration, &mut rng))
        .collect();
    pending.push(poisson_times(config.circulating_rate, config.duration, &mut rng));
    let mut scheduled = config.scheduled.clone();
    scheduled.sort_by(|a, b| a.time.total_cmp(&b.time));
    pending.push(scheduled.into_iter().map(|s| (s.time, Some(s))).collect());

    let mut world = World {
        map,
        config,
        signal,
        radius: map.circulating_radius(),
        rng,
        next_id: 1,
        active: Vec::new(),
        finished: Vec::new(),
        pending,
        contacts: BTreeSet::new(),
        collisions: Vec::new(),
    };
    let frames = (config.duration / config.dt).round() as i64;
    let h = config.dt / config.substeps as f64;
    for frame in 0..=frames {
        let t0 = frame as f64 * config.dt;
        world.release_arrivals(t0);
        world.record(frame);
        if frame == frames {
            break;
        }
        world.frame_decisions();
        for sub in 0..config.substeps {
            let accels: Vec<f64> = (0..world.active.len()).map(|i| world.acceleration(i)).collect();
            world.integrate(h, &accels);
            let t = t0 + (sub + 1) as f64 * h;
            world.check_collisions(t);
            world.retire();
            if sub + 1 < config.substeps {
                world.release_arrivals(t);
            }
        }
    }
    let mut vehicles = world.finished;
    vehicles.extend(world.active);
    vehicles.sort_by_key(|v| v.id);
    let trajectories = vehicles
        .into_iter()
        .filter(|v| !v.states.is_empty())
        .map(|v| Trajectory::new(v.id, config.dt, v.states))
        .collect::<Result<Vec<_>>>()?;
    let ground_truth_events = label_dz_events(&trajectories, map, signal)?;
    Ok(SimResult {
        trajectories,
        ground_truth_events,
        collisions: world.collisions,
    })
}
