//! Surrogate safety measures and the virtual yellow light.
//!
//! A circulating vehicle that will reach an approach leg's conflict point
//! soon, while close to an approaching vehicle, plays the role of a yellow
//! (or red) light for that approacher. Combined with the dilemma-zone band this
//! yields ground-truth dilemma events.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dilemma::{in_dilemma_zone, DzParams};
use crate::error::{Error, Result};
use crate::geometry::{
    arc_distance_to_conflict, frame_index, in_circulating_lane, locate, AgentId, AgentState,
    ApproachLeg, Placement, RoundaboutMap, SceneAgent, Trajectory,
};

/// Circulating speeds below this are treated as stationary (no arrival).
pub const MIN_CIRCULATING_SPEED: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalParams {
    /// Time-to-collision gate, seconds.
    pub t_max: f64,
    /// Separation gate, metres.
    pub d_t: f64,
    /// Whether red frames count as dilemma events (yellow frames always do).
    pub include_red: bool,
    pub dz: DzParams,
}

impl Default for SignalParams {
    fn default() -> Self {
        Self {
            t_max: 1.5,
            d_t: 10.0,
            include_red: true,
            dz: DzParams::default(),
        }
    }
}

impl SignalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_max > 0.0) || !(self.d_t > 0.0) {
            return Err(Error::Config("signal.t_max and signal.d_t must be positive".into()));
        }
        self.dz.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SignalState {
    Green,
    Yellow,
    Red,
}

impl SignalState {
    /// One-hot encoding in the order green, yellow, red.
    pub fn one_hot(self) -> [f64; 3] {
        match self {
            SignalState::Green => [1.0, 0.0, 0.0],
            SignalState::Yellow => [0.0, 1.0, 0.0],
            SignalState::Red => [0.0, 0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConflictAssessment {
    pub ttc: f64,
    pub tts: f64,
    pub soc: f64,
    pub circulating_id: AgentId,
}

/// Time for a circulating vehicle to reach the leg's conflict point at its
/// current speed; infinite when it is effectively stationary.
pub fn time_to_collision(
    circulating: &AgentState,
    leg: &ApproachLeg,
    map: &RoundaboutMap,
) -> Result<f64> {
    let arc = arc_distance_to_conflict(circulating, leg, map)?;
    let speed = circulating.speed();
    if speed < MIN_CIRCULATING_SPEED {
        return Ok(f64::INFINITY);
    }
    Ok(arc / speed)
}

/// Reaction time plus braking time at the safe deceleration.
pub fn time_to_stop(approaching: &AgentState, dz: &DzParams) -> f64 {
    dz.reaction_time + approaching.speed() / dz.a_dec
}

pub fn separation(a: &AgentState, b: &AgentState) -> f64 {
    a.position.distance(b.position)
}

/// Evaluate the signal rules over assessments already sorted by ascending
/// TTC. The first gated threat that leaves no time to stop returns red;
/// otherwise the first gated threat makes it yellow.
pub fn decide_signal(
    sorted: &[ConflictAssessment],
    params: &SignalParams,
) -> (SignalState, Option<ConflictAssessment>) {
    let mut result = (SignalState::Green, None);
    for a in sorted {
        if a.ttc < params.t_max && a.soc < params.d_t {
            if a.ttc <= a.tts {
                return (SignalState::Red, Some(*a));
            }
            if result.0 == SignalState::Green {
                result = (SignalState::Yellow, Some(*a));
            }
        }
    }
    result
}

/// Signal seen by `approaching` (agent `ego`) on `leg`, given every agent in
/// the scene. Agents outside the circulating annulus and the ego itself are
/// ignored.
pub fn compute_signal(
    ego: AgentId,
    approaching: &AgentState,
    leg: &ApproachLeg,
    scene: &[SceneAgent],
    map: &RoundaboutMap,
    params: &SignalParams,
) -> (SignalState, Option<ConflictAssessment>) {
    let tts = time_to_stop(approaching, &params.dz);
    let mut assessments: Vec<ConflictAssessment> = scene
        .iter()
        .filter(|other| other.id != ego && in_circulating_lane(&other.state, map))
        .filter_map(|other| {
            let ttc = time_to_collision(&other.state, leg, map).ok()?;
            Some(ConflictAssessment {
                ttc,
                tts,
                soc: separation(approaching, &other.state),
                circulating_id: other.id,
            })
        })
        .collect();
    assessments.sort_by(|a, b| {
        a.ttc
            .total_cmp(&b.ttc)
            .then(a.circulating_id.cmp(&b.circulating_id))
    });
    decide_signal(&assessments, params)
}

/// Signal and zone status for one approaching agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentSignal {
    pub leg_id: u32,
    pub distance_to_yield: f64,
    pub signal: SignalState,
    pub assessment: Option<ConflictAssessment>,
    pub in_dilemma_zone: bool,
}

impl AgentSignal {
    /// Whether this frame counts as a dilemma-event frame.
    pub fn is_event(&self, include_red: bool) -> bool {
        let warned = match self.signal {
            SignalState::Green => false,
            SignalState::Yellow => true,
            SignalState::Red => include_red,
        };
        warned && self.in_dilemma_zone
    }
}

/// Signal for `agent` if it is approaching a leg, `None` otherwise.
pub fn assess_agent(
    agent: &SceneAgent,
    scene: &[SceneAgent],
    map: &RoundaboutMap,
    params: &SignalParams,
) -> Option<AgentSignal> {
    let Placement::Approaching {
        leg_id,
        distance_to_yield,
    } = locate(&agent.state, map)
    else {
        return None;
    };
    let leg = map.leg(leg_id)?;
    let (signal, assessment) = compute_signal(agent.id, &agent.state, leg, scene, map, params);
    let dz = params.dz.with_vehicle_length(agent.state.length);
    Some(AgentSignal {
        leg_id,
        distance_to_yield,
        signal,
        assessment,
        in_dilemma_zone: in_dilemma_zone(distance_to_yield, agent.state.speed(), &dz),
    })
}

/// A maximal run of dilemma frames for one agent (frames inclusive).
#[derive(Debug, Clone, PartialEq)]
pub struct DzEvent {
    pub agent_id: AgentId,
    pub start_frame: i64,
    pub end_frame: i64,
    pub t_start: f64,
    pub t_end: f64,
    /// Circulating vehicle responsible for the first frame of the event.
    pub cause_id: Option<AgentId>,
}

impl DzEvent {
    pub fn contains_frame(&self, frame: i64) -> bool {
        self.start_frame <= frame && frame <= self.end_frame
    }
}

/// Common sampling step of a trajectory set, or a schema error if they differ.
pub fn common_dt(trajectories: &[Trajectory]) -> Result<Option<f64>> {
    let Some(first) = trajectories.first() else {
        return Ok(None);
    };
    for t in trajectories {
        if (t.dt - first.dt).abs() > 1e-12 {
            return Err(Error::Schema(format!(
                "agent {} has dt {} but agent {} has dt {}",
                t.agent_id, t.dt, first.agent_id, first.dt
            )));
        }
    }
    Ok(Some(first.dt))
}

/// All agents present at each frame, sorted by id within a frame.
pub fn scenes_by_frame(trajectories: &[Trajectory]) -> BTreeMap<i64, Vec<SceneAgent>> {
    let mut frames: BTreeMap<i64, Vec<SceneAgent>> = BTreeMap::new();
    for traj in trajectories {
        for ts in &traj.states {
            frames
                .entry(frame_index(ts.time, traj.dt))
                .or_default()
                .push(SceneAgent {
                    id: traj.agent_id,
                    state: ts.state,
                });
        }
    }
    for scene in frames.values_mut() {
        scene.sort_by_key(|a| a.id);
    }
    frames
}

/// Label every maximal run of frames in which an approaching agent is warned
/// (yellow, or red when enabled) while inside its dilemma zone.
pub fn label_dz_events(
    trajectories: &[Trajectory],
    map: &RoundaboutMap,
    params: &SignalParams,
) -> Result<Vec<DzEvent>> {
    let Some(dt) = common_dt(trajectories)? else {
        return Ok(Vec::new());
    };
    let frames = scenes_by_frame(trajectories);
    let mut events: Vec<DzEvent> = trajectories
        .par_iter()
        .flat_map_iter(|traj| {
            let mut out = Vec::new();
            let mut open: Option<DzEvent> = None;
            for ts in &traj.states {
                let frame = frame_index(ts.time, dt);
                let me = SceneAgent {
                    id: traj.agent_id,
                    state: ts.state,
                };
                let flagged = assess_agent(&me, &frames[&frame], map, params)
                    .filter(|s| s.is_event(params.include_red));
                match (flagged, open.as_mut()) {
                    (Some(_), Some(ev)) => {
                        ev.end_frame = frame;
                        ev.t_end = ts.time;
                    }
                    (Some(s), None) => {
                        open = Some(DzEvent {
                            agent_id: traj.agent_id,
                            start_frame: frame,
                            end_frame: frame,
                            t_start: ts.time,
                            t_end: ts.time,
                            cause_id: s.assessment.map(|a| a.circulating_id),
                        });
                    }
                    (None, _) => out.extend(open.take()),
                }
            }
            out.extend(open);
            out
        })
        .collect();
    events.sort_by_key(|e| (e.agent_id, e.start_frame));
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Circulation, Vec2};

    fn assessment(ttc: f64, tts: f64, soc: f64, id: AgentId) -> ConflictAssessment {
        ConflictAssessment {
            ttc,
            tts,
            soc,
            circulating_id: id,
        }
    }

    fn ring_map() -> RoundaboutMap {
        let leg = ApproachLeg::new(
            0,
            vec![Vec2::new(60.0, 0.0), Vec2::new(16.0, 0.0), Vec2::new(12.5, 0.0)],
            Vec2::new(16.0, 0.0),
            Vec2::new(12.5, 0.0),
        )
        .unwrap();
        RoundaboutMap::new(Vec2::ZERO, 10.0, 15.0, 5.0, Circulation::CounterClockwise, vec![leg])
            .unwrap()
    }

    #[test]
    fn time_to_stop_examples() {
        let dz = DzParams::default();
        let at = |v: f64| AgentState::moving(Vec2::ZERO, Vec2::new(v, 0.0), 4.5, 1.8);
        assert_eq!(time_to_stop(&at(0.0), &dz), 1.0);
        assert!((time_to_stop(&at(10.0), &dz) - 4.278_688_524_590_164).abs() < 1e-12);
        assert!((time_to_stop(&at(6.1), &dz) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn separation_examples() {
        let at = |x: f64, y: f64| AgentState::moving(Vec2::new(x, y), Vec2::ZERO, 4.5, 1.8);
        assert_eq!(separation(&at(1.0, 1.0), &at(1.0, 1.0)), 0.0);
        assert_eq!(separation(&at(0.0, 0.0), &at(3.0, 4.0)), 5.0);
        assert_eq!(separation(&at(-1.0, 0.0), &at(1.0, 0.0)), 2.0);
    }

    #[test]
    fn time_to_collision_examples() {
        let map = ring_map();
        let leg = &map.legs[0];
        // Conflict point at angle 0; a vehicle at angle -pi/2 on radius 12
        // travelling counter-clockwise is a quarter turn away.
        let r = 12.0;
        let quarter = r * std::f64::consts::FRAC_PI_2;
        let v = quarter / 2.0;
        let s = AgentState::moving(Vec2::new(0.0, -r), Vec2::new(v, 0.0), 4.5, 1.8);
        assert!((time_to_collision(&s, leg, &map).unwrap() - 2.0).abs() < 1e-12);
        let at_conflict = AgentState::moving(Vec2::new(12.5, 0.0), Vec2::new(0.0, 8.0), 4.5, 1.8);
        assert_eq!(time_to_collision(&at_conflict, leg, &map).unwrap(), 0.0);
        let crawling = AgentState::moving(Vec2::new(0.0, -r), Vec2::new(0.05, 0.0), 4.5, 1.8);
        assert_eq!(time_to_collision(&crawling, leg, &map).unwrap(), f64::INFINITY);
        let outside = AgentState::moving(Vec2::new(0.0, -30.0), Vec2::new(5.0, 0.0), 4.5, 1.8);
        assert_eq!(time_to_collision(&outside, leg, &map).unwrap_err().class(), "not-circulating");
    }

    #[test]
    fn decision_examples() {
        let p = SignalParams::default();
        assert_eq!(decide_signal(&[], &p), (SignalState::Green, None));
        let red = assessment(1.2, 4.28, 8.0, 7);
        assert_eq!(decide_signal(&[red], &p), (SignalState::Red, Some(red)));
        let yellow = assessment(1.4, 1.0, 9.0, 3);
        assert_eq!(decide_signal(&[yellow], &p), (SignalState::Yellow, Some(yellow)));
        let tie = assessment(1.0, 1.0, 9.0, 3);
        assert_eq!(decide_signal(&[tie], &p).0, SignalState::Red);
    }

    #[test]
    fn red_later_in_order_overrides_yellow() {
        let p = SignalParams::default();
        let first = assessment(0.5, 0.4, 9.0, 1);
        let second = assessment(1.0, 1.2, 9.0, 2);
        assert_eq!(decide_signal(&[first, second], &p), (SignalState::Red, Some(second)));
    }

    #[test]
    fn gates_are_strict() {
        let p = SignalParams::default();
        let at_tmax = assessment(1.5, 4.0, 5.0, 1);
        let at_dt = assessment(1.0, 4.0, 10.0, 1);
        assert_eq!(decide_signal(&[at_tmax], &p).0, SignalState::Green);
        assert_eq!(decide_signal(&[at_dt], &p).0, SignalState::Green);
    }

    #[test]
    fn empty_input_has_no_events() {
        assert!(label_dz_events(&[], &ring_map(), &SignalParams::default())
            .unwrap()
            .is_empty());
    }
}
