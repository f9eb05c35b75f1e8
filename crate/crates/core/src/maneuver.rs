//! Counterfactual ego maneuvers in recorded dilemma scenes.
//!
//! A case is one frame at which an approaching vehicle is in a dilemma event.
//! The ego replays that moment under a fixed acceleration while every other
//! agent is re-predicted each frame; the case is collision-free when the ego
//! never overlaps anyone within the horizon. Cases are bucketed by the
//! forecaster's pass probability for the ego.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecaster::{build_scene_graph, forecast, GnnParams};
use crate::geometry::{
    locate, wrap_angle, AgentId, AgentState, Placement, RoundaboutMap, SceneAgent,
    Trajectory, Vec2,
};
use crate::predictor::{agent_path, PredictionContext, Predictor};
use crate::signal::{common_dt, scenes_by_frame, DzEvent, SignalParams};
use crate::sim::collision_check;

/// Largest acceleration magnitude the ego may apply.
pub const MAX_MANEUVER_ACCEL: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ManeuverConfig {
    /// Signed ego accelerations, m/s².
    pub actions: Vec<f64>,
    pub cases_per_bucket: usize,
    /// Seconds simulated per case.
    pub horizon: f64,
    /// Collision checking step, seconds.
    pub substep: f64,
    pub seed: u64,
}

impl Default for ManeuverConfig {
    fn default() -> Self {
        Self {
            actions: vec![-4.0, -2.0, 2.0, 4.0],
            cases_per_bucket: 100,
            horizon: 2.0,
            substep: 0.1,
            seed: 5,
        }
    }
}

impl ManeuverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.actions.is_empty() || self.actions.iter().any(|a| !a.is_finite()) {
            return Err(Error::Config("maneuver actions must be finite and non-empty".into()));
        }
        if self.cases_per_bucket == 0 || !(self.horizon > 0.0) || !(self.substep > 0.0) {
            return Err(Error::Config(
                "maneuver cases_per_bucket, horizon and substep must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PassBucket {
    /// Forecast pass probability above one half.
    Pass,
    Stop,
}

impl PassBucket {
    pub fn of(p_pass: f64) -> Self {
        if p_pass > 0.5 {
            PassBucket::Pass
        } else {
            PassBucket::Stop
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManeuverCase {
    pub ego_id: AgentId,
    pub frame: i64,
    pub p_pass: f64,
}

impl ManeuverCase {
    pub fn bucket(&self) -> PassBucket {
        PassBucket::of(self.p_pass)
    }
}

/// Every approaching event frame with the ego's forecast pass probability,
/// then `cases_per_bucket` of each bucket drawn with the configured seed.
pub fn sample_cases(
    trajectories: &[Trajectory],
    events: &[DzEvent],
    map: &RoundaboutMap,
    signal: &SignalParams,
    forecaster: &GnnParams,
    config: &ManeuverConfig,
) -> Result<Vec<ManeuverCase>> {
    config.validate()?;
    let frames = scenes_by_frame(trajectories);
    let mut candidates: Vec<(AgentId, i64)> = events
        .iter()
        .flat_map(|e| (e.start_frame..=e.end_frame).map(move |f| (e.agent_id, f)))
        .collect();
    candidates.sort_unstable();
    candidates.dedup();
    let scored: Vec<ManeuverCase> = candidates
        .par_iter()
        .filter_map(|&(ego_id, frame)| {
            let scene = frames.get(&frame)?;
            let me = scene.iter().find(|a| a.id == ego_id)?;
            if !matches!(locate(&me.state, map), Placement::Approaching { .. }) {
                return None;
            }
            let graph = build_scene_graph(scene, map, signal);
            let probs = forecast(&graph, forecaster);
            let p_pass = probs.iter().find(|p| p.agent_id == ego_id)?.p_pass;
            Some(ManeuverCase {
                ego_id,
                frame,
                p_pass,
            })
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::new();
    for bucket in [PassBucket::Pass, PassBucket::Stop] {
        let mut pool: Vec<ManeuverCase> = scored.iter().filter(|c| c.bucket() == bucket).copied().collect();
        if pool.len() < config.cases_per_bucket {
            return Err(Error::SampleShortfall {
                need: config.cases_per_bucket,
                found: pool.len(),
            });
        }
        pool.shuffle(&mut rng);
        pool.truncate(config.cases_per_bucket);
        pool.sort_by_key(|c| (c.frame, c.ego_id));
        out.extend(pool);
    }
    Ok(out)
}

/// Ego travel and speed after `t` seconds at constant `accel`, never
/// reversing.
fn ego_motion(v0: f64, accel: f64, t: f64) -> (f64, f64) {
    if accel < 0.0 {
        let t_stop = v0 / -accel;
        if t >= t_stop {
            return (v0 * t_stop + 0.5 * accel * t_stop * t_stop, 0.0);
        }
    }
    (v0 * t + 0.5 * accel * t * t, v0 + accel * t)
}

/// Recorded history of every agent present at `frame`, padded at the front
/// by repeating the oldest state when the agent is younger than the window.
fn histories(
    by_id: &BTreeMap<AgentId, &Trajectory>,
    scene: &[SceneAgent],
    frame: i64,
    len: usize,
) -> BTreeMap<AgentId, Vec<AgentState>> {
    scene
        .iter()
        .filter_map(|a| {
            let traj = by_id.get(&a.id)?;
            let mut h: Vec<AgentState> = (frame + 1 - len as i64..=frame)
                .filter_map(|f| traj.at_frame(f).map(|s| s.state))
                .collect();
            let oldest = *h.first()?;
            while h.len() < len {
                h.insert(0, oldest);
            }
            Some((a.id, h))
        })
        .collect()
}

fn state_from_motion(from: Vec2, to: Vec2, dt: f64, template: &AgentState) -> AgentState {
    let velocity = (to - from) * (1.0 / dt);
    let heading = if velocity.norm() > 1e-9 {
        wrap_angle(velocity.angle())
    } else {
        template.heading
    };
    AgentState {
        position: to,
        velocity,
        acceleration: Vec2::ZERO,
        heading,
        ..*template
    }
}

/// Replay one case under `action`. Returns true when the ego touches no
/// other agent within the horizon.
pub fn run_case(
    case: &ManeuverCase,
    action: f64,
    trajectories: &[Trajectory],
    map: &RoundaboutMap,
    predictor: &Predictor,
    signal: &SignalParams,
    config: &ManeuverConfig,
) -> Result<bool> {
    let accel = action.clamp(-MAX_MANEUVER_ACCEL, MAX_MANEUVER_ACCEL);
    let dt = common_dt(trajectories)?.unwrap_or(predictor.config.dt);
    let by_id: BTreeMap<AgentId, &Trajectory> = trajectories.iter().map(|t| (t.agent_id, t)).collect();
    let scene: Vec<SceneAgent> = trajectories
        .iter()
        .filter_map(|t| {
            t.at_frame(case.frame).map(|s| SceneAgent {
                id: t.agent_id,
                state: s.state,
            })
        })
        .collect();
    let ego0 = scene
        .iter()
        .find(|a| a.id == case.ego_id)
        .ok_or_else(|| Error::InvalidArgument(format!("agent {} absent at frame {}", case.ego_id, case.frame)))?
        .state;
    let leg = match locate(&ego0, map) {
        Placement::Approaching { leg_id, .. } | Placement::Entering { leg_id, .. } => map.leg(leg_id),
        _ => None,
    };
    let ego_path = agent_path(&ego0, leg, map);
    let v0 = ego0.speed();
    let ego_at = |t: f64| {
        let (s, v) = ego_motion(v0, accel, t);
        let dir = ego_path.direction_at(s);
        AgentState {
            position: ego_path.point_at(s),
            velocity: dir * v,
            acceleration: dir * if v > 0.0 { accel } else { 0.0 },
            heading: wrap_angle(dir.angle()),
            ..ego0
        }
    };

    let window = predictor.config.window_len();
    let mut hist = histories(&by_id, &scene, case.frame, window);
    hist.remove(&case.ego_id);
    let steps = (config.horizon / dt).round().max(1.0) as usize;
    let subs = (dt / config.substep).round().max(1.0) as usize;
    for step in 0..steps {
        let t0 = step as f64 * dt;
        let ego_now = ego_at(t0);
        let mut now: Vec<SceneAgent> = hist
            .iter()
            .map(|(&id, h)| SceneAgent {
                id,
                state: *h.last().unwrap(),
            })
            .collect();
        now.push(SceneAgent {
            id: case.ego_id,
            state: ego_now,
        });
        // One re-planned step per other agent: (from, to, next state).
        let mut moves: Vec<(AgentId, Vec2, Vec2, AgentState)> = Vec::with_capacity(hist.len());
        for (&id, h) in &hist {
            let me = SceneAgent {
                id,
                state: *h.last().unwrap(),
            };
            let ctx = PredictionContext::for_agent(&me, &now, map, signal);
            let pred = predictor.predict(h, &ctx, map)?;
            let from = me.state.position;
            let to = pred.positions[0];
            let after = pred.positions.get(1).copied().unwrap_or(to + (to - from));
            let mut next = state_from_motion(from, after, 2.0 * dt, &me.state);
            next.position = to;
            moves.push((id, from, to, next));
        }
        for k in 1..=subs {
            let frac = k as f64 / subs as f64;
            let ego = ego_at(t0 + frac * dt);
            for (_, from, to, next) in &moves {
                let other = AgentState {
                    position: *from + (*to - *from) * frac,
                    ..*next
                };
                if collision_check(&ego, &other) {
                    return Ok(false);
                }
            }
        }
        for (id, _, _, next) in moves {
            let h = hist.get_mut(&id).unwrap();
            h.remove(0);
            h.push(next);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManeuverCell {
    pub bucket: PassBucket,
    pub action: f64,
    pub cases: usize,
    pub collision_free: usize,
}

impl ManeuverCell {
    /// Collision-free share in percent.
    pub fn percent(&self) -> f64 {
        if self.cases == 0 {
            0.0
        } else {
            100.0 * self.collision_free as f64 / self.cases as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManeuverReport {
    /// Bucket-major, actions in configured order.
    pub cells: Vec<ManeuverCell>,
}

impl ManeuverReport {
    pub fn cell(&self, bucket: PassBucket, action: f64) -> Option<&ManeuverCell> {
        self.cells.iter().find(|c| c.bucket == bucket && c.action == action)
    }

    /// Actions whose collision-free count is at least that of every other
    /// action in the bucket (more than one on ties).
    pub fn best_actions(&self, bucket: PassBucket) -> Vec<f64> {
        let row: Vec<&ManeuverCell> = self.cells.iter().filter(|c| c.bucket == bucket).collect();
        let best = row.iter().map(|c| c.percent()).fold(f64::NEG_INFINITY, f64::max);
        row.iter().filter(|c| c.percent() == best).map(|c| c.action).collect()
    }
}

/// Run every case under every configured action.
pub fn maneuver_experiment(
    cases: &[ManeuverCase],
    trajectories: &[Trajectory],
    map: &RoundaboutMap,
    predictor: &Predictor,
    signal: &SignalParams,
    config: &ManeuverConfig,
) -> Result<ManeuverReport> {
    config.validate()?;
    if cases.is_empty() {
        return Err(Error::SampleShortfall {
            need: config.cases_per_bucket,
            found: 0,
        });
    }
    let jobs: Vec<(usize, f64)> = (0..cases.len())
        .flat_map(|i| config.actions.iter().map(move |&a| (i, a)))
        .collect();
    let outcomes: Vec<bool> = jobs
        .par_iter()
        .map(|&(i, a)| run_case(&cases[i], a, trajectories, map, predictor, signal, config))
        .collect::<Result<_>>()?;
    let mut cells = Vec::new();
    for bucket in [PassBucket::Pass, PassBucket::Stop] {
        for &action in &config.actions {
            let mut cell = ManeuverCell {
                bucket,
                action,
                cases: 0,
                collision_free: 0,
            };
            for (&(i, a), &ok) in jobs.iter().zip(&outcomes) {
                if a == action && cases[i].bucket() == bucket {
                    cell.cases += 1;
                    cell.collision_free += ok as usize;
                }
            }
            cells.push(cell);
        }
    }
    Ok(ManeuverReport { cells })
}
