//! Mode-conditioned most-likely trajectory prediction.
//!
//! A driver's near-term behaviour is summarised by one of three modes. Mode
//! probabilities come from a softmax over linear scores of a few kinematic and
//! signal features; the prediction is the deterministic kinematic rollout of
//! the highest-scoring mode along the agent's path through the roundabout.

use serde::{Deserialize, Serialize};

use crate::dilemma::DzParams;
use crate::error::{Error, Result};
use crate::geometry::{
    in_circulating_lane, locate, AgentState, ApproachLeg, Placement, RoundaboutMap, RoutePath,
    SceneAgent, Vec2,
};
use crate::signal::{assess_agent, SignalParams, SignalState};

/// Speed a yielding driver creeps at while looking for a gap, m/s.
pub const CREEP_SPEED: f64 = 2.0;

/// Distances to the yield line are clamped to this before scoring, metres.
const MAX_FEATURE_DISTANCE: f64 = 50.0;

pub const FEATURE_NAMES: [&str; 7] = ["bias", "speed", "accel", "distance", "green", "yellow", "red"];
pub const NUM_FEATURES: usize = FEATURE_NAMES.len();

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorConfig {
    /// Past steps before the current one.
    pub history_steps: usize,
    /// Predicted steps.
    pub horizon_steps: usize,
    pub dt: f64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            history_steps: 3,
            horizon_steps: 4,
            dt: 0.5,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.history_steps < 1 || self.horizon_steps < 1 || !(self.dt > 0.0) {
            return Err(Error::Config(
                "predictor needs history_steps >= 1, horizon_steps >= 1, dt > 0".into(),
            ));
        }
        Ok(())
    }

    /// States in a history window, including the current one.
    pub fn window_len(&self) -> usize {
        self.history_steps + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Proceed,
    Yield,
    Stop,
}

impl Mode {
    /// All modes in tie-break order.
    pub const ALL: [Mode; 3] = [Mode::Proceed, Mode::Yield, Mode::Stop];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Per-mode linear score weights over [`FEATURE_NAMES`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeWeights {
    pub weights: [[f64; NUM_FEATURES]; 3],
    /// When false the distance and signal features are zeroed before scoring.
    #[serde(default = "default_true")]
    pub use_dz_features: bool,
}

fn default_true() -> bool {
    true
}

impl Default for ModeWeights {
    /// Hand-set weights: proceed unless decelerating hard or facing a red
    /// at low speed.
    fn default() -> Self {
        Self {
            weights: [
                [0.5, 2.0, 2.0, 0.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, 0.0, -0.3, 0.0, 1.0, 0.5],
                [-1.0, -1.0, -3.0, -0.2, 0.0, 0.0, 1.5],
            ],
            use_dz_features: true,
        }
    }
}

impl ModeWeights {
    pub fn zeros() -> Self {
        Self {
            weights: [[0.0; NUM_FEATURES]; 3],
            use_dz_features: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().flatten().all(|w| w.is_finite()) {
            Ok(())
        } else {
            Err(Error::Model("predictor weights must be finite".into()))
        }
    }

    pub fn scores(&self, features: &[f64; NUM_FEATURES]) -> [f64; 3] {
        let mut f = *features;
        if !self.use_dz_features {
            f[3] = 0.0;
            f[4..].fill(0.0);
        }
        self.weights
            .map(|row| row.iter().zip(&f).map(|(w, x)| w * x).sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeDistribution {
    /// Indexed by [`Mode::index`].
    pub probabilities: [f64; 3],
    pub scores: [f64; 3],
}

impl ModeDistribution {
    pub fn from_scores(scores: [f64; 3]) -> Self {
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp = scores.map(|s| (s - max).exp());
        let total: f64 = exp.iter().sum();
        Self {
            probabilities: exp.map(|e| e / total),
            scores,
        }
    }

    pub fn probability(&self, mode: Mode) -> f64 {
        self.probabilities[mode.index()]
    }

    pub fn most_likely(&self) -> Mode {
        select_mode(&self.scores)
    }
}

/// Argmax over mode scores; ties resolve to the earliest mode in
/// [`Mode::ALL`].
pub fn select_mode(scores: &[f64; 3]) -> Mode {
    let mut best = Mode::Proceed;
    for mode in Mode::ALL {
        if scores[mode.index()] > scores[best.index()] {
            best = mode;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictedTrajectory {
    pub positions: Vec<Vec2>,
    pub dt: f64,
    pub mode: Mode,
}

/// Feature vector for the mode scores. `history` must hold at least
/// `history_steps + 1` states, oldest first; only the last two speeds enter
/// the acceleration estimate.
pub fn mode_features(
    history: &[AgentState],
    signal: SignalState,
    distance_to_yield: Option<f64>,
    config: &PredictorConfig,
) -> Result<[f64; NUM_FEATURES]> {
    let need = config.window_len();
    if history.len() < need {
        return Err(Error::InsufficientHistory {
            got: history.len(),
            need,
        });
    }
    let current = &history[history.len() - 1];
    let previous = &history[history.len() - 2];
    let speed = current.speed();
    let accel = (speed - previous.speed()) / config.dt;
    let distance = distance_to_yield
        .unwrap_or(MAX_FEATURE_DISTANCE)
        .clamp(0.0, MAX_FEATURE_DISTANCE);
    let [g, y, r] = signal.one_hot();
    Ok([1.0, speed / 10.0, accel / 3.0, distance / 10.0, g, y, r])
}

pub fn estimate_mode_distribution(
    history: &[AgentState],
    signal: SignalState,
    distance_to_yield: Option<f64>,
    weights: &ModeWeights,
    config: &PredictorConfig,
) -> Result<ModeDistribution> {
    let features = mode_features(history, signal, distance_to_yield, config)?;
    Ok(ModeDistribution::from_scores(weights.scores(&features)))
}

/// Distance travelled after `t` seconds when starting at `v0` and slowing at
/// `decel` down to `floor` speed, which is then held.
fn braking_distance(v0: f64, decel: f64, floor: f64, t: f64) -> f64 {
    if v0 <= floor {
        return v0 * t;
    }
    let t_floor = (v0 - floor) / decel;
    if t <= t_floor {
        v0 * t - 0.5 * decel * t * t
    } else {
        v0 * t_floor - 0.5 * decel * t_floor * t_floor + floor * (t - t_floor)
    }
}

/// Path an agent follows from its current position: the rest of `leg` then
/// the ring, the ring alone when circulating, or a straight line otherwise.
pub fn agent_path(current: &AgentState, leg: Option<&ApproachLeg>, map: &RoundaboutMap) -> RoutePath {
    match leg {
        Some(leg) => {
            let arc = leg.project(current.position).arc_length;
            RoutePath::along_leg(current.position, leg, arc, map)
        }
        None if in_circulating_lane(current, map) => RoutePath::ring(current.position, map),
        None => RoutePath::straight(current.position, current.direction()),
    }
}

/// Deterministic rollout of one mode over the configured horizon.
pub fn rollout_mode(
    current: &AgentState,
    mode: Mode,
    leg: Option<&ApproachLeg>,
    map: &RoundaboutMap,
    dz: &DzParams,
    config: &PredictorConfig,
) -> PredictedTrajectory {
    let v0 = current.speed();
    let off_map = leg.is_none() && !in_circulating_lane(current, map);
    let path = agent_path(current, leg, map);
    let positions = (1..=config.horizon_steps)
        .map(|k| {
            let t = k as f64 * config.dt;
            match mode {
                Mode::Proceed if off_map => current.position + current.velocity * t,
                Mode::Proceed => path.point_at(v0 * t),
                Mode::Stop => path.point_at(braking_distance(v0, dz.a_dec, 0.0, t)),
                Mode::Yield => {
                    path.point_at(braking_distance(v0, 0.5 * dz.a_dec, CREEP_SPEED, t))
                }
            }
        })
        .collect();
    PredictedTrajectory {
        positions,
        dt: config.dt,
        mode,
    }
}

/// What the predictor needs to know about an agent's surroundings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionContext {
    pub signal: SignalState,
    pub leg_id: Option<u32>,
    pub distance_to_yield: Option<f64>,
}

impl PredictionContext {
    /// Free-flow context: no leg, green.
    pub fn free() -> Self {
        Self {
            signal: SignalState::Green,
            leg_id: None,
            distance_to_yield: None,
        }
    }

    /// Derive the context of `agent` from a scene snapshot.
    pub fn for_agent(
        agent: &SceneAgent,
        scene: &[SceneAgent],
        map: &RoundaboutMap,
        params: &SignalParams,
    ) -> Self {
        match locate(&agent.state, map) {
            Placement::Approaching { .. } => match assess_agent(agent, scene, map, params) {
                Some(s) => Self {
                    signal: s.signal,
                    leg_id: Some(s.leg_id),
                    distance_to_yield: Some(s.distance_to_yield),
                },
                None => Self::free(),
            },
            Placement::Entering {
                leg_id,
                distance_to_yield,
            } => Self {
                signal: SignalState::Green,
                leg_id: Some(leg_id),
                distance_to_yield: Some(distance_to_yield),
            },
            Placement::Circulating | Placement::Elsewhere => Self::free(),
        }
    }
}

/// Mode scoring weights plus the rollout settings they are paired with.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Predictor {
    pub config: PredictorConfig,
    pub weights: ModeWeights,
    pub dz: DzParams,
}

impl Predictor {
    pub fn distribution(
        &self,
        history: &[AgentState],
        ctx: &PredictionContext,
    ) -> Result<ModeDistribution> {
        estimate_mode_distribution(
            history,
            ctx.signal,
            ctx.distance_to_yield,
            &self.weights,
            &self.config,
        )
    }

    /// Most likely trajectory: rollout of the argmax mode.
    pub fn predict(
        &self,
        history: &[AgentState],
        ctx: &PredictionContext,
        map: &RoundaboutMap,
    ) -> Result<PredictedTrajectory> {
        let mode = self.distribution(history, ctx)?.most_likely();
        let current = history.last().expect("history checked non-empty");
        let leg = ctx.leg_id.and_then(|id| map.leg(id));
        Ok(rollout_mode(current, mode, leg, map, &self.dz, &self.config))
    }
}

/// Free-function form of [`Predictor::predict`].
pub fn predict_most_likely(
    history: &[AgentState],
    ctx: &PredictionContext,
    map: &RoundaboutMap,
    predictor: &Predictor,
) -> Result<PredictedTrajectory> {
    predictor.predict(history, ctx, map)
}

/// Average displacement error over the horizon and the per-step errors.
pub fn displacement_errors(pred: &PredictedTrajectory, truth: &[Vec2]) -> Result<(f64, Vec<f64>)> {
    let n = pred.positions.len();
    if truth.len() < n || n == 0 {
        return Err(Error::HorizonMismatch {
            predicted: n,
            truth: truth.len(),
        });
    }
    let per_step: Vec<f64> = pred
        .positions
        .iter()
        .zip(truth)
        .map(|(p, t)| p.distance(*t))
        .collect();
    let ade = per_step.iter().sum::<f64>() / n as f64;
    Ok((ade, per_step))
}
