//! Scene-graph forecasting of dilemma involvement.
//!
//! Each frame becomes a graph: one node per agent, edges between agents that
//! are close or in a live conflict. A small message-passing network maps
//! every node to three independent probabilities: that the agent is about to
//! be in a dilemma, that it is about to cause one, and that it is about to
//! pass the yield line.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    arc_distance_to_conflict, frame_index, locate, AgentId, Placement, RoundaboutMap, SceneAgent,
    Trajectory,
};
use crate::mlp::{bce_with_logit, sigmoid};
use crate::signal::{
    assess_agent, common_dt, scenes_by_frame, separation, time_to_collision, DzEvent,
    SignalParams, SignalState,
};

pub const NODE_FEATURES: usize = 7;
pub const HEADS: usize = 3;
pub const HEAD_NAMES: [&str; HEADS] = ["p_dilemma", "p_causal", "p_pass"];

/// Distances are clamped to this many metres before scaling.
const MAX_FEATURE_DISTANCE: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    pub agent_id: AgentId,
    /// `[speed, longitudinal acceleration, distance to yield or conflict,
    /// circulating flag, green, yellow, red]` in SI units.
    pub features: [f64; NODE_FEATURES],
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphEdge {
    /// Node indices with `a < b`.
    pub a: usize,
    pub b: usize,
    /// Centre-to-centre separation, metres.
    pub separation: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneGraph {
    /// Sorted by agent id.
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

impl SceneGraph {
    /// `(neighbour, separation)` lists per node.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.a].push((e.b, e.separation));
            adj[e.b].push((e.a, e.separation));
        }
        adj
    }
}

/// Graph of one scene. Approaching agents carry their virtual signal; all
/// other agents are marked green.
pub fn build_scene_graph(scene: &[SceneAgent], map: &RoundaboutMap, signal: &SignalParams) -> SceneGraph {
    let mut agents: Vec<&SceneAgent> = scene.iter().collect();
    agents.sort_by_key(|a| a.id);
    let placements: Vec<Placement> = agents.iter().map(|a| locate(&a.state, map)).collect();
    let owned: Vec<SceneAgent> = agents.iter().map(|a| **a).collect();
    let nodes = agents
        .iter()
        .zip(&placements)
        .map(|(agent, placement)| {
            let s = &agent.state;
            let (distance, circulating) = match *placement {
                Placement::Approaching {
                    distance_to_yield, ..
                }
                | Placement::Entering {
                    distance_to_yield, ..
                } => (distance_to_yield.max(0.0), 0.0),
                Placement::Circulating => {
                    let nearest = map
                        .legs
                        .iter()
                        .filter_map(|leg| arc_distance_to_conflict(s, leg, map).ok())
                        .fold(MAX_FEATURE_DISTANCE, f64::min);
                    (nearest, 1.0)
                }
                Placement::Elsewhere => (MAX_FEATURE_DISTANCE, 0.0),
            };
            let light = match placement {
                Placement::Approaching { .. } => assess_agent(agent, &owned, map, signal)
                    .map_or(SignalState::Green, |a| a.signal),
                _ => SignalState::Green,
            };
            let [g, y, r] = light.one_hot();
            GraphNode {
                agent_id: agent.id,
                features: [
                    s.speed(),
                    s.longitudinal_acceleration(),
                    distance.min(MAX_FEATURE_DISTANCE),
                    circulating,
                    g,
                    y,
                    r,
                ],
            }
        })
        .collect();
    let mut edges = Vec::new();
    for i in 0..agents.len() {
        for j in i + 1..agents.len() {
            let sep = separation(&agents[i].state, &agents[j].state);
            let conflict = |app: usize, circ: usize| match (placements[app], placements[circ]) {
                (Placement::Approaching { leg_id, .. }, Placement::Circulating) => map
                    .leg(leg_id)
                    .and_then(|leg| time_to_collision(&agents[circ].state, leg, map).ok())
                    .is_some_and(|ttc| ttc < signal.t_max),
                _ => false,
            };
            if sep < signal.d_t || conflict(i, j) || conflict(j, i) {
                edges.push(GraphEdge {
                    a: i,
                    b: j,
                    separation: sep,
                });
            }
        }
    }
    SceneGraph { nodes, edges }
}

/// Fixed input scaling applied inside the network.
fn scaled_features(f: &[f64; NODE_FEATURES]) -> Vec<f64> {
    vec![f[0] / 10.0, f[1] / 3.0, f[2] / 10.0, f[3], f[4], f[5], f[6]]
}

fn scaled_separation(sep: f64) -> f64 {
    sep / 10.0
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    fn uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let r = 1.0 / (cols as f64).sqrt();
        Self {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.random_range(-r..=r)).collect(),
        }
    }

    fn mul(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(x).map(|(w, v)| w * v).sum())
            .collect()
    }

    fn mul_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (row, g) in self.data.chunks_exact(self.cols).zip(y) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * g;
            }
        }
        out
    }

    fn add_outer(&mut self, y: &[f64], x: &[f64]) {
        for (row, g) in self.data.chunks_exact_mut(self.cols).zip(y) {
            for (w, v) in row.iter_mut().zip(x) {
                *w += g * v;
            }
        }
    }
}

/// One message-passing round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GnnRound {
    /// Message from `[neighbour state, scaled separation]`.
    pub message: Matrix,
    pub message_bias: Vec<f64>,
    /// Update from `[own state, mean message]`.
    pub update: Matrix,
    pub update_bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GnnParams {
    pub hidden: usize,
    pub rounds: Vec<GnnRound>,
    /// One row per head.
    pub readout: Matrix,
    pub readout_bias: Vec<f64>,
}

impl GnnParams {
    fn shapes(hidden: usize, rounds: usize) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        for r in 0..rounds {
            let input = if r == 0 { NODE_FEATURES } else { hidden };
            v.extend([(hidden, input + 1), (hidden, 1), (hidden, input + hidden), (hidden, 1)]);
        }
        v.extend([(HEADS, hidden), (HEADS, 1)]);
        v
    }

    pub fn zeros(hidden: usize, rounds: usize) -> Self {
        Self::from_flat(hidden, rounds, &vec![0.0; Self::param_count(hidden, rounds)])
    }

    pub fn param_count(hidden: usize, rounds: usize) -> usize {
        Self::shapes(hidden, rounds).iter().map(|(r, c)| r * c).sum()
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init(hidden: usize, rounds: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(hidden, rounds);
        for (r, round) in p.rounds.iter_mut().enumerate() {
            let input = if r == 0 { NODE_FEATURES } else { hidden };
            round.message = Matrix::uniform(hidden, input + 1, rng);
            round.update = Matrix::uniform(hidden, input + hidden, rng);
        }
        p.readout = Matrix::uniform(HEADS, hidden, rng);
        p
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.rounds.is_empty() {
            return Err(Error::Model("forecaster needs hidden > 0 and at least one round".into()));
        }
        let expected = Self::shapes(self.hidden, self.rounds.len());
        let mut actual = Vec::new();
        for round in &self.rounds {
            actual.extend([
                (round.message.rows, round.message.cols),
                (round.message_bias.len(), 1),
                (round.update.rows, round.update.cols),
                (round.update_bias.len(), 1),
            ]);
        }
        actual.extend([(self.readout.rows, self.readout.cols), (self.readout_bias.len(), 1)]);
        let sized = self
            .rounds
            .iter()
            .all(|r| r.message.data.len() == r.message.rows * r.message.cols && r.update.data.len() == r.update.rows * r.update.cols)
            && self.readout.data.len() == self.readout.rows * self.readout.cols;
        if actual != expected || !sized {
            return Err(Error::Model("forecaster layer shapes do not match hidden size".into()));
        }
        if self.to_flat().iter().any(|v| !v.is_finite()) {
            return Err(Error::Model("forecaster weights must be finite".into()));
        }
        Ok(())
    }

    /// Round by round: message, message bias, update, update bias; then
    /// readout and readout bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for r in &self.rounds {
            v.extend(&r.message.data);
            v.extend(&r.message_bias);
            v.extend(&r.update.data);
            v.extend(&r.update_bias);
        }
        v.extend(&self.readout.data);
        v.extend(&self.readout_bias);
        v
    }

    pub fn from_flat(hidden: usize, rounds: usize, flat: &[f64]) -> Self {
        assert_eq!(flat.len(), Self::param_count(hidden, rounds));
        let mut rest = flat;
        let mut take = |rows: usize, cols: usize| {
            let (head, tail) = rest.split_at(rows * cols);
            rest = tail;
            Matrix {
                rows,
                cols,
                data: head.to_vec(),
            }
        };
        let mut out_rounds = Vec::with_capacity(rounds);
        for r in 0..rounds {
            let input = if r == 0 { NODE_FEATURES } else { hidden };
            let message = take(hidden, input + 1);
            let message_bias = take(hidden, 1).data;
            let update = take(hidden, input + hidden);
            let update_bias = take(hidden, 1).data;
            out_rounds.push(GnnRound {
                message,
                message_bias,
                update,
                update_bias,
            });
        }
        let readout = take(HEADS, hidden);
        let readout_bias = take(HEADS, 1).data;
        Self {
            hidden,
            rounds: out_rounds,
            readout,
            readout_bias,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeProbabilities {
    pub agent_id: AgentId,
    pub p_dilemma: f64,
    pub p_causal: f64,
    pub p_pass: f64,
}

/// Intermediate values of one forward pass, kept for backpropagation.
struct Trace {
    adjacency: Vec<Vec<(usize, f64)>>,
    /// States entering each round, then the final states.
    states: Vec<Vec<Vec<f64>>>,
    /// Mean message per round and node.
    messages: Vec<Vec<Vec<f64>>>,
    logits: Vec<[f64; HEADS]>,
}

fn forward_trace(graph: &SceneGraph, params: &GnnParams) -> Trace {
    let adjacency = graph.adjacency();
    let mut h: Vec<Vec<f64>> = graph.nodes.iter().map(|n| scaled_features(&n.features)).collect();
    let mut states = vec![h.clone()];
    let mut messages = Vec::with_capacity(params.rounds.len());
    for round in &params.rounds {
        let m: Vec<Vec<f64>> = adjacency
            .iter()
            .map(|nbrs| {
                let mut acc = vec![0.0; params.hidden];
                if nbrs.is_empty() {
                    return acc;
                }
                for &(u, sep) in nbrs {
                    let mut input = h[u].clone();
                    input.push(scaled_separation(sep));
                    let msg = round.message.mul(&input);
                    for ((a, x), b) in acc.iter_mut().zip(msg).zip(&round.message_bias) {
                        *a += x + b;
                    }
                }
                let k = nbrs.len() as f64;
                acc.iter_mut().for_each(|a| *a /= k);
                acc
            })
            .collect();
        h = h
            .iter()
            .zip(&m)
            .map(|(hv, mv)| {
                let input: Vec<f64> = hv.iter().chain(mv).copied().collect();
                round
                    .update
                    .mul(&input)
                    .iter()
                    .zip(&round.update_bias)
                    .map(|(x, b)| (x + b).tanh())
                    .collect()
            })
            .collect();
        messages.push(m);
        states.push(h.clone());
    }
    let logits = h
        .iter()
        .map(|hv| {
            let z = params.readout.mul(hv);
            std::array::from_fn(|k| z[k] + params.readout_bias[k])
        })
        .collect();
    Trace {
        adjacency,
        states,
        messages,
        logits,
    }
}

pub fn forecast(graph: &SceneGraph, params: &GnnParams) -> Vec<NodeProbabilities> {
    let trace = forward_trace(graph, params);
    graph
        .nodes
        .iter()
        .zip(&trace.logits)
        .map(|(node, z)| NodeProbabilities {
            agent_id: node.agent_id,
            p_dilemma: sigmoid(z[0]),
            p_causal: sigmoid(z[1]),
            p_pass: sigmoid(z[2]),
        })
        .collect()
}

/// A scene graph with per-node targets in head order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScene {
    pub frame: i64,
    pub graph: SceneGraph,
    pub labels: Vec<[bool; HEADS]>,
}

/// Loss weights per head for negative and positive targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadWeights {
    pub negative: [f64; HEADS],
    pub positive: [f64; HEADS],
}

impl Default for HeadWeights {
    fn default() -> Self {
        Self {
            negative: [1.0; HEADS],
            positive: [1.0; HEADS],
        }
    }
}

impl HeadWeights {
    /// Weights that give both classes of every head equal total mass while
    /// keeping the mean node weight at one.
    pub fn balanced(scenes: &[LabeledScene]) -> Self {
        let (pos, n) = head_counts(scenes);
        let n = n as f64;
        Self {
            negative: std::array::from_fn(|k| n / (2.0 * (n - pos[k] as f64)).max(1.0)),
            positive: std::array::from_fn(|k| n / (2.0 * pos[k] as f64).max(1.0)),
        }
    }

    fn of(&self, k: usize, label: bool) -> f64 {
        if label {
            self.positive[k]
        } else {
            self.negative[k]
        }
    }
}

fn total_nodes(scenes: &[LabeledScene]) -> usize {
    scenes.iter().map(|s| s.graph.nodes.len()).sum()
}

/// Weighted cross-entropy summed over heads and averaged over nodes, and its
/// gradient in [`GnnParams::to_flat`] order.
pub fn loss_and_gradient(
    params: &GnnParams,
    scenes: &[LabeledScene],
    weights: &HeadWeights,
) -> (f64, Vec<f64>) {
    let n = total_nodes(scenes).max(1) as f64;
    let mut grad = GnnParams::zeros(params.hidden, params.rounds.len());
    let mut loss = 0.0;
    for scene in scenes {
        let trace = forward_trace(&scene.graph, params);
        let nodes = scene.graph.nodes.len();
        let last = trace.states.last().unwrap();
        let mut dh: Vec<Vec<f64>> = vec![vec![0.0; params.hidden]; nodes];
        for v in 0..nodes {
            let mut dz = [0.0; HEADS];
            for k in 0..HEADS {
                let y = if scene.labels[v][k] { 1.0 } else { 0.0 };
                let w = weights.of(k, scene.labels[v][k]);
                let z = trace.logits[v][k];
                loss += w * bce_with_logit(z, y) / n;
                dz[k] = w * (sigmoid(z) - y) / n;
                grad.readout_bias[k] += dz[k];
            }
            grad.readout.add_outer(&dz, &last[v]);
            dh[v] = params.readout.mul_transpose(&dz);
        }
        for (r, round) in params.rounds.iter().enumerate().rev() {
            let h_in = &trace.states[r];
            let h_out = &trace.states[r + 1];
            let m = &trace.messages[r];
            let input_dim = h_in.first().map_or(0, Vec::len);
            let mut dh_in = vec![vec![0.0; input_dim]; nodes];
            let g = &mut grad.rounds[r];
            for v in 0..nodes {
                let dpre: Vec<f64> = dh[v]
                    .iter()
                    .zip(&h_out[v])
                    .map(|(d, h)| d * (1.0 - h * h))
                    .collect();
                let input: Vec<f64> = h_in[v].iter().chain(&m[v]).copied().collect();
                g.update.add_outer(&dpre, &input);
                for (b, d) in g.update_bias.iter_mut().zip(&dpre) {
                    *b += d;
                }
                let dinput = round.update.mul_transpose(&dpre);
                for (a, d) in dh_in[v].iter_mut().zip(&dinput[..input_dim]) {
                    *a += d;
                }
                let nbrs = &trace.adjacency[v];
                if nbrs.is_empty() {
                    continue;
                }
                let k = nbrs.len() as f64;
                let dmsg: Vec<f64> = dinput[input_dim..].iter().map(|d| d / k).collect();
                for &(u, sep) in nbrs {
                    let mut msg_in = h_in[u].clone();
                    msg_in.push(scaled_separation(sep));
                    g.message.add_outer(&dmsg, &msg_in);
                    for (b, d) in g.message_bias.iter_mut().zip(&dmsg) {
                        *b += d;
                    }
                    let dm_in = round.message.mul_transpose(&dmsg);
                    for (a, d) in dh_in[u].iter_mut().zip(&dm_in[..input_dim]) {
                        *a += d;
                    }
                }
            }
            dh = dh_in;
        }
    }
    (loss, grad.to_flat())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecasterConfig {
    pub hidden: usize,
    pub rounds: usize,
    pub epochs: usize,
    /// Scenes per gradient step.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Use every n-th frame when building training scenes.
    pub frame_stride: usize,
    /// Weight positives by the negative/positive ratio of each head.
    pub balance_heads: bool,
    /// Frames ahead a label looks for an event or a crossing.
    pub horizon_steps: usize,
    /// Loss mixing weights kept for configuration compatibility. Training
    /// does not read them.
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for ForecasterConfig {
    fn default() -> Self {
        Self {
            hidden: 8,
            rounds: 2,
            epochs: 20,
            batch_size: 64,
            learning_rate: 0.1,
            seed: 11,
            frame_stride: 2,
            balance_heads: true,
            horizon_steps: 4,
            alpha: 0.5,
            gamma: 0.2,
        }
    }
}

impl ForecasterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.rounds == 0 || self.epochs == 0 || self.batch_size == 0
            || self.frame_stride == 0
            || self.horizon_steps == 0
        {
            return Err(Error::Config(
                "forecaster hidden, rounds, epochs, batch_size, frame_stride and horizon_steps must be positive".into(),
            ));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::Config("forecaster learning rate must be non-negative".into()));
        }
        Ok(())
    }
}

/// Per-head positive counts over all nodes.
pub fn head_counts(scenes: &[LabeledScene]) -> ([usize; HEADS], usize) {
    let mut pos = [0; HEADS];
    for s in scenes {
        for l in &s.labels {
            for k in 0..HEADS {
                pos[k] += l[k] as usize;
            }
        }
    }
    (pos, total_nodes(scenes))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedForecaster {
    pub params: GnnParams,
    pub weights: HeadWeights,
    /// Full-data loss after each epoch.
    pub loss_trace: Vec<f64>,
}

pub fn train_forecaster(scenes: &[LabeledScene], config: &ForecasterConfig) -> Result<TrainedForecaster> {
    config.validate()?;
    let (pos, n) = head_counts(scenes);
    if let Some(k) = (0..HEADS).find(|&k| pos[k] == 0 || pos[k] == n) {
        return Err(Error::DegenerateLabels(format!(
            "{} has {} positive of {n} nodes",
            HEAD_NAMES[k], pos[k]
        )));
    }
    let weights = if config.balance_heads {
        HeadWeights::balanced(scenes)
    } else {
        HeadWeights::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = GnnParams::init(config.hidden, config.rounds, &mut rng);
    let mut order: Vec<usize> = (0..scenes.len()).collect();
    let mut loss_trace = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<LabeledScene> = chunk.iter().map(|&i| scenes[i].clone()).collect();
            let (_, grad) = loss_and_gradient(&params, &batch, &weights);
            let mut flat = params.to_flat();
            for (p, g) in flat.iter_mut().zip(&grad) {
                *p -= config.learning_rate * g;
            }
            params = GnnParams::from_flat(config.hidden, config.rounds, &flat);
        }
        loss_trace.push(mean_loss(&params, scenes, &weights));
    }
    Ok(TrainedForecaster {
        params,
        weights,
        loss_trace,
    })
}

/// Weighted loss over all scenes. Scenes are evaluated in parallel and
/// summed in order, so the result does not depend on scheduling.
pub fn mean_loss(params: &GnnParams, scenes: &[LabeledScene], weights: &HeadWeights) -> f64 {
    let n = total_nodes(scenes).max(1) as f64;
    scenes
        .par_iter()
        .map(|scene| {
            let trace = forward_trace(&scene.graph, params);
            trace
                .logits
                .iter()
                .zip(&scene.labels)
                .map(|(z, l)| {
                    (0..HEADS)
                        .map(|k| weights.of(k, l[k]) * bce_with_logit(z[k], if l[k] { 1.0 } else { 0.0 }) / n)
                        .sum::<f64>()
                })
                .sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

/// Build one labelled scene per `stride`-th frame.
///
/// Targets, looking `horizon` frames ahead of the scene frame:
/// dilemma - one of the agent's events covers a later frame in the window;
/// causal - the agent is the recorded cause of such an event;
/// pass - the agent is approaching now and leaves the approach within the
/// window, its last approaching frame not under a red signal.
pub fn label_scenes(
    trajectories: &[Trajectory],
    events: &[DzEvent],
    map: &RoundaboutMap,
    signal: &SignalParams,
    horizon: usize,
    stride: usize,
) -> Result<Vec<LabeledScene>> {
    let Some(dt) = common_dt(trajectories)? else {
        return Ok(Vec::new());
    };
    let frames = scenes_by_frame(trajectories);
    let horizon = horizon as i64;
    let mut dilemma: BTreeMap<AgentId, Vec<(i64, i64)>> = BTreeMap::new();
    let mut causal: BTreeMap<AgentId, Vec<(i64, i64)>> = BTreeMap::new();
    for e in events {
        dilemma.entry(e.agent_id).or_default().push((e.start_frame, e.end_frame));
        if let Some(c) = e.cause_id {
            causal.entry(c).or_default().push((e.start_frame, e.end_frame));
        }
    }
    let overlaps = |spans: Option<&Vec<(i64, i64)>>, f: i64| {
        spans.is_some_and(|s| s.iter().any(|&(a, b)| a <= f + horizon && b > f))
    };
    // Frame at which each agent stops approaching, if it is not under red.
    let mut pass_frame: BTreeMap<AgentId, Option<i64>> = BTreeMap::new();
    let mut approaching: BTreeSet<(AgentId, i64)> = BTreeSet::new();
    for traj in trajectories {
        let mut last_light = None;
        let mut crossed = None;
        for ts in &traj.states {
            let f = frame_index(ts.time, dt);
            match locate(&ts.state, map) {
                Placement::Approaching { .. } => {
                    approaching.insert((traj.agent_id, f));
                    let me = SceneAgent {
                        id: traj.agent_id,
                        state: ts.state,
                    };
                    last_light = assess_agent(&me, &frames[&f], map, signal).map(|a| a.signal);
                }
                _ if last_light.is_some() => {
                    if last_light != Some(SignalState::Red) {
                        crossed = Some(f);
                    }
                    break;
                }
                _ => {}
            }
        }
        pass_frame.insert(traj.agent_id, crossed);
    }
    let mut out: Vec<LabeledScene> = frames
        .par_iter()
        .filter(|(f, _)| f.rem_euclid(stride as i64) == 0)
        .map(|(&f, scene)| {
            let graph = build_scene_graph(scene, map, signal);
            let labels = graph
                .nodes
                .iter()
                .map(|node| {
                    let id = node.agent_id;
                    let pass = approaching.contains(&(id, f))
                        && pass_frame
                            .get(&id)
                            .copied()
                            .flatten()
                            .is_some_and(|c| c > f && c <= f + horizon);
                    [overlaps(dilemma.get(&id), f), overlaps(causal.get(&id), f), pass]
                })
                .collect();
            LabeledScene {
                frame: f,
                graph,
                labels,
            }
        })
        .collect();
    out.sort_by_key(|s| s.frame);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ManeuverAction {
    Accelerate,
    Decelerate,
    Maintain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManeuverAdvice {
    pub action: ManeuverAction,
    /// m/s², zero when maintaining.
    pub magnitude: f64,
}

impl ManeuverAdvice {
    /// Signed acceleration command.
    pub fn acceleration(&self) -> f64 {
        match self.action {
            ManeuverAction::Accelerate => self.magnitude,
            ManeuverAction::Decelerate => -self.magnitude,
            ManeuverAction::Maintain => 0.0,
        }
    }
}

/// Hold course unless a dilemma is likely; then commit hard if passing is
/// likely, else brake gently.
pub fn advise_maneuver(probs: &NodeProbabilities) -> ManeuverAdvice {
    if probs.p_dilemma <= 0.5 {
        ManeuverAdvice {
            action: ManeuverAction::Maintain,
            magnitude: 0.0,
        }
    } else if probs.p_pass > 0.5 {
        ManeuverAdvice {
            action: ManeuverAction::Accelerate,
            magnitude: 4.0,
        }
    } else {
        ManeuverAdvice {
            action: ManeuverAction::Decelerate,
            magnitude: 2.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{AgentState, Vec2};
    use crate::sim::standard_map;

    fn agent(id: AgentId, x: f64, y: f64, vx: f64, vy: f64) -> SceneAgent {
        SceneAgent {
            id,
            state: AgentState {
                position: Vec2::new(x, y),
                velocity: Vec2::new(vx, vy),
                acceleration: Vec2::ZERO,
                heading: vy.atan2(vx),
                length: 4.5,
                width: 1.8,
            },
        }
    }

    #[test]
    fn single_agent_has_no_edges() {
        let g = build_scene_graph(&[agent(1, 200.0, 0.0, 1.0, 0.0)], &standard_map(), &SignalParams::default());
        assert_eq!(g.nodes.len(), 1);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn close_pair_gets_separation_edge() {
        let scene = [agent(2, 200.0, 5.0, 1.0, 0.0), agent(1, 200.0, 0.0, 1.0, 0.0)];
        let g = build_scene_graph(&scene, &standard_map(), &SignalParams::default());
        assert_eq!(g.nodes[0].agent_id, 1);
        assert_eq!(g.edges, vec![GraphEdge { a: 0, b: 1, separation: 5.0 }]);
        let far = [agent(1, 200.0, 0.0, 1.0, 0.0), agent(2, 200.0, 50.0, 1.0, 0.0)];
        assert!(build_scene_graph(&far, &standard_map(), &SignalParams::default()).edges.is_empty());
    }

    #[test]
    fn zero_params_give_one_half() {
        let scene = [agent(1, 200.0, 0.0, 1.0, 0.0), agent(2, 200.0, 3.0, 1.0, 0.0)];
        let g = build_scene_graph(&scene, &standard_map(), &SignalParams::default());
        for p in forecast(&g, &GnnParams::zeros(8, 2)) {
            assert_eq!((p.p_dilemma, p.p_causal, p.p_pass), (0.5, 0.5, 0.5));
        }
    }

    #[test]
    fn flat_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = GnnParams::init(5, 3, &mut rng);
        assert_eq!(GnnParams::from_flat(5, 3, &p.to_flat()), p);
        p.validate().unwrap();
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let map = standard_map();
        let scene = [
            agent(1, 40.0, -3.0, -9.0, 0.0),
            agent(2, 25.0, -8.0, 3.0, 7.0),
            agent(3, 33.0, -1.0, -2.0, 0.5),
            agent(4, 150.0, 0.0, 1.0, 0.0),
        ];
        let graph = build_scene_graph(&scene, &map, &SignalParams::default());
        assert!(!graph.edges.is_empty());
        let scenes = [LabeledScene {
            frame: 0,
            graph,
            labels: vec![[true, false, true], [false, true, false], [false, false, true], [true, true, false]],
        }];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = GnnParams::init(4, 2, &mut rng);
        let weights = HeadWeights {
            negative: [0.5, 1.0, 0.7],
            positive: [2.0, 3.0, 0.5],
        };
        let (_, grad) = loss_and_gradient(&params, &scenes, &weights);
        let flat = params.to_flat();
        let h = 1e-6;
        for i in 0..flat.len() {
            let mut up = flat.clone();
            up[i] += h;
            let mut down = flat.clone();
            down[i] -= h;
            let f = |v: &[f64]| loss_and_gradient(&GnnParams::from_flat(4, 2, v), &scenes, &weights).0;
            let numeric = (f(&up) - f(&down)) / (2.0 * h);
            let scale = numeric.abs().max(grad[i].abs()).max(1e-8);
            assert!((numeric - grad[i]).abs() / scale < 1e-4, "param {i}: {numeric} vs {}", grad[i]);
        }
    }

    #[test]
    fn advice_truth_table() {
        let probs = |d, p| NodeProbabilities {
            agent_id: 0,
            p_dilemma: d,
            p_causal: 0.0,
            p_pass: p,
        };
        assert_eq!(advise_maneuver(&probs(0.9, 0.9)).acceleration(), 4.0);
        assert_eq!(advise_maneuver(&probs(0.9, 0.1)).acceleration(), -2.0);
        assert_eq!(advise_maneuver(&probs(0.2, 0.9)).action, ManeuverAction::Maintain);
        assert_eq!(advise_maneuver(&probs(0.5, 0.9)).action, ManeuverAction::Maintain);
        assert_eq!(advise_maneuver(&probs(0.51, 0.5)).acceleration(), -2.0);
    }
}
