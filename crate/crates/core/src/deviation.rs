//! Path deviation between predicted and observed motion, window mining and
//! deviation-based dilemma detection.
//!
//! Each window anchors at one frame of one agent: the preceding history feeds
//! the predictor, the following horizon is the ground truth. Windows whose
//! deviation ratio is large are unusual; a shallow classifier decides which of
//! those are dilemma events.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{frame_index, AgentId, AgentState, RoundaboutMap, SceneAgent, Trajectory, Vec2};
use crate::mlp::{mlp_train, Example, FeatureScaling, MlpParams, TrainConfig, INPUTS};
use crate::predictor::{PredictedTrajectory, PredictionContext, Predictor};
use crate::signal::{common_dt, scenes_by_frame, DzEvent, SignalParams};

/// Default mining threshold on the deviation ratio.
pub const DEFAULT_RATIO_THRESHOLD: f64 = 0.8;

/// Classifier decision threshold.
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationSeries {
    /// Distance between predicted and true position at each horizon step.
    pub per_step: Vec<f64>,
    pub sum: f64,
    /// Norm of the stacked prediction error over the norm of the stacked true
    /// displacements from the anchor position.
    pub ratio: f64,
    /// The same ratio restricted to the first `k + 1` steps, for each `k`.
    pub step_ratios: Vec<f64>,
}

impl DeviationSeries {
    pub fn max_step_ratio(&self) -> f64 {
        self.step_ratios.iter().cloned().fold(0.0, f64::max)
    }
}

fn ratio(diff_sq: f64, truth_sq: f64) -> f64 {
    if truth_sq > 0.0 {
        (diff_sq / truth_sq).sqrt()
    } else if diff_sq == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Deviation of `pred` from `truth`, with true displacements measured from
/// `origin` (the agent's position at the anchor frame).
pub fn path_deviation(
    pred: &PredictedTrajectory,
    truth: &[Vec2],
    origin: Vec2,
) -> Result<DeviationSeries> {
    if pred.positions.len() != truth.len() {
        return Err(Error::HorizonMismatch {
            predicted: pred.positions.len(),
            truth: truth.len(),
        });
    }
    let mut per_step = Vec::with_capacity(truth.len());
    let mut step_ratios = Vec::with_capacity(truth.len());
    let (mut diff_sq, mut truth_sq) = (0.0, 0.0);
    for (p, t) in pred.positions.iter().zip(truth) {
        let d = (*p - origin) - (*t - origin);
        diff_sq += d.norm_sq();
        truth_sq += (*t - origin).norm_sq();
        per_step.push(d.norm());
        step_ratios.push(ratio(diff_sq, truth_sq));
    }
    Ok(DeviationSeries {
        sum: per_step.iter().sum(),
        ratio: ratio(diff_sq, truth_sq),
        per_step,
        step_ratios,
    })
}

/// One anchored prediction window.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub agent_id: AgentId,
    pub anchor_frame: i64,
    pub anchor_time: f64,
    pub deviation: DeviationSeries,
}

impl Window {
    /// Classifier input; horizons other than four are padded or truncated.
    pub fn features(&self) -> [f64; INPUTS] {
        std::array::from_fn(|i| self.deviation.per_step.get(i).copied().unwrap_or(0.0))
    }

    pub fn passes(&self, threshold: f64) -> bool {
        threshold <= 0.0 || self.deviation.max_step_ratio() > threshold
    }
}

/// Evaluate every complete window of every agent.
pub fn compute_windows(
    trajectories: &[Trajectory],
    map: &RoundaboutMap,
    predictor: &Predictor,
    signal: &SignalParams,
) -> Result<Vec<Window>> {
    let Some(dt) = common_dt(trajectories)? else {
        return Ok(Vec::new());
    };
    let frames = scenes_by_frame(trajectories);
    let config = &predictor.config;
    let h = config.history_steps;
    let t = config.horizon_steps;
    let per_agent: Result<Vec<Vec<Window>>> = trajectories
        .par_iter()
        .map(|traj| {
            let states: Vec<AgentState> = traj.states.iter().map(|s| s.state).collect();
            let mut out = Vec::new();
            if states.len() < h + t + 1 {
                return Ok(out);
            }
            for i in h..states.len() - t {
                let ts = &traj.states[i];
                let frame = frame_index(ts.time, dt);
                let me = SceneAgent {
                    id: traj.agent_id,
                    state: ts.state,
                };
                let ctx = PredictionContext::for_agent(&me, &frames[&frame], map, signal);
                let pred = predictor.predict(&states[i - h..=i], &ctx, map)?;
                let truth: Vec<Vec2> = states[i + 1..=i + t].iter().map(|s| s.position).collect();
                out.push(Window {
                    agent_id: traj.agent_id,
                    anchor_frame: frame,
                    anchor_time: ts.time,
                    deviation: path_deviation(&pred, &truth, ts.state.position)?,
                });
            }
            Ok(out)
        })
        .collect();
    let mut windows: Vec<Window> = per_agent?.into_iter().flatten().collect();
    windows.sort_by_key(|w| (w.agent_id, w.anchor_frame));
    Ok(windows)
}

/// Event intervals keyed by agent.
pub fn events_by_agent(events: &[DzEvent]) -> BTreeMap<AgentId, Vec<&DzEvent>> {
    let mut map: BTreeMap<AgentId, Vec<&DzEvent>> = BTreeMap::new();
    for e in events {
        map.entry(e.agent_id).or_default().push(e);
    }
    map
}

/// A window is a dilemma window when its anchor frame falls inside one of
/// the agent's ground-truth events.
pub fn window_label(window: &Window, events: &BTreeMap<AgentId, Vec<&DzEvent>>) -> bool {
    events
        .get(&window.agent_id)
        .is_some_and(|evs| evs.iter().any(|e| e.contains_frame(window.anchor_frame)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    pub window: Window,
    pub is_dz: bool,
}

impl LabeledWindow {
    pub fn example(&self) -> Example {
        Example {
            input: self.window.features(),
            label: self.is_dz,
        }
    }
}

/// Keep windows above the ratio threshold, label them against the events,
/// and balance the classes by keeping the largest-deviation windows of the
/// larger class.
pub fn mine_windows(
    windows: &[Window],
    events: &[DzEvent],
    threshold: f64,
) -> Result<Vec<LabeledWindow>> {
    let by_agent = events_by_agent(events);
    let kept: Vec<LabeledWindow> = windows
        .iter()
        .filter(|w| w.passes(threshold))
        .map(|w| LabeledWindow {
            is_dz: window_label(w, &by_agent),
            window: w.clone(),
        })
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyMiningResult { threshold });
    }
    let (mut dz, mut normal): (Vec<_>, Vec<_>) = kept.into_iter().partition(|w| w.is_dz);
    let by_sum_desc = |a: &LabeledWindow, b: &LabeledWindow| {
        b.window
            .deviation
            .sum
            .total_cmp(&a.window.deviation.sum)
            .then(a.window.agent_id.cmp(&b.window.agent_id))
            .then(a.window.anchor_frame.cmp(&b.window.anchor_frame))
    };
    dz.sort_by(by_sum_desc);
    normal.sort_by(by_sum_desc);
    let n = dz.len().min(normal.len());
    dz.truncate(n);
    normal.truncate(n);
    let mut out: Vec<LabeledWindow> = dz.into_iter().chain(normal).collect();
    out.sort_by_key(|w| (w.window.agent_id, w.window.anchor_frame));
    Ok(out)
}

/// Windows, mining and balancing in one call.
pub fn build_training_set(
    trajectories: &[Trajectory],
    events: &[DzEvent],
    map: &RoundaboutMap,
    predictor: &Predictor,
    signal: &SignalParams,
    threshold: f64,
) -> Result<Vec<LabeledWindow>> {
    let windows = compute_windows(trajectories, map, predictor, signal)?;
    mine_windows(&windows, events, threshold)
}

/// Anything that maps a deviation vector to a dilemma score in `[0, 1]`.
pub trait WindowClassifier: Sync {
    fn score(&self, window: &Window) -> f64;
}

impl WindowClassifier for MlpParams {
    fn score(&self, window: &Window) -> f64 {
        self.forward(&window.features())
    }
}

/// Trained window classifier: input scaling, network weights and the
/// mining threshold it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct DzDetector {
    pub scaling: FeatureScaling,
    pub params: MlpParams,
    pub ratio_threshold: f64,
    pub train: TrainConfig,
}

impl WindowClassifier for DzDetector {
    fn score(&self, window: &Window) -> f64 {
        self.params.forward(&self.scaling.apply(&window.features()))
    }
}

/// Fit the input scaling on the mined set, then train the network on the
/// scaled examples. Returns the detector and the per-epoch loss.
pub fn train_detector(
    mined: &[LabeledWindow],
    ratio_threshold: f64,
    config: &TrainConfig,
) -> Result<(DzDetector, Vec<f64>)> {
    let raw: Vec<Example> = mined.iter().map(LabeledWindow::example).collect();
    train_detector_on(&raw, ratio_threshold, config)
}

/// [`train_detector`] on raw (unscaled) examples.
pub fn train_detector_on(
    raw: &[Example],
    ratio_threshold: f64,
    config: &TrainConfig,
) -> Result<(DzDetector, Vec<f64>)> {
    let scaling = FeatureScaling::fit(raw);
    let scaled: Vec<Example> = raw
        .iter()
        .map(|e| Example {
            input: scaling.apply(&e.input),
            label: e.label,
        })
        .collect();
    let trained = mlp_train(&scaled, config)?;
    Ok((
        DzDetector {
            scaling,
            params: trained.params,
            ratio_threshold,
            train: *config,
        },
        trained.loss_trace,
    ))
}

/// Scores by the raw deviation sum squashed into `(0, 1)`; the baseline the
/// trained classifier is compared against.
#[derive(Debug, Clone, Copy, Default)]
pub struct DeviationSumScore;

impl WindowClassifier for DeviationSumScore {
    fn score(&self, window: &Window) -> f64 {
        let s = window.deviation.sum;
        s / (1.0 + s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DzDetection {
    pub agent_id: AgentId,
    pub start_frame: i64,
    pub end_frame: i64,
    pub t_start: f64,
    pub t_end: f64,
    /// Highest window score inside the interval.
    pub score: f64,
    pub decision: bool,
}

/// Score the windows that pass the mining filter and merge positive anchors
/// of the same agent separated by at most one frame.
pub fn detect_windows(
    windows: &[Window],
    classifier: &dyn WindowClassifier,
    threshold: f64,
    dt: f64,
) -> Vec<DzDetection> {
    let mut positives: Vec<(AgentId, i64, f64)> = windows
        .par_iter()
        .filter(|w| w.passes(threshold))
        .filter_map(|w| {
            let score = classifier.score(w);
            (score > DECISION_THRESHOLD).then_some((w.agent_id, w.anchor_frame, score))
        })
        .collect();
    positives.sort_by_key(|p| (p.0, p.1));
    let mut out: Vec<DzDetection> = Vec::new();
    for (agent_id, frame, score) in positives {
        if let Some(last) = out.last_mut() {
            if last.agent_id == agent_id && frame - last.end_frame <= 2 {
                last.end_frame = frame;
                last.t_end = frame as f64 * dt;
                last.score = last.score.max(score);
                continue;
            }
        }
        out.push(DzDetection {
            agent_id,
            start_frame: frame,
            end_frame: frame,
            t_start: frame as f64 * dt,
            t_end: frame as f64 * dt,
            score,
            decision: true,
        });
    }
    out
}

/// End-to-end detection on raw trajectories.
pub fn detect(
    trajectories: &[Trajectory],
    map: &RoundaboutMap,
    predictor: &Predictor,
    signal: &SignalParams,
    classifier: &dyn WindowClassifier,
    threshold: f64,
) -> Result<Vec<DzDetection>> {
    let Some(dt) = common_dt(trajectories)? else {
        return Ok(Vec::new());
    };
    let windows = compute_windows(trajectories, map, predictor, signal)?;
    Ok(detect_windows(&windows, classifier, threshold, dt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::Mode;

    fn pred(points: &[(f64, f64)]) -> PredictedTrajectory {
        PredictedTrajectory {
            positions: points.iter().map(|&(x, y)| Vec2::new(x, y)).collect(),
            dt: 0.5,
            mode: Mode::Proceed,
        }
    }

    fn window(agent: AgentId, frame: i64, per_step: [f64; 4]) -> Window {
        Window {
            agent_id: agent,
            anchor_frame: frame,
            anchor_time: frame as f64 * 0.5,
            deviation: DeviationSeries {
                sum: per_step.iter().sum(),
                per_step: per_step.to_vec(),
                ratio: 1.0,
                step_ratios: vec![1.0; 4],
            },
        }
    }

    #[test]
    fn identical_paths_have_zero_deviation() {
        let p = pred(&[(1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (4.0, 0.0)]);
        let d = path_deviation(&p, &p.positions, Vec2::ZERO).unwrap();
        assert_eq!(d.per_step, vec![0.0; 4]);
        assert_eq!(d.sum, 0.0);
        assert_eq!(d.ratio, 0.0);
    }

    #[test]
    fn deviation_sum_example() {
        let p = pred(&[(1.0, 0.5), (2.0, 1.0), (3.0, 1.5), (4.0, 2.0)]);
        let truth: Vec<Vec2> = (1..=4).map(|k| Vec2::new(k as f64, 0.0)).collect();
        let d = path_deviation(&p, &truth, Vec2::ZERO).unwrap();
        assert_eq!(d.per_step, vec![0.5, 1.0, 1.5, 2.0]);
        assert_eq!(d.sum, 5.0);
        // sqrt(0.25+1+2.25+4) / sqrt(1+4+9+16)
        assert!((d.ratio - (7.5f64 / 30.0).sqrt()).abs() < 1e-15);
        assert!((d.step_ratios[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn stationary_truth_is_degenerate() {
        let origin = Vec2::new(3.0, 3.0);
        let p = pred(&[(3.0, 3.0), (3.0, 3.5), (3.0, 3.0), (3.0, 3.0)]);
        let d = path_deviation(&p, &[origin; 4], origin).unwrap();
        assert_eq!(d.ratio, f64::INFINITY);
        let still = pred(&[(3.0, 3.0); 4]);
        assert_eq!(path_deviation(&still, &[origin; 4], origin).unwrap().ratio, 0.0);
    }

    #[test]
    fn horizon_lengths_must_match() {
        let p = pred(&[(1.0, 0.0), (2.0, 0.0)]);
        let err = path_deviation(&p, &[Vec2::ZERO], Vec2::ZERO).unwrap_err();
        assert_eq!(err.class(), "horizon-mismatch");
    }

    #[test]
    fn mining_balances_by_largest_deviation() {
        let windows = vec![
            window(1, 10, [1.0; 4]),
            window(1, 11, [2.0; 4]),
            window(2, 5, [0.1; 4]),
            window(2, 6, [3.0; 4]),
            window(3, 1, [0.5; 4]),
        ];
        let events = vec![DzEvent {
            agent_id: 1,
            start_frame: 10,
            end_frame: 10,
            t_start: 5.0,
            t_end: 5.0,
            cause_id: Some(9),
        }];
        let mined = mine_windows(&windows, &events, 0.5).unwrap();
        assert_eq!(mined.len(), 2);
        assert!(mined[0].is_dz && mined[0].window.anchor_frame == 10);
        assert!(!mined[1].is_dz && mined[1].window.agent_id == 2 && mined[1].window.anchor_frame == 6);
    }

    #[test]
    fn nothing_above_threshold_is_an_error() {
        let mut w = window(1, 1, [0.0; 4]);
        w.deviation.step_ratios = vec![0.0; 4];
        let err = mine_windows(&[w], &[], 0.8).unwrap_err();
        assert_eq!(err.class(), "empty-mining-result");
    }

    struct Constant(f64);
    impl WindowClassifier for Constant {
        fn score(&self, _: &Window) -> f64 {
            self.0
        }
    }

    #[test]
    fn half_scores_are_not_detections() {
        let windows = vec![window(1, 1, [1.0; 4]), window(1, 2, [1.0; 4])];
        assert!(detect_windows(&windows, &Constant(0.5), 0.8, 0.5).is_empty());
    }

    #[test]
    fn adjacent_positives_merge() {
        let windows = vec![
            window(1, 1, [1.0; 4]),
            window(1, 3, [1.0; 4]),
            window(1, 6, [1.0; 4]),
            window(2, 2, [1.0; 4]),
        ];
        let d = detect_windows(&windows, &Constant(0.9), 0.8, 0.5);
        let spans: Vec<(AgentId, i64, i64)> = d.iter().map(|d| (d.agent_id, d.start_frame, d.end_frame)).collect();
        assert_eq!(spans, vec![(1, 1, 3), (1, 6, 6), (2, 2, 2)]);
        assert!(d.iter().all(|d| d.decision && d.score > DECISION_THRESHOLD));
    }
}
