//! Confusion-matrix statistics, temporal IoU and ROC curves.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::geometry::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationReport {
    pub confusion: ConfusionMatrix,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
    /// Set when any ratio had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

fn safe_div(num: f64, den: f64, degenerate: &mut bool) -> f64 {
    if den == 0.0 {
        *degenerate = true;
        0.0
    } else {
        num / den
    }
}

pub fn classification_report(predictions: &[bool], labels: &[bool]) -> Result<ClassificationReport> {
    if predictions.len() != labels.len() {
        return Err(Error::Schema(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Schema("classification report needs at least one sample".into()));
    }
    let mut c = ConfusionMatrix::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    let mut degenerate = false;
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let precision = safe_div(tp, tp + fp, &mut degenerate);
    let recall = safe_div(tp, tp + fn_, &mut degenerate);
    let fpr = safe_div(fp, fp + tn, &mut degenerate);
    let f1 = safe_div(2.0 * precision * recall, precision + recall, &mut degenerate);
    Ok(ClassificationReport {
        confusion: c,
        precision,
        recall,
        f1,
        fpr,
        degenerate,
    })
}

/// Half-open frame interval `[start, end)` of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct FrameInterval {
    pub agent_id: AgentId,
    pub start: i64,
    pub end: i64,
}

impl FrameInterval {
    /// Interval covering the inclusive frame range `first..=last`.
    pub fn inclusive(agent_id: AgentId, first: i64, last: i64) -> Self {
        Self {
            agent_id,
            start: first,
            end: last + 1,
        }
    }
}

fn frame_set(intervals: &[FrameInterval]) -> Result<BTreeSet<(AgentId, i64)>> {
    let mut set = BTreeSet::new();
    for iv in intervals {
        if iv.start > iv.end {
            return Err(Error::InvalidArgument(format!(
                "interval [{}, {}] of agent {} is reversed",
                iv.start, iv.end, iv.agent_id
            )));
        }
        set.extend((iv.start..iv.end).map(|f| (iv.agent_id, f)));
    }
    Ok(set)
}

/// How per-agent overlaps are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IouAggregation {
    /// Global frame counts over all agents.
    #[default]
    Micro,
    /// Mean of per-agent IoU over agents present in either set.
    Macro,
}

/// Frame-level intersection over union of two interval sets. Two empty sets
/// are identical and score 1.
pub fn temporal_iou(
    detected: &[FrameInterval],
    truth: &[FrameInterval],
    aggregation: IouAggregation,
) -> Result<f64> {
    let a = frame_set(detected)?;
    let b = frame_set(truth)?;
    let iou = |a: &BTreeSet<(AgentId, i64)>, b: &BTreeSet<(AgentId, i64)>| {
        let inter = a.intersection(b).count();
        let union = a.len() + b.len() - inter;
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    };
    match aggregation {
        IouAggregation::Micro => Ok(iou(&a, &b)),
        IouAggregation::Macro => {
            let mut per_agent: BTreeMap<AgentId, (BTreeSet<_>, BTreeSet<_>)> = BTreeMap::new();
            for f in &a {
                per_agent.entry(f.0).or_default().0.insert(*f);
            }
            for f in &b {
                per_agent.entry(f.0).or_default().1.insert(*f);
            }
            if per_agent.is_empty() {
                return Ok(1.0);
            }
            let total: f64 = per_agent.values().map(|(x, y)| iou(x, y)).sum();
            Ok(total / per_agent.len() as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// Starts at (0, 0) with an infinite threshold, then one point per
    /// distinct score in descending order, ending at (1, 1).
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC by sweeping the decision threshold over every distinct score
/// (predicting positive when `score >= threshold`); AUC by the trapezoid rule.
pub fn roc_points(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::Schema(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let pos = labels.iter().filter(|l| **l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels(format!("{pos} positives and {neg} negatives")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum();
    Ok(RocCurve { points, auc })
}
