//! File formats: trajectory and event CSV, run configuration, map files and
//! model files.
//!
//! Floats are written with Rust's shortest round-trip formatting, so loading
//! a file this module wrote and writing it again reproduces it byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::deviation::{DzDetector, LabeledWindow, Window, DEFAULT_RATIO_THRESHOLD};
use crate::dilemma::{DzParams, APPROACH_SPEED_RANGE, MPH};
use crate::error::{Error, Result};
use crate::forecaster::{ForecasterConfig, GnnParams, HeadWeights};
use crate::geometry::{
    frame_index, AgentId, AgentState, ApproachLeg, Circulation, RoundaboutMap, TimedState,
    Trajectory, Vec2,
};
use crate::maneuver::ManeuverConfig;
use crate::metrics::RocCurve;
use crate::mlp::{FeatureScaling, MlpParams, TrainConfig};
use crate::predictor::PredictorConfig;
use crate::signal::{DzEvent, SignalParams};
use crate::sim::{standard_map, SimConfig};

pub const TRAJECTORY_HEADER: [&str; 12] = [
    "frame", "time", "agent_id", "x", "y", "vx", "vy", "ax", "ay", "heading", "length", "width",
];
pub const EVENTS_HEADER: [&str; 4] = ["agent_id", "t_start", "t_end", "cause_id"];
pub const ROC_HEADER: [&str; 3] = ["threshold", "fpr", "tpr"];
pub const WINDOW_HEADER: [&str; 10] = [
    "agent_id", "frame", "time", "d1", "d2", "d3", "d4", "sum", "max_step_ratio", "is_dz",
];

/// Slack when comparing m/s speeds against the mph clamp, which converts
/// to non-round values.
const SPEED_TOLERANCE: f64 = 0.05;

pub const MODEL_FORMAT: &str = "roundabout-dz-model";
pub const MODEL_VERSION: u32 = 1;

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Write `bytes` to `path`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::Schema(e.to_string()))
}

fn parse_field<T: std::str::FromStr>(raw: &str, column: &str, line: u64) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| Error::Schema(format!("line {line}: cannot parse {column} from {raw:?}")))
}

/// Where each canonical trajectory column is found in an input file.
/// Unlisted columns use their canonical name.
pub type ColumnMapping = BTreeMap<String, String>;

fn column_indices(headers: &csv::StringRecord, mapping: &ColumnMapping) -> Result<[usize; 12]> {
    let mut out = [0; 12];
    for (slot, name) in out.iter_mut().zip(TRAJECTORY_HEADER) {
        let source = mapping.get(name).map(String::as_str).unwrap_or(name);
        *slot = headers
            .iter()
            .position(|h| h.trim() == source)
            .ok_or_else(|| Error::Schema(format!("missing column {source:?}")))?;
    }
    Ok(out)
}

struct Row {
    line: u64,
    frame: i64,
    time: f64,
    agent_id: AgentId,
    state: AgentState,
}

/// Parse trajectory CSV text. Rows are grouped by agent and sorted by time;
/// the sampling step is inferred from the data and must be uniform.
pub fn parse_trajectories(text: &str, mapping: &ColumnMapping) -> Result<Vec<Trajectory>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let idx = column_indices(reader.headers()?, mapping)?;
    let mut by_agent: BTreeMap<AgentId, Vec<Row>> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let get = |k: usize| -> Result<&str> {
            record
                .get(idx[k])
                .ok_or_else(|| Error::Schema(format!("line {line}: missing {}", TRAJECTORY_HEADER[k])))
        };
        let num = |k: usize| -> Result<f64> { parse_field(get(k)?, TRAJECTORY_HEADER[k], line) };
        let state = AgentState {
            position: Vec2::new(num(3)?, num(4)?),
            velocity: Vec2::new(num(5)?, num(6)?),
            acceleration: Vec2::new(num(7)?, num(8)?),
            heading: num(9)?,
            length: num(10)?,
            width: num(11)?,
        };
        state
            .validate()
            .map_err(|e| Error::Schema(format!("line {line}: {e}")))?;
        let row = Row {
            line,
            frame: parse_field(get(0)?, "frame", line)?,
            time: num(1)?,
            agent_id: parse_field(get(2)?, "agent_id", line)?,
            state,
        };
        by_agent.entry(row.agent_id).or_default().push(row);
    }
    for rows in by_agent.values_mut() {
        rows.sort_by(|a, b| a.time.total_cmp(&b.time));
    }
    let Some(dt) = infer_dt(&by_agent)? else {
        return Ok(Vec::new());
    };
    by_agent
        .into_iter()
        .map(|(agent_id, rows)| {
            for pair in rows.windows(2) {
                let gap = pair[1].time - pair[0].time;
                if (gap - dt).abs() > 1e-9 || pair[1].frame != pair[0].frame + 1 {
                    return Err(Error::Schema(format!(
                        "line {}: agent {agent_id} jumps from t={} (frame {}) to t={} (frame {}), expected step {dt}",
                        pair[1].line, pair[0].time, pair[0].frame, pair[1].time, pair[1].frame
                    )));
                }
            }
            let states = rows
                .iter()
                .map(|r| TimedState {
                    time: r.time,
                    state: r.state,
                })
                .collect();
            Trajectory::new(agent_id, dt, states)
        })
        .collect()
}

/// Sampling step: the first time gap of the first agent with two rows, or
/// time over frame for single-row data.
fn infer_dt(by_agent: &BTreeMap<AgentId, Vec<Row>>) -> Result<Option<f64>> {
    if by_agent.is_empty() {
        return Ok(None);
    }
    if let Some(rows) = by_agent.values().find(|r| r.len() >= 2) {
        let frames = (rows[1].frame - rows[0].frame) as f64;
        let dt = (rows[1].time - rows[0].time) / frames;
        if dt > 0.0 && dt.is_finite() {
            return Ok(Some(dt));
        }
        return Err(Error::Schema(format!("line {}: cannot infer a positive time step", rows[1].line)));
    }
    by_agent
        .values()
        .flatten()
        .find(|r| r.frame != 0)
        .map(|r| Some(r.time / r.frame as f64))
        .filter(|dt| dt.is_some_and(|d| d > 0.0))
        .ok_or_else(|| Error::Schema("cannot infer the time step from single-row agents".into()))
}

pub fn load_trajectories(path: &Path, mapping: &ColumnMapping) -> Result<Vec<Trajectory>> {
    parse_trajectories(&read_file(path)?, mapping)
        .map_err(|e| match e {
            Error::Schema(msg) => Error::Schema(format!("{}: {msg}", path.display())),
            other => other,
        })
}

/// Trajectory CSV, rows ordered by frame then agent.
pub fn trajectories_csv(trajectories: &[Trajectory]) -> Result<Vec<u8>> {
    let mut rows: Vec<(i64, AgentId, &TimedState, f64)> = trajectories
        .iter()
        .flat_map(|t| {
            t.states
                .iter()
                .map(move |s| (frame_index(s.time, t.dt), t.agent_id, s, t.dt))
        })
        .collect();
    rows.sort_by_key(|r| (r.0, r.1));
    csv_bytes(
        &TRAJECTORY_HEADER,
        rows.into_iter().map(|(frame, id, ts, _)| {
            let s = &ts.state;
            vec![
                frame.to_string(),
                ts.time.to_string(),
                id.to_string(),
                s.position.x.to_string(),
                s.position.y.to_string(),
                s.velocity.x.to_string(),
                s.velocity.y.to_string(),
                s.acceleration.x.to_string(),
                s.acceleration.y.to_string(),
                s.heading.to_string(),
                s.length.to_string(),
                s.width.to_string(),
            ]
        }),
    )
}

pub fn events_csv(events: &[DzEvent]) -> Result<Vec<u8>> {
    csv_bytes(
        &EVENTS_HEADER,
        events.iter().map(|e| {
            vec![
                e.agent_id.to_string(),
                e.t_start.to_string(),
                e.t_end.to_string(),
                e.cause_id.map(|c| c.to_string()).unwrap_or_default(),
            ]
        }),
    )
}

/// Parse events CSV text; frames are recovered from the times with `dt`.
pub fn parse_events(text: &str, dt: f64) -> Result<Vec<DzEvent>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.iter().map(str::trim).ne(EVENTS_HEADER) {
        return Err(Error::Schema(format!(
            "events header must be {}",
            EVENTS_HEADER.join(",")
        )));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let t_start: f64 = parse_field(&record[1], "t_start", line)?;
        let t_end: f64 = parse_field(&record[2], "t_end", line)?;
        if t_end < t_start {
            return Err(Error::Schema(format!("line {line}: event ends before it starts")));
        }
        let cause = record[3].trim();
        out.push(DzEvent {
            agent_id: parse_field(&record[0], "agent_id", line)?,
            start_frame: frame_index(t_start, dt),
            end_frame: frame_index(t_end, dt),
            t_start,
            t_end,
            cause_id: if cause.is_empty() {
                None
            } else {
                Some(parse_field(cause, "cause_id", line)?)
            },
        });
    }
    Ok(out)
}

pub fn load_events(path: &Path, dt: f64) -> Result<Vec<DzEvent>> {
    parse_events(&read_file(path)?, dt)
}

pub fn roc_csv(curve: &RocCurve) -> Result<Vec<u8>> {
    csv_bytes(
        &ROC_HEADER,
        curve.points.iter().map(|p| {
            vec![p.threshold.to_string(), p.fpr.to_string(), p.tpr.to_string()]
        }),
    )
}

/// Named column computed from each window.
pub type ExtraColumn<'a> = (&'a str, &'a dyn Fn(&Window) -> String);

/// One row per window: per-step deviations, their sum, the largest step
/// ratio and the label. An optional extra column is appended per row.
pub fn windows_csv<'a>(
    rows: impl IntoIterator<Item = (&'a Window, bool)>,
    extra: Option<ExtraColumn<'_>>,
) -> Result<Vec<u8>> {
    let mut header: Vec<&str> = WINDOW_HEADER.to_vec();
    if let Some((name, _)) = extra {
        header.push(name);
    }
    csv_bytes(
        &header,
        rows.into_iter().map(|(w, is_dz)| {
            let mut row = vec![
                w.agent_id.to_string(),
                w.anchor_frame.to_string(),
                w.anchor_time.to_string(),
            ];
            let step = |k: usize| w.deviation.per_step.get(k).copied().unwrap_or(0.0);
            row.extend((0..4).map(|k| step(k).to_string()));
            row.push(w.deviation.sum.to_string());
            row.push(w.deviation.max_step_ratio().to_string());
            row.push(u8::from(is_dz).to_string());
            if let Some((_, f)) = extra {
                row.push(f(w));
            }
            row
        }),
    )
}

/// A mined window as read back from disk. Only the classifier inputs and the
/// label survive the round trip.
#[derive(Debug, Clone, PartialEq)]
pub struct MinedRow {
    pub agent_id: AgentId,
    pub frame: i64,
    pub steps: [f64; 4],
    pub is_dz: bool,
    pub split: String,
}

pub fn mined_csv(mined: &[(LabeledWindow, &str)]) -> Result<Vec<u8>> {
    let split: BTreeMap<(AgentId, i64), &str> = mined
        .iter()
        .map(|(m, s)| ((m.window.agent_id, m.window.anchor_frame), *s))
        .collect();
    let lookup = |w: &Window| split[&(w.agent_id, w.anchor_frame)].to_string();
    windows_csv(
        mined.iter().map(|(m, _)| (&m.window, m.is_dz)),
        Some(("split", &lookup)),
    )
}

pub fn parse_mined(text: &str) -> Result<Vec<MinedRow>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("mined windows file lacks column {name:?}")))
    };
    let (agent, frame, label, split) = (col("agent_id")?, col("frame")?, col("is_dz")?, col("split")?);
    let steps = [col("d1")?, col("d2")?, col("d3")?, col("d4")?];
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let mut values = [0.0; 4];
        for ((v, &k), name) in values.iter_mut().zip(&steps).zip(["d1", "d2", "d3", "d4"]) {
            *v = parse_field(&record[k], name, line)?;
        }
        out.push(MinedRow {
            agent_id: parse_field(&record[agent], "agent_id", line)?,
            frame: parse_field(&record[frame], "frame", line)?,
            steps: values,
            is_dz: parse_field::<u8>(&record[label], "is_dz", line)? == 1,
            split: record[split].trim().to_string(),
        });
    }
    Ok(out)
}

/// Mining filter and train/test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MiningConfig {
    pub ratio_threshold: f64,
    /// Agents whose id is a multiple of this form the test split.
    pub test_modulus: u32,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            ratio_threshold: DEFAULT_RATIO_THRESHOLD,
            test_modulus: 5,
        }
    }
}

impl MiningConfig {
    pub fn is_test(&self, agent_id: AgentId) -> bool {
        agent_id.is_multiple_of(self.test_modulus)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ratio_threshold >= 0.0) || self.test_modulus < 2 {
            return Err(Error::Config(
                "mining.ratio_threshold must be non-negative and test_modulus at least 2".into(),
            ));
        }
        Ok(())
    }
}

/// Signal gates; the dilemma-zone parameters live in their own section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalSection {
    pub t_max: f64,
    pub d_t: f64,
    pub include_red: bool,
}

impl Default for SignalSection {
    fn default() -> Self {
        let d = SignalParams::default();
        Self {
            t_max: d.t_max,
            d_t: d.d_t,
            include_red: d.include_red,
        }
    }
}

/// Everything a pipeline run reads from its configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Approach speed clamp in miles per hour; simulated desired speeds must
    /// fall inside it.
    pub speed_limit_mph: [f64; 2],
    /// Optional map file; the built-in four-leg roundabout otherwise.
    pub map: Option<String>,
    pub dz: DzParams,
    pub signal: SignalSection,
    pub predictor: PredictorConfig,
    pub mining: MiningConfig,
    pub train: TrainConfig,
    pub forecaster: ForecasterConfig,
    pub sim: SimConfig,
    pub maneuver: ManeuverConfig,
    pub columns: ColumnMapping,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            speed_limit_mph: [15.0, 25.0],
            map: None,
            dz: DzParams::default(),
            signal: SignalSection::default(),
            predictor: PredictorConfig::default(),
            mining: MiningConfig::default(),
            train: TrainConfig::default(),
            forecaster: ForecasterConfig::default(),
            sim: SimConfig::default(),
            maneuver: ManeuverConfig::default(),
            columns: ColumnMapping::new(),
        }
    }
}

impl RunConfig {
    pub fn signal_params(&self) -> SignalParams {
        SignalParams {
            t_max: self.signal.t_max,
            d_t: self.signal.d_t,
            include_red: self.signal.include_red,
            dz: self.dz,
        }
    }

    /// Speed clamp in m/s.
    pub fn speed_limits(&self) -> [f64; 2] {
        self.speed_limit_mph.map(|mph| mph * MPH)
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.speed_limit_mph;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::Config(format!("speed_limit_mph [{lo}, {hi}] is not a valid range")));
        }
        let [lo_ms, hi_ms] = self.speed_limits();
        let (abs_lo, abs_hi) = APPROACH_SPEED_RANGE;
        if lo_ms < abs_lo - SPEED_TOLERANCE || hi_ms > abs_hi + SPEED_TOLERANCE {
            return Err(Error::Config(format!(
                "speed_limit_mph must lie within [{:.0}, {:.0}] mph",
                abs_lo / MPH,
                abs_hi / MPH
            )));
        }
        for v in self.sim.profiles.desired_speed {
            if v < lo_ms - SPEED_TOLERANCE || v > hi_ms + SPEED_TOLERANCE {
                return Err(Error::Config(format!(
                    "sim desired speed {v} m/s is outside the speed limit clamp [{lo_ms:.2}, {hi_ms:.2}] m/s"
                )));
            }
        }
        if self.predictor.horizon_steps != 4 {
            return Err(Error::Config("predictor.horizon_steps must be 4 to match the classifier input".into()));
        }
        for name in self.columns.keys() {
            if !TRAJECTORY_HEADER.contains(&name.as_str()) {
                return Err(Error::Config(format!("columns: unknown trajectory column {name:?}")));
            }
        }
        self.signal_params().validate()?;
        self.predictor.validate()?;
        self.mining.validate()?;
        self.train.validate()?;
        self.forecaster.validate()?;
        self.sim.validate()?;
        self.maneuver.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read_file(path)?)
    }

    /// Use `seed` for the simulator and every trainer and sampler.
    pub fn reseed(&mut self, seed: u64) {
        self.sim.seed = seed;
        self.train.seed = seed;
        self.forecaster.seed = seed;
        self.maneuver.seed = seed;
    }

    /// The configured map, resolved relative to `base` when given as a path.
    pub fn load_map(&self, base: Option<&Path>) -> Result<RoundaboutMap> {
        match &self.map {
            None => Ok(standard_map()),
            Some(p) => {
                let path = match base {
                    Some(dir) => dir.join(p),
                    None => p.into(),
                };
                load_map(&path)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegFile {
    pub leg_id: u32,
    pub centerline: Vec<[f64; 2]>,
    pub yield_point: [f64; 2],
    pub conflict_point: [f64; 2],
}

/// On-disk roundabout description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapFile {
    pub center: [f64; 2],
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub lane_width: f64,
    #[serde(default)]
    pub circulation: Circulation,
    pub legs: Vec<LegFile>,
}

fn v2(p: [f64; 2]) -> Vec2 {
    Vec2::new(p[0], p[1])
}

impl MapFile {
    pub fn from_map(map: &RoundaboutMap) -> Self {
        let arr = |v: Vec2| [v.x, v.y];
        Self {
            center: arr(map.center),
            inner_radius: map.inner_radius,
            outer_radius: map.outer_radius,
            lane_width: map.lane_width,
            circulation: map.circulation,
            legs: map
                .legs
                .iter()
                .map(|l| LegFile {
                    leg_id: l.leg_id(),
                    centerline: l.centerline().iter().map(|&p| arr(p)).collect(),
                    yield_point: arr(l.yield_point()),
                    conflict_point: arr(l.conflict_point()),
                })
                .collect(),
        }
    }

    pub fn to_map(&self) -> Result<RoundaboutMap> {
        let legs = self
            .legs
            .iter()
            .map(|l| {
                ApproachLeg::new(
                    l.leg_id,
                    l.centerline.iter().copied().map(v2).collect(),
                    v2(l.yield_point),
                    v2(l.conflict_point),
                )
            })
            .collect::<Result<_>>()?;
        RoundaboutMap::new(
            v2(self.center),
            self.inner_radius,
            self.outer_radius,
            self.lane_width,
            self.circulation,
            legs,
        )
    }
}

pub fn parse_map(text: &str) -> Result<RoundaboutMap> {
    let file: MapFile = toml::from_str(text).map_err(|e| Error::Schema(format!("map: {e}")))?;
    file.to_map()
}

pub fn map_toml(map: &RoundaboutMap) -> Result<String> {
    toml::to_string(&MapFile::from_map(map)).map_err(|e| Error::Schema(e.to_string()))
}

pub fn load_map(path: &Path) -> Result<RoundaboutMap> {
    parse_map(&read_file(path)?)
}

/// Trained models as stored on disk, tagged by kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Model {
    Detector {
        scaling: FeatureScaling,
        params: MlpParams,
        ratio_threshold: f64,
        train: TrainConfig,
    },
    Forecaster {
        params: GnnParams,
        head_weights: HeadWeights,
        config: ForecasterConfig,
    },
}

impl Model {
    fn kind(&self) -> &'static str {
        match self {
            Model::Detector { .. } => "detector",
            Model::Forecaster { .. } => "forecaster",
        }
    }

    pub fn from_detector(d: &DzDetector) -> Self {
        Model::Detector {
            scaling: d.scaling,
            params: d.params.clone(),
            ratio_threshold: d.ratio_threshold,
            train: d.train,
        }
    }

    pub fn into_detector(self) -> Result<DzDetector> {
        match self {
            Model::Detector {
                scaling,
                params,
                ratio_threshold,
                train,
            } => {
                scaling.validate()?;
                params.validate()?;
                Ok(DzDetector {
                    scaling,
                    params,
                    ratio_threshold,
                    train,
                })
            }
            other => Err(Error::Model(format!("expected a detector model, found {}", other.kind()))),
        }
    }

    pub fn into_forecaster(self) -> Result<(GnnParams, ForecasterConfig)> {
        match self {
            Model::Forecaster { params, config, .. } => {
                params.validate()?;
                Ok((params, config))
            }
            other => Err(Error::Model(format!("expected a forecaster model, found {}", other.kind()))),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelEnvelope {
    format: String,
    version: u32,
    model: Model,
}

pub fn model_json(model: &Model) -> Result<String> {
    let env = ModelEnvelope {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        model: model.clone(),
    };
    let mut s = serde_json::to_string_pretty(&env).map_err(|e| Error::Model(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn parse_model(text: &str) -> Result<Model> {
    let env: ModelEnvelope =
        serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
    if env.format != MODEL_FORMAT {
        return Err(Error::Model(format!("unknown model format {:?}", env.format)));
    }
    if env.version != MODEL_VERSION {
        return Err(Error::Model(format!(
            "model version {} is not supported (expected {MODEL_VERSION})",
            env.version
        )));
    }
    Ok(env.model)
}

pub fn load_model(path: &Path) -> Result<Model> {
    parse_model(&read_file(path)?)
}

pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    write_file(path, model_json(model)?.as_bytes())
}

/// Append-only line writer for plain-text reports.
pub fn text_lines(lines: &[String]) -> Vec<u8> {
    let mut out = Vec::new();
    for l in lines {
        writeln!(out, "{l}").expect("writing to a Vec cannot fail");
    }
    out
}
