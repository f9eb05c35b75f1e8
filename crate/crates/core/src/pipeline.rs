//! File-to-file pipeline steps behind the command-line tool.
//!
//! Every step reads from an input directory and writes into an output
//! directory using the fixed file names below, so steps chain by pointing
//! them at the same directory. Outputs depend only on the inputs and the
//! configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;

use crate::deviation::{
    compute_windows, detect_windows, events_by_agent, mine_windows, train_detector_on,
    window_label, DeviationSeries, DeviationSumScore, DzDetection, DzDetector, Window,
    WindowClassifier, DECISION_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::forecaster::{
    advise_maneuver, build_scene_graph, forecast, label_scenes, train_forecaster, GnnParams,
};
use crate::geometry::{RoundaboutMap, Trajectory};
use crate::io::{
    events_csv, load_events, load_model, load_trajectories, mined_csv, parse_mined,
    roc_csv, save_model, text_lines, trajectories_csv, windows_csv, write_file, MinedRow, Model,
    RunConfig,
};
use crate::maneuver::{maneuver_experiment, sample_cases, PassBucket};
use crate::metrics::{
    classification_report, roc_points, temporal_iou, FrameInterval, IouAggregation, RocCurve,
};
use crate::mlp::Example;
use crate::predictor::Predictor;
use crate::signal::{common_dt, label_dz_events, scenes_by_frame, DzEvent, SignalParams};
use crate::sim::simulate;

pub const TRAJECTORIES: &str = "trajectories.csv";
pub const EVENTS: &str = "events.csv";
pub const MINED: &str = "mined.csv";
pub const DETECTOR: &str = "detector.json";
pub const DETECTIONS: &str = "detections.csv";
pub const FORECASTER: &str = "forecaster.json";
pub const FORECASTS: &str = "forecasts.csv";
pub const REPORT: &str = "report.txt";
pub const ROC: &str = "roc.csv";
pub const ROC_BASELINE: &str = "roc_baseline.csv";
pub const DEVIATIONS: &str = "deviations.csv";
pub const MANEUVER: &str = "maneuver.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Mine,
    TrainDetector,
    Detect,
    TrainForecaster,
    Forecast,
    Evaluate,
    ManeuverStudy,
    ExportRoc,
    ExportDeviations,
}

impl Command {
    pub const ALL: [Command; 10] = [
        Command::Simulate,
        Command::Mine,
        Command::TrainDetector,
        Command::Detect,
        Command::TrainForecaster,
        Command::Forecast,
        Command::Evaluate,
        Command::ManeuverStudy,
        Command::ExportRoc,
        Command::ExportDeviations,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Mine => "mine",
            Command::TrainDetector => "train-detector",
            Command::Detect => "detect",
            Command::TrainForecaster => "train-forecaster",
            Command::Forecast => "forecast",
            Command::Evaluate => "evaluate",
            Command::ManeuverStudy => "maneuver-study",
            Command::ExportRoc => "export-roc",
            Command::ExportDeviations => "export-deviations",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown command {s:?}")))
    }
}

/// Directories and model path for one step. The input directory defaults to
/// the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPaths {
    pub input: Option<PathBuf>,
    pub output: PathBuf,
    pub model: Option<PathBuf>,
}

impl RunPaths {
    pub fn in_dir(dir: impl Into<PathBuf>) -> Self {
        Self {
            input: None,
            output: dir.into(),
            model: None,
        }
    }

    fn input(&self, name: &str) -> PathBuf {
        self.input.as_deref().unwrap_or(&self.output).join(name)
    }

    fn output(&self, name: &str) -> PathBuf {
        self.output.join(name)
    }

    fn model_or(&self, name: &str) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.input(name))
    }
}

/// Files written and a short human summary.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub artifacts: Vec<PathBuf>,
    pub summary: Vec<String>,
}

impl Outcome {
    fn write(&mut self, path: PathBuf, bytes: &[u8]) -> Result<()> {
        write_file(&path, bytes)?;
        info!("wrote {}", path.display());
        self.artifacts.push(path);
        Ok(())
    }
}

struct Context {
    config: RunConfig,
    map: RoundaboutMap,
    signal: SignalParams,
    predictor: Predictor,
}

impl Context {
    fn new(config: &RunConfig, base: Option<&Path>) -> Result<Self> {
        config.validate()?;
        let signal = config.signal_params();
        Ok(Self {
            map: config.load_map(base)?,
            predictor: Predictor {
                config: config.predictor,
                dz: config.dz,
                ..Predictor::default()
            },
            signal,
            config: config.clone(),
        })
    }

    fn trajectories(&self, paths: &RunPaths) -> Result<Vec<Trajectory>> {
        load_trajectories(&paths.input(TRAJECTORIES), &self.config.columns)
    }

    /// Recorded events when the input has them, labelled from the data
    /// otherwise.
    fn events(&self, paths: &RunPaths, trajectories: &[Trajectory]) -> Result<Vec<DzEvent>> {
        let path = paths.input(EVENTS);
        if path.exists() {
            let dt = common_dt(trajectories)?.unwrap_or(self.config.sim.dt);
            load_events(&path, dt)
        } else {
            label_dz_events(trajectories, &self.map, &self.signal)
        }
    }

    fn windows(&self, trajectories: &[Trajectory]) -> Result<Vec<Window>> {
        compute_windows(trajectories, &self.map, &self.predictor, &self.signal)
    }
}

/// Run one pipeline step. `config_dir` resolves a relative map path.
pub fn run_command(
    command: Command,
    config: &RunConfig,
    paths: &RunPaths,
    config_dir: Option<&Path>,
) -> Result<Outcome> {
    let ctx = Context::new(config, config_dir)?;
    let mut out = Outcome::default();
    match command {
        Command::Simulate => cmd_simulate(&ctx, paths, &mut out)?,
        Command::Mine => cmd_mine(&ctx, paths, &mut out)?,
        Command::TrainDetector => cmd_train_detector(&ctx, paths, &mut out)?,
        Command::Detect => cmd_detect(&ctx, paths, &mut out)?,
        Command::TrainForecaster => cmd_train_forecaster(&ctx, paths, &mut out)?,
        Command::Forecast => cmd_forecast(&ctx, paths, &mut out)?,
        Command::Evaluate => cmd_evaluate(&ctx, paths, &mut out)?,
        Command::ManeuverStudy => cmd_maneuver(&ctx, paths, &mut out)?,
        Command::ExportRoc => cmd_export_roc(&ctx, paths, &mut out)?,
        Command::ExportDeviations => cmd_export_deviations(&ctx, paths, &mut out)?,
    }
    Ok(out)
}

fn cmd_simulate(ctx: &Context, paths: &RunPaths, out: &mut Outcome) -> Result<()> {
    let result = simulate(&ctx.map, &ctx.config.sim, &ctx.signal)?;
    out.write(paths.output(TRAJECTORIES), &trajectories_csv(&result.trajectories)?)?;
    out.write(paths.output(EVENTS), &events_csv(&result.ground_truth_events)?)?;
    out.summary.push(format!(
        "simulated {} s: {} vehicles, {} dilemma events, {} collisions",
        ctx.config.sim.duration,
        result.trajectories.len(),
        result.ground_truth_events.len(),
        result.collisions.len()
    ));
    Ok(())
}

fn split_name(ctx: &Context, agent: u32) -> &'static str {
    if ctx.config.mining.is_test(agent) {
        "test"
    } else {
        "train"
    }
}

fn cmd_mine(ctx: &Context, paths: &RunPaths, out: &mut Outcome) -> Result<()> {
    let trajectories = ctx.trajectories(paths)?;
    let events = if paths.input(EVENTS).exists() {
        ctx.events(paths, &trajectories)?
    } else {
        let events = label_dz_events(&trajectories, &ctx.map, &ctx.signal)?;
        out.write(paths.output(EVENTS), &events_csv(&events)?)?;
        events
    };
    let windows = ctx.windows(&trajectories)?;
    let threshold = ctx.config.mining.ratio_threshold;
    let (test, train): (Vec<Window>, Vec<Window>) = windows
        .into_iter()
        .partition(|w| ctx.config.mining.is_test(w.agent_id));
    let mut mined = Vec::new();
    for part in [&train, &test] {
        for m in mine_windows(part, &events, threshold)? {
            let split = split_name(ctx, m.window.agent_id);
            mined.push((m, split));
        }
    }
    mined.sort_by_key(|(m, _)| (m.window.agent_id, m.window.anchor_frame));
    let dz = mined.iter().filter(|(m, _)| m.is_dz).count();
    out.write(paths.output(MINED), &mined_csv(&mined)?)?;
    out.summary.push(format!(
        "mined {} windows ({dz} dilemma) from {} events",
        mined.len(),
        events.len()
    ));
    Ok(())
}

/// Window carrying only what a classifier reads back from a mined file.
pub fn row_window(row: &MinedRow) -> Window {
    Window {
        agent_id: row.agent_id,
        anchor_frame: row.frame,
        anchor_time: f64::NAN,
        deviation: DeviationSeries {
            per_step: row.steps.to_vec(),
            sum: row.steps.iter().sum(),
            ratio: f64::NAN,
            step_ratios: Vec::new(),
        },
    }
}

fn mined_rows(paths: &RunPaths, split: &str) -> Result<Vec<MinedRow>> {
    let path = paths.input(MINED);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(parse_mined(&text)?.into_iter().filter(|r| r.split == split).collect())
}

fn cmd_train_detector(ctx: &Context, paths: &RunPaths, out: &mut Outcome) -> Result<()> {
    let rows = mined_rows(paths, "train")?;
    let examples: Vec<Example> = rows
        .iter()
        .map(|r| Example {
            input: r.steps,
            label: r.is_dz,
        })
        .collect();
    let (detector, trace) =
        train_detector_on(&examples, ctx.config.mining.ratio_threshold, &ctx.config.train)?;
    let path = paths.output(DETECTOR);
    save_model(&path, &Model::from_detector(&detector))?;
    out.artifacts.push(path);
    out.summary.push(format!(
        "trained detector on {} windows, final loss {:.4}",
        examples.len(),
        trace.last().copied().unwrap_or(f64::NAN)
    ));
    Ok(())
}

fn load_detector(paths: &RunPaths) -> Result<DzDetector> {
    load_model(&paths.model_or(DETECTOR))?.into_detector()
}

fn load_forecaster(paths: &RunPaths) -> Result<GnnParams> {
    Ok(load_model(&paths.model_or(FORECASTER))?.into_forecaster()?.0)
}

fn detections_csv(detections: &[DzDetection]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["agent_id", "t_start", "t_end", "score"])?;
    for d in detections {
        w.write_record([
            d.agent_id.to_string(),
            d.t_start.to_string(),
            d.t_end.to_string(),
            d.score.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Schema(e.to_string()))
}

fn run_detection(
    ctx: &Context,
    trajectories: &[Trajectory],
    detector: &DzDetector,
) -> Result<Vec<DzDetection>> {
    let Some(dt) = common_dt(trajectories)? else {
        return Ok(Vec::new());
    };
    let windows = ctx.windows(trajectories)?;
    Ok(detect_windows(&windows, detector, detector.ratio_threshold, dt))
}

fn cmd_detect(ctx: &Context, paths: &RunPaths, out: &mut Outcome) -> Result<()> {
    let trajectories = ctx.trajectories(paths)?;
    let detector = load_detector(paths)?;
    let detections = run_detection(ctx, &trajectories, &detector)?;
    out.write(paths.output(DETECTIONS), &detections_csv(&detections)?)?;
    out.summary.push(format!("{} detected dilemma intervals", detections.len()));
    Ok(())
}

fn cmd_train_forecaster(ctx: &Context, paths: &RunPaths, out: &mut Outcome) -> Result<()> {
    let trajectories = ctx.trajectories(paths)?;
    let events = ctx.events(paths, &trajectories)?;
    let fc = &ctx.config.forecaster;
    let scenes = label_scenes(
        &trajectories,
        &events,
        &ctx.map,
        &ctx.signal,
        fc.horizon_steps,
        fc.frame_stride,
    )?;
    let trained = train_forecaster(&scenes, fc)?;
    let path = paths.output(FORECASTER);
    save_model(
        &path,
        &Model::Forecaster {
            params: trained.params,
            head_weights: trained.weights,
            config: *fc,
        },
    )?;
    out.artifacts.push(path);
    out.summary.push(format!(
        "trained forecaster on {} scenes, final loss {:.4}",
        scenes.len(),
        trained.loss_trace.last().copied().unwrap_or(f64::NAN)
    ));
    Ok(())
}

fn cmd_forecast(ctx: &Context, paths: &RunPaths, out: &mut Outcome) -> Result<()> {
    use rayon::prelude::*;
    let trajectories = ctx.trajectories(paths)?;
    let params = load_forecaster(paths)?;
    let dt = common_dt(&trajectories)?.unwrap_or(ctx.config.sim.dt);
    let frames: Vec<_> = scenes_by_frame(&trajectories).into_iter().collect();
    let rows: Vec<Vec<String>> = frames
        .par_iter()
        .flat_map_iter(|(frame, scene)| {
            let graph = build_scene_graph(scene, &ctx.map, &ctx.signal);
            forecast(&graph, &params).into_iter().map(move |p| {
                let advice = advise_maneuver(&p);
                vec![
                    frame.to_string(),
                    (*frame as f64 * dt).to_string(),
                    p.agent_id.to_string(),
                    p.p_dilemma.to_string(),
                    p.p_causal.to_string(),
                    p.p_pass.to_string(),
                    advice.acceleration().to_string(),
                ]
            })
        })
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "frame", "time", "agent_id", "p_dilemma", "p_causal", "p_pass", "advised_accel",
    ])?;
    let warned = rows.iter().filter(|r| r[3].parse::<f64>().is_ok_and(|p| p > 0.5)).count();
    for r in &rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Schema(e.to_string()))?;
    out.write(paths.output(FORECASTS), &bytes)?;
    out.summary.push(format!("{} node forecasts, {warned} with p_dilemma > 0.5", rows.len()));
    Ok(())
}

/// Headline numbers of a detector on held-out data.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub windows: usize,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
    pub auc: f64,
    pub baseline_auc: f64,
    pub iou: f64,
}

impl EvaluationReport {
    pub fn lines(&self) -> Vec<String> {
        vec![
            format!("windows = {}", self.windows),
            format!("tp = {}", self.tp),
            format!("fp = {}", self.fp),
            format!("tn = {}", self.tn),
            format!("fn = {}", self.fn_),
            format!("precision = {:.6}", self.precision),
            format!("recall = {:.6}", self.recall),
            format!("f1 = {:.6}", self.f1),
            format!("fpr = {:.6}", self.fpr),
            format!("auc = {:.6}", self.auc),
            format!("baseline_auc = {:.6}", self.baseline_auc),
            format!("iou = {:.6}", self.iou),
        ]
    }
}

/// Score the mined test windows with `classifier`, compare its ROC against
/// the deviation-sum baseline, and compute frame-level IoU between the
/// merged positive windows and `truth`.
pub fn evaluate_detector(
    classifier: &dyn WindowClassifier,
    test_windows: &[(Window, bool)],
    truth: &[DzEvent],
    dt: f64,
) -> Result<EvaluationReport> {
    let labels: Vec<bool> = test_windows.iter().map(|(_, l)| *l).collect();
    let scores: Vec<f64> = test_windows.iter().map(|(w, _)| classifier.score(w)).collect();
    let baseline: Vec<f64> = test_windows
        .iter()
        .map(|(w, _)| DeviationSumScore.score(w))
        .collect();
    let predictions: Vec<bool> = scores.iter().map(|s| *s > DECISION_THRESHOLD).collect();
    let report = classification_report(&predictions, &labels)?;
    let windows: Vec<Window> = test_windows.iter().map(|(w, _)| w.clone()).collect();
    let detections = detect_windows(&windows, classifier, 0.0, dt);
    let c = report.confusion;
    Ok(EvaluationReport {
        windows: labels.len(),
        tp: c.tp,
        fp: c.fp,
        tn: c.tn,
        fn_: c.fn_,
        precision: report.precision,
        recall: report.recall,
        f1: report.f1,
        fpr: report.fpr,
        auc: roc_points(&scores, &labels)?.auc,
        baseline_auc: roc_points(&baseline, &labels)?.auc,
        iou: interval_iou(&detections, truth)?,
    })
}

/// Frame-level IoU of detections against events.
pub fn interval_iou(detections: &[DzDetection], truth: &[DzEvent]) -> Result<f64> {
    let detected: Vec<FrameInterval> = detections
        .iter()
        .map(|d| FrameInterval::inclusive(d.agent_id, d.start_frame, d.end_frame))
        .collect();
    let truth: Vec<FrameInterval> = truth
        .iter()
        .map(|e| FrameInterval::inclusive(e.agent_id, e.start_frame, e.end_frame))
        .collect();
    temporal_iou(&detected, &truth, IouAggregation::Micro)
}

fn test_rows(paths: &RunPaths) -> Result<Vec<(Window, bool)>> {
    let rows = mined_rows(paths, "test")?;
    if rows.is_empty() {
        return Err(Error::EmptyMiningResult { threshold: f64::NAN });
    }
    Ok(rows.iter().map(|r| (row_window(r), r.is_dz)).collect())
}

/// Report on the mined test split, plus IoU of detection run over every
/// window of the test agents as a stricter secondary figure.
fn cmd_evaluate(ctx: &Context, paths: &RunPaths, out: &mut Outcome) -> Result<()> {
    let trajectories = ctx.trajectories(paths)?;
    let events = ctx.events(paths, &trajectories)?;
    let detector = load_detector(paths)?;
    let dt = common_dt(&trajectories)?.unwrap_or(ctx.config.sim.dt);
    let test: Vec<Trajectory> = trajectories
        .into_iter()
        .filter(|t| ctx.config.mining.is_test(t.agent_id))
        .collect();
    let truth: Vec<DzEvent> = events
        .into_iter()
        .filter(|e| ctx.config.mining.is_test(e.agent_id))
        .collect();
    let report = evaluate_detector(&detector, &test_rows(paths)?, &truth, dt)?;
    let all_windows = interval_iou(&run_detection(ctx, &test, &detector)?, &truth)?;
    let mut lines = report.lines();
    lines.push(format!("iou_all_windows = {all_windows:.6}"));
    out.write(paths.output(REPORT), &text_lines(&lines))?;
    out.summary.extend(lines);
    Ok(())
}

fn cmd_export_roc(_ctx: &Context, paths: &RunPaths, out: &mut Outcome) -> Result<()> {
    let detector = load_detector(paths)?;
    let rows = test_rows(paths)?;
    let labels: Vec<bool> = rows.iter().map(|(_, l)| *l).collect();
    let curve = |c: &dyn WindowClassifier| -> Result<RocCurve> {
        let scores: Vec<f64> = rows.iter().map(|(w, _)| c.score(w)).collect();
        roc_points(&scores, &labels)
    };
    let trained = curve(&detector)?;
    let baseline = curve(&DeviationSumScore)?;
    out.write(paths.output(ROC), &roc_csv(&trained)?)?;
    out.write(paths.output(ROC_BASELINE), &roc_csv(&baseline)?)?;
    out.summary.push(format!(
        "auc {:.4} (deviation-sum baseline {:.4})",
        trained.auc, baseline.auc
    ));
    Ok(())
}

fn cmd_export_deviations(ctx: &Context, paths: &RunPaths, out: &mut Outcome) -> Result<()> {
    let trajectories = ctx.trajectories(paths)?;
    let events = ctx.events(paths, &trajectories)?;
    let by_agent = events_by_agent(&events);
    let windows = ctx.windows(&trajectories)?;
    let bytes = windows_csv(windows.iter().map(|w| (w, window_label(w, &by_agent))), None)?;
    out.write(paths.output(DEVIATIONS), &bytes)?;
    out.summary.push(format!("{} deviation windows", windows.len()));
    Ok(())
}

fn cmd_maneuver(ctx: &Context, paths: &RunPaths, out: &mut Outcome) -> Result<()> {
    let trajectories = ctx.trajectories(paths)?;
    let events = ctx.events(paths, &trajectories)?;
    let params = load_forecaster(paths)?;
    let mc = &ctx.config.maneuver;
    let cases = sample_cases(&trajectories, &events, &ctx.map, &ctx.signal, &params, mc)?;
    let report = maneuver_experiment(&cases, &trajectories, &ctx.map, &ctx.predictor, &ctx.signal, mc)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bucket", "action", "cases", "collision_free", "percent"])?;
    let mut grid: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for c in &report.cells {
        let bucket = match c.bucket {
            PassBucket::Pass => "p_pass>0.5",
            PassBucket::Stop => "p_pass<=0.5",
        };
        w.write_record([
            bucket.to_string(),
            c.action.to_string(),
            c.cases.to_string(),
            c.collision_free.to_string(),
            format!("{:.1}", c.percent()),
        ])?;
        grid.entry(bucket)
            .or_default()
            .push(format!("{:+}: {:.0}%", c.action, c.percent()));
    }
    let bytes = w.into_inner().map_err(|e| Error::Schema(e.to_string()))?;
    out.write(paths.output(MANEUVER), &bytes)?;
    for (bucket, cells) in grid.iter().rev() {
        out.summary.push(format!("{bucket}  {}", cells.join("  ")));
    }
    Ok(())
}
