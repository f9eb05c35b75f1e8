//! Mine deviation windows from four simulated hours, train the classifier on
//! most agents and score the held-out ones.
//!
//! Run with `cargo run --release --example detect_events`.

use roundabout_dz::deviation::{
    compute_windows, detect_windows, mine_windows, train_detector, DeviationSumScore,
    WindowClassifier, DEFAULT_RATIO_THRESHOLD,
};
use roundabout_dz::metrics::{classification_report, roc_points};
use roundabout_dz::mlp::TrainConfig;
use roundabout_dz::pipeline::interval_iou;
use roundabout_dz::predictor::Predictor;
use roundabout_dz::signal::SignalParams;
use roundabout_dz::sim::{simulate, standard_map, SimConfig};

fn main() -> roundabout_dz::Result<()> {
    let map = standard_map();
    let signal = SignalParams::default();
    let mut config = SimConfig {
        duration: 3600.0 * 4.0,
        ..SimConfig::default()
    };
    config.profiles.dz_brake_probability = 1.0;
    let sim = simulate(&map, &config, &signal)?;
    let events = &sim.ground_truth_events;
    println!("{} vehicles, {} dilemma events", sim.trajectories.len(), events.len());

    let windows = compute_windows(&sim.trajectories, &map, &Predictor::default(), &signal)?;
    let is_test = |id: u32| id.is_multiple_of(5);
    let (test, train): (Vec<_>, Vec<_>) = windows.into_iter().partition(|w| is_test(w.agent_id));
    let mined_train = mine_windows(&train, events, DEFAULT_RATIO_THRESHOLD)?;
    let mined_test = mine_windows(&test, events, DEFAULT_RATIO_THRESHOLD)?;
    println!("mined {} training / {} test windows", mined_train.len(), mined_test.len());

    let (detector, loss) = train_detector(&mined_train, DEFAULT_RATIO_THRESHOLD, &TrainConfig::default())?;
    println!("loss {:.3} -> {:.3}", loss[0], loss[loss.len() - 1]);

    let labels: Vec<bool> = mined_test.iter().map(|m| m.is_dz).collect();
    let scores: Vec<f64> = mined_test.iter().map(|m| detector.score(&m.window)).collect();
    let predictions: Vec<bool> = scores.iter().map(|s| *s > 0.5).collect();
    let r = classification_report(&predictions, &labels)?;
    println!("test recall {:.3}, fpr {:.3}, f1 {:.3}", r.recall, r.fpr, r.f1);

    let baseline: Vec<f64> = mined_test.iter().map(|m| DeviationSumScore.score(&m.window)).collect();
    println!(
        "AUC {:.3} (deviation sum alone {:.3})",
        roc_points(&scores, &labels)?.auc,
        roc_points(&baseline, &labels)?.auc
    );

    // Merged positives among the mined test windows, then the same detector
    // run over every window of the test agents.
    let truth: Vec<_> = events.iter().filter(|e| is_test(e.agent_id)).cloned().collect();
    let mined_windows: Vec<_> = mined_test.iter().map(|m| m.window.clone()).collect();
    for (name, windows) in [("mined test windows", &mined_windows), ("all test windows", &test)] {
        let detections = detect_windows(windows, &detector, DEFAULT_RATIO_THRESHOLD, config.dt);
        println!(
            "{name}: {} detections, frame IoU {:.3}",
            detections.len(),
            interval_iou(&detections, &truth)?
        );
    }
    Ok(())
}
