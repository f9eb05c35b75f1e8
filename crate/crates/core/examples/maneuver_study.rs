//! Replay warned approaches under fixed ego accelerations and tabulate the
//! collision-free share per forecast bucket.
//!
//! Run with `cargo run --release --example maneuver_study`.

use roundabout_dz::forecaster::{label_scenes, train_forecaster, ForecasterConfig};
use roundabout_dz::maneuver::{maneuver_experiment, sample_cases, ManeuverConfig, PassBucket};
use roundabout_dz::predictor::Predictor;
use roundabout_dz::signal::SignalParams;
use roundabout_dz::sim::{simulate, standard_map, SimConfig};

fn main() -> roundabout_dz::Result<()> {
    let map = standard_map();
    let signal = SignalParams::default();
    let mut sim_config = SimConfig {
        duration: 3600.0 * 8.0,
        ..SimConfig::default()
    };
    sim_config.profiles.dz_brake_probability = 0.25;
    let sim = simulate(&map, &sim_config, &signal)?;

    let fc = ForecasterConfig::default();
    let scenes = label_scenes(
        &sim.trajectories,
        &sim.ground_truth_events,
        &map,
        &signal,
        fc.horizon_steps,
        fc.frame_stride,
    )?;
    let trained = train_forecaster(&scenes, &fc)?;

    let config = ManeuverConfig {
        cases_per_bucket: 30,
        ..ManeuverConfig::default()
    };
    let cases = sample_cases(
        &sim.trajectories,
        &sim.ground_truth_events,
        &map,
        &signal,
        &trained.params,
        &config,
    )?;
    let report = maneuver_experiment(
        &cases,
        &sim.trajectories,
        &map,
        &Predictor::default(),
        &signal,
        &config,
    )?;
    print!("{:<14}", "");
    for a in &config.actions {
        print!("{a:>+8.0}");
    }
    println!();
    for (bucket, name) in [(PassBucket::Pass, "p_pass > 0.5"), (PassBucket::Stop, "p_pass <= 0.5")] {
        print!("{name:<14}");
        for &a in &config.actions {
            print!("{:>7.0}%", report.cell(bucket, a).unwrap().percent());
        }
        println!("   best {:?}", report.best_actions(bucket));
    }
    Ok(())
}
