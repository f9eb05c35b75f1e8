//! Ten simulated minutes at the standard roundabout, written to CSV.
//!
//! Run with `cargo run --release --example simulate_scene [OUT_DIR]`.

use std::path::PathBuf;

use roundabout_dz::io::{events_csv, trajectories_csv, write_file};
use roundabout_dz::signal::SignalParams;
use roundabout_dz::sim::{simulate, standard_map, SimConfig};

fn main() -> roundabout_dz::Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("dz-simulate-scene"));
    let map = standard_map();
    let mut config = SimConfig {
        duration: 600.0,
        seed: 3,
        ..SimConfig::default()
    };
    config.profiles.dz_brake_probability = 1.0;
    let result = simulate(&map, &config, &SignalParams::default())?;

    let frames: usize = result.trajectories.iter().map(|t| t.len()).sum();
    println!(
        "{} vehicles, {frames} states, {} dilemma events, {} collisions",
        result.trajectories.len(),
        result.ground_truth_events.len(),
        result.collisions.len()
    );
    for e in result.ground_truth_events.iter().take(5) {
        println!(
            "  agent {:>4} warned {:.1}-{:.1} s by {:?}",
            e.agent_id, e.t_start, e.t_end, e.cause_id
        );
    }
    write_file(&out.join("trajectories.csv"), &trajectories_csv(&result.trajectories)?)?;
    write_file(&out.join("events.csv"), &events_csv(&result.ground_truth_events)?)?;
    println!("wrote {}", out.display());
    Ok(())
}
