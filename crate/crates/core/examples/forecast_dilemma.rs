//! Train the scene-graph forecaster on simulated traffic and print its
//! forecast and advice for one warned vehicle.
//!
//! Run with `cargo run --release --example forecast_dilemma`.

use roundabout_dz::forecaster::{
    advise_maneuver, build_scene_graph, forecast, head_counts, label_scenes, train_forecaster,
    ForecasterConfig, HEAD_NAMES,
};
use roundabout_dz::signal::{scenes_by_frame, SignalParams};
use roundabout_dz::sim::{simulate, standard_map, SimConfig};

fn main() -> roundabout_dz::Result<()> {
    let map = standard_map();
    let signal = SignalParams::default();
    let sim = simulate(
        &map,
        &SimConfig {
            duration: 3600.0 * 2.0,
            ..SimConfig::default()
        },
        &signal,
    )?;
    let config = ForecasterConfig::default();
    let scenes = label_scenes(
        &sim.trajectories,
        &sim.ground_truth_events,
        &map,
        &signal,
        config.horizon_steps,
        config.frame_stride,
    )?;
    let (pos, nodes) = head_counts(&scenes);
    for (name, p) in HEAD_NAMES.iter().zip(pos) {
        println!("{name}: {p} positive of {nodes} nodes");
    }
    let trained = train_forecaster(&scenes, &config)?;
    println!(
        "loss {:.3} -> {:.3}",
        trained.loss_trace[0],
        trained.loss_trace[trained.loss_trace.len() - 1]
    );

    let Some(event) = sim.ground_truth_events.first() else {
        println!("no dilemma event to inspect");
        return Ok(());
    };
    let frames = scenes_by_frame(&sim.trajectories);
    let frame = event.start_frame - config.horizon_steps as i64 / 2;
    let scene = &frames[&frame];
    let graph = build_scene_graph(scene, &map, &signal);
    println!("frame {frame}: {} agents, {} edges", graph.nodes.len(), graph.edges.len());
    for p in forecast(&graph, &trained.params) {
        let advice = advise_maneuver(&p);
        let marker = if p.agent_id == event.agent_id { "*" } else { " " };
        println!(
            "{marker} agent {:>4}: dilemma {:.2} causal {:.2} pass {:.2} -> {:?} {:+.0} m/s²",
            p.agent_id,
            p.p_dilemma,
            p.p_causal,
            p.p_pass,
            advice.action,
            advice.acceleration()
        );
    }
    Ok(())
}
