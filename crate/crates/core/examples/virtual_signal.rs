//! The virtual yellow light for an approaching car as a circulating car
//! closes on its conflict point.
//!
//! Run with `cargo run --example virtual_signal`.

use roundabout_dz::geometry::{AgentState, SceneAgent};
use roundabout_dz::signal::{assess_agent, separation, time_to_collision, time_to_stop, SignalParams};
use roundabout_dz::sim::standard_map;

fn main() {
    let map = standard_map();
    let params = SignalParams::default();
    let leg = &map.legs[0];

    // Approaching car 13 m before the yield line at 10 m/s.
    let centerline = leg.centerline();
    let dir = (centerline[1] - centerline[0]).normalized();
    let ego = SceneAgent {
        id: 1,
        state: AgentState::moving(leg.yield_point() - dir * 13.0, dir * 10.0, 4.5, 1.8),
    };

    let conflict_angle = map.angle_of(leg.conflict_point());
    println!("{:>10} {:>8} {:>8} {:>8}  signal", "lead [m]", "ttc", "tts", "soc");
    for lead in [30.0, 20.0, 14.0, 11.0, 8.0, 5.0, 2.0] {
        let radius = map.circulating_radius();
        let angle = conflict_angle - lead / radius;
        let pos = map.ring_point(radius, angle);
        let vel = map.ring_tangent(angle) * 9.0;
        let ring_car = SceneAgent {
            id: 2,
            state: AgentState::moving(pos, vel, 4.5, 1.8),
        };
        let scene = [ego, ring_car];
        let s = assess_agent(&ego, &scene, &map, &params).expect("ego is approaching");
        let ttc = time_to_collision(&ring_car.state, leg, &map).unwrap();
        let tts = time_to_stop(&ego.state, &params.dz);
        let soc = separation(&ego.state, &ring_car.state);
        let note = if s.is_event(params.include_red) { "  dilemma event" } else { "" };
        println!("{lead:>10.1} {ttc:>8.2} {tts:>8.2} {soc:>8.2}  {:?}{note}", s.signal);
    }
}
