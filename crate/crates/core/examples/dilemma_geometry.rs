//! Dilemma-zone boundaries across the approach speed range.
//!
//! Run with `cargo run --example dilemma_geometry`.

use roundabout_dz::dilemma::{approach_speed, classify_zone, s_pass, DzParams, ZoneKind};

fn main() {
    let params = DzParams::default();
    println!("pass distance: {:.2} m", s_pass(&params));
    println!("{:>8} {:>8} {:>10} {:>10}  zone", "mph", "m/s", "s_stop", "interval");
    for mph in [15.0, 17.5, 20.0, 22.5, 25.0] {
        let v = approach_speed(mph);
        let z = classify_zone(v, &params);
        let kind = match z.kind {
            ZoneKind::Dilemma => "dilemma",
            ZoneKind::Option => "option",
        };
        println!(
            "{mph:>8.1} {v:>8.2} {:>10.2} {:>4.1}-{:<5.1}  {kind}",
            z.s_stop, z.interval.0, z.interval.1
        );
    }

    // A longer reaction time widens the zone.
    let slow = DzParams {
        reaction_time: 1.5,
        ..params
    };
    let z = classify_zone(approach_speed(20.0), &slow);
    println!("20 mph with 1.5 s reaction: {:.2}..{:.2} m", z.interval.0, z.interval.1);
}
