//! Mode distribution and most-likely rollout for a car approaching the
//! ring, scored against two possible futures.
//!
//! Run with `cargo run --example predict_trajectory`.

use roundabout_dz::geometry::{AgentState, Vec2};
use roundabout_dz::predictor::{displacement_errors, Mode, PredictionContext, Predictor};
use roundabout_dz::signal::SignalState;
use roundabout_dz::sim::standard_map;

fn main() {
    let map = standard_map();
    let leg = &map.legs[0];
    let predictor = Predictor::default();
    let dt = predictor.config.dt;
    let dir = (leg.centerline()[1] - leg.centerline()[0]).normalized();
    let start = leg.yield_point() - dir * 40.0;

    // Constant 9 m/s for the history window.
    let history: Vec<AgentState> = (0..predictor.config.window_len())
        .map(|k| AgentState::moving(start + dir * (9.0 * dt * k as f64), dir * 9.0, 4.5, 1.8))
        .collect();
    let now = history.last().unwrap().position;
    let distance = leg.yield_point().distance(now);

    for signal in [SignalState::Green, SignalState::Yellow, SignalState::Red] {
        let ctx = PredictionContext {
            signal,
            leg_id: Some(leg.leg_id()),
            distance_to_yield: Some(distance),
        };
        let dist = predictor.distribution(&history, &ctx).unwrap();
        let probs: Vec<String> = Mode::ALL
            .iter()
            .map(|m| format!("{m:?} {:.2}", dist.probability(*m)))
            .collect();
        println!("{signal:?}: {}  -> {:?}", probs.join(", "), dist.most_likely());
    }

    let ctx = PredictionContext {
        signal: SignalState::Green,
        leg_id: Some(leg.leg_id()),
        distance_to_yield: Some(distance),
    };
    let pred = predictor.predict(&history, &ctx, &map).unwrap();
    let steps = pred.positions.len();
    let cruise: Vec<Vec2> = (1..=steps).map(|k| now + dir * (9.0 * dt * k as f64)).collect();
    let braking: Vec<Vec2> = (1..=steps)
        .map(|k| {
            let t = dt * k as f64;
            now + dir * (9.0 * t - 0.5 * 4.0 * t * t)
        })
        .collect();
    for (name, truth) in [("kept speed", &cruise), ("braked at 4 m/s²", &braking)] {
        let (ade, per_step) = displacement_errors(&pred, truth).unwrap();
        println!("{name}: ADE {ade:.3} m, FDE {:.3} m", per_step.last().unwrap());
    }
}
