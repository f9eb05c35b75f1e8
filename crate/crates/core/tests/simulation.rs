use roundabout_dz::geometry::{AgentState, Trajectory};
use roundabout_dz::signal::{assess_agent, scenes_by_frame, SignalParams};
use roundabout_dz::sim::{
    collision_check, simulate, standard_map, DriverProfile, Origin, ScheduledArrival, SimConfig,
};

fn config(duration: f64, brake: f64, seed: u64) -> SimConfig {
    let mut c = SimConfig {
        duration,
        seed,
        ..SimConfig::default()
    };
    c.profiles.dz_brake_probability = brake;
    c
}

#[test]
fn same_seed_gives_identical_result() {
    let map = standard_map();
    let signal = SignalParams::default();
    let a = simulate(&map, &config(900.0, 0.5, 21), &signal).unwrap();
    let b = simulate(&map, &config(900.0, 0.5, 21), &signal).unwrap();
    assert!(!a.trajectories.is_empty());
    assert_eq!(a, b);
    let c = simulate(&map, &config(900.0, 0.5, 22), &signal).unwrap();
    assert_ne!(a.trajectories, c.trajectories);
}

#[test]
fn no_teleportation() {
    let map = standard_map();
    let cfg = config(1800.0, 1.0, 3);
    let result = simulate(&map, &cfg, &SignalParams::default()).unwrap();
    let max_speed = cfg.profiles.desired_speed[1] * 1.5;
    let max_accel = cfg.profiles.hard_brake_decel[1];
    let bound = (max_speed + max_accel * cfg.dt) * cfg.dt;
    for t in &result.trajectories {
        for pair in t.states.windows(2) {
            let step = pair[0].state.position.distance(pair[1].state.position);
            assert!(step <= bound, "agent {} moved {step} m in one frame", t.agent_id);
            assert!((pair[1].time - pair[0].time - cfg.dt).abs() < 1e-9);
        }
    }
}

#[test]
fn compliant_drivers_never_collide() {
    let map = standard_map();
    for seed in [1, 2, 3] {
        let result = simulate(&map, &config(600.0, 0.0, seed), &SignalParams::default()).unwrap();
        assert!(result.collisions.is_empty(), "seed {seed}: {:?}", result.collisions);
    }
}

#[test]
fn recorded_frames_never_overlap_when_collision_free() {
    let map = standard_map();
    let result = simulate(&map, &config(600.0, 0.0, 4), &SignalParams::default()).unwrap();
    for scene in scenes_by_frame(&result.trajectories).values() {
        for (i, a) in scene.iter().enumerate() {
            for b in &scene[i + 1..] {
                assert!(!collision_check(&a.state, &b.state), "{} and {} overlap", a.id, b.id);
            }
        }
    }
}

#[test]
fn event_frames_satisfy_the_dilemma_predicate() {
    let map = standard_map();
    let signal = SignalParams::default();
    let result = simulate(&map, &config(3600.0, 0.5, 8), &signal).unwrap();
    assert!(!result.ground_truth_events.is_empty());
    let scenes = scenes_by_frame(&result.trajectories);
    for e in &result.ground_truth_events {
        for frame in e.start_frame..=e.end_frame {
            let scene = &scenes[&frame];
            let me = scene.iter().find(|a| a.id == e.agent_id).unwrap();
            let s = assess_agent(me, scene, &map, &signal).unwrap();
            assert!(s.is_event(signal.include_red), "agent {} frame {frame}", e.agent_id);
        }
    }
}

fn speed_drops(t: &Trajectory, first: i64, last: i64) -> f64 {
    (first..=last)
        .filter_map(|f| {
            let a = t.at_frame(f)?;
            let b = t.at_frame(f + 1)?;
            Some((a.state.speed() - b.state.speed()) / (b.time - a.time))
        })
        .fold(0.0, f64::max)
}

#[test]
fn forced_conflict_triggers_a_hard_brake() {
    let map = standard_map();
    let signal = SignalParams::default();
    let profile = DriverProfile {
        desired_speed: 10.0,
        reaction_time: 1.0,
        hard_brake_decel: 7.0,
        dz_brake_probability: 1.0,
    };
    let conflict = map.angle_of(map.legs[0].conflict_point());
    let mut with_events = 0;
    for k in 0..40 {
        let cfg = SimConfig {
            duration: 40.0,
            arrival_rate: 0.0,
            circulating_rate: 0.0,
            scheduled: vec![
                ScheduledArrival {
                    time: 0.0,
                    origin: Origin::Leg { leg_id: 0, offset: 0.0 },
                    profile,
                    quarter_turns: 1,
                },
                ScheduledArrival {
                    time: 0.25 * k as f64,
                    origin: Origin::Ring { angle: conflict - 1.5 },
                    profile,
                    quarter_turns: 2,
                },
            ],
            ..SimConfig::default()
        };
        let result = simulate(&map, &cfg, &signal).unwrap();
        assert!(result.collisions.is_empty(), "offset {k}: {:?}", result.collisions);
        for e in &result.ground_truth_events {
            with_events += 1;
            let t = result.trajectories.iter().find(|t| t.agent_id == e.agent_id).unwrap();
            let drop = speed_drops(t, e.start_frame, e.end_frame);
            assert!(
                drop >= 0.9 * profile.hard_brake_decel,
                "offset {k}: speed drop {drop} m/s^2 during event {e:?}"
            );
        }
    }
    assert!(with_events > 0, "no ring timing produced a dilemma");
}

#[test]
fn profiles_outside_the_speed_clamp_are_rejected() {
    let bad = DriverProfile {
        desired_speed: 15.0,
        reaction_time: 1.0,
        hard_brake_decel: 7.0,
        dz_brake_probability: 0.0,
    };
    assert_eq!(bad.validate().unwrap_err().class(), "config");
    let state = AgentState::moving(Default::default(), Default::default(), 4.5, 1.8);
    assert!(collision_check(&state, &state));
}
