use proptest::prelude::*;
use roundabout_dz::io::{
    events_csv, load_events, load_model, load_trajectories, map_toml, parse_map, save_model,
    trajectories_csv, write_file, ColumnMapping, Model, RunConfig,
};
use roundabout_dz::signal::SignalParams;
use roundabout_dz::sim::{simulate, standard_map, SimConfig};

#[test]
fn simulated_csv_round_trips_byte_for_byte() {
    let map = standard_map();
    let cfg = SimConfig {
        duration: 600.0,
        ..SimConfig::default()
    };
    let result = simulate(&map, &cfg, &SignalParams::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let traj_path = dir.path().join("nested/trajectories.csv");
    let bytes = trajectories_csv(&result.trajectories).unwrap();
    write_file(&traj_path, &bytes).unwrap();
    let loaded = load_trajectories(&traj_path, &ColumnMapping::new()).unwrap();
    assert_eq!(loaded, result.trajectories);
    assert_eq!(trajectories_csv(&loaded).unwrap(), bytes);

    let events_path = dir.path().join("events.csv");
    write_file(&events_path, &events_csv(&result.ground_truth_events).unwrap()).unwrap();
    assert_eq!(load_events(&events_path, cfg.dt).unwrap(), result.ground_truth_events);
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_trajectories(&dir.path().join("absent.csv"), &ColumnMapping::new()).unwrap_err();
    assert_eq!(err.class(), "io");
}

#[test]
fn standard_map_round_trips() {
    let map = standard_map();
    assert_eq!(parse_map(&map_toml(&map).unwrap()).unwrap(), map);
}

#[test]
fn relative_map_path_resolves_against_config_dir() {
    let dir = tempfile::tempdir().unwrap();
    write_file(&dir.path().join("maps/site.toml"), map_toml(&standard_map()).unwrap().as_bytes()).unwrap();
    let config = RunConfig::from_toml("map = \"maps/site.toml\"\n").unwrap();
    assert_eq!(config.load_map(Some(dir.path())).unwrap(), standard_map());
}

#[test]
fn model_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("forecaster.json");
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
    let config = roundabout_dz::forecaster::ForecasterConfig::default();
    let params = roundabout_dz::forecaster::GnnParams::init(config.hidden, config.rounds, &mut rng);
    let model = Model::Forecaster {
        params: params.clone(),
        head_weights: Default::default(),
        config,
    };
    save_model(&path, &model).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(loaded, model);
    assert_eq!(loaded.clone().into_forecaster().unwrap().0, params);
    assert_eq!(loaded.into_detector().unwrap_err().class(), "model");
}

proptest! {
    #[test]
    fn config_round_trips(seed in any::<u32>(), duration in 60.0..7200.0f64, brake in 0.0..1.0f64, epochs in 1usize..1000) {
        let mut config = RunConfig::default();
        config.reseed(u64::from(seed));
        config.sim.duration = duration;
        config.sim.profiles.dz_brake_probability = brake;
        config.train.epochs = epochs;
        config.validate().unwrap();
        let text = config.to_toml().unwrap();
        prop_assert_eq!(RunConfig::from_toml(&text).unwrap(), config);
    }
}
