//! Integration tests: config files on disk, CSV outputs, federation rounds
//! over real learners, and the central-parameter carry rule.

use fedsched::agnostic::PartitionSpec;
use fedsched::config::{ArrivalEvent, EdgeGroup, ExperimentConfig};
use fedsched::dqn::{DqnConfig, EdgeLearner, SlotClock};
use fedsched::federation::{fed_ds_round, CentralPolicy};
use fedsched::nn::PolicyParams;
use fedsched::orchestrator::{run_simulation, spawn_edge};
use fedsched::selection::SelectionPolicy;
use fedsched::tasks::{load_scenario, TaskKind};

fn small_config(policy: SelectionPolicy) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk_preset();
    cfg.policy = policy;
    cfg.rounds = 4;
    cfg.slots_per_round = 25;
    cfg.threads = 1;
    cfg.log_central_checksums = true;
    cfg.dqn.hidden_layers = vec![16];
    cfg.dqn.train_interval = 10;
    cfg.dqn.target_update_interval = 25;
    for task in &mut cfg.tasks {
        task.edges = vec![EdgeGroup {
            scenario: "A".into(),
            count: 2,
        }];
    }
    cfg
}

#[test]
fn csv_outputs_land_on_disk_with_consistent_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(SelectionPolicy::FlPf);
    cfg.out_dir = Some(dir.path().to_path_buf());
    let log = run_simulation(&cfg).unwrap();

    let rewards = std::fs::read_to_string(dir.path().join("rewards.csv")).unwrap();
    let lines: Vec<&str> = rewards.lines().collect();
    // Header plus one row per edge per slot.
    assert_eq!(lines.len(), 1 + (6 * 4 * 25));
    assert_eq!(
        lines[0],
        "slot,edge_id,task,scenario,raw_reward,normalized_reward"
    );

    let participants = std::fs::read_to_string(dir.path().join("participants.csv")).unwrap();
    assert_eq!(participants.lines().count(), 1 + 4 * 3);
    assert!(participants
        .lines()
        .next()
        .unwrap()
        .ends_with("central_checksum"));

    let selection = std::fs::read_to_string(dir.path().join("selection.csv")).unwrap();
    assert_eq!(selection.lines().count(), 1 + 4 * 3);

    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 3);
    assert_eq!(log.summary.len(), 3);
}

#[test]
fn config_file_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(SelectionPolicy::FlGreedy);
    let path = dir.path().join("experiment.toml");
    std::fs::write(&path, cfg.to_toml_string()).unwrap();
    let loaded = ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfg, loaded);

    let a = run_simulation(&cfg).unwrap();
    let b = run_simulation(&loaded).unwrap();
    assert_eq!(a.rewards_csv(), b.rewards_csv());
}

#[test]
fn unselected_tasks_carry_central_parameters_bitwise() {
    // Under No-FL nothing is ever selected: the central checksum column must
    // be constant per task across every round.
    let log = run_simulation(&small_config(SelectionPolicy::NoFl)).unwrap();
    for task in ["A", "B", "C"] {
        let sums: Vec<u64> = log
            .participants
            .iter()
            .filter(|r| r.task == task)
            .map(|r| r.central_checksum.unwrap())
            .collect();
        assert!(!sums.is_empty());
        assert!(sums.windows(2).all(|w| w[0] == w[1]), "task {task} drifted");
    }

    // Under Bench every task federates whenever an edge is available, so the
    // checksum must change between consecutive rounds somewhere.
    let log = run_simulation(&small_config(SelectionPolicy::Bench)).unwrap();
    let sums: Vec<u64> = log
        .participants
        .iter()
        .filter(|r| r.task == "A")
        .map(|r| r.central_checksum.unwrap())
        .collect();
    assert!(sums.windows(2).any(|w| w[0] != w[1]));
}

#[test]
fn federation_round_broadcasts_identical_parameters_to_all_edges() {
    let master = 11;
    let cfg = load_scenario(TaskKind::DataGathering, "A").unwrap();
    let partition = PartitionSpec::default_for(TaskKind::DataGathering);
    let dims = EdgeLearner::network_dims(&partition, &[], &[16]);
    let mut init_rng = fedsched::rng::stream(master, fedsched::rng::domain::CENTRAL_INIT, 0);
    let init = PolicyParams::init(&dims, &mut init_rng);
    let mut central = CentralPolicy {
        task_index: 0,
        params: init.clone(),
        round_index: 0,
    };

    let dqn = DqnConfig {
        hidden_layers: vec![16],
        learning_rate: 1e-4,
        train_interval: 5,
        target_update_interval: 10,
        ..DqnConfig::default()
    };
    let mut edges: Vec<EdgeLearner> = (0..3)
        .map(|id| {
            EdgeLearner::new(
                id,
                0,
                cfg.clone(),
                partition.clone(),
                init.clone(),
                master,
                500,
            )
            .unwrap()
        })
        .collect();
    let clock = SlotClock {
        global_slot: 0,
        total_slots: 100,
    };
    for edge in &mut edges {
        edge.run_local_slots(50, clock, &dqn).unwrap();
    }

    // Edge 1 is unavailable this round; its training is abandoned but it
    // still receives the broadcast.
    let available = [true, false, true];
    {
        let mut refs: Vec<&mut EdgeLearner> = edges.iter_mut().collect();
        fed_ds_round(&mut central, &mut refs, &available).unwrap();
    }
    assert_eq!(central.round_index, 1);
    for edge in &edges {
        assert_eq!(edge.params, central.params);
        assert_eq!(edge.round_start, central.params);
    }

    // Re-broadcast is a no-op on edge parameters.
    let before = edges[0].params.clone();
    for edge in &mut edges {
        edge.adopt_central(&central.params);
    }
    assert_eq!(edges[0].params, before);
}

#[test]
fn spawned_edges_start_from_the_given_policy() {
    let cfg = small_config(SelectionPolicy::FlPf);
    let partition = cfg.partition_for(0);
    let dims = EdgeLearner::network_dims(&partition, &[], &cfg.dqn.hidden_layers);
    let mut central_rng =
        fedsched::rng::stream(cfg.master_seed, fedsched::rng::domain::CENTRAL_INIT, 0);
    let central = PolicyParams::init(&dims, &mut central_rng);

    let edge = spawn_edge(&cfg, 0, "D", 42, central.clone()).unwrap();
    assert_eq!(edge.params, central);
    assert_eq!(edge.cfg.scenario_id, "D");
    assert_eq!(edge.state.device_count(), 8);

    assert!(spawn_edge(&cfg, 0, "nope", 43, central).is_err());
}

#[test]
fn arrival_rows_match_the_configured_event() {
    let mut cfg = small_config(SelectionPolicy::FlPf);
    cfg.arrivals.push(ArrivalEvent {
        slot: 2 * cfg.slots_per_round + 3,
        task: "B".into(),
        scenario: "E".into(),
        count: 1,
    });
    let log = run_simulation(&cfg).unwrap();
    let arrived: Vec<_> = log.rewards.iter().filter(|r| r.edge_id == 6).collect();
    // Mid-round arrivals join at their round's start.
    assert_eq!(arrived.first().unwrap().slot, 2 * cfg.slots_per_round);
    assert_eq!(arrived.first().unwrap().task, "B");
    assert_eq!(arrived.first().unwrap().scenario, "E");
    assert_eq!(arrived.len(), 2 * cfg.slots_per_round as usize);
}

#[test]
fn dump_params_writes_readable_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(SelectionPolicy::Bench);
    cfg.out_dir = Some(dir.path().to_path_buf());
    cfg.dump_params = true;
    run_simulation(&cfg).unwrap();
    for task in ["A", "B", "C"] {
        let path = dir.path().join(format!("params_{task}.txt"));
        let file = std::fs::File::open(&path).unwrap();
        let params = PolicyParams::read_snapshot(std::io::BufReader::new(file)).unwrap();
        assert!(params.is_finite());
    }
}
