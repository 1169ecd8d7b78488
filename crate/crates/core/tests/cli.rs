//! End-to-end tests of the command-line binary: exit codes, file formats,
//! determinism and the full pipeline.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ndarray::{Array2, Array3};
use tempfile::tempdir;

use multiplex_hawkes::inference::PosteriorSummary;
use multiplex_hawkes::io;
use multiplex_hawkes::model::{
    Event, EventLog, InfluenceTensor, LayerActivity, MultiplexAdjacency, MultiplexParams,
    NodeParams, ObservationWindow, ParentAssignment, ParentLabel,
};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multiplex-hawkes"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SMALL_CONFIG: &str = "\
simulation.n_nodes = 5
simulation.n_layers = 2
simulation.window = 40
hyper.background_rate = 20
hyper.influence_rate = 4
chain.iterations = 60
chain.burn_in = 20
chain.thin = 5
replications = 2
";

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("experiment.cfg");
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn read_report(path: &Path) -> HashMap<String, f64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|line| {
            let (name, value) = line.split_once(',').unwrap();
            (name.to_string(), value.parse().unwrap())
        })
        .collect()
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    assert_eq!(code(&bin(&[])), 1);
    assert_eq!(code(&bin(&["frobnicate"])), 1);
    assert_eq!(code(&bin(&["generate", "--no-such-flag"])), 1);
    assert_eq!(code(&bin(&["--help"])), 0);
    assert_eq!(code(&bin(&["--version"])), 0);
    // --seed is mandatory for simulation and inference.
    assert_eq!(code(&bin(&["simulate"])), 1);
    assert_eq!(code(&bin(&["infer"])), 1);
}

#[test]
fn generate_is_deterministic_and_files_round_trip() {
    let tmp = tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    for dir in [&a, &b] {
        let out = bin(&[
            "generate",
            "--seed",
            "11",
            "--nodes",
            "6",
            "--layers",
            "2",
            "--output-dir",
            &dir.display().to_string(),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    for file in [io::NETWORK_FILE, io::NODES_FILE, io::LAYERS_FILE] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }

    // write -> read -> write is byte-identical
    let params = io::read_params(&a).unwrap();
    fs::create_dir_all(&c).unwrap();
    io::write_params(&c, &params).unwrap();
    for file in [io::NETWORK_FILE, io::NODES_FILE, io::LAYERS_FILE] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(c.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn simulate_sweeps_windows_and_respects_bounds() {
    let tmp = tempdir().unwrap();
    let dir = tmp.path().display().to_string();
    let common = ["--nodes", "5", "--layers", "2", "--output-dir", &dir];

    let out = bin(&[&["generate", "--seed", "3"], &common[..]].concat());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = bin(&[
        &["simulate", "--seed", "5", "--window", "40", "--sweep-window", "20"],
        &common[..],
    ]
    .concat());
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    for (file, window) in [(io::EVENTS_FILE, 40.0), ("events_20.csv", 20.0)] {
        let log = io::read_event_log(&tmp.path().join(file)).unwrap();
        assert_eq!(log.window.length, window, "{file}");
        assert!(log.events.iter().all(|e| e.time <= window), "{file}");
    }
    assert!(tmp.path().join(io::ASSIGNMENT_FILE).exists());
    assert!(tmp.path().join("assignments_20.csv").exists());
}

#[test]
fn simulate_on_silent_network_writes_header_only_log() {
    let (n, k) = (3, 2);
    let nodes = NodeParams {
        background: Array2::zeros((n, k)),
        authoritative: Array2::from_elem((n, k), 0.5),
        susceptible: Array2::from_elem((n, k), 0.5),
        topic_prior: Array2::ones((n, k)),
    };
    let params = MultiplexParams::new(
        MultiplexAdjacency::empty(n, k),
        InfluenceTensor::zeros(n, k),
        nodes,
        LayerActivity::new(vec![0.5, 0.5]).unwrap(),
    )
    .unwrap();

    let tmp = tempdir().unwrap();
    io::write_params(tmp.path(), &params).unwrap();
    let out = bin(&[
        "simulate",
        "--seed",
        "1",
        "--nodes",
        "3",
        "--layers",
        "2",
        "--window",
        "40",
        "--output-dir",
        &tmp.path().display().to_string(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let text = fs::read_to_string(tmp.path().join(io::EVENTS_FILE)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2, "header and column line only: {text:?}");
    assert!(lines[0].starts_with('#'));
}

#[test]
fn infer_is_deterministic_and_background_grows_with_duplicated_log() {
    let tmp = tempdir().unwrap();
    let dir = tmp.path().display().to_string();
    let config = write_config(tmp.path(), SMALL_CONFIG);
    let common = ["--config", &config, "--output-dir", &dir];
    assert_eq!(code(&bin(&[&["generate", "--seed", "3"], &common[..]].concat())), 0);
    assert_eq!(code(&bin(&[&["simulate", "--seed", "5"], &common[..]].concat())), 0);

    let infer = ["infer", "--seed", "9", "--iterations", "60", "--burn-in", "20", "--thin", "5"];
    let out = bin(&[&infer[..], &common[..]].concat());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let first = fs::read(tmp.path().join(io::SUMMARY_NODES_FILE)).unwrap();
    let baseline = io::read_summary(tmp.path()).unwrap();

    // identical seed, identical outputs
    let out = bin(&[&infer[..], &common[..]].concat());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(first, fs::read(tmp.path().join(io::SUMMARY_NODES_FILE)).unwrap());

    // duplicating every event doubles the evidence for the background rates
    let log = io::read_event_log(&tmp.path().join(io::EVENTS_FILE)).unwrap();
    assert!(!log.events.is_empty());
    let doubled: Vec<Event> = log.events.iter().flat_map(|e| [e.clone(), e.clone()]).collect();
    let doubled = EventLog::new(doubled, log.window, log.n_nodes, log.n_layers, None).unwrap();
    let dup = tmp.path().join("doubled");
    fs::create_dir_all(&dup).unwrap();
    io::write_event_log(&dup.join(io::EVENTS_FILE), &doubled).unwrap();
    let out = bin(&[
        &infer[..],
        &["--config", &config, "--output-dir", &dup.display().to_string()][..],
    ]
    .concat());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let heavier = io::read_summary(&dup).unwrap();
    assert!(
        heavier.mean_background.sum() > baseline.mean_background.sum(),
        "doubled log: {} vs {}",
        heavier.mean_background.sum(),
        baseline.mean_background.sum()
    );
}

#[test]
fn malformed_event_log_exits_2_with_line_number() {
    let tmp = tempdir().unwrap();
    let dir = tmp.path().display().to_string();
    let events = "\
# n_nodes=3,n_layers=2,window=10
time,node,theta_0,theta_1
0.5,0,0.5,0.5
1,1,0.6,0.4
0.8,2,0.5,0.5
";
    fs::write(tmp.path().join(io::EVENTS_FILE), events).unwrap();
    let out = bin(&["infer", "--seed", "1", "--output-dir", &dir]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("events.csv:5"), "diagnostic: {}", stderr(&out));

    fs::write(
        tmp.path().join(io::EVENTS_FILE),
        events.replace("1,1,0.6,0.4", "1,1,abc,0.4"),
    )
    .unwrap();
    let out = bin(&["infer", "--seed", "1", "--output-dir", &dir]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("events.csv:4"), "diagnostic: {}", stderr(&out));
}

#[test]
fn bad_config_exits_2_with_line_number() {
    let tmp = tempdir().unwrap();
    let config = write_config(tmp.path(), "chain.iterations = 50\nchain.iterations = 60\n");
    let out = bin(&["generate", "--seed", "1", "--config", &config]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains(":2"), "diagnostic: {}", stderr(&out));
}

#[test]
fn supercritical_simulation_exits_3() {
    let tmp = tempdir().unwrap();
    let dir = tmp.path().display().to_string();
    let config = write_config(
        tmp.path(),
        "\
simulation.n_nodes = 6
simulation.n_layers = 2
simulation.window = 500
simulation.max_events = 300
hyper.influence_rate = 0.02
hyper.background_rate = 10
",
    );
    let common = ["--config", &config, "--output-dir", &dir];
    // Some seeds draw an empty graph and stay subcritical; seed 4 does not.
    assert_eq!(code(&bin(&[&["generate", "--seed", "4"], &common[..]].concat())), 0);
    let out = bin(&[&["simulate", "--seed", "4"], &common[..]].concat());
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("300"), "names the cap: {}", stderr(&out));
}

#[test]
fn pipeline_runs_end_to_end_and_is_seed_deterministic() {
    let tmp = tempdir().unwrap();
    let config = write_config(tmp.path(), SMALL_CONFIG);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = bin(&[
            "pipeline",
            "--config",
            &config,
            "--seed",
            "7",
            "--output-dir",
            &dir.display().to_string(),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    for rep in ["rep_0", "rep_1"] {
        let rep_dir = a.join(rep);
        for file in [io::EVENTS_FILE, io::REPORT_FILE, io::SUMMARY_NETWORK_FILE, io::CONVERGENCE_FILE] {
            assert!(rep_dir.join(file).exists(), "{rep}/{file}");
        }
    }
    assert!(!a.join("rep_2").exists(), "config caps replications at 2");

    // aggregated report is the mean over replications
    let top = read_report(&a.join(io::REPORT_FILE));
    let rep0 = read_report(&a.join("rep_0").join(io::REPORT_FILE));
    let rep1 = read_report(&a.join("rep_1").join(io::REPORT_FILE));
    for (name, value) in &top {
        let expect = (rep0[name] + rep1[name]) / 2.0;
        assert!((value - expect).abs() < 1e-9, "{name}: {value} vs {expect}");
    }

    assert_eq!(
        fs::read(a.join(io::REPORT_FILE)).unwrap(),
        fs::read(b.join(io::REPORT_FILE)).unwrap(),
        "same seed, same aggregate report"
    );
}

#[test]
fn evaluate_scores_truth_against_itself_perfectly() {
    let (n, k) = (3, 2);
    let mut adjacency = MultiplexAdjacency::empty(n, k);
    adjacency.set(0, 1, 0, true);
    let mut influence = InfluenceTensor::zeros(n, k);
    influence.set(0, 1, 0, 1.5);
    let nodes = NodeParams {
        background: Array2::from_elem((n, k), 0.01),
        authoritative: Array2::from_elem((n, k), 0.5),
        susceptible: Array2::from_elem((n, k), 0.5),
        topic_prior: Array2::ones((n, k)),
    };
    let params = MultiplexParams::new(
        adjacency,
        influence,
        nodes,
        LayerActivity::new(vec![0.5, 0.5]).unwrap(),
    )
    .unwrap();

    let events = vec![
        Event::new(1.0, 0, vec![0.7, 0.3]).unwrap(),
        Event::new(2.0, 1, vec![0.7, 0.3]).unwrap(),
        Event::new(3.0, 2, vec![0.4, 0.6]).unwrap(),
    ];
    let truth = ParentAssignment::new(vec![
        ParentLabel::Spontaneous { layer: 0 },
        ParentLabel::Triggered { parent: 0, layer: 0 },
        ParentLabel::Spontaneous { layer: 1 },
    ]);
    let _log = EventLog::new(events, ObservationWindow::new(10.0).unwrap(), n, k, Some(truth.clone())).unwrap();

    let mut edge_probability = Array3::zeros((n, n, k));
    edge_probability[(0, 1, 0)] = 1.0;
    let summary = PosteriorSummary {
        mean_influence: params.influence.as_array().clone(),
        mean_background: params.nodes.background.clone(),
        edge_probability,
        mean_pi: params.layer_activity.pi.clone(),
        mean_authoritative: params.nodes.authoritative.clone(),
        mean_susceptible: params.nodes.susceptible.clone(),
        parent_frequencies: truth.labels.iter().map(|&l| HashMap::from([(l, 1.0)])).collect(),
        retained: 1,
        n_nodes: n,
        n_layers: k,
    };

    let tmp = tempdir().unwrap();
    io::write_params(tmp.path(), &params).unwrap();
    io::write_assignment(&tmp.path().join(io::ASSIGNMENT_FILE), &truth, k).unwrap();
    io::write_summary(tmp.path(), &summary).unwrap();
    io::write_assignment_trace(&tmp.path().join(io::TRACE_ASSIGNMENTS_FILE), &[truth], k).unwrap();

    let out = bin(&["evaluate", "--output-dir", &tmp.path().display().to_string()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = read_report(&tmp.path().join(io::REPORT_FILE));
    assert_eq!(report["mae_influence"], 0.0);
    assert_eq!(report["false_edge_mass"], 0.0);
    assert_eq!(report["tae_lambda"], 0.0);
    assert_eq!(report["tae_authoritative"], 0.0);
    assert_eq!(report["tae_susceptible"], 0.0);
    assert_eq!(report["parent_accuracy"], 1.0);
    assert_eq!(report["parent_channel_accuracy"], 1.0);
    assert_eq!(report["edge_auc"], 1.0);
}

#[test]
fn infer_fits_kernel_from_delay_file() {
    let tmp = tempdir().unwrap();
    let dir = tmp.path().display().to_string();
    let common = ["--nodes", "5", "--layers", "2", "--output-dir", &dir];
    assert_eq!(code(&bin(&[&["generate", "--seed", "3"], &common[..]].concat())), 0);
    assert_eq!(
        code(&bin(&[&["simulate", "--seed", "5", "--window", "40"], &common[..]].concat())),
        0
    );

    let delays = tmp.path().join("delays.txt");
    fs::write(&delays, "0.5\n1.2\n2.0\n0.8\n1.5\n").unwrap();
    let out = bin(&[
        &["infer", "--seed", "9", "--iterations", "40", "--burn-in", "10", "--thin", "5"][..],
        &["--fit-kernel", &delays.display().to_string()][..],
        &common[..],
    ]
    .concat());
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    fs::write(&delays, "0.5\nnot-a-number\n2.0\n").unwrap();
    let out = bin(&[
        &["infer", "--seed", "9"][..],
        &["--fit-kernel", &delays.display().to_string()][..],
        &common[..],
    ]
    .concat());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("delays.txt:2"), "diagnostic: {}", stderr(&out));
}

#[test]
fn window_flag_overrides_config() {
    let tmp = tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "simulation.n_nodes = 5\nsimulation.n_layers = 2\nsimulation.window = 30\nhyper.background_rate = 20\n",
    );
    let dir = tmp.path().display().to_string();
    let common = ["--config", &config, "--output-dir", &dir];
    assert_eq!(code(&bin(&[&["generate", "--seed", "3"], &common[..]].concat())), 0);
    assert_eq!(
        code(&bin(&[&["simulate", "--seed", "5", "--window", "50"], &common[..]].concat())),
        0
    );
    let log = io::read_event_log(&tmp.path().join(io::EVENTS_FILE)).unwrap();
    assert_eq!(log.window.length, 50.0);
}
