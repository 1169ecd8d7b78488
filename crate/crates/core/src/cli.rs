//! Command-line entry points binding the pipeline: generate -> simulate ->
//! infer -> evaluate. Exit codes: 0 success, 1 usage error, 2 data error,
//! 3 numerical/degenerate error.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evaluation;
use crate::generative::{sample_network, simulate_cascades, SimulationConfig};
use crate::inference::{run_chain, ChainConfig};
use crate::io::{self, ConfigMap};
use crate::model::{
    fit_lognormal_delays, DelayKernel, EventLog, Hyperparameters, MultiplexParams, ObservationWindow,
};

#[derive(Parser)]
#[command(name = "multiplex-hawkes", version, about = "Simulation and inference for marked Hawkes cascades on latent multiplex networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// Key-value config file; CLI flags override config values.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Directory for inputs and outputs.
    #[arg(long, value_name = "PATH")]
    output_dir: Option<PathBuf>,

    /// Number of nodes.
    #[arg(long, value_name = "N")]
    nodes: Option<usize>,

    /// Number of diffusion layers.
    #[arg(long, value_name = "K")]
    layers: Option<usize>,

    /// Observation window length in seconds.
    #[arg(long, value_name = "SECONDS")]
    window: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a ground-truth multiplex network and write its files.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_name = "U64")]
        seed: Option<u64>,
    },
    /// Simulate cascades over a previously generated network.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_name = "U64")]
        seed: u64,
        /// Extra window lengths to sweep; each writes its own event log.
        #[arg(long = "sweep-window", value_name = "SECONDS")]
        sweep_windows: Vec<f64>,
    },
    /// Run the sampler over an event log and write posterior summaries.
    Infer {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_name = "U64")]
        seed: u64,
        #[arg(long, value_name = "N")]
        iterations: Option<usize>,
        #[arg(long, value_name = "N")]
        burn_in: Option<usize>,
        #[arg(long, value_name = "N")]
        thin: Option<usize>,
        /// Fit the lognormal delay kernel from a file of observed
        /// parent-to-child delays (one per line) before inference.
        #[arg(long, value_name = "PATH")]
        fit_kernel: Option<PathBuf>,
    },
    /// Score posterior summaries against the ground-truth files.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Full generate -> simulate -> infer -> evaluate run with replications.
    Pipeline {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_name = "U64")]
        seed: Option<u64>,
        #[arg(long, value_name = "N")]
        iterations: Option<usize>,
        #[arg(long, value_name = "N")]
        burn_in: Option<usize>,
        #[arg(long, value_name = "N")]
        thin: Option<usize>,
        #[arg(long, value_name = "N")]
        replications: Option<usize>,
    },
}

/// Resolved experiment settings after merging config file and CLI flags.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub n_nodes: usize,
    pub n_layers: usize,
    pub window: f64,
    pub max_events: usize,
    pub kernel: DelayKernel,
    pub hyper: Hyperparameters,
    pub chain: ChainConfig,
    pub output_dir: PathBuf,
    pub replications: usize,
    pub seed: Option<u64>,
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig> {
    let map = match &common.config {
        Some(path) => ConfigMap::parse(path)?,
        None => ConfigMap::default(),
    };

    let n_layers = common
        .layers
        .or(map.get_usize("simulation.n_layers")?)
        .unwrap_or(3);
    if n_layers == 0 {
        return Err(Error::invalid("config", "simulation.n_layers must be positive"));
    }
    let mut hyper = Hyperparameters::symmetric(n_layers);
    if let Some(v) = map.get_f64("hyper.influence_shape")? {
        hyper.influence_shape = v;
    }
    if let Some(v) = map.get_f64("hyper.influence_rate")? {
        hyper.influence_rate = v;
    }
    if let Some(v) = map.get_f64("hyper.background_shape")? {
        hyper.background_shape = v;
    }
    if let Some(v) = map.get_f64("hyper.background_rate")? {
        hyper.background_rate = v;
    }
    hyper.validate()?;

    let kernel = DelayKernel::new(
        map.get_f64("kernel.log_mean")?.unwrap_or(0.0),
        map.get_f64("kernel.log_sdev")?.unwrap_or(1.0),
    )?;

    let mut chain = ChainConfig::new(0);
    if let Some(v) = map.get_usize("chain.iterations")? {
        chain.iterations = v;
    }
    if let Some(v) = map.get_usize("chain.burn_in")? {
        chain.burn_in = v;
    }
    if let Some(v) = map.get_usize("chain.thin")? {
        chain.thin = v;
    }
    if let Some(v) = map.get_f64("chain.mh_concentration")? {
        chain.mh_concentration = v;
    }

    let output_dir = common
        .output_dir
        .clone()
        .or_else(|| map.get("output_dir").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));

    Ok(ExperimentConfig {
        n_nodes: common.nodes.or(map.get_usize("simulation.n_nodes")?).unwrap_or(9),
        n_layers,
        window: common.window.or(map.get_f64("simulation.window")?).unwrap_or(5000.0),
        max_events: map
            .get_usize("simulation.max_events")?
            .unwrap_or(crate::generative::DEFAULT_MAX_EVENTS),
        kernel,
        hyper,
        chain,
        output_dir,
        replications: map.get_usize("replications")?.unwrap_or(5),
        seed: map.get_u64("seed")?,
    })
}

fn simulation_config(cfg: &ExperimentConfig, seed: u64, window: f64) -> Result<SimulationConfig> {
    let mut sim = SimulationConfig::new(
        cfg.n_nodes,
        cfg.n_layers,
        ObservationWindow::new(window)?,
        cfg.hyper.clone(),
        cfg.kernel,
        seed,
    )?;
    sim.max_events = cfg.max_events;
    sim.validate()?;
    Ok(sim)
}

fn require_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64> {
    flag.or(config)
        .ok_or_else(|| Error::invalid("seed", "pass --seed or set `seed` in the config file"))
}

fn cmd_generate(cfg: &ExperimentConfig, seed: u64) -> Result<MultiplexParams> {
    fs::create_dir_all(&cfg.output_dir)?;
    let sim = simulation_config(cfg, seed, cfg.window)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = sample_network(&sim, &mut rng);
    io::write_params(&cfg.output_dir, &params)?;
    Ok(params)
}

fn window_suffix(window: f64) -> String {
    format!("{window}").replace('.', "_")
}

fn cmd_simulate(cfg: &ExperimentConfig, seed: u64, sweep: &[f64]) -> Result<EventLog> {
    let params = io::read_params(&cfg.output_dir)?;
    let sim = simulation_config(cfg, seed, cfg.window)?;
    let log = simulate_cascades(&params, &sim)?;
    io::write_event_log(&cfg.output_dir.join(io::EVENTS_FILE), &log)?;
    io::write_assignment(
        &cfg.output_dir.join(io::ASSIGNMENT_FILE),
        log.ground_truth.as_ref().expect("simulation records truth"),
        log.n_layers,
    )?;
    for &window in sweep {
        let sim = simulation_config(cfg, seed, window)?;
        let swept = simulate_cascades(&params, &sim)?;
        let tag = window_suffix(window);
        io::write_event_log(&cfg.output_dir.join(format!("events_{tag}.csv")), &swept)?;
        io::write_assignment(
            &cfg.output_dir.join(format!("assignments_{tag}.csv")),
            swept.ground_truth.as_ref().expect("simulation records truth"),
            swept.n_layers,
        )?;
    }
    Ok(log)
}

struct InferOverrides {
    iterations: Option<usize>,
    burn_in: Option<usize>,
    thin: Option<usize>,
    fit_kernel: Option<PathBuf>,
}

fn read_delays(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(idx, line)| {
            line.trim().parse().map_err(|_| Error::Malformed {
                path: path.display().to_string(),
                line: idx + 1,
                reason: format!("delay is not a number: {line:?}"),
            })
        })
        .collect()
}

fn cmd_infer(cfg: &ExperimentConfig, seed: u64, overrides: &InferOverrides) -> Result<()> {
    let log = io::read_event_log(&cfg.output_dir.join(io::EVENTS_FILE))?;
    let kernel = match &overrides.fit_kernel {
        Some(path) => fit_lognormal_delays(&read_delays(path)?)?,
        None => cfg.kernel,
    };
    let mut chain = cfg.chain.clone();
    chain.seed = seed;
    if let Some(v) = overrides.iterations {
        chain.iterations = v;
    }
    if let Some(v) = overrides.burn_in {
        chain.burn_in = v;
    }
    if let Some(v) = overrides.thin {
        chain.thin = v;
    }

    let mut hyper = cfg.hyper.clone();
    if hyper.n_layers() != log.n_layers {
        hyper = resize_hyper(&cfg.hyper, log.n_layers);
    }
    let (summary, trace) = run_chain(&log, &chain, &hyper, &kernel)?;
    io::write_summary(&cfg.output_dir, &summary)?;
    io::write_assignment_trace(
        &cfg.output_dir.join(io::TRACE_ASSIGNMENTS_FILE),
        &trace.assignments,
        log.n_layers,
    )?;
    write_numeric_traces(&cfg.output_dir, &trace)?;
    Ok(())
}

fn resize_hyper(base: &Hyperparameters, n_layers: usize) -> Hyperparameters {
    let mut hyper = Hyperparameters::symmetric(n_layers);
    hyper.influence_shape = base.influence_shape;
    hyper.influence_rate = base.influence_rate;
    hyper.background_shape = base.background_shape;
    hyper.background_rate = base.background_rate;
    hyper
}

fn write_numeric_traces(dir: &Path, trace: &crate::inference::ChainTrace) -> Result<()> {
    let flat =
        |samples: &[crate::inference::RetainedSample], f: &dyn Fn(&MultiplexParams) -> Vec<f64>| {
            samples
                .iter()
                .map(|s| (s.iteration, f(&s.params)))
                .collect::<Vec<_>>()
        };
    let (n, k) = trace
        .samples
        .first()
        .map(|s| (s.params.n_nodes, s.params.n_layers))
        .unwrap_or((0, 0));
    let dims = format!("n_nodes={n},n_layers={k}");
    io::write_numeric_trace(
        &dir.join("trace_lambda.csv"),
        &flat(&trace.samples, &|p| p.nodes.background.iter().copied().collect()),
        &dims,
    )?;
    io::write_numeric_trace(
        &dir.join("trace_influence.csv"),
        &flat(&trace.samples, &|p| p.influence.as_slice().to_vec()),
        &dims,
    )?;
    io::write_numeric_trace(
        &dir.join("trace_pi.csv"),
        &flat(&trace.samples, &|p| p.layer_activity.pi.clone()),
        &dims,
    )?;
    io::write_numeric_trace(
        &dir.join("trace_A.csv"),
        &flat(&trace.samples, &|p| p.nodes.authoritative.iter().copied().collect()),
        &dims,
    )?;
    io::write_numeric_trace(
        &dir.join("trace_S.csv"),
        &flat(&trace.samples, &|p| p.nodes.susceptible.iter().copied().collect()),
        &dims,
    )
}

fn cmd_evaluate(dir: &Path) -> Result<evaluation::EvalReport> {
    let truth = io::read_params(dir)?;
    let truth_assignment = io::read_assignment(&dir.join(io::ASSIGNMENT_FILE))?;
    let summary = io::read_summary(dir)?;
    let modal = io::read_assignment(&dir.join(io::MODAL_ASSIGNMENT_FILE))?;
    let trace = io::read_assignment_trace(&dir.join(io::TRACE_ASSIGNMENTS_FILE))?;

    let (mae, mae_signed) = evaluation::mae_influence(truth.influence.as_array(), &summary.mean_influence)?;
    let report = evaluation::EvalReport {
        mae_influence: mae,
        mae_influence_signed: mae_signed,
        false_edge_mass: evaluation::false_edge_mass(truth.influence.as_array(), &summary.mean_influence)?,
        tae_lambda: evaluation::tae(&truth.nodes.background, &summary.mean_background)?,
        tae_authoritative: evaluation::tae(&truth.nodes.authoritative, &summary.mean_authoritative)?,
        tae_susceptible: evaluation::tae(&truth.nodes.susceptible, &summary.mean_susceptible)?,
        parent_accuracy: evaluation::parent_accuracy(&truth_assignment, &modal)?,
        parent_channel_accuracy: evaluation::parent_channel_accuracy(&truth_assignment, &modal)?,
        edge_auc: evaluation::edge_auc(&truth.adjacency, &summary.edge_probability)?,
        convergence: evaluation::convergence_trace(&trace, &truth_assignment)?,
    };
    io::write_report(&dir.join(io::REPORT_FILE), &report.rows())?;
    io::write_convergence(&dir.join(io::CONVERGENCE_FILE), &report.convergence)?;
    Ok(report)
}

fn cmd_pipeline(cfg: &ExperimentConfig, seed: u64) -> Result<()> {
    fs::create_dir_all(&cfg.output_dir)?;
    let reports: Vec<evaluation::EvalReport> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rep_cfg = cfg.clone();
            rep_cfg.output_dir = cfg.output_dir.join(format!("rep_{rep}"));
            let rep_seed = seed.wrapping_add(rep as u64);
            cmd_generate(&rep_cfg, rep_seed)?;
            cmd_simulate(&rep_cfg, rep_seed.wrapping_add(0x9e3779b9), &[])?;
            cmd_infer(
                &rep_cfg,
                rep_seed.wrapping_add(0x517cc1b7),
                &InferOverrides {
                    iterations: None,
                    burn_in: None,
                    thin: None,
                    fit_kernel: None,
                },
            )?;
            cmd_evaluate(&rep_cfg.output_dir)
        })
        .collect::<Result<Vec<_>>>()?;

    // Aggregate scalar metrics as means across replications.
    let reps = reports.len() as f64;
    let mut sums: Vec<(&str, f64)> = reports[0].rows();
    for report in &reports[1..] {
        for (slot, (_, value)) in sums.iter_mut().zip(report.rows()) {
            slot.1 += value;
        }
    }
    for slot in &mut sums {
        slot.1 /= reps;
    }
    io::write_report(&cfg.output_dir.join(io::REPORT_FILE), &sums)?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common, seed } => {
            let cfg = load_config(&common)?;
            let seed = require_seed(seed, cfg.seed)?;
            cmd_generate(&cfg, seed)?;
            Ok(())
        }
        Command::Simulate {
            common,
            seed,
            sweep_windows,
        } => {
            let cfg = load_config(&common)?;
            cmd_simulate(&cfg, seed, &sweep_windows)?;
            Ok(())
        }
        Command::Infer {
            common,
            seed,
            iterations,
            burn_in,
            thin,
            fit_kernel,
        } => {
            let cfg = load_config(&common)?;
            cmd_infer(
                &cfg,
                seed,
                &InferOverrides {
                    iterations,
                    burn_in,
                    thin,
                    fit_kernel,
                },
            )
        }
        Command::Evaluate { common } => {
            let cfg = load_config(&common)?;
            cmd_evaluate(&cfg.output_dir)?;
            Ok(())
        }
        Command::Pipeline {
            common,
            seed,
            iterations,
            burn_in,
            thin,
            replications,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(v) = iterations {
                cfg.chain.iterations = v;
            }
            if let Some(v) = burn_in {
                cfg.chain.burn_in = v;
            }
            if let Some(v) = thin {
                cfg.chain.thin = v;
            }
            if let Some(v) = replications {
                cfg.replications = v;
            }
            if cfg.replications == 0 {
                return Err(Error::invalid("config", "replications must be at least 1"));
            }
            let seed = require_seed(seed, cfg.seed)?;
            cmd_pipeline(&cfg, seed)
        }
    }
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
