//! Metropolis-within-Gibbs sampler over parent attributions, influences,
//! background rates, adjacency, layer activity and node memberships, plus
//! chain management and posterior summarization.

use std::collections::HashMap;

use ndarray::{Array2, Array3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::generative::{draw_memberships, sample_dirichlet, sample_gamma, sample_influence};
use crate::model::{
    dirichlet_pdf, edge_probability, ln_dirichlet_pdf, ln_floor, DelayKernel, EventLog, Hyperparameters,
    InfluenceTensor, LayerActivity, MultiplexAdjacency, MultiplexParams, NodeParams, ParentAssignment,
    ParentLabel,
};

/// Rate parameter used in the influence conditional: the compensator form
/// integrates the kernel mass left in the window after each source event;
/// the event-count form uses the raw per-node event totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InfluenceRateMode {
    #[default]
    Compensator,
    EventCount,
}

/// Chain controls. Defaults: 1000 iterations, 200 burn-in, thinning 20.
#[derive(Debug, Clone)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub mh_concentration: f64,
    pub influence_rate_mode: InfluenceRateMode,
}

impl ChainConfig {
    pub fn new(seed: u64) -> Self {
        ChainConfig {
            iterations: 1000,
            burn_in: 200,
            thin: 20,
            seed,
            mh_concentration: 100.0,
            influence_rate_mode: InfluenceRateMode::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::invalid(
                "chain config",
                format!("burn-in {} must be below iterations {}", self.burn_in, self.iterations),
            ));
        }
        if self.thin == 0 {
            return Err(Error::invalid("chain config", "thinning stride must be at least 1"));
        }
        if !(self.mh_concentration > 0.0) {
            return Err(Error::invalid("chain config", "MH concentration must be positive"));
        }
        Ok(())
    }
}

/// One sampler iterate.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub params: MultiplexParams,
    pub assignment: ParentAssignment,
    pub iteration: usize,
}

/// Attribution counts driving the conjugate updates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SufficientStatistics {
    /// M_{n,n',k}: events at n' attributed to a parent at n on layer k.
    pub triggered: Array3<usize>,
    /// M_n: total events at node n.
    pub node_totals: Vec<usize>,
    /// M_{n,k}: spontaneous events at node n on layer k.
    pub spontaneous: Array2<usize>,
    /// N_{v,k}: triggered events received by node v on layer k.
    pub trigger_receipts: Array2<usize>,
}

impl SufficientStatistics {
    pub fn zeros(n_nodes: usize, n_layers: usize) -> Self {
        SufficientStatistics {
            triggered: Array3::zeros((n_nodes, n_nodes, n_layers)),
            node_totals: vec![0; n_nodes],
            spontaneous: Array2::zeros((n_nodes, n_layers)),
            trigger_receipts: Array2::zeros((n_nodes, n_layers)),
        }
    }

    /// Every event is spontaneous or triggered exactly once.
    pub fn conserved(&self) -> bool {
        let (n, _, k) = self.triggered.dim();
        (0..n).all(|node| {
            let spont: usize = (0..k).map(|l| self.spontaneous[(node, l)]).sum();
            let trig: usize = (0..n).flat_map(|src| (0..k).map(move |l| (src, l)))
                .map(|(src, l)| self.triggered[(src, node, l)])
                .sum();
            spont + trig == self.node_totals[node]
        })
    }
}

/// Tallies attribution counts for an assignment.
pub fn compute_sufficient_stats(log: &EventLog, assignment: &ParentAssignment) -> Result<SufficientStatistics> {
    assignment.validate_for(&log.events, log.n_layers)?;
    let mut stats = SufficientStatistics::zeros(log.n_nodes, log.n_layers);
    for (m, label) in assignment.labels.iter().enumerate() {
        let node = log.events[m].node;
        stats.node_totals[node] += 1;
        match label {
            ParentLabel::Spontaneous { layer } => {
                stats.spontaneous[(node, *layer)] += 1;
            }
            ParentLabel::Triggered { parent, layer } => {
                let src = log.events[*parent].node;
                stats.triggered[(src, node, *layer)] += 1;
                stats.trigger_receipts[(node, *layer)] += 1;
            }
        }
    }
    Ok(stats)
}

/// Kernel mass remaining in the window after each node's events:
/// Phi_n = sum over events at n of the kernel mass on [0, T - s_m].
pub fn source_exposures(log: &EventLog, kernel: &DelayKernel) -> Vec<f64> {
    let mut phi = vec![0.0; log.n_nodes];
    for e in &log.events {
        phi[e.node] += kernel.cdf(log.window.length - e.time);
    }
    phi
}

// Guard against overflow when a boundary topic meets a sub-unit
// concentration; 1e250 keeps products of a few factors finite.
fn capped_dirichlet_pdf(theta: &[f64], alpha: &[f64]) -> f64 {
    ln_dirichlet_pdf(theta, alpha).min(575.0).exp()
}

/// Gibbs draw of the parent attribution: each event picks a spontaneous
/// layer or an (earlier event, layer) pair by Poisson thinning.
pub fn sample_parents<R: Rng + ?Sized>(
    log: &EventLog,
    params: &MultiplexParams,
    kernel: &DelayKernel,
    rng: &mut R,
) -> Result<ParentAssignment> {
    let k = log.n_layers;
    let mut labels = Vec::with_capacity(log.len());
    let mut options: Vec<(ParentLabel, f64)> = Vec::new();
    for (m, e) in log.events.iter().enumerate() {
        options.clear();
        let node = e.node;
        let alpha: Vec<f64> = (0..k).map(|l| params.nodes.topic_prior[(node, l)]).collect();
        let topic_density = capped_dirichlet_pdf(&e.topic, &alpha);
        for layer in 0..k {
            let w = params.nodes.authoritative[(node, layer)]
                * params.nodes.background[(node, layer)]
                * topic_density;
            if w > 0.0 {
                options.push((ParentLabel::Spontaneous { layer }, w));
            }
        }
        for (mp, ep) in log.events.iter().enumerate().take(m) {
            if ep.time >= e.time || ep.node == node || !params.adjacency.any_edge(ep.node, node) {
                continue;
            }
            let decay = kernel.density(e.time - ep.time);
            if decay <= 0.0 {
                continue;
            }
            for layer in 0..k {
                if !params.adjacency.get(ep.node, node, layer) {
                    continue;
                }
                let w = params.influence.get(ep.node, node, layer)
                    * ep.topic[layer]
                    * params.nodes.susceptible[(node, layer)]
                    * decay;
                if w > 0.0 {
                    options.push((ParentLabel::Triggered { parent: mp, layer }, w));
                }
            }
        }
        let total: f64 = options.iter().map(|(_, w)| w).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::DegenerateSupport { event: m });
        }
        let mut x = rng.gen::<f64>() * total;
        let mut chosen = options[options.len() - 1].0;
        for (label, w) in &options {
            x -= w;
            if x < 0.0 {
                chosen = *label;
                break;
            }
        }
        labels.push(chosen);
    }
    Ok(ParentAssignment::new(labels))
}

/// Conjugate Gamma draw of the influence tensor on existing edges.
pub fn sample_influences<R: Rng + ?Sized>(
    stats: &SufficientStatistics,
    adjacency: &MultiplexAdjacency,
    exposures: &[f64],
    hyper: &Hyperparameters,
    mode: InfluenceRateMode,
    rng: &mut R,
) -> InfluenceTensor {
    let (n, k) = (adjacency.n_nodes(), adjacency.n_layers());
    let mut influence = InfluenceTensor::zeros(n, k);
    for u in 0..n {
        let rate = match mode {
            InfluenceRateMode::Compensator => exposures[u],
            InfluenceRateMode::EventCount => stats.node_totals[u] as f64,
        } + hyper.influence_rate;
        for v in 0..n {
            if u == v {
                continue;
            }
            for l in 0..k {
                if adjacency.get(u, v, l) {
                    let shape = stats.triggered[(u, v, l)] as f64 + hyper.influence_shape;
                    influence.set(u, v, l, sample_gamma(shape, rate, rng));
                }
            }
        }
    }
    influence
}

/// Conjugate Gamma draw of the background-rate table.
pub fn sample_background_rates<R: Rng + ?Sized>(
    stats: &SufficientStatistics,
    hyper: &Hyperparameters,
    window_length: f64,
    rng: &mut R,
) -> Array2<f64> {
    let (n, k) = stats.spontaneous.dim();
    let mut rates = Array2::zeros((n, k));
    for u in 0..n {
        for l in 0..k {
            let shape = stats.spontaneous[(u, l)] as f64 + hyper.background_shape;
            let rate = window_length + hyper.background_rate;
            rates[(u, l)] = sample_gamma(shape, rate, rng);
        }
    }
    rates
}

/// Collapsed adjacency draw: attributed parents force edges; otherwise the
/// prior odds are tilted by the marginal likelihood of zero triggered
/// events with the influence integrated out under its Gamma prior.
pub fn sample_adjacency_posterior<R: Rng + ?Sized>(
    stats: &SufficientStatistics,
    pi: &LayerActivity,
    nodes: &NodeParams,
    exposures: &[f64],
    hyper: &Hyperparameters,
    rng: &mut R,
) -> MultiplexAdjacency {
    let (n, k) = nodes.background.dim();
    let mut adj = MultiplexAdjacency::empty(n, k);
    for u in 0..n {
        let b1 = (hyper.influence_rate / (hyper.influence_rate + exposures[u])).powf(hyper.influence_shape);
        for v in 0..n {
            if u == v {
                continue;
            }
            for l in 0..k {
                if stats.triggered[(u, v, l)] > 0 {
                    adj.set(u, v, l, true);
                    continue;
                }
                let rho = edge_probability(pi.pi[l], nodes.authoritative[(u, l)], nodes.susceptible[(v, l)]);
                let on = rho * b1;
                let off = 1.0 - rho;
                let p = if on + off > 0.0 { on / (on + off) } else { 0.0 };
                if rng.gen::<f64>() < p {
                    adj.set(u, v, l, true);
                }
            }
        }
    }
    adj
}

fn proposal_concentration(current: &[f64], concentration: f64) -> Vec<f64> {
    // Components are clamped away from zero so the proposal stays proper
    // even when the chain visits the simplex boundary.
    current.iter().map(|&x| (concentration * x).max(1e-3)).collect()
}

/// One Dirichlet random-walk Metropolis step against `ln_target`.
/// Returns the (possibly unchanged) state and whether the move was accepted.
pub fn dirichlet_rw_step<R: Rng + ?Sized>(
    current: &[f64],
    concentration: f64,
    ln_target: impl Fn(&[f64]) -> f64,
    rng: &mut R,
) -> (Vec<f64>, bool) {
    let alpha_fwd = proposal_concentration(current, concentration);
    let proposal = sample_dirichlet(&alpha_fwd, rng);
    if proposal.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return (current.to_vec(), false);
    }
    let alpha_rev = proposal_concentration(&proposal, concentration);
    let log_ratio = ln_target(&proposal) - ln_target(current)
        + ln_dirichlet_pdf(current, &alpha_rev)
        - ln_dirichlet_pdf(&proposal, &alpha_fwd);
    if log_ratio >= 0.0 || rng.gen::<f64>() < log_ratio.exp() {
        (proposal, true)
    } else {
        (current.to_vec(), false)
    }
}

fn ln_target_pi(pi: &[f64], adjacency: &MultiplexAdjacency, nodes: &NodeParams, gamma: &[f64]) -> f64 {
    let (n, k) = nodes.background.dim();
    let mut t = 0.0;
    for l in 0..k {
        let edges = adjacency.layer_edge_count(l) as f64;
        t += (edges + gamma[l] - 1.0) * ln_floor(pi[l]);
    }
    for u in 0..n {
        for v in 0..n {
            if u == v {
                continue;
            }
            for l in 0..k {
                if !adjacency.get(u, v, l) {
                    t += ln_floor(1.0 - pi[l] * nodes.authoritative[(u, l)] * nodes.susceptible[(v, l)]);
                }
            }
        }
    }
    t
}

/// Metropolis update of the layer-activity simplex against its
/// edge-count-and-prior conditional.
pub fn mh_update_pi<R: Rng + ?Sized>(
    params: &MultiplexParams,
    hyper: &Hyperparameters,
    concentration: f64,
    rng: &mut R,
) -> (LayerActivity, bool) {
    let (pi, accepted) = dirichlet_rw_step(
        &params.layer_activity.pi,
        concentration,
        |cand| ln_target_pi(cand, &params.adjacency, &params.nodes, &hyper.pi_prior),
        rng,
    );
    (LayerActivity { pi }, accepted)
}

fn ln_target_authority(
    a_row: &[f64],
    node: usize,
    adjacency: &MultiplexAdjacency,
    nodes: &NodeParams,
    pi: &[f64],
    stats: &SufficientStatistics,
    prior: &[f64],
) -> f64 {
    let (n, k) = nodes.background.dim();
    let mut t = 0.0;
    for l in 0..k {
        // Spontaneous attributions plus outgoing edges both carry A_{u,k}
        // factors in the joint.
        let exponent =
            stats.spontaneous[(node, l)] as f64 + adjacency.out_degree(node, l) as f64 + prior[l] - 1.0;
        t += exponent * ln_floor(a_row[l]);
    }
    for v in 0..n {
        if v == node {
            continue;
        }
        for l in 0..k {
            if !adjacency.get(node, v, l) {
                t += ln_floor(1.0 - pi[l] * a_row[l] * nodes.susceptible[(v, l)]);
            }
        }
    }
    t
}

/// Per-node Metropolis update of the authoritative vectors. Returns the
/// updated table and the number of accepted node moves.
pub fn mh_update_authoritative<R: Rng + ?Sized>(
    params: &MultiplexParams,
    stats: &SufficientStatistics,
    hyper: &Hyperparameters,
    concentration: f64,
    rng: &mut R,
) -> (Array2<f64>, usize) {
    let (n, k) = params.nodes.background.dim();
    let mut updated = params.nodes.authoritative.clone();
    let mut accepted = 0;
    for u in 0..n {
        let current: Vec<f64> = (0..k).map(|l| updated[(u, l)]).collect();
        let (next, ok) = dirichlet_rw_step(
            &current,
            concentration,
            |cand| {
                ln_target_authority(
                    cand,
                    u,
                    &params.adjacency,
                    &params.nodes,
                    &params.layer_activity.pi,
                    stats,
                    &hyper.authority_prior,
                )
            },
            rng,
        );
        if ok {
            accepted += 1;
        }
        for l in 0..k {
            updated[(u, l)] = next[l];
        }
    }
    (updated, accepted)
}

fn ln_target_susceptibility(
    s_row: &[f64],
    node: usize,
    adjacency: &MultiplexAdjacency,
    nodes: &NodeParams,
    pi: &[f64],
    stats: &SufficientStatistics,
    prior: &[f64],
) -> f64 {
    let (n, k) = nodes.background.dim();
    let mut t = 0.0;
    for l in 0..k {
        let exponent = stats.trigger_receipts[(node, l)] as f64
            + adjacency.in_degree(node, l) as f64
            + prior[l]
            - 1.0;
        t += exponent * ln_floor(s_row[l]);
    }
    for u in 0..n {
        if u == node {
            continue;
        }
        for l in 0..k {
            if !adjacency.get(u, node, l) {
                t += ln_floor(1.0 - pi[l] * nodes.authoritative[(u, l)] * s_row[l]);
            }
        }
    }
    t
}

/// Per-node Metropolis update of the susceptible vectors.
pub fn mh_update_susceptible<R: Rng + ?Sized>(
    params: &MultiplexParams,
    stats: &SufficientStatistics,
    hyper: &Hyperparameters,
    concentration: f64,
    rng: &mut R,
) -> (Array2<f64>, usize) {
    let (n, k) = params.nodes.background.dim();
    let mut updated = params.nodes.susceptible.clone();
    let mut accepted = 0;
    for v in 0..n {
        let current: Vec<f64> = (0..k).map(|l| updated[(v, l)]).collect();
        let (next, ok) = dirichlet_rw_step(
            &current,
            concentration,
            |cand| {
                ln_target_susceptibility(
                    cand,
                    v,
                    &params.adjacency,
                    &params.nodes,
                    &params.layer_activity.pi,
                    stats,
                    &hyper.susceptibility_prior,
                )
            },
            rng,
        );
        if ok {
            accepted += 1;
        }
        for l in 0..k {
            updated[(v, l)] = next[l];
        }
    }
    (updated, accepted)
}

/// Per-sweep acceptance counters for the Metropolis phases.
#[derive(Debug, Clone, Copy, Default)]
pub struct SweepAcceptance {
    pub pi: bool,
    pub authoritative: usize,
    pub susceptible: usize,
}

/// One full Gibbs sweep: parents, sufficient statistics, influences,
/// background rates, adjacency (with influence completion on new edges),
/// then Metropolis moves for pi, A and S.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    state: &mut ChainState,
    log: &EventLog,
    hyper: &Hyperparameters,
    kernel: &DelayKernel,
    mode: InfluenceRateMode,
    concentration: f64,
    rng: &mut R,
) -> Result<SweepAcceptance> {
    let exposures = source_exposures(log, kernel);
    let assignment = sample_parents(log, &state.params, kernel, rng)?;
    let stats = compute_sufficient_stats(log, &assignment)?;

    let mut influence =
        sample_influences(&stats, &state.params.adjacency, &exposures, hyper, mode, rng);
    let background = sample_background_rates(&stats, hyper, log.window.length, rng);
    let adjacency = sample_adjacency_posterior(
        &stats,
        &state.params.layer_activity,
        &state.params.nodes,
        &exposures,
        hyper,
        rng,
    );
    // Complete the collapsed adjacency move: a fresh edge needs an
    // influence draw, a removed edge a structural zero.
    let (n, k) = (log.n_nodes, log.n_layers);
    for u in 0..n {
        let rate = match mode {
            InfluenceRateMode::Compensator => exposures[u],
            InfluenceRateMode::EventCount => stats.node_totals[u] as f64,
        } + hyper.influence_rate;
        for v in 0..n {
            if u == v {
                continue;
            }
            for l in 0..k {
                let now = adjacency.get(u, v, l);
                let before = state.params.adjacency.get(u, v, l);
                if now && !before {
                    let shape = stats.triggered[(u, v, l)] as f64 + hyper.influence_shape;
                    influence.set(u, v, l, sample_gamma(shape, rate, rng));
                } else if !now {
                    influence.set(u, v, l, 0.0);
                }
            }
        }
    }

    state.params.influence = influence;
    state.params.nodes.background = background;
    state.params.adjacency = adjacency;

    let mut acceptance = SweepAcceptance::default();
    let (pi, pi_ok) = mh_update_pi(&state.params, hyper, concentration, rng);
    acceptance.pi = pi_ok;
    state.params.layer_activity = pi;
    let (a, a_ok) = mh_update_authoritative(&state.params, &stats, hyper, concentration, rng);
    acceptance.authoritative = a_ok;
    state.params.nodes.authoritative = a;
    let (s, s_ok) = mh_update_susceptible(&state.params, &stats, hyper, concentration, rng);
    acceptance.susceptible = s_ok;
    state.params.nodes.susceptible = s;

    state.assignment = assignment;
    state.iteration += 1;
    Ok(acceptance)
}

/// Prior draws plus an all-spontaneous attribution on each event's most
/// compatible layer.
pub fn initialize_chain<R: Rng + ?Sized>(
    log: &EventLog,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> Result<ChainState> {
    if log.n_layers != hyper.n_layers() {
        return Err(Error::ShapeMismatch(format!(
            "log has {} layers, hyperparameters have {}",
            log.n_layers,
            hyper.n_layers()
        )));
    }
    let (pi, nodes) = draw_memberships(log.n_nodes, hyper, rng);
    // Start fully connected: the collapsed adjacency move prunes edges
    // aggressively but adds them back with vanishing probability once the
    // window carries many events, so discovery has to happen by elimination
    // from the complete graph.
    let mut adjacency = MultiplexAdjacency::empty(log.n_nodes, log.n_layers);
    for u in 0..log.n_nodes {
        for v in 0..log.n_nodes {
            if u == v {
                continue;
            }
            for l in 0..log.n_layers {
                adjacency.set(u, v, l, true);
            }
        }
    }
    let influence = sample_influence(&adjacency, hyper, rng);
    let labels = log
        .events
        .iter()
        .map(|e| {
            let layer = (0..log.n_layers)
                .max_by(|&a, &b| {
                    let wa = nodes.authoritative[(e.node, a)] * e.topic[a];
                    let wb = nodes.authoritative[(e.node, b)] * e.topic[b];
                    wa.total_cmp(&wb)
                })
                .unwrap_or(0);
            ParentLabel::Spontaneous { layer }
        })
        .collect();
    let params = MultiplexParams::new(adjacency, influence, nodes, pi)?;
    Ok(ChainState {
        params,
        assignment: ParentAssignment::new(labels),
        iteration: 0,
    })
}

/// A retained post-burn-in sample.
#[derive(Debug, Clone)]
pub struct RetainedSample {
    pub iteration: usize,
    pub params: MultiplexParams,
    pub assignment: ParentAssignment,
}

/// Full chain output: per-iteration attribution trace, retained samples and
/// Metropolis acceptance rates.
#[derive(Debug, Clone)]
pub struct ChainTrace {
    pub assignments: Vec<ParentAssignment>,
    pub samples: Vec<RetainedSample>,
    pub pi_acceptance: f64,
    pub authority_acceptance: f64,
    pub susceptibility_acceptance: f64,
}

/// Posterior means over the retained samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub mean_influence: Array3<f64>,
    pub mean_background: Array2<f64>,
    pub edge_probability: Array3<f64>,
    pub mean_pi: Vec<f64>,
    pub mean_authoritative: Array2<f64>,
    pub mean_susceptible: Array2<f64>,
    /// Per-event posterior frequency of each attribution label; each map
    /// sums to one.
    pub parent_frequencies: Vec<HashMap<ParentLabel, f64>>,
    pub retained: usize,
    pub n_nodes: usize,
    pub n_layers: usize,
}

fn label_order_key(label: &ParentLabel) -> (usize, usize, usize) {
    match label {
        ParentLabel::Spontaneous { layer } => (0, *layer, 0),
        ParentLabel::Triggered { parent, layer } => (1, *parent, *layer),
    }
}

impl PosteriorSummary {
    /// Most frequent label per event, with deterministic tie-breaking.
    pub fn modal_assignment(&self) -> ParentAssignment {
        let labels = self
            .parent_frequencies
            .iter()
            .map(|freqs| {
                let mut best: Option<(&ParentLabel, f64)> = None;
                for (label, &f) in freqs {
                    best = match best {
                        None => Some((label, f)),
                        Some((bl, bf)) => {
                            if f > bf || (f == bf && label_order_key(label) < label_order_key(bl)) {
                                Some((label, f))
                            } else {
                                Some((bl, bf))
                            }
                        }
                    };
                }
                *best.expect("retained samples exist").0
            })
            .collect();
        ParentAssignment::new(labels)
    }
}

/// Runs the full chain: sweeps in the fixed phase order, drops burn-in,
/// retains every `thin`-th iterate and averages the rest.
pub fn run_chain(
    log: &EventLog,
    config: &ChainConfig,
    hyper: &Hyperparameters,
    kernel: &DelayKernel,
) -> Result<(PosteriorSummary, ChainTrace)> {
    config.validate()?;
    hyper.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = initialize_chain(log, hyper, &mut rng)?;
    let (n, k) = (log.n_nodes, log.n_layers);

    let mut assignments = Vec::with_capacity(config.iterations);
    let mut samples = Vec::new();
    let mut sum_influence = Array3::<f64>::zeros((n, n, k));
    let mut sum_background = Array2::<f64>::zeros((n, k));
    let mut sum_edges = Array3::<f64>::zeros((n, n, k));
    let mut sum_pi = vec![0.0; k];
    let mut sum_a = Array2::<f64>::zeros((n, k));
    let mut sum_s = Array2::<f64>::zeros((n, k));
    let mut freq: Vec<HashMap<ParentLabel, f64>> = vec![HashMap::new(); log.len()];
    let mut retained = 0usize;
    let (mut acc_pi, mut acc_a, mut acc_s) = (0usize, 0usize, 0usize);

    for iter in 0..config.iterations {
        let acceptance = gibbs_sweep(
            &mut state,
            log,
            hyper,
            kernel,
            config.influence_rate_mode,
            config.mh_concentration,
            &mut rng,
        )?;
        acc_pi += acceptance.pi as usize;
        acc_a += acceptance.authoritative;
        acc_s += acceptance.susceptible;
        assignments.push(state.assignment.clone());

        if iter >= config.burn_in && (iter - config.burn_in) % config.thin == 0 {
            retained += 1;
            sum_influence += state.params.influence.as_array();
            sum_background += &state.params.nodes.background;
            for u in 0..n {
                for v in 0..n {
                    if u == v {
                        continue;
                    }
                    for l in 0..k {
                        if state.params.adjacency.get(u, v, l) {
                            sum_edges[(u, v, l)] += 1.0;
                        }
                    }
                }
            }
            for l in 0..k {
                sum_pi[l] += state.params.layer_activity.pi[l];
            }
            sum_a += &state.params.nodes.authoritative;
            sum_s += &state.params.nodes.susceptible;
            for (map, label) in freq.iter_mut().zip(&state.assignment.labels) {
                *map.entry(*label).or_insert(0.0) += 1.0;
            }
            samples.push(RetainedSample {
                iteration: iter,
                params: state.params.clone(),
                assignment: state.assignment.clone(),
            });
        }
    }

    let scale = 1.0 / retained as f64;
    for map in &mut freq {
        for v in map.values_mut() {
            *v *= scale;
        }
    }
    let iters = config.iterations as f64;
    let summary = PosteriorSummary {
        mean_influence: sum_influence * scale,
        mean_background: sum_background * scale,
        edge_probability: sum_edges * scale,
        mean_pi: sum_pi.into_iter().map(|x| x * scale).collect(),
        mean_authoritative: sum_a * scale,
        mean_susceptible: sum_s * scale,
        parent_frequencies: freq,
        retained,
        n_nodes: n,
        n_layers: k,
    };
    let trace = ChainTrace {
        assignments,
        samples,
        pi_acceptance: acc_pi as f64 / iters,
        authority_acceptance: acc_a as f64 / (iters * n as f64),
        susceptibility_acceptance: acc_s as f64 / (iters * n as f64),
    };
    Ok((summary, trace))
}

// Re-exported for parent-weight oracles in tests.
pub fn spontaneous_weight(params: &MultiplexParams, node: usize, layer: usize, topic: &[f64]) -> f64 {
    let k = params.n_layers;
    let alpha: Vec<f64> = (0..k).map(|l| params.nodes.topic_prior[(node, l)]).collect();
    params.nodes.authoritative[(node, layer)]
        * params.nodes.background[(node, layer)]
        * dirichlet_pdf(topic, &alpha)
}
