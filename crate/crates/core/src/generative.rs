//! Samples multiplex networks from the mixed-membership prior and
//! forward-simulates marked cascades with ground-truth parent labels.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Poisson};
use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::model::{
    channel_vector, edge_probability, DelayKernel, Event, EventLog, Hyperparameters, InfluenceTensor,
    LayerActivity, MultiplexAdjacency, MultiplexParams, NodeParams, ObservationWindow, ParentAssignment,
    ParentLabel,
};

pub const DEFAULT_MAX_EVENTS: usize = 100_000;

/// Configuration for one synthetic instance.
#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub n_nodes: usize,
    pub n_layers: usize,
    pub window: ObservationWindow,
    pub hyper: Hyperparameters,
    pub kernel: DelayKernel,
    pub seed: u64,
    pub max_events: usize,
}

impl SimulationConfig {
    pub fn new(
        n_nodes: usize,
        n_layers: usize,
        window: ObservationWindow,
        hyper: Hyperparameters,
        kernel: DelayKernel,
        seed: u64,
    ) -> Result<Self> {
        let config = SimulationConfig {
            n_nodes,
            n_layers,
            window,
            hyper,
            kernel,
            seed,
            max_events: DEFAULT_MAX_EVENTS,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 2 {
            return Err(Error::invalid("simulation config", "need at least 2 nodes"));
        }
        if self.n_layers < 1 {
            return Err(Error::invalid("simulation config", "need at least 1 layer"));
        }
        if self.max_events == 0 {
            return Err(Error::invalid("simulation config", "event cap must be positive"));
        }
        if self.hyper.n_layers() != self.n_layers {
            return Err(Error::ShapeMismatch(format!(
                "hyperparameters have {} layers, config has {}",
                self.hyper.n_layers(),
                self.n_layers
            )));
        }
        self.hyper.validate()
    }
}

/// Dirichlet draw via normalized Gamma variates; handles K = 1 and very
/// small concentrations.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    if alpha.len() == 1 {
        return vec![1.0];
    }
    let mut draw: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive concentration").sample(rng))
        .collect();
    let sum: f64 = draw.iter().sum();
    if sum <= 0.0 || !sum.is_finite() {
        // All components underflowed; fall back to the concentration mode.
        let argmax = alpha
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        draw.iter_mut().for_each(|x| *x = 0.0);
        draw[argmax] = 1.0;
        return draw;
    }
    draw.iter_mut().for_each(|x| *x /= sum);
    draw
}

/// Gamma draw in shape-rate parameterization.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0 / rate).expect("positive gamma parameters").sample(rng)
}

fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as u64
}

fn sample_discrete<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let mut x = rng.gen_range(0.0..total);
    for (i, &w) in weights.iter().enumerate() {
        x -= w;
        if x < 0.0 {
            return Some(i);
        }
    }
    Some(weights.len() - 1)
}

/// Draws layer activity, per-node simplexes and background rates from the
/// prior.
pub fn sample_memberships<R: Rng + ?Sized>(config: &SimulationConfig, rng: &mut R) -> (LayerActivity, NodeParams) {
    draw_memberships(config.n_nodes, &config.hyper, rng)
}

/// Membership draw without a full simulation config; also used to
/// initialize inference chains.
pub fn draw_memberships<R: Rng + ?Sized>(
    n_nodes: usize,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> (LayerActivity, NodeParams) {
    let (n, k) = (n_nodes, hyper.n_layers());
    if let Some(tp) = &hyper.node_topic_prior {
        assert_eq!(tp.dim(), (n, k), "node_topic_prior shape must be (n_nodes, n_layers)");
    }
    let pi = LayerActivity::new(sample_dirichlet(&hyper.pi_prior, rng)).expect("dirichlet draw is a simplex");
    let mut authoritative = Array2::zeros((n, k));
    let mut susceptible = Array2::zeros((n, k));
    let mut background = Array2::zeros((n, k));
    let mut topic_prior = Array2::zeros((n, k));
    for u in 0..n {
        let a = sample_dirichlet(&hyper.authority_prior, rng);
        let s = sample_dirichlet(&hyper.susceptibility_prior, rng);
        for l in 0..k {
            authoritative[(u, l)] = a[l];
            susceptible[(u, l)] = s[l];
            background[(u, l)] = sample_gamma(hyper.background_shape, hyper.background_rate, rng);
            topic_prior[(u, l)] = match &hyper.node_topic_prior {
                Some(tp) => tp[(u, l)],
                None => hyper.topic_prior[l],
            };
        }
    }
    (
        pi,
        NodeParams {
            background,
            authoritative,
            susceptible,
            topic_prior,
        },
    )
}

/// Independent Bernoulli edges with probability pi_k * A_{u,k} * S_{v,k};
/// diagonal forced to zero.
pub fn sample_adjacency<R: Rng + ?Sized>(
    pi: &LayerActivity,
    nodes: &NodeParams,
    rng: &mut R,
) -> MultiplexAdjacency {
    let (n, k) = nodes.background.dim();
    let mut adj = MultiplexAdjacency::empty(n, k);
    for u in 0..n {
        for v in 0..n {
            if u == v {
                continue;
            }
            for l in 0..k {
                let rho = edge_probability(pi.pi[l], nodes.authoritative[(u, l)], nodes.susceptible[(v, l)]);
                if rng.gen::<f64>() < rho {
                    adj.set(u, v, l, true);
                }
            }
        }
    }
    adj
}

/// Gamma influence weights on existing edges; structural zeros elsewhere.
pub fn sample_influence<R: Rng + ?Sized>(
    adjacency: &MultiplexAdjacency,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> InfluenceTensor {
    let (n, k) = (adjacency.n_nodes(), adjacency.n_layers());
    let mut influence = InfluenceTensor::zeros(n, k);
    for u in 0..n {
        for v in 0..n {
            if u == v {
                continue;
            }
            for l in 0..k {
                if adjacency.get(u, v, l) {
                    influence.set(u, v, l, sample_gamma(hyper.influence_shape, hyper.influence_rate, rng));
                }
            }
        }
    }
    influence
}

/// Full network draw from the prior: memberships, adjacency, influences.
pub fn sample_network<R: Rng + ?Sized>(config: &SimulationConfig, rng: &mut R) -> MultiplexParams {
    let (pi, nodes) = sample_memberships(config, rng);
    let adjacency = sample_adjacency(&pi, &nodes, rng);
    let influence = sample_influence(&adjacency, &config.hyper, rng);
    MultiplexParams::new(adjacency, influence, nodes, pi).expect("shapes consistent by construction")
}

struct RawEvent {
    time: f64,
    node: usize,
    topic: Vec<f64>,
    label: ParentLabel, // parent index refers to raw order
}

/// Forward-simulates cascades by the branching construction: per-node
/// spontaneous seeds, then breadth-first channel selection and offspring
/// draws. Children past the window are discarded; the event cap guards
/// against supercritical influence settings.
pub fn simulate_cascades(params: &MultiplexParams, config: &SimulationConfig) -> Result<EventLog> {
    config.validate()?;
    if params.n_nodes != config.n_nodes || params.n_layers != config.n_layers {
        return Err(Error::ShapeMismatch(format!(
            "params are {}x{} layers, config asks {}x{}",
            params.n_nodes, params.n_layers, config.n_nodes, config.n_layers
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let t_end = config.window.length;
    let n = config.n_nodes;
    let k = config.n_layers;
    let mut raw: Vec<RawEvent> = Vec::new();
    let mut queue: std::collections::VecDeque<usize> = std::collections::VecDeque::new();

    // Spontaneous seeds: each node picks one layer by its authoritative
    // vector and fires a homogeneous Poisson number of events on it.
    for u in 0..n {
        let a_row: Vec<f64> = (0..k).map(|l| params.nodes.authoritative[(u, l)]).collect();
        let Some(layer) = sample_discrete(&a_row, &mut rng) else {
            continue;
        };
        let rate = params.nodes.background[(u, layer)];
        let count = sample_poisson(rate * t_end, &mut rng);
        let alpha: Vec<f64> = (0..k).map(|l| params.nodes.topic_prior[(u, l)]).collect();
        for _ in 0..count {
            let time = rng.gen_range(0.0..t_end);
            let topic = sample_dirichlet(&alpha, &mut rng);
            raw.push(RawEvent {
                time,
                node: u,
                topic,
                label: ParentLabel::Spontaneous { layer },
            });
            if raw.len() > config.max_events {
                return Err(Error::Supercritical { cap: config.max_events });
            }
            queue.push_back(raw.len() - 1);
        }
    }

    // Breadth-first diffusion.
    while let Some(idx) = queue.pop_front() {
        let (src_time, src_node, src_topic) = {
            let e = &raw[idx];
            (e.time, e.node, e.topic.clone())
        };
        for v in 0..n {
            if v == src_node || !params.adjacency.any_edge(src_node, v) {
                continue;
            }
            let candidates: Vec<usize> = (0..k).filter(|&l| params.adjacency.get(src_node, v, l)).collect();
            let s_row: Vec<f64> = (0..k).map(|l| params.nodes.susceptible[(v, l)]).collect();
            let h = channel_vector(&src_topic, &s_row, &candidates);
            let total: f64 = h.iter().sum();
            // One channel or none; the no-spread mass is 1 - total.
            let x: f64 = rng.gen::<f64>();
            if x >= total {
                continue;
            }
            let mut acc = 0.0;
            let mut channel = candidates[candidates.len() - 1];
            for &l in &candidates {
                acc += h[l];
                if x < acc {
                    channel = l;
                    break;
                }
            }
            let w = params.influence.get(src_node, v, channel);
            if w <= 0.0 {
                continue;
            }
            let count = sample_poisson(w, &mut rng);
            let delay_dist = LogNormal::new(config.kernel.log_mean, config.kernel.log_sdev)
                .expect("valid kernel parameters");
            for _ in 0..count {
                let time = src_time + delay_dist.sample(&mut rng);
                if time > t_end {
                    continue;
                }
                raw.push(RawEvent {
                    time,
                    node: v,
                    topic: src_topic.clone(),
                    label: ParentLabel::Triggered {
                        parent: idx,
                        layer: channel,
                    },
                });
                if raw.len() > config.max_events {
                    return Err(Error::Supercritical { cap: config.max_events });
                }
                queue.push_back(raw.len() - 1);
            }
        }
    }

    // Sort by time and remap parent indices.
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| raw[a].time.total_cmp(&raw[b].time).then(a.cmp(&b)));
    let mut rank = vec![0usize; raw.len()];
    for (new_idx, &old_idx) in order.iter().enumerate() {
        rank[old_idx] = new_idx;
    }
    let mut events = Vec::with_capacity(raw.len());
    let mut labels = Vec::with_capacity(raw.len());
    for &old_idx in &order {
        let e = &raw[old_idx];
        events.push(Event::new(e.time, e.node, e.topic.clone())?);
        labels.push(match e.label {
            ParentLabel::Spontaneous { layer } => ParentLabel::Spontaneous { layer },
            ParentLabel::Triggered { parent, layer } => ParentLabel::Triggered {
                parent: rank[parent],
                layer,
            },
        });
    }
    EventLog::new(
        events,
        config.window,
        n,
        k,
        Some(ParentAssignment::new(labels)),
    )
}
