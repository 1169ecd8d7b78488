//! Domain types and the deterministic mathematical kernel: delay kernel,
//! intensities, channel selection, edge probabilities and the joint
//! log-likelihood of an event log with its parent attribution.

use ndarray::{Array2, Array3};
use statrs::function::erf::erf;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Tolerance for simplex-closure checks.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Probabilities are floored at this value before taking logs so a single
/// zero factor cannot poison a log-likelihood with `-inf`.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// `ln(max(x, DENSITY_FLOOR))`.
pub fn ln_floor(x: f64) -> f64 {
    x.max(DENSITY_FLOOR).ln()
}

fn check_simplex(v: &[f64], what: &'static str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::invalid(what, "empty simplex"));
    }
    if v.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::invalid(what, format!("negative component in {v:?}")));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::invalid(what, format!("components sum to {sum}, not 1")));
    }
    Ok(())
}

/// One observation: a marked point in time. The mark is a topic simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub node: usize,
    pub topic: Vec<f64>,
}

impl Event {
    pub fn new(time: f64, node: usize, topic: Vec<f64>) -> Result<Self> {
        if !(time >= 0.0) {
            return Err(Error::invalid("event time", format!("{time} is negative or NaN")));
        }
        check_simplex(&topic, "event topic")?;
        Ok(Event { time, node, topic })
    }
}

/// The observation window `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationWindow {
    pub length: f64,
}

impl ObservationWindow {
    pub fn new(length: f64) -> Result<Self> {
        if !(length > 0.0) {
            return Err(Error::invalid("observation window", format!("length {length} must be > 0")));
        }
        Ok(ObservationWindow { length })
    }
}

/// Latent attribution of one event: either spontaneous on a layer, or
/// triggered by an earlier event through a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParentLabel {
    Spontaneous { layer: usize },
    Triggered { parent: usize, layer: usize },
}

impl ParentLabel {
    pub fn layer(&self) -> usize {
        match self {
            ParentLabel::Spontaneous { layer } => *layer,
            ParentLabel::Triggered { layer, .. } => *layer,
        }
    }
}

/// Per-event parent attribution for a whole log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParentAssignment {
    pub labels: Vec<ParentLabel>,
}

impl ParentAssignment {
    pub fn new(labels: Vec<ParentLabel>) -> Self {
        ParentAssignment { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Checks the assignment against an event log: triggered parents must be
    /// strictly earlier and layer indices in range.
    pub fn validate_for(&self, events: &[Event], n_layers: usize) -> Result<()> {
        if self.labels.len() != events.len() {
            return Err(Error::ShapeMismatch(format!(
                "assignment has {} labels for {} events",
                self.labels.len(),
                events.len()
            )));
        }
        for (m, label) in self.labels.iter().enumerate() {
            if label.layer() >= n_layers {
                return Err(Error::invalid(
                    "parent assignment",
                    format!("event {m} assigned layer {} >= {n_layers}", label.layer()),
                ));
            }
            if let ParentLabel::Triggered { parent, .. } = label {
                if *parent >= events.len() {
                    return Err(Error::invalid(
                        "parent assignment",
                        format!("event {m} references parent {parent} out of range"),
                    ));
                }
                if events[*parent].time >= events[m].time {
                    return Err(Error::invalid(
                        "parent assignment",
                        format!("event {m} has parent {parent} with a later or equal timestamp"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// A time-ordered event log over an observation window.
#[derive(Debug, Clone)]
pub struct EventLog {
    pub events: Vec<Event>,
    pub window: ObservationWindow,
    pub n_nodes: usize,
    pub n_layers: usize,
    /// Present only for simulated data.
    pub ground_truth: Option<ParentAssignment>,
}

impl EventLog {
    pub fn new(
        events: Vec<Event>,
        window: ObservationWindow,
        n_nodes: usize,
        n_layers: usize,
        ground_truth: Option<ParentAssignment>,
    ) -> Result<Self> {
        for (i, e) in events.iter().enumerate() {
            if e.node >= n_nodes {
                return Err(Error::invalid("event log", format!("event {i} node {} >= {n_nodes}", e.node)));
            }
            if e.topic.len() != n_layers {
                return Err(Error::invalid(
                    "event log",
                    format!("event {i} topic has {} components, expected {n_layers}", e.topic.len()),
                ));
            }
            if e.time > window.length {
                return Err(Error::invalid(
                    "event log",
                    format!("event {i} time {} exceeds window {}", e.time, window.length),
                ));
            }
            if i > 0 && events[i - 1].time > e.time {
                return Err(Error::invalid("event log", format!("events {i} and {} out of time order", i - 1)));
            }
        }
        if let Some(gt) = &ground_truth {
            gt.validate_for(&events, n_layers)?;
        }
        Ok(EventLog {
            events,
            window,
            n_nodes,
            n_layers,
            ground_truth,
        })
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Binary adjacency tensor of the latent multiplex network, shape N x N x K.
/// The diagonal is structurally zero on every layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiplexAdjacency {
    entries: Array3<u8>,
}

impl MultiplexAdjacency {
    pub fn empty(n_nodes: usize, n_layers: usize) -> Self {
        MultiplexAdjacency {
            entries: Array3::zeros((n_nodes, n_nodes, n_layers)),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.entries.shape()[0]
    }

    pub fn n_layers(&self) -> usize {
        self.entries.shape()[2]
    }

    pub fn get(&self, u: usize, v: usize, k: usize) -> bool {
        self.entries[(u, v, k)] != 0
    }

    /// Self-edges are excluded by construction.
    pub fn set(&mut self, u: usize, v: usize, k: usize, present: bool) {
        assert_ne!(u, v, "self-edges are structurally absent");
        self.entries[(u, v, k)] = present as u8;
    }

    /// True if any layer carries an edge u -> v.
    pub fn any_edge(&self, u: usize, v: usize) -> bool {
        (0..self.n_layers()).any(|k| self.get(u, v, k))
    }

    pub fn edge_count(&self) -> usize {
        self.entries.iter().map(|&g| g as usize).sum()
    }

    /// Number of edges on layer `k` (over all ordered pairs).
    pub fn layer_edge_count(&self, k: usize) -> usize {
        let n = self.n_nodes();
        (0..n)
            .flat_map(|u| (0..n).map(move |v| (u, v)))
            .filter(|&(u, v)| u != v && self.get(u, v, k))
            .count()
    }

    /// In-degree of node `v` on layer `k`.
    pub fn in_degree(&self, v: usize, k: usize) -> usize {
        (0..self.n_nodes()).filter(|&u| u != v && self.get(u, v, k)).count()
    }

    /// Out-degree of node `u` on layer `k`.
    pub fn out_degree(&self, u: usize, k: usize) -> usize {
        (0..self.n_nodes()).filter(|&v| v != u && self.get(u, v, k)).count()
    }
}

/// Nonnegative influence tensor W, shape N x N x K: expected triggered-event
/// counts per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceTensor {
    entries: Array3<f64>,
}

impl InfluenceTensor {
    pub fn zeros(n_nodes: usize, n_layers: usize) -> Self {
        InfluenceTensor {
            entries: Array3::zeros((n_nodes, n_nodes, n_layers)),
        }
    }

    pub fn get(&self, u: usize, v: usize, k: usize) -> f64 {
        self.entries[(u, v, k)]
    }

    pub fn set(&mut self, u: usize, v: usize, k: usize, w: f64) {
        assert!(w >= 0.0, "influence must be nonnegative");
        self.entries[(u, v, k)] = w;
    }

    pub fn as_array(&self) -> &Array3<f64> {
        &self.entries
    }

    pub fn as_slice(&self) -> &[f64] {
        self.entries.as_slice().expect("standard layout")
    }
}

/// Per-node parameters: background rates, authoritative and susceptible
/// simplexes and the topic-prior concentration.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeParams {
    /// lambda_{u,k}, events per second, shape N x K.
    pub background: Array2<f64>,
    /// A_u rows, each a K-simplex.
    pub authoritative: Array2<f64>,
    /// S_u rows, each a K-simplex.
    pub susceptible: Array2<f64>,
    /// alpha_u rows, positive Dirichlet concentrations for event topics.
    pub topic_prior: Array2<f64>,
}

impl NodeParams {
    pub fn validate(&self) -> Result<()> {
        let (n, k) = self.background.dim();
        for arr in [&self.authoritative, &self.susceptible, &self.topic_prior] {
            if arr.dim() != (n, k) {
                return Err(Error::ShapeMismatch(format!(
                    "node parameter tables disagree: {:?} vs {:?}",
                    arr.dim(),
                    (n, k)
                )));
            }
        }
        if self.background.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::invalid("background rates", "negative or NaN entry"));
        }
        if self.topic_prior.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::invalid("topic prior", "nonpositive concentration"));
        }
        for u in 0..n {
            check_simplex(self.authoritative.row(u).as_slice().unwrap(), "authoritative vector")?;
            check_simplex(self.susceptible.row(u).as_slice().unwrap(), "susceptible vector")?;
        }
        Ok(())
    }
}

/// Activity simplex over layers.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerActivity {
    pub pi: Vec<f64>,
}

impl LayerActivity {
    pub fn new(pi: Vec<f64>) -> Result<Self> {
        check_simplex(&pi, "layer activity")?;
        Ok(LayerActivity { pi })
    }
}

/// Full latent state of the multiplex diffusion model.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplexParams {
    pub adjacency: MultiplexAdjacency,
    pub influence: InfluenceTensor,
    pub nodes: NodeParams,
    pub layer_activity: LayerActivity,
    pub n_nodes: usize,
    pub n_layers: usize,
}

impl MultiplexParams {
    pub fn new(
        adjacency: MultiplexAdjacency,
        influence: InfluenceTensor,
        nodes: NodeParams,
        layer_activity: LayerActivity,
    ) -> Result<Self> {
        let n_nodes = adjacency.n_nodes();
        let n_layers = adjacency.n_layers();
        if influence.as_array().dim() != (n_nodes, n_nodes, n_layers) {
            return Err(Error::ShapeMismatch("influence tensor vs adjacency".into()));
        }
        if nodes.background.dim() != (n_nodes, n_layers) {
            return Err(Error::ShapeMismatch("node parameters vs adjacency".into()));
        }
        if layer_activity.pi.len() != n_layers {
            return Err(Error::ShapeMismatch("layer activity vs adjacency".into()));
        }
        nodes.validate()?;
        Ok(MultiplexParams {
            adjacency,
            influence,
            nodes,
            layer_activity,
            n_nodes,
            n_layers,
        })
    }
}

/// Lognormal time-decay kernel for parent-to-child delays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayKernel {
    pub log_mean: f64,
    pub log_sdev: f64,
}

impl Default for DelayKernel {
    fn default() -> Self {
        DelayKernel {
            log_mean: 0.0,
            log_sdev: 1.0,
        }
    }
}

impl DelayKernel {
    pub fn new(log_mean: f64, log_sdev: f64) -> Result<Self> {
        if !log_mean.is_finite() {
            return Err(Error::invalid("delay kernel", "log_mean must be finite"));
        }
        if !(log_sdev > 0.0) || !log_sdev.is_finite() {
            return Err(Error::invalid("delay kernel", format!("log_sdev {log_sdev} must be positive")));
        }
        Ok(DelayKernel { log_mean, log_sdev })
    }

    /// Lognormal density at `dt`; zero outside the positive reals.
    pub fn density(&self, dt: f64) -> f64 {
        if dt <= 0.0 || !dt.is_finite() {
            return 0.0;
        }
        let z = (dt.ln() - self.log_mean) / self.log_sdev;
        (-0.5 * z * z).exp() / (dt * self.log_sdev * (2.0 * std::f64::consts::PI).sqrt())
    }

    /// Lognormal CDF at `t` (zero for t <= 0).
    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t == f64::INFINITY {
            return 1.0;
        }
        let z = (t.ln() - self.log_mean) / (self.log_sdev * std::f64::consts::SQRT_2);
        0.5 * (1.0 + erf(z))
    }

    /// Kernel mass on `[a, b]`, `0 <= a <= b`.
    pub fn mass(&self, a: f64, b: f64) -> Result<f64> {
        if !(a >= 0.0) || b < a {
            return Err(Error::invalid("delay mass bounds", format!("need 0 <= a <= b, got [{a}, {b}]")));
        }
        Ok((self.cdf(b) - self.cdf(a)).clamp(0.0, 1.0))
    }

    /// Inverse CDF via bisection, used for window-truncated delay draws.
    pub fn quantile(&self, p: f64) -> f64 {
        assert!((0.0..1.0).contains(&p));
        if p == 0.0 {
            return 0.0;
        }
        // Invert the standard normal CDF by bisection on z.
        let target = 2.0 * p - 1.0;
        let (mut lo, mut hi) = (-40.0f64, 40.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if erf(mid / std::f64::consts::SQRT_2) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (self.log_mean + self.log_sdev * 0.5 * (lo + hi)).exp()
    }
}

/// Maximum-likelihood lognormal fit to observed parent-child delays.
pub fn fit_lognormal_delays(delays: &[f64]) -> Result<DelayKernel> {
    if delays.len() < 2 {
        return Err(Error::invalid("delay sample", "need at least two delays to fit a kernel"));
    }
    if delays.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::invalid("delay sample", "delays must be positive"));
    }
    let logs: Vec<f64> = delays.iter().map(|d| d.ln()).collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / logs.len() as f64;
    DelayKernel::new(mean, var.sqrt().max(1e-12))
}

/// Prior hyperparameters shared by the generative process and the sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    /// Gamma shape for influence entries (kappa).
    pub influence_shape: f64,
    /// Gamma rate for influence entries (v).
    pub influence_rate: f64,
    /// Gamma shape for background rates.
    pub background_shape: f64,
    /// Gamma rate for background rates.
    pub background_rate: f64,
    /// Dirichlet concentration for layer activity pi.
    pub pi_prior: Vec<f64>,
    /// Dirichlet concentration for authoritative vectors A_u.
    pub authority_prior: Vec<f64>,
    /// Dirichlet concentration for susceptible vectors S_u.
    pub susceptibility_prior: Vec<f64>,
    /// Dirichlet concentration for per-node topic priors alpha_u.
    pub topic_prior: Vec<f64>,
    /// Optional node-specific topic concentrations (n_nodes x n_layers);
    /// overrides `topic_prior` row-by-row when present.
    pub node_topic_prior: Option<Array2<f64>>,
    /// Sharpness of the Dirichlet random-walk Metropolis proposal.
    pub mh_concentration: f64,
}

impl Hyperparameters {
    /// Symmetric unit priors on `k` layers.
    pub fn symmetric(n_layers: usize) -> Self {
        Hyperparameters {
            influence_shape: 2.0,
            influence_rate: 1.0,
            background_shape: 2.0,
            background_rate: 500.0,
            pi_prior: vec![1.0; n_layers],
            authority_prior: vec![1.0; n_layers],
            susceptibility_prior: vec![1.0; n_layers],
            topic_prior: vec![1.0; n_layers],
            node_topic_prior: None,
            mh_concentration: 100.0,
        }
    }

    pub fn n_layers(&self) -> usize {
        self.pi_prior.len()
    }

    pub fn validate(&self) -> Result<()> {
        let scalars = [
            ("influence_shape", self.influence_shape),
            ("influence_rate", self.influence_rate),
            ("background_shape", self.background_shape),
            ("background_rate", self.background_rate),
            ("mh_concentration", self.mh_concentration),
        ];
        for (name, x) in scalars {
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::invalid("hyperparameters", format!("{name} = {x} must be positive")));
            }
        }
        let k = self.pi_prior.len();
        for (name, v) in [
            ("pi_prior", &self.pi_prior),
            ("authority_prior", &self.authority_prior),
            ("susceptibility_prior", &self.susceptibility_prior),
            ("topic_prior", &self.topic_prior),
        ] {
            if v.len() != k {
                return Err(Error::ShapeMismatch(format!("{name} has {} components, expected {k}", v.len())));
            }
            if v.iter().any(|&x| !(x > 0.0)) {
                return Err(Error::invalid("hyperparameters", format!("{name} must be strictly positive")));
            }
        }
        if let Some(tp) = &self.node_topic_prior {
            if tp.ncols() != k {
                return Err(Error::ShapeMismatch(format!(
                    "node_topic_prior has {} columns, expected {k}",
                    tp.ncols()
                )));
            }
            if tp.iter().any(|&x| !(x > 0.0)) {
                return Err(Error::invalid("hyperparameters", "node_topic_prior must be strictly positive"));
            }
        }
        Ok(())
    }
}

/// Probability of a directed edge u -> v on layer k under the
/// mixed-membership prior: pi_k * A_{u,k} * S_{v,k}.
pub fn edge_probability(pi_k: f64, a_uk: f64, s_vk: f64) -> f64 {
    pi_k * a_uk * s_vk
}

/// Channel-selection vector for spreading an event with topic `topic` to a
/// neighbor with susceptibility `susceptible`, restricted to
/// `candidate_layers`. Components sum to at most one; the remaining mass is
/// the no-spread probability.
pub fn channel_vector(topic: &[f64], susceptible: &[f64], candidate_layers: &[usize]) -> Vec<f64> {
    let mut h = vec![0.0; topic.len()];
    for &k in candidate_layers {
        h[k] = topic[k] * susceptible[k];
    }
    h
}

/// Conditional intensity at `(t, node, layer)` given the event history
/// strictly before `t`: background plus edge-gated triggered terms.
pub fn node_intensity(
    t: f64,
    node: usize,
    layer: usize,
    log: &EventLog,
    params: &MultiplexParams,
    kernel: &DelayKernel,
) -> f64 {
    let mut rate = params.nodes.background[(node, layer)];
    for e in &log.events {
        if e.time >= t {
            break;
        }
        if e.node == node {
            continue;
        }
        if params.adjacency.get(e.node, node, layer) {
            rate += params.influence.get(e.node, node, layer) * kernel.density(t - e.time);
        }
    }
    rate
}

/// Total intensity at `(t, node)`: superposition over layers.
pub fn total_intensity(
    t: f64,
    node: usize,
    log: &EventLog,
    params: &MultiplexParams,
    kernel: &DelayKernel,
) -> f64 {
    (0..params.n_layers)
        .map(|k| node_intensity(t, node, k, log, params, kernel))
        .sum()
}

/// Log Dirichlet density of `theta` under concentration `alpha`, with the
/// global density floor applied componentwise.
pub fn ln_dirichlet_pdf(theta: &[f64], alpha: &[f64]) -> f64 {
    debug_assert_eq!(theta.len(), alpha.len());
    let alpha_sum: f64 = alpha.iter().sum();
    let mut ld = ln_gamma(alpha_sum);
    for (&t, &a) in theta.iter().zip(alpha) {
        ld -= ln_gamma(a);
        ld += (a - 1.0) * ln_floor(t);
    }
    ld
}

/// Dirichlet density with floor, in plain space.
pub fn dirichlet_pdf(theta: &[f64], alpha: &[f64]) -> f64 {
    ln_dirichlet_pdf(theta, alpha).exp()
}

/// Joint log-density of the adjacency (under the multiplex prior), the
/// events and their parent attribution, given the full parameter state.
pub fn log_joint(
    log: &EventLog,
    assignment: &ParentAssignment,
    params: &MultiplexParams,
    kernel: &DelayKernel,
) -> Result<f64> {
    assignment.validate_for(&log.events, log.n_layers)?;
    let n = params.n_nodes;
    let kk = params.n_layers;
    let t_end = log.window.length;
    let mut lj = 0.0;

    // Network prior.
    for u in 0..n {
        for v in 0..n {
            if u == v {
                continue;
            }
            for k in 0..kk {
                let rho = edge_probability(
                    params.layer_activity.pi[k],
                    params.nodes.authoritative[(u, k)],
                    params.nodes.susceptible[(v, k)],
                );
                lj += if params.adjacency.get(u, v, k) {
                    ln_floor(rho)
                } else {
                    ln_floor(1.0 - rho)
                };
            }
        }
    }

    // Background compensators and spontaneous-event factors.
    for u in 0..n {
        for k in 0..kk {
            lj -= params.nodes.background[(u, k)] * t_end;
        }
    }
    for (m, label) in assignment.labels.iter().enumerate() {
        if let ParentLabel::Spontaneous { layer } = label {
            let u = log.events[m].node;
            lj += ln_floor(params.nodes.authoritative[(u, *layer)] * params.nodes.background[(u, *layer)]);
        }
    }

    // Triggered compensators and channel factors per existing edge, for
    // every event's outgoing excitation.
    for (m, e) in log.events.iter().enumerate() {
        let remaining = kernel.mass(0.0, t_end - e.time)?;
        for v in 0..n {
            if v == e.node {
                continue;
            }
            for k in 0..kk {
                if params.adjacency.get(e.node, v, k) {
                    lj -= params.influence.get(e.node, v, k) * remaining;
                    lj += ln_floor(e.topic[k] * params.nodes.susceptible[(v, k)]);
                }
            }
        }
        let _ = m;
    }

    // Triggered-event factors.
    for (m, label) in assignment.labels.iter().enumerate() {
        if let ParentLabel::Triggered { parent, layer } = label {
            let p = &log.events[*parent];
            let dt = log.events[m].time - p.time;
            let w = params.influence.get(p.node, log.events[m].node, *layer);
            lj += ln_floor(w * kernel.density(dt));
        }
    }

    Ok(lj)
}
