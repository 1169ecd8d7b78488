//! File formats: event logs, network files, node/layer tables, parent
//! assignments, posterior summaries, traces and the key-value config.
//!
//! All files are UTF-8 comma-delimited text with a `#` header line carrying
//! the declared shape. Floats are written with Rust's shortest round-trip
//! formatting, so write -> read -> write is byte-identical.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::inference::PosteriorSummary;
use crate::model::{
    Event, EventLog, InfluenceTensor, LayerActivity, MultiplexAdjacency, MultiplexParams, NodeParams,
    ObservationWindow, ParentAssignment, ParentLabel,
};

fn malformed(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Malformed {
        path: path.display().to_string(),
        line,
        reason: reason.into(),
    }
}

fn parse_f64(path: &Path, line: usize, field: &str, raw: &str) -> Result<f64> {
    raw.trim()
        .parse()
        .map_err(|_| malformed(path, line, format!("{field} is not a number: {raw:?}")))
}

fn parse_usize(path: &Path, line: usize, field: &str, raw: &str) -> Result<usize> {
    raw.trim()
        .parse()
        .map_err(|_| malformed(path, line, format!("{field} is not a nonnegative integer: {raw:?}")))
}

/// Parses a `# key=value,key=value` header line.
fn parse_header(path: &Path, line: &str, keys: &[&str]) -> Result<Vec<f64>> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| malformed(path, 1, "missing `#` header line"))?
        .trim();
    let mut map = HashMap::new();
    for part in body.split(',') {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| malformed(path, 1, format!("bad header field: {part:?}")))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    keys.iter()
        .map(|k| {
            let raw = map
                .get(*k)
                .ok_or_else(|| malformed(path, 1, format!("header is missing {k}")))?;
            parse_f64(path, 1, k, raw)
        })
        .collect()
}

fn expect_columns(path: &Path, line_no: usize, line: &str, expected: &str) -> Result<()> {
    if line != expected {
        return Err(malformed(
            path,
            line_no,
            format!("expected column line {expected:?}, found {line:?}"),
        ));
    }
    Ok(())
}

fn split_fields<'a>(path: &Path, line_no: usize, line: &'a str, n: usize) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != n {
        return Err(malformed(
            path,
            line_no,
            format!("expected {n} fields, found {}", fields.len()),
        ));
    }
    Ok(fields)
}

// ---------------------------------------------------------------------------
// Event logs

pub fn write_event_log(path: &Path, log: &EventLog) -> Result<()> {
    let mut out = format!(
        "# n_nodes={},n_layers={},window={}\n",
        log.n_nodes, log.n_layers, log.window.length
    );
    out.push_str("time,node");
    for k in 0..log.n_layers {
        write!(out, ",theta_{k}").unwrap();
    }
    out.push('\n');
    for e in &log.events {
        write!(out, "{},{}", e.time, e.node).unwrap();
        for t in &e.topic {
            write!(out, ",{t}").unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_event_log(path: &Path) -> Result<EventLog> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| malformed(path, 1, "empty file"))?;
    let dims = parse_header(path, header, &["n_nodes", "n_layers", "window"])?;
    let (n_nodes, n_layers, window) = (dims[0] as usize, dims[1] as usize, dims[2]);
    if n_layers == 0 {
        return Err(malformed(path, 1, "n_layers must be positive"));
    }

    let mut expected = String::from("time,node");
    for k in 0..n_layers {
        write!(expected, ",theta_{k}").unwrap();
    }
    let (_, columns) = lines.next().ok_or_else(|| malformed(path, 2, "missing column line"))?;
    expect_columns(path, 2, columns, &expected)?;

    let mut events = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let fields = split_fields(path, line_no, line, 2 + n_layers)?;
        let time = parse_f64(path, line_no, "time", fields[0])?;
        let node = parse_usize(path, line_no, "node", fields[1])?;
        let topic = fields[2..]
            .iter()
            .map(|f| parse_f64(path, line_no, "theta", f))
            .collect::<Result<Vec<f64>>>()?;
        let event =
            Event::new(time, node, topic).map_err(|e| malformed(path, line_no, e.to_string()))?;
        if node >= n_nodes {
            return Err(malformed(path, line_no, format!("node {node} out of range (N={n_nodes})")));
        }
        if event.time > window {
            return Err(malformed(path, line_no, format!("time {} exceeds window {window}", event.time)));
        }
        if let Some(prev) = events.last() {
            let prev: &Event = prev;
            if event.time < prev.time {
                return Err(malformed(path, line_no, format!("time {} is out of order", event.time)));
            }
        }
        events.push(event);
    }
    EventLog::new(
        events,
        ObservationWindow::new(window).map_err(|e| malformed(path, 1, e.to_string()))?,
        n_nodes,
        n_layers,
        None,
    )
    .map_err(|e| malformed(path, 1, e.to_string()))
}

// ---------------------------------------------------------------------------
// Parent assignments

/// One row per event: `event,parent,layer`, where `parent == event` encodes
/// a spontaneous origin (an event counts as its own parent).
pub fn write_assignment(path: &Path, assignment: &ParentAssignment, n_layers: usize) -> Result<()> {
    let mut out = format!(
        "# n_events={},n_layers={}\n",
        assignment.labels.len(),
        n_layers
    );
    out.push_str("event,parent,layer\n");
    for (m, label) in assignment.labels.iter().enumerate() {
        let parent = match label {
            ParentLabel::Spontaneous { .. } => m,
            ParentLabel::Triggered { parent, .. } => *parent,
        };
        writeln!(out, "{m},{parent},{}", label.layer()).unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_assignment(path: &Path) -> Result<ParentAssignment> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| malformed(path, 1, "empty file"))?;
    let dims = parse_header(path, header, &["n_events", "n_layers"])?;
    let (n_events, n_layers) = (dims[0] as usize, dims[1] as usize);
    let (_, columns) = lines.next().ok_or_else(|| malformed(path, 2, "missing column line"))?;
    expect_columns(path, 2, columns, "event,parent,layer")?;

    let mut labels = Vec::with_capacity(n_events);
    for (idx, line) in lines {
        let line_no = idx + 1;
        let fields = split_fields(path, line_no, line, 3)?;
        let event = parse_usize(path, line_no, "event", fields[0])?;
        let parent = parse_usize(path, line_no, "parent", fields[1])?;
        let layer = parse_usize(path, line_no, "layer", fields[2])?;
        if event != labels.len() {
            return Err(malformed(path, line_no, format!("expected event {}, found {event}", labels.len())));
        }
        if layer >= n_layers {
            return Err(malformed(path, line_no, format!("layer {layer} out of range (K={n_layers})")));
        }
        labels.push(if parent == event {
            ParentLabel::Spontaneous { layer }
        } else if parent < event {
            ParentLabel::Triggered { parent, layer }
        } else {
            return Err(malformed(path, line_no, format!("parent {parent} is not earlier than event {event}")));
        });
    }
    if labels.len() != n_events {
        return Err(malformed(
            path,
            text.lines().count(),
            format!("header declares {n_events} events, found {}", labels.len()),
        ));
    }
    Ok(ParentAssignment::new(labels))
}

// ---------------------------------------------------------------------------
// Network, node and layer tables

/// Edge list for adjacency and influence jointly; a positive weight implies
/// an edge, absent rows are structural zeros.
pub fn write_network(path: &Path, adjacency: &MultiplexAdjacency, influence: &InfluenceTensor) -> Result<()> {
    let (n, k) = (adjacency.n_nodes(), adjacency.n_layers());
    let mut out = format!("# n_nodes={n},n_layers={k}\n");
    out.push_str("u,v,k,weight\n");
    for u in 0..n {
        for v in 0..n {
            if u == v {
                continue;
            }
            for l in 0..k {
                if adjacency.get(u, v, l) {
                    writeln!(out, "{u},{v},{l},{}", influence.get(u, v, l)).unwrap();
                }
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_network(path: &Path) -> Result<(MultiplexAdjacency, InfluenceTensor)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| malformed(path, 1, "empty file"))?;
    let dims = parse_header(path, header, &["n_nodes", "n_layers"])?;
    let (n, k) = (dims[0] as usize, dims[1] as usize);
    if n < 2 || k == 0 {
        return Err(malformed(path, 1, "need at least 2 nodes and 1 layer"));
    }
    let (_, columns) = lines.next().ok_or_else(|| malformed(path, 2, "missing column line"))?;
    expect_columns(path, 2, columns, "u,v,k,weight")?;

    let mut adjacency = MultiplexAdjacency::empty(n, k);
    let mut influence = InfluenceTensor::zeros(n, k);
    for (idx, line) in lines {
        let line_no = idx + 1;
        let fields = split_fields(path, line_no, line, 4)?;
        let u = parse_usize(path, line_no, "u", fields[0])?;
        let v = parse_usize(path, line_no, "v", fields[1])?;
        let l = parse_usize(path, line_no, "k", fields[2])?;
        let w = parse_f64(path, line_no, "weight", fields[3])?;
        if u >= n || v >= n || l >= k {
            return Err(malformed(path, line_no, format!("index ({u},{v},{l}) out of range for N={n}, K={k}")));
        }
        if u == v {
            return Err(malformed(path, line_no, "self-edges are not allowed"));
        }
        if !(w > 0.0) || !w.is_finite() {
            return Err(malformed(path, line_no, format!("edge weight must be positive and finite, found {w}")));
        }
        if adjacency.get(u, v, l) {
            return Err(malformed(path, line_no, format!("duplicate edge ({u},{v},{l})")));
        }
        adjacency.set(u, v, l, true);
        influence.set(u, v, l, w);
    }
    Ok((adjacency, influence))
}

/// Per-(node, layer) table: background rate, authority, susceptibility and
/// topic-prior concentration.
pub fn write_nodes(path: &Path, nodes: &NodeParams) -> Result<()> {
    let (n, k) = nodes.background.dim();
    let mut out = format!("# n_nodes={n},n_layers={k}\n");
    out.push_str("u,k,lambda,A,S,alpha\n");
    for u in 0..n {
        for l in 0..k {
            writeln!(
                out,
                "{u},{l},{},{},{},{}",
                nodes.background[(u, l)],
                nodes.authoritative[(u, l)],
                nodes.susceptible[(u, l)],
                nodes.topic_prior[(u, l)]
            )
            .unwrap();
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_nodes(path: &Path) -> Result<NodeParams> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| malformed(path, 1, "empty file"))?;
    let dims = parse_header(path, header, &["n_nodes", "n_layers"])?;
    let (n, k) = (dims[0] as usize, dims[1] as usize);
    let (_, columns) = lines.next().ok_or_else(|| malformed(path, 2, "missing column line"))?;
    expect_columns(path, 2, columns, "u,k,lambda,A,S,alpha")?;

    let mut background = Array2::zeros((n, k));
    let mut authoritative = Array2::zeros((n, k));
    let mut susceptible = Array2::zeros((n, k));
    let mut topic_prior = Array2::zeros((n, k));
    let mut rows = 0usize;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let fields = split_fields(path, line_no, line, 6)?;
        let u = parse_usize(path, line_no, "u", fields[0])?;
        let l = parse_usize(path, line_no, "k", fields[1])?;
        if u >= n || l >= k {
            return Err(malformed(path, line_no, format!("index ({u},{l}) out of range for N={n}, K={k}")));
        }
        background[(u, l)] = parse_f64(path, line_no, "lambda", fields[2])?;
        authoritative[(u, l)] = parse_f64(path, line_no, "A", fields[3])?;
        susceptible[(u, l)] = parse_f64(path, line_no, "S", fields[4])?;
        topic_prior[(u, l)] = parse_f64(path, line_no, "alpha", fields[5])?;
        rows += 1;
    }
    if rows != n * k {
        return Err(malformed(
            path,
            text.lines().count(),
            format!("expected {} rows, found {rows}", n * k),
        ));
    }
    let nodes = NodeParams {
        background,
        authoritative,
        susceptible,
        topic_prior,
    };
    nodes.validate().map_err(|e| malformed(path, 1, e.to_string()))?;
    Ok(nodes)
}

pub fn write_layers(path: &Path, layers: &LayerActivity) -> Result<()> {
    let mut out = format!("# n_layers={}\n", layers.pi.len());
    out.push_str("k,pi\n");
    for (l, p) in layers.pi.iter().enumerate() {
        writeln!(out, "{l},{p}").unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_layers(path: &Path) -> Result<LayerActivity> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| malformed(path, 1, "empty file"))?;
    let k = parse_header(path, header, &["n_layers"])?[0] as usize;
    let (_, columns) = lines.next().ok_or_else(|| malformed(path, 2, "missing column line"))?;
    expect_columns(path, 2, columns, "k,pi")?;

    let mut pi = Vec::with_capacity(k);
    for (idx, line) in lines {
        let line_no = idx + 1;
        let fields = split_fields(path, line_no, line, 2)?;
        let l = parse_usize(path, line_no, "k", fields[0])?;
        if l != pi.len() {
            return Err(malformed(path, line_no, format!("expected layer {}, found {l}", pi.len())));
        }
        pi.push(parse_f64(path, line_no, "pi", fields[1])?);
    }
    if pi.len() != k {
        return Err(malformed(path, text.lines().count(), format!("expected {k} layers, found {}", pi.len())));
    }
    LayerActivity::new(pi).map_err(|e| malformed(path, 1, e.to_string()))
}

pub const NETWORK_FILE: &str = "network.csv";
pub const NODES_FILE: &str = "nodes.csv";
pub const LAYERS_FILE: &str = "layers.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const ASSIGNMENT_FILE: &str = "assignments.csv";

/// Writes the three ground-truth network files into `dir`.
pub fn write_params(dir: &Path, params: &MultiplexParams) -> Result<()> {
    write_network(&dir.join(NETWORK_FILE), &params.adjacency, &params.influence)?;
    write_nodes(&dir.join(NODES_FILE), &params.nodes)?;
    write_layers(&dir.join(LAYERS_FILE), &params.layer_activity)
}

/// Reads the three ground-truth network files back into one parameter set.
pub fn read_params(dir: &Path) -> Result<MultiplexParams> {
    let (adjacency, influence) = read_network(&dir.join(NETWORK_FILE))?;
    let nodes = read_nodes(&dir.join(NODES_FILE))?;
    let layers = read_layers(&dir.join(LAYERS_FILE))?;
    let network_path = dir.join(NETWORK_FILE);
    if nodes.background.dim() != (adjacency.n_nodes(), adjacency.n_layers()) {
        return Err(malformed(
            &network_path,
            1,
            format!(
                "node table shape {:?} does not match network shape ({}, {})",
                nodes.background.dim(),
                adjacency.n_nodes(),
                adjacency.n_layers()
            ),
        ));
    }
    MultiplexParams::new(adjacency, influence, nodes, layers)
        .map_err(|e| malformed(&network_path, 1, e.to_string()))
}

// ---------------------------------------------------------------------------
// Posterior summaries and traces

pub const SUMMARY_NETWORK_FILE: &str = "summary_network.csv";
pub const SUMMARY_NODES_FILE: &str = "summary_nodes.csv";
pub const SUMMARY_LAYERS_FILE: &str = "summary_layers.csv";
pub const MODAL_ASSIGNMENT_FILE: &str = "modal_assignment.csv";
pub const TRACE_ASSIGNMENTS_FILE: &str = "trace_assignments.csv";

/// Posterior means read back for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTables {
    pub edge_probability: Array3<f64>,
    pub mean_influence: Array3<f64>,
    pub mean_background: Array2<f64>,
    pub mean_authoritative: Array2<f64>,
    pub mean_susceptible: Array2<f64>,
    pub mean_pi: Vec<f64>,
}

/// Writes the mean-per-cell summary tables plus the modal attribution.
pub fn write_summary(dir: &Path, summary: &PosteriorSummary) -> Result<()> {
    let (n, k) = (summary.n_nodes, summary.n_layers);

    let mut out = format!("# n_nodes={n},n_layers={k}\n");
    out.push_str("u,v,k,edge_probability,mean_influence\n");
    for u in 0..n {
        for v in 0..n {
            if u == v {
                continue;
            }
            for l in 0..k {
                writeln!(
                    out,
                    "{u},{v},{l},{},{}",
                    summary.edge_probability[(u, v, l)],
                    summary.mean_influence[(u, v, l)]
                )
                .unwrap();
            }
        }
    }
    fs::write(dir.join(SUMMARY_NETWORK_FILE), out)?;

    let mut out = format!("# n_nodes={n},n_layers={k}\n");
    out.push_str("u,k,lambda,A,S\n");
    for u in 0..n {
        for l in 0..k {
            writeln!(
                out,
                "{u},{l},{},{},{}",
                summary.mean_background[(u, l)],
                summary.mean_authoritative[(u, l)],
                summary.mean_susceptible[(u, l)]
            )
            .unwrap();
        }
    }
    fs::write(dir.join(SUMMARY_NODES_FILE), out)?;

    let mut out = format!("# n_layers={k}\n");
    out.push_str("k,pi\n");
    for (l, p) in summary.mean_pi.iter().enumerate() {
        writeln!(out, "{l},{p}").unwrap();
    }
    fs::write(dir.join(SUMMARY_LAYERS_FILE), out)?;

    write_assignment(&dir.join(MODAL_ASSIGNMENT_FILE), &summary.modal_assignment(), k)
}

pub fn read_summary(dir: &Path) -> Result<SummaryTables> {
    let path = dir.join(SUMMARY_NETWORK_FILE);
    let text = fs::read_to_string(&path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| malformed(&path, 1, "empty file"))?;
    let dims = parse_header(&path, header, &["n_nodes", "n_layers"])?;
    let (n, k) = (dims[0] as usize, dims[1] as usize);
    let (_, columns) = lines.next().ok_or_else(|| malformed(&path, 2, "missing column line"))?;
    expect_columns(&path, 2, columns, "u,v,k,edge_probability,mean_influence")?;

    let mut edge_probability = Array3::zeros((n, n, k));
    let mut mean_influence = Array3::zeros((n, n, k));
    for (idx, line) in lines {
        let line_no = idx + 1;
        let fields = split_fields(&path, line_no, line, 5)?;
        let u = parse_usize(&path, line_no, "u", fields[0])?;
        let v = parse_usize(&path, line_no, "v", fields[1])?;
        let l = parse_usize(&path, line_no, "k", fields[2])?;
        if u >= n || v >= n || l >= k || u == v {
            return Err(malformed(&path, line_no, format!("bad index ({u},{v},{l})")));
        }
        edge_probability[(u, v, l)] = parse_f64(&path, line_no, "edge_probability", fields[3])?;
        mean_influence[(u, v, l)] = parse_f64(&path, line_no, "mean_influence", fields[4])?;
    }

    let path = dir.join(SUMMARY_NODES_FILE);
    let text = fs::read_to_string(&path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| malformed(&path, 1, "empty file"))?;
    let dims = parse_header(&path, header, &["n_nodes", "n_layers"])?;
    if (dims[0] as usize, dims[1] as usize) != (n, k) {
        return Err(malformed(&path, 1, format!("shape disagrees with {SUMMARY_NETWORK_FILE}")));
    }
    let (_, columns) = lines.next().ok_or_else(|| malformed(&path, 2, "missing column line"))?;
    expect_columns(&path, 2, columns, "u,k,lambda,A,S")?;
    let mut mean_background = Array2::zeros((n, k));
    let mut mean_authoritative = Array2::zeros((n, k));
    let mut mean_susceptible = Array2::zeros((n, k));
    for (idx, line) in lines {
        let line_no = idx + 1;
        let fields = split_fields(&path, line_no, line, 5)?;
        let u = parse_usize(&path, line_no, "u", fields[0])?;
        let l = parse_usize(&path, line_no, "k", fields[1])?;
        if u >= n || l >= k {
            return Err(malformed(&path, line_no, format!("index ({u},{l}) out of range")));
        }
        mean_background[(u, l)] = parse_f64(&path, line_no, "lambda", fields[2])?;
        mean_authoritative[(u, l)] = parse_f64(&path, line_no, "A", fields[3])?;
        mean_susceptible[(u, l)] = parse_f64(&path, line_no, "S", fields[4])?;
    }

    let layers = read_layers(&dir.join(SUMMARY_LAYERS_FILE)).or_else(|_| {
        // Summary pi rows are means, not an exact simplex; read leniently.
        read_layer_means(&dir.join(SUMMARY_LAYERS_FILE))
    })?;

    Ok(SummaryTables {
        edge_probability,
        mean_influence,
        mean_background,
        mean_authoritative,
        mean_susceptible,
        mean_pi: layers.pi,
    })
}

fn read_layer_means(path: &Path) -> Result<LayerActivity> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| malformed(path, 1, "empty file"))?;
    let _k = parse_header(path, header, &["n_layers"])?[0] as usize;
    let (_, columns) = lines.next().ok_or_else(|| malformed(path, 2, "missing column line"))?;
    expect_columns(path, 2, columns, "k,pi")?;
    let mut pi = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let fields = split_fields(path, line_no, line, 2)?;
        pi.push(parse_f64(path, line_no, "pi", fields[1])?);
    }
    Ok(LayerActivity { pi })
}

/// Per-iteration attributions, one row per sweep: `iteration` followed by
/// `parent:layer` tokens (parent equal to the event index means spontaneous).
pub fn write_assignment_trace(path: &Path, assignments: &[ParentAssignment], n_layers: usize) -> Result<()> {
    let n_events = assignments.first().map_or(0, |a| a.labels.len());
    let mut out = format!(
        "# n_iterations={},n_events={n_events},n_layers={n_layers}\n",
        assignments.len()
    );
    for (iter, assignment) in assignments.iter().enumerate() {
        write!(out, "{iter}").unwrap();
        for (m, label) in assignment.labels.iter().enumerate() {
            let parent = match label {
                ParentLabel::Spontaneous { .. } => m,
                ParentLabel::Triggered { parent, .. } => *parent,
            };
            write!(out, ",{parent}:{}", label.layer()).unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_assignment_trace(path: &Path) -> Result<Vec<ParentAssignment>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| malformed(path, 1, "empty file"))?;
    let dims = parse_header(path, header, &["n_iterations", "n_events", "n_layers"])?;
    let (n_iterations, n_events, n_layers) = (dims[0] as usize, dims[1] as usize, dims[2] as usize);

    let mut assignments = Vec::with_capacity(n_iterations);
    for (idx, line) in lines {
        let line_no = idx + 1;
        let fields = split_fields(path, line_no, line, 1 + n_events)?;
        let iter = parse_usize(path, line_no, "iteration", fields[0])?;
        if iter != assignments.len() {
            return Err(malformed(path, line_no, format!("expected iteration {}, found {iter}", assignments.len())));
        }
        let mut labels = Vec::with_capacity(n_events);
        for (m, token) in fields[1..].iter().enumerate() {
            let (p, l) = token
                .split_once(':')
                .ok_or_else(|| malformed(path, line_no, format!("bad label token {token:?}")))?;
            let parent = parse_usize(path, line_no, "parent", p)?;
            let layer = parse_usize(path, line_no, "layer", l)?;
            if layer >= n_layers {
                return Err(malformed(path, line_no, format!("layer {layer} out of range (K={n_layers})")));
            }
            labels.push(if parent == m {
                ParentLabel::Spontaneous { layer }
            } else if parent < m {
                ParentLabel::Triggered { parent, layer }
            } else {
                return Err(malformed(path, line_no, format!("parent {parent} is not earlier than event {m}")));
            });
        }
        assignments.push(ParentAssignment::new(labels));
    }
    if assignments.len() != n_iterations {
        return Err(malformed(
            path,
            text.lines().count(),
            format!("header declares {n_iterations} iterations, found {}", assignments.len()),
        ));
    }
    Ok(assignments)
}

/// Numeric trace: one row per retained iteration, `iteration` followed by
/// the flattened (row-major) values.
pub fn write_numeric_trace(path: &Path, rows: &[(usize, Vec<f64>)], dims: &str) -> Result<()> {
    let mut out = format!("# {dims},n_rows={}\n", rows.len());
    for (iter, values) in rows {
        write!(out, "{iter}").unwrap();
        for v in values {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Evaluation reports

pub const REPORT_FILE: &str = "report.csv";
pub const CONVERGENCE_FILE: &str = "convergence.csv";

pub fn write_report(path: &Path, rows: &[(&str, f64)]) -> Result<()> {
    let mut out = String::from("metric,value\n");
    for (name, value) in rows {
        writeln!(out, "{name},{value}").unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_convergence(path: &Path, series: &[f64]) -> Result<()> {
    let mut out = String::from("iteration,parent_channel_accuracy\n");
    for (i, v) in series.iter().enumerate() {
        writeln!(out, "{i},{v}").unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Flat dotted key-value config

/// Flat `section.key = value` config with `#` comments.
#[derive(Debug, Clone, Default)]
pub struct ConfigMap {
    values: HashMap<String, (String, usize)>,
    path: String,
}

impl ConfigMap {
    pub fn parse(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse_str(&text, &path.display().to_string())
    }

    pub fn parse_str(text: &str, path: &str) -> Result<Self> {
        let mut values = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| Error::Malformed {
                path: path.to_string(),
                line: line_no,
                reason: format!("expected `key = value`, found {body:?}"),
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::Malformed {
                    path: path.to_string(),
                    line: line_no,
                    reason: "empty key".into(),
                });
            }
            if values.insert(key.clone(), (value.trim().to_string(), line_no)).is_some() {
                return Err(Error::Malformed {
                    path: path.to_string(),
                    line: line_no,
                    reason: format!("duplicate key {key:?}"),
                });
            }
        }
        Ok(ConfigMap {
            values,
            path: path.to_string(),
        })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(v, _)| v.as_str())
    }

    fn typed<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some((raw, line)) => raw.parse().map(Some).map_err(|_| Error::Malformed {
                path: self.path.clone(),
                line: *line,
                reason: format!("{key} is not {what}: {raw:?}"),
            }),
        }
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.typed(key, "a number")
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.typed(key, "a nonnegative integer")
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        self.typed(key, "a nonnegative integer")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generative::{sample_network, simulate_cascades, SimulationConfig};
    use crate::model::{DelayKernel, Hyperparameters};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use tempfile::tempdir;

    fn sample_setup(seed: u64) -> (MultiplexParams, EventLog) {
        let config = SimulationConfig::new(
            4,
            2,
            ObservationWindow::new(800.0).unwrap(),
            Hyperparameters::symmetric(2),
            DelayKernel::default(),
            seed,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = sample_network(&config, &mut rng);
        let log = simulate_cascades(&params, &config).unwrap();
        (params, log)
    }

    #[test]
    fn event_log_round_trip_is_byte_identical() {
        let (_, log) = sample_setup(3);
        assert!(!log.is_empty());
        let dir = tempdir().unwrap();
        let path = dir.path().join(EVENTS_FILE);
        write_event_log(&path, &log).unwrap();
        let first = fs::read(&path).unwrap();
        let read = read_event_log(&path).unwrap();
        assert_eq!(read.events, log.events);
        assert_eq!(read.window, log.window);
        write_event_log(&path, &read).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
    }

    #[test]
    fn params_round_trip_is_byte_identical() {
        // Network draw only; this seed's parameters need not be subcritical.
        let config = SimulationConfig::new(
            4,
            2,
            ObservationWindow::new(800.0).unwrap(),
            Hyperparameters::symmetric(2),
            DelayKernel::default(),
            5,
        )
        .unwrap();
        let params = sample_network(&config, &mut ChaCha8Rng::seed_from_u64(5));
        let dir = tempdir().unwrap();
        write_params(dir.path(), &params).unwrap();
        let bytes: Vec<Vec<u8>> = [NETWORK_FILE, NODES_FILE, LAYERS_FILE]
            .iter()
            .map(|f| fs::read(dir.path().join(f)).unwrap())
            .collect();
        let read = read_params(dir.path()).unwrap();
        assert_eq!(read.adjacency, params.adjacency);
        assert_eq!(read.influence, params.influence);
        assert_eq!(read.nodes, params.nodes);
        assert_eq!(read.layer_activity, params.layer_activity);
        write_params(dir.path(), &read).unwrap();
        for (f, b) in [NETWORK_FILE, NODES_FILE, LAYERS_FILE].iter().zip(&bytes) {
            assert_eq!(&fs::read(dir.path().join(f)).unwrap(), b);
        }
    }

    #[test]
    fn assignment_round_trip() {
        let (_, log) = sample_setup(7);
        let truth = log.ground_truth.clone().unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join(ASSIGNMENT_FILE);
        write_assignment(&path, &truth, log.n_layers).unwrap();
        let first = fs::read(&path).unwrap();
        let read = read_assignment(&path).unwrap();
        assert_eq!(read, truth);
        write_assignment(&path, &read, log.n_layers).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
    }

    #[test]
    fn assignment_trace_round_trip() {
        let (_, log) = sample_setup(7);
        let truth = log.ground_truth.clone().unwrap();
        let trace = vec![truth.clone(), truth.clone(), truth];
        let dir = tempdir().unwrap();
        let path = dir.path().join(TRACE_ASSIGNMENTS_FILE);
        write_assignment_trace(&path, &trace, log.n_layers).unwrap();
        let first = fs::read(&path).unwrap();
        let read = read_assignment_trace(&path).unwrap();
        assert_eq!(read, trace);
        write_assignment_trace(&path, &read, log.n_layers).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
    }

    #[test]
    fn malformed_lines_report_position_and_reason() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");

        fs::write(
            &path,
            "# n_nodes=2,n_layers=1,window=10\ntime,node,theta_0\n1.0,0,1\n0.5,1,1\n",
        )
        .unwrap();
        let err = read_event_log(&path).unwrap_err();
        assert!(matches!(err, Error::Malformed { .. }), "{err}");

        fs::write(
            &path,
            "# n_nodes=2,n_layers=1,window=10\ntime,node,theta_0\n1.0,oops,1\n",
        )
        .unwrap();
        match read_event_log(&path).unwrap_err() {
            Error::Malformed { line, reason, .. } => {
                assert_eq!(line, 3);
                assert!(reason.contains("node"), "{reason}");
            }
            other => panic!("unexpected error {other}"),
        }

        fs::write(
            &path,
            "# n_nodes=2,n_layers=1,window=10\ntime,node,theta_0\n1.0,0,0.4\n",
        )
        .unwrap();
        match read_event_log(&path).unwrap_err() {
            Error::Malformed { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other}"),
        }

        fs::write(&path, "# n_nodes=2,n_layers=1\nu,v,k,weight\n0,0,0,1.0\n").unwrap();
        match read_network(&path).unwrap_err() {
            Error::Malformed { line, reason, .. } => {
                assert_eq!(line, 3);
                assert!(reason.contains("self-edge"), "{reason}");
            }
            other => panic!("unexpected error {other}"),
        }

        fs::write(&path, "# n_nodes=2,n_layers=1\nu,v,k,weight\n0,1,0,1.0\n0,1,0,2.0\n").unwrap();
        match read_network(&path).unwrap_err() {
            Error::Malformed { line, reason, .. } => {
                assert_eq!(line, 4);
                assert!(reason.contains("duplicate"), "{reason}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn config_map_parses_dotted_keys() {
        let text = "\
# experiment settings
simulation.n_nodes = 9
simulation.window = 5000   # seconds
chain.burn_in = 200
output_dir = out
";
        let cfg = ConfigMap::parse_str(text, "test.conf").unwrap();
        assert_eq!(cfg.get_usize("simulation.n_nodes").unwrap(), Some(9));
        assert_eq!(cfg.get_f64("simulation.window").unwrap(), Some(5000.0));
        assert_eq!(cfg.get_usize("chain.burn_in").unwrap(), Some(200));
        assert_eq!(cfg.get("output_dir"), Some("out"));
        assert_eq!(cfg.get_usize("chain.thin").unwrap(), None);

        let err = ConfigMap::parse_str("simulation.n_nodes = nine", "test.conf")
            .unwrap()
            .get_usize("simulation.n_nodes")
            .unwrap_err();
        match err {
            Error::Malformed { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error {other}"),
        }

        assert!(ConfigMap::parse_str("novalue\n", "test.conf").is_err());
        assert!(ConfigMap::parse_str("a = 1\na = 2\n", "test.conf").is_err());
    }

    #[test]
    fn summary_round_trip() {
        use crate::inference::{run_chain, ChainConfig};
        let (_, log) = sample_setup(11);
        let mut chain = ChainConfig::new(1);
        chain.iterations = 30;
        chain.burn_in = 10;
        chain.thin = 5;
        let (summary, trace) =
            run_chain(&log, &chain, &Hyperparameters::symmetric(2), &DelayKernel::default()).unwrap();
        let dir = tempdir().unwrap();
        write_summary(dir.path(), &summary).unwrap();
        let tables = read_summary(dir.path()).unwrap();
        assert_eq!(tables.edge_probability, summary.edge_probability);
        assert_eq!(tables.mean_influence, summary.mean_influence);
        assert_eq!(tables.mean_background, summary.mean_background);
        assert_eq!(tables.mean_authoritative, summary.mean_authoritative);
        assert_eq!(tables.mean_susceptible, summary.mean_susceptible);
        assert_eq!(tables.mean_pi, summary.mean_pi);

        let modal = read_assignment(&dir.path().join(MODAL_ASSIGNMENT_FILE)).unwrap();
        assert_eq!(modal, summary.modal_assignment());

        let path = dir.path().join(TRACE_ASSIGNMENTS_FILE);
        write_assignment_trace(&path, &trace.assignments, log.n_layers).unwrap();
        assert_eq!(read_assignment_trace(&path).unwrap(), trace.assignments);
    }
}
