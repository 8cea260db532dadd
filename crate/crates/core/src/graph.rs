//! Chronological event store and the neighbor queries the encoders run against it.
//!
//! Events are kept stable-sorted by timestamp, so equal timestamps keep their input
//! order. Every per-node adjacency list holds event ids ascending in time, which makes
//! "strictly before `t0`" a binary search.

use std::collections::HashMap;
use std::fs;
use std::ops::Range;
use std::path::Path;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::DenseMatrix;

/// One timestamped interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    /// Position in the stable-sorted event list.
    pub event_id: usize,
    pub src: usize,
    pub dst: usize,
    pub timestamp: f64,
    pub link_features: Vec<f64>,
}

impl EventRecord {
    /// The other endpoint of this event as seen from `node`.
    #[inline]
    pub fn partner(&self, node: usize) -> usize {
        if self.src == node {
            self.dst
        } else {
            self.src
        }
    }
}

/// Output of [`load_events`].
#[derive(Debug, Clone)]
pub struct LoadedEvents {
    pub events: Vec<EventRecord>,
    pub num_nodes: usize,
    pub d_link: usize,
    /// Remapped source ids occupy `0..num_sources`, destinations the rest.
    pub num_sources: usize,
}

/// Immutable temporal interaction graph.
#[derive(Debug, Clone)]
pub struct TemporalGraph {
    num_nodes: usize,
    events: Vec<EventRecord>,
    adjacency: Vec<Vec<usize>>,
    undirected: bool,
    d_link: usize,
    num_sources: Option<usize>,
}

/// A neighbor entry: the event, the node on the other side, and when it happened.
/// Link features are reached through [`TemporalGraph::link_features`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub event_id: usize,
    pub neighbor: usize,
    pub timestamp: f64,
}

/// Exclusive end indices of the train and validation ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitBoundaries {
    pub train_end: usize,
    pub val_end: usize,
}

impl SplitBoundaries {
    /// 70/15/15 boundaries without the minimum-size check.
    pub fn from_len(n_events: usize) -> Self {
        let n = n_events as f64;
        Self {
            train_end: (0.70 * n).round() as usize,
            val_end: (0.85 * n).round() as usize,
        }
    }

    pub fn train(&self) -> Range<usize> {
        0..self.train_end
    }

    pub fn val(&self) -> Range<usize> {
        self.train_end..self.val_end
    }

    pub fn test(&self, n_events: usize) -> Range<usize> {
        self.val_end..n_events
    }
}

/// Per-node input features.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeFeatures {
    /// `num_nodes × d_node` matrix.
    Dense(DenseMatrix),
    /// Identity features; never materialised.
    OneHot { num_nodes: usize },
}

impl NodeFeatures {
    pub fn dense(features: DenseMatrix) -> Result<Self> {
        if features.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("node features must be finite".into()));
        }
        Ok(NodeFeatures::Dense(features))
    }

    pub fn num_nodes(&self) -> usize {
        match self {
            NodeFeatures::Dense(m) => m.rows(),
            NodeFeatures::OneHot { num_nodes } => *num_nodes,
        }
    }

    /// Conceptual feature width (`num_nodes` for one-hot).
    pub fn dim(&self) -> usize {
        match self {
            NodeFeatures::Dense(m) => m.cols(),
            NodeFeatures::OneHot { num_nodes } => *num_nodes,
        }
    }

    pub fn is_one_hot(&self) -> bool {
        matches!(self, NodeFeatures::OneHot { .. })
    }
}

/// Reads a JODIE-layout CSV: `src,dst,timestamp,state_label,f1,...,fd`.
///
/// Source and destination ids are remapped to disjoint dense ranges, sources first, in
/// order of first appearance in the file.
pub fn load_events(path: impl AsRef<Path>, has_header: bool) -> Result<LoadedEvents> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_events(&text, has_header).map_err(|e| match e {
        Error::EmptyFile(_) => Error::EmptyFile(path.to_path_buf()),
        other => other,
    })
}

/// Same as [`load_events`] on in-memory text.
pub fn parse_events(text: &str, has_header: bool) -> Result<LoadedEvents> {
    struct Raw {
        src: i64,
        dst: i64,
        timestamp: f64,
        features: Vec<f64>,
    }

    let mut rows = Vec::new();
    let mut d_link: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if has_header && idx == 0 {
            continue;
        }
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 4 {
            return Err(Error::MalformedRow {
                line: line_no,
                reason: format!("expected at least 4 fields, found {}", fields.len()),
            });
        }
        let bad = |what: &str, value: &str| Error::MalformedRow {
            line: line_no,
            reason: format!("cannot parse {what} from {value:?}"),
        };
        let src = parse_id(fields[0]).ok_or_else(|| bad("src", fields[0]))?;
        let dst = parse_id(fields[1]).ok_or_else(|| bad("dst", fields[1]))?;
        let timestamp: f64 = fields[2].parse().map_err(|_| bad("timestamp", fields[2]))?;
        if !timestamp.is_finite() || timestamp < 0.0 {
            return Err(Error::MalformedRow {
                line: line_no,
                reason: format!("timestamp must be finite and non-negative, got {timestamp}"),
            });
        }
        // State label is parsed for validation only.
        let _: f64 = fields[3].parse().map_err(|_| bad("state_label", fields[3]))?;
        let features = fields[4..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| bad("feature", f)))
            .collect::<Result<Vec<_>>>()?;
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::MalformedRow {
                line: line_no,
                reason: "non-finite feature value".into(),
            });
        }
        match d_link {
            None => d_link = Some(features.len()),
            Some(expected) if expected != features.len() => {
                return Err(Error::InconsistentFeatures {
                    line: line_no,
                    expected,
                    found: features.len(),
                })
            }
            _ => {}
        }
        rows.push(Raw {
            src,
            dst,
            timestamp,
            features,
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile(Default::default()));
    }

    let mut src_ids: HashMap<i64, usize> = HashMap::new();
    let mut dst_ids: HashMap<i64, usize> = HashMap::new();
    for r in &rows {
        let next = src_ids.len();
        src_ids.entry(r.src).or_insert(next);
    }
    for r in &rows {
        let next = dst_ids.len();
        dst_ids.entry(r.dst).or_insert(next);
    }
    let num_sources = src_ids.len();
    let num_nodes = num_sources + dst_ids.len();

    let mut events: Vec<EventRecord> = rows
        .into_iter()
        .map(|r| EventRecord {
            event_id: 0,
            src: src_ids[&r.src],
            dst: num_sources + dst_ids[&r.dst],
            timestamp: r.timestamp,
            link_features: r.features,
        })
        .collect();
    sort_events(&mut events);

    Ok(LoadedEvents {
        events,
        num_nodes,
        d_link: d_link.unwrap_or(0),
        num_sources,
    })
}

fn parse_id(field: &str) -> Option<i64> {
    if let Ok(v) = field.parse::<i64>() {
        return Some(v);
    }
    // Some dumps write integral ids as `12.0`.
    let v: f64 = field.parse().ok()?;
    (v.is_finite() && v.fract() == 0.0).then_some(v as i64)
}

/// Stable sort by timestamp and renumber `event_id`s.
pub fn sort_events(events: &mut [EventRecord]) {
    events.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    for (i, e) in events.iter_mut().enumerate() {
        e.event_id = i;
    }
}

/// 70/15/15 chronological split.
pub fn chronological_split(n_events: usize) -> Result<SplitBoundaries> {
    if n_events < 10 {
        return Err(Error::TooFewEvents(n_events));
    }
    Ok(SplitBoundaries::from_len(n_events))
}

/// Node-encoder window: time gap spanned by the last 2,000 training interactions.
///
/// Falls back to the whole training span when that gap is zero, and to `1.0` when the
/// span is zero as well.
pub fn compute_default_window(events: &[EventRecord], train_end: usize) -> f64 {
    let train_end = train_end.min(events.len());
    if train_end < 2 {
        return 1.0;
    }
    let last = events[train_end - 1].timestamp;
    let window = last - events[train_end.saturating_sub(2000)].timestamp;
    if window > 0.0 {
        return window;
    }
    let span = last - events[0].timestamp;
    if span > 0.0 {
        span
    } else {
        1.0
    }
}

/// Builds the per-node chronological index. `events` must already be sorted.
pub fn build_index(events: Vec<EventRecord>, num_nodes: usize, undirected: bool) -> Result<TemporalGraph> {
    let d_link = events.first().map_or(0, |e| e.link_features.len());
    let mut adjacency = vec![Vec::new(); num_nodes];
    let mut prev = f64::NEG_INFINITY;
    for (i, e) in events.iter().enumerate() {
        if e.event_id != i {
            return Err(Error::InvalidParameter(format!(
                "event at position {i} has event_id {}",
                e.event_id
            )));
        }
        if e.timestamp < prev {
            return Err(Error::InvalidParameter(format!(
                "events are not sorted by timestamp at position {i}"
            )));
        }
        prev = e.timestamp;
        if e.link_features.len() != d_link {
            return Err(Error::InconsistentFeatures {
                line: i + 1,
                expected: d_link,
                found: e.link_features.len(),
            });
        }
        for node in [e.src, e.dst] {
            if node >= num_nodes {
                return Err(Error::NodeOutOfRange { node, num_nodes });
            }
        }
        adjacency[e.src].push(i);
        if undirected && e.dst != e.src {
            adjacency[e.dst].push(i);
        }
    }
    Ok(TemporalGraph {
        num_nodes,
        events,
        adjacency,
        undirected,
        d_link,
        num_sources: None,
    })
}

impl TemporalGraph {
    /// Builds an index from loaded events, keeping the source/destination partition.
    pub fn from_loaded(loaded: LoadedEvents, undirected: bool) -> Result<Self> {
        let num_sources = loaded.num_sources;
        let mut g = build_index(loaded.events, loaded.num_nodes, undirected)?;
        g.num_sources = Some(num_sources);
        Ok(g)
    }

    pub fn with_num_sources(mut self, num_sources: usize) -> Self {
        self.num_sources = Some(num_sources.min(self.num_nodes));
        self
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_events(&self) -> usize {
        self.events.len()
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn event(&self, event_id: usize) -> &EventRecord {
        &self.events[event_id]
    }

    pub fn link_features(&self, event_id: usize) -> &[f64] {
        &self.events[event_id].link_features
    }

    pub fn d_link(&self) -> usize {
        self.d_link
    }

    pub fn is_undirected(&self) -> bool {
        self.undirected
    }

    pub fn num_sources(&self) -> Option<usize> {
        self.num_sources
    }

    /// Ids eligible as negative destinations: the destination partition when known.
    pub fn destination_range(&self) -> Range<usize> {
        match self.num_sources {
            Some(s) if s < self.num_nodes => s..self.num_nodes,
            _ => 0..self.num_nodes,
        }
    }

    pub fn adjacency(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    /// Number of adjacency entries of `node` with timestamp strictly below `t0`.
    fn count_before(&self, node: usize, t0: f64) -> usize {
        self.adjacency[node].partition_point(|&e| self.events[e].timestamp < t0)
    }

    fn neighbor_entry(&self, node: usize, event_id: usize) -> Neighbor {
        let e = &self.events[event_id];
        Neighbor {
            event_id,
            neighbor: e.partner(node),
            timestamp: e.timestamp,
        }
    }

    /// Up to `k` most recent events of `node` strictly before `t0`, most recent first.
    pub fn recent_neighbors(&self, node: usize, t0: f64, k: usize) -> Vec<Neighbor> {
        let adj = &self.adjacency[node];
        let end = self.count_before(node, t0);
        let start = end.saturating_sub(k);
        adj[start..end]
            .iter()
            .rev()
            .map(|&e| self.neighbor_entry(node, e))
            .collect()
    }

    /// Partner ids of every event in `[t0 - window, t0)`, one entry per event, in
    /// chronological order. Self-loop partners are skipped.
    pub fn windowed_neighbors(&self, node: usize, t0: f64, window: f64) -> Vec<usize> {
        let adj = &self.adjacency[node];
        let lo_t = t0 - window;
        let lo = adj.partition_point(|&e| self.events[e].timestamp < lo_t);
        let hi = self.count_before(node, t0);
        if lo >= hi {
            return Vec::new();
        }
        adj[lo..hi]
            .iter()
            .map(|&e| self.events[e].partner(node))
            .filter(|&p| p != node)
            .collect()
    }

    /// Up to `k` events before `t0` sampled uniformly without replacement, most recent first.
    pub fn uniform_neighbors(&self, node: usize, t0: f64, k: usize, rng: &mut Rng) -> Vec<Neighbor> {
        let adj = &self.adjacency[node];
        let n = self.count_before(node, t0);
        let mut picked: Vec<usize> = if n <= k {
            (0..n).collect()
        } else {
            index::sample(rng, n, k).into_vec()
        };
        picked.sort_unstable_by(|a, b| b.cmp(a));
        picked
            .into_iter()
            .map(|i| self.neighbor_entry(node, adj[i]))
            .collect()
    }

    /// Two-hop recency pool.
    ///
    /// Takes the `k` most recent one-hop events, adds each one-hop neighbor's `k` most
    /// recent events before that event's timestamp, drops duplicate events, and keeps the
    /// `k` most recent of the pool (ties: later event id first).
    pub fn two_hop_recent(&self, node: usize, t0: f64, k: usize) -> Vec<Neighbor> {
        let one_hop = self.recent_neighbors(node, t0, k);
        let mut pool = one_hop.clone();
        for entry in &one_hop {
            pool.extend(self.recent_neighbors(entry.neighbor, entry.timestamp, k));
        }
        finish_pool(pool, k)
    }

    /// Two-hop pool with uniform sampling at both hops.
    pub fn two_hop_uniform(&self, node: usize, t0: f64, k: usize, rng: &mut Rng) -> Vec<Neighbor> {
        let one_hop = self.uniform_neighbors(node, t0, k, rng);
        let mut pool = one_hop.clone();
        for entry in &one_hop {
            pool.extend(self.uniform_neighbors(entry.neighbor, entry.timestamp, k, rng));
        }
        if pool.len() <= k {
            return finish_pool(pool, k);
        }
        pool.sort_by_key(|n| n.event_id);
        pool.dedup_by_key(|n| n.event_id);
        let keep = index::sample(rng, pool.len(), k.min(pool.len())).into_vec();
        let picked: Vec<Neighbor> = keep.into_iter().map(|i| pool[i]).collect();
        finish_pool(picked, k)
    }
}

fn finish_pool(mut pool: Vec<Neighbor>, k: usize) -> Vec<Neighbor> {
    pool.sort_by(|a, b| {
        b.timestamp
            .total_cmp(&a.timestamp)
            .then(b.event_id.cmp(&a.event_id))
    });
    pool.dedup_by_key(|n| n.event_id);
    pool.truncate(k);
    pool
}
