//! Explicit contact graphs: storage, synthetic generators, file import and
//! the activity-driven contact sampler.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, DataError};
use crate::params::{AttrValue, Attributes};

/// Undirected simple graph in compressed adjacency form, with per-node
/// attributes and activation probability `a_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactGraph {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    attributes: Vec<Attributes>,
    activation: Vec<f64>,
}

impl ContactGraph {
    /// Builds a graph on nodes `0..n`. Duplicate edges collapse; self-loops
    /// and out-of-range endpoints are rejected. Activation defaults to 1.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self, DataError>
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (u, v) in edges {
            if u == v {
                return Err(DataError::Graph(format!("self-loop on node {u}")));
            }
            if u as usize >= n || v as usize >= n {
                return Err(DataError::Graph(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for mut list in adj {
            list.sort_unstable();
            list.dedup();
            neighbors.extend(list);
            offsets.push(neighbors.len());
        }
        Ok(Self {
            offsets,
            neighbors,
            attributes: vec![Attributes::new(); n],
            activation: vec![1.0; n],
        })
    }

    pub fn node_count(&self) -> usize {
        self.activation.len()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&(v as u32)).is_ok()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.node_count()).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn mean_degree(&self) -> f64 {
        if self.node_count() == 0 {
            0.0
        } else {
            self.neighbors.len() as f64 / self.node_count() as f64
        }
    }

    pub fn activation(&self, v: usize) -> f64 {
        self.activation[v]
    }

    pub fn set_activation(&mut self, v: usize, a: f64) {
        assert!((0.0..=1.0).contains(&a), "activation {a} outside [0, 1]");
        self.activation[v] = a;
    }

    pub fn set_all_activations(&mut self, a: f64) {
        assert!((0.0..=1.0).contains(&a), "activation {a} outside [0, 1]");
        self.activation.fill(a);
    }

    pub fn attributes(&self, v: usize) -> &Attributes {
        &self.attributes[v]
    }

    pub fn set_attributes(&mut self, v: usize, attrs: Attributes) {
        self.attributes[v] = attrs;
    }

    /// Bytes held by adjacency and activation arrays.
    pub fn memory_bytes(&self) -> usize {
        self.offsets.len() * std::mem::size_of::<usize>()
            + self.neighbors.len() * std::mem::size_of::<u32>()
            + self.activation.len() * std::mem::size_of::<f64>()
    }

    /// Reads an edge list (`u v` per line, `#` comments) and an optional
    /// node attribute table (CSV: `node_id,<attr>...`; an `activation`
    /// column sets `a_v`).
    pub fn load(edge_list: &Path, node_table: Option<&Path>) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(edge_list).map_err(|source| DataError::Io {
            path: edge_list.to_path_buf(),
            source,
        })?;
        let file = edge_list.display().to_string();
        let mut edges = Vec::new();
        let mut n = 0usize;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<u32, DataError> {
                tok.and_then(|t| t.parse().ok()).ok_or_else(|| DataError::Schema {
                    file: file.clone(),
                    line: lineno as u64 + 1,
                    message: format!("expected `u v`, got `{line}`"),
                })
            };
            let u = parse(parts.next())?;
            let v = parse(parts.next())?;
            n = n.max(u as usize + 1).max(v as usize + 1);
            edges.push((u, v));
        }

        let rows = match node_table {
            Some(path) => read_node_table(path)?,
            None => Vec::new(),
        };
        if let Some(max_id) = rows.iter().map(|(id, _, _)| *id).max() {
            n = n.max(max_id + 1);
        }
        let mut graph = Self::from_edges(n, edges)?;
        for (id, attrs, activation) in rows {
            if let Some(a) = activation {
                graph.activation[id] = a;
            }
            graph.attributes[id] = attrs;
        }
        Ok(graph)
    }
}

fn read_node_table(path: &Path) -> Result<Vec<(usize, Attributes, Option<f64>)>, DataError> {
    let file = path.display().to_string();
    let csv_err = |source| DataError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    if headers.get(0) != Some("node_id") {
        return Err(DataError::Schema {
            file,
            line: 1,
            message: "first column must be `node_id`".into(),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        let schema = |message: String| DataError::Schema {
            file: file.clone(),
            line,
            message,
        };
        let id: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| schema(format!("bad node_id `{}`", &record[0])))?;
        let mut attrs = Attributes::new();
        let mut activation = None;
        for (name, raw) in headers.iter().zip(record.iter()).skip(1) {
            if raw.trim().is_empty() {
                continue;
            }
            if name == "activation" {
                let a: f64 = raw
                    .trim()
                    .parse()
                    .ok()
                    .filter(|a| (0.0..=1.0).contains(a))
                    .ok_or_else(|| schema(format!("activation `{raw}` not in [0, 1]")))?;
                activation = Some(a);
            } else {
                attrs.insert(name.to_string(), AttrValue::parse(raw));
            }
        }
        rows.push((id, attrs, activation));
    }
    Ok(rows)
}

/// Synthetic topology.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum GraphModel {
    /// Preferential attachment with `m` edges per arriving node, grown
    /// from an `(m + 1)`-clique.
    BarabasiAlbert { m: usize },
    /// Every pair linked independently with probability `p_edge`.
    ErdosRenyi { p_edge: f64 },
}

/// Generates a graph on `n` nodes, deterministic in `seed`.
pub fn generate_graph(model: GraphModel, n: usize, seed: u64) -> Result<ContactGraph, ConfigError> {
    if n == 0 {
        return Err(ConfigError::Invalid("graph needs at least one node".into()));
    }
    if n > u32::MAX as usize {
        return Err(ConfigError::Invalid(format!("{n} nodes exceed the u32 id space")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges = match model {
        GraphModel::ErdosRenyi { p_edge } => {
            if !(0.0..=1.0).contains(&p_edge) {
                return Err(ConfigError::Invalid(format!("p_edge = {p_edge} not in [0, 1]")));
            }
            erdos_renyi_edges(n, p_edge, &mut rng)
        }
        GraphModel::BarabasiAlbert { m } => {
            if m == 0 || n < m + 1 {
                return Err(ConfigError::Invalid(format!(
                    "barabasi_albert needs m >= 1 and n >= m + 1 (m = {m}, n = {n})"
                )));
            }
            barabasi_albert_edges(n, m, &mut rng)
        }
    };
    Ok(ContactGraph::from_edges(n, edges).expect("generators emit simple edges"))
}

/// Geometric skipping over the lower triangle, O(n + |E|).
fn erdos_renyi_edges(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<(u32, u32)> {
    let mut edges = Vec::new();
    if p <= 0.0 {
        return edges;
    }
    if p >= 1.0 {
        for v in 1..n as u32 {
            for w in 0..v {
                edges.push((v, w));
            }
        }
        return edges;
    }
    let log_q = (1.0 - p).ln();
    let (mut v, mut w) = (1usize, -1i64);
    while v < n {
        let r: f64 = rng.random();
        w += 1 + ((1.0 - r).ln() / log_q).floor() as i64;
        while w >= v as i64 && v < n {
            w -= v as i64;
            v += 1;
        }
        if v < n {
            edges.push((v as u32, w as u32));
        }
    }
    edges
}

fn barabasi_albert_edges(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<(u32, u32)> {
    let mut edges = Vec::with_capacity(m * (m + 1) / 2 + m * (n - m - 1));
    // Every edge endpoint once: uniform picks are degree-proportional.
    let mut endpoints: Vec<u32> = Vec::with_capacity(2 * edges.capacity());
    for u in 0..=m as u32 {
        for v in 0..u {
            edges.push((u, v));
            endpoints.extend([u, v]);
        }
    }
    let mut targets = Vec::with_capacity(m);
    for u in (m + 1) as u32..n as u32 {
        targets.clear();
        while targets.len() < m {
            let t = endpoints[rng.random_range(0..endpoints.len())];
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for &t in &targets {
            edges.push((u, t));
            endpoints.extend([u, t]);
        }
    }
    edges
}

/// Number of active slots: `Binomial(pool, activation)`.
pub(crate) fn active_slots<R: Rng + ?Sized>(pool: usize, activation: f64, rng: &mut R) -> usize {
    if pool == 0 || activation <= 0.0 {
        0
    } else if activation >= 1.0 {
        pool
    } else {
        Binomial::new(pool as u64, activation)
            .expect("activation in (0, 1)")
            .sample(rng) as usize
    }
}

#[inline]
pub(crate) fn flip<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    if p <= 0.0 {
        false
    } else if p >= 1.0 {
        true
    } else {
        rng.random::<f64>() < p
    }
}

/// Uniform index in `0..n` skipping `exclude`; `n >= 2`.
#[inline]
pub(crate) fn uniform_other<R: Rng + ?Sized>(n: usize, exclude: usize, rng: &mut R) -> usize {
    let k = rng.random_range(0..n - 1);
    if k >= exclude {
        k + 1
    } else {
        k
    }
}

/// One iteration of activity-driven contacts for `node`, appended to `out`.
///
/// Draws `Binomial(deg, a_v)` slots; each becomes a uniform neighbor, or
/// with probability `p` a uniform node other than `node`. Duplicates are
/// distinct interaction events.
pub fn sample_contacts_into<R: Rng + ?Sized>(
    node: usize,
    graph: &ContactGraph,
    p: f64,
    rng: &mut R,
    out: &mut Vec<u32>,
) {
    let nbrs = graph.neighbors(node);
    let k = active_slots(nbrs.len(), graph.activation(node), rng);
    let n = graph.node_count();
    out.reserve(k);
    for _ in 0..k {
        if n > 1 && flip(p, rng) {
            out.push(uniform_other(n, node, rng) as u32);
        } else {
            out.push(nbrs[rng.random_range(0..nbrs.len())]);
        }
    }
}

pub fn sample_contacts<R: Rng + ?Sized>(
    node: usize,
    graph: &ContactGraph,
    p: f64,
    rng: &mut R,
) -> Vec<u32> {
    let mut out = Vec::new();
    sample_contacts_into(node, graph, p, rng, &mut out);
    out
}

/// Degree histogram, mostly for diagnostics.
pub fn degree_histogram(graph: &ContactGraph) -> HashMap<usize, usize> {
    let mut hist = HashMap::new();
    for v in 0..graph.node_count() {
        *hist.entry(graph.degree(v)).or_default() += 1;
    }
    hist
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_complete_er() {
        let g = generate_graph(GraphModel::ErdosRenyi { p_edge: 0.0 }, 100, 1).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (100, 0));
        let g = generate_graph(GraphModel::ErdosRenyi { p_edge: 1.0 }, 10, 1).unwrap();
        assert_eq!(g.edge_count(), 45);
        assert!((0..10).all(|v| g.degree(v) == 9));
    }

    #[test]
    fn er_edge_density() {
        let n = 2000;
        let p = 0.01;
        let g = generate_graph(GraphModel::ErdosRenyi { p_edge: p }, n, 3).unwrap();
        let pairs = (n * (n - 1) / 2) as f64;
        let sd = (pairs * p * (1.0 - p)).sqrt();
        assert!((g.edge_count() as f64 - pairs * p).abs() < 4.0 * sd);
    }

    /// Edge count follows from the attachment rule: a clique on m+1 nodes,
    /// then m edges for each of the remaining n-m-1 nodes.
    #[test]
    fn ba_edge_count() {
        let (n, m) = (5000usize, 3usize);
        let counted = m * (m + 1) / 2 + m * (n - m - 1);
        assert_eq!(counted, 14994);
        assert_eq!(counted, m * (n - m) + m);
        let g = generate_graph(GraphModel::BarabasiAlbert { m }, n, 7).unwrap();
        assert_eq!(g.edge_count(), 14994);
        assert!((m + 1..n).all(|v| g.degree(v) >= m));
    }

    #[test]
    fn ba_is_heavier_tailed_than_er() {
        let n = 5000;
        let ba_mean = 2.0 * 14994.0 / n as f64;
        let p_edge = ba_mean / (n - 1) as f64;
        for seed in 0..20 {
            let ba = generate_graph(GraphModel::BarabasiAlbert { m: 3 }, n, seed).unwrap();
            let er = generate_graph(GraphModel::ErdosRenyi { p_edge }, n, seed).unwrap();
            assert!(ba.max_degree() > 3 * er.max_degree(), "seed {seed}");
        }
    }

    #[test]
    fn invalid_generator_parameters() {
        assert!(generate_graph(GraphModel::BarabasiAlbert { m: 3 }, 3, 0).is_err());
        assert!(generate_graph(GraphModel::BarabasiAlbert { m: 0 }, 10, 0).is_err());
        assert!(generate_graph(GraphModel::ErdosRenyi { p_edge: 1.5 }, 10, 0).is_err());
        assert!(generate_graph(GraphModel::ErdosRenyi { p_edge: 0.5 }, 0, 0).is_err());
    }

    #[test]
    fn generation_is_seeded() {
        let a = generate_graph(GraphModel::BarabasiAlbert { m: 2 }, 300, 9).unwrap();
        let b = generate_graph(GraphModel::BarabasiAlbert { m: 2 }, 300, 9).unwrap();
        let c = generate_graph(GraphModel::BarabasiAlbert { m: 2 }, 300, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn self_loops_rejected_duplicates_collapse() {
        assert!(ContactGraph::from_edges(3, [(1, 1)]).is_err());
        assert!(ContactGraph::from_edges(3, [(1, 5)]).is_err());
        let g = ContactGraph::from_edges(3, [(0, 1), (1, 0), (0, 1)]).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert!(g.has_edge(1, 0));
    }

    #[test]
    fn inactive_node_has_no_contacts() {
        let mut g = generate_graph(GraphModel::ErdosRenyi { p_edge: 1.0 }, 20, 0).unwrap();
        g.set_activation(4, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_contacts(4, &g, 0.5, &mut rng).is_empty());
    }

    #[test]
    fn fully_active_local_node_draws_degree_neighbors() {
        let g = generate_graph(GraphModel::BarabasiAlbert { m: 3 }, 200, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for v in 0..200 {
            let contacts = sample_contacts(v, &g, 0.0, &mut rng);
            assert_eq!(contacts.len(), g.degree(v));
            assert!(contacts.iter().all(|&u| g.has_edge(v, u as usize)));
        }
    }

    #[test]
    fn load_edge_list_and_attributes() {
        let dir = tempfile::tempdir().unwrap();
        let edges = dir.path().join("g.txt");
        let nodes = dir.path().join("nodes.csv");
        std::fs::write(&edges, "# toy\n0 1\n1 2\n\n2 0\n").unwrap();
        std::fs::write(&nodes, "node_id,age,gender,activation\n0,15,female,0.5\n3,40,male,\n").unwrap();
        let g = ContactGraph::load(&edges, Some(&nodes)).unwrap();
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.edge_count(), 3);
        assert_eq!(g.activation(0), 0.5);
        assert_eq!(g.activation(3), 1.0);
        assert_eq!(g.attributes(0)["gender"], AttrValue::Text("female".into()));
        assert_eq!(g.attributes(3)["age"], AttrValue::Num(40.0));

        std::fs::write(&edges, "0 x\n").unwrap();
        let err = ContactGraph::load(&edges, None).unwrap_err();
        assert!(err.to_string().contains(":1:"), "{err}");
    }
}
