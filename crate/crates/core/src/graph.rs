//! Undirected communication graphs with 1-based node labels.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};

/// An undirected graph on nodes `1..=n`. Edges are unordered pairs; `{i,j}`
/// and `{j,i}` are the same edge and self-loops are rejected.
#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    /// Sorted list of edges stored as `(min, max)` pairs.
    edges: Vec<(usize, usize)>,
    /// Neighbor lists excluding the node itself, sorted ascending.
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph must have at least one node".into()));
        }
        let mut normalized: Vec<(usize, usize)> = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop on node {a}")));
            }
            for node in [a, b] {
                if node == 0 || node > n {
                    return Err(Error::UnknownNode { node, n });
                }
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        normalized.dedup();
        let mut adjacency = vec![Vec::new(); n + 1];
        for &(a, b) in &normalized {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self { n, edges: normalized, adjacency })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.adjacency.get(i).is_some_and(|l| l.binary_search(&j).is_ok())
    }

    fn check_node(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.n {
            return Err(Error::UnknownNode { node: i, n: self.n });
        }
        Ok(())
    }

    /// Degree of `i` (open neighborhood size).
    pub fn degree(&self, i: usize) -> Result<usize> {
        self.check_node(i)?;
        Ok(self.adjacency[i].len())
    }

    /// Closed neighborhood of `i`: every node sharing an edge with `i`, plus
    /// `i` itself. Returned sorted ascending.
    pub fn neighbor_set(&self, i: usize) -> Result<Vec<usize>> {
        self.check_node(i)?;
        let mut out = self.adjacency[i].clone();
        let pos = out.partition_point(|&j| j < i);
        out.insert(pos, i);
        Ok(out)
    }

    /// Connectivity by breadth-first search from node 1.
    pub fn is_connected(&self) -> bool {
        if self.n == 1 {
            return true;
        }
        let mut seen = vec![false; self.n + 1];
        let mut queue = VecDeque::from([1usize]);
        seen[1] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &self.adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.n
    }

    /// Erdős–Rényi draw: each pair `{i,j}` becomes an edge with probability
    /// `p`, consuming the generator in row-major pair order.
    pub fn erdos_renyi<R: Rng>(n: usize, p: f64, rng: &mut R) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("edge probability {p} not in [0,1]")));
        }
        let mut edges = Vec::new();
        for i in 1..=n {
            for j in (i + 1)..=n {
                if rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        Self::new(n, edges)
    }

    /// Redraw Erdős–Rényi graphs until one is connected.
    pub fn erdos_renyi_connected<R: Rng>(
        n: usize,
        p: f64,
        rng: &mut R,
        max_attempts: usize,
    ) -> Result<Self> {
        for _ in 0..max_attempts {
            let g = Self::erdos_renyi(n, p, rng)?;
            if g.is_connected() {
                return Ok(g);
            }
        }
        Err(Error::ConnectivityRetriesExhausted { attempts: max_attempts })
    }

    /// Parse the plain-text format: first line `n m`, then `m` lines `i j`
    /// with 1-based endpoints.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidGraph("empty graph file".into()))?;
        let mut parts = header.split_whitespace();
        let n: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::InvalidGraph("bad header: expected `n m`".into()))?;
        let m: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::InvalidGraph("bad header: expected `n m`".into()))?;
        let mut edges = Vec::with_capacity(m);
        for _ in 0..m {
            let line = lines
                .next()
                .ok_or_else(|| Error::InvalidGraph(format!("expected {m} edge lines")))?;
            let mut ij = line.split_whitespace();
            let i: usize = ij
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::InvalidGraph(format!("bad edge line: {line:?}")))?;
            let j: usize = ij
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::InvalidGraph(format!("bad edge line: {line:?}")))?;
            edges.push((i, j));
        }
        Self::new(n, edges)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_file_format(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.n, self.edges.len());
        for &(i, j) in &self.edges {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }

    /// Complete graph on `n` nodes.
    pub fn complete(n: usize) -> Self {
        let edges = (1..=n).flat_map(|i| ((i + 1)..=n).map(move |j| (i, j)));
        Self::new(n, edges).expect("complete graph is always valid")
    }

    /// Path graph 1–2–…–n.
    pub fn path(n: usize) -> Self {
        Self::new(n, (1..n).map(|i| (i, i + 1))).expect("path graph is always valid")
    }
}
