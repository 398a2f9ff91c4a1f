//! Clique enumeration and the block selection operator.
//!
//! A clique family indexes a chosen set of cliques of a graph. Member lists
//! are kept strictly ascending; the rank of an agent inside that ordering is
//! the position map used to address its block of a stacked clique vector.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::graph::Graph;

/// A node set inducing a complete subgraph, stored sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clique {
    id: usize,
    members: Vec<usize>,
}

impl Clique {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, node: usize) -> bool {
        self.members.binary_search(&node).is_ok()
    }

    /// 1-based rank of `node` in the ascending member list.
    pub fn position(&self, node: usize) -> Result<usize> {
        self.members
            .binary_search(&node)
            .map(|idx| idx + 1)
            .map_err(|_| Error::NotAMember { node, clique: self.id })
    }
}

/// How a family was selected from the graph's cliques.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CliqueMode {
    All,
    Maximal,
    Edges,
    Custom,
}

/// An indexed family of cliques together with per-agent membership views.
#[derive(Debug, Clone)]
pub struct CliqueFamily {
    n: usize,
    mode: CliqueMode,
    cliques: Vec<Clique>,
    /// `per_agent[i-1]` lists the ids of the cliques containing agent `i`.
    per_agent: Vec<Vec<usize>>,
}

/// Default enumeration cap: generous multiple of the edge count, plus the
/// singletons so that edgeless graphs stay enumerable.
pub fn default_clique_cap(n: usize, edge_count: usize) -> usize {
    10 * n * edge_count + n
}

impl CliqueFamily {
    fn from_sorted_members(n: usize, mode: CliqueMode, mut lists: Vec<Vec<usize>>) -> Self {
        lists.sort();
        lists.dedup();
        let cliques: Vec<Clique> = lists
            .into_iter()
            .enumerate()
            .map(|(id, members)| Clique { id, members })
            .collect();
        let mut per_agent = vec![Vec::new(); n];
        for clique in &cliques {
            for &m in &clique.members {
                per_agent[m - 1].push(clique.id);
            }
        }
        Self { n, mode, cliques, per_agent }
    }

    fn verify_clique(graph: &Graph, members: &[usize]) -> Result<()> {
        for (a_idx, &i) in members.iter().enumerate() {
            for &j in &members[a_idx + 1..] {
                if !graph.has_edge(i, j) {
                    return Err(Error::NotAClique { members: members.to_vec(), i, j });
                }
            }
        }
        Ok(())
    }

    /// Every nonempty node subset inducing a complete subgraph, ordered
    /// lexicographically by member list. Refuses to enumerate past `cap`.
    pub fn enumerate_all_with_cap(graph: &Graph, cap: usize) -> Result<Self> {
        let n = graph.node_count();
        // Grow size-k cliques by appending a larger, fully adjacent node.
        let mut all: Vec<Vec<usize>> = (1..=n).map(|i| vec![i]).collect();
        if all.len() > cap {
            return Err(Error::CliqueExplosion { cap });
        }
        let mut frontier = all.clone();
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for clique in &frontier {
                let last = *clique.last().expect("cliques are nonempty");
                for v in (last + 1)..=n {
                    if clique.iter().all(|&m| graph.has_edge(m, v)) {
                        let mut grown = clique.clone();
                        grown.push(v);
                        next.push(grown);
                    }
                }
            }
            if all.len() + next.len() > cap {
                return Err(Error::CliqueExplosion { cap });
            }
            all.extend(next.iter().cloned());
            frontier = next;
        }
        Ok(Self::from_sorted_members(n, CliqueMode::All, all))
    }

    pub fn enumerate_all(graph: &Graph) -> Result<Self> {
        Self::enumerate_all_with_cap(
            graph,
            default_clique_cap(graph.node_count(), graph.edge_count()),
        )
    }

    /// Inclusion-maximal cliques via Bron–Kerbosch with pivoting, ordered
    /// lexicographically by member list.
    pub fn enumerate_maximal_with_cap(graph: &Graph, cap: usize) -> Result<Self> {
        let n = graph.node_count();
        let mut out: Vec<Vec<usize>> = Vec::new();
        let mut current = Vec::new();
        let candidates: Vec<usize> = (1..=n).collect();
        bron_kerbosch(graph, &mut current, candidates, Vec::new(), &mut out, cap)?;
        Ok(Self::from_sorted_members(n, CliqueMode::Maximal, out))
    }

    pub fn enumerate_maximal(graph: &Graph) -> Result<Self> {
        Self::enumerate_maximal_with_cap(
            graph,
            default_clique_cap(graph.node_count(), graph.edge_count()),
        )
    }

    /// One clique per edge.
    pub fn from_edges(graph: &Graph) -> Self {
        let lists = graph.edges().iter().map(|&(i, j)| vec![i, j]).collect();
        Self::from_sorted_members(graph.node_count(), CliqueMode::Edges, lists)
    }

    /// A caller-supplied family; every member list must induce a complete
    /// subgraph of `graph`.
    pub fn custom(graph: &Graph, member_lists: Vec<Vec<usize>>) -> Result<Self> {
        let n = graph.node_count();
        let mut lists = Vec::with_capacity(member_lists.len());
        for mut members in member_lists {
            members.sort_unstable();
            members.dedup();
            if members.is_empty() {
                return Err(Error::InvalidParameter("empty clique member list".into()));
            }
            for &m in &members {
                if m == 0 || m > n {
                    return Err(Error::UnknownNode { node: m, n });
                }
            }
            Self::verify_clique(graph, &members)?;
            lists.push(members);
        }
        Ok(Self::from_sorted_members(n, CliqueMode::Custom, lists))
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn mode(&self) -> CliqueMode {
        self.mode
    }

    pub fn cliques(&self) -> &[Clique] {
        &self.cliques
    }

    pub fn len(&self) -> usize {
        self.cliques.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cliques.is_empty()
    }

    pub fn clique(&self, id: usize) -> &Clique {
        &self.cliques[id]
    }

    /// Ids of the cliques containing agent `i` (ascending).
    pub fn agent_cliques(&self, i: usize) -> Result<&[usize]> {
        self.per_agent
            .get(i.wrapping_sub(1))
            .map(Vec::as_slice)
            .ok_or(Error::UnknownNode { node: i, n: self.n })
    }

    /// `|Q_G^i|` for agent `i`.
    pub fn agent_clique_count(&self, i: usize) -> Result<usize> {
        Ok(self.agent_cliques(i)?.len())
    }

    /// Total member slots across the family (the selection operator's output
    /// has this many `d`-blocks).
    pub fn total_member_slots(&self) -> usize {
        self.cliques.iter().map(Clique::size).sum()
    }

    /// Gather stacked agent blocks into stacked clique blocks: clique `l`
    /// receives the blocks of its members in ascending order.
    pub fn select(&self, x: &DVector<f64>, d: usize) -> Result<DVector<f64>> {
        if x.len() != self.n * d {
            return Err(Error::DimensionMismatch(format!(
                "select: expected {} entries ({} agents × {d}), got {}",
                self.n * d,
                self.n,
                x.len()
            )));
        }
        let mut out = DVector::zeros(self.total_member_slots() * d);
        let mut offset = 0;
        for clique in &self.cliques {
            for &m in &clique.members {
                out.rows_mut(offset, d).copy_from(&x.rows((m - 1) * d, d));
                offset += d;
            }
        }
        Ok(out)
    }

    /// Gather the blocks of one clique's members out of the stacked agent
    /// vector.
    pub fn gather_clique(&self, id: usize, x: &DVector<f64>, d: usize) -> DVector<f64> {
        let clique = &self.cliques[id];
        let mut out = DVector::zeros(clique.size() * d);
        for (j, &m) in clique.members.iter().enumerate() {
            out.rows_mut(j * d, d).copy_from(&x.rows((m - 1) * d, d));
        }
        out
    }

    /// Adjoint of [`select`](Self::select): scatter-add each clique block back
    /// onto its member's agent block.
    pub fn adjoint_select(&self, v: &DVector<f64>, d: usize) -> Result<DVector<f64>> {
        let expected = self.total_member_slots() * d;
        if v.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "adjoint_select: expected {expected} entries, got {}",
                v.len()
            )));
        }
        let mut out = DVector::zeros(self.n * d);
        let mut offset = 0;
        for clique in &self.cliques {
            for &m in &clique.members {
                let mut block = out.rows_mut((m - 1) * d, d);
                block += v.rows(offset, d);
                offset += d;
            }
        }
        Ok(out)
    }
}

fn intersect_neighbors(graph: &Graph, set: &[usize], v: usize) -> Vec<usize> {
    set.iter().copied().filter(|&u| graph.has_edge(u, v)).collect()
}

fn bron_kerbosch(
    graph: &Graph,
    current: &mut Vec<usize>,
    mut candidates: Vec<usize>,
    mut excluded: Vec<usize>,
    out: &mut Vec<Vec<usize>>,
    cap: usize,
) -> Result<()> {
    if candidates.is_empty() && excluded.is_empty() {
        if out.len() >= cap {
            return Err(Error::CliqueExplosion { cap });
        }
        let mut clique = current.clone();
        clique.sort_unstable();
        out.push(clique);
        return Ok(());
    }
    // Pivot on the vertex covering the most candidates.
    let pivot = candidates
        .iter()
        .chain(excluded.iter())
        .copied()
        .max_by_key(|&u| candidates.iter().filter(|&&v| graph.has_edge(u, v)).count())
        .expect("candidate or excluded set is nonempty");
    let branch: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&v| !graph.has_edge(pivot, v))
        .collect();
    for v in branch {
        current.push(v);
        bron_kerbosch(
            graph,
            current,
            intersect_neighbors(graph, &candidates, v),
            intersect_neighbors(graph, &excluded, v),
            out,
            cap,
        )?;
        current.pop();
        candidates.retain(|&u| u != v);
        excluded.push(v);
    }
    Ok(())
}
