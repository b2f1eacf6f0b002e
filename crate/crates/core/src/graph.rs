//! Immutable undirected weighted graph with sorted (CSR) adjacency, plus the
//! preprocessing steps applied to the raw networks before feature extraction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attributes::AttributeTable;

/// Dense node index, contiguous in `0..node_count`.
pub type NodeId = u32;

/// Number of relationship layers in the village survey schema.
pub const LAYER_COUNT: u8 = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("edge ({src}, {dst}) has invalid weight {weight}; weights must be finite and > 0")]
    InvalidWeight { src: NodeId, dst: NodeId, weight: f64 },
    #[error("node {node} out of range (node count {node_count})")]
    NodeOutOfRange { node: NodeId, node_count: usize },
    #[error("record ({src}, {dst}) has layer {layer}; layers must be < {LAYER_COUNT}")]
    LayerOutOfRange { src: NodeId, dst: NodeId, layer: u8 },
    #[error("({0}, {1}) is not an edge")]
    NotAnEdge(NodeId, NodeId),
}

/// Degree and strength of a single node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeStats {
    pub degree: usize,
    pub strength: f64,
}

/// One directed survey report: `src` named `dst` on relationship `layer`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MultiplexRecord {
    pub src: NodeId,
    pub dst: NodeId,
    pub layer: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    offsets: Vec<usize>,
    neighbors: Vec<NodeId>,
    weights: Vec<f64>,
    strengths: Vec<f64>,
    edge_count: usize,
    max_weight: f64,
}

impl Default for WeightedGraph {
    fn default() -> Self {
        Self {
            offsets: vec![0],
            neighbors: Vec::new(),
            weights: Vec::new(),
            strengths: Vec::new(),
            edge_count: 0,
            max_weight: 0.0,
        }
    }
}

fn canonical(u: NodeId, v: NodeId) -> (NodeId, NodeId) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

impl WeightedGraph {
    /// Builds a graph whose node count is one past the largest id mentioned.
    /// Duplicate pairs (in either direction) are summed into a single edge.
    pub fn from_edges(edges: &[(NodeId, NodeId, f64)]) -> Result<Self, GraphError> {
        let n = edges
            .iter()
            .map(|&(u, v, _)| u.max(v) as usize + 1)
            .max()
            .unwrap_or(0);
        Self::with_node_count(n, edges)
    }

    pub fn with_node_count(
        node_count: usize,
        edges: &[(NodeId, NodeId, f64)],
    ) -> Result<Self, GraphError> {
        let mut canon = Vec::with_capacity(edges.len());
        for &(u, v, w) in edges {
            for node in [u, v] {
                if node as usize >= node_count {
                    return Err(GraphError::NodeOutOfRange { node, node_count });
                }
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(GraphError::InvalidWeight { src: u, dst: v, weight: w });
            }
            let (a, b) = canonical(u, v);
            canon.push((a, b, w));
        }
        // Sorting on the weight as well fixes the summation order of
        // duplicates, so any permutation of the input gives identical bits.
        canon.sort_unstable_by(|x, y| {
            (x.0, x.1)
                .cmp(&(y.0, y.1))
                .then_with(|| x.2.total_cmp(&y.2))
        });
        let mut merged: Vec<(NodeId, NodeId, f64)> = Vec::with_capacity(canon.len());
        for (u, v, w) in canon {
            match merged.last_mut() {
                Some(last) if last.0 == u && last.1 == v => last.2 += w,
                _ => merged.push((u, v, w)),
            }
        }
        Ok(Self::from_canonical(node_count, &merged))
    }

    /// `edges` must be strictly sorted by `(u, v)` with `u < v` and valid weights.
    fn from_canonical(node_count: usize, edges: &[(NodeId, NodeId, f64)]) -> Self {
        let mut degree = vec![0usize; node_count];
        for &(u, v, _) in edges {
            degree[u as usize] += 1;
            degree[v as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(node_count + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let total = *offsets.last().unwrap();
        let mut neighbors = vec![0; total];
        let mut weights = vec![0.0; total];
        let mut cursor: Vec<usize> = offsets[..node_count].to_vec();
        // For node x, partners u < x arrive (ascending) before partners v > x
        // (ascending), so the lists come out sorted.
        for &(u, v, w) in edges {
            let (ui, vi) = (u as usize, v as usize);
            neighbors[cursor[ui]] = v;
            weights[cursor[ui]] = w;
            cursor[ui] += 1;
            neighbors[cursor[vi]] = u;
            weights[cursor[vi]] = w;
            cursor[vi] += 1;
        }
        let strengths = (0..node_count)
            .map(|i| weights[offsets[i]..offsets[i + 1]].iter().sum())
            .collect();
        let max_weight = edges.iter().map(|e| e.2).fold(0.0, f64::max);
        Self {
            offsets,
            neighbors,
            weights,
            strengths,
            edge_count: edges.len(),
            max_weight,
        }
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Largest edge weight in the graph (0 for an edgeless graph).
    pub fn max_weight(&self) -> f64 {
        self.max_weight
    }

    #[inline]
    pub fn neighbors(&self, i: NodeId) -> &[NodeId] {
        let i = i as usize;
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Weights aligned with [`Self::neighbors`].
    #[inline]
    pub fn neighbor_weights(&self, i: NodeId) -> &[f64] {
        let i = i as usize;
        &self.weights[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn adjacency(&self, i: NodeId) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.neighbors(i)
            .iter()
            .copied()
            .zip(self.neighbor_weights(i).iter().copied())
    }

    #[inline]
    pub fn degree(&self, i: NodeId) -> usize {
        let i = i as usize;
        self.offsets[i + 1] - self.offsets[i]
    }

    #[inline]
    pub fn strength(&self, i: NodeId) -> f64 {
        self.strengths[i as usize]
    }

    pub fn weight(&self, i: NodeId, j: NodeId) -> Option<f64> {
        if i as usize >= self.node_count() || j as usize >= self.node_count() {
            return None;
        }
        self.neighbors(i)
            .binary_search(&j)
            .ok()
            .map(|pos| self.neighbor_weights(i)[pos])
    }

    pub fn has_edge(&self, i: NodeId, j: NodeId) -> bool {
        self.weight(i, j).is_some()
    }

    pub fn node_stats(&self, i: NodeId) -> Result<NodeStats, GraphError> {
        if i as usize >= self.node_count() {
            return Err(GraphError::NodeOutOfRange { node: i, node_count: self.node_count() });
        }
        Ok(NodeStats { degree: self.degree(i), strength: self.strength(i) })
    }

    /// Edges as `(u, v, w)` with `u < v`, sorted by `(u, v)`. This is the
    /// canonical row order used throughout the pipeline.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        (0..self.node_count() as NodeId).flat_map(move |u| {
            let start = self.neighbors(u).partition_point(|&v| v <= u);
            self.neighbors(u)[start..]
                .iter()
                .zip(&self.neighbor_weights(u)[start..])
                .map(move |(&v, &w)| (u, v, w))
        })
    }

    pub fn edge_list(&self) -> Vec<(NodeId, NodeId, f64)> {
        self.edges().collect()
    }

    /// Keeps the edges for which `keep` returns true. Node ids are unchanged.
    pub fn retain_edges<F>(&self, mut keep: F) -> Self
    where
        F: FnMut(NodeId, NodeId, f64) -> bool,
    {
        let kept: Vec<_> = self.edges().filter(|&(u, v, w)| keep(u, v, w)).collect();
        Self::from_canonical(self.node_count(), &kept)
    }

    /// Same topology with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, GraphError> {
        let edges: Vec<_> = self.edges().map(|(u, v, w)| (u, v, w * factor)).collect();
        Self::with_node_count(self.node_count(), &edges)
    }
}

/// Collapses directed, layered survey reports into an undirected graph whose
/// weight is the number of distinct layers observed between each pair.
pub fn union_multiplex(records: &[MultiplexRecord]) -> Result<WeightedGraph, GraphError> {
    let n = records
        .iter()
        .map(|r| r.src.max(r.dst) as usize + 1)
        .max()
        .unwrap_or(0);
    union_multiplex_with_node_count(n, records)
}

pub fn union_multiplex_with_node_count(
    node_count: usize,
    records: &[MultiplexRecord],
) -> Result<WeightedGraph, GraphError> {
    let mut canon = Vec::with_capacity(records.len());
    for r in records {
        if r.layer >= LAYER_COUNT {
            return Err(GraphError::LayerOutOfRange { src: r.src, dst: r.dst, layer: r.layer });
        }
        for node in [r.src, r.dst] {
            if node as usize >= node_count {
                return Err(GraphError::NodeOutOfRange { node, node_count });
            }
        }
        if r.src == r.dst {
            return Err(GraphError::SelfLoop(r.src));
        }
        let (u, v) = canonical(r.src, r.dst);
        canon.push((u, v, r.layer));
    }
    canon.sort_unstable();
    canon.dedup();
    let mut edges: Vec<(NodeId, NodeId, f64)> = Vec::new();
    for (u, v, _) in canon {
        match edges.last_mut() {
            Some(last) if last.0 == u && last.1 == v => last.2 += 1.0,
            _ => edges.push((u, v, 1.0)),
        }
    }
    Ok(WeightedGraph::from_canonical(node_count, &edges))
}

/// Outcome counts of [`filter_same_household`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HouseholdFilterReport {
    pub retained: usize,
    pub same_household_removed: usize,
    pub missing_household_dropped: usize,
}

/// Removes ties between members of the same household. Edges where either
/// endpoint has no household code are dropped and counted separately.
pub fn filter_same_household(
    g: &WeightedGraph,
    attrs: &AttributeTable,
) -> (WeightedGraph, HouseholdFilterReport) {
    let mut report = HouseholdFilterReport::default();
    let filtered = g.retain_edges(|u, v, _| {
        match (attrs.household(u), attrs.household(v)) {
            (Some(a), Some(b)) if a == b => {
                report.same_household_removed += 1;
                false
            }
            (Some(_), Some(_)) => {
                report.retained += 1;
                true
            }
            _ => {
                report.missing_household_dropped += 1;
                false
            }
        }
    });
    (filtered, report)
}

/// Removes isolated ties: edges whose endpoints both have degree one.
/// Repeats until no such edge remains.
pub fn remove_isolated_ties(g: &WeightedGraph) -> WeightedGraph {
    let mut current = g.clone();
    loop {
        let before = current.edge_count();
        let next = current.retain_edges(|u, v, _| !(current.degree(u) == 1 && current.degree(v) == 1));
        if next.edge_count() == before {
            return next;
        }
        current = next;
    }
}
