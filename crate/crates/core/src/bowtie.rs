//! Bow-tie decomposition of a focal tie `(i, j)`.
//!
//! The neighbours of `i` and `j` (other than the focal pair itself) split into
//! three disjoint groups: `g_i` (adjacent to `i` only), `g_j` (adjacent to `j`
//! only) and `g_ij` (adjacent to both). Every structural predictor of a tie is
//! a function of these groups, the focal degrees/strengths and the edges
//! internal to each group.
//!
//! All neighbour lists are sorted, so group membership is a single linear merge
//! of `N(i)` and `N(j)`, and edges inside a group are found by intersecting
//! each member's neighbour list with the remainder of the group.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attributes::{AttributeTable, SexPair};
use crate::graph::{GraphError, NodeId, WeightedGraph};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BowTieError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("maximum weight must be > 0, got {0}")]
    InvalidMaxWeight(f64),
}

/// Which focal node a per-node quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    I,
    J,
}

/// Node groups around a focal tie and the edges induced among them.
#[derive(Debug, Clone, PartialEq)]
pub struct BowTie {
    pub focal: (NodeId, NodeId),
    pub g_i: Vec<NodeId>,
    pub g_j: Vec<NodeId>,
    pub g_ij: Vec<NodeId>,
    /// Every edge with both endpoints in `g_i ∪ g_j ∪ g_ij`, as `(u, v, w)`
    /// with `u < v`, including edges that cross between groups.
    pub induced_edges: Vec<(NodeId, NodeId, f64)>,
}

/// Structural and attribute predictors of one tie.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub degree_sum: usize,
    pub degree_diff: usize,
    pub strength_sum: f64,
    pub strength_diff: f64,
    pub clustering_sum: f64,
    pub clustering_diff: f64,
    pub wclustering_sum: f64,
    pub wclustering_diff: f64,
    pub age_sum: Option<f64>,
    pub age_diff: Option<f64>,
    pub sex_pair: Option<SexPair>,
    pub same_zip: Option<bool>,
    pub overlap: f64,
    pub weighted_overlap: f64,
    pub shared_nodes: usize,
    pub shared_edges: usize,
    pub nonshared_nodes_sum: usize,
    pub nonshared_nodes_diff: usize,
    pub nonshared_edges_sum: usize,
    pub nonshared_edges_diff: usize,
}

/// Reusable buffers for one focal tie.
#[derive(Debug, Default)]
pub struct Scratch {
    gi: Vec<NodeId>,
    gi_w: Vec<f64>,
    gj: Vec<NodeId>,
    gj_w: Vec<f64>,
    shared: Vec<NodeId>,
    shared_wi: Vec<f64>,
    shared_wj: Vec<f64>,
}

impl Scratch {
    fn fill(&mut self, g: &WeightedGraph, i: NodeId, j: NodeId) {
        self.gi.clear();
        self.gi_w.clear();
        self.gj.clear();
        self.gj_w.clear();
        self.shared.clear();
        self.shared_wi.clear();
        self.shared_wj.clear();

        let (ni, wi) = (g.neighbors(i), g.neighbor_weights(i));
        let (nj, wj) = (g.neighbors(j), g.neighbor_weights(j));
        let (mut a, mut b) = (0, 0);
        loop {
            match (ni.get(a), nj.get(b)) {
                (Some(&x), Some(&y)) if x == y => {
                    self.shared.push(x);
                    self.shared_wi.push(wi[a]);
                    self.shared_wj.push(wj[b]);
                    a += 1;
                    b += 1;
                }
                (Some(&x), Some(&y)) if x < y => {
                    if x != j {
                        self.gi.push(x);
                        self.gi_w.push(wi[a]);
                    }
                    a += 1;
                }
                (Some(_), Some(&y)) => {
                    if y != i {
                        self.gj.push(y);
                        self.gj_w.push(wj[b]);
                    }
                    b += 1;
                }
                (Some(&x), None) => {
                    if x != j {
                        self.gi.push(x);
                        self.gi_w.push(wi[a]);
                    }
                    a += 1;
                }
                (None, Some(&y)) => {
                    if y != i {
                        self.gj.push(y);
                        self.gj_w.push(wj[b]);
                    }
                    b += 1;
                }
                (None, None) => break,
            }
        }
    }
}

/// Calls `visit(position_in_tail, weight)` for every node of `tail` that is in
/// `nbrs`. Both slices must be sorted ascending.
#[inline]
fn for_each_common(nbrs: &[NodeId], nbr_w: &[f64], tail: &[NodeId], mut visit: impl FnMut(usize, f64)) {
    if tail.is_empty() || nbrs.is_empty() {
        return;
    }
    if tail.len() * 16 < nbrs.len() {
        // Short tail against a hub: binary-search each tail member.
        let mut lo = 0;
        for (t, v) in tail.iter().enumerate() {
            match nbrs[lo..].binary_search(v) {
                Ok(pos) => {
                    visit(t, nbr_w[lo + pos]);
                    lo += pos + 1;
                }
                Err(pos) => lo += pos,
            }
            if lo >= nbrs.len() {
                break;
            }
        }
    } else {
        let (mut a, mut b) = (0, 0);
        while a < nbrs.len() && b < tail.len() {
            match nbrs[a].cmp(&tail[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    visit(b, nbr_w[a]);
                    a += 1;
                    b += 1;
                }
            }
        }
    }
}

/// Visits each edge `(members[a], members[b], w)` with `a < b` exactly once.
fn for_each_internal_edge(
    g: &WeightedGraph,
    members: &[NodeId],
    mut visit: impl FnMut(usize, usize, f64),
) {
    for (a, &u) in members.iter().enumerate() {
        let tail = &members[a + 1..];
        for_each_common(g.neighbors(u), g.neighbor_weights(u), tail, |t, w| {
            visit(a, a + 1 + t, w)
        });
    }
}

fn count_internal_edges(g: &WeightedGraph, members: &[NodeId]) -> usize {
    let mut count = 0;
    for_each_internal_edge(g, members, |_, _, _| count += 1);
    count
}

/// Edge count of a group and the sum of cube roots of normalized triangle
/// weights closed with the focal node.
fn group_triangles(
    g: &WeightedGraph,
    members: &[NodeId],
    focal_w: &[f64],
    max_weight: f64,
) -> (usize, f64) {
    let mut count = 0;
    let mut intensity = 0.0;
    for_each_internal_edge(g, members, |a, b, w| {
        count += 1;
        let product = (focal_w[a] / max_weight) * (w / max_weight) * (focal_w[b] / max_weight);
        intensity += product.cbrt();
    });
    (count, intensity)
}

fn pairs(m: usize) -> f64 {
    (m * m.saturating_sub(1)) as f64 / 2.0
}

fn clustering(edges: usize, m: usize) -> f64 {
    if m < 2 {
        0.0
    } else {
        edges as f64 / pairs(m)
    }
}

fn weighted_clustering(intensity: f64, m: usize) -> f64 {
    if m < 2 {
        0.0
    } else {
        intensity / pairs(m)
    }
}

fn unweighted_overlap(shared: usize, k_i: usize, k_j: usize) -> f64 {
    let denom = (k_i + k_j) as f64 - 2.0 - shared as f64;
    if denom <= 0.0 {
        0.0
    } else {
        shared as f64 / denom
    }
}

fn strength_overlap(s: &Scratch, s_i: f64, s_j: f64, w_ij: f64) -> f64 {
    let denom = (s_i + s_j) - 2.0 * w_ij;
    if denom <= 0.0 {
        return 0.0;
    }
    let num: f64 = s
        .shared_wi
        .iter()
        .zip(&s.shared_wj)
        .map(|(a, b)| a + b)
        .sum();
    (num / denom).min(1.0)
}

fn focal_weight(g: &WeightedGraph, i: NodeId, j: NodeId) -> Result<f64, GraphError> {
    g.weight(i, j).ok_or(GraphError::NotAnEdge(i, j))
}

pub fn extract_bowtie(g: &WeightedGraph, i: NodeId, j: NodeId) -> Result<BowTie, GraphError> {
    focal_weight(g, i, j)?;
    let mut s = Scratch::default();
    s.fill(g, i, j);
    let mut union: Vec<NodeId> = s.gi.iter().chain(&s.gj).chain(&s.shared).copied().collect();
    union.sort_unstable();
    let mut induced_edges = Vec::new();
    for_each_internal_edge(g, &union, |a, b, w| induced_edges.push((union[a], union[b], w)));
    Ok(BowTie {
        focal: (i, j),
        g_i: s.gi,
        g_j: s.gj,
        g_ij: s.shared,
        induced_edges,
    })
}

/// Fraction of the joint neighbourhood of `i` and `j` that is shared.
/// Zero when neither endpoint has any other neighbour.
pub fn overlap(g: &WeightedGraph, i: NodeId, j: NodeId) -> Result<f64, GraphError> {
    focal_weight(g, i, j)?;
    let mut s = Scratch::default();
    s.fill(g, i, j);
    Ok(unweighted_overlap(s.shared.len(), g.degree(i), g.degree(j)))
}

/// Share of the endpoints' non-focal strength that goes to common neighbours.
pub fn weighted_overlap(g: &WeightedGraph, i: NodeId, j: NodeId) -> Result<f64, GraphError> {
    let w_ij = focal_weight(g, i, j)?;
    let mut s = Scratch::default();
    s.fill(g, i, j);
    Ok(strength_overlap(&s, g.strength(i), g.strength(j), w_ij))
}

/// Clustering coefficient of one focal node restricted to its non-shared group.
pub fn nonshared_clustering(
    g: &WeightedGraph,
    i: NodeId,
    j: NodeId,
    side: Side,
) -> Result<f64, GraphError> {
    focal_weight(g, i, j)?;
    let mut s = Scratch::default();
    s.fill(g, i, j);
    let members = match side {
        Side::I => &s.gi,
        Side::J => &s.gj,
    };
    Ok(clustering(count_internal_edges(g, members), members.len()))
}

/// Weighted (geometric-mean intensity) clustering of one focal node over its
/// non-shared group, with weights normalized by `max_weight`.
pub fn nonshared_weighted_clustering(
    g: &WeightedGraph,
    i: NodeId,
    j: NodeId,
    side: Side,
    max_weight: f64,
) -> Result<f64, BowTieError> {
    if !(max_weight > 0.0) {
        return Err(BowTieError::InvalidMaxWeight(max_weight));
    }
    focal_weight(g, i, j)?;
    let mut s = Scratch::default();
    s.fill(g, i, j);
    let (members, weights) = match side {
        Side::I => (&s.gi, &s.gi_w),
        Side::J => (&s.gj, &s.gj_w),
    };
    let (_, intensity) = group_triangles(g, members, weights, max_weight);
    Ok(weighted_clustering(intensity, members.len()))
}

/// Computes [`FeatureVector`]s against one graph, normalizing weighted
/// clustering by the graph's maximum weight.
#[derive(Debug, Clone, Copy)]
pub struct FeatureExtractor<'a> {
    graph: &'a WeightedGraph,
    attrs: Option<&'a AttributeTable>,
    max_weight: f64,
}

impl<'a> FeatureExtractor<'a> {
    pub fn new(graph: &'a WeightedGraph, attrs: Option<&'a AttributeTable>) -> Self {
        Self { graph, attrs, max_weight: graph.max_weight() }
    }

    pub fn edge(&self, i: NodeId, j: NodeId, s: &mut Scratch) -> Result<FeatureVector, GraphError> {
        let g = self.graph;
        let w_ij = focal_weight(g, i, j)?;
        s.fill(g, i, j);

        let (k_i, k_j) = (g.degree(i), g.degree(j));
        let (s_i, s_j) = (g.strength(i), g.strength(j));
        let (e_i, int_i) = group_triangles(g, &s.gi, &s.gi_w, self.max_weight);
        let (e_j, int_j) = group_triangles(g, &s.gj, &s.gj_w, self.max_weight);
        let (m_i, m_j) = (s.gi.len(), s.gj.len());
        let (cc_i, cc_j) = (clustering(e_i, m_i), clustering(e_j, m_j));
        let (wcc_i, wcc_j) = (weighted_clustering(int_i, m_i), weighted_clustering(int_j, m_j));

        let mut fv = FeatureVector {
            degree_sum: k_i + k_j,
            degree_diff: k_i.abs_diff(k_j),
            strength_sum: s_i + s_j,
            strength_diff: (s_i - s_j).abs(),
            clustering_sum: cc_i + cc_j,
            clustering_diff: (cc_i - cc_j).abs(),
            wclustering_sum: wcc_i + wcc_j,
            wclustering_diff: (wcc_i - wcc_j).abs(),
            age_sum: None,
            age_diff: None,
            sex_pair: None,
            same_zip: None,
            overlap: unweighted_overlap(s.shared.len(), k_i, k_j),
            weighted_overlap: strength_overlap(s, s_i, s_j, w_ij),
            shared_nodes: s.shared.len(),
            shared_edges: count_internal_edges(g, &s.shared),
            nonshared_nodes_sum: m_i + m_j,
            nonshared_nodes_diff: m_i.abs_diff(m_j),
            nonshared_edges_sum: e_i + e_j,
            nonshared_edges_diff: e_i.abs_diff(e_j),
        };
        if let Some(attrs) = self.attrs {
            set_attribute_features(&mut fv, attrs, i, j);
        }
        Ok(fv)
    }

    /// Features for every pair, in input order, computed in parallel.
    pub fn edges(&self, pairs: &[(NodeId, NodeId)]) -> Result<Vec<FeatureVector>, GraphError> {
        pairs
            .par_iter()
            .map_init(Scratch::default, |s, &(i, j)| self.edge(i, j, s))
            .collect()
    }
}

/// Overwrites the age, sex and zip fields of `fv` from `attrs`; a field is
/// `None` unless both endpoints are observed.
pub fn set_attribute_features(fv: &mut FeatureVector, attrs: &AttributeTable, i: NodeId, j: NodeId) {
    let (age_i, age_j) = (attrs.age(i), attrs.age(j));
    fv.age_sum = age_i.zip(age_j).map(|(a, b)| a + b);
    fv.age_diff = age_i.zip(age_j).map(|(a, b)| (a - b).abs());
    fv.sex_pair = attrs.sex(i).zip(attrs.sex(j)).map(|(a, b)| SexPair::of(a, b));
    fv.same_zip = attrs.zip(i).zip(attrs.zip(j)).map(|(a, b)| a == b);
}

/// Predictors for a single tie.
pub fn edge_features(
    g: &WeightedGraph,
    attrs: &AttributeTable,
    i: NodeId,
    j: NodeId,
) -> Result<FeatureVector, GraphError> {
    FeatureExtractor::new(g, Some(attrs)).edge(i, j, &mut Scratch::default())
}

/// Predictors for every edge of `g` in canonical edge order.
pub fn all_edge_features(
    g: &WeightedGraph,
    attrs: Option<&AttributeTable>,
) -> (Vec<(NodeId, NodeId)>, Vec<FeatureVector>) {
    let pairs: Vec<_> = g.edges().map(|(u, v, _)| (u, v)).collect();
    let feats = FeatureExtractor::new(g, attrs)
        .edges(&pairs)
        .expect("canonical edges exist");
    (pairs, feats)
}
