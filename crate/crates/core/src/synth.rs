//! Seeded synthetic networks for tests, fixtures and demos.
//!
//! Generators cover plain random weighted graphs, community graphs, a planted
//! tie-strength network whose layer counts rise with overlap and fall with
//! non-shared clustering, village-style multiplex surveys with households,
//! and daily call records.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::attributes::{AttributeTable, Sex};
use crate::bowtie::all_edge_features;
use crate::graph::{MultiplexRecord, NodeId, WeightedGraph, LAYER_COUNT};
use crate::learn::{Dataset, LearnError};

/// Relationship layer names used for village fixtures.
pub const LAYER_NAMES: [&str; LAYER_COUNT as usize] = [
    "borrowmoney",
    "lendmoney",
    "keroricecome",
    "keroricego",
    "visitcome",
    "visitgo",
    "medic",
    "nonrel",
    "rel",
    "templecompany",
    "giveadvice",
    "helpdecision",
];

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdős–Rényi graph on exactly `n` nodes. About half the weights are small
/// integers, so equal weights are common; the rest are continuous.
pub fn random_weighted_graph(n: usize, p: f64, seed: u64) -> WeightedGraph {
    let mut r = rng(seed);
    let mut edges = Vec::new();
    for u in 0..n as NodeId {
        for v in u + 1..n as NodeId {
            if r.random::<f64>() < p {
                let w = if r.random::<bool>() {
                    r.random_range(1..=4) as f64
                } else {
                    r.random_range(0.01..5.0)
                };
                edges.push((u, v, w));
            }
        }
    }
    WeightedGraph::with_node_count(n, &edges).expect("generated edges are valid")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommunityParams {
    pub nodes: usize,
    /// Consecutive ids `c*size .. (c+1)*size` form community `c`.
    pub community_size: usize,
    /// Expected within-community degree.
    pub within_degree: f64,
    /// Expected degree to nodes anywhere in the graph.
    pub between_degree: f64,
}

impl CommunityParams {
    pub fn community_of(&self, v: NodeId) -> usize {
        v as usize / self.community_size.max(1)
    }
}

/// Distinct canonical pairs `(u, v)`, `u < v`, in ascending order. Pairs are
/// drawn with replacement and deduplicated, so realized degrees fall slightly
/// below the targets in dense communities.
pub fn community_pairs(params: &CommunityParams, seed: u64) -> Vec<(NodeId, NodeId)> {
    let mut r = rng(seed);
    let n = params.nodes;
    let size = params.community_size.max(1);
    let mut pairs: Vec<(NodeId, NodeId)> = Vec::new();
    let push = |a: usize, b: usize, out: &mut Vec<(NodeId, NodeId)>| {
        if a != b {
            out.push((a.min(b) as NodeId, a.max(b) as NodeId));
        }
    };
    let mut start = 0;
    while start < n {
        let len = size.min(n - start);
        if len >= 2 {
            let draws = (len as f64 * params.within_degree / 2.0).round() as usize;
            for _ in 0..draws {
                let a = start + r.random_range(0..len);
                let b = start + r.random_range(0..len);
                push(a, b, &mut pairs);
            }
        }
        start += len;
    }
    if n >= 2 {
        let draws = (n as f64 * params.between_degree / 2.0).round() as usize;
        for _ in 0..draws {
            let a = r.random_range(0..n);
            let b = r.random_range(0..n);
            push(a, b, &mut pairs);
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

/// Community graph with weights drawn uniformly from `[0.5, 10)`.
pub fn community_graph(params: &CommunityParams, seed: u64) -> WeightedGraph {
    let pairs = community_pairs(params, seed);
    let mut r = rng(seed ^ 0x9e37_79b9_7f4a_7c15);
    let edges: Vec<_> = pairs.iter().map(|&(u, v)| (u, v, r.random_range(0.5..10.0))).collect();
    WeightedGraph::with_node_count(params.nodes, &edges).expect("generated edges are valid")
}

/// Layer counts planted as `min(12, 1 + Poisson(exp(a + b*o - c*cc_s)))`,
/// where `o` is unweighted overlap and `cc_s` the summed non-shared
/// clustering of the unweighted graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedStrength {
    pub intercept: f64,
    pub overlap_effect: f64,
    pub clustering_effect: f64,
}

impl Default for PlantedStrength {
    fn default() -> Self {
        Self { intercept: 0.5, overlap_effect: 3.0, clustering_effect: 1.5 }
    }
}

impl PlantedStrength {
    fn draw(&self, overlap: f64, clustering_sum: f64, r: &mut ChaCha8Rng) -> f64 {
        let rate = (self.intercept + self.overlap_effect * overlap - self.clustering_effect * clustering_sum).exp();
        let extra = Poisson::new(rate).map(|d| d.sample(r)).unwrap_or(0.0);
        (1.0 + extra).min(LAYER_COUNT as f64)
    }
}

/// Weights planted by `plant` on the pairs of `pairs`.
pub fn plant_strength(
    node_count: usize,
    pairs: &[(NodeId, NodeId)],
    plant: &PlantedStrength,
    seed: u64,
) -> WeightedGraph {
    let binary: Vec<_> = pairs.iter().map(|&(u, v)| (u, v, 1.0)).collect();
    let g = WeightedGraph::with_node_count(node_count, &binary).expect("generated edges are valid");
    let (canon, feats) = all_edge_features(&g, None);
    let mut r = rng(seed);
    let edges: Vec<_> = canon
        .iter()
        .zip(&feats)
        .map(|(&(u, v), f)| (u, v, plant.draw(f.overlap, f.clustering_sum, &mut r)))
        .collect();
    WeightedGraph::with_node_count(node_count, &edges).expect("generated edges are valid")
}

pub fn hypothesis_network(params: &CommunityParams, plant: &PlantedStrength, seed: u64) -> WeightedGraph {
    let pairs = community_pairs(params, seed);
    plant_strength(params.nodes, &pairs, plant, seed.wrapping_add(1))
}

/// Independent covariates `wo ~ U(0,1)`, `cc_s ~ U(0,2)`, `I_FM ~ Bernoulli(1/2)`
/// with a Poisson response whose log mean is
/// `intercept + b[0]*wo + b[1]*cc_s + b[2]*I_FM`.
pub fn poisson_regression_sample(n: usize, intercept: f64, b: [f64; 3], seed: u64) -> Result<Dataset, LearnError> {
    let mut r = rng(seed);
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row = vec![r.random::<f64>(), 2.0 * r.random::<f64>(), r.random::<bool>() as u8 as f64];
        let eta = intercept + row.iter().zip(&b).map(|(x, c)| x * c).sum::<f64>();
        y.push(Poisson::new(eta.exp()).expect("finite rate").sample(&mut r));
        rows.push(row);
    }
    Dataset::from_rows(&["wo", "cc_s", "I_FM"], &rows, y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VillageParams {
    pub households: usize,
    pub max_household_size: usize,
    /// Households per hamlet; hamlets play the role of communities.
    pub hamlet_households: usize,
    pub within_degree: f64,
    pub between_degree: f64,
    /// Probability that a within-household tie spans all twelve layers.
    pub household_full_strength: f64,
    pub plant: PlantedStrength,
    /// Probability that each of age and sex is unobserved.
    pub missing: f64,
}

impl Default for VillageParams {
    fn default() -> Self {
        Self {
            households: 300,
            max_household_size: 5,
            hamlet_households: 12,
            within_degree: 6.0,
            between_degree: 1.5,
            household_full_strength: 0.9,
            plant: PlantedStrength::default(),
            missing: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Village {
    pub node_count: usize,
    pub records: Vec<MultiplexRecord>,
    pub attrs: AttributeTable,
}

/// Survey-style multiplex network. Household members are all tied, mostly at
/// full strength; other ties follow [`PlantedStrength`] on a hamlet
/// community graph. Each tie of strength `w` appears as `w` distinct layers,
/// each reported in a random direction.
pub fn village(params: &VillageParams, seed: u64) -> Village {
    let mut r = rng(seed);
    let mut household_of = Vec::new();
    for h in 0..params.households {
        let size = r.random_range(1..=params.max_household_size.max(1));
        household_of.extend(std::iter::repeat_n(h, size));
    }
    let n = household_of.len();
    let hamlet_size = (n as f64 / params.households.max(1) as f64 * params.hamlet_households as f64).ceil() as usize;
    let community = CommunityParams {
        nodes: n,
        community_size: hamlet_size.max(2),
        within_degree: params.within_degree,
        between_degree: params.between_degree,
    };
    let mut pairs = community_pairs(&community, seed.wrapping_add(1));
    pairs.retain(|&(u, v)| household_of[u as usize] != household_of[v as usize]);
    let social = plant_strength(n, &pairs, &params.plant, seed.wrapping_add(2));

    let mut edges: Vec<(NodeId, NodeId, f64)> = social.edge_list();
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end < n && household_of[end] == household_of[start] {
            end += 1;
        }
        for u in start..end {
            for v in u + 1..end {
                let w = if r.random::<f64>() < params.household_full_strength {
                    LAYER_COUNT as f64
                } else {
                    r.random_range(1..LAYER_COUNT) as f64
                };
                edges.push((u as NodeId, v as NodeId, w));
            }
        }
        start = end;
    }
    edges.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

    let mut records = Vec::new();
    for &(u, v, w) in &edges {
        for layer in index::sample(&mut r, LAYER_COUNT as usize, w as usize).into_vec() {
            let (src, dst) = if r.random::<bool>() { (u, v) } else { (v, u) };
            records.push(MultiplexRecord { src, dst, layer: layer as u8 });
        }
    }

    let mut attrs = AttributeTable::new(n);
    for v in 0..n {
        let id = v as NodeId;
        attrs.set_household(id, format!("h{}", household_of[v]));
        if r.random::<f64>() >= params.missing {
            attrs.set_age(id, r.random_range(16..80) as f64);
        }
        let sex = if r.random::<bool>() { Sex::F } else { Sex::M };
        if r.random::<f64>() >= params.missing {
            attrs.set_sex(id, sex);
        }
    }
    Village { node_count: n, records, attrs }
}

impl Village {
    /// Writes `multiplex.csv`, `layers.csv` and `attributes.csv` with labels `n<id>`.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        let mut m = fs::File::create(dir.join("multiplex.csv"))?;
        writeln!(m, "src,dst,layer")?;
        for rec in &self.records {
            writeln!(m, "n{},n{},{}", rec.src, rec.dst, LAYER_NAMES[rec.layer as usize])?;
        }
        let mut l = fs::File::create(dir.join("layers.csv"))?;
        writeln!(l, "layer,index")?;
        for (k, name) in LAYER_NAMES.iter().enumerate() {
            writeln!(l, "{name},{k}")?;
        }
        write_attribute_rows(&self.attrs, &dir.join("attributes.csv"))
    }
}

fn write_attribute_rows(attrs: &AttributeTable, path: &Path) -> std::io::Result<()> {
    let mut a = fs::File::create(path)?;
    writeln!(a, "node,age,sex,zip,household")?;
    for (v, row) in attrs.rows().iter().enumerate() {
        writeln!(
            a,
            "n{v},{},{},{},{}",
            row.age.map(|x| x.to_string()).unwrap_or_default(),
            row.sex.map(|x| x.to_string()).unwrap_or_default(),
            row.zip.as_deref().unwrap_or(""),
            row.household.as_deref().unwrap_or(""),
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdrParams {
    pub community: CommunityParams,
    pub days: u32,
    /// Log total minutes are `base + overlap_effect*o - clustering_effect*cc_s + N(0, noise)`.
    pub base_log_minutes: f64,
    pub overlap_effect: f64,
    pub clustering_effect: f64,
    pub noise: f64,
    /// Probability a node's zip is drawn at random instead of from its community.
    pub zip_noise: f64,
    pub missing_age: f64,
    pub missing_sex: f64,
    pub missing_zip: f64,
}

impl Default for CdrParams {
    fn default() -> Self {
        Self {
            community: CommunityParams { nodes: 600, community_size: 30, within_degree: 6.0, between_degree: 1.0 },
            days: 30,
            base_log_minutes: 2.0,
            overlap_effect: 2.0,
            clustering_effect: 0.8,
            noise: 0.5,
            zip_noise: 0.1,
            missing_age: 0.0,
            missing_sex: 0.0,
            missing_zip: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CallRecord {
    pub day: u32,
    pub caller: NodeId,
    pub callee: NodeId,
    pub minutes: f64,
    pub calls: u32,
    pub sms: u32,
    pub mms: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallData {
    pub node_count: usize,
    pub records: Vec<CallRecord>,
    pub attrs: AttributeTable,
}

/// Daily call records whose per-pair totals follow a planted log-linear
/// model, plus SMS-only days that carry no duration. Zips follow
/// communities; ages drift with community.
pub fn call_records(params: &CdrParams, seed: u64) -> CallData {
    let c = &params.community;
    let pairs = community_pairs(c, seed);
    let binary: Vec<_> = pairs.iter().map(|&(u, v)| (u, v, 1.0)).collect();
    let g = WeightedGraph::with_node_count(c.nodes, &binary).expect("generated edges are valid");
    let (canon, feats) = all_edge_features(&g, None);
    let mut r = rng(seed.wrapping_add(1));
    let noise = Normal::new(0.0, params.noise.max(0.0)).expect("finite noise");
    let days = params.days.max(1);
    let mut records = Vec::new();
    for (&(u, v), f) in canon.iter().zip(&feats) {
        let log_total = params.base_log_minutes + params.overlap_effect * f.overlap
            - params.clustering_effect * f.clustering_sum
            + noise.sample(&mut r);
        let total = log_total.exp().max(0.1);
        let active = (1 + r.random_range(0..4)).min(days as usize);
        let chosen = index::sample(&mut r, days as usize, active).into_vec();
        let shares: Vec<f64> = (0..active).map(|_| r.random_range(0.2..1.0)).collect();
        let norm: f64 = shares.iter().sum();
        let mut chosen = chosen;
        chosen.sort_unstable();
        for (day, share) in chosen.iter().zip(&shares) {
            let (caller, callee) = if r.random::<bool>() { (u, v) } else { (v, u) };
            records.push(CallRecord {
                day: *day as u32,
                caller,
                callee,
                minutes: total * share / norm,
                calls: 1 + r.random_range(0..3),
                sms: r.random_range(0..3),
                mms: 0,
            });
        }
        if r.random::<f64>() < 0.1 {
            records.push(CallRecord {
                day: r.random_range(0..days),
                caller: u,
                callee: v,
                minutes: 0.0,
                calls: 0,
                sms: 1,
                mms: 0,
            });
        }
    }
    records.sort_by(|a, b| (a.day, a.caller, a.callee).cmp(&(b.day, b.caller, b.callee)).then(a.minutes.total_cmp(&b.minutes)));

    let mut attrs = AttributeTable::new(c.nodes);
    let communities = c.nodes.div_ceil(c.community_size.max(1));
    for v in 0..c.nodes as NodeId {
        let home = c.community_of(v);
        if r.random::<f64>() >= params.missing_zip {
            let zip = if r.random::<f64>() < params.zip_noise { r.random_range(0..communities) } else { home };
            attrs.set_zip(v, format!("z{zip:03}"));
        }
        let age = (25.0 + 2.0 * (home % 10) as f64 + r.random_range(-8.0..8.0)).round();
        if r.random::<f64>() >= params.missing_age {
            attrs.set_age(v, age);
        }
        let sex = if r.random::<bool>() { Sex::F } else { Sex::M };
        if r.random::<f64>() >= params.missing_sex {
            attrs.set_sex(v, sex);
        }
    }
    CallData { node_count: c.nodes, records, attrs }
}

impl CallData {
    /// Writes `calls.csv` and `attributes.csv` with labels `n<id>`.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        let mut f = fs::File::create(dir.join("calls.csv"))?;
        writeln!(f, "date,caller,callee,duration_min,calls,sms,mms")?;
        for rec in &self.records {
            writeln!(
                f,
                "day{:03},n{},n{},{},{},{},{}",
                rec.day, rec.caller, rec.callee, rec.minutes, rec.calls, rec.sms, rec.mms
            )?;
        }
        write_attribute_rows(&self.attrs, &dir.join("attributes.csv"))
    }
}

/// Writes `edges.csv` (`src,dst,weight`) with labels `n<id>`.
pub fn write_edge_list(g: &WeightedGraph, path: &Path) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "src,dst,weight")?;
    for (u, v, w) in g.edges() {
        writeln!(f, "n{u},n{v},{w}")?;
    }
    f.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::union_multiplex_with_node_count;

    #[test]
    fn generators_are_seeded() {
        assert_eq!(random_weighted_graph(30, 0.2, 4), random_weighted_graph(30, 0.2, 4));
        assert_ne!(random_weighted_graph(30, 0.2, 4), random_weighted_graph(30, 0.2, 5));
        let p = CommunityParams { nodes: 200, community_size: 20, within_degree: 5.0, between_degree: 1.0 };
        let pairs = community_pairs(&p, 1);
        assert!(pairs.windows(2).all(|w| w[0] < w[1]));
        assert!(pairs.iter().all(|&(u, v)| u < v));
        let within = pairs.iter().filter(|&&(u, v)| p.community_of(u) == p.community_of(v)).count();
        assert!(within * 2 > pairs.len());
    }

    #[test]
    fn village_layers_match_strengths() {
        let v = village(&VillageParams { households: 40, ..Default::default() }, 3);
        let g = union_multiplex_with_node_count(v.node_count, &v.records).unwrap();
        assert!(g.edges().all(|(_, _, w)| (1.0..=12.0).contains(&w) && w.fract() == 0.0));
        assert!(g.edges().any(|(_, _, w)| w == 12.0));
        assert!(v.attrs.has_any_household());
    }

    #[test]
    fn call_totals_are_positive() {
        let d = call_records(&CdrParams::default(), 2);
        assert!(d.records.iter().all(|r| r.minutes >= 0.0));
        assert!(d.records.iter().any(|r| r.minutes == 0.0));
        assert!(d.attrs.has_any_zip());
    }
}
