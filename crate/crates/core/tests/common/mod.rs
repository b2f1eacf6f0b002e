#![allow(dead_code)]

use bowtie::{FeatureVector, WeightedGraph};

/// Brute-force predictors from a dense weight matrix. Shares no code with the
/// library beyond reading the graph's edge list.
pub struct Dense {
    pub n: usize,
    pub w: Vec<Vec<f64>>,
    pub max_w: f64,
}

pub struct OracleFeatures {
    pub k_s: usize,
    pub k_d: usize,
    pub s_s: f64,
    pub s_d: f64,
    pub cc_s: f64,
    pub cc_d: f64,
    pub wcc_s: f64,
    pub wcc_d: f64,
    pub o: f64,
    pub wo: f64,
    pub n_ij: usize,
    pub e_ij: usize,
    pub n_s: usize,
    pub n_d: usize,
    pub e_s: usize,
    pub e_d: usize,
}

impl Dense {
    pub fn of(g: &WeightedGraph) -> Self {
        let n = g.node_count();
        let mut w = vec![vec![0.0; n]; n];
        let mut max_w: f64 = 0.0;
        for (u, v, x) in g.edges() {
            w[u as usize][v as usize] = x;
            w[v as usize][u as usize] = x;
            max_w = max_w.max(x);
        }
        Self { n, w, max_w }
    }

    fn adj(&self, a: usize, b: usize) -> bool {
        self.w[a][b] > 0.0
    }

    fn degree(&self, a: usize) -> usize {
        (0..self.n).filter(|&b| self.adj(a, b)).count()
    }

    fn strength(&self, a: usize) -> f64 {
        self.w[a].iter().sum()
    }

    fn edges_within(&self, set: &[usize]) -> usize {
        let mut c = 0;
        for x in 0..set.len() {
            for y in x + 1..set.len() {
                if self.adj(set[x], set[y]) {
                    c += 1;
                }
            }
        }
        c
    }

    fn local(&self, focal: usize, set: &[usize]) -> (f64, f64) {
        let m = set.len();
        if m < 2 {
            return (0.0, 0.0);
        }
        let pairs = (m * (m - 1) / 2) as f64;
        let mut intensity = 0.0;
        for x in 0..m {
            for y in x + 1..m {
                let (a, b) = (set[x], set[y]);
                if self.adj(a, b) {
                    let p = self.w[focal][a] / self.max_w * self.w[a][b] / self.max_w * self.w[focal][b] / self.max_w;
                    intensity += p.powf(1.0 / 3.0);
                }
            }
        }
        (self.edges_within(set) as f64 / pairs, intensity / pairs)
    }

    pub fn features(&self, i: usize, j: usize) -> OracleFeatures {
        let gi: Vec<usize> = (0..self.n).filter(|&x| x != j && self.adj(i, x) && !self.adj(j, x)).collect();
        let gj: Vec<usize> = (0..self.n).filter(|&x| x != i && self.adj(j, x) && !self.adj(i, x)).collect();
        let gij: Vec<usize> = (0..self.n).filter(|&x| self.adj(i, x) && self.adj(j, x)).collect();
        let (ki, kj) = (self.degree(i), self.degree(j));
        let (si, sj) = (self.strength(i), self.strength(j));
        let (cci, wcci) = self.local(i, &gi);
        let (ccj, wccj) = self.local(j, &gj);
        let o_den = (ki + kj) as f64 - 2.0 - gij.len() as f64;
        let wo_den = si + sj - 2.0 * self.w[i][j];
        let wo_num: f64 = gij.iter().map(|&x| self.w[i][x] + self.w[j][x]).sum();
        let (ei, ej) = (self.edges_within(&gi), self.edges_within(&gj));
        OracleFeatures {
            k_s: ki + kj,
            k_d: ki.abs_diff(kj),
            s_s: si + sj,
            s_d: (si - sj).abs(),
            cc_s: cci + ccj,
            cc_d: (cci - ccj).abs(),
            wcc_s: wcci + wccj,
            wcc_d: (wcci - wccj).abs(),
            o: if o_den > 0.0 { gij.len() as f64 / o_den } else { 0.0 },
            wo: if wo_den > 0.0 { wo_num / wo_den } else { 0.0 },
            n_ij: gij.len(),
            e_ij: self.edges_within(&gij),
            n_s: gi.len() + gj.len(),
            n_d: gi.len().abs_diff(gj.len()),
            e_s: ei + ej,
            e_d: ei.abs_diff(ej),
        }
    }
}

/// First mismatch between library and oracle, if any.
pub fn compare(fv: &FeatureVector, o: &OracleFeatures, tol: f64) -> Option<String> {
    let counts = [
        ("k_s", fv.degree_sum, o.k_s),
        ("k_d", fv.degree_diff, o.k_d),
        ("n_ij", fv.shared_nodes, o.n_ij),
        ("e_ij", fv.shared_edges, o.e_ij),
        ("n_s", fv.nonshared_nodes_sum, o.n_s),
        ("n_d", fv.nonshared_nodes_diff, o.n_d),
        ("e_s", fv.nonshared_edges_sum, o.e_s),
        ("e_d", fv.nonshared_edges_diff, o.e_d),
    ];
    for (name, a, b) in counts {
        if a != b {
            return Some(format!("{name}: {a} vs oracle {b}"));
        }
    }
    let reals = [
        ("s_s", fv.strength_sum, o.s_s),
        ("s_d", fv.strength_diff, o.s_d),
        ("cc_s", fv.clustering_sum, o.cc_s),
        ("cc_d", fv.clustering_diff, o.cc_d),
        ("wcc_s", fv.wclustering_sum, o.wcc_s),
        ("wcc_d", fv.wclustering_diff, o.wcc_d),
        ("o", fv.overlap, o.o),
        ("wo", fv.weighted_overlap, o.wo),
    ];
    for (name, a, b) in reals {
        if (a - b).abs() > tol {
            return Some(format!("{name}: {a} vs oracle {b}"));
        }
    }
    None
}
