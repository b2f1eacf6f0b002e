use std::collections::BTreeSet;

use bowtie::bowtie::all_edge_features;
use bowtie::eval::{accuracy_curve, holdout_split, sample_edges, threshold_grid};
use bowtie::learn::{fold_assignment, soft_threshold};
use bowtie::strength::{apply_transform, averaged_strength, invert, normalized_strengths, Orientation};
use bowtie::WeightedGraph;
use proptest::prelude::*;

fn graph() -> impl Strategy<Value = WeightedGraph> {
    (3usize..25)
        .prop_flat_map(|n| {
            proptest::collection::vec(((0..n as u32), (0..n as u32), 0.1f64..20.0), 1..80)
                .prop_map(move |raw| (n, raw))
        })
        .prop_filter_map("needs an edge", |(n, raw)| {
            let edges: Vec<_> = raw.into_iter().filter(|(u, v, _)| u != v).collect();
            if edges.is_empty() {
                return None;
            }
            WeightedGraph::with_node_count(n, &edges).ok()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn feature_ranges_and_identities(g in graph()) {
        let (_, feats) = all_edge_features(&g, None);
        for fv in &feats {
            prop_assert!((0.0..=1.0).contains(&fv.overlap));
            prop_assert!((0.0..=1.0).contains(&fv.weighted_overlap));
            prop_assert!((0.0..=2.0).contains(&fv.clustering_sum));
            prop_assert!((0.0..=2.0 + 1e-12).contains(&fv.wclustering_sum));
            prop_assert!(fv.clustering_diff <= fv.clustering_sum + 1e-15);
            prop_assert_eq!(fv.degree_sum, fv.nonshared_nodes_sum + 2 * fv.shared_nodes + 2);
            prop_assert_eq!(fv.degree_diff, fv.nonshared_nodes_diff);
            prop_assert!(fv.wclustering_sum <= fv.clustering_sum + 1e-12);
        }
    }

    #[test]
    fn scale_invariance(g in graph(), c in 0.01f64..100.0) {
        let scaled = g.scaled(c).unwrap();
        let (_, a) = all_edge_features(&g, None);
        let (_, b) = all_edge_features(&scaled, None);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.overlap - y.overlap).abs() < 1e-12);
            prop_assert!((x.weighted_overlap - y.weighted_overlap).abs() < 1e-9);
            prop_assert!((x.wclustering_sum - y.wclustering_sum).abs() < 1e-9);
            prop_assert!((x.strength_sum * c - y.strength_sum).abs() < 1e-9 * y.strength_sum.max(1.0));
        }
    }

    #[test]
    fn relabeling_preserves_features(g in graph()) {
        let n = g.node_count() as u32;
        let flip = |v: u32| n - 1 - v;
        let edges: Vec<_> = g.edges().map(|(u, v, w)| (flip(u), flip(v), w)).collect();
        let h = WeightedGraph::with_node_count(n as usize, &edges).unwrap();
        let (pa, fa) = all_edge_features(&g, None);
        let (pb, fb) = all_edge_features(&h, None);
        for (k, &(u, v)) in pa.iter().enumerate() {
            let key = (flip(v).min(flip(u)), flip(v).max(flip(u)));
            let other = &fb[pb.iter().position(|&p| p == key).unwrap()];
            let x = &fa[k];
            prop_assert_eq!(x.shared_edges, other.shared_edges);
            prop_assert_eq!(x.nonshared_edges_sum, other.nonshared_edges_sum);
            prop_assert!((x.clustering_sum - other.clustering_sum).abs() < 1e-12);
            prop_assert!((x.wclustering_diff - other.wclustering_diff).abs() < 1e-12);
            prop_assert!((x.weighted_overlap - other.weighted_overlap).abs() < 1e-12);
        }
    }

    #[test]
    fn normalized_strengths_sum_to_one_per_node(g in graph()) {
        let y = normalized_strengths(&g, true).unwrap();
        let mut totals = vec![0.0; g.node_count()];
        for r in &y.rows {
            let from = if r.orientation == Orientation::Ji { r.dst } else { r.src };
            totals[from as usize] += r.value;
        }
        for (v, t) in totals.iter().enumerate() {
            if g.degree(v as u32) > 0 {
                prop_assert!((t - 1.0).abs() < 1e-9);
            }
        }
        let z = averaged_strength(&g).unwrap();
        prop_assert_eq!(z.len() * 2, y.len());
    }

    #[test]
    fn log_center_round_trips(g in graph()) {
        let z = averaged_strength(&g).unwrap();
        let t = apply_transform(&z).unwrap();
        let mean = t.values().iter().sum::<f64>() / t.len() as f64;
        prop_assert!(mean.abs() < 1e-9);
        for (a, b) in invert(&t).rows.iter().zip(&z.rows) {
            prop_assert!((a.value - b.value).abs() <= 1e-12 * b.value.max(1.0));
        }
    }

    #[test]
    fn accuracy_curve_is_a_cdf(res in proptest::collection::vec(-50.0f64..50.0, 1..200)) {
        let max = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        let grid = threshold_grid(max);
        let curve = accuracy_curve(&res, &grid);
        prop_assert!(curve.windows(2).all(|w| w[0].threshold <= w[1].threshold && w[0].fraction <= w[1].fraction));
        prop_assert_eq!(curve.last().unwrap().fraction, 1.0);
        for t in [0.05, 0.1, 1.0] {
            prop_assert!(grid.contains(&t));
        }
    }

    #[test]
    fn edge_sample_is_a_deterministic_subset(g in graph(), frac in 0.0f64..=1.0, seed in any::<u64>()) {
        let n = (g.edge_count() as f64 * frac) as usize;
        let a = sample_edges(&g, n, seed).unwrap();
        prop_assert_eq!(&a, &sample_edges(&g, n, seed).unwrap());
        let set: BTreeSet<_> = a.iter().copied().collect();
        prop_assert_eq!(set.len(), n);
        prop_assert!(a.iter().all(|&(u, v)| g.has_edge(u, v)));
        prop_assert!(sample_edges(&g, g.edge_count() + 1, seed).is_err());
    }

    #[test]
    fn holdout_split_partitions(n in 0usize..500, f in 0.0f64..0.99, seed in any::<u64>()) {
        let (train, test) = holdout_split(n, f, seed).unwrap();
        prop_assert_eq!(test.len(), (n as f64 * f).floor() as usize);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn folds_are_balanced(n in 10usize..500, k in 2usize..11, seed in any::<u64>()) {
        let folds = fold_assignment(n, k, seed);
        let mut sizes = vec![0usize; k];
        for &f in &folds {
            sizes[f] += 1;
        }
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        prop_assert!(hi - lo <= 1);
    }

    #[test]
    fn soft_threshold_is_the_prox_of_l1(z in -10.0f64..10.0, gamma in 0.0f64..5.0) {
        let s = soft_threshold(z, gamma);
        prop_assert!(s.abs() <= z.abs());
        prop_assert!(s == 0.0 || s.signum() == z.signum());
        if z.abs() > gamma {
            prop_assert!((s.abs() - (z.abs() - gamma)).abs() < 1e-12);
        } else {
            prop_assert_eq!(s, 0.0);
        }
    }
}
