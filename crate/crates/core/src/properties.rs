//! Randomized invariants that cut across modules.

use crate::estimator::{EmbeddingSource, MiEstimator, SelfEmbeddings};
use crate::graph::{stratified_split, Dataset};
use crate::neighborhoods::{
    local_neighborhood, louvain, mi_cluster, non_local_neighborhood, weighted_modularity, WeightedGraph,
};
use crate::numerics::{softplus, Tensor2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn weighted_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize, f64)>)> {
    (2usize..14)
        .prop_flat_map(|n| {
            let pair = (0..n, 0..n, 0.01f64..3.0);
            (Just(n), prop::collection::vec(pair, 1..40))
        })
        .prop_map(|(n, raw)| {
            let mut edges: Vec<(usize, usize, f64)> = raw.into_iter().filter(|(u, v, _)| u != v).collect();
            edges.sort_by_key(|&(u, v, _)| (u.min(v), u.max(v)));
            edges.dedup_by_key(|e| (e.0.min(e.1), e.0.max(e.1)));
            if edges.is_empty() {
                edges.push((0, 1, 1.0));
            }
            (n, edges)
        })
}

fn labeled_graph() -> impl Strategy<Value = Dataset> {
    (9usize..40, 2usize..4, any::<u64>()).prop_map(|(n, c, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<Option<usize>> = (0..n).map(|u| Some(u % c)).collect();
        let edges: Vec<(usize, usize)> = (0..n).map(|u| (u, (u * 7 + 3) % n)).filter(|(u, v)| u != v).collect();
        let x = Tensor2::xavier_uniform(n, 4, &mut rng);
        Dataset::new("prop", &edges, x, labels, c).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn louvain_beats_trivial_partitions((n, edges) in weighted_graph(), seed in any::<u64>()) {
        let g = WeightedGraph::from_edges(n, &edges).unwrap();
        let p = louvain(&g, seed);
        let q = weighted_modularity(&g, p.assignment()).unwrap();
        let singletons: Vec<usize> = (0..n).collect();
        let whole = vec![0; n];
        let floor = weighted_modularity(&g, &singletons).unwrap().max(weighted_modularity(&g, &whole).unwrap());
        prop_assert!(q >= floor - 1e-12);
        prop_assert_eq!(p.assignment().len(), n);
        prop_assert_eq!(&louvain(&g, seed), &p);
    }

    #[test]
    fn local_maps_are_equivalence_classes((n, edges) in weighted_graph()) {
        let g = WeightedGraph::from_edges(n, &edges).unwrap();
        let m = local_neighborhood(&louvain(&g, 0));
        let total: usize = louvain(&g, 0).members().iter().map(Vec::len).sum();
        prop_assert_eq!(total, n);
        for u in 0..n {
            prop_assert!(m.get(u).contains(&u));
            for &v in m.get(u) {
                prop_assert!(m.get(v).contains(&u));
                prop_assert_eq!(m.get(v), m.get(u));
            }
        }
    }

    #[test]
    fn splits_are_stratified(d in labeled_graph(), seed in any::<u64>()) {
        let s = stratified_split(&d, seed).unwrap();
        s.validate(&d).unwrap();
        prop_assert_eq!(s.train.len() + s.val.len() + s.test.len(), d.node_count());
        for c in 0..d.class_count() {
            let count = |set: &[usize]| set.iter().filter(|&&u| d.label(u) == Some(c)).count() as f64;
            let n = count(&d.labeled_nodes());
            prop_assert!((count(&s.train) - 0.6 * n).abs() <= 1.0);
            prop_assert!((count(&s.val) - 0.2 * n).abs() <= 1.0);
            prop_assert!((count(&s.test) - 0.2 * n).abs() <= 1.0);
        }
    }

    #[test]
    fn non_local_lists_respect_the_limit(d in labeled_graph(), k in 2usize..5, limit in 1usize..12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = d.node_count();
        let est = MiEstimator::new(4, 5, 3, &mut rng);
        let z = est.self_embed(d.features(), EmbeddingSource::Raw).unwrap();
        let cl = mi_cluster(&est, &z, &vec![None; n], k, 10, usize::MAX, &mut rng).unwrap();
        prop_assert!(cl.members().iter().all(|m| !m.is_empty()));
        let m = non_local_neighborhood(&d, &cl, limit).unwrap();
        for u in 0..n {
            let list = m.get(u);
            prop_assert!(list.contains(&u));
            prop_assert!(list.len() <= limit.max(1));
            prop_assert!(list.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(list.iter().all(|&v| cl.assignment[v] == cl.assignment[u]));
        }
    }

    #[test]
    fn cluster_scores_do_not_depend_on_the_path(seed in any::<u64>(), n in 6usize..30, k in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let est = MiEstimator::new(3, 4, 4, &mut rng);
        let z = SelfEmbeddings { z: Tensor2::xavier_uniform(n, 4, &mut rng), source: EmbeddingSource::Raw };
        let seeds: Vec<Option<usize>> = (0..n).map(|u| (u % 3 == 0).then_some(u % k)).collect();
        let a = mi_cluster(&est, &z, &seeds, k, 20, usize::MAX, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = mi_cluster(&est, &z, &seeds, k, 20, 0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        prop_assert_eq!(a.assignment, b.assignment);
    }

    #[test]
    fn softplus_difference_is_the_identity(x in -30.0f64..30.0) {
        prop_assert!((softplus(x) - softplus(-x) - x).abs() <= 1e-10);
    }
}
