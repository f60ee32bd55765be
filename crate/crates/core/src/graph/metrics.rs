use std::collections::VecDeque;

use super::{Dataset, NeighborhoodMap};
use crate::error::{Error, Result};
use crate::numerics::{axpy, Tensor2};

/// Mean over nodes of the fraction of direct neighbors that share the node's
/// label. Isolated nodes (and unlabeled nodes or neighbors) are left out.
pub fn homophily_ratio(d: &Dataset) -> Result<f64> {
    homophily_over(d, &NeighborhoodMap::one_hop(d))
        .map_err(|_| Error::Undefined("homophily ratio (no node has a neighbor)"))
}

/// Homophily measured over an arbitrary neighborhood map, `1 - noise_ratio`.
pub fn homophily_over(d: &Dataset, nm: &NeighborhoodMap) -> Result<f64> {
    mean_fraction(d, nm, true)
}

/// Mean over nodes of the fraction of neighborhood members with a different
/// label. The node itself is never counted; empty neighborhoods are skipped.
pub fn noise_ratio(d: &Dataset, nm: &NeighborhoodMap) -> Result<f64> {
    mean_fraction(d, nm, false)
}

fn mean_fraction(d: &Dataset, nm: &NeighborhoodMap, same: bool) -> Result<f64> {
    if nm.node_count() != d.node_count() {
        return Err(Error::Shape(format!(
            "neighborhood map covers {} nodes, dataset has {}",
            nm.node_count(),
            d.node_count()
        )));
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    for u in 0..d.node_count() {
        let Some(lu) = d.label(u) else { continue };
        let (mut hits, mut size) = (0usize, 0usize);
        for &v in nm.get(u) {
            if v == u {
                continue;
            }
            if let Some(lv) = d.label(v) {
                size += 1;
                if (lv == lu) == same {
                    hits += 1;
                }
            }
        }
        if size > 0 {
            total += hits as f64 / size as f64;
            counted += 1;
        }
    }
    if counted == 0 {
        return Err(Error::Undefined("neighborhood ratio (every neighborhood is empty)"));
    }
    Ok(total / counted as f64)
}

/// Nodes other than `u` within shortest-path distance `k`, sorted by id.
pub fn k_hop(d: &Dataset, u: usize, k: usize) -> Result<Vec<usize>> {
    d.check_node(u)?;
    Ok(k_hop_unchecked(d, u, k))
}

pub(super) fn k_hop_unchecked(d: &Dataset, u: usize, k: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; d.node_count()];
    let mut queue = VecDeque::from([u]);
    dist[u] = 0;
    let mut out = Vec::new();
    while let Some(x) = queue.pop_front() {
        if dist[x] == k {
            continue;
        }
        for &y in d.neighbors(x) {
            if dist[y] == usize::MAX {
                dist[y] = dist[x] + 1;
                out.push(y);
                queue.push_back(y);
            }
        }
    }
    out.sort_unstable();
    out
}

/// Row `u` is the mean of its neighbors' feature rows; isolated nodes keep
/// their own row.
pub fn mean_1hop_features(d: &Dataset) -> Tensor2 {
    let x = d.features();
    let mut out = Tensor2::zeros(x.rows(), x.cols());
    for u in 0..d.node_count() {
        let nb = d.neighbors(u);
        let row = out.row_mut(u);
        if nb.is_empty() {
            row.copy_from_slice(x.row(u));
            continue;
        }
        let w = 1.0 / nb.len() as f64;
        for &v in nb {
            axpy(w, x.row(v), row);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::graph;
    use crate::graph::NeighborhoodKind;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn homophily_examples() {
        let tri = graph(&[(0, 1), (1, 2), (2, 0)], &[3, 3, 3]);
        assert_eq!(homophily_ratio(&tri).unwrap(), 1.0);
        let path = graph(&[(0, 1), (1, 2), (2, 3)], &[0, 1, 0, 1]);
        assert_eq!(homophily_ratio(&path).unwrap(), 0.0);
        let isolated = graph(&[], &[0, 1]);
        assert!(matches!(homophily_ratio(&isolated), Err(Error::Undefined(_))));
    }

    #[test]
    fn star_two_hop_noise() {
        // center 0 labelled A, leaves labelled B. 2-hop sets by hand:
        // center sees {1,2,3} (all mismatched) -> 1
        // each leaf sees {0, other two leaves} -> 1 mismatch of 3
        let star = graph(&[(0, 1), (0, 2), (0, 3)], &[0, 1, 1, 1]);
        let nm = NeighborhoodMap::k_hop(&star, 2);
        assert_eq!(nm.get(1), &[0, 2, 3]);
        let want = (1.0 + 3.0 * (1.0 / 3.0)) / 4.0;
        assert!((noise_ratio(&star, &nm).unwrap() - want).abs() < 1e-15);
        assert!((want - 0.5).abs() < 1e-15);
    }

    #[test]
    fn clique_has_no_noise() {
        let edges: Vec<_> = (0..4).flat_map(|u| (u + 1..4).map(move |v| (u, v))).collect();
        let d = graph(&edges, &[2, 2, 2, 2]);
        assert_eq!(noise_ratio(&d, &NeighborhoodMap::k_hop(&d, 2)).unwrap(), 0.0);
    }

    #[test]
    fn self_is_not_counted() {
        let d = graph(&[(0, 1)], &[0, 1]);
        let nm = NeighborhoodMap::new(NeighborhoodKind::Local, vec![vec![0, 1], vec![0, 1]]).unwrap();
        assert_eq!(noise_ratio(&d, &nm).unwrap(), 1.0);
    }

    #[test]
    fn k_hop_examples() {
        let path = graph(&[(0, 1), (1, 2)], &[0, 0, 0]);
        assert_eq!(k_hop(&path, 0, 2).unwrap(), vec![1, 2]);
        assert!(k_hop(&path, 0, 0).unwrap().is_empty());
        assert!(k_hop(&path, 5, 1).is_err());
    }

    fn random_graph(n: usize, p: f64, seed: u64) -> Dataset {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        graph(&edges, &labels)
    }

    /// Distances by repeated relaxation over the edge list (Bellman-Ford with
    /// unit weights); independent of the queue-based search.
    fn distance_oracle(d: &Dataset, src: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; d.node_count()];
        dist[src] = 0;
        for _ in 0..d.node_count() {
            for (u, v) in d.edges() {
                if dist[u] != usize::MAX && dist[u] + 1 < dist[v] {
                    dist[v] = dist[u] + 1;
                }
                if dist[v] != usize::MAX && dist[v] + 1 < dist[u] {
                    dist[u] = dist[v] + 1;
                }
            }
        }
        dist
    }

    #[test]
    fn k_hop_matches_distance_oracle() {
        for seed in 0..5 {
            let d = random_graph(10, 0.25, seed);
            for u in 0..10 {
                let dist = distance_oracle(&d, u);
                for k in 0..4 {
                    let want: Vec<usize> = (0..10).filter(|&v| v != u && dist[v] <= k).collect();
                    assert_eq!(k_hop(&d, u, k).unwrap(), want);
                }
            }
        }
    }

    #[test]
    fn mean_features_examples() {
        let feats = Tensor2::from_rows(&[vec![9.0, 9.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![4.0, 2.0]]).unwrap();
        let d = Dataset::new("m", &[(0, 1), (0, 2)], feats, vec![Some(0); 4], 1).unwrap();
        let m = mean_1hop_features(&d);
        assert_eq!(m.row(0), &[0.5, 0.5]);
        assert_eq!(m.row(3), &[4.0, 2.0]);
    }

    #[test]
    fn mean_features_match_double_loop() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let base = random_graph(20, 0.2, 7);
        let feats = Tensor2::xavier_uniform(20, 6, &mut rng);
        let d = base.with_features(feats.clone()).unwrap();
        let m = mean_1hop_features(&d);
        for u in 0..20 {
            for c in 0..6 {
                let mut s = 0.0;
                let mut k = 0;
                for v in 0..20 {
                    if d.edges().any(|e| e == (u.min(v), u.max(v)) && u != v) {
                        s += feats.get(v, c);
                        k += 1;
                    }
                }
                let want = if k == 0 { feats.get(u, c) } else { s / k as f64 };
                assert!((m.get(u, c) - want).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn edge_symmetry_and_one_hop_identity(seed in 0u64..200, p in 0.1f64..0.6) {
            let d = random_graph(12, p, seed);
            for u in 0..12 {
                for &v in d.neighbors(u) {
                    prop_assert!(d.neighbors(v).contains(&u));
                }
            }
            if (0..12).all(|u| d.degree(u) > 0) {
                let nr = noise_ratio(&d, &NeighborhoodMap::one_hop(&d)).unwrap();
                let hr = homophily_ratio(&d).unwrap();
                prop_assert!((nr - (1.0 - hr)).abs() < 1e-12);
            }
        }

        #[test]
        fn ratios_invariant_under_class_relabeling(seed in 0u64..200, perm in Just([2usize, 0, 1])) {
            let d = random_graph(12, 0.3, seed);
            let relabeled: Vec<usize> = d.labels().iter().map(|l| perm[l.unwrap()]).collect();
            let edges: Vec<_> = d.edges().collect();
            let e = graph(&edges, &relabeled);
            let nm = NeighborhoodMap::k_hop(&d, 2);
            if let (Ok(a), Ok(b)) = (homophily_ratio(&d), homophily_ratio(&e)) {
                prop_assert!((a - b).abs() < 1e-15);
                prop_assert!((noise_ratio(&d, &nm).unwrap() - noise_ratio(&e, &nm).unwrap()).abs() < 1e-15);
            }
        }
    }
}
