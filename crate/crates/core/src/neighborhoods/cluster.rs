//! Graph-agnostic clustering of all nodes by mean mutual information, and the
//! non-local neighborhood drawn from each node's cluster.
//!
//! The score of node `u` for cluster `C` is `(1/|C|) Σ_{v∈C} MI(u, v)`.
//! Because the bilinear logit is affine in `z_v`, that mean equals the MI
//! between `u` and the mean embedding of `C` exactly. Small graphs use the
//! explicit pairwise average; larger ones use the cluster mean.

use rand::Rng;

use crate::error::{Error, Result};
use crate::estimator::{MiEstimator, SelfEmbeddings};
use crate::graph::{Dataset, NeighborhoodKind, NeighborhoodMap};
use crate::numerics::{axpy, dot, Tensor2};

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub assignment: Vec<usize>,
    pub cluster_count: usize,
    /// `Σ_u score(u, cluster(u))` after every assignment sweep.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl Clustering {
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.cluster_count];
        for (u, &c) in self.assignment.iter().enumerate() {
            m[c].push(u);
        }
        m
    }
}

/// Scores every node against every cluster of an assignment.
trait Scorer {
    /// `out[u * k + c] = score(u, c)`; empty clusters get `-inf`.
    fn scores(&self, assignment: &[usize], k: usize) -> Vec<f64>;
}

/// Explicit pairwise average over a cached `n × n` MI matrix.
struct Pairwise {
    mi: Tensor2,
}

impl Scorer for Pairwise {
    fn scores(&self, assignment: &[usize], k: usize) -> Vec<f64> {
        let n = assignment.len();
        let mut sizes = vec![0usize; k];
        for &c in assignment {
            sizes[c] += 1;
        }
        let mut out = vec![0.0; n * k];
        for u in 0..n {
            let row = self.mi.row(u);
            let o = &mut out[u * k..(u + 1) * k];
            for (v, &c) in assignment.iter().enumerate() {
                o[c] += row[v];
            }
            for (c, s) in o.iter_mut().enumerate() {
                *s = if sizes[c] == 0 { f64::NEG_INFINITY } else { *s / sizes[c] as f64 };
            }
        }
        out
    }
}

/// MI against the cluster-mean embedding.
struct Centroid<'a> {
    z: &'a Tensor2,
    wsym: Tensor2,
    bias: f64,
}

impl Scorer for Centroid<'_> {
    fn scores(&self, assignment: &[usize], k: usize) -> Vec<f64> {
        let n = assignment.len();
        let d = self.z.cols();
        let mut means = Tensor2::zeros(k, d);
        let mut sizes = vec![0usize; k];
        for (u, &c) in assignment.iter().enumerate() {
            axpy(1.0, self.z.row(u), means.row_mut(c));
            sizes[c] += 1;
        }
        for (c, &size) in sizes.iter().enumerate() {
            if size > 0 {
                means.row_mut(c).iter_mut().for_each(|x| *x /= size as f64);
            }
        }
        let projected = means.matmul(&self.wsym).expect("square bilinear form");
        let mut out = vec![0.0; n * k];
        for u in 0..n {
            for c in 0..k {
                out[u * k + c] =
                    if sizes[c] == 0 { f64::NEG_INFINITY } else { dot(self.z.row(u), projected.row(c)) + self.bias };
            }
        }
        out
    }
}

/// K-way clustering maximising `Σ_u score(u, cluster(u))`.
///
/// Labeled nodes (`seed_labels[u] = Some(c)`) start in cluster `c mod k`,
/// the rest uniformly at random. Each sweep reassigns every node at once to
/// its best cluster under the previous assignment; ties keep the current
/// cluster, otherwise go to the lowest id. A cluster left empty takes the
/// node with the lowest score for its own cluster among clusters of size > 1.
/// Stops when a sweep changes nothing or after `max_iter` sweeps.
///
/// With `pairwise_limit >= n` scores are explicit pairwise averages over an
/// `n × n` MI matrix; otherwise cluster means are used.
pub fn mi_cluster<R: Rng + ?Sized>(
    est: &MiEstimator,
    z: &SelfEmbeddings,
    seed_labels: &[Option<usize>],
    k: usize,
    max_iter: usize,
    pairwise_limit: usize,
    rng: &mut R,
) -> Result<Clustering> {
    let n = z.node_count();
    if seed_labels.len() != n {
        return Err(Error::Shape(format!("{} seed labels for {n} nodes", seed_labels.len())));
    }
    if k == 0 || k > n {
        return Err(Error::Config(format!("cluster count {k} must be in 1..={n}")));
    }
    let wsym = est.symmetric_bilinear();
    if n <= pairwise_limit {
        let s = z.z.matmul(&wsym)?;
        let mut mi = z.z.matmul_t(&s)?;
        mi.map_inplace(|x| x + est.bias());
        run(&Pairwise { mi }, seed_labels, k, max_iter, rng)
    } else {
        run(&Centroid { z: &z.z, wsym, bias: est.bias() }, seed_labels, k, max_iter, rng)
    }
}

fn run<R: Rng + ?Sized>(
    scorer: &dyn Scorer,
    seed_labels: &[Option<usize>],
    k: usize,
    max_iter: usize,
    rng: &mut R,
) -> Result<Clustering> {
    let n = seed_labels.len();
    let mut assignment: Vec<usize> =
        seed_labels.iter().map(|l| l.map_or_else(|| rng.random_range(0..k), |c| c % k)).collect();
    reseed_empty(scorer, &mut assignment, k);

    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let scores = scorer.scores(&assignment, k);
        let mut next = assignment.clone();
        for u in 0..n {
            next[u] = best_cluster(&scores[u * k..(u + 1) * k], assignment[u]);
        }
        let changed = next != assignment;
        assignment = next;
        reseed_empty(scorer, &mut assignment, k);
        trace.push(objective(scorer, &assignment, k));
        if !changed {
            converged = true;
            break;
        }
    }
    Ok(Clustering { assignment, cluster_count: k, objective_trace: trace, iterations, converged })
}

/// Highest score; ties keep `current`, then the lowest cluster id.
pub(crate) fn best_cluster(scores: &[f64], current: usize) -> usize {
    let mut best = current;
    for (c, &s) in scores.iter().enumerate() {
        if s > scores[best] || (s == scores[best] && c < best && scores[current] < s) {
            best = c;
        }
    }
    best
}

fn objective(scorer: &dyn Scorer, assignment: &[usize], k: usize) -> f64 {
    let scores = scorer.scores(assignment, k);
    assignment.iter().enumerate().map(|(u, &c)| scores[u * k + c]).sum()
}

fn reseed_empty(scorer: &dyn Scorer, assignment: &mut [usize], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        for &c in assignment.iter() {
            sizes[c] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else { return };
        let scores = scorer.scores(assignment, k);
        let donor = (0..assignment.len())
            .filter(|&u| sizes[assignment[u]] > 1)
            .min_by(|&a, &b| scores[a * k + assignment[a]].total_cmp(&scores[b * k + assignment[b]]).then(a.cmp(&b)));
        match donor {
            Some(u) => assignment[u] = empty,
            None => return,
        }
    }
}

/// Members of `u`'s cluster, `u` included, sorted by id. Clusters larger than
/// `limit` keep the `limit` members of highest degree (ties to the lower id);
/// if `u` is not among them it replaces the last kept member, so every list
/// holds `u` and at most `limit` nodes.
pub fn non_local_neighborhood(d: &Dataset, clustering: &Clustering, limit: usize) -> Result<NeighborhoodMap> {
    if clustering.assignment.len() != d.node_count() {
        return Err(Error::Shape("clustering does not cover the dataset".into()));
    }
    if limit == 0 {
        return Err(Error::Config("non-local sample limit must be positive".into()));
    }
    let members = clustering.members();
    let ranked: Vec<Vec<usize>> = members
        .iter()
        .map(|m| {
            let mut r = m.clone();
            r.sort_by(|&a, &b| d.degree(b).cmp(&d.degree(a)).then(a.cmp(&b)));
            r.truncate(limit);
            r
        })
        .collect();
    let lists = (0..d.node_count())
        .map(|u| {
            let c = clustering.assignment[u];
            let mut list = if members[c].len() <= limit { members[c].clone() } else { ranked[c].clone() };
            if !list.contains(&u) {
                *list.last_mut().expect("limit is positive") = u;
            }
            list.sort_unstable();
            list
        })
        .collect();
    NeighborhoodMap::new(NeighborhoodKind::NonLocal, lists)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::EmbeddingSource;
    use crate::graph::fixtures::graph;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bilinear(se: usize, seed: u64) -> MiEstimator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MiEstimator::from_tensors([
            Tensor2::zeros(1, 1),
            Tensor2::zeros(1, 1),
            Tensor2::zeros(se, 1),
            Tensor2::zeros(1, se),
            Tensor2::xavier_uniform(se, se, &mut rng),
            Tensor2::filled(1, 1, 0.1),
        ])
        .unwrap()
    }

    fn embeddings(n: usize, se: usize, seed: u64) -> SelfEmbeddings {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SelfEmbeddings { z: Tensor2::xavier_uniform(n, se, &mut rng), source: EmbeddingSource::Raw }
    }

    #[test]
    fn mean_mi_equals_mi_to_mean() {
        let est = bilinear(4, 1);
        let z = embeddings(9, 4, 2);
        let assign = [0, 1, 2, 0, 1, 2, 0, 0, 1];
        let s = z.z.matmul(&est.symmetric_bilinear()).unwrap();
        let mut mi = z.z.matmul_t(&s).unwrap();
        mi.map_inplace(|x| x + est.bias());
        let a = Pairwise { mi }.scores(&assign, 3);
        let b = Centroid { z: &z.z, wsym: est.symmetric_bilinear(), bias: est.bias() }.scores(&assign, 3);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        // explicit double loop for one entry
        let want: f64 = [0, 3, 6, 7].iter().map(|&v| est.pairwise_mi(&z, 4, v)).sum::<f64>() / 4.0;
        assert!((a[4 * 3] - want).abs() < 1e-12);
    }

    #[test]
    fn both_paths_agree() {
        let est = bilinear(5, 3);
        let z = embeddings(40, 5, 4);
        let seeds: Vec<Option<usize>> = (0..40).map(|u| (u % 3 == 0).then_some(u % 4)).collect();
        let a = mi_cluster(&est, &z, &seeds, 4, 20, 1000, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = mi_cluster(&est, &z, &seeds, 4, 20, 0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a.assignment, b.assignment);
        for (x, y) in a.objective_trace.iter().zip(&b.objective_trace) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn no_empty_clusters_and_seeded_start() {
        let est = bilinear(3, 6);
        let z = embeddings(12, 3, 7);
        let seeds: Vec<Option<usize>> = (0..12).map(|u| Some(u % 5)).collect();
        let c = mi_cluster(&est, &z, &seeds, 4, 0, 1000, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        // zero sweeps: the seeded start, label 4 folds onto cluster 0
        assert_eq!(c.assignment, seeds.iter().map(|l| l.unwrap() % 4).collect::<Vec<_>>());
        let c = mi_cluster(&est, &z, &seeds, 6, 20, 1000, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(c.members().iter().all(|m| !m.is_empty()));
        assert!(c.iterations <= 20);
        assert!(mi_cluster(&est, &z, &seeds, 13, 20, 1000, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn tie_rules() {
        assert_eq!(best_cluster(&[1.0, 2.0, 2.0], 2), 2);
        assert_eq!(best_cluster(&[1.0, 2.0, 2.0], 0), 1);
        assert_eq!(best_cluster(&[3.0, 1.0, 3.0], 1), 0);
        assert_eq!(best_cluster(&[f64::NEG_INFINITY, 0.0], 0), 1);
    }

    #[test]
    fn non_local_lists() {
        // star around 0 plus a pendant chain; one cluster of everything
        let d = graph(&[(0, 1), (0, 2), (0, 3), (3, 4), (4, 5)], &[0; 6]);
        let cl = Clustering {
            assignment: vec![0; 6],
            cluster_count: 1,
            objective_trace: vec![],
            iterations: 0,
            converged: true,
        };
        let nm = non_local_neighborhood(&d, &cl, 3).unwrap();
        // degrees: 0:3, 3:2, 4:2, 1:1, 2:1, 5:1 -> top three {0, 3, 4}
        assert_eq!(nm.get(0), &[0, 3, 4]);
        assert_eq!(nm.get(3), &[0, 3, 4]);
        // node 1 is not in the top three and replaces 4
        assert_eq!(nm.get(1), &[0, 1, 3]);
        assert!(nm.lists().iter().enumerate().all(|(u, l)| l.contains(&u) && l.len() <= 3));
        let nm = non_local_neighborhood(&d, &cl, 10).unwrap();
        assert_eq!(nm.get(5), &[0, 1, 2, 3, 4, 5]);
    }
}
