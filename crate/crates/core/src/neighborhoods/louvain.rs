//! Weighted modularity and two-phase greedy community detection.
//!
//! A node only moves for a strictly positive modularity gain. The greedy pass
//! depends on the order nodes are scanned in, so [`louvain`] runs one pass in
//! id order plus several seeded random orders and keeps the best partition.
//! Each pass is refined: single-node moves on the original graph starting
//! from the coarse result, then coarsening again, until modularity stalls.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Partition, WeightedGraph};
use crate::error::{Error, Result};

/// `Q = Σ_c [ in_c / 2W − (tot_c / 2W)² ]` where `in_c` is twice the weight
/// inside community `c`, `tot_c` the summed strength of its members and `W`
/// the total edge weight.
pub fn weighted_modularity(g: &WeightedGraph, assignment: &[usize]) -> Result<f64> {
    if assignment.len() != g.node_count() {
        return Err(Error::Shape(format!("{} community ids for {} nodes", assignment.len(), g.node_count())));
    }
    let two_w = 2.0 * g.total_weight();
    if two_w <= 0.0 {
        return Err(Error::Undefined("modularity of a graph with zero total weight"));
    }
    let k = assignment.iter().max().map_or(0, |m| m + 1);
    let mut inside = vec![0.0; k];
    let mut tot = vec![0.0; k];
    for u in 0..g.node_count() {
        let cu = assignment[u];
        for &(v, w) in g.neighbors(u) {
            tot[cu] += w;
            if assignment[v] == cu {
                inside[cu] += w;
            }
        }
    }
    Ok(inside.iter().zip(&tot).map(|(i, t)| i / two_w - (t / two_w).powi(2)).sum())
}

/// Level graph for the aggregation phase: self-loop weight per node plus
/// neighbor lists without self entries.
struct Level {
    adjacency: Vec<Vec<(usize, f64)>>,
    self_loop: Vec<f64>,
}

impl Level {
    fn strength(&self, u: usize) -> f64 {
        2.0 * self.self_loop[u] + self.adjacency[u].iter().map(|&(_, w)| w).sum::<f64>()
    }
}

/// Scan orders tried per call: id order plus `LOUVAIN_STARTS - 1` shuffles.
pub const LOUVAIN_STARTS: usize = 8;
const MAX_REFINEMENTS: usize = 16;

/// Greedy modularity maximisation: local moves to convergence, then collapse
/// communities into nodes, repeated until no node moves. Of the
/// [`LOUVAIN_STARTS`] scan orders the highest-modularity result wins, ties
/// going to the earlier start. When every edge has weight zero the
/// unweighted graph is partitioned instead. Edgeless graphs give singletons.
pub fn louvain(g: &WeightedGraph, seed: u64) -> Partition {
    let n = g.node_count();
    if g.total_weight() <= 0.0 && g.edge_count() > 0 {
        let unit: Vec<_> = g.edges().map(|(u, v, _)| (u, v, 1.0)).collect();
        return louvain(&WeightedGraph::from_edges(n, &unit).expect("edges came from a valid graph"), seed);
    }
    if g.total_weight() <= 0.0 {
        return Partition::from_assignment(&(0..n).collect::<Vec<_>>());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    let modularity = |m: &[usize]| weighted_modularity(g, m).expect("positive total weight");
    for start in 0..LOUVAIN_STARTS {
        let mut r = (start > 0).then_some(&mut rng);
        let mut membership = greedy_pass(g, r.as_deref_mut(), (0..n).collect());
        let mut q = modularity(&membership);
        for _ in 0..MAX_REFINEMENTS {
            let refined = greedy_pass(g, r.as_deref_mut(), membership.clone());
            let rq = modularity(&refined);
            if rq <= q + 1e-12 * q.abs().max(1.0) {
                break;
            }
            (membership, q) = (refined, rq);
        }
        if best.as_ref().is_none_or(|(bq, _)| q > *bq) {
            best = Some((q, membership));
        }
    }
    Partition::from_assignment(&best.expect("at least one start").1)
}

/// One full multi-level pass whose first round of local moves starts from
/// `init`; `rng` shuffles the scan order at every level, `None` scans in id
/// order.
fn greedy_pass(g: &WeightedGraph, mut rng: Option<&mut ChaCha8Rng>, init: Vec<usize>) -> Vec<usize> {
    let n = g.node_count();
    let mut membership: Vec<usize> = (0..n).collect();
    let mut start = Some(init);
    let mut level = Level { adjacency: (0..n).map(|u| g.neighbors(u).to_vec()).collect(), self_loop: vec![0.0; n] };
    let two_m = 2.0 * g.total_weight();
    loop {
        let mut order: Vec<usize> = (0..level.adjacency.len()).collect();
        if let Some(r) = rng.as_deref_mut() {
            order.shuffle(r);
        }
        let init = start.take().unwrap_or_else(|| (0..order.len()).collect());
        let community = local_moves(&level, two_m, &order, init);
        let (dense, count) = densify(&community);
        if count == dense.len() {
            break;
        }
        for m in membership.iter_mut() {
            *m = dense[*m];
        }
        level = aggregate(&level, &dense, count);
    }
    membership
}

fn densify(community: &[usize]) -> (Vec<usize>, usize) {
    let mut id = vec![usize::MAX; community.len()];
    let mut next = 0;
    let dense = community
        .iter()
        .map(|&c| {
            if id[c] == usize::MAX {
                id[c] = next;
                next += 1;
            }
            id[c]
        })
        .collect();
    (dense, next)
}

/// Moves nodes between communities until no move gains; `community` holds
/// ids below the node count.
fn local_moves(level: &Level, two_m: f64, order: &[usize], mut community: Vec<usize>) -> Vec<usize> {
    let n = level.adjacency.len();
    let strength: Vec<f64> = (0..n).map(|u| level.strength(u)).collect();
    let mut tot = vec![0.0; n];
    for (u, &c) in community.iter().enumerate() {
        tot[c] += strength[u];
    }
    let mut link = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut seen = vec![false; n];
    let eps = 1e-12 * two_m;
    loop {
        let mut moved = false;
        for &u in order {
            let own = community[u];
            let ku = strength[u];
            for &(v, w) in &level.adjacency[u] {
                let c = community[v];
                if !seen[c] {
                    seen[c] = true;
                    touched.push(c);
                }
                link[c] += w;
            }
            tot[own] -= ku;
            // gain of joining c, up to a common positive factor: k_in(c) − tot_c·k_u / 2m
            let gain = |c: usize, link: &[f64]| link[c] - tot[c] * ku / two_m;
            let own_gain = gain(own, &link);
            let mut best = (own, own_gain);
            touched.sort_unstable();
            for &c in &touched {
                let g = gain(c, &link);
                if g > best.1 + eps {
                    best = (c, g);
                }
            }
            tot[best.0] += ku;
            if best.0 != own {
                community[u] = best.0;
                moved = true;
            }
            for &c in &touched {
                link[c] = 0.0;
                seen[c] = false;
            }
            touched.clear();
        }
        if !moved {
            break;
        }
    }
    community
}

fn aggregate(level: &Level, dense: &[usize], count: usize) -> Level {
    let mut self_loop = vec![0.0; count];
    let mut maps: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); count];
    for u in 0..level.adjacency.len() {
        let cu = dense[u];
        self_loop[cu] += level.self_loop[u];
        for &(v, w) in &level.adjacency[u] {
            let cv = dense[v];
            if cu == cv {
                // each internal edge is seen from both ends
                self_loop[cu] += 0.5 * w;
            } else {
                *maps[cu].entry(cv).or_insert(0.0) += w;
            }
        }
    }
    Level { adjacency: maps.into_iter().map(|m| m.into_iter().collect()).collect(), self_loop }
}
