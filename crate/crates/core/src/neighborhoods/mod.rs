//! Local neighborhoods from an MI-weighted community partition, non-local
//! neighborhoods from clustering every node by mean MI.

mod cluster;
mod louvain;

pub use cluster::{mi_cluster, non_local_neighborhood, Clustering};
pub use louvain::{louvain, weighted_modularity};

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimator::{MiEstimator, SelfEmbeddings};
use crate::graph::{Dataset, NeighborhoodKind, NeighborhoodMap};

/// Undirected graph with non-negative edge weights. No self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
    total_weight: f64,
}

impl WeightedGraph {
    /// Collapses repeated pairs (last weight wins) and rejects self-loops,
    /// negative or non-finite weights.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); node_count];
        for &(u, v, w) in edges {
            for x in [u, v] {
                if x >= node_count {
                    return Err(Error::InvalidNode { node: x, node_count });
                }
            }
            if u == v {
                return Err(Error::InvalidDataset(format!("self-loop at {u}")));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidDataset(format!("edge ({u}, {v}) has weight {w}")));
            }
            adjacency[u].push((v, w));
            adjacency[v].push((u, w));
        }
        let mut total = 0.0;
        for (u, list) in adjacency.iter_mut().enumerate() {
            // stable sort keeps insertion order among duplicates; keep the last
            list.sort_by_key(|&(v, _)| v);
            let mut out: Vec<(usize, f64)> = Vec::with_capacity(list.len());
            for &(v, w) in list.iter() {
                match out.last_mut() {
                    Some(last) if last.0 == v => last.1 = w,
                    _ => out.push((v, w)),
                }
            }
            total += out.iter().filter(|&&(v, _)| v > u).map(|&(_, w)| w).sum::<f64>();
            *list = out;
        }
        Ok(Self { adjacency, total_weight: total })
    }

    /// Every edge of `d` with weight 1.
    pub fn unit(d: &Dataset) -> Self {
        let edges: Vec<_> = d.edges().map(|(u, v)| (u, v, 1.0)).collect();
        Self::from_edges(d.node_count(), &edges).expect("dataset edges are valid")
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, u: usize) -> &[(usize, f64)] {
        &self.adjacency[u]
    }

    /// Sum of edge weights, each undirected edge counted once.
    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn strength(&self, u: usize) -> f64 {
        self.adjacency[u].iter().map(|&(_, w)| w).sum()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Each edge once as `(u, v, w)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, l)| l.iter().filter(move |&&(v, _)| v > u).map(move |&(v, w)| (u, v, w)))
    }
}

/// Same edge set as `d`, weighted by `max(0, MI(u, v))`.
pub fn weight_edges(d: &Dataset, est: &MiEstimator, z: &SelfEmbeddings) -> Result<WeightedGraph> {
    if z.node_count() != d.node_count() {
        return Err(Error::Shape(format!("{} embeddings for {} nodes", z.node_count(), d.node_count())));
    }
    let edges: Vec<_> = d.edges().map(|(u, v)| (u, v, est.pairwise_mi(z, u, v).max(0.0))).collect();
    WeightedGraph::from_edges(d.node_count(), &edges)
}

/// Community id per node, ids dense in `0..count` and numbered by first
/// appearance in node order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<usize>,
    count: usize,
}

impl Partition {
    /// Renumbers arbitrary group ids into canonical form.
    pub fn from_assignment(raw: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let assignment: Vec<usize> = raw
            .iter()
            .map(|&g| {
                let next = map.len();
                *map.entry(g).or_insert(next)
            })
            .collect();
        Self { assignment, count: map.len() }
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn community_count(&self) -> usize {
        self.count
    }

    pub fn community_of(&self, u: usize) -> usize {
        self.assignment[u]
    }

    /// Sorted members of every community.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.count];
        for (u, &c) in self.assignment.iter().enumerate() {
            m[c].push(u);
        }
        m
    }
}

/// Every node's community, the node itself included, sorted by id.
pub fn local_neighborhood(p: &Partition) -> NeighborhoodMap {
    let members = p.members();
    let lists = p.assignment().iter().map(|&c| members[c].clone()).collect();
    NeighborhoodMap::new(NeighborhoodKind::Local, lists).expect("partition ids are node ids")
}

/// Writes `node_id<TAB>group_id` lines.
pub fn write_groups(path: impl AsRef<Path>, assignment: &[usize]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for (u, g) in assignment.iter().enumerate() {
        let _ = writeln!(out, "{u}\t{g}");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::EmbeddingSource;
    use crate::graph::fixtures::graph;
    use crate::numerics::Tensor2;

    #[test]
    fn weights_clip_negative_mi() {
        let d = graph(&[(0, 1), (1, 2)], &[0, 0, 1]);
        // logit = z_u·z_v with identity bilinear form
        let est = MiEstimator::from_tensors([
            Tensor2::zeros(1, 1),
            Tensor2::zeros(1, 1),
            Tensor2::zeros(1, 1),
            Tensor2::zeros(1, 1),
            Tensor2::identity(1),
            Tensor2::zeros(1, 1),
        ])
        .unwrap();
        let z = SelfEmbeddings {
            z: Tensor2::from_rows(&[vec![2.0], vec![1.5], vec![-1.0]]).unwrap(),
            source: EmbeddingSource::Raw,
        };
        let g = weight_edges(&d, &est, &z).unwrap();
        assert_eq!(g.neighbors(1), &[(0, 3.0), (2, 0.0)]);
        assert_eq!(g.edge_count(), d.edge_count());
        assert_eq!(g.total_weight(), 3.0);
    }

    #[test]
    fn from_edges_validation() {
        assert!(WeightedGraph::from_edges(2, &[(0, 0, 1.0)]).is_err());
        assert!(WeightedGraph::from_edges(2, &[(0, 1, -1.0)]).is_err());
        assert!(WeightedGraph::from_edges(2, &[(0, 3, 1.0)]).is_err());
        let g = WeightedGraph::from_edges(3, &[(0, 1, 1.0), (1, 0, 2.0)]).unwrap();
        assert_eq!(g.neighbors(0), &[(1, 2.0)]);
        assert_eq!(g.total_weight(), 2.0);
    }

    #[test]
    fn partition_canonical_form_and_local_lists() {
        let p = Partition::from_assignment(&[7, 3, 7, 9, 3]);
        assert_eq!(p.assignment(), &[0, 1, 0, 2, 1]);
        assert_eq!(p.community_count(), 3);
        let nm = local_neighborhood(&p);
        assert_eq!(nm.get(0), &[0, 2]);
        assert_eq!(nm.get(3), &[3]);
        assert_eq!(nm.kind(), NeighborhoodKind::Local);
    }

    #[test]
    fn groups_file_format() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.tsv");
        write_groups(&p, &[0, 1, 0]).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "0\t0\n1\t1\n2\t0\n");
    }
}
