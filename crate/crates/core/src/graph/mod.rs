//! Graph, features and labels; neighborhood maps; splits and the homophily /
//! noise diagnostics.

mod io;
mod metrics;
mod split;

pub use io::{load_dataset, load_dataset_with_classes, save_dataset};
pub use metrics::{homophily_over, homophily_ratio, k_hop, mean_1hop_features, noise_ratio};
pub use split::{stratified_split, Split};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor2;

/// Undirected, unweighted attributed graph. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    /// Sorted neighbor lists; `v ∈ adj[u] ⇔ u ∈ adj[v]`.
    adjacency: Vec<Vec<usize>>,
    edge_count: usize,
    features: Tensor2,
    labels: Vec<Option<usize>>,
    class_count: usize,
}

impl Dataset {
    /// Builds a dataset from raw parts. Edges are treated as undirected:
    /// reversed and repeated pairs collapse into one edge, self-loops are
    /// dropped.
    pub fn new(
        name: impl Into<String>,
        edges: &[(usize, usize)],
        features: Tensor2,
        labels: Vec<Option<usize>>,
        class_count: usize,
    ) -> Result<Self> {
        let n = features.rows();
        if labels.len() != n {
            return Err(Error::InvalidDataset(format!("{} label slots for {n} feature rows", labels.len())));
        }
        if let Some((u, c)) =
            labels.iter().enumerate().find_map(|(u, l)| l.filter(|&c| c >= class_count).map(|c| (u, c)))
        {
            return Err(Error::InvalidDataset(format!("node {u} has class {c} but class_count is {class_count}")));
        }
        if !features.is_finite() {
            return Err(Error::InvalidDataset("non-finite feature value".into()));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in edges {
            for w in [u, v] {
                if w >= n {
                    return Err(Error::InvalidNode { node: w, node_count: n });
                }
            }
            if u != v {
                adjacency[u].push(v);
                adjacency[v].push(u);
            }
        }
        let mut twice = 0;
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
            twice += list.len();
        }
        Ok(Self { name: name.into(), adjacency, edge_count: twice / 2, features, labels, class_count })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn features(&self) -> &Tensor2 {
        &self.features
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn label(&self, u: usize) -> Option<usize> {
        self.labels[u]
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adjacency[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adjacency[u].len()
    }

    pub fn labeled_nodes(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&u| self.labels[u].is_some()).collect()
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    pub fn check_node(&self, u: usize) -> Result<()> {
        if u < self.node_count() {
            Ok(())
        } else {
            Err(Error::InvalidNode { node: u, node_count: self.node_count() })
        }
    }

    /// Same graph and labels with a different feature matrix.
    pub fn with_features(&self, features: Tensor2) -> Result<Self> {
        if features.rows() != self.node_count() {
            return Err(Error::Shape(format!("{} feature rows for {} nodes", features.rows(), self.node_count())));
        }
        Ok(Self { features, ..self.clone() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeighborhoodKind {
    Local,
    NonLocal,
    KHop,
}

/// Node → ordered node list.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodMap {
    kind: NeighborhoodKind,
    lists: Vec<Vec<usize>>,
}

impl NeighborhoodMap {
    pub fn new(kind: NeighborhoodKind, lists: Vec<Vec<usize>>) -> Result<Self> {
        let n = lists.len();
        for list in &lists {
            if let Some(&bad) = list.iter().find(|&&v| v >= n) {
                return Err(Error::InvalidNode { node: bad, node_count: n });
            }
        }
        Ok(Self { kind, lists })
    }

    /// Direct neighbors, self excluded.
    pub fn one_hop(d: &Dataset) -> Self {
        Self { kind: NeighborhoodKind::KHop, lists: d.adjacency.clone() }
    }

    /// Nodes within `k` hops, self excluded.
    pub fn k_hop(d: &Dataset, k: usize) -> Self {
        let lists = (0..d.node_count()).map(|u| metrics::k_hop_unchecked(d, u, k)).collect();
        Self { kind: NeighborhoodKind::KHop, lists }
    }

    pub fn kind(&self) -> NeighborhoodKind {
        self.kind
    }

    pub fn node_count(&self) -> usize {
        self.lists.len()
    }

    pub fn get(&self, u: usize) -> &[usize] {
        &self.lists[u]
    }

    pub fn lists(&self) -> &[Vec<usize>] {
        &self.lists
    }

    pub fn total_entries(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }

    pub fn max_len(&self) -> usize {
        self.lists.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Same map with every list permuted by `f`; aggregation results must not
    /// depend on list order.
    pub fn reordered(&self, mut f: impl FnMut(&mut Vec<usize>)) -> Self {
        let mut lists = self.lists.clone();
        lists.iter_mut().for_each(&mut f);
        Self { kind: self.kind, lists }
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Dataset with one-hot-ish features `[u, 1]` and the given labels.
    pub fn graph(edges: &[(usize, usize)], labels: &[usize]) -> Dataset {
        let n = labels.len();
        let feats = Tensor2::from_rows(&(0..n).map(|u| vec![u as f64, 1.0]).collect::<Vec<_>>()).unwrap();
        let c = labels.iter().max().map_or(1, |m| m + 1);
        Dataset::new("toy", edges, feats, labels.iter().map(|&l| Some(l)).collect(), c).unwrap()
    }
}
