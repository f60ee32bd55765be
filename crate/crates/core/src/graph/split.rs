use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// Disjoint train/validation/test node sets, each sorted by node id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl Split {
    /// Checks disjointness and that every id is a labeled node of `d`.
    pub fn validate(&self, d: &Dataset) -> Result<()> {
        let mut seen = vec![false; d.node_count()];
        for &u in self.train.iter().chain(&self.val).chain(&self.test) {
            d.check_node(u)?;
            if seen[u] {
                return Err(Error::Split(format!("node {u} appears twice")));
            }
            if d.label(u).is_none() {
                return Err(Error::Split(format!("node {u} is unlabeled")));
            }
            seen[u] = true;
        }
        Ok(())
    }

    /// All labeled nodes in `train`; validation doubles as the training set so
    /// early stopping still has something to watch.
    pub fn all_train(d: &Dataset) -> Self {
        let train = d.labeled_nodes();
        Self { val: train.clone(), train, test: Vec::new(), seed: 0 }
    }
}

/// Per-class 60/20/20 split: `round(0.6 n)` train, `round(0.2 n)` validation,
/// remainder test, so every part is within one node of its share. Classes are shuffled independently with a seeded RNG.
pub fn stratified_split(d: &Dataset, seed: u64) -> Result<Split> {
    let mut by_class = vec![Vec::new(); d.class_count()];
    for u in d.labeled_nodes() {
        by_class[d.label(u).unwrap()].push(u);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (c, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < 3 {
            return Err(Error::Split(format!("class {c} has {} labeled nodes, need at least 3", members.len())));
        }
        members.shuffle(&mut rng);
        let n = members.len();
        let n_train = (6 * n + 5) / 10;
        let n_val = (2 * n + 5) / 10;
        train.extend_from_slice(&members[..n_train]);
        val.extend_from_slice(&members[n_train..n_train + n_val]);
        test.extend_from_slice(&members[n_train + n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, val, test, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::graph;

    fn per_class(d: &Dataset, nodes: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; d.class_count()];
        for &u in nodes {
            counts[d.label(u).unwrap()] += 1;
        }
        counts
    }

    #[test]
    fn ten_per_class() {
        let labels: Vec<usize> = (0..30).map(|u| u % 3).collect();
        let d = graph(&[], &labels);
        let s = stratified_split(&d, 4).unwrap();
        assert_eq!(per_class(&d, &s.train), vec![6, 6, 6]);
        assert_eq!(per_class(&d, &s.val), vec![2, 2, 2]);
        assert_eq!(per_class(&d, &s.test), vec![2, 2, 2]);
        s.validate(&d).unwrap();
        assert_eq!(s, stratified_split(&d, 4).unwrap());
        assert_ne!(s, stratified_split(&d, 5).unwrap());
    }

    #[test]
    fn uneven_classes_cover_everything_once() {
        let sizes = [33usize, 3, 101, 18, 28];
        let labels: Vec<usize> = sizes.iter().enumerate().flat_map(|(c, &k)| std::iter::repeat_n(c, k)).collect();
        let d = graph(&[], &labels);
        let s = stratified_split(&d, 0).unwrap();
        s.validate(&d).unwrap();
        assert_eq!(s.train.len() + s.val.len() + s.test.len(), labels.len());
        for (c, &n) in sizes.iter().enumerate() {
            let (tr, va, te) = (per_class(&d, &s.train)[c], per_class(&d, &s.val)[c], per_class(&d, &s.test)[c]);
            assert!(tr.abs_diff((0.6 * n as f64) as usize) <= 1);
            assert!(va.abs_diff((0.2 * n as f64) as usize) <= 1);
            assert_eq!(tr + va + te, n);
        }
    }

    #[test]
    fn tiny_class_is_an_error() {
        let d = graph(&[], &[0, 0, 0, 1, 1]);
        assert!(matches!(stratified_split(&d, 0), Err(Error::Split(_))));
    }
}
