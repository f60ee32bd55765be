use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    /// same class
    Positive,
    /// different class
    Negative,
}

impl Polarity {
    pub fn target(self) -> f64 {
        match self {
            Polarity::Positive => 1.0,
            Polarity::Negative => 0.0,
        }
    }
}

/// Parallel lists of anchor, partner and polarity.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairBatch {
    anchors: Vec<usize>,
    partners: Vec<usize>,
    polarity: Vec<Polarity>,
}

impl PairBatch {
    pub fn new(anchors: Vec<usize>, partners: Vec<usize>, polarity: Vec<Polarity>) -> Result<Self> {
        if anchors.len() != partners.len() || anchors.len() != polarity.len() {
            return Err(Error::Shape("pair batch lists differ in length".into()));
        }
        Ok(Self { anchors, partners, polarity })
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Polarity)> + '_ {
        self.anchors.iter().zip(&self.partners).zip(&self.polarity).map(|((&u, &v), &p)| (u, v, p))
    }

    pub fn count(&self, p: Polarity) -> usize {
        self.polarity.iter().filter(|&&q| q == p).count()
    }

    fn push(&mut self, u: usize, v: usize, p: Polarity) {
        self.anchors.push(u);
        self.partners.push(v);
        self.polarity.push(p);
    }
}

/// Draws `per_anchor` positive and `per_anchor` negative partners for every
/// anchor in `pool`, where `labels[u]` is the (possibly pseudo) label of `u`.
///
/// Partners come from `pool` itself. Sampling is without replacement when the
/// candidate set is large enough, otherwise with replacement. An anchor whose
/// class has no other member gets negatives only.
pub fn sample_pairs<R: Rng + ?Sized>(
    pool: &[usize],
    labels: &[Option<usize>],
    per_anchor: usize,
    rng: &mut R,
) -> Result<PairBatch> {
    let class_of = |u: usize| -> Result<usize> {
        labels.get(u).copied().flatten().ok_or(Error::Config(format!("pair pool node {u} has no label")))
    };
    let class_count = pool.iter().map(|&u| class_of(u).map(|c| c + 1)).try_fold(0, |m, c| c.map(|c| m.max(c)))?;
    let mut by_class = vec![Vec::new(); class_count];
    for &u in pool {
        by_class[class_of(u)?].push(u);
    }
    if by_class.iter().filter(|m| !m.is_empty()).count() < 2 {
        return Err(Error::Undefined("contrastive pairs need labeled nodes from at least two classes"));
    }
    let others: Vec<Vec<usize>> = (0..class_count)
        .map(|c| by_class.iter().enumerate().filter(|&(k, _)| k != c).flat_map(|(_, m)| m.iter().copied()).collect())
        .collect();

    let mut batch = PairBatch::default();
    for &u in pool {
        let c = class_of(u)?;
        let same = &by_class[c];
        let pos = same.iter().position(|&v| v == u).expect("anchor is in its class list");
        // candidates are `same` without u: index i maps to i, or i+1 past u
        for i in draw(same.len() - 1, per_anchor, rng) {
            let v = same[if i >= pos { i + 1 } else { i }];
            batch.push(u, v, Polarity::Positive);
        }
        for i in draw(others[c].len(), per_anchor, rng) {
            batch.push(u, others[c][i], Polarity::Negative);
        }
    }
    Ok(batch)
}

fn draw<R: Rng + ?Sized>(len: usize, k: usize, rng: &mut R) -> Vec<usize> {
    if len == 0 || k == 0 {
        Vec::new()
    } else if len >= k {
        index::sample(rng, len, k).into_vec()
    } else {
        (0..k).map(|_| rng.random_range(0..len)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn labels(v: &[usize]) -> Vec<Option<usize>> {
        v.iter().map(|&c| Some(c)).collect()
    }

    #[test]
    fn counts_and_polarity_agree_with_labels() {
        let l = labels(&[0, 0, 0, 1, 1, 1, 2, 2, 2, 2]);
        let pool: Vec<usize> = (0..10).collect();
        let b = sample_pairs(&pool, &l, 2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(b.count(Polarity::Positive), 20);
        assert_eq!(b.count(Polarity::Negative), 20);
        for (u, v, p) in b.iter() {
            assert_ne!(u, v);
            assert_eq!(l[u] == l[v], p == Polarity::Positive);
        }
    }

    #[test]
    fn without_replacement_when_possible() {
        let l = labels(&[0, 0, 0, 0, 1, 1, 1, 1]);
        let pool: Vec<usize> = (0..8).collect();
        let b = sample_pairs(&pool, &l, 3, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        for u in 0..8 {
            let mut pos: Vec<usize> =
                b.iter().filter(|&(a, _, p)| a == u && p == Polarity::Positive).map(|(_, v, _)| v).collect();
            pos.sort_unstable();
            pos.dedup();
            assert_eq!(pos.len(), 3);
        }
    }

    #[test]
    fn singleton_class_gets_negatives_only() {
        let l = labels(&[0, 1, 1]);
        let b = sample_pairs(&[0, 1, 2], &l, 4, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(b.iter().filter(|&(u, _, _)| u == 0).all(|(_, _, p)| p == Polarity::Negative));
        assert_eq!(b.iter().filter(|&(u, _, _)| u == 0).count(), 4);
        // class of size two: 4 positives with replacement, always the other one
        assert!(b.iter().filter(|&(u, _, p)| u == 1 && p == Polarity::Positive).all(|(_, v, _)| v == 2));
    }

    #[test]
    fn deterministic_under_seed() {
        let l = labels(&[0, 1, 0, 1, 2, 2, 0]);
        let pool = [0, 1, 2, 3, 4, 5, 6];
        let a = sample_pairs(&pool, &l, 3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_pairs(&pool, &l, 3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_single_class_and_unlabeled() {
        let l = labels(&[0, 0, 0]);
        assert!(sample_pairs(&[0, 1, 2], &l, 1, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        let l = vec![Some(0), None, Some(1)];
        assert!(sample_pairs(&[0, 1, 2], &l, 1, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
