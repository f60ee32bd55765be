//! Contrastive training of the estimator, with multi-stage self-training that
//! grows the labeled pool with confident pseudo-labels.

use rand::Rng;

use super::{sample_pairs, EmbeddingSource, MiEstimator, SelfEmbeddings};
use crate::error::{Error, Result};
use crate::numerics::{axpy, SparseRows, Tensor2, TrainConfig};

/// Mean self-embedding of the pool members of every class, one row per class.
/// Every class in `0..class_count` must have at least one member.
pub fn class_centroids(z: &Tensor2, pool: &[usize], labels: &[Option<usize>], class_count: usize) -> Result<Tensor2> {
    let (centroids, counts) = centroid_sums(z, pool, labels, class_count)?;
    if counts.contains(&0) {
        return Err(Error::Empty("class with no labeled member"));
    }
    Ok(centroids)
}

fn centroid_sums(
    z: &Tensor2,
    pool: &[usize],
    labels: &[Option<usize>],
    class_count: usize,
) -> Result<(Tensor2, Vec<usize>)> {
    let mut c = Tensor2::zeros(class_count, z.cols());
    let mut counts = vec![0usize; class_count];
    for &u in pool {
        let k = labels
            .get(u)
            .copied()
            .flatten()
            .filter(|&k| k < class_count)
            .ok_or(Error::Config(format!("pool node {u} has no valid label")))?;
        axpy(1.0, z.row(u), c.row_mut(k));
        counts[k] += 1;
    }
    for (k, &n) in counts.iter().enumerate() {
        if n > 0 {
            c.row_mut(k).iter_mut().for_each(|x| *x /= n as f64);
        }
    }
    Ok((c, counts))
}

/// Class with the highest MI between `z_u` and its centroid, and that MI as
/// the confidence. Ties go to the lower class id. Classes flagged `false` in
/// `present` are skipped.
pub fn pseudo_label(est: &MiEstimator, z_u: &[f64], centroids: &Tensor2, present: Option<&[bool]>) -> (usize, f64) {
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for k in 0..centroids.rows() {
        if present.is_some_and(|p| !p[k]) {
            continue;
        }
        let s = est.logit(z_u, centroids.row(k));
        if best.0 == usize::MAX || s > best.1 {
            best = (k, s);
        }
    }
    best
}

/// `epochs` full-batch SGD steps on freshly drawn pairs from `pool`. Returns
/// the training loss of every epoch.
pub fn train_contrastive<R: Rng + ?Sized>(
    est: &mut MiEstimator,
    x: &SparseRows,
    pool: &[usize],
    labels: &[Option<usize>],
    epochs: usize,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let opt = cfg.estimator_sgd();
    let mut losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let batch = sample_pairs(pool, labels, cfg.per_anchor, rng)?;
        est.store_mut().zero_grads();
        let loss = est.accumulate_loss_grad(x, &batch, cfg.dropout, rng)?;
        if !loss.is_finite() {
            return Err(Error::Undefined("estimator loss diverged"));
        }
        est.store_mut().sgd_momentum_step(&opt);
        losses.push(loss);
    }
    Ok(losses)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub pool_before: usize,
    pub promoted: usize,
    /// Mean confidence (MI to the chosen centroid) of the promoted nodes.
    pub mean_confidence: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct M3sOutcome {
    pub estimator: MiEstimator,
    pub embeddings: SelfEmbeddings,
    pub stages: Vec<StageRecord>,
    pub losses: Vec<f64>,
    pub final_pool_size: usize,
}

/// Warm-up on the labeled `train` nodes, then `cfg.m3s_stages` rounds of:
/// pseudo-label every node outside the pool by its nearest class centroid
/// (in MI), move the `top_t` most confident into the pool with frozen
/// pseudo-labels, retrain for `cfg.stage_epochs`.
///
/// Pseudo-labels are only used to draw training pairs. When `train` already
/// covers every node each stage is a no-op and the run is identical to
/// [`train_contrastive`] for the same total number of epochs.
#[allow(clippy::too_many_arguments)]
pub fn m3s_train<R: Rng + ?Sized>(
    mut est: MiEstimator,
    x: &SparseRows,
    source: EmbeddingSource,
    train: &[usize],
    labels: &[Option<usize>],
    class_count: usize,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<M3sOutcome> {
    let n = x.rows();
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} feature rows", labels.len())));
    }
    let mut pool_labels = vec![None; n];
    for &u in train {
        let l = labels.get(u).copied().flatten().ok_or(Error::Config(format!("train node {u} is unlabeled")))?;
        pool_labels[u] = Some(l);
    }
    let mut pool: Vec<usize> = (0..n).filter(|&u| pool_labels[u].is_some()).collect();
    let mut losses = train_contrastive(&mut est, x, &pool, &pool_labels, cfg.warmup_epochs, cfg, rng)?;
    let top_t = cfg.top_t(n);
    let mut stages = Vec::with_capacity(cfg.m3s_stages);

    for _ in 0..cfg.m3s_stages {
        let pool_before = pool.len();
        let outside: Vec<usize> = (0..n).filter(|&u| pool_labels[u].is_none()).collect();
        let mut promoted_conf = Vec::new();
        if !outside.is_empty() && top_t > 0 {
            let z = est.embed(x)?;
            let (centroids, counts) = centroid_sums(&z, &pool, &pool_labels, class_count)?;
            let present: Vec<bool> = counts.iter().map(|&c| c > 0).collect();
            let mut scored: Vec<(usize, usize, f64)> = outside
                .iter()
                .map(|&u| {
                    let (k, conf) = pseudo_label(&est, z.row(u), &centroids, Some(&present));
                    (u, k, conf)
                })
                .collect();
            scored.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
            for &(u, k, conf) in scored.iter().take(top_t) {
                pool_labels[u] = Some(k);
                promoted_conf.push(conf);
            }
            pool = (0..n).filter(|&u| pool_labels[u].is_some()).collect();
        }
        let mean_confidence =
            (!promoted_conf.is_empty()).then(|| promoted_conf.iter().sum::<f64>() / promoted_conf.len() as f64);
        stages.push(StageRecord { pool_before, promoted: promoted_conf.len(), mean_confidence });
        losses.extend(train_contrastive(&mut est, x, &pool, &pool_labels, cfg.stage_epochs, cfg, rng)?);
    }

    let embeddings = SelfEmbeddings { z: est.embed(x)?, source };
    Ok(M3sOutcome { estimator: est, embeddings, stages, losses, final_pool_size: pool.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> TrainConfig {
        TrainConfig {
            hidden_dim: 8,
            se_dim: 6,
            warmup_epochs: 5,
            stage_epochs: 3,
            m3s_stages: 3,
            m3s_top_t: Some(4),
            per_anchor: 2,
            ..TrainConfig::default()
        }
    }

    fn data(n: usize, seed: u64) -> (SparseRows, Vec<Option<usize>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<Option<usize>> = (0..n).map(|u| Some(u % 3)).collect();
        let mut x = Tensor2::xavier_uniform(n, 5, &mut rng);
        for u in 0..n {
            let v = x.get(u, u % 3) + 2.0;
            x.set(u, u % 3, v);
        }
        (SparseRows::from_dense(&x), labels)
    }

    #[test]
    fn centroids_match_hand_means() {
        let z = Tensor2::from_rows(&[vec![1.0, 0.0], vec![3.0, 2.0], vec![0.0, 5.0], vec![9.0, 9.0]]).unwrap();
        let labels = vec![Some(0), Some(0), Some(1), None];
        let c = class_centroids(&z, &[0, 1, 2], &labels, 2).unwrap();
        assert_eq!(c.row(0), &[2.0, 1.0]);
        assert_eq!(c.row(1), &[0.0, 5.0]);
        assert!(class_centroids(&z, &[0, 1], &labels, 2).is_err());
    }

    #[test]
    fn pseudo_label_is_argmax_with_low_id_ties() {
        let est = MiEstimator::from_tensors([
            Tensor2::zeros(1, 1),
            Tensor2::zeros(1, 1),
            Tensor2::zeros(2, 1),
            Tensor2::zeros(1, 2),
            Tensor2::identity(2),
            Tensor2::zeros(1, 1),
        ])
        .unwrap();
        let c = Tensor2::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(pseudo_label(&est, &[2.0, 1.0], &c, None), (0, 2.0));
        assert_eq!(pseudo_label(&est, &[0.0, 3.0], &c, None), (1, 3.0));
        assert_eq!(pseudo_label(&est, &[2.0, 1.0], &c, Some(&[false, true, true])), (2, 2.0));
    }

    #[test]
    fn pool_grows_by_top_t_and_labels_stay_frozen() {
        let (x, labels) = data(30, 1);
        let train: Vec<usize> = (0..9).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let est = MiEstimator::new(5, 8, 6, &mut rng);
        let out = m3s_train(est, &x, EmbeddingSource::Raw, &train, &labels, 3, &cfg(), &mut rng).unwrap();
        let sizes: Vec<usize> = out.stages.iter().map(|s| s.pool_before).collect();
        assert_eq!(sizes, vec![9, 13, 17]);
        assert!(out.stages.iter().all(|s| s.promoted == 4));
        assert_eq!(out.final_pool_size, 21);
        assert_eq!(out.losses.len(), 5 + 3 * 3);
    }

    #[test]
    fn promotion_stops_at_remaining_nodes() {
        let (x, labels) = data(12, 2);
        let train: Vec<usize> = (0..6).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let est = MiEstimator::new(5, 8, 6, &mut rng);
        let out = m3s_train(est, &x, EmbeddingSource::Raw, &train, &labels, 3, &cfg(), &mut rng).unwrap();
        let promoted: Vec<usize> = out.stages.iter().map(|s| s.promoted).collect();
        assert_eq!(promoted, vec![4, 2, 0]);
        assert_eq!(out.final_pool_size, 12);
    }

    #[test]
    fn fully_labeled_pool_equals_plain_training() {
        let (x, labels) = data(15, 5);
        let train: Vec<usize> = (0..15).collect();
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let est = MiEstimator::new(5, 8, 6, &mut rng);
        let mut plain = est.clone();
        let mut rng2 = rng.clone();
        let out = m3s_train(est, &x, EmbeddingSource::Raw, &train, &labels, 3, &c, &mut rng).unwrap();
        let epochs = c.warmup_epochs + c.m3s_stages * c.stage_epochs;
        let losses = train_contrastive(&mut plain, &x, &train, &labels, epochs, &c, &mut rng2).unwrap();
        assert_eq!(out.losses, losses);
        assert_eq!(out.estimator.store(), plain.store());
        assert_eq!(out.embeddings.z, plain.embed(&x).unwrap());
    }

    #[test]
    fn training_lowers_held_out_loss() {
        let (x, labels) = data(60, 7);
        let c = TrainConfig { estimator_lr: 0.05, dropout: 0.0, ..cfg() };
        let train: Vec<usize> = (0..40).collect();
        let held: Vec<usize> = (40..60).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut est = MiEstimator::new(5, 8, 6, &mut rng);
        let batch = sample_pairs(&held, &labels, 4, &mut rng).unwrap();
        let before = est.evaluate_loss(&x, &batch).unwrap();
        train_contrastive(&mut est, &x, &train, &labels, 150, &c, &mut rng).unwrap();
        let after = est.evaluate_loss(&x, &batch).unwrap();
        assert!(after < before, "{after} !< {before}");
    }
}
