//! Self-embedding MLP and the bilinear mutual-information estimator.
//!
//! The estimator scores a node pair as `sigmoid(ℓ(u, v))` with the symmetrized
//! bilinear logit
//!
//! ```text
//! ℓ(u, v) = ½ (z_uᵀ W_e z_v + z_vᵀ W_e z_u) + b
//! ```
//!
//! and is trained with binary cross-entropy on same-class (positive) and
//! different-class (negative) pairs. For one pair the softplus form of the
//! mutual-information value, `-sp(-ℓ) + sp(ℓ)`, equals `ℓ` exactly, so
//! [`MiEstimator::pairwise_mi`] returns the logit itself.

mod m3s;
mod pairs;
mod persist;

pub use m3s::{class_centroids, m3s_train, pseudo_label, train_contrastive, M3sOutcome, StageRecord};
pub use pairs::{sample_pairs, PairBatch, Polarity};
pub use persist::{load_estimator, save_estimator};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    dot, dropout_mask, selu, selu_grad, sigmoid, softplus, ParamId, ParameterStore, SparseRows, Tensor2,
};

/// Which feature matrix the self-embedding MLP reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingSource {
    Raw,
    Mean1hop,
}

/// Per-node latent vectors `Z` produced by the self-embedding MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfEmbeddings {
    pub z: Tensor2,
    pub source: EmbeddingSource,
}

impl SelfEmbeddings {
    pub fn node_count(&self) -> usize {
        self.z.rows()
    }

    pub fn row(&self, u: usize) -> &[f64] {
        self.z.row(u)
    }
}

/// Parameters of the self-embedding MLP and the bilinear scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct MiEstimator {
    store: ParameterStore,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    we: ParamId,
    bias: ParamId,
}

/// Activations cached by a training-mode forward pass.
struct MlpTrace {
    h1_pre: Tensor2,
    /// post-activation, post-dropout
    h1: Tensor2,
    mask: Option<Tensor2>,
    z_pre: Tensor2,
    z: Tensor2,
}

impl MiEstimator {
    pub const PARAM_NAMES: [&'static str; 6] = ["mlp.w1", "mlp.b1", "mlp.w2", "mlp.b2", "mie.we", "mie.b"];

    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, se_dim: usize, rng: &mut R) -> Self {
        let tensors = [
            Tensor2::xavier_uniform(hidden_dim, input_dim, rng),
            Tensor2::zeros(1, hidden_dim),
            Tensor2::xavier_uniform(se_dim, hidden_dim, rng),
            Tensor2::zeros(1, se_dim),
            Tensor2::xavier_uniform(se_dim, se_dim, rng),
            Tensor2::zeros(1, 1),
        ];
        Self::from_tensors(tensors).expect("freshly built shapes are consistent")
    }

    /// Builds an estimator from `[w1, b1, w2, b2, we, b]`.
    pub fn from_tensors(t: [Tensor2; 6]) -> Result<Self> {
        let [w1, b1, w2, b2, we, b] = t;
        let (hidden, _) = w1.shape();
        let (se, h2) = w2.shape();
        if b1.shape() != (1, hidden)
            || h2 != hidden
            || b2.shape() != (1, se)
            || we.shape() != (se, se)
            || b.shape() != (1, 1)
        {
            return Err(Error::Shape("inconsistent estimator parameter shapes".into()));
        }
        let mut store = ParameterStore::new();
        let mut ids = Vec::with_capacity(6);
        for (name, t) in Self::PARAM_NAMES.iter().zip([w1, b1, w2, b2, we, b]) {
            ids.push(store.add(*name, t)?);
        }
        Ok(Self { store, w1: ids[0], b1: ids[1], w2: ids[2], b2: ids[3], we: ids[4], bias: ids[5] })
    }

    pub fn store(&self) -> &ParameterStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    pub fn input_dim(&self) -> usize {
        self.store.value(self.w1).cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.store.value(self.w1).rows()
    }

    pub fn se_dim(&self) -> usize {
        self.store.value(self.we).rows()
    }

    pub fn bilinear(&self) -> &Tensor2 {
        self.store.value(self.we)
    }

    pub fn bias(&self) -> f64 {
        self.store.value(self.bias).get(0, 0)
    }

    /// `½ (W_e + W_eᵀ)`
    pub fn symmetric_bilinear(&self) -> Tensor2 {
        let w = self.bilinear();
        let n = w.rows();
        let mut s = Tensor2::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                s.set(i, j, 0.5 * (w.get(i, j) + w.get(j, i)));
            }
        }
        s
    }

    fn forward_mlp<R: Rng + ?Sized>(&self, x: &SparseRows, dropout: Option<(f64, &mut R)>) -> Result<MlpTrace> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "estimator expects {} input features, got {}",
                self.input_dim(),
                x.cols()
            )));
        }
        let mut h1_pre = x.mul_block_t(self.store.value(self.w1), 0);
        h1_pre.add_row_vector(self.store.value(self.b1).as_slice());
        let mut h1 = h1_pre.map(selu);
        let mask = match dropout {
            Some((rate, rng)) if rate > 0.0 => {
                let m = dropout_mask(h1.rows(), h1.cols(), rate, rng);
                h1.hadamard_assign(&m);
                Some(m)
            }
            _ => None,
        };
        let mut z_pre = h1.matmul_t(self.store.value(self.w2))?;
        z_pre.add_row_vector(self.store.value(self.b2).as_slice());
        let z = z_pre.map(selu);
        Ok(MlpTrace { h1_pre, h1, mask, z_pre, z })
    }

    /// Evaluation-mode self-embeddings `Z = SELU(W₂ SELU(W₁ x + b₁) + b₂)`.
    pub fn embed(&self, x: &SparseRows) -> Result<Tensor2> {
        Ok(self.forward_mlp::<rand_chacha::ChaCha8Rng>(x, None)?.z)
    }

    pub fn self_embed(&self, features: &Tensor2, source: EmbeddingSource) -> Result<SelfEmbeddings> {
        if !features.is_finite() {
            return Err(Error::InvalidDataset("non-finite features".into()));
        }
        let z = self.embed(&SparseRows::from_dense(features))?;
        Ok(SelfEmbeddings { z, source })
    }

    /// Symmetrized bilinear logit between two embedding vectors.
    pub fn logit(&self, zu: &[f64], zv: &[f64]) -> f64 {
        let w = self.bilinear();
        let mut a = 0.0;
        let mut b = 0.0;
        for i in 0..w.rows() {
            let row = w.row(i);
            a += zu[i] * dot(row, zv);
            b += zv[i] * dot(row, zu);
        }
        0.5 * (a + b) + self.bias()
    }

    /// Estimator output `sigmoid(ℓ(u, v))` in `(0, 1)`.
    pub fn mi_score(&self, z: &SelfEmbeddings, u: usize, v: usize) -> f64 {
        sigmoid(self.logit(z.row(u), z.row(v)))
    }

    /// Pairwise mutual information. With a single positive and negative term
    /// the softplus estimate `-sp(-ℓ) + sp(ℓ)` reduces to `ℓ` exactly.
    pub fn pairwise_mi(&self, z: &SelfEmbeddings, u: usize, v: usize) -> f64 {
        self.logit(z.row(u), z.row(v))
    }

    /// The softplus form of the pairwise MI, kept for checking the identity.
    pub fn pairwise_mi_softplus(&self, zu: &[f64], zv: &[f64]) -> f64 {
        let l = self.logit(zu, zv);
        -softplus(-l) + softplus(l)
    }

    /// Mean binary cross-entropy of `batch` scored on fixed embeddings, with
    /// gradients with respect to `Z`, `W_e` and `b`.
    pub fn pair_loss(&self, batch: &PairBatch, z: &Tensor2) -> Result<PairLoss> {
        if batch.is_empty() {
            return Err(Error::Empty("pair batch"));
        }
        let wsym = self.symmetric_bilinear();
        // row v of s is W_sym z_v, so ℓ(u, v) = z_u · s_v + b
        let s = z.matmul(&wsym)?;
        let b = self.bias();
        let n = batch.len() as f64;
        let mut loss = 0.0;
        let mut dz = Tensor2::zeros(z.rows(), z.cols());
        let mut dbias = 0.0;
        let mut gu = Tensor2::zeros(batch.len(), z.cols());
        let mut gv = Tensor2::zeros(batch.len(), z.cols());
        for (k, (u, v, pol)) in batch.iter().enumerate() {
            let l = dot(z.row(u), s.row(v)) + b;
            let y = pol.target();
            // -ln σ(ℓ) = sp(-ℓ),  -ln(1 - σ(ℓ)) = sp(ℓ)
            loss += if y == 1.0 { softplus(-l) } else { softplus(l) };
            let g = (sigmoid(l) - y) / n;
            dbias += g;
            crate::numerics::axpy(g, s.row(v), dz.row_mut(u));
            crate::numerics::axpy(g, s.row(u), dz.row_mut(v));
            for (o, x) in gu.row_mut(k).iter_mut().zip(z.row(u)) {
                *o = g * x;
            }
            gv.row_mut(k).copy_from_slice(z.row(v));
        }
        // Σ g z_u z_vᵀ, symmetrized
        let outer = gu.t_matmul(&gv)?;
        let m = outer.rows();
        let mut dwe = Tensor2::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                dwe.set(i, j, 0.5 * (outer.get(i, j) + outer.get(j, i)));
            }
        }
        Ok(PairLoss { loss: loss / n, dz, dwe, dbias })
    }

    /// Full training-mode pass: MLP forward (with dropout), pair loss, and
    /// backward into the gradient buffers. Does not step the optimizer.
    pub fn accumulate_loss_grad<R: Rng + ?Sized>(
        &mut self,
        x: &SparseRows,
        batch: &PairBatch,
        dropout: f64,
        rng: &mut R,
    ) -> Result<f64> {
        let trace = self.forward_mlp(x, Some((dropout, rng)))?;
        let pl = self.pair_loss(batch, &trace.z)?;
        self.backward_mlp(x, &trace, pl.dz)?;
        self.store.accumulate(self.we, &pl.dwe);
        self.store.grad_mut(self.bias).as_mut_slice()[0] += pl.dbias;
        Ok(pl.loss)
    }

    /// Evaluation-mode loss on a batch (no dropout, no gradients).
    pub fn evaluate_loss(&self, x: &SparseRows, batch: &PairBatch) -> Result<f64> {
        Ok(self.pair_loss(batch, &self.embed(x)?)?.loss)
    }

    fn backward_mlp(&mut self, x: &SparseRows, t: &MlpTrace, dz: Tensor2) -> Result<()> {
        let mut dz_pre = dz;
        for (d, &p) in dz_pre.as_mut_slice().iter_mut().zip(t.z_pre.as_slice()) {
            *d *= selu_grad(p);
        }
        let dw2 = dz_pre.t_matmul(&t.h1)?;
        let db2 = dz_pre.column_sums();
        let mut dh1 = dz_pre.matmul(self.store.value(self.w2))?;
        if let Some(mask) = &t.mask {
            dh1.hadamard_assign(mask);
        }
        for (d, &p) in dh1.as_mut_slice().iter_mut().zip(t.h1_pre.as_slice()) {
            *d *= selu_grad(p);
        }
        let db1 = dh1.column_sums();
        x.accumulate_block_grad(&dh1, self.store.grad_mut(self.w1), 0);
        self.store.accumulate(self.w2, &dw2);
        add_row(self.store.grad_mut(self.b1), &db1);
        add_row(self.store.grad_mut(self.b2), &db2);
        debug_assert!(t.z.is_finite());
        Ok(())
    }
}

fn add_row(t: &mut Tensor2, v: &[f64]) {
    for (a, b) in t.as_mut_slice().iter_mut().zip(v) {
        *a += b;
    }
}

/// Loss value and gradients of the pair objective on fixed embeddings.
#[derive(Debug, Clone)]
pub struct PairLoss {
    pub loss: f64,
    pub dz: Tensor2,
    pub dwe: Tensor2,
    pub dbias: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(input: usize, hidden: usize, se: usize, seed: u64) -> MiEstimator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MiEstimator::new(input, hidden, se, &mut rng)
    }

    fn with_bilinear(we: Tensor2, b: f64) -> MiEstimator {
        let se = we.rows();
        MiEstimator::from_tensors([
            Tensor2::zeros(1, 1),
            Tensor2::zeros(1, 1),
            Tensor2::zeros(se, 1),
            Tensor2::zeros(1, se),
            we,
            Tensor2::filled(1, 1, b),
        ])
        .unwrap()
    }

    fn emb(rows: &[Vec<f64>]) -> SelfEmbeddings {
        SelfEmbeddings { z: Tensor2::from_rows(rows).unwrap(), source: EmbeddingSource::Raw }
    }

    #[test]
    fn output_shape_and_determinism() {
        let est = small(7, 16, 128, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor2::xavier_uniform(9, 7, &mut rng);
        let a = est.self_embed(&x, EmbeddingSource::Raw).unwrap();
        let b = est.self_embed(&x, EmbeddingSource::Raw).unwrap();
        assert_eq!(a.z.shape(), (9, 128));
        assert_eq!(a, b);
        assert!(est.self_embed(&Tensor2::zeros(9, 6), EmbeddingSource::Raw).is_err());
    }

    #[test]
    fn zero_weights_give_zero_embeddings() {
        let est = MiEstimator::from_tensors([
            Tensor2::zeros(4, 3),
            Tensor2::zeros(1, 4),
            Tensor2::zeros(5, 4),
            Tensor2::zeros(1, 5),
            Tensor2::zeros(5, 5),
            Tensor2::zeros(1, 1),
        ])
        .unwrap();
        let x = Tensor2::filled(6, 3, 2.5);
        let z = est.self_embed(&x, EmbeddingSource::Raw).unwrap();
        assert!(z.z.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn score_examples() {
        let z = emb(&[vec![1.0, 1.0], vec![1.0, -1.0], vec![0.5, 0.3]]);
        let zero = with_bilinear(Tensor2::zeros(2, 2), 0.0);
        assert_eq!(zero.mi_score(&z, 0, 1), 0.5);
        assert_eq!(zero.pairwise_mi(&z, 0, 1), 0.0);

        let ident = with_bilinear(Tensor2::identity(2), 0.0);
        let n2 = 0.5f64 * 0.5 + 0.3 * 0.3;
        assert!((ident.mi_score(&z, 2, 2) - sigmoid(n2)).abs() < 1e-15);

        // W = [[1,0],[0,2]], z_u = [1,1], z_v = [1,-1]:
        // z_uᵀ W z_v = 1*1*1 + 1*2*(-1) = -1, and z_vᵀ W z_u = -1, logit = -1 + b
        let diag = with_bilinear(Tensor2::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap(), 0.25);
        assert!((diag.pairwise_mi(&z, 0, 1) - (-0.75)).abs() < 1e-15);

        // asymmetric W: symmetrization averages both orders
        let asym = with_bilinear(Tensor2::from_rows(&[vec![0.0, 3.0], vec![0.0, 0.0]]).unwrap(), 0.0);
        // z_uᵀ W z_v = 1*3*(-1) = -3 ; z_vᵀ W z_u = 1*3*1 = 3
        assert_eq!(asym.pairwise_mi(&z, 0, 1), 0.0);
        assert_eq!(asym.pairwise_mi(&z, 0, 1), asym.pairwise_mi(&z, 1, 0));
    }

    #[test]
    fn pairwise_mi_equals_softplus_form() {
        let est = small(3, 4, 6, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let z = Tensor2::xavier_uniform(10, 6, &mut rng);
        for u in 0..10 {
            for v in 0..10 {
                let a = est.logit(z.row(u), z.row(v));
                assert!((a - est.pairwise_mi_softplus(z.row(u), z.row(v))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn loss_limits() {
        let z = emb(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let batch = PairBatch::new(
            vec![0, 1, 2],
            vec![1, 2, 0],
            vec![Polarity::Positive, Polarity::Negative, Polarity::Positive],
        )
        .unwrap();
        let half = with_bilinear(Tensor2::zeros(2, 2), 0.0);
        assert!((half.pair_loss(&batch, &z.z).unwrap().loss - std::f64::consts::LN_2).abs() < 1e-15);

        // huge positive bias with positives only -> loss -> 0
        let pos = PairBatch::new(vec![0, 1], vec![2, 2], vec![Polarity::Positive; 2]).unwrap();
        let sure = with_bilinear(Tensor2::zeros(2, 2), 40.0);
        assert!(sure.pair_loss(&pos, &z.z).unwrap().loss < 1e-15);
        let neg = PairBatch::new(vec![0, 1], vec![2, 2], vec![Polarity::Negative; 2]).unwrap();
        let never = with_bilinear(Tensor2::zeros(2, 2), -40.0);
        assert!(never.pair_loss(&neg, &z.z).unwrap().loss < 1e-15);

        let empty = PairBatch::default();
        assert!(half.pair_loss(&empty, &z.z).is_err());
    }

    #[test]
    fn estimation_loss_gradients() {
        let mut est = small(5, 6, 4, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = SparseRows::from_dense(&Tensor2::xavier_uniform(8, 5, &mut rng));
        let batch = PairBatch::new(
            vec![0, 1, 2, 3, 4, 5, 6],
            vec![1, 2, 3, 7, 6, 0, 6],
            vec![
                Polarity::Positive,
                Polarity::Negative,
                Polarity::Positive,
                Polarity::Negative,
                Polarity::Negative,
                Polarity::Positive,
                Polarity::Positive,
            ],
        )
        .unwrap();
        let mut store = est.store().clone();
        let report = grad_check(
            &mut store,
            |s| {
                est.store_mut().copy_values_from(s);
                est.store_mut().zero_grads();
                let l = est.accumulate_loss_grad(&x, &batch, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
                for id in s.ids().collect::<Vec<_>>() {
                    let g = est.store().grad(id).clone();
                    s.accumulate(id, &g);
                }
                l
            },
            500,
            1,
        );
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}
