use rand_chacha::ChaCha8Rng;

use super::train::{cross_entropy, Classifier};
use crate::error::Result;
use crate::numerics::{dropout_mask, selu, selu_grad, ParamId, ParameterStore, SparseRows, Tensor2};

/// Two-layer SELU network on node features alone:
/// `logits = W₂ dropout(SELU(W₁ x + b₁)) + b₂`.
#[derive(Debug, Clone)]
pub struct MlpClassifier {
    store: ParameterStore,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    features: SparseRows,
}

impl MlpClassifier {
    pub fn new(features: SparseRows, hidden: usize, class_count: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut store = ParameterStore::new();
        let w1 = store.add("mlp.w1", Tensor2::xavier_uniform(hidden, features.cols(), rng))?;
        let b1 = store.add("mlp.b1", Tensor2::zeros(1, hidden))?;
        let w2 = store.add("mlp.w2", Tensor2::xavier_uniform(class_count, hidden, rng))?;
        let b2 = store.add("mlp.b2", Tensor2::zeros(1, class_count))?;
        Ok(Self { store, w1, b1, w2, b2, features })
    }

    fn hidden_pre(&self) -> Tensor2 {
        let mut h = self.features.mul_block_t(self.store.value(self.w1), 0);
        h.add_row_vector(self.store.value(self.b1).as_slice());
        h
    }

    fn head(&self, h: &Tensor2) -> Result<Tensor2> {
        let mut logits = h.matmul_t(self.store.value(self.w2))?;
        logits.add_row_vector(self.store.value(self.b2).as_slice());
        Ok(logits)
    }
}

impl Classifier for MlpClassifier {
    fn store(&self) -> &ParameterStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    fn logits(&self) -> Result<Tensor2> {
        self.head(&self.hidden_pre().map(selu))
    }

    fn accumulate_loss_grad(
        &mut self,
        nodes: &[usize],
        labels: &[Option<usize>],
        dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        let pre = self.hidden_pre();
        let mut h = pre.map(selu);
        let mask = (dropout > 0.0).then(|| dropout_mask(h.rows(), h.cols(), dropout, rng));
        if let Some(m) = &mask {
            h.hadamard_assign(m);
        }
        let logits = self.head(&h)?;
        let (loss, dlogits) = cross_entropy(&logits, nodes, labels)?;

        let dw2 = dlogits.t_matmul(&h)?;
        let db2 = dlogits.column_sums();
        let mut dh = dlogits.matmul(self.store.value(self.w2))?;
        if let Some(m) = &mask {
            dh.hadamard_assign(m);
        }
        for (d, &p) in dh.as_mut_slice().iter_mut().zip(pre.as_slice()) {
            *d *= selu_grad(p);
        }
        let db1 = dh.column_sums();
        self.features.accumulate_block_grad(&dh, self.store.grad_mut(self.w1), 0);
        self.store.accumulate(self.w2, &dw2);
        for (g, v) in self.store.grad_mut(self.b1).as_mut_slice().iter_mut().zip(db1) {
            *g += v;
        }
        for (g, v) in self.store.grad_mut(self.b2).as_mut_slice().iter_mut().zip(db2) {
            *g += v;
        }
        Ok(loss)
    }
}
