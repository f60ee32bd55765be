//! Bi-level attentive classifier, the MLP baseline, and the shared training
//! loop.
//!
//! Per level (local, non-local) a tower stacks `agg_layers` attentive
//! aggregations over the same neighborhood map, then projects to `hidden`
//! with ReLU. The fused embedding is
//! `H_F = ReLU(W_F [x_u ‖ H_L(u) ‖ H_NL(u)] + b_F)` and the logits a linear
//! map of `H_F`.

mod attention;
mod mlp;
mod train;

pub use attention::{attention_weights, attentive_aggregate, HeadParams};
pub use mlp::MlpClassifier;
pub use train::{accuracy, evaluate, train_classifier, Classifier, TrainOutcome};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NeighborhoodMap;
use crate::numerics::{
    dropout_mask, relu, relu_grad, ParamId, ParameterStore, RowSource, SparseRows, Tensor2, TrainConfig,
};
use attention::{aggregate, attend, attend_backward, Attention, Csr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Local,
    Nonlocal,
    Bilevel,
}

impl Mode {
    pub fn uses_local(self) -> bool {
        matches!(self, Mode::Local | Mode::Bilevel)
    }

    pub fn uses_nonlocal(self) -> bool {
        matches!(self, Mode::Nonlocal | Mode::Bilevel)
    }
}

/// Everything the classifier reads besides its own parameters. The model is
/// frozen with respect to these.
#[derive(Debug, Clone)]
pub struct ModelInputs {
    features: SparseRows,
    z: Tensor2,
    local: Option<Csr>,
    nonlocal: Option<Csr>,
    /// Features have no negative entry, so the first aggregation's ReLU is
    /// the identity and the output projection can be applied before it.
    pub(crate) nonnegative: bool,
}

impl ModelInputs {
    pub fn new(
        features: SparseRows,
        z: Tensor2,
        local: Option<&NeighborhoodMap>,
        nonlocal: Option<&NeighborhoodMap>,
    ) -> Result<Self> {
        let n = features.rows();
        if z.rows() != n {
            return Err(Error::Shape(format!("{} embedding rows for {n} nodes", z.rows())));
        }
        let conv = |m: Option<&NeighborhoodMap>| -> Result<Option<Csr>> {
            match m {
                Some(m) if m.node_count() != n => {
                    Err(Error::Shape(format!("neighborhood map has {} nodes, expected {n}", m.node_count())))
                }
                Some(m) => Csr::from_map(m).map(Some),
                None => Ok(None),
            }
        };
        let nonnegative = (0..n).all(|u| features.row(u).1.iter().all(|&v| v >= 0.0));
        Ok(Self { local: conv(local)?, nonlocal: conv(nonlocal)?, features, z, nonnegative })
    }

    pub fn node_count(&self) -> usize {
        self.features.rows()
    }

    pub fn features(&self) -> &SparseRows {
        &self.features
    }

    pub fn has_local(&self) -> bool {
        self.local.is_some()
    }

    pub fn has_nonlocal(&self) -> bool {
        self.nonlocal.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub h_f: Tensor2,
    pub class_logits: Tensor2,
}

#[derive(Debug, Clone)]
struct TowerIds {
    /// `[layer][head]`
    w: Vec<Vec<ParamId>>,
    a: Vec<Vec<ParamId>>,
    out_w: ParamId,
    out_b: ParamId,
}

#[derive(Debug, Clone)]
enum FirstLayer {
    /// `G₁ = ReLU(Ā₁ X)` materialized, pre- and post-activation.
    Dense { pre: Tensor2, post: Tensor2 },
    /// `X W_outᵀ`, valid when `X ≥ 0` since then `G₁ W_outᵀ = Ā₁ (X W_outᵀ)`.
    Projected(Tensor2),
}

#[derive(Debug, Clone)]
struct TowerCache {
    attention: Vec<Attention>,
    first: FirstLayer,
    /// `y[0] = G₁ W_outᵀ`, `y[k] = Ā_{k+1} y[k-1]`
    y: Vec<Tensor2>,
    h_pre: Tensor2,
    mask: Option<Tensor2>,
    /// post-ReLU, post-dropout
    h: Tensor2,
}

struct ForwardCache {
    local: Option<TowerCache>,
    nonlocal: Option<TowerCache>,
    hf_pre: Tensor2,
    hf_mask: Option<Tensor2>,
    hf: Tensor2,
    logits: Tensor2,
}

/// Parameters of the attentive classifier plus the inputs it runs on.
#[derive(Debug, Clone)]
pub struct LnlModel {
    store: ParameterStore,
    local: TowerIds,
    nonlocal: TowerIds,
    fuse_w: ParamId,
    fuse_b: ParamId,
    cls_w: ParamId,
    cls_b: ParamId,
    hidden: usize,
    mode: Mode,
    inputs: ModelInputs,
}

impl LnlModel {
    /// Fails with a configuration error when `mode` needs a neighborhood map
    /// that `inputs` does not carry.
    pub fn new(
        inputs: ModelInputs,
        class_count: usize,
        mode: Mode,
        cfg: &TrainConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if mode.uses_local() && !inputs.has_local() {
            return Err(Error::Config(format!("{mode:?} mode needs the local neighborhood map")));
        }
        if mode.uses_nonlocal() && !inputs.has_nonlocal() {
            return Err(Error::Config(format!("{mode:?} mode needs the non-local neighborhood map")));
        }
        if cfg.heads == 0 || cfg.agg_layers == 0 || cfg.hidden_dim == 0 || class_count == 0 {
            return Err(Error::Config("heads, agg_layers, hidden_dim and class count must be positive".into()));
        }
        let f = inputs.features.cols();
        let se = inputs.z.cols();
        let hid = cfg.hidden_dim;
        let mut store = ParameterStore::new();
        let tower = |store: &mut ParameterStore, name: &str, rng: &mut ChaCha8Rng| -> Result<TowerIds> {
            let mut w = Vec::new();
            let mut a = Vec::new();
            for k in 0..cfg.agg_layers {
                let mut wl = Vec::new();
                let mut al = Vec::new();
                for h in 0..cfg.heads {
                    wl.push(store.add(format!("{name}.l{k}.h{h}.w"), Tensor2::xavier_uniform(hid, se, rng))?);
                    al.push(store.add(format!("{name}.l{k}.h{h}.a"), Tensor2::xavier_uniform(1, 2 * hid, rng))?);
                }
                w.push(wl);
                a.push(al);
            }
            let out_w = store.add(format!("{name}.out.w"), Tensor2::xavier_uniform(hid, f, rng))?;
            let out_b = store.add(format!("{name}.out.b"), Tensor2::zeros(1, hid))?;
            Ok(TowerIds { w, a, out_w, out_b })
        };
        let local = tower(&mut store, "local", rng)?;
        let nonlocal = tower(&mut store, "nonlocal", rng)?;
        let fuse_w = store.add("fuse.w", Tensor2::xavier_uniform(hid, f + 2 * hid, rng))?;
        let fuse_b = store.add("fuse.b", Tensor2::zeros(1, hid))?;
        let cls_w = store.add("cls.w", Tensor2::xavier_uniform(class_count, hid, rng))?;
        let cls_b = store.add("cls.b", Tensor2::zeros(1, class_count))?;
        Ok(Self { store, local, nonlocal, fuse_w, fuse_b, cls_w, cls_b, hidden: hid, mode, inputs })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn inputs(&self) -> &ModelInputs {
        &self.inputs
    }

    /// Evaluation-mode forward pass.
    pub fn forward(&self) -> Result<ModelOutput> {
        let c = self.forward_cached(None)?;
        Ok(ModelOutput { h_f: c.hf, class_logits: c.logits })
    }

    /// Level embedding of one tower in evaluation mode (`node_count × hidden`).
    pub fn level_embedding(&self, nonlocal: bool) -> Result<Tensor2> {
        let (ids, csr) = self.tower(nonlocal)?;
        Ok(self.tower_forward(ids, csr, None).h)
    }

    /// Attention heads of `layer` in the chosen tower.
    pub fn heads(&self, nonlocal: bool, layer: usize) -> Vec<HeadParams<'_>> {
        let ids = if nonlocal { &self.nonlocal } else { &self.local };
        ids.w[layer]
            .iter()
            .zip(&ids.a[layer])
            .map(|(&w, &a)| HeadParams { w: self.store.value(w), a: self.store.value(a).as_slice() })
            .collect()
    }

    /// `(W_out, b_out)` of the chosen tower.
    pub fn tower_output(&self, nonlocal: bool) -> (&Tensor2, &[f64]) {
        let ids = if nonlocal { &self.nonlocal } else { &self.local };
        (self.store.value(ids.out_w), self.store.value(ids.out_b).as_slice())
    }

    pub fn fusion(&self) -> (&Tensor2, &[f64]) {
        (self.store.value(self.fuse_w), self.store.value(self.fuse_b).as_slice())
    }

    fn tower(&self, nonlocal: bool) -> Result<(&TowerIds, &Csr)> {
        if nonlocal {
            Ok((&self.nonlocal, self.inputs.nonlocal.as_ref().ok_or(Error::Undefined("no non-local map"))?))
        } else {
            Ok((&self.local, self.inputs.local.as_ref().ok_or(Error::Undefined("no local map"))?))
        }
    }

    fn tower_forward(&self, ids: &TowerIds, csr: &Csr, dropout: Option<(f64, &mut ChaCha8Rng)>) -> TowerCache {
        let s = &self.store;
        let z = &self.inputs.z;
        let heads = |k: usize| -> Vec<HeadParams<'_>> {
            ids.w[k]
                .iter()
                .zip(&ids.a[k])
                .map(|(&w, &a)| HeadParams { w: s.value(w), a: s.value(a).as_slice() })
                .collect()
        };
        let layers = ids.w.len();
        let attention: Vec<Attention> = (0..layers).map(|k| attend(z, csr, &heads(k))).collect();
        // layers ≥ 2 mix nonnegative rows with convex weights, so their ReLU is
        // the identity and the output projection commutes with them
        let (first, y0) = if self.inputs.nonnegative {
            let xw = self.inputs.features.mul_block_t(s.value(ids.out_w), 0);
            let y0 = aggregate(&xw, csr, &attention[0].mean);
            (FirstLayer::Projected(xw), y0)
        } else {
            let pre = aggregate(&self.inputs.features, csr, &attention[0].mean);
            let post = pre.map(relu);
            let y0 = post.matmul_t(s.value(ids.out_w)).expect("tower shapes");
            (FirstLayer::Dense { pre, post }, y0)
        };
        let mut y = vec![y0];
        for att in &attention[1..] {
            let next = aggregate(y.last().unwrap(), csr, &att.mean);
            y.push(next);
        }
        let mut h_pre = y.last().unwrap().clone();
        h_pre.add_row_vector(s.value(ids.out_b).as_slice());
        let mut h = h_pre.map(relu);
        let mask = match dropout {
            Some((rate, rng)) if rate > 0.0 => {
                let m = dropout_mask(h.rows(), h.cols(), rate, rng);
                h.hadamard_assign(&m);
                Some(m)
            }
            _ => None,
        };
        TowerCache { attention, first, y, h_pre, mask, h }
    }

    fn forward_cached(&self, mut dropout: Option<(f64, &mut ChaCha8Rng)>) -> Result<ForwardCache> {
        let n = self.inputs.node_count();
        let f = self.inputs.features.cols();
        let hid = self.hidden;
        let local = if self.mode.uses_local() {
            let (ids, csr) = self.tower(false)?;
            Some(self.tower_forward(ids, csr, dropout.as_mut().map(|(r, g)| (*r, &mut **g))))
        } else {
            None
        };
        let nonlocal = if self.mode.uses_nonlocal() {
            let (ids, csr) = self.tower(true)?;
            Some(self.tower_forward(ids, csr, dropout.as_mut().map(|(r, g)| (*r, &mut **g))))
        } else {
            None
        };
        let wf = self.store.value(self.fuse_w);
        let mut hf_pre = self.inputs.features.mul_block_t(wf, 0);
        for (tower, start) in [(&local, f), (&nonlocal, f + hid)] {
            if let Some(t) = tower {
                hf_pre.add_product(t.h.view(), wf.col_block(start, hid).t());
            }
        }
        hf_pre.add_row_vector(self.store.value(self.fuse_b).as_slice());
        let mut hf = hf_pre.map(relu);
        let hf_mask = match dropout {
            Some((rate, rng)) if rate > 0.0 => {
                let m = dropout_mask(n, hid, rate, rng);
                hf.hadamard_assign(&m);
                Some(m)
            }
            _ => None,
        };
        let mut logits = hf.matmul_t(self.store.value(self.cls_w))?;
        logits.add_row_vector(self.store.value(self.cls_b).as_slice());
        Ok(ForwardCache { local, nonlocal, hf_pre, hf_mask, hf, logits })
    }

    fn backward(&mut self, cache: ForwardCache, dlogits: &Tensor2) -> Result<()> {
        let f = self.inputs.features.cols();
        let hid = self.hidden;
        let dcls = dlogits.t_matmul(&cache.hf)?;
        self.store.accumulate(self.cls_w, &dcls);
        add_row(self.store.grad_mut(self.cls_b), &dlogits.column_sums());
        let mut dhf = dlogits.matmul(self.store.value(self.cls_w))?;
        if let Some(m) = &cache.hf_mask {
            dhf.hadamard_assign(m);
        }
        for (d, &p) in dhf.as_mut_slice().iter_mut().zip(cache.hf_pre.as_slice()) {
            *d *= relu_grad(p);
        }
        add_row(self.store.grad_mut(self.fuse_b), &dhf.column_sums());
        self.inputs.features.accumulate_block_grad(&dhf, self.store.grad_mut(self.fuse_w), 0);

        for (tower, start, nonlocal) in [(cache.local, f, false), (cache.nonlocal, f + hid, true)] {
            let Some(t) = tower else { continue };
            let dblock = dhf.t_matmul(&t.h)?;
            let g = self.store.grad_mut(self.fuse_w);
            for o in 0..hid {
                let row = g.row_mut(o);
                for (j, v) in dblock.row(o).iter().enumerate() {
                    row[start + j] += v;
                }
            }
            let mut dh = Tensor2::zeros(dhf.rows(), hid);
            dh.add_product(dhf.view(), self.store.value(self.fuse_w).col_block(start, hid));
            self.tower_backward(nonlocal, t, dh)?;
        }
        Ok(())
    }

    fn tower_backward(&mut self, nonlocal: bool, t: TowerCache, mut dh: Tensor2) -> Result<()> {
        let ids = if nonlocal { self.nonlocal.clone() } else { self.local.clone() };
        let csr = if nonlocal { self.inputs.nonlocal.clone() } else { self.inputs.local.clone() }
            .ok_or(Error::Undefined("tower without neighborhood map"))?;
        if let Some(m) = &t.mask {
            dh.hadamard_assign(m);
        }
        for (d, &p) in dh.as_mut_slice().iter_mut().zip(t.h_pre.as_slice()) {
            *d *= relu_grad(p);
        }
        add_row(self.store.grad_mut(ids.out_b), &dh.column_sums());

        let layers = ids.w.len();
        let mut dmeans: Vec<Vec<f64>> = vec![Vec::new(); layers];
        // back through the linear layers 2..L
        let mut dy = dh;
        for k in (1..layers).rev() {
            let (dprev, dmean) = aggregate_backward(&t.y[k - 1], &csr, &t.attention[k].mean, &dy);
            dmeans[k] = dmean;
            dy = dprev;
        }
        // y₀ = G₁ W_outᵀ
        match &t.first {
            FirstLayer::Projected(xw) => {
                let (dxw, dmean) = aggregate_backward(xw, &csr, &t.attention[0].mean, &dy);
                self.inputs.features.accumulate_block_grad(&dxw, self.store.grad_mut(ids.out_w), 0);
                dmeans[0] = dmean;
            }
            FirstLayer::Dense { pre, post } => {
                let dw_out = dy.t_matmul(post)?;
                self.store.accumulate(ids.out_w, &dw_out);
                let mut dg1 = dy.matmul(self.store.value(ids.out_w))?;
                for (d, &p) in dg1.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                    *d *= relu_grad(p);
                }
                let mut dmean = vec![0.0; csr.idx.len()];
                for u in 0..csr.node_count() {
                    for e in csr.range(u) {
                        dmean[e] = self.inputs.features.dot_row(csr.idx[e], dg1.row(u));
                    }
                }
                dmeans[0] = dmean;
            }
        }

        for (k, dmean) in dmeans.iter().enumerate() {
            let heads = ids.w[k].len();
            let mut dw: Vec<Tensor2> = ids.w[k]
                .iter()
                .map(|&w| {
                    let v = self.store.value(w);
                    Tensor2::zeros(v.rows(), v.cols())
                })
                .collect();
            let mut da: Vec<Vec<f64>> = ids.a[k].iter().map(|&a| vec![0.0; self.store.value(a).len()]).collect();
            {
                let hp: Vec<HeadParams<'_>> = ids.w[k]
                    .iter()
                    .zip(&ids.a[k])
                    .map(|(&w, &a)| HeadParams { w: self.store.value(w), a: self.store.value(a).as_slice() })
                    .collect();
                attend_backward(&self.inputs.z, &csr, &hp, &t.attention[k], dmean, &mut dw, &mut da);
            }
            for h in 0..heads {
                self.store.accumulate(ids.w[k][h], &dw[h]);
                add_row(self.store.grad_mut(ids.a[k][h]), &da[h]);
            }
        }
        Ok(())
    }
}

/// Backward of `out = aggregate(prev, csr, weights)`: returns `∂L/∂prev` and
/// `∂L/∂weight` per entry.
fn aggregate_backward(prev: &Tensor2, csr: &Csr, weights: &[f64], dout: &Tensor2) -> (Tensor2, Vec<f64>) {
    let mut dprev = Tensor2::zeros(prev.rows(), prev.cols());
    let mut dw = vec![0.0; csr.idx.len()];
    for u in 0..csr.node_count() {
        let du = dout.row(u);
        for e in csr.range(u) {
            let v = csr.idx[e];
            dw[e] = crate::numerics::dot(du, prev.row(v));
            crate::numerics::axpy(weights[e], du, dprev.row_mut(v));
        }
    }
    (dprev, dw)
}

fn add_row(t: &mut Tensor2, v: &[f64]) {
    for (a, b) in t.as_mut_slice().iter_mut().zip(v) {
        *a += b;
    }
}

impl Classifier for LnlModel {
    fn store(&self) -> &ParameterStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    fn logits(&self) -> Result<Tensor2> {
        Ok(self.forward()?.class_logits)
    }

    fn accumulate_loss_grad(
        &mut self,
        nodes: &[usize],
        labels: &[Option<usize>],
        dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        let cache = self.forward_cached(Some((dropout, rng)))?;
        let (loss, dlogits) = train::cross_entropy(&cache.logits, nodes, labels)?;
        self.backward(cache, &dlogits)?;
        Ok(loss)
    }
}
