//! Multi-head attention over fixed neighborhood lists.
//!
//! Head `h` scores `v ∈ N(u)` with `e = LeakyReLU(ãᵀ [W z_u ‖ W z_v])`,
//! normalizes with a softmax over `N(u)`, and the heads are averaged into one
//! weight per `(u, v)` entry. Attention reads the self-embeddings `Z` only.

use crate::error::{Error, Result};
use crate::graph::NeighborhoodMap;
use crate::numerics::{dot, leaky_relu, leaky_relu_grad, relu, RowSource, Tensor2};

/// Neighborhood lists in compressed row form.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Csr {
    pub offsets: Vec<usize>,
    pub idx: Vec<usize>,
}

impl Csr {
    pub fn from_map(nm: &NeighborhoodMap) -> Result<Self> {
        let mut offsets = Vec::with_capacity(nm.node_count() + 1);
        let mut idx = Vec::with_capacity(nm.total_entries());
        offsets.push(0);
        for u in 0..nm.node_count() {
            if nm.get(u).is_empty() {
                return Err(Error::Empty("neighborhood list"));
            }
            idx.extend_from_slice(nm.get(u));
            offsets.push(idx.len());
        }
        Ok(Self { offsets, idx })
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn range(&self, u: usize) -> std::ops::Range<usize> {
        self.offsets[u]..self.offsets[u + 1]
    }
}

/// Projection `W` (`hidden × se_dim`) and attention vector `ã` (`2·hidden`)
/// of one head.
#[derive(Debug, Clone, Copy)]
pub struct HeadParams<'a> {
    pub w: &'a Tensor2,
    pub a: &'a [f64],
}

impl HeadParams<'_> {
    /// `Wᵀ ã₁` and `Wᵀ ã₂`: the head's logit is `z_u·p + z_v·q`.
    fn reduced(&self) -> (Vec<f64>, Vec<f64>) {
        let hidden = self.w.rows();
        let mut p = vec![0.0; self.w.cols()];
        let mut q = vec![0.0; self.w.cols()];
        for i in 0..hidden {
            crate::numerics::axpy(self.a[i], self.w.row(i), &mut p);
            crate::numerics::axpy(self.a[hidden + i], self.w.row(i), &mut q);
        }
        (p, q)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct HeadCache {
    /// per-entry pre-activation `s_u + t_v`
    pre: Vec<f64>,
    /// per-entry softmax weight
    weight: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct Attention {
    /// head-averaged weight per entry
    pub mean: Vec<f64>,
    heads: Vec<HeadCache>,
}

pub(crate) fn attend(z: &Tensor2, csr: &Csr, heads: &[HeadParams<'_>]) -> Attention {
    let entries = csr.idx.len();
    let mut mean = vec![0.0; entries];
    let inv = 1.0 / heads.len() as f64;
    let mut caches = Vec::with_capacity(heads.len());
    for head in heads {
        let (p, q) = head.reduced();
        let s: Vec<f64> = z.rows_iter().map(|r| dot(r, &p)).collect();
        let t: Vec<f64> = z.rows_iter().map(|r| dot(r, &q)).collect();
        let mut pre = vec![0.0; entries];
        let mut weight = vec![0.0; entries];
        for (u, &su) in s.iter().enumerate() {
            let range = csr.range(u);
            let mut max = f64::NEG_INFINITY;
            for k in range.clone() {
                pre[k] = su + t[csr.idx[k]];
                weight[k] = leaky_relu(pre[k]);
                max = max.max(weight[k]);
            }
            let mut sum = 0.0;
            for k in range.clone() {
                weight[k] = (weight[k] - max).exp();
                sum += weight[k];
            }
            for k in range {
                weight[k] /= sum;
                mean[k] += inv * weight[k];
            }
        }
        caches.push(HeadCache { pre, weight });
    }
    Attention { mean, heads: caches }
}

/// Accumulates head gradients given `∂L/∂(mean weight)` per entry. Gradients
/// are added into `dw[h]` and `da[h]`.
pub(crate) fn attend_backward(
    z: &Tensor2,
    csr: &Csr,
    heads: &[HeadParams<'_>],
    att: &Attention,
    dmean: &[f64],
    dw: &mut [Tensor2],
    da: &mut [Vec<f64>],
) {
    let n = csr.node_count();
    let inv = 1.0 / heads.len() as f64;
    for (h, (head, cache)) in heads.iter().zip(&att.heads).enumerate() {
        let mut ds = vec![0.0; n];
        let mut dt = vec![0.0; n];
        for (u, dsu) in ds.iter_mut().enumerate() {
            let range = csr.range(u);
            let avg: f64 = range.clone().map(|k| cache.weight[k] * dmean[k] * inv).sum();
            for k in range {
                let de = cache.weight[k] * (dmean[k] * inv - avg);
                let dpre = de * leaky_relu_grad(cache.pre[k]);
                *dsu += dpre;
                dt[csr.idx[k]] += dpre;
            }
        }
        // p = Wᵀ ã₁, q = Wᵀ ã₂; s = Z p, t = Z q
        let se = z.cols();
        let mut dp = vec![0.0; se];
        let mut dq = vec![0.0; se];
        for u in 0..n {
            crate::numerics::axpy(ds[u], z.row(u), &mut dp);
            crate::numerics::axpy(dt[u], z.row(u), &mut dq);
        }
        let hidden = head.w.rows();
        for i in 0..hidden {
            let (a1, a2) = (head.a[i], head.a[hidden + i]);
            let row = dw[h].row_mut(i);
            for j in 0..se {
                row[j] += a1 * dp[j] + a2 * dq[j];
            }
            da[h][i] += dot(head.w.row(i), &dp);
            da[h][hidden + i] += dot(head.w.row(i), &dq);
        }
    }
}

/// `out[u] = Σ_{v∈N(u)} w_uv f_v`
pub(crate) fn aggregate<F: RowSource + ?Sized>(f: &F, csr: &Csr, weights: &[f64]) -> Tensor2 {
    let mut out = Tensor2::zeros(csr.node_count(), f.dim());
    for u in 0..csr.node_count() {
        let o = out.row_mut(u);
        for k in csr.range(u) {
            f.axpy_row(csr.idx[k], weights[k], o);
        }
    }
    out
}

/// One attentive aggregation: `h_u = ReLU(Σ_{v∈N(u)} ā_uv F_v)` with `ā` the
/// head-averaged attention weights.
pub fn attentive_aggregate<F: RowSource + ?Sized>(
    z: &Tensor2,
    f: &F,
    nm: &NeighborhoodMap,
    heads: &[HeadParams<'_>],
) -> Result<Tensor2> {
    check_inputs(z, f.row_count(), nm, heads)?;
    let csr = Csr::from_map(nm)?;
    let att = attend(z, &csr, heads);
    let mut out = aggregate(f, &csr, &att.mean);
    out.map_inplace(relu);
    Ok(out)
}

/// Head-averaged attention weights as per-node lists aligned with `nm`.
pub fn attention_weights(z: &Tensor2, nm: &NeighborhoodMap, heads: &[HeadParams<'_>]) -> Result<Vec<Vec<f64>>> {
    check_inputs(z, z.rows(), nm, heads)?;
    let csr = Csr::from_map(nm)?;
    let att = attend(z, &csr, heads);
    Ok((0..csr.node_count()).map(|u| att.mean[csr.range(u)].to_vec()).collect())
}

pub(crate) fn check_inputs(z: &Tensor2, rows: usize, nm: &NeighborhoodMap, heads: &[HeadParams<'_>]) -> Result<()> {
    if heads.is_empty() {
        return Err(Error::Config("at least one attention head is required".into()));
    }
    if z.rows() != nm.node_count() || rows != nm.node_count() {
        return Err(Error::Shape(format!(
            "neighborhood map has {} nodes, embeddings {}, features {rows}",
            nm.node_count(),
            z.rows()
        )));
    }
    for h in heads {
        if h.w.cols() != z.cols() || h.a.len() != 2 * h.w.rows() {
            return Err(Error::Shape("attention head shapes do not match the embeddings".into()));
        }
    }
    Ok(())
}
