//! Scalar activations, the linear map, and cross-entropy, each with its
//! backward rule.

use rand::Rng;

use super::tensor::{axpy, dot, Tensor2};
use crate::error::{Error, Result};

pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_2;
pub const LEAKY_SLOPE: f64 = 0.2;

#[inline]
pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
    }
}

/// d selu / dx evaluated at the pre-activation `x`.
#[inline]
pub fn selu_grad(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp()
    }
}

/// `ln(1 + e^x)` in the overflow-free form `max(x, 0) + ln(1 + e^-|x|)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

#[inline]
pub fn relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

#[inline]
pub fn leaky_relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

#[inline]
pub fn leaky_relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// `W x + b` for a single vector.
pub fn linear(w: &Tensor2, b: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if w.cols() != x.len() || w.rows() != b.len() {
        return Err(Error::Shape(format!(
            "linear: W is {}x{}, b has {}, x has {}",
            w.rows(),
            w.cols(),
            b.len(),
            x.len()
        )));
    }
    Ok(w.rows_iter().zip(b).map(|(row, bi)| dot(row, x) + bi).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub w: Tensor2,
    pub b: Vec<f64>,
    pub x: Vec<f64>,
}

/// Backward rule of [`linear`] for an upstream gradient `dy`.
pub fn linear_backward(w: &Tensor2, x: &[f64], dy: &[f64]) -> Result<LinearGrads> {
    if w.cols() != x.len() || w.rows() != dy.len() {
        return Err(Error::Shape("linear_backward: operand shapes disagree".into()));
    }
    let mut gw = Tensor2::zeros(w.rows(), w.cols());
    let mut gx = vec![0.0; x.len()];
    for (o, &d) in dy.iter().enumerate() {
        axpy(d, x, gw.row_mut(o));
        axpy(d, w.row(o), &mut gx);
    }
    Ok(LinearGrads { w: gw, b: dy.to_vec(), x: gx })
}

/// Row-batched `X Wᵀ + b`.
pub fn linear_rows(x: &Tensor2, w: &Tensor2, b: &[f64]) -> Result<Tensor2> {
    let mut y = x.matmul_t(w)?;
    if b.len() != y.cols() {
        return Err(Error::Shape(format!("bias has {} entries, expected {}", b.len(), y.cols())));
    }
    y.add_row_vector(b);
    Ok(y)
}

/// `-ln softmax(logits)[label]` and its gradient `softmax - onehot`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if logits.is_empty() {
        return Err(Error::Empty("logits"));
    }
    if label >= logits.len() {
        return Err(Error::Shape(format!("label {label} out of range for {} logits", logits.len())));
    }
    let top = argmax(logits);
    let max = logits[top];
    // the top term is exactly 1; ln_1p keeps precision when the rest is tiny
    let rest: f64 = logits.iter().enumerate().filter(|&(i, _)| i != top).map(|(_, &l)| (l - max).exp()).sum();
    let log_z = max + rest.ln_1p();
    let loss = (max - logits[label]) + rest.ln_1p();
    let mut grad: Vec<f64> = logits.iter().map(|&l| (l - log_z).exp()).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Numerically stable softmax, in place.
pub fn softmax_inplace(v: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Argmax with ties resolved toward the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Inverted-dropout mask: each entry is `0` with probability `rate`, else
/// `1 / (1 - rate)`.
pub fn dropout_mask<R: Rng + ?Sized>(rows: usize, cols: usize, rate: f64, rng: &mut R) -> Tensor2 {
    let keep = 1.0 - rate;
    let scale = if keep > 0.0 { 1.0 / keep } else { 0.0 };
    let mut m = Tensor2::zeros(rows, cols);
    for x in m.as_mut_slice() {
        *x = if rng.random::<f64>() < rate { 0.0 } else { scale };
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn selu_values() {
        assert_eq!(selu(0.0), 0.0);
        assert!((selu(1.0) - 1.050701).abs() < 1e-6);
        // closed form of the negative saturation: -lambda * alpha
        let floor = -SELU_LAMBDA * SELU_ALPHA;
        assert!((floor - (-1.758099)).abs() < 1e-6);
        assert!((selu(-50.0) - floor).abs() < 1e-6);
    }

    #[test]
    fn softplus_values() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((softplus(3.7) - softplus(-3.7) - 3.7).abs() < 1e-12);
        assert!((softplus(50.0) - 50.0).abs() < 1e-9);
        assert!(softplus(-800.0) >= 0.0 && softplus(800.0).is_finite());
    }

    #[test]
    fn linear_examples() {
        let w = Tensor2::identity(3);
        assert_eq!(linear(&w, &[0.0; 3], &[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        let w = Tensor2::from_rows(&[vec![2.0]]).unwrap();
        assert_eq!(linear(&w, &[1.0], &[3.0]).unwrap(), vec![7.0]);
        assert!(linear(&w, &[1.0], &[3.0, 1.0]).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let (l, _) = softmax_cross_entropy(&[0.3; 4], 2).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
        let (l, _) = softmax_cross_entropy(&[10.0, -10.0], 0).unwrap();
        let want = (-20f64).exp().ln_1p();
        assert!((l - want).abs() < 1e-20 && (l - 2.06e-9).abs() < 1e-11);
        assert!(softmax_cross_entropy(&[], 0).is_err());
        assert!(softmax_cross_entropy(&[1.0], 1).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0]), 0);
    }

    #[test]
    fn dropout_rate_and_scale() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let m = dropout_mask(1000, 100, 0.25, &mut rng);
        let zeros = m.as_slice().iter().filter(|&&x| x == 0.0).count() as f64 / 1e5;
        assert!((zeros - 0.25).abs() < 0.02, "dropped fraction {zeros}");
        assert!(m.as_slice().iter().all(|&x| x == 0.0 || (x - 1.0 / 0.75).abs() < 1e-15));
    }
}
