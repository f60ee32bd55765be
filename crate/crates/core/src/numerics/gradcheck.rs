//! Central finite-difference checks of hand-written backward rules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParameterStore};

pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Compares analytic gradients against central differences.
///
/// `f` receives a store whose gradients are already cleared; it returns the
/// scalar loss and accumulates `∂loss/∂p` into the gradient buffers. It has
/// to be deterministic (no dropout). At most `samples`
/// coordinates are checked; when the store is smaller every coordinate is.
///
/// The per-coordinate error is `|a - n| / max(1e-8, |a| + |n|)`.
pub fn grad_check<F>(store: &mut ParameterStore, mut f: F, samples: usize, seed: u64) -> GradCheckReport
where
    F: FnMut(&mut ParameterStore) -> f64,
{
    grad_check_with_step(store, &mut f, samples, seed, DEFAULT_STEP)
}

pub fn grad_check_with_step<F>(
    store: &mut ParameterStore,
    f: &mut F,
    samples: usize,
    seed: u64,
    step: f64,
) -> GradCheckReport
where
    F: FnMut(&mut ParameterStore) -> f64,
{
    store.zero_grads();
    f(store);
    let analytic: Vec<Vec<f64>> = store.iter().map(|p| p.grad.as_slice().to_vec()).collect();
    let ids: Vec<ParamId> = store.ids().collect();

    let total: usize = analytic.iter().map(Vec::len).sum();
    let coords: Vec<(usize, usize)> = if total <= samples {
        analytic.iter().enumerate().flat_map(|(p, g)| (0..g.len()).map(move |i| (p, i))).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..samples)
            .map(|_| {
                let mut k = rng.random_range(0..total);
                let mut p = 0;
                while k >= analytic[p].len() {
                    k -= analytic[p].len();
                    p += 1;
                }
                (p, k)
            })
            .collect()
    };

    let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, checked: coords.len() };
    for (p, i) in coords {
        let id = ids[p];
        let orig = store.value(id).as_slice()[i];
        store.value_mut(id).as_mut_slice()[i] = orig + step;
        store.zero_grads();
        let up = f(store);
        store.value_mut(id).as_mut_slice()[i] = orig - step;
        store.zero_grads();
        let down = f(store);
        store.value_mut(id).as_mut_slice()[i] = orig;

        let numeric = (up - down) / (2.0 * step);
        let a = analytic[p][i];
        let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        if report.worst.is_none() || err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst = Some((store.param(id).name.clone(), i));
        }
    }
    store.zero_grads();
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ops::{linear, linear_backward, softmax_cross_entropy};
    use crate::numerics::Tensor2;

    #[test]
    fn linear_plus_cross_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store = ParameterStore::new();
        let w = store.add("w", Tensor2::xavier_uniform(4, 3, &mut rng)).unwrap();
        let b = store.add("b", Tensor2::xavier_uniform(1, 4, &mut rng)).unwrap();
        let x = [0.3, -1.2, 0.8];
        let report = grad_check(
            &mut store,
            |s| {
                let y = linear(s.value(w), s.value(b).as_slice(), &x).unwrap();
                let (loss, dy) = softmax_cross_entropy(&y, 2).unwrap();
                let g = linear_backward(s.value(w), &x, &dy).unwrap();
                s.accumulate(w, &g.w);
                s.accumulate(b, &Tensor2::from_vec(1, 4, g.b).unwrap());
                loss
            },
            200,
            0,
        );
        assert_eq!(report.checked, 16);
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let mut store = ParameterStore::new();
        let w = store.add("w", Tensor2::filled(2, 2, 0.5)).unwrap();
        let report = grad_check(&mut store, |_| 3.0, 10, 0);
        assert!(store.grad(w).as_slice().iter().all(|&g| g == 0.0));
        assert_eq!(report.max_rel_error, 0.0);
    }
}
