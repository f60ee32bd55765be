use std::collections::HashMap;

use super::tensor::Tensor2;
use crate::error::{Error, Result};

/// Handle into a [`ParameterStore`]. Cheap to copy, valid only for the store
/// (or a clone of the store) that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor2,
    pub grad: Tensor2,
    pub momentum: Tensor2,
}

/// Named parameters with paired gradient and momentum buffers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterStore {
    params: Vec<Param>,
    by_name: HashMap<String, usize>,
}

/// SGD with classical momentum and L2 weight decay folded into the gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sgd {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor2) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        let (r, c) = value.shape();
        let id = self.params.len();
        self.by_name.insert(name.clone(), id);
        self.params.push(Param { name, value, grad: Tensor2::zeros(r, c), momentum: Tensor2::zeros(r, c) });
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor2 {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor2 {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor2 {
        &self.params[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor2 {
        &mut self.params[id.0].grad
    }

    /// Adds `g` into the gradient buffer of `id`.
    pub fn accumulate(&mut self, id: ParamId, g: &Tensor2) {
        self.params[id.0].grad.add_assign(g);
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// One optimiser step over every parameter, then clears the gradients:
    /// `m <- mu*m + (g + wd*p)`, `p <- p - lr*m`.
    pub fn sgd_momentum_step(&mut self, opt: &Sgd) {
        for p in &mut self.params {
            let value = p.value.as_mut_slice();
            let grad = p.grad.as_mut_slice();
            let mom = p.momentum.as_mut_slice();
            for ((v, g), m) in value.iter_mut().zip(grad.iter_mut()).zip(mom.iter_mut()) {
                *m = opt.momentum * *m + (*g + opt.weight_decay * *v);
                *v -= opt.learning_rate * *m;
                *g = 0.0;
            }
        }
    }

    /// Copies parameter values (not optimiser state) from `other`.
    pub fn copy_values_from(&mut self, other: &ParameterStore) {
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            debug_assert_eq!(a.name, b.name);
            a.value = b.value.clone();
        }
    }
}
