use super::dense::Tensor;
use super::tape::Gradients;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named trainable tensors with their accumulated gradients.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.grads.push(Tensor::zeros(&value.shape));
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Adds the parameter gradients of one backward pass.
    pub fn accumulate(&mut self, grads: &Gradients) {
        for (id, g) in grads.params() {
            self.grads[id.0].add_assign(g);
        }
    }

    pub fn scale_grads(&mut self, s: f64) {
        for g in &mut self.grads {
            for v in &mut g.data {
                *v *= s;
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads.iter().flat_map(|g| &g.data).map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Rescales gradients so their global norm is at most `max_norm`;
    /// returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale_grads(max_norm / norm);
        }
        norm
    }

    /// Copies values of every same-named parameter in `other`.
    pub fn load_matching(&mut self, other: &ParamStore) -> usize {
        let mut loaded = 0;
        for (i, name) in self.names.iter().enumerate() {
            if let Some(j) = other.find(name) {
                if other.values[j.0].shape == self.values[i].shape {
                    self.values[i] = other.values[j.0].clone();
                    loaded += 1;
                }
            }
        }
        loaded
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Adam {
        let zeros = || store.values.iter().map(|t| vec![0.0; t.len()]).collect();
        Adam { config, step: 0, m: zeros(), v: zeros() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients held in `store`.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (p, (value, grad)) in store.values.iter_mut().zip(&store.grads).enumerate() {
            for (k, (w, g)) in value.data.iter_mut().zip(&grad.data).enumerate() {
                let m = &mut self.m[p][k];
                let v = &mut self.v[p][k];
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(w: f64) -> (ParamStore, ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::new(vec![1], vec![w]).unwrap());
        (store, id)
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let (mut store, id) = single(1.5);
        let mut adam = Adam::new(AdamConfig::default(), &store);
        adam.step(&mut store);
        assert_eq!(store.value(id).data, [1.5]);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient() {
        for g in [-3.0, 0.2, 40.0] {
            let (mut store, id) = single(0.0);
            store.grads[0].data[0] = g;
            let mut adam = Adam::new(AdamConfig::default(), &store);
            adam.step(&mut store);
            let moved = store.value(id).data[0];
            assert!((moved + 1e-4 * f64::signum(g)).abs() < 1e-9, "{moved}");
        }
    }

    #[test]
    fn converges_on_quadratic() {
        let (mut store, id) = single(0.0);
        let mut adam = Adam::new(AdamConfig { lr: 0.05, ..Default::default() }, &store);
        for _ in 0..2000 {
            let w = store.value(id).data[0];
            store.zero_grads();
            store.grads[0].data[0] = 2.0 * (w - 3.0);
            adam.step(&mut store);
        }
        assert!((store.value(id).data[0] - 3.0).abs() < 1e-2);
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let (mut store, _) = single(0.0);
        store.add("v", Tensor::zeros(&[2]));
        store.grads[0].data[0] = 3.0;
        store.grads[1].data = vec![4.0, 0.0];
        assert_eq!(store.clip_grad_norm(1.0), 5.0);
        assert!((store.grad_norm() - 1.0).abs() < 1e-12);
        assert_eq!(store.clip_grad_norm(2.0), store.grad_norm());
    }
}
