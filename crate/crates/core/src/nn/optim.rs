use super::graph::Tensor;
use super::params::{ParamId, ParamStore};

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Option<Tensor>>,
    v: Vec<Option<Tensor>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from `(parameter, gradient)` pairs.
    pub fn update(&mut self, store: &mut ParamStore, grads: &[(ParamId, Tensor)]) {
        self.step += 1;
        if self.m.len() < store.len() {
            self.m.resize(store.len(), None);
            self.v.resize(store.len(), None);
        }
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.learning_rate);
        for (id, grad) in grads {
            let i = id.index();
            let m = self.m[i].get_or_insert_with(|| Tensor::zeros(grad.raw_dim()));
            let v = self.v[i].get_or_insert_with(|| Tensor::zeros(grad.raw_dim()));
            let p = store.value_mut(*id);
            ndarray::Zip::from(p)
                .and(m)
                .and(v)
                .and(grad)
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
    }
}

/// Multiplies the learning rate by `factor` once the monitored loss has not
/// improved for `patience` consecutive epochs.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    pub patience: usize,
    pub factor: f64,
    best: f64,
    bad: usize,
}

impl PlateauScheduler {
    pub fn new(patience: usize, factor: f64) -> Self {
        Self {
            patience,
            factor,
            best: f64::INFINITY,
            bad: 0,
        }
    }

    /// Records an epoch loss and returns the (possibly reduced) rate.
    pub fn observe(&mut self, loss: f64, learning_rate: f64) -> f64 {
        if loss < self.best {
            self.best = loss;
            self.bad = 0;
            return learning_rate;
        }
        self.bad += 1;
        if self.bad >= self.patience {
            self.bad = 0;
            learning_rate * self.factor
        } else {
            learning_rate
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimises_quadratic() {
        let mut store = ParamStore::new();
        let id = store.add_const("x", &[2], 3.0);
        let mut opt = Adam::new(0.1);
        for _ in 0..500 {
            let g = store.value(id).mapv(|x| 2.0 * (x - 1.0));
            opt.update(&mut store, &[(id, g)]);
        }
        assert!(store.value(id).iter().all(|x| (x - 1.0).abs() < 1e-3));
    }

    #[test]
    fn first_adam_step_has_learning_rate_size() {
        let mut store = ParamStore::new();
        let id = store.add_const("x", &[1], 0.0);
        let mut opt = Adam::new(1e-3);
        opt.update(&mut store, &[(id, Tensor::from_elem(vec![1], 5.0))]);
        assert!((store.value(id)[[0]] + 1e-3).abs() < 1e-9);
    }

    #[test]
    fn plateau_halves_after_three_flat_epochs() {
        let mut s = PlateauScheduler::new(3, 0.5);
        let mut lr = 1e-3;
        for loss in [5.0, 4.0, 4.5, 4.2, 4.1] {
            lr = s.observe(loss, lr);
        }
        assert_eq!(lr, 5e-4);
        lr = s.observe(3.0, lr);
        assert_eq!(lr, 5e-4);
    }
}
