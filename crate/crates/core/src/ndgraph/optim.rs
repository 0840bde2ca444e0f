use super::array::Array;
use super::graph::{Graph, NodeId};
use super::lstm::Dropout;
use super::params::{clip_gradients, Gradients, ParamStore};
use crate::error::{DressError, Result};
use crate::rng::Rng;
use rand::seq::SliceRandom;

/// Adam with bias-corrected moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Array>,
    second: Vec<Array>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64, beta1: f64, beta2: f64) -> Self {
        let zeros: Vec<Array> = store.iter().map(|(_, _, v)| Array::zeros(v.shape())).collect();
        Adam {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        check_shapes(store, grads)?;
        if self.first.len() != store.len() {
            return Err(DressError::Shape("optimizer state does not match parameters".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, id) in store.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let g = grads.get(id).data();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            let p = store.get_mut(id).data_mut();
            for k in 0..g.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let mhat = m[k] / c1;
                let vhat = v[k] / c2;
                p[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }

    /// Moments and step counter, for checkpointing.
    pub fn state(&self) -> (u64, &[Array], &[Array]) {
        (self.step, &self.first, &self.second)
    }

    pub fn restore(&mut self, step: u64, first: Vec<Array>, second: Vec<Array>) -> Result<()> {
        let same =
            |a: &[Array], b: &[Array]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.shape() == y.shape());
        if !same(&first, &self.first) || !same(&second, &self.second) {
            return Err(DressError::Checkpoint(
                "optimizer moments do not match parameters".into(),
            ));
        }
        self.step = step;
        self.first = first;
        self.second = second;
        Ok(())
    }
}

/// `param -= lr * grad` for every parameter.
pub fn sgd_step(store: &mut ParamStore, grads: &Gradients, lr: f64) -> Result<()> {
    if lr <= 0.0 {
        return Err(DressError::InvalidArgument(format!(
            "learning rate {lr} must be positive"
        )));
    }
    check_shapes(store, grads)?;
    for id in store.ids().collect::<Vec<_>>() {
        let g = grads.get(id).data().to_vec();
        super::array::axpy(store.get_mut(id).data_mut(), -lr, &g);
    }
    Ok(())
}

/// Likelihood-training hyperparameters shared by every model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub clip: f64,
    pub dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch: 32,
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            clip: 5.0,
            dropout: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self, store: &ParamStore) -> Adam {
        Adam::new(store, self.lr, self.beta1, self.beta2)
    }
}

/// One Adam update on a minibatch: per-item losses are built by `loss`,
/// their gradients averaged over the batch and clipped. Returns the summed
/// loss of the batch.
pub fn batch_step<T>(
    store: &mut ParamStore,
    adam: &mut Adam,
    batch: &[T],
    clip: f64,
    mut loss: impl FnMut(&mut Graph, &T) -> Result<NodeId>,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(DressError::Empty("empty minibatch".into()));
    }
    let mut grads = Gradients::for_store(store);
    let mut total = 0.0;
    for item in batch {
        let mut g = Graph::new(store);
        let l = loss(&mut g, item)?;
        g.backward(l, &mut grads)?;
        total += g.scalar(l);
    }
    grads.scale(1.0 / batch.len() as f64);
    clip_gradients(&mut grads, clip);
    adam.step(store, &grads)?;
    Ok(total)
}

/// One shuffled pass over `data` in minibatches with training-mode dropout.
/// Returns the summed loss over all items.
pub fn train_epoch<T>(
    store: &mut ParamStore,
    adam: &mut Adam,
    data: &[T],
    cfg: &TrainConfig,
    rng: &mut Rng,
    mut loss: impl FnMut(&mut Graph, &T, &mut Dropout) -> Result<NodeId>,
) -> Result<f64> {
    if cfg.batch == 0 {
        return Err(DressError::Config("batch size must be positive".into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    for chunk in order.chunks(cfg.batch) {
        total += batch_step(store, adam, chunk, cfg.clip, |g, &i| {
            let mut dropout = Dropout::train(cfg.dropout, rng)?;
            loss(g, &data[i], &mut dropout)
        })?;
    }
    Ok(total)
}

fn check_shapes(store: &ParamStore, grads: &Gradients) -> Result<()> {
    if store.len() != grads.len() || store.ids().any(|id| store.get(id).shape() != grads.get(id).shape()) {
        return Err(DressError::Shape("gradients do not match parameters".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndgraph::ParamId;

    fn one_param(v: f64) -> (ParamStore, ParamId, Gradients) {
        let mut store = ParamStore::new();
        let id = store.add("p", Array::scalar(v));
        let grads = Gradients::for_store(&store);
        (store, id, grads)
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let (mut store, id, grads) = one_param(0.3);
        let mut adam = Adam::new(&store, 0.001, 0.9, 0.999);
        adam.step(&mut store, &grads).unwrap();
        assert_eq!(store.get(id).data()[0], 0.3);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn adam_first_step_is_sign_times_lr() {
        let mut store = ParamStore::new();
        let id = store.add("p", Array::vector(vec![0.0, 0.0, 0.0]));
        let mut grads = Gradients::for_store(&store);
        grads.get_mut(id).data_mut().copy_from_slice(&[0.5, -2.0, 1e-3]);
        let mut adam = Adam::new(&store, 0.001, 0.9, 0.999);
        adam.step(&mut store, &grads).unwrap();
        for (p, g) in store.get(id).data().iter().zip([0.5f64, -2.0, 1e-3]) {
            assert!((p + 0.001 * g.signum()).abs() < 1e-8, "{p}");
        }
    }

    #[test]
    fn adam_two_step_hand_trace() {
        // g = 1 then 0.5, lr 0.1, betas 0.9/0.999
        let (mut store, id, mut grads) = one_param(1.0);
        let mut adam = Adam::new(&store, 0.1, 0.9, 0.999);
        grads.get_mut(id).data_mut()[0] = 1.0;
        adam.step(&mut store, &grads).unwrap();
        grads.get_mut(id).data_mut()[0] = 0.5;
        adam.step(&mut store, &grads).unwrap();
        let m1: f64 = 0.1;
        let v1: f64 = 0.001;
        let p1 = 1.0 - 0.1 * (m1 / 0.1) / ((v1 / 0.001).sqrt() + 1e-8);
        let m2 = 0.9 * m1 + 0.1 * 0.5;
        let v2 = 0.999 * v1 + 0.001 * 0.25;
        let mhat = m2 / (1.0 - 0.81);
        let vhat = v2 / (1.0 - 0.999f64.powi(2));
        let p2 = p1 - 0.1 * mhat / (vhat.sqrt() + 1e-8);
        assert!((store.get(id).data()[0] - p2).abs() < 1e-15);
    }

    #[test]
    fn sgd_examples() {
        let (mut store, id, mut grads) = one_param(1.0);
        sgd_step(&mut store, &grads, 0.01).unwrap();
        assert_eq!(store.get(id).data()[0], 1.0);
        grads.get_mut(id).data_mut()[0] = 0.5;
        sgd_step(&mut store, &grads, 0.01).unwrap();
        assert!((store.get(id).data()[0] - 0.995).abs() < 1e-15);
        for _ in 0..9 {
            sgd_step(&mut store, &grads, 0.01).unwrap();
        }
        assert!((store.get(id).data()[0] - (1.0 - 10.0 * 0.01 * 0.5)).abs() < 1e-12);
        assert!(sgd_step(&mut store, &grads, 0.0).is_err());
    }
}
