//! Reverse-mode automatic differentiation over dense f64 arrays, with the
//! neural building blocks the models need: LSTM cells, softmax, dropout,
//! gradient clipping and the SGD and Adam optimizers.

mod array;
mod graph;
mod lstm;
mod optim;
mod params;
pub mod serialize;

pub use array::Array;
pub(crate) use graph::softmax_trusted;
pub use graph::{softmax, Graph, NodeId};
pub use lstm::{dropout, lstm_stack_step, lstm_step, Dropout, LstmLayer, LstmParams, LstmState, Mode};
pub use optim::{batch_step, sgd_step, train_epoch, Adam, TrainConfig};
pub use params::{clip_gradients, Gradients, ParamId, ParamStore};
pub use serialize::Container;

/// Central finite differences of `loss` with respect to every entry of
/// parameter `id`. Forward-only, so it can check [`Graph::backward`].
pub fn finite_difference(
    store: &ParamStore,
    id: ParamId,
    step: f64,
    mut loss: impl FnMut(&ParamStore) -> f64,
) -> Vec<f64> {
    let mut probe = store.clone();
    let n = store.get(id).len();
    (0..n)
        .map(|k| {
            let orig = store.get(id).data()[k];
            probe.get_mut(id).data_mut()[k] = orig + step;
            let up = loss(&probe);
            probe.get_mut(id).data_mut()[k] = orig - step;
            let down = loss(&probe);
            probe.get_mut(id).data_mut()[k] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, 1e-3)`. The floor keeps near-zero gradients
/// from turning finite-difference round-off into large relative errors.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}
