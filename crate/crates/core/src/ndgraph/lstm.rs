use super::array::Array;
use super::graph::{Graph, NodeId};
use super::params::{ParamId, ParamStore};
use crate::error::{DressError, Result};
use crate::rng::Rng;
use rand::Rng as _;

/// One LSTM layer. The four gates share a `4d × (input + d)` weight matrix,
/// stacked as input, forget, output, candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmLayer {
    pub weights: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmLayer {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize) -> Self {
        let weights = store.add(format!("{name}.w"), Array::zeros(&[4 * hidden, input + hidden]));
        let bias = store.add(format!("{name}.b"), Array::zeros(&[4 * hidden]));
        LstmLayer {
            weights,
            bias,
            input,
            hidden,
        }
    }
}

/// A stack of LSTM layers; layer 0 reads the input, layer `k` reads layer `k - 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LstmParams {
    pub layers: Vec<LstmLayer>,
}

impl LstmParams {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, layers: usize) -> Self {
        let layers = (0..layers)
            .map(|l| {
                let inp = if l == 0 { input } else { hidden };
                LstmLayer::new(store, &format!("{name}.l{l}"), inp, hidden)
            })
            .collect();
        LstmParams { layers }
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Zero `(h, c)` for every layer.
    pub fn zero_state(&self, g: &mut Graph) -> Vec<LstmState> {
        self.layers
            .iter()
            .map(|l| LstmState {
                h: g.zeros(l.hidden),
                c: g.zeros(l.hidden),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmState {
    pub h: NodeId,
    pub c: NodeId,
}

/// One LSTM step:
/// `i, f, o = σ(·)`, `ĉ = tanh(·)`, `c = f ⊙ c_prev + i ⊙ ĉ`, `h = o ⊙ tanh(c)`.
pub fn lstm_step(g: &mut Graph, layer: &LstmLayer, x: NodeId, prev: LstmState) -> Result<LstmState> {
    let d = layer.hidden;
    let (xl, hl, cl) = (g.value(x).len(), g.value(prev.h).len(), g.value(prev.c).len());
    if xl != layer.input || hl != d || cl != d {
        return Err(DressError::Shape(format!(
            "lstm step expects x[{}], h[{d}], c[{d}]; got x[{xl}], h[{hl}], c[{cl}]",
            layer.input
        )));
    }
    let w = g.param(layer.weights);
    let b = g.param(layer.bias);
    let xh = g.concat(&[x, prev.h])?;
    let z = g.matvec(w, xh)?;
    let z = g.add(z, b)?;
    let zi = g.slice(z, 0, d)?;
    let zf = g.slice(z, d, d)?;
    let zo = g.slice(z, 2 * d, d)?;
    let zc = g.slice(z, 3 * d, d)?;
    let i = g.sigmoid(zi);
    let f = g.sigmoid(zf);
    let o = g.sigmoid(zo);
    let cand = g.tanh(zc);
    let keep = g.mul(f, prev.c)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok(LstmState { h, c })
}

/// Advance every layer of a stack by one step. Dropout is applied to each
/// layer's input, never to the recurrent connections.
pub fn lstm_stack_step(
    g: &mut Graph,
    params: &LstmParams,
    x: NodeId,
    prev: &[LstmState],
    dropout: &mut Dropout,
) -> Result<Vec<LstmState>> {
    if prev.len() != params.depth() {
        return Err(DressError::Shape(format!(
            "{} states for {} layers",
            prev.len(),
            params.depth()
        )));
    }
    let mut input = x;
    let mut next = Vec::with_capacity(prev.len());
    for (layer, state) in params.layers.iter().zip(prev) {
        let xin = dropout.apply(g, input)?;
        let s = lstm_step(g, layer, xin, *state)?;
        input = s.h;
        next.push(s);
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout on plain arrays: in train mode each entry is zeroed with
/// probability `rate` and survivors are scaled by `1 / (1 - rate)`.
pub fn dropout(x: &Array, rate: f64, mode: Mode, rng: &mut Rng) -> Result<Array> {
    check_rate(rate)?;
    if mode == Mode::Eval || rate == 0.0 {
        return Ok(x.clone());
    }
    let mask = dropout_mask(x.len(), rate, rng);
    let data = x.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
    Array::new(x.shape().to_vec(), data)
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(DressError::InvalidArgument(format!(
            "dropout rate {rate} outside [0, 1)"
        )));
    }
    Ok(())
}

fn dropout_mask(len: usize, rate: f64, rng: &mut Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

/// Dropout applied while building a graph. Eval mode is the identity.
pub struct Dropout<'r> {
    rate: f64,
    rng: Option<&'r mut Rng>,
}

impl<'r> Dropout<'r> {
    pub fn eval() -> Self {
        Dropout { rate: 0.0, rng: None }
    }

    pub fn train(rate: f64, rng: &'r mut Rng) -> Result<Self> {
        check_rate(rate)?;
        Ok(Dropout { rate, rng: Some(rng) })
    }

    pub fn mode(&self) -> Mode {
        if self.rng.is_some() {
            Mode::Train
        } else {
            Mode::Eval
        }
    }

    pub fn apply(&mut self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        match self.rng.as_deref_mut() {
            Some(rng) if self.rate > 0.0 => {
                let mask = dropout_mask(g.value(x).len(), self.rate, rng);
                g.mul_const(x, mask)
            }
            _ => Ok(x),
        }
    }
}
