//! LSTM language model used for fluency.

use crate::error::{DressError, Result};
use crate::ndgraph::{
    lstm_stack_step, train_epoch, Adam, Array, Dropout, Graph, LstmParams, NodeId, ParamId, ParamStore, TrainConfig,
};
use crate::rng::Rng;
use crate::seq2seq::{Seq2SeqDims, INIT_SCALE};
use crate::textproc::{BOS, EOS};

#[derive(Debug, Clone, PartialEq)]
pub struct LmLayout {
    pub dims: Seq2SeqDims,
    embed: ParamId,
    lstm: LstmParams,
    w_out: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmParams {
    pub layout: LmLayout,
    pub store: ParamStore,
}

impl LmParams {
    pub fn zeros(dims: Seq2SeqDims) -> Result<Self> {
        if dims.vocab <= EOS || dims.hidden == 0 || dims.layers == 0 {
            return Err(DressError::Config(format!("bad language model dimensions {dims:?}")));
        }
        let mut store = ParamStore::new();
        let embed = store.add("embed", Array::zeros(&[dims.vocab, dims.hidden]));
        let lstm = LstmParams::new(&mut store, "lstm", dims.hidden, dims.hidden, dims.layers);
        let w_out = store.add("w_out", Array::zeros(&[dims.vocab, dims.hidden]));
        Ok(LmParams {
            layout: LmLayout {
                dims,
                embed,
                lstm,
                w_out,
            },
            store,
        })
    }

    pub fn init(dims: Seq2SeqDims, rng: &mut Rng) -> Result<Self> {
        let mut p = Self::zeros(dims)?;
        p.store.init_uniform(INIT_SCALE, rng);
        Ok(p)
    }

    pub fn w_out(&self) -> ParamId {
        self.layout.w_out
    }
}

impl LmLayout {
    /// Log-probability nodes of each token of `ids` and then EOS, starting
    /// from BOS.
    pub fn log_prob_nodes(&self, g: &mut Graph, ids: &[usize], dropout: &mut Dropout) -> Result<Vec<NodeId>> {
        let mut state = self.lstm.zero_state(g);
        let w = g.param(self.w_out);
        let mut prev = BOS;
        let mut picks = Vec::with_capacity(ids.len() + 1);
        for &y in ids.iter().chain(std::iter::once(&EOS)) {
            if y >= self.dims.vocab || prev >= self.dims.vocab {
                return Err(DressError::InvalidArgument(format!("token id {y} outside vocabulary")));
            }
            let e = g.row(self.embed, prev)?;
            state = lstm_stack_step(g, &self.lstm, e, &state, dropout)?;
            let h = state.last().expect("at least one layer").h;
            let h = dropout.apply(g, h)?;
            let logits = g.matvec(w, h)?;
            let lp = g.log_softmax(logits)?;
            picks.push(g.pick(lp, y)?);
            prev = y;
        }
        Ok(picks)
    }

    pub fn nll_in(&self, g: &mut Graph, ids: &[usize], dropout: &mut Dropout) -> Result<NodeId> {
        let picks = self.log_prob_nodes(g, ids, dropout)?;
        let total = g.add_n(&picks)?;
        Ok(g.scale(total, -1.0))
    }
}

/// `log P(y_i | y_<i)` for every token and the closing EOS.
pub fn step_log_probs(lm: &LmParams, ids: &[usize]) -> Result<Vec<f64>> {
    let mut g = Graph::new(&lm.store);
    let picks = lm.layout.log_prob_nodes(&mut g, ids, &mut Dropout::eval())?;
    Ok(picks.iter().map(|&p| g.scalar(p)).collect())
}

/// `exp` of the mean log-probability over the tokens and EOS; 0 for an
/// empty output.
pub fn fluency_reward(lm: &LmParams, ids: &[usize]) -> Result<f64> {
    if ids.is_empty() {
        return Ok(0.0);
    }
    let lp = step_log_probs(lm, ids)?;
    let mean = lp.iter().sum::<f64>() / lp.len() as f64;
    Ok(mean.exp().clamp(0.0, 1.0))
}

/// Per-token perplexity, EOS included.
pub fn perplexity(lm: &LmParams, sentences: &[Vec<usize>]) -> Result<f64> {
    let mut total = 0.0;
    let mut tokens = 0;
    for s in sentences {
        let lp = step_log_probs(lm, s)?;
        tokens += lp.len();
        total -= lp.iter().sum::<f64>();
    }
    if tokens == 0 {
        return Err(DressError::Empty("no sentences to score".into()));
    }
    Ok((total / tokens as f64).exp())
}

pub fn train_lm(sentences: &[Vec<usize>], dims: Seq2SeqDims, cfg: &TrainConfig, rng: &mut Rng) -> Result<LmParams> {
    if sentences.is_empty() {
        return Err(DressError::Empty("language model corpus is empty".into()));
    }
    let mut lm = LmParams::init(dims, rng)?;
    let mut adam = cfg.adam(&lm.store);
    for _ in 0..cfg.epochs {
        lm_epoch(&mut lm, &mut adam, sentences, cfg, rng)?;
    }
    Ok(lm)
}

pub fn lm_epoch(
    lm: &mut LmParams,
    adam: &mut Adam,
    sentences: &[Vec<usize>],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<f64> {
    let layout = &lm.layout;
    train_epoch(&mut lm.store, adam, sentences, cfg, rng, |g, s, d| {
        layout.nll_in(g, s, d)
    })
}
