//! Sequence auto-encoder without attention. Its final top-layer encoder
//! state is the sentence vector used for relevance.

use crate::error::{DressError, Result};
use crate::ndgraph::{
    lstm_stack_step, train_epoch, Adam, Array, Dropout, Graph, LstmParams, LstmState, NodeId, ParamId, ParamStore,
    TrainConfig,
};
use crate::rng::Rng;
use crate::seq2seq::{Seq2SeqDims, INIT_SCALE};
use crate::textproc::{BOS, EOS};

#[derive(Debug, Clone, PartialEq)]
pub struct SaeLayout {
    pub dims: Seq2SeqDims,
    embed: ParamId,
    encoder: LstmParams,
    decoder: LstmParams,
    w_out: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaeParams {
    pub layout: SaeLayout,
    pub store: ParamStore,
}

impl SaeParams {
    pub fn zeros(dims: Seq2SeqDims) -> Result<Self> {
        if dims.vocab <= EOS || dims.hidden == 0 || dims.layers == 0 {
            return Err(DressError::Config(format!("bad auto-encoder dimensions {dims:?}")));
        }
        let mut store = ParamStore::new();
        let embed = store.add("embed", Array::zeros(&[dims.vocab, dims.hidden]));
        let encoder = LstmParams::new(&mut store, "encoder", dims.hidden, dims.hidden, dims.layers);
        let decoder = LstmParams::new(&mut store, "decoder", dims.hidden, dims.hidden, dims.layers);
        let w_out = store.add("w_out", Array::zeros(&[dims.vocab, dims.hidden]));
        Ok(SaeParams {
            layout: SaeLayout {
                dims,
                embed,
                encoder,
                decoder,
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
}

impl SaeLayout {
    fn embed(&self, g: &mut Graph, id: usize) -> Result<NodeId> {
        if id >= self.dims.vocab {
            return Err(DressError::InvalidArgument(format!("token id {id} outside vocabulary")));
        }
        g.row(self.embed, id)
    }

    pub fn encode_in(&self, g: &mut Graph, ids: &[usize], dropout: &mut Dropout) -> Result<Vec<LstmState>> {
        if ids.is_empty() {
            return Err(DressError::Empty("cannot encode an empty sentence".into()));
        }
        let mut state = self.encoder.zero_state(g);
        for &x in ids {
            let e = self.embed(g, x)?;
            state = lstm_stack_step(g, &self.encoder, e, &state, dropout)?;
        }
        Ok(state)
    }

    /// Summed reconstruction NLL of `ids` followed by EOS.
    pub fn nll_in(&self, g: &mut Graph, ids: &[usize], dropout: &mut Dropout) -> Result<NodeId> {
        let mut state = self.encode_in(g, ids, dropout)?;
        let w = g.param(self.w_out);
        let mut prev = BOS;
        let mut picks = Vec::with_capacity(ids.len() + 1);
        for &y in ids.iter().chain(std::iter::once(&EOS)) {
            let e = self.embed(g, prev)?;
            state = lstm_stack_step(g, &self.decoder, e, &state, dropout)?;
            let h = state.last().expect("at least one layer").h;
            let h = dropout.apply(g, h)?;
            let logits = g.matvec(w, h)?;
            let lp = g.log_softmax(logits)?;
            picks.push(g.pick(lp, y)?);
            prev = y;
        }
        let total = g.add_n(&picks)?;
        Ok(g.scale(total, -1.0))
    }
}

/// Final top-layer encoder state.
pub fn sae_encode(sae: &SaeParams, ids: &[usize]) -> Result<Vec<f64>> {
    let mut g = Graph::new(&sae.store);
    let state = sae.layout.encode_in(&mut g, ids, &mut Dropout::eval())?;
    Ok(g.value(state.last().expect("at least one layer").h).data().to_vec())
}

/// Cosine similarity, `None` when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(dot / (na * nb).sqrt())
}

/// Cosine of two sentence vectors, clamped to `[0, 1]`; 0 for a zero vector.
pub fn relevance_from_vectors(a: &[f64], b: &[f64]) -> f64 {
    cosine(a, b).map_or(0.0, |c| c.clamp(0.0, 1.0))
}

pub fn relevance_reward(sae: &SaeParams, source: &[usize], output: &[usize]) -> Result<f64> {
    if output.is_empty() {
        return Ok(0.0);
    }
    let q_x = sae_encode(sae, source)?;
    let q_y = if output == source {
        q_x.clone()
    } else {
        sae_encode(sae, output)?
    };
    Ok(relevance_from_vectors(&q_x, &q_y))
}

/// Train an auto-encoder on `sentences` (ids, no EOS) from a fresh
/// initialisation. `rng` draws the initial weights and every epoch's
/// shuffle and dropout masks.
pub fn train_sae(sentences: &[Vec<usize>], dims: Seq2SeqDims, cfg: &TrainConfig, rng: &mut Rng) -> Result<SaeParams> {
    if sentences.is_empty() {
        return Err(DressError::Empty("auto-encoder corpus is empty".into()));
    }
    let mut sae = SaeParams::init(dims, rng)?;
    let mut adam = cfg.adam(&sae.store);
    for _ in 0..cfg.epochs {
        sae_epoch(&mut sae, &mut adam, sentences, cfg, rng)?;
    }
    Ok(sae)
}

/// One training epoch; returns the summed loss.
pub fn sae_epoch(
    sae: &mut SaeParams,
    adam: &mut Adam,
    sentences: &[Vec<usize>],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<f64> {
    let layout = &sae.layout;
    train_epoch(&mut sae.store, adam, sentences, cfg, rng, |g, s, d| {
        layout.nll_in(g, s, d)
    })
}

/// Per-token reconstruction NLL in eval mode.
pub fn sae_loss(sae: &SaeParams, sentences: &[Vec<usize>]) -> Result<f64> {
    let mut total = 0.0;
    let mut tokens = 0;
    for s in sentences {
        let mut g = Graph::new(&sae.store);
        let l = sae.layout.nll_in(&mut g, s, &mut Dropout::eval())?;
        total += g.scalar(l);
        tokens += s.len() + 1;
    }
    if tokens == 0 {
        return Err(DressError::Empty("no sentences to score".into()));
    }
    Ok(total / tokens as f64)
}

/// Greedy reconstruction, for inspection.
pub fn sae_reconstruct(sae: &SaeParams, ids: &[usize], max_len: usize) -> Result<Vec<usize>> {
    let mut g = Graph::new(&sae.store);
    let layout = &sae.layout;
    let mut dropout = Dropout::eval();
    let mut state = layout.encode_in(&mut g, ids, &mut dropout)?;
    let w = g.param(layout.w_out);
    let mut prev = BOS;
    let mut out = Vec::new();
    while out.len() < max_len {
        let e = layout.embed(&mut g, prev)?;
        state = lstm_stack_step(&mut g, &layout.decoder, e, &state, &mut dropout)?;
        let logits = g.matvec(w, state.last().expect("at least one layer").h)?;
        let y = crate::seq2seq::argmax(g.value(logits).data());
        if y == EOS {
            break;
        }
        out.push(y);
        prev = y;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn dims(vocab: usize) -> Seq2SeqDims {
        Seq2SeqDims {
            vocab,
            hidden: 8,
            layers: 2,
        }
    }

    #[test]
    fn encoding_contracts() {
        let sae = SaeParams::init(dims(12), &mut rng::stream(1, "t")).unwrap();
        let a = sae_encode(&sae, &[4, 5, 6]).unwrap();
        assert_eq!(a.len(), 8);
        assert_eq!(a, sae_encode(&sae, &[4, 5, 6]).unwrap());
        assert!(sae_encode(&sae, &[]).is_err());
        let z = SaeParams::zeros(dims(12)).unwrap();
        assert!(sae_encode(&z, &[4, 5]).unwrap().iter().all(|v| *v == 0.0));
        assert_eq!(relevance_reward(&z, &[4, 5], &[6]).unwrap(), 0.0);
        assert_eq!(relevance_reward(&sae, &[4, 5, 7, 9], &[4, 5, 7, 9]).unwrap(), 1.0);
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(relevance_from_vectors(&[1.0, 0.0], &[0.0, 2.0]), 0.0);
        assert_eq!(relevance_from_vectors(&[1.0, 0.0], &[-1.0, 0.0]), 0.0);
        assert_eq!(relevance_from_vectors(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
        let v = [0.3, -0.7, 0.11];
        assert_eq!(relevance_from_vectors(&v, &v), 1.0);
    }

    #[test]
    fn training_lowers_held_out_loss_and_memorizes() {
        let mut r = rng::stream(3, "data");
        use rand::Rng as _;
        let sentences: Vec<Vec<usize>> = (0..50)
            .map(|_| (0..r.gen_range(2..5)).map(|_| r.gen_range(4..10)).collect())
            .collect();
        let (train, held) = sentences.split_at(40);
        let cfg = TrainConfig {
            epochs: 0,
            batch: 4,
            lr: 0.01,
            dropout: 0.0,
            ..TrainConfig::default()
        };
        let mut init_rng = rng::stream(4, "sae");
        let untouched = train_sae(train, dims(10), &cfg, &mut init_rng).unwrap();
        assert_eq!(
            untouched,
            SaeParams::init(dims(10), &mut rng::stream(4, "sae")).unwrap()
        );

        let before = sae_loss(&untouched, held).unwrap();
        let cfg = TrainConfig { epochs: 30, ..cfg };
        let sae = train_sae(train, dims(10), &cfg, &mut rng::stream(4, "sae")).unwrap();
        assert!(sae_loss(&sae, held).unwrap() < before);

        let one = vec![vec![5, 7, 4]];
        let cfg = TrainConfig {
            epochs: 150,
            batch: 1,
            lr: 0.03,
            ..cfg
        };
        let sae = train_sae(&one, dims(10), &cfg, &mut rng::stream(5, "sae")).unwrap();
        assert_eq!(sae_reconstruct(&sae, &one[0], 10).unwrap(), one[0]);
    }
}
