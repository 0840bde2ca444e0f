//! Attention encoder-decoder: a stacked LSTM encoder, a stacked LSTM decoder
//! initialised from the encoder's final states, dot-product attention over
//! the top encoder layer and the output layer `softmax(W_o tanh(U_h h + W_h c))`.

use rand::Rng as _;

use crate::error::{DressError, Result};
use crate::ndgraph::{
    lstm_stack_step, softmax_trusted, Array, Dropout, Graph, LstmParams, LstmState, NodeId, ParamId, ParamStore,
};
use crate::rng::Rng;
use crate::textproc::{TokenSeq, BOS, EOS, RESERVED, UNK};

pub const INIT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seq2SeqDims {
    pub vocab: usize,
    pub hidden: usize,
    pub layers: usize,
}

impl Seq2SeqDims {
    fn check(&self) -> Result<()> {
        if self.vocab <= EOS || self.hidden == 0 || self.layers == 0 {
            return Err(DressError::Config(format!(
                "model needs vocab > {EOS}, hidden > 0 and layers > 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Where each parameter lives in the store. Graph-building methods hang
/// off the layout so training can borrow the store mutably alongside it.
#[derive(Debug, Clone, PartialEq)]
pub struct Seq2SeqLayout {
    pub dims: Seq2SeqDims,
    src_embed: ParamId,
    tgt_embed: ParamId,
    encoder: LstmParams,
    decoder: LstmParams,
    w_o: ParamId,
    u_h: ParamId,
    w_h: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seq2SeqParams {
    pub layout: Seq2SeqLayout,
    pub store: ParamStore,
}

/// Encoder output inside a graph.
#[derive(Debug, Clone)]
pub struct Encoded {
    /// Top-layer states stacked as a `|X| × d` matrix.
    pub states: NodeId,
    pub len: usize,
    pub finals: Vec<LstmState>,
}

/// Nodes produced by one decoder step.
#[derive(Debug, Clone)]
pub struct StepNodes {
    pub state: Vec<LstmState>,
    /// Top decoder hidden state `h_t`.
    pub hidden: NodeId,
    pub alpha: NodeId,
    pub context: NodeId,
    pub logits: NodeId,
    pub log_probs: NodeId,
}

impl Seq2SeqParams {
    /// All parameters zero.
    pub fn zeros(dims: Seq2SeqDims) -> Result<Self> {
        dims.check()?;
        let Seq2SeqDims {
            vocab,
            hidden: d,
            layers,
        } = dims;
        let mut store = ParamStore::new();
        let src_embed = store.add("src_embed", Array::zeros(&[vocab, d]));
        let tgt_embed = store.add("tgt_embed", Array::zeros(&[vocab, d]));
        let encoder = LstmParams::new(&mut store, "encoder", d, d, layers);
        let decoder = LstmParams::new(&mut store, "decoder", d, d, layers);
        let w_o = store.add("w_o", Array::zeros(&[vocab, d]));
        let u_h = store.add("u_h", Array::zeros(&[d, d]));
        let w_h = store.add("w_h", Array::zeros(&[d, d]));
        let layout = Seq2SeqLayout {
            dims,
            src_embed,
            tgt_embed,
            encoder,
            decoder,
            w_o,
            u_h,
            w_h,
        };
        Ok(Seq2SeqParams { layout, store })
    }

    /// Uniform initialisation in `[-0.1, 0.1]`.
    pub fn init(dims: Seq2SeqDims, rng: &mut Rng) -> Result<Self> {
        let mut p = Self::zeros(dims)?;
        p.store.init_uniform(INIT_SCALE, rng);
        Ok(p)
    }

    pub fn dims(&self) -> Seq2SeqDims {
        self.layout.dims
    }
}

impl Seq2SeqLayout {
    pub fn w_o(&self) -> ParamId {
        self.w_o
    }

    fn check_id(&self, id: usize) -> Result<()> {
        if id >= self.dims.vocab {
            return Err(DressError::InvalidArgument(format!(
                "token id {id} outside vocabulary of {}",
                self.dims.vocab
            )));
        }
        Ok(())
    }

    pub fn encode_in(&self, g: &mut Graph, source: &[usize], dropout: &mut Dropout) -> Result<Encoded> {
        if source.is_empty() {
            return Err(DressError::Empty("cannot encode an empty source".into()));
        }
        let mut state = self.encoder.zero_state(g);
        let mut tops = Vec::with_capacity(source.len());
        for &x in source {
            self.check_id(x)?;
            let e = g.row(self.src_embed, x)?;
            state = lstm_stack_step(g, &self.encoder, e, &state, dropout)?;
            tops.push(state.last().expect("at least one layer").h);
        }
        let states = g.stack(&tops)?;
        Ok(Encoded {
            states,
            len: source.len(),
            finals: state,
        })
    }

    /// One decoder step reading `prev`, the previously emitted token.
    pub fn step_in(
        &self,
        g: &mut Graph,
        enc: &Encoded,
        prev: usize,
        state: &[LstmState],
        dropout: &mut Dropout,
    ) -> Result<StepNodes> {
        self.check_id(prev)?;
        let e = g.row(self.tgt_embed, prev)?;
        let state = lstm_stack_step(g, &self.decoder, e, state, dropout)?;
        let hidden = state.last().expect("at least one layer").h;
        let (alpha, context) = attend_in(g, hidden, enc.states)?;
        let u = g.param(self.u_h);
        let w = g.param(self.w_h);
        let uh = g.matvec(u, hidden)?;
        let wc = g.matvec(w, context)?;
        let pre = g.add(uh, wc)?;
        let act = g.tanh(pre);
        let act = dropout.apply(g, act)?;
        let wo = g.param(self.w_o);
        let logits = g.matvec(wo, act)?;
        let log_probs = g.log_softmax(logits)?;
        Ok(StepNodes {
            state,
            hidden,
            alpha,
            context,
            logits,
            log_probs,
        })
    }

    /// Teacher-forced summed negative log-likelihood of `target`, which must
    /// end with EOS.
    pub fn nll_in(&self, g: &mut Graph, source: &[usize], target: &[usize], dropout: &mut Dropout) -> Result<NodeId> {
        check_target(target)?;
        let enc = self.encode_in(g, source, dropout)?;
        let mut state = enc.finals.clone();
        let mut prev = BOS;
        let mut picks = Vec::with_capacity(target.len());
        for &y in target {
            let step = self.step_in(g, &enc, prev, &state, dropout)?;
            self.check_id(y)?;
            picks.push(g.pick(step.log_probs, y)?);
            state = step.state;
            prev = y;
        }
        let total = g.add_n(&picks)?;
        Ok(g.scale(total, -1.0))
    }
}

fn check_target(target: &[usize]) -> Result<()> {
    match target.last() {
        None => Err(DressError::Empty("empty target".into())),
        Some(&EOS) => Ok(()),
        Some(_) => Err(DressError::InvalidArgument("target must end with EOS".into())),
    }
}

/// Dot-product attention of `h` over the rows of `states`.
pub fn attend_in(g: &mut Graph, h: NodeId, states: NodeId) -> Result<(NodeId, NodeId)> {
    let scores = g.matvec(states, h)?;
    let alpha = g.softmax(scores)?;
    let context = g.mattvec(states, alpha)?;
    Ok((alpha, context))
}

/// Encoder states as plain arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderStates {
    pub states: Vec<Vec<f64>>,
    /// Final `(h, c)` of every layer.
    pub finals: Vec<(Vec<f64>, Vec<f64>)>,
}

impl EncoderStates {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    fn matrix(&self) -> Result<Array> {
        let d = self.states.first().map_or(0, Vec::len);
        Array::matrix(self.states.len(), d, self.states.concat())
    }
}

/// Decoder `(h, c)` per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl DecoderState {
    pub fn from_encoder(enc: &EncoderStates) -> Self {
        DecoderState {
            layers: enc.finals.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeStep {
    pub probs: Vec<f64>,
    pub alpha: Vec<f64>,
    pub context: Vec<f64>,
    pub hidden: Vec<f64>,
}

fn read_state(g: &Graph, state: &[LstmState]) -> DecoderState {
    DecoderState {
        layers: state
            .iter()
            .map(|s| (g.value(s.h).data().to_vec(), g.value(s.c).data().to_vec()))
            .collect(),
    }
}

fn read_step(g: &Graph, step: &StepNodes) -> DecodeStep {
    DecodeStep {
        probs: softmax_trusted(g.value(step.logits).data()),
        alpha: g.value(step.alpha).data().to_vec(),
        context: g.value(step.context).data().to_vec(),
        hidden: g.value(step.hidden).data().to_vec(),
    }
}

/// Encode in eval mode.
pub fn encode(params: &Seq2SeqParams, source: &[usize]) -> Result<EncoderStates> {
    let mut g = Graph::new(&params.store);
    let enc = params.layout.encode_in(&mut g, source, &mut Dropout::eval())?;
    let states = (0..enc.len).map(|i| g.value(enc.states).row(i).to_vec()).collect();
    Ok(EncoderStates {
        states,
        finals: read_state(&g, &enc.finals).layers,
    })
}

/// Attention weights and context vector for decoder state `h`.
pub fn attend(h: &[f64], enc: &EncoderStates) -> Result<(Vec<f64>, Vec<f64>)> {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let hn = g.input(Array::vector(h.to_vec()));
    let m = g.input(enc.matrix()?);
    let (a, c) = attend_in(&mut g, hn, m)?;
    Ok((g.value(a).data().to_vec(), g.value(c).data().to_vec()))
}

/// One eval-mode decoder step from explicit state arrays.
pub fn decode_step(
    params: &Seq2SeqParams,
    prev: usize,
    state: &DecoderState,
    enc: &EncoderStates,
) -> Result<(DecodeStep, DecoderState)> {
    if state.layers.len() != params.layout.dims.layers {
        return Err(DressError::Shape(format!(
            "{} decoder layers, model has {}",
            state.layers.len(),
            params.layout.dims.layers
        )));
    }
    let mut g = Graph::new(&params.store);
    let states = g.input(enc.matrix()?);
    let lstm: Vec<LstmState> = state
        .layers
        .iter()
        .map(|(h, c)| LstmState {
            h: g.input(Array::vector(h.clone())),
            c: g.input(Array::vector(c.clone())),
        })
        .collect();
    let enc_nodes = Encoded {
        states,
        len: enc.len(),
        finals: lstm.clone(),
    };
    let step = params
        .layout
        .step_in(&mut g, &enc_nodes, prev, &lstm, &mut Dropout::eval())?;
    Ok((read_step(&g, &step), read_state(&g, &step.state)))
}

/// Teacher-forced summed negative log-likelihood, eval mode.
pub fn nll_loss(params: &Seq2SeqParams, source: &[usize], target: &[usize]) -> Result<f64> {
    let mut g = Graph::new(&params.store);
    let loss = params.layout.nll_in(&mut g, source, target, &mut Dropout::eval())?;
    Ok(g.scalar(loss))
}

pub const DEFAULT_MAX_LEN_FACTOR: f64 = 1.5;

/// Output length cap `⌊factor · |X|⌋ + 5`.
pub fn max_len_for(source_len: usize, factor: f64) -> usize {
    (factor * source_len as f64).floor() as usize + 5
}

/// The default output length cap, `1.5 |X| + 5`.
pub fn default_max_len(source_len: usize) -> usize {
    max_len_for(source_len, DEFAULT_MAX_LEN_FACTOR)
}

pub enum DecodeMode<'r> {
    Greedy,
    Sample(&'r mut Rng),
}

/// Index of the largest probability; ties go to the lowest index.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Inverse-CDF draw from a normalized distribution.
pub fn sample_index(p: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &v) in p.iter().enumerate() {
        acc += v;
        if u < acc {
            return i;
        }
    }
    // Rounding left `acc` just short of 1: fall back to the last
    // token with nonzero mass.
    p.iter().rposition(|&v| v > 0.0).unwrap_or(p.len() - 1)
}

impl DecodeMode<'_> {
    pub fn choose(&mut self, p: &[f64]) -> usize {
        match self {
            DecodeMode::Greedy => argmax(p),
            DecodeMode::Sample(rng) => sample_index(p, rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    /// Emitted ids, EOS excluded.
    pub ids: Vec<usize>,
    /// One entry per decoder step, including the one that emitted EOS.
    pub steps: Vec<DecodeStep>,
    pub finished: bool,
}

pub fn decode(params: &Seq2SeqParams, source: &[usize], max_len: usize, mode: DecodeMode) -> Result<Decoded> {
    decode_with(params, source, max_len, mode, |s| Ok(s.probs.clone()))
}

/// Decode, letting `mix` turn each step into the distribution that is
/// actually chosen from (lexical interpolation hooks in here).
pub fn decode_with(
    params: &Seq2SeqParams,
    source: &[usize],
    max_len: usize,
    mut mode: DecodeMode,
    mut mix: impl FnMut(&DecodeStep) -> Result<Vec<f64>>,
) -> Result<Decoded> {
    if max_len == 0 {
        return Err(DressError::InvalidArgument("max_len must be at least 1".into()));
    }
    let mut g = Graph::new(&params.store);
    let mut dropout = Dropout::eval();
    let enc = params.layout.encode_in(&mut g, source, &mut dropout)?;
    let mut state = enc.finals.clone();
    let mut prev = BOS;
    let mut out = Decoded {
        ids: Vec::new(),
        steps: Vec::new(),
        finished: false,
    };
    while out.steps.len() < max_len {
        let step = params.layout.step_in(&mut g, &enc, prev, &state, &mut dropout)?;
        let info = read_step(&g, &step);
        let dist = mix(&info)?;
        let y = mode.choose(&dist);
        out.steps.push(info);
        if y == EOS {
            out.finished = true;
            break;
        }
        out.ids.push(y);
        state = step.state;
        prev = y;
    }
    Ok(out)
}

/// Replace every UNK in `output` by the source token its step attended to
/// most (leftmost on ties).
pub fn unk_replace(output: &TokenSeq, alphas: &[Vec<f64>], source: &TokenSeq) -> Result<TokenSeq> {
    let unk = RESERVED[UNK];
    let mut tokens = Vec::with_capacity(output.len());
    for (t, tok) in output.iter().enumerate() {
        if tok != unk {
            tokens.push(tok.to_owned());
            continue;
        }
        let alpha = alphas
            .get(t)
            .ok_or_else(|| DressError::Alignment(format!("no attention weights for UNK at step {t}")))?;
        if alpha.len() != source.len() {
            return Err(DressError::Alignment(format!(
                "attention over {} positions for a source of {}",
                alpha.len(),
                source.len()
            )));
        }
        tokens.push(source.tokens()[argmax(alpha)].clone());
    }
    TokenSeq::new(tokens)
}
