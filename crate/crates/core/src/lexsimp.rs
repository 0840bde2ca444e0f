//! Lexical simplification model: a single-layer LSTM reads the source into
//! context vectors `v_i`, the decoder's attention weights pool them into
//! `s_t = Σ α_ti v_i`, and `softmax(W_l s_t)` proposes a substitute. At
//! decode time its distribution is interpolated with the policy's.

use crate::error::{DressError, Result};
use crate::ndgraph::{
    lstm_stack_step, train_epoch, Adam, Array, Dropout, Graph, LstmParams, NodeId, ParamId, ParamStore, TrainConfig,
};
use crate::rng::Rng;
use crate::seq2seq::{decode_with, DecodeMode, Decoded, Seq2SeqParams, INIT_SCALE};
use crate::textproc::{BOS, EOS};

pub const DEFAULT_ETA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LexSimpDims {
    pub vocab: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexSimpLayout {
    pub dims: LexSimpDims,
    embed: ParamId,
    lstm: LstmParams,
    w_l: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexSimpParams {
    pub layout: LexSimpLayout,
    pub store: ParamStore,
}

impl LexSimpParams {
    pub fn zeros(dims: LexSimpDims) -> Result<Self> {
        if dims.vocab <= EOS || dims.hidden == 0 {
            return Err(DressError::Config(format!("bad lexical model dimensions {dims:?}")));
        }
        let mut store = ParamStore::new();
        let embed = store.add("embed", Array::zeros(&[dims.vocab, dims.hidden]));
        let lstm = LstmParams::new(&mut store, "context", dims.hidden, dims.hidden, 1);
        let w_l = store.add("w_l", Array::zeros(&[dims.vocab, dims.hidden]));
        Ok(LexSimpParams {
            layout: LexSimpLayout { dims, embed, lstm, w_l },
            store,
        })
    }

    pub fn init(dims: LexSimpDims, rng: &mut Rng) -> Result<Self> {
        let mut p = Self::zeros(dims)?;
        p.store.init_uniform(INIT_SCALE, rng);
        Ok(p)
    }

    pub fn w_l(&self) -> ParamId {
        self.layout.w_l
    }
}

fn check_alpha(alpha: &[f64], len: usize) -> Result<()> {
    if alpha.len() != len {
        return Err(DressError::Shape(format!(
            "attention over {} positions for a source of {len}",
            alpha.len()
        )));
    }
    let s: f64 = alpha.iter().sum();
    if (s - 1.0).abs() > 1e-6 || alpha.iter().any(|a| *a < 0.0) {
        return Err(DressError::InvalidArgument(format!(
            "attention weights must form a distribution (sum {s})"
        )));
    }
    Ok(())
}

impl LexSimpLayout {
    /// Context vectors `v_i` stacked as a `|X| × d` matrix.
    pub fn context_in(&self, g: &mut Graph, source: &[usize], dropout: &mut Dropout) -> Result<NodeId> {
        if source.is_empty() {
            return Err(DressError::Empty("cannot read an empty source".into()));
        }
        let mut state = self.lstm.zero_state(g);
        let mut rows = Vec::with_capacity(source.len());
        for &x in source {
            if x >= self.dims.vocab {
                return Err(DressError::InvalidArgument(format!("token id {x} outside vocabulary")));
            }
            let e = g.row(self.embed, x)?;
            state = lstm_stack_step(g, &self.lstm, e, &state, dropout)?;
            rows.push(state[0].h);
        }
        g.stack(&rows)
    }

    /// Logits `W_l Σ α_i v_i`.
    pub fn logits_in(&self, g: &mut Graph, context: NodeId, alpha: &[f64]) -> Result<NodeId> {
        check_alpha(alpha, g.value(context).rows())?;
        let a = g.input(Array::vector(alpha.to_vec()));
        let s = g.mattvec(context, a)?;
        let w = g.param(self.w_l);
        g.matvec(w, s)
    }

    /// Summed NLL of `targets[t]` given `alphas[t]`.
    pub fn nll_in(&self, g: &mut Graph, ex: &LexExample, dropout: &mut Dropout) -> Result<NodeId> {
        let v = self.context_in(g, &ex.source, dropout)?;
        let mut picks = Vec::with_capacity(ex.targets.len());
        for (&y, alpha) in ex.targets.iter().zip(&ex.alphas) {
            let z = self.logits_in(g, v, alpha)?;
            let lp = g.log_softmax(z)?;
            picks.push(g.pick(lp, y)?);
        }
        let total = g.add_n(&picks)?;
        Ok(g.scale(total, -1.0))
    }
}

pub fn context_states(params: &LexSimpParams, source: &[usize]) -> Result<Vec<Vec<f64>>> {
    let mut g = Graph::new(&params.store);
    let v = params.layout.context_in(&mut g, source, &mut Dropout::eval())?;
    let m = g.value(v);
    Ok((0..m.rows()).map(|i| m.row(i).to_vec()).collect())
}

/// `softmax(W_l Σ α_i v_i)`.
pub fn lexsimp_distribution(params: &LexSimpParams, states: &[Vec<f64>], alpha: &[f64]) -> Result<Vec<f64>> {
    let d = params.layout.dims.hidden;
    if states.is_empty() || states.iter().any(|v| v.len() != d) {
        return Err(DressError::Shape(format!(
            "context states must be nonempty {d}-vectors"
        )));
    }
    let mut g = Graph::new(&params.store);
    let v = g.input(Array::matrix(states.len(), d, states.concat())?);
    let z = params.layout.logits_in(&mut g, v, alpha)?;
    Ok(crate::ndgraph::softmax_trusted(g.value(z).data()))
}

/// `(1 − η) p_rl + η p_ls`.
pub fn interpolated_step(p_rl: &[f64], p_ls: &[f64], eta: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(DressError::InvalidArgument(format!("eta = {eta} outside [0, 1]")));
    }
    if p_rl.len() != p_ls.len() {
        return Err(DressError::Shape(format!(
            "distributions over {} and {} outcomes",
            p_rl.len(),
            p_ls.len()
        )));
    }
    Ok(p_rl.iter().zip(p_ls).map(|(a, b)| (1.0 - eta) * a + eta * b).collect())
}

/// One training pair with the policy's attention at each target position.
#[derive(Debug, Clone, PartialEq)]
pub struct LexExample {
    pub source: Vec<usize>,
    pub targets: Vec<usize>,
    pub alphas: Vec<Vec<f64>>,
}

/// Teacher-force the frozen policy on `target` (no EOS) and keep the
/// attention weights of every step that emits a word.
pub fn harvest_alignments(policy: &Seq2SeqParams, source: &[usize], target: &[usize]) -> Result<LexExample> {
    let mut g = Graph::new(&policy.store);
    let layout = &policy.layout;
    let mut dropout = Dropout::eval();
    let enc = layout.encode_in(&mut g, source, &mut dropout)?;
    let mut state = enc.finals.clone();
    let mut prev = BOS;
    let mut alphas = Vec::with_capacity(target.len());
    for &y in target {
        let step = layout.step_in(&mut g, &enc, prev, &state, &mut dropout)?;
        alphas.push(g.value(step.alpha).data().to_vec());
        state = step.state;
        prev = y;
    }
    Ok(LexExample {
        source: source.to_vec(),
        targets: target.to_vec(),
        alphas,
    })
}

pub fn lexsimp_epoch(
    params: &mut LexSimpParams,
    adam: &mut Adam,
    examples: &[LexExample],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<f64> {
    let layout = &params.layout;
    train_epoch(&mut params.store, adam, examples, cfg, rng, |g, ex, d| {
        layout.nll_in(g, ex, d)
    })
}

/// Per-token NLL in eval mode.
pub fn lexsimp_loss(params: &LexSimpParams, examples: &[LexExample]) -> Result<f64> {
    let mut total = 0.0;
    let mut tokens = 0;
    for ex in examples.iter().filter(|e| !e.targets.is_empty()) {
        let mut g = Graph::new(&params.store);
        let l = params.layout.nll_in(&mut g, ex, &mut Dropout::eval())?;
        total += g.scalar(l);
        tokens += ex.targets.len();
    }
    if tokens == 0 {
        return Err(DressError::Empty("no target tokens to score".into()));
    }
    Ok(total / tokens as f64)
}

/// Fit a fresh lexical model on `pairs` (ids, targets without EOS) using
/// alignments from the frozen `policy`.
pub fn train_lexsimp(
    pairs: &[(Vec<usize>, Vec<usize>)],
    policy: &Seq2SeqParams,
    hidden: usize,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<LexSimpParams> {
    let examples = pairs
        .iter()
        .filter(|(_, t)| !t.is_empty())
        .map(|(s, t)| harvest_alignments(policy, s, t))
        .collect::<Result<Vec<_>>>()?;
    if examples.is_empty() {
        return Err(DressError::Empty("no training pairs for the lexical model".into()));
    }
    let dims = LexSimpDims {
        vocab: policy.dims().vocab,
        hidden,
    };
    let mut params = LexSimpParams::init(dims, rng)?;
    let mut adam = cfg.adam(&params.store);
    for _ in 0..cfg.epochs {
        lexsimp_epoch(&mut params, &mut adam, &examples, cfg, rng)?;
    }
    Ok(params)
}

/// Decode with the policy, mixing in the lexical model with weight `eta`
/// at every step. `lex = None` is plain policy decoding.
pub fn decode_interpolated(
    policy: &Seq2SeqParams,
    lex: Option<&LexSimpParams>,
    eta: f64,
    source: &[usize],
    max_len: usize,
    mode: DecodeMode,
) -> Result<Decoded> {
    match lex {
        None => decode_with(policy, source, max_len, mode, |s| Ok(s.probs.clone())),
        Some(lex) => {
            if lex.layout.dims.vocab != policy.dims().vocab {
                return Err(DressError::Shape("lexical model and policy vocabularies differ".into()));
            }
            let v = context_states(lex, source)?;
            decode_with(policy, source, max_len, mode, |s| {
                let p_ls = lexsimp_distribution(lex, &v, &s.alpha)?;
                interpolated_step(&s.probs, &p_ls, eta)
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndgraph::{finite_difference, relative_error, Gradients};
    use crate::rng;
    use crate::seq2seq::{decode, Seq2SeqDims};

    fn dims() -> LexSimpDims {
        LexSimpDims { vocab: 20, hidden: 8 }
    }

    #[test]
    fn context_and_distribution_contracts() {
        let p = LexSimpParams::init(dims(), &mut rng::stream(1, "lex")).unwrap();
        let v = context_states(&p, &[4, 5, 6, 7]).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v, context_states(&p, &[4, 5, 6, 7]).unwrap());
        assert!(context_states(&p, &[]).is_err());
        let z = LexSimpParams::zeros(dims()).unwrap();
        assert!(context_states(&z, &[4, 5]).unwrap().iter().flatten().all(|x| *x == 0.0));

        let one_hot = [0.0, 0.0, 1.0, 0.0];
        let direct = lexsimp_distribution(&p, &v[2..3], &[1.0]).unwrap();
        assert_eq!(lexsimp_distribution(&p, &v, &one_hot).unwrap(), direct);
        let mixed = lexsimp_distribution(&p, &v, &[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert!((mixed.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(lexsimp_distribution(&p, &v, &[0.5, 0.5, 0.5, 0.0]).is_err());

        let mut flat = p.clone();
        let w = flat.w_l();
        flat.store.get_mut(w).fill(0.0);
        let u = lexsimp_distribution(&flat, &v, &one_hot).unwrap();
        assert!(u.iter().all(|x| (x - 0.05).abs() < 1e-15));
    }

    #[test]
    fn permuting_positions_with_alpha_is_invariant() {
        let p = LexSimpParams::init(dims(), &mut rng::stream(2, "lex")).unwrap();
        let v = context_states(&p, &[4, 9, 13]).unwrap();
        let a = [0.2, 0.5, 0.3];
        let pv = vec![v[2].clone(), v[0].clone(), v[1].clone()];
        let pa = [0.3, 0.2, 0.5];
        let x = lexsimp_distribution(&p, &v, &a).unwrap();
        let y = lexsimp_distribution(&p, &pv, &pa).unwrap();
        assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn interpolation_examples() {
        let p_rl = [0.5, 0.3, 0.2];
        let p_ls = [0.9, 0.05, 0.05];
        assert_eq!(interpolated_step(&p_rl, &p_ls, 0.0).unwrap(), p_rl);
        assert_eq!(interpolated_step(&p_rl, &p_ls, 1.0).unwrap(), p_ls);
        let m = interpolated_step(&p_rl, &p_ls, 0.1).unwrap();
        assert!((m[0] - 0.54).abs() < 1e-12);
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(interpolated_step(&p_rl, &p_ls, 1.5).is_err());
    }

    #[test]
    fn w_l_gradient_matches_finite_differences() {
        let p = LexSimpParams::init(dims(), &mut rng::stream(3, "lex")).unwrap();
        let ex = LexExample {
            source: vec![4, 5, 6],
            targets: vec![7, 5],
            alphas: vec![vec![0.2, 0.5, 0.3], vec![0.6, 0.1, 0.3]],
        };
        let mut grads = Gradients::for_store(&p.store);
        let mut g = Graph::new(&p.store);
        let l = p.layout.nll_in(&mut g, &ex, &mut Dropout::eval()).unwrap();
        g.backward(l, &mut grads).unwrap();
        let layout = p.layout.clone();
        for id in p.store.ids() {
            let fd = finite_difference(&p.store, id, 1e-5, |s| {
                let mut g = Graph::new(s);
                let l = layout.nll_in(&mut g, &ex, &mut Dropout::eval()).unwrap();
                g.scalar(l)
            });
            for (a, n) in grads.get(id).data().iter().zip(&fd) {
                assert!(relative_error(*a, *n) < 1e-4, "{a} vs {n}");
            }
        }
    }

    #[test]
    fn training_leaves_policy_alone_and_eta_zero_is_the_policy() {
        let sdims = Seq2SeqDims {
            vocab: 20,
            hidden: 8,
            layers: 2,
        };
        let policy = Seq2SeqParams::init(sdims, &mut rng::stream(4, "policy")).unwrap();
        let frozen = policy.clone();
        let pairs = vec![(vec![4, 5, 6], vec![4, 7]), (vec![8, 9], vec![10])];
        let cfg = TrainConfig {
            epochs: 20,
            batch: 2,
            lr: 0.01,
            dropout: 0.0,
            ..TrainConfig::default()
        };
        let examples: Vec<LexExample> = pairs
            .iter()
            .map(|(s, t)| harvest_alignments(&policy, s, t).unwrap())
            .collect();
        let init = LexSimpParams::init(dims(), &mut rng::stream(5, "lex")).unwrap();
        let before = lexsimp_loss(&init, &examples).unwrap();
        let lex = train_lexsimp(&pairs, &policy, 8, &cfg, &mut rng::stream(5, "lex")).unwrap();
        assert!(lexsimp_loss(&lex, &examples).unwrap() < before);
        assert_eq!(policy, frozen);

        for (s, _) in &pairs {
            let plain = decode(&policy, s, 8, DecodeMode::Greedy).unwrap();
            let mixed = decode_interpolated(&policy, Some(&lex), 0.0, s, 8, DecodeMode::Greedy).unwrap();
            assert_eq!(plain.ids, mixed.ids);
        }
    }
}
