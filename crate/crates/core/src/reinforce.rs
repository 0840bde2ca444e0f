//! Policy-gradient training of the encoder-decoder: sampled rollouts scored
//! by the composite reward, a linear baseline on `[h_t; c_t]`, and the
//! curriculum that hands the last tokens of each target from likelihood
//! training over to REINFORCE.

use rand::seq::SliceRandom;

use crate::error::{DressError, Result};
use crate::ndgraph::{clip_gradients, sgd_step, Dropout, Gradients, Graph, LstmState, NodeId};
use crate::rewardmodels::{RewardBreakdown, RewardContext};
use crate::rng::Rng;
use crate::seq2seq::{
    decode, max_len_for, sample_index, DecodeMode, Encoded, Seq2SeqLayout, Seq2SeqParams, DEFAULT_MAX_LEN_FACTOR,
};
use crate::textproc::{BOS, EOS};

pub const CURRICULUM_START: usize = 24;
pub const CURRICULUM_STEP: usize = 3;
pub const CURRICULUM_PERIOD: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Curriculum {
    pub start: usize,
    pub step: usize,
    pub period: usize,
}

impl Default for Curriculum {
    fn default() -> Self {
        Curriculum {
            start: CURRICULUM_START,
            step: CURRICULUM_STEP,
            period: CURRICULUM_PERIOD,
        }
    }
}

impl Curriculum {
    /// Number of leading target tokens trained by likelihood in `epoch`
    /// (1-based), or `None` once the schedule has reached zero.
    pub fn prefix_len(&self, epoch: usize) -> Result<Option<usize>> {
        if epoch < 1 {
            return Err(DressError::InvalidArgument("epochs are numbered from 1".into()));
        }
        if self.step == 0 || self.period == 0 {
            return Err(DressError::Config("curriculum step and period must be positive".into()));
        }
        let drop = self.step.saturating_mul((epoch - 1) / self.period);
        Ok(self.start.checked_sub(drop).filter(|&l| l > 0))
    }

    /// Every epoch's prefix length until termination.
    pub fn schedule(&self) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        while let Some(l) = self.prefix_len(out.len() + 1)? {
            out.push(l);
        }
        Ok(out)
    }
}

/// `L(epoch)` under the default schedule.
pub fn curriculum_l(epoch: usize) -> Result<Option<usize>> {
    Curriculum::default().prefix_len(epoch)
}

/// Linear reward predictor over `[h_t; c_t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Baseline {
    pub fn zeros(dim: usize) -> Self {
        Baseline {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.weights.len() {
            return Err(DressError::Shape(format!(
                "baseline takes {} features, got {}",
                self.weights.len(),
                features.len()
            )));
        }
        Ok(self.bias + self.weights.iter().zip(features).map(|(w, f)| w * f).sum::<f64>())
    }

    /// One gradient step on `Σ_t (b_t − r)²`, the gradient clipped to
    /// norm `clip`. Features are plain numbers here, so nothing flows back
    /// into the policy.
    pub fn update(&mut self, features: &[Vec<f64>], reward: f64, lr: f64, clip: f64) -> Result<()> {
        let mut gw = vec![0.0; self.weights.len()];
        let mut gb = 0.0;
        for f in features {
            let err = 2.0 * (self.predict(f)? - reward);
            gb += err;
            gw.iter_mut().zip(f).for_each(|(g, x)| *g += err * x);
        }
        let norm = (gb * gb + gw.iter().map(|g| g * g).sum::<f64>()).sqrt();
        let k = if norm > clip { clip / norm } else { 1.0 };
        self.bias -= lr * k * gb;
        self.weights.iter_mut().zip(&gw).for_each(|(w, g)| *w -= lr * k * g);
        Ok(())
    }
}

/// The REINFORCE surrogate `−Σ_t (r − b_t) log p_t`. Its gradient is the
/// negated single-sample policy-gradient estimate, so descending it raises
/// expected reward. `None` when there are no sampled steps.
pub fn surrogate_loss(g: &mut Graph, log_probs: &[NodeId], reward: f64, baselines: &[f64]) -> Result<Option<NodeId>> {
    if log_probs.len() != baselines.len() {
        return Err(DressError::Shape(format!(
            "{} log-probabilities, {} baselines",
            log_probs.len(),
            baselines.len()
        )));
    }
    if log_probs.is_empty() {
        return Ok(None);
    }
    let terms: Vec<NodeId> = log_probs
        .iter()
        .zip(baselines)
        .map(|(&lp, b)| g.scale(lp, -(reward - b)))
        .collect();
    g.add_n(&terms).map(Some)
}

/// A sampled continuation of a (possibly empty) gold prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub prefix: Vec<usize>,
    /// Sampled ids, ending with EOS unless truncated.
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    /// `[h_t; c_t]` for each action.
    pub features: Vec<Vec<f64>>,
    pub reward: RewardBreakdown,
}

impl Rollout {
    /// Prefix and sampled ids with EOS removed.
    pub fn output(&self) -> Vec<usize> {
        self.prefix
            .iter()
            .chain(&self.actions)
            .copied()
            .filter(|&t| t != EOS)
            .collect()
    }
}

struct Segment {
    nll: Vec<NodeId>,
    log_probs: Vec<NodeId>,
    actions: Vec<usize>,
    features: Vec<Vec<f64>>,
}

enum Continue<'a> {
    Sample { steps: usize, rng: &'a mut Rng },
    Force(&'a [usize]),
}

/// Teacher-force `prefix`, then either sample up to `steps` more tokens or
/// force the given actions. Runs in eval mode.
fn run_segment(
    g: &mut Graph,
    layout: &Seq2SeqLayout,
    source: &[usize],
    prefix: &[usize],
    cont: Continue,
) -> Result<Segment> {
    let mut dropout = Dropout::eval();
    let enc: Encoded = layout.encode_in(g, source, &mut dropout)?;
    let mut state: Vec<LstmState> = enc.finals.clone();
    let mut prev = BOS;
    let mut nll = Vec::with_capacity(prefix.len());
    for &y in prefix {
        let step = layout.step_in(g, &enc, prev, &state, &mut dropout)?;
        nll.push(g.pick(step.log_probs, y)?);
        state = step.state;
        prev = y;
    }
    let mut seg = Segment {
        nll,
        log_probs: Vec::new(),
        actions: Vec::new(),
        features: Vec::new(),
    };
    let (steps, forced, mut rng) = match cont {
        Continue::Sample { steps, rng } => (steps, None, Some(rng)),
        Continue::Force(actions) => (actions.len(), Some(actions), None),
    };
    for t in 0..steps {
        let step = layout.step_in(g, &enc, prev, &state, &mut dropout)?;
        let y = match (&forced, rng.as_deref_mut()) {
            (Some(a), _) => a[t],
            (None, Some(r)) => sample_index(&crate::ndgraph::softmax_trusted(g.value(step.logits).data()), r),
            (None, None) => unreachable!("sampling needs an rng"),
        };
        seg.log_probs.push(g.pick(step.log_probs, y)?);
        let mut f = g.value(step.hidden).data().to_vec();
        f.extend_from_slice(g.value(step.context).data());
        seg.features.push(f);
        seg.actions.push(y);
        if y == EOS {
            break;
        }
        state = step.state;
        prev = y;
    }
    Ok(seg)
}

fn rl_steps(max_len: usize, prefix_len: usize) -> usize {
    max_len.saturating_sub(prefix_len).max(1)
}

/// Condition on `prefix`, sample the rest of the sequence (at most
/// `max_len` tokens in total, and at least one) and score it against
/// `reference` (ids without EOS).
pub fn rollout(
    params: &Seq2SeqParams,
    source: &[usize],
    prefix: &[usize],
    reference: &[usize],
    ctx: &RewardContext,
    max_len: usize,
    rng: &mut Rng,
) -> Result<Rollout> {
    let mut g = Graph::new(&params.store);
    let steps = rl_steps(max_len, prefix.len());
    let seg = run_segment(&mut g, &params.layout, source, prefix, Continue::Sample { steps, rng })?;
    let mut r = Rollout {
        prefix: prefix.to_vec(),
        actions: seg.actions,
        log_probs: seg.log_probs.iter().map(|&n| g.scalar(n)).collect(),
        features: seg.features,
        reward: RewardBreakdown::default(),
    };
    r.reward = ctx.score(source, &r.output(), reference)?;
    Ok(r)
}

/// Gradient of the surrogate loss for a finished rollout, with `b_t` from
/// `baseline`.
pub fn reinforce_gradients(
    params: &Seq2SeqParams,
    source: &[usize],
    rollout: &Rollout,
    baseline: &Baseline,
) -> Result<Gradients> {
    let baselines = rollout
        .features
        .iter()
        .map(|f| baseline.predict(f))
        .collect::<Result<Vec<_>>>()?;
    advantage_gradients(params, source, rollout, rollout.reward.total, &baselines)
}

/// Surrogate gradient with explicit reward and per-step baselines.
pub fn advantage_gradients(
    params: &Seq2SeqParams,
    source: &[usize],
    rollout: &Rollout,
    reward: f64,
    baselines: &[f64],
) -> Result<Gradients> {
    let mut grads = Gradients::for_store(&params.store);
    let mut g = Graph::new(&params.store);
    let seg = run_segment(
        &mut g,
        &params.layout,
        source,
        &rollout.prefix,
        Continue::Force(&rollout.actions),
    )?;
    if let Some(loss) = surrogate_loss(&mut g, &seg.log_probs, reward, baselines)? {
        g.backward(loss, &mut grads)?;
    }
    Ok(grads)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlConfig {
    pub lr: f64,
    pub clip: f64,
    pub baseline_lr: f64,
    pub max_len_factor: f64,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            lr: 0.01,
            clip: 5.0,
            baseline_lr: 0.01,
            max_len_factor: DEFAULT_MAX_LEN_FACTOR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpochStats {
    pub epoch: usize,
    pub prefix_len: usize,
    pub mean_reward: f64,
    pub mean_r_s: f64,
    pub mean_r_r: f64,
    pub mean_r_f: f64,
    /// Per-token NLL of the likelihood-trained prefixes.
    pub mean_nll: f64,
    pub rollouts: usize,
}

impl EpochStats {
    pub const CSV_HEADER: &'static str = "epoch,L,mean_reward,mean_r_s,mean_r_r,mean_r_f,mean_nll";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.epoch, self.prefix_len, self.mean_reward, self.mean_r_s, self.mean_r_r, self.mean_r_f, self.mean_nll
        )
    }
}

/// A training pair as ids; the target carries no EOS.
pub type IdPair = (Vec<usize>, Vec<usize>);

/// One mixed epoch with per-sentence SGD updates: likelihood on the first
/// `prefix_len` tokens of each target (EOS counted as a token), REINFORCE
/// on a sampled continuation after them.
#[allow(clippy::too_many_arguments)]
pub fn train_rl_epoch(
    params: &mut Seq2SeqParams,
    baseline: &mut Baseline,
    pairs: &[IdPair],
    epoch: usize,
    prefix_len: usize,
    ctx: &RewardContext,
    cfg: &RlConfig,
    rng: &mut Rng,
) -> Result<EpochStats> {
    if prefix_len == 0 {
        return Err(DressError::InvalidArgument("the curriculum has terminated".into()));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(rng);
    let mut stats = EpochStats {
        epoch,
        prefix_len,
        ..EpochStats::default()
    };
    let mut nll_sum = 0.0;
    let mut nll_tokens = 0usize;
    for i in order {
        let (source, target) = &pairs[i];
        let mut gold = target.clone();
        gold.push(EOS);
        let forced = &gold[..prefix_len.min(gold.len())];
        let rl = prefix_len < gold.len();

        let mut grads = Gradients::for_store(&params.store);
        let mut sampled = None;
        {
            let mut g = Graph::new(&params.store);
            let cont = if rl {
                Continue::Sample {
                    steps: rl_steps(max_len_for(source.len(), cfg.max_len_factor), forced.len()),
                    rng,
                }
            } else {
                Continue::Force(&[])
            };
            let seg = run_segment(&mut g, &params.layout, source, forced, cont)?;
            let mut parts = Vec::new();
            if !seg.nll.is_empty() {
                let s = g.add_n(&seg.nll)?;
                nll_sum -= g.scalar(s);
                nll_tokens += seg.nll.len();
                parts.push(g.scale(s, -1.0));
            }
            if rl {
                let r = Rollout {
                    prefix: forced.to_vec(),
                    actions: seg.actions.clone(),
                    log_probs: Vec::new(),
                    features: seg.features.clone(),
                    reward: RewardBreakdown::default(),
                };
                let reward = ctx.score(source, &r.output(), target)?;
                let bs = seg
                    .features
                    .iter()
                    .map(|f| baseline.predict(f))
                    .collect::<Result<Vec<_>>>()?;
                if let Some(l) = surrogate_loss(&mut g, &seg.log_probs, reward.total, &bs)? {
                    parts.push(l);
                }
                sampled = Some((reward, seg.features));
            }
            if !parts.is_empty() {
                let loss = g.add_n(&parts)?;
                g.backward(loss, &mut grads)?;
            }
        }
        clip_gradients(&mut grads, cfg.clip);
        sgd_step(&mut params.store, &grads, cfg.lr)?;
        if let Some((reward, features)) = sampled {
            baseline.update(&features, reward.total, cfg.baseline_lr, cfg.clip)?;
            stats.rollouts += 1;
            stats.mean_reward += reward.total;
            stats.mean_r_s += reward.r_s;
            stats.mean_r_r += reward.r_r;
            stats.mean_r_f += reward.r_f;
        }
    }
    if stats.rollouts > 0 {
        let n = stats.rollouts as f64;
        stats.mean_reward /= n;
        stats.mean_r_s /= n;
        stats.mean_r_r /= n;
        stats.mean_r_f /= n;
    }
    if nll_tokens > 0 {
        stats.mean_nll = nll_sum / nll_tokens as f64;
    }
    Ok(stats)
}

/// Mean composite reward of greedy outputs.
pub fn mean_greedy_reward(
    params: &Seq2SeqParams,
    pairs: &[IdPair],
    ctx: &RewardContext,
    max_len_factor: f64,
) -> Result<RewardBreakdown> {
    if pairs.is_empty() {
        return Err(DressError::Empty("no pairs to score".into()));
    }
    let mut acc = RewardBreakdown::default();
    for (source, target) in pairs {
        let out = decode(
            params,
            source,
            max_len_for(source.len(), max_len_factor),
            DecodeMode::Greedy,
        )?;
        let r = ctx.score(source, &out.ids, target)?;
        acc.r_s += r.r_s;
        acc.r_r += r.r_r;
        acc.r_f += r.r_f;
        acc.total += r.total;
    }
    let n = pairs.len() as f64;
    Ok(RewardBreakdown {
        r_s: acc.r_s / n,
        r_r: acc.r_r / n,
        r_f: acc.r_f / n,
        total: acc.total / n,
    })
}
