//! Acceptance checks, one line per criterion. Exits nonzero if any fails.
//!
//! Criteria 6 to 9 share one desk-scale pipeline run (plus a second run for
//! the reproducibility comparison), so this target takes several minutes.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;

use dress::cli::checkpoint::{Checkpoint, RL};
use dress::cli::config::Config;
use dress::cli::pipeline::{self, lexsimp_from, lm_from, policy_from, sae_from, Prepared, Workspace};
use dress::cli::synthetic::RuleSet;
use dress::lexsimp::{context_states, decode_interpolated, interpolated_step, lexsimp_distribution};
use dress::metrics::{bleu_corpus, count_syllables, fkgl, sari, ter_edits};
use dress::ndgraph::{finite_difference, relative_error, Array, Dropout, Gradients, Graph, ParamStore};
use dress::reinforce::{advantage_gradients, curriculum_l, reinforce_gradients, rollout, surrogate_loss, Baseline};
use dress::rewardmodels::{
    fluency_reward, relevance_reward, simplicity_reward, LmParams, RewardContext, RewardWeights, SaeParams,
};
use dress::rng::{self, Rng};
use dress::seq2seq::{argmax, decode, max_len_for, sample_index, DecodeMode, Seq2SeqDims, Seq2SeqParams};
use dress::textproc::{anonymize, deanonymize, EntityType, TokenSeq, EOS};

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn toks(ids: &[u8]) -> TokenSeq {
    TokenSeq::new(ids.iter().map(|i| ((b'a' + i) as char).to_string()).collect()).unwrap()
}

/// Every sequence over `alpha` symbols of length at most `max_len`.
fn enumerate(max_len: usize, alpha: u8) -> Vec<Vec<u8>> {
    let mut out = vec![vec![]];
    let mut frontier: Vec<Vec<u8>> = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for t in 0..alpha {
                let mut v = s.clone();
                v.push(t);
                next.push(v);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn random_ids(rng: &mut Rng, lo: usize, hi: usize, vocab: usize) -> Vec<usize> {
    let n = rng.gen_range(lo..=hi);
    (0..n).map(|_| rng.gen_range(4..vocab)).collect()
}

// ---------------------------------------------------------------------------
// 1. gradient fidelity
// ---------------------------------------------------------------------------

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let dims = Seq2SeqDims {
        vocab: 20,
        hidden: 8,
        layers: 2,
    };
    let mut worst: f64 = 0.0;
    let mut entries = 0;
    for seed in 0..20u64 {
        let mut r = rng::stream(seed, "acceptance/fd");
        let params = Seq2SeqParams::init(dims, &mut r).map_err(|e| e.to_string())?;
        let pairs: Vec<(Vec<usize>, Vec<usize>)> = (0..2)
            .map(|_| {
                let s = random_ids(&mut r, 2, 5, 20);
                let mut t = random_ids(&mut r, 1, 4, 20);
                t.push(EOS);
                (s, t)
            })
            .collect();
        let loss = |store: &ParamStore| -> f64 {
            let mut g = Graph::new(store);
            pairs
                .iter()
                .map(|(s, t)| {
                    let l = params.layout.nll_in(&mut g, s, t, &mut Dropout::eval()).unwrap();
                    g.scalar(l)
                })
                .sum()
        };
        let mut grads = Gradients::for_store(&params.store);
        {
            let mut g = Graph::new(&params.store);
            let parts: Vec<_> = pairs
                .iter()
                .map(|(s, t)| params.layout.nll_in(&mut g, s, t, &mut Dropout::eval()).unwrap())
                .collect();
            let total = g.add_n(&parts).unwrap();
            g.backward(total, &mut grads).unwrap();
        }
        for id in params.store.ids() {
            let fd = finite_difference(&params.store, id, 1e-5, loss);
            for (a, b) in grads.get(id).data().iter().zip(&fd) {
                worst = worst.max(relative_error(*a, *b));
                entries += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(
        worst <= 1e-4 && secs < 60.0,
        format!("max relative error {worst:.2e} over {entries} entries, 20 seeds, {secs:.1} s"),
    )
}

// ---------------------------------------------------------------------------
// 2. metric oracles
// ---------------------------------------------------------------------------

type Bag = BTreeMap<Vec<u8>, usize>;

fn bag(s: &[u8], n: usize, times: usize) -> Bag {
    let mut b = Bag::new();
    if s.len() >= n {
        for w in s.windows(n) {
            *b.entry(w.to_vec()).or_insert(0) += times;
        }
    }
    b
}

fn inter(a: &Bag, b: &Bag) -> Bag {
    a.iter()
        .filter_map(|(k, &x)| b.get(k).map(|&y| (k.clone(), x.min(y))))
        .collect()
}

fn minus(a: &Bag, b: &Bag) -> Bag {
    a.iter()
        .filter_map(|(k, &x)| {
            let d = x.saturating_sub(b.get(k).copied().unwrap_or(0));
            (d > 0).then(|| (k.clone(), d))
        })
        .collect()
}

fn at(b: &Bag, k: &[u8]) -> f64 {
    b.get(k).copied().unwrap_or(0) as f64
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Multiset n-gram arithmetic in the shape of the original SARI script,
/// with an operation scoring 1 when it has neither candidates nor
/// reference n-grams.
fn sari_oracle(src: &[u8], out: &[u8], refs: &[Vec<u8>]) -> (f64, f64, f64) {
    let m = refs.len();
    let (mut add, mut keep, mut del) = (0.0, 0.0, 0.0);
    for n in 1..=4 {
        let s = bag(src, n, m);
        let c = bag(out, n, m);
        let mut r = Bag::new();
        for x in refs {
            for (k, v) in bag(x, n, 1) {
                *r.entry(k).or_insert(0) += v;
            }
        }

        let kept = inter(&s, &c);
        let kept_good = inter(&kept, &r);
        let kept_all = inter(&s, &r);
        keep += if kept.is_empty() && kept_all.is_empty() {
            1.0
        } else {
            let p = if kept.is_empty() {
                0.0
            } else {
                kept.keys().map(|g| at(&kept_good, g) / at(&kept, g)).sum::<f64>() / kept.len() as f64
            };
            let rc = if kept_all.is_empty() {
                0.0
            } else {
                kept_all
                    .keys()
                    .map(|g| at(&kept_good, g) / at(&kept_all, g))
                    .sum::<f64>()
                    / kept_all.len() as f64
            };
            f1(p, rc)
        };

        let deleted = minus(&s, &c);
        let deleted_good = minus(&deleted, &r);
        let deleted_all = minus(&s, &r);
        del += if deleted.is_empty() {
            if deleted_all.is_empty() {
                1.0
            } else {
                0.0
            }
        } else {
            deleted
                .keys()
                .map(|g| at(&deleted_good, g) / at(&deleted, g))
                .sum::<f64>()
                / deleted.len() as f64
        };

        let s_set: HashSet<&Vec<u8>> = s.keys().collect();
        let added: HashSet<&Vec<u8>> = c.keys().filter(|g| !s_set.contains(g)).collect();
        let added_all: HashSet<&Vec<u8>> = r.keys().filter(|g| !s_set.contains(g)).collect();
        let good = added.intersection(&added_all).count() as f64;
        add += if added.is_empty() && added_all.is_empty() {
            1.0
        } else {
            let p = if added.is_empty() {
                0.0
            } else {
                good / added.len() as f64
            };
            let rc = if added_all.is_empty() {
                0.0
            } else {
                good / added_all.len() as f64
            };
            f1(p, rc)
        };
    }
    (100.0 * add / 4.0, 100.0 * keep / 4.0, 100.0 * del / 4.0)
}

fn levenshtein(a: &[u8], b: &[u8]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(x != y)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

/// Fewest edits with block shifts costing one each: breadth-first over every
/// reordering reachable by shifts, each closed off with plain edit distance.
fn ter_oracle(from: &[u8], to: &[u8]) -> usize {
    let mut dist: HashMap<Vec<u8>, usize> = HashMap::new();
    let mut queue = VecDeque::new();
    dist.insert(from.to_vec(), 0);
    queue.push_back(from.to_vec());
    let mut best = usize::MAX;
    while let Some(h) = queue.pop_front() {
        let k = dist[&h];
        best = best.min(k + levenshtein(&h, to));
        for s in 0..h.len() {
            for l in 1..=h.len() - s {
                let block = &h[s..s + l];
                let rest: Vec<u8> = h[..s].iter().chain(&h[s + l..]).copied().collect();
                for d in 0..=rest.len() {
                    let mut c = rest[..d].to_vec();
                    c.extend_from_slice(block);
                    c.extend_from_slice(&rest[d..]);
                    if !dist.contains_key(&c) {
                        dist.insert(c.clone(), k + 1);
                        queue.push_back(c);
                    }
                }
            }
        }
    }
    best
}

fn metric_oracles() -> Outcome {
    let mut r = rng::stream(2, "acceptance/metrics");
    let outputs = enumerate(6, 5);
    let random_sentence = |r: &mut Rng| -> Vec<u8> {
        let n = r.gen_range(0..=6);
        (0..n).map(|_| r.gen_range(0..5)).collect()
    };
    let mut sari_worst: f64 = 0.0;
    let mut cases = 0;
    for out in &outputs {
        for _ in 0..2 {
            let src = random_sentence(&mut r);
            let refs: Vec<Vec<u8>> = (0..r.gen_range(1..=3)).map(|_| random_sentence(&mut r)).collect();
            let ref_seqs: Vec<TokenSeq> = refs.iter().map(|x| toks(x)).collect();
            let got = sari(&toks(&src), &toks(out), &ref_seqs);
            if src.is_empty() && out.is_empty() {
                if got.is_ok() {
                    return Err("empty source and output accepted by SARI".into());
                }
                continue;
            }
            let got = got.map_err(|e| e.to_string())?;
            let (a, k, d) = sari_oracle(&src, out, &refs);
            for (x, y) in [
                (got.add_score, a),
                (got.keep_score, k),
                (got.del_score, d),
                (got.total, (a + k + d) / 3.0),
            ] {
                sari_worst = sari_worst.max((x - y).abs());
            }
            cases += 1;
        }
    }

    let seqs = enumerate(5, 3);
    let mut ter_bad = 0;
    let mut ter_pairs = 0;
    for a in &seqs {
        for b in seqs.iter().filter(|b| !b.is_empty()) {
            ter_pairs += 1;
            if ter_edits(a, b).total() != ter_oracle(a, b) {
                ter_bad += 1;
            }
        }
    }

    let one = |s: &str| vec![TokenSeq::from(s)];
    let brevity = bleu_corpus(&one("a b c d"), &[one("a b c d e")]).map_err(|e| e.to_string())?;
    let perfect =
        bleu_corpus(&one("the cat sat on the mat"), &[one("the cat sat on the mat")]).map_err(|e| e.to_string())?;
    let disjoint = bleu_corpus(&one("x y z w"), &[one("a b c d")]).map_err(|e| e.to_string())?;

    let words = [
        "the",
        "cat",
        "sat",
        "beautiful",
        "information",
        "on",
        "mat",
        "quickly",
        "simple",
        "table",
        "understand",
        "a",
    ];
    let mut fkgl_worst: f64 = 0.0;
    for _ in 0..200 {
        let n_sent = r.gen_range(1..=4);
        let sents: Vec<TokenSeq> = (0..n_sent)
            .map(|_| {
                let n = r.gen_range(1..=9);
                TokenSeq::new((0..n).map(|_| words.choose(&mut r).unwrap().to_string()).collect()).unwrap()
            })
            .collect();
        let w: usize = sents.iter().map(TokenSeq::len).sum();
        let syl: usize = sents
            .iter()
            .flat_map(|s| s.iter())
            .map(|t| count_syllables(t).unwrap())
            .sum();
        let direct = 0.39 * w as f64 / n_sent as f64 + 11.8 * syl as f64 / w as f64 - 15.59;
        fkgl_worst = fkgl_worst.max((fkgl(&sents).map_err(|e| e.to_string())? - direct).abs());
    }

    ensure(
        sari_worst <= 1e-9
            && ter_bad == 0
            && (brevity - 77.88).abs() <= 0.01
            && (perfect - 100.0).abs() < 1e-9
            && disjoint == 0.0
            && fkgl_worst <= 1e-9,
        format!(
            "SARI max |diff| {sari_worst:.1e} on {cases} cases ({} outputs); TER {ter_bad}/{ter_pairs} mismatches; \
             BLEU {brevity:.4} / {perfect:.1} / {disjoint:.1}; FKGL max |diff| {fkgl_worst:.1e}",
            outputs.len()
        ),
    )
}

// ---------------------------------------------------------------------------
// 3. reward contracts
// ---------------------------------------------------------------------------

fn reward_contracts() -> Outcome {
    let dims = Seq2SeqDims {
        vocab: 20,
        hidden: 8,
        layers: 1,
    };
    let mut r = rng::stream(3, "acceptance/rewards");
    let sae = SaeParams::init(dims, &mut r).map_err(|e| e.to_string())?;
    let lm = LmParams::init(dims, &mut r).map_err(|e| e.to_string())?;
    let weights = RewardWeights::default();
    let ctx = RewardContext {
        sae: &sae,
        lm: &lm,
        weights,
    };
    let unit = 0.0..=1.0;
    let (mut out_of_range, mut composite_worst, mut self_worst): (usize, f64, f64) = (0, 0.0, 0.0);
    for _ in 0..10_000 {
        let src = random_ids(&mut r, 1, 8, 20);
        let out = random_ids(&mut r, 1, 8, 20);
        let reference = random_ids(&mut r, 1, 8, 20);
        let rs = simplicity_reward(&src, &out, &reference, weights.beta).map_err(|e| e.to_string())?;
        let rr = relevance_reward(&sae, &src, &out).map_err(|e| e.to_string())?;
        let rf = fluency_reward(&lm, &out).map_err(|e| e.to_string())?;
        out_of_range += [rs, rr, rf].iter().filter(|v| !unit.contains(*v)).count();
        let b = ctx.score(&src, &out, &reference).map_err(|e| e.to_string())?;
        let direct = 1.0 * rs + 0.25 * rr + 0.5 * rf;
        composite_worst = composite_worst.max((b.total - direct).abs());
        self_worst = self_worst.max((relevance_reward(&sae, &src, &src).map_err(|e| e.to_string())? - 1.0).abs());
    }
    let uniform = LmParams::zeros(dims).map_err(|e| e.to_string())?;
    let mut uniform_worst: f64 = 0.0;
    for _ in 0..100 {
        let s = random_ids(&mut r, 1, 10, 20);
        uniform_worst =
            uniform_worst.max((fluency_reward(&uniform, &s).map_err(|e| e.to_string())? - 1.0 / 20.0).abs());
    }
    ensure(
        out_of_range == 0 && composite_worst <= 1e-12 && self_worst == 0.0 && uniform_worst <= 1e-9,
        format!(
            "{out_of_range} out-of-range values over 10^4 inputs; composite |diff| {composite_worst:.1e}; \
             relevance(s,s) |diff| {self_worst:.1e}; uniform-LM fluency |diff| {uniform_worst:.1e}"
        ),
    )
}

// ---------------------------------------------------------------------------
// 4. REINFORCE correctness
// ---------------------------------------------------------------------------

fn reinforce_correctness() -> Outcome {
    // Two-arm bandit: softmax policy over logits theta, arm rewards fixed.
    let theta = [0.3, -0.2];
    let rewards = [1.0, 0.0];
    let baseline = 0.0;
    let mut store = ParamStore::new();
    let id = store.add("theta", Array::vector(theta.to_vec()));
    let p = dress::ndgraph::softmax(&theta).map_err(|e| e.to_string())?;
    let expected: f64 = p.iter().zip(rewards).map(|(p, r)| p * r).sum();
    let exact: Vec<f64> = (0..2).map(|i| p[i] * (rewards[i] - expected)).collect();
    let mut r = rng::stream(4, "acceptance/bandit");
    let n = 10_000;
    let mut mc = [0.0; 2];
    for _ in 0..n {
        let a = sample_index(&p, &mut r);
        let mut g = Graph::new(&store);
        let z = g.param(id);
        let lp = g.log_softmax(z).map_err(|e| e.to_string())?;
        let pick = g.pick(lp, a).map_err(|e| e.to_string())?;
        let loss = surrogate_loss(&mut g, &[pick], rewards[a], &[baseline])
            .map_err(|e| e.to_string())?
            .ok_or("no loss")?;
        let mut grads = Gradients::for_store(&store);
        g.backward(loss, &mut grads).map_err(|e| e.to_string())?;
        // the surrogate's gradient is the negated estimate
        for (m, v) in mc.iter_mut().zip(grads.get(id).data()) {
            *m -= v / n as f64;
        }
    }
    let err =
        ((mc[0] - exact[0]).powi(2) + (mc[1] - exact[1]).powi(2)).sqrt() / (exact[0].powi(2) + exact[1].powi(2)).sqrt();

    // Zero advantage and baseline isolation on a small sequence model.
    let dims = Seq2SeqDims {
        vocab: 20,
        hidden: 8,
        layers: 2,
    };
    let params = Seq2SeqParams::init(dims, &mut r).map_err(|e| e.to_string())?;
    let sae = SaeParams::init(dims, &mut r).map_err(|e| e.to_string())?;
    let lm = LmParams::init(dims, &mut r).map_err(|e| e.to_string())?;
    let ctx = RewardContext {
        sae: &sae,
        lm: &lm,
        weights: RewardWeights::default(),
    };
    let before = params.store.clone();
    let mut nonzero = 0usize;
    let mut moved = false;
    for k in 0..50 {
        let src = random_ids(&mut r, 2, 6, 20);
        let reference = random_ids(&mut r, 1, 5, 20);
        let prefix: Vec<usize> = reference.iter().take(k % 3).copied().collect();
        let roll = rollout(
            &params,
            &src,
            &prefix,
            &reference,
            &ctx,
            max_len_for(src.len(), 1.5),
            &mut r,
        )
        .map_err(|e| e.to_string())?;
        let reward = roll.reward.total;
        let g = advantage_gradients(&params, &src, &roll, reward, &vec![reward; roll.actions.len()])
            .map_err(|e| e.to_string())?;
        nonzero += g.flatten().iter().filter(|x| **x != 0.0).count();
        let mut b = Baseline::zeros(2 * dims.hidden);
        for _ in 0..5 {
            b.update(&roll.features, reward, 0.1, 5.0).map_err(|e| e.to_string())?;
        }
        moved |= b.bias != 0.0;
    }
    let untouched = params.store.named() == before.named();
    ensure(
        err <= 0.02 && nonzero == 0 && untouched && moved,
        format!(
            "bandit MC gradient [{:.4}, {:.4}] vs exact [{:.4}, {:.4}] (relative error {:.2}%); \
             {nonzero} nonzero entries at zero advantage; policy unchanged by baseline updates: {untouched}",
            mc[0],
            mc[1],
            exact[0],
            exact[1],
            100.0 * err
        ),
    )
}

// ---------------------------------------------------------------------------
// 5. curriculum
// ---------------------------------------------------------------------------

fn curriculum() -> Outcome {
    let mut seq = Vec::new();
    let mut epoch = 1;
    while let Some(l) = curriculum_l(epoch).map_err(|e| e.to_string())? {
        seq.push(l);
        epoch += 1;
    }
    let expected: Vec<usize> = (0..8).rev().flat_map(|k| [3 + 3 * k, 3 + 3 * k]).collect();
    ensure(
        seq == expected && epoch == 17,
        format!("L = {seq:?}, terminates at epoch {epoch}"),
    )
}

// ---------------------------------------------------------------------------
// 6-9. desk pipeline
// ---------------------------------------------------------------------------

struct DeskRun {
    ws: Workspace,
    cfg: Config,
    seconds: f64,
}

fn desk_pipeline(root: &Path) -> dress::Result<DeskRun> {
    let start = Instant::now();
    let cfg = Config::desk();
    let ws = Workspace::new(root);
    pipeline::gen_synthetic(&ws, &ws.data_dir(), 2000, 200, &cfg)?;
    pipeline::preprocess(&ws, &ws.data_dir(), &cfg)?;
    for c in ["seq2seq", "sae", "lm"] {
        pipeline::train(&ws, &cfg, c, None)?;
    }
    pipeline::train_rl(&ws, &cfg, None, None, None)?;
    pipeline::train_lexsimp(&ws, &cfg, None)?;
    let data = ws.data_dir();
    for (name, policy, eta) in [("seq2seq", "seq2seq", 0.0), ("rl", "rl", 0.0), ("rl-ls", "rl", cfg.eta)] {
        let out = root.join(format!("valid.{name}"));
        pipeline::simplify(
            &ws,
            &cfg,
            &data.join("valid.complex"),
            &out,
            Some(&ws.checkpoint(policy)),
            eta,
        )?;
        pipeline::evaluate(
            &ws,
            &cfg,
            &data.join("valid.complex"),
            &out,
            &[data.join("valid.simple")],
            &root.join(format!("report.{name}.json")),
        )?;
    }
    Ok(DeskRun {
        ws,
        cfg,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn json(path: &Path) -> Result<serde_json::Value, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn end_to_end(run: &DeskRun) -> Outcome {
    let ws = &run.ws;
    let log = fs::read_to_string(ws.log("seq2seq")).map_err(|e| e.to_string())?;
    let valid: Vec<f64> = log
        .lines()
        .skip(1)
        .take(5)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    let monotone = valid.len() == 5 && valid.windows(2).all(|w| w[1] <= w[0] * 1.02);

    let summary = &json(&ws.manifest("train-rl"))?["summary"];
    let pre = summary["valid_reward_pretrained"]
        .as_f64()
        .ok_or("missing pretrained reward")?;
    let rl = summary["valid_reward_rl"].as_f64().ok_or("missing rl reward")?;

    let sari_of = |name: &str| -> Result<f64, String> {
        json(&ws.root().join(format!("report.{name}.json")))?["sari"]["total"]
            .as_f64()
            .ok_or_else(|| "missing sari".to_string())
    };
    let (s_pre, s_rl, s_ls) = (sari_of("seq2seq")?, sari_of("rl")?, sari_of("rl-ls")?);
    let vocab = json(&ws.manifest("preprocess"))?["summary"]["vocab"]
        .as_u64()
        .unwrap_or(0);

    ensure(
        monotone && rl > pre && s_rl - s_pre >= 2.0 && run.seconds < 900.0,
        format!(
            "vocab {vocab}; first 5 valid losses {valid:.3?}; valid reward {pre:.4} -> {rl:.4}; \
             SARI {s_pre:.2} -> {s_rl:.2} (with lexical model {s_ls:.2}); {:.0} s",
            run.seconds
        ),
    )
}

fn lexical_interpolation(run: &DeskRun) -> Outcome {
    let ws = &run.ws;
    let prep = Prepared::load(ws).map_err(|e| e.to_string())?;
    let load = |c: &str| Checkpoint::load(&ws.checkpoint(c), c).map_err(|e| e.to_string());
    let policy = policy_from(&load(RL)?).map_err(|e| e.to_string())?;
    let lex = lexsimp_from(&load("lexsimp")?).map_err(|e| e.to_string())?;
    let factor = run.cfg.max_len_factor;

    let mut differ = 0;
    let mut sum_worst: f64 = 0.0;
    let pairs = prep.ids(&prep.valid, false);
    for (src, _) in &pairs {
        let max_len = max_len_for(src.len(), factor);
        let plain = decode(&policy, src, max_len, DecodeMode::Greedy).map_err(|e| e.to_string())?;
        let mixed0 = decode_interpolated(&policy, Some(&lex), 0.0, src, max_len, DecodeMode::Greedy)
            .map_err(|e| e.to_string())?;
        differ += usize::from(plain.ids != mixed0.ids);
        let v = context_states(&lex, src).map_err(|e| e.to_string())?;
        dress::seq2seq::decode_with(&policy, src, max_len, DecodeMode::Greedy, |s| {
            let p = interpolated_step(&s.probs, &lexsimp_distribution(&lex, &v, &s.alpha)?, run.cfg.eta)?;
            sum_worst = sum_worst.max((p.iter().sum::<f64>() - 1.0).abs());
            Ok(p)
        })
        .map_err(|e| e.to_string())?;
    }

    // Probe: one-hot attention on a rare source word should put the lexical
    // model's argmax on its dictionary replacement. An entry passes when
    // the majority of its occurrences in validation sources do.
    let mut tally: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let dictionary = RuleSet::standard().dictionary();
    let replacement: HashMap<&str, &str> = dictionary.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    for (complex, _) in prep.valid.pairs() {
        let ids = prep.vocab.encode(complex);
        let v = context_states(&lex, &ids).map_err(|e| e.to_string())?;
        for (i, t) in complex.iter().enumerate() {
            if let Some(common) = replacement.get(t) {
                let mut alpha = vec![0.0; ids.len()];
                alpha[i] = 1.0;
                let p = lexsimp_distribution(&lex, &v, &alpha).map_err(|e| e.to_string())?;
                let e = tally.entry(t.to_string()).or_default();
                e.0 += usize::from(prep.vocab.contains(common) && argmax(&p) == prep.vocab.id(common));
                e.1 += 1;
            }
        }
    }
    let passed = tally.values().filter(|(ok, n)| 2 * ok > *n).count();
    let entries = dictionary.len();
    let rate = passed as f64 / entries as f64;
    ensure(
        differ == 0 && rate >= 0.8 && sum_worst <= 1e-9,
        format!(
            "eta=0 differs from greedy on {differ}/{} sentences; probe {passed}/{entries} entries ({:.1}%, \
             {} seen in validation); interpolated sums |diff| {sum_worst:.1e}",
            pairs.len(),
            100.0 * rate,
            tally.len()
        ),
    )
}

fn variance_reduction(run: &DeskRun) -> Outcome {
    let ws = &run.ws;
    let prep = Prepared::load(ws).map_err(|e| e.to_string())?;
    let load = |c: &str| Checkpoint::load(&ws.checkpoint(c), c).map_err(|e| e.to_string());
    let rl = load(RL)?;
    let policy = policy_from(&rl).map_err(|e| e.to_string())?;
    let trained = rl.baseline.clone().ok_or("rl checkpoint has no baseline")?;
    let zero = Baseline::zeros(trained.weights.len());
    let sae = sae_from(&load("sae")?).map_err(|e| e.to_string())?;
    let lm = lm_from(&load("lm")?).map_err(|e| e.to_string())?;
    let ctx = RewardContext {
        sae: &sae,
        lm: &lm,
        weights: run.cfg.reward_weights(),
    };
    let pairs = prep.ids(&prep.valid, false);
    let mut r = rng::stream(8, "acceptance/variance");
    let (mut with, mut without) = (Vec::new(), Vec::new());
    for k in 0..200 {
        let (src, reference) = &pairs[k % pairs.len()];
        let max_len = max_len_for(src.len(), run.cfg.max_len_factor);
        let roll = rollout(&policy, src, &[], reference, &ctx, max_len, &mut r).map_err(|e| e.to_string())?;
        for (b, acc) in [(&trained, &mut with), (&zero, &mut without)] {
            let g = reinforce_gradients(&policy, src, &roll, b).map_err(|e| e.to_string())?;
            acc.push(g.global_norm());
        }
    }
    let var = |x: &[f64]| {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
    };
    let (vt, vz) = (var(&with), var(&without));
    ensure(
        vt <= vz,
        format!("gradient-norm variance over 200 rollouts: trained baseline {vt:.4e}, zero baseline {vz:.4e}"),
    )
}

fn files_under(dir: &Path, out: &mut Vec<std::path::PathBuf>) {
    let Ok(entries) = fs::read_dir(dir) else { return };
    let mut paths: Vec<_> = entries.flatten().map(|e| e.path()).collect();
    paths.sort();
    for p in paths {
        if p.is_dir() {
            files_under(&p, out);
        } else {
            out.push(p);
        }
    }
}

fn reproducibility(a: &DeskRun, b: &DeskRun) -> Outcome {
    let mut files = Vec::new();
    files_under(a.ws.root(), &mut files);
    let mut differ = Vec::new();
    for f in &files {
        let rel = f.strip_prefix(a.ws.root()).unwrap();
        if fs::read(f).ok() != fs::read(b.ws.root().join(rel)).ok() {
            differ.push(rel.display().to_string());
        }
    }
    let ckpts = files
        .iter()
        .filter(|f| f.extension().is_some_and(|e| e == "ckpt"))
        .count();
    ensure(
        differ.is_empty() && ckpts == 5,
        format!(
            "{} files compared ({ckpts} checkpoints); differing: {differ:?}",
            files.len()
        ),
    )
}

// ---------------------------------------------------------------------------
// 10. text round trips
// ---------------------------------------------------------------------------

fn text_round_trips() -> Outcome {
    let rules = RuleSet::standard();
    let gaz = &rules.gazetteer;
    let spans: Vec<TokenSeq> = EntityType::ALL.into_iter().flat_map(|k| gaz.spans(k)).collect();
    let mut filler: Vec<String> = rules.words.values().flatten().cloned().collect();
    filler.sort();
    let mut r = rng::stream(10, "acceptance/roundtrip");
    let mut broken = 0;
    let mut replaced = 0;
    for _ in 0..10_000 {
        let mut tokens = Vec::new();
        for _ in 0..r.gen_range(1..=10) {
            if r.gen_bool(0.4) {
                tokens.extend(spans.choose(&mut r).unwrap().tokens().iter().cloned());
            } else {
                tokens.push(filler.choose(&mut r).unwrap().clone());
            }
        }
        let seq = TokenSeq::new(tokens).unwrap();
        let (anon, map) = anonymize(&seq, gaz);
        replaced += map.len();
        broken += usize::from(deanonymize(&anon, &map) != seq);
    }
    let (john, _) = anonymize(&TokenSeq::from("John and Bob are"), gaz);
    ensure(
        broken == 0 && replaced > 0 && john.to_line() == "PER@1 and PER@2 are",
        format!(
            "{broken}/10000 sentences changed by the round trip ({replaced} entities); \"John and Bob are\" -> \"{}\"",
            john.to_line()
        ),
    )
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut report = |n: usize, name: &str, outcome: Outcome| match &outcome {
        Ok(detail) => println!("PASS {n:>2} {name}: {detail}"),
        Err(detail) => {
            failures += 1;
            println!("FAIL {n:>2} {name}: {detail}");
        }
    };
    report(1, "gradient fidelity", gradient_fidelity());
    report(2, "metric oracles", metric_oracles());
    report(3, "reward contracts", reward_contracts());
    report(4, "REINFORCE correctness", reinforce_correctness());
    report(5, "curriculum schedule", curriculum());

    let dir_a = tempfile::tempdir().expect("temp dir");
    let dir_b = tempfile::tempdir().expect("temp dir");
    match desk_pipeline(dir_a.path()) {
        Ok(a) => {
            report(6, "end-to-end desk run", end_to_end(&a));
            report(7, "lexical interpolation", lexical_interpolation(&a));
            report(8, "variance reduction", variance_reduction(&a));
            let second = desk_pipeline(dir_b.path()).map_err(|e| format!("second run failed: {e}"));
            report(9, "reproducibility", second.and_then(|b| reproducibility(&a, &b)));
        }
        Err(e) => {
            for (n, name) in [
                (6, "end-to-end desk run"),
                (7, "lexical interpolation"),
                (8, "variance reduction"),
                (9, "reproducibility"),
            ] {
                report(n, name, Err(format!("desk pipeline failed: {e}")));
            }
        }
    }
    report(10, "text round trips", text_round_trips());

    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
