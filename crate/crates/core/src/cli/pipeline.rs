//! The stages behind each subcommand. Every stage reads its inputs from a
//! work directory, writes its artifact there and leaves a run manifest in
//! `manifests/`.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use super::checkpoint::{Checkpoint, Progress, LEXSIMP, LM, RL, SAE, SEQ2SEQ};
use super::config::Config;
use super::synthetic::{generate, write_split, RuleSet};
use crate::error::{DressError, Result};
use crate::lexsimp::{
    decode_interpolated, harvest_alignments, lexsimp_epoch, lexsimp_loss, LexSimpDims, LexSimpParams,
};
use crate::metrics::evaluate as score_outputs;
use crate::ndgraph::{train_epoch, Adam, Container, ParamStore, TrainConfig};
use crate::reinforce::{mean_greedy_reward, train_rl_epoch, Baseline, EpochStats, IdPair};
use crate::rewardmodels::{lm_epoch, perplexity, sae_epoch, sae_loss, LmParams, RewardContext, SaeParams};
use crate::rng;
use crate::seq2seq::{max_len_for, nll_loss, unk_replace, DecodeMode, Seq2SeqDims, Seq2SeqParams};
use crate::textproc::{
    anonymize, anonymize_with, deanonymize, load_corpus, read_lines, tokenize, write_lines, Gazetteer, ParallelCorpus,
    TokenSeq, Vocab,
};

/// Layout of a work directory.
#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workspace { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn prep_dir(&self) -> PathBuf {
        self.root.join("prep")
    }

    pub fn checkpoint(&self, component: &str) -> PathBuf {
        self.root.join("models").join(format!("{component}.ckpt"))
    }

    pub fn log(&self, component: &str) -> PathBuf {
        self.root.join("logs").join(format!("{component}.csv"))
    }

    pub fn manifest(&self, stage: &str) -> PathBuf {
        self.root.join("manifests").join(format!("{stage}.json"))
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| DressError::io(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    fs::write(path, contents).map_err(|e| DressError::io(path, e))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| DressError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Digests keyed by path, relative to the work directory when inside it so
/// manifests do not depend on where the workspace lives.
fn digests(ws: &Workspace, paths: &[PathBuf]) -> Result<Value> {
    let mut m = Map::new();
    for p in paths {
        let key = p.strip_prefix(ws.root()).unwrap_or(p).display().to_string();
        if p.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| DressError::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file())
                .collect();
            files.sort();
            let mut h = Sha256::new();
            for f in &files {
                h.update(sha256_file(f)?.as_bytes());
            }
            m.insert(key, Value::String(hex::encode(h.finalize())));
        } else {
            m.insert(key, Value::String(sha256_file(p)?));
        }
    }
    Ok(Value::Object(m))
}

/// Record config, seed and input/output digests for one stage.
pub fn write_manifest(
    ws: &Workspace,
    stage: &str,
    cfg: &Config,
    inputs: &[PathBuf],
    outputs: &[PathBuf],
    summary: Value,
) -> Result<()> {
    let config: Map<String, Value> = cfg
        .entries()
        .into_iter()
        .map(|(k, v)| (k.to_owned(), Value::String(v)))
        .collect();
    let m = json!({
        "stage": stage,
        "seed": cfg.seed,
        "config": config,
        "inputs": digests(ws, inputs)?,
        "outputs": digests(ws, outputs)?,
        "summary": summary,
    });
    let text = serde_json::to_string_pretty(&m).map_err(|e| DressError::InvalidArgument(e.to_string()))?;
    write_file(&ws.manifest(stage), &(text + "\n"))
}

fn require(path: &Path, stage: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(DressError::MissingArtifact {
            stage: stage.to_owned(),
            path: path.to_owned(),
        })
    }
}

// ---------------------------------------------------------------------------
// gen-synthetic / preprocess
// ---------------------------------------------------------------------------

/// Write `train.*`, `valid.*`, `dictionary.tsv` and `gazetteer/` to `out`.
pub fn gen_synthetic(ws: &Workspace, out: &Path, train: usize, valid: usize, cfg: &Config) -> Result<()> {
    let rules = RuleSet::standard();
    let mut r = rng::stream(cfg.seed, "synthetic");
    let train_pairs = generate(&rules, train, &mut r)?;
    let valid_pairs = generate(&rules, valid, &mut r)?;
    create_dir(out)?;
    write_split(out, "train", &train_pairs)?;
    write_split(out, "valid", &valid_pairs)?;
    let gaz = out.join("gazetteer");
    rules.gazetteer.write_dir(&gaz)?;
    let dict: String = rules.dictionary().iter().map(|(a, b)| format!("{a}\t{b}\n")).collect();
    write_file(&out.join("dictionary.tsv"), &dict)?;
    let outputs: Vec<PathBuf> = [
        "train.complex",
        "train.simple",
        "train.edits",
        "valid.complex",
        "valid.simple",
        "valid.edits",
    ]
    .iter()
    .map(|f| out.join(f))
    .chain([gaz])
    .collect();
    write_manifest(
        ws,
        "gen-synthetic",
        cfg,
        &[],
        &outputs,
        json!({"train": train, "valid": valid}),
    )
}

fn anonymize_corpus(corpus: &ParallelCorpus, gaz: &Gazetteer) -> Result<ParallelCorpus> {
    let pairs = corpus
        .pairs()
        .iter()
        .map(|(c, s)| {
            let (c2, mut map) = anonymize(c, gaz);
            let s2 = anonymize_with(s, gaz, &mut map);
            (c2, s2)
        })
        .collect();
    ParallelCorpus::new(pairs)
}

/// Anonymize the corpora in `data` and build the vocabulary.
pub fn preprocess(ws: &Workspace, data: &Path, cfg: &Config) -> Result<()> {
    let side = |split: &str, s: &str| data.join(format!("{split}.{s}"));
    for p in [
        side("train", "complex"),
        side("train", "simple"),
        side("valid", "complex"),
        side("valid", "simple"),
    ] {
        require(&p, "gen-synthetic")?;
    }
    let gaz_dir = data.join("gazetteer");
    let gaz = Gazetteer::load_dir(&gaz_dir)?;
    let prep = ws.prep_dir();
    create_dir(&prep)?;
    let mut vocab = None;
    for split in ["train", "valid"] {
        let corpus = load_corpus(&side(split, "complex"), &side(split, "simple"))?;
        let anon = anonymize_corpus(&corpus, &gaz)?;
        if split == "train" {
            vocab = Some(Vocab::build(&anon, cfg.min_count)?);
        }
        anon.save(
            &prep.join(format!("{split}.complex")),
            &prep.join(format!("{split}.simple")),
        )?;
    }
    let vocab = vocab.expect("train split processed");
    vocab.save(&prep.join("vocab.txt"))?;
    gaz.write_dir(&prep.join("gazetteer"))?;
    let inputs = vec![
        side("train", "complex"),
        side("train", "simple"),
        side("valid", "complex"),
        side("valid", "simple"),
        gaz_dir,
    ];
    let outputs: Vec<PathBuf> = [
        "vocab.txt",
        "train.complex",
        "train.simple",
        "valid.complex",
        "valid.simple",
    ]
    .iter()
    .map(|f| prep.join(f))
    .collect();
    write_manifest(ws, "preprocess", cfg, &inputs, &outputs, json!({"vocab": vocab.len()}))
}

/// Output of `preprocess`, loaded back.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub vocab: Vocab,
    pub gazetteer: Gazetteer,
    pub train: ParallelCorpus,
    pub valid: ParallelCorpus,
}

impl Prepared {
    pub fn load(ws: &Workspace) -> Result<Self> {
        let prep = ws.prep_dir();
        let vocab_path = prep.join("vocab.txt");
        require(&vocab_path, "preprocess")?;
        let split = |s: &str| load_corpus(&prep.join(format!("{s}.complex")), &prep.join(format!("{s}.simple")));
        Ok(Prepared {
            vocab: Vocab::load(&vocab_path)?,
            gazetteer: Gazetteer::load_dir(&prep.join("gazetteer"))?,
            train: split("train")?,
            valid: split("valid")?,
        })
    }

    pub fn inputs(ws: &Workspace) -> Vec<PathBuf> {
        let prep = ws.prep_dir();
        [
            "vocab.txt",
            "train.complex",
            "train.simple",
            "valid.complex",
            "valid.simple",
        ]
        .iter()
        .map(|f| prep.join(f))
        .collect()
    }

    /// Pairs as ids; targets end with EOS when `eos` is set.
    pub fn ids(&self, corpus: &ParallelCorpus, eos: bool) -> Vec<IdPair> {
        corpus
            .pairs()
            .iter()
            .map(|(c, s)| {
                let t = if eos {
                    self.vocab.encode_target(s)
                } else {
                    self.vocab.encode(s)
                };
                (self.vocab.encode(c), t)
            })
            .collect()
    }

    pub fn dims(&self, cfg: &Config) -> Seq2SeqDims {
        Seq2SeqDims {
            vocab: self.vocab.len(),
            hidden: cfg.hidden,
            layers: cfg.layers,
        }
    }
}

// ---------------------------------------------------------------------------
// Resumable training
// ---------------------------------------------------------------------------

/// Load an earlier checkpoint of the same run, if any.
fn resume(path: &Path, component: &str, cfg: &Config, vocab: &Vocab) -> Result<Option<Checkpoint>> {
    if !path.exists() {
        return Ok(None);
    }
    let ck = Checkpoint::load(path, component)?;
    if ck.config != cfg.to_text() || ck.vocab != *vocab {
        return Err(DressError::Checkpoint(format!(
            "{} was written with a different configuration or vocabulary; remove it to retrain",
            path.display()
        )));
    }
    Ok(Some(ck))
}

/// Outcome of a training command.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs_done: usize,
    pub finished: bool,
    pub log: Vec<String>,
}

fn per_token<'a>(total: f64, targets: impl Iterator<Item = &'a Vec<usize>>) -> f64 {
    let n: usize = targets.map(Vec::len).sum();
    total / n.max(1) as f64
}

fn finish_stage(
    ws: &Workspace,
    stage: &str,
    component: &str,
    cfg: &Config,
    mut inputs: Vec<PathBuf>,
    ck: &Checkpoint,
    summary: Value,
) -> Result<TrainReport> {
    let log_path = ws.log(component);
    write_file(&log_path, &ck.progress.csv())?;
    if ck.progress.finished {
        inputs.sort();
        write_manifest(ws, stage, cfg, &inputs, &[ws.checkpoint(component), log_path], summary)?;
    }
    Ok(TrainReport {
        epochs_done: ck.progress.epoch,
        finished: ck.progress.finished,
        log: ck.progress.log.clone(),
    })
}

/// A model trained by likelihood, with its data.
enum Trainee {
    Seq2Seq {
        params: Seq2SeqParams,
        train: Vec<IdPair>,
        valid: Vec<IdPair>,
    },
    Sae {
        params: SaeParams,
        train: Vec<Vec<usize>>,
        valid: Vec<Vec<usize>>,
    },
    Lm {
        params: LmParams,
        train: Vec<Vec<usize>>,
        valid: Vec<Vec<usize>>,
    },
}

impl Trainee {
    fn new(component: &str, prep: &Prepared, cfg: &Config) -> Result<Self> {
        let dims = prep.dims(cfg);
        let init = &mut rng::stream(cfg.seed, &format!("{component}/init"));
        let encode = |c: &ParallelCorpus, both: bool| -> Vec<Vec<usize>> {
            let simple = c.simple().map(|s| prep.vocab.encode(s));
            let all: Vec<Vec<usize>> = if both {
                c.complex().map(|s| prep.vocab.encode(s)).chain(simple).collect()
            } else {
                simple.collect()
            };
            all.into_iter().filter(|s| !s.is_empty()).collect()
        };
        Ok(match component {
            SEQ2SEQ => Trainee::Seq2Seq {
                params: Seq2SeqParams::init(dims, init)?,
                train: prep.ids(&prep.train, true),
                valid: prep.ids(&prep.valid, true),
            },
            SAE => Trainee::Sae {
                params: SaeParams::init(dims, init)?,
                train: encode(&prep.train, true),
                valid: encode(&prep.valid, true),
            },
            LM => Trainee::Lm {
                params: LmParams::init(dims, init)?,
                train: encode(&prep.train, false),
                valid: encode(&prep.valid, false),
            },
            other => {
                return Err(DressError::InvalidArgument(format!(
                    "unknown component `{other}`; expected seq2seq, sae or lm"
                )))
            }
        })
    }

    fn epochs(&self, cfg: &Config) -> usize {
        match self {
            Trainee::Seq2Seq { .. } => cfg.epochs,
            Trainee::Sae { .. } => cfg.sae_epochs,
            Trainee::Lm { .. } => cfg.lm_epochs,
        }
    }

    fn header(&self) -> &'static str {
        match self {
            Trainee::Lm { .. } => "epoch,train_loss,valid_ppl",
            _ => "epoch,train_loss,valid_loss",
        }
    }

    fn store(&self) -> &ParamStore {
        match self {
            Trainee::Seq2Seq { params, .. } => &params.store,
            Trainee::Sae { params, .. } => &params.store,
            Trainee::Lm { params, .. } => &params.store,
        }
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        match self {
            Trainee::Seq2Seq { params, .. } => &mut params.store,
            Trainee::Sae { params, .. } => &mut params.store,
            Trainee::Lm { params, .. } => &mut params.store,
        }
    }

    /// One epoch; returns per-token training loss and the validation score.
    fn epoch(&mut self, adam: &mut Adam, tc: &TrainConfig, rng: &mut rng::Rng) -> Result<(f64, f64)> {
        match self {
            Trainee::Seq2Seq { params, train, valid } => {
                let layout = params.layout.clone();
                let total = train_epoch(&mut params.store, adam, train, tc, rng, |g, (s, t), d| {
                    layout.nll_in(g, s, t, d)
                })?;
                let mut v = 0.0;
                for (s, t) in valid.iter() {
                    v += nll_loss(params, s, t)?;
                }
                Ok((
                    per_token(total, train.iter().map(|p| &p.1)),
                    per_token(v, valid.iter().map(|p| &p.1)),
                ))
            }
            Trainee::Sae { params, train, valid } => {
                let total = sae_epoch(params, adam, train, tc, rng)?;
                let tokens: usize = train.iter().map(|s| s.len() + 1).sum();
                Ok((total / tokens as f64, sae_loss(params, valid)?))
            }
            Trainee::Lm { params, train, valid } => {
                let total = lm_epoch(params, adam, train, tc, rng)?;
                let tokens: usize = train.iter().map(|s| s.len() + 1).sum();
                Ok((total / tokens as f64, perplexity(params, valid)?))
            }
        }
    }
}

/// Train the likelihood model, the auto-encoder or the language model.
/// `stop_after` ends the run early after that many epochs in this call;
/// rerunning continues from the saved epoch.
pub fn train(ws: &Workspace, cfg: &Config, component: &str, stop_after: Option<usize>) -> Result<TrainReport> {
    cfg.validate()?;
    let prep = Prepared::load(ws)?;
    let mut model = Trainee::new(component, &prep, cfg)?;
    let dims = prep.dims(cfg);
    let path = ws.checkpoint(component);
    create_dir(path.parent().expect("checkpoint has a parent"))?;
    let prior = resume(&path, component, cfg, &prep.vocab)?;
    let epochs = model.epochs(cfg);
    let tc = cfg.train(epochs);
    let mut adam = tc.adam(model.store());
    let header = model.header();
    let mut progress = restore(prior, model.store_mut(), &mut adam, header)?;
    let mut ran = 0;
    while progress.epoch < epochs && stop_after.is_none_or(|n| ran < n) {
        let e = progress.epoch + 1;
        let (train_loss, valid) = model.epoch(&mut adam, &tc, &mut rng::epoch_stream(cfg.seed, component, e))?;
        let row = format!("{e},{train_loss:.6},{valid:.6}");
        log::info!("{component} epoch {row}");
        progress.log.push(row);
        progress.epoch = e;
        progress.finished = e == epochs;
        save_progress(&path, component, cfg, &prep, dims, model.store(), &adam, &progress)?;
        ran += 1;
    }
    if !path.exists() {
        save_progress(&path, component, cfg, &prep, dims, model.store(), &adam, &progress)?;
    }
    let ck = Checkpoint::load(&path, component)?;
    finish_stage(
        ws,
        &format!("train-{component}"),
        component,
        cfg,
        Prepared::inputs(ws),
        &ck,
        json!({}),
    )
}

fn restore(prior: Option<Checkpoint>, store: &mut ParamStore, adam: &mut Adam, header: &str) -> Result<Progress> {
    match prior {
        Some(ck) => {
            ck.restore_params(store)?;
            ck.restore_adam(adam)?;
            Ok(ck.progress)
        }
        None => Ok(Progress {
            epoch: 0,
            log: vec![header.to_owned()],
            finished: false,
        }),
    }
}

#[allow(clippy::too_many_arguments)]
fn save_progress(
    path: &Path,
    component: &str,
    cfg: &Config,
    prep: &Prepared,
    dims: Seq2SeqDims,
    store: &ParamStore,
    adam: &Adam,
    progress: &Progress,
) -> Result<()> {
    let mut ck = Checkpoint::new(component, cfg.to_text(), prep.vocab.clone(), dims, store).with_adam(adam);
    ck.progress = progress.clone();
    ck.save(path)
}

fn load_finished(ws: &Workspace, component: &str, stage: &str, path: Option<&Path>) -> Result<Checkpoint> {
    let default = ws.checkpoint(component);
    let path = path.unwrap_or(&default);
    require(path, stage)?;
    let ck = Checkpoint::load(path, component)?;
    if !ck.progress.finished {
        return Err(DressError::MissingArtifact {
            stage: format!("{stage} (interrupted after epoch {})", ck.progress.epoch),
            path: path.to_owned(),
        });
    }
    Ok(ck)
}

fn same_vocab(ck: &Checkpoint, vocab: &Vocab) -> Result<()> {
    if ck.vocab != *vocab {
        return Err(DressError::Checkpoint(format!(
            "{} checkpoint uses a different vocabulary",
            ck.component
        )));
    }
    Ok(())
}

pub fn policy_from(ck: &Checkpoint) -> Result<Seq2SeqParams> {
    let mut p = Seq2SeqParams::zeros(ck.dims)?;
    ck.restore_params(&mut p.store)?;
    Ok(p)
}

pub fn sae_from(ck: &Checkpoint) -> Result<SaeParams> {
    let mut p = SaeParams::zeros(ck.dims)?;
    ck.restore_params(&mut p.store)?;
    Ok(p)
}

pub fn lm_from(ck: &Checkpoint) -> Result<LmParams> {
    let mut p = LmParams::zeros(ck.dims)?;
    ck.restore_params(&mut p.store)?;
    Ok(p)
}

pub fn lexsimp_from(ck: &Checkpoint) -> Result<LexSimpParams> {
    let mut p = LexSimpParams::zeros(LexSimpDims {
        vocab: ck.dims.vocab,
        hidden: ck.dims.hidden,
    })?;
    ck.restore_params(&mut p.store)?;
    Ok(p)
}

/// Load the likelihood-trained policy (`seq2seq`) or the RL policy (`rl`).
pub fn load_policy(path: &Path) -> Result<Seq2SeqParams> {
    let component = Container::load(path)?.component;
    if component != SEQ2SEQ && component != RL {
        return Err(DressError::Checkpoint(format!(
            "{} holds a `{component}` model, not a policy",
            path.display()
        )));
    }
    policy_from(&Checkpoint::load(path, &component)?)
}

// ---------------------------------------------------------------------------
// train-rl / train-lexsimp
// ---------------------------------------------------------------------------

/// REINFORCE over the full curriculum, starting from the likelihood model.
pub fn train_rl(
    ws: &Workspace,
    cfg: &Config,
    sae_path: Option<&Path>,
    lm_path: Option<&Path>,
    stop_after: Option<usize>,
) -> Result<TrainReport> {
    cfg.validate()?;
    let prep = Prepared::load(ws)?;
    let pre = load_finished(ws, SEQ2SEQ, "train --component seq2seq", None)?;
    let sae_ck = load_finished(ws, SAE, "train --component sae", sae_path)?;
    let lm_ck = load_finished(ws, LM, "train --component lm", lm_path)?;
    for ck in [&pre, &sae_ck, &lm_ck] {
        same_vocab(ck, &prep.vocab)?;
    }
    let sae = sae_from(&sae_ck)?;
    let lm = lm_from(&lm_ck)?;
    let ctx = RewardContext {
        sae: &sae,
        lm: &lm,
        weights: cfg.reward_weights(),
    };
    let rl_cfg = cfg.rl();
    let curriculum = cfg.curriculum();
    let train = prep.ids(&prep.train, false);
    let valid = prep.ids(&prep.valid, false);

    let path = ws.checkpoint(RL);
    let (mut params, mut baseline, mut progress) = match resume(&path, RL, cfg, &prep.vocab)? {
        Some(ck) => {
            let b = ck
                .baseline
                .clone()
                .ok_or_else(|| DressError::Checkpoint("RL checkpoint without a baseline".into()))?;
            (policy_from(&ck)?, b, ck.progress)
        }
        None => (
            policy_from(&pre)?,
            Baseline::zeros(2 * pre.dims.hidden),
            Progress {
                epoch: 0,
                log: vec![EpochStats::CSV_HEADER.to_owned()],
                finished: false,
            },
        ),
    };
    let save = |params: &Seq2SeqParams, baseline: &Baseline, progress: &Progress| {
        let mut ck = Checkpoint::new(RL, cfg.to_text(), prep.vocab.clone(), params.dims(), &params.store);
        ck.baseline = Some(baseline.clone());
        ck.progress = progress.clone();
        ck.save(&path)
    };
    let mut ran = 0;
    while !progress.finished && stop_after.is_none_or(|n| ran < n) {
        let e = progress.epoch + 1;
        match curriculum.prefix_len(e)? {
            None => progress.finished = true,
            Some(l) => {
                let mut r = rng::epoch_stream(cfg.seed, RL, e);
                let stats = train_rl_epoch(&mut params, &mut baseline, &train, e, l, &ctx, &rl_cfg, &mut r)?;
                log::info!("rl epoch {}", stats.csv_row());
                progress.log.push(stats.csv_row());
                progress.epoch = e;
                progress.finished = curriculum.prefix_len(e + 1)?.is_none();
                ran += 1;
            }
        }
        save(&params, &baseline, &progress)?;
    }
    if !path.exists() {
        save(&params, &baseline, &progress)?;
    }
    let ck = Checkpoint::load(&path, RL)?;
    let mut summary = json!({});
    if ck.progress.finished {
        let before = mean_greedy_reward(&policy_from(&pre)?, &valid, &ctx, cfg.max_len_factor)?;
        let after = mean_greedy_reward(&params, &valid, &ctx, cfg.max_len_factor)?;
        summary = json!({
            "valid_reward_pretrained": before.total,
            "valid_reward_rl": after.total,
        });
    }
    let mut inputs = Prepared::inputs(ws);
    inputs.push(ws.checkpoint(SEQ2SEQ));
    inputs.push(sae_path.map_or_else(|| ws.checkpoint(SAE), Path::to_owned));
    inputs.push(lm_path.map_or_else(|| ws.checkpoint(LM), Path::to_owned));
    finish_stage(ws, "train-rl", RL, cfg, inputs, &ck, summary)
}

/// Fit the lexical model on attention harvested from the likelihood model.
pub fn train_lexsimp(ws: &Workspace, cfg: &Config, stop_after: Option<usize>) -> Result<TrainReport> {
    cfg.validate()?;
    let prep = Prepared::load(ws)?;
    let pre = load_finished(ws, SEQ2SEQ, "train --component seq2seq", None)?;
    same_vocab(&pre, &prep.vocab)?;
    let policy = policy_from(&pre)?;
    let harvest = |pairs: &[IdPair]| -> Result<Vec<_>> {
        pairs
            .iter()
            .filter(|(_, t)| !t.is_empty())
            .map(|(s, t)| harvest_alignments(&policy, s, t))
            .collect()
    };
    let train = harvest(&prep.ids(&prep.train, false))?;
    let valid = harvest(&prep.ids(&prep.valid, false))?;
    let dims = LexSimpDims {
        vocab: prep.vocab.len(),
        hidden: cfg.hidden,
    };
    let tc = cfg.train(cfg.lexsimp_epochs);
    let path = ws.checkpoint(LEXSIMP);
    let prior = resume(&path, LEXSIMP, cfg, &prep.vocab)?;
    let mut params = LexSimpParams::init(dims, &mut rng::stream(cfg.seed, "lexsimp/init"))?;
    let mut adam = tc.adam(&params.store);
    let mut progress = restore(prior, &mut params.store, &mut adam, "epoch,train_loss,valid_loss")?;
    let ck_dims = Seq2SeqDims {
        vocab: dims.vocab,
        hidden: dims.hidden,
        layers: 1,
    };
    let tokens: usize = train.iter().map(|x| x.targets.len()).sum();
    let mut ran = 0;
    while progress.epoch < cfg.lexsimp_epochs && stop_after.is_none_or(|n| ran < n) {
        let e = progress.epoch + 1;
        let mut r = rng::epoch_stream(cfg.seed, LEXSIMP, e);
        let total = lexsimp_epoch(&mut params, &mut adam, &train, &tc, &mut r)?;
        let row = format!(
            "{e},{:.6},{:.6}",
            total / tokens.max(1) as f64,
            lexsimp_loss(&params, &valid)?
        );
        log::info!("lexsimp epoch {row}");
        progress.log.push(row);
        progress.epoch = e;
        progress.finished = e == cfg.lexsimp_epochs;
        save_progress(&path, LEXSIMP, cfg, &prep, ck_dims, &params.store, &adam, &progress)?;
        ran += 1;
    }
    if !path.exists() {
        save_progress(&path, LEXSIMP, cfg, &prep, ck_dims, &params.store, &adam, &progress)?;
    }
    let ck = Checkpoint::load(&path, LEXSIMP)?;
    let mut inputs = Prepared::inputs(ws);
    inputs.push(ws.checkpoint(SEQ2SEQ));
    finish_stage(ws, "train-lexsimp", LEXSIMP, cfg, inputs, &ck, json!({}))
}

// ---------------------------------------------------------------------------
// simplify / evaluate
// ---------------------------------------------------------------------------

/// Simplify raw sentences: anonymize, decode greedily (mixing in the
/// lexical model when `eta > 0`), replace UNK from attention, de-anonymize.
/// Empty lines stay empty.
pub fn simplify_lines(
    policy: &Seq2SeqParams,
    lex: Option<&LexSimpParams>,
    eta: f64,
    vocab: &Vocab,
    gazetteer: &Gazetteer,
    max_len_factor: f64,
    lines: &[TokenSeq],
) -> Result<Vec<TokenSeq>> {
    if vocab.len() != policy.dims().vocab {
        return Err(DressError::Shape("vocabulary and policy sizes differ".into()));
    }
    let lex = if eta > 0.0 { lex } else { None };
    lines
        .iter()
        .map(|line| {
            if line.is_empty() {
                return Ok(TokenSeq::empty());
            }
            let (anon, map) = anonymize(line, gazetteer);
            let ids = vocab.encode(&anon);
            let out = decode_interpolated(
                policy,
                lex,
                eta,
                &ids,
                max_len_for(ids.len(), max_len_factor),
                DecodeMode::Greedy,
            )?;
            let words = vocab.decode(&out.ids);
            let alphas: Vec<Vec<f64>> = out.steps.iter().map(|s| s.alpha.clone()).collect();
            let filled = unk_replace(&words, &alphas, &anon)?;
            Ok(deanonymize(&filled, &map))
        })
        .collect()
}

pub fn simplify(
    ws: &Workspace,
    cfg: &Config,
    input: &Path,
    output: &Path,
    policy_path: Option<&Path>,
    eta: f64,
) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(DressError::Config(format!("eta = {eta} outside [0, 1]")));
    }
    let prep = Prepared::load(ws)?;
    let default = ws.checkpoint(RL);
    let policy_path = policy_path.unwrap_or(&default);
    require(policy_path, "train-rl")?;
    let policy = load_policy(policy_path)?;
    let mut inputs = vec![
        input.to_owned(),
        policy_path.to_owned(),
        ws.prep_dir().join("vocab.txt"),
    ];
    let lex = if eta > 0.0 {
        let ck = load_finished(ws, LEXSIMP, "train-lexsimp", None)?;
        same_vocab(&ck, &prep.vocab)?;
        inputs.push(ws.checkpoint(LEXSIMP));
        Some(lexsimp_from(&ck)?)
    } else {
        None
    };
    let text = fs::read_to_string(input).map_err(|e| DressError::io(input, e))?;
    let lines: Vec<TokenSeq> = text.lines().map(tokenize).collect();
    let out = simplify_lines(
        &policy,
        lex.as_ref(),
        eta,
        &prep.vocab,
        &prep.gazetteer,
        cfg.max_len_factor,
        &lines,
    )?;
    if let Some(parent) = output.parent() {
        create_dir(parent)?;
    }
    write_lines(output, &out)?;
    write_manifest(
        ws,
        "simplify",
        cfg,
        &inputs,
        &[output.to_owned()],
        json!({"eta": eta, "lines": out.len()}),
    )
}

/// Score `outputs` and write the JSON report to `report`.
pub fn evaluate(
    ws: &Workspace,
    cfg: &Config,
    sources: &Path,
    outputs: &Path,
    refs: &[PathBuf],
    report: &Path,
) -> Result<String> {
    if refs.is_empty() {
        return Err(DressError::InvalidArgument(
            "at least one reference file is needed".into(),
        ));
    }
    let src = read_lines(sources)?;
    let out = read_lines(outputs)?;
    let ref_sets: Vec<Vec<TokenSeq>> = refs.iter().map(|r| read_lines(r)).collect::<Result<_>>()?;
    for (path, lines) in [(sources, src.len()), (outputs, out.len())]
        .into_iter()
        .chain(refs.iter().map(|r| r.as_path()).zip(ref_sets.iter().map(Vec::len)))
    {
        if lines != src.len() {
            return Err(DressError::Alignment(format!(
                "{} has {lines} lines, {} has {}",
                path.display(),
                sources.display(),
                src.len()
            )));
        }
    }
    let per_sentence: Vec<Vec<TokenSeq>> = (0..src.len())
        .map(|i| ref_sets.iter().map(|r| r[i].clone()).collect())
        .collect();
    let json = score_outputs(&src, &out, &per_sentence)?.to_json();
    write_file(report, &json)?;
    let mut inputs = vec![sources.to_owned(), outputs.to_owned()];
    inputs.extend(refs.iter().cloned());
    write_manifest(ws, "evaluate", cfg, &inputs, &[report.to_owned()], json!({}))?;
    Ok(json)
}
