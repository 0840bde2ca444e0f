//! Model checkpoints: parameters, optimizer state, vocabulary, configuration
//! and a per-epoch log, in the tagged container format.

use std::path::Path;

use crate::error::{DressError, Result};
use crate::ndgraph::serialize::{decode_arrays, encode_arrays};
use crate::ndgraph::{Adam, Array, Container, ParamStore};
use crate::reinforce::Baseline;
use crate::seq2seq::Seq2SeqDims;
use crate::textproc::Vocab;

pub const SEQ2SEQ: &str = "seq2seq";
pub const SAE: &str = "sae";
pub const LM: &str = "lm";
pub const RL: &str = "rl";
pub const LEXSIMP: &str = "lexsimp";

/// Training progress stored next to the weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Progress {
    /// Completed epochs.
    pub epoch: usize,
    /// One CSV row per completed epoch, header first.
    pub log: Vec<String>,
    pub finished: bool,
}

impl Progress {
    fn to_text(&self) -> String {
        let mut s = format!("epoch={}\nfinished={}\n", self.epoch, self.finished);
        for row in &self.log {
            s.push_str("log=");
            s.push_str(row);
            s.push('\n');
        }
        s
    }

    fn from_text(text: &str) -> Result<Self> {
        let mut p = Progress::default();
        for line in text.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| DressError::Checkpoint(format!("bad progress line `{line}`")))?;
            match k {
                "epoch" => {
                    p.epoch = v
                        .parse()
                        .map_err(|_| DressError::Checkpoint(format!("bad epoch `{v}`")))?
                }
                "finished" => p.finished = v == "true",
                "log" => p.log.push(v.to_owned()),
                _ => return Err(DressError::Checkpoint(format!("unknown progress key `{k}`"))),
            }
        }
        Ok(p)
    }

    pub fn csv(&self) -> String {
        let mut s = self.log.join("\n");
        s.push('\n');
        s
    }
}

/// Everything one stage saves after each epoch.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub component: String,
    pub config: String,
    pub vocab: Vocab,
    pub dims: Seq2SeqDims,
    pub params: Vec<(String, Array)>,
    pub optim: Option<(u64, Vec<Array>, Vec<Array>)>,
    pub baseline: Option<Baseline>,
    pub progress: Progress,
}

fn dims_text(d: &Seq2SeqDims) -> String {
    format!("vocab={}\nhidden={}\nlayers={}\n", d.vocab, d.hidden, d.layers)
}

fn parse_dims(text: &str) -> Result<Seq2SeqDims> {
    let mut d = Seq2SeqDims {
        vocab: 0,
        hidden: 0,
        layers: 0,
    };
    for line in text.lines() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| DressError::Checkpoint(format!("bad dims line `{line}`")))?;
        let v: usize = v
            .parse()
            .map_err(|_| DressError::Checkpoint(format!("bad dimension `{v}`")))?;
        match k {
            "vocab" => d.vocab = v,
            "hidden" => d.hidden = v,
            "layers" => d.layers = v,
            _ => return Err(DressError::Checkpoint(format!("unknown dimension `{k}`"))),
        }
    }
    Ok(d)
}

fn numbered(prefix: &str, arrays: &[Array]) -> Vec<(String, Array)> {
    arrays
        .iter()
        .enumerate()
        .map(|(i, a)| (format!("{prefix}{i}"), a.clone()))
        .collect()
}

impl Checkpoint {
    pub fn new(component: &str, config: String, vocab: Vocab, dims: Seq2SeqDims, store: &ParamStore) -> Self {
        Checkpoint {
            component: component.to_owned(),
            config,
            vocab,
            dims,
            params: store.named(),
            optim: None,
            baseline: None,
            progress: Progress::default(),
        }
    }

    pub fn with_adam(mut self, adam: &Adam) -> Self {
        let (step, m, v) = adam.state();
        self.optim = Some((step, m.to_vec(), v.to_vec()));
        self
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new(self.component.clone());
        c.put_text("config", &self.config);
        c.put_text("vocab", &self.vocab.to_text());
        c.put_text("dims", &dims_text(&self.dims));
        c.put("params", encode_arrays(&self.params));
        if let Some((step, m, v)) = &self.optim {
            c.put_text("optim_step", &step.to_string());
            let mut arrays = numbered("m", m);
            arrays.extend(numbered("v", v));
            c.put("optim", encode_arrays(&arrays));
        }
        if let Some(b) = &self.baseline {
            c.put(
                "baseline",
                encode_arrays(&[
                    ("weights".to_owned(), Array::vector(b.weights.clone())),
                    ("bias".to_owned(), Array::scalar(b.bias)),
                ]),
            );
        }
        c.put_text("progress", &self.progress.to_text());
        c
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        // Write then rename so an interrupted save never leaves a torn file.
        let tmp = path.with_extension("tmp");
        self.to_container().save(&tmp)?;
        std::fs::rename(&tmp, path).map_err(|e| DressError::io(path, e))
    }

    pub fn load(path: &Path, component: &str) -> Result<Self> {
        let c = Container::load_component(path, component)?;
        let optim = match c.get("optim") {
            None => None,
            Some(bytes) => {
                let step = c
                    .text("optim_step")?
                    .parse()
                    .map_err(|_| DressError::Checkpoint("bad optimizer step".into()))?;
                let arrays = decode_arrays(bytes)?;
                let (m, v): (Vec<_>, Vec<_>) = arrays.into_iter().partition(|(n, _)| n.starts_with('m'));
                Some((
                    step,
                    m.into_iter().map(|x| x.1).collect(),
                    v.into_iter().map(|x| x.1).collect(),
                ))
            }
        };
        let baseline = match c.get("baseline") {
            None => None,
            Some(bytes) => {
                let mut arrays = decode_arrays(bytes)?;
                if arrays.len() != 2 || arrays[0].0 != "weights" || arrays[1].0 != "bias" {
                    return Err(DressError::Checkpoint("malformed baseline section".into()));
                }
                let bias = arrays.pop().expect("two arrays").1.data()[0];
                let weights = arrays.pop().expect("two arrays").1.into_data();
                Some(Baseline { weights, bias })
            }
        };
        Ok(Checkpoint {
            component: component.to_owned(),
            config: c.text("config")?.to_owned(),
            vocab: Vocab::from_text(c.text("vocab")?)?,
            dims: parse_dims(c.text("dims")?)?,
            params: decode_arrays(c.require("params")?)?,
            optim,
            baseline,
            progress: Progress::from_text(c.text("progress")?)?,
        })
    }

    /// Copy the stored weights into `store`.
    pub fn restore_params(&self, store: &mut ParamStore) -> Result<()> {
        store.assign(self.params.clone())
    }

    pub fn restore_adam(&self, adam: &mut Adam) -> Result<()> {
        match &self.optim {
            Some((step, m, v)) => adam.restore(*step, m.clone(), v.clone()),
            None => Err(DressError::Checkpoint("checkpoint has no optimizer state".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::seq2seq::Seq2SeqParams;
    use crate::textproc::{tokenize, ParallelCorpus};

    #[test]
    fn round_trip_with_optimizer_and_baseline() {
        let corpus = ParallelCorpus::new(vec![(tokenize("a a a a b"), tokenize("a a b b b"))]).unwrap();
        let vocab = Vocab::build(&corpus, 3).unwrap();
        let dims = Seq2SeqDims {
            vocab: vocab.len(),
            hidden: 3,
            layers: 1,
        };
        let p = Seq2SeqParams::init(dims, &mut rng::stream(1, "ck")).unwrap();
        let adam = Adam::new(&p.store, 0.01, 0.9, 0.999);
        let mut ck = Checkpoint::new(SEQ2SEQ, "hidden=3\n".into(), vocab, dims, &p.store).with_adam(&adam);
        ck.baseline = Some(Baseline {
            weights: vec![0.5, -1.0],
            bias: 0.25,
        });
        ck.progress.epoch = 2;
        ck.progress.log = vec!["epoch,loss".into(), "1,2.0".into(), "2,1.5".into()];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path, SEQ2SEQ).unwrap();
        assert_eq!(back.params, ck.params);
        assert_eq!(back.optim, ck.optim);
        assert_eq!(back.baseline, ck.baseline);
        assert_eq!(back.progress, ck.progress);
        assert_eq!(back.dims, dims);
        assert_eq!(back.vocab, ck.vocab);
        assert!(Checkpoint::load(&path, SAE).is_err());

        let mut q = Seq2SeqParams::zeros(dims).unwrap();
        back.restore_params(&mut q.store).unwrap();
        assert_eq!(q.store, p.store);
    }
}
