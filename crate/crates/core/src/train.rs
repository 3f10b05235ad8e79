//! Data splitting, AdamW and the mini-batch training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::augment::{self, AugmentedSample, KeywordJudge, ParaphraseProvider, SynonymProvider};
use crate::data::LabeledCorpus;
use crate::eece::EmotionLexicon;
use crate::embedding::ContextualRecord;
use crate::error::{Error, Result};
use crate::model::{Input, Model, ModelConfig};
use crate::params::ParameterStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::text::tokenizer::build_vocab;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Train / dev / test fractions.
    pub ratios: [f64; 3],
    /// Paraphrase candidates requested per masked position.
    pub augment_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 64,
            lr: 1e-3,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 42,
            ratios: [0.8, 0.1, 0.1],
            augment_k: augment::DEFAULT_K,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        for (k, v) in [("lr", self.lr), ("eps", self.eps)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{k} must be positive, got {v}"));
            }
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        for (k, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{k} must lie in [0, 1), got {v}"));
            }
        }
        validate_ratios(&self.ratios)
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let r = &self.ratios;
        vec![
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr", self.lr.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("eps", self.eps.to_string()),
            ("seed", self.seed.to_string()),
            ("ratios", format!("{},{},{}", r[0], r[1], r[2])),
            ("augment_k", self.augment_k.to_string()),
        ]
    }

    /// Sets one key; returns `Ok(false)` when the key is not a training key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        use crate::model::config::parse_value;
        let v = value.trim();
        match key {
            "epochs" => self.epochs = parse_value(key, v)?,
            "batch_size" => self.batch_size = parse_value(key, v)?,
            "lr" => self.lr = parse_value(key, v)?,
            "weight_decay" => self.weight_decay = parse_value(key, v)?,
            "beta1" => self.beta1 = parse_value(key, v)?,
            "beta2" => self.beta2 = parse_value(key, v)?,
            "eps" => self.eps = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "augment_k" => self.augment_k = parse_value(key, v)?,
            "ratios" => {
                let parts: Vec<f64> = v
                    .split(',')
                    .map(|p| parse_value(key, p.trim()))
                    .collect::<Result<_>>()?;
                self.ratios = parts
                    .try_into()
                    .map_err(|_| Error::Config(format!("ratios needs three values, got `{v}`")))?;
            }
            _ => return Ok(false),
        }
        Ok(true)
    }
}

fn validate_ratios(r: &[f64; 3]) -> Result<()> {
    if r.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::Config(format!("split ratios must be positive, got {r:?}")));
    }
    if (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios must sum to 1, got {r:?}")));
    }
    Ok(())
}

/// Seeded shuffle, then `floor(r·n)` samples each to dev and test; the
/// remainder goes to train.
/// Shuffled `(train, dev, test)` index lists over `0..n`. Dev and test get
/// `floor(ratio·n)` items, train the rest.
pub fn split_indices(n: usize, ratios: [f64; 3], seed: u64) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    validate_ratios(&ratios)?;
    if n < 10 {
        return Err(Error::Input(format!("need at least 10 samples to split, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_dev = (ratios[1] * n as f64 + 1e-9).floor() as usize;
    let n_test = (ratios[2] * n as f64 + 1e-9).floor() as usize;
    let test = order.split_off(n - n_test);
    let dev = order.split_off(n - n_test - n_dev);
    Ok((order, dev, test))
}

pub fn split(corpus: &LabeledCorpus, ratios: [f64; 3], seed: u64) -> Result<(LabeledCorpus, LabeledCorpus, LabeledCorpus)> {
    let (tr, dev, test) = split_indices(corpus.len(), ratios, seed)?;
    let pick = |idx: &[usize]| corpus.with_samples(idx.iter().map(|&i| corpus.samples[i].clone()).collect());
    Ok((pick(&tr), pick(&dev), pick(&test)))
}

/// First and second moment estimates, one buffer per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<T: Scalar>(store: &ParameterStore<T>) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        AdamState {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One AdamW update. The decay shrink `θ ← θ(1 − lr·wd)` is applied
/// before and independently of the moment-based step.
pub fn adamw_step<T: Scalar>(
    store: &mut ParameterStore<T>,
    grads: &[Vec<T>],
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    if grads.len() != store.len() || state.m.len() != store.len() {
        return Err(Error::Config(format!(
            "{} gradient buffers and {} moment buffers for {} parameters",
            grads.len(),
            state.m.len(),
            store.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let shrink = 1.0 - cfg.lr * cfg.weight_decay;
    for (i, (name, p)) in store.iter_mut().enumerate() {
        let g = &grads[i];
        if g.len() != p.len() {
            return Err(Error::dim("adamw_step", &[g.len()], p.shape()));
        }
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            let gj = g[j].as_f64();
            if !gj.is_finite() {
                return Err(Error::Numeric(format!("non-finite gradient in `{name}`")));
            }
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            let mhat = m[j] / bc1;
            let vhat = v[j] / bc2;
            let x = w.as_f64() * shrink - cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
            *w = T::lit(x);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    /// `None` when there is no dev set.
    pub dev_accuracy: Option<f64>,
    /// Examples seen this epoch, augmentations included.
    pub examples: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AugmentSummary {
    pub candidates: usize,
    /// Kept by the keyword judge.
    pub retained: usize,
    /// Augmentations active in each epoch after model re-filtering.
    pub active: Vec<usize>,
}

pub struct TrainOutcome<T: Scalar> {
    /// Parameters from the best dev epoch.
    pub model: Model<T>,
    pub history: Vec<EpochRecord>,
    /// 0 when no epoch ran.
    pub best_epoch: usize,
    pub augmentation: Option<AugmentSummary>,
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,loss,dev_acc,examples\n");
    for r in history {
        let dev = r.dev_accuracy.map(|a| a.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", r.epoch, r.loss, dev, r.examples));
    }
    out
}

enum Encoded<T: Scalar> {
    Ids(Vec<u32>),
    Embedded(Tensor<T>),
}

impl<T: Scalar> Encoded<T> {
    fn input(&self) -> Input<'_, T> {
        match self {
            Encoded::Ids(ids) => Input::Ids(ids),
            Encoded::Embedded(e) => Input::Embedded(e),
        }
    }
}

/// Per-sample dropout stream, independent of thread scheduling.
fn sample_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(((epoch as u64) << 32) | index as u64);
    r
}

fn accuracy<T: Scalar>(model: &Model<T>, data: &[(Encoded<T>, usize)]) -> Result<f64> {
    let correct = data
        .par_iter()
        .map(|(x, y)| model.predict(x.input()).map(|p| (p.class == *y) as usize))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(correct as f64 / data.len() as f64)
}

/// One pass over `data` in seeded order; returns the mean loss.
fn run_epoch<T: Scalar>(
    model: &mut Model<T>,
    data: &[(&Encoded<T>, usize)],
    state: &mut AdamState,
    tcfg: &TrainConfig,
    epoch: usize,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(tcfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
    let mut total = 0.0;
    for batch in order.chunks(tcfg.batch_size) {
        let m = &*model;
        let results = batch
            .par_iter()
            .map(|&i| {
                let (x, y) = data[i];
                let mut rng = sample_rng(tcfg.seed, epoch, i);
                m.loss_and_grads(x.input(), y, Some(&mut rng))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut results = results.into_iter();
        let (first_loss, mut sum) = results.next().expect("non-empty batch");
        total += first_loss;
        for (loss, grads) in &mut results {
            total += loss;
            for (acc, g) in sum.iter_mut().zip(&grads) {
                for (a, &b) in acc.iter_mut().zip(g) {
                    *a += b;
                }
            }
        }
        let inv = T::lit(1.0 / batch.len() as f64);
        for acc in &mut sum {
            for a in acc.iter_mut() {
                *a *= inv;
            }
        }
        adamw_step(&mut model.params, &sum, state, tcfg)?;
    }
    Ok(total / data.len() as f64)
}

/// Shared loop. `refilter` picks which augmentations are active from the
/// second epoch on, given the current model.
fn fit<T: Scalar>(
    mut model: Model<T>,
    tcfg: &TrainConfig,
    base: &[(Encoded<T>, usize)],
    extra: &[(Encoded<T>, usize)],
    dev: &[(Encoded<T>, usize)],
    refilter: &dyn Fn(&Model<T>) -> Result<Vec<bool>>,
    mut summary: Option<AugmentSummary>,
) -> Result<TrainOutcome<T>> {
    tcfg.validate()?;
    if base.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    let mut state = AdamState::new(&model.params);
    let mut history = Vec::with_capacity(tcfg.epochs);
    let mut best: Option<(f64, usize, ParameterStore<T>)> = None;
    for epoch in 1..=tcfg.epochs {
        let keep = if epoch == 1 { vec![true; extra.len()] } else { refilter(&model)? };
        let data: Vec<(&Encoded<T>, usize)> = base
            .iter()
            .chain(extra.iter().zip(&keep).filter(|(_, &k)| k).map(|(x, _)| x))
            .map(|(x, y)| (x, *y))
            .collect();
        if let Some(s) = summary.as_mut() {
            s.active.push(data.len() - base.len());
        }
        let loss = run_epoch(&mut model, &data, &mut state, tcfg, epoch)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("loss diverged in epoch {epoch}")));
        }
        let dev_accuracy = if dev.is_empty() { None } else { Some(accuracy(&model, dev)?) };
        history.push(EpochRecord {
            epoch,
            loss,
            dev_accuracy,
            examples: data.len(),
        });
        let score = dev_accuracy.unwrap_or(f64::NEG_INFINITY);
        if dev.is_empty() || best.as_ref().is_none_or(|(b, _, _)| score > *b) {
            best = Some((score, epoch, model.params.clone()));
        }
    }
    let best_epoch = match best {
        Some((_, e, params)) => {
            model.params = params;
            e
        }
        None => 0,
    };
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        augmentation: summary,
    })
}

/// Trains on text. With augmentation on, candidates for the training split
/// are generated once, kept by the keyword judge for the first epoch and
/// re-judged by the current model before every later epoch.
pub fn train<T: Scalar>(
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    train: &LabeledCorpus,
    dev: &LabeledCorpus,
    lexicon: &EmotionLexicon,
    provider: Option<&dyn ParaphraseProvider>,
) -> Result<TrainOutcome<T>> {
    tcfg.validate()?;
    cfg.validate()?;
    if cfg.contextual {
        return Err(Error::Config("contextual models train from embedding records".into()));
    }
    if train.num_classes() != cfg.classes {
        return Err(Error::Config(format!(
            "corpus has {} classes, model {}",
            train.num_classes(),
            cfg.classes
        )));
    }
    if !cfg.use_sea {
        return train_with_pool(cfg, tcfg, train, dev, lexicon, Vec::new(), None);
    }
    let provider = provider.unwrap_or(&SynonymProvider);
    let judge = KeywordJudge::new(cfg.classes);
    let report = augment::augment_corpus(train, provider, tcfg.augment_k, &judge, tcfg.seed)?;
    let summary = AugmentSummary {
        candidates: report.candidates,
        retained: report.augmented.len(),
        active: Vec::new(),
    };
    train_with_pool(cfg, tcfg, train, dev, lexicon, report.augmented, Some(summary))
}

fn train_with_pool<T: Scalar>(
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    train: &LabeledCorpus,
    dev: &LabeledCorpus,
    lexicon: &EmotionLexicon,
    pool: Vec<AugmentedSample>,
    summary: Option<AugmentSummary>,
) -> Result<TrainOutcome<T>> {
    let probe = Model::<T>::new(
        ModelConfig {
            contextual: true,
            ..cfg.clone()
        },
        None,
        lexicon.clone(),
        tcfg.seed,
    )?;
    let texts: Vec<String> = train
        .samples
        .iter()
        .map(|s| s.text.as_str())
        .chain(pool.iter().map(|a| a.text.as_str()))
        .map(|t| probe.condition(t))
        .collect::<Result<_>>()?;
    let vocab = build_vocab(&texts, cfg.vocab_size)?;
    let model = Model::<T>::new(cfg.clone(), Some(vocab), lexicon.clone(), tcfg.seed)?;
    let encode = |samples: &mut dyn Iterator<Item = (&str, usize)>| -> Result<Vec<(Encoded<T>, usize)>> {
        samples.map(|(t, y)| Ok((Encoded::Ids(model.encode(t)?), y))).collect()
    };
    let base = encode(&mut train.samples.iter().map(|s| (s.text.as_str(), s.label)))?;
    let extra = encode(&mut pool.iter().map(|a| (a.text.as_str(), a.label)))?;
    let dev_set = encode(&mut dev.samples.iter().map(|s| (s.text.as_str(), s.label)))?;
    let refilter = |m: &Model<T>| -> Result<Vec<bool>> {
        pool.par_iter()
            .zip(extra.par_iter())
            .map(|(a, (x, _))| Ok(m.predict(x.input())?.class == a.label))
            .collect()
    };
    fit(model, tcfg, &base, &extra, &dev_set, &refilter, summary)
}

/// Trains on precomputed token embeddings; augmentation does not apply.
pub fn train_contextual<T: Scalar>(
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    train: &[ContextualRecord],
    dev: &[ContextualRecord],
    lexicon: &EmotionLexicon,
) -> Result<TrainOutcome<T>> {
    if !cfg.contextual {
        return Err(Error::Config("model expects token ids, not embedding records".into()));
    }
    let model = Model::<T>::new(cfg.clone(), None, lexicon.clone(), tcfg.seed)?;
    let base = encode_records(train, cfg.classes)?;
    let dev_set = encode_records(dev, cfg.classes)?;
    fit(model, tcfg, &base, &[], &dev_set, &|_| Ok(Vec::new()), None)
}

fn encode_records<T: Scalar>(records: &[ContextualRecord], classes: usize) -> Result<Vec<(Encoded<T>, usize)>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let y = usize::try_from(r.label)
                .ok()
                .filter(|&y| y < classes)
                .ok_or_else(|| Error::Label(format!("record {i} has label {} for {classes} classes", r.label)))?;
            Ok((Encoded::Embedded(r.embeddings.cast()), y))
        })
        .collect()
}
