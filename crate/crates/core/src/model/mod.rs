//! Variant assembly: embeddings, local encoder, contextual encoder, stream
//! fusion and the softmax head.

pub mod config;

use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::autograd::{Bindings, Graph, Var};
use crate::eece::{self, EeceConfig, EeceOutput, EmotionLexicon, Modulation, NegationRules};
use crate::error::{Error, Result};
use crate::layers::{as_row, dropout, linear};
use crate::params::ParameterStore;
use crate::sade::{self, SadeConfig};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::text::instruction::{apply_instruction, InstructionTemplate};
use crate::text::tokenizer::{tokenize, Vocab};

pub use config::{Fusion, HeadInput, LocalEncoder, ModelConfig, Variant, STANDARD_CONV_KERNEL};

pub const EMBED_TABLE: &str = "embed.table";
pub const LOCAL_PREFIX: &str = "sade";
pub const CONV_WEIGHT: &str = "conv.weight";
pub const CONV_BIAS: &str = "conv.bias";
pub const HEAD_WEIGHT: &str = "head.weight";
pub const HEAD_BIAS: &str = "head.bias";

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub class: usize,
}

impl Prediction {
    /// Argmax with ties to the lowest index.
    pub fn from_probs(probs: Vec<f64>) -> Self {
        let class = argmax(&probs);
        Prediction { probs, class }
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Token ids, or precomputed contextual embeddings `[n×d]`.
#[derive(Clone, Copy, Debug)]
pub enum Input<'s, T: Scalar> {
    Ids(&'s [u32]),
    Embedded(&'s Tensor<T>),
}

impl<T: Scalar> Input<'_, T> {
    pub fn len(&self) -> usize {
        match self {
            Input::Ids(ids) => ids.len(),
            Input::Embedded(t) => t.shape().first().copied().unwrap_or(0),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FusionOutput {
    pub out: Var,
    /// `[1×2]` stream weights (attention fusion only).
    pub weights: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct Forward {
    pub e: Var,
    /// Averaged depthwise features before projection.
    pub v_pre: Option<Var>,
    pub v: Option<Var>,
    pub eece: Option<EeceOutput>,
    pub fusion: Option<FusionOutput>,
    /// Classifier input `[1×f]`.
    pub features: Var,
    pub logits: Var,
    pub probs: Var,
}

/// Combines pooled local `[1×c]` and contextual `[1×2h]` vectors.
///
/// Both are projected to width `f`. Summation adds the projections; attention
/// scores each projection with a shared vector, softmaxes the two scores and
/// returns twice the weighted mean, so identical projections give the same
/// output under both modes.
pub fn fuse_streams<T: Scalar>(
    g: &mut Graph<'_, T>,
    b: &Bindings,
    v_pooled: Var,
    h_pooled: Var,
    mode: Fusion,
) -> Result<FusionOutput> {
    if mode == Fusion::Sequential {
        return Err(Error::Config("sequential mode has no stream fusion".into()));
    }
    let pv = linear(g, v_pooled, b.get("fusion.proj_v.weight")?, b.get("fusion.proj_v.bias")?)?;
    let ph = linear(g, h_pooled, b.get("fusion.proj_h.weight")?, b.get("fusion.proj_h.bias")?)?;
    match mode {
        Fusion::Summation => Ok(FusionOutput {
            out: g.add(pv, ph)?,
            weights: None,
        }),
        _ => {
            let a = b.get("fusion.score")?;
            let f = g.value(a).len();
            let col = g.reshape(a, &[f, 1])?;
            let sv = g.matmul(pv, col)?;
            let sh = g.matmul(ph, col)?;
            let scores = g.concat_cols(&[sv, sh])?;
            let w = g.softmax_rows(scores)?;
            let (wv, wh) = (g.select(w, 0)?, g.select(w, 1)?);
            let a = g.scale_by(pv, wv)?;
            let c = g.scale_by(ph, wh)?;
            let s = g.add(a, c)?;
            Ok(FusionOutput {
                out: g.scale(s, T::lit(2.0)),
                weights: Some(w),
            })
        }
    }
}

/// `softmax(W_o·f + b_o)`; returns `(logits, probs)`, both `[1×C]`.
pub fn predict_head<T: Scalar>(g: &mut Graph<'_, T>, features: Var, w: Var, bias: Var) -> Result<(Var, Var)> {
    let f = as_row(g, features)?;
    let logits = linear(g, f, w, bias)?;
    let probs = g.softmax_rows(logits)?;
    Ok((logits, probs))
}

/// Cross-entropy of `probs` against class `label`.
pub fn loss<T: Scalar>(g: &mut Graph<'_, T>, probs: Var, label: usize) -> Result<Var> {
    let c = g.value(probs).len();
    if label >= c {
        return Err(Error::Label(format!("label {label} out of range for {c} classes")));
    }
    let mut onehot = vec![T::zero(); c];
    onehot[label] = T::one();
    g.cross_entropy(probs, &onehot)
}

fn sade_config(cfg: &ModelConfig) -> Result<SadeConfig> {
    SadeConfig::new(&cfg.kernels, cfg.d, cfg.c)
}

fn eece_config(cfg: &ModelConfig) -> EeceConfig {
    EeceConfig {
        input: cfg.eece_input(),
        d: cfg.d,
        h: cfg.h,
        d_a: cfg.d_a,
        emotions: cfg.emotions,
        gate_on: cfg.gate_on,
    }
}

/// Exact parameter count for `cfg` with a vocabulary of `vocab_len` tokens.
pub fn param_count(cfg: &ModelConfig, vocab_len: usize) -> Result<usize> {
    let mut n = 0;
    if !cfg.contextual {
        n += vocab_len * cfg.d;
    }
    if cfg.has_local() {
        n += match cfg.local_encoder {
            LocalEncoder::Depthwise => sade_config(cfg)?.param_count(),
            LocalEncoder::StandardConv => cfg.c * cfg.d * STANDARD_CONV_KERNEL + cfg.c,
        };
    }
    if cfg.has_eece() {
        n += eece_config(cfg).param_count();
    }
    if cfg.parallel_fusion() {
        let f = cfg.fusion_width;
        n += f * cfg.c + f + f * 2 * cfg.h + f;
        if cfg.fusion == Fusion::AttentionStack {
            n += f;
        }
    }
    Ok(n + cfg.classes * cfg.head_width() + cfg.classes)
}

/// `[m×k]·[k×p]`, one multiply-accumulate counted as 2.
pub fn matmul_flops(m: usize, k: usize, p: usize) -> u64 {
    2 * (m * k * p) as u64
}

/// Forward FLOPs for a sequence of `n` tokens (matrix products, MAC = 2).
pub fn flops(cfg: &ModelConfig, n: usize) -> Result<u64> {
    let nn = n as u64;
    let mut total = 0;
    if cfg.has_local() {
        total += match cfg.local_encoder {
            LocalEncoder::Depthwise => sade::sade_flops(&sade_config(cfg)?, n),
            LocalEncoder::StandardConv => {
                2 * nn * (cfg.d * STANDARD_CONV_KERNEL * cfg.c) as u64
            }
        };
    }
    if cfg.has_eece() {
        total += eece_config(cfg).flops(n);
    }
    if cfg.parallel_fusion() {
        let f = cfg.fusion_width as u64;
        total += 2 * (cfg.c as u64) * f + 2 * (2 * cfg.h as u64) * f;
        if cfg.fusion == Fusion::AttentionStack {
            total += 2 * 2 * f;
        }
    }
    Ok(total + 2 * (cfg.head_width() * cfg.classes) as u64)
}

#[derive(Clone, Debug)]
pub struct Model<T: Scalar> {
    pub cfg: ModelConfig,
    pub params: ParameterStore<T>,
    /// Absent when embeddings come from a contextual file.
    pub vocab: Option<Vocab>,
    pub lexicon: EmotionLexicon,
    pub rules: NegationRules,
}

impl<T: Scalar> Model<T> {
    /// Builds and initialises every parameter from `seed`.
    pub fn new(cfg: ModelConfig, vocab: Option<Vocab>, lexicon: EmotionLexicon, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if cfg.emotions != lexicon.emotions.len() {
            return Err(Error::Config(format!(
                "config has {} emotions, lexicon {}",
                cfg.emotions,
                lexicon.emotions.len()
            )));
        }
        if cfg.contextual == vocab.is_some() {
            return Err(Error::Config(
                "a vocabulary is required exactly when embeddings come from a table".into(),
            ));
        }
        let mut p = ParameterStore::new(seed);
        if let Some(v) = &vocab {
            p.init_uniform(EMBED_TABLE, &[v.len(), cfg.d], cfg.d)?;
        }
        if cfg.has_local() {
            match cfg.local_encoder {
                LocalEncoder::Depthwise => sade::init_sade(&mut p, LOCAL_PREFIX, &sade_config(&cfg)?)?,
                LocalEncoder::StandardConv => {
                    let fan = cfg.d * STANDARD_CONV_KERNEL;
                    p.init_uniform(CONV_WEIGHT, &[cfg.c, cfg.d, STANDARD_CONV_KERNEL], fan)?;
                    p.init_uniform(CONV_BIAS, &[cfg.c], fan)?;
                }
            }
        }
        if cfg.has_eece() {
            eece::init_eece(&mut p, &eece_config(&cfg))?;
            if let Some(v) = &vocab {
                seed_prototypes(&mut p, v, &lexicon, cfg.d)?;
            }
        }
        if cfg.parallel_fusion() {
            let f = cfg.fusion_width;
            p.init_uniform("fusion.proj_v.weight", &[f, cfg.c], cfg.c)?;
            p.init_uniform("fusion.proj_v.bias", &[f], cfg.c)?;
            p.init_uniform("fusion.proj_h.weight", &[f, 2 * cfg.h], 2 * cfg.h)?;
            p.init_uniform("fusion.proj_h.bias", &[f], 2 * cfg.h)?;
            if cfg.fusion == Fusion::AttentionStack {
                p.init_uniform("fusion.score", &[f], f)?;
            }
        }
        let hw = cfg.head_width();
        p.init_uniform(HEAD_WEIGHT, &[cfg.classes, hw], hw)?;
        p.init_uniform(HEAD_BIAS, &[cfg.classes], hw)?;

        let rules = match &vocab {
            Some(v) => NegationRules::from_lexicon(&lexicon, v)?,
            None => NegationRules::inert(),
        };
        Ok(Model {
            cfg,
            params: p,
            vocab,
            lexicon,
            rules,
        })
    }

    pub fn num_params(&self) -> usize {
        self.params.num_params()
    }

    /// Text as the model sees it: with the domain directive when
    /// instructions are on.
    pub fn condition(&self, text: &str) -> Result<String> {
        if self.cfg.use_ci {
            apply_instruction(text, Some(&self.cfg.domain), &InstructionTemplate::plain(), None, None)
        } else {
            Ok(text.to_string())
        }
    }

    pub fn encode(&self, text: &str) -> Result<Vec<u32>> {
        let vocab = self
            .vocab
            .as_ref()
            .ok_or_else(|| Error::Config("model reads contextual embeddings, not text".into()))?;
        tokenize(&self.condition(text)?, vocab, self.cfg.max_len)
    }

    /// Builds the forward graph. Dropout is applied when `train_rng` is given.
    pub fn forward<'a>(
        &self,
        g: &mut Graph<'a, T>,
        b: &Bindings,
        input: Input<'_, T>,
        mut train_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Forward> {
        let cfg = &self.cfg;
        let n = input.len();
        if n == 0 {
            return Err(Error::EmptySequence("model input"));
        }
        if n > cfg.max_len {
            return Err(Error::Config(format!("sequence of {n} tokens exceeds max_len {}", cfg.max_len)));
        }
        let (mut e, pattern) = match input {
            Input::Ids(ids) => {
                let table = b.get(EMBED_TABLE)?;
                let idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
                (g.embed(table, &idx)?, eece::modulation_pattern(ids, &self.rules))
            }
            Input::Embedded(t) => {
                if t.rank() != 2 || t.shape()[1] != cfg.d {
                    return Err(Error::dim("model input", t.shape(), &[n, cfg.d]));
                }
                (g.constant(t.clone()), vec![Modulation::Keep; n])
            }
        };
        if let Some(rng) = train_rng.as_deref_mut() {
            e = dropout(g, e, cfg.dropout, rng)?;
        }

        let (mut v_pre, mut v) = (None, None);
        if cfg.has_local() {
            match cfg.local_encoder {
                LocalEncoder::Depthwise => {
                    let out = sade::sade_forward(g, b, LOCAL_PREFIX, &sade_config(cfg)?, e)?;
                    v_pre = Some(out.v_pre);
                    v = Some(out.v);
                }
                LocalEncoder::StandardConv => {
                    let y = g.conv1d(e, b.get(CONV_WEIGHT)?, b.get(CONV_BIAS)?, STANDARD_CONV_KERNEL)?;
                    v = Some(y);
                }
            }
        }

        let mut eece_out = None;
        if cfg.has_eece() {
            let lstm_in = match (v, cfg.fusion) {
                (Some(v), Fusion::Sequential) => v,
                _ => e,
            };
            eece_out = Some(eece::eece_forward(
                g,
                b,
                &eece_config(cfg),
                lstm_in,
                e,
                &pattern,
                self.rules.lambda,
            )?);
        }

        let contextual_pooled = |g: &mut Graph<'a, T>, out: &EeceOutput| -> Result<Var> {
            match cfg.head_input {
                HeadInput::MaxPool => {
                    let m = g.max_over_time(out.fused.h_tilde)?;
                    as_row(g, m)
                }
                HeadInput::Context => Ok(out.fused.c_tilde),
            }
        };

        let mut fusion = None;
        let mut features = match (v, &eece_out) {
            (Some(v), Some(out)) if cfg.parallel_fusion() => {
                let vp = g.max_over_time(v)?;
                let vp = as_row(g, vp)?;
                let hp = contextual_pooled(g, out)?;
                let f = fuse_streams(g, b, vp, hp, cfg.fusion)?;
                fusion = Some(f);
                f.out
            }
            (_, Some(out)) => contextual_pooled(g, out)?,
            (Some(v), None) => {
                let m = g.max_over_time(v)?;
                as_row(g, m)?
            }
            (None, None) => unreachable!("every variant has an encoder"),
        };
        if let Some(rng) = train_rng {
            features = dropout(g, features, cfg.dropout, rng)?;
        }
        let (logits, probs) = predict_head(g, features, b.get(HEAD_WEIGHT)?, b.get(HEAD_BIAS)?)?;
        Ok(Forward {
            e,
            v_pre,
            v,
            eece: eece_out,
            fusion,
            features,
            logits,
            probs,
        })
    }

    /// Eval-mode prediction.
    pub fn predict(&self, input: Input<'_, T>) -> Result<Prediction> {
        let mut g = Graph::new();
        let b = g.bind(&self.params);
        let f = self.forward(&mut g, &b, input, None)?;
        let probs = g.value(f.probs).data().iter().map(|p| p.as_f64()).collect();
        Ok(Prediction::from_probs(probs))
    }

    pub fn predict_text(&self, text: &str) -> Result<Prediction> {
        let ids = self.encode(text)?;
        self.predict(Input::Ids(&ids))
    }

    /// Training-mode loss and per-parameter gradients for one sample.
    pub fn loss_and_grads(
        &self,
        input: Input<'_, T>,
        label: usize,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, Vec<Vec<T>>)> {
        let mut g = Graph::new();
        let b = g.bind(&self.params);
        let f = self.forward(&mut g, &b, input, rng)?;
        let l = loss(&mut g, f.probs, label)?;
        let value = g.value(l).data()[0].as_f64();
        g.backward(l)?;
        Ok((value, g.into_leaf_grads(&b)))
    }

    pub fn flops(&self, n: usize) -> Result<u64> {
        flops(&self.cfg, n)
    }

    /// Writes `model.cfg`, `model.ckpt`, `emotions.lex` and, for table
    /// embeddings, `vocab.txt` into `dir`.
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("model.cfg"), self.cfg.to_text())?;
        std::fs::write(dir.join("emotions.lex"), self.lexicon.to_text())?;
        if let Some(v) = &self.vocab {
            v.save(dir.join("vocab.txt"))?;
        }
        self.params.save(dir.join("model.ckpt"))
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let cfg = ModelConfig::from_text(&std::fs::read_to_string(dir.join("model.cfg"))?)?;
        let lexicon = EmotionLexicon::load(dir.join("emotions.lex"))?;
        let vocab = if cfg.contextual {
            None
        } else {
            Some(Vocab::load(dir.join("vocab.txt"))?)
        };
        let mut model = Model::new(cfg, vocab, lexicon, 0)?;
        let stored = ParameterStore::<T>::load(dir.join("model.ckpt"))?;
        if stored.len() != model.params.len() {
            return Err(Error::Format {
                offset: 0,
                msg: format!("checkpoint has {} tensors, model {}", stored.len(), model.params.len()),
            });
        }
        model.params.assign_from(&stored)?;
        Ok(model)
    }
}

/// Prototype `e` becomes the mean embedding of its in-vocabulary seed words.
fn seed_prototypes<T: Scalar>(
    p: &mut ParameterStore<T>,
    vocab: &Vocab,
    lexicon: &EmotionLexicon,
    d: usize,
) -> Result<()> {
    let table = p.get(EMBED_TABLE)?.clone();
    let protos = p.get_mut(&eece::name("emotion.prototypes"))?;
    for (e, (_, seeds)) in lexicon.emotions.iter().enumerate() {
        let rows: Vec<usize> = seeds.iter().filter_map(|w| vocab.id(w)).map(|i| i as usize).collect();
        if rows.is_empty() {
            continue;
        }
        let mut mean = vec![T::zero(); d];
        for &r in &rows {
            for (m, &x) in mean.iter_mut().zip(table.row(r)) {
                *m += x;
            }
        }
        let inv = T::lit(1.0 / rows.len() as f64);
        if mean.iter().any(|m| *m != T::zero()) {
            for (dst, m) in protos.data_mut()[e * d..(e + 1) * d].iter_mut().zip(mean) {
                *dst = m * inv;
            }
        }
    }
    Ok(())
}
