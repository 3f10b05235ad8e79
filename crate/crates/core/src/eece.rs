//! Emotion evaluator context encoder: BiLSTM, additive attention, emotion
//! projection, prototype compatibility, negation-aware modulation and a gated
//! residual fusion of the emotion signal into the hidden states.

use std::path::Path;

use crate::autograd::{Bindings, Graph, Var};
use crate::error::{Error, Result};
use crate::layers::{as_row, linear};
use crate::lexicon::DEFAULT_EMOTION_LEXICON;
use crate::params::ParameterStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::text::tokenizer::{words, Vocab};

pub const PREFIX: &str = "eece";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EeceConfig {
    /// Width of the BiLSTM input rows.
    pub input: usize,
    /// Token embedding width (prototype width).
    pub d: usize,
    /// Hidden size per direction.
    pub h: usize,
    pub d_a: usize,
    pub emotions: usize,
    pub gate_on: bool,
}

impl EeceConfig {
    pub fn validate(&self) -> Result<()> {
        if [self.input, self.d, self.h, self.d_a, self.emotions].contains(&0) {
            return Err(Error::Config(format!("EECE widths must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let (i, d, h, a, e) = (self.input, self.d, self.h, self.d_a, self.emotions);
        let lstm = 2 * (4 * h * i + 4 * h * h + 4 * h);
        let attn = a * 2 * h + 2 * a;
        let emo = e * 2 * h + e + e * d + e;
        let gate = 2 * h + 1;
        lstm + attn + emo + gate
    }

    /// Forward FLOPs over `n` steps (matrix products only, MAC = 2).
    pub fn flops(&self, n: usize) -> u64 {
        let (n, i, d, h, a, e) = (
            n as u64,
            self.input as u64,
            self.d as u64,
            self.h as u64,
            self.d_a as u64,
            self.emotions as u64,
        );
        let lstm = 2 * n * 2 * 4 * h * (i + h);
        let attn = 2 * n * 2 * h * a + 2 * n * a + 2 * n * 2 * h;
        let emo = 2 * n * 2 * h * e + 2 * n * d * e;
        let fuse = 2 * n * e + if self.gate_on { 2 * n * 2 * h } else { 0 } + 2 * n * 2 * h;
        lstm + attn + emo + fuse
    }
}

pub fn name(part: &str) -> String {
    format!("{PREFIX}.{part}")
}

pub fn init_eece<T: Scalar>(store: &mut ParameterStore<T>, cfg: &EeceConfig) -> Result<()> {
    cfg.validate()?;
    let (i, h) = (cfg.input, cfg.h);
    for dir in ["fwd", "bwd"] {
        store.init_uniform(&name(&format!("lstm.{dir}.w_ih")), &[4 * h, i], h)?;
        store.init_uniform(&name(&format!("lstm.{dir}.w_hh")), &[4 * h, h], h)?;
        store.init_uniform(&name(&format!("lstm.{dir}.bias")), &[4 * h], h)?;
    }
    store.init_uniform(&name("attn.w"), &[cfg.d_a, 2 * h], 2 * h)?;
    store.init_uniform(&name("attn.b"), &[cfg.d_a], 2 * h)?;
    store.init_uniform(&name("attn.v"), &[cfg.d_a], cfg.d_a)?;
    store.init_uniform(&name("emotion.w"), &[cfg.emotions, 2 * h], 2 * h)?;
    store.init_uniform(&name("emotion.b"), &[cfg.emotions], 2 * h)?;
    store.init_uniform(&name("emotion.prototypes"), &[cfg.emotions, cfg.d], cfg.d)?;
    store.insert(&name("emotion.logits"), Tensor::zeros(&[cfg.emotions]))?;
    store.init_uniform(&name("gate.w"), &[1, 2 * h], 2 * h)?;
    store.init_uniform(&name("gate.b"), &[1], 2 * h)
}

// ---- BiLSTM ---------------------------------------------------------------

/// `H[n×2h]`: row `t` is `[→h_t; ←h_t]`, zero initial states, gate order
/// `i, f, g, o`.
pub fn bilstm_forward<T: Scalar>(g: &mut Graph<'_, T>, b: &Bindings, h: usize, v: Var) -> Result<Var> {
    let shape = g.shape(v).to_vec();
    if shape.len() != 2 || shape[0] == 0 {
        return Err(Error::EmptySequence("bilstm_forward"));
    }
    let mut dirs = Vec::with_capacity(2);
    for (dir, reverse) in [("fwd", false), ("bwd", true)] {
        let w_ih = b.get(&name(&format!("lstm.{dir}.w_ih")))?;
        let w_hh = b.get(&name(&format!("lstm.{dir}.w_hh")))?;
        let bias = b.get(&name(&format!("lstm.{dir}.bias")))?;
        let in_w = g.shape(w_ih)[1];
        if in_w != shape[1] {
            return Err(Error::dim("bilstm_forward", &shape, g.shape(w_ih)));
        }
        let xwb = linear(g, v, w_ih, bias)?;
        if g.shape(w_hh) != [4 * h, h] {
            return Err(Error::dim("bilstm_forward", &[4 * h, h], g.shape(w_hh)));
        }
        dirs.push(g.lstm_direction(xwb, w_hh, reverse)?);
    }
    g.concat_cols(&dirs)
}

// ---- attention and emotion space -------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct Attention {
    /// `[1×n]`, on the simplex.
    pub alpha: Var,
    /// `[1×2h]`.
    pub context: Var,
}

/// `α = softmax_t(v_aᵀ tanh(W_a h_t + b_a))`, `c = Σ_t α_t h_t`.
pub fn attention_pool<T: Scalar>(g: &mut Graph<'_, T>, b: &Bindings, hmat: Var) -> Result<Attention> {
    let u = linear(g, hmat, b.get(&name("attn.w"))?, b.get(&name("attn.b"))?)?;
    let u = g.tanh(u);
    let va = b.get(&name("attn.v"))?;
    let da = g.value(va).len();
    let va_row = g.reshape(va, &[1, da])?;
    let scores = g.matmul_nt(u, va_row)?;
    let n = g.shape(scores)[0];
    let scores = g.reshape(scores, &[1, n])?;
    let alpha = g.softmax_rows(scores)?;
    let context = g.matmul(alpha, hmat)?;
    Ok(Attention { alpha, context })
}

/// Row-wise `softmax(W_e h_t + b_e)`, `[n×|E|]`.
pub fn emotion_project<T: Scalar>(g: &mut Graph<'_, T>, b: &Bindings, hmat: Var) -> Result<Var> {
    let z = linear(g, hmat, b.get(&name("emotion.w"))?, b.get(&name("emotion.b"))?)?;
    g.softmax_rows(z)
}

/// Cosine between each token embedding and each prototype, `[n×|E|]`.
pub fn emotion_compatibility<T: Scalar>(g: &mut Graph<'_, T>, b: &Bindings, e_tok: Var) -> Result<Var> {
    let p = b.get(&name("emotion.prototypes"))?;
    g.cosine_rows(e_tok, p)
}

// ---- negation rules ----------------------------------------------------------

/// Emotion seed words plus negation/hedge cue lists, as read from a lexicon
/// file of `label: word word …` lines.
#[derive(Clone, Debug, PartialEq)]
pub struct EmotionLexicon {
    pub emotions: Vec<(String, Vec<String>)>,
    pub negation: Vec<String>,
    pub hedge: Vec<String>,
    pub window: usize,
    pub lambda: f64,
}

impl Default for EmotionLexicon {
    fn default() -> Self {
        EmotionLexicon::parse(DEFAULT_EMOTION_LEXICON).expect("shipped lexicon parses")
    }
}

impl EmotionLexicon {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lex = EmotionLexicon {
            emotions: Vec::new(),
            negation: Vec::new(),
            hedge: Vec::new(),
            window: 3,
            lambda: 0.5,
        };
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, rest) = line.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected `label: words`, got `{line}`"),
            })?;
            let key = key.trim();
            let items: Vec<String> = rest.split_whitespace().map(str::to_lowercase).collect();
            let bad = |msg: String| Error::Parse { line: line_no, msg };
            match key {
                "negation" => lex.negation = items,
                "hedge" => lex.hedge = items,
                "window" => {
                    lex.window = rest
                        .trim()
                        .parse()
                        .map_err(|_| bad(format!("bad window `{}`", rest.trim())))?
                }
                "lambda" => {
                    lex.lambda = rest
                        .trim()
                        .parse()
                        .map_err(|_| bad(format!("bad lambda `{}`", rest.trim())))?
                }
                "" => return Err(bad("empty emotion label".into())),
                label => {
                    if lex.emotions.iter().any(|(l, _)| l == label) {
                        return Err(bad(format!("emotion `{label}` listed twice")));
                    }
                    lex.emotions.push((label.to_string(), items));
                }
            }
        }
        if lex.emotions.is_empty() {
            return Err(Error::Parse {
                line: 0,
                msg: "lexicon defines no emotions".into(),
            });
        }
        if lex.window == 0 || !(lex.lambda > 0.0 && lex.lambda < 1.0) {
            return Err(Error::Config(format!(
                "need window ≥ 1 and 0 < lambda < 1 (window={}, lambda={})",
                lex.window, lex.lambda
            )));
        }
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Inverse of [`EmotionLexicon::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (label, seeds) in &self.emotions {
            out.push_str(&format!("{label}: {}\n", seeds.join(" ")));
        }
        out.push_str(&format!("negation: {}\n", self.negation.join(" ")));
        out.push_str(&format!("hedge: {}\n", self.hedge.join(" ")));
        out.push_str(&format!("window: {}\nlambda: {}\n", self.window, self.lambda));
        out
    }

    pub fn labels(&self) -> Vec<&str> {
        self.emotions.iter().map(|(l, _)| l.as_str()).collect()
    }
}

/// Cue lists resolved to token-id sequences. A cue spanning several tokens
/// (`a-bit` → `a bit`) matches only as a contiguous run.
#[derive(Clone, Debug, PartialEq)]
pub struct NegationRules {
    pub negation: Vec<Vec<u32>>,
    pub hedge: Vec<Vec<u32>>,
    pub window: usize,
    pub lambda: f64,
}

fn resolve_cues(cues: &[String], vocab: &Vocab) -> Vec<Vec<u32>> {
    cues.iter()
        .filter_map(|c| {
            let toks: Vec<String> = c.split('-').flat_map(words).collect();
            let ids: Option<Vec<u32>> = toks.iter().map(|t| vocab.id(t)).collect();
            ids.filter(|v| !v.is_empty())
        })
        .collect()
}

impl NegationRules {
    pub fn new(negation: Vec<Vec<u32>>, hedge: Vec<Vec<u32>>, window: usize, lambda: f64) -> Result<Self> {
        if window == 0 || !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::Config(format!(
                "need window ≥ 1 and 0 < lambda < 1 (window={window}, lambda={lambda})"
            )));
        }
        Ok(NegationRules {
            negation,
            hedge,
            window,
            lambda,
        })
    }

    /// Cues whose tokens are all in `vocab`; the rest are dropped.
    pub fn from_lexicon(lex: &EmotionLexicon, vocab: &Vocab) -> Result<Self> {
        Self::new(
            resolve_cues(&lex.negation, vocab),
            resolve_cues(&lex.hedge, vocab),
            lex.window,
            lex.lambda,
        )
    }

    /// Rules that never fire.
    pub fn inert() -> Self {
        NegationRules {
            negation: Vec::new(),
            hedge: Vec::new(),
            window: 1,
            lambda: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Modulation {
    Keep,
    Reverse,
    Attenuate,
}

fn cue_in_window(tokens: &[u32], t: usize, w: usize, cues: &[Vec<u32>]) -> bool {
    let lo = t.saturating_sub(w);
    cues.iter().any(|cue| {
        let l = cue.len();
        l <= t - lo && (lo..=t - l).any(|s| tokens[s..s + l] == cue[..])
    })
}

/// Per-position rule outcome; reversal takes precedence over attenuation.
pub fn modulation_pattern(tokens: &[u32], rules: &NegationRules) -> Vec<Modulation> {
    (0..tokens.len())
        .map(|t| {
            if cue_in_window(tokens, t, rules.window, &rules.negation) {
                Modulation::Reverse
            } else if cue_in_window(tokens, t, rules.window, &rules.hedge) {
                Modulation::Attenuate
            } else {
                Modulation::Keep
            }
        })
        .collect()
}

/// Multiplies row `t` of `y` by −1 (reversed) or λ (attenuated).
pub fn negation_modulate<T: Scalar>(
    g: &mut Graph<'_, T>,
    y: Var,
    pattern: &[Modulation],
    lambda: f64,
) -> Result<Var> {
    let (n, m) = g.value(y).dims2()?;
    if pattern.len() != n {
        return Err(Error::dim("negation_modulate", g.shape(y), &[pattern.len()]));
    }
    if pattern.iter().all(|p| *p == Modulation::Keep) {
        return Ok(y);
    }
    let lam = T::lit(lambda);
    let mut factors = Vec::with_capacity(n * m);
    for p in pattern {
        let f = match p {
            Modulation::Keep => T::one(),
            Modulation::Reverse => -T::one(),
            Modulation::Attenuate => lam,
        };
        factors.extend(std::iter::repeat(f).take(m));
    }
    let mask = g.constant(Tensor::new(&[n, m], factors)?);
    g.mul(y, mask)
}

// ---- fusion ----------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct Fused {
    /// `[n×2h]`.
    pub h_tilde: Var,
    /// `[1×2h]`.
    pub c_tilde: Var,
    /// Emotion weights `[1×|E|]`.
    pub alpha_e: Var,
    /// Gated scalar emotion signal per position, `[n×1]`.
    pub signal: Var,
}

/// `h̃_t = h_t + g_t·Σ_e α_e y_mod[t,e]` broadcast over all coordinates, where
/// `g_t = sigmoid(W_g h_t + b_g)` when the gate is on and 1 otherwise;
/// `c̃ = Σ_t α_t h̃_t`.
pub fn fuse_residual<T: Scalar>(
    g: &mut Graph<'_, T>,
    b: &Bindings,
    hmat: Var,
    y_mod: Var,
    alpha: Var,
    gate_on: bool,
) -> Result<Fused> {
    let logits = b.get(&name("emotion.logits"))?;
    let logits = as_row(g, logits)?;
    let alpha_e = g.softmax_rows(logits)?;
    let mut s = g.matmul_nt(y_mod, alpha_e)?;
    if gate_on {
        let z = linear(g, hmat, b.get(&name("gate.w"))?, b.get(&name("gate.b"))?)?;
        let gate = g.sigmoid(z);
        s = g.mul(s, gate)?;
    }
    let n = g.shape(s)[0];
    let flat = g.reshape(s, &[n])?;
    let h_tilde = g.add_col(hmat, flat)?;
    let c_tilde = g.matmul(alpha, h_tilde)?;
    Ok(Fused {
        h_tilde,
        c_tilde,
        alpha_e,
        signal: s,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct EeceOutput {
    pub h: Var,
    pub attention: Attention,
    /// Per-position emotion distribution `[n×|E|]` (diagnostic).
    pub e_t: Var,
    pub y: Var,
    pub y_mod: Var,
    pub fused: Fused,
}

/// BiLSTM over `v`, attention, emotion projection, compatibility of the token
/// embeddings `e_tok` with the prototypes, modulation by `pattern`, fusion.
pub fn eece_forward<T: Scalar>(
    g: &mut Graph<'_, T>,
    b: &Bindings,
    cfg: &EeceConfig,
    v: Var,
    e_tok: Var,
    pattern: &[Modulation],
    lambda: f64,
) -> Result<EeceOutput> {
    if g.shape(v)[0] != g.shape(e_tok)[0] {
        return Err(Error::dim("eece_forward", g.shape(v), g.shape(e_tok)));
    }
    let h = bilstm_forward(g, b, cfg.h, v)?;
    let attention = attention_pool(g, b, h)?;
    let e_t = emotion_project(g, b, h)?;
    let y = emotion_compatibility(g, b, e_tok)?;
    let y_mod = negation_modulate(g, y, pattern, lambda)?;
    let fused = fuse_residual(g, b, h, y_mod, attention.alpha, cfg.gate_on)?;
    Ok(EeceOutput {
        h,
        attention,
        e_t,
        y,
        y_mod,
        fused,
    })
}
