//! Central finite-difference verification of analytic gradients.

use crate::autograd::{Bindings, Graph, Var};
use crate::eece::EmotionLexicon;
use crate::error::{Error, Result};
use crate::model::{loss, Input, Model, ModelConfig};
use crate::params::ParameterStore;
use crate::scalar::Scalar;
use crate::text::build_vocab;

/// Denominator floor in the relative error.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Largest `|a - c|` over all coordinates.
    pub max_abs_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub coordinates: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs() + REL_ERROR_FLOOR)
}

fn evaluate<T, F>(params: &ParameterStore<T>, objective: &F) -> Result<f64>
where
    T: Scalar,
    F: Fn(&mut Graph<'_, T>, &Bindings) -> Result<Var>,
{
    let mut g = Graph::new();
    let b = g.bind(params);
    let loss = objective(&mut g, &b)?;
    let v = g.value(loss).data()[0].as_f64();
    if !v.is_finite() {
        return Err(Error::Numeric(format!("objective evaluated to {v}")));
    }
    Ok(v)
}

/// Compares reverse-mode gradients of `objective` against central
/// differences, perturbing every coordinate of every parameter by `±eps`.
///
/// Returns the maximum of `|a - c| / (|a| + |c| + 1e-8)` over coordinates.
pub fn finite_difference_check<T, F>(
    params: &ParameterStore<T>,
    eps: T,
    objective: F,
) -> Result<GradCheckReport>
where
    T: Scalar,
    F: Fn(&mut Graph<'_, T>, &Bindings) -> Result<Var>,
{
    let analytic = {
        let mut g = Graph::new();
        let b = g.bind(params);
        let loss = objective(&mut g, &b)?;
        if !g.value(loss).is_finite() {
            return Err(Error::Numeric("objective is not finite".into()));
        }
        g.backward(loss)?;
        g.leaf_grads(&b)
    };

    let mut work = params.clone();
    let names: Vec<String> = params.names().map(str::to_string).collect();
    let two_eps = 2.0 * eps.as_f64();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst: None,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        coordinates: 0,
    };

    for (pi, name) in names.iter().enumerate() {
        let len = params.get(name)?.len();
        for i in 0..len {
            let orig = work.get(name)?.data()[i];
            work.get_mut(name)?.data_mut()[i] = orig + eps;
            let plus = evaluate(&work, &objective)?;
            work.get_mut(name)?.data_mut()[i] = orig - eps;
            let minus = evaluate(&work, &objective)?;
            work.get_mut(name)?.data_mut()[i] = orig;

            let numeric = (plus - minus) / two_eps;
            let a = analytic[pi][i].as_f64();
            let err = relative_error(a, numeric);
            report.coordinates += 1;
            report.max_abs_error = report.max_abs_error.max((a - numeric).abs());
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((name.clone(), i));
                report.analytic_at_worst = a;
                report.numeric_at_worst = numeric;
            }
        }
    }
    Ok(report)
}

/// Lexicon for the micro model: three emotions, negation and hedge cues.
pub const MICRO_LEXICON: &str = "joy: good great fun\nsadness: bad sad dull\nanger: awful rude hate\n\
negation: not never n't\nhedge: slightly a-bit\nwindow: 3\nlambda: 0.5\n";

/// Six tokens with `[CLS]`/`[SEP]`; emotion words sit inside negation and hedge windows.
pub const MICRO_REVIEW: &str = "never slightly good fun";

/// d=8, c=6, h=4, d_a=3, |E|=3, C=2, no instruction prefix.
pub fn micro_config() -> ModelConfig {
    ModelConfig {
        d: 8,
        c: 6,
        h: 4,
        d_a: 3,
        emotions: 3,
        fusion_width: 5,
        max_len: 16,
        classes: 2,
        use_ci: false,
        dropout: 0.0,
        ..ModelConfig::default()
    }
}

pub fn micro_model<T: Scalar>(cfg: ModelConfig, seed: u64) -> Result<Model<T>> {
    let vocab = if cfg.contextual {
        None
    } else {
        Some(build_vocab(
            [MICRO_REVIEW, "a bit dull and slightly sad but great fun", "awful rude acting never bad hate"],
            64,
        )?)
    };
    Model::new(cfg, vocab, EmotionLexicon::parse(MICRO_LEXICON)?, seed)
}

/// Finite-difference check of the cross-entropy loss of `model` on one
/// input, over every parameter, in evaluation mode.
pub fn check_model<T: Scalar>(model: &Model<T>, input: Input<'_, T>, label: usize, eps: T) -> Result<GradCheckReport> {
    finite_difference_check(&model.params, eps, |g, b| {
        let f = model.forward(g, b, input, None)?;
        loss(g, f.probs, label)
    })
}
