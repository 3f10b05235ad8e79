//! Evaluation, the ablation grid, configuration sweeps and latency profiling.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::augment::ParaphraseProvider;
use crate::data::LabeledCorpus;
use crate::eece::EmotionLexicon;
use crate::embedding::ContextualRecord;
use crate::error::{Error, Result};
use crate::metrics::{ClassMetrics, Confusion};
use crate::model::{Fusion, Input, LocalEncoder, Model, ModelConfig, Variant};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::train::{self, history_csv, EpochRecord, TrainConfig, TrainOutcome};

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: Confusion,
    /// Mean wall-clock milliseconds per prediction.
    pub ms_per_sample: f64,
    pub params: usize,
    /// Analytic forward FLOPs at `max_len` tokens.
    pub flops: u64,
}

impl EvalReport {
    /// Everything except the timing.
    pub fn same_scores(&self, other: &EvalReport) -> bool {
        self.confusion == other.confusion
            && self.accuracy.to_bits() == other.accuracy.to_bits()
            && self.macro_f1.to_bits() == other.macro_f1.to_bits()
            && self.params == other.params
            && self.flops == other.flops
    }
}

fn report_from<T: Scalar>(
    model: &Model<T>,
    classes: usize,
    inputs: &[(Input<'_, T>, usize)],
) -> Result<EvalReport> {
    let mut truth = Vec::with_capacity(inputs.len());
    let mut pred = Vec::with_capacity(inputs.len());
    let mut elapsed = 0.0;
    for (x, y) in inputs {
        let start = Instant::now();
        let p = model.predict(*x)?;
        elapsed += start.elapsed().as_secs_f64();
        truth.push(*y);
        pred.push(p.class);
    }
    let confusion = Confusion::from_pairs(classes, &truth, &pred)?;
    Ok(EvalReport {
        accuracy: confusion.accuracy(),
        macro_f1: confusion.macro_f1(),
        per_class: confusion.class_metrics(),
        confusion,
        ms_per_sample: if inputs.is_empty() { 0.0 } else { 1e3 * elapsed / inputs.len() as f64 },
        params: model.num_params(),
        flops: model.flops(model.cfg.max_len)?,
    })
}

pub fn evaluate<T: Scalar>(model: &Model<T>, test: &LabeledCorpus) -> Result<EvalReport> {
    if test.num_classes() != model.cfg.classes {
        return Err(Error::Config(format!(
            "test set has {} classes, model {}",
            test.num_classes(),
            model.cfg.classes
        )));
    }
    let ids: Vec<Vec<u32>> = test.samples.iter().map(|s| model.encode(&s.text)).collect::<Result<_>>()?;
    let inputs: Vec<(Input<'_, T>, usize)> = ids
        .iter()
        .zip(&test.samples)
        .map(|(x, s)| (Input::Ids(x), s.label))
        .collect();
    report_from(model, model.cfg.classes, &inputs)
}

pub fn evaluate_contextual<T: Scalar>(model: &Model<T>, records: &[ContextualRecord]) -> Result<EvalReport> {
    let classes = model.cfg.classes;
    let tensors: Vec<Tensor<T>> = records.iter().map(|r| r.embeddings.cast()).collect();
    let inputs: Vec<(Input<'_, T>, usize)> = tensors
        .iter()
        .zip(records)
        .enumerate()
        .map(|(i, (t, r))| {
            let y = usize::try_from(r.label)
                .ok()
                .filter(|&y| y < classes)
                .ok_or_else(|| Error::Label(format!("record {i} has label {}", r.label)))?;
            Ok((Input::Embedded(t), y))
        })
        .collect::<Result<_>>()?;
    report_from(model, classes, &inputs)
}

pub struct Experiment<T: Scalar> {
    pub outcome: TrainOutcome<T>,
    pub report: EvalReport,
}

/// Split with the training seed, train, evaluate on the test split.
pub fn run_experiment<T: Scalar>(
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    corpus: &LabeledCorpus,
    lexicon: &EmotionLexicon,
    provider: Option<&dyn ParaphraseProvider>,
) -> Result<Experiment<T>> {
    let (tr, dev, test) = train::split(corpus, tcfg.ratios, tcfg.seed)?;
    let outcome = train::train::<T>(cfg, tcfg, &tr, &dev, lexicon, provider)?;
    let report = evaluate(&outcome.model, &test)?;
    Ok(Experiment { outcome, report })
}

// ---- ablation ---------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ablation {
    Full,
    NoCi,
    NoSea,
    NoSade,
    NoEece,
    SingleKernel,
    ThreeKernels,
}

impl Ablation {
    pub const ALL: [Ablation; 7] = [
        Ablation::Full,
        Ablation::NoCi,
        Ablation::NoSea,
        Ablation::NoSade,
        Ablation::NoEece,
        Ablation::SingleKernel,
        Ablation::ThreeKernels,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Ablation::Full => "CISEA-MRFE (full)",
            Ablation::NoCi => "w/o CI",
            Ablation::NoSea => "w/o SEA",
            Ablation::NoSade => "w/o SADE",
            Ablation::NoEece => "w/o EECE",
            Ablation::SingleKernel => "SADE single kernel (k=3)",
            Ablation::ThreeKernels => "SADE multi-kernel (k=1,3,5)",
        }
    }

    /// Directory-safe name.
    pub fn slug(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoCi => "no_ci",
            Ablation::NoSea => "no_sea",
            Ablation::NoSade => "no_sade",
            Ablation::NoEece => "no_eece",
            Ablation::SingleKernel => "single_k3",
            Ablation::ThreeKernels => "k135",
        }
    }

    pub fn apply(self, base: &ModelConfig) -> ModelConfig {
        let mut c = base.clone();
        match self {
            Ablation::Full => {}
            Ablation::NoCi => c.use_ci = false,
            Ablation::NoSea => c.use_sea = false,
            Ablation::NoSade => c.local_encoder = LocalEncoder::StandardConv,
            Ablation::NoEece => c.variant = Variant::CiseaSade,
            Ablation::SingleKernel => c.kernels = vec![3],
            Ablation::ThreeKernels => c.kernels = vec![1, 3, 5],
        }
        c
    }
}

pub struct AblationRow {
    pub ablation: Ablation,
    pub cfg: ModelConfig,
    pub report: EvalReport,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Trains and evaluates every ablation on the same split and seed. Rows run
/// in parallel; with `out`, each row's checkpoint and history are written to
/// `out/<slug>/`.
pub fn run_ablation<T: Scalar>(
    base: &ModelConfig,
    tcfg: &TrainConfig,
    corpus: &LabeledCorpus,
    lexicon: &EmotionLexicon,
    provider: Option<&dyn ParaphraseProvider>,
    out: Option<&Path>,
) -> Result<Vec<AblationRow>> {
    Ablation::ALL
        .par_iter()
        .map(|&ab| {
            let cfg = ab.apply(base);
            let exp = run_experiment::<T>(&cfg, tcfg, corpus, lexicon, provider)?;
            if let Some(dir) = out {
                let d = dir.join(ab.slug());
                exp.outcome.model.save_dir(&d)?;
                std::fs::write(d.join("history.csv"), history_csv(&exp.outcome.history))?;
            }
            Ok(AblationRow {
                ablation: ab,
                cfg,
                report: exp.report,
                history: exp.outcome.history,
                best_epoch: exp.outcome.best_epoch,
            })
        })
        .collect()
}

pub fn ablation_csv(rows: &[AblationRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["variant", "slug", "accuracy", "macro_f1", "params", "flops", "ms_per_sample", "best_epoch"])?;
    for r in rows {
        w.write_record([
            r.ablation.label().to_string(),
            r.ablation.slug().to_string(),
            r.report.accuracy.to_string(),
            r.report.macro_f1.to_string(),
            r.report.params.to_string(),
            r.report.flops.to_string(),
            r.report.ms_per_sample.to_string(),
            r.best_epoch.to_string(),
        ])?;
    }
    csv_string(w)
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.ablation.label().to_string(),
                pct(r.report.accuracy),
                pct(r.report.macro_f1),
            ]
        })
        .collect();
    aligned_table(&["Variant", "Acc", "F1"], &body)
}

// ---- sweeps -------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Kernels,
    MaxLen,
    Fusion,
}

impl SweepAxis {
    /// Model configuration key the axis varies.
    pub fn key(self) -> &'static str {
        match self {
            SweepAxis::Kernels => "kernels",
            SweepAxis::MaxLen => "max_len",
            SweepAxis::Fusion => "fusion",
        }
    }

    pub fn default_values(self) -> Vec<String> {
        let v: &[&str] = match self {
            SweepAxis::Kernels => &["1,3,5", "1,3,7", "3,5,7", "3", "5", "1,3,5,7"],
            SweepAxis::MaxLen => &["32", "64", "128", "256", "512"],
            SweepAxis::Fusion => &["sequential", "attention_stack", "summation"],
        };
        v.iter().map(|s| s.to_string()).collect()
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "kernels" => Ok(SweepAxis::Kernels),
            "max_len" | "max-len" => Ok(SweepAxis::MaxLen),
            "fusion" => Ok(SweepAxis::Fusion),
            other => Err(Error::Config(format!(
                "unknown sweep axis `{other}` (expected kernels, max_len or fusion)"
            ))),
        }
    }
}

pub struct SweepRow {
    pub value: String,
    pub cfg: ModelConfig,
    pub report: EvalReport,
}

/// One experiment per value of `axis`; everything else comes from `base`.
pub fn sweep<T: Scalar>(
    axis: SweepAxis,
    values: &[String],
    base: &ModelConfig,
    tcfg: &TrainConfig,
    corpus: &LabeledCorpus,
    lexicon: &EmotionLexicon,
    provider: Option<&dyn ParaphraseProvider>,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config(format!("empty value list for sweep over {axis}")));
    }
    let cfgs = values
        .iter()
        .map(|v| {
            let mut c = base.clone();
            c.set(axis.key(), v)?;
            if axis == SweepAxis::Fusion && c.fusion != Fusion::Sequential && !c.parallel_fusion() {
                return Err(Error::Config(format!("fusion `{v}` needs both streams")));
            }
            c.validate()?;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    values
        .par_iter()
        .zip(cfgs.into_par_iter())
        .map(|(v, cfg)| {
            let exp = run_experiment::<T>(&cfg, tcfg, corpus, lexicon, provider)?;
            Ok(SweepRow {
                value: v.clone(),
                cfg,
                report: exp.report,
            })
        })
        .collect()
}

/// Long-format plot data: one line per value.
pub fn sweep_csv(axis: SweepAxis, rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["axis", "value", "window", "accuracy", "macro_f1", "params", "flops", "ms_per_sample"])?;
    for r in rows {
        let window = r.cfg.kernels.iter().max().copied().unwrap_or(0);
        w.write_record([
            axis.key().to_string(),
            r.value.clone(),
            window.to_string(),
            r.report.accuracy.to_string(),
            r.report.macro_f1.to_string(),
            r.report.params.to_string(),
            r.report.flops.to_string(),
            r.report.ms_per_sample.to_string(),
        ])?;
    }
    csv_string(w)
}

pub fn sweep_table(axis: SweepAxis, rows: &[SweepRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.value.clone(),
                pct(r.report.accuracy),
                pct(r.report.macro_f1),
                r.report.params.to_string(),
            ]
        })
        .collect();
    aligned_table(&[axis.key(), "Acc", "F1", "Params"], &body)
}

// ---- profiling ----------------------------------------------------------------

pub const WARMUP_RUNS: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct ProfileReport {
    pub params: usize,
    pub flops: u64,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub runs: usize,
}

/// Exact parameter count, analytic FLOPs at `max_len`, and per-sample
/// latency over `repetitions` single-threaded predictions after the warmup.
pub fn profile<T: Scalar>(model: &Model<T>, inputs: &[Input<'_, T>], repetitions: usize) -> Result<ProfileReport> {
    if inputs.is_empty() || repetitions == 0 {
        return Err(Error::Config("profiling needs inputs and at least one repetition".into()));
    }
    for x in inputs.iter().cycle().take(WARMUP_RUNS) {
        model.predict(*x)?;
    }
    let mut times = Vec::with_capacity(repetitions);
    for x in inputs.iter().cycle().take(repetitions) {
        let start = Instant::now();
        model.predict(*x)?;
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let n = times.len() as f64;
    let mean = times.iter().sum::<f64>() / n;
    let std = if times.len() > 1 {
        (times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(ProfileReport {
        params: model.num_params(),
        flops: model.flops(model.cfg.max_len)?,
        mean_ms: mean,
        std_ms: std,
        runs: times.len(),
    })
}

pub fn profile_table(name: &str, p: &ProfileReport) -> String {
    aligned_table(
        &["Model", "Params (M)", "FLOPs (G)", "Inference (ms/sample)"],
        &[vec![
            name.to_string(),
            format!("{:.4}", p.params as f64 / 1e6),
            format!("{:.6}", p.flops as f64 / 1e9),
            format!("{:.3} ± {:.3}", p.mean_ms, p.std_ms),
        ]],
    )
}

// ---- formatting ---------------------------------------------------------------

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| Error::Input(e.to_string()))
}

/// Left-aligned first column, right-aligned numbers, a rule under the header.
pub fn aligned_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let cols = headers.len();
    let mut width: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, cell) in width.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let pad = width[i] - c.chars().count();
                if i == 0 {
                    format!("{c}{}", " ".repeat(pad))
                } else {
                    format!("{}{c}", " ".repeat(pad))
                }
            })
            .collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(headers.to_vec());
    let total: usize = width.iter().sum::<usize>() + 2 * (cols.saturating_sub(1));
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}
