//! Subcommand implementations. Each writes its artifacts under `out`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mrfe_core::augment::{augment_corpus, KeywordJudge, OfflineProvider, ParaphraseProvider, SynonymProvider};
use mrfe_core::data::{load_csv, make_synthetic_corpus, save_csv, LabeledCorpus, Sample};
use mrfe_core::eece::EmotionLexicon;
use mrfe_core::embedding::{load_contextual, save_contextual, ContextualRecord};
use mrfe_core::experiment::{
    ablation_csv, ablation_table, aligned_table, evaluate, evaluate_contextual, profile, profile_table, run_ablation,
    sweep, sweep_csv, sweep_table, EvalReport, SweepAxis,
};
use mrfe_core::gradcheck::{check_model, micro_config, micro_model, MICRO_REVIEW};
use mrfe_core::model::Input;
use mrfe_core::text::{apply_instruction, build_vocab, parse_template_file, InstructionTemplate};
use mrfe_core::train::{self, history_csv, split_indices, EpochRecord};
use mrfe_core::{Model, Scalar, Tensor};

use crate::{CliError, Command, Common, GradcheckArgs, InstructArgs, Precision, RunConfig, SweepArgs};

type Res<T> = Result<T, CliError>;

macro_rules! with_precision {
    ($p:expr, $f:ident($($a:expr),*)) => {
        match $p {
            Precision::F32 => $f::<f32>($($a),*),
            Precision::F64 => $f::<f64>($($a),*),
        }
    };
}

pub fn dispatch(cmd: &Command, out: &mut dyn Write) -> Res<i32> {
    match cmd {
        Command::Train(c) => {
            let cfg = c.resolve(RunConfig::default())?;
            with_precision!(cfg.precision, train_cmd(cfg, out))
        }
        Command::Evaluate(c) => {
            let cfg = c.resolve(RunConfig::default())?;
            with_precision!(cfg.precision, evaluate_cmd(cfg, out))
        }
        Command::Augment(c) => augment_cmd(c.resolve(RunConfig::default())?, out),
        Command::Instruct(a) => instruct_cmd(a, out),
        Command::Ablate(c) => {
            let cfg = c.resolve(RunConfig::default())?;
            with_precision!(cfg.precision, ablate_cmd(cfg, out))
        }
        Command::Sweep(a) => {
            let cfg = a.common.resolve(RunConfig::default())?;
            with_precision!(cfg.precision, sweep_cmd(a, cfg, out))
        }
        Command::Bench(c) => {
            let cfg = c.resolve(RunConfig::default())?;
            with_precision!(cfg.precision, bench_cmd(cfg, out))
        }
        Command::Gradcheck(a) => gradcheck_cmd(a, out),
        Command::ExportSynthetic(c) => export_cmd(c, out),
    }
}

fn out_dir(cfg: &RunConfig) -> Res<&Path> {
    fs::create_dir_all(&cfg.out)?;
    Ok(&cfg.out)
}

/// Loads the lexicon and sizes the emotion dimension to it.
fn lexicon(cfg: &mut RunConfig) -> Res<EmotionLexicon> {
    let lex = match &cfg.lexicon {
        Some(p) => EmotionLexicon::load(p)?,
        None => EmotionLexicon::default(),
    };
    cfg.model.emotions = lex.emotions.len();
    Ok(lex)
}

/// The `data` CSV, or the synthetic corpus when none is given. The class
/// count follows the label set.
fn corpus(cfg: &mut RunConfig) -> Res<LabeledCorpus> {
    let c = match &cfg.data {
        Some(p) => load_csv(p, &cfg.text_column, &cfg.label_column, &cfg.label_mapping(), &cfg.model.domain)?,
        None => make_synthetic_corpus(cfg.synthetic_n, cfg.model.classes, cfg.train.seed)?,
    };
    cfg.model.classes = c.num_classes();
    cfg.model.validate()?;
    Ok(c)
}

fn records(cfg: &mut RunConfig) -> Res<Vec<ContextualRecord>> {
    let path = cfg
        .embeddings
        .as_ref()
        .ok_or_else(|| CliError::Usage("contextual models need --embeddings".into()))?;
    let recs = load_contextual(path)?;
    let first = recs
        .first()
        .ok_or_else(|| CliError::Failed(format!("{} holds no records", path.display())))?;
    cfg.model.d = first.embeddings.dims2()?.1;
    cfg.model.validate()?;
    Ok(recs)
}

fn provider(cfg: &RunConfig) -> Res<Box<dyn ParaphraseProvider>> {
    Ok(match &cfg.paraphrases {
        Some(p) => Box::new(OfflineProvider::load(p)?),
        None => Box::new(SynonymProvider),
    })
}

fn pick(recs: &[ContextualRecord], idx: &[usize]) -> Vec<ContextualRecord> {
    idx.iter().map(|&i| recs[i].clone()).collect()
}

pub fn report_text(r: &EvalReport, labels: &[String]) -> String {
    let name = |k: usize| labels.get(k).cloned().unwrap_or_else(|| k.to_string());
    let mut s = format!(
        "accuracy   {:.4}\nmacro_f1   {:.4}\nparams     {}\nflops      {}\nms/sample  {:.4}\n\n",
        r.accuracy, r.macro_f1, r.params, r.flops, r.ms_per_sample
    );
    let rows: Vec<Vec<String>> = r
        .per_class
        .iter()
        .enumerate()
        .map(|(k, m)| {
            vec![
                name(k),
                format!("{:.4}", m.precision),
                format!("{:.4}", m.recall),
                format!("{:.4}", m.f1),
                m.support.to_string(),
            ]
        })
        .collect();
    s += &aligned_table(&["Class", "Precision", "Recall", "F1", "Support"], &rows);
    s += "\nconfusion (rows true, columns predicted)\n";
    let mut headers = vec![String::new()];
    headers.extend((0..r.confusion.classes()).map(name));
    let rows: Vec<Vec<String>> = r
        .confusion
        .counts()
        .iter()
        .enumerate()
        .map(|(k, row)| std::iter::once(name(k)).chain(row.iter().map(usize::to_string)).collect())
        .collect();
    s += &aligned_table(&headers.iter().map(String::as_str).collect::<Vec<_>>(), &rows);
    s
}

pub fn report_csv(r: &EvalReport, labels: &[String]) -> Res<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["class", "precision", "recall", "f1", "support"])?;
    for (k, m) in r.per_class.iter().enumerate() {
        let name = labels.get(k).cloned().unwrap_or_else(|| k.to_string());
        w.write_record([name, m.precision.to_string(), m.recall.to_string(), m.f1.to_string(), m.support.to_string()])?;
    }
    let total = r.confusion.total().to_string();
    w.write_record(["accuracy".into(), String::new(), String::new(), r.accuracy.to_string(), total.clone()])?;
    w.write_record(["macro_f1".into(), String::new(), String::new(), r.macro_f1.to_string(), total])?;
    let bytes = w.into_inner().map_err(|e| CliError::Failed(e.to_string()))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

fn history_table(h: &[EpochRecord]) -> String {
    let rows: Vec<Vec<String>> = h
        .iter()
        .map(|r| {
            vec![
                r.epoch.to_string(),
                format!("{:.5}", r.loss),
                r.dev_accuracy.map_or_else(|| "-".into(), |a| format!("{a:.4}")),
                r.examples.to_string(),
            ]
        })
        .collect();
    aligned_table(&["Epoch", "Loss", "Dev acc", "Examples"], &rows)
}

fn write_report(dir: &Path, stem: &str, r: &EvalReport, labels: &[String]) -> Res<String> {
    let text = report_text(r, labels);
    fs::write(dir.join(format!("{stem}.txt")), &text)?;
    fs::write(dir.join(format!("{stem}.csv")), report_csv(r, labels)?)?;
    Ok(text)
}

fn train_cmd<T: Scalar>(mut cfg: RunConfig, out: &mut dyn Write) -> Res<i32> {
    let lex = lexicon(&mut cfg)?;
    let dir = out_dir(&cfg)?.to_path_buf();
    let start = Instant::now();
    let (outcome, report, labels) = if cfg.model.contextual {
        let recs = records(&mut cfg)?;
        let (tr, dev, test) = split_indices(recs.len(), cfg.train.ratios, cfg.train.seed)?;
        let test = pick(&recs, &test);
        let outcome = train::train_contextual::<T>(&cfg.model, &cfg.train, &pick(&recs, &tr), &pick(&recs, &dev), &lex)?;
        let report = evaluate_contextual(&outcome.model, &test)?;
        save_contextual(dir.join("test.cemb"), &test)?;
        let labels: Vec<String> = (0..cfg.model.classes).map(|k| k.to_string()).collect();
        (outcome, report, labels)
    } else {
        let data = corpus(&mut cfg)?;
        let (tr, dev, test) = train::split(&data, cfg.train.ratios, cfg.train.seed)?;
        let p = provider(&cfg)?;
        let outcome = train::train::<T>(&cfg.model, &cfg.train, &tr, &dev, &lex, Some(p.as_ref()))?;
        let report = evaluate(&outcome.model, &test)?;
        save_csv(&test, dir.join("test.csv"))?;
        (outcome, report, data.label_names.clone())
    };
    fs::write(dir.join("config.txt"), cfg.to_text())?;
    outcome.model.save_dir(dir.join("model"))?;
    fs::write(dir.join("history.csv"), history_csv(&outcome.history))?;
    let text = write_report(&dir, "report", &report, &labels)?;

    writeln!(out, "{}", history_table(&outcome.history))?;
    if let Some(a) = &outcome.augmentation {
        writeln!(out, "augmentation: {} candidates, {} retained", a.candidates, a.retained)?;
    }
    writeln!(out, "best epoch: {}", outcome.best_epoch)?;
    writeln!(out, "test split ({} samples)\n{text}", report.confusion.total())?;
    writeln!(out, "elapsed: {:.1} s", start.elapsed().as_secs_f64())?;
    writeln!(out, "model saved to {}", dir.join("model").display())?;
    Ok(0)
}

fn checkpoint_dir(cfg: &RunConfig) -> PathBuf {
    cfg.checkpoint.clone().unwrap_or_else(|| cfg.out.join("model"))
}

fn evaluate_cmd<T: Scalar>(mut cfg: RunConfig, out: &mut dyn Write) -> Res<i32> {
    let model = Model::<T>::load_dir(checkpoint_dir(&cfg))?;
    cfg.model.classes = model.cfg.classes;
    let (report, labels) = if model.cfg.contextual {
        let recs = records(&mut cfg)?;
        let labels = (0..model.cfg.classes).map(|k| k.to_string()).collect();
        (evaluate_contextual(&model, &recs)?, labels)
    } else {
        if cfg.data.is_none() {
            return Err(CliError::Usage("evaluate needs --data (or --embeddings for a contextual model)".into()));
        }
        let data = corpus(&mut cfg)?;
        (evaluate(&model, &data)?, data.label_names.clone())
    };
    let text = write_report(out_dir(&cfg)?, "evaluation", &report, &labels)?;
    writeln!(out, "{text}")?;
    Ok(0)
}

fn augment_cmd(mut cfg: RunConfig, out: &mut dyn Write) -> Res<i32> {
    let data = corpus(&mut cfg)?;
    let p = provider(&cfg)?;
    let judge = KeywordJudge::new(data.num_classes());
    let rep = augment_corpus(&data, p.as_ref(), cfg.train.augment_k, &judge, cfg.train.seed)?;
    let dir = out_dir(&cfg)?;
    save_csv(&rep.corpus, dir.join("augmented.csv"))?;
    let mut w = csv::Writer::from_path(dir.join("augmentations.csv"))?;
    w.write_record(["source_text", "augmented_text", "label", "provenance", "provider"])?;
    for a in &rep.augmented {
        w.write_record([
            a.source.as_str(),
            a.text.as_str(),
            data.label_names[a.label].as_str(),
            a.provenance.as_str(),
            a.provider.as_str(),
        ])?;
    }
    w.flush()?;
    writeln!(
        out,
        "{} source samples, {} candidates, {} retained ({:.1}%)",
        data.len(),
        rep.candidates,
        rep.augmented.len(),
        100.0 * rep.retention_rate()
    )?;
    for (name, n) in data.label_names.iter().zip(&rep.per_class_added) {
        writeln!(out, "  {name}: +{n}")?;
    }
    writeln!(out, "wrote {}", dir.join("augmented.csv").display())?;
    Ok(0)
}

fn instruct_cmd(a: &InstructArgs, out: &mut dyn Write) -> Res<i32> {
    let mut cfg = a.common.resolve(RunConfig::default())?;
    let tmpl = match &a.template {
        Some(p) => parse_template_file(&fs::read_to_string(p)?)?
            .into_iter()
            .next()
            .ok_or_else(|| CliError::Usage(format!("{} defines no template", p.display())))?,
        None => InstructionTemplate::plain(),
    };
    let render = |x: &str| apply_instruction(x, a.context.as_deref(), &tmpl, a.response.as_deref(), a.identifier.as_deref());
    match (&a.text, &cfg.data) {
        (Some(x), _) => {
            let line = render(x)?;
            writeln!(out, "{line}")?;
            fs::write(out_dir(&cfg)?.join("instruct.txt"), format!("{line}\n"))?;
        }
        (None, Some(_)) => {
            let data = corpus(&mut cfg)?;
            let samples = data
                .samples
                .iter()
                .map(|s| Ok(Sample::new(render(&s.text)?, s.label)))
                .collect::<Res<Vec<_>>>()?;
            let path = out_dir(&cfg)?.join("instructed.csv");
            save_csv(&data.with_samples(samples), &path)?;
            writeln!(out, "rendered {} rows to {}", data.len(), path.display())?;
        }
        (None, None) => return Err(CliError::Usage("instruct needs --text or --data".into())),
    }
    Ok(0)
}

fn ablate_cmd<T: Scalar>(mut cfg: RunConfig, out: &mut dyn Write) -> Res<i32> {
    if cfg.model.contextual {
        return Err(CliError::Usage("the ablation grid runs on text corpora".into()));
    }
    let lex = lexicon(&mut cfg)?;
    let data = corpus(&mut cfg)?;
    let p = provider(&cfg)?;
    let dir = out_dir(&cfg)?.to_path_buf();
    let start = Instant::now();
    let rows = run_ablation::<T>(&cfg.model, &cfg.train, &data, &lex, Some(p.as_ref()), Some(&dir.join("ablation")))?;
    let secs = start.elapsed().as_secs_f64();
    fs::write(dir.join("ablation.csv"), ablation_csv(&rows)?)?;
    let table = ablation_table(&rows);
    fs::write(dir.join("ablation.txt"), &table)?;
    writeln!(out, "{table}")?;
    writeln!(out, "elapsed: {secs:.1} s")?;
    Ok(0)
}

fn sweep_cmd<T: Scalar>(a: &SweepArgs, mut cfg: RunConfig, out: &mut dyn Write) -> Res<i32> {
    let axis: SweepAxis = a.axis.parse()?;
    let values: Vec<String> = match &a.values {
        Some(v) => v.split(';').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
        None => axis.default_values(),
    };
    if cfg.model.contextual {
        return Err(CliError::Usage("sweeps run on text corpora".into()));
    }
    let lex = lexicon(&mut cfg)?;
    let data = corpus(&mut cfg)?;
    let p = provider(&cfg)?;
    let rows = sweep::<T>(axis, &values, &cfg.model, &cfg.train, &data, &lex, Some(p.as_ref()))?;
    let dir = out_dir(&cfg)?;
    fs::write(dir.join(format!("sweep_{}.csv", axis.key())), sweep_csv(axis, &rows)?)?;
    let table = sweep_table(axis, &rows);
    fs::write(dir.join(format!("sweep_{}.txt", axis.key())), &table)?;
    writeln!(out, "{table}")?;
    Ok(0)
}

fn bench_cmd<T: Scalar>(mut cfg: RunConfig, out: &mut dyn Write) -> Res<i32> {
    let lex = lexicon(&mut cfg)?;
    let model = match &cfg.checkpoint {
        Some(dir) => Model::<T>::load_dir(dir)?,
        None if cfg.model.contextual => Model::<T>::new(cfg.model.clone(), None, lex, cfg.train.seed)?,
        None => {
            let data = corpus(&mut cfg)?;
            let vocab = build_vocab(data.samples.iter().map(|s| s.text.as_str()), cfg.model.vocab_size)?;
            Model::<T>::new(cfg.model.clone(), Some(vocab), lex, cfg.train.seed)?
        }
    };
    let n = cfg.runs;
    let (ids, tensors): (Vec<Vec<u32>>, Vec<Tensor<T>>) = if model.cfg.contextual {
        let ts = match &cfg.embeddings {
            Some(_) => records(&mut cfg)?.iter().take(n).map(|r| r.embeddings.cast()).collect(),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
                (0..n.min(16))
                    .map(|_| Tensor::uniform(&[model.cfg.max_len, model.cfg.d], 1.0, &mut rng))
                    .collect()
            }
        };
        (Vec::new(), ts)
    } else {
        let data = corpus(&mut cfg)?;
        let ids = data.samples.iter().take(n).map(|s| model.encode(&s.text)).collect::<mrfe_core::Result<_>>()?;
        (ids, Vec::new())
    };
    let inputs: Vec<Input<'_, T>> = ids
        .iter()
        .map(|x| Input::Ids(x))
        .chain(tensors.iter().map(Input::Embedded))
        .collect();
    let rep = profile(&model, &inputs, n)?;
    let table = profile_table(&model.cfg.variant.to_string(), &rep);
    let text = format!("{table}\nlatency {:.4} ± {:.4} ms over {} runs\n", rep.mean_ms, rep.std_ms, rep.runs);
    fs::write(out_dir(&cfg)?.join("bench.txt"), &text)?;
    write!(out, "{text}")?;
    Ok(0)
}

fn gradcheck_cmd(a: &GradcheckArgs, out: &mut dyn Write) -> Res<i32> {
    let cfg = a.common.resolve(RunConfig::with_model(micro_config()))?;
    let model = micro_model::<f64>(cfg.model.clone(), cfg.train.seed)?;
    let start = Instant::now();
    let report = if model.cfg.contextual {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
        let x = Tensor::<f64>::uniform(&[6, model.cfg.d], 1.0, &mut rng);
        check_model(&model, Input::Embedded(&x), 1, a.eps)?
    } else {
        let ids = model.encode(MICRO_REVIEW)?;
        check_model(&model, Input::Ids(&ids), 1, a.eps)?
    };
    let pass = report.passes(a.tol);
    let worst = report
        .worst
        .as_ref()
        .map_or_else(String::new, |(n, i)| format!("{n}[{i}]"));
    let text = format!(
        "variant {}\ncoordinates {}\nmax relative error {:.3e} at {worst}\nmax absolute error {:.3e}\nelapsed {:.2} s\n{}\n",
        model.cfg.variant,
        report.coordinates,
        report.max_rel_error,
        report.max_abs_error,
        start.elapsed().as_secs_f64(),
        if pass { "PASS" } else { "FAIL" }
    );
    fs::write(out_dir(&cfg)?.join("gradcheck.txt"), &text)?;
    write!(out, "{text}")?;
    Ok(if pass { 0 } else { 1 })
}

fn export_cmd(c: &Common, out: &mut dyn Write) -> Res<i32> {
    let cfg = c.resolve(RunConfig::default())?;
    let data = make_synthetic_corpus(cfg.synthetic_n, cfg.model.classes, cfg.train.seed)?;
    let path = out_dir(&cfg)?.join("synthetic.csv");
    save_csv(&data, &path)?;
    writeln!(out, "wrote {} samples to {}", data.len(), path.display())?;
    Ok(0)
}
