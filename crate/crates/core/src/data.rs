//! Labeled corpora: CSV ingestion, label presets and the synthetic corpus.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lexicon::{self, Polarity};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub text: String,
    pub label: usize,
}

impl Sample {
    pub fn new(text: impl Into<String>, label: usize) -> Self {
        Sample {
            text: text.into(),
            label,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledCorpus {
    pub samples: Vec<Sample>,
    /// Ordered from most negative to most positive.
    pub label_names: Vec<String>,
    pub domain: String,
}

impl LabeledCorpus {
    pub fn new(samples: Vec<Sample>, label_names: Vec<String>, domain: &str) -> Result<Self> {
        let c = LabeledCorpus {
            samples,
            label_names,
            domain: domain.to_string(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.samples.iter().enumerate() {
            if s.label >= self.label_names.len() {
                return Err(Error::Label(format!(
                    "sample {i} has label {} but only {} classes",
                    s.label,
                    self.label_names.len()
                )));
            }
            if s.text.trim().is_empty() {
                return Err(Error::Input(format!("sample {i} has empty text")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn with_samples(&self, samples: Vec<Sample>) -> LabeledCorpus {
        LabeledCorpus {
            samples,
            label_names: self.label_names.clone(),
            domain: self.domain.clone(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }
}

/// How raw label strings in a CSV map to class indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LabelMapping {
    /// Exact match against these names; index = position.
    Names(Vec<String>),
    /// `0`/`1` → negative/positive.
    Binary01,
    /// Star ratings `1..=5` → classes `0..=4`.
    Stars5,
    /// Star ratings: below 3 negative, above 3 positive, 3 dropped.
    StarsPolarity,
}

impl LabelMapping {
    pub fn preset(name: &str) -> Option<LabelMapping> {
        match name {
            "binary01" | "twitter" => Some(LabelMapping::Binary01),
            "stars5" | "yelp" => Some(LabelMapping::Stars5),
            "stars-polarity" | "amazon" => Some(LabelMapping::StarsPolarity),
            _ => None,
        }
    }

    pub fn label_names(&self) -> Vec<String> {
        match self {
            LabelMapping::Names(n) => n.clone(),
            LabelMapping::Binary01 | LabelMapping::StarsPolarity => {
                vec!["negative".into(), "positive".into()]
            }
            LabelMapping::Stars5 => (1..=5).map(|s| format!("{s}-star")).collect(),
        }
    }

    /// `Ok(None)` means the row is intentionally skipped.
    fn map(&self, raw: &str) -> std::result::Result<Option<usize>, String> {
        let raw = raw.trim();
        let stars = || raw.parse::<f64>().map_err(|_| format!("`{raw}` is not a rating"));
        match self {
            LabelMapping::Names(names) => names
                .iter()
                .position(|n| n == raw)
                .map(Some)
                .ok_or_else(|| format!("unknown label `{raw}`")),
            LabelMapping::Binary01 => match raw {
                "0" => Ok(Some(0)),
                "1" => Ok(Some(1)),
                _ => Err(format!("unknown label `{raw}` (expected 0 or 1)")),
            },
            LabelMapping::Stars5 => {
                let s = stars()?;
                if s.fract() == 0.0 && (1.0..=5.0).contains(&s) {
                    Ok(Some(s as usize - 1))
                } else {
                    Err(format!("rating `{raw}` outside 1..5"))
                }
            }
            LabelMapping::StarsPolarity => {
                let s = stars()?;
                if s < 3.0 {
                    Ok(Some(0))
                } else if s > 3.0 {
                    Ok(Some(1))
                } else {
                    Ok(None)
                }
            }
        }
    }
}

/// Reads an RFC-4180 CSV with a header row.
pub fn load_csv(
    path: impl AsRef<Path>,
    text_column: &str,
    label_column: &str,
    mapping: &LabelMapping,
    domain: &str,
) -> Result<LabeledCorpus> {
    let file = std::fs::File::open(path)?;
    read_csv(file, text_column, label_column, mapping, domain)
}

pub fn read_csv<R: std::io::Read>(
    reader: R,
    text_column: &str,
    label_column: &str,
    mapping: &LabelMapping,
    domain: &str,
) -> Result<LabeledCorpus> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(csv_parse_error)?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            line: 1,
            msg: format!("missing column `{name}`"),
        })
    };
    let (ti, li) = (col(text_column)?, col(label_column)?);
    let mut samples = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_parse_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| {
            rec.get(i).ok_or_else(|| Error::Parse {
                line,
                msg: "row is missing fields".into(),
            })
        };
        let text = field(ti)?;
        let label = mapping
            .map(field(li)?)
            .map_err(|msg| Error::Parse { line, msg })?;
        let Some(label) = label else { continue };
        if text.trim().is_empty() {
            return Err(Error::Parse {
                line,
                msg: "empty text".into(),
            });
        }
        samples.push(Sample::new(text, label));
    }
    LabeledCorpus::new(samples, mapping.label_names(), domain)
}

fn csv_parse_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        line,
        msg: e.to_string(),
    }
}

/// Writes `text,label` rows using label names.
pub fn save_csv(corpus: &LabeledCorpus, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["text", "label"])?;
    for s in &corpus.samples {
        w.write_record([s.text.as_str(), corpus.label_names[s.label].as_str()])?;
    }
    w.flush()?;
    Ok(())
}

const SUBJECTS: &[&str] = &[
    "the movie", "the film", "the plot", "the acting", "the service", "the food", "this product",
    "the staff", "the ending", "the soundtrack", "the story", "the experience",
];
const VERBS: &[&str] = &["was", "felt", "seemed", "is", "looked"];
const INTENSIFIERS: &[&str] = &["", "", "really", "quite", "so", "truly"];
const TAILS: &[&str] = &[
    "", "", "overall", "to me", "in my opinion", "from start to finish", "this time",
];
const NEUTRAL_WORDS: &[&str] = &["average", "ordinary", "okay", "typical", "standard", "adequate"];

/// Distinct keyword pools per class, ordered negative → positive.
fn class_pools(classes: usize) -> Vec<Vec<&'static str>> {
    let neg = lexicon::words_with_polarity(Polarity::Negative);
    let pos = lexicon::words_with_polarity(Polarity::Positive);
    let polarities: Vec<Polarity> = (0..classes).map(|c| Polarity::of_class(c, classes)).collect();
    let n_neg = polarities.iter().filter(|p| **p == Polarity::Negative).count();
    let n_pos = polarities.iter().filter(|p| **p == Polarity::Positive).count();
    let chunk = |words: &[&'static str], parts: usize, idx: usize| -> Vec<&'static str> {
        let size = words.len() / parts;
        words[idx * size..(idx + 1) * size].to_vec()
    };
    let (mut ni, mut pi) = (0, 0);
    polarities
        .iter()
        .map(|p| match p {
            Polarity::Negative => {
                // most negative class takes the first chunk
                ni += 1;
                chunk(&neg, n_neg, ni - 1)
            }
            Polarity::Positive => {
                pi += 1;
                chunk(&pos, n_pos, pi - 1)
            }
            Polarity::Neutral => NEUTRAL_WORDS.to_vec(),
        })
        .collect()
}

fn opposite_class(label: usize, classes: usize) -> usize {
    let opp = classes - 1 - label;
    if opp == label {
        // middle class: borrow the most positive pool
        classes - 1
    } else {
        opp
    }
}

fn sentence<R: Rng>(rng: &mut R, negated: bool, keyword: &str) -> String {
    let subject = SUBJECTS.choose(rng).expect("non-empty");
    let verb = VERBS.choose(rng).expect("non-empty");
    let intens = INTENSIFIERS.choose(rng).expect("non-empty");
    let tail = TAILS.choose(rng).expect("non-empty");
    let mut words: Vec<&str> = vec![subject, verb];
    if negated {
        words.push("not");
    } else if !intens.is_empty() {
        words.push(intens);
    }
    words.push(keyword);
    if !tail.is_empty() {
        words.push(tail);
    }
    let mut s = words.join(" ");
    s.push('.');
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => s,
    }
}

/// Label names used by the synthetic generator.
pub fn synthetic_label_names(classes: usize) -> Vec<String> {
    match classes {
        2 => vec!["negative".into(), "positive".into()],
        3 => vec!["negative".into(), "neutral".into(), "positive".into()],
        _ => (0..classes).map(|c| format!("class{c}")).collect(),
    }
}

/// Builds `n_per_class · classes` reviews from class-specific keyword pools
/// and shared filler. In each class, `round(n/10)` samples are negated
/// constructions (`not` + a keyword of the opposite class) that keep their
/// own label.
pub fn make_synthetic_corpus(n_per_class: usize, classes: usize, seed: u64) -> Result<LabeledCorpus> {
    if n_per_class == 0 {
        return Err(Error::Input("n per class must be at least 1".into()));
    }
    if classes < 2 {
        return Err(Error::Config("need at least two classes".into()));
    }
    let pools = class_pools(classes);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let negated_per_class = (n_per_class + 5) / 10;
    let mut samples = Vec::with_capacity(n_per_class * classes);
    for label in 0..classes {
        let mut flags: Vec<bool> = (0..n_per_class).map(|i| i < negated_per_class).collect();
        flags.shuffle(&mut rng);
        for negated in flags {
            let pool = if negated {
                &pools[opposite_class(label, classes)]
            } else {
                &pools[label]
            };
            let kw = pool.choose(&mut rng).expect("non-empty pool");
            let mut text = sentence(&mut rng, negated, kw);
            if !negated && rng.gen_bool(0.3) {
                // occasional second clause from the same class
                let kw2 = pools[label].choose(&mut rng).expect("non-empty pool");
                text.pop();
                text.push_str(&format!(" and {} {kw2}.", VERBS.choose(&mut rng).expect("non-empty")));
            }
            samples.push(Sample::new(text, label));
        }
    }
    samples.shuffle(&mut rng);
    LabeledCorpus::new(samples, synthetic_label_names(classes), "movie")
}

/// Whether a synthetic sentence is a negated construction.
pub fn is_negated_construction(text: &str) -> bool {
    crate::text::tokenizer::words(text).iter().any(|w| w == "not")
}
