//! Sentiment-preserving data augmentation: mask sentiment-bearing words,
//! propose replacements, add style and rationale variants, and keep only the
//! candidates a judge finds consistent with the source label.

pub mod judge;
pub mod provider;

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{LabeledCorpus, Sample};
use crate::error::{Error, Result};
use crate::lexicon::{self, Polarity};
use crate::text::tokenizer::{token_spans, words};

pub use judge::{keyword_score, Judge, KeywordJudge};
pub use provider::{
    MaskRequest, OfflineProvider, ParaphraseProvider, ParaphraseRow, Proposal, SynonymProvider,
};

pub const DEFAULT_K: usize = 3;
pub const MASK_TOKEN: &str = "[MASK]";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Provenance {
    MaskFill,
    Style,
    Rationale,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::MaskFill => "mask-fill",
            Provenance::Style => "style",
            Provenance::Rationale => "rationale",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AugmentedSample {
    pub source: String,
    pub text: String,
    pub label: usize,
    pub provenance: Provenance,
    pub provider: String,
}

/// Token positions to mask: lexicon hits, else the longest non-stopword token
/// (the longest token when every token is a stopword). Ties go to the first.
pub fn select_mask_targets(x: &str) -> Vec<usize> {
    let toks = words(x);
    let hits: Vec<usize> = toks
        .iter()
        .enumerate()
        .filter(|(_, w)| lexicon::is_sentiment_word(w))
        .map(|(i, _)| i)
        .collect();
    if !hits.is_empty() || toks.is_empty() {
        return hits;
    }
    let longest = |pool: &mut dyn Iterator<Item = (usize, &String)>| {
        let mut best: Option<(usize, usize)> = None;
        for (i, w) in pool {
            let len = w.chars().count();
            if best.is_none_or(|(_, l)| len > l) {
                best = Some((i, len));
            }
        }
        best.map(|b| b.0)
    };
    let content = longest(&mut toks.iter().enumerate().filter(|(_, w)| {
        !lexicon::is_stopword(w) && w.chars().any(char::is_alphanumeric)
    }));
    content
        .or_else(|| longest(&mut toks.iter().enumerate()))
        .into_iter()
        .collect()
}

fn dedup_push(out: &mut Vec<String>, seen: &mut HashSet<String>, s: String) {
    if seen.insert(s.clone()) {
        out.push(s);
    }
}

/// Candidates for each masked position, at most `k` per position, deduplicated
/// and never equal to `x`.
pub fn generate_candidates(
    x: &str,
    positions: &[usize],
    provider: &dyn ParaphraseProvider,
    k: usize,
) -> Result<Vec<String>> {
    if k == 0 || positions.is_empty() {
        return Ok(Vec::new());
    }
    let spans = token_spans(x);
    let mut seen = HashSet::from([x.to_string()]);
    let mut out = Vec::new();
    for &p in positions {
        let &(s, e) = spans.get(p).ok_or_else(|| {
            Error::Input(format!("mask position {p} outside {} tokens", spans.len()))
        })?;
        let masked = format!("{}{MASK_TOKEN}{}", &x[..s], &x[e..]);
        let req = MaskRequest {
            masked: &masked,
            original: &x[s..e],
            source: x,
        };
        let proposals = provider.propose(&req, k).map_err(|msg| Error::Provider {
            provider: provider.name().to_string(),
            msg,
        })?;
        for prop in proposals.into_iter().take(k) {
            let cand = match prop {
                Proposal::Fill(w) => format!("{}{w}{}", &x[..s], &x[e..]),
                Proposal::Sentence(t) => t,
            };
            if !cand.trim().is_empty() {
                dedup_push(&mut out, &mut seen, cand);
            }
        }
    }
    Ok(out)
}

/// Appends a `because` clause suited to the label's polarity.
pub fn add_rationale_variant(x: &str, label: usize, classes: usize, identifier: &str) -> Result<String> {
    let id = identifier.to_lowercase();
    if id.is_empty() || !words(x).contains(&id) {
        return Err(Error::Input(format!("identifier `{identifier}` does not occur in the text")));
    }
    let stem = x.trim_end().trim_end_matches(['.', '!', '?']);
    let reason = lexicon::rationale_for(Polarity::of_class(label, classes), &id);
    Ok(format!("{stem} because {reason}."))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Style {
    Formal,
    Informal,
}

const CONTRACTIONS: &[(&str, &str)] = &[
    ("don't", "do not"),
    ("doesn't", "does not"),
    ("didn't", "did not"),
    ("isn't", "is not"),
    ("wasn't", "was not"),
    ("aren't", "are not"),
    ("weren't", "were not"),
    ("can't", "cannot"),
    ("won't", "will not"),
    ("couldn't", "could not"),
    ("wouldn't", "would not"),
    ("it's", "it is"),
    ("that's", "that is"),
    ("i'm", "i am"),
    ("you're", "you are"),
    ("they're", "they are"),
];

const CASUAL: &[(&str, &str)] = &[
    ("gonna", "going to"),
    ("kinda", "kind of"),
    ("super", "very"),
    ("pretty", "rather"),
];

fn split_punct(word: &str) -> (&str, &str) {
    let core = word.trim_end_matches(|c: char| !c.is_alphanumeric() && c != '\'');
    (core, &word[core.len()..])
}

fn match_case(template: &str, replacement: &str) -> String {
    if template.chars().next().is_some_and(char::is_uppercase) {
        let mut c = replacement.chars();
        c.next()
            .map(|f| f.to_uppercase().collect::<String>() + c.as_str())
            .unwrap_or_default()
    } else {
        replacement.to_string()
    }
}

fn capitalize_first(s: &str) -> String {
    match_case("A", s)
}

fn set_terminal(s: &str, mark: char) -> String {
    let stem = s.trim_end().trim_end_matches(['.', '!', '?']);
    format!("{stem}{mark}")
}

/// Register rewrite: expand or contract common phrases and adjust the final
/// punctuation.
pub fn style_variant(x: &str, style: Style) -> String {
    let pieces: Vec<&str> = x.split_whitespace().collect();
    let mut out: Vec<String> = Vec::with_capacity(pieces.len());
    let mut i = 0;
    while i < pieces.len() {
        let (core, tail) = split_punct(pieces[i]);
        let lower = core.to_lowercase();
        match style {
            Style::Formal => {
                let rep = CONTRACTIONS
                    .iter()
                    .chain(CASUAL)
                    .find(|(short, _)| *short == lower)
                    .map(|(_, long)| *long);
                out.push(match rep {
                    Some(long) => format!("{}{tail}", match_case(core, long)),
                    None => pieces[i].to_string(),
                });
                i += 1;
            }
            Style::Informal => {
                if tail.is_empty() {
                    if let Some(next) = pieces.get(i + 1) {
                        let (ncore, ntail) = split_punct(next);
                        let pair = format!("{lower} {}", ncore.to_lowercase());
                        if let Some((short, _)) = CONTRACTIONS.iter().find(|(_, long)| *long == pair) {
                            out.push(format!("{}{ntail}", match_case(core, short)));
                            i += 2;
                            continue;
                        }
                    }
                }
                let rep = CASUAL.iter().find(|(_, long)| *long == lower).map(|(s, _)| *s);
                out.push(match rep {
                    Some(short) => format!("{}{tail}", match_case(core, short)),
                    None => pieces[i].to_string(),
                });
                i += 1;
            }
        }
    }
    let joined = out.join(" ");
    match style {
        Style::Formal => capitalize_first(&set_terminal(&joined, '.')),
        Style::Informal => {
            let mut c = joined.chars();
            let lowered = c
                .next()
                .map(|f| f.to_lowercase().collect::<String>() + c.as_str())
                .unwrap_or_default();
            set_terminal(&lowered, '!')
        }
    }
}

fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Register chosen for sample `index` under `seed`.
pub fn style_for(seed: u64, index: usize) -> Style {
    if sample_rng(seed, index).gen_bool(0.5) {
        Style::Formal
    } else {
        Style::Informal
    }
}

/// All candidates for one sample before filtering, in generation order.
pub fn sample_candidates(
    sample: &Sample,
    classes: usize,
    provider: &dyn ParaphraseProvider,
    k: usize,
    style: Style,
) -> Result<Vec<AugmentedSample>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let x = sample.text.as_str();
    let positions = select_mask_targets(x);
    let mut seen = HashSet::from([x.to_string()]);
    let mut out = Vec::new();
    let mut push = |text: String, provenance: Provenance, provider: &str| {
        if seen.insert(text.clone()) {
            out.push(AugmentedSample {
                source: x.to_string(),
                text,
                label: sample.label,
                provenance,
                provider: provider.to_string(),
            });
        }
    };
    for c in generate_candidates(x, &positions, provider, k)? {
        push(c, Provenance::MaskFill, provider.name());
    }
    push(style_variant(x, style), Provenance::Style, "style");
    if let Some(&p) = positions.first() {
        let id = words(x)[p].clone();
        push(add_rationale_variant(x, sample.label, classes, &id)?, Provenance::Rationale, "rationale");
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilterOutcome {
    pub retained: Vec<AugmentedSample>,
    pub considered: usize,
}

impl FilterOutcome {
    pub fn retention_rate(&self) -> f64 {
        if self.considered == 0 {
            0.0
        } else {
            self.retained.len() as f64 / self.considered as f64
        }
    }
}

/// Keeps exactly the candidates the judge agrees with.
pub fn filter_consistent(candidates: Vec<AugmentedSample>, judge: &dyn Judge) -> Result<FilterOutcome> {
    let considered = candidates.len();
    let mut retained = Vec::with_capacity(considered);
    for c in candidates {
        if judge.agrees(&c.text, c.label)? {
            retained.push(c);
        }
    }
    Ok(FilterOutcome { retained, considered })
}

#[derive(Clone, Debug)]
pub struct AugmentReport {
    /// Source samples followed by retained augmentations.
    pub corpus: LabeledCorpus,
    pub augmented: Vec<AugmentedSample>,
    pub candidates: usize,
    pub per_class_added: Vec<usize>,
}

impl AugmentReport {
    pub fn retention_rate(&self) -> f64 {
        if self.candidates == 0 {
            0.0
        } else {
            self.augmented.len() as f64 / self.candidates as f64
        }
    }
}

/// Augments every sample (in parallel) and appends the retained candidates
/// after the originals, in source order.
pub fn augment_corpus(
    corpus: &LabeledCorpus,
    provider: &dyn ParaphraseProvider,
    k: usize,
    judge: &dyn Judge,
    seed: u64,
) -> Result<AugmentReport> {
    let classes = corpus.num_classes();
    let per_sample: Vec<FilterOutcome> = corpus
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let cands = sample_candidates(s, classes, provider, k, style_for(seed, i))?;
            filter_consistent(cands, judge)
        })
        .collect::<Result<_>>()?;

    let mut samples = corpus.samples.clone();
    let mut augmented = Vec::new();
    let mut candidates = 0;
    let mut per_class_added = vec![0; classes];
    for outcome in per_sample {
        candidates += outcome.considered;
        for a in outcome.retained {
            per_class_added[a.label] += 1;
            samples.push(Sample::new(a.text.clone(), a.label));
            augmented.push(a);
        }
    }
    Ok(AugmentReport {
        corpus: corpus.with_samples(samples),
        augmented,
        candidates,
        per_class_added,
    })
}
