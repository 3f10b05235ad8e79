//! Word-level tokenizer with BERT-style special tokens.
//!
//! Text is lowercased and split on whitespace; every punctuation character
//! becomes its own token. A trailing `n't` is kept whole (`don't` → `do`,
//! `n't`) so negation cues survive tokenization.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const MASK: u32 = 2;
pub const CLS: u32 = 3;
pub const SEP: u32 = 4;

pub const SPECIALS: [&str; 5] = ["[PAD]", "[UNK]", "[MASK]", "[CLS]", "[SEP]"];

/// Byte ranges of the tokens of `text`, case preserved.
pub fn token_spans(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let end_of = |i: usize| chars.get(i).map_or(text.len(), |c| c.0);
    let mut spans = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (start, ch) = chars[i];
        if ch.is_whitespace() {
            i += 1;
            continue;
        }
        if !ch.is_alphanumeric() {
            spans.push((start, end_of(i + 1)));
            i += 1;
            continue;
        }
        let mut j = i;
        while j < chars.len() && chars[j].1.is_alphanumeric() {
            j += 1;
        }
        // "...n't" followed by a non-alphanumeric boundary
        let contraction = j + 1 < chars.len()
            && chars[j - 1].1.eq_ignore_ascii_case(&'n')
            && matches!(chars[j].1, '\'' | '’')
            && chars[j + 1].1.eq_ignore_ascii_case(&'t')
            && chars.get(j + 2).is_none_or(|c| !c.1.is_alphanumeric());
        if contraction {
            if j - 1 > i {
                spans.push((start, chars[j - 1].0));
            }
            spans.push((chars[j - 1].0, end_of(j + 2)));
            i = j + 2;
        } else {
            spans.push((start, end_of(j)));
            i = j;
        }
    }
    spans
}

/// Lowercased word tokens (no specials).
pub fn words(text: &str) -> Vec<String> {
    token_spans(text)
        .into_iter()
        .map(|(s, e)| text[s..e].to_lowercase().replace('’', "'"))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    max_size: usize,
}

impl Vocab {
    /// Vocabulary holding only the special tokens.
    pub fn specials_only(max_size: usize) -> Self {
        let tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocab {
            tokens,
            index,
            max_size,
        }
    }

    /// Builds from explicit tokens (after the specials), in order.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocab::specials_only(usize::MAX);
        for t in tokens {
            v.push(t.into());
        }
        v.max_size = v.len();
        v
    }

    fn push(&mut self, token: String) {
        if !self.index.contains_key(&token) {
            self.index.insert(token.clone(), self.tokens.len() as u32);
            self.tokens.push(token);
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> u32 {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line, in id order.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for t in &self.tokens {
            writeln!(w, "{t}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut tokens = Vec::new();
        for line in r.lines() {
            tokens.push(line?);
        }
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(Error::Parse {
                line: 1,
                msg: "vocabulary must start with the special tokens".into(),
            });
        }
        Ok(Vocab::from_tokens(tokens.into_iter().skip(SPECIALS.len())))
    }
}

/// Frequency-ranked vocabulary; ties broken lexicographically.
pub fn build_vocab<I, S>(corpus: I, max_size: usize) -> Result<Vocab>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if max_size < SPECIALS.len() {
        return Err(Error::Config(format!(
            "vocabulary size {max_size} cannot hold the {} special tokens",
            SPECIALS.len()
        )));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut docs = 0usize;
    for text in corpus {
        docs += 1;
        for w in words(text.as_ref()) {
            *counts.entry(w).or_default() += 1;
        }
    }
    if docs == 0 {
        return Err(Error::Input("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut ranked: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(w, _)| !SPECIALS.contains(&w.as_str()))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut v = Vocab::specials_only(max_size);
    for (w, _) in ranked.into_iter().take(max_size - SPECIALS.len()) {
        v.push(w);
    }
    Ok(v)
}

/// `[CLS] tokens… [SEP]`, truncated to `max_len` ids with `[SEP]` kept last.
pub fn tokenize(text: &str, vocab: &Vocab, max_len: usize) -> Result<Vec<u32>> {
    if max_len < 3 {
        return Err(Error::Config(format!("max_len must be at least 3, got {max_len}")));
    }
    let mut ids = Vec::with_capacity(max_len);
    ids.push(CLS);
    ids.extend(
        words(text)
            .iter()
            .take(max_len - 2)
            .map(|w| vocab.id_or_unk(w)),
    );
    ids.push(SEP);
    Ok(ids)
}

/// Space-joined tokens with specials dropped.
pub fn detokenize(ids: &[u32], vocab: &Vocab) -> String {
    ids.iter()
        .filter(|&&id| id as usize >= SPECIALS.len())
        .filter_map(|&id| vocab.token(id))
        .collect::<Vec<_>>()
        .join(" ")
}
