//! Paraphrase providers: the built-in synonym table and the offline
//! exchange file.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lexicon;

/// One masked slot of a source sentence.
#[derive(Clone, Copy, Debug)]
pub struct MaskRequest<'a> {
    /// Source with the target token replaced by `[MASK]`.
    pub masked: &'a str,
    /// The token that was masked, as written.
    pub original: &'a str,
    pub source: &'a str,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Proposal {
    /// Replacement for the masked token.
    Fill(String),
    /// Whole-sentence paraphrase.
    Sentence(String),
}

pub trait ParaphraseProvider: Send + Sync {
    fn name(&self) -> &str;

    /// At most `k` proposals for the masked slot.
    fn propose(&self, req: &MaskRequest<'_>, k: usize) -> std::result::Result<Vec<Proposal>, String>;
}

/// Deterministic fills from the shipped synonym table.
#[derive(Clone, Copy, Debug, Default)]
pub struct SynonymProvider;

impl ParaphraseProvider for SynonymProvider {
    fn name(&self) -> &str {
        "synonym"
    }

    fn propose(&self, req: &MaskRequest<'_>, k: usize) -> std::result::Result<Vec<Proposal>, String> {
        let word = req.original.to_lowercase();
        let capital = req.original.chars().next().is_some_and(char::is_uppercase);
        Ok(lexicon::synonyms(&word)
            .into_iter()
            .take(k)
            .map(|s| {
                if capital {
                    let mut c = s.chars();
                    let first = c.next().map(|f| f.to_uppercase().collect::<String>()).unwrap_or_default();
                    Proposal::Fill(first + c.as_str())
                } else {
                    Proposal::Fill(s.to_string())
                }
            })
            .collect())
    }
}

/// One row of the paraphrase exchange file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParaphraseRow {
    pub source_text: String,
    pub augmented_text: String,
    pub label: i64,
    pub provider: String,
}

pub const PARAPHRASE_COLUMNS: [&str; 4] = ["source_text", "augmented_text", "label", "provider"];

pub fn read_paraphrase_csv<R: std::io::Read>(reader: R) -> Result<Vec<ParaphraseRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut cols = [0usize; 4];
    for (slot, name) in cols.iter_mut().zip(PARAPHRASE_COLUMNS) {
        *slot = headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            line: 1,
            msg: format!("missing column `{name}`"),
        })?;
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let get = |i: usize| rec.get(cols[i]).unwrap_or("").to_string();
        let label = get(2).trim().parse().map_err(|_| Error::Parse {
            line,
            msg: format!("label `{}` is not an integer", get(2)),
        })?;
        rows.push(ParaphraseRow {
            source_text: get(0),
            augmented_text: get(1),
            label,
            provider: get(3),
        });
    }
    Ok(rows)
}

pub fn write_paraphrase_csv<W: std::io::Write>(writer: W, rows: &[ParaphraseRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PARAPHRASE_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.source_text.as_str(),
            r.augmented_text.as_str(),
            &r.label.to_string(),
            r.provider.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Replays paraphrases produced out of process, keyed by source text.
#[derive(Clone, Debug)]
pub struct OfflineProvider {
    name: String,
    by_source: HashMap<String, Vec<String>>,
}

impl OfflineProvider {
    pub fn from_rows(rows: Vec<ParaphraseRow>) -> Self {
        let name = rows
            .first()
            .map(|r| r.provider.clone())
            .filter(|p| !p.is_empty())
            .unwrap_or_else(|| "offline".to_string());
        let mut by_source: HashMap<String, Vec<String>> = HashMap::new();
        for r in rows {
            by_source.entry(r.source_text).or_default().push(r.augmented_text);
        }
        OfflineProvider { name, by_source }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Ok(Self::from_rows(read_paraphrase_csv(f)?))
    }

    pub fn sources(&self) -> usize {
        self.by_source.len()
    }
}

impl ParaphraseProvider for OfflineProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn propose(&self, req: &MaskRequest<'_>, k: usize) -> std::result::Result<Vec<Proposal>, String> {
        Ok(self
            .by_source
            .get(req.source)
            .map(|v| v.iter().take(k).cloned().map(Proposal::Sentence).collect())
            .unwrap_or_default())
    }
}
