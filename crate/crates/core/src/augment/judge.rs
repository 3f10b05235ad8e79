//! Sentiment judges for the consistency filter.

use crate::error::Result;
use crate::lexicon::{self, Polarity};
use crate::text::tokenizer::words;

pub trait Judge: Sync {
    fn classify(&self, text: &str) -> Result<usize>;

    /// Whether `text` is consistent with `label`.
    fn agrees(&self, text: &str, label: usize) -> Result<bool> {
        Ok(self.classify(text)? == label)
    }
}

impl<F> Judge for F
where
    F: Fn(&str) -> Result<usize> + Sync,
{
    fn classify(&self, text: &str) -> Result<usize> {
        self(text)
    }
}

const NEGATIONS: &[&str] = &["not", "no", "never", "n't", "hardly"];
const NEGATION_WINDOW: usize = 3;

/// Sum of lexicon polarities, each flipped when a negation appears within the
/// three preceding tokens.
pub fn keyword_score(text: &str) -> i32 {
    let toks = words(text);
    toks.iter()
        .enumerate()
        .map(|(t, w)| {
            let s = lexicon::polarity(w).map_or(0, Polarity::sign);
            let negated = toks[t.saturating_sub(NEGATION_WINDOW)..t]
                .iter()
                .any(|p| NEGATIONS.contains(&p.as_str()));
            if negated {
                -s
            } else {
                s
            }
        })
        .sum()
}

/// Keyword-polarity heuristic used before a trained model is available.
///
/// `classify` maps a positive score to the top class, a negative score to
/// class 0 and zero to the middle class. `agrees` compares polarities only and
/// accepts texts with no lexical evidence.
#[derive(Clone, Copy, Debug)]
pub struct KeywordJudge {
    pub classes: usize,
}

impl KeywordJudge {
    pub fn new(classes: usize) -> Self {
        KeywordJudge { classes }
    }
}

impl Judge for KeywordJudge {
    fn classify(&self, text: &str) -> Result<usize> {
        let s = keyword_score(text);
        Ok(match s.signum() {
            1 => self.classes - 1,
            -1 => 0,
            _ => self.classes / 2,
        })
    }

    fn agrees(&self, text: &str, label: usize) -> Result<bool> {
        let s = keyword_score(text);
        Ok(s == 0 || s.signum() == Polarity::of_class(label, self.classes).sign())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scores() {
        assert_eq!(keyword_score("The food was fantastic"), 1);
        assert_eq!(keyword_score("The food was not fantastic"), -1);
        assert_eq!(keyword_score("awful and terrible"), -2);
        assert_eq!(keyword_score("it wasn't bad"), 1);
        assert_eq!(keyword_score("a table"), 0);
    }

    #[test]
    fn keyword_judge() {
        let j = KeywordJudge::new(2);
        assert_eq!(j.classify("great").unwrap(), 1);
        assert_eq!(j.classify("awful").unwrap(), 0);
        assert!(j.agrees("not great", 0).unwrap());
        assert!(!j.agrees("not great", 1).unwrap());
        assert!(j.agrees("a chair", 0).unwrap());
        let j5 = KeywordJudge::new(5);
        assert!(j5.agrees("good", 3).unwrap());
        assert!(!j5.agrees("good", 2).unwrap());
        assert_eq!(j5.classify("meh").unwrap(), 2);
    }

    #[test]
    fn closures_are_judges() {
        let j = |_: &str| -> Result<usize> { Ok(1) };
        assert!(j.agrees("x", 1).unwrap());
        assert!(!j.agrees("x", 0).unwrap());
    }
}
