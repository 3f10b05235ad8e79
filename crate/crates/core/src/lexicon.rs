//! Shipped word lists: sentiment synonym groups, stopwords, emotion seed
//! words, and negation/hedge cues.
//!
//! Class indices throughout the crate run from most negative (0) to most
//! positive (C-1); polarities here follow the same orientation.

use std::collections::HashMap;
use std::sync::OnceLock;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Polarity {
    Negative,
    Neutral,
    Positive,
}

impl Polarity {
    pub fn sign(self) -> i32 {
        match self {
            Polarity::Negative => -1,
            Polarity::Neutral => 0,
            Polarity::Positive => 1,
        }
    }

    /// Polarity of a class index among `classes` ordered negative → positive.
    pub fn of_class(label: usize, classes: usize) -> Polarity {
        if classes < 2 {
            return Polarity::Neutral;
        }
        // twice the label vs. (classes - 1) avoids fractional midpoints
        let twice = 2 * label;
        match twice.cmp(&(classes - 1)) {
            std::cmp::Ordering::Less => Polarity::Negative,
            std::cmp::Ordering::Equal => Polarity::Neutral,
            std::cmp::Ordering::Greater => Polarity::Positive,
        }
    }
}

/// Synonym groups; each word belongs to exactly one group.
pub const SYNONYM_GROUPS: &[(Polarity, &[&str])] = {
    use Polarity::{Negative as N, Positive as P};
    &[
        (P, &["fantastic", "wonderful", "excellent", "superb", "terrific"]),
        (P, &["great", "awesome", "outstanding", "splendid"]),
        (P, &["good", "fine", "nice", "decent", "solid"]),
        (P, &["amazing", "astonishing", "stunning", "remarkable"]),
        (P, &["brilliant", "dazzling", "exceptional", "magnificent"]),
        (P, &["delightful", "charming", "lovely", "pleasant"]),
        (P, &["enjoyable", "entertaining", "fun", "engaging"]),
        (P, &["beautiful", "gorgeous", "elegant", "exquisite"]),
        (P, &["friendly", "welcoming", "courteous", "attentive"]),
        (P, &["delicious", "tasty", "flavorful", "scrumptious"]),
        (P, &["fresh", "crisp", "vibrant", "lively"]),
        (P, &["happy", "glad", "pleased", "satisfied"]),
        (P, &["impressive", "admirable", "commendable", "praiseworthy"]),
        (P, &["perfect", "flawless", "ideal", "impeccable"]),
        (P, &["reliable", "dependable", "sturdy", "durable"]),
        (P, &["affordable", "reasonable", "economical", "inexpensive"]),
        (P, &["comfortable", "cozy", "relaxing", "soothing"]),
        (P, &["clever", "smart", "witty", "inventive"]),
        (P, &["moving", "touching", "heartfelt", "poignant"]),
        (P, &["fast", "quick", "speedy", "prompt"]),
        (P, &["masterpiece", "gem", "treasure", "triumph"]),
        (P, &["joy", "pleasure", "delight", "bliss"]),
        (P, &["love", "adore", "cherish"]),
        (P, &["best", "finest", "greatest"]),
        (N, &["terrible", "awful", "horrible", "dreadful"]),
        (N, &["bad", "poor", "lousy", "inferior"]),
        (N, &["boring", "dull", "tedious", "monotonous"]),
        (N, &["disappointing", "underwhelming", "unsatisfying", "mediocre"]),
        (N, &["rude", "impolite", "disrespectful", "dismissive"]),
        (N, &["tasteless", "bland", "stale", "soggy"]),
        (N, &["ugly", "hideous", "unsightly", "grotesque"]),
        (N, &["slow", "sluggish", "delayed", "lethargic"]),
        (N, &["expensive", "overpriced", "costly", "pricey"]),
        (N, &["broken", "defective", "faulty", "flimsy"]),
        (N, &["annoying", "irritating", "frustrating", "infuriating"]),
        (N, &["sad", "unhappy", "miserable", "depressed"]),
        (N, &["stupid", "dumb", "silly", "pointless"]),
        (N, &["worst", "weakest", "lowest"]),
        (N, &["disaster", "mess", "failure", "fiasco"]),
        (N, &["waste", "letdown", "flop", "dud"]),
        (N, &["hate", "despise", "loathe", "detest"]),
        (N, &["confusing", "incoherent", "muddled", "messy"]),
        (N, &["dirty", "filthy", "grimy", "unclean"]),
        (N, &["painful", "unbearable", "excruciating", "agonizing"]),
        (N, &["weak", "feeble", "lame", "shallow"]),
        (N, &["angry", "furious", "outraged", "livid"]),
        (N, &["scary", "frightening", "terrifying", "creepy"]),
        (N, &["predictable", "cliched", "formulaic", "derivative"]),
    ]
};

pub const STOPWORDS: &[&str] = &[
    "a", "an", "the", "it", "its", "it's", "was", "is", "are", "were", "be", "been", "being", "am",
    "this", "that", "these", "those", "and", "or", "but", "if", "of", "to", "in", "on", "at", "for",
    "with", "as", "by", "from", "about", "i", "me", "we", "us", "you", "he", "she", "they", "them",
    "my", "our", "your", "his", "her", "their", "so", "very", "really", "too", "just", "also", "has",
    "have", "had", "do", "does", "did", "there", "here", "then", "than", "what", "which", "who",
    "all", "some", "any", "will", "would", "could", "should", "can", "not", "no",
];

/// Default emotion lexicon in the `label: word word …` file format.
pub const DEFAULT_EMOTION_LEXICON: &str = "\
# emotion seed words (prototype initialisation)
joy: happy glad joy delight pleased fun bliss delightful wonderful love
trust: reliable dependable friendly attentive courteous sturdy durable solid recommend trust
fear: scary frightening terrifying creepy afraid fear worried nervous dread panic
surprise: amazing astonishing stunning remarkable surprising unexpected shocking sudden wow twist
sadness: sad unhappy miserable depressed disappointing letdown tears lonely gloomy sorrow
disgust: disgusting filthy dirty grimy gross tasteless stale soggy hideous awful
anger: angry furious outraged livid rude annoying irritating infuriating hate frustrating
anticipation: eager expect anticipate hope waiting upcoming soon excited looking forward
negation: not no never n't hardly
hedge: slightly somewhat barely a-bit
window: 3
lambda: 0.5
";

/// Rationale clauses appended by the explanation variant, per polarity.
pub const RATIONALES: &[(Polarity, &[&str])] = &[
    (
        Polarity::Positive,
        &[
            "the quality was excellent",
            "the staff was friendly",
            "the atmosphere was lovely",
            "the experience was delightful",
        ],
    ),
    (
        Polarity::Negative,
        &[
            "the quality was poor",
            "the staff was rude",
            "the wait was painful",
            "the experience was disappointing",
        ],
    ),
    (
        Polarity::Neutral,
        &["the experience was ordinary", "the result was as expected"],
    ),
];

struct Index {
    group_of: HashMap<&'static str, usize>,
}

fn index() -> &'static Index {
    static IDX: OnceLock<Index> = OnceLock::new();
    IDX.get_or_init(|| {
        let mut group_of = HashMap::new();
        for (g, (_, words)) in SYNONYM_GROUPS.iter().enumerate() {
            for w in words.iter() {
                let prev = group_of.insert(*w, g);
                debug_assert!(prev.is_none(), "word `{w}` in two synonym groups");
            }
        }
        Index { group_of }
    })
}

/// Synonyms of `word` (excluding itself), in table order.
pub fn synonyms(word: &str) -> Vec<&'static str> {
    match index().group_of.get(word) {
        Some(&g) => SYNONYM_GROUPS[g].1.iter().copied().filter(|w| *w != word).collect(),
        None => Vec::new(),
    }
}

/// Whether `word` is in the sentiment adjective/noun lexicon.
pub fn is_sentiment_word(word: &str) -> bool {
    index().group_of.contains_key(word)
}

pub fn polarity(word: &str) -> Option<Polarity> {
    index().group_of.get(word).map(|&g| SYNONYM_GROUPS[g].0)
}

pub fn is_stopword(word: &str) -> bool {
    STOPWORDS.contains(&word)
}

/// All words of a polarity, in table order.
pub fn words_with_polarity(p: Polarity) -> Vec<&'static str> {
    SYNONYM_GROUPS
        .iter()
        .filter(|(q, _)| *q == p)
        .flat_map(|(_, ws)| ws.iter().copied())
        .collect()
}

pub fn rationale_for(p: Polarity, identifier: &str) -> &'static str {
    let list = RATIONALES
        .iter()
        .find(|(q, _)| *q == p)
        .map(|(_, l)| *l)
        .expect("every polarity has rationales");
    let h: usize = identifier.bytes().map(usize::from).sum();
    list[h % list.len()]
}
