//! Instruction templates that wrap a review in a domain directive and an
//! optional rationale comment.

use indexmap::IndexMap;

use crate::error::{Error, Result};

pub const DEFAULT_CONNECTOR: &str = "because";

/// Built-in domain tags and their directive sentences.
pub const DOMAIN_DIRECTIVES: [(&str, &str); 4] = [
    ("movie", "This is a movie review."),
    ("restaurant", "This is a restaurant review."),
    ("twitter", "This is a tweet."),
    ("product", "This is a product review."),
];

pub fn directive_for(domain: &str) -> Option<&'static str> {
    let d = domain.trim().to_lowercase();
    let d = match d.as_str() {
        "tweet" => "twitter",
        "yelp" => "restaurant",
        "imdb" => "movie",
        "amazon" => "product",
        other => other,
    };
    DOMAIN_DIRECTIVES
        .iter()
        .find(|(tag, _)| *tag == d)
        .map(|(_, s)| *s)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstructionTemplate {
    pub pattern_id: String,
    pub domain: String,
    /// Directive placed before the review when no context is supplied.
    pub prefix: String,
    /// Default label response used when the caller passes none.
    pub response: Option<String>,
    /// Default sentiment identifier used when the caller passes none.
    pub identifier: Option<String>,
    pub connector: String,
}

impl InstructionTemplate {
    pub fn new(pattern_id: &str, domain: &str, prefix: &str) -> Self {
        InstructionTemplate {
            pattern_id: pattern_id.to_string(),
            domain: domain.to_string(),
            prefix: prefix.to_string(),
            response: None,
            identifier: None,
            connector: DEFAULT_CONNECTOR.to_string(),
        }
    }

    /// Template for a built-in domain, prefixed with its directive.
    pub fn for_domain(domain: &str) -> Option<Self> {
        directive_for(domain).map(|d| InstructionTemplate::new(domain, domain, d))
    }

    /// Template with no directive.
    pub fn plain() -> Self {
        InstructionTemplate::new("plain", "generic", "")
    }
}

/// Renders the instruction-augmented text.
///
/// Layout: `[directive] Review: <x> [Comment: <r> <connector> "<i>" expresses strong sentiment.]`.
/// The directive comes from `context` when given (a known domain tag maps to
/// its directive sentence, anything else is used verbatim), otherwise from the
/// template prefix. The review is quoted only when a comment follows it.
pub fn apply_instruction(
    x: &str,
    context: Option<&str>,
    tmpl: &InstructionTemplate,
    response: Option<&str>,
    identifier: Option<&str>,
) -> Result<String> {
    if x.trim().is_empty() {
        return Err(Error::Input("review text is empty".into()));
    }
    let response = response.or(tmpl.response.as_deref()).filter(|s| !s.is_empty());
    let identifier = identifier.or(tmpl.identifier.as_deref()).filter(|s| !s.is_empty());

    let directive = match context.map(str::trim).filter(|c| !c.is_empty()) {
        Some(c) => directive_for(c).map_or_else(|| c.to_string(), str::to_string),
        None => tmpl.prefix.trim().to_string(),
    };

    let comment = match (response, identifier) {
        (None, None) => None,
        (Some(r), None) => Some(format!("Comment: {}.", r.trim_end_matches('.'))),
        (r, Some(i)) => {
            let rationale = format!("\"{i}\" expresses strong sentiment.");
            Some(match r {
                Some(r) => format!("Comment: {} {} {rationale}", r.trim_end_matches('.'), tmpl.connector),
                None => format!("Comment: {rationale}"),
            })
        }
    };

    let review = if comment.is_some() {
        format!("Review: \"{x}\"")
    } else {
        format!("Review: {x}")
    };

    let mut parts = Vec::with_capacity(3);
    if !directive.is_empty() {
        parts.push(directive);
    }
    parts.push(review);
    parts.extend(comment);
    Ok(parts.join(" "))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TemplateHandle(usize);

#[derive(Clone, Debug, Default)]
pub struct TemplateRegistry {
    templates: Vec<InstructionTemplate>,
    by_id: IndexMap<String, usize>,
}

impl TemplateRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// The plain template plus one template per built-in domain.
    pub fn builtin() -> Self {
        let mut r = TemplateRegistry::new();
        r.register(InstructionTemplate::plain()).expect("unique");
        for (tag, _) in DOMAIN_DIRECTIVES {
            r.register(InstructionTemplate::for_domain(tag).expect("built-in"))
                .expect("unique");
        }
        r
    }

    pub fn register(&mut self, tmpl: InstructionTemplate) -> Result<TemplateHandle> {
        if self.by_id.contains_key(&tmpl.pattern_id) {
            return Err(Error::Registry(format!(
                "pattern id `{}` already registered",
                tmpl.pattern_id
            )));
        }
        let h = self.templates.len();
        self.by_id.insert(tmpl.pattern_id.clone(), h);
        self.templates.push(tmpl);
        Ok(TemplateHandle(h))
    }

    pub fn get(&self, h: TemplateHandle) -> &InstructionTemplate {
        &self.templates[h.0]
    }

    pub fn by_id(&self, pattern_id: &str) -> Option<&InstructionTemplate> {
        self.by_id.get(pattern_id).map(|&i| &self.templates[i])
    }

    /// All templates for a domain tag, in registration order.
    pub fn by_domain(&self, domain: &str) -> Vec<&InstructionTemplate> {
        self.templates.iter().filter(|t| t.domain == domain).collect()
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

/// Parses a template file: `key=value` lines, `#` comments, records
/// separated by blank lines. Keys: `pattern_id`, `domain`, `prefix`,
/// `connector`, and optionally `response` and `identifier`.
pub fn parse_template_file(text: &str) -> Result<Vec<InstructionTemplate>> {
    let mut out = Vec::new();
    let mut current: Option<(usize, InstructionTemplate)> = None;
    let mut seen_id = false;

    let mut finish = |cur: &mut Option<(usize, InstructionTemplate)>, seen_id: &mut bool| -> Result<()> {
        if let Some((line, t)) = cur.take() {
            if !*seen_id {
                return Err(Error::Parse {
                    line,
                    msg: "template record has no pattern_id".into(),
                });
            }
            out.push(t);
        }
        *seen_id = false;
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.starts_with('#') {
            continue;
        }
        if line.is_empty() {
            finish(&mut current, &mut seen_id)?;
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: line_no,
            msg: format!("expected key=value, got `{line}`"),
        })?;
        let (key, value) = (key.trim(), value.trim().to_string());
        let (_, t) = current.get_or_insert_with(|| (line_no, InstructionTemplate::new("", "generic", "")));
        match key {
            "pattern_id" => {
                t.pattern_id = value;
                seen_id = true;
            }
            "domain" => t.domain = value,
            "prefix" => t.prefix = value,
            "connector" => t.connector = value,
            "response" => t.response = Some(value),
            "identifier" => t.identifier = Some(value),
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("unknown template key `{other}`"),
                })
            }
        }
    }
    finish(&mut current, &mut seen_id)?;
    Ok(out)
}
