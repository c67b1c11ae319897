//! Module cards: markdown documents with six required sections.
//!
//! A section is a heading of any level whose text, case-insensitively and
//! ignoring trailing `#` and `:`, equals one of [`REQUIRED_SECTIONS`]. Its
//! body runs to the next heading. Headings inside fenced code blocks do not
//! count.

use serde::Serialize;

pub const REQUIRED_SECTIONS: [&str; 6] = [
    "Description",
    "Intended Use",
    "Output Range",
    "Usage Examples",
    "Limitations and Biases",
    "Citation",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

/// One finding of a validation pass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub severity: Severity,
    pub code: String,
    pub message: String,
}

impl Violation {
    pub fn error(code: &str, message: impl Into<String>) -> Self {
        Violation { severity: Severity::Error, code: code.into(), message: message.into() }
    }

    pub fn warning(code: &str, message: impl Into<String>) -> Self {
        Violation { severity: Severity::Warning, code: code.into(), message: message.into() }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}[{}]: {}", self.code, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub title: String,
    pub body: String,
}

/// Heading-delimited sections of a markdown document, in order.
pub fn sections(markdown: &str) -> Vec<Section> {
    let mut out: Vec<Section> = Vec::new();
    let mut in_fence = false;
    for line in markdown.lines() {
        let trimmed = line.trim_start();
        if trimmed.starts_with("```") || trimmed.starts_with("~~~") {
            in_fence = !in_fence;
        } else if !in_fence {
            if let Some(title) = heading(trimmed) {
                out.push(Section { title, body: String::new() });
                continue;
            }
        }
        if let Some(s) = out.last_mut() {
            s.body.push_str(line);
            s.body.push('\n');
        }
    }
    out
}

fn heading(line: &str) -> Option<String> {
    let hashes = line.bytes().take_while(|&b| b == b'#').count();
    if hashes == 0 || hashes > 6 {
        return None;
    }
    let rest = &line[hashes..];
    if !(rest.is_empty() || rest.starts_with(' ') || rest.starts_with('\t')) {
        return None;
    }
    Some(rest.trim().trim_end_matches('#').trim().trim_end_matches(':').trim().to_string())
}

fn normalize(title: &str) -> String {
    title.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Body of the section titled `title`, if present.
pub fn section<'a>(all: &'a [Section], title: &str) -> Option<&'a Section> {
    let want = normalize(title);
    all.iter().find(|s| normalize(&s.title) == want)
}

/// Checks a card's sections; `outputs` are names the output-range section should mention.
pub fn check_card(markdown: &str, outputs: &[&str]) -> Vec<Violation> {
    let all = sections(markdown);
    let mut found = Vec::new();
    for title in REQUIRED_SECTIONS {
        match section(&all, title) {
            None => found.push(Violation::error(
                "card.section.missing",
                format!("card has no `{title}` section"),
            )),
            Some(s) if s.body.trim().is_empty() => found.push(Violation::error(
                "card.section.empty",
                format!("card section `{title}` is empty"),
            )),
            Some(_) => {}
        }
    }
    if let Some(range) = section(&all, "Output Range") {
        for name in outputs {
            if !mentions(&range.body, name) {
                found.push(Violation::warning(
                    "card.range.output",
                    format!("output `{name}` is not described in the `Output Range` section"),
                ));
            }
        }
    }
    found
}

/// Whole-word occurrence of `word` in `text`, where word characters are alphanumerics and `_`.
fn mentions(text: &str, word: &str) -> bool {
    let is_word = |c: char| c.is_alphanumeric() || c == '_';
    text.match_indices(word).any(|(i, _)| {
        let before = text[..i].chars().next_back();
        let after = text[i + word.len()..].chars().next();
        !before.is_some_and(is_word) && !after.is_some_and(is_word)
    })
}
