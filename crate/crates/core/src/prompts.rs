//! Prompt-set construction by keyword substitution into context templates.
//!
//! A template holds one `{}` slot, or numbered slots `{1}`, `{2}`, ... for
//! prompts naming several concepts. Filling the same templates once with the
//! learned keyword and once with the concept word gives two lists that are
//! paired by index and differ only inside the slot.

use std::path::Path;

use crate::error::{Error, Result};

pub const PLACEHOLDER: &str = "{}";

#[derive(Debug, Clone, PartialEq, Eq)]
enum Slots {
    Single,
    /// Number of distinct numbered slots, `{1}..={n}`.
    Numbered(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextTemplate {
    text: String,
    slots: Slots,
}

impl ContextTemplate {
    pub fn parse(text: impl Into<String>) -> Result<Self> {
        Self::parse_at(text.into(), None)
    }

    fn parse_at(text: String, line: Option<usize>) -> Result<Self> {
        let malformed = |reason: String| Error::MalformedTemplate { line, reason };
        let singles = text.matches(PLACEHOLDER).count();
        let mut numbered = 0;
        while text.contains(&format!("{{{}}}", numbered + 1)) {
            numbered += 1;
        }
        match (singles, numbered) {
            (1, 0) => Ok(Self {
                text,
                slots: Slots::Single,
            }),
            (0, 0) => Err(malformed(format!("no `{PLACEHOLDER}` placeholder in {text:?}"))),
            (0, n) => Ok(Self {
                text,
                slots: Slots::Numbered(n),
            }),
            (k, 0) => Err(malformed(format!(
                "{k} `{PLACEHOLDER}` placeholders in {text:?}; expected one"
            ))),
            _ => Err(malformed(format!(
                "mixes `{PLACEHOLDER}` with numbered slots in {text:?}"
            ))),
        }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn slot_count(&self) -> usize {
        match self.slots {
            Slots::Single => 1,
            Slots::Numbered(n) => n,
        }
    }

    /// Substitutes `words[k]` into slot `k`. Surrounding text is kept
    /// byte-for-byte.
    pub fn fill(&self, words: &[&str]) -> Result<String> {
        if words.len() != self.slot_count() {
            return Err(Error::MalformedTemplate {
                line: None,
                reason: format!(
                    "template has {} slot(s) but {} word(s) were given",
                    self.slot_count(),
                    words.len()
                ),
            });
        }
        Ok(match self.slots {
            Slots::Single => self.text.replacen(PLACEHOLDER, words[0], 1),
            Slots::Numbered(_) => {
                // single pass so that substituted words are never re-scanned
                let mut out = String::with_capacity(self.text.len());
                let mut rest = self.text.as_str();
                while let Some(open) = rest.find('{') {
                    out.push_str(&rest[..open]);
                    let tail = &rest[open..];
                    let slot = tail
                        .find('}')
                        .and_then(|close| tail[1..close].parse::<usize>().ok().map(|k| (k, close)))
                        .filter(|&(k, _)| (1..=words.len()).contains(&k));
                    match slot {
                        Some((k, close)) => {
                            out.push_str(words[k - 1]);
                            rest = &tail[close + 1..];
                        }
                        None => {
                            out.push('{');
                            rest = &tail[1..];
                        }
                    }
                }
                out.push_str(rest);
                out
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetKind {
    /// Long, context-rich sentences.
    Contextual,
    /// Short captions where the concept is the only subject.
    Simple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceForm {
    Keyword,
    Concept,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSetSpec {
    pub templates: Vec<ContextTemplate>,
    pub keyword: String,
    pub concept: String,
    pub set_kind: SetKind,
}

impl PromptSetSpec {
    pub fn new(
        templates: Vec<ContextTemplate>,
        keyword: impl Into<String>,
        concept: impl Into<String>,
        set_kind: SetKind,
    ) -> Result<Self> {
        let spec = Self {
            templates,
            keyword: keyword.into(),
            concept: concept.into(),
            set_kind,
        };
        if spec.templates.is_empty() {
            return Err(Error::InvalidParameter("at least one template is required".into()));
        }
        if spec.keyword.is_empty() || spec.concept.is_empty() {
            return Err(Error::InvalidParameter("keyword and concept must be non-empty".into()));
        }
        Ok(spec)
    }
}

/// Fills every template with the keyword or the concept, preserving order.
pub fn construct(spec: &PromptSetSpec, form: SurfaceForm) -> Result<Vec<String>> {
    let word = match form {
        SurfaceForm::Keyword => spec.keyword.as_str(),
        SurfaceForm::Concept => spec.concept.as_str(),
    };
    spec.templates
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if t.slot_count() != 1 {
                return Err(Error::MalformedTemplate {
                    line: None,
                    reason: format!("template {i} has {} slots; use construct_multi", t.slot_count()),
                });
            }
            t.fill(&[word])
        })
        .collect()
}

/// Fills numbered templates with one surface form per slot.
pub fn construct_multi(templates: &[ContextTemplate], words: &[&str]) -> Result<Vec<String>> {
    templates.iter().map(|t| t.fill(words)).collect()
}

/// Parses a template file: one template per line, blank lines and lines whose
/// first non-blank character is `#` skipped. Line numbers in errors are
/// 1-based.
pub fn parse_templates(content: &str) -> Result<Vec<ContextTemplate>> {
    content
        .lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim_start();
            !t.is_empty() && !t.starts_with('#')
        })
        .map(|(i, l)| ContextTemplate::parse_at(l.to_string(), Some(i + 1)))
        .collect()
}

pub fn load_templates(path: impl AsRef<Path>) -> Result<Vec<ContextTemplate>> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_templates(&content)
}
