//! Prompt templates with named `{Placeholder}` slots, rendered in a single
//! pass so that substituted text is never re-scanned.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::sha256_hex;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template {template} needs a value for {placeholder}")]
    MissingValue {
        template: &'static str,
        placeholder: String,
    },
    #[error("template {template} has no placeholder {placeholder}")]
    UnknownPlaceholder {
        template: &'static str,
        placeholder: String,
    },
    #[error("template {template} must contain {placeholder} exactly once")]
    Malformed {
        template: &'static str,
        placeholder: String,
    },
    #[error("reading template {0}: {1}")]
    Io(String, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Summarization,
    Generation,
    Relevance,
    Ablation,
    Optimization,
    Keywords,
}

impl TemplateId {
    pub const ALL: [TemplateId; 6] = [
        TemplateId::Summarization,
        TemplateId::Generation,
        TemplateId::Relevance,
        TemplateId::Ablation,
        TemplateId::Optimization,
        TemplateId::Keywords,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            TemplateId::Summarization => "summarization.md",
            TemplateId::Generation => "generation.md",
            TemplateId::Relevance => "relevance.md",
            TemplateId::Ablation => "ablation.md",
            TemplateId::Optimization => "optimization.md",
            TemplateId::Keywords => "keywords.md",
        }
    }

    pub fn placeholders(self) -> &'static [&'static str] {
        match self {
            TemplateId::Summarization => &["{Protein Description}", "{BioAssay JSON}"],
            TemplateId::Generation => &["{Protein Description}", "{Assay Content}"],
            TemplateId::Relevance => &["{protein description}", "{BioAssay content}"],
            TemplateId::Ablation => &["{protein_description}"],
            TemplateId::Optimization => &["{hERG description}", "{hERG BioAssays}", "{Input SMILES}"],
            TemplateId::Keywords => &["{description}"],
        }
    }

    fn builtin_text(self) -> &'static str {
        match self {
            TemplateId::Summarization => include_str!("../templates/summarization.md"),
            TemplateId::Generation => include_str!("../templates/generation.md"),
            TemplateId::Relevance => include_str!("../templates/relevance.md"),
            TemplateId::Ablation => include_str!("../templates/ablation.md"),
            TemplateId::Optimization => include_str!("../templates/optimization.md"),
            TemplateId::Keywords => include_str!("../templates/keywords.md"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    id: TemplateId,
    text: String,
}

impl Template {
    pub fn builtin(id: TemplateId) -> Self {
        Template {
            id,
            text: id.builtin_text().to_string(),
        }
    }

    /// Reads `<dir>/<file_name>`; falls back to the built-in copy when absent.
    pub fn load(dir: Option<&Path>, id: TemplateId) -> Result<Self, TemplateError> {
        let Some(path) = dir.map(|d| d.join(id.file_name())).filter(|p| p.exists()) else {
            return Ok(Self::builtin(id));
        };
        let text =
            fs::read_to_string(&path).map_err(|e| TemplateError::Io(path.display().to_string(), e.to_string()))?;
        let t = Template { id, text };
        t.check()?;
        Ok(t)
    }

    fn check(&self) -> Result<(), TemplateError> {
        for p in self.id.placeholders() {
            if self.text.matches(p).count() != 1 {
                return Err(TemplateError::Malformed {
                    template: self.id.file_name(),
                    placeholder: p.to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn id(&self) -> TemplateId {
        self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn digest(&self) -> String {
        sha256_hex(&self.text)
    }

    /// Substitutes every placeholder; each must be supplied exactly once.
    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, TemplateError> {
        let name = self.id.file_name();
        for (k, _) in values {
            if !self.id.placeholders().contains(k) {
                return Err(TemplateError::UnknownPlaceholder {
                    template: name,
                    placeholder: k.to_string(),
                });
            }
        }
        let mut slots: Vec<(usize, &str, &str)> = Vec::new();
        for p in self.id.placeholders() {
            let value =
                values
                    .iter()
                    .find(|(k, _)| k == p)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| TemplateError::MissingValue {
                        template: name,
                        placeholder: p.to_string(),
                    })?;
            let pos = self.text.find(p).ok_or_else(|| TemplateError::Malformed {
                template: name,
                placeholder: p.to_string(),
            })?;
            slots.push((pos, p, value));
        }
        slots.sort_by_key(|s| s.0);
        let mut out = String::with_capacity(self.text.len() + values.iter().map(|(_, v)| v.len()).sum::<usize>());
        let mut cursor = 0;
        for (pos, p, value) in slots {
            out.push_str(&self.text[cursor..pos]);
            out.push_str(value);
            cursor = pos + p.len();
        }
        out.push_str(&self.text[cursor..]);
        Ok(out)
    }

    pub fn render_empty(&self) -> String {
        let values: Vec<(&str, &str)> = self.id.placeholders().iter().map(|p| (*p, "")).collect();
        self.render(&values).expect("all placeholders supplied")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_well_formed() {
        for id in TemplateId::ALL {
            Template::builtin(id).check().unwrap();
        }
    }

    #[test]
    fn substituted_text_is_not_rescanned() {
        let t = Template::builtin(TemplateId::Generation);
        let out = t
            .render(&[("{Protein Description}", "{Assay Content}"), ("{Assay Content}", "x")])
            .unwrap();
        assert!(out.contains("## Query Protein\n{Assay Content}\n## BioAssays\nx\n"));
    }

    #[test]
    fn render_errors() {
        let t = Template::builtin(TemplateId::Ablation);
        assert!(matches!(t.render(&[]), Err(TemplateError::MissingValue { .. })));
        assert!(matches!(
            t.render(&[("{protein_description}", "p"), ("{x}", "y")]),
            Err(TemplateError::UnknownPlaceholder { .. })
        ));
    }

    #[test]
    fn stray_brace_in_relevance_template_is_literal() {
        let t = Template::builtin(TemplateId::Relevance);
        let out = t
            .render(&[("{protein description}", "P"), ("{BioAssay content}", "B")])
            .unwrap();
        assert!(out.contains("with the {Query Protein, else"));
    }
}
