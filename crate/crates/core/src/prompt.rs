//! Prompt templates with `{{name}}` placeholders.
//!
//! A template file holds a `[system]` section followed by a `[user]`
//! section. The built-in templates are compiled in; a directory passed to
//! [`PromptSet::load_dir`] overrides any of them by file name.

use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("template is missing its [system] or [user] section")]
    MissingSection,
    #[error("template placeholder {{{{{0}}}}} has no value")]
    Unfilled(String),
    #[error("cannot read template {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub system: String,
    pub user: String,
}

impl Template {
    pub fn parse(text: &str) -> Result<Template, TemplateError> {
        let rest = text.trim_start().strip_prefix("[system]").ok_or(TemplateError::MissingSection)?;
        let (system, user) = rest.split_once("\n[user]").ok_or(TemplateError::MissingSection)?;
        Ok(Template { system: system.trim().to_string(), user: user.trim().to_string() })
    }

    /// Substitutes every placeholder; each one must have a value.
    pub fn render(&self, vars: &[(&str, &str)]) -> Result<(String, String), TemplateError> {
        Ok((fill(&self.system, vars)?, fill(&self.user, vars)?))
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<String> {
        let mut out = Vec::new();
        for text in [&self.system, &self.user] {
            let mut rest = text.as_str();
            while let Some(start) = rest.find("{{") {
                let Some(len) = rest[start + 2..].find("}}") else { break };
                let name = rest[start + 2..start + 2 + len].to_string();
                if !out.contains(&name) {
                    out.push(name);
                }
                rest = &rest[start + 2 + len + 2..];
            }
        }
        out
    }
}

fn fill(text: &str, vars: &[(&str, &str)]) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        let Some(len) = rest[start + 2..].find("}}") else { break };
        let name = &rest[start + 2..start + 2 + len];
        let value = vars.iter().find(|(k, _)| *k == name).ok_or_else(|| TemplateError::Unfilled(name.to_string()))?.1;
        out.push_str(&rest[..start]);
        out.push_str(value);
        rest = &rest[start + 2 + len + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

pub const CODING_FILE: &str = "coding_agent.txt";
pub const SEGMENTATION_FILE: &str = "segmentation.txt";
pub const FALLBACK_FILE: &str = "fallback.txt";

const CODING_TEXT: &str = include_str!("../prompts/coding_agent.txt");
const SEGMENTATION_TEXT: &str = include_str!("../prompts/segmentation.txt");
const FALLBACK_TEXT: &str = include_str!("../prompts/fallback.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub coding: Template,
    pub segmentation: Template,
    pub fallback: Template,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            coding: Template::parse(CODING_TEXT).expect("built-in template"),
            segmentation: Template::parse(SEGMENTATION_TEXT).expect("built-in template"),
            fallback: Template::parse(FALLBACK_TEXT).expect("built-in template"),
        }
    }
}

impl PromptSet {
    /// Built-in templates, each replaced by `dir/<file>` when that file exists.
    pub fn load_dir(dir: &Path) -> Result<PromptSet, TemplateError> {
        let mut set = PromptSet::default();
        for (file, slot) in
            [(CODING_FILE, &mut set.coding), (SEGMENTATION_FILE, &mut set.segmentation), (FALLBACK_FILE, &mut set.fallback)]
        {
            let path = dir.join(file);
            if path.exists() {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| TemplateError::Io { path: path.display().to_string(), reason: e.to_string() })?;
                *slot = Template::parse(&text)?;
            }
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_placeholders() {
        let p = PromptSet::default();
        assert_eq!(p.segmentation.placeholders(), ["resolution", "problem_statement", "code_snips"]);
        assert_eq!(p.coding.placeholders(), ["problem_statement", "artifact", "code_snips", "feedback"]);
        assert!(p.coding.system.contains(">>>>>>> REPLACE"));
        assert!(p.segmentation.user.contains("<result>"));
    }

    #[test]
    fn render_requires_every_value() {
        let t = Template::parse("[system]\nsize {{resolution}}\n[user]\n{{problem_statement}}!").unwrap();
        let (s, u) = t.render(&[("resolution", "640x480"), ("problem_statement", "broken")]).unwrap();
        assert_eq!((s.as_str(), u.as_str()), ("size 640x480", "broken!"));
        assert_eq!(t.render(&[("resolution", "1")]).unwrap_err(), TemplateError::Unfilled("problem_statement".into()));
        assert_eq!(Template::parse("no sections"), Err(TemplateError::MissingSection));
    }

    #[test]
    fn directory_overrides_by_name() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(SEGMENTATION_FILE), "[system]\nS\n[user]\nU {{resolution}}").unwrap();
        let set = PromptSet::load_dir(dir.path()).unwrap();
        assert_eq!(set.segmentation.user, "U {{resolution}}");
        assert_eq!(set.coding, PromptSet::default().coding);
    }

    #[test]
    fn values_are_not_rescanned() {
        let t = Template::parse("[system]\n[user]\n{{a}}").unwrap();
        assert_eq!(t.render(&[("a", "{{b}}")]).unwrap().1, "{{b}}");
    }
}
