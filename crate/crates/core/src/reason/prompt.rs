//! Prompt construction for the remote generative model.

use serde::{Deserialize, Serialize};

use crate::model::{serialize_record, serialize_tuple, Columns, ConfigError, FieldError, Tuple};

/// Placeholder replaced by the dirty attribute name.
pub const ATTR_PLACEHOLDER: &str = "{attr}";

/// User-overridable question wording. Serialization of the tuples is fixed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplate {
    /// Question appended to a standalone tuple.
    pub question: String,
    /// First cascaded question of a pair prompt.
    pub match_question: String,
    /// Second cascaded question, active only when the first is answered Yes.
    pub value_question: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            question: "what is the value of {attr}".into(),
            match_question: "Do these two tuples relate to the same exact entity?".into(),
            value_question: "what is the value for {attr}?".into(),
        }
    }
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errors = Vec::new();
        for (field, text) in [
            ("template.question", &self.question),
            ("template.value_question", &self.value_question),
        ] {
            let n = text.matches(ATTR_PLACEHOLDER).count();
            if n != 1 {
                errors.push(FieldError::new(
                    field,
                    format!("must contain {ATTR_PLACEHOLDER} exactly once (found {n})"),
                ));
            }
        }
        if self.match_question.trim().is_empty() {
            errors.push(FieldError::new("template.match_question", "must not be empty"));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errors))
        }
    }

    fn render(pattern: &str, attr: &str) -> String {
        pattern.replacen(ATTR_PLACEHOLDER, attr, 1)
    }
}

/// `[p1 : v1 ; ... ; dirty : ] <question>`
pub fn build_standalone_prompt(
    t: &Tuple,
    dirty: &str,
    pivots: &Columns,
    template: &PromptTemplate,
) -> Result<String, ConfigError> {
    let mut out = serialize_tuple(t, dirty, pivots)?;
    out.push(' ');
    out.push_str(&PromptTemplate::render(&template.question, dirty_name(t, dirty)));
    Ok(out)
}

/// Both serializations followed by the two cascaded questions, in one prompt.
pub fn build_pair_prompt(
    query: &Tuple,
    candidate: &Tuple,
    dirty: &str,
    pivots: &Columns,
    template: &PromptTemplate,
) -> Result<String, ConfigError> {
    let q = serialize_tuple(query, dirty, pivots)?;
    let c = serialize_record(candidate);
    let attr = dirty_name(query, dirty);
    Ok(format!(
        "Tuple 1: {q}\nTuple 2: {c}\nQuestion 1: {} Answer Yes or No.\nQuestion 2: Only if the answer to Question 1 is Yes, {}",
        template.match_question,
        PromptTemplate::render(&template.value_question, attr),
    ))
}

/// The dirty attribute spelled as in the tuple header.
fn dirty_name<'a>(t: &'a Tuple, dirty: &'a str) -> &'a str {
    t.position(dirty)
        .map(|i| t.attrs()[i].0.as_str())
        .unwrap_or(dirty)
}
