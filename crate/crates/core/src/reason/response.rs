//! Post-processing of free-text model answers into decisions.

use super::ReasonerDecision;

/// Phrases meaning the model found nothing; matched case-insensitively.
pub const NO_VALUE_PHRASES: &[&str] = &["no such value", "cannot be found", "unknown"];

const WRAPPERS: &[char] = &['"', '\'', '`', '“', '”', '‘', '’', '.', ' ', '\t'];

fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty())
}

/// First standalone Yes/No word, if any.
fn yes_no(text: &str) -> Option<bool> {
    words(text).find_map(|w| {
        if w.eq_ignore_ascii_case("yes") {
            Some(true)
        } else if w.eq_ignore_ascii_case("no") {
            Some(false)
        } else {
            None
        }
    })
}

fn strip_prefix_ci<'a>(text: &'a str, prefix: &str) -> Option<&'a str> {
    let head = text.get(..prefix.len())?;
    head.eq_ignore_ascii_case(prefix).then(|| &text[prefix.len()..])
}

fn strip_leading_answer_word(line: &str) -> &str {
    let trimmed = line.trim_start();
    for w in ["yes", "no"] {
        if let Some(rest) = strip_prefix_ci(trimmed, w) {
            if rest.chars().next().is_none_or(|c| !c.is_alphanumeric()) {
                return rest.trim_start_matches([',', '.', '!', ';', '-', ' ', '\t']);
            }
        }
    }
    trimmed
}

fn strip_value_phrase<'a>(text: &'a str, attr: &str) -> &'a str {
    for lead in ["the value of ", "the value for ", "value of ", "value for "] {
        if let Some(rest) = strip_prefix_ci(text, lead) {
            if let Some(rest) = strip_prefix_ci(rest, attr) {
                let rest = rest.trim_start();
                for verb in ["is ", "= "] {
                    if let Some(v) = strip_prefix_ci(rest, verb) {
                        return v;
                    }
                }
            }
        }
    }
    text
}

/// Parses a model answer.
///
/// The first standalone Yes/No word sets `matched`. The value is the text
/// after the last `:`, or else the last non-empty line, with quotes and
/// periods trimmed. An explicit No, or a no-value phrase on the answer line,
/// leaves the value absent. An empty response is a refusal.
pub fn postprocess_response(raw: &str, dirty: &str) -> ReasonerDecision {
    let mut decision = ReasonerDecision {
        raw_response: Some(raw.to_string()),
        ..ReasonerDecision::default()
    };
    if raw.trim().is_empty() {
        decision.refusal = true;
        return decision;
    }
    let answer = yes_no(raw);
    decision.matched = answer == Some(true);
    if answer == Some(false) {
        return decision;
    }

    let (line, candidate) = match raw.rfind(':') {
        Some(i) => {
            let line_start = raw[..i].rfind('\n').map_or(0, |j| j + 1);
            let line_end = raw[i..].find('\n').map_or(raw.len(), |j| i + j);
            (&raw[line_start..line_end], &raw[i + 1..line_end])
        }
        None => {
            let line = raw.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("");
            (line, strip_value_phrase(strip_leading_answer_word(line).trim(), dirty))
        }
    };
    let lowered = line.to_lowercase();
    if NO_VALUE_PHRASES.iter().any(|p| lowered.contains(p)) {
        return decision;
    }
    let value = candidate.trim().trim_matches(WRAPPERS);
    if !value.is_empty() {
        decision.value = Some(value.to_string());
    }
    decision
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn yes_with_colon_value() {
        let d = postprocess_response("Yes. The value of BT is: B", "BT");
        assert!(d.matched);
        assert_eq!(d.value.as_deref(), Some("B"));
    }

    #[test]
    fn plain_no() {
        let d = postprocess_response("No.", "BT");
        assert!(!d.matched);
        assert_eq!(d.value, None);
        assert!(!d.refusal);
    }

    #[test]
    fn yes_but_no_value() {
        let d = postprocess_response("Yes, but no such value can be found.", "BT");
        assert!(d.matched);
        assert_eq!(d.value, None);
    }

    #[test]
    fn empty_is_refusal() {
        let d = postprocess_response("  \n", "BT");
        assert!(!d.matched);
        assert!(d.refusal);
        assert_eq!(d.value, None);
    }

    #[test]
    fn standalone_answers() {
        assert_eq!(postprocess_response("Male", "Gender").value.as_deref(), Some("Male"));
        assert_eq!(postprocess_response("\"Female\".\n", "Gender").value.as_deref(), Some("Female"));
        assert_eq!(postprocess_response("Unknown", "Gender").value, None);
        assert_eq!(postprocess_response("Norway", "Country").value.as_deref(), Some("Norway"));
    }

    #[test]
    fn last_line_and_value_phrases() {
        let d = postprocess_response("Yes\nThe value of BT is O+.", "BT");
        assert!(d.matched);
        assert_eq!(d.value.as_deref(), Some("O+"));
        let d = postprocess_response("Yes, 'AB'", "BT");
        assert_eq!(d.value.as_deref(), Some("AB"));
    }

    #[test]
    fn last_colon_wins() {
        let d = postprocess_response("Yes: same entity.\nAnswer 2: \u{201c}A-\u{201d}", "BT");
        assert!(d.matched);
        assert_eq!(d.value.as_deref(), Some("A-"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn values_never_carry_padding_or_quotes(body in "[A-Za-z0-9+ ]{1,10}", q in "[\"' ]{0,2}", tail in "[. ]{0,2}") {
                let raw = format!("Yes. The value is: {q}{body}{q}{tail}");
                let d = postprocess_response(&raw, "X");
                if let Some(v) = d.value {
                    prop_assert_eq!(v.trim(), v.as_str());
                    prop_assert!(!v.starts_with(['"', '\'']) && !v.ends_with(['"', '\'', '.']));
                }
            }
        }
    }
}
