//! Strict CSV reader and writer for the single supported dialect: comma
//! separated, RFC 4180 double-quote escaping, UTF-8.
//!
//! The reader reports malformed input with line and column instead of
//! recovering, since a silently repaired record would give wrong lineage.

use std::fmt;

/// A parse failure, positioned at a 1-based line and 1-based field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvError {
    pub line: usize,
    pub column: usize,
    pub reason: CsvErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CsvErrorKind {
    InvalidUtf8,
    UnbalancedQuote,
    StrayQuote,
    GarbageAfterQuote,
}

impl fmt::Display for CsvError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.reason {
            CsvErrorKind::InvalidUtf8 => "invalid UTF-8",
            CsvErrorKind::UnbalancedQuote => "unbalanced quotes",
            CsvErrorKind::StrayQuote => "quote inside an unquoted field",
            CsvErrorKind::GarbageAfterQuote => "characters after a closing quote",
        };
        write!(f, "{what} at line {}, column {}", self.line, self.column)
    }
}

/// One parsed record with the line it started on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub line: usize,
    pub fields: Vec<String>,
}

/// Parses the whole input. Blank lines are skipped; a leading BOM is ignored.
pub fn parse(bytes: &[u8]) -> Result<Vec<Record>, CsvError> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|b| **b == b'\n').count() + 1;
        CsvError {
            line,
            column: 0,
            reason: CsvErrorKind::InvalidUtf8,
        }
    })?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);

    let mut records = Vec::new();
    let mut fields: Vec<String> = Vec::new();
    let mut field = String::new();
    let mut line = 1usize;
    let mut record_line = 1usize;
    // Whether the current record has any content (distinguishes blank lines).
    let mut touched = false;
    let mut chars = text.chars().peekable();

    enum State {
        FieldStart,
        Unquoted,
        Quoted { opened_at: usize },
        AfterQuote,
    }
    let mut state = State::FieldStart;

    macro_rules! end_record {
        () => {{
            if touched {
                fields.push(std::mem::take(&mut field));
                records.push(Record {
                    line: record_line,
                    fields: std::mem::take(&mut fields),
                });
            }
            touched = false;
            state = State::FieldStart;
        }};
    }

    while let Some(c) = chars.next() {
        match state {
            State::FieldStart | State::Unquoted => {
                let at_start = matches!(state, State::FieldStart);
                match c {
                    '"' if at_start => {
                        if !touched {
                            record_line = line;
                        }
                        touched = true;
                        state = State::Quoted { opened_at: line };
                    }
                    '"' => {
                        return Err(CsvError {
                            line,
                            column: fields.len() + 1,
                            reason: CsvErrorKind::StrayQuote,
                        })
                    }
                    ',' => {
                        if !touched {
                            record_line = line;
                        }
                        touched = true;
                        fields.push(std::mem::take(&mut field));
                        state = State::FieldStart;
                    }
                    '\r' if chars.peek() == Some(&'\n') => {}
                    '\n' => {
                        end_record!();
                        line += 1;
                    }
                    _ => {
                        if !touched {
                            record_line = line;
                        }
                        touched = true;
                        field.push(c);
                        state = State::Unquoted;
                    }
                }
            }
            State::Quoted { opened_at } => match c {
                '"' => {
                    if chars.peek() == Some(&'"') {
                        chars.next();
                        field.push('"');
                    } else {
                        state = State::AfterQuote;
                    }
                }
                '\n' => {
                    field.push('\n');
                    line += 1;
                    state = State::Quoted { opened_at };
                }
                _ => field.push(c),
            },
            State::AfterQuote => match c {
                ',' => {
                    fields.push(std::mem::take(&mut field));
                    state = State::FieldStart;
                }
                '\r' if chars.peek() == Some(&'\n') => {}
                '\n' => {
                    end_record!();
                    line += 1;
                }
                _ => {
                    return Err(CsvError {
                        line,
                        column: fields.len() + 1,
                        reason: CsvErrorKind::GarbageAfterQuote,
                    })
                }
            },
        }
    }
    if let State::Quoted { opened_at } = state {
        return Err(CsvError {
            line: opened_at,
            column: fields.len() + 1,
            reason: CsvErrorKind::UnbalancedQuote,
        });
    }
    if touched {
        fields.push(field);
        records.push(Record {
            line: record_line,
            fields,
        });
    }
    Ok(records)
}

fn needs_quoting(field: &str) -> bool {
    field.contains([',', '"', '\n', '\r'])
}

/// Appends one field, quoting only when the dialect requires it.
pub fn write_field(out: &mut String, field: &str) {
    if needs_quoting(field) {
        out.push('"');
        out.push_str(&field.replace('"', "\"\""));
        out.push('"');
    } else {
        out.push_str(field);
    }
}

/// Appends one record terminated by `\n`.
pub fn write_record<S: AsRef<str>>(out: &mut String, fields: &[S]) {
    // A lone empty field would otherwise read back as a blank line.
    if let [only] = fields {
        if only.as_ref().is_empty() {
            out.push_str("\"\"\n");
            return;
        }
    }
    for (i, f) in fields.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write_field(out, f.as_ref());
    }
    out.push('\n');
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fields(input: &str) -> Vec<Vec<String>> {
        parse(input.as_bytes())
            .unwrap()
            .into_iter()
            .map(|r| r.fields)
            .collect()
    }

    #[test]
    fn plain_records() {
        assert_eq!(fields("a,b\n1,2\n"), vec![vec!["a", "b"], vec!["1", "2"]]);
        assert_eq!(fields("a,b\r\n1,2"), vec![vec!["a", "b"], vec!["1", "2"]]);
    }

    #[test]
    fn empty_fields_and_blank_lines() {
        assert_eq!(fields("a,b\n\nAli,\n"), vec![vec!["a", "b"], vec!["Ali", ""]]);
    }

    #[test]
    fn quoted_fields() {
        assert_eq!(
            fields("x\n\"a,b\"\n\"say \"\"hi\"\"\"\n\"multi\nline\"\n"),
            vec![vec!["x"], vec!["a,b"], vec!["say \"hi\""], vec!["multi\nline"]]
        );
    }

    #[test]
    fn record_lines_account_for_embedded_newlines() {
        let recs = parse(b"h\n\"a\nb\"\nc\n").unwrap();
        assert_eq!(recs[1].line, 2);
        assert_eq!(recs[2].line, 4);
    }

    #[test]
    fn unbalanced_quote_is_located() {
        let e = parse(b"a,b\n1,\"oops\n2,3\n").unwrap_err();
        assert_eq!(e.reason, CsvErrorKind::UnbalancedQuote);
        assert_eq!((e.line, e.column), (2, 2));
    }

    #[test]
    fn stray_and_trailing_quotes_rejected() {
        assert_eq!(parse(b"a\nab\"c\n").unwrap_err().reason, CsvErrorKind::StrayQuote);
        assert_eq!(parse(b"a\n\"ab\"c\n").unwrap_err().reason, CsvErrorKind::GarbageAfterQuote);
    }

    #[test]
    fn invalid_utf8_rejected() {
        let e = parse(b"a\n\xff\n").unwrap_err();
        assert_eq!(e.reason, CsvErrorKind::InvalidUtf8);
        assert_eq!(e.line, 2);
    }

    #[test]
    fn writer_quotes_only_when_needed() {
        let mut out = String::new();
        write_record(&mut out, &["plain", "a,b", "q\"", "two\nlines", ""]);
        assert_eq!(out, "plain,\"a,b\",\"q\"\"\",\"two\nlines\",\n");
        assert_eq!(fields(&out), vec![vec!["plain", "a,b", "q\"", "two\nlines", ""]]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn write_then_parse_recovers_fields(rows in prop::collection::vec(prop::collection::vec("[a-z,\" \n]{0,6}", 2..4), 1..5)) {
                let mut out = String::new();
                for r in &rows {
                    write_record(&mut out, r);
                }
                let back: Vec<Vec<String>> = parse(out.as_bytes()).unwrap().into_iter().map(|r| r.fields).collect();
                prop_assert_eq!(back, rows);
            }
        }
    }
}
