//! Rule-based answer extraction and exact-match grading.
//!
//! Extraction rules, in precedence order per kind:
//! - multiple_choice: last standalone capital letter matching a choice label
//! - numeric: content of the last `\boxed{...}` marker, else the last
//!   decimal number token (fractions `a/b` allowed)
//! - free_text: trimmed final non-empty line

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    MultipleChoice,
    Numeric,
    FreeText,
}

/// Extracts a canonical answer string, or `None` when no rule fires.
pub fn extract_answer(text: &str, kind: ProblemKind, choices: Option<&[String]>) -> Option<String> {
    match kind {
        ProblemKind::MultipleChoice => {
            let label_count = choices.map(|c| c.len()).unwrap_or(26).min(26);
            let labels: Vec<char> = (0..label_count).map(|i| (b'A' + i as u8) as char).collect();
            let bytes = text.as_bytes();
            let mut last = None;
            for (i, &b) in bytes.iter().enumerate() {
                let c = b as char;
                if !labels.contains(&c) {
                    continue;
                }
                let prev_alnum = i > 0 && (bytes[i - 1] as char).is_ascii_alphanumeric();
                let next_alnum =
                    i + 1 < bytes.len() && (bytes[i + 1] as char).is_ascii_alphanumeric();
                if !prev_alnum && !next_alnum {
                    last = Some(c.to_string());
                }
            }
            last
        }
        ProblemKind::Numeric => {
            if let Some(inner) = last_boxed_content(text) {
                return Some(inner.trim().to_string());
            }
            last_number_token(text)
        }
        ProblemKind::FreeText => text
            .lines()
            .rev()
            .map(str::trim)
            .find(|line| !line.is_empty())
            .map(str::to_string),
    }
}

fn last_boxed_content(text: &str) -> Option<String> {
    let start = text.rfind("\\boxed{")?;
    let inner = &text[start + "\\boxed{".len()..];
    let mut depth = 1usize;
    for (i, c) in inner.char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(inner[..i].to_string());
                }
            }
            _ => {}
        }
    }
    None
}

fn last_number_token(text: &str) -> Option<String> {
    let mut last: Option<String> = None;
    let bytes = text.as_bytes();
    let mut i = 0usize;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_digit()
            || (c == '-' && i + 1 < bytes.len() && (bytes[i + 1] as char).is_ascii_digit())
        {
            let start = i;
            i += 1;
            let mut seen_dot = false;
            let mut seen_slash = false;
            while i < bytes.len() {
                let c = bytes[i] as char;
                if c.is_ascii_digit() {
                    i += 1;
                } else if c == '.' && !seen_dot && !seen_slash {
                    seen_dot = true;
                    i += 1;
                } else if c == '/'
                    && !seen_slash
                    && i + 1 < bytes.len()
                    && (bytes[i + 1] as char).is_ascii_digit()
                {
                    seen_slash = true;
                    i += 1;
                } else {
                    break;
                }
            }
            let mut token = &text[start..i];
            // a trailing dot is sentence punctuation, not a decimal point
            token = token.trim_end_matches('.');
            last = Some(token.to_string());
        } else {
            i += 1;
        }
    }
    last
}

/// Parses a decimal number or a fraction `a/b`.
pub fn parse_numeric(text: &str) -> Result<f64> {
    let text = text.trim();
    if let Some((num, den)) = text.split_once('/') {
        let num: f64 = num
            .trim()
            .parse()
            .map_err(|_| Error::Domain(format!("unparseable numerator '{num}'")))?;
        let den: f64 = den
            .trim()
            .parse()
            .map_err(|_| Error::Domain(format!("unparseable denominator '{den}'")))?;
        if den == 0.0 {
            return Err(Error::Domain(format!("zero denominator in '{text}'")));
        }
        return Ok(num / den);
    }
    text.parse().map_err(|_| Error::Domain(format!("unparseable number '{text}'")))
}

pub const NUMERIC_REL_TOL: f64 = 1e-6;

/// Exact-match grading. `pred = None` grades false. Numeric comparison uses
/// relative tolerance [`NUMERIC_REL_TOL`] and is symmetric in its arguments.
pub fn grade(pred: Option<&str>, gold: &str, kind: ProblemKind) -> bool {
    let Some(pred) = pred else { return false };
    match kind {
        ProblemKind::MultipleChoice => pred.eq_ignore_ascii_case(gold.trim()),
        ProblemKind::Numeric => match (parse_numeric(pred), parse_numeric(gold)) {
            (Ok(a), Ok(b)) => {
                let scale = a.abs().max(b.abs());
                (a - b).abs() <= NUMERIC_REL_TOL * scale || a == b
            }
            _ => false,
        },
        ProblemKind::FreeText => normalize_whitespace(pred) == normalize_whitespace(gold),
    }
}

fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn choices(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("choice {i}")).collect()
    }

    #[test]
    fn mc_last_standalone_label() {
        let c = choices(4);
        assert_eq!(
            extract_answer("the answer is (C).", ProblemKind::MultipleChoice, Some(&c)),
            Some("C".into())
        );
        // later prose letter outside label range does not override
        assert_eq!(
            extract_answer("A then B. Final: D", ProblemKind::MultipleChoice, Some(&c)),
            Some("D".into())
        );
        // letters embedded in words do not count
        assert_eq!(
            extract_answer("CAB rides are nice", ProblemKind::MultipleChoice, Some(&c)),
            None
        );
    }

    #[test]
    fn numeric_boxed_takes_precedence() {
        assert_eq!(
            extract_answer("so x = 3.5. Final answer: \\boxed{7/2}", ProblemKind::Numeric, None),
            Some("7/2".into())
        );
        assert_eq!(
            extract_answer("values 1, 2 and finally 3.25", ProblemKind::Numeric, None),
            Some("3.25".into())
        );
        assert_eq!(extract_answer("no answer stated", ProblemKind::Numeric, None), None);
    }

    #[test]
    fn numeric_negative_and_fraction_tokens() {
        assert_eq!(extract_answer("delta is -4", ProblemKind::Numeric, None), Some("-4".into()));
        assert_eq!(extract_answer("ratio 22/7 roughly", ProblemKind::Numeric, None), Some("22/7".into()));
        assert_eq!(extract_answer("x = 3.", ProblemKind::Numeric, None), Some("3".into()));
    }

    #[test]
    fn free_text_last_nonempty_line() {
        assert_eq!(
            extract_answer("thinking...\n\n  final line  \n\n", ProblemKind::FreeText, None),
            Some("final line".into())
        );
        assert_eq!(extract_answer("\n \n", ProblemKind::FreeText, None), None);
    }

    #[test]
    fn grade_cases() {
        assert!(grade(Some("C"), "c", ProblemKind::MultipleChoice));
        assert!(grade(Some("7/2"), "3.5", ProblemKind::Numeric));
        assert!(!grade(None, "anything", ProblemKind::MultipleChoice));
        assert!(grade(Some("a  b"), " a b ", ProblemKind::FreeText));
        assert!(!grade(Some("a c"), "a b", ProblemKind::FreeText));
    }

    #[test]
    fn numeric_tolerance() {
        assert!(grade(Some("1.0000001"), "1.0", ProblemKind::Numeric));
        assert!(!grade(Some("1.001"), "1.0", ProblemKind::Numeric));
        assert!(grade(Some("0"), "0.0", ProblemKind::Numeric));
    }

    proptest! {
        #[test]
        fn numeric_grade_symmetric(a in -1e6f64..1e6, b in -1e6f64..1e6) {
            let (sa, sb) = (format!("{a}"), format!("{b}"));
            prop_assert_eq!(
                grade(Some(&sa), &sb, ProblemKind::Numeric),
                grade(Some(&sb), &sa, ProblemKind::Numeric)
            );
        }
    }
}
