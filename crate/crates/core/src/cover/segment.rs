//! Rule-based sentence splitter and word tokenizer working on byte offsets.

const TERMINATORS: &[char] = &['.', '!', '?', '…'];
const CLOSERS: &[char] = &['"', '\'', '”', '’', ')', ']', '}', '»'];
const OPENERS: &[char] = &['"', '\'', '“', '‘', '(', '[', '{', '«'];
const JOINERS: &[char] = &['\'', '’', '-'];

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "e.g", "i.e", "mt", "fig", "inc", "ltd", "co", "gen",
    "col", "capt", "lt", "sgt", "rev", "gov", "sen", "rep", "approx", "dept", "no", "vol", "cf", "al",
];

/// Byte spans of sentences. Spans never include surrounding whitespace and
/// together cover every non-whitespace character of `text`.
pub fn sentence_spans(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let byte_at = |i: usize| chars.get(i).map_or(text.len(), |c| c.0);
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i].1;
        if c.is_whitespace() {
            if let Some(s) = start {
                if is_paragraph_break(&chars, i) {
                    spans.push((byte_at(s), trim_end(text, byte_at(s), byte_at(i))));
                    start = None;
                }
            }
            i += 1;
            continue;
        }
        if start.is_none() {
            start = Some(i);
        }
        if TERMINATORS.contains(&c) {
            let mut j = i + 1;
            while j < chars.len() && (TERMINATORS.contains(&chars[j].1) || CLOSERS.contains(&chars[j].1)) {
                j += 1;
            }
            let mut k = j;
            while k < chars.len() && chars[k].1.is_whitespace() {
                k += 1;
            }
            let boundary = if k == chars.len() {
                true
            } else if k == j {
                false
            } else {
                starts_sentence(&chars, k) && !(c == '.' && is_abbreviation(text, byte_at(i), byte_at(start.unwrap())))
            };
            if boundary {
                spans.push((byte_at(start.unwrap()), byte_at(j)));
                start = None;
            }
            i = j;
            continue;
        }
        i += 1;
    }
    if let Some(s) = start {
        spans.push((byte_at(s), trim_end(text, byte_at(s), text.len())));
    }
    spans
}

fn trim_end(text: &str, start: usize, end: usize) -> usize {
    start + text[start..end].trim_end().len()
}

fn is_paragraph_break(chars: &[(usize, char)], i: usize) -> bool {
    if chars[i].1 != '\n' {
        return false;
    }
    chars[i + 1..]
        .iter()
        .take_while(|c| c.1.is_whitespace())
        .any(|c| c.1 == '\n')
}

fn starts_sentence(chars: &[(usize, char)], k: usize) -> bool {
    let c = chars[k].1;
    if c.is_uppercase() || c.is_ascii_digit() {
        return true;
    }
    if OPENERS.contains(&c) {
        return chars
            .get(k + 1)
            .is_some_and(|n| n.1.is_uppercase() || n.1.is_ascii_digit());
    }
    false
}

/// True when the period at byte `dot` closes an abbreviation or an initial.
fn is_abbreviation(text: &str, dot: usize, sentence_start: usize) -> bool {
    let before = &text[sentence_start..dot];
    let word = before
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or("")
        .trim_start_matches(|c: char| !c.is_alphanumeric());
    if word.is_empty() {
        return false;
    }
    let mut wc = word.chars();
    if let (Some(c), None) = (wc.next(), wc.next()) {
        return c.is_uppercase();
    }
    ABBREVIATIONS.contains(&word.to_lowercase().as_str())
}

/// Byte spans of word and punctuation tokens inside `text[start..end]`.
///
/// Letters and digits form words; an apostrophe or hyphen between two
/// alphanumerics stays inside the word, as does a `.` or `,` between digits.
/// Every other non-space character is a token of its own.
pub fn word_spans(text: &str, start: usize, end: usize) -> Vec<(usize, usize)> {
    let slice = &text[start..end];
    let chars: Vec<(usize, char)> = slice.char_indices().collect();
    let byte_at = |i: usize| start + chars.get(i).map_or(slice.len(), |c| c.0);
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i].1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_alphanumeric() {
            let s = i;
            i += 1;
            loop {
                while i < chars.len() && chars[i].1.is_alphanumeric() {
                    i += 1;
                }
                let joins = i + 1 < chars.len() && chars[i + 1].1.is_alphanumeric() && {
                    let j = chars[i].1;
                    JOINERS.contains(&j)
                        || ((j == '.' || j == ',')
                            && chars[i - 1].1.is_ascii_digit()
                            && chars[i + 1].1.is_ascii_digit())
                };
                if joins {
                    i += 1;
                } else {
                    break;
                }
            }
            out.push((byte_at(s), byte_at(i)));
        } else {
            out.push((byte_at(i), byte_at(i + 1)));
            i += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentences(text: &str) -> Vec<&str> {
        sentence_spans(text).into_iter().map(|(s, e)| &text[s..e]).collect()
    }

    fn words(text: &str) -> Vec<&str> {
        word_spans(text, 0, text.len())
            .into_iter()
            .map(|(s, e)| &text[s..e])
            .collect()
    }

    #[test]
    fn two_period_split() {
        assert_eq!(sentences("Hello world. Bye now."), vec!["Hello world.", "Bye now."]);
    }

    #[test]
    fn abbreviations_and_initials_do_not_split() {
        assert_eq!(
            sentences("Dr. Smith met J. Brown at noon. They talked."),
            vec!["Dr. Smith met J. Brown at noon.", "They talked."]
        );
    }

    #[test]
    fn lowercase_continuation_does_not_split() {
        assert_eq!(
            sentences("It cost 3.5 dollars... or so. Fine."),
            vec!["It cost 3.5 dollars... or so.", "Fine."]
        );
    }

    #[test]
    fn quotes_close_sentences() {
        assert_eq!(
            sentences("He said \"Stop!\" Then he left."),
            vec!["He said \"Stop!\"", "Then he left."]
        );
    }

    #[test]
    fn paragraph_breaks_split_without_punctuation() {
        assert_eq!(
            sentences("A title\n\nBody text here."),
            vec!["A title", "Body text here."]
        );
    }

    #[test]
    fn trailing_fragment_is_a_sentence() {
        assert_eq!(sentences("One. two three  "), vec!["One. two three"]);
        assert_eq!(sentences("One. Two three  "), vec!["One.", "Two three"]);
    }

    #[test]
    fn word_tokens() {
        assert_eq!(
            words("The well-known cat's toy cost $3.50, didn't it?"),
            vec![
                "The",
                "well-known",
                "cat's",
                "toy",
                "cost",
                "$",
                "3.50",
                ",",
                "didn't",
                "it",
                "?"
            ]
        );
    }
}
