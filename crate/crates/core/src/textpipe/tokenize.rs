//! Rule-based sentence splitting and tokenization.
//!
//! Both are approximate by construction: there is no abbreviation list, so
//! `"Mr. X"` splits after `"Mr."`.

const TERMINATORS: [char; 3] = ['.', '!', '?'];
const PUNCT: [char; 10] = [',', ':', ';', '?', '!', '.', '$', '(', ')', '"'];

/// Splits after `.`, `!` or `?` when followed by whitespace or end of text.
/// The delimiter stays with its sentence; empty segments are dropped.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if !TERMINATORS.contains(&c) {
            continue;
        }
        let at_boundary = match chars.peek() {
            None => true,
            Some(&(_, next)) => next.is_whitespace(),
        };
        if at_boundary {
            let end = i + c.len_utf8();
            push_trimmed(&mut out, &text[start..end]);
            start = end;
        }
    }
    push_trimmed(&mut out, &text[start..]);
    out
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}

/// Whitespace split, then punctuation from the tag inventory isolated into
/// standalone tokens. Runs of dots become `...`; a double quote opening a
/// chunk becomes ``` `` ``` and any other becomes `''`. Separators between
/// two digits (`3.5`, `1,000`, `10:30`) stay inside the number.
pub fn tokenize(sentence: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in sentence.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let mut word = String::new();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let flush = |word: &mut String, out: &mut Vec<String>| {
                if !word.is_empty() {
                    out.push(std::mem::take(word));
                }
            };
            if (c == '`' || c == '\'') && chars.get(i + 1) == Some(&c) {
                flush(&mut word, &mut out);
                out.push(if c == '`' { "``" } else { "''" }.to_string());
                i += 2;
                continue;
            }
            if c == '.' && chars.get(i + 1) == Some(&'.') {
                flush(&mut word, &mut out);
                while chars.get(i) == Some(&'.') {
                    i += 1;
                }
                out.push("...".to_string());
                continue;
            }
            let inside_number = matches!(c, '.' | ',' | ':')
                && i > 0
                && chars[i - 1].is_ascii_digit()
                && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
            if PUNCT.contains(&c) && !inside_number {
                flush(&mut word, &mut out);
                let tok = match c {
                    '"' if i == 0 => "``".to_string(),
                    '"' => "''".to_string(),
                    other => other.to_string(),
                };
                out.push(tok);
            } else {
                word.push(c);
            }
            i += 1;
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strs(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn split_examples() {
        assert_eq!(split_sentences("A. B!"), strs(&["A.", "B!"]));
        assert_eq!(split_sentences("no terminal"), strs(&["no terminal"]));
        assert_eq!(split_sentences("Mr. X"), strs(&["Mr.", "X"]));
        assert_eq!(split_sentences(""), Vec::<String>::new());
        assert_eq!(split_sentences("Wait... What? Yes."), strs(&["Wait...", "What?", "Yes."]));
        assert_eq!(split_sentences("3.5 is a number."), strs(&["3.5 is a number."]));
        assert_eq!(split_sentences("  \n "), Vec::<String>::new());
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("The cat sat."), strs(&["The", "cat", "sat", "."]));
        assert_eq!(tokenize("hello"), strs(&["hello"]));
        assert_eq!(tokenize("($5)"), strs(&["(", "$", "5", ")"]));
    }

    #[test]
    fn tokenize_quotes_ellipses_and_numbers() {
        assert_eq!(
            tokenize("\"Well,\" she said..."),
            strs(&["``", "Well", ",", "''", "she", "said", "..."])
        );
        assert_eq!(tokenize("``Hi''"), strs(&["``", "Hi", "''"]));
        assert_eq!(tokenize("paid $3.50, at 10:30;"), strs(&["paid", "$", "3.50", ",", "at", "10:30", ";"]));
        assert_eq!(tokenize("don't"), strs(&["don't"]));
    }
}
