//! The `13a` tokenizer used by SacreBLEU (mteval-v13a rules).
//!
//! Input is normalized first: `<skipped>` markers and `-\n` hyphenation joins
//! are removed, remaining newlines become spaces, and the HTML entities
//! `&quot;`, `&amp;`, `&lt;`, `&gt;` are unescaped. The line is padded with
//! one space on each side and four substitution passes run in order, each a
//! leftmost non-overlapping scan:
//!
//! 1. every char in `{|}~`, `[\]^_` + backtick, space through `&`, `(` through
//!    `+`, `:` through `@` and `/` becomes ` c `;
//! 2. a non-digit followed by `.` or `,`: `xP` becomes `x P `;
//! 3. `.` or `,` followed by a non-digit: `Px` becomes ` P x`;
//! 4. a digit followed by `-`: `d-` becomes `d - `.
//!
//! The result is split on whitespace. Test vectors:
//!
//! | input            | tokens                          |
//! |------------------|---------------------------------|
//! | `Hello, world!`  | `Hello` `,` `world` `!`         |
//! | `3.14`           | `3.14`                          |
//! | `1,000 cats.`    | `1,000` `cats` `.`              |
//! | `don't`          | `don't`                         |
//! | `5-year`         | `5` `-` `year`                  |
//! | `a&amp;b`        | `a` `&` `b`                     |
//! | `.5`             | `.` `5`                         |

use alloc::string::String;
use alloc::vec::Vec;

fn is_punct_13a(c: char) -> bool {
    matches!(c, '{'..='~' | '['..='`' | ' '..='&' | '('..='+' | ':'..='@' | '/')
}

fn is_period_or_comma(c: char) -> bool {
    c == '.' || c == ','
}

/// Runs one two-character substitution pass.
fn pass(chars: &[char], matches: impl Fn(char, char) -> bool, emit: impl Fn(&mut Vec<char>, char, char)) -> Vec<char> {
    let mut out = Vec::with_capacity(chars.len() + chars.len() / 4);
    let mut i = 0;
    while i < chars.len() {
        if i + 1 < chars.len() && matches(chars[i], chars[i + 1]) {
            emit(&mut out, chars[i], chars[i + 1]);
            i += 2;
        } else {
            out.push(chars[i]);
            i += 1;
        }
    }
    out
}

fn normalize(text: &str) -> String {
    let mut line = text.replace("<skipped>", "").replace("-\n", "").replace('\n', " ");
    if line.contains('&') {
        line = line
            .replace("&quot;", "\"")
            .replace("&amp;", "&")
            .replace("&lt;", "<")
            .replace("&gt;", ">");
    }
    line
}

/// Tokenizes `text` with the 13a rules; an empty string yields no tokens.
pub fn tokenize_13a(text: &str) -> Vec<String> {
    let line = normalize(text);
    let mut chars: Vec<char> = Vec::with_capacity(line.len() * 2 + 2);
    chars.push(' ');
    for c in line.chars() {
        if is_punct_13a(c) {
            chars.extend([' ', c, ' ']);
        } else {
            chars.push(c);
        }
    }
    chars.push(' ');

    let chars = pass(
        &chars,
        |a, b| !a.is_ascii_digit() && is_period_or_comma(b),
        |out, a, b| out.extend([a, ' ', b, ' ']),
    );
    let chars = pass(
        &chars,
        |a, b| is_period_or_comma(a) && !b.is_ascii_digit(),
        |out, a, b| out.extend([' ', a, ' ', b]),
    );
    let chars = pass(
        &chars,
        |a, b| a.is_ascii_digit() && b == '-',
        |out, a, b| out.extend([a, ' ', b, ' ']),
    );

    let joined: String = chars.into_iter().collect();
    joined.split_whitespace().map(String::from).collect()
}

/// Plain whitespace split, for inputs that are already tokenized.
pub fn tokenize_whitespace(text: &str) -> Vec<String> {
    text.split_whitespace().map(String::from).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn toks(s: &str) -> Vec<String> {
        tokenize_13a(s)
    }

    #[test]
    fn vectors() {
        assert_eq!(toks("Hello, world!"), vec!["Hello", ",", "world", "!"]);
        assert_eq!(toks("3.14"), vec!["3.14"]);
        assert_eq!(toks(""), Vec::<String>::new());
        assert_eq!(toks("1,000 cats."), vec!["1,000", "cats", "."]);
        assert_eq!(toks("don't"), vec!["don't"]);
        assert_eq!(toks("5-year"), vec!["5", "-", "year"]);
        assert_eq!(toks("a&amp;b"), vec!["a", "&", "b"]);
        assert_eq!(toks("well-known"), vec!["well-known"]);
        assert_eq!(toks("(a)"), vec!["(", "a", ")"]);
        assert_eq!(toks("end.\nNext"), vec!["end", ".", "Next"]);
        assert_eq!(toks(".5"), vec![".", "5"]);
        assert_eq!(toks("$5.00, ok?"), vec!["$", "5.00", ",", "ok", "?"]);
        assert_eq!(toks("Ünïcode — dash"), vec!["Ünïcode", "—", "dash"]);
        assert_eq!(toks("x <skipped> y"), vec!["x", "y"]);
    }

    #[test]
    fn whitespace_only_is_empty() {
        assert!(toks("  \t \n ").is_empty());
    }

    #[test]
    fn overlapping_punctuation_follows_scan_order() {
        // `a.,b`: pass 2 consumes `a.`, leaving `,` for pass 3.
        assert_eq!(toks("a.,b"), vec!["a", ".", ",", "b"]);
        assert_eq!(toks("3.,4"), vec!["3", ".", ",", "4"]);
    }
}
