//! Deterministic whitespace + math-symbol tokenizer.
//!
//! Mathematical symbols are emitted as standalone tokens; digit runs with
//! an optional decimal point stay whole, and a leading minus binds to the
//! number when it cannot be a binary operator (start of input or after
//! another operator / opening bracket).

/// Symbols always emitted as standalone tokens.
const SYMBOLS: &[char] = &[
    '=', '+', '-', '\u{2212}', '\u{00d7}', '*', '/', '\u{00f7}', '^', '(', ')', '{', '}', ',',
    '\u{2264}', '\u{2265}', '<', '>',
];

fn is_symbol(c: char) -> bool {
    SYMBOLS.contains(&c)
}

fn is_minus(c: char) -> bool {
    c == '-' || c == '\u{2212}'
}

/// True when a minus right after `prev` starts a signed number rather
/// than acting as a binary operator.
fn minus_binds(prev: Option<&str>) -> bool {
    match prev {
        None => true,
        Some(tok) => {
            let mut chars = tok.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => is_symbol(c) && c != ')' && c != '}',
                _ => false,
            }
        }
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens: Vec<String> = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        // Signed or unsigned number.
        let signed_start = is_minus(c)
            && i + 1 < chars.len()
            && chars[i + 1].is_ascii_digit()
            && minus_binds(tokens.last().map(|s| s.as_str()));
        if c.is_ascii_digit() || signed_start {
            let mut tok = String::new();
            if signed_start {
                tok.push('-');
                i += 1;
            }
            while i < chars.len() && chars[i].is_ascii_digit() {
                tok.push(chars[i]);
                i += 1;
            }
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                tok.push('.');
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    tok.push(chars[i]);
                    i += 1;
                }
            }
            tokens.push(tok);
            continue;
        }
        if is_symbol(c) {
            tokens.push(c.to_string());
            i += 1;
            continue;
        }
        // Word chunk: everything up to whitespace, symbol, or digit.
        let mut tok = String::new();
        while i < chars.len() {
            let c = chars[i];
            if c.is_whitespace() || is_symbol(c) || c.is_ascii_digit() {
                break;
            }
            tok.push(c);
            i += 1;
        }
        tokens.push(tok);
    }
    tokens
}

/// True if the token is a numeric literal as produced by [`tokenize`].
pub fn is_number(token: &str) -> bool {
    let body = token.strip_prefix('-').unwrap_or(token);
    if body.is_empty() {
        return false;
    }
    let mut seen_dot = false;
    let mut seen_digit = false;
    for c in body.chars() {
        if c == '.' {
            if seen_dot {
                return false;
            }
            seen_dot = true;
        } else if c.is_ascii_digit() {
            seen_digit = true;
        } else {
            return false;
        }
    }
    seen_digit
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_fractions_and_equations() {
        assert_eq!(
            tokenize("2/6 = 1/3"),
            vec!["2", "/", "6", "=", "1", "/", "3"]
        );
        assert_eq!(tokenize("x+1"), vec!["x", "+", "1"]);
    }

    #[test]
    fn keeps_decimals_whole() {
        assert_eq!(tokenize("0.28 cm"), vec!["0.28", "cm"]);
        assert_eq!(tokenize("pi = 3.14"), vec!["pi", "=", "3.14"]);
    }

    #[test]
    fn minus_sign_context() {
        assert_eq!(tokenize("-3 + 4"), vec!["-3", "+", "4"]);
        assert_eq!(tokenize("x - 3"), vec!["x", "-", "3"]);
        assert_eq!(tokenize("2 - -3"), vec!["2", "-", "-3"]);
        assert_eq!(tokenize("(-3)"), vec!["(", "-3", ")"]);
    }

    #[test]
    fn idempotent_on_rejoined_output() {
        let samples = [
            "The probability is 2/6 = 1/3, not 1/2.",
            "f(x) = (x^2 - 1)/(x - 1) at x = 1",
            "h = 0.28 cm so -2 * x <= 4",
            "weights {1, 3} and  {2,4, 6,8}",
        ];
        for s in samples {
            let once = tokenize(s);
            let twice = tokenize(&once.join(" "));
            assert_eq!(once, twice, "input {s:?}");
        }
    }

    #[test]
    fn number_detection() {
        assert!(is_number("42"));
        assert!(is_number("-3"));
        assert!(is_number("0.28"));
        assert!(!is_number("x2"));
        assert!(!is_number("-"));
        assert!(!is_number("1.2.3"));
    }
}

#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        /// Re-tokenizing the joined output is a fixed point, over a fuzzed
        /// mix of words, numbers, and math symbols.
        #[test]
        fn idempotent_on_fuzzed_corpus(
            parts in proptest::collection::vec(
                prop_oneof![
                    "[a-z]{1,6}".prop_map(|s| s),
                    "[0-9]{1,3}".prop_map(|s| s),
                    "[0-9]{1,2}\\.[0-9]{1,2}".prop_map(|s| s),
                    Just("+".to_string()),
                    Just("-".to_string()),
                    Just("*".to_string()),
                    Just("/".to_string()),
                    Just("=".to_string()),
                    Just("(".to_string()),
                    Just(")".to_string()),
                    Just("^".to_string()),
                ],
                1..20
            )
        ) {
            let text = parts.join(" ");
            let once = tokenize(&text);
            let twice = tokenize(&once.join(" "));
            prop_assert_eq!(once, twice);
        }
    }
}
