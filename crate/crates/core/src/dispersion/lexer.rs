//! Self-contained Verilog lexer.
//!
//! Total on any input: malformed code still lexes, unknown characters become
//! single-character tokens. Comments and whitespace produce nothing.

use serde::{Deserialize, Serialize};

use crate::digest;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream {
    pub tokens: Vec<String>,
    /// SHA-256 of the source text.
    pub source_hash: String,
}

impl TokenStream {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub fn tokenize(code: &str) -> TokenStream {
    TokenStream {
        tokens: lex(code),
        source_hash: digest::hex(&[code.as_bytes()]),
    }
}

/// Lexes arbitrary bytes; invalid UTF-8 is replaced before lexing.
pub fn tokenize_bytes(bytes: &[u8]) -> TokenStream {
    let text = String::from_utf8_lossy(bytes);
    TokenStream {
        tokens: lex(&text),
        source_hash: digest::hex(&[bytes]),
    }
}

const OPERATORS: &[&str] = &[
    "<<<=", ">>>=", //
    "<<<", ">>>", "===", "!==", "==?", "!=?", "<<=", ">>=", "->>", "<->", "&&&", //
    "==", "!=", "<=", ">=", "&&", "||", "**", "<<", ">>", "~&", "~|", "~^", "^~", "->", "+:", "-:",
    "::", "++", "--", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "##",
];

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '$'
}

fn is_based_digit(c: char) -> bool {
    c.is_ascii_hexdigit() || matches!(c, 'x' | 'X' | 'z' | 'Z' | '?' | '_')
}

fn is_base_char(c: char) -> bool {
    matches!(c, 'b' | 'B' | 'o' | 'O' | 'd' | 'D' | 'h' | 'H')
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.src[self.pos..].chars().nth(n)
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn eat_while(&mut self, f: impl Fn(char) -> bool) {
        while let Some(c) = self.peek() {
            if !f(c) {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    /// Consumes `'[sS]<base><digits>` if present at the cursor.
    fn eat_base_suffix(&mut self) -> bool {
        if self.peek() != Some('\'') {
            return false;
        }
        let mut ahead = 1;
        if matches!(self.peek_at(ahead), Some('s' | 'S')) {
            ahead += 1;
        }
        if !self.peek_at(ahead).is_some_and(is_base_char) {
            return false;
        }
        for _ in 0..=ahead {
            self.bump();
        }
        self.eat_while(is_based_digit);
        true
    }
}

/// Splits source text into tokens.
pub fn lex(src: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = Cursor { src, pos: 0 };
    while let Some(c) = cur.peek() {
        let start = cur.pos;
        let rest = cur.rest();
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if rest.starts_with("//") {
            cur.eat_while(|c| c != '\n');
            continue;
        }
        if let Some(body) = rest.strip_prefix("/*") {
            cur.pos += match body.find("*/") {
                Some(end) => end + 4,
                None => rest.len(),
            };
            continue;
        }

        if is_ident_start(c) {
            cur.eat_while(is_ident_char);
        } else if (c == '$' || c == '`') && cur.peek_at(1).is_some_and(is_ident_char) {
            cur.bump();
            cur.eat_while(is_ident_char);
        } else if c == '\\' && cur.peek_at(1).is_some_and(|n| !n.is_whitespace()) {
            cur.eat_while(|c| !c.is_whitespace());
        } else if c == '"' {
            cur.bump();
            while let Some(n) = cur.peek() {
                if n == '\n' {
                    break;
                }
                cur.bump();
                if n == '\\' {
                    if cur.peek().is_some_and(|e| e != '\n') {
                        cur.bump();
                    }
                } else if n == '"' {
                    break;
                }
            }
        } else if c.is_ascii_digit() {
            cur.eat_while(|c| c.is_ascii_digit() || c == '_');
            if !cur.eat_base_suffix() {
                if cur.peek() == Some('.') && cur.peek_at(1).is_some_and(|d| d.is_ascii_digit()) {
                    cur.bump();
                    cur.eat_while(|c| c.is_ascii_digit() || c == '_');
                }
                let exp = matches!(cur.peek(), Some('e' | 'E'))
                    && match cur.peek_at(1) {
                        Some(d) if d.is_ascii_digit() => true,
                        Some('+' | '-') => cur.peek_at(2).is_some_and(|d| d.is_ascii_digit()),
                        _ => false,
                    };
                if exp {
                    cur.bump();
                    if matches!(cur.peek(), Some('+' | '-')) {
                        cur.bump();
                    }
                    cur.eat_while(|c| c.is_ascii_digit() || c == '_');
                }
            }
        } else if c == '\'' {
            if !cur.eat_base_suffix() {
                cur.bump();
                // unbased unsized literal: '0 '1 'x 'z
                if cur.peek().is_some_and(|n| matches!(n, '0' | '1' | 'x' | 'X' | 'z' | 'Z'))
                    && !cur.peek_at(1).is_some_and(is_ident_char)
                {
                    cur.bump();
                }
            }
        } else if let Some(op) = OPERATORS.iter().find(|op| rest.starts_with(*op)) {
            cur.pos += op.len();
        } else {
            cur.bump();
        }
        out.push(src[start..cur.pos].to_string());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        lex(s)
    }

    #[test]
    fn module_skeleton() {
        assert_eq!(toks("module m; endmodule"), ["module", "m", ";", "endmodule"]);
    }

    #[test]
    fn line_comment_stripped() {
        assert_eq!(
            toks("// note\nassign y = a & b;"),
            ["assign", "y", "=", "a", "&", "b", ";"]
        );
    }

    #[test]
    fn sized_literal_and_nonblocking() {
        let t = toks("always @(posedge clk) q <= 4'b1010;");
        assert_eq!(
            t,
            ["always", "@", "(", "posedge", "clk", ")", "q", "<=", "4'b1010", ";"]
        );
        assert_eq!(t.len(), 10);
    }

    #[test]
    fn block_comment_unterminated() {
        assert_eq!(toks("a /* never closed"), ["a"]);
        assert_eq!(toks("a /* x */ b"), ["a", "b"]);
    }

    #[test]
    fn source_hash_tracks_text() {
        assert_eq!(tokenize("a b").source_hash, tokenize("a b").source_hash);
        assert_ne!(tokenize("a b").source_hash, tokenize("a  b").source_hash);
    }

    proptest! {
        #[test]
        fn total_on_bytes(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
            let a = tokenize_bytes(&bytes);
            let b = tokenize_bytes(&bytes);
            prop_assert_eq!(&a, &b);
            prop_assert!(a.tokens.iter().all(|t| !t.is_empty()));
        }

        #[test]
        fn whitespace_insensitive_between_tokens(words in proptest::collection::vec("[a-z_][a-z0-9_]{0,6}", 1..10)) {
            let spaced = words.join(" ");
            let newlined = words.join("\n\t  ");
            prop_assert_eq!(lex(&spaced), lex(&newlined));
        }
    }
}
