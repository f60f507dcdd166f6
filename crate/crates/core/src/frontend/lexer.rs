use super::FrontendError;
use crate::diag::Span;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i32),
    Kw(Kw),
    Punct(&'static str),
    Eof,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kw {
    Int,
    Void,
    If,
    Else,
    For,
    While,
    Do,
    Break,
    Continue,
    Return,
    Goto,
    Extern,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

/// Type names and keywords outside the subset. Hitting one is an
/// "unsupported construct" error rather than a syntax error.
const UNSUPPORTED_WORDS: &[&str] = &[
    "float", "double", "char", "long", "short", "unsigned", "signed", "struct", "union", "enum",
    "typedef", "switch", "case", "default", "sizeof", "static", "volatile", "register", "auto",
    "const", "inline", "_Bool",
];

// Longest first so that maximal munch works by simple prefix test.
const PUNCTS: &[&str] = &[
    "<<=", ">>=", "...", "&&", "||", "==", "!=", "<=", ">=", "<<", ">>", "++", "--", "+=", "-=",
    "*=", "/=", "%=", "&=", "|=", "^=", "->", "+", "-", "*", "/", "%", "&", "|", "^", "~", "!",
    "<", ">", "=", "(", ")", "{", "}", "[", "]", ";", ",", "?", ":", ".",
];

pub fn lex(src: &str) -> Result<Vec<Token>, FrontendError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);

    macro_rules! bump {
        ($n:expr) => {{
            for _ in 0..$n {
                if bytes[i] == b'\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
                i += 1;
            }
        }};
    }

    while i < bytes.len() {
        let c = bytes[i];
        let span = Span::new(line, col);
        if c.is_ascii_whitespace() {
            bump!(1);
            continue;
        }
        if src[i..].starts_with("//") {
            while i < bytes.len() && bytes[i] != b'\n' {
                bump!(1);
            }
            continue;
        }
        if src[i..].starts_with("/*") {
            match src[i + 2..].find("*/") {
                Some(end) => bump!(end + 4),
                None => {
                    return Err(FrontendError::Syntax {
                        span,
                        message: "unterminated comment".into(),
                    })
                }
            }
            continue;
        }
        if c == b'#' {
            return Err(FrontendError::Unsupported {
                span,
                construct: "preprocessor directive".into(),
            });
        }
        if c == b'"' {
            return Err(FrontendError::Unsupported {
                span,
                construct: "string literal".into(),
            });
        }
        if c == b'\'' {
            return Err(FrontendError::Unsupported {
                span,
                construct: "character literal".into(),
            });
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                bump!(1);
            }
            let word = &src[start..i];
            let tok = match word {
                "int" => Tok::Kw(Kw::Int),
                "void" => Tok::Kw(Kw::Void),
                "if" => Tok::Kw(Kw::If),
                "else" => Tok::Kw(Kw::Else),
                "for" => Tok::Kw(Kw::For),
                "while" => Tok::Kw(Kw::While),
                "do" => Tok::Kw(Kw::Do),
                "break" => Tok::Kw(Kw::Break),
                "continue" => Tok::Kw(Kw::Continue),
                "return" => Tok::Kw(Kw::Return),
                "goto" => Tok::Kw(Kw::Goto),
                "extern" => Tok::Kw(Kw::Extern),
                w if UNSUPPORTED_WORDS.contains(&w) => {
                    return Err(FrontendError::Unsupported {
                        span,
                        construct: w.to_string(),
                    })
                }
                w => Tok::Ident(w.to_string()),
            };
            out.push(Token { tok, span });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'.') {
                bump!(1);
            }
            let text = &src[start..i];
            out.push(Token {
                tok: Tok::Int(parse_int(text, span)?),
                span,
            });
            continue;
        }
        match PUNCTS.iter().find(|p| src[i..].starts_with(**p)) {
            Some(p) => {
                bump!(p.len());
                out.push(Token {
                    tok: Tok::Punct(p),
                    span,
                });
            }
            None => {
                return Err(FrontendError::Syntax {
                    span,
                    message: format!("unexpected character '{}'", src[i..].chars().next().unwrap()),
                })
            }
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span::new(line, col),
    });
    Ok(out)
}

/// Integer literals denote 32-bit two's complement bit patterns, so
/// `0xEDB88320` is accepted and wraps to a negative value.
fn parse_int(text: &str, span: Span) -> Result<i32, FrontendError> {
    if text.contains('.') || text.contains(['e', 'E']) && !text.starts_with("0x") {
        return Err(FrontendError::Unsupported {
            span,
            construct: "float".into(),
        });
    }
    let lower = text.to_ascii_lowercase();
    if lower.ends_with('u') || lower.ends_with('l') {
        return Err(FrontendError::Unsupported {
            span,
            construct: "integer suffix".into(),
        });
    }
    let parsed = if let Some(hex) = lower.strip_prefix("0x") {
        u64::from_str_radix(hex, 16).ok()
    } else if lower.len() > 1 && lower.starts_with('0') {
        u64::from_str_radix(&lower[1..], 8).ok()
    } else {
        lower.parse::<u64>().ok()
    };
    match parsed {
        Some(v) if v <= u32::MAX as u64 => Ok(v as u32 as i32),
        _ => Err(FrontendError::Syntax {
            span,
            message: format!("invalid integer literal '{text}'"),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_punctuation_by_maximal_munch() {
        let toks = lex("a<<=b>>c").unwrap();
        let kinds: Vec<_> = toks.iter().map(|t| t.tok.clone()).collect();
        assert_eq!(
            kinds,
            vec![
                Tok::Ident("a".into()),
                Tok::Punct("<<="),
                Tok::Ident("b".into()),
                Tok::Punct(">>"),
                Tok::Ident("c".into()),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn hex_literals_wrap() {
        let toks = lex("0xEDB88320").unwrap();
        assert_eq!(toks[0].tok, Tok::Int(0xEDB88320u32 as i32));
    }

    #[test]
    fn float_keyword_is_unsupported() {
        match lex("float x;") {
            Err(FrontendError::Unsupported { construct, span }) => {
                assert_eq!(construct, "float");
                assert_eq!(span, Span::new(1, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tracks_line_and_column() {
        let toks = lex("int\n  x /* c\n */ y").unwrap();
        assert_eq!(toks[1].span, Span::new(2, 3));
        assert_eq!(toks[2].span, Span::new(3, 5));
    }
}
