//! Hand-rolled lexer. Newlines are tokens: the grammar is
//! line-oriented, one statement per line. `#` starts a comment that
//! runs to end of line.

use super::{ParseError, ParseErrorKind};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    /// Quoted string, unescaped.
    Str(String),
    /// Numeric literal. `raw` keeps the spelling so attribute values
    /// written as numbers survive verbatim.
    Num {
        value: f64,
        raw: String,
        is_int: bool,
    },
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    LParen,
    RParen,
    Comma,
    Colon,
    Assign,
    CmpEq,
    CmpNe,
    CmpLt,
    CmpLe,
    CmpGt,
    CmpGe,
    Newline,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::Num { raw, .. } => format!("number {raw}"),
            Tok::LBrace => "'{'".into(),
            Tok::RBrace => "'}'".into(),
            Tok::LBracket => "'['".into(),
            Tok::RBracket => "']'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::Colon => "':'".into(),
            Tok::Assign => "'='".into(),
            Tok::CmpEq => "'=='".into(),
            Tok::CmpNe => "'!='".into(),
            Tok::CmpLt => "'<'".into(),
            Tok::CmpLe => "'<='".into(),
            Tok::CmpGt => "'>'".into(),
            Tok::CmpGe => "'>='".into(),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of file".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

pub fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    let mut line: u32 = 1;
    let mut col: u32 = 1;

    macro_rules! push {
        ($tok:expr, $line:expr, $col:expr) => {
            out.push(Token {
                tok: $tok,
                line: $line,
                col: $col,
            })
        };
    }

    while let Some(&c) = chars.peek() {
        let (tline, tcol) = (line, col);
        match c {
            ' ' | '\t' | '\r' => {
                chars.next();
                col += 1;
            }
            '\n' => {
                chars.next();
                push!(Tok::Newline, tline, tcol);
                line += 1;
                col = 1;
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
            }
            '{' => {
                chars.next();
                col += 1;
                push!(Tok::LBrace, tline, tcol);
            }
            '}' => {
                chars.next();
                col += 1;
                push!(Tok::RBrace, tline, tcol);
            }
            '[' => {
                chars.next();
                col += 1;
                push!(Tok::LBracket, tline, tcol);
            }
            ']' => {
                chars.next();
                col += 1;
                push!(Tok::RBracket, tline, tcol);
            }
            '(' => {
                chars.next();
                col += 1;
                push!(Tok::LParen, tline, tcol);
            }
            ')' => {
                chars.next();
                col += 1;
                push!(Tok::RParen, tline, tcol);
            }
            ',' => {
                chars.next();
                col += 1;
                push!(Tok::Comma, tline, tcol);
            }
            ':' => {
                chars.next();
                col += 1;
                push!(Tok::Colon, tline, tcol);
            }
            '=' => {
                chars.next();
                col += 1;
                if chars.peek() == Some(&'=') {
                    chars.next();
                    col += 1;
                    push!(Tok::CmpEq, tline, tcol);
                } else {
                    push!(Tok::Assign, tline, tcol);
                }
            }
            '!' => {
                chars.next();
                col += 1;
                if chars.peek() == Some(&'=') {
                    chars.next();
                    col += 1;
                    push!(Tok::CmpNe, tline, tcol);
                } else {
                    return Err(err(tline, tcol, "expected '=' after '!'"));
                }
            }
            '<' => {
                chars.next();
                col += 1;
                if chars.peek() == Some(&'=') {
                    chars.next();
                    col += 1;
                    push!(Tok::CmpLe, tline, tcol);
                } else {
                    push!(Tok::CmpLt, tline, tcol);
                }
            }
            '>' => {
                chars.next();
                col += 1;
                if chars.peek() == Some(&'=') {
                    chars.next();
                    col += 1;
                    push!(Tok::CmpGe, tline, tcol);
                } else {
                    push!(Tok::CmpGt, tline, tcol);
                }
            }
            '"' => {
                chars.next();
                col += 1;
                let mut s = String::new();
                loop {
                    match chars.next() {
                        None | Some('\n') => {
                            return Err(err(tline, tcol, "unterminated string"));
                        }
                        Some('\\') => {
                            col += 1;
                            match chars.next() {
                                Some('"') => {
                                    s.push('"');
                                    col += 1;
                                }
                                Some('\\') => {
                                    s.push('\\');
                                    col += 1;
                                }
                                other => {
                                    return Err(err(
                                        tline,
                                        col,
                                        &format!(
                                            "unsupported escape '\\{}'",
                                            other.map(String::from).unwrap_or_default()
                                        ),
                                    ));
                                }
                            }
                        }
                        Some('"') => {
                            col += 1;
                            break;
                        }
                        Some(c) => {
                            s.push(c);
                            col += 1;
                        }
                    }
                }
                push!(Tok::Str(s), tline, tcol);
            }
            c if c.is_ascii_digit() => {
                let mut raw = String::new();
                let mut is_int = true;
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_digit() {
                        raw.push(c);
                        chars.next();
                        col += 1;
                    } else if c == '.' && is_int {
                        is_int = false;
                        raw.push(c);
                        chars.next();
                        col += 1;
                        if !chars.peek().is_some_and(|c| c.is_ascii_digit()) {
                            return Err(err(tline, tcol, "expected digits after decimal point"));
                        }
                    } else {
                        break;
                    }
                }
                let value: f64 = raw
                    .parse()
                    .map_err(|_| err(tline, tcol, &format!("bad number '{raw}'")))?;
                push!(Tok::Num { value, raw, is_int }, tline, tcol);
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        s.push(c);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                push!(Tok::Ident(s), tline, tcol);
            }
            other => {
                return Err(err(tline, tcol, &format!("unexpected character '{other}'")));
            }
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

fn err(line: u32, col: u32, message: &str) -> ParseError {
    ParseError {
        line,
        col,
        kind: ParseErrorKind::Lex,
        message: message.to_string(),
    }
}
