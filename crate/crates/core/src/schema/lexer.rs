//! Tokenizer for the DDL dialect. Terminals are case-insensitive; `--`
//! starts a comment running to end of line.

use std::fmt;

use super::ParseError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Token {
    /// Identifier or keyword, lowercased.
    Word(String),
    Int(i64),
    Num(f64),
    Str(String),
    LParen,
    RParen,
    Comma,
    Semi,
    Star,
    Minus,
    Eq,
    Lt,
    Gt,
    Le,
    Ge,
    Ne,
}

impl Token {
    pub fn describe(&self) -> String {
        match self {
            Token::Word(w) => w.to_uppercase(),
            Token::Int(v) => v.to_string(),
            Token::Num(v) => v.to_string(),
            Token::Str(s) => format!("'{s}'"),
            Token::LParen => "(".into(),
            Token::RParen => ")".into(),
            Token::Comma => ",".into(),
            Token::Semi => ";".into(),
            Token::Star => "*".into(),
            Token::Minus => "-".into(),
            Token::Eq => "=".into(),
            Token::Lt => "<".into(),
            Token::Gt => ">".into(),
            Token::Le => "<=".into(),
            Token::Ge => ">=".into(),
            Token::Ne => "<>".into(),
        }
    }
}

pub fn tokenize(source: &str) -> Result<Vec<(Token, Pos)>, ParseError> {
    let mut out = Vec::new();
    let mut chars = source.chars().peekable();
    let mut line = 1u32;
    let mut col = 1u32;

    macro_rules! bump {
        () => {{
            let c = chars.next();
            if let Some(c) = c {
                if c == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
            }
            c
        }};
    }

    while let Some(&c) = chars.peek() {
        let pos = Pos { line, col };
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                bump!();
            }
            '-' => {
                bump!();
                if chars.peek() == Some(&'-') {
                    while let Some(&n) = chars.peek() {
                        if n == '\n' {
                            break;
                        }
                        bump!();
                    }
                } else {
                    out.push((Token::Minus, pos));
                }
            }
            '(' => {
                bump!();
                out.push((Token::LParen, pos));
            }
            ')' => {
                bump!();
                out.push((Token::RParen, pos));
            }
            ',' => {
                bump!();
                out.push((Token::Comma, pos));
            }
            ';' => {
                bump!();
                out.push((Token::Semi, pos));
            }
            '*' => {
                bump!();
                out.push((Token::Star, pos));
            }
            '=' => {
                bump!();
                out.push((Token::Eq, pos));
            }
            '<' => {
                bump!();
                match chars.peek() {
                    Some('=') => {
                        bump!();
                        out.push((Token::Le, pos));
                    }
                    Some('>') => {
                        bump!();
                        out.push((Token::Ne, pos));
                    }
                    _ => out.push((Token::Lt, pos)),
                }
            }
            '>' => {
                bump!();
                if chars.peek() == Some(&'=') {
                    bump!();
                    out.push((Token::Ge, pos));
                } else {
                    out.push((Token::Gt, pos));
                }
            }
            '\'' => {
                bump!();
                let mut s = String::new();
                loop {
                    match bump!() {
                        Some('\'') => break,
                        Some(c) => s.push(c),
                        None => {
                            return Err(ParseError::syntax(pos, "unterminated string literal", "'"))
                        }
                    }
                }
                out.push((Token::Str(s), pos));
            }
            c if c.is_ascii_digit() => {
                let mut text = String::new();
                let mut is_float = false;
                while let Some(&n) = chars.peek() {
                    if n.is_ascii_digit() {
                        text.push(n);
                        bump!();
                    } else if n == '.' && !is_float {
                        is_float = true;
                        text.push(n);
                        bump!();
                    } else {
                        break;
                    }
                }
                if is_float {
                    let v: f64 = text
                        .parse()
                        .map_err(|_| ParseError::syntax(pos, "malformed number", &text))?;
                    out.push((Token::Num(v), pos));
                } else {
                    let v: i64 = text
                        .parse()
                        .map_err(|_| ParseError::syntax(pos, "integer out of range", &text))?;
                    out.push((Token::Int(v), pos));
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut text = String::new();
                while let Some(&n) = chars.peek() {
                    if n.is_ascii_alphanumeric() || n == '_' {
                        text.push(n.to_ascii_lowercase());
                        bump!();
                    } else {
                        break;
                    }
                }
                out.push((Token::Word(text), pos));
            }
            other => {
                return Err(ParseError::syntax(
                    pos,
                    "unexpected character",
                    other.to_string(),
                ));
            }
        }
    }
    Ok(out)
}
