use std::fmt;

use super::ParseError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Int(u64),
    /// `---`
    ArrowStart,
    /// `--->`
    ArrowEnd,
    Bang,
    BangBang,
    Query,
    QueryQuery,
    Assign,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Colon,
    Dot,
    Plus,
    Minus,
    Star,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    AndSym,
    OrSym,
    NotSym,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Ident(s) => return write!(f, "`{s}`"),
            Tok::Int(i) => return write!(f, "`{i}`"),
            Tok::ArrowStart => "---",
            Tok::ArrowEnd => "--->",
            Tok::Bang => "!",
            Tok::BangBang => "!!",
            Tok::Query => "?",
            Tok::QueryQuery => "??",
            Tok::Assign => ":=",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Comma => ",",
            Tok::Semi => ";",
            Tok::Colon => ":",
            Tok::Dot => ".",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Eq => "=",
            Tok::Ne => "<>",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::AndSym => "∧",
            Tok::OrSym => "∨",
            Tok::NotSym => "¬",
            Tok::Eof => return f.write_str("end of input"),
        };
        write!(f, "`{s}`")
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

/// Splits `text` into tokens. `--` starts a comment unless it begins a
/// transition arrow (`---` or `--->`).
pub(crate) fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    while i < chars.len() {
        let c = chars[i];
        let at = |k: usize| chars.get(i + k).copied();
        let (start_line, start_col) = (line, col);
        let mut push = |tok: Tok, len: usize, i: &mut usize, col: &mut usize| {
            out.push(Token {
                tok,
                line: start_line,
                column: start_col,
            });
            *i += len;
            *col += len;
        };

        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '-' && at(1) == Some('-') {
            if at(2) == Some('-') {
                if at(3) == Some('>') {
                    push(Tok::ArrowEnd, 4, &mut i, &mut col);
                } else {
                    push(Tok::ArrowStart, 3, &mut i, &mut col);
                }
            } else {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                    col += 1;
                }
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            out.push(Token {
                tok: Tok::Ident(word),
                line: start_line,
                column: start_col,
            });
            col += i - start;
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let digits: String = chars[start..i].iter().collect();
            let value = digits.parse::<u64>().map_err(|_| ParseError {
                line: start_line,
                column: start_col,
                expected: "integer literal".into(),
                found: digits.clone(),
            })?;
            out.push(Token {
                tok: Tok::Int(value),
                line: start_line,
                column: start_col,
            });
            col += i - start;
            continue;
        }
        let (tok, len) = match (c, at(1)) {
            ('!', Some('!')) => (Tok::BangBang, 2),
            ('!', Some('=')) => (Tok::Ne, 2),
            ('!', _) => (Tok::Bang, 1),
            ('?', Some('?')) => (Tok::QueryQuery, 2),
            ('?', _) => (Tok::Query, 1),
            (':', Some('=')) => (Tok::Assign, 2),
            (':', _) => (Tok::Colon, 1),
            ('<', Some('>')) => (Tok::Ne, 2),
            ('<', Some('=')) => (Tok::Le, 2),
            ('<', _) => (Tok::Lt, 1),
            ('>', Some('=')) => (Tok::Ge, 2),
            ('>', _) => (Tok::Gt, 1),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            ('[', _) => (Tok::LBracket, 1),
            (']', _) => (Tok::RBracket, 1),
            (',', _) => (Tok::Comma, 1),
            (';', _) => (Tok::Semi, 1),
            ('.', _) => (Tok::Dot, 1),
            ('+', _) => (Tok::Plus, 1),
            ('-', _) => (Tok::Minus, 1),
            ('*', _) => (Tok::Star, 1),
            ('=', _) => (Tok::Eq, 1),
            ('≠', _) => (Tok::Ne, 1),
            ('≤', _) => (Tok::Le, 1),
            ('≥', _) => (Tok::Ge, 1),
            ('∧', _) => (Tok::AndSym, 1),
            ('∨', _) => (Tok::OrSym, 1),
            ('¬', _) => (Tok::NotSym, 1),
            _ => {
                return Err(ParseError {
                    line,
                    column: col,
                    expected: "a token".into(),
                    found: format!("`{c}`"),
                })
            }
        };
        push(tok, len, &mut i, &mut col);
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}
