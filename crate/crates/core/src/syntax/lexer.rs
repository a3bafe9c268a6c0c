use super::ast::Loc;
use super::ParseError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Lower(String),
    Upper(String),
    Op(String),
    Int(i64),
    Char(char),
    Str(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Semi,
    Backtick,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Lower(s) | Tok::Upper(s) | Tok::Op(s) => format!("`{s}`"),
            Tok::Int(n) => format!("`{n}`"),
            Tok::Char(c) => format!("`{c:?}`"),
            Tok::Str(s) => format!("{s:?}"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Backtick => "`` ` ``".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub loc: Loc,
    /// First token on its line.
    pub bol: bool,
}

const SYMBOLS: &str = "!#$%&*+./<=>?@\\^|-~:";

fn is_symbol(c: char) -> bool {
    SYMBOLS.contains(c)
}

pub fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let mut bol = true;
    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
                bol = true;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            bump!();
            continue;
        }
        // line comment: two or more dashes not part of an operator
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            let mut j = i;
            while j < chars.len() && chars[j] == '-' {
                j += 1;
            }
            if j >= chars.len() || !is_symbol(chars[j]) {
                while i < chars.len() && chars[i] != '\n' {
                    bump!();
                }
                continue;
            }
        }
        if c == '{' && chars.get(i + 1) == Some(&'-') {
            let start = Loc { line, col };
            let mut depth = 0usize;
            loop {
                if i >= chars.len() {
                    return Err(ParseError::new(start, "unterminated block comment"));
                }
                if chars[i] == '{' && chars.get(i + 1) == Some(&'-') {
                    depth += 1;
                    bump!();
                    bump!();
                } else if chars[i] == '-' && chars.get(i + 1) == Some(&'}') {
                    depth -= 1;
                    bump!();
                    bump!();
                    if depth == 0 {
                        break;
                    }
                } else {
                    bump!();
                }
            }
            continue;
        }
        let loc = Loc { line, col };
        let first = bol;
        bol = false;
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '\'') {
                bump!();
            }
            let word: String = chars[start..i].iter().collect();
            if c.is_ascii_uppercase() {
                Tok::Upper(word)
            } else {
                Tok::Lower(word)
            }
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                bump!();
            }
            let digits: String = chars[start..i].iter().collect();
            Tok::Int(digits.parse().map_err(|_| ParseError::new(loc, "integer literal out of range"))?)
        } else if c == '\'' {
            bump!();
            let ch = match chars.get(i) {
                Some('\\') => {
                    bump!();
                    let e = *chars.get(i).ok_or_else(|| ParseError::new(loc, "unterminated character literal"))?;
                    bump!();
                    unescape(e)
                }
                Some(&ch) => {
                    bump!();
                    ch
                }
                None => return Err(ParseError::new(loc, "unterminated character literal")),
            };
            if chars.get(i) != Some(&'\'') {
                return Err(ParseError::new(loc, "unterminated character literal"));
            }
            bump!();
            Tok::Char(ch)
        } else if c == '"' {
            bump!();
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None | Some('\n') => return Err(ParseError::new(loc, "unterminated string literal")),
                    Some('"') => {
                        bump!();
                        break;
                    }
                    Some('\\') => {
                        bump!();
                        let e = *chars.get(i).ok_or_else(|| ParseError::new(loc, "unterminated string literal"))?;
                        bump!();
                        s.push(unescape(e));
                    }
                    Some(&ch) => {
                        bump!();
                        s.push(ch);
                    }
                }
            }
            Tok::Str(s)
        } else if is_symbol(c) {
            let start = i;
            while i < chars.len() && is_symbol(chars[i]) {
                bump!();
            }
            Tok::Op(chars[start..i].iter().collect())
        } else {
            let t = match c {
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '[' => Tok::LBracket,
                ']' => Tok::RBracket,
                '{' => Tok::LBrace,
                '}' => Tok::RBrace,
                ',' => Tok::Comma,
                ';' => Tok::Semi,
                '`' => Tok::Backtick,
                _ => return Err(ParseError::new(loc, format!("unexpected character `{c}`"))),
            };
            bump!();
            t
        };
        out.push(Token { tok, loc, bol: first });
    }
    out.push(Token { tok: Tok::Eof, loc: Loc { line, col }, bol: true });
    Ok(out)
}

fn unescape(e: char) -> char {
    match e {
        'n' => '\n',
        't' => '\t',
        '0' => '\0',
        other => other,
    }
}
