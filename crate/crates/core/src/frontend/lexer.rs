use std::sync::Arc;

use crate::diag::{Code, Diagnostic, Loc};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Keyword,
    Identifier,
    IntLiteral,
    FloatLiteral,
    StringLiteral,
    Punctuator,
    /// A whole `#...` line. `#pragma pencil` lines are the only ones the parser
    /// accepts as directives; the text is the trimmed line.
    PragmaLine,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub file: Arc<str>,
    pub loc: Loc,
}

impl Token {
    pub fn is_punct(&self, p: &str) -> bool {
        self.kind == TokenKind::Punctuator && self.text == p
    }

    pub fn is_keyword(&self, k: &str) -> bool {
        self.kind == TokenKind::Keyword && self.text == k
    }

    pub fn is_pencil_pragma(&self) -> bool {
        self.kind == TokenKind::PragmaLine && pragma_words(&self.text).starts_with(&["#pragma", "pencil"])
    }
}

/// Splits a pragma line into words, treating `#` and `pragma` as separate only
/// when written `# pragma`.
pub(crate) fn pragma_words(text: &str) -> Vec<&str> {
    let t = text.trim_start();
    let rest = t.strip_prefix('#').unwrap_or(t).trim_start();
    let mut words = vec!["#pragma"];
    match rest.strip_prefix("pragma") {
        Some(r) if r.is_empty() || r.starts_with(char::is_whitespace) => {
            words.extend(r.split_whitespace());
            words
        }
        _ => vec![t],
    }
}

pub const KEYWORDS: &[&str] = &[
    "void", "int", "float", "double", "for", "while", "if", "else", "return", "goto", "restrict", "const", "static",
    // Recognized so the parser can reject them with a precise message.
    "switch", "case", "default", "do", "break", "continue", "char", "long", "short", "unsigned", "signed", "struct",
    "union", "enum", "typedef", "sizeof", "extern", "inline", "volatile", "auto", "register",
];

// Longest first so maximal munch works with a simple prefix scan.
const PUNCTUATORS: &[&str] = &[
    "<<=", ">>=", "...", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=", "-=", "*=", "/=",
    "%=", "&=", "^=", "|=", "(", ")", "[", "]", "{", "}", ";", ",", ":", "?", ".", "+", "-", "*", "/", "%", "=", "<",
    ">", "!", "~", "&", "|", "^",
];

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: u32,
    column: u32,
    at_line_start: bool,
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

    fn loc(&self) -> Loc {
        Loc::new(self.line, self.column)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.column = 1;
            self.at_line_start = true;
        } else {
            self.column += 1;
            if !c.is_whitespace() {
                self.at_line_start = false;
            }
        }
        Some(c)
    }

    fn bump_n(&mut self, n: usize) {
        for _ in 0..n {
            self.bump();
        }
    }
}

/// Splits PENCIL source into tokens. Comments are dropped; `#` lines become
/// single [`TokenKind::PragmaLine`] tokens.
pub fn tokenize(file: &str, source: &str) -> Result<Vec<Token>, Diagnostic> {
    let file: Arc<str> = Arc::from(file);
    let mut cur = Cursor {
        src: source,
        pos: 0,
        line: 1,
        column: 1,
        at_line_start: true,
    };
    let mut out = Vec::new();
    let tok = |kind, text: &str, loc| Token {
        kind,
        text: text.to_string(),
        file: file.clone(),
        loc,
    };

    while let Some(c) = cur.peek() {
        let loc = cur.loc();
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if cur.rest().starts_with("//") {
            while let Some(c) = cur.peek() {
                if c == '\n' {
                    break;
                }
                cur.bump();
            }
            continue;
        }
        if cur.rest().starts_with("/*") {
            cur.bump_n(2);
            loop {
                if cur.rest().starts_with("*/") {
                    cur.bump_n(2);
                    break;
                }
                if cur.bump().is_none() {
                    return Err(Diagnostic::error(Code::Lex, loc, "unterminated comment"));
                }
            }
            continue;
        }
        if c == '#' && cur.at_line_start {
            let start = cur.pos;
            while let Some(c) = cur.peek() {
                if c == '\n' || cur.rest().starts_with("//") || cur.rest().starts_with("/*") {
                    break;
                }
                cur.bump();
            }
            out.push(tok(TokenKind::PragmaLine, source[start..cur.pos].trim_end(), loc));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = cur.pos;
            while matches!(cur.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
                cur.bump();
            }
            let text = &source[start..cur.pos];
            let kind = if KEYWORDS.contains(&text) {
                TokenKind::Keyword
            } else {
                TokenKind::Identifier
            };
            out.push(tok(kind, text, loc));
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && cur.peek_at(1).is_some_and(|d| d.is_ascii_digit())) {
            let (kind, len) = scan_number(cur.rest());
            let text = &source[cur.pos..cur.pos + len];
            if cur.rest()[len..].starts_with(|c: char| c.is_ascii_alphanumeric() || c == '_') {
                return Err(Diagnostic::error(
                    Code::Lex,
                    loc,
                    format!("malformed number literal starting `{text}`"),
                ));
            }
            cur.bump_n(len);
            out.push(tok(kind, text, loc));
            continue;
        }
        if c == '"' {
            let start = cur.pos;
            cur.bump();
            loop {
                match cur.bump() {
                    Some('"') => break,
                    Some('\\') => {
                        cur.bump();
                    }
                    Some('\n') | None => return Err(Diagnostic::error(Code::Lex, loc, "unterminated string literal")),
                    Some(_) => {}
                }
            }
            out.push(tok(TokenKind::StringLiteral, &source[start..cur.pos], loc));
            continue;
        }
        if let Some(p) = PUNCTUATORS.iter().find(|p| cur.rest().starts_with(**p)) {
            cur.bump_n(p.len());
            out.push(tok(TokenKind::Punctuator, p, loc));
            continue;
        }
        return Err(Diagnostic::error(
            Code::Lex,
            loc,
            format!("illegal character `{}`", c.escape_default()),
        ));
    }
    Ok(out)
}

fn scan_number(s: &str) -> (TokenKind, usize) {
    let b = s.as_bytes();
    let mut i = 0;
    if b.len() > 1 && b[0] == b'0' && (b[1] == b'x' || b[1] == b'X') {
        i = 2;
        while i < b.len() && b[i].is_ascii_hexdigit() {
            i += 1;
        }
        return (TokenKind::IntLiteral, i);
    }
    let mut float = false;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    if i < b.len() && b[i] == b'.' {
        float = true;
        i += 1;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        let mut j = i + 1;
        if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
            j += 1;
        }
        if j < b.len() && b[j].is_ascii_digit() {
            float = true;
            i = j;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
        }
    }
    if float && i < b.len() && (b[i] == b'f' || b[i] == b'F') {
        i += 1;
    }
    let kind = if float {
        TokenKind::FloatLiteral
    } else {
        TokenKind::IntLiteral
    };
    (kind, i)
}
