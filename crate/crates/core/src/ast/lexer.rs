use super::ParseError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum TokKind {
    Ident,
    Keyword,
    Int,
    Float,
    Char,
    Str,
    Punct,
    Eof,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub kind: TokKind,
    pub text: String,
    pub line: u32,
    pub col: u32,
}

impl Token {
    pub fn is(&self, text: &str) -> bool {
        matches!(self.kind, TokKind::Punct | TokKind::Keyword) && self.text == text
    }
}

const KEYWORDS: &[&str] = &[
    "void", "char", "short", "int", "long", "float", "double", "signed", "unsigned", "const", "static", "extern",
    "volatile", "register", "struct", "if", "else", "while", "do", "for", "return", "break", "continue", "sizeof",
    "goto", "switch", "case", "default", "typedef", "union", "enum",
];

// Longest first so that maximal munch works with a linear scan.
const PUNCTS: &[&str] = &[
    "<<=", ">>=", "...", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=", "-=", "*=", "/=",
    "%=", "&=", "|=", "^=", "+", "-", "*", "/", "%", "<", ">", "=", "!", "~", "&", "|", "^", "?", ":", ";", ",", ".",
    "(", ")", "[", "]", "{", "}",
];

pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0usize;
    let mut line = 1u32;
    let mut col = 1u32;

    macro_rules! bump {
        () => {{
            if bytes[i] == b'\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            bump!();
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                bump!();
            }
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'*') {
            let (l0, c0) = (line, col);
            bump!();
            bump!();
            loop {
                if i >= bytes.len() {
                    return Err(ParseError::new(l0, c0, "unterminated block comment"));
                }
                if bytes[i] == b'*' && bytes.get(i + 1) == Some(&b'/') {
                    bump!();
                    bump!();
                    break;
                }
                bump!();
            }
            continue;
        }
        if c == b'#' {
            return Err(ParseError::new(line, col, "preprocessor directives are not supported"));
        }

        let (tl, tc) = (line, col);
        let start = i;
        let kind;
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                bump!();
            }
            let word = &src[start..i];
            kind = if KEYWORDS.contains(&word) { TokKind::Keyword } else { TokKind::Ident };
        } else if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let mut float = false;
            if c == b'0' && matches!(bytes.get(i + 1), Some(b'x') | Some(b'X')) {
                bump!();
                bump!();
                while i < bytes.len() && bytes[i].is_ascii_hexdigit() {
                    bump!();
                }
            } else {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    if bytes[i] == b'.' {
                        float = true;
                    }
                    bump!();
                }
                if i < bytes.len() && matches!(bytes[i], b'e' | b'E') {
                    float = true;
                    bump!();
                    if i < bytes.len() && matches!(bytes[i], b'+' | b'-') {
                        bump!();
                    }
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        bump!();
                    }
                }
            }
            while i < bytes.len() && matches!(bytes[i], b'u' | b'U' | b'l' | b'L' | b'f' | b'F') {
                bump!();
            }
            kind = if float { TokKind::Float } else { TokKind::Int };
        } else if c == b'"' || c == b'\'' {
            let quote = c;
            bump!();
            loop {
                if i >= bytes.len() || bytes[i] == b'\n' {
                    return Err(ParseError::new(tl, tc, "unterminated literal"));
                }
                if bytes[i] == b'\\' {
                    bump!();
                    if i < bytes.len() {
                        bump!();
                    }
                    continue;
                }
                if bytes[i] == quote {
                    bump!();
                    break;
                }
                bump!();
            }
            kind = if quote == b'"' { TokKind::Str } else { TokKind::Char };
        } else {
            let rest = &src[i..];
            let Some(p) = PUNCTS.iter().find(|p| rest.starts_with(**p)) else {
                let ch = rest.chars().next().unwrap_or('?');
                return Err(ParseError::new(line, col, format!("unexpected character {ch:?}")));
            };
            for _ in 0..p.len() {
                bump!();
            }
            kind = TokKind::Punct;
        }
        out.push(Token { kind, text: src[start..i].to_string(), line: tl, col: tc });
    }
    out.push(Token { kind: TokKind::Eof, text: String::new(), line, col });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_operators_by_longest_match() {
        let toks = tokenize("a<<=b>=c->d").unwrap();
        let texts: Vec<_> = toks.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["a", "<<=", "b", ">=", "c", "->", "d", ""]);
    }

    #[test]
    fn tracks_lines_and_skips_comments() {
        let toks = tokenize("x /* a\nb */ y // z\n'c' \"s\\\"t\"").unwrap();
        assert_eq!((toks[0].line, toks[1].line), (1, 2));
        assert_eq!(toks[2].kind, TokKind::Char);
        assert_eq!(toks[3].text, "\"s\\\"t\"");
        assert_eq!(toks[3].line, 3);
    }

    #[test]
    fn rejects_preprocessor() {
        let err = tokenize("int x;\n#define N 4\n").unwrap_err();
        assert_eq!((err.line, err.column), (2, 1));
    }
}
