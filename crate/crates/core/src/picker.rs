//! Picker expressions: label patterns combined with set algebra.
//!
//! ```text
//! expr    := term (("+" | "&" | "-") term)*
//! term    := "(" expr ")" | pattern
//! pattern := ("/" segment)+
//! segment := literal-with-globs | "**"
//! ```
//!
//! Operators have equal precedence and associate to the left. Within a
//! segment `*` matches any run of characters, `?` exactly one, and `[a-z0-9]`
//! one character from the listed ranges. `**` as a whole segment matches zero
//! or more segments. A pattern without any glob is a radical: it selects every
//! module with a label under that prefix. Matching is case-sensitive and
//! considers system labels as well as user labels.

use std::fmt;

use crate::label::{LabelIndex, ModuleSet, SegmentMatcher};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("picker syntax error at offset {offset}: {message}")]
pub struct PickerSyntaxError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetOp {
    Union,
    Intersection,
    Difference,
}

impl SetOp {
    fn symbol(self) -> char {
        match self {
            SetOp::Union => '+',
            SetOp::Intersection => '&',
            SetOp::Difference => '-',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum GlobTok {
    Char(char),
    Star,
    One,
    Class(Vec<(char, char)>),
}

/// Compiled single-segment glob.
#[derive(Debug, Clone, PartialEq)]
pub struct Glob {
    toks: Vec<GlobTok>,
}

impl Glob {
    fn parse(seg: &str, offset: usize) -> Result<Glob, PickerSyntaxError> {
        let err = |at: usize, message: &str| PickerSyntaxError { offset: offset + at, message: message.into() };
        let mut toks = Vec::new();
        let mut chars = seg.char_indices().peekable();
        while let Some((at, c)) = chars.next() {
            match c {
                '*' => {
                    if toks.last() != Some(&GlobTok::Star) {
                        toks.push(GlobTok::Star);
                    }
                }
                '?' => toks.push(GlobTok::One),
                '[' => {
                    let mut ranges = Vec::new();
                    let mut closed = false;
                    while let Some((_, c)) = chars.next() {
                        if c == ']' {
                            closed = true;
                            break;
                        }
                        if chars.peek().map(|&(_, n)| n) == Some('-') {
                            chars.next();
                            match chars.next() {
                                Some((_, ']')) | None => return Err(err(at, "unterminated range in class")),
                                Some((_, hi)) => {
                                    if hi < c {
                                        return Err(err(at, "reversed range in class"));
                                    }
                                    ranges.push((c, hi));
                                }
                            }
                        } else {
                            ranges.push((c, c));
                        }
                    }
                    if !closed {
                        return Err(err(at, "unterminated `[`"));
                    }
                    if ranges.is_empty() {
                        return Err(err(at, "empty character class"));
                    }
                    toks.push(GlobTok::Class(ranges));
                }
                ']' => return Err(err(at, "unmatched `]`")),
                c => toks.push(GlobTok::Char(c)),
            }
        }
        Ok(Glob { toks })
    }

    fn tok_matches(tok: &GlobTok, c: char) -> bool {
        match tok {
            GlobTok::Char(x) => *x == c,
            GlobTok::One => true,
            GlobTok::Class(r) => r.iter().any(|&(lo, hi)| lo <= c && c <= hi),
            GlobTok::Star => unreachable!(),
        }
    }

    /// Iterative wildcard match with single-star backtracking.
    pub fn matches(&self, seg: &str) -> bool {
        let text: Vec<char> = seg.chars().collect();
        let (mut t, mut p) = (0usize, 0usize);
        let mut star: Option<(usize, usize)> = None;
        while t < text.len() {
            match self.toks.get(p) {
                Some(GlobTok::Star) => {
                    star = Some((p, t));
                    p += 1;
                }
                Some(tok) if Self::tok_matches(tok, text[t]) => {
                    t += 1;
                    p += 1;
                }
                _ => match star {
                    Some((sp, st)) => {
                        p = sp + 1;
                        t = st + 1;
                        star = Some((sp, st + 1));
                    }
                    None => return false,
                },
            }
        }
        self.toks[p..].iter().all(|t| *t == GlobTok::Star)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Pattern {
    Radical(String),
    Segments(Vec<SegmentMatcher>),
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Pattern { text: String, pattern: Pattern },
    Group(Box<Node>),
    Binary { op: SetOp, lhs: Box<Node>, rhs: Box<Node> },
}

/// A parsed picker expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Picker {
    root: Node,
}

impl Picker {
    pub fn parse(src: &str) -> Result<Picker, PickerSyntaxError> {
        let mut p = Parser { src, pos: 0 };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos < src.len() {
            return Err(p.error(if p.peek() == Some(')') { "unmatched `)`" } else { "unexpected input" }));
        }
        Ok(Picker { root })
    }

    pub fn eval(&self, index: &LabelIndex) -> ModuleSet {
        eval_node(&self.root, index)
    }
}

impl fmt::Display for Picker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn write(node: &Node, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match node {
                Node::Pattern { text, .. } => f.write_str(text),
                Node::Group(inner) => {
                    f.write_str("(")?;
                    write(inner, f)?;
                    f.write_str(")")
                }
                Node::Binary { op, lhs, rhs } => {
                    write(lhs, f)?;
                    write!(f, " {} ", op.symbol())?;
                    write(rhs, f)
                }
            }
        }
        write(&self.root, f)
    }
}

impl std::str::FromStr for Picker {
    type Err = PickerSyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Picker::parse(s)
    }
}

fn eval_node(node: &Node, index: &LabelIndex) -> ModuleSet {
    match node {
        Node::Pattern { pattern: Pattern::Radical(r), .. } => index.resolve_radical(r).unwrap_or_default(),
        Node::Pattern { pattern: Pattern::Segments(segs), .. } => index.match_segments(segs),
        Node::Group(inner) => eval_node(inner, index),
        Node::Binary { op, lhs, rhs } => {
            let mut a = eval_node(lhs, index);
            let b = eval_node(rhs, index);
            match op {
                SetOp::Union => {
                    a.extend(b);
                    a
                }
                SetOp::Intersection => {
                    a.retain(|id| b.contains(id));
                    a
                }
                SetOp::Difference => {
                    a.retain(|id| !b.contains(id));
                    a
                }
            }
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

fn is_pattern_char(c: char) -> bool {
    !(c.is_whitespace() || matches!(c, '(' | ')' | '+' | '&' | '-' | '|'))
}

impl Parser<'_> {
    fn error(&self, message: &str) -> PickerSyntaxError {
        PickerSyntaxError { offset: self.pos, message: message.into() }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn expr(&mut self) -> Result<Node, PickerSyntaxError> {
        let mut lhs = self.term()?;
        loop {
            self.skip_ws();
            let op = match self.peek() {
                Some('+') => SetOp::Union,
                Some('&') => SetOp::Intersection,
                Some('-') => SetOp::Difference,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
    }

    fn term(&mut self) -> Result<Node, PickerSyntaxError> {
        self.skip_ws();
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.skip_ws();
                if self.peek() != Some(')') {
                    return Err(self.error("expected `)`"));
                }
                self.pos += 1;
                Ok(Node::Group(Box::new(inner)))
            }
            Some('/') => self.pattern(),
            Some('|') => Err(self.error("`|` is not an operator; use `+` for union")),
            Some(_) => Err(self.error("expected `(` or a pattern starting with `/`")),
            None => Err(self.error("unexpected end of expression")),
        }
    }

    fn pattern(&mut self) -> Result<Node, PickerSyntaxError> {
        let start = self.pos;
        let mut in_class = false;
        while let Some(c) = self.peek() {
            // `-` inside a character class is a range, not the difference operator
            match c {
                '[' => in_class = true,
                ']' => in_class = false,
                '-' if in_class => {}
                c if !is_pattern_char(c) => break,
                _ => {}
            }
            self.pos += c.len_utf8();
        }
        let text = &self.src[start..self.pos];
        let mut segs = Vec::new();
        let mut globbed = false;
        let mut offset = start + 1;
        for seg in text[1..].split('/') {
            if seg.is_empty() {
                return Err(PickerSyntaxError { offset, message: "empty segment".into() });
            }
            if seg == "**" {
                globbed = true;
                segs.push(SegmentMatcher::Any);
            } else if seg.contains(['*', '?', '[', ']']) {
                globbed = true;
                segs.push(SegmentMatcher::Glob(Glob::parse(seg, offset)?));
            } else {
                segs.push(SegmentMatcher::Literal(seg.to_string()));
            }
            offset += seg.len() + 1;
        }
        let pattern = if globbed { Pattern::Segments(segs) } else { Pattern::Radical(text.to_string()) };
        Ok(Node::Pattern { text: text.to_string(), pattern })
    }
}
