//! Tokenizer, parser and printer.
//!
//! The word model is the familiar one from command languages: a command is a
//! list of words separated by blanks and ended by a newline or `;`. A word is
//! bare text (backslash escapes apply), a `"quoted"` word (substitutions
//! apply), a `{braced}` word (kept verbatim, braces nest), a `[bracketed]`
//! script whose result is substituted, or a `$variable`. Bare words may mix
//! text, variables and brackets. `#` at the start of a command begins a
//! comment running to the end of the line.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Pos {
    pub line: u32,
    pub column: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("{0}: unbalanced brace")]
    UnbalancedBrace(Pos),
    #[error("{0}: unbalanced bracket")]
    UnbalancedBracket(Pos),
    #[error("{0}: unbalanced quote")]
    UnbalancedQuote(Pos),
    #[error("{0}: empty variable name")]
    EmptyVariableName(Pos),
    #[error("{pos}: extra characters after close-{after}")]
    ExtraCharacters { pos: Pos, after: &'static str },
}

impl ParseError {
    pub fn pos(&self) -> Pos {
        match self {
            ParseError::UnbalancedBrace(p)
            | ParseError::UnbalancedBracket(p)
            | ParseError::UnbalancedQuote(p)
            | ParseError::EmptyVariableName(p)
            | ParseError::ExtraCharacters { pos: p, .. } => *p,
        }
    }
}

/// One piece of a substituting word.
#[derive(Debug, Clone, PartialEq)]
pub enum Part {
    Text(String),
    Var(String),
    Script(Script),
}

#[derive(Debug, Clone, PartialEq)]
pub enum WordForm {
    Literal(String),
    Brace(String),
    Var(String),
    Bracket(Script),
    Quoted(Vec<Part>),
    /// Bare word mixing text, variables and brackets.
    Compound(Vec<Part>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Word {
    pub pos: Pos,
    pub form: WordForm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Command {
    pub pos: Pos,
    pub words: Vec<Word>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Script {
    pub commands: Vec<Command>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Word(String),
    Quoted(Vec<Part>),
    Brace(String),
    Bracket(Script),
    Var(String),
    Separator,
    Comment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    /// Source text of the token.
    pub text: String,
    pub pos: Pos,
    /// True when the token continues the previous word with no blank between.
    pub joined: bool,
}

struct Scanner<'a> {
    src: &'a str,
    i: usize,
    line: u32,
    column: u32,
}

fn is_name(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn escape(c: char) -> char {
    match c {
        'n' => '\n',
        't' => '\t',
        'r' => '\r',
        other => other,
    }
}

impl<'a> Scanner<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.i..].chars().next()
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.src[self.i..].chars();
        it.next();
        it.next()
    }

    fn pos(&self) -> Pos {
        Pos { line: self.line, column: self.column }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.i += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    /// Skips blanks and backslash-newline continuations.
    fn skip_blanks(&mut self) -> bool {
        let start = self.i;
        loop {
            match self.peek() {
                Some(' ' | '\t' | '\r') => {
                    self.bump();
                }
                Some('\\') if self.peek2() == Some('\n') => {
                    self.bump();
                    self.bump();
                }
                _ => break,
            }
        }
        self.i != start
    }

    fn word_ends(&self, nested: bool) -> bool {
        match self.peek() {
            None | Some(' ' | '\t' | '\r' | '\n' | ';') => true,
            Some('\\') => self.peek2() == Some('\n'),
            Some(']') => nested,
            _ => false,
        }
    }

    fn brace(&mut self) -> Result<String, ParseError> {
        let open = self.pos();
        self.bump();
        let start = self.i;
        let mut depth = 1;
        loop {
            match self.bump() {
                None => return Err(ParseError::UnbalancedBrace(open)),
                Some('\\') => {
                    self.bump();
                }
                Some('{') => depth += 1,
                Some('}') => {
                    depth -= 1;
                    if depth == 0 {
                        return Ok(self.src[start..self.i - 1].to_string());
                    }
                }
                _ => {}
            }
        }
    }

    fn var(&mut self) -> Result<String, ParseError> {
        let at = self.pos();
        self.bump();
        if self.peek() == Some('{') {
            self.bump();
            let start = self.i;
            while let Some(c) = self.peek() {
                if c == '}' {
                    let name = self.src[start..self.i].to_string();
                    self.bump();
                    if name.is_empty() {
                        return Err(ParseError::EmptyVariableName(at));
                    }
                    return Ok(name);
                }
                self.bump();
            }
            return Err(ParseError::UnbalancedBrace(at));
        }
        let start = self.i;
        while self.peek().is_some_and(is_name) {
            self.bump();
        }
        if start == self.i {
            return Err(ParseError::EmptyVariableName(at));
        }
        Ok(self.src[start..self.i].to_string())
    }

    fn bracket(&mut self) -> Result<Script, ParseError> {
        let open = self.pos();
        self.bump();
        let script = self.script(true)?;
        if self.bump() != Some(']') {
            return Err(ParseError::UnbalancedBracket(open));
        }
        Ok(script)
    }

    fn quoted(&mut self) -> Result<Vec<Part>, ParseError> {
        let open = self.pos();
        self.bump();
        let mut parts = Vec::new();
        let mut text = String::new();
        loop {
            match self.peek() {
                None => return Err(ParseError::UnbalancedQuote(open)),
                Some('"') => {
                    self.bump();
                    break;
                }
                Some('\\') => {
                    self.bump();
                    match self.bump() {
                        Some('\n') => text.push(' '),
                        Some(c) => text.push(escape(c)),
                        None => return Err(ParseError::UnbalancedQuote(open)),
                    }
                }
                Some('$') => {
                    flush(&mut parts, &mut text);
                    parts.push(Part::Var(self.var()?));
                }
                Some('[') => {
                    flush(&mut parts, &mut text);
                    parts.push(Part::Script(self.bracket()?));
                }
                Some(c) => {
                    text.push(c);
                    self.bump();
                }
            }
        }
        if !text.is_empty() || parts.is_empty() {
            parts.push(Part::Text(text));
        }
        Ok(parts)
    }

    /// Text with `$var`, `[script]` and backslash substitutions, to the end of input.
    fn subst_parts(&mut self) -> Result<Vec<Part>, ParseError> {
        let mut parts = Vec::new();
        let mut text = String::new();
        while let Some(c) = self.peek() {
            match c {
                '\\' => {
                    self.bump();
                    text.push(self.bump().map_or('\\', escape));
                }
                '$' => {
                    flush(&mut parts, &mut text);
                    parts.push(Part::Var(self.var()?));
                }
                '[' => {
                    flush(&mut parts, &mut text);
                    parts.push(Part::Script(self.bracket()?));
                }
                c => {
                    text.push(c);
                    self.bump();
                }
            }
        }
        flush(&mut parts, &mut text);
        Ok(parts)
    }

    fn bare(&mut self, nested: bool) -> String {
        let mut text = String::new();
        while !self.word_ends(nested) {
            match self.peek() {
                Some('$' | '[') => break,
                Some('\\') => {
                    self.bump();
                    text.push(self.bump().map_or('\\', escape));
                }
                Some(c) => {
                    text.push(c);
                    self.bump();
                }
                None => break,
            }
        }
        text
    }

    /// Scans tokens until the end of input or, when `nested`, an unmatched `]`.
    fn tokens(&mut self, nested: bool) -> Result<Vec<Token>, ParseError> {
        let mut out = Vec::new();
        let mut at_command_start = true;
        let mut in_word = false;
        loop {
            if !in_word || self.word_ends(nested) {
                self.skip_blanks();
                in_word = false;
            }
            let pos = self.pos();
            let start = self.i;
            let Some(c) = self.peek() else { break };
            let kind = match c {
                ']' if nested => break,
                '\n' | ';' => {
                    self.bump();
                    at_command_start = true;
                    TokenKind::Separator
                }
                '#' if at_command_start => {
                    while self.peek().is_some_and(|c| c != '\n') {
                        if self.bump() == Some('\\') {
                            self.bump();
                        }
                    }
                    TokenKind::Comment
                }
                '{' if !in_word => {
                    let body = self.brace()?;
                    if !self.word_ends(nested) {
                        return Err(ParseError::ExtraCharacters { pos: self.pos(), after: "brace" });
                    }
                    TokenKind::Brace(body)
                }
                '"' if !in_word => {
                    let parts = self.quoted()?;
                    if !self.word_ends(nested) {
                        return Err(ParseError::ExtraCharacters { pos: self.pos(), after: "quote" });
                    }
                    TokenKind::Quoted(parts)
                }
                '$' => TokenKind::Var(self.var()?),
                '[' => TokenKind::Bracket(self.bracket()?),
                _ => TokenKind::Word(self.bare(nested)),
            };
            let word = !matches!(kind, TokenKind::Separator | TokenKind::Comment);
            if word {
                at_command_start = false;
            }
            out.push(Token { kind, text: self.src[start..self.i].to_string(), pos, joined: word && in_word });
            in_word = word && !self.word_ends(nested);
        }
        Ok(out)
    }

    fn script(&mut self, nested: bool) -> Result<Script, ParseError> {
        let tokens = self.tokens(nested)?;
        Ok(assemble(tokens))
    }
}

fn flush(parts: &mut Vec<Part>, text: &mut String) {
    if !text.is_empty() {
        parts.push(Part::Text(std::mem::take(text)));
    }
}

fn word_from(group: Vec<Token>) -> Word {
    let pos = group[0].pos;
    if group.len() == 1 {
        let form = match group.into_iter().next().unwrap().kind {
            TokenKind::Word(t) => WordForm::Literal(t),
            TokenKind::Quoted(p) => WordForm::Quoted(p),
            TokenKind::Brace(b) => WordForm::Brace(b),
            TokenKind::Bracket(s) => WordForm::Bracket(s),
            TokenKind::Var(v) => WordForm::Var(v),
            TokenKind::Separator | TokenKind::Comment => unreachable!("not a word token"),
        };
        return Word { pos, form };
    }
    let mut parts: Vec<Part> = Vec::new();
    for t in group {
        match t.kind {
            TokenKind::Word(s) => match parts.last_mut() {
                Some(Part::Text(prev)) => prev.push_str(&s),
                _ => parts.push(Part::Text(s)),
            },
            TokenKind::Var(v) => parts.push(Part::Var(v)),
            TokenKind::Bracket(s) => parts.push(Part::Script(s)),
            _ => unreachable!("braced and quoted words never join"),
        }
    }
    Word { pos, form: WordForm::Compound(parts) }
}

fn assemble(tokens: Vec<Token>) -> Script {
    let mut commands = Vec::new();
    let mut words: Vec<Word> = Vec::new();
    let mut group: Vec<Token> = Vec::new();
    let finish_word = |group: &mut Vec<Token>, words: &mut Vec<Word>| {
        if !group.is_empty() {
            words.push(word_from(std::mem::take(group)));
        }
    };
    for t in tokens {
        match t.kind {
            TokenKind::Separator | TokenKind::Comment => {
                finish_word(&mut group, &mut words);
                if !words.is_empty() {
                    commands.push(Command { pos: words[0].pos, words: std::mem::take(&mut words) });
                }
            }
            _ => {
                if !t.joined {
                    finish_word(&mut group, &mut words);
                }
                group.push(t);
            }
        }
    }
    finish_word(&mut group, &mut words);
    if !words.is_empty() {
        commands.push(Command { pos: words[0].pos, words });
    }
    Script { commands }
}

fn scanner(src: &str) -> Scanner<'_> {
    Scanner { src, i: 0, line: 1, column: 1 }
}

/// Top-level tokens of `src`. Bracketed scripts are parsed into their token.
pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut s = scanner(src);
    let tokens = s.tokens(false)?;
    if s.i < src.len() {
        return Err(ParseError::UnbalancedBracket(s.pos()));
    }
    Ok(tokens)
}

pub fn parse(src: &str) -> Result<Script, ParseError> {
    tokenize(src).map(assemble)
}

/// Splits text into literal pieces, variable references and bracketed scripts,
/// as inside a quoted word. Used for expressions.
pub fn parse_subst(src: &str) -> Result<Vec<Part>, ParseError> {
    scanner(src).subst_parts()
}

// ---- printing ----

fn push_escaped(out: &mut String, text: &str) {
    for c in text.chars() {
        match c {
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            ' ' | ';' | '"' | '{' | '}' | '[' | ']' | '$' | '\\' | '#' => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
}

fn push_var(out: &mut String, name: &str, next: Option<&Part>) {
    let plain = name.chars().all(is_name)
        && !matches!(next, Some(Part::Text(t)) if t.starts_with(is_name));
    if plain {
        out.push('$');
        out.push_str(name);
    } else {
        out.push_str("${");
        out.push_str(name);
        out.push('}');
    }
}

fn push_parts(out: &mut String, parts: &[Part], quoted: bool) {
    for (i, p) in parts.iter().enumerate() {
        match p {
            Part::Text(t) if quoted => {
                for c in t.chars() {
                    match c {
                        '"' | '\\' | '$' | '[' => {
                            out.push('\\');
                            out.push(c);
                        }
                        '\n' => out.push_str("\\n"),
                        c => out.push(c),
                    }
                }
            }
            Part::Text(t) => push_escaped(out, t),
            Part::Var(v) => push_var(out, v, parts.get(i + 1)),
            Part::Script(s) => {
                out.push('[');
                out.push_str(&print(s));
                out.push(']');
            }
        }
    }
}

fn print_word(out: &mut String, w: &Word) {
    match &w.form {
        WordForm::Literal(t) if t.is_empty() => out.push_str("{}"),
        WordForm::Literal(t) => push_escaped(out, t),
        WordForm::Brace(b) => {
            out.push('{');
            out.push_str(b);
            out.push('}');
        }
        WordForm::Var(v) => push_var(out, v, None),
        WordForm::Bracket(s) => {
            out.push('[');
            out.push_str(&print(s));
            out.push(']');
        }
        WordForm::Quoted(parts) => {
            out.push('"');
            push_parts(out, parts, true);
            out.push('"');
        }
        WordForm::Compound(parts) => push_parts(out, parts, false),
    }
}

/// Source text that parses back to `script` (up to positions).
pub fn print(script: &Script) -> String {
    let mut out = String::new();
    for (i, c) in script.commands.iter().enumerate() {
        if i > 0 {
            out.push_str("; ");
        }
        for (j, w) in c.words.iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            print_word(&mut out, w);
        }
    }
    out
}

impl fmt::Display for Script {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print(self))
    }
}

impl Script {
    /// Copy with every position zeroed, for structural comparison.
    pub fn without_positions(&self) -> Script {
        fn parts(p: &[Part]) -> Vec<Part> {
            p.iter()
                .map(|p| match p {
                    Part::Script(s) => Part::Script(s.without_positions()),
                    other => other.clone(),
                })
                .collect()
        }
        Script {
            commands: self
                .commands
                .iter()
                .map(|c| Command {
                    pos: Pos::default(),
                    words: c
                        .words
                        .iter()
                        .map(|w| Word {
                            pos: Pos::default(),
                            form: match &w.form {
                                WordForm::Bracket(s) => WordForm::Bracket(s.without_positions()),
                                WordForm::Quoted(p) => WordForm::Quoted(parts(p)),
                                WordForm::Compound(p) => WordForm::Compound(parts(p)),
                                other => other.clone(),
                            },
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}
