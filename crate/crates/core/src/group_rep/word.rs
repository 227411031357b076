//! Words, presentations and the presentation DSL.
//!
//! ```text
//! # comment
//! generators: a1 b1 theta1 c
//! theta1 = a1*theta1^-1*a1^-1 = (a1*b1)^-1
//! ```
//!
//! A word is `1` (the identity) or factors joined by `*`; a factor is a
//! generator or a parenthesized word, optionally raised to an integer power
//! with `^`. A chain `w1 = w2 = w3` stands for the relators `w1 w2^-1` and
//! `w2 w3^-1`; a line holding a single word is that relator.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("{line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: unknown generator `{name}`")]
    UnknownGenerator { line: usize, col: usize, name: String },
}

/// Freely reduced word: adjacent letters always have distinct generators and
/// no exponent is zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Word {
    letters: Vec<(String, i64)>,
}

impl Word {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn letter(gen: &str, exp: i64) -> Self {
        Self::from_letters(vec![(gen.to_string(), exp)])
    }

    /// Builds a word from arbitrary letters, reducing freely.
    pub fn from_letters(letters: Vec<(String, i64)>) -> Self {
        let mut w = Self::identity();
        for (g, e) in letters {
            w.push(&g, e);
        }
        w
    }

    pub fn letters(&self) -> &[(String, i64)] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// Appends `gen^exp`, merging with the last letter when it matches.
    pub fn push(&mut self, gen: &str, exp: i64) {
        if exp == 0 {
            return;
        }
        match self.letters.last_mut() {
            Some((g, e)) if g == gen => {
                *e += exp;
                if *e == 0 {
                    self.letters.pop();
                }
            }
            _ => self.letters.push((gen.to_string(), exp)),
        }
    }

    pub fn mul(&self, other: &Word) -> Word {
        let mut w = self.clone();
        for (g, e) in &other.letters {
            w.push(g, *e);
        }
        w
    }

    pub fn inverse(&self) -> Word {
        Word {
            letters: self
                .letters
                .iter()
                .rev()
                .map(|(g, e)| (g.clone(), -e))
                .collect(),
        }
    }

    pub fn pow(&self, k: i64) -> Word {
        let base = if k < 0 { self.inverse() } else { self.clone() };
        let mut w = Word::identity();
        for _ in 0..k.unsigned_abs() {
            w = w.mul(&base);
        }
        w
    }

    /// Generators occurring in the word, in first-occurrence order.
    pub fn generators(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for (g, _) in &self.letters {
            if !out.contains(&g.as_str()) {
                out.push(g);
            }
        }
        out
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            return f.write_str("1");
        }
        for (i, (g, e)) in self.letters.iter().enumerate() {
            if i > 0 {
                f.write_str("*")?;
            }
            if *e == 1 {
                write!(f, "{g}")?;
            } else {
                write!(f, "{g}^{e}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relator {
    pub word: Word,
    /// Source line, 0 for relators not read from text.
    pub line: usize,
    /// The equation the relator came from, e.g. `theta1 = (a2*b2)^-1`.
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPresentation {
    pub generators: Vec<String>,
    pub relators: Vec<Relator>,
}

/// The shipped presentation of the fundamental group of the cover.
pub const PI1_M3: &str = include_str!("../../data/pi1_m3.pres");

impl GroupPresentation {
    pub fn pi1_m3() -> Self {
        parse_presentation(PI1_M3).expect("shipped presentation parses")
    }
}

struct Lexer<'a> {
    chars: Vec<(usize, char)>,
    pos: usize,
    line: usize,
    text: &'a str,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str, line: usize) -> Self {
        Self {
            chars: text.char_indices().collect(),
            pos: 0,
            line,
            text,
        }
    }

    fn col(&self) -> usize {
        let byte = self.chars.get(self.pos).map_or(self.text.len(), |c| c.0);
        self.text[..byte].chars().count() + 1
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            line: self.line,
            col: self.col(),
            msg: msg.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.chars.get(self.pos).is_some_and(|c| c.1.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).map(|c| c.1)
    }

    fn eat(&mut self, ch: char) -> bool {
        if self.peek() == Some(ch) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Option<(usize, String)> {
        self.skip_ws();
        let col = self.col();
        let start = self.pos;
        while self
            .chars
            .get(self.pos)
            .is_some_and(|c| c.1.is_alphanumeric() || c.1 == '_')
        {
            self.pos += 1;
        }
        (self.pos > start).then(|| (col, self.chars[start..self.pos].iter().map(|c| c.1).collect()))
    }

    fn integer(&mut self) -> Result<i64, ParseError> {
        self.skip_ws();
        let start = self.pos;
        if matches!(self.chars.get(self.pos).map(|c| c.1), Some('-' | '+')) {
            self.pos += 1;
        }
        while self.chars.get(self.pos).is_some_and(|c| c.1.is_ascii_digit()) {
            self.pos += 1;
        }
        let s: String = self.chars[start..self.pos].iter().map(|c| c.1).collect();
        match s.parse() {
            Ok(v) => Ok(v),
            Err(_) => {
                self.pos = start;
                self.err("expected an integer exponent")
            }
        }
    }

    fn word(&mut self, known: Option<&[String]>) -> Result<Word, ParseError> {
        let mut w = self.factor(known)?;
        while self.eat('*') {
            w = w.mul(&self.factor(known)?);
        }
        Ok(w)
    }

    fn factor(&mut self, known: Option<&[String]>) -> Result<Word, ParseError> {
        let base = if self.eat('(') {
            let inner = self.word(known)?;
            if !self.eat(')') {
                return self.err("expected `)`");
            }
            inner
        } else if let Some((col, name)) = self.ident() {
            if name == "1" {
                Word::identity()
            } else if name.starts_with(|c: char| c.is_ascii_digit()) {
                return Err(ParseError::Syntax {
                    line: self.line,
                    col,
                    msg: format!("`{name}` is not a generator name"),
                });
            } else {
                if let Some(gens) = known {
                    if !gens.contains(&name) {
                        return Err(ParseError::UnknownGenerator {
                            line: self.line,
                            col,
                            name,
                        });
                    }
                }
                Word::letter(&name, 1)
            }
        } else {
            return self.err("expected a generator, `1` or `(`");
        };
        if self.eat('^') {
            let k = self.integer()?;
            Ok(base.pow(k))
        } else {
            Ok(base)
        }
    }

    fn finish(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            None => Ok(()),
            Some(c) => self.err(format!("unexpected `{c}`")),
        }
    }
}

/// Parses a single word; any identifier is accepted as a generator.
pub fn parse_word(text: &str) -> Result<Word, ParseError> {
    let mut lx = Lexer::new(text, 1);
    let w = lx.word(None)?;
    lx.finish()?;
    Ok(w)
}

/// Parses a word, rejecting generators outside `generators`.
pub fn parse_word_in(text: &str, generators: &[String]) -> Result<Word, ParseError> {
    let mut lx = Lexer::new(text, 1);
    let w = lx.word(Some(generators))?;
    lx.finish()?;
    Ok(w)
}

pub fn parse_presentation(text: &str) -> Result<GroupPresentation, ParseError> {
    let mut generators: Option<Vec<String>> = None;
    let mut relators = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        if let Some(rest) = content.trim_start().strip_prefix("generators:") {
            if generators.is_some() {
                return Err(ParseError::Syntax {
                    line,
                    col: 1,
                    msg: "generators declared twice".into(),
                });
            }
            let offset = content.len() - rest.len();
            let mut lx = Lexer::new(content, line);
            lx.pos = content[..offset].chars().count();
            let mut gens = Vec::new();
            while lx.peek().is_some() {
                match lx.ident() {
                    Some((col, name)) if !name.starts_with(|c: char| c.is_ascii_digit()) => {
                        if gens.contains(&name) {
                            return Err(ParseError::Syntax {
                                line,
                                col,
                                msg: format!("duplicate generator `{name}`"),
                            });
                        }
                        gens.push(name);
                    }
                    _ => return lx.err("expected a generator name"),
                }
                lx.eat(',');
            }
            generators = Some(gens);
            continue;
        }
        let Some(gens) = generators.as_deref() else {
            return Err(ParseError::Syntax {
                line,
                col: 1,
                msg: "relator before the `generators:` line".into(),
            });
        };
        let mut lx = Lexer::new(content, line);
        let mut chain = Vec::new();
        loop {
            let start = lx.pos;
            let w = lx.word(Some(gens))?;
            let src: String = lx.chars[start..lx.pos].iter().map(|c| c.1).collect();
            chain.push((w, src.trim().to_string()));
            if !lx.eat('=') {
                break;
            }
        }
        lx.finish()?;
        if chain.len() == 1 {
            let (w, src) = chain.pop().expect("one word");
            relators.push(Relator {
                word: w,
                line,
                label: src,
            });
        }
        for pair in chain.windows(2) {
            relators.push(Relator {
                word: pair[0].0.mul(&pair[1].0.inverse()),
                line,
                label: format!("{} = {}", pair[0].1, pair[1].1),
            });
        }
    }
    Ok(GroupPresentation {
        generators: generators.ok_or(ParseError::Syntax {
            line: 1,
            col: 1,
            msg: "missing `generators:` line".into(),
        })?,
        relators,
    })
}
