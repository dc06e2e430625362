//! Sub-action alphabets and the newline-delimited corpus format.
//!
//! Symbols are identified by their position in the alphabet. That position
//! fixes the order of coding intervals, so alphabets are never re-sorted.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Token used for the termination symbol in corpora and on the command line.
pub const TERMINAL_TOKEN: &str = "<T>";

/// Index of a symbol within its [`SymbolAlphabet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Symbol(pub u16);

impl Symbol {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Ordered, finite set of sub-action symbols with a privileged terminator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "AlphabetRepr", into = "AlphabetRepr")]
pub struct SymbolAlphabet {
    names: Vec<String>,
    terminal: Symbol,
    max_action_length: usize,
    lookup: HashMap<String, Symbol>,
}

#[derive(Serialize, Deserialize)]
struct AlphabetRepr {
    symbols: Vec<String>,
    terminal_index: usize,
    max_action_length: usize,
}

impl TryFrom<AlphabetRepr> for SymbolAlphabet {
    type Error = Error;

    fn try_from(r: AlphabetRepr) -> Result<Self> {
        SymbolAlphabet::new(r.symbols, r.terminal_index, r.max_action_length)
    }
}

impl From<SymbolAlphabet> for AlphabetRepr {
    fn from(a: SymbolAlphabet) -> Self {
        AlphabetRepr {
            terminal_index: a.terminal.index(),
            max_action_length: a.max_action_length,
            symbols: a.names,
        }
    }
}

impl SymbolAlphabet {
    pub fn new(symbols: Vec<String>, terminal_index: usize, max_action_length: usize) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::Alphabet("alphabet is empty".into()));
        }
        if symbols.len() > u16::MAX as usize {
            return Err(Error::Alphabet("alphabet too large".into()));
        }
        if terminal_index >= symbols.len() {
            return Err(Error::Alphabet(format!(
                "terminal index {terminal_index} out of range for {} symbols",
                symbols.len()
            )));
        }
        if max_action_length == 0 {
            return Err(Error::Alphabet("max action length must be at least 1".into()));
        }
        let mut lookup = HashMap::with_capacity(symbols.len());
        for (i, name) in symbols.iter().enumerate() {
            if name.is_empty() || name.chars().any(char::is_whitespace) {
                return Err(Error::Alphabet(format!("invalid symbol name {name:?}")));
            }
            if lookup.insert(name.clone(), Symbol(i as u16)).is_some() {
                return Err(Error::Alphabet(format!("duplicate symbol {name:?}")));
            }
        }
        // Only the terminal may be spelled `<T>`.
        if let Some(&sym) = lookup.get(TERMINAL_TOKEN) {
            if sym.index() != terminal_index {
                return Err(Error::Alphabet(format!("{TERMINAL_TOKEN} used for a non-terminal symbol")));
            }
        }
        Ok(Self {
            names: symbols,
            terminal: Symbol(terminal_index as u16),
            max_action_length,
            lookup,
        })
    }

    /// Builds an alphabet from the non-terminal symbols, appending `<T>` last.
    pub fn with_terminal<S: AsRef<str>>(symbols: &[S], max_action_length: usize) -> Result<Self> {
        let mut names: Vec<String> = symbols.iter().map(|s| s.as_ref().to_string()).collect();
        let terminal_index = names.len();
        names.push(TERMINAL_TOKEN.to_string());
        Self::new(names, terminal_index, max_action_length)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn terminal(&self) -> Symbol {
        self.terminal
    }

    pub fn is_terminal(&self, s: Symbol) -> bool {
        s == self.terminal
    }

    pub fn max_action_length(&self) -> usize {
        self.max_action_length
    }

    pub fn symbols(&self) -> impl Iterator<Item = Symbol> + '_ {
        (0..self.names.len()).map(|i| Symbol(i as u16))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, s: Symbol) -> &str {
        &self.names[s.index()]
    }

    pub fn symbol(&self, name: &str) -> Option<Symbol> {
        self.lookup.get(name).copied()
    }

    pub fn contains(&self, s: Symbol) -> bool {
        s.index() < self.names.len()
    }

    pub fn check(&self, s: Symbol) -> Result<()> {
        if self.contains(s) {
            Ok(())
        } else {
            Err(Error::Alphabet(format!(
                "symbol index {} outside alphabet of size {}",
                s.0,
                self.len()
            )))
        }
    }

    /// Parses whitespace-separated tokens. `line` is reported in errors.
    pub fn parse_line(&self, text: &str, line: usize) -> Result<Vec<Symbol>> {
        let mut out = Vec::new();
        let mut column = 1;
        let mut rest = text;
        while !rest.is_empty() {
            let trimmed = rest.trim_start();
            column += rest[..rest.len() - trimmed.len()].chars().count();
            if trimmed.is_empty() {
                break;
            }
            let end = trimmed.find(char::is_whitespace).unwrap_or(trimmed.len());
            let token = &trimmed[..end];
            match self.symbol(token) {
                Some(s) => out.push(s),
                None => {
                    return Err(Error::Ingestion {
                        token: token.to_string(),
                        line,
                        column,
                    })
                }
            }
            column += token.chars().count();
            rest = &trimmed[end..];
        }
        Ok(out)
    }

    /// Parses a single symbol string such as `"x y <T>"`.
    pub fn parse(&self, text: &str) -> Result<Vec<Symbol>> {
        self.parse_line(text, 1)
    }

    /// Parses a corpus: one symbol string per line, blank lines skipped.
    pub fn parse_corpus(&self, text: &str) -> Result<Vec<Vec<Symbol>>> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| self.parse_line(l, i + 1))
            .collect()
    }

    pub fn format(&self, s: &[Symbol]) -> String {
        let names: Vec<&str> = s.iter().map(|&x| self.name(x)).collect();
        names.join(" ")
    }

    pub fn format_corpus(&self, corpus: &[Vec<Symbol>]) -> String {
        let mut out = String::new();
        for line in corpus {
            out.push_str(&self.format(line));
            out.push('\n');
        }
        out
    }

    /// Alphabet containing every symbol of `self` followed by the symbols of
    /// `other` not already present. Both must use `<T>` as the terminal.
    pub fn union(&self, other: &SymbolAlphabet, max_action_length: usize) -> Result<Self> {
        if self.name(self.terminal) != TERMINAL_TOKEN || other.name(other.terminal) != TERMINAL_TOKEN {
            return Err(Error::Alphabet(format!(
                "union requires {TERMINAL_TOKEN} as the terminal in both alphabets"
            )));
        }
        let mut names: Vec<String> = self.names.iter().filter(|n| *n != TERMINAL_TOKEN).cloned().collect();
        for n in &other.names {
            if n != TERMINAL_TOKEN && !names.contains(n) {
                names.push(n.clone());
            }
        }
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        Self::with_terminal(&refs, max_action_length)
    }
}

impl fmt::Display for SymbolAlphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}} k={}", self.names.join(", "), self.max_action_length)
    }
}
