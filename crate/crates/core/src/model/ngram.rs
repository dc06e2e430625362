use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{apply_floor, ActionModel, StateId, DEFAULT_PROBABILITY_FLOOR};
use crate::alphabet::{Symbol, SymbolAlphabet};
use crate::error::{Error, Result};

/// Additively smoothed n-gram model over the symbols of an action.
///
/// The context of a symbol is the `order` symbols before it within the same
/// action. Positions before the start of the action read as the terminal,
/// so a context never reaches into a previous action. The model ignores the
/// external state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NGramRepr", into = "NGramRepr")]
pub struct NGramActionModel {
    alphabet: SymbolAlphabet,
    order: usize,
    alpha: f64,
    floor: f64,
    counts: BTreeMap<Vec<Symbol>, Vec<u64>>,
}

#[derive(Serialize, Deserialize)]
struct NGramRepr {
    alphabet: SymbolAlphabet,
    order: usize,
    alpha: f64,
    floor: f64,
    counts: Vec<ContextCounts>,
}

#[derive(Serialize, Deserialize)]
struct ContextCounts {
    context: Vec<Symbol>,
    counts: Vec<u64>,
}

impl TryFrom<NGramRepr> for NGramActionModel {
    type Error = Error;

    fn try_from(r: NGramRepr) -> Result<Self> {
        let mut m = NGramActionModel::new(r.alphabet, r.order, r.alpha)?.with_floor(r.floor)?;
        for c in r.counts {
            if c.context.len() != m.order || c.counts.len() != m.alphabet.len() {
                return Err(Error::Format("n-gram count row has the wrong shape".into()));
            }
            for &s in &c.context {
                m.alphabet.check(s)?;
            }
            m.counts.insert(c.context, c.counts);
        }
        Ok(m)
    }
}

impl From<NGramActionModel> for NGramRepr {
    fn from(m: NGramActionModel) -> Self {
        NGramRepr {
            alphabet: m.alphabet,
            order: m.order,
            alpha: m.alpha,
            floor: m.floor,
            counts: m
                .counts
                .into_iter()
                .map(|(context, counts)| ContextCounts { context, counts })
                .collect(),
        }
    }
}

impl NGramActionModel {
    pub fn new(alphabet: SymbolAlphabet, order: usize, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::Precondition(format!("smoothing constant {alpha} must be positive")));
        }
        Ok(Self {
            alphabet,
            order,
            alpha,
            floor: DEFAULT_PROBABILITY_FLOOR,
            counts: BTreeMap::new(),
        })
    }

    pub fn with_floor(mut self, floor: f64) -> Result<Self> {
        if !(0.0..=1.0 / self.alphabet.len() as f64).contains(&floor) {
            return Err(Error::Precondition(format!("probability floor {floor} out of range")));
        }
        self.floor = floor;
        Ok(self)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn counts(&self, context: &[Symbol]) -> Option<&[u64]> {
        self.counts.get(context).map(Vec::as_slice)
    }

    pub fn count(&self, context: &[Symbol], y: Symbol) -> u64 {
        self.counts(context).map_or(0, |c| c[y.index()])
    }

    pub fn contexts(&self) -> impl Iterator<Item = (&Vec<Symbol>, &Vec<u64>)> {
        self.counts.iter()
    }

    fn context_of(&self, prefix: &[Symbol]) -> Vec<Symbol> {
        let terminal = self.alphabet.terminal();
        let mut ctx = vec![terminal; self.order.saturating_sub(prefix.len())];
        ctx.extend_from_slice(&prefix[prefix.len().saturating_sub(self.order)..]);
        ctx
    }

    /// Adds the symbol occurrences of one corpus line.
    pub fn observe_line(&mut self, line: &[Symbol]) -> Result<()> {
        let terminal = self.alphabet.terminal();
        let mut start = 0;
        for (i, &y) in line.iter().enumerate() {
            self.alphabet.check(y)?;
            let ctx = self.context_of(&line[start..i]);
            let n = self.alphabet.len();
            self.counts.entry(ctx).or_insert_with(|| vec![0; n])[y.index()] += 1;
            if y == terminal {
                start = i + 1;
            }
        }
        Ok(())
    }

    /// Smoothed conditional before the floor and termination rule.
    pub fn smoothed(&self, prefix: &[Symbol]) -> Vec<f64> {
        let n = self.alphabet.len();
        let ctx = self.context_of(prefix);
        let denom_alpha = self.alpha * n as f64;
        match self.counts.get(&ctx) {
            None => vec![1.0 / n as f64; n],
            Some(c) => {
                let total: u64 = c.iter().sum();
                let denom = total as f64 + denom_alpha;
                c.iter().map(|&k| (k as f64 + self.alpha) / denom).collect()
            }
        }
    }
}

/// Counts every symbol occurrence of `corpus` under the given order.
pub fn fit_ngram(alphabet: &SymbolAlphabet, corpus: &[Vec<Symbol>], order: usize, alpha: f64) -> Result<NGramActionModel> {
    let mut m = NGramActionModel::new(alphabet.clone(), order, alpha)?;
    for line in corpus {
        m.observe_line(line)?;
    }
    Ok(m)
}

impl ActionModel for NGramActionModel {
    fn alphabet(&self) -> &SymbolAlphabet {
        &self.alphabet
    }

    fn raw_distribution(&self, _state: StateId, prefix: &[Symbol]) -> Result<Vec<f64>> {
        let mut p = self.smoothed(prefix);
        apply_floor(&mut p, self.floor);
        Ok(p)
    }
}
