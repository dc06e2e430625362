use serde::{Deserialize, Serialize};

use super::{ActionModel, StateId};
use crate::alphabet::{Symbol, SymbolAlphabet};
use crate::error::{Error, Result};

/// Explicit per-state distribution over complete actions. Conditionals are
/// ratios of the total weight of actions extending `prefix·y` to those
/// extending `prefix`.
///
/// A table with a single row is shared by every state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalActionModel {
    alphabet: SymbolAlphabet,
    rows: Vec<Vec<(Vec<Symbol>, f64)>>,
}

impl CategoricalActionModel {
    pub fn new(alphabet: SymbolAlphabet, rows: Vec<Vec<(Vec<Symbol>, f64)>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Precondition("categorical model needs at least one state row".into()));
        }
        for (s, row) in rows.iter().enumerate() {
            if row.is_empty() {
                return Err(Error::Precondition(format!("state {s} has no actions")));
            }
            let mut total = 0.0;
            for (i, (action, w)) in row.iter().enumerate() {
                check_action(&alphabet, action)?;
                if !(w.is_finite() && *w > 0.0) {
                    return Err(Error::Precondition(format!("state {s}: weight {w} must be positive")));
                }
                if row[..i].iter().any(|(other, _)| other == action) {
                    return Err(Error::Precondition(format!(
                        "state {s}: duplicate action `{}`",
                        alphabet.format(action)
                    )));
                }
                total += w;
            }
            if total <= 0.0 {
                return Err(Error::Precondition(format!("state {s} has zero total weight")));
            }
        }
        Ok(Self { alphabet, rows })
    }

    pub fn row(&self, state: StateId) -> Result<&[(Vec<Symbol>, f64)]> {
        if self.rows.len() == 1 {
            return Ok(&self.rows[0]);
        }
        self.rows
            .get(state)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Precondition(format!("state {state} outside the model's table")))
    }

    pub fn rows(&self) -> &[Vec<(Vec<Symbol>, f64)>] {
        &self.rows
    }
}

pub(crate) fn check_action(alphabet: &SymbolAlphabet, action: &[Symbol]) -> Result<()> {
    for &s in action {
        alphabet.check(s)?;
    }
    let terminal = alphabet.terminal();
    let pos = action.iter().position(|&s| s == terminal);
    if pos != Some(action.len().wrapping_sub(1)) {
        return Err(Error::Precondition(format!(
            "action `{}` must contain exactly one terminal, at its end",
            alphabet.format(action)
        )));
    }
    if action.len() > alphabet.max_action_length() {
        return Err(Error::Precondition(format!(
            "action `{}` is longer than k = {}",
            alphabet.format(action),
            alphabet.max_action_length()
        )));
    }
    Ok(())
}

fn prefix_conditionals(alphabet: &SymbolAlphabet, row: &[(Vec<Symbol>, f64)], prefix: &[Symbol]) -> Result<Vec<f64>> {
    let mut next = vec![0.0; alphabet.len()];
    let mut total = 0.0;
    for (action, w) in row {
        if action.len() > prefix.len() && action.starts_with(prefix) {
            next[action[prefix.len()].index()] += w;
            total += w;
        }
    }
    if total <= 0.0 {
        return Err(Error::Precondition(format!(
            "prefix `{}` has zero probability",
            alphabet.format(prefix)
        )));
    }
    for p in &mut next {
        *p /= total;
    }
    Ok(next)
}

impl ActionModel for CategoricalActionModel {
    fn alphabet(&self) -> &SymbolAlphabet {
        &self.alphabet
    }

    fn raw_distribution(&self, state: StateId, prefix: &[Symbol]) -> Result<Vec<f64>> {
        prefix_conditionals(&self.alphabet, self.row(state)?, prefix)
    }
}

/// Uniform mass over the legal external actions of each state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformActionModel {
    alphabet: SymbolAlphabet,
    action_sets: Vec<Vec<Vec<Symbol>>>,
}

impl UniformActionModel {
    /// `action_sets[s]` lists the legal actions of state `s`, each ending in
    /// the terminal. A single set is shared by every state.
    pub fn new(alphabet: SymbolAlphabet, action_sets: Vec<Vec<Vec<Symbol>>>) -> Result<Self> {
        // Reuse the categorical validation.
        let rows = action_sets
            .iter()
            .map(|set| set.iter().map(|a| (a.clone(), 1.0)).collect())
            .collect();
        CategoricalActionModel::new(alphabet.clone(), rows)?;
        Ok(Self { alphabet, action_sets })
    }

    pub fn action_set(&self, state: StateId) -> Result<&[Vec<Symbol>]> {
        if self.action_sets.len() == 1 {
            return Ok(&self.action_sets[0]);
        }
        self.action_sets
            .get(state)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Precondition(format!("state {state} outside the model's table")))
    }

    pub fn action_sets(&self) -> &[Vec<Vec<Symbol>>] {
        &self.action_sets
    }
}

impl ActionModel for UniformActionModel {
    fn alphabet(&self) -> &SymbolAlphabet {
        &self.alphabet
    }

    fn raw_distribution(&self, state: StateId, prefix: &[Symbol]) -> Result<Vec<f64>> {
        let row: Vec<(Vec<Symbol>, f64)> = self.action_set(state)?.iter().map(|a| (a.clone(), 1.0)).collect();
        prefix_conditionals(&self.alphabet, &row, prefix)
    }
}
