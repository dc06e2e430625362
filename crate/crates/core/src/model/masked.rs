use super::categorical::check_action;
use super::{ActionModel, StateId};
use crate::alphabet::{Symbol, SymbolAlphabet};
use crate::error::{Error, Result};

/// Restricts a model to the legal actions of each state and renormalizes.
///
/// `ρ'(a | s) = ρ(a | s) / Σ_{a' ∈ A(s)} ρ(a' | s)` for legal `a`, zero
/// otherwise; conditionals follow from the chain rule.
#[derive(Debug, Clone)]
pub struct LegalityMasked<M> {
    inner: M,
    legal: Vec<Vec<Vec<Symbol>>>,
}

impl<M: ActionModel> LegalityMasked<M> {
    /// `legal[s]` lists the legal actions of state `s`; a single list is
    /// shared by every state.
    pub fn new(inner: M, legal: Vec<Vec<Vec<Symbol>>>) -> Result<Self> {
        if legal.is_empty() {
            return Err(Error::Precondition("legality mask needs at least one state".into()));
        }
        for (s, actions) in legal.iter().enumerate() {
            if actions.is_empty() {
                return Err(Error::Precondition(format!("state {s} has no legal actions")));
            }
            for a in actions {
                check_action(inner.alphabet(), a)?;
            }
        }
        Ok(Self { inner, legal })
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }

    pub fn inner_mut(&mut self) -> &mut M {
        &mut self.inner
    }

    pub fn into_inner(self) -> M {
        self.inner
    }

    fn legal_actions(&self, state: StateId) -> Result<&[Vec<Symbol>]> {
        if self.legal.len() == 1 {
            return Ok(&self.legal[0]);
        }
        self.legal
            .get(state)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Precondition(format!("state {state} outside the legality mask")))
    }
}

impl<M: ActionModel> ActionModel for LegalityMasked<M> {
    fn alphabet(&self) -> &SymbolAlphabet {
        self.inner.alphabet()
    }

    fn raw_distribution(&self, state: StateId, prefix: &[Symbol]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.alphabet().len()];
        let mut total = 0.0;
        for a in self.legal_actions(state)? {
            if a.len() > prefix.len() && a.starts_with(prefix) {
                let p = self.inner.sequence_probability(state, a)?;
                out[a[prefix.len()].index()] += p;
                total += p;
            }
        }
        if total <= 0.0 {
            return Err(Error::Precondition(format!(
                "prefix `{}` extends no legal action with positive probability",
                self.alphabet().format(prefix)
            )));
        }
        out.iter_mut().for_each(|p| *p /= total);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{enumerate_actions, fit_ngram};

    #[test]
    fn masked_ngram_only_emits_legal_actions() {
        let alphabet = SymbolAlphabet::with_terminal(&["L", "R", "x"], 3).unwrap();
        let corpus = alphabet.parse_corpus("L <T> L <T> R <T>\n").unwrap();
        let m = fit_ngram(&alphabet, &corpus, 0, 0.5).unwrap();
        let legal = vec![vec![alphabet.parse("L <T>").unwrap(), alphabet.parse("R <T>").unwrap()]];
        let masked = LegalityMasked::new(&m, legal.clone()).unwrap();
        let acts = enumerate_actions(&masked, 2).unwrap();
        assert_eq!(acts.len(), 2);
        let total: f64 = acts.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let ratio = acts[0].1 / acts[1].1;
        let raw = m.sequence_probability(0, &legal[0][0]).unwrap() / m.sequence_probability(0, &legal[0][1]).unwrap();
        assert!((ratio - raw).abs() < 1e-12);
    }
}
