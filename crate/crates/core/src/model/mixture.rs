use serde::{Deserialize, Serialize};

use super::{ActionModel, AnyModel, StateId};
use crate::alphabet::{Symbol, SymbolAlphabet};
use crate::error::{Error, Result};

/// Bayesian mixture of task-specific action models.
///
/// Component weights are the posterior given every completed action (and any
/// extra evidence passed to [`observe`](Self::observe)). Conditionals
/// additionally condition on the current action prefix, so the mixture's
/// string probabilities follow `ξ(x) = Σ wᵢ ρᵢ(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureActionModel {
    components: Vec<AnyModel>,
    log_weights: Vec<f64>,
    #[serde(default)]
    history: Vec<Symbol>,
}

impl MixtureActionModel {
    /// Uniform prior over `components`.
    pub fn new(components: Vec<AnyModel>) -> Result<Self> {
        if components.len() < 2 {
            return Err(Error::Precondition("a mixture needs at least two components".into()));
        }
        let alphabet = components[0].alphabet();
        if components.iter().any(|c| c.alphabet() != alphabet) {
            return Err(Error::Alphabet("mixture components disagree on the alphabet".into()));
        }
        let k = components.len() as f64;
        Ok(Self {
            log_weights: vec![-k.ln(); components.len()],
            components,
            history: Vec::new(),
        })
    }

    pub fn components(&self) -> &[AnyModel] {
        &self.components
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|lw| lw.exp()).collect()
    }

    pub fn history(&self) -> &[Symbol] {
        &self.history
    }

    pub fn reset(&mut self) {
        let k = self.components.len() as f64;
        self.log_weights.iter_mut().for_each(|w| *w = -k.ln());
        self.history.clear();
    }

    /// Posterior update on a completed action decoded in `state`.
    pub fn update(&mut self, state: StateId, observed: &[Symbol]) -> Result<()> {
        let ll = self
            .components
            .iter()
            .map(|c| Ok(c.sequence_probability(state, observed)?.ln()))
            .collect::<Result<Vec<_>>>()?;
        self.observe(&ll)?;
        self.history.extend_from_slice(observed);
        Ok(())
    }

    /// Posterior update from per-component log-likelihoods of any evidence,
    /// such as an environment observation under each task's model.
    pub fn observe(&mut self, log_likelihoods: &[f64]) -> Result<()> {
        if log_likelihoods.len() != self.components.len() {
            return Err(Error::Precondition("one log-likelihood per component required".into()));
        }
        let updated: Vec<f64> = self.log_weights.iter().zip(log_likelihoods).map(|(w, l)| w + l).collect();
        let norm = log_sum_exp(&updated);
        if !norm.is_finite() {
            return Err(Error::DegeneratePosterior);
        }
        self.log_weights = updated.into_iter().map(|w| w - norm).collect();
        Ok(())
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl ActionModel for MixtureActionModel {
    fn alphabet(&self) -> &SymbolAlphabet {
        self.components[0].alphabet()
    }

    fn raw_distribution(&self, state: StateId, prefix: &[Symbol]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.alphabet().len()];
        let mut total = 0.0;
        for (c, lw) in self.components.iter().zip(&self.log_weights) {
            let w = lw.exp() * c.sequence_probability(state, prefix)?;
            if w == 0.0 {
                continue;
            }
            let d = c.distribution(state, prefix)?;
            for (o, p) in out.iter_mut().zip(d) {
                *o += w * p;
            }
            total += w;
        }
        if total <= 0.0 {
            return Err(Error::Precondition("prefix has zero mixture probability".into()));
        }
        out.iter_mut().for_each(|p| *p /= total);
        Ok(out)
    }
}

/// Log-loss of one string under the uniform mixture and the best component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretRow {
    /// `-log₂ ξ(x)` with uniform prior weights.
    pub mixture_bits: f64,
    /// `min_j -log₂ ρ_j(x)`.
    pub best_bits: f64,
    pub gap: f64,
}

/// Excess log-loss of the uniform mixture over the best component, per string.
pub fn mixture_log_loss_regret<M: ActionModel>(components: &[M], state: StateId, data: &[Vec<Symbol>]) -> Result<Vec<RegretRow>> {
    if components.len() < 2 {
        return Err(Error::Precondition("regret needs at least two components".into()));
    }
    let k = components.len() as f64;
    data.iter()
        .map(|x| {
            let probs = components
                .iter()
                .map(|c| c.sequence_probability(state, x))
                .collect::<Result<Vec<f64>>>()?;
            let xi: f64 = probs.iter().sum::<f64>() / k;
            let best = probs.iter().copied().fold(0.0, f64::max);
            let mixture_bits = -xi.log2();
            let best_bits = -best.log2();
            Ok(RegretRow {
                mixture_bits,
                best_bits,
                gap: mixture_bits - best_bits,
            })
        })
        .collect()
}
