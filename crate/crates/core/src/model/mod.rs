//! Sequential coding distributions over sub-action symbols.
//!
//! Every model exposes a conditional law `ρ(y | s, prefix)` over the whole
//! alphabet. The provided methods of [`ActionModel`] enforce the termination
//! rule: once a prefix without the terminal reaches length `k - 1`, the
//! terminal is the only continuation. Every action therefore has at most `k`
//! symbols, and the terminal is the last one.

mod categorical;
mod file;
mod masked;
mod mixture;
mod ngram;

pub(crate) use categorical::check_action;
pub use categorical::{CategoricalActionModel, UniformActionModel};
pub use file::{load_model, save_model, AnyModel, MODEL_FORMAT, MODEL_FORMAT_VERSION};
pub use masked::LegalityMasked;
pub use mixture::{mixture_log_loss_regret, MixtureActionModel, RegretRow};
pub use ngram::{fit_ngram, NGramActionModel};

use crate::alphabet::{Symbol, SymbolAlphabet};
use crate::error::{Error, Result};

/// Default lower bound on every non-forced conditional probability.
pub const DEFAULT_PROBABILITY_FLOOR: f64 = 1.0 / 65536.0;

/// Default additive smoothing constant (Krichevsky–Trofimov).
pub const DEFAULT_ALPHA: f64 = 0.5;

pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// External state identifier. Models and MDPs index states from zero.
pub type StateId = usize;

pub trait ActionModel: Send + Sync {
    fn alphabet(&self) -> &SymbolAlphabet;

    /// Conditional distribution over the alphabet given a validated prefix
    /// (no terminal, shorter than `k - 1`). Implementations must return a
    /// vector of alphabet length that sums to one.
    fn raw_distribution(&self, state: StateId, prefix: &[Symbol]) -> Result<Vec<f64>>;

    /// `ρ(· | s, prefix)` with the termination rule applied.
    fn distribution(&self, state: StateId, prefix: &[Symbol]) -> Result<Vec<f64>> {
        let alphabet = self.alphabet();
        check_prefix(alphabet, prefix)?;
        if prefix.len() + 1 == alphabet.max_action_length() {
            let mut forced = vec![0.0; alphabet.len()];
            forced[alphabet.terminal().index()] = 1.0;
            return Ok(forced);
        }
        self.raw_distribution(state, prefix)
    }

    fn conditional_probability(&self, state: StateId, prefix: &[Symbol], y: Symbol) -> Result<f64> {
        self.alphabet().check(y)?;
        Ok(self.distribution(state, prefix)?[y.index()])
    }

    /// Mass of all symbols strictly before `y` in alphabet order.
    fn conditional_cdf(&self, state: StateId, prefix: &[Symbol], y: Symbol) -> Result<f64> {
        self.alphabet().check(y)?;
        let dist = self.distribution(state, prefix)?;
        Ok(dist[..y.index()].iter().sum())
    }

    /// Chain-rule probability of `x`. After each terminal the prefix resets,
    /// so `x` may hold several consecutive actions. `ρ(ε) = 1`.
    fn sequence_probability(&self, state: StateId, x: &[Symbol]) -> Result<f64> {
        let terminal = self.alphabet().terminal();
        let mut p = 1.0;
        let mut start = 0;
        for (i, &y) in x.iter().enumerate() {
            p *= self.conditional_probability(state, &x[start..i], y)?;
            if y == terminal {
                start = i + 1;
            }
        }
        Ok(p)
    }
}

impl<M: ActionModel + ?Sized> ActionModel for &M {
    fn alphabet(&self) -> &SymbolAlphabet {
        (**self).alphabet()
    }
    fn raw_distribution(&self, state: StateId, prefix: &[Symbol]) -> Result<Vec<f64>> {
        (**self).raw_distribution(state, prefix)
    }
    fn distribution(&self, state: StateId, prefix: &[Symbol]) -> Result<Vec<f64>> {
        (**self).distribution(state, prefix)
    }
}

impl<M: ActionModel + ?Sized> ActionModel for Box<M> {
    fn alphabet(&self) -> &SymbolAlphabet {
        (**self).alphabet()
    }
    fn raw_distribution(&self, state: StateId, prefix: &[Symbol]) -> Result<Vec<f64>> {
        (**self).raw_distribution(state, prefix)
    }
    fn distribution(&self, state: StateId, prefix: &[Symbol]) -> Result<Vec<f64>> {
        (**self).distribution(state, prefix)
    }
}

impl<M: ActionModel + ?Sized> ActionModel for std::sync::Arc<M> {
    fn alphabet(&self) -> &SymbolAlphabet {
        (**self).alphabet()
    }
    fn raw_distribution(&self, state: StateId, prefix: &[Symbol]) -> Result<Vec<f64>> {
        (**self).raw_distribution(state, prefix)
    }
    fn distribution(&self, state: StateId, prefix: &[Symbol]) -> Result<Vec<f64>> {
        (**self).distribution(state, prefix)
    }
}

pub(crate) fn check_prefix(alphabet: &SymbolAlphabet, prefix: &[Symbol]) -> Result<()> {
    for &s in prefix {
        alphabet.check(s)?;
        if alphabet.is_terminal(s) {
            return Err(Error::Precondition("prefix contains the terminal symbol".into()));
        }
    }
    if prefix.len() >= alphabet.max_action_length() {
        return Err(Error::Precondition(format!(
            "prefix length {} is not below the max action length {}",
            prefix.len(),
            alphabet.max_action_length()
        )));
    }
    Ok(())
}

/// Raises every entry to at least `floor`, keeping the vector normalized.
/// Entries already at the floor stay fixed while the rest are rescaled.
pub(crate) fn apply_floor(probs: &mut [f64], floor: f64) {
    if floor <= 0.0 {
        return;
    }
    debug_assert!(floor * probs.len() as f64 <= 1.0);
    let mut pinned = vec![false; probs.len()];
    loop {
        let mut changed = false;
        for (p, pin) in probs.iter_mut().zip(pinned.iter_mut()) {
            if !*pin && *p < floor {
                *p = floor;
                *pin = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let pinned_mass: f64 = floor * pinned.iter().filter(|&&x| x).count() as f64;
        let free_mass: f64 = probs.iter().zip(&pinned).filter(|(_, &pin)| !pin).map(|(p, _)| p).sum();
        if free_mass <= 0.0 {
            break;
        }
        let scale = (1.0 - pinned_mass) / free_mass;
        for (p, &pin) in probs.iter_mut().zip(&pinned) {
            if !pin {
                *p *= scale;
            }
        }
    }
}

/// Every complete action (ending at its first terminal) with positive
/// probability in `state`, in depth-first alphabet order, with its probability.
pub fn enumerate_actions<M: ActionModel + ?Sized>(model: &M, state: StateId) -> Result<Vec<(Vec<Symbol>, f64)>> {
    let mut out = Vec::new();
    let mut prefix = Vec::new();
    enumerate_rec(model, state, &mut prefix, 1.0, &mut out)?;
    Ok(out)
}

fn enumerate_rec<M: ActionModel + ?Sized>(
    model: &M,
    state: StateId,
    prefix: &mut Vec<Symbol>,
    mass: f64,
    out: &mut Vec<(Vec<Symbol>, f64)>,
) -> Result<()> {
    let dist = model.distribution(state, prefix)?;
    let terminal = model.alphabet().terminal();
    for (i, &p) in dist.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let y = Symbol(i as u16);
        prefix.push(y);
        if y == terminal {
            out.push((prefix.clone(), mass * p));
        } else {
            enumerate_rec(model, state, prefix, mass * p, out)?;
        }
        prefix.pop();
    }
    Ok(())
}
