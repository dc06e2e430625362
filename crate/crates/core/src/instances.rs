//! Seeded random instances for sweeps and verification runs.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::alphabet::{Symbol, SymbolAlphabet};
use crate::error::Result;
use crate::mdp::{ExternalPolicy, Mdp, Outcome};
use crate::model::{fit_ngram, ActionModel, CategoricalActionModel, NGramActionModel, StateId, UniformActionModel};

/// Sizes of a random instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceSizes {
    pub states: usize,
    pub max_actions: usize,
    /// Non-terminal symbols.
    pub symbols: usize,
    pub max_action_length: usize,
}

impl Default for InstanceSizes {
    fn default() -> Self {
        Self {
            states: 4,
            max_actions: 5,
            symbols: 3,
            max_action_length: 3,
        }
    }
}

/// Alphabet `s0 .. s{n-1}, <T>`.
pub fn alphabet(symbols: usize, max_action_length: usize) -> SymbolAlphabet {
    let names: Vec<String> = (0..symbols).map(|i| format!("s{i}")).collect();
    SymbolAlphabet::with_terminal(&names, max_action_length).expect("generated names are valid")
}

/// A random action: up to `k - 1` non-terminal symbols then the terminal.
pub fn random_action<R: Rng>(rng: &mut R, alphabet: &SymbolAlphabet) -> Vec<Symbol> {
    let k = alphabet.max_action_length();
    let non_terminal: Vec<Symbol> = alphabet.symbols().filter(|&s| !alphabet.is_terminal(s)).collect();
    let len = if non_terminal.is_empty() { 0 } else { rng.gen_range(0..k) };
    let mut a: Vec<Symbol> = (0..len).map(|_| *non_terminal.choose(rng).expect("non-empty")).collect();
    a.push(alphabet.terminal());
    a
}

/// `count` distinct random actions (fewer if the alphabet cannot supply them).
pub fn random_action_set<R: Rng>(rng: &mut R, alphabet: &SymbolAlphabet, count: usize) -> Vec<Vec<Symbol>> {
    let mut out: Vec<Vec<Symbol>> = Vec::new();
    for _ in 0..count * 20 {
        if out.len() == count {
            break;
        }
        let a = random_action(rng, alphabet);
        if !out.contains(&a) {
            out.push(a);
        }
    }
    out
}

/// N-gram model fitted to a random corpus of random actions.
pub fn random_ngram<R: Rng>(rng: &mut R, alphabet: &SymbolAlphabet) -> Result<NGramActionModel> {
    let order = rng.gen_range(0..=2);
    let pool_size = rng.gen_range(1..=4);
    let pool = random_action_set(rng, alphabet, pool_size);
    let lines = rng.gen_range(0..12);
    let corpus: Vec<Vec<Symbol>> = (0..lines)
        .map(|_| {
            let n = rng.gen_range(1..6);
            (0..n).flat_map(|_| pool.choose(rng).expect("non-empty").clone()).collect()
        })
        .collect();
    let alpha = [0.5, 0.1, 1.0][rng.gen_range(0..3)];
    fit_ngram(alphabet, &corpus, order, alpha)
}

/// Random categorical model with one row per state.
pub fn random_categorical<R: Rng>(
    rng: &mut R,
    alphabet: &SymbolAlphabet,
    states: usize,
    max_actions: usize,
) -> Result<CategoricalActionModel> {
    let rows = (0..states)
        .map(|_| {
            let n = rng.gen_range(1..=max_actions);
            random_action_set(rng, alphabet, n)
                .into_iter()
                .map(|a| (a, rng.gen_range(0.05..1.0)))
                .collect()
        })
        .collect();
    CategoricalActionModel::new(alphabet.clone(), rows)
}

/// Random MDP whose action sets come from `action_sets`, with two or three
/// outcomes per state-action pair and rewards on a small grid in `[-1, 1]`.
pub fn random_mdp<R: Rng>(rng: &mut R, alphabet: &SymbolAlphabet, action_sets: Vec<Vec<Vec<Symbol>>>) -> Result<Mdp> {
    let states = action_sets.len();
    let kernel = action_sets
        .iter()
        .map(|actions| {
            actions
                .iter()
                .map(|_| {
                    let n = rng.gen_range(1..=3);
                    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
                    let total: f64 = raw.iter().sum();
                    raw.into_iter()
                        .map(|w| Outcome {
                            next: rng.gen_range(0..states),
                            reward: rng.gen_range(-4..=4) as f64 / 4.0,
                            probability: w / total,
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Mdp::new(alphabet.clone(), action_sets, kernel, 0)
}

/// Random MDP together with a uniform action model over its legal actions.
pub fn random_mdp_with_uniform_model<R: Rng>(rng: &mut R, sizes: InstanceSizes) -> Result<(Mdp, UniformActionModel)> {
    let alphabet = alphabet(sizes.symbols, sizes.max_action_length);
    let states = rng.gen_range(1..=sizes.states);
    let action_sets: Vec<Vec<Vec<Symbol>>> = (0..states)
        .map(|_| {
            let n = rng.gen_range(1..=sizes.max_actions);
            random_action_set(rng, &alphabet, n)
        })
        .collect();
    let mdp = random_mdp(rng, &alphabet, action_sets.clone())?;
    let model = UniformActionModel::new(alphabet, action_sets)?;
    Ok((mdp, model))
}

/// Random MDP with a random categorical model over its legal actions.
pub fn random_mdp_with_categorical_model<R: Rng>(rng: &mut R, sizes: InstanceSizes) -> Result<(Mdp, CategoricalActionModel)> {
    let (mdp, _) = random_mdp_with_uniform_model(rng, sizes)?;
    let rows = mdp
        .action_sets()
        .iter()
        .map(|set| set.iter().map(|a| (a.clone(), rng.gen_range(0.05..1.0))).collect())
        .collect();
    let model = CategoricalActionModel::new(mdp.alphabet().clone(), rows)?;
    Ok((mdp, model))
}

/// Random stationary policy over the legal actions of `mdp`.
pub fn random_policy<R: Rng>(rng: &mut R, mdp: &Mdp) -> ExternalPolicy {
    let rows = mdp
        .action_sets()
        .iter()
        .map(|set| {
            let raw: Vec<f64> = set.iter().map(|_| rng.gen_range(0.0..1.0) + 1e-3).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|w| w / total).collect()
        })
        .collect();
    ExternalPolicy::new(mdp, rows).expect("normalized by construction")
}

/// Draws `actions` consecutive actions from `ρ(· | state)` symbol by symbol.
pub fn sample_string<R: Rng, M: ActionModel + ?Sized>(rng: &mut R, model: &M, state: StateId, actions: usize) -> Result<Vec<Symbol>> {
    let terminal = model.alphabet().terminal();
    let mut out = Vec::new();
    let (mut start, mut done) = (0, 0);
    while done < actions {
        let dist = model.distribution(state, &out[start..])?;
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut pick = dist.iter().rposition(|&p| p > 0.0).expect("normalized");
        for (i, &p) in dist.iter().enumerate() {
            acc += p;
            if p > 0.0 && u < acc {
                pick = i;
                break;
            }
        }
        let y = Symbol(pick as u16);
        out.push(y);
        if y == terminal {
            start = out.len();
            done += 1;
        }
    }
    Ok(out)
}
