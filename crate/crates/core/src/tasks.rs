//! Two small tasks with unrelated action vocabularies over one alphabet.
//!
//! The gridline walks between four cells with `L` and `R`; the sequence task
//! asks for a state-dependent two-symbol word from `{xy, yx, xx}`. Each task
//! ships with a corpus of near-optimal play for fitting action models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alphabet::{Symbol, SymbolAlphabet};
use crate::error::Result;
use crate::mdp::{optimal_policy, Mdp, Outcome};

pub const TOY_SEED: u64 = 7;
/// Fraction of corpus decisions taken uniformly at random.
pub const CORPUS_EXPLORATION: f64 = 0.1;
pub const CORPUS_LINES: usize = 200;
pub const CORPUS_LINE_ACTIONS: usize = 6;
pub const CORPUS_HORIZON: usize = 4;

#[derive(Debug, Clone)]
pub struct ToyTasks {
    pub alphabet: SymbolAlphabet,
    pub gridline: Mdp,
    pub sequence: Mdp,
    /// One line per episode, actions concatenated.
    pub gridline_corpus: Vec<Vec<Symbol>>,
    pub sequence_corpus: Vec<Vec<Symbol>>,
}

impl ToyTasks {
    pub fn tasks(&self) -> [(&'static str, &Mdp, &[Vec<Symbol>]); 2] {
        [
            ("gridline", &self.gridline, &self.gridline_corpus),
            ("sequence", &self.sequence, &self.sequence_corpus),
        ]
    }
}

pub fn shared_alphabet() -> SymbolAlphabet {
    let grid = SymbolAlphabet::with_terminal(&["L", "R"], 2).expect("valid");
    let seq = SymbolAlphabet::with_terminal(&["x", "y"], 3).expect("valid");
    grid.union(&seq, 3).expect("disjoint")
}

/// Cells 0..=3. `R` moves right with probability 0.8 and otherwise stays;
/// `L` moves left. Entering cell 3 pays 1. From cell 3 every action returns
/// to cell 0.
pub fn gridline(alphabet: &SymbolAlphabet) -> Result<Mdp> {
    let left = alphabet.parse("L <T>")?;
    let right = alphabet.parse("R <T>")?;
    let o = |next, reward, probability| Outcome { next, reward, probability };
    let mut kernel = Vec::new();
    for s in 0..4usize {
        if s == 3 {
            kernel.push(vec![vec![o(0, 0.0, 1.0)], vec![o(0, 0.0, 1.0)]]);
            continue;
        }
        let l = vec![o(s.saturating_sub(1), 0.0, 1.0)];
        let r = vec![o(s + 1, if s + 1 == 3 { 1.0 } else { 0.0 }, 0.8), o(s, 0.0, 0.2)];
        kernel.push(vec![l, r]);
    }
    Mdp::new(alphabet.clone(), vec![vec![left, right]; 4], kernel, 0)
}

/// States 0..=2 want `xy`, `yx` and `xx` respectively. The wanted word pays
/// 1 and advances with probability 0.9; any other word pays 0 and stays.
pub fn sequence(alphabet: &SymbolAlphabet) -> Result<Mdp> {
    let words: Vec<Vec<Symbol>> = ["x y <T>", "y x <T>", "x x <T>"]
        .iter()
        .map(|w| alphabet.parse(w))
        .collect::<Result<_>>()?;
    let kernel = (0..3usize)
        .map(|s| {
            (0..3usize)
                .map(|a| {
                    if a == s {
                        vec![
                            Outcome {
                                next: (s + 1) % 3,
                                reward: 1.0,
                                probability: 0.9,
                            },
                            Outcome {
                                next: s,
                                reward: 1.0,
                                probability: 0.1,
                            },
                        ]
                    } else {
                        vec![Outcome {
                            next: s,
                            reward: 0.0,
                            probability: 1.0,
                        }]
                    }
                })
                .collect()
        })
        .collect();
    Mdp::new(alphabet.clone(), vec![words; 3], kernel, 0)
}

/// Episodes of ε-greedy play under the optimal policy, one line each.
pub fn near_optimal_corpus<R: Rng>(rng: &mut R, mdp: &Mdp, lines: usize, actions: usize) -> Result<Vec<Vec<Symbol>>> {
    let policy = optimal_policy(mdp, CORPUS_HORIZON)?;
    let mut corpus = Vec::with_capacity(lines);
    for _ in 0..lines {
        let mut s = mdp.initial_state();
        let mut line = Vec::new();
        for _ in 0..actions {
            let n = mdp.actions(s).len();
            let a = if rng.gen::<f64>() < CORPUS_EXPLORATION {
                rng.gen_range(0..n)
            } else {
                (0..n).find(|&a| policy.probability(s, a) == 1.0).expect("deterministic")
            };
            line.extend_from_slice(&mdp.actions(s)[a]);
            s = mdp.sample_outcome(s, a, rng.gen()).next;
        }
        corpus.push(line);
    }
    Ok(corpus)
}

pub fn build_toy_tasks() -> Result<ToyTasks> {
    build_toy_tasks_with_seed(TOY_SEED)
}

pub fn build_toy_tasks_with_seed(seed: u64) -> Result<ToyTasks> {
    let alphabet = shared_alphabet();
    let gridline = gridline(&alphabet)?;
    let sequence = sequence(&alphabet)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gridline_corpus = near_optimal_corpus(&mut rng, &gridline, CORPUS_LINES, CORPUS_LINE_ACTIONS)?;
    let sequence_corpus = near_optimal_corpus(&mut rng, &sequence, CORPUS_LINES, CORPUS_LINE_ACTIONS)?;
    Ok(ToyTasks {
        alphabet,
        gridline,
        sequence,
        gridline_corpus,
        sequence_corpus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_sets() {
        let t = build_toy_tasks().unwrap();
        assert_eq!(t.gridline.num_states(), 4);
        assert_eq!(t.sequence.num_states(), 3);
        let fmt = |m: &Mdp| m.actions(0).iter().map(|a| t.alphabet.format(a)).collect::<Vec<_>>();
        assert_eq!(fmt(&t.gridline), ["L <T>", "R <T>"]);
        assert_eq!(fmt(&t.sequence), ["x y <T>", "y x <T>", "x x <T>"]);
        assert_eq!(t.alphabet.names(), ["L", "R", "x", "y", "<T>"]);
    }

    #[test]
    fn corpora_round_trip_through_ingestion() {
        let t = build_toy_tasks().unwrap();
        for (_, _, corpus) in t.tasks() {
            assert_eq!(corpus.len(), CORPUS_LINES);
            let text = t.alphabet.format_corpus(corpus);
            assert_eq!(t.alphabet.parse_corpus(&text).unwrap(), corpus);
        }
    }

    #[test]
    fn corpora_are_mostly_optimal() {
        let t = build_toy_tasks().unwrap();
        let r = t.alphabet.symbol("R").unwrap();
        let l = t.alphabet.symbol("L").unwrap();
        let rs = t.gridline_corpus.iter().flatten().filter(|&&y| y == r).count();
        let ls = t.gridline_corpus.iter().flatten().filter(|&&y| y == l).count();
        assert!(rs > 2 * ls, "{rs} vs {ls}");
    }

    #[test]
    fn deterministic() {
        let a = build_toy_tasks().unwrap();
        let b = build_toy_tasks().unwrap();
        assert_eq!(a.gridline_corpus, b.gridline_corpus);
        assert_eq!(a.sequence_corpus, b.sequence_corpus);
    }
}
