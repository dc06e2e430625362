//! Finite-horizon tabular MDPs whose actions are symbol strings.
//!
//! Horizons count external decisions. Values are exact expectations
//! computed by backward recursion over the kernel.

use serde::{Deserialize, Serialize};

use crate::alphabet::{Symbol, SymbolAlphabet};
use crate::error::{Error, Result};
use crate::model::StateId;

pub const KERNEL_TOLERANCE: f64 = 1e-12;
pub const POLICY_TOLERANCE: f64 = 1e-9;

/// One entry of a kernel row: `μ(next, reward | s, a) = probability`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub next: StateId,
    pub reward: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    alphabet: SymbolAlphabet,
    action_sets: Vec<Vec<Vec<Symbol>>>,
    kernel: Vec<Vec<Vec<Outcome>>>,
    initial_state: StateId,
    reward_bounds: (f64, f64),
}

impl Mdp {
    /// `action_sets[s]` lists the legal actions of `s`, each ending in its
    /// only terminal; `kernel[s][i]` is the outcome row of action `i` in `s`.
    pub fn new(
        alphabet: SymbolAlphabet,
        action_sets: Vec<Vec<Vec<Symbol>>>,
        kernel: Vec<Vec<Vec<Outcome>>>,
        initial_state: StateId,
    ) -> Result<Self> {
        let mut mdp = Self {
            alphabet,
            action_sets,
            kernel,
            initial_state,
            reward_bounds: (0.0, 0.0),
        };
        mdp.reward_bounds = mdp.observed_reward_bounds();
        mdp.validate()?;
        Ok(mdp)
    }

    /// Widens the declared reward range. It must contain every reward.
    pub fn with_reward_bounds(mut self, r_min: f64, r_max: f64) -> Result<Self> {
        self.reward_bounds = (r_min, r_max);
        self.validate()?;
        Ok(self)
    }

    fn observed_reward_bounds(&self) -> (f64, f64) {
        let rewards = self.kernel.iter().flatten().flatten().map(|o| o.reward);
        let (lo, hi) = rewards.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)));
        if lo > hi {
            (0.0, 0.0)
        } else {
            (lo, hi)
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.action_sets.len();
        if n == 0 {
            return Err(Error::InvalidMdp("no states".into()));
        }
        if self.kernel.len() != n {
            return Err(Error::InvalidMdp(format!(
                "{} action sets but {} kernel blocks",
                n,
                self.kernel.len()
            )));
        }
        if self.initial_state >= n {
            return Err(Error::InvalidMdp(format!("initial state {} out of range", self.initial_state)));
        }
        let (r_min, r_max) = self.reward_bounds;
        let mut bad_rows = Vec::new();
        for (s, (actions, rows)) in self.action_sets.iter().zip(&self.kernel).enumerate() {
            if actions.is_empty() {
                return Err(Error::InvalidMdp(format!("state {s} has no actions")));
            }
            if actions.len() != rows.len() {
                return Err(Error::InvalidMdp(format!(
                    "state {s}: {} actions but {} kernel rows",
                    actions.len(),
                    rows.len()
                )));
            }
            for (i, a) in actions.iter().enumerate() {
                crate::model::check_action(&self.alphabet, a).map_err(|e| Error::InvalidMdp(format!("state {s}: {e}")))?;
                if actions[..i].contains(a) {
                    return Err(Error::InvalidMdp(format!(
                        "state {s}: duplicate action `{}`",
                        self.alphabet.format(a)
                    )));
                }
            }
            for (i, row) in rows.iter().enumerate() {
                if row.is_empty() {
                    bad_rows.push(format!("({s}, {}) is empty", self.alphabet.format(&actions[i])));
                    continue;
                }
                for o in row {
                    if o.next >= n {
                        return Err(Error::InvalidMdp(format!("state {s}: next state {} out of range", o.next)));
                    }
                    if !(o.probability > 0.0 && o.probability <= 1.0) {
                        return Err(Error::InvalidMdp(format!(
                            "state {s}: outcome probability {} not in (0, 1]",
                            o.probability
                        )));
                    }
                    if !(o.reward.is_finite() && r_min <= o.reward && o.reward <= r_max) {
                        return Err(Error::InvalidMdp(format!(
                            "state {s}: reward {} outside [{r_min}, {r_max}]",
                            o.reward
                        )));
                    }
                }
                let sum: f64 = row.iter().map(|o| o.probability).sum();
                if (sum - 1.0).abs() > KERNEL_TOLERANCE {
                    bad_rows.push(format!("({s}, {}) sums to {sum}", self.alphabet.format(&actions[i])));
                }
            }
        }
        if !bad_rows.is_empty() {
            return Err(Error::InvalidMdp(format!("kernel rows not stochastic: {}", bad_rows.join("; "))));
        }
        Ok(())
    }

    pub fn alphabet(&self) -> &SymbolAlphabet {
        &self.alphabet
    }

    pub fn num_states(&self) -> usize {
        self.action_sets.len()
    }

    pub fn initial_state(&self) -> StateId {
        self.initial_state
    }

    pub fn reward_bounds(&self) -> (f64, f64) {
        self.reward_bounds
    }

    pub fn action_sets(&self) -> &[Vec<Vec<Symbol>>] {
        &self.action_sets
    }

    pub fn actions(&self, state: StateId) -> &[Vec<Symbol>] {
        &self.action_sets[state]
    }

    pub fn outcomes(&self, state: StateId, action: usize) -> &[Outcome] {
        &self.kernel[state][action]
    }

    /// Index of `action` (terminal included) among the legal actions of `state`.
    pub fn action_index(&self, state: StateId, action: &[Symbol]) -> Option<usize> {
        self.action_sets.get(state)?.iter().position(|a| a == action)
    }

    pub fn check_state(&self, state: StateId) -> Result<()> {
        if state < self.num_states() {
            Ok(())
        } else {
            Err(Error::InvalidMdp(format!("state {state} out of range")))
        }
    }

    /// Replaces one kernel row, keeping the MDP valid.
    pub fn set_outcomes(&mut self, state: StateId, action: usize, row: Vec<Outcome>) -> Result<()> {
        self.check_state(state)?;
        if action >= self.kernel[state].len() {
            return Err(Error::InvalidMdp(format!("action index {action} out of range in state {state}")));
        }
        let old = std::mem::replace(&mut self.kernel[state][action], row);
        let old_bounds = self.reward_bounds;
        let (lo, hi) = self.observed_reward_bounds();
        self.reward_bounds = (lo.min(old_bounds.0), hi.max(old_bounds.1));
        if let Err(e) = self.validate() {
            self.kernel[state][action] = old;
            self.reward_bounds = old_bounds;
            return Err(e);
        }
        Ok(())
    }

    /// Multiplies every reward by `c`.
    pub fn scale_rewards(&mut self, c: f64) -> Result<()> {
        if !c.is_finite() {
            return Err(Error::InvalidMdp(format!("scale {c} is not finite")));
        }
        self.kernel.iter_mut().flatten().flatten().for_each(|o| o.reward *= c);
        let (lo, hi) = (self.reward_bounds.0 * c, self.reward_bounds.1 * c);
        self.reward_bounds = (lo.min(hi), lo.max(hi));
        self.validate()
    }

    /// Expected immediate reward of action `action` in `state`.
    pub fn expected_reward(&self, state: StateId, action: usize) -> f64 {
        self.outcomes(state, action).iter().map(|o| o.probability * o.reward).sum()
    }

    /// Draws an outcome using a uniform variate `u ∈ [0, 1)`.
    pub fn sample_outcome(&self, state: StateId, action: usize, u: f64) -> Outcome {
        let row = self.outcomes(state, action);
        let mut acc = 0.0;
        for o in row {
            acc += o.probability;
            if u < acc {
                return *o;
            }
        }
        *row.last().expect("rows are non-empty")
    }
}

/// Stationary policy `Π(a | s)` over the legal actions of an MDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalPolicy {
    rows: Vec<Vec<f64>>,
}

impl ExternalPolicy {
    pub fn new(mdp: &Mdp, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != mdp.num_states() {
            return Err(Error::InvalidPolicy(format!("{} rows for {} states", rows.len(), mdp.num_states())));
        }
        for (s, row) in rows.iter().enumerate() {
            if row.len() != mdp.actions(s).len() {
                return Err(Error::InvalidPolicy(format!(
                    "state {s}: {} entries for {} actions",
                    row.len(),
                    mdp.actions(s).len()
                )));
            }
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::InvalidPolicy(format!("state {s}: negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > POLICY_TOLERANCE {
                return Err(Error::InvalidPolicy(format!("state {s}: row sums to {sum}")));
            }
        }
        Ok(Self { rows })
    }

    pub fn uniform(mdp: &Mdp) -> Self {
        let rows = mdp
            .action_sets()
            .iter()
            .map(|set| vec![1.0 / set.len() as f64; set.len()])
            .collect();
        Self { rows }
    }

    pub fn deterministic(mdp: &Mdp, choice: &[usize]) -> Result<Self> {
        let rows = choice
            .iter()
            .enumerate()
            .map(|(s, &c)| {
                let mut row = vec![0.0; mdp.actions(s).len()];
                *row.get_mut(c)
                    .ok_or_else(|| Error::InvalidPolicy(format!("state {s}: action {c} out of range")))? = 1.0;
                Ok(row)
            })
            .collect::<Result<_>>()?;
        Self::new(mdp, rows)
    }

    pub fn probability(&self, state: StateId, action: usize) -> f64 {
        self.rows[state][action]
    }

    pub fn row(&self, state: StateId) -> &[f64] {
        &self.rows[state]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Largest absolute difference between two policies on the same MDP.
    pub fn max_abs_diff(&self, other: &ExternalPolicy) -> f64 {
        self.rows
            .iter()
            .flatten()
            .zip(other.rows.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `V_t` for `t = 0..=m` under a stationary policy: `values[t][s]`.
fn value_table(mdp: &Mdp, policy: &ExternalPolicy, m: usize) -> Vec<Vec<f64>> {
    let mut values = vec![vec![0.0; mdp.num_states()]];
    for t in 1..=m {
        let prev = &values[t - 1];
        let v: Vec<f64> = (0..mdp.num_states())
            .map(|s| {
                (0..mdp.actions(s).len())
                    .map(|a| policy.probability(s, a) * backup(mdp, prev, s, a))
                    .sum()
            })
            .collect();
        values.push(v);
    }
    values
}

#[inline]
fn backup(mdp: &Mdp, next_values: &[f64], s: StateId, a: usize) -> f64 {
    mdp.outcomes(s, a)
        .iter()
        .map(|o| o.probability * (o.reward + next_values[o.next]))
        .sum()
}

fn check_horizon(m: usize) -> Result<()> {
    if m == 0 {
        Err(Error::Precondition("horizon must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// `Q^Π_μ(s, a)` for the `m`-step return, `a` given by index.
pub fn q_value(mdp: &Mdp, policy: &ExternalPolicy, state: StateId, action: usize, m: usize) -> Result<f64> {
    check_horizon(m)?;
    mdp.check_state(state)?;
    if action >= mdp.actions(state).len() {
        return Err(Error::IllegalAction {
            state,
            action: format!("#{action}"),
        });
    }
    let values = value_table(mdp, policy, m - 1);
    Ok(backup(mdp, &values[m - 1], state, action))
}

/// `Q^Π_μ(s, a)` with the action given as a symbol string.
pub fn q_value_of(mdp: &Mdp, policy: &ExternalPolicy, state: StateId, action: &[Symbol], m: usize) -> Result<f64> {
    mdp.check_state(state)?;
    let idx = mdp.action_index(state, action).ok_or_else(|| Error::IllegalAction {
        state,
        action: mdp.alphabet().format(action),
    })?;
    q_value(mdp, policy, state, idx, m)
}

/// Every `Q_m(s, a)` at once: `table[s][a]`.
pub fn q_table(mdp: &Mdp, policy: &ExternalPolicy, m: usize) -> Result<Vec<Vec<f64>>> {
    check_horizon(m)?;
    let values = value_table(mdp, policy, m - 1);
    let next = &values[m - 1];
    Ok((0..mdp.num_states())
        .map(|s| (0..mdp.actions(s).len()).map(|a| backup(mdp, next, s, a)).collect())
        .collect())
}

/// `V^Π_μ(s)` for the `m`-step return.
pub fn v_value(mdp: &Mdp, policy: &ExternalPolicy, state: StateId, m: usize) -> Result<f64> {
    check_horizon(m)?;
    mdp.check_state(state)?;
    Ok(value_table(mdp, policy, m)[m][state])
}

/// Backward-induction solution of the `m`-step problem.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSolution {
    /// `values[t][s]`: optimal value with `t` decisions left.
    pub values: Vec<Vec<f64>>,
    /// `q[t][s][a]`: optimal action values with `t` decisions left (`t ≥ 1`).
    pub q: Vec<Vec<Vec<f64>>>,
    /// `rules[t][s]`: maximizing action with `t` decisions left, lowest index
    /// on ties (`t ≥ 1`; `rules[0]` is empty).
    pub rules: Vec<Vec<usize>>,
}

pub fn solve_optimal(mdp: &Mdp, m: usize) -> Result<OptimalSolution> {
    check_horizon(m)?;
    let mut values = vec![vec![0.0; mdp.num_states()]];
    let mut q = vec![Vec::new()];
    let mut rules = vec![Vec::new()];
    for t in 1..=m {
        let prev = &values[t - 1];
        let qt: Vec<Vec<f64>> = (0..mdp.num_states())
            .map(|s| (0..mdp.actions(s).len()).map(|a| backup(mdp, prev, s, a)).collect())
            .collect();
        let rule: Vec<usize> = qt
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                    .0
            })
            .collect();
        let v: Vec<f64> = qt.iter().zip(&rule).map(|(row, &a)| row[a]).collect();
        values.push(v);
        q.push(qt);
        rules.push(rule);
    }
    Ok(OptimalSolution { values, q, rules })
}

/// The decision rule for the first of `m` decisions, as a stationary policy.
pub fn optimal_policy(mdp: &Mdp, m: usize) -> Result<ExternalPolicy> {
    let sol = solve_optimal(mdp, m)?;
    ExternalPolicy::deterministic(mdp, &sol.rules[m])
}

/// Optimal `m`-step value of `state` (over all, possibly non-stationary, policies).
pub fn optimal_value(mdp: &Mdp, state: StateId, m: usize) -> Result<f64> {
    mdp.check_state(state)?;
    Ok(solve_optimal(mdp, m)?.values[m][state])
}

/// One external decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: StateId,
    /// Action sent to the environment, terminal included.
    pub action: Vec<Symbol>,
    pub next_state: StateId,
    pub reward: f64,
    /// Internal bits spent decoding this action.
    pub bits: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub initial_state: StateId,
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn total_bits(&self) -> usize {
        self.steps.iter().map(|s| s.bits).sum()
    }

    pub fn final_state(&self) -> StateId {
        self.steps.last().map_or(self.initial_state, |s| s.next_state)
    }
}

// ---------------------------------------------------------------------------
// MDP definition files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MdpFile {
    alphabet: Vec<String>,
    max_action_length: usize,
    num_states: usize,
    initial_state: StateId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reward_bounds: Option<[f64; 2]>,
    #[serde(rename = "transition")]
    transitions: Vec<TransitionEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TransitionEntry {
    state: StateId,
    action: String,
    /// `[next, reward, probability]` triples.
    outcomes: Vec<(StateId, f64, f64)>,
}

/// Parses an MDP definition (TOML): alphabet, states, and one
/// `[[transition]]` table per legal `(state, action)` pair.
pub fn parse_mdp(text: &str) -> Result<Mdp> {
    let file: MdpFile = toml::from_str(text)?;
    let terminal_index = file
        .alphabet
        .iter()
        .position(|s| s == crate::alphabet::TERMINAL_TOKEN)
        .ok_or_else(|| Error::InvalidMdp("alphabet lacks the <T> terminal".into()))?;
    let alphabet = SymbolAlphabet::new(file.alphabet, terminal_index, file.max_action_length)?;
    let mut action_sets = vec![Vec::new(); file.num_states];
    let mut kernel = vec![Vec::new(); file.num_states];
    for t in file.transitions {
        if t.state >= file.num_states {
            return Err(Error::InvalidMdp(format!("transition for state {} out of range", t.state)));
        }
        action_sets[t.state].push(alphabet.parse(&t.action)?);
        kernel[t.state].push(
            t.outcomes
                .into_iter()
                .map(|(next, reward, probability)| Outcome { next, reward, probability })
                .collect(),
        );
    }
    let mdp = Mdp::new(alphabet, action_sets, kernel, file.initial_state)?;
    match file.reward_bounds {
        Some([lo, hi]) => mdp.with_reward_bounds(lo, hi),
        None => Ok(mdp),
    }
}

pub fn format_mdp(mdp: &Mdp) -> Result<String> {
    let file = MdpFile {
        alphabet: mdp.alphabet.names().to_vec(),
        max_action_length: mdp.alphabet.max_action_length(),
        num_states: mdp.num_states(),
        initial_state: mdp.initial_state,
        reward_bounds: Some([mdp.reward_bounds.0, mdp.reward_bounds.1]),
        transitions: (0..mdp.num_states())
            .flat_map(|s| {
                (0..mdp.actions(s).len()).map(move |a| TransitionEntry {
                    state: s,
                    action: mdp.alphabet.format(mdp.actions(s)[a].as_slice()),
                    outcomes: mdp.outcomes(s, a).iter().map(|o| (o.next, o.reward, o.probability)).collect(),
                })
            })
            .collect(),
    };
    toml::to_string(&file).map_err(|e| Error::Format(e.to_string()))
}
