//! The agent's view from inside: single-bit actions, a decoder that turns
//! them into external actions, and the environment that view induces.
//!
//! An internal state is a pair `(s, q)`: the current external state and the
//! bits chosen since the last external action. A bit either leaves the
//! decoder undecided, which moves to `(s, qb)` with reward 0, or completes an
//! action `a`, which is sent to the external MDP and resets the buffer.

use std::collections::HashMap;
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::alphabet::{Symbol, SymbolAlphabet};
use crate::coder::{decodable_strings, BitString, DecodableString, DecodeMode, Decoder};
use crate::error::{Error, Result};
use crate::mdp::{ExternalPolicy, Mdp, Step, Trajectory};
use crate::model::{ActionModel, StateId};

/// Symbols of `x` before its first terminal.
pub fn tau(alphabet: &SymbolAlphabet, x: &[Symbol]) -> Result<Vec<Symbol>> {
    let end = x
        .iter()
        .position(|&y| alphabet.is_terminal(y))
        .ok_or_else(|| Error::Precondition(format!("`{}` contains no terminal", alphabet.format(x))))?;
    Ok(x[..end].to_vec())
}

/// Minimal bitstrings whose decoding under `ρ(· | state)` contains the terminal.
pub fn decodable_set<M: ActionModel + ?Sized>(model: &M, state: StateId) -> Result<Vec<DecodableString>> {
    decodable_strings(model, state)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InternalState {
    pub state: StateId,
    pub bits: BitString,
}

impl InternalState {
    pub fn root(state: StateId) -> Self {
        Self {
            state,
            bits: BitString::new(),
        }
    }
}

/// A law `π(b | s, q)` over single bits.
pub trait InternalPolicy {
    /// `π(1 | s, q)`.
    fn one_probability(&self, state: StateId, q: &BitString) -> Result<f64>;

    fn probability(&self, state: StateId, q: &BitString, b: bool) -> Result<f64> {
        let p = self.one_probability(state, q)?;
        Ok(if b { p } else { 1.0 - p })
    }
}

impl<P: InternalPolicy + ?Sized> InternalPolicy for &P {
    fn one_probability(&self, state: StateId, q: &BitString) -> Result<f64> {
        (**self).one_probability(state, q)
    }
}

impl<P: InternalPolicy + ?Sized> InternalPolicy for Box<P> {
    fn one_probability(&self, state: StateId, q: &BitString) -> Result<f64> {
        (**self).one_probability(state, q)
    }
}

/// Fair coin at every internal state.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformInternalPolicy;

impl InternalPolicy for UniformInternalPolicy {
    fn one_probability(&self, _: StateId, _: &BitString) -> Result<f64> {
        Ok(0.5)
    }
}

/// The same biased coin at every internal state.
#[derive(Debug, Clone, Copy)]
pub struct BiasedInternalPolicy {
    pub one: f64,
}

impl InternalPolicy for BiasedInternalPolicy {
    fn one_probability(&self, _: StateId, _: &BitString) -> Result<f64> {
        Ok(self.one)
    }
}

/// A fixed pseudo-random coin per internal state, drawn from `[0.05, 0.95]`
/// by hashing `(seed, s, q)`.
#[derive(Debug, Clone, Copy)]
pub struct HashedInternalPolicy {
    pub seed: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl InternalPolicy for HashedInternalPolicy {
    fn one_probability(&self, state: StateId, q: &BitString) -> Result<f64> {
        let mut h = splitmix(self.seed ^ splitmix(state as u64));
        h = splitmix(h ^ q.len() as u64);
        for b in q.iter() {
            h = splitmix(h ^ b as u64);
        }
        Ok(0.05 + 0.9 * (h >> 11) as f64 / (1u64 << 53) as f64)
    }
}

/// Follows one fixed bitstring per state; fair coin once off that path.
#[derive(Debug, Clone)]
pub struct CodewordPolicy {
    codewords: Vec<BitString>,
}

impl CodewordPolicy {
    pub fn new(codewords: Vec<BitString>) -> Self {
        Self { codewords }
    }
}

impl InternalPolicy for CodewordPolicy {
    fn one_probability(&self, state: StateId, q: &BitString) -> Result<f64> {
        let c = self
            .codewords
            .get(state)
            .ok_or_else(|| Error::InvalidPolicy(format!("no codeword for state {state}")))?;
        if q.len() < c.len() && q.is_prefix_of(c) {
            Ok(if c.bits()[q.len()] { 1.0 } else { 0.0 })
        } else {
            Ok(0.5)
        }
    }
}

/// Internal policy tabulated over the internal states with positive mass.
#[derive(Debug, Clone, Default)]
pub struct TabularInternalPolicy {
    table: HashMap<(StateId, BitString), f64>,
}

impl TabularInternalPolicy {
    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl InternalPolicy for TabularInternalPolicy {
    fn one_probability(&self, state: StateId, q: &BitString) -> Result<f64> {
        self.table.get(&(state, q.clone())).copied().ok_or_else(|| Error::ZeroMassPrefix {
            state,
            bits: q.to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Child {
    Node(usize),
    /// Index of the completed action among the legal actions of the state.
    Leaf(usize),
}

/// The bit tree of one state: inner nodes are the internal states `(s, q)`,
/// leaves are the elements of the decodable set.
#[derive(Debug, Clone)]
struct BitTree {
    children: Vec<[Child; 2]>,
    depth: Vec<usize>,
}

impl BitTree {
    fn build<M: ActionModel + ?Sized>(mdp: &Mdp, model: &M, state: StateId) -> Result<Self> {
        let mut tree = BitTree {
            children: vec![[Child::Leaf(usize::MAX); 2]],
            depth: vec![0],
        };
        let mut stack = vec![(0usize, Decoder::new(model, state, DecodeMode::FirstAction))];
        while let Some((node, d)) = stack.pop() {
            for b in [false, true] {
                let mut next = d.clone();
                next.feed_bit(b)?;
                let child = if let Some(action) = next.first_action() {
                    Child::Leaf(mdp.action_index(state, action).ok_or_else(|| Error::IllegalAction {
                        state,
                        action: model.alphabet().format(action),
                    })?)
                } else {
                    let id = tree.children.len();
                    tree.children.push([Child::Leaf(usize::MAX); 2]);
                    tree.depth.push(tree.depth[node] + 1);
                    stack.push((id, next));
                    Child::Node(id)
                };
                tree.children[node][b as usize] = child;
            }
        }
        Ok(tree)
    }

    /// Node reached by `q`, if `q` leaves decoding undecided.
    fn find(&self, q: &BitString) -> Option<usize> {
        let mut node = 0;
        for b in q.iter() {
            match self.children[node][b as usize] {
                Child::Node(n) => node = n,
                Child::Leaf(_) => return None,
            }
        }
        Some(node)
    }

    fn len(&self) -> usize {
        self.children.len()
    }

    /// Visits every inner node with its bitstring, parents first.
    fn visit(&self, mut f: impl FnMut(usize, &BitString) -> Result<()>) -> Result<()> {
        let mut stack = vec![(0usize, BitString::new())];
        while let Some((node, q)) = stack.pop() {
            f(node, &q)?;
            for b in [true, false] {
                if let Child::Node(n) = self.children[node][b as usize] {
                    stack.push((n, q.with(b)));
                }
            }
        }
        Ok(())
    }
}

/// Where a single bit leads.
#[derive(Debug, Clone, PartialEq)]
pub enum Transition {
    /// Decoding is still undecided.
    Decoding(InternalState),
    /// The bit completed the legal action with this index.
    Complete { action: usize },
}

/// Outcome of one internal step.
#[derive(Debug, Clone, PartialEq)]
pub struct InternalStep {
    pub next: InternalState,
    pub reward: f64,
    /// The external action sent, terminal included, if the bit completed one.
    pub action: Option<Vec<Symbol>>,
}

/// One line of a trajectory trace: a single internal step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub s: StateId,
    pub q: String,
    pub b: u8,
    pub decoded: String,
    pub action: Option<String>,
    pub reward: f64,
}

/// The internal environment over `(s, q)` pairs, evaluated lazily from an
/// external MDP and an action model.
pub struct InternalEnvironment<'a, M: ActionModel + ?Sized> {
    mdp: &'a Mdp,
    model: &'a M,
    mid_decode_reward: f64,
    trees: Vec<OnceLock<Result<BitTree>>>,
}

impl<'a, M: ActionModel + ?Sized> InternalEnvironment<'a, M> {
    pub fn new(mdp: &'a Mdp, model: &'a M) -> Result<Self> {
        if model.alphabet() != mdp.alphabet() {
            return Err(Error::Precondition("model and MDP use different alphabets".into()));
        }
        Ok(Self {
            mdp,
            model,
            mid_decode_reward: 0.0,
            trees: (0..mdp.num_states()).map(|_| OnceLock::new()).collect(),
        })
    }

    /// Pays `r` for every bit that leaves decoding undecided. Only useful to
    /// break the environment on purpose: any `r ≠ 0` changes internal values.
    pub fn with_mid_decode_reward(mut self, r: f64) -> Self {
        self.mid_decode_reward = r;
        self
    }

    pub fn mdp(&self) -> &'a Mdp {
        self.mdp
    }

    pub fn model(&self) -> &'a M {
        self.model
    }

    fn tree(&self, state: StateId) -> Result<&BitTree> {
        self.mdp.check_state(state)?;
        self.trees[state]
            .get_or_init(|| BitTree::build(self.mdp, self.model, state))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Number of internal states `(state, q)`.
    pub fn internal_state_count(&self, state: StateId) -> Result<usize> {
        Ok(self.tree(state)?.len())
    }

    /// Longest element of the decodable set of `state`.
    pub fn depth(&self, state: StateId) -> Result<usize> {
        Ok(self.tree(state)?.depth.iter().max().map_or(1, |d| d + 1))
    }

    /// Decodes `q b` from scratch.
    pub fn transition(&self, sq: &InternalState, b: bool) -> Result<Transition> {
        self.mdp.check_state(sq.state)?;
        let mut d = Decoder::new(self.model, sq.state, DecodeMode::FirstAction);
        d.feed(&sq.bits).map_err(|e| match e {
            Error::DecoderComplete => self.not_internal(sq),
            e => e,
        })?;
        if d.is_complete() {
            return Err(self.not_internal(sq));
        }
        d.feed_bit(b)?;
        match d.first_action() {
            Some(action) => Ok(Transition::Complete {
                action: self.mdp.action_index(sq.state, action).ok_or_else(|| Error::IllegalAction {
                    state: sq.state,
                    action: self.model.alphabet().format(action),
                })?,
            }),
            None => Ok(Transition::Decoding(InternalState {
                state: sq.state,
                bits: sq.bits.with(b),
            })),
        }
    }

    fn not_internal(&self, sq: &InternalState) -> Error {
        Error::Precondition(format!("`{}` already completes an action in state {}", sq.bits, sq.state))
    }

    /// The row `ϑ(· | sq, b)` as `(next, reward, probability)` triples.
    pub fn kernel(&self, sq: &InternalState, b: bool) -> Result<Vec<(InternalState, f64, f64)>> {
        Ok(match self.transition(sq, b)? {
            Transition::Decoding(next) => vec![(next, self.mid_decode_reward, 1.0)],
            Transition::Complete { action } => self
                .mdp
                .outcomes(sq.state, action)
                .iter()
                .map(|o| (InternalState::root(o.next), o.reward, o.probability))
                .collect(),
        })
    }

    /// Samples one step of the internal environment.
    pub fn step<R: Rng>(&self, sq: &InternalState, b: bool, rng: &mut R) -> Result<InternalStep> {
        Ok(match self.transition(sq, b)? {
            Transition::Decoding(next) => InternalStep {
                next,
                reward: self.mid_decode_reward,
                action: None,
            },
            Transition::Complete { action } => {
                let o = self.mdp.sample_outcome(sq.state, action, rng.gen());
                InternalStep {
                    next: InternalState::root(o.next),
                    reward: o.reward,
                    action: Some(self.mdp.actions(sq.state)[action].clone()),
                }
            }
        })
    }

    /// `Π(a | s) = Σ_{q ∈ 𝔻ₛ, τ(D(q)) = a} ∏ᵢ π(qᵢ | s, q_{<i})`.
    pub fn uplift<P: InternalPolicy + ?Sized>(&self, pi: &P) -> Result<ExternalPolicy> {
        let rows = (0..self.mdp.num_states())
            .map(|s| self.uplift_row(pi, s))
            .collect::<Result<Vec<_>>>()?;
        ExternalPolicy::new(self.mdp, rows)
    }

    /// Uplifted probabilities of the legal actions of `state`, unnormalized
    /// only by floating-point error.
    pub fn uplift_row<P: InternalPolicy + ?Sized>(&self, pi: &P, state: StateId) -> Result<Vec<f64>> {
        let tree = self.tree(state)?;
        let mut row = vec![0.0; self.mdp.actions(state).len()];
        let mut stack = vec![(0usize, BitString::new(), 1.0)];
        while let Some((node, q, mass)) = stack.pop() {
            let p1 = pi.one_probability(state, &q)?;
            for (b, p) in [(false, 1.0 - p1), (true, p1)] {
                let m = mass * p;
                if m == 0.0 {
                    continue;
                }
                match tree.children[node][b as usize] {
                    Child::Leaf(a) => row[a] += m,
                    Child::Node(n) => stack.push((n, q.with(b), m)),
                }
            }
        }
        Ok(row)
    }

    /// `V^π_ϑ((s, ε))` with `t` external decisions left: `values[t][s]`.
    fn root_values<P: InternalPolicy + ?Sized>(&self, pi: &P, m: usize) -> Result<Vec<Vec<f64>>> {
        let mut values = vec![vec![0.0; self.mdp.num_states()]];
        for t in 1..=m {
            let row = (0..self.mdp.num_states())
                .map(|s| self.node_value(pi, s, 0, &mut BitString::new(), &values[t - 1]))
                .collect::<Result<Vec<_>>>()?;
            values.push(row);
        }
        Ok(values)
    }

    /// Value of the inner node `node` (bitstring `q`) given the root values
    /// one external decision later.
    fn node_value<P: InternalPolicy + ?Sized>(&self, pi: &P, s: StateId, node: usize, q: &mut BitString, next: &[f64]) -> Result<f64> {
        let p1 = pi.one_probability(s, q)?;
        let mut v = 0.0;
        for (b, p) in [(false, 1.0 - p1), (true, p1)] {
            v += p * self.bit_value(pi, s, node, q, b, next)?;
        }
        Ok(v)
    }

    fn bit_value<P: InternalPolicy + ?Sized>(
        &self,
        pi: &P,
        s: StateId,
        node: usize,
        q: &mut BitString,
        b: bool,
        next: &[f64],
    ) -> Result<f64> {
        match self.tree(s)?.children[node][b as usize] {
            Child::Leaf(a) => Ok(self.completion_value(s, a, next)),
            Child::Node(n) => {
                q.push(b);
                let v = self.node_value(pi, s, n, q, next);
                q.pop();
                Ok(self.mid_decode_reward + v?)
            }
        }
    }

    fn completion_value(&self, s: StateId, a: usize, next: &[f64]) -> f64 {
        self.mdp
            .outcomes(s, a)
            .iter()
            .map(|o| o.probability * (o.reward + next[o.next]))
            .sum()
    }

    /// `Q^π_ϑ(sq, b)`: expected reward until `m` external actions are sent.
    pub fn q_value<P: InternalPolicy + ?Sized>(&self, pi: &P, sq: &InternalState, b: bool, m: usize) -> Result<f64> {
        if m == 0 {
            return Err(Error::Precondition("horizon must be at least 1".into()));
        }
        let node = self.tree(sq.state)?.find(&sq.bits).ok_or_else(|| self.not_internal(sq))?;
        let values = self.root_values(pi, m - 1)?;
        let mut q = sq.bits.clone();
        self.bit_value(pi, sq.state, node, &mut q, b, &values[m - 1])
    }

    /// `V^π_ϑ(sq)` over `m` external decisions.
    pub fn v_value<P: InternalPolicy + ?Sized>(&self, pi: &P, sq: &InternalState, m: usize) -> Result<f64> {
        let p1 = pi.one_probability(sq.state, &sq.bits)?;
        Ok((1.0 - p1) * self.q_value(pi, sq, false, m)? + p1 * self.q_value(pi, sq, true, m)?)
    }

    /// Every completing triple `(s, q, b)` with its action index and
    /// `Q^π_ϑ(sq, b)` at horizon `m`.
    pub fn completing_q_values<P: InternalPolicy + ?Sized>(&self, pi: &P, m: usize) -> Result<Vec<(InternalState, bool, usize, f64)>> {
        if m == 0 {
            return Err(Error::Precondition("horizon must be at least 1".into()));
        }
        let values = self.root_values(pi, m - 1)?;
        let mut out = Vec::new();
        for s in 0..self.mdp.num_states() {
            let tree = self.tree(s)?;
            tree.visit(|node, q| {
                for b in [false, true] {
                    if let Child::Leaf(a) = tree.children[node][b as usize] {
                        let sq = InternalState { state: s, bits: q.clone() };
                        out.push((sq, b, a, self.completion_value(s, a, &values[m - 1])));
                    }
                }
                Ok(())
            })?;
        }
        Ok(out)
    }

    /// An internal policy whose uplift is `ext`.
    ///
    /// Each action's mass is split over its bitstrings in proportion to their
    /// dyadic weights; `π(b | s, q)` is then the share of the mass below `q`
    /// that lies below `qb`. Internal states that carry no mass are left out
    /// of the table and report [`Error::ZeroMassPrefix`].
    pub fn internalize(&self, ext: &ExternalPolicy) -> Result<TabularInternalPolicy> {
        let mut table = HashMap::new();
        for s in 0..self.mdp.num_states() {
            let tree = self.tree(s)?;
            // Dyadic weight of each action, ρ_q(a | s).
            let mut rho = vec![0.0; self.mdp.actions(s).len()];
            for (node, kids) in tree.children.iter().enumerate() {
                for c in kids {
                    if let Child::Leaf(a) = *c {
                        rho[a] += (-((tree.depth[node] + 1) as f64)).exp2();
                    }
                }
            }
            for (a, &p) in ext.row(s).iter().enumerate() {
                if p > 0.0 && rho[a] == 0.0 {
                    return Err(Error::Precondition(format!(
                        "action `{}` has positive probability but no bitstring in state {s}",
                        self.mdp.alphabet().format(&self.mdp.actions(s)[a])
                    )));
                }
            }
            // Mass below every child, children before parents.
            let mut below = vec![[0.0f64; 2]; tree.len()];
            for node in (0..tree.len()).rev() {
                for b in 0..2 {
                    below[node][b] = match tree.children[node][b] {
                        Child::Leaf(a) if rho[a] > 0.0 => ext.probability(s, a) * (-((tree.depth[node] + 1) as f64)).exp2() / rho[a],
                        Child::Leaf(_) => 0.0,
                        Child::Node(n) => below[n][0] + below[n][1],
                    };
                }
            }
            tree.visit(|node, q| {
                let total = below[node][0] + below[node][1];
                if total > 0.0 {
                    table.insert((s, q.clone()), below[node][1] / total);
                }
                Ok(())
            })?;
        }
        Ok(TabularInternalPolicy { table })
    }

    /// Runs the internal agent-environment loop from `start` for `steps`
    /// external decisions.
    pub fn run_loop<P, R>(&self, pi: &P, start: StateId, steps: usize, rng: &mut R) -> Result<Trajectory>
    where
        P: InternalPolicy + ?Sized,
        R: Rng,
    {
        self.run_loop_traced(pi, start, steps, rng, |_| {})
    }

    /// As [`run_loop`](Self::run_loop), passing one record per internal step
    /// to `trace`.
    pub fn run_loop_traced<P, R, F>(&self, pi: &P, start: StateId, steps: usize, rng: &mut R, mut trace: F) -> Result<Trajectory>
    where
        P: InternalPolicy + ?Sized,
        R: Rng,
        F: FnMut(&TraceRecord),
    {
        if steps == 0 {
            return Err(Error::Precondition("steps must be at least 1".into()));
        }
        self.mdp.check_state(start)?;
        let alphabet = self.model.alphabet();
        let mut trajectory = Trajectory {
            initial_state: start,
            steps: Vec::with_capacity(steps),
        };
        let mut s = start;
        let mut t = 0;
        while trajectory.steps.len() < steps {
            let mut d = Decoder::new(self.model, s, DecodeMode::FirstAction);
            loop {
                let q = d.consumed().clone();
                let b = rng.gen::<f64>() < pi.one_probability(s, &q)?;
                d.feed_bit(b)?;
                t += 1;
                let Some(action) = d.first_action() else {
                    trace(&TraceRecord {
                        t,
                        s,
                        q: q.to_string(),
                        b: b as u8,
                        decoded: alphabet.format(d.emitted()),
                        action: None,
                        reward: self.mid_decode_reward,
                    });
                    continue;
                };
                let index = self.mdp.action_index(s, action).ok_or_else(|| Error::IllegalAction {
                    state: s,
                    action: alphabet.format(action),
                })?;
                let o = self.mdp.sample_outcome(s, index, rng.gen());
                trace(&TraceRecord {
                    t,
                    s,
                    q: q.to_string(),
                    b: b as u8,
                    decoded: alphabet.format(d.emitted()),
                    action: Some(alphabet.format(action)),
                    reward: o.reward,
                });
                trajectory.steps.push(Step {
                    state: s,
                    action: action.to_vec(),
                    next_state: o.next,
                    reward: o.reward,
                    bits: d.consumed().len(),
                });
                s = o.next;
                break;
            }
        }
        Ok(trajectory)
    }
}

/// `Π = uplift(π)` for a model and MDP.
pub fn uplift<P, M>(pi: &P, model: &M, mdp: &Mdp) -> Result<ExternalPolicy>
where
    P: InternalPolicy + ?Sized,
    M: ActionModel + ?Sized,
{
    InternalEnvironment::new(mdp, model)?.uplift(pi)
}

/// An internal policy whose uplift under `model` is `ext`.
pub fn internalize_policy<M: ActionModel + ?Sized>(ext: &ExternalPolicy, model: &M, mdp: &Mdp) -> Result<TabularInternalPolicy> {
    InternalEnvironment::new(mdp, model)?.internalize(ext)
}

#[cfg(test)]
mod tests;
