//! Binary arithmetic coding driven by an [`ActionModel`](crate::model::ActionModel).
//!
//! All arithmetic is integer-only, so codewords and decoded strings are
//! identical on every platform. Every claim about code lengths refers to
//! `ρ_q`, the distribution the coder actually realizes: the width of the
//! integer interval it assigns to a string.

mod bits;
mod decoder;
mod encoder;
pub mod interval;

pub use bits::BitString;
pub use decoder::{decode, decode_codeword, decode_depth_limit, DecodeMode, Decoder};
pub use encoder::{encode, quantized_codelength, quantized_probability, Codeword};

use rand::Rng;

use crate::alphabet::Symbol;
use crate::error::{Error, Result};
use crate::model::{ActionModel, StateId};
use encoder::{quantized_cumulative, IntervalWalk};

/// Infinite stream of fair bits drawn from `rng`.
pub struct FairBits<R>(pub R);

impl<R: Rng> Iterator for FairBits<R> {
    type Item = bool;

    fn next(&mut self) -> Option<bool> {
        Some(self.0.gen())
    }
}

/// Feeds bits from `source` into a fresh decoder until the first action
/// completes. Returns the decoded string up to and including the first
/// terminal, and the number of bits consumed.
pub fn sample_action<M, I>(model: &M, state: StateId, source: &mut I) -> Result<(Vec<Symbol>, usize)>
where
    M: ActionModel + ?Sized,
    I: Iterator<Item = bool>,
{
    let mut d = Decoder::new(model, state, DecodeMode::FirstAction);
    while !d.is_complete() {
        let bit = source.next().ok_or(Error::SourceExhausted {
            consumed: d.consumed().len(),
        })?;
        d.feed_bit(bit)?;
    }
    let action = d.first_action().expect("complete").to_vec();
    Ok((action, d.consumed().len()))
}

/// Exact `ρ_q(a | s)` for every action the coder can produce, by walking the
/// symbol tree through the encoder's interval arithmetic.
pub fn quantized_action_distribution<M: ActionModel + ?Sized>(model: &M, state: StateId) -> Result<Vec<(Vec<Symbol>, f64)>> {
    let mut out = Vec::new();
    let mut prefix = Vec::new();
    quantized_rec(model, state, &mut prefix, IntervalWalk::new(), &mut out)?;
    Ok(out)
}

fn quantized_rec<M: ActionModel + ?Sized>(
    model: &M,
    state: StateId,
    prefix: &mut Vec<Symbol>,
    walk: IntervalWalk,
    out: &mut Vec<(Vec<Symbol>, f64)>,
) -> Result<()> {
    let cum = quantized_cumulative(model, state, prefix)?;
    let terminal = model.alphabet().terminal();
    for y in model.alphabet().symbols() {
        let mut next = walk.clone();
        if !next.push(&cum, y) {
            continue;
        }
        prefix.push(y);
        if y == terminal {
            out.push((prefix.clone(), next.probability()));
        } else {
            quantized_rec(model, state, prefix, next, out)?;
        }
        prefix.pop();
    }
    Ok(())
}

/// `⌈-log₂ p_min⌉ + 2`, with `p_min` the smallest quantized action
/// probability in `state`. Bounds the length of every codeword of a single
/// action.
pub fn codeword_length_bound<M: ActionModel + ?Sized>(model: &M, state: StateId) -> Result<usize> {
    let mut worst = 0;
    let mut prefix = Vec::new();
    codeword_bound_rec(model, state, &mut prefix, IntervalWalk::new(), &mut worst)?;
    Ok(worst + 2)
}

fn codeword_bound_rec<M: ActionModel + ?Sized>(
    model: &M,
    state: StateId,
    prefix: &mut Vec<Symbol>,
    walk: IntervalWalk,
    worst: &mut usize,
) -> Result<()> {
    let cum = quantized_cumulative(model, state, prefix)?;
    let terminal = model.alphabet().terminal();
    for y in model.alphabet().symbols() {
        let mut next = walk.clone();
        if !next.push(&cum, y) {
            continue;
        }
        if y == terminal {
            *worst = (*worst).max(next.ceil_neg_log2());
        } else {
            prefix.push(y);
            codeword_bound_rec(model, state, prefix, next, worst)?;
            prefix.pop();
        }
    }
    Ok(())
}

/// A minimal bitstring whose decoding first contains the terminal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodableString {
    pub bits: BitString,
    /// Decoded action, terminal included.
    pub action: Vec<Symbol>,
}

/// Visits the bit tree of `state` depth first, calling `leaf` for every
/// minimal bitstring that completes an action. `inner` sees every strict
/// prefix (decoding still in progress) before its children.
pub fn walk_bit_tree<'m, M, F, G>(model: &'m M, state: StateId, mut inner: F, mut leaf: G) -> Result<()>
where
    M: ActionModel + ?Sized,
    F: FnMut(&Decoder<'m, M>),
    G: FnMut(&Decoder<'m, M>),
{
    let root = Decoder::new(model, state, DecodeMode::FirstAction);
    let mut stack = vec![root];
    while let Some(d) = stack.pop() {
        inner(&d);
        for bit in [true, false] {
            let mut child = d.clone();
            child.feed_bit(bit)?;
            if child.is_complete() {
                leaf(&child);
            } else {
                stack.push(child);
            }
        }
    }
    Ok(())
}

/// The decodable set of `state`: minimal bitstrings whose decoding contains
/// the terminal, ordered lexicographically.
pub fn decodable_strings<M: ActionModel + ?Sized>(model: &M, state: StateId) -> Result<Vec<DecodableString>> {
    let mut out = Vec::new();
    walk_bit_tree(
        model,
        state,
        |_| {},
        |d| {
            out.push(DecodableString {
                bits: d.consumed().clone(),
                action: d.first_action().expect("complete").to_vec(),
            })
        },
    )?;
    out.sort_by(|a, b| a.bits.cmp(&b.bits));
    Ok(out)
}

/// Length of the longest bitstring needed to decode any action of `state`.
pub fn decode_depth_bound<M: ActionModel + ?Sized>(model: &M, state: StateId) -> Result<usize> {
    let mut n = 0;
    walk_bit_tree(model, state, |_| {}, |d| n = n.max(d.consumed().len()))?;
    Ok(n)
}

#[cfg(test)]
mod tests;
