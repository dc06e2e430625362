use serde::{Deserialize, Serialize};

use super::bits::BitString;
use super::interval::{cumulative, quantize, Interval, Rescale, PRECISION_BITS};
use crate::alphabet::Symbol;
use crate::error::{Error, Result};
use crate::model::{ActionModel, StateId};

/// Output of [`encode`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Codeword {
    pub bits: BitString,
    /// Number of symbols encoded; a decoder may emit more than this many
    /// symbols from `bits` when it keeps decoding past the last terminal.
    pub source_length: usize,
}

/// Quantized conditional of `model` at `(state, prefix)` as cumulative
/// frequencies.
pub(crate) fn quantized_cumulative<M: ActionModel + ?Sized>(model: &M, state: StateId, prefix: &[Symbol]) -> Result<Vec<u32>> {
    Ok(cumulative(&quantize(&model.distribution(state, prefix)?)?))
}

/// Narrowing of the coding interval along a symbol string, tracking the
/// frame the interval lives in: the settled output bits plus the count of
/// pending middle rescalings.
#[derive(Debug, Clone)]
pub(crate) struct IntervalWalk {
    pub interval: Interval,
    pub settled: Vec<bool>,
    pub pending: usize,
    pub rescales: usize,
}

impl IntervalWalk {
    pub fn new() -> Self {
        Self {
            interval: Interval::FULL,
            settled: Vec::new(),
            pending: 0,
            rescales: 0,
        }
    }

    /// Narrows to the symbol `y` under cumulative frequencies `cum`.
    /// Returns `false` when `y` has zero frequency.
    pub fn push(&mut self, cum: &[u32], y: Symbol) -> bool {
        let i = y.index();
        let Some(child) = self.interval.child(cum[i], cum[i + 1]) else {
            return false;
        };
        self.interval = child;
        while let Some(step) = self.interval.next_rescale() {
            self.interval.rescale(step);
            self.rescales += 1;
            match step {
                Rescale::Lower => self.settle(false),
                Rescale::Upper => self.settle(true),
                Rescale::Middle => self.pending += 1,
            }
        }
        true
    }

    fn settle(&mut self, bit: bool) {
        self.settled.push(bit);
        self.settled.extend(std::iter::repeat_n(!bit, self.pending));
        self.pending = 0;
    }

    /// Exact width of the current interval relative to `[0, 1)`.
    pub fn probability(&self) -> f64 {
        self.interval.width() as f64 * (-((PRECISION_BITS as usize + self.rescales) as f64)).exp2()
    }

    /// `⌈-log₂ width⌉`, computed in integers.
    pub fn ceil_neg_log2(&self) -> usize {
        let w = self.interval.width();
        PRECISION_BITS as usize + self.rescales - (63 - w.leading_zeros() as usize)
    }

    /// Shortest bitstring (of at least one bit) whose dyadic interval lies
    /// inside the current interval.
    pub fn shortest_tag(&self) -> BitString {
        let min_len = if self.pending == 0 && !self.settled.is_empty() { 0 } else { 1 };
        let Interval { low, high } = self.interval;
        let (len, pos) = (min_len..=PRECISION_BITS)
            .find_map(|len| {
                let unit = 1u64 << (PRECISION_BITS - len);
                let start = low.div_ceil(unit) * unit;
                (start + unit - 1 <= high).then_some((len, start))
            })
            .expect("a single unit always fits");
        let frame_bits: Vec<bool> = (0..len).map(|i| (pos >> (PRECISION_BITS - 1 - i)) & 1 == 1).collect();
        let mut out = self.settled.clone();
        if let Some((&first, rest)) = frame_bits.split_first() {
            out.push(first);
            out.extend(std::iter::repeat_n(!first, self.pending));
            out.extend_from_slice(rest);
        }
        BitString::from_bits(out)
    }
}

/// Walks `x` (one or more consecutive actions) through the coder.
pub(crate) fn walk<M: ActionModel + ?Sized>(model: &M, state: StateId, x: &[Symbol]) -> Result<IntervalWalk> {
    let terminal = model.alphabet().terminal();
    let mut w = IntervalWalk::new();
    let mut start = 0;
    for (i, &y) in x.iter().enumerate() {
        model.alphabet().check(y)?;
        let cum = quantized_cumulative(model, state, &x[start..i])?;
        if !w.push(&cum, y) {
            return Err(Error::ZeroProbability { position: i });
        }
        if y == terminal {
            start = i + 1;
        }
    }
    Ok(w)
}

/// Arithmetic-encodes `x` under `ρ(· | state)`.
///
/// The codeword is the shortest bitstring found in the final frame whose
/// dyadic interval lies within the interval of `x`. Its length is at most
/// `⌈-log₂ ρ_q(x)⌉ + 1`, one bit below the flush bound.
pub fn encode<M: ActionModel + ?Sized>(model: &M, state: StateId, x: &[Symbol]) -> Result<Codeword> {
    let w = walk(model, state, x)?;
    Ok(Codeword {
        bits: w.shortest_tag(),
        source_length: x.len(),
    })
}

/// `ρ_q(x | state)`: the width of the interval the coder assigns to `x`.
pub fn quantized_probability<M: ActionModel + ?Sized>(model: &M, state: StateId, x: &[Symbol]) -> Result<f64> {
    Ok(walk(model, state, x)?.probability())
}

/// `⌈-log₂ ρ_q(x | state)⌉`, exact.
pub fn quantized_codelength<M: ActionModel + ?Sized>(model: &M, state: StateId, x: &[Symbol]) -> Result<usize> {
    Ok(walk(model, state, x)?.ceil_neg_log2())
}
