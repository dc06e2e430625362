use super::bits::BitString;
use super::encoder::quantized_cumulative;
use super::interval::{Interval, PRECISION_BITS};
use crate::alphabet::Symbol;
use crate::error::{Error, Result};
use crate::model::{ActionModel, StateId};

/// Rescalings per symbol never exceed this: a child keeps at least
/// `2^(30-16)` units and rescaling stops once the width passes `2^30`.
const MAX_RESCALES_PER_SYMBOL: usize = 18;

/// Upper bound on the bits a decoder can consume between two terminals for
/// any model over an alphabet with max action length `k`.
pub fn decode_depth_limit(k: usize) -> usize {
    PRECISION_BITS as usize + MAX_RESCALES_PER_SYMBOL * k
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    /// Stop at the first terminal; further bits are rejected.
    FirstAction,
    /// Keep decoding subsequent actions from the same state.
    Stream,
}

/// Incremental arithmetic decoder.
///
/// The bits consumed so far, `q`, pin the tag interval
/// `[0.q, 0.q + 2^-|q|)`. A symbol is emitted exactly when the whole tag
/// interval lies inside that symbol's coding interval. The tag is held in
/// the coordinates of the current frame; while the decoder waits for input
/// it spans more than one frame unit, so 32 fraction bits always suffice.
pub struct Decoder<'m, M: ActionModel + ?Sized> {
    model: &'m M,
    state: StateId,
    mode: DecodeMode,
    interval: Interval,
    tag_low: u64,
    tag_exp: u32,
    prefix: Vec<Symbol>,
    cum: Option<Vec<u32>>,
    action_informative: bool,
    emitted: Vec<Symbol>,
    consumed: BitString,
    bits_since_terminal: usize,
    terminals: usize,
    depth_limit: usize,
}

impl<M: ActionModel + ?Sized> Clone for Decoder<'_, M> {
    fn clone(&self) -> Self {
        Self {
            model: self.model,
            state: self.state,
            mode: self.mode,
            interval: self.interval,
            tag_low: self.tag_low,
            tag_exp: self.tag_exp,
            prefix: self.prefix.clone(),
            cum: self.cum.clone(),
            action_informative: self.action_informative,
            emitted: self.emitted.clone(),
            consumed: self.consumed.clone(),
            bits_since_terminal: self.bits_since_terminal,
            terminals: self.terminals,
            depth_limit: self.depth_limit,
        }
    }
}

impl<'m, M: ActionModel + ?Sized> Decoder<'m, M> {
    pub fn new(model: &'m M, state: StateId, mode: DecodeMode) -> Self {
        Self {
            model,
            state,
            mode,
            interval: Interval::FULL,
            tag_low: 0,
            tag_exp: 0,
            prefix: Vec::new(),
            cum: None,
            action_informative: false,
            emitted: Vec::new(),
            consumed: BitString::new(),
            bits_since_terminal: 0,
            terminals: 0,
            depth_limit: decode_depth_limit(model.alphabet().max_action_length()),
        }
    }

    pub fn with_depth_limit(mut self, limit: usize) -> Self {
        self.depth_limit = limit;
        self
    }

    pub fn state(&self) -> StateId {
        self.state
    }

    pub fn model(&self) -> &'m M {
        self.model
    }

    /// Symbols decoded with certainty so far, `D_ρ(q | s)`.
    pub fn emitted(&self) -> &[Symbol] {
        &self.emitted
    }

    pub fn consumed(&self) -> &BitString {
        &self.consumed
    }

    /// Number of terminals emitted so far.
    pub fn terminals(&self) -> usize {
        self.terminals
    }

    pub fn is_complete(&self) -> bool {
        self.terminals > 0
    }

    /// The first decoded action, terminal included, once complete.
    pub fn first_action(&self) -> Option<&[Symbol]> {
        let terminal = self.model.alphabet().terminal();
        let end = self.emitted.iter().position(|&s| s == terminal)?;
        Some(&self.emitted[..=end])
    }

    fn current_cumulative(&mut self) -> Result<&[u32]> {
        if self.cum.is_none() {
            self.cum = Some(quantized_cumulative(self.model, self.state, &self.prefix)?);
        }
        Ok(self.cum.as_deref().expect("filled above"))
    }

    /// Consumes one bit and returns the symbols it made certain.
    pub fn feed_bit(&mut self, bit: bool) -> Result<Vec<Symbol>> {
        if self.mode == DecodeMode::FirstAction && self.is_complete() {
            return Err(Error::DecoderComplete);
        }
        if self.bits_since_terminal >= self.depth_limit {
            return Err(Error::DepthExceeded {
                depth: self.bits_since_terminal + 1,
                bound: self.depth_limit,
            });
        }
        if self.tag_exp >= PRECISION_BITS {
            // Only reachable when every action carries zero information.
            return Err(Error::ZeroInformationAction);
        }
        self.tag_exp += 1;
        if bit {
            self.tag_low += 1 << (PRECISION_BITS - self.tag_exp);
        }
        self.consumed.push(bit);
        self.bits_since_terminal += 1;

        let start = self.emitted.len();
        let terminal = self.model.alphabet().terminal();
        loop {
            if self.mode == DecodeMode::FirstAction && self.is_complete() {
                break;
            }
            let tag_low = self.tag_low;
            let tag_high = tag_low + (1u64 << (PRECISION_BITS - self.tag_exp)) - 1;
            let interval = self.interval;
            let cum = self.current_cumulative()?;
            let (index, child) = (0..cum.len() - 1)
                .filter_map(|i| interval.child(cum[i], cum[i + 1]).map(|c| (i, c)))
                .find(|(_, c)| c.low <= tag_low && tag_low <= c.high)
                .expect("tag interval lies inside the coding interval");
            if tag_high > child.high {
                break;
            }
            if child.width() < interval.width() {
                self.action_informative = true;
            }
            self.interval = child;
            self.cum = None;
            while let Some(step) = self.interval.next_rescale() {
                self.interval.rescale(step);
                self.tag_low = step.apply(self.tag_low);
                self.tag_exp -= 1;
            }
            let y = Symbol(index as u16);
            self.emitted.push(y);
            if y == terminal {
                self.prefix.clear();
                self.terminals += 1;
                self.bits_since_terminal = 0;
                let informative = std::mem::take(&mut self.action_informative);
                // A zero-information action would repeat forever; emit it
                // once per consumed bit.
                if !informative {
                    break;
                }
            } else {
                self.prefix.push(y);
            }
        }
        Ok(self.emitted[start..].to_vec())
    }

    pub fn feed(&mut self, bits: &BitString) -> Result<Vec<Symbol>> {
        let start = self.emitted.len();
        for b in bits.iter() {
            self.feed_bit(b)?;
        }
        Ok(self.emitted[start..].to_vec())
    }
}

/// `D_ρ(q | s)`: everything a stream decoder emits after consuming `q`.
pub fn decode<M: ActionModel + ?Sized>(model: &M, state: StateId, q: &BitString) -> Result<Vec<Symbol>> {
    let mut d = Decoder::new(model, state, DecodeMode::Stream);
    d.feed(q)?;
    Ok(d.emitted)
}

/// Decodes a codeword back to its `source_length` symbols.
pub fn decode_codeword<M: ActionModel + ?Sized>(model: &M, state: StateId, codeword: &super::Codeword) -> Result<Vec<Symbol>> {
    let mut emitted = decode(model, state, &codeword.bits)?;
    if emitted.len() < codeword.source_length {
        return Err(Error::Format(format!(
            "codeword decodes to {} symbols, expected {}",
            emitted.len(),
            codeword.source_length
        )));
    }
    emitted.truncate(codeword.source_length);
    Ok(emitted)
}
