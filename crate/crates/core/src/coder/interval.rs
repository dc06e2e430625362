//! Integer interval arithmetic shared by the encoder and the decoder.
//!
//! Intervals are inclusive `[low, high]` ranges of 32-bit fixed-point
//! positions inside the current frame, held in 64-bit registers.
//! Conditionals are quantized to 16-bit frequencies; every symbol with
//! positive probability keeps at least one unit.

use crate::error::{Error, Result};

pub const PRECISION_BITS: u32 = 32;
pub const WHOLE: u64 = 1 << PRECISION_BITS;
pub const HALF: u64 = WHOLE / 2;
pub const QUARTER: u64 = WHOLE / 4;

pub const FREQUENCY_BITS: u32 = 16;
pub const FREQUENCY_TOTAL: u32 = 1 << FREQUENCY_BITS;

/// Quantizes a probability vector to integer frequencies summing to
/// [`FREQUENCY_TOTAL`]. Zero stays zero, positive entries get at least one
/// unit, and dyadic probabilities at or above `2^-16` are represented exactly.
pub fn quantize(probs: &[f64]) -> Result<Vec<u32>> {
    let total = FREQUENCY_TOTAL as i64;
    let mut freqs: Vec<i64> = probs
        .iter()
        .map(|&p| {
            if !(p.is_finite() && p >= 0.0) {
                Err(Error::Precondition(format!("invalid probability {p}")))
            } else if p == 0.0 {
                Ok(0)
            } else {
                Ok(((p * total as f64).round() as i64).max(1))
            }
        })
        .collect::<Result<_>>()?;
    let positive = freqs.iter().filter(|&&f| f > 0).count() as i64;
    if positive == 0 {
        return Err(Error::Precondition("distribution has no positive entry".into()));
    }
    if positive > total {
        return Err(Error::Precondition("more symbols than quantization units".into()));
    }
    let mut diff = total - freqs.iter().sum::<i64>();
    // Give any surplus to the largest entry; take any deficit from the
    // largest entries, never pushing one below a single unit.
    while diff != 0 {
        let (i, _) = freqs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("non-empty");
        if diff > 0 {
            freqs[i] += diff;
            diff = 0;
        } else {
            let take = (-diff).min(freqs[i] - 1);
            freqs[i] -= take;
            diff += take;
        }
    }
    Ok(freqs.into_iter().map(|f| f as u32).collect())
}

/// Cumulative frequencies: `cum[i]` is the mass of symbols before `i`, and
/// `cum[len] == FREQUENCY_TOTAL`.
pub fn cumulative(freqs: &[u32]) -> Vec<u32> {
    let mut cum = Vec::with_capacity(freqs.len() + 1);
    let mut acc = 0;
    cum.push(0);
    for &f in freqs {
        acc += f;
        cum.push(acc);
    }
    cum
}

/// One rescaling step. Each doubles the interval width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rescale {
    /// Interval inside `[0, 1/2)`: the next output bit is 0.
    Lower,
    /// Interval inside `[1/2, 1)`: the next output bit is 1.
    Upper,
    /// Interval inside `[1/4, 3/4)`: the next bit is pending.
    Middle,
}

impl Rescale {
    /// Maps a frame position through the rescaling.
    #[inline]
    pub fn apply(self, x: u64) -> u64 {
        match self {
            Rescale::Lower => 2 * x,
            Rescale::Upper => 2 * (x - HALF),
            Rescale::Middle => 2 * (x - QUARTER),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Interval {
    pub low: u64,
    pub high: u64,
}

impl Interval {
    pub const FULL: Interval = Interval { low: 0, high: WHOLE - 1 };

    #[inline]
    pub fn width(&self) -> u64 {
        self.high - self.low + 1
    }

    /// Sub-interval of the symbol whose cumulative bounds are `cum_lo..cum_hi`.
    /// Empty when the symbol has zero frequency.
    #[inline]
    pub fn child(&self, cum_lo: u32, cum_hi: u32) -> Option<Interval> {
        if cum_lo == cum_hi {
            return None;
        }
        let w = self.width();
        let low = self.low + ((w * cum_lo as u64) >> FREQUENCY_BITS);
        let high = self.low + ((w * cum_hi as u64) >> FREQUENCY_BITS) - 1;
        Some(Interval { low, high })
    }

    #[inline]
    pub fn next_rescale(&self) -> Option<Rescale> {
        if self.high < HALF {
            Some(Rescale::Lower)
        } else if self.low >= HALF {
            Some(Rescale::Upper)
        } else if self.low >= QUARTER && self.high < HALF + QUARTER {
            Some(Rescale::Middle)
        } else {
            None
        }
    }

    #[inline]
    pub fn rescale(&mut self, step: Rescale) {
        self.low = step.apply(self.low);
        self.high = step.apply(self.high) + 1;
    }

    #[inline]
    pub fn contains_range(&self, low: u64, high: u64) -> bool {
        self.low <= low && high <= self.high
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dyadic_probabilities_are_exact() {
        assert_eq!(quantize(&[0.25; 4]).unwrap(), vec![16384; 4]);
        assert_eq!(quantize(&[0.5, 0.0, 0.5]).unwrap(), vec![32768, 0, 32768]);
        assert_eq!(quantize(&[1.0, 0.0]).unwrap(), vec![65536, 0]);
    }

    #[test]
    fn tiny_probabilities_keep_one_unit() {
        let f = quantize(&[1.0 - 2e-9, 1e-9, 1e-9]).unwrap();
        assert_eq!(f, vec![65534, 1, 1]);
    }

    #[test]
    fn thirds_sum_to_total() {
        let f = quantize(&[1.0 / 3.0; 3]).unwrap();
        assert_eq!(f.iter().sum::<u32>(), FREQUENCY_TOTAL);
        assert!(f.iter().all(|&x| x >= 21845));
    }

    #[test]
    fn children_partition_the_parent() {
        let parent = Interval {
            low: 12345,
            high: 12345 + 3_000_000_000,
        };
        let cum = cumulative(&quantize(&[0.3, 0.0, 0.2, 0.5]).unwrap());
        let kids: Vec<_> = (0..4).filter_map(|i| parent.child(cum[i], cum[i + 1])).collect();
        assert_eq!(kids.len(), 3);
        assert_eq!(kids[0].low, parent.low);
        assert_eq!(kids.last().unwrap().high, parent.high);
        for w in kids.windows(2) {
            assert_eq!(w[0].high + 1, w[1].low);
        }
    }

    #[test]
    fn rescaling_doubles_width() {
        let mut i = Interval {
            low: QUARTER + 5,
            high: HALF + 7,
        };
        let w = i.width();
        let step = i.next_rescale().unwrap();
        assert_eq!(step, Rescale::Middle);
        i.rescale(step);
        assert_eq!(i.width(), 2 * w);
    }
}
