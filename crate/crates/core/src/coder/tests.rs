use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

use super::encoder::{walk, IntervalWalk};
use super::interval::{Interval, PRECISION_BITS};
use super::*;
use crate::alphabet::SymbolAlphabet;
use crate::instances;
use crate::model::{AnyModel, CategoricalActionModel, NGramActionModel, UniformActionModel};

fn nsew() -> (UniformActionModel, Vec<Vec<Symbol>>) {
    let alphabet = SymbolAlphabet::with_terminal(&["N", "S", "E", "W"], 2).unwrap();
    let actions: Vec<_> = ["N <T>", "S <T>", "E <T>", "W <T>"]
        .iter()
        .map(|a| alphabet.parse(a).unwrap())
        .collect();
    (UniformActionModel::new(alphabet, vec![actions.clone()]).unwrap(), actions)
}

fn bits(s: &str) -> BitString {
    s.parse().unwrap()
}

/// Random n-gram model with 1..=5 non-terminal symbols and `k` in 2..=5.
fn random_model(rng: &mut ChaCha8Rng) -> NGramActionModel {
    let alphabet = instances::alphabet(rng.gen_range(1..=5), rng.gen_range(2..=5));
    instances::random_ngram(rng, &alphabet).unwrap()
}

/// Absolute interval `[lo, hi)` of a walk, scaled by `2^den`.
///
/// With `j` settled bits `S` and `p` pending middle rescalings the frame
/// coordinate `x` sits at `2^-j (S + 1/2 - 2^-(p+1) + x 2^-p)`.
fn absolute(w: &IntervalWalk) -> (u128, u128, u32) {
    let j = w.settled.len() as u32;
    let p = w.pending as u32;
    let s = w.settled.iter().fold(0u128, |acc, &b| acc << 1 | b as u128);
    let base = ((s << (p + 1)) + (1u128 << p) - 1) << PRECISION_BITS;
    let lo = base + 2 * w.interval.low as u128;
    let hi = base + 2 * (w.interval.high as u128 + 1);
    (lo, hi, PRECISION_BITS + 1 + j + p)
}

/// Whether the dyadic tag of `q` lies inside `[lo, hi) / 2^den`.
fn tag_inside(q: &BitString, (lo, hi, den): (u128, u128, u32)) -> bool {
    let n = q.len() as u32;
    let t = q.iter().fold(0u128, |acc, b| acc << 1 | b as u128);
    let d = den.max(n);
    assert!(d < 127, "oracle precision exceeded");
    let (t_lo, t_hi) = (t << (d - n), (t + 1) << (d - n));
    t_lo >= lo << (d - den) && t_hi <= hi << (d - den)
}

/// Independent decoder: extends the output one symbol at a time for as long
/// as the tag of `q` lies inside the extension's absolute interval. Only
/// valid for models in which every action carries information.
fn oracle_decode(model: &NGramActionModel, q: &BitString) -> Vec<Symbol> {
    let terminal = model.alphabet().terminal();
    let mut out = Vec::new();
    let mut start = 0;
    let mut w = IntervalWalk::new();
    'outer: loop {
        let cum = quantized_cumulative(model, 0, &out[start..]).unwrap();
        for y in model.alphabet().symbols() {
            let mut next = w.clone();
            if next.push(&cum, y) && tag_inside(q, absolute(&next)) {
                w = next;
                out.push(y);
                if y == terminal {
                    start = out.len();
                }
                continue 'outer;
            }
        }
        return out;
    }
}

#[test]
fn nsew_actions_take_two_bits() {
    let (model, actions) = nsew();
    for (i, a) in actions.iter().enumerate() {
        let cw = encode(&model, 0, a).unwrap();
        assert_eq!(cw.bits.len(), 2);
        assert_eq!(cw.bits, BitString::from_bits(vec![i >= 2, i % 2 == 1]));
        assert_eq!(decode_codeword(&model, 0, &cw).unwrap(), *a);
    }
}

#[test]
fn nsew_incremental_semantics() {
    let (model, actions) = nsew();
    let mut d = Decoder::new(&model, 0, DecodeMode::FirstAction);
    assert!(d.emitted().is_empty());
    assert!(d.feed_bit(false).unwrap().is_empty());
    assert_eq!(d.feed_bit(false).unwrap(), actions[0]);
    assert_eq!(d.feed_bit(true), Err(Error::DecoderComplete));
    assert_eq!(decode(&model, 0, &BitString::new()).unwrap(), vec![]);
}

#[test]
fn stream_mode_decodes_several_actions() {
    let (model, actions) = nsew();
    let out = decode(&model, 0, &bits("0111")).unwrap();
    assert_eq!(out, [actions[1].clone(), actions[3].clone()].concat());
}

#[test]
fn uniform_power_of_two_action_sets() {
    for j in 0..=5usize {
        let alphabet = instances::alphabet(2, j + 2);
        let n = 1usize << j;
        let actions: Vec<Vec<Symbol>> = (0..n)
            .map(|i| {
                let mut a: Vec<Symbol> = (0..j).map(|b| Symbol(((i >> (j - 1 - b)) & 1) as u16)).collect();
                a.push(alphabet.terminal());
                a
            })
            .collect();
        let model = UniformActionModel::new(alphabet, vec![actions.clone()]).unwrap();
        for a in &actions {
            let cw = encode(&model, 0, a).unwrap();
            assert_eq!(cw.bits.len(), j.max(1), "j = {j}");
            assert_eq!(decode_codeword(&model, 0, &cw).unwrap(), *a);
        }
    }
}

#[test]
fn forced_action_is_one_bit() {
    let alphabet = SymbolAlphabet::with_terminal(&["go"], 3).unwrap();
    let go = alphabet.parse("go go <T>").unwrap();
    let model = UniformActionModel::new(alphabet, vec![vec![go.clone()]]).unwrap();
    let cw = encode(&model, 0, &go).unwrap();
    assert_eq!(cw.bits.len(), 1);
    assert_eq!(decode_codeword(&model, 0, &cw).unwrap(), go);
    assert_eq!(quantized_probability(&model, 0, &go).unwrap(), 1.0);
    assert_eq!(codeword_length_bound(&model, 0).unwrap(), 2);
    let strings = decodable_strings(&model, 0).unwrap();
    assert_eq!(strings.len(), 2);
    assert!(strings.iter().all(|d| d.action == go && d.bits.len() == 1));
    let (a, used) = sample_action(&model, 0, &mut FairBits(ChaCha8Rng::seed_from_u64(0))).unwrap();
    assert_eq!((a, used), (go, 1));
}

#[test]
fn zero_information_actions_emit_once_per_bit() {
    let alphabet = SymbolAlphabet::with_terminal(&["go"], 1).unwrap();
    let t = alphabet.parse("<T>").unwrap();
    let model = UniformActionModel::new(alphabet, vec![vec![t.clone()]]).unwrap();
    assert_eq!(decode(&model, 0, &bits("010")).unwrap(), [t.clone(), t.clone(), t].concat());
}

#[test]
fn two_bitstrings_for_one_action() {
    // Intervals [0, .55), [.55, .7), [.7, 1): both 1001 and 1010 land in b.
    let alphabet = SymbolAlphabet::with_terminal(&["a", "b", "c"], 2).unwrap();
    let act = |s: &str| alphabet.parse(s).unwrap();
    let model = CategoricalActionModel::new(
        alphabet.clone(),
        vec![vec![(act("a <T>"), 0.55), (act("b <T>"), 0.15), (act("c <T>"), 0.30)]],
    )
    .unwrap();
    let strings = decodable_strings(&model, 0).unwrap();
    let find = |q: &str| strings.iter().find(|d| d.bits == bits(q)).map(|d| d.action.clone());
    assert_eq!(find("1001"), Some(act("b <T>")));
    assert_eq!(find("1010"), Some(act("b <T>")));
    assert_eq!(find("100"), None);
    assert_eq!(find("101"), None);
}

#[test]
fn depth_bounds_on_nsew() {
    let (model, _) = nsew();
    assert_eq!(codeword_length_bound(&model, 0).unwrap(), 4);
    assert_eq!(decode_depth_bound(&model, 0).unwrap(), 2);
    assert_eq!(decodable_strings(&model, 0).unwrap().len(), 4);
}

#[test]
fn decodable_set_agrees_with_encoder_on_dyadic_model() {
    let alphabet = SymbolAlphabet::with_terminal(&["x", "y"], 2).unwrap();
    let actions = vec![alphabet.parse("x <T>").unwrap(), alphabet.parse("y <T>").unwrap()];
    let model = UniformActionModel::new(alphabet, vec![actions.clone()]).unwrap();
    let strings = decodable_strings(&model, 0).unwrap();
    let encoded: Vec<DecodableString> = actions
        .iter()
        .map(|a| DecodableString {
            bits: encode(&model, 0, a).unwrap().bits,
            action: a.clone(),
        })
        .collect();
    assert_eq!(strings, encoded);
}

#[test]
fn source_exhaustion() {
    let (model, _) = nsew();
    let err = sample_action(&model, 0, &mut [false].into_iter()).unwrap_err();
    assert_eq!(err, Error::SourceExhausted { consumed: 1 });
}

#[test]
fn zero_probability_string_is_rejected() {
    let (model, _) = nsew();
    let alphabet = model.alphabet();
    let x = alphabet.parse("<T>").unwrap();
    assert_eq!(encode(&model, 0, &x), Err(Error::ZeroProbability { position: 0 }));
}

#[test]
fn depth_limit_is_enforced() {
    let alphabet = SymbolAlphabet::with_terminal(&["a", "b", "c"], 2).unwrap();
    let act = |s: &str| alphabet.parse(s).unwrap();
    let model = CategoricalActionModel::new(
        alphabet.clone(),
        vec![vec![(act("a <T>"), 1.0), (act("b <T>"), 1.0), (act("c <T>"), 1.0)]],
    )
    .unwrap();
    // The boundary at 1/3 is never resolved by 0101...
    let mut d = Decoder::new(&model, 0, DecodeMode::FirstAction).with_depth_limit(6);
    for i in 0..6 {
        d.feed_bit(i % 2 == 1).unwrap();
    }
    assert!(matches!(d.feed_bit(false), Err(Error::DepthExceeded { depth: 7, bound: 6 })));
}

#[test]
fn round_trip_and_length_bound_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..2000 {
        let model = random_model(&mut rng);
        let n = rng.gen_range(1..=3);
        let x = instances::sample_string(&mut rng, &model, 0, n).unwrap();
        let cw = encode(&model, 0, &x).unwrap();
        assert_eq!(decode_codeword(&model, 0, &cw).unwrap(), x);
        let bound = quantized_codelength(&model, 0, &x).unwrap();
        assert!(cw.bits.len() <= bound + 1, "{} > {} + 1", cw.bits.len(), bound);
        let p = quantized_probability(&model, 0, &x).unwrap();
        assert_eq!(bound, (-p.log2()).ceil() as usize);
    }
}

#[test]
fn quantized_probability_tracks_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..500 {
        let model = random_model(&mut rng);
        let x = instances::sample_string(&mut rng, &model, 0, 1).unwrap();
        let p = model.sequence_probability(0, &x).unwrap();
        let pq = quantized_probability(&model, 0, &x).unwrap();
        // Quantization error per symbol is far below 1%.
        assert!((pq / p - 1.0).abs() < 0.01 * x.len() as f64, "{p} vs {pq}");
    }
}

#[test]
fn matches_independent_interval_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..300 {
        let model = random_model(&mut rng);
        for _ in 0..5 {
            let len = rng.gen_range(0..40);
            let q: BitString = (0..len).map(|_| rng.gen::<bool>()).collect();
            assert_eq!(decode(&model, 0, &q).unwrap(), oracle_decode(&model, &q), "q = {q}");
        }
    }
}

#[test]
fn oracle_absolute_intervals_partition_unit_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let model = random_model(&mut rng);
        let cum = quantized_cumulative(&model, 0, &[]).unwrap();
        let mut edge = 0u128;
        for y in model.alphabet().symbols() {
            let mut w = IntervalWalk::new();
            if !w.push(&cum, y) {
                continue;
            }
            let (lo, hi, den) = absolute(&w);
            let d = 100;
            assert_eq!(lo << (d - den), edge);
            edge = hi << (d - den);
        }
        assert_eq!(edge, 1u128 << 100);
    }
}

#[test]
fn sampling_duality_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut models: Vec<AnyModel> = (0..40).map(|_| random_model(&mut rng).into()).collect();
    for _ in 0..40 {
        let alphabet = instances::alphabet(rng.gen_range(1..=4), rng.gen_range(2..=4));
        models.push(instances::random_categorical(&mut rng, &alphabet, 1, 5).unwrap().into());
    }
    for model in &models {
        let mut from_bits: BTreeMap<Vec<Symbol>, f64> = BTreeMap::new();
        let mut kraft = 0.0;
        for d in decodable_strings(model, 0).unwrap() {
            *from_bits.entry(d.action).or_default() += d.bits.dyadic_weight();
            kraft += d.bits.dyadic_weight();
        }
        let exact: BTreeMap<Vec<Symbol>, f64> = quantized_action_distribution(model, 0).unwrap().into_iter().collect();
        assert_eq!(from_bits.keys().collect::<Vec<_>>(), exact.keys().collect::<Vec<_>>());
        for (a, p) in &exact {
            assert!((from_bits[a] - p).abs() < 1e-12);
        }
        assert!((kraft - 1.0).abs() < 1e-12);
        assert!(decode_depth_bound(model, 0).unwrap() <= decode_depth_limit(model.alphabet().max_action_length()));
    }
}

#[test]
fn decodable_set_is_prefix_free() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..30 {
        let model = random_model(&mut rng);
        let strings = decodable_strings(&model, 0).unwrap();
        // Sorted order puts any prefix directly before some extension of it.
        for pair in strings.windows(2) {
            assert!(!pair[0].bits.is_prefix_of(&pair[1].bits));
        }
        for d in &strings {
            let e = decode(&model, 0, &d.bits).unwrap();
            assert!(d.action.len() <= e.len() && e[..d.action.len()] == d.action[..]);
            let parent = d.bits.prefix(d.bits.len() - 1);
            assert!(!decode(&model, 0, &parent).unwrap().contains(&model.alphabet().terminal()));
        }
    }
}

#[test]
fn codewords_stay_within_bound_of_every_action() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..30 {
        let model = random_model(&mut rng);
        let bound = codeword_length_bound(&model, 0).unwrap();
        for (a, _) in quantized_action_distribution(&model, 0).unwrap() {
            assert!(encode(&model, 0, &a).unwrap().bits.len() <= bound);
        }
    }
}

#[test]
fn empirical_sampling_matches_quantized_distribution() {
    let alphabet = SymbolAlphabet::with_terminal(&["a", "b", "c"], 2).unwrap();
    let act = |s: &str| alphabet.parse(s).unwrap();
    let model = CategoricalActionModel::new(
        alphabet.clone(),
        vec![vec![(act("a <T>"), 0.7), (act("b <T>"), 0.2), (act("c <T>"), 0.1)]],
    )
    .unwrap();
    let exact: BTreeMap<_, _> = quantized_action_distribution(&model, 0).unwrap().into_iter().collect();
    let mut source = FairBits(ChaCha8Rng::seed_from_u64(8));
    let n = 20_000;
    let mut counts: BTreeMap<Vec<Symbol>, usize> = BTreeMap::new();
    for _ in 0..n {
        *counts.entry(sample_action(&model, 0, &mut source).unwrap().0).or_default() += 1;
    }
    let tv: f64 = exact
        .iter()
        .map(|(a, p)| (counts.get(a).copied().unwrap_or(0) as f64 / n as f64 - p).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv < 0.02, "tv = {tv}");
}

#[test]
fn interval_child_widths_sum_to_parent() {
    let cum = [0, 1, 30000, 65535, 65536];
    let parent = Interval {
        low: 123,
        high: (1u64 << 32) - 77,
    };
    let total: u64 = (0..4).filter_map(|i| parent.child(cum[i], cum[i + 1])).map(|c| c.width()).sum();
    assert_eq!(total, parent.width());
}

proptest! {
    #[test]
    fn prefix_monotone_and_incremental(seed in any::<u64>(), raw in proptest::collection::vec(any::<bool>(), 0..48)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng);
        let mut d = Decoder::new(&model, 0, DecodeMode::Stream);
        let mut previous: Vec<Symbol> = Vec::new();
        let mut collected: Vec<Symbol> = Vec::new();
        for &b in &raw {
            collected.extend(d.feed_bit(b).unwrap());
            prop_assert!(d.emitted().starts_with(&previous));
            previous = d.emitted().to_vec();
        }
        let q = BitString::from_bits(raw);
        prop_assert_eq!(&collected, &previous);
        prop_assert_eq!(decode(&model, 0, &q).unwrap(), previous);
    }

    #[test]
    fn encode_is_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng);
        let x = instances::sample_string(&mut rng, &model, 0, 2).unwrap();
        prop_assert_eq!(encode(&model, 0, &x).unwrap(), encode(&model.clone(), 0, &x).unwrap());
        prop_assert_eq!(walk(&model, 0, &x).unwrap().rescales, walk(&model, 0, &x).unwrap().rescales);
    }
}
