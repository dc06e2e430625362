use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::coder::encode;
use crate::instances::{self, InstanceSizes};
use crate::mdp::{q_value, v_value, Outcome};
use crate::model::{CategoricalActionModel, UniformActionModel};

/// One state, four single-symbol actions; each action moves to state
/// `i % 2` and pays `i`.
fn nsew() -> (Mdp, UniformActionModel) {
    let alphabet = SymbolAlphabet::with_terminal(&["N", "S", "E", "W"], 2).unwrap();
    let actions: Vec<_> = ["N <T>", "S <T>", "E <T>", "W <T>"]
        .iter()
        .map(|a| alphabet.parse(a).unwrap())
        .collect();
    let row: Vec<Vec<Outcome>> = (0..4)
        .map(|i| {
            vec![Outcome {
                next: i % 2,
                reward: i as f64,
                probability: 1.0,
            }]
        })
        .collect();
    let mdp = Mdp::new(alphabet.clone(), vec![actions.clone(); 2], vec![row.clone(), row], 0).unwrap();
    (mdp, UniformActionModel::new(alphabet, vec![actions]).unwrap())
}

/// Intervals [0, .55), [.55, .7), [.7, 1): `b` is reached by 1001 and 1010.
fn split_action() -> (Mdp, CategoricalActionModel) {
    let alphabet = SymbolAlphabet::with_terminal(&["a", "b", "c"], 2).unwrap();
    let act = |s: &str| alphabet.parse(s).unwrap();
    let actions = vec![act("a <T>"), act("b <T>"), act("c <T>")];
    let model = CategoricalActionModel::new(alphabet.clone(), vec![actions.iter().cloned().zip([0.55, 0.15, 0.30]).collect()]).unwrap();
    let kernel = vec![(0..3)
        .map(|i| {
            vec![Outcome {
                next: 0,
                reward: i as f64,
                probability: 1.0,
            }]
        })
        .collect()];
    (Mdp::new(alphabet, vec![actions], kernel, 0).unwrap(), model)
}

/// Value by recursing over the internal kernel itself, without the bit tree.
fn brute_value<M: ActionModel + ?Sized, P: InternalPolicy>(env: &InternalEnvironment<'_, M>, pi: &P, sq: &InternalState, m: usize) -> f64 {
    if m == 0 {
        return 0.0;
    }
    [false, true]
        .iter()
        .map(|&b| pi.probability(sq.state, &sq.bits, b).unwrap() * brute_q(env, pi, sq, b, m))
        .sum()
}

fn brute_q<M: ActionModel + ?Sized, P: InternalPolicy>(
    env: &InternalEnvironment<'_, M>,
    pi: &P,
    sq: &InternalState,
    b: bool,
    m: usize,
) -> f64 {
    env.kernel(sq, b)
        .unwrap()
        .iter()
        .map(|(next, r, p)| {
            let left = if next.bits.is_empty() { m - 1 } else { m };
            p * (r + brute_value(env, pi, next, left))
        })
        .sum()
}

#[test]
fn tau_examples() {
    let alphabet = SymbolAlphabet::with_terminal(&["a6", "Ba4", "N"], 5).unwrap();
    let p = |s: &str| alphabet.parse(s).unwrap();
    assert_eq!(tau(&alphabet, &p("a6 <T> Ba4 <T>")).unwrap(), p("a6"));
    assert_eq!(tau(&alphabet, &p("<T>")).unwrap(), vec![]);
    assert_eq!(tau(&alphabet, &p("N <T>")).unwrap(), p("N"));
    assert!(tau(&alphabet, &p("N a6")).is_err());
}

#[test]
fn mid_decode_and_completing_steps() {
    let (mdp, model) = nsew();
    let env = InternalEnvironment::new(&mdp, &model).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let step = env.step(&InternalState::root(0), true, &mut rng).unwrap();
    assert_eq!(
        step.next,
        InternalState {
            state: 0,
            bits: "1".parse().unwrap()
        }
    );
    assert_eq!((step.reward, step.action), (0.0, None));
    // "11" completes W, the fourth action.
    let step = env.step(&step.next, true, &mut rng).unwrap();
    assert_eq!(step.next, InternalState::root(1));
    assert_eq!(step.reward, 3.0);
    assert_eq!(step.action, Some(mdp.actions(0)[3].clone()));
}

#[test]
fn stepping_past_a_completed_action_is_rejected() {
    let (mdp, model) = nsew();
    let env = InternalEnvironment::new(&mdp, &model).unwrap();
    let sq = InternalState {
        state: 0,
        bits: "01".parse().unwrap(),
    };
    assert!(matches!(env.transition(&sq, false), Err(Error::Precondition(_))));
}

#[test]
fn kernel_rows_are_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let (mdp, model) = instances::random_mdp_with_categorical_model(&mut rng, InstanceSizes::default()).unwrap();
        let env = InternalEnvironment::new(&mdp, &model).unwrap();
        for s in 0..mdp.num_states() {
            for d in decodable_set(&model, s).unwrap() {
                for len in 0..d.bits.len() {
                    let sq = InternalState {
                        state: s,
                        bits: d.bits.prefix(len),
                    };
                    for b in [false, true] {
                        let row = env.kernel(&sq, b).unwrap();
                        let total: f64 = row.iter().map(|r| r.2).sum();
                        assert!((total - 1.0).abs() < 1e-12);
                        if row.iter().any(|(next, _, _)| !next.bits.is_empty()) {
                            assert_eq!(row.len(), 1);
                            assert_eq!(row[0].1, 0.0);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn completing_step_frequencies_follow_kernel() {
    let alphabet = SymbolAlphabet::with_terminal(&["go"], 2).unwrap();
    let go = alphabet.parse("go <T>").unwrap();
    let row = vec![
        Outcome {
            next: 0,
            reward: 0.0,
            probability: 0.5,
        },
        Outcome {
            next: 1,
            reward: 1.0,
            probability: 0.3,
        },
        Outcome {
            next: 2,
            reward: 2.0,
            probability: 0.2,
        },
    ];
    let mdp = Mdp::new(alphabet.clone(), vec![vec![go.clone()]; 3], vec![vec![row.clone()]; 3], 0).unwrap();
    let model = UniformActionModel::new(alphabet, vec![vec![go]]).unwrap();
    let env = InternalEnvironment::new(&mdp, &model).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 100_000;
    let mut counts = [0usize; 3];
    for _ in 0..n {
        counts[env.step(&InternalState::root(0), rng.gen(), &mut rng).unwrap().next.state] += 1;
    }
    let tv: f64 = counts
        .iter()
        .zip(&row)
        .map(|(&c, o)| (c as f64 / n as f64 - o.probability).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv <= 0.01, "tv = {tv}");
}

#[test]
fn uniform_bits_uplift_to_uniform_actions() {
    let (mdp, model) = nsew();
    let pi = uplift(&UniformInternalPolicy, &model, &mdp).unwrap();
    assert_eq!(pi.row(0), &[0.25; 4]);
}

#[test]
fn uplift_sums_over_every_bitstring_of_an_action() {
    let (mdp, model) = split_action();
    let pi = HashedInternalPolicy { seed: 3 };
    let uplifted = uplift(&pi, &model, &mdp).unwrap();
    let mut oracle = vec![0.0; 3];
    let mut b_paths = 0;
    for d in decodable_set(&model, 0).unwrap() {
        let mut p = 1.0;
        for (i, b) in d.bits.iter().enumerate() {
            p *= pi.probability(0, &d.bits.prefix(i), b).unwrap();
        }
        let a = mdp.action_index(0, &d.action).unwrap();
        oracle[a] += p;
        b_paths += (a == 1) as usize;
    }
    assert!(b_paths >= 2);
    for (u, o) in uplifted.row(0).iter().zip(&oracle) {
        assert!((u - o).abs() < 1e-15);
    }
}

#[test]
fn codeword_policy_uplifts_to_point_mass() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let (mdp, model) = instances::random_mdp_with_categorical_model(&mut rng, InstanceSizes::default()).unwrap();
        let choice: Vec<usize> = (0..mdp.num_states()).map(|s| rng.gen_range(0..mdp.actions(s).len())).collect();
        let codewords = choice
            .iter()
            .enumerate()
            .map(|(s, &a)| encode(&model, s, &mdp.actions(s)[a]).unwrap().bits)
            .collect();
        let uplifted = uplift(&CodewordPolicy::new(codewords), &model, &mdp).unwrap();
        assert_eq!(uplifted, ExternalPolicy::deterministic(&mdp, &choice).unwrap());
    }
}

#[test]
fn internal_values_match_kernel_recursion() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sizes = InstanceSizes {
        states: 3,
        max_actions: 3,
        symbols: 2,
        max_action_length: 3,
    };
    for i in 0..8 {
        let (mdp, model) = instances::random_mdp_with_categorical_model(&mut rng, sizes).unwrap();
        let mid = if i % 2 == 0 { 0.0 } else { 0.25 };
        let env = InternalEnvironment::new(&mdp, &model).unwrap().with_mid_decode_reward(mid);
        let pi = HashedInternalPolicy { seed: i };
        for m in 1..=2 {
            for s in 0..mdp.num_states() {
                let root = InternalState::root(s);
                for b in [false, true] {
                    let exact = env.q_value(&pi, &root, b, m).unwrap();
                    assert!((exact - brute_q(&env, &pi, &root, b, m)).abs() < 1e-12);
                }
                assert!((env.v_value(&pi, &root, m).unwrap() - brute_value(&env, &pi, &root, m)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn two_state_hand_enumeration() {
    // Uniform bits over NSEW: four equally likely two-bit paths.
    let (mdp, model) = nsew();
    let env = InternalEnvironment::new(&mdp, &model).unwrap();
    let root = InternalState::root(0);
    // One decision: mean reward (0 + 1 + 2 + 3) / 4.
    assert_eq!(env.v_value(&UniformInternalPolicy, &root, 1).unwrap(), 1.5);
    assert_eq!(env.v_value(&UniformInternalPolicy, &root, 2).unwrap(), 3.0);
    // Bit 1 leads to {E, W}; one bit later W pays 3.
    assert_eq!(env.q_value(&UniformInternalPolicy, &root, true, 1).unwrap(), 2.5);
    let sq = InternalState {
        state: 0,
        bits: "1".parse().unwrap(),
    };
    assert_eq!(env.q_value(&UniformInternalPolicy, &sq, true, 2).unwrap(), 3.0 + 1.5);
}

#[test]
fn completing_values_equal_external_q() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..10 {
        let (mdp, model) = instances::random_mdp_with_uniform_model(&mut rng, InstanceSizes::default()).unwrap();
        let env = InternalEnvironment::new(&mdp, &model).unwrap();
        let pi = HashedInternalPolicy { seed: i };
        let ext = env.uplift(&pi).unwrap();
        for m in 1..=3 {
            for (sq, _, a, v) in env.completing_q_values(&pi, m).unwrap() {
                let q = q_value(&mdp, &ext, sq.state, a, m).unwrap();
                assert!((q - v).abs() < 1e-9, "{q} vs {v}");
            }
        }
    }
}

#[test]
fn internalize_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let (mdp, model) = instances::random_mdp_with_categorical_model(&mut rng, InstanceSizes::default()).unwrap();
        let ext = instances::random_policy(&mut rng, &mdp);
        let env = InternalEnvironment::new(&mdp, &model).unwrap();
        let pi = env.internalize(&ext).unwrap();
        assert!(env.uplift(&pi).unwrap().max_abs_diff(&ext) < 1e-12);
    }
}

#[test]
fn internalized_point_mass_follows_its_codeword() {
    let (mdp, model) = nsew();
    let ext = ExternalPolicy::deterministic(&mdp, &[2, 2]).unwrap();
    let pi = internalize_policy(&ext, &model, &mdp).unwrap();
    // E is 10.
    assert_eq!(pi.one_probability(0, &BitString::new()).unwrap(), 1.0);
    assert_eq!(pi.one_probability(0, &"1".parse().unwrap()).unwrap(), 0.0);
    assert!(matches!(
        pi.one_probability(0, &"0".parse().unwrap()),
        Err(Error::ZeroMassPrefix { .. })
    ));
}

#[test]
fn internalized_uniform_is_fair() {
    let (mdp, model) = nsew();
    let pi = internalize_policy(&ExternalPolicy::uniform(&mdp), &model, &mdp).unwrap();
    assert_eq!(pi.len(), 6);
    for q in ["", "0", "1"] {
        assert_eq!(pi.one_probability(0, &q.parse().unwrap()).unwrap(), 0.5);
    }
}

#[test]
fn internalize_rejects_unreachable_support() {
    let (mdp, _) = nsew();
    let alphabet = mdp.alphabet().clone();
    let narrow = UniformActionModel::new(alphabet, vec![mdp.actions(0)[..2].to_vec()]).unwrap();
    let ext = ExternalPolicy::uniform(&mdp);
    assert!(internalize_policy(&ext, &narrow, &mdp).is_err());
}

#[test]
fn illegal_actions_raise() {
    let (mdp, _) = nsew();
    let alphabet = mdp.alphabet().clone();
    let wide = UniformActionModel::new(
        alphabet.clone(),
        vec![vec![alphabet.parse("<T>").unwrap(), alphabet.parse("S <T>").unwrap()]],
    )
    .unwrap();
    let env = InternalEnvironment::new(&mdp, &wide).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    // Bit 0 selects S, bit 1 the empty action.
    assert!(env.step(&InternalState::root(0), false, &mut rng).is_ok());
    assert!(matches!(
        env.step(&InternalState::root(0), true, &mut rng),
        Err(Error::IllegalAction { .. })
    ));
    assert!(env.uplift(&UniformInternalPolicy).is_err());
}

#[test]
fn alphabet_mismatch_is_rejected() {
    let (mdp, _) = nsew();
    let other = SymbolAlphabet::with_terminal(&["N"], 2).unwrap();
    let model = UniformActionModel::new(other.clone(), vec![vec![other.parse("N <T>").unwrap()]]).unwrap();
    assert!(InternalEnvironment::new(&mdp, &model).is_err());
}

#[test]
fn loop_is_replayable_and_preserves_reward() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mdp, model) = instances::random_mdp_with_categorical_model(&mut rng, InstanceSizes::default()).unwrap();
    let env = InternalEnvironment::new(&mdp, &model).unwrap();
    let pi = HashedInternalPolicy { seed: 1 };
    let run = |seed| {
        let mut records = Vec::new();
        let t = env
            .run_loop_traced(&pi, 0, 50, &mut ChaCha8Rng::seed_from_u64(seed), |r| records.push(r.clone()))
            .unwrap();
        (t, records)
    };
    let (t1, r1) = run(9);
    let (t2, r2) = run(9);
    assert_eq!((&t1, &r1), (&t2, &r2));
    assert_eq!(t1.steps.len(), 50);
    assert_eq!(r1.len(), t1.total_bits());
    assert_eq!(r1.iter().map(|r| r.reward).sum::<f64>(), t1.total_reward());
    assert_eq!(r1.iter().filter(|r| r.action.is_some()).count(), 50);
    for w in t1.steps.windows(2) {
        assert_eq!(w[0].next_state, w[1].state);
    }
}

#[test]
fn loop_action_frequencies_are_uniform() {
    let (mdp, model) = nsew();
    let env = InternalEnvironment::new(&mdp, &model).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let t = env.run_loop(&UniformInternalPolicy, 0, 100_000, &mut rng).unwrap();
    let mut counts: BTreeMap<(StateId, Vec<Symbol>), usize> = BTreeMap::new();
    let mut visits = [0usize; 2];
    for step in &t.steps {
        *counts.entry((step.state, step.action.clone())).or_default() += 1;
        visits[step.state] += 1;
        assert_eq!(step.bits, 2);
    }
    for ((s, _), c) in counts {
        assert!((c as f64 / visits[s] as f64 - 0.25).abs() <= 0.01);
    }
}

#[test]
fn loop_mean_return_matches_dp() {
    let (mdp, model) = nsew();
    let env = InternalEnvironment::new(&mdp, &model).unwrap();
    let pi = BiasedInternalPolicy { one: 0.7 };
    let ext = env.uplift(&pi).unwrap();
    let exact = v_value(&mdp, &ext, 0, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 20_000;
    let returns: Vec<f64> = (0..n).map(|_| env.run_loop(&pi, 0, 3, &mut rng).unwrap().total_reward()).collect();
    let mean = returns.iter().sum::<f64>() / n as f64;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((mean - exact).abs() <= 3.0 * (var / n as f64).sqrt(), "{mean} vs {exact}");
}
