//! Executable checks with reproducible reports.
//!
//! Every check measures one deviation and compares it with a tolerance.
//! Each accepts a `mutate` flag that deliberately breaks the property under
//! test, so a check that cannot fail is caught too.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alphabet::Symbol;
use crate::coder::{decode_codeword, encode, quantized_action_distribution, quantized_codelength, sample_action, BitString, FairBits};
use crate::error::{Error, Result};
use crate::instances::{self, InstanceSizes};
use crate::internal::{BiasedInternalPolicy, HashedInternalPolicy, InternalEnvironment, InternalPolicy, UniformInternalPolicy};
use crate::mdp::{q_table, v_value, Mdp};
use crate::model::{mixture_log_loss_regret, ActionModel, AnyModel, LegalityMasked, StateId};
use crate::multitask::{run_multitask, MultitaskConfig};
use crate::tasks::ToyTasks;

/// Largest horizon the exact checks accept.
pub const MAX_HORIZON: usize = 6;
/// Largest number of internal states per external state the exact checks accept.
pub const MAX_INTERNAL_STATES: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub check: String,
    pub instance: String,
    pub seed: Option<u64>,
    pub sizes: Option<InstanceSizes>,
    pub deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub skipped: bool,
    pub mutated: bool,
    pub runtime_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl VerificationReport {
    fn new(check: &str, instance: impl Into<String>, deviation: f64, tolerance: f64, started: Instant) -> Self {
        Self {
            check: check.to_string(),
            instance: instance.into(),
            seed: None,
            sizes: None,
            deviation,
            tolerance,
            passed: deviation <= tolerance,
            skipped: false,
            mutated: false,
            runtime_ms: started.elapsed().as_secs_f64() * 1e3,
            note: None,
        }
    }

    fn seeded(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    fn sized(mut self, sizes: InstanceSizes) -> Self {
        self.sizes = Some(sizes);
        self
    }

    fn mutated(mut self, mutated: bool) -> Self {
        self.mutated = mutated;
        self
    }

    fn noted(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// Equality of everything except the wall-clock runtime.
    pub fn same_outcome(&self, other: &Self) -> bool {
        Self {
            runtime_ms: 0.0,
            ..self.clone()
        } == Self {
            runtime_ms: 0.0,
            ..other.clone()
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("reports serialize")
    }
}

/// Reports as newline-delimited JSON.
pub fn reports_to_ndjson(reports: &[VerificationReport]) -> String {
    reports.iter().map(|r| r.to_json_line() + "\n").collect()
}

/// Fixed-width summary table.
pub fn summary_table(reports: &[VerificationReport]) -> String {
    let width = reports.iter().map(|r| r.check.len()).max().unwrap_or(5).max(5);
    let mut out = format!(
        "{:<width$}  {:<6}  {:>12}  {:>12}  {:>10}  instance\n",
        "check", "result", "deviation", "tolerance", "ms"
    );
    for r in reports {
        let result = match (r.skipped, r.passed) {
            (true, _) => "skip",
            (false, true) => "pass",
            (false, false) => "FAIL",
        };
        let _ = writeln!(
            out,
            "{:<width$}  {:<6}  {:>12.3e}  {:>12.3e}  {:>10.1}  {}",
            r.check, result, r.deviation, r.tolerance, r.runtime_ms, r.instance
        );
    }
    out
}

// ---------------------------------------------------------------------------
// Coder
// ---------------------------------------------------------------------------

/// Random string drawn for the coder checks: an n-gram model over at most
/// six symbols with `k ≤ 5`, and one to three consecutive actions.
pub fn random_coder_trial<R: Rng>(rng: &mut R) -> Result<(AnyModel, Vec<Symbol>)> {
    let alphabet = instances::alphabet(rng.gen_range(1..=5), rng.gen_range(2..=5));
    let model: AnyModel = if rng.gen_bool(0.8) {
        instances::random_ngram(rng, &alphabet)?.into()
    } else {
        instances::random_categorical(rng, &alphabet, 1, 5)?.into()
    };
    let actions = rng.gen_range(1..=3);
    let x = if matches!(model, AnyModel::Categorical(_)) {
        instances::sample_string(rng, &model, 0, 1)?
    } else {
        instances::sample_string(rng, &model, 0, actions)?
    };
    Ok((model, x))
}

/// Round trips `trials` random strings. Reports the number of mismatches
/// and, separately, the worst excess of codeword length over
/// `⌈-log₂ ρ_q(x)⌉`. The mutation drops the last codeword bit.
pub fn check_roundtrip(seed: u64, trials: usize, mutate: bool) -> Result<[VerificationReport; 2]> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0usize;
    let mut worst_excess = i64::MIN;
    for _ in 0..trials {
        let (model, x) = random_coder_trial(&mut rng)?;
        let mut cw = encode(&model, 0, &x)?;
        let ideal = quantized_codelength(&model, 0, &x)?;
        worst_excess = worst_excess.max(cw.bits.len() as i64 - ideal as i64);
        if mutate {
            cw.bits.pop();
        }
        if decode_codeword(&model, 0, &cw).ok().as_deref() != Some(&x[..]) {
            mismatches += 1;
        }
    }
    let instance = format!("{trials} random strings");
    Ok([
        VerificationReport::new("roundtrip", instance.clone(), mismatches as f64, 0.0, started)
            .seeded(seed)
            .mutated(mutate),
        VerificationReport::new("codelength", instance, worst_excess as f64, 2.0, started)
            .seeded(seed)
            .noted("deviation: max |C(x)| - ceil(-log2 rho_q(x))"),
    ])
}

/// Codewords of the uniform model over `2^j` actions: deviation is the
/// largest `| |C(a)| - j |`.
pub fn check_uniform_codelength(max_j: usize) -> Result<VerificationReport> {
    let started = Instant::now();
    let mut worst = 0usize;
    for j in 1..=max_j {
        let alphabet = instances::alphabet(2, j + 1);
        let actions: Vec<Vec<Symbol>> = (0..1usize << j)
            .map(|i| {
                let mut a: Vec<Symbol> = (0..j).map(|b| Symbol(((i >> (j - 1 - b)) & 1) as u16)).collect();
                a.push(alphabet.terminal());
                a
            })
            .collect();
        let model = crate::model::UniformActionModel::new(alphabet, vec![actions.clone()])?;
        for a in &actions {
            worst = worst.max(encode(&model, 0, a)?.bits.len().abs_diff(j));
        }
    }
    Ok(VerificationReport::new(
        "uniform_codelength",
        format!("2^j actions, j = 1..={max_j}"),
        worst as f64,
        0.0,
        started,
    ))
}

/// Total variation between actions sampled from fair bits and `ρ_q`.
/// The mutation feeds bits that are 1 with probability 0.6.
pub fn check_sampling<M: ActionModel + ?Sized>(
    model: &M,
    state: StateId,
    samples: usize,
    seed: u64,
    mutate: bool,
) -> Result<VerificationReport> {
    let started = Instant::now();
    let exact: BTreeMap<Vec<Symbol>, f64> = quantized_action_distribution(model, state)?.into_iter().collect();
    let p_min = exact.values().copied().fold(1.0, f64::min);
    if p_min < 0.05 {
        return Err(Error::Precondition(format!("smallest action probability {p_min} is below 0.05")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts: BTreeMap<Vec<Symbol>, usize> = BTreeMap::new();
    for _ in 0..samples {
        let (a, _) = if mutate {
            let mut biased = std::iter::repeat_with(|| rng.gen_bool(0.6));
            sample_action(model, state, &mut biased)?
        } else {
            sample_action(model, state, &mut FairBits(&mut rng))?
        };
        *counts.entry(a).or_default() += 1;
    }
    let tv = total_variation(&exact, &counts, samples);
    Ok(
        VerificationReport::new("sampling", format!("{} actions, N = {samples}", exact.len()), tv, 0.01, started)
            .seeded(seed)
            .mutated(mutate),
    )
}

fn total_variation(exact: &BTreeMap<Vec<Symbol>, f64>, counts: &BTreeMap<Vec<Symbol>, usize>, n: usize) -> f64 {
    let mut tv: f64 = exact
        .iter()
        .map(|(a, p)| (counts.get(a).copied().unwrap_or(0) as f64 / n as f64 - p).abs())
        .sum();
    tv += counts
        .iter()
        .filter(|(a, _)| !exact.contains_key(*a))
        .map(|(_, &c)| c as f64 / n as f64)
        .sum::<f64>();
    tv / 2.0
}

/// Prefix-freeness and Kraft sum of the decodable set of every state.
/// Deviation is `max(Σ 2^-|q| - 1, 0)` plus the number of prefix pairs.
pub fn check_decodable_set<M: ActionModel + ?Sized>(model: &M, states: usize) -> Result<VerificationReport> {
    let started = Instant::now();
    let mut deviation = 0.0f64;
    let mut kraft_min = f64::INFINITY;
    for s in 0..states {
        let set = crate::internal::decodable_set(model, s)?;
        let kraft: f64 = set.iter().map(|d| d.bits.dyadic_weight()).sum();
        kraft_min = kraft_min.min(kraft);
        let prefix_pairs = set.windows(2).filter(|w| w[0].bits.is_prefix_of(&w[1].bits)).count();
        deviation = deviation.max((kraft - 1.0).max(0.0) + prefix_pairs as f64);
    }
    Ok(
        VerificationReport::new("decodable_set", format!("{states} states"), deviation, 1e-12, started)
            .noted(format!("smallest Kraft sum {kraft_min}")),
    )
}

// ---------------------------------------------------------------------------
// Internal environment
// ---------------------------------------------------------------------------

fn budget<M: ActionModel + ?Sized>(env: &InternalEnvironment<'_, M>, m: usize) -> Result<()> {
    if m > MAX_HORIZON {
        return Err(Error::Budget(format!("horizon {m} exceeds {MAX_HORIZON}")));
    }
    for s in 0..env.mdp().num_states() {
        let n = env.internal_state_count(s)?;
        if n > MAX_INTERNAL_STATES {
            return Err(Error::Budget(format!(
                "state {s} has {n} internal states, limit {MAX_INTERNAL_STATES}"
            )));
        }
    }
    Ok(())
}

/// `max |Q^Π_μ(s, a) - Q^π_ϑ(sq, b)|` over every completing `(s, q, b)`,
/// with `Π` the uplift of `π` and `a` the action `qb` completes. The
/// mutation pays 0.1 for every undecided bit.
pub fn q_equivalence_deviation<M, P>(mdp: &Mdp, model: &M, pi: &P, m: usize, mutate: bool) -> Result<f64>
where
    M: ActionModel + ?Sized,
    P: InternalPolicy + ?Sized,
{
    let env = InternalEnvironment::new(mdp, model)?.with_mid_decode_reward(if mutate { 0.1 } else { 0.0 });
    budget(&env, m)?;
    let ext = env.uplift(pi)?;
    let external = q_table(mdp, &ext, m)?;
    Ok(env
        .completing_q_values(pi, m)?
        .into_iter()
        .map(|(sq, _, a, v)| (external[sq.state][a] - v).abs())
        .fold(0.0, f64::max))
}

pub fn check_q_equivalence<M, P>(mdp: &Mdp, model: &M, pi: &P, m: usize, tol: f64, mutate: bool) -> Result<VerificationReport>
where
    M: ActionModel + ?Sized,
    P: InternalPolicy + ?Sized,
{
    let started = Instant::now();
    let deviation = q_equivalence_deviation(mdp, model, pi, m, mutate)?;
    Ok(VerificationReport::new(
        "q_equivalence",
        format!("{} states, m = {m}", mdp.num_states()),
        deviation,
        tol,
        started,
    )
    .mutated(mutate))
}

/// Random instances with their action models: even indices use the uniform
/// model over the legal actions, odd ones a random categorical model.
pub fn q_equivalence_instances(seed: u64, count: usize, sizes: InstanceSizes) -> Result<Vec<(Mdp, AnyModel)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            Ok(if i % 2 == 0 {
                let (mdp, model) = instances::random_mdp_with_uniform_model(&mut rng, sizes)?;
                (mdp, model.into())
            } else {
                let (mdp, model) = instances::random_mdp_with_categorical_model(&mut rng, sizes)?;
                (mdp, model.into())
            })
        })
        .collect()
}

/// The internal policies every instance is checked under.
pub fn q_equivalence_policies(seed: u64) -> Vec<(String, Box<dyn InternalPolicy>)> {
    vec![
        ("uniform".to_string(), Box::new(UniformInternalPolicy)),
        (format!("hashed({seed})"), Box::new(HashedInternalPolicy { seed })),
    ]
}

/// The Q-equivalence over `count` random instances, uniform and randomized
/// internal policies, and horizons `1..=max_m`. Reports the worst deviation.
pub fn check_q_equivalence_suite(
    seed: u64,
    count: usize,
    sizes: InstanceSizes,
    max_m: usize,
    tol: f64,
    mutate: bool,
) -> Result<VerificationReport> {
    let started = Instant::now();
    let mut worst = 0.0f64;
    let mut evaluated = 0;
    for (i, (mdp, model)) in q_equivalence_instances(seed, count, sizes)?.iter().enumerate() {
        for (_, pi) in q_equivalence_policies(seed.wrapping_add(i as u64)) {
            for m in 1..=max_m {
                worst = worst.max(q_equivalence_deviation(mdp, model, &*pi, m, mutate)?);
                evaluated += 1;
            }
        }
    }
    Ok(VerificationReport::new(
        "q_equivalence",
        format!("{count} instances, {evaluated} (instance, policy, m) cases"),
        worst,
        tol,
        started,
    )
    .seeded(seed)
    .sized(sizes)
    .mutated(mutate))
}

/// `max_s |Σ_a Π(a | s) - 1|`. The mutation loses the mass of the deepest
/// bitstring in every state, as if the bit tree were cut one level short.
pub fn uplift_normalization_deviation<M, P>(mdp: &Mdp, model: &M, pi: &P, mutate: bool) -> Result<f64>
where
    M: ActionModel + ?Sized,
    P: InternalPolicy + ?Sized,
{
    let env = InternalEnvironment::new(mdp, model)?;
    let mut worst = 0.0f64;
    for s in 0..mdp.num_states() {
        let mut total: f64 = env.uplift_row(pi, s)?.iter().sum();
        if mutate {
            let deepest = crate::internal::decodable_set(model, s)?
                .into_iter()
                .max_by_key(|d| d.bits.len())
                .expect("non-empty");
            total -= path_probability(pi, s, &deepest.bits)?;
        }
        worst = worst.max((total - 1.0).abs());
    }
    Ok(worst)
}

fn path_probability<P: InternalPolicy + ?Sized>(pi: &P, s: StateId, q: &BitString) -> Result<f64> {
    let mut p = 1.0;
    for (i, b) in q.iter().enumerate() {
        p *= pi.probability(s, &q.prefix(i), b)?;
    }
    Ok(p)
}

pub fn check_uplift_normalization<M, P>(mdp: &Mdp, model: &M, pi: &P, mutate: bool) -> Result<VerificationReport>
where
    M: ActionModel + ?Sized,
    P: InternalPolicy + ?Sized,
{
    let started = Instant::now();
    let deviation = uplift_normalization_deviation(mdp, model, pi, mutate)?;
    Ok(VerificationReport::new(
        "uplift_normalization",
        format!("{} states", mdp.num_states()),
        deviation,
        1e-9,
        started,
    )
    .mutated(mutate))
}

/// Uplift normalization and decodable-set structure over the instances of
/// [`check_q_equivalence_suite`], with uniform, randomized and heavily biased
/// internal policies.
pub fn check_uplift_suite(seed: u64, count: usize, sizes: InstanceSizes, mutate: bool) -> Result<[VerificationReport; 2]> {
    let started = Instant::now();
    let mut worst = 0.0f64;
    let mut kraft = 0.0f64;
    for (i, (mdp, model)) in q_equivalence_instances(seed, count, sizes)?.iter().enumerate() {
        let mut policies = q_equivalence_policies(seed.wrapping_add(i as u64));
        policies.push(("biased(0.99)".into(), Box::new(BiasedInternalPolicy { one: 0.99 })));
        for (_, pi) in &policies {
            worst = worst.max(uplift_normalization_deviation(mdp, model, &**pi, mutate)?);
        }
        kraft = kraft.max(check_decodable_set(model, mdp.num_states())?.deviation);
    }
    let instance = format!("{count} instances");
    Ok([
        VerificationReport::new("uplift_normalization", instance.clone(), worst, 1e-9, started)
            .seeded(seed)
            .sized(sizes)
            .mutated(mutate),
        VerificationReport::new("decodable_set", instance, kraft, 1e-12, started)
            .seeded(seed)
            .sized(sizes),
    ])
}

/// Mean return of `episodes` internal-loop episodes of `m` external steps
/// against the exact value of the uplifted policy. Tolerance is three
/// standard errors. The mutation runs the loop with bits biased to 0.8
/// while still comparing against the uplift of `pi`.
#[allow(clippy::too_many_arguments)]
pub fn check_loop_dp<M, P>(
    name: &str,
    mdp: &Mdp,
    model: &M,
    pi: &P,
    m: usize,
    episodes: usize,
    seed: u64,
    mutate: bool,
) -> Result<VerificationReport>
where
    M: ActionModel + ?Sized,
    P: InternalPolicy + ?Sized,
{
    let started = Instant::now();
    let env = InternalEnvironment::new(mdp, model)?;
    let exact = v_value(mdp, &env.uplift(pi)?, mdp.initial_state(), m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let biased = BiasedInternalPolicy { one: 0.8 };
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..episodes {
        let t = if mutate {
            env.run_loop(&biased, mdp.initial_state(), m, &mut rng)?
        } else {
            env.run_loop(pi, mdp.initial_state(), m, &mut rng)?
        };
        let r = t.total_reward();
        sum += r;
        sum_sq += r * r;
    }
    let n = episodes as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    let se = (var / n).sqrt();
    Ok(VerificationReport::new(
        "loop_dp",
        format!("{name}, m = {m}, {episodes} episodes"),
        (mean - exact).abs(),
        3.0 * se,
        started,
    )
    .seeded(seed)
    .mutated(mutate)
    .noted(format!("mean {mean:.6}, exact {exact:.6}, se {se:.2e}")))
}

/// `max |uplift(internalize(Π')) - Π'|` over `count` random external
/// policies. The mutation shifts every internal bit probability by 1e-3.
pub fn check_internalize<M: ActionModel + ?Sized>(
    name: &str,
    mdp: &Mdp,
    model: &M,
    count: usize,
    seed: u64,
    mutate: bool,
) -> Result<VerificationReport> {
    let started = Instant::now();
    let env = InternalEnvironment::new(mdp, model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let ext = instances::random_policy(&mut rng, mdp);
        let pi = env.internalize(&ext)?;
        let back = if mutate {
            env.uplift(&Shifted(&pi, 1e-3))?
        } else {
            env.uplift(&pi)?
        };
        worst = worst.max(back.max_abs_diff(&ext));
    }
    Ok(
        VerificationReport::new("internalize", format!("{name}, {count} policies"), worst, 1e-9, started)
            .seeded(seed)
            .mutated(mutate),
    )
}

struct Shifted<P>(P, f64);

impl<P: InternalPolicy> InternalPolicy for Shifted<P> {
    fn one_probability(&self, state: StateId, q: &BitString) -> Result<f64> {
        Ok((self.0.one_probability(state, q)? + self.1).clamp(0.0, 1.0))
    }
}

// ---------------------------------------------------------------------------
// Mixtures
// ---------------------------------------------------------------------------

/// `max (gap - log₂ K)` over `data`, clipped at 0. The mutation scores the
/// mixture without its best component on each string.
pub fn check_mixture_regret<M: ActionModel>(
    components: &[M],
    state: StateId,
    data: &[Vec<Symbol>],
    mutate: bool,
) -> Result<VerificationReport> {
    let started = Instant::now();
    let k = components.len();
    let bound = (k as f64).log2();
    let mut worst_gap = f64::NEG_INFINITY;
    if mutate {
        for x in data {
            let probs = components
                .iter()
                .map(|c| c.sequence_probability(state, x))
                .collect::<Result<Vec<f64>>>()?;
            let best = probs.iter().copied().fold(0.0, f64::max);
            let rest: f64 = probs.iter().sum::<f64>() - best;
            let xi = rest / k as f64;
            worst_gap = worst_gap.max(-xi.log2() + best.log2());
        }
    } else {
        for row in mixture_log_loss_regret(components, state, data)? {
            worst_gap = worst_gap.max(row.gap);
        }
    }
    Ok(VerificationReport::new(
        "mixture_regret",
        format!("K = {k}, {} strings", data.len()),
        (worst_gap - bound).max(0.0),
        1e-9,
        started,
    )
    .mutated(mutate)
    .noted(format!("largest gap {worst_gap:.6} bits, log2 K = {bound}")))
}

/// Regret over random component sets and random strings.
pub fn check_mixture_regret_sweep(seed: u64, trials: usize, mutate: bool) -> Result<VerificationReport> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let alphabet = instances::alphabet(rng.gen_range(1..=4), rng.gen_range(2..=4));
        let k = rng.gen_range(2..=4);
        let components = (0..k)
            .map(|_| instances::random_ngram(&mut rng, &alphabet))
            .collect::<Result<Vec<_>>>()?;
        let source = rng.gen_range(0..k);
        let actions = rng.gen_range(1..=4);
        let data = vec![instances::sample_string(&mut rng, &components[source], 0, actions)?];
        worst = worst.max(check_mixture_regret(&components, 0, &data, mutate)?.deviation);
    }
    Ok(
        VerificationReport::new("mixture_regret", format!("{trials} random mixtures"), worst, 1e-9, started)
            .seeded(seed)
            .mutated(mutate),
    )
}

/// The two-task demo: deviation is one minus the smallest posterior weight
/// of the active task after the configured number of actions. The mutation
/// freezes the posterior.
pub fn check_mixture_posterior(tasks: &ToyTasks, seed: u64, actions: usize, mutate: bool) -> Result<VerificationReport> {
    let started = Instant::now();
    let config = MultitaskConfig {
        seed,
        actions,
        freeze_posterior: mutate,
        ..Default::default()
    };
    let report = run_multitask(tasks, &config)?;
    let worst = report.runs.iter().map(|r| r.final_posterior()).fold(1.0, f64::min);
    let notes: Vec<String> = report
        .runs
        .iter()
        .map(|r| {
            format!(
                "{}: {:.4} (>= {} after {:?})",
                r.task,
                r.final_posterior(),
                config.threshold,
                r.identified_after
            )
        })
        .collect();
    Ok(VerificationReport::new(
        "mixture_posterior",
        format!("two toy tasks, {actions} actions"),
        1.0 - worst,
        1.0 - config.threshold,
        started,
    )
    .seeded(seed)
    .mutated(mutate)
    .noted(notes.join("; ")))
}

// ---------------------------------------------------------------------------
// Consistency under prefixes
// ---------------------------------------------------------------------------

/// Additive-smoothing estimate of a Bernoulli parameter; `α = ½` is the KT
/// estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimator {
    pub alpha: f64,
    /// Only the first `window` observations are used. Consistency fails for
    /// any finite window.
    pub window: Option<usize>,
}

impl Estimator {
    pub const KT: Estimator = Estimator { alpha: 0.5, window: None };

    pub fn estimate(&self, xs: &[bool]) -> f64 {
        let xs = match self.window {
            Some(w) => &xs[..w.min(xs.len())],
            None => xs,
        };
        let ones = xs.iter().filter(|&&x| x).count() as f64;
        (ones + self.alpha) / (xs.len() as f64 + 2.0 * self.alpha)
    }
}

/// Estimates `θ₀` from `n` Bernoulli draws with and without a prefix of
/// `kpre` zeros. Passes when both estimates are within `tol` of `θ₀` and
/// within `kpre / n + tol / 10` of each other. Skipped when the prefix is at
/// least as long as the data. The mutation estimates from the first 100
/// symbols only.
pub fn check_consistency_prefix(
    estimator: &Estimator,
    theta0: f64,
    kpre: usize,
    n: usize,
    tol: f64,
    seed: u64,
    mutate: bool,
) -> Result<[VerificationReport; 2]> {
    let started = Instant::now();
    if !(theta0 > 0.0 && theta0 < 1.0) {
        return Err(Error::Precondition(format!("theta0 = {theta0} outside (0, 1)")));
    }
    let instance = format!("theta0 = {theta0}, prefix {kpre} zeros, n = {n}");
    if kpre >= n {
        let skip = |check: &str| {
            let mut r = VerificationReport::new(check, instance.clone(), 0.0, tol, started).seeded(seed);
            r.skipped = true;
            r.noted("prefix at least as long as the data; asymptotics not in force")
        };
        return Ok([skip("consistency"), skip("consistency_prefix_shift")]);
    }
    let estimator = if mutate {
        Estimator {
            window: Some(100),
            ..*estimator
        }
    } else {
        *estimator
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<bool> = (0..n).map(|_| rng.gen_bool(theta0)).collect();
    let mut prefixed = vec![false; kpre];
    prefixed.extend_from_slice(&data);
    let raw = estimator.estimate(&data);
    let pre = estimator.estimate(&prefixed);
    let note = format!("estimate {raw:.5} without prefix, {pre:.5} with");
    Ok([
        VerificationReport::new(
            "consistency",
            instance.clone(),
            (raw - theta0).abs().max((pre - theta0).abs()),
            tol,
            started,
        )
        .seeded(seed)
        .mutated(mutate)
        .noted(note),
        VerificationReport::new(
            "consistency_prefix_shift",
            instance,
            (raw - pre).abs(),
            kpre as f64 / n as f64 + tol / 10.0,
            started,
        )
        .seeded(seed)
        .mutated(mutate),
    ])
}

// ---------------------------------------------------------------------------
// Suite
// ---------------------------------------------------------------------------

pub const CHECKS: [&str; 9] = [
    "roundtrip",
    "q_equivalence",
    "uplift",
    "sampling",
    "mixture",
    "consistency",
    "loop_dp",
    "internalize",
    "uniform_codelength",
];

/// Settings for [`run_suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub seed: u64,
    pub checks: Vec<String>,
    /// Checks to run with their mutation switched on.
    pub mutate: Vec<String>,
    pub sizes: InstanceSizes,
    pub instances: usize,
    pub horizon: usize,
    pub tolerance: f64,
    pub roundtrip_trials: usize,
    pub samples: usize,
    pub episodes: usize,
    pub policies: usize,
    pub mixture_actions: usize,
    pub theta0: f64,
    pub prefix_length: usize,
    pub consistency_n: usize,
    pub consistency_tolerance: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            checks: CHECKS.iter().map(|c| c.to_string()).collect(),
            mutate: Vec::new(),
            sizes: InstanceSizes::default(),
            instances: 20,
            horizon: 3,
            tolerance: 1e-9,
            roundtrip_trials: 10_000,
            samples: 100_000,
            episodes: 100_000,
            policies: 10,
            mixture_actions: 30,
            theta0: 0.7,
            prefix_length: 50,
            consistency_n: 10_000,
            consistency_tolerance: 0.05,
        }
    }
}

/// The action models the loop and internalization checks use for a toy
/// task: its corpus-fitted n-gram, masked to the task's legal actions.
pub fn toy_task_model(tasks: &ToyTasks, index: usize) -> Result<LegalityMasked<AnyModel>> {
    let (_, mdp, corpus) = tasks.tasks()[index];
    let model = crate::model::fit_ngram(&tasks.alphabet, corpus, 1, 0.5)?;
    LegalityMasked::new(model.into(), mdp.action_sets().to_vec())
}

/// The skewed three-action model the sampling check uses.
pub fn skewed_sampling_model() -> Result<crate::model::CategoricalActionModel> {
    let alphabet = crate::alphabet::SymbolAlphabet::with_terminal(&["a", "b", "c"], 2)?;
    let rows = vec![vec![
        (alphabet.parse("a <T>")?, 0.7),
        (alphabet.parse("b <T>")?, 0.2),
        (alphabet.parse("c <T>")?, 0.1),
    ]];
    crate::model::CategoricalActionModel::new(alphabet, rows)
}

pub fn run_suite(config: &SuiteConfig, tasks: &ToyTasks) -> Result<Vec<VerificationReport>> {
    for c in config.checks.iter().chain(&config.mutate) {
        if !CHECKS.contains(&c.as_str()) {
            return Err(Error::Precondition(format!("unknown check `{c}`; known: {}", CHECKS.join(", "))));
        }
    }
    let seed = config.seed;
    let mut out = Vec::new();
    for check in &config.checks {
        let mutate = config.mutate.contains(check);
        match check.as_str() {
            "roundtrip" => out.extend(check_roundtrip(seed, config.roundtrip_trials, mutate)?),
            "uniform_codelength" => out.push(check_uniform_codelength(5)?),
            "q_equivalence" => out.push(check_q_equivalence_suite(
                seed,
                config.instances,
                config.sizes,
                config.horizon,
                config.tolerance,
                mutate,
            )?),
            "uplift" => out.extend(check_uplift_suite(seed, config.instances, config.sizes, mutate)?),
            "sampling" => out.push(check_sampling(&skewed_sampling_model()?, 0, config.samples, seed, mutate)?),
            "mixture" => {
                out.push(check_mixture_regret_sweep(seed, 1000, mutate)?);
                out.push(check_mixture_posterior(tasks, seed, config.mixture_actions, mutate)?);
            }
            "consistency" => out.extend(check_consistency_prefix(
                &Estimator::KT,
                config.theta0,
                config.prefix_length,
                config.consistency_n,
                config.consistency_tolerance,
                seed,
                mutate,
            )?),
            "loop_dp" => {
                for (i, (name, mdp, _)) in tasks.tasks().into_iter().enumerate() {
                    let model = toy_task_model(tasks, i)?;
                    out.push(check_loop_dp(
                        name,
                        mdp,
                        &model,
                        &UniformInternalPolicy,
                        config.horizon,
                        config.episodes,
                        seed,
                        mutate,
                    )?);
                }
            }
            "internalize" => {
                for (i, (name, mdp, _)) in tasks.tasks().into_iter().enumerate() {
                    let model = toy_task_model(tasks, i)?;
                    out.push(check_internalize(name, mdp, &model, config.policies, seed, mutate)?);
                }
            }
            _ => unreachable!("validated above"),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::SymbolAlphabet;
    use crate::mdp::Outcome;
    use crate::model::UniformActionModel;
    use crate::tasks::build_toy_tasks;

    fn single() -> (Mdp, UniformActionModel) {
        let alphabet = SymbolAlphabet::with_terminal(&["go"], 2).unwrap();
        let go = alphabet.parse("go <T>").unwrap();
        let row = vec![
            Outcome {
                next: 0,
                reward: 0.0,
                probability: 0.5,
            },
            Outcome {
                next: 0,
                reward: 2.0,
                probability: 0.5,
            },
        ];
        let mdp = Mdp::new(alphabet.clone(), vec![vec![go.clone()]], vec![vec![row]], 0).unwrap();
        (mdp, UniformActionModel::new(alphabet, vec![vec![go]]).unwrap())
    }

    #[test]
    fn single_action_q_equivalence_is_exact() {
        let (mdp, model) = single();
        let r = check_q_equivalence(&mdp, &model, &UniformInternalPolicy, 3, 1e-9, false).unwrap();
        assert_eq!(r.deviation, 0.0);
        let env = InternalEnvironment::new(&mdp, &model).unwrap();
        let v = env
            .v_value(&UniformInternalPolicy, &crate::internal::InternalState::root(0), 3)
            .unwrap();
        assert_eq!(v, 3.0);
    }

    #[test]
    fn q_equivalence_mutation_breaks() {
        let r = check_q_equivalence_suite(1, 6, InstanceSizes::default(), 3, 1e-9, true).unwrap();
        assert!(!r.passed, "{r:?}");
        let r = check_q_equivalence_suite(1, 6, InstanceSizes::default(), 3, 1e-9, false).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn q_equivalence_budget() {
        let (mdp, model) = single();
        assert!(matches!(
            q_equivalence_deviation(&mdp, &model, &UniformInternalPolicy, MAX_HORIZON + 1, false),
            Err(Error::Budget(_))
        ));
    }

    #[test]
    fn point_mass_sampling_has_zero_tv() {
        let (_, model) = single();
        let r = check_sampling(&model, 0, 1000, 0, false).unwrap();
        assert_eq!(r.deviation, 0.0);
    }

    #[test]
    fn sampling_precondition() {
        let alphabet = SymbolAlphabet::with_terminal(&["a", "b"], 2).unwrap();
        let rows = vec![vec![
            (alphabet.parse("a <T>").unwrap(), 0.99),
            (alphabet.parse("b <T>").unwrap(), 0.01),
        ]];
        let model = crate::model::CategoricalActionModel::new(alphabet, rows).unwrap();
        assert!(check_sampling(&model, 0, 10, 0, false).is_err());
    }

    #[test]
    fn sampling_mutation_breaks() {
        let model = skewed_sampling_model().unwrap();
        assert!(check_sampling(&model, 0, 20_000, 0, false).unwrap().deviation < 0.02);
        assert!(!check_sampling(&model, 0, 20_000, 0, true).unwrap().passed);
    }

    #[test]
    fn uplift_normalization_and_mutation() {
        let [norm, kraft] = check_uplift_suite(2, 6, InstanceSizes::default(), false).unwrap();
        assert!(norm.passed && kraft.passed);
        let [norm, _] = check_uplift_suite(2, 6, InstanceSizes::default(), true).unwrap();
        assert!(!norm.passed);
    }

    #[test]
    fn identical_components_have_zero_regret() {
        let (_, model) = single();
        let data = vec![model.alphabet().parse("go <T>").unwrap()];
        let r = check_mixture_regret(&[model.clone(), model], 0, &data, false).unwrap();
        assert_eq!(r.deviation, 0.0);
        assert!(r.note.unwrap().contains("largest gap 0.000000"));
    }

    #[test]
    fn regret_sweep_and_mutation() {
        assert!(check_mixture_regret_sweep(3, 200, false).unwrap().passed);
        assert!(!check_mixture_regret_sweep(3, 200, true).unwrap().passed);
    }

    #[test]
    fn posterior_check_and_mutation() {
        let tasks = build_toy_tasks().unwrap();
        assert!(check_mixture_posterior(&tasks, 0, 30, false).unwrap().passed);
        assert!(!check_mixture_posterior(&tasks, 0, 30, true).unwrap().passed);
    }

    #[test]
    fn consistency_examples() {
        let [a, b] = check_consistency_prefix(&Estimator::KT, 0.5, 0, 10_000, 0.05, 1, false).unwrap();
        assert!(a.passed && b.passed);
        let [a, b] = check_consistency_prefix(&Estimator::KT, 0.7, 50, 10_000, 0.05, 1, false).unwrap();
        assert!(a.passed && b.passed);
        let [a, _] = check_consistency_prefix(&Estimator::KT, 0.7, 50, 10_000, 0.05, 1, true).unwrap();
        assert!(!a.passed);
        let [a, b] = check_consistency_prefix(&Estimator::KT, 0.7, 100, 100, 0.05, 1, false).unwrap();
        assert!(a.skipped && b.skipped);
    }

    #[test]
    fn kt_estimates() {
        assert_eq!(Estimator::KT.estimate(&[]), 0.5);
        assert_eq!(Estimator::KT.estimate(&[true, true, false]), 2.5 / 4.0);
    }

    #[test]
    fn internalize_and_mutation() {
        let tasks = build_toy_tasks().unwrap();
        let model = toy_task_model(&tasks, 1).unwrap();
        assert!(check_internalize("sequence", &tasks.sequence, &model, 3, 0, false).unwrap().passed);
        assert!(!check_internalize("sequence", &tasks.sequence, &model, 3, 0, true).unwrap().passed);
    }

    #[test]
    fn loop_dp_and_mutation() {
        let tasks = build_toy_tasks().unwrap();
        let model = toy_task_model(&tasks, 0).unwrap();
        let ok = check_loop_dp("gridline", &tasks.gridline, &model, &UniformInternalPolicy, 3, 5000, 0, false).unwrap();
        assert!(ok.passed, "{ok:?}");
        let bad = check_loop_dp("gridline", &tasks.gridline, &model, &UniformInternalPolicy, 3, 5000, 0, true).unwrap();
        assert!(!bad.passed, "{bad:?}");
    }

    #[test]
    fn reports_replay_and_serialize() {
        let a = check_roundtrip(5, 50, false).unwrap();
        let b = check_roundtrip(5, 50, false).unwrap();
        assert!(a[0].same_outcome(&b[0]) && a[1].same_outcome(&b[1]));
        let text = reports_to_ndjson(&a);
        let back: Vec<VerificationReport> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(back, a.to_vec());
        let table = summary_table(&a);
        assert!(table.lines().count() == 3 && table.contains("roundtrip"));
    }

    #[test]
    fn roundtrip_mutation_breaks() {
        assert!(!check_roundtrip(5, 50, true).unwrap()[0].passed);
    }

    #[test]
    fn unknown_checks_are_rejected() {
        let tasks = build_toy_tasks().unwrap();
        let config = SuiteConfig {
            checks: vec!["nope".into()],
            ..Default::default()
        };
        assert!(run_suite(&config, &tasks).is_err());
        let empty = SuiteConfig {
            checks: vec![],
            ..Default::default()
        };
        assert!(run_suite(&empty, &tasks).unwrap().is_empty());
    }
}
