//! The subcommands. Each writes its outputs into a fresh run directory and
//! returns a short human-readable summary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use infoact::coder::{decode_codeword, encode, quantized_codelength};
use infoact::instances::sample_string;
use infoact::internal::{
    BiasedInternalPolicy, HashedInternalPolicy, InternalEnvironment, InternalPolicy, TraceRecord, UniformInternalPolicy,
};
use infoact::mdp::{parse_mdp, v_value, Mdp};
use infoact::model::{fit_ngram, load_model, save_model, ActionModel, AnyModel, LegalityMasked, UniformActionModel};
use infoact::multitask::{run_multitask, MultitaskConfig};
use infoact::tasks::build_toy_tasks;
use infoact::verification::{reports_to_ndjson, run_suite, summary_table};
use infoact::{Error, SymbolAlphabet, TERMINAL_TOKEN};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Command, ExperimentConfig};
use crate::exit::Failure;

pub const DEFAULT_ORDER: usize = 1;
pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_HORIZON: usize = 10;
pub const DEFAULT_ROUNDTRIP_SAMPLES: usize = 100;

pub struct Completed {
    pub dir: PathBuf,
    pub summary: String,
}

pub fn execute(command: Command, config: &ExperimentConfig) -> Result<Completed, Failure> {
    config.validate(command)?;
    let dir = run_directory(config.out_base(), command, config.seed)?;
    fs::write(
        dir.join("config.json"),
        serde_json::to_string_pretty(config).expect("config serializes") + "\n",
    )?;
    let outcome = match command {
        Command::Train => train(config, &dir),
        Command::Roundtrip => roundtrip(config, &dir),
        Command::Run => run(config, &dir),
        Command::Verify => verify(config, &dir),
        Command::Multitask => multitask(config, &dir),
    };
    match outcome {
        Ok(summary) => Ok(Completed { dir, summary }),
        Err(failure) => {
            // Failed verifications keep their reports; anything else leaves no trace.
            if failure.code != crate::exit::VERIFICATION {
                let _ = fs::remove_dir_all(&dir);
            }
            Err(failure)
        }
    }
}

/// `<base>/<command>-<UTC timestamp>-seed<seed>`, suffixed with a counter if
/// that directory already exists.
fn run_directory(base: &Path, command: Command, seed: Option<u64>) -> Result<PathBuf, Failure> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let seed = seed.map_or_else(|| "none".to_string(), |s| s.to_string());
    let stem = format!("{}-{stamp}-seed{seed}", command.name());
    fs::create_dir_all(base)
        .with_context(|| format!("cannot create {}", base.display()))
        .map_err(Failure::config)?;
    for n in 0.. {
        let name = if n == 0 { stem.clone() } else { format!("{stem}-{n}") };
        let dir = base.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    unreachable!()
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::ingestion)
}

fn in_file(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| {
        let code = Failure::from(e.clone()).code;
        Failure {
            code,
            error: anyhow!(e).context(format!("in {}", path.display())),
        }
    }
}

fn load_model_file(path: &Path) -> Result<AnyModel, Failure> {
    load_model(&read(path)?).map_err(in_file(path))
}

fn load_mdp_file(path: &Path) -> Result<Mdp, Failure> {
    parse_mdp(&read(path)?).map_err(in_file(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    fs::write(path, serde_json::to_string_pretty(value).expect("serializable") + "\n")?;
    Ok(())
}

fn train(config: &ExperimentConfig, dir: &Path) -> Result<String, Failure> {
    let alphabet = match (&config.alphabet, &config.mdp) {
        (Some(names), _) => {
            let terminal = names
                .iter()
                .position(|n| n == TERMINAL_TOKEN)
                .ok_or_else(|| Failure::config(anyhow!("the alphabet must list {TERMINAL_TOKEN}")))?;
            let k = config
                .max_action_length
                .ok_or_else(|| Failure::config(anyhow!("--max-action-length is required with --alphabet")))?;
            SymbolAlphabet::new(names.clone(), terminal, k).map_err(|e| Failure::config(anyhow!(e)))?
        }
        (None, Some(mdp)) => load_mdp_file(mdp)?.alphabet().clone(),
        (None, None) => unreachable!("validated"),
    };
    let corpus_path = config.corpus.as_deref().expect("validated");
    let corpus = alphabet.parse_corpus(&read(corpus_path)?).map_err(in_file(corpus_path))?;
    let order = config.order.unwrap_or(DEFAULT_ORDER);
    let model = fit_ngram(&alphabet, &corpus, order, config.alpha.unwrap_or(DEFAULT_ALPHA))?;
    let path = dir.join("model.json");
    fs::write(&path, save_model(&model.into())?)?;
    Ok(format!(
        "fitted an order-{order} n-gram on {} lines; wrote {}",
        corpus.len(),
        path.display()
    ))
}

#[derive(Serialize)]
struct RoundtripRecord {
    line: usize,
    text: String,
    codeword: String,
    bits: usize,
    ideal_bits: usize,
    decoded: bool,
}

#[derive(Serialize)]
struct RoundtripSummary {
    strings: usize,
    mismatches: usize,
    max_excess_bits: i64,
    mean_bits: f64,
}

fn roundtrip(config: &ExperimentConfig, dir: &Path) -> Result<String, Failure> {
    let model_path = config.model.as_deref().expect("validated");
    let model = load_model_file(model_path)?;
    let state = config.state.unwrap_or(0);
    let strings = match &config.corpus {
        Some(path) => model.alphabet().parse_corpus(&read(path)?).map_err(in_file(path))?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed.expect("validated"));
            let actions = config.actions.unwrap_or(1);
            (0..config.samples.unwrap_or(DEFAULT_ROUNDTRIP_SAMPLES))
                .map(|_| sample_string(&mut rng, &model, state, actions))
                .collect::<infoact::Result<_>>()?
        }
    };
    let mut records = String::new();
    let mut stream = Vec::new();
    let mut summary = RoundtripSummary {
        strings: strings.len(),
        mismatches: 0,
        max_excess_bits: 0,
        mean_bits: 0.0,
    };
    for (i, x) in strings.iter().enumerate() {
        let cw = encode(&model, state, x).map_err(|e| {
            let code = Failure::from(e.clone()).code;
            Failure {
                code,
                error: anyhow!(e).context(format!("string {}", i + 1)),
            }
        })?;
        let ideal = quantized_codelength(&model, state, x)?;
        let decoded = decode_codeword(&model, state, &cw).ok().as_deref() == Some(&x[..]);
        summary.mismatches += usize::from(!decoded);
        summary.max_excess_bits = summary.max_excess_bits.max(cw.bits.len() as i64 - ideal as i64);
        summary.mean_bits += cw.bits.len() as f64 / strings.len() as f64;
        stream.extend(cw.bits.to_bytes());
        let record = RoundtripRecord {
            line: i + 1,
            text: model.alphabet().format(x),
            codeword: cw.bits.to_string(),
            bits: cw.bits.len(),
            ideal_bits: ideal,
            decoded,
        };
        records += &(serde_json::to_string(&record).expect("serializable") + "\n");
    }
    fs::write(dir.join("roundtrip.ndjson"), records)?;
    fs::write(dir.join("codewords.bin"), stream)?;
    write_json(&dir.join("summary.json"), &summary)?;
    let text = format!(
        "{} strings, {} mismatches, mean {:.3} bits, worst excess over ideal {} bits",
        summary.strings, summary.mismatches, summary.mean_bits, summary.max_excess_bits
    );
    if summary.mismatches > 0 || summary.max_excess_bits > 2 {
        return Err(Failure::verification(anyhow!("roundtrip failed: {text}")));
    }
    Ok(text)
}

fn parse_policy(text: &str, seed: u64) -> Result<Box<dyn InternalPolicy>, Failure> {
    match text {
        "uniform" => Ok(Box::new(UniformInternalPolicy)),
        "hashed" => Ok(Box::new(HashedInternalPolicy { seed })),
        _ => match text.strip_prefix("biased:").and_then(|p| p.parse::<f64>().ok()) {
            Some(one) if (0.0..=1.0).contains(&one) => Ok(Box::new(BiasedInternalPolicy { one })),
            _ => Err(Failure::config(anyhow!(
                "unknown policy `{text}`; use uniform, hashed or biased:<p>"
            ))),
        },
    }
}

#[derive(Serialize)]
struct TraceLine<'a> {
    episode: usize,
    #[serde(flatten)]
    record: &'a TraceRecord,
}

#[derive(Serialize)]
struct RunSummary {
    episodes: usize,
    horizon: usize,
    policy: String,
    masked: bool,
    mean_return: f64,
    std_error: f64,
    /// Exact value of the uplifted policy from the initial state, when the
    /// instance is small enough to evaluate.
    exact_value: Option<f64>,
    bits_per_action: f64,
}

fn run(config: &ExperimentConfig, dir: &Path) -> Result<String, Failure> {
    let mdp = load_mdp_file(config.mdp.as_deref().expect("validated"))?;
    let model = match &config.model {
        Some(path) => load_model_file(path)?,
        None => UniformActionModel::new(mdp.alphabet().clone(), mdp.action_sets().to_vec())?.into(),
    };
    if config.mask.unwrap_or(false) {
        let masked = LegalityMasked::new(model, mdp.action_sets().to_vec())?;
        run_with(config, dir, &mdp, &masked)
    } else {
        run_with(config, dir, &mdp, &model)
    }
}

fn run_with<M: ActionModel>(config: &ExperimentConfig, dir: &Path, mdp: &Mdp, model: &M) -> Result<String, Failure> {
    let seed = config.seed.expect("validated");
    let policy_name = config.policy.clone().unwrap_or_else(|| "uniform".into());
    let pi = parse_policy(&policy_name, seed)?;
    let env = InternalEnvironment::new(mdp, model)?;
    let horizon = config.horizon.unwrap_or(DEFAULT_HORIZON);
    let episodes = config.episodes.unwrap_or(1).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = String::new();
    let (mut sum, mut sum_sq, mut bits) = (0.0, 0.0, 0usize);
    for episode in 0..episodes {
        let t = env.run_loop_traced(&*pi, mdp.initial_state(), horizon, &mut rng, |record| {
            trace += &(serde_json::to_string(&TraceLine { episode, record }).expect("serializable") + "\n");
        })?;
        let r = t.total_reward();
        sum += r;
        sum_sq += r * r;
        bits += t.total_bits();
    }
    fs::write(dir.join("trace.ndjson"), trace)?;
    let n = episodes as f64;
    let mean = sum / n;
    let std_error = if episodes > 1 {
        (((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) / n).sqrt()
    } else {
        0.0
    };
    let exact_value = match env.uplift(&*pi) {
        Ok(ext) => Some(v_value(mdp, &ext, mdp.initial_state(), horizon)?),
        Err(Error::Budget(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let summary = RunSummary {
        episodes,
        horizon,
        policy: policy_name,
        masked: config.mask.unwrap_or(false),
        mean_return: mean,
        std_error,
        exact_value,
        bits_per_action: bits as f64 / (n * horizon as f64),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    let mut text = format!("{episodes} episodes of {horizon} actions: mean return {mean:.6}");
    if episodes > 1 {
        let _ = write!(text, " ± {std_error:.2e}");
    }
    if let Some(v) = exact_value {
        let _ = write!(text, ", exact {v:.6}");
    }
    let _ = write!(text, ", {:.3} bits per action", summary.bits_per_action);
    Ok(text)
}

fn verify(config: &ExperimentConfig, dir: &Path) -> Result<String, Failure> {
    let suite = config.verify.clone().unwrap_or_default();
    let tasks = build_toy_tasks()?;
    let reports = run_suite(&suite, &tasks)?;
    fs::write(dir.join("reports.ndjson"), reports_to_ndjson(&reports))?;
    let table = summary_table(&reports);
    fs::write(dir.join("summary.txt"), &table)?;
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.passed && !r.skipped)
        .map(|r| r.check.as_str())
        .collect();
    if !failed.is_empty() {
        return Err(Failure::verification(anyhow!(
            "{table}{} of {} checks failed: {}",
            failed.len(),
            reports.len(),
            failed.join(", ")
        )));
    }
    Ok(format!("{table}{} checks passed", reports.len()))
}

fn multitask(config: &ExperimentConfig, dir: &Path) -> Result<String, Failure> {
    let mc = MultitaskConfig {
        seed: config.seed.expect("validated"),
        actions: config.actions.unwrap_or(MultitaskConfig::default().actions),
        order: config.order.unwrap_or(DEFAULT_ORDER),
        alpha: config.alpha.unwrap_or(DEFAULT_ALPHA),
        ..Default::default()
    };
    let tasks = build_toy_tasks()?;
    let report = run_multitask(&tasks, &mc)?;
    write_json(&dir.join("multitask.json"), &report)?;
    let mut series = String::from("task\tt\tposterior\tbits\treward\n");
    let mut table = format!(
        "{:<10}  {:>10}  {:>9}  {:>11}  {:>12}  {:>10}\n",
        "task", "identified", "posterior", "bits/action", "mixture bits", "own bits"
    );
    for run in &report.runs {
        for t in 0..run.posterior.len() {
            let _ = writeln!(
                series,
                "{}\t{}\t{}\t{}\t{}",
                run.task,
                t + 1,
                run.posterior[t],
                run.bits[t],
                run.rewards[t]
            );
        }
        let identified = run.identified_after.map_or_else(|| "never".to_string(), |t| format!("step {t}"));
        let _ = writeln!(
            table,
            "{:<10}  {:>10}  {:>9.4}  {:>11.3}  {:>12.3}  {:>10.3}",
            run.task,
            identified,
            run.final_posterior(),
            run.bits_per_action(),
            run.mixture_code_bits,
            run.own_code_bits
        );
    }
    fs::write(dir.join("multitask.tsv"), series)?;
    Ok(table)
}
