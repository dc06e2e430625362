//! One internal agent acting in two unrelated tasks through a Bayesian
//! mixture of per-task action models.
//!
//! The mixture starts undecided. After every external action its posterior
//! is updated on that action, so actions typical of the active task pull the
//! model towards that task's vocabulary and internal bits become cheaper.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::internal::{InternalEnvironment, UniformInternalPolicy};
use crate::mdp::Mdp;
use crate::model::{fit_ngram, ActionModel, AnyModel, LegalityMasked, MixtureActionModel, NGramActionModel};
use crate::tasks::ToyTasks;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultitaskConfig {
    pub seed: u64,
    /// External actions per task.
    pub actions: usize,
    pub order: usize,
    pub alpha: f64,
    /// Posterior weight regarded as identification.
    pub threshold: f64,
    /// Lists the sequence task's model first.
    pub reverse_components: bool,
    /// Skips posterior updates. Only useful to break the demo on purpose.
    pub freeze_posterior: bool,
}

impl Default for MultitaskConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            actions: 30,
            order: 1,
            alpha: 0.5,
            threshold: 0.95,
            reverse_components: false,
            freeze_posterior: false,
        }
    }
}

/// The record of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRun {
    pub task: String,
    /// Posterior weight of the active task's model after each action.
    pub posterior: Vec<f64>,
    /// Internal bits spent on each action.
    pub bits: Vec<usize>,
    pub rewards: Vec<f64>,
    /// `-log₂ ξ` of the whole action sequence under the (unmasked) mixture.
    pub mixture_code_bits: f64,
    /// `-log₂ ρ` of the sequence under the active task's own model.
    pub own_code_bits: f64,
    /// First action count after which the posterior reached the threshold.
    pub identified_after: Option<usize>,
}

impl TaskRun {
    pub fn final_posterior(&self) -> f64 {
        self.posterior.last().copied().unwrap_or(0.5)
    }

    pub fn bits_per_action(&self) -> f64 {
        self.bits.iter().sum::<usize>() as f64 / self.bits.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultitaskReport {
    pub config: MultitaskConfig,
    pub runs: Vec<TaskRun>,
}

/// One n-gram model per task, fitted on that task's corpus.
pub fn task_models(tasks: &ToyTasks, order: usize, alpha: f64) -> Result<Vec<NGramActionModel>> {
    tasks
        .tasks()
        .iter()
        .map(|(_, _, corpus)| fit_ngram(&tasks.alphabet, corpus, order, alpha))
        .collect()
}

pub fn run_multitask(tasks: &ToyTasks, config: &MultitaskConfig) -> Result<MultitaskReport> {
    let mut models: Vec<AnyModel> = task_models(tasks, config.order, config.alpha)?
        .into_iter()
        .map(AnyModel::from)
        .collect();
    if config.reverse_components {
        models.reverse();
    }
    let mut runs = Vec::new();
    for (i, (name, mdp, _)) in tasks.tasks().into_iter().enumerate() {
        let active = if config.reverse_components { 1 - i } else { i };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(i as u64));
        runs.push(run_task(name, mdp, &models, active, config, &mut rng)?);
    }
    Ok(MultitaskReport { config: *config, runs })
}

fn run_task(name: &str, mdp: &Mdp, models: &[AnyModel], active: usize, config: &MultitaskConfig, rng: &mut ChaCha8Rng) -> Result<TaskRun> {
    let mixture = MixtureActionModel::new(models.to_vec())?;
    let mut masked = LegalityMasked::new(mixture, mdp.action_sets().to_vec())?;
    let mut run = TaskRun {
        task: name.to_string(),
        posterior: Vec::new(),
        bits: Vec::new(),
        rewards: Vec::new(),
        mixture_code_bits: 0.0,
        own_code_bits: 0.0,
        identified_after: None,
    };
    let mut s = mdp.initial_state();
    for t in 1..=config.actions {
        let step = {
            let env = InternalEnvironment::new(mdp, &masked)?;
            env.run_loop(&UniformInternalPolicy, s, 1, rng)?.steps.remove(0)
        };
        let mixture = masked.inner_mut();
        run.mixture_code_bits -= mixture.sequence_probability(step.state, &step.action)?.log2();
        run.own_code_bits -= models[active].sequence_probability(step.state, &step.action)?.log2();
        if !config.freeze_posterior {
            mixture.update(step.state, &step.action)?;
        }
        let w = mixture.weights()[active];
        run.posterior.push(w);
        if w >= config.threshold && run.identified_after.is_none() {
            run.identified_after = Some(t);
        }
        run.bits.push(step.bits);
        run.rewards.push(step.reward);
        s = step.next_state;
    }
    Ok(run)
}
