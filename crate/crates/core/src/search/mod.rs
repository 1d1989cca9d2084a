//! The generational loop: random initialization, epsilon-lexicase parent
//! selection, variation, parameter fitting and NSGA-II survival over
//! (training loss, linear complexity).

mod selection;
mod survival;
mod variation;

pub use selection::{case_epsilons, epsilon_lexicase_select};
pub use survival::{crowding_distance, dominates, non_dominated_sort, nsga2_survive, Survivor};
pub use variation::{
    crossover, mutate, vary, MutationWeights, Offspring, VariationKind, VariationSettings,
};

use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{row_log_loss, split, Dataset, FeatureMatrix, SplitSpec, TaskKind};
use crate::error::{Error, Result};
use crate::expr::{eval_node, generate_random, ComplexityTable, Program, SearchSpace, Symbol};
use crate::optimize::{fit_rows, FitSettings, LmSettings, SplitCriterion};
use crate::simplify::{simplify_with_population, SimplifySettings};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Training loss: MSE (regression) or log-loss (classification).
    Loss,
    LinearComplexity,
    Size,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// pop 500, 100 generations, depth 12, size 100, split-seeded initialization.
    Clinical,
    /// pop 1000, 100 generations, depth 10, size 128.
    Srbench,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "clinical" => Ok(Profile::Clinical),
            "srbench" => Ok(Profile::Srbench),
            other => Err(Error::Config(format!(
                "unknown profile `{other}` (expected clinical or srbench)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub pop_size: usize,
    pub max_gens: usize,
    pub max_depth: usize,
    pub max_size: usize,
    pub lm_iterations: usize,
    pub functions: Vec<Symbol>,
    pub mutation_weights: MutationWeights,
    pub crossover_probability: f64,
    pub split_seeded_init: bool,
    pub objectives: Vec<Objective>,
    pub seed: u64,
    pub task: TaskKind,
    /// Share of the training rows held out for final-model selection.
    pub validation_fraction: f64,
    pub constants: bool,
    pub split_criterion: SplitCriterion,
    pub complexity: ComplexityTable,
    pub max_retries: usize,
    /// Post-hoc simplification of the final model; `None` disables it.
    pub simplify: Option<SimplifySettings>,
    /// Worker threads for fitting (`None`: all cores). Never affects results.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Wall-clock cap in seconds, checked between generations. Runs that hit
    /// it are no longer reproducible.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_limit_secs: Option<f64>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self::profile(Profile::Clinical, TaskKind::Regression)
    }
}

impl SearchConfig {
    pub fn profile(profile: Profile, task: TaskKind) -> Self {
        let (pop_size, max_depth, max_size, split_seeded_init, functions) = match profile {
            Profile::Clinical => (
                500,
                12,
                100,
                true,
                "add,sub,mul,div,ceil,floor,pow,log,min,max,split",
            ),
            Profile::Srbench => (
                1000,
                10,
                128,
                false,
                "add,sub,mul,div,sin,cos,tanh,exp,log,sqrt,pow,split",
            ),
        };
        Self {
            pop_size,
            max_gens: 100,
            max_depth,
            max_size,
            lm_iterations: 10,
            functions: Symbol::parse_function_set(functions).expect("built-in function set"),
            mutation_weights: MutationWeights::default(),
            crossover_probability: 0.5,
            split_seeded_init,
            objectives: vec![Objective::Loss, Objective::LinearComplexity],
            seed: 0,
            task,
            validation_fraction: 0.25,
            constants: true,
            split_criterion: SplitCriterion::PerCount,
            complexity: ComplexityTable::default(),
            max_retries: 10,
            simplify: Some(SimplifySettings::default()),
            workers: None,
            time_limit_secs: None,
        }
    }

    /// Removes both split kinds from the function set.
    pub fn without_splits(mut self) -> Self {
        self.functions.retain(|s| !s.is_split());
        self.split_seeded_init = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.pop_size < 2 || self.pop_size % 2 != 0 {
            return fail("pop_size must be even and at least 2");
        }
        if self.max_gens == 0 {
            return fail("max_gens must be at least 1");
        }
        if self.max_depth == 0 || self.max_size == 0 {
            return fail("max_depth and max_size must be at least 1");
        }
        if self.task == TaskKind::Classification && (self.max_depth < 2 || self.max_size < 2) {
            return fail("classification needs max_depth and max_size of at least 2");
        }
        if self.lm_iterations == 0 {
            return fail("lm_iterations must be at least 1");
        }
        if !self.mutation_weights.is_valid() {
            return fail("mutation weights must be non-negative with a positive sum");
        }
        if !(0.0..=1.0).contains(&self.crossover_probability) {
            return fail("crossover_probability must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return fail("validation_fraction must lie in [0, 1)");
        }
        if self.objectives.is_empty() {
            return fail("at least one objective is required");
        }
        if self.workers == Some(0) {
            return fail("workers must be at least 1");
        }
        if let Some(s) = &self.simplify {
            s.validate()?;
        }
        Ok(())
    }

    pub fn space(&self, feature_names: Vec<String>) -> SearchSpace {
        let mut space = SearchSpace::new(self.functions.clone(), feature_names, self.task);
        space.split_seeded = self.split_seeded_init;
        space.constants = self.constants;
        space
    }

    pub fn fit_settings(&self) -> FitSettings {
        FitSettings {
            lm: LmSettings::with_iterations(self.lm_iterations),
            criterion: self.split_criterion,
        }
    }

    fn variation_settings(&self) -> VariationSettings {
        VariationSettings {
            max_depth: self.max_depth,
            max_size: self.max_size,
            crossover_probability: self.crossover_probability,
            weights: self.mutation_weights.clone(),
            max_retries: self.max_retries,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Individual {
    pub program: Program,
    pub loss: f64,
    pub complexity: u64,
    pub objectives: Vec<f64>,
    pub rank: usize,
    pub crowding: f64,
    /// Per-training-row error (squared error or log-loss).
    pub case_errors: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_loss: f64,
    pub median_loss: f64,
    pub front_size: usize,
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    /// Selected (and, if configured, simplified) model.
    pub model: Program,
    /// The selected model before simplification.
    pub selected: Program,
    /// Rank-0 individuals of the final population.
    pub archive: Vec<Individual>,
    pub history: Vec<GenerationRecord>,
    pub train_loss: f64,
    pub validation_loss: f64,
    pub generations: usize,
    pub train_rows: Vec<usize>,
    pub validation_rows: Vec<usize>,
}

/// Reproducible RNG for one (generation, slot) pair of a run.
pub fn rng_stream(seed: u64, generation: u64, slot: u64) -> ChaCha8Rng {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(splitmix(seed) ^ generation) ^ slot))
}

const SELECTION_SLOT: u64 = u64::MAX;
const HOLDOUT_GENERATION: u64 = u64::MAX;

struct Evaluator<'a> {
    x: &'a FeatureMatrix,
    rows: &'a [usize],
    targets: Vec<f64>,
    config: &'a SearchConfig,
    fit: FitSettings,
}

impl Evaluator<'_> {
    fn assess(&self, program: &Program) -> Individual {
        let fitted = fit_rows(program, self.x, self.rows, &self.targets, &self.fit).program;
        let preds = eval_node(&fitted.root, self.x, self.rows, None).values;
        let case_errors = case_errors(self.config.task, &self.targets, &preds);
        let loss = mean_loss(&case_errors);
        let complexity = fitted.linear_complexity(&self.config.complexity);
        let objectives = self
            .config
            .objectives
            .iter()
            .map(|o| match o {
                Objective::Loss => loss,
                Objective::LinearComplexity => complexity as f64,
                Objective::Size => fitted.size() as f64,
            })
            .collect();
        Individual {
            program: fitted,
            loss,
            complexity,
            objectives,
            rank: 0,
            crowding: 0.0,
            case_errors,
        }
    }
}

/// Per-row errors with non-finite values mapped to `f64::MAX`.
pub fn case_errors(task: TaskKind, y: &[f64], preds: &[f64]) -> Vec<f64> {
    y.iter()
        .zip(preds)
        .map(|(&t, &p)| {
            let e = match task {
                TaskKind::Regression => (p - t) * (p - t),
                TaskKind::Classification => row_log_loss(t, p),
            };
            if e.is_finite() {
                e
            } else {
                f64::MAX
            }
        })
        .collect()
}

fn mean_loss(errors: &[f64]) -> f64 {
    if errors.iter().any(|&e| e == f64::MAX) {
        return f64::MAX;
    }
    let m = errors.iter().sum::<f64>() / errors.len().max(1) as f64;
    if m.is_finite() {
        m
    } else {
        f64::MAX
    }
}

fn holdout(config: &SearchConfig, dataset: &Dataset) -> Result<(Vec<usize>, Vec<usize>)> {
    let all: Vec<usize> = (0..dataset.n_rows()).collect();
    if config.validation_fraction == 0.0 || dataset.n_rows() < 4 {
        return Ok((all.clone(), all));
    }
    let classes_ok = dataset.task == TaskKind::Classification && {
        let pos = dataset.y.iter().filter(|&&v| v != 0.0).count();
        pos >= 2 && dataset.n_rows() - pos >= 2
    };
    let spec = SplitSpec {
        train_fraction: 1.0 - config.validation_fraction,
        stratified: classes_ok,
        folds: None,
        seed: rng_seed(config.seed, HOLDOUT_GENERATION),
    };
    split(dataset, &spec)
}

fn rng_seed(seed: u64, generation: u64) -> u64 {
    use rand::RngCore;
    rng_stream(seed, generation, 0).next_u64()
}

fn rank_population(pool: Vec<Individual>, n: usize) -> Vec<Individual> {
    let objectives: Vec<Vec<f64>> = pool.iter().map(|i| i.objectives.clone()).collect();
    let survivors = nsga2_survive(&objectives, n);
    let mut slots: Vec<Option<Individual>> = pool.into_iter().map(Some).collect();
    survivors
        .into_iter()
        .map(|s| {
            let mut ind = slots[s.index].take().expect("each survivor appears once");
            ind.rank = s.rank;
            ind.crowding = s.crowding;
            ind
        })
        .collect()
}

fn record(generation: usize, population: &[Individual]) -> GenerationRecord {
    let front: Vec<&Individual> = population.iter().filter(|i| i.rank == 0).collect();
    let best_loss = front.iter().map(|i| i.loss).fold(f64::INFINITY, f64::min);
    let mut losses: Vec<f64> = population.iter().map(|i| i.loss).collect();
    losses.sort_by(f64::total_cmp);
    let n = losses.len();
    let median_loss = if n % 2 == 1 {
        losses[n / 2]
    } else {
        0.5 * (losses[n / 2 - 1] + losses[n / 2])
    };
    GenerationRecord {
        generation,
        best_loss,
        median_loss,
        front_size: front.len(),
    }
}

pub fn run(config: &SearchConfig, dataset: &Dataset) -> Result<SearchResult> {
    run_with_progress(config, dataset, |_| {})
}

/// Runs the search, calling `progress` after initialization (generation 0)
/// and after every generation.
pub fn run_with_progress(
    config: &SearchConfig,
    dataset: &Dataset,
    progress: impl FnMut(&GenerationRecord) + Send,
) -> Result<SearchResult> {
    config.validate()?;
    if dataset.task != config.task {
        return Err(Error::Config(format!(
            "dataset task is {} but the search is configured for {}",
            dataset.task, config.task
        )));
    }
    let space = config.space(dataset.feature_names.clone());
    space.validate()?;
    if config.workers == Some(1) {
        return evolve(config, dataset, &space, progress);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| evolve(config, dataset, &space, progress))
}

/// `f` over `0..n` in slot order. A single worker stays on the calling
/// thread, so a run nested in another pool never picks up foreign jobs.
fn map_slots<T: Send>(serial: bool, n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    if serial {
        (0..n).map(f).collect()
    } else {
        (0..n).into_par_iter().map(f).collect()
    }
}

fn evolve(
    config: &SearchConfig,
    dataset: &Dataset,
    space: &SearchSpace,
    mut progress: impl FnMut(&GenerationRecord),
) -> Result<SearchResult> {
    let started = Instant::now();
    let (train_rows, validation_rows) = holdout(config, dataset)?;
    let evaluator = Evaluator {
        x: &dataset.x,
        rows: &train_rows,
        targets: train_rows.iter().map(|&r| dataset.y[r]).collect(),
        config,
        fit: config.fit_settings(),
    };
    let n = config.pop_size;

    let serial = config.workers == Some(1);
    let initial: Vec<Individual> = map_slots(serial, n, |i| {
        let mut rng = rng_stream(config.seed, 0, i as u64);
        let program = generate_random(space, &mut rng, config.max_depth, config.max_size)
            .expect("space validated");
        evaluator.assess(&program)
    });
    let mut population = rank_population(initial, n);
    let mut history = vec![record(0, &population)];
    progress(&history[0]);

    let variation = config.variation_settings();
    let mut generations = 0;
    for generation in 1..=config.max_gens {
        if let Some(limit) = config.time_limit_secs {
            if started.elapsed().as_secs_f64() >= limit {
                break;
            }
        }
        let errors: Vec<Vec<f64>> = population.iter().map(|i| i.case_errors.clone()).collect();
        let mut select_rng = rng_stream(config.seed, generation as u64, SELECTION_SLOT);
        let parents = epsilon_lexicase_select(&errors, n, &mut select_rng);
        drop(errors);

        let offspring: Vec<Individual> = map_slots(serial, n, |i| {
            let mut rng = rng_stream(config.seed, generation as u64, i as u64);
            let first = &population[parents[i]].program;
            let second = &population[parents[(i + 1) % n]].program;
            let child = vary(first, second, space, &variation, &mut rng);
            evaluator.assess(&child.program)
        });
        population.extend(offspring);
        population = rank_population(population, n);
        generations = generation;
        let rec = record(generation, &population);
        progress(&rec);
        history.push(rec);
    }

    let archive: Vec<Individual> = population.iter().filter(|i| i.rank == 0).cloned().collect();
    let validation_targets: Vec<f64> = validation_rows.iter().map(|&r| dataset.y[r]).collect();
    let scored: Vec<(f64, u64, usize)> = archive
        .iter()
        .enumerate()
        .map(|(k, ind)| {
            let preds = eval_node(&ind.program.root, &dataset.x, &validation_rows, None).values;
            let loss = mean_loss(&case_errors(config.task, &validation_targets, &preds));
            (loss, ind.complexity, k)
        })
        .collect();
    let &(validation_loss, _, best) = scored
        .iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)))
        .expect("archive is never empty");
    let selected = archive[best].program.clone();
    let model = match &config.simplify {
        Some(settings) => {
            let programs: Vec<&Program> = population.iter().map(|i| &i.program).collect();
            let x_train = dataset.x.select_rows(&train_rows);
            let settings = SimplifySettings {
                complexity: config.complexity.clone(),
                ..settings.clone()
            };
            simplify_with_population(&selected, &programs, &x_train, &evaluator.targets, &settings)
        }
        None => selected.clone(),
    };
    let model_preds = eval_node(&model.root, &dataset.x, &train_rows, None).values;
    let train_loss = mean_loss(&case_errors(config.task, &evaluator.targets, &model_preds));

    Ok(SearchResult {
        model,
        selected,
        archive,
        history,
        train_loss,
        validation_loss,
        generations,
        train_rows,
        validation_rows,
    })
}
