//! Benchmark harness: runs search configurations over a directory of CSV
//! problems at several target-noise levels and aggregates the results.
//!
//! Per-run records hold no timing data, so `runs.jsonl` and the summaries
//! derived from it are reproducible byte for byte; wall times go to a
//! separate `timings.jsonl`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clinical::{generate_dataset, GeneratorSpec, ScoreSystem};
use crate::data::{
    add_target_noise, auprc, balanced_accuracy, load_csv, mse, r2, split, threshold_labels,
    write_csv, Dataset, FeatureMatrix, SplitSpec, TaskKind,
};
use crate::error::{Error, Result};
use crate::expr::ModelDocument;
use crate::search::{rng_stream, run as run_search, SearchConfig};

/// R² above which a run counts as an exact recovery.
pub const SOLUTION_R2: f64 = 0.999;

/// Optional `<stem>.json` next to a problem CSV.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProblemSidecar {
    pub target: Option<String>,
    pub task: Option<TaskKind>,
    pub expression: Option<String>,
}

#[derive(Clone, Debug)]
pub struct Problem {
    pub name: String,
    pub target: String,
    pub task: TaskKind,
    pub expression: Option<String>,
    /// The loaded data, or the reason loading failed.
    pub data: std::result::Result<Dataset, String>,
}

fn last_column(path: &Path) -> Result<String> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.headers()?
        .iter()
        .last()
        .map(|h| h.trim().to_string())
        .ok_or_else(|| Error::EmptyInput(format!("{} has no header", path.display())))
}

fn load_problem(path: &Path) -> Problem {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let sidecar_path = path.with_extension("json");
    let sidecar: std::result::Result<ProblemSidecar, String> = if sidecar_path.exists() {
        fs::read_to_string(&sidecar_path)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()))
    } else {
        Ok(ProblemSidecar::default())
    };
    let sidecar = match sidecar {
        Ok(s) => s,
        Err(e) => {
            return Problem {
                name,
                target: String::new(),
                task: TaskKind::Regression,
                expression: None,
                data: Err(format!("sidecar {}: {e}", sidecar_path.display())),
            }
        }
    };
    let task = sidecar.task.unwrap_or(TaskKind::Regression);
    let target = match sidecar.target.map_or_else(|| last_column(path), Ok) {
        Ok(t) => t,
        Err(e) => {
            return Problem {
                name,
                target: String::new(),
                task,
                expression: sidecar.expression,
                data: Err(e.to_string()),
            }
        }
    };
    let data = load_csv(path, &target, task)
        .map(|(d, _)| d)
        .map_err(|e| e.to_string());
    Problem {
        name,
        target,
        task,
        expression: sidecar.expression,
        data,
    }
}

/// Every `*.csv` in `dir`, sorted by file name.
pub fn load_suite(dir: impl AsRef<Path>) -> Result<Vec<Problem>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir.as_ref())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no CSV problems in {}",
            dir.as_ref().display()
        )));
    }
    Ok(paths.iter().map(|p| load_problem(p)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub search: SearchConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub variants: Vec<Variant>,
    pub noise_levels: Vec<f64>,
    pub repeats: usize,
    pub seed: u64,
    pub train_fraction: f64,
    /// Concurrent runs (`None`: all cores). Never affects results.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl BenchConfig {
    pub fn new(search: SearchConfig) -> Self {
        Self {
            variants: vec![Variant {
                name: "default".into(),
                search,
            }],
            noise_levels: vec![0.0],
            repeats: 1,
            seed: 0,
            train_fraction: 0.75,
            workers: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() || self.repeats == 0 || self.noise_levels.is_empty() {
            return Err(Error::Config(
                "a benchmark needs at least one variant, repeat and noise level".into(),
            ));
        }
        if self.noise_levels.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::Config("noise levels must be finite and >= 0".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        for v in &self.variants {
            v.search.validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub problem: String,
    pub variant: String,
    pub task: TaskKind,
    pub noise: f64,
    pub repeat: usize,
    pub seed: u64,
    pub error: Option<String>,
    pub test_r2: Option<f64>,
    pub test_mse: Option<f64>,
    pub test_auprc: Option<f64>,
    pub test_balanced_accuracy: Option<f64>,
    pub train_loss: Option<f64>,
    pub size: Option<usize>,
    pub complexity: Option<u64>,
    pub expression: Option<String>,
    pub ground_truth: Option<String>,
    pub model: Option<ModelDocument>,
}

impl RunRecord {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }

    /// R² for regression, AUPRC for classification.
    pub fn score(&self) -> Option<f64> {
        match self.task {
            TaskKind::Regression => self.test_r2,
            TaskKind::Classification => self.test_auprc,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub problem: String,
    pub variant: String,
    pub noise: f64,
    pub repeat: usize,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct BenchOutput {
    pub records: Vec<RunRecord>,
    pub timings: Vec<TimingRecord>,
    pub summary: Summary,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

struct RunSpec<'a> {
    problem: &'a Problem,
    problem_index: usize,
    variant: &'a Variant,
    noise: f64,
    noise_index: usize,
    repeat: usize,
}

fn execute(spec: &RunSpec, config: &BenchConfig, inner_workers: Option<usize>) -> (RunRecord, f64) {
    let started = Instant::now();
    let seed = rng_stream(config.seed, spec.problem_index as u64, spec.repeat as u64).next_u64();
    let mut record = RunRecord {
        problem: spec.problem.name.clone(),
        variant: spec.variant.name.clone(),
        task: spec.problem.task,
        noise: spec.noise,
        repeat: spec.repeat,
        seed,
        error: None,
        test_r2: None,
        test_mse: None,
        test_auprc: None,
        test_balanced_accuracy: None,
        train_loss: None,
        size: None,
        complexity: None,
        expression: None,
        ground_truth: spec.problem.expression.clone(),
        model: None,
    };
    if let Err(e) = run_one(spec, config, seed, inner_workers, &mut record) {
        record.error = Some(e.to_string());
    }
    (record, started.elapsed().as_secs_f64())
}

fn run_one(
    spec: &RunSpec,
    config: &BenchConfig,
    seed: u64,
    inner_workers: Option<usize>,
    record: &mut RunRecord,
) -> Result<()> {
    let data = spec
        .problem
        .data
        .as_ref()
        .map_err(|e| Error::InvalidData(e.clone()))?;
    let split_spec = SplitSpec {
        train_fraction: config.train_fraction,
        stratified: data.task == TaskKind::Classification,
        folds: None,
        seed,
    };
    let (train_idx, test_idx) = split(data, &split_spec)?;
    let mut train = data.subset(&train_idx);
    let test = data.subset(&test_idx);
    if data.task == TaskKind::Regression && spec.noise > 0.0 {
        let mut rng = rng_stream(seed, spec.noise_index as u64, 1);
        let _ = rng.random::<u64>();
        train.y = add_target_noise(&train.y, spec.noise, &mut rng);
    }
    let mut search = spec.variant.search.clone();
    search.seed = seed;
    search.task = data.task;
    search.workers = inner_workers;
    let result = run_search(&search, &train)?;
    let model = result.model;
    let preds = model.evaluate(&test.x)?;
    match data.task {
        TaskKind::Regression => {
            record.test_r2 = finite(r2(&test.y, &preds));
            record.test_mse = finite(mse(&test.y, &preds));
        }
        TaskKind::Classification => {
            if preds.iter().all(|p| p.is_finite()) {
                record.test_auprc = finite(auprc(&test.y, &preds));
                record.test_balanced_accuracy =
                    finite(balanced_accuracy(&test.y, &threshold_labels(&preds, 0.5)));
            }
        }
    }
    record.train_loss = finite(result.train_loss);
    record.size = Some(model.size());
    record.complexity = Some(model.linear_complexity(&search.complexity));
    record.expression = Some(model.to_infix());
    record.model = Some(model.to_document(&search.complexity));
    Ok(())
}

/// Runs every (problem, variant, noise level, repeat) combination. Noise is
/// added to training targets only; test metrics use the clean targets.
pub fn run_suite(problems: &[Problem], config: &BenchConfig) -> Result<BenchOutput> {
    config.validate()?;
    let mut specs = Vec::new();
    for (problem_index, problem) in problems.iter().enumerate() {
        for variant in &config.variants {
            for (noise_index, &noise) in config.noise_levels.iter().enumerate() {
                for repeat in 0..config.repeats {
                    specs.push(RunSpec {
                        problem,
                        problem_index,
                        variant,
                        noise,
                        noise_index,
                        repeat,
                    });
                }
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let results: Vec<(RunRecord, f64)> = if pool.current_num_threads() > 1 {
        pool.install(|| specs.par_iter().map(|s| execute(s, config, Some(1))).collect())
    } else {
        specs.iter().map(|s| execute(s, config, config.workers)).collect()
    };
    let timings = results
        .iter()
        .map(|(r, secs)| TimingRecord {
            problem: r.problem.clone(),
            variant: r.variant.clone(),
            noise: r.noise,
            repeat: r.repeat,
            wall_seconds: *secs,
        })
        .collect();
    let records: Vec<RunRecord> = results.into_iter().map(|(r, _)| r).collect();
    let summary = summarize(&records);
    Ok(BenchOutput {
        records,
        timings,
        summary,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(values: &[f64]) -> Option<Stat> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some(Stat { mean, sd })
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// 1-based ranks with ties sharing their average rank. `higher_is_better`
/// ranks the largest value first.
pub fn average_ranks(values: &[f64], higher_is_better: bool) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let c = values[a].total_cmp(&values[b]);
        if higher_is_better {
            c.reverse()
        } else {
            c
        }
    });
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemRow {
    pub problem: String,
    pub variant: String,
    pub task: TaskKind,
    pub noise: f64,
    pub runs: usize,
    pub failures: usize,
    pub r2: Option<Stat>,
    pub auprc: Option<Stat>,
    pub size: Option<Stat>,
    pub complexity: Option<Stat>,
    /// Share of runs with R² above the solution threshold (regression only).
    pub accuracy_solution: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub variant: String,
    pub noise: f64,
    pub runs: usize,
    pub solved: usize,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoRow {
    pub variant: String,
    /// Mean over problems of the variant's rank by median test score.
    pub score_rank: f64,
    /// Mean over problems of the variant's rank by median model size.
    pub size_rank: f64,
    pub median_score: Option<f64>,
    pub median_size: Option<f64>,
    /// Not dominated by another variant on the two ranks.
    pub front: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub problems: Vec<ProblemRow>,
    pub accuracy: Vec<AccuracyRow>,
    pub pareto: Vec<ParetoRow>,
}

fn first_seen<T: PartialEq + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for item in items {
        if !out.contains(&item) {
            out.push(item);
        }
    }
    out
}

/// Aggregates run records. A pure function of `records` and their order.
pub fn summarize(records: &[RunRecord]) -> Summary {
    let problems = first_seen(records.iter().map(|r| r.problem.clone()));
    let variants = first_seen(records.iter().map(|r| r.variant.clone()));
    let noises = first_seen(records.iter().map(|r| r.noise.to_bits()));

    let collect = |rs: &[&RunRecord], f: &dyn Fn(&RunRecord) -> Option<f64>| -> Vec<f64> {
        rs.iter().filter(|r| r.ok()).filter_map(|r| f(r)).collect()
    };

    let mut rows = Vec::new();
    for p in &problems {
        for v in &variants {
            for &n in &noises {
                let group: Vec<&RunRecord> = records
                    .iter()
                    .filter(|r| &r.problem == p && &r.variant == v && r.noise.to_bits() == n)
                    .collect();
                if group.is_empty() {
                    continue;
                }
                let task = group[0].task;
                let failures = group.iter().filter(|r| !r.ok()).count();
                let accuracy_solution = (task == TaskKind::Regression).then(|| {
                    let solved = group
                        .iter()
                        .filter(|r| r.test_r2.is_some_and(|v| v > SOLUTION_R2))
                        .count();
                    solved as f64 / group.len() as f64
                });
                rows.push(ProblemRow {
                    problem: p.clone(),
                    variant: v.clone(),
                    task,
                    noise: f64::from_bits(n),
                    runs: group.len(),
                    failures,
                    r2: mean_sd(&collect(&group, &|r| r.test_r2)),
                    auprc: mean_sd(&collect(&group, &|r| r.test_auprc)),
                    size: mean_sd(&collect(&group, &|r| r.size.map(|s| s as f64))),
                    complexity: mean_sd(&collect(&group, &|r| r.complexity.map(|c| c as f64))),
                    accuracy_solution,
                });
            }
        }
    }

    let mut accuracy = Vec::new();
    for v in &variants {
        for &n in &noises {
            let group: Vec<&RunRecord> = records
                .iter()
                .filter(|r| {
                    &r.variant == v && r.noise.to_bits() == n && r.task == TaskKind::Regression
                })
                .collect();
            if group.is_empty() {
                continue;
            }
            let solved = group
                .iter()
                .filter(|r| r.test_r2.is_some_and(|x| x > SOLUTION_R2))
                .count();
            accuracy.push(AccuracyRow {
                variant: v.clone(),
                noise: f64::from_bits(n),
                runs: group.len(),
                solved,
                rate: solved as f64 / group.len() as f64,
            });
        }
    }

    let mut score_rank_sum = vec![0.0; variants.len()];
    let mut size_rank_sum = vec![0.0; variants.len()];
    let mut ranked_problems = 0usize;
    for p in &problems {
        let per_variant: Vec<(f64, f64)> = variants
            .iter()
            .map(|v| {
                let group: Vec<&RunRecord> = records
                    .iter()
                    .filter(|r| &r.problem == p && &r.variant == v)
                    .collect();
                let score = median(&collect(&group, &|r| r.score())).unwrap_or(f64::NEG_INFINITY);
                let size = median(&collect(&group, &|r| r.size.map(|s| s as f64)))
                    .unwrap_or(f64::INFINITY);
                (score, size)
            })
            .collect();
        let scores: Vec<f64> = per_variant.iter().map(|x| x.0).collect();
        let sizes: Vec<f64> = per_variant.iter().map(|x| x.1).collect();
        for (k, r) in average_ranks(&scores, true).into_iter().enumerate() {
            score_rank_sum[k] += r;
        }
        for (k, r) in average_ranks(&sizes, false).into_iter().enumerate() {
            size_rank_sum[k] += r;
        }
        ranked_problems += 1;
    }
    let denom = ranked_problems.max(1) as f64;
    let ranks: Vec<(f64, f64)> = score_rank_sum
        .iter()
        .zip(&size_rank_sum)
        .map(|(s, z)| (s / denom, z / denom))
        .collect();
    let pareto = variants
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let group: Vec<&RunRecord> = records.iter().filter(|r| &r.variant == v).collect();
            let (s, z) = ranks[k];
            let dominated = ranks
                .iter()
                .any(|&(s2, z2)| s2 <= s && z2 <= z && (s2 < s || z2 < z));
            ParetoRow {
                variant: v.clone(),
                score_rank: s,
                size_rank: z,
                median_score: median(&collect(&group, &|r| r.score())),
                median_size: median(&collect(&group, &|r| r.size.map(|x| x as f64))),
                front: !dominated,
            }
        })
        .collect();

    Summary {
        problems: rows,
        accuracy,
        pareto,
    }
}

fn fmt_stat(s: &Option<Stat>) -> String {
    s.as_ref()
        .map_or_else(|| "-".into(), |s| format!("{:.4} ± {:.4}", s.mean, s.sd))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

pub fn render_markdown(summary: &Summary) -> String {
    let mut out = String::from("# Benchmark summary\n\n## Per problem\n\n");
    out.push_str("| problem | variant | task | noise | runs | failed | R² | AUPRC | size | complexity | R² > 0.999 |\n");
    out.push_str("|---|---|---|---|---|---|---|---|---|---|---|\n");
    for r in &summary.problems {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |\n",
            r.problem,
            r.variant,
            r.task,
            r.noise,
            r.runs,
            r.failures,
            fmt_stat(&r.r2),
            fmt_stat(&r.auprc),
            fmt_stat(&r.size),
            fmt_stat(&r.complexity),
            fmt_opt(r.accuracy_solution),
        ));
    }
    out.push_str("\n## Accuracy solution (R² > 0.999)\n\n| variant | noise | solved | runs | rate |\n|---|---|---|---|---|\n");
    for a in &summary.accuracy {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {:.4} |\n",
            a.variant, a.noise, a.solved, a.runs, a.rate
        ));
    }
    out.push_str("\n## Pareto ranks\n\n| variant | score rank | size rank | median score | median size | front |\n|---|---|---|---|---|---|\n");
    for p in &summary.pareto {
        out.push_str(&format!(
            "| {} | {:.2} | {:.2} | {} | {} | {} |\n",
            p.variant,
            p.score_rank,
            p.size_rank,
            fmt_opt(p.median_score),
            fmt_opt(p.median_size),
            if p.front { "yes" } else { "no" },
        ));
    }
    out
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut file = std::io::BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut file, item)?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    Ok(())
}

pub const RUNS_FILE: &str = "runs.jsonl";
pub const TIMINGS_FILE: &str = "timings.jsonl";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_MD: &str = "summary.md";

/// Writes run records, timings, and both summaries into `dir`.
pub fn write_report(dir: impl AsRef<Path>, output: &BenchOutput) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    write_jsonl(&dir.join(RUNS_FILE), &output.records)?;
    write_jsonl(&dir.join(TIMINGS_FILE), &output.timings)?;
    write_summaries(dir, &output.summary)
}

fn write_summaries(dir: &Path, summary: &Summary) -> Result<()> {
    let mut json = serde_json::to_string_pretty(summary)?;
    json.push('\n');
    fs::write(dir.join(SUMMARY_JSON), json)?;
    fs::write(dir.join(SUMMARY_MD), render_markdown(summary))?;
    Ok(())
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let path = path.as_ref();
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Document {
            path: format!("{}:{}", path.display(), i + 1),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Rebuilds both summaries in `dir` from its persisted run records.
pub fn regenerate_report(dir: impl AsRef<Path>) -> Result<Summary> {
    let dir = dir.as_ref();
    let summary = summarize(&read_records(dir.join(RUNS_FILE))?);
    write_summaries(dir, &summary)?;
    Ok(summary)
}

type Formula = fn(&[f64]) -> f64;

/// Closed-form physics problems: (name, inputs, formula text, formula).
pub fn ground_truth_equations() -> Vec<(&'static str, Vec<&'static str>, &'static str, Formula)> {
    vec![
        ("kinetic_energy", vec!["m", "v"], "0.5*m*v^2", |x| 0.5 * x[0] * x[1] * x[1]),
        ("gravitation", vec!["m1", "m2", "r"], "m1*m2/r^2", |x| x[0] * x[1] / (x[2] * x[2])),
        ("ideal_gas", vec!["n", "T", "V"], "8.314*n*T/V", |x| 8.314 * x[0] * x[1] / x[2]),
        ("pendulum_period", vec!["L", "g"], "2*pi*sqrt(L/g)", |x| {
            2.0 * std::f64::consts::PI * (x[0] / x[1]).sqrt()
        }),
        ("oscillator", vec!["A", "w", "t"], "A*cos(w*t)", |x| x[0] * (x[1] * x[2]).cos()),
        ("uniform_motion", vec!["x0", "v", "t"], "x0 + v*t", |x| x[0] + x[1] * x[2]),
    ]
}

fn write_problem(dir: &Path, name: &str, data: &Dataset, target: &str, expression: Option<&str>) -> Result<()> {
    let file = fs::File::create(dir.join(format!("{name}.csv")))?;
    write_csv(data, target, std::io::BufWriter::new(file))?;
    let sidecar = ProblemSidecar {
        target: Some(target.to_string()),
        task: Some(data.task),
        expression: expression.map(str::to_string),
    };
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    fs::write(dir.join(format!("{name}.json")), text)?;
    Ok(())
}

/// Writes the six closed-form problems, inputs uniform on [1, 5].
pub fn write_ground_truth_suite(dir: impl AsRef<Path>, rows: usize, seed: u64) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (k, (name, inputs, text, f)) in ground_truth_equations().into_iter().enumerate() {
        let mut rng = rng_stream(seed, k as u64, 0);
        let columns: Vec<Vec<f64>> = inputs
            .iter()
            .map(|_| (0..rows).map(|_| rng.random_range(1.0..5.0)).collect())
            .collect();
        let y: Vec<f64> = (0..rows)
            .map(|r| f(&columns.iter().map(|c| c[r]).collect::<Vec<_>>()))
            .collect();
        let names = inputs.iter().map(|s| s.to_string()).collect();
        let data = Dataset::new(FeatureMatrix::from_columns(columns)?, y, names, TaskKind::Regression)?;
        write_problem(dir, name, &data, "y", Some(text))?;
    }
    Ok(())
}

/// Writes the five clinical tasks: MAP, CART and MEWS scores as regression
/// targets, and the CART and MEWS deterioration labels as classification
/// targets. Score columns are never exposed as features.
pub fn write_clinical_suite(dir: impl AsRef<Path>, rows: usize, distractors: usize, seed: u64) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let gen = |system, offset: u64| {
        generate_dataset(&GeneratorSpec {
            distractors,
            ..GeneratorSpec::new(system, rows, seed.wrapping_add(offset))
        })
    };
    let map = gen(ScoreSystem::Map, 0)?;
    write_problem(dir, "map", &map.regression()?, "MAP", Some("(sbp + 2*dbp)/3"))?;
    for (system, offset, name) in [(ScoreSystem::Cart, 1, "cart"), (ScoreSystem::Mews, 2, "mews")] {
        let data = gen(system, offset)?;
        write_problem(dir, &format!("{name}_score"), &data.regression()?, system.column(), None)?;
        write_problem(dir, &format!("{name}_label"), &data.classification()?, "label", None)?;
    }
    Ok(())
}

/// Groups records by key and returns them in first-appearance order.
pub fn group_by<'a, K: Ord + Clone>(
    records: &'a [RunRecord],
    key: impl Fn(&RunRecord) -> K,
) -> BTreeMap<K, Vec<&'a RunRecord>> {
    let mut map: BTreeMap<K, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        map.entry(key(r)).or_default().push(r);
    }
    map
}
