//! Subcommand implementations.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use splitsr::bench::{self, BenchConfig, Variant};
use splitsr::clinical::{generate_dataset, GeneratorSpec, ScoreSystem};
use splitsr::data::{
    auprc, balanced_accuracy, load_csv, log_loss, mse, r2, split, threshold_labels, SplitSpec,
};
use splitsr::search::{run_with_progress, GenerationRecord};
use splitsr::simplify::{simplify_with_population, SimplifySettings};
use splitsr::{Dataset, FeatureMatrix, NodeKind, Program, TaskKind};

use crate::config::{overlay, read_json_file, resolve};
use crate::{BenchArgs, ExportArgs, FitArgs, Global, PredictArgs, ScoreGenArgs, SimplifyArgs, UsageError};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn require_file(path: &Path) -> anyhow::Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("no such file: {}", path.display())))
    }
}

fn parse_task(task: Option<&str>) -> anyhow::Result<Option<TaskKind>> {
    task.map(|t| t.parse().map_err(|e: splitsr::Error| usage(e.to_string())))
        .transpose()
}

fn load(path: &Path, target: &str, task: TaskKind, exclude: &[String]) -> anyhow::Result<Dataset> {
    require_file(path)?;
    let (data, report) = load_csv(path, target, task).map_err(|e| match e {
        splitsr::Error::MissingColumn(c) => {
            usage(format!("missing target column `{c}` in {}", path.display()))
        }
        other => anyhow::Error::new(other).context(format!("loading {}", path.display())),
    })?;
    if report.dropped_rows > 0 {
        eprintln!(
            "note: dropped {} of {} rows with missing values in {}",
            report.dropped_rows,
            report.rows_read,
            path.display()
        );
    }
    if exclude.is_empty() {
        return Ok(data);
    }
    data.without_features(exclude).map_err(|e| match e {
        splitsr::Error::MissingColumn(c) => usage(format!("cannot exclude missing column `{c}`")),
        other => other.into(),
    })
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn pretty<T: Serialize>(value: &T) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn read_model(path: &Path) -> anyhow::Result<Program> {
    require_file(path)?;
    let text = fs::read_to_string(path)?;
    Program::from_json(&text).with_context(|| format!("reading model {}", path.display()))
}

/// Feature indices a model reads.
fn used_features(program: &Program) -> BTreeSet<usize> {
    program
        .root
        .iter()
        .filter_map(|n| match n.kind {
            NodeKind::Feature(j) => Some(j),
            NodeKind::SplitGreedy { feature, .. } => Some(feature),
            _ => None,
        })
        .collect()
}

/// Builds the model's feature matrix from named columns. Columns the model
/// never reads are zero-filled; missing ones are reported together.
fn align(
    program: &Program,
    rows: usize,
    column: impl Fn(&str) -> Option<Vec<f64>>,
) -> anyhow::Result<FeatureMatrix> {
    let used = used_features(program);
    let mut missing = Vec::new();
    let mut columns = Vec::with_capacity(program.feature_names.len());
    for (j, name) in program.feature_names.iter().enumerate() {
        match column(name) {
            Some(c) => columns.push(c),
            None if used.contains(&j) => missing.push(name.as_str()),
            None => columns.push(vec![0.0; rows]),
        }
    }
    if !missing.is_empty() {
        return Err(usage(format!("missing feature columns: {}", missing.join(", "))));
    }
    if columns.is_empty() {
        return Ok(FeatureMatrix::empty(rows));
    }
    Ok(FeatureMatrix::from_columns(columns)?)
}

fn align_dataset(program: &Program, data: &Dataset) -> anyhow::Result<FeatureMatrix> {
    align(program, data.n_rows(), |name| {
        data.feature_names
            .iter()
            .position(|n| n == name)
            .map(|j| data.x.column(j).to_vec())
    })
}

fn task_loss(task: TaskKind, y: &[f64], preds: &[f64]) -> f64 {
    match task {
        TaskKind::Regression => mse(y, preds),
        TaskKind::Classification => log_loss(y, preds),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SetMetrics {
    pub rows: usize,
    /// MSE for regression, log-loss for classification.
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auprc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub balanced_accuracy: Option<f64>,
}

fn set_metrics(task: TaskKind, y: &[f64], preds: &[f64]) -> SetMetrics {
    let mut m = SetMetrics {
        rows: y.len(),
        loss: task_loss(task, y, preds),
        r2: None,
        auprc: None,
        balanced_accuracy: None,
    };
    match task {
        TaskKind::Regression => m.r2 = Some(r2(y, preds)),
        TaskKind::Classification => {
            m.auprc = Some(auprc(y, preds));
            m.balanced_accuracy = Some(balanced_accuracy(y, &threshold_labels(preds, 0.5)));
        }
    }
    m
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitMetrics {
    pub target: String,
    pub task: TaskKind,
    pub seed: u64,
    pub generations: usize,
    pub size: usize,
    pub depth: usize,
    pub complexity: u64,
    pub expression: String,
    /// Loss of the selected model on the search's own training share.
    pub search_train_loss: f64,
    pub search_validation_loss: f64,
    pub train: SetMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<SetMetrics>,
}

pub fn fit(g: &Global, a: &FitArgs) -> anyhow::Result<()> {
    let task = parse_task(a.task.as_deref())?;
    let config = resolve(&a.search, task, g.seed, g.workers)?;
    let data = load(&a.data, &a.target, config.task, &a.exclude)?;

    let (train, test) = if let Some(path) = &a.test {
        let test = load(path, &a.target, config.task, &[])?;
        let order = data
            .feature_names
            .iter()
            .map(|n| test.feature_names.iter().position(|t| t == n).ok_or(n.as_str()))
            .collect::<Vec<_>>();
        let missing: Vec<&str> = order.iter().filter_map(|r| r.err()).collect();
        if !missing.is_empty() {
            return Err(usage(format!(
                "test CSV is missing feature columns: {}",
                missing.join(", ")
            )));
        }
        let order: Vec<usize> = order.into_iter().map(|r| r.unwrap_or_default()).collect();
        let aligned = Dataset::new(
            test.x.reorder_columns(&order),
            test.y.clone(),
            data.feature_names.clone(),
            config.task,
        )?;
        (data, Some(aligned))
    } else {
        let fraction = a.test_fraction.unwrap_or(0.25);
        if !(0.0..1.0).contains(&fraction) {
            return Err(usage("--test-fraction must lie in [0, 1)"));
        }
        if fraction == 0.0 {
            (data, None)
        } else {
            let spec = SplitSpec {
                train_fraction: 1.0 - fraction,
                stratified: config.task == TaskKind::Classification,
                folds: None,
                seed: config.seed,
            };
            let (tr, te) = split(&data, &spec)?;
            (data.subset(&tr), Some(data.subset(&te)))
        }
    };

    let verbose = a.verbose;
    let result = run_with_progress(&config, &train, move |r: &GenerationRecord| {
        if verbose {
            eprintln!(
                "generation {:>4}  best {:.6e}  median {:.6e}  front {}",
                r.generation, r.best_loss, r.median_loss, r.front_size
            );
        }
    })?;
    let model = &result.model;
    let train_preds = model.evaluate(&train.x)?;
    let test_metrics = match &test {
        Some(t) => Some(set_metrics(t.task, &t.y, &model.evaluate(&t.x)?)),
        None => None,
    };
    let metrics = FitMetrics {
        target: a.target.clone(),
        task: config.task,
        seed: config.seed,
        generations: result.generations,
        size: model.size(),
        depth: model.depth(),
        complexity: model.linear_complexity(&config.complexity),
        expression: model.to_infix(),
        search_train_loss: result.train_loss,
        search_validation_loss: result.validation_loss,
        train: set_metrics(config.task, &train.y, &train_preds),
        test: test_metrics,
    };

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_text(&a.out.join("model.json"), &(model.to_json(&config.complexity)? + "\n"))?;
    write_text(&a.out.join("model.txt"), &(model.to_infix() + "\n"))?;
    write_text(&a.out.join("model.pseudo"), &model.to_pseudocode())?;
    write_text(&a.out.join("metrics.json"), &pretty(&metrics)?)?;
    let mut persisted = config.clone();
    persisted.workers = None;
    write_text(&a.out.join("config.json"), &pretty(&persisted)?)?;

    if g.json {
        print!("{}", pretty(&metrics)?);
    } else {
        println!("model: {}", metrics.expression);
        println!(
            "size {}  depth {}  complexity {}  generations {}",
            metrics.size, metrics.depth, metrics.complexity, metrics.generations
        );
        print_set("train", &metrics.train);
        if let Some(t) = &metrics.test {
            print_set("test", t);
        }
        println!("wrote {}", a.out.display());
    }
    Ok(())
}

fn print_set(label: &str, m: &SetMetrics) {
    let mut line = format!("{label}: rows {}  loss {:.6e}", m.rows, m.loss);
    if let Some(v) = m.r2 {
        line += &format!("  R2 {v:.6}");
    }
    if let Some(v) = m.auprc {
        line += &format!("  AUPRC {v:.4}");
    }
    if let Some(v) = m.balanced_accuracy {
        line += &format!("  balanced accuracy {v:.4}");
    }
    println!("{line}");
}

fn parse_cell(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

#[derive(Debug, Serialize)]
struct PredictSummary {
    rows: usize,
    predicted: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    loss: Option<f64>,
}

pub fn predict(g: &Global, a: &PredictArgs) -> anyhow::Result<()> {
    let program = read_model(&a.model)?;
    require_file(&a.data)?;
    let mut rdr = csv::Reader::from_path(&a.data)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let records: Vec<csv::StringRecord> = rdr.records().collect::<Result<_, _>>()?;
    let target_idx = match &a.target {
        Some(t) => Some(
            headers
                .iter()
                .position(|h| h == t)
                .ok_or_else(|| usage(format!("missing target column `{t}`")))?,
        ),
        None => None,
    };

    let used = used_features(&program);
    let wanted: Vec<Option<usize>> = program
        .feature_names
        .iter()
        .enumerate()
        .map(|(j, n)| {
            used.contains(&j)
                .then(|| headers.iter().position(|h| h == n))
                .flatten()
        })
        .collect();
    let valid: Vec<usize> = (0..records.len())
        .filter(|&r| {
            wanted
                .iter()
                .flatten()
                .all(|&c| records[r].get(c).and_then(parse_cell).is_some())
        })
        .collect();
    let x = align(&program, valid.len(), |name| {
        let j = program.feature_names.iter().position(|n| n == name)?;
        if !used.contains(&j) {
            return None;
        }
        let c = headers.iter().position(|h| h == name)?;
        Some(
            valid
                .iter()
                .map(|&r| parse_cell(&records[r][c]).unwrap_or_default())
                .collect(),
        )
    })?;
    let preds = if valid.is_empty() {
        Vec::new()
    } else {
        program.evaluate(&x)?
    };

    let mut out = csv::Writer::from_path(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    let mut header = headers.clone();
    header.push(a.column.clone());
    out.write_record(&header)?;
    let mut next = valid.iter().zip(&preds).peekable();
    for (r, record) in records.iter().enumerate() {
        let mut row: Vec<String> = record.iter().map(str::to_string).collect();
        row.resize(headers.len(), String::new());
        match next.peek() {
            Some((&vr, p)) if vr == r => {
                row.push(p.to_string());
                next.next();
            }
            _ => row.push(String::new()),
        }
        out.write_record(&row)?;
    }
    out.flush()?;

    let loss = target_idx.and_then(|t| {
        let (y, p): (Vec<f64>, Vec<f64>) = valid
            .iter()
            .zip(&preds)
            .filter_map(|(&r, &p)| records[r].get(t).and_then(parse_cell).map(|y| (y, p)))
            .unzip();
        (!y.is_empty()).then(|| task_loss(program.task, &y, &p))
    });
    let summary = PredictSummary {
        rows: records.len(),
        predicted: valid.len(),
        loss,
    };
    if g.json {
        print!("{}", pretty(&summary)?);
    } else {
        println!("predicted {} of {} rows -> {}", summary.predicted, summary.rows, a.out.display());
        if let Some(l) = loss {
            println!("loss {l:e}");
        }
    }
    Ok(())
}

pub fn score_gen(g: &Global, a: &ScoreGenArgs) -> anyhow::Result<()> {
    let seed = g.seed.unwrap_or(0);
    if let Some(suite) = &a.suite {
        match suite.as_str() {
            "clinical" => bench::write_clinical_suite(&a.out, a.rows, a.distractors.unwrap_or(5), seed)?,
            "physics" => bench::write_ground_truth_suite(&a.out, a.rows, seed)?,
            other => return Err(usage(format!("unknown suite `{other}` (expected clinical or physics)"))),
        }
        if g.json {
            print!("{}", pretty(&serde_json::json!({"suite": suite, "rows": a.rows, "seed": seed}))?);
        } else {
            println!("wrote {suite} suite to {}", a.out.display());
        }
        return Ok(());
    }
    let system: ScoreSystem = a
        .system
        .as_deref()
        .unwrap_or_default()
        .parse()
        .map_err(|e: splitsr::Error| usage(e.to_string()))?;
    let mut spec = GeneratorSpec::new(system, a.rows, seed);
    if let Some(p) = a.prevalence {
        if system == ScoreSystem::Map {
            return Err(usage("MAP data has no label; --prevalence does not apply"));
        }
        spec.prevalence = Some(p);
    }
    if let Some(d) = a.distractors {
        spec.distractors = d;
    }
    let data = generate_dataset(&spec)?;
    let file = fs::File::create(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    data.write_csv(std::io::BufWriter::new(file))?;
    let prevalence = data.prevalence();
    if g.json {
        print!(
            "{}",
            pretty(&serde_json::json!({
                "system": system.to_string(),
                "rows": a.rows,
                "seed": seed,
                "columns": data.header(),
                "prevalence": prevalence,
            }))?
        );
    } else {
        print!("wrote {} rows of {system} data to {}", a.rows, a.out.display());
        match prevalence {
            Some(p) => println!(" (prevalence {p:.4})"),
            None => println!(),
        }
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct VariantSpec {
    name: String,
    #[serde(default)]
    search: Value,
}

pub fn bench(g: &Global, a: &BenchArgs) -> anyhow::Result<()> {
    if let Some(dir) = &a.regenerate {
        let summary = bench::regenerate_report(dir)?;
        return report(g, &summary);
    }
    let (Some(suite), Some(out)) = (&a.suite, &a.out) else {
        return Err(usage("--suite and --out are required"));
    };
    let base = resolve(&a.search, None, None, None)?;
    let mut variants = match &a.variants {
        Some(path) => {
            let specs: Vec<VariantSpec> = serde_json::from_value(read_json_file(path)?)
                .map_err(|e| usage(format!("{}: {e}", path.display())))?;
            specs
                .into_iter()
                .map(|v| {
                    Ok(Variant {
                        search: overlay(&base, &v.search)?,
                        name: v.name,
                    })
                })
                .collect::<anyhow::Result<Vec<_>>>()?
        }
        None => vec![Variant {
            name: "default".into(),
            search: base.clone(),
        }],
    };
    if a.compare_no_splits {
        variants.push(Variant {
            name: "no_splits".into(),
            search: base.without_splits(),
        });
    }
    let config = BenchConfig {
        variants,
        noise_levels: a.noise.clone(),
        repeats: a.repeats,
        seed: g.seed.unwrap_or(0),
        train_fraction: a.train_fraction,
        workers: g.workers,
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    let problems = bench::load_suite(suite).map_err(|e| usage(e.to_string()))?;
    let output = bench::run_suite(&problems, &config)?;
    bench::write_report(out, &output)?;
    if !g.json {
        eprintln!("wrote report to {}", out.display());
    }
    report(g, &output.summary)
}

fn report(g: &Global, summary: &bench::Summary) -> anyhow::Result<()> {
    if g.json {
        print!("{}", pretty(summary)?);
    } else {
        print!("{}", bench::render_markdown(summary));
    }
    Ok(())
}

pub fn simplify(g: &Global, a: &SimplifyArgs) -> anyhow::Result<()> {
    let program = read_model(&a.model)?;
    let data = load(&a.data, &a.target, program.task, &[])?;
    let x = align_dataset(&program, &data)?;
    let mut settings = SimplifySettings::default();
    if let Some(t) = a.tolerance {
        settings.tolerance = t;
    }
    settings.validate().map_err(|e| usage(e.to_string()))?;
    let simplified = simplify_with_population(&program, &[], &x, &data.y, &settings);
    let table = &settings.complexity;
    write_text(&a.out, &(simplified.to_json(table)? + "\n"))?;
    let summary = serde_json::json!({
        "size_before": program.size(),
        "size_after": simplified.size(),
        "complexity_before": program.linear_complexity(table),
        "complexity_after": simplified.linear_complexity(table),
        "expression": simplified.to_infix(),
    });
    if g.json {
        print!("{}", pretty(&summary)?);
    } else {
        println!(
            "complexity {} -> {}, size {} -> {}",
            summary["complexity_before"], summary["complexity_after"], summary["size_before"], summary["size_after"]
        );
        println!("model: {}", simplified.to_infix());
    }
    Ok(())
}

pub fn export(g: &Global, a: &ExportArgs) -> anyhow::Result<()> {
    let program = read_model(&a.model)?;
    let text = match a.format.as_str() {
        "json" => program.to_json(&splitsr::ComplexityTable::default())? + "\n",
        "infix" => program.to_infix() + "\n",
        "pseudocode" | "pseudo" => program.to_pseudocode(),
        other => {
            return Err(usage(format!(
                "unknown format `{other}` (expected json, infix or pseudocode)"
            )))
        }
    };
    match &a.out {
        Some(path) => {
            write_text(path, &text)?;
            if g.json {
                print!("{}", pretty(&serde_json::json!({"format": a.format, "out": path}))?);
            }
        }
        None if g.json && a.format != "json" => {
            print!("{}", pretty(&serde_json::json!({"format": a.format, "text": text}))?)
        }
        None => print!("{text}"),
    }
    Ok(())
}
