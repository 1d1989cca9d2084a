//! Search configuration assembly: flags override the config file, which
//! overrides the built-in profile defaults.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use serde_json::{Map, Value};
use splitsr::search::Profile;
use splitsr::{SearchConfig, Symbol, TaskKind};

use crate::UsageError;

#[derive(Args, Debug, Clone, Default)]
pub struct SearchArgs {
    /// Built-in defaults: `clinical` or `srbench`.
    #[arg(long)]
    pub profile: Option<String>,
    /// JSON file with search settings (any subset of fields, plus an
    /// optional "profile").
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub pop_size: Option<usize>,
    #[arg(long)]
    pub max_gens: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub max_size: Option<usize>,
    /// Levenberg-Marquardt iterations per fit.
    #[arg(long)]
    pub lm_iterations: Option<usize>,
    /// Comma-separated operator names, e.g. `add,mul,split`.
    #[arg(long)]
    pub functions: Option<String>,
    /// Remove split operators from the function set.
    #[arg(long)]
    pub no_splits: bool,
    /// Skip post-hoc simplification of the final model.
    #[arg(long)]
    pub no_simplify: bool,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    /// Wall-clock cap per search in seconds. Capped runs are not reproducible.
    #[arg(long)]
    pub time_limit: Option<f64>,
}

pub fn read_json_file(path: &Path) -> anyhow::Result<Value> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(|e| UsageError(format!("{}: {e}", path.display())).into())
}

/// Overlays the keys of `patch` onto `base`, recursing into objects.
pub fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p.clone(),
    }
}

/// Applies `patch` (a partial search config) on top of `config`.
pub fn overlay(config: &SearchConfig, patch: &Value) -> anyhow::Result<SearchConfig> {
    let mut value = serde_json::to_value(config)?;
    merge(&mut value, patch);
    serde_json::from_value(value).map_err(|e| UsageError(format!("invalid search settings: {e}")).into())
}

fn parse_profile(s: &str) -> anyhow::Result<Profile> {
    s.parse().map_err(|e: splitsr::Error| UsageError(e.to_string()).into())
}

pub fn resolve(
    args: &SearchArgs,
    task: Option<TaskKind>,
    seed: Option<u64>,
    workers: Option<usize>,
) -> anyhow::Result<SearchConfig> {
    let mut file = match &args.config {
        Some(path) => read_json_file(path)?,
        None => Value::Object(Map::new()),
    };
    let Value::Object(obj) = &mut file else {
        return Err(UsageError("config file must hold a JSON object".into()).into());
    };
    let file_profile = match obj.remove("profile") {
        Some(Value::String(s)) => Some(s),
        Some(other) => return Err(UsageError(format!("profile must be a string, got {other}")).into()),
        None => None,
    };
    let file_task = match obj.get("task") {
        Some(v) => Some(
            serde_json::from_value::<TaskKind>(v.clone())
                .map_err(|e| UsageError(format!("config task: {e}")))?,
        ),
        None => None,
    };
    let profile = match args.profile.as_deref().or(file_profile.as_deref()) {
        Some(p) => parse_profile(p)?,
        None => Profile::Clinical,
    };
    let task = task.or(file_task).unwrap_or(TaskKind::Regression);
    let mut config = overlay(&SearchConfig::profile(profile, task), &file)?;

    config.task = task;
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(v) = args.pop_size {
        config.pop_size = v;
    }
    if let Some(v) = args.max_gens {
        config.max_gens = v;
    }
    if let Some(v) = args.max_depth {
        config.max_depth = v;
    }
    if let Some(v) = args.max_size {
        config.max_size = v;
    }
    if let Some(v) = args.lm_iterations {
        config.lm_iterations = v;
    }
    if let Some(f) = &args.functions {
        config.functions =
            Symbol::parse_function_set(f).map_err(|e| UsageError(e.to_string()))?;
    }
    if args.no_splits {
        config = config.without_splits();
    }
    if args.no_simplify {
        config.simplify = None;
    }
    if let Some(v) = args.validation_fraction {
        config.validation_fraction = v;
    }
    if args.time_limit.is_some() {
        config.time_limit_secs = args.time_limit;
    }
    if workers.is_some() {
        config.workers = workers;
    }
    config.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(config)
}
