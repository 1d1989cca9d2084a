//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.
//!
//! Search budgets are desk-scale (one core, minutes per criterion) and are
//! listed in the constants below. Set `ACCEPTANCE_ONLY=1,5` to run a subset.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splitsr::bench::{self, BenchConfig};
use splitsr::clinical::{self, generate_dataset, GeneratorSpec, ScoreSystem};
use splitsr::data::{auprc, r2, split, SplitSpec};
use splitsr::expr::{generate_random, SearchSpace};
use splitsr::optimize::{
    find_split_threshold, fit_program, jacobian, lm_fit, midpoint, FitSettings, LmSettings,
    LmStatus, SplitCriterion,
};
use splitsr::search::{self, dominates, epsilon_lexicase_select, nsga2_survive, Profile};
use splitsr::simplify::{build_index, sample_indices, simplify_detailed, simplify_program};
use splitsr::{ComplexityTable, Dataset, FeatureMatrix, Program, SearchConfig, Symbol, TaskKind};

const CLINICAL_ROWS: usize = 10_000;
const CLINICAL_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
/// Seeds for the supplementary weighted-criterion runs (INFO lines only).
const SUPPLEMENT_SEEDS: [u64; 1] = [1];
const MAP_BUDGET: (usize, usize) = (100, 20);
const CART_BUDGET: (usize, usize) = (200, 40);
const MEWS_BUDGET: (usize, usize) = (200, 40);
const PHYSICS_BUDGET: (usize, usize) = (100, 30);
const PHYSICS_ROWS: usize = 1_000;
const NOISE_LEVELS: [f64; 4] = [0.0, 0.001, 0.01, 0.1];

struct Outcome {
    /// `None` marks a supplementary line that is not a criterion.
    pass: Option<bool>,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass: Some(pass),
        detail: detail.into(),
    }
}

fn info(detail: impl Into<String>) -> Outcome {
    Outcome {
        pass: None,
        detail: detail.into(),
    }
}

fn median(v: &[f64]) -> f64 {
    bench::median(v).unwrap_or(f64::NAN)
}

fn fmt_list(v: &[f64], digits: usize) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.digits$}")).collect();
    format!("[{}]", parts.join(", "))
}

struct RunStats {
    score: f64,
    size: usize,
    seconds: f64,
}

/// One search on a stratified (classification) or plain 75/25 split.
fn clinical_run(data: &Dataset, config: &SearchConfig, seed: u64) -> RunStats {
    let spec = SplitSpec {
        train_fraction: 0.75,
        stratified: data.task == TaskKind::Classification,
        folds: None,
        seed,
    };
    let (tr, te) = split(data, &spec).expect("split");
    let (train, test) = (data.subset(&tr), data.subset(&te));
    let config = SearchConfig {
        seed,
        ..config.clone()
    };
    let started = Instant::now();
    let result = search::run(&config, &train).expect("search");
    let seconds = started.elapsed().as_secs_f64();
    let preds = result.model.evaluate(&test.x).expect("evaluate");
    let score = match data.task {
        TaskKind::Regression => r2(&test.y, &preds),
        TaskKind::Classification => auprc(&test.y, &preds),
    };
    RunStats {
        score,
        size: result.model.size(),
        seconds,
    }
}

fn clinical_config(task: TaskKind, budget: (usize, usize)) -> SearchConfig {
    SearchConfig {
        pop_size: budget.0,
        max_gens: budget.1,
        ..SearchConfig::profile(Profile::Clinical, task)
    }
}

fn weighted(config: &SearchConfig) -> SearchConfig {
    SearchConfig {
        split_criterion: SplitCriterion::Weighted,
        ..config.clone()
    }
}

fn supplement(data: &Dataset, config: &SearchConfig) -> Outcome {
    let runs: Vec<RunStats> = SUPPLEMENT_SEEDS
        .iter()
        .map(|&s| clinical_run(data, &weighted(config), s))
        .collect();
    let scores: Vec<f64> = runs.iter().map(|r| r.score).collect();
    let sizes: Vec<f64> = runs.iter().map(|r| r.size as f64).collect();
    let secs: Vec<f64> = runs.iter().map(|r| r.seconds).collect();
    info(format!(
        "weighted split criterion: AUPRC {} sizes {} seconds {}",
        fmt_list(&scores, 4),
        fmt_list(&sizes, 0),
        fmt_list(&secs, 1)
    ))
}

fn labelled(system: ScoreSystem) -> Dataset {
    generate_dataset(&GeneratorSpec::new(system, CLINICAL_ROWS, 11))
        .and_then(|d| d.classification())
        .expect("generate")
}

fn criterion_1() -> Vec<(&'static str, Outcome)> {
    let data = generate_dataset(&GeneratorSpec::new(ScoreSystem::Map, CLINICAL_ROWS, 10))
        .and_then(|d| d.regression())
        .expect("generate");
    let config = clinical_config(TaskKind::Regression, MAP_BUDGET);
    let runs: Vec<RunStats> = CLINICAL_SEEDS.iter().map(|&s| clinical_run(&data, &config, s)).collect();
    let r2s: Vec<f64> = runs.iter().map(|r| r.score).collect();
    let sizes: Vec<f64> = runs.iter().map(|r| r.size as f64).collect();
    let secs: Vec<f64> = runs.iter().map(|r| r.seconds).collect();
    let pass = r2s.iter().all(|&v| v >= 0.999)
        && median(&sizes) <= 20.0
        && secs.iter().all(|&s| s <= 300.0);
    vec![(
        "1  MAP recovery (R2 >= 0.999 x5, median size <= 20, <= 300 s/run)",
        outcome(
            pass,
            format!("R2 {} sizes {} seconds {}", fmt_list(&r2s, 6), fmt_list(&sizes, 0), fmt_list(&secs, 1)),
        ),
    )]
}

fn criterion_2() -> Vec<(&'static str, Outcome)> {
    let data = labelled(ScoreSystem::Cart);
    let with = clinical_config(TaskKind::Classification, CART_BUDGET);
    let without = with.clone().without_splits();
    let a: Vec<f64> = CLINICAL_SEEDS.iter().map(|&s| clinical_run(&data, &with, s).score).collect();
    let b: Vec<f64> = CLINICAL_SEEDS.iter().map(|&s| clinical_run(&data, &without, s).score).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let drop = mean(&a) - mean(&b);
    vec![
        (
            "2a CART deterioration with splits (AUPRC >= 0.95 x5)",
            outcome(
                a.iter().all(|&v| v >= 0.95),
                format!("prevalence {:.4} AUPRC {}", data.prevalence(), fmt_list(&a, 4)),
            ),
        ),
        (
            "2b CART without splits (mean AUPRC lower by >= 0.05)",
            outcome(drop >= 0.05, format!("AUPRC {} drop {drop:.4}", fmt_list(&b, 4))),
        ),
        ("2  CART supplementary", supplement(&data, &with)),
    ]
}

fn criterion_3() -> Vec<(&'static str, Outcome)> {
    let data = labelled(ScoreSystem::Mews);
    let config = clinical_config(TaskKind::Classification, MEWS_BUDGET);
    let runs: Vec<RunStats> = CLINICAL_SEEDS.iter().map(|&s| clinical_run(&data, &config, s)).collect();
    let scores: Vec<f64> = runs.iter().map(|r| r.score).collect();
    let sizes: Vec<f64> = runs.iter().map(|r| r.size as f64).collect();
    vec![
        (
            "3  MEWS deterioration (AUPRC >= 0.90 x5, median size <= 80)",
            outcome(
                scores.iter().all(|&v| v >= 0.90) && median(&sizes) <= 80.0,
                format!(
                    "prevalence {:.4} AUPRC {} sizes {}",
                    data.prevalence(),
                    fmt_list(&scores, 4),
                    fmt_list(&sizes, 0)
                ),
            ),
        ),
        ("3  MEWS supplementary", supplement(&data, &config)),
    ]
}

fn criterion_4() -> Vec<(&'static str, Outcome)> {
    let dir = tempfile::tempdir().expect("tempdir");
    bench::write_ground_truth_suite(dir.path(), PHYSICS_ROWS, 7).expect("suite");
    let problems = bench::load_suite(dir.path()).expect("load");
    let search = SearchConfig {
        pop_size: PHYSICS_BUDGET.0,
        max_gens: PHYSICS_BUDGET.1,
        ..SearchConfig::profile(Profile::Srbench, TaskKind::Regression)
    };
    let config = BenchConfig {
        noise_levels: NOISE_LEVELS.to_vec(),
        repeats: 3,
        seed: 8,
        ..BenchConfig::new(search)
    };
    let out = bench::run_suite(&problems, &config).expect("bench");
    let rates: Vec<f64> = out.summary.accuracy.iter().map(|a| a.rate).collect();
    let slowest = out.timings.iter().map(|t| t.wall_seconds).fold(0.0, f64::max);
    let failures = out.records.iter().filter(|r| !r.ok()).count();
    vec![(
        "4  ground-truth robustness (>= 50% with R2 > 0.999 at each noise level, <= 60 s/run)",
        outcome(
            rates.len() == NOISE_LEVELS.len() && rates.iter().all(|&r| r >= 0.5) && slowest <= 60.0 && failures == 0,
            format!(
                "rates at {:?}: {} slowest run {slowest:.1} s failures {failures}",
                NOISE_LEVELS,
                fmt_list(&rates, 3)
            ),
        ),
    )]
}

/// Naive double loop over every midpoint of distinct values.
fn brute_split(c: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let mut sorted = c.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let var = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / v.len() as f64
    };
    let mut best: Option<(f64, f64)> = None;
    for w in sorted.windows(2) {
        let tau = midpoint(w[0], w[1]);
        let (mut l, mut r) = (Vec::new(), Vec::new());
        for i in 0..c.len() {
            if c[i] <= tau {
                l.push(y[i]);
            } else {
                r.push(y[i]);
            }
        }
        let obj = var(&l) / l.len() as f64 + var(&r) / r.len() as f64;
        if best.is_none_or(|b| obj < b.1) {
            best = Some((tau, obj));
        }
    }
    best
}

fn check_threshold_scan() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(501);
    let mut mismatches = 0;
    for case in 0..500 {
        let d = rng.random_range(2..=60);
        let c: Vec<f64> = (0..d)
            .map(|_| match case % 3 {
                0 => rng.random_range(0..8) as f64,
                1 => rng.random::<f64>(),
                _ => rng.random_range(-1e3..1e3),
            })
            .collect();
        let y: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let got = find_split_threshold(&c, &y).ok().map(|s| (s.threshold.to_bits(), s.objective.to_bits()));
        let want = brute_split(&c, &y).map(|(t, o)| (t.to_bits(), o.to_bits()));
        if got != want {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("500 instances, {mismatches} mismatches"))
}

/// Textbook NSGA-II survival: peel fronts by pairwise dominance, split the
/// last front by crowding distance.
fn reference_survivors(obj: &[Vec<f64>], n: usize) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..obj.len()).collect();
    let mut chosen = Vec::new();
    while chosen.len() < n {
        let front: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&p| !remaining.iter().any(|&q| q != p && dominates(&obj[q], &obj[p])))
            .collect();
        remaining.retain(|i| !front.contains(i));
        if chosen.len() + front.len() <= n {
            chosen.extend(front);
            continue;
        }
        let mut dist = vec![0.0f64; front.len()];
        for k in 0..obj[0].len() {
            let mut idx: Vec<usize> = (0..front.len()).collect();
            idx.sort_by(|&a, &b| obj[front[a]][k].total_cmp(&obj[front[b]][k]));
            let lo = obj[front[idx[0]]][k];
            let hi = obj[front[idx[idx.len() - 1]]][k];
            dist[idx[0]] = f64::INFINITY;
            dist[idx[idx.len() - 1]] = f64::INFINITY;
            if hi > lo {
                for w in 1..idx.len() - 1 {
                    dist[idx[w]] += (obj[front[idx[w + 1]]][k] - obj[front[idx[w - 1]]][k]) / (hi - lo);
                }
            }
        }
        let mut pairs: Vec<(usize, f64)> = front.into_iter().zip(dist).collect();
        pairs.sort_by(|a, b| b.1.total_cmp(&a.1));
        chosen.extend(pairs.into_iter().take(n - chosen.len()).map(|p| p.0));
    }
    chosen
}

fn check_nsga2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(502);
    let mut mismatches = 0;
    for _ in 0..200 {
        let pool = rng.random_range(4..60);
        let n = rng.random_range(1..=pool);
        let obj: Vec<Vec<f64>> = (0..pool)
            .map(|_| vec![rng.random_range(0..20) as f64, rng.random_range(0..20) as f64])
            .collect();
        let mut got: Vec<usize> = nsga2_survive(&obj, n).iter().map(|s| s.index).collect();
        let mut want = reference_survivors(&obj, n);
        got.sort_unstable();
        want.sort_unstable();
        if got != want {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("200 pools, {mismatches} mismatches"))
}

fn median_of(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Semi-dynamic epsilon-lexicase: per-case MAD over the whole pool, filter
/// against the best remaining candidate, cases in random order.
fn reference_select(errors: &[Vec<f64>], rng: &mut ChaCha8Rng) -> usize {
    let cases = errors[0].len();
    let mut order: Vec<usize> = (0..cases).collect();
    order.shuffle(rng);
    let mut pool: Vec<usize> = (0..errors.len()).collect();
    for &c in &order {
        if pool.len() == 1 {
            break;
        }
        let col: Vec<f64> = errors.iter().map(|e| e[c]).collect();
        let med = median_of(col.clone());
        let mad = median_of(col.iter().map(|v| (v - med).abs()).collect());
        let best = pool.iter().map(|&i| errors[i][c]).fold(f64::INFINITY, f64::min);
        pool.retain(|&i| errors[i][c] <= best + mad);
    }
    *pool.choose(rng).expect("non-empty pool")
}

fn check_lexicase() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(503);
    let pools: Vec<Vec<Vec<f64>>> = vec![
        (0..20)
            .map(|_| (0..30).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect(),
        (0..12)
            .map(|i| (0..8).map(|c| ((i * 7 + c * 3) % 5) as f64).collect())
            .collect(),
    ];
    let draws = 100_000;
    let mut worst = 0.0f64;
    for (k, errors) in pools.iter().enumerate() {
        let mut a = ChaCha8Rng::seed_from_u64(600 + k as u64);
        let mut b = ChaCha8Rng::seed_from_u64(700 + k as u64);
        let got = epsilon_lexicase_select(errors, draws, &mut a);
        let mut f_got = vec![0.0; errors.len()];
        let mut f_ref = vec![0.0; errors.len()];
        for g in got {
            f_got[g] += 1.0 / draws as f64;
        }
        for _ in 0..draws {
            f_ref[reference_select(errors, &mut b)] += 1.0 / draws as f64;
        }
        for (x, y) in f_got.iter().zip(&f_ref) {
            worst = worst.max((x - y).abs());
        }
    }
    outcome(worst <= 0.02, format!("2 pools x 100000 draws, max frequency gap {worst:.4}"))
}

fn smooth_space(n: usize) -> SearchSpace {
    SearchSpace::new(
        Symbol::parse_function_set("add,sub,mul,div,sin,cos,tanh,exp,log,sqrt").expect("functions"),
        (0..n).map(|i| format!("x{i}")).collect(),
        TaskKind::Regression,
    )
}

fn check_jacobian() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(504);
    let space = smooth_space(3);
    let rows = 16;
    let x = FeatureMatrix::from_columns(
        (0..3).map(|_| (0..rows).map(|_| rng.random_range(0.5..2.0)).collect()).collect(),
    )
    .expect("matrix");
    let mut checked = 0;
    let mut worst = 0.0f64;
    while checked < 100 {
        let p = generate_random(&space, &mut rng, 5, 15).expect("program");
        let n = p.params().len();
        if n == 0 {
            continue;
        }
        let params: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
        let mut p = p;
        p.set_params(&params).expect("params");
        let (values, grads) = jacobian(&p, &x).expect("jacobian");
        if !values.iter().all(|v| v.is_finite() && v.abs() < 1e6) {
            continue;
        }
        let at = |k: usize, delta: f64| {
            let mut q = p.clone();
            let mut v = params.clone();
            v[k] += delta;
            q.set_params(&v).expect("params");
            q.evaluate(&x).expect("evaluate")
        };
        for (k, column) in &grads {
            let h = 1e-6 * params[*k].abs().max(1.0);
            let (plus, minus) = (at(*k, h), at(*k, -h));
            for r in 0..rows {
                let fd = (plus[r] - minus[r]) / (2.0 * h);
                worst = worst.max((column[r] - fd).abs() / column[r].abs().max(fd.abs()).max(1.0));
            }
        }
        checked += 1;
    }
    outcome(worst <= 1e-4, format!("100 programs, worst relative error {worst:.2e}"))
}

fn check_lm_monotone() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let space = smooth_space(2);
    let x = FeatureMatrix::from_columns(
        (0..2).map(|_| (0..40).map(|_| rng.random_range(-2.0..2.0)).collect()).collect(),
    )
    .expect("matrix");
    let y: Vec<f64> = (0..40).map(|_| rng.random_range(-3.0..3.0)).collect();
    let (mut fits, mut steps, mut increases) = (0, 0, 0);
    while fits < 100 {
        let p = generate_random(&space, &mut rng, 5, 15).expect("program");
        let out = lm_fit(&p, &x, &y, &LmSettings::with_iterations(25)).expect("fit");
        if matches!(out.status, LmStatus::NonFinite | LmStatus::NoParameters) {
            continue;
        }
        let mut prev = out.initial_loss;
        for &l in &out.accepted_losses {
            steps += 1;
            if l > prev {
                increases += 1;
            }
            prev = l;
        }
        fits += 1;
    }
    outcome(increases == 0, format!("100 fits, {steps} accepted steps, {increases} increases"))
}

type Component = fn(f64) -> u32;

/// Printed bands as (low, low inclusive, high, high inclusive, points);
/// the first matching band wins.
type Bands = &'static [(f64, bool, f64, bool, u32)];

const INF: f64 = f64::INFINITY;

fn table_components() -> Vec<(&'static str, Component, Bands)> {
    vec![
        ("CART respiratory rate", clinical::cart_resp_rate_points, &[
            (-INF, false, 21.0, false, 0), (21.0, true, 24.0, false, 8), (24.0, true, 26.0, false, 12),
            (26.0, true, 29.0, false, 15), (29.0, true, INF, false, 22),
        ]),
        ("CART heart rate", clinical::cart_heart_rate_points, &[
            (-INF, false, 110.0, false, 0), (110.0, true, 140.0, false, 4), (140.0, true, INF, false, 13),
        ]),
        // first match wins: >=49 overrides [40, 50), and the inclusive <=35 overrides [35, 40)
        ("CART diastolic BP", clinical::cart_dbp_points, &[
            (49.0, true, INF, false, 0), (40.0, true, 50.0, false, 4), (-INF, false, 35.0, true, 13),
            (35.0, true, 40.0, false, 6),
        ]),
        ("CART age", clinical::cart_age_points, &[
            (-INF, false, 55.0, false, 0), (55.0, true, 70.0, false, 4), (70.0, true, INF, false, 9),
        ]),
        ("MEWS systolic BP", clinical::mews_sbp_points, &[
            (-INF, false, 71.0, false, 3), (71.0, true, 81.0, false, 2), (81.0, true, 101.0, false, 1),
            (101.0, true, 200.0, false, 0), (200.0, true, INF, false, 2),
        ]),
        ("MEWS heart rate", clinical::mews_heart_rate_points, &[
            (-INF, false, 41.0, false, 2), (41.0, true, 51.0, false, 1), (51.0, true, 101.0, false, 0),
            (101.0, true, 111.0, false, 1), (111.0, true, 130.0, false, 2), (130.0, true, INF, false, 3),
        ]),
        ("MEWS respiratory rate", clinical::mews_resp_rate_points, &[
            (-INF, false, 9.0, false, 2), (9.0, true, 15.0, false, 0), (15.0, true, 21.0, false, 1),
            (21.0, true, 30.0, false, 2), (30.0, true, INF, false, 3),
        ]),
        ("MEWS temperature", clinical::mews_temperature_points, &[
            (-INF, false, 35.0, false, 2), (35.0, true, 38.5, false, 0), (38.5, true, INF, false, 2),
        ]),
    ]
}

fn band_points(bands: Bands, v: f64) -> u32 {
    bands
        .iter()
        .find(|&&(lo, lo_in, hi, hi_in, _)| {
            (v > lo || (lo_in && v == lo)) && (v < hi || (hi_in && v == hi))
        })
        .map(|b| b.4)
        .expect("bands cover the real line")
}

fn check_score_edges() -> Outcome {
    let (mut probes, mut wrong) = (0, Vec::new());
    for (name, component, bands) in table_components() {
        let mut edges: Vec<f64> = bands
            .iter()
            .flat_map(|b| [b.0, b.2])
            .filter(|e| e.is_finite())
            .collect();
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        for e in edges {
            for v in [e - 1e-9, e, e + 1e-9] {
                probes += 1;
                if component(v) != band_points(bands, v) {
                    wrong.push(format!("{name} at {v}"));
                }
            }
        }
    }
    // totals against the sum of table bands on a grid
    let tables = table_components();
    let mut rng = ChaCha8Rng::seed_from_u64(506);
    for _ in 0..10_000 {
        let (rr, hr, dbp, age) = (
            rng.random_range(5.0..40.0),
            rng.random_range(30.0..180.0),
            rng.random_range(20.0..110.0),
            rng.random_range(18.0..95.0),
        );
        let (sbp, temp) = (rng.random_range(50.0..230.0), rng.random_range(33.0..41.0));
        let cart = band_points(tables[0].2, rr) + band_points(tables[1].2, hr)
            + band_points(tables[2].2, dbp) + band_points(tables[3].2, age);
        let mews = band_points(tables[4].2, sbp) + band_points(tables[5].2, hr)
            + band_points(tables[6].2, rr) + band_points(tables[7].2, temp);
        probes += 2;
        if clinical::cart_score(rr, hr, dbp, age) != cart {
            wrong.push(format!("CART total at rr {rr} hr {hr} dbp {dbp} age {age}"));
        }
        if clinical::mews_score(sbp, hr, rr, temp) != mews {
            wrong.push(format!("MEWS total at sbp {sbp} hr {hr} rr {rr} temp {temp}"));
        }
    }
    let detail = match wrong.first() {
        Some(w) => format!("{probes} probes, {} wrong, first: {w}", wrong.len()),
        None => format!("{probes} probes, all exact"),
    };
    outcome(wrong.is_empty(), detail)
}

fn check_simplifier() -> Outcome {
    let table = ComplexityTable::default();
    let tol = 1e-6;
    let space = SearchSpace::new(
        Symbol::parse_function_set("add,sub,mul,div,log,min,max,split").expect("functions"),
        vec!["x0".into(), "x1".into()],
        TaskKind::Regression,
    );
    let (mut checked, mut violations, mut shrunk) = (0, Vec::new(), 0);
    for seed in 0..4u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(507 + seed);
        let x = FeatureMatrix::from_columns(
            (0..2).map(|_| (0..120).map(|_| rng.random_range(0.5..3.0)).collect()).collect(),
        )
        .expect("matrix");
        let y: Vec<f64> = (0..120).map(|r| 2.0 * x.column(0)[r] + x.column(1)[r]).collect();
        let programs: Vec<Program> = (0..50)
            .map(|_| {
                let p = generate_random(&space, &mut rng, 5, 20).expect("program");
                fit_program(&p, &x, &y, &FitSettings::default()).expect("fit").program
            })
            .collect();
        let refs: Vec<&Program> = programs.iter().collect();
        let index = build_index(&refs, &x.select_rows(&sample_indices(120, 64)), 1e-8, &table);
        for p in &programs {
            checked += 1;
            let out = simplify_detailed(p, &index, &x, tol, &table);
            let before = p.linear_complexity(&table);
            let after = out.program.linear_complexity(&table);
            shrunk += usize::from(after < before);
            let drift = splitsr::simplify::max_abs_difference(
                &p.evaluate(&x).expect("evaluate"),
                &out.program.evaluate(&x).expect("evaluate"),
            );
            let again = simplify_program(&out.program, &index, &x, tol, &table);
            if after > before {
                violations.push(format!("complexity {before} -> {after}"));
            }
            if drift > tol {
                violations.push(format!("drift {drift:e}"));
            }
            if again != out.program {
                violations.push("not idempotent".to_string());
            }
        }
    }
    outcome(
        violations.is_empty(),
        format!("{checked} programs, {shrunk} simplified, violations {violations:?}"),
    )
}

fn criterion_5() -> Vec<(&'static str, Outcome)> {
    vec![
        ("5a threshold scan equals brute force (500 instances, exact)", check_threshold_scan()),
        ("5b NSGA-II survival equals textbook reference (200 pools)", check_nsga2()),
        ("5c epsilon-lexicase frequencies within 0.02 of reference", check_lexicase()),
        ("5d Jacobian vs central differences (rel. error <= 1e-4)", check_jacobian()),
        ("5e LM loss non-increasing on accepted steps", check_lm_monotone()),
        ("5f CART/MEWS table edges, both sides, exact", check_score_edges()),
        ("5g simplifier: complexity, drift <= tol, idempotence", check_simplifier()),
    ]
}

fn splitsr(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_splitsr"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run splitsr")
}

fn files_equal(a: &Path, b: &Path, names: &[&str]) -> Vec<String> {
    names
        .iter()
        .filter(|n| std::fs::read(a.join(n)).ok() != std::fs::read(b.join(n)).ok() || !a.join(n).exists())
        .map(|n| n.to_string())
        .collect()
}

fn criterion_6() -> Vec<(&'static str, Outcome)> {
    let dir = tempfile::tempdir().expect("tempdir");
    let d = dir.path();
    let mut notes = Vec::new();
    let gen = splitsr(&["score-gen", "--system", "cart", "--rows", "1000", "--seed", "3", "--out", "cart.csv"], d);
    let gen2 = splitsr(&["score-gen", "--system", "cart", "--rows", "1000", "--seed", "3", "--out", "cart2.csv"], d);
    let mut ok = gen.status.success() && gen2.status.success();
    if std::fs::read(d.join("cart.csv")).ok() != std::fs::read(d.join("cart2.csv")).ok() {
        ok = false;
        notes.push("score-gen CSV differs".to_string());
    }
    let budget = ["--pop-size", "40", "--max-gens", "8", "--seed", "21"];
    for (out, workers) in [("fit_a", "1"), ("fit_b", "1"), ("fit_c", "2")] {
        let mut args = vec!["fit", "cart.csv", "--target", "label", "--task", "classification", "--exclude", "CART", "--out", out, "--workers", workers];
        args.extend(budget);
        let o = splitsr(&args, d);
        ok &= o.status.success();
    }
    for other in ["fit_b", "fit_c"] {
        let diff = files_equal(&d.join("fit_a"), &d.join(other), &["model.json", "model.txt", "model.pseudo", "metrics.json"]);
        if !diff.is_empty() {
            ok = false;
            notes.push(format!("fit differs in {other}: {diff:?}"));
        }
    }
    let suite = splitsr(&["score-gen", "--suite", "physics", "--rows", "200", "--seed", "4", "--out", "suite"], d);
    ok &= suite.status.success();
    for out in ["bench_a", "bench_b"] {
        let o = splitsr(
            &["bench", "--suite", "suite", "--noise", "0,0.1", "--repeats", "2", "--profile", "srbench",
              "--pop-size", "20", "--max-gens", "4", "--seed", "5", "--out", out],
            d,
        );
        ok &= o.status.success();
    }
    let reports = ["runs.jsonl", "summary.json", "summary.md"];
    let diff = files_equal(&d.join("bench_a"), &d.join("bench_b"), &reports);
    if !diff.is_empty() {
        ok = false;
        notes.push(format!("bench differs: {diff:?}"));
    }
    let before: BTreeMap<&str, Option<Vec<u8>>> =
        reports.iter().map(|n| (*n, std::fs::read(d.join("bench_a").join(n)).ok())).collect();
    let regen = splitsr(&["bench", "--regenerate", "bench_a"], d);
    ok &= regen.status.success();
    for n in reports {
        if std::fs::read(d.join("bench_a").join(n)).ok() != before[n] {
            ok = false;
            notes.push(format!("regenerated {n} differs"));
        }
    }
    vec![(
        "6  reproducibility (fit x3 incl. 2 workers, bench x2, regeneration: byte-identical)",
        outcome(ok, if notes.is_empty() { "identical".into() } else { notes.join("; ") }),
    )]
}

fn main() {
    let only: Option<Vec<String>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').map(|s| s.trim().to_string()).collect());
    let criteria: [(&str, fn() -> Vec<(&'static str, Outcome)>); 6] = [
        ("1", criterion_1),
        ("2", criterion_2),
        ("3", criterion_3),
        ("4", criterion_4),
        ("5", criterion_5),
        ("6", criterion_6),
    ];
    let mut failed = Vec::new();
    for (id, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.iter().any(|x| x == id)) {
            continue;
        }
        let started = Instant::now();
        for (name, o) in run() {
            let tag = match o.pass {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "INFO",
            };
            println!("[{tag}] {name}: {} ({:.0} s)", o.detail, started.elapsed().as_secs_f64());
            if o.pass == Some(false) {
                failed.push(name);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: {} failed", failed.len());
        std::process::exit(1);
    }
}
