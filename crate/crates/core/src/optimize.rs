//! Parameter fitting for expression trees.
//!
//! Continuous parameters (enabled weights, constants, logistic offset) are
//! fitted by Levenberg-Marquardt on the squared residuals. Split thresholds
//! never enter the least-squares problem: they are chosen by a scan that
//! minimizes the target variance on both sides of the split, and are held
//! fixed afterwards.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::expr::{eval_node, Node, NodeKind, ParamRole, Program};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmSettings {
    pub max_iterations: usize,
    pub initial_damping: f64,
    /// Damping multiplier after a rejected step (> 1).
    pub damping_increase: f64,
    /// Damping multiplier after an accepted step (in (0, 1)).
    pub damping_decrease: f64,
    /// Stop when the step norm falls below this (relative to the parameter norm).
    pub step_tolerance: f64,
    /// Stop when the relative loss decrease of an accepted step falls below this.
    pub loss_tolerance: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            initial_damping: 1e-3,
            damping_increase: 10.0,
            damping_decrease: 0.1,
            step_tolerance: 1e-12,
            loss_tolerance: 1e-15,
        }
    }
}

impl LmSettings {
    pub fn with_iterations(max_iterations: usize) -> Self {
        Self {
            max_iterations,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("LM needs at least one iteration".into()));
        }
        if !(self.damping_increase > 1.0) {
            return Err(Error::Config("damping increase factor must exceed 1".into()));
        }
        if !(self.damping_decrease > 0.0 && self.damping_decrease < 1.0) {
            return Err(Error::Config("damping decrease factor must lie in (0, 1)".into()));
        }
        if !(self.initial_damping > 0.0) {
            return Err(Error::Config("initial damping must be positive".into()));
        }
        Ok(())
    }
}

/// Split objective: `Var(l)/|l| + Var(r)/|r|` (per-count) or the
/// size-weighted impurity `|l|/d Var(l) + |r|/d Var(r)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitCriterion {
    #[default]
    PerCount,
    Weighted,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub lm: LmSettings,
    pub criterion: SplitCriterion,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LmStatus {
    NoParameters,
    Converged,
    MaxIterations,
    /// No damping level produced an improving step; best-so-far returned.
    Stalled,
    /// Residuals at the starting point are not finite; input returned.
    NonFinite,
}

#[derive(Clone, Debug)]
pub struct LmOutcome {
    /// Full parameter vector of the fitted (sub)tree, thresholds included.
    pub params: Vec<f64>,
    /// Mean squared residual at `params`.
    pub loss: f64,
    pub initial_loss: f64,
    pub iterations: usize,
    pub status: LmStatus,
    /// Mean squared residual after each accepted step.
    pub accepted_losses: Vec<f64>,
}

const MAX_DAMPING: f64 = 1e12;

fn sum_sq(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum()
}

/// Fits every weight, constant and offset of `program` to `y` over all rows.
pub fn lm_fit(
    program: &Program,
    x: &FeatureMatrix,
    y: &[f64],
    settings: &LmSettings,
) -> Result<LmOutcome> {
    check_inputs(program, x, y)?;
    settings.validate()?;
    let mut root = program.root.clone();
    let trainable: Vec<bool> = root
        .param_roles()
        .iter()
        .map(|r| *r != ParamRole::Threshold)
        .collect();
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    Ok(lm_node(&mut root, x, &rows, y, &trainable, settings))
}

/// Predictions of `program` on every row of `x` and their derivatives with
/// respect to each weight, constant and offset. Columns are keyed by the
/// parameter's index in [`Program::params`]; thresholds get none.
pub fn jacobian(program: &Program, x: &FeatureMatrix) -> Result<(Vec<f64>, Vec<(usize, Vec<f64>)>)> {
    if let Some(j) = program.root.max_feature() {
        if j >= x.n_features() {
            return Err(Error::FeatureOutOfBounds { index: j, columns: x.n_features() });
        }
    }
    let trainable: Vec<bool> = program
        .root
        .param_roles()
        .iter()
        .map(|r| *r != ParamRole::Threshold)
        .collect();
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    let eval = eval_node(&program.root, x, &rows, Some(&trainable));
    Ok((eval.values, eval.grads))
}

fn check_inputs(program: &Program, x: &FeatureMatrix, y: &[f64]) -> Result<()> {
    if x.n_rows() == 0 {
        return Err(Error::EmptyInput("no training rows".into()));
    }
    if y.len() != x.n_rows() {
        return Err(Error::InvalidData(format!(
            "{} targets for {} rows",
            y.len(),
            x.n_rows()
        )));
    }
    if let Some(j) = program.root.max_feature() {
        if j >= x.n_features() {
            return Err(Error::FeatureOutOfBounds {
                index: j,
                columns: x.n_features(),
            });
        }
    }
    Ok(())
}

/// Levenberg-Marquardt on the subtree `node` over `rows`, with `targets`
/// aligned to `rows`. Only parameters flagged in `trainable` move. The
/// node's parameters are left at the best point found.
pub(crate) fn lm_node(
    node: &mut Node,
    x: &FeatureMatrix,
    rows: &[usize],
    targets: &[f64],
    trainable: &[bool],
    settings: &LmSettings,
) -> LmOutcome {
    let n = rows.len().max(1) as f64;
    let active: Vec<usize> = (0..trainable.len()).filter(|&i| trainable[i]).collect();
    let mut theta = node.params();

    let first = eval_node(node, x, rows, Some(trainable));
    let mut cost = sum_sq(&first.values, targets);
    let mut outcome = LmOutcome {
        params: theta.clone(),
        loss: cost / n,
        initial_loss: cost / n,
        iterations: 0,
        status: LmStatus::MaxIterations,
        accepted_losses: Vec::new(),
    };
    if !cost.is_finite() {
        outcome.status = LmStatus::NonFinite;
        outcome.loss = f64::INFINITY;
        return outcome;
    }
    if active.is_empty() || rows.is_empty() {
        outcome.status = LmStatus::NoParameters;
        return outcome;
    }

    let p = active.len();
    let mut column_of = vec![usize::MAX; trainable.len()];
    for (k, &i) in active.iter().enumerate() {
        column_of[i] = k;
    }
    let mut lambda = settings.initial_damping;
    let mut eval = first;

    for iteration in 0..settings.max_iterations {
        outcome.iterations = iteration + 1;
        let residual: Vec<f64> = eval.values.iter().zip(targets).map(|(a, b)| a - b).collect();
        let mut cols: Vec<Option<&[f64]>> = vec![None; p];
        for (i, g) in &eval.grads {
            cols[column_of[*i]] = Some(g.as_slice());
        }
        let clean = |v: f64| if v.is_finite() { v } else { 0.0 };
        let mut jtj = DMatrix::<f64>::zeros(p, p);
        let mut jtr = DVector::<f64>::zeros(p);
        for a in 0..p {
            let Some(ca) = cols[a] else { continue };
            jtr[a] = ca.iter().zip(&residual).map(|(g, r)| clean(*g) * r).sum();
            for b in a..p {
                let Some(cb) = cols[b] else { continue };
                let v: f64 = ca.iter().zip(cb).map(|(g, h)| clean(*g) * clean(*h)).sum();
                jtj[(a, b)] = v;
                jtj[(b, a)] = v;
            }
        }
        let max_diag = (0..p).map(|a| jtj[(a, a)]).fold(0.0, f64::max);
        let floor = 1e-12 * max_diag.max(1e-12);

        let mut accepted = None;
        while lambda <= MAX_DAMPING {
            let mut a = jtj.clone();
            for k in 0..p {
                a[(k, k)] += lambda * jtj[(k, k)].max(floor);
            }
            let step = a.cholesky().map(|c| c.solve(&(-&jtr)));
            let Some(step) = step.filter(|s| s.iter().all(|v| v.is_finite())) else {
                lambda *= settings.damping_increase;
                continue;
            };
            let mut trial = theta.clone();
            for (k, &i) in active.iter().enumerate() {
                trial[i] += step[k];
            }
            node.set_params(&trial);
            let trial_eval = eval_node(node, x, rows, Some(trainable));
            let trial_cost = sum_sq(&trial_eval.values, targets);
            if trial_cost.is_finite() && trial_cost < cost {
                lambda = (lambda * settings.damping_decrease).max(1e-15);
                accepted = Some((trial, trial_eval, trial_cost, step.norm()));
                break;
            }
            lambda *= settings.damping_increase;
        }

        let Some((trial, trial_eval, trial_cost, step_norm)) = accepted else {
            node.set_params(&theta);
            outcome.status = LmStatus::Stalled;
            break;
        };
        let decrease = (cost - trial_cost) / cost.max(f64::MIN_POSITIVE);
        let theta_norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
        theta = trial;
        cost = trial_cost;
        eval = trial_eval;
        outcome.accepted_losses.push(cost / n);
        if step_norm <= settings.step_tolerance * (theta_norm + settings.step_tolerance)
            || decrease <= settings.loss_tolerance
            || cost == 0.0
        {
            outcome.status = LmStatus::Converged;
            break;
        }
    }
    node.set_params(&theta);
    outcome.params = theta;
    outcome.loss = cost / n;
    outcome
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitChoice {
    pub threshold: f64,
    pub objective: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreedySplit {
    pub feature: usize,
    pub threshold: f64,
    pub objective: f64,
}

/// Candidate threshold strictly between two consecutive distinct values.
/// Falls back to `lo` when the midpoint rounds onto `hi`, which keeps the
/// partition `c <= tau` identical.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = (lo + hi) * 0.5;
    if m > lo && m < hi {
        m
    } else {
        lo
    }
}

/// Split objective evaluated directly from the rows, in row order.
pub fn split_objective(c: &[f64], y: &[f64], threshold: f64, criterion: SplitCriterion) -> f64 {
    let (mut nl, mut sl, mut nr, mut sr) = (0usize, 0.0, 0usize, 0.0);
    for (&ci, &yi) in c.iter().zip(y) {
        if ci > threshold {
            nr += 1;
            sr += yi;
        } else {
            nl += 1;
            sl += yi;
        }
    }
    let (ml, mr) = (sl / nl as f64, sr / nr as f64);
    let (mut vl, mut vr) = (0.0, 0.0);
    for (&ci, &yi) in c.iter().zip(y) {
        if ci > threshold {
            vr += (yi - mr) * (yi - mr);
        } else {
            vl += (yi - ml) * (yi - ml);
        }
    }
    vl /= nl as f64;
    vr /= nr as f64;
    combine(vl, nl, vr, nr, criterion)
}

fn combine(vl: f64, nl: usize, vr: f64, nr: usize, criterion: SplitCriterion) -> f64 {
    match criterion {
        SplitCriterion::PerCount => vl / nl as f64 + vr / nr as f64,
        SplitCriterion::Weighted => {
            let d = (nl + nr) as f64;
            nl as f64 / d * vl + nr as f64 / d * vr
        }
    }
}

/// At most this many near-tied candidates from the prefix-sum scan are
/// re-scored with [`split_objective`].
const REFINE_LIMIT: usize = 64;

pub fn find_split_threshold(c: &[f64], y: &[f64]) -> Result<SplitChoice> {
    find_split_threshold_with(c, y, SplitCriterion::PerCount)
}

/// Scans midpoints between consecutive distinct condition values. The scan
/// uses prefix sums over the sorted order; candidates within rounding
/// distance of the best are re-scored exactly and the smallest threshold
/// wins among exact ties.
pub fn find_split_threshold_with(
    c: &[f64],
    y: &[f64],
    criterion: SplitCriterion,
) -> Result<SplitChoice> {
    if c.len() != y.len() {
        return Err(Error::InvalidData(format!(
            "{} condition values for {} targets",
            c.len(),
            y.len()
        )));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::InfeasibleSplit("non-finite condition values".into()));
    }
    let d = c.len();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| c[a].total_cmp(&c[b]));
    if d < 2 || c[order[0]] == c[order[d - 1]] {
        return Err(Error::InfeasibleSplit("condition values are constant".into()));
    }

    let (mut s, mut s2) = (0.0, 0.0);
    let total: f64 = y.iter().sum();
    let total2: f64 = y.iter().map(|v| v * v).sum();
    let max_sq = y.iter().map(|v| v * v).fold(0.0, f64::max);
    let mut scored: Vec<(f64, f64)> = Vec::new();
    for k in 0..d - 1 {
        let yi = y[order[k]];
        s += yi;
        s2 += yi * yi;
        let (lo, hi) = (c[order[k]], c[order[k + 1]]);
        if lo == hi {
            continue;
        }
        let nl = k + 1;
        let nr = d - nl;
        let vl = ((s2 - s * s / nl as f64) / nl as f64).max(0.0);
        let (rs, rs2) = (total - s, total2 - s2);
        let vr = ((rs2 - rs * rs / nr as f64) / nr as f64).max(0.0);
        scored.push((combine(vl, nl, vr, nr, criterion), midpoint(lo, hi)));
    }

    let best = scored.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
    let slack = 1e-9 * (1.0 + max_sq);
    let mut near: Vec<(f64, f64)> = scored.into_iter().filter(|e| e.0 <= best + slack).collect();
    near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    near.truncate(REFINE_LIMIT);
    near.sort_by(|a, b| a.1.total_cmp(&b.1));

    let mut choice: Option<SplitChoice> = None;
    for (_, threshold) in near {
        let objective = split_objective(c, y, threshold, criterion);
        if choice.is_none_or(|ch| objective < ch.objective) {
            choice = Some(SplitChoice {
                threshold,
                objective,
            });
        }
    }
    choice.ok_or_else(|| Error::InfeasibleSplit("no candidate threshold".into()))
}

pub fn find_greedy_split(x: &FeatureMatrix, y: &[f64]) -> Result<GreedySplit> {
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    greedy_split_rows(x, &rows, y, SplitCriterion::PerCount)
}

/// Best `(feature, threshold)` over the given rows; `targets` is aligned to
/// `rows`. Ties go to the lowest feature index, then the smallest threshold.
pub(crate) fn greedy_split_rows(
    x: &FeatureMatrix,
    rows: &[usize],
    targets: &[f64],
    criterion: SplitCriterion,
) -> Result<GreedySplit> {
    let mut best: Option<GreedySplit> = None;
    let mut values = Vec::with_capacity(rows.len());
    for j in 0..x.n_features() {
        let col = x.column(j);
        values.clear();
        values.extend(rows.iter().map(|&r| col[r]));
        let Ok(choice) = find_split_threshold_with(&values, targets, criterion) else {
            continue;
        };
        if best.is_none_or(|b| choice.objective < b.objective) {
            best = Some(GreedySplit {
                feature: j,
                threshold: choice.threshold,
                objective: choice.objective,
            });
        }
    }
    best.ok_or_else(|| Error::InfeasibleSplit("every feature is constant on these rows".into()))
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub program: Program,
    /// Mean squared residual on the fitted rows (infinite if non-finite).
    pub loss: f64,
    /// Split nodes that could not be placed and now pass rows through.
    pub infeasible_splits: usize,
    pub lm_status: LmStatus,
}

/// Three-step split-aware fit: every split is resolved top-down (flexible
/// conditions are fitted and frozen, then thresholded; greedy splits scan
/// features), after which the remaining parameters are fitted jointly with
/// each branch seeing only its routed rows.
pub fn fit_program(
    program: &Program,
    x: &FeatureMatrix,
    y: &[f64],
    settings: &FitSettings,
) -> Result<FitOutcome> {
    check_inputs(program, x, y)?;
    settings.lm.validate()?;
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    Ok(fit_rows(program, x, &rows, y, settings))
}

/// [`fit_program`] restricted to `rows`, with `targets` aligned to them.
pub(crate) fn fit_rows(
    program: &Program,
    x: &FeatureMatrix,
    rows: &[usize],
    targets: &[f64],
    settings: &FitSettings,
) -> FitOutcome {
    let mut root = program.root.clone();
    let mut fixed = vec![false; root.param_count()];
    let mut infeasible = 0;
    let lm = fit_subtree(&mut root, x, rows, targets, &mut fixed, settings, &mut infeasible);
    FitOutcome {
        program: Program {
            root,
            task: program.task,
            feature_names: program.feature_names.clone(),
        },
        loss: if lm.loss.is_finite() { lm.loss } else { f64::INFINITY },
        infeasible_splits: infeasible,
        lm_status: lm.status,
    }
}

fn fit_subtree(
    node: &mut Node,
    x: &FeatureMatrix,
    rows: &[usize],
    targets: &[f64],
    fixed: &mut [bool],
    settings: &FitSettings,
    infeasible: &mut usize,
) -> LmOutcome {
    resolve_splits(node, x, rows, targets, fixed, settings, infeasible);
    let trainable: Vec<bool> = node
        .param_roles()
        .iter()
        .zip(fixed.iter())
        .map(|(role, f)| !f && *role != ParamRole::Threshold)
        .collect();
    lm_node(node, x, rows, targets, &trainable, &settings.lm)
}

fn partition(rows: &[usize], targets: &[f64], go_true: impl Fn(usize, usize) -> bool) -> [(Vec<usize>, Vec<f64>); 2] {
    let mut t = (Vec::new(), Vec::new());
    let mut f = (Vec::new(), Vec::new());
    for (k, (&r, &y)) in rows.iter().zip(targets).enumerate() {
        let side = if go_true(k, r) { &mut t } else { &mut f };
        side.0.push(r);
        side.1.push(y);
    }
    [t, f]
}

#[allow(clippy::too_many_arguments)]
fn resolve_splits(
    node: &mut Node,
    x: &FeatureMatrix,
    rows: &[usize],
    targets: &[f64],
    fixed: &mut [bool],
    settings: &FitSettings,
    infeasible: &mut usize,
) {
    let local = node.local_param_count();
    let (own, rest) = fixed.split_at_mut(local);
    let counts: Vec<usize> = node.children.iter().map(Node::param_count).collect();

    let branches: Option<([(Vec<usize>, Vec<f64>); 2], usize)> = match node.kind {
        NodeKind::SplitGreedy { .. } => {
            *own.last_mut().expect("threshold slot") = true;
            if rows.is_empty() {
                None
            } else {
                let found = greedy_split_rows(x, rows, targets, settings.criterion);
                let NodeKind::SplitGreedy {
                    feature,
                    threshold,
                    pass_through,
                } = &mut node.kind
                else {
                    unreachable!()
                };
                match found {
                    Ok(s) => {
                        *feature = s.feature;
                        *threshold = s.threshold;
                        *pass_through = false;
                    }
                    Err(_) => {
                        *pass_through = true;
                        *infeasible += 1;
                    }
                }
                let (f, t, pt) = (*feature, *threshold, *pass_through);
                let col = x.column(f);
                Some((partition(rows, targets, |_, r| pt || col[r] > t), 0))
            }
        }
        NodeKind::SplitFlexible { .. } => {
            *own.last_mut().expect("threshold slot") = true;
            if rows.is_empty() {
                None
            } else {
                let (cond_fixed, _) = rest.split_at_mut(counts[0]);
                let cond = &mut node.children[0];
                fit_subtree(cond, x, rows, targets, cond_fixed, settings, infeasible);
                cond_fixed.iter_mut().for_each(|f| *f = true);
                let values = eval_node(cond, x, rows, None).values;
                let found = find_split_threshold_with(&values, targets, settings.criterion);
                let NodeKind::SplitFlexible {
                    threshold,
                    pass_through,
                } = &mut node.kind
                else {
                    unreachable!()
                };
                match found {
                    Ok(s) => {
                        *threshold = s.threshold;
                        *pass_through = false;
                    }
                    Err(_) => {
                        *pass_through = true;
                        *infeasible += 1;
                    }
                }
                let (t, pt) = (*threshold, *pass_through);
                Some((partition(rows, targets, |k, _| pt || values[k] > t), 1))
            }
        }
        _ => None,
    };

    let mut slices: Vec<&mut [bool]> = Vec::with_capacity(counts.len());
    let mut tail = rest;
    for &c in &counts {
        let (head, next) = tail.split_at_mut(c);
        slices.push(head);
        tail = next;
    }

    match branches {
        Some(([t, f], first)) => {
            let mut kids = node.children.iter_mut().zip(slices).skip(first);
            for (rows_b, targets_b) in [t, f] {
                let (child, slice) = kids.next().expect("two branches");
                if !rows_b.is_empty() {
                    resolve_splits(child, x, &rows_b, &targets_b, slice, settings, infeasible);
                }
            }
        }
        None if node.is_split() => {}
        None => {
            for (child, slice) in node.children.iter_mut().zip(slices) {
                resolve_splits(child, x, rows, targets, slice, settings, infeasible);
            }
        }
    }
}
