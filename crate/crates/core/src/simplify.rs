//! Inexact simplification: subtrees are swapped for simpler ones whose
//! prediction vectors match on a sample, subject to a full-data check.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::expr::{eval_node, ComplexityTable, Node, NodeKind, Program};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimplifySettings {
    /// Maximum absolute change of any training prediction, measured against
    /// the unsimplified program.
    pub tolerance: f64,
    /// Quantization step for prediction keys, relative to the target's
    /// standard deviation.
    pub quantum: f64,
    /// Rows used to key subtrees.
    pub sample_rows: usize,
    pub complexity: ComplexityTable,
}

impl Default for SimplifySettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            quantum: 1e-8,
            sample_rows: 64,
            complexity: ComplexityTable::default(),
        }
    }
}

impl SimplifySettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance >= 0.0) {
            return Err(Error::Config("simplification tolerance must be >= 0".into()));
        }
        if !(self.quantum > 0.0) || self.sample_rows == 0 {
            return Err(Error::Config(
                "simplification quantum and sample size must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub node: Node,
    pub complexity: u64,
    pub size: usize,
}

/// Quantized prediction vectors mapped to the simplest subtree producing them.
#[derive(Clone, Debug)]
pub struct PredictionIndex {
    pub quantum: f64,
    pub sample: FeatureMatrix,
    entries: HashMap<Vec<i64>, Candidate>,
}

impl PredictionIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn key(&self, node: &Node) -> Option<Vec<i64>> {
        quantize(&predict(node, &self.sample), self.quantum)
    }

    pub fn lookup(&self, node: &Node) -> Option<&Candidate> {
        self.entries.get(&self.key(node)?)
    }

    pub fn candidates(&self) -> impl Iterator<Item = (&Vec<i64>, &Candidate)> {
        self.entries.iter()
    }

    fn offer(&mut self, key: Vec<i64>, candidate: Candidate) {
        match self.entries.get(&key) {
            Some(old) if !simpler(&candidate, old) => {}
            _ => {
                self.entries.insert(key, candidate);
            }
        }
    }
}

/// Strict preference: lower complexity, then smaller size, then a fixed
/// structural order so the index does not depend on insertion order.
fn simpler(a: &Candidate, b: &Candidate) -> bool {
    (a.complexity, a.size) < (b.complexity, b.size)
        || ((a.complexity, a.size) == (b.complexity, b.size)
            && format!("{:?}", a.node) < format!("{:?}", b.node))
}

fn predict(node: &Node, x: &FeatureMatrix) -> Vec<f64> {
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    eval_node(node, x, &rows, None).values
}

const KEY_LIMIT: f64 = 4.0e18;

fn quantize(values: &[f64], q: f64) -> Option<Vec<i64>> {
    values
        .iter()
        .map(|v| {
            let k = (v / q).round();
            (k.is_finite() && k.abs() < KEY_LIMIT).then_some(k as i64)
        })
        .collect()
}

/// Evenly spaced row indices (all rows when there are at most `k`).
pub fn sample_indices(n_rows: usize, k: usize) -> Vec<usize> {
    if n_rows <= k {
        return (0..n_rows).collect();
    }
    (0..k).map(|i| i * (n_rows - 1) / (k - 1).max(1)).collect()
}

/// Indexes every subtree of every program (the logistic root itself is
/// skipped) plus, for constant prediction vectors, the equivalent constant.
pub fn build_index(
    population: &[&Program],
    x_sample: &FeatureMatrix,
    quantum: f64,
    table: &ComplexityTable,
) -> PredictionIndex {
    let mut index = PredictionIndex {
        quantum,
        sample: x_sample.clone(),
        entries: HashMap::new(),
    };
    if x_sample.n_rows() == 0 {
        return index;
    }
    for program in population {
        for node in program.root.iter() {
            if matches!(node.kind, NodeKind::Logistic { .. }) {
                continue;
            }
            let values = predict(node, x_sample);
            let Some(key) = quantize(&values, quantum) else {
                continue;
            };
            if key.iter().all(|k| *k == key[0]) {
                let constant = Node::constant(values[0]);
                index.offer(
                    key.clone(),
                    Candidate {
                        complexity: constant.complexity(table),
                        size: 1,
                        node: constant,
                    },
                );
            }
            index.offer(
                key,
                Candidate {
                    node: node.clone(),
                    complexity: node.complexity(table),
                    size: node.size(),
                },
            );
        }
    }
    index
}

#[derive(Clone, Debug)]
pub struct Simplified {
    pub program: Program,
    pub substitutions: usize,
}

/// Simplifies `program` against a fixed index. Every accepted edit lowers
/// complexity (or, for the weight and zero rules, parameter count) and
/// moves the training predictions by at most `tol`.
pub fn simplify_program(
    program: &Program,
    index: &PredictionIndex,
    x_train: &FeatureMatrix,
    tol: f64,
    table: &ComplexityTable,
) -> Program {
    simplify_detailed(program, index, x_train, tol, table).program
}

pub fn simplify_detailed(
    program: &Program,
    index: &PredictionIndex,
    x_train: &FeatureMatrix,
    tol: f64,
    table: &ComplexityTable,
) -> Simplified {
    let mut current = program.clone();
    let original = predict(&program.root, x_train);
    let mut substitutions = 0;
    let accept = |root: Node| -> Option<Program> {
        let candidate = Program::new(root, program.task, program.feature_names.clone()).ok()?;
        let drift = max_abs_difference(&predict(&candidate.root, x_train), &original);
        (drift <= tol).then_some(candidate)
    };

    loop {
        let mut changed = false;
        for edit in local_edits(&current.root, index.quantum) {
            if let Some(p) = accept(edit) {
                current = p;
                substitutions += 1;
                changed = true;
                break;
            }
        }
        if changed {
            continue;
        }
        for i in postorder(&current.root) {
            let node = current.root.get(i).expect("index within tree");
            if matches!(node.kind, NodeKind::Logistic { .. }) {
                continue;
            }
            let Some(candidate) = index.lookup(node) else {
                continue;
            };
            if candidate.complexity >= node.complexity(table) || candidate.size > node.size() {
                continue;
            }
            let mut root = current.root.clone();
            *root.get_mut(i).expect("index within tree") = candidate.node.clone();
            if let Some(p) = accept(root) {
                current = p;
                substitutions += 1;
                changed = true;
                break;
            }
        }
        if !changed {
            break;
        }
    }
    Simplified {
        program: current,
        substitutions,
    }
}

/// Builds an index from `population` on a row sample of `x_train` and
/// simplifies `program` against it. `y` sets the quantization scale.
pub fn simplify_with_population(
    program: &Program,
    population: &[&Program],
    x_train: &FeatureMatrix,
    y: &[f64],
    settings: &SimplifySettings,
) -> Program {
    let sample = x_train.select_rows(&sample_indices(x_train.n_rows(), settings.sample_rows));
    let quantum = settings.quantum * target_scale(y);
    let mut members: Vec<&Program> = population.to_vec();
    members.push(program);
    let index = build_index(&members, &sample, quantum, &settings.complexity);
    simplify_program(program, &index, x_train, settings.tolerance, &settings.complexity)
}

/// Standard deviation of `y`, or 1 when it is zero or undefined.
pub fn target_scale(y: &[f64]) -> f64 {
    if y.is_empty() {
        return 1.0;
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    if sd > 0.0 && sd.is_finite() {
        sd
    } else {
        1.0
    }
}

/// Largest absolute difference; rows that are non-finite in both vectors
/// count as equal, rows non-finite in only one count as infinite.
pub fn max_abs_difference(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&u, &v)| {
            if u.to_bits() == v.to_bits() || (u.is_nan() && v.is_nan()) {
                0.0
            } else if u.is_finite() && v.is_finite() {
                (u - v).abs()
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

fn postorder(root: &Node) -> Vec<usize> {
    fn walk(n: &Node, start: usize, out: &mut Vec<usize>) {
        let mut next = start + 1;
        for c in &n.children {
            walk(c, next, out);
            next += c.size();
        }
        out.push(start);
    }
    let mut out = Vec::with_capacity(root.size());
    walk(root, 0, &mut out);
    out
}

/// Multiplies a node's output by `w`, absorbing it into an existing weight,
/// a constant value, or a newly enabled weight.
fn fold_weight(mut node: Node, w: f64) -> Node {
    if w == 1.0 {
        return node;
    }
    match &mut node.kind {
        NodeKind::Constant(v) => *v *= w,
        _ if node.weight_enabled => node.weight *= w,
        _ => {
            node.weight_enabled = true;
            node.weight = w;
        }
    }
    node
}

fn is_constant(node: &Node, value: impl Fn(f64) -> bool) -> bool {
    matches!(node.kind, NodeKind::Constant(v) if value(v * node.effective_weight()))
}

/// Candidate trees, each differing from `root` by one deterministic rewrite.
fn local_edits(root: &Node, q: f64) -> Vec<Node> {
    let mut edits = Vec::new();
    for (i, node) in root.iter().enumerate() {
        let w = node.effective_weight();
        let replacement = match &node.kind {
            NodeKind::SplitGreedy { pass_through: true, .. } => {
                Some(fold_weight(node.children[0].clone(), w))
            }
            NodeKind::SplitFlexible { pass_through: true, .. } => {
                Some(fold_weight(node.children[1].clone(), w))
            }
            NodeKind::SplitGreedy { .. } | NodeKind::SplitFlexible { .. } => {
                let n = node.children.len();
                let (t, f) = (&node.children[n - 2], &node.children[n - 1]);
                let same_constant = matches!((&t.kind, &f.kind), (NodeKind::Constant(a), NodeKind::Constant(b))
                    if (a * t.effective_weight() - b * f.effective_weight()).abs() <= q);
                (t == f || same_constant).then(|| fold_weight(t.clone(), w))
            }
            NodeKind::Add => {
                let zero = |c: &Node| is_constant(c, |v| v.abs() <= q);
                if zero(&node.children[1]) {
                    Some(fold_weight(node.children[0].clone(), w))
                } else if zero(&node.children[0]) {
                    Some(fold_weight(node.children[1].clone(), w))
                } else {
                    None
                }
            }
            NodeKind::Sub if is_constant(&node.children[1], |v| v.abs() <= q) => {
                Some(fold_weight(node.children[0].clone(), w))
            }
            _ => None,
        };
        if let Some(r) = replacement {
            let mut edited = root.clone();
            *edited.get_mut(i).expect("index within tree") = r;
            edits.push(edited);
        }
        if node.weight_enabled && node.weight_toggleable() && (node.weight - 1.0).abs() <= q {
            let mut edited = root.clone();
            let target = edited.get_mut(i).expect("index within tree");
            target.weight_enabled = false;
            target.weight = 1.0;
            edits.push(edited);
        }
    }
    edits
}
