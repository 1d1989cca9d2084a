//! Mutation and subtree crossover.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::expr::{generate_subtree, Node, NodeKind, Program, SearchSpace, Symbol};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariationKind {
    Crossover,
    ToggleWeightOn,
    ToggleWeightOff,
    Subtree,
    Point,
    Delete,
    Insert,
}

impl VariationKind {
    pub const MUTATIONS: [VariationKind; 6] = [
        VariationKind::ToggleWeightOn,
        VariationKind::ToggleWeightOff,
        VariationKind::Subtree,
        VariationKind::Point,
        VariationKind::Delete,
        VariationKind::Insert,
    ];
}

/// Relative sampling weights of the six mutations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MutationWeights {
    pub toggle_weight_on: f64,
    pub toggle_weight_off: f64,
    pub subtree: f64,
    pub point: f64,
    pub delete: f64,
    pub insert: f64,
}

impl Default for MutationWeights {
    fn default() -> Self {
        Self {
            toggle_weight_on: 1.0,
            toggle_weight_off: 1.0,
            subtree: 1.0,
            point: 1.0,
            delete: 1.0,
            insert: 1.0,
        }
    }
}

impl MutationWeights {
    pub fn as_array(&self) -> [f64; 6] {
        [
            self.toggle_weight_on,
            self.toggle_weight_off,
            self.subtree,
            self.point,
            self.delete,
            self.insert,
        ]
    }

    pub fn is_valid(&self) -> bool {
        let w = self.as_array();
        w.iter().all(|v| v.is_finite() && *v >= 0.0) && w.iter().sum::<f64>() > 0.0
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> VariationKind {
        let w = self.as_array();
        let mut u = rng.random::<f64>() * w.iter().sum::<f64>();
        for (kind, weight) in VariationKind::MUTATIONS.into_iter().zip(w) {
            if u < weight {
                return kind;
            }
            u -= weight;
        }
        *VariationKind::MUTATIONS
            .iter()
            .zip(w)
            .rev()
            .find(|(_, weight)| *weight > 0.0)
            .map(|(k, _)| k)
            .expect("weights sum to a positive value")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariationSettings {
    pub max_depth: usize,
    pub max_size: usize,
    pub crossover_probability: f64,
    pub weights: MutationWeights,
    pub max_retries: usize,
}

#[derive(Clone, Debug)]
pub struct Offspring {
    pub program: Program,
    /// `None` when every attempt failed and the first parent was copied.
    pub kind: Option<VariationKind>,
}

/// Produces one offspring from `first` (and `second` for crossover).
/// Attempts that fail or break the size/depth bounds are redrawn up to
/// `max_retries` times before falling back to a copy of `first`.
pub fn vary<R: Rng + ?Sized>(
    first: &Program,
    second: &Program,
    space: &SearchSpace,
    settings: &VariationSettings,
    rng: &mut R,
) -> Offspring {
    for _ in 0..settings.max_retries.max(1) {
        let kind = if rng.random::<f64>() < settings.crossover_probability {
            VariationKind::Crossover
        } else {
            settings.weights.sample(rng)
        };
        let root = match kind {
            VariationKind::Crossover => crossover(&first.root, &second.root, rng),
            _ => mutate(&first.root, kind, space, settings, rng),
        };
        let Some(root) = root else { continue };
        if root.size() > settings.max_size || root.depth() > settings.max_depth {
            continue;
        }
        if let Ok(program) = Program::new(root, first.task, first.feature_names.clone()) {
            return Offspring {
                program,
                kind: Some(kind),
            };
        }
    }
    Offspring {
        program: first.clone(),
        kind: None,
    }
}

/// Applies one specific mutation, without bound checks or retries.
pub fn mutate<R: Rng + ?Sized>(
    root: &Node,
    kind: VariationKind,
    space: &SearchSpace,
    settings: &VariationSettings,
    rng: &mut R,
) -> Option<Node> {
    let mut out = root.clone();
    match kind {
        VariationKind::ToggleWeightOn | VariationKind::ToggleWeightOff => {
            let on = kind == VariationKind::ToggleWeightOn;
            let eligible: Vec<usize> = root
                .iter()
                .enumerate()
                .filter(|(_, n)| n.weight_toggleable() && n.weight_enabled != on)
                .map(|(i, _)| i)
                .collect();
            let node = out.get_mut(pick(&eligible, rng)?)?;
            node.weight_enabled = on;
            node.weight = 1.0;
        }
        VariationKind::Subtree => {
            let index = pick(&editable(root), rng)?;
            let level = root.depth_of(index)?;
            let old_size = root.get(index)?.size();
            let depth_budget = (settings.max_depth + 1).checked_sub(level)?;
            let size_budget = settings.max_size.checked_sub(root.size() - old_size)?;
            if depth_budget == 0 || size_budget == 0 {
                return None;
            }
            *out.get_mut(index)? = generate_subtree(space, rng, depth_budget, size_budget, false);
        }
        VariationKind::Point => {
            let index = pick(&editable(root), rng)?;
            let node = out.get_mut(index)?;
            if node.children.is_empty() {
                let replacement = other_terminal(&node.kind, space, rng)?;
                *node = replacement;
            } else {
                let current = node.kind.symbol();
                let options: Vec<Symbol> = space
                    .functions
                    .iter()
                    .copied()
                    .filter(|s| *s != current && s.arity() == node.children.len())
                    .collect();
                node.kind = space.kind_for(*options.get(rng.random_range(0..options.len().max(1)))?, rng);
            }
        }
        VariationKind::Delete => {
            let inner: Vec<usize> = editable(root)
                .into_iter()
                .filter(|&i| root.get(i).is_some_and(|n| !n.children.is_empty()))
                .collect();
            let node = out.get_mut(pick(&inner, rng)?)?;
            let keep = rng.random_range(0..node.children.len());
            let child = node.children.swap_remove(keep);
            *node = child;
        }
        VariationKind::Insert => {
            let index = pick(&editable(root), rng)?;
            let symbol = *space.functions.get(rng.random_range(0..space.functions.len().max(1)))?;
            let arity = symbol.arity();
            let slot = rng.random_range(0..arity);
            let node = out.get_mut(index)?;
            let wrapped = std::mem::replace(node, Node::constant(0.0));
            let children = (0..arity)
                .map(|k| {
                    if k == slot {
                        wrapped.clone()
                    } else {
                        space.random_terminal(rng, false)
                    }
                })
                .collect();
            *node = Node::new(space.kind_for(symbol, rng), children);
        }
        VariationKind::Crossover => return None,
    }
    Some(out)
}

/// Replaces a random subtree of `first` with a copy of a random subtree of `second`.
pub fn crossover<R: Rng + ?Sized>(first: &Node, second: &Node, rng: &mut R) -> Option<Node> {
    let target = pick(&editable(first), rng)?;
    let donor = second.get(pick(&editable(second), rng)?)?.clone();
    let mut out = first.clone();
    *out.get_mut(target)? = donor;
    Some(out)
}

/// Pre-order indices that variation may touch (the logistic root is fixed).
fn editable(root: &Node) -> Vec<usize> {
    let skip_root = matches!(root.kind, NodeKind::Logistic { .. });
    (usize::from(skip_root)..root.size()).collect()
}

fn pick<R: Rng + ?Sized>(options: &[usize], rng: &mut R) -> Option<usize> {
    if options.is_empty() {
        None
    } else {
        Some(options[rng.random_range(0..options.len())])
    }
}

fn other_terminal<R: Rng + ?Sized>(current: &NodeKind, space: &SearchSpace, rng: &mut R) -> Option<Node> {
    let mut options: Vec<Node> = (0..space.n_features())
        .filter(|&j| !matches!(current, NodeKind::Feature(k) if *k == j))
        .map(|j| Node::feature(j).weighted(1.0))
        .collect();
    if space.constants && !matches!(current, NodeKind::Constant(_)) {
        options.push(Node::constant(1.0));
    }
    if options.is_empty() {
        None
    } else {
        let k = rng.random_range(0..options.len());
        Some(options.swap_remove(k))
    }
}
