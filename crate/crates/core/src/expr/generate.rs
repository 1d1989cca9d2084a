//! Random tree creation with PTC2 (probabilistic tree creation 2).
//!
//! A target size is drawn uniformly from `1..=max_size`; open child slots are
//! expanded in random order with operators until the node count plus the
//! number of pending slots reaches the target, then every remaining slot is
//! closed with a terminal. Operators are only placed where their arity still
//! fits the size budget and above the depth limit, so the result always
//! satisfies both bounds.

use rand::Rng;

use super::{Node, NodeKind, Program, Symbol};
use crate::data::TaskKind;
use crate::error::{Error, Result};

/// The symbols and terminals available to tree construction and mutation.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchSpace {
    pub functions: Vec<Symbol>,
    pub feature_names: Vec<String>,
    pub task: TaskKind,
    /// Build initial trees solely from greedy splits over constant leaves.
    pub split_seeded: bool,
    /// Whether constants are available as terminals.
    pub constants: bool,
}

impl SearchSpace {
    pub fn new(functions: Vec<Symbol>, feature_names: Vec<String>, task: TaskKind) -> Self {
        Self {
            functions,
            feature_names,
            task,
            split_seeded: false,
            constants: true,
        }
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.functions.is_empty() && !self.split_seeded {
            return Err(Error::Config("function set is empty".into()));
        }
        if self.n_features() == 0 && !self.constants {
            return Err(Error::Config("terminal set is empty".into()));
        }
        if self
            .functions
            .iter()
            .any(|s| s.is_terminal() || *s == Symbol::Logistic)
        {
            return Err(Error::Config(
                "function set may only contain operators".into(),
            ));
        }
        if self.n_features() == 0 && self.functions.contains(&Symbol::SplitGreedy) {
            return Err(Error::Config("greedy splits need at least one feature".into()));
        }
        Ok(())
    }

    pub(crate) fn random_terminal<R: Rng + ?Sized>(&self, rng: &mut R, seeded: bool) -> Node {
        let features = if seeded { 0 } else { self.n_features() };
        let choices = features + usize::from(self.constants || seeded || features == 0);
        let k = rng.random_range(0..choices);
        if k < features {
            // only terminal weights start enabled
            Node::feature(k).weighted(1.0)
        } else {
            Node::constant(1.0)
        }
    }

    pub(crate) fn kind_for<R: Rng + ?Sized>(&self, symbol: Symbol, rng: &mut R) -> NodeKind {
        match NodeKind::from_symbol(symbol) {
            NodeKind::SplitGreedy { threshold, pass_through, .. } => NodeKind::SplitGreedy {
                feature: rng.random_range(0..self.n_features().max(1)),
                threshold,
                pass_through,
            },
            kind => kind,
        }
    }

    fn random_operator<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        max_arity: usize,
        seeded: bool,
    ) -> Option<Node> {
        let pool: Vec<Symbol> = if seeded {
            vec![Symbol::SplitGreedy]
        } else {
            self.functions.clone()
        };
        let fitting: Vec<Symbol> = pool.into_iter().filter(|s| s.arity() <= max_arity).collect();
        if fitting.is_empty() {
            return None;
        }
        let symbol = fitting[rng.random_range(0..fitting.len())];
        Some(Node::new(self.kind_for(symbol, rng), Vec::new()))
    }
}

struct Slot {
    parent: usize,
    position: usize,
    depth: usize,
}

/// PTC2 subtree within `max_depth` levels and `max_size` nodes.
pub(crate) fn generate_subtree<R: Rng + ?Sized>(
    space: &SearchSpace,
    rng: &mut R,
    max_depth: usize,
    max_size: usize,
    seeded: bool,
) -> Node {
    debug_assert!(max_depth >= 1 && max_size >= 1);
    let mut target = rng.random_range(1..=max_size);
    if seeded && max_size >= 3 && max_depth >= 2 {
        target = target.max(3);
    }

    // arena of childless nodes plus their child indices
    let mut nodes: Vec<Node> = Vec::new();
    let mut links: Vec<Vec<usize>> = Vec::new();
    let mut open: Vec<Slot> = Vec::new();

    let root = if target > 1 && max_depth > 1 {
        space.random_operator(rng, max_size - 1, seeded)
    } else {
        None
    }
    .unwrap_or_else(|| space.random_terminal(rng, seeded));
    let arity = root.kind.arity();
    nodes.push(root);
    links.push(vec![usize::MAX; arity]);
    open.extend((0..arity).map(|position| Slot {
        parent: 0,
        position,
        depth: 2,
    }));

    while !open.is_empty() && nodes.len() + open.len() < target {
        let slot = open.swap_remove(rng.random_range(0..open.len()));
        let budget = max_size - nodes.len() - 1 - open.len();
        let node = if slot.depth < max_depth {
            space.random_operator(rng, budget, seeded)
        } else {
            None
        }
        .unwrap_or_else(|| space.random_terminal(rng, seeded));
        let idx = nodes.len();
        let arity = node.kind.arity();
        nodes.push(node);
        links.push(vec![usize::MAX; arity]);
        links[slot.parent][slot.position] = idx;
        open.extend((0..arity).map(|position| Slot {
            parent: idx,
            position,
            depth: slot.depth + 1,
        }));
    }
    for slot in open {
        let idx = nodes.len();
        nodes.push(space.random_terminal(rng, seeded));
        links.push(Vec::new());
        links[slot.parent][slot.position] = idx;
    }

    fn assemble(i: usize, nodes: &mut [Option<Node>], links: &[Vec<usize>]) -> Node {
        let mut node = nodes[i].take().expect("each arena node is used once");
        node.children = links[i].iter().map(|&c| assemble(c, nodes, links)).collect();
        node
    }
    let mut slots: Vec<Option<Node>> = nodes.into_iter().map(Some).collect();
    assemble(0, &mut slots, &links)
}

/// Draws a random program within the bounds. Classification programs get a
/// logistic root, which counts toward both bounds.
pub fn generate_random<R: Rng + ?Sized>(
    space: &SearchSpace,
    rng: &mut R,
    max_depth: usize,
    max_size: usize,
) -> Result<Program> {
    space.validate()?;
    if max_depth == 0 || max_size == 0 {
        return Err(Error::Config("max_depth and max_size must be >= 1".into()));
    }
    let root = match space.task {
        TaskKind::Regression => {
            generate_subtree(space, rng, max_depth, max_size, space.split_seeded)
        }
        TaskKind::Classification => {
            if max_depth < 2 || max_size < 2 {
                return Err(Error::Config(
                    "classification programs need max_depth and max_size >= 2".into(),
                ));
            }
            let child = generate_subtree(space, rng, max_depth - 1, max_size - 1, space.split_seeded);
            Node::new(NodeKind::Logistic { offset: 0.0 }, vec![child])
        }
    };
    Program::new(root, space.task, space.feature_names.clone())
}
