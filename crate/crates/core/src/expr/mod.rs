//! Expression trees with innate node weights and split operators.
//!
//! Parameters are addressed in pre-order: for each node, its weight (when
//! enabled) comes first, followed by its constant value, split threshold or
//! logistic offset, and then the parameters of its children in order. A
//! subtree's parameters are therefore a contiguous slice of its ancestor's.

mod document;
mod eval;
mod generate;

pub use document::{ModelDocument, NodeDocument};
pub use generate::{generate_random, SearchSpace};

pub(crate) use eval::eval_node;
pub(crate) use generate::generate_subtree;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, TaskKind};
use crate::error::{Error, Result};

/// Fieldless node symbol, used for function sets and complexity tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symbol {
    Constant,
    Feature,
    Sin,
    Cos,
    Tanh,
    Exp,
    Log,
    Sqrt,
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Min,
    Max,
    Ceil,
    Floor,
    SplitGreedy,
    SplitFlexible,
    Logistic,
}

impl Symbol {
    pub const ALL: [Symbol; 20] = [
        Symbol::Constant,
        Symbol::Feature,
        Symbol::Sin,
        Symbol::Cos,
        Symbol::Tanh,
        Symbol::Exp,
        Symbol::Log,
        Symbol::Sqrt,
        Symbol::Add,
        Symbol::Sub,
        Symbol::Mul,
        Symbol::Div,
        Symbol::Pow,
        Symbol::Min,
        Symbol::Max,
        Symbol::Ceil,
        Symbol::Floor,
        Symbol::SplitGreedy,
        Symbol::SplitFlexible,
        Symbol::Logistic,
    ];

    pub fn arity(self) -> usize {
        use Symbol::*;
        match self {
            Constant | Feature => 0,
            Sin | Cos | Tanh | Exp | Log | Sqrt | Ceil | Floor | Logistic => 1,
            Add | Sub | Mul | Div | Pow | Min | Max | SplitGreedy => 2,
            SplitFlexible => 3,
        }
    }

    pub fn name(self) -> &'static str {
        use Symbol::*;
        match self {
            Constant => "constant",
            Feature => "feature",
            Sin => "sin",
            Cos => "cos",
            Tanh => "tanh",
            Exp => "exp",
            Log => "log",
            Sqrt => "sqrt",
            Add => "add",
            Sub => "sub",
            Mul => "mul",
            Div => "div",
            Pow => "pow",
            Min => "min",
            Max => "max",
            Ceil => "ceil",
            Floor => "floor",
            SplitGreedy => "split_greedy",
            SplitFlexible => "split_flexible",
            Logistic => "logistic",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn is_terminal(self) -> bool {
        self.arity() == 0
    }

    pub fn is_split(self) -> bool {
        matches!(self, Symbol::SplitGreedy | Symbol::SplitFlexible)
    }

    /// Parses a comma-separated function set. `split` expands to both split
    /// kinds; names are case-insensitive.
    pub fn parse_function_set(spec: &str) -> Result<Vec<Symbol>> {
        let mut out = Vec::new();
        for raw in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let lower = raw.to_ascii_lowercase();
            let symbols: Vec<Symbol> = match lower.as_str() {
                "split" => vec![Symbol::SplitGreedy, Symbol::SplitFlexible],
                "+" => vec![Symbol::Add],
                "-" => vec![Symbol::Sub],
                "*" => vec![Symbol::Mul],
                "/" => vec![Symbol::Div],
                other => match Symbol::from_name(other) {
                    Some(s) if !s.is_terminal() && s != Symbol::Logistic => vec![s],
                    _ => return Err(Error::Config(format!("unknown function `{raw}`"))),
                },
            };
            for s in symbols {
                if !out.contains(&s) {
                    out.push(s);
                }
            }
        }
        Ok(out)
    }
}

impl std::fmt::Display for Symbol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NodeKind {
    Constant(f64),
    Feature(usize),
    Sin,
    Cos,
    Tanh,
    Exp,
    Log,
    Sqrt,
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Min,
    Max,
    Ceil,
    Floor,
    /// Routes a row to the first child when `x[feature] > threshold`.
    SplitGreedy {
        feature: usize,
        threshold: f64,
        pass_through: bool,
    },
    /// Routes a row to the second child when the first child's value is
    /// greater than `threshold`, and to the third child otherwise.
    SplitFlexible { threshold: f64, pass_through: bool },
    Logistic { offset: f64 },
}

impl NodeKind {
    pub fn symbol(&self) -> Symbol {
        match self {
            NodeKind::Constant(_) => Symbol::Constant,
            NodeKind::Feature(_) => Symbol::Feature,
            NodeKind::Sin => Symbol::Sin,
            NodeKind::Cos => Symbol::Cos,
            NodeKind::Tanh => Symbol::Tanh,
            NodeKind::Exp => Symbol::Exp,
            NodeKind::Log => Symbol::Log,
            NodeKind::Sqrt => Symbol::Sqrt,
            NodeKind::Add => Symbol::Add,
            NodeKind::Sub => Symbol::Sub,
            NodeKind::Mul => Symbol::Mul,
            NodeKind::Div => Symbol::Div,
            NodeKind::Pow => Symbol::Pow,
            NodeKind::Min => Symbol::Min,
            NodeKind::Max => Symbol::Max,
            NodeKind::Ceil => Symbol::Ceil,
            NodeKind::Floor => Symbol::Floor,
            NodeKind::SplitGreedy { .. } => Symbol::SplitGreedy,
            NodeKind::SplitFlexible { .. } => Symbol::SplitFlexible,
            NodeKind::Logistic { .. } => Symbol::Logistic,
        }
    }

    /// Default node of a symbol: features default to column 0, split and
    /// offset values to 0, constants to 1.
    pub fn from_symbol(symbol: Symbol) -> Self {
        match symbol {
            Symbol::Constant => NodeKind::Constant(1.0),
            Symbol::Feature => NodeKind::Feature(0),
            Symbol::Sin => NodeKind::Sin,
            Symbol::Cos => NodeKind::Cos,
            Symbol::Tanh => NodeKind::Tanh,
            Symbol::Exp => NodeKind::Exp,
            Symbol::Log => NodeKind::Log,
            Symbol::Sqrt => NodeKind::Sqrt,
            Symbol::Add => NodeKind::Add,
            Symbol::Sub => NodeKind::Sub,
            Symbol::Mul => NodeKind::Mul,
            Symbol::Div => NodeKind::Div,
            Symbol::Pow => NodeKind::Pow,
            Symbol::Min => NodeKind::Min,
            Symbol::Max => NodeKind::Max,
            Symbol::Ceil => NodeKind::Ceil,
            Symbol::Floor => NodeKind::Floor,
            Symbol::SplitGreedy => NodeKind::SplitGreedy {
                feature: 0,
                threshold: 0.0,
                pass_through: false,
            },
            Symbol::SplitFlexible => NodeKind::SplitFlexible {
                threshold: 0.0,
                pass_through: false,
            },
            Symbol::Logistic => NodeKind::Logistic { offset: 0.0 },
        }
    }

    pub fn arity(&self) -> usize {
        self.symbol().arity()
    }
}

/// Role of one entry of a program's parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamRole {
    Weight,
    Constant,
    Threshold,
    Offset,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub kind: NodeKind,
    pub weight: f64,
    pub weight_enabled: bool,
    pub children: Vec<Node>,
}

impl Node {
    pub fn new(kind: NodeKind, children: Vec<Node>) -> Self {
        Self {
            kind,
            weight: 1.0,
            weight_enabled: false,
            children,
        }
    }

    pub fn leaf(kind: NodeKind) -> Self {
        Self::new(kind, Vec::new())
    }

    pub fn constant(value: f64) -> Self {
        Self::leaf(NodeKind::Constant(value))
    }

    pub fn feature(index: usize) -> Self {
        Self::leaf(NodeKind::Feature(index))
    }

    pub fn weighted(mut self, weight: f64) -> Self {
        self.weight = weight;
        self.weight_enabled = true;
        self
    }

    /// Multiplier applied to this node's raw output.
    pub fn effective_weight(&self) -> f64 {
        if self.weight_enabled {
            self.weight
        } else {
            1.0
        }
    }

    /// Whether the innate weight may be toggled. Constants carry their own
    /// value and the logistic root is fixed.
    pub fn weight_toggleable(&self) -> bool {
        !matches!(self.kind, NodeKind::Constant(_) | NodeKind::Logistic { .. })
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(Node::size).sum::<usize>()
    }

    /// Number of nodes on the longest root-to-leaf path (a leaf has depth 1).
    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(Node::depth).max().unwrap_or(0)
    }

    pub fn complexity(&self, table: &ComplexityTable) -> u64 {
        u64::from(table.cost(self.kind.symbol()))
            + self.children.iter().map(|c| c.complexity(table)).sum::<u64>()
    }

    pub fn is_split(&self) -> bool {
        self.kind.symbol().is_split()
    }

    pub fn local_roles(&self) -> impl Iterator<Item = ParamRole> {
        let weight = self.weight_enabled.then_some(ParamRole::Weight);
        let own = match self.kind {
            NodeKind::Constant(_) => Some(ParamRole::Constant),
            NodeKind::SplitGreedy { .. } | NodeKind::SplitFlexible { .. } => {
                Some(ParamRole::Threshold)
            }
            NodeKind::Logistic { .. } => Some(ParamRole::Offset),
            _ => None,
        };
        weight.into_iter().chain(own)
    }

    pub fn local_param_count(&self) -> usize {
        self.local_roles().count()
    }

    pub fn param_count(&self) -> usize {
        self.local_param_count() + self.children.iter().map(Node::param_count).sum::<usize>()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.collect_params(&mut out);
        out
    }

    fn collect_params(&self, out: &mut Vec<f64>) {
        if self.weight_enabled {
            out.push(self.weight);
        }
        match self.kind {
            NodeKind::Constant(v) => out.push(v),
            NodeKind::SplitGreedy { threshold, .. } | NodeKind::SplitFlexible { threshold, .. } => {
                out.push(threshold)
            }
            NodeKind::Logistic { offset } => out.push(offset),
            _ => {}
        }
        for c in &self.children {
            c.collect_params(out);
        }
    }

    pub fn param_roles(&self) -> Vec<ParamRole> {
        let mut out = Vec::new();
        self.collect_roles(&mut out);
        out
    }

    fn collect_roles(&self, out: &mut Vec<ParamRole>) {
        out.extend(self.local_roles());
        for c in &self.children {
            c.collect_roles(out);
        }
    }

    /// Writes `values` back in pre-order. Panics if the length is wrong.
    pub fn set_params(&mut self, values: &[f64]) {
        let mut cursor = 0;
        self.inject(values, &mut cursor);
        assert_eq!(cursor, values.len(), "parameter vector length mismatch");
    }

    fn inject(&mut self, values: &[f64], cursor: &mut usize) {
        if self.weight_enabled {
            self.weight = values[*cursor];
            *cursor += 1;
        }
        match &mut self.kind {
            NodeKind::Constant(v) => {
                *v = values[*cursor];
                *cursor += 1;
            }
            NodeKind::SplitGreedy { threshold, .. } | NodeKind::SplitFlexible { threshold, .. } => {
                *threshold = values[*cursor];
                *cursor += 1;
            }
            NodeKind::Logistic { offset } => {
                *offset = values[*cursor];
                *cursor += 1;
            }
            _ => {}
        }
        for c in &mut self.children {
            c.inject(values, cursor);
        }
    }

    /// Pre-order traversal.
    pub fn iter(&self) -> impl Iterator<Item = &Node> {
        let mut stack = vec![self];
        std::iter::from_fn(move || {
            let node = stack.pop()?;
            stack.extend(node.children.iter().rev());
            Some(node)
        })
    }

    /// Node at pre-order position `index`.
    pub fn get(&self, index: usize) -> Option<&Node> {
        self.iter().nth(index)
    }

    pub fn get_mut(&mut self, mut index: usize) -> Option<&mut Node> {
        let mut node = self;
        loop {
            if index == 0 {
                return Some(node);
            }
            index -= 1;
            let mut next = None;
            for (k, c) in node.children.iter().enumerate() {
                let s = c.size();
                if index < s {
                    next = Some(k);
                    break;
                }
                index -= s;
            }
            node = &mut node.children[next?];
        }
    }

    /// Depth (root = 1) of the node at pre-order position `index`.
    pub fn depth_of(&self, index: usize) -> Option<usize> {
        fn walk(n: &Node, index: &mut usize, level: usize) -> Option<usize> {
            if *index == 0 {
                return Some(level);
            }
            *index -= 1;
            for c in &n.children {
                let s = c.size();
                if *index < s {
                    return walk(c, index, level + 1);
                }
                *index -= s;
            }
            None
        }
        let mut i = index;
        walk(self, &mut i, 1)
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.iter()
            .filter_map(|n| match n.kind {
                NodeKind::Feature(j) | NodeKind::SplitGreedy { feature: j, .. } => Some(j),
                _ => None,
            })
            .max()
    }

    pub fn validate_structure(&self, is_root: bool) -> Result<()> {
        if self.children.len() != self.kind.arity() {
            return Err(Error::Structure(format!(
                "{} expects {} children, found {}",
                self.kind.symbol(),
                self.kind.arity(),
                self.children.len()
            )));
        }
        if !is_root && matches!(self.kind, NodeKind::Logistic { .. }) {
            return Err(Error::Structure("logistic node below the root".into()));
        }
        for c in &self.children {
            c.validate_structure(false)?;
        }
        Ok(())
    }
}

/// Per-symbol complexity costs used by the linear complexity objective.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityTable {
    costs: BTreeMap<Symbol, u32>,
}

impl Default for ComplexityTable {
    fn default() -> Self {
        use Symbol::*;
        let costs = Symbol::ALL
            .into_iter()
            .map(|s| {
                let c = match s {
                    Constant | Feature => 1,
                    Add | Sub => 2,
                    Mul | Div | Min | Max | Ceil | Floor => 3,
                    Pow | Log | Exp | Sqrt => 4,
                    Sin | Cos | Tanh => 5,
                    SplitGreedy | SplitFlexible => 4,
                    Logistic => 3,
                };
                (s, c)
            })
            .collect();
        Self { costs }
    }
}

impl ComplexityTable {
    pub fn cost(&self, symbol: Symbol) -> u32 {
        self.costs[&symbol]
    }

    pub fn with_cost(mut self, symbol: Symbol, cost: u32) -> Result<Self> {
        if cost == 0 {
            return Err(Error::Config(format!("complexity of {symbol} must be >= 1")));
        }
        self.costs.insert(symbol, cost);
        Ok(self)
    }

    /// Fills missing entries from the defaults and rejects zero costs.
    pub fn normalized(mut self) -> Result<Self> {
        for (s, c) in ComplexityTable::default().costs {
            self.costs.entry(s).or_insert(c);
        }
        if let Some((s, _)) = self.costs.iter().find(|(_, &c)| c == 0) {
            return Err(Error::Config(format!("complexity of {s} must be >= 1")));
        }
        Ok(self)
    }
}

/// An expression tree bound to a task and a feature naming.
#[derive(Clone, Debug, PartialEq)]
pub struct Program {
    pub root: Node,
    pub task: TaskKind,
    pub feature_names: Vec<String>,
}

impl Program {
    /// Checks arity, feature bounds and the logistic-root rule.
    pub fn new(root: Node, task: TaskKind, feature_names: Vec<String>) -> Result<Self> {
        root.validate_structure(true)?;
        let is_logistic = matches!(root.kind, NodeKind::Logistic { .. });
        match task {
            TaskKind::Classification if !is_logistic => {
                return Err(Error::Structure(
                    "classification programs need a logistic root".into(),
                ))
            }
            TaskKind::Regression if is_logistic => {
                return Err(Error::Structure(
                    "logistic root is only valid for classification".into(),
                ))
            }
            _ => {}
        }
        if let Some(j) = root.max_feature() {
            if j >= feature_names.len() {
                return Err(Error::FeatureOutOfBounds {
                    index: j,
                    columns: feature_names.len(),
                });
            }
        }
        Ok(Self {
            root,
            task,
            feature_names,
        })
    }

    pub fn size(&self) -> usize {
        self.root.size()
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn params(&self) -> Vec<f64> {
        self.root.params()
    }

    pub fn param_roles(&self) -> Vec<ParamRole> {
        self.root.param_roles()
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        let n = self.root.param_count();
        if values.len() != n {
            return Err(Error::Structure(format!(
                "expected {n} parameters, got {}",
                values.len()
            )));
        }
        self.root.set_params(values);
        Ok(())
    }

    pub fn linear_complexity(&self, table: &ComplexityTable) -> u64 {
        self.root.complexity(table)
    }

    /// Predictions for every row of `x`.
    pub fn evaluate(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        if x.n_rows() == 0 {
            return Err(Error::EmptyInput("feature matrix has no rows".into()));
        }
        if let Some(j) = self.root.max_feature() {
            if j >= x.n_features() {
                return Err(Error::FeatureOutOfBounds {
                    index: j,
                    columns: x.n_features(),
                });
            }
        }
        let rows: Vec<usize> = (0..x.n_rows()).collect();
        Ok(eval_node(&self.root, x, &rows, None).values)
    }
}
