//! JSON model documents and text renderings (infix and nested if/else).

use serde::{Deserialize, Serialize};

use super::{ComplexityTable, Node, NodeKind, Program, Symbol};
use crate::data::TaskKind;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeDocument {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    pub weight: f64,
    pub weight_enabled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub pass_through: bool,
    #[serde(default)]
    pub children: Vec<NodeDocument>,
}

/// Serialized model. `nodes` holds the root; the logistic offset of a
/// classifier lives in `offset`. `params` mirrors the trainable vector in
/// pre-order and is checked on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub task: TaskKind,
    pub feature_names: Vec<String>,
    pub nodes: Vec<NodeDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    pub params: Vec<f64>,
    pub complexity: u64,
    pub size: usize,
    pub depth: usize,
}

fn node_to_doc(node: &Node) -> NodeDocument {
    let mut doc = NodeDocument {
        kind: node.kind.symbol().name().to_string(),
        feature: None,
        value: None,
        weight: node.weight,
        weight_enabled: node.weight_enabled,
        threshold: None,
        pass_through: false,
        children: node.children.iter().map(node_to_doc).collect(),
    };
    match node.kind {
        NodeKind::Constant(v) => doc.value = Some(v),
        NodeKind::Feature(j) => doc.feature = Some(j),
        NodeKind::SplitGreedy {
            feature,
            threshold,
            pass_through,
        } => {
            doc.feature = Some(feature);
            doc.threshold = Some(threshold);
            doc.pass_through = pass_through;
        }
        NodeKind::SplitFlexible {
            threshold,
            pass_through,
        } => {
            doc.threshold = Some(threshold);
            doc.pass_through = pass_through;
        }
        _ => {}
    }
    doc
}

fn doc_err(path: &str, message: impl Into<String>) -> Error {
    Error::Document {
        path: path.to_string(),
        message: message.into(),
    }
}

fn doc_to_node(
    doc: &NodeDocument,
    path: &str,
    n_features: usize,
    is_root: bool,
    offset: Option<f64>,
) -> Result<Node> {
    let symbol =
        Symbol::from_name(&doc.kind).ok_or_else(|| doc_err(path, format!("unknown kind `{}`", doc.kind)))?;
    if doc.children.len() != symbol.arity() {
        return Err(doc_err(
            path,
            format!(
                "`{}` expects {} children, found {}",
                doc.kind,
                symbol.arity(),
                doc.children.len()
            ),
        ));
    }
    let feature = |what: &str| -> Result<usize> {
        let j = doc
            .feature
            .ok_or_else(|| doc_err(path, format!("{what} without `feature`")))?;
        if j >= n_features {
            return Err(doc_err(
                path,
                format!("feature {j} out of range for {n_features} feature names"),
            ));
        }
        Ok(j)
    };
    let threshold = || {
        doc.threshold
            .ok_or_else(|| doc_err(path, "split without `threshold`"))
    };
    let kind = match symbol {
        Symbol::Constant => NodeKind::Constant(
            doc.value
                .ok_or_else(|| doc_err(path, "constant without `value`"))?,
        ),
        Symbol::Feature => NodeKind::Feature(feature("feature node")?),
        Symbol::SplitGreedy => NodeKind::SplitGreedy {
            feature: feature("greedy split")?,
            threshold: threshold()?,
            pass_through: doc.pass_through,
        },
        Symbol::SplitFlexible => NodeKind::SplitFlexible {
            threshold: threshold()?,
            pass_through: doc.pass_through,
        },
        Symbol::Logistic => {
            if !is_root {
                return Err(doc_err(path, "logistic node below the root"));
            }
            NodeKind::Logistic {
                offset: offset.ok_or_else(|| doc_err(path, "classifier without `offset`"))?,
            }
        }
        other => NodeKind::from_symbol(other),
    };
    let children = doc
        .children
        .iter()
        .enumerate()
        .map(|(k, c)| doc_to_node(c, &format!("{path}.children[{k}]"), n_features, false, None))
        .collect::<Result<Vec<_>>>()?;
    Ok(Node {
        kind,
        weight: doc.weight,
        weight_enabled: doc.weight_enabled,
        children,
    })
}

impl Program {
    pub fn to_document(&self, table: &ComplexityTable) -> ModelDocument {
        let offset = match self.root.kind {
            NodeKind::Logistic { offset } => Some(offset),
            _ => None,
        };
        ModelDocument {
            task: self.task,
            feature_names: self.feature_names.clone(),
            nodes: vec![node_to_doc(&self.root)],
            offset,
            params: self.params(),
            complexity: self.linear_complexity(table),
            size: self.size(),
            depth: self.depth(),
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        let [root] = doc.nodes.as_slice() else {
            return Err(doc_err(
                "nodes",
                format!("expected exactly one root node, found {}", doc.nodes.len()),
            ));
        };
        let root = doc_to_node(root, "nodes[0]", doc.feature_names.len(), true, doc.offset)?;
        let program = Program::new(root, doc.task, doc.feature_names.clone())
            .map_err(|e| doc_err("nodes[0]", e.to_string()))?;
        let params = program.params();
        if params.len() != doc.params.len()
            || params
                .iter()
                .zip(&doc.params)
                .any(|(a, b)| a.to_bits() != b.to_bits())
        {
            return Err(doc_err(
                "params",
                "parameter vector does not match the node values",
            ));
        }
        Ok(program)
    }

    pub fn to_json(&self, table: &ComplexityTable) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document(table))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        Self::from_document(&doc)
    }

    /// Single-line infix rendering.
    pub fn to_infix(&self) -> String {
        infix(&self.root, &self.feature_names)
    }

    /// Nested `if cond > threshold:` / `else:` rendering with `return` leaves.
    pub fn to_pseudocode(&self) -> String {
        let mut lines = Vec::new();
        match &self.root.kind {
            NodeKind::Logistic { offset } => {
                let wrap = Wrap {
                    prefix: format!("logistic({}", weight_prefix(&self.root)),
                    suffix: format!(" + {})", num(*offset)),
                };
                block(&self.root.children[0], &self.feature_names, 0, &wrap, &mut lines);
            }
            _ => block(&self.root, &self.feature_names, 0, &Wrap::default(), &mut lines),
        }
        lines.join("\n") + "\n"
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn feature_name(names: &[String], j: usize) -> String {
    names.get(j).cloned().unwrap_or_else(|| format!("x{j}"))
}

fn weight_prefix(node: &Node) -> String {
    if node.weight_enabled {
        format!("{}*", num(node.weight))
    } else {
        String::new()
    }
}

fn infix(node: &Node, names: &[String]) -> String {
    let c = |k: usize| infix(&node.children[k], names);
    let body = match &node.kind {
        NodeKind::Constant(v) => num(*v),
        NodeKind::Feature(j) => feature_name(names, *j),
        NodeKind::Sin
        | NodeKind::Cos
        | NodeKind::Tanh
        | NodeKind::Exp
        | NodeKind::Log
        | NodeKind::Sqrt
        | NodeKind::Ceil
        | NodeKind::Floor => format!("{}({})", node.kind.symbol().name(), c(0)),
        NodeKind::Add => format!("({} + {})", c(0), c(1)),
        NodeKind::Sub => format!("({} - {})", c(0), c(1)),
        NodeKind::Mul => format!("({} * {})", c(0), c(1)),
        NodeKind::Div => format!("({} / {})", c(0), c(1)),
        NodeKind::Pow => format!("({} ^ {})", c(0), c(1)),
        NodeKind::Min => format!("min({}, {})", c(0), c(1)),
        NodeKind::Max => format!("max({}, {})", c(0), c(1)),
        NodeKind::SplitGreedy {
            feature,
            threshold,
            pass_through,
        } => {
            if *pass_through {
                c(0)
            } else {
                format!(
                    "(if {} > {} then {} else {})",
                    feature_name(names, *feature),
                    num(*threshold),
                    c(0),
                    c(1)
                )
            }
        }
        NodeKind::SplitFlexible {
            threshold,
            pass_through,
        } => {
            if *pass_through {
                c(1)
            } else {
                format!("(if {} > {} then {} else {})", c(0), num(*threshold), c(1), c(2))
            }
        }
        NodeKind::Logistic { offset } => format!("logistic({} + {})", c(0), num(*offset)),
    };
    format!("{}{}", weight_prefix(node), body)
}

#[derive(Default)]
struct Wrap {
    prefix: String,
    suffix: String,
}

fn block(node: &Node, names: &[String], indent: usize, wrap: &Wrap, lines: &mut Vec<String>) {
    let pad = "    ".repeat(indent);
    let inner_wrap = Wrap {
        prefix: format!("{}{}", wrap.prefix, weight_prefix(node)),
        suffix: wrap.suffix.clone(),
    };
    let (condition, threshold, on_true, on_false) = match &node.kind {
        NodeKind::SplitGreedy {
            pass_through: true, ..
        } => return block(&node.children[0], names, indent, &inner_wrap, lines),
        NodeKind::SplitFlexible {
            pass_through: true, ..
        } => return block(&node.children[1], names, indent, &inner_wrap, lines),
        NodeKind::SplitGreedy {
            feature, threshold, ..
        } => (
            feature_name(names, *feature),
            *threshold,
            &node.children[0],
            &node.children[1],
        ),
        NodeKind::SplitFlexible { threshold, .. } => (
            infix(&node.children[0], names),
            *threshold,
            &node.children[1],
            &node.children[2],
        ),
        _ => {
            lines.push(format!(
                "{pad}return {}{}{}",
                wrap.prefix,
                infix(node, names),
                wrap.suffix
            ));
            return;
        }
    };
    lines.push(format!("{pad}if {condition} > {}:", num(threshold)));
    block(on_true, names, indent + 1, &inner_wrap, lines);
    lines.push(format!("{pad}else:"));
    block(on_false, names, indent + 1, &inner_wrap, lines);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("x{i}")).collect()
    }

    fn greedy(feature: usize, threshold: f64, a: Node, b: Node) -> Node {
        Node::new(
            NodeKind::SplitGreedy {
                feature,
                threshold,
                pass_through: false,
            },
            vec![a, b],
        )
    }

    #[test]
    fn single_split_pseudocode_has_one_if_line() {
        let p = Program::new(
            greedy(0, 2.5, Node::constant(1.0), Node::constant(0.0)),
            TaskKind::Regression,
            vec!["resp_rate".into()],
        )
        .unwrap();
        let text = p.to_pseudocode();
        let ifs: Vec<&str> = text.lines().filter(|l| l.trim_start().starts_with("if ")).collect();
        assert_eq!(ifs, vec!["if resp_rate > 2.5:"]);
        assert!(text.contains("    return 1"));
        assert!(text.contains("else:"));
    }

    #[test]
    fn classifier_pseudocode_wraps_leaves() {
        let root = Node::new(
            NodeKind::Logistic { offset: -1.5 },
            vec![greedy(0, 3.0, Node::constant(4.0), Node::feature(1).weighted(2.0))],
        );
        let p = Program::new(root, TaskKind::Classification, names(2)).unwrap();
        let text = p.to_pseudocode();
        assert!(text.contains("return logistic(4 + -1.5)"), "{text}");
        assert!(text.contains("return logistic(2*x1 + -1.5)"), "{text}");
    }

    #[test]
    fn infix_rendering() {
        let n = Node::new(
            NodeKind::Add,
            vec![Node::feature(0).weighted(2.0), Node::new(NodeKind::Sin, vec![Node::feature(1)])],
        );
        let p = Program::new(n, TaskKind::Regression, names(2)).unwrap();
        assert_eq!(p.to_infix(), "(2*x0 + sin(x1))");
    }

    #[test]
    fn malformed_document_reports_node_path() {
        let p = Program::new(
            Node::new(NodeKind::Add, vec![Node::feature(0), Node::feature(1)]),
            TaskKind::Regression,
            names(2),
        )
        .unwrap();
        let mut doc = p.to_document(&ComplexityTable::default());
        doc.nodes[0].children[1].kind = "frobnicate".into();
        match Program::from_document(&doc) {
            Err(Error::Document { path, message }) => {
                assert_eq!(path, "nodes[0].children[1]");
                assert!(message.contains("frobnicate"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn disabled_weights_are_omitted_from_params_but_kept() {
        let mut leaf = Node::feature(0).weighted(3.25);
        leaf.weight_enabled = false;
        let p = Program::new(
            Node::new(NodeKind::Mul, vec![leaf, Node::constant(2.0)]),
            TaskKind::Regression,
            names(1),
        )
        .unwrap();
        let doc = p.to_document(&ComplexityTable::default());
        assert_eq!(doc.params, vec![2.0]);
        assert_eq!(doc.nodes[0].children[0].weight, 3.25);
        let back = Program::from_json(&p.to_json(&ComplexityTable::default()).unwrap()).unwrap();
        assert_eq!(back, p);
    }

    fn arb_node(depth: u32) -> impl Strategy<Value = Node> {
        let leaf = prop_oneof![
            any::<f64>()
                .prop_filter("finite", |v| v.is_finite())
                .prop_map(Node::constant),
            (0usize..3, any::<bool>(), -1e6f64..1e6).prop_map(|(j, on, w)| {
                let mut n = Node::feature(j).weighted(w);
                n.weight_enabled = on;
                n
            }),
        ];
        leaf.prop_recursive(depth, 24, 3, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone(), 0usize..5).prop_map(|(a, b, k)| {
                    let kind = [NodeKind::Add, NodeKind::Sub, NodeKind::Mul, NodeKind::Div, NodeKind::Max][k].clone();
                    Node::new(kind, vec![a, b])
                }),
                (inner.clone(), -1e3f64..1e3, any::<bool>()).prop_map(|(a, w, on)| {
                    let mut n = Node::new(NodeKind::Exp, vec![a]);
                    n.weight = w;
                    n.weight_enabled = on;
                    n
                }),
                (inner.clone(), inner.clone(), 0usize..3, any::<f64>().prop_filter("finite", |v| v.is_finite()))
                    .prop_map(|(a, b, j, t)| greedy(j, t, a, b)),
                (inner.clone(), inner.clone(), inner, -5.0f64..5.0).prop_map(|(c, a, b, t)| {
                    Node::new(
                        NodeKind::SplitFlexible { threshold: t, pass_through: false },
                        vec![c, a, b],
                    )
                }),
            ]
        })
    }

    proptest! {
        #[test]
        fn json_round_trip_is_bit_exact(root in arb_node(4), offset in -10.0f64..10.0, clf in any::<bool>()) {
            let (root, task) = if clf {
                (Node::new(NodeKind::Logistic { offset }, vec![root]), TaskKind::Classification)
            } else {
                (root, TaskKind::Regression)
            };
            let p = Program::new(root, task, names(3)).unwrap();
            let table = ComplexityTable::default();
            let json = p.to_json(&table).unwrap();
            let back = Program::from_json(&json).unwrap();
            prop_assert_eq!(
                back.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                p.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
            prop_assert_eq!(&back, &p);
            prop_assert_eq!(back.to_json(&table).unwrap(), json);
        }
    }
}
