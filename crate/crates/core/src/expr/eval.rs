//! Masked recursive evaluation with optional forward-mode derivatives.
//!
//! Derivatives are carried as one tangent column per trainable parameter in
//! the subtree. Parameters in different subtrees are disjoint, so a node only
//! rescales and concatenates the tangent lists of its children. Split routing
//! is piecewise constant: condition subtrees contribute no tangents.

use super::{Node, NodeKind};
use crate::data::FeatureMatrix;

/// Divisors smaller than this in magnitude produce a non-finite result.
const DIV_EPS: f64 = 1e-12;

#[derive(Clone, Debug, Default)]
pub(crate) struct Evaluation {
    pub values: Vec<f64>,
    /// `(param index within the evaluated subtree, d value / d param)`.
    pub grads: Vec<(usize, Vec<f64>)>,
}

/// Evaluates `node` on the given rows of `x`. When `trainable` is given it
/// must have one flag per parameter of the subtree; tangents are produced
/// for the flagged ones.
pub(crate) fn eval_node(
    node: &Node,
    x: &FeatureMatrix,
    rows: &[usize],
    trainable: Option<&[bool]>,
) -> Evaluation {
    let mut cursor = 0;
    walk(node, x, rows, trainable, &mut cursor)
}

fn take(cursor: &mut usize) -> usize {
    let i = *cursor;
    *cursor += 1;
    i
}

fn flagged(trainable: Option<&[bool]>, i: usize) -> bool {
    trainable.is_some_and(|t| t[i])
}

fn walk(
    node: &Node,
    x: &FeatureMatrix,
    rows: &[usize],
    tr: Option<&[bool]>,
    cursor: &mut usize,
) -> Evaluation {
    let n = rows.len();
    let weight_idx = node.weight_enabled.then(|| take(cursor));
    let want = tr.is_some();

    let mut ev = match &node.kind {
        NodeKind::Constant(c) => {
            let i = take(cursor);
            let mut grads = Vec::new();
            if flagged(tr, i) {
                grads.push((i, vec![1.0; n]));
            }
            Evaluation {
                values: vec![*c; n],
                grads,
            }
        }
        NodeKind::Feature(j) => {
            let col = x.column(*j);
            Evaluation {
                values: rows.iter().map(|&r| col[r]).collect(),
                grads: Vec::new(),
            }
        }
        NodeKind::Sin | NodeKind::Cos | NodeKind::Tanh | NodeKind::Exp | NodeKind::Log
        | NodeKind::Sqrt => {
            let a = walk(&node.children[0], x, rows, tr, cursor);
            unary(&node.kind, a, want)
        }
        NodeKind::Ceil | NodeKind::Floor => {
            let a = walk(&node.children[0], x, rows, tr, cursor);
            let f = if node.kind == NodeKind::Ceil { f64::ceil } else { f64::floor };
            Evaluation {
                values: a.values.into_iter().map(f).collect(),
                grads: Vec::new(),
            }
        }
        NodeKind::Add
        | NodeKind::Sub
        | NodeKind::Mul
        | NodeKind::Div
        | NodeKind::Pow
        | NodeKind::Min
        | NodeKind::Max => {
            let a = walk(&node.children[0], x, rows, tr, cursor);
            let b = walk(&node.children[1], x, rows, tr, cursor);
            binary(&node.kind, a, b)
        }
        NodeKind::SplitGreedy {
            feature,
            threshold,
            pass_through,
        } => {
            take(cursor);
            let col = x.column(*feature);
            let go_true: Vec<bool> = rows
                .iter()
                .map(|&r| *pass_through || col[r] > *threshold)
                .collect();
            route(&node.children[0], &node.children[1], x, rows, &go_true, tr, cursor)
        }
        NodeKind::SplitFlexible {
            threshold,
            pass_through,
        } => {
            take(cursor);
            let cond = walk(&node.children[0], x, rows, None, cursor);
            let go_true: Vec<bool> = cond
                .values
                .iter()
                .map(|&c| *pass_through || c > *threshold)
                .collect();
            route(&node.children[1], &node.children[2], x, rows, &go_true, tr, cursor)
        }
        NodeKind::Logistic { offset } => {
            let i = take(cursor);
            let mut a = walk(&node.children[0], x, rows, tr, cursor);
            let p: Vec<f64> = a.values.iter().map(|z| sigmoid(z + offset)).collect();
            if want {
                let dp: Vec<f64> = p.iter().map(|q| q * (1.0 - q)).collect();
                for (_, g) in &mut a.grads {
                    g.iter_mut().zip(&dp).for_each(|(g, d)| *g *= d);
                }
                if flagged(tr, i) {
                    a.grads.push((i, dp));
                }
            }
            Evaluation {
                values: p,
                grads: a.grads,
            }
        }
    };

    if let Some(wi) = weight_idx {
        let w = node.weight;
        let raw = flagged(tr, wi).then(|| ev.values.clone());
        ev.values.iter_mut().for_each(|v| *v *= w);
        for (_, g) in &mut ev.grads {
            g.iter_mut().for_each(|v| *v *= w);
        }
        if let Some(raw) = raw {
            ev.grads.push((wi, raw));
        }
    }
    ev
}

/// Probabilities are kept strictly inside (0, 1).
const PROB_MARGIN: f64 = 1e-15;

pub(crate) fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(PROB_MARGIN, 1.0 - PROB_MARGIN)
}

fn unary(kind: &NodeKind, a: Evaluation, want: bool) -> Evaluation {
    let values: Vec<f64> = a
        .values
        .iter()
        .map(|&v| match kind {
            NodeKind::Sin => v.sin(),
            NodeKind::Cos => v.cos(),
            NodeKind::Tanh => v.tanh(),
            NodeKind::Exp => v.exp(),
            NodeKind::Log => {
                if v > 0.0 {
                    v.ln()
                } else {
                    f64::NAN
                }
            }
            NodeKind::Sqrt => {
                if v >= 0.0 {
                    v.sqrt()
                } else {
                    f64::NAN
                }
            }
            _ => unreachable!("not a unary op"),
        })
        .collect();
    let mut grads = a.grads;
    if want && !grads.is_empty() {
        let d: Vec<f64> = a
            .values
            .iter()
            .zip(&values)
            .map(|(&v, &out)| match kind {
                NodeKind::Sin => v.cos(),
                NodeKind::Cos => -v.sin(),
                NodeKind::Tanh => 1.0 - out * out,
                NodeKind::Exp => out,
                NodeKind::Log => 1.0 / v,
                NodeKind::Sqrt => 0.5 / out,
                _ => unreachable!(),
            })
            .collect();
        for (_, g) in &mut grads {
            g.iter_mut().zip(&d).for_each(|(g, d)| *g *= d);
        }
    }
    Evaluation { values, grads }
}

fn binary(kind: &NodeKind, a: Evaluation, b: Evaluation) -> Evaluation {
    let values: Vec<f64> = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(&p, &q)| match kind {
            NodeKind::Add => p + q,
            NodeKind::Sub => p - q,
            NodeKind::Mul => p * q,
            NodeKind::Div => {
                if q.abs() < DIV_EPS {
                    f64::NAN
                } else {
                    p / q
                }
            }
            NodeKind::Pow => p.powf(q),
            NodeKind::Min => {
                if p <= q {
                    p
                } else {
                    q
                }
            }
            NodeKind::Max => {
                if p >= q {
                    p
                } else {
                    q
                }
            }
            _ => unreachable!("not a binary op"),
        })
        .collect();

    let mut grads = Vec::with_capacity(a.grads.len() + b.grads.len());
    if !a.grads.is_empty() {
        let da: Vec<f64> = (0..values.len())
            .map(|i| {
                let (p, q, v) = (a.values[i], b.values[i], values[i]);
                match kind {
                    NodeKind::Add | NodeKind::Sub => 1.0,
                    NodeKind::Mul => q,
                    NodeKind::Div => 1.0 / q,
                    NodeKind::Pow => {
                        if p == 0.0 {
                            q * p.powf(q - 1.0)
                        } else {
                            q * v / p
                        }
                    }
                    NodeKind::Min => f64::from(u8::from(p <= q)),
                    NodeKind::Max => f64::from(u8::from(p >= q)),
                    _ => unreachable!(),
                }
            })
            .collect();
        for (i, mut g) in a.grads {
            g.iter_mut().zip(&da).for_each(|(g, d)| *g *= d);
            grads.push((i, g));
        }
    }
    if !b.grads.is_empty() {
        let db: Vec<f64> = (0..values.len())
            .map(|i| {
                let (p, q, v) = (a.values[i], b.values[i], values[i]);
                match kind {
                    NodeKind::Add => 1.0,
                    NodeKind::Sub => -1.0,
                    NodeKind::Mul => p,
                    NodeKind::Div => -p / (q * q),
                    NodeKind::Pow => v * p.ln(),
                    NodeKind::Min => f64::from(u8::from(p > q)),
                    NodeKind::Max => f64::from(u8::from(p < q)),
                    _ => unreachable!(),
                }
            })
            .collect();
        for (i, mut g) in b.grads {
            g.iter_mut().zip(&db).for_each(|(g, d)| *g *= d);
            grads.push((i, g));
        }
    }
    Evaluation { values, grads }
}

/// Evaluates each branch on its routed rows and scatters results back.
fn route(
    on_true: &Node,
    on_false: &Node,
    x: &FeatureMatrix,
    rows: &[usize],
    go_true: &[bool],
    tr: Option<&[bool]>,
    cursor: &mut usize,
) -> Evaluation {
    let n = rows.len();
    let mut values = vec![0.0; n];
    let mut grads = Vec::new();
    for (branch, side) in [(on_true, true), (on_false, false)] {
        let positions: Vec<usize> = (0..n).filter(|&k| go_true[k] == side).collect();
        if positions.is_empty() {
            *cursor += branch.param_count();
            continue;
        }
        let sub_rows: Vec<usize> = positions.iter().map(|&k| rows[k]).collect();
        let ev = walk(branch, x, &sub_rows, tr, cursor);
        for (&k, v) in positions.iter().zip(ev.values) {
            values[k] = v;
        }
        for (i, g) in ev.grads {
            let mut full = vec![0.0; n];
            for (&k, v) in positions.iter().zip(g) {
                full[k] = v;
            }
            grads.push((i, full));
        }
    }
    Evaluation { values, grads }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{Symbol, NodeKind};

    fn matrix(cols: Vec<Vec<f64>>) -> FeatureMatrix {
        FeatureMatrix::from_columns(cols).unwrap()
    }

    fn all_rows(x: &FeatureMatrix) -> Vec<usize> {
        (0..x.n_rows()).collect()
    }

    #[test]
    fn weighted_feature() {
        let x = matrix(vec![vec![1.0, 3.0]]);
        let n = Node::feature(0).weighted(2.0);
        assert_eq!(eval_node(&n, &x, &all_rows(&x), None).values, vec![2.0, 6.0]);
    }

    #[test]
    fn greedy_split_routes_on_strictly_greater() {
        let x = matrix(vec![vec![1.0, 2.0, 3.0, 4.0]]);
        let n = Node::new(
            NodeKind::SplitGreedy {
                feature: 0,
                threshold: 2.5,
                pass_through: false,
            },
            vec![Node::constant(1.0), Node::constant(0.0)],
        );
        assert_eq!(
            eval_node(&n, &x, &all_rows(&x), None).values,
            vec![0.0, 0.0, 1.0, 1.0]
        );
        let at_edge = matrix(vec![vec![2.5]]);
        assert_eq!(eval_node(&n, &at_edge, &[0], None).values, vec![0.0]);
    }

    #[test]
    fn logistic_of_zero_is_half() {
        let x = matrix(vec![vec![5.0, -3.0, 0.0]]);
        let n = Node::new(NodeKind::Logistic { offset: 0.0 }, vec![Node::constant(0.0)]);
        assert_eq!(eval_node(&n, &x, &all_rows(&x), None).values, vec![0.5; 3]);
    }

    #[test]
    fn flexible_split_masks_branches() {
        let x = matrix(vec![vec![-1.0, 2.0, -3.0, 4.0], vec![10.0, 20.0, 30.0, 40.0]]);
        let n = Node::new(
            NodeKind::SplitFlexible {
                threshold: 0.0,
                pass_through: false,
            },
            vec![Node::feature(0), Node::feature(1), Node::constant(-1.0)],
        );
        assert_eq!(
            eval_node(&n, &x, &all_rows(&x), None).values,
            vec![-1.0, 20.0, -1.0, 40.0]
        );
    }

    #[test]
    fn protected_operations_yield_non_finite() {
        let x = matrix(vec![vec![-1.0, 0.0]]);
        let log = Node::new(NodeKind::Log, vec![Node::feature(0)]);
        assert!(eval_node(&log, &x, &[0, 1], None).values.iter().all(|v| !v.is_finite()));
        let div = Node::new(NodeKind::Div, vec![Node::constant(1.0), Node::constant(0.0)]);
        assert!(eval_node(&div, &x, &[0], None).values[0].is_nan());
        let sqrt = Node::new(NodeKind::Sqrt, vec![Node::feature(0)]);
        assert!(eval_node(&sqrt, &x, &[0], None).values[0].is_nan());
    }

    #[test]
    fn empty_branch_keeps_param_cursor_aligned() {
        // every row goes right; the left branch is skipped but its constant
        // still occupies a slot before the right branch's constant
        let x = matrix(vec![vec![0.0, 0.0]]);
        let n = Node::new(
            NodeKind::from_symbol(Symbol::SplitGreedy),
            vec![Node::constant(5.0), Node::constant(7.0)],
        );
        let tr = [false, true, true];
        let ev = eval_node(&n, &x, &[0, 1], Some(&tr));
        assert_eq!(ev.values, vec![7.0, 7.0]);
        assert_eq!(ev.grads.len(), 1);
        assert_eq!(ev.grads[0].0, 2);
    }
}
