use serde::{Deserialize, Serialize};

use crate::numerics::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    /// Rows with `x[feature] < threshold` go left; everything else (including `NaN`) goes right.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        gain: f64,
    },
    Leaf {
        weight: f64,
    },
}

/// Nodes are stored parent-before-children; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
    pub max_depth: usize,
}

impl RegressionTree {
    pub fn leaf(weight: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { weight }],
            max_depth: 0,
        }
    }

    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[feature] < threshold { left } else { right },
            }
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            Node::Leaf { weight } => weight,
            Node::Split { .. } => unreachable!("leaf_index stops at a leaf"),
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Structural check: children point forward, every node reachable once.
    pub fn is_well_formed(&self) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if i >= self.nodes.len() || seen[i] {
                return false;
            }
            seen[i] = true;
            if let Node::Split { left, right, .. } = self.nodes[i] {
                if left <= i || right <= i {
                    return false;
                }
                stack.push(left);
                stack.push(right);
            }
        }
        seen.iter().all(|&s| s)
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct TreeParams {
    pub max_depth: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
}

/// `-G / (H + λ)`.
pub fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    -g / (h + lambda)
}

/// `½ [G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)] − γ`.
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64, gamma: f64) -> f64 {
    let score = |g: f64, h: f64| g * g / (h + lambda);
    0.5 * (score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr)) - gamma
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct BestSplit {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Exact greedy search over every feature and every boundary between distinct
/// sorted values. Ties keep the first candidate (lowest feature, lowest threshold).
/// Missing values sit on the right of every candidate.
pub(crate) fn find_best_split(
    x: &Matrix,
    grad: &[f64],
    hess: &[f64],
    rows: &[usize],
    p: &TreeParams,
) -> Option<BestSplit> {
    let g_total: f64 = rows.iter().map(|&r| grad[r]).sum();
    let h_total: f64 = rows.iter().map(|&r| hess[r]).sum();
    let mut best: Option<BestSplit> = None;
    let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
    for f in 0..x.cols() {
        sorted.clear();
        sorted.extend(rows.iter().map(|&r| (x.get(r, f), r)).filter(|(v, _)| !v.is_nan()));
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (mut gl, mut hl) = (0.0, 0.0);
        for w in 0..sorted.len().saturating_sub(1) {
            let (v, r) = sorted[w];
            gl += grad[r];
            hl += hess[r];
            let next = sorted[w + 1].0;
            if next <= v {
                continue;
            }
            let (gr, hr) = (g_total - gl, h_total - hl);
            if hl < p.min_child_weight || hr < p.min_child_weight {
                continue;
            }
            if hl + p.lambda <= 0.0 || hr + p.lambda <= 0.0 {
                continue;
            }
            let gain = split_gain(gl, hl, gr, hr, p.lambda, p.gamma);
            if best.map_or(true, |b| gain > b.gain) {
                let mid = v + (next - v) / 2.0;
                let threshold = if mid > v && mid <= next { mid } else { next };
                best = Some(BestSplit {
                    feature: f,
                    threshold,
                    gain,
                });
            }
        }
    }
    best.filter(|b| b.gain > 0.0)
}

pub(crate) fn grow_tree(x: &Matrix, grad: &[f64], hess: &[f64], p: &TreeParams) -> RegressionTree {
    let mut tree = RegressionTree {
        nodes: Vec::new(),
        max_depth: p.max_depth,
    };
    let rows: Vec<usize> = (0..x.rows()).collect();
    grow(&mut tree, x, grad, hess, rows, 0, p);
    tree
}

fn grow(
    tree: &mut RegressionTree,
    x: &Matrix,
    grad: &[f64],
    hess: &[f64],
    rows: Vec<usize>,
    depth: usize,
    p: &TreeParams,
) -> usize {
    let id = tree.nodes.len();
    let g: f64 = rows.iter().map(|&r| grad[r]).sum();
    let h: f64 = rows.iter().map(|&r| hess[r]).sum();
    let split = if depth < p.max_depth {
        find_best_split(x, grad, hess, &rows, p)
    } else {
        None
    };
    let Some(s) = split else {
        tree.nodes.push(Node::Leaf {
            weight: leaf_weight(g, h, p.lambda),
        });
        return id;
    };
    tree.nodes.push(Node::Leaf { weight: 0.0 });
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.into_iter().partition(|&r| x.get(r, s.feature) < s.threshold);
    let left = grow(tree, x, grad, hess, left_rows, depth + 1, p);
    let right = grow(tree, x, grad, hess, right_rows, depth + 1, p);
    tree.nodes[id] = Node::Split {
        feature: s.feature,
        threshold: s.threshold,
        left,
        right,
        gain: s.gain,
    };
    id
}
