//! Binary regression trees grown by maximal-LogWorth split search.
//!
//! Each candidate split is scored with a one-way F test of the two-group
//! mean split, F(1, n-2), Bonferroni-multiplied by the variable's
//! candidate-cut count; LogWorth is -log10 of that adjusted p-value.
//! Splitting stops when no candidate's LogWorth exceeds the threshold.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::statcore::{self, StatError};

/// Cap on LogWorth when the adjusted p-value underflows (for example on
/// perfect separation), keeping reports finite.
pub const LOGWORTH_CAP: f64 = 300.0;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("unknown predictor `{0}`")]
    UnknownPredictor(String),
    #[error("record is missing split variable `{0}`")]
    MissingVariable(String),
    #[error("degenerate split: one side is empty")]
    DegenerateSplit,
    #[error("column `{name}` has {got} values, expected {expected}")]
    ColumnLength {
        name: String,
        got: usize,
        expected: usize,
    },
    #[error("no rows to fit")]
    Empty,
    #[error(transparent)]
    Stat(#[from] StatError),
}

/// Named predictor columns of equal length.
#[derive(Debug, Clone)]
pub struct Frame {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    n_rows: usize,
}

impl Frame {
    pub fn new(columns: Vec<(String, Vec<f64>)>) -> Result<Frame, TreeError> {
        let n_rows = columns.first().map_or(0, |(_, c)| c.len());
        for (name, col) in &columns {
            if col.len() != n_rows {
                return Err(TreeError::ColumnLength {
                    name: name.clone(),
                    got: col.len(),
                    expected: n_rows,
                });
            }
        }
        let (names, columns) = columns.into_iter().unzip();
        Ok(Frame {
            names,
            columns,
            n_rows,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }
}

/// Growth controls: minimum LogWorth to accept a split, minimum rows per
/// leaf, and maximum depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub logworth_min: f64,
    pub min_leaf: usize,
    pub max_depth: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        // LogWorth 3 is a split p-value of 0.001.
        TreeConfig {
            logworth_min: 3.0,
            min_leaf: 5,
            max_depth: 6,
        }
    }
}

/// A scored split: rule is "go left iff value < cut".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCandidate {
    pub variable: String,
    pub cut: f64,
    pub n_left: usize,
    pub n_right: usize,
    pub ss_parent: f64,
    pub ss_children: f64,
    pub f_stat: f64,
    pub p_raw: f64,
    pub m_cuts: usize,
    pub p_adj: f64,
    pub logworth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        n: usize,
        mean: f64,
    },
    Internal {
        n: usize,
        mean: f64,
        split: SplitCandidate,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn n(&self) -> usize {
        match self {
            TreeNode::Leaf { n, .. } | TreeNode::Internal { n, .. } => *n,
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            TreeNode::Leaf { mean, .. } | TreeNode::Internal { mean, .. } => *mean,
        }
    }

    fn count_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.count_leaves() + right.count_leaves(),
        }
    }
}

/// A grown tree with its training R-squared and leaf count.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeFit {
    pub root: TreeNode,
    pub r2: f64,
    pub n_leaves: usize,
}

/// Midpoints between consecutive distinct sorted values; empty when all
/// values are equal.
pub fn candidate_cuts(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    sorted.dedup();
    sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

fn sum_of_squares(rows: &[usize], y: &[f64]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let (lo, hi) = rows
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            (lo.min(y[i]), hi.max(y[i]))
        });
    if lo == hi {
        // Identical values: exactly zero, no float residue from the mean.
        return 0.0;
    }
    let mean = rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64;
    rows.iter().map(|&i| (y[i] - mean) * (y[i] - mean)).sum()
}

fn logworth_of(p_adj: f64) -> f64 {
    if p_adj <= 0.0 {
        LOGWORTH_CAP
    } else {
        (-p_adj.log10()).min(LOGWORTH_CAP)
    }
}

fn score_split(
    n: usize,
    ss_parent: f64,
    ss_children: f64,
    m_cuts: usize,
) -> Result<(f64, f64, f64, f64), StatError> {
    // Returns (f_stat, p_raw, p_adj, logworth).
    if ss_parent <= 0.0 || ss_parent - ss_children <= 0.0 {
        return Ok((0.0, 1.0, 1.0, 0.0));
    }
    // Perfect separation, or n = 2 where both sides are singletons.
    if ss_children <= 1e-13 * ss_parent || n < 3 {
        return Ok((f64::INFINITY, 0.0, 0.0, LOGWORTH_CAP));
    }
    let df2 = n - 2;
    let f_stat = (ss_parent - ss_children) / (ss_children / df2 as f64);
    let p_raw = statcore::f_upper_p(f_stat, 1, df2)?;
    let p_adj = (p_raw * m_cuts as f64).min(1.0);
    Ok((f_stat, p_raw, p_adj, logworth_of(p_adj)))
}

/// Score one (variable, cut) pair on a row subset. `response` is indexed
/// by the frame's row positions; `rows` selects the subset.
pub fn evaluate_split(
    frame: &Frame,
    rows: &[usize],
    response: &[f64],
    variable: &str,
    cut: f64,
) -> Result<SplitCandidate, TreeError> {
    let col = frame
        .column(variable)
        .ok_or_else(|| TreeError::UnknownPredictor(variable.to_string()))?;
    let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| col[i] < cut);
    if left.is_empty() || right.is_empty() {
        return Err(TreeError::DegenerateSplit);
    }
    let ss_parent = sum_of_squares(rows, response);
    let ss_children = sum_of_squares(&left, response) + sum_of_squares(&right, response);
    let values: Vec<f64> = rows.iter().map(|&i| col[i]).collect();
    let m_cuts = candidate_cuts(&values).len();
    let (f_stat, p_raw, p_adj, logworth) = score_split(rows.len(), ss_parent, ss_children, m_cuts)?;
    Ok(SplitCandidate {
        variable: variable.to_string(),
        cut,
        n_left: left.len(),
        n_right: right.len(),
        ss_parent,
        ss_children,
        f_stat,
        p_raw,
        m_cuts,
        p_adj,
        logworth,
    })
}

/// Champion cut on one variable via a sorted prefix-sum scan: the minimal
/// ss_children (maximal F) cut, ascending scan keeping the first, so equal
/// scores resolve to the smaller cut. When the winner's LogWorth saturates
/// at the cap, rescan for the smallest cut that also reaches the cap,
/// matching what an exhaustive LogWorth argmax would return. Returns
/// (cut, m_cuts); the caller rescores the champion with the direct
/// two-group computation so that candidates from different variables that
/// induce the same row partition score bit-identically.
fn best_for_variable(
    values: &[(f64, f64)], // (x, y) sorted by x
    ss_parent: f64,
    min_leaf: usize,
) -> Result<Option<(f64, usize)>, StatError> {
    let n = values.len();
    let mut cuts: Vec<(f64, usize)> = Vec::new(); // (cut, n_left)
    for i in 1..n {
        if values[i].0 > values[i - 1].0 {
            cuts.push((0.5 * (values[i - 1].0 + values[i].0), i));
        }
    }
    let m_cuts = cuts.len();
    if m_cuts == 0 {
        return Ok(None);
    }

    let mut prefix = Vec::with_capacity(n);
    let mut prefix2 = Vec::with_capacity(n);
    let (mut s, mut s2) = (0.0, 0.0);
    for &(_, y) in values {
        s += y;
        s2 += y * y;
        prefix.push(s);
        prefix2.push(s2);
    }
    let (total, total2) = (s, s2);

    let ss_at = |n_left: usize| -> f64 {
        let (s_l, s2_l) = (prefix[n_left - 1], prefix2[n_left - 1]);
        let (s_r, s2_r) = (total - s_l, total2 - s2_l);
        let ss_l = s2_l - s_l * s_l / n_left as f64;
        let ss_r = s2_r - s_r * s_r / (n - n_left) as f64;
        ss_l.max(0.0) + ss_r.max(0.0)
    };

    let mut best: Option<(f64, f64)> = None; // (cut, ss_children)
    for &(cut, n_left) in &cuts {
        if n_left < min_leaf || n - n_left < min_leaf {
            continue;
        }
        let ssc = ss_at(n_left);
        if best.as_ref().is_none_or(|&(_, b)| ssc < b) {
            best = Some((cut, ssc));
        }
    }
    let Some((mut cut, ssc)) = best else {
        return Ok(None);
    };

    if score_split(n, ss_parent, ssc, m_cuts)?.3 >= LOGWORTH_CAP {
        for &(c, nl) in &cuts {
            if nl < min_leaf || n - nl < min_leaf {
                continue;
            }
            if score_split(n, ss_parent, ss_at(nl), m_cuts)?.3 >= LOGWORTH_CAP {
                cut = c;
                break;
            }
        }
    }
    Ok(Some((cut, m_cuts)))
}

/// Search every (variable, cut) pair honoring `min_leaf` and return the
/// maximal-LogWorth candidate, or `None` when no candidate's LogWorth
/// exceeds `config.logworth_min`. Ties keep the earlier predictor in list
/// order, then the smaller cut.
pub fn best_split(
    frame: &Frame,
    rows: &[usize],
    response: &[f64],
    predictors: &[String],
    config: &TreeConfig,
) -> Result<Option<SplitCandidate>, TreeError> {
    let n = rows.len();
    if n < 2 * config.min_leaf {
        return Ok(None);
    }
    let ss_parent = sum_of_squares(rows, response);

    let mut best: Option<SplitCandidate> = None;
    for name in predictors {
        let col = frame
            .column(name)
            .ok_or_else(|| TreeError::UnknownPredictor(name.clone()))?;
        let mut pairs: Vec<(f64, f64)> = rows.iter().map(|&i| (col[i], response[i])).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite values"));
        let Some((cut, m_cuts)) = best_for_variable(&pairs, ss_parent, config.min_leaf)? else {
            continue;
        };
        // Rescore directly over the induced partition (original row order),
        // as evaluate_split does.
        let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| col[i] < cut);
        let ss_children = sum_of_squares(&left, response) + sum_of_squares(&right, response);
        let (f_stat, p_raw, p_adj, logworth) = score_split(n, ss_parent, ss_children, m_cuts)?;
        if best.as_ref().is_none_or(|b| logworth > b.logworth) {
            best = Some(SplitCandidate {
                variable: name.clone(),
                cut,
                n_left: left.len(),
                n_right: right.len(),
                ss_parent,
                ss_children,
                f_stat,
                p_raw,
                m_cuts,
                p_adj,
                logworth,
            });
        }
    }
    Ok(best.filter(|b| b.logworth > config.logworth_min))
}

/// Grow a tree depth-first. A node becomes a leaf when `best_split`
/// returns no candidate, the depth limit is reached, or the node is too
/// small to split; the fitted value at a leaf is its response mean.
pub fn grow(
    frame: &Frame,
    response: &[f64],
    predictors: &[String],
    config: &TreeConfig,
) -> Result<TreeFit, TreeError> {
    if frame.n_rows() == 0 || response.is_empty() {
        return Err(TreeError::Empty);
    }
    debug_assert_eq!(frame.n_rows(), response.len());
    let rows: Vec<usize> = (0..frame.n_rows()).collect();
    let root = grow_node(frame, &rows, response, predictors, config, 0)?;

    let ss_total = sum_of_squares(&rows, response);
    let sse = leaf_sse(&root, frame, &rows, response);
    let r2 = if ss_total > 0.0 {
        (1.0 - sse / ss_total).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let n_leaves = root.count_leaves();
    Ok(TreeFit { root, r2, n_leaves })
}

fn grow_node(
    frame: &Frame,
    rows: &[usize],
    response: &[f64],
    predictors: &[String],
    config: &TreeConfig,
    depth: usize,
) -> Result<TreeNode, TreeError> {
    let n = rows.len();
    let mean = rows.iter().map(|&i| response[i]).sum::<f64>() / n as f64;
    if depth >= config.max_depth || n < 2 * config.min_leaf {
        return Ok(TreeNode::Leaf { n, mean });
    }
    let Some(split) = best_split(frame, rows, response, predictors, config)? else {
        return Ok(TreeNode::Leaf { n, mean });
    };
    let col = frame
        .column(&split.variable)
        .expect("split variable exists");
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.iter().partition(|&&i| col[i] < split.cut);
    let left = grow_node(frame, &left_rows, response, predictors, config, depth + 1)?;
    let right = grow_node(frame, &right_rows, response, predictors, config, depth + 1)?;
    Ok(TreeNode::Internal {
        n,
        mean,
        split,
        left: Box::new(left),
        right: Box::new(right),
    })
}

fn leaf_sse(node: &TreeNode, frame: &Frame, rows: &[usize], response: &[f64]) -> f64 {
    match node {
        TreeNode::Leaf { .. } => sum_of_squares(rows, response),
        TreeNode::Internal {
            split, left, right, ..
        } => {
            let col = frame
                .column(&split.variable)
                .expect("split variable exists");
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| col[i] < split.cut);
            leaf_sse(left, frame, &l, response) + leaf_sse(right, frame, &r, response)
        }
    }
}

impl TreeFit {
    /// Route a record through the split rules and return its leaf mean.
    /// `lookup` resolves a variable name to the record's value.
    pub fn predict<F>(&self, lookup: F) -> Result<f64, TreeError>
    where
        F: Fn(&str) -> Option<f64>,
    {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { mean, .. } => return Ok(*mean),
                TreeNode::Internal {
                    split, left, right, ..
                } => {
                    let value = lookup(&split.variable)
                        .ok_or_else(|| TreeError::MissingVariable(split.variable.clone()))?;
                    node = if value < split.cut { left } else { right };
                }
            }
        }
    }

    /// Prediction for row `i` of a frame.
    pub fn predict_row(&self, frame: &Frame, i: usize) -> Result<f64, TreeError> {
        self.predict(|name| frame.column(name).map(|c| c[i]))
    }
}

/// JSON shape of a tree: nested nodes carrying n, mean, and for internal
/// nodes the split variable, cut, and LogWorth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNodeJson {
    pub n: usize,
    pub mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variable: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cut: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logworth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<Box<TreeNodeJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<Box<TreeNodeJson>>,
}

impl From<&TreeNode> for TreeNodeJson {
    fn from(node: &TreeNode) -> Self {
        match node {
            TreeNode::Leaf { n, mean } => TreeNodeJson {
                n: *n,
                mean: *mean,
                variable: None,
                cut: None,
                logworth: None,
                left: None,
                right: None,
            },
            TreeNode::Internal {
                n,
                mean,
                split,
                left,
                right,
            } => TreeNodeJson {
                n: *n,
                mean: *mean,
                variable: Some(split.variable.clone()),
                cut: Some(split.cut),
                logworth: Some(split.logworth),
                left: Some(Box::new(TreeNodeJson::from(left.as_ref()))),
                right: Some(Box::new(TreeNodeJson::from(right.as_ref()))),
            },
        }
    }
}

/// DOT rendering: one node per tree node, edges labeled `< cut` / `>= cut`.
pub fn to_dot(fit: &TreeFit, graph_name: &str) -> String {
    let mut out = format!("digraph {graph_name} {{\n  node [shape=box];\n");
    let mut next_id = 0usize;
    dot_node(&fit.root, &mut next_id, &mut out);
    out.push_str("}\n");
    out
}

fn dot_node(node: &TreeNode, next_id: &mut usize, out: &mut String) -> usize {
    let id = *next_id;
    *next_id += 1;
    match node {
        TreeNode::Leaf { n, mean } => {
            out.push_str(&format!("  n{id} [label=\"n={n}\\nmean={mean:.4}\"];\n"));
        }
        TreeNode::Internal {
            n,
            mean,
            split,
            left,
            right,
        } => {
            out.push_str(&format!(
                "  n{id} [label=\"{}\\nn={n} mean={mean:.4}\\nLogWorth={:.2}\"];\n",
                split.variable, split.logworth
            ));
            let left_id = dot_node(left, next_id, out);
            let right_id = dot_node(right, next_id, out);
            out.push_str(&format!(
                "  n{id} -> n{left_id} [label=\"< {:.4}\"];\n",
                split.cut
            ));
            out.push_str(&format!(
                "  n{id} -> n{right_id} [label=\"\u{2265} {:.4}\"];\n",
                split.cut
            ));
        }
    }
    id
}
