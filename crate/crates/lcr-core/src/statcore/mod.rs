//! Least-squares fitting, t/F distribution functions, Benjamini-Hochberg
//! FDR adjustment, and forward stepwise variable selection.

mod linalg;
mod special;

pub use special::{betainc, f_cdf, f_upper_p, t_cdf, t_quantile, t_two_sided_p};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, Variable};

/// Residual sums of squares at or below this fraction of the total sum of
/// squares are treated as an exact fit.
const PERFECT_FIT_RTOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum StatError {
    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("degenerate predictor: x is constant")]
    DegeneratePredictor,
    #[error("singular design matrix")]
    SingularDesign,
    #[error("length mismatch: x has {x_len} entries, y has {y_len}")]
    LengthMismatch { x_len: usize, y_len: usize },
    #[error("{0}")]
    Domain(String),
    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
    },
}

/// Simple linear regression fit: intercept and slope with standard errors,
/// t-statistics, and two-sided p-values against t(n-2).
///
/// On a perfect fit (residual sum of squares 0) the standard errors are 0
/// and the t/p entries are `None`. When the response itself is constant,
/// r2 is 0 by convention (there is nothing to explain).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlrFit {
    pub n: usize,
    pub df: usize,
    pub intercept: f64,
    pub se_intercept: f64,
    pub t_intercept: Option<f64>,
    pub p_intercept: Option<f64>,
    pub slope: f64,
    pub se_slope: f64,
    pub t_slope: Option<f64>,
    pub p_slope: Option<f64>,
    pub r2: f64,
    pub perfect_fit: bool,
}

/// Multiple least-squares fit over a named design (intercept column
/// included by the caller).
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    pub t: Vec<f64>,
    pub p: Vec<f64>,
    pub r2: f64,
    pub df_residual: usize,
}

/// Raw p-values with their Benjamini-Hochberg adjusted companions, in the
/// input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustedPValues {
    pub raw: Vec<f64>,
    pub adjusted: Vec<f64>,
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// Ordinary least squares of y on a single predictor.
///
/// slope = Sxy/Sxx, intercept = mean(y) - slope * mean(x); standard errors
/// from the residual variance RSS/(n-2); p-values two-sided against t(n-2).
///
/// ```
/// let fit = lcr_core::statcore::slr_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
/// assert_eq!(fit.slope, 2.0);
/// assert!(fit.perfect_fit);
/// ```
pub fn slr_fit(x: &[f64], y: &[f64]) -> Result<SlrFit, StatError> {
    if x.len() != y.len() {
        return Err(StatError::LengthMismatch {
            x_len: x.len(),
            y_len: y.len(),
        });
    }
    let n = x.len();
    if n < 3 {
        return Err(StatError::InsufficientData { needed: 3, got: n });
    }
    let (x_min, x_max) = min_max(x);
    if x_min == x_max {
        return Err(StatError::DegeneratePredictor);
    }
    let df = n - 2;
    let nf = n as f64;
    let x_mean = x.iter().sum::<f64>() / nf;
    let y_mean = y.iter().sum::<f64>() / nf;

    let (y_min, y_max) = min_max(y);
    if y_min == y_max {
        // Constant response: the flat line fits exactly.
        return Ok(SlrFit {
            n,
            df,
            intercept: y_min,
            se_intercept: 0.0,
            t_intercept: None,
            p_intercept: None,
            slope: 0.0,
            se_slope: 0.0,
            t_slope: None,
            p_slope: None,
            r2: 0.0,
            perfect_fit: true,
        });
    }

    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut tss = 0.0;
    for i in 0..n {
        let dx = x[i] - x_mean;
        let dy = y[i] - y_mean;
        sxx += dx * dx;
        sxy += dx * dy;
        tss += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let r = yi - intercept - slope * xi;
            r * r
        })
        .sum();

    let r2 = (1.0 - rss / tss).clamp(0.0, 1.0);
    if rss <= PERFECT_FIT_RTOL * tss {
        return Ok(SlrFit {
            n,
            df,
            intercept,
            se_intercept: 0.0,
            t_intercept: None,
            p_intercept: None,
            slope,
            se_slope: 0.0,
            t_slope: None,
            p_slope: None,
            r2: 1.0,
            perfect_fit: true,
        });
    }

    let s2 = rss / df as f64;
    let se_slope = (s2 / sxx).sqrt();
    let se_intercept = (s2 * (1.0 / nf + x_mean * x_mean / sxx)).sqrt();
    let t_slope = slope / se_slope;
    let t_intercept = intercept / se_intercept;
    Ok(SlrFit {
        n,
        df,
        intercept,
        se_intercept,
        t_intercept: Some(t_intercept),
        p_intercept: Some(t_two_sided_p(t_intercept, df)?),
        slope,
        se_slope,
        t_slope: Some(t_slope),
        p_slope: Some(t_two_sided_p(t_slope, df)?),
        r2,
        perfect_fit: false,
    })
}

/// Least squares over named design columns (pass the intercept column of
/// ones explicitly). Coefficient SEs come from the diagonal of
/// (X^T X)^{-1} s^2; p-values are two-sided against t(n - p).
pub fn ols_fit(columns: &[(&str, &[f64])], y: &[f64]) -> Result<OlsFit, StatError> {
    if columns.is_empty() {
        return Err(StatError::Domain(
            "ols_fit requires at least one column".into(),
        ));
    }
    let n = y.len();
    let p = columns.len();
    for (_, col) in columns {
        if col.len() != n {
            return Err(StatError::LengthMismatch {
                x_len: col.len(),
                y_len: n,
            });
        }
    }
    if n < p + 1 {
        return Err(StatError::InsufficientData {
            needed: p + 1,
            got: n,
        });
    }

    let cols: Vec<&[f64]> = columns.iter().map(|(_, c)| *c).collect();
    let ls = linalg::qr_least_squares(&cols, y)?;

    let df_residual = n - p;
    let rss: f64 = (0..n)
        .map(|i| {
            let fitted: f64 = (0..p).map(|j| ls.coef[j] * cols[j][i]).sum();
            let r = y[i] - fitted;
            r * r
        })
        .sum();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|&yi| (yi - y_mean) * (yi - y_mean)).sum();
    let r2 = if tss > 0.0 {
        (1.0 - rss / tss).clamp(0.0, 1.0)
    } else {
        0.0
    };

    let s2 = if rss <= PERFECT_FIT_RTOL * tss {
        0.0
    } else {
        rss / df_residual as f64
    };
    let mut se = Vec::with_capacity(p);
    let mut t = Vec::with_capacity(p);
    let mut pv = Vec::with_capacity(p);
    for j in 0..p {
        let se_j = (s2 * ls.xtx_inv_diag[j]).sqrt();
        se.push(se_j);
        if se_j > 0.0 {
            let t_j = ls.coef[j] / se_j;
            t.push(t_j);
            pv.push(t_two_sided_p(t_j, df_residual)?);
        } else if ls.coef[j] == 0.0 {
            t.push(0.0);
            pv.push(1.0);
        } else {
            // Exact fit with a nonzero coefficient.
            t.push(f64::INFINITY.copysign(ls.coef[j]));
            pv.push(0.0);
        }
    }

    Ok(OlsFit {
        names: columns.iter().map(|(name, _)| name.to_string()).collect(),
        coef: ls.coef,
        se,
        t,
        p: pv,
        r2,
        df_residual,
    })
}

/// Benjamini-Hochberg step-up adjustment.
///
/// Sort ascending, q(i) = min(1, p(i) m / i), enforce monotonicity from the
/// largest rank downward, and return adjusted values in the input order.
///
/// ```
/// let adj = lcr_core::statcore::bh_adjust(&[0.125, 0.5, 0.25]).unwrap();
/// assert_eq!(adj.adjusted, vec![0.375, 0.5, 0.375]);
/// ```
pub fn bh_adjust(p: &[f64]) -> Result<AdjustedPValues, StatError> {
    for (i, &pi) in p.iter().enumerate() {
        if !(0.0..=1.0).contains(&pi) {
            return Err(StatError::Domain(format!(
                "bh_adjust: p[{i}] = {pi} outside [0, 1]"
            )));
        }
    }
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap().then(a.cmp(&b)));

    let mut adjusted = vec![0.0; m];
    let mut running_min = 1.0f64;
    for rank in (0..m).rev() {
        let idx = order[rank];
        // m/rank >= 1, so q >= p holds mathematically; the max guards the
        // one-ulp rounding dip when m/rank is 1.
        let q = (p[idx] * m as f64 / (rank + 1) as f64).min(1.0).max(p[idx]);
        running_min = running_min.min(q);
        adjusted[idx] = running_min;
    }
    Ok(AdjustedPValues {
        raw: p.to_vec(),
        adjusted,
    })
}

/// Greedy forward stepwise selection.
///
/// At each step, the candidate whose partial t-test p-value (in the model
/// with the already-selected variables) is smallest and below `alpha_enter`
/// is added; ties keep the earlier candidate in list order. Candidates that
/// make the design singular or too large for the sample are skipped with a
/// warning.
pub fn stepwise_forward(
    d: &Dataset,
    response: Variable,
    candidates: &[Variable],
    alpha_enter: f64,
) -> Result<Vec<Variable>, StatError> {
    if candidates.is_empty() {
        return Err(StatError::Domain("stepwise_forward: no candidates".into()));
    }
    if candidates.contains(&response) {
        return Err(StatError::Domain(format!(
            "stepwise_forward: response {} is also a candidate",
            response.name()
        )));
    }
    if !(0.0..=1.0).contains(&alpha_enter) {
        return Err(StatError::Domain(format!(
            "stepwise_forward: alpha_enter {alpha_enter} outside [0, 1]"
        )));
    }

    let n = d.records.len();
    let y = d.column(response);
    let ones = vec![1.0; n];
    let cols: Vec<(Variable, Vec<f64>)> = candidates.iter().map(|&v| (v, d.column(v))).collect();

    let mut selected: Vec<Variable> = Vec::new();
    loop {
        let mut best: Option<(Variable, f64)> = None;
        for (var, col) in &cols {
            if selected.contains(var) {
                continue;
            }
            let mut design: Vec<(&str, &[f64])> = vec![("intercept", ones.as_slice())];
            for sel in &selected {
                let (_, sel_col) = cols.iter().find(|(v, _)| v == sel).unwrap();
                design.push((sel.name(), sel_col.as_slice()));
            }
            design.push((var.name(), col.as_slice()));
            let fit = match ols_fit(&design, &y) {
                Ok(fit) => fit,
                Err(StatError::SingularDesign) | Err(StatError::InsufficientData { .. }) => {
                    log::warn!(
                        "stepwise_forward: skipping {} (singular or oversized design)",
                        var.name()
                    );
                    continue;
                }
                Err(e) => return Err(e),
            };
            let p_var = fit.p[design.len() - 1];
            if best.as_ref().is_none_or(|(_, bp)| p_var < *bp) {
                best = Some((*var, p_var));
            }
        }
        match best {
            Some((var, p_var)) if p_var < alpha_enter => selected.push(var),
            _ => break,
        }
    }
    Ok(selected)
}
