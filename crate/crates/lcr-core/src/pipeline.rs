//! The end-to-end LCR workflow: ingest, exclude, select covariates,
//! standardize, cluster, per-cluster SLR, FDR adjustment, augmentation,
//! regression trees, and report emission.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{self, Dataset, DatasetError, SummaryStats, Variable};
use crate::rptree::{self, TreeConfig, TreeError, TreeNodeJson};
use crate::statcore::{self, SlrFit, StatError};
use crate::wardclust::{self, ClusterAssignment, ClusterError};

/// Width of the slope histogram bins, aligned so a bin edge falls on 0 and
/// the negative/positive split is exact.
pub const SLOPE_BIN_WIDTH: f64 = 0.02;

#[derive(Debug, Error)]
#[error("stage {stage}: {source}")]
pub struct PipelineError {
    pub stage: &'static str,
    #[source]
    pub source: StageError,
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Stat(#[from] StatError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Internal(String),
}

fn at<E: Into<StageError>>(stage: &'static str) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError {
        stage,
        source: e.into(),
    }
}

/// Which covariates drive the clustering: a pinned list, or forward
/// stepwise selection against the response.
#[derive(Debug, Clone, PartialEq)]
pub enum ClusterVars {
    Auto,
    Explicit(Vec<Variable>),
}

impl Serialize for ClusterVars {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            ClusterVars::Auto => serializer.serialize_str("auto"),
            ClusterVars::Explicit(vars) => vars.serialize(serializer),
        }
    }
}

impl<'de> Deserialize<'de> for ClusterVars {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            List(Vec<Variable>),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Text(s) if s == "auto" => Ok(ClusterVars::Auto),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "expected \"auto\" or a variable list, got \"{s}\""
            ))),
            Raw::List(vars) => Ok(ClusterVars::Explicit(vars)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
    Dot,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            "dot" => Ok(OutputFormat::Dot),
            other => Err(format!(
                "unknown format `{other}` (expected json, csv, or dot)"
            )),
        }
    }
}

/// Full pipeline configuration. The defaults reproduce the published
/// analysis: exclude row 128, respond with Change LE to Change PM, cluster
/// on {Change Income, Lcan_d, copd_d, black_d} standardized, k = 10.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcrConfig {
    pub input: PathBuf,
    pub exclude_row_ids: Vec<u32>,
    pub exclude_reason: String,
    pub response: Variable,
    pub exposure: Variable,
    pub cluster_vars: ClusterVars,
    pub k: usize,
    pub alpha_enter: f64,
    pub min_cluster_n_for_slr: usize,
    pub tree: TreeConfig,
    pub out_dir: PathBuf,
    pub formats: Vec<OutputFormat>,
}

impl Default for LcrConfig {
    fn default() -> Self {
        LcrConfig {
            input: PathBuf::new(),
            exclude_row_ids: vec![128],
            exclude_reason: "outlier (5600_NYOR_NY)".to_string(),
            response: Variable::ChangeLe,
            exposure: Variable::ChangePm,
            cluster_vars: ClusterVars::Explicit(vec![
                Variable::ChangeIncome,
                Variable::LcanD,
                Variable::CopdD,
                Variable::BlackD,
            ]),
            k: 10,
            alpha_enter: 0.05,
            min_cluster_n_for_slr: 3,
            tree: TreeConfig::default(),
            out_dir: PathBuf::from("./lcr_out"),
            formats: vec![OutputFormat::Json, OutputFormat::Csv, OutputFormat::Dot],
        }
    }
}

impl LcrConfig {
    pub fn new(input: impl Into<PathBuf>) -> Self {
        LcrConfig {
            input: input.into(),
            ..LcrConfig::default()
        }
    }

    fn validate(&self) -> Result<(), PipelineError> {
        let fail = |msg: String| {
            Err(PipelineError {
                stage: "config",
                source: StageError::Config(msg),
            })
        };
        if self.response == self.exposure {
            return fail(format!(
                "response and exposure are both `{}`",
                self.response.name()
            ));
        }
        if let ClusterVars::Explicit(vars) = &self.cluster_vars {
            if vars.is_empty() {
                return fail("cluster_vars is empty".to_string());
            }
            for &v in vars {
                if v == self.response || v == self.exposure {
                    return fail(format!(
                        "cluster variable `{}` is the response or exposure",
                        v.name()
                    ));
                }
            }
        }
        if self.k == 0 {
            return fail("k must be at least 1".to_string());
        }
        if !(0.0..=1.0).contains(&self.alpha_enter) {
            return fail(format!("alpha_enter {} outside [0, 1]", self.alpha_enter));
        }
        if self.min_cluster_n_for_slr < 3 {
            return fail("min_cluster_n_for_slr must be at least 3".to_string());
        }
        Ok(())
    }
}

/// One row of the per-cluster regression table. Entries are `None` when
/// the cluster was too small or its exposure constant (no fit), or, for
/// t/p, when the fit was exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRegressionRow {
    pub cluster: usize,
    pub n: usize,
    pub intercept: Option<f64>,
    pub se_intercept: Option<f64>,
    pub t_intercept: Option<f64>,
    pub p_intercept: Option<f64>,
    pub slope: Option<f64>,
    pub se_slope: Option<f64>,
    pub t_slope: Option<f64>,
    pub p_slope: Option<f64>,
    pub fdr_p_slope: Option<f64>,
}

/// A location record with its cluster index and that cluster's fitted
/// intercept and slope appended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedRecord {
    #[serde(flatten)]
    pub record: dataset::LocationRecord,
    pub cluster: usize,
    pub cluster_intercept: Option<f64>,
    pub cluster_slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Frequency-weighted histogram of per-cluster slopes: each cluster
/// contributes its location count to the bin holding its slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeHistogram {
    pub bin_width: f64,
    pub bins: Vec<HistBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeSlopeShare {
    pub count: usize,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeReport {
    pub r2: f64,
    pub n_leaves: usize,
    pub root: TreeNodeJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: LcrConfig,
    pub dataset_sha256: String,
    pub tool_version: String,
}

/// The full pipeline output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcrReport {
    pub summary: SummaryStats,
    pub global_slr: SlrFit,
    pub cluster_table: Vec<ClusterRegressionRow>,
    pub slope_histogram: SlopeHistogram,
    pub negative_slope: NegativeSlopeShare,
    pub augmented: Vec<AugmentedRecord>,
    pub intercept_tree: TreeReport,
    pub slope_tree: TreeReport,
    pub provenance: Provenance,
}

/// Pooled SLR of the response on the exposure over every record (the
/// global fit the per-cluster analysis refines).
pub fn run_global_slr(d: &Dataset, cfg: &LcrConfig) -> Result<SlrFit, PipelineError> {
    let x = d.column(cfg.exposure);
    let y = d.column(cfg.response);
    statcore::slr_fit(&x, &y).map_err(at("global-slr"))
}

/// Run the whole pipeline from the configured input file.
pub fn run_lcr(cfg: &LcrConfig) -> Result<LcrReport, PipelineError> {
    let bytes = std::fs::read(&cfg.input).map_err(|e| PipelineError {
        stage: "read-input",
        source: StageError::Io {
            path: cfg.input.clone(),
            source: e,
        },
    })?;
    let sha = hex::encode(Sha256::digest(&bytes));
    let raw = dataset::parse_csv(bytes.as_slice()).map_err(at("parse"))?;
    run_stages(cfg, raw, sha)
}

/// Run the pipeline on an in-memory dataset (same stages as [`run_lcr`],
/// with the provenance hash taken over the dataset's canonical CSV form).
pub fn run_lcr_on_dataset(cfg: &LcrConfig, raw: &Dataset) -> Result<LcrReport, PipelineError> {
    let mut bytes = Vec::new();
    dataset::write_csv(raw, &mut bytes).map_err(at("parse"))?;
    let sha = hex::encode(Sha256::digest(&bytes));
    run_stages(cfg, raw.clone(), sha)
}

fn run_stages(
    cfg: &LcrConfig,
    raw: Dataset,
    dataset_sha256: String,
) -> Result<LcrReport, PipelineError> {
    cfg.validate()?;

    let d = dataset::exclude_rows(&raw, &cfg.exclude_row_ids, &cfg.exclude_reason);
    if d.records.is_empty() {
        return Err(PipelineError {
            stage: "exclude",
            source: StageError::Config("no records remain after exclusions".into()),
        });
    }

    let cluster_vars = match &cfg.cluster_vars {
        ClusterVars::Explicit(vars) => vars.clone(),
        ClusterVars::Auto => {
            let candidates: Vec<Variable> = Variable::ALL
                .into_iter()
                .filter(|&v| v != cfg.response && v != cfg.exposure)
                .collect();
            let selected =
                statcore::stepwise_forward(&d, cfg.response, &candidates, cfg.alpha_enter)
                    .map_err(at("select-covariates"))?;
            if selected.is_empty() {
                return Err(PipelineError {
                    stage: "select-covariates",
                    source: StageError::Config(
                        "stepwise selection admitted no variables; pass --cluster-vars".into(),
                    ),
                });
            }
            selected
        }
    };

    let summary = dataset::summary_stats(&d).map_err(at("summary"))?;
    let standardized = dataset::standardize(&d, &cluster_vars).map_err(at("standardize"))?;

    let distances = wardclust::squared_euclidean(&standardized);
    let dendrogram = wardclust::ward_cluster(&distances).map_err(at("cluster"))?;
    let assignment = wardclust::cut_k(&dendrogram, cfg.k).map_err(at("cluster"))?;

    let global_slr = run_global_slr(&d, cfg)?;

    let (cluster_table, fits) = cluster_regressions(&d, cfg, &assignment)?;

    let augmented: Vec<AugmentedRecord> = d
        .records
        .iter()
        .zip(&assignment.labels)
        .map(|(rec, &label)| AugmentedRecord {
            record: rec.clone(),
            cluster: label,
            cluster_intercept: fits[label - 1].as_ref().map(|f| f.intercept),
            cluster_slope: fits[label - 1].as_ref().map(|f| f.slope),
        })
        .collect();

    let slope_histogram = histogram_of_slopes(&cluster_table);
    let sizes: Vec<usize> = cluster_table.iter().map(|r| r.n).collect();
    let (count, share) = negative_slope_share(&cluster_table, &sizes)?;

    let (intercept_tree, slope_tree) = fit_trees(cfg, &augmented)?;

    let report = LcrReport {
        summary,
        global_slr,
        cluster_table,
        slope_histogram,
        negative_slope: NegativeSlopeShare { count, share },
        augmented,
        intercept_tree,
        slope_tree,
        provenance: Provenance {
            config: cfg.clone(),
            dataset_sha256,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        },
    };
    check_report(&report)?;
    Ok(report)
}

fn cluster_regressions(
    d: &Dataset,
    cfg: &LcrConfig,
    assignment: &ClusterAssignment,
) -> Result<(Vec<ClusterRegressionRow>, Vec<Option<SlrFit>>), PipelineError> {
    let exposure = d.column(cfg.exposure);
    let response = d.column(cfg.response);

    let mut fits: Vec<Option<SlrFit>> = Vec::with_capacity(assignment.k);
    for label in 1..=assignment.k {
        let members = assignment.members(label);
        let x: Vec<f64> = members.iter().map(|&i| exposure[i]).collect();
        let y: Vec<f64> = members.iter().map(|&i| response[i]).collect();
        let constant_x = x
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if members.len() < cfg.min_cluster_n_for_slr || constant_x.0 == constant_x.1 {
            fits.push(None);
            continue;
        }
        let fit = statcore::slr_fit(&x, &y).map_err(at("cluster-slr"))?;
        fits.push(Some(fit));
    }

    // FDR over the slope p-values of the fitted clusters, in cluster order.
    let p_slopes: Vec<f64> = fits
        .iter()
        .filter_map(|f| f.as_ref().and_then(|f| f.p_slope))
        .collect();
    let adjusted = statcore::bh_adjust(&p_slopes).map_err(at("fdr"))?;
    let mut adj_iter = adjusted.adjusted.iter();

    let table = fits
        .iter()
        .enumerate()
        .map(|(idx, fit)| {
            let n = assignment.sizes[idx];
            match fit {
                None => ClusterRegressionRow {
                    cluster: idx + 1,
                    n,
                    intercept: None,
                    se_intercept: None,
                    t_intercept: None,
                    p_intercept: None,
                    slope: None,
                    se_slope: None,
                    t_slope: None,
                    p_slope: None,
                    fdr_p_slope: None,
                },
                Some(f) => ClusterRegressionRow {
                    cluster: idx + 1,
                    n,
                    intercept: Some(f.intercept),
                    se_intercept: Some(f.se_intercept),
                    t_intercept: f.t_intercept,
                    p_intercept: f.p_intercept,
                    slope: Some(f.slope),
                    se_slope: Some(f.se_slope),
                    t_slope: f.t_slope,
                    p_slope: f.p_slope,
                    fdr_p_slope: f.p_slope.map(|_| *adj_iter.next().expect("fdr aligned")),
                },
            }
        })
        .collect();
    Ok((table, fits))
}

fn histogram_of_slopes(table: &[ClusterRegressionRow]) -> SlopeHistogram {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for row in table {
        if let Some(slope) = row.slope {
            let idx = (slope / SLOPE_BIN_WIDTH).floor() as i64;
            *counts.entry(idx).or_insert(0) += row.n;
        }
    }
    let bins = match (counts.keys().next(), counts.keys().next_back()) {
        (Some(&lo_idx), Some(&hi_idx)) => (lo_idx..=hi_idx)
            .map(|idx| HistBin {
                lo: idx as f64 * SLOPE_BIN_WIDTH,
                hi: (idx + 1) as f64 * SLOPE_BIN_WIDTH,
                count: counts.get(&idx).copied().unwrap_or(0),
            })
            .collect(),
        _ => Vec::new(),
    };
    SlopeHistogram {
        bin_width: SLOPE_BIN_WIDTH,
        bins,
    }
}

/// Locations in clusters with a negative fitted slope: the count and its
/// share of all locations. `sizes` must align with the table rows.
pub fn negative_slope_share(
    table: &[ClusterRegressionRow],
    sizes: &[usize],
) -> Result<(usize, f64), PipelineError> {
    if table.len() != sizes.len() {
        return Err(PipelineError {
            stage: "histogram",
            source: StageError::Internal(format!(
                "negative_slope_share: {} table rows but {} sizes",
                table.len(),
                sizes.len()
            )),
        });
    }
    let total: usize = sizes.iter().sum();
    let count: usize = table
        .iter()
        .zip(sizes)
        .filter(|(row, _)| row.slope.is_some_and(|s| s < 0.0))
        .map(|(_, &size)| size)
        .sum();
    let share = if total > 0 {
        count as f64 / total as f64
    } else {
        0.0
    };
    Ok((count, share))
}

fn fit_trees(
    cfg: &LcrConfig,
    augmented: &[AugmentedRecord],
) -> Result<(TreeReport, TreeReport), PipelineError> {
    let predictors: Vec<Variable> = Variable::ALL
        .into_iter()
        .filter(|&v| v != cfg.response && v != cfg.exposure)
        .collect();

    // Rows from clusters without a fit carry no targets and are dropped.
    let rows: Vec<&AugmentedRecord> = augmented
        .iter()
        .filter(|a| a.cluster_intercept.is_some())
        .collect();
    if rows.is_empty() {
        return Err(PipelineError {
            stage: "trees",
            source: StageError::Config("no cluster produced a regression fit".into()),
        });
    }

    let columns: Vec<(String, Vec<f64>)> = predictors
        .iter()
        .map(|&v| {
            (
                v.name().to_string(),
                rows.iter().map(|a| a.record.value(v)).collect(),
            )
        })
        .collect();
    let frame = rptree::Frame::new(columns).map_err(at("trees"))?;
    let names: Vec<String> = predictors.iter().map(|v| v.name().to_string()).collect();

    let intercepts: Vec<f64> = rows.iter().map(|a| a.cluster_intercept.unwrap()).collect();
    let slopes: Vec<f64> = rows.iter().map(|a| a.cluster_slope.unwrap()).collect();

    let fit_i = rptree::grow(&frame, &intercepts, &names, &cfg.tree).map_err(at("trees"))?;
    let fit_s = rptree::grow(&frame, &slopes, &names, &cfg.tree).map_err(at("trees"))?;

    Ok((
        TreeReport {
            r2: fit_i.r2,
            n_leaves: fit_i.n_leaves,
            root: TreeNodeJson::from(&fit_i.root),
        },
        TreeReport {
            r2: fit_s.r2,
            n_leaves: fit_s.n_leaves,
            root: TreeNodeJson::from(&fit_s.root),
        },
    ))
}

/// Internal consistency checks applied to every assembled report.
fn check_report(report: &LcrReport) -> Result<(), PipelineError> {
    let internal = |msg: String| PipelineError {
        stage: "report",
        source: StageError::Internal(msg),
    };

    // The FDR column must equal bh_adjust of the table's own p column.
    let p: Vec<f64> = report
        .cluster_table
        .iter()
        .filter_map(|r| r.p_slope)
        .collect();
    let expect = statcore::bh_adjust(&p).map_err(at("report"))?;
    let fdr: Vec<f64> = report
        .cluster_table
        .iter()
        .filter_map(|r| r.fdr_p_slope)
        .collect();
    if fdr != expect.adjusted {
        return Err(internal("FDR column disagrees with bh_adjust".into()));
    }

    // Cluster sizes account for every augmented record, and each record's
    // appended slope matches its cluster row.
    let n_table: usize = report.cluster_table.iter().map(|r| r.n).sum();
    if n_table != report.augmented.len() {
        return Err(internal(format!(
            "cluster table covers {n_table} records, augmented has {}",
            report.augmented.len()
        )));
    }
    for a in &report.augmented {
        let row = &report.cluster_table[a.cluster - 1];
        if a.cluster_slope != row.slope || a.cluster_intercept != row.intercept {
            return Err(internal(format!(
                "record {} disagrees with cluster {} fit",
                a.record.row_id, a.cluster
            )));
        }
    }

    // Histogram weights cover exactly the records of fitted clusters.
    let fitted_n: usize = report
        .cluster_table
        .iter()
        .filter(|r| r.slope.is_some())
        .map(|r| r.n)
        .sum();
    let hist_n: usize = report.slope_histogram.bins.iter().map(|b| b.count).sum();
    if hist_n != fitted_n {
        return Err(internal(format!(
            "histogram weights sum to {hist_n}, fitted clusters hold {fitted_n}"
        )));
    }
    Ok(())
}

/// Round to `digits` significant digits (6 throughout report emission).
fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { 0.0 } else { x };
    }
    let magnitude = x.abs().log10().floor() as i32;
    let factor = 10f64.powi(digits - 1 - magnitude);
    (x * factor).round() / factor
}

fn round_json(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Number(n) => {
            if n.is_f64() {
                let rounded = round_sig(n.as_f64().expect("f64 number"), 6);
                *value = serde_json::Value::from(rounded);
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(round_json),
        serde_json::Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Serialize any report piece as pretty JSON with all floating-point
/// numbers rounded to 6 significant digits. Identical inputs produce
/// byte-identical output.
pub fn to_report_json<T: Serialize>(value: &T) -> Result<String, PipelineError> {
    let mut v = serde_json::to_value(value).map_err(|e| PipelineError {
        stage: "emit",
        source: StageError::Internal(format!("serialize: {e}")),
    })?;
    round_json(&mut v);
    serde_json::to_string_pretty(&v).map_err(|e| PipelineError {
        stage: "emit",
        source: StageError::Internal(format!("serialize: {e}")),
    })
}

fn fmt_num(x: f64) -> String {
    format!("{}", round_sig(x, 6))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

fn cluster_table_csv(table: &[ClusterRegressionRow]) -> String {
    let mut out = String::from(
        "cluster,n,intercept,se_intercept,t_intercept,p_intercept,slope,se_slope,t_slope,p_slope,fdr_p_slope\n",
    );
    for r in table {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.cluster,
            r.n,
            fmt_opt(r.intercept),
            fmt_opt(r.se_intercept),
            fmt_opt(r.t_intercept),
            fmt_opt(r.p_intercept),
            fmt_opt(r.slope),
            fmt_opt(r.se_slope),
            fmt_opt(r.t_slope),
            fmt_opt(r.p_slope),
            fmt_opt(r.fdr_p_slope),
        ));
    }
    out
}

fn augmented_csv(augmented: &[AugmentedRecord]) -> String {
    let mut header: Vec<&str> = vec!["RowID", "Label"];
    header.extend(Variable::ALL.iter().map(|v| v.name()));
    header.extend(["Cluster", "ClusterIntercept", "ClusterSlope"]);
    let mut out = header.join(",");
    out.push('\n');
    for a in augmented {
        let mut row = vec![a.record.row_id.to_string(), a.record.label.clone()];
        row.extend(Variable::ALL.iter().map(|&v| fmt_num(a.record.value(v))));
        row.push(a.cluster.to_string());
        row.push(fmt_opt(a.cluster_intercept));
        row.push(fmt_opt(a.cluster_slope));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn histogram_csv(hist: &SlopeHistogram) -> String {
    let mut out = String::from("bin,count\n");
    for b in &hist.bins {
        out.push_str(&format!("{},{}\n", fmt_num(b.lo), b.count));
    }
    out
}

/// Write the deterministic file set for the requested formats and return
/// the written paths:
/// `report.json`, `cluster_table.csv`, `augmented.csv`, `slope_hist.csv`,
/// `intercept_tree.json`/`.dot`, `slope_tree.json`/`.dot`.
pub fn emit_report(
    report: &LcrReport,
    dir: &Path,
    formats: &[OutputFormat],
) -> Result<Vec<PathBuf>, PipelineError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |e: io::Error| PipelineError {
            stage: "emit",
            source: StageError::Io { path, source: e },
        }
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;

    let mut written = Vec::new();
    let mut write = |name: &str, contents: String| -> Result<(), PipelineError> {
        let path = dir.join(name);
        std::fs::write(&path, contents).map_err(io_err(&path))?;
        written.push(path);
        Ok(())
    };

    if formats.contains(&OutputFormat::Json) {
        write("report.json", to_report_json(report)? + "\n")?;
        write(
            "intercept_tree.json",
            to_report_json(&report.intercept_tree)? + "\n",
        )?;
        write(
            "slope_tree.json",
            to_report_json(&report.slope_tree)? + "\n",
        )?;
    }
    if formats.contains(&OutputFormat::Csv) {
        write(
            "cluster_table.csv",
            cluster_table_csv(&report.cluster_table),
        )?;
        write("augmented.csv", augmented_csv(&report.augmented))?;
        write("slope_hist.csv", histogram_csv(&report.slope_histogram))?;
    }
    if formats.contains(&OutputFormat::Dot) {
        write(
            "intercept_tree.dot",
            tree_json_to_dot(&report.intercept_tree.root, "intercept_tree"),
        )?;
        write(
            "slope_tree.dot",
            tree_json_to_dot(&report.slope_tree.root, "slope_tree"),
        )?;
    }
    Ok(written)
}

fn tree_json_to_dot(root: &TreeNodeJson, name: &str) -> String {
    let mut out = format!("digraph {name} {{\n  node [shape=box];\n");
    let mut next_id = 0usize;
    dot_node(root, &mut next_id, &mut out);
    out.push_str("}\n");
    out
}

fn dot_node(node: &TreeNodeJson, next_id: &mut usize, out: &mut String) -> usize {
    let id = *next_id;
    *next_id += 1;
    match (&node.variable, &node.left, &node.right) {
        (Some(variable), Some(left), Some(right)) => {
            out.push_str(&format!(
                "  n{id} [label=\"{variable}\\nn={} mean={}\\nLogWorth={}\"];\n",
                node.n,
                fmt_num(node.mean),
                fmt_opt(node.logworth),
            ));
            let cut = fmt_opt(node.cut);
            let left_id = dot_node(left, next_id, out);
            let right_id = dot_node(right, next_id, out);
            out.push_str(&format!("  n{id} -> n{left_id} [label=\"< {cut}\"];\n"));
            out.push_str(&format!(
                "  n{id} -> n{right_id} [label=\"\u{2265} {cut}\"];\n"
            ));
        }
        _ => {
            out.push_str(&format!(
                "  n{id} [label=\"n={} mean={}\"];\n",
                node.n,
                fmt_num(node.mean)
            ));
        }
    }
    id
}

/// Plain-text rendering of the cluster table plus both tree R-squared
/// values, for CLI output.
pub fn format_report_summary(report: &LcrReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:>7} {:>5} {:>10} {:>10} {:>8} {:>9} {:>10} {:>10} {:>8} {:>9} {:>9}\n",
        "cluster",
        "n",
        "intercept",
        "se_inter",
        "t_inter",
        "p_inter",
        "slope",
        "se_slope",
        "t_slope",
        "p_slope",
        "fdr_p"
    ));
    let cell =
        |v: Option<f64>| -> String { v.map(|x| format!("{:.4}", x)).unwrap_or_else(|| "-".into()) };
    for r in &report.cluster_table {
        out.push_str(&format!(
            "{:>7} {:>5} {:>10} {:>10} {:>8} {:>9} {:>10} {:>10} {:>8} {:>9} {:>9}\n",
            r.cluster,
            r.n,
            cell(r.intercept),
            cell(r.se_intercept),
            cell(r.t_intercept),
            cell(r.p_intercept),
            cell(r.slope),
            cell(r.se_slope),
            cell(r.t_slope),
            cell(r.p_slope),
            cell(r.fdr_p_slope),
        ));
    }
    out.push_str(&format!(
        "negative-slope locations: {} of {} ({:.1}%)\n",
        report.negative_slope.count,
        report.augmented.len(),
        report.negative_slope.share * 100.0
    ));
    out.push_str(&format!(
        "intercept tree R^2 = {:.4} ({} leaves)\n",
        report.intercept_tree.r2, report.intercept_tree.n_leaves
    ));
    out.push_str(&format!(
        "slope tree R^2 = {:.4} ({} leaves)\n",
        report.slope_tree.r2, report.slope_tree.n_leaves
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn round_sig_behaves() {
        assert_eq!(round_sig(2.731234567, 6), 2.73123);
        assert_eq!(round_sig(0.000123456789, 6), 0.000123457);
        assert_eq!(round_sig(-1234567.0, 6), -1234570.0);
        assert_eq!(round_sig(0.0, 6), 0.0);
        assert_eq!(round_sig(-0.0, 6), 0.0);
        // Idempotent.
        for &x in &[3.87654321, -0.0001999995, 123456.789] {
            let once = round_sig(x, 6);
            assert_eq!(round_sig(once, 6), once);
        }
    }

    #[test]
    fn negative_share_edges() {
        let row = |cluster: usize, n: usize, slope: Option<f64>| ClusterRegressionRow {
            cluster,
            n,
            intercept: slope.map(|_| 1.0),
            se_intercept: slope.map(|_| 0.1),
            t_intercept: None,
            p_intercept: None,
            slope,
            se_slope: slope.map(|_| 0.1),
            t_slope: None,
            p_slope: None,
            fdr_p_slope: None,
        };
        let table = vec![row(1, 3, Some(0.2)), row(2, 4, Some(0.1))];
        assert_eq!(negative_slope_share(&table, &[3, 4]).unwrap(), (0, 0.0));

        let table = vec![row(1, 7, Some(-0.5))];
        let (count, share) = negative_slope_share(&table, &[7]).unwrap();
        assert_eq!(count, 7);
        assert_abs_diff_eq!(share, 1.0);

        assert!(negative_slope_share(&table, &[7, 1]).is_err());
    }

    #[test]
    fn histogram_bins_align_to_zero() {
        let row = |cluster: usize, n: usize, slope: f64| ClusterRegressionRow {
            cluster,
            n,
            intercept: Some(1.0),
            se_intercept: Some(0.1),
            t_intercept: Some(10.0),
            p_intercept: Some(0.0),
            slope: Some(slope),
            se_slope: Some(0.05),
            t_slope: Some(slope / 0.05),
            p_slope: Some(0.5),
            fdr_p_slope: Some(0.5),
        };
        let table = vec![row(1, 5, -0.013), row(2, 7, 0.005), row(3, 9, 0.031)];
        let hist = histogram_of_slopes(&table);
        assert_eq!(hist.bins.len(), 3); // [-0.02,0), [0,0.02), [0.02,0.04)
        assert_eq!(hist.bins[0].count, 5);
        assert_abs_diff_eq!(hist.bins[0].lo, -0.02, epsilon = 1e-15);
        assert_abs_diff_eq!(hist.bins[1].lo, 0.0, epsilon = 1e-15);
        assert_eq!(hist.bins[1].count, 7);
        assert_eq!(hist.bins[2].count, 9);
        let total: usize = hist.bins.iter().map(|b| b.count).sum();
        assert_eq!(total, 21);
    }

    #[test]
    fn config_validation_catches_conflicts() {
        let cfg = LcrConfig {
            exposure: Variable::ChangeLe,
            ..LcrConfig::default()
        };
        assert!(cfg.validate().is_err());

        let cfg = LcrConfig {
            cluster_vars: ClusterVars::Explicit(vec![Variable::ChangePm]),
            ..LcrConfig::default()
        };
        assert!(cfg.validate().is_err());

        let cfg = LcrConfig {
            k: 0,
            ..LcrConfig::default()
        };
        assert!(cfg.validate().is_err());

        assert!(LcrConfig::default().validate().is_ok());
    }

    #[test]
    fn cluster_vars_serde_round_trip() {
        let auto = ClusterVars::Auto;
        let s = serde_json::to_string(&auto).unwrap();
        assert_eq!(s, "\"auto\"");
        assert_eq!(serde_json::from_str::<ClusterVars>(&s).unwrap(), auto);

        let explicit = ClusterVars::Explicit(vec![Variable::ChangeIncome, Variable::BlackD]);
        let s = serde_json::to_string(&explicit).unwrap();
        assert_eq!(s, "[\"Change Income\",\"black_d\"]");
        assert_eq!(serde_json::from_str::<ClusterVars>(&s).unwrap(), explicit);
    }
}
