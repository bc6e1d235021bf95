//! Synthetic observational datasets with planted cluster structure,
//! confounding, and known per-cluster intercepts/slopes, for end-to-end
//! recovery testing.
//!
//! Randomness is fully deterministic per seed: a ChaCha8 stream per
//! cluster (seeds derived from the dataset seed by splitmix64), uniforms
//! from the top 53 bits, and normals by the Box-Muller transform.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::dataset::{Dataset, LocationRecord, Variable};
use crate::pipeline::{ClusterVars, LcrConfig, LcrReport};
use crate::statcore;

/// Name of the random source, recorded for provenance.
pub const RNG_ALGORITHM: &str = "chacha8 + box-muller, per-cluster splitmix64 seeds";

/// The nine variables available as synthetic covariates (everything except
/// the response `Change LE` and the exposure `Change PM`). The first four
/// are the pipeline's default clustering variables, so four-covariate
/// synthetic files analyze with stock flags.
pub const COVARIATE_POOL: [Variable; 9] = [
    Variable::LcanD,
    Variable::CopdD,
    Variable::ChangeIncome,
    Variable::BlackD,
    Variable::HsD,
    Variable::HispD,
    Variable::PopD,
    Variable::UrbanD,
    Variable::MigD,
];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{0}")]
    Domain(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub k: usize,
    pub n_per_cluster: Vec<usize>,
    /// k x p covariate centers, p <= 9.
    pub centers: Vec<Vec<f64>>,
    pub spread: f64,
    pub true_intercepts: Vec<f64>,
    pub true_slopes: Vec<f64>,
    pub exposure_range: Vec<(f64, f64)>,
    pub noise_sd: f64,
    pub seed: u64,
    /// When set, generation checks that centers are pairwise separated by
    /// at least 6 * spread, which guarantees clusterability.
    pub well_separated: bool,
}

impl SynthConfig {
    /// A well-separated k-cluster configuration on min(k, 4) covariates
    /// with equal cluster sizes, intercepts spread over [1, 1+0.3(k-1)] and
    /// slopes over [-0.15, -0.15+0.05(k-1)] (a range spanning zero).
    /// Every covariate axis carries between-cluster structure, so none is
    /// pure noise after standardization.
    pub fn well_separated(k: usize, n_per_cluster: usize, noise_sd: f64, seed: u64) -> SynthConfig {
        let p = k.clamp(1, 4);
        let centers = (0..k)
            .map(|c| {
                let mut center = vec![0.0; p];
                center[c % p] = 10.0 * (1.0 + (c / p) as f64);
                center
            })
            .collect();
        SynthConfig {
            k,
            n_per_cluster: vec![n_per_cluster; k],
            centers,
            spread: 1.0,
            true_intercepts: (0..k).map(|c| 1.0 + 0.3 * c as f64).collect(),
            true_slopes: (0..k).map(|c| -0.15 + 0.05 * c as f64).collect(),
            exposure_range: vec![(2.0, 11.0); k],
            noise_sd,
            seed,
            well_separated: true,
        }
    }

    /// The covariate variables this configuration populates, in order.
    pub fn covariate_names(&self) -> Vec<Variable> {
        let p = self.centers.first().map_or(0, |c| c.len());
        COVARIATE_POOL[..p].to_vec()
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.spread.is_nan() || self.spread <= 0.0 {
            return Err(SynthError::Domain(format!(
                "spread must be positive (got {})",
                self.spread
            )));
        }
        if self.noise_sd < 0.0 {
            return Err(SynthError::Domain(format!(
                "noise_sd must be nonnegative (got {})",
                self.noise_sd
            )));
        }
        let k = self.k;
        if k == 0 {
            return Err(SynthError::Domain("k must be at least 1".into()));
        }
        for (name, len) in [
            ("n_per_cluster", self.n_per_cluster.len()),
            ("centers", self.centers.len()),
            ("true_intercepts", self.true_intercepts.len()),
            ("true_slopes", self.true_slopes.len()),
            ("exposure_range", self.exposure_range.len()),
        ] {
            if len != k {
                return Err(SynthError::Domain(format!(
                    "{name} has {len} entries, expected k = {k}"
                )));
            }
        }
        let p = self.centers[0].len();
        if p == 0 || p > COVARIATE_POOL.len() {
            return Err(SynthError::Domain(format!(
                "centers must have 1..={} coordinates, got {p}",
                COVARIATE_POOL.len()
            )));
        }
        if self.centers.iter().any(|c| c.len() != p) {
            return Err(SynthError::Domain("ragged centers".into()));
        }
        for &(lo, hi) in &self.exposure_range {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(SynthError::Domain(format!(
                    "exposure range ({lo}, {hi}) is inverted"
                )));
            }
        }
        if self.well_separated {
            for i in 0..k {
                for j in (i + 1)..k {
                    let dist: f64 = self.centers[i]
                        .iter()
                        .zip(&self.centers[j])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    if dist < 6.0 * self.spread {
                        return Err(SynthError::Domain(format!(
                            "centers {i} and {j} are {dist:.3} apart, need >= {}",
                            6.0 * self.spread
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// A generated dataset together with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDataset {
    pub dataset: Dataset,
    /// Per-record true cluster label in 1..=k, aligned with the records.
    pub true_labels: Vec<usize>,
    pub config: SynthConfig,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn cluster_seed(seed: u64, cluster: usize) -> u64 {
    splitmix64(seed ^ splitmix64(cluster as u64 + 1))
}

/// Uniform in (0, 1], from the top 53 bits of the stream.
fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    1.0 - u
}

/// Standard normal via Box-Muller.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = uniform(rng);
    let u2 = uniform(rng);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Generate a dataset: per cluster, covariates are center + spread * N(0,1),
/// the exposure is uniform over the cluster's range, and the response is
/// intercept + slope * exposure + noise_sd * N(0,1).
pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset, SynthError> {
    cfg.validate()?;
    let covariates = cfg.covariate_names();

    let mut records = Vec::new();
    let mut true_labels = Vec::new();
    let mut row_id: u32 = 1;
    for c in 0..cfg.k {
        let mut rng = ChaCha8Rng::seed_from_u64(cluster_seed(cfg.seed, c));
        let (lo, hi) = cfg.exposure_range[c];
        for i in 0..cfg.n_per_cluster[c] {
            let mut rec = LocationRecord {
                row_id,
                label: format!("synth_{}_{}", c + 1, i + 1),
                le_change: 0.0,
                pm_decrease: 0.0,
                lcan_d: 0.0,
                copd_d: 0.0,
                income_change: 0.0,
                hs_d: 0.0,
                black_d: 0.0,
                hisp_d: 0.0,
                pop_d: 0.0,
                urban_d: 0.0,
                mig_d: 0.0,
            };
            for (j, &var) in covariates.iter().enumerate() {
                set_value(
                    &mut rec,
                    var,
                    cfg.centers[c][j] + cfg.spread * normal(&mut rng),
                );
            }
            let exposure = lo + (hi - lo) * uniform(&mut rng);
            let response = cfg.true_intercepts[c]
                + cfg.true_slopes[c] * exposure
                + cfg.noise_sd * normal(&mut rng);
            rec.pm_decrease = exposure;
            rec.le_change = response;
            records.push(rec);
            true_labels.push(c + 1);
            row_id += 1;
        }
    }

    Ok(SynthDataset {
        dataset: Dataset {
            records,
            excluded: Vec::new(),
        },
        true_labels,
        config: cfg.clone(),
    })
}

fn set_value(rec: &mut LocationRecord, var: Variable, value: f64) {
    match var {
        Variable::ChangeLe => rec.le_change = value,
        Variable::LcanD => rec.lcan_d = value,
        Variable::CopdD => rec.copd_d = value,
        Variable::ChangeIncome => rec.income_change = value,
        Variable::ChangePm => rec.pm_decrease = value,
        Variable::HsD => rec.hs_d = value,
        Variable::BlackD => rec.black_d = value,
        Variable::HispD => rec.hisp_d = value,
        Variable::PopD => rec.pop_d = value,
        Variable::UrbanD => rec.urban_d = value,
        Variable::MigD => rec.mig_d = value,
    }
}

/// Write the canonical CSV with the extra `TrueCluster` column (which the
/// main pipeline ignores).
pub fn write_csv<W: std::io::Write>(sd: &SynthDataset, sink: W) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(sink);
    let mut header: Vec<&str> = vec!["RowID", "Label"];
    header.extend(Variable::ALL.iter().map(|v| v.name()));
    header.push("TrueCluster");
    writer.write_record(&header)?;
    for (rec, label) in sd.dataset.records.iter().zip(&sd.true_labels) {
        let mut row = vec![rec.row_id.to_string(), rec.label.clone()];
        row.extend(Variable::ALL.iter().map(|&v| format!("{}", rec.value(v))));
        row.push(label.to_string());
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// A pipeline configuration matched to a synthetic dataset: its covariates
/// as cluster variables, its k, and no row exclusions.
pub fn pipeline_config_for(sd: &SynthDataset) -> LcrConfig {
    LcrConfig {
        exclude_row_ids: Vec::new(),
        exclude_reason: String::new(),
        cluster_vars: ClusterVars::Explicit(sd.config.covariate_names()),
        k: sd.config.k,
        ..LcrConfig::default()
    }
}

/// One matched (true cluster, estimated cluster) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMatch {
    pub true_cluster: usize,
    pub est_cluster: usize,
    pub overlap: usize,
    pub slope_error: Option<f64>,
    pub ci_covered: Option<bool>,
}

/// Recovery quality of a pipeline report against the generator's truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryMetrics {
    pub k_true: usize,
    pub k_est: usize,
    /// Rand index over record pairs, in [0, 1].
    pub rand_index: f64,
    pub matches: Vec<ClusterMatch>,
    pub covered: usize,
    pub evaluated: usize,
}

impl RecoveryMetrics {
    /// Fraction of evaluated 95% CIs that covered the true slope.
    pub fn coverage(&self) -> f64 {
        if self.evaluated == 0 {
            return 0.0;
        }
        self.covered as f64 / self.evaluated as f64
    }

    pub fn mean_abs_slope_error(&self) -> Option<f64> {
        let errs: Vec<f64> = self.matches.iter().filter_map(|m| m.slope_error).collect();
        if errs.is_empty() {
            None
        } else {
            Some(errs.iter().sum::<f64>() / errs.len() as f64)
        }
    }
}

/// Compare a report's clusters against the generator's truth: greedy
/// maximal-overlap matching, per-cluster slope errors, 95% CI coverage of
/// the true slope, and the Rand index of the two partitions.
pub fn evaluate_recovery(sd: &SynthDataset, report: &LcrReport) -> RecoveryMetrics {
    // Align by row id; the pipeline may have excluded rows.
    let true_by_id: std::collections::HashMap<u32, usize> = sd
        .dataset
        .records
        .iter()
        .zip(&sd.true_labels)
        .map(|(r, &l)| (r.row_id, l))
        .collect();
    let pairs: Vec<(usize, usize)> = report
        .augmented
        .iter()
        .filter_map(|a| true_by_id.get(&a.record.row_id).map(|&t| (t, a.cluster)))
        .collect();

    let k_true = sd.config.k;
    let k_est = report.cluster_table.len();

    // Rand index over aligned record pairs.
    let n = pairs.len();
    let mut agree = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            let same_true = pairs[i].0 == pairs[j].0;
            let same_est = pairs[i].1 == pairs[j].1;
            if same_true == same_est {
                agree += 1;
            }
        }
    }
    let total_pairs = n * (n - 1) / 2;
    let rand_index = if total_pairs > 0 {
        agree as f64 / total_pairs as f64
    } else {
        1.0
    };

    // Greedy maximal-overlap matching.
    let mut overlap = vec![vec![0usize; k_est + 1]; k_true + 1];
    for &(t, e) in &pairs {
        overlap[t][e] += 1;
    }
    let mut used_true = vec![false; k_true + 1];
    let mut used_est = vec![false; k_est + 1];
    let mut matches = Vec::new();
    for _ in 0..k_true.min(k_est) {
        let mut best: Option<(usize, usize, usize)> = None;
        for t in 1..=k_true {
            if used_true[t] {
                continue;
            }
            for e in 1..=k_est {
                if used_est[e] {
                    continue;
                }
                if best.is_none_or(|(_, _, b)| overlap[t][e] > b) {
                    best = Some((t, e, overlap[t][e]));
                }
            }
        }
        let Some((t, e, count)) = best else { break };
        used_true[t] = true;
        used_est[e] = true;

        let row = &report.cluster_table[e - 1];
        let true_slope = sd.config.true_slopes[t - 1];
        let (slope_error, ci_covered) = match (row.slope, row.se_slope) {
            (Some(est), Some(se)) if row.n >= 3 => {
                let df = row.n - 2;
                let tq = statcore::t_quantile(0.975, df).unwrap_or(f64::INFINITY);
                // Small absolute slack keeps zero-width CIs of exact fits
                // covering slopes they matched to machine precision.
                let half = tq * se + 1e-9 * true_slope.abs().max(1.0);
                (
                    Some((est - true_slope).abs()),
                    Some((est - true_slope).abs() <= half),
                )
            }
            _ => (None, None),
        };
        matches.push(ClusterMatch {
            true_cluster: t,
            est_cluster: e,
            overlap: count,
            slope_error,
            ci_covered,
        });
    }

    let covered = matches
        .iter()
        .filter(|m| m.ci_covered == Some(true))
        .count();
    let evaluated = matches.iter().filter(|m| m.ci_covered.is_some()).count();
    RecoveryMetrics {
        k_true,
        k_est,
        rand_index,
        matches,
        covered,
        evaluated,
    }
}
