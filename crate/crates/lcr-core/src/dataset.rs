//! Input schema, CSV parsing and emission, row exclusion, summary moments,
//! and z-score standardization.
//!
//! The canonical CSV layout is UTF-8, comma separated, with a required
//! header row. Columns (exact strings): `RowID`, `Label`, then the 11
//! change variables of [`Variable::ALL`]. Extra columns are ignored with a
//! warning; missing values are a hard error.

use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("line {line}, column `{column}`: cannot parse `{value}` as a number")]
    Parse {
        line: u64,
        column: String,
        value: String,
    },
    #[error("line {line}, column `{column}`: value is not finite")]
    NonFinite { line: u64, column: String },
    #[error("line {line}: row id must be a positive integer (got `{value}`)")]
    BadRowId { line: u64, value: String },
    #[error("duplicate row id {0}")]
    DuplicateRowId(u32),
    #[error("insufficient data: need at least {needed} records, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("column `{0}` has zero variance")]
    DegenerateColumn(String),
    #[error("unknown variable name `{0}`")]
    UnknownVariable(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// The 11 change variables, in canonical column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variable {
    #[serde(rename = "Change LE")]
    ChangeLe,
    #[serde(rename = "Lcan_d")]
    LcanD,
    #[serde(rename = "copd_d")]
    CopdD,
    #[serde(rename = "Change Income")]
    ChangeIncome,
    #[serde(rename = "Change PM")]
    ChangePm,
    #[serde(rename = "hs_d")]
    HsD,
    #[serde(rename = "black_d")]
    BlackD,
    #[serde(rename = "hisp_d")]
    HispD,
    #[serde(rename = "Pop_d")]
    PopD,
    #[serde(rename = "urban_d")]
    UrbanD,
    #[serde(rename = "mig_d")]
    MigD,
}

impl Variable {
    pub const ALL: [Variable; 11] = [
        Variable::ChangeLe,
        Variable::LcanD,
        Variable::CopdD,
        Variable::ChangeIncome,
        Variable::ChangePm,
        Variable::HsD,
        Variable::BlackD,
        Variable::HispD,
        Variable::PopD,
        Variable::UrbanD,
        Variable::MigD,
    ];

    /// The canonical CSV column string.
    pub fn name(self) -> &'static str {
        match self {
            Variable::ChangeLe => "Change LE",
            Variable::LcanD => "Lcan_d",
            Variable::CopdD => "copd_d",
            Variable::ChangeIncome => "Change Income",
            Variable::ChangePm => "Change PM",
            Variable::HsD => "hs_d",
            Variable::BlackD => "black_d",
            Variable::HispD => "hisp_d",
            Variable::PopD => "Pop_d",
            Variable::UrbanD => "urban_d",
            Variable::MigD => "mig_d",
        }
    }

    pub fn from_name(name: &str) -> Result<Variable, DatasetError> {
        Variable::ALL
            .into_iter()
            .find(|v| v.name() == name)
            .ok_or_else(|| DatasetError::UnknownVariable(name.to_string()))
    }
}

impl std::fmt::Display for Variable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variable {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variable::from_name(s)
    }
}

/// One city/region's change variables (~1980 to ~2000) plus identifiers.
/// `pm_decrease` is the exposure with the sign convention that a decrease
/// in PM2.5 is positive (cleaner air); `le_change` is the response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationRecord {
    pub row_id: u32,
    pub label: String,
    pub le_change: f64,
    pub pm_decrease: f64,
    pub lcan_d: f64,
    pub copd_d: f64,
    pub income_change: f64,
    pub hs_d: f64,
    pub black_d: f64,
    pub hisp_d: f64,
    pub pop_d: f64,
    pub urban_d: f64,
    pub mig_d: f64,
}

impl LocationRecord {
    pub fn value(&self, var: Variable) -> f64 {
        match var {
            Variable::ChangeLe => self.le_change,
            Variable::LcanD => self.lcan_d,
            Variable::CopdD => self.copd_d,
            Variable::ChangeIncome => self.income_change,
            Variable::ChangePm => self.pm_decrease,
            Variable::HsD => self.hs_d,
            Variable::BlackD => self.black_d,
            Variable::HispD => self.hisp_d,
            Variable::PopD => self.pop_d,
            Variable::UrbanD => self.urban_d,
            Variable::MigD => self.mig_d,
        }
    }

    fn set(&mut self, var: Variable, value: f64) {
        match var {
            Variable::ChangeLe => self.le_change = value,
            Variable::LcanD => self.lcan_d = value,
            Variable::CopdD => self.copd_d = value,
            Variable::ChangeIncome => self.income_change = value,
            Variable::ChangePm => self.pm_decrease = value,
            Variable::HsD => self.hs_d = value,
            Variable::BlackD => self.black_d = value,
            Variable::HispD => self.hisp_d = value,
            Variable::PopD => self.pop_d = value,
            Variable::UrbanD => self.urban_d = value,
            Variable::MigD => self.mig_d = value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedRow {
    pub row_id: u32,
    pub reason: String,
}

/// Records in input order plus the log of excluded rows.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<LocationRecord>,
    pub excluded: Vec<ExcludedRow>,
}

/// Per-variable mean and sample (n-1) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSummary {
    pub variable: Variable,
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub rows: Vec<VariableSummary>,
}

impl SummaryStats {
    pub fn get(&self, var: Variable) -> Option<&VariableSummary> {
        self.rows.iter().find(|r| r.variable == var)
    }
}

/// Column-standardized covariates: `values[i]` is row i's z-scores in the
/// order of `columns`; `centers` and `scales` record the transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizedMatrix {
    pub columns: Vec<Variable>,
    pub values: Vec<Vec<f64>>,
    pub centers: Vec<f64>,
    pub scales: Vec<f64>,
}

impl StandardizedMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }
}

const ID_COLUMNS: [&str; 2] = ["RowID", "Label"];

/// Parse the canonical CSV layout.
///
/// One record per data row, in file order. Extra columns are ignored with
/// a warning; a missing required column, a non-numeric or non-finite cell,
/// and a duplicate row id are errors.
pub fn parse_csv<R: io::Read>(source: R) -> Result<Dataset, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(source);
    let headers = reader.headers()?.clone();

    let find = |name: &str| -> Result<usize, DatasetError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    };
    let row_id_idx = find("RowID")?;
    let label_idx = find("Label")?;
    let var_idx: Vec<(Variable, usize)> = Variable::ALL
        .into_iter()
        .map(|v| Ok((v, find(v.name())?)))
        .collect::<Result<_, DatasetError>>()?;

    let known: Vec<&str> = ID_COLUMNS
        .iter()
        .copied()
        .chain(Variable::ALL.iter().map(|v| v.name()))
        .collect();
    let extras: Vec<&str> = headers.iter().filter(|h| !known.contains(h)).collect();
    if !extras.is_empty() {
        log::warn!("ignoring extra columns: {}", extras.join(", "));
    }

    let mut records = Vec::new();
    let mut seen_ids = std::collections::HashSet::new();
    for result in reader.records() {
        let record = result?;
        let line = record.position().map_or(0, |p| p.line());

        let raw_id = record.get(row_id_idx).unwrap_or("").trim();
        let row_id: u32 = raw_id.parse().map_err(|_| DatasetError::BadRowId {
            line,
            value: raw_id.to_string(),
        })?;
        if row_id == 0 {
            return Err(DatasetError::BadRowId {
                line,
                value: raw_id.to_string(),
            });
        }
        if !seen_ids.insert(row_id) {
            return Err(DatasetError::DuplicateRowId(row_id));
        }

        let mut rec = LocationRecord {
            row_id,
            label: record.get(label_idx).unwrap_or("").to_string(),
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
        for &(var, idx) in &var_idx {
            let cell = record.get(idx).unwrap_or("").trim();
            let value: f64 = cell.parse().map_err(|_| DatasetError::Parse {
                line,
                column: var.name().to_string(),
                value: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(DatasetError::NonFinite {
                    line,
                    column: var.name().to_string(),
                });
            }
            rec.set(var, value);
        }
        records.push(rec);
    }

    Ok(Dataset {
        records,
        excluded: Vec::new(),
    })
}

/// Write the canonical CSV layout. Values use the shortest representation
/// that round-trips, so parse(write(d)) reproduces d exactly.
pub fn write_csv<W: io::Write>(d: &Dataset, sink: W) -> Result<(), DatasetError> {
    let mut writer = csv::Writer::from_writer(sink);
    let header: Vec<&str> = ID_COLUMNS
        .iter()
        .copied()
        .chain(Variable::ALL.iter().map(|v| v.name()))
        .collect();
    writer.write_record(&header)?;
    for rec in &d.records {
        let mut row = vec![rec.row_id.to_string(), rec.label.clone()];
        row.extend(Variable::ALL.iter().map(|&v| format!("{}", rec.value(v))));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

impl Dataset {
    /// Values of one variable across records, in record order.
    pub fn column(&self, var: Variable) -> Vec<f64> {
        self.records.iter().map(|r| r.value(var)).collect()
    }

    pub fn find_by_row_id(&self, row_id: u32) -> Option<&LocationRecord> {
        self.records.iter().find(|r| r.row_id == row_id)
    }
}

/// Drop the listed rows, recording them in `excluded` with the reason.
///
/// Survivor order is preserved; ids that are absent (or already excluded)
/// are warnings, not errors, so repeated exclusion is idempotent.
pub fn exclude_rows(d: &Dataset, row_ids: &[u32], reason: &str) -> Dataset {
    let mut ids: Vec<u32> = Vec::new();
    for &id in row_ids {
        if !ids.contains(&id) {
            ids.push(id);
        }
    }
    let mut records = Vec::with_capacity(d.records.len());
    let mut excluded = d.excluded.clone();
    let mut found: Vec<u32> = Vec::new();
    for rec in &d.records {
        if ids.contains(&rec.row_id) {
            found.push(rec.row_id);
            excluded.push(ExcludedRow {
                row_id: rec.row_id,
                reason: reason.to_string(),
            });
        } else {
            records.push(rec.clone());
        }
    }
    for &id in &ids {
        if !found.contains(&id) {
            log::warn!("exclude_rows: row id {id} not present");
        }
    }
    Dataset { records, excluded }
}

fn column_min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let (lo, hi) = column_min_max(values);
    if lo == hi {
        // Identical values: exact moments, no float residue.
        return (lo, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    let ssd: f64 = values.iter().map(|&v| (v - mean) * (v - mean)).sum();
    (mean, (ssd / (n - 1.0)).sqrt())
}

/// Per-variable mean and n-1 standard deviation over all 11 variables.
pub fn summary_stats(d: &Dataset) -> Result<SummaryStats, DatasetError> {
    let n = d.records.len();
    if n < 2 {
        return Err(DatasetError::InsufficientData { needed: 2, got: n });
    }
    let rows = Variable::ALL
        .into_iter()
        .map(|var| {
            let col = d.column(var);
            let (mean, sd) = mean_sd(&col);
            VariableSummary {
                variable: var,
                mean,
                sd,
                n,
            }
        })
        .collect();
    Ok(SummaryStats { rows })
}

/// Z-score the named variables: z = (x - mean)/sd per column, with the
/// centers and scales recorded for reproducibility.
pub fn standardize(d: &Dataset, vars: &[Variable]) -> Result<StandardizedMatrix, DatasetError> {
    let n = d.records.len();
    if n < 2 {
        return Err(DatasetError::InsufficientData { needed: 2, got: n });
    }
    let mut centers = Vec::with_capacity(vars.len());
    let mut scales = Vec::with_capacity(vars.len());
    let mut cols = Vec::with_capacity(vars.len());
    for &var in vars {
        let col = d.column(var);
        let (lo, hi) = column_min_max(&col);
        if lo == hi {
            return Err(DatasetError::DegenerateColumn(var.name().to_string()));
        }
        let (mean, sd) = mean_sd(&col);
        centers.push(mean);
        scales.push(sd);
        cols.push(col);
    }
    let values = (0..n)
        .map(|i| {
            (0..vars.len())
                .map(|j| (cols[j][i] - centers[j]) / scales[j])
                .collect()
        })
        .collect();
    Ok(StandardizedMatrix {
        columns: vars.to_vec(),
        values,
        centers,
        scales,
    })
}

/// Build a record from values in [`Variable::ALL`] order (test helper).
#[cfg(test)]
pub(crate) fn test_record(row_id: u32, values: [f64; 11]) -> LocationRecord {
    let mut rec = LocationRecord {
        row_id,
        label: format!("loc_{row_id}"),
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
    for (var, v) in Variable::ALL.into_iter().zip(values) {
        rec.set(var, v);
    }
    rec
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn csv_fixture(n: usize) -> String {
        let mut s = String::from(
            "RowID,Label,Change LE,Lcan_d,copd_d,Change Income,Change PM,hs_d,black_d,hisp_d,Pop_d,urban_d,mig_d\n",
        );
        for i in 1..=n {
            let f = i as f64;
            s.push_str(&format!(
                "{i},City_{i},{},{},{},{},{},{},{},{},{},{},{}\n",
                2.0 + 0.01 * f,
                2.3 - 0.002 * f,
                4.4 + 0.003 * f,
                8.5 + 0.02 * f,
                6.5 - 0.01 * f,
                0.18,
                0.01 + 0.0001 * f,
                0.03,
                1.0,
                0.2,
                -0.006
            ));
        }
        s
    }

    #[test]
    fn parses_211_row_file() {
        let d = parse_csv(csv_fixture(211).as_bytes()).unwrap();
        assert_eq!(d.records.len(), 211);
        assert_eq!(d.records[0].row_id, 1);
        assert_eq!(d.records[0].label, "City_1");
        assert!(d.excluded.is_empty());
    }

    #[test]
    fn header_only_file_gives_empty_dataset() {
        let header = csv_fixture(0);
        let d = parse_csv(header.as_bytes()).unwrap();
        assert!(d.records.is_empty());
    }

    #[test]
    fn parse_error_names_row_and_column() {
        let mut csv = csv_fixture(3);
        csv = csv.replace("6.49,", "abc,"); // row 1's Change PM
        let err = parse_csv(csv.as_bytes()).unwrap_err();
        match err {
            DatasetError::Parse {
                line,
                column,
                value,
            } => {
                assert_eq!(line, 2);
                assert_eq!(column, "Change PM");
                assert_eq!(value, "abc");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_named() {
        let csv = csv_fixture(2).replace("copd_d", "copd");
        match parse_csv(csv.as_bytes()).unwrap_err() {
            DatasetError::MissingColumn(name) => assert_eq!(name, "copd_d"),
            other => panic!("expected missing column, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_row_id_rejected() {
        let mut csv = csv_fixture(2);
        csv = csv.replace("\n2,City_2", "\n1,City_2");
        assert!(matches!(
            parse_csv(csv.as_bytes()),
            Err(DatasetError::DuplicateRowId(1))
        ));
    }

    #[test]
    fn extra_columns_ignored() {
        let mut csv = String::from(
            "RowID,Label,Change LE,Lcan_d,copd_d,Change Income,Change PM,hs_d,black_d,hisp_d,Pop_d,urban_d,mig_d,TrueCluster\n",
        );
        csv.push_str("1,a,1,2,3,4,5,6,7,8,9,10,11,3\n");
        let d = parse_csv(csv.as_bytes()).unwrap();
        assert_eq!(d.records.len(), 1);
        assert_eq!(d.records[0].mig_d, 11.0);
    }

    #[test]
    fn non_finite_cell_rejected() {
        let mut csv = csv_fixture(1);
        csv = csv.replace("0.18,", "inf,");
        assert!(matches!(
            parse_csv(csv.as_bytes()),
            Err(DatasetError::NonFinite { .. })
        ));
    }

    #[test]
    fn exclusion_drops_rows_and_is_idempotent() {
        let d = parse_csv(csv_fixture(211).as_bytes()).unwrap();
        let d1 = exclude_rows(&d, &[128], "outlier (5600_NYOR_NY)");
        assert_eq!(d1.records.len(), 210);
        assert!(d1.find_by_row_id(128).is_none());
        assert_eq!(d1.excluded.len(), 1);
        assert_eq!(d1.excluded[0].reason, "outlier (5600_NYOR_NY)");

        let d2 = exclude_rows(&d, &[], "none");
        assert_eq!(d2, d);

        let d3 = exclude_rows(&d, &[128, 128], "outlier (5600_NYOR_NY)");
        assert_eq!(d3, d1);

        // Absent id: warning only.
        let d4 = exclude_rows(&d1, &[128], "again");
        assert_eq!(d4.records.len(), 210);
        assert_eq!(d4.excluded.len(), 1);
    }

    #[test]
    fn summary_stats_hand_cases() {
        let d = Dataset {
            records: vec![
                test_record(1, [1.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5]),
                test_record(2, [3.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5]),
            ],
            excluded: vec![],
        };
        let stats = summary_stats(&d).unwrap();
        let le = stats.get(Variable::ChangeLe).unwrap();
        assert_abs_diff_eq!(le.mean, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(le.sd, 2f64.sqrt(), epsilon = 1e-15);
        let constant = stats.get(Variable::HsD).unwrap();
        assert_eq!(constant.mean, 0.5);
        assert_eq!(constant.sd, 0.0);

        let single = Dataset {
            records: vec![test_record(1, [0.0; 11])],
            excluded: vec![],
        };
        assert!(matches!(
            summary_stats(&single),
            Err(DatasetError::InsufficientData { .. })
        ));
    }

    #[test]
    fn standardize_symmetric_column() {
        let d = Dataset {
            records: vec![
                test_record(1, [1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
                test_record(2, [2.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
                test_record(3, [3.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
            ],
            excluded: vec![],
        };
        let m = standardize(&d, &[Variable::ChangeLe]).unwrap();
        assert_eq!(m.n_rows(), 3);
        assert_abs_diff_eq!(m.values[0][0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.values[1][0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.values[2][0], 1.0, epsilon = 1e-12);
        assert_eq!(m.centers, vec![2.0]);
        assert_eq!(m.scales, vec![1.0]);

        match standardize(&d, &[Variable::LcanD]).unwrap_err() {
            DatasetError::DegenerateColumn(name) => assert_eq!(name, "Lcan_d"),
            other => panic!("expected degenerate column, got {other:?}"),
        }
    }

    #[test]
    fn standardized_columns_have_unit_moments() {
        let d = parse_csv(csv_fixture(50).as_bytes()).unwrap();
        let vars = [Variable::ChangeIncome, Variable::LcanD, Variable::CopdD];
        let m = standardize(&d, &vars).unwrap();
        for j in 0..vars.len() {
            let col: Vec<f64> = m.values.iter().map(|row| row[j]).collect();
            let (mean, sd) = mean_sd(&col);
            assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(sd, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let d = parse_csv(csv_fixture(25).as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_csv(&d, &mut buf).unwrap();
        let d2 = parse_csv(buf.as_slice()).unwrap();
        assert_eq!(d, d2);
    }
}
