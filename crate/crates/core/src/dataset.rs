//! Tabular section-year data: CSV ingestion with first-appearance label
//! encoding, completeness filtering, descriptive statistics, Pearson
//! correlation and seeded train/test splitting.
//!
//! Missing values are stored as `NaN` inside the numeric matrix.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const ROUTE_NAME: &str = "ROUTE_NAME";
pub const SECTION_ID: &str = "SECTION_ID";
pub const YEAR: &str = "YEAR";

pub const CONDITION_SCORE: &str = "TX_CONDITION_SCORE";
pub const DISTRESS_SCORE: &str = "TX_DISTRESS_SCORE";
pub const IRI_AVERAGE: &str = "TX_IRI_AVERAGE_SCORE";
pub const TRUCK_AADT_PCT: &str = "TX_TRUCK_AADT_PCT";
pub const CURRENT_18KIP: &str = "TX_CURRENT_18KIP_MEAS";
pub const PAVEMENT_TYPE: &str = "TX_PVMNT_TYPE_DTL_RD_LIFE_CODE";
pub const CLIMATE_ZONES: &str = "CLIMATE_ZONES";
pub const RURAL_URBAN: &str = "TX_RURAL_URBAN_CODE";
pub const FLOOD: &str = "Flood";
/// Next year's IRI, the regression target.
pub const NEXT_YEAR_IRI: &str = "NEXT_YEAR_IRI";

/// The nine record features, in canonical order.
pub const FEATURES: [&str; 9] = [
    CONDITION_SCORE,
    DISTRESS_SCORE,
    IRI_AVERAGE,
    TRUCK_AADT_PCT,
    CURRENT_18KIP,
    PAVEMENT_TYPE,
    CLIMATE_ZONES,
    RURAL_URBAN,
    FLOOD,
];

pub const CLIMATE_LABELS: [&str; 4] = ["west", "north", "central", "east"];

/// One pavement section in one year, as written to and read from CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionYearRecord {
    #[serde(rename = "ROUTE_NAME")]
    pub route_name: String,
    #[serde(rename = "SECTION_ID")]
    pub section_id: String,
    #[serde(rename = "YEAR")]
    pub year: i32,
    #[serde(rename = "TX_CONDITION_SCORE")]
    pub condition_score: f64,
    #[serde(rename = "TX_DISTRESS_SCORE")]
    pub distress_score: f64,
    #[serde(rename = "TX_IRI_AVERAGE_SCORE")]
    pub iri_average: f64,
    #[serde(rename = "TX_TRUCK_AADT_PCT")]
    pub truck_aadt_pct: f64,
    #[serde(rename = "TX_CURRENT_18KIP_MEAS")]
    pub current_18kip: f64,
    #[serde(rename = "TX_PVMNT_TYPE_DTL_RD_LIFE_CODE")]
    pub pavement_type_code: i32,
    #[serde(rename = "CLIMATE_ZONES")]
    pub climate_zone: String,
    #[serde(rename = "TX_RURAL_URBAN_CODE")]
    pub rural_urban_code: i32,
    #[serde(rename = "Flood")]
    pub flood: u8,
    #[serde(rename = "NEXT_YEAR_IRI")]
    pub next_year_iri: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    pub required: bool,
}

/// Columns expected in a records CSV, besides the three key columns
/// (`ROUTE_NAME`, `SECTION_ID`, `YEAR`) which are always required.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
}

impl Schema {
    /// The nine features (all required) plus the optional next-year target.
    pub fn records() -> Self {
        let mut columns: Vec<ColumnSpec> = FEATURES
            .iter()
            .map(|&name| ColumnSpec {
                name: name.to_string(),
                kind: if name == CLIMATE_ZONES {
                    ColumnKind::Categorical
                } else {
                    ColumnKind::Numeric
                },
                required: true,
            })
            .collect();
        columns.push(ColumnSpec {
            name: NEXT_YEAR_IRI.to_string(),
            kind: ColumnKind::Numeric,
            required: false,
        });
        Schema { columns }
    }

    pub fn numeric(names: &[&str]) -> Self {
        Schema {
            columns: names
                .iter()
                .map(|n| ColumnSpec {
                    name: n.to_string(),
                    kind: ColumnKind::Numeric,
                    required: true,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowKey {
    pub route_name: String,
    pub section_id: String,
    pub year: i32,
}

impl std::fmt::Display for RowKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.route_name, self.section_id, self.year)
    }
}

/// Column-named numeric matrix with label encodings and per-row keys.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    column_names: Vec<String>,
    rows: Array2<f64>,
    encodings: BTreeMap<String, Vec<String>>,
    row_keys: Vec<RowKey>,
}

impl DataTable {
    pub fn new(
        column_names: Vec<String>,
        rows: Array2<f64>,
        encodings: BTreeMap<String, Vec<String>>,
        row_keys: Vec<RowKey>,
    ) -> Result<Self> {
        if rows.ncols() != column_names.len() {
            return Err(Error::DimensionMismatch {
                expected: column_names.len(),
                actual: rows.ncols(),
            });
        }
        if row_keys.len() != rows.nrows() {
            return Err(Error::Argument(format!(
                "{} row keys for {} rows",
                row_keys.len(),
                rows.nrows()
            )));
        }
        for (name, labels) in &encodings {
            let idx = column_names
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::Schema(format!("encoding for unknown column `{name}`")))?;
            for &v in rows.column(idx) {
                if v.is_nan() {
                    continue;
                }
                if v < 0.0 || v.fract() != 0.0 || v as usize >= labels.len() {
                    return Err(Error::Schema(format!(
                        "value {v} is not a valid code for `{name}` ({} labels)",
                        labels.len()
                    )));
                }
            }
        }
        Ok(DataTable {
            column_names,
            rows,
            encodings,
            row_keys,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.rows.ncols()
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn encodings(&self) -> &BTreeMap<String, Vec<String>> {
        &self.encodings
    }

    pub fn row_keys(&self) -> &[RowKey] {
        &self.row_keys
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.column_names.iter().any(|c| c == name)
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.column_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::MissingColumns(vec![name.to_string()]))
    }

    pub fn column(&self, name: &str) -> Result<ArrayView1<'_, f64>> {
        Ok(self.rows.column(self.column_index(name)?))
    }

    /// Decoded label for a categorical code, if the column is encoded.
    pub fn label(&self, column: &str, code: f64) -> Option<&str> {
        let labels = self.encodings.get(column)?;
        if code.is_nan() || code < 0.0 {
            return None;
        }
        labels.get(code as usize).map(String::as_str)
    }

    /// Replaces (or appends) a column. Used by flood tagging.
    pub fn with_column(&self, name: &str, values: Array1<f64>) -> Result<DataTable> {
        if values.len() != self.n_rows() {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows(),
                actual: values.len(),
            });
        }
        let mut out = self.clone();
        match self.column_names.iter().position(|c| c == name) {
            Some(idx) => out.rows.column_mut(idx).assign(&values),
            None => {
                out.rows.push_column(values.view()).expect("row count checked");
                out.column_names.push(name.to_string());
            }
        }
        Ok(out)
    }

    /// Row subset in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> DataTable {
        DataTable {
            column_names: self.column_names.clone(),
            rows: self.rows.select(Axis(0), indices),
            encodings: self.encodings.clone(),
            row_keys: indices.iter().map(|&i| self.row_keys[i].clone()).collect(),
        }
    }

    /// Column subset in the given order; encodings follow their columns.
    pub fn select_columns(&self, names: &[String]) -> Result<DataTable> {
        let idx = self.column_indices(names)?;
        let encodings = self
            .encodings
            .iter()
            .filter(|(k, _)| names.contains(k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Ok(DataTable {
            column_names: names.to_vec(),
            rows: self.rows.select(Axis(1), &idx),
            encodings,
            row_keys: self.row_keys.clone(),
        })
    }

    pub fn column_indices(&self, names: &[String]) -> Result<Vec<usize>> {
        let missing: Vec<String> = names
            .iter()
            .filter(|n| !self.has_column(n))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingColumns(missing));
        }
        Ok(names
            .iter()
            .map(|n| self.column_index(n).expect("checked above"))
            .collect())
    }

    /// Feature matrix and target vector for model fitting.
    pub fn features_and_target(
        &self,
        features: &[String],
        target: &str,
    ) -> Result<(Array2<f64>, Array1<f64>)> {
        let idx = self.column_indices(features)?;
        let t = self.column_index(target)?;
        Ok((
            self.rows.select(Axis(1), &idx),
            self.rows.column(t).to_owned(),
        ))
    }
}

/// Builds the table [`load_csv`] would produce for these records under
/// [`Schema::records`].
pub fn records_to_table(records: &[SectionYearRecord]) -> Result<DataTable> {
    let mut names: Vec<String> = FEATURES.iter().map(|s| s.to_string()).collect();
    names.push(NEXT_YEAR_IRI.to_string());
    let zones: Vec<Option<String>> = records
        .iter()
        .map(|r| Some(r.climate_zone.clone()))
        .collect();
    let (labels, codes) = encode_first_appearance(&zones);
    let mut rows = Array2::<f64>::zeros((records.len(), names.len()));
    for (i, r) in records.iter().enumerate() {
        let vals = [
            r.condition_score,
            r.distress_score,
            r.iri_average,
            r.truck_aadt_pct,
            r.current_18kip,
            r.pavement_type_code as f64,
            codes[i],
            r.rural_urban_code as f64,
            r.flood as f64,
            r.next_year_iri.unwrap_or(f64::NAN),
        ];
        rows.row_mut(i).assign(&ArrayView1::from(&vals[..]));
    }
    let keys = records
        .iter()
        .map(|r| RowKey {
            route_name: r.route_name.clone(),
            section_id: r.section_id.clone(),
            year: r.year,
        })
        .collect();
    DataTable::new(names, rows, BTreeMap::from([(CLIMATE_ZONES.to_string(), labels)]), keys)
}

pub fn write_records(records: &[SectionYearRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in records {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
    }
    write_atomic(path.as_ref(), &buf)
}

fn encode_first_appearance(values: &[Option<String>]) -> (Vec<String>, Vec<f64>) {
    let mut labels: Vec<String> = Vec::new();
    let codes = values
        .iter()
        .map(|v| match v {
            None => f64::NAN,
            Some(s) => match labels.iter().position(|l| l == s) {
                Some(i) => i as f64,
                None => {
                    labels.push(s.clone());
                    (labels.len() - 1) as f64
                }
            },
        })
        .collect();
    (labels, codes)
}

fn parse_numeric(cell: &str) -> f64 {
    let t = cell.trim();
    if t.is_empty() {
        return f64::NAN;
    }
    t.parse::<f64>().unwrap_or(f64::NAN)
}

/// Reads a records CSV. Key columns are always required; schema columns
/// flagged `required` must be present, optional ones are skipped when absent.
/// Unparseable or empty numeric cells become `NaN`.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<DataTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(file);
    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);

    let mut missing = Vec::new();
    let mut key_idx = [0usize; 3];
    for (slot, key) in key_idx.iter_mut().zip([ROUTE_NAME, SECTION_ID, YEAR]) {
        match find(key) {
            Some(i) => *slot = i,
            None => missing.push(key.to_string()),
        }
    }
    let mut present = Vec::new();
    for spec in &schema.columns {
        match find(&spec.name) {
            Some(i) => present.push((spec, i)),
            None if spec.required => missing.push(spec.name.clone()),
            None => {}
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingColumns(missing));
    }

    let mut keys = Vec::new();
    let mut numeric: Vec<Vec<f64>> = vec![Vec::new(); present.len()];
    let mut categorical: Vec<Vec<Option<String>>> = vec![Vec::new(); present.len()];
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let year_cell = record.get(key_idx[2]).unwrap_or("").trim();
        let year = year_cell.parse::<i32>().map_err(|_| {
            Error::Schema(format!(
                "row {}: YEAR `{year_cell}` is not an integer",
                line + 2
            ))
        })?;
        keys.push(RowKey {
            route_name: record.get(key_idx[0]).unwrap_or("").trim().to_string(),
            section_id: record.get(key_idx[1]).unwrap_or("").trim().to_string(),
            year,
        });
        for (c, (spec, i)) in present.iter().enumerate() {
            let cell = record.get(*i).unwrap_or("");
            match spec.kind {
                ColumnKind::Numeric => numeric[c].push(parse_numeric(cell)),
                ColumnKind::Categorical => {
                    let t = cell.trim();
                    categorical[c].push((!t.is_empty()).then(|| t.to_string()));
                }
            }
        }
    }

    let n = keys.len();
    let mut rows = Array2::<f64>::zeros((n, present.len()));
    let mut encodings = BTreeMap::new();
    for (c, (spec, _)) in present.iter().enumerate() {
        let col = match spec.kind {
            ColumnKind::Numeric => std::mem::take(&mut numeric[c]),
            ColumnKind::Categorical => {
                let (labels, codes) = encode_first_appearance(&categorical[c]);
                encodings.insert(spec.name.clone(), labels);
                codes
            }
        };
        rows.column_mut(c).assign(&Array1::from(col));
    }
    let names = present.iter().map(|(s, _)| s.name.clone()).collect();
    DataTable::new(names, rows, encodings, keys)
}

fn format_cell(table: &DataTable, column: &str, v: f64) -> String {
    if v.is_nan() {
        return String::new();
    }
    match table.label(column, v) {
        Some(label) => label.to_string(),
        None => format!("{v}"),
    }
}

/// Writes a table in the same layout [`load_csv`] reads. Numbers use the
/// shortest round-trip representation.
pub fn write_csv(table: &DataTable, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let mut header = vec![ROUTE_NAME.to_string(), SECTION_ID.to_string(), YEAR.to_string()];
        header.extend(table.column_names.iter().cloned());
        w.write_record(&header)?;
        for (key, row) in table.row_keys.iter().zip(table.rows.rows()) {
            let mut rec = vec![key.route_name.clone(), key.section_id.clone(), key.year.to_string()];
            for (name, &v) in table.column_names.iter().zip(row.iter()) {
                rec.push(format_cell(table, name, v));
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
    }
    write_atomic(path.as_ref(), &buf)
}

/// Writes via a sibling temp file and rename so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    {
        let mut f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Rows with no missing value in any `required` column, order preserved.
pub fn filter_complete(table: &DataTable, required: &[String]) -> Result<DataTable> {
    let idx = table.column_indices(required)?;
    let keep: Vec<usize> = (0..table.n_rows())
        .filter(|&r| idx.iter().all(|&c| !table.rows[[r, c]].is_nan()))
        .collect();
    Ok(table.select_rows(&keep))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub name: String,
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub q25: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub n_rows: usize,
    pub columns: Vec<ColumnStats>,
}

impl DescriptiveStats {
    pub fn get(&self, name: &str) -> Option<&ColumnStats> {
        self.columns.iter().find(|c| c.name == name)
    }
}

/// Percentile (`p` in `[0, 1]`) by linear interpolation between closest
/// ranks on sorted data.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
pub(crate) fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Mean, sample std dev, min, 25th percentile and max of every column.
pub fn describe(table: &DataTable) -> Result<DescriptiveStats> {
    if table.n_rows() < 2 {
        return Err(Error::InsufficientData(format!(
            "describe needs at least 2 rows, got {}",
            table.n_rows()
        )));
    }
    let columns = table
        .column_names
        .iter()
        .zip(table.rows.columns())
        .map(|(name, col)| {
            if col.iter().any(|v| v.is_nan()) {
                return Err(Error::Argument(format!(
                    "column `{name}` has missing values; filter first"
                )));
            }
            // Sorting first makes the sums independent of row order.
            let sorted = sorted_copy(&col.to_vec());
            Ok(ColumnStats {
                name: name.clone(),
                mean: mean(&sorted),
                std_dev: sample_std(&sorted),
                min: sorted[0],
                q25: percentile_sorted(&sorted, 0.25),
                max: sorted[sorted.len() - 1],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DescriptiveStats {
        n_rows: table.n_rows(),
        columns,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

/// Pearson product-moment correlation between the named columns.
pub fn pearson_corr(table: &DataTable, columns: &[String]) -> Result<CorrelationMatrix> {
    if table.n_rows() < 2 {
        return Err(Error::InsufficientData(format!(
            "correlation needs at least 2 rows, got {}",
            table.n_rows()
        )));
    }
    let idx = table.column_indices(columns)?;
    let n = table.n_rows() as f64;
    let centered: Vec<Vec<f64>> = idx
        .iter()
        .map(|&c| {
            let col = table.rows.column(c);
            let m = col.sum() / n;
            col.iter().map(|v| v - m).collect()
        })
        .collect();
    let norms: Vec<f64> = centered
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    for (name, &norm) in columns.iter().zip(&norms) {
        if !(norm > 0.0) {
            return Err(Error::UndefinedCorrelation(name.clone()));
        }
    }
    let k = columns.len();
    let mut values = vec![vec![0.0; k]; k];
    for i in 0..k {
        values[i][i] = 1.0;
        for j in (i + 1)..k {
            let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
            let r = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        labels: columns.to_vec(),
        values,
    })
}

/// Seeded random partition into `(train, test)`; `test` holds
/// `round(test_fraction * n)` rows (clamped so both sides are non-empty).
/// Each side keeps the original row order.
pub fn train_test_split(
    table: &DataTable,
    test_fraction: f64,
    seed: u64,
) -> Result<(DataTable, DataTable)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Argument(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = table.n_rows();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "split needs at least 2 rows, got {n}"
        )));
    }
    let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    let mut test: Vec<usize> = order[..n_test].to_vec();
    let mut train: Vec<usize> = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((table.select_rows(&train), table.select_rows(&test)))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use ndarray::array;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn header() -> String {
        let mut cols = vec![ROUTE_NAME, SECTION_ID, YEAR];
        cols.extend(FEATURES);
        cols.join(",")
    }

    pub(crate) fn numeric_table(names: &[&str], rows: Array2<f64>) -> DataTable {
        let keys = (0..rows.nrows())
            .map(|i| RowKey {
                route_name: "R".into(),
                section_id: format!("S{i:03}"),
                year: 2010,
            })
            .collect();
        DataTable::new(
            names.iter().map(|s| s.to_string()).collect(),
            rows,
            BTreeMap::new(),
            keys,
        )
        .unwrap()
    }

    #[test]
    fn load_three_rows_with_first_appearance_encoding() {
        let csv = format!(
            "{}\n\
             FM0481,001,2014,90,95,100,17.5,1000,5,east,1,1\n\
             FM0481,002,2014,91,96,110,17.5,1000,5,west,1,0\n\
             FM0481,003,2014,92,97,,17.5,1000,5,east,1,0\n",
            header()
        );
        let f = write_tmp(&csv);
        let t = load_csv(f.path(), &Schema::records()).unwrap();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.n_cols(), 9);
        assert_eq!(t.encodings()[CLIMATE_ZONES], vec!["east", "west"]);
        assert_eq!(t.column(CLIMATE_ZONES).unwrap().to_vec(), vec![0.0, 1.0, 0.0]);
        assert!(t.column(IRI_AVERAGE).unwrap()[2].is_nan());
        assert!(!t.has_column(NEXT_YEAR_IRI));
        assert_eq!(t.row_keys()[1].section_id, "002");
    }

    #[test]
    fn missing_flood_column_is_named() {
        let h = header().replace(",Flood", "");
        let f = write_tmp(&format!("{h}\nFM0481,001,2014,90,95,100,17.5,1000,5,east,1\n"));
        match load_csv(f.path(), &Schema::records()) {
            Err(Error::MissingColumns(cols)) => assert_eq!(cols, vec!["Flood".to_string()]),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn unreadable_file_is_io_error() {
        let err = load_csv("/nonexistent/records.csv", &Schema::records()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn filter_complete_cases() {
        let mut rows = Array2::from_elem((10, 2), 1.0);
        rows[[3, 0]] = f64::NAN;
        rows[[7, 0]] = f64::NAN;
        rows[[5, 1]] = f64::NAN;
        let t = numeric_table(&["iri", "other"], rows);
        let f = filter_complete(&t, &["iri".to_string()]).unwrap();
        assert_eq!(f.n_rows(), 8);
        assert_eq!(f.row_keys()[3].section_id, "S004");
        assert_eq!(filter_complete(&t, &[]).unwrap().row_keys(), t.row_keys());

        let all_missing = numeric_table(&["iri"], Array2::from_elem((4, 1), f64::NAN));
        assert_eq!(filter_complete(&all_missing, &["iri".into()]).unwrap().n_rows(), 0);
        assert!(matches!(
            filter_complete(&t, &["nope".into()]),
            Err(Error::MissingColumns(_))
        ));
    }

    #[test]
    fn describe_hand_values() {
        let t = numeric_table(&["x", "c"], array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0], [4.0, 5.0]]);
        let s = describe(&t).unwrap();
        let x = s.get("x").unwrap();
        assert_eq!(x.mean, 2.5);
        assert_eq!(x.min, 1.0);
        assert_eq!(x.max, 4.0);
        assert!((x.q25 - 1.75).abs() < 1e-12);
        assert!((x.std_dev - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(s.get("c").unwrap().std_dev, 0.0);
    }

    #[test]
    fn describe_needs_two_rows() {
        let t = numeric_table(&["x"], array![[1.0]]);
        assert!(matches!(describe(&t), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn pearson_fixtures() {
        let t = numeric_table(
            &["x", "y", "inv", "z"],
            array![[1.0, 1.0, 4.0, 3.0], [2.0, 3.0, 3.0, 5.0], [3.0, 2.0, 2.0, 7.0], [4.0, 4.0, 1.0, 9.0]],
        );
        let names: Vec<String> = ["x", "y", "inv", "z"].iter().map(|s| s.to_string()).collect();
        let c = pearson_corr(&t, &names).unwrap();
        assert!((c.values[0][1] - 0.8).abs() < 1e-12);
        assert!((c.values[0][2] + 1.0).abs() < 1e-12);
        assert!((c.values[0][3] - 1.0).abs() < 1e-12);
        for i in 0..4 {
            assert_eq!(c.values[i][i], 1.0);
            for j in 0..4 {
                assert_eq!(c.values[i][j], c.values[j][i]);
            }
        }
        let flat = numeric_table(&["x", "k"], array![[1.0, 2.0], [2.0, 2.0]]);
        match pearson_corr(&flat, &["x".into(), "k".into()]) {
            Err(Error::UndefinedCorrelation(c)) => assert_eq!(c, "k"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn split_sizes_and_partition() {
        let rows = Array2::from_shape_fn((5, 1), |(i, _)| i as f64);
        let t = numeric_table(&["x"], rows);
        let (train, test) = train_test_split(&t, 0.2, 3).unwrap();
        assert_eq!((train.n_rows(), test.n_rows()), (4, 1));
        let mut all: Vec<_> = train.row_keys().iter().chain(test.row_keys()).cloned().collect();
        all.sort();
        assert_eq!(all, t.row_keys().to_vec());
        assert_eq!(train_test_split(&t, 0.2, 3).unwrap(), (train, test));
        assert!(matches!(train_test_split(&t, 1.0, 3), Err(Error::Argument(_))));
        assert!(matches!(train_test_split(&t, 0.0, 3), Err(Error::Argument(_))));

        let big = numeric_table(&["x"], Array2::zeros((10_022, 1)));
        let (tr, te) = train_test_split(&big, 0.2, 1).unwrap();
        assert_eq!((tr.n_rows(), te.n_rows()), (8_018, 2_004));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn describe_is_permutation_invariant(
                mut v in prop::collection::vec(-1e3f64..1e3, 2..40),
                seed in any::<u64>(),
            ) {
                let a = numeric_table(&["x"], Array2::from_shape_vec((v.len(), 1), v.clone()).unwrap());
                v.shuffle(&mut seed::rng(seed));
                let b = numeric_table(&["x"], Array2::from_shape_vec((v.len(), 1), v).unwrap());
                prop_assert_eq!(describe(&a).unwrap(), describe(&b).unwrap());
            }

            #[test]
            fn pearson_of_affine_map_is_unit(
                v in prop::collection::vec(-1e3f64..1e3, 3..40),
                a in prop_oneof![0.01f64..100.0, -100.0f64..-0.01],
                b in -100.0f64..100.0,
            ) {
                let spread = v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
                prop_assume!(spread > 1e-3);
                let rows = Array2::from_shape_fn((v.len(), 2), |(i, j)| if j == 0 { v[i] } else { a * v[i] + b });
                let t = numeric_table(&["x", "y"], rows);
                let c = pearson_corr(&t, &["x".into(), "y".into()]).unwrap();
                prop_assert!((c.values[0][1] - a.signum()).abs() < 1e-12);
            }

            #[test]
            fn split_is_a_partition(n in 2usize..300, frac in 0.05f64..0.95, seed in any::<u64>()) {
                let t = numeric_table(&["x"], Array2::from_shape_fn((n, 1), |(i, _)| i as f64));
                let (train, test) = train_test_split(&t, frac, seed).unwrap();
                prop_assert_eq!(train.n_rows() + test.n_rows(), n);
                let mut seen: Vec<f64> = train.rows().column(0).iter().chain(test.rows().column(0).iter()).cloned().collect();
                seen.sort_by(f64::total_cmp);
                prop_assert_eq!(seen, (0..n).map(|i| i as f64).collect::<Vec<_>>());
            }
        }
    }
}
