//! Tabular data ingestion and design-matrix construction.
//!
//! CSV input is RFC 4180 with a mandatory header row, UTF-8, all cells
//! numeric. The missing-value markers are exactly `""`, `"NA"`, and `"NaN"`
//! (case-sensitive); rows containing one are either deleted listwise
//! (`drop_missing`) or rejected.

use std::collections::HashSet;
use std::io::Read;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// A rectangular table of named numeric columns.
#[derive(Debug, Clone)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    n_rows: usize,
}

impl Dataset {
    /// Builds a dataset from `(name, values)` pairs, validating the type
    /// invariants: equal lengths, unique non-empty names, finite values.
    pub fn new(columns: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidSpec("dataset needs at least one column".into()));
        }
        let n_rows = columns[0].1.len();
        let mut seen = HashSet::new();
        for (name, values) in &columns {
            if name.is_empty() {
                return Err(Error::EmptyColumnName);
            }
            if !seen.insert(name.clone()) {
                return Err(Error::DuplicateColumn(name.clone()));
            }
            if values.len() != n_rows {
                return Err(Error::InvalidSpec(format!(
                    "column `{name}` has {} values, expected {n_rows}",
                    values.len()
                )));
            }
            if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    line: pos as u64 + 2,
                    column: name.clone(),
                    value: values[pos].to_string(),
                });
            }
        }
        if n_rows == 0 {
            return Err(Error::ZeroRows { dropped: 0 });
        }
        let (names, columns) = columns.into_iter().unzip();
        Ok(Dataset {
            names,
            columns,
            n_rows,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.column_index(name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// New dataset containing the given rows, in order (repeats allowed;
    /// this is what the case bootstrap resamples).
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        let columns = self
            .columns
            .iter()
            .map(|col| indices.iter().map(|&i| col[i]).collect())
            .collect();
        Dataset {
            names: self.names.clone(),
            columns,
            n_rows: indices.len(),
        }
    }
}

/// CSV load options. Listwise deletion is the only missing-data policy.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    pub drop_missing: bool,
}

/// A loaded dataset plus how many rows listwise deletion removed.
#[derive(Debug)]
pub struct CsvLoad {
    pub dataset: Dataset,
    pub rows_dropped: usize,
}

const MISSING_MARKERS: [&str; 3] = ["", "NA", "NaN"];

/// Reads an RFC 4180 CSV stream with a header row into a [`Dataset`].
pub fn load_csv<R: Read>(reader: R, options: &LoadOptions) -> Result<CsvLoad> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);

    let headers: Vec<String> = rdr
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut seen = HashSet::new();
    for h in &headers {
        if h.is_empty() {
            return Err(Error::EmptyColumnName);
        }
        if !seen.insert(h.clone()) {
            return Err(Error::DuplicateColumn(h.clone()));
        }
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    let mut dropped = 0usize;
    let mut row_buf: Vec<f64> = Vec::with_capacity(headers.len());

    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        row_buf.clear();
        let mut missing = false;
        for (j, cell) in record.iter().enumerate() {
            if MISSING_MARKERS.contains(&cell) {
                if options.drop_missing {
                    missing = true;
                    break;
                }
                return Err(Error::MissingValue {
                    line,
                    column: headers[j].clone(),
                });
            }
            let value: f64 = cell.parse().map_err(|_| Error::Csv {
                line,
                message: format!("cell `{cell}` in column `{}` is not a decimal number", headers[j]),
            })?;
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    line,
                    column: headers[j].clone(),
                    value: cell.to_string(),
                });
            }
            row_buf.push(value);
        }
        if missing {
            dropped += 1;
            continue;
        }
        for (col, &v) in columns.iter_mut().zip(row_buf.iter()) {
            col.push(v);
        }
    }

    if columns[0].is_empty() {
        return Err(Error::ZeroRows { dropped });
    }

    let dataset = Dataset::new(headers.into_iter().zip(columns).collect())?;
    Ok(CsvLoad {
        dataset,
        rows_dropped: dropped,
    })
}

fn csv_error(e: csv::Error) -> Error {
    let line = match e.position() {
        Some(p) => p.line(),
        None => 0,
    };
    Error::Csv {
        line,
        message: e.to_string(),
    }
}

/// Which columns play which role in the comparison of nested models. The
/// intercept is always present and not user-removable.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub response: String,
    pub focal: Vec<String>,
    pub covariates: Vec<String>,
}

impl ModelSpec {
    pub fn new(
        response: impl Into<String>,
        focal: Vec<String>,
        covariates: Vec<String>,
    ) -> Result<Self> {
        let spec = ModelSpec {
            response: response.into(),
            focal,
            covariates,
        };
        if spec.focal.is_empty() {
            return Err(Error::InvalidSpec("focal block B must be non-empty".into()));
        }
        let mut seen = HashSet::new();
        for name in spec.focal.iter().chain(&spec.covariates) {
            if !seen.insert(name.clone()) {
                return Err(Error::InvalidSpec(format!(
                    "column `{name}` appears twice across focal block and covariates"
                )));
            }
        }
        if seen.contains(&spec.response) {
            return Err(Error::InvalidSpec(format!(
                "response `{}` cannot also be a predictor",
                spec.response
            )));
        }
        Ok(spec)
    }

    /// Checks that every named column exists in `dataset`.
    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        for name in std::iter::once(&self.response)
            .chain(&self.focal)
            .chain(&self.covariates)
        {
            if dataset.column_index(name).is_none() {
                return Err(Error::UnknownColumn(name.clone()));
            }
        }
        Ok(())
    }

    /// Number of predictors in the full model, excluding the intercept.
    pub fn p_ab(&self) -> usize {
        self.focal.len() + self.covariates.len()
    }
}

/// A design matrix with its column names; the intercept is column 0.
#[derive(Debug, Clone)]
pub struct Design {
    pub names: Vec<String>,
    pub matrix: Matrix,
}

/// The reduced (A) and full (A + B) designs plus the response, all on the
/// same rows in source order.
#[derive(Debug)]
pub struct DesignPair {
    pub reduced: Design,
    pub full: Design,
    pub response: Vec<f64>,
}

pub const INTERCEPT_NAME: &str = "intercept";

/// Slices a dataset into the nested design matrices for `spec`. Column
/// order is deterministic: intercept, covariates in spec order, then the
/// focal block in spec order.
pub fn build_design(dataset: &Dataset, spec: &ModelSpec) -> Result<DesignPair> {
    spec.validate(dataset)?;
    let n = dataset.n_rows();
    let need = spec.p_ab() + 3;
    if n < need {
        return Err(Error::TooFewRows { need, got: n });
    }

    let mut names = vec![INTERCEPT_NAME.to_string()];
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
    for name in spec.covariates.iter().chain(&spec.focal) {
        let values = dataset.column(name)?;
        let first = values[0];
        if values.iter().all(|&v| v == first) {
            return Err(Error::ConstantColumn(name.clone()));
        }
        names.push(name.clone());
        cols.push(values.to_vec());
    }

    let reduced_cols = 1 + spec.covariates.len();
    let reduced = Design {
        names: names[..reduced_cols].to_vec(),
        matrix: Matrix::from_columns(&cols[..reduced_cols]),
    };
    let full = Design {
        names,
        matrix: Matrix::from_columns(&cols),
    };
    Ok(DesignPair {
        reduced,
        full,
        response: dataset.column(&spec.response)?.to_vec(),
    })
}

/// A dataset with one grouping column interpreted as cluster identifiers.
/// Group codes are the distinct numeric values of that column.
#[derive(Debug, Clone)]
pub struct GroupedDataset {
    base: Dataset,
    group_column: String,
    group_index: Vec<usize>,
    group_labels: Vec<f64>,
}

impl GroupedDataset {
    /// Groups rows by the exact values of `group_column`. Requires at least
    /// two distinct groups.
    pub fn from_column(base: Dataset, group_column: &str) -> Result<Self> {
        let values = base.column(group_column)?.to_vec();
        let mut labels: Vec<f64> = values.clone();
        labels.sort_by(|a, b| a.partial_cmp(b).unwrap());
        labels.dedup();
        if labels.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "group column `{group_column}` has fewer than 2 distinct groups"
            )));
        }
        let group_index = values
            .iter()
            .map(|v| labels.binary_search_by(|l| l.partial_cmp(v).unwrap()).unwrap())
            .collect();
        Ok(GroupedDataset {
            base,
            group_column: group_column.to_string(),
            group_index,
            group_labels: labels,
        })
    }

    pub fn base(&self) -> &Dataset {
        &self.base
    }

    pub fn group_column(&self) -> &str {
        &self.group_column
    }

    /// Group id (0-based, ordered by label value) for each row.
    pub fn group_index(&self) -> &[usize] {
        &self.group_index
    }

    pub fn n_groups(&self) -> usize {
        self.group_labels.len()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.n_groups()];
        for &g in &self.group_index {
            sizes[g] += 1;
        }
        sizes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(response: &str, focal: &[&str], covariates: &[&str]) -> ModelSpec {
        ModelSpec::new(
            response,
            focal.iter().map(|s| s.to_string()).collect(),
            covariates.iter().map(|s| s.to_string()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn load_csv_basic() {
        let src = "x,y\n1,2\n3,4\n";
        let load = load_csv(src.as_bytes(), &LoadOptions::default()).unwrap();
        assert_eq!(load.dataset.n_cols(), 2);
        assert_eq!(load.dataset.n_rows(), 2);
        assert_eq!(load.dataset.column("x").unwrap(), &[1.0, 3.0]);
        assert_eq!(load.rows_dropped, 0);
    }

    #[test]
    fn load_csv_missing_without_flag_is_error() {
        let src = "x,y\n1,NA\n";
        let err = load_csv(src.as_bytes(), &LoadOptions::default()).unwrap_err();
        match err {
            Error::MissingValue { column, .. } => assert_eq!(column, "y"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn load_csv_drop_missing_to_zero_rows() {
        let src = "x,y\n1,NA\n";
        let err = load_csv(src.as_bytes(), &LoadOptions { drop_missing: true }).unwrap_err();
        match err {
            Error::ZeroRows { dropped } => assert_eq!(dropped, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn load_csv_drop_missing_counts() {
        let src = "x,y\n1,2\n,3\n4,NaN\n5,6\n";
        let load = load_csv(src.as_bytes(), &LoadOptions { drop_missing: true }).unwrap();
        assert_eq!(load.rows_dropped, 2);
        assert_eq!(load.dataset.n_rows(), 2);
        assert_eq!(load.dataset.column("y").unwrap(), &[2.0, 6.0]);
    }

    #[test]
    fn load_csv_rejects_lowercase_na_and_inf() {
        assert!(load_csv("x\nna\n".as_bytes(), &LoadOptions::default()).is_err());
        assert!(load_csv("x\ninf\n".as_bytes(), &LoadOptions::default()).is_err());
        // "nan" parses as a float but is non-finite.
        assert!(load_csv("x\nnan\n".as_bytes(), &LoadOptions::default()).is_err());
    }

    #[test]
    fn load_csv_duplicate_header() {
        let err = load_csv("x,x\n1,2\n".as_bytes(), &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::DuplicateColumn(name) if name == "x"));
    }

    #[test]
    fn fixture_means_match_hand_sums() {
        // 6-row, 3-column fixture; column means computed by hand:
        // a: (1+2+3+4+5+6)/6 = 3.5
        // b: (2.5+0.5+4.0+1.0+3.0+1.0)/6 = 2.0
        // c: (10+20+30+40+50+60)/6 = 35
        let src = "a,b,c\n1,2.5,10\n2,0.5,20\n3,4.0,30\n4,1.0,40\n5,3.0,50\n6,1.0,60\n";
        let load = load_csv(src.as_bytes(), &LoadOptions::default()).unwrap();
        let mean = |name: &str| {
            let col = load.dataset.column(name).unwrap();
            col.iter().sum::<f64>() / col.len() as f64
        };
        assert!((mean("a") - 3.5).abs() < 1e-15);
        assert!((mean("b") - 2.0).abs() < 1e-15);
        assert!((mean("c") - 35.0).abs() < 1e-15);
    }

    #[test]
    fn build_design_shapes_and_order() {
        let data = Dataset::new(vec![
            ("y".into(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            ("x1".into(), vec![0.5, 1.0, 2.0, 3.0, 4.0, 5.5]),
            ("x2".into(), vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]),
        ])
        .unwrap();

        // B = [x1], A = [] -> reduced is intercept only, full is [1, x1].
        let pair = build_design(&data, &spec("y", &["x1"], &[])).unwrap();
        assert_eq!(pair.reduced.names, vec!["intercept"]);
        assert_eq!(pair.full.names, vec!["intercept", "x1"]);
        assert_eq!(pair.full.matrix.n_cols(), 2);

        // B = [x2], A = [x1] -> full has 3 columns in order (1, x1, x2).
        let pair = build_design(&data, &spec("y", &["x2"], &["x1"])).unwrap();
        assert_eq!(pair.full.names, vec!["intercept", "x1", "x2"]);
        assert_eq!(pair.reduced.names, vec!["intercept", "x1"]);
        // Nesting is structural: reduced columns are a prefix of full.
        assert_eq!(pair.full.matrix.column(1), pair.reduced.matrix.column(1));
    }

    #[test]
    fn build_design_rejects_constant_predictor() {
        let data = Dataset::new(vec![
            ("y".into(), vec![1.0, 2.0, 3.0, 4.0, 5.0]),
            ("x1".into(), vec![2.0; 5]),
        ])
        .unwrap();
        let err = build_design(&data, &spec("y", &["x1"], &[])).unwrap_err();
        assert!(matches!(err, Error::ConstantColumn(name) if name == "x1"));
    }

    #[test]
    fn build_design_too_few_rows() {
        let data = Dataset::new(vec![
            ("y".into(), vec![1.0, 2.0, 3.0]),
            ("x1".into(), vec![0.0, 1.0, 2.0]),
        ])
        .unwrap();
        let err = build_design(&data, &spec("y", &["x1"], &[])).unwrap_err();
        assert!(matches!(err, Error::TooFewRows { need: 4, got: 3 }));
    }

    #[test]
    fn spec_rejects_overlap_and_response_reuse() {
        assert!(ModelSpec::new("y", vec!["x".into()], vec!["x".into()]).is_err());
        assert!(ModelSpec::new("y", vec!["y".into()], vec![]).is_err());
        assert!(ModelSpec::new("y", vec![], vec!["x".into()]).is_err());
    }

    #[test]
    fn grouped_dataset_indexing() {
        let data = Dataset::new(vec![
            ("y".into(), vec![1.0, 2.0, 3.0, 4.0]),
            ("g".into(), vec![10.0, 20.0, 10.0, 20.0]),
        ])
        .unwrap();
        let grouped = GroupedDataset::from_column(data, "g").unwrap();
        assert_eq!(grouped.n_groups(), 2);
        assert_eq!(grouped.group_index(), &[0, 1, 0, 1]);
        assert_eq!(grouped.group_sizes(), vec![2, 2]);
    }

    #[test]
    fn grouped_dataset_needs_two_groups() {
        let data = Dataset::new(vec![
            ("y".into(), vec![1.0, 2.0]),
            ("g".into(), vec![1.0, 1.0]),
        ])
        .unwrap();
        assert!(GroupedDataset::from_column(data, "g").is_err());
    }
}
