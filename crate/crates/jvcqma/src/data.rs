//! CSV ingestion, column schemas, and train-statistics standardization.
//!
//! The CSV dialect is fixed: comma separator, '.' decimal point, required
//! header, no quoting, UTF-8. Row order is never permuted by I/O.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnRole {
    Response,
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub role: ColumnRole,
    #[serde(default)]
    pub standardize: bool,
}

/// The housing-data schema bundled with the crate: ten continuous
/// covariates (standardized), three discrete, MEDV response.
pub fn boston_schema() -> Vec<ColumnSchema> {
    serde_json::from_str(include_str!("../schemas/boston.json"))
        .expect("bundled schema parses")
}

pub fn load_schema(path: &Path) -> Result<Vec<ColumnSchema>> {
    let text = std::fs::read_to_string(path)?;
    let schema: Vec<ColumnSchema> = serde_json::from_str(&text)?;
    validate_schema(&schema)?;
    Ok(schema)
}

pub fn validate_schema(schema: &[ColumnSchema]) -> Result<()> {
    let responses = schema
        .iter()
        .filter(|c| c.role == ColumnRole::Response)
        .count();
    if responses != 1 {
        return Err(Error::BadResponseCount(responses));
    }
    if !schema.iter().any(|c| c.role == ColumnRole::Continuous) {
        return Err(Error::NoContinuousColumns);
    }
    for c in schema {
        if c.standardize && c.role != ColumnRole::Continuous {
            return Err(Error::StandardizationMismatch(format!(
                "column {:?} is not continuous and cannot be standardized",
                c.name
            )));
        }
    }
    Ok(())
}

/// Load a CSV whose header matches the schema names in order. Returns the
/// dataset with covariate columns in file order (response removed) and the
/// continuous/discrete partition taken from the schema.
pub fn load_csv(path: &Path, schema: &[ColumnSchema]) -> Result<Dataset> {
    validate_schema(schema)?;
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, schema, &path.display().to_string())
}

fn parse_csv(text: &str, schema: &[ColumnSchema], origin: &str) -> Result<Dataset> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::EmptyCsv(origin.into()))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    for col in schema {
        if !names.contains(&col.name.as_str()) {
            return Err(Error::MissingColumn(col.name.clone()));
        }
    }
    if names.len() != schema.len() {
        return Err(Error::HeaderMismatch {
            expected: schema.iter().map(|c| c.name.clone()).collect::<Vec<_>>().join(","),
            got: names.join(","),
        });
    }
    for (got, want) in names.iter().zip(schema) {
        if *got != want.name {
            return Err(Error::HeaderMismatch {
                expected: want.name.clone(),
                got: (*got).to_string(),
            });
        }
    }

    let response_pos = schema
        .iter()
        .position(|c| c.role == ColumnRole::Response)
        .expect("validated schema has a response");
    let covariate_pos: Vec<usize> = (0..schema.len()).filter(|&j| j != response_pos).collect();

    let mut y = Vec::new();
    let mut data = Vec::new();
    for (row_idx, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != schema.len() {
            return Err(Error::HeaderMismatch {
                expected: format!("{} cells", schema.len()),
                got: format!("{} cells in data row {}", cells.len(), row_idx + 1),
            });
        }
        let parse = |j: usize| -> Result<f64> {
            cells[j].parse::<f64>().map_err(|_| Error::NonNumericCell {
                row: row_idx + 1,
                column: schema[j].name.clone(),
                value: cells[j].to_string(),
            })
        };
        y.push(parse(response_pos)?);
        for &j in &covariate_pos {
            data.push(parse(j)?);
        }
    }
    if y.is_empty() {
        return Err(Error::EmptyCsv(origin.into()));
    }

    let mut continuous = Vec::new();
    let mut discrete = Vec::new();
    for (k, &j) in covariate_pos.iter().enumerate() {
        match schema[j].role {
            ColumnRole::Continuous => continuous.push(k),
            ColumnRole::Discrete => discrete.push(k),
            ColumnRole::Response => unreachable!(),
        }
    }
    let n = y.len();
    let cols = covariate_pos.len();
    Dataset::new(y, Mat::from_vec(n, cols, data), continuous, discrete)
}

/// Write a dataset back out under the given schema (column order preserved).
/// Numbers print in shortest round-trip form, so load -> save is bit-exact.
pub fn save_csv(path: &Path, data: &Dataset, schema: &[ColumnSchema]) -> Result<()> {
    validate_schema(schema)?;
    let response_pos = schema
        .iter()
        .position(|c| c.role == ColumnRole::Response)
        .expect("validated schema has a response");
    let mut out = String::new();
    let names: Vec<&str> = schema.iter().map(|c| c.name.as_str()).collect();
    out.push_str(&names.join(","));
    out.push('\n');
    for i in 0..data.n() {
        let mut cells: Vec<String> = Vec::with_capacity(schema.len());
        let mut cov = 0usize;
        for j in 0..schema.len() {
            if j == response_pos {
                cells.push(format_float(data.y()[i]));
            } else {
                cells.push(format_float(data.x().get(i, cov)));
                cov += 1;
            }
        }
        let _ = writeln!(out, "{}", cells.join(","));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn format_float(v: f64) -> String {
    format!("{v}")
}

/// Minimal column schema for a simulated dataset: y plus x1..x{p+q}.
pub fn simulated_schema(data: &Dataset) -> Vec<ColumnSchema> {
    let mut schema = vec![ColumnSchema {
        name: "y".into(),
        role: ColumnRole::Response,
        standardize: false,
    }];
    for j in 0..data.num_covariates() {
        schema.push(ColumnSchema {
            name: format!("x{}", j + 1),
            role: if data.continuous_cols().contains(&j) {
                ColumnRole::Continuous
            } else {
                ColumnRole::Discrete
            },
            standardize: false,
        });
    }
    schema
}

/// Training-set statistics of each standardized column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StandardizationRecord {
    pub num_covariates: usize,
    pub entries: Vec<StandardizationEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StandardizationEntry {
    /// Covariate column index (response excluded).
    pub col: usize,
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

/// Transform flagged continuous covariates to mean zero and variance one
/// (population convention, divisor n). Response and discrete columns stay
/// untouched. Returns the transformed data and the record needed to apply
/// the identical transform to test or query data.
pub fn standardize(data: &Dataset, schema: &[ColumnSchema]) -> Result<(Dataset, StandardizationRecord)> {
    validate_schema(schema)?;
    let covariates: Vec<&ColumnSchema> = schema
        .iter()
        .filter(|c| c.role != ColumnRole::Response)
        .collect();
    if covariates.len() != data.num_covariates() {
        return Err(Error::StandardizationMismatch(format!(
            "schema lists {} covariates, dataset has {}",
            covariates.len(),
            data.num_covariates()
        )));
    }
    let n = data.n();
    let mut entries = Vec::new();
    for (col, schema_col) in covariates.iter().enumerate() {
        if !schema_col.standardize {
            continue;
        }
        let mean = (0..n).map(|i| data.x().get(i, col)).sum::<f64>() / n as f64;
        let var = (0..n)
            .map(|i| (data.x().get(i, col) - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        let sd = var.sqrt();
        if sd == 0.0 {
            return Err(Error::ZeroVariance(schema_col.name.clone()));
        }
        entries.push(StandardizationEntry {
            col,
            name: schema_col.name.clone(),
            mean,
            sd,
        });
    }
    let record = StandardizationRecord {
        num_covariates: data.num_covariates(),
        entries,
    };
    let transformed = apply_standardization(data, &record)?;
    Ok((transformed, record))
}

/// Apply training statistics to another dataset: (x - mean) / sd.
pub fn apply_standardization(data: &Dataset, record: &StandardizationRecord) -> Result<Dataset> {
    if data.num_covariates() != record.num_covariates {
        return Err(Error::StandardizationMismatch(format!(
            "record built for {} covariates, dataset has {}",
            record.num_covariates,
            data.num_covariates()
        )));
    }
    let x = apply_standardization_matrix(data.x(), record)?;
    Dataset::new(
        data.y().to_vec(),
        x,
        data.continuous_cols().to_vec(),
        data.discrete_cols().to_vec(),
    )
}

/// Same transform for a bare query matrix.
pub fn apply_standardization_matrix(x: &Mat, record: &StandardizationRecord) -> Result<Mat> {
    if x.cols() != record.num_covariates {
        return Err(Error::StandardizationMismatch(format!(
            "record built for {} covariates, matrix has {}",
            record.num_covariates,
            x.cols()
        )));
    }
    let mut out = x.clone();
    for e in &record.entries {
        if e.col >= x.cols() {
            return Err(Error::StandardizationMismatch(format!(
                "record column {} out of range",
                e.col
            )));
        }
        for i in 0..out.rows() {
            let v = (out.get(i, e.col) - e.mean) / e.sd;
            out.set(i, e.col, v);
        }
    }
    Ok(out)
}

/// FNV-1a content hash, hex-encoded; used to detect stale model inputs.
pub fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

pub fn file_hash(path: &Path) -> Result<String> {
    Ok(fnv1a_hex(&std::fs::read(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_schema() -> Vec<ColumnSchema> {
        vec![
            ColumnSchema {
                name: "y".into(),
                role: ColumnRole::Response,
                standardize: false,
            },
            ColumnSchema {
                name: "a".into(),
                role: ColumnRole::Continuous,
                standardize: true,
            },
            ColumnSchema {
                name: "d".into(),
                role: ColumnRole::Discrete,
                standardize: false,
            },
        ]
    }

    #[test]
    fn parse_and_partition() {
        let csv = "y,a,d\n1.5,0.25,1\n-2.0,0.75,0\n0.5,1.25,1\n";
        let data = parse_csv(csv, &toy_schema(), "test").unwrap();
        assert_eq!(data.n(), 3);
        assert_eq!(data.num_covariates(), 2);
        assert_eq!(data.continuous_cols(), &[0]);
        assert_eq!(data.discrete_cols(), &[1]);
        assert_eq!(data.y(), &[1.5, -2.0, 0.5]);
        assert_eq!(data.x().get(1, 0), 0.75);
    }

    #[test]
    fn non_numeric_cell_names_row_and_column() {
        let csv = "y,a,d\n1.0,0.5,0\n2.0,oops,1\n";
        let err = parse_csv(csv, &toy_schema(), "test").unwrap_err();
        match err {
            Error::NonNumericCell { row, column, value } => {
                assert_eq!(row, 2);
                assert_eq!(column, "a");
                assert_eq!(value, "oops");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn missing_column_and_empty_file() {
        let err = parse_csv("y,a\n1,2\n", &toy_schema(), "test").unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "d"));
        assert!(matches!(
            parse_csv("", &toy_schema(), "test").unwrap_err(),
            Error::EmptyCsv(_)
        ));
    }

    #[test]
    fn csv_roundtrip_bit_exact() {
        let csv = "y,a,d\n1.5,0.1234567890123456,1\n-2.25,3.5e-7,0\n";
        let data = parse_csv(csv, &toy_schema(), "test").unwrap();
        let dir = std::env::temp_dir().join("jvcqma_csv_roundtrip");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("toy.csv");
        save_csv(&path, &data, &toy_schema()).unwrap();
        let again = load_csv(&path, &toy_schema()).unwrap();
        assert_eq!(data.y(), again.y());
        assert_eq!(data.x().data(), again.x().data());
    }

    #[test]
    fn boston_schema_shape() {
        let schema = boston_schema();
        assert_eq!(schema.len(), 14);
        validate_schema(&schema).unwrap();
        let continuous = schema
            .iter()
            .filter(|c| c.role == ColumnRole::Continuous)
            .count();
        let discrete = schema
            .iter()
            .filter(|c| c.role == ColumnRole::Discrete)
            .count();
        assert_eq!(continuous, 10);
        assert_eq!(discrete, 3);
        // the continuous columns in order carry the index numbering
        let names: Vec<&str> = schema
            .iter()
            .filter(|c| c.role == ColumnRole::Continuous)
            .map(|c| c.name.as_str())
            .collect();
        assert_eq!(
            names,
            ["CRIM", "INDUS", "NOX", "RM", "AGE", "DIS", "TAX", "PTRATIO", "B", "LSTAT"]
        );
    }

    #[test]
    fn standardize_and_apply() {
        let csv = "y,a,d\n1.0,2.0,0\n2.0,4.0,1\n3.0,6.0,0\n4.0,8.0,1\n";
        let data = parse_csv(csv, &toy_schema(), "test").unwrap();
        let (std_data, record) = standardize(&data, &toy_schema()).unwrap();
        // mean 5, population sd sqrt(5)
        let col: Vec<f64> = (0..4).map(|i| std_data.x().get(i, 0)).collect();
        let mean: f64 = col.iter().sum::<f64>() / 4.0;
        let var: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-10);
        // discrete column untouched
        assert_eq!(std_data.x().get(1, 1), 1.0);
        // response untouched
        assert_eq!(std_data.y(), data.y());

        // applying the record to the raw data reproduces standardize output
        let applied = apply_standardization(&data, &record).unwrap();
        assert_eq!(applied.x().data(), std_data.x().data());

        // identity record
        let identity = StandardizationRecord {
            num_covariates: 2,
            entries: vec![StandardizationEntry {
                col: 0,
                name: "a".into(),
                mean: 0.0,
                sd: 1.0,
            }],
        };
        let same = apply_standardization(&data, &identity).unwrap();
        assert_eq!(same.x().data(), data.x().data());

        // de-standardizing recovers raw values
        let e = &record.entries[0];
        for i in 0..4 {
            let back = std_data.x().get(i, 0) * e.sd + e.mean;
            assert!((back - data.x().get(i, 0)).abs() < 1e-10);
        }
    }

    #[test]
    fn standardize_is_idempotent_on_standardized_input() {
        let csv = "y,a,d\n1.0,2.0,0\n2.0,4.0,1\n3.0,6.0,0\n4.0,9.0,1\n";
        let data = parse_csv(csv, &toy_schema(), "test").unwrap();
        let (once, _) = standardize(&data, &toy_schema()).unwrap();
        let (twice, _) = standardize(&once, &toy_schema()).unwrap();
        for (a, b) in once.x().data().iter().zip(twice.x().data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_column_rejected() {
        let csv = "y,a,d\n1.0,3.0,0\n2.0,3.0,1\n3.0,3.0,0\n";
        let data = parse_csv(csv, &toy_schema(), "test").unwrap();
        let err = standardize(&data, &toy_schema()).unwrap_err();
        assert!(matches!(err, Error::ZeroVariance(c) if c == "a"));
    }

    #[test]
    fn hand_computed_three_row_transform() {
        let record = StandardizationRecord {
            num_covariates: 1,
            entries: vec![StandardizationEntry {
                col: 0,
                name: "a".into(),
                mean: 2.0,
                sd: 0.5,
            }],
        };
        let x = Mat::from_vec(3, 1, vec![1.0, 2.0, 3.5]);
        let out = apply_standardization_matrix(&x, &record).unwrap();
        assert_eq!(out.data(), &[-2.0, 0.0, 3.0]);
    }

    #[test]
    fn apply_rejects_mismatched_shapes() {
        let record = StandardizationRecord {
            num_covariates: 3,
            entries: vec![],
        };
        let x = Mat::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(
            apply_standardization_matrix(&x, &record).unwrap_err(),
            Error::StandardizationMismatch(_)
        ));
    }

    #[test]
    fn fnv_hash_stable() {
        assert_eq!(fnv1a_hex(b""), "cbf29ce484222325");
        assert_eq!(fnv1a_hex(b"a"), fnv1a_hex(b"a"));
        assert_ne!(fnv1a_hex(b"a"), fnv1a_hex(b"b"));
    }
}
