//! CSV ingestion with column selection and missing-value accounting.

use crate::data::{ColumnRef, DatasetSpec, RegressionDataset};
use crate::error::{Error, Result};
use std::path::Path;

/// What happened while loading a CSV file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadReport {
    /// Rows dropped because a selected cell was missing or non-numeric.
    pub dropped_rows: usize,
    pub kept_rows: usize,
}

fn resolve_column(header: &csv::StringRecord, col: &ColumnRef) -> Result<usize> {
    match col {
        ColumnRef::Index(i) => {
            if *i < header.len() {
                Ok(*i)
            } else {
                Err(Error::MissingColumn(format!("#{i}")))
            }
        }
        ColumnRef::Name(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.clone())),
    }
}

fn parse_cell(raw: &str) -> Option<f64> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return None;
    }
    match trimmed.parse::<f64>() {
        Ok(v) if v.is_finite() => Some(v),
        _ => None,
    }
}

/// Load a header-ful CSV into a [`RegressionDataset`], selecting the spec's
/// target and feature columns. Rows with any missing or non-numeric value
/// in a selected column are dropped and counted.
pub fn load_csv(path: &Path, spec: &DatasetSpec) -> Result<(RegressionDataset, LoadReport)> {
    let target_col = spec
        .target_column
        .as_ref()
        .ok_or_else(|| Error::Config(format!("dataset {}: target_column is required", spec.name)))?;
    if spec.feature_columns.is_empty() {
        return Err(Error::Config(format!(
            "dataset {}: feature_columns must be non-empty",
            spec.name
        )));
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;

    let header = reader
        .headers()
        .map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .clone();

    let target_idx = resolve_column(&header, target_col)?;
    let feature_idx: Vec<usize> = spec
        .feature_columns
        .iter()
        .map(|c| resolve_column(&header, c))
        .collect::<Result<_>>()?;

    let d = feature_idx.len();
    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut dropped = 0usize;

    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let target = record.get(target_idx).and_then(parse_cell);
        let mut row = Vec::with_capacity(d);
        let mut usable = target.is_some();
        if usable {
            for &fi in &feature_idx {
                match record.get(fi).and_then(parse_cell) {
                    Some(v) => row.push(v),
                    None => {
                        usable = false;
                        break;
                    }
                }
            }
        }
        if usable {
            features.extend_from_slice(&row);
            targets.push(target.unwrap());
        } else {
            dropped += 1;
        }
    }

    if targets.is_empty() {
        return Err(Error::NoUsableRows { dropped });
    }
    if let Some(expected) = spec.expected_rows {
        let got = targets.len();
        if got != expected {
            return Err(Error::Dataset(format!(
                "{}: expected {expected} rows, loaded {got} (dropped {dropped})",
                spec.name
            )));
        }
    }

    let report = LoadReport {
        dropped_rows: dropped,
        kept_rows: targets.len(),
    };
    let dataset = RegressionDataset::new(spec.name.clone(), features, targets, d)?;
    Ok((dataset, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DatasetSource;
    use std::io::Write;

    fn spec_with(target: &str, feats: &[&str]) -> DatasetSpec {
        DatasetSpec {
            name: "fixture".into(),
            source: DatasetSource::LocalFile,
            url: None,
            checksum: None,
            path: None,
            target_column: Some(ColumnRef::Name(target.into())),
            feature_columns: feats.iter().map(|f| ColumnRef::Name((*f).into())).collect(),
            expected_rows: None,
            count: 0,
            d: 8,
            gen_seed: 0,
        }
    }

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(content.as_bytes()).unwrap();
        file.flush().unwrap();
        file
    }

    #[test]
    fn drops_rows_with_missing_values() {
        let file = write_csv("x1,x2,y\n1.0,2.0,3.0\n4.0,5.0,NA\n7.0,8.0,9.0\n");
        let (ds, report) = load_csv(file.path(), &spec_with("y", &["x1", "x2"])).unwrap();
        assert_eq!(ds.rows(), 2);
        assert_eq!(report.dropped_rows, 1);
        assert_eq!(ds.targets(), &[3.0, 9.0]);
    }

    #[test]
    fn column_order_in_file_is_irrelevant() {
        let a = write_csv("x1,x2,y\n1.0,2.0,3.0\n4.0,5.0,6.0\n");
        let b = write_csv("y,x2,x1\n3.0,2.0,1.0\n6.0,5.0,4.0\n");
        let spec = spec_with("y", &["x1", "x2"]);
        let (ds_a, _) = load_csv(a.path(), &spec).unwrap();
        let (ds_b, _) = load_csv(b.path(), &spec).unwrap();
        assert_eq!(ds_a, ds_b);
    }

    #[test]
    fn missing_column_is_fatal() {
        let file = write_csv("x1,y\n1.0,2.0\n");
        let err = load_csv(file.path(), &spec_with("y", &["x1", "x9"])).unwrap_err();
        match err {
            Error::MissingColumn(name) => assert_eq!(name, "x9"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_usable_rows_is_fatal() {
        let file = write_csv("x1,y\nNA,1.0\n2.0,oops\n");
        let err = load_csv(file.path(), &spec_with("y", &["x1"])).unwrap_err();
        match err {
            Error::NoUsableRows { dropped } => assert_eq!(dropped, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn index_columns_and_expected_rows() {
        let file = write_csv("a,b,c\n1,2,3\n4,5,6\n");
        let mut spec = spec_with("unused", &[]);
        spec.target_column = Some(ColumnRef::Index(2));
        spec.feature_columns = vec![ColumnRef::Index(0), ColumnRef::Index(1)];
        spec.expected_rows = Some(2);
        let (ds, _) = load_csv(file.path(), &spec).unwrap();
        assert_eq!(ds.targets(), &[3.0, 6.0]);

        spec.expected_rows = Some(3);
        assert!(load_csv(file.path(), &spec).is_err());
    }

    #[test]
    fn non_finite_literals_are_dropped() {
        let file = write_csv("x,y\ninf,1.0\n2.0,NaN\n3.0,4.0\n");
        let (ds, report) = load_csv(file.path(), &spec_with("y", &["x"])).unwrap();
        assert_eq!(ds.rows(), 1);
        assert_eq!(report.dropped_rows, 2);
    }
}
