//! `doc_id,label` CSV files.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabelsError {
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: record {record}: bad label {value:?}")]
    BadLabel { path: PathBuf, record: usize, value: String },
    #[error("{path}: no label for document {id:?}")]
    Missing { path: PathBuf, id: String },
    #[error("{ids} ids but {labels} labels")]
    LengthMismatch { ids: usize, labels: usize },
    #[error("writing labels: {0}")]
    Write(#[from] csv::Error),
}

/// Reads `doc_id,label` rows; a header row is expected.
pub fn read_labels(path: &Path) -> Result<Vec<(String, i32)>, LabelsError> {
    let csv_err = |source| LabelsError::Csv {
        path: path.to_owned(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let id = record.get(0).unwrap_or_default().to_owned();
        let value = record.get(1).unwrap_or_default().trim();
        let label = value.parse().map_err(|_| LabelsError::BadLabel {
            path: path.to_owned(),
            record: i + 1,
            value: value.to_owned(),
        })?;
        out.push((id, label));
    }
    Ok(out)
}

/// Labels from `path` in the order of `ids`.
pub fn read_labels_for(path: &Path, ids: &[String]) -> Result<Vec<i32>, LabelsError> {
    let by_id: HashMap<String, i32> = read_labels(path)?.into_iter().collect();
    ids.iter()
        .map(|id| {
            by_id.get(id).copied().ok_or_else(|| LabelsError::Missing {
                path: path.to_owned(),
                id: id.clone(),
            })
        })
        .collect()
}

pub fn write_labels<W: Write>(writer: W, ids: &[String], labels: &[i32]) -> Result<(), LabelsError> {
    if ids.len() != labels.len() {
        return Err(LabelsError::LengthMismatch {
            ids: ids.len(),
            labels: labels.len(),
        });
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["doc_id", "label"])?;
    for (id, label) in ids.iter().zip(labels) {
        w.write_record([id.as_str(), &label.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_alignment() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        let ids = vec!["b".to_owned(), "a,1".to_owned(), "c".to_owned()];
        write_labels(std::fs::File::create(&path).unwrap(), &ids, &[2, -1, 0]).unwrap();
        assert_eq!(read_labels(&path).unwrap()[1], ("a,1".to_owned(), -1));
        let order = vec!["c".to_owned(), "b".to_owned()];
        assert_eq!(read_labels_for(&path, &order).unwrap(), vec![0, 2]);
        assert!(matches!(
            read_labels_for(&path, &["zz".to_owned()]),
            Err(LabelsError::Missing { .. })
        ));
    }

    #[test]
    fn bad_label_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        std::fs::write(&path, "doc_id,label\nx,one\n").unwrap();
        assert!(matches!(read_labels(&path), Err(LabelsError::BadLabel { record: 1, .. })));
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            write_labels(Vec::new(), &["a".to_owned()], &[]),
            Err(LabelsError::LengthMismatch { .. })
        ));
    }
}
