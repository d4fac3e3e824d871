//! Dataset generators, the UCI Iris reader and CSV/JSON persistence.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::cluster::ClusterTree;
use crate::error::{invalid, Error, Result};
use crate::sampling::{logistic, stream_rng};
use crate::stats::DataMatrix;

/// Points with optional class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub data: DataMatrix,
    pub labels: Option<Vec<usize>>,
    pub names: Option<Vec<String>>,
}

impl LabeledDataset {
    pub fn unlabeled(data: DataMatrix) -> Self {
        LabeledDataset {
            data,
            labels: None,
            names: None,
        }
    }

    pub fn class_counts(&self) -> Option<Vec<usize>> {
        let labels = self.labels.as_ref()?;
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![0; k];
        for &l in labels {
            counts[l] += 1;
        }
        Some(counts)
    }
}

/// Means and per-axis logistic scales of the five-component mixture.
pub const LOGISTIC_5: [([f64; 2], [f64; 2]); 5] = [
    ([-40.0, 5.0], [6.0, 1.0]),
    ([-40.0, -5.0], [6.0, 1.0]),
    ([0.0, 0.0], [1.0, 12.0]),
    ([40.0, 5.0], [6.0, 1.0]),
    ([40.0, -5.0], [6.0, 1.0]),
];

/// `per_component` points from each of five axis-independent logistic
/// densities in the plane, labelled 0..=4 in component order. Component `j`
/// draws from stream `j` of `seed`.
pub fn sample_logistic_mixture_5(per_component: usize, seed: u64) -> Result<LabeledDataset> {
    if per_component == 0 {
        return Err(invalid("per_component must be at least 1"));
    }
    let mut values = Vec::with_capacity(per_component * 10);
    let mut labels = Vec::with_capacity(per_component * 5);
    for (j, (mean, scale)) in LOGISTIC_5.iter().enumerate() {
        let mut rng = stream_rng(seed, j as u64);
        for _ in 0..per_component {
            values.push(mean[0] + logistic(&mut rng, scale[0]));
            values.push(mean[1] + logistic(&mut rng, scale[1]));
            labels.push(j);
        }
    }
    Ok(LabeledDataset {
        data: DataMatrix::new(per_component * 5, 2, values)?,
        labels: Some(labels),
        names: Some((1..=5).map(|i| format!("L{i}")).collect()),
    })
}

pub const IRIS_CLASSES: [&str; 3] = ["Iris-setosa", "Iris-versicolor", "Iris-virginica"];

/// Reads a file in the UCI `iris.data` format.
pub fn load_iris(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    parse_iris(&fs::read_to_string(path)?)
}

/// Four comma-separated measurements and a class name per line. Blank lines
/// are skipped; line numbers in errors are 1-based.
pub fn parse_iris(text: &str) -> Result<LabeledDataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse {
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(bad(format!("expected 5 fields, found {}", fields.len())));
        }
        let row = fields[..4]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(format!("not a number: '{f}'")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let label = IRIS_CLASSES
            .iter()
            .position(|c| *c == fields[4])
            .ok_or_else(|| bad(format!("unknown class '{}'", fields[4])))?;
        rows.push(row);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(LabeledDataset {
        data: DataMatrix::from_rows(&rows)?,
        labels: Some(labels),
        names: Some(IRIS_CLASSES.iter().map(|s| s.to_string()).collect()),
    })
}

/// Reads a rectangular numeric CSV. Row numbers in errors count data rows
/// from 0, header excluded.
pub fn read_csv(path: impl AsRef<Path>, has_header: bool) -> Result<DataMatrix> {
    let file = fs::File::open(path)?;
    read_csv_from(file, has_header)
}

pub fn read_csv_from(reader: impl std::io::Read, has_header: bool) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(j, f)| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| invalid(format!("row {i}, column {j}: not a number: '{f}'")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(invalid(format!(
                    "row {i} has {} columns, expected {}",
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    DataMatrix::from_rows(&rows)
}

/// Writes `data` as CSV, with an optional header row. Values use the
/// shortest representation that reads back to the same `f64`, switching to
/// exponent notation for very small or large magnitudes.
pub fn write_csv(data: &DataMatrix, header: Option<&[&str]>, path: impl AsRef<Path>) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    if let Some(h) = header {
        if h.len() != data.d() {
            return Err(Error::DimensionMismatch {
                expected: data.d(),
                actual: h.len(),
            });
        }
        wtr.write_record(h)?;
    }
    for row in data.rows() {
        wtr.write_record(row.iter().map(|v| format!("{v:?}")))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Pretty-printed JSON followed by a newline.
pub fn write_json<T: Serialize + ?Sized>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut file = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn write_labels_json(tree: &ClusterTree, path: impl AsRef<Path>) -> Result<()> {
    write_json(tree, path)
}

pub fn read_labels_json(path: impl AsRef<Path>) -> Result<ClusterTree> {
    read_json(path)
}
