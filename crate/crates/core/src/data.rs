//! Dataset container and CSV ingestion.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, FiError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Regression,
    BinaryClassification,
}

/// An `n x p` numeric feature matrix with named columns and a target vector.
///
/// Constructors validate `n >= 1`, `p >= 1`, finiteness, unique names, and
/// `{0, 1}` labels for classification. Column projections produced by
/// [`Dataset::select_columns`] may have zero columns; refitting on the empty
/// feature set needs that.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    names: Vec<String>,
    target: Vec<f64>,
    task: Task,
}

impl Dataset {
    pub fn new(features: Array2<f64>, names: Vec<String>, target: Vec<f64>, task: Task) -> Result<Self> {
        let (n, p) = features.dim();
        if n == 0 {
            return Err(invalid("dataset needs at least one row"));
        }
        if p == 0 {
            return Err(invalid("dataset needs at least one feature column"));
        }
        Self::new_unchecked_width(features, names, target, task)
    }

    fn new_unchecked_width(features: Array2<f64>, names: Vec<String>, target: Vec<f64>, task: Task) -> Result<Self> {
        let (n, p) = features.dim();
        if names.len() != p {
            return Err(FiError::DimensionMismatch { expected: p, got: names.len() });
        }
        if target.len() != n {
            return Err(FiError::DimensionMismatch { expected: n, got: target.len() });
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(invalid(format!("duplicate column name '{name}'")));
            }
        }
        if let Some(((i, j), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(invalid(format!("non-finite feature value at row {i}, column '{}'", names[j])));
        }
        if let Some(i) = target.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite target at row {i}")));
        }
        if task == Task::BinaryClassification {
            if let Some(i) = target.iter().position(|&v| v != 0.0 && v != 1.0) {
                return Err(invalid(format!("classification target must be 0 or 1, row {i} has {}", target[i])));
            }
        }
        Ok(Self { features: features.as_standard_layout().into_owned(), names, target, task })
    }

    /// Build from row vectors; convenient in tests and DGP samplers.
    pub fn from_rows(rows: Vec<Vec<f64>>, names: Vec<String>, target: Vec<f64>, task: Task) -> Result<Self> {
        let p = names.len();
        let n = rows.len();
        let mut flat = Vec::with_capacity(n * p);
        for (i, r) in rows.into_iter().enumerate() {
            if r.len() != p {
                return Err(invalid(format!("row {i} has {} values, expected {p}", r.len())));
            }
            flat.extend(r);
        }
        let features = Array2::from_shape_vec((n, p), flat).map_err(|e| invalid(e.to_string()))?;
        Self::new(features, names, target, task)
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.features.as_slice().expect("standard layout")[i * p..(i + 1) * p]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.features[[i, j]]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.features.column(j).to_vec()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| FiError::UnknownColumn(name.to_string()))
    }

    pub fn column_indices(&self, names: &[String]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.column_index(n)).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), rows),
            names: self.names.clone(),
            target: rows.iter().map(|&i| self.target[i]).collect(),
            task: self.task,
        }
    }

    /// Projection onto the given columns, in the given order. The result may
    /// have zero columns.
    pub fn select_columns(&self, cols: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(1), cols).as_standard_layout().into_owned(),
            names: cols.iter().map(|&j| self.names[j].clone()).collect(),
            target: self.target.clone(),
            task: self.task,
        }
    }

    /// Same features, different target (used for target permutation).
    pub fn with_target(&self, target: Vec<f64>) -> Result<Dataset> {
        Self::new_unchecked_width(self.features.clone(), self.names.clone(), target, self.task)
    }

    /// Same rows with column `j` replaced.
    pub fn with_column(&self, j: usize, values: &[f64]) -> Result<Dataset> {
        if values.len() != self.n() {
            return Err(FiError::DimensionMismatch { expected: self.n(), got: values.len() });
        }
        let mut out = self.clone();
        out.features.column_mut(j).iter_mut().zip(values).for_each(|(d, &v)| *d = v);
        Ok(out)
    }

    /// Concatenate extra columns on the right.
    pub fn hstack(&self, other: &Dataset) -> Result<Dataset> {
        if other.n() != self.n() {
            return Err(FiError::DimensionMismatch { expected: self.n(), got: other.n() });
        }
        let features = ndarray::concatenate(Axis(1), &[self.features.view(), other.features.view()])
            .map_err(|e| invalid(e.to_string()))?;
        let mut names = self.names.clone();
        names.extend(other.names.iter().cloned());
        Self::new(features, names, self.target.clone(), self.task)
    }

    /// Read an RFC-4180 CSV whose first row is a header. `target` names the
    /// target column; all other columns become features.
    pub fn from_csv_path(path: impl AsRef<Path>, target: &str, task: Task) -> Result<Dataset> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, target, task)
    }

    pub fn from_csv_reader<R: Read>(reader: R, target: &str, task: Task) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| FiError::Csv { row: 1, column: String::new(), message: e.to_string() })?
            .clone();
        let names: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
        let t_idx = names
            .iter()
            .position(|c| c == target)
            .ok_or_else(|| FiError::UnknownColumn(target.to_string()))?;
        let feature_names: Vec<String> =
            names.iter().enumerate().filter(|&(i, _)| i != t_idx).map(|(_, s)| s.clone()).collect();

        let mut flat = Vec::new();
        let mut y = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            // header is line 1
            let line = k + 2;
            let rec = rec.map_err(|e| FiError::Csv { row: line, column: String::new(), message: e.to_string() })?;
            if rec.len() != names.len() {
                return Err(FiError::Csv {
                    row: line,
                    column: String::new(),
                    message: format!("expected {} fields, found {}", names.len(), rec.len()),
                });
            }
            for (i, cell) in rec.iter().enumerate() {
                let v: f64 = cell.trim().parse().map_err(|_| FiError::Csv {
                    row: line,
                    column: names[i].clone(),
                    message: format!("non-numeric value '{cell}'"),
                })?;
                if !v.is_finite() {
                    return Err(FiError::Csv {
                        row: line,
                        column: names[i].clone(),
                        message: format!("non-finite value '{cell}'"),
                    });
                }
                if i == t_idx {
                    y.push(v);
                } else {
                    flat.push(v);
                }
            }
        }
        let n = y.len();
        let features = Array2::from_shape_vec((n, feature_names.len()), flat).map_err(|e| invalid(e.to_string()))?;
        Dataset::new(features, feature_names, y, task)
    }

    /// Write features followed by the target column `target_name`.
    pub fn write_csv<W: Write>(&self, writer: W, target_name: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| FiError::Io(std::io::Error::other(e));
        let mut header: Vec<&str> = self.names.iter().map(String::as_str).collect();
        header.push(target_name);
        w.write_record(&header).map_err(io)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| format_float(*v)).collect();
            rec.push(format_float(self.target[i]));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest representation that round-trips through `str::parse`.
pub(crate) fn format_float(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn rejects_bad_shapes() {
        let f = Array2::<f64>::zeros((3, 2));
        assert!(Dataset::new(f.clone(), names(&["a"]), vec![0.0; 3], Task::Regression).is_err());
        assert!(Dataset::new(f.clone(), names(&["a", "b"]), vec![0.0; 2], Task::Regression).is_err());
        assert!(Dataset::new(f.clone(), names(&["a", "a"]), vec![0.0; 3], Task::Regression).is_err());
        assert!(Dataset::new(Array2::zeros((0, 2)), names(&["a", "b"]), vec![], Task::Regression).is_err());
        assert!(Dataset::new(f, names(&["a", "b"]), vec![0.0, 1.0, 2.0], Task::BinaryClassification).is_err());
    }

    #[test]
    fn csv_round_trip_and_target_selection() {
        let text = "x1,y,x2\n1.5,0,2\n-3,1,4e-1\n";
        let d = Dataset::from_csv_reader(text.as_bytes(), "y", Task::BinaryClassification).unwrap();
        assert_eq!(d.names(), &["x1".to_string(), "x2".to_string()]);
        assert_eq!(d.target(), &[0.0, 1.0]);
        assert_eq!(d.row(1), &[-3.0, 0.4]);

        let mut buf = Vec::new();
        d.write_csv(&mut buf, "y").unwrap();
        let back = Dataset::from_csv_reader(buf.as_slice(), "y", Task::BinaryClassification).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn csv_diagnostics_name_row_and_column() {
        let text = "a,b,y\n1,2,3\n4,oops,6\n";
        match Dataset::from_csv_reader(text.as_bytes(), "y", Task::Regression) {
            Err(FiError::Csv { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "b");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            Dataset::from_csv_reader(text.as_bytes(), "z", Task::Regression),
            Err(FiError::UnknownColumn(_))
        ));
    }

    #[test]
    fn column_projection_allows_empty() {
        let d = Dataset::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]], names(&["a", "b"]), vec![0.0, 1.0], Task::Regression)
            .unwrap();
        let e = d.select_columns(&[]);
        assert_eq!(e.p(), 0);
        assert_eq!(e.n(), 2);
        let s = d.select_columns(&[1]);
        assert_eq!(s.row(1), &[4.0]);
        assert_eq!(d.select_rows(&[1]).target(), &[1.0]);
    }
}
