use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Global class index, assigned by a [`ClassRegistry`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub usize);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// One labeled feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub features: Vec<f64>,
    pub class_id: ClassId,
    pub source: Option<String>,
}

impl Instance {
    pub fn new(features: Vec<f64>, class_id: ClassId) -> Self {
        Self {
            features,
            class_id,
            source: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub name: String,
    pub count: usize,
}

/// Ordered class names with their instance counts. A class's position is
/// its [`ClassId`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassRegistry {
    entries: Vec<ClassEntry>,
    by_name: HashMap<String, ClassId>,
}

impl ClassRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counts<S: Into<String>>(counts: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let mut reg = Self::new();
        for (name, count) in counts {
            let name = name.into();
            if reg.by_name.contains_key(&name) {
                return Err(Error::Argument(format!("duplicate class name {name:?}")));
            }
            let id = reg.register(&name);
            reg.entries[id.0].count = count;
        }
        Ok(reg)
    }

    /// Returns the id of `name`, adding it with count 0 if it is new.
    pub fn register(&mut self, name: &str) -> ClassId {
        if let Some(&id) = self.by_name.get(name) {
            return id;
        }
        let id = ClassId(self.entries.len());
        self.entries.push(ClassEntry {
            name: name.to_owned(),
            count: 0,
        });
        self.by_name.insert(name.to_owned(), id);
        id
    }

    pub fn id_of(&self, name: &str) -> Option<ClassId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ClassId) -> &str {
        &self.entries[id.0].name
    }

    pub fn count(&self, id: ClassId) -> usize {
        self.entries[id.0].count
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ClassId> {
        (0..self.entries.len()).map(ClassId)
    }

    pub fn entries(&self) -> &[ClassEntry] {
        &self.entries
    }

    /// Name → count, for reporting.
    pub fn counts(&self) -> Vec<(&str, usize)> {
        self.entries
            .iter()
            .map(|e| (e.name.as_str(), e.count))
            .collect()
    }
}

/// Instances per refactoring type in the public refactoring-mining dataset
/// (GitHub, Apache and F-Droid combined). 2,086,898 instances in total.
pub const REFACTORING_TYPE_COUNTS: [(&str, usize); 20] = [
    ("extract interface", 10495),
    ("extract superclass", 26814),
    ("extract class", 41191),
    ("move class", 49815),
    ("extract method", 327493),
    ("move method", 163078),
    ("inline method", 53827),
    ("push down method", 62630),
    ("pull up method", 155076),
    ("rename method", 427935),
    ("inline variable", 30894),
    ("rename variable", 324955),
    ("rename parameter", 336751),
    ("parameterize variable", 22537),
    ("replace variable", 25894),
    ("extract subclass", 6436),
    ("move and rename class", 654),
    ("rename class", 3991),
    ("extract and move method", 9723),
    ("extract variable", 6709),
];

fn csv_error(path: &Path, err: csv::Error) -> Error {
    if err.is_io_error() {
        match err.into_kind() {
            csv::ErrorKind::Io(e) => Error::io(path, e),
            _ => unreachable!("checked is_io_error"),
        }
    } else {
        Error::Parse(format!("{}: {err}", path.display()))
    }
}

/// Reads a comma-separated file with a header row. Each data row becomes
/// one [`Instance`] whose features follow `feature_columns` order; class
/// ids are assigned in order of first appearance of each label. An empty
/// `feature_columns` selects every column except the label, in file order.
pub fn ingest_csv(
    path: impl AsRef<Path>,
    label_column: &str,
    feature_columns: &[String],
) -> Result<(Vec<Instance>, ClassRegistry)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("{}: missing column {name:?}", path.display())))
    };
    let label_idx = find(label_column)?;
    let all_columns: Vec<String>;
    let feature_columns = if feature_columns.is_empty() {
        all_columns = headers
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != label_idx)
            .map(|(_, h)| h.trim().to_owned())
            .collect();
        &all_columns[..]
    } else {
        feature_columns
    };
    if feature_columns.is_empty() {
        return Err(Error::Schema(format!("{}: no feature columns", path.display())));
    }
    let feature_idx = feature_columns
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;

    let mut registry = ClassRegistry::new();
    let mut instances = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = record.position().map_or(0, |p| p.line());
        let mut features = Vec::with_capacity(feature_idx.len());
        for (&idx, column) in feature_idx.iter().zip(feature_columns) {
            let cell = record.get(idx).unwrap_or("");
            let value = cell
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Data {
                    row,
                    column: column.clone(),
                    value: cell.to_owned(),
                })?;
            features.push(value);
        }
        let label = record.get(label_idx).unwrap_or("").trim();
        let class_id = registry.register(label);
        registry.entries[class_id.0].count += 1;
        instances.push(Instance::new(features, class_id));
    }
    Ok((instances, registry))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn cols(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn counts_sum_to_dataset_total() {
        let total: usize = REFACTORING_TYPE_COUNTS.iter().map(|&(_, c)| c).sum();
        assert_eq!(total, 2_086_898);
    }

    #[test]
    fn empty_selection_takes_every_other_column() {
        let f = write_csv("b,label,a\n1.5,x,2\n");
        let (inst, _) = ingest_csv(f.path(), "label", &[]).unwrap();
        assert_eq!(inst[0].features, vec![1.5, 2.0]);
    }

    #[test]
    fn reads_rows_in_feature_order() {
        let f = write_csv("b,label,a\n1.5,x,2\n-3,y,4e1\n0,x,0\n");
        let (inst, reg) = ingest_csv(f.path(), "label", &cols(&["a", "b"])).unwrap();
        assert_eq!(inst.len(), 3);
        assert_eq!(inst[0].features, vec![2.0, 1.5]);
        assert_eq!(inst[1].features, vec![40.0, -3.0]);
        assert_eq!(reg.counts(), vec![("x", 2), ("y", 1)]);
        assert_eq!(inst[2].class_id, reg.id_of("x").unwrap());
    }

    #[test]
    fn header_only_file_is_empty() {
        let f = write_csv("label,a\n");
        let (inst, reg) = ingest_csv(f.path(), "label", &cols(&["a"])).unwrap();
        assert!(inst.is_empty());
        assert!(reg.is_empty());
    }

    #[test]
    fn bad_cell_is_reported_with_position() {
        let f = write_csv("label,a,b\nx,1,2\ny,3,abc\n");
        match ingest_csv(f.path(), "label", &cols(&["a", "b"])) {
            Err(Error::Data { row, column, value }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "b");
                assert_eq!(value, "abc");
            }
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_and_file() {
        let f = write_csv("label,a\nx,1\n");
        assert!(matches!(
            ingest_csv(f.path(), "label", &cols(&["a", "zz"])),
            Err(Error::Schema(_))
        ));
        assert!(matches!(
            ingest_csv(f.path(), "class", &cols(&["a"])),
            Err(Error::Schema(_))
        ));
        assert!(matches!(
            ingest_csv("/nonexistent/file.csv", "label", &cols(&["a"])),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn non_finite_cells_are_rejected() {
        let f = write_csv("label,a\nx,NaN\n");
        assert!(matches!(
            ingest_csv(f.path(), "label", &cols(&["a"])),
            Err(Error::Data { .. })
        ));
    }

    #[test]
    fn registry_rejects_duplicates() {
        assert!(ClassRegistry::from_counts([("a", 1), ("a", 2)]).is_err());
    }
}
