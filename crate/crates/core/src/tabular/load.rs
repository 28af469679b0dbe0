use crate::error::{Error, Result};
use crate::tabular::DomainLabel;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    /// `levels` are sorted; `codes[i]` indexes into `levels`.
    Categorical { levels: Vec<String>, codes: Vec<u32> },
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            ColumnData::Numeric(_) => ColumnKind::Numeric,
            ColumnData::Categorical { .. } => ColumnKind::Categorical,
        }
    }

    pub fn categorical(values: &[&str]) -> Self {
        let levels: Vec<String> = values
            .iter()
            .map(|s| s.to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let codes = values
            .iter()
            .map(|v| levels.binary_search_by(|l| l.as_str().cmp(v)).unwrap() as u32)
            .collect();
        ColumnData::Categorical { levels, codes }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawColumn {
    pub name: String,
    pub data: ColumnData,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub name: String,
    pub columns: Vec<RawColumn>,
    pub row_count: usize,
    /// Rows removed during loading because a cell was missing.
    pub dropped_rows: usize,
}

impl RawTable {
    pub fn new(name: impl Into<String>, columns: Vec<RawColumn>) -> Result<Self> {
        let row_count = columns.first().map(|c| c.data.len()).unwrap_or(0);
        let table = RawTable {
            name: name.into(),
            columns,
            row_count,
            dropped_rows: 0,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns.len() < 2 {
            return Err(Error::InvalidTable(format!(
                "need at least 2 columns, found {}",
                self.columns.len()
            )));
        }
        if let Some(c) = self.columns.iter().find(|c| c.data.len() != self.row_count) {
            return Err(Error::InvalidTable(format!(
                "column `{}` has {} values, expected {}",
                c.name,
                c.data.len(),
                self.row_count
            )));
        }
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<&RawColumn> {
        self.columns.iter().find(|c| c.name == name)
    }
}

/// Optional JSON sidecar describing a CSV file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaSidecar {
    /// Per-column kind overrides.
    pub columns: BTreeMap<String, ColumnKind>,
    /// Domain label of the dataset.
    pub label: Option<DomainLabel>,
    /// Candidate regression targets; one is picked at random when several are listed.
    pub targets: Vec<String>,
}

impl SchemaSidecar {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(
        cell.to_ascii_lowercase().as_str(),
        "" | "na" | "n/a" | "nan" | "?" | "null" | "none"
    )
}

fn parse_finite(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Read a delimiter-separated file with a header row.
///
/// The delimiter is `;` or tab when the header contains one and no commas,
/// otherwise `,`. A column is categorical when any non-missing cell fails to
/// parse as a finite number, unless the sidecar says otherwise. Rows with a
/// missing cell are dropped and counted.
pub fn load_csv(
    path: &Path,
    target_column: Option<&str>,
    schema: Option<&SchemaSidecar>,
) -> Result<RawTable> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let first_line = bytes.split(|&b| b == b'\n').next().unwrap_or(&[]);
    let delimiter = if first_line.contains(&b',') {
        b','
    } else if first_line.contains(&b';') {
        b';'
    } else if first_line.contains(&b'\t') {
        b'\t'
    } else {
        b','
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let width = header.len();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut dropped = 0usize;
    for record in reader.records() {
        let record = record?;
        if record.len() != width {
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            return Err(Error::RowWidthMismatch {
                line,
                expected: width,
                found: record.len(),
            });
        }
        if record.iter().any(is_missing) {
            dropped += 1;
            continue;
        }
        rows.push(record.iter().map(str::to_string).collect());
    }
    if rows.is_empty() {
        return Err(Error::NoUsableRows(path.display().to_string()));
    }

    let mut columns = Vec::with_capacity(width);
    for (j, col_name) in header.iter().enumerate() {
        let forced = schema.and_then(|s| s.columns.get(col_name)).copied();
        let parsed: Vec<Option<f64>> = rows.iter().map(|r| parse_finite(&r[j])).collect();
        let kind = forced.unwrap_or(if parsed.iter().all(Option::is_some) {
            ColumnKind::Numeric
        } else {
            ColumnKind::Categorical
        });
        let data = match kind {
            ColumnKind::Numeric => {
                if let Some(bad) = parsed.iter().position(Option::is_none) {
                    return Err(Error::InvalidTable(format!(
                        "column `{col_name}` declared numeric but row {bad} is `{}`",
                        rows[bad][j]
                    )));
                }
                ColumnData::Numeric(parsed.into_iter().map(Option::unwrap).collect())
            }
            ColumnKind::Categorical => {
                let cells: Vec<&str> = rows.iter().map(|r| r[j].as_str()).collect();
                ColumnData::categorical(&cells)
            }
        };
        columns.push(RawColumn {
            name: col_name.clone(),
            data,
        });
    }
    if let Some(t) = target_column {
        if !header.iter().any(|h| h == t) {
            return Err(Error::UnknownColumn(t.to_string()));
        }
    }
    let table = RawTable {
        name,
        row_count: rows.len(),
        dropped_rows: dropped,
        columns,
    };
    table.validate()?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_numeric_columns() {
        let f = write("a,b,c\n1,2,3\n4,5,6\n7,8,9\n1.5,2.5,3.5\n-1,0,1e3\n");
        let t = load_csv(f.path(), None, None).unwrap();
        assert_eq!(t.row_count, 5);
        assert_eq!(t.columns.len(), 3);
        assert!(t.columns.iter().all(|c| c.data.kind() == ColumnKind::Numeric));
    }

    #[test]
    fn detects_categorical_levels() {
        let f = write("color,x\nred,1\nblue,2\nred,3\n");
        let t = load_csv(f.path(), None, None).unwrap();
        match &t.columns[0].data {
            ColumnData::Categorical { levels, codes } => {
                assert_eq!(levels, &["blue", "red"]);
                assert_eq!(codes, &[1, 0, 1]);
            }
            other => panic!("expected categorical, got {other:?}"),
        }
    }

    #[test]
    fn row_width_mismatch_is_an_error() {
        let f = write("a,b,c\n1,2,3\n4,5\n");
        let err = load_csv(f.path(), None, None).unwrap_err();
        assert!(err.to_string().contains("row width mismatch"), "{err}");
    }

    #[test]
    fn missing_cells_drop_rows() {
        let f = write("a,b\n1,2\n,3\n4,NA\n5,6\n");
        let t = load_csv(f.path(), None, None).unwrap();
        assert_eq!(t.row_count, 2);
        assert_eq!(t.dropped_rows, 2);
    }

    #[test]
    fn missing_file_and_empty_file() {
        assert!(matches!(
            load_csv(Path::new("/nonexistent/x.csv"), None, None),
            Err(Error::Io { .. })
        ));
        let f = write("a,b\n,\n");
        assert!(matches!(
            load_csv(f.path(), None, None),
            Err(Error::NoUsableRows(_))
        ));
    }

    #[test]
    fn sidecar_forces_categorical() {
        let f = write("grade,y\n1,0.5\n2,0.1\n1,0.3\n");
        let mut schema = SchemaSidecar::default();
        schema.columns.insert("grade".into(), ColumnKind::Categorical);
        let t = load_csv(f.path(), Some("y"), Some(&schema)).unwrap();
        assert_eq!(t.columns[0].data.kind(), ColumnKind::Categorical);
        assert!(matches!(
            load_csv(f.path(), Some("nope"), None),
            Err(Error::UnknownColumn(_))
        ));
    }
}
