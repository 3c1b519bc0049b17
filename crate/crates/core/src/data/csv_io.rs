use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{Series, TimeSeriesDataset};
use crate::error::{Error, Result};

/// Column layout of an input CSV file. A header row is required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsvSchema {
    pub id_column: String,
    pub time_column: Option<String>,
    pub value_column: String,
    pub delimiter: char,
    pub frequency: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            id_column: "id".into(),
            time_column: Some("time".into()),
            value_column: "value".into(),
            delimiter: ',',
            frequency: "unknown".into(),
        }
    }
}

struct Row {
    time: Option<String>,
    value: f64,
    line: u64,
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads one series per distinct id, ordered by the time column when there
/// is one (numerically when every time parses as a number, otherwise
/// lexicographically) and by row order otherwise.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<TimeSeriesDataset> {
    if !schema.delimiter.is_ascii() {
        return Err(Error::config("CSV delimiter must be an ASCII character"));
    }
    let file = std::fs::File::open(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .has_headers(true)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| parse_err(path, 1, format!("missing column `{name}`")))
    };
    let id_col = column(&schema.id_column)?;
    let value_col = column(&schema.value_column)?;
    let time_col = schema.time_column.as_deref().map(column).transpose()?;

    let mut groups: IndexMap<String, Vec<Row>> = IndexMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| {
            record
                .get(i)
                .map(str::trim)
                .ok_or_else(|| parse_err(path, line, "too few fields"))
        };
        let raw = field(value_col)?;
        if raw.is_empty() {
            return Err(parse_err(path, line, "missing value"));
        }
        let value: f64 = raw
            .parse()
            .map_err(|_| parse_err(path, line, format!("cannot parse value `{raw}`")))?;
        if !value.is_finite() {
            return Err(parse_err(path, line, format!("non-finite value `{raw}`")));
        }
        let time = time_col.map(field).transpose()?.map(str::to_string);
        groups.entry(field(id_col)?.to_string()).or_default().push(Row {
            time,
            value,
            line,
        });
    }

    let mut series = Vec::with_capacity(groups.len());
    for (id, mut rows) in groups {
        if time_col.is_some() {
            let numeric: Option<Vec<f64>> = rows
                .iter()
                .map(|r| r.time.as_deref().and_then(|t| t.parse::<f64>().ok()))
                .collect();
            match numeric {
                Some(keys) => {
                    let mut order: Vec<usize> = (0..rows.len()).collect();
                    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
                    let mut taken: Vec<Option<Row>> = rows.into_iter().map(Some).collect();
                    rows = order.into_iter().map(|i| taken[i].take().unwrap()).collect();
                }
                None => rows.sort_by(|a, b| a.time.cmp(&b.time)),
            }
            for pair in rows.windows(2) {
                if pair[0].time == pair[1].time {
                    return Err(parse_err(
                        path,
                        pair[1].line,
                        format!(
                            "duplicate time `{}` for series `{id}` (also on line {})",
                            pair[1].time.as_deref().unwrap_or_default(),
                            pair[0].line
                        ),
                    ));
                }
            }
        }
        series.push(Series {
            start_timestamp: rows.first().and_then(|r| r.time.clone()),
            values: rows.iter().map(|r| r.value).collect(),
            frequency: schema.frequency.clone(),
            id,
        });
    }
    TimeSeriesDataset::new(series)
}

/// Writes `id,time,value` rows with the time column holding the step index.
/// Values use the shortest representation that parses back to the same
/// `f64`.
pub fn write_dataset_csv(dataset: &TimeSeriesDataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["id", "time", "value"])?;
    for s in dataset.series() {
        for (t, v) in s.values.iter().enumerate() {
            writer.write_record([s.id.as_str(), &t.to_string(), &v.to_string()])?;
        }
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn single_series() {
        let f = file("id,time,value\na,0,1.5\na,1,2.5\n");
        let ds = load_csv(f.path(), &CsvSchema::default()).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.series()[0].values, vec![1.5, 2.5]);
    }

    #[test]
    fn interleaved_ids_keep_temporal_order() {
        let f = file("id,time,value\nA,2,30\nB,1,-1\nA,0,10\nB,0,-0.5\nA,1,20\nB,2,-2\n");
        let ds = load_csv(f.path(), &CsvSchema::default()).unwrap();
        assert_eq!(ds.get("A").unwrap().values, vec![10.0, 20.0, 30.0]);
        assert_eq!(ds.get("B").unwrap().values, vec![-0.5, -1.0, -2.0]);
        assert_eq!(ds.get("A").unwrap().start_timestamp.as_deref(), Some("0"));
    }

    #[test]
    fn text_timestamps_sort_lexicographically() {
        let f = file("id;ts;y\nx;2020-01-02;2\nx;2020-01-01;1\n");
        let schema = CsvSchema {
            time_column: Some("ts".into()),
            value_column: "y".into(),
            delimiter: ';',
            ..CsvSchema::default()
        };
        let ds = load_csv(f.path(), &schema).unwrap();
        assert_eq!(ds.series()[0].values, vec![1.0, 2.0]);
    }

    #[test]
    fn row_order_without_time_column() {
        let f = file("id,value\na,3\na,1\n");
        let schema = CsvSchema {
            time_column: None,
            ..CsvSchema::default()
        };
        assert_eq!(load_csv(f.path(), &schema).unwrap().series()[0].values, vec![3.0, 1.0]);
    }

    #[test]
    fn bad_value_cites_its_line() {
        let f = file("id,time,value\na,0,1\na,1,2\na,2,3\na,3,4\na,4,5\na,5,abc\n");
        let err = load_csv(f.path(), &CsvSchema::default()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 7),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn duplicates_and_missing_values_are_rejected() {
        let dup = file("id,time,value\na,0,1\na,0,2\n");
        assert!(matches!(
            load_csv(dup.path(), &CsvSchema::default()),
            Err(Error::Parse { line: 3, .. })
        ));
        let missing = file("id,time,value\na,0,\n");
        assert!(load_csv(missing.path(), &CsvSchema::default()).is_err());
    }

    #[test]
    fn write_then_load_preserves_values() {
        let values = vec![0.1 + 0.2, 1.0 / 3.0, -1e-300, 12345.678901234567];
        let ds = TimeSeriesDataset::new(vec![Series::new("s", values.clone())]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_dataset_csv(&ds, f.path()).unwrap();
        let back = load_csv(f.path(), &CsvSchema::default()).unwrap();
        assert_eq!(back.series()[0].values, values);
    }
}
