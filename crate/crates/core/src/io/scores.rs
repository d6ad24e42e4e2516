//! Per-sample similarity scores, read from and written to CSV.

use std::collections::HashSet;
use std::path::Path;

use super::{atomic_write, TensorIoError};

/// Header of a score file, in order.
pub const SCORE_COLUMNS: [&str; 6] = ["sample_id", "clip_o", "clip_r", "clip_b", "clip_s", "lpips_o"];

/// Raw scores for one edited sample. CLIP values are cosine similarities;
/// `clip_s` is absent for blend-only runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub sample_id: String,
    pub clip_o: f64,
    pub clip_r: f64,
    pub clip_b: f64,
    pub clip_s: Option<f64>,
    pub lpips_o: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreTable {
    pub records: Vec<ScoreRecord>,
}

impl ScoreTable {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

pub fn load_scores(path: &Path) -> Result<ScoreTable, TensorIoError> {
    let bytes = std::fs::read(path).map_err(|e| TensorIoError::io(path, e))?;
    parse_scores(&bytes)
}

pub fn parse_scores(bytes: &[u8]) -> Result<ScoreTable, TensorIoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::None)
        .from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| TensorIoError::Csv(e.to_string()))?
        .clone();

    let names: Vec<&str> = headers.iter().collect();
    for col in SCORE_COLUMNS {
        if !names.contains(&col) {
            return Err(TensorIoError::MissingColumn(col.to_string()));
        }
    }
    if let Some(extra) = names.iter().find(|n| !SCORE_COLUMNS.contains(n)) {
        return Err(TensorIoError::UnexpectedColumn(extra.to_string()));
    }
    if names != SCORE_COLUMNS {
        return Err(TensorIoError::Csv(format!(
            "header must be exactly {}, got {}",
            SCORE_COLUMNS.join(","),
            names.join(",")
        )));
    }

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| TensorIoError::Csv(e.to_string()))?;
        let line = i + 1;
        let cell = |col: usize| -> Result<f64, TensorIoError> {
            let raw = row.get(col).unwrap_or("");
            parse_number(raw, line, SCORE_COLUMNS[col])
        };
        let sample_id = row.get(0).unwrap_or("").to_string();
        if !seen.insert(sample_id.clone()) {
            return Err(TensorIoError::DuplicateSampleId(sample_id));
        }
        let clip_s = match row.get(4).unwrap_or("") {
            "" => None,
            raw => Some(parse_number(raw, line, "clip_s")?),
        };
        let record = ScoreRecord {
            sample_id,
            clip_o: cell(1)?,
            clip_r: cell(2)?,
            clip_b: cell(3)?,
            clip_s,
            lpips_o: cell(5)?,
        };
        check_range(line, "clip_o", record.clip_o, -1.0, 1.0)?;
        check_range(line, "clip_r", record.clip_r, -1.0, 1.0)?;
        check_range(line, "clip_b", record.clip_b, -1.0, 1.0)?;
        if let Some(s) = record.clip_s {
            check_range(line, "clip_s", s, -1.0, 1.0)?;
        }
        check_range(line, "lpips_o", record.lpips_o, 0.0, 1.0)?;
        records.push(record);
    }
    Ok(ScoreTable { records })
}

pub fn save_scores(table: &ScoreTable, path: &Path) -> Result<(), TensorIoError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| TensorIoError::Csv(e.to_string());
    writer.write_record(SCORE_COLUMNS).map_err(csv_err)?;
    for r in &table.records {
        writer
            .write_record([
                r.sample_id.clone(),
                r.clip_o.to_string(),
                r.clip_r.to_string(),
                r.clip_b.to_string(),
                r.clip_s.map(|s| s.to_string()).unwrap_or_default(),
                r.lpips_o.to_string(),
            ])
            .map_err(csv_err)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| TensorIoError::Csv(e.to_string()))?;
    atomic_write(path, &bytes)
}

fn parse_number(raw: &str, row: usize, column: &str) -> Result<f64, TensorIoError> {
    match raw.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(TensorIoError::NonNumericCell {
            row,
            column: column.to_string(),
            value: raw.to_string(),
        }),
    }
}

fn check_range(row: usize, column: &str, value: f64, min: f64, max: f64) -> Result<(), TensorIoError> {
    if (min..=max).contains(&value) {
        Ok(())
    } else {
        Err(TensorIoError::ValueOutOfRange {
            row,
            column: column.to_string(),
            value,
            min,
            max,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "sample_id,clip_o,clip_r,clip_b,clip_s,lpips_o\n";

    #[test]
    fn one_row() {
        let t = parse_scores(format!("{HEADER}a,0.1,0.2,0.3,0.2,0.4\n").as_bytes()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(
            t.records[0],
            ScoreRecord {
                sample_id: "a".into(),
                clip_o: 0.1,
                clip_r: 0.2,
                clip_b: 0.3,
                clip_s: Some(0.2),
                lpips_o: 0.4,
            }
        );
    }

    #[test]
    fn duplicate_sample_id() {
        let text = format!("{HEADER}a,0.1,0.2,0.3,0.2,0.4\na,0.1,0.2,0.3,0.2,0.4\n");
        assert!(matches!(
            parse_scores(text.as_bytes()),
            Err(TensorIoError::DuplicateSampleId(id)) if id == "a"
        ));
    }

    #[test]
    fn empty_clip_s_is_allowed() {
        let t = parse_scores(format!("{HEADER}a,0.1,0.2,0.3,,0.4\n").as_bytes()).unwrap();
        assert_eq!(t.records[0].clip_s, None);
    }

    #[test]
    fn missing_column() {
        let text = "sample_id,clip_o,clip_r,clip_b,lpips_o\na,0.1,0.2,0.3,0.4\n";
        assert!(matches!(
            parse_scores(text.as_bytes()),
            Err(TensorIoError::MissingColumn(c)) if c == "clip_s"
        ));
    }

    #[test]
    fn non_numeric_cell() {
        let text = format!("{HEADER}a,0.1,oops,0.3,0.2,0.4\n");
        assert!(matches!(
            parse_scores(text.as_bytes()),
            Err(TensorIoError::NonNumericCell { row: 1, column, .. }) if column == "clip_r"
        ));
        let text = format!("{HEADER}a,0.1,0.2,0.3,0.2,\n");
        assert!(matches!(
            parse_scores(text.as_bytes()),
            Err(TensorIoError::NonNumericCell { column, .. }) if column == "lpips_o"
        ));
    }

    #[test]
    fn lpips_outside_unit_interval() {
        let text = format!("{HEADER}a,0.1,0.2,0.3,0.2,1.5\n");
        assert!(matches!(
            parse_scores(text.as_bytes()),
            Err(TensorIoError::ValueOutOfRange { column, .. }) if column == "lpips_o"
        ));
    }

    #[test]
    fn quoted_ids_follow_rfc4180() {
        let text = format!("{HEADER}\"x,1\",0.1,0.2,0.3,0.2,0.4\n");
        let t = parse_scores(text.as_bytes()).unwrap();
        assert_eq!(t.records[0].sample_id, "x,1");
    }
}
