use std::collections::BTreeMap;
use std::io;

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

/// Daily planning window: `days` consecutive days starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub days: usize,
}

impl DateRange {
    pub fn new(start: NaiveDate, days: usize) -> Self {
        DateRange { start, days }
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        (0..self.days).map(move |d| self.start + Duration::days(d as i64))
    }

    pub fn date(&self, t: usize) -> NaiveDate {
        self.start + Duration::days(t as i64)
    }

    pub fn end_inclusive(&self) -> NaiveDate {
        self.date(self.days.saturating_sub(1))
    }

    /// Same start, first `days` days.
    pub fn truncated(&self, days: usize) -> Self {
        DateRange {
            start: self.start,
            days: days.min(self.days),
        }
    }
}

pub fn days_in_year(year: i32) -> u32 {
    if NaiveDate::from_ymd_opt(year, 2, 29).is_some() {
        366
    } else {
        365
    }
}

pub fn days_in_month(date: NaiveDate) -> u32 {
    let (y, m) = (date.year(), date.month());
    let next = if m == 12 {
        NaiveDate::from_ymd_opt(y + 1, 1, 1)
    } else {
        NaiveDate::from_ymd_opt(y, m + 1, 1)
    }
    .expect("valid month start");
    let first = NaiveDate::from_ymd_opt(y, m, 1).expect("valid month start");
    (next - first).num_days() as u32
}

/// A value that may vary by day: a constant, one entry per horizon day, or
/// (in files only) a reference to a CSV side-file resolved at load time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Series {
    Constant(f64),
    Daily(Vec<f64>),
    File {
        csv: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        column: Option<String>,
    },
}

impl Series {
    /// Value on day `t`.
    ///
    /// # Panics
    /// On an unresolved file reference or a day past the end; scenario
    /// validation rules both out.
    pub fn at(&self, t: usize) -> f64 {
        match self {
            Series::Constant(v) => *v,
            Series::Daily(v) => v[t],
            Series::File { csv, .. } => panic!("series `{csv}` was not resolved"),
        }
    }

    /// Number of days covered, `None` for constants.
    pub fn len(&self) -> Option<usize> {
        match self {
            Series::Constant(_) => None,
            Series::Daily(v) => Some(v.len()),
            Series::File { .. } => Some(0),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == Some(0)
    }

    pub fn is_resolved(&self) -> bool {
        !matches!(self, Series::File { .. })
    }

    pub fn covers(&self, days: usize) -> bool {
        self.is_resolved() && self.len().is_none_or(|n| n >= days)
    }

    pub fn all(&self, days: usize, pred: impl Fn(f64) -> bool) -> bool {
        (0..days).all(|t| pred(self.at(t)))
    }

    pub fn truncated(&self, days: usize) -> Series {
        match self {
            Series::Daily(v) => Series::Daily(v[..days.min(v.len())].to_vec()),
            other => other.clone(),
        }
    }

    /// Drops the first `offset` days of a daily series.
    pub fn shifted(&self, offset: usize) -> Series {
        match self {
            Series::Daily(v) => Series::Daily(v[offset.min(v.len())..].to_vec()),
            other => other.clone(),
        }
    }
}

impl From<f64> for Series {
    fn from(v: f64) -> Self {
        Series::Constant(v)
    }
}

impl From<Vec<f64>> for Series {
    fn from(v: Vec<f64>) -> Self {
        Series::Daily(v)
    }
}

/// A validated daily table: one row per consecutive day.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyTable {
    pub start: NaiveDate,
    pub columns: BTreeMap<String, Vec<f64>>,
}

impl DailyTable {
    pub fn len(&self) -> usize {
        self.columns.values().next().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.get(name).map(Vec::as_slice)
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TableError {
    #[error("csv: {0}")]
    Csv(String),
    #[error("missing `date` column")]
    MissingDate,
    #[error("row {row}: invalid date `{value}`")]
    BadDate { row: usize, value: String },
    #[error("row {row}: dates must increase by one day ({prev} then {next})")]
    NotDaily { row: usize, prev: NaiveDate, next: NaiveDate },
    #[error("row {row}, column `{column}`: non-numeric value `{value}`")]
    NonNumeric { row: usize, column: String, value: String },
    #[error("table has no rows")]
    Empty,
}

/// Reads a CSV table whose first column header is `date` (ISO-8601) and
/// whose remaining columns are numeric.
pub fn read_daily_table<R: io::Read>(reader: R) -> Result<DailyTable, TableError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| TableError::Csv(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let date_col = headers
        .iter()
        .position(|h| h == "date")
        .ok_or(TableError::MissingDate)?;
    let mut columns: BTreeMap<String, Vec<f64>> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != date_col)
        .map(|(_, h)| (h.clone(), Vec::new()))
        .collect();
    let mut start = None;
    let mut prev: Option<NaiveDate> = None;
    for (idx, record) in rdr.records().enumerate() {
        let row = idx + 2;
        let record = record.map_err(|e| TableError::Csv(e.to_string()))?;
        let raw = record.get(date_col).unwrap_or("");
        let date = NaiveDate::parse_from_str(raw, "%Y-%m-%d").map_err(|_| TableError::BadDate {
            row,
            value: raw.to_owned(),
        })?;
        if let Some(p) = prev {
            if date != p + Duration::days(1) {
                return Err(TableError::NotDaily { row, prev: p, next: date });
            }
        } else {
            start = Some(date);
        }
        prev = Some(date);
        for (i, h) in headers.iter().enumerate() {
            if i == date_col {
                continue;
            }
            let cell = record.get(i).unwrap_or("");
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| TableError::NonNumeric {
                    row,
                    column: h.clone(),
                    value: cell.to_owned(),
                })?;
            columns.get_mut(h).expect("column registered").push(v);
        }
    }
    Ok(DailyTable {
        start: start.ok_or(TableError::Empty)?,
        columns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn daily_table_rejects_gaps_and_text() {
        let ok = read_daily_table("date,value\n2024-01-01,1\n2024-01-02,2.5\n".as_bytes()).unwrap();
        assert_eq!(ok.column("value").unwrap(), &[1.0, 2.5]);
        let gap = read_daily_table("date,value\n2024-01-01,1\n2024-01-03,2\n".as_bytes());
        assert!(matches!(gap, Err(TableError::NotDaily { row: 3, .. })));
        let back = read_daily_table("date,value\n2024-01-02,1\n2024-01-01,2\n".as_bytes());
        assert!(matches!(back, Err(TableError::NotDaily { .. })));
        let text = read_daily_table("date,value\n2024-01-01,abc\n".as_bytes());
        assert!(matches!(text, Err(TableError::NonNumeric { row: 2, .. })));
    }

    #[test]
    fn calendar_helpers() {
        assert_eq!(days_in_year(2024), 366);
        assert_eq!(days_in_year(2023), 365);
        assert_eq!(days_in_month(NaiveDate::from_ymd_opt(2024, 2, 10).unwrap()), 29);
        assert_eq!(days_in_month(NaiveDate::from_ymd_opt(2023, 12, 31).unwrap()), 31);
        let r = DateRange::new(NaiveDate::from_ymd_opt(2024, 4, 2).unwrap(), 182);
        assert_eq!(r.end_inclusive(), NaiveDate::from_ymd_opt(2024, 9, 30).unwrap());
    }
}
