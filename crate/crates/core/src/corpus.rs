//! Price series and analyst-report ingestion.
//!
//! Everything downstream indexes prices by trading-day *position* in the
//! loaded series, never by calendar arithmetic. Holidays simply do not
//! appear in the series, so `d + 1` is always the next trading session.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of reports kept per date.
pub const DEFAULT_TOP_REPORTS: usize = 3;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("dates not strictly increasing at line {line}: {date} follows {previous}")]
    NonMonotonicDates {
        line: usize,
        date: NaiveDate,
        previous: NaiveDate,
    },
    #[error("price series is empty")]
    EmptySeries,
    #[error("malformed report record at {source_name}:{line}: {reason}")]
    MalformedRecord {
        source_name: String,
        line: usize,
        reason: String,
    },
    #[error("report record at {source_name}:{line} is missing field `{field}`")]
    MissingField {
        source_name: String,
        line: usize,
        field: &'static str,
    },
    #[error("no reports for {0}")]
    NoReportsForDate(NaiveDate),
    #[error("report count must be at least 1")]
    InvalidCount,
    #[error("date {0} is not a trading day in the series")]
    UnknownDate(NaiveDate),
    #[error("trading offset {offset} from {date} falls outside the series")]
    OutOfRange { date: NaiveDate, offset: i64 },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Read-only access to daily closes by trading-day position.
///
/// Forecasting code is written against this trait so that tests can swap
/// in [`TrackedPrices`] and assert which positions were touched.
pub trait PriceAccess {
    fn len(&self) -> usize;
    fn date_at(&self, pos: usize) -> Option<NaiveDate>;
    fn close_at(&self, pos: usize) -> Option<f64>;
    fn position_of(&self, date: NaiveDate) -> Option<usize>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered trading-day closes for a single index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    entries: Vec<(NaiveDate, f64)>,
}

impl PriceSeries {
    pub fn new(entries: Vec<(NaiveDate, f64)>) -> Result<Self, CorpusError> {
        if entries.is_empty() {
            return Err(CorpusError::EmptySeries);
        }
        for (i, &(date, close)) in entries.iter().enumerate() {
            if !close.is_finite() || close <= 0.0 {
                return Err(CorpusError::MalformedRow {
                    line: i + 2,
                    reason: format!("close must be finite and positive, got {close}"),
                });
            }
            if i > 0 && entries[i - 1].0 >= date {
                return Err(CorpusError::NonMonotonicDates {
                    line: i + 2,
                    date,
                    previous: entries[i - 1].0,
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(NaiveDate, f64)] {
        &self.entries
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn first_date(&self) -> NaiveDate {
        self.entries[0].0
    }

    pub fn last_date(&self) -> NaiveDate {
        self.entries[self.entries.len() - 1].0
    }

    /// Date `j` trading days away from `d`.
    pub fn trading_offset(&self, d: NaiveDate, j: i64) -> Result<NaiveDate, CorpusError> {
        trading_offset(self, d, j)
    }

    /// Restrict visibility to positions `0..=last`.
    pub fn view_until(&self, last: usize) -> PriceView<'_> {
        PriceView {
            series: self,
            len: (last + 1).min(self.entries.len()),
        }
    }

    /// Serialize in the `date,close` CSV layout accepted by [`load_price_series`].
    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,close\n");
        for (date, close) in &self.entries {
            out.push_str(&format!("{date},{close}\n"));
        }
        out
    }
}

impl PriceAccess for PriceSeries {
    fn len(&self) -> usize {
        self.entries.len()
    }

    fn date_at(&self, pos: usize) -> Option<NaiveDate> {
        self.entries.get(pos).map(|e| e.0)
    }

    fn close_at(&self, pos: usize) -> Option<f64> {
        self.entries.get(pos).map(|e| e.1)
    }

    fn position_of(&self, date: NaiveDate) -> Option<usize> {
        self.entries.binary_search_by_key(&date, |e| e.0).ok()
    }
}

/// A prefix of a [`PriceSeries`]; positions past the cut-off do not exist.
#[derive(Debug, Clone, Copy)]
pub struct PriceView<'a> {
    series: &'a PriceSeries,
    len: usize,
}

impl PriceAccess for PriceView<'_> {
    fn len(&self) -> usize {
        self.len
    }

    fn date_at(&self, pos: usize) -> Option<NaiveDate> {
        (pos < self.len).then(|| self.series.entries[pos].0)
    }

    fn close_at(&self, pos: usize) -> Option<f64> {
        (pos < self.len).then(|| self.series.entries[pos].1)
    }

    fn position_of(&self, date: NaiveDate) -> Option<usize> {
        self.series.position_of(date).filter(|&p| p < self.len)
    }
}

/// Wraps any [`PriceAccess`] and remembers the highest close position read.
pub struct TrackedPrices<'a, P: PriceAccess + ?Sized> {
    inner: &'a P,
    max_read: Cell<Option<usize>>,
}

impl<'a, P: PriceAccess + ?Sized> TrackedPrices<'a, P> {
    pub fn new(inner: &'a P) -> Self {
        Self {
            inner,
            max_read: Cell::new(None),
        }
    }

    pub fn max_position_read(&self) -> Option<usize> {
        self.max_read.get()
    }

    pub fn reset(&self) {
        self.max_read.set(None);
    }
}

impl<P: PriceAccess + ?Sized> PriceAccess for TrackedPrices<'_, P> {
    fn len(&self) -> usize {
        self.inner.len()
    }

    fn date_at(&self, pos: usize) -> Option<NaiveDate> {
        self.inner.date_at(pos)
    }

    fn close_at(&self, pos: usize) -> Option<f64> {
        let seen = self.max_read.get().map_or(pos, |m| m.max(pos));
        self.max_read.set(Some(seen));
        self.inner.close_at(pos)
    }

    fn position_of(&self, date: NaiveDate) -> Option<usize> {
        self.inner.position_of(date)
    }
}

/// Date at `position(d) + j` in `series`.
pub fn trading_offset<P: PriceAccess + ?Sized>(series: &P, d: NaiveDate, j: i64) -> Result<NaiveDate, CorpusError> {
    let pos = series.position_of(d).ok_or(CorpusError::UnknownDate(d))?;
    let target = pos as i64 + j;
    if target < 0 {
        return Err(CorpusError::OutOfRange { date: d, offset: j });
    }
    series
        .date_at(target as usize)
        .ok_or(CorpusError::OutOfRange { date: d, offset: j })
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok()
}

/// Load a `date,close` CSV price file.
pub fn load_price_series(path: &Path) -> Result<PriceSeries, CorpusError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_price_csv(&text)
}

pub fn parse_price_csv(text: &str) -> Result<PriceSeries, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| CorpusError::MalformedRow {
            line,
            reason: e.to_string(),
        })?;
        if record.len() != 2 {
            return Err(CorpusError::MalformedRow {
                line,
                reason: format!("expected 2 columns, found {}", record.len()),
            });
        }
        let date = parse_date(&record[0]).ok_or_else(|| CorpusError::MalformedRow {
            line,
            reason: format!("bad date `{}`", &record[0]),
        })?;
        let close: f64 = record[1].parse().map_err(|_| CorpusError::MalformedRow {
            line,
            reason: format!("bad close `{}`", &record[1]),
        })?;
        entries.push((date, close));
    }
    PriceSeries::new(entries)
}

/// One analyst report as published on a given day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub date: NaiveDate,
    pub title: String,
    pub body: String,
    #[serde(rename = "views")]
    pub view_count: u64,
}

/// What to do with reports dated on days the market was closed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonTradingReports {
    #[default]
    NextTradingDay,
    Drop,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReportCorpus {
    docs: BTreeMap<NaiveDate, Vec<ReportDoc>>,
}

impl ReportCorpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, doc: ReportDoc) {
        self.docs.entry(doc.date).or_default().push(doc);
    }

    pub fn docs_on(&self, d: NaiveDate) -> &[ReportDoc] {
        self.docs.get(&d).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.docs.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.docs.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Re-key every report onto a trading day of `series`.
    ///
    /// Reports after the last trading day are always dropped.
    pub fn align_to_trading_days(&self, series: &PriceSeries, policy: NonTradingReports) -> Self {
        let mut out = Self::new();
        for doc in self.docs.values().flatten() {
            if series.position_of(doc.date).is_some() {
                out.insert(doc.clone());
                continue;
            }
            if policy == NonTradingReports::Drop {
                continue;
            }
            if let Some(next) = series.dates().find(|&d| d > doc.date) {
                out.insert(ReportDoc {
                    date: next,
                    ..doc.clone()
                });
            }
        }
        out
    }

    /// JSON-lines rendering, date order then insertion order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for doc in self.docs.values().flatten() {
            out.push_str(&serde_json::to_string(doc).expect("report serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        let mut f = fs::File::create(path).map_err(io_err(path))?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(io_err(path))
    }
}

/// Load reports from a `.jsonl` file or from every `.jsonl` file in a directory
/// (visited in file-name order).
pub fn load_reports(path: &Path) -> Result<ReportCorpus, CorpusError> {
    let mut corpus = ReportCorpus::new();
    if path.is_dir() {
        let mut files: Vec<_> = fs::read_dir(path)
            .map_err(io_err(path))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
            .collect();
        files.sort();
        for file in files {
            read_jsonl_into(&file, &mut corpus)?;
        }
    } else {
        read_jsonl_into(path, &mut corpus)?;
    }
    Ok(corpus)
}

fn read_jsonl_into(path: &Path, corpus: &mut ReportCorpus) -> Result<(), CorpusError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let name = path.display().to_string();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        corpus.insert(parse_report_line(&line, &name, i + 1)?);
    }
    Ok(())
}

/// Parse one JSON-lines report record.
pub fn parse_report_line(line: &str, source_name: &str, line_no: usize) -> Result<ReportDoc, CorpusError> {
    let malformed = |reason: String| CorpusError::MalformedRecord {
        source_name: source_name.to_string(),
        line: line_no,
        reason,
    };
    let missing = |field| CorpusError::MissingField {
        source_name: source_name.to_string(),
        line: line_no,
        field,
    };
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| malformed("record is not a JSON object".into()))?;

    let text_field = |field: &'static str| -> Result<String, CorpusError> {
        match obj.get(field) {
            None | Some(serde_json::Value::Null) => Err(missing(field)),
            Some(serde_json::Value::String(s)) => Ok(s.clone()),
            Some(other) => Err(malformed(format!("`{field}` must be a string, got {other}"))),
        }
    };

    let date_text = text_field("date")?;
    let date = parse_date(&date_text).ok_or_else(|| malformed(format!("bad date `{date_text}`")))?;
    let title = text_field("title")?;
    let body = text_field("body")?;
    if body.trim().is_empty() {
        return Err(malformed("body is empty".into()));
    }
    let view_count = match obj.get("views") {
        None | Some(serde_json::Value::Null) => return Err(missing("views")),
        Some(v) => v
            .as_u64()
            .ok_or_else(|| malformed(format!("`views` must be a nonnegative integer, got {v}")))?,
    };
    Ok(ReportDoc {
        date,
        title,
        body,
        view_count,
    })
}

/// The `n` most-viewed reports for `d`; ties go to the lexicographically
/// smaller title.
pub fn top_reports(corpus: &ReportCorpus, d: NaiveDate, n: usize) -> Result<Vec<ReportDoc>, CorpusError> {
    if n == 0 {
        return Err(CorpusError::InvalidCount);
    }
    let docs = corpus.docs_on(d);
    if docs.is_empty() {
        return Err(CorpusError::NoReportsForDate(d));
    }
    let mut ranked: Vec<&ReportDoc> = docs.iter().collect();
    ranked.sort_by(|a, b| b.view_count.cmp(&a.view_count).then_with(|| a.title.cmp(&b.title)));
    Ok(ranked.into_iter().take(n).cloned().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(s: &str) -> NaiveDate {
        parse_date(s).unwrap()
    }

    fn doc(d: &str, title: &str, views: u64) -> ReportDoc {
        ReportDoc {
            date: date(d),
            title: title.into(),
            body: format!("body of {title}"),
            view_count: views,
        }
    }

    #[test]
    fn parses_two_rows() {
        let s = parse_price_csv("date,close\n2023-06-01,345.2\n2023-06-02,346.9\n").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.close_at(1), Some(346.9));
    }

    #[test]
    fn rejects_out_of_order_dates() {
        let err = parse_price_csv("date,close\n2023-06-02,345.2\n2023-06-01,346.9\n").unwrap_err();
        assert!(matches!(err, CorpusError::NonMonotonicDates { line: 3, .. }));
        let err = parse_price_csv("date,close\n2023-06-02,345.2\n2023-06-02,346.9\n").unwrap_err();
        assert!(matches!(err, CorpusError::NonMonotonicDates { .. }));
    }

    #[test]
    fn rejects_bad_close_and_date() {
        let err = parse_price_csv("date,close\n2023-06-01,abc\n").unwrap_err();
        assert!(matches!(err, CorpusError::MalformedRow { line: 2, .. }));
        let err = parse_price_csv("date,close\n06/01/2023,1.0\n").unwrap_err();
        assert!(matches!(err, CorpusError::MalformedRow { .. }));
        let err = parse_price_csv("date,close\n2023-06-01,-3\n").unwrap_err();
        assert!(matches!(err, CorpusError::MalformedRow { .. }));
        assert!(matches!(parse_price_csv("date,close\n"), Err(CorpusError::EmptySeries)));
    }

    #[test]
    fn trading_offset_skips_holidays() {
        // Mon, Tue, Wed, Fri: Thursday is a holiday.
        let s = PriceSeries::new(vec![
            (date("2023-06-05"), 1.0),
            (date("2023-06-06"), 1.0),
            (date("2023-06-07"), 1.0),
            (date("2023-06-09"), 1.0),
        ])
        .unwrap();
        assert_eq!(s.trading_offset(date("2023-06-07"), 1).unwrap(), date("2023-06-09"));
        assert_eq!(s.trading_offset(date("2023-06-07"), 0).unwrap(), date("2023-06-07"));
        assert!(matches!(
            s.trading_offset(date("2023-06-05"), -1),
            Err(CorpusError::OutOfRange { .. })
        ));
        assert!(matches!(
            s.trading_offset(date("2023-06-08"), 0),
            Err(CorpusError::UnknownDate(_))
        ));
    }

    #[test]
    fn view_hides_later_positions() {
        let s = parse_price_csv("date,close\n2023-06-01,1\n2023-06-02,2\n2023-06-05,3\n").unwrap();
        let v = s.view_until(1);
        assert_eq!(v.len(), 2);
        assert_eq!(v.close_at(2), None);
        assert_eq!(v.position_of(date("2023-06-05")), None);
    }

    #[test]
    fn groups_reports_by_date() {
        let lines = [
            r#"{"date":"2023-06-01","title":"a","body":"x","views":1}"#,
            r#"{"date":"2023-06-01","title":"b","body":"y","views":2}"#,
            r#"{"date":"2023-06-01","title":"c","body":"z","views":3}"#,
        ];
        let mut corpus = ReportCorpus::new();
        for (i, l) in lines.iter().enumerate() {
            corpus.insert(parse_report_line(l, "mem", i + 1).unwrap());
        }
        assert_eq!(corpus.dates().count(), 1);
        assert_eq!(corpus.docs_on(date("2023-06-01")).len(), 3);
    }

    #[test]
    fn missing_body_is_reported() {
        let err = parse_report_line(r#"{"date":"2023-06-01","title":"a","views":1}"#, "f", 4).unwrap_err();
        assert!(matches!(
            err,
            CorpusError::MissingField {
                field: "body",
                line: 4,
                ..
            }
        ));
        let err = parse_report_line("not json", "f", 1).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedRecord { .. }));
        let err = parse_report_line(r#"{"date":"2023-06-01","title":"a","body":"b","views":-1}"#, "f", 1).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedRecord { .. }));
    }

    #[test]
    fn empty_input_is_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        fs::write(&path, "").unwrap();
        assert!(load_reports(&path).unwrap().is_empty());
        assert!(load_reports(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn top_reports_by_views() {
        let mut c = ReportCorpus::new();
        for (t, v) in [("a", 120), ("b", 80), ("c", 300), ("d", 10)] {
            c.insert(doc("2023-06-01", t, v));
        }
        let top = top_reports(&c, date("2023-06-01"), 3).unwrap();
        let views: Vec<_> = top.iter().map(|d| d.view_count).collect();
        assert_eq!(views, vec![300, 120, 80]);
        assert!(matches!(
            top_reports(&c, date("2023-06-02"), 3),
            Err(CorpusError::NoReportsForDate(_))
        ));
        assert!(matches!(
            top_reports(&c, date("2023-06-01"), 0),
            Err(CorpusError::InvalidCount)
        ));
    }

    #[test]
    fn top_reports_fewer_than_n_and_ties() {
        let mut c = ReportCorpus::new();
        c.insert(doc("2023-06-01", "zeta", 5));
        c.insert(doc("2023-06-01", "alpha", 5));
        let top = top_reports(&c, date("2023-06-01"), 3).unwrap();
        assert_eq!(top.len(), 2);
        assert_eq!(top[0].title, "alpha");
    }

    #[test]
    fn weekend_reports_move_to_next_session() {
        let s = parse_price_csv("date,close\n2023-06-02,1\n2023-06-05,2\n").unwrap();
        let mut c = ReportCorpus::new();
        c.insert(doc("2023-06-03", "sat", 1));
        c.insert(doc("2023-06-02", "fri", 1));
        c.insert(doc("2023-06-09", "late", 1));
        let next = c.align_to_trading_days(&s, NonTradingReports::NextTradingDay);
        assert_eq!(next.docs_on(date("2023-06-05"))[0].title, "sat");
        assert_eq!(next.len(), 2);
        let dropped = c.align_to_trading_days(&s, NonTradingReports::Drop);
        assert_eq!(dropped.len(), 1);
    }
}
