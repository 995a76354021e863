//! FRED-style CSV ingestion and weekday panel alignment.
//!
//! Input files carry one series each: a header row, then `date,value` rows in
//! `YYYY-MM-DD` order. FRED exports mark days without a quote (holidays inside
//! the weekday calendar) with a lone `.` in the value column; those become
//! explicit missing points here, never silently dropped rows.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A raw single-column series keyed by calendar day.
#[derive(Clone, Debug, PartialEq)]
pub struct DatedSeries {
    pub id: String,
    points: Vec<(NaiveDate, Option<f64>)>,
}

impl DatedSeries {
    /// Validates strictly increasing, duplicate-free dates.
    pub fn new(id: impl Into<String>, points: Vec<(NaiveDate, Option<f64>)>) -> Result<DatedSeries> {
        for pair in points.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::Data(format!(
                    "dates out of order: {} then {}",
                    pair[0].0, pair[1].0
                )));
            }
        }
        Ok(DatedSeries { id: id.into(), points })
    }

    pub fn points(&self) -> &[(NaiveDate, Option<f64>)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.points.first().map(|p| p.0)
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.points.last().map(|p| p.0)
    }
}

/// How to resolve days where a yield quote is missing inside the weekday
/// calendar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MissingPolicy {
    /// Keep only days where every series has a value.
    #[default]
    DropDay,
    /// Carry the last observed value forward; days before the first
    /// observation are dropped.
    ForwardFill,
}

/// Calendar-aligned weekday panel: 1-year yield, 10-year yield, recession flag.
#[derive(Clone, Debug, PartialEq)]
pub struct YieldPanel {
    dates: Vec<NaiveDate>,
    y1: Vec<f64>,
    y10: Vec<f64>,
    recession: Vec<u8>,
}

impl YieldPanel {
    pub fn new(dates: Vec<NaiveDate>, y1: Vec<f64>, y10: Vec<f64>, recession: Vec<u8>) -> Result<YieldPanel> {
        if dates.len() != y1.len() || dates.len() != y10.len() || dates.len() != recession.len() {
            return Err(Error::Data(format!(
                "panel column lengths differ: {} dates, {} y1, {} y10, {} recession",
                dates.len(),
                y1.len(),
                y10.len(),
                recession.len()
            )));
        }
        for pair in dates.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::Data(format!("panel dates out of order at {}", pair[1])));
            }
        }
        if y1.iter().chain(&y10).any(|v| !v.is_finite()) {
            return Err(Error::Data("panel contains non-finite yields".into()));
        }
        if recession.iter().any(|&r| r > 1) {
            return Err(Error::Data("recession flags must be 0 or 1".into()));
        }
        Ok(YieldPanel { dates, y1, y10, recession })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn y1(&self) -> &[f64] {
        &self.y1
    }

    pub fn y10(&self) -> &[f64] {
        &self.y10
    }

    pub fn recession(&self) -> &[u8] {
        &self.recession
    }

    /// Row-major day x feature matrix, features ordered (y1, y10).
    pub fn features(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * 2);
        for i in 0..self.len() {
            out.push(self.y1[i]);
            out.push(self.y10[i]);
        }
        out
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "date,y1,y10,recession")?;
        for i in 0..self.len() {
            writeln!(w, "{},{},{},{}", self.dates[i], self.y1[i], self.y10[i], self.recession[i])?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<YieldPanel> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let (mut dates, mut y1, mut y10, mut rec) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for record in rdr.records() {
            let record = record.map_err(|e| Error::Data(format!("panel csv: {e}")))?;
            if record.len() != 4 {
                return Err(Error::Data(format!("panel csv: expected 4 columns, got {}", record.len())));
            }
            dates.push(parse_date(&record[0])?);
            y1.push(parse_value(&record[1])?);
            y10.push(parse_value(&record[2])?);
            let r: u8 = record[3]
                .trim()
                .parse()
                .map_err(|_| Error::Data(format!("panel csv: bad recession flag {:?}", &record[3])))?;
            rec.push(r);
        }
        if dates.is_empty() {
            return Err(Error::Data("panel csv: no data rows".into()));
        }
        YieldPanel::new(dates, y1, y10, rec)
    }

    pub fn load_csv(path: &Path) -> Result<YieldPanel> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
        YieldPanel::read_csv(std::io::BufReader::new(file))
    }
}

fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|_| Error::Data(format!("malformed date {s:?} (expected YYYY-MM-DD)")))
}

fn parse_value(s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Data(format!("non-numeric value {s:?}")))?;
    if !v.is_finite() {
        return Err(Error::Data(format!("non-finite value {s:?}")));
    }
    Ok(v)
}

/// Parses a FRED CSV export: header row, then `date,value` rows. `.` or an
/// empty field marks a missing value.
pub fn parse_fred_csv<R: Read>(reader: R) -> Result<DatedSeries> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let id = rdr
        .headers()
        .map_err(|e| Error::Data(format!("fred csv: {e}")))?
        .get(1)
        .unwrap_or("value")
        .to_string();
    let mut points = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Data(format!("fred csv: {e}")))?;
        if record.len() < 2 {
            return Err(Error::Data(format!("fred csv: expected 2 columns, got {}", record.len())));
        }
        let date = parse_date(&record[0])?;
        let raw = record[1].trim();
        let value = if raw == "." || raw.is_empty() { None } else { Some(parse_value(raw)?) };
        points.push((date, value));
    }
    if points.is_empty() {
        return Err(Error::Data("fred csv: no data rows".into()));
    }
    DatedSeries::new(id, points)
}

pub fn load_fred_csv(path: &Path) -> Result<DatedSeries> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    parse_fred_csv(std::io::BufReader::new(file))
}

/// Aligns the three raw series onto the weekday calendar of their common date
/// range. Missing yields resolve per `policy`; the recession flag must be 0/1
/// on every kept day.
pub fn align_panel(
    y1: &DatedSeries,
    y10: &DatedSeries,
    rec: &DatedSeries,
    policy: MissingPolicy,
) -> Result<YieldPanel> {
    let start = [y1.first_date(), y10.first_date(), rec.first_date()]
        .into_iter()
        .flatten()
        .max()
        .ok_or_else(|| Error::Data("empty input series".into()))?;
    let end = [y1.last_date(), y10.last_date(), rec.last_date()]
        .into_iter()
        .flatten()
        .min()
        .ok_or_else(|| Error::Data("empty input series".into()))?;
    if start > end {
        return Err(Error::Data(format!(
            "series date ranges do not intersect ({start} > {end})"
        )));
    }

    let index = |s: &DatedSeries| -> HashMap<NaiveDate, Option<f64>> {
        s.points().iter().cloned().collect()
    };
    let (m1, m10, mr) = (index(y1), index(y10), index(rec));

    let mut dates = Vec::new();
    let mut c1 = Vec::new();
    let mut c10 = Vec::new();
    let mut cr = Vec::new();
    let (mut last1, mut last10, mut lastr): (Option<f64>, Option<f64>, Option<f64>) = (None, None, None);

    let mut day = start;
    while day <= end {
        if matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            day = day.succ_opt().unwrap();
            continue;
        }
        let lookup = |m: &HashMap<NaiveDate, Option<f64>>| m.get(&day).copied().flatten();
        let (v1, v10, vr) = (lookup(&m1), lookup(&m10), lookup(&mr));
        let resolved = match policy {
            MissingPolicy::DropDay => match (v1, v10, vr) {
                (Some(a), Some(b), Some(r)) => Some((a, b, r)),
                _ => None,
            },
            MissingPolicy::ForwardFill => {
                last1 = v1.or(last1);
                last10 = v10.or(last10);
                lastr = vr.or(lastr);
                match (last1, last10, lastr) {
                    (Some(a), Some(b), Some(r)) => Some((a, b, r)),
                    _ => None,
                }
            }
        };
        if let Some((a, b, r)) = resolved {
            if r != 0.0 && r != 1.0 {
                return Err(Error::Data(format!("recession flag on {day} is {r}, not 0/1")));
            }
            dates.push(day);
            c1.push(a);
            c10.push(b);
            cr.push(r as u8);
        }
        day = day.succ_opt().unwrap();
    }

    if dates.is_empty() {
        return Err(Error::Data("alignment produced an empty panel".into()));
    }
    YieldPanel::new(dates, c1, c10, cr)
}

/// Subpanel with dates in `[start, end]`; the input is untouched.
pub fn slice_period(panel: &YieldPanel, start: NaiveDate, end: NaiveDate) -> Result<YieldPanel> {
    if start > end {
        return Err(Error::Config(format!("slice start {start} is after end {end}")));
    }
    let lo = panel.dates.partition_point(|d| *d < start);
    let hi = panel.dates.partition_point(|d| *d <= end);
    if lo == hi {
        return Err(Error::Data(format!("no panel days in [{start}, {end}]")));
    }
    YieldPanel::new(
        panel.dates[lo..hi].to_vec(),
        panel.y1[lo..hi].to_vec(),
        panel.y10[lo..hi].to_vec(),
        panel.recession[lo..hi].to_vec(),
    )
}

/// Count of distinct recession episodes (maximal runs of consecutive 1 flags).
pub fn recession_episodes(panel: &YieldPanel) -> usize {
    let mut episodes = 0;
    let mut inside = false;
    for &r in &panel.recession {
        if r == 1 && !inside {
            episodes += 1;
        }
        inside = r == 1;
    }
    episodes
}

pub fn date(s: &str) -> Result<NaiveDate> {
    parse_date(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        date(s).unwrap()
    }

    fn series(id: &str, rows: &[(&str, Option<f64>)]) -> DatedSeries {
        DatedSeries::new(id, rows.iter().map(|(s, v)| (d(s), *v)).collect()).unwrap()
    }

    #[test]
    fn empty_input_is_an_error() {
        let err = parse_fred_csv("observation_date,DGS1\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("no data rows"));
    }

    #[test]
    fn rows_parse_in_order() {
        let s = parse_fred_csv("observation_date,DGS1\n1962-01-02,1.0\n1962-01-03,2.0\n".as_bytes()).unwrap();
        assert_eq!(s.id, "DGS1");
        assert_eq!(s.len(), 2);
        assert_eq!(s.points()[0], (d("1962-01-02"), Some(1.0)));
        assert_eq!(s.points()[1], (d("1962-01-03"), Some(2.0)));
    }

    #[test]
    fn dot_marker_becomes_explicit_missing() {
        // FRED exports mark holidays with "." in the value column.
        let s = parse_fred_csv("observation_date,DGS10\n1962-05-28,3.9\n1962-05-29,.\n".as_bytes()).unwrap();
        assert_eq!(s.points()[1], (d("1962-05-29"), None));
    }

    #[test]
    fn malformed_rows_are_errors() {
        assert!(parse_fred_csv("h,v\nnot-a-date,1.0\n".as_bytes()).is_err());
        assert!(parse_fred_csv("h,v\n1962-01-02,abc\n".as_bytes()).is_err());
        // out-of-order dates
        assert!(parse_fred_csv("h,v\n1962-01-03,1.0\n1962-01-02,2.0\n".as_bytes()).is_err());
        // duplicate dates
        assert!(parse_fred_csv("h,v\n1962-01-03,1.0\n1962-01-03,2.0\n".as_bytes()).is_err());
    }

    #[test]
    fn single_day_alignment() {
        // 1962-01-02 was a Tuesday.
        let y1 = series("y1", &[("1962-01-02", Some(3.0))]);
        let y10 = series("y10", &[("1962-01-02", Some(4.0))]);
        let rec = series("rec", &[("1962-01-02", Some(0.0))]);
        let p = align_panel(&y1, &y10, &rec, MissingPolicy::DropDay).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.y1(), &[3.0]);
        assert_eq!(p.y10(), &[4.0]);
        assert_eq!(p.recession(), &[0]);
    }

    #[test]
    fn drop_day_removes_days_with_any_missing_series() {
        let y1 = series("y1", &[("1962-01-02", Some(3.0)), ("1962-01-03", None), ("1962-01-04", Some(3.2))]);
        let y10 = series("y10", &[("1962-01-02", Some(4.0)), ("1962-01-03", Some(4.1)), ("1962-01-04", Some(4.2))]);
        let rec = series("rec", &[("1962-01-02", Some(0.0)), ("1962-01-03", Some(0.0)), ("1962-01-04", Some(0.0))]);
        let p = align_panel(&y1, &y10, &rec, MissingPolicy::DropDay).unwrap();
        assert_eq!(p.dates(), &[d("1962-01-02"), d("1962-01-04")]);
    }

    #[test]
    fn forward_fill_carries_last_value() {
        let y1 = series("y1", &[("1962-01-02", Some(3.0)), ("1962-01-03", None), ("1962-01-04", Some(3.2))]);
        let y10 = series("y10", &[("1962-01-02", Some(4.0)), ("1962-01-03", Some(4.1)), ("1962-01-04", Some(4.2))]);
        let rec = series("rec", &[("1962-01-02", Some(0.0)), ("1962-01-03", Some(0.0)), ("1962-01-04", Some(1.0))]);
        let p = align_panel(&y1, &y10, &rec, MissingPolicy::ForwardFill).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.y1(), &[3.0, 3.0, 3.2]);
        assert_eq!(p.recession(), &[0, 0, 1]);
    }

    #[test]
    fn weekends_never_enter_the_panel() {
        // 1962-01-05 Fri .. 1962-01-08 Mon
        let rows: Vec<(&str, Option<f64>)> = vec![
            ("1962-01-05", Some(1.0)),
            ("1962-01-06", Some(1.0)),
            ("1962-01-07", Some(1.0)),
            ("1962-01-08", Some(1.0)),
        ];
        let y1 = series("y1", &rows);
        let y10 = series("y10", &rows);
        let rec = series("rec", &[("1962-01-05", Some(0.0)), ("1962-01-06", Some(0.0)), ("1962-01-07", Some(0.0)), ("1962-01-08", Some(0.0))]);
        let p = align_panel(&y1, &y10, &rec, MissingPolicy::DropDay).unwrap();
        assert_eq!(p.dates(), &[d("1962-01-05"), d("1962-01-08")]);
    }

    #[test]
    fn non_binary_recession_is_an_error() {
        let y1 = series("y1", &[("1962-01-02", Some(3.0))]);
        let y10 = series("y10", &[("1962-01-02", Some(4.0))]);
        let rec = series("rec", &[("1962-01-02", Some(0.5))]);
        assert!(align_panel(&y1, &y10, &rec, MissingPolicy::DropDay).is_err());
    }

    #[test]
    fn empty_intersection_is_an_error() {
        let y1 = series("y1", &[("1962-01-02", Some(3.0))]);
        let y10 = series("y10", &[("1963-01-02", Some(4.0))]);
        let rec = series("rec", &[("1962-01-02", Some(0.0))]);
        assert!(align_panel(&y1, &y10, &rec, MissingPolicy::DropDay).is_err());
    }

    fn toy_panel() -> YieldPanel {
        let y1 = series(
            "y1",
            &[("1990-01-01", Some(7.0)), ("1990-01-02", Some(7.1)), ("1990-01-03", Some(7.2)), ("1990-01-04", Some(7.3))],
        );
        let y10 = series(
            "y10",
            &[("1990-01-01", Some(8.0)), ("1990-01-02", Some(8.1)), ("1990-01-03", Some(8.2)), ("1990-01-04", Some(8.3))],
        );
        let rec = series(
            "rec",
            &[("1990-01-01", Some(0.0)), ("1990-01-02", Some(1.0)), ("1990-01-03", Some(1.0)), ("1990-01-04", Some(0.0))],
        );
        align_panel(&y1, &y10, &rec, MissingPolicy::DropDay).unwrap()
    }

    #[test]
    fn slice_identity_and_single_day() {
        let p = toy_panel();
        let full = slice_period(&p, d("1990-01-01"), d("1990-01-04")).unwrap();
        assert_eq!(full, p);
        let one = slice_period(&p, d("1990-01-02"), d("1990-01-02")).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.y1(), &[7.1]);
        assert!(slice_period(&p, d("1991-01-01"), d("1991-12-31")).is_err());
    }

    #[test]
    fn csv_round_trip_is_identical() {
        let p = toy_panel();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let back = YieldPanel::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn episode_counting() {
        let p = toy_panel();
        assert_eq!(recession_episodes(&p), 1);
        let q = YieldPanel::new(
            vec![d("1990-01-01"), d("1990-01-02"), d("1990-01-03"), d("1990-01-04"), d("1990-01-05")],
            vec![1.0; 5],
            vec![2.0; 5],
            vec![1, 0, 1, 1, 0],
        )
        .unwrap();
        assert_eq!(recession_episodes(&q), 2);
    }
}
