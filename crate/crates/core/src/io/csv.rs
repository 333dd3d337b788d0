//! Normalized CSV inputs.
//!
//! deaths:   `country,date,new_deaths`
//! mobility: `country,date,category,pct_change`
//!
//! Rows that parse but violate a data rule (negative deaths, unknown
//! category, duplicate key) are rejected individually and reported; rows
//! that do not parse at all abort the read.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mobility::{MobilityCategory, MobilitySeries};
use crate::panel::{Panel, PanelError, UnitSeries};

pub const DEATHS_HEADER: [&str; 3] = ["country", "date", "new_deaths"];
pub const MOBILITY_HEADER: [&str; 4] = ["country", "date", "category", "pct_change"];
pub const OUTCOME_NAME: &str = "daily_deaths";

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("malformed header: expected `{expected}`, found `{found}`")]
    MalformedHeader { expected: String, found: String },
    #[error("unparseable row at line {line}: {reason}")]
    UnparseableRow { line: u64, reason: String },
    #[error(transparent)]
    Panel(#[from] PanelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct DeathsData {
    pub panel: Panel,
    pub rejected: Vec<RejectedRow>,
}

#[derive(Debug, Clone)]
pub struct MobilityData {
    pub series: BTreeMap<String, MobilitySeries>,
    pub rejected: Vec<RejectedRow>,
}

fn reader<'a>(bytes: &'a [u8], expected: &[&str]) -> Result<csv::Reader<&'a [u8]>, CsvError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let headers = rdr.headers().map_err(|e| CsvError::MalformedHeader {
        expected: expected.join(","),
        found: e.to_string(),
    })?;
    if headers.iter().ne(expected.iter().copied()) {
        return Err(CsvError::MalformedHeader {
            expected: expected.join(","),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(rdr)
}

fn records<R: std::io::Read>(rdr: &mut csv::Reader<R>) -> impl Iterator<Item = Result<(u64, csv::StringRecord), CsvError>> + '_ {
    rdr.records().map(|r| match r {
        Ok(rec) => Ok((rec.position().map_or(0, |p| p.line()), rec)),
        Err(e) => Err(CsvError::UnparseableRow {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        }),
    })
}

fn parse_date(line: u64, s: &str) -> Result<NaiveDate, CsvError> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| CsvError::UnparseableRow {
        line,
        reason: format!("bad date `{s}`: {e}"),
    })
}

fn parse_number(line: u64, s: &str) -> Result<f64, CsvError> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| CsvError::UnparseableRow {
            line,
            reason: format!("bad number `{s}`"),
        })
}

fn nonempty(line: u64, s: &str) -> Result<String, CsvError> {
    if s.is_empty() {
        Err(CsvError::UnparseableRow {
            line,
            reason: "empty country".into(),
        })
    } else {
        Ok(s.to_string())
    }
}

/// Lay dated values out on a gap-free calendar; absent days are unobserved.
fn to_series(unit_id: &str, points: &BTreeMap<NaiveDate, f64>) -> Result<UnitSeries, PanelError> {
    let (&first, _) = points.first_key_value().ok_or_else(|| PanelError::EmptySeries(unit_id.into()))?;
    let (&last, _) = points.last_key_value().expect("nonempty");
    let len = (last - first).num_days() as usize + 1;
    let mut values = vec![0.0; len];
    let mut observed = vec![false; len];
    for (date, v) in points {
        let i = (*date - first).num_days() as usize;
        values[i] = *v;
        observed[i] = true;
    }
    UnitSeries::new(unit_id, first, values, observed)
}

pub fn parse_deaths_csv(bytes: &[u8]) -> Result<DeathsData, CsvError> {
    let mut rdr = reader(bytes, &DEATHS_HEADER)?;
    let mut by_country: BTreeMap<String, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
    let mut rejected = Vec::new();
    for rec in records(&mut rdr) {
        let (line, rec) = rec?;
        let country = nonempty(line, &rec[0])?;
        let date = parse_date(line, &rec[1])?;
        let value = parse_number(line, &rec[2])?;
        if value < 0.0 {
            rejected.push(RejectedRow {
                line,
                reason: format!("negative new_deaths {value}"),
            });
            continue;
        }
        let days = by_country.entry(country).or_default();
        if days.contains_key(&date) {
            rejected.push(RejectedRow {
                line,
                reason: format!("duplicate row for {} {date}", &rec[0]),
            });
            continue;
        }
        days.insert(date, value);
    }
    let units = by_country
        .iter()
        .map(|(c, pts)| to_series(c, pts))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DeathsData {
        panel: Panel::new(OUTCOME_NAME, units)?,
        rejected,
    })
}

pub fn parse_mobility_csv(bytes: &[u8]) -> Result<MobilityData, CsvError> {
    let mut rdr = reader(bytes, &MOBILITY_HEADER)?;
    let mut points: BTreeMap<String, BTreeMap<MobilityCategory, BTreeMap<NaiveDate, f64>>> = BTreeMap::new();
    let mut rejected = Vec::new();
    for rec in records(&mut rdr) {
        let (line, rec) = rec?;
        let country = nonempty(line, &rec[0])?;
        let date = parse_date(line, &rec[1])?;
        let value = parse_number(line, &rec[3])?;
        let category = match rec[2].parse::<MobilityCategory>() {
            Ok(c) => c,
            Err(e) => {
                rejected.push(RejectedRow {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let days = points.entry(country).or_default().entry(category).or_default();
        if days.contains_key(&date) {
            rejected.push(RejectedRow {
                line,
                reason: format!("duplicate row for {} {date} {category}", &rec[0]),
            });
            continue;
        }
        days.insert(date, value);
    }
    let mut series = BTreeMap::new();
    for (country, cats) in &points {
        let mut per_cat = MobilitySeries::new();
        for (cat, pts) in cats {
            per_cat.insert(*cat, to_series(country, pts)?);
        }
        series.insert(country.clone(), per_cat);
    }
    Ok(MobilityData { series, rejected })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_deaths() {
        let csv = "country,date,new_deaths\nA,2020-03-01,1\nA,2020-03-02,2\nA,2020-03-03,3\nB,2020-03-02,0\nB,2020-03-03,5\nB,2020-03-04,1\n";
        let d = parse_deaths_csv(csv.as_bytes()).unwrap();
        assert_eq!(d.panel.len(), 2);
        assert!(d.panel.units().iter().all(|u| u.len() == 3));
        assert_eq!(d.panel.unit("B").unwrap().calendar_start(), NaiveDate::from_ymd_opt(2020, 3, 2).unwrap());
        assert!(d.rejected.is_empty());
    }

    #[test]
    fn gap_becomes_missing() {
        let csv = "country,date,new_deaths\nA,2020-03-03,3\nA,2020-03-01,1\n";
        let d = parse_deaths_csv(csv.as_bytes()).unwrap();
        let a = d.panel.unit("A").unwrap();
        assert_eq!(a.observed(), &[true, false, true]);
        assert_eq!(a.get(2), Some(3.0));
    }

    #[test]
    fn negative_and_duplicate_rows_rejected() {
        let csv = "country,date,new_deaths\nA,2020-03-01,1\nA,2020-03-02,-4\nA,2020-03-01,7\n";
        let d = parse_deaths_csv(csv.as_bytes()).unwrap();
        assert_eq!(d.rejected.len(), 2);
        assert_eq!(d.rejected[0].line, 3);
        assert_eq!(d.rejected[1].line, 4);
        assert_eq!(d.panel.unit("A").unwrap().values(), &[1.0]);
    }

    #[test]
    fn bad_header() {
        let err = parse_deaths_csv(b"country,day,new_deaths\nA,2020-03-01,1\n").unwrap_err();
        assert!(matches!(err, CsvError::MalformedHeader { .. }));
    }

    #[test]
    fn unparseable_row_reports_line() {
        let err = parse_deaths_csv(b"country,date,new_deaths\nA,2020-03-01,1\nA,03/02/2020,1\n").unwrap_err();
        assert!(matches!(err, CsvError::UnparseableRow { line: 3, .. }), "{err}");
        let err = parse_deaths_csv(b"country,date,new_deaths\nA,2020-03-01\n").unwrap_err();
        assert!(matches!(err, CsvError::UnparseableRow { line: 2, .. }), "{err}");
    }

    #[test]
    fn mobility_two_categories() {
        let csv = "country,date,category,pct_change\nA,2020-03-01,parks ,-5\nA,2020-03-02,parks,-6\nA,2020-03-01,workplaces,-10\nA,2020-03-02,workplaces,-12\n";
        let m = parse_mobility_csv(csv.as_bytes()).unwrap();
        let a = &m.series["A"];
        assert_eq!(a.len(), 2);
        assert_eq!(a[&MobilityCategory::Parks].values(), &[-5.0, -6.0]);
        assert_eq!(a[&MobilityCategory::Workplaces].len(), 2);
    }

    #[test]
    fn unknown_category_rejected() {
        let csv = "country,date,category,pct_change\nA,2020-03-01,beaches,-5\nA,2020-03-01,parks,1\n";
        let m = parse_mobility_csv(csv.as_bytes()).unwrap();
        assert_eq!(m.rejected, vec![RejectedRow { line: 2, reason: "unknown mobility category `beaches`".into() }]);
    }
}
