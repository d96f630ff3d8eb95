//! Reading and writing the on-disk CSV schemas.

use chrono::{DateTime, SecondsFormat, Utc};

use crate::error::{Result, StoreError};

pub const ACTUALS_HEADER: [&str; 2] = ["timestamp_utc", "carbon_intensity_gco2eq_kwh"];
pub const FORECAST_HEADER: [&str; 5] = [
    "target_timestamp_utc",
    "yhat",
    "lower",
    "upper",
    "calibrated",
];

/// Fixed-point with at most six decimals, trailing zeros removed.
pub fn format_value(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// `v` as it reads back after a write.
pub fn stored_precision(v: f64) -> f64 {
    format_value(v).parse().expect("formatted float parses")
}

pub fn format_timestamp(ts: DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .ok()
        .map(|t| t.with_timezone(&Utc))
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Vec<u8> {
    w.into_inner().expect("in-memory writer cannot fail")
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::None)
        .from_reader(text.as_bytes())
}

fn check_header(r: &mut csv::Reader<&[u8]>, expected: &[&str], origin: &str) -> Result<()> {
    let header = r
        .headers()
        .map_err(|e| StoreError::schema(origin, e.to_string()))?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(StoreError::schema(
            origin,
            format!("expected header `{}`", expected.join(",")),
        ));
    }
    Ok(())
}

fn parse_number(field: &str, origin: &str, line: u64) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    let v: f64 = field.parse().map_err(|_| {
        StoreError::schema(origin, format!("line {line}: `{field}` is not a number"))
    })?;
    if !v.is_finite() || v < 0.0 {
        return Err(StoreError::schema(
            origin,
            format!("line {line}: value {v} is negative or not finite"),
        ));
    }
    Ok(Some(v))
}

pub fn write_actuals(rows: &[(DateTime<Utc>, Option<f64>)]) -> Vec<u8> {
    let mut w = writer();
    w.write_record(ACTUALS_HEADER).expect("in-memory write");
    for (ts, v) in rows {
        let value = v.map(format_value).unwrap_or_default();
        w.write_record([format_timestamp(*ts), value])
            .expect("in-memory write");
    }
    finish(w)
}

/// Parses an actuals CSV. `origin` names the source in errors.
pub fn read_actuals(text: &str, origin: &str) -> Result<Vec<(DateTime<Utc>, Option<f64>)>> {
    let mut r = reader(text);
    check_header(&mut r, &ACTUALS_HEADER, origin)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| StoreError::schema(origin, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(StoreError::schema(
                origin,
                format!("line {line}: expected 2 fields"),
            ));
        }
        let ts = parse_timestamp(&rec[0]).ok_or_else(|| {
            StoreError::schema(origin, format!("line {line}: bad timestamp `{}`", &rec[0]))
        })?;
        rows.push((ts, parse_number(&rec[1], origin, line)?));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRow {
    pub target: DateTime<Utc>,
    pub yhat: f64,
    pub bounds: Option<(f64, f64, bool)>,
}

pub fn write_forecast(rows: &[ForecastRow]) -> Vec<u8> {
    let mut w = writer();
    w.write_record(FORECAST_HEADER).expect("in-memory write");
    for row in rows {
        let (lower, upper, cal) = match row.bounds {
            Some((l, u, c)) => (format_value(l), format_value(u), c.to_string()),
            None => Default::default(),
        };
        w.write_record([
            format_timestamp(row.target),
            format_value(row.yhat),
            lower,
            upper,
            cal,
        ])
        .expect("in-memory write");
    }
    finish(w)
}

pub fn read_forecast(text: &str, origin: &str) -> Result<Vec<ForecastRow>> {
    let mut r = reader(text);
    check_header(&mut r, &FORECAST_HEADER, origin)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| StoreError::schema(origin, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 5 {
            return Err(StoreError::schema(
                origin,
                format!("line {line}: expected 5 fields"),
            ));
        }
        let target = parse_timestamp(&rec[0]).ok_or_else(|| {
            StoreError::schema(origin, format!("line {line}: bad timestamp `{}`", &rec[0]))
        })?;
        let yhat = parse_number(&rec[1], origin, line)?
            .ok_or_else(|| StoreError::schema(origin, format!("line {line}: yhat is empty")))?;
        let lower = parse_number(&rec[2], origin, line)?;
        let upper = parse_number(&rec[3], origin, line)?;
        let bounds = match (lower, upper, &rec[4]) {
            (None, None, "") => None,
            (Some(l), Some(u), c @ ("true" | "false")) => Some((l, u, c == "true")),
            _ => {
                return Err(StoreError::schema(
                    origin,
                    format!(
                        "line {line}: lower, upper and calibrated must be all set or all empty"
                    ),
                ))
            }
        };
        rows.push(ForecastRow {
            target,
            yhat,
            bounds,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    #[test]
    fn value_formatting() {
        assert_eq!(format_value(410.0), "410");
        assert_eq!(format_value(0.1 + 0.2), "0.3");
        assert_eq!(format_value(12.3456789), "12.345679");
        assert_eq!(format_value(0.0000001), "0");
    }

    #[test]
    fn actuals_bytes_are_exact() {
        let t = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
        let bytes = write_actuals(&[(t, Some(250.5)), (t + chrono::Duration::hours(1), None)]);
        assert_eq!(
            String::from_utf8(bytes).unwrap(),
            "timestamp_utc,carbon_intensity_gco2eq_kwh\n\
             2024-01-01T00:00:00Z,250.5\n\
             2024-01-01T01:00:00Z,\n"
        );
    }

    #[test]
    fn schema_errors() {
        assert!(read_actuals("ts,value\n", "x").is_err());
        assert!(read_actuals(
            "timestamp_utc,carbon_intensity_gco2eq_kwh\n2024-01-01T00:00:00Z,-1\n",
            "x"
        )
        .is_err());
        assert!(read_actuals(
            "timestamp_utc,carbon_intensity_gco2eq_kwh\nyesterday,1\n",
            "x"
        )
        .is_err());
        assert!(read_forecast(
            "target_timestamp_utc,yhat,lower,upper,calibrated\n2024-01-01T00:00:00Z,1,0,,true\n",
            "x"
        )
        .is_err());
    }

    #[test]
    fn forecast_round_trip() {
        let t = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
        let rows = vec![
            ForecastRow {
                target: t,
                yhat: 1.5,
                bounds: Some((0.0, 3.25, true)),
            },
            ForecastRow {
                target: t,
                yhat: 2.0,
                bounds: None,
            },
        ];
        let text = String::from_utf8(write_forecast(&rows)).unwrap();
        assert_eq!(read_forecast(&text, "x").unwrap(), rows);
    }

    proptest! {
        #[test]
        fn formatting_is_stable(v in 0.0f64..1e6) {
            let once = stored_precision(v);
            prop_assert_eq!(format_value(once), format_value(v));
            prop_assert!((once - v).abs() <= 5e-7);
        }
    }
}
