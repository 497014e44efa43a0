//! CSV and JSON formats.
//!
//! * SoC profile CSV: header `t,soc`, one row per sample, `t` a strictly
//!   increasing integer index.
//! * Signal CSV: header `t,r`, `r ∈ [−1, 1]`.
//! * Cycles JSON: array of `{depth, direction, kind, intervals, junction_intervals}`.
//! * Solution CSV: header `t,c,d,s,r`, one row per interval; `s` is the SoC at
//!   the end of interval `t`.
//!
//! Line numbers in parse errors are 1-based and count the header.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::RegulationSignal;
use crate::rainflow::{CycleKind, CycleSet, Direction, SocProfile};

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse { line: line as usize, message: message.into() }
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.kind() {
        csv::ErrorKind::Io(io) => Error::Io(io.to_string()),
        csv::ErrorKind::Deserialize { err, .. } => parse_err(line, err.to_string()),
        _ => parse_err(line, e.to_string()),
    }
}

/// Reads a two-column `t,<name>` CSV and returns the value column.
fn read_indexed_column<R: Read>(reader: R, name: &str) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.len() != 2 || &headers[0] != "t" || &headers[1] != name {
        return Err(parse_err(1, format!("expected header 't,{name}', found '{}'", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut values = vec![];
    let mut last: Option<i64> = None;
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let t: i64 = rec[0].parse().map_err(|_| parse_err(line, format!("t = '{}' is not an integer", &rec[0])))?;
        if last.is_some_and(|prev| t <= prev) {
            return Err(parse_err(line, format!("t = {t} does not increase")));
        }
        last = Some(t);
        let v: f64 = rec[1].parse().map_err(|_| parse_err(line, format!("{name} = '{}' is not a number", &rec[1])))?;
        if !v.is_finite() {
            return Err(parse_err(line, format!("{name} = {v} at t = {t} is not finite")));
        }
        values.push(v);
    }
    Ok(values)
}

pub fn read_profile_csv<R: Read>(reader: R, interval_hours: f64) -> Result<SocProfile> {
    let values = read_indexed_column(reader, "soc")?;
    if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
        // header is line 1
        return Err(parse_err(i as u64 + 2, format!("soc = {} is outside [0, 1]", values[i])));
    }
    SocProfile::new(values, interval_hours)
}

pub fn read_signal_csv<R: Read>(reader: R) -> Result<RegulationSignal> {
    let values = read_indexed_column(reader, "r")?;
    if let Some(i) = values.iter().position(|v| v.abs() > 1.0) {
        return Err(parse_err(i as u64 + 2, format!("r = {} is outside [-1, 1]", values[i])));
    }
    if values.is_empty() {
        return Err(parse_err(1, "signal has no samples"));
    }
    RegulationSignal::new(values)
}

fn write_indexed_column<W: Write>(writer: W, name: &str, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", name]).map_err(csv_err)?;
    for (t, v) in values.iter().enumerate() {
        w.write_record([t.to_string(), v.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_profile_csv<W: Write>(writer: W, values: &[f64]) -> Result<()> {
    write_indexed_column(writer, "soc", values)
}

pub fn write_signal_csv<W: Write>(writer: W, signal: &RegulationSignal) -> Result<()> {
    write_indexed_column(writer, "r", signal.values())
}

/// One half cycle as written to the cycles JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub depth: f64,
    pub direction: Direction,
    pub kind: CycleKind,
    pub intervals: Vec<usize>,
    pub junction_intervals: Vec<usize>,
}

pub fn cycle_records(cycles: &CycleSet) -> Vec<CycleRecord> {
    cycles
        .half_cycles
        .iter()
        .map(|h| CycleRecord {
            depth: h.depth,
            direction: h.direction,
            kind: h.kind,
            intervals: h.intervals().collect(),
            junction_intervals: h.junction_intervals.clone(),
        })
        .collect()
}

pub fn write_cycles_json<W: Write>(writer: W, cycles: &CycleSet) -> Result<()> {
    serde_json::to_writer_pretty(writer, &cycle_records(cycles)).map_err(|e| Error::Io(e.to_string()))
}

/// One row of the solution CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolutionRow {
    pub t: usize,
    pub c: f64,
    pub d: f64,
    pub s: f64,
    pub r: f64,
}

/// `soc` holds `T + 1` samples starting with the initial SoC.
pub fn write_solution_csv<W: Write>(
    writer: W,
    charge: &[f64],
    discharge: &[f64],
    soc: &[f64],
    signal: &RegulationSignal,
) -> Result<()> {
    let t = signal.len();
    for (what, len) in [("charge", charge.len()), ("discharge", discharge.len()), ("soc", soc.len().saturating_sub(1))] {
        if len != t {
            return Err(Error::InvalidParameter(format!("{what} has {len} intervals, signal has {t}")));
        }
    }
    let mut w = csv::Writer::from_writer(writer);
    for i in 0..t {
        w.serialize(SolutionRow { t: i, c: charge[i], d: discharge[i], s: soc[i + 1], r: signal.values()[i] })
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_solution_csv<R: Read>(reader: R) -> Result<Vec<SolutionRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(csv_err)).collect()
}

/// Writes a CSV with the given header and equally long numeric columns.
pub fn write_columns_csv<W: Write>(writer: W, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    let rows = columns.first().map_or(0, |c| c.len());
    if header.len() != columns.len() || columns.iter().any(|c| c.len() != rows) {
        return Err(Error::InvalidParameter("column count or lengths do not match the header".into()));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header).map_err(csv_err)?;
    for i in 0..rows {
        w.write_record(columns.iter().map(|c| c[i].to_string())).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rainflow::count_cycles;

    #[test]
    fn profile_round_trip() {
        let values = vec![0.2, 0.5, 0.1, 0.9];
        let mut buf = vec![];
        write_profile_csv(&mut buf, &values).unwrap();
        assert!(buf.starts_with(b"t,soc\n0,0.2\n"));
        let p = read_profile_csv(buf.as_slice(), 1.0).unwrap();
        assert_eq!(p.values(), values.as_slice());
    }

    #[test]
    fn nan_is_rejected_with_its_line() {
        let text = "t,soc\n0,0.2\n1,NaN\n2,0.3\n";
        match read_profile_csv(text.as_bytes(), 1.0) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("not finite"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_rows_report_their_line() {
        let cases = [
            ("t,soc\n0,0.2\n1,abc\n", 3),
            ("t,soc\n0,0.2\n0,0.3\n", 3),
            ("t,soc\n0,0.2\n1,1.5\n", 3),
            ("t,soc\n0,0.2\n1,0.3,9\n", 3),
            ("time,soc\n0,0.2\n", 1),
        ];
        for (text, want) in cases {
            match read_profile_csv(text.as_bytes(), 1.0) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, want, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn signal_round_trip_and_range() {
        let sig = RegulationSignal::new(vec![0.5, -1.0, 0.0]).unwrap();
        let mut buf = vec![];
        write_signal_csv(&mut buf, &sig).unwrap();
        assert_eq!(read_signal_csv(buf.as_slice()).unwrap(), sig);
        assert!(matches!(read_signal_csv("t,r\n0,1.2\n".as_bytes()), Err(Error::Parse { line: 2, .. })));
        assert!(read_signal_csv("t,r\n".as_bytes()).is_err());
    }

    #[test]
    fn cycles_json_shape() {
        let p = SocProfile::unit(vec![0.0, 1.0, 0.5, 0.8]).unwrap();
        let mut buf = vec![];
        write_cycles_json(&mut buf, &count_cycles(&p)).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        let first = &v.as_array().unwrap()[0];
        for key in ["depth", "direction", "kind", "intervals", "junction_intervals"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
        assert_eq!(first["direction"], "charge");
        assert_eq!(first["kind"], "half");
    }

    #[test]
    fn solution_round_trip() {
        let sig = RegulationSignal::new(vec![0.5, -0.5]).unwrap();
        let mut buf = vec![];
        write_solution_csv(&mut buf, &[0.0, 0.4], &[0.5, 0.0], &[0.5, 0.4, 0.6], &sig).unwrap();
        assert!(buf.starts_with(b"t,c,d,s,r\n"));
        let rows = read_solution_csv(buf.as_slice()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1], SolutionRow { t: 1, c: 0.4, d: 0.0, s: 0.6, r: -0.5 });
        assert!(write_solution_csv(vec![], &[0.0], &[0.5, 0.0], &[0.5, 0.4, 0.6], &sig).is_err());
    }

    #[test]
    fn column_writer_checks_shapes() {
        let mut buf = vec![];
        write_columns_csv(&mut buf, &["a", "b"], &[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b\n1,3\n2,4\n");
        assert!(write_columns_csv(vec![], &["a"], &[&[1.0], &[2.0]]).is_err());
    }
}
