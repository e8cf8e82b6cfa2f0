//! CSV forms of boundary forcings (`hour,q_up,h_dn`) and state fields
//! (`hour,xs_index,h,q`).

use std::io::{Read, Write};

use reach_surrogate_core::geometry::{ForcingSeries, GeometryError};
use reach_surrogate_core::hydro::{HydroError, StateField};

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("line {line}: {msg}")]
    Row { line: u64, msg: String },
    #[error("expected header `{expected}`, found `{found}`")]
    Header { expected: &'static str, found: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Forcing(#[from] GeometryError),
    #[error(transparent)]
    State(#[from] HydroError),
}

const FORCING_HEADER: &str = "hour,q_up,h_dn";
const STATE_HEADER: &str = "hour,xs_index,h,q";

fn reader<R: Read>(input: R, expected: &'static str) -> Result<csv::Reader<R>, CsvError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let found = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    if found != expected {
        return Err(CsvError::Header { expected, found });
    }
    Ok(rdr)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str) -> Result<T, CsvError> {
    let line = rec.position().map_or(0, |p| p.line());
    let raw = rec.get(i).unwrap_or("");
    if raw.is_empty() {
        return Err(CsvError::Row {
            line,
            msg: format!("missing {name}"),
        });
    }
    raw.parse().map_err(|_| CsvError::Row {
        line,
        msg: format!("{name} `{raw}` is not a valid number"),
    })
}

fn float(rec: &csv::StringRecord, i: usize, name: &str) -> Result<f64, CsvError> {
    let v: f64 = field(rec, i, name)?;
    if !v.is_finite() {
        return Err(CsvError::Row {
            line: rec.position().map_or(0, |p| p.line()),
            msg: format!("{name} is not finite"),
        });
    }
    Ok(v)
}

pub fn read_forcings<R: Read>(input: R) -> Result<ForcingSeries, CsvError> {
    let mut rdr = reader(input, FORCING_HEADER)?;
    let (mut q_up, mut h_dn) = (Vec::new(), Vec::new());
    let mut t0 = 0i64;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let hour: i64 = field(&rec, 0, "hour")?;
        if k == 0 {
            t0 = hour;
        } else if hour != t0 + k as i64 {
            return Err(CsvError::Row {
                line: rec.position().map_or(0, |p| p.line()),
                msg: format!("hour {hour} breaks the hourly sequence (expected {})", t0 + k as i64),
            });
        }
        q_up.push(float(&rec, 1, "q_up")?);
        h_dn.push(float(&rec, 2, "h_dn")?);
    }
    Ok(ForcingSeries::new(t0, q_up, h_dn)?)
}

pub fn write_forcings<W: Write>(out: W, f: &ForcingSeries) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FORCING_HEADER.split(','))?;
    for (k, (q, h)) in f.q_up.iter().zip(&f.h_dn).enumerate() {
        w.write_record([(f.t0 + k as i64).to_string(), q.to_string(), h.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Rows must be hour-major with sections `0..N` listed for every hour.
pub fn read_state<R: Read>(input: R, reach_id: &str) -> Result<StateField, CsvError> {
    let mut rdr = reader(input, STATE_HEADER)?;
    let (mut h, mut q) = (Vec::new(), Vec::new());
    let mut n_xs: Option<usize> = None;
    let mut expect_hour = 0i64;
    let mut expect_xs = 0usize;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let hour: i64 = field(&rec, 0, "hour")?;
        let xs: usize = field(&rec, 1, "xs_index")?;
        if k == 0 {
            expect_hour = hour;
        }
        if n_xs.is_none() && k > 0 && xs == 0 {
            n_xs = Some(k);
            expect_hour += 1;
            expect_xs = 0;
        } else if let Some(n) = n_xs {
            if expect_xs == n {
                expect_hour += 1;
                expect_xs = 0;
            }
        }
        if hour != expect_hour || xs != expect_xs {
            return Err(CsvError::Row {
                line,
                msg: format!("expected hour {expect_hour}, section {expect_xs}; found hour {hour}, section {xs}"),
            });
        }
        expect_xs += 1;
        h.push(float(&rec, 2, "h")?);
        q.push(float(&rec, 3, "q")?);
    }
    let n = n_xs.unwrap_or(h.len());
    if n == 0 || h.len() % n != 0 {
        return Err(CsvError::Row {
            line: 0,
            msg: format!("{} rows do not form complete hours of {n} sections", h.len()),
        });
    }
    Ok(StateField::new(reach_id, n, h, q)?)
}

pub fn write_state<W: Write>(out: W, s: &StateField) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STATE_HEADER.split(','))?;
    for t in 0..s.hours() {
        for i in 0..s.n_xs {
            w.write_record([t.to_string(), i.to_string(), s.h_at(t, i).to_string(), s.q_at(t, i).to_string()])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
