//! Plain-text CSV forms of sensor arrays and measurement vectors.
//!
//! Sensor array:
//!
//! ```text
//! dim,n_sensors
//! 3,10
//! 0,0,0          <- reference a_0
//! 50,0,50        <- a_1
//! ...
//! ```
//!
//! The reader also accepts files that omit the literal `dim,n_sensors`
//! line and start directly with the counts. Measurements are a single
//! `d` column, one row per sensor in array order.
//!
//! Values are written in Rust's shortest round-trip form, which never needs
//! more than 17 significant digits and parses back to the identical `f64`.

use std::fmt::Write as _;
use std::path::Path;

use super::{MeasurementSet, SensorArray};
use crate::error::{Error, Result};

const ARRAY_HEADER: &str = "dim,n_sensors";
const MEASUREMENT_HEADER: &str = "d";

fn parse_f64(field: &str, line_no: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("line {line_no}: {e} in {field:?}")))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

impl SensorArray {
    pub fn to_csv_string(&self) -> String {
        let mut out = format!("{ARRAY_HEADER}\n{},{}\n", self.dim, self.len());
        for p in std::iter::once(&self.reference).chain(self.sensors.iter()) {
            let row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = data_lines(text).peekable();
        if lines.peek().map(|(_, l)| l.replace(' ', "")) == Some(ARRAY_HEADER.to_string()) {
            lines.next();
        }
        let (line_no, counts) = lines
            .next()
            .ok_or_else(|| Error::Parse("empty sensor file".into()))?;
        let counts: Vec<usize> = counts
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Parse(format!("line {line_no}: {e} in {f:?}")))
            })
            .collect::<Result<_>>()?;
        let [dim, n_sensors] = counts[..] else {
            return Err(Error::Parse(format!(
                "line {line_no}: expected `dim,n_sensors`"
            )));
        };
        let mut rows = Vec::with_capacity(n_sensors + 1);
        for (line_no, line) in lines {
            let row = line
                .split(',')
                .map(|f| parse_f64(f, line_no))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != dim {
                return Err(Error::Parse(format!(
                    "line {line_no}: expected {dim} coordinates, found {}",
                    row.len()
                )));
            }
            rows.push(row);
        }
        if rows.len() != n_sensors + 1 {
            return Err(Error::Parse(format!(
                "expected reference plus {n_sensors} sensors, found {} rows",
                rows.len()
            )));
        }
        let reference = rows.remove(0);
        SensorArray::new(&reference, &rows)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

impl MeasurementSet {
    pub fn measurements_csv_string(&self) -> String {
        let mut out = format!("{MEASUREMENT_HEADER}\n");
        for v in self.d.iter() {
            let _ = writeln!(out, "{v}");
        }
        out
    }

    pub fn from_csv_str(array: SensorArray, text: &str, true_sigma2: Option<f64>) -> Result<Self> {
        let d = data_lines(text)
            .filter(|(_, l)| *l != MEASUREMENT_HEADER)
            .map(|(n, l)| parse_f64(l, n))
            .collect::<Result<Vec<_>>>()?;
        MeasurementSet::new(array, d, true_sigma2)
    }

    pub fn read_csv(array: SensorArray, path: impl AsRef<Path>, true_sigma2: Option<f64>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(array, &text, true_sigma2)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.measurements_csv_string()).map_err(|e| Error::io(path, e))
    }
}
