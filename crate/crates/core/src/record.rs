//! Homodyne measurement records and their text format:
//! a header `dt=<float> n=<int> seed=<uint64>` followed by one increment per line.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementRecord {
    pub dt: f64,
    pub dy: Vec<f64>,
    pub seed: u64,
    /// Hash of the configuration that produced the record, if known.
    /// Not part of the file format.
    pub generator: Option<String>,
}

impl MeasurementRecord {
    pub fn new(dt: f64, dy: Vec<f64>, seed: u64) -> Result<Self> {
        let rec = MeasurementRecord {
            dt,
            dy,
            seed,
            generator: None,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn len(&self) -> usize {
        self.dy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dy.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.dy.len() as f64
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Record {
                line: 1,
                msg: format!("dt must be positive, got {}", self.dt),
            });
        }
        if let Some(i) = self.dy.iter().position(|x| !x.is_finite()) {
            return Err(Error::Record {
                line: i + 2,
                msg: "non-finite increment".into(),
            });
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(
            w,
            "dt={:.16e} n={} seed={}",
            self.dt,
            self.dy.len(),
            self.seed
        )?;
        for x in &self.dy {
            writeln!(w, "{x:.16e}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(fs::File::create(path)?)
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or(Error::Record {
            line: 1,
            msg: "empty file".into(),
        })??;
        let (dt, n, seed) = parse_header(&header)?;
        let mut dy = Vec::with_capacity(n);
        for (i, line) in lines.enumerate() {
            let line = line?;
            let s = line.trim();
            if s.is_empty() {
                continue;
            }
            let x: f64 = s.parse().map_err(|_| Error::Record {
                line: i + 2,
                msg: format!("cannot parse `{s}` as a number"),
            })?;
            dy.push(x);
        }
        if dy.len() != n {
            return Err(Error::Record {
                line: 1,
                msg: format!("header announces {n} increments, found {}", dy.len()),
            });
        }
        MeasurementRecord::new(dt, dy, seed)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(fs::File::open(path)?))
    }
}

fn parse_header(h: &str) -> Result<(f64, usize, u64)> {
    let bad = |msg: String| Error::Record { line: 1, msg };
    let (mut dt, mut n, mut seed) = (None, None, None);
    for tok in h.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key=value, got `{tok}`")))?;
        let parse_err = |_| bad(format!("bad value for `{k}`: `{v}`"));
        match k {
            "dt" => dt = Some(v.parse::<f64>().map_err(|e| parse_err(e.to_string()))?),
            "n" => n = Some(v.parse::<usize>().map_err(|e| parse_err(e.to_string()))?),
            "seed" => seed = Some(v.parse::<u64>().map_err(|e| parse_err(e.to_string()))?),
            _ => return Err(bad(format!("unknown header key `{k}`"))),
        }
    }
    match (dt, n, seed) {
        (Some(dt), Some(n), Some(seed)) => Ok((dt, n, seed)),
        _ => Err(bad("header must contain dt, n and seed".into())),
    }
}
