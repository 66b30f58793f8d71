//! CSV and JSON file formats.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{SpectralGrid, SpectralPoint, TimeValuePoint};

/// Grid sidecar `{"n": .., "dw": .., "offset": ..}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub n: usize,
    pub dw: f64,
    pub offset: f64,
}

impl From<&SpectralGrid> for GridMeta {
    fn from(g: &SpectralGrid) -> Self {
        Self {
            n: g.n(),
            dw: g.dw(),
            offset: g.offset(),
        }
    }
}

impl GridMeta {
    pub fn grid(&self) -> Result<SpectralGrid> {
        let grid = SpectralGrid::new(self.n, self.dw)?;
        if (grid.offset() - self.offset).abs() > 1e-12 * self.dw {
            return Err(Error::InvalidParameter(format!(
                "grid offset {} does not match n = {}, dw = {}",
                self.offset, self.n, self.dw
            )));
        }
        Ok(grid)
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_rows<W: Write>(out: W, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.into_iter().map(fmt))?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<R: Read>(input: R, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let got: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if got != header {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}, got {}", header.join(","), got.join(",")),
        });
    }
    r.records()
        .map(|rec| {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != header.len() {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {} fields, got {}", header.len(), rec.len()),
                });
            }
            rec.iter()
                .map(|f| {
                    f.parse::<f64>().map_err(|e| Error::Parse {
                        line,
                        message: format!("'{f}': {e}"),
                    })
                })
                .collect()
        })
        .collect()
}

pub fn write_spectral<W: Write>(out: W, points: &[SpectralPoint]) -> Result<()> {
    write_rows(
        out,
        &["w", "re", "im"],
        points.iter().map(|p| vec![p.w, p.value.re, p.value.im]),
    )
}

pub fn read_spectral<R: Read>(input: R) -> Result<Vec<SpectralPoint>> {
    Ok(read_rows(input, &["w", "re", "im"])?
        .into_iter()
        .map(|r| SpectralPoint {
            w: r[0],
            value: Complex64::new(r[1], r[2]),
        })
        .collect())
}

pub fn write_time_values<W: Write>(out: W, points: &[TimeValuePoint]) -> Result<()> {
    write_rows(out, &["k", "z"], points.iter().map(|p| vec![p.k, p.z]))
}

pub fn read_time_values<R: Read>(input: R) -> Result<Vec<TimeValuePoint>> {
    Ok(read_rows(input, &["k", "z"])?
        .into_iter()
        .map(|r| TimeValuePoint { k: r[0], z: r[1] })
        .collect())
}

pub fn write_loss<W: Write>(out: W, loss: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "loss"])?;
    for (i, l) in loss.iter().enumerate() {
        w.write_record([i.to_string(), fmt(*l)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_density<W: Write>(out: W, density: &[(f64, f64)]) -> Result<()> {
    write_rows(out, &["x", "dvdx"], density.iter().map(|&(x, v)| vec![x, v]))
}

pub fn read_density<R: Read>(input: R) -> Result<Vec<(f64, f64)>> {
    Ok(read_rows(input, &["x", "dvdx"])?
        .into_iter()
        .map(|r| (r[0], r[1]))
        .collect())
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn open(path: &Path) -> Result<File> {
    Ok(File::open(path)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(std::io::BufReader::new(open(path)?))?)
}
