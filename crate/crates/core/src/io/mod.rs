//! Snapshot files, binary-blob documents and error metrics.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{ensure_len, Error, Result};
use crate::fv::{Field, Grid};
use crate::fom::LossReport;

const FIELD_MAGIC: &str = "dispinn-field v1";

/// Contents of a snapshot file: time rows on an `nx x ny` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotFile {
    pub nx: usize,
    pub ny: usize,
    pub n_components: usize,
    pub dt: f64,
    /// Component-major fields, one per time row.
    pub fields: Vec<Field>,
}

impl SnapshotFile {
    pub fn new(grid: &Grid, dt: f64, fields: Vec<Field>) -> Result<Self> {
        let n_components = fields.first().ok_or_else(|| Error::invalid("snapshot file needs at least one field"))?.n_components;
        for f in &fields {
            f.check(grid, n_components)?;
        }
        Ok(SnapshotFile { nx: grid.nx, ny: grid.ny, n_components, dt, fields })
    }

    pub fn times(&self) -> Vec<f64> {
        self.fields.iter().map(|f| f.time).collect()
    }

    /// Checks the file against a grid.
    pub fn check(&self, grid: &Grid) -> Result<()> {
        if (self.nx, self.ny) != (grid.nx, grid.ny) {
            return Err(Error::invalid(format!(
                "snapshot file is {}x{}, grid is {}x{}",
                self.nx, self.ny, grid.nx, grid.ny
            )));
        }
        Ok(())
    }

    /// Index of the row at time `t`, within half a step.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = if self.dt > 0.0 { 0.5 * self.dt } else { 1e-12 };
        self.fields.iter().position(|f| (f.time - t).abs() < tol)
    }

    /// Header line `dispinn-field v1; nx; ny; components; dt; times...`,
    /// then one CSV row per time with cell-major values.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let mut header = format!("{FIELD_MAGIC}; {}; {}; {}; {}", self.nx, self.ny, self.n_components, self.dt);
        for f in &self.fields {
            header += &format!("; {}", f.time);
        }
        writeln!(w, "{header}")?;
        let n = self.nx * self.ny;
        let mut line = String::new();
        for f in &self.fields {
            line.clear();
            for p in 0..n {
                for c in 0..self.n_components {
                    if !line.is_empty() {
                        line.push(',');
                    }
                    line += &f.values[c * n + p].to_string();
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty snapshot file".into()))??;
        let parts: Vec<&str> = header.split(';').map(str::trim).collect();
        if parts.first() != Some(&FIELD_MAGIC) || parts.len() < 5 {
            return Err(Error::Format(format!("not a {FIELD_MAGIC} header: {header:?}")));
        }
        let bad = |what: &str| Error::Format(format!("bad {what} in snapshot header"));
        let nx: usize = parts[1].parse().map_err(|_| bad("nx"))?;
        let ny: usize = parts[2].parse().map_err(|_| bad("ny"))?;
        let n_components: usize = parts[3].parse().map_err(|_| bad("component count"))?;
        let dt: f64 = parts[4].parse().map_err(|_| bad("dt"))?;
        let times = parts[5..].iter().map(|s| s.parse::<f64>().map_err(|_| bad("time"))).collect::<Result<Vec<_>>>()?;
        let n = nx * ny;
        let mut fields = Vec::with_capacity(times.len());
        for (k, &time) in times.iter().enumerate() {
            let line = lines.next().ok_or_else(|| Error::Format(format!("missing row {k}")))??;
            let cell_major = line
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Format(format!("bad value in row {k}"))))
                .collect::<Result<Vec<_>>>()?;
            if cell_major.len() != n * n_components {
                return Err(Error::Format(format!("row {k} holds {} values, expected {}", cell_major.len(), n * n_components)));
            }
            let mut values = vec![0.0; cell_major.len()];
            for p in 0..n {
                for c in 0..n_components {
                    values[c * n + p] = cell_major[p * n_components + c];
                }
            }
            fields.push(Field { n_cells: n, n_components, values, time, nu: None });
        }
        if lines.any(|l| l.map_or(true, |l| !l.trim().is_empty())) {
            return Err(Error::Format("trailing rows after the last time".into()));
        }
        Ok(SnapshotFile { nx, ny, n_components, dt, fields })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        SnapshotFile::read_from(std::fs::File::open(path)?)
    }
}

/// `||reference - pred||_2 / ||reference||_2`. A zero reference gives 0 when
/// the prediction is also zero and infinity otherwise.
pub fn relative_l2(pred: &[f64], reference: &[f64]) -> Result<f64> {
    ensure_len("relative L2 operands", reference.len(), pred.len())?;
    let num: f64 = pred.iter().zip(reference).map(|(p, r)| (r - p).powi(2)).sum::<f64>().sqrt();
    let den: f64 = reference.iter().map(|r| r * r).sum::<f64>().sqrt();
    Ok(if den > 0.0 {
        num / den
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    })
}

pub fn max_abs_error(pred: &[f64], reference: &[f64]) -> Result<f64> {
    ensure_len("max-abs operands", reference.len(), pred.len())?;
    Ok(pred.iter().zip(reference).map(|(p, r)| (p - r).abs()).fold(0.0, f64::max))
}

/// Appends loss reports to a CSV log with a header row.
pub struct LossLog<W: Write> {
    out: W,
}

impl<W: Write> LossLog<W> {
    pub const HEADER: &'static str = "epoch,l_data,l_eqn,l_dis,total,wall_time";

    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "{}", Self::HEADER)?;
        Ok(LossLog { out })
    }

    pub fn append(&mut self, r: &LossReport) -> Result<()> {
        writeln!(self.out, "{},{},{},{},{},{}", r.epoch, r.l_data, r.l_eqn, r.l_dis, r.total, r.wall_time)?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Writes a JSON header line followed by a little-endian `f64` blob.
pub(crate) fn write_blob_doc<H: Serialize>(mut w: impl Write, header: &H, values: impl IntoIterator<Item = f64>) -> Result<()> {
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a document written by [`write_blob_doc`].
pub(crate) fn read_blob_doc<H: DeserializeOwned>(r: impl Read) -> Result<(H, Vec<f64>)> {
    let mut r = BufReader::new(r);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header = serde_json::from_str(line.trim_end())?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format(format!("blob of {} bytes is not a whole number of f64", bytes.len())));
    }
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    Ok((header, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fv::build_grid;

    #[test]
    fn relative_l2_hand_values() {
        assert_eq!(relative_l2(&[3.0, 0.0], &[3.0, 4.0]).unwrap(), 0.8);
        assert_eq!(relative_l2(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 1.0);
        assert_eq!(relative_l2(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(relative_l2(&[0.0], &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn snapshot_file_round_trips_bit_exactly() {
        let g = build_grid(3, 2, 1.0, 1.0).unwrap();
        let fields: Vec<Field> = (0..3)
            .map(|k| {
                let v = (0..12).map(|i| (i as f64 * 0.1 + k as f64).sin() / 3.0).collect();
                Field::from_values(&g, 2, v, k as f64 * 0.001).unwrap()
            })
            .collect();
        let file = SnapshotFile::new(&g, 0.001, fields).unwrap();
        let mut buf = Vec::new();
        file.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("dispinn-field v1; 3; 2; 2; 0.001; 0; 0.001; 0.002\n"));
        // cell-major: first row starts with u_x(0), u_y(0)
        let first: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(first[1], file.fields[0].values[6]);
        let back = SnapshotFile::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.index_of(0.002), Some(2));
    }

    #[test]
    fn malformed_snapshot_files_are_rejected() {
        assert!(SnapshotFile::read_from("dispinn-field v2; 1; 1; 1; 0.1; 0\n0\n".as_bytes()).is_err());
        assert!(SnapshotFile::read_from("dispinn-field v1; 1; 1; 1; 0.1; 0\n0,1\n".as_bytes()).is_err());
        assert!(SnapshotFile::read_from("dispinn-field v1; 1; 1; 1; 0.1; 0; 1\n0\n".as_bytes()).is_err());
        assert!(SnapshotFile::read_from("dispinn-field v1; 1; 1; 1; 0.1; 0\n0\n5\n".as_bytes()).is_err());
        assert!(SnapshotFile::read_from("dispinn-field v1; 1; 1; 1; 0.1; 0\n2\n".as_bytes()).is_ok());
    }
}
