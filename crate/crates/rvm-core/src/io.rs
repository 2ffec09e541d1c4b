//! Run artifacts: binary field snapshots (`RVMF`), binary scalar-grid blocks
//! (`RVMH`, used for momentum histograms and density snapshots), CSV
//! diagnostics/tracer tables, and JSON reports.
//!
//! All binary payloads are little-endian f64/u32; readers validate magic and
//! version and fail loudly on shape mismatches.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read as _, Write as _};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid3;
use crate::maxwell::FieldGrid;

const VERSION: u32 = 1;

fn put_u32(w: &mut impl std::io::Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64(w: &mut impl std::io::Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl std::io::Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_f64(r: &mut impl std::io::Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn put_slice(w: &mut impl std::io::Write, data: &[f64]) -> Result<()> {
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn get_slice(r: &mut impl std::io::Read, data: &mut [f64]) -> Result<()> {
    let mut b = [0u8; 8];
    for v in data.iter_mut() {
        r.read_exact(&mut b)?;
        *v = f64::from_le_bytes(b);
    }
    Ok(())
}

/// Write a field snapshot: magic `RVMF`, version, cells, extent, time, dt,
/// then the six staggered arrays Ex, Ey, Ez, Bx, By, Bz (x-fastest).
pub fn write_fields(path: &Path, grid: &FieldGrid) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(b"RVMF")?;
    put_u32(&mut w, VERSION)?;
    put_u32(&mut w, grid.cells as u32)?;
    put_f64(&mut w, grid.extent)?;
    put_f64(&mut w, grid.time)?;
    put_f64(&mut w, grid.dt)?;
    for g in grid.e.iter().chain(grid.b.iter()) {
        put_slice(&mut w, &g.data)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_fields(path: &Path) -> Result<FieldGrid> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != b"RVMF" {
        return Err(Error::Format(format!("{}: bad magic", path.display())));
    }
    let version = get_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("{}: unsupported version {version}", path.display())));
    }
    let cells = get_u32(&mut r)? as usize;
    let extent = get_f64(&mut r)?;
    let time = get_f64(&mut r)?;
    let dt = get_f64(&mut r)?;
    let mut grid = FieldGrid::new(extent, cells, dt)?;
    grid.time = time;
    for idx in 0..6 {
        let g = if idx < 3 { &mut grid.e[idx] } else { &mut grid.b[idx - 3] };
        get_slice(&mut r, &mut g.data)?;
    }
    Ok(grid)
}

/// Write a scalar grid block: magic `RVMH`, version, dims, origin, spacing,
/// time stamp, then the node values (x-fastest).
pub fn write_scalar_grid(path: &Path, grid: &Grid3, time: f64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(b"RVMH")?;
    put_u32(&mut w, VERSION)?;
    for d in grid.n {
        put_u32(&mut w, d as u32)?;
    }
    for o in grid.origin {
        put_f64(&mut w, o)?;
    }
    put_f64(&mut w, grid.h)?;
    put_f64(&mut w, time)?;
    put_slice(&mut w, &grid.data)?;
    w.flush()?;
    Ok(())
}

pub fn read_scalar_grid(path: &Path) -> Result<(Grid3, f64)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != b"RVMH" {
        return Err(Error::Format(format!("{}: bad magic", path.display())));
    }
    let version = get_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("{}: unsupported version {version}", path.display())));
    }
    let n = [get_u32(&mut r)? as usize, get_u32(&mut r)? as usize, get_u32(&mut r)? as usize];
    let origin = [get_f64(&mut r)?, get_f64(&mut r)?, get_f64(&mut r)?];
    let h = get_f64(&mut r)?;
    let time = get_f64(&mut r)?;
    let mut grid = Grid3::zeros(n, origin, h);
    get_slice(&mut r, &mut grid.data)?;
    Ok((grid, time))
}

/// Minimal CSV table with a header row; all cells are f64 rendered with
/// full round-trip precision so re-analysis is bit-identical.
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> CsvTable {
        CsvTable { header: header.iter().map(|s| s.to_string()).collect(), rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{}", self.header.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format_f64(*v)).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<CsvTable> {
        let mut text = String::new();
        BufReader::new(File::open(path)?).read_to_string(&mut text)?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format(format!("{}: empty CSV", path.display())))?
            .split(',')
            .map(|s| s.to_string())
            .collect::<Vec<_>>();
        let mut rows = vec![];
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|c| {
                    c.parse::<f64>()
                        .map_err(|_| Error::Format(format!("{}: bad cell at row {}", path.display(), i + 2)))
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != header.len() {
                return Err(Error::Format(format!("{}: ragged row {}", path.display(), i + 2)));
            }
            rows.push(row);
        }
        Ok(CsvTable { header, rows })
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("CSV has no column {name}")))?;
        Ok(self.rows.iter().map(|r| r[idx]).collect())
    }
}

/// Shortest decimal that round-trips the exact f64 value.
pub fn format_f64(v: f64) -> String {
    let mut buf = ryu_like(v);
    if buf == "-0" {
        buf = "0".into();
    }
    buf
}

fn ryu_like(v: f64) -> String {
    // `{}` on f64 already prints the shortest round-trip representation.
    format!("{v}")
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let r = BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(r)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fields_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.rvmf");
        let mut grid = FieldGrid::new(4.0, 8, 0.2).unwrap();
        grid.time = 1.4;
        for (i, g) in grid.e.iter_mut().chain(grid.b.iter_mut()).enumerate() {
            for (j, v) in g.data.iter_mut().enumerate() {
                *v = (i * 31 + j) as f64 * 0.01 - 3.0;
            }
        }
        write_fields(&path, &grid).unwrap();
        let back = read_fields(&path).unwrap();
        assert_eq!(back.cells, 8);
        assert_eq!(back.time, 1.4);
        for idx in 0..3 {
            assert_eq!(back.e[idx].data, grid.e[idx].data);
            assert_eq!(back.b[idx].data, grid.b[idx].data);
        }
    }

    #[test]
    fn scalar_grid_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hist.rvmh");
        let mut g = Grid3::zeros([5, 4, 3], [-1.0, -2.0, 0.5], 0.25);
        for (i, v) in g.data.iter_mut().enumerate() {
            *v = (i as f64).sin();
        }
        write_scalar_grid(&path, &g, 2.5).unwrap();
        let (back, t) = read_scalar_grid(&path).unwrap();
        assert_eq!(t, 2.5);
        assert_eq!(back.n, g.n);
        assert_eq!(back.origin, g.origin);
        assert_eq!(back.h, g.h);
        assert_eq!(back.data, g.data);
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"NOPE0000111122223333").unwrap();
        assert!(read_fields(&path).is_err());
        assert!(read_scalar_grid(&path).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.csv");
        let mut t = CsvTable::new(&["a", "b"]);
        t.push(vec![1.0 / 3.0, -0.0]);
        t.push(vec![f64::MIN_POSITIVE, 1e300]);
        t.write(&path).unwrap();
        let back = CsvTable::read(&path).unwrap();
        assert_eq!(back.header, t.header);
        assert_eq!(back.rows[0][0], 1.0 / 3.0);
        assert_eq!(back.rows[1][1], 1e300);
        assert_eq!(back.column("b").unwrap(), vec![0.0, 1e300]);
    }
}
