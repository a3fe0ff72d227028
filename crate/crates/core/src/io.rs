//! Binary field dumps and CSV tables.
//!
//! Dump layout (little endian): magic `EBEF`, version u32, n1 n2 ny u32,
//! l1 l2 y_min y_max y_stretch f64, components-per-node u32, then
//! `components × nodes` f64 values, node-major in grid index order.

use crate::geometry::{Grid3, GridSpec};
use std::io::{self, Read, Write};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"EBEF";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DumpError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a field dump (bad magic)")]
    Magic,
    #[error("unsupported dump version {0}")]
    Version(u32),
    #[error("payload has {0} values, expected {1}")]
    Size(usize, usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldDump {
    pub spec: GridSpec,
    pub components: usize,
    pub data: Vec<f64>,
}

pub fn write_dump(mut out: impl Write, grid: &Grid3, components: usize, data: &[f64]) -> Result<(), DumpError> {
    let expected = components * grid.len();
    if data.len() != expected {
        return Err(DumpError::Size(data.len(), expected));
    }
    let s = &grid.spec;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    for n in [s.n1, s.n2, s.ny] {
        out.write_all(&(n as u32).to_le_bytes())?;
    }
    for v in [s.l1, s.l2, s.y_min, s.y_max, s.y_stretch] {
        out.write_all(&v.to_le_bytes())?;
    }
    out.write_all(&(components as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(data.len() * 8);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_dump(mut input: impl Read) -> Result<FieldDump, DumpError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(DumpError::Magic);
    }
    let u32s = |input: &mut dyn Read| -> io::Result<u32> {
        let mut b = [0u8; 4];
        input.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    };
    let version = u32s(&mut input)?;
    if version != VERSION {
        return Err(DumpError::Version(version));
    }
    let n1 = u32s(&mut input)? as usize;
    let n2 = u32s(&mut input)? as usize;
    let ny = u32s(&mut input)? as usize;
    let mut ext = [0.0; 5];
    for e in &mut ext {
        let mut b = [0u8; 8];
        input.read_exact(&mut b)?;
        *e = f64::from_le_bytes(b);
    }
    let components = u32s(&mut input)? as usize;
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let expected = components * n1 * n2 * ny;
    if bytes.len() != expected * 8 {
        return Err(DumpError::Size(bytes.len() / 8, expected));
    }
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let spec = GridSpec { n1, n2, ny, l1: ext[0], l2: ext[1], y_min: ext[2], y_max: ext[3], y_stretch: ext[4] };
    Ok(FieldDump { spec, components, data })
}

/// 17 significant digits, round-trips every f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Header line plus one line per row.
pub fn write_csv(mut out: impl Write, header: &[&str], rows: &[Vec<f64>]) -> io::Result<()> {
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trip() {
        let g = Grid3::new(GridSpec::cube([8, 9, 10], 1.5, 0.1, 3.0, 2.0)).unwrap();
        let data: Vec<f64> = (0..2 * g.len()).map(|n| (n as f64).sin() * 1e-3 + 1.0 / 3.0).collect();
        let mut buf = Vec::new();
        write_dump(&mut buf, &g, 2, &data).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 12 + 40 + 4 + 16 * g.len());
        let back = read_dump(&buf[..]).unwrap();
        assert_eq!(back.spec, g.spec);
        assert_eq!(back.components, 2);
        assert_eq!(back.data, data);
        buf[0] = b'X';
        assert!(matches!(read_dump(&buf[..]), Err(DumpError::Magic)));
        assert!(matches!(write_dump(Vec::new(), &g, 3, &data), Err(DumpError::Size(..))));
    }

    #[test]
    fn csv_digits_round_trip() {
        let x = 0.1 + 0.2;
        assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        let mut out = Vec::new();
        write_csv(&mut out, &["a", "b"], &[vec![1.0, -2.5e-300]]).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "a,b\n1.0000000000000000e0,-2.5000000000000000e-300\n");
    }
}
