//! Field files, PGM previews and CSV tables.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid2D};
use crate::scalar::{lit, to_f64, Real};

const HEADER_LEN: usize = 32;

fn header_line(nx: usize, ny: usize, h: f64) -> Result<[u8; HEADER_LEN]> {
    let mut text = format!("FRACPAT F64 {nx} {ny} {h}");
    let mut digits = 17;
    while text.len() > HEADER_LEN - 1 && digits > 1 {
        digits -= 1;
        text = format!("FRACPAT F64 {nx} {ny} {h:.digits$e}");
    }
    if text.len() > HEADER_LEN - 1 {
        return Err(Error::Format(format!("grid {nx}x{ny} does not fit the header")));
    }
    let mut out = [b' '; HEADER_LEN];
    out[..text.len()].copy_from_slice(text.as_bytes());
    out[HEADER_LEN - 1] = b'\n';
    Ok(out)
}

/// Encodes a field as the 32-byte ASCII header `FRACPAT F64 <nx> <ny> <h>`
/// followed by little-endian `f64` values, `x` fastest.
pub fn encode_field<T: Real>(field: &Field<T>, h: f64) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * field.values().len());
    out.extend_from_slice(&header_line(field.nx(), field.ny(), h)?);
    for &v in field.values() {
        out.extend_from_slice(&to_f64(v).to_le_bytes());
    }
    Ok(out)
}

/// Inverse of [`encode_field`]; returns the field and the spacing `h`.
pub fn decode_field<T: Real>(bytes: &[u8]) -> Result<(Field<T>, f64)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format("field file shorter than its header".into()));
    }
    let header = std::str::from_utf8(&bytes[..HEADER_LEN])
        .map_err(|_| Error::Format("field header is not ASCII".into()))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 5 || parts[0] != "FRACPAT" || parts[1] != "F64" {
        return Err(Error::Format(format!("bad field header {header:?}")));
    }
    let parse_usize = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad dimension {s:?}")))
    };
    let nx = parse_usize(parts[2])?;
    let ny = parse_usize(parts[3])?;
    let h: f64 = parts[4]
        .parse()
        .map_err(|_| Error::Format(format!("bad spacing {:?}", parts[4])))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * nx * ny {
        return Err(Error::LengthMismatch {
            expected: 8 * nx * ny,
            found: body.len(),
        });
    }
    let values = body
        .chunks_exact(8)
        .map(|c| lit::<T>(f64::from_le_bytes(c.try_into().expect("chunk of 8"))))
        .collect();
    Ok((Field::from_values(nx, ny, values)?, h))
}

pub fn write_field<T: Real>(path: &Path, field: &Field<T>, grid: &Grid2D) -> Result<()> {
    fs::write(path, encode_field(field, grid.h())?)?;
    Ok(())
}

pub fn read_field<T: Real>(path: &Path) -> Result<(Field<T>, f64)> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_field(&bytes)
}

/// 16-bit binary PGM with min-max scaling; the top image row is the largest `y`.
pub fn encode_pgm<T: Real>(field: &Field<T>) -> Vec<u8> {
    let vals: Vec<f64> = field.values().iter().map(|&v| to_f64(v)).collect();
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (nx, ny) = (field.nx(), field.ny());
    let mut out = format!("P5\n# min={lo:e} max={hi:e}\n{nx} {ny}\n65535\n").into_bytes();
    for j in (0..ny).rev() {
        for i in 0..nx {
            let q = ((vals[j * nx + i] - lo) / span * 65535.0).round() as u16;
            out.extend_from_slice(&q.to_be_bytes());
        }
    }
    out
}

pub fn write_pgm<T: Real>(path: &Path, field: &Field<T>) -> Result<()> {
    fs::write(path, encode_pgm(field))?;
    Ok(())
}

/// Boundary trace CSV: header `t,x:y,…`, one row per time step.
pub fn write_trace_csv<T: Real>(
    path: &Path,
    grid: &Grid2D,
    nodes: &[usize],
    dt: f64,
    rows: &[Vec<T>],
) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    write!(w, "t")?;
    for &k in nodes {
        let (x, y) = grid.coords(k);
        write!(w, ",{x}:{y}")?;
    }
    writeln!(w)?;
    for (n, row) in rows.iter().enumerate() {
        write!(w, "{}", n as f64 * dt)?;
        for &v in row {
            write!(w, ",{}", to_f64(v))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace CSV back into `(node coordinates, times, rows)`.
pub fn read_trace_csv(path: &Path) -> Result<(Vec<(f64, f64)>, Vec<f64>, Vec<Vec<f64>>)> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty trace file".into()))??;
    let mut coords = Vec::new();
    for cell in header.split(',').skip(1) {
        let (x, y) = cell
            .split_once(':')
            .ok_or_else(|| Error::Format(format!("bad trace column {cell:?}")))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("bad coordinate {s:?}")))
        };
        coords.push((parse(x)?, parse(y)?));
    }
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut cells = line.split(',').map(|c| {
            c.trim()
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("line {}: bad number {c:?}", lineno + 2)))
        });
        times.push(cells.next().expect("split yields one item")?);
        let row: Vec<f64> = cells.collect::<Result<_>>()?;
        if row.len() != coords.len() {
            return Err(Error::Format(format!(
                "line {}: {} values for {} nodes",
                lineno + 2,
                row.len(),
                coords.len()
            )));
        }
        rows.push(row);
    }
    Ok((coords, times, rows))
}

/// Plain CSV with a header row.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_is_32_bytes() {
        let f = Field::<f64>::from_values(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let bytes = encode_field(&f, 1.0 / 128.0).unwrap();
        assert_eq!(&bytes[..24], b"FRACPAT F64 3 2 0.007812");
        assert_eq!(bytes[31], b'\n');
        assert_eq!(bytes.len(), 32 + 48);
        assert_eq!(&bytes[32..40], &1.0f64.to_le_bytes());
    }

    #[test]
    fn long_spacing_is_shortened() {
        let f = Field::<f64>::from_values(1000, 1000, vec![0.0; 1_000_000]).unwrap();
        let bytes = encode_field(&f, 1.0 / 3.0).unwrap();
        let (_, h) = decode_field::<f64>(&bytes).unwrap();
        assert!((h - 1.0 / 3.0).abs() < 1e-3, "{h}");
    }

    #[test]
    fn pgm_layout() {
        let f = Field::<f64>::from_values(2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let bytes = encode_pgm(&f);
        let text = String::from_utf8_lossy(&bytes);
        assert!(text.starts_with("P5\n# min=0e0 max=3e0\n2 2\n65535\n"));
        let body = &bytes[bytes.len() - 8..];
        // top row is y index 1: values 2, 3
        assert_eq!(u16::from_be_bytes([body[0], body[1]]), 43690);
        assert_eq!(u16::from_be_bytes([body[2], body[3]]), 65535);
        assert_eq!(u16::from_be_bytes([body[4], body[5]]), 0);
    }

    proptest! {
        #[test]
        fn field_round_trip_is_bit_exact(
            nx in 1usize..12,
            ny in 1usize..12,
            h in 1e-4f64..10.0,
            seed in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::ZERO | proptest::num::f64::SUBNORMAL, 144),
        ) {
            let vals: Vec<f64> = seed[..nx * ny].to_vec();
            let f = Field::from_values(nx, ny, vals.clone()).unwrap();
            let bytes = encode_field(&f, h).unwrap();
            let (back, _) = decode_field::<f64>(&bytes).unwrap();
            for (a, b) in back.values().iter().zip(&vals) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
