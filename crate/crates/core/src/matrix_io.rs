//! Matrix file formats.
//!
//! * CSV: first line `"rows cols"`, then one line of comma-separated values
//!   per row.
//! * Binary: magic `RMEQ1` (5 bytes), `u8` version = 1, `u16` reserved = 0,
//!   `u64` LE rows, `u64` LE cols, then `rows * cols` LE `f64` in row-major
//!   order. Complex matrices store interleaved `(re, im)` pairs, so the
//!   payload holds `2 * rows * cols` values.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::{CMatrix, Error, RMatrix, Result};

pub const MAGIC: &[u8; 5] = b"RMEQ1";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 5 + 1 + 2 + 8 + 8;

fn write_header(out: &mut Vec<u8>, rows: usize, cols: usize) {
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
}

fn read_header(bytes: &[u8]) -> Result<(usize, usize)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format("truncated header".into()));
    }
    if &bytes[..5] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    if bytes[5] != VERSION {
        return Err(Error::Format(format!("unsupported version {}", bytes[5])));
    }
    if bytes[6] != 0 || bytes[7] != 0 {
        return Err(Error::Format("reserved field must be zero".into()));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    Ok((rows, cols))
}

fn payload(bytes: &[u8], count: usize) -> Result<Vec<f64>> {
    let body = &bytes[HEADER_LEN..];
    if body.len() != count * 8 {
        return Err(Error::Format(format!(
            "payload has {} bytes, expected {}",
            body.len(),
            count * 8
        )));
    }
    Ok(body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn encode_binary(m: &RMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.len());
    write_header(&mut out, m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<RMatrix> {
    let (rows, cols) = read_header(bytes)?;
    let data = payload(bytes, rows * cols)?;
    Ok(RMatrix::from_row_slice(rows, cols, &data))
}

pub fn encode_binary_complex(m: &CMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * m.len());
    write_header(&mut out, m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].re.to_le_bytes());
            out.extend_from_slice(&m[(i, j)].im.to_le_bytes());
        }
    }
    out
}

pub fn decode_binary_complex(bytes: &[u8]) -> Result<CMatrix> {
    let (rows, cols) = read_header(bytes)?;
    let data = payload(bytes, 2 * rows * cols)?;
    let values: Vec<Complex64> = data
        .chunks_exact(2)
        .map(|c| Complex64::new(c[0], c[1]))
        .collect();
    Ok(CMatrix::from_row_slice(rows, cols, &values))
}

pub fn write_csv<W: Write>(mut w: W, m: &RMatrix) -> Result<()> {
    writeln!(w, "{} {}", m.nrows(), m.ncols())?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:?}", m[(i, j)])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<RMatrix> {
    let mut lines = BufReader::new(r).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty CSV".into()))??;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Format(format!("bad header {header:?}: {e}")))?;
    let [rows, cols] = dims[..] else {
        return Err(Error::Format(format!("bad header {header:?}")));
    };
    let mut data = Vec::with_capacity(rows * cols);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("row {i}: {e}")))?;
        if row.len() != cols {
            return Err(Error::Format(format!(
                "row {i} has {} values, expected {cols}",
                row.len()
            )));
        }
        data.extend(row);
    }
    if data.len() != rows * cols {
        return Err(Error::Format(format!(
            "expected {rows} rows, got {}",
            data.len() / cols.max(1)
        )));
    }
    Ok(RMatrix::from_row_slice(rows, cols, &data))
}

/// Reads a real matrix, dispatching on the binary magic.
pub fn read_matrix(path: &Path) -> Result<RMatrix> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        decode_binary(&bytes)
    } else {
        read_csv(&bytes[..])
    }
}

/// Writes a real matrix; `.bin` and `.rmeq` extensions select the binary format.
pub fn write_matrix(path: &Path, m: &RMatrix) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin") | Some("rmeq") => fs::write(path, encode_binary(m))?,
        _ => {
            let mut buf = Vec::new();
            write_csv(&mut buf, m)?;
            fs::write(path, buf)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binary_layout_is_exact() {
        let m = RMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = encode_binary(&m);
        assert_eq!(&b[..5], b"RMEQ1");
        assert_eq!(b[5], 1);
        assert_eq!(&b[6..8], &[0, 0]);
        assert_eq!(u64::from_le_bytes(b[8..16].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(b[16..24].try_into().unwrap()), 3);
        // row-major: second value is m[(0, 1)]
        assert_eq!(f64::from_le_bytes(b[32..40].try_into().unwrap()), 2.0);
        assert_eq!(b.len(), 24 + 6 * 8);
    }

    #[test]
    fn rejects_bad_headers() {
        let m = RMatrix::zeros(1, 1);
        let mut b = encode_binary(&m);
        b[5] = 2;
        assert!(decode_binary(&b).is_err());
        let mut b = encode_binary(&m);
        b[0] = b'X';
        assert!(decode_binary(&b).is_err());
        let b = encode_binary(&m);
        assert!(decode_binary(&b[..b.len() - 1]).is_err());
        assert!(read_csv("2 2\n1,2\n".as_bytes()).is_err());
        assert!(read_csv("2\n".as_bytes()).is_err());
    }

    #[test]
    fn csv_header_and_rows() {
        let m = read_csv("2 2\n1,2\n3,4\n".as_bytes()).unwrap();
        assert_eq!(m[(1, 0)], 3.0);
        let mut out = Vec::new();
        write_csv(&mut out, &m).unwrap();
        assert!(String::from_utf8(out).unwrap().starts_with("2 2\n"));
    }

    proptest! {
        #[test]
        fn formats_round_trip(rows in 0usize..6, cols in 0usize..6, seed in any::<u64>()) {
            let m = RMatrix::from_fn(rows, cols, |i, j| {
                let v = crate::rng::splitmix64(seed ^ ((i * 31 + j) as u64));
                (v as f64 / u64::MAX as f64 - 0.5) * 1e3
            });
            prop_assert_eq!(&decode_binary(&encode_binary(&m)).unwrap(), &m);
            let mut csv = Vec::new();
            write_csv(&mut csv, &m).unwrap();
            prop_assert_eq!(&read_csv(&csv[..]).unwrap(), &m);
            let c = m.map(|x| Complex64::new(x, -2.0 * x));
            prop_assert_eq!(&decode_binary_complex(&encode_binary_complex(&c)).unwrap(), &c);
        }
    }
}
