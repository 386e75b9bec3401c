//! `BPMMAT01` matrix container.
//!
//! 8-byte magic `BPMMAT01`, `u64` LE rows, `u64` LE cols, then the entries row-major
//! as little-endian binary64.

use crate::{Error, Result};
use nalgebra::DMatrix;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MATRIX_MAGIC: &[u8; 8] = b"BPMMAT01";

pub fn write_matrix<W: Write>(out: &mut W, m: &DMatrix<f64>) -> Result<()> {
    out.write_all(MATRIX_MAGIC)?;
    out.write_all(&(m.nrows() as u64).to_le_bytes())?;
    out.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_exact_or_corrupt<R: Read>(input: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Corrupt(format!("truncated {what}")),
        _ => Error::Io(e),
    })
}

pub fn read_matrix<R: Read>(input: &mut R) -> Result<DMatrix<f64>> {
    let mut magic = [0u8; 8];
    read_exact_or_corrupt(input, &mut magic, "magic")?;
    if &magic != MATRIX_MAGIC {
        return Err(Error::Corrupt(format!(
            "bad matrix magic {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    let mut word = [0u8; 8];
    read_exact_or_corrupt(input, &mut word, "header")?;
    let rows = u64::from_le_bytes(word) as usize;
    read_exact_or_corrupt(input, &mut word, "header")?;
    let cols = u64::from_le_bytes(word) as usize;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Corrupt(format!("implausible shape {rows}×{cols}")))?;
    let mut data = Vec::with_capacity(len.min(1 << 24));
    for _ in 0..len {
        read_exact_or_corrupt(input, &mut word, "payload")?;
        data.push(f64::from_le_bytes(word));
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Corrupt("trailing bytes after matrix payload".into()));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn save_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    write_matrix(&mut out, m)?;
    out.flush()?;
    Ok(())
}

pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    read_matrix(&mut BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_matrix_is_24_bytes() {
        let mut buf = Vec::new();
        write_matrix(&mut buf, &DMatrix::zeros(0, 0)).unwrap();
        assert_eq!(buf.len(), 24);
        assert_eq!(read_matrix(&mut buf.as_slice()).unwrap().shape(), (0, 0));
    }

    #[test]
    fn bit_exact_roundtrip() {
        let m = DMatrix::from_row_slice(
            3,
            2,
            &[0.1, -0.0, f64::MIN_POSITIVE, 1e308, -7.25, f64::NAN],
        );
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        save_matrix(&p, &m).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 24 + 6 * 8);
        assert_eq!(&bytes[24..32], &0.1f64.to_le_bytes());
        // row-major: second stored value is m[(0, 1)]
        assert_eq!(&bytes[32..40], &(-0.0f64).to_le_bytes());
        let back = load_matrix(&p).unwrap();
        assert_eq!(back.shape(), (3, 2));
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn corrupt_inputs() {
        let mut buf = Vec::new();
        write_matrix(&mut buf, &DMatrix::from_element(2, 2, 1.0)).unwrap();
        assert!(matches!(
            read_matrix(&mut &buf[..buf.len() - 3]),
            Err(Error::Corrupt(_))
        ));
        assert!(matches!(
            read_matrix(&mut &buf[..12]),
            Err(Error::Corrupt(_))
        ));
        let mut extra = buf.clone();
        extra.push(0);
        assert!(matches!(
            read_matrix(&mut extra.as_slice()),
            Err(Error::Corrupt(_))
        ));
        buf[7] = b'2';
        assert!(matches!(
            read_matrix(&mut buf.as_slice()),
            Err(Error::Corrupt(_))
        ));
    }
}
