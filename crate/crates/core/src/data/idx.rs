//! IDX files (the MNIST distribution format), plain or gzipped.
//!
//! Layout: big-endian `u32` magic (`0x0803` images, `0x0801` labels), one big-endian
//! `u32` per dimension, then the unsigned byte payload.

use super::{normalize_row, Dataset, DatasetSource};
use crate::rng::rng_from_seed;
use crate::{Error, Result};
use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use std::io::{Read, Write};
use std::path::Path;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Reads a file, inflating it when it starts with the gzip signature.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Corrupt(format!("header truncated at byte {at}")))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = be_u32(bytes, 0)?;
    if found != expected {
        return Err(Error::BadMagic { expected, found });
    }
    Ok(())
}

fn payload(bytes: &[u8], header: usize, len: usize) -> Result<&[u8]> {
    bytes.get(header..header + len).ok_or_else(|| {
        Error::Corrupt(format!(
            "payload truncated: expected {len} bytes, found {}",
            bytes.len().saturating_sub(header)
        ))
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// Row-major pixels, `count · rows · cols` bytes.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn image(&self, i: usize) -> &[u8] {
        let size = self.rows * self.cols;
        &self.pixels[i * size..(i + 1) * size]
    }
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let pixels = payload(bytes, 16, count * rows * cols)?.to_vec();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABELS_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    Ok(payload(bytes, 8, count)?.to_vec())
}

pub fn write_idx_images<W: Write>(out: &mut W, images: &IdxImages) -> Result<()> {
    out.write_all(&IMAGES_MAGIC.to_be_bytes())?;
    for d in [images.count, images.rows, images.cols] {
        out.write_all(&(d as u32).to_be_bytes())?;
    }
    out.write_all(&images.pixels)?;
    Ok(())
}

pub fn write_idx_labels<W: Write>(out: &mut W, labels: &[u8]) -> Result<()> {
    out.write_all(&LABELS_MAGIC.to_be_bytes())?;
    out.write_all(&(labels.len() as u32).to_be_bytes())?;
    out.write_all(labels)?;
    Ok(())
}

/// Loads `count` MNIST examples chosen by a seeded shuffle, labelled even/odd.
pub fn load_mnist(images: &Path, labels: &Path, count: usize, seed: u64) -> Result<Dataset> {
    let imgs = parse_idx_images(&read_maybe_gz(images)?)?;
    let digits = parse_idx_labels(&read_maybe_gz(labels)?)?;
    if imgs.count != digits.len() {
        return Err(Error::Corrupt(format!(
            "{} images but {} labels",
            imgs.count,
            digits.len()
        )));
    }
    if count == 0 || count > imgs.count {
        return Err(Error::CountExceeded {
            requested: count,
            available: imgs.count,
        });
    }
    let mut order: Vec<usize> = (0..imgs.count).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let mut xs = Vec::with_capacity(count);
    let mut ys = Vec::with_capacity(count);
    for &i in &order[..count] {
        let mut x: Vec<f64> = imgs.image(i).iter().map(|&p| p as f64 / 255.0).collect();
        normalize_row(&mut x)?;
        xs.push(x);
        ys.push(even_odd_label(digits[i]));
    }
    Dataset::new(xs, ys, DatasetSource::MnistEvenOdd, seed)
}

fn even_odd_label(digit: u8) -> f64 {
    if digit.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}
