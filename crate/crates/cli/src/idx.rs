//! MNIST IDX files: big-endian `u32` header, unsigned bytes after it.

use std::fs;
use std::path::Path;

use gradlearn_core::Dataset;
use nalgebra::{DMatrix, DVector};

use crate::error::{CliError, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Raw images: `count` rows of `rows * cols` pixel bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn pixels_per_image(&self) -> usize {
        self.rows * self.cols
    }

    /// `count x (rows * cols)` with every byte divided by 255.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_iterator(
            self.count,
            self.pixels_per_image(),
            self.pixels.iter().map(|&b| f64::from(b) / 255.0),
        )
    }
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn u32(&mut self) -> Result<u32> {
        let end = self.at + 4;
        let word = self
            .bytes
            .get(self.at..end)
            .ok_or_else(|| CliError::format(self.path, "truncated header"))?;
        self.at = end;
        Ok(u32::from_be_bytes(word.try_into().unwrap()))
    }

    fn payload(&self, len: usize) -> Result<&[u8]> {
        let rest = &self.bytes[self.at..];
        if rest.len() < len {
            return Err(CliError::format(
                self.path,
                format!("truncated payload: expected {len} bytes, found {}", rest.len()),
            ));
        }
        Ok(&rest[..len])
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn check_magic(path: &Path, found: u32, want: u32) -> Result<()> {
    if found != want {
        return Err(CliError::format(
            path,
            format!("bad magic number {found:#010x}, expected {want:#010x}"),
        ));
    }
    Ok(())
}

pub fn parse_images(path: &Path, bytes: &[u8]) -> Result<IdxImages> {
    let mut cur = Cursor { path, bytes, at: 0 };
    check_magic(path, cur.u32()?, IMAGES_MAGIC)?;
    let count = cur.u32()? as usize;
    let rows = cur.u32()? as usize;
    let cols = cur.u32()? as usize;
    let pixels = cur.payload(count * rows * cols)?.to_vec();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_labels(path: &Path, bytes: &[u8]) -> Result<Vec<u8>> {
    let mut cur = Cursor { path, bytes, at: 0 };
    check_magic(path, cur.u32()?, LABELS_MAGIC)?;
    let count = cur.u32()? as usize;
    Ok(cur.payload(count)?.to_vec())
}

pub fn load_idx_images(path: &Path) -> Result<IdxImages> {
    parse_images(path, &read_bytes(path)?)
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    parse_labels(path, &read_bytes(path)?)
}

pub fn encode_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for word in [
        IMAGES_MAGIC,
        images.count as u32,
        images.rows as u32,
        images.cols as u32,
    ] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn write_idx_images(path: &Path, images: &IdxImages) -> Result<()> {
    fs::write(path, encode_images(images)).map_err(|e| CliError::io(path, e))
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    fs::write(path, encode_labels(labels)).map_err(|e| CliError::io(path, e))
}

/// Keeps the images labelled `negative` or `positive` and relabels them
/// `-1` / `+1`. `None` keeps everything and requires labels already in
/// `{0, 1}`, mapped to `-1` / `+1`.
pub fn digit_pair(
    path: &Path,
    images: &IdxImages,
    labels: &[u8],
    pair: Option<(u8, u8)>,
) -> Result<Dataset> {
    if images.count != labels.len() {
        return Err(CliError::format(
            path,
            format!("{} images but {} labels", images.count, labels.len()),
        ));
    }
    let (neg, pos) = pair.unwrap_or((0, 1));
    let keep: Vec<usize> = (0..labels.len())
        .filter(|&i| labels[i] == neg || labels[i] == pos)
        .collect();
    if pair.is_none() && keep.len() != labels.len() {
        return Err(CliError::format(path, "labels outside {0, 1}; pass a digit pair"));
    }
    let x = images.to_matrix().select_rows(&keep);
    let y = DVector::from_iterator(
        keep.len(),
        keep.iter().map(|&i| if labels[i] == neg { -1.0 } else { 1.0 }),
    );
    Ok(Dataset::new(x, y)?)
}
