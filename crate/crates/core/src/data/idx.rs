//! IDX (MNIST) files: big-endian magic, big-endian `u32` dimensions, then an
//! unsigned-byte payload.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{DataMatrix, Dataset, Provenance};
use crate::{Error, Result};

/// Magic of a rank-3 unsigned-byte tensor (images).
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
/// Magic of a rank-1 unsigned-byte tensor (labels).
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// `count · rows · cols` pixels, image-major then row-major.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn pixels_per_image(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, k: usize) -> &[u8] {
        let p = self.pixels_per_image();
        &self.pixels[k * p..(k + 1) * p]
    }
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail(&self, offset: usize, msg: impl Into<String>) -> Error {
        Error::IdxFormat {
            path: self.path.to_path_buf(),
            offset,
            msg: msg.into(),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| self.fail(self.pos, "truncated header"))?;
        self.pos = end;
        Ok(u32::from_be_bytes(chunk.try_into().expect("4 bytes")))
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let got = self.u32()?;
        if got != expected {
            return Err(self.fail(
                0,
                format!("bad magic 0x{got:08x}, expected 0x{expected:08x}"),
            ));
        }
        Ok(())
    }

    fn payload(&mut self, len: usize) -> Result<Vec<u8>> {
        let available = self.bytes.len() - self.pos;
        if available < len {
            return Err(self.fail(
                self.bytes.len(),
                format!("truncated payload: expected {len} bytes, found {available}"),
            ));
        }
        let out = self.bytes[self.pos..self.pos + len].to_vec();
        self.pos += len;
        Ok(out)
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parse an image file already in memory; `path` is only used in errors.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<IdxImages> {
    let mut rd = Reader {
        path,
        bytes,
        pos: 0,
    };
    rd.magic(IDX_IMAGES_MAGIC)?;
    let count = rd.u32()? as usize;
    let rows = rd.u32()? as usize;
    let cols = rd.u32()? as usize;
    let pixels = rd.payload(count * rows * cols)?;
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let mut rd = Reader {
        path,
        bytes,
        pos: 0,
    };
    rd.magic(IDX_LABELS_MAGIC)?;
    let count = rd.u32()? as usize;
    rd.payload(count)
}

pub fn read_idx_images(path: impl AsRef<Path>) -> Result<IdxImages> {
    let path = path.as_ref();
    parse_idx_images(&read_file(path)?, path)
}

pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    parse_idx_labels(&read_file(path)?, path)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_idx_images(path: impl AsRef<Path>, images: &IdxImages) -> Result<()> {
    let mut bytes = Vec::with_capacity(16 + images.pixels.len());
    for v in [
        IDX_IMAGES_MAGIC,
        images.count as u32,
        images.rows as u32,
        images.cols as u32,
    ] {
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    bytes.extend_from_slice(&images.pixels);
    write_file(path.as_ref(), &bytes)
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    bytes.extend_from_slice(labels);
    write_file(path.as_ref(), &bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelEncoding {
    /// Label byte as a real number.
    Raw,
    /// Keep only the two classes; the first maps to −1, the second to +1.
    Binary(u8, u8),
}

impl Default for LabelEncoding {
    fn default() -> Self {
        LabelEncoding::Binary(0, 1)
    }
}

#[derive(Debug, Clone, Default)]
pub struct IdxOptions {
    /// Keep at most this many samples (after class filtering).
    pub limit: Option<usize>,
    /// Map pixels to `[0, 1]` and center every feature.
    pub normalize: bool,
    pub encoding: LabelEncoding,
}

/// Load an image/label file pair into a [`Dataset`].
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    opts: &IdxOptions,
) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let images = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    let (x, y) = assemble(&images, &labels, opts)?;
    Dataset::new(
        x,
        y,
        Provenance::IdxFile {
            images: PathBuf::from(images_path),
            labels: PathBuf::from(labels_path),
        },
    )
}

/// Turn parsed tensors into a data matrix and targets.
pub(crate) fn assemble(
    images: &IdxImages,
    labels: &[u8],
    opts: &IdxOptions,
) -> Result<(DataMatrix, Vec<f64>)> {
    if images.count != labels.len() {
        return Err(Error::IdxConsistency(format!(
            "{} images but {} labels",
            images.count,
            labels.len()
        )));
    }
    let mut keep: Vec<(usize, f64)> = labels
        .iter()
        .enumerate()
        .filter_map(|(k, &l)| match opts.encoding {
            LabelEncoding::Raw => Some((k, f64::from(l))),
            LabelEncoding::Binary(neg, _) if l == neg => Some((k, -1.0)),
            LabelEncoding::Binary(_, pos) if l == pos => Some((k, 1.0)),
            LabelEncoding::Binary(..) => None,
        })
        .collect();
    if let Some(limit) = opts.limit {
        keep.truncate(limit);
    }
    if keep.is_empty() {
        return Err(Error::IdxConsistency("no samples selected".into()));
    }
    let d = images.pixels_per_image();
    let scale = if opts.normalize { 1.0 / 255.0 } else { 1.0 };
    let mut x = Array2::<f64>::zeros((keep.len(), d));
    for (row, &(k, _)) in keep.iter().enumerate() {
        for (dst, &px) in x.row_mut(row).iter_mut().zip(images.image(k)) {
            *dst = f64::from(px) * scale;
        }
    }
    if opts.normalize {
        let means = x.mean_axis(ndarray::Axis(0)).expect("nonempty");
        x -= &means;
    }
    let y = keep.into_iter().map(|(_, t)| t).collect();
    Ok((DataMatrix::new(x)?, y))
}
