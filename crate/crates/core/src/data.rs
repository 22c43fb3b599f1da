//! Labeled image datasets: IDX and CSV ingestion, grid CSV files, and
//! the 28×28 → 8×8 reduction used for small experiments.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{GridImage, GridShape, PixelValues};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Idx,
    Csv,
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "idx" => Ok(DataFormat::Idx),
            "csv" => Ok(DataFormat::Csv),
            other => Err(Error::InvalidArgument(format!(
                "unknown data format {other:?} (expected idx or csv)"
            ))),
        }
    }
}

impl fmt::Display for DataFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataFormat::Idx => "idx",
            DataFormat::Csv => "csv",
        })
    }
}

/// Images normalized to unit mass, with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<GridImage>,
    pub labels: Vec<usize>,
    pub source: String,
}

impl Dataset {
    pub fn new(images: Vec<GridImage>, labels: Vec<usize>, source: impl Into<String>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::dim(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(first) = images.first() {
            for img in &images[1..] {
                first.shape().ensure_same(&img.shape(), "dataset image")?;
            }
        }
        Ok(Self {
            images,
            labels,
            source: source.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn shape(&self) -> Option<GridShape> {
        self.images.first().map(PixelValues::shape)
    }

    /// Items `start..start + count`, clamped to the dataset.
    pub fn slice(&self, start: usize, count: usize) -> Dataset {
        let lo = start.min(self.len());
        let hi = start.saturating_add(count).min(self.len());
        Dataset {
            images: self.images[lo..hi].to_vec(),
            labels: self.labels[lo..hi].to_vec(),
            source: format!("{}[{lo}..{hi}]", self.source),
        }
    }
}

fn be_u32(bytes: &[u8], offset: usize, context: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::parse(context, format!("truncated header at byte {offset}")))
}

/// Raw IDX image file: shape and one intensity vector per image.
pub fn parse_idx_images(bytes: &[u8], context: &str) -> Result<(GridShape, Vec<Vec<u8>>)> {
    let magic = be_u32(bytes, 0, context)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::parse(context, format!("bad magic {magic:#010x} at byte 0")));
    }
    let count = be_u32(bytes, 4, context)? as usize;
    let rows = be_u32(bytes, 8, context)? as usize;
    let cols = be_u32(bytes, 12, context)? as usize;
    let shape = GridShape::new(rows, cols).map_err(|e| Error::parse(context, format!("bytes 8..16: {e}")))?;
    let body = &bytes[16..];
    let need = count * shape.pixels();
    if body.len() < need {
        return Err(Error::parse(
            context,
            format!("truncated: {count} images need {} bytes, file has {}", 16 + need, bytes.len()),
        ));
    }
    let images = body[..need].chunks(shape.pixels()).map(<[u8]>::to_vec).collect();
    Ok((shape, images))
}

pub fn parse_idx_labels(bytes: &[u8], context: &str) -> Result<Vec<usize>> {
    let magic = be_u32(bytes, 0, context)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::parse(context, format!("bad magic {magic:#010x} at byte 0")));
    }
    let count = be_u32(bytes, 4, context)? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(Error::parse(
            context,
            format!("truncated: {count} labels need {} bytes, file has {}", 8 + count, bytes.len()),
        ));
    }
    Ok(body[..count].iter().map(|&b| b as usize).collect())
}

/// Writes an IDX image file (used for fixtures).
pub fn encode_idx_images(shape: GridShape, images: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * shape.pixels());
    for v in [IDX_IMAGES_MAGIC, images.len() as u32, shape.rows() as u32, shape.cols() as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        out.extend_from_slice(img);
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// 24×24 center crop of a 28×28 image followed by 3×3 block sums.
pub fn downsample_28_to_8(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() != 28 * 28 {
        return Err(Error::dim(format!("expected 784 pixels, got {}", values.len())));
    }
    let mut out = vec![0.0; 64];
    for i in 0..24 {
        for j in 0..24 {
            out[(i / 3) * 8 + j / 3] += values[(i + 2) * 28 + (j + 2)];
        }
    }
    Ok(out)
}

/// Optional size reduction applied to raw intensities before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Resize {
    #[default]
    Keep,
    /// 28×28 → 8×8; other sizes are left alone.
    Mnist8,
}

fn to_image(shape: GridShape, raw: Vec<f64>, resize: Resize, context: impl Fn() -> String) -> Result<GridImage> {
    let (shape, raw) = if resize == Resize::Mnist8 && shape.rows() == 28 && shape.cols() == 28 {
        (GridShape::new(8, 8)?, downsample_28_to_8(&raw)?)
    } else {
        (shape, raw)
    };
    GridImage::from_intensities(shape, raw).map_err(|e| Error::parse(context(), e.to_string()))
}

/// Labels file next to an IDX image file (`images` → `labels`, `idx3` → `idx1`).
pub fn idx_labels_path(images: &Path) -> PathBuf {
    let name = images
        .file_name()
        .map(|n| n.to_string_lossy().replace("images", "labels").replace("idx3", "idx1"))
        .unwrap_or_default();
    images.with_file_name(name)
}

pub fn ingest_idx(images: &Path, labels: &Path, resize: Resize) -> Result<Dataset> {
    let img_bytes = std::fs::read(images).map_err(|e| Error::io(images, e))?;
    let lab_bytes = std::fs::read(labels).map_err(|e| Error::io(labels, e))?;
    let img_ctx = images.display().to_string();
    let (shape, raw) = parse_idx_images(&img_bytes, &img_ctx)?;
    let labs = parse_idx_labels(&lab_bytes, &labels.display().to_string())?;
    if labs.len() != raw.len() {
        return Err(Error::dim(format!("{} images but {} labels", raw.len(), labs.len())));
    }
    let pixels = shape.pixels();
    let mut out = Vec::with_capacity(raw.len());
    for (k, img) in raw.into_iter().enumerate() {
        let values = img.into_iter().map(f64::from).collect();
        out.push(to_image(shape, values, resize, || {
            format!("{img_ctx} image {k} (byte {})", 16 + k * pixels)
        })?);
    }
    Dataset::new(out, labs, img_ctx)
}

/// One row per image: label, then pixels row-major. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse_csv_dataset(text: &str, shape: GridShape, resize: Resize, context: &str) -> Result<Dataset> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let ctx = || format!("{context} line {}", n + 1);
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != shape.pixels() + 1 {
            return Err(Error::parse(
                ctx(),
                format!("expected {} cells, found {}", shape.pixels() + 1, cells.len()),
            ));
        }
        let label: usize = cells[0]
            .parse()
            .map_err(|_| Error::parse(ctx(), format!("column 1: label {:?} is not a class index", cells[0])))?;
        let mut values = Vec::with_capacity(shape.pixels());
        for (c, cell) in cells[1..].iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::parse(ctx(), format!("column {}: {cell:?} is not a number", c + 2)))?;
            values.push(v);
        }
        images.push(to_image(shape, values, resize, ctx)?);
        labels.push(label);
    }
    Dataset::new(images, labels, context)
}

/// Reads a CSV dataset; without `shape` the pixel count must be a perfect square.
pub fn ingest_csv(path: &Path, shape: Option<GridShape>, resize: Resize) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ctx = path.display().to_string();
    let shape = match shape {
        Some(s) => s,
        None => {
            let Some(first) = text.lines().map(str::trim).find(|l| !l.is_empty() && !l.starts_with('#')) else {
                return Dataset::new(Vec::new(), Vec::new(), ctx);
            };
            let pixels = first.split(',').count().saturating_sub(1);
            let side = (pixels as f64).sqrt().round() as usize;
            if side * side != pixels || side == 0 {
                return Err(Error::parse(
                    &ctx,
                    format!("cannot infer a square grid from {pixels} pixels; pass a shape"),
                ));
            }
            GridShape::new(side, side)?
        }
    };
    parse_csv_dataset(&text, shape, resize, &ctx)
}

pub fn ingest(path: &Path, format: DataFormat, shape: Option<GridShape>, resize: Resize) -> Result<Dataset> {
    match format {
        DataFormat::Idx => ingest_idx(path, &idx_labels_path(path), resize),
        DataFormat::Csv => ingest_csv(path, shape, resize),
    }
}

/// Grid CSV: one line per pixel row.
pub fn grid_to_csv<B: PixelValues + ?Sized>(grid: &B) -> String {
    let shape = grid.shape();
    let mut out = String::new();
    for i in 0..shape.rows() {
        let row: Vec<String> = (0..shape.cols())
            .map(|j| format!("{}", grid.values()[shape.pixel(i, j)]))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_grid_csv(text: &str, context: &str) -> Result<GridImage> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        for (c, cell) in line.split(',').enumerate() {
            let cell = cell.trim();
            let v: f64 = cell.parse().map_err(|_| {
                Error::parse(format!("{context} line {}", n + 1), format!("column {}: {cell:?} is not a number", c + 1))
            })?;
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::parse(
                    format!("{context} line {}", n + 1),
                    format!("{} columns, earlier rows have {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(context, "no pixel rows"));
    }
    let shape = GridShape::new(rows.len(), rows[0].len())?;
    GridImage::from_intensities(shape, rows.concat()).map_err(|e| Error::parse(context, e.to_string()))
}

pub fn read_grid_csv(path: &Path) -> Result<GridImage> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_grid_csv(&text, &path.display().to_string())
}
