//! Pixel grids, flows on their edges and the flow application map.
//!
//! A flow assigns a signed amount of mass to every edge between horizontally
//! or vertically adjacent pixels. Positive values on a horizontal edge move
//! mass one pixel to the right, positive values on a vertical edge move it one
//! pixel down. Applying a flow to an image is an affine map `R + A δ`, where
//! `A` is the signed incidence matrix built by [`FlowMatrix::new`].
//!
//! Flattened layout used everywhere in the crate: pixels row-major; flows as
//! all horizontal edges row-major (`rows × (cols-1)`), followed by all vertical
//! edges row-major (`(rows-1) × cols`).

use std::ops::{Add, Sub};

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::tol::{TAU_FEAS, TAU_MASS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct GridShape {
    rows: usize,
    cols: usize,
}

impl GridShape {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid shape must be positive, got {rows}x{cols}"
            )));
        }
        Ok(Self { rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }

    /// Number of horizontal edges, `rows * (cols - 1)`.
    pub fn right_len(&self) -> usize {
        self.rows * (self.cols - 1)
    }

    /// Number of vertical edges, `(rows - 1) * cols`.
    pub fn down_len(&self) -> usize {
        (self.rows - 1) * self.cols
    }

    /// Dimension of the flow domain.
    pub fn flow_dim(&self) -> usize {
        self.right_len() + self.down_len()
    }

    pub fn pixel(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.rows && j < self.cols);
        i * self.cols + j
    }

    pub fn coords(&self, pixel: usize) -> (usize, usize) {
        (pixel / self.cols, pixel % self.cols)
    }

    /// Flat flow index of the edge `(i, j) -> (i, j + 1)`.
    pub fn right_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.rows && j + 1 < self.cols);
        i * (self.cols - 1) + j
    }

    /// Flat flow index of the edge `(i, j) -> (i + 1, j)`.
    pub fn down_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i + 1 < self.rows && j < self.cols);
        self.right_len() + i * self.cols + j
    }

    /// Largest L1 ground distance between two pixels; bounds every W1 distance.
    pub fn diameter(&self) -> f64 {
        (self.rows + self.cols - 2) as f64
    }

    pub(crate) fn ensure_same(&self, other: &GridShape, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::dim(format!(
                "{what}: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }
}

impl std::fmt::Display for GridShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

/// Anything that carries one value per pixel.
pub trait PixelValues {
    fn shape(&self) -> GridShape;
    fn values(&self) -> &[f64];
}

/// A probability distribution over the pixels of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridImage {
    shape: GridShape,
    mass: Vec<f64>,
}

impl GridImage {
    /// Validates a distribution. Entries in `[-TAU_FEAS, 0)` are clipped to zero
    /// and the result is renormalized; anything more negative, or a total mass
    /// further than `TAU_MASS` from one, is rejected.
    pub fn new(shape: GridShape, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != shape.pixels() {
            return Err(Error::dim(format!(
                "image of shape {shape} needs {} values, got {}",
                shape.pixels(),
                mass.len()
            )));
        }
        if let Some(bad) = mass.iter().find(|v| !v.is_finite()) {
            return Err(Error::Mass(format!("non-finite pixel value {bad}")));
        }
        let min = mass.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -TAU_FEAS {
            return Err(Error::Mass(format!("negative pixel mass {min}")));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > TAU_MASS {
            return Err(Error::Mass(format!("total mass {total} is not 1")));
        }
        Ok(Self::clip_and_normalize(shape, mass))
    }

    /// Normalizes nonnegative intensities by their total.
    pub fn from_intensities(shape: GridShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.pixels() {
            return Err(Error::dim(format!(
                "image of shape {shape} needs {} values, got {}",
                shape.pixels(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Mass("intensities must be finite and nonnegative".into()));
        }
        let total: f64 = values.iter().sum();
        if total <= 0.0 {
            return Err(Error::Mass("image has zero total mass".into()));
        }
        let mass = values.into_iter().map(|v| v / total).collect();
        Ok(Self { shape, mass })
    }

    fn clip_and_normalize(shape: GridShape, mut mass: Vec<f64>) -> Self {
        for v in mass.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let total: f64 = mass.iter().sum();
        for v in mass.iter_mut() {
            *v /= total;
        }
        Self { shape, mass }
    }

    pub fn uniform(shape: GridShape) -> Self {
        let p = shape.pixels();
        Self {
            shape,
            mass: vec![1.0 / p as f64; p],
        }
    }

    pub fn point(shape: GridShape, i: usize, j: usize) -> Result<Self> {
        if i >= shape.rows() || j >= shape.cols() {
            return Err(Error::InvalidArgument(format!(
                "pixel ({i}, {j}) outside {shape}"
            )));
        }
        let mut mass = vec![0.0; shape.pixels()];
        mass[shape.pixel(i, j)] = 1.0;
        Ok(Self { shape, mass })
    }

    /// Pixel values drawn uniformly from `[0, 1)`, then normalized.
    pub fn random_uniform<R: Rng + ?Sized>(shape: GridShape, rng: &mut R) -> Self {
        loop {
            let values: Vec<f64> = (0..shape.pixels()).map(|_| rng.gen::<f64>()).collect();
            if let Ok(img) = Self::from_intensities(shape, values) {
                return img;
            }
        }
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mass[self.shape.pixel(i, j)]
    }

    pub fn into_raw(self) -> RawGrid {
        RawGrid {
            shape: self.shape,
            values: self.mass,
        }
    }
}

impl PixelValues for GridImage {
    fn shape(&self) -> GridShape {
        self.shape
    }

    fn values(&self) -> &[f64] {
        &self.mass
    }
}

/// Per-pixel values with no sign or mass constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct RawGrid {
    shape: GridShape,
    values: Vec<f64>,
}

impl RawGrid {
    pub fn new(shape: GridShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.pixels() {
            return Err(Error::dim(format!(
                "grid of shape {shape} needs {} values, got {}",
                shape.pixels(),
                values.len()
            )));
        }
        Ok(Self { shape, values })
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.shape.pixel(i, j)]
    }

    /// Converts to a distribution, clipping tiny negatives (see [`GridImage::new`]).
    pub fn into_image(self) -> Result<GridImage> {
        GridImage::new(self.shape, self.values)
    }
}

impl PixelValues for RawGrid {
    fn shape(&self) -> GridShape {
        self.shape
    }

    fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Signed mass movement along the edges of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    shape: GridShape,
    data: Vec<f64>,
}

impl Flow {
    pub fn zeros(shape: GridShape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.flow_dim()],
        }
    }

    pub fn from_vec(shape: GridShape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.flow_dim() {
            return Err(Error::dim(format!(
                "flow on {shape} needs {} values, got {}",
                shape.flow_dim(),
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn right(&self, i: usize, j: usize) -> f64 {
        self.data[self.shape.right_index(i, j)]
    }

    pub fn down(&self, i: usize, j: usize) -> f64 {
        self.data[self.shape.down_index(i, j)]
    }

    pub fn set_right(&mut self, i: usize, j: usize, value: f64) {
        let k = self.shape.right_index(i, j);
        self.data[k] = value;
    }

    pub fn set_down(&mut self, i: usize, j: usize, value: f64) {
        let k = self.shape.down_index(i, j);
        self.data[k] = value;
    }

    pub(crate) fn add_right(&mut self, i: usize, j: usize, value: f64) {
        let k = self.shape.right_index(i, j);
        self.data[k] += value;
    }

    pub(crate) fn add_down(&mut self, i: usize, j: usize, value: f64) {
        let k = self.shape.down_index(i, j);
        self.data[k] += value;
    }

    pub fn l1(&self) -> f64 {
        flow_l1(self)
    }

    /// `self + scale * other`.
    pub fn axpy(&self, scale: f64, other: &Flow) -> Result<Flow> {
        self.shape.ensure_same(&other.shape, "flow shapes")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + scale * b)
            .collect();
        Ok(Flow {
            shape: self.shape,
            data,
        })
    }

    /// L1 distance between two flows on the same grid.
    pub fn l1_distance(&self, other: &Flow) -> f64 {
        assert_eq!(self.shape, other.shape, "flow shapes differ");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

impl Add for &Flow {
    type Output = Flow;

    fn add(self, rhs: &Flow) -> Flow {
        self.axpy(1.0, rhs).expect("flow shapes differ")
    }
}

impl Sub for &Flow {
    type Output = Flow;

    fn sub(self, rhs: &Flow) -> Flow {
        self.axpy(-1.0, rhs).expect("flow shapes differ")
    }
}

/// Applies a flow to a grid pixel by pixel:
/// `out[i,j] = base[i,j] + down[i-1,j] + right[i,j-1] - down[i,j] - right[i,j]`,
/// where edges outside the grid count as zero.
pub fn apply_flow<B: PixelValues + ?Sized>(base: &B, delta: &Flow) -> Result<RawGrid> {
    let shape = base.shape();
    shape.ensure_same(&delta.shape, "apply_flow")?;
    let (n, m) = (shape.rows(), shape.cols());
    let src = base.values();
    let mut out = Vec::with_capacity(shape.pixels());
    for i in 0..n {
        for j in 0..m {
            let mut v = src[shape.pixel(i, j)];
            if i > 0 {
                v += delta.down(i - 1, j);
            }
            if j > 0 {
                v += delta.right(i, j - 1);
            }
            if i + 1 < n {
                v -= delta.down(i, j);
            }
            if j + 1 < m {
                v -= delta.right(i, j);
            }
            out.push(v);
        }
    }
    Ok(RawGrid {
        shape,
        values: out,
    })
}

/// Sum of absolute edge flows.
pub fn flow_l1(delta: &Flow) -> f64 {
    delta.data.iter().map(|v| v.abs()).sum()
}

/// Whether `reference + A delta` is a distribution, i.e. has no entry below `-tol`.
/// Total mass is preserved by every flow, so only signs are checked.
pub fn is_feasible(reference: &GridImage, delta: &Flow, tol: f64) -> Result<bool> {
    let out = apply_flow(reference, delta)?;
    Ok(out.min() >= -tol)
}

/// One edge of the grid as a column of the incidence matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeColumn {
    /// Pixel receiving mass for a positive flow value.
    pub head: usize,
    /// Pixel losing mass for a positive flow value.
    pub tail: usize,
}

/// Sparse signed incidence matrix `A` with `apply_flow(R, δ) = R + A δ`.
///
/// Rows are pixels, columns are edges in the flow layout. Every column has a
/// single `+1` (at `head`) and a single `-1` (at `tail`).
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMatrix {
    shape: GridShape,
    columns: Vec<EdgeColumn>,
}

impl FlowMatrix {
    pub fn new(shape: GridShape) -> Self {
        let (n, m) = (shape.rows(), shape.cols());
        let mut columns = Vec::with_capacity(shape.flow_dim());
        for i in 0..n {
            for j in 0..m.saturating_sub(1) {
                columns.push(EdgeColumn {
                    head: shape.pixel(i, j + 1),
                    tail: shape.pixel(i, j),
                });
            }
        }
        for i in 0..n.saturating_sub(1) {
            for j in 0..m {
                columns.push(EdgeColumn {
                    head: shape.pixel(i + 1, j),
                    tail: shape.pixel(i, j),
                });
            }
        }
        Self { shape, columns }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn nrows(&self) -> usize {
        self.shape.pixels()
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[EdgeColumn] {
        &self.columns
    }

    /// `A x` for a flow-length vector.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols());
        let mut out = vec![0.0; self.nrows()];
        for (col, &v) in self.columns.iter().zip(x) {
            out[col.head] += v;
            out[col.tail] -= v;
        }
        out
    }

    /// `Aᵀ y` for a pixel-length vector.
    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.nrows());
        self.columns.iter().map(|c| y[c.head] - y[c.tail]).collect()
    }

    /// `R + A δ`, equal to [`apply_flow`] up to rounding.
    pub fn affine<B: PixelValues + ?Sized>(&self, base: &B, delta: &Flow) -> Result<RawGrid> {
        self.shape.ensure_same(&base.shape(), "flow matrix vs base")?;
        self.shape.ensure_same(&delta.shape(), "flow matrix vs flow")?;
        let mut values = self.mul_vec(delta.as_slice());
        for (v, b) in values.iter_mut().zip(base.values()) {
            *v += b;
        }
        RawGrid::new(self.shape, values)
    }

    /// Right product `W A` for a matrix with one column per pixel.
    pub fn left_mul(&self, weights: &Array2<f64>) -> Result<Array2<f64>> {
        if weights.ncols() != self.nrows() {
            return Err(Error::dim(format!(
                "weight matrix has {} columns, grid has {} pixels",
                weights.ncols(),
                self.nrows()
            )));
        }
        let mut out = Array2::zeros((weights.nrows(), self.ncols()));
        for (e, col) in self.columns.iter().enumerate() {
            let diff = &weights.column(col.head) - &weights.column(col.tail);
            out.column_mut(e).assign(&diff);
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.nrows(), self.ncols()));
        for (e, col) in self.columns.iter().enumerate() {
            a[[col.head, e]] = 1.0;
            a[[col.tail, e]] = -1.0;
        }
        a
    }
}
