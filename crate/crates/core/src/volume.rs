use crate::error::{Error, Result};
use crate::geometry::GridSpec;

/// Dense scalar field on a [`GridSpec`] lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    pub spec: GridSpec,
    pub data: Vec<f64>,
}

impl VoxelGrid {
    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            data: vec![0.0; spec.len()],
            spec,
        }
    }

    pub fn from_data(spec: GridSpec, data: Vec<f64>) -> Result<Self> {
        if data.len() != spec.len() {
            return Err(Error::ShapeMismatch(format!(
                "grid {:?} needs {} values, got {}",
                spec.shape,
                spec.len(),
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite voxel value at index {i}")));
        }
        Ok(Self { spec, data })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.spec.index(x, y, z)]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn ensure_same_shape(&self, other: &VoxelGrid) -> Result<()> {
        if self.spec.shape != other.spec.shape {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.spec.shape, other.spec.shape
            )));
        }
        Ok(())
    }

    pub fn dot(&self, other: &VoxelGrid) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Binary mask of voxels `>= threshold`.
    pub fn binarize(&self, threshold: f64) -> Vec<bool> {
        self.data.iter().map(|&v| v >= threshold).collect()
    }
}

/// Row-major 2D image: `data[row * cols + col]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_data(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{rows}x{cols} image needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn dot(&self, other: &Image) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}
