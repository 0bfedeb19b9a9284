//! Volumetric data types shared by every stage.
//!
//! All grids are stored x-fastest: voxel `(x, y, z)` lives at flat index
//! `x + nx * (y + ny * z)`.

mod nifti;

pub use nifti::{
    decode_nifti, encode_nifti, encode_nifti_as, read_label_volume, read_nifti, read_probability_map,
    read_volume, write_class_map, write_nifti, write_nifti_as, write_probability_map, Geometry,
    NiftiDatatype, NiftiImage, NiftiSource,
};

use crate::error::{Error, Result};

/// Voxel counts along x, y, z.
pub type Dims = [usize; 3];
/// Voxel size in millimetres along x, y, z.
pub type Spacing = [f64; 3];

pub(crate) fn voxel_count(dims: Dims) -> usize {
    dims[0] * dims[1] * dims[2]
}

#[inline]
pub fn flat_index(dims: Dims, x: usize, y: usize, z: usize) -> usize {
    x + dims[0] * (y + dims[1] * z)
}

#[inline]
pub fn unflatten(dims: Dims, idx: usize) -> [usize; 3] {
    let x = idx % dims[0];
    let r = idx / dims[0];
    [x, r % dims[1], r / dims[1]]
}

fn check_grid(dims: Dims, spacing: Spacing, len: usize) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::InvalidVolume(format!("dims {dims:?} must be positive")));
    }
    if spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(Error::InvalidVolume(format!(
            "spacing {spacing:?} must be positive and finite"
        )));
    }
    if len != voxel_count(dims) {
        return Err(Error::InvalidVolume(format!(
            "data length {len} != {} for dims {dims:?}",
            voxel_count(dims)
        )));
    }
    Ok(())
}

/// A 3D scalar intensity image.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: Dims,
    spacing: Spacing,
    data: Vec<f32>,
    geometry: Geometry,
}

impl Volume {
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<f32>) -> Result<Self> {
        check_grid(dims, spacing, data.len())?;
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidVolume(format!(
                "non-finite intensity {} at voxel {i}",
                data[i]
            )));
        }
        Ok(Self {
            dims,
            spacing,
            data,
            geometry: Geometry::default(),
        })
    }

    pub fn filled(dims: Dims, spacing: Spacing, value: f32) -> Result<Self> {
        Self::new(dims, spacing, vec![value; voxel_count(dims)])
    }

    /// Builds a volume by evaluating `f(x, y, z)` at every voxel.
    pub fn from_fn<F: Fn(usize, usize, usize) -> f32>(
        dims: Dims,
        spacing: Spacing,
        f: F,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(voxel_count(dims));
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Self::new(dims, spacing, data)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn with_geometry(mut self, geometry: Geometry) -> Self {
        self.geometry = geometry;
        self
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[flat_index(self.dims, x, y, z)]
    }

    /// Same grid and geometry, new intensities.
    pub fn with_data(&self, data: Vec<f32>) -> Result<Self> {
        Ok(Self::new(self.dims, self.spacing, data)?.with_geometry(self.geometry.clone()))
    }
}

/// A 3D class-id image: 0 background, 1 VS, 2 cochlea.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    dims: Dims,
    spacing: Spacing,
    data: Vec<u8>,
    geometry: Geometry,
}

/// Largest valid class id.
pub const MAX_CLASS: u8 = 2;

impl LabelVolume {
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<u8>) -> Result<Self> {
        check_grid(dims, spacing, data.len())?;
        if let Some(i) = data.iter().position(|&v| v > MAX_CLASS) {
            return Err(Error::InvalidVolume(format!(
                "class id {} at voxel {i} is not in {{0, 1, 2}}",
                data[i]
            )));
        }
        Ok(Self {
            dims,
            spacing,
            data,
            geometry: Geometry::default(),
        })
    }

    pub fn zeros(dims: Dims, spacing: Spacing) -> Result<Self> {
        Self::new(dims, spacing, vec![0; voxel_count(dims)])
    }

    pub fn from_fn<F: Fn(usize, usize, usize) -> u8>(
        dims: Dims,
        spacing: Spacing,
        f: F,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(voxel_count(dims));
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Self::new(dims, spacing, data)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn with_geometry(mut self, geometry: Geometry) -> Self {
        self.geometry = geometry;
        self
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.data[flat_index(self.dims, x, y, z)]
    }

    pub fn with_data(&self, data: Vec<u8>) -> Result<Self> {
        Ok(Self::new(self.dims, self.spacing, data)?.with_geometry(self.geometry.clone()))
    }

    /// Binary mask of one class.
    pub fn mask(&self, class_id: u8) -> Vec<bool> {
        self.data.iter().map(|&v| v == class_id).collect()
    }

    /// One-hot encoding, class-major, as f64 (`num_classes * voxels`).
    pub fn one_hot(&self, num_classes: usize) -> Vec<f64> {
        let n = self.data.len();
        let mut out = vec![0.0; num_classes * n];
        for (i, &c) in self.data.iter().enumerate() {
            if (c as usize) < num_classes {
                out[c as usize * n + i] = 1.0;
            }
        }
        out
    }

    /// Checks that this label grid can be paired with `vol`.
    pub fn check_aligned(&self, vol: &Volume) -> Result<()> {
        if self.dims != vol.dims() {
            return Err(Error::Shape(format!(
                "label dims {:?} != image dims {:?}",
                self.dims,
                vol.dims()
            )));
        }
        Ok(())
    }
}

/// Tolerance on per-voxel probability sums.
pub const PROB_SUM_TOL: f32 = 1e-4;

/// Per-class soft predictions, class-major: entry `(c, i)` is at `c * voxels + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    num_classes: usize,
    dims: Dims,
    spacing: Spacing,
    data: Vec<f32>,
}

impl ProbabilityMap {
    pub fn new(num_classes: usize, dims: Dims, spacing: Spacing, data: Vec<f32>) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::InvalidVolume("num_classes must be positive".into()));
        }
        check_grid(dims, spacing, data.len() / num_classes)?;
        if data.len() != num_classes * voxel_count(dims) {
            return Err(Error::InvalidVolume(format!(
                "probability data length {} != {num_classes} x {}",
                data.len(),
                voxel_count(dims)
            )));
        }
        let n = voxel_count(dims);
        if let Some(j) = data.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidVolume(format!(
                "probability {} of class {} at voxel {} is outside [0, 1]",
                data[j],
                j / n,
                j % n
            )));
        }
        for i in 0..n {
            let s: f32 = (0..num_classes).map(|c| data[c * n + i]).sum();
            if (s - 1.0).abs() > PROB_SUM_TOL {
                return Err(Error::InvalidVolume(format!(
                    "class probabilities at voxel {i} sum to {s}"
                )));
            }
        }
        Ok(Self {
            num_classes,
            dims,
            spacing,
            data,
        })
    }

    /// One-hot map of a label volume.
    pub fn from_labels(labels: &LabelVolume, num_classes: usize) -> Result<Self> {
        let data = labels.one_hot(num_classes).into_iter().map(|v| v as f32).collect();
        Self::new(num_classes, labels.dims(), labels.spacing(), data)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn voxels(&self) -> usize {
        voxel_count(self.dims)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn class_slice(&self, c: usize) -> &[f32] {
        let n = self.voxels();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn prob(&self, c: usize, voxel: usize) -> f32 {
        self.data[c * self.voxels() + voxel]
    }

    /// Class-major probabilities as f64.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }
}

/// Shared access for operations that work on both image and label grids.
pub trait VoxelGrid: Sized {
    type Elem: Copy + Default + Send + Sync;

    fn dims(&self) -> Dims;
    fn spacing(&self) -> Spacing;
    fn voxels(&self) -> &[Self::Elem];
    fn geometry(&self) -> &Geometry;
    fn rebuild(&self, dims: Dims, spacing: Spacing, data: Vec<Self::Elem>) -> Result<Self>;
}

impl VoxelGrid for Volume {
    type Elem = f32;

    fn dims(&self) -> Dims {
        self.dims
    }
    fn spacing(&self) -> Spacing {
        self.spacing
    }
    fn voxels(&self) -> &[f32] {
        &self.data
    }
    fn geometry(&self) -> &Geometry {
        &self.geometry
    }
    fn rebuild(&self, dims: Dims, spacing: Spacing, data: Vec<f32>) -> Result<Self> {
        Ok(Volume::new(dims, spacing, data)?.with_geometry(self.geometry.clone()))
    }
}

impl VoxelGrid for LabelVolume {
    type Elem = u8;

    fn dims(&self) -> Dims {
        self.dims
    }
    fn spacing(&self) -> Spacing {
        self.spacing
    }
    fn voxels(&self) -> &[u8] {
        &self.data
    }
    fn geometry(&self) -> &Geometry {
        &self.geometry
    }
    fn rebuild(&self, dims: Dims, spacing: Spacing, data: Vec<u8>) -> Result<Self> {
        Ok(LabelVolume::new(dims, spacing, data)?.with_geometry(self.geometry.clone()))
    }
}
