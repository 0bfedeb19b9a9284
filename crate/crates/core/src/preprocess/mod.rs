//! Isotropic resampling, in-plane crop/pad and whole-volume z-scoring.
//!
//! Voxel `i` of a resampled axis sits at physical position `i * target`,
//! i.e. at continuous input index `i * target / source`; the first voxel
//! centre is shared by both grids.

pub mod bspline;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::mean_std;
use crate::volume::{Dims, LabelVolume, Spacing, Volume, VoxelGrid};
pub use bspline::Interpolation;
use bspline::{prefilter_cubic, Taps};

/// Label resampling rule. Only nearest neighbour keeps class ids valid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelMode {
    #[default]
    Nearest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResampleSpec {
    pub target_spacing: Spacing,
    /// Interpolation degree for intensities: 0, 1 or 3.
    pub image_order: u8,
    pub label_mode: LabelMode,
}

impl Default for ResampleSpec {
    fn default() -> Self {
        Self {
            target_spacing: [1.0; 3],
            image_order: 3,
            label_mode: LabelMode::Nearest,
        }
    }
}

impl ResampleSpec {
    pub fn isotropic(mm: f64) -> Self {
        Self {
            target_spacing: [mm; 3],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<Interpolation> {
        if self
            .target_spacing
            .iter()
            .any(|s| !s.is_finite() || *s <= 0.0)
        {
            return Err(Error::Parameter(format!(
                "target spacing {:?} must be positive",
                self.target_spacing
            )));
        }
        Interpolation::from_order(self.image_order).ok_or_else(|| {
            Error::Parameter(format!(
                "image_order {} not in {{0, 1, 3}}",
                self.image_order
            ))
        })
    }
}

/// Output voxel counts: `round(n * source / target)` (half away from zero),
/// at least 1 per axis.
pub fn output_dims(dims: Dims, spacing: Spacing, target: Spacing) -> Dims {
    let mut out = [0; 3];
    for a in 0..3 {
        let n = (dims[a] as f64 * spacing[a] / target[a]).round();
        if n < 1.0 {
            log::warn!(
                "axis {a}: {} voxels at {} mm resample to 0 voxels at {} mm; clamping to 1",
                dims[a],
                spacing[a],
                target[a]
            );
        }
        out[a] = n.max(1.0) as usize;
    }
    out
}

fn axis_stride(dims: Dims, axis: usize) -> usize {
    match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    }
}

/// Evaluates every line of an x-fastest grid along `axis` at the continuous
/// positions `coords`; the axis length becomes `coords.len()`.
pub(crate) fn resample_axis_at(data: &[f64], dims: Dims, axis: usize, coords: &[f64], interp: Interpolation) -> Vec<f64> {
    let n = dims[axis];
    let new_len = coords.len();
    let mut out_dims = dims;
    out_dims[axis] = new_len;
    let taps: Vec<Taps> = coords.iter().map(|&x| Taps::at(x, n, interp)).collect();

    let stride = axis_stride(dims, axis);
    let out_stride = axis_stride(out_dims, axis);
    // Lines are enumerated by (outer, inner) where inner < stride.
    let outer = dims.iter().product::<usize>() / (n * stride);
    let lines: Vec<Vec<f64>> = (0..outer * stride)
        .into_par_iter()
        .map(|line_id| {
            let (o, inner) = (line_id / stride, line_id % stride);
            let base = o * n * stride + inner;
            let mut line: Vec<f64> = (0..n).map(|k| data[base + k * stride]).collect();
            if interp == Interpolation::Cubic {
                prefilter_cubic(&mut line);
            }
            taps.iter().map(|t| t.eval(&line)).collect()
        })
        .collect();

    let mut out = vec![0.0; out_dims.iter().product()];
    for (line_id, line) in lines.into_iter().enumerate() {
        let (o, inner) = (line_id / stride, line_id % stride);
        let base = o * new_len * out_stride + inner;
        for (k, v) in line.into_iter().enumerate() {
            out[base + k * out_stride] = v;
        }
    }
    out
}

/// Resamples intensities onto `spec.target_spacing` with a separable
/// B-spline (or linear / nearest) interpolant.
pub fn resample_image(vol: &Volume, spec: &ResampleSpec) -> Result<Volume> {
    let interp = spec.validate()?;
    let dims = vol.dims();
    let spacing = vol.spacing();
    let out_dims = output_dims(dims, spacing, spec.target_spacing);

    let mut data: Vec<f64> = vol.data().iter().map(|&v| v as f64).collect();
    let mut cur = dims;
    for axis in 0..3 {
        let step = spec.target_spacing[axis] / spacing[axis];
        let coords: Vec<f64> = (0..out_dims[axis]).map(|i| i as f64 * step).collect();
        data = resample_axis_at(&data, cur, axis, &coords, interp);
        cur[axis] = out_dims[axis];
    }
    let out: Vec<f32> = data.into_iter().map(|v| v as f32).collect();
    Ok(Volume::new(out_dims, spec.target_spacing, out)?.with_geometry(vol.geometry().clone()))
}

/// Resamples class ids by nearest input voxel centre; ties go to the smaller
/// index on each axis.
pub fn resample_label(lbl: &LabelVolume, spec: &ResampleSpec) -> Result<LabelVolume> {
    spec.validate()?;
    let LabelMode::Nearest = spec.label_mode;
    let dims = lbl.dims();
    let spacing = lbl.spacing();
    let out_dims = output_dims(dims, spacing, spec.target_spacing);
    let maps: Vec<Vec<usize>> = (0..3)
        .map(|a| {
            let step = spec.target_spacing[a] / spacing[a];
            (0..out_dims[a])
                .map(|i| bspline::nearest_index(i as f64 * step, dims[a]))
                .collect()
        })
        .collect();
    let src = lbl.data();
    let plane = out_dims[0] * out_dims[1];
    let mut out = vec![0u8; plane * out_dims[2]];
    out.par_chunks_mut(plane).enumerate().for_each(|(z, slab)| {
        let sz = maps[2][z];
        for y in 0..out_dims[1] {
            let sy = maps[1][y];
            for x in 0..out_dims[0] {
                slab[x + out_dims[0] * y] = src[maps[0][x] + dims[0] * (sy + dims[1] * sz)];
            }
        }
    });
    Ok(LabelVolume::new(out_dims, spec.target_spacing, out)?.with_geometry(lbl.geometry().clone()))
}

/// In-plane target size used throughout the pipeline.
pub const XY_TARGET: [usize; 2] = [256, 256];

/// Source/destination ranges for one axis: centred crop when shrinking,
/// centred zero-pad when growing; the odd voxel goes to the high side.
fn crop_pad_ranges(n: usize, target: usize) -> (usize, usize, usize) {
    if n >= target {
        let lo = (n - target) / 2;
        (lo, 0, target)
    } else {
        let pad_lo = (target - n) / 2;
        (0, pad_lo, n)
    }
}

/// Crops or zero-pads the x and y axes to `target`, centred; z is untouched.
pub fn crop_or_pad_xy<G: VoxelGrid>(grid: &G, target: [usize; 2]) -> Result<G> {
    if target.contains(&0) {
        return Err(Error::Parameter(format!("crop/pad target {target:?} must be positive")));
    }
    let dims = grid.dims();
    let (sx, dx, nx) = crop_pad_ranges(dims[0], target[0]);
    let (sy, dy, ny) = crop_pad_ranges(dims[1], target[1]);
    let out_dims = [target[0], target[1], dims[2]];
    let src = grid.voxels();
    let mut out = vec![G::Elem::default(); out_dims.iter().product()];
    for z in 0..dims[2] {
        for y in 0..ny {
            let s = (sx) + dims[0] * ((sy + y) + dims[1] * z);
            let d = dx + out_dims[0] * ((dy + y) + out_dims[1] * z);
            out[d..d + nx].copy_from_slice(&src[s..s + nx]);
        }
    }
    grid.rebuild(out_dims, grid.spacing(), out)
}

/// Z-scores the whole volume with its population mean and standard deviation.
pub fn normalize_3d(vol: &Volume) -> Result<Volume> {
    if vol.len() < 2 {
        return Err(Error::InvalidVolume(
            "normalisation needs at least 2 voxels".into(),
        ));
    }
    let (mean, std) = mean_std(vol.data());
    if std <= 0.0 || !std.is_finite() {
        return Err(Error::ConstantVolume { value: mean });
    }
    let out = vol
        .data()
        .iter()
        .map(|&v| ((v as f64 - mean) / std) as f32)
        .collect();
    vol.with_data(out)
}

/// Full preprocessing chain: resample, crop/pad, then (optionally) normalise.
/// Zeros introduced by padding are part of the normalisation statistics.
pub fn preprocess_image(vol: &Volume, spec: &ResampleSpec, xy: [usize; 2], normalize: bool) -> Result<Volume> {
    let resampled = resample_image(vol, spec)?;
    let cropped = crop_or_pad_xy(&resampled, xy)?;
    if normalize {
        normalize_3d(&cropped)
    } else {
        Ok(cropped)
    }
}

pub fn preprocess_label(lbl: &LabelVolume, spec: &ResampleSpec, xy: [usize; 2]) -> Result<LabelVolume> {
    crop_or_pad_xy(&resample_label(lbl, spec)?, xy)
}
