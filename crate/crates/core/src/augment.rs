//! Tumour-signal reduction and the eight seeded augmentations applied to
//! real target-domain scans before pseudo-labelling.
//!
//! Every augmentation is a pure function of `(volume, spec)`: the spec's
//! seed fully determines the drawn parameters (see [`crate::rng`]). Spatial
//! kinds resample back onto the input grid with zero fill outside it.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::mean_std;
use crate::preprocess::bspline::{extended, nearest_index, prefilter_cubic, Interpolation, Taps};
use crate::preprocess::resample_axis_at;
use crate::rng::{split, CounterRng};
use crate::volume::{flat_index, Dims, LabelVolume, Volume};
use crate::CLASS_VS;

/// Largest in-plane rotation, in degrees.
pub const MAX_ROTATION_DEGREES: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentationKind {
    Rotate,
    Noise,
    Scale,
    Translate,
    Contrast,
    FlipX,
    FlipY,
    FlipZ,
}

impl AugmentationKind {
    pub const ALL: [AugmentationKind; 8] = [
        AugmentationKind::Rotate,
        AugmentationKind::Noise,
        AugmentationKind::Scale,
        AugmentationKind::Translate,
        AugmentationKind::Contrast,
        AugmentationKind::FlipX,
        AugmentationKind::FlipY,
        AugmentationKind::FlipZ,
    ];

    /// Geometric kinds, which must also be applied to labels.
    pub fn is_spatial(self) -> bool {
        !matches!(self, AugmentationKind::Noise | AugmentationKind::Contrast)
    }

    pub fn name(self) -> &'static str {
        match self {
            AugmentationKind::Rotate => "rotate",
            AugmentationKind::Noise => "noise",
            AugmentationKind::Scale => "scale",
            AugmentationKind::Translate => "translate",
            AugmentationKind::Contrast => "contrast",
            AugmentationKind::FlipX => "flip_x",
            AugmentationKind::FlipY => "flip_y",
            AugmentationKind::FlipZ => "flip_z",
        }
    }
}

impl fmt::Display for AugmentationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AugmentationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AugmentationKind::ALL
            .into_iter()
            .find(|k| k.name() == s || k.name().replace('_', "-") == s)
            .ok_or_else(|| Error::Parameter(format!("unknown augmentation kind `{s}`")))
    }
}

/// Kind-specific parameter ranges. Values are drawn uniformly from each range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AugmentationParams {
    Rotate { max_degrees: f64 },
    /// Gaussian sigma as a fraction of the volume's intensity std.
    Noise { sigma_fraction: f64 },
    Scale { min: f64, max: f64 },
    /// Inclusive integer voxel offset range per axis.
    Translate { min: [i64; 3], max: [i64; 3] },
    Contrast { gamma: [f64; 2], gain: [f64; 2] },
    FlipX,
    FlipY,
    FlipZ,
}

impl AugmentationParams {
    pub fn defaults(kind: AugmentationKind) -> Self {
        match kind {
            AugmentationKind::Rotate => AugmentationParams::Rotate {
                max_degrees: MAX_ROTATION_DEGREES,
            },
            AugmentationKind::Noise => AugmentationParams::Noise { sigma_fraction: 0.1 },
            AugmentationKind::Scale => AugmentationParams::Scale { min: 0.9, max: 1.1 },
            AugmentationKind::Translate => AugmentationParams::Translate {
                min: [-10; 3],
                max: [10; 3],
            },
            AugmentationKind::Contrast => AugmentationParams::Contrast {
                gamma: [0.7, 1.5],
                gain: [0.75, 1.25],
            },
            AugmentationKind::FlipX => AugmentationParams::FlipX,
            AugmentationKind::FlipY => AugmentationParams::FlipY,
            AugmentationKind::FlipZ => AugmentationParams::FlipZ,
        }
    }

    pub fn kind(&self) -> AugmentationKind {
        match self {
            AugmentationParams::Rotate { .. } => AugmentationKind::Rotate,
            AugmentationParams::Noise { .. } => AugmentationKind::Noise,
            AugmentationParams::Scale { .. } => AugmentationKind::Scale,
            AugmentationParams::Translate { .. } => AugmentationKind::Translate,
            AugmentationParams::Contrast { .. } => AugmentationKind::Contrast,
            AugmentationParams::FlipX => AugmentationKind::FlipX,
            AugmentationParams::FlipY => AugmentationKind::FlipY,
            AugmentationParams::FlipZ => AugmentationKind::FlipZ,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    #[serde(flatten)]
    pub params: AugmentationParams,
    pub seed: u64,
}

fn ordered(range: [f64; 2], what: &str) -> Result<()> {
    if !(range[0].is_finite() && range[1].is_finite() && range[0] <= range[1]) {
        return Err(Error::Parameter(format!("{what} range {range:?} is not ordered")));
    }
    Ok(())
}

impl AugmentationSpec {
    pub fn new(kind: AugmentationKind, seed: u64) -> Self {
        Self {
            params: AugmentationParams::defaults(kind),
            seed,
        }
    }

    pub fn kind(&self) -> AugmentationKind {
        self.params.kind()
    }

    /// One default spec per kind, seeds split from `seed`.
    pub fn default_set(seed: u64) -> Vec<AugmentationSpec> {
        AugmentationKind::ALL
            .iter()
            .enumerate()
            .map(|(k, &kind)| AugmentationSpec::new(kind, split(seed, k as u64)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        match &self.params {
            AugmentationParams::Rotate { max_degrees } => {
                if !(0.0..=MAX_ROTATION_DEGREES).contains(max_degrees) {
                    return Err(Error::Parameter(format!(
                        "rotation limit {max_degrees} deg must lie in [0, {MAX_ROTATION_DEGREES}]"
                    )));
                }
            }
            AugmentationParams::Noise { sigma_fraction } => {
                if !(sigma_fraction.is_finite() && *sigma_fraction >= 0.0) {
                    return Err(Error::Parameter(format!(
                        "noise sigma fraction {sigma_fraction} must be >= 0"
                    )));
                }
            }
            AugmentationParams::Scale { min, max } => {
                ordered([*min, *max], "scale")?;
                if *min <= 0.0 {
                    return Err(Error::Parameter(format!("scale factor {min} must be > 0")));
                }
            }
            AugmentationParams::Translate { min, max } => {
                if (0..3).any(|a| min[a] > max[a]) {
                    return Err(Error::Parameter(format!(
                        "translation range {min:?}..{max:?} is not ordered"
                    )));
                }
            }
            AugmentationParams::Contrast { gamma, gain } => {
                ordered(*gamma, "gamma")?;
                ordered(*gain, "gain")?;
                if gamma[0] <= 0.0 || gain[0] < 0.0 {
                    return Err(Error::Parameter(
                        "gamma must be > 0 and gain >= 0".into(),
                    ));
                }
            }
            AugmentationParams::FlipX | AugmentationParams::FlipY | AugmentationParams::FlipZ => {}
        }
        Ok(())
    }

    /// Draws the concrete transform from the seed.
    pub fn resolve(&self) -> Result<Transform> {
        self.validate()?;
        let mut rng = CounterRng::new(self.seed);
        Ok(match &self.params {
            AugmentationParams::Rotate { max_degrees } => Transform::Rotate {
                degrees: rng.uniform(-max_degrees, *max_degrees),
            },
            AugmentationParams::Noise { sigma_fraction } => Transform::Noise {
                sigma_fraction: *sigma_fraction,
                seed: split(self.seed, 1),
            },
            AugmentationParams::Scale { min, max } => Transform::Scale {
                factor: rng.uniform(*min, *max),
            },
            AugmentationParams::Translate { min, max } => {
                let mut offset = [0i64; 3];
                for a in 0..3 {
                    offset[a] = rng.uniform_int(min[a], max[a]);
                }
                Transform::Translate { offset }
            }
            AugmentationParams::Contrast { gamma, gain } => Transform::Contrast {
                gamma: rng.uniform(gamma[0], gamma[1]),
                gain: rng.uniform(gain[0], gain[1]),
            },
            AugmentationParams::FlipX => Transform::Flip { axis: 0 },
            AugmentationParams::FlipY => Transform::Flip { axis: 1 },
            AugmentationParams::FlipZ => Transform::Flip { axis: 2 },
        })
    }
}

/// A fully determined augmentation.
#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    /// In-plane rotation about the z axis through the volume centre.
    Rotate { degrees: f64 },
    Noise { sigma_fraction: f64, seed: u64 },
    /// Isotropic scaling about the volume centre.
    Scale { factor: f64 },
    /// Content moves by `offset` voxels.
    Translate { offset: [i64; 3] },
    Contrast { gamma: f64, gain: f64 },
    Flip { axis: usize },
}

impl Transform {
    pub fn is_spatial(&self) -> bool {
        !matches!(self, Transform::Noise { .. } | Transform::Contrast { .. })
    }
}

/// Multiplies the intensity of every VS voxel by `factor`.
pub fn reduce_tumor_signal(vol: &Volume, lbl: &LabelVolume, factor: f64) -> Result<Volume> {
    lbl.check_aligned(vol)?;
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(Error::Parameter(format!("tumour factor {factor} not in (0, 1]")));
    }
    let data = vol
        .data()
        .iter()
        .zip(lbl.data())
        .map(|(&v, &c)| if c == CLASS_VS { (v as f64 * factor) as f32 } else { v })
        .collect();
    vol.with_data(data)
}

fn flip<T: Copy>(data: &[T], dims: Dims, axis: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(data.len());
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let mut p = [x, y, z];
                p[axis] = dims[axis] - 1 - p[axis];
                out.push(data[flat_index(dims, p[0], p[1], p[2])]);
            }
        }
    }
    out
}

fn translate<T: Copy + Default>(data: &[T], dims: Dims, offset: [i64; 3]) -> Vec<T> {
    let mut out = vec![T::default(); data.len()];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let src = [x as i64 - offset[0], y as i64 - offset[1], z as i64 - offset[2]];
                if (0..3).all(|a| src[a] >= 0 && src[a] < dims[a] as i64) {
                    out[flat_index(dims, x, y, z)] =
                        data[flat_index(dims, src[0] as usize, src[1] as usize, src[2] as usize)];
                }
            }
        }
    }
    out
}

/// A continuous source position is on the grid when it falls inside some
/// voxel's extent.
#[inline]
fn on_grid(x: f64, n: usize) -> bool {
    x >= -0.5 && x <= n as f64 - 0.5
}

fn centre(n: usize) -> f64 {
    (n as f64 - 1.0) / 2.0
}

/// Source position of output voxel `(x, y)` under an in-plane rotation,
/// measured in millimetres so anisotropic in-plane spacing stays rigid.
#[inline]
fn rotate_source(x: usize, y: usize, dims: Dims, spacing: [f64; 3], cos: f64, sin: f64) -> (f64, f64) {
    let (cx, cy) = (centre(dims[0]), centre(dims[1]));
    let dx = (x as f64 - cx) * spacing[0];
    let dy = (y as f64 - cy) * spacing[1];
    // inverse rotation maps output back to input
    let sx = cos * dx + sin * dy;
    let sy = -sin * dx + cos * dy;
    (cx + sx / spacing[0], cy + sy / spacing[1])
}

fn scale_coords(n: usize, factor: f64) -> Vec<f64> {
    let c = centre(n);
    (0..n).map(|i| c + (i as f64 - c) / factor).collect()
}

fn rotate_image(vol: &Volume, degrees: f64, interp: Interpolation) -> Vec<f32> {
    let dims = vol.dims();
    let spacing = vol.spacing();
    let (sin, cos) = degrees.to_radians().sin_cos();
    let plane = dims[0] * dims[1];
    let mut out = vec![0f32; vol.len()];
    out.par_chunks_mut(plane).enumerate().for_each(|(z, slab)| {
        let src = &vol.data()[z * plane..(z + 1) * plane];
        let mut coef: Vec<f64> = src.iter().map(|&v| v as f64).collect();
        if interp == Interpolation::Cubic {
            for y in 0..dims[1] {
                prefilter_cubic(&mut coef[y * dims[0]..(y + 1) * dims[0]]);
            }
            let mut col = vec![0.0; dims[1]];
            for x in 0..dims[0] {
                for y in 0..dims[1] {
                    col[y] = coef[x + dims[0] * y];
                }
                prefilter_cubic(&mut col);
                for y in 0..dims[1] {
                    coef[x + dims[0] * y] = col[y];
                }
            }
        }
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let (sx, sy) = rotate_source(x, y, dims, spacing, cos, sin);
                if !(on_grid(sx, dims[0]) && on_grid(sy, dims[1])) {
                    continue;
                }
                let tx = Taps::at(sx, dims[0], interp);
                let ty = Taps::at(sy, dims[1], interp);
                let v = ty.apply(|jy| {
                    extended(jy, dims[1], |ky| {
                        tx.apply(|jx| extended(jx, dims[0], |kx| coef[kx + dims[0] * ky]))
                    })
                });
                slab[x + dims[0] * y] = v as f32;
            }
        }
    });
    out
}

fn scale_image(vol: &Volume, factor: f64, interp: Interpolation) -> Vec<f32> {
    let dims = vol.dims();
    let coords: Vec<Vec<f64>> = (0..3).map(|a| scale_coords(dims[a], factor)).collect();
    let mut data: Vec<f64> = vol.data().iter().map(|&v| v as f64).collect();
    for axis in 0..3 {
        data = resample_axis_at(&data, dims, axis, &coords[axis], interp);
    }
    let inside: Vec<Vec<bool>> = (0..3)
        .map(|a| coords[a].iter().map(|&c| on_grid(c, dims[a])).collect())
        .collect();
    let mut out = Vec::with_capacity(data.len());
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let keep = inside[0][x] && inside[1][y] && inside[2][z];
                out.push(if keep { data[flat_index(dims, x, y, z)] as f32 } else { 0.0 });
            }
        }
    }
    out
}

/// Applies a spatial transform to intensities with the given interpolation.
/// Intensity-only transforms are rejected.
pub fn warp_image(vol: &Volume, transform: &Transform, interp: Interpolation) -> Result<Volume> {
    let data = match *transform {
        Transform::Rotate { degrees } => rotate_image(vol, degrees, interp),
        Transform::Scale { factor } => scale_image(vol, factor, interp),
        Transform::Translate { offset } => translate(vol.data(), vol.dims(), offset),
        Transform::Flip { axis } => flip(vol.data(), vol.dims(), axis),
        Transform::Noise { .. } => return Err(Error::InvalidKind("noise".into())),
        Transform::Contrast { .. } => return Err(Error::InvalidKind("contrast".into())),
    };
    vol.with_data(data)
}

/// Applies a spatial transform to class ids with nearest-neighbour sampling.
pub fn warp_label(lbl: &LabelVolume, transform: &Transform) -> Result<LabelVolume> {
    let dims = lbl.dims();
    let src = lbl.data();
    let data = match *transform {
        Transform::Rotate { degrees } => {
            let (sin, cos) = degrees.to_radians().sin_cos();
            let mut out = vec![0u8; src.len()];
            for z in 0..dims[2] {
                for y in 0..dims[1] {
                    for x in 0..dims[0] {
                        let (sx, sy) = rotate_source(x, y, dims, lbl.spacing(), cos, sin);
                        if on_grid(sx, dims[0]) && on_grid(sy, dims[1]) {
                            let ix = nearest_index(sx, dims[0]);
                            let iy = nearest_index(sy, dims[1]);
                            out[flat_index(dims, x, y, z)] = src[flat_index(dims, ix, iy, z)];
                        }
                    }
                }
            }
            out
        }
        Transform::Scale { factor } => {
            let picks: Vec<Vec<Option<usize>>> = (0..3)
                .map(|a| {
                    scale_coords(dims[a], factor)
                        .into_iter()
                        .map(|c| on_grid(c, dims[a]).then(|| nearest_index(c, dims[a])))
                        .collect()
                })
                .collect();
            let mut out = vec![0u8; src.len()];
            for z in 0..dims[2] {
                for y in 0..dims[1] {
                    for x in 0..dims[0] {
                        if let (Some(ix), Some(iy), Some(iz)) = (picks[0][x], picks[1][y], picks[2][z]) {
                            out[flat_index(dims, x, y, z)] = src[flat_index(dims, ix, iy, iz)];
                        }
                    }
                }
            }
            out
        }
        Transform::Translate { offset } => translate(src, dims, offset),
        Transform::Flip { axis } => flip(src, dims, axis),
        Transform::Noise { .. } => return Err(Error::InvalidKind("noise".into())),
        Transform::Contrast { .. } => return Err(Error::InvalidKind("contrast".into())),
    };
    lbl.with_data(data)
}

/// Applies an already-drawn transform to an intensity volume.
pub fn apply_transform(vol: &Volume, transform: &Transform) -> Result<Volume> {
    match *transform {
        Transform::Noise { sigma_fraction, seed } => {
            let (_, std) = mean_std(vol.data());
            let sigma = sigma_fraction * std;
            let mut rng = CounterRng::new(seed);
            let data = vol
                .data()
                .iter()
                .map(|&v| (v as f64 + sigma * rng.next_gaussian()) as f32)
                .collect();
            vol.with_data(data)
        }
        Transform::Contrast { gamma, gain } => {
            let data = vol
                .data()
                .iter()
                .map(|&v| {
                    let v = v as f64;
                    (gain * v.signum() * v.abs().powf(gamma)) as f32
                })
                .collect();
            vol.with_data(data)
        }
        _ => warp_image(vol, transform, Interpolation::Cubic),
    }
}

/// Draws and applies one augmentation.
pub fn apply_augmentation(vol: &Volume, spec: &AugmentationSpec) -> Result<Volume> {
    apply_transform(vol, &spec.resolve()?)
}

/// Applies the geometric part of `spec` to labels, matching
/// [`apply_augmentation`] with the same seed.
pub fn apply_spatial_to_label(lbl: &LabelVolume, spec: &AugmentationSpec) -> Result<LabelVolume> {
    if !spec.kind().is_spatial() {
        return Err(Error::InvalidKind(spec.kind().to_string()));
    }
    warp_label(lbl, &spec.resolve()?)
}

/// The spec used for image `image_index`: same parameters, seed split by index.
pub fn pair_spec(spec: &AugmentationSpec, image_index: usize) -> AugmentationSpec {
    AugmentationSpec {
        params: spec.params.clone(),
        seed: split(spec.seed, image_index as u64),
    }
}

/// Checks that `specs` holds every kind exactly once and returns them in
/// canonical kind order.
pub fn canonical_specs(specs: &[AugmentationSpec]) -> Result<Vec<AugmentationSpec>> {
    let mut sorted = specs.to_vec();
    sorted.sort_by_key(|s| s.kind());
    let kinds: Vec<AugmentationKind> = sorted.iter().map(|s| s.kind()).collect();
    if kinds != AugmentationKind::ALL {
        return Err(Error::Parameter(format!(
            "expected each of the eight augmentation kinds once, got {kinds:?}"
        )));
    }
    for s in &sorted {
        s.validate()?;
    }
    Ok(sorted)
}

/// Per-image derived specs in output order (images-major, then kind).
pub fn expansion_plan(num_images: usize, specs: &[AugmentationSpec]) -> Result<Vec<(usize, AugmentationSpec)>> {
    let specs = canonical_specs(specs)?;
    Ok((0..num_images)
        .flat_map(|i| specs.iter().map(move |s| (i, pair_spec(s, i))))
        .collect())
}

/// Eight augmented copies of every image; originals are not included.
pub fn expand_dataset(images: &[Volume], specs: &[AugmentationSpec]) -> Result<Vec<Volume>> {
    expansion_plan(images.len(), specs)?
        .into_par_iter()
        .map(|(i, spec)| apply_augmentation(&images[i], &spec))
        .collect()
}
