//! Boundary extraction and average symmetric surface distance.
//!
//! A boundary voxel is a voxel of the class with at least one 6-neighbour of
//! another class, or lying on the volume border. Points sit at voxel centres
//! (`index * spacing`). Nearest distances come from an exact anisotropic
//! Euclidean distance transform of the opposite boundary.

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;
use crate::volume::{flat_index, unflatten, Dims, LabelVolume, Spacing};

/// Boundary voxels of one class, in physical coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSet {
    pub class_id: u8,
    /// Flat indices of the boundary voxels, ascending.
    pub voxels: Vec<usize>,
    pub points: Vec<[f64; 3]>,
}

/// Boolean boundary mask of a binary mask (face connectivity).
pub fn boundary_mask(mask: &[bool], dims: Dims) -> Vec<bool> {
    let mut out = vec![false; mask.len()];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let i = flat_index(dims, x, y, z);
                if !mask[i] {
                    continue;
                }
                let p = [x, y, z];
                let mut edge = false;
                for a in 0..3 {
                    if p[a] == 0 || p[a] + 1 == dims[a] {
                        edge = true;
                        break;
                    }
                    let mut lo = p;
                    lo[a] -= 1;
                    let mut hi = p;
                    hi[a] += 1;
                    if !mask[flat_index(dims, lo[0], lo[1], lo[2])]
                        || !mask[flat_index(dims, hi[0], hi[1], hi[2])]
                    {
                        edge = true;
                        break;
                    }
                }
                out[i] = edge;
            }
        }
    }
    out
}

pub fn extract_surface(lbl: &LabelVolume, class_id: u8) -> SurfaceSet {
    let dims = lbl.dims();
    let spacing = lbl.spacing();
    let boundary = boundary_mask(&lbl.mask(class_id), dims);
    let voxels: Vec<usize> = boundary
        .iter()
        .enumerate()
        .filter_map(|(i, &b)| b.then_some(i))
        .collect();
    let points = voxels
        .iter()
        .map(|&i| {
            let p = unflatten(dims, i);
            [
                p[0] as f64 * spacing[0],
                p[1] as f64 * spacing[1],
                p[2] as f64 * spacing[2],
            ]
        })
        .collect();
    SurfaceSet {
        class_id,
        voxels,
        points,
    }
}

/// Squared distance transform of one line (Felzenszwalb-Huttenlocher lower
/// envelope), sample positions `k * h`.
fn edt_line(f: &[f64], h: f64, out: &mut [f64], v: &mut [usize], zs: &mut [f64]) {
    let n = f.len();
    let pos = |q: usize| q as f64 * h;
    let mut k = 0usize;
    let mut started = false;
    for q in 0..n {
        if f[q].is_infinite() {
            continue;
        }
        if !started {
            v[0] = q;
            zs[0] = f64::NEG_INFINITY;
            zs[1] = f64::INFINITY;
            started = true;
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + pos(q) * pos(q)) - (f[p] + pos(p) * pos(p))) / (2.0 * (pos(q) - pos(p)));
            if s <= zs[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= zs[k] {
                // k == 0 and the new parabola dominates everywhere
                v[0] = q;
                zs[0] = f64::NEG_INFINITY;
                zs[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            zs[k] = s;
            zs[k + 1] = f64::INFINITY;
            break;
        }
    }
    if !started {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    k = 0;
    for q in 0..n {
        while zs[k + 1] < pos(q) {
            k += 1;
        }
        let d = pos(q) - pos(v[k]);
        out[q] = d * d + f[v[k]];
    }
}

/// Exact squared Euclidean distance (mm^2) from every voxel to the nearest
/// `true` voxel of `sites`. Infinite everywhere when `sites` is empty.
pub fn squared_distance_transform(sites: &[bool], dims: Dims, spacing: Spacing) -> Vec<f64> {
    let mut d: Vec<f64> = sites
        .iter()
        .map(|&s| if s { 0.0 } else { f64::INFINITY })
        .collect();
    let max_n = *dims.iter().max().unwrap_or(&1);
    let mut line = vec![0.0; max_n];
    let mut out = vec![0.0; max_n];
    let mut v = vec![0usize; max_n];
    let mut zs = vec![0.0; max_n + 1];
    for axis in 0..3 {
        let n = dims[axis];
        let stride = match axis {
            0 => 1,
            1 => dims[0],
            _ => dims[0] * dims[1],
        };
        let outer = d.len() / (n * stride);
        for o in 0..outer {
            for inner in 0..stride {
                let base = o * n * stride + inner;
                for k in 0..n {
                    line[k] = d[base + k * stride];
                }
                edt_line(&line[..n], spacing[axis], &mut out[..n], &mut v, &mut zs);
                for k in 0..n {
                    d[base + k * stride] = out[k];
                }
            }
        }
    }
    d
}

/// Average symmetric surface distance in millimetres.
///
/// Fails with [`Error::UndefinedMetric`] when either mask lacks the class.
pub fn assd(pred: &LabelVolume, truth: &LabelVolume, class_id: u8) -> Result<f64> {
    if pred.dims() != truth.dims() {
        return Err(Error::Shape(format!(
            "prediction dims {:?} != reference dims {:?}",
            pred.dims(),
            truth.dims()
        )));
    }
    if pred.spacing() != truth.spacing() {
        return Err(Error::Shape(format!(
            "prediction spacing {:?} != reference spacing {:?}",
            pred.spacing(),
            truth.spacing()
        )));
    }
    let dims = pred.dims();
    let spacing = pred.spacing();
    let bp = boundary_mask(&pred.mask(class_id), dims);
    let bg = boundary_mask(&truth.mask(class_id), dims);
    let np = bp.iter().filter(|&&b| b).count();
    let ng = bg.iter().filter(|&&b| b).count();
    if np == 0 || ng == 0 {
        let side = if np == 0 { "prediction" } else { "reference" };
        return Err(Error::UndefinedMetric(format!(
            "class {class_id} is absent from the {side}"
        )));
    }
    let to_g = squared_distance_transform(&bg, dims, spacing);
    let to_p = squared_distance_transform(&bp, dims, spacing);
    let directed = |from: &[bool], to: &[f64]| {
        let d: Vec<f64> = from.iter().zip(to).filter(|(b, _)| **b).map(|(_, d)| d.sqrt()).collect();
        pairwise_sum(&d)
    };
    // two separate sums keep assd(a, b) == assd(b, a) bit for bit
    Ok((directed(&bp, &to_g) + directed(&bg, &to_p)) / (np + ng) as f64)
}
