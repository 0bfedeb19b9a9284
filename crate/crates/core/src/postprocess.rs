//! Connected-component labelling and largest-component cleanup of the VS
//! class. Cochlea labels are never touched: both cochleas are expected.

use crate::error::{Error, Result};
use crate::volume::{flat_index, Dims, LabelVolume};
use crate::CLASS_VS;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    /// Face neighbours.
    Six,
    /// Face, edge and corner neighbours.
    TwentySix,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Result<Self> {
        match n {
            6 => Ok(Connectivity::Six),
            26 => Ok(Connectivity::TwentySix),
            _ => Err(Error::Parameter(format!("connectivity {n} not in {{6, 26}}"))),
        }
    }

    /// Neighbour offsets that precede the current voxel in raster order.
    fn backward_offsets(self) -> Vec<[i64; 3]> {
        let mut out = Vec::new();
        for dz in -1..=1i64 {
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let manhattan = dx.abs() + dy.abs() + dz.abs();
                    if manhattan == 0 {
                        continue;
                    }
                    if self == Connectivity::Six && manhattan != 1 {
                        continue;
                    }
                    // strictly before in x-fastest order
                    if (dz, dy, dx) < (0, 0, 0) {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

/// Component labels (0 = background, 1 = largest) and sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    pub labels: Vec<u32>,
    /// `sizes[k]` is the voxel count of label `k + 1`.
    pub sizes: Vec<usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let p = parent[x as usize];
        parent[x as usize] = parent[p as usize];
        x = p;
    }
    x
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        // smaller provisional label becomes root
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi as usize] = lo;
    }
}

/// Two-pass union-find labelling. Labels are ordered by decreasing size;
/// equal sizes are ordered by their smallest flat index.
pub fn connected_components(mask: &[bool], dims: Dims, connectivity: Connectivity) -> Result<Components> {
    if mask.len() != dims.iter().product::<usize>() {
        return Err(Error::Shape(format!(
            "mask holds {} voxels, dims {dims:?}",
            mask.len()
        )));
    }
    let offsets = connectivity.backward_offsets();
    let mut provisional = vec![0u32; mask.len()];
    let mut parent: Vec<u32> = vec![0];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let i = flat_index(dims, x, y, z);
                if !mask[i] {
                    continue;
                }
                let mut current = 0u32;
                for off in &offsets {
                    let (nx, ny, nz) = (x as i64 + off[0], y as i64 + off[1], z as i64 + off[2]);
                    if nx < 0 || ny < 0 || nz < 0 || nx >= dims[0] as i64 || ny >= dims[1] as i64 {
                        continue;
                    }
                    let j = flat_index(dims, nx as usize, ny as usize, nz as usize);
                    let l = provisional[j];
                    if l == 0 {
                        continue;
                    }
                    if current == 0 {
                        current = l;
                    } else {
                        union(&mut parent, current, l);
                    }
                }
                if current == 0 {
                    current = parent.len() as u32;
                    parent.push(current);
                }
                provisional[i] = current;
            }
        }
    }

    // resolve roots; roots are numbered in order of first voxel
    let mut root_of = vec![0u32; parent.len()];
    for l in 1..parent.len() as u32 {
        root_of[l as usize] = find(&mut parent, l);
    }
    let mut comp_of_root = vec![u32::MAX; parent.len()];
    let mut sizes: Vec<usize> = Vec::new();
    let mut first_voxel: Vec<usize> = Vec::new();
    let mut resolved = vec![0u32; mask.len()];
    for (i, &l) in provisional.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let r = root_of[l as usize] as usize;
        if comp_of_root[r] == u32::MAX {
            comp_of_root[r] = sizes.len() as u32;
            sizes.push(0);
            first_voxel.push(i);
        }
        let c = comp_of_root[r];
        sizes[c as usize] += 1;
        resolved[i] = c + 1;
    }

    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(first_voxel[a].cmp(&first_voxel[b])));
    let mut rank = vec![0u32; sizes.len()];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new as u32 + 1;
    }
    let labels = resolved
        .into_iter()
        .map(|l| if l == 0 { 0 } else { rank[l as usize - 1] })
        .collect();
    let sizes = order.iter().map(|&o| sizes[o]).collect();
    Ok(Components { labels, sizes })
}

/// Removes every voxel of `class_id` outside its largest 26-connected
/// component. Other classes are untouched.
pub fn keep_largest_component(pred: &LabelVolume, class_id: u8) -> Result<LabelVolume> {
    let mask = pred.mask(class_id);
    let comps = connected_components(&mask, pred.dims(), Connectivity::TwentySix)?;
    if comps.count() <= 1 {
        return Ok(pred.clone());
    }
    let data = pred
        .data()
        .iter()
        .zip(&comps.labels)
        .map(|(&c, &l)| if c == class_id && l != 1 { 0 } else { c })
        .collect();
    pred.with_data(data)
}

/// The standard cleanup: largest VS component only.
pub fn postprocess_vs(pred: &LabelVolume) -> Result<LabelVolume> {
    keep_largest_component(pred, CLASS_VS)
}
