//! Independent reference implementations and input generators shared by the
//! integration and acceptance tests. Everything here is written as plainly as
//! possible: nested coordinate loops, brute-force searches, explicit queues.

#![allow(dead_code)]

use std::collections::VecDeque;

pub type Dims = [usize; 3];

/// xorshift64* so test inputs do not depend on the library's generator.
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self(seed.wrapping_mul(0x2545_F491_4F6C_DD1D) | 1)
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.0 = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.unit() < p
    }
}

pub fn idx(d: Dims, x: usize, y: usize, z: usize) -> usize {
    x + d[0] * (y + d[1] * z)
}

pub fn count(d: Dims) -> usize {
    d[0] * d[1] * d[2]
}

/// Per-voxel probability vectors over `c` classes, entries in roughly
/// [0.09, 0.71] for c = 3: far from the log clamp and finite-difference safe.
pub fn random_probabilities(rng: &mut TestRng, c: usize, n: usize) -> Vec<f64> {
    let mut p = vec![0.0; c * n];
    for i in 0..n {
        let w: Vec<f64> = (0..c).map(|_| rng.range(0.2, 1.0)).collect();
        let s: f64 = w.iter().sum();
        for k in 0..c {
            p[k * n + i] = w[k] / s;
        }
    }
    p
}

/// One-hot targets from random labels.
pub fn random_one_hot(rng: &mut TestRng, c: usize, n: usize) -> (Vec<u8>, Vec<f64>) {
    let labels: Vec<u8> = (0..n).map(|_| rng.below(c) as u8).collect();
    let mut g = vec![0.0; c * n];
    for (i, &l) in labels.iter().enumerate() {
        g[l as usize * n + i] = 1.0;
    }
    (labels, g)
}

/// Dice loss written straight from the formula, one class at a time.
pub fn dice_loss_oracle(p: &[f64], g: &[f64], c: usize, d: Dims, eps: f64) -> f64 {
    let n = count(d);
    let mut total = 0.0;
    for k in 0..c {
        let (mut inter, mut sp, mut sg) = (0.0, 0.0, 0.0);
        for z in 0..d[2] {
            for y in 0..d[1] {
                for x in 0..d[0] {
                    let j = k * n + idx(d, x, y, z);
                    inter += p[j] * g[j];
                    sp += p[j];
                    sg += g[j];
                }
            }
        }
        let den = sp + sg + eps;
        total += if den == 0.0 { 1.0 } else { (inter + eps) / den };
    }
    -2.0 / c as f64 * total
}

/// Voxel-mean binary cross-entropy summed over classes.
pub fn cross_entropy_oracle(p: &[f64], g: &[f64], c: usize, d: Dims) -> f64 {
    let n = count(d);
    let mut total = 0.0;
    for k in 0..c {
        for z in 0..d[2] {
            for y in 0..d[1] {
                for x in 0..d[0] {
                    let j = k * n + idx(d, x, y, z);
                    let q = p[j].clamp(1e-7, 1.0 - 1e-7);
                    total -= g[j] * q.ln() + (1.0 - g[j]) * (1.0 - q).ln();
                }
            }
        }
    }
    total / n as f64
}

/// Central difference of `f` along coordinate `j`.
pub fn central_difference<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], j: usize, h: f64) -> f64 {
    let mut up = x.to_vec();
    up[j] += h;
    let mut down = x.to_vec();
    down[j] -= h;
    (f(&up) - f(&down)) / (2.0 * h)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Voxels of `mask` with a face neighbour outside the mask or the grid.
pub fn surface_points(mask: &[bool], d: Dims) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for z in 0..d[2] {
        for y in 0..d[1] {
            for x in 0..d[0] {
                if !mask[idx(d, x, y, z)] {
                    continue;
                }
                let p = [x as i64, y as i64, z as i64];
                let offsets = [
                    [-1, 0, 0],
                    [1, 0, 0],
                    [0, -1, 0],
                    [0, 1, 0],
                    [0, 0, -1],
                    [0, 0, 1],
                ];
                let exposed = offsets.iter().any(|o| {
                    let q = [p[0] + o[0], p[1] + o[1], p[2] + o[2]];
                    let inside = (0..3).all(|a| q[a] >= 0 && (q[a] as usize) < d[a]);
                    !inside || !mask[idx(d, q[0] as usize, q[1] as usize, q[2] as usize)]
                });
                if exposed {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

/// All-pairs average symmetric surface distance.
pub fn assd_oracle(a: &[bool], b: &[bool], d: Dims, spacing: [f64; 3]) -> f64 {
    let sa = surface_points(a, d);
    let sb = surface_points(b, d);
    let dist = |p: &[usize; 3], q: &[usize; 3]| {
        (0..3)
            .map(|k| ((p[k] as f64 - q[k] as f64) * spacing[k]).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let nearest = |p: &[usize; 3], set: &[[usize; 3]]| {
        set.iter().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min)
    };
    let total: f64 = sa.iter().map(|p| nearest(p, &sb)).sum::<f64>()
        + sb.iter().map(|p| nearest(p, &sa)).sum::<f64>();
    total / (sa.len() + sb.len()) as f64
}

/// Neighbour offsets for 6- or 26-connectivity.
pub fn neighbour_offsets(connectivity: u32) -> Vec<[i64; 3]> {
    let mut out = Vec::new();
    for dz in -1..=1i64 {
        for dy in -1..=1i64 {
            for dx in -1..=1i64 {
                let manhattan = dx.abs() + dy.abs() + dz.abs();
                if manhattan == 0 {
                    continue;
                }
                if connectivity == 6 && manhattan != 1 {
                    continue;
                }
                out.push([dx, dy, dz]);
            }
        }
    }
    out
}

/// Breadth-first flood fill. Returns per-voxel labels (0 = background)
/// ordered by decreasing size, ties by smallest contained flat index, and
/// the component sizes in label order.
pub fn flood_fill_oracle(mask: &[bool], d: Dims, connectivity: u32) -> (Vec<u32>, Vec<usize>) {
    let offsets = neighbour_offsets(connectivity);
    let mut comp = vec![usize::MAX; mask.len()];
    // (size, first index) per component in discovery order
    let mut found: Vec<(usize, usize)> = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || comp[start] != usize::MAX {
            continue;
        }
        let id = found.len();
        comp[start] = id;
        let mut size = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            size += 1;
            let (x, y, z) = (v % d[0], (v / d[0]) % d[1], v / (d[0] * d[1]));
            for o in &offsets {
                let q = [x as i64 + o[0], y as i64 + o[1], z as i64 + o[2]];
                if (0..3).any(|a| q[a] < 0 || q[a] as usize >= d[a]) {
                    continue;
                }
                let w = idx(d, q[0] as usize, q[1] as usize, q[2] as usize);
                if mask[w] && comp[w] == usize::MAX {
                    comp[w] = id;
                    queue.push_back(w);
                }
            }
        }
        // scanning in flat order means `start` is the smallest index
        found.push((size, start));
    }
    let mut order: Vec<usize> = (0..found.len()).collect();
    order.sort_by(|&a, &b| found[b].0.cmp(&found[a].0).then(found[a].1.cmp(&found[b].1)));
    let mut rank = vec![0u32; found.len()];
    for (r, &o) in order.iter().enumerate() {
        rank[o] = r as u32 + 1;
    }
    let labels = comp
        .iter()
        .map(|&c| if c == usize::MAX { 0 } else { rank[c] })
        .collect();
    let sizes = order.iter().map(|&o| found[o].0).collect();
    (labels, sizes)
}

/// Largest 26-connected region of `class_id` kept, the rest of that class
/// set to background.
pub fn keep_largest_oracle(labels: &[u8], d: Dims, class_id: u8) -> Vec<u8> {
    let mask: Vec<bool> = labels.iter().map(|&l| l == class_id).collect();
    let (comp, _) = flood_fill_oracle(&mask, d, 26);
    labels
        .iter()
        .zip(&comp)
        .map(|(&l, &c)| if l == class_id && c > 1 { 0 } else { l })
        .collect()
}

/// Independent voxels at a density drawn from `[lo, hi)`.
pub fn random_mask(rng: &mut TestRng, d: Dims, lo: f64, hi: f64) -> Vec<bool> {
    let p = rng.range(lo, hi);
    (0..count(d)).map(|_| rng.chance(p)).collect()
}

pub fn random_dims(rng: &mut TestRng, max: usize) -> Dims {
    [1 + rng.below(max), 1 + rng.below(max), 1 + rng.below(max)]
}
