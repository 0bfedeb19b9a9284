//! One-dimensional interpolation kernels used by separable resampling and
//! by the in-plane warps of the augmentation module.
//!
//! Signals are extended past their ends by point reflection about the end
//! samples (`f(-k) = 2 f(0) - f(k)`, likewise at `n - 1`). The extension
//! reproduces constant and linear signals exactly, so the cubic B-spline
//! interpolant of a linear ramp is the ramp itself, including near and just
//! beyond the border. The B-spline coefficients of a point-reflected signal
//! are themselves point-reflected, so the same rule extends coefficients.

/// Pole of the cubic B-spline interpolation filter, `sqrt(3) - 2`.
pub const CUBIC_POLE: f64 = -0.267_949_192_431_122_7;

/// Samples of extension on each side used by the prefilter; `|pole|^32 < 1e-18`.
const PAD: usize = 32;

/// Value of the point-reflected extension of a line at integer position `j`,
/// with `fetch(k)` returning in-range samples.
#[inline]
pub fn extended<F: Fn(usize) -> f64>(j: i64, n: usize, fetch: F) -> f64 {
    if j >= 0 && (j as usize) < n {
        return fetch(j as usize);
    }
    if n == 1 {
        return fetch(0);
    }
    let last = (n - 1) as i64;
    let period = 2 * last;
    let q = j.div_euclid(period);
    let r = j.rem_euclid(period);
    let f0 = fetch(0);
    let fl = fetch(last as usize);
    let base = if r <= last {
        fetch(r as usize)
    } else {
        2.0 * fl - fetch((period - r) as usize)
    };
    base + q as f64 * 2.0 * (fl - f0)
}

/// Converts samples to cubic B-spline coefficients in place, so that the
/// spline evaluated at integer positions reproduces the samples.
pub fn prefilter_cubic(line: &mut [f64]) {
    let n = line.len();
    if n < 2 {
        return;
    }
    let total = n + 2 * PAD;
    let mut c: Vec<f64> = (0..total)
        .map(|i| extended(i as i64 - PAD as i64, n, |k| line[k]))
        .collect();
    let z = CUBIC_POLE;

    // causal pass, truncated geometric initialisation
    let mut init = 0.0;
    let mut zk = 1.0;
    for v in c.iter().take(PAD) {
        init += zk * v;
        zk *= z;
    }
    c[0] = init;
    for i in 1..total {
        c[i] += z * c[i - 1];
    }

    // anti-causal pass
    c[total - 1] = (z / (z * z - 1.0)) * (c[total - 1] + z * c[total - 2]);
    for i in (0..total - 1).rev() {
        c[i] = z * (c[i + 1] - c[i]);
    }

    for (dst, src) in line.iter_mut().zip(&c[PAD..PAD + n]) {
        *dst = 6.0 * src;
    }
}

/// Cubic B-spline weights for the four taps at `floor(x) - 1 ..= floor(x) + 2`.
#[inline]
pub fn cubic_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    let u = 1.0 - t;
    [
        u * u * u / 6.0,
        (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
        (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
        t3 / 6.0,
    ]
}

/// Interpolation degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    Nearest,
    Linear,
    Cubic,
}

impl Interpolation {
    pub fn from_order(order: u8) -> Option<Self> {
        match order {
            0 => Some(Interpolation::Nearest),
            1 => Some(Interpolation::Linear),
            3 => Some(Interpolation::Cubic),
            _ => None,
        }
    }

    pub fn order(self) -> u8 {
        match self {
            Interpolation::Nearest => 0,
            Interpolation::Linear => 1,
            Interpolation::Cubic => 3,
        }
    }
}

/// Nearest sample index for a continuous position; exact half-way ties go
/// to the smaller index. Clamped to the line.
#[inline]
pub fn nearest_index(x: f64, n: usize) -> usize {
    let lo = x.floor();
    let idx = if x - lo > 0.5 { lo + 1.0 } else { lo };
    idx.clamp(0.0, (n - 1) as f64) as usize
}

/// Taps `(position, weight)` for evaluating a line at `x`.
/// For cubic interpolation the line must already hold coefficients.
#[derive(Debug, Clone, Copy)]
pub struct Taps {
    pub start: i64,
    pub weights: [f64; 4],
    pub len: usize,
}

impl Taps {
    pub fn at(x: f64, n: usize, interp: Interpolation) -> Self {
        match interp {
            Interpolation::Nearest => Taps {
                start: nearest_index(x, n) as i64,
                weights: [1.0, 0.0, 0.0, 0.0],
                len: 1,
            },
            Interpolation::Linear => {
                let i0 = x.floor();
                let t = x - i0;
                Taps {
                    start: i0 as i64,
                    weights: [1.0 - t, t, 0.0, 0.0],
                    len: 2,
                }
            }
            Interpolation::Cubic => {
                let i0 = x.floor();
                Taps {
                    start: i0 as i64 - 1,
                    weights: cubic_weights(x - i0),
                    len: 4,
                }
            }
        }
    }

    #[inline]
    pub fn apply<F: Fn(i64) -> f64>(&self, fetch: F) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.len {
            let w = self.weights[k];
            if w != 0.0 {
                acc += w * fetch(self.start + k as i64);
            }
        }
        acc
    }

    /// Evaluates a line (samples or coefficients) with point-reflected ends.
    #[inline]
    pub fn eval(&self, line: &[f64]) -> f64 {
        let n = line.len();
        self.apply(|j| extended(j, n, |k| line[k]))
    }
}
