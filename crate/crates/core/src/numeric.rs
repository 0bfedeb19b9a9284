//! Deterministic reductions.
//!
//! All reductions that feed reported values go through [`pairwise_sum`], so
//! results depend only on the element order and never on thread count.

const BLOCK: usize = 32;

/// Pairwise (cascade) summation with a fixed split rule: halves at `len / 2`,
/// sequential below 32 elements.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    pairwise_sum_by(values.len(), &|i| values[i])
}

/// Pairwise sum of `term(i)` for `i in 0..len`.
pub fn pairwise_sum_by<F: Fn(usize) -> f64>(len: usize, term: &F) -> f64 {
    fn rec<F: Fn(usize) -> f64>(lo: usize, hi: usize, term: &F) -> f64 {
        let n = hi - lo;
        if n <= BLOCK {
            let mut acc = 0.0;
            for i in lo..hi {
                acc += term(i);
            }
            acc
        } else {
            let mid = lo + n / 2;
            rec(lo, mid, term) + rec(mid, hi, term)
        }
    }
    rec(0, len, term)
}

/// Population mean and standard deviation (divisor N) of f32 samples,
/// computed in f64 with pairwise summation.
pub fn mean_std(values: &[f32]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = pairwise_sum_by(values.len(), &|i| values[i] as f64) / n;
    let var = pairwise_sum_by(values.len(), &|i| {
        let d = values[i] as f64 - mean;
        d * d
    }) / n;
    (mean, var.sqrt())
}
