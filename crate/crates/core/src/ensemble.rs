//! Voxelwise averaging of probability maps and the final argmax.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::volume::{LabelVolume, ProbabilityMap, MAX_CLASS};

/// Weighted arithmetic mean of class probabilities, renormalised per voxel.
/// `weights` defaults to uniform.
pub fn ensemble_probs(maps: &[ProbabilityMap], weights: Option<&[f64]>) -> Result<ProbabilityMap> {
    let first = maps
        .first()
        .ok_or_else(|| Error::Parameter("ensemble needs at least one map".into()))?;
    for (k, m) in maps.iter().enumerate().skip(1) {
        if m.num_classes() != first.num_classes() || m.dims() != first.dims() {
            return Err(Error::Shape(format!(
                "map {k} has {} classes over {:?}, map 0 has {} over {:?}",
                m.num_classes(),
                m.dims(),
                first.num_classes(),
                first.dims()
            )));
        }
    }
    let weights: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != maps.len() {
                return Err(Error::Shape(format!("{} weights for {} maps", w.len(), maps.len())));
            }
            w.to_vec()
        }
        None => vec![1.0; maps.len()],
    };
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Parameter(format!(
            "ensemble weights {weights:?} must be >= 0 with a positive sum"
        )));
    }
    let total: f64 = weights.iter().sum();
    let c = first.num_classes();
    let n = first.voxels();

    let mut data = vec![0f32; c * n];
    let per_voxel: Vec<Vec<f32>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut v: Vec<f64> = (0..c)
                .map(|k| {
                    maps.iter()
                        .zip(&weights)
                        .map(|(m, w)| w * m.prob(k, i) as f64)
                        .sum::<f64>()
                        / total
                })
                .collect();
            let s: f64 = v.iter().sum();
            if s > 0.0 {
                v.iter_mut().for_each(|x| *x /= s);
            }
            v.into_iter().map(|x| x as f32).collect()
        })
        .collect();
    for (i, v) in per_voxel.into_iter().enumerate() {
        for (k, p) in v.into_iter().enumerate() {
            data[k * n + i] = p;
        }
    }
    ProbabilityMap::new(c, first.dims(), first.spacing(), data)
}

/// Most probable class per voxel; exact ties go to the smaller class id.
pub fn argmax_labels(map: &ProbabilityMap) -> Result<LabelVolume> {
    if map.num_classes() > MAX_CLASS as usize + 1 {
        return Err(Error::Parameter(format!(
            "{} classes do not fit the {{0, 1, 2}} label set",
            map.num_classes()
        )));
    }
    let n = map.voxels();
    let data = (0..n)
        .map(|i| {
            let mut best = 0usize;
            let mut best_p = map.prob(0, i);
            for c in 1..map.num_classes() {
                let p = map.prob(c, i);
                if p > best_p {
                    best = c;
                    best_p = p;
                }
            }
            best as u8
        })
        .collect();
    LabelVolume::new(map.dims(), map.spacing(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map2(p: &[f32]) -> ProbabilityMap {
        // p holds class-1 probabilities
        let mut data: Vec<f32> = p.iter().map(|v| 1.0 - v).collect();
        data.extend_from_slice(p);
        ProbabilityMap::new(2, [p.len(), 1, 1], [1.0; 3], data).unwrap()
    }

    #[test]
    fn mean_of_two() {
        let a = map2(&[0.8]);
        let b = map2(&[0.4]);
        let e = ensemble_probs(&[a.clone(), b.clone()], None).unwrap();
        assert!((e.prob(0, 0) - 0.4).abs() < 1e-6);
        assert!((e.prob(1, 0) - 0.6).abs() < 1e-6);
        assert_eq!(ensemble_probs(&[a.clone(), a.clone()], None).unwrap(), a);
        assert_eq!(ensemble_probs(&[a.clone(), b], Some(&[1.0, 0.0])).unwrap(), a);
    }

    #[test]
    fn bad_inputs() {
        let a = map2(&[0.8]);
        let b = map2(&[0.8, 0.1]);
        assert!(matches!(ensemble_probs(&[a.clone(), b], None), Err(Error::Shape(_))));
        assert!(ensemble_probs(std::slice::from_ref(&a), Some(&[0.0])).is_err());
        assert!(ensemble_probs(std::slice::from_ref(&a), Some(&[-1.0])).is_err());
        assert!(ensemble_probs(&[], None).is_err());
    }

    #[test]
    fn argmax_ties_to_background() {
        let third = 1.0 / 3.0;
        let m = ProbabilityMap::new(3, [2, 1, 1], [1.0; 3], vec![third, 0.1, third, 0.2, third, 0.7]).unwrap();
        assert_eq!(argmax_labels(&m).unwrap().data(), &[0, 2]);
    }

    #[test]
    fn argmax_of_one_hot() {
        let l = LabelVolume::new([4, 1, 1], [1.0; 3], vec![0, 2, 1, 2]).unwrap();
        let m = ProbabilityMap::from_labels(&l, 3).unwrap();
        assert_eq!(argmax_labels(&m).unwrap(), l);
    }
}
