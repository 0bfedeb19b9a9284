mod common;

use common::*;
use proptest::prelude::*;
use segkit::losses::*;
use segkit::{Error, LabelVolume, ProbabilityMap};

fn instance(seed: u64, c: usize, d: Dims, eps: f64) -> LossInput {
    let mut rng = TestRng::new(seed);
    let n = count(d);
    let p = random_probabilities(&mut rng, c, n);
    let (_, g) = random_one_hot(&mut rng, c, n);
    LossInput::new(p, g, c, eps).unwrap()
}

#[test]
fn perfect_binary_overlap() {
    let g = vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0];
    let input = LossInput::new(g.clone(), g, 1, 0.0).unwrap();
    assert_eq!(dice_loss(&input).value, -1.0);
}

#[test]
fn empty_class_with_zero_epsilon() {
    // class 1 is absent from both prediction and target
    let p = vec![1.0, 1.0, 0.0, 0.0];
    let g = vec![1.0, 1.0, 0.0, 0.0];
    let input = LossInput::new(p, g, 2, 0.0).unwrap();
    let out = dice_loss(&input);
    assert!(out.value.is_finite());
    assert_eq!(out.value, -(0.5 + 1.0));
    assert_eq!(&out.gradient[2..], &[0.0, 0.0]);
}

#[test]
fn cross_entropy_normalisations() {
    let input = instance(3, 3, [3, 2, 2], 1.0);
    let ce = cross_entropy(&input);
    assert!((ce.mean - ce.raw / 12.0).abs() < 1e-15);
    let oracle = cross_entropy_oracle(input.predictions(), input.targets(), 3, [3, 2, 2]);
    assert!((ce.mean - oracle).abs() < 1e-12);
}

#[test]
fn clamped_predictions_have_zero_gradient() {
    let p = vec![0.0, 1.0];
    let g = vec![1.0, 0.0];
    let input = LossInput::new(p, g, 1, 1.0).unwrap();
    let ce = cross_entropy(&input);
    assert!(ce.raw.is_finite());
    assert!((ce.raw - 2.0 * -(1e-7f64).ln()).abs() < 1e-6);
    assert_eq!(ce.gradient, vec![0.0, 0.0]);
}

#[test]
fn combined_projections() {
    let input = instance(9, 3, [2, 3, 2], 1.0);
    let dice = dice_loss(&input);
    let ce = cross_entropy_loss(&input);
    let only_dice = combined_loss(&input, LossWeights { dice: 1.0, ce: 0.0 }).unwrap();
    let only_ce = combined_loss(&input, LossWeights { dice: 0.0, ce: 1.0 }).unwrap();
    assert_eq!(only_dice, dice);
    assert_eq!(only_ce, ce);
    let both = combined_loss(&input, LossWeights::default()).unwrap();
    assert!((both.value - (dice.value + ce.value)).abs() < 1e-15);
    assert!(combined_loss(&input, LossWeights { dice: -1.0, ce: 1.0 }).is_err());
}

#[test]
fn input_validation() {
    assert!(matches!(LossInput::new(vec![0.5; 4], vec![1.0; 3], 1, 1.0), Err(Error::Shape(_))));
    assert!(matches!(LossInput::new(vec![0.5; 4], vec![0.5; 4], 1, 1.0), Err(Error::Parameter(_))));
    assert!(matches!(LossInput::new(vec![0.5; 4], vec![1.0; 4], 2, 1.0), Err(Error::Parameter(_))));
    assert!(matches!(LossInput::new(vec![0.5; 4], vec![1.0; 4], 1, -0.1), Err(Error::Parameter(_))));
    assert!(LossInput::new(vec![], vec![], 1, 1.0).is_err());
}

#[test]
fn from_maps_matches_manual_one_hot() {
    let labels = LabelVolume::new([2, 2, 1], [1.0; 3], vec![0, 1, 2, 1]).unwrap();
    let map = ProbabilityMap::from_labels(&labels, 3).unwrap();
    let input = LossInput::from_maps(&map, &labels, 0.0).unwrap();
    assert_eq!(dice_loss(&input).value, -1.0);
}

#[test]
fn deep_supervision() {
    let w = deep_supervision_weights(4, false).unwrap();
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    for k in 1..4 {
        assert!((w[k - 1] / w[k] - 2.0).abs() < 1e-12);
    }
    let w = deep_supervision_weights(4, true).unwrap();
    assert_eq!(w[3], 0.0);
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    assert_eq!(deep_supervision_weights(1, true).unwrap(), vec![1.0]);
    assert!(deep_supervision_weights(0, false).is_err());

    let total = deep_supervision_aggregate(&[1.0, 2.0, 4.0], 3, false).unwrap();
    assert!((total - (1.0 + 1.0 + 1.0) / 1.75).abs() < 1e-12);
    assert!(deep_supervision_aggregate(&[1.0], 2, false).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dice_value_is_bounded(seed in any::<u64>(), c in 1usize..5, eps in prop_oneof![Just(0.0), 0.0f64..2.0]) {
        let mut rng = TestRng::new(seed);
        let d = random_dims(&mut rng, 5);
        let n = count(d);
        let p: Vec<f64> = (0..c * n).map(|_| rng.unit()).collect();
        let g = if c == 1 {
            (0..n).map(|_| rng.below(2) as f64).collect()
        } else {
            random_one_hot(&mut rng, c, n).1
        };
        let v = dice_loss(&LossInput::new(p, g, c, eps).unwrap()).value;
        prop_assert!((-2.0..=0.0).contains(&v), "value {}", v);
    }

    #[test]
    fn losses_match_oracles(seed in any::<u64>(), c in 2usize..5) {
        let mut rng = TestRng::new(seed);
        let d = random_dims(&mut rng, 5);
        let input = instance(seed, c, d, 1.0);
        let dice = dice_loss(&input).value;
        let want = dice_loss_oracle(input.predictions(), input.targets(), c, d, 1.0);
        prop_assert!((dice - want).abs() < 1e-10);
        let ce = cross_entropy_loss(&input).value;
        let want = cross_entropy_oracle(input.predictions(), input.targets(), c, d);
        prop_assert!((ce - want).abs() < 1e-10);
    }

    #[test]
    fn voxel_permutation_invariance(seed in any::<u64>()) {
        let d = [3, 3, 3];
        let input = instance(seed, 3, d, 1.0);
        let n = count(d);
        let mut rng = TestRng::new(seed ^ 0xabc);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.below(i + 1));
        }
        let shuffle = |v: &[f64]| -> Vec<f64> {
            (0..3).flat_map(|c| perm.iter().map(move |&i| v[c * n + i])).collect()
        };
        let shuffled = LossInput::new(shuffle(input.predictions()), shuffle(input.targets()), 3, 1.0).unwrap();
        let a = combined_loss(&input, LossWeights::default()).unwrap().value;
        let b = combined_loss(&shuffled, LossWeights::default()).unwrap().value;
        prop_assert!(relative_error(a, b) < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences(seed in any::<u64>(), eps in prop_oneof![Just(0.0), Just(1.0)]) {
        let input = instance(seed, 3, [2, 2, 2], eps);
        let grad = combined_loss(&input, LossWeights::default()).unwrap().gradient;
        let f = |p: &[f64]| combined_loss(&input.with_predictions(p.to_vec()).unwrap(), LossWeights::default()).unwrap().value;
        for j in 0..input.predictions().len() {
            let numeric = central_difference(f, input.predictions(), j, 1e-5);
            prop_assert!(relative_error(grad[j], numeric) < 1e-5, "coordinate {}", j);
        }
    }
}
