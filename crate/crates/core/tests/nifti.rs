mod common;

use common::*;
use proptest::prelude::*;
use segkit::volume::*;
use segkit::{Error, LabelVolume, ProbabilityMap, Volume};

const DIM0: usize = 40;
const DATATYPE: usize = 70;
const MAGIC: usize = 344;

fn minimal() -> Vec<u8> {
    let vol = Volume::new([2, 2, 2], [1.0; 3], (0..8).map(|v| v as f32).collect()).unwrap();
    encode_nifti(&vol).unwrap()
}

#[test]
fn minimal_file_layout() {
    let bytes = minimal();
    assert_eq!(bytes.len(), 352 + 8 * 4);
    assert_eq!(&bytes[0..4], &348i32.to_le_bytes());
    assert_eq!(&bytes[MAGIC..MAGIC + 4], b"n+1\0");
    let vol = decode_nifti(&bytes).unwrap().into_volume();
    assert_eq!(vol.dims(), [2, 2, 2]);
    assert_eq!(vol.data(), &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
}

#[test]
fn header_errors() {
    let mut bytes = minimal();
    bytes[MAGIC..MAGIC + 4].copy_from_slice(b"ni1\0");
    assert!(matches!(decode_nifti(&bytes), Err(Error::UnsupportedType(_))));

    let mut bytes = minimal();
    bytes[DIM0..DIM0 + 2].copy_from_slice(&5i16.to_le_bytes());
    assert!(matches!(decode_nifti(&bytes), Err(Error::Dimensionality { expected: 3, found: 5 })));

    let mut bytes = minimal();
    bytes[DATATYPE..DATATYPE + 2].copy_from_slice(&64i16.to_le_bytes());
    assert!(matches!(decode_nifti(&bytes), Err(Error::UnsupportedType(_))));

    let bytes = minimal();
    assert!(decode_nifti(&bytes[..bytes.len() - 3]).is_err());
    assert!(decode_nifti(&bytes[..100]).is_err());

    let mut bytes = minimal();
    bytes[MAGIC..MAGIC + 4].copy_from_slice(b"abcd");
    assert!(matches!(decode_nifti(&bytes), Err(Error::Format { .. })));
}

#[test]
fn missing_file_names_path() {
    let err = read_volume("/nonexistent/dir/x.nii").unwrap_err();
    assert!(err.to_string().contains("/nonexistent/dir/x.nii"));
}

#[test]
fn labels_from_integer_files() {
    let dir = tempfile::tempdir().unwrap();
    let vol = Volume::new([3, 1, 1], [1.0; 3], vec![0.0, 1.0, 2.0]).unwrap();
    let path = dir.path().join("lbl.nii.gz");
    write_nifti_as(&vol, NiftiDatatype::Int16, &path).unwrap();
    let lbl = read_label_volume(&path).unwrap();
    assert_eq!(lbl.data(), &[0, 1, 2]);

    let bad = Volume::new([2, 1, 1], [1.0; 3], vec![0.0, 3.0]).unwrap();
    write_nifti_as(&bad, NiftiDatatype::Uint8, &path).unwrap();
    assert!(read_label_volume(&path).is_err());
}

#[test]
fn uint8_labels_read_as_labels() {
    let lbl = LabelVolume::new([2, 2, 1], [0.5, 0.5, 2.0], vec![0, 1, 2, 1]).unwrap();
    let bytes = encode_nifti(&lbl).unwrap();
    match decode_nifti(&bytes).unwrap() {
        NiftiImage::Label(back) => assert_eq!(back, lbl),
        other => panic!("expected labels, got {other:?}"),
    }
}

#[test]
fn probability_map_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let lbl = LabelVolume::new([2, 2, 2], [1.0; 3], vec![0, 1, 2, 0, 1, 2, 0, 1]).unwrap();
    let map = ProbabilityMap::from_labels(&lbl, 3).unwrap();
    let path = dir.path().join("probs.nii.gz");
    write_probability_map(&map, &path).unwrap();
    assert_eq!(read_probability_map(&path).unwrap(), map);
    // a 4D file is not a volume
    assert!(matches!(read_volume(&path), Err(Error::Dimensionality { .. })));
}

#[test]
fn invalid_probability_map_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.nii");
    write_class_map(2, [2, 1, 1], [1.0; 3], &[0.5, 0.7, 0.6, 0.3], &path).unwrap();
    assert!(read_probability_map(&path).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn float_round_trip(seed in any::<u64>(), gz in any::<bool>()) {
        let mut rng = TestRng::new(seed);
        let d = random_dims(&mut rng, 8);
        let spacing = [rng.range(0.1, 4.0), rng.range(0.1, 4.0), rng.range(0.1, 4.0)];
        let data = (0..count(d)).map(|_| rng.range(-1e4, 1e4) as f32).collect();
        let vol = Volume::new(d, spacing, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(if gz { "v.nii.gz" } else { "v.nii" });
        write_nifti(&vol, &path).unwrap();
        let back = read_volume(&path).unwrap();
        prop_assert_eq!(back.data(), vol.data());
        for a in 0..3 {
            prop_assert_eq!(back.spacing()[a], spacing[a] as f32 as f64);
        }
    }

    #[test]
    fn integer_round_trip(seed in any::<u64>(), which in 0usize..3) {
        let mut rng = TestRng::new(seed);
        let d = random_dims(&mut rng, 8);
        let (dt, lo, hi) = [
            (NiftiDatatype::Uint8, 0.0, 255.0),
            (NiftiDatatype::Int16, -32768.0, 32767.0),
            (NiftiDatatype::Uint16, 0.0, 65535.0),
        ][which];
        let data = (0..count(d)).map(|_| rng.range(lo, hi + 1.0).floor() as f32).collect();
        let vol = Volume::new(d, [1.0; 3], data).unwrap();
        let back = decode_nifti(&encode_nifti_as(&vol, dt).unwrap()).unwrap().into_volume();
        prop_assert_eq!(back.data(), vol.data());
    }
}
