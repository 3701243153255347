mod common;

use common::label;
use ensemblekit::dataset::{
    parse_cifar10_batch, to_cifar10_bytes, DatasetError, LabeledImageSet, RgbImage, RECORD_BYTES,
};
use ensemblekit::features::{
    read_fset, read_fset_file, write_fset, write_fset_file, FeatureSet, FsetError,
};
use proptest::prelude::*;

fn fset_strategy() -> impl Strategy<Value = FeatureSet> {
    (0usize..12, 1usize..9, "[a-z+_]{0,12}").prop_flat_map(|(n, d, name)| {
        (
            proptest::collection::vec(-1e6f32..1e6f32, n * d),
            proptest::collection::vec(0u8..10, n),
        )
            .prop_map(move |(values, labels)| {
                let labels = labels.into_iter().map(|l| label(l as usize)).collect();
                FeatureSet::from_rows(name.clone(), d, values, labels).unwrap()
            })
    })
}

proptest! {
    #[test]
    fn fset_round_trip(set in fset_strategy()) {
        let mut bytes = Vec::new();
        let written = write_fset(&set, &mut bytes).unwrap();
        prop_assert_eq!(written, bytes.len() as u64);
        prop_assert_eq!(written, set.encoded_len());
        let back = read_fset(&bytes[..]).unwrap();
        prop_assert_eq!(&back, &set);
        let bits = |s: &FeatureSet| s.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&set));
    }

    #[test]
    fn fset_truncation_is_reported_at_end(set in fset_strategy(), cut in 1usize..64) {
        let mut bytes = Vec::new();
        write_fset(&set, &mut bytes).unwrap();
        let keep = bytes.len().saturating_sub(cut);
        let err = read_fset(&bytes[..keep]).unwrap_err();
        match err {
            FsetError::Truncation { offset } => prop_assert_eq!(offset, keep as u64),
            FsetError::Magic { .. } if keep < 4 => {}
            other => prop_assert!(false, "unexpected {:?}", other),
        }
    }

    #[test]
    fn cifar_batch_round_trip(records in proptest::collection::vec((0u8..10, proptest::collection::vec(any::<u8>(), 3072)), 1..6)) {
        let (labels, images): (Vec<_>, Vec<_>) = records
            .into_iter()
            .map(|(l, px)| (label(l as usize), RgbImage::from_bytes(&px).unwrap()))
            .unzip();
        let set = LabeledImageSet::new(images, labels, "p").unwrap();
        let bytes = to_cifar10_bytes(&set);
        prop_assert_eq!(bytes.len(), set.len() * RECORD_BYTES);
        let back = parse_cifar10_batch(&bytes).unwrap();
        prop_assert_eq!(back.labels(), set.labels());
        prop_assert_eq!(back.images(), set.images());
        prop_assert_eq!(to_cifar10_bytes(&back), bytes);
    }
}

#[test]
fn fset_reference_size() {
    let set = FeatureSet::from_rows("hog", 3, vec![0.0; 6], vec![label(1), label(2)]).unwrap();
    let mut bytes = Vec::new();
    write_fset(&set, &mut bytes).unwrap();
    assert_eq!(bytes.len(), 51);
    assert_eq!(&bytes[..4], b"FSET");
}

#[test]
fn fset_file_rejects_trailing_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.fset");
    let set = FeatureSet::from_rows("x", 2, vec![1.0, 2.0], vec![label(0)]).unwrap();
    write_fset_file(&set, &path).unwrap();
    assert_eq!(read_fset_file(&path).unwrap(), set);
    let mut bytes = std::fs::read(&path).unwrap();
    let len = bytes.len() as u64;
    bytes.push(0);
    std::fs::write(&path, &bytes).unwrap();
    assert!(
        matches!(read_fset_file(&path), Err(FsetError::Trailing { offset, extra: 1 }) if offset == len)
    );
}

#[test]
fn cifar_batch_rejects_partial_records_and_bad_labels() {
    let set = common::random_image_set(1, 3);
    let mut bytes = to_cifar10_bytes(&set);
    assert!(matches!(
        parse_cifar10_batch(&bytes[..bytes.len() - 1]),
        Err(DatasetError::Length { .. })
    ));
    bytes[RECORD_BYTES] = 10;
    assert!(matches!(
        parse_cifar10_batch(&bytes),
        Err(DatasetError::Label {
            record: 1,
            value: 10
        })
    ));
}
