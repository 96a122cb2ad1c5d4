use heliogen::error::{Error, FormatError, Section};
use heliogen::format::*;
use heliogen_core::codec::{Dataset, DatasetRecord, DepthMap, Split};
use heliogen_core::nn::VaeModel;
use heliogen_core::seeded_rng;
use proptest::prelude::*;

fn record(bc_id: u32, v: f32, split: Split) -> DatasetRecord {
    DatasetRecord {
        bc_id,
        heightmap: [v * 10.0; 25],
        depth: DepthMap::new(vec![v; 256]).unwrap(),
        avg_radiation: 300.0 + v,
        volume: 100.0 * v,
        split,
    }
}

fn sample_dataset() -> Dataset {
    let mut ds = Dataset::new(32.0);
    for i in 0..6 {
        let split = if i < 4 { Split::Train } else { Split::Test };
        ds.records.push(record(i * 7, i as f32 / 6.0, split));
    }
    ds
}

fn checkpoint() -> Checkpoint {
    Checkpoint {
        meta: CheckpointMeta {
            epoch: 12,
            seed: 99,
            config_hash: 0xDEAD_BEEF,
            train_loss: 1.5,
            val_loss: 2.25,
        },
        model: VaeModel::init(&mut seeded_rng(3, 0)),
    }
}

#[test]
fn dataset_round_trip_is_exact() {
    let ds = sample_dataset();
    let bytes = encode_dataset(&ds);
    assert_eq!(bytes.len(), 20 + 6 * 1137 + 4);
    assert_eq!(&bytes[..4], b"PDGD");
    assert_eq!(decode_dataset(&bytes).unwrap(), ds);
    assert_eq!(encode_dataset(&decode_dataset(&bytes).unwrap()), bytes);
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let ck = checkpoint();
    let bytes = encode_checkpoint(&ck);
    assert_eq!(&bytes[..4], b"PDGM");
    let (back, crc) = decode_checkpoint(&bytes).unwrap();
    assert_eq!(back, ck);
    assert_eq!(crc, crc32fast::hash(&bytes[..bytes.len() - 4]));
    assert_eq!(encode_checkpoint(&back), bytes);
}

#[test]
fn dataset_corruption_is_classified() {
    let bytes = encode_dataset(&sample_dataset());

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode_dataset(&bad), Err(FormatError::BadMagic { .. })));

    let mut bad = bytes.clone();
    bad[4] = 9;
    assert!(matches!(
        decode_dataset(&bad),
        Err(FormatError::VersionMismatch { expected: 1, found: 9 })
    ));

    // Cut inside the third record.
    let cut = 20 + 2 * 1137 + 100;
    assert!(matches!(
        decode_dataset(&bytes[..cut]),
        Err(FormatError::Truncated(Section::Record(2)))
    ));
    assert!(matches!(
        decode_dataset(&bytes[..bytes.len() - 2]),
        Err(FormatError::Truncated(Section::Checksum))
    ));

    let mut bad = bytes.clone();
    bad[20 + 50] ^= 0x40;
    assert!(matches!(
        decode_dataset(&bad),
        Err(FormatError::ChecksumMismatch { .. })
    ));
}

#[test]
fn checkpoint_corruption_is_classified() {
    let bytes = encode_checkpoint(&checkpoint());

    let mut bad = bytes.clone();
    bad[3] = b'D';
    assert!(matches!(decode_checkpoint(&bad), Err(FormatError::BadMagic { .. })));

    let mut bad = bytes.clone();
    bad[4] = 2;
    assert!(matches!(decode_checkpoint(&bad), Err(FormatError::VersionMismatch { .. })));

    assert!(matches!(
        decode_checkpoint(&bytes[..bytes.len() - 1000]),
        Err(FormatError::Truncated(Section::Tensor(_)))
    ));

    let mut bad = bytes.clone();
    let n = bad.len();
    bad[n - 10] ^= 1;
    assert!(matches!(
        decode_checkpoint(&bad),
        Err(FormatError::ChecksumMismatch { .. })
    ));
}

#[test]
fn file_errors_carry_the_path_and_exit_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.pdgd");
    match read_dataset(&missing) {
        Err(e @ Error::Io { .. }) => {
            assert!(e.to_string().contains("nope.pdgd"));
            assert_eq!(e.exit_code(), 3);
        }
        other => panic!("expected an io error, got {other:?}"),
    }

    let p = dir.path().join("sub/dir/m.pdgm");
    write_checkpoint(&checkpoint(), &p).unwrap();
    let mut bytes = std::fs::read(&p).unwrap();
    bytes[0] = 0;
    std::fs::write(&p, &bytes).unwrap();
    let e = read_checkpoint(&p).unwrap_err();
    assert!(matches!(e, Error::Format { .. }));
    assert!(e.to_string().contains("m.pdgm"));
    assert_eq!(e.exit_code(), 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_datasets_round_trip(
        recs in prop::collection::vec((0u32..342, 0.0f32..=1.0, any::<bool>()), 0..12)
    ) {
        let mut ds = Dataset::new(32.0);
        for (bc, v, train) in recs {
            ds.records.push(record(bc, v, if train { Split::Train } else { Split::Test }));
        }
        let bytes = encode_dataset(&ds);
        prop_assert_eq!(decode_dataset(&bytes).unwrap(), ds);
    }

    #[test]
    fn any_single_bit_flip_is_detected(pos in 0usize..(20 + 2 * 1137), bit in 0u8..8) {
        let mut ds = Dataset::new(32.0);
        ds.records.push(record(3, 0.5, Split::Train));
        ds.records.push(record(9, 0.25, Split::Test));
        let mut bytes = encode_dataset(&ds);
        bytes[pos] ^= 1 << bit;
        prop_assert!(decode_dataset(&bytes).is_err());
    }
}
