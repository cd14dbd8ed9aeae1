use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use frfnet::container::{self, Container, MAGIC};
use frfnet::pca::{fit_basis_from_features, PcaLayout};
use frfnet::signal::{ChannelKind, FrequencyGrid, FrfMatrix};
use frfnet::Error;

fn random_frf(seed: u64, n_bins: usize) -> FrfMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kinds = vec![ChannelKind::Accelerance, ChannelKind::Accelerance, ChannelKind::Strain];
    let values = (0..kinds.len() * n_bins)
        .map(|_| {
            let scale = 10f64.powi(rng.random_range(-200..200));
            Complex64::new(rng.random_range(-1.0..1.0) * scale, rng.random_range(-1.0..1.0) / scale)
        })
        .collect();
    let grid = FrequencyGrid::new(1000.0, n_bins).unwrap();
    FrfMatrix::new(values, grid.frequencies(), kinds, 10).unwrap()
}

fn bits(frf: &FrfMatrix) -> Vec<(u64, u64)> {
    frf.values().iter().map(|v| (v.re.to_bits(), v.im.to_bits())).collect()
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 32,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn frf_round_trip_is_bitwise(seed in any::<u64>(), log_bins in 1u32..8) {
        let frf = random_frf(seed, 1 << log_bins);
        let bytes = container::frf_to_container(&frf).unwrap().to_bytes();
        let back = container::frf_from_container(&Container::from_bytes(&bytes, "mem").unwrap()).unwrap();
        prop_assert_eq!(bits(&back), bits(&frf));
        prop_assert_eq!(back.freq_bins(), frf.freq_bins());
        prop_assert_eq!(back.channel_kinds(), frf.channel_kinds());
        prop_assert_eq!(back.n_averages(), frf.n_averages());
    }
}

#[test]
fn file_layout_starts_with_magic_and_length() {
    let bytes = container::frf_to_container(&random_frf(1, 8)).unwrap().to_bytes();
    assert_eq!(&bytes[..6], b"FRFD1\n");
    assert_eq!(&bytes[..6], MAGIC);
    let len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let header: serde_json::Value = serde_json::from_slice(&bytes[10..10 + len]).unwrap();
    assert_eq!(header["schema"], "frf_matrix");
    assert!(header["content_hash"].as_str().unwrap().len() == 64);
    // 3 channels x 8 bins complex plus 8 frequencies.
    assert_eq!(bytes.len() - 10 - len, 8 * (3 * 8 * 2 + 8));
}

#[test]
fn every_truncation_is_rejected() {
    let bytes = container::frf_to_container(&random_frf(2, 4)).unwrap().to_bytes();
    for cut in 0..bytes.len() {
        match Container::from_bytes(&bytes[..cut], "cut") {
            Err(Error::Corrupt { .. }) => {}
            other => panic!("cut at {cut}: {other:?}"),
        }
    }
}

#[test]
fn flipped_payload_bit_fails_the_hash() {
    let mut bytes = container::frf_to_container(&random_frf(3, 4)).unwrap().to_bytes();
    let last = bytes.len() - 3;
    bytes[last] ^= 0x10;
    let err = Container::from_bytes(&bytes, "flip").unwrap_err();
    assert!(matches!(err, Error::Corrupt { .. }), "{err}");
    assert!(err.to_string().contains("hash"));
}

#[test]
fn trailing_bytes_are_rejected() {
    let mut bytes = container::frf_to_container(&random_frf(4, 4)).unwrap().to_bytes();
    bytes.extend_from_slice(&[0; 8]);
    assert!(matches!(Container::from_bytes(&bytes, "long"), Err(Error::Corrupt { .. })));
}

#[test]
fn schema_is_checked_on_read() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("frf.frfd");
    container::write_frf(&path, &random_frf(5, 4)).unwrap();
    assert!(container::read_basis(&path).is_err());
    assert!(container::read_model(&path).is_err());
    assert!(container::read_frf(&path).is_ok());
}

#[test]
fn basis_round_trip_preserves_id_and_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let samples: Vec<Vec<Vec<f64>>> = (0..12)
        .map(|_| (0..3).map(|_| (0..15).map(|_| rng.random_range(-2.0..2.0)).collect()).collect())
        .collect();
    let basis = fit_basis_from_features(&samples, ChannelKind::Accelerance, 4, PcaLayout::PerChannel).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.frfd");
    container::write_basis(&path, &basis).unwrap();
    let back = container::read_basis(&path).unwrap();
    assert_eq!(back, basis);

    // A tampered basis whose stored id no longer matches its content.
    let mut c = container::basis_to_container(&basis).unwrap();
    c.metadata["basis_id"] = serde_json::Value::String("0".repeat(64));
    assert!(container::basis_from_container(&c).is_err());
}

#[test]
fn writing_twice_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let frf = random_frf(7, 16);
    let (a, b) = (dir.path().join("a.frfd"), dir.path().join("b.frfd"));
    container::write_frf(&a, &frf).unwrap();
    container::write_frf(&b, &frf).unwrap();
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}
