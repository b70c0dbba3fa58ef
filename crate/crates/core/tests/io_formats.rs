use std::path::Path;

use proptest::prelude::*;
use serde_json::json;

use cogdpm::denoiser::{Architecture, ModelWeights, TrainConfig};
use cogdpm::io::{sha256_hex, Checkpoint, GridFile};
use cogdpm::schedule::cosine_schedule;

fn grid() -> impl Strategy<Value = GridFile> {
    (1usize..4, 1usize..5, 1usize..3, 1usize..6, 1usize..6).prop_flat_map(|(n, f, c, h, w)| {
        (
            prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), n * f * c * h * w),
            0..f,
            prop::collection::vec(any::<u64>(), n),
        )
            .prop_map(move |(data, ctx, ids)| {
                GridFile::new([n, f, c, h, w], data, 0.5, ctx, ids, json!({"kind": "test"}), json!({"seed": 1})).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grid_files_round_trip_byte_exact(g in grid()) {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.grd"), dir.path().join("b.grd"));
        g.write(&a).unwrap();
        let back = GridFile::read(&a).unwrap();
        prop_assert_eq!(&back, &g);
        back.write(&b).unwrap();
        prop_assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn truncated_grid_files_are_rejected(g in grid(), cut in 1usize..16) {
        let bytes = g.encode();
        let cut = cut.min(bytes.len());
        prop_assert!(GridFile::decode(&bytes[..bytes.len() - cut], Path::new("x")).is_err());
    }
}

#[test]
fn checkpoint_reload_is_exact_and_tamper_evident() {
    let arch = Architecture::desk(2, 2, 1, 4);
    let ck = Checkpoint {
        weights: ModelWeights::init(arch, 9).unwrap(),
        schedule: cosine_schedule(30, 0.008).unwrap(),
        train: TrainConfig::default(),
        step: 12,
    };
    let bytes = ck.encode();
    assert_eq!(Checkpoint::decode(&bytes, Path::new("m")).unwrap(), ck);
    assert_eq!(sha256_hex(&bytes), sha256_hex(&ck.encode()));

    let mut flipped = bytes.clone();
    let last = flipped.len() - 1;
    flipped[last] ^= 1;
    let e = Checkpoint::decode(&flipped, Path::new("m")).unwrap_err();
    assert_eq!(e.exit_code(), 4, "{e}");
}
