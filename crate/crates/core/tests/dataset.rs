use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use explore_core::imageio;
use explore_core::sim::dataset::{export_dataset, snapshot_stem, DatasetConfig, SnapshotMeta};

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn config() -> DatasetConfig {
    DatasetConfig {
        seeds: vec![3, 8],
        rollouts_per_map: 1,
        ..DatasetConfig::default()
    }
}

#[test]
fn two_maps_give_eighteen_consistent_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let summary = export_dataset(&config(), dir.path()).unwrap();
    assert_eq!((summary.maps, summary.rollouts), (2, 2));
    assert_eq!(summary.snapshots + 9 * summary.truncated, 18);

    let mut pairs = 0;
    for seed in [3u64, 8] {
        let map = dir.path().join(format!("map_{seed}"));
        assert!(map.join("truth.png").is_file());
        assert!(map.join("layout.json").is_file());
        let rollout = map.join("rollout_0");
        assert!(rollout.join("rollout.json").is_file());
        let mut last_coverage = 0.0;
        for t in (1..=9).map(|i| i as f64 / 10.0) {
            let stem = snapshot_stem(t);
            let image_path = rollout.join(format!("{stem}.png"));
            if !image_path.exists() {
                continue;
            }
            let image = imageio::read_image_and_mask(&image_path, &rollout.join(format!("{stem}_mask.png"))).unwrap();
            assert_eq!((image.width, image.height), (200, 200));
            for (&p, &m) in image.pixels.iter().zip(&image.mask) {
                assert_eq!(m, p == 127, "mask must mark exactly the unknown pixels");
                assert!(p == 0 || p == 127 || p == 255);
            }
            let meta: SnapshotMeta =
                serde_json::from_str(&fs::read_to_string(rollout.join(format!("{stem}_meta.json"))).unwrap()).unwrap();
            assert_eq!(meta.seed, seed);
            assert!(meta.coverage >= t);
            assert!(meta.coverage >= last_coverage);
            last_coverage = meta.coverage;
            let known = image.mask.iter().filter(|&&m| !m).count() as f64 / image.mask.len() as f64;
            assert!((known - meta.coverage).abs() < 1e-9, "{known} vs {}", meta.coverage);
            pairs += 1;
        }
    }
    assert_eq!(pairs, summary.snapshots);
}

#[test]
fn regeneration_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut c = config();
    c.seeds = vec![5];
    c.schedule = vec![0.2, 0.5];
    export_dataset(&c, a.path()).unwrap();
    export_dataset(&c, b.path()).unwrap();
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert!(!fa.is_empty());
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (k, v) in &fa {
        assert!(v == &fb[k], "{} differs", k.display());
    }
}
