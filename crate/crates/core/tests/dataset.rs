use probshape::data::{generate, is_simple_polygon, ShapeDataset, SynthConfig, MANIFEST_FILE};
use probshape::Error;

fn small(seed: u64) -> ShapeDataset {
    generate(&SynthConfig {
        count: 20,
        ..SynthConfig::with_seed(seed)
    })
    .unwrap()
}

#[test]
fn save_load_round_trip_is_exact() {
    let ds = small(1);
    let dir = tempfile::tempdir().unwrap();
    ds.save(dir.path()).unwrap();
    let back = ShapeDataset::load(dir.path()).unwrap();
    assert_eq!(back, ds);
    for split in ["train", "val", "test"] {
        assert_eq!(back.split_hash(split).unwrap(), ds.split_hash(split).unwrap());
    }
}

#[test]
fn truncated_contour_file_names_path_and_line() {
    let ds = small(2);
    let dir = tempfile::tempdir().unwrap();
    ds.save(dir.path()).unwrap();
    let id = &ds.items[3].id;
    let path = dir.path().join(format!("contour_{id}.csv"));
    let text = std::fs::read_to_string(&path).unwrap();
    // cut the file in the middle of line 5
    let cut: usize = text.lines().take(4).map(|l| l.len() + 1).sum::<usize>() + 6;
    std::fs::write(&path, &text[..cut]).unwrap();
    match ShapeDataset::load(dir.path()) {
        Err(Error::Parse { path: p, line, .. }) => {
            assert!(p.ends_with(&format!("contour_{id}.csv")));
            assert_eq!(line, 5);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn truncated_image_is_rejected() {
    let ds = small(3);
    let dir = tempfile::tempdir().unwrap();
    ds.save(dir.path()).unwrap();
    let path = dir.path().join(format!("img_{}.pgm", ds.items[0].id));
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
    assert!(matches!(ShapeDataset::load(dir.path()), Err(Error::Parse { .. })));
}

#[test]
fn mixed_vertex_counts_are_rejected() {
    let ds = small(4);
    let dir = tempfile::tempdir().unwrap();
    ds.save(dir.path()).unwrap();
    let id = ds.items[1].id.clone();
    let path = dir.path().join(format!("contour_{id}.csv"));
    let text = std::fs::read_to_string(&path).unwrap();
    let fewer: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
    std::fs::write(&path, fewer).unwrap();
    match ShapeDataset::load(dir.path()) {
        Err(Error::MixedVertexCount { id: bad, expected, actual }) => {
            assert_eq!(bad, id);
            assert_eq!((expected, actual), (50, 49));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn corrupt_manifest_is_a_parse_error() {
    let ds = small(5);
    let dir = tempfile::tempdir().unwrap();
    ds.save(dir.path()).unwrap();
    std::fs::write(dir.path().join(MANIFEST_FILE), "{\n  \"height\": 60,\n  \"oops\"").unwrap();
    assert!(matches!(
        ShapeDataset::load(dir.path()),
        Err(Error::Parse { line: 3, .. })
    ));
}

#[test]
fn generator_contract() {
    let ds = generate(&SynthConfig {
        count: 60,
        ..SynthConfig::with_seed(6)
    })
    .unwrap();
    assert_eq!(ds.items.len(), 60);
    assert_eq!(ds.split("train").unwrap().len(), 42);
    assert_eq!(ds.split("val").unwrap().len(), 9);
    assert_eq!(ds.split("test").unwrap().len(), 9);
    for it in &ds.items {
        assert_eq!(it.contour.len(), 100);
        assert!(is_simple_polygon(&it.contour));
        assert!(it
            .contour
            .iter()
            .all(|&c| (1.0..=59.0).contains(&c)));
        // ring wall is brighter than background around it
        let mean = it.pixels.iter().map(|&p| p as f64).sum::<f64>() / it.pixels.len() as f64;
        assert!(mean > 60.0 && mean < 190.0);
    }
    let hashes: Vec<_> = ["train", "val", "test"]
        .iter()
        .map(|s| ds.split_hash(s).unwrap())
        .collect();
    assert_ne!(hashes[0], hashes[1]);
    assert_ne!(hashes[0], hashes[2]);
    assert_ne!(hashes[1], hashes[2]);
}

#[test]
fn different_seeds_give_different_data() {
    assert_ne!(small(7).items[0].pixels, small(8).items[0].pixels);
    assert_eq!(small(7), small(7));
}
