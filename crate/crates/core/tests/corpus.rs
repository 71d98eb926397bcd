//! Replays the checked-in fuzz seeds through the parsers.

use std::path::PathBuf;

use gpemu::emulator::Manifest;
use gpemu::simulators::{hill_inputs, read_dataset, read_hill_samples, read_points, write_dataset};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.display().to_string(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out
}

#[test]
fn dataset_seeds() {
    let mut ok = 0;
    for (name, data) in seeds("fuzz_dataset_csv") {
        if let Ok(samples) = read_dataset(&data[..], &name) {
            let mut buf = Vec::new();
            write_dataset(&mut buf, &samples).unwrap();
            assert_eq!(read_dataset(&buf[..], &name).unwrap(), samples);
            ok += 1;
        }
    }
    assert_eq!(ok, 2);
}

#[test]
fn points_seeds() {
    let parsed: Vec<bool> = seeds("fuzz_points_csv")
        .into_iter()
        .map(|(name, data)| read_points(&data[..], &name).is_ok())
        .collect();
    assert_eq!(parsed, [true, false, true]);
}

#[test]
fn hill_seeds() {
    for (name, data) in seeds("fuzz_hill_csv") {
        match read_hill_samples(&data[..], &name) {
            Ok(s) => assert_eq!(hill_inputs(&s, 1.0, 2, 0, 1.0).unwrap().len(), s.len()),
            Err(e) => assert!(name.contains("negative"), "{e}"),
        }
    }
}

#[test]
fn manifest_seeds() {
    for (name, data) in seeds("fuzz_manifest") {
        let r = Manifest::parse(std::str::from_utf8(&data).unwrap());
        assert_eq!(r.is_ok(), !name.contains("bad_format"), "{name}");
    }
}
