//! Replays the fuzz seed corpora through the same checks the fuzz targets make.

use std::fs;
use std::path::PathBuf;

use orbitfl::config::{parse_config, parse_config_with_overrides};
use orbitfl::fl::idx::{encode_idx_images, encode_idx_labels, parse_idx_images, parse_idx_labels};

fn corpus(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out
}

#[test]
fn idx_image_seeds() {
    let mut parsed = 0;
    for (name, data) in corpus("idx_images") {
        if let Ok(images) = parse_idx_images(&data) {
            parsed += 1;
            assert_eq!(images.pixels.len(), images.count * images.rows * images.cols, "{name}");
            assert_eq!(parse_idx_images(&encode_idx_images(&images)).unwrap(), images, "{name}");
        }
    }
    assert!(parsed >= 1);
}

#[test]
fn idx_label_seeds() {
    for (name, data) in corpus("idx_labels") {
        if let Ok(labels) = parse_idx_labels(&data) {
            assert_eq!(parse_idx_labels(&encode_idx_labels(&labels)).unwrap(), labels, "{name}");
        }
    }
}

#[test]
fn config_seeds() {
    for (name, data) in corpus("config") {
        let Ok(text) = std::str::from_utf8(&data) else { continue };
        if let Ok(cfg) = parse_config(text) {
            if cfg.to_run_config().is_ok() {
                let echo = parse_config(&cfg.to_json()).unwrap();
                assert_eq!(echo.to_json(), cfg.to_json(), "{name}");
            }
        }
    }
}

#[test]
fn override_seeds() {
    let base = r#"{ "constellation": { "num_orbits": 2, "sats_per_orbit": 4 }, "nodes": [{ "id": "a", "latitude_deg": 0, "longitude_deg": 0 }] }"#;
    for (_, data) in corpus("override") {
        let Ok(text) = std::str::from_utf8(&data) else { continue };
        let overrides: Vec<String> = text.lines().map(str::to_string).collect();
        if let Ok(cfg) = parse_config_with_overrides(base, &overrides) {
            let _ = cfg.to_run_config();
        }
    }
}
