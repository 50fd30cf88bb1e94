#![no_main]
use libfuzzer_sys::fuzz_target;
use orbitfl::config::parse_config_with_overrides;

const BASE: &str = r#"{ "constellation": { "num_orbits": 2, "sats_per_orbit": 4 }, "nodes": [{ "id": "a", "latitude_deg": 0, "longitude_deg": 0 }] }"#;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let overrides: Vec<String> = text.lines().map(str::to_string).collect();
    if let Ok(cfg) = parse_config_with_overrides(BASE, &overrides) {
        let _ = cfg.to_run_config();
    }
});
