#![no_main]
use libfuzzer_sys::fuzz_target;
use orbitfl::config::parse_config;

// Parsing and validation must reject bad input with an error, never a panic.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = parse_config(text) {
        if cfg.to_run_config().is_ok() {
            let echo = parse_config(&cfg.to_json()).unwrap();
            assert_eq!(echo.to_json(), cfg.to_json());
        }
    }
});
