#![no_main]

use libfuzzer_sys::fuzz_target;
use orbitfix::scenario::parse_config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // Either a typed error or a config that validates and builds.
    if let Ok(cfg) = parse_config(text) {
        assert!(cfg.validate().is_ok());
        let _ = cfg.hash();
    }
});
