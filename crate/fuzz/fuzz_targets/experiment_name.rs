#![no_main]

use libfuzzer_sys::fuzz_target;
use orbitfix::experiment::Experiment;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(e) = s.parse::<Experiment>() {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
    }
});
