#![no_main]

use helixproj::io::parse_times;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(times) = parse_times(text) {
            assert!(times.iter().all(|t| t.is_finite()));
        }
    }
});
