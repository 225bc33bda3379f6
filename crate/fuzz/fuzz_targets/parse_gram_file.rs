#![no_main]

use helixproj::classifier::classify;
use helixproj::correlation::CorrelationMatrix;
use helixproj::io::parse_gram_file;
use helixproj::tol::Tolerances;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(f) = parse_gram_file(text) else { return };
    if f.labels.len() > 16 {
        return;
    }
    if let Ok(c) = CorrelationMatrix::from_rows(f.labels, &f.gram) {
        let _ = classify(&c, &Tolerances::default());
    }
});
