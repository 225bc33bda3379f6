#![no_main]

use helixproj::io::parse_metric_file;
use helixproj::metric::{classify_quadruple, embed_line};
use helixproj::tol;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(f) = parse_metric_file(text) else { return };
    if f.labels.len() > 16 {
        return;
    }
    if let Ok(m) = f.space() {
        let _ = embed_line(&m, tol::METRIC_REL);
        let _ = classify_quadruple(&m, tol::METRIC_REL);
    }
});
