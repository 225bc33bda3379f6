#![no_main]

use helixproj::geometry::verify_projection_invariance;
use helixproj::io::parse_points_csv;
use helixproj::tol;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = parse_points_csv(text) else { return };
    if cfg.len() <= 12 {
        let _ = verify_projection_invariance(&cfg, tol::INVARIANCE);
    }
});
