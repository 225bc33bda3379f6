#![no_main]

use helixproj::gp::{kernel_matrix, ProcessSpec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = text.parse::<ProcessSpec>() else { return };
    let round: ProcessSpec = spec.to_string().parse().expect("display output parses");
    assert_eq!(round, spec);
    let _ = kernel_matrix(&spec, &[0.0, 1.0, 2.0, 3.0]);
});
