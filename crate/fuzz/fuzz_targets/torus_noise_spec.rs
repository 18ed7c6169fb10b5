#![no_main]

use conv_limit_core::spec::TorusNoiseSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let _ = conv_limit_core::spec::parse_torus_noise_spec(s);
    // grid discretization is a second decoder on the same input
    if let Ok(spec) = serde_json::from_str::<TorusNoiseSpec>(s) {
        let _ = spec.build_on_grid();
    }
});
