#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(g) = conv_limit_core::spec::parse_group_spec(s) {
            assert!(g.order() >= 1);
        }
    }
});
