#![no_main]

use std::sync::{Arc, OnceLock};

use conv_limit_core::group::FiniteGroup;
use conv_limit_core::spec::{parse_group_spec, parse_measure_spec};
use libfuzzer_sys::fuzz_target;

fn group() -> &'static Arc<FiniteGroup> {
    static G: OnceLock<Arc<FiniteGroup>> = OnceLock::new();
    G.get_or_init(|| Arc::new(parse_group_spec(r#"{"kind": "builtin", "name": "S3"}"#).unwrap()))
}

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(m) = parse_measure_spec(s, group()) {
            let total: f64 = m.weights().iter().sum();
            assert!((total - 1.0).abs() < 1e-6);
        }
    }
});
