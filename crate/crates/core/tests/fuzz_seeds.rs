//! Replays the fuzz corpus seeds through the same decoders the fuzz targets
//! drive, so the seeds stay valid as the formats evolve.

use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use conv_limit_core::spec::{
    parse_ensemble, parse_group_spec, parse_measure_spec, parse_noise_spec, parse_torus_noise_spec,
};

fn seeds(target: &str) -> Vec<(PathBuf, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .filter(|p| {
            p.file_name()
                .unwrap()
                .to_string_lossy()
                .starts_with("seed_")
        })
        .map(|p| {
            let s = fs::read_to_string(&p).unwrap();
            (p, s)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn group_seeds_parse() {
    for (p, s) in seeds("group_spec") {
        parse_group_spec(&s).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn measure_seeds_parse() {
    let s3 = Arc::new(parse_group_spec(r#"{"kind": "builtin", "name": "S3"}"#).unwrap());
    for (p, s) in seeds("measure_spec") {
        parse_measure_spec(&s, &s3).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn noise_seeds_parse() {
    for (p, s) in seeds("noise_spec") {
        parse_noise_spec(&s).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn torus_seeds_parse() {
    for (p, s) in seeds("torus_noise_spec") {
        parse_torus_noise_spec(&s).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn ensemble_seeds_parse() {
    for (p, s) in seeds("ensemble") {
        let e = parse_ensemble(&s).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert!(!e.paths.is_empty());
    }
}

#[test]
fn truncated_seeds_are_rejected_cleanly() {
    for (_, s) in seeds("ensemble").into_iter().chain(seeds("noise_spec")) {
        for cut in [1, s.len() / 3, s.len() / 2, s.len() - 2] {
            assert!(parse_ensemble(&s[..cut]).is_err());
            assert!(parse_noise_spec(&s[..cut]).is_err());
        }
    }
}
