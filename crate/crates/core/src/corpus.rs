//! Reference noise laws shipped with the crate.

use crate::limit::NoiseLaw;
use crate::spec::{parse_noise_spec, SpecError, TorusNoiseSpec};

macro_rules! entries {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../corpus/", $name, ".json")))),*]
    };
}

/// `(name, noise spec JSON)` for finite groups.
pub const GROUP_NOISES: &[(&str, &str)] = entries![
    "z4_haar",
    "z4_dirac1",
    "z4_half",
    "z4_odd_coset",
    "z4_mixing",
    "s3_transposition",
    "s3_shifted_transposition",
    "s4_conjugate",
    "d4_periodic",
    "q8_center",
    "z6_prefix",
];

/// `(name, torus noise spec JSON)`.
pub const TORUS_NOISES: &[(&str, &str)] = entries![
    "torus_dirac",
    "torus_half",
    "torus_gauss",
    "torus_gauss_schedule",
];

pub fn group_noise(name: &str) -> Option<Result<NoiseLaw, SpecError>> {
    GROUP_NOISES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, json)| parse_noise_spec(json))
}

pub fn torus_noise(name: &str) -> Option<Result<TorusNoiseSpec, SpecError>> {
    TORUS_NOISES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, json)| serde_json::from_str(json).map_err(SpecError::from))
}
