use conv_limit_core::corpus::{group_noise, GROUP_NOISES};
use conv_limit_core::limit::{compute_limit, strong_subgroup, LimitOptions};

fn main() {
    for (name, _) in GROUP_NOISES {
        let noise = group_noise(name).unwrap().unwrap();
        match compute_limit(&noise, &LimitOptions::default()) {
            Ok(r) => println!(
                "{name}: case {} H={:?} strong={:?} depth={} residuals={:?}",
                r.case(),
                r.subgroup().members(),
                strong_subgroup(noise.group(), r.subgroup()).members(),
                r.depth_used(),
                r.residuals()
            ),
            Err(e) => println!("{name}: {e}"),
        }
    }
}
