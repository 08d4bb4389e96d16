//! Fixtures shared by the criterion benches.

use cgp_core::{generate_instance, CgpInstance, SbmParams};

/// First stable CGP-SBM instance at or after `seed` with five clusters and default density.
pub fn fixture(n_nodes: usize, n_lags: usize, len: usize, seed: u64) -> CgpInstance {
    (seed..seed + 100)
        .find_map(|s| {
            let params = SbmParams::with_density(n_nodes, 5, cgp_core::sbm::DEFAULT_DENSITY, s).ok()?;
            generate_instance(&params, n_lags, len).ok()
        })
        .expect("no stable instance in 100 seeds")
}
