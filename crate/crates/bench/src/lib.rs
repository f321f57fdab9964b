//! Fixtures shared by the benchmarks.

use relay_grid::{NetworkConfig, PowerParams};

/// Uniform network with unit mean gains, `η = 1` and `σ² = 1`.
pub fn network(k: usize, ld: u32, le: u32, snr_db: f64) -> NetworkConfig {
    let power = PowerParams {
        source_power: 1.0,
        relay_coeff: 1.0,
        harvest_coeff: 0.5,
        noise_power: 1.0,
        target_rate: 1.0,
    };
    NetworkConfig::uniform(k, ld, le, 1.0, power)
        .expect("valid benchmark network")
        .with_snr_db(snr_db)
}
