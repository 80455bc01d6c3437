//! Shared fixtures for the criterion benches.

use hfprec_core::simlab::{replication_draw, SimDraw};
use hfprec_core::{DesignConfig, McConfig, ResidualKind};

/// A design-1 replication with three Heston factors.
pub fn design1_draw(d: usize, n: usize, seed: u64) -> SimDraw {
    let cfg = McConfig::new(DesignConfig::new(ResidualKind::Design1), d, n, 1, seed);
    replication_draw(&cfg, 0).expect("design 1 fixture")
}
