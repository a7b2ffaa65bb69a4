//! Grid-based approximation of reachable, controllable, and control sets by
//! worklist fixpoint marking, plus invariance classification, chain-transitive
//! components of the uncontrolled flow, and controlled-periodic-orbit
//! certificates.

mod certificate;
mod chain;
mod expand;
mod grid;

pub use certificate::{periodic_orbit_certificate, CertificateOptions};
pub use chain::{chain_transitive_cells, ChainOptions};
pub use expand::{
    classify_invariance, control_set, expand, Anchor, ControlSetKind, ControlSetMethod,
    ControlSetOptions, ControlSetResult, ExpandOptions, SweepSchedule,
};
pub use grid::{CellSet, Grid};

use crate::analysis::AnalysisError;
use crate::dynamics::{ControlAffineSystem, IntegrateError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReachError {
    #[error("seed list is empty")]
    EmptySeeds,
    #[error("control sample list is empty")]
    NoControls,
    #[error("seed {0:?} lies outside the grid window")]
    SeedOutsideGrid([f64; 3]),
    #[error("control sample {index} lies outside the scaled control range")]
    ControlOutOfRange { index: usize },
    #[error("forward and backward expansions do not intersect at this resolution")]
    EmptyControlSet,
    #[error("no closed cell path through the start cell exists in the control set")]
    NoClosedPath,
    #[error("shooting correction failed: {0}")]
    ShootingFailed(String),
    #[error("orbit leaves the tube: Hausdorff distance {distance:.4e} exceeds {delta:.4e}")]
    TubeExceeded { distance: f64, delta: f64 },
    #[error("cell sets belong to different grids")]
    GridMismatch,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

/// Default control sampling for expansions: the per-channel extremes of the
/// scaled range together with zero, combined over all channels.
pub fn control_samples(sys: &ControlAffineSystem, rho: f64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for &(lo, hi) in sys.range() {
        let mut next = Vec::with_capacity(out.len() * 3);
        for base in &out {
            for v in [rho * lo, 0.0, rho * hi] {
                let mut u = base.clone();
                u.push(v);
                next.push(u);
            }
        }
        out = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn control_sample_grid() {
        let sys = ControlAffineSystem::from_strs(
            &["x", "y"],
            &["-x", "-y"],
            &[vec!["0", "1"], vec!["1", "0"]],
            &[(-1.0, 1.0), (-2.0, 0.5)],
        )
        .unwrap();
        let samples = control_samples(&sys, 0.01);
        assert_eq!(samples.len(), 9);
        assert!(samples.contains(&vec![0.0, 0.0]));
        assert!(samples.contains(&vec![-0.01, 0.005]));
        assert!(samples.contains(&vec![0.01, -0.02]));
        for s in &samples {
            assert!(sys.contains_control(0.01, s));
        }
    }
}
