//! Local and global smooth-dynamics analysis: equilibria and spectra,
//! saddle quantities, Lie brackets and rank conditions, invariant-manifold
//! legs, split functions, Melnikov integrals, Poincaré-map limit cycles,
//! and homoclinic-case classification.

mod brackets;
mod cycles;
mod equilibrium;
mod manifolds;
mod melnikov;
mod sections;
mod split;

pub use brackets::{
    accessibility_rank, ad_iterated, ad_span_check, controllability_matrix, kalman_rank,
    lie_bracket,
};
pub use cycles::{find_limit_cycle, poincare_return, CycleOptions, LimitCycleResult};
pub use equilibrium::{
    continue_equilibrium, find_equilibrium, EquilibriumKind, EquilibriumReport, NewtonOptions,
};
pub use manifolds::{manifold_leg, ManifoldOptions, ManifoldSide};
pub use melnikov::{assemble_homoclinic, melnikov, HomoclinicOptions, HomoclinicOrbit, MelnikovOptions};
pub use sections::{find_crossing, CrossSection, SectionCrossing};
pub use split::{split_function, SplitOptions};

use crate::dynamics::IntegrateError;
use crate::expr::EvalError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("Newton iteration did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("Jacobian is singular at the current iterate")]
    JacobianSingular,
    #[error("continuation break between entries {index} and {}", index + 1)]
    ContinuationBreak { index: usize },
    #[error("equilibrium has no suitable real hyperbolic splitting")]
    NoHyperbolicSplit,
    #[error("manifold leg left the window immediately")]
    LeftWindowImmediately,
    #[error("no section crossing found")]
    NoCrossing,
    #[error("section is not transverse to the flow at its base")]
    NotTransverse,
    #[error("no return to the section within the time horizon")]
    NoReturn,
    #[error("improper-integral tail has not decayed (magnitude {magnitude:.3e})")]
    TailNotDecayed { magnitude: f64 },
    #[error("empty input")]
    EmptyInput,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

/// Case labels for orbits homoclinic to a three-dimensional hyperbolic
/// equilibrium. Only the sign of the saddle quantity and the spectrum shape
/// enter; whether a positive-saddle-quantity orbit is simple or twisted is a
/// topological property with no computable test here, so that case is
/// reported with the orientation left undetermined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HomoclinicCase {
    /// Real spectrum, one unstable direction, saddle quantity < 0: a unique
    /// asymptotically stable limit cycle bifurcates.
    SaddleSigmaNeg,
    /// Real spectrum, saddle quantity > 0: a unique saddle limit cycle
    /// bifurcates; the bifurcation side depends on the (undetermined)
    /// simple/twisted orientation.
    SaddleSigmaPosOrientationUndetermined,
    /// Saddle-focus with saddle quantity < 0: a unique asymptotically
    /// stable limit cycle bifurcates.
    SaddleFocusSigmaNeg,
    /// Saddle-focus with saddle quantity > 0: infinitely many saddle
    /// cycles; out of scope.
    SaddleFocusSigmaPosOutOfScope,
    NotApplicable,
}

impl std::fmt::Display for HomoclinicCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            HomoclinicCase::SaddleSigmaNeg => "saddle_sigma_neg",
            HomoclinicCase::SaddleSigmaPosOrientationUndetermined => {
                "saddle_sigma_pos_orientation_undetermined"
            }
            HomoclinicCase::SaddleFocusSigmaNeg => "saddle_focus_sigma_neg",
            HomoclinicCase::SaddleFocusSigmaPosOutOfScope => {
                "saddle_focus_sigma_pos_out_of_scope"
            }
            HomoclinicCase::NotApplicable => "not_applicable",
        };
        f.write_str(s)
    }
}

/// Dispatches a three-dimensional equilibrium report onto the homoclinic
/// bifurcation cases by spectrum shape and saddle-quantity sign.
pub fn classify_homoclinic_case(eq: &EquilibriumReport) -> HomoclinicCase {
    if eq.dim != 3 {
        return HomoclinicCase::NotApplicable;
    }
    let sigma = match eq.saddle_quantity {
        Some(s) => s,
        None => return HomoclinicCase::NotApplicable,
    };
    let n_unstable = eq.eigenvalues.iter().filter(|e| e.re > 0.0).count();
    match eq.kind {
        EquilibriumKind::Saddle3d if n_unstable == 1 => {
            if sigma < 0.0 {
                HomoclinicCase::SaddleSigmaNeg
            } else if sigma > 0.0 {
                HomoclinicCase::SaddleSigmaPosOrientationUndetermined
            } else {
                HomoclinicCase::NotApplicable
            }
        }
        EquilibriumKind::SaddleFocus if n_unstable == 1 => {
            // one real unstable eigenvalue, complex stable pair
            if eq.eigenvalues[0].im != 0.0 {
                return HomoclinicCase::NotApplicable;
            }
            if sigma < 0.0 {
                HomoclinicCase::SaddleFocusSigmaNeg
            } else if sigma > 0.0 {
                HomoclinicCase::SaddleFocusSigmaPosOutOfScope
            } else {
                HomoclinicCase::NotApplicable
            }
        }
        _ => HomoclinicCase::NotApplicable,
    }
}

/// Exact discrete Hausdorff distance between two nonempty point sets under
/// the Euclidean norm.
pub fn hausdorff(a: &[[f64; 3]], b: &[[f64; 3]], dim: usize) -> Result<f64, AnalysisError> {
    if a.is_empty() || b.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    let directed = |from: &[[f64; 3]], to: &[[f64; 3]]| {
        from.iter()
            .map(|p| {
                to.iter()
                    .map(|q| {
                        (0..dim)
                            .map(|i| (p[i] - q[i]) * (p[i] - q[i]))
                            .sum::<f64>()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0f64, f64::max)
    };
    Ok(directed(a, b).max(directed(b, a)).sqrt())
}
