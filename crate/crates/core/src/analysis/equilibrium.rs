//! Equilibrium location by damped Newton iteration with the symbolic drift
//! Jacobian, spectrum classification, and saddle quantities.

use super::AnalysisError;
use crate::dynamics::{ControlAffineSystem, State};
use crate::linalg::{self, Mat};
use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquilibriumKind {
    Saddle2d,
    Saddle3d,
    SaddleFocus,
    StableNodeOrFocus,
    UnstableNodeOrFocus,
    Nonhyperbolic,
}

impl std::fmt::Display for EquilibriumKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EquilibriumKind::Saddle2d => "saddle2d",
            EquilibriumKind::Saddle3d => "saddle3d",
            EquilibriumKind::SaddleFocus => "saddle_focus",
            EquilibriumKind::StableNodeOrFocus => "stable_node_or_focus",
            EquilibriumKind::UnstableNodeOrFocus => "unstable_node_or_focus",
            EquilibriumKind::Nonhyperbolic => "nonhyperbolic",
        };
        f.write_str(s)
    }
}

/// Equilibrium location together with the local linearization data.
/// Eigenvalues are sorted by descending real part.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumReport {
    pub location: State,
    pub jacobian: Mat,
    pub eigenvalues: Vec<Complex64>,
    pub kind: EquilibriumKind,
    /// Sum of the real parts of the leading unstable and leading stable
    /// eigenvalues; present exactly for the saddle kinds.
    pub saddle_quantity: Option<f64>,
    pub dim: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub newton_tol: f64,
    pub max_iterations: usize,
    pub hyperbolicity_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            newton_tol: 1e-12,
            max_iterations: 100,
            hyperbolicity_tol: 1e-8,
        }
    }
}

fn classify(eigs: &[Complex64], dim: usize, hyperbolicity_tol: f64) -> EquilibriumKind {
    if eigs.iter().any(|e| e.re.abs() < hyperbolicity_tol) {
        return EquilibriumKind::Nonhyperbolic;
    }
    let n_pos = eigs.iter().filter(|e| e.re > 0.0).count();
    match (dim, n_pos) {
        (2, 1) => EquilibriumKind::Saddle2d,
        (2, 0) => EquilibriumKind::StableNodeOrFocus,
        (2, 2) => EquilibriumKind::UnstableNodeOrFocus,
        (3, 0) => EquilibriumKind::StableNodeOrFocus,
        (3, 3) => EquilibriumKind::UnstableNodeOrFocus,
        (3, _) => {
            if eigs.iter().any(|e| e.im != 0.0) {
                EquilibriumKind::SaddleFocus
            } else {
                EquilibriumKind::Saddle3d
            }
        }
        _ => EquilibriumKind::Nonhyperbolic,
    }
}

pub(super) fn report_from_spectrum(
    location: State,
    jacobian: Mat,
    mut eigenvalues: Vec<Complex64>,
    dim: usize,
    hyperbolicity_tol: f64,
) -> EquilibriumReport {
    eigenvalues.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    let kind = classify(&eigenvalues, dim, hyperbolicity_tol);
    let saddle_quantity = match kind {
        EquilibriumKind::Saddle2d | EquilibriumKind::Saddle3d | EquilibriumKind::SaddleFocus => {
            let leading_unstable = eigenvalues
                .iter()
                .filter(|e| e.re > 0.0)
                .map(|e| e.re)
                .fold(f64::INFINITY, f64::min);
            let leading_stable = eigenvalues
                .iter()
                .filter(|e| e.re < 0.0)
                .map(|e| e.re)
                .fold(f64::NEG_INFINITY, f64::max);
            Some(leading_unstable + leading_stable)
        }
        _ => None,
    };
    EquilibriumReport {
        location,
        jacobian,
        eigenvalues,
        kind,
        saddle_quantity,
        dim,
    }
}

/// Damped Newton iteration on `f0(alpha, .)` from `seed`; converged when
/// the drift norm falls below `newton_tol`.
pub fn find_equilibrium(
    sys: &ControlAffineSystem,
    alpha: f64,
    seed: &State,
    opts: &NewtonOptions,
) -> Result<EquilibriumReport, AnalysisError> {
    let dim = sys.dim();
    if seed[..dim].iter().any(|v| !v.is_finite()) {
        return Err(AnalysisError::InvalidParameter(
            "seed must be finite".to_string(),
        ));
    }
    let zeros = vec![0.0; sys.n_controls()];
    let residual = |x: &State| -> Result<State, AnalysisError> {
        Ok(sys.rhs(alpha, x, &zeros)?)
    };
    let mut x = *seed;
    let mut r = residual(&x)?;
    let mut rn = linalg::norm(&r, dim);
    for _ in 0..opts.max_iterations {
        if rn < opts.newton_tol {
            break;
        }
        let jac = sys.drift_jacobian_at(alpha, &x)?;
        let neg_r = linalg::scale(&r, -1.0);
        let delta = linalg::solve(&jac, &neg_r, dim).ok_or(AnalysisError::JacobianSingular)?;
        // backtracking line search on the residual norm
        let mut accepted = false;
        let mut lambda = 1.0;
        for _ in 0..25 {
            let cand = linalg::add(&x, &linalg::scale(&delta, lambda));
            if let Ok(rc) = residual(&cand) {
                let rcn = linalg::norm(&rc, dim);
                if rcn < rn {
                    x = cand;
                    r = rc;
                    rn = rcn;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted || linalg::norm(&x, dim) > 1e8 {
            return Err(AnalysisError::NoConvergence {
                iterations: opts.max_iterations,
            });
        }
    }
    if rn >= opts.newton_tol {
        return Err(AnalysisError::NoConvergence {
            iterations: opts.max_iterations,
        });
    }
    let jac = sys.drift_jacobian_at(alpha, &x)?;
    let eigs = linalg::eigenvalues(&jac, dim);
    Ok(report_from_spectrum(
        x,
        jac,
        eigs,
        dim,
        opts.hyperbolicity_tol,
    ))
}

/// Newton continuation over a sorted list of parameter values, chaining each
/// solution as the next seed. A location jump exceeding `0.1` reports
/// [`AnalysisError::ContinuationBreak`].
pub fn continue_equilibrium(
    sys: &ControlAffineSystem,
    alpha_values: &[f64],
    seed: &State,
    opts: &NewtonOptions,
) -> Result<Vec<EquilibriumReport>, AnalysisError> {
    let mut out = Vec::with_capacity(alpha_values.len());
    let mut current_seed = *seed;
    for (i, &alpha) in alpha_values.iter().enumerate() {
        let report = find_equilibrium(sys, alpha, &current_seed, opts)?;
        if let Some(prev) = out.last() {
            let prev: &EquilibriumReport = prev;
            let gap = linalg::norm(
                &linalg::sub(&report.location, &prev.location),
                sys.dim(),
            );
            if gap > 0.1 {
                return Err(AnalysisError::ContinuationBreak { index: i - 1 });
            }
        }
        current_seed = report.location;
        out.push(report);
    }
    Ok(out)
}
