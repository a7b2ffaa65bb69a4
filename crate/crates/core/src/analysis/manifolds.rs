//! Invariant-manifold legs: trajectories seeded on the stable or unstable
//! eigendirection of a hyperbolic saddle, integrated until they leave a
//! window, return to the saddle, or exhaust the time horizon.

use super::equilibrium::{EquilibriumKind, EquilibriumReport};
use super::AnalysisError;
use crate::dynamics::{
    integrate_raw, ControlAffineSystem, ControlFunction, IntegrateOptions, State, StateBox,
    Termination, Trajectory,
};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifoldSide {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy)]
pub struct ManifoldOptions {
    pub tol: f64,
    /// Radius around the saddle at which a leg that has already left the
    /// saddle neighborhood is considered returned and stops. `None` picks
    /// `eps` for unstable legs and `max(eps, 1e-2)` for stable ones: a
    /// reversed leg re-approaches the saddle along the weak eigendirection
    /// while transverse error grows at the strong rate, so it cannot be
    /// followed closer than that without losing accuracy.
    pub return_radius: Option<f64>,
}

impl Default for ManifoldOptions {
    fn default() -> Self {
        ManifoldOptions {
            tol: 1e-11,
            return_radius: None,
        }
    }
}

/// Picks the eigenvalue whose eigenvector seeds the requested leg:
/// the unique unstable eigenvalue for `Unstable`, the leading (largest real
/// part) stable eigenvalue for `Stable`. Both must be real and simple in
/// the relevant sense; otherwise there is no suitable splitting.
fn leg_eigenvalue(eq: &EquilibriumReport, side: ManifoldSide) -> Result<f64, AnalysisError> {
    match eq.kind {
        EquilibriumKind::Saddle2d | EquilibriumKind::Saddle3d | EquilibriumKind::SaddleFocus => {}
        _ => return Err(AnalysisError::NoHyperbolicSplit),
    }
    match side {
        ManifoldSide::Unstable => {
            let unstable: Vec<_> = eq.eigenvalues.iter().filter(|e| e.re > 0.0).collect();
            if unstable.len() != 1 || unstable[0].im != 0.0 {
                return Err(AnalysisError::NoHyperbolicSplit);
            }
            Ok(unstable[0].re)
        }
        ManifoldSide::Stable => {
            let leading = eq
                .eigenvalues
                .iter()
                .filter(|e| e.re < 0.0)
                .max_by(|a, b| a.re.total_cmp(&b.re))
                .ok_or(AnalysisError::NoHyperbolicSplit)?;
            if leading.im != 0.0 {
                return Err(AnalysisError::NoHyperbolicSplit);
            }
            Ok(leading.re)
        }
    }
}

/// Computes a manifold leg of the uncontrolled flow from `eq`.
///
/// Integration starts at `location + sign * eps * v` for the unit
/// eigenvector `v`, forward in time for the unstable leg and in reversed
/// time for the stable one; both signs are attempted and the leg that stays
/// inside `window` longer is kept. The run ends on window exit, on return
/// to the `eps`-ball around the saddle (after an initial grace period), or
/// at `t_max`.
pub fn manifold_leg(
    sys: &ControlAffineSystem,
    alpha: f64,
    eq: &EquilibriumReport,
    side: ManifoldSide,
    eps: f64,
    window: &StateBox,
    t_max: f64,
    opts: &ManifoldOptions,
) -> Result<Trajectory, AnalysisError> {
    if !(eps > 1e-8 && eps <= 1e-3) {
        return Err(AnalysisError::InvalidParameter(format!(
            "eps must lie in (1e-8, 1e-3], got {eps}"
        )));
    }
    let dim = sys.dim();
    let lambda = leg_eigenvalue(eq, side)?;
    let v = linalg::real_eigenvector(&eq.jacobian, lambda, dim)
        .ok_or(AnalysisError::NoHyperbolicSplit)?;
    let reversed = side == ManifoldSide::Stable;
    let saddle = eq.location;
    let stop_radius = opts.return_radius.unwrap_or(match side {
        ManifoldSide::Unstable => eps,
        ManifoldSide::Stable => eps.max(1e-2),
    });

    let mut best: Option<Trajectory> = None;
    for sign in [1.0, -1.0] {
        let x0 = linalg::add(&saddle, &linalg::scale(&v, sign * eps));
        // a return can only fire after the leg has left the capture radius
        let mut left_neighborhood = false;
        let stop = move |_t: f64, x: &State| {
            if !window.contains(x) {
                return true;
            }
            let d = linalg::norm(&linalg::sub(x, &saddle), dim);
            if !left_neighborhood {
                if d > 2.0 * stop_radius {
                    left_neighborhood = true;
                }
                return false;
            }
            d < stop_radius
        };
        let (traj, term) = integrate_raw(
            sys,
            alpha,
            &x0,
            &ControlFunction::zero(),
            t_max,
            opts.tol,
            reversed,
            IntegrateOptions::default(),
            stop,
        )?;
        if matches!(term, Termination::StepSizeUnderflow | Termination::Diverged)
            && traj.end_time() < 1e-3
        {
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => traj.end_time() > b.end_time(),
        };
        if better {
            best = Some(traj);
        }
    }
    let leg = best.ok_or(AnalysisError::LeftWindowImmediately)?;
    if leg.end_time() < 1e-3 {
        return Err(AnalysisError::LeftWindowImmediately);
    }
    Ok(leg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{find_equilibrium, NewtonOptions};

    fn sandstede() -> ControlAffineSystem {
        ControlAffineSystem::from_strs(
            &["x", "y"],
            &["-x + 2*y + x^2", "(2-alpha)*x - y - 3*x^2 + (3/2)*x*y"],
            &[vec!["0", "1"]],
            &[(-1.0, 1.0)],
        )
        .unwrap()
    }

    fn window() -> StateBox {
        StateBox::new_2d([-0.2, -0.6], [1.2, 0.6])
    }

    fn curve_residual(traj: &Trajectory) -> f64 {
        let mut worst = 0.0f64;
        for (_, s) in traj.resample(0.005) {
            let r = (s[0] * s[0] * (1.0 - s[0]) - s[1] * s[1]).abs();
            worst = worst.max(r);
        }
        worst
    }

    #[test]
    fn unstable_leg_traces_homoclinic_curve() {
        let sys = sandstede();
        let eq =
            find_equilibrium(&sys, 0.0, &[0.0, 0.0, 0.0], &NewtonOptions::default()).unwrap();
        let leg = manifold_leg(
            &sys,
            0.0,
            &eq,
            ManifoldSide::Unstable,
            1e-5,
            &window(),
            100.0,
            &ManifoldOptions::default(),
        )
        .unwrap();
        // the leg loops around and stops back near the saddle
        let end = leg.end_state();
        assert!(linalg::norm(&end, 2) < 2e-5, "end {:?}", end);
        assert!(leg.end_time() > 5.0);
        let res = curve_residual(&leg);
        assert!(res < 1e-5, "residual {}", res);
    }

    #[test]
    fn stable_leg_traces_lower_branch() {
        let sys = sandstede();
        let eq =
            find_equilibrium(&sys, 0.0, &[0.0, 0.0, 0.0], &NewtonOptions::default()).unwrap();
        let leg = manifold_leg(
            &sys,
            0.0,
            &eq,
            ManifoldSide::Stable,
            1e-5,
            &window(),
            100.0,
            &ManifoldOptions::default(),
        )
        .unwrap();
        assert!(leg.reversed());
        let res = curve_residual(&leg);
        assert!(res < 1e-5, "residual {}", res);
        // the reversed leg runs outward along y = -x sqrt(1-x): it must
        // visit the anchor region near (1, 0)
        let near_anchor = leg
            .states()
            .iter()
            .any(|s| (s[0] - 1.0).abs() < 0.05 && s[1].abs() < 0.1);
        assert!(near_anchor);
    }

    #[test]
    fn eps_validation() {
        let sys = sandstede();
        let eq =
            find_equilibrium(&sys, 0.0, &[0.0, 0.0, 0.0], &NewtonOptions::default()).unwrap();
        for bad in [0.0, -1e-5, 1e-9, 0.01] {
            let err = manifold_leg(
                &sys,
                0.0,
                &eq,
                ManifoldSide::Unstable,
                bad,
                &window(),
                10.0,
                &ManifoldOptions::default(),
            )
            .unwrap_err();
            assert!(matches!(err, AnalysisError::InvalidParameter(_)));
        }
    }

    #[test]
    fn no_split_for_focus() {
        let sys = sandstede();
        let eq = find_equilibrium(&sys, 0.0, &[0.6, 0.1, 0.0], &NewtonOptions::default()).unwrap();
        let err = manifold_leg(
            &sys,
            0.0,
            &eq,
            ManifoldSide::Unstable,
            1e-5,
            &window(),
            10.0,
            &ManifoldOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, AnalysisError::NoHyperbolicSplit));
    }
}
