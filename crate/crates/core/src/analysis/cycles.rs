//! Limit cycles via the Poincaré return map on a cross-section: fixed-point
//! location, period, and Floquet multipliers from the differentiated map.

use super::sections::{find_crossing, CrossSection};
use super::AnalysisError;
use crate::dynamics::{
    integrate_raw, ControlAffineSystem, ControlFunction, IntegrateOptions, State, StateBox,
    Termination, Trajectory,
};
use crate::linalg;
use num_complex::Complex64;

/// A located periodic orbit of the uncontrolled system.
#[derive(Debug, Clone)]
pub struct LimitCycleResult {
    /// One period of the orbit, starting and ending on the section.
    pub samples: Trajectory,
    pub period: f64,
    pub floquet_multipliers: Vec<Complex64>,
    pub stable: bool,
    /// Fixed-point coordinate on the section.
    pub xi: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct CycleOptions {
    pub tol: f64,
    pub t_max: f64,
    pub cycle_tol: f64,
    pub max_iterations: usize,
    /// Finite-difference step for the return-map derivative.
    pub fd_step: f64,
    pub min_return_time: f64,
    pub window: Option<StateBox>,
}

impl Default for CycleOptions {
    fn default() -> Self {
        CycleOptions {
            tol: 1e-11,
            t_max: 200.0,
            cycle_tol: 1e-8,
            max_iterations: 60,
            fd_step: 1e-7,
            min_return_time: 0.1,
            window: None,
        }
    }
}

/// One application of the Poincaré return map: from the section point at
/// coordinate `xi`, the uncontrolled flow is integrated until it crosses
/// the section again in the same direction it initially leaves it.
/// Returns the arrival coordinate, the return time, and the trajectory.
pub fn poincare_return(
    sys: &ControlAffineSystem,
    alpha: f64,
    section: &CrossSection,
    xi: f64,
    opts: &CycleOptions,
) -> Result<(f64, f64, Trajectory), AnalysisError> {
    let x0 = section.point_at(xi);
    let zeros = vec![0.0; sys.n_controls()];
    let f0 = sys.rhs(alpha, &x0, &zeros)?;
    let normal_speed = linalg::dot(&f0, &section.normal, sys.dim());
    if normal_speed == 0.0 {
        return Err(AnalysisError::NotTransverse);
    }
    let direction = normal_speed.signum();
    let window = opts
        .window
        .unwrap_or_else(|| StateBox::around(&section.base, 2.0, sys.dim()));
    let (traj, term) = integrate_raw(
        sys,
        alpha,
        &x0,
        &ControlFunction::zero(),
        opts.t_max,
        opts.tol,
        false,
        IntegrateOptions::default(),
        |_, x| !window.contains(x),
    )?;
    if matches!(term, Termination::StepSizeUnderflow) {
        return Err(AnalysisError::NoReturn);
    }
    let crossing = find_crossing(&traj, section, Some(direction), opts.min_return_time, true)
        .ok_or(AnalysisError::NoReturn)?;
    let mut cycle = traj;
    cycle.truncate_at(crossing.t, sys);
    Ok((crossing.xi, crossing.t, cycle))
}

/// Searches for a limit cycle crossing the section near `seed`.
///
/// The seed's section coordinate is iterated under the return map (which
/// converges for attracting cycles) and polished by Newton with a
/// finite-difference derivative; Floquet multipliers come from the same
/// differentiated return map.
pub fn find_limit_cycle(
    sys: &ControlAffineSystem,
    alpha: f64,
    section: &CrossSection,
    seed: &State,
    opts: &CycleOptions,
) -> Result<LimitCycleResult, AnalysisError> {
    if sys.dim() != 2 {
        return Err(AnalysisError::Unsupported(
            "limit-cycle search uses one-dimensional sections of planar systems".to_string(),
        ));
    }
    let mut xi = section.xi(seed);
    let p = |xi: f64| -> Result<(f64, f64, Trajectory), AnalysisError> {
        poincare_return(sys, alpha, section, xi, opts)
    };

    // direct iteration phase: contraction toward an attracting cycle
    let mut gap = f64::INFINITY;
    for _ in 0..opts.max_iterations {
        let (pxi, _, _) = p(xi)?;
        let g = pxi - xi;
        if g.abs() >= gap && gap < 1e-3 * section.halfwidth.max(1e-6) {
            break;
        }
        gap = g.abs();
        xi = pxi;
        if gap < opts.cycle_tol {
            break;
        }
        if xi.abs() > section.halfwidth {
            return Err(AnalysisError::NoConvergence {
                iterations: opts.max_iterations,
            });
        }
    }

    // Newton polish on P(xi) - xi
    let mut iterations_left = 20usize;
    while iterations_left > 0 {
        iterations_left -= 1;
        let (pxi, _, _) = p(xi)?;
        let g = pxi - xi;
        if g.abs() < opts.cycle_tol {
            break;
        }
        let h = opts.fd_step;
        let (pxi_h, _, _) = p(xi + h)?;
        let dp = (pxi_h - pxi) / h;
        let denom = dp - 1.0;
        let step = if denom.abs() > 1e-3 && denom.is_finite() {
            -g / denom
        } else {
            g
        };
        let next = xi + step;
        if !next.is_finite() || next.abs() > section.halfwidth {
            return Err(AnalysisError::NoConvergence {
                iterations: opts.max_iterations,
            });
        }
        xi = next;
    }

    let (pxi, period, cycle) = p(xi)?;
    if (pxi - xi).abs() >= opts.cycle_tol {
        return Err(AnalysisError::NoConvergence {
            iterations: opts.max_iterations,
        });
    }
    let h = opts.fd_step;
    let (pxi_h, _, _) = p(xi + h)?;
    let multiplier = (pxi_h - pxi) / h;
    Ok(LimitCycleResult {
        samples: cycle,
        period,
        floquet_multipliers: vec![Complex64::new(multiplier, 0.0)],
        stable: multiplier.abs() < 1.0,
        xi,
    })
}
