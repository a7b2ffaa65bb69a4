//! The split function: the signed section coordinate at which the unstable
//! manifold of the saddle crosses a fixed cross-section, measured relative
//! to the stable manifold's crossing. Its zero marks the homoclinic
//! connection and it replaces the system parameter near the bifurcation.

use super::equilibrium::{find_equilibrium, EquilibriumKind, NewtonOptions};
use super::manifolds::{manifold_leg, ManifoldOptions, ManifoldSide};
use super::sections::{find_crossing, CrossSection};
use super::AnalysisError;
use crate::dynamics::{ControlAffineSystem, State, StateBox};
use crate::linalg;

#[derive(Debug, Clone, Copy)]
pub struct SplitOptions {
    pub eps: f64,
    pub t_max: f64,
    pub tol: f64,
    pub window: Option<StateBox>,
    /// Newton seed for the saddle; defaults to the section base.
    pub saddle_seed: Option<State>,
    pub newton: NewtonOptions,
    pub transversality_tol: f64,
    pub min_crossing_time: f64,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions {
            eps: 1e-5,
            t_max: 60.0,
            tol: 1e-11,
            window: None,
            saddle_seed: None,
            newton: NewtonOptions::default(),
            transversality_tol: 1e-8,
            min_crossing_time: 1e-2,
        }
    }
}

/// Computes the split function value at one parameter.
///
/// The unstable and stable manifold legs of the saddle near the section
/// base are intersected with the section; only crossings in the direction
/// the flow passes the section base are counted, which skips the outgoing
/// near-saddle crossing of the unstable leg. The returned value is the
/// difference of the two section coordinates, so its sign convention is
/// carried entirely by the section's tangent orientation.
pub fn split_function(
    sys: &ControlAffineSystem,
    alpha: f64,
    section: &CrossSection,
    opts: &SplitOptions,
) -> Result<f64, AnalysisError> {
    if sys.dim() != 2 {
        return Err(AnalysisError::Unsupported(
            "split functions are computed for planar systems".to_string(),
        ));
    }
    let seed = opts.saddle_seed.unwrap_or(section.base);
    let eq = find_equilibrium(sys, alpha, &seed, &opts.newton)?;
    if eq.kind != EquilibriumKind::Saddle2d {
        return Err(AnalysisError::NoHyperbolicSplit);
    }

    let zeros = vec![0.0; sys.n_controls()];
    let flow_at_base = sys.rhs(alpha, &section.base, &zeros)?;
    let normal_speed = linalg::dot(&flow_at_base, &section.normal, 2);
    if normal_speed.abs() <= opts.transversality_tol {
        return Err(AnalysisError::NotTransverse);
    }
    let direction = normal_speed.signum();

    let window = opts
        .window
        .unwrap_or_else(|| StateBox::around(&section.base, 2.0, 2));
    let m_opts = ManifoldOptions {
        tol: opts.tol,
        ..ManifoldOptions::default()
    };

    let unstable = manifold_leg(
        sys,
        alpha,
        &eq,
        ManifoldSide::Unstable,
        opts.eps,
        &window,
        opts.t_max,
        &m_opts,
    )?;
    let cu = find_crossing(
        &unstable,
        section,
        Some(direction),
        opts.min_crossing_time,
        true,
    )
    .ok_or(AnalysisError::NoCrossing)?;

    // the stable leg is stored in reversed time, so it crosses the section
    // moving the opposite way
    let stable = manifold_leg(
        sys,
        alpha,
        &eq,
        ManifoldSide::Stable,
        opts.eps,
        &window,
        opts.t_max,
        &m_opts,
    )?;
    let cs = find_crossing(
        &stable,
        section,
        Some(-direction),
        opts.min_crossing_time,
        true,
    )
    .ok_or(AnalysisError::NoCrossing)?;

    Ok(cu.xi - cs.xi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sandstede() -> ControlAffineSystem {
        ControlAffineSystem::from_strs(
            &["x", "y"],
            &["-x + 2*y + x^2", "(2-alpha)*x - y - 3*x^2 + (3/2)*x*y"],
            &[vec!["0", "1"]],
            &[(-1.0, 1.0)],
        )
        .unwrap()
    }

    fn opts() -> SplitOptions {
        SplitOptions {
            window: Some(StateBox::new_2d([-0.3, -0.7], [1.3, 0.7])),
            saddle_seed: Some([0.0, 0.0, 0.0]),
            ..SplitOptions::default()
        }
    }

    #[test]
    fn vanishes_at_the_homoclinic_parameter() {
        let sys = sandstede();
        let beta = split_function(&sys, 0.0, &CrossSection::sandstede_default(), &opts()).unwrap();
        assert!(beta.abs() < 1e-4, "beta(0) = {beta}");
    }

    #[test]
    fn sign_follows_parameter_near_zero() {
        let sys = sandstede();
        let section = CrossSection::sandstede_default();
        let plus = split_function(&sys, 0.01, &section, &opts()).unwrap();
        assert!(plus > 0.0, "beta(0.01) = {plus}");
        let minus = split_function(&sys, -0.017241, &section, &opts()).unwrap();
        assert!(minus < 0.0, "beta(-0.017241) = {minus}");
        // frozen shooting-oracle magnitudes (independent integrator)
        assert!((plus - 0.0284).abs() < 0.002, "beta(0.01) = {plus}");
        assert!((minus + 0.0405).abs() < 0.003, "beta(-0.017241) = {minus}");
    }

    #[test]
    fn wide_section_covers_larger_parameters() {
        // the default near-saddle section is not reached by the returning
        // unstable manifold once the bifurcated cycle has detached from it;
        // a section further along the branch sees every crossing
        let sys = sandstede();
        let wide = CrossSection::planar([0.2, 0.0], [0.0, 1.0], 0.3);
        for (alpha, frozen) in [
            (-0.017241, -0.02792),
            (0.01, 0.01606),
            (0.03, 0.04803),
            (0.07, 0.11306),
        ] {
            let beta = split_function(&sys, alpha, &wide, &opts()).unwrap();
            assert_eq!(beta > 0.0, alpha > 0.0, "beta({alpha}) = {beta}");
            assert!(
                (beta - frozen).abs() < 5e-3,
                "beta({alpha}) = {beta}, frozen {frozen}"
            );
        }
        // and at larger alpha the default section indeed reports no crossing
        let err =
            split_function(&sys, 0.07, &CrossSection::sandstede_default(), &opts()).unwrap_err();
        assert!(matches!(err, AnalysisError::NoCrossing));
    }

    #[test]
    fn non_transverse_section_rejected() {
        let sys = sandstede();
        // base at the saddle itself: the flow vanishes there
        let bad = CrossSection::planar([0.0, 0.0], [0.0, 1.0], 0.3);
        let err = split_function(&sys, 0.0, &bad, &opts()).unwrap_err();
        assert!(matches!(err, AnalysisError::NotTransverse));
    }
}
