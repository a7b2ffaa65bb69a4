//! Homoclinic-orbit assembly from manifold legs and the Melnikov
//! transversality integral along it.

use super::equilibrium::EquilibriumReport;
use super::manifolds::{manifold_leg, ManifoldOptions, ManifoldSide};
use super::sections::{find_crossing, CrossSection};
use super::AnalysisError;
use crate::dynamics::{integrate, ControlAffineSystem, ControlFunction, StateBox, Trajectory};

/// A homoclinic orbit assembled from the two manifold legs of a saddle,
/// parametrized so that time `0` is the crossing of the anchor section:
/// the unstable leg covers `[-T_u, 0]`, the stable leg `[0, T_s]`, and both
/// far ends lie near the saddle.
#[derive(Debug, Clone)]
pub struct HomoclinicOrbit {
    pub unstable_leg: Trajectory,
    pub stable_leg: Trajectory,
    pub saddle: EquilibriumReport,
    pub anchor: CrossSection,
}

impl HomoclinicOrbit {
    pub fn alpha(&self) -> f64 {
        self.unstable_leg.alpha
    }

    /// Loop sample points, unstable leg followed by the stable leg.
    pub fn loop_states(&self) -> Vec<[f64; 3]> {
        self.unstable_leg
            .states()
            .iter()
            .chain(self.stable_leg.states())
            .copied()
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HomoclinicOptions {
    pub eps: f64,
    pub t_max: f64,
    pub window: Option<StateBox>,
    pub manifold: ManifoldOptions,
    pub min_crossing_time: f64,
}

impl Default for HomoclinicOptions {
    fn default() -> Self {
        HomoclinicOptions {
            eps: 1e-5,
            t_max: 100.0,
            window: None,
            manifold: ManifoldOptions::default(),
            min_crossing_time: 0.01,
        }
    }
}

/// Builds the homoclinic orbit of `eq` truncated at its first crossings of
/// `anchor`: the unstable leg forward from the saddle to the anchor, the
/// stable leg (computed in reversed time and re-parametrized forward) from
/// the anchor back toward the saddle.
pub fn assemble_homoclinic(
    sys: &ControlAffineSystem,
    alpha: f64,
    eq: &EquilibriumReport,
    anchor: &CrossSection,
    opts: &HomoclinicOptions,
) -> Result<HomoclinicOrbit, AnalysisError> {
    let window = opts
        .window
        .unwrap_or_else(|| StateBox::around(&eq.location, 2.0, sys.dim()));

    let mut unstable = manifold_leg(
        sys,
        alpha,
        eq,
        ManifoldSide::Unstable,
        opts.eps,
        &window,
        opts.t_max,
        &opts.manifold,
    )?;
    let cu = find_crossing(&unstable, anchor, None, opts.min_crossing_time, true)
        .ok_or(AnalysisError::NoCrossing)?;
    unstable.truncate_at(cu.t, sys);
    unstable.shift_times(-cu.t);

    let stable_rev = manifold_leg(
        sys,
        alpha,
        eq,
        ManifoldSide::Stable,
        opts.eps,
        &window,
        opts.t_max,
        &opts.manifold,
    )?;
    let cs = find_crossing(&stable_rev, anchor, None, opts.min_crossing_time, true)
        .ok_or(AnalysisError::NoCrossing)?;
    let mut stable_rev = stable_rev;
    stable_rev.truncate_at(cs.t, sys);
    let stable = stable_rev.reversed_copy();

    Ok(HomoclinicOrbit {
        unstable_leg: unstable,
        stable_leg: stable,
        saddle: eq.clone(),
        anchor: anchor.clone(),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct MelnikovOptions {
    /// Uniform resampling spacing along the legs.
    pub dt: f64,
    /// Samples with integrand magnitude below this are truncated tails.
    pub tail_cut: f64,
    /// Error threshold: the integrand at the available ends must have
    /// decayed below this.
    pub tail_err: f64,
    /// Cap on the extra near-saddle integration time added per side to let
    /// the tails decay.
    pub max_extension: f64,
    pub tol: f64,
}

impl Default for MelnikovOptions {
    fn default() -> Self {
        MelnikovOptions {
            dt: 0.005,
            tail_cut: 1e-12,
            tail_err: 1e-8,
            max_extension: 40.0,
            tol: 1e-11,
        }
    }
}

/// Melnikov integral along the homoclinic orbit:
///
/// ```text
/// M = int exp[ -int_0^t (d f1/d x1 + d f2/d x2) dtau ]
///         * (f1 * d f2/d alpha - f2 * d f1/d alpha) dt
/// ```
///
/// evaluated along the concatenated legs by composite trapezoidal
/// quadrature, the inner divergence integral accumulated along the same
/// samples. The improper tails are extended into the saddle until the
/// integrand falls below `tail_cut` and truncated there. The sign is
/// reported with the splitting measured toward the interior of the
/// homoclinic loop, matching the split-function orientation in which the
/// bifurcating-cycle side is positive.
pub fn melnikov(
    sys: &ControlAffineSystem,
    hom: &HomoclinicOrbit,
    opts: &MelnikovOptions,
) -> Result<f64, AnalysisError> {
    if sys.dim() != 2 {
        return Err(AnalysisError::Unsupported(
            "the Melnikov integral is defined for planar systems".to_string(),
        ));
    }
    let alpha = hom.alpha();
    let alpha_idx = 2;
    let drift = sys.drift();
    let df1_da = drift[0].diff(alpha_idx);
    let df2_da = drift[1].diff(alpha_idx);
    let divergence = drift[0].diff(0).plus(&drift[1].diff(1));

    // resample both legs on a uniform grid with t = 0 at the anchor
    let mut samples: Vec<(f64, [f64; 3])> = hom.unstable_leg.resample(opts.dt);
    samples.extend(hom.stable_leg.resample(opts.dt).into_iter().skip(1));

    let w_of = |s: &[f64; 3]| -> Result<f64, AnalysisError> {
        let env = [s[0], s[1], alpha];
        let f1 = drift[0].eval(&env)?;
        let f2 = drift[1].eval(&env)?;
        Ok(f1 * df2_da.eval(&env)? - f2 * df1_da.eval(&env)?)
    };
    let div_of = |s: &[f64; 3]| -> Result<f64, AnalysisError> {
        Ok(divergence.eval(&[s[0], s[1], alpha])?)
    };

    let compute_integrand =
        |samples: &[(f64, [f64; 3])]| -> Result<Vec<f64>, AnalysisError> {
            let n = samples.len();
            let divs = samples
                .iter()
                .map(|(_, s)| div_of(s))
                .collect::<Result<Vec<_>, _>>()?;
            let ws = samples
                .iter()
                .map(|(_, s)| w_of(s))
                .collect::<Result<Vec<_>, _>>()?;
            let i0 = samples
                .iter()
                .enumerate()
                .min_by(|a, b| a.1 .0.abs().total_cmp(&b.1 .0.abs()))
                .map(|(i, _)| i)
                .unwrap();
            let mut g = vec![0.0; n];
            for i in i0 + 1..n {
                g[i] = g[i - 1]
                    + 0.5 * (divs[i] + divs[i - 1]) * (samples[i].0 - samples[i - 1].0);
            }
            for i in (0..i0).rev() {
                g[i] = g[i + 1] - 0.5 * (divs[i] + divs[i + 1]) * (samples[i + 1].0 - samples[i].0);
            }
            Ok((0..n).map(|i| (-g[i]).exp() * ws[i]).collect())
        };

    // Extend each improper tail by near-saddle chunks until the integrand
    // has decayed below the cut. The manifold endpoint can only be followed
    // into the saddle for a limited time before the transverse error takes
    // over and the integrand grows again; a chunk that makes the end value
    // worse is rolled back and extension stops at the achieved floor.
    const CHUNK: f64 = 5.0;
    let mut integrand = compute_integrand(&samples)?;
    // stable-side tail: forward integration from the latest sample
    let mut extended = 0.0;
    while extended < opts.max_extension {
        let tail = integrand.last().copied().unwrap_or(0.0).abs();
        if tail <= opts.tail_cut {
            break;
        }
        let last = *samples.last().unwrap();
        let ext = integrate(
            sys,
            alpha,
            &last.1,
            &ControlFunction::zero(),
            CHUNK,
            opts.tol,
            false,
        )?;
        let mut candidate = samples.clone();
        candidate.extend(
            ext.resample(opts.dt)
                .into_iter()
                .skip(1)
                .map(|(s, x)| (last.0 + s, x)),
        );
        let cand_integrand = compute_integrand(&candidate)?;
        if cand_integrand.last().copied().unwrap_or(0.0).abs() >= tail {
            break;
        }
        samples = candidate;
        integrand = cand_integrand;
        extended += CHUNK;
    }
    // unstable-side tail: reversed integration from the earliest sample
    let mut extended = 0.0;
    while extended < opts.max_extension {
        let head = integrand.first().copied().unwrap_or(0.0).abs();
        if head <= opts.tail_cut {
            break;
        }
        let first = samples[0];
        let ext = integrate(
            sys,
            alpha,
            &first.1,
            &ControlFunction::zero(),
            CHUNK,
            opts.tol,
            true,
        )?;
        let mut pre: Vec<(f64, [f64; 3])> = ext
            .resample(opts.dt)
            .into_iter()
            .skip(1)
            .map(|(s, x)| (first.0 - s, x))
            .collect();
        pre.reverse();
        pre.extend(samples.iter().copied());
        let cand_integrand = compute_integrand(&pre)?;
        if cand_integrand.first().copied().unwrap_or(0.0).abs() >= head {
            break;
        }
        samples = pre;
        integrand = cand_integrand;
        extended += CHUNK;
    }

    let head = integrand.first().copied().unwrap_or(0.0).abs();
    let tail = integrand.last().copied().unwrap_or(0.0).abs();
    if head.max(tail) > opts.tail_err {
        return Err(AnalysisError::TailNotDecayed {
            magnitude: head.max(tail),
        });
    }

    // truncate tails below the cut and integrate the rest
    let lo = integrand.iter().position(|v| v.abs() >= opts.tail_cut);
    let hi = integrand.iter().rposition(|v| v.abs() >= opts.tail_cut);
    let raw = match (lo, hi) {
        (Some(lo), Some(hi)) if lo < hi => {
            let mut acc = 0.0;
            for i in lo..hi {
                acc += 0.5 * (integrand[i] + integrand[i + 1])
                    * (samples[i + 1].0 - samples[i].0);
            }
            acc
        }
        _ => 0.0,
    };

    // orient the value toward the loop interior: positive shoelace area
    // means the loop runs counterclockwise and the interior lies to the
    // left of the flow, which is the direction `raw` measures
    let states = hom.loop_states();
    let mut area = 0.0;
    for k in 0..states.len() {
        let a = states[k];
        let b = states[(k + 1) % states.len()];
        area += a[0] * b[1] - b[0] * a[1];
    }
    Ok(if area >= 0.0 { raw } else { -raw })
}
