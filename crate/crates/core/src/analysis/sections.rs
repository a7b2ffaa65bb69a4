//! Cross-sections and trajectory-section crossing detection on dense output.

use crate::dynamics::{State, Trajectory};
use crate::linalg;

/// A local cross-section: a point, a unit tangent giving the section
/// coordinate, a unit normal, and a halfwidth bounding the section extent.
///
/// In two dimensions the section is the segment
/// `{base + xi * tangent : |xi| <= halfwidth}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSection {
    pub base: State,
    pub tangent: State,
    pub normal: State,
    pub halfwidth: f64,
    pub dim: usize,
}

impl CrossSection {
    /// Planar section through `base` along `tangent`; the normal is the
    /// tangent rotated by -90 degrees, so tangent `(0,1)` gives normal
    /// `(1,0)`.
    pub fn planar(base: [f64; 2], tangent: [f64; 2], halfwidth: f64) -> Self {
        let n = (tangent[0] * tangent[0] + tangent[1] * tangent[1]).sqrt();
        let t = [tangent[0] / n, tangent[1] / n, 0.0];
        CrossSection {
            base: [base[0], base[1], 0.0],
            tangent: t,
            normal: [t[1], -t[0], 0.0],
            halfwidth,
            dim: 2,
        }
    }

    /// Default section for the built-in planar example: anchored near the
    /// saddle at `(0.05, 0)`, tangent `(0, 1)`, halfwidth `0.3`.
    pub fn sandstede_default() -> Self {
        CrossSection::planar([0.05, 0.0], [0.0, 1.0], 0.3)
    }

    /// Signed distance from the section hyperplane.
    pub fn offset(&self, p: &State) -> f64 {
        linalg::dot(&linalg::sub(p, &self.base), &self.normal, self.dim)
    }

    /// Section coordinate of a point (projection onto the tangent).
    pub fn xi(&self, p: &State) -> f64 {
        linalg::dot(&linalg::sub(p, &self.base), &self.tangent, self.dim)
    }

    /// The point at section coordinate `xi`.
    pub fn point_at(&self, xi: f64) -> State {
        linalg::add(&self.base, &linalg::scale(&self.tangent, xi))
    }
}

/// A located section crossing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionCrossing {
    pub t: f64,
    pub point: State,
    pub xi: f64,
}

/// Finds the first crossing of `section` along `traj` after `min_time`.
///
/// `direction`: `Some(+1.0)` accepts only crossings with the offset
/// increasing, `Some(-1.0)` only decreasing, `None` either. When
/// `within_halfwidth` is set, crossings with `|xi| > halfwidth` are skipped
/// and scanning continues. The crossing time is refined by bisection on the
/// dense output.
pub fn find_crossing(
    traj: &Trajectory,
    section: &CrossSection,
    direction: Option<f64>,
    min_time: f64,
    within_halfwidth: bool,
) -> Option<SectionCrossing> {
    let times = traj.times();
    if times.len() < 2 {
        return None;
    }
    // subsample each step to keep sign scanning robust on long steps
    const SUBS: usize = 4;
    let mut prev_t = times[0];
    let mut prev_g = section.offset(&traj.states()[0]);
    for k in 0..times.len() - 1 {
        let (t0, t1) = (times[k], times[k + 1]);
        for s in 1..=SUBS {
            let t = t0 + (t1 - t0) * s as f64 / SUBS as f64;
            let g = section.offset(&traj.sample(t));
            if prev_g == 0.0 && g == 0.0 {
                prev_t = t;
                continue;
            }
            let crossed = prev_g == 0.0 || g == 0.0 || (prev_g < 0.0) != (g < 0.0);
            if crossed && t > min_time {
                let dir_ok = match direction {
                    Some(d) => (g - prev_g) * d > 0.0,
                    None => true,
                };
                if dir_ok {
                    if let Some(c) = refine(traj, section, prev_t, t) {
                        if c.t >= min_time
                            && (!within_halfwidth || c.xi.abs() <= section.halfwidth)
                        {
                            return Some(c);
                        }
                    }
                }
            }
            prev_t = t;
            prev_g = g;
        }
    }
    None
}

fn refine(
    traj: &Trajectory,
    section: &CrossSection,
    mut lo: f64,
    mut hi: f64,
) -> Option<SectionCrossing> {
    let mut glo = section.offset(&traj.sample(lo));
    if glo == 0.0 {
        let point = traj.sample(lo);
        return Some(SectionCrossing {
            t: lo,
            point,
            xi: section.xi(&point),
        });
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let gm = section.offset(&traj.sample(mid));
        if gm == 0.0 || hi - lo < 1e-14 * (1.0 + hi.abs()) {
            break;
        }
        if (gm < 0.0) == (glo < 0.0) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    let point = traj.sample(t);
    Some(SectionCrossing {
        t,
        point,
        xi: section.xi(&point),
    })
}
