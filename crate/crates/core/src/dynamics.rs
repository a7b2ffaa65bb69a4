//! Parameter-dependent control-affine systems and trajectory integration.
//!
//! A system is `x' = f0(alpha, x) + sum_i u_i f_i(alpha, x)` with control
//! values constrained to the scaled box `rho * U`, `U` a product of
//! intervals with `0` interior. Trajectories are computed by an adaptive
//! embedded Dormand-Prince 5(4) pair with mixed error control
//! `err <= tol * (1 + |x|)`, dense output by cubic Hermite interpolation,
//! and optional time reversal (integration of the negated field). Steps
//! never straddle a breakpoint of the piecewise-constant control schedule.

use crate::expr::{EvalError, Expression, VarSet};
use crate::linalg::Vec3;
use std::sync::{Arc, OnceLock};
use thiserror::Error;

/// State vector; entries beyond the system dimension stay zero.
pub type State = Vec3;

pub const MAX_DIM: usize = 3;

/// Norm-based divergence guard: integration aborts beyond this magnitude.
pub const OVERFLOW_GUARD: f64 = 1e8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("dimension must be 2 or 3, got {0}")]
    BadDimension(usize),
    #[error("at least one control channel is required")]
    NoControlChannels,
    #[error("drift must have {dim} components, got {got}")]
    DriftArity { dim: usize, got: usize },
    #[error("control field {index} must have {dim} components, got {got}")]
    FieldArity { index: usize, dim: usize, got: usize },
    #[error("control range {index} must satisfy lo < 0 < hi, got [{lo}, {hi}]")]
    RangeNotInterior { index: usize, lo: f64, hi: f64 },
    #[error("expression references undeclared variable index {index}")]
    UndeclaredVariable { index: usize },
    #[error("parse error in {what}: {source}")]
    Parse {
        what: String,
        source: crate::expr::ParseError,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("trajectory diverged at t = {t} (|x| > {guard})")]
    Divergence { t: f64, guard: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("integration span must be positive, got {0}")]
    NonPositiveSpan(f64),
    #[error("tolerance must be positive, got {0}")]
    NonPositiveTol(f64),
    #[error("control value has {got} channels, system has {want}")]
    ControlArity { want: usize, got: usize },
}

/// Control-affine system with one scalar parameter `alpha`.
///
/// Variables are the state names followed by `alpha`; every expression is
/// bound to that variable set. Immutable and shareable across threads.
#[derive(Debug)]
pub struct ControlAffineSystem {
    dim: usize,
    n_controls: usize,
    vars: Arc<VarSet>,
    drift: Vec<Expression>,
    control_fields: Vec<Vec<Expression>>,
    range: Vec<(f64, f64)>,
    drift_jacobian: OnceLock<Vec<Vec<Expression>>>,
}

impl ControlAffineSystem {
    /// Builds a system from already-parsed expressions. `vars` must list the
    /// state variables followed by `alpha`.
    pub fn new(
        vars: Arc<VarSet>,
        drift: Vec<Expression>,
        control_fields: Vec<Vec<Expression>>,
        range: Vec<(f64, f64)>,
    ) -> Result<Self, SystemError> {
        let dim = vars.len() - 1;
        if dim < 2 || dim > MAX_DIM {
            return Err(SystemError::BadDimension(dim));
        }
        if drift.len() != dim {
            return Err(SystemError::DriftArity {
                dim,
                got: drift.len(),
            });
        }
        if control_fields.is_empty() {
            return Err(SystemError::NoControlChannels);
        }
        for (i, field) in control_fields.iter().enumerate() {
            if field.len() != dim {
                return Err(SystemError::FieldArity {
                    index: i,
                    dim,
                    got: field.len(),
                });
            }
        }
        if range.len() != control_fields.len() {
            return Err(SystemError::NoControlChannels);
        }
        for (i, &(lo, hi)) in range.iter().enumerate() {
            if !(lo < 0.0 && 0.0 < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(SystemError::RangeNotInterior { index: i, lo, hi });
            }
        }
        for e in drift.iter().chain(control_fields.iter().flatten()) {
            if let Some(idx) = e.max_var_index() {
                if idx >= vars.len() {
                    return Err(SystemError::UndeclaredVariable { index: idx });
                }
            }
        }
        Ok(ControlAffineSystem {
            dim,
            n_controls: control_fields.len(),
            vars,
            drift,
            control_fields,
            range,
            drift_jacobian: OnceLock::new(),
        })
    }

    /// Convenience constructor from expression strings.
    pub fn from_strs(
        state_vars: &[&str],
        drift: &[&str],
        control_fields: &[Vec<&str>],
        range: &[(f64, f64)],
    ) -> Result<Self, SystemError> {
        let mut names: Vec<String> = state_vars.iter().map(|s| s.to_string()).collect();
        names.push("alpha".to_string());
        let vars = VarSet::new(&names);
        let parse = |text: &str, what: &str| {
            Expression::parse(text, &vars).map_err(|source| SystemError::Parse {
                what: what.to_string(),
                source,
            })
        };
        let drift = drift
            .iter()
            .enumerate()
            .map(|(i, s)| parse(s, &format!("drift[{}]", i)))
            .collect::<Result<Vec<_>, _>>()?;
        let fields = control_fields
            .iter()
            .enumerate()
            .map(|(i, f)| {
                f.iter()
                    .enumerate()
                    .map(|(j, s)| parse(s, &format!("control_field[{}][{}]", i, j)))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        ControlAffineSystem::new(vars, drift, fields, range.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_controls(&self) -> usize {
        self.n_controls
    }

    pub fn vars(&self) -> &Arc<VarSet> {
        &self.vars
    }

    pub fn drift(&self) -> &[Expression] {
        &self.drift
    }

    pub fn control_fields(&self) -> &[Vec<Expression>] {
        &self.control_fields
    }

    pub fn range(&self) -> &[(f64, f64)] {
        &self.range
    }

    /// The scaled control box `rho * U` as per-channel intervals.
    pub fn scaled_range(&self, rho: f64) -> Vec<(f64, f64)> {
        self.range
            .iter()
            .map(|&(lo, hi)| (rho * lo, rho * hi))
            .collect()
    }

    /// True if `u` lies in `rho * U` (within a tiny tolerance).
    pub fn contains_control(&self, rho: f64, u: &[f64]) -> bool {
        u.len() == self.n_controls
            && u.iter().zip(&self.range).all(|(&v, &(lo, hi))| {
                v >= rho * lo - 1e-12 && v <= rho * hi + 1e-12
            })
    }

    /// Evaluates `f0(alpha, x) + sum_i u_i f_i(alpha, x)`.
    pub fn rhs(&self, alpha: f64, x: &State, u: &[f64]) -> Result<State, EvalError> {
        let mut env = [0.0f64; MAX_DIM + 1];
        env[..self.dim].copy_from_slice(&x[..self.dim]);
        env[self.dim] = alpha;
        let env = &env[..=self.dim];
        let mut out = [0.0; MAX_DIM];
        for i in 0..self.dim {
            out[i] = self.drift[i].eval(env)?;
        }
        for (k, field) in self.control_fields.iter().enumerate() {
            let uk = u.get(k).copied().unwrap_or(0.0);
            if uk != 0.0 {
                for i in 0..self.dim {
                    out[i] += uk * field[i].eval(env)?;
                }
            }
        }
        Ok(out)
    }

    /// Symbolic Jacobian of the drift with respect to the state variables,
    /// computed once and cached.
    pub fn drift_jacobian(&self) -> &Vec<Vec<Expression>> {
        self.drift_jacobian.get_or_init(|| {
            (0..self.dim)
                .map(|i| (0..self.dim).map(|j| self.drift[i].diff(j)).collect())
                .collect()
        })
    }

    /// Evaluates the drift Jacobian at `(alpha, x)`.
    pub fn drift_jacobian_at(
        &self,
        alpha: f64,
        x: &State,
    ) -> Result<crate::linalg::Mat, EvalError> {
        let mut env = [0.0f64; MAX_DIM + 1];
        env[..self.dim].copy_from_slice(&x[..self.dim]);
        env[self.dim] = alpha;
        let env = &env[..=self.dim];
        let jac = self.drift_jacobian();
        let mut m = [[0.0; 3]; 3];
        for i in 0..self.dim {
            for j in 0..self.dim {
                m[i][j] = jac[i][j].eval(env)?;
            }
        }
        Ok(m)
    }
}

/// Piecewise-constant control schedule. The empty schedule denotes `u = 0`;
/// integration past the schedule's total duration also applies `u = 0`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControlFunction {
    segments: Vec<(f64, Vec<f64>)>,
}

impl ControlFunction {
    /// The zero control.
    pub fn zero() -> Self {
        ControlFunction::default()
    }

    /// A single constant control applied for `duration`.
    pub fn constant(value: Vec<f64>, duration: f64) -> Self {
        ControlFunction {
            segments: vec![(duration, value)],
        }
    }

    pub fn new(segments: Vec<(f64, Vec<f64>)>) -> Result<Self, IntegrateError> {
        for &(d, _) in &segments {
            if !(d > 0.0) {
                return Err(IntegrateError::NonPositiveSpan(d));
            }
        }
        Ok(ControlFunction { segments })
    }

    pub fn segments(&self) -> &[(f64, Vec<f64>)] {
        &self.segments
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|(d, _)| d).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.segments.is_empty()
    }

    /// Breakpoints and per-interval values covering `[0, span]`.
    fn intervals(&self, span: f64) -> Vec<(f64, f64, Option<&[f64]>)> {
        let mut out = Vec::new();
        let mut t = 0.0;
        for (d, v) in &self.segments {
            if t >= span {
                break;
            }
            let end = (t + d).min(span);
            if end > t {
                out.push((t, end, Some(v.as_slice())));
            }
            t += d;
        }
        if t < span {
            out.push((t, span, None));
        }
        out
    }
}

/// Why an integration run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Completed,
    Diverged,
    StepSizeUnderflow,
    /// A caller-supplied stop predicate fired at the final stored node.
    StoppedByPredicate,
}

/// A computed trajectory: strictly increasing times, states, and node
/// derivatives for dense output. `derivs_out[i]` is the derivative at node
/// `i` under the control active on `[t_i, t_{i+1})`; `derivs_in[i]` under
/// the control active on `[t_{i-1}, t_i)`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub alpha: f64,
    dim: usize,
    reversed: bool,
    times: Vec<f64>,
    states: Vec<State>,
    derivs_out: Vec<State>,
    derivs_in: Vec<State>,
    control: ControlFunction,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn reversed(&self) -> bool {
        self.reversed
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn control(&self) -> &ControlFunction {
        &self.control
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn start_state(&self) -> State {
        self.states[0]
    }

    pub fn end_state(&self) -> State {
        *self.states.last().unwrap()
    }

    pub fn deriv_out(&self, i: usize) -> State {
        self.derivs_out[i]
    }

    /// Dense output at time `t` (clamped to the stored span) by cubic
    /// Hermite interpolation on the enclosing step.
    pub fn sample(&self, t: f64) -> State {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return self.states[0];
        }
        if t >= self.times[n - 1] {
            return self.states[n - 1];
        }
        let seg = match self.times.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => return self.states[i],
            Err(i) => i - 1,
        };
        hermite(
            self.times[seg],
            self.times[seg + 1],
            &self.states[seg],
            &self.derivs_out[seg],
            &self.states[seg + 1],
            &self.derivs_in[seg + 1],
            t,
            self.dim,
        )
    }

    /// Uniformly resamples the trajectory with spacing at most `dt`,
    /// including both endpoints.
    pub fn resample(&self, dt: f64) -> Vec<(f64, State)> {
        let (t0, t1) = (self.start_time(), self.end_time());
        let span = t1 - t0;
        let n = ((span / dt).ceil() as usize).max(1);
        (0..=n)
            .map(|k| {
                let t = t0 + span * k as f64 / n as f64;
                (t, self.sample(t))
            })
            .collect()
    }

    /// Truncates at interior time `t_cut` (a sampled node is appended there)
    /// and drops everything after it.
    pub fn truncate_at(&mut self, t_cut: f64, sys: &ControlAffineSystem) {
        if t_cut >= self.end_time() {
            return;
        }
        let state = self.sample(t_cut);
        let keep = self.times.partition_point(|&t| t < t_cut);
        self.times.truncate(keep);
        self.states.truncate(keep);
        self.derivs_out.truncate(keep);
        self.derivs_in.truncate(keep);
        // derivative under the control active just before t_cut
        let rel = t_cut - self.start_time();
        let u = control_value_at(&self.control, rel);
        let mut f = sys
            .rhs(self.alpha, &state, u.unwrap_or(&[]))
            .unwrap_or([0.0; 3]);
        if self.reversed {
            for v in f.iter_mut() {
                *v = -*v;
            }
        }
        self.times.push(t_cut);
        self.states.push(state);
        self.derivs_out.push(f);
        self.derivs_in.push(f);
    }

    /// Shifts all node times by `offset`.
    pub fn shift_times(&mut self, offset: f64) {
        for t in self.times.iter_mut() {
            *t += offset;
        }
    }

    /// The same geometric path traversed in the opposite time direction:
    /// node order flipped, times mapped `t -> end - t`, derivatives negated.
    pub fn reversed_copy(&self) -> Trajectory {
        let end = self.end_time();
        let n = self.len();
        let mut times = Vec::with_capacity(n);
        let mut states = Vec::with_capacity(n);
        let mut derivs_out = Vec::with_capacity(n);
        let mut derivs_in = Vec::with_capacity(n);
        for i in (0..n).rev() {
            times.push(end - self.times[i]);
            states.push(self.states[i]);
            let neg = |v: &State| [-v[0], -v[1], -v[2]];
            derivs_out.push(neg(&self.derivs_in[i]));
            derivs_in.push(neg(&self.derivs_out[i]));
        }
        Trajectory {
            alpha: self.alpha,
            dim: self.dim,
            reversed: !self.reversed,
            times,
            states,
            derivs_out,
            derivs_in,
            control: self.control.clone(),
        }
    }
}

fn control_value_at(control: &ControlFunction, t: f64) -> Option<&[f64]> {
    let mut acc = 0.0;
    for (d, v) in control.segments() {
        acc += d;
        if t < acc {
            return Some(v);
        }
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn hermite(
    t0: f64,
    t1: f64,
    y0: &State,
    f0: &State,
    y1: &State,
    f1: &State,
    t: f64,
    dim: usize,
) -> State {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let mut out = [0.0; 3];
    for i in 0..dim {
        out[i] = h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i];
    }
    out
}

// Dormand-Prince 5(4) coefficients.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// error coefficients: 5th-order weights minus embedded 4th-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Options for [`integrate_with`].
#[derive(Debug, Clone, Copy)]
pub struct IntegrateOptions {
    /// Optional cap on the internal step size.
    pub max_step: f64,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            max_step: f64::INFINITY,
        }
    }
}

/// Integrates for duration `span`; errors on divergence or step underflow.
pub fn integrate(
    sys: &ControlAffineSystem,
    alpha: f64,
    x0: &State,
    control: &ControlFunction,
    span: f64,
    tol: f64,
    reversed: bool,
) -> Result<Trajectory, IntegrateError> {
    let (traj, term) = integrate_raw(
        sys,
        alpha,
        x0,
        control,
        span,
        tol,
        reversed,
        IntegrateOptions::default(),
        |_, _| false,
    )?;
    match term {
        Termination::Completed => Ok(traj),
        Termination::Diverged => Err(IntegrateError::Divergence {
            t: traj.end_time(),
            guard: OVERFLOW_GUARD,
        }),
        Termination::StepSizeUnderflow => Err(IntegrateError::StepSizeUnderflow {
            t: traj.end_time(),
        }),
        Termination::StoppedByPredicate => Ok(traj),
    }
}

/// Core stepper. Returns the trajectory accumulated so far together with the
/// termination reason; evaluation errors and bad arguments are the only hard
/// errors. The `stop` predicate is checked at every accepted node; when it
/// returns true the run ends with [`Termination::StoppedByPredicate`].
#[allow(clippy::too_many_arguments)]
pub fn integrate_raw(
    sys: &ControlAffineSystem,
    alpha: f64,
    x0: &State,
    control: &ControlFunction,
    span: f64,
    tol: f64,
    reversed: bool,
    opts: IntegrateOptions,
    mut stop: impl FnMut(f64, &State) -> bool,
) -> Result<(Trajectory, Termination), IntegrateError> {
    if !(span > 0.0) {
        return Err(IntegrateError::NonPositiveSpan(span));
    }
    if !(tol > 0.0) {
        return Err(IntegrateError::NonPositiveTol(tol));
    }
    for (_, v) in control.segments() {
        if v.len() != sys.n_controls() {
            return Err(IntegrateError::ControlArity {
                want: sys.n_controls(),
                got: v.len(),
            });
        }
    }
    let dim = sys.dim();
    let sign = if reversed { -1.0 } else { 1.0 };
    let zeros = vec![0.0; sys.n_controls()];
    let eval = |x: &State, u: Option<&[f64]>| -> Result<State, EvalError> {
        let mut f = sys.rhs(alpha, x, u.unwrap_or(&zeros))?;
        if reversed {
            for v in f[..dim].iter_mut() {
                *v = -*v;
            }
        }
        let _ = sign;
        Ok(f)
    };

    let mut traj = Trajectory {
        alpha,
        dim,
        reversed,
        times: vec![0.0],
        states: vec![*x0],
        derivs_out: Vec::new(),
        derivs_in: Vec::new(),
        control: control.clone(),
    };

    let min_step = 1e-14 * span;
    let mut y = *x0;
    let mut f_now = eval(&y, control_value_at(control, 0.0))?;
    traj.derivs_out.push(f_now);
    traj.derivs_in.push(f_now);
    if stop(0.0, &y) {
        return Ok((traj, Termination::StoppedByPredicate));
    }

    for (seg_start, seg_end, u) in control.intervals(span) {
        let mut t = seg_start;
        // derivative under this segment's control
        f_now = eval(&y, u)?;
        *traj.derivs_out.last_mut().unwrap() = f_now;
        let mut h = (seg_end - seg_start).min(opts.max_step).min(0.1);
        while t < seg_end {
            h = h.min(seg_end - t);
            if h < min_step {
                return Ok((traj, Termination::StepSizeUnderflow));
            }
            // stages
            let mut k = [[0.0f64; 3]; 7];
            k[0] = f_now;
            let mut failed = false;
            for s in 1..7 {
                let mut ys = y;
                for i in 0..dim {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += A[s][j] * kj[i];
                    }
                    ys[i] += h * acc;
                }
                if crate::linalg::norm(&ys, dim) > OVERFLOW_GUARD {
                    failed = true;
                    break;
                }
                k[s] = eval(&ys, u)?;
            }
            if failed {
                return Ok((traj, Termination::Diverged));
            }
            // 5th-order solution is the last stage state (FSAL): recompute
            let mut y_new = y;
            for i in 0..dim {
                let mut acc = 0.0;
                for j in 0..6 {
                    acc += A[6][j] * k[j][i];
                }
                y_new[i] += h * acc;
            }
            // error estimate
            let mut err = 0.0f64;
            for i in 0..dim {
                let mut e = 0.0;
                for (j, kj) in k.iter().enumerate() {
                    e += E[j] * kj[i];
                }
                let e = h * e;
                err += e * e;
            }
            let err = err.sqrt();
            let sc = tol * (1.0 + crate::linalg::norm(&y, dim));
            if err <= sc {
                // accept
                t += h;
                y = y_new;
                if crate::linalg::norm(&y, dim) > OVERFLOW_GUARD {
                    return Ok((traj, Termination::Diverged));
                }
                f_now = k[6]; // FSAL: derivative at the new node
                let t_abs = t;
                traj.times.push(t_abs);
                traj.states.push(y);
                traj.derivs_in.push(f_now);
                traj.derivs_out.push(f_now);
                if stop(t_abs, &y) {
                    return Ok((traj, Termination::StoppedByPredicate));
                }
                let _ = C;
            }
            // step-size update (both on accept and reject)
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * (sc / err).powf(0.2)).clamp(0.2, 5.0)
            };
            h = (h * factor).min(opts.max_step);
        }
    }
    Ok((traj, Termination::Completed))
}

/// Fixed-step classical run of the same 5th-order formula, used by
/// convergence-order tests.
pub fn integrate_fixed_step(
    sys: &ControlAffineSystem,
    alpha: f64,
    x0: &State,
    control: &ControlFunction,
    span: f64,
    n_steps: usize,
    reversed: bool,
) -> Result<State, IntegrateError> {
    let dim = sys.dim();
    let zeros = vec![0.0; sys.n_controls()];
    let eval = |x: &State, u: Option<&[f64]>| -> Result<State, EvalError> {
        let mut f = sys.rhs(alpha, x, u.unwrap_or(&zeros))?;
        if reversed {
            for v in f[..dim].iter_mut() {
                *v = -*v;
            }
        }
        Ok(f)
    };
    let h = span / n_steps as f64;
    let mut y = *x0;
    let mut t = 0.0;
    for _ in 0..n_steps {
        let u = control_value_at(control, t);
        let mut k = [[0.0f64; 3]; 7];
        k[0] = eval(&y, u)?;
        for s in 1..7 {
            let mut ys = y;
            for i in 0..dim {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += A[s][j] * kj[i];
                }
                ys[i] += h * acc;
            }
            k[s] = eval(&ys, u)?;
        }
        for i in 0..dim {
            let mut acc = 0.0;
            for j in 0..6 {
                acc += A[6][j] * k[j][i];
            }
            y[i] += h * acc;
        }
        t += h;
    }
    Ok(y)
}

/// Axis-aligned box used as an integration window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateBox {
    pub lower: State,
    pub upper: State,
    pub dim: usize,
}

impl StateBox {
    pub fn new_2d(lower: [f64; 2], upper: [f64; 2]) -> Self {
        StateBox {
            lower: [lower[0], lower[1], 0.0],
            upper: [upper[0], upper[1], 0.0],
            dim: 2,
        }
    }

    pub fn new_3d(lower: [f64; 3], upper: [f64; 3]) -> Self {
        StateBox {
            lower,
            upper,
            dim: 3,
        }
    }

    pub fn contains(&self, x: &State) -> bool {
        (0..self.dim).all(|i| x[i] >= self.lower[i] && x[i] <= self.upper[i])
    }

    /// Box centered at `c` with half-width `r` in every coordinate.
    pub fn around(c: &State, r: f64, dim: usize) -> Self {
        let mut lower = [0.0; 3];
        let mut upper = [0.0; 3];
        for i in 0..dim {
            lower[i] = c[i] - r;
            upper[i] = c[i] + r;
        }
        StateBox { lower, upper, dim }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sandstede() -> ControlAffineSystem {
        ControlAffineSystem::from_strs(
            &["x", "y"],
            &["-x + 2*y + x^2", "(2-alpha)*x - y - 3*x^2 + (3/2)*x*y"],
            &[vec!["0", "1"]],
            &[(-1.0, 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn rhs_at_equilibria() {
        let sys = sandstede();
        let r = sys.rhs(0.0, &[0.0, 0.0, 0.0], &[0.0]).unwrap();
        assert_eq!(&r[..2], &[0.0, 0.0]);
        let r = sys
            .rhs(0.0, &[2.0 / 3.0, 1.0 / 9.0, 0.0], &[0.0])
            .unwrap();
        assert!(r[0].abs() < 1e-15 && r[1].abs() < 1e-15);
        // control field is (0, 1)^T
        let r = sys.rhs(0.0, &[0.0, 0.0, 0.0], &[0.01]).unwrap();
        assert_eq!(&r[..2], &[0.0, 0.01]);
    }

    #[test]
    fn range_must_contain_zero() {
        let err = ControlAffineSystem::from_strs(
            &["x", "y"],
            &["-x", "-y"],
            &[vec!["0", "1"]],
            &[(0.0, 1.0)],
        )
        .unwrap_err();
        assert!(matches!(err, SystemError::RangeNotInterior { .. }));
    }

    #[test]
    fn equilibrium_stays_put() {
        let sys = sandstede();
        let traj = integrate(
            &sys,
            0.0,
            &[0.0, 0.0, 0.0],
            &ControlFunction::zero(),
            5.0,
            1e-9,
            false,
        )
        .unwrap();
        for s in traj.states() {
            assert!(crate::linalg::norm(s, 2) < 1e-9);
        }
    }

    #[test]
    fn reversal_identity() {
        // round trips through a saddle amplify transverse error by
        // exp(3T), so keep the span short enough for 1e-6 accuracy
        let sys = sandstede();
        let eps = 1e-3 / 2f64.sqrt();
        let x0 = [eps, eps, 0.0];
        let fwd = integrate(&sys, 0.0, &x0, &ControlFunction::zero(), 3.0, 1e-12, false).unwrap();
        let end = fwd.end_state();
        let back = integrate(&sys, 0.0, &end, &ControlFunction::zero(), 3.0, 1e-12, true).unwrap();
        let round = back.end_state();
        let d = crate::linalg::norm(&crate::linalg::sub(&round, &x0), 2);
        assert!(d < 1e-6, "round trip error {}", d);
    }

    #[test]
    fn reversed_matches_negated_field() {
        use rand::{Rng, SeedableRng};
        let sys = sandstede();
        let negated = ControlAffineSystem::from_strs(
            &["x", "y"],
            &[
                "-(-x + 2*y + x^2)",
                "-((2-alpha)*x - y - 3*x^2 + (3/2)*x*y)",
            ],
            &[vec!["0", "-1"]],
            &[(-1.0, 1.0)],
        )
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10 {
            let x0 = [rng.gen_range(-0.3..0.9), rng.gen_range(-0.4..0.4), 0.0];
            let alpha = rng.gen_range(-0.05..0.05);
            let u = rng.gen_range(-0.01..0.01);
            let cf = ControlFunction::constant(vec![u], 1.0);
            let rev = integrate(&sys, alpha, &x0, &cf, 1.0, 1e-9, true).unwrap();
            let neg = integrate(&negated, alpha, &x0, &cf, 1.0, 1e-9, false).unwrap();
            assert_eq!(rev.len(), neg.len());
            for (a, b) in rev.states().iter().zip(neg.states()) {
                let d = crate::linalg::norm(&crate::linalg::sub(a, b), 2);
                assert!(d < 1e-12, "state mismatch {}", d);
            }
        }
    }

    #[test]
    fn reversed_equals_negated_field() {
        // x' = -x reversed is x' = +x; check against closed forms
        let sys = ControlAffineSystem::from_strs(
            &["x", "y"],
            &["-x", "-y"],
            &[vec!["0", "1"]],
            &[(-1.0, 1.0)],
        )
        .unwrap();
        let traj = integrate(
            &sys,
            0.0,
            &[1.0, 2.0, 0.0],
            &ControlFunction::zero(),
            1.0,
            1e-12,
            true,
        )
        .unwrap();
        let end = traj.end_state();
        assert!((end[0] - 1.0f64.exp()).abs() < 1e-9);
        assert!((end[1] - 2.0 * 1.0f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn homoclinic_orbit_reaches_saddle() {
        // from (1,0) the uncontrolled alpha=0 flow follows the lower branch
        // of x^2(1-x)-y^2=0 into the saddle
        let sys = sandstede();
        let traj = integrate(
            &sys,
            0.0,
            &[1.0, 0.0, 0.0],
            &ControlFunction::zero(),
            30.0,
            1e-10,
            false,
        )
        .unwrap();
        let end = traj.end_state();
        assert!(crate::linalg::norm(&end, 2) < 1e-4, "end {:?}", end);
        // residual of the invariant curve stays small along the whole path
        for (_, s) in traj.resample(0.01) {
            let res = s[0] * s[0] * (1.0 - s[0]) - s[1] * s[1];
            assert!(res.abs() < 1e-5, "residual {} at {:?}", res, s);
        }
    }

    #[test]
    fn convergence_order_at_least_four() {
        let sys = ControlAffineSystem::from_strs(
            &["x", "y"],
            &["-x", "-y"],
            &[vec!["0", "1"]],
            &[(-1.0, 1.0)],
        )
        .unwrap();
        let exact = (-2.0f64).exp();
        let mut errs = Vec::new();
        for n in [20usize, 40] {
            let end = integrate_fixed_step(
                &sys,
                0.0,
                &[1.0, 1.0, 0.0],
                &ControlFunction::zero(),
                2.0,
                n,
                false,
            )
            .unwrap();
            errs.push((end[0] - exact).abs());
        }
        let order = (errs[0] / errs[1]).log2();
        assert!(order >= 4.0, "observed order {}", order);
    }

    #[test]
    fn halving_tol_reduces_error() {
        let sys = sandstede();
        let run = |tol: f64| {
            integrate(
                &sys,
                0.0,
                &[1.0, 0.0, 0.0],
                &ControlFunction::zero(),
                10.0,
                tol,
                false,
            )
            .unwrap()
            .end_state()
        };
        let reference = run(1e-13);
        let e1 = crate::linalg::norm(&crate::linalg::sub(&run(1e-6), &reference), 2);
        let e2 = crate::linalg::norm(&crate::linalg::sub(&run(5e-7), &reference), 2);
        assert!(e2 <= e1 * 1.5, "e1 {} e2 {}", e1, e2);
    }

    #[test]
    fn control_schedule_segments_respected() {
        let sys = sandstede();
        // u = +1 for 0.5, then -1 for 0.5; steps must not straddle t=0.5
        let cf = ControlFunction::new(vec![(0.5, vec![1.0]), (0.5, vec![-1.0])]).unwrap();
        let traj = integrate(&sys, 0.0, &[0.0, 0.0, 0.0], &cf, 1.0, 1e-9, false).unwrap();
        assert!(traj.times().iter().any(|&t| (t - 0.5).abs() < 1e-12));
        // against a single long schedule the piecewise one must differ
        let traj0 = integrate(
            &sys,
            0.0,
            &[0.0, 0.0, 0.0],
            &ControlFunction::constant(vec![1.0], 1.0),
            1.0,
            1e-9,
            false,
        )
        .unwrap();
        assert!(
            crate::linalg::norm(
                &crate::linalg::sub(&traj.end_state(), &traj0.end_state()),
                2
            ) > 1e-3
        );
    }

    #[test]
    fn schedule_shorter_than_span_extends_with_zero() {
        let sys = sandstede();
        let cf = ControlFunction::constant(vec![0.5], 0.3);
        let a = integrate(&sys, 0.0, &[0.2, 0.1, 0.0], &cf, 1.0, 1e-10, false).unwrap();
        let cf2 = ControlFunction::new(vec![(0.3, vec![0.5]), (0.7, vec![0.0])]).unwrap();
        let b = integrate(&sys, 0.0, &[0.2, 0.1, 0.0], &cf2, 1.0, 1e-10, false).unwrap();
        let d = crate::linalg::norm(&crate::linalg::sub(&a.end_state(), &b.end_state()), 2);
        assert!(d < 1e-9);
    }

    #[test]
    fn divergence_detected() {
        let sys = ControlAffineSystem::from_strs(
            &["x", "y"],
            &["x^2", "0"],
            &[vec!["0", "1"]],
            &[(-1.0, 1.0)],
        )
        .unwrap();
        let err = integrate(
            &sys,
            0.0,
            &[1.0, 0.0, 0.0],
            &ControlFunction::zero(),
            10.0,
            1e-9,
            false,
        )
        .unwrap_err();
        assert!(matches!(err, IntegrateError::Divergence { .. }));
    }

    #[test]
    fn dense_output_accuracy() {
        let sys = sandstede();
        let traj = integrate(
            &sys,
            0.0,
            &[1.0, 0.0, 0.0],
            &ControlFunction::zero(),
            5.0,
            1e-10,
            false,
        )
        .unwrap();
        // dense samples must satisfy the invariant-curve residual as well
        for k in 0..500 {
            let t = 5.0 * k as f64 / 500.0;
            let s = traj.sample(t);
            let res = s[0] * s[0] * (1.0 - s[0]) - s[1] * s[1];
            assert!(res.abs() < 1e-6, "residual {} at t={}", res, t);
        }
    }

    #[test]
    fn reversed_copy_round_trip() {
        let sys = sandstede();
        let traj = integrate(
            &sys,
            0.0,
            &[1.0, 0.0, 0.0],
            &ControlFunction::zero(),
            3.0,
            1e-9,
            false,
        )
        .unwrap();
        let rev = traj.reversed_copy();
        assert_eq!(rev.len(), traj.len());
        assert_eq!(rev.start_state(), traj.end_state());
        assert_eq!(rev.end_state(), traj.start_state());
        // midpoint sampling agrees with the mirrored time
        let tm = 1.234;
        let a = traj.sample(tm);
        let b = rev.sample(traj.end_time() - tm);
        assert!(crate::linalg::norm(&crate::linalg::sub(&a, &b), 2) < 1e-12);
    }
}
