//! Symbolic Lie brackets, iterated ad-operators, and the rank conditions
//! built on them: accessibility rank, the ad-span sufficient condition for
//! inner pairs, and the Kalman controllability rank of the linearization.

use super::AnalysisError;
use crate::dynamics::{ControlAffineSystem, State, MAX_DIM};
use crate::expr::Expression;
use crate::linalg::{self, Vec3};

/// Symbolic Lie bracket `[f, g](x) = Dg(x) f(x) - Df(x) g(x)` of two vector
/// fields given componentwise over the same variable set; differentiation
/// runs over the first `f.len()` (state) variables.
pub fn lie_bracket(f: &[Expression], g: &[Expression]) -> Vec<Expression> {
    let dim = f.len();
    assert_eq!(dim, g.len(), "lie_bracket: dimension mismatch");
    (0..dim)
        .map(|i| {
            let mut sum = Expression::constant(0.0, f[i].vars());
            for j in 0..dim {
                let dg = g[i].diff(j).times(&f[j]);
                let df = f[i].diff(j).times(&g[j]);
                sum = sum.plus(&dg).minus(&df);
            }
            sum
        })
        .collect()
}

/// Iterated ad-operator: returns `[ad^0_f g, ad^1_f g, ..., ad^k_f g]`
/// where `ad^0_f g = g` and `ad^{j+1}_f g = [f, ad^j_f g]`.
pub fn ad_iterated(f: &[Expression], g: &[Expression], k: usize) -> Vec<Vec<Expression>> {
    let mut out = Vec::with_capacity(k + 1);
    out.push(g.to_vec());
    for _ in 0..k {
        let next = lie_bracket(f, out.last().unwrap());
        out.push(next);
    }
    out
}

fn eval_field(
    field: &[Expression],
    alpha: f64,
    x: &State,
    dim: usize,
) -> Result<Vec3, AnalysisError> {
    let mut env = [0.0f64; MAX_DIM + 1];
    env[..dim].copy_from_slice(&x[..dim]);
    env[dim] = alpha;
    let env = &env[..=dim];
    let mut v = [0.0; 3];
    for i in 0..dim {
        v[i] = field[i].eval(env)?;
    }
    Ok(v)
}

fn all_zero(field: &[Expression]) -> bool {
    field.iter().all(|e| e.is_zero())
}

/// Dimension at `x` of the span of the Lie algebra generated by all system
/// vector fields, with brackets built breadth-first up to `depth_cap`
/// nesting levels. Rank tolerance is `1e-10` times the largest column norm.
pub fn accessibility_rank(
    sys: &ControlAffineSystem,
    alpha: f64,
    x: &State,
    depth_cap: usize,
) -> Result<usize, AnalysisError> {
    if depth_cap < 1 {
        return Err(AnalysisError::InvalidParameter(
            "depth_cap must be at least 1".to_string(),
        ));
    }
    let dim = sys.dim();
    let mut generators: Vec<Vec<Expression>> = vec![sys.drift().to_vec()];
    for field in sys.control_fields() {
        generators.push(field.to_vec());
    }
    let mut all = generators.clone();
    let mut previous = generators.clone();
    const FIELD_CAP: usize = 128;
    for _ in 1..depth_cap {
        let mut next = Vec::new();
        'outer: for gen in &generators {
            for w in &previous {
                let b = lie_bracket(gen, w);
                if !all_zero(&b) {
                    next.push(b);
                }
                if all.len() + next.len() >= FIELD_CAP {
                    break 'outer;
                }
            }
        }
        if next.is_empty() {
            break;
        }
        all.extend(next.iter().cloned());
        previous = next;
    }
    let columns = all
        .iter()
        .map(|f| eval_field(f, alpha, x, dim))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(linalg::rank(&columns, dim, 1e-10))
}

/// Sufficient condition for the inner pair condition: true iff
/// `span{f0(y), ad^k_{f0} f_i(y) | i = 1..m, k = 0..k_max}` is all of the
/// state space.
pub fn ad_span_check(
    sys: &ControlAffineSystem,
    alpha: f64,
    y: &State,
    k_max: usize,
) -> Result<bool, AnalysisError> {
    let dim = sys.dim();
    let mut columns = vec![eval_field(sys.drift(), alpha, y, dim)?];
    for field in sys.control_fields() {
        for ad in ad_iterated(sys.drift(), field, k_max) {
            columns.push(eval_field(&ad, alpha, y, dim)?);
        }
    }
    Ok(linalg::rank(&columns, dim, 1e-10) == dim)
}

/// Controllability matrix `[B, AB, ..., A^{d-1}B]` of the linearization in
/// an equilibrium, returned as columns.
pub fn controllability_matrix(
    sys: &ControlAffineSystem,
    alpha: f64,
    location: &State,
) -> Result<Vec<Vec3>, AnalysisError> {
    let dim = sys.dim();
    let a = sys.drift_jacobian_at(alpha, location)?;
    let mut columns = Vec::with_capacity(dim * sys.n_controls());
    for field in sys.control_fields() {
        let mut col = eval_field(field, alpha, location, dim)?;
        columns.push(col);
        for _ in 1..dim {
            col = linalg::mat_vec(&a, &col, dim);
            columns.push(col);
        }
    }
    Ok(columns)
}

/// Rank of the controllability matrix of the linearization in `eq`.
pub fn kalman_rank(
    sys: &ControlAffineSystem,
    alpha: f64,
    eq: &super::EquilibriumReport,
) -> Result<usize, AnalysisError> {
    let columns = controllability_matrix(sys, alpha, &eq.location)?;
    Ok(linalg::rank(&columns, sys.dim(), 1e-10))
}
