//! Small dense linear algebra for state dimensions 2 and 3: linear solves,
//! eigenvalues via closed-form characteristic polynomials (polished by a few
//! Newton steps), real eigenvectors, and a rank-revealing factorization.

use num_complex::Complex64;

/// Row-major d x d matrix stored in a fixed 3x3 block.
pub type Mat = [[f64; 3]; 3];

/// Fixed-size state vector; entries beyond the active dimension are zero.
pub type Vec3 = [f64; 3];

pub fn mat_vec(m: &Mat, v: &Vec3, dim: usize) -> Vec3 {
    let mut out = [0.0; 3];
    for i in 0..dim {
        for j in 0..dim {
            out[i] += m[i][j] * v[j];
        }
    }
    out
}

pub fn norm(v: &Vec3, dim: usize) -> f64 {
    v[..dim].iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn dot(a: &Vec3, b: &Vec3, dim: usize) -> f64 {
    (0..dim).map(|i| a[i] * b[i]).sum()
}

pub fn scale(v: &Vec3, s: f64) -> Vec3 {
    [v[0] * s, v[1] * s, v[2] * s]
}

pub fn add(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// Solves `m x = rhs` by Gaussian elimination with partial pivoting.
/// Returns `None` if a pivot falls below `1e-14` times the row scale.
pub fn solve(m: &Mat, rhs: &Vec3, dim: usize) -> Option<Vec3> {
    let mut a = [[0.0f64; 4]; 3];
    for i in 0..dim {
        a[i][..dim].copy_from_slice(&m[i][..dim]);
        a[i][dim] = rhs[i];
    }
    let scale_ref: f64 = (0..dim)
        .flat_map(|i| (0..dim).map(move |j| (i, j)))
        .map(|(i, j)| m[i][j].abs())
        .fold(0.0, f64::max)
        .max(1e-300);
    for col in 0..dim {
        let (piv, pmax) = (col..dim)
            .map(|r| (r, a[r][col].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        if pmax < 1e-14 * scale_ref {
            return None;
        }
        a.swap(col, piv);
        for r in col + 1..dim {
            let f = a[r][col] / a[col][col];
            for c in col..=dim {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    let mut x = [0.0; 3];
    for i in (0..dim).rev() {
        let mut s = a[i][dim];
        for j in i + 1..dim {
            s -= a[i][j] * x[j];
        }
        x[i] = s / a[i][i];
    }
    Some(x)
}

fn poly_eval(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    // coeffs ordered from the leading power down; returns (p(z), p'(z))
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coeffs {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

fn polish_root(coeffs: &[f64], mut z: Complex64) -> Complex64 {
    for _ in 0..4 {
        let (p, dp) = poly_eval(coeffs, z);
        if dp.norm() == 0.0 {
            break;
        }
        let step = p / dp;
        z -= step;
        if step.norm() < 1e-15 * (1.0 + z.norm()) {
            break;
        }
    }
    z
}

/// Eigenvalues of the leading `dim x dim` block, sorted by descending real
/// part (ties by descending imaginary part).
pub fn eigenvalues(m: &Mat, dim: usize) -> Vec<Complex64> {
    let mut eigs = match dim {
        2 => {
            let tr = m[0][0] + m[1][1];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            let disc = tr * tr - 4.0 * det;
            if disc >= 0.0 {
                let s = disc.sqrt();
                vec![
                    Complex64::new((tr + s) / 2.0, 0.0),
                    Complex64::new((tr - s) / 2.0, 0.0),
                ]
            } else {
                let s = (-disc).sqrt() / 2.0;
                vec![
                    Complex64::new(tr / 2.0, s),
                    Complex64::new(tr / 2.0, -s),
                ]
            }
        }
        3 => {
            // characteristic polynomial: l^3 - c2 l^2 + c1 l - c0
            let c2 = m[0][0] + m[1][1] + m[2][2];
            let c1 = m[0][0] * m[1][1] - m[0][1] * m[1][0]
                + m[0][0] * m[2][2]
                - m[0][2] * m[2][0]
                + m[1][1] * m[2][2]
                - m[1][2] * m[2][1];
            let c0 = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
            // depressed cubic: l = t + c2/3, t^3 + p t + q = 0
            let shift = c2 / 3.0;
            let p = c1 - c2 * c2 / 3.0;
            let q = -c0 + c1 * shift - 2.0 * shift * shift * shift;
            let coeffs = [1.0, -c2, c1, -c0];
            let half_q = q / 2.0;
            let third_p = p / 3.0;
            let disc = half_q * half_q + third_p * third_p * third_p;
            let roots_t: Vec<Complex64> = if disc > 0.0 {
                // one real root, complex pair
                let s = disc.sqrt();
                let u = (-half_q + s).cbrt();
                let v = (-half_q - s).cbrt();
                let real = u + v;
                let re_pair = -real / 2.0;
                let im_pair = (u - v) * 3f64.sqrt() / 2.0;
                vec![
                    Complex64::new(real, 0.0),
                    Complex64::new(re_pair, im_pair),
                    Complex64::new(re_pair, -im_pair),
                ]
            } else {
                // three real roots (trigonometric form)
                let r = (-third_p).max(0.0).sqrt();
                if r == 0.0 {
                    vec![Complex64::new(0.0, 0.0); 3]
                } else {
                    let arg = (-half_q / (r * r * r)).clamp(-1.0, 1.0);
                    let phi = arg.acos() / 3.0;
                    (0..3)
                        .map(|k| {
                            let ang = phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0;
                            Complex64::new(2.0 * r * ang.cos(), 0.0)
                        })
                        .collect()
                }
            };
            roots_t
                .into_iter()
                .map(|t| polish_root(&coeffs, t + shift))
                .collect()
        }
        _ => panic!("eigenvalues: dimension must be 2 or 3"),
    };
    eigs.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    eigs
}

/// Real eigenvector for a real eigenvalue of the leading block, normalized.
pub fn real_eigenvector(m: &Mat, lambda: f64, dim: usize) -> Option<Vec3> {
    let mut a = *m;
    for i in 0..dim {
        a[i][i] -= lambda;
    }
    let v = match dim {
        2 => {
            // rows of (A - lambda I) are orthogonal to the eigenvector
            let cands = [[-a[0][1], a[0][0], 0.0], [-a[1][1], a[1][0], 0.0]];
            *cands
                .iter()
                .max_by(|x, y| norm(x, 2).total_cmp(&norm(y, 2)))
                .unwrap()
        }
        3 => {
            // cross products of row pairs
            let row = |i: usize| [a[i][0], a[i][1], a[i][2]];
            let cross = |u: Vec3, v: Vec3| {
                [
                    u[1] * v[2] - u[2] * v[1],
                    u[2] * v[0] - u[0] * v[2],
                    u[0] * v[1] - u[1] * v[0],
                ]
            };
            let cands = [
                cross(row(0), row(1)),
                cross(row(0), row(2)),
                cross(row(1), row(2)),
            ];
            *cands
                .iter()
                .max_by(|x, y| norm(x, 3).total_cmp(&norm(y, 3)))
                .unwrap()
        }
        _ => return None,
    };
    let n = norm(&v, dim);
    if n < 1e-12 {
        return None;
    }
    Some(scale(&v, 1.0 / n))
}

/// Rank of the span of `columns` via modified Gram-Schmidt with column
/// pivoting; the tolerance is `tol_factor` times the largest column norm.
pub fn rank(columns: &[Vec3], dim: usize, tol_factor: f64) -> usize {
    let mut cols: Vec<Vec3> = columns.to_vec();
    let max_norm = cols
        .iter()
        .map(|c| norm(c, dim))
        .fold(0.0, f64::max);
    if max_norm == 0.0 {
        return 0;
    }
    let tol = tol_factor * max_norm;
    let mut r = 0;
    while r < dim {
        let (best, best_norm) = match cols
            .iter()
            .enumerate()
            .map(|(i, c)| (i, norm(c, dim)))
            .max_by(|x, y| x.1.total_cmp(&y.1))
        {
            Some(b) => b,
            None => break,
        };
        if best_norm <= tol {
            break;
        }
        let q = scale(&cols.swap_remove(best), 1.0 / best_norm);
        for c in cols.iter_mut() {
            let proj = dot(c, &q, dim);
            for k in 0..dim {
                c[k] -= proj * q[k];
            }
        }
        r += 1;
    }
    r
}
