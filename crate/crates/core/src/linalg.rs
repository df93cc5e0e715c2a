//! Tiny fixed-size linear algebra helpers for the 2-D model.
//!
//! The whole system lives in two dimensions, so everything here is written
//! against plain arrays instead of pulling in a matrix library.

/// Real 2-vector.
pub type Vec2 = [f64; 2];
/// Real 2x2 matrix, row-major.
pub type Mat2 = [[f64; 2]; 2];

pub const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

pub fn mat_vec(m: &Mat2, v: Vec2) -> Vec2 {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn mat_sub(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [a[0][0] - b[0][0], a[0][1] - b[0][1]],
        [a[1][0] - b[1][0], a[1][1] - b[1][1]],
    ]
}

pub fn vec_sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn vec_add(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] + b[0], a[1] + b[1]]
}

pub fn vec_scale(s: f64, v: Vec2) -> Vec2 {
    [s * v[0], s * v[1]]
}

/// Euclidean norm.
pub fn vec_norm(v: Vec2) -> f64 {
    v[0].hypot(v[1])
}

pub fn vec_norm_inf(v: Vec2) -> f64 {
    v[0].abs().max(v[1].abs())
}

/// Outer product `u * v^T`.
pub fn outer(u: Vec2, v: Vec2) -> Mat2 {
    [[u[0] * v[0], u[0] * v[1]], [u[1] * v[0], u[1] * v[1]]]
}

pub fn dot(u: Vec2, v: Vec2) -> f64 {
    u[0] * v[0] + u[1] * v[1]
}

/// Largest absolute entry of a matrix.
pub fn mat_norm_inf(m: &Mat2) -> f64 {
    m.iter().flatten().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Solves `m * x = rhs` by Cramer's rule. Returns `None` for a singular matrix.
pub fn solve2(m: &Mat2, rhs: Vec2) -> Option<Vec2> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    Some([
        (rhs[0] * m[1][1] - m[0][1] * rhs[1]) / det,
        (m[0][0] * rhs[1] - rhs[0] * m[1][0]) / det,
    ])
}
