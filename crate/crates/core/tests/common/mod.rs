//! Independent slider-crank formulas on plain arrays, used as an oracle
//! against the library's nalgebra implementation.

#![allow(dead_code)]

pub const L1: f64 = 0.153;
pub const L2: f64 = 0.306;
pub const A: f64 = 0.05;
pub const B: f64 = 0.025;
pub const C: f64 = 0.001;
pub const D: f64 = 2.0 * B + C;
pub const M1: f64 = 0.038;
pub const M2: f64 = 0.038;
pub const M3: f64 = 0.076;
pub const J1: f64 = 7.4e-5;
pub const J2: f64 = 5.9e-4;
pub const J3: f64 = 2.7e-6;
pub const G: f64 = 9.81;

pub fn mass(q: [f64; 3]) -> [[f64; 3]; 3] {
    let k = L1 * L2 * (q[0] - q[1]).cos() * (M2 / 2.0 + M3);
    [
        [J1 + L1 * L1 * (M1 / 4.0 + M2 + M3), k, 0.0],
        [k, J2 + L2 * L2 * (M2 / 4.0 + M3), 0.0],
        [0.0, 0.0, J3],
    ]
}

pub fn forces(q: [f64; 3], w: [f64; 3]) -> [f64; 3] {
    let s = L1 * L2 * (q[0] - q[1]).sin() * (M2 / 2.0 + M3);
    [
        -s * w[1] * w[1] - G * L1 * q[0].cos() * (M1 / 2.0 + M2 + M3),
        s * w[0] * w[0] - G * L2 * q[1].cos() * (M2 / 2.0 + M3),
        0.0,
    ]
}

pub fn gaps(q: [f64; 3]) -> [f64; 4] {
    let y = L1 * q[0].sin() + L2 * q[1].sin();
    let (s3, c3) = q[2].sin_cos();
    [
        D / 2.0 - y + A * s3 - B * c3,
        D / 2.0 - y - A * s3 - B * c3,
        D / 2.0 + y - A * s3 - B * c3,
        D / 2.0 + y + A * s3 - B * c3,
    ]
}

/// Rows are contacts, columns coordinates.
pub fn gap_jacobian(q: [f64; 3]) -> [[f64; 3]; 4] {
    let (c1, c2) = (L1 * q[0].cos(), L2 * q[1].cos());
    let (s3, c3) = q[2].sin_cos();
    [
        [-c1, -c2, A * c3 + B * s3],
        [-c1, -c2, -A * c3 + B * s3],
        [c1, c2, -A * c3 + B * s3],
        [c1, c2, A * c3 + B * s3],
    ]
}

pub fn det3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Cramer's rule.
pub fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> [f64; 3] {
    let d = det3(m);
    let mut x = [0.0; 3];
    for (k, xk) in x.iter_mut().enumerate() {
        let mut mk = m;
        for i in 0..3 {
            mk[i][k] = b[i];
        }
        *xk = det3(mk) / d;
    }
    x
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}
