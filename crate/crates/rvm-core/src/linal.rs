//! Small fixed-size vector/matrix helpers used throughout the crate.
//!
//! Vectors are bare `[f64; 3]`; matrices are row-major `Mat3`. Nothing here
//! allocates, and everything is `Copy`.

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

pub fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(s: f64, a: [f64; 3]) -> [f64; 3] {
    [s * a[0], s * a[1], s * a[2]]
}

pub fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_sq(a: [f64; 3]) -> f64 {
    dot(a, a)
}

/// Max-norm distance between two vectors.
pub fn max_abs_diff(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max)
}

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn zero() -> Mat3 {
        Mat3([[0.0; 3]; 3])
    }

    /// a bᵀ outer product.
    pub fn outer(a: [f64; 3], b: [f64; 3]) -> Mat3 {
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = a[i] * b[j];
            }
        }
        Mat3(m)
    }

    pub fn scale(&self, s: f64) -> Mat3 {
        let mut m = self.0;
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        Mat3(m)
    }

    pub fn add(&self, other: &Mat3) -> Mat3 {
        let mut m = self.0;
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += other.0[i][j];
            }
        }
        Mat3(m)
    }

    pub fn sub(&self, other: &Mat3) -> Mat3 {
        let mut m = self.0;
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] -= other.0[i][j];
            }
        }
        Mat3(m)
    }

    pub fn matmul(&self, other: &Mat3) -> Mat3 {
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    m[i][j] += self.0[i][k] * other.0[k][j];
                }
            }
        }
        Mat3(m)
    }

    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        [
            dot(self.0[0], v),
            dot(self.0[1], v),
            dot(self.0[2], v),
        ]
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// Spectral norm via a few power iterations on MᵀM; exact enough for
    /// diagnostics (deterministic start vector, 60 iterations).
    pub fn spectral_norm(&self) -> f64 {
        let mt = self.transpose();
        let mut v = [1.0, 0.7, 0.4]; // no special alignment with axes
        for _ in 0..60 {
            let w = mt.apply(self.apply(v));
            let n = norm(w);
            if n == 0.0 {
                return 0.0;
            }
            v = scale(1.0 / n, w);
        }
        norm(self.apply(v))
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }
}
