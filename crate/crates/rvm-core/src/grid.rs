//! Uniform Cartesian scalar grids with x-fastest storage.
//!
//! One `Grid3` stores one scalar component. Staggered vector fields are
//! represented as three grids whose `origin`s differ by half-cell offsets, so
//! trilinear sampling automatically interpolates each component from its own
//! stagger location.

use crate::error::{Error, Result};

/// Scalar samples on a uniform grid: value `data[i + n[0]*(j + n[1]*k)]`
/// lives at `origin + h*(i,j,k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid3 {
    pub n: [usize; 3],
    pub origin: [f64; 3],
    pub h: f64,
    pub data: Vec<f64>,
}

impl Grid3 {
    pub fn zeros(n: [usize; 3], origin: [f64; 3], h: f64) -> Grid3 {
        assert!(h > 0.0 && n.iter().all(|&m| m >= 2));
        Grid3 {
            n,
            origin,
            h,
            data: vec![0.0; n[0] * n[1] * n[2]],
        }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.n[0] && j < self.n[1] && k < self.n[2]);
        i + self.n[0] * (j + self.n[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.idx(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let q = self.idx(i, j, k);
        self.data[q] = v;
    }

    /// Physical coordinates of node (i, j, k).
    pub fn position(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + self.h * i as f64,
            self.origin[1] + self.h * j as f64,
            self.origin[2] + self.h * k as f64,
        ]
    }

    /// Fractional index of physical point `x` along axis `a`.
    #[inline]
    pub fn frac_index(&self, x: f64, a: usize) -> f64 {
        (x - self.origin[a]) / self.h
    }

    /// Trilinear interpolation at a physical point. Errors if the point lies
    /// outside the node hull (no extrapolation).
    pub fn trilinear(&self, x: [f64; 3]) -> Result<f64> {
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let s = self.frac_index(x[a], a);
            if !(0.0..=(self.n[a] - 1) as f64).contains(&s) {
                return Err(Error::Domain(format!(
                    "sample point {x:?} outside grid along axis {a}"
                )));
            }
            let i = (s.floor() as usize).min(self.n[a] - 2);
            base[a] = i;
            frac[a] = s - i as f64;
        }
        let [i, j, k] = base;
        let [fx, fy, fz] = frac;
        let c = |di: usize, dj: usize, dk: usize| self.get(i + di, j + dj, k + dk);
        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
        let v00 = lerp(c(0, 0, 0), c(1, 0, 0), fx);
        let v10 = lerp(c(0, 1, 0), c(1, 1, 0), fx);
        let v01 = lerp(c(0, 0, 1), c(1, 0, 1), fx);
        let v11 = lerp(c(0, 1, 1), c(1, 1, 1), fx);
        Ok(lerp(lerp(v00, v10, fy), lerp(v01, v11, fy), fz))
    }

    pub fn sup_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Sum of all samples (index order, deterministic).
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// self += s * other; grids must be congruent.
    pub fn add_scaled(&mut self, s: f64, other: &Grid3) {
        assert_eq!(self.n, other.n);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += s * b;
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn trilinear_reproduces_affine_functions() {
        let mut g = Grid3::zeros([5, 6, 7], [-1.0, 0.0, 2.0], 0.5);
        for k in 0..7 {
            for j in 0..6 {
                for i in 0..5 {
                    let [x, y, z] = g.position(i, j, k);
                    g.set(i, j, k, 2.0 + 3.0 * x - 1.5 * y + 0.25 * z);
                }
            }
        }
        let p = [-0.63, 1.77, 4.21];
        let v = g.trilinear(p).unwrap();
        assert_abs_diff_eq!(v, 2.0 + 3.0 * p[0] - 1.5 * p[1] + 0.25 * p[2], epsilon = 1e-13);
    }

    #[test]
    fn trilinear_rejects_outside_points() {
        let g = Grid3::zeros([4, 4, 4], [0.0, 0.0, 0.0], 1.0);
        assert!(g.trilinear([3.0001, 1.0, 1.0]).is_err());
        assert!(g.trilinear([1.0, -0.0001, 1.0]).is_err());
        assert!(g.trilinear([3.0, 3.0, 3.0]).is_ok()); // hull boundary included
    }

    #[test]
    fn index_layout_is_x_fastest() {
        let g = Grid3::zeros([3, 4, 5], [0.0; 3], 1.0);
        assert_eq!(g.idx(1, 0, 0), 1);
        assert_eq!(g.idx(0, 1, 0), 3);
        assert_eq!(g.idx(0, 0, 1), 12);
    }
}
