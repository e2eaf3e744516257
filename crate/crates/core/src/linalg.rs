//! Small dense matrices (dimension ≤ 3) for derivative cocycles.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

pub const MAX_DIM: usize = 3;

/// Matrix norm used for `log‖D_y h^n‖`. Reports always record the choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// Operator 2-norm (largest singular value).
    #[default]
    Spectral,
    Frobenius,
}

impl NormKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NormKind::Spectral => "spectral",
            NormKind::Frobenius => "frobenius",
        }
    }
}

/// Row-major `d×d` matrix with `d ≤ 3`, stored inline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat {
    dim: usize,
    data: [f64; MAX_DIM * MAX_DIM],
}

impl Mat {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "matrix dimension {dim} not in 1..=3");
        Mat { dim, data: [0.0; MAX_DIM * MAX_DIM] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Mat::zeros(dim);
        for i in 0..dim {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn scalar(v: f64) -> Self {
        let mut m = Mat::zeros(1);
        m.data[0] = v;
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let mut m = Mat::zeros(rows.len());
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), rows.len());
            for (j, v) in r.iter().enumerate() {
                m.set(i, j, *v);
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * MAX_DIM + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * MAX_DIM + j] = v;
    }

    /// `self · rhs`.
    pub fn mul(&self, rhs: &Mat) -> Mat {
        debug_assert_eq!(self.dim, rhs.dim);
        let d = self.dim;
        if d == 1 {
            return Mat::scalar(self.data[0] * rhs.data[0]);
        }
        let mut out = Mat::zeros(d);
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += self.get(i, k) * rhs.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Mat {
        let mut out = *self;
        for v in out.data.iter_mut() {
            *v *= s;
        }
        out
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        for i in 0..self.dim {
            out[i] = (0..self.dim).map(|k| self.get(i, k) * v[k]).sum();
        }
    }

    pub fn has_nan(&self) -> bool {
        self.data[..].iter().any(|v| v.is_nan())
    }

    pub fn frobenius(&self) -> f64 {
        let d = self.dim;
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += self.get(i, j).powi(2);
            }
        }
        s.sqrt()
    }

    /// Largest singular value. Closed form for `d ≤ 2`, SVD for `d = 3`.
    pub fn spectral(&self) -> f64 {
        match self.dim {
            1 => self.data[0].abs(),
            2 => {
                let (a, b, c, d) = (self.get(0, 0), self.get(0, 1), self.get(1, 0), self.get(1, 1));
                // σ_max = (sqrt((a+d)²+(b-c)²) + sqrt((a-d)²+(b+c)²)) / 2
                let s1 = ((a + d).powi(2) + (b - c).powi(2)).sqrt();
                let s2 = ((a - d).powi(2) + (b + c).powi(2)).sqrt();
                0.5 * (s1 + s2)
            }
            _ => {
                let m = Matrix3::from_fn(|i, j| self.get(i, j));
                m.singular_values().max()
            }
        }
    }

    pub fn norm(&self, kind: NormKind) -> f64 {
        match kind {
            NormKind::Spectral => self.spectral(),
            NormKind::Frobenius => self.frobenius(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_2x2_matches_power_iteration() {
        let m = Mat::from_rows(&[&[1.0, 2.0], &[-0.5, 0.3]]);
        // power iteration on MᵀM
        let mut v = [1.0, 0.3];
        for _ in 0..500 {
            let mv = [m.get(0, 0) * v[0] + m.get(0, 1) * v[1], m.get(1, 0) * v[0] + m.get(1, 1) * v[1]];
            let w = [m.get(0, 0) * mv[0] + m.get(1, 0) * mv[1], m.get(0, 1) * mv[0] + m.get(1, 1) * mv[1]];
            let n = (w[0] * w[0] + w[1] * w[1]).sqrt();
            v = [w[0] / n, w[1] / n];
        }
        let mv = [m.get(0, 0) * v[0] + m.get(0, 1) * v[1], m.get(1, 0) * v[0] + m.get(1, 1) * v[1]];
        let sigma = (mv[0] * mv[0] + mv[1] * mv[1]).sqrt();
        assert!((m.spectral() - sigma).abs() < 1e-12);
    }

    #[test]
    fn spectral_3x3_diag() {
        let m = Mat::from_rows(&[&[1.0, 0.0, 0.0], &[0.0, -4.0, 0.0], &[0.0, 0.0, 2.0]]);
        assert!((m.spectral() - 4.0).abs() < 1e-12);
        assert!((m.frobenius() - 21f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mul_identity() {
        let m = Mat::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(m.mul(&Mat::identity(2)), m);
        let p = m.mul(&m);
        assert_eq!(p.get(0, 0), 7.0);
        assert_eq!(p.get(1, 1), 22.0);
    }
}
