use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// A point or velocity in n-dimensional Euclidean space.
///
/// Serialized as a plain JSON array. Arithmetic panics on dimension mismatch,
/// which is a programming error rather than a data error: scenario loading
/// checks dimensions up front.
#[derive(Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct VecN(Vec<f64>);

impl VecN {
    pub fn new(components: Vec<f64>) -> Self {
        VecN(components)
    }

    pub fn zeros(n: usize) -> Self {
        VecN(vec![0.0; n])
    }

    pub fn from_slice(s: &[f64]) -> Self {
        VecN(s.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn dot(&self, other: &VecN) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn inf_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn distance(&self, other: &VecN) -> f64 {
        (self - other).norm()
    }

    /// Componentwise clamp into `[-limit, limit]`.
    pub fn clamp_inf(&self, limit: f64) -> VecN {
        VecN(self.0.iter().map(|c| c.clamp(-limit, limit)).collect())
    }

    /// Returns `self + s * other`.
    pub fn axpy(&self, s: f64, other: &VecN) -> VecN {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        VecN(self.0.iter().zip(&other.0).map(|(a, b)| a + s * b).collect())
    }

    /// Pads (with zeros) or truncates to three components, for CSV/plot output.
    pub fn xyz(&self) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (o, c) in out.iter_mut().zip(&self.0) {
            *o = *c;
        }
        out
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Largest absolute component.
pub fn inf_norm(v: &VecN) -> f64 {
    v.inf_norm()
}

impl fmt::Debug for VecN {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl From<Vec<f64>> for VecN {
    fn from(v: Vec<f64>) -> Self {
        VecN(v)
    }
}

impl<const N: usize> From<[f64; N]> for VecN {
    fn from(v: [f64; N]) -> Self {
        VecN(v.to_vec())
    }
}

impl Index<usize> for VecN {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for VecN {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait<&VecN> for &VecN {
            type Output = VecN;
            fn $method(self, rhs: &VecN) -> VecN {
                assert_eq!(self.dim(), rhs.dim(), "dimension mismatch");
                VecN(self.0.iter().zip(&rhs.0).map(|(a, b)| a $op b).collect())
            }
        }
        impl $trait<VecN> for VecN {
            type Output = VecN;
            fn $method(self, rhs: VecN) -> VecN {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&VecN> for VecN {
            type Output = VecN;
            fn $method(self, rhs: &VecN) -> VecN {
                (&self).$method(rhs)
            }
        }
    };
}

binop!(Add, add, +);
binop!(Sub, sub, -);

impl AddAssign<&VecN> for VecN {
    fn add_assign(&mut self, rhs: &VecN) {
        assert_eq!(self.dim(), rhs.dim(), "dimension mismatch");
        for (a, b) in self.0.iter_mut().zip(&rhs.0) {
            *a += b;
        }
    }
}

impl SubAssign<&VecN> for VecN {
    fn sub_assign(&mut self, rhs: &VecN) {
        assert_eq!(self.dim(), rhs.dim(), "dimension mismatch");
        for (a, b) in self.0.iter_mut().zip(&rhs.0) {
            *a -= b;
        }
    }
}

impl Mul<f64> for &VecN {
    type Output = VecN;
    fn mul(self, s: f64) -> VecN {
        VecN(self.0.iter().map(|a| a * s).collect())
    }
}

impl Mul<f64> for VecN {
    type Output = VecN;
    fn mul(self, s: f64) -> VecN {
        &self * s
    }
}

impl Neg for &VecN {
    type Output = VecN;
    fn neg(self) -> VecN {
        self * -1.0
    }
}

impl Neg for VecN {
    type Output = VecN;
    fn neg(self) -> VecN {
        &self * -1.0
    }
}
