//! Isotropic linear elasticity in Lamé form.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Symmetric `d x d` tensor stored in a padded 3x3 array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymTensor {
    dim: usize,
    m: [[f64; 3]; 3],
}

impl SymTensor {
    pub fn zeros(dim: usize) -> Self {
        SymTensor { dim, m: [[0.0; 3]; 3] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut t = Self::zeros(dim);
        for i in 0..dim {
            t.m[i][i] = 1.0;
        }
        t
    }

    /// Builds from the upper-left `d x d` block; rejects asymmetric input.
    pub fn from_matrix(dim: usize, m: [[f64; 3]; 3]) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::param("dim", format!("must be 2 or 3, got {dim}")));
        }
        let mut out = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                let (a, b) = (m[i][j], m[j][i]);
                if (a - b).abs() > 1e-14 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::param("tensor", format!("not symmetric at ({i},{j})")));
                }
                out.m[i][j] = 0.5 * (a + b);
            }
        }
        Ok(out)
    }

    /// `a ⊗ b + b ⊗ a` scaled by `scale` (the shear loads use this form).
    pub fn sym_pair(dim: usize, i: usize, j: usize, scale: f64) -> Self {
        let mut t = Self::zeros(dim);
        t.m[i][j] += scale;
        t.m[j][i] += scale;
        t
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    pub fn as_array(&self) -> &[[f64; 3]; 3] {
        &self.m
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.m[i][i]).sum()
    }

    /// Frobenius inner product `a : b`.
    pub fn ddot(&self, other: &SymTensor) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.m[i][j] * other.m[i][j];
            }
        }
        s
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = *self;
        for row in out.m.iter_mut() {
            for x in row.iter_mut() {
                *x *= s;
            }
        }
        out
    }

    pub fn add(&self, other: &SymTensor) -> Self {
        let mut out = *self;
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] += other.m[i][j];
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.m.iter().flatten().all(|&x| x == 0.0)
    }

    /// Deviatoric part `t - tr(t)/d I`.
    pub fn deviator(&self) -> Self {
        let mean = self.trace() / self.dim as f64;
        let mut out = *self;
        for i in 0..self.dim {
            out.m[i][i] -= mean;
        }
        out
    }

    pub(crate) fn raw_mut(&mut self) -> &mut [[f64; 3]; 3] {
        &mut self.m
    }
}

/// Isotropic material stored by its Lamé parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsotropicMaterial {
    mu: f64,
    lambda: f64,
}

impl IsotropicMaterial {
    pub fn new(mu: f64, lambda: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Material(format!("shear modulus mu must be positive, got {mu}")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Material(format!("Lamé lambda must be positive, got {lambda}")));
        }
        Ok(IsotropicMaterial { mu, lambda })
    }

    /// Standard 3D conversion from Young's modulus and Poisson ratio.
    pub fn from_young_poisson(young: f64, poisson: f64) -> Result<Self> {
        if !(young > 0.0 && young.is_finite()) {
            return Err(Error::Material(format!("Young's modulus must be positive, got {young}")));
        }
        if !(poisson > 0.0 && poisson < 0.5) {
            return Err(Error::Material(format!(
                "Poisson ratio must lie in (0, 0.5) so that lambda > 0, got {poisson}"
            )));
        }
        let mu = young / (2.0 * (1.0 + poisson));
        let lambda = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
        Self::new(mu, lambda)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn young(&self) -> f64 {
        self.mu * (3.0 * self.lambda + 2.0 * self.mu) / (self.lambda + self.mu)
    }

    pub fn poisson(&self) -> f64 {
        self.lambda / (2.0 * (self.lambda + self.mu))
    }

    /// `σ = 2μ ε + λ tr(ε) I`.
    pub fn stress(&self, eps: &SymTensor) -> SymTensor {
        let mut s = eps.scaled(2.0 * self.mu);
        let tr = eps.trace();
        let d = eps.dim();
        let m = s.raw_mut();
        for (i, row) in m.iter_mut().enumerate().take(d) {
            row[i] += self.lambda * tr;
        }
        s
    }

    /// `C ε : ε = 2μ ε:ε + λ (tr ε)^2`.
    #[inline]
    pub fn energy_density(&self, eps: &SymTensor) -> f64 {
        let tr = eps.trace();
        2.0 * self.mu * eps.ddot(eps) + self.lambda * tr * tr
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn young_poisson_conversion() {
        let m = IsotropicMaterial::from_young_poisson(10.0, 0.25).unwrap();
        assert!((m.mu() - 4.0).abs() < 1e-14);
        assert!((m.lambda() - 4.0).abs() < 1e-14);
        let m = IsotropicMaterial::from_young_poisson(2.6, 0.3).unwrap();
        assert!((m.mu() - 1.0).abs() < 1e-15);
        assert!(IsotropicMaterial::from_young_poisson(10.0, 0.6).is_err());
        assert!(IsotropicMaterial::from_young_poisson(10.0, 0.0).is_err());
        assert!(IsotropicMaterial::from_young_poisson(-1.0, 0.2).is_err());
        assert!(IsotropicMaterial::new(1.0, 0.0).is_err());
    }

    #[test]
    fn stress_examples() {
        let m = IsotropicMaterial::new(4.0, 4.0).unwrap();
        let s = m.stress(&SymTensor::identity(3));
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 20.0 } else { 0.0 };
                assert_eq!(s.get(i, j), expect);
            }
        }
        let shear = SymTensor::sym_pair(3, 0, 1, 1.0);
        let s = m.stress(&shear);
        assert_eq!(s, shear.scaled(8.0));
        assert!(m.stress(&SymTensor::zeros(3)).is_zero());
    }

    #[test]
    fn energy_examples() {
        let m = IsotropicMaterial::new(4.0, 4.0).unwrap();
        assert_eq!(m.energy_density(&SymTensor::identity(3)), 60.0);
        let a12 = SymTensor::sym_pair(3, 0, 1, -0.25);
        assert!((m.energy_density(&a12) - 1.0).abs() < 1e-15);
        assert_eq!(m.energy_density(&SymTensor::zeros(3)), 0.0);
    }

    #[test]
    fn rejects_asymmetric() {
        let mut a = [[0.0; 3]; 3];
        a[0][1] = 1.0;
        assert!(SymTensor::from_matrix(3, a).is_err());
    }

    fn sym_strategy() -> impl Strategy<Value = SymTensor> {
        prop::array::uniform6(-1.0f64..1.0).prop_map(|x| {
            let m = [[x[0], x[3], x[4]], [x[3], x[1], x[5]], [x[4], x[5], x[2]]];
            SymTensor::from_matrix(3, m).unwrap()
        })
    }

    proptest! {
        #[test]
        fn energy_equals_stress_contraction(eps in sym_strategy(), mu in 0.1f64..10.0, lambda in 0.1f64..10.0) {
            let m = IsotropicMaterial::new(mu, lambda).unwrap();
            let w = m.energy_density(&eps);
            let s = m.stress(&eps).ddot(&eps);
            prop_assert!((w - s).abs() <= 1e-12 * (1.0 + w.abs()));
            if !eps.is_zero() {
                prop_assert!(w > 0.0);
            }
        }

        #[test]
        fn young_poisson_round_trip(e in 0.1f64..500.0, nu in 0.01f64..0.49) {
            let m = IsotropicMaterial::from_young_poisson(e, nu).unwrap();
            prop_assert!((m.young() - e).abs() <= 1e-12 * e);
            prop_assert!((m.poisson() - nu).abs() <= 1e-12 * nu.max(1e-3));
        }
    }
}
