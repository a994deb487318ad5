//! Nodal scalar fields on a [`GridDomain`].

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Coords, GridDomain, MAX_DIM};

/// One real value per grid node. Masked nodes hold `NaN`.
#[derive(Clone, Debug)]
pub struct ScalarField {
    domain: Arc<GridDomain>,
    values: Vec<f64>,
}

impl ScalarField {
    /// Wraps nodal values. Values at masked nodes are replaced by `NaN`;
    /// every unmasked value must be finite.
    pub fn new(domain: Arc<GridDomain>, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::Argument(format!(
                "field has {} values for {} nodes",
                values.len(),
                domain.len()
            )));
        }
        for (i, v) in values.iter_mut().enumerate() {
            if !domain.is_active(i) {
                *v = f64::NAN;
            } else if !v.is_finite() {
                return Err(Error::Data(format!("non-finite value {v} at node {i}")));
            }
        }
        Ok(Self { domain, values })
    }

    pub fn from_fn<F>(domain: Arc<GridDomain>, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64,
    {
        let dim = domain.dim();
        let values = (0..domain.len())
            .map(|i| {
                if domain.is_active(i) {
                    f(&domain.coords(i)[..dim])
                } else {
                    f64::NAN
                }
            })
            .collect();
        Self { domain, values }
    }

    pub fn constant(domain: Arc<GridDomain>, c: f64) -> Self {
        Self::from_fn(domain, |_| c)
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn same_domain(&self, other: &ScalarField) -> bool {
        Arc::ptr_eq(&self.domain, &other.domain) || *self.domain == *other.domain
    }

    /// Nodewise `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &ScalarField, b: f64) -> Result<ScalarField> {
        if !self.same_domain(other) {
            return Err(Error::Argument("fields live on different domains".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(ScalarField {
            domain: self.domain.clone(),
            values,
        })
    }

    pub fn scaled(&self, a: f64) -> ScalarField {
        self.map(|v| a * v)
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> ScalarField {
        ScalarField {
            domain: self.domain.clone(),
            values: self
                .values
                .iter()
                .map(|&v| if v.is_nan() { v } else { f(v) })
                .collect(),
        }
    }

    /// Largest absolute nodewise difference over unmasked nodes.
    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        self.domain
            .active_nodes()
            .map(|i| (self.values[i] - other.values[i]).abs())
            .fold(0.0, f64::max)
    }

    /// Gradient at a node: central differences where both axis neighbors
    /// are unmasked, one-sided where only one is, zero otherwise.
    pub fn central_gradient(&self, idx: usize) -> Coords {
        let d = &self.domain;
        let mut g = [0.0; MAX_DIM];
        for (a, slot) in g.iter_mut().enumerate().take(d.dim()) {
            let mut e = [0isize; MAX_DIM];
            e[a] = 1;
            let fwd = d.neighbor(idx, &e).filter(|&n| d.is_active(n));
            e[a] = -1;
            let bwd = d.neighbor(idx, &e).filter(|&n| d.is_active(n));
            *slot = match (bwd, fwd) {
                (Some(b), Some(f)) => (self.values[f] - self.values[b]) / (2.0 * d.h()),
                (None, Some(f)) => (self.values[f] - self.values[idx]) / d.h(),
                (Some(b), None) => (self.values[idx] - self.values[b]) / d.h(),
                (None, None) => 0.0,
            };
        }
        g
    }

    /// Multilinear interpolation over unmasked cell corners.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        self.interpolate_with(x, |i| self.values[i])
    }

    /// Multilinear interpolation of the nodal central gradients.
    pub fn interpolate_gradient(&self, x: &[f64]) -> Coords {
        let dim = self.domain.dim();
        let mut out = [0.0; MAX_DIM];
        let mut wsum = 0.0;
        for (i, w) in self.domain.cell_weights(x) {
            if !self.domain.is_active(i) {
                continue;
            }
            let g = self.central_gradient(i);
            for a in 0..dim {
                out[a] += w * g[a];
            }
            wsum += w;
        }
        if wsum > 0.0 {
            for v in out.iter_mut().take(dim) {
                *v /= wsum;
            }
        }
        out
    }

    fn interpolate_with<G: Fn(usize) -> f64>(&self, x: &[f64], value: G) -> f64 {
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for (i, w) in self.domain.cell_weights(x) {
            if self.domain.is_active(i) {
                acc += w * value(i);
                wsum += w;
            }
        }
        if wsum > 0.0 {
            acc / wsum
        } else {
            f64::NAN
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Arc<GridDomain> {
        Arc::new(GridDomain::from_extent(&[-1.0, -1.0], &[2.0, 2.0], 0.25).unwrap())
    }

    #[test]
    fn gradient_of_linear_is_exact() {
        let f = ScalarField::from_fn(grid(), |x| 0.3 * x[0] - 1.5 * x[1] + 2.0);
        for i in f.domain().active_nodes() {
            let g = f.central_gradient(i);
            assert!((g[0] - 0.3).abs() < 1e-12);
            assert!((g[1] + 1.5).abs() < 1e-12);
        }
        let gi = f.interpolate_gradient(&[0.1, -0.33]);
        assert!((gi[0] - 0.3).abs() < 1e-12 && (gi[1] + 1.5).abs() < 1e-12);
        let v = f.interpolate(&[0.1, -0.33]);
        assert!((v - (0.03 + 0.495 + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn masked_values_are_nan() {
        let d = Arc::new(
            GridDomain::from_extent(&[-1.0, -1.0], &[2.0, 2.0], 0.25)
                .unwrap()
                .with_holes(|x| x[0].hypot(x[1]) < 0.1)
                .unwrap(),
        );
        let f = ScalarField::constant(d.clone(), 2.0);
        let c = d.nearest_node(&[0.0, 0.0]).unwrap();
        assert!(f.get(c).is_nan());
        assert_eq!(f.interpolate(&[0.1, 0.0]), 2.0);
        assert!(ScalarField::new(d.clone(), vec![f64::INFINITY; d.len()]).is_err());
    }

    #[test]
    fn combine_requires_same_domain() {
        let a = ScalarField::constant(grid(), 1.0);
        let b = ScalarField::constant(grid(), 2.0);
        let c = a.combine(3.0, &b, -1.0).unwrap();
        assert_eq!(c.get(0), 1.0);
        let other = Arc::new(GridDomain::from_extent(&[0.0, 0.0], &[1.0, 1.0], 0.5).unwrap());
        assert!(a.combine(1.0, &ScalarField::constant(other, 0.0), 1.0).is_err());
    }
}
