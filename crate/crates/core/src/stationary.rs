//! Stationary spacetime data `(g, omega)` on a spatial slice and the Randers
//! metric it induces.
//!
//! Changing the time coordinate to `t' = t + f(x)` keeps the quadratic part
//! `g + omega omega` and replaces `omega` by `omega + df`. The slice shifts are
//! stored as discrete differentials so that the induced Randers metric agrees
//! edge-for-edge with the projective change `F + df` built with the same
//! gradient scheme.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::change::{DiscreteDifferential, GradientScheme};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{Coords, GridDomain, MAX_DIM};
use crate::metric::{CovectorField, Lagrangian, MatrixField, MetricField};

/// `G = -dt^2 + 2 omega_i dx^i dt + g_ij dx^i dx^j` on `R x S`.
#[derive(Clone, Debug)]
pub struct StationaryMetric {
    domain: Arc<GridDomain>,
    g: MatrixField,
    omega: CovectorField,
    shifts: Vec<DiscreteDifferential>,
}

impl StationaryMetric {
    pub fn new(domain: Arc<GridDomain>, g: MatrixField, omega: CovectorField) -> Result<Self> {
        // shape validation is shared with the Randers constructor
        MetricField::randers(domain.dim(), g.clone(), omega.clone())?;
        Ok(Self {
            domain,
            g,
            omega,
            shifts: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn shifts(&self) -> &[DiscreteDifferential] {
        &self.shifts
    }

    /// `omega'(x) = omega(x) + sum of df(x)` with pointwise gradients.
    pub fn omega_at(&self, x: &[f64]) -> Coords {
        let n = self.dim();
        let mut w = [0.0; MAX_DIM];
        self.omega.sample(n, x, &mut w);
        for s in &self.shifts {
            let g = s.function().interpolate_gradient(x);
            for a in 0..n {
                w[a] += g[a];
            }
        }
        w
    }

    /// Spatial block `g'` of the metric in the current slicing:
    /// `g + omega omega - omega' omega'`.
    pub fn g_at(&self, x: &[f64]) -> [f64; MAX_DIM * MAX_DIM] {
        let n = self.dim();
        let mut g = [0.0; MAX_DIM * MAX_DIM];
        self.g.sample(n, x, &mut g);
        if !self.shifts.is_empty() {
            let mut w = [0.0; MAX_DIM];
            self.omega.sample(n, x, &mut w);
            let ws = self.omega_at(x);
            for i in 0..n {
                for j in 0..n {
                    g[i * n + j] += w[i] * w[j] - ws[i] * ws[j];
                }
            }
        }
        g
    }

    /// First unmasked node where `g'` fails to be positive definite.
    pub fn first_indefinite_node(&self) -> Option<usize> {
        let n = self.dim();
        self.domain.active_nodes().find(|&i| {
            let x = self.domain.coords(i);
            let g = self.g_at(&x[..n]);
            DMatrix::from_row_slice(n, n, &g[..n * n]).cholesky().is_none()
        })
    }
}

/// The Randers metric `sqrt((g + omega omega)(v, v)) + omega'(v)` of `S`.
pub fn randers_from_stationary(s: &StationaryMetric) -> Result<MetricField> {
    if let Some(node) = s.first_indefinite_node() {
        let x = s.domain.coords(node);
        return Err(Error::Data(format!(
            "g is not positive definite at node {node} ({:?})",
            &x[..s.dim()]
        )));
    }
    MetricField::randers_with_drift(s.dim(), s.g.clone(), s.omega.clone(), s.shifts.clone())
}

/// Re-slices `S` along `t' = t + f(x)`: `omega' = omega + df`.
pub fn shift_slice(
    s: &StationaryMetric,
    f: &ScalarField,
    scheme: GradientScheme,
) -> Result<StationaryMetric> {
    if f.domain().dim() != s.dim() {
        return Err(Error::Argument("slice function has the wrong dimension".into()));
    }
    let mut out = s.clone();
    if !out.shifts.iter_mut().any(|d| d.try_merge(f, scheme)) {
        out.shifts.push(DiscreteDifferential::new(f.clone(), scheme));
    }
    Ok(out)
}

/// Minimum of `F(x, v) + d_x f(v)` found by [`spacelike_slice_check`].
#[derive(Clone, Debug, Serialize)]
pub struct SliceCheck {
    pub spacelike: bool,
    pub min_margin: f64,
    pub worst_node: usize,
    pub worst_direction: Vec<f64>,
}

/// Whether the slice `{t = f(x)}` is space-like, i.e. whether
/// `F + df > 0` at every node and fan direction (central gradient of `f`).
pub fn spacelike_slice_check(
    s: &StationaryMetric,
    f: &ScalarField,
    fan: &[Coords],
) -> Result<SliceCheck> {
    let randers = MetricField::randers_with_drift(
        s.dim(),
        s.g.clone(),
        s.omega.clone(),
        s.shifts.clone(),
    )?;
    let df = DiscreteDifferential::new(f.clone(), GradientScheme::CentralDifference);
    let n = s.dim();
    let mut out = SliceCheck {
        spacelike: true,
        min_margin: f64::INFINITY,
        worst_node: 0,
        worst_direction: vec![0.0; n],
    };
    for i in s.domain.active_nodes() {
        let x = s.domain.coords(i);
        for d in fan {
            let m = randers.eval(&x[..n], &d[..n]) + df.at_node(i, &d[..n]);
            if m < out.min_margin {
                out.min_margin = m;
                out.worst_node = i;
                out.worst_direction = d[..n].to_vec();
            }
        }
    }
    out.spacelike = out.min_margin > 0.0;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{direction_fan, Stencil};

    fn plane() -> Arc<GridDomain> {
        Arc::new(GridDomain::from_extent(&[-1.0, -1.0], &[2.0, 2.0], 0.25).unwrap())
    }

    #[test]
    fn static_spacetime_gives_euclidean() {
        let s = StationaryMetric::new(plane(), MatrixField::Identity, CovectorField::Zero).unwrap();
        let f = randers_from_stationary(&s).unwrap();
        let x = [0.2, 0.3];
        for v in [[1.0f64, 0.0], [0.3, -0.4], [-2.0, 1.0]] {
            let e = (v[0] * v[0] + v[1] * v[1]).sqrt();
            assert!((f.eval(&x, &v) - e).abs() < 1e-15);
        }
    }

    #[test]
    fn drift_enters_quadratic_part() {
        let s = StationaryMetric::new(
            plane(),
            MatrixField::Identity,
            CovectorField::Constant(vec![0.5, 0.0]),
        )
        .unwrap();
        let f = randers_from_stationary(&s).unwrap();
        let (a, w) = f.randers_coefficients(&[0.0, 0.0]).unwrap();
        assert_eq!(a, vec![1.25, 0.0, 0.0, 1.0]);
        assert_eq!(w, vec![0.5, 0.0]);
        let v = [0.7f64, -1.1];
        let expected = (1.25 * v[0] * v[0] + v[1] * v[1]).sqrt() + 0.5 * v[0];
        assert!((f.eval(&[0.0, 0.0], &v) - expected).abs() < 1e-15);
    }

    #[test]
    fn riemannian_case() {
        let s = StationaryMetric::new(
            plane(),
            MatrixField::Constant(vec![4.0, 0.0, 0.0, 1.0]),
            CovectorField::Zero,
        )
        .unwrap();
        let f = randers_from_stationary(&s).unwrap();
        assert!((f.eval(&[0.0, 0.0], &[1.0, 1.0]) - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn indefinite_g_names_node() {
        let s = StationaryMetric::new(
            plane(),
            MatrixField::Constant(vec![1.0, 0.0, 0.0, -1.0]),
            CovectorField::Zero,
        )
        .unwrap();
        match randers_from_stationary(&s) {
            Err(Error::Data(msg)) => assert!(msg.contains("node 0")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn shifts_act_on_omega() {
        let d = plane();
        let s = StationaryMetric::new(d.clone(), MatrixField::Identity, CovectorField::Zero).unwrap();
        let c = shift_slice(&s, &ScalarField::constant(d.clone(), 3.0), GradientScheme::EdgeDifference)
            .unwrap();
        assert_eq!(c.omega_at(&[0.1, 0.1])[..2], [0.0, 0.0]);
        let f = ScalarField::from_fn(d.clone(), |x| 0.3 * x[0]);
        let l = shift_slice(&s, &f, GradientScheme::EdgeDifference).unwrap();
        let w = l.omega_at(&[0.1, -0.6]);
        assert!((w[0] - 0.3).abs() < 1e-14 && w[1].abs() < 1e-14);
        let back = shift_slice(&l, &f.scaled(-1.0), GradientScheme::EdgeDifference).unwrap();
        assert_eq!(back.shifts().len(), 1);
        let w = back.omega_at(&[0.1, -0.6]);
        assert!(w[0].abs() < 1e-15 && w[1].abs() < 1e-15);
        // g' = g + omega omega - omega' omega' after the shift
        let g = l.g_at(&[0.0, 0.0]);
        assert!((g[0] - (1.0 - 0.09)).abs() < 1e-14);
    }

    #[test]
    fn spacelike_examples() {
        let d = plane();
        let s = StationaryMetric::new(d.clone(), MatrixField::Identity, CovectorField::Zero).unwrap();
        let fan = direction_fan(2, Stencil::Moore);
        let zero = spacelike_slice_check(&s, &ScalarField::constant(d.clone(), 0.0), &fan).unwrap();
        assert!(zero.spacelike);
        let steep = ScalarField::from_fn(d.clone(), |x| 2.0 * x[0]);
        let r = spacelike_slice_check(&s, &steep, &fan).unwrap();
        assert!(!r.spacelike);
        assert!((r.min_margin + 1.0).abs() < 1e-12);
        let mild = ScalarField::from_fn(d.clone(), |x| 0.5 * x[0]);
        let r = spacelike_slice_check(&s, &mild, &fan).unwrap();
        assert!(r.spacelike);
        assert!((r.min_margin - 0.5).abs() < 1e-12);
    }
}
