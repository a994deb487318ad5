//! Trivial projective changes `F + df`.
//!
//! Lengths and distances use the edge-difference form of `df`: the edge
//! `x -> y` gains exactly `f(y) - f(x)`, so the length of any grid path
//! shifts by `f(end) - f(start)` and the distance transformation holds as an
//! identity on the graph. A central-difference gradient is used where a
//! pointwise `d_x f(v)` is needed (admissibility probing, exported fields);
//! the two schemes differ by O(h).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{direction_fan, Coords, GridDomain, Stencil, MAX_DIM};
use crate::metric::{edge_geometry, Lagrangian, MetricField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GradientScheme {
    /// `df(x -> y) = f(y) - f(x)` on edges.
    #[default]
    EdgeDifference,
    /// Interpolated central-difference gradient at the edge midpoint.
    CentralDifference,
}

/// The 1-form `df` of a nodal function, discretized by `scheme`.
#[derive(Clone, Debug)]
pub struct DiscreteDifferential {
    f: ScalarField,
    scheme: GradientScheme,
}

impl DiscreteDifferential {
    pub fn new(f: ScalarField, scheme: GradientScheme) -> Self {
        Self { f, scheme }
    }

    pub fn function(&self) -> &ScalarField {
        &self.f
    }

    pub fn scheme(&self) -> GradientScheme {
        self.scheme
    }

    /// `df` applied to the edge `tail -> head`.
    pub fn edge_increment(&self, tail: usize, head: usize) -> f64 {
        match self.scheme {
            GradientScheme::EdgeDifference => self.f.get(head) - self.f.get(tail),
            GradientScheme::CentralDifference => {
                let d = self.f.domain();
                let (mid, delta) = edge_geometry(d, tail, head);
                let g = self.f.interpolate_gradient(&mid[..d.dim()]);
                (0..d.dim()).map(|a| g[a] * delta[a]).sum()
            }
        }
    }

    /// Pointwise `d_x f(v)` from the interpolated central gradient.
    pub fn pointwise(&self, x: &[f64], v: &[f64]) -> f64 {
        let g = self.f.interpolate_gradient(x);
        v.iter().zip(g.iter()).map(|(v, g)| v * g).sum()
    }

    /// `d_x f(v)` at a node from its central gradient.
    pub fn at_node(&self, idx: usize, v: &[f64]) -> f64 {
        let g = self.f.central_gradient(idx);
        v.iter().zip(g.iter()).map(|(v, g)| v * g).sum()
    }

    /// Adds another function with the same scheme and domain in place.
    pub(crate) fn try_merge(&mut self, other: &ScalarField, scheme: GradientScheme) -> bool {
        if scheme != self.scheme || !self.f.same_domain(other) {
            return false;
        }
        self.f = self.f.combine(1.0, other, 1.0).expect("same domain");
        true
    }
}

/// The metric `F + df`.
#[derive(Clone, Debug)]
pub struct ProjectiveChange {
    base: MetricField,
    df: DiscreteDifferential,
}

/// Smallest values of `F + df` found by [`ProjectiveChange::admissibility`].
#[derive(Clone, Debug, Serialize)]
pub struct AdmissibilityReport {
    /// Min over unmasked nodes and unit fan directions of `F(x, v) + d_x f(v)`.
    pub min_pointwise: f64,
    pub worst_node: usize,
    pub worst_direction: Vec<f64>,
    /// Min over stencil edges of the changed weight divided by the original one.
    pub min_edge_ratio: f64,
    pub worst_edge: (usize, usize),
}

impl AdmissibilityReport {
    pub fn admissible(&self) -> bool {
        self.min_pointwise > 0.0 && self.min_edge_ratio > 0.0
    }
}

impl ProjectiveChange {
    /// Builds `F + df` without any admissibility check.
    pub fn new_unchecked(base: MetricField, f: ScalarField, scheme: GradientScheme) -> Self {
        Self {
            base,
            df: DiscreteDifferential::new(f, scheme),
        }
    }

    pub fn base(&self) -> &MetricField {
        &self.base
    }

    pub fn f(&self) -> &ScalarField {
        self.df.function()
    }

    pub fn scheme(&self) -> GradientScheme {
        self.df.scheme()
    }

    pub fn differential(&self) -> &DiscreteDifferential {
        &self.df
    }

    /// Evaluates `F + df` over every unmasked node (fan directions with the
    /// central gradient) and over every stencil edge (with `scheme`).
    pub fn admissibility(&self, stencil: Stencil) -> AdmissibilityReport {
        let domain = self.df.function().domain().clone();
        let dim = domain.dim();
        let fan = direction_fan(dim, stencil);
        let offsets = stencil.offsets(dim);
        let mut report = AdmissibilityReport {
            min_pointwise: f64::INFINITY,
            worst_node: 0,
            worst_direction: vec![0.0; dim],
            min_edge_ratio: f64::INFINITY,
            worst_edge: (0, 0),
        };
        for n in domain.active_nodes() {
            let x = domain.coords(n);
            for d in &fan {
                let val = self.base.eval(&x[..dim], &d[..dim]) + self.df.at_node(n, &d[..dim]);
                if val < report.min_pointwise {
                    report.min_pointwise = val;
                    report.worst_node = n;
                    report.worst_direction = d[..dim].to_vec();
                }
            }
            for off in &offsets {
                let Some(m) = domain.neighbor(n, off).filter(|&m| domain.is_active(m)) else {
                    continue;
                };
                let w = self.base.edge_weight(&domain, n, m);
                let ratio = (w + self.df.edge_increment(n, m)) / w;
                if ratio < report.min_edge_ratio {
                    report.min_edge_ratio = ratio;
                    report.worst_edge = (n, m);
                }
            }
        }
        report
    }
}

impl Lagrangian for ProjectiveChange {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn eval(&self, x: &[f64], v: &[f64]) -> f64 {
        if v.iter().all(|&c| c == 0.0) {
            return 0.0;
        }
        self.base.eval(x, v) + self.df.pointwise(x, v)
    }

    fn edge_weight(&self, domain: &GridDomain, tail: usize, head: usize) -> f64 {
        self.base.edge_weight(domain, tail, head) + self.df.edge_increment(tail, head)
    }
}

/// Builds `F + df` and rejects it unless `F + df > 0` over every node and fan
/// direction and over every stencil edge.
pub fn apply_projective_change(
    metric: &MetricField,
    f: &ScalarField,
    scheme: GradientScheme,
    stencil: Stencil,
) -> Result<ProjectiveChange> {
    if metric.dim() != f.domain().dim() {
        return Err(Error::Argument("metric and function dimensions differ".into()));
    }
    let change = ProjectiveChange::new_unchecked(metric.clone(), f.clone(), scheme);
    let report = change.admissibility(stencil);
    if report.min_pointwise <= 0.0 {
        return Err(Error::Admissibility {
            node: report.worst_node,
            direction: report.worst_direction,
            value: report.min_pointwise,
        });
    }
    if report.min_edge_ratio <= 0.0 {
        let (t, h) = report.worst_edge;
        let d = f.domain();
        let (_, delta) = edge_geometry(d, t, h);
        let w = change.edge_weight(d, t, h);
        return Err(Error::Admissibility {
            node: t,
            direction: delta[..d.dim()].to_vec(),
            value: w,
        });
    }
    Ok(change)
}

/// Direction helper for tests and reports.
pub fn unit(dim: usize, axis: usize, sign: f64) -> Coords {
    let mut v = [0.0; MAX_DIM];
    if axis < dim {
        v[axis] = sign;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn plane(h: f64) -> Arc<GridDomain> {
        Arc::new(GridDomain::from_extent(&[-2.0, -2.0], &[4.0, 4.0], h).unwrap())
    }

    #[test]
    fn zero_function_keeps_weights() {
        let d = plane(0.5);
        let f = MetricField::constant_randers(&[0.3, -0.1]);
        let ch = apply_projective_change(
            &f,
            &ScalarField::constant(d.clone(), 0.0),
            GradientScheme::EdgeDifference,
            Stencil::Moore,
        )
        .unwrap();
        for n in d.active_nodes() {
            for off in Stencil::Moore.offsets(2) {
                if let Some(m) = d.neighbor(n, &off) {
                    assert_eq!(ch.edge_weight(&d, n, m), f.edge_weight(&d, n, m));
                }
            }
        }
    }

    #[test]
    fn linear_function_edge_weight() {
        let d = plane(1.0);
        let f = ScalarField::from_fn(d.clone(), |x| 0.5 * x[0]);
        let ch = apply_projective_change(
            &MetricField::euclidean(2),
            &f,
            GradientScheme::EdgeDifference,
            Stencil::Moore,
        )
        .unwrap();
        let o = d.nearest_node(&[0.0, 0.0]).unwrap();
        let e = d.nearest_node(&[1.0, 0.0]).unwrap();
        assert_eq!(ch.edge_weight(&d, o, e), 1.5);
        assert_eq!(ch.edge_weight(&d, e, o), 0.5);
    }

    #[test]
    fn steep_function_is_rejected() {
        let d = plane(1.0);
        let f = ScalarField::from_fn(d.clone(), |x| 2.0 * x[0]);
        let err = apply_projective_change(
            &MetricField::euclidean(2),
            &f,
            GradientScheme::EdgeDifference,
            Stencil::Moore,
        )
        .unwrap_err();
        match err {
            Error::Admissibility { direction, value, .. } => {
                assert!(value < 0.0);
                assert!(direction[0] < 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn central_scheme_matches_on_linear() {
        let d = plane(0.25);
        let f = ScalarField::from_fn(d.clone(), |x| 0.2 * x[0] + 0.1 * x[1]);
        let e = DiscreteDifferential::new(f.clone(), GradientScheme::EdgeDifference);
        let c = DiscreteDifferential::new(f, GradientScheme::CentralDifference);
        for n in d.active_nodes() {
            for off in Stencil::Moore.offsets(2) {
                if let Some(m) = d.neighbor(n, &off) {
                    assert!((e.edge_increment(n, m) - c.edge_increment(n, m)).abs() < 1e-12);
                }
            }
        }
    }
}
