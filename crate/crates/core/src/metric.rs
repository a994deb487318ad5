//! Finsler metrics: Randers metrics built from a Riemannian part and a
//! drift 1-form, plus arbitrary user-supplied lagrangians.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::change::DiscreteDifferential;
use crate::error::{Error, Result};
use crate::grid::{Coords, GridDomain, MAX_DIM};

/// `amplitude * sin(wavevector . x + phase)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarMode {
    pub amplitude: f64,
    pub wavevector: Vec<f64>,
    #[serde(default)]
    pub phase: f64,
}

/// `amplitude * sin(wavevector . x + phase)` with a vector amplitude.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorMode {
    pub amplitude: Vec<f64>,
    pub wavevector: Vec<f64>,
    #[serde(default)]
    pub phase: f64,
}

fn mode_phase(k: &[f64], phase: f64, x: &[f64]) -> f64 {
    k.iter().zip(x).map(|(k, x)| k * x).sum::<f64>() + phase
}

/// Per-node data interpolated multilinearly over a box grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    grid: Arc<GridDomain>,
    components: usize,
    values: Vec<f64>,
}

impl Table {
    /// `values` holds `components` numbers per node, nodes in grid order.
    pub fn new(grid: Arc<GridDomain>, components: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() * components {
            return Err(Error::Data(format!(
                "tabulated field needs {} values ({} per node), got {}",
                grid.len() * components,
                components,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite tabulated value at node {}",
                i / components
            )));
        }
        Ok(Self {
            grid,
            components,
            values,
        })
    }

    fn sample(&self, x: &[f64], out: &mut [f64]) {
        out[..self.components].fill(0.0);
        for (i, w) in self.grid.cell_weights(x) {
            let row = &self.values[i * self.components..(i + 1) * self.components];
            for (o, v) in out.iter_mut().zip(row) {
                *o += w * v;
            }
        }
    }
}

/// Symmetric matrix field `g_ij(x)`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub enum MatrixField {
    Identity,
    Constant(Vec<f64>),
    /// `base * (1 + sum of modes)`.
    Conformal {
        base: Vec<f64>,
        modes: Vec<ScalarMode>,
    },
    Tabulated(Table),
}

impl MatrixField {
    /// Writes `g(x)` into `out` (row-major, `dim * dim` entries).
    pub fn sample(&self, dim: usize, x: &[f64], out: &mut [f64; MAX_DIM * MAX_DIM]) {
        match self {
            MatrixField::Identity => {
                out.fill(0.0);
                for a in 0..dim {
                    out[a * dim + a] = 1.0;
                }
            }
            MatrixField::Constant(m) => out[..dim * dim].copy_from_slice(m),
            MatrixField::Conformal { base, modes } => {
                let s = 1.0
                    + modes
                        .iter()
                        .map(|m| m.amplitude * mode_phase(&m.wavevector, m.phase, x).sin())
                        .sum::<f64>();
                for (o, b) in out.iter_mut().zip(base) {
                    *o = s * b;
                }
            }
            MatrixField::Tabulated(t) => t.sample(x, &mut out[..]),
        }
    }

    fn check_shape(&self, dim: usize) -> Result<()> {
        let n = match self {
            MatrixField::Identity => return Ok(()),
            MatrixField::Constant(m) => m.len(),
            MatrixField::Conformal { base, modes } => {
                if modes.iter().any(|m| m.wavevector.len() != dim) {
                    return Err(Error::Data("mode wavevector has wrong dimension".into()));
                }
                base.len()
            }
            MatrixField::Tabulated(t) => t.components,
        };
        if n != dim * dim {
            return Err(Error::Data(format!(
                "matrix field has {n} components, expected {}",
                dim * dim
            )));
        }
        Ok(())
    }
}

/// Covector field `omega_i(x)`.
#[derive(Clone, Debug, PartialEq)]
pub enum CovectorField {
    Zero,
    Constant(Vec<f64>),
    /// `base + sum of modes`.
    Modes {
        base: Vec<f64>,
        modes: Vec<VectorMode>,
    },
    Tabulated(Table),
}

impl CovectorField {
    pub fn sample(&self, dim: usize, x: &[f64], out: &mut Coords) {
        match self {
            CovectorField::Zero => out.fill(0.0),
            CovectorField::Constant(w) => out[..dim].copy_from_slice(w),
            CovectorField::Modes { base, modes } => {
                out[..dim].copy_from_slice(base);
                for m in modes {
                    let s = mode_phase(&m.wavevector, m.phase, x).sin();
                    for a in 0..dim {
                        out[a] += m.amplitude[a] * s;
                    }
                }
            }
            CovectorField::Tabulated(t) => t.sample(x, &mut out[..]),
        }
    }

    fn check_shape(&self, dim: usize) -> Result<()> {
        let n = match self {
            CovectorField::Zero => return Ok(()),
            CovectorField::Constant(w) => w.len(),
            CovectorField::Modes { base, modes } => {
                if modes
                    .iter()
                    .any(|m| m.wavevector.len() != dim || m.amplitude.len() != dim)
                {
                    return Err(Error::Data("mode has wrong dimension".into()));
                }
                base.len()
            }
            CovectorField::Tabulated(t) => t.components,
        };
        if n != dim {
            return Err(Error::Data(format!(
                "covector field has {n} components, expected {dim}"
            )));
        }
        Ok(())
    }
}

/// User-supplied lagrangian `F(x, v)`.
pub type CustomLagrangian = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum MetricKind {
    /// `sqrt((g + omega omega)(v, v)) + omega(v) + sum of drift terms`.
    /// The drift terms carry slice shifts `df`.
    Randers {
        g: MatrixField,
        omega: CovectorField,
        drift: Vec<DiscreteDifferential>,
    },
    Custom(CustomLagrangian),
}

impl fmt::Debug for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricKind::Randers { g, omega, drift } => f
                .debug_struct("Randers")
                .field("g", g)
                .field("omega", omega)
                .field("drift_terms", &drift.len())
                .finish(),
            MetricKind::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Anything that assigns a length to tangent vectors and to grid edges.
pub trait Lagrangian: Send + Sync {
    fn dim(&self) -> usize;

    /// `F(x, v)`; exactly zero for `v = 0`.
    fn eval(&self, x: &[f64], v: &[f64]) -> f64;

    /// Length of the straight edge `tail -> head`.
    fn edge_weight(&self, domain: &GridDomain, tail: usize, head: usize) -> f64;
}

/// A Finsler lagrangian on a chart of dimension 1..=3.
#[derive(Clone, Debug)]
pub struct MetricField {
    dim: usize,
    kind: MetricKind,
}

impl MetricField {
    /// Randers metric `sqrt((g + omega omega)(v, v)) + omega(v)`.
    pub fn randers(dim: usize, g: MatrixField, omega: CovectorField) -> Result<Self> {
        Self::randers_with_drift(dim, g, omega, Vec::new())
    }

    pub(crate) fn randers_with_drift(
        dim: usize,
        g: MatrixField,
        omega: CovectorField,
        drift: Vec<DiscreteDifferential>,
    ) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::Argument(format!("unsupported dimension {dim}")));
        }
        g.check_shape(dim)?;
        omega.check_shape(dim)?;
        Ok(Self {
            dim,
            kind: MetricKind::Randers { g, omega, drift },
        })
    }

    /// Euclidean metric of the given dimension.
    pub fn euclidean(dim: usize) -> Self {
        Self::randers(dim, MatrixField::Identity, CovectorField::Zero)
            .expect("identity metric is well formed")
    }

    /// Constant Randers metric with `g = I` and drift `omega`.
    pub fn constant_randers(omega: &[f64]) -> Self {
        Self::randers(
            omega.len(),
            MatrixField::Identity,
            CovectorField::Constant(omega.to_vec()),
        )
        .expect("constant randers metric is well formed")
    }

    pub fn custom(dim: usize, f: CustomLagrangian) -> Self {
        Self {
            dim,
            kind: MetricKind::Custom(f),
        }
    }

    pub fn kind(&self) -> &MetricKind {
        &self.kind
    }

    /// Quadratic coefficients `g_ij + omega_i omega_j` and drift `omega_i` at `x`
    /// (slice shifts excluded). `None` for custom metrics.
    pub fn randers_coefficients(&self, x: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        match &self.kind {
            MetricKind::Randers { g, omega, .. } => {
                let (a, w) = quadratic_part(self.dim, g, omega, x);
                Some((a[..self.dim * self.dim].to_vec(), w[..self.dim].to_vec()))
            }
            MetricKind::Custom(_) => None,
        }
    }

    /// `F(x, v)` after checking that `x` lies on an unmasked part of `domain`.
    pub fn eval_in(&self, domain: &GridDomain, x: &[f64], v: &[f64]) -> Result<f64> {
        if x.len() != self.dim || v.len() != self.dim {
            return Err(Error::Argument(format!(
                "expected {}-dimensional point and vector",
                self.dim
            )));
        }
        domain.check_point(x)?;
        Ok(self.eval(x, v))
    }

    /// Part of `F` that is smooth in `x` (everything except the drift terms).
    fn smooth_part(&self, x: &[f64], v: &[f64]) -> f64 {
        match &self.kind {
            MetricKind::Randers { g, omega, .. } => {
                let (a, w) = quadratic_part(self.dim, g, omega, x);
                let n = self.dim;
                let mut q = 0.0;
                let mut lin = 0.0;
                for i in 0..n {
                    lin += w[i] * v[i];
                    for j in 0..n {
                        q += a[i * n + j] * v[i] * v[j];
                    }
                }
                q.max(0.0).sqrt() + lin
            }
            MetricKind::Custom(f) => f(x, v),
        }
    }

    /// Smallest value of `F(x, .)` on the Euclidean unit sphere, found by a
    /// dense search refined around the best direction.
    pub fn min_unit_value(&self, x: &[f64]) -> (f64, Coords) {
        let eval = |d: &Coords| self.eval(x, &d[..self.dim]);
        let argmin = |dirs: &[Coords]| {
            dirs.iter()
                .map(|d| (eval(d), *d))
                .fold((f64::INFINITY, [0.0; MAX_DIM]), |a, b| if b.0 < a.0 { b } else { a })
        };
        match self.dim {
            1 => argmin(&[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]),
            2 => {
                let n = 720;
                let step = 2.0 * std::f64::consts::PI / n as f64;
                let dirs: Vec<Coords> = (0..n)
                    .map(|k| {
                        let th = step * k as f64;
                        [th.cos(), th.sin(), 0.0]
                    })
                    .collect();
                let coarse = argmin(&dirs);
                // golden-section refinement on the angle
                let th0 = coarse.1[1].atan2(coarse.1[0]);
                let (mut lo, mut hi) = (th0 - step, th0 + step);
                let phi = 0.5 * (5f64.sqrt() - 1.0);
                let val = |t: f64| eval(&[t.cos(), t.sin(), 0.0]);
                for _ in 0..60 {
                    let a = hi - phi * (hi - lo);
                    let b = lo + phi * (hi - lo);
                    if val(a) < val(b) {
                        hi = b;
                    } else {
                        lo = a;
                    }
                }
                let t = 0.5 * (lo + hi);
                argmin(&[coarse.1, [t.cos(), t.sin(), 0.0]])
            }
            _ => {
                let n = 20_000;
                let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
                let dirs: Vec<Coords> = (0..n)
                    .map(|k| {
                        let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                        let rho = (1.0 - z * z).sqrt();
                        let th = golden * k as f64;
                        [rho * th.cos(), rho * th.sin(), z]
                    })
                    .collect();
                argmin(&dirs)
            }
        }
    }
}

fn quadratic_part(
    dim: usize,
    g: &MatrixField,
    omega: &CovectorField,
    x: &[f64],
) -> ([f64; MAX_DIM * MAX_DIM], Coords) {
    let mut a = [0.0; MAX_DIM * MAX_DIM];
    let mut w = [0.0; MAX_DIM];
    g.sample(dim, x, &mut a);
    omega.sample(dim, x, &mut w);
    for i in 0..dim {
        for j in 0..dim {
            a[i * dim + j] += w[i] * w[j];
        }
    }
    (a, w)
}

pub(crate) fn edge_geometry(domain: &GridDomain, tail: usize, head: usize) -> (Coords, Coords) {
    let xt = domain.coords(tail);
    let xh = domain.coords(head);
    let mut mid = [0.0; MAX_DIM];
    let mut delta = [0.0; MAX_DIM];
    for a in 0..domain.dim() {
        mid[a] = 0.5 * (xt[a] + xh[a]);
        delta[a] = xh[a] - xt[a];
    }
    (mid, delta)
}

impl Lagrangian for MetricField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], v: &[f64]) -> f64 {
        if v.iter().all(|&c| c == 0.0) {
            return 0.0;
        }
        let mut val = self.smooth_part(x, v);
        if let MetricKind::Randers { drift, .. } = &self.kind {
            for d in drift {
                val += d.pointwise(x, v);
            }
        }
        val
    }

    fn edge_weight(&self, domain: &GridDomain, tail: usize, head: usize) -> f64 {
        let (mid, delta) = edge_geometry(domain, tail, head);
        let n = self.dim;
        let mut val = self.smooth_part(&mid[..n], &delta[..n]);
        if let MetricKind::Randers { drift, .. } = &self.kind {
            for d in drift {
                val += d.edge_increment(tail, head);
            }
        }
        val
    }
}

/// Outcome of [`check_positive_homogeneous`].
#[derive(Clone, Debug, Serialize)]
pub struct HomogeneityReport {
    /// Max over samples of `|F(x, l v) - l F(x, v)| / max(l |F(x, v)|, 1e-300)`.
    pub max_relative_violation: f64,
    /// Min of `F(x, v)` over sampled points and unit fan directions.
    pub min_unit_value: f64,
    pub positive: bool,
    pub worst_point: Vec<f64>,
    pub worst_direction: Vec<f64>,
    /// For Randers metrics: min over points of the refined unit-sphere minimum.
    pub randers_min_unit: Option<f64>,
}

/// Probes 1-homogeneity and positivity of `metric` on the given samples.
pub fn check_positive_homogeneous(
    metric: &MetricField,
    points: &[Coords],
    fan: &[Coords],
    lambdas: &[f64],
) -> HomogeneityReport {
    let n = metric.dim;
    let mut max_rel: f64 = 0.0;
    let mut min_val = f64::INFINITY;
    let mut worst = ([0.0; MAX_DIM], [0.0; MAX_DIM]);
    for x in points {
        let x = &x[..n];
        for d in fan {
            let v = &d[..n];
            let f1 = metric.eval(x, v);
            if f1 < min_val || f1.is_nan() {
                min_val = f1;
                worst.0[..n].copy_from_slice(x);
                worst.1 = *d;
            }
            for &l in lambdas {
                let lv: Vec<f64> = v.iter().map(|c| l * c).collect();
                let fl = metric.eval(x, &lv);
                let rel = (fl - l * f1).abs() / (l * f1.abs()).max(1e-300);
                max_rel = max_rel.max(rel);
            }
        }
    }
    let randers_min_unit = matches!(metric.kind, MetricKind::Randers { .. }).then(|| {
        points
            .iter()
            .map(|x| metric.min_unit_value(&x[..n]).0)
            .fold(f64::INFINITY, f64::min)
    });
    let positive = min_val > 0.0 && randers_min_unit.is_none_or(|m| m > 0.0);
    HomogeneityReport {
        max_relative_violation: max_rel,
        min_unit_value: min_val,
        positive,
        worst_point: worst.0[..n].to_vec(),
        worst_direction: worst.1[..n].to_vec(),
        randers_min_unit,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{direction_fan, Stencil};

    #[test]
    fn euclidean_unit_vector() {
        let f = MetricField::euclidean(2);
        assert_eq!(f.eval(&[0.3, -0.2], &[1.0, 0.0]), 1.0);
        assert_eq!(f.eval(&[0.3, -0.2], &[0.0, 0.0]), 0.0);
    }

    #[test]
    fn constant_randers_east() {
        let f = MetricField::constant_randers(&[0.5, 0.0]);
        // independent scalar evaluation of sqrt(1 + 0.25) + 0.5
        let expected = (1.0f64 + 0.25).sqrt() + 0.5;
        assert!((f.eval(&[0.0, 0.0], &[1.0, 0.0]) - expected).abs() < 1e-15);
        assert!((expected - 1.618_033_988_749_895).abs() < 1e-15);
        assert_eq!(f.eval(&[1.0, 1.0], &[0.0, 0.0]), 0.0);
    }

    #[test]
    fn eval_in_checks_domain() {
        let d = GridDomain::from_extent(&[-1.0, -1.0], &[2.0, 2.0], 0.25)
            .unwrap()
            .with_holes(|x| x[0].hypot(x[1]) < 0.2)
            .unwrap();
        let f = MetricField::euclidean(2);
        assert!(f.eval_in(&d, &[0.5, 0.5], &[1.0, 0.0]).is_ok());
        assert!(matches!(
            f.eval_in(&d, &[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            f.eval_in(&d, &[3.0, 0.0], &[1.0, 0.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn homogeneity_report_euclidean() {
        let f = MetricField::euclidean(2);
        let fan = direction_fan(2, Stencil::Moore);
        let r = check_positive_homogeneous(&f, &[[0.0; 3], [1.0, 2.0, 0.0]], &fan, &[0.5, 2.0, 7.0]);
        assert!(r.max_relative_violation < 1e-15);
        assert!((r.min_unit_value - 1.0).abs() < 1e-15);
        assert!(r.positive);
    }

    #[test]
    fn homogeneity_report_randers_minimum() {
        let f = MetricField::constant_randers(&[0.5, 0.0]);
        let fan = direction_fan(2, Stencil::Moore);
        let r = check_positive_homogeneous(&f, &[[0.0; 3]], &fan, &[3.0]);
        let expected = 1.25f64.sqrt() - 0.5;
        assert!((r.min_unit_value - expected).abs() < 1e-12);
        assert!((r.worst_direction[0] + 1.0).abs() < 1e-15 && r.worst_direction[1].abs() < 1e-15);
        assert!(r.max_relative_violation < 1e-15);
        // the closed-form minimum over the whole circle is attained at (-1, 0) as well
        assert!((r.randers_min_unit.unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn homogeneity_report_flags_negative_direction() {
        let bad: CustomLagrangian = Arc::new(|_x, v| {
            let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
            if v[1] < -0.9 * n { -n } else { n }
        });
        let f = MetricField::custom(2, bad);
        let fan = direction_fan(2, Stencil::Moore);
        let r = check_positive_homogeneous(&f, &[[0.0; 3]], &fan, &[2.0]);
        assert!(!r.positive);
        assert!(r.min_unit_value < 0.0);
    }

    #[test]
    fn shape_validation() {
        assert!(MetricField::randers(2, MatrixField::Constant(vec![1.0; 3]), CovectorField::Zero).is_err());
        assert!(MetricField::randers(2, MatrixField::Identity, CovectorField::Constant(vec![0.1])).is_err());
    }
}
