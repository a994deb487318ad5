//! The stationary Lorentz metric on `R x S`, its null geodesics, and their
//! relation to the Randers metric of the slice.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

use crate::change::{apply_projective_change, GradientScheme};
use crate::distance::build_graph;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{direction_fan, GridDomain, Stencil, MAX_DIM};
use crate::metric::Lagrangian;
use crate::stationary::{randers_from_stationary, shift_slice, spacelike_slice_check, StationaryMetric};

const N: usize = MAX_DIM + 1;
type Mat = [[f64; N]; N];

fn lorentz_at(s: &StationaryMetric, x: &[f64]) -> Mat {
    let n = s.dim();
    let g = s.g_at(x);
    let w = s.omega_at(x);
    let mut m = [[0.0; N]; N];
    m[0][0] = -1.0;
    for i in 0..n {
        m[0][i + 1] = w[i];
        m[i + 1][0] = w[i];
        for j in 0..n {
            m[i + 1][j + 1] = g[i * n + j];
        }
    }
    m
}

/// Matrix of `G` in coordinates `(t, x^1, .., x^n)`, row-major.
pub fn assemble_lorentz(s: &StationaryMetric, x: &[f64]) -> Result<Vec<f64>> {
    s.domain().check_point(x)?;
    let n = s.dim() + 1;
    let m = lorentz_at(s, x);
    Ok((0..n).flat_map(|i| (0..n).map(move |j| m[i][j])).collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct SignatureReport {
    pub nodes_checked: usize,
    pub lorentzian: bool,
    /// Node whose spectrum deviates from `(-, +, .., +)`, if any.
    pub first_bad_node: Option<usize>,
    /// Smallest `|eigenvalue|` seen over all nodes.
    pub min_abs_eigenvalue: f64,
}

/// Eigenvalue signature of `G` at every unmasked node.
pub fn signature_check(s: &StationaryMetric) -> SignatureReport {
    let d = s.domain();
    let n = s.dim() + 1;
    let nodes: Vec<usize> = d.active_nodes().collect();
    let spectra: Vec<(usize, usize, f64)> = nodes
        .par_iter()
        .map(|&i| {
            let x = d.coords(i);
            let m = lorentz_at(s, &x[..s.dim()]);
            let mat = DMatrix::from_fn(n, n, |a, b| m[a][b]);
            let ev = SymmetricEigen::new(mat).eigenvalues;
            let neg = ev.iter().filter(|&&e| e < 0.0).count();
            let min = ev.iter().map(|e| e.abs()).fold(f64::INFINITY, f64::min);
            (i, neg, min)
        })
        .collect();
    let first_bad_node = spectra.iter().find(|s| s.1 != 1 || s.2 == 0.0).map(|s| s.0);
    SignatureReport {
        nodes_checked: spectra.len(),
        lorentzian: first_bad_node.is_none(),
        first_bad_node,
        min_abs_eigenvalue: spectra.iter().map(|s| s.2).fold(f64::INFINITY, f64::min),
    }
}

/// Sampled null geodesic: rows `(t, x^1, .., x^n)` and their velocities.
#[derive(Clone, Debug, Serialize)]
pub struct NullGeodesic {
    pub dim: usize,
    pub dtau: f64,
    pub tau: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    /// `|G(v, v)| / (1 + |v|^2)` per sample.
    pub null_defect: Vec<f64>,
    /// The curve left the domain before all steps were taken.
    pub truncated: bool,
}

impl NullGeodesic {
    pub fn initial_tdot(&self) -> f64 {
        self.velocities[0][0]
    }

    pub fn max_null_defect(&self) -> f64 {
        self.null_defect.iter().copied().fold(0.0, f64::max)
    }
}

/// Future-pointing `dt/dtau` making `(tdot, v)` null:
/// `tdot = omega(v) + sqrt(omega(v)^2 + g(v, v))`.
pub fn null_time_rate(s: &StationaryMetric, x: &[f64], v: &[f64]) -> f64 {
    let n = s.dim();
    let g = s.g_at(x);
    let w = s.omega_at(x);
    let wv: f64 = (0..n).map(|i| w[i] * v[i]).sum();
    let mut gvv = 0.0;
    for i in 0..n {
        for j in 0..n {
            gvv += g[i * n + j] * v[i] * v[j];
        }
    }
    wv + (wv * wv + gvv).sqrt()
}

struct Geometry<'a> {
    s: &'a StationaryMetric,
    n: usize,
    fd: f64,
}

impl Geometry<'_> {
    /// `dv^m/dtau = -Gamma^m_ab v^a v^b`; `G` does not depend on `t`.
    fn acceleration(&self, x: &[f64], v: &[f64; N]) -> [f64; N] {
        let n = self.n + 1;
        let m = lorentz_at(self.s, x);
        let mut dm = [[[0.0; N]; N]; N];
        let mut xp = [0.0; MAX_DIM];
        for k in 0..self.n {
            xp[..self.n].copy_from_slice(&x[..self.n]);
            xp[k] = x[k] + self.fd;
            let up = lorentz_at(self.s, &xp[..self.n]);
            xp[k] = x[k] - self.fd;
            let dn = lorentz_at(self.s, &xp[..self.n]);
            for a in 0..n {
                for b in 0..n {
                    dm[k + 1][a][b] = (up[a][b] - dn[a][b]) / (2.0 * self.fd);
                }
            }
        }
        // Gamma_{l,ab} v^a v^b = sum (d_a G_lb - 1/2 d_l G_ab) v^a v^b
        let mut low = [0.0; N];
        for (l, out) in low.iter_mut().enumerate().take(n) {
            let mut acc = 0.0;
            for a in 0..n {
                for b in 0..n {
                    acc += (dm[a][l][b] - 0.5 * dm[l][a][b]) * v[a] * v[b];
                }
            }
            *out = acc;
        }
        let inv = DMatrix::from_fn(n, n, |a, b| m[a][b])
            .try_inverse()
            .unwrap_or_else(|| DMatrix::from_element(n, n, f64::NAN));
        let mut out = [0.0; N];
        for (k, o) in out.iter_mut().enumerate().take(n) {
            *o = -(0..n).map(|l| inv[(k, l)] * low[l]).sum::<f64>();
        }
        out
    }

    fn defect(&self, x: &[f64], v: &[f64; N]) -> f64 {
        let n = self.n + 1;
        let m = lorentz_at(self.s, x);
        let mut q = 0.0;
        let mut norm = 0.0;
        for a in 0..n {
            norm += v[a] * v[a];
            for b in 0..n {
                q += m[a][b] * v[a] * v[b];
            }
        }
        q.abs() / (1.0 + norm)
    }
}

/// Fixed-step RK4 integration of the geodesic equation from `x0` with
/// spatial velocity `v0` on the future null branch. Christoffel symbols use
/// central differences with step `fd_step`.
pub fn integrate_null_geodesic(
    s: &StationaryMetric,
    x0: &[f64],
    v0: &[f64],
    steps: usize,
    dtau: f64,
    fd_step: f64,
) -> Result<NullGeodesic> {
    let n = s.dim();
    if x0.len() != n || v0.len() != n {
        return Err(Error::Argument(format!("expected {n}-dimensional initial data")));
    }
    if v0.iter().all(|&c| c == 0.0) {
        return Err(Error::Argument("initial spatial velocity is zero".into()));
    }
    if !(dtau > 0.0 && fd_step > 0.0) {
        return Err(Error::Argument("dtau and fd_step must be positive".into()));
    }
    let domain = s.domain();
    domain.check_point(x0)?;
    let geo = Geometry { s, n, fd: fd_step };
    let tdot = null_time_rate(s, x0, v0);
    let mut pos = [0.0; N];
    let mut vel = [0.0; N];
    pos[1..=n].copy_from_slice(x0);
    vel[0] = tdot;
    vel[1..=n].copy_from_slice(v0);
    let row = |p: &[f64; N]| p[..=n].to_vec();
    let mut out = NullGeodesic {
        dim: n,
        dtau,
        tau: vec![0.0],
        points: vec![row(&pos)],
        velocities: vec![row(&vel)],
        null_defect: vec![geo.defect(&pos[1..=n], &vel)],
        truncated: false,
    };
    let inside = |p: &[f64; N]| domain.check_point(&p[1..=n]).is_ok();
    for step in 1..=steps {
        let f = |p: &[f64; N], v: &[f64; N]| (*v, geo.acceleration(&p[1..=n], v));
        let axpy = |a: &[f64; N], s: f64, b: &[f64; N]| {
            let mut o = *a;
            for i in 0..N {
                o[i] += s * b[i];
            }
            o
        };
        let (k1x, k1v) = f(&pos, &vel);
        let p2 = axpy(&pos, 0.5 * dtau, &k1x);
        let v2 = axpy(&vel, 0.5 * dtau, &k1v);
        if !inside(&p2) {
            out.truncated = true;
            break;
        }
        let (k2x, k2v) = f(&p2, &v2);
        let p3 = axpy(&pos, 0.5 * dtau, &k2x);
        let v3 = axpy(&vel, 0.5 * dtau, &k2v);
        if !inside(&p3) {
            out.truncated = true;
            break;
        }
        let (k3x, k3v) = f(&p3, &v3);
        let p4 = axpy(&pos, dtau, &k3x);
        let v4 = axpy(&vel, dtau, &k3v);
        if !inside(&p4) {
            out.truncated = true;
            break;
        }
        let (k4x, k4v) = f(&p4, &v4);
        let mut np = pos;
        let mut nv = vel;
        for i in 0..=n {
            np[i] += dtau / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]);
            nv[i] += dtau / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
        }
        if !inside(&np) {
            out.truncated = true;
            break;
        }
        pos = np;
        vel = nv;
        out.tau.push(step as f64 * dtau);
        out.points.push(row(&pos));
        out.velocities.push(row(&vel));
        out.null_defect.push(geo.defect(&pos[1..=n], &vel));
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct FermatReport {
    /// Max over samples of `|dt/dtau - F(x, dx/dtau)|`.
    pub max_rate_defect: f64,
    /// F-length of the projected polyline.
    pub f_length: f64,
    /// Elapsed coordinate time along the curve.
    pub elapsed_time: f64,
    pub start_node: usize,
    pub end_node: usize,
    /// Graph distance `dist+` between the nodes nearest to the endpoints.
    pub distance: f64,
    /// `(f_length - distance) / distance`.
    pub gap: f64,
    pub abs_gap: f64,
    pub truncated: bool,
}

/// Compares the time function along a null geodesic with the Randers metric
/// of the slice, and the projected curve with the graph distance.
pub fn fermat_projection_check(
    s: &StationaryMetric,
    geodesic: &NullGeodesic,
    stencil: Stencil,
) -> Result<FermatReport> {
    let n = s.dim();
    if geodesic.dim != n || geodesic.points.len() < 2 {
        return Err(Error::Argument("geodesic does not match the spacetime or is too short".into()));
    }
    let f = randers_from_stationary(s)?;
    let mut rate: f64 = 0.0;
    for (p, v) in geodesic.points.iter().zip(&geodesic.velocities) {
        rate = rate.max((v[0] - f.eval(&p[1..], &v[1..])).abs());
    }
    let mut length = 0.0;
    for w in geodesic.points.windows(2) {
        let mid: Vec<f64> = (1..=n).map(|i| 0.5 * (w[0][i] + w[1][i])).collect();
        let dx: Vec<f64> = (1..=n).map(|i| w[1][i] - w[0][i]).collect();
        length += f.eval(&mid, &dx);
    }
    let first = &geodesic.points[0];
    let last = &geodesic.points[geodesic.points.len() - 1];
    let domain: &Arc<GridDomain> = s.domain();
    let a = domain.check_point(&first[1..])?;
    let b = domain.check_point(&last[1..])?;
    let graph = build_graph(domain.clone(), &f, stencil)?;
    let distance = graph.shortest_paths(a)?[b];
    let gap = (length - distance) / distance;
    Ok(FermatReport {
        max_rate_defect: rate,
        f_length: length,
        elapsed_time: last[0] - first[0],
        start_node: a,
        end_node: b,
        distance,
        gap,
        abs_gap: gap.abs(),
        truncated: geodesic.truncated,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RoundtripReport {
    pub edges: usize,
    /// Max `|w_resliced - w_changed|` over all edges.
    pub max_weight_difference: f64,
    pub spacelike_margin: f64,
}

/// Edge weights of the Randers metric of the re-sliced spacetime against
/// those of `F + df`, both with edge-difference `df`.
pub fn slice_change_roundtrip(
    s: &StationaryMetric,
    f: &ScalarField,
    stencil: Stencil,
) -> Result<RoundtripReport> {
    let fan = direction_fan(s.dim(), stencil);
    let slice = spacelike_slice_check(s, f, &fan)?;
    if !slice.spacelike {
        return Err(Error::Admissibility {
            node: slice.worst_node,
            direction: slice.worst_direction,
            value: slice.min_margin,
        });
    }
    let base = randers_from_stationary(s)?;
    let changed = apply_projective_change(&base, f, GradientScheme::EdgeDifference, stencil)?;
    let resliced = randers_from_stationary(&shift_slice(s, f, GradientScheme::EdgeDifference)?)?;
    let domain = s.domain().clone();
    let g1 = build_graph(domain.clone(), &changed, stencil)?;
    let mut max: f64 = 0.0;
    for (x, y, w) in g1.all_edges() {
        max = max.max((resliced.edge_weight(&domain, x, y) - w).abs());
    }
    Ok(RoundtripReport {
        edges: g1.edge_count(),
        max_weight_difference: max,
        spacelike_margin: slice.min_margin,
    })
}
