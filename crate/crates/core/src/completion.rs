//! Completing a Finsler metric by a trivial projective change, and the
//! obstruction when `D+ + D-` is not proper.
//!
//! With `f = (D- - D+)/2` and a smoothing `g` of it satisfying `|g - f| <= eps1`,
//! the change `F + dg/2` has
//!
//! ```text
//! dist+(p, x) = D+(x) + (g(x) - g(p))/2
//!            >= D+(x) + (f(x) - f(p))/2 - eps1
//!             = 3/4 D+(x) + 1/4 D-(x) - eps1
//! ```
//!
//! (using `f(p) = 0`), and symmetrically `dist-(p, x) >= 1/4 D+ + 3/4 D- - eps1`.
//! The certificate constant is therefore `C(eps1) = eps1`; with `eps1 = 1`
//! this is the classical bound with constant 1. For `g = f` both bounds hold
//! with equality.

use std::sync::Arc;

use serde::Serialize;

use crate::change::{apply_projective_change, AdmissibilityReport, GradientScheme, ProjectiveChange};
use crate::distance::{backward_distance, build_graph, forward_distance, DistanceField, Orientation, StencilGraph};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{GridDomain, Stencil};
use crate::metric::{Lagrangian, MetricField};
use crate::properness::{classify_sublevel, Verdict};

/// Absolute tolerance for statements that are exact on the graph.
pub const EXACT_TOL: f64 = 1e-12;

/// `f = (D- - D+)/2`.
pub fn candidate_f(dplus: &DistanceField, dminus: &DistanceField) -> Result<ScalarField> {
    dplus.check_compatible(dminus)?;
    if dplus.orientation() != Orientation::Forward || dminus.orientation() != Orientation::Backward {
        return Err(Error::Argument("expected a forward and a backward distance field".into()));
    }
    let values = dplus
        .values()
        .iter()
        .zip(dminus.values())
        .map(|(p, m)| 0.5 * (m - p))
        .collect();
    ScalarField::new(dplus.domain().clone(), values)
}

#[derive(Clone, Debug, Serialize)]
pub struct LipschitzReport {
    /// Max of `f(x) - f(y) - w(x -> y)` over all graph edges.
    pub max_edge_violation: f64,
    pub worst_edge: (usize, usize),
    /// Max of `f(x) - f(y) - dist+(x, y)` over the sampled pairs.
    pub max_pair_violation: f64,
    pub pairs_checked: usize,
    pub max_violation: f64,
}

/// Checks `f(x) - f(y) <= dist+(x, y)` on all edges and the given pairs.
pub fn lipschitz_check(
    f: &ScalarField,
    graph: &StencilGraph,
    pairs: &[(usize, usize)],
) -> Result<LipschitzReport> {
    let mut worst = (f64::NEG_INFINITY, (0, 0));
    for (x, y, w) in graph.all_edges() {
        let v = f.get(x) - f.get(y) - w;
        if v > worst.0 {
            worst = (v, (x, y));
        }
    }
    let mut pair_max = f64::NEG_INFINITY;
    let mut sources: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    sources.sort_unstable();
    sources.dedup();
    for s in sources {
        let dist = graph.shortest_paths(s)?;
        for &(x, y) in pairs.iter().filter(|p| p.0 == s) {
            pair_max = pair_max.max(f.get(x) - f.get(y) - dist[y]);
        }
    }
    Ok(LipschitzReport {
        max_edge_violation: worst.0,
        worst_edge: worst.1,
        max_pair_violation: pair_max,
        pairs_checked: pairs.len(),
        max_violation: worst.0.max(pair_max),
    })
}

/// `F + d(g)/2` together with the slope data behind its admissibility.
#[derive(Clone, Debug)]
pub struct CompletedMetric {
    pub change: ProjectiveChange,
    /// Max over edges of `(g(x) - g(y)) / w(x -> y)`; at most `1.5` when `g`
    /// is 1.5-Lipschitz, which gives `-dg/2 <= 3/4 F`.
    pub max_slope_ratio: f64,
    pub admissibility: AdmissibilityReport,
}

impl CompletedMetric {
    /// Whether the slope bound that guarantees `F + dg/2 >= F/4` holds.
    pub fn within_lipschitz_budget(&self, eps2: f64) -> bool {
        self.max_slope_ratio <= 1.0 + eps2 + EXACT_TOL
    }
}

/// Builds `F + d(f_smooth)/2` (edge-difference scheme) and rejects it if it
/// is not positive on every edge and fan direction.
pub fn completed_metric(
    metric: &MetricField,
    f_smooth: &ScalarField,
    stencil: Stencil,
) -> Result<CompletedMetric> {
    let domain = f_smooth.domain().clone();
    let half = f_smooth.scaled(0.5);
    let change = apply_projective_change(metric, &half, GradientScheme::EdgeDifference, stencil)?;
    let mut ratio = f64::NEG_INFINITY;
    let graph = build_graph(domain, metric, stencil)?;
    for (x, y, w) in graph.all_edges() {
        ratio = ratio.max((f_smooth.get(x) - f_smooth.get(y)) / w);
    }
    let admissibility = change.admissibility(stencil);
    Ok(CompletedMetric {
        change,
        max_slope_ratio: ratio,
        admissibility,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CertificateVerdict {
    #[serde(rename = "CERTIFIED")]
    Certified,
    #[serde(rename = "FAILED")]
    Failed,
}

/// Nodewise evidence for the lower bounds on the completed distances.
#[derive(Clone, Debug, Serialize)]
pub struct CompletionCertificate {
    pub base_point: usize,
    pub eps1: f64,
    /// `C(eps1)` in `dist+ >= 3/4 D+ + 1/4 D- - C`.
    pub bound_constant: f64,
    /// `dist+_{F+dg/2}(p, x) - (3/4 D+ + 1/4 D- - C)`; NaN on masked nodes.
    #[serde(skip)]
    pub forward_margin: Vec<f64>,
    /// `dist-_{F+dg/2}(p, x) - (1/4 D+ + 3/4 D- - C)`.
    #[serde(skip)]
    pub backward_margin: Vec<f64>,
    pub min_forward_margin: f64,
    pub worst_forward_node: usize,
    pub min_backward_margin: f64,
    pub worst_backward_node: usize,
    /// Max of `|dist+ - (3/4 D+ + 1/4 D-)|` and its backward mirror; zero
    /// (up to rounding) when `g = f`.
    pub max_deviation_from_exact: f64,
    /// Max defect of `dist+_{F+dg/2} = D+ + (g(x) - g(p))/2` and its mirror.
    pub distance_identity_defect: f64,
    /// `max |g - f|`.
    pub approximation_error: f64,
    /// Min over edges of the changed weight relative to the original one.
    pub admissibility_margin: f64,
    pub verdict: CertificateVerdict,
    pub failing_nodes: Vec<usize>,
}

/// Computes both completed distance fields from `p` and checks the lower
/// bounds with `C(eps1) = eps1` at every unmasked node.
pub fn completeness_certificate(
    change: &ProjectiveChange,
    dplus: &DistanceField,
    dminus: &DistanceField,
    f_smooth: &ScalarField,
    eps1: f64,
    stencil: Stencil,
) -> Result<CompletionCertificate> {
    if !(eps1 >= 0.0) {
        return Err(Error::Argument(format!("eps1 must be nonnegative, got {eps1}")));
    }
    let f = candidate_f(dplus, dminus)?;
    let domain: Arc<GridDomain> = dplus.domain().clone();
    let p = dplus.base();
    let admissibility = change.admissibility(stencil);
    let graph = build_graph(domain.clone(), change, stencil)?;
    let cplus = forward_distance(&graph, p)?;
    let cminus = backward_distance(&graph, p)?;
    let c = eps1;
    let mut fwd = vec![f64::NAN; domain.len()];
    let mut bwd = vec![f64::NAN; domain.len()];
    let mut cert = CompletionCertificate {
        base_point: p,
        eps1,
        bound_constant: c,
        forward_margin: Vec::new(),
        backward_margin: Vec::new(),
        min_forward_margin: f64::INFINITY,
        worst_forward_node: p,
        min_backward_margin: f64::INFINITY,
        worst_backward_node: p,
        max_deviation_from_exact: 0.0,
        distance_identity_defect: 0.0,
        approximation_error: f_smooth.max_abs_diff(&f),
        admissibility_margin: admissibility.min_edge_ratio,
        verdict: CertificateVerdict::Certified,
        failing_nodes: Vec::new(),
    };
    let gp = f_smooth.get(p);
    for x in domain.active_nodes() {
        let (dp, dm) = (dplus.get(x), dminus.get(x));
        let (sp, sm) = (cplus.get(x), cminus.get(x));
        let exact_p = 0.75 * dp + 0.25 * dm;
        let exact_m = 0.25 * dp + 0.75 * dm;
        fwd[x] = sp - (exact_p - c);
        bwd[x] = sm - (exact_m - c);
        if fwd[x] < cert.min_forward_margin {
            cert.min_forward_margin = fwd[x];
            cert.worst_forward_node = x;
        }
        if bwd[x] < cert.min_backward_margin {
            cert.min_backward_margin = bwd[x];
            cert.worst_backward_node = x;
        }
        cert.max_deviation_from_exact = cert
            .max_deviation_from_exact
            .max((sp - exact_p).abs())
            .max((sm - exact_m).abs());
        let gx = f_smooth.get(x);
        cert.distance_identity_defect = cert
            .distance_identity_defect
            .max((sp - (dp + 0.5 * (gx - gp))).abs())
            .max((sm - (dm + 0.5 * (gp - gx))).abs());
        if !(fwd[x] >= -EXACT_TOL && bwd[x] >= -EXACT_TOL) {
            cert.failing_nodes.push(x);
        }
    }
    let ok = cert.failing_nodes.is_empty()
        && admissibility.admissible()
        && cert.approximation_error <= eps1 + EXACT_TOL;
    if !ok {
        cert.verdict = CertificateVerdict::Failed;
    }
    cert.forward_margin = fwd;
    cert.backward_margin = bwd;
    Ok(cert)
}

#[derive(Clone, Debug, Serialize)]
pub struct ObstructionReport {
    pub radius: f64,
    /// Number of nodes in `B_R = {D+ + D- <= R}`.
    pub ball_nodes: usize,
    /// Max defect of `dist+_{F+df}(p, x) = D+ + f(x) - f(p)` and its mirror on `B_R`.
    pub distance_identity_defect: f64,
    /// Max of `dist+_{F+df}(p,x) - (R + f(x) - f(p))` and its mirror on `B_R`.
    pub max_radius_bound_excess: f64,
    /// Max of `|f(p) - f(x)| - R` on `B_R`.
    pub max_oscillation_excess: f64,
    /// Max of `max(dist+, dist-) - 3R` on `B_R`.
    pub max_ball_excess: f64,
    pub ball_verdict: Verdict,
    pub passed: bool,
}

/// Checks, for an admissible `f`, the bounds that tie `B_R` to the balls of
/// `F + df`; if `B_R` reaches an end, no such change can be complete.
pub fn obstruction_check(
    metric: &MetricField,
    f: &ScalarField,
    dplus: &DistanceField,
    dminus: &DistanceField,
    radius: f64,
    stencil: Stencil,
) -> Result<ObstructionReport> {
    if !(radius > 0.0) {
        return Err(Error::Argument(format!("R must be positive, got {radius}")));
    }
    dplus.check_compatible(dminus)?;
    let domain = dplus.domain().clone();
    let p = dplus.base();
    let change = apply_projective_change(metric, f, GradientScheme::EdgeDifference, stencil)?;
    let graph = build_graph(domain.clone(), &change, stencil)?;
    let cplus = forward_distance(&graph, p)?;
    let cminus = backward_distance(&graph, p)?;
    let sum: Vec<f64> = dplus
        .values()
        .iter()
        .zip(dminus.values())
        .map(|(a, b)| a + b)
        .collect();
    let fp = f.get(p);
    let mut report = ObstructionReport {
        radius,
        ball_nodes: 0,
        distance_identity_defect: 0.0,
        max_radius_bound_excess: f64::NEG_INFINITY,
        max_oscillation_excess: f64::NEG_INFINITY,
        max_ball_excess: f64::NEG_INFINITY,
        ball_verdict: classify_sublevel(&domain, &sum, radius).verdict,
        passed: false,
    };
    for x in domain.active_nodes().filter(|&x| sum[x] <= radius) {
        report.ball_nodes += 1;
        let fx = f.get(x);
        let (sp, sm) = (cplus.get(x), cminus.get(x));
        report.distance_identity_defect = report
            .distance_identity_defect
            .max((sp - (dplus.get(x) + fx - fp)).abs())
            .max((sm - (dminus.get(x) + fp - fx)).abs());
        report.max_radius_bound_excess = report
            .max_radius_bound_excess
            .max(sp - (radius + fx - fp))
            .max(sm - (radius + fp - fx));
        report.max_oscillation_excess = report.max_oscillation_excess.max((fp - fx).abs() - radius);
        report.max_ball_excess = report.max_ball_excess.max(sp.max(sm) - 3.0 * radius);
    }
    report.passed = report.distance_identity_defect <= EXACT_TOL
        && report.max_radius_bound_excess <= EXACT_TOL
        && report.max_oscillation_excess <= EXACT_TOL
        && report.max_ball_excess <= EXACT_TOL;
    Ok(report)
}

/// Edge weights of `F + df` in both directions along `axis` at `node`.
pub fn axis_weights<L: Lagrangian + ?Sized>(
    metric: &L,
    domain: &GridDomain,
    node: usize,
    axis: usize,
) -> Option<(f64, f64)> {
    let mut e = [0isize; crate::grid::MAX_DIM];
    e[axis] = 1;
    let east = domain.neighbor(node, &e)?;
    e[axis] = -1;
    let west = domain.neighbor(node, &e)?;
    Some((
        metric.edge_weight(domain, node, east),
        metric.edge_weight(domain, node, west),
    ))
}
