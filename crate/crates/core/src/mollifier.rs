//! Smoothing a Lipschitz function by convolution on overlapping boxes, glued
//! by a partition of unity.
//!
//! Convolution happens in grid coordinates. Each box `p` carries the weight
//! profile `mu_p = chi * b_p / sum_q b_q`, where `b_p` is a product of bumps
//! vanishing on the box faces and `chi` is a smooth cutoff that is zero
//! within `r + reach` of the domain boundary or a hole. The remaining weight
//! `1 - chi` passes the raw function through, so every node is covered and
//! no kernel footprint leaves the domain.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::distance::StencilGraph;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{GridDomain, MAX_DIM};

/// Tolerance for the Lipschitz bound and the discrete smoothness bound.
pub const LIPSCHITZ_TOL: f64 = 1e-9;
/// Allowed deviation of `sum mu_p` from 1.
pub const PARTITION_TOL: f64 = 1e-12;

fn bump(t: f64) -> f64 {
    if t.abs() < 1.0 {
        (-1.0 / (1.0 - t * t)).exp()
    } else {
        0.0
    }
}

/// Smooth step from 0 (at `t <= 0`) to 1 (at `t >= 1`).
fn smooth_step(t: f64) -> f64 {
    let e = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        e(t) / (e(t) + e(1.0 - t))
    }
}

fn strides(domain: &GridDomain) -> [usize; MAX_DIM] {
    let mut s = [0usize; MAX_DIM];
    let mut acc = 1;
    for (a, &n) in domain.shape().iter().enumerate() {
        s[a] = acc;
        acc *= n;
    }
    s
}

/// Tabulated `exp(-1/(1 - |xi/r|^2))` on the grid offsets with `|xi| < r`,
/// scaled so that `sum sigma * h^n = 1`.
#[derive(Clone, Debug)]
pub struct BumpKernel {
    radius: f64,
    h: f64,
    dim: usize,
    offsets: Vec<[isize; MAX_DIM]>,
    values: Vec<f64>,
}

impl BumpKernel {
    pub fn new(radius: f64, h: f64, dim: usize) -> Result<Self> {
        if !(h > 0.0) || !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::Argument(format!("bad kernel grid: h = {h}, dim = {dim}")));
        }
        if !(radius >= 2.0 * h) || !radius.is_finite() {
            return Err(Error::Argument(format!(
                "kernel radius {radius} is below two grid spacings ({})",
                2.0 * h
            )));
        }
        let m = (radius / h).ceil() as isize;
        let mut offsets = Vec::new();
        let mut values = Vec::new();
        let range = |a: usize| if a < dim { -m..=m } else { 0..=0 };
        for k in range(2) {
            for j in range(1) {
                for i in range(0) {
                    let rho = ((i * i + j * j + k * k) as f64).sqrt() * h / radius;
                    if rho < 1.0 {
                        offsets.push([i, j, k]);
                        values.push(bump(rho));
                    }
                }
            }
        }
        let mass: f64 = values.iter().sum::<f64>() * h.powi(dim as i32);
        for v in &mut values {
            *v /= mass;
        }
        Ok(Self {
            radius,
            h,
            dim,
            offsets,
            values,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn offsets(&self) -> &[[isize; MAX_DIM]] {
        &self.offsets
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `sum sigma * h^n`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.h.powi(self.dim as i32)
    }

    /// Kernel value at an integer offset; zero off the footprint.
    pub fn value_at(&self, offset: &[isize; MAX_DIM]) -> f64 {
        self.offsets
            .iter()
            .position(|o| o == offset)
            .map_or(0.0, |i| self.values[i])
    }

    /// `sum |sigma(xi) - sigma(xi - e_a)| h^n`, which bounds second
    /// differences of a convolution along axis `a`.
    pub fn axis_variation(&self, axis: usize) -> f64 {
        let mut shifted: Vec<[isize; MAX_DIM]> = self.offsets.clone();
        for o in &mut shifted {
            o[axis] += 1;
        }
        let mut keys = self.offsets.clone();
        keys.extend(shifted.iter().filter(|o| !self.offsets.contains(o)));
        let sum: f64 = keys
            .iter()
            .map(|xi| {
                let mut back = *xi;
                back[axis] -= 1;
                (self.value_at(xi) - self.value_at(&back)).abs()
            })
            .sum();
        sum * self.h.powi(self.dim as i32)
    }
}

pub fn bump_kernel(radius: f64, h: f64, dim: usize) -> Result<BumpKernel> {
    BumpKernel::new(radius, h, dim)
}

/// `sum_xi sigma(xi) f(x - xi) h^n` at each listed node.
pub fn convolve_patch(f: &ScalarField, kernel: &BumpKernel, nodes: &[usize]) -> Result<Vec<f64>> {
    let domain = f.domain();
    let dim = domain.dim();
    if kernel.dim != dim || (kernel.h - domain.h()).abs() > 1e-12 * domain.h() {
        return Err(Error::Argument("kernel does not match the field grid".into()));
    }
    let st = strides(domain);
    let shape = domain.shape();
    let reach = (kernel.radius / kernel.h).ceil() as usize;
    let lin: Vec<isize> = kernel
        .offsets
        .iter()
        .map(|o| (0..dim).map(|a| o[a] * st[a] as isize).sum())
        .collect();
    let cell = kernel.h.powi(dim as i32);
    let vals = f.values();
    nodes
        .iter()
        .map(|&x| {
            let mi = domain.multi_index(x);
            let inner = (0..dim).all(|a| mi[a] >= reach && mi[a] + reach < shape[a]);
            let mut acc = 0.0;
            for (k, (&s, o)) in kernel.values.iter().zip(&kernel.offsets).enumerate() {
                let y = if inner {
                    Some((x as isize - lin[k]) as usize)
                } else {
                    let neg = [-o[0], -o[1], -o[2]];
                    domain.neighbor(x, &neg)
                };
                match y {
                    Some(y) if domain.is_active(y) => acc += s * vals[y],
                    _ => {
                        return Err(Error::Domain(format!(
                            "kernel footprint of node {x} leaves the domain or touches the mask"
                        )))
                    }
                }
            }
            Ok(acc * cell)
        })
        .collect()
}

/// Axis-aligned box `center +- half_width`.
#[derive(Clone, Debug, Serialize)]
pub struct Patch {
    pub center: Vec<f64>,
    pub half_width: Vec<f64>,
}

impl Patch {
    /// Product of bumps, zero on and outside the faces.
    pub fn profile(&self, x: &[f64]) -> f64 {
        self.center
            .iter()
            .zip(&self.half_width)
            .zip(x)
            .map(|((c, w), xa)| bump((xa - c) / w))
            .product()
    }

    fn index_range(&self, domain: &GridDomain, axis: usize, margin: f64) -> (usize, usize) {
        let h = domain.h();
        let o = domain.origin()[axis];
        let n = domain.shape()[axis];
        let lo = self.center[axis] - self.half_width[axis] - margin;
        let hi = self.center[axis] + self.half_width[axis] + margin;
        let a = ((lo - o) / h).floor().max(0.0) as usize;
        let b = (((hi - o) / h).ceil().max(0.0) as usize).min(n - 1);
        (a, b)
    }

    /// Unmasked nodes strictly inside the box dilated by `margin`, ascending.
    pub fn nodes(&self, domain: &GridDomain, margin: f64) -> Vec<usize> {
        let dim = domain.dim();
        let mut ranges = [(0usize, 0usize); MAX_DIM];
        for (a, r) in ranges.iter_mut().enumerate().take(dim) {
            *r = self.index_range(domain, a, margin);
        }
        let mut out = Vec::new();
        for k in ranges[2].0..=ranges[2].1 {
            for j in ranges[1].0..=ranges[1].1 {
                for i in ranges[0].0..=ranges[0].1 {
                    let Some(idx) = domain.index_of(&[i, j, k][..dim]) else {
                        continue;
                    };
                    if !domain.is_active(idx) {
                        continue;
                    }
                    let x = domain.coords(idx);
                    let inside = (0..dim)
                        .all(|a| (x[a] - self.center[a]).abs() < self.half_width[a] + margin);
                    if inside {
                        out.push(idx);
                    }
                }
            }
        }
        out
    }
}

/// Convolution output of one patch on its node set.
#[derive(Clone, Debug)]
pub struct PatchField {
    pub patch: usize,
    pub nodes: Vec<usize>,
    pub values: Vec<f64>,
}

impl PatchField {
    pub fn get(&self, node: usize) -> Option<f64> {
        self.nodes.binary_search(&node).ok().map(|i| self.values[i])
    }
}

/// Boxes, their node sets, and the partition of unity. The weight of the
/// pass-through member is `passthrough[x]`; `weights[x]` lists `(p, mu_p(x))`
/// for the boxes with `mu_p(x) > 0`.
#[derive(Clone, Debug)]
pub struct PatchCover {
    domain: Arc<GridDomain>,
    patches: Vec<Patch>,
    nodes: Vec<Vec<usize>>,
    passthrough: Vec<f64>,
    weights: Vec<Vec<(usize, f64)>>,
    overlap_bound: usize,
}

impl PatchCover {
    /// A cover from explicit parts. The partition is checked by [`glue`].
    pub fn new(
        domain: Arc<GridDomain>,
        patches: Vec<Patch>,
        nodes: Vec<Vec<usize>>,
        passthrough: Vec<f64>,
        weights: Vec<Vec<(usize, f64)>>,
    ) -> Result<Self> {
        let n = domain.len();
        if nodes.len() != patches.len() || passthrough.len() != n || weights.len() != n {
            return Err(Error::Argument("inconsistent patch cover sizes".into()));
        }
        if weights.iter().flatten().any(|&(p, _)| p >= patches.len()) {
            return Err(Error::Argument("weight refers to a missing patch".into()));
        }
        let overlap_bound = weights.iter().map(Vec::len).max().unwrap_or(0);
        let mut nodes = nodes;
        for v in &mut nodes {
            v.sort_unstable();
            v.dedup();
        }
        Ok(Self {
            domain,
            patches,
            nodes,
            passthrough,
            weights,
            overlap_bound,
        })
    }

    /// Regular layout of boxes of side about `4r` with 50% overlap, so that
    /// at most `2^n` boxes meet at any point.
    pub fn brick(domain: Arc<GridDomain>, radius: f64, reach: f64) -> Result<Self> {
        let dim = domain.dim();
        let dist = clearance(&domain);
        let band = 2.0 * radius;
        let chi: Vec<f64> = dist
            .iter()
            .map(|&d| smooth_step((d - radius - reach) / band))
            .collect();
        let ext = domain.extent();
        let mut counts = [1usize; MAX_DIM];
        let mut steps = [0.0; MAX_DIM];
        for a in 0..dim {
            let m = (ext[a] / (2.0 * radius)).round().max(1.0) as usize;
            counts[a] = m + 1;
            steps[a] = ext[a] / m as f64;
        }
        let mut patches = Vec::new();
        for k in 0..counts[2] {
            for j in 0..counts[1] {
                for i in 0..counts[0] {
                    let idx = [i, j, k];
                    patches.push(Patch {
                        center: (0..dim)
                            .map(|a| domain.origin()[a] + idx[a] as f64 * steps[a])
                            .collect(),
                        half_width: steps[..dim].to_vec(),
                    });
                }
            }
        }
        let n = domain.len();
        let mut raw: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut nodes = Vec::with_capacity(patches.len());
        for (p, patch) in patches.iter().enumerate() {
            let set: Vec<usize> = patch
                .nodes(&domain, reach)
                .into_iter()
                .filter(|&x| dist[x] > radius)
                .collect();
            for &x in &set {
                if chi[x] > 0.0 {
                    let b = patch.profile(&domain.coords(x)[..dim]);
                    if b > 0.0 {
                        raw[x].push((p, b));
                    }
                }
            }
            nodes.push(set);
        }
        let mut passthrough = vec![1.0; n];
        for x in domain.active_nodes() {
            if chi[x] == 0.0 {
                raw[x].clear();
                continue;
            }
            let s: f64 = raw[x].iter().map(|e| e.1).sum();
            if !(s > 0.0) {
                return Err(Error::Construction(format!("node {x} is not covered by any patch")));
            }
            for e in &mut raw[x] {
                e.1 *= chi[x] / s;
            }
            passthrough[x] = 1.0 - chi[x];
        }
        let mut cover = Self::new(domain, patches, nodes, passthrough, raw)?;
        cover.overlap_bound = 1 << dim;
        Ok(cover)
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn patch_nodes(&self, p: usize) -> &[usize] {
        &self.nodes[p]
    }

    pub fn passthrough(&self, node: usize) -> f64 {
        self.passthrough[node]
    }

    pub fn weights(&self, node: usize) -> &[(usize, f64)] {
        &self.weights[node]
    }

    /// `k`: the bound on the number of boxes meeting at a node.
    pub fn overlap_bound(&self) -> usize {
        self.overlap_bound
    }

    /// Largest `|passthrough + sum mu_p - 1|` over unmasked nodes.
    pub fn partition_deficit(&self) -> f64 {
        self.domain
            .active_nodes()
            .map(|x| {
                let s: f64 = self.weights[x].iter().map(|e| e.1).sum();
                (self.passthrough[x] + s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    fn weight_of(&self, p: usize, x: usize) -> f64 {
        self.weights[x]
            .iter()
            .find(|e| e.0 == p)
            .map_or(0.0, |e| e.1)
    }
}

/// Euclidean distance from each unmasked node to the box faces and to the
/// nearest masked node.
fn clearance(domain: &GridDomain) -> Vec<f64> {
    let dim = domain.dim();
    let offsets = crate::grid::Stencil::Moore.offsets(dim);
    let rim: Vec<[f64; MAX_DIM]> = (0..domain.len())
        .filter(|&m| !domain.is_active(m))
        .filter(|&m| {
            offsets
                .iter()
                .filter_map(|o| domain.neighbor(m, o))
                .any(|n| domain.is_active(n))
        })
        .map(|m| domain.coords(m))
        .collect();
    let ext = domain.extent();
    (0..domain.len())
        .into_par_iter()
        .map(|x| {
            if !domain.is_active(x) {
                return 0.0;
            }
            let c = domain.coords(x);
            let mut d = f64::INFINITY;
            for a in 0..dim {
                let t = c[a] - domain.origin()[a];
                d = d.min(t).min(ext[a] - t);
            }
            for m in &rim {
                let s: f64 = (0..dim).map(|a| (c[a] - m[a]).powi(2)).sum();
                d = d.min(s.sqrt());
            }
            d.max(0.0)
        })
        .collect()
}

/// `passthrough * f + sum_p mu_p * f_p` at every node.
pub fn glue(f: &ScalarField, results: &[PatchField], cover: &PatchCover) -> Result<ScalarField> {
    let deficit = cover.partition_deficit();
    if deficit > PARTITION_TOL {
        return Err(Error::Construction(format!(
            "partition of unity misses 1 by {deficit:.3e}"
        )));
    }
    let domain = cover.domain();
    let mut out = vec![f64::NAN; domain.len()];
    for x in domain.active_nodes() {
        let mut v = cover.passthrough[x] * f.get(x);
        for &(p, mu) in &cover.weights[x] {
            let r = results
                .iter()
                .find(|r| r.patch == p)
                .and_then(|r| r.get(x))
                .ok_or_else(|| {
                    Error::Construction(format!("patch {p} has weight but no value at node {x}"))
                })?;
            v += mu * r;
        }
        out[x] = v;
    }
    ScalarField::new(domain.clone(), out)
}

/// Edgewise decomposition
/// `g(x) - g(y) = sum mu_i(y) (g_i(x) - g_i(y)) + sum (mu_i(x) - mu_i(y)) (g_i(x) - g(x))`
/// of the glued function `g`, with the pass-through member counted as
/// `g_0 = f`. Ratios are relative to the edge weight.
#[derive(Clone, Debug, Serialize)]
pub struct GlueReport {
    pub partition_deficit: f64,
    pub overlap_bound: usize,
    pub max_members: usize,
    pub identity_defect: f64,
    pub max_patch_term_ratio: f64,
    pub max_correction_ratio: f64,
    pub max_total_ratio: f64,
}

pub fn glue_check(
    f: &ScalarField,
    results: &[PatchField],
    cover: &PatchCover,
    glued: &ScalarField,
    graph: &StencilGraph,
) -> Result<GlueReport> {
    let by_patch = |p: usize| results.iter().find(|r| r.patch == p);
    let value = |p: usize, x: usize| -> Result<f64> {
        by_patch(p).and_then(|r| r.get(x)).ok_or_else(|| {
            Error::Construction(format!("patch {p} is needed at node {x} but has no value there"))
        })
    };
    let mut rep = GlueReport {
        partition_deficit: cover.partition_deficit(),
        overlap_bound: cover.overlap_bound(),
        max_members: 0,
        identity_defect: 0.0,
        max_patch_term_ratio: f64::NEG_INFINITY,
        max_correction_ratio: 0.0,
        max_total_ratio: f64::NEG_INFINITY,
    };
    for x in cover.domain.active_nodes() {
        rep.max_members = rep.max_members.max(cover.weights[x].len());
    }
    for (x, y, w) in graph.all_edges() {
        let (gx, gy) = (glued.get(x), glued.get(y));
        let mut members: Vec<usize> = cover.weights[x].iter().map(|e| e.0).collect();
        members.extend(cover.weights[y].iter().map(|e| e.0));
        members.sort_unstable();
        members.dedup();
        let (px, py) = (cover.passthrough[x], cover.passthrough[y]);
        let (fx, fy) = (f.get(x), f.get(y));
        let mut t1 = py * (fx - fy);
        let mut t2 = (px - py) * (fx - gx);
        for p in members {
            let (mx, my) = (cover.weight_of(p, x), cover.weight_of(p, y));
            let (vx, vy) = (value(p, x)?, value(p, y)?);
            t1 += my * (vx - vy);
            t2 += (mx - my) * (vx - gx);
        }
        let scale = 1.0 + gx.abs().max(gy.abs());
        rep.identity_defect = rep.identity_defect.max((t1 + t2 - (gx - gy)).abs() / scale);
        rep.max_patch_term_ratio = rep.max_patch_term_ratio.max(t1 / w);
        rep.max_correction_ratio = rep.max_correction_ratio.max(t2.abs() / w);
        rep.max_total_ratio = rep.max_total_ratio.max((gx - gy) / w);
    }
    Ok(rep)
}

/// `max |g - f|` over `region`, or over all unmasked nodes.
pub fn epsilon1_check(f: &ScalarField, f_tilde: &ScalarField, region: Option<&[usize]>) -> f64 {
    match region {
        Some(nodes) => nodes
            .iter()
            .map(|&i| (f.get(i) - f_tilde.get(i)).abs())
            .fold(0.0, f64::max),
        None => f.max_abs_diff(f_tilde),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LipschitzBound {
    /// Max over edges of `g(x) - g(y) - (1 + eps2) w(x -> y)`.
    pub max_excess: f64,
    pub worst_edge: (usize, usize),
    /// Max over edges of `(g(x) - g(y)) / w(x -> y)`.
    pub max_ratio: f64,
    pub excess_edges: usize,
}

impl LipschitzBound {
    pub fn passes(&self) -> bool {
        self.max_excess <= LIPSCHITZ_TOL
    }
}

/// Checks `g(x) - g(y) <= (1 + eps2) w(x -> y)` on every edge.
pub fn lipschitz_bound_check(f_tilde: &ScalarField, graph: &StencilGraph, eps2: f64) -> LipschitzBound {
    let mut out = LipschitzBound {
        max_excess: f64::NEG_INFINITY,
        worst_edge: (0, 0),
        max_ratio: f64::NEG_INFINITY,
        excess_edges: 0,
    };
    for (x, y, w) in graph.all_edges() {
        let d = f_tilde.get(x) - f_tilde.get(y);
        let e = d - (1.0 + eps2) * w;
        if e > out.max_excess {
            out.max_excess = e;
            out.worst_edge = (x, y);
        }
        out.max_ratio = out.max_ratio.max(d / w);
        if e > LIPSCHITZ_TOL {
            out.excess_edges += 1;
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct HistogramBin {
    /// Upper end of the bin of `(g(x) - g(y)) / w`; `null` for the last bin.
    pub upper: Option<f64>,
    pub count: usize,
}

const HISTOGRAM_EDGES: [f64; 7] = [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5];

pub fn slope_histogram(f_tilde: &ScalarField, graph: &StencilGraph) -> Vec<HistogramBin> {
    let mut counts = [0usize; HISTOGRAM_EDGES.len() + 1];
    for (x, y, w) in graph.all_edges() {
        let q = (f_tilde.get(x) - f_tilde.get(y)) / w;
        let bin = HISTOGRAM_EDGES.iter().position(|&e| q <= e).unwrap_or(HISTOGRAM_EDGES.len());
        counts[bin] += 1;
    }
    counts
        .iter()
        .enumerate()
        .map(|(i, &count)| HistogramBin {
            upper: HISTOGRAM_EDGES.get(i).copied(),
            count,
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct PatchReport {
    pub index: usize,
    pub center: Vec<f64>,
    pub nodes: usize,
    /// `max |g_p - f|` where the patch has weight.
    pub deviation: f64,
    /// Max of `g_p(x) - g_p(y) - (1 + eps2_patch) w` over weighted edges.
    pub max_slope_excess: f64,
    /// Max of the second differences of `g_p` over their discrete bound.
    pub smoothness_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Attempt {
    pub radius: f64,
    pub passed: bool,
    pub max_patch_deviation: f64,
    pub max_patch_slope_excess: f64,
    pub deviation: f64,
    pub lipschitz_excess: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MollifierReport {
    pub radius: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub patch_eps1: f64,
    pub patch_eps2: f64,
    pub passed: bool,
    pub deviation: f64,
    pub lipschitz: LipschitzBound,
    pub edge_slope_histogram: Vec<HistogramBin>,
    pub glue: GlueReport,
    pub smoothness_ratio: f64,
    pub patches: Vec<PatchReport>,
    pub attempts: Vec<Attempt>,
}

#[derive(Clone, Debug)]
pub struct Mollified {
    pub field: ScalarField,
    pub cover: PatchCover,
    pub patch_fields: Vec<PatchField>,
    pub report: MollifierReport,
}

fn stencil_reach(graph: &StencilGraph) -> f64 {
    let d = graph.domain();
    graph
        .stencil()
        .offsets(d.dim())
        .iter()
        .map(|o| {
            let v = d.offset_vector(o);
            v.iter().map(|c| c * c).sum::<f64>().sqrt()
        })
        .fold(0.0, f64::max)
}

/// Largest `|f(z + e_a) - f(z)|` over axis edges between unmasked nodes.
fn axis_increments(f: &ScalarField) -> [f64; MAX_DIM] {
    let d = f.domain();
    let mut out = [0.0; MAX_DIM];
    for (a, slot) in out.iter_mut().enumerate().take(d.dim()) {
        let mut e = [0isize; MAX_DIM];
        e[a] = 1;
        for z in d.active_nodes() {
            if let Some(n) = d.neighbor(z, &e).filter(|&n| d.is_active(n)) {
                *slot = f64::max(*slot, (f.get(n) - f.get(z)).abs());
            }
        }
    }
    out
}

fn smoothness_ratio(pf: &PatchField, domain: &GridDomain, bounds: &[f64; MAX_DIM]) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, &bound) in bounds.iter().enumerate().take(domain.dim()) {
        let mut e = [0isize; MAX_DIM];
        e[a] = 1;
        for (i, &x) in pf.nodes.iter().enumerate() {
            let fwd = domain.neighbor(x, &e).and_then(|n| pf.get(n));
            e[a] = -1;
            let bwd = domain.neighbor(x, &e).and_then(|n| pf.get(n));
            e[a] = 1;
            if let (Some(u), Some(v)) = (fwd, bwd) {
                let d2 = (u - 2.0 * pf.values[i] + v).abs();
                let excess = (d2 - 1e-12).max(0.0);
                if excess > 0.0 {
                    worst = worst.max(if bound > 0.0 { excess / bound } else { f64::INFINITY });
                }
            }
        }
    }
    worst
}

/// One mollification at a fixed radius, with all checks evaluated.
pub fn mollify(
    f: &ScalarField,
    graph: &StencilGraph,
    radius: f64,
    eps1: f64,
    eps2: f64,
) -> Result<Mollified> {
    if !(eps1 > 0.0 && eps2 > 0.0) {
        return Err(Error::Argument(format!("eps1 and eps2 must be positive, got {eps1}, {eps2}")));
    }
    let domain = graph.domain().clone();
    if !Arc::ptr_eq(f.domain(), &domain) && **f.domain() != *domain {
        return Err(Error::Argument("function and graph live on different grids".into()));
    }
    let kernel = BumpKernel::new(radius, domain.h(), domain.dim())?;
    let cover = PatchCover::brick(domain.clone(), radius, stencil_reach(graph))?;
    let k = cover.overlap_bound();
    let patch_eps1 = eps1 / (2.0 * k as f64);
    let patch_eps2 = eps2 / 2.0;
    let results: Vec<PatchField> = (0..cover.patches().len())
        .into_par_iter()
        .map(|p| {
            let nodes = cover.patch_nodes(p).to_vec();
            let values = convolve_patch(f, &kernel, &nodes)?;
            Ok(PatchField { patch: p, nodes, values })
        })
        .collect::<Result<_>>()?;

    let incr = axis_increments(f);
    let mut bounds = [0.0; MAX_DIM];
    for a in 0..domain.dim() {
        bounds[a] = incr[a] * kernel.axis_variation(a);
    }
    let mut patches: Vec<PatchReport> = results
        .par_iter()
        .map(|pf| {
            let p = pf.patch;
            let mut deviation: f64 = 0.0;
            for (i, &x) in pf.nodes.iter().enumerate() {
                if cover.weight_of(p, x) > 0.0 {
                    deviation = deviation.max((pf.values[i] - f.get(x)).abs());
                }
            }
            let mut excess = f64::NEG_INFINITY;
            for (i, &x) in pf.nodes.iter().enumerate() {
                for (y, w) in graph.edges(x) {
                    if cover.weight_of(p, x) == 0.0 && cover.weight_of(p, y) == 0.0 {
                        continue;
                    }
                    if let Some(vy) = pf.get(y) {
                        excess = excess.max(pf.values[i] - vy - (1.0 + patch_eps2) * w);
                    }
                }
            }
            PatchReport {
                index: p,
                center: cover.patches()[p].center.clone(),
                nodes: pf.nodes.len(),
                deviation,
                max_slope_excess: excess,
                smoothness_ratio: smoothness_ratio(pf, &domain, &bounds),
            }
        })
        .collect();
    patches.retain(|r| r.nodes > 0);

    let glued = glue(f, &results, &cover)?;
    let glue_report = glue_check(f, &results, &cover, &glued, graph)?;
    let deviation = epsilon1_check(f, &glued, None);
    let lipschitz = lipschitz_bound_check(&glued, graph, eps2);
    let max_patch_deviation = patches.iter().map(|r| r.deviation).fold(0.0, f64::max);
    let max_patch_slope_excess = patches
        .iter()
        .map(|r| r.max_slope_excess)
        .fold(f64::NEG_INFINITY, f64::max);
    let smooth = patches.iter().map(|r| r.smoothness_ratio).fold(0.0, f64::max);
    let passed = max_patch_deviation <= patch_eps1
        && max_patch_slope_excess <= LIPSCHITZ_TOL
        && deviation <= eps1
        && lipschitz.passes();
    let attempt = Attempt {
        radius,
        passed,
        max_patch_deviation,
        max_patch_slope_excess,
        deviation,
        lipschitz_excess: lipschitz.max_excess,
    };
    let report = MollifierReport {
        radius,
        eps1,
        eps2,
        patch_eps1,
        patch_eps2,
        passed,
        deviation,
        edge_slope_histogram: slope_histogram(&glued, graph),
        lipschitz,
        glue: glue_report,
        smoothness_ratio: smooth,
        patches,
        attempts: vec![attempt],
    };
    Ok(Mollified {
        field: glued,
        cover,
        patch_fields: results,
        report,
    })
}

/// Halves `r` from a start value (default: an eighth of the smallest domain
/// width) until every patch and the glued function pass their checks.
pub fn choose_radius(
    f: &ScalarField,
    graph: &StencilGraph,
    eps1: f64,
    eps2: f64,
    start: Option<f64>,
) -> Result<Mollified> {
    let domain = graph.domain();
    let h = domain.h();
    let mut r = start.unwrap_or(domain.min_width() / 8.0);
    let mut attempts = Vec::new();
    loop {
        if r < 2.0 * h {
            return Err(Error::Resolution(format!(
                "no radius down to {:.4e} passes (eps1 = {eps1}, eps2 = {eps2}); refine the grid below h = {h}",
                2.0 * r
            )));
        }
        let mut m = mollify(f, graph, r, eps1, eps2)?;
        attempts.extend(m.report.attempts.drain(..));
        if m.report.passed {
            m.report.attempts = attempts;
            return Ok(m);
        }
        r /= 2.0;
    }
}
