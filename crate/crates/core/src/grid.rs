//! Rectangular lattices with a manifold mask.
//!
//! Nodes are numbered with the first axis varying fastest, so a 2D grid
//! stored in a flat buffer is laid out row by row (`idx = ix + nx * iy`).
//! Masked nodes (mask value `false`) are not part of the manifold: they model
//! punctures and other ends at finite distance.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported dimension.
pub const MAX_DIM: usize = 3;

/// Fixed-capacity coordinate buffer; only the first `dim` entries are used.
pub type Coords = [f64; MAX_DIM];

/// How a face of the bounding box should be read by the properness test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FaceKind {
    /// The chart was cut here only to make it finite.
    #[default]
    Truncation,
    /// The manifold genuinely ends here (an incomplete end).
    OpenEnd,
}

/// Neighborhood used to connect grid nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Stencil {
    /// Axis neighbors only (4 in 2D, 6 in 3D).
    VonNeumann,
    /// All offsets in {-1,0,1}^n (8 in 2D, 26 in 3D).
    #[default]
    Moore,
    /// Primitive offsets in {-2..2}^n (16 in 2D).
    Extended,
}

impl Stencil {
    /// Maps the neighbor count used on the command line to a stencil.
    pub fn from_count(count: usize, dim: usize) -> Result<Self> {
        let stencil = match (dim, count) {
            (1, 2) | (2, 4) | (3, 6) => Stencil::VonNeumann,
            (2, 8) | (3, 26) => Stencil::Moore,
            (2, 16) => Stencil::Extended,
            _ => {
                return Err(Error::Argument(format!(
                    "no {count}-neighbor stencil in dimension {dim}"
                )))
            }
        };
        Ok(stencil)
    }

    /// Integer offsets of the stencil, excluding the zero offset.
    pub fn offsets(&self, dim: usize) -> Vec<[isize; MAX_DIM]> {
        let reach: isize = match self {
            Stencil::Extended => 2,
            _ => 1,
        };
        let mut out = Vec::new();
        let span = (2 * reach + 1) as usize;
        let total = span.pow(dim as u32);
        for code in 0..total {
            let mut off = [0isize; MAX_DIM];
            let mut c = code;
            for slot in off.iter_mut().take(dim) {
                *slot = (c % span) as isize - reach;
                c /= span;
            }
            if off.iter().all(|&o| o == 0) {
                continue;
            }
            let keep = match self {
                Stencil::VonNeumann => off.iter().map(|o| o.abs()).sum::<isize>() == 1,
                Stencil::Moore => true,
                Stencil::Extended => gcd_all(&off[..dim]) == 1,
            };
            if keep {
                out.push(off);
            }
        }
        out
    }
}

fn gcd_all(v: &[isize]) -> isize {
    fn gcd(a: isize, b: isize) -> isize {
        if b == 0 {
            a.abs()
        } else {
            gcd(b, a % b)
        }
    }
    v.iter().fold(0, |acc, &x| gcd(acc, x))
}

/// A masked rectangular lattice of spacing `h`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDomain {
    dim: usize,
    origin: Coords,
    shape: [usize; MAX_DIM],
    strides: [usize; MAX_DIM],
    h: f64,
    mask: Vec<bool>,
    faces: Vec<FaceKind>,
}

impl GridDomain {
    /// Creates an unmasked grid with `shape[a]` nodes along axis `a`.
    pub fn new(origin: &[f64], shape: &[usize], h: f64) -> Result<Self> {
        let dim = origin.len();
        if dim == 0 || dim > MAX_DIM || shape.len() != dim {
            return Err(Error::Argument(format!(
                "dimension must be 1..={MAX_DIM} with matching origin/shape, got {} / {}",
                origin.len(),
                shape.len()
            )));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Argument(format!("grid spacing must be positive, got {h}")));
        }
        if shape.iter().any(|&n| n == 0) {
            return Err(Error::Argument("every axis needs at least one node".into()));
        }
        let mut o = [0.0; MAX_DIM];
        o[..dim].copy_from_slice(origin);
        let mut s = [1usize; MAX_DIM];
        s[..dim].copy_from_slice(shape);
        let mut strides = [0usize; MAX_DIM];
        let mut acc = 1;
        for a in 0..dim {
            strides[a] = acc;
            acc *= s[a];
        }
        Ok(Self {
            dim,
            origin: o,
            shape: s,
            strides,
            h,
            mask: vec![true; acc],
            faces: vec![FaceKind::Truncation; 2 * dim],
        })
    }

    /// Grid covering the box `[origin, origin + extent]` with spacing `h`.
    /// The node count per axis is `round(extent / h) + 1`.
    pub fn from_extent(origin: &[f64], extent: &[f64], h: f64) -> Result<Self> {
        if extent.len() != origin.len() {
            return Err(Error::Argument("extent and origin lengths differ".into()));
        }
        if !(h > 0.0) {
            return Err(Error::Argument(format!("grid spacing must be positive, got {h}")));
        }
        let shape: Vec<usize> = extent
            .iter()
            .map(|&e| (e / h).round().max(0.0) as usize + 1)
            .collect();
        Self::new(origin, &shape, h)
    }

    /// Replaces the mask; `true` marks nodes belonging to the manifold.
    /// Fails if no node survives or the survivors are disconnected.
    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.len() {
            return Err(Error::Argument(format!(
                "mask has {} entries for {} nodes",
                mask.len(),
                self.len()
            )));
        }
        self.mask = mask;
        self.check_connected()?;
        Ok(self)
    }

    /// Masks every node for which `hole` returns true.
    pub fn with_holes<P>(self, hole: P) -> Result<Self>
    where
        P: Fn(&[f64]) -> bool,
    {
        let mask = (0..self.len())
            .map(|i| self.mask[i] && !hole(&self.coords(i)[..self.dim]))
            .collect();
        self.with_mask(mask)
    }

    /// Sets the kind of face `axis`/`upper`.
    pub fn with_face(mut self, axis: usize, upper: bool, kind: FaceKind) -> Self {
        self.faces[2 * axis + usize::from(upper)] = kind;
        self
    }

    fn check_connected(&self) -> Result<()> {
        let start = self
            .active_nodes()
            .next()
            .ok_or_else(|| Error::Domain("no unmasked node".into()))?;
        let offsets = Stencil::Moore.offsets(self.dim);
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut count = 1;
        while let Some(n) = queue.pop_front() {
            for off in &offsets {
                if let Some(m) = self.neighbor(n, off) {
                    if self.mask[m] && !seen[m] {
                        seen[m] = true;
                        count += 1;
                        queue.push_back(m);
                    }
                }
            }
        }
        let active = self.active_count();
        if count != active {
            return Err(Error::Domain(format!(
                "unmasked set is disconnected ({count} of {active} nodes reachable)"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin[..self.dim]
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape[..self.dim]
    }

    /// Total number of nodes, masked ones included.
    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn face(&self, axis: usize, upper: bool) -> FaceKind {
        self.faces[2 * axis + usize::from(upper)]
    }

    pub fn is_active(&self, idx: usize) -> bool {
        self.mask[idx]
    }

    pub fn active_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn active_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
    }

    /// Physical lengths of the box along each axis.
    pub fn extent(&self) -> Vec<f64> {
        self.shape()
            .iter()
            .map(|&n| (n - 1) as f64 * self.h)
            .collect()
    }

    pub fn multi_index(&self, idx: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        let mut rem = idx;
        for a in 0..self.dim {
            out[a] = rem % self.shape[a];
            rem /= self.shape[a];
        }
        out
    }

    pub fn index_of(&self, mi: &[usize]) -> Option<usize> {
        let mut idx = 0;
        for a in 0..self.dim {
            if mi[a] >= self.shape[a] {
                return None;
            }
            idx += mi[a] * self.strides[a];
        }
        Some(idx)
    }

    pub fn coords(&self, idx: usize) -> Coords {
        let mi = self.multi_index(idx);
        let mut out = [0.0; MAX_DIM];
        for a in 0..self.dim {
            out[a] = self.origin[a] + mi[a] as f64 * self.h;
        }
        out
    }

    /// Node reached by an integer offset, if it lies inside the box.
    /// The mask is not consulted.
    pub fn neighbor(&self, idx: usize, offset: &[isize; MAX_DIM]) -> Option<usize> {
        let mi = self.multi_index(idx);
        let mut out = idx as isize;
        for a in 0..self.dim {
            let j = mi[a] as isize + offset[a];
            if j < 0 || j >= self.shape[a] as isize {
                return None;
            }
            out += offset[a] * self.strides[a] as isize;
        }
        Some(out as usize)
    }

    /// True if `x` lies in the closed bounding box.
    pub fn contains_point(&self, x: &[f64]) -> bool {
        let tol = 1e-12 * self.h;
        (0..self.dim).all(|a| {
            let lo = self.origin[a];
            let hi = lo + (self.shape[a] - 1) as f64 * self.h;
            x[a] >= lo - tol && x[a] <= hi + tol
        })
    }

    /// Nearest node to `x` (masked or not); `None` outside the box.
    pub fn nearest_node(&self, x: &[f64]) -> Option<usize> {
        if x.len() < self.dim || !self.contains_point(x) {
            return None;
        }
        let mut mi = [0usize; MAX_DIM];
        for a in 0..self.dim {
            let t = ((x[a] - self.origin[a]) / self.h).round();
            mi[a] = (t.max(0.0) as usize).min(self.shape[a] - 1);
        }
        self.index_of(&mi)
    }

    /// Checks that `x` is in the box and its nearest node is unmasked.
    pub fn check_point(&self, x: &[f64]) -> Result<usize> {
        match self.nearest_node(x) {
            Some(n) if self.mask[n] => Ok(n),
            Some(n) => Err(Error::Domain(format!("point {x:?} falls on masked node {n}"))),
            None => Err(Error::Domain(format!("point {x:?} lies outside the domain"))),
        }
    }

    /// Whether the node sits on a face of the box; returns the face kinds hit.
    pub fn boundary_faces(&self, idx: usize) -> impl Iterator<Item = FaceKind> + '_ {
        let mi = self.multi_index(idx);
        (0..self.dim).flat_map(move |a| {
            let lo = (mi[a] == 0).then(|| self.face(a, false));
            let hi = (mi[a] + 1 == self.shape[a]).then(|| self.face(a, true));
            lo.into_iter().chain(hi)
        })
    }

    /// Smallest physical width of the box.
    pub fn min_width(&self) -> f64 {
        self.extent().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Multilinear interpolation weights of the box cell containing `x`.
    /// Returns up to `2^dim` (node, weight) pairs; `x` is clamped to the box.
    pub fn cell_weights(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let mut base = [0usize; MAX_DIM];
        let mut frac = [0.0; MAX_DIM];
        for a in 0..self.dim {
            let n = self.shape[a];
            if n == 1 {
                continue;
            }
            let t = ((x[a] - self.origin[a]) / self.h).clamp(0.0, (n - 1) as f64);
            let i = (t.floor() as usize).min(n - 2);
            base[a] = i;
            frac[a] = t - i as f64;
        }
        let mut out = Vec::with_capacity(1 << self.dim);
        for corner in 0..(1usize << self.dim) {
            let mut mi = base;
            let mut w = 1.0;
            for a in 0..self.dim {
                let up = corner >> a & 1 == 1;
                if up {
                    if self.shape[a] == 1 {
                        w = 0.0;
                        break;
                    }
                    mi[a] += 1;
                    w *= frac[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w > 0.0 {
                out.push((self.index_of(&mi).expect("corner in box"), w));
            }
        }
        out
    }

    /// Domain-independent geometry of an offset, in physical units.
    pub fn offset_vector(&self, offset: &[isize; MAX_DIM]) -> Coords {
        let mut v = [0.0; MAX_DIM];
        for a in 0..self.dim {
            v[a] = offset[a] as f64 * self.h;
        }
        v
    }
}

/// Unit directions used to probe positivity: an even fan (16 in 2D,
/// 48 quasi-uniform in 3D, both signs in 1D) plus the normalized stencil
/// directions.
pub fn direction_fan(dim: usize, stencil: Stencil) -> Vec<Coords> {
    let mut dirs: Vec<Coords> = Vec::new();
    match dim {
        1 => {
            dirs.push([1.0, 0.0, 0.0]);
            dirs.push([-1.0, 0.0, 0.0]);
        }
        2 => {
            for k in 0..16 {
                let th = 2.0 * std::f64::consts::PI * k as f64 / 16.0;
                dirs.push([th.cos(), th.sin(), 0.0]);
            }
        }
        _ => {
            // Fibonacci sphere
            let n = 48;
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            for k in 0..n {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                let rho = (1.0 - z * z).sqrt();
                let th = golden * k as f64;
                dirs.push([rho * th.cos(), rho * th.sin(), z]);
            }
        }
    }
    for off in stencil.offsets(dim) {
        let norm = off[..dim]
            .iter()
            .map(|&o| (o * o) as f64)
            .sum::<f64>()
            .sqrt();
        let mut d = [0.0; MAX_DIM];
        for a in 0..dim {
            d[a] = off[a] as f64 / norm;
        }
        dirs.push(d);
    }
    dirs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stencil_sizes() {
        assert_eq!(Stencil::VonNeumann.offsets(2).len(), 4);
        assert_eq!(Stencil::Moore.offsets(2).len(), 8);
        assert_eq!(Stencil::Extended.offsets(2).len(), 16);
        assert_eq!(Stencil::VonNeumann.offsets(3).len(), 6);
        assert_eq!(Stencil::Moore.offsets(3).len(), 26);
        assert_eq!(Stencil::Moore.offsets(1).len(), 2);
        assert_eq!(Stencil::from_count(26, 3).unwrap(), Stencil::Moore);
        assert!(Stencil::from_count(16, 3).is_err());
    }

    #[test]
    fn index_round_trip() {
        let g = GridDomain::new(&[-1.0, 0.0, 2.0], &[3, 4, 5], 0.5).unwrap();
        for i in 0..g.len() {
            let mi = g.multi_index(i);
            assert_eq!(g.index_of(&mi), Some(i));
            let x = g.coords(i);
            assert_eq!(g.nearest_node(&x[..3]), Some(i));
        }
        assert_eq!(g.coords(1)[0], -0.5);
        assert_eq!(g.coords(3)[1], 0.5);
    }

    #[test]
    fn extent_and_neighbors() {
        let g = GridDomain::from_extent(&[-2.0, -2.0], &[4.0, 4.0], 0.25).unwrap();
        assert_eq!(g.shape(), &[17, 17]);
        let c = g.nearest_node(&[0.0, 0.0]).unwrap();
        let e = g.neighbor(c, &[1, 0, 0]).unwrap();
        assert_eq!(g.coords(e)[0], 0.25);
        assert!(g.neighbor(0, &[-1, 0, 0]).is_none());
        assert!(g.nearest_node(&[2.5, 0.0]).is_none());
    }

    #[test]
    fn rejects_bad_domains() {
        assert!(GridDomain::new(&[0.0, 0.0], &[3, 3], 0.0).is_err());
        let g = GridDomain::new(&[0.0, 0.0], &[3, 3], 1.0).unwrap();
        assert!(g.clone().with_mask(vec![false; 9]).is_err());
        // a full masked column splits the grid
        let split = g.with_holes(|x| x[0] == 1.0);
        assert!(split.is_err());
    }

    #[test]
    fn punctured_mask() {
        let g = GridDomain::from_extent(&[-1.0, -1.0], &[2.0, 2.0], 0.25)
            .unwrap()
            .with_holes(|x| (x[0] - 0.5).hypot(x[1]) < 0.2)
            .unwrap();
        let n = g.nearest_node(&[0.5, 0.0]).unwrap();
        assert!(!g.is_active(n));
        assert!(g.check_point(&[0.5, 0.0]).is_err());
        assert!(g.check_point(&[0.0, 0.0]).is_ok());
    }

    #[test]
    fn fan_is_unit() {
        for dim in 1..=3 {
            for d in direction_fan(dim, Stencil::Moore) {
                let n: f64 = d[..dim].iter().map(|x| x * x).sum();
                assert!((n - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(direction_fan(2, Stencil::Moore).len(), 24);
    }
}
