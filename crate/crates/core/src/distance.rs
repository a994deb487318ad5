//! Stencil graphs and single-source distance fields.
//!
//! Edge `x -> y` carries `F(midpoint, y - x)`. Forward distances from `p`
//! are shortest paths out of `p`; backward distances `dist-(p, x)` are
//! shortest paths from `x` into `p`, i.e. shortest paths out of `p` in the
//! reversed graph.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{GridDomain, Stencil};
use crate::metric::Lagrangian;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    Forward,
    Backward,
}

/// Directed graph on the unmasked nodes in compressed adjacency form.
#[derive(Clone, Debug)]
pub struct StencilGraph {
    domain: Arc<GridDomain>,
    stencil: Stencil,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
}

impl StencilGraph {
    /// Weighted graph over `domain`. Every weight must be positive.
    pub fn build<L: Lagrangian + ?Sized>(
        domain: Arc<GridDomain>,
        metric: &L,
        stencil: Stencil,
    ) -> Result<Self> {
        if metric.dim() != domain.dim() {
            return Err(Error::Argument(format!(
                "metric has dimension {}, domain {}",
                metric.dim(),
                domain.dim()
            )));
        }
        let offs = stencil.offsets(domain.dim());
        let mut offsets = Vec::with_capacity(domain.len() + 1);
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for n in 0..domain.len() {
            if domain.is_active(n) {
                for off in &offs {
                    let Some(m) = domain.neighbor(n, off).filter(|&m| domain.is_active(m)) else {
                        continue;
                    };
                    let w = metric.edge_weight(&domain, n, m);
                    if !(w > 0.0 && w.is_finite()) {
                        return Err(Error::NonPositiveWeight {
                            tail: n,
                            head: m,
                            weight: w,
                        });
                    }
                    targets.push(m);
                    weights.push(w);
                }
            }
            offsets.push(targets.len());
        }
        Ok(Self {
            domain,
            stencil,
            offsets,
            targets,
            weights,
        })
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn stencil(&self) -> Stencil {
        self.stencil
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    /// Outgoing `(head, weight)` pairs of `node`.
    pub fn edges(&self, node: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[node]..self.offsets[node + 1];
        self.targets[r.clone()]
            .iter()
            .copied()
            .zip(self.weights[r].iter().copied())
    }

    /// All edges as `(tail, head, weight)`.
    pub fn all_edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.domain.len()).flat_map(move |n| self.edges(n).map(move |(m, w)| (n, m, w)))
    }

    pub fn weight(&self, tail: usize, head: usize) -> Option<f64> {
        self.edges(tail).find(|&(m, _)| m == head).map(|(_, w)| w)
    }

    /// Overwrites the weight of an existing edge. Used to inject faults in
    /// verification fixtures.
    pub fn set_weight(&mut self, tail: usize, head: usize, weight: f64) -> Result<()> {
        let r = self.offsets[tail]..self.offsets[tail + 1];
        let k = self.targets[r.clone()]
            .iter()
            .position(|&m| m == head)
            .ok_or_else(|| Error::Argument(format!("no edge {tail} -> {head}")))?;
        self.weights[r.start + k] = weight;
        Ok(())
    }

    /// The graph with every edge reversed (weights kept).
    pub fn reversed(&self) -> StencilGraph {
        let n = self.domain.len();
        let mut counts = vec![0usize; n + 1];
        for &m in &self.targets {
            counts[m + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut fill = counts;
        let mut targets = vec![0; self.targets.len()];
        let mut weights = vec![0.0; self.weights.len()];
        for (t, h, w) in self.all_edges() {
            let k = fill[h];
            targets[k] = t;
            weights[k] = w;
            fill[h] += 1;
        }
        StencilGraph {
            domain: self.domain.clone(),
            stencil: self.stencil,
            offsets,
            targets,
            weights,
        }
    }

    /// Label-setting shortest paths from `source`; unreachable nodes get
    /// `+inf`, masked nodes `NaN`. Ties are settled by the smaller node index.
    pub fn shortest_paths(&self, source: usize) -> Result<Vec<f64>> {
        if source >= self.domain.len() || !self.domain.is_active(source) {
            return Err(Error::Domain(format!("source node {source} is masked or out of range")));
        }
        let mut dist: Vec<f64> = (0..self.domain.len())
            .map(|i| if self.domain.is_active(i) { f64::INFINITY } else { f64::NAN })
            .collect();
        let mut done = vec![false; self.domain.len()];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(QueueEntry { dist: 0.0, node: source });
        while let Some(QueueEntry { dist: d, node }) = heap.pop() {
            if done[node] {
                continue;
            }
            done[node] = true;
            for (m, w) in self.edges(node) {
                let nd = d + w;
                if nd < dist[m] {
                    dist[m] = nd;
                    heap.push(QueueEntry { dist: nd, node: m });
                }
            }
        }
        Ok(dist)
    }

    /// Length of a node path measured with this graph's weights.
    pub fn path_length(&self, path: &[usize]) -> Result<f64> {
        path.windows(2)
            .map(|e| {
                self.weight(e[0], e[1])
                    .ok_or_else(|| Error::Argument(format!("no edge {} -> {}", e[0], e[1])))
            })
            .sum()
    }
}

#[derive(Clone, Copy, Debug)]
struct QueueEntry {
    dist: f64,
    node: usize,
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for QueueEntry {}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueueEntry {
    // min-heap on (dist, node)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// `dist+(p, .)` or `dist-(p, .)` over the unmasked nodes.
#[derive(Clone, Debug)]
pub struct DistanceField {
    base: usize,
    orientation: Orientation,
    domain: Arc<GridDomain>,
    // may hold +inf for unreachable nodes, which `ScalarField` rejects
    values: Vec<f64>,
}

impl DistanceField {
    pub fn base(&self) -> usize {
        self.base
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
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

    /// Unmasked nodes that the solve could not reach.
    pub fn unreachable(&self) -> Vec<usize> {
        self.domain()
            .active_nodes()
            .filter(|&i| !self.get(i).is_finite())
            .collect()
    }

    /// Converts to a scalar field; fails if some node is unreachable.
    pub fn to_scalar_field(&self) -> Result<ScalarField> {
        ScalarField::new(self.domain().clone(), self.values().to_vec())
    }

    pub(crate) fn check_compatible(&self, other: &DistanceField) -> Result<()> {
        if self.base != other.base {
            return Err(Error::Argument(format!(
                "distance fields have different base points ({} vs {})",
                self.base, other.base
            )));
        }
        if !(Arc::ptr_eq(self.domain(), other.domain()) || **self.domain() == **other.domain()) {
            return Err(Error::Argument("distance fields live on different domains".into()));
        }
        Ok(())
    }
}

/// Builds the stencil graph of `metric` (a metric or a projective change).
pub fn build_graph<L: Lagrangian + ?Sized>(
    domain: Arc<GridDomain>,
    metric: &L,
    stencil: Stencil,
) -> Result<StencilGraph> {
    StencilGraph::build(domain, metric, stencil)
}

/// `D+(x) = dist+(p, x)`.
pub fn forward_distance(graph: &StencilGraph, p: usize) -> Result<DistanceField> {
    let values = graph.shortest_paths(p)?;
    Ok(DistanceField {
        base: p,
        orientation: Orientation::Forward,
        domain: graph.domain().clone(),
        values,
    })
}

/// `D-(x) = dist-(p, x) = dist+(x, p)`.
pub fn backward_distance(graph: &StencilGraph, p: usize) -> Result<DistanceField> {
    let values = graph.reversed().shortest_paths(p)?;
    Ok(DistanceField {
        base: p,
        orientation: Orientation::Backward,
        domain: graph.domain().clone(),
        values,
    })
}

/// Both distance fields from `p`.
pub fn distance_pair(graph: &StencilGraph, p: usize) -> Result<(DistanceField, DistanceField)> {
    Ok((forward_distance(graph, p)?, backward_distance(graph, p)?))
}
