//! Scenario documents: one JSON file describing a domain, a Randers metric,
//! a base point and an ordered list of pipeline stages.

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{FaceKind, GridDomain, Stencil};
use crate::metric::{CovectorField, MatrixField, MetricField, ScalarMode, Table, VectorMode};
use crate::stationary::StationaryMetric;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub domain: DomainSpec,
    pub metric: MetricSpec,
    pub base_point: Vec<f64>,
    /// Neighbour count: 4 or 8 (2D), 16 (2D), 6 or 26 (3D), 2 (1D).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stencil: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub pipeline: Vec<StageSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub debug: Option<DebugSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub origin: Vec<f64>,
    pub extent: Vec<f64>,
    pub h: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub holes: Vec<HoleSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub open_ends: Vec<FaceSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum HoleSpec {
    /// Nodes with `|x - center| < radius` are removed.
    Disk { center: Vec<f64>, radius: f64 },
    /// Nodes with `lo < x < hi` componentwise are removed.
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Lower,
    Upper,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaceSpec {
    pub axis: usize,
    pub side: Side,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MetricSpec {
    Randers {
        #[serde(default)]
        g: MatrixSpec,
        #[serde(default)]
        omega: CovectorSpec,
    },
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MatrixSpec {
    #[default]
    Identity,
    /// Row-major `n x n` entries.
    Constant { matrix: Vec<f64> },
    /// `base * (1 + sum amplitude * sin(k . x + phase))`; `base` defaults to I.
    Conformal {
        #[serde(default)]
        base: Option<Vec<f64>>,
        modes: Vec<ScalarMode>,
    },
    /// `n * n` numbers per node of `grid`, multilinearly interpolated.
    Tabulated { grid: TableGrid, values: Vec<f64> },
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CovectorSpec {
    #[default]
    Zero,
    Constant { value: Vec<f64> },
    /// `base + sum amplitude * sin(k . x + phase)`.
    Modes {
        base: Vec<f64>,
        modes: Vec<VectorMode>,
    },
    Tabulated { grid: TableGrid, values: Vec<f64> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableGrid {
    pub origin: Vec<f64>,
    pub shape: Vec<usize>,
    pub h: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompletionMode {
    /// Use the raw candidate `f` (edge-difference `df`).
    #[default]
    Lipschitz,
    /// Mollify the candidate first.
    Mollified,
}

fn default_eps1() -> f64 {
    0.05
}

fn default_eps2() -> f64 {
    0.5
}

fn default_alphas() -> Vec<[f64; 2]> {
    vec![[1.0, 1.0], [0.75, 0.25], [2.0, 1.0]]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StageSpec {
    Distances,
    Properness {
        levels: Vec<f64>,
    },
    Scaling {
        #[serde(default = "default_alphas")]
        alphas: Vec<[f64; 2]>,
        /// Defaults to the properness levels.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        levels: Option<Vec<f64>>,
    },
    Completion {
        #[serde(default)]
        mode: CompletionMode,
        #[serde(default = "default_eps1")]
        eps1: f64,
        #[serde(default = "default_eps2")]
        eps2: f64,
        /// Starting radius of the halving search.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        radius: Option<f64>,
        /// Number of sampled node pairs for the Lipschitz check.
        #[serde(default)]
        pairs: usize,
    },
    Obstruction {
        radius: f64,
        functions: Vec<FunctionSpec>,
    },
    Spacetime {
        x0: Vec<f64>,
        v0: Vec<f64>,
        steps: usize,
        dtau: f64,
        /// Finite-difference step for the Christoffel symbols; defaults to h.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fd_step: Option<f64>,
        /// Function defining the second slice; defaults to zero.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        slice: Option<FunctionSpec>,
        /// Largest accepted relative Fermat gap.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_gap: Option<f64>,
    },
}

impl StageSpec {
    pub fn name(&self) -> &'static str {
        match self {
            StageSpec::Distances => "distances",
            StageSpec::Properness { .. } => "properness",
            StageSpec::Scaling { .. } => "scaling",
            StageSpec::Completion { .. } => "completion",
            StageSpec::Obstruction { .. } => "obstruction",
            StageSpec::Spacetime { .. } => "spacetime",
        }
    }
}

/// Functions used for projective changes and slices.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FunctionSpec {
    Zero,
    Linear {
        gradient: Vec<f64>,
    },
    /// `scale * (D- - D+)/2`.
    Candidate {
        scale: f64,
    },
    Sine {
        amplitude: f64,
        wavevector: Vec<f64>,
        #[serde(default)]
        phase: f64,
    },
}

impl FunctionSpec {
    /// Evaluates on the grid; `candidate` is the field `(D- - D+)/2`.
    pub fn build(&self, domain: &Arc<GridDomain>, candidate: Option<&ScalarField>) -> Result<ScalarField> {
        let n = domain.dim();
        let check = |v: &[f64], what: &str| {
            if v.len() == n {
                Ok(())
            } else {
                Err(Error::config(what, format!("expected {n} components")))
            }
        };
        Ok(match self {
            FunctionSpec::Zero => ScalarField::constant(domain.clone(), 0.0),
            FunctionSpec::Linear { gradient } => {
                check(gradient, "gradient")?;
                ScalarField::from_fn(domain.clone(), |x| gradient.iter().zip(x).map(|(a, b)| a * b).sum())
            }
            FunctionSpec::Candidate { scale } => candidate
                .ok_or_else(|| Error::config("type", "candidate function needs the distance fields"))?
                .scaled(*scale),
            FunctionSpec::Sine {
                amplitude,
                wavevector,
                phase,
            } => {
                check(wavevector, "wavevector")?;
                ScalarField::from_fn(domain.clone(), |x| {
                    amplitude * (wavevector.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + phase).sin()
                })
            }
        })
    }
}

/// Injected faults for exercising the verifier.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DebugSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrupt_edge: Option<CorruptEdge>,
}

/// Multiplies the weight of the edge from the node nearest `node` along
/// `offset` by `factor` in the base graph.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptEdge {
    pub node: Vec<f64>,
    pub offset: Vec<isize>,
    pub factor: f64,
}

/// Command-line overrides applied on top of a scenario.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub h: Option<f64>,
    pub stencil: Option<usize>,
    pub lipschitz_mode: bool,
    pub seed: Option<u64>,
}

impl Scenario {
    /// Parses a scenario; syntax and type errors carry line and column.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::Config {
            field: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(h) = o.h {
            self.domain.h = h;
        }
        if let Some(s) = o.stencil {
            self.stencil = Some(s);
        }
        if let Some(seed) = o.seed {
            self.seed = Some(seed);
        }
        if o.lipschitz_mode {
            for st in &mut self.pipeline {
                if let StageSpec::Completion { mode, .. } = st {
                    *mode = CompletionMode::Lipschitz;
                }
            }
        }
    }

    /// Structural checks that do not need the grid.
    pub fn validate(&self) -> Result<()> {
        let n = self.domain.origin.len();
        if !(1..=3).contains(&n) {
            return Err(Error::config("domain.origin", "dimension must be 1, 2 or 3"));
        }
        if self.domain.extent.len() != n {
            return Err(Error::config("domain.extent", format!("expected {n} components")));
        }
        if self.base_point.len() != n {
            return Err(Error::config("base_point", format!("expected {n} components")));
        }
        let mut seen = HashSet::new();
        let mut have_levels = false;
        for (i, st) in self.pipeline.iter().enumerate() {
            let field = format!("pipeline[{i}]");
            if !seen.insert(st.name()) {
                return Err(Error::config(field, format!("stage `{}` appears twice", st.name())));
            }
            let needs_distances = !matches!(st, StageSpec::Distances | StageSpec::Spacetime { .. });
            if needs_distances && !seen.contains("distances") {
                return Err(Error::config(
                    field,
                    format!("stage `{}` needs an earlier `distances` stage", st.name()),
                ));
            }
            match st {
                StageSpec::Properness { levels } => {
                    if levels.is_empty() || levels.iter().any(|&c| !(c > 0.0)) {
                        return Err(Error::config(field + ".levels", "levels must be positive"));
                    }
                    have_levels = true;
                }
                StageSpec::Scaling { alphas, levels } => {
                    if levels.is_none() && !have_levels {
                        return Err(Error::config(
                            field + ".levels",
                            "give levels or put a `properness` stage first",
                        ));
                    }
                    if alphas.iter().any(|a| !(a[0] > 0.0 && a[1] > 0.0)) {
                        return Err(Error::config(field + ".alphas", "weights must be positive"));
                    }
                }
                StageSpec::Completion { eps1, eps2, .. } => {
                    if !(*eps1 > 0.0 && *eps2 > 0.0) {
                        return Err(Error::config(field + ".eps1", "eps1 and eps2 must be positive"));
                    }
                }
                StageSpec::Obstruction { radius, functions } => {
                    if !(*radius > 0.0) {
                        return Err(Error::config(field + ".radius", "must be positive"));
                    }
                    if functions.is_empty() {
                        return Err(Error::config(field + ".functions", "give at least one function"));
                    }
                }
                StageSpec::Spacetime { x0, v0, dtau, .. } => {
                    if x0.len() != n || v0.len() != n {
                        return Err(Error::config(field + ".x0", format!("expected {n} components")));
                    }
                    if !(*dtau > 0.0) {
                        return Err(Error::config(field + ".dtau", "must be positive"));
                    }
                }
                StageSpec::Distances => {}
            }
        }
        Ok(())
    }

    /// Levels of the properness stage, if any.
    pub fn properness_levels(&self) -> Option<&[f64]> {
        self.pipeline.iter().find_map(|s| match s {
            StageSpec::Properness { levels } => Some(levels.as_slice()),
            _ => None,
        })
    }
}

/// Everything a run needs, built on the grid.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub domain: Arc<GridDomain>,
    pub metric: MetricField,
    pub stationary: StationaryMetric,
    pub base_node: usize,
    pub stencil: Stencil,
}

fn table(grid: &TableGrid, components: usize, values: &[f64], field: &str) -> Result<Table> {
    let g = GridDomain::new(&grid.origin, &grid.shape, grid.h).map_err(|e| Error::config(field, e.to_string()))?;
    Table::new(Arc::new(g), components, values.to_vec()).map_err(|e| Error::config(field, e.to_string()))
}

impl MatrixSpec {
    fn resolve(&self, n: usize) -> Result<MatrixField> {
        Ok(match self {
            MatrixSpec::Identity => MatrixField::Identity,
            MatrixSpec::Constant { matrix } => MatrixField::Constant(matrix.clone()),
            MatrixSpec::Conformal { base, modes } => MatrixField::Conformal {
                base: base.clone().unwrap_or_else(|| {
                    (0..n * n).map(|k| if k % (n + 1) == 0 { 1.0 } else { 0.0 }).collect()
                }),
                modes: modes.clone(),
            },
            MatrixSpec::Tabulated { grid, values } => MatrixField::Tabulated(table(grid, n * n, values, "metric.g")?),
        })
    }
}

impl CovectorSpec {
    fn resolve(&self, n: usize) -> Result<CovectorField> {
        Ok(match self {
            CovectorSpec::Zero => CovectorField::Zero,
            CovectorSpec::Constant { value } => CovectorField::Constant(value.clone()),
            CovectorSpec::Modes { base, modes } => CovectorField::Modes {
                base: base.clone(),
                modes: modes.clone(),
            },
            CovectorSpec::Tabulated { grid, values } => {
                CovectorField::Tabulated(table(grid, n, values, "metric.omega")?)
            }
        })
    }
}

impl MetricSpec {
    /// Whether `g` and `omega` are the same at every point.
    pub fn is_constant(&self) -> bool {
        let MetricSpec::Randers { g, omega } = self;
        matches!(g, MatrixSpec::Identity | MatrixSpec::Constant { .. })
            && matches!(omega, CovectorSpec::Zero | CovectorSpec::Constant { .. })
    }
}

impl Scenario {
    pub fn resolve(&self) -> Result<Resolved> {
        let d = &self.domain;
        let n = d.origin.len();
        let mut domain = GridDomain::from_extent(&d.origin, &d.extent, d.h)
            .map_err(|e| Error::config("domain", e.to_string()))?;
        for (i, face) in d.open_ends.iter().enumerate() {
            if face.axis >= n {
                return Err(Error::config(format!("domain.open_ends[{i}].axis"), "axis out of range"));
            }
            domain = domain.with_face(face.axis, face.side == Side::Upper, FaceKind::OpenEnd);
        }
        for (i, hole) in d.holes.iter().enumerate() {
            let field = format!("domain.holes[{i}]");
            match hole {
                HoleSpec::Disk { center, radius } if center.len() == n => {
                    let (c, r) = (center.clone(), *radius);
                    domain = domain
                        .with_holes(move |x| x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>() < r * r)
                        .map_err(|e| Error::config(field, e.to_string()))?;
                }
                HoleSpec::Box { lo, hi } if lo.len() == n && hi.len() == n => {
                    let (lo, hi) = (lo.clone(), hi.clone());
                    domain = domain
                        .with_holes(move |x| (0..x.len()).all(|a| lo[a] < x[a] && x[a] < hi[a]))
                        .map_err(|e| Error::config(field, e.to_string()))?;
                }
                _ => return Err(Error::config(field, format!("expected {n}-dimensional coordinates"))),
            }
        }
        let domain = Arc::new(domain);
        let MetricSpec::Randers { g, omega } = &self.metric;
        let g = g.resolve(n)?;
        let omega = omega.resolve(n)?;
        let stationary = StationaryMetric::new(domain.clone(), g.clone(), omega.clone())
            .map_err(|e| Error::config("metric", e.to_string()))?;
        let metric = MetricField::randers(n, g, omega).map_err(|e| Error::config("metric", e.to_string()))?;
        let base_node = domain
            .check_point(&self.base_point)
            .map_err(|e| Error::config("base_point", e.to_string()))?;
        let stencil = match self.stencil {
            Some(c) => Stencil::from_count(c, n).map_err(|e| Error::config("stencil", e.to_string()))?,
            None => Stencil::Moore,
        };
        Ok(Resolved {
            domain,
            metric,
            stationary,
            base_node,
            stencil,
        })
    }
}
