//! Forward and backward distance fields of Finsler metrics on masked grids,
//! a properness test for `D+ + D-`, the completing projective change
//! `F + d(f/2)` with `f = (D- - D+)/2`, Lipschitz-preserving mollification,
//! and the stationary-spacetime picture of Randers metrics.

pub mod change;
pub mod completion;
pub mod config;
pub mod distance;
pub mod error;
pub mod field;
pub mod grid;
pub mod io;
pub mod metric;
pub mod mollifier;
pub mod properness;
pub mod scenario;
pub mod spacetime;
pub mod stationary;

pub use change::{apply_projective_change, GradientScheme, ProjectiveChange};
pub use distance::{backward_distance, build_graph, forward_distance, DistanceField, Orientation, StencilGraph};
pub use error::{Error, Result};
pub use field::ScalarField;
pub use grid::{FaceKind, GridDomain, Stencil};
pub use metric::{Lagrangian, MetricField};
pub use completion::{candidate_f, completed_metric, completeness_certificate, CompletionCertificate};
pub use config::{Overrides, Scenario};
pub use mollifier::{choose_radius, mollify, Mollified};
pub use properness::{properness_indicator, scaled_properness_agreement, Verdict};
pub use scenario::{run, verify, RunOutcome, VerifyOutcome};
