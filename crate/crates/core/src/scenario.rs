//! Batch runs of scenario documents and the invariant suite behind `verify`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::change::{apply_projective_change, GradientScheme};
use crate::completion::{
    axis_weights, candidate_f, completed_metric, completeness_certificate, lipschitz_check, obstruction_check,
    CertificateVerdict, EXACT_TOL,
};
use crate::config::{CompletionMode, Resolved, Scenario, StageSpec};
use crate::distance::{build_graph, distance_pair, DistanceField, StencilGraph};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{direction_fan, GridDomain, MAX_DIM};
use crate::io;
use crate::metric::{check_positive_homogeneous, Lagrangian, MetricField};
use crate::mollifier::{choose_radius, convolve_patch, BumpKernel};
use crate::properness::{properness_indicator, scaled_properness_agreement, PropernessReport, Verdict};
use crate::spacetime::{fermat_projection_check, integrate_null_geodesic, signature_check, slice_change_roundtrip};
use crate::stationary::randers_from_stationary;

/// Tolerance for the pointwise null-rate identity along integrated curves.
pub const RATE_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub stage: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub scenario: String,
    pub artifacts: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

struct Artifacts {
    dir: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl Artifacts {
    fn new(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            entries: Vec::new(),
        })
    }

    fn record(&mut self, stage: &str, path: &Path) -> Result<()> {
        let bytes = fs::read(path)?;
        let name = path
            .strip_prefix(&self.dir)
            .unwrap_or(path)
            .to_string_lossy()
            .into_owned();
        self.entries.push(ManifestEntry {
            path: name,
            stage: stage.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    fn json<T: Serialize + ?Sized>(&mut self, stage: &str, name: &str, value: &T) -> Result<()> {
        let p = self.dir.join(name);
        io::write_json(&p, value)?;
        self.record(stage, &p)
    }

    fn grid(&mut self, stage: &str, stem: &str, field: &ScalarField) -> Result<()> {
        for p in io::write_grid(&self.dir, stem, field)? {
            self.record(stage, &p)?;
        }
        Ok(())
    }

    fn fields(&mut self, stage: &str, name: &str, columns: &[(&str, &ScalarField)]) -> Result<()> {
        let p = self.dir.join(name);
        io::write_fields_csv(&p, columns)?;
        self.record(stage, &p)
    }

    fn finish(self, scenario: &str) -> Result<Manifest> {
        let m = Manifest {
            scenario: scenario.to_string(),
            artifacts: self.entries,
        };
        io::write_json(&self.dir.join("manifest.json"), &m)?;
        Ok(m)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StageStatus {
    pub stage: String,
    /// `OK`, `REFUSED` (completion declined with obstruction evidence) or `FAILED`.
    pub status: String,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub stages: Vec<StageStatus>,
    pub ok: bool,
}

struct State {
    r: Resolved,
    graph: Option<StencilGraph>,
    dplus: Option<DistanceField>,
    dminus: Option<DistanceField>,
    properness: Option<PropernessReport>,
}

impl State {
    fn distances(&self) -> Result<(&StencilGraph, &DistanceField, &DistanceField)> {
        match (&self.graph, &self.dplus, &self.dminus) {
            (Some(g), Some(p), Some(m)) => Ok((g, p, m)),
            _ => Err(Error::Argument("distance fields are not available".into())),
        }
    }
}

/// Builds the base graph and applies any injected fault.
fn base_graph(s: &Scenario, r: &Resolved) -> Result<StencilGraph> {
    let mut g = build_graph(r.domain.clone(), &r.metric, r.stencil)?;
    if let Some(c) = s.debug.as_ref().and_then(|d| d.corrupt_edge.as_ref()) {
        let n = r.domain.dim();
        let tail = r.domain.check_point(&c.node)?;
        let mut off = [0isize; MAX_DIM];
        off[..n].copy_from_slice(&c.offset[..n.min(c.offset.len())]);
        let head = r
            .domain
            .neighbor(tail, &off)
            .ok_or_else(|| Error::config("debug.corrupt_edge.offset", "edge leaves the domain"))?;
        let w = g
            .weight(tail, head)
            .ok_or_else(|| Error::config("debug.corrupt_edge.offset", "not a stencil edge"))?;
        g.set_weight(tail, head, w * c.factor)?;
    }
    Ok(g)
}

fn sample_pairs(domain: &GridDomain, seed: u64, count: usize) -> Vec<(usize, usize)> {
    let nodes: Vec<usize> = domain.active_nodes().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (nodes[rng.gen_range(0..nodes.len())], nodes[rng.gen_range(0..nodes.len())]))
        .collect()
}

fn homogeneity_points(domain: &GridDomain) -> Vec<[f64; MAX_DIM]> {
    let active: Vec<usize> = domain.active_nodes().collect();
    let step = (active.len() / 40).max(1);
    active.iter().step_by(step).map(|&i| domain.coords(i)).collect()
}

/// Runs every stage in order into `out_root/<name>/`. Configuration problems
/// are returned as errors; stage failures stop the pipeline and are
/// reported in the outcome with the artifacts written so far.
pub fn run(scenario: &Scenario, out_root: &Path) -> Result<RunOutcome> {
    scenario.validate()?;
    let r = scenario.resolve()?;
    let dir = out_root.join(&scenario.name);
    let mut art = Artifacts::new(dir.clone())?;
    art.json("config", "scenario.json", scenario)?;
    let mut state = State {
        r,
        graph: None,
        dplus: None,
        dminus: None,
        properness: None,
    };
    let mut stages = Vec::new();
    for st in &scenario.pipeline {
        let status = match run_stage(scenario, st, &mut state, &mut art) {
            Ok(s) => s,
            Err(e) => StageStatus {
                stage: st.name().into(),
                status: "FAILED".into(),
                detail: e.to_string(),
            },
        };
        let failed = status.status == "FAILED";
        stages.push(status);
        if failed {
            break;
        }
    }
    let ok = stages.iter().all(|s| s.status != "FAILED");
    art.json(
        "summary",
        "summary.json",
        &json!({ "scenario": scenario.name, "ok": ok, "stages": stages }),
    )?;
    let manifest = art.finish(&scenario.name)?;
    Ok(RunOutcome {
        dir,
        manifest,
        stages,
        ok,
    })
}

fn status(stage: &str, ok: bool, detail: impl Into<String>) -> StageStatus {
    StageStatus {
        stage: stage.into(),
        status: if ok { "OK" } else { "FAILED" }.into(),
        detail: detail.into(),
    }
}

fn run_stage(s: &Scenario, st: &StageSpec, state: &mut State, art: &mut Artifacts) -> Result<StageStatus> {
    let name = st.name();
    let r = state.r.clone();
    let p = r.base_node;
    match st {
        StageSpec::Distances => {
            let graph = base_graph(s, &r)?;
            let (dp, dm) = distance_pair(&graph, p)?;
            let unreachable = dp.unreachable().len() + dm.unreachable().len();
            let fan = direction_fan(r.domain.dim(), r.stencil);
            let hom = check_positive_homogeneous(&r.metric, &homogeneity_points(&r.domain), &fan, &[0.5, 2.0, 10.0]);
            let max = |d: &DistanceField| d.values().iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
            art.json(
                name,
                "distances.json",
                &json!({
                    "base_node": p,
                    "base_point": &r.domain.coords(p)[..r.domain.dim()],
                    "nodes": r.domain.len(),
                    "active_nodes": r.domain.active_count(),
                    "edges": graph.edge_count(),
                    "stencil": r.stencil,
                    "max_forward": max(&dp),
                    "max_backward": max(&dm),
                    "unreachable": unreachable,
                    "homogeneity": hom,
                }),
            )?;
            let ok = unreachable == 0 && hom.positive;
            if unreachable == 0 {
                let fp = dp.to_scalar_field()?;
                let fm = dm.to_scalar_field()?;
                let sum = fp.combine(1.0, &fm, 1.0)?;
                art.grid(name, "dplus", &fp)?;
                art.grid(name, "dminus", &fm)?;
                art.fields(name, "distances.csv", &[("dplus", &fp), ("dminus", &fm), ("sum", &sum)])?;
            }
            state.graph = Some(graph);
            state.dplus = Some(dp);
            state.dminus = Some(dm);
            Ok(status(name, ok, format!("{unreachable} unreachable nodes")))
        }
        StageSpec::Properness { levels } => {
            let (_, dp, dm) = state.distances()?;
            let rep = properness_indicator(dp, dm, levels)?;
            art.json(name, "properness.json", &rep)?;
            let detail = format!("{:?}", rep.overall);
            state.properness = Some(rep);
            Ok(status(name, true, detail))
        }
        StageSpec::Scaling { alphas, levels } => {
            let (_, dp, dm) = state.distances()?;
            let levels = levels
                .clone()
                .or_else(|| s.properness_levels().map(<[f64]>::to_vec))
                .ok_or_else(|| Error::config("scaling.levels", "no levels"))?;
            let alphas: Vec<(f64, f64)> = alphas.iter().map(|a| (a[0], a[1])).collect();
            let rep = scaled_properness_agreement(dp, dm, &alphas, &levels)?;
            art.json(name, "scaling.json", &rep)?;
            Ok(status(name, rep.all_agree, format!("reference {:?}", rep.reference.overall)))
        }
        StageSpec::Completion {
            mode,
            eps1,
            eps2,
            radius,
            pairs,
        } => completion_stage(s, state, art, *mode, *eps1, *eps2, *radius, *pairs),
        StageSpec::Obstruction { radius, functions } => {
            let (_, dp, dm) = state.distances()?;
            let cand = candidate_f(dp, dm)?;
            let mut results = Vec::new();
            let mut all = true;
            for spec in functions {
                let f = spec.build(&r.domain, Some(&cand))?;
                let rep = obstruction_check(&r.metric, &f, dp, dm, *radius, r.stencil)?;
                all &= rep.passed;
                results.push(json!({ "function": spec, "report": rep }));
            }
            art.json(
                name,
                "obstruction.json",
                &json!({ "radius": radius, "all_passed": all, "results": results }),
            )?;
            Ok(status(name, all, format!("{} functions", functions.len())))
        }
        StageSpec::Spacetime {
            x0,
            v0,
            steps,
            dtau,
            fd_step,
            slice,
            max_gap,
        } => {
            let sm = &r.stationary;
            let sig = signature_check(sm);
            let fd = fd_step.unwrap_or(r.domain.h());
            let geo = integrate_null_geodesic(sm, x0, v0, *steps, *dtau, fd)?;
            let f = randers_from_stationary(sm)?;
            let rate0 = (geo.initial_tdot() - f.eval(x0, v0)).abs();
            let fermat = fermat_projection_check(sm, &geo, r.stencil)?;
            let cand = match (&state.dplus, &state.dminus) {
                (Some(a), Some(b)) => Some(candidate_f(a, b)?),
                _ => None,
            };
            let slice_f = match slice {
                Some(spec) => spec.build(&r.domain, cand.as_ref())?,
                None => ScalarField::constant(r.domain.clone(), 0.0),
            };
            let roundtrip = slice_change_roundtrip(sm, &slice_f, r.stencil)?;
            let gap_ok = max_gap.is_none_or(|m| fermat.abs_gap <= m);
            let ok = sig.lorentzian
                && rate0 <= 1e-9
                && fermat.max_rate_defect <= RATE_TOL
                && roundtrip.max_weight_difference <= EXACT_TOL
                && gap_ok;
            let p = art.dir.join("geodesic.csv");
            io::write_geodesic_csv(&p, &geo)?;
            art.record(name, &p)?;
            art.json(
                name,
                "spacetime.json",
                &json!({
                    "signature": sig,
                    "initial_tdot": geo.initial_tdot(),
                    "initial_f": f.eval(x0, v0),
                    "initial_rate_defect": rate0,
                    "max_null_defect": geo.max_null_defect(),
                    "samples": geo.tau.len(),
                    "fermat": fermat,
                    "roundtrip": roundtrip,
                }),
            )?;
            Ok(status(name, ok, format!("Fermat gap {:.3e}", fermat.abs_gap)))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn completion_stage(
    s: &Scenario,
    state: &mut State,
    art: &mut Artifacts,
    mode: CompletionMode,
    eps1: f64,
    eps2: f64,
    radius: Option<f64>,
    pairs: usize,
) -> Result<StageStatus> {
    let name = "completion";
    let r = state.r.clone();
    let (graph, dp, dm) = state.distances()?;
    let f = candidate_f(dp, dm)?;
    art.grid(name, "candidate_f", &f)?;

    if let Some(prop) = state.properness.as_ref().filter(|p| p.overall == Verdict::NonproperEvidence) {
        let level = prop
            .levels
            .iter()
            .find(|l| l.verdict == Verdict::NonproperEvidence)
            .map(|l| l.level)
            .expect("some level carries the evidence");
        let obstruction = obstruction_check(&r.metric, &f.scaled(0.5), dp, dm, level, r.stencil)?;
        let ok = obstruction.passed;
        art.json(
            name,
            "completion.json",
            &json!({
                "status": "REFUSED",
                "reason": "D+ + D- has a sublevel set reaching an end",
                "properness": prop.overall,
                "obstruction_function": "(D- - D+)/4",
                "obstruction": obstruction,
            }),
        )?;
        return Ok(StageStatus {
            stage: name.into(),
            status: if ok { "REFUSED" } else { "FAILED" }.into(),
            detail: format!("obstruction check {}", if ok { "PASS" } else { "FAIL" }),
        });
    }

    let pairs = sample_pairs(&r.domain, s.seed.unwrap_or(0), pairs);
    let lip = lipschitz_check(&f, graph, &pairs)?;
    let (f_tilde, eps1_used, moll) = match mode {
        CompletionMode::Lipschitz => (f.clone(), 0.0, None),
        CompletionMode::Mollified => {
            let m = choose_radius(&f, graph, eps1, eps2, radius)?;
            (m.field.clone(), eps1, Some(m.report))
        }
    };
    let cm = completed_metric(&r.metric, &f_tilde, r.stencil)?;
    let cert = completeness_certificate(&cm.change, dp, dm, &f_tilde, eps1_used, r.stencil)?;
    let full = apply_projective_change(&r.metric, &f, GradientScheme::EdgeDifference, r.stencil)?;
    let weights = |l: &dyn Lagrangian| {
        axis_weights(l, &r.domain, r.base_node, 0).map(|(e, w)| json!({ "east": e, "west": w, "difference": (e - w).abs() }))
    };
    let symmetry = json!({
        "node": r.base_node,
        "base": weights(&r.metric),
        "full_change": weights(&full),
        "half_change": weights(&cm.change),
    });
    let fwd = ScalarField::new(r.domain.clone(), cert.forward_margin.clone())?;
    let bwd = ScalarField::new(r.domain.clone(), cert.backward_margin.clone())?;
    if moll.is_some() {
        art.grid(name, "f_tilde", &f_tilde)?;
    }
    art.fields(
        name,
        "completion.csv",
        &[("f", &f), ("f_tilde", &f_tilde), ("forward_margin", &fwd), ("backward_margin", &bwd)],
    )?;
    if let Some(rep) = &moll {
        art.json(name, "mollifier.json", rep)?;
    }
    let mut ok = lip.max_violation <= EXACT_TOL && cert.verdict == CertificateVerdict::Certified;
    if let Some(rep) = &moll {
        ok &= rep.passed;
    }
    art.json(
        name,
        "completion.json",
        &json!({
            "status": if ok { "CERTIFIED" } else { "FAILED" },
            "mode": mode,
            "eps1": eps1_used,
            "eps2": eps2,
            "lipschitz": lip,
            "max_slope_ratio": cm.max_slope_ratio,
            "admissibility": cm.admissibility,
            "certificate": cert,
            "symmetry": symmetry,
        }),
    )?;
    Ok(status(name, ok, format!("{:?}", cert.verdict)))
}

#[derive(Clone, Debug, Serialize)]
pub struct Invariant {
    pub name: String,
    pub passed: bool,
    /// Measured quantity compared against `tolerance`.
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl Invariant {
    fn at_most(name: &str, value: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: value <= tolerance,
            value,
            tolerance,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RefinementStep {
    pub h: f64,
    pub target_node: usize,
    pub graph_distance: f64,
    pub segment_length: f64,
    pub error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyOutcome {
    pub scenario: String,
    pub passed: bool,
    pub invariants: Vec<Invariant>,
    pub refinement: Vec<RefinementStep>,
}

/// Smooth `f` scaled so that `f(x) - f(y) <= w(x -> y) / 2` on every edge.
pub fn random_admissible_f(graph: &StencilGraph, rng: &mut ChaCha8Rng) -> Result<ScalarField> {
    let d = graph.domain().clone();
    let n = d.dim();
    let modes: Vec<(f64, Vec<f64>, f64)> = (0..3)
        .map(|_| {
            let k: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            (rng.gen_range(0.2..1.0), k, rng.gen_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    let raw = ScalarField::from_fn(d, |x| {
        modes
            .iter()
            .map(|(a, k, ph)| a * (k.iter().zip(x).map(|(k, x)| k * x).sum::<f64>() + ph).sin())
            .sum()
    });
    let ratio = graph
        .all_edges()
        .map(|(x, y, w)| (raw.get(x) - raw.get(y)) / w)
        .fold(0.0, f64::max);
    Ok(if ratio > 0.0 { raw.scaled(0.5 / ratio) } else { raw })
}

/// Straight segment `x + s e_1`, `0 <= s <= len`, measured with `F` by
/// composite Simpson quadrature.
fn segment_length(metric: &MetricField, x: &[f64], len: f64) -> f64 {
    let n = x.len();
    let m = 400;
    let mut e = vec![0.0; n];
    e[0] = 1.0;
    let mut acc = 0.0;
    for i in 0..=m {
        let s = len * i as f64 / m as f64;
        let mut y = x.to_vec();
        y[0] += s;
        let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * metric.eval(&y, &e);
    }
    acc * len / (3.0 * m as f64)
}

fn refinement_ladder(s: &Scenario, r: &Resolved) -> Result<Option<Vec<RefinementStep>>> {
    let h0 = r.domain.h();
    let n = r.domain.dim();
    let x = r.domain.coords(r.base_node);
    let east = r.domain.origin()[0] + r.domain.extent()[0] - x[0];
    let k = ((0.5 * east / h0).floor() as usize).max(1);
    let len = (k as f64 + 0.3) * h0;
    if len > east {
        return Ok(None);
    }
    let mut steps = Vec::new();
    for div in [1.0, 2.0, 4.0] {
        let mut sc = s.clone();
        sc.domain.h = h0 / div;
        sc.base_point = x[..n].to_vec();
        sc.debug = None;
        let rr = sc.resolve()?;
        let mut target = x;
        target[0] += len;
        let Some(t) = rr.domain.nearest_node(&target[..n]).filter(|&t| rr.domain.is_active(t)) else {
            return Ok(None);
        };
        let g = build_graph(rr.domain.clone(), &rr.metric, rr.stencil)?;
        let d = g.shortest_paths(rr.base_node)?[t];
        let exact = segment_length(&rr.metric, &x[..n], len);
        steps.push(RefinementStep {
            h: rr.domain.h(),
            target_node: t,
            graph_distance: d,
            segment_length: exact,
            error: (d - exact).abs(),
        });
    }
    Ok(Some(steps))
}

/// Evaluates the invariant suite for a scenario and writes
/// `out_root/<name>/verify.json`.
pub fn verify(scenario: &Scenario, out_root: &Path) -> Result<VerifyOutcome> {
    scenario.validate()?;
    let r = scenario.resolve()?;
    let p = r.base_node;
    let seed = scenario.seed.unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inv = Vec::new();

    let graph = base_graph(scenario, &r)?;
    let (dp, dm) = distance_pair(&graph, p)?;
    inv.push(Invariant::at_most(
        "distances.base_point_zero",
        dp.get(p).abs().max(dm.get(p).abs()),
        0.0,
        "D+(p) and D-(p)",
    ));
    let unreachable = dp.unreachable().len() + dm.unreachable().len();
    inv.push(Invariant::at_most(
        "distances.reachable",
        unreachable as f64,
        0.0,
        "unmasked nodes without a finite distance",
    ));
    let mut tri = f64::NEG_INFINITY;
    for (x, y, w) in graph.all_edges() {
        tri = tri.max(dp.get(y) - dp.get(x) - w).max(dm.get(x) - dm.get(y) - w);
    }
    inv.push(Invariant::at_most(
        "distances.edge_triangle",
        tri,
        EXACT_TOL,
        "max of D+(y) - D+(x) - w and D-(x) - D-(y) - w over edges",
    ));
    let fan = direction_fan(r.domain.dim(), r.stencil);
    let hom = check_positive_homogeneous(&r.metric, &homogeneity_points(&r.domain), &fan, &[0.5, 2.0, 10.0]);
    inv.push(Invariant::at_most(
        "metric.homogeneity",
        if hom.positive { hom.max_relative_violation } else { f64::INFINITY },
        EXACT_TOL,
        format!("min unit value {:.6e}", hom.min_unit_value),
    ));

    // length and distance transformation under a random admissible change
    let f = random_admissible_f(&graph, &mut rng)?;
    let change = apply_projective_change(&r.metric, &f, GradientScheme::EdgeDifference, r.stencil)?;
    let cg = build_graph(r.domain.clone(), &change, r.stencil)?;
    let mut walk_defect: f64 = 0.0;
    let active: Vec<usize> = r.domain.active_nodes().collect();
    for _ in 0..20 {
        let mut path = vec![active[rng.gen_range(0..active.len())]];
        for _ in 0..50 {
            let last = *path.last().expect("nonempty");
            let next: Vec<usize> = graph.edges(last).map(|e| e.0).collect();
            path.push(next[rng.gen_range(0..next.len())]);
        }
        let (a, b) = (path[0], *path.last().expect("nonempty"));
        let defect = cg.path_length(&path)? - graph.path_length(&path)? - (f.get(b) - f.get(a));
        walk_defect = walk_defect.max(defect.abs());
    }
    inv.push(Invariant::at_most(
        "change.length_identity",
        walk_defect,
        EXACT_TOL,
        "random walks: L_{F+df} - L_F - (f(end) - f(start))",
    ));
    let (cp, cm) = distance_pair(&cg, p)?;
    let mut dist_defect: f64 = 0.0;
    for x in r.domain.active_nodes() {
        dist_defect = dist_defect
            .max((cp.get(x) - (dp.get(x) + f.get(x) - f.get(p))).abs())
            .max((cm.get(x) - (dm.get(x) + f.get(p) - f.get(x))).abs());
    }
    inv.push(Invariant::at_most(
        "change.distance_identity",
        dist_defect,
        EXACT_TOL,
        "dist+_{F+df}(p,x) - D+(x) - f(x) + f(p), and the backward mirror",
    ));

    let cand = candidate_f(&dp, &dm)?;
    let lip = lipschitz_check(&cand, &graph, &sample_pairs(&r.domain, seed, 200))?;
    inv.push(Invariant::at_most(
        "completion.candidate_lipschitz",
        lip.max_violation,
        EXACT_TOL,
        format!("{} sampled pairs", lip.pairs_checked),
    ));
    let comp = completed_metric(&r.metric, &cand, r.stencil)?;
    let cert = completeness_certificate(&comp.change, &dp, &dm, &cand, 0.0, r.stencil)?;
    inv.push(Invariant::at_most(
        "completion.three_quarter_identity",
        cert.max_deviation_from_exact,
        EXACT_TOL,
        "dist+_{F+df/2} - (3/4 D+ + 1/4 D-), and the backward mirror",
    ));

    let mut prop_verdict = None;
    if let Some(levels) = scenario.properness_levels() {
        let alphas = scenario
            .pipeline
            .iter()
            .find_map(|st| match st {
                StageSpec::Scaling { alphas, .. } => Some(alphas.iter().map(|a| (a[0], a[1])).collect()),
                _ => None,
            })
            .unwrap_or_else(|| vec![(1.0, 1.0), (0.75, 0.25), (2.0, 1.0)]);
        let sc = scaled_properness_agreement(&dp, &dm, &alphas, levels)?;
        prop_verdict = Some(sc.reference.overall);
        let disagree = sc.runs.iter().filter(|r| !r.agrees).count();
        inv.push(Invariant::at_most(
            "properness.scaling_agreement",
            disagree as f64,
            0.0,
            format!("reference verdict {:?}", sc.reference.overall),
        ));
    }

    for st in &scenario.pipeline {
        match st {
            StageSpec::Completion {
                mode: CompletionMode::Mollified,
                eps1,
                eps2,
                radius,
                ..
            } if prop_verdict != Some(Verdict::NonproperEvidence) => {
                let m = choose_radius(&cand, &graph, *eps1, *eps2, *radius);
                match m {
                    Ok(m) => {
                        let rep = &m.report;
                        inv.push(Invariant::at_most("mollifier.epsilon1", rep.deviation, *eps1, format!("r = {}", rep.radius)));
                        inv.push(Invariant::at_most(
                            "mollifier.lipschitz_excess",
                            rep.lipschitz.max_excess,
                            crate::mollifier::LIPSCHITZ_TOL,
                            format!("{} edges in excess", rep.lipschitz.excess_edges),
                        ));
                        let kernel = BumpKernel::new(rep.radius, r.domain.h(), r.domain.dim())?;
                        let aff = ScalarField::from_fn(r.domain.clone(), |x| {
                            0.7 + x.iter().enumerate().map(|(a, c)| (a as f64 + 1.3) * c).sum::<f64>()
                        });
                        let mut worst: f64 = 0.0;
                        for pf in &m.patch_fields {
                            let v = convolve_patch(&aff, &kernel, &pf.nodes)?;
                            for (val, &x) in v.iter().zip(&pf.nodes) {
                                worst = worst.max((val - aff.get(x)).abs());
                            }
                        }
                        inv.push(Invariant::at_most("mollifier.affine_exactness", worst, 1e-10, "convolution of an affine function"));
                    }
                    Err(e) => inv.push(Invariant {
                        name: "mollifier.choose_radius".into(),
                        passed: false,
                        value: f64::NAN,
                        tolerance: 0.0,
                        detail: e.to_string(),
                    }),
                }
            }
            StageSpec::Obstruction { radius, functions } => {
                let mut worst = f64::NEG_INFINITY;
                for spec in functions {
                    let g = spec.build(&r.domain, Some(&cand))?;
                    let o = obstruction_check(&r.metric, &g, &dp, &dm, *radius, r.stencil)?;
                    worst = worst
                        .max(o.distance_identity_defect)
                        .max(o.max_radius_bound_excess)
                        .max(o.max_oscillation_excess)
                        .max(o.max_ball_excess);
                }
                inv.push(Invariant::at_most(
                    "obstruction.bounds",
                    worst,
                    EXACT_TOL,
                    format!("{} functions", functions.len()),
                ));
            }
            StageSpec::Spacetime {
                x0, v0, steps, dtau, fd_step, ..
            } => {
                let sm = &r.stationary;
                let sig = signature_check(sm);
                inv.push(Invariant::at_most(
                    "spacetime.signature",
                    if sig.lorentzian { 0.0 } else { 1.0 },
                    0.0,
                    format!("{} nodes", sig.nodes_checked),
                ));
                let geo = integrate_null_geodesic(sm, x0, v0, *steps, *dtau, fd_step.unwrap_or(r.domain.h()))?;
                let fr = fermat_projection_check(sm, &geo, r.stencil)?;
                let rate0 = (geo.initial_tdot() - randers_from_stationary(sm)?.eval(x0, v0)).abs();
                inv.push(Invariant::at_most("spacetime.initial_rate", rate0, 1e-9, "dt/dtau - F(x0, v0)"));
                inv.push(Invariant::at_most(
                    "spacetime.rate_along_curve",
                    fr.max_rate_defect,
                    RATE_TOL,
                    format!("Fermat gap {:.3e}", fr.abs_gap),
                ));
                let rt = slice_change_roundtrip(sm, &f, r.stencil)?;
                inv.push(Invariant::at_most(
                    "spacetime.slice_roundtrip",
                    rt.max_weight_difference,
                    EXACT_TOL,
                    "re-sliced Randers weights against F + df",
                ));
            }
            _ => {}
        }
    }

    let refinement = refinement_ladder(scenario, &r)?.unwrap_or_default();
    if refinement.len() == 3 {
        let e: Vec<f64> = refinement.iter().map(|s| s.error).collect();
        let monotone = e[1] < e[0] && e[2] < e[1];
        let required = scenario.metric.is_constant();
        inv.push(Invariant {
            name: "refinement.monotone_error".into(),
            passed: monotone || !required,
            value: e[2],
            tolerance: e[1],
            detail: format!(
                "errors {:.3e}, {:.3e}, {:.3e}{}",
                e[0],
                e[1],
                e[2],
                if required { "" } else { " (recorded only: metric varies)" }
            ),
        });
    }

    let passed = inv.iter().all(|i| i.passed);
    let out = VerifyOutcome {
        scenario: scenario.name.clone(),
        passed,
        invariants: inv,
        refinement,
    };
    let dir = out_root.join(&scenario.name);
    fs::create_dir_all(&dir)?;
    io::write_json(&dir.join("verify.json"), &out)?;
    Ok(out)
}

/// Checks every manifest entry against the file on disk.
pub fn check_manifest(dir: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(dir.join("manifest.json"))?;
    let m: serde_json::Value = serde_json::from_str(&text)?;
    let mut bad = Vec::new();
    let listed: Vec<&serde_json::Value> = m["artifacts"].as_array().map(|a| a.iter().collect()).unwrap_or_default();
    for e in &listed {
        let path = e["path"].as_str().unwrap_or_default();
        match fs::read(dir.join(path)) {
            Ok(bytes) if Some(sha256_hex(&bytes).as_str()) == e["sha256"].as_str() => {}
            _ => bad.push(path.to_string()),
        }
    }
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if name != "manifest.json" && name != "verify.json" && !listed.iter().any(|e| e["path"] == name.as_str()) {
            bad.push(name);
        }
    }
    Ok(bad)
}
