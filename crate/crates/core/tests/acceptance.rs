//! Acceptance suite: one PASS/FAIL line per criterion.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use finsler_completion::completion::{axis_weights, candidate_f, completed_metric, completeness_certificate, obstruction_check};
use finsler_completion::config::{CompletionMode, StageSpec};
use finsler_completion::distance::{build_graph, distance_pair};
use finsler_completion::grid::{GridDomain, Stencil};
use finsler_completion::metric::{CovectorField, MatrixField, MetricField, ScalarMode, VectorMode};
use finsler_completion::mollifier::{choose_radius, convolve_patch, epsilon1_check, lipschitz_bound_check, BumpKernel};
use finsler_completion::properness::{properness_indicator, scaled_properness_agreement, Verdict};
use finsler_completion::scenario::random_admissible_f;
use finsler_completion::spacetime::{fermat_projection_check, integrate_null_geodesic};
use finsler_completion::stationary::{randers_from_stationary, StationaryMetric};
use finsler_completion::{apply_projective_change, GradientScheme, Lagrangian, ScalarField, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), String>;

const TOL: f64 = 1e-12;

fn scenarios() -> Vec<(PathBuf, Scenario)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .expect("scenario directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let s = Scenario::from_file(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            (p, s)
        })
        .collect()
}

fn e(x: impl std::fmt::Display) -> String {
    x.to_string()
}

fn random_walk(graph: &finsler_completion::StencilGraph, rng: &mut ChaCha8Rng, len: usize) -> Vec<usize> {
    let nodes: Vec<usize> = graph.domain().active_nodes().collect();
    let mut path = vec![nodes[rng.gen_range(0..nodes.len())]];
    for _ in 0..len {
        let next: Vec<usize> = graph.edges(*path.last().unwrap()).map(|e| e.0).collect();
        path.push(next[rng.gen_range(0..next.len())]);
    }
    path
}

fn criterion1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let domain = Arc::new(GridDomain::new(&[0.0, 0.0], &[64, 64], 1.0 / 63.0).map_err(e)?);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let a = rng.gen_range(0.5..2.0);
        let b = rng.gen_range(0.5..2.0);
        let c = rng.gen_range(-0.3..0.3) * (a * b as f64).sqrt();
        let g = MatrixField::Conformal {
            base: vec![a, c, c, b],
            modes: vec![ScalarMode {
                amplitude: rng.gen_range(0.0..0.3),
                wavevector: vec![rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)],
                phase: rng.gen_range(0.0..6.0),
            }],
        };
        let omega = CovectorField::Modes {
            base: vec![rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8)],
            modes: vec![VectorMode {
                amplitude: vec![rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)],
                wavevector: vec![rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)],
                phase: rng.gen_range(0.0..6.0),
            }],
        };
        let metric = MetricField::randers(2, g, omega).map_err(e)?;
        let graph = build_graph(domain.clone(), &metric, Stencil::Moore).map_err(e)?;
        let f = random_admissible_f(&graph, &mut rng).map_err(e)?;
        let changed = apply_projective_change(&metric, &f, GradientScheme::EdgeDifference, Stencil::Moore).map_err(e)?;
        let cg = build_graph(domain.clone(), &changed, Stencil::Moore).map_err(e)?;
        for _ in 0..20 {
            let path = random_walk(&graph, &mut rng, 60);
            let (s, t) = (path[0], *path.last().unwrap());
            let d = cg.path_length(&path).map_err(e)? - graph.path_length(&path).map_err(e)? - (f.get(t) - f.get(s));
            worst = worst.max(d.abs());
        }
        let p = rng.gen_range(0..domain.len());
        let (dp, dm) = distance_pair(&graph, p).map_err(e)?;
        let (cp, cm) = distance_pair(&cg, p).map_err(e)?;
        for x in domain.active_nodes() {
            worst = worst
                .max((cp.get(x) - dp.get(x) - f.get(x) + f.get(p)).abs())
                .max((cm.get(x) - dm.get(x) - f.get(p) + f.get(x)).abs());
        }
    }
    Ok((worst <= TOL, format!("max length/distance defect {worst:.3e} over 5 fields")))
}

fn criterion2() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut names = Vec::new();
    for (_, s) in scenarios() {
        let r = s.resolve().map_err(e)?;
        let graph = build_graph(r.domain.clone(), &r.metric, r.stencil).map_err(e)?;
        let (dp, dm) = distance_pair(&graph, r.base_node).map_err(e)?;
        let f = candidate_f(&dp, &dm).map_err(e)?;
        let cm = completed_metric(&r.metric, &f, r.stencil).map_err(e)?;
        let cert = completeness_certificate(&cm.change, &dp, &dm, &f, 0.0, r.stencil).map_err(e)?;
        worst = worst.max(cert.max_deviation_from_exact);
        names.push(s.name);
    }
    Ok((worst <= TOL, format!("max deviation {worst:.3e} on {}", names.join(", "))))
}

fn criterion3() -> Outcome {
    let h = 1.0 / 32.0;
    let domain = Arc::new(GridDomain::from_extent(&[-2.0, -2.0], &[4.0, 4.0], h).map_err(e)?);
    let metric = MetricField::constant_randers(&[0.5, 0.0]);
    let graph = build_graph(domain.clone(), &metric, Stencil::Moore).map_err(e)?;
    let p = domain.check_point(&[0.0, 0.0]).map_err(e)?;
    let (dp, dm) = distance_pair(&graph, p).map_err(e)?;
    let f = candidate_f(&dp, &dm).map_err(e)?;
    let xp = domain.coords(p);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for o in Stencil::Moore.offsets(2) {
        let mut x = p;
        while let Some(y) = domain.neighbor(x, &o) {
            let c = domain.coords(y);
            worst = worst.max((f.get(y) + 0.5 * (c[0] - xp[0])).abs());
            count += 1;
            x = y;
        }
    }
    let changed = apply_projective_change(&metric, &f, GradientScheme::EdgeDifference, Stencil::Moore).map_err(e)?;
    let mut asym: f64 = 0.0;
    for node in [p, domain.check_point(&[0.5, 0.25]).map_err(e)?, domain.check_point(&[-1.0, 0.5]).map_err(e)?] {
        let (east, west) = axis_weights(&changed, &domain, node, 0).ok_or("no axis edges")?;
        asym = asym.max((east - west).abs());
    }
    let ok = worst <= 3.0 * h && asym <= 3.0 * h;
    Ok((
        ok,
        format!("candidate error {worst:.3e} on {count} ray nodes, east/west gap {asym:.3e} (limit {:.3e})", 3.0 * h),
    ))
}

fn criterion4() -> Outcome {
    let (_, s) = scenarios()
        .into_iter()
        .find(|(_, s)| s.name == "punctured-plane")
        .ok_or("punctured-plane scenario missing")?;
    let r = s.resolve().map_err(e)?;
    let graph = build_graph(r.domain.clone(), &r.metric, r.stencil).map_err(e)?;
    let (dp, dm) = distance_pair(&graph, r.base_node).map_err(e)?;
    let levels = s.properness_levels().ok_or("no levels")?;
    let prescribed = *levels.last().unwrap();
    let rep = properness_indicator(&dp, &dm, &[prescribed]).map_err(e)?;
    let nonproper = rep.overall == Verdict::NonproperEvidence;
    let cand = candidate_f(&dp, &dm).map_err(e)?;
    let (radius, functions) = s
        .pipeline
        .iter()
        .find_map(|st| match st {
            StageSpec::Obstruction { radius, functions } => Some((*radius, functions.clone())),
            _ => None,
        })
        .ok_or("no obstruction stage")?;
    let mut worst = f64::NEG_INFINITY;
    let mut all = true;
    for spec in &functions {
        let f = spec.build(&r.domain, Some(&cand)).map_err(e)?;
        let o = obstruction_check(&r.metric, &f, &dp, &dm, radius, r.stencil).map_err(e)?;
        all &= o.passed && o.ball_verdict == Verdict::NonproperEvidence;
        worst = worst
            .max(o.distance_identity_defect)
            .max(o.max_radius_bound_excess)
            .max(o.max_oscillation_excess)
            .max(o.max_ball_excess);
    }
    let ok = nonproper && all && worst <= TOL && functions.len() >= 3;
    Ok((
        ok,
        format!(
            "verdict {:?} at level {prescribed}, {} functions, worst bound excess {worst:.3e}",
            rep.overall,
            functions.len()
        ),
    ))
}

fn criterion5() -> Outcome {
    let (eps1, eps2) = (0.05, 0.5);
    let mut lines = Vec::new();
    let mut ok = true;

    let d1 = Arc::new(GridDomain::from_extent(&[-1.0], &[2.0], 1.0 / 128.0).map_err(e)?);
    let g1 = build_graph(d1.clone(), &MetricField::euclidean(1), Stencil::VonNeumann).map_err(e)?;
    let kink = ScalarField::from_fn(d1.clone(), |x| x[0].abs());
    let (_, s) = scenarios()
        .into_iter()
        .find(|(_, s)| {
            s.pipeline
                .iter()
                .any(|st| matches!(st, StageSpec::Completion { mode: CompletionMode::Mollified, .. }))
        })
        .ok_or("no mollified scenario")?;
    let r = s.resolve().map_err(e)?;
    let g2 = build_graph(r.domain.clone(), &r.metric, r.stencil).map_err(e)?;
    let (dp, dm) = distance_pair(&g2, r.base_node).map_err(e)?;
    let cand = candidate_f(&dp, &dm).map_err(e)?;

    for (label, f, graph) in [("|x|", &kink, &g1), (s.name.as_str(), &cand, &g2)] {
        let m = choose_radius(f, graph, eps1, eps2, None).map_err(e)?;
        let dev = epsilon1_check(f, &m.field, None);
        let lip = lipschitz_bound_check(&m.field, graph, eps2);
        let kernel = BumpKernel::new(m.report.radius, graph.domain().h(), graph.domain().dim()).map_err(e)?;
        let aff = ScalarField::from_fn(graph.domain().clone(), |x| {
            0.4 - 1.7 * x[0] + x.get(1).map_or(0.0, |y| 0.9 * y)
        });
        let mut affine: f64 = 0.0;
        for pf in &m.patch_fields {
            for (v, &x) in convolve_patch(&aff, &kernel, &pf.nodes).map_err(e)?.iter().zip(&pf.nodes) {
                affine = affine.max((v - aff.get(x)).abs());
            }
        }
        ok &= dev <= eps1 && lip.excess_edges == 0 && lip.passes() && affine <= 1e-10;
        lines.push(format!(
            "{label}: r = {}, |f~ - f| = {dev:.3e}, excess edges {}, affine {affine:.1e}",
            m.report.radius, lip.excess_edges
        ));
    }
    Ok((ok, lines.join("; ")))
}

fn criterion6() -> Outcome {
    let alphas = [(1.0, 1.0), (0.75, 0.25), (2.0, 1.0)];
    let mut ok = true;
    let mut parts = Vec::new();
    for (_, s) in scenarios() {
        let r = s.resolve().map_err(e)?;
        let graph = build_graph(r.domain.clone(), &r.metric, r.stencil).map_err(e)?;
        let (dp, dm) = distance_pair(&graph, r.base_node).map_err(e)?;
        let levels = s.properness_levels().ok_or("scenario without levels")?;
        let rep = scaled_properness_agreement(&dp, &dm, &alphas, levels).map_err(e)?;
        ok &= rep.all_agree;
        parts.push(format!("{} {:?}", s.name, rep.reference.overall));
    }
    Ok((ok, parts.join(", ")))
}

fn criterion7() -> Outcome {
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    let len = 1.01875;
    let steps = 163;
    let mut gaps = Vec::new();
    let mut rate: f64 = 0.0;
    let mut oracle: f64 = 0.0;
    for h in [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0] {
        let domain = Arc::new(GridDomain::from_extent(&[-2.0, -2.0], &[4.0, 4.0], h).map_err(e)?);
        let s = StationaryMetric::new(domain, MatrixField::Identity, CovectorField::Constant(vec![0.5, 0.0])).map_err(e)?;
        let geo = integrate_null_geodesic(&s, &[0.0, 0.0], &[1.0, 0.0], steps, len / steps as f64, h).map_err(e)?;
        let f = randers_from_stationary(&s).map_err(e)?;
        rate = rate.max((geo.initial_tdot() - f.eval(&[0.0, 0.0], &[1.0, 0.0])).abs());
        oracle = oracle.max((geo.initial_tdot() - golden).abs());
        let rep = fermat_projection_check(&s, &geo, Stencil::Moore).map_err(e)?;
        gaps.push(rep.abs_gap);
    }
    let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
    let ok = rate <= 1e-9 && oracle <= 1e-9 && gaps[2] <= 0.02 && monotone;
    Ok((
        ok,
        format!(
            "|tdot - F| = {rate:.1e}, |tdot - 1.618034| = {oracle:.1e}, gaps {:.3e} > {:.3e} > {:.3e}",
            gaps[0], gaps[1], gaps[2]
        ),
    ))
}

fn criterion8() -> Outcome {
    let a = tempfile::tempdir().map_err(e)?;
    let b = tempfile::tempdir().map_err(e)?;
    let mut files = 0;
    let mut differing = Vec::new();
    for (_, s) in scenarios() {
        finsler_completion::run(&s, a.path()).map_err(e)?;
        finsler_completion::run(&s, b.path()).map_err(e)?;
        let da = a.path().join(&s.name);
        let mut names: Vec<_> = std::fs::read_dir(&da).map_err(e)?.map(|x| x.unwrap().file_name()).collect();
        names.sort();
        for n in names {
            files += 1;
            let x = std::fs::read(da.join(&n)).map_err(e)?;
            let y = std::fs::read(b.path().join(&s.name).join(&n)).unwrap_or_default();
            if x != y {
                differing.push(format!("{}/{}", s.name, n.to_string_lossy()));
            }
        }
    }
    Ok((
        differing.is_empty() && files > 0,
        format!("{files} files compared, {} differ {differing:?}", differing.len()),
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("random Randers length and distance identities", criterion1),
        ("three-quarter identity on bundled scenarios", criterion2),
        ("constant Randers candidate and recovered symmetry", criterion3),
        ("punctured plane obstruction", criterion4),
        ("mollifier certificates", criterion5),
        ("scaling agreement", criterion6),
        ("Fermat correspondence", criterion7),
        ("deterministic artifacts", criterion8),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (ok, detail) = match check() {
            Ok(v) => v,
            Err(msg) => (false, format!("error: {msg}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {} {}: {name} ({:.1}s) {detail}",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
