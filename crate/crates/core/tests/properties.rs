use std::sync::Arc;

use finsler_completion::completion::{candidate_f, completed_metric, completeness_certificate, lipschitz_check};
use finsler_completion::distance::{build_graph, distance_pair};
use finsler_completion::grid::{GridDomain, Stencil};
use finsler_completion::metric::{check_positive_homogeneous, CovectorField, MatrixField, MetricField};
use finsler_completion::properness::scaled_properness_agreement;
use finsler_completion::{apply_projective_change, GradientScheme, Lagrangian, ScalarField};
use proptest::prelude::*;

fn metric(w: (f64, f64), a: f64, b: f64) -> MetricField {
    MetricField::randers(2, MatrixField::Constant(vec![a, 0.0, 0.0, b]), CovectorField::Constant(vec![w.0, w.1])).unwrap()
}

fn domain() -> Arc<GridDomain> {
    Arc::new(GridDomain::from_extent(&[-1.0, -1.0], &[2.0, 2.0], 0.125).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn randers_weights_are_homogeneous(wx in -2.0..2.0f64, wy in -2.0..2.0f64, a in 0.3..3.0f64, b in 0.3..3.0f64) {
        let m = metric((wx, wy), a, b);
        let rep = check_positive_homogeneous(&m, &[[0.0; 3]], &[[1.0, 0.0, 0.0], [0.3, -0.8, 0.0]], &[0.5, 3.0]);
        prop_assert!(rep.positive);
        prop_assert!(rep.max_relative_violation <= 1e-12);
    }

    #[test]
    fn three_quarter_identity_holds(wx in -0.9..0.9f64, wy in -0.9..0.9f64, a in 0.5..2.0f64, b in 0.5..2.0f64, p in 0usize..289) {
        let d = domain();
        let m = metric((wx, wy), a, b);
        let g = build_graph(d, &m, Stencil::Moore).unwrap();
        let (dp, dm) = distance_pair(&g, p).unwrap();
        let f = candidate_f(&dp, &dm).unwrap();
        prop_assert!(lipschitz_check(&f, &g, &[]).unwrap().max_violation <= 1e-12);
        let c = completed_metric(&m, &f, Stencil::Moore).unwrap();
        let cert = completeness_certificate(&c.change, &dp, &dm, &f, 0.0, Stencil::Moore).unwrap();
        prop_assert!(cert.max_deviation_from_exact <= 1e-12);
    }

    #[test]
    fn linear_change_shifts_distances(wx in -0.5..0.5f64, gx in -0.4..0.4f64, gy in -0.4..0.4f64) {
        let d = domain();
        let m = metric((wx, 0.0), 1.0, 1.0);
        let f = ScalarField::from_fn(d.clone(), |x| gx * x[0] + gy * x[1]);
        let changed = apply_projective_change(&m, &f, GradientScheme::EdgeDifference, Stencil::Moore).unwrap();
        prop_assert!(changed.eval(&[0.0, 0.0], &[1.0, 0.0]) > 0.0);
        let p = d.check_point(&[0.0, 0.0]).unwrap();
        let (dp, _) = distance_pair(&build_graph(d.clone(), &m, Stencil::Moore).unwrap(), p).unwrap();
        let (cp, _) = distance_pair(&build_graph(d.clone(), &changed, Stencil::Moore).unwrap(), p).unwrap();
        for x in d.active_nodes() {
            prop_assert!((cp.get(x) - dp.get(x) - f.get(x) + f.get(p)).abs() <= 1e-12);
        }
    }

    #[test]
    fn box_domains_show_no_nonproper_evidence(wx in -0.6..0.6f64, c in 0.2..1.5f64) {
        let d = domain();
        let g = build_graph(d.clone(), &metric((wx, 0.1), 1.0, 1.0), Stencil::Moore).unwrap();
        let (dp, dm) = distance_pair(&g, d.check_point(&[0.0, 0.0]).unwrap()).unwrap();
        let rep = scaled_properness_agreement(&dp, &dm, &[(1.0, 1.0), (0.75, 0.25), (2.0, 1.0)], &[c]).unwrap();
        prop_assert!(rep.runs.iter().all(|r| r.report.overall != finsler_completion::Verdict::NonproperEvidence));
    }
}
