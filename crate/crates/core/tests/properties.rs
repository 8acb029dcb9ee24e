use std::collections::BTreeMap;

use afym::envelope::{envelope_upper, EnvelopeConfig, OperatorPair};
use afym::flat_metric::{bl_distance, bl_norm, Metric, PointCloudMeasure};
use afym::generation::{
    empirical_ym, mollify, plane_wave, sum_sequences, tiled_potential, Binning, Mollifier, Profile, SequencePlan,
};
use afym::grid::{afree_mode_residual, jet_l1_norm, GridField};
use afym::integrands::{clarke_support_function, recession_value, CatalogIntegrand, ClarkeConfig, FnIntegrand, Integrand};
use afym::linalg::{dot, norm};
use afym::sphere::SphereSampler;
use afym::symbols::{catalog, check_constant_rank, verify_exactness, SymbolMatrix};
use afym::young_measures::{
    barycentre, elementary, jensen_regular, strengthened_jensen, Cell, DiscreteYoungMeasure, SingularAtom,
    VectorAtom, VectorMeasure, WeightedPoint,
};
use proptest::prelude::*;

const OPERATORS: [&str; 8] = [
    "div2",
    "curl2-vec",
    "curl2-mat",
    "grad-scalar2",
    "perp-grad2",
    "grad-vec2",
    "div1",
    "diag2",
];

fn unit(v: Vec<f64>) -> Vec<f64> {
    let r = norm(&v);
    v.into_iter().map(|x| x / r).collect()
}

fn nonzero_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, dim).prop_filter("nonzero", |v| norm(v) > 1e-3)
}

fn weights(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, k).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    })
}

fn sphere_measure(dim: usize) -> impl Strategy<Value = Vec<WeightedPoint>> {
    (1usize..=3).prop_flat_map(move |k| {
        (weights(k), prop::collection::vec(nonzero_vec(dim), k))
            .prop_map(|(w, p)| w.into_iter().zip(p).map(|(w, p)| WeightedPoint::new(w, unit(p))).collect())
    })
}

fn point_measure(dim: usize) -> impl Strategy<Value = Vec<WeightedPoint>> {
    (1usize..=3).prop_flat_map(move |k| {
        (weights(k), prop::collection::vec(prop::collection::vec(-2.0f64..2.0, dim), k))
            .prop_map(|(w, p)| w.into_iter().zip(p).map(|(w, p)| WeightedPoint::new(w, p)).collect())
    })
}

fn signed_measure(max_atoms: usize) -> impl Strategy<Value = PointCloudMeasure> {
    prop::collection::vec((prop::collection::vec(0.0f64..1.0, 2), -1.0f64..1.0), 1..=max_atoms)
        .prop_map(|atoms| PointCloudMeasure::new(Metric::Linf, atoms).unwrap())
}

fn catalog_entries(dim: usize) -> Vec<CatalogIntegrand> {
    let mut e1 = vec![0.0; dim];
    e1[0] = 1.0;
    vec![
        CatalogIntegrand::Norm { dim },
        CatalogIntegrand::Area { dim },
        CatalogIntegrand::Linear { a: (0..dim).map(|k| 0.5 - k as f64).collect() },
        CatalogIntegrand::TwoWell { a: e1, eps: 0.2 },
        CatalogIntegrand::AbsDiff { dim },
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symbol_is_homogeneous(k in 0usize..OPERATORS.len(), xi in nonzero_vec(2), t in 0.1f64..10.0) {
        let op = catalog::get(OPERATORS[k]).unwrap();
        let xi = &xi[..op.space_dim()];
        let scaled: Vec<f64> = xi.iter().map(|x| t * x).collect();
        let lhs = op.symbol_matrix(&scaled);
        let rhs = op.symbol_matrix(xi) * t.powi(op.order() as i32);
        prop_assert!((&lhs - &rhs).norm() <= 1e-12 * rhs.norm().max(1e-300));
    }

    #[test]
    fn kernel_vectors_are_annihilated(k in 0usize..OPERATORS.len(), xi in nonzero_vec(2)) {
        let op = catalog::get(OPERATORS[k]).unwrap();
        let xi = &xi[..op.space_dim()];
        let s = SymbolMatrix::from_matrix(xi.to_vec(), op.symbol_matrix(xi));
        for v in &s.kernel_basis {
            let av = &s.matrix * nalgebra::DVector::from_column_slice(v);
            prop_assert!(av.norm() <= 1e-8 * s.sigma_max().max(1e-300));
        }
    }

    #[test]
    fn sampled_rank_is_seed_independent(k in 0usize..OPERATORS.len(), a in any::<u64>(), b in any::<u64>()) {
        let op = catalog::get(OPERATORS[k]).unwrap();
        let ra = check_constant_rank(&op, &SphereSampler::new(64).with_random(64, a));
        let rb = check_constant_rank(&op, &SphereSampler::new(64).with_random(64, b));
        prop_assert_eq!(ra.sampled_rank, rb.sampled_rank);
    }

    #[test]
    fn homogeneous_entries_are_their_own_recession(z in nonzero_vec(2)) {
        let entries = [
            CatalogIntegrand::Norm { dim: 2 },
            CatalogIntegrand::Linear { a: vec![0.3, -1.7] },
            CatalogIntegrand::AbsDiff { dim: 2 },
        ];
        for f in &entries {
            prop_assert!((recession_value(f, &z).unwrap() - f.eval(&z)).abs() <= 1e-12);
        }
    }

    #[test]
    fn support_function_dominates_recession(d in nonzero_vec(2)) {
        let d = unit(d);
        for f in catalog_entries(2) {
            let cfg = ClarkeConfig { count: 1024, ..Default::default() };
            let mut g = clarke_support_function(&f, &cfg);
            // far-field gradient along the probe, as in the strengthened inequality
            g.add_points(&f, &[d.iter().map(|x| x * cfg.radius).collect()]);
            prop_assert!(g.eval(&d) >= recession_value(&f, &d).unwrap() - 1e-6, "{}", f.name());
        }
    }

    #[test]
    fn bl_norm_axioms(mu in signed_measure(10), nu in signed_measure(10), c in -3.0f64..3.0) {
        let n_mu = bl_norm(&mu).unwrap();
        prop_assert!((bl_norm(&mu.scaled(c)).unwrap() - c.abs() * n_mu).abs() <= 1e-9 * (1.0 + n_mu));
        let sum = mu.combine(1.0, &nu).unwrap();
        prop_assert!(bl_norm(&sum).unwrap() <= n_mu + bl_norm(&nu).unwrap() + 1e-9);
        prop_assert!(n_mu <= mu.total_variation() + 1e-9);
    }

    #[test]
    fn bl_distance_is_a_metric(a in signed_measure(6), b in signed_measure(6), c in signed_measure(6)) {
        let ab = bl_distance(&a, &b).unwrap();
        prop_assert!((ab - bl_distance(&b, &a).unwrap()).abs() <= 1e-9);
        prop_assert!(bl_distance(&a, &a).unwrap().abs() <= 1e-12);
        prop_assert!(ab <= bl_distance(&a, &c).unwrap() + bl_distance(&c, &b).unwrap() + 1e-9);
    }

    #[test]
    fn positive_norm_is_mass(atoms in prop::collection::vec((prop::collection::vec(0.0f64..1.0, 3), 0.01f64..2.0), 1..=30)) {
        let mu = PointCloudMeasure::new(Metric::Euclidean, atoms).unwrap();
        prop_assert!((bl_norm(&mu).unwrap() - mu.mass()).abs() <= 1e-8);
    }

    #[test]
    fn pairing_is_linear_in_eta(osc in point_measure(2), sphere in sphere_measure(2), lam in 0.0f64..2.0, c in -2.0f64..2.0) {
        let nu = DiscreteYoungMeasure::homogeneous(2, 4, osc, lam, sphere).unwrap()
            .with_singular(vec![SingularAtom { x: vec![0.3, 0.6], mass: 0.7, sphere: vec![WeightedPoint::new(1.0, vec![0.6, 0.8])] }])
            .unwrap();
        let f = CatalogIntegrand::Area { dim: 2 };
        let e1 = |x: &[f64]| 1.0 + x[0];
        let e2 = |x: &[f64]| (x[1] * 3.0).sin();
        let lhs = nu.pair(&|x| e1(x) + c * e2(x), &f).unwrap();
        let rhs = nu.pair(&e1, &f).unwrap() + c * nu.pair(&e2, &f).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn pairing_is_linear_in_phi(osc in point_measure(2), sphere in sphere_measure(2), lam in 0.0f64..2.0, c in -2.0f64..2.0) {
        let nu = DiscreteYoungMeasure::homogeneous(2, 2, osc, lam, sphere).unwrap();
        let one = |_: &[f64]| 1.0;
        let (a, b) = (CatalogIntegrand::Area { dim: 2 }, CatalogIntegrand::Norm { dim: 2 });
        let comb = FnIntegrand::new("area+c·norm", 2, 1.0 + c.abs(), move |z: &[f64]| (1.0 + dot(z, z)).sqrt() + c * norm(z))
            .with_recession(move |z: &[f64]| (1.0 + c) * norm(z));
        let lhs = nu.pair(&one, &comb).unwrap();
        let rhs = nu.pair(&one, &a).unwrap() + c * nu.pair(&one, &b).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn affine_jensen_is_equality(osc in point_measure(2), sphere in sphere_measure(2), lam in 0.0f64..2.0, a in nonzero_vec(2)) {
        let nu = DiscreteYoungMeasure::homogeneous(2, 2, osc, lam, sphere).unwrap();
        let f = CatalogIntegrand::Linear { a };
        let r = jensen_regular(&nu, &[&f as &dyn Integrand]).unwrap();
        prop_assert!(r.worst_slack().abs() <= 1e-9);
    }

    #[test]
    fn strengthened_never_exceeds_weak(nu in sphere_measure(2), k in 0usize..5) {
        let f = &catalog_entries(2)[k];
        let r = strengthened_jensen(&nu, f, &ClarkeConfig { count: 1024, ..Default::default() }).unwrap();
        prop_assert!(r.strengthened <= r.weak + 1e-6, "{r:?}");
    }

    #[test]
    fn elementary_inverts_barycentre(z in prop::collection::vec(-2.0f64..2.0, 2), d in nonzero_vec(2), mass in 0.1f64..3.0, x in prop::collection::vec(0.05f64..0.95, 2)) {
        let cells = vec![Cell { osc: vec![WeightedPoint::new(1.0, z)], lam_a: 0.0, sphere: vec![] }; 16];
        let atom = SingularAtom { x, mass, sphere: vec![WeightedPoint::new(1.0, unit(d))] };
        let nu = DiscreteYoungMeasure::new(2, 4, cells, vec![atom]).unwrap();
        let back = elementary(&barycentre(&nu));
        prop_assert_eq!(back.cells().len(), nu.cells().len());
        for (p, q) in back.cells().iter().zip(nu.cells()) {
            prop_assert_eq!(p.osc.len(), 1);
            prop_assert!(norm(&afym::linalg::sub(&p.osc[0].point, &q.osc[0].point)) <= 1e-12);
        }
        let (sa, sb) = (&back.singular()[0], &nu.singular()[0]);
        prop_assert!((sa.mass - sb.mass).abs() <= 1e-12);
        prop_assert!(norm(&afym::linalg::sub(&sa.sphere[0].point, &sb.sphere[0].point)) <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn tiling_scales_potential_jet(jk in 0usize..3, amp in 0.2f64..3.0, shift in 0.0f64..1.0) {
        let j = [2usize, 4, 8][jk];
        let u = GridField::from_fn(2, 64, 1, |x| {
            let s = |t: f64| (std::f64::consts::PI * (t + shift)).sin();
            vec![amp * s(x[0]).powi(2) * s(x[1]).powi(4)]
        }).unwrap();
        let r = jet_l1_norm(&tiled_potential(&u, j, 1).unwrap(), 0).unwrap() / jet_l1_norm(&u, 0).unwrap();
        prop_assert!((r * j as f64 - 1.0).abs() <= 0.02, "ratio {r}");
    }

    #[test]
    fn mollification_preserves_integral(
        atoms in prop::collection::vec((prop::collection::vec(0.1f64..0.9, 2), 0.1f64..2.0, nonzero_vec(2)), 1..4),
        ac in prop::collection::vec(-1.0f64..1.0, 2),
        tk in 0usize..3,
    ) {
        let t = [0.25, 0.125, 0.0625][tk];
        let atoms: Vec<VectorAtom> = atoms.into_iter().map(|(x, mass, d)| VectorAtom { x, mass, polar: unit(d) }).collect();
        let v = VectorMeasure::new(2, 32, vec![ac.clone(); 32 * 32], atoms.clone()).unwrap();
        let m = mollify(&v, &Mollifier::new(t, 2).unwrap()).unwrap();
        let mean = m.mean();
        for k in 0..2 {
            let want = ac[k] + atoms.iter().map(|a| a.mass * a.polar[k]).sum::<f64>();
            prop_assert!((mean[k] - want).abs() <= 1e-9 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn plane_waves_are_a_free(kx in -3i32..=3, ky in -3i32..=3, theta in 0.1f64..0.9, amp in 0.1f64..2.0, j in 1usize..4) {
        prop_assume!(kx != 0 || ky != 0);
        let div2 = catalog::get("div2").unwrap();
        let xi = [kx as f64, ky as f64];
        let w = [-(ky as f64) * amp, kx as f64 * amp];
        for profile in [Profile::Sine, Profile::Square { theta }] {
            let v = plane_wave(&div2, &xi, &w, &profile, j, 32).unwrap();
            prop_assert!(afree_mode_residual(&div2, &v).unwrap() <= 1e-6);
        }
    }

    #[test]
    fn plan_sum_is_commutative(a in prop::collection::vec(-1.0f64..1.0, 2 * 64), b in prop::collection::vec(-1.0f64..1.0, 2 * 64)) {
        let fa = GridField::from_values(2, 8, 2, a).unwrap();
        let fb = GridField::from_values(2, 8, 2, b).unwrap();
        let pa = SequencePlan::new(vec![fa.clone(), fb.clone()], "a", BTreeMap::new()).unwrap();
        let pb = SequencePlan::new(vec![fb, fa], "b", BTreeMap::new()).unwrap();
        let ab = sum_sequences(&pa, &pb).unwrap();
        let ba = sum_sequences(&pb, &pa).unwrap();
        prop_assert_eq!(ab.snapshots(), ba.snapshots());
    }

    #[test]
    fn empirical_of_constant_field_is_a_dirac(z in prop::collection::vec(-2.0f64..2.0, 2)) {
        let plan = SequencePlan::new(vec![GridField::constant(2, 16, &z).unwrap()], "constant", BTreeMap::new()).unwrap();
        let binning = Binning { cells: 4, ..Default::default() };
        let emp = empirical_ym(&plan, &binning).unwrap();
        prop_assert!(emp.flagged.is_empty());
        prop_assert!(emp.measure.concentration_mass().abs() <= 1e-12);
        for c in emp.measure.cells() {
            prop_assert_eq!(c.osc.len(), 1);
            prop_assert!(norm(&afym::linalg::sub(&c.osc[0].point, &z)) <= binning.value_bin);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn projection_certificates_are_admissible(z in prop::collection::vec(-1.5f64..1.5, 2), k in 0usize..5) {
        let ops = OperatorPair::new(catalog::get("div2").unwrap(), catalog::get("perp-grad2")).unwrap();
        let f = &catalog_entries(2)[k];
        let cfg = EnvelopeConfig { grid: 8, restarts: 2, max_iters: 40, ..Default::default() };
        let e = match envelope_upper(f, &z, &ops, &cfg) {
            // |z₁| − |z₂| is unbounded below along div-free oscillations of z₂
            Err(afym::Error::Divergence { .. }) if f.name() == "abs-diff" => return Ok(()),
            r => r.unwrap(),
        };
        prop_assert!(e.value <= f.eval(&z) + 1e-12);
        prop_assert!(e.residual_afree <= 1e-8);
        let cert = e.certificate.unwrap();
        prop_assert!(cert.mean().iter().all(|m| m.abs() <= 1e-10));
    }
}

#[test]
fn catalog_pairs_are_exact() {
    for a in OPERATORS {
        if let Some(b) = catalog::potential_of(a) {
            let r = verify_exactness(&catalog::get(a).unwrap(), &catalog::get(b).unwrap(), 500).unwrap();
            assert!(r.exact, "{a}/{b}: {r:?}");
        }
    }
}
