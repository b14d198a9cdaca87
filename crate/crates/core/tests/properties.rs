use std::f64::consts::TAU;

use proptest::prelude::*;

use escdyn::expr::MapExpr;
use escdyn::flows::{group_law_residual, FlowSystem, TimeValue};
use escdyn::hyperspace::{hausdorff_distance, induced_map, FiniteCompact};
use escdyn::phase_space::{euclidean_distance, CompactExhaustion, PhasePoint, SequenceRule};
use escdyn::semigroup::{
    apply_word, check_minimality, default_family, run_spec, FillerPolicy, GeneratorSet, Minimality, Schedule,
    SemigroupParams, UnboundedSequenceSpec,
};
use escdyn::suites::rotation;

fn vec2() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0..50.0f64, 2)
}

fn finite_set() -> impl Strategy<Value = FiniteCompact> {
    prop::collection::vec(vec2(), 1..8).prop_map(|pts| FiniteCompact::new("A", pts).unwrap())
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn euclidean_metric_axioms(a in vec2(), b in vec2(), c in vec2()) {
        prop_assert_eq!(euclidean_distance(&a, &a), 0.0);
        prop_assert_eq!(euclidean_distance(&a, &b), euclidean_distance(&b, &a));
        let direct = euclidean_distance(&a, &c);
        let detour = euclidean_distance(&a, &b) + euclidean_distance(&b, &c);
        prop_assert!(direct <= detour * (1.0 + 4.0 * f64::EPSILON));
    }

    #[test]
    fn ball_exhaustion_is_nested(pts in prop::collection::vec(vec2(), 1..20), step in 0.5..10.0f64) {
        let exh = CompactExhaustion::balls(vec![0.0, 0.0], step, 8).unwrap();
        let samples: Vec<PhasePoint> = pts.into_iter().map(|p| PhasePoint::euclidean(p).unwrap()).collect();
        prop_assert_eq!(exh.nesting_violation(&samples).unwrap(), None);
    }

    #[test]
    fn hausdorff_metric_axioms(a in finite_set(), b in finite_set(), c in finite_set()) {
        prop_assert_eq!(hausdorff_distance(&a, &a), 0.0);
        prop_assert_eq!(hausdorff_distance(&a, &b), hausdorff_distance(&b, &a));
        let detour = hausdorff_distance(&a, &b) + hausdorff_distance(&b, &c);
        prop_assert!(hausdorff_distance(&a, &c) <= detour * (1.0 + 4.0 * f64::EPSILON));
    }

    #[test]
    fn translation_acts_isometrically_on_compacta(a in finite_set(), b in finite_set(), n in -20i64..20) {
        let sys = FlowSystem::translation(vec![1.0, -0.5]).unwrap();
        let fa = induced_map(&sys, &a, TimeValue::Continuous(n as f64)).unwrap();
        let fb = induced_map(&sys, &b, TimeValue::Continuous(n as f64)).unwrap();
        prop_assert!(close(hausdorff_distance(&fa, &fb), hausdorff_distance(&a, &b)));
    }

    #[test]
    fn induced_map_composes(a in finite_set(), s in -3.0..3.0f64, t in -3.0..3.0f64) {
        let sys = FlowSystem::translation(vec![0.25, 1.0]).unwrap();
        let once = induced_map(&sys, &a, TimeValue::Continuous(s + t)).unwrap();
        let twice = induced_map(&sys, &induced_map(&sys, &a, TimeValue::Continuous(s)).unwrap(), TimeValue::Continuous(t)).unwrap();
        prop_assert!(hausdorff_distance(&once, &twice) < 1e-9);
    }

    #[test]
    fn spiral_group_law_inside_the_cycle(r in 0.05..0.95f64, theta in 0.0..TAU, s in -5.0..5.0f64, t in -5.0..5.0f64) {
        let x = PhasePoint::euclidean(vec![r * theta.cos(), r * theta.sin()]).unwrap();
        let res = group_law_residual(&FlowSystem::Spiral, &x, TimeValue::Continuous(s), TimeValue::Continuous(t)).unwrap();
        prop_assert!(res < 1e-9, "residual {res}");
    }

    #[test]
    fn shift_is_a_semigroup(a in 0u64..500, b in 0u64..500) {
        let x = PhasePoint::symbolic(SequenceRule::DyadicCountdown, 4096).unwrap();
        let sys = FlowSystem::Shift;
        let once = sys.evaluate(&x, TimeValue::Discrete((a + b) as i64)).unwrap();
        let twice = sys.evaluate(&sys.evaluate(&x, TimeValue::Discrete(a as i64)).unwrap(), TimeValue::Discrete(b as i64)).unwrap();
        let (p, q) = (once.as_symbolic().unwrap(), twice.as_symbolic().unwrap());
        for i in 1..=64 {
            prop_assert_eq!(p.value(i), q.value(i));
        }
    }

    #[test]
    fn discrete_flow_iterates_the_map(x in -10.0..10.0f64, y in -10.0..10.0f64, n in 0i64..30) {
        let map = MapExpr::parse("f", 2, &["0.9*x - 0.2*y", "0.2*x + 0.9*y"]).unwrap();
        let sys = FlowSystem::custom_map(map, None).unwrap();
        let got = sys.evaluate(&PhasePoint::euclidean(vec![x, y]).unwrap(), TimeValue::Discrete(n)).unwrap();
        let mut z = vec![x, y];
        for _ in 0..n {
            z = vec![0.9 * z[0] - 0.2 * z[1], 0.2 * z[0] + 0.9 * z[1]];
        }
        prop_assert!(euclidean_distance(got.as_euclidean().unwrap(), &z) < 1e-9);
    }

    #[test]
    fn terms_count_the_designated_generator(k in 1u64..12, factor in 1u64..4, max_len in 0usize..4, seed in any::<u64>()) {
        let g = GeneratorSet::new("affine", vec![
            MapExpr::parse("g1", 1, &["x/2"]).unwrap(),
            MapExpr::parse("g2", 1, &["x/2 + 1"]).unwrap(),
        ], false).unwrap();
        let spec = UnboundedSequenceSpec::new(&g, 0, Schedule::Linear(factor), FillerPolicy::RandomBounded { max_len, seed }).unwrap();
        let word = spec.term_word(&g, k).unwrap();
        prop_assert_eq!(word.counts(g.len())[0] as u64, factor * k);

        // Evaluating the full word matches the incremental run.
        let x = [0.7];
        let budget = spec.term_word(&g, k + 1).unwrap().len() as u64;
        let run = run_spec(&g, &x, &spec, budget, 1e6).unwrap();
        prop_assert_eq!(run.terms.len() as u64, k + 1);
        let direct = apply_word(&g, &word, &PhasePoint::euclidean(x.to_vec()).unwrap()).unwrap();
        let incremental = &run.terms[(k - 1) as usize];
        prop_assert!(euclidean_distance(direct.as_euclidean().unwrap(), incremental) < 1e-12);
    }
}

#[test]
fn irrational_rotation_circle_is_minimal() {
    let g = GeneratorSet::new("golden", vec![rotation("rot", "2*pi/phi").unwrap()], true).unwrap();
    let net: Vec<Vec<f64>> = (0..1000)
        .map(|i| {
            let a = TAU * i as f64 / 1000.0;
            vec![a.cos(), a.sin()]
        })
        .collect();
    let m = FiniteCompact::new("circle", net).unwrap();
    let params = SemigroupParams {
        eps: 5e-3,
        ..Default::default()
    };
    let family = default_family(&g, 0, 0);
    assert_eq!(check_minimality(&g, &m, &family, &params).unwrap(), Minimality::Minimal);
}

#[test]
fn a_fixed_point_with_its_neighbour_is_not_minimal() {
    let g = GeneratorSet::new("halve", vec![MapExpr::parse("h", 1, &["x/2"]).unwrap()], true).unwrap();
    let params = SemigroupParams::default();
    let family = default_family(&g, 0, 0);
    let m = FiniteCompact::new("pair", vec![vec![0.0], vec![1.0]]).unwrap();
    assert_eq!(check_minimality(&g, &m, &family, &params).unwrap(), Minimality::NotInvariant);
    let m = FiniteCompact::new("origin", vec![vec![0.0]]).unwrap();
    assert_eq!(check_minimality(&g, &m, &family, &params).unwrap(), Minimality::Minimal);
}
