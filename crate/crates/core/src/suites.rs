//! Reference corpora and the property suites run over them. The CLI and the
//! acceptance tests share these, so a scenario run and a test run exercise
//! the same cases.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::escape_analysis::{
    check_conjugacy_transport, check_omega_escape_duality, CheckOutcome, ConjugacyParams, EscapeParams,
    EscapeStatus, OmegaParams,
};
use crate::expr::MapExpr;
use crate::flows::{shift_example_points_with_horizon, Conjugacy, Direction, FlowSystem};
use crate::hyperspace::{check_hyperspace_escape_equivalence, hausdorff_distance, EquivalenceParams, FiniteCompact, Truth};
use crate::phase_space::{BoundKind, CompactExhaustion, PhasePoint, SequenceRule};
use crate::semigroup::{
    check_omega_invariance, check_recurrence, check_semigroup_conjugacy, classify_escape_g, default_family,
    GeneratorSet, SemigroupParams,
};

/// Horizon of the symbolic points used in the corpora.
pub const SHIFT_HORIZON: u64 = 1 << 17;

/// Exhaustion used when none is given: balls of radius m for the plane and
/// the line, radius 5m in ℝ³, dyadic cylinders for the shift.
pub fn default_exhaustion(sys: &FlowSystem) -> Result<CompactExhaustion> {
    match sys {
        FlowSystem::Shift => CompactExhaustion::cylinders(BoundKind::Dyadic, 1, 8),
        FlowSystem::R3Saddle { .. } => CompactExhaustion::balls(vec![0.0; 3], 5.0, 8),
        _ => CompactExhaustion::balls(vec![0.0; sys.dim().unwrap_or(2)], 1.0, 10),
    }
}

/// Default run length: 50 time units for planar flows, 100 for ℝ³, 1024
/// shifts, 200 iterates for other maps.
pub fn default_escape(sys: &FlowSystem) -> EscapeParams {
    let t_max = match sys {
        FlowSystem::Shift => 1024.0,
        FlowSystem::R3Saddle { .. } => 100.0,
        FlowSystem::CustomMap { .. } => 200.0,
        _ => 50.0,
    };
    EscapeParams::with_t_max(t_max)
}

fn e(c: &[f64]) -> PhasePoint {
    PhasePoint::Euclidean(c.to_vec())
}

fn polar(r: f64, theta: f64) -> Vec<f64> {
    vec![r * theta.cos(), r * theta.sin()]
}

fn map(name: &str, dim: usize, comps: &[&str]) -> Result<MapExpr> {
    MapExpr::parse(name, dim, comps)
}

fn custom(comps: &[&str], inverse: &[&str]) -> Result<FlowSystem> {
    let dim = comps.len();
    FlowSystem::custom_map(map(&comps.join(","), dim, comps)?, Some(map(&inverse.join(","), dim, inverse)?))
}

#[derive(Debug, Clone)]
pub struct DualityCase {
    pub label: String,
    pub system: FlowSystem,
    pub point: PhasePoint,
}

/// System/point pairs covering all four worked examples plus a contraction.
pub fn duality_corpus() -> Result<Vec<DualityCase>> {
    let tr = FlowSystem::translation(vec![1.0, 0.0])?;
    let r3 = FlowSystem::r3saddle();
    let (x, y) = shift_example_points_with_horizon(SHIFT_HORIZON)?;
    let ones = PhasePoint::symbolic(SequenceRule::Constant(1), SHIFT_HORIZON)?;
    let halve = custom(&["x/2"], &["2*x"])?;
    let cases = vec![
        ("translation (0,1)", tr.clone(), e(&[0.0, 1.0])),
        ("translation (-3,2)", tr, e(&[-3.0, 2.0])),
        ("spiral r=2", FlowSystem::Spiral, e(&[2.0, 0.0])),
        ("spiral r=3", FlowSystem::Spiral, e(&polar(3.0, 1.0))),
        ("spiral r=0.5", FlowSystem::Spiral, e(&[0.5, 0.5])),
        ("spiral origin", FlowSystem::Spiral, e(&[0.0, 0.0])),
        ("spiral unit circle", FlowSystem::Spiral, e(&[1.0, 0.0])),
        ("r3 axis z=1", r3.clone(), e(&[0.0, 0.0, 1.0])),
        ("r3 (1,0,0)", r3.clone(), e(&[1.0, 0.0, 0.0])),
        ("r3 (0.5,0.5,0.5)", r3, e(&[0.5, 0.5, 0.5])),
        ("shift x", FlowSystem::Shift, x),
        ("shift y", FlowSystem::Shift, y),
        ("shift ones", FlowSystem::Shift, ones),
        ("halving x=1", halve, e(&[1.0])),
    ];
    Ok(cases
        .into_iter()
        .map(|(label, system, point)| DualityCase {
            label: label.into(),
            system,
            point,
        })
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct DualityRow {
    pub label: String,
    pub forward: EscapeStatus,
    pub backward: Option<EscapeStatus>,
    pub forward_clusters: usize,
    pub backward_clusters: Option<usize>,
    pub outcome: CheckOutcome,
}

pub fn run_duality_suite(cases: &[DualityCase]) -> Result<Vec<DualityRow>> {
    cases
        .iter()
        .map(|c| {
            let escape = default_escape(&c.system);
            let omega = OmegaParams {
                t_tail: escape.exit_fraction * escape.t_max,
                t_max: escape.t_max,
                ..Default::default()
            };
            let exh = default_exhaustion(&c.system)?;
            let r = check_omega_escape_duality(&c.system, &c.point, &exh, &escape, &omega)?;
            Ok(DualityRow {
                label: c.label.clone(),
                forward: r.forward.status,
                backward: r.backward.as_ref().map(|b| b.status),
                forward_clusters: r.forward.clusters,
                backward_clusters: r.backward.as_ref().map(|b| b.clusters),
                outcome: r.outcome,
            })
        })
        .collect()
}

/// How the members of a corpus set are expected to behave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SetKind {
    Escaping,
    Bounded,
    Mixed,
}

#[derive(Debug, Clone)]
pub struct HyperspaceCase {
    pub system: FlowSystem,
    pub set: FiniteCompact,
    pub direction: Direction,
    pub kind: SetKind,
}

/// Finite sets under the time-one maps of the example flows and a few
/// discrete maps, in both directions where meaningful.
pub fn hyperspace_corpus() -> Result<Vec<HyperspaceCase>> {
    use Direction::{Backward as B, Forward as F};
    use SetKind::{Bounded, Escaping, Mixed};
    let tr = FlowSystem::translation(vec![1.0, 0.0])?;
    let r3 = FlowSystem::r3saddle();
    let double = custom(&["2*x"], &["x/2"])?;
    let halve = custom(&["x/2"], &["2*x"])?;
    let step = custom(&["x+1"], &["x-1"])?;
    let saddle = custom(&["2*x", "y/2"], &["x/2", "2*y"])?;
    let s = FlowSystem::Spiral;
    let cases: Vec<(&str, FlowSystem, Vec<Vec<f64>>, Direction, SetKind)> = vec![
        ("spiral r=2,3", s.clone(), vec![polar(2.0, 0.0), polar(3.0, 1.0)], B, Escaping),
        ("spiral r=1.5", s.clone(), vec![polar(1.5, 2.0)], B, Escaping),
        ("spiral r=0.5", s.clone(), vec![polar(0.5, 0.0)], B, Bounded),
        ("spiral r=0.5,0.7", s.clone(), vec![polar(0.5, 0.0), polar(0.7, 0.0)], B, Bounded),
        ("spiral r=0.5,2", s.clone(), vec![polar(0.5, 0.0), polar(2.0, 0.0)], B, Mixed),
        ("spiral r=0.3,2.5,1.2", s.clone(), vec![polar(0.3, 1.0), polar(2.5, 2.0), polar(1.2, 3.0)], B, Mixed),
        ("spiral origin", s.clone(), vec![vec![0.0, 0.0]], B, Bounded),
        ("spiral fwd r=0.5", s.clone(), vec![polar(0.5, 0.0)], F, Bounded),
        ("spiral fwd r=2,3", s.clone(), vec![polar(2.0, 0.0), polar(3.0, 1.0)], F, Bounded),
        ("spiral fwd circle", s, vec![polar(1.0, 0.5)], F, Bounded),
        ("translation origin", tr.clone(), vec![vec![0.0, 0.0]], F, Escaping),
        ("translation triple", tr.clone(), vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![-5.0, 2.0]], F, Escaping),
        ("translation back", tr, vec![vec![2.0, 2.0], vec![-1.0, 0.5]], B, Escaping),
        ("double {1}", double.clone(), vec![vec![1.0]], F, Escaping),
        ("double {1,-2}", double.clone(), vec![vec![1.0], vec![-2.0]], F, Escaping),
        ("double {0,1}", double, vec![vec![0.0], vec![1.0]], F, Mixed),
        ("halve {1,5}", halve, vec![vec![1.0], vec![5.0]], F, Bounded),
        ("step {0,-3}", step, vec![vec![0.0], vec![-3.0]], F, Escaping),
        ("saddle map {(0,1)}", saddle.clone(), vec![vec![0.0, 1.0]], F, Bounded),
        ("saddle map {(1,1)}", saddle.clone(), vec![vec![1.0, 1.0]], F, Escaping),
        ("saddle map mixed", saddle, vec![vec![1.0, 0.0], vec![0.0, 1.0]], F, Mixed),
        ("r3 axis", r3.clone(), vec![vec![0.0, 0.0, 1.0]], F, Escaping),
        ("r3 circle", r3.clone(), vec![vec![1.0, 0.0, 0.0]], F, Bounded),
        ("r3 mixed", r3, vec![vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]], F, Mixed),
    ];
    cases
        .into_iter()
        .map(|(label, system, pts, direction, kind)| {
            Ok(HyperspaceCase {
                set: FiniteCompact::new(label, pts)?,
                system,
                direction,
                kind,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct HyperspaceRow {
    pub label: String,
    pub direction: Direction,
    pub kind: SetKind,
    pub p1: Truth,
    pub p3: Truth,
    pub p4: Truth,
    pub containment_escape: Truth,
    pub outcome: CheckOutcome,
}

pub fn run_hyperspace_suite(cases: &[HyperspaceCase]) -> Result<Vec<HyperspaceRow>> {
    cases
        .iter()
        .map(|c| {
            let params = EquivalenceParams {
                escape: default_escape(&c.system),
                ..EquivalenceParams::new(default_exhaustion(&c.system)?, c.direction)
            };
            let r = check_hyperspace_escape_equivalence(&c.system, &c.set, &params)?;
            Ok(HyperspaceRow {
                label: r.label,
                direction: c.direction,
                kind: c.kind,
                p1: r.p1,
                p3: r.p3,
                p4: r.p4,
                containment_escape: r.containment_escape,
                outcome: r.outcome,
            })
        })
        .collect()
}

/// Rotation of the plane by `angle` given as an expression.
pub fn rotation(name: &str, angle: &str) -> Result<MapExpr> {
    let c = format!("x*cos({angle}) - y*sin({angle})");
    let s = format!("x*sin({angle}) + y*cos({angle})");
    MapExpr::parse(name, 2, &[&c, &s])
}

#[derive(Debug, Clone)]
pub struct SemigroupCase {
    pub generators: GeneratorSet,
    pub points: Vec<PhasePoint>,
}

fn line_set(name: &str, exprs: &[&str], abelian: bool) -> Result<GeneratorSet> {
    let maps = exprs
        .iter()
        .enumerate()
        .map(|(i, e)| map(&format!("g{}", i + 1), 1, &[e]))
        .collect::<Result<Vec<_>>>()?;
    GeneratorSet::new(name, maps, abelian)
}

pub fn semigroup_corpus() -> Result<Vec<SemigroupCase>> {
    let golden = GeneratorSet::new("<golden rotation>", vec![rotation("rot", "2*pi/phi")?], true)?;
    let pair = GeneratorSet::new(
        "<golden rotation, sqrt2 rotation>",
        vec![rotation("rot1", "2*pi/phi")?, rotation("rot2", "2*pi*sqrt(2)")?],
        true,
    )?;
    let mk = |g: GeneratorSet, pts: &[&[f64]]| SemigroupCase {
        generators: g,
        points: pts.iter().map(|p| e(p)).collect(),
    };
    Ok(vec![
        mk(line_set("<x/2>", &["x/2"], true)?, &[&[1.0], &[0.0]]),
        mk(line_set("<x/2, x/3>", &["x/2", "x/3"], true)?, &[&[1.0]]),
        mk(line_set("<x+1>", &["x+1"], true)?, &[&[0.0]]),
        mk(line_set("<x+1, x+2>", &["x+1", "x+2"], true)?, &[&[0.0]]),
        mk(line_set("<2x, x+1>", &["2*x", "x+1"], false)?, &[&[1.0]]),
        mk(golden, &[&[1.0, 0.0], &[0.6, 0.8]]),
        mk(pair, &[&[1.0, 0.0]]),
    ])
}

#[derive(Debug, Clone, Serialize)]
pub struct SemigroupRow {
    pub semigroup: String,
    pub point: Vec<f64>,
    pub omega_clusters: usize,
    pub omega_invariance: CheckOutcome,
    pub recurrent: bool,
    pub recurrence_invariance: CheckOutcome,
    pub escape: EscapeStatus,
    pub escape_invariance: CheckOutcome,
}

/// ω-invariance, abelian Rec-invariance and Esc-invariance on every case.
pub fn run_semigroup_suite(cases: &[SemigroupCase], params: &SemigroupParams, seed: u64) -> Result<Vec<SemigroupRow>> {
    let mut rows = Vec::new();
    for c in cases {
        let g = &c.generators;
        let family = default_family(g, 8, seed);
        let exh = CompactExhaustion::balls(vec![0.0; g.dim()], 1.0, 10)?;
        for x in &c.points {
            let inv = check_omega_invariance(g, x, &family, params)?;
            let rec = check_recurrence(g, x, &family, params)?;
            let esc = classify_escape_g(g, x, &exh, &family, params)?;
            rows.push(SemigroupRow {
                semigroup: g.name().to_string(),
                point: x.as_euclidean()?.to_vec(),
                omega_clusters: inv.clusters,
                omega_invariance: inv.outcome,
                recurrent: rec.recurrent,
                recurrence_invariance: if g.is_abelian() { rec.outcome } else { CheckOutcome::Skip },
                escape: esc.status,
                escape_invariance: esc.invariance,
            });
        }
    }
    Ok(rows)
}

impl SemigroupRow {
    pub fn outcome(&self) -> CheckOutcome {
        CheckOutcome::combine([self.omega_invariance, self.recurrence_invariance, self.escape_invariance])
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConjugacyRow {
    pub label: String,
    pub samples: usize,
    pub outcome: CheckOutcome,
}

/// Flow conjugacies with ω transport, the two semigroup conjugations, and
/// the identity self-test on every corpus system and semigroup.
pub fn run_conjugacy_suite(params: &SemigroupParams, seed: u64) -> Result<Vec<ConjugacyRow>> {
    let mut rows = Vec::new();
    let omega = OmegaParams {
        t_tail: 25.0,
        t_max: 50.0,
        eps: 0.05,
        ..Default::default()
    };

    // x ↦ x³ carries the unit translation to the flow x' = 3·cbrt(x)².
    let line = FlowSystem::translation(vec![1.0])?;
    let cube_flow = FlowSystem::custom_ode(map("cube-flow", 1, &["3*cbrt(x)^2"])?, Default::default())?;
    let cube = Conjugacy::new(map("cube", 1, &["x^3"])?, map("cbrt", 1, &["cbrt(x)"])?)?;
    let mut cp = ConjugacyParams::new(CompactExhaustion::balls(vec![0.0], 1.0, 10)?, EscapeParams::default());
    cp.omega = Some(omega.clone());
    cp.residual_times = vec![0.25, 1.0];
    let samples = [e(&[1.25]), e(&[2.0]), e(&[3.0])];
    let r = check_conjugacy_transport(&line, &cube_flow, &cube, &samples, &cp)?;
    rows.push(ConjugacyRow {
        label: "translation ~ cube flow via x^3".into(),
        samples: samples.len(),
        outcome: r.outcome,
    });

    // Rotations commute with the spiral.
    let turn = Conjugacy::new(rotation("turn", "1")?, rotation("unturn", "-1")?)?;
    let mut cp = ConjugacyParams::new(default_exhaustion(&FlowSystem::Spiral)?, EscapeParams::default());
    cp.omega = Some(omega.clone());
    let samples = [e(&[2.0, 0.0]), e(&[0.5, 0.0]), e(&polar(1.0, 2.0))];
    let r = check_conjugacy_transport(&FlowSystem::Spiral, &FlowSystem::Spiral, &turn, &samples, &cp)?;
    rows.push(ConjugacyRow {
        label: "spiral ~ spiral via rotation".into(),
        samples: samples.len(),
        outcome: r.outcome,
    });

    for case in duality_corpus()? {
        let exh = default_exhaustion(&case.system)?;
        let mut cp = ConjugacyParams::new(exh, default_escape(&case.system));
        cp.residual_times = vec![1.0];
        let r = check_conjugacy_transport(&case.system, &case.system, &Conjugacy::Identity, std::slice::from_ref(&case.point), &cp)?;
        rows.push(ConjugacyRow {
            label: format!("identity on {}", case.label),
            samples: 1,
            outcome: r.outcome,
        });
    }

    let exh = CompactExhaustion::balls(vec![0.0], 1.0, 10)?;
    let doubling = line_set("<2x>", &["2*x"], false)?;
    let shifted = line_set("<2y-1>", &["2*x-1"], false)?;
    let plus_one = Conjugacy::new(map("rho", 1, &["x+1"])?, map("rho_inv", 1, &["x-1"])?)?;
    let family = default_family(&doubling, 8, seed);
    let samples = [e(&[0.0]), e(&[0.5]), e(&[-1.0])];
    let r = check_semigroup_conjugacy(&doubling, &shifted, &plus_one, &samples, &exh, &family, params)?;
    rows.push(ConjugacyRow {
        label: "<2x> ~ <2y-1> via x+1".into(),
        samples: samples.len(),
        outcome: r.outcome,
    });

    let halving = line_set("<x/2>", &["x/2"], false)?;
    let moved = line_set("<cube-halve>", &["pow(cbrt(x)/2, 3)"], false)?;
    let family = default_family(&halving, 8, seed);
    let samples = [e(&[1.0]), e(&[-2.0])];
    let r = check_semigroup_conjugacy(&halving, &moved, &cube, &samples, &exh, &family, params)?;
    rows.push(ConjugacyRow {
        label: "<x/2> ~ <cube-halve> via x^3".into(),
        samples: samples.len(),
        outcome: r.outcome,
    });

    for case in semigroup_corpus()? {
        let g = &case.generators;
        let exh = CompactExhaustion::balls(vec![0.0; g.dim()], 1.0, 10)?;
        let family = default_family(g, 8, seed);
        let r = check_semigroup_conjugacy(g, g, &Conjugacy::Identity, &case.points, &exh, &family, params)?;
        rows.push(ConjugacyRow {
            label: format!("identity on {}", g.name()),
            samples: case.points.len(),
            outcome: r.outcome,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct HausdorffSummary {
    pub pairs: usize,
    pub identity_failures: usize,
    pub symmetry_failures: usize,
    pub triangle_failures: usize,
}

impl HausdorffSummary {
    pub fn outcome(&self) -> CheckOutcome {
        if self.identity_failures + self.symmetry_failures + self.triangle_failures == 0 {
            CheckOutcome::Pass
        } else {
            CheckOutcome::Fail
        }
    }
}

fn random_set(rng: &mut ChaCha8Rng, dim: usize) -> Result<FiniteCompact> {
    let n = rng.gen_range(1..=8);
    let pts = (0..n)
        .map(|_| (0..dim).map(|_| rng.gen_range(-10.0..=10.0)).collect())
        .collect();
    FiniteCompact::new("random", pts)
}

/// Metric axioms of the Hausdorff distance on random planar sets of size
/// ≤ 8. The triangle inequality gets one ulp-scale allowance per term.
pub fn run_hausdorff_suite(pairs: usize, seed: u64) -> Result<HausdorffSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = HausdorffSummary {
        pairs,
        identity_failures: 0,
        symmetry_failures: 0,
        triangle_failures: 0,
    };
    for _ in 0..pairs {
        let a = random_set(&mut rng, 2)?;
        let b = random_set(&mut rng, 2)?;
        let c = random_set(&mut rng, 2)?;
        let ab = hausdorff_distance(&a, &b);
        if hausdorff_distance(&a, &a) != 0.0 || (ab == 0.0) != (a.points().iter().all(|p| b.points().contains(p)) && b.points().iter().all(|p| a.points().contains(p))) {
            s.identity_failures += 1;
        }
        if ab != hausdorff_distance(&b, &a) {
            s.symmetry_failures += 1;
        }
        let via = hausdorff_distance(&a, &c) + hausdorff_distance(&c, &b);
        if ab > via * (1.0 + 4.0 * f64::EPSILON) {
            s.triangle_failures += 1;
        }
    }
    Ok(s)
}

/// Sample points for the spiral escape check: radii 0.03·k, k = 1..100,
/// at spread-out angles; none lies on the unit circle.
pub fn spiral_samples() -> Vec<PhasePoint> {
    (1..=100)
        .map(|k| {
            let r = 0.03 * k as f64;
            e(&polar(r, 2.0 * PI * ((k as f64) * 0.618_033_988_75).fract()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpora_meet_minimum_sizes() {
        assert!(duality_corpus().unwrap().len() >= 12);
        let hs = hyperspace_corpus().unwrap();
        assert!(hs.len() >= 20);
        for kind in [SetKind::Escaping, SetKind::Bounded, SetKind::Mixed] {
            assert!(hs.iter().any(|c| c.kind == kind));
        }
    }

    #[test]
    fn spiral_samples_avoid_the_circle() {
        for p in spiral_samples() {
            let x = p.as_euclidean().unwrap();
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            assert!(r > 0.0 && r <= 3.0 + 1e-12 && (r - 1.0).abs() > 1e-3);
        }
    }

    #[test]
    fn hausdorff_axioms_small_run() {
        let s = run_hausdorff_suite(100, 3).unwrap();
        assert_eq!(s.outcome(), CheckOutcome::Pass, "{s:?}");
    }
}
