//! Induced dynamics on finite compact sets, the Hausdorff metric, the
//! limsup-based ω_K, and the equivalence of pointwise, ω_K and hyperspace
//! escape.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::escape_analysis::{classify_direction, CheckOutcome, EscapeParams, EscapeStatus};
use crate::flows::{Direction, FlowSystem, TimeKind, TimeValue};
use crate::limit_set::{cluster_tagged, LimitSetEstimate};
use crate::phase_space::{euclidean_distance, CompactExhaustion, CompactRegion, PhasePoint};

/// A nonempty finite subset of ℝ^d.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteCompact {
    points: Vec<Vec<f64>>,
    label: String,
}

impl FiniteCompact {
    /// Exact duplicates are dropped, keeping first occurrences in order.
    pub fn new(label: impl Into<String>, points: Vec<Vec<f64>>) -> Result<Self> {
        let Some(dim) = points.first().map(Vec::len) else {
            return Err(Error::InvalidPoint("a compact set needs at least one point".into()));
        };
        let mut kept: Vec<Vec<f64>> = Vec::with_capacity(points.len());
        for p in points {
            if p.len() != dim || dim == 0 {
                return Err(Error::InvalidPoint(format!("expected {dim} coordinates, got {}", p.len())));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidPoint(format!("non-finite coordinate in {p:?}")));
            }
            if !kept.contains(&p) {
                kept.push(p);
            }
        }
        Ok(FiniteCompact {
            points: kept,
            label: label.into(),
        })
    }

    pub fn from_phase_points(label: impl Into<String>, points: &[PhasePoint]) -> Result<Self> {
        let coords = points
            .iter()
            .map(|p| p.as_euclidean().map(<[f64]>::to_vec))
            .collect::<Result<Vec<_>>>()?;
        Self::new(label, coords)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn phase_points(&self) -> Vec<PhasePoint> {
        self.points.iter().map(|p| PhasePoint::Euclidean(p.clone())).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Display for FiniteCompact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{{", self.label)?;
        for (i, p) in self.points.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}", PhasePoint::Euclidean(p.clone()))?;
        }
        f.write_str("}")
    }
}

fn point_to_set(p: &[f64], set: &[Vec<f64>]) -> f64 {
    set.iter()
        .map(|q| euclidean_distance(p, q))
        .fold(f64::INFINITY, f64::min)
}

/// Hausdorff distance by brute force over all pairs.
pub fn hausdorff_distance(a: &FiniteCompact, b: &FiniteCompact) -> f64 {
    assert_eq!(a.dim(), b.dim(), "Hausdorff distance between different spaces");
    let ab = a.points.iter().map(|p| point_to_set(p, &b.points)).fold(0.0, f64::max);
    let ba = b.points.iter().map(|p| point_to_set(p, &a.points)).fold(0.0, f64::max);
    ab.max(ba)
}

/// Φ_K(A) = Φ(A) at time n, in input order.
pub fn induced_map(sys: &FlowSystem, a: &FiniteCompact, n: TimeValue) -> Result<FiniteCompact> {
    let mut out = Vec::with_capacity(a.len());
    let mut blowups = vec![None; a.len()];
    for (i, p) in a.points.iter().enumerate() {
        match sys.evaluate(&PhasePoint::Euclidean(p.clone()), n) {
            Ok(q) => out.push(q.as_euclidean()?.to_vec()),
            Err(Error::Diverged { blowup_time }) => blowups[i] = Some(blowup_time),
            Err(e) => return Err(e),
        }
    }
    if blowups.iter().any(Option::is_some) {
        return Err(Error::ImageDiverged { blowups });
    }
    FiniteCompact::new(a.label.clone(), out)
}

/// The images Φ^{±i}(A) for i = 0..=last under the time-one map. A member
/// that diverged is `None` from then on.
#[derive(Debug, Clone)]
pub struct SetSequenceWindow {
    pub direction: Direction,
    pub images: Vec<Vec<Option<Vec<f64>>>>,
}

impl SetSequenceWindow {
    pub fn compute(sys: &FlowSystem, a: &FiniteCompact, last: usize, direction: Direction) -> Result<Self> {
        let sign = direction.sign() as i64;
        let unit = |k: i64| match sys.time_kind() {
            TimeKind::Discrete => TimeValue::Discrete(k),
            TimeKind::Continuous => TimeValue::Continuous(k as f64),
        };
        let mut images = Vec::with_capacity(last + 1);
        let start: Vec<Option<Vec<f64>>> = a.points.iter().cloned().map(Some).collect();
        images.push(start.clone());
        let mut current = start;
        for i in 1..=last {
            let mut next = Vec::with_capacity(current.len());
            for (j, p) in current.iter().enumerate() {
                let image = match p {
                    None => None,
                    Some(p) => {
                        let (from, t) = if sys.has_closed_form() {
                            (&a.points[j], unit(sign * i as i64))
                        } else {
                            (p, unit(sign))
                        };
                        match sys.evaluate(&PhasePoint::Euclidean(from.clone()), t) {
                            Ok(q) => Some(q.as_euclidean()?.to_vec()),
                            Err(Error::Diverged { .. }) => None,
                            Err(e) => return Err(e),
                        }
                    }
                };
                next.push(image);
            }
            images.push(next.clone());
            current = next;
        }
        Ok(SetSequenceWindow { direction, images })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct OmegaKParams {
    /// Index window [start, end] of the tail.
    pub window: (usize, usize),
    pub eps: f64,
    /// Distinct indices an ε-ball must meet ("infinitely many" surrogate).
    pub min_visits: usize,
    pub direction: Direction,
    pub bound: Option<CompactRegion>,
}

impl Default for OmegaKParams {
    fn default() -> Self {
        OmegaKParams {
            window: (1000, 3000),
            eps: 0.05,
            min_visits: 10,
            direction: Direction::Forward,
            bound: None,
        }
    }
}

/// ω_K(A) (or α_K for the backward direction) as an ε-cluster estimate.
pub fn estimate_omega_k(sys: &FlowSystem, a: &FiniteCompact, params: &OmegaKParams) -> Result<LimitSetEstimate> {
    let window = SetSequenceWindow::compute(sys, a, params.window.1, params.direction)?;
    omega_k_from_window(&window, params)
}

fn omega_k_from_window(window: &SetSequenceWindow, params: &OmegaKParams) -> Result<LimitSetEstimate> {
    let (start, end) = params.window;
    if end < start + 1 {
        return Err(Error::param("window", "needs at least two indices"));
    }
    let mut kept = Vec::new();
    let mut discarded = 0;
    for (i, image) in window.images.iter().enumerate().take(end + 1).skip(start) {
        for p in image {
            let Some(p) = p else {
                discarded += 1;
                continue;
            };
            let p = PhasePoint::Euclidean(p.clone());
            match &params.bound {
                Some(b) if !b.contains(&p)? => discarded += 1,
                _ => kept.push((i as u64, p)),
            }
        }
    }
    let (clusters, unclustered) = cluster_tagged(&kept, params.eps, params.min_visits)?;
    Ok(LimitSetEstimate {
        clusters,
        radius: params.eps,
        window: (start as f64, end as f64),
        samples: kept.len() + discarded,
        discarded,
        unclustered,
        blowup_time: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Truth {
    True,
    False,
    Unknown,
}

impl fmt::Display for Truth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Truth::True => "true",
            Truth::False => "false",
            Truth::Unknown => "unknown",
        })
    }
}

#[derive(Debug, Clone)]
pub struct EquivalenceParams {
    pub exhaustion: CompactExhaustion,
    /// Pointwise verdicts.
    pub escape: EscapeParams,
    pub direction: Direction,
    /// Last image index examined by the ω_K and hyperspace-escape predicates.
    pub horizon: usize,
    pub eps: f64,
    pub min_visits: usize,
}

impl EquivalenceParams {
    pub fn new(exhaustion: CompactExhaustion, direction: Direction) -> Self {
        EquivalenceParams {
            exhaustion,
            escape: EscapeParams::default(),
            direction,
            horizon: 2000,
            eps: 0.05,
            min_visits: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub label: String,
    /// Every point escapes.
    pub p1: Truth,
    /// ω_K(A) is empty.
    pub p3: Truth,
    /// A escapes in K(X): images eventually miss each K_m entirely.
    pub p4: Truth,
    /// Images eventually fail to fit inside each K_m. Diagnostic only: a
    /// single escaping member already makes this true.
    pub containment_escape: Truth,
    /// Per level, the first index from which images miss K_m.
    pub exit_indices: Vec<Option<usize>>,
    pub clusters: usize,
    pub outcome: CheckOutcome,
}

/// Evaluates the three predicates and whether they agree. Any unknown
/// predicate makes the outcome a skip.
pub fn check_hyperspace_escape_equivalence(
    sys: &FlowSystem,
    a: &FiniteCompact,
    params: &EquivalenceParams,
) -> Result<EquivalenceReport> {
    params.escape.validate()?;
    if params.direction == Direction::Backward && !sys.is_invertible() {
        return Err(Error::NonInvertible);
    }
    let levels = params.exhaustion.levels();

    let mut p1 = Truth::True;
    for p in a.phase_points() {
        let v = classify_direction(sys, &p, &params.exhaustion, &levels, &params.escape, params.direction)?;
        match v.status {
            EscapeStatus::NonEscaping => {
                p1 = Truth::False;
                break;
            }
            EscapeStatus::Inconclusive => p1 = Truth::Unknown,
            EscapeStatus::Escaping => {}
        }
    }

    let n = params.horizon;
    let window = SetSequenceWindow::compute(sys, a, n, params.direction)?;
    let tail_start = (params.escape.exit_fraction * n as f64).floor() as usize;
    let top = levels.last().cloned();
    let estimate = omega_k_from_window(
        &window,
        &OmegaKParams {
            window: (tail_start, n),
            eps: params.eps,
            min_visits: params.min_visits,
            direction: params.direction,
            bound: top,
        },
    )?;
    let p3 = if !estimate.is_empty() {
        Truth::False
    } else if estimate.samples == estimate.discarded {
        Truth::True
    } else {
        Truth::Unknown
    };

    let meets = |image: &[Option<Vec<f64>>], k: &CompactRegion| -> Result<bool> {
        for p in image.iter().flatten() {
            if k.contains(&PhasePoint::Euclidean(p.clone()))? {
                return Ok(true);
            }
        }
        Ok(false)
    };
    let inside = |image: &[Option<Vec<f64>>], k: &CompactRegion| -> Result<bool> {
        for p in image {
            match p {
                Some(p) if k.contains(&PhasePoint::Euclidean(p.clone()))? => {}
                _ => return Ok(false),
            }
        }
        Ok(true)
    };
    let mut last_meet: Vec<Option<usize>> = vec![None; levels.len()];
    let mut last_inside: Vec<Option<usize>> = vec![None; levels.len()];
    for (i, image) in window.images.iter().enumerate() {
        for (m, k) in levels.iter().enumerate() {
            if meets(image, k)? {
                last_meet[m] = Some(i);
                if inside(image, k)? {
                    last_inside[m] = Some(i);
                }
            }
        }
    }
    let exit_cut = params.escape.exit_fraction * n as f64;
    let witness_cut = params.escape.witness_fraction * n as f64;
    let reach = ((levels.len() as f64 * params.escape.witness_level_fraction).ceil() as usize).max(1);
    let decide = |last: &[Option<usize>]| -> (Truth, Vec<Option<usize>>) {
        let exits: Vec<Option<usize>> = last
            .iter()
            .map(|l| match l {
                None => Some(0),
                Some(i) if (i + 1) as f64 <= exit_cut => Some(i + 1),
                Some(_) => None,
            })
            .collect();
        let truth = if exits.iter().all(Option::is_some) {
            Truth::True
        } else if last[..reach.min(last.len())]
            .iter()
            .any(|l| l.is_some_and(|i| i as f64 >= witness_cut))
        {
            Truth::False
        } else {
            Truth::Unknown
        };
        (truth, exits)
    };
    let (p4, exit_indices) = decide(&last_meet);
    let (containment_escape, _) = decide(&last_inside);

    let outcome = if [p1, p3, p4].contains(&Truth::Unknown) {
        CheckOutcome::Skip
    } else if p1 == p3 && p3 == p4 {
        CheckOutcome::Pass
    } else {
        CheckOutcome::Fail
    };
    Ok(EquivalenceReport {
        label: a.label().to_string(),
        p1,
        p3,
        p4,
        containment_escape,
        exit_indices,
        clusters: estimate.clusters.len(),
        outcome,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limit_set::LimitSetEstimate;
    use std::f64::consts::PI;

    fn set(points: &[&[f64]]) -> FiniteCompact {
        FiniteCompact::new("A", points.iter().map(|p| p.to_vec()).collect()).unwrap()
    }

    fn polar(r: f64, theta: f64) -> Vec<f64> {
        vec![r * theta.cos(), r * theta.sin()]
    }

    #[test]
    fn hausdorff_examples() {
        let a = set(&[&[0.0, 0.0]]);
        assert_eq!(hausdorff_distance(&a, &a), 0.0);
        assert_eq!(hausdorff_distance(&a, &set(&[&[3.0, 4.0]])), 5.0);
        assert_eq!(hausdorff_distance(&set(&[&[0.0], &[2.0]]), &set(&[&[1.0]])), 1.0);
        // asymmetric one-sided distances: {0} vs {0, 10}
        assert_eq!(hausdorff_distance(&set(&[&[0.0]]), &set(&[&[0.0], &[10.0]])), 10.0);
    }

    #[test]
    fn rejects_empty_and_ragged_sets() {
        assert!(FiniteCompact::new("A", vec![]).is_err());
        assert!(FiniteCompact::new("A", vec![vec![0.0], vec![0.0, 1.0]]).is_err());
        assert_eq!(FiniteCompact::new("A", vec![vec![1.0], vec![1.0]]).unwrap().len(), 1);
    }

    #[test]
    fn induced_map_examples() {
        let tr = FlowSystem::translation(vec![1.0, 0.0]).unwrap();
        let a = set(&[&[0.0, 0.0], &[1.0, 1.0]]);
        let image = induced_map(&tr, &a, TimeValue::Continuous(1.0)).unwrap();
        assert_eq!(image.points(), &[vec![1.0, 0.0], vec![2.0, 1.0]]);
        assert_eq!(induced_map(&tr, &a, TimeValue::Continuous(0.0)).unwrap(), a);

        let circle = set(&[&[1.0, 0.0]]);
        let q = induced_map(&FlowSystem::Spiral, &circle, TimeValue::Continuous(PI)).unwrap();
        let p = &q.points()[0];
        assert!((p[0] + 1.0).abs() < 1e-12 && p[1].abs() < 1e-12);

        let err = induced_map(&FlowSystem::Spiral, &set(&[&[0.5, 0.0], &[2.0, 0.0]]), TimeValue::Continuous(-1.0))
            .unwrap_err();
        match err {
            Error::ImageDiverged { blowups } => {
                assert!(blowups[0].is_none());
                assert!((blowups[1].unwrap() + 0.143841036225890).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    fn on_circle(est: &LimitSetEstimate) -> bool {
        est.clusters.iter().all(|c| {
            let x = c.center.as_euclidean().unwrap();
            ((x[0] * x[0] + x[1] * x[1]).sqrt() - 1.0).abs() < 1e-6
        })
    }

    #[test]
    fn omega_k_of_spiral_sets() {
        let params = OmegaKParams::default();
        let one = estimate_omega_k(&FlowSystem::Spiral, &set(&[&polar(0.5, 0.0)]), &params).unwrap();
        let two = estimate_omega_k(&FlowSystem::Spiral, &set(&[&polar(0.5, 0.0), &polar(0.7, 0.0)]), &params).unwrap();
        assert!(!one.is_empty() && on_circle(&one));
        assert!(!two.is_empty() && on_circle(&two));
        // both estimates cover the same circle at resolution ε
        for c in &one.clusters {
            assert!(two.nearest(&c.center).unwrap().unwrap() <= 2.0 * params.eps);
        }
        let tr = FlowSystem::translation(vec![1.0, 0.0]).unwrap();
        assert!(estimate_omega_k(&tr, &set(&[&[0.0, 0.0], &[5.0, 1.0]]), &params).unwrap().is_empty());
    }

    #[test]
    fn equivalence_examples() {
        let exh = CompactExhaustion::balls(vec![0.0, 0.0], 1.0, 10).unwrap();
        let back = EquivalenceParams::new(exh.clone(), Direction::Backward);
        let r = check_hyperspace_escape_equivalence(
            &FlowSystem::Spiral,
            &set(&[&polar(2.0, 0.0), &polar(3.0, 1.0)]),
            &back,
        )
        .unwrap();
        assert_eq!((r.p1, r.p3, r.p4), (Truth::True, Truth::True, Truth::True));

        let r = check_hyperspace_escape_equivalence(
            &FlowSystem::Spiral,
            &set(&[&polar(0.5, 0.0), &polar(2.0, 0.0)]),
            &back,
        )
        .unwrap();
        assert_eq!((r.p1, r.p3, r.p4), (Truth::False, Truth::False, Truth::False));
        // the literal containment reading calls the mixed set escaping
        assert_eq!(r.containment_escape, Truth::True);

        let tr = FlowSystem::translation(vec![1.0, 0.0]).unwrap();
        let fwd = EquivalenceParams {
            horizon: 60,
            ..EquivalenceParams::new(exh, Direction::Forward)
        };
        let r = check_hyperspace_escape_equivalence(&tr, &set(&[&[0.0, 3.0]]), &fwd).unwrap();
        assert_eq!(r.outcome, CheckOutcome::Pass);
        assert_eq!(r.p4, Truth::True);
    }
}
