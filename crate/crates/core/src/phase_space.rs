//! Phase-space points, metrics, compact regions and compact exhaustions.
//!
//! Two phase spaces are supported: ℝⁿ with the Euclidean norm, and the
//! sequence space ℕ^ℕ with the product topology. Points of ℕ^ℕ are stored as
//! rules (index → value) evaluated lazily up to a finite horizon.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{Expr, MapExpr};

/// Default number of materializable indices of a symbolic point.
pub const DEFAULT_HORIZON: u64 = 1 << 20;

/// Indices past this one contribute less than the smallest positive `f64`
/// to the product metric and are skipped.
pub const METRIC_INDEX_LIMIT: u64 = 1100;

/// A rule i ↦ s_i ≥ 1 for i ≥ 1.
#[derive(Debug, Clone, PartialEq)]
pub enum SequenceRule {
    /// 2^j at index 2^j (j ≥ 1), 1 elsewhere: (1,2,1,4,1,1,1,8,…).
    PowerSpikes,
    /// Counts down from 2^(j+1) − 2^j to 1 between consecutive powers of two,
    /// with 2^j at index 2^j: (1,2,1,4,3,2,1,8,7,…).
    DyadicCountdown,
    Constant(u64),
    /// s_i = i.
    Identity,
    /// s_i = values[(i − 1) mod len].
    Periodic(Vec<u64>),
    /// Expression in the variable `i`, rounded to the nearest integer.
    Formula { source: String, expr: Expr },
}

impl SequenceRule {
    pub fn formula(source: &str) -> Result<Self> {
        Ok(SequenceRule::Formula {
            source: source.to_string(),
            expr: Expr::parse(source, &["i"])?,
        })
    }

    fn check_structure(&self) -> Result<()> {
        match self {
            SequenceRule::Constant(0) => Err(Error::RuleValue {
                index: 1,
                reason: "constant rule must be at least 1".into(),
            }),
            SequenceRule::Periodic(v) if v.is_empty() => Err(Error::RuleValue {
                index: 1,
                reason: "periodic rule needs at least one value".into(),
            }),
            SequenceRule::Periodic(v) => match v.iter().position(|&x| x == 0) {
                Some(p) => Err(Error::RuleValue {
                    index: p as u64 + 1,
                    reason: "values must be at least 1".into(),
                }),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }

    fn try_at(&self, i: u64) -> Result<u64> {
        let SequenceRule::Formula { expr, .. } = self else {
            return Ok(self.at(i));
        };
        let v = expr.eval(&[i as f64]);
        let r = v.round();
        if !v.is_finite() || (v - r).abs() > 1e-9 || r < 1.0 || r > u64::MAX as f64 {
            return Err(Error::RuleValue {
                index: i,
                reason: format!("value {v} is not a positive integer"),
            });
        }
        Ok(r as u64)
    }

    /// Value at index `i ≥ 1`. Formula rules must have been validated on the
    /// index range in use (done by [`SymbolicPoint::new`]).
    pub fn at(&self, i: u64) -> u64 {
        match self {
            SequenceRule::PowerSpikes => {
                if i >= 2 && i.is_power_of_two() {
                    i
                } else {
                    1
                }
            }
            SequenceRule::DyadicCountdown => {
                let top = 1u64 << (64 - i.leading_zeros());
                top - i
            }
            SequenceRule::Constant(c) => *c,
            SequenceRule::Identity => i,
            SequenceRule::Periodic(v) => v[((i - 1) % v.len() as u64) as usize],
            SequenceRule::Formula { expr, .. } => expr.eval(&[i as f64]).round() as u64,
        }
    }

    pub fn name(&self) -> String {
        match self {
            SequenceRule::PowerSpikes => "power_spikes".into(),
            SequenceRule::DyadicCountdown => "dyadic_countdown".into(),
            SequenceRule::Constant(c) => format!("constant({c})"),
            SequenceRule::Identity => "identity".into(),
            SequenceRule::Periodic(v) => format!(
                "periodic({})",
                v.iter().map(u64::to_string).collect::<Vec<_>>().join(" ")
            ),
            SequenceRule::Formula { source, .. } => format!("formula({source})"),
        }
    }
}

/// A point of ℕ^ℕ: `rule` read from index `offset + 1` onward, materializable
/// on indices `1..=horizon`.
#[derive(Debug, Clone)]
pub struct SymbolicPoint {
    rule: Arc<SequenceRule>,
    offset: u64,
    horizon: u64,
}

impl SymbolicPoint {
    pub fn new(rule: SequenceRule, horizon: u64) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidPoint("symbolic horizon must be positive".into()));
        }
        rule.check_structure()?;
        if matches!(rule, SequenceRule::Formula { .. }) {
            for i in 1..=horizon {
                rule.try_at(i)?;
            }
        }
        Ok(SymbolicPoint {
            rule: Arc::new(rule),
            offset: 0,
            horizon,
        })
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    pub fn rule(&self) -> &SequenceRule {
        &self.rule
    }

    /// Coordinate `i` (1-based). Panics outside `1..=horizon`.
    pub fn value(&self, i: u64) -> u64 {
        assert!(
            i >= 1 && i <= self.horizon,
            "index {i} outside 1..={}",
            self.horizon
        );
        self.rule.at(i + self.offset)
    }

    /// The left shift applied `n` times.
    pub fn shifted(&self, n: u64) -> Result<Self> {
        if n >= self.horizon {
            return Err(Error::HorizonExhausted {
                needed: n,
                available: self.horizon,
            });
        }
        Ok(SymbolicPoint {
            rule: Arc::clone(&self.rule),
            offset: self.offset + n,
            horizon: self.horizon - n,
        })
    }

    /// Length of the common prefix with `other`, capped at `cap` and at the
    /// shorter horizon.
    pub fn agreement_length(&self, other: &SymbolicPoint, cap: u64) -> u64 {
        let limit = cap.min(self.horizon).min(other.horizon);
        (1..=limit)
            .find(|&i| self.value(i) != other.value(i))
            .map_or(limit, |i| i - 1)
    }

    pub fn label(&self) -> String {
        if self.offset == 0 {
            format!("{}[H={}]", self.rule.name(), self.horizon)
        } else {
            format!("{}>>{}[H={}]", self.rule.name(), self.offset, self.horizon)
        }
    }
}

#[derive(Debug, Clone)]
pub enum PhasePoint {
    Euclidean(Vec<f64>),
    Symbolic(SymbolicPoint),
}

impl PhasePoint {
    pub fn euclidean(coords: impl Into<Vec<f64>>) -> Result<Self> {
        let coords = coords.into();
        if coords.is_empty() {
            return Err(Error::InvalidPoint("euclidean point needs a coordinate".into()));
        }
        if let Some(c) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidPoint(format!("non-finite coordinate {c}")));
        }
        Ok(PhasePoint::Euclidean(coords))
    }

    pub fn symbolic(rule: SequenceRule, horizon: u64) -> Result<Self> {
        SymbolicPoint::new(rule, horizon).map(PhasePoint::Symbolic)
    }

    pub fn as_euclidean(&self) -> Result<&[f64]> {
        match self {
            PhasePoint::Euclidean(c) => Ok(c),
            PhasePoint::Symbolic(_) => Err(Error::VariantMismatch(
                "expected a euclidean point, got a symbolic one".into(),
            )),
        }
    }

    pub fn as_symbolic(&self) -> Result<&SymbolicPoint> {
        match self {
            PhasePoint::Symbolic(s) => Ok(s),
            PhasePoint::Euclidean(_) => Err(Error::VariantMismatch(
                "expected a symbolic point, got a euclidean one".into(),
            )),
        }
    }

    pub fn metric(&self) -> Metric {
        match self {
            PhasePoint::Euclidean(_) => Metric::Euclidean,
            PhasePoint::Symbolic(_) => Metric::SymbolicProduct,
        }
    }

    /// Distance under the metric natural to this point's variant.
    pub fn distance(&self, other: &PhasePoint) -> Result<f64> {
        distance(self.metric(), self, other)
    }

    pub fn label(&self) -> String {
        match self {
            PhasePoint::Euclidean(c) => format!(
                "({})",
                c.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
            ),
            PhasePoint::Symbolic(s) => s.label(),
        }
    }
}

impl fmt::Display for PhasePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Euclidean,
    /// d(s,t) = Σ 2^{-i} min(1, |s_i − t_i|) over the common horizon.
    SymbolicProduct,
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn distance(metric: Metric, a: &PhasePoint, b: &PhasePoint) -> Result<f64> {
    match (metric, a, b) {
        (Metric::Euclidean, PhasePoint::Euclidean(x), PhasePoint::Euclidean(y)) => {
            if x.len() != y.len() {
                return Err(Error::VariantMismatch(format!(
                    "dimension {} vs {}",
                    x.len(),
                    y.len()
                )));
            }
            Ok(euclidean_distance(x, y))
        }
        (Metric::SymbolicProduct, PhasePoint::Symbolic(s), PhasePoint::Symbolic(t)) => {
            Ok(symbolic_distance(s, t))
        }
        _ => Err(Error::VariantMismatch(format!(
            "{metric:?} metric cannot compare {} and {}",
            a.label(),
            b.label()
        ))),
    }
}

fn symbolic_distance(s: &SymbolicPoint, t: &SymbolicPoint) -> f64 {
    let limit = s.horizon.min(t.horizon).min(METRIC_INDEX_LIMIT);
    // Each differing index contributes exactly 2^{-i}; summing smallest first.
    let differing: Vec<u64> = (1..=limit).filter(|&i| s.value(i) != t.value(i)).collect();
    differing
        .iter()
        .rev()
        .map(|&i| 2f64.powi(-(i as i32)))
        .sum()
}

/// Pointwise bound shape for cylinders: `scale · base(i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    /// base(i) = 1
    Constant,
    /// base(i) = 2^⌈log2(i+1)⌉
    Dyadic,
    /// base(i) = i
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundRule {
    pub kind: BoundKind,
    pub scale: u64,
}

impl BoundRule {
    pub fn at(&self, i: u64) -> u64 {
        let base = match self.kind {
            BoundKind::Constant => 1,
            BoundKind::Dyadic => (i + 1).next_power_of_two(),
            BoundKind::Linear => i,
        };
        self.scale.saturating_mul(base)
    }
}

/// A compact subset with a decidable membership test.
#[derive(Debug, Clone)]
pub enum CompactRegion {
    Ball { center: Vec<f64>, radius: f64 },
    Box { bounds: Vec<(f64, f64)> },
    /// {s ∈ ℕ^ℕ : s_i ≤ b(i) for all i ≤ horizon}.
    Cylinder { bound: BoundRule },
    /// Points within `tolerance` of a listed point.
    Finite {
        points: Vec<PhasePoint>,
        tolerance: f64,
    },
    /// h(base), tested through h⁻¹: p ∈ h(base) iff h⁻¹(p) ∈ base.
    Image {
        base: Box<CompactRegion>,
        inverse: Arc<MapExpr>,
    },
}

impl CompactRegion {
    pub fn ball(center: impl Into<Vec<f64>>, radius: f64) -> Result<Self> {
        let center = center.into();
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidRegion(format!("ball radius {radius} must be positive")));
        }
        if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidRegion("ball center must be finite".into()));
        }
        Ok(CompactRegion::Ball { center, radius })
    }

    pub fn boxed(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidRegion("box needs at least one axis".into()));
        }
        for &(lo, hi) in &bounds {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidRegion(format!("empty box interval [{lo}, {hi}]")));
            }
        }
        Ok(CompactRegion::Box { bounds })
    }

    pub fn cylinder(bound: BoundRule) -> Result<Self> {
        if bound.scale == 0 {
            return Err(Error::InvalidRegion("cylinder bound must be at least 1".into()));
        }
        Ok(CompactRegion::Cylinder { bound })
    }

    pub fn finite(points: Vec<PhasePoint>, tolerance: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidRegion("finite region needs a point".into()));
        }
        if !(tolerance >= 0.0 && tolerance.is_finite()) {
            return Err(Error::InvalidRegion(format!("tolerance {tolerance} must be >= 0")));
        }
        Ok(CompactRegion::Finite { points, tolerance })
    }

    pub fn image(base: CompactRegion, inverse: Arc<MapExpr>) -> Self {
        CompactRegion::Image {
            base: Box::new(base),
            inverse,
        }
    }

    pub fn contains(&self, p: &PhasePoint) -> Result<bool> {
        match self {
            CompactRegion::Ball { center, radius } => {
                let x = euclidean_of(p, center.len())?;
                Ok(euclidean_distance(x, center) <= *radius)
            }
            CompactRegion::Box { bounds } => {
                let x = euclidean_of(p, bounds.len())?;
                Ok(x.iter().zip(bounds).all(|(v, (lo, hi))| lo <= v && v <= hi))
            }
            CompactRegion::Cylinder { bound } => {
                let s = p.as_symbolic()?;
                Ok((1..=s.horizon()).all(|i| s.value(i) <= bound.at(i)))
            }
            CompactRegion::Finite { points, tolerance } => {
                for q in points {
                    if q.distance(p)? <= *tolerance {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            CompactRegion::Image { base, inverse } => {
                let x = euclidean_of(p, inverse.dim())?;
                let pre = PhasePoint::Euclidean(inverse.apply(x)?);
                base.contains(&pre)
            }
        }
    }
}

fn euclidean_of(p: &PhasePoint, dim: usize) -> Result<&[f64]> {
    let x = p.as_euclidean()?;
    if x.len() != dim {
        return Err(Error::VariantMismatch(format!(
            "region has dimension {dim}, point has {}",
            x.len()
        )));
    }
    Ok(x)
}

pub fn contains(region: &CompactRegion, p: &PhasePoint) -> Result<bool> {
    region.contains(p)
}

/// How the levels K_1 ⊆ K_2 ⊆ … of an exhaustion grow.
#[derive(Debug, Clone)]
pub enum Growth {
    /// K_m = closed ball of radius m·step.
    Balls { center: Vec<f64>, step: f64 },
    /// K_m = cube of half-width m·step.
    Cubes { center: Vec<f64>, step: f64 },
    /// K_m = cylinder with bound m·scale·base(i).
    Cylinders { kind: BoundKind, scale: u64 },
    /// K_m = h(base K_m).
    Image {
        base: Box<Growth>,
        inverse: Arc<MapExpr>,
    },
}

/// Finite nested family of compact regions standing in for "every compact set".
#[derive(Debug, Clone)]
pub struct CompactExhaustion {
    growth: Growth,
    max_level: usize,
}

impl CompactExhaustion {
    pub fn new(growth: Growth, max_level: usize) -> Result<Self> {
        if max_level == 0 {
            return Err(Error::param("max_level", "must be at least 1"));
        }
        check_growth(&growth)?;
        Ok(CompactExhaustion { growth, max_level })
    }

    pub fn balls(center: impl Into<Vec<f64>>, step: f64, max_level: usize) -> Result<Self> {
        Self::new(
            Growth::Balls {
                center: center.into(),
                step,
            },
            max_level,
        )
    }

    pub fn cylinders(kind: BoundKind, scale: u64, max_level: usize) -> Result<Self> {
        Self::new(Growth::Cylinders { kind, scale }, max_level)
    }

    /// The exhaustion h(K_1) ⊆ h(K_2) ⊆ … given h⁻¹.
    pub fn image(&self, inverse: Arc<MapExpr>) -> Self {
        CompactExhaustion {
            growth: Growth::Image {
                base: Box::new(self.growth.clone()),
                inverse,
            },
            max_level: self.max_level,
        }
    }

    pub fn growth(&self) -> &Growth {
        &self.growth
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    /// Level `m` in `1..=max_level`.
    pub fn level(&self, m: usize) -> CompactRegion {
        assert!(m >= 1 && m <= self.max_level, "level {m} out of range");
        level_of(&self.growth, m)
    }

    pub fn levels(&self) -> Vec<CompactRegion> {
        (1..=self.max_level).map(|m| self.level(m)).collect()
    }

    /// Smallest level containing `p`, assuming nesting.
    pub fn first_containing(&self, levels: &[CompactRegion], p: &PhasePoint) -> Result<Option<usize>> {
        for (i, k) in levels.iter().enumerate() {
            if k.contains(p)? {
                return Ok(Some(i + 1));
            }
        }
        Ok(None)
    }

    /// Sampled check of K_m ⊆ K_{m+1}: returns the first (level, sample index)
    /// where a sample in K_m is missing from K_{m+1}.
    pub fn nesting_violation(&self, samples: &[PhasePoint]) -> Result<Option<(usize, usize)>> {
        let levels = self.levels();
        for (m, pair) in levels.windows(2).enumerate() {
            for (j, p) in samples.iter().enumerate() {
                if pair[0].contains(p)? && !pair[1].contains(p)? {
                    return Ok(Some((m + 1, j)));
                }
            }
        }
        Ok(None)
    }

    pub fn describe(&self) -> String {
        format!("{} x{}", describe_growth(&self.growth), self.max_level)
    }
}

fn check_growth(g: &Growth) -> Result<()> {
    match g {
        Growth::Balls { center, step } | Growth::Cubes { center, step } => {
            if !(*step > 0.0 && step.is_finite()) {
                return Err(Error::InvalidRegion(format!("exhaustion step {step} must be positive")));
            }
            if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidRegion("exhaustion center must be finite".into()));
            }
            Ok(())
        }
        Growth::Cylinders { scale, .. } => {
            if *scale == 0 {
                return Err(Error::InvalidRegion("cylinder scale must be at least 1".into()));
            }
            Ok(())
        }
        Growth::Image { base, .. } => check_growth(base),
    }
}

fn level_of(g: &Growth, m: usize) -> CompactRegion {
    let mf = m as f64;
    match g {
        Growth::Balls { center, step } => CompactRegion::Ball {
            center: center.clone(),
            radius: mf * step,
        },
        Growth::Cubes { center, step } => CompactRegion::Box {
            bounds: center.iter().map(|c| (c - mf * step, c + mf * step)).collect(),
        },
        Growth::Cylinders { kind, scale } => CompactRegion::Cylinder {
            bound: BoundRule {
                kind: *kind,
                scale: scale.saturating_mul(m as u64),
            },
        },
        Growth::Image { base, inverse } => CompactRegion::image(level_of(base, m), Arc::clone(inverse)),
    }
}

fn describe_growth(g: &Growth) -> String {
    match g {
        Growth::Balls { center, step } => format!("balls(center={center:?}, step={step})"),
        Growth::Cubes { center, step } => format!("cubes(center={center:?}, step={step})"),
        Growth::Cylinders { kind, scale } => format!("cylinders({kind:?}, scale={scale})"),
        Growth::Image { base, inverse } => format!("image({}, inverse={inverse})", describe_growth(base)),
    }
}
