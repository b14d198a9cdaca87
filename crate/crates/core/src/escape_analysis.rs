//! Escape classification against a compact exhaustion, limit-set estimation,
//! and the checks relating them.
//!
//! An orbit escapes when it eventually leaves every level K_m for good. On a
//! finite run this is decided per level from the last time the orbit was seen
//! inside: a level counts as exited when that time lies in the early part of
//! the run, and a late visit is a re-entry witness.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flows::{Conjugacy, Direction, FlowSystem, TimeKind, TimeValue};
use crate::limit_set::{cluster_tagged, LimitSetEstimate};
use crate::phase_space::{CompactExhaustion, CompactRegion, PhasePoint, SymbolicPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EscapeStatus {
    Escaping,
    NonEscaping,
    Inconclusive,
}

impl fmt::Display for EscapeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EscapeStatus::Escaping => "escaping",
            EscapeStatus::NonEscaping => "non-escaping",
            EscapeStatus::Inconclusive => "inconclusive",
        })
    }
}

/// Result of a property check. `Skip` means the inputs fell outside what the
/// check can decide, not that it passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckOutcome {
    Pass,
    Fail,
    Skip,
}

impl CheckOutcome {
    /// Fails if any part fails, skips only if every part skipped.
    pub fn combine(parts: impl IntoIterator<Item = CheckOutcome>) -> CheckOutcome {
        let mut any_pass = false;
        for p in parts {
            match p {
                CheckOutcome::Fail => return CheckOutcome::Fail,
                CheckOutcome::Pass => any_pass = true,
                CheckOutcome::Skip => {}
            }
        }
        if any_pass {
            CheckOutcome::Pass
        } else {
            CheckOutcome::Skip
        }
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckOutcome::Pass => "pass",
            CheckOutcome::Fail => "fail",
            CheckOutcome::Skip => "skip",
        })
    }
}

#[derive(Debug, Clone)]
pub struct EscapeParams {
    pub t_max: f64,
    /// Sampling step; defaults to 0.01 for flows and 1 for maps.
    pub dt: Option<f64>,
    /// A level counts as exited if the orbit's last visit ends by this
    /// fraction of `t_max`.
    pub exit_fraction: f64,
    /// A visit after this fraction of `t_max` is a re-entry witness.
    pub witness_fraction: f64,
    /// Witnesses must lie in the lowest levels, up to this fraction of the
    /// exhaustion, so that an orbit still on its way out is not mistaken for
    /// a returning one.
    pub witness_level_fraction: f64,
    /// Prefix length beyond which two sequences are treated as equal.
    pub agreement_cap: u64,
    /// Minimum final agreement for a symbolic subsequence certificate.
    pub min_agreement: u64,
}

impl Default for EscapeParams {
    fn default() -> Self {
        EscapeParams {
            t_max: 50.0,
            dt: None,
            exit_fraction: 0.5,
            witness_fraction: 0.75,
            witness_level_fraction: 0.5,
            agreement_cap: 256,
            min_agreement: 8,
        }
    }
}

impl EscapeParams {
    pub fn with_t_max(t_max: f64) -> Self {
        EscapeParams {
            t_max,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::param("t_max", "must be positive and finite"));
        }
        if !(0.0 < self.exit_fraction && self.exit_fraction < self.witness_fraction && self.witness_fraction <= 1.0)
        {
            return Err(Error::param(
                "exit_fraction",
                "need 0 < exit_fraction < witness_fraction <= 1",
            ));
        }
        if !(self.witness_level_fraction > 0.0 && self.witness_level_fraction <= 1.0) {
            return Err(Error::param("witness_level_fraction", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

fn sample_step(sys: &FlowSystem, dt: Option<f64>) -> Result<f64> {
    let dt = dt.unwrap_or(match sys.time_kind() {
        TimeKind::Discrete => 1.0,
        TimeKind::Continuous => 0.01,
    });
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", "must be positive"));
    }
    Ok(dt)
}

fn step_count(t_max: f64, dt: f64) -> usize {
    (t_max / dt - 1e-9).ceil().max(0.0) as usize
}

/// When the orbit was last seen in K_level and when it left for good.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelExit {
    pub level: usize,
    pub last_inside: Option<f64>,
    /// T_K, or None when the orbit was still returning late in the run.
    pub exit_time: Option<f64>,
}

/// Re-entry samples of a symbolic orbit whose consecutive prefix agreement
/// grows, i.e. an approximately Cauchy subsequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsequenceChain {
    pub times: Vec<f64>,
    /// Agreement between consecutive chain members, in time order.
    pub links: Vec<u64>,
    pub certified: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectionVerdict {
    pub direction: Direction,
    pub status: EscapeStatus,
    pub levels: Vec<LevelExit>,
    /// (level, time) of a late visit that blocks escape.
    pub witness: Option<(usize, f64)>,
    pub blowup_time: Option<f64>,
    pub subsequence: Option<SubsequenceChain>,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EscapeVerdict {
    pub forward: DirectionVerdict,
    /// Present only for invertible systems.
    pub backward: Option<DirectionVerdict>,
}

impl EscapeVerdict {
    pub fn direction(&self, d: Direction) -> Option<&DirectionVerdict> {
        match d {
            Direction::Forward => Some(&self.forward),
            Direction::Backward => self.backward.as_ref(),
        }
    }

    /// Escaping in every available direction.
    pub fn two_sided_escaping(&self) -> bool {
        self.forward.status == EscapeStatus::Escaping
            && self.backward.as_ref().map(|b| b.status) == Some(EscapeStatus::Escaping)
    }
}

/// Classifies x as escaping or not, forward and (if invertible) backward.
pub fn classify_escape(
    sys: &FlowSystem,
    x: &PhasePoint,
    exhaustion: &CompactExhaustion,
    params: &EscapeParams,
) -> Result<EscapeVerdict> {
    params.validate()?;
    let levels = exhaustion.levels();
    let forward = classify_direction(sys, x, exhaustion, &levels, params, Direction::Forward)?;
    let backward = if sys.is_invertible() {
        Some(classify_direction(sys, x, exhaustion, &levels, params, Direction::Backward)?)
    } else {
        None
    };
    Ok(EscapeVerdict { forward, backward })
}

/// Classification in a single direction.
pub fn classify_direction(
    sys: &FlowSystem,
    x: &PhasePoint,
    exhaustion: &CompactExhaustion,
    levels: &[CompactRegion],
    params: &EscapeParams,
    direction: Direction,
) -> Result<DirectionVerdict> {
    let dt = sample_step(sys, params.dt)?;
    let steps = step_count(params.t_max, dt);
    let t_max = steps as f64 * dt;
    let symbolic = matches!(x, PhasePoint::Symbolic(_));

    let mut last_in: Vec<Option<f64>> = vec![None; levels.len()];
    let mut visits: Vec<(f64, usize, SymbolicPoint)> = Vec::new();
    let mut samples = 0usize;
    let blowup = sys.walk(x, dt, steps, direction, |_, t, p| {
        samples += 1;
        if let Some(first) = exhaustion.first_containing(levels, p)? {
            for slot in &mut last_in[first - 1..] {
                *slot = Some(t.abs());
            }
            if let PhasePoint::Symbolic(s) = p {
                visits.push((t.abs(), first, s.clone()));
            }
        }
        Ok(())
    })?;

    let exit_cut = params.exit_fraction * t_max;
    let levels_out: Vec<LevelExit> = last_in
        .iter()
        .enumerate()
        .map(|(i, &last)| {
            let exit_time = match (blowup, last) {
                (Some(b), None) => Some(0.0f64.min(b.abs())),
                (Some(b), Some(t)) => Some((t + dt).min(b.abs())),
                (None, None) => Some(0.0),
                (None, Some(t)) if t + dt <= exit_cut + 1e-9 => Some(t + dt),
                (None, Some(_)) => None,
            };
            LevelExit {
                level: i + 1,
                last_inside: last,
                exit_time,
            }
        })
        .collect();

    let mut witness = None;
    let mut subsequence = None;
    let status = if blowup.is_some() || levels_out.iter().all(|l| l.exit_time.is_some()) {
        EscapeStatus::Escaping
    } else {
        let cut = params.witness_fraction * t_max - 1e-9;
        let reach = ((levels.len() as f64 * params.witness_level_fraction).ceil() as usize).max(1);
        witness = levels_out[..reach.min(levels_out.len())]
            .iter()
            .find_map(|l| l.last_inside.filter(|&t| t >= cut).map(|t| (l.level, t)));
        match witness {
            Some((level, _)) if symbolic => {
                let at_level: Vec<(f64, &SymbolicPoint)> = visits
                    .iter()
                    .filter(|(_, first, _)| *first <= level)
                    .map(|(t, _, s)| (*t, s))
                    .collect();
                let chain = subsequence_chain(&at_level, params.agreement_cap, params.min_agreement);
                let certified = chain.certified;
                subsequence = Some(chain);
                if certified {
                    EscapeStatus::NonEscaping
                } else {
                    EscapeStatus::Inconclusive
                }
            }
            Some(_) => EscapeStatus::NonEscaping,
            None => EscapeStatus::Inconclusive,
        }
    };

    Ok(DirectionVerdict {
        direction,
        status,
        levels: levels_out,
        witness,
        blowup_time: blowup,
        subsequence,
        samples,
    })
}

const CHAIN_LENGTH: usize = 4;

/// Walks backward from the last re-entry, each time picking the earlier
/// re-entry that agrees longest with the current anchor while staying below
/// the previous link. Links therefore grow forward in time, except that
/// links at the agreement cap may repeat.
fn subsequence_chain(visits: &[(f64, &SymbolicPoint)], cap: u64, min_agreement: u64) -> SubsequenceChain {
    let Some(last) = visits.len().checked_sub(1) else {
        return SubsequenceChain {
            times: Vec::new(),
            links: Vec::new(),
            certified: false,
        };
    };
    let mut chain = vec![last];
    let mut links: Vec<u64> = Vec::new();
    let mut bound: Option<(u64, bool)> = None;
    while chain.len() < CHAIN_LENGTH {
        let anchor = *chain.last().unwrap_or(&last);
        let a = visits[anchor].1;
        let mut best: Option<(usize, u64, bool)> = None;
        for j in (0..anchor).rev() {
            let b = visits[j].1;
            let limit = cap.min(a.horizon()).min(b.horizon());
            let agree = a.agreement_length(b, cap);
            let saturated = agree == limit;
            let admissible = match bound {
                None => true,
                Some((prev, prev_sat)) => agree < prev || (saturated && prev_sat),
            };
            if admissible && best.is_none_or(|(_, v, _)| agree > v) {
                best = Some((j, agree, saturated));
            }
        }
        let Some((j, agree, saturated)) = best else {
            break;
        };
        chain.push(j);
        links.push(agree);
        bound = Some((agree, saturated));
    }
    chain.reverse();
    links.reverse();
    let certified = chain.len() >= 3 && links.last().is_some_and(|&l| l >= min_agreement);
    SubsequenceChain {
        times: chain.iter().map(|&i| visits[i].0).collect(),
        links,
        certified,
    }
}

/// Prefix agreement of Φ^n(x) with `target` under the shift, for each n.
pub fn shift_agreements(x: &PhasePoint, target: &PhasePoint, times: &[u64], cap: u64) -> Result<Vec<(u64, u64)>> {
    let x = x.as_symbolic()?;
    let target = target.as_symbolic()?;
    times
        .iter()
        .map(|&n| Ok((n, x.shifted(n)?.agreement_length(target, cap))))
        .collect()
}

#[derive(Debug, Clone)]
pub struct OmegaParams {
    pub t_tail: f64,
    pub t_max: f64,
    pub eps: f64,
    pub dt: Option<f64>,
    /// Distinct samples a cluster needs before it is reported.
    pub min_visits: usize,
    /// Samples outside this region are discarded.
    pub bound: Option<CompactRegion>,
}

impl Default for OmegaParams {
    fn default() -> Self {
        OmegaParams {
            t_tail: 25.0,
            t_max: 50.0,
            eps: 1e-3,
            dt: None,
            min_visits: 1,
            bound: None,
        }
    }
}

impl OmegaParams {
    /// Bounds sampling by the top level of `exhaustion`.
    pub fn bounded_by(mut self, exhaustion: &CompactExhaustion) -> Self {
        self.bound = Some(exhaustion.level(exhaustion.max_level()));
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_max.is_finite() && 0.0 <= self.t_tail && self.t_tail <= self.t_max) {
            return Err(Error::param("t_tail", "need 0 <= t_tail <= t_max"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::param("eps", "must be positive"));
        }
        Ok(())
    }
}

/// Estimate of ω(x) from orbit samples in [T_tail, T_max].
pub fn estimate_omega(sys: &FlowSystem, x: &PhasePoint, params: &OmegaParams) -> Result<LimitSetEstimate> {
    estimate_limit(sys, x, params, Direction::Forward)
}

/// Estimate of α(x) from samples in [−T_max, −T_tail].
pub fn estimate_alpha(sys: &FlowSystem, x: &PhasePoint, params: &OmegaParams) -> Result<LimitSetEstimate> {
    if !sys.is_invertible() {
        return Err(Error::NonInvertible);
    }
    estimate_limit(sys, x, params, Direction::Backward)
}

pub fn estimate_limit(
    sys: &FlowSystem,
    x: &PhasePoint,
    params: &OmegaParams,
    direction: Direction,
) -> Result<LimitSetEstimate> {
    params.validate()?;
    let dt = sample_step(sys, params.dt)?;
    let steps = step_count(params.t_max, dt);
    let window = (params.t_tail, steps as f64 * dt);
    let mut kept: Vec<(u64, PhasePoint)> = Vec::new();
    let mut discarded = 0usize;
    let blowup = sys.walk(x, dt, steps, direction, |k, t, p| {
        if t.abs() + 1e-9 < params.t_tail {
            return Ok(());
        }
        match &params.bound {
            Some(b) if !b.contains(p)? => discarded += 1,
            _ => kept.push((k as u64, p.clone())),
        }
        Ok(())
    })?;
    if let Some(b) = blowup {
        let mut est = LimitSetEstimate::empty(params.eps, window);
        est.blowup_time = Some(b);
        est.samples = kept.len() + discarded;
        est.discarded = est.samples;
        return Ok(est);
    }
    let (clusters, unclustered) = cluster_tagged(&kept, params.eps, params.min_visits)?;
    Ok(LimitSetEstimate {
        clusters,
        radius: params.eps,
        window,
        samples: kept.len() + discarded,
        discarded,
        unclustered,
        blowup_time: None,
    })
}

/// One direction of the ω/escape duality.
#[derive(Debug, Clone, Serialize)]
pub struct DualitySide {
    pub direction: Direction,
    pub status: EscapeStatus,
    pub clusters: usize,
    pub outcome: CheckOutcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct DualityReport {
    pub forward: DualitySide,
    pub backward: Option<DualitySide>,
    pub outcome: CheckOutcome,
}

/// x escapes exactly when its limit set is empty, checked per direction.
/// Inconclusive verdicts skip. Without an explicit bound the ω estimate is
/// restricted to the top exhaustion level.
pub fn check_omega_escape_duality(
    sys: &FlowSystem,
    x: &PhasePoint,
    exhaustion: &CompactExhaustion,
    escape: &EscapeParams,
    omega: &OmegaParams,
) -> Result<DualityReport> {
    let verdict = classify_escape(sys, x, exhaustion, escape)?;
    let omega = if omega.bound.is_none() {
        omega.clone().bounded_by(exhaustion)
    } else {
        omega.clone()
    };
    let side = |v: &DirectionVerdict| -> Result<DualitySide> {
        let est = estimate_limit(sys, x, &omega, v.direction)?;
        let outcome = match (v.status, est.is_empty()) {
            (EscapeStatus::Inconclusive, _) => CheckOutcome::Skip,
            (EscapeStatus::Escaping, true) | (EscapeStatus::NonEscaping, false) => CheckOutcome::Pass,
            _ => CheckOutcome::Fail,
        };
        Ok(DualitySide {
            direction: v.direction,
            status: v.status,
            clusters: est.clusters.len(),
            outcome,
        })
    };
    let forward = side(&verdict.forward)?;
    let backward = verdict.backward.as_ref().map(side).transpose()?;
    let outcome = CheckOutcome::combine(
        std::iter::once(forward.outcome).chain(backward.as_ref().map(|b| b.outcome)),
    );
    Ok(DualityReport {
        forward,
        backward,
        outcome,
    })
}

#[derive(Debug, Clone)]
pub struct ConjugacyParams {
    pub exhaustion: CompactExhaustion,
    pub escape: EscapeParams,
    /// ω transport is skipped when absent.
    pub omega: Option<OmegaParams>,
    /// Times at which Ψ^t∘h = h∘Φ^t is checked on every sample.
    pub residual_times: Vec<f64>,
    pub inverse_tolerance: f64,
    pub residual_tolerance: f64,
}

impl ConjugacyParams {
    pub fn new(exhaustion: CompactExhaustion, escape: EscapeParams) -> Self {
        ConjugacyParams {
            exhaustion,
            escape,
            omega: None,
            residual_times: vec![1.0, 2.0],
            inverse_tolerance: 1e-9,
            residual_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TransportRow {
    pub point: String,
    pub image: String,
    pub source: [EscapeStatus; 2],
    pub target: [EscapeStatus; 2],
    /// Worst distance from a transported source cluster to the target estimate.
    pub omega_distance: Option<f64>,
    pub omega_bound: Option<f64>,
    pub outcome: CheckOutcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransportReport {
    pub rows: Vec<TransportRow>,
    pub outcome: CheckOutcome,
}

fn scaled(d: f64, reference: &PhasePoint) -> f64 {
    match reference {
        PhasePoint::Euclidean(x) => d / x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0),
        PhasePoint::Symbolic(_) => d,
    }
}

fn statuses(v: &EscapeVerdict) -> [EscapeStatus; 2] {
    [
        v.forward.status,
        v.backward.as_ref().map_or(EscapeStatus::Inconclusive, |b| b.status),
    ]
}

/// Verifies h∘Φ = Ψ∘h on the samples, then checks that escape verdicts and
/// ω-clusters carry over along h. The target exhaustion is the image h(K_m).
pub fn check_conjugacy_transport(
    source: &FlowSystem,
    target: &FlowSystem,
    h: &Conjugacy,
    samples: &[PhasePoint],
    params: &ConjugacyParams,
) -> Result<TransportReport> {
    verify_conjugacy(source, target, h, samples, params)?;
    let image_exhaustion = h.image_exhaustion(&params.exhaustion);
    let mut rows = Vec::with_capacity(samples.len());
    for x in samples {
        let hx = h.apply(x)?;
        let vs = classify_escape(source, x, &params.exhaustion, &params.escape)?;
        let vt = classify_escape(target, &hx, &image_exhaustion, &params.escape)?;
        let (src, tgt) = (statuses(&vs), statuses(&vt));
        let mut parts = Vec::new();
        for (a, b) in src.iter().zip(&tgt) {
            parts.push(match (a, b) {
                (EscapeStatus::Inconclusive, _) | (_, EscapeStatus::Inconclusive) => CheckOutcome::Skip,
                _ if a == b => CheckOutcome::Pass,
                _ => CheckOutcome::Fail,
            });
        }
        let mut omega_distance = None;
        let mut omega_bound = None;
        if let Some(op) = &params.omega {
            let es = estimate_omega(source, x, &op.clone().bounded_by(&params.exhaustion))?;
            let et = estimate_omega(target, &hx, &op.clone().bounded_by(&image_exhaustion))?;
            let mut worst = 0.0f64;
            let mut bound = 0.0f64;
            let mut ok = es.is_empty() == et.is_empty();
            for c in &es.clusters {
                let lip = h.local_lipschitz(&c.center, 1e-6)?;
                let delta = 2.0 * op.eps * (lip + 1.0);
                let d = et.nearest(&h.apply(&c.center)?)?.unwrap_or(f64::INFINITY);
                ok &= d <= delta;
                worst = worst.max(d);
                bound = bound.max(delta);
            }
            if !es.is_empty() {
                omega_distance = Some(worst);
                omega_bound = Some(bound);
            }
            parts.push(if ok { CheckOutcome::Pass } else { CheckOutcome::Fail });
        }
        rows.push(TransportRow {
            point: x.label(),
            image: hx.label(),
            source: src,
            target: tgt,
            omega_distance,
            omega_bound,
            outcome: CheckOutcome::combine(parts),
        });
    }
    let outcome = CheckOutcome::combine(rows.iter().map(|r| r.outcome));
    Ok(TransportReport { rows, outcome })
}

/// Checks h⁻¹∘h ≈ id and the conjugation residual on every sample.
pub fn verify_conjugacy(
    source: &FlowSystem,
    target: &FlowSystem,
    h: &Conjugacy,
    samples: &[PhasePoint],
    params: &ConjugacyParams,
) -> Result<()> {
    for x in samples {
        let hx = h.apply(x)?;
        let back = h.apply_inverse(&hx)?;
        let r = scaled(back.distance(x)?, x);
        if r > params.inverse_tolerance {
            return Err(Error::NotAConjugacy {
                residual: r,
                tolerance: params.inverse_tolerance,
                detail: format!("inverse fails at {x}"),
            });
        }
        for &t in &params.residual_times {
            for t in [t, -t] {
                if t < 0.0 && !(source.is_invertible() && target.is_invertible()) {
                    continue;
                }
                let time = match source.time_kind() {
                    TimeKind::Discrete => TimeValue::Discrete(t.round() as i64),
                    TimeKind::Continuous => TimeValue::Continuous(t),
                };
                let lhs = target.evaluate(&hx, time);
                let rhs = source.evaluate(x, time).and_then(|p| h.apply(&p));
                let (lhs, rhs) = match (lhs, rhs) {
                    (Ok(a), Ok(b)) => (a, b),
                    // both sides leaving to infinity is consistent
                    (Err(Error::Diverged { .. }), Err(Error::Diverged { .. })) => continue,
                    (Err(e), _) | (_, Err(e)) => return Err(e),
                };
                let r = scaled(lhs.distance(&rhs)?, &rhs);
                if r > params.residual_tolerance {
                    return Err(Error::NotAConjugacy {
                        residual: r,
                        tolerance: params.residual_tolerance,
                        detail: format!("orbit mismatch at {x}, t = {t}"),
                    });
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimalOrbitReport {
    pub forward: EscapeStatus,
    pub backward: EscapeStatus,
    /// (time, two-sided escaping) for each orbit sample examined.
    pub orbit: Vec<(f64, bool)>,
    pub outcome: CheckOutcome,
}

/// A point escaping in both directions has an orbit closure that is minimal
/// among closed invariant sets; operationally every orbit sample must also be
/// two-sided escaping. Skips unless x itself is two-sided escaping.
pub fn check_minimal_orbit(
    sys: &FlowSystem,
    x: &PhasePoint,
    exhaustion: &CompactExhaustion,
    escape: &EscapeParams,
    orbit_times: &[f64],
) -> Result<MinimalOrbitReport> {
    if !sys.is_invertible() {
        return Err(Error::NonInvertible);
    }
    let verdict = classify_escape(sys, x, exhaustion, escape)?;
    let [forward, backward] = statuses(&verdict);
    let mut orbit = Vec::new();
    let mut outcome = CheckOutcome::Skip;
    if verdict.two_sided_escaping() {
        outcome = CheckOutcome::Pass;
        for &t in orbit_times {
            let time = match sys.time_kind() {
                TimeKind::Discrete => TimeValue::Discrete(t.round() as i64),
                TimeKind::Continuous => TimeValue::Continuous(t),
            };
            let y = match sys.evaluate(x, time) {
                Ok(y) => y,
                Err(Error::Diverged { .. }) => continue,
                Err(e) => return Err(e),
            };
            let ok = classify_escape(sys, &y, exhaustion, escape)?.two_sided_escaping();
            if !ok {
                outcome = CheckOutcome::Fail;
            }
            orbit.push((t, ok));
        }
    }
    Ok(MinimalOrbitReport {
        forward,
        backward,
        orbit,
        outcome,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::MapExpr;
    use crate::flows::shift_example_points_with_horizon;
    use crate::phase_space::BoundKind;

    fn e(c: &[f64]) -> PhasePoint {
        PhasePoint::euclidean(c.to_vec()).unwrap()
    }

    fn balls(step: f64, levels: usize) -> CompactExhaustion {
        CompactExhaustion::balls(vec![0.0, 0.0], step, levels).unwrap()
    }

    #[test]
    fn translation_escapes_both_ways() {
        let sys = FlowSystem::translation(vec![1.0, 0.0]).unwrap();
        let v = classify_escape(&sys, &e(&[0.3, -0.2]), &balls(1.0, 10), &EscapeParams::default()).unwrap();
        assert_eq!(v.forward.status, EscapeStatus::Escaping);
        assert_eq!(v.backward.as_ref().unwrap().status, EscapeStatus::Escaping);
        // |x + t| first exceeds 10 just after t ≈ 9.7
        let top = v.forward.levels.last().unwrap().exit_time.unwrap();
        assert!((top - 9.71).abs() < 0.02, "{top}");
    }

    #[test]
    fn spiral_verdicts() {
        let exh = balls(1.0, 10);
        let p = EscapeParams::default();
        let outside = classify_escape(&FlowSystem::Spiral, &e(&[2.0, 0.0]), &exh, &p).unwrap();
        assert_eq!(outside.forward.status, EscapeStatus::NonEscaping);
        let back = outside.backward.unwrap();
        assert_eq!(back.status, EscapeStatus::Escaping);
        assert!((back.blowup_time.unwrap() + 0.143841036225890).abs() < 1e-9);

        let inside = classify_escape(&FlowSystem::Spiral, &e(&[0.5, 0.0]), &exh, &p).unwrap();
        assert_eq!(inside.forward.status, EscapeStatus::NonEscaping);
        assert_eq!(inside.backward.unwrap().status, EscapeStatus::NonEscaping);
    }

    #[test]
    fn too_short_a_run_is_inconclusive() {
        // x = 0 walks to 10 by t_max = 10; top level is still occupied late
        let sys = FlowSystem::translation(vec![1.0, 0.0]).unwrap();
        let v = classify_escape(&sys, &e(&[0.0, 0.0]), &balls(1.0, 10), &EscapeParams::with_t_max(12.0)).unwrap();
        assert_eq!(v.forward.status, EscapeStatus::Inconclusive);
    }

    #[test]
    fn shift_points_are_separated() {
        let (x, y) = shift_example_points_with_horizon(1 << 13).unwrap();
        let exh = CompactExhaustion::cylinders(BoundKind::Dyadic, 1, 8).unwrap();
        let p = EscapeParams::with_t_max(1024.0);
        let vy = classify_escape(&FlowSystem::Shift, &y, &exh, &p).unwrap();
        assert_eq!(vy.forward.status, EscapeStatus::Escaping);
        assert!(vy.backward.is_none());
        let vx = classify_escape(&FlowSystem::Shift, &x, &exh, &p).unwrap();
        assert_eq!(vx.forward.status, EscapeStatus::NonEscaping);
        let chain = vx.forward.subsequence.unwrap();
        assert!(chain.certified);
        assert!(chain.links.windows(2).all(|w| w[0] <= w[1]), "{:?}", chain.links);
    }

    #[test]
    fn shift_agreement_with_ones() {
        let (x, _) = shift_example_points_with_horizon(1 << 12).unwrap();
        let ones = PhasePoint::symbolic(crate::phase_space::SequenceRule::Constant(1), 1 << 12).unwrap();
        let times: Vec<u64> = (1..=10).map(|j| 1u64 << j).collect();
        for (n, a) in shift_agreements(&x, &ones, &times, 1 << 12).unwrap() {
            assert_eq!(a, n - 1);
        }
    }

    #[test]
    fn omega_of_spiral_is_the_circle() {
        let params = OmegaParams {
            t_tail: 25.0,
            t_max: 50.0,
            eps: 0.05,
            ..Default::default()
        };
        for start in [[2.0, 0.0], [0.5, 0.0]] {
            let est = estimate_omega(&FlowSystem::Spiral, &e(&start), &params).unwrap();
            assert!(!est.is_empty());
            for c in &est.clusters {
                let r = c.center.as_euclidean().unwrap().iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((r - 1.0).abs() < 1e-6, "{r}");
            }
        }
        // α of an outside point is empty (blowup)
        let a = estimate_alpha(&FlowSystem::Spiral, &e(&[2.0, 0.0]), &params).unwrap();
        assert!(a.is_empty() && a.blowup_time.is_some());
        // α of an inside point is the origin
        let a = estimate_alpha(&FlowSystem::Spiral, &e(&[0.5, 0.0]), &params).unwrap();
        assert_eq!(a.clusters.len(), 1);
        assert!(a.clusters[0].center.as_euclidean().unwrap().iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn duality_on_corpus() {
        let exh = balls(1.0, 10);
        let esc = EscapeParams::default();
        let om = OmegaParams::default();
        let tr = FlowSystem::translation(vec![1.0, 0.0]).unwrap();
        for (sys, x) in [
            (&tr, e(&[0.0, 1.0])),
            (&FlowSystem::Spiral, e(&[2.0, 0.0])),
            (&FlowSystem::Spiral, e(&[0.5, 0.5])),
            (&FlowSystem::Spiral, e(&[0.0, 0.0])),
        ] {
            let r = check_omega_escape_duality(sys, &x, &exh, &esc, &om).unwrap();
            assert_eq!(r.outcome, CheckOutcome::Pass, "{x}: {r:?}");
        }
    }

    #[test]
    fn cube_conjugacy_transports_escape() {
        let tr = FlowSystem::translation(vec![1.0]).unwrap();
        let psi = FlowSystem::custom_ode(
            MapExpr::parse("cube-flow", 1, &["3*cbrt(x)^2"]).unwrap(),
            Default::default(),
        )
        .unwrap();
        let h = Conjugacy::new(
            MapExpr::parse("cube", 1, &["x^3"]).unwrap(),
            MapExpr::parse("cbrt", 1, &["cbrt(x)"]).unwrap(),
        )
        .unwrap();
        let exh = CompactExhaustion::balls(vec![0.0], 1.0, 6).unwrap();
        let mut params = ConjugacyParams::new(exh, EscapeParams::with_t_max(20.0));
        params.residual_times = vec![0.25, 1.0];
        // backward residuals stay clear of 0, where the cube flow is not Lipschitz
        let samples = vec![e(&[1.25]), e(&[2.0]), e(&[3.0])];
        let r = check_conjugacy_transport(&tr, &psi, &h, &samples, &params).unwrap();
        assert_eq!(r.outcome, CheckOutcome::Pass, "{r:?}");
    }

    #[test]
    fn wrong_conjugacy_is_rejected() {
        let tr = FlowSystem::translation(vec![1.0]).unwrap();
        let h = Conjugacy::new(
            MapExpr::parse("cube", 1, &["x^3"]).unwrap(),
            MapExpr::parse("cbrt", 1, &["cbrt(x)"]).unwrap(),
        )
        .unwrap();
        let params = ConjugacyParams::new(CompactExhaustion::balls(vec![0.0], 1.0, 4).unwrap(), EscapeParams::default());
        // Ψ = Φ is not conjugate to Φ through x³
        let err = check_conjugacy_transport(&tr, &tr, &h, &[e(&[1.0])], &params).unwrap_err();
        assert!(matches!(err, Error::NotAConjugacy { .. }));
    }

    #[test]
    fn minimal_orbit_for_translation_and_skip_for_spiral() {
        let exh = balls(1.0, 10);
        let esc = EscapeParams::default();
        let tr = FlowSystem::translation(vec![1.0, 0.0]).unwrap();
        let r = check_minimal_orbit(&tr, &e(&[0.0, 0.0]), &exh, &esc, &[-3.0, 2.0]).unwrap();
        assert_eq!(r.outcome, CheckOutcome::Pass);
        let r = check_minimal_orbit(&FlowSystem::Spiral, &e(&[2.0, 0.0]), &exh, &esc, &[1.0]).unwrap();
        assert_eq!(r.outcome, CheckOutcome::Skip);
        assert!(matches!(
            check_minimal_orbit(&FlowSystem::Shift, &shift_example_points_with_horizon(64).unwrap().0, &exh, &esc, &[]),
            Err(Error::NonInvertible)
        ));
    }
}
