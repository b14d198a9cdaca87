//! Finitely generated semigroups of continuous self-maps of ℝ^d.
//!
//! Limit sets, recurrence and escape for a semigroup are defined through
//! unbounded sequences of words: term k holds exactly n_k copies of a
//! designated generator, padded with filler words from the other generators.
//! No run can quantify over all such sequences, so every analysis here works
//! on a finite family of them and reports which family it used.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::escape_analysis::{CheckOutcome, EscapeStatus};
use crate::expr::MapExpr;
use crate::flows::Conjugacy;
use crate::hyperspace::FiniteCompact;
use crate::limit_set::{Cluster, GreedyClusterer, LimitSetEstimate};
use crate::phase_space::{euclidean_distance, CompactExhaustion, CompactRegion, PhasePoint};

/// Tolerance on commutators when a generator set is declared abelian.
pub const COMMUTATOR_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct GeneratorSet {
    name: String,
    generators: Vec<Arc<MapExpr>>,
    abelian: bool,
}

impl GeneratorSet {
    /// A declared-abelian set is checked on a fixed sample of points.
    pub fn new(name: impl Into<String>, generators: Vec<MapExpr>, abelian: bool) -> Result<Self> {
        let Some(dim) = generators.first().map(MapExpr::dim) else {
            return Err(Error::param("generators", "need at least one generator"));
        };
        if generators.iter().any(|g| g.dim() != dim) {
            return Err(Error::param("generators", "generators act on different dimensions"));
        }
        let set = GeneratorSet {
            name: name.into(),
            generators: generators.into_iter().map(Arc::new).collect(),
            abelian,
        };
        if abelian {
            set.verify_abelian(&commutator_samples(dim))?;
        }
        Ok(set)
    }

    /// Commutator residuals on `samples`; points outside a generator's domain
    /// are skipped.
    pub fn verify_abelian(&self, samples: &[Vec<f64>]) -> Result<()> {
        for x in samples {
            for a in 0..self.len() {
                for b in a + 1..self.len() {
                    let ab = self.apply(a, x).and_then(|y| self.apply(b, &y));
                    let ba = self.apply(b, x).and_then(|y| self.apply(a, &y));
                    let (Ok(ab), Ok(ba)) = (ab, ba) else { continue };
                    let residual = euclidean_distance(&ab, &ba);
                    if residual > COMMUTATOR_TOLERANCE * norm(&ab).max(1.0) {
                        return Err(Error::NonAbelian { a, b, residual });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.generators[0].dim()
    }

    pub fn is_abelian(&self) -> bool {
        self.abelian
    }

    pub fn generator(&self, i: usize) -> &MapExpr {
        &self.generators[i]
    }

    pub fn apply(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.generators[i].apply(x)
    }

    pub fn describe(&self) -> String {
        let gens: Vec<String> = self.generators.iter().map(|g| g.to_string()).collect();
        format!("<{}>{}", gens.join(", "), if self.abelian { " abelian" } else { "" })
    }
}

fn commutator_samples(dim: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    (0..16)
        .map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect()
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// A composition of generators. `letters[0]` is applied last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SemigroupWord {
    letters: Vec<usize>,
}

impl SemigroupWord {
    pub fn new(letters: Vec<usize>, generators: usize) -> Result<Self> {
        if letters.is_empty() {
            return Err(Error::EmptyWord);
        }
        if let Some(&bad) = letters.iter().find(|&&l| l >= generators) {
            return Err(Error::param("word", format!("generator index {bad} out of range")));
        }
        Ok(SemigroupWord { letters })
    }

    /// Builds a word from letters listed in application order.
    pub fn from_application_order(mut applied: Vec<usize>, generators: usize) -> Result<Self> {
        applied.reverse();
        Self::new(applied, generators)
    }

    pub fn letters(&self) -> &[usize] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// Occurrences of each generator.
    pub fn counts(&self, generators: usize) -> Vec<usize> {
        let mut c = vec![0; generators];
        for &l in &self.letters {
            c[l] += 1;
        }
        c
    }
}

impl fmt::Display for SemigroupWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.letters.iter().map(|l| format!("g{}", l + 1)).collect();
        f.write_str(&parts.join("∘"))
    }
}

/// Evaluates w(x), innermost letter first.
pub fn apply_word(g: &GeneratorSet, w: &SemigroupWord, x: &PhasePoint) -> Result<PhasePoint> {
    let counts = w.counts(g.len());
    debug_assert_eq!(counts.iter().sum::<usize>(), w.len());
    let mut y = x.as_euclidean()?.to_vec();
    for (position, &l) in w.letters.iter().enumerate().rev() {
        y = g.apply(l, &y).map_err(|e| Error::WordDomain {
            position,
            generator: l,
            source: Box::new(e),
        })?;
    }
    Ok(PhasePoint::Euclidean(y))
}

#[derive(Debug, Clone, Serialize)]
pub struct OrbitSample {
    pub entries: Vec<(SemigroupWord, Vec<f64>)>,
    /// True when words were drawn at random instead of enumerated.
    pub sampled: bool,
}

/// All words of length ≤ `max_len` in breadth-first order when there are at
/// most `budget` of them, otherwise `budget` seeded random words.
pub fn sample_orbit(g: &GeneratorSet, x: &PhasePoint, max_len: usize, budget: usize, seed: u64) -> Result<OrbitSample> {
    if max_len == 0 {
        return Err(Error::param("max_len", "must be at least 1"));
    }
    let m = g.len();
    let mut total = 0usize;
    let mut layer = 1usize;
    let mut fits = true;
    for _ in 0..max_len {
        layer = layer.saturating_mul(m);
        total = total.saturating_add(layer);
        if total > budget {
            fits = false;
            break;
        }
    }
    let mut entries = Vec::new();
    if fits {
        let mut frontier: Vec<(Vec<usize>, Vec<f64>)> = vec![(Vec::new(), x.as_euclidean()?.to_vec())];
        for _ in 0..max_len {
            let mut next = Vec::with_capacity(frontier.len() * m);
            for (letters, value) in &frontier {
                for i in 0..m {
                    // prepend: the new generator is applied last
                    let mut w = Vec::with_capacity(letters.len() + 1);
                    w.push(i);
                    w.extend_from_slice(letters);
                    let y = g.apply(i, value).map_err(|e| Error::WordDomain {
                        position: 0,
                        generator: i,
                        source: Box::new(e),
                    })?;
                    next.push((w, y));
                }
            }
            next.sort_by(|a, b| a.0.cmp(&b.0));
            for (w, y) in &next {
                entries.push((SemigroupWord::new(w.clone(), m)?, y.clone()));
            }
            frontier = next;
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..budget {
            let len = rng.gen_range(1..=max_len);
            let letters: Vec<usize> = (0..len).map(|_| rng.gen_range(0..m)).collect();
            let w = SemigroupWord::new(letters, m)?;
            let y = apply_word(g, &w, x)?.as_euclidean()?.to_vec();
            entries.push((w, y));
        }
    }
    Ok(OrbitSample { entries, sampled: !fits })
}

/// n_k, the number of designated-generator copies in term k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// n_k = factor · k
    Linear(u64),
    /// n_k = 2^k
    Exponential,
}

impl Schedule {
    pub fn n(&self, k: u64) -> Option<u64> {
        match self {
            Schedule::Linear(f) => f.checked_mul(k),
            Schedule::Exponential => (k < 63).then(|| 1u64 << k),
        }
    }

    fn label(&self) -> String {
        match self {
            Schedule::Linear(1) => "k".into(),
            Schedule::Linear(f) => format!("{f}k"),
            Schedule::Exponential => "2^k".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FillerPolicy {
    None,
    /// After each designated copy, a random word of length 0..=max_len.
    RandomBounded { max_len: usize, seed: u64 },
    /// The same word (application order) after each designated copy.
    Fixed(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UnboundedSequenceSpec {
    pub designated: usize,
    pub schedule: Schedule,
    pub filler: FillerPolicy,
}

impl UnboundedSequenceSpec {
    pub fn new(g: &GeneratorSet, designated: usize, schedule: Schedule, filler: FillerPolicy) -> Result<Self> {
        if designated >= g.len() {
            return Err(Error::param("designated", "generator index out of range"));
        }
        if let Schedule::Linear(0) = schedule {
            return Err(Error::param("schedule", "n_k must grow at least like k"));
        }
        if let FillerPolicy::Fixed(w) = &filler {
            if w.iter().any(|&l| l == designated || l >= g.len()) {
                return Err(Error::param("filler", "fillers must avoid the designated generator"));
            }
        }
        Ok(UnboundedSequenceSpec {
            designated,
            schedule,
            filler,
        })
    }

    pub fn label(&self) -> String {
        let filler = match &self.filler {
            FillerPolicy::None => "none".to_string(),
            FillerPolicy::RandomBounded { max_len, seed } => format!("rand{max_len}/s{seed}"),
            FillerPolicy::Fixed(w) => format!("fixed{w:?}"),
        };
        format!("g{} n={} fill={}", self.designated + 1, self.schedule.label(), filler)
    }

    /// Letters, in application order, that extend term k−1 to term k.
    pub fn chunk(&self, g: &GeneratorSet, k: u64) -> Result<Vec<usize>> {
        let from = if k <= 1 { 0 } else { self.n(k - 1)? };
        let to = self.n(k)?;
        let others: Vec<usize> = (0..g.len()).filter(|&i| i != self.designated).collect();
        let mut rng = match self.filler {
            FillerPolicy::RandomBounded { seed, .. } => {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                r.set_stream(k);
                Some(r)
            }
            _ => None,
        };
        let mut out = Vec::new();
        for _ in from..to {
            out.push(self.designated);
            match &self.filler {
                FillerPolicy::None => {}
                FillerPolicy::Fixed(w) => out.extend_from_slice(w),
                FillerPolicy::RandomBounded { max_len, .. } => {
                    if let (Some(rng), false) = (rng.as_mut(), others.is_empty()) {
                        let len = rng.gen_range(0..=*max_len);
                        out.extend((0..len).map(|_| others[rng.gen_range(0..others.len())]));
                    }
                }
            }
        }
        Ok(out)
    }

    fn n(&self, k: u64) -> Result<u64> {
        self.schedule
            .n(k)
            .ok_or_else(|| Error::param("schedule", format!("n_{k} overflows")))
    }

    /// The full word f_{n_k}; meant for small k.
    pub fn term_word(&self, g: &GeneratorSet, k: u64) -> Result<SemigroupWord> {
        let mut applied = Vec::new();
        for j in 1..=k {
            applied.extend(self.chunk(g, j)?);
        }
        SemigroupWord::from_application_order(applied, g.len())
    }
}

/// Default family: every designated generator × schedules {k, 2k, 2^k} ×
/// fillers {none, random of length ≤ 3 under `seeds` seeds}.
pub fn default_family(g: &GeneratorSet, seeds: u64, base_seed: u64) -> Vec<UnboundedSequenceSpec> {
    let mut out = Vec::new();
    for a in 0..g.len() {
        for schedule in [Schedule::Linear(1), Schedule::Linear(2), Schedule::Exponential] {
            out.push(UnboundedSequenceSpec {
                designated: a,
                schedule,
                filler: FillerPolicy::None,
            });
            if g.len() > 1 {
                for s in 0..seeds {
                    out.push(UnboundedSequenceSpec {
                        designated: a,
                        schedule,
                        filler: FillerPolicy::RandomBounded {
                            max_len: 3,
                            seed: base_seed.wrapping_add(s),
                        },
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SemigroupParams {
    pub eps: f64,
    /// Total generator applications, split evenly across the family.
    pub budget: u64,
    /// Terms of one sequence an ε-ball needs before it counts as a limit.
    pub min_visits: usize,
    /// A sequence whose norm passes this radius is treated as escaped.
    pub escape_radius: f64,
    pub exit_fraction: f64,
    pub witness_fraction: f64,
    pub witness_level_fraction: f64,
}

impl Default for SemigroupParams {
    fn default() -> Self {
        SemigroupParams {
            eps: 1e-3,
            budget: 100_000,
            min_visits: 3,
            escape_radius: 1e6,
            exit_fraction: 0.5,
            witness_fraction: 0.75,
            witness_level_fraction: 0.5,
        }
    }
}

impl SemigroupParams {
    fn doubled(&self) -> Self {
        SemigroupParams {
            budget: self.budget.saturating_mul(2),
            ..self.clone()
        }
    }
}

/// The evaluated terms f_{n_k}(x), k = 1..K, of one sequence.
#[derive(Debug, Clone)]
pub struct SpecRun {
    pub label: String,
    pub terms: Vec<Vec<f64>>,
    pub applications: u64,
    pub diverged: bool,
}

/// Evaluates terms until the application budget or the escape radius is hit.
/// Each term extends the previous one, so the cost is the final word length.
pub fn run_spec(g: &GeneratorSet, x: &[f64], spec: &UnboundedSequenceSpec, budget: u64, escape_radius: f64) -> Result<SpecRun> {
    let mut y = x.to_vec();
    let mut counts = vec![0u64; g.len()];
    let mut terms = Vec::new();
    let mut applications = 0u64;
    let mut diverged = false;
    for k in 1u64.. {
        if spec.schedule.n(k).is_none() {
            break;
        }
        let chunk = spec.chunk(g, k)?;
        if applications + chunk.len() as u64 > budget {
            break;
        }
        for (position, &l) in chunk.iter().enumerate() {
            y = g.apply(l, &y).map_err(|e| Error::WordDomain {
                position,
                generator: l,
                source: Box::new(e),
            })?;
            counts[l] += 1;
        }
        applications += chunk.len() as u64;
        assert_eq!(
            Some(counts[spec.designated]),
            spec.schedule.n(k),
            "term {k} of {} has the wrong designated count",
            spec.label()
        );
        terms.push(y.clone());
        if norm(&y) > escape_radius {
            diverged = true;
            break;
        }
    }
    if terms.len() < 2 && !diverged {
        return Err(Error::param("budget", format!("too small for two terms of {}", spec.label())));
    }
    Ok(SpecRun {
        label: spec.label(),
        terms,
        applications,
        diverged,
    })
}

fn run_family(g: &GeneratorSet, x: &PhasePoint, family: &[UnboundedSequenceSpec], params: &SemigroupParams) -> Result<Vec<SpecRun>> {
    if family.is_empty() {
        return Err(Error::param("family", "needs at least one sequence spec"));
    }
    let x = x.as_euclidean()?;
    if x.len() != g.dim() {
        return Err(Error::VariantMismatch(format!(
            "point has {} coordinates, generators act on {}",
            x.len(),
            g.dim()
        )));
    }
    let share = params.budget / family.len() as u64;
    family
        .iter()
        .map(|s| run_spec(g, x, s, share, params.escape_radius))
        .collect()
}

/// A limit candidate: one sequence returns to the ball at least
/// `min_visits` times, the last time in the second half of its run.
#[derive(Debug, Clone, Serialize)]
pub struct StrongCluster {
    pub center: Vec<f64>,
    pub spec: String,
    pub visits: usize,
    pub last_term: usize,
}

#[derive(Debug, Clone)]
pub struct OmegaGEstimate {
    pub estimate: LimitSetEstimate,
    pub strong: Vec<StrongCluster>,
    pub runs: Vec<SpecRun>,
}

fn late(last: usize, run: &SpecRun, fraction: f64) -> bool {
    (last + 1) as f64 >= fraction * run.terms.len() as f64
}

fn strong_clusters(runs: &[SpecRun], params: &SemigroupParams) -> Result<(Vec<StrongCluster>, usize)> {
    let mut clusterer = GreedyClusterer::new(params.eps)?;
    let mut total = 0;
    for run in runs {
        for t in &run.terms {
            clusterer.assign(&PhasePoint::Euclidean(t.clone()))?;
            total += 1;
        }
    }
    let n = clusterer.centers().len();
    // per cluster: best (visits, last term, spec) over sequences
    let mut best: Vec<Option<(usize, usize, usize)>> = vec![None; n];
    for (s, run) in runs.iter().enumerate() {
        let mut visits = vec![0usize; n];
        let mut last = vec![0usize; n];
        let mut touched = Vec::new();
        for (k, t) in run.terms.iter().enumerate() {
            for c in clusterer.within(&PhasePoint::Euclidean(t.clone()), params.eps)? {
                if visits[c] == 0 {
                    touched.push(c);
                }
                visits[c] += 1;
                last[c] = k;
            }
        }
        for c in touched {
            let qualifies = visits[c] >= params.min_visits && late(last[c], run, 0.5);
            if qualifies && best[c].is_none_or(|(v, _, _)| visits[c] > v) {
                best[c] = Some((visits[c], last[c], s));
            }
        }
    }
    let strong = clusterer
        .centers()
        .iter()
        .zip(&best)
        .filter_map(|(c, b)| {
            b.map(|(visits, last_term, s)| StrongCluster {
                center: c.as_euclidean().map(<[f64]>::to_vec).unwrap_or_default(),
                spec: runs[s].label.clone(),
                visits,
                last_term,
            })
        })
        .collect();
    Ok((strong, total))
}

/// ω(x) for the semigroup, from the accumulation points of each sequence in
/// the family.
pub fn estimate_omega_g(
    g: &GeneratorSet,
    x: &PhasePoint,
    family: &[UnboundedSequenceSpec],
    params: &SemigroupParams,
) -> Result<OmegaGEstimate> {
    let runs = run_family(g, x, family, params)?;
    let (strong, total) = strong_clusters(&runs, params)?;
    let clusters = strong
        .iter()
        .map(|s| Cluster {
            center: PhasePoint::Euclidean(s.center.clone()),
            visits: s.visits,
        })
        .collect();
    let max_terms = runs.iter().map(|r| r.terms.len()).max().unwrap_or(0);
    let estimate = LimitSetEstimate {
        clusters,
        radius: params.eps,
        window: (1.0, max_terms as f64),
        samples: total,
        discarded: 0,
        unclustered: 0,
        blowup_time: None,
    };
    Ok(OmegaGEstimate { estimate, strong, runs })
}

fn near_any(p: &[f64], pts: &[Vec<f64>], r: f64) -> bool {
    pts.iter().any(|q| euclidean_distance(p, q) <= r)
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub clusters: usize,
    /// (cluster center, generator) pairs whose image found no match.
    pub violations: Vec<(Vec<f64>, usize)>,
    /// Images matched only by weak evidence in the rerun.
    pub unconfirmed: usize,
    pub outcome: CheckOutcome,
}

/// g(ω(x)) ⊆ ω(x): each strong cluster's image must land within 2ε of the
/// rerun estimate at doubled budget. Images near rerun samples that are not
/// strong clusters are unconfirmed rather than violations.
pub fn check_omega_invariance(
    g: &GeneratorSet,
    x: &PhasePoint,
    family: &[UnboundedSequenceSpec],
    params: &SemigroupParams,
) -> Result<InvarianceReport> {
    let est = estimate_omega_g(g, x, family, params)?;
    let rerun = estimate_omega_g(g, x, family, &params.doubled())?;
    let centers: Vec<Vec<f64>> = rerun.strong.iter().map(|s| s.center.clone()).collect();
    let tol = 2.0 * params.eps;
    let mut violations = Vec::new();
    let mut unconfirmed = 0;
    for c in &est.strong {
        for i in 0..g.len() {
            let image = g.apply(i, &c.center)?;
            if near_any(&image, &centers, tol) {
                continue;
            }
            let weak = rerun.runs.iter().any(|r| near_any(&image, &r.terms, tol));
            if weak {
                unconfirmed += 1;
            } else {
                violations.push((c.center.clone(), i));
            }
        }
    }
    let outcome = if !violations.is_empty() {
        CheckOutcome::Fail
    } else if unconfirmed > 0 {
        CheckOutcome::Skip
    } else {
        CheckOutcome::Pass
    };
    Ok(InvarianceReport {
        clusters: est.strong.len(),
        violations,
        unconfirmed,
        outcome,
    })
}

/// ω(x) ≠ ∅ whenever the orbit stays in a compact set. Errors if a sampled
/// term leaves `bound`; otherwise reports whether the estimate is nonempty.
pub fn check_precompact_nonempty(
    g: &GeneratorSet,
    x: &PhasePoint,
    bound: &CompactRegion,
    family: &[UnboundedSequenceSpec],
    params: &SemigroupParams,
) -> Result<bool> {
    let est = estimate_omega_g(g, x, family, params)?;
    for run in &est.runs {
        for t in &run.terms {
            let p = PhasePoint::Euclidean(t.clone());
            if !bound.contains(&p)? {
                return Err(Error::OrbitNotBounded { value: p.to_string() });
            }
        }
    }
    Ok(!est.strong.is_empty())
}

/// Clusters at radius ε must persist within 2ε when re-estimated at ε/2 with
/// doubled budget.
pub fn check_closedness(
    g: &GeneratorSet,
    x: &PhasePoint,
    family: &[UnboundedSequenceSpec],
    params: &SemigroupParams,
) -> Result<bool> {
    let coarse = estimate_omega_g(g, x, family, params)?;
    let fine_params = SemigroupParams {
        eps: params.eps / 2.0,
        ..params.doubled()
    };
    let fine = estimate_omega_g(g, x, family, &fine_params)?;
    let centers: Vec<Vec<f64>> = fine.strong.iter().map(|s| s.center.clone()).collect();
    Ok(coarse
        .strong
        .iter()
        .all(|c| near_any(&c.center, &centers, 2.0 * params.eps)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Minimality {
    Minimal,
    NotMinimal,
    /// Some g(m) is farther than ε from M, so M is not a candidate at all.
    NotInvariant,
}

/// Number of points of M whose ω-estimates are compared against M.
pub const MINIMALITY_PROBES: usize = 8;

/// M is minimal iff ω(x) = M for every x ∈ M, compared at resolution 2ε.
pub fn check_minimality(
    g: &GeneratorSet,
    m: &FiniteCompact,
    family: &[UnboundedSequenceSpec],
    params: &SemigroupParams,
) -> Result<Minimality> {
    let pts = m.points();
    for p in pts {
        for i in 0..g.len() {
            if !near_any(&g.apply(i, p)?, pts, params.eps) {
                return Ok(Minimality::NotInvariant);
            }
        }
    }
    let stride = pts.len().div_ceil(MINIMALITY_PROBES).max(1);
    let tol = 2.0 * params.eps;
    for x in pts.iter().step_by(stride) {
        let est = estimate_omega_g(g, &PhasePoint::Euclidean(x.clone()), family, params)?;
        let centers: Vec<Vec<f64>> = est.strong.iter().map(|s| s.center.clone()).collect();
        let covers = pts.iter().all(|p| near_any(p, &centers, tol));
        let inside = centers.iter().all(|c| near_any(c, pts, tol));
        if !(covers && inside) {
            return Ok(Minimality::NotMinimal);
        }
    }
    Ok(Minimality::Minimal)
}

fn recurrent_in(runs: &[SpecRun], x: &[f64], params: &SemigroupParams) -> bool {
    runs.iter().any(|run| {
        let hits: Vec<usize> = run
            .terms
            .iter()
            .enumerate()
            .filter(|(_, t)| euclidean_distance(t, x) <= params.eps)
            .map(|(k, _)| k)
            .collect();
        hits.len() >= params.min_visits && hits.last().is_some_and(|&k| late(k, run, 0.5))
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RecurrenceReport {
    pub recurrent: bool,
    /// Recurrence at g(x) for each generator; filled only for abelian sets.
    pub companions: Vec<(usize, bool)>,
    pub outcome: CheckOutcome,
}

/// x ∈ ω(x): some sequence in the family returns within ε of x repeatedly.
/// For abelian sets, recurrence must carry over to every g(x).
pub fn check_recurrence(
    g: &GeneratorSet,
    x: &PhasePoint,
    family: &[UnboundedSequenceSpec],
    params: &SemigroupParams,
) -> Result<RecurrenceReport> {
    let runs = run_family(g, x, family, params)?;
    let recurrent = recurrent_in(&runs, x.as_euclidean()?, params);
    let mut companions = Vec::new();
    let mut outcome = CheckOutcome::Pass;
    if g.is_abelian() && recurrent {
        for i in 0..g.len() {
            let gx = g.apply(i, x.as_euclidean()?)?;
            let runs = run_family(g, &PhasePoint::Euclidean(gx.clone()), family, params)?;
            let r = recurrent_in(&runs, &gx, params);
            if !r {
                outcome = CheckOutcome::Fail;
            }
            companions.push((i, r));
        }
    }
    Ok(RecurrenceReport {
        recurrent,
        companions,
        outcome,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SemigroupEscapeReport {
    pub status: EscapeStatus,
    pub per_spec: Vec<(String, EscapeStatus)>,
    /// Verdict at g(x) for each generator.
    pub companions: Vec<(usize, EscapeStatus)>,
    pub invariance: CheckOutcome,
}

fn spec_status(run: &SpecRun, levels: &[CompactRegion], params: &SemigroupParams) -> Result<EscapeStatus> {
    if run.diverged {
        return Ok(EscapeStatus::Escaping);
    }
    let mut last_in: Vec<Option<usize>> = vec![None; levels.len()];
    for (k, t) in run.terms.iter().enumerate() {
        let p = PhasePoint::Euclidean(t.clone());
        for (m, level) in levels.iter().enumerate() {
            if level.contains(&p)? {
                for slot in &mut last_in[m..] {
                    *slot = Some(k);
                }
                break;
            }
        }
    }
    let n = run.terms.len() as f64;
    let exited = last_in
        .iter()
        .all(|l| l.is_none_or(|k| (k + 1) as f64 <= params.exit_fraction * n));
    if exited {
        return Ok(EscapeStatus::Escaping);
    }
    let reach = ((levels.len() as f64 * params.witness_level_fraction).ceil() as usize).max(1);
    let witnessed = last_in[..reach.min(levels.len())]
        .iter()
        .any(|l| l.is_some_and(|k| (k + 1) as f64 >= params.witness_fraction * n));
    Ok(if witnessed {
        EscapeStatus::NonEscaping
    } else {
        EscapeStatus::Inconclusive
    })
}

fn family_status(
    g: &GeneratorSet,
    x: &PhasePoint,
    levels: &[CompactRegion],
    family: &[UnboundedSequenceSpec],
    params: &SemigroupParams,
) -> Result<(EscapeStatus, Vec<(String, EscapeStatus)>)> {
    let runs = run_family(g, x, family, params)?;
    let per_spec = runs
        .iter()
        .map(|r| Ok((r.label.clone(), spec_status(r, levels, params)?)))
        .collect::<Result<Vec<_>>>()?;
    let status = if per_spec.iter().any(|(_, s)| *s == EscapeStatus::NonEscaping) {
        EscapeStatus::NonEscaping
    } else if per_spec.iter().all(|(_, s)| *s == EscapeStatus::Escaping) {
        EscapeStatus::Escaping
    } else {
        EscapeStatus::Inconclusive
    };
    Ok((status, per_spec))
}

/// x ∈ Esc(G) when every sequence in the family leaves every level for
/// good; one sequence returning late is enough for non-escape. The verdict
/// at each g(x) must agree.
pub fn classify_escape_g(
    g: &GeneratorSet,
    x: &PhasePoint,
    exhaustion: &CompactExhaustion,
    family: &[UnboundedSequenceSpec],
    params: &SemigroupParams,
) -> Result<SemigroupEscapeReport> {
    let levels = exhaustion.levels();
    let (status, per_spec) = family_status(g, x, &levels, family, params)?;
    let mut companions = Vec::new();
    let mut parts = Vec::new();
    for i in 0..g.len() {
        let gx = PhasePoint::Euclidean(g.apply(i, x.as_euclidean()?)?);
        let (s, _) = family_status(g, &gx, &levels, family, params)?;
        companions.push((i, s));
        parts.push(match (status, s) {
            (EscapeStatus::Inconclusive, _) | (_, EscapeStatus::Inconclusive) => CheckOutcome::Skip,
            (a, b) if a == b => CheckOutcome::Pass,
            _ => CheckOutcome::Fail,
        });
    }
    Ok(SemigroupEscapeReport {
        status,
        per_spec,
        companions,
        invariance: CheckOutcome::combine(parts),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SemigroupTransportRow {
    pub point: Vec<f64>,
    pub image: Vec<f64>,
    pub omega: CheckOutcome,
    pub omega_distance: Option<f64>,
    pub omega_bound: Option<f64>,
    pub recurrence: [bool; 2],
    pub escape: [EscapeStatus; 2],
    pub outcome: CheckOutcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct SemigroupTransportReport {
    pub rows: Vec<SemigroupTransportRow>,
    pub outcome: CheckOutcome,
}

/// Tolerance on ρ∘g_i = g̃_i∘ρ, relative to the size of the value.
pub const CONJUGATION_TOLERANCE: f64 = 1e-9;

/// Transports ω-clusters, recurrence and escape along ρ : G → G̃. Clusters
/// must match within 2ε·(L + 1), L the local Lipschitz constant of ρ; the +1
/// absorbs the target side's own ε-clustering.
pub fn check_semigroup_conjugacy(
    g: &GeneratorSet,
    target: &GeneratorSet,
    rho: &Conjugacy,
    samples: &[PhasePoint],
    exhaustion: &CompactExhaustion,
    family: &[UnboundedSequenceSpec],
    params: &SemigroupParams,
) -> Result<SemigroupTransportReport> {
    if g.len() != target.len() {
        return Err(Error::param("target", "generator counts differ"));
    }
    for x in samples {
        let rx = rho.apply(x)?;
        let back = rho.apply_inverse(&rx)?;
        let r = back.distance(x)? / norm(x.as_euclidean()?).max(1.0);
        if r > CONJUGATION_TOLERANCE {
            return Err(Error::NotAConjugacy {
                residual: r,
                tolerance: CONJUGATION_TOLERANCE,
                detail: format!("inverse fails at {x}"),
            });
        }
        for i in 0..g.len() {
            let lhs = rho.apply(&PhasePoint::Euclidean(g.apply(i, x.as_euclidean()?)?))?;
            let rhs = PhasePoint::Euclidean(target.apply(i, rx.as_euclidean()?)?);
            let r = lhs.distance(&rhs)? / norm(rhs.as_euclidean()?).max(1.0);
            if r > CONJUGATION_TOLERANCE {
                return Err(Error::NotAConjugacy {
                    residual: r,
                    tolerance: CONJUGATION_TOLERANCE,
                    detail: format!("generator g{} at {x}", i + 1),
                });
            }
        }
    }
    let image_exhaustion = rho.image_exhaustion(exhaustion);
    let mut rows = Vec::new();
    for x in samples {
        let rx = rho.apply(x)?;
        let source = estimate_omega_g(g, x, family, params)?;
        let moved = estimate_omega_g(target, &rx, family, params)?;
        let centers: Vec<Vec<f64>> = moved.strong.iter().map(|s| s.center.clone()).collect();
        let mut worst: Option<f64> = None;
        let mut bound: Option<f64> = None;
        let mut omega_ok = source.strong.is_empty() == moved.strong.is_empty();
        for c in &source.strong {
            let p = PhasePoint::Euclidean(c.center.clone());
            let delta = 2.0 * params.eps * (rho.local_lipschitz(&p, 1e-6)? + 1.0);
            let image = rho.apply(&p)?;
            let d = centers
                .iter()
                .map(|q| euclidean_distance(image.as_euclidean().unwrap_or(&[]), q))
                .fold(f64::INFINITY, f64::min);
            omega_ok &= d <= delta;
            worst = Some(worst.map_or(d, |w: f64| w.max(d)));
            bound = Some(bound.map_or(delta, |b: f64| b.max(delta)));
        }
        let rec = [
            check_recurrence(g, x, family, params)?.recurrent,
            check_recurrence(target, &rx, family, params)?.recurrent,
        ];
        let esc = [
            family_status(g, x, &exhaustion.levels(), family, params)?.0,
            family_status(target, &rx, &image_exhaustion.levels(), family, params)?.0,
        ];
        let omega = if omega_ok { CheckOutcome::Pass } else { CheckOutcome::Fail };
        let escape = match esc {
            [EscapeStatus::Inconclusive, _] | [_, EscapeStatus::Inconclusive] => CheckOutcome::Skip,
            [a, b] if a == b => CheckOutcome::Pass,
            _ => CheckOutcome::Fail,
        };
        let recurrence = if rec[0] == rec[1] { CheckOutcome::Pass } else { CheckOutcome::Fail };
        rows.push(SemigroupTransportRow {
            point: x.as_euclidean()?.to_vec(),
            image: rx.as_euclidean()?.to_vec(),
            omega,
            omega_distance: worst,
            omega_bound: bound,
            recurrence: rec,
            escape: esc,
            outcome: CheckOutcome::combine([omega, recurrence, escape]),
        });
    }
    let outcome = CheckOutcome::combine(rows.iter().map(|r| r.outcome));
    Ok(SemigroupTransportReport { rows, outcome })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gens(name: &str, exprs: &[&str], abelian: bool) -> GeneratorSet {
        let maps = exprs
            .iter()
            .enumerate()
            .map(|(i, e)| MapExpr::parse(&format!("g{}", i + 1), 1, &[e]).unwrap())
            .collect();
        GeneratorSet::new(name, maps, abelian).unwrap()
    }

    fn p(v: f64) -> PhasePoint {
        PhasePoint::euclidean(vec![v]).unwrap()
    }

    fn value(q: PhasePoint) -> f64 {
        q.as_euclidean().unwrap()[0]
    }

    #[test]
    fn word_application_order() {
        let g = gens("G", &["x+1"], false);
        let w = SemigroupWord::new(vec![0, 0, 0], 1).unwrap();
        assert_eq!(value(apply_word(&g, &w, &p(0.0)).unwrap()), 3.0);

        let g = gens("G", &["2*x", "x+1"], false);
        let w = SemigroupWord::new(vec![0, 1, 0], 2).unwrap();
        assert_eq!(value(apply_word(&g, &w, &p(1.0)).unwrap()), 6.0);
        assert_eq!(w.counts(2), vec![2, 1]);
        assert_eq!(SemigroupWord::new(vec![], 2), Err(Error::EmptyWord));
    }

    #[test]
    fn word_domain_errors_carry_position() {
        let g = gens("G", &["log(x)", "x-5"], false);
        // x − 5 first, then log of a negative
        let w = SemigroupWord::new(vec![0, 1], 2).unwrap();
        match apply_word(&g, &w, &p(1.0)).unwrap_err() {
            Error::WordDomain { position, generator, .. } => assert_eq!((position, generator), (0, 0)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn breadth_first_orbit() {
        let g = gens("G", &["x+1"], false);
        let o = sample_orbit(&g, &p(0.0), 3, 100, 0).unwrap();
        let v: Vec<f64> = o.entries.iter().map(|(_, y)| y[0]).collect();
        assert_eq!(v, vec![1.0, 2.0, 3.0]);

        let g = gens("G", &["x+1", "2*x"], false);
        let o = sample_orbit(&g, &p(1.0), 2, 100, 0).unwrap();
        let got: Vec<(String, f64)> = o.entries.iter().map(|(w, y)| (w.to_string(), y[0])).collect();
        let want = [("g1", 2.0), ("g2", 2.0), ("g1∘g1", 3.0), ("g1∘g2", 3.0), ("g2∘g1", 4.0), ("g2∘g2", 4.0)];
        assert_eq!(got.len(), want.len());
        for ((w, v), (ew, ev)) in got.iter().zip(want) {
            assert_eq!((w.as_str(), *v), (ew, ev));
        }
        assert!(!o.sampled);

        let o = sample_orbit(&g, &p(1.0), 20, 50, 7).unwrap();
        assert!(o.sampled);
        assert_eq!(o.entries.len(), 50);
        let again = sample_orbit(&g, &p(1.0), 20, 50, 7).unwrap();
        assert_eq!(o.entries, again.entries);
    }

    #[test]
    fn designated_counts_are_exact() {
        let g = gens("G", &["2*x", "x+1", "x/3"], false);
        for schedule in [Schedule::Linear(1), Schedule::Linear(2), Schedule::Exponential] {
            let spec = UnboundedSequenceSpec::new(&g, 1, schedule, FillerPolicy::RandomBounded { max_len: 3, seed: 4 }).unwrap();
            for k in 1..6 {
                let w = spec.term_word(&g, k).unwrap();
                assert_eq!(w.counts(3)[1] as u64, schedule.n(k).unwrap());
                assert!(schedule.n(k).unwrap() >= k);
            }
        }
        assert!(UnboundedSequenceSpec::new(&g, 0, Schedule::Linear(1), FillerPolicy::Fixed(vec![0])).is_err());
    }

    #[test]
    fn contraction_limit_and_recurrence() {
        let g = gens("G", &["x/2"], false);
        let fam = default_family(&g, 8, 0);
        let params = SemigroupParams::default();
        let est = estimate_omega_g(&g, &p(1.0), &fam, &params).unwrap();
        assert!(!est.strong.is_empty());
        assert!(est.strong.iter().all(|c| c.center[0].abs() <= params.eps));
        assert!(check_recurrence(&g, &p(0.0), &fam, &params).unwrap().recurrent);
        assert!(!check_recurrence(&g, &p(1.0), &fam, &params).unwrap().recurrent);
        assert_eq!(check_omega_invariance(&g, &p(1.0), &fam, &params).unwrap().outcome, CheckOutcome::Pass);
        assert!(check_closedness(&g, &p(1.0), &fam, &params).unwrap());
        let bound = CompactRegion::ball(vec![0.0], 1.0).unwrap();
        assert!(check_precompact_nonempty(&g, &p(1.0), &bound, &fam, &params).unwrap());
    }

    #[test]
    fn translations_escape() {
        let g = gens("G", &["x+1", "x+2"], true);
        let fam = default_family(&g, 8, 0);
        let params = SemigroupParams::default();
        let exh = CompactExhaustion::balls(vec![0.0], 1.0, 10).unwrap();
        let r = classify_escape_g(&g, &p(0.0), &exh, &fam, &params).unwrap();
        assert_eq!(r.status, EscapeStatus::Escaping);
        assert_eq!(r.invariance, CheckOutcome::Pass);
        assert!(estimate_omega_g(&g, &p(0.0), &fam, &params).unwrap().strong.is_empty());
        let bound = CompactRegion::ball(vec![0.0], 10.0).unwrap();
        assert!(matches!(
            check_precompact_nonempty(&g, &p(0.0), &bound, &fam, &params),
            Err(Error::OrbitNotBounded { .. })
        ));
        assert!(!check_recurrence(&g, &p(0.0), &fam, &params).unwrap().recurrent);
    }

    #[test]
    fn contractions_do_not_escape() {
        let g = gens("G", &["x/2", "x/3"], true);
        let fam = default_family(&g, 8, 0);
        let exh = CompactExhaustion::balls(vec![0.0], 1.0, 10).unwrap();
        let r = classify_escape_g(&g, &p(1.0), &exh, &fam, &SemigroupParams::default()).unwrap();
        assert_eq!(r.status, EscapeStatus::NonEscaping);
        assert_eq!(r.invariance, CheckOutcome::Pass);
    }

    #[test]
    fn non_commuting_generators_rejected() {
        let maps = vec![
            MapExpr::parse("g1", 1, &["2*x"]).unwrap(),
            MapExpr::parse("g2", 1, &["x+1"]).unwrap(),
        ];
        assert!(matches!(GeneratorSet::new("G", maps, true), Err(Error::NonAbelian { .. })));
    }

    #[test]
    fn minimality_of_fixed_point_and_pair() {
        let g = gens("G", &["x/2"], false);
        let fam = default_family(&g, 8, 0);
        let params = SemigroupParams::default();
        let zero = FiniteCompact::new("M", vec![vec![0.0]]).unwrap();
        assert_eq!(check_minimality(&g, &zero, &fam, &params).unwrap(), Minimality::Minimal);
        let pair = FiniteCompact::new("M", vec![vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(check_minimality(&g, &pair, &fam, &params).unwrap(), Minimality::NotInvariant);
    }

    #[test]
    fn doubling_conjugation() {
        let g = gens("G", &["2*x"], false);
        let gt = gens("Gt", &["2*x-1"], false);
        let rho = Conjugacy::new(
            MapExpr::parse("rho", 1, &["x+1"]).unwrap(),
            MapExpr::parse("rho_inv", 1, &["x-1"]).unwrap(),
        )
        .unwrap();
        let fam = default_family(&g, 8, 0);
        let exh = CompactExhaustion::balls(vec![0.0], 1.0, 10).unwrap();
        let params = SemigroupParams::default();
        let samples = [p(0.0), p(0.5), p(-1.0)];
        let r = check_semigroup_conjugacy(&g, &gt, &rho, &samples, &exh, &fam, &params).unwrap();
        assert_eq!(r.outcome, CheckOutcome::Pass, "{r:?}");
        assert_eq!(r.rows[0].recurrence, [true, true]);
        assert_eq!(r.rows[1].escape, [EscapeStatus::Escaping, EscapeStatus::Escaping]);
        // a wrong target fails the precondition
        let wrong = gens("Gw", &["2*x+1"], false);
        assert!(matches!(
            check_semigroup_conjugacy(&g, &wrong, &rho, &samples, &exh, &fam, &params),
            Err(Error::NotAConjugacy { .. })
        ));
    }
}
