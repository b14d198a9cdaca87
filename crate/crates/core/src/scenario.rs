//! JSON scenario files: declarations of systems and semigroups, and the
//! analysis requests run against them.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "seed": 7,
//!   "systems": [{ "name": "spiral", "kind": "spiral" }],
//!   "requests": [{ "kind": "escape", "system": "spiral", "points": [[2, 0]] }]
//! }
//! ```

use std::collections::BTreeMap;

use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::escape_analysis::{
    check_conjugacy_transport, classify_escape, estimate_alpha, estimate_omega, CheckOutcome, ConjugacyParams,
    OmegaParams,
};
use crate::expr::MapExpr;
use crate::flows::{Conjugacy, Direction, FlowSystem, IntegratorSettings};
use crate::hyperspace::{check_hyperspace_escape_equivalence, EquivalenceParams, FiniteCompact};
use crate::phase_space::{BoundKind, CompactExhaustion, Growth, PhasePoint, SequenceRule, DEFAULT_HORIZON};
use crate::semigroup::{
    check_closedness, check_omega_invariance, check_recurrence, check_semigroup_conjugacy, classify_escape_g,
    default_family, GeneratorSet, SemigroupParams,
};
use crate::suites;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub systems: Vec<SystemDecl>,
    #[serde(default)]
    pub semigroups: Vec<SemigroupDecl>,
    pub requests: Vec<Request>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemDecl {
    Translation { name: String, velocity: Vec<f64> },
    Spiral { name: String },
    R3saddle {
        name: String,
        #[serde(default)]
        step: Option<f64>,
    },
    Shift { name: String },
    Map {
        name: String,
        components: Vec<String>,
        #[serde(default)]
        inverse: Option<Vec<String>>,
    },
    Ode {
        name: String,
        components: Vec<String>,
        #[serde(default)]
        step: Option<f64>,
        #[serde(default)]
        divergence_radius: Option<f64>,
    },
}

impl SystemDecl {
    pub fn name(&self) -> &str {
        match self {
            SystemDecl::Translation { name, .. }
            | SystemDecl::Spiral { name }
            | SystemDecl::R3saddle { name, .. }
            | SystemDecl::Shift { name }
            | SystemDecl::Map { name, .. }
            | SystemDecl::Ode { name, .. } => name,
        }
    }

    fn build(&self) -> Result<FlowSystem> {
        let integrator = |step: Option<f64>, radius: Option<f64>| {
            let mut s = IntegratorSettings::default();
            if let Some(h) = step {
                s.step = h;
            }
            if let Some(r) = radius {
                s.divergence_radius = r;
            }
            s.validate().map(|_| s)
        };
        match self {
            SystemDecl::Translation { velocity, .. } => FlowSystem::translation(velocity.clone()),
            SystemDecl::Spiral { .. } => Ok(FlowSystem::Spiral),
            SystemDecl::R3saddle { step, .. } => Ok(FlowSystem::R3Saddle {
                integrator: integrator(*step, None)?,
            }),
            SystemDecl::Shift { .. } => Ok(FlowSystem::Shift),
            SystemDecl::Map {
                name,
                components,
                inverse,
            } => {
                let map = parse_map(name, components)?;
                let inverse = inverse
                    .as_ref()
                    .map(|c| parse_map(&format!("{name}^-1"), c))
                    .transpose()?;
                FlowSystem::custom_map(map, inverse)
            }
            SystemDecl::Ode {
                name,
                components,
                step,
                divergence_radius,
            } => FlowSystem::custom_ode(parse_map(name, components)?, integrator(*step, *divergence_radius)?),
        }
    }
}

fn parse_map(name: &str, components: &[String]) -> Result<MapExpr> {
    let refs: Vec<&str> = components.iter().map(String::as_str).collect();
    MapExpr::parse(name, components.len(), &refs)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemigroupDecl {
    pub name: String,
    /// One component list per generator.
    pub generators: Vec<Vec<String>>,
    #[serde(default)]
    pub abelian: bool,
}

impl SemigroupDecl {
    fn build(&self) -> Result<GeneratorSet> {
        let maps = self
            .generators
            .iter()
            .enumerate()
            .map(|(i, c)| parse_map(&format!("g{}", i + 1), c))
            .collect::<Result<Vec<_>>>()?;
        GeneratorSet::new(self.name.clone(), maps, self.abelian)
    }
}

/// A point literal: coordinates, or a sequence rule for the shift.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PointSpec {
    Coords(Vec<f64>),
    Symbolic {
        rule: String,
        #[serde(default)]
        horizon: Option<u64>,
    },
}

impl PointSpec {
    fn build(&self) -> Result<PhasePoint> {
        match self {
            PointSpec::Coords(c) => PhasePoint::euclidean(c.clone()),
            PointSpec::Symbolic { rule, horizon } => {
                PhasePoint::symbolic(parse_rule(rule)?, horizon.unwrap_or(DEFAULT_HORIZON))
            }
        }
    }
}

/// `power-spikes`, `dyadic-countdown`, `identity`, `constant:N`,
/// `periodic:a,b,…` or `formula:<expression in i>`.
pub fn parse_rule(s: &str) -> Result<SequenceRule> {
    let bad = || Error::param("rule", format!("unrecognized sequence rule `{s}`"));
    let (head, arg) = match s.split_once(':') {
        Some((h, a)) => (h.trim(), Some(a.trim())),
        None => (s.trim(), None),
    };
    match (head, arg) {
        ("power-spikes", None) => Ok(SequenceRule::PowerSpikes),
        ("dyadic-countdown", None) => Ok(SequenceRule::DyadicCountdown),
        ("identity", None) => Ok(SequenceRule::Identity),
        ("constant", Some(a)) => a.parse().map(SequenceRule::Constant).map_err(|_| bad()),
        ("periodic", Some(a)) => a
            .split(',')
            .map(|v| v.trim().parse::<u64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()
            .map(SequenceRule::Periodic),
        ("formula", Some(a)) => SequenceRule::formula(a),
        _ => Err(bad()),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExhaustionSpec {
    Balls {
        center: Vec<f64>,
        step: f64,
        levels: usize,
    },
    Cubes {
        center: Vec<f64>,
        step: f64,
        levels: usize,
    },
    Cylinders {
        bound: String,
        #[serde(default = "one")]
        scale: u64,
        levels: usize,
    },
}

fn one() -> u64 {
    1
}

impl ExhaustionSpec {
    fn build(&self) -> Result<CompactExhaustion> {
        match self {
            ExhaustionSpec::Balls { center, step, levels } => CompactExhaustion::balls(center.clone(), *step, *levels),
            ExhaustionSpec::Cubes { center, step, levels } => CompactExhaustion::new(
                Growth::Cubes {
                    center: center.clone(),
                    step: *step,
                },
                *levels,
            ),
            ExhaustionSpec::Cylinders { bound, scale, levels } => {
                let kind = match bound.as_str() {
                    "constant" => BoundKind::Constant,
                    "dyadic" => BoundKind::Dyadic,
                    "linear" => BoundKind::Linear,
                    other => return Err(Error::param("bound", format!("unknown bound kind `{other}`"))),
                };
                CompactExhaustion::cylinders(kind, *scale, *levels)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionSpec {
    #[default]
    Forward,
    Backward,
}

impl From<DirectionSpec> for Direction {
    fn from(d: DirectionSpec) -> Self {
        match d {
            DirectionSpec::Forward => Direction::Forward,
            DirectionSpec::Backward => Direction::Backward,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteName {
    Duality,
    Hyperspace,
    Semigroup,
    Conjugacy,
    Hausdorff,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Request {
    Escape {
        system: String,
        points: Vec<PointSpec>,
        #[serde(default)]
        exhaustion: Option<ExhaustionSpec>,
        #[serde(default)]
        t_max: Option<f64>,
        #[serde(default)]
        dt: Option<f64>,
    },
    Omega {
        system: String,
        points: Vec<PointSpec>,
        #[serde(flatten)]
        limit: LimitSpec,
    },
    Alpha {
        system: String,
        points: Vec<PointSpec>,
        #[serde(flatten)]
        limit: LimitSpec,
    },
    Hyperspace {
        system: String,
        sets: Vec<Vec<Vec<f64>>>,
        #[serde(default)]
        direction: DirectionSpec,
        #[serde(default)]
        horizon: Option<usize>,
        #[serde(default)]
        eps: Option<f64>,
        #[serde(default)]
        min_visits: Option<usize>,
        #[serde(default)]
        t_max: Option<f64>,
        #[serde(default)]
        exhaustion: Option<ExhaustionSpec>,
    },
    Semigroup {
        semigroup: String,
        points: Vec<Vec<f64>>,
        #[serde(flatten)]
        params: SemigroupSpec,
    },
    Conjugacy {
        source: String,
        target: String,
        /// Components of h (or ρ); omitted for the identity.
        #[serde(default)]
        forward: Option<Vec<String>>,
        #[serde(default)]
        inverse: Option<Vec<String>>,
        samples: Vec<Vec<f64>>,
        #[serde(default)]
        exhaustion: Option<ExhaustionSpec>,
        #[serde(default)]
        t_max: Option<f64>,
        #[serde(default)]
        residual_times: Option<Vec<f64>>,
        #[serde(default)]
        omega_eps: Option<f64>,
        #[serde(flatten)]
        semigroup: SemigroupSpec,
    },
    PropertySuite {
        suite: SuiteName,
        #[serde(default)]
        pairs: Option<usize>,
        #[serde(flatten)]
        semigroup: SemigroupSpec,
    },
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct LimitSpec {
    #[serde(default)]
    pub t_tail: Option<f64>,
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub min_visits: Option<usize>,
    #[serde(default)]
    pub dt: Option<f64>,
    /// Samples outside the top level are discarded.
    #[serde(default)]
    pub exhaustion: Option<ExhaustionSpec>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct SemigroupSpec {
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub budget: Option<u64>,
    #[serde(default)]
    pub min_visits: Option<usize>,
    #[serde(default)]
    pub seeds: Option<u64>,
}

impl SemigroupSpec {
    fn resolve(&self) -> Result<(SemigroupParams, u64)> {
        let mut p = SemigroupParams::default();
        if let Some(e) = self.eps {
            if !(e > 0.0) {
                return Err(Error::param("eps", "must be positive"));
            }
            p.eps = e;
        }
        if let Some(b) = self.budget {
            p.budget = b;
        }
        if let Some(m) = self.min_visits {
            p.min_visits = m.max(1);
        }
        Ok((p, self.seeds.unwrap_or(8)))
    }
}

impl Request {
    pub fn kind(&self) -> &'static str {
        match self {
            Request::Escape { .. } => "escape",
            Request::Omega { .. } => "omega",
            Request::Alpha { .. } => "alpha",
            Request::Hyperspace { .. } => "hyperspace",
            Request::Semigroup { .. } => "semigroup",
            Request::Conjugacy { .. } => "conjugacy",
            Request::PropertySuite { .. } => "property-suite",
        }
    }

    /// Semigroup analyses and random suites draw from the seed.
    pub fn is_stochastic(&self) -> bool {
        matches!(
            self,
            Request::Semigroup { .. } | Request::Conjugacy { .. } | Request::PropertySuite { .. }
        )
    }

    pub fn target(&self) -> String {
        match self {
            Request::Escape { system, .. }
            | Request::Omega { system, .. }
            | Request::Alpha { system, .. }
            | Request::Hyperspace { system, .. } => system.clone(),
            Request::Semigroup { semigroup, .. } => semigroup.clone(),
            Request::Conjugacy { source, target, .. } => format!("{source}->{target}"),
            Request::PropertySuite { suite, .. } => format!("{suite:?}").to_lowercase(),
        }
    }
}

/// Parses a scenario, reporting JSON errors with line and column.
pub fn parse_scenario(text: &str) -> std::result::Result<Scenario, String> {
    let s: Scenario = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if s.schema_version != SCHEMA_VERSION {
        return Err(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            s.schema_version
        ));
    }
    Ok(s)
}

/// Tabular result of one request.
#[derive(Debug, Clone)]
pub struct Report {
    pub name: String,
    pub params: Value,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub tally: Tally,
}

/// Outcome counts of the checks in a report.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub pass: usize,
    pub fail: usize,
    pub skip: usize,
}

impl Tally {
    fn add(&mut self, o: CheckOutcome) {
        match o {
            CheckOutcome::Pass => self.pass += 1,
            CheckOutcome::Fail => self.fail += 1,
            CheckOutcome::Skip => self.skip += 1,
        }
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn coords(c: &[f64]) -> String {
    c.iter().map(|v| num(*v)).collect::<Vec<_>>().join(" ")
}

fn point_label(p: &PhasePoint) -> String {
    match p {
        PhasePoint::Euclidean(c) => coords(c),
        PhasePoint::Symbolic(s) => s.label(),
    }
}

/// A scenario with every name resolved.
pub struct Resolved {
    systems: BTreeMap<String, FlowSystem>,
    semigroups: BTreeMap<String, GeneratorSet>,
    pub seed: Option<u64>,
}

impl Resolved {
    /// Builds every declaration and checks that requests only name declared
    /// systems. A seed is required once any request is stochastic.
    pub fn new(s: &Scenario, seed_override: Option<u64>) -> Result<Self> {
        let mut systems = BTreeMap::new();
        for d in &s.systems {
            if systems.insert(d.name().to_string(), d.build()?).is_some() {
                return Err(Error::param("systems", format!("`{}` declared twice", d.name())));
            }
        }
        let mut semigroups = BTreeMap::new();
        for d in &s.semigroups {
            if semigroups.insert(d.name.clone(), d.build()?).is_some() {
                return Err(Error::param("semigroups", format!("`{}` declared twice", d.name)));
            }
        }
        let r = Resolved {
            systems,
            semigroups,
            seed: seed_override.or(s.seed),
        };
        for (i, req) in s.requests.iter().enumerate() {
            r.check_names(req)
                .map_err(|e| Error::param(&format!("requests[{i}]"), e.to_string()))?;
            if req.is_stochastic() && r.seed.is_none() {
                return Err(Error::param(
                    &format!("requests[{i}]"),
                    "a seed is required (scenario `seed` or --seed)",
                ));
            }
        }
        Ok(r)
    }

    fn check_names(&self, req: &Request) -> Result<()> {
        match req {
            Request::Escape { system, .. }
            | Request::Omega { system, .. }
            | Request::Alpha { system, .. }
            | Request::Hyperspace { system, .. } => self.system(system).map(|_| ()),
            Request::Semigroup { semigroup, .. } => self.semigroup(semigroup).map(|_| ()),
            Request::Conjugacy { source, target, .. } => {
                if self.systems.contains_key(source) {
                    self.system(target).map(|_| ())
                } else {
                    self.semigroup(source)?;
                    self.semigroup(target).map(|_| ())
                }
            }
            Request::PropertySuite { .. } => Ok(()),
        }
    }

    fn system(&self, name: &str) -> Result<&FlowSystem> {
        self.systems
            .get(name)
            .ok_or_else(|| Error::param("system", format!("`{name}` is not declared")))
    }

    fn semigroup(&self, name: &str) -> Result<&GeneratorSet> {
        self.semigroups
            .get(name)
            .ok_or_else(|| Error::param("semigroup", format!("`{name}` is not declared")))
    }

    pub fn system_names(&self) -> impl Iterator<Item = (&String, &FlowSystem)> {
        self.systems.iter()
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Runs request number `index`.
    pub fn run(&self, index: usize, req: &Request) -> Result<Report> {
        let name = format!("{:02}-{}-{}", index + 1, req.kind(), slug(&req.target()));
        match req {
            Request::Escape {
                system,
                points,
                exhaustion,
                t_max,
                dt,
            } => self.run_escape(name, system, points, exhaustion.as_ref(), *t_max, *dt),
            Request::Omega { system, points, limit } => self.run_limit(name, system, points, limit, Direction::Forward),
            Request::Alpha { system, points, limit } => self.run_limit(name, system, points, limit, Direction::Backward),
            Request::Hyperspace {
                system,
                sets,
                direction,
                horizon,
                eps,
                min_visits,
                t_max,
                exhaustion,
            } => {
                let sys = self.system(system)?;
                let mut params =
                    EquivalenceParams::new(exhaustion_for(sys, exhaustion.as_ref())?, (*direction).into());
                params.escape = suites::default_escape(sys);
                if let Some(t) = t_max {
                    params.escape.t_max = *t;
                }
                if let Some(h) = horizon {
                    params.horizon = *h;
                }
                if let Some(e) = eps {
                    params.eps = *e;
                }
                if let Some(m) = min_visits {
                    params.min_visits = *m;
                }
                let mut rows = Vec::new();
                let mut tally = Tally::default();
                for (i, pts) in sets.iter().enumerate() {
                    let set = FiniteCompact::new(format!("set{}", i + 1), pts.clone())?;
                    let r = check_hyperspace_escape_equivalence(sys, &set, &params)?;
                    tally.add(r.outcome);
                    rows.push(vec![
                        set.label().to_string(),
                        set.points().iter().map(|p| coords(p)).collect::<Vec<_>>().join("; "),
                        r.p1.to_string(),
                        r.p3.to_string(),
                        r.p4.to_string(),
                        r.containment_escape.to_string(),
                        r.clusters.to_string(),
                        r.outcome.to_string(),
                    ]);
                }
                Ok(Report {
                    name,
                    params: json!({
                        "system": system,
                        "description": sys.describe(),
                        "direction": params.direction.name(),
                        "exhaustion": params.exhaustion.describe(),
                        "t_max": params.escape.t_max,
                        "horizon": params.horizon,
                        "eps": params.eps,
                        "min_visits": params.min_visits,
                        "exit_fraction": params.escape.exit_fraction,
                        "witness_fraction": params.escape.witness_fraction,
                    }),
                    columns: vec!["set", "points", "p1_pointwise", "p3_omega_empty", "p4_set_escapes", "containment_escape", "clusters", "outcome"],
                    rows,
                    tally,
                })
            }
            Request::Semigroup {
                semigroup,
                points,
                params,
            } => {
                let g = self.semigroup(semigroup)?;
                let (params, seeds) = params.resolve()?;
                let family = default_family(g, seeds, self.seed());
                let exh = CompactExhaustion::balls(vec![0.0; g.dim()], 1.0, 10)?;
                let mut rows = Vec::new();
                let mut tally = Tally::default();
                for c in points {
                    let x = PhasePoint::euclidean(c.clone())?;
                    let inv = check_omega_invariance(g, &x, &family, &params)?;
                    let rec = check_recurrence(g, &x, &family, &params)?;
                    let esc = classify_escape_g(g, &x, &exh, &family, &params)?;
                    let closed = check_closedness(g, &x, &family, &params)?;
                    let closed_outcome = if closed { CheckOutcome::Pass } else { CheckOutcome::Fail };
                    let rec_outcome = if g.is_abelian() { rec.outcome } else { CheckOutcome::Skip };
                    for o in [inv.outcome, rec_outcome, esc.invariance, closed_outcome] {
                        tally.add(o);
                    }
                    rows.push(vec![
                        coords(c),
                        inv.clusters.to_string(),
                        inv.outcome.to_string(),
                        closed_outcome.to_string(),
                        rec.recurrent.to_string(),
                        rec_outcome.to_string(),
                        esc.status.to_string(),
                        esc.invariance.to_string(),
                    ]);
                }
                Ok(Report {
                    name,
                    params: json!({
                        "semigroup": semigroup,
                        "generators": g.describe(),
                        "eps": params.eps,
                        "budget": params.budget,
                        "min_visits": params.min_visits,
                        "escape_radius": params.escape_radius,
                        "exhaustion": exh.describe(),
                        "seed": self.seed(),
                        "family": family.iter().map(|s| s.label()).collect::<Vec<_>>(),
                    }),
                    columns: vec!["point", "omega_clusters", "omega_invariance", "closedness", "recurrent", "recurrence_invariance", "escape", "escape_invariance"],
                    rows,
                    tally,
                })
            }
            Request::Conjugacy {
                source,
                target,
                forward,
                inverse,
                samples,
                exhaustion,
                t_max,
                residual_times,
                omega_eps,
                semigroup,
            } => {
                let h = match (forward, inverse) {
                    (None, None) => Conjugacy::Identity,
                    (Some(f), Some(i)) => Conjugacy::new(parse_map("h", f)?, parse_map("h^-1", i)?)?,
                    _ => return Err(Error::param("inverse", "give both forward and inverse, or neither")),
                };
                let pts = samples
                    .iter()
                    .map(|c| PhasePoint::euclidean(c.clone()))
                    .collect::<Result<Vec<_>>>()?;
                if let Ok(a) = self.system(source) {
                    let b = self.system(target)?;
                    let mut cp = ConjugacyParams::new(exhaustion_for(a, exhaustion.as_ref())?, suites::default_escape(a));
                    if let Some(t) = t_max {
                        cp.escape.t_max = *t;
                    }
                    if let Some(r) = residual_times {
                        cp.residual_times = r.clone();
                    }
                    if let Some(eps) = omega_eps {
                        cp.omega = Some(OmegaParams {
                            t_tail: cp.escape.exit_fraction * cp.escape.t_max,
                            t_max: cp.escape.t_max,
                            eps: *eps,
                            ..Default::default()
                        });
                    }
                    let r = check_conjugacy_transport(a, b, &h, &pts, &cp)?;
                    let mut tally = Tally::default();
                    let rows = r
                        .rows
                        .iter()
                        .map(|row| {
                            tally.add(row.outcome);
                            vec![
                                row.point.clone(),
                                row.image.clone(),
                                format!("{}/{}", row.source[0], row.source[1]),
                                format!("{}/{}", row.target[0], row.target[1]),
                                opt(row.omega_distance),
                                opt(row.omega_bound),
                                row.outcome.to_string(),
                            ]
                        })
                        .collect();
                    Ok(Report {
                        name,
                        params: json!({
                            "source": a.describe(),
                            "target": b.describe(),
                            "conjugacy": h.describe(),
                            "exhaustion": cp.exhaustion.describe(),
                            "t_max": cp.escape.t_max,
                            "residual_times": cp.residual_times,
                            "inverse_tolerance": cp.inverse_tolerance,
                            "residual_tolerance": cp.residual_tolerance,
                            "omega_eps": omega_eps,
                        }),
                        columns: vec!["point", "image", "source_fwd/bwd", "target_fwd/bwd", "omega_distance", "omega_bound", "outcome"],
                        rows,
                        tally,
                    })
                } else {
                    let g = self.semigroup(source)?;
                    let gt = self.semigroup(target)?;
                    let (params, seeds) = semigroup.resolve()?;
                    let family = default_family(g, seeds, self.seed());
                    let exh = match exhaustion {
                        Some(e) => e.build()?,
                        None => CompactExhaustion::balls(vec![0.0; g.dim()], 1.0, 10)?,
                    };
                    let r = check_semigroup_conjugacy(g, gt, &h, &pts, &exh, &family, &params)?;
                    let mut tally = Tally::default();
                    let rows = r
                        .rows
                        .iter()
                        .map(|row| {
                            tally.add(row.outcome);
                            vec![
                                coords(&row.point),
                                coords(&row.image),
                                row.omega.to_string(),
                                opt(row.omega_distance),
                                opt(row.omega_bound),
                                format!("{}/{}", row.recurrence[0], row.recurrence[1]),
                                format!("{}/{}", row.escape[0], row.escape[1]),
                                row.outcome.to_string(),
                            ]
                        })
                        .collect();
                    Ok(Report {
                        name,
                        params: json!({
                            "source": g.describe(),
                            "target": gt.describe(),
                            "conjugacy": h.describe(),
                            "exhaustion": exh.describe(),
                            "eps": params.eps,
                            "budget": params.budget,
                            "min_visits": params.min_visits,
                            "seed": self.seed(),
                            "family": family.iter().map(|s| s.label()).collect::<Vec<_>>(),
                        }),
                        columns: vec!["point", "image", "omega", "omega_distance", "omega_bound", "recurrent_src/tgt", "escape_src/tgt", "outcome"],
                        rows,
                        tally,
                    })
                }
            }
            Request::PropertySuite { suite, pairs, semigroup } => self.run_suite(name, *suite, *pairs, semigroup),
        }
    }

    fn run_escape(
        &self,
        name: String,
        system: &str,
        points: &[PointSpec],
        exhaustion: Option<&ExhaustionSpec>,
        t_max: Option<f64>,
        dt: Option<f64>,
    ) -> Result<Report> {
        let sys = self.system(system)?;
        let exh = exhaustion_for(sys, exhaustion)?;
        let mut params = suites::default_escape(sys);
        if let Some(t) = t_max {
            params.t_max = t;
        }
        params.dt = dt;
        let mut rows = Vec::new();
        for spec in points {
            let p = spec.build()?;
            let v = classify_escape(sys, &p, &exh, &params)?;
            for d in std::iter::once(&v.forward).chain(v.backward.as_ref()) {
                let exits: Vec<String> = d.levels.iter().map(|l| opt(l.exit_time)).collect();
                rows.push(vec![
                    point_label(&p),
                    d.direction.name().to_string(),
                    d.status.to_string(),
                    opt(d.blowup_time),
                    d.witness.map(|w| w.0.to_string()).unwrap_or_default(),
                    opt(d.witness.map(|w| w.1)),
                    exits.join(" "),
                    d.subsequence
                        .as_ref()
                        .map(|c| c.links.iter().map(u64::to_string).collect::<Vec<_>>().join(" "))
                        .unwrap_or_default(),
                    d.samples.to_string(),
                ]);
            }
        }
        Ok(Report {
            name,
            params: json!({
                "system": system,
                "description": sys.describe(),
                "exhaustion": exh.describe(),
                "t_max": params.t_max,
                "dt": params.dt,
                "exit_fraction": params.exit_fraction,
                "witness_fraction": params.witness_fraction,
                "witness_level_fraction": params.witness_level_fraction,
                "agreement_cap": params.agreement_cap,
                "min_agreement": params.min_agreement,
            }),
            columns: vec!["point", "direction", "status", "blowup_time", "witness_level", "witness_time", "exit_times", "subsequence_links", "samples"],
            rows,
            tally: Tally::default(),
        })
    }

    fn run_limit(&self, name: String, system: &str, points: &[PointSpec], spec: &LimitSpec, direction: Direction) -> Result<Report> {
        let sys = self.system(system)?;
        let exh = exhaustion_for(sys, spec.exhaustion.as_ref())?;
        let escape = suites::default_escape(sys);
        let t_max = spec.t_max.unwrap_or(escape.t_max);
        let params = OmegaParams {
            t_tail: spec.t_tail.unwrap_or(escape.exit_fraction * t_max),
            t_max,
            eps: spec.eps.unwrap_or(1e-3),
            dt: spec.dt,
            min_visits: spec.min_visits.unwrap_or(1),
            bound: None,
        }
        .bounded_by(&exh);
        let mut rows = Vec::new();
        for ps in points {
            let p = ps.build()?;
            let est = match direction {
                Direction::Forward => estimate_omega(sys, &p, &params)?,
                Direction::Backward => estimate_alpha(sys, &p, &params)?,
            };
            if est.is_empty() {
                rows.push(vec![point_label(&p), String::new(), String::new(), opt(est.blowup_time), est.samples.to_string()]);
            }
            for c in &est.clusters {
                rows.push(vec![
                    point_label(&p),
                    point_label(&c.center),
                    c.visits.to_string(),
                    opt(est.blowup_time),
                    est.samples.to_string(),
                ]);
            }
        }
        Ok(Report {
            name,
            params: json!({
                "system": system,
                "description": sys.describe(),
                "direction": direction.name(),
                "t_tail": params.t_tail,
                "t_max": params.t_max,
                "eps": params.eps,
                "dt": params.dt,
                "min_visits": params.min_visits,
                "bound": exh.describe(),
            }),
            columns: vec!["point", "cluster", "visits", "blowup_time", "samples"],
            rows,
            tally: Tally::default(),
        })
    }

    fn run_suite(&self, name: String, suite: SuiteName, pairs: Option<usize>, spec: &SemigroupSpec) -> Result<Report> {
        let seed = self.seed();
        let mut tally = Tally::default();
        let (columns, rows, params): (Vec<&'static str>, Vec<Vec<String>>, Value) = match suite {
            SuiteName::Duality => {
                let rows = suites::run_duality_suite(&suites::duality_corpus()?)?;
                let rows = rows
                    .into_iter()
                    .map(|r| {
                        tally.add(r.outcome);
                        vec![
                            r.label,
                            r.forward.to_string(),
                            r.backward.map(|b| b.to_string()).unwrap_or_default(),
                            r.forward_clusters.to_string(),
                            r.backward_clusters.map(|c| c.to_string()).unwrap_or_default(),
                            r.outcome.to_string(),
                        ]
                    })
                    .collect();
                (
                    vec!["case", "forward", "backward", "omega_clusters", "alpha_clusters", "outcome"],
                    rows,
                    json!({"suite": "duality", "corpus": "built-in", "omega_eps": 1e-3, "shift_horizon": suites::SHIFT_HORIZON}),
                )
            }
            SuiteName::Hyperspace => {
                let rows = suites::run_hyperspace_suite(&suites::hyperspace_corpus()?)?;
                let rows = rows
                    .into_iter()
                    .map(|r| {
                        tally.add(r.outcome);
                        vec![
                            r.label,
                            r.direction.name().to_string(),
                            format!("{:?}", r.kind).to_lowercase(),
                            r.p1.to_string(),
                            r.p3.to_string(),
                            r.p4.to_string(),
                            r.containment_escape.to_string(),
                            r.outcome.to_string(),
                        ]
                    })
                    .collect();
                (
                    vec!["set", "direction", "kind", "p1_pointwise", "p3_omega_empty", "p4_set_escapes", "containment_escape", "outcome"],
                    rows,
                    json!({"suite": "hyperspace", "corpus": "built-in", "horizon": 2000, "eps": 0.05, "min_visits": 10}),
                )
            }
            SuiteName::Semigroup => {
                let (params, _) = SemigroupSpec {
                    eps: spec.eps.or(Some(1e-2)),
                    ..spec.clone()
                }
                .resolve()?;
                let rows = suites::run_semigroup_suite(&suites::semigroup_corpus()?, &params, seed)?;
                let rows = rows
                    .into_iter()
                    .map(|r| {
                        tally.add(r.outcome());
                        vec![
                            r.semigroup.clone(),
                            coords(&r.point),
                            r.omega_clusters.to_string(),
                            r.omega_invariance.to_string(),
                            r.recurrent.to_string(),
                            r.recurrence_invariance.to_string(),
                            r.escape.to_string(),
                            r.escape_invariance.to_string(),
                        ]
                    })
                    .collect();
                (
                    vec!["semigroup", "point", "omega_clusters", "omega_invariance", "recurrent", "recurrence_invariance", "escape", "escape_invariance"],
                    rows,
                    json!({"suite": "semigroup", "eps": params.eps, "budget": params.budget, "min_visits": params.min_visits, "seed": seed}),
                )
            }
            SuiteName::Conjugacy => {
                let (params, _) = spec.resolve()?;
                let rows = suites::run_conjugacy_suite(&params, seed)?;
                let rows = rows
                    .into_iter()
                    .map(|r| {
                        tally.add(r.outcome);
                        vec![r.label, r.samples.to_string(), r.outcome.to_string()]
                    })
                    .collect();
                (
                    vec!["conjugacy", "samples", "outcome"],
                    rows,
                    json!({"suite": "conjugacy", "eps": params.eps, "budget": params.budget, "seed": seed}),
                )
            }
            SuiteName::Hausdorff => {
                let n = pairs.unwrap_or(1000);
                let s = suites::run_hausdorff_suite(n, seed)?;
                tally.add(s.outcome());
                (
                    vec!["pairs", "identity_failures", "symmetry_failures", "triangle_failures", "outcome"],
                    vec![vec![
                        s.pairs.to_string(),
                        s.identity_failures.to_string(),
                        s.symmetry_failures.to_string(),
                        s.triangle_failures.to_string(),
                        s.outcome().to_string(),
                    ]],
                    json!({"suite": "hausdorff", "pairs": n, "max_set_size": 8, "coordinate_range": [-10.0, 10.0], "seed": seed}),
                )
            }
        };
        Ok(Report {
            name,
            params,
            columns,
            rows,
            tally,
        })
    }
}

fn exhaustion_for(sys: &FlowSystem, spec: Option<&ExhaustionSpec>) -> Result<CompactExhaustion> {
    match spec {
        Some(s) => s.build(),
        None => suites::default_exhaustion(sys),
    }
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_errors_carry_position() {
        let err = parse_scenario("{\n  \"schema_version\": 1,\n  \"requests\": [ }").unwrap_err();
        assert!(err.contains("line 3 column"), "{err}");
        let err = parse_scenario(r#"{"schema_version": 2, "requests": []}"#).unwrap_err();
        assert!(err.contains("schema_version"));
    }

    #[test]
    fn undeclared_system_is_rejected() {
        let s = parse_scenario(
            r#"{"schema_version": 1, "requests": [{"kind": "escape", "system": "nope", "points": [[0, 0]]}]}"#,
        )
        .unwrap();
        let err = Resolved::new(&s, None).err().unwrap();
        assert!(err.to_string().contains("`nope`"), "{err}");
    }

    #[test]
    fn stochastic_requests_need_a_seed() {
        let s = parse_scenario(
            r#"{"schema_version": 1, "requests": [{"kind": "property-suite", "suite": "hausdorff", "pairs": 5}]}"#,
        )
        .unwrap();
        assert!(Resolved::new(&s, None).is_err());
        assert!(Resolved::new(&s, Some(3)).is_ok());
    }

    #[test]
    fn rules_and_points() {
        assert_eq!(parse_rule("constant:3").unwrap(), SequenceRule::Constant(3));
        assert_eq!(parse_rule("periodic:1,2").unwrap(), SequenceRule::Periodic(vec![1, 2]));
        assert!(parse_rule("spikes").is_err());
        let p: PointSpec = serde_json::from_str(r#"{"rule": "power-spikes", "horizon": 64}"#).unwrap();
        assert_eq!(p.build().unwrap().as_symbolic().unwrap().horizon(), 64);
    }

    #[test]
    fn escape_request_runs() {
        let s = parse_scenario(
            r#"{"schema_version": 1,
                "systems": [{"name": "s", "kind": "spiral"}],
                "requests": [{"kind": "escape", "system": "s", "points": [[2, 0]]}]}"#,
        )
        .unwrap();
        let r = Resolved::new(&s, None).unwrap();
        let report = r.run(0, &s.requests[0]).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.rows[0][2], "non-escaping");
        assert_eq!(report.rows[1][2], "escaping");
    }
}
