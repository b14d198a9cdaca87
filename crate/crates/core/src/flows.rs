//! Concrete dynamical systems and their time evaluation.
//!
//! Closed-form systems (translation, planar spiral, left shift) are evaluated
//! directly; vector fields are integrated with fixed-step RK4.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::MapExpr;
use crate::phase_space::{CompactExhaustion, PhasePoint, SequenceRule, DEFAULT_HORIZON};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeValue {
    Discrete(i64),
    Continuous(f64),
}

impl TimeValue {
    pub fn as_f64(self) -> f64 {
        match self {
            TimeValue::Discrete(n) => n as f64,
            TimeValue::Continuous(t) => t,
        }
    }

    pub fn is_negative(self) -> bool {
        self.as_f64() < 0.0
    }
}

impl fmt::Display for TimeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeValue::Discrete(n) => write!(f, "{n}"),
            TimeValue::Continuous(t) => write!(f, "{t}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeKind {
    Discrete,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

/// Fixed-step RK4 settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSettings {
    pub step: f64,
    pub max_steps: u64,
    /// Norm beyond which a trajectory is reported as diverged.
    pub divergence_radius: f64,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        IntegratorSettings {
            step: 1e-3,
            max_steps: 100_000_000,
            divergence_radius: 1e6,
        }
    }
}

impl IntegratorSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::param("step", "must be positive"));
        }
        if !(self.divergence_radius > 0.0) {
            return Err(Error::param("divergence_radius", "must be positive"));
        }
        if self.max_steps == 0 {
            return Err(Error::param("max_steps", "must be positive"));
        }
        Ok(())
    }
}

/// Norm beyond which iterates of a custom map count as diverged.
pub const MAP_DIVERGENCE_RADIUS: f64 = 1e100;

#[derive(Debug, Clone)]
pub enum FlowSystem {
    /// Φ(x,t) = x + ct on ℝⁿ.
    Translation { velocity: Vec<f64> },
    /// ṙ = r(1 − r²), θ̇ = −1 on ℝ², evaluated in closed form.
    Spiral,
    /// The ℝ³ field whose escaping set is the z-axis.
    R3Saddle { integrator: IntegratorSettings },
    /// Left shift on ℕ^ℕ.
    Shift,
    CustomMap {
        map: Arc<MapExpr>,
        inverse: Option<Arc<MapExpr>>,
    },
    CustomOde {
        field: Arc<MapExpr>,
        integrator: IntegratorSettings,
    },
}

impl FlowSystem {
    pub fn translation(velocity: impl Into<Vec<f64>>) -> Result<Self> {
        let velocity = velocity.into();
        if velocity.is_empty() || velocity.iter().any(|c| !c.is_finite()) {
            return Err(Error::param("velocity", "must be a finite nonempty vector"));
        }
        Ok(FlowSystem::Translation { velocity })
    }

    pub fn r3saddle() -> Self {
        FlowSystem::R3Saddle {
            integrator: IntegratorSettings::default(),
        }
    }

    pub fn custom_map(map: MapExpr, inverse: Option<MapExpr>) -> Result<Self> {
        if let Some(inv) = &inverse {
            if inv.dim() != map.dim() {
                return Err(Error::param("inverse", "dimension differs from map"));
            }
        }
        Ok(FlowSystem::CustomMap {
            map: Arc::new(map),
            inverse: inverse.map(Arc::new),
        })
    }

    pub fn custom_ode(field: MapExpr, integrator: IntegratorSettings) -> Result<Self> {
        integrator.validate()?;
        Ok(FlowSystem::CustomOde {
            field: Arc::new(field),
            integrator,
        })
    }

    pub fn name(&self) -> String {
        match self {
            FlowSystem::Translation { .. } => "translation".into(),
            FlowSystem::Spiral => "spiral".into(),
            FlowSystem::R3Saddle { .. } => "r3saddle".into(),
            FlowSystem::Shift => "shift".into(),
            FlowSystem::CustomMap { map, .. } => format!("custom_map:{}", map.name()),
            FlowSystem::CustomOde { field, .. } => format!("custom_ode:{}", field.name()),
        }
    }

    pub fn time_kind(&self) -> TimeKind {
        match self {
            FlowSystem::Shift | FlowSystem::CustomMap { .. } => TimeKind::Discrete,
            _ => TimeKind::Continuous,
        }
    }

    pub fn is_invertible(&self) -> bool {
        match self {
            FlowSystem::Shift => false,
            FlowSystem::CustomMap { inverse, .. } => inverse.is_some(),
            _ => true,
        }
    }

    /// Systems whose evaluation at any time costs O(1) from the initial point.
    pub fn has_closed_form(&self) -> bool {
        matches!(
            self,
            FlowSystem::Translation { .. } | FlowSystem::Spiral | FlowSystem::Shift
        )
    }

    /// Dimension of the euclidean phase space, `None` for the shift.
    pub fn dim(&self) -> Option<usize> {
        match self {
            FlowSystem::Translation { velocity } => Some(velocity.len()),
            FlowSystem::Spiral => Some(2),
            FlowSystem::R3Saddle { .. } => Some(3),
            FlowSystem::Shift => None,
            FlowSystem::CustomMap { map, .. } => Some(map.dim()),
            FlowSystem::CustomOde { field, .. } => Some(field.dim()),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            FlowSystem::Translation { velocity } => format!("translation(c={velocity:?})"),
            FlowSystem::Spiral => "spiral(closed form)".into(),
            FlowSystem::R3Saddle { integrator } => format!("r3saddle({})", describe_integrator(integrator)),
            FlowSystem::Shift => "shift".into(),
            FlowSystem::CustomMap { map, inverse } => match inverse {
                Some(inv) => format!("custom_map({map}; inverse {inv})"),
                None => format!("custom_map({map})"),
            },
            FlowSystem::CustomOde { field, integrator } => {
                format!("custom_ode({field}; {})", describe_integrator(integrator))
            }
        }
    }

    fn check_point(&self, x: &PhasePoint) -> Result<()> {
        match (self.dim(), x) {
            (None, PhasePoint::Symbolic(_)) => Ok(()),
            (Some(d), PhasePoint::Euclidean(c)) if c.len() == d => Ok(()),
            (Some(d), _) => Err(Error::VariantMismatch(format!(
                "{} acts on ℝ^{d}, got {}",
                self.name(),
                x.label()
            ))),
            (None, _) => Err(Error::VariantMismatch(format!(
                "shift acts on symbolic points, got {}",
                x.label()
            ))),
        }
    }

    fn discrete_steps(&self, t: TimeValue) -> Result<i64> {
        match t {
            TimeValue::Discrete(n) => Ok(n),
            TimeValue::Continuous(v) if v.fract() == 0.0 && v.abs() < i64::MAX as f64 => Ok(v as i64),
            TimeValue::Continuous(v) => Err(Error::InvalidTime(format!(
                "{v} (discrete system {})",
                self.name()
            ))),
        }
    }

    /// Φ(x, t).
    pub fn evaluate(&self, x: &PhasePoint, t: TimeValue) -> Result<PhasePoint> {
        self.check_point(x)?;
        if t.is_negative() && !self.is_invertible() {
            return Err(Error::NonInvertible);
        }
        if !t.as_f64().is_finite() {
            return Err(Error::InvalidTime(t.to_string()));
        }
        match self {
            FlowSystem::Translation { velocity } => {
                let x = x.as_euclidean()?;
                let t = t.as_f64();
                Ok(PhasePoint::Euclidean(
                    x.iter().zip(velocity).map(|(xi, ci)| xi + ci * t).collect(),
                ))
            }
            FlowSystem::Spiral => spiral(x.as_euclidean()?, t.as_f64()).map(PhasePoint::Euclidean),
            FlowSystem::R3Saddle { integrator } => {
                let y = integrate(r3saddle_field, x.as_euclidean()?, t.as_f64(), integrator, "r3saddle")?;
                Ok(PhasePoint::Euclidean(y))
            }
            FlowSystem::CustomOde { field, integrator } => {
                let f = |p: &[f64], out: &mut [f64]| field.apply_into(p, out);
                let y = integrate(f, x.as_euclidean()?, t.as_f64(), integrator, field.name())?;
                Ok(PhasePoint::Euclidean(y))
            }
            FlowSystem::Shift => {
                let n = self.discrete_steps(t)?;
                Ok(PhasePoint::Symbolic(x.as_symbolic()?.shifted(n as u64)?))
            }
            FlowSystem::CustomMap { map, inverse } => {
                let n = self.discrete_steps(t)?;
                let m = if n >= 0 {
                    map
                } else {
                    inverse.as_ref().ok_or(Error::NonInvertible)?
                };
                iterate_map(m, x.as_euclidean()?, n.unsigned_abs(), n.signum() as f64)
                    .map(PhasePoint::Euclidean)
            }
        }
    }

    /// Visits the orbit at times `k·dt·sign` for k = 0..=steps, stopping at a
    /// blowup. Returns the signed blowup time if the orbit diverged.
    pub fn walk(
        &self,
        x: &PhasePoint,
        dt: f64,
        steps: usize,
        direction: Direction,
        mut visit: impl FnMut(usize, f64, &PhasePoint) -> Result<()>,
    ) -> Result<Option<f64>> {
        if !(dt > 0.0) {
            return Err(Error::param("dt", "must be positive"));
        }
        if direction == Direction::Backward && !self.is_invertible() {
            return Err(Error::NonInvertible);
        }
        if self.time_kind() == TimeKind::Discrete && dt.fract() != 0.0 {
            return Err(Error::param("dt", "discrete systems are sampled at integer steps"));
        }
        let sign = direction.sign();
        let time_of = |k: usize| -> TimeValue {
            match self.time_kind() {
                TimeKind::Discrete => TimeValue::Discrete((sign * k as f64 * dt) as i64),
                TimeKind::Continuous => TimeValue::Continuous(sign * k as f64 * dt),
            }
        };
        let step = time_of(1);
        let mut current = x.clone();
        visit(0, 0.0, &current)?;
        for k in 1..=steps {
            let next = if self.has_closed_form() {
                self.evaluate(x, time_of(k))
            } else {
                // Blowup times from a restarted step are local; shift them.
                self.evaluate(&current, step).map_err(|e| match e {
                    Error::Diverged { blowup_time } => Error::Diverged {
                        blowup_time: time_of(k - 1).as_f64() + blowup_time,
                    },
                    other => other,
                })
            };
            match next {
                Ok(p) => {
                    current = p;
                    visit(k, time_of(k).as_f64(), &current)?;
                }
                Err(Error::Diverged { blowup_time }) => return Ok(Some(blowup_time)),
                Err(e) => return Err(e),
            }
        }
        Ok(None)
    }
}

fn describe_integrator(s: &IntegratorSettings) -> String {
    format!(
        "rk4 h={}, max_steps={}, R_div={}",
        s.step, s.max_steps, s.divergence_radius
    )
}

/// Blowup time of the spiral's backward radius for r0 > 1.
pub fn spiral_blowup_time(r0: f64) -> Option<f64> {
    (r0 > 1.0).then(|| 0.5 * (-1.0 / (r0 * r0)).ln_1p())
}

/// Closed-form radius r(t) = e^t r0 / √(r0²(e^{2t} − 1) + 1).
pub fn spiral_radius(r0: f64, t: f64) -> Result<f64> {
    if r0 == 0.0 || r0 == 1.0 {
        return Ok(r0);
    }
    // Same expression divided through by e^t, which keeps large |t| finite.
    let q = r0 * r0 + (1.0 - r0 * r0) * (-2.0 * t).exp();
    if !(q > 0.0) {
        return Err(Error::Diverged {
            blowup_time: spiral_blowup_time(r0).unwrap_or(t),
        });
    }
    Ok(r0 / q.sqrt())
}

fn spiral(x: &[f64], t: f64) -> Result<Vec<f64>> {
    let r0 = x[0].hypot(x[1]);
    let theta = x[1].atan2(x[0]) - t;
    let r = spiral_radius(r0, t)?;
    Ok(vec![r * theta.cos(), r * theta.sin()])
}

/// Polar angle in (−π, π].
pub fn polar_angle(x: &[f64]) -> f64 {
    let a = x[1].atan2(x[0]);
    if a <= -PI {
        a + 2.0 * PI
    } else {
        a
    }
}

fn r3saddle_field(p: &[f64], out: &mut [f64]) -> bool {
    let (x, y, z) = (p[0], p[1], p[2]);
    let d = x * x + y * y + z * z + 1.0;
    out[0] = 2.0 * x * z / d - y;
    out[1] = 2.0 * y * z / d + x;
    out[2] = (z * z - x * x - y * y + 1.0) / d;
    out.iter().all(|v| v.is_finite())
}

/// Scratch buffers for classical RK4.
struct Rk4 {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(dim: usize) -> Self {
        Rk4 {
            k: std::array::from_fn(|_| vec![0.0; dim]),
            tmp: vec![0.0; dim],
        }
    }

    fn step(&mut self, f: &impl Fn(&[f64], &mut [f64]) -> bool, h: f64, y: &mut [f64]) -> bool {
        let n = y.len();
        let mut ok = f(y, &mut self.k[0]);
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * self.k[0][i];
        }
        ok &= f(&self.tmp, &mut self.k[1]);
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * self.k[1][i];
        }
        ok &= f(&self.tmp, &mut self.k[2]);
        for i in 0..n {
            self.tmp[i] = y[i] + h * self.k[2][i];
        }
        ok &= f(&self.tmp, &mut self.k[3]);
        for i in 0..n {
            y[i] += h / 6.0 * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]);
        }
        ok
    }
}

/// Integrates ẏ = f(y) from 0 to `t` with uniform steps of size ≤ h.
pub fn integrate(
    f: impl Fn(&[f64], &mut [f64]) -> bool,
    y0: &[f64],
    t: f64,
    settings: &IntegratorSettings,
    name: &str,
) -> Result<Vec<f64>> {
    let mut y = y0.to_vec();
    if t == 0.0 {
        return Ok(y);
    }
    let n = (t.abs() / settings.step - 1e-9).ceil().max(1.0);
    if n > settings.max_steps as f64 {
        return Err(Error::param(
            "max_steps",
            format!("{n} steps needed to reach t={t}, limit {}", settings.max_steps),
        ));
    }
    let n = n as u64;
    let h = t / n as f64;
    let mut rk = Rk4::new(y.len());
    for k in 1..=n {
        let finite = rk.step(&f, h, &mut y);
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm <= settings.divergence_radius) {
            if y.iter().any(|v| v.is_nan()) && finite {
                return Err(Error::Domain {
                    name: name.to_string(),
                    at: format!("t={}", k as f64 * h),
                });
            }
            return Err(Error::Diverged {
                blowup_time: k as f64 * h,
            });
        }
        if !finite {
            return Err(Error::Domain {
                name: name.to_string(),
                at: format!("t={}", (k - 1) as f64 * h),
            });
        }
    }
    Ok(y)
}

fn iterate_map(map: &MapExpr, x: &[f64], n: u64, sign: f64) -> Result<Vec<f64>> {
    let mut cur = x.to_vec();
    let mut next = vec![0.0; cur.len()];
    for k in 1..=n {
        map.apply_into(&cur, &mut next);
        if next.iter().any(|v| v.is_nan()) {
            return Err(Error::Domain {
                name: map.name().to_string(),
                at: format!("{cur:?}"),
            });
        }
        let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm <= MAP_DIVERGENCE_RADIUS) {
            return Err(Error::Diverged {
                blowup_time: sign * k as f64,
            });
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur)
}

/// ‖Φ(x, t+s) − Φ(Φ(x, t), s)‖.
pub fn group_law_residual(sys: &FlowSystem, x: &PhasePoint, t: TimeValue, s: TimeValue) -> Result<f64> {
    let sum = match (t, s) {
        (TimeValue::Discrete(a), TimeValue::Discrete(b)) => TimeValue::Discrete(a + b),
        _ => TimeValue::Continuous(t.as_f64() + s.as_f64()),
    };
    let direct = sys.evaluate(x, sum)?;
    let composed = sys.evaluate(&sys.evaluate(x, t)?, s)?;
    direct.distance(&composed)
}

/// The two sequences of the shift example, on the given horizon:
/// (1,2,1,4,1,1,1,8,…) and (1,2,1,4,3,2,1,8,7,…).
pub fn shift_example_points_with_horizon(horizon: u64) -> Result<(PhasePoint, PhasePoint)> {
    Ok((
        PhasePoint::symbolic(SequenceRule::PowerSpikes, horizon)?,
        PhasePoint::symbolic(SequenceRule::DyadicCountdown, horizon)?,
    ))
}

pub fn shift_example_points() -> (PhasePoint, PhasePoint) {
    shift_example_points_with_horizon(DEFAULT_HORIZON).expect("built-in rules are valid")
}

/// The four named example systems.
pub fn example_systems() -> Vec<(&'static str, FlowSystem)> {
    vec![
        (
            "translation",
            FlowSystem::Translation {
                velocity: vec![1.0, 0.0],
            },
        ),
        ("spiral", FlowSystem::Spiral),
        ("r3saddle", FlowSystem::r3saddle()),
        ("shift", FlowSystem::Shift),
    ]
}

/// A homeomorphism between phase spaces, given with its inverse.
#[derive(Debug, Clone)]
pub enum Conjugacy {
    Identity,
    Map {
        forward: Arc<MapExpr>,
        inverse: Arc<MapExpr>,
    },
}

impl Conjugacy {
    pub fn new(forward: MapExpr, inverse: MapExpr) -> Result<Self> {
        if forward.dim() != inverse.dim() {
            return Err(Error::param("inverse", "dimension differs from forward map"));
        }
        Ok(Conjugacy::Map {
            forward: Arc::new(forward),
            inverse: Arc::new(inverse),
        })
    }

    pub fn apply(&self, p: &PhasePoint) -> Result<PhasePoint> {
        match self {
            Conjugacy::Identity => Ok(p.clone()),
            Conjugacy::Map { forward, .. } => Ok(PhasePoint::Euclidean(forward.apply(p.as_euclidean()?)?)),
        }
    }

    pub fn apply_inverse(&self, p: &PhasePoint) -> Result<PhasePoint> {
        match self {
            Conjugacy::Identity => Ok(p.clone()),
            Conjugacy::Map { inverse, .. } => Ok(PhasePoint::Euclidean(inverse.apply(p.as_euclidean()?)?)),
        }
    }

    /// The exhaustion h(K_1) ⊆ h(K_2) ⊆ … of the target space.
    pub fn image_exhaustion(&self, exh: &CompactExhaustion) -> CompactExhaustion {
        match self {
            Conjugacy::Identity => exh.clone(),
            Conjugacy::Map { inverse, .. } => exh.image(Arc::clone(inverse)),
        }
    }

    /// Finite-difference estimate of the local Lipschitz constant at `p`.
    pub fn local_lipschitz(&self, p: &PhasePoint, h: f64) -> Result<f64> {
        let Conjugacy::Map { forward, .. } = self else {
            return Ok(1.0);
        };
        let x = p.as_euclidean()?;
        let fx = forward.apply(x)?;
        let mut best = 0.0f64;
        for i in 0..x.len() {
            for s in [-1.0, 1.0] {
                let mut y = x.to_vec();
                y[i] += s * h;
                let fy = forward.apply(&y)?;
                let d = fy.iter().zip(&fx).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                best = best.max(d / h);
            }
        }
        Ok(best)
    }

    pub fn describe(&self) -> String {
        match self {
            Conjugacy::Identity => "identity".into(),
            Conjugacy::Map { forward, inverse } => format!("{forward} / inverse {inverse}"),
        }
    }
}
