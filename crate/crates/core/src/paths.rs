//! Killed Brownian and α-stable trajectories with additive-functional accumulation.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom;
use crate::kernels::{uniform_direction, ExitRadiusSampler};
use crate::model::{DomainSpec, MeasureSpec, TermKind};
use crate::rng::RngStream;
use crate::special::ball_exit_time_const;

pub const DEFAULT_STEP_BUDGET: usize = 50_000_000;
pub const DEFAULT_STABLE_BUDGET: usize = 1_000_000;

/// How an Euler step is tested for leaving the domain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Crossing {
    /// Kill when the step endpoint (or the segment to it) leaves the domain.
    Sign,
    /// As `Sign`, plus a Brownian-bridge kill with probability
    /// `exp(−d₀d₁/h)` between two interior points at boundary distances `d₀, d₁`.
    #[default]
    Bridge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathEvent {
    /// Left the domain; `exit` holds the first outside point or its boundary projection.
    Exited,
    /// Still alive at the horizon.
    Horizon,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub start: Vec<f64>,
    /// Exit point (outside `D`, or on `∂D` for bridge kills and walk-on-spheres).
    pub exit: Option<Vec<f64>>,
    /// Last position inside the domain.
    pub last: Vec<f64>,
    pub event: PathEvent,
    /// Brownian: summed step times. Stable: summed expected sojourns.
    pub lifetime: f64,
    pub pcaf: f64,
    pub pcaf_infinite: bool,
    pub steps: usize,
    pub stream: Option<RngStream>,
}

/// Euler walker settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EulerConfig {
    pub dt: f64,
    #[serde(default)]
    pub crossing: Crossing,
    /// Stop alive at this time.
    #[serde(default)]
    pub horizon: Option<f64>,
    /// Half-width of the shells used for surface terms.
    #[serde(default)]
    pub shell_eps: Option<f64>,
    #[serde(default = "default_budget")]
    pub max_steps: usize,
}

fn default_budget() -> usize {
    DEFAULT_STEP_BUDGET
}

impl EulerConfig {
    pub fn new(dt: f64) -> Self {
        EulerConfig {
            dt,
            crossing: Crossing::default(),
            horizon: None,
            shell_eps: None,
            max_steps: DEFAULT_STEP_BUDGET,
        }
    }

    pub fn with_crossing(mut self, c: Crossing) -> Self {
        self.crossing = c;
        self
    }

    pub fn with_horizon(mut self, t: f64) -> Self {
        self.horizon = Some(t);
        self
    }

    pub fn with_shell(mut self, eps: f64) -> Self {
        self.shell_eps = Some(eps);
        self
    }

    pub fn with_max_steps(mut self, n: usize) -> Self {
        self.max_steps = n;
        self
    }
}

/// A completed step that ended inside the domain.
pub struct Step<'s> {
    pub index: usize,
    pub h: f64,
    pub t: f64,
    pub y: &'s [f64],
    pub a_prev: f64,
    pub a: f64,
}

impl Step<'_> {
    /// `∫ e^{−A}` over the step with `A` linear in time.
    pub fn discount(&self) -> f64 {
        let da = self.a - self.a_prev;
        if da < 1e-9 {
            (-self.a_prev).exp() * (1.0 - 0.5 * da) * self.h
        } else {
            ((-self.a_prev).exp() - (-self.a).exp()) / da * self.h
        }
    }
}

/// Euler–Maruyama walker for Brownian motion with generator `Δ`, killed on
/// leaving the domain, accumulating `A^ν` for density and sphere-surface terms.
#[derive(Clone, Debug)]
pub struct EulerWalker<'a> {
    domain: &'a DomainSpec,
    nu: &'a MeasureSpec,
    cfg: EulerConfig,
    poles: Vec<Vec<f64>>,
    shells: Vec<(f64, Vec<f64>, f64)>,
    clamp: f64,
}

impl<'a> EulerWalker<'a> {
    pub fn new(domain: &'a DomainSpec, nu: &'a MeasureSpec, cfg: EulerConfig) -> Result<Self> {
        if !(cfg.dt > 0.0) || !cfg.dt.is_finite() {
            return Err(Error::Domain("dt must be positive".into()));
        }
        if let Some(t) = cfg.horizon {
            if !(t >= 0.0) {
                return Err(Error::Domain("horizon must be nonnegative".into()));
            }
        }
        let shells: Vec<_> = nu.surface_terms().map(|(w, c, r)| (w, c.to_vec(), r)).collect();
        if !shells.is_empty() {
            let Some(eps) = cfg.shell_eps else {
                return Err(Error::Rejected("surface terms need a shell width ε".into()));
            };
            if !(eps > 0.0) {
                return Err(Error::Domain("ε must be positive".into()));
            }
            if cfg.dt > 0.25 * eps * eps {
                return Err(Error::Rejected(format!(
                    "dt = {} is too coarse for ε = {eps}: need dt ≤ ε²/4 = {}",
                    cfg.dt,
                    0.25 * eps * eps
                )));
            }
        }
        let poles = nu
            .terms
            .iter()
            .filter_map(|t| match &t.kind {
                TermKind::DensityPower { a, pole } if *a > 0.0 => Some(pole.clone()),
                _ => None,
            })
            .collect();
        let clamp = 1.0 / (cfg.dt * cfg.dt);
        Ok(EulerWalker {
            domain,
            nu,
            cfg,
            poles,
            shells,
            clamp,
        })
    }

    pub fn config(&self) -> &EulerConfig {
        &self.cfg
    }

    /// `r²/20` at distance `r` from the nearest pole, clamped to `[dt·1e−4, dt]`.
    fn step_size(&self, y: &[f64]) -> f64 {
        let dt = self.cfg.dt;
        let r = self
            .poles
            .iter()
            .map(|p| geom::dist(y, p))
            .fold(f64::INFINITY, f64::min);
        (0.05 * r * r).clamp(1e-4 * dt, dt)
    }

    fn rate(&self, y: &[f64]) -> f64 {
        let mut v = self.nu.density(self.domain, y).min(self.clamp);
        if let Some(eps) = self.cfg.shell_eps {
            for (w, c, r) in &self.shells {
                if (geom::dist(y, c) - r).abs() < eps {
                    v += w / (2.0 * eps);
                }
            }
        }
        v
    }

    /// Run one path, calling `observe` after every step that ends inside.
    pub fn run<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R, mut observe: impl FnMut(&Step)) -> Result<PathRecord> {
        if !self.domain.contains(x) {
            return Err(Error::Domain(format!("start point {x:?} is not in the domain")));
        }
        let d = x.len();
        let mut y = x.to_vec();
        let mut next = vec![0.0; d];
        let mut t = 0.0;
        let mut a = 0.0;
        let mut dist_y = self.domain.boundary_distance(&y);
        let mut steps = 0usize;
        loop {
            let mut h = self.step_size(&y);
            if let Some(th) = self.cfg.horizon {
                let left = th - t;
                if left <= 1e-12 * th.max(1.0) {
                    return Ok(self.record(x, None, y, PathEvent::Horizon, t, a, steps));
                }
                h = h.min(left);
            }
            if steps >= self.cfg.max_steps {
                return Err(Error::Budget {
                    budget: self.cfg.max_steps,
                    position: y,
                });
            }
            steps += 1;
            let s = (2.0 * h).sqrt();
            for k in 0..d {
                let z: f64 = StandardNormal.sample(rng);
                next[k] = y[k] + s * z;
            }
            if !self.domain.segment_inside(&y, &next) {
                return Ok(self.record(x, Some(next), y, PathEvent::Exited, t, a, steps));
            }
            let dist_next = self.domain.boundary_distance(&next);
            if self.cfg.crossing == Crossing::Bridge {
                let p = (-dist_y * dist_next / h).exp();
                if rng.random::<f64>() < p {
                    let exit = self.domain.project_to_boundary(&next);
                    return Ok(self.record(x, Some(exit), y, PathEvent::Exited, t, a, steps));
                }
            }
            std::mem::swap(&mut y, &mut next);
            dist_y = dist_next;
            let a_prev = a;
            a += self.rate(&y) * h;
            t += h;
            observe(&Step {
                index: steps,
                h,
                t,
                y: &y,
                a_prev,
                a,
            });
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &self,
        start: &[f64],
        exit: Option<Vec<f64>>,
        last: Vec<f64>,
        event: PathEvent,
        t: f64,
        a: f64,
        steps: usize,
    ) -> PathRecord {
        PathRecord {
            start: start.to_vec(),
            exit,
            last,
            event,
            lifetime: t,
            pcaf: a,
            pcaf_infinite: !a.is_finite(),
            steps,
            stream: None,
        }
    }
}

/// Euler path killed on leaving `domain`, with `A^ν_τ` for a density-type `ν`.
pub fn euler_killed_pcaf<R: Rng + ?Sized>(
    domain: &DomainSpec,
    x: &[f64],
    nu: &MeasureSpec,
    dt: f64,
    rng: &mut R,
) -> Result<PathRecord> {
    euler_killed_pcaf_with(domain, x, nu, EulerConfig::new(dt), rng)
}

pub fn euler_killed_pcaf_with<R: Rng + ?Sized>(
    domain: &DomainSpec,
    x: &[f64],
    nu: &MeasureSpec,
    cfg: EulerConfig,
    rng: &mut R,
) -> Result<PathRecord> {
    if nu.has_surface() {
        return Err(Error::Rejected("surface terms are accumulated by surface_pcaf".into()));
    }
    EulerWalker::new(domain, nu, cfg)?.run(x, rng, |_| {})
}

/// Euler path with surface terms accumulated as `(1/2ε)·` occupation of the ε-shell.
pub fn surface_pcaf<R: Rng + ?Sized>(
    domain: &DomainSpec,
    x: &[f64],
    nu: &MeasureSpec,
    dt: f64,
    eps: f64,
    rng: &mut R,
) -> Result<PathRecord> {
    surface_pcaf_with(domain, x, nu, EulerConfig::new(dt).with_shell(eps), rng)
}

pub fn surface_pcaf_with<R: Rng + ?Sized>(
    domain: &DomainSpec,
    x: &[f64],
    nu: &MeasureSpec,
    cfg: EulerConfig,
    rng: &mut R,
) -> Result<PathRecord> {
    for (_, c, r) in nu.surface_terms() {
        if domain.boundary_distance(c) <= r {
            return Err(Error::Domain("sphere must lie strictly inside the domain".into()));
        }
    }
    if cfg.shell_eps.is_none() {
        return Err(Error::Rejected("surface_pcaf needs a shell width ε".into()));
    }
    EulerWalker::new(domain, nu, cfg)?.run(x, rng, |_| {})
}

/// Result of a Brownian walk on spheres.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WosExit {
    pub point: Vec<f64>,
    pub steps: usize,
}

/// Walk on spheres from `x` until within `eps` of the boundary; returns the projection.
pub fn wos_exit<R: Rng + ?Sized>(domain: &DomainSpec, x: &[f64], eps: f64, rng: &mut R) -> Result<WosExit> {
    wos_exit_with_budget(domain, x, eps, DEFAULT_STEP_BUDGET, rng)
}

pub fn wos_exit_with_budget<R: Rng + ?Sized>(
    domain: &DomainSpec,
    x: &[f64],
    eps: f64,
    budget: usize,
    rng: &mut R,
) -> Result<WosExit> {
    if !domain.contains(x) {
        return Err(Error::Domain(format!("start point {x:?} is not in the domain")));
    }
    if !(eps > 0.0) {
        return Err(Error::Domain("ε must be positive".into()));
    }
    let mut y = x.to_vec();
    for steps in 0..budget {
        let r = domain.boundary_distance(&y);
        if r < eps {
            return Ok(WosExit {
                point: domain.project_to_boundary(&y),
                steps,
            });
        }
        let u = uniform_direction(y.len(), rng);
        for k in 0..y.len() {
            y[k] += r * u[k];
        }
    }
    Err(Error::Budget { budget, position: y })
}

/// Shared inverse-CDF tables keyed by `α`.
pub fn sampler_for(alpha: f64) -> Arc<ExitRadiusSampler> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Arc<ExitRadiusSampler>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut m = cache.lock().expect("sampler cache");
    m.entry(alpha.to_bits())
        .or_insert_with(|| Arc::new(ExitRadiusSampler::new(alpha)))
        .clone()
}

/// Exit point of `B(x, r)` for the isotropic 2α-stable process started at `x`.
pub fn stable_exit_step<R: Rng + ?Sized>(x: &[f64], r: f64, alpha: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain("α must lie in (0, 1)".into()));
    }
    if !(r > 0.0) {
        return Err(Error::Domain("radius must be positive".into()));
    }
    Ok(sampler_for(alpha).sample_exit(x, r, rng))
}

/// One inscribed ball of a stable walk and the expected time spent in it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sojourn {
    pub center: Vec<f64>,
    pub radius: f64,
    pub expected_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StableExit {
    /// First landing point outside the domain.
    pub exit: Vec<f64>,
    pub steps: usize,
    pub sojourns: Vec<Sojourn>,
}

impl StableExit {
    pub fn lifetime(&self) -> f64 {
        self.sojourns.iter().map(|s| s.expected_time).sum()
    }

    /// Expected-time estimate of the residence in each union component.
    pub fn residence_by_component(&self, domain: &DomainSpec, components: usize) -> Vec<f64> {
        let mut out = vec![0.0; components];
        for s in &self.sojourns {
            if let Some(k) = domain.component(&s.center) {
                if k < components {
                    out[k] += s.expected_time;
                }
            }
        }
        out
    }

    pub fn record(&self, start: &[f64], last: Vec<f64>) -> PathRecord {
        PathRecord {
            start: start.to_vec(),
            exit: Some(self.exit.clone()),
            last,
            event: PathEvent::Exited,
            lifetime: self.lifetime(),
            pcaf: 0.0,
            pcaf_infinite: false,
            steps: self.steps,
            stream: None,
        }
    }
}

/// Stable walk on inscribed balls until the first landing outside the domain.
pub fn stable_wos_exit<R: Rng + ?Sized>(domain: &DomainSpec, x: &[f64], alpha: f64, rng: &mut R) -> Result<StableExit> {
    stable_wos_exit_with_budget(domain, x, alpha, DEFAULT_STABLE_BUDGET, rng)
}

pub fn stable_wos_exit_with_budget<R: Rng + ?Sized>(
    domain: &DomainSpec,
    x: &[f64],
    alpha: f64,
    budget: usize,
    rng: &mut R,
) -> Result<StableExit> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain("α must lie in (0, 1)".into()));
    }
    if !domain.contains(x) {
        return Err(Error::Domain(format!("start point {x:?} is not in the domain")));
    }
    let sampler = sampler_for(alpha);
    let kappa = ball_exit_time_const(x.len(), alpha);
    let mut y = x.to_vec();
    let mut sojourns = Vec::new();
    for steps in 1..=budget {
        let r = domain.boundary_distance(&y);
        sojourns.push(Sojourn {
            center: y.clone(),
            radius: r,
            expected_time: kappa * r.powf(2.0 * alpha),
        });
        let next = sampler.sample_exit(&y, r, rng);
        if !domain.contains(&next) {
            return Ok(StableExit {
                exit: next,
                steps,
                sojourns,
            });
        }
        y = next;
    }
    Err(Error::Budget { budget, position: y })
}

/// One row of a path dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub replicate: u64,
    pub step: usize,
    pub x: Vec<f64>,
    pub pcaf: f64,
    pub event: String,
}

/// Euler path with every step recorded.
pub fn euler_trace<R: Rng + ?Sized>(
    walker: &EulerWalker,
    x: &[f64],
    replicate: u64,
    rng: &mut R,
) -> Result<(PathRecord, Vec<TraceRow>)> {
    let mut rows = vec![TraceRow {
        replicate,
        step: 0,
        x: x.to_vec(),
        pcaf: 0.0,
        event: "start".into(),
    }];
    let rec = walker.run(x, rng, |s| {
        rows.push(TraceRow {
            replicate,
            step: s.index,
            x: s.y.to_vec(),
            pcaf: s.a,
            event: "step".into(),
        })
    })?;
    let (pos, ev) = match (&rec.event, &rec.exit) {
        (PathEvent::Exited, Some(e)) => (e.clone(), "exit"),
        _ => (rec.last.clone(), "horizon"),
    };
    rows.push(TraceRow {
        replicate,
        step: rec.steps,
        x: pos,
        pcaf: rec.pcaf,
        event: ev.into(),
    });
    Ok((rec, rows))
}

/// Path dump as CSV with columns `replicate, step, x1..xd, pcaf, event`.
pub fn write_trace_csv<W: Write>(out: W, dim: usize, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["replicate".to_string(), "step".to_string()];
    header.extend((1..=dim).map(|k| format!("x{k}")));
    header.extend(["pcaf".to_string(), "event".to_string()]);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.replicate.to_string(), r.step.to_string()];
        rec.extend(r.x.iter().map(|v| format!("{v:e}")));
        rec.extend([format!("{:e}", r.pcaf), r.event.clone()]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
