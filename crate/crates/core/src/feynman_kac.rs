//! Monte-Carlo Feynman–Kac estimators with normal-approximation intervals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::TestBump;
use crate::model::{DomainSpec, MeasureSpec, OperatorSpec};
use crate::paths::{EulerConfig, EulerWalker, PathEvent};
use crate::rng::TaskStreams;
use crate::stats::{Parallel, Summary, Z99};

pub type Field<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

/// Replicate streams, worker pool and path discretization for one estimator call.
#[derive(Clone, Debug)]
pub struct McContext {
    pub streams: TaskStreams,
    pub parallel: Parallel,
    pub euler: EulerConfig,
}

impl McContext {
    pub fn new(streams: TaskStreams, euler: EulerConfig) -> Self {
        McContext {
            streams,
            parallel: Parallel::global(),
            euler,
        }
    }

    pub fn with_parallel(mut self, p: Parallel) -> Self {
        self.parallel = p;
        self
    }

    pub fn sub(&self, label: &str) -> Self {
        McContext {
            streams: self.streams.sub(label),
            ..self.clone()
        }
    }

    fn replicate<T: Send>(&self, n: u64, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
        self.parallel.map(n, f).into_iter().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FkEstimate {
    pub point: Vec<f64>,
    pub functional: String,
    pub estimate: f64,
    pub stderr: f64,
    pub n: usize,
    pub dt: f64,
    pub eps: Option<f64>,
    pub seed: u64,
    pub ci_level: f64,
}

impl FkEstimate {
    fn from_samples(point: &[f64], functional: &str, v: &[f64], ctx: &McContext) -> Self {
        let s = Summary::of(v);
        FkEstimate {
            point: point.to_vec(),
            functional: functional.into(),
            estimate: s.mean,
            stderr: s.stderr,
            n: s.n,
            dt: ctx.euler.dt,
            eps: ctx.euler.shell_eps,
            seed: ctx.streams.seed,
            ci_level: 0.99,
        }
    }

    pub fn ci(&self) -> (f64, f64) {
        (self.estimate - Z99 * self.stderr, self.estimate + Z99 * self.stderr)
    }

    /// `|estimate − target| ≤ k·stderr`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.estimate - target).abs() <= k * self.stderr
    }

    pub fn excludes_zero(&self) -> bool {
        let (lo, hi) = self.ci();
        lo > 0.0 || hi < 0.0
    }
}

fn brownian_domain(op: &OperatorSpec) -> Result<&DomainSpec> {
    if !op.is_brownian() {
        return Err(Error::Unsupported(
            "time-dependent functionals are available for the Brownian operator only".into(),
        ));
    }
    Ok(&op.domain)
}

/// `E_x e^{−A^ν_t} f(X_t) 1{t < τ_D}`.
pub fn fk_semigroup(
    x: &[f64],
    t: f64,
    f: Field,
    nu: &MeasureSpec,
    op: &OperatorSpec,
    n: u64,
    ctx: &McContext,
) -> Result<FkEstimate> {
    let domain = brownian_domain(op)?;
    let walker = EulerWalker::new(domain, nu, ctx.euler.clone().with_horizon(t))?;
    let v = ctx.replicate(n, |i| {
        let rec = walker.run(x, &mut ctx.streams.stream(i).rng(), |_| {})?;
        Ok(match rec.event {
            PathEvent::Horizon => (-rec.pcaf).exp() * f(&rec.last),
            PathEvent::Exited => 0.0,
        })
    })?;
    Ok(FkEstimate::from_samples(x, "semigroup", &v, ctx))
}

/// `E_x ∫_0^{τ_D} e^{−A^ν_t} f(X_t) dt`.
pub fn fk_resolvent(
    x: &[f64],
    f: Field,
    nu: &MeasureSpec,
    op: &OperatorSpec,
    n: u64,
    ctx: &McContext,
) -> Result<FkEstimate> {
    let domain = brownian_domain(op)?;
    let walker = EulerWalker::new(domain, nu, ctx.euler.clone())?;
    let v = ctx.replicate(n, |i| {
        let mut acc = 0.0;
        walker.run(x, &mut ctx.streams.stream(i).rng(), |s| acc += s.discount() * f(s.y))?;
        Ok(acc)
    })?;
    Ok(FkEstimate::from_samples(x, "resolvent", &v, ctx))
}

/// Unit-mass bump at `x0` of radius `rho`, standing in for a point mass.
pub fn point_mass_bump(x0: &[f64], rho: f64) -> TestBump {
    let b = TestBump::new(x0.to_vec(), rho);
    let m = b.integral();
    TestBump {
        amplitude: b.amplitude / m,
        ..b
    }
}

/// `R^ν` of unit bumps at `x0` over a decreasing radius schedule.
pub fn fk_resolvent_point_mass(
    x: &[f64],
    x0: &[f64],
    rhos: &[f64],
    nu: &MeasureSpec,
    op: &OperatorSpec,
    n: u64,
    ctx: &McContext,
) -> Result<Vec<FkEstimate>> {
    rhos.iter()
        .map(|&rho| {
            let b = point_mass_bump(x0, rho);
            let f = |y: &[f64]| b.value(y);
            let mut e = fk_resolvent(x, &f, nu, op, n, ctx)?;
            e.functional = format!("point-mass-resolvent(rho={rho})");
            Ok(e)
        })
        .collect()
}

/// One sample point of a representation check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepresentationRow {
    pub point: Vec<f64>,
    pub u: f64,
    pub first: f64,
    pub first_stderr: f64,
    pub second: f64,
    pub second_stderr: f64,
    pub residual: f64,
    pub residual_stderr: f64,
    /// 99% interval of the residual excludes 0.
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepresentationReport {
    pub rows: Vec<RepresentationRow>,
    pub n: usize,
    pub dt: f64,
    pub flagged: usize,
}

/// Residual of `u(x) = E_x e^{−A^ν_{t∧τ}} u(X_{t∧τ}) + E_x ∫_0^{t∧τ} e^{−A^ν_r} dA^β_r`.
///
/// With `sub = Some(D')` paths stop on leaving `D'` and `u` is evaluated at the
/// exit point. With `sub = None` they run in `D` and are killed on exit, so the
/// first term only counts paths alive at `t`.
#[allow(clippy::too_many_arguments)]
pub fn check_representation(
    u: Field,
    nu: &MeasureSpec,
    beta: &MeasureSpec,
    op: &OperatorSpec,
    sub: Option<&DomainSpec>,
    t: Option<f64>,
    points: &[Vec<f64>],
    n: u64,
    ctx: &McContext,
) -> Result<RepresentationReport> {
    let domain = brownian_domain(op)?;
    if beta.has_surface() {
        return Err(Error::Unsupported("β must be a density".into()));
    }
    let walk_domain = sub.unwrap_or(domain);
    let mut cfg = ctx.euler.clone();
    cfg.horizon = t;
    let walker = EulerWalker::new(walk_domain, nu, cfg)?;
    let mut rows = Vec::with_capacity(points.len());
    for (k, x) in points.iter().enumerate() {
        if !walk_domain.contains(x) {
            return Err(Error::Domain(format!("sample point {x:?} is outside the walk domain")));
        }
        let streams = ctx.streams.sub(&format!("point-{k}"));
        let pairs = ctx.replicate(n, |i| {
            let mut second = 0.0;
            let rec = walker.run(x, &mut streams.stream(i).rng(), |s| {
                second += s.discount() * beta.density(domain, s.y);
            })?;
            let first = match (rec.event, sub, &rec.exit) {
                (PathEvent::Horizon, _, _) => (-rec.pcaf).exp() * u(&rec.last),
                (PathEvent::Exited, Some(d), Some(e)) => (-rec.pcaf).exp() * u(&d.project_to_boundary(e)),
                _ => 0.0,
            };
            Ok((first, second))
        })?;
        let first: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let second: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let resid: Vec<f64> = pairs.iter().map(|p| u(x) - p.0 - p.1).collect();
        let (s1, s2, sr) = (Summary::of(&first), Summary::of(&second), Summary::of(&resid));
        rows.push(RepresentationRow {
            point: x.clone(),
            u: u(x),
            first: s1.mean,
            first_stderr: s1.stderr,
            second: s2.mean,
            second_stderr: s2.stderr,
            residual: sr.mean,
            residual_stderr: sr.stderr,
            flagged: sr.mean.abs() > Z99 * sr.stderr,
        });
    }
    let flagged = rows.iter().filter(|r| r.flagged).count();
    Ok(RepresentationReport {
        rows,
        n: n as usize,
        dt: ctx.euler.dt,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom;

    fn op3() -> OperatorSpec {
        OperatorSpec::brownian(DomainSpec::unit_ball(3))
    }

    fn ctx(label: &str, dt: f64) -> McContext {
        McContext::new(TaskStreams::new(17, label), EulerConfig::new(dt))
    }

    #[test]
    fn survival_near_one_for_short_time() {
        let one = |_: &[f64]| 1.0;
        let e = fk_semigroup(
            &[0.0; 3],
            1e-3,
            &one,
            &MeasureSpec::zero(),
            &op3(),
            500,
            &ctx("short", 1e-4),
        )
        .unwrap();
        assert_eq!(e.estimate, 1.0);
    }

    #[test]
    fn constant_potential_factors_out() {
        let one = |_: &[f64]| 1.0;
        let c = ctx("factor", 2e-3);
        let t = 0.05;
        let e0 = fk_semigroup(&[0.2, 0.0, 0.0], t, &one, &MeasureSpec::zero(), &op3(), 2000, &c).unwrap();
        let e1 = fk_semigroup(&[0.2, 0.0, 0.0], t, &one, &MeasureSpec::constant(2.0), &op3(), 2000, &c).unwrap();
        // common random numbers make the ratio exact up to rounding
        assert!((e1.estimate - (-2.0 * t).exp() * e0.estimate).abs() < 1e-12);
    }

    #[test]
    fn resolvent_residence_and_constant_potential() {
        let one = |_: &[f64]| 1.0;
        let c = ctx("resolvent", 1e-3);
        let e = fk_resolvent(&[0.0; 3], &one, &MeasureSpec::zero(), &op3(), 3000, &c).unwrap();
        assert!(e.within(1.0 / 6.0, 3.0), "{e:?}");
        let e = fk_resolvent(&[0.0; 3], &one, &MeasureSpec::constant(1.0), &op3(), 3000, &c).unwrap();
        assert!(e.within(1.0 - 1.0 / 1f64.sinh(), 3.0), "{e:?}");
        assert!(e.estimate >= 0.0 && e.stderr >= 0.0);
    }

    #[test]
    fn fractional_operator_is_rejected() {
        let op = OperatorSpec::fractional(0.5, DomainSpec::unit_ball(3));
        let one = |_: &[f64]| 1.0;
        assert!(matches!(
            fk_resolvent(&[0.0; 3], &one, &MeasureSpec::zero(), &op, 10, &ctx("x", 1e-2)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn representation_of_residence_function() {
        let u = |x: &[f64]| (1.0 - geom::norm2(x)) / 6.0;
        let rep = check_representation(
            &u,
            &MeasureSpec::zero(),
            &MeasureSpec::constant(1.0),
            &op3(),
            None,
            None,
            &[vec![0.0; 3], vec![0.5, 0.0, 0.0]],
            2000,
            &ctx("rep", 1e-3),
        )
        .unwrap();
        assert_eq!(rep.flagged, 0, "{rep:?}");
    }

    #[test]
    fn representation_flags_missing_exit_term() {
        let u = |_: &[f64]| 1.0;
        let rep = check_representation(
            &u,
            &MeasureSpec::zero(),
            &MeasureSpec::zero(),
            &op3(),
            None,
            Some(0.2),
            &[vec![0.3, 0.0, 0.0]],
            1000,
            &ctx("fail", 1e-3),
        )
        .unwrap();
        assert_eq!(rep.flagged, 1, "{rep:?}");
    }
}
