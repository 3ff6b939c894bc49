//! Green functions, exit kernels and test bumps.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom;
use crate::model::{DomainSpec, OperatorSpec};
use crate::quadrature::{Integral, KahanSum, RadialRule};
use crate::special::{ball_exit_time_const, beta_reg, frac_laplacian_const, gamma, ln_gamma, riesz_const, sphere_area};

/// How the kernel blows up on the diagonal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Singularity {
    /// `|x − y|^{−exponent}`
    Power {
        exponent: f64,
    },
    Log,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelForm {
    BallBrownianImage,
    BallStableClosedForm,
    WholeSpaceRiesz,
}

/// Green function `G_D(x, y)` of `−A` on a ball, or the whole-space Riesz kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct GreenKernel {
    pub dim: usize,
    pub alpha: f64,
    pub form: KernelForm,
    pub singularity: Singularity,
    center: Vec<f64>,
    radius: f64,
}

impl GreenKernel {
    /// Closed-form kernel for a ball domain; other domains are only reachable by
    /// path simulation.
    pub fn for_operator(op: &OperatorSpec) -> Result<Self> {
        let DomainSpec::Ball { center, radius } = &op.domain else {
            return Err(Error::Unsupported(
                "closed-form Green function needs a ball domain".into(),
            ));
        };
        let d = op.dim;
        let (form, singularity) = if op.is_brownian() {
            let s = if d == 2 {
                Singularity::Log
            } else {
                Singularity::Power {
                    exponent: d as f64 - 2.0,
                }
            };
            (KernelForm::BallBrownianImage, s)
        } else {
            (
                KernelForm::BallStableClosedForm,
                Singularity::Power {
                    exponent: d as f64 - 2.0 * op.alpha,
                },
            )
        };
        Ok(GreenKernel {
            dim: d,
            alpha: op.alpha,
            form,
            singularity,
            center: center.clone(),
            radius: *radius,
        })
    }

    pub fn riesz(dim: usize, alpha: f64) -> Self {
        GreenKernel {
            dim,
            alpha,
            form: KernelForm::WholeSpaceRiesz,
            singularity: Singularity::Power {
                exponent: dim as f64 - 2.0 * alpha,
            },
            center: vec![0.0; dim],
            radius: f64::INFINITY,
        }
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Checked evaluation.
    pub fn try_eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self.form {
            KernelForm::WholeSpaceRiesz => {
                let r = geom::dist(x, y);
                if r == 0.0 {
                    return Err(Error::Singular);
                }
                Ok(riesz_const(self.dim, self.alpha) * r.powf(2.0 * self.alpha - self.dim as f64))
            }
            _ => {
                let xs = geom::sub(x, &self.center);
                let ys = geom::sub(y, &self.center);
                match self.form {
                    KernelForm::BallBrownianImage => green_ball_brownian(self.dim, self.radius, &xs, &ys),
                    _ => green_ball_stable(self.dim, self.alpha, self.radius, &xs, &ys),
                }
            }
        }
    }

    /// Evaluation for hot loops: `+∞` on the diagonal, `0` outside the ball.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.try_eval(x, y) {
            Ok(v) => v,
            Err(Error::Singular) => f64::INFINITY,
            Err(_) => 0.0,
        }
    }
}

fn check_in_ball(r: f64, x: &[f64], y: &[f64]) -> Result<()> {
    for p in [x, y] {
        if geom::norm(p) > r {
            return Err(Error::Domain(format!("point {p:?} outside B(0,{r})")));
        }
    }
    if x == y || geom::dist2(x, y) == 0.0 {
        return Err(Error::Singular);
    }
    Ok(())
}

/// Fundamental solution of `−Δ` as a function of distance (d ≥ 3).
fn newton_profile(d: usize, t: f64) -> f64 {
    t.powi(2 - d as i32) / ((d as f64 - 2.0) * sphere_area(d))
}

/// Distance from `y` to the Kelvin image of `x`, scaled: `sqrt(|x|²|y|²/R² − 2x·y + R²)`.
fn image_distance(r: f64, x: &[f64], y: &[f64]) -> f64 {
    let v = geom::norm2(x) * geom::norm2(y) / (r * r) - 2.0 * geom::dot(x, y) + r * r;
    v.max(0.0).sqrt()
}

/// Green function of `−Δ` on `B(0, R)` by the image-charge formula.
pub fn green_ball_brownian(d: usize, r: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    if d < 2 {
        return Err(Error::Domain("d >= 2 required".into()));
    }
    check_in_ball(r, x, y)?;
    let s = geom::dist(x, y);
    let t = image_distance(r, x, y);
    let g = if d == 2 {
        (t / s).ln() / (2.0 * PI)
    } else {
        newton_profile(d, s) - newton_profile(d, t)
    };
    Ok(g.max(0.0))
}

/// Green function of `−Δ^α` on `B(0, R)`:
/// `κ |x−y|^{2α−d} ∫_0^w t^{α−1}(1+t)^{−d/2} dt`, `w = (R²−|x|²)(R²−|y|²)/(R²|x−y|²)`.
pub fn green_ball_stable(d: usize, alpha: f64, r: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    if !(2.0 * alpha < d as f64) || !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain("need 0 < α ≤ 1 and 2α < d".into()));
    }
    check_in_ball(r, x, y)?;
    let h = d as f64 / 2.0;
    let s2 = geom::dist2(x, y);
    let w = (r * r - geom::norm2(x)) * (r * r - geom::norm2(y)) / (r * r * s2);
    if w <= 0.0 {
        return Ok(0.0);
    }
    let kappa = gamma(h) / (4f64.powf(alpha) * PI.powf(h) * gamma(alpha).powi(2));
    let b = (ln_gamma(alpha) + ln_gamma(h - alpha) - ln_gamma(h)).exp();
    let z = w / (1.0 + w);
    Ok(kappa * s2.powf(alpha - h) * b * beta_reg(alpha, h - alpha, z))
}

/// `∫_{B(0,R)} G(x, y) dy`, the expected exit time from `B(0, R)`.
pub fn expected_residence(d: usize, r: f64, x: &[f64]) -> Result<f64> {
    expected_residence_stable(d, 1.0, r, x)
}

/// `E_x τ_{B(0,R)} = c_{d,α} (R² − |x|²)^α` for the process generated by `Δ^α`.
pub fn expected_residence_stable(d: usize, alpha: f64, r: f64, x: &[f64]) -> Result<f64> {
    let q = r * r - geom::norm2(x);
    if q < 0.0 {
        return Err(Error::Domain(format!("point {x:?} outside B(0,{r})")));
    }
    Ok(ball_exit_time_const(d, alpha) * q.powf(alpha))
}

/// Poisson kernel of `B(0, R)` for Brownian motion, density on the sphere.
pub fn poisson_kernel_ball(d: usize, r: f64, x: &[f64], z: &[f64]) -> f64 {
    (r * r - geom::norm2(x)) / (sphere_area(d) * r * geom::dist(x, z).powi(d as i32))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExitVariant {
    /// Printed form: exponent 1 on `|y−x|² − r²` and constant `π^{1+d/2} Γ(d/2) sin πα`.
    AsPrinted,
    /// Exponent `α`, constant fixed by numerical normalization.
    #[default]
    Normalized,
}

/// Exit distribution of the `2α`-stable process from `B(x, r)`.
#[derive(Clone, Debug)]
pub struct ExitKernel {
    pub dim: usize,
    pub alpha: f64,
    pub radius: f64,
    pub variant: ExitVariant,
    constant: f64,
    mass: Integral,
}

impl ExitKernel {
    pub fn new(dim: usize, alpha: f64, radius: f64, variant: ExitVariant) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) || !(2.0 * alpha < dim as f64) || dim < 2 {
            return Err(Error::Domain("exit kernel needs α ∈ (0,1), 2α < d, d ≥ 2".into()));
        }
        if !(radius > 0.0) {
            return Err(Error::Domain("radius > 0".into()));
        }
        let exponent = match variant {
            ExitVariant::AsPrinted => 1.0,
            ExitVariant::Normalized => alpha,
        };
        let raw = radial_mass(exponent, 1.0).scaled(sphere_area(dim) * radius.powf(2.0 * alpha - 2.0 * exponent));
        let constant = match variant {
            ExitVariant::AsPrinted => {
                let h = dim as f64 / 2.0;
                PI.powf(1.0 + h) * gamma(h) * (PI * alpha).sin()
            }
            ExitVariant::Normalized => 1.0 / raw.value,
        };
        let mass = Integral {
            value: raw.value * constant,
            error: raw.error * constant,
            diverged: raw.diverged,
        };
        Ok(ExitKernel {
            dim,
            alpha,
            radius,
            variant,
            constant,
            mass,
        })
    }

    /// Multiplicative constant in front of the kernel shape.
    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// Total mass over `ℝ^d ∖ B(x, r)`; `diverged` for the printed form.
    pub fn total_mass(&self) -> Integral {
        self.mass
    }

    /// Density at `y` for the walk started at the center `x`.
    pub fn density(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let rho = geom::dist(x, y);
        let r = self.radius;
        if rho <= r {
            return Err(Error::Domain(format!("|y − x| = {rho} ≤ r = {r}")));
        }
        let e = match self.variant {
            ExitVariant::AsPrinted => 1.0,
            ExitVariant::Normalized => self.alpha,
        };
        Ok(self.constant * r.powf(2.0 * self.alpha) * (rho * rho - r * r).powf(-e) * rho.powi(-(self.dim as i32)))
    }

    /// `P(|Y − x| > k r)` for `k ≥ 1`, by quadrature of the kernel.
    pub fn tail_probability(&self, k: f64) -> f64 {
        assert!(k >= 1.0);
        let e = match self.variant {
            ExitVariant::AsPrinted => 1.0,
            ExitVariant::Normalized => self.alpha,
        };
        let scale = sphere_area(self.dim) * self.radius.powf(2.0 * self.alpha - 2.0 * e);
        radial_mass(e, 1.0 / k).value * scale * self.constant
    }
}

/// `∫_0^{t_max} (1 − t²)^{−e} t^{2e−1} dt`.
///
/// With `t = r/|y − x|` the kernel shape `r^{2α}(|y−x|²−r²)^{−e}|y−x|^{−d}` has
/// mass `|S^{d−1}| r^{2α−2e}` times this integral over `t ∈ (0, 1)`.
fn radial_mass(e: f64, t_max: f64) -> Integral {
    let rule = RadialRule::default().with_max_shells(120);
    let f = |t: f64| (1.0 - t * t).powf(-e) * t.powf(2.0 * e - 1.0);
    if t_max < 1.0 {
        return rule.integrate(f, 0.0, t_max, true, false);
    }
    let lo = rule.shells(f, 0.5);
    // upper half written in s = 1 − t so the endpoint singularity is resolved
    let hi = rule.shells(|s| (s * (2.0 - s)).powf(-e) * (1.0 - s).powf(2.0 * e - 1.0), 0.5);
    lo + hi
}

/// Inverse-CDF sampler for the radial part of the normalized exit kernel.
///
/// `v = r²/|Y − x|²` has density proportional to `v^{α−1}(1−v)^{−α}`. The CDF is
/// tabulated in a variable `z ∈ [0, 1]` in which that density is smooth at both
/// ends, and inverted by monotone cubic interpolation.
#[derive(Clone, Debug)]
pub struct ExitRadiusSampler {
    alpha: f64,
    cdf: Vec<f64>,
    slope: Vec<f64>,
}

impl ExitRadiusSampler {
    pub const TABLE_SIZE: usize = 2048;

    pub fn new(alpha: f64) -> Self {
        Self::with_size(alpha, Self::TABLE_SIZE)
    }

    pub fn with_size(alpha: f64, n: usize) -> Self {
        assert!(alpha > 0.0 && alpha < 1.0);
        let gl = crate::quadrature::GaussLegendre::new(8);
        let h = 1.0 / n as f64;
        let dens = |z: f64| z_density(alpha, z);
        let mut cdf = Vec::with_capacity(n + 1);
        let mut acc = KahanSum::new();
        cdf.push(0.0);
        for k in 0..n {
            acc.add(gl.integrate(k as f64 * h, (k + 1) as f64 * h, dens));
            cdf.push(acc.value());
        }
        let total = acc.value();
        let mut slope: Vec<f64> = (0..=n).map(|k| dens(k as f64 * h) / total).collect();
        for c in cdf.iter_mut() {
            *c /= total;
        }
        // Fritsch–Carlson limiter keeps every cell's Hermite cubic monotone.
        for k in 0..n {
            let delta = (cdf[k + 1] - cdf[k]) / h;
            if delta <= 0.0 {
                slope[k] = 0.0;
                slope[k + 1] = 0.0;
                continue;
            }
            let a = slope[k] / delta;
            let b = slope[k + 1] / delta;
            let s = a * a + b * b;
            if s > 9.0 {
                let tau = 3.0 / s.sqrt();
                slope[k] = tau * a * delta;
                slope[k + 1] = tau * b * delta;
            }
        }
        ExitRadiusSampler { alpha, cdf, slope }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Table CDF of `v` at `v`.
    pub fn cdf_v(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        if v >= 1.0 {
            return 1.0;
        }
        let z = v_to_z(self.alpha, v);
        let n = self.cdf.len() - 1;
        let h = 1.0 / n as f64;
        let k = ((z / h) as usize).min(n - 1);
        self.hermite(k, (z - k as f64 * h) / h)
    }

    fn hermite(&self, k: usize, t: f64) -> f64 {
        let h = 1.0 / (self.cdf.len() - 1) as f64;
        let (p0, p1) = (self.cdf[k], self.cdf[k + 1]);
        let (m0, m1) = (self.slope[k] * h, self.slope[k + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * p0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * p1 + (t3 - t2) * m1
    }

    /// Returns `(v, 1 − v)` for the quantile `u ∈ (0, 1)`.
    pub fn quantile(&self, u: f64) -> (f64, f64) {
        let n = self.cdf.len() - 1;
        let k = match self.cdf.binary_search_by(|c| c.total_cmp(&u)) {
            Ok(i) => i.min(n - 1),
            Err(i) => i.saturating_sub(1).min(n - 1),
        };
        // bisection on the monotone cell cubic
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.hermite(k, mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let z = (k as f64 + 0.5 * (lo + hi)) / n as f64;
        z_to_v(self.alpha, z)
    }

    /// Distance `|Y − x|` for a walk exiting `B(x, r)`.
    pub fn sample_distance<R: Rng + ?Sized>(&self, r: f64, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let (v, _) = self.quantile(u.clamp(1e-300, 1.0 - 1e-16));
        r / v.sqrt()
    }

    /// Exit point of `B(x, r)`.
    pub fn sample_exit<R: Rng + ?Sized>(&self, x: &[f64], r: f64, rng: &mut R) -> Vec<f64> {
        let rho = self.sample_distance(r, rng);
        let u = uniform_direction(x.len(), rng);
        geom::axpy(x, rho, &u)
    }
}

/// Map `z ∈ [0,1] → v`, returned as `(v, 1 − v)` to keep precision near both ends.
fn z_to_v(alpha: f64, z: f64) -> (f64, f64) {
    if z <= 0.5 {
        let v = 0.5 * (2.0 * z).powf(1.0 / alpha);
        (v, 1.0 - v)
    } else {
        let w = 0.5 * (2.0 * (1.0 - z)).powf(1.0 / (1.0 - alpha));
        (1.0 - w, w)
    }
}

fn v_to_z(alpha: f64, v: f64) -> f64 {
    if v <= 0.5 {
        0.5 * (2.0 * v).powf(alpha)
    } else {
        1.0 - 0.5 * (2.0 * (1.0 - v)).powf(1.0 - alpha)
    }
}

/// Unnormalized density of `z`: `v^{α−1}(1−v)^{−α} dv/dz`, smooth on `[0, 1]`.
fn z_density(alpha: f64, z: f64) -> f64 {
    if z <= 0.5 {
        // v = ½(2z)^{1/α}: v^{α−1} dv/dz = (½)^{α−1}(2z)^{(α−1)/α}(2z)^{1/α−1}/α = 2^{1−α}/α
        let (_, w) = z_to_v(alpha, z);
        2f64.powf(1.0 - alpha) / alpha * w.powf(-alpha)
    } else {
        let (v, _) = z_to_v(alpha, z);
        // 1−v = ½(2(1−z))^{1/(1−α)}: (1−v)^{−α} d(1−v)/dz = 2^{α}/(1−α)
        2f64.powf(alpha) / (1.0 - alpha) * v.powf(alpha - 1.0)
    }
}

/// Exact CDF of `v = r²/|Y − x|²` under the normalized kernel, `I_v(α, 1−α)`.
pub fn exit_v_cdf_exact(alpha: f64, v: f64) -> f64 {
    beta_reg(alpha, 1.0 - alpha, v.clamp(0.0, 1.0))
}

pub fn uniform_direction<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        if let Some(u) = geom::normalized(&g) {
            return u;
        }
    }
}

/// Density of `exit_kernel_center` at `y` for the walk from `0` exiting `B(0, r)`.
pub fn exit_kernel_center(d: usize, alpha: f64, r: f64, y: &[f64], variant: ExitVariant) -> Result<f64> {
    if y.len() != d {
        return Err(Error::Domain("y has the wrong dimension".into()));
    }
    ExitKernel::new(d, alpha, r, variant)?.density(&vec![0.0; d], y)
}

/// Radial profile of a test bump as a function of `q = |x − c|²/ρ²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BumpProfile {
    /// `(1 − q)_+^k`
    Power { k: f64 },
    /// `exp(−1/(1 − q))` on `q < 1`, infinitely smooth.
    Smooth,
}

impl Default for BumpProfile {
    fn default() -> Self {
        BumpProfile::Power { k: 4.0 }
    }
}

impl BumpProfile {
    /// `(f, f', f'')` at `q`.
    pub fn eval(&self, q: f64) -> (f64, f64, f64) {
        if q >= 1.0 {
            return (0.0, 0.0, 0.0);
        }
        let m = 1.0 - q;
        match *self {
            BumpProfile::Power { k } => {
                let f = m.powf(k);
                let f1 = -k * m.powf(k - 1.0);
                let f2 = if k == 1.0 { 0.0 } else { k * (k - 1.0) * m.powf(k - 2.0) };
                (f, f1, f2)
            }
            BumpProfile::Smooth => {
                let f = (-1.0 / m).exp();
                if f == 0.0 {
                    return (0.0, 0.0, 0.0);
                }
                let i = 1.0 / m;
                (f, -f * i * i, f * (i.powi(4) - 2.0 * i.powi(3)))
            }
        }
    }

    pub fn value(&self, q: f64) -> f64 {
        if q >= 1.0 {
            return 0.0;
        }
        match *self {
            BumpProfile::Power { k } => (1.0 - q).powf(k),
            BumpProfile::Smooth => (-1.0 / (1.0 - q)).exp(),
        }
    }
}

/// Radially symmetric test function `ξ(x) = amplitude · f(|x − c|²/ρ²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestBump {
    pub center: Vec<f64>,
    pub radius: f64,
    #[serde(default)]
    pub profile: BumpProfile,
    #[serde(default = "unit")]
    pub amplitude: f64,
}

fn unit() -> f64 {
    1.0
}

impl TestBump {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        TestBump {
            center,
            radius,
            profile: BumpProfile::default(),
            amplitude: 1.0,
        }
    }

    pub fn with_profile(mut self, profile: BumpProfile) -> Self {
        self.profile = profile;
        self
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    fn q(&self, x: &[f64]) -> f64 {
        geom::dist2(x, &self.center) / (self.radius * self.radius)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.amplitude * self.profile.value(self.q(x))
    }

    /// `−Δξ(x) = −(4q f''(q) + 2d f'(q))/ρ²`.
    pub fn minus_laplacian(&self, x: &[f64]) -> f64 {
        let q = self.q(x);
        if q >= 1.0 {
            return 0.0;
        }
        let (_, f1, f2) = self.profile.eval(q);
        -self.amplitude * (4.0 * q * f2 + 2.0 * self.dim() as f64 * f1) / (self.radius * self.radius)
    }

    /// Support lies strictly inside the domain.
    pub fn inside(&self, domain: &DomainSpec) -> bool {
        domain.boundary_distance(&self.center) > self.radius
    }

    /// `∫ ξ dx`.
    pub fn integral(&self) -> f64 {
        let d = self.dim();
        let rule = RadialRule::default();
        let r = self.radius;
        let v = rule.integrate(
            |s| self.profile.value(s * s / (r * r)) * s.powi(d as i32 - 1),
            0.0,
            r,
            false,
            true,
        );
        self.amplitude * sphere_area(d) * v.value
    }
}

/// `−Δ^α ξ(x)` for `α ∈ (0, 1]`; `α = 1` is the local Laplacian.
///
/// For `α < 1` the singular integral is reduced to the distance `s = |y − x|` and
/// the angle to the axis through the bump center, splitting at the places where
/// the sphere `S(x, s)` enters and leaves the support.
pub fn apply_minus_frac_laplacian(xi: &TestBump, x: &[f64], alpha: f64) -> Result<f64> {
    let d = xi.dim();
    if x.len() != d {
        return Err(Error::Domain("x has the wrong dimension".into()));
    }
    if alpha == 1.0 {
        return Ok(xi.minus_laplacian(x));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain("α ∈ (0, 1] required".into()));
    }
    let rho = xi.radius;
    let h = geom::dist(x, &xi.center);
    let c = frac_laplacian_const(d, alpha);
    let xi_x = xi.value(x);
    let area = sphere_area(d);
    let sub_area = if d == 2 { 2.0 } else { sphere_area(d - 1) };
    let theta_rule = RadialRule::new(12).with_tolerances(1e-15, 1e-12);

    // A(s) = ∫_{S^{d−1}} (ξ(x) − ξ(x + sω)) dσ(ω)
    let sphere_mean_deficit = |s: f64| -> f64 {
        let support = if h == 0.0 {
            if s < rho {
                (0.0, PI)
            } else {
                return area * xi_x;
            }
        } else {
            // |x + sω − c|² = h² + s² + 2 s h cos θ < ρ²
            let t = (rho * rho - h * h - s * s) / (2.0 * s * h);
            if t <= -1.0 {
                return area * xi_x;
            }
            (if t >= 1.0 { 0.0 } else { t.acos() }, PI)
        };
        let (th0, th1) = (PI - support.1, PI - support.0);
        // measured from the direction pointing to the center: cos φ = −cos θ
        let kink = th1 < PI;
        let inner = theta_rule.integrate(
            |phi| {
                let (sp, cp) = phi.sin_cos();
                let q = (h * h + s * s - 2.0 * s * h * cp) / (rho * rho);
                xi.profile.value(q) * if d == 2 { 1.0 } else { sp.powi(d as i32 - 2) }
            },
            th0,
            th1,
            false,
            kink,
        );
        area * xi_x - sub_area * xi.amplitude * inner.value
    };

    let lo_break = (h - rho).abs();
    let hi_break = h + rho;
    let radial = RadialRule::new(12).with_tolerances(1e-14, 1e-10).with_max_shells(60);
    let integrand = |s: f64| sphere_mean_deficit(s) * s.powf(-1.0 - 2.0 * alpha);

    let mut total = Integral::zero();
    // Taylor region near s = 0 when x is away from the support boundary:
    // A(s) ≈ −s² |S^{d−1}| Δξ(x)/(2d)
    let s0 = if lo_break > 0.0 { 1e-3 * rho.min(lo_break) } else { 0.0 };
    if s0 > 0.0 {
        let lap = -xi.minus_laplacian(x);
        total += Integral::exact(-area * lap / (2.0 * d as f64) * s0.powf(2.0 - 2.0 * alpha) / (2.0 - 2.0 * alpha));
        if lo_break > s0 {
            total += radial.integrate(integrand, s0, lo_break, true, true);
        }
    } else {
        total += radial.integrate(integrand, 0.0, lo_break.max(0.0), true, true);
    }
    if lo_break == 0.0 {
        total += radial.integrate(integrand, 0.0, hi_break, true, true);
    } else {
        total += radial.integrate(integrand, lo_break, hi_break, true, true);
    }
    // beyond h + ρ the sphere misses the support
    total += Integral::exact(area * xi_x * hi_break.powf(-2.0 * alpha) / (2.0 * alpha));
    if total.diverged || !total.value.is_finite() {
        return Err(Error::Quadrature {
            achieved: total.error,
            requested: 1e-8,
        });
    }
    Ok(c * total.value)
}

/// `(−Δ)^α (1 − |x|²)_+^α = 4^α Γ(1+α) Γ(d/2+α)/Γ(d/2)` inside the unit ball.
pub fn frac_laplacian_of_ball_torsion(d: usize, alpha: f64) -> f64 {
    1.0 / ball_exit_time_const(d, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DomainSpec;
    use crate::quadrature::SphereRule;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn brownian_green_examples() {
        let g = green_ball_brownian(3, 1.0, &[0.0; 3], &[0.5, 0.0, 0.0]).unwrap();
        assert!((g - 1.0 / (4.0 * PI)).abs() < 1e-14);
        let near = green_ball_brownian(3, 1.0, &[0.2, 0.1, 0.0], &[0.0, 0.0, 0.999_999]).unwrap();
        assert!(near < 1e-5);
        assert!(matches!(
            green_ball_brownian(3, 1.0, &[0.1; 3], &[0.1; 3]),
            Err(Error::Singular)
        ));
        assert!(matches!(
            green_ball_brownian(3, 1.0, &[2.0, 0.0, 0.0], &[0.0; 3]),
            Err(Error::Domain(_))
        ));
        let g2 = green_ball_brownian(2, 1.0, &[0.0; 2], &[0.5, 0.0]).unwrap();
        assert!((g2 - (2f64).ln() / (2.0 * PI)).abs() < 1e-14);
    }

    #[test]
    fn stable_formula_reduces_to_image_formula_at_alpha_one() {
        let x = [0.3, -0.2, 0.1];
        let y = [-0.4, 0.5, 0.2];
        let a = green_ball_brownian(3, 1.0, &x, &y).unwrap();
        let b = green_ball_stable(3, 1.0, 1.0, &x, &y).unwrap();
        assert!((a - b).abs() < 1e-12 * a, "{a} {b}");
    }

    #[test]
    fn residence_examples() {
        assert!((expected_residence(3, 1.0, &[0.0; 3]).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!((expected_residence(2, 1.0, &[0.0; 2]).unwrap() - 0.25).abs() < 1e-15);
        assert!(expected_residence(3, 1.0, &[1.0, 0.0, 0.0]).unwrap().abs() < 1e-15);
    }

    fn residence_by_quadrature(k: &GreenKernel, x: &[f64]) -> f64 {
        let d = x.len();
        let rule = crate::quadrature::PolarRule::new(d, 2);
        let c = k.center().to_vec();
        let r = k.radius();
        rule.integrate(
            x,
            |u| geom::ray_ball(x, u, &c, r).into_iter().collect(),
            |y, _| k.eval(x, y),
            false,
        )
        .value
    }

    #[test]
    fn residence_matches_green_quadrature() {
        let x = [0.3, 0.2, -0.1];
        let k = GreenKernel::for_operator(&OperatorSpec::brownian(DomainSpec::unit_ball(3))).unwrap();
        let q = residence_by_quadrature(&k, &x);
        let e = expected_residence(3, 1.0, &x).unwrap();
        assert!(((q - e) / e).abs() < 1e-4, "{q} {e}");
        let k = GreenKernel::for_operator(&OperatorSpec::fractional(0.5, DomainSpec::unit_ball(3))).unwrap();
        let q = residence_by_quadrature(&k, &x);
        let e = expected_residence_stable(3, 0.5, 1.0, &x).unwrap();
        assert!(((q - e) / e).abs() < 1e-4, "{q} {e}");
    }

    #[test]
    fn harmonicity_via_volume_average() {
        let x = [0.1, 0.0, 0.0];
        let c = [-0.3, 0.4, 0.2];
        let r = 0.2;
        let avg = SphereRule::new(3, 2).integrate(|u| {
            crate::quadrature::GaussLegendre::new(12).integrate(0.0, r, |s| {
                let y = geom::axpy(&c, s, u);
                green_ball_brownian(3, 1.0, &x, &y).unwrap() * s * s
            })
        }) / (4.0 * PI * r.powi(3) / 3.0);
        let g = green_ball_brownian(3, 1.0, &x, &c).unwrap();
        assert!((avg - g).abs() < 1e-6, "{avg} {g}");
    }

    #[test]
    fn normalized_exit_kernel_has_unit_mass_and_exact_constant() {
        for d in [2usize, 3] {
            for alpha in [0.25, 0.5, 0.75] {
                let k = ExitKernel::new(d, alpha, 1.0, ExitVariant::Normalized).unwrap();
                assert!((k.total_mass().value - 1.0).abs() < 1e-9);
                let h = d as f64 / 2.0;
                let exact = gamma(h) * (PI * alpha).sin() / PI.powf(1.0 + h);
                assert!((k.constant() / exact - 1.0).abs() < 1e-8, "d={d} α={alpha}");
            }
        }
    }

    #[test]
    fn printed_exit_kernel_mass_diverges() {
        let k = ExitKernel::new(3, 0.25, 1.0, ExitVariant::AsPrinted).unwrap();
        assert!(k.total_mass().diverged);
        let n = ExitKernel::new(3, 0.25, 1.0, ExitVariant::Normalized).unwrap();
        let y = [2.0, 0.0, 0.0];
        let ratio = k.density(&[0.0; 3], &y).unwrap() / n.density(&[0.0; 3], &y).unwrap();
        assert!(ratio.is_finite() && ratio > 0.0);
        assert!(n.density(&[0.0; 3], &[0.5, 0.0, 0.0]).is_err());
    }

    #[test]
    fn tail_probability_matches_beta_cdf() {
        let k = ExitKernel::new(2, 0.5, 1.0, ExitVariant::Normalized).unwrap();
        let p = k.tail_probability(2.0);
        assert!((p - exit_v_cdf_exact(0.5, 0.25)).abs() < 1e-9, "{p}");
    }

    #[test]
    fn sampler_table_matches_exact_cdf() {
        for alpha in [0.25, 0.5, 0.75] {
            let s = ExitRadiusSampler::new(alpha);
            for &v in &[1e-6, 1e-3, 0.1, 0.5, 0.9, 0.999, 1.0 - 1e-7] {
                let a = s.cdf_v(v);
                let b = exit_v_cdf_exact(alpha, v);
                assert!((a - b).abs() < 1e-9, "α={alpha} v={v}: {a} vs {b}");
            }
            for &u in &[1e-9, 0.01, 0.3, 0.77, 0.999_999] {
                let (v, w) = s.quantile(u);
                // upper tail through 1 − v, which keeps its precision when v rounds to 1
                let got = if v < 0.5 {
                    exit_v_cdf_exact(alpha, v)
                } else {
                    1.0 - beta_reg(1.0 - alpha, alpha, w)
                };
                assert!((got - u).abs() < 1e-8, "α={alpha} u={u}: v={v} F(v)={got}");
            }
        }
    }

    #[test]
    fn exit_samples_are_isotropic() {
        let s = ExitRadiusSampler::new(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let mut sum = [0.0; 2];
        let mut below = 0usize;
        for _ in 0..n {
            let y = s.sample_exit(&[0.0, 0.0], 1.0, &mut rng);
            let rho = geom::norm(&y);
            assert!(rho > 1.0);
            if rho < 2.0 {
                below += 1;
            }
            // bounded statistic: direction
            sum[0] += y[0] / rho;
            sum[1] += y[1] / rho;
        }
        let se = (0.5 / n as f64).sqrt();
        assert!((sum[0] / n as f64).abs() < 4.0 * se);
        let p = below as f64 / n as f64;
        let want = 1.0 - exit_v_cdf_exact(0.5, 0.25);
        assert!((p - want).abs() < 4.0 * (want * (1.0 - want) / n as f64).sqrt());
    }

    #[test]
    fn bump_laplacian_integrates_to_zero() {
        let b = TestBump::new(vec![0.1, 0.0, 0.0], 0.5);
        let rule = crate::quadrature::PolarRule::new(3, 1);
        let c = b.center.clone();
        let v = rule.integrate(&c, |_| vec![(0.0, 0.5)], |y, _| b.minus_laplacian(y), false);
        assert!(v.value.abs() < 1e-10, "{v:?}");
        assert_eq!(b.minus_laplacian(&[1.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn fractional_laplacian_outside_support_is_negative() {
        let b = TestBump::new(vec![0.0; 3], 0.3);
        let v = apply_minus_frac_laplacian(&b, &[0.6, 0.0, 0.0], 0.5).unwrap();
        assert!(v < 0.0);
        // far field: −c ∫ ξ |x−y|^{−d−2α}
        let far = [5.0, 0.0, 0.0];
        let v = apply_minus_frac_laplacian(&b, &far, 0.5).unwrap();
        let approx = -frac_laplacian_const(3, 0.5) * b.integral() * 5f64.powf(-4.0);
        assert!((v / approx - 1.0).abs() < 0.05, "{v} {approx}");
    }

    #[test]
    fn fractional_laplacian_of_torsion_profile() {
        for (d, alpha) in [(2usize, 0.5), (3, 0.25), (3, 0.5), (3, 0.75)] {
            let b = TestBump::new(vec![0.0; d], 1.0).with_profile(BumpProfile::Power { k: alpha });
            let want = frac_laplacian_of_ball_torsion(d, alpha);
            for x in [vec![0.0; d], {
                let mut p = vec![0.0; d];
                p[0] = 0.4;
                p
            }] {
                let v = apply_minus_frac_laplacian(&b, &x, alpha).unwrap();
                assert!((v / want - 1.0).abs() < 1e-5, "d={d} α={alpha} x={x:?}: {v} vs {want}");
            }
        }
    }

    #[test]
    fn fractional_laplacian_approaches_laplacian() {
        let b = TestBump::new(vec![0.0; 3], 1.0);
        let x = [0.2, 0.1, 0.0];
        let v = apply_minus_frac_laplacian(&b, &x, 0.999).unwrap();
        let w = b.minus_laplacian(&x);
        assert!((v - w).abs() < 0.02 * w.abs().max(1.0), "{v} {w}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn green_is_symmetric_and_positive(
            a in prop::collection::vec(-0.57f64..0.57, 3),
            b in prop::collection::vec(-0.57f64..0.57, 3),
            alpha in 0.2f64..1.0,
        ) {
            prop_assume!(geom::dist(&a, &b) > 1e-6);
            let g1 = green_ball_brownian(3, 1.0, &a, &b).unwrap();
            let g2 = green_ball_brownian(3, 1.0, &b, &a).unwrap();
            prop_assert!((g1 - g2).abs() <= 1e-12 * g1.abs().max(1.0));
            prop_assert!(g1 > 0.0);
            let s1 = green_ball_stable(3, alpha, 1.0, &a, &b).unwrap();
            let s2 = green_ball_stable(3, alpha, 1.0, &b, &a).unwrap();
            prop_assert!((s1 - s2).abs() <= 1e-10 * s1.abs().max(1.0));
            prop_assert!(s1 > 0.0);
        }

        #[test]
        fn green_vanishes_at_boundary(
            a in prop::collection::vec(-0.5f64..0.5, 3),
            dir in prop::collection::vec(-1.0f64..1.0, 3),
            alpha in 0.2f64..1.0,
        ) {
            let Some(u) = geom::normalized(&dir) else { return Ok(()); };
            // G(x, y) ∝ dist(y, ∂B)^α near the boundary
            let near = geom::scale(&u, 1.0 - 1e-12);
            let far = geom::scale(&u, 1.0 - 1e-6);
            prop_assert!(green_ball_brownian(3, 1.0, &a, &near).unwrap() < 1e-10);
            let ratio = green_ball_stable(3, alpha, 1.0, &a, &near).unwrap()
                / green_ball_stable(3, alpha, 1.0, &a, &far).unwrap();
            prop_assert!(ratio < 2.0 * 1e-6f64.powf(alpha), "ratio {}", ratio);
        }
    }
}
