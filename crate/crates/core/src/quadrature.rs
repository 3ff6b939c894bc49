//! Quadrature building blocks.
//!
//! Everything singular in this crate is integrated in polar coordinates around
//! the singular point: a [`SphereRule`] handles directions and a [`RadialRule`]
//! handles the radial variable with geometrically shrinking shells toward the
//! singular end. Shell sums that refuse to converge are reported as divergent
//! instead of being truncated silently.

use std::f64::consts::PI;

use crate::geom::{self, Segments};

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = KahanSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Result of a numerical integration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Integral {
    pub value: f64,
    /// Estimated absolute error.
    pub error: f64,
    /// Shell sums kept growing until the shell budget ran out.
    pub diverged: bool,
}

impl Integral {
    pub fn zero() -> Self {
        Integral {
            value: 0.0,
            error: 0.0,
            diverged: false,
        }
    }

    pub fn exact(value: f64) -> Self {
        Integral {
            value,
            error: 0.0,
            diverged: false,
        }
    }

    pub fn scaled(self, s: f64) -> Self {
        Integral {
            value: self.value * s,
            error: self.error * s.abs(),
            diverged: self.diverged,
        }
    }
}

impl std::ops::Add for Integral {
    type Output = Integral;
    fn add(self, o: Integral) -> Integral {
        Integral {
            value: self.value + o.value,
            error: self.error + o.error,
            diverged: self.diverged || o.diverged,
        }
    }
}

impl std::ops::AddAssign for Integral {
    fn add_assign(&mut self, o: Integral) {
        *self = *self + o;
    }
}

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            weights[i] = w;
            nodes[n - 1 - i] = x;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = 0.5 * (b - a);
        let m = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (m + h * x, h * w))
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let pn = if n == 0 { 1.0 } else { p1 };
    let pn1 = if n == 0 { 0.0 } else { p0 };
    let d = n as f64 * (x * pn - pn1) / (x * x - 1.0);
    (pn, d)
}

/// One-dimensional rule for integrands with possible endpoint singularities.
#[derive(Clone, Debug)]
pub struct RadialRule {
    gl: GaussLegendre,
    /// Width ratio between consecutive shells.
    pub ratio: f64,
    pub max_shells: usize,
    /// Uniform panels for segments without singular ends.
    pub panels: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Default for RadialRule {
    fn default() -> Self {
        RadialRule::new(10)
    }
}

impl RadialRule {
    pub fn new(order: usize) -> Self {
        RadialRule {
            gl: GaussLegendre::new(order),
            ratio: 0.25,
            max_shells: 80,
            panels: 2,
            abs_tol: 1e-13,
            rel_tol: 1e-11,
        }
    }

    pub fn with_panels(mut self, panels: usize) -> Self {
        self.panels = panels.max(1);
        self
    }

    pub fn with_max_shells(mut self, n: usize) -> Self {
        self.max_shells = n;
        self
    }

    pub fn with_tolerances(mut self, abs_tol: f64, rel_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self.rel_tol = rel_tol;
        self
    }

    pub fn gauss(&self) -> &GaussLegendre {
        &self.gl
    }

    /// Integrates `f` over `[a, b]`, grading shells toward the flagged ends.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64, a: f64, b: f64, sing_lo: bool, sing_hi: bool) -> Integral {
        if b <= a {
            return Integral::zero();
        }
        match (sing_lo, sing_hi) {
            (false, false) => {
                let h = (b - a) / self.panels as f64;
                let v: KahanSum = (0..self.panels)
                    .map(|k| {
                        let lo = a + h * k as f64;
                        self.gl.integrate(lo, lo + h, &mut f)
                    })
                    .collect();
                Integral::exact(v.value())
            }
            (true, false) => self.shells_floor(|t| f(a + t), b - a, resolution(a)),
            (false, true) => self.shells_floor(|t| f(b - t), b - a, resolution(b)),
            (true, true) => {
                let m = 0.5 * (a + b);
                let lo = self.shells_floor(|t| f(a + t), m - a, resolution(a));
                let hi = self.shells_floor(|t| f(b - t), b - m, resolution(b));
                lo + hi
            }
        }
    }

    /// `∫_0^len g(t) dt` with `g` possibly singular at `t = 0`.
    pub fn shells(&self, g: impl FnMut(f64) -> f64, len: f64) -> Integral {
        self.shells_floor(g, len, 0.0)
    }

    /// As [`RadialRule::shells`], but shells below `floor` are not resolved:
    /// the remaining tail is extrapolated geometrically.
    fn shells_floor(&self, mut g: impl FnMut(f64) -> f64, len: f64, floor: f64) -> Integral {
        let mut sum = KahanSum::new();
        let mut prev: Option<f64> = None;
        let mut seen_nonzero = false;
        let mut hi = len;
        for _ in 0..self.max_shells {
            let lo = hi * self.ratio;
            let c = self.gl.integrate(lo, hi, &mut g);
            sum.add(c);
            if !c.is_finite() {
                return Integral {
                    value: f64::INFINITY,
                    error: f64::INFINITY,
                    diverged: true,
                };
            }
            if c != 0.0 {
                seen_nonzero = true;
            }
            if let Some(p) = prev {
                if c == 0.0 && p == 0.0 && seen_nonzero {
                    return Integral::exact(sum.value());
                }
                if p != 0.0 {
                    let rho = (c / p).abs();
                    if rho < 0.95 {
                        let tail = c.abs() * rho / (1.0 - rho);
                        let total = sum.value();
                        if tail <= self.abs_tol.max(self.rel_tol * total.abs()) {
                            return Integral {
                                value: total,
                                error: tail,
                                diverged: false,
                            };
                        }
                    }
                }
            }
            if lo < floor {
                let total = sum.value();
                return match prev {
                    Some(p) if p != 0.0 && (c / p).abs() < 0.95 => {
                        let rho = (c / p).abs();
                        let tail = c * rho / (1.0 - rho);
                        Integral {
                            value: total + tail,
                            error: tail.abs(),
                            diverged: false,
                        }
                    }
                    _ if !seen_nonzero || c == 0.0 => Integral::exact(total),
                    _ => Integral {
                        value: total,
                        error: c.abs(),
                        diverged: true,
                    },
                };
            }
            prev = Some(c);
            hi = lo;
        }
        if !seen_nonzero {
            return Integral::zero();
        }
        Integral {
            value: sum.value(),
            error: prev.unwrap_or(0.0).abs(),
            diverged: true,
        }
    }
}

/// Smallest offset from `x` that is still resolved in floating point.
fn resolution(x: f64) -> f64 {
    64.0 * f64::EPSILON * x.abs()
}

/// Quadrature rule on the unit sphere `S^{d−1}`; weights sum to its area.
#[derive(Clone, Debug)]
pub struct SphereRule {
    dim: usize,
    dirs: Vec<f64>,
    weights: Vec<f64>,
}

impl SphereRule {
    /// `level` doubles the resolution in every angle.
    pub fn new(dim: usize, level: usize) -> Self {
        assert!(dim >= 1, "sphere rule needs dim >= 1");
        let scale = 1usize << level;
        match dim {
            1 => SphereRule {
                dim,
                dirs: vec![1.0, -1.0],
                weights: vec![1.0, 1.0],
            },
            2 => {
                let n = 16 * scale;
                let mut dirs = Vec::with_capacity(2 * n);
                for k in 0..n {
                    let phi = 2.0 * PI * (k as f64 + 0.5) / n as f64;
                    dirs.push(phi.cos());
                    dirs.push(phi.sin());
                }
                SphereRule {
                    dim,
                    dirs,
                    weights: vec![2.0 * PI / n as f64; n],
                }
            }
            3 => {
                let nt = 8 * scale;
                let np = 2 * nt;
                let gl = GaussLegendre::new(nt);
                let mut dirs = Vec::with_capacity(3 * nt * np);
                let mut weights = Vec::with_capacity(nt * np);
                for (&z, &wz) in gl.nodes().iter().zip(gl.weights()) {
                    let rho = (1.0 - z * z).sqrt();
                    for k in 0..np {
                        let phi = 2.0 * PI * (k as f64 + 0.5) / np as f64;
                        dirs.extend_from_slice(&[rho * phi.cos(), rho * phi.sin(), z]);
                        weights.push(wz * 2.0 * PI / np as f64);
                    }
                }
                SphereRule { dim, dirs, weights }
            }
            _ => {
                let sub = SphereRule::new(dim - 1, level);
                let nt = 12 * scale;
                let gl = GaussLegendre::new(nt);
                let mut dirs = Vec::new();
                let mut weights = Vec::new();
                for (theta, wt) in gl.mapped(0.0, PI) {
                    let (st, ct) = theta.sin_cos();
                    let jac = wt * st.powi(dim as i32 - 2);
                    for (w, ws) in sub.iter() {
                        dirs.push(ct);
                        dirs.extend(w.iter().map(|v| st * v));
                        weights.push(jac * ws);
                    }
                }
                SphereRule { dim, dirs, weights }
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.dirs.chunks_exact(self.dim).zip(self.weights.iter().copied())
    }

    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        self.iter().map(|(u, w)| w * f(u)).collect::<KahanSum>().value()
    }
}

/// Polar-coordinate integration: a sphere rule for directions and a radial rule
/// along each ray.
#[derive(Clone, Debug)]
pub struct PolarRule {
    pub sphere: SphereRule,
    pub radial: RadialRule,
}

impl PolarRule {
    pub fn new(dim: usize, level: usize) -> Self {
        PolarRule {
            sphere: SphereRule::new(dim, level),
            radial: RadialRule::default(),
        }
    }

    pub fn with_radial(mut self, radial: RadialRule) -> Self {
        self.radial = radial;
        self
    }

    pub fn dim(&self) -> usize {
        self.sphere.dim()
    }

    /// `∫ f(y) dy` over the union of ray segments `origin + s u`, `s ∈ segments(u)`.
    ///
    /// `f` receives the point and its distance `s` to `origin`. Segments starting
    /// at `s = 0` are graded toward the origin; `sing_hi` grades every segment
    /// toward its far end as well.
    pub fn integrate(
        &self,
        origin: &[f64],
        mut segments: impl FnMut(&[f64]) -> Segments,
        mut f: impl FnMut(&[f64], f64) -> f64,
        sing_hi: bool,
    ) -> Integral {
        let d = self.dim();
        let mut y = vec![0.0; d];
        let mut total = Integral::zero();
        let mut acc = KahanSum::new();
        for (u, w) in self.sphere.iter() {
            for (a, b) in segments(u) {
                let r = self.radial.integrate(
                    |s| {
                        geom::axpy_into(&mut y, origin, s, u);
                        let v = f(&y, s);
                        if v == 0.0 {
                            0.0
                        } else {
                            v * s.powi(d as i32 - 1)
                        }
                    },
                    a,
                    b,
                    a <= 0.0,
                    sing_hi,
                );
                acc.add(w * r.value);
                total.error += w * r.error;
                total.diverged |= r.diverged;
            }
        }
        total.value = acc.value();
        total
    }
}

/// `∫_{S^{d−1}} f(ω) dσ(ω)` in polar angle around `axis`, grading toward the axis.
///
/// Use when `f` is nearly singular at `ω = axis`.
pub fn sphere_integral_around_axis(
    axis: &[f64],
    radial: &RadialRule,
    sub: &SphereRule,
    f: impl FnMut(&[f64]) -> f64,
) -> Integral {
    sphere_band_integral(axis, (0.0, PI), true, radial, sub, f)
}

/// `∫ f dσ` over the band `θ_0 < ∠(ω, axis) < θ_1` of `S^{d−1}`.
///
/// `sing_lo` grades the polar angle toward `θ_0`.
pub fn sphere_band_integral(
    axis: &[f64],
    (theta0, theta1): (f64, f64),
    sing_lo: bool,
    radial: &RadialRule,
    sub: &SphereRule,
    mut f: impl FnMut(&[f64]) -> f64,
) -> Integral {
    let d = axis.len();
    assert_eq!(sub.dim() + 1, d, "sub-sphere rule has the wrong dimension");
    let frame = geom::frame_from_axis(axis);
    let mut w = vec![0.0; d];
    radial.integrate(
        |theta| {
            let (st, ct) = theta.sin_cos();
            let jac = st.powi(d as i32 - 2);
            if jac == 0.0 && d > 2 {
                return 0.0;
            }
            let inner = sub.integrate(|om| {
                for (k, wk) in w.iter_mut().enumerate() {
                    let mut v = ct * frame[0][k];
                    for (j, oj) in om.iter().enumerate() {
                        v += st * oj * frame[j + 1][k];
                    }
                    *wk = v;
                }
                f(&w)
            });
            jac * inner
        },
        theta0,
        theta1,
        sing_lo,
        false,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::sphere_area;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let gl = GaussLegendre::new(6);
        // degree 11 is the limit for 6 nodes
        let v = gl.integrate(0.0, 2.0, |x| x.powi(11));
        assert!((v - 2f64.powi(12) / 12.0).abs() < 1e-9);
        let s: f64 = gl.weights().iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn shells_handle_integrable_singularity() {
        let r = RadialRule::default().with_max_shells(200);
        let v = r.integrate(|t| t.powf(-0.5), 0.0, 1.0, true, false);
        assert!(!v.diverged);
        assert!((v.value - 2.0).abs() < 1e-9, "{v:?}");
    }

    #[test]
    fn shells_flag_log_divergence() {
        let r = RadialRule::default();
        let v = r.integrate(|t| 1.0 / t, 0.0, 1.0, true, false);
        assert!(v.diverged);
    }

    #[test]
    fn upper_singularity_is_graded() {
        let r = RadialRule::default().with_max_shells(200);
        let v = r.integrate(|t| (1.0 - t).powf(-0.75), 0.0, 1.0, false, true);
        // shells below the float resolution of the endpoint are extrapolated
        assert!((v.value - 4.0).abs() < 1e-4, "{v:?}");
        let v = r.shells(|t| t.powf(-0.75), 1.0);
        assert!((v.value - 4.0).abs() < 1e-8, "{v:?}");
    }

    #[test]
    fn sphere_rules_have_correct_area_and_moments() {
        for d in 2..=5 {
            let rule = SphereRule::new(d, 0);
            let area = rule.integrate(|_| 1.0);
            assert!((area - sphere_area(d)).abs() < 1e-9, "d={d} {area}");
            // ∫ ω_1² dσ = area / d
            let m2 = rule.integrate(|w| w[0] * w[0]);
            assert!((m2 - sphere_area(d) / d as f64).abs() < 1e-9, "d={d} {m2}");
            let m1 = rule.integrate(|w| w[d - 1]);
            assert!(m1.abs() < 1e-12);
        }
    }

    #[test]
    fn polar_integral_of_ball_volume() {
        let rule = PolarRule::new(3, 0);
        let c = [0.2, -0.1, 0.3];
        let v = rule.integrate(
            &[0.0, 0.0, 0.0],
            |u| geom::ray_ball(&[0.0; 3], u, &c, 1.0).into_iter().collect(),
            |_, _| 1.0,
            false,
        );
        assert!((v.value - 4.0 * PI / 3.0).abs() < 1e-6, "{v:?}");
    }

    #[test]
    fn axis_integral_matches_plain_rule() {
        let axis = geom::normalized(&[1.0, 2.0, 2.0]).unwrap();
        let sub = SphereRule::new(2, 0);
        let r = RadialRule::default();
        let v = sphere_integral_around_axis(&axis, &r, &sub, |w| w[0] * w[0] + w[1]);
        assert!((v.value - 4.0 * PI / 3.0).abs() < 1e-10, "{v:?}");
    }
}
