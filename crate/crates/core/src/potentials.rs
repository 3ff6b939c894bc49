//! Green potentials `Rμ`, local Green integrals behind `N_ν`, and the
//! Neumann-series solver for the perturbed resolvent `R^ν`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Segments};
use crate::kernels::GreenKernel;
use crate::model::{DomainSpec, MeasureSpec, OperatorSpec, TermKind};
use crate::quadrature::{sphere_band_integral, GaussLegendre, Integral, KahanSum, PolarRule, RadialRule, SphereRule};
use crate::special::sphere_area;

/// Potential value with its achieved tolerance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialValue {
    pub value: f64,
    pub error: f64,
    /// Shell sums diverged: the potential is `+∞` at this point.
    pub infinite: bool,
    /// The requested tolerance was not reached.
    pub warning: bool,
}

impl PotentialValue {
    fn from_integral(i: Integral, tol: f64) -> Self {
        if i.diverged || !i.value.is_finite() {
            PotentialValue {
                value: f64::INFINITY,
                error: f64::INFINITY,
                infinite: true,
                warning: false,
            }
        } else {
            PotentialValue {
                value: i.value,
                error: i.error,
                infinite: false,
                warning: i.error > tol,
            }
        }
    }
}

/// Integration region `{y ∈ D : r_in < |y − center| < r_out}`.
#[derive(Clone, Debug)]
struct Region<'a> {
    domain: &'a DomainSpec,
    center: &'a [f64],
    r_in: f64,
    r_out: f64,
}

impl Region<'_> {
    fn segments(&self, origin: &[f64], u: &[f64]) -> Segments {
        let mut segs = self.domain.ray_segments(origin, u);
        if self.r_out.is_finite() {
            match geom::ray_ball(origin, u, self.center, self.r_out) {
                Some(s) => segs = geom::intersect_segments(&segs, &[s]),
                None => return Vec::new(),
            }
        }
        if self.r_in > 0.0 {
            if let Some((a, b)) = geom::ray_ball(origin, u, self.center, self.r_in) {
                segs = geom::intersect_segments(&segs, &[(0.0, a), (b, f64::INFINITY)]);
            }
        }
        segs
    }

    fn contains(&self, y: &[f64]) -> bool {
        let r = geom::dist(y, self.center);
        r > self.r_in && r < self.r_out && self.domain.contains(y)
    }
}

/// Smooth cutoff: 1 on `[0, ½]`, 0 on `[1, ∞)`.
fn cutoff(t: f64) -> f64 {
    if t <= 0.5 {
        return 1.0;
    }
    if t >= 1.0 {
        return 0.0;
    }
    let g = |u: f64| if u > 0.0 { (-1.0 / u).exp() } else { 0.0 };
    let a = g(1.0 - t);
    let b = g(t - 0.5);
    a / (a + b)
}

/// `∫_{region} G(x, y) ν(dy)` at one angular level.
///
/// Density poles other than `x` get their own polar integral through a smooth
/// partition of unity; sphere surfaces are integrated on the sphere itself.
fn green_integral(kernel: &GreenKernel, x: &[f64], nu: &MeasureSpec, region: &Region<'_>, level: usize) -> Integral {
    let d = x.len();
    let domain = region.domain;
    let rule = PolarRule::new(d, level).with_radial(RadialRule::default().with_tolerances(1e-14, 1e-11));
    let density = nu.density_part();
    let boundary = density.has_boundary_singularity();

    // poles away from x, each with a cutoff radius keeping the cutoffs disjoint
    let poles: Vec<(Vec<f64>, f64)> = {
        let ps: Vec<&[f64]> = density.poles().map(|(p, _)| p).collect();
        let mut out = Vec::new();
        for (i, p) in ps.iter().enumerate() {
            let hx = geom::dist(p, x);
            if hx < 1e-12 || !domain.contains(p) {
                continue;
            }
            let mut delta = 0.5 * hx;
            for (j, q) in ps.iter().enumerate() {
                let h = geom::dist(p, q);
                if j != i && h > 1e-12 {
                    delta = delta.min(0.5 * h);
                }
            }
            delta = delta.min(0.5 * domain.boundary_distance(p));
            if delta > 0.0 {
                out.push((p.to_vec(), delta));
            }
        }
        out
    };
    let partition = |y: &[f64]| -> f64 {
        let mut c = 0.0;
        for (p, delta) in &poles {
            c += cutoff(geom::dist(y, p) / delta);
        }
        c
    };

    let mut total = Integral::zero();
    if !density.terms.is_empty() && !density.is_zero() {
        total += rule.integrate(
            x,
            |u| split_at_poles(region.segments(x, u), x, u, &poles),
            |y, _| {
                let w = 1.0 - partition(y);
                if w <= 0.0 {
                    return 0.0;
                }
                kernel.eval(x, y) * density.density(domain, y) * w
            },
            boundary,
        );
        for (p, delta) in &poles {
            total += rule.integrate(
                p,
                |u| {
                    let segs = geom::clip_segments(&region.segments(p, u), 0.0, *delta);
                    let half = 0.5 * delta;
                    let mut out = geom::clip_segments(&segs, 0.0, half);
                    out.extend(geom::clip_segments(&segs, half, *delta));
                    out
                },
                |y, _| {
                    if !region.contains(y) {
                        return 0.0;
                    }
                    kernel.eval(x, y) * density.density(domain, y) * cutoff(geom::dist(y, p) / delta)
                },
                false,
            );
        }
    }
    for (w, c, rho) in nu.surface_terms() {
        if w == 0.0 {
            continue;
        }
        total += surface_green_integral(kernel, x, c, rho, region, level).scaled(w);
    }
    total
}

/// Splits ray segments where the ray crosses the cutoff transition shells, so
/// each piece sees a smooth integrand.
fn split_at_poles(segs: Segments, x: &[f64], u: &[f64], poles: &[(Vec<f64>, f64)]) -> Segments {
    if poles.is_empty() {
        return segs;
    }
    let mut cuts = Vec::new();
    for (p, delta) in poles {
        for r in [*delta, 0.5 * delta] {
            if let Some((a, b)) = geom::ray_ball(x, u, p, r) {
                cuts.push(a);
                cuts.push(b);
            }
        }
    }
    let mut out = Vec::with_capacity(segs.len() + cuts.len());
    for (a, b) in segs {
        let mut pts: Vec<f64> = cuts.iter().copied().filter(|c| *c > a && *c < b).collect();
        pts.sort_by(|p, q| p.total_cmp(q));
        let mut lo = a;
        for c in pts {
            if c > lo {
                out.push((lo, c));
                lo = c;
            }
        }
        out.push((lo, b));
    }
    out
}

/// `∫_{S(c,ρ) ∩ region} G(x, y) dσ(y)`.
fn surface_green_integral(
    kernel: &GreenKernel,
    x: &[f64],
    c: &[f64],
    rho: f64,
    region: &Region<'_>,
    level: usize,
) -> Integral {
    let d = x.len();
    let h = geom::dist(x, c);
    let axis = match geom::normalized(&geom::sub(x, c)) {
        Some(a) => a,
        None => {
            let mut e = vec![0.0; d];
            e[0] = 1.0;
            e
        }
    };
    // |y − x|² = h² + ρ² − 2hρ cos θ for y = c + ρω with cos θ = ⟨ω, axis⟩
    let angle_for = |dist: f64| -> f64 {
        if h == 0.0 {
            return if dist > rho { PI } else { 0.0 };
        }
        let t = (h * h + rho * rho - dist * dist) / (2.0 * h * rho);
        t.clamp(-1.0, 1.0).acos()
    };
    let (c_in, c_out) = (geom::dist(region.center, x) < 1e-15, true);
    let theta0 = if c_in && region.r_in > 0.0 {
        angle_for(region.r_in)
    } else {
        0.0
    };
    let theta1 = if c_in && c_out && region.r_out.is_finite() {
        angle_for(region.r_out)
    } else {
        PI
    };
    if theta1 <= theta0 {
        return Integral::zero();
    }
    let sub = SphereRule::new(d - 1, level + 1);
    let radial = RadialRule::default().with_tolerances(1e-14, 1e-11);
    let mut y = vec![0.0; d];
    let on_sphere = (h - rho).abs() < 1e-12 * rho.max(1.0);
    let v = sphere_band_integral(
        &axis,
        (theta0, theta1),
        theta0 == 0.0 && on_sphere || theta0 > 0.0,
        &radial,
        &sub,
        |om| {
            geom::axpy_into(&mut y, c, rho, om);
            if !region.domain.contains(&y) {
                return 0.0;
            }
            kernel.eval(x, &y)
        },
    );
    v.scaled(rho.powi(d as i32 - 1))
}

const DEFAULT_LEVEL: usize = 1;

fn max_level(d: usize) -> usize {
    match d {
        2 => 5,
        3 => 3,
        _ => 2,
    }
}

/// Refines the angular level until two consecutive levels agree within `tol`.
fn refine(d: usize, tol: f64, mut at: impl FnMut(usize) -> Integral) -> Integral {
    let mut prev = at(DEFAULT_LEVEL);
    if prev.diverged {
        return prev;
    }
    let mut level = DEFAULT_LEVEL + 1;
    loop {
        let cur = at(level);
        if cur.diverged {
            return cur;
        }
        let err = (cur.value - prev.value).abs() + cur.error;
        if err <= tol || level >= max_level(d) {
            return Integral {
                value: cur.value,
                error: err,
                diverged: false,
            };
        }
        prev = cur;
        level += 1;
    }
}

/// `Rμ(x) = ∫ G_D(x, y) μ(dy)` on a ball domain.
pub fn potential(mu: &MeasureSpec, op: &OperatorSpec, x: &[f64], tol: f64) -> Result<PotentialValue> {
    let kernel = GreenKernel::for_operator(op)?;
    if !op.domain.contains(x) {
        return Err(Error::Domain(format!("x = {x:?} is not in D")));
    }
    if mu.is_zero() {
        return Ok(PotentialValue::from_integral(Integral::zero(), tol));
    }
    let region = Region {
        domain: &op.domain,
        center: x,
        r_in: 0.0,
        r_out: f64::INFINITY,
    };
    let v = refine(op.dim, tol, |level| green_integral(&kernel, x, mu, &region, level));
    Ok(PotentialValue::from_integral(v, tol))
}

/// Least-squares fit `J_δ ≈ a + b log(1/δ) + c δ^{−γ}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceFit {
    pub gamma: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub se_a: f64,
    pub se_b: f64,
    pub se_c: f64,
    pub rss: f64,
}

impl DivergenceFit {
    pub const GAMMAS: [f64; 6] = [0.25, 0.5, 0.75, 1.0, 1.5, 2.0];

    /// A coefficient is significant when it exceeds `factor` standard errors.
    pub fn log_significant(&self, factor: f64) -> bool {
        self.b > 0.0 && self.b > factor * self.se_b
    }

    pub fn power_significant(&self, factor: f64) -> bool {
        self.c > 0.0 && self.c > factor * self.se_c
    }

    pub fn eval(&self, delta: f64) -> f64 {
        self.a + self.b * (1.0 / delta).ln() + self.c * delta.powf(-self.gamma)
    }
}

/// `J_δ(x, r) = ∫_{δ < |y−x| < r} G_D(x, y) ν(dy)` along a cutoff schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalGreenIntegral {
    pub x: Vec<f64>,
    pub r: f64,
    pub deltas: Vec<f64>,
    pub values: Vec<f64>,
    /// Quadrature error per entry.
    pub errors: Vec<f64>,
    pub fit: Option<DivergenceFit>,
    /// `true` when the fit was ill-conditioned or had too few points.
    pub no_fit: bool,
}

/// Local Green integrals for a decreasing cutoff schedule.
///
/// Values are accumulated shell by shell, so they are nondecreasing as `δ`
/// shrinks by construction.
pub fn local_green_integral(
    x: &[f64],
    r: f64,
    deltas: &[f64],
    nu: &MeasureSpec,
    op: &OperatorSpec,
) -> Result<LocalGreenIntegral> {
    let kernel = GreenKernel::for_operator(op)?;
    if op.domain.boundary_distance(x) < r {
        return Err(Error::Domain(format!("B({x:?}, {r}) is not inside D")));
    }
    if deltas.windows(2).any(|w| w[1] >= w[0])
        || deltas.first().is_some_and(|&d0| d0 >= r)
        || deltas.iter().any(|&d| d <= 0.0)
    {
        return Err(Error::Domain("cutoffs must decrease strictly within (0, r)".into()));
    }
    let tol = 1e-9;
    let mut values = Vec::with_capacity(deltas.len());
    let mut errors = Vec::with_capacity(deltas.len());
    let mut acc = KahanSum::new();
    let mut err_acc = 0.0;
    let mut outer = r;
    for &delta in deltas {
        let region = Region {
            domain: &op.domain,
            center: x,
            r_in: delta,
            r_out: outer,
        };
        let shell = refine(op.dim, tol, |level| green_integral(&kernel, x, nu, &region, level));
        if shell.diverged {
            values.push(f64::INFINITY);
            errors.push(f64::INFINITY);
            outer = delta;
            continue;
        }
        acc.add(shell.value.max(0.0));
        err_acc += shell.error;
        values.push(acc.value());
        errors.push(err_acc);
        outer = delta;
    }
    let (fit, no_fit) = match fit_divergence(deltas, &values, &errors) {
        Some(f) => (Some(f), false),
        None => (None, true),
    };
    Ok(LocalGreenIntegral {
        x: x.to_vec(),
        r,
        deltas: deltas.to_vec(),
        values,
        errors,
        fit,
        no_fit,
    })
}

/// Best fit over the exponent grid; `None` when ill-conditioned.
pub fn fit_divergence(deltas: &[f64], values: &[f64], errors: &[f64]) -> Option<DivergenceFit> {
    let n = deltas.len();
    if n < 5 || values.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let noise = errors.iter().fold(0.0f64, |m, e| m.max(*e)).max(1e-12 * scale);
    let y = DVector::from_iterator(n, values.iter().map(|v| v / scale));
    let mut best: Option<DivergenceFit> = None;
    for &gamma in &DivergenceFit::GAMMAS {
        let d0 = deltas[0];
        // columns rescaled to O(1) for conditioning
        let col_log: Vec<f64> = deltas.iter().map(|d| (d0 / d).ln()).collect();
        let col_pow: Vec<f64> = deltas.iter().map(|d| (d0 / d).powf(gamma)).collect();
        let lmax = col_log.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let pmax = col_pow.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let x = DMatrix::from_fn(n, 3, |i, j| match j {
            0 => 1.0,
            1 => col_log[i] / lmax,
            _ => col_pow[i] / pmax,
        });
        let svd = x.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > 1e-10 * smax) {
            continue;
        }
        let beta = svd.solve(&y, 1e-14).ok()?;
        let resid = &y - &x * &beta;
        let rss = resid.norm_squared();
        let dof = (n - 3).max(1) as f64;
        let sigma2 = (rss / dof).max((noise / scale).powi(2));
        let xtx = x.transpose() * &x;
        let cov = xtx.try_inverse()? * sigma2;
        // undo column scaling: log(d0/δ) = log(1/δ) + log d0
        let b = beta[1] / lmax;
        let c_scaled = beta[2] / pmax;
        let fit = DivergenceFit {
            gamma,
            a: (beta[0] - b * d0.ln()) * scale,
            b: b * scale,
            c: c_scaled * d0.powf(gamma) * scale,
            se_a: cov[(0, 0)].sqrt() * scale,
            se_b: cov[(1, 1)].sqrt() / lmax * scale,
            se_c: cov[(2, 2)].sqrt() / pmax * d0.powf(gamma) * scale,
            rss: rss * scale * scale,
        };
        if best.as_ref().is_none_or(|b| fit.rss < b.rss) {
            best = Some(fit);
        }
    }
    best
}

/// Geometric tail test on a nondecreasing sequence: increments contract and
/// the extrapolated remainder is below `tol` relative to the last value.
pub fn cauchy_converged(values: &[f64], tol: f64) -> Option<f64> {
    let n = values.len();
    if n < 4 || values.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let inc: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let m = inc.len();
    let last = *values.last()?;
    let floor = 1e-13 * last.abs().max(1e-300);
    if inc[m - 1].abs() <= floor && inc[m - 2].abs() <= floor {
        return Some(last);
    }
    let ratios: Vec<f64> = (m - 3..m - 1)
        .map(|k| {
            if inc[k].abs() <= floor {
                0.0
            } else {
                inc[k + 1] / inc[k]
            }
        })
        .collect();
    if ratios.iter().any(|r| !(*r < 0.9)) {
        return None;
    }
    let rho = ratios.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let tail = inc[m - 1].abs() * rho / (1.0 - rho);
    (tail <= tol * last.abs()).then_some(last + inc[m - 1] * rho / (1.0 - rho))
}

/// Limit and bracket of the alternating Neumann series for `R^ν`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeumannResult {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub terms: usize,
    /// Partial sums `S_0, S_1, …` at the evaluation point.
    pub partial_sums: Vec<f64>,
}

impl NeumannResult {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Radially symmetric measure around the ball center.
#[derive(Clone, Debug, Default)]
struct RadialMeasure {
    /// `(weight, a)` for density `weight · s^{−a}`.
    densities: Vec<(f64, f64)>,
    /// `(radius, weight)` for `weight ·` surface measure.
    shells: Vec<(f64, f64)>,
}

impl RadialMeasure {
    fn from_spec(mu: &MeasureSpec, center: &[f64]) -> Result<Self> {
        let mut m = RadialMeasure::default();
        for t in &mu.terms {
            if t.weight == 0.0 {
                continue;
            }
            match &t.kind {
                TermKind::ConstantDensity { lambda } => m.densities.push((t.weight * lambda, 0.0)),
                TermKind::DensityPower { a, pole } if geom::dist(pole, center) < 1e-14 => {
                    m.densities.push((t.weight, *a))
                }
                TermKind::SphereSurface { center: c, radius } if geom::dist(c, center) < 1e-14 => {
                    m.shells.push((*radius, t.weight))
                }
                _ => {
                    return Err(Error::Unsupported(
                        "the series resolvent handles measures radial about the ball center; use fk_resolvent".into(),
                    ))
                }
            }
        }
        Ok(m)
    }

    fn density(&self, s: f64) -> f64 {
        self.densities
            .iter()
            .map(|(w, a)| if *a == 0.0 { *w } else { w * s.powf(-a) })
            .sum()
    }

    fn is_zero(&self) -> bool {
        self.densities.iter().all(|(w, _)| *w == 0.0) && self.shells.iter().all(|(_, w)| *w == 0.0)
    }
}

/// Nyström discretization of radial potentials on `B(0, R)` for `−Δ`.
///
/// Functions are represented by their values at Gauss nodes of panels graded
/// geometrically toward the center. Kernel rows use product integration: the
/// kink of `Φ(max(ρ, s))` at `s = ρ` is a panel split point.
struct RadialGrid {
    d: usize,
    big_r: f64,
    breaks: Vec<f64>,
    order: usize,
    /// Nodes, panel-major.
    nodes: Vec<f64>,
    /// Reference nodes on [-1, 1] and barycentric weights.
    ref_nodes: Vec<f64>,
    bary: Vec<f64>,
    fine: GaussLegendre,
}

impl RadialGrid {
    fn new(d: usize, big_r: f64, extra_breaks: &[f64]) -> Self {
        let order = 12;
        let mut breaks: Vec<f64> = (0..=44).map(|k| big_r * 0.5f64.powi(k)).collect();
        breaks.extend(extra_breaks.iter().copied().filter(|b| *b > 0.0 && *b < big_r));
        breaks.sort_by(|a, b| a.total_cmp(b));
        breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-14 * big_r);
        let gl = GaussLegendre::new(order);
        let ref_nodes = gl.nodes().to_vec();
        let mut nodes = Vec::new();
        for w in breaks.windows(2) {
            nodes.extend(gl.mapped(w[0], w[1]).map(|(s, _)| s));
        }
        // barycentric weights for Legendre points
        let bary: Vec<f64> = (0..order)
            .map(|j| {
                let mut p = 1.0;
                for k in 0..order {
                    if k != j {
                        p *= ref_nodes[j] - ref_nodes[k];
                    }
                }
                1.0 / p
            })
            .collect();
        RadialGrid {
            d,
            big_r,
            breaks,
            order,
            nodes,
            ref_nodes,
            bary,
            fine: GaussLegendre::new(24),
        }
    }

    fn len(&self) -> usize {
        self.nodes.len()
    }

    fn phi(&self, s: f64) -> f64 {
        if self.d == 2 {
            -s.ln() / (2.0 * PI)
        } else {
            s.powi(2 - self.d as i32) / ((self.d as f64 - 2.0) * sphere_area(self.d))
        }
    }

    fn kernel(&self, rho: f64, s: f64) -> f64 {
        self.phi(rho.max(s)) - self.phi(self.big_r)
    }

    /// Lagrange basis values at `t ∈ [-1, 1]`.
    fn basis(&self, t: f64, out: &mut [f64]) {
        for (j, n) in self.ref_nodes.iter().enumerate() {
            if (t - n).abs() < 1e-15 {
                out.iter_mut().for_each(|o| *o = 0.0);
                out[j] = 1.0;
                return;
            }
        }
        let mut denom = 0.0;
        for ((o, b), n) in out.iter_mut().zip(&self.bary).zip(&self.ref_nodes).take(self.order) {
            *o = b / (t - n);
            denom += *o;
        }
        out.iter_mut().for_each(|o| *o /= denom);
    }

    fn panel_of(&self, s: f64) -> Option<usize> {
        if s < self.breaks[0] || s > self.big_r {
            return None;
        }
        let i = self.breaks.partition_point(|b| *b <= s);
        Some(i.saturating_sub(1).min(self.breaks.len() - 2))
    }

    /// Row vector `v` with `v · w ≈ ∫ K(ρ, s) w(s) μ(ds)` for `w` given at nodes.
    fn row(&self, rho: f64, mu: &RadialMeasure) -> Vec<f64> {
        let mut row = vec![0.0; self.len()];
        let area = sphere_area(self.d);
        let mut basis = vec![0.0; self.order];
        if !mu.densities.is_empty() {
            for (p, w) in self.breaks.windows(2).enumerate() {
                let (a, b) = (w[0], w[1]);
                let pieces: &[(f64, f64)] = if rho > a && rho < b {
                    &[(a, rho), (rho, b)]
                } else {
                    &[(a, b)]
                };
                for &(lo, hi) in pieces {
                    for (s, ws) in self.fine.mapped(lo, hi) {
                        let m = ws * self.kernel(rho, s) * mu.density(s) * area * s.powi(self.d as i32 - 1);
                        self.basis((2.0 * s - a - b) / (b - a), &mut basis);
                        for j in 0..self.order {
                            row[p * self.order + j] += m * basis[j];
                        }
                    }
                }
            }
        }
        for &(radius, weight) in &mu.shells {
            let Some(p) = self.panel_of(radius) else { continue };
            let (a, b) = (self.breaks[p], self.breaks[p + 1]);
            let m = weight * area * radius.powi(self.d as i32 - 1) * self.kernel(rho, radius);
            self.basis((2.0 * radius - a - b) / (b - a), &mut basis);
            for j in 0..self.order {
                row[p * self.order + j] += m * basis[j];
            }
        }
        row
    }

    /// `Rμ(ρ)` directly.
    fn potential(&self, rho: f64, mu: &RadialMeasure) -> f64 {
        let area = sphere_area(self.d);
        let mut acc = KahanSum::new();
        for w in self.breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            let pieces: &[(f64, f64)] = if rho > a && rho < b {
                &[(a, rho), (rho, b)]
            } else {
                &[(a, b)]
            };
            for &(lo, hi) in pieces {
                acc.add(self.fine.integrate(lo, hi, |s| {
                    self.kernel(rho, s) * mu.density(s) * area * s.powi(self.d as i32 - 1)
                }));
            }
        }
        // innermost ball below the first break, where K(ρ, ·) is constant for ρ above it
        let eps = self.breaks[0];
        for (w, a) in &mu.densities {
            let e = self.d as f64 - a;
            if e > 0.0 && rho > eps {
                acc.add(w * area * eps.powf(e) / e * self.kernel(rho, eps));
            }
        }
        for &(radius, weight) in &mu.shells {
            acc.add(weight * area * radius.powi(self.d as i32 - 1) * self.kernel(rho, radius));
        }
        acc.value()
    }
}

/// Deterministic solver for `R^ν` on a Brownian ball with radial `ν`.
pub struct NeumannSolver {
    center: Vec<f64>,
    grid: RadialGrid,
    nu: RadialMeasure,
    /// `T_{ij}`: `(T w)(s_i) = Σ_j T_{ij} w(s_j)` with `T w = R(w ν)`.
    t: DMatrix<f64>,
    pub max_terms: usize,
    pub tol: f64,
}

impl NeumannSolver {
    pub fn new(op: &OperatorSpec, nu: &MeasureSpec) -> Result<Self> {
        let DomainSpec::Ball { center, radius } = &op.domain else {
            return Err(Error::Unsupported(
                "series resolvent needs a ball domain; use fk_resolvent".into(),
            ));
        };
        if !op.is_brownian() {
            return Err(Error::Unsupported(
                "series resolvent implemented for the Laplacian; use fk_resolvent for Δ^α".into(),
            ));
        }
        let rnu = RadialMeasure::from_spec(nu, center)?;
        if rnu.densities.iter().any(|(w, a)| *w > 0.0 && *a >= 2.0) {
            return Err(Error::Unsupported(
                "potential of ν is unbounded at the pole, so the series does not apply; use fk_resolvent".into(),
            ));
        }
        let shells: Vec<f64> = rnu.shells.iter().map(|s| s.0).collect();
        let grid = RadialGrid::new(op.dim, *radius, &shells);
        let n = grid.len();
        let mut t = DMatrix::zeros(n, n);
        if !rnu.is_zero() {
            for i in 0..n {
                let row = grid.row(grid.nodes[i], &rnu);
                for (j, v) in row.into_iter().enumerate() {
                    t[(i, j)] = v;
                }
            }
        }
        Ok(NeumannSolver {
            center: center.clone(),
            grid,
            nu: rnu,
            t,
            max_terms: 200,
            tol: 1e-12,
        })
    }

    pub fn with_limits(mut self, max_terms: usize, tol: f64) -> Self {
        self.max_terms = max_terms;
        self.tol = tol;
        self
    }

    fn rho(&self, x: &[f64]) -> Result<f64> {
        let rho = geom::dist(x, &self.center);
        if rho >= self.grid.big_r {
            return Err(Error::Domain(format!("x = {x:?} is not in D")));
        }
        Ok(rho)
    }

    /// `Rμ(x)` for a radial source.
    pub fn potential(&self, mu: &MeasureSpec, x: &[f64]) -> Result<f64> {
        let m = RadialMeasure::from_spec(mu, &self.center)?;
        Ok(self.grid.potential(self.rho(x)?, &m))
    }

    fn source_nodes(&self, m: &RadialMeasure) -> DVector<f64> {
        DVector::from_iterator(
            self.grid.len(),
            self.grid.nodes.iter().map(|&s| self.grid.potential(s, m)),
        )
    }

    /// `R^ν μ(x)`.
    pub fn resolvent(&self, mu: &MeasureSpec, x: &[f64]) -> Result<NeumannResult> {
        let m = RadialMeasure::from_spec(mu, &self.center)?;
        let rho = self.rho(x)?;
        let w0 = self.source_nodes(&m);
        let w0x = self.grid.potential(rho, &m);
        self.series(rho, w0, w0x)
    }

    /// `R^ν((Rμ)·ν)(x)`, the second term of the resolvent identity.
    pub fn resolvent_of_potential_times_nu(&self, mu: &MeasureSpec, x: &[f64]) -> Result<NeumannResult> {
        let m = RadialMeasure::from_spec(mu, &self.center)?;
        let rho = self.rho(x)?;
        let r = self.source_nodes(&m);
        // R((Rμ)ν) = T(Rμ)
        let w0 = &self.t * &r;
        let row = DVector::from_vec(self.grid.row(rho, &self.nu));
        let w0x = row.dot(&r);
        self.series(rho, w0, w0x)
    }

    fn series(&self, rho: f64, w0: DVector<f64>, w0x: f64) -> Result<NeumannResult> {
        let row = DVector::from_vec(self.grid.row(rho, &self.nu));
        let mut sums = vec![w0x];
        let mut term = w0;
        let mut term_x = w0x;
        let mut prev_norm = term.amax();
        let mut growth = 0usize;
        let mut sum = KahanSum::new();
        sum.add(w0x);
        let mut k = 0;
        while k < self.max_terms {
            k += 1;
            let next = &self.t * &term;
            let next_x = row.dot(&term);
            let sign = if k % 2 == 1 { -1.0 } else { 1.0 };
            sum.add(sign * next_x);
            sums.push(sum.value());
            let norm = next.amax();
            if next_x.abs() <= self.tol * sums[0].abs().max(1e-300)
                && norm <= self.tol * prev_norm.max(1e-300).max(term.amax())
            {
                term_x = next_x;
                break;
            }
            if norm == 0.0 && next_x == 0.0 {
                term_x = 0.0;
                break;
            }
            if prev_norm > 0.0 && norm >= prev_norm {
                growth += 1;
                if growth >= 3 {
                    return Err(Error::NonContracting {
                        terms: k,
                        ratio: norm / prev_norm,
                    });
                }
            }
            prev_norm = norm;
            term = next;
            term_x = next_x;
        }
        if k >= self.max_terms && term_x.abs() > self.tol * sums[0].abs().max(1e-300) {
            let n = sums.len();
            return Err(Error::NonContracting {
                terms: k,
                ratio: if n >= 3 {
                    ((sums[n - 1] - sums[n - 2]) / (sums[n - 2] - sums[n - 3])).abs()
                } else {
                    f64::NAN
                },
            });
        }
        let n = sums.len();
        let (a, b) = if n >= 2 {
            (sums[n - 2], sums[n - 1])
        } else {
            (sums[0], sums[0])
        };
        Ok(NeumannResult {
            value: 0.5 * (a + b),
            lower: a.min(b),
            upper: a.max(b),
            terms: n - 1,
            partial_sums: sums,
        })
    }
}

/// `R^ν μ(x)` by the alternating series `Σ (−1)^k T^k(Rμ)`, `T w = R(w ν)`.
pub fn neumann_resolvent(
    mu: &MeasureSpec,
    nu: &MeasureSpec,
    op: &OperatorSpec,
    x: &[f64],
    max_terms: usize,
    tol: f64,
) -> Result<NeumannResult> {
    NeumannSolver::new(op, nu)?.with_limits(max_terms, tol).resolvent(mu, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::expected_residence;
    use proptest::prelude::*;

    fn op3() -> OperatorSpec {
        OperatorSpec::brownian(DomainSpec::unit_ball(3))
    }

    #[test]
    fn potential_examples() {
        let op = op3();
        let v = potential(&MeasureSpec::power(1.0, 1.0, vec![0.0; 3]), &op, &[0.0; 3], 1e-8).unwrap();
        assert!((v.value - 0.5).abs() < 1e-8, "{v:?}");
        let v = potential(&MeasureSpec::sphere(1.0, vec![0.0; 3], 0.5), &op, &[0.0; 3], 1e-8).unwrap();
        assert!((v.value - 0.25).abs() < 1e-8, "{v:?}");
        let v = potential(&MeasureSpec::zero(), &op, &[0.0; 3], 1e-8).unwrap();
        assert_eq!(v.value, 0.0);
    }

    #[test]
    fn potential_of_lebesgue_is_residence() {
        let op = op3();
        let x = [0.3, -0.2, 0.4];
        let v = potential(&MeasureSpec::constant(1.0), &op, &x, 1e-8).unwrap();
        let e = expected_residence(3, 1.0, &x).unwrap();
        assert!((v.value - e).abs() < 1e-7, "{v:?} {e}");
    }

    #[test]
    fn off_center_pole_and_surface() {
        // Radial potential of |y|^{-1} at x ≠ 0, computed with the series grid
        let op = op3();
        let mu = MeasureSpec::power(1.0, 1.0, vec![0.0; 3]);
        let x = [0.3, 0.2, 0.1];
        let solver = NeumannSolver::new(&op, &MeasureSpec::zero()).unwrap();
        let want = solver.potential(&mu, &x).unwrap();
        let got = potential(&mu, &op, &x, 1e-8).unwrap();
        assert!((got.value - want).abs() < 1e-6, "{got:?} {want}");

        let s = MeasureSpec::sphere(1.0, vec![0.0; 3], 0.5);
        let want = solver.potential(&s, &x).unwrap();
        let got = potential(&s, &op, &x, 1e-8).unwrap();
        assert!((got.value - want).abs() < 1e-6, "{got:?} {want}");
    }

    #[test]
    fn potential_divergence_flag() {
        let op = op3();
        let v = potential(&MeasureSpec::power(6.0, 2.0, vec![0.0; 3]), &op, &[0.0; 3], 1e-6).unwrap();
        assert!(v.infinite);
        let v = potential(&MeasureSpec::power(1.0, 3.0, vec![0.2, 0.0, 0.0]), &op, &[0.0; 3], 1e-6).unwrap();
        assert!(v.infinite);
    }

    #[test]
    fn local_integral_log_divergence() {
        let op = op3();
        let nu = MeasureSpec::power(6.0, 2.0, vec![0.0; 3]);
        let deltas: Vec<f64> = (1..=10).map(|k| 0.25 * 0.5f64.powi(k)).collect();
        let j = local_green_integral(&[0.0; 3], 0.5, &deltas, &nu, &op).unwrap();
        assert!(j.values.windows(2).all(|w| w[1] >= w[0]));
        let fit = j.fit.unwrap();
        // J_δ = 6 ∫_δ^r (1/s − 1) ds = 6 log(r/δ) − 6(r − δ); the linear
        // remainder is outside the fit model and biases b slightly
        assert!((fit.b - 6.0).abs() < 0.6, "{fit:?}");
        assert!(fit.log_significant(5.0));
        assert!(cauchy_converged(&j.values, 1e-6).is_none());
    }

    #[test]
    fn local_integral_convergent_pole() {
        let op = op3();
        let nu = MeasureSpec::power(1.0, 1.0, vec![0.0; 3]);
        let deltas: Vec<f64> = (1..=30).map(|k| 0.5 * 0.5f64.powi(k)).collect();
        let j = local_green_integral(&[0.0; 3], 0.999, &deltas, &nu, &op).unwrap();
        let lim = cauchy_converged(&j.values, 1e-6).unwrap();
        // full-ball value is 1/2; the r = 0.999 share differs by (1−r)²/2
        let want = 0.5 - 0.5 * 0.001f64.powi(2);
        assert!((lim - want).abs() < 1e-6, "{lim} {want}");
    }

    #[test]
    fn neumann_examples() {
        let op = op3();
        let one = MeasureSpec::constant(1.0);
        let r = neumann_resolvent(&one, &MeasureSpec::zero(), &op, &[0.0; 3], 50, 1e-12).unwrap();
        assert!((r.value - 1.0 / 6.0).abs() < 1e-10, "{r:?}");
        assert_eq!(r.terms, 1);
        let r = neumann_resolvent(&one, &MeasureSpec::constant(1.0), &op, &[0.0; 3], 200, 1e-12).unwrap();
        let want = 1.0 - 1.0 / 1f64.sinh();
        assert!((r.value - want).abs() < 1e-8, "{r:?} vs {want}");
        assert!(r.lower <= want + 1e-12 && want <= r.upper + 1e-12);
        // off-center: 1 − sinh(ρ)/(ρ sinh 1)
        let x = [0.3, 0.4, 0.0];
        let r = neumann_resolvent(&one, &MeasureSpec::constant(1.0), &op, &x, 200, 1e-12).unwrap();
        let want = 1.0 - 0.5f64.sinh() / (0.5 * 1f64.sinh());
        assert!((r.value - want).abs() < 1e-8, "{r:?} vs {want}");
    }

    #[test]
    fn neumann_partial_sums_bracket() {
        let op = op3();
        let one = MeasureSpec::constant(1.0);
        let r = neumann_resolvent(&one, &MeasureSpec::constant(2.0), &op, &[0.1, 0.0, 0.0], 200, 1e-12).unwrap();
        let s = &r.partial_sums;
        for (k, &v) in s.iter().enumerate().take(s.len() - 2) {
            if k % 2 == 0 {
                assert!(v >= r.value - 1e-12);
            } else {
                assert!(v <= r.value + 1e-12);
            }
        }
        let w: Vec<f64> = s.windows(2).map(|p| (p[1] - p[0]).abs()).collect();
        assert!(w[4] < 0.5 * w[1]);
    }

    #[test]
    fn neumann_rejects_nonradial_and_stable() {
        let op = op3();
        let nu = MeasureSpec::power(1.0, 1.0, vec![0.2, 0.0, 0.0]);
        assert!(matches!(NeumannSolver::new(&op, &nu), Err(Error::Unsupported(_))));
        let st = OperatorSpec::fractional(0.5, DomainSpec::unit_ball(3));
        assert!(matches!(
            NeumannSolver::new(&st, &MeasureSpec::zero()),
            Err(Error::Unsupported(_))
        ));
        let big = MeasureSpec::constant(200.0);
        let err = neumann_resolvent(&MeasureSpec::constant(1.0), &big, &op, &[0.0; 3], 200, 1e-12);
        assert!(matches!(err, Err(Error::NonContracting { .. })), "{err:?}");
    }

    #[test]
    fn resolvent_identity_residual() {
        let op = op3();
        let nu = MeasureSpec::constant(0.5).plus(&MeasureSpec::sphere(0.3, vec![0.0; 3], 0.5));
        let mu = MeasureSpec::power(1.0, 1.0, vec![0.0; 3]);
        let s = NeumannSolver::new(&op, &nu).unwrap();
        for x in [[0.0, 0.0, 0.0], [0.2, 0.3, 0.1], [0.0, 0.0, 0.9]] {
            let a = s.resolvent(&mu, &x).unwrap().value;
            let b = s.resolvent_of_potential_times_nu(&mu, &x).unwrap().value;
            let r = s.potential(&mu, &x).unwrap();
            assert!((a + b - r).abs() < 1e-6, "{a} + {b} vs {r}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn series_is_dominated_by_potential(lambda in 0.0f64..3.0, rx in 0.0f64..0.95) {
            let op = op3();
            let one = MeasureSpec::constant(1.0);
            let x = [rx, 0.0, 0.0];
            let r = neumann_resolvent(&one, &MeasureSpec::constant(lambda), &op, &x, 200, 1e-12).unwrap();
            let p = expected_residence(3, 1.0, &x).unwrap();
            prop_assert!(r.value <= p + 1e-10);
            prop_assert!(r.value >= 0.0);
        }

        #[test]
        fn potential_is_linear(w1 in 0.1f64..2.0, w2 in 0.1f64..2.0, rx in 0.0f64..0.7) {
            let op = op3();
            let x = [rx, 0.1, 0.0];
            let m1 = MeasureSpec::power(w1, 1.0, vec![0.0; 3]);
            let m2 = MeasureSpec::sphere(w2, vec![0.0; 3], 0.5);
            let a = potential(&m1, &op, &x, 1e-8).unwrap();
            let b = potential(&m2, &op, &x, 1e-8).unwrap();
            let c = potential(&m1.plus(&m2), &op, &x, 1e-8).unwrap();
            prop_assert!((a.value + b.value - c.value).abs() <= a.error + b.error + c.error + 1e-9);
        }
    }
}
