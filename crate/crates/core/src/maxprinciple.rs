//! Zero sets of supersolutions: fine-limit representatives, the weak
//! supersolution inequality, point classification and the dichotomy check.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom;
use crate::kernels::{apply_minus_frac_laplacian, ExitKernel, ExitVariant, TestBump};
use crate::model::{DomainSpec, MeasureSpec, OperatorSpec, RadiiSchedule};
use crate::potentials::{cauchy_converged, local_green_integral, DivergenceFit};
use crate::quadrature::{sphere_band_integral, GaussLegendre, Integral, KahanSum, PolarRule, RadialRule, SphereRule};
use crate::special::{ball_volume, sphere_area};
use crate::stats::Parallel;

pub type Field<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

/// Value with a quadrature error estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Average {
    pub value: f64,
    pub error: f64,
    /// The kernel mass does not converge (printed exit kernel).
    #[serde(default)]
    pub diverged: bool,
}

fn spherical_mean(u: Field, x: &[f64], s: f64, rule: &SphereRule) -> f64 {
    let mut y = vec![0.0; x.len()];
    let total: KahanSum = rule
        .iter()
        .map(|(w, wt)| {
            geom::axpy_into(&mut y, x, s, w);
            wt * u(&y)
        })
        .collect();
    total.value() / sphere_area(x.len())
}

/// `⨍_{B(x,r)} u` by product Gauss quadrature, refined until two levels agree.
pub fn volume_average(u: Field, x: &[f64], r: f64) -> Result<Average> {
    let d = x.len();
    if !(r > 0.0) {
        return Err(Error::Domain("radius must be positive".into()));
    }
    debug_assert!((sphere_area(d) / ball_volume(d) - d as f64).abs() < 1e-12 * d as f64);
    let scale = d as f64 / r.powi(d as i32);
    let at = |level: usize| {
        let gl = GaussLegendre::new(8 << level);
        let sphere = SphereRule::new(d, level.min(3));
        gl.mapped(0.0, r)
            .map(|(s, w)| w * s.powi(d as i32 - 1) * spherical_mean(u, x, s, &sphere))
            .collect::<KahanSum>()
            .value()
            * scale
    };
    let mut prev = at(0);
    let mut err = f64::INFINITY;
    for level in 1..=4 {
        let cur = at(level);
        err = (cur - prev).abs();
        prev = cur;
        if err <= 1e-14 * cur.abs().max(1e-300) || err == 0.0 {
            break;
        }
    }
    if !prev.is_finite() {
        return Err(Error::Quadrature {
            achieved: f64::INFINITY,
            requested: 1e-14,
        });
    }
    Ok(Average {
        value: prev,
        error: err,
        diverged: false,
    })
}

/// `I^{(α)}_r u(x)`: the exit-kernel average of `u` over `ℝ^d ∖ B(x, r)`.
///
/// `breaks` lists distances from `x` where the spherical means of `u` jump or kink.
pub fn fractional_average(
    u: Field,
    x: &[f64],
    r: f64,
    alpha: f64,
    variant: ExitVariant,
    breaks: &[f64],
) -> Result<Average> {
    let d = x.len();
    let kernel = ExitKernel::new(d, alpha, r, variant)?;
    let e = match variant {
        ExitVariant::AsPrinted => 1.0,
        ExitVariant::Normalized => alpha,
    };
    // v = r²/|y−x|² turns the radial kernel into v^{e−1}(1−v)^{−e} dv.
    let pre = 0.5 * kernel.constant() * sphere_area(d) * r.powf(2.0 * alpha - 2.0 * e);
    let mut cuts: Vec<f64> = breaks.iter().filter(|&&s| s > r).map(|&s| (r / s).powi(2)).collect();
    cuts.extend([0.0, 0.5, 1.0]);
    cuts.sort_by(|a, b| a.total_cmp(b));
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let rule = RadialRule::new(12).with_panels(4);
    let at = |level: usize| {
        let sphere = SphereRule::new(d, level);
        let mut total = Integral::zero();
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= 0.5 {
                // integrand ~ v^{e−1} near 0
                total += rule.integrate(
                    |v| {
                        let m = spherical_mean(u, x, r / v.sqrt(), &sphere);
                        if m == 0.0 {
                            0.0
                        } else {
                            v.powf(e - 1.0) * (1.0 - v).powf(-e) * m
                        }
                    },
                    a,
                    b,
                    a < b - a,
                    false,
                );
            } else {
                // in w = 1 − v the integrand ~ w^{−e} near 0
                let (wa, wb) = (1.0 - b, 1.0 - a);
                total += rule.integrate(
                    |w| {
                        let v = 1.0 - w;
                        let m = spherical_mean(u, x, r / v.sqrt(), &sphere);
                        if m == 0.0 {
                            0.0
                        } else {
                            v.powf(e - 1.0) * w.powf(-e) * m
                        }
                    },
                    wa,
                    wb,
                    wa < wb - wa,
                    false,
                );
            }
        }
        total.scaled(pre)
    };
    let lo = at(1);
    let hi = at(2);
    Ok(Average {
        value: hi.value,
        error: (hi.value - lo.value).abs() + hi.error,
        diverged: hi.diverged,
    })
}

/// `u` extended by zero outside `domain`, with the kink radii of its spherical means.
pub fn zero_outside<'a>(u: Field<'a>, domain: &'a DomainSpec) -> impl Fn(&[f64]) -> f64 + Sync + 'a {
    move |y: &[f64]| if domain.contains(y) { u(y) } else { 0.0 }
}

fn domain_breaks(domain: &DomainSpec, x: &[f64]) -> Vec<f64> {
    match domain {
        DomainSpec::Ball { center, radius } => {
            let h = geom::dist(x, center);
            vec![radius - h, radius + h]
        }
        DomainSpec::Annulus { center, r_in, r_out } => {
            let h = geom::dist(x, center);
            vec![(h - r_in).abs(), h + r_in, r_out - h, r_out + h]
        }
        _ => Vec::new(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FineLimitResult {
    pub point: Vec<f64>,
    pub alpha: f64,
    pub radii: Vec<f64>,
    pub averages: Vec<f64>,
    /// Extrapolated `ǔ(x)`.
    pub limit: f64,
    /// Number of power terms in the chosen extrapolation model.
    pub order: usize,
    pub residual: f64,
    /// Largest average over the smallest third of the radii (limsup proxy).
    pub tail_max: f64,
    pub undecided: bool,
}

fn extrapolation_powers(alpha: f64) -> Vec<f64> {
    let mut p = if alpha >= 1.0 {
        vec![2.0, 4.0, 6.0, 8.0]
    } else {
        vec![2.0 * alpha, 2.0, 2.0 * alpha + 2.0, 4.0, 2.0 * alpha + 4.0]
    };
    p.sort_by(|a, b| a.total_cmp(b));
    p.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    p
}

/// Least-squares `A(r) ≈ L + Σ c_k r^{p_k}` for the first `k` powers; returns `(L, rms)`.
fn power_fit(radii: &[f64], values: &[f64], powers: &[f64]) -> Option<(f64, f64)> {
    let n = radii.len();
    let m = powers.len() + 1;
    if n < m {
        return None;
    }
    let rmax = radii.iter().fold(0.0f64, |a, &b| a.max(b));
    let a = DMatrix::from_fn(n, m, |i, j| {
        if j == 0 {
            1.0
        } else {
            (radii[i] / rmax).powf(powers[j - 1])
        }
    });
    let b = DVector::from_column_slice(values);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() < 1e-13 * smax {
        return None;
    }
    let coef = svd.solve(&b, 0.0).ok()?;
    let resid = &a * &coef - &b;
    Some((coef[0], (resid.norm_squared() / n as f64).sqrt()))
}

/// Richardson extrapolation of ball averages (α = 1) or exit-kernel averages (α < 1).
pub fn fine_limit(u: Field, x: &[f64], op: &OperatorSpec, radii: &[f64]) -> Result<FineLimitResult> {
    if radii.len() < 3 {
        return Err(Error::Domain("fine_limit needs at least three radii".into()));
    }
    let mut rs = radii.to_vec();
    rs.sort_by(|a, b| b.total_cmp(a));
    let averages: Vec<f64> = if op.is_brownian() {
        rs.iter()
            .map(|&r| volume_average(u, x, r).map(|a| a.value))
            .collect::<Result<_>>()?
    } else {
        let ext = zero_outside(u, &op.domain);
        let breaks = domain_breaks(&op.domain, x);
        rs.iter()
            .map(|&r| fractional_average(&ext, x, r, op.alpha, ExitVariant::Normalized, &breaks).map(|a| a.value))
            .collect::<Result<_>>()?
    };
    Ok(extrapolate(x, op.alpha, rs, averages))
}

/// Extrapolate a table of averages along decreasing radii.
pub fn extrapolate(x: &[f64], alpha: f64, radii: Vec<f64>, averages: Vec<f64>) -> FineLimitResult {
    let n = radii.len();
    let powers = extrapolation_powers(alpha);
    let last = averages[n - 1];
    let mut best = (last, 0usize, f64::INFINITY);
    let mut prev = last;
    for k in 1..=powers.len() {
        let Some((lim, rms)) = power_fit(&radii, &averages, &powers[..k]) else {
            break;
        };
        let res = (lim - prev).abs().max(rms);
        if res < best.2 {
            best = (lim, k, res);
        }
        prev = lim;
    }
    if !best.2.is_finite() {
        best.2 = (averages[n - 1] - averages[n - 2]).abs();
    }
    let tail = n.div_ceil(3);
    let tail_max = averages[n - tail..].iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let scale = averages.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let monotone = averages.windows(2).all(|w| w[1] <= w[0]) || averages.windows(2).all(|w| w[1] >= w[0]);
    let converged = best.2 <= 1e-6 * scale.max(1e-300);
    FineLimitResult {
        point: x.to_vec(),
        alpha,
        radii,
        averages,
        limit: best.0,
        order: best.1,
        residual: best.2,
        tail_max,
        undecided: !converged && !monotone,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Membership {
    /// Finite local Green integral on a ball around the point.
    InE,
    /// Local Green integral diverges on every tested ball.
    InN,
    Undecided,
}

pub const METHOD_NOTE: &str = "ball-neighborhood test";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub point: Vec<f64>,
    pub verdict: Membership,
    pub radius: f64,
    pub deltas: Vec<f64>,
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub fit: Option<DivergenceFit>,
    /// Cauchy limit when the table converged.
    pub limit: Option<f64>,
    pub method: String,
}

/// Tolerances for [`classify_point`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    /// Relative size of the extrapolated tail accepted as convergence.
    pub cauchy_tol: f64,
    /// Coefficients must exceed this many standard errors.
    pub significance: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            cauchy_tol: 1e-3,
            significance: 5.0,
        }
    }
}

/// Geometric cutoff schedule `r/2, r/4, …` with `count` entries.
pub fn default_deltas(r: f64, count: usize) -> Vec<f64> {
    (1..=count).map(|k| r * 0.5f64.powi(k as i32)).collect()
}

/// Decide whether `x ∈ E_ν` by tabulating `J_δ(x, r)` as `δ → 0`.
pub fn classify_point(
    x: &[f64],
    nu: &MeasureSpec,
    op: &OperatorSpec,
    radius: f64,
    deltas: &[f64],
    opts: &ClassifyOptions,
) -> Result<ClassificationReport> {
    if !op.domain.contains(x) {
        return Err(Error::Domain(format!("{x:?} is not in the domain")));
    }
    let j = local_green_integral(x, radius, deltas, nu, op)?;
    let limit = cauchy_converged(&j.values, opts.cauchy_tol);
    let verdict = if limit.is_some() {
        Membership::InE
    } else if j
        .fit
        .as_ref()
        .is_some_and(|f| f.log_significant(opts.significance) || f.power_significant(opts.significance))
    {
        Membership::InN
    } else {
        Membership::Undecided
    };
    Ok(ClassificationReport {
        point: x.to_vec(),
        verdict,
        radius,
        deltas: j.deltas,
        values: j.values,
        errors: j.errors,
        fit: j.fit,
        limit,
        method: METHOD_NOTE.into(),
    })
}

/// `|S| ∫ s^{d−1} g(s) M_u(s) ds` over `[a, b]` for a radial weight `g` about `c`.
fn radial_pairing(u: Field, c: &[f64], g: &dyn Fn(f64) -> f64, cuts: &[f64], level: usize) -> Integral {
    let d = c.len();
    let sphere = SphereRule::new(d, level);
    let rule = RadialRule::new(12).with_panels(4 << level.min(2));
    let mut total = Integral::zero();
    for w in cuts.windows(2) {
        total += rule.integrate(
            |s| {
                let gs = g(s);
                if gs == 0.0 {
                    return 0.0;
                }
                s.powi(d as i32 - 1) * gs * spherical_mean(u, c, s, &sphere)
            },
            w[0],
            w[1],
            w[0] == 0.0,
            false,
        );
    }
    total.scaled(sphere_area(d))
}

/// `⟨u, −Aξ⟩` for a radial bump.
fn generator_pairing(u: Field, op: &OperatorSpec, bump: &TestBump, level: usize) -> Result<Integral> {
    let c = &bump.center;
    if op.is_brownian() {
        let g = |s: f64| {
            let mut y = c.clone();
            y[0] += s;
            bump.minus_laplacian(&y)
        };
        return Ok(radial_pairing(u, c, &g, &[0.0, bump.radius], level));
    }
    let (lo, hi) = op.domain.bounding_box();
    let far = lo
        .iter()
        .zip(&hi)
        .zip(c)
        .map(|((l, h), ci)| (ci - l).abs().max((h - ci).abs()).powi(2))
        .sum::<f64>()
        .sqrt();
    let mut cuts = vec![0.0, bump.radius, far];
    cuts.extend(
        domain_breaks(&op.domain, c)
            .into_iter()
            .filter(|s| *s > 0.0 && *s < far),
    );
    cuts.sort_by(|a, b| a.total_cmp(b));
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    let alpha = op.alpha;
    let err = std::sync::Mutex::new(None);
    let g = |s: f64| {
        let mut y = c.clone();
        y[0] += s;
        match apply_minus_frac_laplacian(bump, &y, alpha) {
            Ok(v) => v,
            Err(e) => {
                err.lock().expect("error slot").get_or_insert(e);
                0.0
            }
        }
    };
    let ext = zero_outside(u, &op.domain);
    let v = radial_pairing(&ext, c, &g, &cuts, level.min(1));
    if let Some(e) = err.into_inner().expect("error slot") {
        return Err(e);
    }
    Ok(v)
}

/// `⟨u·ν, ξ⟩` over the bump support.
fn measure_pairing(u: Field, nu: &MeasureSpec, domain: &DomainSpec, bump: &TestBump, level: usize) -> Integral {
    let c = &bump.center;
    let rho = bump.radius;
    let d = c.len();
    let mut total = Integral::zero();
    let dens = nu.density_part();
    if !dens.is_zero() {
        // polar coordinates about the pole nearest the bump center, else the center
        let origin = nu
            .poles()
            .filter(|(p, _)| geom::dist(p, c) < rho)
            .min_by(|a, b| geom::dist(a.0, c).total_cmp(&geom::dist(b.0, c)))
            .map_or_else(|| c.clone(), |(p, _)| p.to_vec());
        let rule = PolarRule::new(d, level);
        total += rule.integrate(
            &origin,
            |w| geom::ray_ball(&origin, w, c, rho).into_iter().collect(),
            |y, _| {
                let xi = bump.value(y);
                if xi == 0.0 {
                    0.0
                } else {
                    u(y) * xi * dens.density(domain, y)
                }
            },
            false,
        );
    }
    for (w, sc, sr) in nu.surface_terms() {
        let h = geom::dist(c, sc);
        if h + sr <= rho && h > 0.0 || h == 0.0 && sr < rho {
            // sphere entirely inside the bump support
            let sphere = SphereRule::new(d, level + 2);
            let mut y = vec![0.0; d];
            let v = sphere.integrate(|om| {
                geom::axpy_into(&mut y, sc, sr, om);
                u(&y) * bump.value(&y)
            });
            total += Integral::exact(w * sr.powi(d as i32 - 1) * v);
            continue;
        }
        if h == 0.0 || h - sr >= rho || sr - h >= rho {
            continue;
        }
        let cos_max = ((sr * sr + h * h - rho * rho) / (2.0 * sr * h)).clamp(-1.0, 1.0);
        let axis = geom::scale(&geom::sub(c, sc), 1.0 / h);
        let sub = SphereRule::new(d - 1, level + 1);
        let mut y = vec![0.0; d];
        let v = sphere_band_integral(
            &axis,
            (0.0, cos_max.acos()),
            false,
            &RadialRule::new(12).with_panels(4),
            &sub,
            |om| {
                geom::axpy_into(&mut y, sc, sr, om);
                u(&y) * bump.value(&y)
            },
        );
        total += v.scaled(w * sr.powi(d as i32 - 1));
    }
    total
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpValue {
    pub bump: TestBump,
    pub value: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakTestSummary {
    pub values: Vec<BumpValue>,
    pub min_value: f64,
    pub argmin: usize,
    pub tol: f64,
    pub pass: bool,
}

/// One value `⟨u, −Aξ⟩ + ⟨u·ν, ξ⟩`.
pub fn weak_form_value(u: Field, nu: &MeasureSpec, op: &OperatorSpec, bump: &TestBump) -> Result<BumpValue> {
    if !bump.inside(&op.domain) {
        return Err(Error::Domain(format!(
            "bump B({:?}, {}) is not inside the domain",
            bump.center, bump.radius
        )));
    }
    let eval = |level: usize| -> Result<Integral> {
        let m = measure_pairing(u, nu, &op.domain, bump, level);
        if m.diverged || !m.value.is_finite() {
            return Err(Error::Integrability {
                center: bump.center.clone(),
                radius: bump.radius,
            });
        }
        Ok(generator_pairing(u, op, bump, level)? + m)
    };
    let lo = eval(1)?;
    let hi = eval(2)?;
    Ok(BumpValue {
        bump: bump.clone(),
        value: hi.value,
        error: (hi.value - lo.value).abs() + hi.error,
    })
}

/// Minimum of the weak-form values over a bump family; passes iff `min ≥ −tol`.
pub fn weak_supersolution_test(
    u: Field,
    nu: &MeasureSpec,
    op: &OperatorSpec,
    bumps: &[TestBump],
    tol: f64,
    parallel: &Parallel,
) -> Result<WeakTestSummary> {
    if bumps.is_empty() {
        return Err(Error::Domain("empty bump family".into()));
    }
    let values: Vec<BumpValue> = parallel
        .map_items(bumps, |b| weak_form_value(u, nu, op, b))
        .into_iter()
        .collect::<Result<_>>()?;
    let (argmin, min_value) = values
        .iter()
        .enumerate()
        .map(|(i, v)| (i, v.value))
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    Ok(WeakTestSummary {
        values,
        min_value,
        argmin,
        tol,
        pass: min_value >= -tol,
    })
}

/// Bumps of radius `radius` on a lattice of spacing `spacing` inside the domain,
/// plus one at every interior pole of `ν`.
pub fn bump_family(domain: &DomainSpec, nu: &MeasureSpec, radius: f64, spacing: f64) -> Vec<TestBump> {
    let mut out: Vec<TestBump> = grid_points(domain, spacing, radius)
        .into_iter()
        .map(|c| TestBump::new(c, radius))
        .collect();
    for (p, _) in nu.poles() {
        if domain.boundary_distance(p) > radius && !out.iter().any(|b| geom::dist(&b.center, p) < 1e-12) {
            out.push(TestBump::new(p.to_vec(), radius));
        }
    }
    out
}

/// Lattice points `lo + k·spacing` (aligned so the origin is a node when it lies
/// in the box) with boundary distance above `margin`.
pub fn grid_points(domain: &DomainSpec, spacing: f64, margin: f64) -> Vec<Vec<f64>> {
    let (lo, hi) = domain.bounding_box();
    let d = lo.len();
    let ranges: Vec<(i64, i64)> = lo
        .iter()
        .zip(&hi)
        .map(|(l, h)| ((l / spacing).ceil() as i64, (h / spacing).floor() as i64))
        .collect();
    let mut out = Vec::new();
    let mut idx: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    loop {
        let p: Vec<f64> = idx.iter().map(|&k| k as f64 * spacing).collect();
        if domain.boundary_distance(&p) > margin {
            out.push(p);
        }
        let mut k = d;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] <= ranges[k].1 {
                break;
            }
            idx[k] = ranges[k].0;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DichotomyVerdict {
    /// Every zero lies in `N_ν`.
    Consistent,
    /// `u` vanishes on the whole grid.
    Trivial,
    /// A zero was classified in `E_ν`.
    Violation,
    /// Some zero could not be classified.
    Undecided,
    /// The weak supersolution test failed, so the dichotomy does not apply.
    NotSupersolution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DichotomyOptions {
    /// Relative zero threshold against the grid maximum of `u`.
    pub zero_threshold: f64,
    pub radii: RadiiSchedule,
    pub classify_radius: f64,
    pub delta_count: usize,
    pub classify: ClassifyOptions,
    pub weak_tol: f64,
}

impl Default for DichotomyOptions {
    fn default() -> Self {
        DichotomyOptions {
            zero_threshold: 1e-6,
            radii: RadiiSchedule::geometric(0.05, 1e-4, 8),
            classify_radius: 0.25,
            delta_count: 24,
            classify: ClassifyOptions::default(),
            weak_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridValue {
    pub point: Vec<f64>,
    pub fine: FineLimitResult,
    pub zero: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DichotomyReport {
    pub candidate: String,
    pub nu: MeasureSpec,
    pub grid: Vec<GridValue>,
    pub grid_max: f64,
    pub threshold: f64,
    pub zero_set: Vec<Vec<f64>>,
    pub classifications: Vec<ClassificationReport>,
    pub verdict: DichotomyVerdict,
    pub weak_test: Option<WeakTestSummary>,
}

fn scaled_radii(sched: &RadiiSchedule, limit: f64) -> Vec<f64> {
    let r = sched.radii();
    let f = (limit / sched.r_max).min(1.0);
    r.into_iter().map(|v| v * f).collect()
}

/// Zero set of `ǔ` on the grid and the classification of every zero.
#[allow(clippy::too_many_arguments)]
pub fn dichotomy_check(
    candidate: &str,
    u: Field,
    nu: &MeasureSpec,
    op: &OperatorSpec,
    grid: &[Vec<f64>],
    bumps: &[TestBump],
    opts: &DichotomyOptions,
    parallel: &Parallel,
) -> Result<DichotomyReport> {
    let weak = weak_supersolution_test(u, nu, op, bumps, opts.weak_tol, parallel)?;
    let mut report = DichotomyReport {
        candidate: candidate.into(),
        nu: nu.clone(),
        grid: Vec::new(),
        grid_max: 0.0,
        threshold: 0.0,
        zero_set: Vec::new(),
        classifications: Vec::new(),
        verdict: DichotomyVerdict::Consistent,
        weak_test: Some(weak.clone()),
    };
    if !weak.pass {
        report.verdict = DichotomyVerdict::NotSupersolution;
        return Ok(report);
    }
    let vals: Vec<f64> = grid.iter().map(|x| u(x)).collect();
    if let Some((i, v)) = vals.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(Error::Domain(format!("u({:?}) = {v} < 0", grid[i])));
    }
    let k = vals.iter().fold(0.0f64, |a, &b| a.max(b));
    report.grid_max = k;
    if k == 0.0 {
        report.verdict = DichotomyVerdict::Trivial;
        return Ok(report);
    }
    let truncated = |y: &[f64]| u(y).min(k);
    let threshold = opts.zero_threshold * k;
    report.threshold = threshold;
    let fines: Vec<FineLimitResult> = parallel
        .map_items(grid, |x| {
            let radii = scaled_radii(&opts.radii, 0.5 * op.domain.boundary_distance(x));
            fine_limit(&truncated, x, op, &radii)
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let mut undecided = false;
    for (x, f) in grid.iter().zip(fines) {
        let zero = f.tail_max < threshold;
        undecided |= zero && f.undecided;
        if zero {
            report.zero_set.push(x.clone());
        }
        report.grid.push(GridValue {
            point: x.clone(),
            fine: f,
            zero,
        });
    }
    report.classifications = parallel
        .map_items(&report.zero_set, |z| {
            let r = opts.classify_radius.min(0.5 * op.domain.boundary_distance(z));
            classify_point(z, nu, op, r, &default_deltas(r, opts.delta_count), &opts.classify)
        })
        .into_iter()
        .collect::<Result<_>>()?;
    report.verdict = if undecided
        || report
            .classifications
            .iter()
            .any(|c| c.verdict == Membership::Undecided)
    {
        DichotomyVerdict::Undecided
    } else if report.classifications.iter().any(|c| c.verdict == Membership::InE) {
        DichotomyVerdict::Violation
    } else {
        DichotomyVerdict::Consistent
    };
    Ok(report)
}

/// A point estimate of `u` with its standard error, e.g. from a Monte-Carlo resolvent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledValue {
    pub point: Vec<f64>,
    pub value: f64,
    pub stderr: f64,
}

/// Dichotomy check for a continuous `u` known only through point estimates.
///
/// Sampling cannot certify `u(x) = 0`, so a point either has a 99% lower bound
/// above the threshold or is unresolved. The verdict is `Consistent` (empty zero
/// set), `Trivial` (every estimate is 0) or `Undecided`.
pub fn dichotomy_from_samples(
    candidate: &str,
    samples: &[SampledValue],
    nu: &MeasureSpec,
    op: &OperatorSpec,
    opts: &DichotomyOptions,
) -> Result<DichotomyReport> {
    if samples.is_empty() {
        return Err(Error::Domain("no samples".into()));
    }
    let k = samples.iter().fold(0.0f64, |a, s| a.max(s.value));
    let threshold = opts.zero_threshold * k;
    let mut report = DichotomyReport {
        candidate: candidate.into(),
        nu: nu.clone(),
        grid: Vec::new(),
        grid_max: k,
        threshold,
        zero_set: Vec::new(),
        classifications: Vec::new(),
        verdict: DichotomyVerdict::Consistent,
        weak_test: None,
    };
    if k <= 0.0 {
        report.verdict = DichotomyVerdict::Trivial;
        return Ok(report);
    }
    for s in samples {
        let unresolved = s.value - crate::stats::Z99 * s.stderr <= threshold;
        if unresolved {
            report.verdict = DichotomyVerdict::Undecided;
        }
        report.grid.push(GridValue {
            point: s.point.clone(),
            fine: FineLimitResult {
                point: s.point.clone(),
                alpha: op.alpha,
                radii: Vec::new(),
                averages: Vec::new(),
                limit: s.value,
                order: 0,
                residual: s.stderr,
                tail_max: s.value,
                undecided: unresolved,
            },
            zero: false,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::green_ball_brownian;
    use proptest::prelude::*;

    fn op3() -> OperatorSpec {
        OperatorSpec::brownian(DomainSpec::unit_ball(3))
    }

    fn inverse_square_nu() -> MeasureSpec {
        MeasureSpec::power(6.0, 2.0, vec![0.0; 3])
    }

    fn sq(y: &[f64]) -> f64 {
        geom::norm2(y)
    }

    #[test]
    fn volume_averages_of_simple_fields() {
        let r = 0.3;
        let a = volume_average(&sq, &[0.0; 3], r).unwrap();
        assert!((a.value - 3.0 * r * r / 5.0).abs() < 1e-14);
        let h = |y: &[f64]| y[0];
        let a = volume_average(&h, &[0.2, -0.1, 0.4], r).unwrap();
        assert!((a.value - 0.2).abs() < 1e-10);
        let one = |_: &[f64]| 1.0;
        assert!((volume_average(&one, &[0.0; 2], 0.7).unwrap().value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn fractional_average_mass_and_tail() {
        for &(d, alpha) in &[(2usize, 0.5), (3, 0.25), (3, 0.75)] {
            let x = vec![0.1; d];
            let one = |_: &[f64]| 1.0;
            let a = fractional_average(&one, &x, 0.2, alpha, ExitVariant::Normalized, &[]).unwrap();
            assert!((a.value - 1.0).abs() < 1e-8, "{d} {alpha} {a:?}");
            let far = |y: &[f64]| if geom::dist(y, &x) > 0.4 { 1.0 } else { 0.0 };
            let a = fractional_average(&far, &x, 0.2, alpha, ExitVariant::Normalized, &[0.4]).unwrap();
            let tail = ExitKernel::new(d, alpha, 0.2, ExitVariant::Normalized)
                .unwrap()
                .tail_probability(2.0);
            assert!((a.value - tail).abs() < 1e-8, "{a:?} {tail}");
        }
        let one = |_: &[f64]| 1.0;
        let a = fractional_average(&one, &[0.0; 3], 0.2, 0.5, ExitVariant::AsPrinted, &[]).unwrap();
        assert!(a.diverged);
    }

    #[test]
    fn fine_limit_of_square_at_origin() {
        let radii = RadiiSchedule::geometric(0.1, 1e-3, 6).radii();
        let f = fine_limit(&sq, &[0.0; 3], &op3(), &radii).unwrap();
        assert!(f.limit.abs() < 1e-8 && f.residual < 1e-8, "{f:?}");
        assert!(!f.undecided);
    }

    #[test]
    fn fine_limit_ignores_null_sets_and_tracks_green_sections() {
        let x0 = [0.2, 0.1, 0.0];
        let g = |y: &[f64]| if geom::dist(y, &x0) == 0.0 { 5.0 } else { 1.0 + y[1] };
        let radii = RadiiSchedule::geometric(0.1, 1e-3, 6).radii();
        let f = fine_limit(&g, &x0, &op3(), &radii).unwrap();
        assert!((f.limit - 1.1).abs() < 1e-10);
        let y0 = [-0.3, 0.2, 0.1];
        let gs = |y: &[f64]| green_ball_brownian(3, 1.0, &y0, y).unwrap_or(0.0);
        let x = [0.2, 0.0, 0.1];
        let f = fine_limit(&gs, &x, &op3(), &radii).unwrap();
        let exact = green_ball_brownian(3, 1.0, &y0, &x).unwrap();
        assert!((f.limit - exact).abs() < 1e-6, "{} {exact}", f.limit);
    }

    #[test]
    fn fractional_fine_limit_recovers_continuous_values() {
        let op = OperatorSpec::fractional(0.5, DomainSpec::unit_ball(3));
        let x = [0.3, 0.0, 0.0];
        let radii = RadiiSchedule::geometric(0.05, 1e-4, 8).radii();
        let f = fine_limit(&sq, &x, &op, &radii).unwrap();
        assert!((f.limit - 0.09).abs() < 1e-4, "{f:?}");
        assert!(f.averages.last().map(|a| (a - 0.09).abs()).unwrap() < 2e-3);
    }

    #[test]
    fn classification_fixtures() {
        let opts = ClassifyOptions::default();
        let deltas = default_deltas(0.5, 20);
        let c = classify_point(&[0.0; 3], &inverse_square_nu(), &op3(), 0.5, &deltas, &opts).unwrap();
        assert_eq!(c.verdict, Membership::InN, "{c:?}");
        assert!(c.fit.as_ref().unwrap().log_significant(5.0));
        let c2 = classify_point(&[0.0; 3], &inverse_square_nu().scaled(2.0), &op3(), 0.5, &deltas, &opts).unwrap();
        assert_eq!(c2.verdict, Membership::InN);
        let c = classify_point(
            &[0.1, 0.2, 0.0],
            &MeasureSpec::constant(3.0),
            &op3(),
            0.5,
            &deltas,
            &opts,
        )
        .unwrap();
        assert_eq!(c.verdict, Membership::InE);
        let nu = MeasureSpec::power(1.0, 1.0, vec![0.0; 3]);
        let c = classify_point(&[0.0; 3], &nu, &op3(), 0.5, &deltas, &opts).unwrap();
        assert_eq!(c.verdict, Membership::InE, "{c:?}");
        // ∫_{|y|<r} (1/|y| − 1)/(4π) · |y|⁻¹ dy = r − r²/2
        assert!((c.limit.unwrap() - 0.375).abs() < 1e-3, "{c:?}");
    }

    #[test]
    fn weak_form_of_x2_vanishes() {
        let bumps = vec![
            TestBump::new(vec![0.0; 3], 0.3),
            TestBump::new(vec![0.1, 0.05, 0.0], 0.25),
            TestBump::new(vec![0.5, 0.0, 0.2], 0.2),
        ];
        let s = weak_supersolution_test(&sq, &inverse_square_nu(), &op3(), &bumps, 1e-6, &Parallel::new(1)).unwrap();
        for v in &s.values {
            assert!(v.value.abs() < 1e-6, "{v:?}");
        }
        assert!(s.pass);
    }

    #[test]
    fn weak_form_of_constants_and_green_sections() {
        let bump = TestBump::new(vec![0.1, 0.0, 0.0], 0.3);
        let one = |_: &[f64]| 1.0;
        let v = weak_form_value(&one, &MeasureSpec::zero(), &op3(), &bump).unwrap();
        assert!(v.value.abs() < 1e-10, "{v:?}");
        let v = weak_form_value(&one, &MeasureSpec::constant(2.0), &op3(), &bump).unwrap();
        assert!((v.value - 2.0 * bump.integral()).abs() < 1e-9);
        let x0 = [0.1, 0.0, 0.0];
        let g = |y: &[f64]| green_ball_brownian(3, 1.0, &x0, y).unwrap_or(0.0);
        let v = weak_form_value(&g, &MeasureSpec::zero(), &op3(), &bump).unwrap();
        assert!((v.value - bump.value(&x0)).abs() < 1e-6, "{v:?}");
    }

    #[test]
    fn fractional_weak_form_against_torsion_profile() {
        // ⟨u, (−Δ)^α ξ⟩ = ⟨(−Δ)^α u, ξ⟩ with (−Δ)^α u constant on the ball
        let alpha = 0.5;
        let op = OperatorSpec::fractional(alpha, DomainSpec::unit_ball(3));
        let u = |y: &[f64]| (1.0 - geom::norm2(y)).max(0.0).powf(alpha);
        let bump = TestBump::new(vec![0.2, 0.0, 0.1], 0.3);
        let v = weak_form_value(&u, &MeasureSpec::zero(), &op, &bump).unwrap();
        let exact = crate::kernels::frac_laplacian_of_ball_torsion(3, alpha) * bump.integral();
        assert!((v.value - exact).abs() < 1e-4 * exact, "{} {exact}", v.value);
    }

    #[test]
    fn nonintegrable_product_names_the_bump() {
        let one = |_: &[f64]| 1.0;
        let nu = MeasureSpec::power(1.0, 3.5, vec![0.0; 3]);
        let bump = TestBump::new(vec![0.0; 3], 0.2);
        match weak_form_value(&one, &nu, &op3(), &bump) {
            Err(Error::Integrability { radius, .. }) => assert_eq!(radius, 0.2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dichotomy_for_x2_and_zero() {
        let dom = DomainSpec::unit_ball(3);
        let grid = grid_points(&dom, 0.5, 0.2);
        assert!(grid.iter().any(|p| geom::norm(p) == 0.0));
        let bumps = vec![
            TestBump::new(vec![0.0; 3], 0.3),
            TestBump::new(vec![0.4, 0.0, 0.0], 0.2),
        ];
        let opts = DichotomyOptions {
            delta_count: 16,
            ..Default::default()
        };
        let par = Parallel::new(1);
        let rep = dichotomy_check("paper-example-x2", &sq, &inverse_square_nu(), &op3(), &grid, &bumps, &opts, &par).unwrap();
        assert_eq!(rep.verdict, DichotomyVerdict::Consistent, "{:?}", rep.classifications);
        assert_eq!(rep.zero_set, vec![vec![0.0; 3]]);
        let zero = |_: &[f64]| 0.0;
        let rep = dichotomy_check("zero", &zero, &inverse_square_nu(), &op3(), &grid, &bumps, &opts, &par).unwrap();
        assert_eq!(rep.verdict, DichotomyVerdict::Trivial);
    }

    #[test]
    fn sampled_dichotomy_never_certifies_zeros() {
        let nu = MeasureSpec::constant(1.0);
        let sv = |x: f64, value: f64, stderr: f64| SampledValue {
            point: vec![x, 0.0, 0.0],
            value,
            stderr,
        };
        let opts = DichotomyOptions::default();
        let pos = [sv(0.0, 1.0, 0.01), sv(0.5, 0.2, 0.01)];
        let r = dichotomy_from_samples("u", &pos, &nu, &op3(), &opts).unwrap();
        assert_eq!(r.verdict, DichotomyVerdict::Consistent);
        assert!(r.zero_set.is_empty());
        let weak = [sv(0.0, 1.0, 0.01), sv(0.5, 1e-9, 1e-9)];
        let r = dichotomy_from_samples("u", &weak, &nu, &op3(), &opts).unwrap();
        assert_eq!(r.verdict, DichotomyVerdict::Undecided);
        let none = [sv(0.0, 0.0, 0.0)];
        let r = dichotomy_from_samples("u", &none, &nu, &op3(), &opts).unwrap();
        assert_eq!(r.verdict, DichotomyVerdict::Trivial);
    }

    #[test]
    fn scaling_u_scales_weak_values() {
        let bumps = vec![
            TestBump::new(vec![0.2, 0.0, 0.0], 0.2),
            TestBump::new(vec![-0.3, 0.1, 0.0], 0.25),
        ];
        let nu = MeasureSpec::constant(1.0);
        let base = weak_supersolution_test(&sq, &nu, &op3(), &bumps, 1e-9, &Parallel::new(1)).unwrap();
        for c in [1e-3, 1e3] {
            let u = |y: &[f64]| c * sq(y);
            let s = weak_supersolution_test(&u, &nu, &op3(), &bumps, 1e-9 * c, &Parallel::new(1)).unwrap();
            assert_eq!(s.pass, base.pass);
            assert_eq!(s.argmin, base.argmin);
            for (a, b) in s.values.iter().zip(&base.values) {
                assert!((a.value - c * b.value).abs() <= 1e-10 * c.max(1.0) * b.value.abs().max(1.0));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn averages_are_linear_and_positive(a in 0.0f64..3.0, b in 0.0f64..3.0, x0 in -0.3f64..0.3, r in 0.05f64..0.4) {
            let x = [x0, 0.1, -0.2];
            let f = |y: &[f64]| (y[0] - 0.3).powi(2);
            let g = |y: &[f64]| (1.0 + y[1]).exp();
            let h = |y: &[f64]| a * f(y) + b * g(y);
            let (vf, vg, vh) = (
                volume_average(&f, &x, r).unwrap().value,
                volume_average(&g, &x, r).unwrap().value,
                volume_average(&h, &x, r).unwrap().value,
            );
            prop_assert!(vf >= 0.0 && vg >= 0.0);
            prop_assert!((vh - a * vf - b * vg).abs() < 1e-12 * (1.0 + vh.abs()));
            let (ff, fg, fh) = (
                fractional_average(&f, &x, r, 0.5, ExitVariant::Normalized, &[]).unwrap().value,
                fractional_average(&|y: &[f64]| if geom::norm(y) < 1.0 { g(y) } else { 0.0 }, &x, r, 0.5, ExitVariant::Normalized, &[]).unwrap().value,
                fractional_average(&|y: &[f64]| a * f(y) + b * if geom::norm(y) < 1.0 { g(y) } else { 0.0 }, &x, r, 0.5, ExitVariant::Normalized, &[]).unwrap().value,
            );
            prop_assert!(ff >= 0.0 && fg >= 0.0);
            prop_assert!((fh - a * ff - b * fg).abs() < 1e-9 * (1.0 + fh.abs()));
        }
    }
}
