//! Operators, domains, measures and radius schedules.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geom::{self, Segments};
use crate::quadrature::{Integral, KahanSum, RadialRule, SphereRule};
use crate::special::{ball_volume, sphere_area, sphere_fraction_in_ball};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    BrownianLaplacian,
    FractionalLaplacian,
}

/// Dirichlet operator `Δ` or `Δ^α` restricted to a bounded domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub kind: OperatorKind,
    #[serde(default = "one")]
    pub alpha: f64,
    pub dim: usize,
    pub domain: DomainSpec,
}

fn one() -> f64 {
    1.0
}

impl OperatorSpec {
    pub fn brownian(domain: DomainSpec) -> Self {
        OperatorSpec {
            kind: OperatorKind::BrownianLaplacian,
            alpha: 1.0,
            dim: domain.dim(),
            domain,
        }
    }

    pub fn fractional(alpha: f64, domain: DomainSpec) -> Self {
        OperatorSpec {
            kind: OperatorKind::FractionalLaplacian,
            alpha,
            dim: domain.dim(),
            domain,
        }
    }

    pub fn is_brownian(&self) -> bool {
        self.kind == OperatorKind::BrownianLaplacian
    }

    /// Exponent of the Green singularity, `d − 2α`.
    pub fn singularity_exponent(&self) -> f64 {
        self.dim as f64 - 2.0 * self.alpha
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        Ball { center, radius }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        geom::dist2(x, &self.center) < self.radius * self.radius
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum DomainSpec {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    UnionOfBalls { balls: Vec<Ball> },
    Annulus { center: Vec<f64>, r_in: f64, r_out: f64 },
}

impl DomainSpec {
    pub fn unit_ball(dim: usize) -> Self {
        DomainSpec::Ball {
            center: vec![0.0; dim],
            radius: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Ball { center, .. } | DomainSpec::Annulus { center, .. } => center.len(),
            DomainSpec::Box { lo, .. } => lo.len(),
            DomainSpec::UnionOfBalls { balls } => balls.first().map_or(0, |b| b.center.len()),
        }
    }

    /// Positive inside, with the ball `B(x, δ)` contained in the domain when `δ > 0`.
    ///
    /// For unions this is the largest inscribed component ball, a lower bound for
    /// the true boundary distance.
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        match self {
            DomainSpec::Ball { center, radius } => radius - geom::dist(x, center),
            DomainSpec::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(xi, (l, h))| (xi - l).min(h - xi))
                .fold(f64::INFINITY, f64::min),
            DomainSpec::UnionOfBalls { balls } => balls
                .iter()
                .map(|b| b.radius - geom::dist(x, &b.center))
                .fold(f64::NEG_INFINITY, f64::max),
            DomainSpec::Annulus { center, r_in, r_out } => {
                let r = geom::dist(x, center);
                (r_out - r).min(r - r_in)
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.boundary_distance(x) > 0.0
    }

    /// Parameter intervals where `x + s u` (s ≥ 0) lies in the domain.
    pub fn ray_segments(&self, x: &[f64], u: &[f64]) -> Segments {
        match self {
            DomainSpec::Ball { center, radius } => geom::ray_ball(x, u, center, *radius).into_iter().collect(),
            DomainSpec::Box { lo, hi } => {
                let mut a = 0.0f64;
                let mut b = f64::INFINITY;
                for i in 0..x.len() {
                    if u[i].abs() < 1e-300 {
                        if x[i] <= lo[i] || x[i] >= hi[i] {
                            return Vec::new();
                        }
                        continue;
                    }
                    let t1 = (lo[i] - x[i]) / u[i];
                    let t2 = (hi[i] - x[i]) / u[i];
                    a = a.max(t1.min(t2));
                    b = b.min(t1.max(t2));
                }
                if b > a {
                    vec![(a, b)]
                } else {
                    Vec::new()
                }
            }
            DomainSpec::UnionOfBalls { balls } => geom::merge_segments(
                balls
                    .iter()
                    .filter_map(|bl| geom::ray_ball(x, u, &bl.center, bl.radius))
                    .collect(),
            ),
            DomainSpec::Annulus { center, r_in, r_out } => {
                let Some((a, b)) = geom::ray_ball(x, u, center, *r_out) else {
                    return Vec::new();
                };
                match geom::ray_ball(x, u, center, *r_in) {
                    None => vec![(a, b)],
                    Some((c, e)) => geom::merge_segments(vec![(a, c.max(a)), (e.min(b), b)]),
                }
            }
        }
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            DomainSpec::Ball { center, radius: r } | DomainSpec::Annulus { center, r_out: r, .. } => (
                center.iter().map(|c| c - r).collect(),
                center.iter().map(|c| c + r).collect(),
            ),
            DomainSpec::Box { lo, hi } => (lo.clone(), hi.clone()),
            DomainSpec::UnionOfBalls { balls } => {
                let d = self.dim();
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                for b in balls {
                    for k in 0..d {
                        lo[k] = lo[k].min(b.center[k] - b.radius);
                        hi[k] = hi[k].max(b.center[k] + b.radius);
                    }
                }
                (lo, hi)
            }
        }
    }

    /// Radius of the largest ball that fits inside the domain.
    pub fn inradius(&self) -> f64 {
        match self {
            DomainSpec::Ball { radius, .. } => *radius,
            DomainSpec::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| 0.5 * (h - l))
                .fold(f64::INFINITY, f64::min),
            DomainSpec::UnionOfBalls { balls } => balls.iter().map(|b| b.radius).fold(0.0, f64::max),
            DomainSpec::Annulus { r_in, r_out, .. } => 0.5 * (r_out - r_in),
        }
    }

    /// Nearest point of the boundary piece that determines `boundary_distance(x)`.
    pub fn project_to_boundary(&self, x: &[f64]) -> Vec<f64> {
        let onto_sphere = |c: &[f64], r: f64| match geom::normalized(&geom::sub(x, c)) {
            Some(u) => geom::axpy(c, r, &u),
            None => {
                let mut e = vec![0.0; x.len()];
                e[0] = 1.0;
                geom::axpy(c, r, &e)
            }
        };
        match self {
            DomainSpec::Ball { center, radius } => onto_sphere(center, *radius),
            DomainSpec::Box { lo, hi } => {
                let mut best = (f64::INFINITY, 0, 0.0);
                for i in 0..x.len() {
                    for face in [lo[i], hi[i]] {
                        let g = (x[i] - face).abs();
                        if g < best.0 {
                            best = (g, i, face);
                        }
                    }
                }
                let mut p = x.to_vec();
                p[best.1] = best.2;
                p
            }
            DomainSpec::UnionOfBalls { balls } => {
                let b = balls
                    .iter()
                    .max_by(|a, b| {
                        (a.radius - geom::dist(x, &a.center)).total_cmp(&(b.radius - geom::dist(x, &b.center)))
                    })
                    .expect("union has balls");
                onto_sphere(&b.center, b.radius)
            }
            DomainSpec::Annulus { center, r_in, r_out } => {
                let r = geom::dist(x, center);
                if r_out - r <= r - r_in {
                    onto_sphere(center, *r_out)
                } else {
                    onto_sphere(center, *r_in)
                }
            }
        }
    }

    /// Whether the closed segment from `a ∈ D` to `b` stays inside the domain.
    pub fn segment_inside(&self, a: &[f64], b: &[f64]) -> bool {
        match self {
            DomainSpec::Ball { .. } | DomainSpec::Box { .. } => self.contains(b),
            _ => {
                let v = geom::sub(b, a);
                let len = geom::norm(&v);
                let Some(u) = geom::normalized(&v) else {
                    return self.contains(b);
                };
                self.contains(b) && self.ray_segments(a, &u).iter().any(|&(s0, s1)| s0 <= 0.0 && s1 > len)
            }
        }
    }

    /// Index of the union component containing `x` (0 for connected shapes).
    pub fn component(&self, x: &[f64]) -> Option<usize> {
        match self {
            DomainSpec::UnionOfBalls { balls } => balls.iter().position(|b| b.contains(x)),
            _ => self.contains(x).then_some(0),
        }
    }

    /// Uniform sample from the domain by rejection from the bounding box.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.sample_point_with_margin(rng, 0.0)
    }

    /// Uniform sample from `{x : boundary_distance(x) > margin}`.
    pub fn sample_point_with_margin<R: Rng + ?Sized>(&self, rng: &mut R, margin: f64) -> Vec<f64> {
        let (lo, hi) = self.bounding_box();
        loop {
            let x: Vec<f64> = lo
                .iter()
                .zip(&hi)
                .map(|(l, h)| l + (h - l) * rng.random::<f64>())
                .collect();
            if self.boundary_distance(&x) > margin {
                return x;
            }
        }
    }
}

/// Multilinear-interpolated density on a regular grid; zero outside the grid box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabulatedDensity {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Nodes per axis (≥ 2).
    pub shape: Vec<usize>,
    /// Row-major node values, last axis fastest.
    pub values: Vec<f64>,
}

impl TabulatedDensity {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let d = self.lo.len();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for k in 0..d {
            if x[k] < self.lo[k] || x[k] > self.hi[k] {
                return 0.0;
            }
            let n = self.shape[k];
            let t = (x[k] - self.lo[k]) / (self.hi[k] - self.lo[k]) * (n - 1) as f64;
            let i = (t.floor() as usize).min(n - 2);
            base[k] = i;
            frac[k] = t - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = 0;
            for k in 0..d {
                let bit = (corner >> k) & 1;
                w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
                idx = idx * self.shape[k] + base[k] + bit;
            }
            if w != 0.0 {
                acc += w * self.values[idx];
            }
        }
        acc
    }
}

/// One term of a potential measure `ν`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TermKind {
    /// `V(x) = |x − pole|^{−a}`.
    DensityPower {
        a: f64,
        pole: Vec<f64>,
    },
    /// `V(x) = dist(x, ∂D)^{−a}`.
    BoundaryPower {
        a: f64,
    },
    TabulatedDensity(TabulatedDensity),
    ConstantDensity {
        lambda: f64,
    },
    /// Surface measure of the sphere `S(center, radius)`.
    SphereSurface {
        center: Vec<f64>,
        radius: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureTerm {
    #[serde(default = "one")]
    pub weight: f64,
    #[serde(flatten)]
    pub kind: TermKind,
}

impl MeasureTerm {
    pub fn new(weight: f64, kind: TermKind) -> Self {
        MeasureTerm { weight, kind }
    }

    pub fn is_density(&self) -> bool {
        !matches!(self.kind, TermKind::SphereSurface { .. })
    }
}

/// Positive measure `ν` on the domain, as a weighted sum of parametric terms.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpec {
    #[serde(default)]
    pub terms: Vec<MeasureTerm>,
}

impl MeasureSpec {
    pub fn zero() -> Self {
        MeasureSpec { terms: Vec::new() }
    }

    pub fn constant(lambda: f64) -> Self {
        MeasureSpec::single(1.0, TermKind::ConstantDensity { lambda })
    }

    pub fn power(weight: f64, a: f64, pole: Vec<f64>) -> Self {
        MeasureSpec::single(weight, TermKind::DensityPower { a, pole })
    }

    pub fn sphere(weight: f64, center: Vec<f64>, radius: f64) -> Self {
        MeasureSpec::single(weight, TermKind::SphereSurface { center, radius })
    }

    pub fn single(weight: f64, kind: TermKind) -> Self {
        MeasureSpec {
            terms: vec![MeasureTerm::new(weight, kind)],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms
            .iter()
            .all(|t| t.weight == 0.0 || matches!(t.kind, TermKind::ConstantDensity { lambda } if lambda == 0.0))
    }

    /// Sum of the two term lists.
    pub fn plus(&self, other: &MeasureSpec) -> MeasureSpec {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        MeasureSpec { terms }
    }

    pub fn scaled(&self, c: f64) -> MeasureSpec {
        MeasureSpec {
            terms: self
                .terms
                .iter()
                .map(|t| MeasureTerm::new(t.weight * c, t.kind.clone()))
                .collect(),
        }
    }

    pub fn has_surface(&self) -> bool {
        self.terms.iter().any(|t| !t.is_density() && t.weight != 0.0)
    }

    pub fn density_part(&self) -> MeasureSpec {
        MeasureSpec {
            terms: self.terms.iter().filter(|t| t.is_density()).cloned().collect(),
        }
    }

    pub fn surface_terms(&self) -> impl Iterator<Item = (f64, &[f64], f64)> + '_ {
        self.terms.iter().filter_map(|t| match &t.kind {
            TermKind::SphereSurface { center, radius } => Some((t.weight, center.as_slice(), *radius)),
            _ => None,
        })
    }

    /// Poles of the singular density terms with their exponents.
    pub fn poles(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.terms.iter().filter_map(|t| match &t.kind {
            TermKind::DensityPower { a, pole } if *a > 0.0 && t.weight > 0.0 => Some((pole.as_slice(), *a)),
            _ => None,
        })
    }

    pub fn has_boundary_singularity(&self) -> bool {
        self.terms
            .iter()
            .any(|t| matches!(t.kind, TermKind::BoundaryPower { a } if a > 0.0) && t.weight > 0.0)
    }

    /// Density of the absolutely continuous part at `x` (`+∞` at a pole).
    pub fn density(&self, domain: &DomainSpec, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.weight != 0.0)
            .map(|t| {
                t.weight
                    * match &t.kind {
                        TermKind::DensityPower { a, pole } => {
                            if *a == 0.0 {
                                1.0
                            } else {
                                geom::dist(x, pole).powf(-a)
                            }
                        }
                        TermKind::BoundaryPower { a } => {
                            let r = domain.boundary_distance(x);
                            if r <= 0.0 {
                                0.0
                            } else {
                                r.powf(-a)
                            }
                        }
                        TermKind::TabulatedDensity(t) => t.eval(x),
                        TermKind::ConstantDensity { lambda } => *lambda,
                        TermKind::SphereSurface { .. } => 0.0,
                    }
            })
            .sum()
    }
}

/// Mass of a set; `Infinite` is kept distinct from large finite values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Mass {
    Finite { value: f64, error: f64 },
    Infinite,
}

impl Mass {
    pub fn finite(value: f64) -> Self {
        Mass::Finite { value, error: 0.0 }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Mass::Infinite)
    }

    pub fn value(&self) -> f64 {
        match self {
            Mass::Finite { value, .. } => *value,
            Mass::Infinite => f64::INFINITY,
        }
    }

    pub fn error(&self) -> f64 {
        match self {
            Mass::Finite { error, .. } => *error,
            Mass::Infinite => f64::INFINITY,
        }
    }
}

impl std::ops::Add for Mass {
    type Output = Mass;
    fn add(self, o: Mass) -> Mass {
        match (self, o) {
            (Mass::Finite { value: a, error: ea }, Mass::Finite { value: b, error: eb }) => Mass::Finite {
                value: a + b,
                error: ea + eb,
            },
            _ => Mass::Infinite,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Geometric,
    Linear,
}

/// Decreasing radii `r_max = r_0 > r_1 > … > r_{count−1} = r_min`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiiSchedule {
    pub r_max: f64,
    pub r_min: f64,
    pub count: usize,
    #[serde(default = "geometric")]
    pub spacing: Spacing,
}

fn geometric() -> Spacing {
    Spacing::Geometric
}

impl RadiiSchedule {
    pub fn geometric(r_max: f64, r_min: f64, count: usize) -> Self {
        RadiiSchedule {
            r_max,
            r_min,
            count,
            spacing: Spacing::Geometric,
        }
    }

    pub fn linear(r_max: f64, r_min: f64, count: usize) -> Self {
        RadiiSchedule {
            r_max,
            r_min,
            count,
            spacing: Spacing::Linear,
        }
    }

    pub fn radii(&self) -> Vec<f64> {
        if self.count <= 1 {
            return vec![self.r_max];
        }
        let n = (self.count - 1) as f64;
        (0..self.count)
            .map(|k| {
                let t = k as f64 / n;
                match self.spacing {
                    Spacing::Geometric => self.r_max * (self.r_min / self.r_max).powf(t),
                    Spacing::Linear => self.r_max + (self.r_min - self.r_max) * t,
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if !(self.r_min > 0.0) {
            v.push(Violation::new("r_min", "r_min > 0"));
        }
        if !(self.r_max > self.r_min) {
            v.push(Violation::new("r_max", "r_max > r_min (strictly decreasing)"));
        }
        if self.count < 2 {
            v.push(Violation::new("count", "count >= 2"));
        }
        v
    }
}

/// One failed invariant, naming the field and the rule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Violation {
            field: field.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

fn finite_vec(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl DomainSpec {
    pub fn validate(&self, field: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        let f = |s: &str| format!("{field}.{s}");
        match self {
            DomainSpec::Ball { center, radius } => {
                if !finite_vec(center) {
                    out.push(Violation::new(f("center"), "finite coordinates"));
                }
                if !(*radius > 0.0) || !radius.is_finite() {
                    out.push(Violation::new(f("radius"), "radius > 0"));
                }
            }
            DomainSpec::Box { lo, hi } => {
                if lo.len() != hi.len() {
                    out.push(Violation::new(f("hi"), "lo and hi have equal length"));
                }
                if !finite_vec(lo) || !finite_vec(hi) {
                    out.push(Violation::new(f("lo"), "finite coordinates"));
                }
                if lo.iter().zip(hi).any(|(l, h)| !(h > l)) {
                    out.push(Violation::new(f("hi"), "hi > lo (nonempty interior)"));
                }
            }
            DomainSpec::UnionOfBalls { balls } => {
                if balls.is_empty() {
                    out.push(Violation::new(f("balls"), "at least one ball"));
                }
                let d = self.dim();
                for (i, b) in balls.iter().enumerate() {
                    if b.center.len() != d {
                        out.push(Violation::new(f(&format!("balls[{i}].center")), "consistent dimension"));
                    }
                    if !(b.radius > 0.0) || !b.radius.is_finite() {
                        out.push(Violation::new(f(&format!("balls[{i}].radius")), "radius > 0"));
                    }
                }
            }
            DomainSpec::Annulus { center, r_in, r_out } => {
                if !finite_vec(center) {
                    out.push(Violation::new(f("center"), "finite coordinates"));
                }
                if !(*r_in > 0.0) {
                    out.push(Violation::new(f("r_in"), "radius > 0"));
                }
                if !(r_out > r_in) || !r_out.is_finite() {
                    out.push(Violation::new(f("r_out"), "r_out > r_in"));
                }
            }
        }
        out
    }
}

impl OperatorSpec {
    /// All violated invariants; empty when the spec is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.dim < 2 {
            out.push(Violation::new("dim", "d >= 2"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            out.push(Violation::new("alpha", "alpha in (0,1]"));
        }
        match self.kind {
            OperatorKind::BrownianLaplacian => {
                if self.alpha != 1.0 {
                    out.push(Violation::new("alpha", "alpha = 1 for brownian_laplacian"));
                }
            }
            OperatorKind::FractionalLaplacian => {
                if !(2.0 * self.alpha < self.dim as f64) {
                    out.push(Violation::new("alpha", "2α<d required"));
                }
            }
        }
        if self.domain.dim() != self.dim {
            out.push(Violation::new("domain", "domain dimension equals dim"));
        }
        out.extend(self.domain.validate("domain"));
        out
    }
}

impl MeasureSpec {
    /// Violations of the measure invariants relative to `domain`.
    pub fn validate(&self, domain: &DomainSpec) -> Vec<Violation> {
        let d = domain.dim();
        let mut out = Vec::new();
        for (i, t) in self.terms.iter().enumerate() {
            let f = |s: &str| format!("measure.terms[{i}].{s}");
            if !(t.weight >= 0.0) || !t.weight.is_finite() {
                out.push(Violation::new(f("weight"), "weight >= 0"));
            }
            match &t.kind {
                TermKind::DensityPower { a, pole } => {
                    if !(*a >= 0.0) {
                        out.push(Violation::new(f("a"), "a >= 0"));
                    }
                    if pole.len() != d {
                        out.push(Violation::new(f("pole"), "pole dimension equals dim"));
                    }
                }
                TermKind::BoundaryPower { a } => {
                    if !(*a >= 0.0) {
                        out.push(Violation::new(f("a"), "a >= 0"));
                    }
                }
                TermKind::TabulatedDensity(tab) => {
                    let n: usize = tab.shape.iter().product();
                    if tab.lo.len() != d || tab.hi.len() != d || tab.shape.len() != d {
                        out.push(Violation::new(f("shape"), "grid dimension equals dim"));
                    } else if tab.shape.iter().any(|&k| k < 2) {
                        out.push(Violation::new(f("shape"), "at least 2 nodes per axis"));
                    } else if tab.values.len() != n {
                        out.push(Violation::new(f("values"), "values length equals product of shape"));
                    }
                    if tab.values.iter().any(|v| !(*v >= 0.0)) {
                        out.push(Violation::new(f("values"), "values >= 0"));
                    }
                    if tab.lo.iter().zip(&tab.hi).any(|(l, h)| !(h > l)) {
                        out.push(Violation::new(f("hi"), "hi > lo"));
                    }
                }
                TermKind::ConstantDensity { lambda } => {
                    if !(*lambda >= 0.0) {
                        out.push(Violation::new(f("lambda"), "lambda >= 0"));
                    }
                }
                TermKind::SphereSurface { center, radius } => {
                    if center.len() != d {
                        out.push(Violation::new(f("center"), "center dimension equals dim"));
                    } else if !(*radius > 0.0) {
                        out.push(Violation::new(f("radius"), "radius > 0"));
                    } else if !sphere_inside(domain, center, *radius) {
                        out.push(Violation::new(f("radius"), "sphere strictly inside D"));
                    }
                }
            }
        }
        out
    }
}

fn sphere_inside(domain: &DomainSpec, center: &[f64], radius: f64) -> bool {
    match domain {
        DomainSpec::Ball { center: c, radius: r } => geom::dist(c, center) + radius < *r,
        DomainSpec::Annulus { center: c, r_in, r_out } => {
            let h = geom::dist(c, center);
            h + radius < *r_out && (radius - h > *r_in || h - radius > *r_in)
        }
        DomainSpec::Box { lo, hi } => center
            .iter()
            .zip(lo.iter().zip(hi))
            .all(|(c, (l, h))| c - radius > *l && c + radius < *h),
        DomainSpec::UnionOfBalls { balls } => balls.iter().any(|b| geom::dist(&b.center, center) + radius < b.radius),
    }
}

/// `ν(B(center, r) ∩ D)`.
///
/// Power densities and sphere surfaces use closed forms or exact radial
/// integrals along rays from the pole; other terms use polar quadrature.
pub fn measure_of_ball(nu: &MeasureSpec, domain: &DomainSpec, center: &[f64], r: f64) -> Mass {
    assert!(r > 0.0, "measure_of_ball needs r > 0");
    let d = center.len();
    let inside = domain.boundary_distance(center) >= r;
    let mut total = Mass::finite(0.0);
    for t in &nu.terms {
        if t.weight == 0.0 {
            continue;
        }
        let m = match &t.kind {
            TermKind::ConstantDensity { lambda } => {
                if *lambda == 0.0 {
                    Mass::finite(0.0)
                } else if inside {
                    Mass::finite(lambda * ball_volume(d) * r.powi(d as i32))
                } else {
                    power_mass_from(center, domain, center, r, 0.0).scale(*lambda)
                }
            }
            TermKind::DensityPower { a, pole } => {
                if inside && geom::dist(pole, center) == 0.0 {
                    let e = d as f64 - a;
                    if e <= 0.0 {
                        Mass::Infinite
                    } else {
                        Mass::finite(sphere_area(d) * r.powf(e) / e)
                    }
                } else {
                    power_mass_from(pole, domain, center, r, *a)
                }
            }
            TermKind::SphereSurface { center: c, radius } => {
                let h = geom::dist(c, center);
                Mass::finite(sphere_area(d) * radius.powi(d as i32 - 1) * sphere_fraction_in_ball(d, *radius, h, r))
            }
            TermKind::BoundaryPower { .. } | TermKind::TabulatedDensity(_) => {
                let single = MeasureSpec {
                    terms: vec![MeasureTerm::new(1.0, t.kind.clone())],
                };
                quadrature_mass(&single, domain, center, r)
            }
        };
        total = total + m.scale(t.weight);
    }
    total
}

impl Mass {
    fn scale(self, c: f64) -> Mass {
        match self {
            Mass::Finite { value, error } => Mass::Finite {
                value: value * c,
                error: error * c.abs(),
            },
            Mass::Infinite if c == 0.0 => Mass::finite(0.0),
            Mass::Infinite => Mass::Infinite,
        }
    }
}

const MASS_LEVEL: usize = 3;

/// `∫_{B(center,r) ∩ D} |y − pole|^{−a} dy` with the radial integral done exactly
/// along rays from the pole; error from two angular levels.
fn power_mass_from(pole: &[f64], domain: &DomainSpec, center: &[f64], r: f64, a: f64) -> Mass {
    let d = pole.len();
    let e = d as f64 - a;
    let eval = |level: usize| -> Option<f64> {
        let rule = SphereRule::new(d, level);
        let mut acc = KahanSum::new();
        for (u, w) in rule.iter() {
            let Some(seg) = geom::ray_ball(pole, u, center, r) else {
                continue;
            };
            for (s0, s1) in geom::intersect_segments(&[seg], &domain.ray_segments(pole, u)) {
                let v = if e.abs() < 1e-14 {
                    if s0 <= 0.0 {
                        return None;
                    }
                    (s1 / s0).ln()
                } else if e < 0.0 {
                    if s0 <= 0.0 {
                        return None;
                    }
                    (s1.powf(e) - s0.powf(e)) / e
                } else {
                    (s1.powf(e) - s0.powf(e)) / e
                };
                acc.add(w * v);
            }
        }
        Some(acc.value())
    };
    match (eval(MASS_LEVEL), eval(MASS_LEVEL + 1)) {
        (Some(lo), Some(hi)) => Mass::Finite {
            value: hi,
            error: (hi - lo).abs(),
        },
        _ => Mass::Infinite,
    }
}

fn quadrature_mass(nu: &MeasureSpec, domain: &DomainSpec, center: &[f64], r: f64) -> Mass {
    let d = center.len();
    let radial = RadialRule::default();
    let boundary = nu.has_boundary_singularity();
    let eval = |level: usize| -> Integral {
        let rule = SphereRule::new(d, level);
        let mut total = Integral::zero();
        let mut y = vec![0.0; d];
        for (u, w) in rule.iter() {
            for (s0, s1) in geom::clip_segments(&domain.ray_segments(center, u), 0.0, r) {
                // a segment ending before r ends on ∂D
                let sing_hi = boundary && s1 < r;
                let v = radial.integrate(
                    |s| {
                        geom::axpy_into(&mut y, center, s, u);
                        nu.density(domain, &y) * s.powi(d as i32 - 1)
                    },
                    s0,
                    s1,
                    false,
                    sing_hi,
                );
                total += v.scaled(w);
            }
        }
        total
    };
    let lo = eval(MASS_LEVEL - 1);
    let hi = eval(MASS_LEVEL);
    if lo.diverged || hi.diverged {
        return Mass::Infinite;
    }
    Mass::Finite {
        value: hi.value,
        error: (hi.value - lo.value).abs() + hi.error,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ball3() -> DomainSpec {
        DomainSpec::unit_ball(3)
    }

    #[test]
    fn validate_examples() {
        let bad = DomainSpec::Ball {
            center: vec![0.0; 3],
            radius: -1.0,
        };
        let v = OperatorSpec::brownian(bad).validate();
        assert!(v.iter().any(|x| x.rule == "radius > 0"));

        let ok = OperatorSpec::fractional(0.5, ball3());
        assert!(ok.validate().is_empty());

        let line = OperatorSpec::fractional(
            0.9,
            DomainSpec::Ball {
                center: vec![0.0],
                radius: 1.0,
            },
        );
        assert!(line.validate().iter().any(|x| x.rule == "2α<d required"));
    }

    #[test]
    fn measure_of_ball_examples() {
        let m = measure_of_ball(&MeasureSpec::constant(1.0), &ball3(), &[0.0; 3], 1.0);
        assert!((m.value() - 4.0 * PI / 3.0).abs() < 1e-12);

        let nu = MeasureSpec::power(1.0, 2.0, vec![0.0; 3]);
        let m = measure_of_ball(&nu, &ball3(), &[0.0; 3], 1.0);
        assert!((m.value() - 4.0 * PI).abs() < 1e-12);

        let nu = MeasureSpec::sphere(1.0, vec![0.0; 3], 0.5);
        let m = measure_of_ball(&nu, &ball3(), &[0.0; 3], 1.0);
        assert!((m.value() - PI).abs() < 1e-12);

        let nu = MeasureSpec::power(1.0, 3.0, vec![0.1, 0.0, 0.0]);
        assert!(measure_of_ball(&nu, &ball3(), &[0.0; 3], 0.5).is_infinite());
    }

    #[test]
    fn off_center_pole_mass_by_rays() {
        // ∫_{B(0,1)} |y − p|^{−1} dy = 2π(1 − |p|²/3) for |p| < 1
        let nu = MeasureSpec::power(1.0, 1.0, vec![0.4, 0.0, 0.0]);
        let m = measure_of_ball(&nu, &ball3(), &[0.0; 3], 1.0);
        let exact = 2.0 * PI * (1.0 - 0.16 / 3.0);
        assert!((m.value() - exact).abs() < 1e-4, "{m:?} vs {exact}");
    }

    #[test]
    fn ball_clipped_by_domain() {
        let dom = DomainSpec::Box {
            lo: vec![0.0, -1.0],
            hi: vec![1.0, 1.0],
        };
        let m = measure_of_ball(&MeasureSpec::constant(1.0), &dom, &[0.0, 0.0], 0.5);
        assert!((m.value() - PI * 0.25 / 2.0).abs() < 1e-4, "{m:?}");
    }

    #[test]
    fn boundary_power_mass() {
        // d=2 unit disk, V = (1 − |x|)^{−1/2}: 2π ∫_0^1 s (1−s)^{−1/2} ds = 2π · 4/3
        let dom = DomainSpec::unit_ball(2);
        let nu = MeasureSpec::single(1.0, TermKind::BoundaryPower { a: 0.5 });
        let m = measure_of_ball(&nu, &dom, &[0.0, 0.0], 2.0);
        assert!((m.value() - 2.0 * PI * 4.0 / 3.0).abs() < 1e-5, "{m:?}");
        let nu = MeasureSpec::single(1.0, TermKind::BoundaryPower { a: 1.0 });
        assert!(measure_of_ball(&nu, &dom, &[0.0, 0.0], 2.0).is_infinite());
    }

    #[test]
    fn tabulated_interpolates_linear_functions_exactly() {
        let tab = TabulatedDensity {
            lo: vec![0.0, 0.0],
            hi: vec![1.0, 2.0],
            shape: vec![3, 5],
            values: (0..15)
                .map(|i| {
                    let (a, b) = (i / 5, i % 5);
                    1.0 + 0.5 * a as f64 * 0.5 + 2.0 * b as f64 * 0.5
                })
                .collect(),
        };
        let v = tab.eval(&[0.3, 1.1]);
        assert!((v - (1.0 + 0.5 * 0.3 + 2.0 * 1.1)).abs() < 1e-12);
        assert_eq!(tab.eval(&[1.5, 0.0]), 0.0);
    }

    #[test]
    fn domain_segments_and_distances() {
        let ann = DomainSpec::Annulus {
            center: vec![0.0, 0.0],
            r_in: 0.5,
            r_out: 1.0,
        };
        let s = ann.ray_segments(&[-2.0, 0.0], &[1.0, 0.0]);
        assert_eq!(s.len(), 2);
        assert!((s[0].0 - 1.0).abs() < 1e-12 && (s[0].1 - 1.5).abs() < 1e-12);
        assert!(ann.contains(&[0.75, 0.0]) && !ann.contains(&[0.1, 0.0]));
        let bx = DomainSpec::Box {
            lo: vec![0.0, 0.0],
            hi: vec![2.0, 1.0],
        };
        assert!((bx.boundary_distance(&[1.0, 0.25]) - 0.25).abs() < 1e-15);
        let s = bx.ray_segments(&[1.0, 0.5], &[1.0, 0.0]);
        assert_eq!(s, vec![(0.0, 1.0)]);
    }

    #[test]
    fn config_roundtrip() {
        let op = OperatorSpec::fractional(0.5, ball3());
        let s = toml::to_string(&op).unwrap();
        let back: OperatorSpec = toml::from_str(&s).unwrap();
        assert_eq!(op, back);
        let nu = MeasureSpec::power(6.0, 2.0, vec![0.0; 3]).plus(&MeasureSpec::sphere(1.0, vec![0.0; 3], 0.5));
        let s = serde_json::to_string(&nu).unwrap();
        assert!(s.contains("\"kind\":\"density_power\""));
        let back: MeasureSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(nu, back);
    }
}
