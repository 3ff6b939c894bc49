//! Experiment configuration: TOML schema, validation and hashing.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::catalog::{catalog_names, CandidateSpec};
use crate::capacity::CapacityKernel;
use crate::error::{Error, Result};
use crate::kernels::TestBump;
use crate::model::{MeasureSpec, OperatorSpec, RadiiSchedule, Violation};
use crate::paths::{Crossing, DEFAULT_STEP_BUDGET};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Classify,
    FineLimit,
    WeakTest,
    Dichotomy,
    Fk,
    Resolvent,
    Capacity,
    RevuzCheck,
    ExitKernelCheck,
}

impl ExperimentKind {
    pub fn label(self) -> &'static str {
        match self {
            ExperimentKind::Classify => "classify",
            ExperimentKind::FineLimit => "fine-limit",
            ExperimentKind::WeakTest => "weak-test",
            ExperimentKind::Dichotomy => "dichotomy",
            ExperimentKind::Fk => "fk",
            ExperimentKind::Resolvent => "resolvent",
            ExperimentKind::Capacity => "capacity",
            ExperimentKind::RevuzCheck => "revuz-check",
            ExperimentKind::ExitKernelCheck => "exit-kernel-check",
        }
    }

    fn needs_operator(self) -> bool {
        !matches!(self, ExperimentKind::Capacity | ExperimentKind::ExitKernelCheck)
    }

    fn needs_candidate(self) -> bool {
        matches!(
            self,
            ExperimentKind::FineLimit
                | ExperimentKind::WeakTest
                | ExperimentKind::Dichotomy
                | ExperimentKind::Fk
                | ExperimentKind::Resolvent
        )
    }

    fn needs_points(self) -> bool {
        matches!(
            self,
            ExperimentKind::Classify
                | ExperimentKind::FineLimit
                | ExperimentKind::Fk
                | ExperimentKind::Resolvent
                | ExperimentKind::RevuzCheck
        )
    }
}

/// Monte-Carlo and quadrature budgets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budgets {
    #[serde(default = "default_replicates")]
    pub replicates: u64,
    /// Euler steps; several values give a refinement study.
    #[serde(default = "default_dt")]
    pub dt: Vec<f64>,
    /// Shell half-width for surface terms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default = "default_quad_tol")]
    pub quad_tol: f64,
    #[serde(default = "default_steps")]
    pub max_steps: usize,
    #[serde(default)]
    pub crossing: Crossing,
}

fn default_replicates() -> u64 {
    2000
}
fn default_dt() -> Vec<f64> {
    vec![1e-3]
}
fn default_quad_tol() -> f64 {
    1e-8
}
fn default_steps() -> usize {
    DEFAULT_STEP_BUDGET
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            replicates: default_replicates(),
            dt: default_dt(),
            eps: None,
            quad_tol: default_quad_tol(),
            max_steps: default_steps(),
            crossing: Crossing::default(),
        }
    }
}

/// Evaluation grid with lattice spacing and boundary margin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub spacing: f64,
    #[serde(default)]
    pub margin: f64,
}

/// Test-function family for the weak supersolution test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSpec {
    /// Lattice family `(radius, spacing)`; omitted means explicit bumps only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub explicit: Vec<TestBump>,
    #[serde(default = "default_weak_tol")]
    pub tol: f64,
}

fn default_weak_tol() -> f64 {
    1e-6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifySpec {
    #[serde(default = "default_classify_radius")]
    pub radius: f64,
    #[serde(default = "default_delta_count")]
    pub delta_count: usize,
    #[serde(default = "default_cauchy_tol")]
    pub cauchy_tol: f64,
    #[serde(default = "default_significance")]
    pub significance: f64,
}

fn default_classify_radius() -> f64 {
    0.25
}
fn default_delta_count() -> usize {
    24
}
fn default_cauchy_tol() -> f64 {
    1e-3
}
fn default_significance() -> f64 {
    5.0
}

impl Default for ClassifySpec {
    fn default() -> Self {
        ClassifySpec {
            radius: default_classify_radius(),
            delta_count: default_delta_count(),
            cauchy_tol: default_cauchy_tol(),
            significance: default_significance(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DichotomySpec {
    #[serde(default = "default_zero_threshold")]
    pub zero_threshold: f64,
}

fn default_zero_threshold() -> f64 {
    1e-6
}

impl Default for DichotomySpec {
    fn default() -> Self {
        DichotomySpec {
            zero_threshold: default_zero_threshold(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FkSpec {
    /// Time horizon of the semigroup.
    pub t: f64,
}

/// Ball target on `[−half, half]^d` at a sequence of grid resolutions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacitySpec {
    pub dim: usize,
    #[serde(default = "one")]
    pub half: f64,
    /// Cells per axis, one solve each.
    pub n: Vec<usize>,
    pub kernel: CapacityKernel,
    pub target_center: Vec<f64>,
    pub target_radius: f64,
    #[serde(default = "one")]
    pub p: f64,
    #[serde(default = "yes")]
    pub dual: bool,
    #[serde(default = "default_cp_iter")]
    pub max_iter: usize,
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_cp_iter() -> usize {
    20_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExitKernelSpec {
    pub dims: Vec<usize>,
    pub alphas: Vec<f64>,
    #[serde(default = "one")]
    pub radius: f64,
    /// Samples for the Kolmogorov-Smirnov check; 0 skips it.
    #[serde(default)]
    pub samples: u64,
    /// Truncation `v ≤ 1 − η` that makes the printed kernel a distribution.
    #[serde(default = "default_eta")]
    pub truncation: f64,
    #[serde(default = "default_ks_tol")]
    pub ks_tol: f64,
}

fn default_eta() -> f64 {
    1e-6
}
fn default_ks_tol() -> f64 {
    0.02
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<OperatorSpec>,
    #[serde(default)]
    pub measure: MeasureSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate: Option<CandidateSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<RadiiSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bumps: Option<BumpSpec>,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub classify: ClassifySpec,
    #[serde(default)]
    pub dichotomy: DichotomySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fk: Option<FkSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<CapacitySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_kernel: Option<ExitKernelSpec>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

const REQUIRED: [(&str, &str); 3] = [
    ("schema_version", "required"),
    ("kind", "required"),
    ("seed", "required; runs are never seeded implicitly"),
];

/// Parse and validate; every violation is listed before any computation.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut value: toml::Table = toml::from_str(text).map_err(|e| Error::Config(vec![format!("syntax: {e}")]))?;
    let mut problems: Vec<String> = REQUIRED
        .iter()
        .filter(|(k, _)| !value.contains_key(*k))
        .map(|(k, rule)| Violation::new(*k, *rule).to_string())
        .collect();
    // placeholders so the remaining checks still run
    value.entry("seed").or_insert(toml::Value::Integer(0));
    value
        .entry("schema_version")
        .or_insert(toml::Value::Integer(SCHEMA_VERSION as i64));
    let parsed: std::result::Result<ExperimentConfig, _> = value.try_into();
    match parsed {
        Ok(cfg) => {
            problems.extend(cfg.validate().into_iter().map(|v| v.to_string()));
            if problems.is_empty() {
                Ok(cfg)
            } else {
                Err(Error::Config(problems))
            }
        }
        Err(e) => {
            let msg = e.to_string();
            // the missing-key list above already covers these
            if problems.is_empty() || !msg.contains("missing field") {
                problems.push(format!("schema: {}", msg.trim()));
            }
            Err(Error::Config(problems))
        }
    }
}

pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

fn positive(out: &mut Vec<Violation>, field: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        out.push(Violation::new(field, "must be positive and finite"));
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            out.push(Violation::new(
                "schema_version",
                format!(
                    "unsupported version {} (expected {SCHEMA_VERSION})",
                    self.schema_version
                ),
            ));
        }
        let kind = self.kind;
        let b = &self.budgets;
        if b.replicates == 0 {
            out.push(Violation::new("budgets.replicates", "must be positive"));
        }
        if b.dt.is_empty() {
            out.push(Violation::new("budgets.dt", "at least one step size"));
        }
        for (i, &dt) in b.dt.iter().enumerate() {
            positive(&mut out, &format!("budgets.dt[{i}]"), dt);
        }
        if let Some(eps) = b.eps {
            positive(&mut out, "budgets.eps", eps);
        }
        positive(&mut out, "budgets.quad_tol", b.quad_tol);
        if b.max_steps == 0 {
            out.push(Violation::new("budgets.max_steps", "must be positive"));
        }
        match &self.operator {
            Some(op) => {
                out.extend(
                    op.validate()
                        .into_iter()
                        .map(|v| Violation::new(format!("operator.{}", v.field), v.rule)),
                );
                out.extend(
                    self.measure
                        .validate(&op.domain)
                        .into_iter()
                        .map(|v| Violation::new(format!("measure.{}", v.field), v.rule)),
                );
                for (i, p) in self.points.iter().enumerate() {
                    if p.len() != op.dim {
                        out.push(Violation::new(
                            format!("points[{i}]"),
                            format!("dimension {} ≠ {}", p.len(), op.dim),
                        ));
                    } else if !op.domain.contains(p) {
                        out.push(Violation::new(format!("points[{i}]"), "must lie in the domain"));
                    }
                }
            }
            None if kind.needs_operator() => {
                out.push(Violation::new("operator", format!("required for {}", kind.label())))
            }
            None => {}
        }
        match &self.candidate {
            Some(c) => {
                if !catalog_names().contains(&c.name) {
                    out.push(Violation::new(
                        "candidate.name",
                        format!(
                            "unknown catalog entry {:?}; known: {}",
                            c.name,
                            catalog_names().join(", ")
                        ),
                    ));
                }
                if c.name == "tabulated" && c.table.is_none() {
                    out.push(Violation::new("candidate.table", "required for tabulated"));
                }
                if c.is_sampled() && kind != ExperimentKind::Dichotomy {
                    out.push(Violation::new(
                        "candidate.name",
                        "resolvent-bump is only usable in dichotomy runs",
                    ));
                }
            }
            None if kind.needs_candidate() => {
                out.push(Violation::new("candidate", format!("required for {}", kind.label())))
            }
            None => {}
        }
        if kind.needs_points() && self.points.is_empty() {
            out.push(Violation::new(
                "points",
                format!("at least one point for {}", kind.label()),
            ));
        }
        if let Some(r) = &self.radii {
            out.extend(
                r.validate()
                    .into_iter()
                    .map(|v| Violation::new(format!("radii.{}", v.field), v.rule)),
            );
        } else if kind == ExperimentKind::FineLimit {
            out.push(Violation::new("radii", "required for fine-limit"));
        }
        if let Some(g) = &self.grid {
            positive(&mut out, "grid.spacing", g.spacing);
            if g.margin < 0.0 {
                out.push(Violation::new("grid.margin", "must be nonnegative"));
            }
        } else if kind == ExperimentKind::Dichotomy {
            out.push(Violation::new("grid", "required for dichotomy"));
        }
        let sampled = self.candidate.as_ref().is_some_and(|c| c.is_sampled());
        match &self.bumps {
            Some(bs) => {
                if let Some(r) = bs.radius {
                    positive(&mut out, "bumps.radius", r);
                }
                if let Some(s) = bs.spacing {
                    positive(&mut out, "bumps.spacing", s);
                }
                if bs.radius.is_some() != bs.spacing.is_some() {
                    out.push(Violation::new("bumps", "radius and spacing go together"));
                }
                if bs.radius.is_none() && bs.explicit.is_empty() {
                    out.push(Violation::new("bumps", "empty family"));
                }
                if !(bs.tol >= 0.0) {
                    out.push(Violation::new("bumps.tol", "must be nonnegative"));
                }
            }
            None if kind == ExperimentKind::WeakTest || (kind == ExperimentKind::Dichotomy && !sampled) => {
                out.push(Violation::new("bumps", format!("required for {}", kind.label())))
            }
            None => {}
        }
        positive(&mut out, "classify.radius", self.classify.radius);
        if self.classify.delta_count < 4 {
            out.push(Violation::new("classify.delta_count", "at least 4"));
        }
        positive(&mut out, "classify.cauchy_tol", self.classify.cauchy_tol);
        positive(&mut out, "classify.significance", self.classify.significance);
        positive(&mut out, "dichotomy.zero_threshold", self.dichotomy.zero_threshold);
        match &self.fk {
            Some(fk) => positive(&mut out, "fk.t", fk.t),
            None if kind == ExperimentKind::Fk => out.push(Violation::new("fk", "required for fk (time horizon t)")),
            None => {}
        }
        match &self.capacity {
            Some(c) => {
                if c.n.is_empty() || c.n.contains(&0) {
                    out.push(Violation::new("capacity.n", "nonempty list of positive cell counts"));
                }
                if !(2..=4).contains(&c.dim) {
                    out.push(Violation::new("capacity.dim", "2 ≤ dim ≤ 4"));
                }
                if c.target_center.len() != c.dim {
                    out.push(Violation::new("capacity.target_center", "dimension mismatch"));
                }
                positive(&mut out, "capacity.half", c.half);
                if !(c.target_radius >= 0.0) {
                    out.push(Violation::new("capacity.target_radius", "must be nonnegative"));
                }
                if !(c.p >= 1.0) {
                    out.push(Violation::new("capacity.p", "p ≥ 1"));
                }
                if c.max_iter == 0 {
                    out.push(Violation::new("capacity.max_iter", "must be positive"));
                }
            }
            None if kind == ExperimentKind::Capacity => out.push(Violation::new("capacity", "required for capacity")),
            None => {}
        }
        match &self.exit_kernel {
            Some(e) => {
                if e.dims.is_empty() || e.alphas.is_empty() {
                    out.push(Violation::new("exit_kernel", "dims and alphas must be nonempty"));
                }
                for (i, &a) in e.alphas.iter().enumerate() {
                    if !(a > 0.0 && a < 1.0) {
                        out.push(Violation::new(format!("exit_kernel.alphas[{i}]"), "α ∈ (0, 1)"));
                    }
                }
                positive(&mut out, "exit_kernel.radius", e.radius);
                if !(e.truncation > 0.0 && e.truncation < 1.0) {
                    out.push(Violation::new("exit_kernel.truncation", "η ∈ (0, 1)"));
                }
            }
            None if kind == ExperimentKind::ExitKernelCheck => {
                out.push(Violation::new("exit_kernel", "required for exit-kernel-check"))
            }
            None => {}
        }
        out
    }

    /// Canonical JSON echo used for hashing and the report.
    pub fn canonical_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON echo.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&self.canonical_json()).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
