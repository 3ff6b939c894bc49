//! Experiment execution and the run report.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::catalog::{build_candidate, resolvent_bump, CandidateSpec};
use super::config::{ExperimentConfig, ExperimentKind};
use super::plotdata::{emit_plotdata, PLOT_KINDS};
use crate::capacity::{
    ball_target, solve_c1, solve_cp, solve_dual_c1, write_optimizer_csv, CapacityProblem, CellGrid, CpOptions,
};
use crate::error::{Error, Result};
use crate::feynman_kac::{fk_resolvent, fk_semigroup, FkEstimate, McContext};
use crate::kernels::{exit_v_cdf_exact, ExitKernel, ExitVariant, TestBump};
use crate::maxprinciple::{
    bump_family, classify_point, default_deltas, dichotomy_check, dichotomy_from_samples, fine_limit, grid_points,
    weak_supersolution_test, ClassificationReport, ClassifyOptions, DichotomyOptions, DichotomyReport,
    DichotomyVerdict, FineLimitResult, Membership, SampledValue, WeakTestSummary,
};
use crate::model::{MeasureSpec, OperatorSpec};
use crate::paths::{euler_killed_pcaf_with, stable_exit_step, surface_pcaf_with, EulerConfig};
use crate::potentials::{neumann_resolvent, potential, NeumannResult};
use crate::rng::TaskStreams;
use crate::stats::{ks_statistic, median, Parallel, Summary, Z99};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Undecided,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Completed => 0,
            RunStatus::Undecided => 2,
        }
    }
}

/// Exit status for a failed run.
pub const EXIT_ERROR: i32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
    pub workers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub versions: BTreeMap<String, String>,
    pub outputs: serde_json::Value,
    pub verdicts: Vec<String>,
    pub status: RunStatus,
    pub exit_code: i32,
    /// The only field allowed to differ between identical runs.
    pub timing: Timing,
    /// Extra CSV files `(name, contents)` written beside the report.
    #[serde(skip)]
    pub side_files: Vec<(String, String)>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Report JSON without the timing block.
    pub fn deterministic_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("timing");
        }
        serde_json::to_string_pretty(&v).expect("report serializes")
    }

    pub fn csv_header(&self) -> String {
        format!("# config_hash={}", self.config_hash)
    }

    /// Write `report.json` and every applicable CSV into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let path = dir.join("report.json");
        std::fs::write(&path, self.to_json())?;
        written.push(path);
        for what in PLOT_KINDS {
            if let Ok(csv) = emit_plotdata(self, what) {
                let path = dir.join(format!("{what}.csv"));
                std::fs::write(&path, csv)?;
                written.push(path);
            }
        }
        for (name, body) in &self.side_files {
            let path = dir.join(name);
            std::fs::write(&path, body)?;
            written.push(path);
        }
        Ok(written)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointFineLimit {
    pub candidate: String,
    pub results: Vec<FineLimitResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FkRow {
    pub dt: f64,
    pub estimate: FkEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolventRow {
    pub point: Vec<f64>,
    pub dt: f64,
    pub monte_carlo: FkEstimate,
    /// Deterministic series value when `ν` is radial and `f = 1`.
    pub series: Option<NeumannResult>,
    /// `|MC − series| ≤ 3σ`.
    pub agree: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevuzRow {
    pub point: Vec<f64>,
    pub dt: f64,
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
    pub median: f64,
    /// Fraction of paths whose functional blew up.
    pub infinite_fraction: f64,
    /// `Rν(x)` by quadrature.
    pub oracle: f64,
    pub oracle_infinite: bool,
    /// `(mean − oracle)/stderr`.
    pub z: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityRow {
    pub n: usize,
    pub h: f64,
    pub target_cells: usize,
    pub p: f64,
    pub value: f64,
    pub feasibility: f64,
    pub iterations: usize,
    pub duality_gap: Option<f64>,
    pub dual_value: Option<f64>,
    pub dual_feasibility: Option<f64>,
    pub weak_duality: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitKernelRow {
    pub dim: usize,
    pub alpha: f64,
    pub radius: f64,
    pub normalized_mass: f64,
    pub normalized_error: f64,
    /// Mass of the printed kernel up to the shell budget.
    pub as_printed_mass: f64,
    pub as_printed_diverged: bool,
    pub samples: u64,
    pub ks_normalized: Option<f64>,
    pub ks_as_printed: Option<f64>,
    pub ks_tol: f64,
}

/// Execute a validated config with the given pool.
pub fn run(cfg: &ExperimentConfig, parallel: &Parallel) -> Result<RunReport> {
    let problems = cfg.validate();
    if !problems.is_empty() {
        return Err(Error::Config(problems.iter().map(|v| v.to_string()).collect()));
    }
    let start = Instant::now();
    let streams = TaskStreams::new(cfg.seed, cfg.kind.label());
    let mut out = Outcome::default();
    match cfg.kind {
        ExperimentKind::Classify => run_classify(cfg, &mut out)?,
        ExperimentKind::FineLimit => run_fine_limit(cfg, &mut out)?,
        ExperimentKind::WeakTest => run_weak(cfg, parallel, &mut out)?,
        ExperimentKind::Dichotomy => run_dichotomy(cfg, streams, parallel, &mut out)?,
        ExperimentKind::Fk => run_fk(cfg, streams, parallel, &mut out)?,
        ExperimentKind::Resolvent => run_resolvent(cfg, streams, parallel, &mut out)?,
        ExperimentKind::Capacity => run_capacity(cfg, parallel, &mut out)?,
        ExperimentKind::RevuzCheck => run_revuz(cfg, streams, parallel, &mut out)?,
        ExperimentKind::ExitKernelCheck => run_exit_kernel(cfg, streams, parallel, &mut out)?,
    }
    let status = if out.undecided {
        RunStatus::Undecided
    } else {
        RunStatus::Completed
    };
    let mut versions = BTreeMap::new();
    versions.insert("potmax".to_string(), env!("CARGO_PKG_VERSION").to_string());
    versions.insert("report_schema".to_string(), super::config::SCHEMA_VERSION.to_string());
    let mut report = RunReport {
        schema_version: cfg.schema_version,
        kind: cfg.kind,
        config_hash: cfg.hash(),
        config: cfg.canonical_json(),
        versions,
        outputs: serde_json::Value::Object(out.outputs),
        verdicts: out.verdicts,
        status,
        exit_code: status.exit_code(),
        timing: Timing {
            wall_seconds: start.elapsed().as_secs_f64(),
            workers: parallel.workers(),
        },
        side_files: Vec::new(),
    };
    let header = report.csv_header();
    report.side_files = out
        .side_files
        .into_iter()
        .map(|(name, body)| (name, format!("{header}\n{body}")))
        .collect();
    Ok(report)
}

/// Run and write into the configured output directory.
pub fn run_to_disk(cfg: &ExperimentConfig, parallel: &Parallel) -> Result<RunReport> {
    let report = run(cfg, parallel)?;
    report.write(&cfg.output_dir)?;
    Ok(report)
}

#[derive(Default)]
struct Outcome {
    outputs: serde_json::Map<String, serde_json::Value>,
    verdicts: Vec<String>,
    undecided: bool,
    side_files: Vec<(String, String)>,
}

impl Outcome {
    fn put<T: Serialize>(&mut self, key: &str, v: &T) -> Result<()> {
        self.outputs.insert(key.into(), serde_json::to_value(v)?);
        Ok(())
    }
}

fn operator(cfg: &ExperimentConfig) -> &OperatorSpec {
    cfg.operator.as_ref().expect("validated config has an operator")
}

fn candidate(cfg: &ExperimentConfig) -> &CandidateSpec {
    cfg.candidate.as_ref().expect("validated config has a candidate")
}

fn mc_context(cfg: &ExperimentConfig, streams: TaskStreams, parallel: &Parallel, dt: f64) -> McContext {
    let b = &cfg.budgets;
    let mut euler = EulerConfig::new(dt)
        .with_crossing(b.crossing)
        .with_max_steps(b.max_steps);
    if let Some(eps) = b.eps {
        euler = euler.with_shell(eps);
    }
    McContext::new(streams, euler).with_parallel(parallel.clone())
}

fn classify_options(cfg: &ExperimentConfig) -> ClassifyOptions {
    ClassifyOptions {
        cauchy_tol: cfg.classify.cauchy_tol,
        significance: cfg.classify.significance,
    }
}

fn run_classify(cfg: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    let op = operator(cfg);
    let opts = classify_options(cfg);
    let mut reports: Vec<ClassificationReport> = Vec::new();
    for (k, x) in cfg.points.iter().enumerate() {
        let r = cfg.classify.radius.min(0.5 * op.domain.boundary_distance(x));
        let rep = classify_point(
            x,
            &cfg.measure,
            op,
            r,
            &default_deltas(r, cfg.classify.delta_count),
            &opts,
        )?;
        out.verdicts.push(format!("point {k}: {:?}", rep.verdict));
        out.undecided |= rep.verdict == Membership::Undecided;
        reports.push(rep);
    }
    out.put("classifications", &reports)
}

fn run_fine_limit(cfg: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    let op = operator(cfg);
    let u = build_candidate(candidate(cfg), op)?;
    let radii = cfg.radii.as_ref().expect("validated").radii();
    let mut results = Vec::new();
    for (k, x) in cfg.points.iter().enumerate() {
        let f = fine_limit(&*u, x, op, &radii)?;
        out.verdicts.push(format!(
            "point {k}: limit {:.12e}{}",
            f.limit,
            if f.undecided { " (undecided)" } else { "" }
        ));
        out.undecided |= f.undecided;
        results.push(f);
    }
    out.put(
        "fine_limits",
        &PointFineLimit {
            candidate: candidate(cfg).name.clone(),
            results,
        },
    )
}

fn bumps_of(cfg: &ExperimentConfig) -> Vec<TestBump> {
    let op = operator(cfg);
    let Some(bs) = &cfg.bumps else {
        return Vec::new();
    };
    let mut v = match (bs.radius, bs.spacing) {
        (Some(r), Some(s)) => bump_family(&op.domain, &cfg.measure, r, s),
        _ => Vec::new(),
    };
    v.extend(bs.explicit.iter().cloned());
    v
}

fn run_weak(cfg: &ExperimentConfig, parallel: &Parallel, out: &mut Outcome) -> Result<()> {
    let op = operator(cfg);
    let u = build_candidate(candidate(cfg), op)?;
    let bumps = bumps_of(cfg);
    let tol = cfg.bumps.as_ref().map_or(1e-6, |b| b.tol);
    let s: WeakTestSummary = weak_supersolution_test(&*u, &cfg.measure, op, &bumps, tol, parallel)?;
    out.verdicts.push(format!(
        "weak supersolution test {} (min {:.3e} over {} bumps)",
        if s.pass { "passed" } else { "failed" },
        s.min_value,
        s.values.len()
    ));
    out.put("weak_test", &s)
}

fn dichotomy_options(cfg: &ExperimentConfig) -> DichotomyOptions {
    let d = DichotomyOptions::default();
    DichotomyOptions {
        zero_threshold: cfg.dichotomy.zero_threshold,
        radii: cfg.radii.clone().unwrap_or(d.radii),
        classify_radius: cfg.classify.radius,
        delta_count: cfg.classify.delta_count,
        classify: classify_options(cfg),
        weak_tol: cfg.bumps.as_ref().map_or(d.weak_tol, |b| b.tol),
    }
}

fn run_dichotomy(cfg: &ExperimentConfig, streams: TaskStreams, parallel: &Parallel, out: &mut Outcome) -> Result<()> {
    let op = operator(cfg);
    let cand = candidate(cfg);
    let g = cfg.grid.as_ref().expect("validated");
    let grid = grid_points(&op.domain, g.spacing, g.margin);
    if grid.is_empty() {
        return Err(Error::Domain("evaluation grid is empty".into()));
    }
    let opts = dichotomy_options(cfg);
    let report: DichotomyReport = if cand.is_sampled() {
        let bump = resolvent_bump(cand, op)?;
        let ctx = mc_context(cfg, streams, parallel, cfg.budgets.dt[0]);
        let f = |y: &[f64]| bump.value(y);
        let samples: Vec<SampledValue> = grid
            .iter()
            .enumerate()
            .map(|(k, x)| {
                let e = fk_resolvent(
                    x,
                    &f,
                    &cfg.measure,
                    op,
                    cfg.budgets.replicates,
                    &ctx.sub(&format!("grid-{k}")),
                )?;
                Ok(SampledValue {
                    point: x.clone(),
                    value: e.estimate,
                    stderr: e.stderr,
                })
            })
            .collect::<Result<_>>()?;
        dichotomy_from_samples(&cand.name, &samples, &cfg.measure, op, &opts)?
    } else {
        let u = build_candidate(cand, op)?;
        dichotomy_check(
            &cand.name,
            &*u,
            &cfg.measure,
            op,
            &grid,
            &bumps_of(cfg),
            &opts,
            parallel,
        )?
    };
    out.verdicts.push(format!(
        "dichotomy: {:?} (zero set size {})",
        report.verdict,
        report.zero_set.len()
    ));
    out.undecided |= report.verdict == DichotomyVerdict::Undecided;
    out.put("dichotomy", &report)
}

fn run_fk(cfg: &ExperimentConfig, streams: TaskStreams, parallel: &Parallel, out: &mut Outcome) -> Result<()> {
    let op = operator(cfg);
    let f = build_candidate(candidate(cfg), op)?;
    let t = cfg.fk.as_ref().expect("validated").t;
    let mut rows = Vec::new();
    for (i, &dt) in cfg.budgets.dt.iter().enumerate() {
        let ctx = mc_context(cfg, streams.sub(&format!("dt-{i}")), parallel, dt);
        for (k, x) in cfg.points.iter().enumerate() {
            let e = fk_semigroup(
                x,
                t,
                &*f,
                &cfg.measure,
                op,
                cfg.budgets.replicates,
                &ctx.sub(&format!("point-{k}")),
            )?;
            out.verdicts.push(format!(
                "point {k}, dt {dt:e}: {:.6e} ± {:.2e}",
                e.estimate,
                Z99 * e.stderr
            ));
            rows.push(FkRow { dt, estimate: e });
        }
    }
    out.put("fk", &rows)
}

fn run_resolvent(cfg: &ExperimentConfig, streams: TaskStreams, parallel: &Parallel, out: &mut Outcome) -> Result<()> {
    let op = operator(cfg);
    let cand = candidate(cfg);
    let f = build_candidate(cand, op)?;
    let series_source = (cand.name == "constant-one").then(|| MeasureSpec::constant(1.0));
    let mut rows = Vec::new();
    for (i, &dt) in cfg.budgets.dt.iter().enumerate() {
        let ctx = mc_context(cfg, streams.sub(&format!("dt-{i}")), parallel, dt);
        for (k, x) in cfg.points.iter().enumerate() {
            let mc = fk_resolvent(
                x,
                &*f,
                &cfg.measure,
                op,
                cfg.budgets.replicates,
                &ctx.sub(&format!("point-{k}")),
            )?;
            let series = match &series_source {
                Some(mu) => neumann_resolvent(mu, &cfg.measure, op, x, 500, cfg.budgets.quad_tol).ok(),
                None => None,
            };
            let agree = series.as_ref().map(|s| mc.within(s.value, 3.0));
            out.verdicts.push(match (&series, agree) {
                (Some(s), Some(a)) => format!(
                    "point {k}, dt {dt:e}: MC {:.6e} ± {:.2e}, series {:.8e} ({})",
                    mc.estimate,
                    mc.stderr,
                    s.value,
                    if a { "agree" } else { "disagree" }
                ),
                _ => format!("point {k}, dt {dt:e}: MC {:.6e} ± {:.2e}", mc.estimate, mc.stderr),
            });
            rows.push(ResolventRow {
                point: x.clone(),
                dt,
                monte_carlo: mc,
                series,
                agree,
            });
        }
    }
    out.put("resolvent", &rows)
}

fn run_capacity(cfg: &ExperimentConfig, parallel: &Parallel, out: &mut Outcome) -> Result<()> {
    let c = cfg.capacity.as_ref().expect("validated");
    let mut rows = Vec::new();
    let mut last = None;
    for &n in &c.n {
        let grid = CellGrid::cube(c.dim, c.half, n);
        let target = ball_target(&grid, &c.target_center, c.target_radius);
        let problem = CapacityProblem::new(grid.clone(), c.kernel.clone(), target, c.p);
        let (primal, dual) = if c.p == 1.0 {
            let primal = solve_c1(&problem, parallel)?;
            let dual = if c.dual {
                Some(solve_dual_c1(&problem, parallel)?)
            } else {
                None
            };
            (primal, dual)
        } else {
            let opts = CpOptions {
                max_iter: c.max_iter,
                ..CpOptions::default()
            };
            (solve_cp(&problem, &opts, parallel)?, None)
        };
        let weak = dual.as_ref().map(|d| d.value <= primal.value * (1.0 + 1e-6) + 1e-12);
        out.verdicts.push(format!(
            "n {n}: value {:.6e}{}",
            primal.value,
            dual.as_ref()
                .map_or(String::new(), |d| format!(", dual {:.6e}", d.value))
        ));
        rows.push(CapacityRow {
            n,
            h: grid.h,
            target_cells: problem.target.len(),
            p: c.p,
            value: primal.value,
            feasibility: primal.feasibility,
            iterations: primal.iterations,
            duality_gap: primal.duality_gap,
            dual_value: dual.as_ref().map(|d| d.value),
            dual_feasibility: dual.as_ref().map(|d| d.feasibility),
            weak_duality: weak,
        });
        last = Some((grid, primal));
    }
    if let Some((grid, sol)) = last {
        let mut buf = Vec::new();
        write_optimizer_csv(&mut buf, &grid, &sol, "")?;
        out.side_files.push((
            "capacity_optimizer.csv".into(),
            String::from_utf8(buf).expect("csv is utf-8"),
        ));
    }
    out.put("capacity", &rows)
}

fn run_revuz(cfg: &ExperimentConfig, streams: TaskStreams, parallel: &Parallel, out: &mut Outcome) -> Result<()> {
    let op = operator(cfg);
    if !op.is_brownian() {
        return Err(Error::Unsupported(
            "revuz-check runs Euler paths of the Brownian operator".into(),
        ));
    }
    let nu = &cfg.measure;
    let surface = nu.has_surface();
    let mut rows = Vec::new();
    for (k, x) in cfg.points.iter().enumerate() {
        let oracle = potential(nu, op, x, cfg.budgets.quad_tol)?;
        for (i, &dt) in cfg.budgets.dt.iter().enumerate() {
            let ctx = mc_context(
                cfg,
                streams.sub(&format!("point-{k}")).sub(&format!("dt-{i}")),
                parallel,
                dt,
            );
            let samples: Vec<f64> = parallel
                .map(cfg.budgets.replicates, |r| {
                    let mut rng = ctx.streams.stream(r).rng();
                    let rec = if surface {
                        surface_pcaf_with(&op.domain, x, nu, ctx.euler.clone(), &mut rng)
                    } else {
                        euler_killed_pcaf_with(&op.domain, x, nu, ctx.euler.clone(), &mut rng)
                    }?;
                    Ok(if rec.pcaf_infinite { f64::INFINITY } else { rec.pcaf })
                })
                .into_iter()
                .collect::<Result<_>>()?;
            let finite: Vec<f64> = samples.iter().copied().filter(|v| v.is_finite()).collect();
            let s = Summary::of(&finite);
            let z = (!oracle.infinite && s.stderr > 0.0).then(|| (s.mean - oracle.value) / s.stderr);
            out.verdicts.push(format!(
                "point {k}, dt {dt:e}: E A = {:.6e} ± {:.2e}, oracle {}",
                s.mean,
                s.stderr,
                if oracle.infinite {
                    "infinite".to_string()
                } else {
                    format!("{:.8e}", oracle.value)
                }
            ));
            rows.push(RevuzRow {
                point: x.clone(),
                dt,
                n: samples.len(),
                mean: s.mean,
                stderr: s.stderr,
                median: median(&samples),
                infinite_fraction: (samples.len() - finite.len()) as f64 / samples.len() as f64,
                oracle: oracle.value,
                oracle_infinite: oracle.infinite,
                z,
            });
        }
    }
    out.put("revuz", &rows)
}

/// Printed-kernel radial CDF truncated to `v ≤ 1 − η`.
pub fn as_printed_truncated_cdf(v: f64, eta: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else if v >= 1.0 - eta {
        1.0
    } else {
        (1.0 - v).ln() / eta.ln()
    }
}

fn run_exit_kernel(cfg: &ExperimentConfig, streams: TaskStreams, parallel: &Parallel, out: &mut Outcome) -> Result<()> {
    let e = cfg.exit_kernel.as_ref().expect("validated");
    let mut rows = Vec::new();
    for &d in &e.dims {
        for &alpha in &e.alphas {
            let norm = ExitKernel::new(d, alpha, e.radius, ExitVariant::Normalized)?.total_mass();
            let printed = ExitKernel::new(d, alpha, e.radius, ExitVariant::AsPrinted)?.total_mass();
            let (ks_n, ks_p) = if e.samples > 0 {
                let st = streams.sub(&format!("d{d}-a{alpha}"));
                let x = vec![0.0; d];
                let v: Vec<f64> = parallel
                    .map(e.samples, |i| {
                        let y = stable_exit_step(&x, e.radius, alpha, &mut st.stream(i).rng())?;
                        Ok(e.radius * e.radius / crate::geom::norm2(&y))
                    })
                    .into_iter()
                    .collect::<Result<_>>()?;
                (
                    Some(ks_statistic(&v, |t| exit_v_cdf_exact(alpha, t))),
                    Some(ks_statistic(&v, |t| as_printed_truncated_cdf(t, e.truncation))),
                )
            } else {
                (None, None)
            };
            out.verdicts.push(format!(
                "d {d}, alpha {alpha}: normalized mass {:.8}, printed mass {}{}",
                norm.value,
                if printed.diverged {
                    "diverges".to_string()
                } else {
                    format!("{:.6}", printed.value)
                },
                match (ks_n, ks_p) {
                    (Some(a), Some(b)) => format!(", KS normalized {a:.4}, KS printed {b:.4}"),
                    _ => String::new(),
                }
            ));
            rows.push(ExitKernelRow {
                dim: d,
                alpha,
                radius: e.radius,
                normalized_mass: norm.value,
                normalized_error: norm.error,
                as_printed_mass: printed.value,
                as_printed_diverged: printed.diverged,
                samples: e.samples,
                ks_normalized: ks_n,
                ks_as_printed: ks_p,
                ks_tol: e.ks_tol,
            });
        }
    }
    out.put("exit_kernel", &rows)
}
