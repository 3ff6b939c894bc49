//! Grid-discretized Riesz capacities `C_p`, `C_1` and the dual packing value `c_1`.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom;
use crate::kernels::{GreenKernel, KernelForm, Singularity};
use crate::model::{DomainSpec, OperatorSpec};
use crate::special::{ball_volume, gamma};
use crate::stats::Parallel;

/// Kernel of the potential operator `R`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CapacityKernel {
    /// `scale·|x − y|^{2α − d}`.
    Riesz {
        alpha: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `scale·G_D(x, y)` for an operator on a ball.
    Green {
        operator: OperatorSpec,
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl CapacityKernel {
    pub fn newtonian() -> Self {
        CapacityKernel::Riesz { alpha: 1.0, scale: 1.0 }
    }

    pub fn scaled(&self, c: f64) -> Self {
        match self.clone() {
            CapacityKernel::Riesz { alpha, scale } => CapacityKernel::Riesz {
                alpha,
                scale: scale * c,
            },
            CapacityKernel::Green { operator, scale } => CapacityKernel::Green {
                operator,
                scale: scale * c,
            },
        }
    }
}

/// `E|X − Y|^λ` for `X, Y` independent and uniform on `B(0, a) ⊂ ℝ^d`.
pub fn ball_mean_power(d: usize, lambda: f64, a: f64) -> f64 {
    let df = d as f64;
    a.powf(lambda) * 2f64.powf(df + lambda) * df * gamma(df / 2.0 + 1.0) * gamma((df + lambda + 1.0) / 2.0)
        / ((df + lambda) * PI.sqrt() * gamma(df + lambda / 2.0 + 1.0))
}

/// Evaluator with the cell self-interaction on the diagonal.
#[derive(Clone, Debug)]
struct KernelEval {
    green: Option<GreenKernel>,
    alpha: f64,
    scale: f64,
    /// Singular coefficient `k` in `k|x−y|^{2α−d}`.
    k: f64,
    /// Mean of `|X − Y|^{2α−d}` over a cell-volume ball.
    self_mean: f64,
    probe: f64,
}

impl KernelEval {
    fn new(kernel: &CapacityKernel, d: usize, h: f64) -> Result<Self> {
        let a = (h.powi(d as i32) / ball_volume(d)).powf(1.0 / d as f64);
        let (green, alpha, scale, k) = match kernel {
            CapacityKernel::Riesz { alpha, scale } => {
                if !(*alpha > 0.0 && 2.0 * alpha < d as f64) {
                    return Err(Error::Domain("Riesz kernel needs 0 < 2α < d".into()));
                }
                (None, *alpha, *scale, 1.0)
            }
            CapacityKernel::Green { operator, scale } => {
                let g = GreenKernel::for_operator(operator)?;
                if g.singularity == Singularity::Log {
                    return Err(Error::Unsupported("logarithmic kernels are not discretized".into()));
                }
                let unit = GreenKernel::riesz(d, operator.alpha);
                let mut e = vec![0.0; d];
                e[0] = 1.0;
                let k = unit.eval(&vec![0.0; d], &e);
                (Some(g), operator.alpha, *scale, k)
            }
        };
        if !(scale > 0.0) {
            return Err(Error::Domain("kernel scale must be positive".into()));
        }
        Ok(KernelEval {
            green,
            alpha,
            scale,
            k,
            self_mean: ball_mean_power(d, 2.0 * alpha - d as f64, a),
            probe: 1e-6 * a,
        })
    }

    fn offdiag(&self, x: &[f64], y: &[f64]) -> f64 {
        let d = x.len() as f64;
        match &self.green {
            None => self.scale * geom::dist(x, y).powf(2.0 * self.alpha - d),
            Some(g) => self.scale * g.eval(x, y),
        }
    }

    fn diag(&self, x: &[f64]) -> f64 {
        match &self.green {
            None => self.scale * self.self_mean,
            Some(g) => {
                if !g.center().is_empty() && geom::dist(x, g.center()) >= g.radius() {
                    return 0.0;
                }
                let d = x.len();
                let mut y = x.to_vec();
                y[0] += self.probe;
                // regular part of G at the diagonal
                let reg = g.eval(x, &y) - self.k * self.probe.powf(2.0 * self.alpha - d as f64);
                self.scale * (self.k * self.self_mean + reg).max(0.0)
            }
        }
    }

    /// Invariant under the signed axis permutations about `c`.
    fn symmetric_about(&self, c: &[f64]) -> bool {
        match &self.green {
            None => true,
            Some(g) => g.form == KernelForm::WholeSpaceRiesz || geom::dist(g.center(), c) < 1e-12,
        }
    }
}

/// Cubic cells `lo + h·(k + ½)` on a box with `n` cells per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellGrid {
    pub lo: Vec<f64>,
    pub h: f64,
    pub n: usize,
}

impl CellGrid {
    /// `[−half, half]^d` split into `n^d` cells.
    pub fn cube(d: usize, half: f64, n: usize) -> Self {
        CellGrid {
            lo: vec![-half; d],
            h: 2.0 * half / n as f64,
            n,
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    pub fn index(&self, mut flat: usize) -> Vec<usize> {
        let d = self.dim();
        let mut mi = vec![0; d];
        for k in (0..d).rev() {
            mi[k] = flat % self.n;
            flat /= self.n;
        }
        mi
    }

    pub fn flat(&self, mi: &[usize]) -> usize {
        mi.iter().fold(0, |acc, &k| acc * self.n + k)
    }

    pub fn center(&self, flat: usize) -> Vec<f64> {
        self.index(flat)
            .iter()
            .zip(&self.lo)
            .map(|(&k, l)| l + self.h * (k as f64 + 0.5))
            .collect()
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lo.iter().map(|l| l + 0.5 * self.h * self.n as f64).collect()
    }

    /// Cells whose centers satisfy `pred`.
    pub fn cells_where(&self, pred: impl Fn(&[f64]) -> bool) -> Vec<usize> {
        (0..self.len()).filter(|&i| pred(&self.center(i))).collect()
    }

    /// Cell containing `x`, if any.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut mi = Vec::with_capacity(x.len());
        for (xi, l) in x.iter().zip(&self.lo) {
            let k = ((xi - l) / self.h).floor();
            if k < 0.0 || k >= self.n as f64 {
                return None;
            }
            mi.push(k as usize);
        }
        Some(self.flat(&mi))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityProblem {
    pub grid: CellGrid,
    pub kernel: CapacityKernel,
    /// Flat indices of the target cells.
    pub target: Vec<usize>,
    pub p: f64,
    /// Cells that may carry density (`C_p`); all cells when `None`.
    #[serde(default)]
    pub support: Option<Vec<usize>>,
}

impl CapacityProblem {
    pub fn new(grid: CellGrid, kernel: CapacityKernel, target: Vec<usize>, p: f64) -> Self {
        let mut target = target;
        target.sort_unstable();
        target.dedup();
        CapacityProblem {
            grid,
            kernel,
            target,
            p,
            support: None,
        }
    }

    pub fn with_target(&self, target: Vec<usize>) -> Self {
        CapacityProblem::new(self.grid.clone(), self.kernel.clone(), target, self.p)
    }

    pub fn weight(&self) -> f64 {
        self.grid.cell_volume()
    }

    fn validate(&self) -> Result<()> {
        if self.grid.n == 0 || !(self.grid.h > 0.0) {
            return Err(Error::Domain("grid must have positive spacing and cells".into()));
        }
        if let Some(&i) = self.target.iter().find(|&&i| i >= self.grid.len()) {
            return Err(Error::Domain(format!("target cell {i} is outside the grid")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacitySolution {
    pub value: f64,
    /// Cell indices and optimizer weights (density for `C_p`, masses otherwise).
    pub cells: Vec<usize>,
    pub optimizer: Vec<f64>,
    /// `min_target (R f − 1)` for primal problems, `1 − max (R μ)` for the dual.
    pub feasibility: f64,
    pub iterations: usize,
    pub duality_gap: Option<f64>,
    /// Bound from the other side of the duality, when available.
    pub bound: Option<f64>,
}

impl CapacitySolution {
    fn empty() -> Self {
        CapacitySolution {
            value: 0.0,
            cells: Vec::new(),
            optimizer: Vec::new(),
            feasibility: f64::INFINITY,
            iterations: 0,
            duality_gap: Some(0.0),
            bound: Some(0.0),
        }
    }
}

/// Orbits of a cell set under the signed axis permutations that preserve `keep`.
#[derive(Clone, Debug)]
struct Orbits {
    /// Members of each orbit; the first is the representative.
    members: Vec<Vec<usize>>,
}

impl Orbits {
    #[cfg(test)]
    fn singletons(cells: &[usize]) -> Self {
        Orbits {
            members: cells.iter().map(|&c| vec![c]).collect(),
        }
    }

    fn len(&self) -> usize {
        self.members.len()
    }

    fn rep(&self, o: usize) -> usize {
        self.members[o][0]
    }
}

/// Signed axis permutations of the index cube that map `keep` onto itself.
fn stabilizer(grid: &CellGrid, keep: &[usize]) -> Vec<(Vec<usize>, Vec<bool>)> {
    let d = grid.dim();
    let set: std::collections::HashSet<usize> = keep.iter().copied().collect();
    let mut perms: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..d {
        let mut next = Vec::new();
        for p in &perms {
            for k in 0..d {
                if !p.contains(&k) {
                    let mut q = p.clone();
                    q.push(k);
                    next.push(q);
                }
            }
        }
        perms = next;
    }
    let mut out = Vec::new();
    for p in perms {
        for mask in 0..(1usize << d) {
            let signs: Vec<bool> = (0..d).map(|k| mask >> k & 1 == 1).collect();
            if keep.iter().all(|&c| set.contains(&apply(grid, &p, &signs, c))) {
                out.push((p.clone(), signs));
            }
        }
    }
    out
}

fn apply(grid: &CellGrid, perm: &[usize], signs: &[bool], cell: usize) -> usize {
    let mi = grid.index(cell);
    let img: Vec<usize> = (0..mi.len())
        .map(|k| {
            let v = mi[perm[k]];
            if signs[k] {
                grid.n - 1 - v
            } else {
                v
            }
        })
        .collect();
    grid.flat(&img)
}

fn orbits_of(grid: &CellGrid, group: &[(Vec<usize>, Vec<bool>)], cells: &[usize]) -> Orbits {
    let mut seen: HashMap<usize, usize> = HashMap::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for &c in cells {
        if seen.contains_key(&c) {
            continue;
        }
        let mut orbit: Vec<usize> = group.iter().map(|(p, s)| apply(grid, p, s, c)).collect();
        orbit.sort_unstable();
        orbit.dedup();
        // keep the scanned cell first so representatives follow input order
        orbit.retain(|&m| m != c);
        orbit.insert(0, c);
        let o = members.len();
        for &m in &orbit {
            seen.insert(m, o);
        }
        members.push(orbit);
    }
    Orbits { members }
}

/// Reduced kernel: `out[r][o] = Σ_{j ∈ orbit o} K(rep_r, j)`.
fn reduced_matrix(grid: &CellGrid, k: &KernelEval, rows: &[usize], cols: &Orbits, par: &Parallel) -> DMatrix<f64> {
    let centers: Vec<Vec<f64>> = cols
        .members
        .iter()
        .map(|m| m.iter().map(|&c| grid.center(c)).collect::<Vec<_>>().concat())
        .collect();
    let d = grid.dim();
    let data: Vec<Vec<f64>> = par.map_items(rows, |&r| {
        let x = grid.center(r);
        cols.members
            .iter()
            .zip(&centers)
            .map(|(m, cs)| {
                m.iter()
                    .zip(cs.chunks_exact(d))
                    .map(|(&c, y)| if c == r { k.diag(&x) } else { k.offdiag(&x, y) })
                    .sum()
            })
            .collect()
    });
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| data[i][j])
}

fn symmetry(problem: &CapacityProblem, k: &KernelEval, extra: Option<&[usize]>) -> Vec<(Vec<usize>, Vec<bool>)> {
    if !k.symmetric_about(&problem.grid.midpoint()) {
        return vec![((0..problem.grid.dim()).collect(), vec![false; problem.grid.dim()])];
    }
    let mut g = stabilizer(&problem.grid, &problem.target);
    if let Some(s) = extra {
        let keep = stabilizer(&problem.grid, s);
        g.retain(|e| keep.contains(e));
    }
    g
}

/// Primal-dual interior point for `min cᵀx, Ax ≥ b, x ≥ 0` with Mehrotra correction.
#[derive(Clone, Debug)]
struct LpSolution {
    x: DVector<f64>,
    dual: f64,
    iterations: usize,
}

fn lp_ipm(c: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>, tol: f64, max_iter: usize) -> Result<LpSolution> {
    let (m, n) = a.shape();
    let mut x = DVector::from_element(n, 1.0);
    let mut z = DVector::from_element(n, 1.0);
    let mut y = DVector::from_element(m, 1.0);
    let mut s = DVector::from_element(m, 1.0);
    let at = a.transpose();
    let step_to_boundary = |v: &DVector<f64>, dv: &DVector<f64>| {
        v.iter()
            .zip(dv.iter())
            .filter(|(_, d)| **d < 0.0)
            .map(|(vi, di)| -vi / di)
            .fold(1.0f64, f64::min)
    };
    for it in 0..max_iter {
        let rp = a * &x - &s - b;
        let rd = &at * &y + &z - c;
        let mu = (x.dot(&z) + y.dot(&s)) / (n + m) as f64;
        let primal = c.dot(&x);
        let dual = b.dot(&y);
        let scale = 1.0 + primal.abs();
        if (primal - dual).abs() <= tol * scale
            && rp.norm() <= tol * (1.0 + b.norm())
            && rd.norm() <= tol * (1.0 + c.norm())
        {
            return Ok(LpSolution {
                x,
                dual,
                iterations: it,
            });
        }
        let dvec = x.component_div(&z);
        let sy = s.component_div(&y);
        let mut mm = &at.transpose() * DMatrix::from_diagonal(&dvec) * &at;
        for i in 0..m {
            mm[(i, i)] += sy[i];
        }
        let reg = 1e-15 * mm.diagonal().max();
        for i in 0..m {
            mm[(i, i)] += reg;
        }
        let chol = nalgebra::linalg::Cholesky::new(mm.clone());
        let lu = if chol.is_none() { Some(mm.lu()) } else { None };
        let normal_solve = |rhs: &DVector<f64>| -> Option<DVector<f64>> {
            match (&chol, &lu) {
                (Some(c), _) => Some(c.solve(rhs)),
                (None, Some(l)) => l.solve(rhs),
                _ => None,
            }
        };
        let solve = |rxz: &DVector<f64>, rsy: &DVector<f64>| {
            // dx = D(Aᵀdy + r_d − X⁻¹r_xz), ds = −Y⁻¹(r_sy + S dy)
            let t = &rd - rxz.component_div(&x);
            let rhs = -&rp - a * dvec.component_mul(&t) - rsy.component_div(&y);
            let dy = normal_solve(&rhs).unwrap_or_else(|| DVector::zeros(m));
            let dx = dvec.component_mul(&(&at * &dy + &t));
            let dz = -(rxz + z.component_mul(&dx)).component_div(&x);
            let ds = -(rsy + s.component_mul(&dy)).component_div(&y);
            (dx, dy, dz, ds)
        };
        let rxz = x.component_mul(&z);
        let rsy = s.component_mul(&y);
        let (dx, dy, dz, ds) = solve(&rxz, &rsy);
        let ap = step_to_boundary(&x, &dx).min(step_to_boundary(&s, &ds));
        let ad = step_to_boundary(&z, &dz).min(step_to_boundary(&y, &dy));
        let mu_aff = ((&x + ap * &dx).dot(&(&z + ad * &dz)) + (&s + ap * &ds).dot(&(&y + ad * &dy))) / (n + m) as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
        let rxz = &rxz + dx.component_mul(&dz) - DVector::from_element(n, sigma * mu);
        let rsy = &rsy + ds.component_mul(&dy) - DVector::from_element(m, sigma * mu);
        let (dx, dy, dz, ds) = solve(&rxz, &rsy);
        let ap = (0.99 * step_to_boundary(&x, &dx).min(step_to_boundary(&s, &ds))).min(1.0);
        let ad = (0.99 * step_to_boundary(&z, &dz).min(step_to_boundary(&y, &dy))).min(1.0);
        x += ap * dx;
        s += ap * ds;
        y += ad * dy;
        z += ad * dz;
    }
    Err(Error::Quadrature {
        achieved: (c.dot(&x) - b.dot(&y)).abs() / (1.0 + c.dot(&x).abs()),
        requested: tol,
    })
}

const LP_TOL: f64 = 1e-10;

fn check_rows(m: &DMatrix<f64>, problem: &CapacityProblem, reps: &Orbits) -> Result<()> {
    for r in 0..m.nrows() {
        if m.row(r).iter().all(|v| v.abs() < 1e-300) {
            return Err(Error::Infeasible(format!(
                "kernel row of target cell {} vanishes",
                problem
                    .grid
                    .center(reps.rep(r))
                    .iter()
                    .map(|v| format!("{v:.4}"))
                    .collect::<Vec<_>>()
                    .join(",")
            )));
        }
    }
    Ok(())
}

/// `C_1`: least total mass whose potential is at least 1 on the target, with
/// the mass carried by the target cells.
pub fn solve_c1(problem: &CapacityProblem, par: &Parallel) -> Result<CapacitySolution> {
    problem.validate()?;
    if problem.target.is_empty() {
        return Ok(CapacitySolution::empty());
    }
    let k = KernelEval::new(&problem.kernel, problem.grid.dim(), problem.grid.h)?;
    let group = symmetry(problem, &k, None);
    let orbits = orbits_of(&problem.grid, &group, &problem.target);
    let reps: Vec<usize> = (0..orbits.len()).map(|o| orbits.rep(o)).collect();
    let a = reduced_matrix(&problem.grid, &k, &reps, &orbits, par);
    check_rows(&a, problem, &orbits)?;
    let c = DVector::from_iterator(orbits.len(), orbits.members.iter().map(|m| m.len() as f64));
    let b = DVector::from_element(orbits.len(), 1.0);
    let sol = lp_ipm(&c, &a, &b, LP_TOL, 200)?;
    let mut x = sol.x.map(|v| v.max(0.0));
    let pot = &a * &x;
    let min_pot = pot.min();
    if min_pot < 1.0 {
        x /= min_pot;
    }
    let value = c.dot(&x);
    let (cells, optimizer) = expand(&orbits, x.as_slice());
    Ok(CapacitySolution {
        value,
        cells,
        optimizer,
        feasibility: (&a * &x).min() - 1.0,
        iterations: sol.iterations,
        duality_gap: Some((value - sol.dual).abs()),
        bound: Some(sol.dual.min(value)),
    })
}

fn expand(orbits: &Orbits, v: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let mut pairs: Vec<(usize, f64)> = orbits
        .members
        .iter()
        .zip(v)
        .flat_map(|(m, &w)| m.iter().map(move |&c| (c, w)))
        .collect();
    pairs.sort_by_key(|p| p.0);
    pairs.into_iter().unzip()
}

/// `c_1`: largest mass on the target whose potential stays at most 1 on the whole grid.
pub fn solve_dual_c1(problem: &CapacityProblem, par: &Parallel) -> Result<CapacitySolution> {
    problem.validate()?;
    if problem.target.is_empty() {
        return Ok(CapacitySolution::empty());
    }
    let grid = &problem.grid;
    let k = KernelEval::new(&problem.kernel, grid.dim(), grid.h)?;
    let group = symmetry(problem, &k, None);
    let cols = orbits_of(grid, &group, &problem.target);
    let all: Vec<usize> = (0..grid.len()).collect();
    let rows_all = orbits_of(grid, &group, &all);
    let row_reps: Vec<usize> = (0..rows_all.len()).map(|o| rows_all.rep(o)).collect();
    // constraint rows start at the target and grow by cutting planes
    let mut active: Vec<usize> = (0..cols.len()).map(|o| cols.rep(o)).collect();
    let full = reduced_matrix(grid, &k, &row_reps, &cols, par);
    let row_of: HashMap<usize, usize> = row_reps.iter().enumerate().map(|(i, &r)| (r, i)).collect();
    let mut iterations = 0;
    for _round in 0..50 {
        let a = DMatrix::from_fn(active.len(), cols.len(), |i, j| full[(row_of[&active[i]], j)]);
        check_rows(&a, problem, &cols)?;
        // max 1ᵀλ s.t. Aλ ≤ 1  ⇔  min −1ᵀλ s.t. −Aλ ≥ −1
        let c = DVector::from_iterator(cols.len(), cols.members.iter().map(|m| -(m.len() as f64)));
        let b = DVector::from_element(active.len(), -1.0);
        let sol = lp_ipm(&c, &(-a), &b, LP_TOL, 200)?;
        iterations += sol.iterations;
        let lam = sol.x.map(|v| v.max(0.0));
        let pot = &full * &lam;
        let worst = pot.max();
        let violated: Vec<usize> = (0..row_reps.len())
            .filter(|&i| pot[i] > 1.0 + 1e-9 && !active.contains(&row_reps[i]))
            .map(|i| row_reps[i])
            .collect();
        if violated.is_empty() {
            let lam = if worst > 1.0 { lam / worst } else { lam };
            let value: f64 = cols
                .members
                .iter()
                .zip(lam.iter())
                .map(|(m, v)| m.len() as f64 * v)
                .sum();
            let (cells, optimizer) = expand(&cols, lam.as_slice());
            return Ok(CapacitySolution {
                value,
                cells,
                optimizer,
                feasibility: 1.0 - (&full * &lam).max(),
                iterations,
                duality_gap: Some((-sol.dual - value).abs()),
                bound: Some(-sol.dual),
            });
        }
        active.extend(violated);
    }
    Err(Error::Infeasible("cutting planes did not settle".into()))
}

/// Settings for the `C_p` dual ascent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpOptions {
    pub max_iter: usize,
    /// Relative duality gap at which to stop.
    pub gap_tol: f64,
}

impl Default for CpOptions {
    fn default() -> Self {
        CpOptions {
            max_iter: 20_000,
            gap_tol: 1e-6,
        }
    }
}

/// `C_p`, `p > 1`: least `Σ w f_i^p` with `R f ≥ 1` on the target.
///
/// Projected gradient ascent on the concave dual; the primal iterate
/// `f(λ) = (Kᵀλ / p)^{1/(p−1)}` is rescaled to feasibility at the end.
pub fn solve_cp(problem: &CapacityProblem, opts: &CpOptions, par: &Parallel) -> Result<CapacitySolution> {
    problem.validate()?;
    let p = problem.p;
    if !(p > 1.0) {
        return Err(Error::Domain("solve_cp needs p > 1; use solve_c1 for p = 1".into()));
    }
    if problem.target.is_empty() {
        return Ok(CapacitySolution::empty());
    }
    let grid = &problem.grid;
    let w = problem.weight();
    let k = KernelEval::new(&problem.kernel, grid.dim(), grid.h)?;
    let support: Vec<usize> = problem.support.clone().unwrap_or_else(|| (0..grid.len()).collect());
    let group = symmetry(problem, &k, Some(&support));
    let rows = orbits_of(grid, &group, &problem.target);
    let cols = orbits_of(grid, &group, &support);
    let reps: Vec<usize> = (0..rows.len()).map(|o| rows.rep(o)).collect();
    // (R f)_r = Σ_o A[r,o] f_o with A including the cell volume
    let a = reduced_matrix(grid, &k, &reps, &cols, par) * w;
    check_rows(&a, problem, &rows)?;
    let at = a.transpose();
    let mult: DVector<f64> = DVector::from_iterator(cols.len(), cols.members.iter().map(|m| m.len() as f64));
    let rmult: DVector<f64> = DVector::from_iterator(rows.len(), rows.members.iter().map(|m| m.len() as f64));
    let q = 1.0 / (p - 1.0);
    // Lagrangian Σ_o |o| w f_o^p − Σ_r |r| λ_r ((A f)_r − 1); stationary f below
    let primal_of = |lam: &DVector<f64>| -> DVector<f64> {
        let g = &at * lam.component_mul(&rmult);
        DVector::from_iterator(
            cols.len(),
            g.iter()
                .zip(mult.iter())
                .map(|(gi, mi)| (gi.max(0.0) / (p * mi * w)).powf(q)),
        )
    };
    let energy = |f: &DVector<f64>| -> f64 { f.iter().zip(mult.iter()).map(|(fi, mi)| mi * w * fi.powf(p)).sum() };
    let dual_value = |lam: &DVector<f64>, f: &DVector<f64>| -> f64 { rmult.dot(lam) - (p - 1.0) * energy(f) };
    let mut lam = DVector::from_element(rows.len(), 1.0);
    let f1 = primal_of(&lam);
    let m1 = (&a * &f1).min();
    lam *= (1.0 / m1).powf(p - 1.0);
    let mut f = primal_of(&lam);
    let mut phi = dual_value(&lam, &f);
    let mut step = 1.0 / (rmult.max() * (1.0 + a.max()));
    let mut best = (f64::INFINITY, f.clone());
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it + 1;
        let pot = &a * &f;
        let minp = pot.min();
        if minp > 0.0 {
            let feas = &f / minp.min(1.0).max(minp);
            let scaled = if minp < 1.0 { &f / minp } else { feas };
            let e = energy(&scaled);
            if e < best.0 {
                best = (e, scaled);
            }
        }
        if (best.0 - phi) <= opts.gap_tol * best.0 {
            break;
        }
        // ascent direction: |r|(1 − (A f)_r)
        let grad = DVector::from_iterator(rows.len(), pot.iter().zip(rmult.iter()).map(|(v, m)| m * (1.0 - v)));
        let mut accepted = false;
        for _ in 0..60 {
            let trial = (&lam + step * &grad).map(|v| v.max(0.0));
            let ft = primal_of(&trial);
            let pt = dual_value(&trial, &ft);
            let moved = &trial - &lam;
            if pt >= phi + 0.5 * grad.dot(&moved) - 1e-15 * phi.abs() {
                lam = trial;
                f = ft;
                phi = pt;
                step *= 1.5;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let (value, fbest) = best;
    if !value.is_finite() {
        return Err(Error::Infeasible("no feasible density found".into()));
    }
    let (cells, optimizer) = expand(&cols, fbest.as_slice());
    Ok(CapacitySolution {
        value,
        cells,
        optimizer,
        feasibility: (&a * &fbest).min() - 1.0,
        iterations,
        duality_gap: Some(value - phi),
        bound: Some(phi),
    })
}

/// Cells of a ball target on a grid.
pub fn ball_target(grid: &CellGrid, center: &[f64], r: f64) -> Vec<usize> {
    grid.cells_where(|x| geom::dist(x, center) < r)
}

/// Cells inside a domain.
pub fn domain_cells(grid: &CellGrid, domain: &DomainSpec) -> Vec<usize> {
    grid.cells_where(|x| domain.contains(x))
}

/// Optimizer weights over the grid as `x1..xd,value` rows.
pub fn write_optimizer_csv<W: std::io::Write>(
    out: W,
    grid: &CellGrid,
    sol: &CapacitySolution,
    header: &str,
) -> Result<()> {
    let mut out = out;
    if !header.is_empty() {
        writeln!(out, "{header}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut head: Vec<String> = (1..=grid.dim()).map(|k| format!("x{k}")).collect();
    head.push("value".into());
    w.write_record(&head)?;
    for (&c, v) in sol.cells.iter().zip(&sol.optimizer) {
        let mut row: Vec<String> = grid.center(c).iter().map(|x| format!("{x:e}")).collect();
        row.push(format!("{v:e}"));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
