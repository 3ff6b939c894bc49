//! Registered closed-form candidate functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom;
use crate::kernels::{expected_residence, expected_residence_stable, GreenKernel, TestBump};
use crate::model::{DomainSpec, OperatorSpec, TabulatedDensity};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    pub formula: String,
    /// Where the exact value comes from.
    pub note: String,
    /// Recognized keys of `[candidate]`.
    pub params: Vec<String>,
    /// Known only through Monte-Carlo point estimates.
    pub sampled: bool,
}

fn entry(name: &str, formula: &str, note: &str, params: &[&str], sampled: bool) -> CatalogEntry {
    CatalogEntry {
        name: name.into(),
        formula: formula.into(),
        note: note.into(),
        params: params.iter().map(|s| s.to_string()).collect(),
        sampled,
    }
}

pub fn catalog_list() -> Vec<CatalogEntry> {
    vec![
        entry(
            "paper-example-x2",
            "|x - center|^2",
            "worked example: supersolution for nu = 2d|y|^-2 dy vanishing only at the pole",
            &["center"],
            false,
        ),
        entry(
            "harmonic-coordinate",
            "x_axis + offset",
            "harmonic: mean value property",
            &["axis", "offset"],
            false,
        ),
        entry(
            "green-section",
            "G_D(x, pole)",
            "closed-form ball Green function",
            &["pole"],
            false,
        ),
        entry(
            "residence-ball",
            "E_x tau_D on the ball domain",
            "radial ODE",
            &[],
            false,
        ),
        entry("constant-one", "1", "constant", &[], false),
        entry("zero", "0", "constant", &[], false),
        entry(
            "fundamental-solution",
            "c(d,alpha) |x - pole|^(2 alpha - d)",
            "whole-space Riesz kernel",
            &["pole"],
            false,
        ),
        entry(
            "resolvent-bump",
            "R^nu xi for a smooth bump xi",
            "Feynman-Kac Monte Carlo; no closed form",
            &["bump"],
            true,
        ),
        entry(
            "tabulated",
            "multilinear interpolation of grid values",
            "interpolation error O(h^2) in smooth regions; fine limits and weak forms inherit it",
            &["table"],
            false,
        ),
    ]
}

pub fn catalog_names() -> Vec<String> {
    catalog_list().into_iter().map(|e| e.name).collect()
}

/// Catalog reference with its parameters, as written under `[candidate]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pole: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bump: Option<TestBump>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<TabulatedDensity>,
}

impl CandidateSpec {
    pub fn named(name: &str) -> Self {
        CandidateSpec {
            name: name.into(),
            center: None,
            axis: None,
            offset: None,
            pole: None,
            bump: None,
            table: None,
        }
    }

    pub fn is_sampled(&self) -> bool {
        self.name == "resolvent-bump"
    }
}

pub type CandidateFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

fn ball_of(domain: &DomainSpec) -> Result<(Vec<f64>, f64)> {
    match domain {
        DomainSpec::Ball { center, radius } => Ok((center.clone(), *radius)),
        _ => Err(Error::Unsupported("candidate needs a ball domain".into())),
    }
}

/// Closed-form evaluator of a catalog candidate.
pub fn build_candidate(spec: &CandidateSpec, op: &OperatorSpec) -> Result<CandidateFn> {
    let d = op.dim;
    let origin = vec![0.0; d];
    let point = |v: &Option<Vec<f64>>, what: &str| -> Result<Vec<f64>> {
        let p = v.clone().unwrap_or_else(|| origin.clone());
        if p.len() != d {
            return Err(Error::Domain(format!(
                "candidate {what} has dimension {} ≠ {d}",
                p.len()
            )));
        }
        Ok(p)
    };
    Ok(match spec.name.as_str() {
        "paper-example-x2" => {
            let c = point(&spec.center, "center")?;
            Box::new(move |x| geom::dist2(x, &c))
        }
        "harmonic-coordinate" => {
            let k = spec.axis.unwrap_or(0);
            if k >= d {
                return Err(Error::Domain(format!("axis {k} out of range for d = {d}")));
            }
            let off = spec.offset.unwrap_or(0.0);
            Box::new(move |x| x[k] + off)
        }
        "green-section" => {
            let g = GreenKernel::for_operator(op)?;
            let p = point(&spec.pole, "pole")?;
            Box::new(move |x| g.eval(x, &p))
        }
        "residence-ball" => {
            let (c, r) = ball_of(&op.domain)?;
            let alpha = op.alpha;
            let brownian = op.is_brownian();
            Box::new(move |x| {
                let y = geom::sub(x, &c);
                let v = if brownian {
                    expected_residence(d, r, &y)
                } else {
                    expected_residence_stable(d, alpha, r, &y)
                };
                v.unwrap_or(0.0)
            })
        }
        "constant-one" => Box::new(|_| 1.0),
        "zero" => Box::new(|_| 0.0),
        "fundamental-solution" => {
            if 2.0 * op.alpha >= d as f64 {
                return Err(Error::Unsupported("fundamental solution needs 2α < d".into()));
            }
            let g = GreenKernel::riesz(d, op.alpha);
            let p = point(&spec.pole, "pole")?;
            Box::new(move |x| g.eval(x, &p))
        }
        "tabulated" => {
            let t = spec
                .table
                .clone()
                .ok_or_else(|| Error::Domain("tabulated candidate needs a table".into()))?;
            Box::new(move |x| t.eval(x))
        }
        "resolvent-bump" => {
            return Err(Error::Unsupported(
                "resolvent-bump has no closed form; it is estimated pointwise".into(),
            ))
        }
        other => return Err(Error::Domain(format!("unknown catalog entry {other:?}"))),
    })
}

/// The bump whose resolvent defines `resolvent-bump`.
pub fn resolvent_bump(spec: &CandidateSpec, op: &OperatorSpec) -> Result<TestBump> {
    match &spec.bump {
        Some(b) => Ok(b.clone()),
        None => {
            let (c, r) = ball_of(&op.domain)?;
            Ok(TestBump::new(c, 0.5 * r))
        }
    }
}
