//! Result documents and their text rendering.
//!
//! A [`FitDocument`] is what `sandwich fit` writes as JSON. The summary table
//! is formatted from the document's numbers only, so the two never disagree
//! beyond display rounding.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::{BuildError, ModelSpec};
use crate::data::{sha256_hex, Dataset};
use crate::equations::BlockLayout;
use crate::error::Error;
use crate::estimator::{estimate, EstimatingFunction};
use crate::rootfind::{SolveReport, SolverConfig};

pub const FORMAT: &str = "sandwich-fit/1";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixDoc {
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixDoc {
    fn from(m: &DMatrix<f64>) -> Self {
        MatrixDoc {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(),
        }
    }
}

impl MatrixDoc {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Provenance {
    pub config_sha256: Option<String>,
    pub data_sha256: Option<String>,
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn for_spec(spec: &ModelSpec, data: &Dataset, seed: Option<u64>) -> Self {
        Provenance {
            config_sha256: Some(sha256_hex(spec.to_config_string().as_bytes())),
            data_sha256: Some(sha256_hex(data.to_csv_string().as_bytes())),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterRow {
    /// 1-based block number.
    pub block: usize,
    pub name: String,
    pub estimate: f64,
    pub std_error: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverDoc {
    pub method: String,
    pub tol: f64,
    pub max_iter: usize,
    pub damping: bool,
    pub converged: bool,
    pub iterations: usize,
    pub residual_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitDocument {
    pub format: &'static str,
    pub tool_version: &'static str,
    pub provenance: Provenance,
    /// Canonical config text, when the fit came from a config.
    pub model: Option<String>,
    pub n_obs: usize,
    pub n_params: usize,
    pub ci_level: f64,
    pub solver: SolverDoc,
    pub error: Option<String>,
    pub layout: BlockLayout,
    pub parameters: Vec<ParameterRow>,
    pub bread: Option<MatrixDoc>,
    pub filling: Option<MatrixDoc>,
    pub asymptotic_variance: Option<MatrixDoc>,
    pub covariance: Option<MatrixDoc>,
}

impl FitDocument {
    pub fn converged(&self) -> bool {
        self.solver.converged && self.error.is_none()
    }

    pub fn parameter(&self, name: &str) -> Option<&ParameterRow> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn estimates(&self) -> Vec<f64> {
        self.parameters.iter().map(|p| p.estimate).collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("document serializes");
        s.push('\n');
        s
    }
}

/// A document plus the error that stopped estimation, if any.
#[derive(Debug)]
pub struct FitOutcome {
    pub document: FitDocument,
    pub error: Option<Error>,
}

/// Runs the estimator and packages everything it reports.
///
/// On failure the document still carries the last iterate (or the starting
/// values), `converged = false`, and no variance matrices.
pub fn fit_document(
    ef: &dyn EstimatingFunction,
    layout: BlockLayout,
    init: Option<&[f64]>,
    cfg: &SolverConfig,
    ci_level: f64,
    provenance: Provenance,
) -> FitOutcome {
    let init = init.map_or_else(|| ef.default_init(&[]), <[f64]>::to_vec);
    let names = ef.param_names();
    let block_of = |j: usize| {
        layout
            .blocks
            .iter()
            .position(|b| b.params.contains(&j))
            .map_or(1, |i| i + 1)
    };
    let solver_doc = |report: Option<&SolveReport>| SolverDoc {
        method: cfg.method.to_string(),
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        damping: cfg.damping,
        converged: report.is_some_and(|r| r.converged),
        iterations: report.map_or(0, |r| r.iterations),
        residual_norm: report.map(|r| r.residual_norm),
    };
    let mut doc = FitDocument {
        format: FORMAT,
        tool_version: env!("CARGO_PKG_VERSION"),
        provenance,
        model: None,
        n_obs: ef.n_obs(),
        n_params: ef.n_params(),
        ci_level,
        solver: solver_doc(None),
        error: None,
        layout: layout.clone(),
        parameters: Vec::new(),
        bread: None,
        filling: None,
        asymptotic_variance: None,
        covariance: None,
    };

    match estimate(ef, &init, cfg) {
        Ok(fit) => {
            let se = fit.std_errors();
            let ci = fit.confidence_intervals(ci_level).ok();
            doc.parameters = (0..fit.theta_hat.len())
                .map(|j| ParameterRow {
                    block: block_of(j),
                    name: names[j].clone(),
                    estimate: fit.theta_hat[j],
                    std_error: Some(se[j]),
                    ci_lower: ci.as_ref().map(|c| c[j].0),
                    ci_upper: ci.as_ref().map(|c| c[j].1),
                })
                .collect();
            doc.solver = solver_doc(Some(&fit.report));
            doc.bread = Some((&fit.bread).into());
            doc.filling = Some((&fit.filling).into());
            doc.asymptotic_variance = Some((&fit.asymptotic_variance).into());
            doc.covariance = Some((&fit.covariance).into());
            FitOutcome {
                document: doc,
                error: None,
            }
        }
        Err(e) => {
            let (theta, report) = match &e {
                Error::NoConvergence { report } => (report.root.clone(), Some(report)),
                _ => (init.clone(), None),
            };
            doc.parameters = theta
                .iter()
                .enumerate()
                .map(|(j, t)| ParameterRow {
                    block: block_of(j),
                    name: names.get(j).cloned().unwrap_or_else(|| format!("theta{j}")),
                    estimate: *t,
                    std_error: None,
                    ci_lower: None,
                    ci_upper: None,
                })
                .collect();
            doc.solver = solver_doc(report);
            doc.solver.converged = false;
            doc.error = Some(e.to_string());
            FitOutcome {
                document: doc,
                error: Some(e),
            }
        }
    }
}

/// Builds `spec` on `data` and fits it.
pub fn fit_spec(
    spec: &ModelSpec,
    data: &Dataset,
    cfg: &SolverConfig,
    provenance: Provenance,
) -> Result<FitOutcome, BuildError> {
    let stack = spec.build(data)?;
    let mut out = fit_document(
        &stack,
        stack.layout(),
        spec.init.as_deref(),
        cfg,
        spec.ci_level,
        provenance,
    );
    out.document.model = Some(spec.to_config_string());
    Ok(out)
}

/// Aligned plain-text table of a document with `digits` decimals.
///
/// The last column reads `estimate (lower, upper)`.
pub fn render_summary(doc: &FitDocument, digits: usize) -> String {
    let num = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.digits$}"));
    let level = (doc.ci_level * 1e6).round() / 1e4;
    let header = [
        "block".to_string(),
        "parameter".to_string(),
        "std.error".to_string(),
        format!("estimate ({level}% CI)"),
    ];
    let rows: Vec<[String; 4]> = doc
        .parameters
        .iter()
        .map(|p| {
            let ci = match (p.ci_lower, p.ci_upper) {
                (Some(l), Some(u)) => format!(" ({}, {})", num(Some(l)), num(Some(u))),
                _ => String::new(),
            };
            [
                p.block.to_string(),
                p.name.clone(),
                num(p.std_error),
                format!("{}{ci}", num(Some(p.estimate))),
            ]
        })
        .collect();
    let mut width = header.clone().map(|h| h.len());
    for r in &rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[String; 4]| {
        let s = format!(
            "{:<w0$}  {:<w1$}  {:>w2$}  {}",
            cells[0],
            cells[1],
            cells[2],
            cells[3],
            w0 = width[0],
            w1 = width[1],
            w2 = width[2]
        );
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(&header);
    for r in &rows {
        line(r);
    }
    let s = &doc.solver;
    write!(
        out,
        "n = {}, {} iterations ({}), residual {}",
        doc.n_obs,
        s.iterations,
        s.method,
        s.residual_norm.map_or_else(|| "-".into(), |r| format!("{r:.3e}"))
    )
    .unwrap();
    if !doc.converged() {
        out.push_str(", NOT CONVERGED");
        if let Some(e) = &doc.error {
            write!(out, ": {e}").unwrap();
        }
    }
    out.push('\n');
    out
}
