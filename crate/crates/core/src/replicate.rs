//! The three worked examples: robust regression with an outlier, a
//! dose-response curve with an effective concentration, and standardized
//! biomarker means.
//!
//! Each example produces a set of named text files (CSV plot data and a JSON
//! results document). Nothing in them depends on the clock or on hash-map
//! iteration order, so a given seed always yields the same bytes.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::Serialize;

use crate::config::{parse_config, BuildError, ModelSpec};
use crate::data::Dataset;
use crate::datasets::ryegrass;
use crate::equations::{
    design_matrix, loglogistic_mean, FixedInputs, InverseOddsWeightedMeans, Stack,
};
use crate::error::Error;
use crate::report::{fit_document, fit_spec, FitDocument, FitOutcome, Provenance};
use crate::rootfind::SolverConfig;

pub const DEFAULT_SEED: u64 = 2022;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example {
    RobustLine,
    DoseResponse,
    Standardize,
}

impl Example {
    pub const ALL: [Example; 3] = [Example::RobustLine, Example::DoseResponse, Example::Standardize];

    pub fn as_str(self) -> &'static str {
        match self {
            Example::RobustLine => "robust-line",
            Example::DoseResponse => "dose-response",
            Example::Standardize => "standardize",
        }
    }
}

impl fmt::Display for Example {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Example {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Example::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| format!("unknown example '{s}'; expected robust-line, dose-response or standardize"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReplicateError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("{fit}: {source}")]
    Fit { fit: String, source: Error },
}

/// Files produced by one example, in write order.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub example: Example,
    pub files: Vec<(String, String)>,
    pub summary: String,
}

impl Replication {
    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }

    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, contents) in &self.files {
            std::fs::write(dir.join(name), contents)?;
        }
        Ok(())
    }
}

pub fn run(example: Example, seed: Option<u64>) -> Result<Replication, ReplicateError> {
    let seed = seed.unwrap_or(DEFAULT_SEED);
    match example {
        Example::RobustLine => robust_line(seed).map(|r| r.replication()),
        Example::DoseResponse => dose_response().map(|r| r.replication()),
        Example::Standardize => standardize(seed).map(|r| r.replication()),
    }
}

fn spec(text: &str) -> ModelSpec {
    parse_config(text).expect("built-in config parses")
}

fn checked(fit: &str, out: FitOutcome) -> Result<FitDocument, ReplicateError> {
    match out.error {
        None => Ok(out.document),
        Some(source) => Err(ReplicateError::Fit {
            fit: fit.to_string(),
            source,
        }),
    }
}

fn fit_named(
    name: &str,
    spec: &ModelSpec,
    data: &Dataset,
    seed: Option<u64>,
) -> Result<FitDocument, ReplicateError> {
    let cfg = spec.solver_config(None);
    let out = fit_spec(spec, data, &cfg, Provenance::for_spec(spec, data, seed))?;
    checked(name, out)
}

fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("results serialize");
    s.push('\n');
    s
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

/// Interval rows `label,parameter,estimate,std_error,ci_lower,ci_upper`.
fn interval_rows(out: &mut String, label: &str, doc: &FitDocument) {
    for p in &doc.parameters {
        let f = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        writeln!(
            out,
            "{label},{},{},{},{},{}",
            p.name,
            p.estimate,
            f(p.std_error),
            f(p.ci_lower),
            f(p.ci_upper)
        )
        .unwrap();
    }
}

const INTERVAL_HEADER: &str = "fit,parameter,estimate,std_error,ci_lower,ci_upper\n";

// ---------------------------------------------------------------------------
// Robust regression with one outlier

/// Simulation settings for the robust-line example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineSimulation {
    pub n: usize,
    pub intercept: f64,
    pub slope: f64,
    pub noise_sd: f64,
    pub x_min: f64,
    pub x_max: f64,
    /// Added to the outcome of the observation with the smallest regressor.
    pub outlier_shift: f64,
    pub k: f64,
}

pub const LINE_SIMULATION: LineSimulation = LineSimulation {
    n: 15,
    intercept: 1.0,
    slope: 0.5,
    noise_sd: 0.5,
    x_min: 0.0,
    x_max: 10.0,
    outlier_shift: 3.0,
    k: 1.345,
};

/// Columns `x`, `y` (clean) and `y_outlier`.
pub fn simulate_line(sim: &LineSimulation, seed: u64) -> (Dataset, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ux = Uniform::new(sim.x_min, sim.x_max).expect("valid range");
    let noise = Normal::new(0.0, sim.noise_sd).expect("valid sd");
    let x: Vec<f64> = (0..sim.n).map(|_| ux.sample(&mut rng)).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|xi| sim.intercept + sim.slope * xi + noise.sample(&mut rng))
        .collect();
    let outlier = (0..sim.n)
        .min_by(|a, b| x[*a].total_cmp(&x[*b]))
        .expect("n > 0");
    let mut y_outlier = y.clone();
    y_outlier[outlier] += sim.outlier_shift;
    let data = Dataset::new(
        vec!["x".into(), "y".into(), "y_outlier".into()],
        vec![x, y, y_outlier],
    )
    .expect("simulated data are finite");
    (data, outlier)
}

#[derive(Debug, Clone)]
pub struct RobustLine {
    pub seed: u64,
    pub data: Dataset,
    pub outlier: usize,
    pub reference: FitDocument,
    pub ols_outlier: FitDocument,
    pub robust: FitDocument,
}

#[derive(Serialize)]
struct RobustLineResults<'a> {
    example: &'static str,
    seed: u64,
    simulation: LineSimulation,
    outlier_row: usize,
    slopes: Slopes,
    ordering_holds: bool,
    reference: &'a FitDocument,
    ols_outlier: &'a FitDocument,
    robust: &'a FitDocument,
}

#[derive(Serialize)]
struct Slopes {
    reference: f64,
    ols_outlier: f64,
    robust: f64,
}

impl RobustLine {
    fn slope(doc: &FitDocument) -> f64 {
        doc.parameter("x").expect("slope present").estimate
    }

    pub fn slopes(&self) -> (f64, f64, f64) {
        (Self::slope(&self.reference), Self::slope(&self.ols_outlier), Self::slope(&self.robust))
    }

    /// `|robust − reference| < |OLS with outlier − reference|`.
    pub fn ordering_holds(&self) -> bool {
        let (r, o, h) = self.slopes();
        (h - r).abs() < (o - r).abs()
    }

    pub fn replication(&self) -> Replication {
        let x = self.data.column("x").unwrap();
        let y = self.data.column("y").unwrap();
        let yo = self.data.column("y_outlier").unwrap();
        let points = csv_table(
            &["x", "y", "y_outlier", "is_outlier"],
            (0..x.len()).map(|i| vec![x[i], y[i], yo[i], f64::from(u8::from(i == self.outlier))]),
        );
        let line = |doc: &FitDocument, xv: f64| {
            let p = doc.estimates();
            p[0] + p[1] * xv
        };
        let sim = LINE_SIMULATION;
        let lines = csv_table(
            &["x", "reference", "ols_outlier", "robust"],
            linspace(sim.x_min, sim.x_max, 51).map(|xv| {
                vec![xv, line(&self.reference, xv), line(&self.ols_outlier, xv), line(&self.robust, xv)]
            }),
        );
        let (r, o, h) = self.slopes();
        let results = json(&RobustLineResults {
            example: "robust-line",
            seed: self.seed,
            simulation: sim,
            outlier_row: self.outlier,
            slopes: Slopes {
                reference: r,
                ols_outlier: o,
                robust: h,
            },
            ordering_holds: self.ordering_holds(),
            reference: &self.reference,
            ols_outlier: &self.ols_outlier,
            robust: &self.robust,
        });
        let mut table = INTERVAL_HEADER.to_string();
        interval_rows(&mut table, "reference", &self.reference);
        interval_rows(&mut table, "ols_outlier", &self.ols_outlier);
        interval_rows(&mut table, "robust", &self.robust);
        let summary = format!(
            "slope: reference {r:.4}, OLS with outlier {o:.4}, robust (k = {}) {h:.4}\n\
             |robust - reference| = {:.4} < |OLS - reference| = {:.4}: {}\n",
            sim.k,
            (h - r).abs(),
            (o - r).abs(),
            self.ordering_holds()
        );
        Replication {
            example: Example::RobustLine,
            files: vec![
                ("data.csv".into(), self.data.to_csv_string()),
                ("points.csv".into(), points),
                ("lines.csv".into(), lines),
                ("intervals.csv".into(), table),
                ("results.json".into(), results),
            ],
            summary,
        }
    }
}

pub fn robust_line(seed: u64) -> Result<RobustLine, ReplicateError> {
    let sim = LINE_SIMULATION;
    let (data, outlier) = simulate_line(&sim, seed);
    let reference = spec("family = linear\ndata.outcome = y\ndata.regressors = x\n");
    let ols = spec("family = linear\ndata.outcome = y_outlier\ndata.regressors = x\n");
    let robust = spec(&format!(
        "family = robust_linear\ndata.outcome = y_outlier\ndata.regressors = x\noptions.k = {}\n",
        sim.k
    ));
    Ok(RobustLine {
        seed,
        outlier,
        reference: fit_named("reference", &reference, &data, Some(seed))?,
        ols_outlier: fit_named("ols_outlier", &ols, &data, Some(seed))?,
        robust: fit_named("robust", &robust, &data, Some(seed))?,
        data,
    })
}

// ---------------------------------------------------------------------------
// Dose-response curve and EC20

pub const DOSE_RESPONSE_CONFIG: &str = include_str!("../data/ryegrass_ec20.conf");

#[derive(Debug, Clone)]
pub struct DoseResponse {
    pub data: Dataset,
    pub spec: ModelSpec,
    pub fit: FitDocument,
}

#[derive(Serialize)]
struct DoseResponseResults<'a> {
    example: &'static str,
    seed: Option<u64>,
    fit: &'a FitDocument,
}

impl DoseResponse {
    pub fn replication(&self) -> Replication {
        let conc = self.data.column("conc").unwrap();
        let rootl = self.data.column("rootl").unwrap();
        let points = csv_table(&["conc", "rootl"], (0..conc.len()).map(|i| vec![conc[i], rootl[i]]));
        let gamma = &self.fit.estimates()[..3];
        // Log-spaced grid spanning the positive doses, plus the control.
        let lo = conc.iter().copied().filter(|c| *c > 0.0).fold(f64::INFINITY, f64::min) / 2.0;
        let hi = conc.iter().copied().fold(0.0, f64::max) * 2.0;
        let grid = std::iter::once(0.0).chain(linspace(lo.ln(), hi.ln(), 200).map(f64::exp));
        let curve = csv_table(
            &["conc", "fitted"],
            grid.map(|d| vec![d, loglogistic_mean(d, gamma).expect("fitted curve is defined")]),
        );
        let mut table = INTERVAL_HEADER.to_string();
        interval_rows(&mut table, "loglogistic3+ec20", &self.fit);
        let ec = self.fit.parameter("ec20").expect("ec20 present");
        let summary = format!(
            "EC20 = {:.2} ({:.2}, {:.2})\n",
            ec.estimate,
            ec.ci_lower.unwrap_or(f64::NAN),
            ec.ci_upper.unwrap_or(f64::NAN)
        );
        let results = json(&DoseResponseResults {
            example: "dose-response",
            seed: None,
            fit: &self.fit,
        });
        Replication {
            example: Example::DoseResponse,
            files: vec![
                ("data.csv".into(), self.data.to_csv_string()),
                ("model.conf".into(), self.spec.to_config_string()),
                ("points.csv".into(), points),
                ("curve.csv".into(), curve),
                ("intervals.csv".into(), table),
                ("results.json".into(), results),
            ],
            summary,
        }
    }
}

pub fn dose_response() -> Result<DoseResponse, ReplicateError> {
    let data = ryegrass();
    let spec = spec(DOSE_RESPONSE_CONFIG);
    let fit = fit_named("dose-response", &spec, &data, None)?;
    Ok(DoseResponse { data, spec, fit })
}

// ---------------------------------------------------------------------------
// Standardized means of log biomarkers

/// One synthetic biomarker: `ln B = intercept + drug_effect · drug + sd · z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Biomarker {
    pub name: &'static str,
    pub intercept: f64,
    pub drug_effect: f64,
    pub sd: f64,
}

/// Two-source design for the standardization example: the analysis sample
/// (`s = 1`) over-represents drug users relative to the target population
/// (`s = 0`). Counts are fixed; only assignment order and biomarker values
/// are random.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StandardizeDesign {
    pub sample_n: usize,
    pub sample_users: usize,
    pub target_n: usize,
    pub target_users: usize,
    pub biomarkers: [Biomarker; 3],
}

pub const STANDARDIZE_DESIGN: StandardizeDesign = StandardizeDesign {
    sample_n: 57,
    sample_users: 40,
    target_n: 500,
    target_users: 40,
    biomarkers: [
        Biomarker {
            name: "sil2r",
            intercept: 7.0,
            drug_effect: 0.5,
            sd: 0.6,
        },
        Biomarker {
            name: "il12",
            intercept: 5.0,
            drug_effect: 0.4,
            sd: 0.8,
        },
        Biomarker {
            name: "il6",
            intercept: 1.0,
            drug_effect: 0.2,
            sd: 0.7,
        },
    ],
};

/// Columns `s`, `drug` and one column per biomarker (untransformed).
pub fn simulate_standardize(design: &StandardizeDesign, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let group = |n: usize, users: usize, rng: &mut ChaCha8Rng| {
        let mut drug: Vec<f64> = (0..n).map(|i| f64::from(u8::from(i < users))).collect();
        drug.shuffle(rng);
        drug
    };
    let mut drug = group(design.sample_n, design.sample_users, &mut rng);
    drug.extend(group(design.target_n, design.target_users, &mut rng));
    let n = drug.len();
    let s: Vec<f64> = (0..n).map(|i| f64::from(u8::from(i < design.sample_n))).collect();
    let mut names = vec!["s".to_string(), "drug".to_string()];
    let mut columns = vec![s, drug.clone()];
    for b in &design.biomarkers {
        let z = Normal::new(0.0, b.sd).expect("valid sd");
        let values = drug
            .iter()
            .map(|d| (b.intercept + b.drug_effect * d + z.sample(&mut rng)).exp())
            .collect();
        names.push(b.name.to_string());
        columns.push(values);
    }
    Dataset::new(names, columns).expect("simulated data are finite")
}

pub fn standardize_config(design: &StandardizeDesign) -> String {
    let names: Vec<&str> = design.biomarkers.iter().map(|b| b.name).collect();
    format!(
        "family = stack\n\
         stack.1.family = logistic\n\
         stack.1.data.outcome = s\n\
         stack.1.data.regressors = drug\n\
         stack.2.family = inverse_odds_weighted_mean\n\
         stack.2.data.sample = s\n\
         stack.2.data.biomarkers = {}\n\
         stack.2.inputs = 1\n",
        names.join(", ")
    )
}

#[derive(Debug, Clone)]
pub struct Standardize {
    pub seed: u64,
    pub data: Dataset,
    pub spec: ModelSpec,
    /// Logistic weight model and weighted means, one sandwich.
    pub stacked: FitDocument,
    /// Weighted means with the weight model frozen at its estimate.
    pub fixed_weights: FitDocument,
    /// Unweighted means over the sample.
    pub naive: FitDocument,
}

#[derive(Serialize)]
struct StandardizeResults<'a> {
    example: &'static str,
    seed: u64,
    design: StandardizeDesign,
    comparison: Vec<ComparisonRow>,
    stacked: &'a FitDocument,
    fixed_weights: &'a FitDocument,
    naive: &'a FitDocument,
}

#[derive(Serialize)]
struct ComparisonRow {
    biomarker: String,
    naive: f64,
    standardized: f64,
    se_stacked: Option<f64>,
    se_fixed_weights: Option<f64>,
}

impl Standardize {
    /// Number of weight-model parameters at the front of `stacked`.
    pub fn n_beta(&self) -> usize {
        self.stacked.layout.blocks[0].params.len()
    }

    pub fn replication(&self) -> Replication {
        let p = self.n_beta();
        let comparison: Vec<ComparisonRow> = self
            .naive
            .parameters
            .iter()
            .enumerate()
            .map(|(m, naive)| ComparisonRow {
                biomarker: naive.name.trim_start_matches("mu_").to_string(),
                naive: naive.estimate,
                standardized: self.stacked.parameters[p + m].estimate,
                se_stacked: self.stacked.parameters[p + m].std_error,
                se_fixed_weights: self.fixed_weights.parameters[m].std_error,
            })
            .collect();
        let mut table = INTERVAL_HEADER.to_string();
        interval_rows(&mut table, "naive", &self.naive);
        interval_rows(&mut table, "standardized", &self.stacked);
        interval_rows(&mut table, "standardized_fixed_weights", &self.fixed_weights);
        let mut summary = format!(
            "{:<10} {:>9} {:>13} {:>12} {:>18}\n",
            "biomarker", "naive", "standardized", "SE(stacked)", "SE(fixed weights)"
        );
        for r in &comparison {
            writeln!(
                summary,
                "{:<10} {:>9.4} {:>13.4} {:>12.5} {:>18.5}",
                r.biomarker,
                r.naive,
                r.standardized,
                r.se_stacked.unwrap_or(f64::NAN),
                r.se_fixed_weights.unwrap_or(f64::NAN)
            )
            .unwrap();
        }
        let results = json(&StandardizeResults {
            example: "standardize",
            seed: self.seed,
            design: STANDARDIZE_DESIGN,
            comparison,
            stacked: &self.stacked,
            fixed_weights: &self.fixed_weights,
            naive: &self.naive,
        });
        Replication {
            example: Example::Standardize,
            files: vec![
                ("data.csv".into(), self.data.to_csv_string()),
                ("model.conf".into(), self.spec.to_config_string()),
                ("intervals.csv".into(), table),
                ("results.json".into(), results),
            ],
            summary,
        }
    }
}

/// Weighted-means block of the standardization model with `β` pinned.
fn pinned_means(
    data: &Dataset,
    design: &StandardizeDesign,
    beta: Vec<f64>,
) -> Result<FixedInputs<InverseOddsWeightedMeans>, Error> {
    let n = data.n_rows();
    let cols: Vec<&[f64]> = design
        .biomarkers
        .iter()
        .map(|b| data.column(b.name).expect("simulated column"))
        .collect();
    let values = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    let x = design_matrix(n, &[data.column("drug").expect("simulated column")], true)?;
    let names = design.biomarkers.iter().map(|b| format!("mu_{}", b.name)).collect();
    let ef = InverseOddsWeightedMeans::new(&values, data.column("s").expect("simulated column"), x)?
        .with_names(names);
    FixedInputs::new(ef, beta)
}

pub fn standardize(seed: u64) -> Result<Standardize, ReplicateError> {
    let design = STANDARDIZE_DESIGN;
    let data = simulate_standardize(&design, seed);
    let spec = spec(&standardize_config(&design));
    let stacked = fit_named("stacked", &spec, &data, Some(seed))?;

    let p = stacked.layout.blocks[0].params.len();
    let beta_hat = stacked.estimates()[..p].to_vec();
    let pinned = |label: &str, beta: Vec<f64>| -> Result<FitDocument, ReplicateError> {
        let ef = pinned_means(&data, &design, beta).map_err(|source| ReplicateError::Fit {
            fit: label.to_string(),
            source,
        })?;
        let stack = Stack::new().push(ef).map_err(|source| ReplicateError::Fit {
            fit: label.to_string(),
            source,
        })?;
        // Not described by a config, so only the data are hashed.
        let provenance = Provenance {
            config_sha256: None,
            ..Provenance::for_spec(&spec, &data, Some(seed))
        };
        checked(
            label,
            fit_document(&stack, stack.layout(), None, &SolverConfig::default(), spec.ci_level, provenance),
        )
    };
    let fixed_weights = pinned("fixed_weights", beta_hat)?;
    // Zero log-odds gives unit weights: the plain sample mean of the logs.
    let naive = pinned("naive", vec![0.0; p])?;
    Ok(Standardize {
        seed,
        data,
        spec,
        stacked,
        fixed_weights,
        naive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_tags() {
        for e in Example::ALL {
            assert_eq!(e.as_str().parse::<Example>().unwrap(), e);
        }
        assert!("no-such-example".parse::<Example>().is_err());
    }

    #[test]
    fn simulated_line_has_outlier_at_smallest_x() {
        let (data, outlier) = simulate_line(&LINE_SIMULATION, 7);
        let x = data.column("x").unwrap();
        let y = data.column("y").unwrap();
        let yo = data.column("y_outlier").unwrap();
        assert_eq!(x.len(), 15);
        for i in 0..15 {
            assert!(x[outlier] <= x[i]);
            let shift = if i == outlier { 3.0 } else { 0.0 };
            assert_eq!(yo[i], y[i] + shift);
        }
    }

    #[test]
    fn standardize_design_counts() {
        let d = simulate_standardize(&STANDARDIZE_DESIGN, 1);
        let s = d.column("s").unwrap();
        let drug = d.column("drug").unwrap();
        let count = |sv: f64| (0..s.len()).filter(|i| s[*i] == sv && drug[*i] == 1.0).count();
        assert_eq!(s.iter().filter(|v| **v == 1.0).count(), 57);
        assert_eq!(count(1.0), 40);
        assert_eq!(count(0.0), 40);
        assert_eq!(d.n_rows(), 557);
    }
}
