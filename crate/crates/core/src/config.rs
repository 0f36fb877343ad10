//! Declarative model configuration.
//!
//! A config is a flat list of `key = value` lines; blank lines and lines
//! starting with `#` are ignored. A single-family model:
//!
//! ```text
//! family = robust_linear
//! data.outcome = y
//! data.regressors = x
//! options.k = 1.345
//! ```
//!
//! A stacked model numbers its blocks from 1 and wires dependent blocks to an
//! earlier block with `inputs`:
//!
//! ```text
//! family = stack
//! stack.1.family = loglogistic3
//! stack.1.data.dose = conc
//! stack.1.data.response = rootl
//! stack.2.family = effective_concentration
//! stack.2.options.delta = 20
//! stack.2.inputs = 1
//! ```
//!
//! Top-level keys are `family`, `ci_level` (default 0.95), `init`
//! (comma-separated starting values) and `solver.method`, `solver.tol`,
//! `solver.max_iter`, `solver.damping`. Unknown or repeated keys are errors.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::data::{DataError, Dataset};
use crate::equations::{
    design_matrix, BlockEntry, BlockLayout, EffectiveConcentration, InverseOddsWeightedMeans,
    LinearRegression, LogLogistic, LogLogisticKind, LogisticRegression, Mean, RobustLocation,
    Stack, HUBER_K,
};
use crate::estimator::EstimatingFunction;
use crate::rootfind::{Method, SolverConfig};

pub const DEFAULT_CI_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "{key}: ")?;
        }
        f.write_str(&self.message)
    }
}

impl ConfigError {
    fn at(entry: &Entry, message: impl Into<String>) -> Self {
        ConfigError {
            line: Some(entry.line),
            key: Some(entry.key.clone()),
            message: message.into(),
        }
    }

    fn general(message: impl Into<String>) -> Self {
        ConfigError {
            line: None,
            key: None,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Mean,
    RobustLocation,
    Linear,
    RobustLinear,
    Logistic,
    LogLogistic3,
    LogLogistic4,
    EffectiveConcentration,
    InverseOddsWeightedMean,
}

impl Family {
    pub const ALL: [Family; 9] = [
        Family::Mean,
        Family::RobustLocation,
        Family::Linear,
        Family::RobustLinear,
        Family::Logistic,
        Family::LogLogistic3,
        Family::LogLogistic4,
        Family::EffectiveConcentration,
        Family::InverseOddsWeightedMean,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Family::Mean => "mean",
            Family::RobustLocation => "robust_location",
            Family::Linear => "linear",
            Family::RobustLinear => "robust_linear",
            Family::Logistic => "logistic",
            Family::LogLogistic3 => "loglogistic3",
            Family::LogLogistic4 => "loglogistic4",
            Family::EffectiveConcentration => "effective_concentration",
            Family::InverseOddsWeightedMean => "inverse_odds_weighted_mean",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.tag() == tag)
    }

    fn data_keys(self) -> &'static [&'static str] {
        match self {
            Family::Mean | Family::RobustLocation => &["outcome"],
            Family::Linear | Family::RobustLinear | Family::Logistic => {
                &["outcome", "regressors", "intercept"]
            }
            Family::LogLogistic3 | Family::LogLogistic4 => &["dose", "response"],
            Family::EffectiveConcentration => &[],
            Family::InverseOddsWeightedMean => &["sample", "biomarkers", "regressors", "intercept"],
        }
    }

    fn option_keys(self) -> &'static [&'static str] {
        match self {
            Family::RobustLocation | Family::RobustLinear => &["k"],
            Family::EffectiveConcentration => &["delta"],
            _ => &[],
        }
    }

    /// Family a dependent block must point at.
    fn upstream(self) -> Option<&'static [Family]> {
        match self {
            Family::EffectiveConcentration => Some(&[Family::LogLogistic3, Family::LogLogistic4]),
            Family::InverseOddsWeightedMean => Some(&[Family::Logistic]),
            _ => None,
        }
    }

    fn has_design(self) -> bool {
        matches!(
            self,
            Family::Linear | Family::RobustLinear | Family::Logistic | Family::InverseOddsWeightedMean
        )
    }
}

fn known_tags() -> String {
    let mut tags: Vec<&str> = Family::ALL.iter().map(|f| f.tag()).collect();
    tags.push("stack");
    tags.join(", ")
}

/// Dataset columns a block reads.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ColumnBinding {
    pub outcome: Option<String>,
    pub regressors: Vec<String>,
    pub intercept: Option<bool>,
    pub dose: Option<String>,
    pub response: Option<String>,
    pub sample: Option<String>,
    pub biomarkers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    pub family: Family,
    pub data: ColumnBinding,
    pub k: Option<f64>,
    pub delta: Option<f64>,
    /// Zero-based index of the block whose parameters this block reads.
    pub inputs: Option<usize>,
}

impl BlockSpec {
    /// Columns of the block's design matrix.
    fn design_columns(&self) -> usize {
        self.data.regressors.len() + usize::from(self.data.intercept == Some(true))
    }

    fn n_params(&self) -> usize {
        match self.family {
            Family::Mean | Family::RobustLocation | Family::EffectiveConcentration => 1,
            Family::Linear | Family::RobustLinear | Family::Logistic => self.design_columns(),
            Family::LogLogistic3 => 3,
            Family::LogLogistic4 => 4,
            Family::InverseOddsWeightedMean => self.data.biomarkers.len(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverOverrides {
    pub method: Option<Method>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub damping: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub blocks: Vec<BlockSpec>,
    /// Written as `family = stack`; a non-stacked spec has exactly one block.
    pub stacked: bool,
    pub ci_level: f64,
    pub init: Option<Vec<f64>>,
    pub solver: SolverOverrides,
}

#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    key: String,
    value: String,
}

fn lex(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut entries: Vec<Entry> = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(ConfigError {
                line: Some(line),
                key: None,
                message: format!("expected 'key = value', found '{trimmed}'"),
            });
        };
        let entry = Entry {
            line,
            key: key.trim().to_string(),
            value: value.trim().to_string(),
        };
        if entry.key.is_empty() {
            return Err(ConfigError::at(&entry, "empty key"));
        }
        if entry.value.is_empty() {
            return Err(ConfigError::at(&entry, "empty value"));
        }
        if let Some(first) = seen.insert(entry.key.clone(), line) {
            return Err(ConfigError::at(&entry, format!("duplicate key (first set on line {first})")));
        }
        entries.push(entry);
    }
    Ok(entries)
}

fn parse_f64(e: &Entry) -> Result<f64, ConfigError> {
    match e.value.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(ConfigError::at(e, format!("'{}' is not a finite number", e.value))),
    }
}

fn parse_bool(e: &Entry) -> Result<bool, ConfigError> {
    match e.value.as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ConfigError::at(e, format!("expected true or false, found '{}'", e.value))),
    }
}

fn parse_list(e: &Entry) -> Result<Vec<String>, ConfigError> {
    let items: Vec<String> = e.value.split(',').map(|s| s.trim().to_string()).collect();
    if items.iter().any(String::is_empty) {
        return Err(ConfigError::at(e, "empty entry in list"));
    }
    Ok(items)
}

/// Parses a config, filling documented defaults.
pub fn parse_config(text: &str) -> Result<ModelSpec, ConfigError> {
    let entries = lex(text)?;
    let mut family_entry = None;
    let mut ci_level = DEFAULT_CI_LEVEL;
    let mut init = None;
    let mut solver = SolverOverrides::default();
    let mut block_entries = Vec::new();
    let mut stack_entries: BTreeMap<usize, Vec<Entry>> = BTreeMap::new();

    for e in entries {
        match e.key.as_str() {
            "family" => family_entry = Some(e),
            "ci_level" => {
                ci_level = parse_f64(&e)?;
                if !(ci_level > 0.0 && ci_level < 1.0) {
                    return Err(ConfigError::at(&e, "ci_level must lie in (0, 1)"));
                }
            }
            "init" => {
                let values = e
                    .value
                    .split(',')
                    .map(|s| match s.trim().parse::<f64>() {
                        Ok(v) if v.is_finite() => Ok(v),
                        _ => Err(ConfigError::at(&e, format!("'{}' is not a finite number", s.trim()))),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                init = Some(values);
            }
            "solver.method" => {
                let m = e.value.parse::<Method>().map_err(|_| {
                    ConfigError::at(&e, format!("unknown method '{}'; expected newton or broyden", e.value))
                })?;
                solver.method = Some(m);
            }
            "solver.tol" => {
                let tol = parse_f64(&e)?;
                if tol <= 0.0 {
                    return Err(ConfigError::at(&e, "tol must be positive"));
                }
                solver.tol = Some(tol);
            }
            "solver.max_iter" => {
                let n = e
                    .value
                    .parse::<usize>()
                    .ok()
                    .filter(|n| *n > 0)
                    .ok_or_else(|| ConfigError::at(&e, "max_iter must be a positive integer"))?;
                solver.max_iter = Some(n);
            }
            "solver.damping" => solver.damping = Some(parse_bool(&e)?),
            key if key.starts_with("data.") || key.starts_with("options.") || key == "inputs" => {
                block_entries.push(e)
            }
            key if key.starts_with("stack.") => {
                let rest = &key["stack.".len()..];
                let (index, sub) = rest.split_once('.').unwrap_or((rest, ""));
                let index = index
                    .parse::<usize>()
                    .ok()
                    .filter(|i| *i >= 1 && !sub.is_empty())
                    .ok_or_else(|| ConfigError::at(&e, "expected stack.<n>.<key> with n starting at 1"))?;
                stack_entries.entry(index).or_default().push(Entry {
                    key: sub.to_string(),
                    ..e
                });
            }
            _ => return Err(ConfigError::at(&e, "unknown key")),
        }
    }

    let family_entry = family_entry.ok_or_else(|| ConfigError::general("missing required key 'family'"))?;
    let stacked = family_entry.value == "stack";
    let blocks = if stacked {
        if let Some(e) = block_entries.first() {
            return Err(ConfigError::at(e, "a stacked config sets block keys under stack.<n>."));
        }
        if stack_entries.is_empty() {
            return Err(ConfigError::at(&family_entry, "a stack needs at least one block"));
        }
        let mut blocks = Vec::new();
        for (expected, (index, entries)) in stack_entries.into_iter().enumerate() {
            if index != expected + 1 {
                return Err(ConfigError::general(format!(
                    "stack blocks must be numbered 1, 2, ... without gaps; block {} is missing",
                    expected + 1
                )));
            }
            let prefix = format!("stack.{index}.");
            let mut family = None;
            let mut rest = Vec::new();
            for e in entries {
                if e.key == "family" {
                    family = Some(e);
                } else {
                    rest.push(e);
                }
            }
            let family = family.ok_or_else(|| ConfigError {
                line: None,
                key: Some(format!("{prefix}family")),
                message: "missing family for stack block".into(),
            })?;
            blocks.push(parse_block(&prefix, &family, rest, &blocks, true)?);
        }
        blocks
    } else {
        if let Some((index, entries)) = stack_entries.iter().next() {
            let e = Entry {
                key: format!("stack.{index}.{}", entries[0].key),
                ..entries[0].clone()
            };
            return Err(ConfigError::at(&e, "stack.<n> keys require family = stack"));
        }
        vec![parse_block("", &family_entry, block_entries, &[], false)?]
    };

    let spec = ModelSpec {
        blocks,
        stacked,
        ci_level,
        init,
        solver,
    };
    if let Some(init) = &spec.init {
        let v = spec.n_params();
        if init.len() != v {
            return Err(ConfigError {
                line: None,
                key: Some("init".into()),
                message: format!("{} starting values given but the model has {v} parameters", init.len()),
            });
        }
    }
    Ok(spec)
}

fn parse_block(
    prefix: &str,
    family_entry: &Entry,
    entries: Vec<Entry>,
    earlier: &[BlockSpec],
    stacked: bool,
) -> Result<BlockSpec, ConfigError> {
    let family = Family::from_tag(&family_entry.value).ok_or_else(|| {
        ConfigError::at(
            family_entry,
            format!("unknown family '{}'; expected one of {}", family_entry.value, known_tags()),
        )
    })?;
    let full = |e: &Entry| Entry {
        key: format!("{prefix}{}", e.key),
        ..e.clone()
    };
    let mut data = ColumnBinding::default();
    let mut k = None;
    let mut delta = None;
    let mut inputs = None;

    for e in &entries {
        let fe = full(e);
        let invalid = || ConfigError::at(&fe, format!("not a valid key for family '{}'", family.tag()));
        if let Some(name) = e.key.strip_prefix("data.") {
            if !family.data_keys().contains(&name) {
                return Err(invalid());
            }
            match name {
                "outcome" => data.outcome = Some(e.value.clone()),
                "dose" => data.dose = Some(e.value.clone()),
                "response" => data.response = Some(e.value.clone()),
                "sample" => data.sample = Some(e.value.clone()),
                "regressors" => data.regressors = parse_list(&fe)?,
                "biomarkers" => data.biomarkers = parse_list(&fe)?,
                "intercept" => data.intercept = Some(parse_bool(&fe)?),
                _ => unreachable!(),
            }
        } else if let Some(name) = e.key.strip_prefix("options.") {
            if !family.option_keys().contains(&name) {
                return Err(invalid());
            }
            let v = parse_f64(&fe)?;
            match name {
                "k" => {
                    if v <= 0.0 {
                        return Err(ConfigError::at(&fe, "k must be positive"));
                    }
                    k = Some(v);
                }
                "delta" => {
                    if !(v > 0.0 && v < 100.0) {
                        return Err(ConfigError::at(&fe, "delta must lie in (0, 100)"));
                    }
                    delta = Some(v);
                }
                _ => unreachable!(),
            }
        } else if e.key == "inputs" {
            let Some(allowed) = family.upstream() else {
                return Err(invalid());
            };
            if !stacked {
                return Err(ConfigError::at(&fe, "inputs are only meaningful inside a stack"));
            }
            let j = e
                .value
                .parse::<usize>()
                .ok()
                .filter(|j| *j >= 1 && *j <= earlier.len())
                .ok_or_else(|| ConfigError::at(&fe, "inputs must name an earlier block by its number"))?;
            let upstream = &earlier[j - 1];
            if !allowed.contains(&upstream.family) {
                let names: Vec<&str> = allowed.iter().map(|f| f.tag()).collect();
                return Err(ConfigError::at(
                    &fe,
                    format!(
                        "block {j} is '{}' but '{}' reads a {} block",
                        upstream.family.tag(),
                        family.tag(),
                        names.join(" or ")
                    ),
                ));
            }
            inputs = Some(j - 1);
        } else {
            return Err(ConfigError::at(&fe, "unknown key"));
        }
    }

    let missing = |key: &str| ConfigError {
        line: Some(family_entry.line),
        key: Some(format!("{prefix}{key}")),
        message: format!("required for family '{}'", family.tag()),
    };
    match family {
        Family::Mean | Family::RobustLocation | Family::Linear | Family::RobustLinear | Family::Logistic => {
            if data.outcome.is_none() {
                return Err(missing("data.outcome"));
            }
        }
        Family::LogLogistic3 | Family::LogLogistic4 => {
            if data.dose.is_none() {
                return Err(missing("data.dose"));
            }
            if data.response.is_none() {
                return Err(missing("data.response"));
            }
        }
        Family::EffectiveConcentration => {
            if delta.is_none() {
                return Err(missing("options.delta"));
            }
        }
        Family::InverseOddsWeightedMean => {
            if data.sample.is_none() {
                return Err(missing("data.sample"));
            }
            if data.biomarkers.is_empty() {
                return Err(missing("data.biomarkers"));
            }
        }
    }
    if family.upstream().is_some() && inputs.is_none() {
        if !stacked {
            return Err(ConfigError::at(
                family_entry,
                format!("family '{}' reads another block and must be used inside a stack", family.tag()),
            ));
        }
        return Err(missing("inputs"));
    }
    if matches!(family, Family::RobustLocation | Family::RobustLinear) && k.is_none() {
        k = Some(HUBER_K);
    }
    if family == Family::InverseOddsWeightedMean && data.regressors.is_empty() && data.intercept.is_none() {
        // The weight model is the upstream logistic regression; reuse its design.
        let upstream = &earlier[inputs.expect("checked above")];
        data.regressors = upstream.data.regressors.clone();
        data.intercept = upstream.data.intercept;
    }
    if family.has_design() {
        data.intercept.get_or_insert(true);
        if data.regressors.is_empty() && data.intercept == Some(false) {
            return Err(ConfigError::at(family_entry, "the design has no columns"));
        }
    }
    let block = BlockSpec {
        family,
        data,
        k,
        delta,
        inputs,
    };
    if family == Family::InverseOddsWeightedMean {
        let upstream = &earlier[block.inputs.unwrap()];
        let (p_up, p) = (upstream.n_params(), block.design_columns());
        if p_up != p {
            return Err(ConfigError::at(
                family_entry,
                format!("weight design has {p} columns but block {} has {p_up} parameters", block.inputs.unwrap() + 1),
            ));
        }
    }
    Ok(block)
}

/// Failure while binding a spec to data.
#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] crate::error::Error),
}

impl ModelSpec {
    pub fn n_params(&self) -> usize {
        self.layout().n_params()
    }

    /// Parameter ranges implied by the spec, without touching data.
    pub fn layout(&self) -> BlockLayout {
        let mut blocks: Vec<BlockEntry> = Vec::new();
        let mut next = 0;
        for b in &self.blocks {
            let v = b.n_params();
            blocks.push(BlockEntry {
                tag: b.family.tag().to_string(),
                params: next..next + v,
                inputs: b.inputs.map(|j| blocks[j].params.clone()),
            });
            next += v;
        }
        BlockLayout { blocks }
    }

    /// Default solver settings, then `env_tol` (from `SANDWICH_SOLVER_TOL`),
    /// then the config's own overrides.
    pub fn solver_config(&self, env_tol: Option<f64>) -> SolverConfig {
        let mut cfg = SolverConfig::default();
        if let Some(tol) = env_tol {
            cfg.tol = tol;
        }
        let s = &self.solver;
        if let Some(m) = s.method {
            cfg.method = m;
        }
        if let Some(tol) = s.tol {
            cfg.tol = tol;
        }
        if let Some(n) = s.max_iter {
            cfg.max_iter = n;
        }
        if let Some(d) = s.damping {
            cfg.damping = d;
        }
        cfg
    }

    /// Binds every block to columns of `data`.
    pub fn build(&self, data: &Dataset) -> Result<Stack, BuildError> {
        let layout = self.layout();
        let n = data.n_rows();
        let mut stack = Stack::new();
        for (b, entry) in self.blocks.iter().zip(&layout.blocks) {
            let col = |name: &Option<String>| -> Result<Vec<f64>, DataError> {
                Ok(data.column(name.as_deref().expect("validated at parse"))?.to_vec())
            };
            let design = |d: &ColumnBinding| -> Result<(DMatrix<f64>, Vec<String>), BuildError> {
                let cols = d
                    .regressors
                    .iter()
                    .map(|r| data.column(r))
                    .collect::<Result<Vec<_>, _>>()?;
                let intercept = d.intercept == Some(true);
                let x = design_matrix(n, &cols, intercept)?;
                let mut names = Vec::new();
                if intercept {
                    names.push("intercept".to_string());
                }
                names.extend(d.regressors.iter().cloned());
                Ok((x, names))
            };
            let ef: Box<dyn EstimatingFunction> = match b.family {
                Family::Mean => Box::new(Mean::try_new(col(&b.data.outcome)?)?),
                Family::RobustLocation => {
                    Box::new(RobustLocation::new(col(&b.data.outcome)?, b.k.unwrap())?)
                }
                Family::Linear | Family::RobustLinear => {
                    let (x, names) = design(&b.data)?;
                    let y = col(&b.data.outcome)?;
                    let reg = if b.family == Family::Linear {
                        LinearRegression::new(x, y)?
                    } else {
                        LinearRegression::robust(x, y, b.k.unwrap())?
                    };
                    Box::new(reg.with_names(names))
                }
                Family::Logistic => {
                    let (x, names) = design(&b.data)?;
                    Box::new(LogisticRegression::new(x, col(&b.data.outcome)?)?.with_names(names))
                }
                Family::LogLogistic3 | Family::LogLogistic4 => {
                    let kind = if b.family == Family::LogLogistic3 {
                        LogLogisticKind::Three
                    } else {
                        LogLogisticKind::Four
                    };
                    Box::new(LogLogistic::new(col(&b.data.dose)?, col(&b.data.response)?, kind)?)
                }
                Family::EffectiveConcentration => {
                    let upstream = &self.blocks[b.inputs.unwrap()];
                    let kind = if upstream.family == Family::LogLogistic3 {
                        LogLogisticKind::Three
                    } else {
                        LogLogisticKind::Four
                    };
                    Box::new(EffectiveConcentration::new(b.delta.unwrap(), n, kind)?)
                }
                Family::InverseOddsWeightedMean => {
                    let (x, _) = design(&b.data)?;
                    let cols = b
                        .data
                        .biomarkers
                        .iter()
                        .map(|c| data.column(c))
                        .collect::<Result<Vec<_>, _>>()?;
                    let values = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
                    let sample = col(&b.data.sample)?;
                    let names = b.data.biomarkers.iter().map(|c| format!("mu_{c}")).collect();
                    Box::new(InverseOddsWeightedMeans::new(&values, &sample, x)?.with_names(names))
                }
            };
            stack = stack.push_boxed(ef, entry.inputs.clone())?;
        }
        Ok(stack)
    }

    /// Canonical text form; parsing it gives back an equal spec.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let family = if self.stacked { "stack" } else { self.blocks[0].family.tag() };
        writeln!(out, "family = {family}").unwrap();
        writeln!(out, "ci_level = {}", self.ci_level).unwrap();
        if let Some(init) = &self.init {
            let values: Vec<String> = init.iter().map(f64::to_string).collect();
            writeln!(out, "init = {}", values.join(", ")).unwrap();
        }
        let s = &self.solver;
        if let Some(m) = s.method {
            writeln!(out, "solver.method = {m}").unwrap();
        }
        if let Some(tol) = s.tol {
            writeln!(out, "solver.tol = {tol}").unwrap();
        }
        if let Some(n) = s.max_iter {
            writeln!(out, "solver.max_iter = {n}").unwrap();
        }
        if let Some(d) = s.damping {
            writeln!(out, "solver.damping = {d}").unwrap();
        }
        for (i, b) in self.blocks.iter().enumerate() {
            let prefix = if self.stacked {
                let p = format!("stack.{}.", i + 1);
                writeln!(out, "{p}family = {}", b.family.tag()).unwrap();
                p
            } else {
                String::new()
            };
            write_block(&mut out, &prefix, b);
        }
        out
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_config_string())
    }
}

fn write_block(out: &mut String, prefix: &str, b: &BlockSpec) {
    let d = &b.data;
    let mut put = |key: &str, value: String| writeln!(out, "{prefix}{key} = {value}").unwrap();
    for (key, value) in [
        ("data.outcome", &d.outcome),
        ("data.dose", &d.dose),
        ("data.response", &d.response),
        ("data.sample", &d.sample),
    ] {
        if let Some(v) = value {
            put(key, v.clone());
        }
    }
    if !d.biomarkers.is_empty() {
        put("data.biomarkers", d.biomarkers.join(", "));
    }
    if !d.regressors.is_empty() {
        put("data.regressors", d.regressors.join(", "));
    }
    if let Some(i) = d.intercept {
        put("data.intercept", i.to_string());
    }
    if let Some(k) = b.k {
        put("options.k", k.to_string());
    }
    if let Some(delta) = b.delta {
        put("options.delta", delta.to_string());
    }
    if let Some(j) = b.inputs {
        put("inputs", (j + 1).to_string());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let spec = parse_config("family = robust_linear\ndata.outcome = y\ndata.regressors = x\n").unwrap();
        assert!(!spec.stacked);
        assert_eq!(spec.ci_level, 0.95);
        let b = &spec.blocks[0];
        assert_eq!(b.family, Family::RobustLinear);
        assert_eq!(b.k, Some(HUBER_K));
        assert_eq!(b.data.intercept, Some(true));
        assert_eq!(b.data.regressors, ["x"]);
        assert_eq!(spec.n_params(), 2);
    }

    #[test]
    fn negative_k() {
        let err = parse_config("family = robust_linear\ndata.outcome = y\noptions.k = -1\n").unwrap_err();
        assert_eq!(err.message, "k must be positive");
        assert_eq!(err.line, Some(3));
        assert_eq!(err.key.as_deref(), Some("options.k"));
    }

    #[test]
    fn unknown_family_names_the_tag() {
        let err = parse_config("family = probit\ndata.outcome = y\n").unwrap_err();
        assert!(err.to_string().contains("'probit'"), "{err}");
    }

    #[test]
    fn diagnostics() {
        let cases = [
            ("data.outcome = y\n", "missing required key"),
            ("family = mean\ndata.outcome = y\ndata.outcome = z\n", "duplicate"),
            ("family = mean\ndata.outcome = y\nfoo = 1\n", "unknown key"),
            ("family = mean\ndata.outcome = y\noptions.k = 2\n", "not a valid key"),
            ("family = mean\n", "required"),
            ("family = mean\ndata.outcome y\n", "key = value"),
            ("family = mean\ndata.outcome =\n", "empty value"),
            ("family = mean\ndata.outcome = y\nci_level = 1.5\n", "ci_level"),
            ("family = mean\ndata.outcome = y\nsolver.method = bisect\n", "unknown method"),
            ("family = mean\ndata.outcome = y\nsolver.max_iter = 0\n", "max_iter"),
            ("family = mean\ndata.outcome = y\ninit = 1, 2\n", "starting values"),
            ("family = linear\ndata.outcome = y\ndata.intercept = false\n", "no columns"),
            ("family = effective_concentration\noptions.delta = 20\n", "inside a stack"),
            ("family = mean\ndata.outcome = y\nstack.1.family = mean\n", "family = stack"),
            ("family = stack\n", "at least one block"),
            ("family = stack\nstack.2.family = mean\nstack.2.data.outcome = y\n", "block 1 is missing"),
            (
                "family = stack\nstack.1.family = mean\nstack.1.data.outcome = y\n\
                 stack.2.family = effective_concentration\nstack.2.options.delta = 20\nstack.2.inputs = 1\n",
                "reads a loglogistic3 or loglogistic4 block",
            ),
            (
                "family = stack\nstack.1.family = loglogistic3\nstack.1.data.dose = d\nstack.1.data.response = r\n\
                 stack.2.family = effective_concentration\nstack.2.options.delta = 100\nstack.2.inputs = 1\n",
                "delta must lie",
            ),
            (
                "family = stack\nstack.1.family = loglogistic3\nstack.1.data.dose = d\nstack.1.data.response = r\n\
                 stack.2.family = effective_concentration\nstack.2.options.delta = 20\nstack.2.inputs = 2\n",
                "earlier block",
            ),
        ];
        for (text, needle) in cases {
            let err = parse_config(text).expect_err(text);
            assert!(err.to_string().contains(needle), "{text:?} gave {err}");
        }
    }

    const STANDARDIZE: &str = "\
# nuisance model first
family = stack
stack.1.family = logistic
stack.1.data.outcome = s
stack.1.data.regressors = drug
stack.2.family = inverse_odds_weighted_mean
stack.2.data.sample = s
stack.2.data.biomarkers = a, b
stack.2.inputs = 1
";

    #[test]
    fn stacked_layout_and_inheritance() {
        let spec = parse_config(STANDARDIZE).unwrap();
        let layout = spec.layout();
        layout.validate().unwrap();
        assert_eq!(layout.blocks[0].params, 0..2);
        assert_eq!(layout.blocks[1].params, 2..4);
        assert_eq!(layout.blocks[1].inputs, Some(0..2));
        assert_eq!(spec.blocks[1].data.regressors, ["drug"]);
        assert_eq!(spec.blocks[1].data.intercept, Some(true));
    }

    #[test]
    fn serialization_is_a_fixed_point() {
        let spec = parse_config(STANDARDIZE).unwrap();
        let text = spec.to_config_string();
        let again = parse_config(&text).unwrap();
        assert_eq!(again, spec);
        assert_eq!(again.to_config_string(), text);
    }

    #[test]
    fn solver_precedence() {
        let spec = parse_config("family = mean\ndata.outcome = y\nsolver.tol = 1e-6\n").unwrap();
        assert_eq!(spec.solver_config(Some(1e-4)).tol, 1e-6);
        let spec = parse_config("family = mean\ndata.outcome = y\n").unwrap();
        assert_eq!(spec.solver_config(Some(1e-4)).tol, 1e-4);
        assert_eq!(spec.solver_config(None), SolverConfig::default());
    }

    #[test]
    fn build_matches_layout() {
        let data = Dataset::from_csv_str(
            "s,drug,a,b\n1,1,2.0,3.0\n1,0,1.5,2.0\n1,1,2.5,1.0\n0,0,9,9\n0,1,9,9\n0,0,9,9\n",
        )
        .unwrap();
        let spec = parse_config(STANDARDIZE).unwrap();
        let stack = spec.build(&data).unwrap();
        assert_eq!(stack.layout(), spec.layout());
        assert_eq!(stack.param_names(), ["intercept", "drug", "mu_a", "mu_b"]);

        let spec = parse_config("family = mean\ndata.outcome = missing\n").unwrap();
        assert!(matches!(spec.build(&data), Err(BuildError::Data(DataError::UnknownColumn(_)))));
    }
}
