use std::ops::Range;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::EstimatingFunction;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockEntry {
    pub tag: String,
    /// Rows of the stacked system and entries of `θ` owned by this block.
    pub params: Range<usize>,
    /// Entries of `θ` read from earlier blocks, if any.
    pub inputs: Option<Range<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BlockLayout {
    pub blocks: Vec<BlockEntry>,
}

impl BlockLayout {
    pub fn n_params(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.params.end)
    }

    /// Parameter ranges must be contiguous, disjoint and cover `0..v`, and
    /// inputs may only point at parameters of earlier blocks.
    pub fn validate(&self) -> Result<()> {
        let mut next = 0;
        for (i, b) in self.blocks.iter().enumerate() {
            if b.params.start != next || b.params.end < b.params.start {
                return Err(Error::InvalidArgument(format!(
                    "block {i} ('{}') covers {:?}; expected it to start at {next}",
                    b.tag, b.params
                )));
            }
            if let Some(inputs) = &b.inputs {
                if inputs.end > b.params.start || inputs.start > inputs.end {
                    return Err(Error::InvalidArgument(format!(
                        "block {i} ('{}') reads {:?}, which is not owned by an earlier block",
                        b.tag, inputs
                    )));
                }
            }
            next = b.params.end;
        }
        Ok(())
    }
}

struct StackedBlock {
    ef: Box<dyn EstimatingFunction>,
    params: Range<usize>,
    inputs: Option<Range<usize>>,
}

/// Concatenation of estimating-equation blocks over one parameter vector.
///
/// Blocks are appended in order and own consecutive slices of `θ`. A block
/// added with [`push_dependent`](Self::push_dependent) additionally reads a
/// slice owned by earlier blocks, which is how transformations of parameters
/// and nuisance models enter the joint sandwich.
#[derive(Default)]
pub struct Stack {
    blocks: Vec<StackedBlock>,
    n_obs: Option<usize>,
    n_params: usize,
}

impl Stack {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(self, ef: impl EstimatingFunction + 'static) -> Result<Self> {
        self.push_boxed(Box::new(ef), None)
    }

    pub fn push_dependent(
        self,
        ef: impl EstimatingFunction + 'static,
        inputs: Range<usize>,
    ) -> Result<Self> {
        self.push_boxed(Box::new(ef), Some(inputs))
    }

    pub fn push_boxed(
        mut self,
        ef: Box<dyn EstimatingFunction>,
        inputs: Option<Range<usize>>,
    ) -> Result<Self> {
        if let Some(n) = self.n_obs {
            if ef.n_obs() != n {
                return Err(Error::dims(format!("observations in block '{}'", ef.tag()), n, ef.n_obs()));
            }
        }
        let wanted = ef.n_inputs();
        match &inputs {
            None if wanted > 0 => {
                return Err(Error::InvalidArgument(format!(
                    "block '{}' reads {wanted} upstream parameters but no input range was given",
                    ef.tag()
                )))
            }
            Some(r) => {
                if r.start > r.end || r.end > self.n_params {
                    return Err(Error::InvalidArgument(format!(
                        "input range {r:?} for block '{}' is not owned by earlier blocks (v = {})",
                        ef.tag(),
                        self.n_params
                    )));
                }
                if r.len() != wanted {
                    return Err(Error::dims(format!("inputs of block '{}'", ef.tag()), wanted, r.len()));
                }
            }
            None => {}
        }
        let start = self.n_params;
        self.n_params += ef.n_params();
        self.n_obs = Some(ef.n_obs());
        self.blocks.push(StackedBlock {
            ef,
            params: start..self.n_params,
            inputs: inputs.filter(|r| !r.is_empty()),
        });
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block_params(&self, block: usize) -> Option<Range<usize>> {
        self.blocks.get(block).map(|b| b.params.clone())
    }

    pub fn layout(&self) -> BlockLayout {
        BlockLayout {
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockEntry {
                    tag: b.ef.tag().to_string(),
                    params: b.params.clone(),
                    inputs: b.inputs.clone(),
                })
                .collect(),
        }
    }
}

impl EstimatingFunction for Stack {
    fn n_params(&self) -> usize {
        self.n_params
    }

    fn n_obs(&self) -> usize {
        self.n_obs.unwrap_or(0)
    }

    fn eval_with(&self, theta: &[f64], _inputs: &[f64]) -> Result<DMatrix<f64>> {
        if theta.len() != self.n_params {
            return Err(Error::dims("stacked parameters", self.n_params, theta.len()));
        }
        let mut out = DMatrix::zeros(self.n_params, self.n_obs());
        for b in &self.blocks {
            let inputs = b.inputs.clone().map_or(&[][..], |r| &theta[r]);
            let rows = b.ef.eval_with(&theta[b.params.clone()], inputs)?;
            if rows.shape() != (b.params.len(), self.n_obs()) {
                return Err(Error::dims(
                    format!("rows from block '{}'", b.ef.tag()),
                    b.params.len(),
                    rows.nrows(),
                ));
            }
            out.rows_mut(b.params.start, b.params.len()).copy_from(&rows);
        }
        Ok(out)
    }

    fn tag(&self) -> &str {
        "stack"
    }

    fn param_names(&self) -> Vec<String> {
        self.blocks.iter().flat_map(|b| b.ef.param_names()).collect()
    }

    fn default_init(&self, _inputs: &[f64]) -> Vec<f64> {
        let mut init = Vec::with_capacity(self.n_params);
        for b in &self.blocks {
            let upstream = b.inputs.clone().map_or(Vec::new(), |r| init[r].to_vec());
            init.extend(b.ef.default_init(&upstream));
        }
        init
    }
}

/// Pins the upstream inputs of a dependent block to fixed values, turning it
/// into a self-contained estimating function. Estimating with the inputs held
/// fixed ignores their sampling variability.
pub struct FixedInputs<E> {
    inner: E,
    inputs: Vec<f64>,
}

impl<E: EstimatingFunction> FixedInputs<E> {
    pub fn new(inner: E, inputs: Vec<f64>) -> Result<Self> {
        if inputs.len() != inner.n_inputs() {
            return Err(Error::dims("fixed inputs", inner.n_inputs(), inputs.len()));
        }
        Ok(FixedInputs { inner, inputs })
    }
}

impl<E: EstimatingFunction> EstimatingFunction for FixedInputs<E> {
    fn n_params(&self) -> usize {
        self.inner.n_params()
    }

    fn n_obs(&self) -> usize {
        self.inner.n_obs()
    }

    fn eval_with(&self, theta: &[f64], _inputs: &[f64]) -> Result<DMatrix<f64>> {
        self.inner.eval_with(theta, &self.inputs)
    }

    fn tag(&self) -> &str {
        self.inner.tag()
    }

    fn param_names(&self) -> Vec<String> {
        self.inner.param_names()
    }

    fn default_init(&self, _inputs: &[f64]) -> Vec<f64> {
        self.inner.default_init(&self.inputs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equations::{EffectiveConcentration, LogLogisticKind, Mean};

    #[test]
    fn single_block_is_identity() {
        let y = vec![1.0, 4.0, -2.0, 7.5];
        let stack = Stack::new().push(Mean::new(y.clone())).unwrap();
        assert_eq!(stack.eval(&[0.7]).unwrap(), Mean::new(y).eval(&[0.7]).unwrap());
    }

    #[test]
    fn layout_is_contiguous() {
        let stack = Stack::new()
            .push(Mean::new(vec![1.0, 2.0, 3.0]))
            .unwrap()
            .push(Mean::new(vec![4.0, 5.0, 6.0]))
            .unwrap();
        let layout = stack.layout();
        layout.validate().unwrap();
        assert_eq!(layout.blocks[0].params, 0..1);
        assert_eq!(layout.blocks[1].params, 1..2);
        assert_eq!(layout.n_params(), 2);
        assert_eq!(stack.param_names(), vec!["mean", "mean"]);
    }

    #[test]
    fn mismatched_blocks_are_rejected() {
        let err = Stack::new()
            .push(Mean::new(vec![1.0, 2.0, 3.0]))
            .unwrap()
            .push(Mean::new(vec![1.0, 2.0]))
            .err()
            .unwrap();
        assert!(matches!(err, Error::DimensionMismatch { .. }));

        let ec = EffectiveConcentration::new(20.0, 3, LogLogisticKind::Three).unwrap();
        let base = Stack::new().push(Mean::new(vec![1.0, 2.0, 3.0])).unwrap();
        assert!(base.push_dependent(ec.clone(), 0..3).is_err());
        let base = Stack::new().push(Mean::new(vec![1.0, 2.0, 3.0])).unwrap();
        assert!(base.push(ec).is_err());
    }

    #[test]
    fn layout_validation() {
        let bad = BlockLayout {
            blocks: vec![
                BlockEntry { tag: "a".into(), params: 0..2, inputs: None },
                BlockEntry { tag: "b".into(), params: 1..3, inputs: None },
            ],
        };
        assert!(bad.validate().is_err());
        let forward_ref = BlockLayout {
            blocks: vec![
                BlockEntry { tag: "a".into(), params: 0..2, inputs: Some(2..3) },
                BlockEntry { tag: "b".into(), params: 2..3, inputs: None },
            ],
        };
        assert!(forward_ref.validate().is_err());
    }
}
