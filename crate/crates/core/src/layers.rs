//! Learnable building blocks shared by the model modules.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::diffcore::{ParamId, ParamStore, Tape, Tensor2, Var};
use crate::error::{Error, Result};

/// `x · W + b` applied to every row, `W` input×output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Affine {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

pub(crate) fn normal_tensor(rng: &mut impl Rng, rows: usize, cols: usize, std: f64) -> Tensor2 {
    if std == 0.0 {
        return Tensor2::zeros(rows, cols);
    }
    let dist = Normal::new(0.0, std).expect("positive std");
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Tensor2::from_vec(rows, cols, data).expect("sized above")
}

impl Affine {
    /// Gaussian weights with standard deviation `std`, zero bias.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        std: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let w = store.add(format!("{name}.w"), normal_tensor(rng, input, output, std));
        let b = store.add(format!("{name}.b"), Tensor2::zeros(1, output));
        Self { w, b, input, output }
    }

    /// Registers externally supplied weights, checking their shapes.
    pub fn from_tensors(store: &mut ParamStore, name: &str, w: Tensor2, b: Tensor2) -> Result<Self> {
        if b.rows() != 1 || b.cols() != w.cols() {
            return Err(Error::dim("affine", format!("weight {:?} with bias {:?}", w.shape(), b.shape())));
        }
        let (input, output) = w.shape();
        let w = store.add(format!("{name}.w"), w);
        let b = store.add(format!("{name}.b"), b);
        Ok(Self { w, b, input, output })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let (_, cols) = tape.shape(x);
        if cols != self.input {
            return Err(Error::dim(
                "affine",
                format!("input has {cols} features, head maps {} -> {}", self.input, self.output),
            ));
        }
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        tape.affine(x, w, b)
    }

    pub fn check_shape(&self, op: &'static str, input: usize, output: usize) -> Result<()> {
        if self.input != input || self.output != output {
            return Err(Error::dim(
                op,
                format!("head maps {} -> {}, expected {input} -> {output}", self.input, self.output),
            ));
        }
        Ok(())
    }
}
