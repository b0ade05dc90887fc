//! Unsupervised objective: Wasserstein distances between feature-induced
//! distributions, a fluency score, and their weighted sum.
//!
//! A feature vector `x` (or the row mean of a matrix) becomes a distribution
//! with weights `softmax(x)` over `d` support points `xᵢ·eᵢ`, compared under
//! Euclidean ground cost.

mod exact;
mod lm;
mod sinkhorn;

pub use exact::{ot_exact, ot_exact_with_cost, ORACLE_MAX_CELLS};
pub use lm::{slor, BigramLm, LanguageModel, UnigramTable};
pub use sinkhorn::{ot_sinkhorn, sinkhorn_distance, SinkhornConfig, SinkhornInfo, SinkhornResult};

use crate::diffcore::{ops, Axis, CustomOp, Tape, Tensor2, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Pmf {
    pub weights: Vec<f64>,
    /// One support point per row.
    pub support: Tensor2,
}

impl Pmf {
    pub fn new(weights: Vec<f64>, support: Tensor2) -> Result<Self> {
        if weights.is_empty() || weights.len() != support.rows() {
            return Err(Error::dim("pmf", format!("{} weights for {} support points", weights.len(), support.rows())));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Evaluation("pmf weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Evaluation(format!("pmf weights sum to {total}")));
        }
        Ok(Self { weights, support })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    pub gamma: Tensor2,
    pub cost: Tensor2,
    pub total_cost: f64,
}

/// Row-mean of a matrix (a 1×d input is used as is).
fn pooled(x: &Tensor2) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::dim("features_to_pmf", "empty input"));
    }
    if !x.is_finite() {
        return Err(Error::Evaluation("features_to_pmf: non-finite input".into()));
    }
    Ok(ops::mean_rows(x)?.into_vec())
}

pub fn features_to_pmf(x: &Tensor2) -> Result<Pmf> {
    let v = pooled(x)?;
    let weights = ops::softmax_vec(&v);
    let support = ops::diag(&Tensor2::row_vector(&v))?;
    Pmf::new(weights, support)
}

pub fn cost_matrix(p: &Pmf, q: &Pmf) -> Result<Tensor2> {
    if p.support.cols() != q.support.cols() {
        return Err(Error::dim(
            "cost_matrix",
            format!("supports of dimension {} and {}", p.support.cols(), q.support.cols()),
        ));
    }
    ops::pairwise_dist(&p.support, &q.support)
}

/// Distances between the coordinate supports `aᵢeᵢ` and `bⱼeⱼ`.
pub fn coordinate_cost_values(a: &[f64], b: &[f64]) -> Tensor2 {
    let mut c = Tensor2::zeros(a.len(), b.len());
    for (i, &x) in a.iter().enumerate() {
        let row = c.row_mut(i);
        for (j, &y) in b.iter().enumerate() {
            row[j] = if i == j { (x - y).abs() } else { (x * x + y * y).sqrt() };
        }
    }
    c
}

struct CoordinateCost;

impl CustomOp for CoordinateCost {
    fn name(&self) -> &'static str {
        "coordinate_cost"
    }

    fn backward(&self, inputs: &[&Tensor2], output: &Tensor2, grad: &Tensor2) -> Vec<Option<Tensor2>> {
        let (a, b) = (inputs[0].data(), inputs[1].data());
        let mut ga = vec![0.0; a.len()];
        let mut gb = vec![0.0; b.len()];
        for (i, &x) in a.iter().enumerate() {
            for (j, &y) in b.iter().enumerate() {
                let g = grad.get(i, j);
                if g == 0.0 {
                    continue;
                }
                if i == j {
                    let s = if x > y { 1.0 } else if x < y { -1.0 } else { 0.0 };
                    ga[i] += g * s;
                    gb[j] -= g * s;
                } else {
                    let c = output.get(i, j);
                    if c > 0.0 {
                        ga[i] += g * x / c;
                        gb[j] += g * y / c;
                    }
                }
            }
        }
        vec![Some(Tensor2::row_vector(&ga)), Some(Tensor2::row_vector(&gb))]
    }
}

/// Tape version of [`coordinate_cost_values`] for 1×d rows.
pub fn coordinate_cost(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    if tape.shape(a).0 != 1 || tape.shape(b).0 != 1 || tape.shape(a).1 != tape.shape(b).1 {
        return Err(Error::dim("cost_matrix", format!("{:?} vs {:?}", tape.shape(a), tape.shape(b))));
    }
    let out = coordinate_cost_values(tape.value(a).data(), tape.value(b).data());
    tape.custom(&[a, b], out, Box::new(CoordinateCost))
}

/// Pools `x` to a 1×d row when it has several rows.
pub fn pool_row(tape: &mut Tape, x: Var) -> Result<Var> {
    match tape.shape(x) {
        (0, _) | (_, 0) => Err(Error::dim("features_to_pmf", "empty input")),
        (1, _) => Ok(x),
        _ => tape.mean_rows(x),
    }
}

/// Entropic Wasserstein distance between the distributions induced by two
/// feature rows (or matrices, mean-pooled).
pub fn wasserstein(tape: &mut Tape, x: Var, y: Var, cfg: &SinkhornConfig) -> Result<(Var, SinkhornInfo)> {
    let a = pool_row(tape, x)?;
    let b = pool_row(tape, y)?;
    let cost = coordinate_cost(tape, a, b)?;
    let p = tape.softmax(a, Axis::Row)?;
    let q = tape.softmax(b, Axis::Row)?;
    sinkhorn_distance(tape, cost, p, q, cfg)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossWeights {
    pub text: f64,
    pub video: f64,
    pub cross: f64,
    pub fluency: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { text: 1.0, video: 1.0, cross: 1.0, fluency: 0.1 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("text", self.text), ("video", self.video), ("cross", self.cross)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("loss.{name} must be finite and >= 0, got {v}")));
            }
        }
        if !self.fluency.is_finite() {
            return Err(Error::Config(format!("loss.fluency must be finite, got {}", self.fluency)));
        }
        Ok(())
    }
}

/// Per-pair loss values. `fluency` is the minimized term, `-SLOR`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub text: f64,
    pub video: f64,
    pub cross: f64,
    pub fluency: f64,
}

impl LossTerms {
    pub fn weighted(&self, w: &LossWeights) -> f64 {
        w.text * self.text + w.video * self.video + w.cross * self.cross + w.fluency * self.fluency
    }
}

/// `λ_T L_T + λ_V L_V + λ_O L_O − λ_f SLOR`.
pub fn total_loss(l_t: f64, l_v: f64, l_o: f64, slor_value: f64, w: &LossWeights) -> f64 {
    LossTerms { text: l_t, video: l_v, cross: l_o, fluency: -slor_value }.weighted(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{grad_check, ParamStore};
    use proptest::prelude::*;

    #[test]
    fn zero_vector_gives_uniform_weights() {
        let p = features_to_pmf(&Tensor2::row_vector(&[0.0, 0.0, 0.0])).unwrap();
        assert!(p.weights.iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-15));
        let m = features_to_pmf(&Tensor2::zeros(4, 3)).unwrap();
        assert_eq!(m, p);
    }

    #[test]
    fn dominant_coordinate() {
        let p = features_to_pmf(&Tensor2::row_vector(&[10.0, 0.0, 0.0])).unwrap();
        let oracle = 1.0 / (1.0 + 2.0 * (-10.0f64).exp());
        assert!((p.weights[0] - oracle).abs() < 1e-15);
        assert!(p.weights[0] > 0.9999);
        assert_eq!(p.support.get(0, 0), 10.0);
    }

    #[test]
    fn empty_input_is_a_dimension_error() {
        assert!(matches!(features_to_pmf(&Tensor2::zeros(0, 3)), Err(Error::Dimension { .. })));
    }

    #[test]
    fn cost_examples() {
        let p = features_to_pmf(&Tensor2::row_vector(&[0.3, -1.0, 2.0])).unwrap();
        let c = cost_matrix(&p, &p).unwrap();
        assert!((0..3).all(|i| c.get(i, i) == 0.0));
        let a = Pmf::new(vec![1.0], Tensor2::row_vector(&[0.0])).unwrap();
        let b = Pmf::new(vec![1.0], Tensor2::row_vector(&[3.0])).unwrap();
        assert_eq!(cost_matrix(&a, &b).unwrap().get(0, 0), 3.0);
        let e = Pmf::new(vec![0.5, 0.5], Tensor2::identity(2)).unwrap();
        assert!((cost_matrix(&e, &e).unwrap().get(0, 1) - 2f64.sqrt()).abs() < 1e-15);
        let wide = Pmf::new(vec![1.0], Tensor2::zeros(1, 2)).unwrap();
        assert!(matches!(cost_matrix(&a, &wide), Err(Error::Dimension { .. })));
    }

    #[test]
    fn coordinate_cost_matches_general_cost() {
        let a = [0.3, -1.0, 2.0, 0.1];
        let b = [1.0, 0.5, -0.2, 0.1];
        let pa = features_to_pmf(&Tensor2::row_vector(&a)).unwrap();
        let pb = features_to_pmf(&Tensor2::row_vector(&b)).unwrap();
        let general = cost_matrix(&pa, &pb).unwrap();
        assert!(general.max_abs_diff(&coordinate_cost_values(&a, &b)) < 1e-15);
    }

    #[test]
    fn coordinate_cost_gradient() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor2::row_vector(&[0.3, -1.0, 2.0]));
        let b = store.add("b", Tensor2::row_vector(&[1.0, 0.5, -0.2]));
        let w = Tensor2::from_vec(3, 3, (0..9).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let report = grad_check(&store, 1e-6, 1e-6, |s, t| {
            let av = t.param(s, a);
            let bv = t.param(s, b);
            let c = coordinate_cost(t, av, bv)?;
            let wv = t.input(w.clone());
            let prod = t.mul(c, wv)?;
            t.sum_all(prod)
        })
        .unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn total_loss_examples() {
        let w0 = LossWeights { text: 0.0, video: 0.0, cross: 0.0, fluency: 0.0 };
        assert_eq!(total_loss(0.2, 0.3, 0.5, 0.4, &w0), 0.0);
        let w = LossWeights { text: 1.0, video: 1.0, cross: 1.0, fluency: 0.0 };
        assert!((total_loss(0.2, 0.3, 0.5, 7.0, &w) - 1.0).abs() < 1e-15);
        let wf = LossWeights { text: 0.0, video: 0.0, cross: 0.0, fluency: 1.0 };
        assert!((total_loss(0.0, 0.0, 0.0, 0.4, &wf) + 0.4).abs() < 1e-15);
        assert!(LossWeights { text: -1.0, ..LossWeights::default() }.validate().is_err());
        assert!(LossWeights { fluency: -1.0, ..LossWeights::default() }.validate().is_ok());
    }

    proptest! {
        #[test]
        fn total_loss_is_linear_in_each_weight(
            terms in prop::array::uniform4(0.0f64..5.0),
            base in prop::array::uniform4(0.0f64..2.0),
            which in 0usize..4,
            a in 0.0f64..3.0,
            b in 0.0f64..3.0,
        ) {
            let eval = |v: f64| {
                let mut l = base;
                l[which] = v;
                let w = LossWeights { text: l[0], video: l[1], cross: l[2], fluency: l[3] };
                total_loss(terms[0], terms[1], terms[2], terms[3], &w)
            };
            let mid = eval(0.5 * (a + b));
            prop_assert!((mid - 0.5 * (eval(a) + eval(b))).abs() < 1e-9);
        }
    }
}
