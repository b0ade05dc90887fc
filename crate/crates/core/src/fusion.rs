//! Unimodal context encoding, cross-modal attention and guidance stacks.

use rand::Rng;

use crate::diffcore::{ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::layers::{normal_tensor, Affine};

#[derive(Clone, Debug, PartialEq)]
pub struct StackConfig {
    pub layers: usize,
    pub heads: usize,
    pub d: usize,
    /// Feed-forward width as a multiple of `d`.
    pub ffn_mult: usize,
    /// Scale of the output projections feeding each residual branch.
    /// Zero makes every block an exact identity at initialization.
    pub residual_init: f64,
}

impl Default for StackConfig {
    fn default() -> Self {
        Self { layers: 2, heads: 4, d: 64, ffn_mult: 2, residual_init: 0.2 }
    }
}

impl StackConfig {
    /// 12 layers, 16 heads, width 512.
    pub fn full_scale() -> Self {
        Self { layers: 12, heads: 16, d: 512, ffn_mult: 4, residual_init: 0.2 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.heads == 0 || self.d % self.heads != 0 {
            return Err(Error::Config(format!("hidden size {} must be divisible by heads {}", self.d, self.heads)));
        }
        if self.ffn_mult == 0 {
            return Err(Error::Config("ffn_mult must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Block {
    q: Affine,
    k: Affine,
    v: Affine,
    o: Affine,
    ff_in: Affine,
    ff_out: Affine,
}

/// Pre-norm transformer encoder without a final normalization, so a zero
/// residual initialization is an exact identity. Normalization has no learned
/// gain or bias; the projections that follow absorb both.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformerStack {
    pub config: StackConfig,
    blocks: Vec<Block>,
}

impl TransformerStack {
    pub fn new(store: &mut ParamStore, name: &str, config: StackConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let d = config.d;
        let hidden = d * config.ffn_mult;
        let in_std = 1.0 / (d as f64).sqrt();
        let mut blocks = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let p = format!("{name}.{l}");
            blocks.push(Block {
                q: Affine::new(store, &format!("{p}.q"), d, d, in_std, rng),
                k: Affine::new(store, &format!("{p}.k"), d, d, in_std, rng),
                v: Affine::new(store, &format!("{p}.v"), d, d, in_std, rng),
                o: Affine::new(store, &format!("{p}.o"), d, d, config.residual_init * in_std, rng),
                ff_in: Affine::new(store, &format!("{p}.ff_in"), d, hidden, in_std, rng),
                ff_out: Affine::new(
                    store,
                    &format!("{p}.ff_out"),
                    hidden,
                    d,
                    config.residual_init / (hidden as f64).sqrt(),
                    rng,
                ),
            });
        }
        Ok(Self { config, blocks })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let d = tape.shape(x).1;
        if d != self.config.d {
            return Err(Error::dim("transformer", format!("tokens have {d} features, stack expects {}", self.config.d)));
        }
        let mut h = x;
        for b in &self.blocks {
            let z = tape.layer_norm(h)?;
            let q = b.q.forward(tape, store, z)?;
            let k = b.k.forward(tape, store, z)?;
            let v = b.v.forward(tape, store, z)?;
            let att = tape.attention(q, k, v, self.config.heads)?;
            let o = b.o.forward(tape, store, att)?;
            h = tape.add(h, o)?;
            let z = tape.layer_norm(h)?;
            let f = b.ff_in.forward(tape, store, z)?;
            let f = tape.gelu(f)?;
            let f = b.ff_out.forward(tape, store, f)?;
            h = tape.add(h, f)?;
        }
        Ok(h)
    }
}

/// Learned absolute position vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Positions {
    pub table: ParamId,
    pub max_len: usize,
}

impl Positions {
    pub fn new(store: &mut ParamStore, name: &str, max_len: usize, d: usize, rng: &mut impl Rng) -> Self {
        let table = store.add(name.to_string(), normal_tensor(rng, max_len, d, 0.02));
        Self { table, max_len }
    }

    pub fn add(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let n = tape.shape(x).0;
        if n > self.max_len {
            return Err(Error::Config(format!("sequence of {n} exceeds max positions {}", self.max_len)));
        }
        let table = tape.param(store, self.table);
        let pos = tape.slice_rows(table, 0, n)?;
        tape.add(x, pos)
    }
}

/// Prepends the pooled high-level token, runs `stack`, and drops that token.
pub fn unimodal_context(tape: &mut Tape, store: &ParamStore, clean: Var, high: Var, stack: &TransformerStack) -> Result<Var> {
    let (n, d) = tape.shape(clean);
    if tape.shape(high) != (1, d) {
        return Err(Error::dim("unimodal_context", format!("high {:?} for tokens of width {d}", tape.shape(high))));
    }
    let tokens = tape.concat_rows(&[high, clean])?;
    let out = stack.forward(tape, store, tokens)?;
    tape.slice_rows(out, 1, n + 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionHead {
    pub q: Affine,
    pub k: Affine,
    pub v: Affine,
}

impl AttentionHead {
    pub fn new(store: &mut ParamStore, name: &str, d: usize, rng: &mut impl Rng) -> Self {
        let std = 1.0 / (d as f64).sqrt();
        Self {
            q: Affine::new(store, &format!("{name}.q"), d, d, std, rng),
            k: Affine::new(store, &format!("{name}.k"), d, d, std, rng),
            v: Affine::new(store, &format!("{name}.v"), d, d, std, rng),
        }
    }

    /// Single-head attention of `queries` over `keys` (values taken from `keys`).
    pub fn attend(&self, tape: &mut Tape, store: &ParamStore, queries: Var, keys: Var) -> Result<Var> {
        let q = self.q.forward(tape, store, queries)?;
        let k = self.k.forward(tape, store, keys)?;
        let v = self.v.forward(tape, store, keys)?;
        tape.attention(q, k, v, 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CrossAttention {
    pub video_to_text: AttentionHead,
    pub text_to_video: AttentionHead,
}

impl CrossAttention {
    pub fn new(store: &mut ParamStore, d: usize, rng: &mut impl Rng) -> Self {
        Self {
            video_to_text: AttentionHead::new(store, "cross.v2t", d, rng),
            text_to_video: AttentionHead::new(store, "cross.t2v", d, rng),
        }
    }
}

/// Video queries over text and text queries over video: (m×d, n×d).
pub fn cross_attend(tape: &mut Tape, store: &ParamStore, x_v: Var, x_t: Var, heads: &CrossAttention) -> Result<(Var, Var)> {
    if tape.shape(x_v).1 != tape.shape(x_t).1 {
        return Err(Error::dim("cross_attend", format!("video {:?}, text {:?}", tape.shape(x_v), tape.shape(x_t))));
    }
    let a_v2t = heads.video_to_text.attend(tape, store, x_v, x_t)?;
    let a_t2v = heads.text_to_video.attend(tape, store, x_t, x_v)?;
    Ok((a_v2t, a_t2v))
}

/// Stacks `a_v2t` above `a_t2v` and applies `head` row-wise: (m+n)×d.
pub fn fuse(tape: &mut Tape, store: &ParamStore, a_v2t: Var, a_t2v: Var, head: &Affine) -> Result<Var> {
    let d = tape.shape(a_v2t).1;
    head.check_shape("fuse", d, d)?;
    let stacked = tape.concat_rows(&[a_v2t, a_t2v])?;
    head.forward(tape, store, stacked)
}

/// Runs `stack` over multimodal tokens followed by `unimodal` tokens and
/// keeps only the unimodal positions.
pub fn guide(tape: &mut Tape, store: &ParamStore, multimodal: Var, unimodal: Var, stack: &TransformerStack) -> Result<Var> {
    let (mm, d) = tape.shape(multimodal);
    let (n, du) = tape.shape(unimodal);
    if d != du {
        return Err(Error::dim("guide", format!("multimodal width {d}, unimodal width {du}")));
    }
    let tokens = tape.concat_rows(&[multimodal, unimodal])?;
    let out = stack.forward(tape, store, tokens)?;
    tape.slice_rows(out, mm, mm + n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::ops::attention_weights;
    use crate::diffcore::Tensor2;
    use crate::rng;

    fn random_tokens(seed: u64, rows: usize, d: usize) -> Tensor2 {
        normal_tensor(&mut rng::stream(seed, "tokens", 0), rows, d, 1.0)
    }

    fn stack(store: &mut ParamStore, d: usize, residual_init: f64) -> TransformerStack {
        let cfg = StackConfig { layers: 2, heads: 2, d, ffn_mult: 2, residual_init };
        TransformerStack::new(store, "s", cfg, &mut rng::stream(5, "init", 0)).unwrap()
    }

    #[test]
    fn unimodal_context_shape() {
        let mut store = ParamStore::new();
        let s = stack(&mut store, 8, 0.2);
        let mut tape = Tape::no_grad();
        let x = tape.input(random_tokens(1, 4, 8));
        let high = tape.mean_rows(x).unwrap();
        let out = unimodal_context(&mut tape, &store, x, high, &s).unwrap();
        assert_eq!(tape.shape(out), (4, 8));
        assert!(tape.value(out).is_finite());
    }

    #[test]
    fn zero_residual_stack_is_identity() {
        let mut store = ParamStore::new();
        let s = stack(&mut store, 8, 0.0);
        let mut tape = Tape::no_grad();
        let x_val = random_tokens(2, 4, 8);
        let x = tape.input(x_val.clone());
        let high = tape.mean_rows(x).unwrap();
        let out = unimodal_context(&mut tape, &store, x, high, &s).unwrap();
        assert!(tape.value(out).max_abs_diff(&x_val) < 1e-12);
        let mm = tape.input(random_tokens(3, 5, 8));
        let g = guide(&mut tape, &store, mm, x, &s).unwrap();
        assert!(tape.value(g).max_abs_diff(&x_val) < 1e-12);
    }

    #[test]
    fn width_mismatch_is_a_dimension_error() {
        let mut store = ParamStore::new();
        let s = stack(&mut store, 8, 0.2);
        let mut tape = Tape::no_grad();
        let x = tape.input(random_tokens(1, 3, 8));
        let high = tape.input(Tensor2::zeros(1, 4));
        assert!(matches!(unimodal_context(&mut tape, &store, x, high, &s), Err(Error::Dimension { .. })));
        let wide = tape.input(random_tokens(1, 3, 16));
        assert!(matches!(s.forward(&mut tape, &store, wide), Err(Error::Dimension { .. })));
    }

    #[test]
    fn rejects_indivisible_heads() {
        let mut store = ParamStore::new();
        let cfg = StackConfig { heads: 3, d: 8, ..StackConfig::default() };
        assert!(TransformerStack::new(&mut store, "s", cfg, &mut rng::stream(0, "x", 0)).is_err());
        let big = StackConfig::full_scale();
        assert_eq!((big.layers, big.heads, big.d), (12, 16, 512));
        assert!(big.validate().is_ok());
    }

    #[test]
    fn cross_attend_shapes_and_single_key() {
        let mut store = ParamStore::new();
        let heads = CrossAttention::new(&mut store, 8, &mut rng::stream(9, "init", 0));
        let mut tape = Tape::no_grad();
        let xv = tape.input(random_tokens(1, 3, 8));
        let xt = tape.input(random_tokens(2, 5, 8));
        let (a, b) = cross_attend(&mut tape, &store, xv, xt, &heads).unwrap();
        assert_eq!(tape.shape(a), (3, 8));
        assert_eq!(tape.shape(b), (5, 8));

        let one = tape.input(random_tokens(3, 1, 8));
        let (a1, _) = cross_attend(&mut tape, &store, xv, one, &heads).unwrap();
        let projected = heads.video_to_text.v.forward(&mut tape, &store, one).unwrap();
        let want = tape.value(projected).clone();
        for r in 0..3 {
            let row = tape.value(a1).row(r);
            assert!(row.iter().zip(want.row(0)).all(|(x, y)| (x - y).abs() < 1e-12));
        }
    }

    #[test]
    fn identical_keys_give_uniform_weights() {
        let q = random_tokens(4, 3, 6);
        let key = random_tokens(5, 1, 6);
        let keys = crate::diffcore::ops::concat_rows(&[&key, &key, &key, &key]).unwrap();
        let w = attention_weights(&q, &keys).unwrap();
        for v in w.data() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn fuse_examples() {
        let mut store = ParamStore::new();
        let ident = Affine::from_tensors(&mut store, "id", Tensor2::identity(4), Tensor2::zeros(1, 4)).unwrap();
        let beta = Tensor2::row_vector(&[0.5, -1.0, 2.0, 0.0]);
        let zero = Affine::from_tensors(&mut store, "z", Tensor2::zeros(4, 4), beta.clone()).unwrap();
        let mut tape = Tape::no_grad();
        let a = random_tokens(1, 2, 4);
        let b = random_tokens(2, 3, 4);
        let av = tape.input(a.clone());
        let bv = tape.input(b.clone());
        let out = fuse(&mut tape, &store, av, bv, &ident).unwrap();
        assert_eq!(tape.shape(out), (5, 4));
        let stacked = crate::diffcore::ops::concat_rows(&[&a, &b]).unwrap();
        assert!(tape.value(out).max_abs_diff(&stacked) < 1e-15);
        let out = fuse(&mut tape, &store, av, bv, &zero).unwrap();
        for r in 0..5 {
            assert_eq!(tape.value(out).row(r), beta.data());
        }
    }

    #[test]
    fn guide_output_shape() {
        let mut store = ParamStore::new();
        let s = stack(&mut store, 8, 0.2);
        let mut tape = Tape::no_grad();
        let mm = tape.input(random_tokens(1, 5, 8));
        let x = tape.input(random_tokens(2, 4, 8));
        let out = guide(&mut tape, &store, mm, x, &s).unwrap();
        assert_eq!(tape.shape(out), (4, 8));
    }

    #[test]
    fn guide_ignores_multimodal_order() {
        let mut store = ParamStore::new();
        let s = stack(&mut store, 8, 1.0);
        let mm = random_tokens(1, 5, 8);
        let perm = mm.gather_rows(&[3, 0, 4, 2, 1]);
        let x = random_tokens(2, 4, 8);
        let run = |m: &Tensor2| {
            let mut tape = Tape::no_grad();
            let mv = tape.input(m.clone());
            let xv = tape.input(x.clone());
            let out = guide(&mut tape, &store, mv, xv, &s).unwrap();
            tape.value(out).clone()
        };
        assert!(run(&mm).max_abs_diff(&run(&perm)) < 1e-12);
    }
}
