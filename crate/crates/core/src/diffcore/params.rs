use super::tensor::Tensor2;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named learnable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor2>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor2) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor2 {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor2 {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor2)> {
        self.names.iter().zip(&self.values).enumerate().map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor2::len).sum()
    }

    /// Replaces all values, checking that names and shapes line up.
    pub fn load_values(&mut self, named: Vec<(String, Tensor2)>) -> Result<()> {
        if named.len() != self.values.len() {
            return Err(Error::Version(format!(
                "parameter count {} does not match model ({})",
                named.len(),
                self.values.len()
            )));
        }
        for (i, (name, value)) in named.iter().enumerate() {
            if name != &self.names[i] || value.shape() != self.values[i].shape() {
                return Err(Error::Version(format!(
                    "parameter {i}: stored {name} {:?}, model expects {} {:?}",
                    value.shape(),
                    self.names[i],
                    self.values[i].shape()
                )));
            }
        }
        self.values = named.into_iter().map(|(_, v)| v).collect();
        Ok(())
    }
}

/// One gradient tensor per parameter, aligned with a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    grads: Vec<Tensor2>,
    /// Number of recorded operations visited during the backward replay.
    pub ops_replayed: usize,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            grads: store.values.iter().map(|v| Tensor2::zeros(v.rows(), v.cols())).collect(),
            ops_replayed: 0,
        }
    }

    /// Gradients given explicitly, one tensor per parameter of `store`.
    pub fn from_tensors(store: &ParamStore, grads: Vec<Tensor2>) -> Result<Self> {
        if grads.len() != store.values.len() || grads.iter().zip(&store.values).any(|(g, v)| g.shape() != v.shape()) {
            return Err(Error::dim("gradients", "gradient tensors do not match the parameters"));
        }
        Ok(Self { grads, ops_replayed: 0 })
    }

    pub fn get(&self, id: ParamId) -> &Tensor2 {
        &self.grads[id.0]
    }

    pub(crate) fn accumulate(&mut self, id: ParamId, g: &Tensor2) {
        self.grads[id.0].add_assign(g);
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.grads {
            for v in g.data_mut() {
                *v *= s;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.grads.iter().map(Tensor2::sq_norm).sum::<f64>().sqrt()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor2)> {
        self.grads.iter().enumerate().map(|(i, g)| (ParamId(i), g))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}
