use super::array::Array;
use crate::error::{DressError, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable arrays. Models hold `ParamId`s into a store they own.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Array>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Array {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Array)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    /// Total number of scalar parameters.
    pub fn size(&self) -> usize {
        self.values.iter().map(Array::len).sum()
    }

    /// Re-draw every parameter uniformly from `[-scale, scale]`, in
    /// registration order.
    pub fn init_uniform(&mut self, scale: f64, rng: &mut Rng) {
        for v in &mut self.values {
            *v = Array::uniform(v.shape(), scale, rng);
        }
    }

    pub fn zero_all(&mut self) {
        self.values.iter_mut().for_each(|v| v.fill(0.0));
    }

    /// Overwrite values from `(name, array)` pairs; every parameter must be
    /// present with its registered shape.
    pub fn assign(&mut self, named: Vec<(String, Array)>) -> Result<()> {
        if named.len() != self.values.len() {
            return Err(DressError::Checkpoint(format!(
                "expected {} parameters, found {}",
                self.values.len(),
                named.len()
            )));
        }
        for (name, value) in named {
            let id = self
                .find(&name)
                .ok_or_else(|| DressError::Checkpoint(format!("unknown parameter {name}")))?;
            if value.shape() != self.values[id.0].shape() {
                return Err(DressError::Checkpoint(format!(
                    "parameter {name}: shape {:?} vs expected {:?}",
                    value.shape(),
                    self.values[id.0].shape()
                )));
            }
            self.values[id.0] = value;
        }
        Ok(())
    }

    pub fn named(&self) -> Vec<(String, Array)> {
        self.names.iter().cloned().zip(self.values.iter().cloned()).collect()
    }
}

/// One gradient array per parameter of a store.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    grads: Vec<Array>,
}

impl Gradients {
    pub fn for_store(store: &ParamStore) -> Self {
        Gradients {
            grads: store.values.iter().map(|v| Array::zeros(v.shape())).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Array {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array {
        &mut self.grads[id.0]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Array> {
        self.grads.iter()
    }

    pub fn zero(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    pub fn global_norm(&self) -> f64 {
        self.grads.iter().map(Array::sq_norm).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|x| *x *= k);
        }
    }

    /// `self += k * other`
    pub fn add_scaled(&mut self, other: &Gradients, k: f64) -> Result<()> {
        if other.grads.len() != self.grads.len() {
            return Err(DressError::Shape("gradient sets of different stores".into()));
        }
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            if a.shape() != b.shape() {
                return Err(DressError::Shape("gradient shape mismatch".into()));
            }
            super::array::axpy(a.data_mut(), k, b.data());
        }
        Ok(())
    }

    /// All gradient entries, flattened in parameter order.
    pub fn flatten(&self) -> Vec<f64> {
        self.grads.iter().flat_map(|g| g.data().iter().copied()).collect()
    }
}

/// Rescale so the global L2 norm is at most `max_norm`. Returns the norm
/// before clipping.
pub fn clip_gradients(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}
