use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::graph::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors, in registration order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value.as_standard_layout().into_owned());
        ParamId(self.values.len() - 1)
    }

    /// Uniform in `[-bound, bound]`.
    pub fn add_uniform(&mut self, name: impl Into<String>, shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> ParamId {
        let n: usize = shape.iter().product();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.add(name, Tensor::from_shape_vec(shape.to_vec(), v).expect("shape product"))
    }

    pub fn add_const(&mut self, name: impl Into<String>, shape: &[usize], value: f64) -> ParamId {
        self.add(name, Tensor::from_elem(shape.to_vec(), value))
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

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Total number of scalars.
    pub fn numel(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Names prefixed by `prefix`, with their shapes.
    pub fn shapes_with_prefix(&self, prefix: &str) -> Vec<(String, Vec<usize>)> {
        self.names
            .iter()
            .zip(&self.values)
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(n, v)| (n.clone(), v.shape().to_vec()))
            .collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Overwrites values by name; every stored parameter must be present with
    /// the same shape.
    pub fn load<'a>(&mut self, entries: impl IntoIterator<Item = (&'a str, Tensor)>) -> Result<()> {
        let mut seen = vec![false; self.values.len()];
        for (name, value) in entries {
            let Some(id) = self.find(name) else {
                continue;
            };
            if value.shape() != self.values[id.0].shape() {
                return Err(Error::shape("checkpoint parameter", self.values[id.0].shape(), value.shape()));
            }
            self.values[id.0] = value.as_standard_layout().into_owned();
            seen[id.0] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Container(format!("checkpoint lacks parameter {}", self.names[i])));
        }
        Ok(())
    }
}
