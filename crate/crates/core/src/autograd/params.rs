use std::collections::HashMap;

use rand::Rng;

use super::tape::Tape;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub tensor: Tensor,
}

/// Named trainable tensors, enumerated in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::InvalidInput(format!(
                "duplicate parameter name `{name}`"
            )));
        }
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id.0);
        self.params.push(Parameter {
            name,
            tensor: tensor.with_grad(),
        });
        Ok(id)
    }

    /// Registers a matrix drawn uniformly from ±sqrt(6 / (fan_in + fan_out)).
    pub fn add_glorot<R: Rng>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let values = (0..rows * cols)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        self.add(name, Tensor::matrix(rows, cols, values)?)
    }

    /// Registers a vector treated as a `1 x len` projection for initialisation.
    pub fn add_glorot_vector<R: Rng>(
        &mut self,
        name: impl Into<String>,
        len: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let bound = (6.0 / (len + 1) as f64).sqrt();
        let values = (0..len).map(|_| rng.gen_range(-bound..bound)).collect();
        self.add(name, Tensor::vector(values)?)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: Vec<usize>) -> Result<ParamId> {
        self.add(name, Tensor::zeros(shape)?)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.tensor.grad = None;
        }
    }

    /// Adds `scale` times the gradients recorded on `tape` into the stored
    /// parameters. Parameters absent from the tape receive nothing.
    pub fn accumulate_from(&mut self, tape: &Tape, scale: f64) {
        for (param, row, grad) in tape.param_grads() {
            let tensor = &mut self.params[param.0].tensor;
            let width = match row {
                Some(_) => tensor.last_dim(),
                None => tensor.len(),
            };
            let offset = row.map_or(0, |r| r * width);
            let total = tensor.len();
            let buf = tensor.grad.get_or_insert_with(|| vec![0.0; total]);
            for (g, d) in buf[offset..offset + width].iter_mut().zip(grad) {
                *g += scale * d;
            }
        }
    }
}
