use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{AutodiffError, Gradients, Tape, Tensor, Var};

/// Stable handle into a [`ParameterSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Option<Tensor>,
    pub trainable: bool,
}

/// Named tensors trained jointly (sampler and decoder live in one set).
#[derive(Clone, Debug, Default)]
pub struct ParameterSet {
    params: Vec<Parameter>,
}

/// The tape variables a [`ParameterSet`] was bound to.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<ParamId, AutodiffError> {
        self.insert_with(name, value, true)
    }

    /// Adds a tensor that is bound as a constant and never updated.
    pub fn insert_frozen(&mut self, name: &str, value: Tensor) -> Result<ParamId, AutodiffError> {
        self.insert_with(name, value, false)
    }

    fn insert_with(&mut self, name: &str, value: Tensor, trainable: bool) -> Result<ParamId, AutodiffError> {
        if self.find(name).is_some() {
            return Err(AutodiffError::DuplicateName(name.to_string()));
        }
        self.params.push(Parameter {
            name: name.to_string(),
            value,
            grad: None,
            trainable,
        });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn param(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    /// Records every parameter on `tape`: trainable ones as variables,
    /// frozen ones as constants.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|p| {
                if p.trainable {
                    tape.variable(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                }
            })
            .collect();
        Bound { vars }
    }

    /// Runs the reverse pass from `output` and stores gradients. Trainable
    /// parameters the output does not depend on get a zero gradient; frozen
    /// ones are left without one.
    pub fn backward(&mut self, tape: &Tape, output: Var, bound: &Bound) -> Result<(), AutodiffError> {
        let grads = tape.backward(output)?;
        self.store_grads(&grads, bound);
        Ok(())
    }

    pub fn store_grads(&mut self, grads: &Gradients, bound: &Bound) {
        for (p, &v) in self.params.iter_mut().zip(&bound.vars) {
            p.grad = if p.trainable {
                Some(grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(p.value.shape())))
            } else {
                None
            };
        }
    }

    pub fn clear_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// Total number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }
}
