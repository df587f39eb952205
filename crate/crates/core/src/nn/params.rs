use crate::error::{Error, Result};
use crate::nn::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Named parameters with same-shape gradient accumulators.
///
/// The store is the only mutable state in the network; optimizer steps
/// write here and nowhere else.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
    grads: Vec<Tensor<T>>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let grad = Tensor::zeros(value.shape());
        self.names.push(name.into());
        self.values.push(value);
        self.grads.push(grad);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<T> {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.grads[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.fill(T::zero());
        }
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.data().iter())
            .map(|g| g.f64() * g.f64())
            .sum::<f64>()
            .sqrt()
    }

    /// Scales all gradients so their global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> Result<f64> {
        let norm = self.grad_norm();
        if !norm.is_finite() {
            return Err(Error::NonFinite("gradient norm".into()));
        }
        if norm > max_norm {
            let scale = T::of(max_norm / (norm + 1e-6));
            for g in &mut self.grads {
                g.data_mut().iter_mut().for_each(|v| *v *= scale);
            }
        }
        Ok(norm)
    }

    /// Parameter values and gradients as parallel slices (for optimizers).
    pub fn values_and_grads_mut(&mut self) -> (&mut [Tensor<T>], &[Tensor<T>]) {
        (&mut self.values, &self.grads)
    }

    pub fn values(&self) -> &[Tensor<T>] {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Replaces the value of `name`, which must keep its shape.
    pub fn set(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let id = self
            .find(name)
            .ok_or_else(|| Error::Format {
                expected: "known parameter name".into(),
                found: name.into(),
            })?;
        if value.shape() != self.values[id.0].shape() {
            return Err(Error::Format {
                expected: format!("{name} shape {:?}", self.values[id.0].shape()),
                found: format!("{:?}", value.shape()),
            });
        }
        self.values[id.0] = value;
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
            grads: self.grads.iter().map(Tensor::cast).collect(),
        }
    }
}

impl<T: Real> ParamStore<T> {
    /// Read-only values alongside mutable gradients, indexable by [`ParamId`].
    pub fn split_mut(&mut self) -> (Values<'_, T>, Grads<'_, T>) {
        (Values(&self.values), Grads(&mut self.grads))
    }
}

pub struct Values<'a, T>(&'a [Tensor<T>]);

impl<T> std::ops::Index<ParamId> for Values<'_, T> {
    type Output = Tensor<T>;
    fn index(&self, id: ParamId) -> &Tensor<T> {
        &self.0[id.0]
    }
}

pub struct Grads<'a, T>(&'a mut [Tensor<T>]);

impl<T> Grads<'_, T> {
    pub fn get(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.0[id.0]
    }

    pub fn many<const N: usize>(&mut self, ids: [ParamId; N]) -> [&mut Tensor<T>; N] {
        self.0
            .get_disjoint_mut(ids.map(|id| id.0))
            .expect("distinct parameter ids")
    }
}
