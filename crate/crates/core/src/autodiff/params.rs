use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use super::{Matrix, Real};
use crate::error::{Error, Result};

/// Index of a parameter inside its [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named weights of one model, each with a gradient slot of equal shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Matrix<T>>,
    grads: Vec<Matrix<T>>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix<T>) -> ParamId {
        let name = name.into();
        debug_assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        self.grads.push(Matrix::zeros(value.rows(), value.cols()));
        self.values.push(value);
        self.names.push(name);
        ParamId(self.values.len() - 1)
    }

    /// Weight matrix with entries drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut dyn RngCore,
    ) -> ParamId {
        let bound = 1.0 / num_traits::Float::sqrt(fan_in.max(1) as f64);
        let data = (0..rows * cols)
            .map(|_| T::of(rng.random_range(-bound..=bound)))
            .collect();
        let value = Matrix::from_vec(rows, cols, data).expect("length matches shape");
        self.add(name, value)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar weights.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Matrix<T> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix<T> {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Matrix<T> {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Matrix<T> {
        &mut self.grads[id.0]
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Mutable access to each value together with its gradient.
    pub fn values_and_grads_mut(&mut self) -> impl Iterator<Item = (&mut Matrix<T>, &Matrix<T>)> {
        self.values.iter_mut().zip(&self.grads)
    }

    /// Overwrites the values (not gradients) from another store with the
    /// same layout.
    pub fn copy_values_from(&mut self, other: &ParamStore<T>) {
        assert_eq!(self.names, other.names, "parameter layouts differ");
        self.values.clone_from(&other.values);
    }

    /// Copies values from a store that must have the same names and shapes,
    /// for instance one read back from a checkpoint.
    pub fn load_values(&mut self, other: &ParamStore<T>) -> Result<()> {
        if self.names != other.names {
            return Err(Error::InvalidConfig(
                "parameter names do not match the model layout".into(),
            ));
        }
        for (name, (mine, theirs)) in self.names.iter().zip(self.values.iter().zip(&other.values)) {
            if mine.shape() != theirs.shape() {
                return Err(Error::InvalidConfig(alloc::format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    theirs.shape(),
                    mine.shape()
                )));
            }
        }
        self.values.clone_from(&other.values);
        Ok(())
    }

    /// Same names and values in another precision; gradients are zeroed.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        let values: Vec<Matrix<U>> = self.values.iter().map(Matrix::cast).collect();
        ParamStore {
            names: self.names.clone(),
            grads: values.iter().map(|v| Matrix::zeros(v.rows(), v.cols())).collect(),
            values,
        }
    }
}
