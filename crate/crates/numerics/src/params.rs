use std::collections::BTreeMap;

use crate::error::{NumericsError, Result};
use crate::graph::{Gradients, Graph, Var};
use crate::tensor::Tensor;

/// Named trainable parameters, iterated in name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.params.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> Vec<String> {
        self.params.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Places every parameter on `graph` as a trainable leaf.
    pub fn bind(&self, graph: &mut Graph) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|(k, v)| (k.clone(), graph.param(v.clone())))
            .collect();
        Bound { vars }
    }
}

/// Parameter handles on one graph.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    /// Handles for parameters that are already on a graph, e.g. the inputs
    /// of a gradient check.
    pub fn from_vars<I, S>(vars: I) -> Self
    where
        I: IntoIterator<Item = (S, Var)>,
        S: Into<String>,
    {
        Self {
            vars: vars.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| NumericsError::Checkpoint(format!("unknown parameter {name}")))
    }

    /// Adds this pass's gradients into `acc`, scaled by `weight`.
    pub fn accumulate_into(&self, grads: &Gradients, acc: &mut GradMap, weight: f64) {
        for (name, &v) in &self.vars {
            if let Some(g) = grads.get(v) {
                let slot = acc
                    .entry(name.clone())
                    .or_insert_with(|| Tensor::zeros(g.shape()));
                for (a, b) in slot.data_mut().iter_mut().zip(g.data()) {
                    *a += weight * b;
                }
            }
        }
    }
}

pub type GradMap = BTreeMap<String, Tensor>;
