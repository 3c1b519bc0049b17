use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::tape::{Adjoints, Tape, Var};
use super::Matrix;
use crate::error::{Error, Result};

/// Whether a tensor is a connection weight or an additive offset. Only
/// weights are subject to the L1 penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamRole {
    Weight,
    Bias,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub role: ParamRole,
    pub value: Matrix,
}

/// Named learnable tensors, in registration order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParameterStore {
    entries: IndexMap<String, Parameter>,
}

/// Gradients keyed by parameter name.
pub type Gradients = IndexMap<String, Matrix>;

/// Tape handles of every parameter of a store.
#[derive(Debug, Clone, Default)]
pub struct ParamVars {
    vars: IndexMap<String, Var>,
}

impl ParamVars {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    /// Points `name` at another tape value, e.g. a probe for gradient checks.
    pub fn replace(&mut self, name: &str, var: Var) -> Result<()> {
        let slot = self
            .vars
            .get_mut(name)
            .ok_or_else(|| Error::MissingParameter(name.to_string()))?;
        *slot = var;
        Ok(())
    }

    /// Collects the adjoint of every parameter (zeros where none flowed).
    pub fn gradients(&self, store: &ParameterStore, adjoints: &mut Adjoints) -> Gradients {
        self.vars
            .iter()
            .map(|(name, &v)| {
                let g = adjoints.take(v).unwrap_or_else(|| {
                    let p = &store.entries[name].value;
                    Matrix::zeros(p.rows(), p.cols())
                });
                (name.clone(), g)
            })
            .collect()
    }
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, role: ParamRole, value: Matrix) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::config(format!("duplicate parameter `{name}`")));
        }
        self.entries.insert(name, Parameter { role, value });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Parameter> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Parameter> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Parameter)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Parameter)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar entries.
    pub fn scalar_count(&self) -> usize {
        self.entries.values().map(|p| p.value.len()).sum()
    }

    /// Sets every entry of every tensor to `value`.
    pub fn fill(&mut self, value: f64) {
        for p in self.entries.values_mut() {
            p.value.as_mut_slice().fill(value);
        }
    }

    /// Registers every parameter as a differentiable tape input.
    pub fn to_tape(&self, tape: &mut Tape) -> ParamVars {
        ParamVars {
            vars: self
                .entries
                .iter()
                .map(|(name, p)| (name.clone(), tape.leaf(p.value.clone())))
                .collect(),
        }
    }

    /// Tape handles of the weight matrices (biases excluded).
    pub fn weight_vars(&self, vars: &ParamVars) -> Vec<Var> {
        self.entries
            .iter()
            .filter(|(_, p)| p.role == ParamRole::Weight)
            .filter_map(|(name, _)| vars.vars.get(name).copied())
            .collect()
    }
}

/// `lambda · Σ|w|` over all weight matrices of `params`; biases excluded.
pub fn l1_penalty(params: &ParameterStore, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::config(format!(
            "L1 strength must be non-negative, got {lambda}"
        )));
    }
    let total: f64 = params
        .iter()
        .filter(|(_, p)| p.role == ParamRole::Weight)
        .flat_map(|(_, p)| p.value.as_slice())
        .map(|v| v.abs())
        .sum();
    Ok(lambda * total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_penalty_examples() {
        let mut store = ParameterStore::new();
        store
            .insert(
                "w",
                ParamRole::Weight,
                Matrix::from_vec(1, 3, vec![1.0, -2.0, 3.0]).unwrap(),
            )
            .unwrap();
        store
            .insert("b", ParamRole::Bias, Matrix::filled(1, 2, 100.0))
            .unwrap();
        assert!((l1_penalty(&store, 0.1).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(l1_penalty(&store, 0.0).unwrap(), 0.0);
        assert!(l1_penalty(&store, -0.5).is_err());
        store.fill(0.0);
        assert_eq!(l1_penalty(&store, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn duplicate_and_missing_names() {
        let mut store = ParameterStore::new();
        store.insert("a", ParamRole::Bias, Matrix::zeros(1, 1)).unwrap();
        assert!(store.insert("a", ParamRole::Bias, Matrix::zeros(1, 1)).is_err());
        assert!(matches!(store.get("zzz"), Err(Error::MissingParameter(_))));
    }
}
