//! JSON file formats.
//!
//! Matrices are column-major, `{"n": N, "columns": [[...], ...]}`, with
//! `columns[j][i] = P(next = i | current = j)`. States are numbered from 1
//! in every file and report.

use std::collections::BTreeMap;

use ebsde_core::control::ControlModel;
use ebsde_core::driver::{self, HamiltonianDriver, LinearDriver};
use ebsde_core::{ChainError, Distribution, Driver, TransitionMatrix};
use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub n: usize,
    pub columns: Vec<Vec<f64>>,
}

impl MatrixJson {
    pub fn from_matrix(m: &TransitionMatrix) -> Self {
        MatrixJson {
            n: m.n(),
            columns: m.columns().map(<[f64]>::to_vec).collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<TransitionMatrix, CliError> {
        if self.columns.len() != self.n {
            return Err(CliError::validation(format!(
                "matrix declares n = {} but has {} columns",
                self.n,
                self.columns.len()
            )));
        }
        if let Some(j) = self.columns.iter().position(|c| c.len() != self.n) {
            return Err(CliError::validation(ChainError::NotSquare {
                rows: self.n,
                column: j,
                len: self.columns[j].len(),
            }));
        }
        TransitionMatrix::from_columns(self.columns.clone()).map_err(CliError::validation)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionJson {
    pub weights: Vec<f64>,
}

impl DistributionJson {
    pub fn to_distribution(&self) -> Result<Distribution, CliError> {
        Distribution::new(self.weights.clone()).map_err(CliError::validation)
    }
}

/// Chain input: a single matrix, or per-step kernels with an optional
/// initial law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChainJson {
    Matrix(MatrixJson),
    Steps {
        kernels: Vec<MatrixJson>,
        #[serde(default)]
        initial: Option<DistributionJson>,
    },
}

pub struct ChainInput {
    pub kernels: Vec<TransitionMatrix>,
    pub initial: Option<Distribution>,
}

impl ChainJson {
    pub fn to_chain(&self) -> Result<ChainInput, CliError> {
        match self {
            ChainJson::Matrix(m) => Ok(ChainInput {
                kernels: vec![m.to_matrix()?],
                initial: None,
            }),
            ChainJson::Steps { kernels, initial } => {
                if kernels.is_empty() {
                    return Err(CliError::validation("kernel list is empty"));
                }
                let kernels = kernels
                    .iter()
                    .enumerate()
                    .map(|(t, k)| {
                        k.to_matrix()
                            .map_err(|e| e.context(format!("kernel for step {}", t)))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let initial = initial.as_ref().map(|d| d.to_distribution()).transpose()?;
                Ok(ChainInput { kernels, initial })
            }
        }
    }

    /// The single kernel of a time-homogeneous chain.
    pub fn to_homogeneous(&self) -> Result<TransitionMatrix, CliError> {
        let mut chain = self.to_chain()?;
        if chain.kernels.len() != 1 {
            return Err(CliError::validation("expected a single transition matrix"));
        }
        Ok(chain.kernels.remove(0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlModelJson {
    #[serde(rename = "A")]
    pub a: MatrixJson,
    pub gamma: f64,
    pub actions: Vec<String>,
    pub kernels: BTreeMap<String, MatrixJson>,
    pub cost: BTreeMap<String, Vec<f64>>,
}

impl ControlModelJson {
    pub fn from_model(m: &ControlModel) -> Self {
        let names = m.actions();
        ControlModelJson {
            a: MatrixJson::from_matrix(m.reference()),
            gamma: m.gamma(),
            actions: names.to_vec(),
            kernels: names
                .iter()
                .enumerate()
                .map(|(u, name)| (name.clone(), MatrixJson::from_matrix(m.kernel(u))))
                .collect(),
            cost: names
                .iter()
                .enumerate()
                .map(|(u, name)| (name.clone(), m.cost_vector(u).to_vec()))
                .collect(),
        }
    }

    pub fn to_model(&self) -> Result<ControlModel, CliError> {
        let a = self.a.to_matrix().map_err(|e| e.context("A"))?;
        let mut kernels = Vec::with_capacity(self.actions.len());
        let mut cost = Vec::with_capacity(self.actions.len());
        for name in &self.actions {
            let k = self
                .kernels
                .get(name)
                .ok_or_else(|| CliError::validation(format!("no kernel for action {}", name)))?;
            kernels.push(
                k.to_matrix()
                    .map_err(|e| e.context(format!("kernel of action {}", name)))?,
            );
            cost.push(
                self.cost
                    .get(name)
                    .ok_or_else(|| CliError::validation(format!("no cost for action {}", name)))?
                    .clone(),
            );
        }
        for name in self.kernels.keys().chain(self.cost.keys()) {
            if !self.actions.contains(name) {
                return Err(CliError::validation(format!("unknown action {}", name)));
            }
        }
        ControlModel::new(a, self.gamma, self.actions.clone(), kernels, cost)
            .map_err(CliError::validation)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DriverJson {
    Linear {
        #[serde(rename = "A")]
        a: MatrixJson,
        psi: MatrixJson,
        c: Vec<f64>,
        gamma: f64,
    },
    Hamiltonian {
        model: ControlModelJson,
    },
}

pub enum DriverInput {
    Linear(LinearDriver),
    Hamiltonian(HamiltonianDriver),
}

impl DriverInput {
    pub fn as_driver(&self) -> &dyn Driver {
        match self {
            DriverInput::Linear(d) => d,
            DriverInput::Hamiltonian(d) => d,
        }
    }
}

impl DriverJson {
    pub fn to_driver(&self) -> Result<DriverInput, CliError> {
        match self {
            DriverJson::Linear { a, psi, c, gamma } => {
                let a = a.to_matrix().map_err(|e| e.context("A"))?;
                let psi = psi.to_matrix().map_err(|e| e.context("psi"))?;
                driver::make_linear_driver(a, psi, c.clone(), *gamma)
                    .map(DriverInput::Linear)
                    .map_err(CliError::validation)
            }
            DriverJson::Hamiltonian { model } => {
                let model = model.to_model()?;
                driver::hamiltonian_driver(model)
                    .map(DriverInput::Hamiltonian)
                    .map_err(CliError::validation)
            }
        }
    }
}

/// Terminal values `φ(x)`: a bare array or `{"values": [...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TerminalJson {
    Values(Vec<f64>),
    Object { values: Vec<f64> },
}

impl TerminalJson {
    pub fn values(&self) -> &[f64] {
        match self {
            TerminalJson::Values(v) | TerminalJson::Object { values: v } => v,
        }
    }
}

/// Value table written as `{"1": v₁, "2": v₂, …}` in state order.
#[derive(Clone, Debug, PartialEq)]
pub struct StateTable(pub Vec<f64>);

impl Serialize for StateTable {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (x, v) in self.0.iter().enumerate() {
            map.serialize_entry(&(x + 1).to_string(), v)?;
        }
        map.end()
    }
}

impl From<&[f64]> for StateTable {
    fn from(v: &[f64]) -> Self {
        StateTable(v.to_vec())
    }
}
