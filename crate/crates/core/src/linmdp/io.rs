use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{tabular_to_linear, LinearMDP};
use crate::error::{Error, Result};

/// Linear MDP on disk; matrices are row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSpec {
    pub num_states: usize,
    pub num_actions: usize,
    pub dim: usize,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub omega: Vec<f64>,
    pub nu0: Vec<f64>,
    pub gamma: f64,
}

/// Tabular shorthand: `P[x][a][x']`, `r[x][a]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularSpec {
    #[serde(rename = "P")]
    pub p: Vec<Vec<Vec<f64>>>,
    pub r: Vec<Vec<f64>>,
    pub nu0: Vec<f64>,
    pub gamma: f64,
}

/// Either accepted MDP file layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MdpFile {
    Linear(LinearSpec),
    Tabular(TabularSpec),
}

impl MdpFile {
    pub fn into_mdp(self) -> Result<LinearMDP> {
        match self {
            MdpFile::Linear(spec) => LinearMDP::from_spec(&spec),
            MdpFile::Tabular(spec) => tabular_to_linear(&spec.p, &spec.r, &spec.nu0, spec.gamma),
        }
    }
}

impl LinearMDP {
    pub fn from_spec(spec: &LinearSpec) -> Result<Self> {
        let pairs = spec.num_states * spec.num_actions;
        if spec.phi.len() != pairs * spec.dim || spec.psi.len() != spec.dim * spec.num_states {
            return Err(Error::DimensionMismatch(format!(
                "phi needs {} entries and psi {} entries, got {} and {}",
                pairs * spec.dim,
                spec.dim * spec.num_states,
                spec.phi.len(),
                spec.psi.len()
            )));
        }
        LinearMDP::new(
            spec.num_states,
            spec.num_actions,
            DMatrix::from_row_slice(pairs, spec.dim, &spec.phi),
            DMatrix::from_row_slice(spec.dim, spec.num_states, &spec.psi),
            DVector::from_column_slice(&spec.omega),
            DVector::from_column_slice(&spec.nu0),
            spec.gamma,
        )
    }

    pub fn to_spec(&self) -> LinearSpec {
        let row_major = |m: &DMatrix<f64>| m.transpose().as_slice().to_vec();
        LinearSpec {
            num_states: self.num_states(),
            num_actions: self.num_actions(),
            dim: self.dim(),
            phi: row_major(self.features()),
            psi: row_major(self.next_state_factor()),
            omega: self.reward_factor().as_slice().to_vec(),
            nu0: self.init_dist().as_slice().to_vec(),
            gamma: self.discount(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<MdpFile>(text)?.into_mdp()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_spec()).expect("spec serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// SHA-256 of the canonical (compact) linear JSON encoding, as lowercase hex.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.to_spec()).expect("spec serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
