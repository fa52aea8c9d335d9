//! Flat storage for every trainable array, partitioned into the primary
//! decoder's hypernetwork (ψ), the auxiliary decoder's hypernetwork (ξ), the
//! latent vector fields (θ), and the per-μ auxiliary initial latents (β₀).

use std::collections::HashMap;

use cnf_autodiff::{Gradients, Tape, Tensor, Var};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Partition {
    Psi,
    Xi,
    Theta,
    Beta0,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Psi => "psi",
            Partition::Xi => "xi",
            Partition::Theta => "theta",
            Partition::Beta0 => "beta0",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "psi" => Some(Partition::Psi),
            "xi" => Some(Partition::Xi),
            "theta" => Some(Partition::Theta),
            "beta0" => Some(Partition::Beta0),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub partition: Partition,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl Section {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterBank {
    sections: Vec<Section>,
    values: Vec<f64>,
    /// μ owning each `beta0.{k}` section, in section order.
    beta0_mus: Vec<f64>,
    latent_dim: usize,
}

impl ParameterBank {
    pub fn new(latent_dim: usize) -> Self {
        Self {
            sections: Vec::new(),
            values: Vec::new(),
            beta0_mus: Vec::new(),
            latent_dim,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    /// The fixed initial latent of the primary field.
    pub fn alpha0(&self) -> Tensor {
        Tensor::zeros(1, self.latent_dim)
    }

    pub fn push_section(&mut self, name: impl Into<String>, partition: Partition, data: Tensor) {
        let name = name.into();
        assert!(self.find(&name).is_none(), "duplicate section {name}");
        self.sections.push(Section {
            name,
            partition,
            rows: data.rows(),
            cols: data.cols(),
            offset: self.values.len(),
        });
        self.values.extend_from_slice(data.data());
    }

    pub fn sections(&self) -> &[Section] {
        &self.sections
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn section(&self, name: &str) -> &Section {
        self.find(name)
            .unwrap_or_else(|| panic!("no parameter section named {name}"))
    }

    pub fn tensor(&self, name: &str) -> Tensor {
        let s = self.section(name);
        Tensor::new(s.rows, s.cols, self.values[s.range()].to_vec())
    }

    pub fn slice(&self, name: &str) -> &[f64] {
        &self.values[self.section(name).range()]
    }

    pub fn slice_mut(&mut self, name: &str) -> &mut [f64] {
        let r = self.section(name).range();
        &mut self.values[r]
    }

    pub fn partition_values(&self, partition: Partition) -> Vec<f64> {
        self.sections
            .iter()
            .filter(|s| s.partition == partition)
            .flat_map(|s| self.values[s.range()].iter().copied())
            .collect()
    }

    pub fn beta0_mus(&self) -> &[f64] {
        &self.beta0_mus
    }

    pub fn beta0_name(index: usize) -> String {
        format!("beta0.{index}")
    }

    pub fn beta0_index(&self, mu: f64) -> Option<usize> {
        self.beta0_mus.iter().position(|&m| m == mu)
    }

    pub fn beta0(&self, mu: f64) -> Result<Tensor> {
        let k = self.beta0_index(mu).ok_or(Error::UnknownMu(mu))?;
        Ok(self.tensor(&Self::beta0_name(k)))
    }

    pub fn add_beta0(&mut self, mu: f64, init: Tensor) -> Result<usize> {
        if init.len() != self.latent_dim {
            return Err(Error::Dimension {
                what: "initial auxiliary latent",
                expected: self.latent_dim,
                got: init.len(),
            });
        }
        if let Some(k) = self.beta0_index(mu) {
            return Ok(k);
        }
        let k = self.beta0_mus.len();
        self.push_section(Self::beta0_name(k), Partition::Beta0, init.reshaped(1, self.latent_dim));
        self.beta0_mus.push(mu);
        Ok(k)
    }

    /// Ensure `mu` owns an auxiliary initial latent, copying the one of the
    /// nearest stored μ when it is new. Returns its index.
    pub fn ensure_beta0(&mut self, mu: f64) -> Result<usize> {
        if let Some(k) = self.beta0_index(mu) {
            return Ok(k);
        }
        let init = match self.nearest_beta0_mu(mu) {
            Some(near) => self.beta0(near)?,
            None => Tensor::zeros(1, self.latent_dim),
        };
        self.add_beta0(mu, init)
    }

    /// Stored μ closest to `mu`; ties go to the smaller μ.
    pub fn nearest_beta0_mu(&self, mu: f64) -> Option<f64> {
        self.beta0_mus
            .iter()
            .copied()
            .fold(None, |best: Option<f64>, m| match best {
                Some(b) if (b - mu).abs() < (m - mu).abs() => Some(b),
                Some(b) if (b - mu).abs() == (m - mu).abs() && b < m => Some(b),
                _ => Some(m),
            })
    }

    /// Rebuild from serialized parts.
    pub fn from_parts(
        latent_dim: usize,
        sections: Vec<Section>,
        values: Vec<f64>,
        beta0_mus: Vec<f64>,
    ) -> Result<Self> {
        let mut offset = 0;
        for s in &sections {
            if s.offset != offset {
                return Err(Error::MalformedCheckpoint(format!("section {} misaligned", s.name)));
            }
            offset += s.len();
        }
        if offset != values.len() {
            return Err(Error::MalformedCheckpoint("section sizes do not cover values".into()));
        }
        let n_beta = sections.iter().filter(|s| s.partition == Partition::Beta0).count();
        if n_beta != beta0_mus.len() {
            return Err(Error::MalformedCheckpoint("beta0 sections and mu list disagree".into()));
        }
        Ok(Self {
            sections,
            values,
            beta0_mus,
            latent_dim,
        })
    }
}

/// Which entries of the flat parameter vector an optimizer may touch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainableMask {
    pub flags: Vec<bool>,
}

impl TrainableMask {
    pub fn from_sections(bank: &ParameterBank, keep: impl Fn(&Section) -> bool) -> Self {
        let mut flags = vec![false; bank.len()];
        for s in bank.sections() {
            if keep(s) {
                flags[s.range()].iter_mut().for_each(|f| *f = true);
            }
        }
        Self { flags }
    }

    pub fn is_section_trainable(&self, s: &Section) -> bool {
        !s.is_empty() && self.flags[s.offset]
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

/// Every bank section placed on a tape: trainable sections as parameters,
/// the rest as constants.
pub struct Bound<'t> {
    vars: Vec<Var<'t>>,
    trainable: Vec<bool>,
    index: HashMap<String, usize>,
}

impl<'t> Bound<'t> {
    pub fn bind(tape: &'t Tape, bank: &ParameterBank, mask: Option<&TrainableMask>) -> Self {
        let mut vars = Vec::with_capacity(bank.sections().len());
        let mut trainable = Vec::with_capacity(vars.capacity());
        let mut index = HashMap::new();
        for (k, s) in bank.sections().iter().enumerate() {
            let value = Tensor::new(s.rows, s.cols, bank.values()[s.range()].to_vec());
            let train = mask.is_some_and(|m| m.is_section_trainable(s));
            vars.push(if train { tape.param(value) } else { tape.constant(value) });
            trainable.push(train);
            index.insert(s.name.clone(), k);
        }
        Self { vars, trainable, index }
    }

    pub fn var(&self, name: &str) -> Var<'t> {
        let k = self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("no parameter section named {name}"));
        self.vars[*k]
    }

    /// Gradient laid out like the bank's flat vector; zero for constants.
    pub fn flat_grad(&self, bank: &ParameterBank, grads: &Gradients) -> Vec<f64> {
        let mut out = vec![0.0; bank.len()];
        for (k, s) in bank.sections().iter().enumerate() {
            if !self.trainable[k] {
                continue;
            }
            if let Some(g) = grads.get(self.vars[k]) {
                out[s.range()].copy_from_slice(g.data());
            }
        }
        out
    }
}
