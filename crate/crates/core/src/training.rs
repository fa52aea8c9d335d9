//! Collocation sets, the data / derivative / residual losses, Adam, and the
//! two training scenarios.

use std::fmt::Write as _;

use cnf_autodiff::{AdError, Tape, Tensor, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bank::{Bound, ParameterBank, Partition, TrainableMask};
use crate::error::{Error, Result};
use crate::geometry::DomainSpec;
use crate::model::{burgers_residual, Filters, Model, Needs, SliceLatents};
use crate::networks::{integrate_on_tape, Decoder, Field, VectorField};
use crate::oracle::{exact_solution, uniform_node, GridSolution};

/// Grid product 𝒳 × 𝒯 × 𝒟. The interior set drops both walls and `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationSet {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub mus: Vec<f64>,
}

impl CollocationSet {
    pub fn nx(&self) -> usize {
        self.x.len()
    }

    /// Number of time intervals.
    pub fn nt(&self) -> usize {
        self.t.len() - 1
    }

    /// |𝒞|
    pub fn n(&self) -> usize {
        self.x.len() * self.t.len() * self.mus.len()
    }

    /// |𝒞₀|
    pub fn n0(&self) -> usize {
        (self.x.len() - 2) * (self.t.len() - 1) * self.mus.len()
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.mus.iter().flat_map(move |&mu| {
            self.t
                .iter()
                .flat_map(move |&t| self.x.iter().map(move |&x| (x, t, mu)))
        })
    }

    pub fn interior_points(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let nx = self.x.len();
        self.mus.iter().flat_map(move |&mu| {
            self.t[1..]
                .iter()
                .flat_map(move |&t| self.x[1..nx - 1].iter().map(move |&x| (x, t, mu)))
        })
    }

    /// Every (μ index, time index) slice.
    pub fn slices(&self) -> Vec<(usize, usize)> {
        (0..self.mus.len())
            .flat_map(|m| (0..self.t.len()).map(move |j| (m, j)))
            .collect()
    }
}

/// Uniform grids with `nx` nodes and `nt` intervals.
pub fn build_collocation(domain: &DomainSpec, nx: usize, nt: usize, mus: &[f64]) -> Result<CollocationSet> {
    domain.validate()?;
    if nx < 2 || nt < 2 {
        return Err(Error::InvalidConfig(format!(
            "grid needs nx, nt >= 2, got nx={nx}, nt={nt}"
        )));
    }
    if mus.is_empty() {
        return Err(Error::EmptyMuList);
    }
    if let Some(&mu) = mus.iter().find(|&&m| !(m > 0.0)) {
        return Err(Error::NonPositiveMu(mu));
    }
    Ok(CollocationSet {
        x: (0..nx)
            .map(|i| uniform_node(domain.x_lo, domain.x_hi, nx - 1, i))
            .collect(),
        t: (0..=nt).map(|j| uniform_node(0.0, domain.t_final, nt, j)).collect(),
        mus: mus.to_vec(),
    })
}

/// Reference values on a collocation set, one grid per μ.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub grids: Vec<GridSolution>,
}

impl Targets {
    pub fn exact(c: &CollocationSet) -> Self {
        let grids = c
            .mus
            .iter()
            .map(|&mu| GridSolution {
                nx: c.nx(),
                nt: c.nt(),
                x_lo: c.x[0],
                x_hi: c.x[c.nx() - 1],
                t_final: c.t[c.nt()],
                mu,
                provenance: crate::oracle::Provenance::Exact,
                values: c
                    .t
                    .iter()
                    .flat_map(|&t| c.x.iter().map(move |&x| exact_solution(x, t, mu)))
                    .collect(),
            })
            .collect();
        Self { grids }
    }

    pub fn check(&self, c: &CollocationSet) -> Result<()> {
        if self.grids.len() != c.mus.len() {
            return Err(Error::MissingTargets {
                expected: c.mus.len(),
                got: self.grids.len(),
            });
        }
        for g in &self.grids {
            if g.values.len() != c.nx() * c.t.len() {
                return Err(Error::MissingTargets {
                    expected: c.n(),
                    got: self.grids.iter().map(|g| g.values.len()).sum(),
                });
            }
        }
        Ok(())
    }

    fn column(&self, m: usize, j: usize) -> Tensor {
        Tensor::column(self.grids[m].row(j).to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub data: f64,
    pub deriv: f64,
    pub pde: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            data: 1.0,
            deriv: 1.0,
            pde: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Data pretraining of every partition on `L_data + L_deriv`.
    Pretrain,
    /// Frozen decoders, `L_pde + L_deriv` on one μ.
    Finetune,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_ft_lr")]
    pub finetune_learning_rate: f64,
    #[serde(default = "default_ft_epochs")]
    pub finetune_epochs: usize,
    /// Time slices per optimizer step; 0 means full batch.
    #[serde(default)]
    pub batch_slices: usize,
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_divergence")]
    pub divergence_threshold: f64,
    /// Stop once the mean relative L2 error against the closed form reaches this.
    #[serde(default)]
    pub target_rel_l2: Option<f64>,
    /// Evaluate the residual loss during pretraining for monitoring.
    #[serde(default = "default_true")]
    pub track_pde: bool,
}

fn default_lr() -> f64 {
    1e-3
}
fn default_ft_lr() -> f64 {
    1e-4
}
fn default_ft_epochs() -> usize {
    500
}
fn default_divergence() -> f64 {
    1e6
}
fn default_true() -> bool {
    true
}

impl TrainConfig {
    pub fn new(epochs: usize) -> Self {
        Self {
            epochs,
            learning_rate: default_lr(),
            finetune_learning_rate: default_ft_lr(),
            finetune_epochs: default_ft_epochs(),
            batch_slices: 0,
            weights: LossWeights::default(),
            seed: 0,
            divergence_threshold: default_divergence(),
            target_rel_l2: None,
            track_pde: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.weights;
        if !(self.learning_rate >= 0.0) || !(self.finetune_learning_rate >= 0.0) {
            return Err(Error::InvalidConfig("learning rates must be non-negative".into()));
        }
        if !(w.data >= 0.0 && w.deriv >= 0.0 && w.pde >= 0.0) {
            return Err(Error::InvalidConfig("loss weights must be non-negative".into()));
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(Error::InvalidConfig("divergence_threshold must be positive".into()));
        }
        Ok(())
    }
}

/// Adam with bias correction; untouched entries of the mask keep their
/// moments at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl Adam {
    pub fn new(lr: f64, len: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    /// Grow the moment vectors when the bank gains sections.
    pub fn resize(&mut self, len: usize) {
        self.m.resize(len, 0.0);
        self.v.resize(len, 0.0);
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64], mask: &TrainableMask) {
        self.step += 1;
        let b1t = 1.0 - self.beta1.powi(self.step as i32);
        let b2t = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            if !mask.flags[i] {
                continue;
            }
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Terms requested from a loss pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub weights: LossWeights,
    pub use_data: bool,
    pub use_deriv: bool,
    pub use_pde: bool,
    /// Evaluate `L_pde` even when it is not part of the objective.
    pub track_pde: bool,
}

impl Objective {
    pub fn for_scenario(s: Scenario, weights: LossWeights, track_pde: bool) -> Self {
        match s {
            Scenario::Pretrain => Self {
                weights,
                use_data: true,
                use_deriv: true,
                use_pde: false,
                track_pde,
            },
            Scenario::Finetune => Self {
                weights,
                use_data: false,
                use_deriv: true,
                use_pde: true,
                track_pde: true,
            },
        }
    }

    fn needs(&self, j: usize) -> Needs {
        let interior = j > 0;
        let pde = interior && (self.use_pde || self.track_pde);
        let deriv = interior && (self.use_deriv || pde);
        Needs {
            u_x: deriv,
            u_t: pde,
            v: deriv,
        }
    }
}

/// Losses and error metrics from one pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PassOutput {
    pub total: f64,
    pub data: f64,
    pub deriv: f64,
    pub pde: f64,
    /// Mean of `(û − u_ex)²` over the evaluated points.
    pub exact_mse: f64,
    /// `Σ(û − u_ex)² / Σ u_ex²`.
    pub exact_rel: f64,
    /// Mean over μ of the relative L2 error against the closed form.
    pub mean_rel_l2: f64,
    pub per_mu_rel_l2: Vec<f64>,
    pub grad: Option<Vec<f64>>,
}

/// One forward pass over `slices` (all of them when `None`); with a mask the
/// objective gradient is returned as well.
pub fn loss_pass(
    model: &Model,
    bank: &ParameterBank,
    colloc: &CollocationSet,
    targets: Option<&Targets>,
    objective: &Objective,
    mask: Option<&TrainableMask>,
    slices: Option<&[(usize, usize)]>,
) -> Result<PassOutput> {
    if colloc.nx() < 3 {
        return Err(Error::EmptyInterior);
    }
    if objective.use_data {
        targets.ok_or(Error::MissingTargets {
            expected: colloc.n(),
            got: 0,
        })?;
    }
    if let Some(t) = targets {
        t.check(colloc)?;
    }
    let all;
    let slices = match slices {
        Some(s) => s,
        None => {
            all = colloc.slices();
            &all
        }
    };

    let tape = Tape::new();
    let bound = Bound::bind(&tape, bank, mask);
    let cfg = &model.config;
    let dec = Decoder::bind(&bound, cfg, Field::Primary);
    let aux = Decoder::bind(&bound, cfg, Field::Auxiliary);
    let vf = VectorField::bind(&bound, cfg, Field::Primary);
    let vfa = VectorField::bind(&bound, cfg, Field::Auxiliary);
    let nmu = colloc.mus.len();

    let alpha0 = tape.constant(Tensor::zeros(nmu, cfg.latent_dim));
    let mut beta0: Option<Var<'_>> = None;
    for &mu in &colloc.mus {
        let k = bank.beta0_index(mu).ok_or(Error::UnknownMu(mu))?;
        let col = bound.var(&ParameterBank::beta0_name(k)).t();
        beta0 = Some(match beta0 {
            None => col,
            Some(b) => b.concat_cols(col),
        });
    }
    let beta0 = beta0.ok_or(Error::EmptyMuList)?.t();
    let needs_beta = slices.iter().any(|&(_, j)| objective.needs(j).v);
    let alpha = integrate_on_tape(&vf, alpha0, &colloc.mus, &colloc.t)?;
    let beta = if needs_beta {
        Some(integrate_on_tape(&vfa, beta0, &colloc.mus, &colloc.t)?)
    } else {
        None
    };

    let xs = tape.constant(Tensor::column(colloc.x.clone()));
    let filt = Filters::new(&dec, xs)?;
    let afilt = if needs_beta {
        Some(Filters::new(&aux, xs)?)
    } else {
        None
    };

    let nx = colloc.nx();
    let mut data_terms = Vec::new();
    let mut deriv_terms = Vec::new();
    let mut pde_terms = Vec::new();
    let (mut n_all, mut n_int) = (0usize, 0usize);
    let mut err_sq = vec![0.0; nmu];
    let mut ref_sq = vec![0.0; nmu];
    for &(m, j) in slices {
        let (t, mu) = (colloc.t[j], colloc.mus[m]);
        let needs = objective.needs(j);
        let consts = model.constants(&colloc.x, t, mu);
        let latents = SliceLatents {
            alpha: alpha.state(j, m),
            rate: needs.u_t.then(|| alpha.rate(j, m)),
            beta: beta.as_ref().filter(|_| needs.v).map(|b| b.state(j, m)),
        };
        let f = model.slice_fields(
            (&dec, &filt),
            afilt.as_ref().map(|a| (&aux, a)),
            latents,
            &consts,
            needs,
        )?;
        n_all += nx;
        let u_val = f.u.value();
        for (i, &x) in colloc.x.iter().enumerate() {
            let ue = exact_solution(x, t, mu);
            err_sq[m] += (u_val.data()[i] - ue).powi(2);
            ref_sq[m] += ue * ue;
        }
        if let Some(tg) = targets {
            let diff = f.u - tape.constant(tg.column(m, j));
            data_terms.push(diff.square().sum());
        }
        if j == 0 {
            continue;
        }
        n_int += nx - 2;
        let mask_col = tape.constant(consts.mask());
        if let (Some(u_x), Some(v)) = (f.u_x, f.v) {
            deriv_terms.push(((u_x - v) * mask_col).square().sum());
        }
        if let (Some(u_x), Some(u_t), Some(v_x)) = (f.u_x, f.u_t, f.v_x) {
            let r = burgers_residual(f.u, u_t, u_x, v_x, 1.0 / mu);
            pde_terms.push((r * mask_col).square().sum());
        }
    }

    fn sum_terms(terms: Vec<Var<'_>>) -> Option<Var<'_>> {
        terms.into_iter().reduce(|a, b| a + b)
    }
    let data = sum_terms(data_terms);
    let deriv = sum_terms(deriv_terms);
    let pde = sum_terms(pde_terms);
    let mean = |v: Option<Var<'_>>, n: usize| v.map_or(0.0, |v| if n == 0 { 0.0 } else { v.item() / n as f64 });
    let w = objective.weights;
    let mut parts = Vec::new();
    for (on, v, weight, n) in [
        (objective.use_data, data, w.data, n_all),
        (objective.use_deriv, deriv, w.deriv, n_int),
        (objective.use_pde, pde, w.pde, n_int),
    ] {
        if let (true, Some(v)) = (on, v) {
            if n > 0 && weight != 0.0 {
                parts.push(v.scale(weight / n as f64));
            }
        }
    }
    let total = sum_terms(parts);
    if !objective.use_data && (objective.use_deriv || objective.use_pde) && n_int == 0 {
        return Err(Error::EmptyInterior);
    }
    let total_val = total.map_or(0.0, |t| t.item());
    let grad = match (mask, total) {
        (Some(mask), Some(t)) if mask.count() > 0 => {
            let g = tape.backward(&[(t, None)])?;
            Some(bound.flat_grad(bank, &g))
        }
        (Some(_), _) => Some(vec![0.0; bank.len()]),
        _ => None,
    };
    let per_mu: Vec<f64> = err_sq
        .iter()
        .zip(&ref_sq)
        .map(|(e, r)| if *r > 0.0 { (e / r).sqrt() } else { 0.0 })
        .collect();
    let err_total: f64 = err_sq.iter().sum();
    let ref_total: f64 = ref_sq.iter().sum();
    Ok(PassOutput {
        total: total_val,
        data: mean(data, n_all),
        deriv: mean(deriv, n_int),
        pde: mean(pde, n_int),
        exact_mse: if n_all > 0 { err_total / n_all as f64 } else { 0.0 },
        exact_rel: if ref_total > 0.0 { err_total / ref_total } else { 0.0 },
        mean_rel_l2: per_mu.iter().sum::<f64>() / per_mu.len() as f64,
        per_mu_rel_l2: per_mu,
        grad,
    })
}

fn only(objective: Objective, data: bool, deriv: bool, pde: bool) -> Objective {
    Objective {
        use_data: data,
        use_deriv: deriv,
        use_pde: pde,
        track_pde: pde,
        ..objective
    }
}

fn unit_objective() -> Objective {
    Objective::for_scenario(Scenario::Pretrain, LossWeights::default(), false)
}

/// `(1/N) Σ_𝒞 (u − û)²`
pub fn loss_data(model: &Model, bank: &ParameterBank, colloc: &CollocationSet, targets: &Targets) -> Result<f64> {
    Ok(loss_pass(
        model,
        bank,
        colloc,
        Some(targets),
        &only(unit_objective(), true, false, false),
        None,
        None,
    )?
    .data)
}

/// `(1/N₀) Σ_𝒞₀ r²`
pub fn loss_pde(model: &Model, bank: &ParameterBank, colloc: &CollocationSet) -> Result<f64> {
    if colloc.n0() == 0 {
        return Err(Error::EmptyInterior);
    }
    let out = loss_pass(
        model,
        bank,
        colloc,
        None,
        &only(unit_objective(), false, false, true),
        None,
        None,
    )?;
    if !out.pde.is_finite() {
        return Err(Error::NonFiniteTerm {
            term: "pde loss",
            x: f64::NAN,
            t: f64::NAN,
            mu: f64::NAN,
        });
    }
    Ok(out.pde)
}

/// `(1/N₀) Σ_𝒞₀ (∂ₓû − ṽ)²`
pub fn loss_deriv(model: &Model, bank: &ParameterBank, colloc: &CollocationSet) -> Result<f64> {
    if colloc.n0() == 0 {
        return Err(Error::EmptyInterior);
    }
    Ok(loss_pass(
        model,
        bank,
        colloc,
        None,
        &only(unit_objective(), false, true, false),
        None,
        None,
    )?
    .deriv)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub total: f64,
    pub data: f64,
    pub pde: f64,
    pub deriv: f64,
    pub exact_mse: f64,
    pub exact_rel: f64,
    pub mean_rel_l2: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossHistory {
    pub rows: Vec<HistoryRow>,
}

impl LossHistory {
    pub const HEADER: &'static str = "epoch,total,l_data,l_pde,l_deriv,exact_mse,exact_rel,mean_rel_l2";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.epoch, r.total, r.data, r.pde, r.deriv, r.exact_mse, r.exact_rel, r.mean_rel_l2
            );
        }
        s
    }

    pub fn first(&self) -> Option<&HistoryRow> {
        self.rows.first()
    }

    pub fn last(&self) -> Option<&HistoryRow> {
        self.rows.last()
    }
}

/// Result of a training run. On divergence the bank holds the last finite
/// state and `halted` carries the reason.
#[derive(Debug)]
pub struct TrainRun {
    pub history: LossHistory,
    pub halted: Option<Error>,
    /// Epoch counter after the run.
    pub epoch: usize,
}

impl TrainRun {
    pub fn into_result(self) -> Result<LossHistory> {
        match self.halted {
            Some(e) => Err(e),
            None => Ok(self.history),
        }
    }
}

/// Everything a training loop mutates.
pub struct TrainState<'a> {
    pub bank: &'a mut ParameterBank,
    pub optimizer: &'a mut Adam,
    /// Epochs completed before this run.
    pub epoch: usize,
}

fn run_epochs(
    model: &Model,
    state: TrainState<'_>,
    colloc: &CollocationSet,
    targets: Option<&Targets>,
    objective: &Objective,
    mask: &TrainableMask,
    epochs: usize,
    cfg: &TrainConfig,
) -> Result<TrainRun> {
    let TrainState {
        bank,
        optimizer,
        epoch: start,
    } = state;
    optimizer.resize(bank.len());
    let mut history = LossHistory::default();
    let all = colloc.slices();
    let row = |epoch: usize, o: &PassOutput| HistoryRow {
        epoch,
        total: o.total,
        data: o.data,
        pde: o.pde,
        deriv: o.deriv,
        exact_mse: o.exact_mse,
        exact_rel: o.exact_rel,
        mean_rel_l2: o.mean_rel_l2,
    };
    let diverged = |epoch: usize, loss: f64| Error::Diverged { epoch, loss };
    // Blow-ups inside a pass halt the run like a diverging loss; other errors propagate.
    let classify = |r: Result<PassOutput>, epoch: usize| -> Result<std::result::Result<PassOutput, Error>> {
        match r {
            Ok(o) => Ok(Ok(o)),
            Err(Error::NonFiniteState { .. }) | Err(Error::Autodiff(AdError::NonFinite { .. })) => {
                Ok(Err(diverged(epoch, f64::NAN)))
            }
            Err(e) => Err(e),
        }
    };
    for epoch in start..start + epochs {
        let batches: Vec<Vec<(usize, usize)>> = if cfg.batch_slices == 0 || cfg.batch_slices >= all.len() {
            vec![all.clone()]
        } else {
            let mut order = all.clone();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64)));
            order.chunks(cfg.batch_slices).map(|c| c.to_vec()).collect()
        };
        let monitor = if batches.len() == 1 {
            None
        } else {
            match classify(loss_pass(model, bank, colloc, targets, objective, None, None), epoch)? {
                Ok(o) => Some(o),
                Err(h) => {
                    return Ok(TrainRun {
                        history,
                        halted: Some(h),
                        epoch,
                    })
                }
            }
        };
        for (b, batch) in batches.iter().enumerate() {
            let pass = loss_pass(model, bank, colloc, targets, objective, Some(mask), Some(batch));
            let out = match classify(pass, epoch)? {
                Ok(o) => o,
                Err(h) => {
                    return Ok(TrainRun {
                        history,
                        halted: Some(h),
                        epoch,
                    })
                }
            };
            if !out.total.is_finite() || out.total > cfg.divergence_threshold {
                return Ok(TrainRun {
                    history,
                    halted: Some(diverged(epoch, out.total)),
                    epoch,
                });
            }
            if b == 0 {
                let rec = monitor.as_ref().unwrap_or(&out);
                history.rows.push(row(epoch, rec));
                if let Some(target) = cfg.target_rel_l2 {
                    if rec.mean_rel_l2 <= target {
                        return Ok(TrainRun {
                            history,
                            halted: None,
                            epoch,
                        });
                    }
                }
            }
            let grad = out.grad.expect("mask given");
            optimizer.update(bank.values_mut(), &grad, mask);
        }
    }
    Ok(TrainRun {
        history,
        halted: None,
        epoch: start + epochs,
    })
}

/// Scenario (a): every partition trained on `L_data + λ L_deriv` over μ_train.
pub fn train_scenario_a(
    model: &Model,
    state: TrainState<'_>,
    cfg: &TrainConfig,
    colloc: &CollocationSet,
    targets: &Targets,
) -> Result<TrainRun> {
    cfg.validate()?;
    targets.check(colloc)?;
    for &mu in &colloc.mus {
        state.bank.beta0_index(mu).ok_or(Error::UnknownMu(mu))?;
    }
    let mask = TrainableMask::from_sections(state.bank, |_| true);
    let objective = Objective::for_scenario(Scenario::Pretrain, cfg.weights, cfg.track_pde);
    run_epochs(model, state, colloc, Some(targets), &objective, &mask, cfg.epochs, cfg)
}

/// Trainable set of scenario (b): both vector fields and the target's β₀.
pub fn finetune_mask(bank: &ParameterBank, mu: f64) -> Result<TrainableMask> {
    let k = bank.beta0_index(mu).ok_or(Error::UnknownMu(mu))?;
    let own = ParameterBank::beta0_name(k);
    Ok(TrainableMask::from_sections(bank, |s| {
        s.partition == Partition::Theta || s.name == own
    }))
}

/// Scenario (b): decoders frozen, `L_pde + λ L_deriv` on the target μ only.
/// A new μ gets the auxiliary initial latent of the nearest stored μ.
pub fn finetune_scenario_b(
    model: &Model,
    state: TrainState<'_>,
    cfg: &TrainConfig,
    nx: usize,
    nt: usize,
    mu_target: f64,
) -> Result<TrainRun> {
    cfg.validate()?;
    if !(mu_target > 0.0) {
        return Err(Error::NonPositiveMu(mu_target));
    }
    state.bank.ensure_beta0(mu_target)?;
    let colloc = build_collocation(&model.domain, nx, nt, &[mu_target])?;
    if colloc.n0() == 0 {
        return Err(Error::EmptyInterior);
    }
    let mask = finetune_mask(state.bank, mu_target)?;
    let objective = Objective::for_scenario(Scenario::Finetune, cfg.weights, true);
    run_epochs(model, state, &colloc, None, &objective, &mask, cfg.finetune_epochs, cfg)
}
