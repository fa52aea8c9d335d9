//! FourierNet decoders conditioned through a hypernetwork, the latent vector
//! fields, and the fixed-step RK4 integrator.

use cnf_autodiff::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bank::{Bound, ParameterBank, Partition};
use crate::error::{Error, Result};
use crate::geometry::AdfRule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderConfig {
    pub input_dim: usize,
    /// Number of sinusoidal filter layers.
    pub layers: usize,
    /// Frequencies per filter layer; each yields a sine and a cosine.
    pub filters_per_layer: usize,
    pub hidden_width: usize,
    pub freq_scale: f64,
    /// Spread of the hypernetwork's α-dependent weights relative to the base init.
    pub hyper_scale: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            input_dim: 1,
            layers: 3,
            filters_per_layer: 32,
            hidden_width: 64,
            freq_scale: 16.0,
            hyper_scale: 0.1,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.input_dim != 1 {
            return bad(format!("decoder input_dim must be 1, got {}", self.input_dim));
        }
        if self.layers == 0 || self.filters_per_layer == 0 || self.hidden_width == 0 {
            return bad("decoder layers and widths must be at least 1".into());
        }
        if self.hidden_width != 2 * self.filters_per_layer {
            return bad(format!(
                "hidden_width ({}) must equal 2 * filters_per_layer ({})",
                self.hidden_width, self.filters_per_layer
            ));
        }
        if !(self.freq_scale > 0.0) || !(self.hyper_scale >= 0.0) {
            return bad("freq_scale must be positive and hyper_scale non-negative".into());
        }
        Ok(())
    }

    /// Number of decoder weights produced by the hypernetwork.
    pub fn generated_count(&self) -> usize {
        let h = self.hidden_width;
        (self.layers - 1) * (h * h + h) + h + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PnodeConfig {
    pub hidden_layers: usize,
    pub width: usize,
    /// μ enters as `μ / mu_ref` and `mu_ref / μ`.
    pub mu_ref: f64,
}

impl Default for PnodeConfig {
    fn default() -> Self {
        Self {
            hidden_layers: 3,
            width: 64,
            mu_ref: 50.0,
        }
    }
}

impl PnodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers == 0 || self.width == 0 {
            return Err(Error::InvalidConfig(
                "pnode hidden_layers and width must be at least 1".into(),
            ));
        }
        if !(self.mu_ref > 0.0) {
            return Err(Error::InvalidConfig("pnode mu_ref must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub decoder: DecoderConfig,
    pub pnode: PnodeConfig,
    pub adf: AdfRule,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            latent_dim: 10,
            decoder: DecoderConfig::default(),
            pnode: PnodeConfig::default(),
            adf: AdfRule::REquivalence,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::InvalidConfig("latent_dim must be at least 1".into()));
        }
        self.decoder.validate()?;
        self.pnode.validate()
    }
}

/// Which conditional field a decoder serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Primary,
    Auxiliary,
}

impl Field {
    pub fn decoder_prefix(self) -> &'static str {
        match self {
            Field::Primary => "psi",
            Field::Auxiliary => "xi",
        }
    }

    pub fn pnode_prefix(self) -> &'static str {
        match self {
            Field::Primary => "theta",
            Field::Auxiliary => "theta_aux",
        }
    }
}

/// A decoder whose linear weights come from `gen = α H + c`.
#[derive(Clone)]
pub struct Decoder<'t> {
    freqs: Vec<Var<'t>>,
    hyper_w: Var<'t>,
    hyper_b: Var<'t>,
    hidden: usize,
    latent_dim: usize,
}

impl<'t> Decoder<'t> {
    pub fn bind(bound: &Bound<'t>, cfg: &ModelConfig, field: Field) -> Self {
        let p = field.decoder_prefix();
        Self {
            freqs: (0..cfg.decoder.layers)
                .map(|l| bound.var(&format!("{p}.freq.{l}")))
                .collect(),
            hyper_w: bound.var(&format!("{p}.hyper_w")),
            hyper_b: bound.var(&format!("{p}.hyper_b")),
            hidden: cfg.decoder.hidden_width,
            latent_dim: cfg.latent_dim,
        }
    }

    pub fn layers(&self) -> usize {
        self.freqs.len()
    }

    /// `[sin(x ω_l), cos(x ω_l)]` for a column of coordinates.
    pub fn filters(&self, x: Var<'t>) -> Vec<Var<'t>> {
        self.freqs
            .iter()
            .map(|w| {
                let arg = x.matmul(*w);
                arg.sin().concat_cols(arg.cos())
            })
            .collect()
    }

    /// Hypernetwork output for one latent row.
    pub fn generate(&self, alpha: Var<'t>) -> Result<Var<'t>> {
        let (r, c) = alpha.shape();
        if r != 1 || c != self.latent_dim {
            return Err(Error::Dimension {
                what: "latent state",
                expected: self.latent_dim,
                got: r * c,
            });
        }
        Ok(alpha.matmul(self.hyper_w) + self.hyper_b)
    }

    /// Multiplicative filter network on precomputed filters, one output row per point.
    pub fn apply(&self, generated: Var<'t>, filters: &[Var<'t>]) -> Var<'t> {
        let h = self.hidden;
        let n = filters[0].shape().0;
        let mut z = filters[0];
        let mut at = 0;
        for f in &filters[1..] {
            let w = generated.slice_cols(at, h * h).reshape(h, h);
            let b = generated.slice_cols(at + h * h, h);
            at += h * h + h;
            z = (z.matmul(w) + b.broadcast_rows(n)) * *f;
        }
        let w_out = generated.slice_cols(at, h).reshape(h, 1);
        let b_out = generated.slice_cols(at + h, 1);
        z.matmul(w_out) + b_out.broadcast_rows(n)
    }

    pub fn forward(&self, x: Var<'t>, alpha: Var<'t>) -> Result<Var<'t>> {
        let gen = self.generate(alpha)?;
        Ok(self.apply(gen, &self.filters(x)))
    }
}

/// tanh MLP `(α, t, μ) ↦ dα/dt`, evaluated for a batch of μ rows.
#[derive(Clone)]
pub struct VectorField<'t> {
    layers: Vec<(Var<'t>, Var<'t>)>,
    latent_dim: usize,
    mu_ref: f64,
}

impl<'t> VectorField<'t> {
    pub fn bind(bound: &Bound<'t>, cfg: &ModelConfig, field: Field) -> Self {
        let p = field.pnode_prefix();
        Self {
            layers: (0..=cfg.pnode.hidden_layers)
                .map(|k| (bound.var(&format!("{p}.l{k}.w")), bound.var(&format!("{p}.l{k}.b"))))
                .collect(),
            latent_dim: cfg.latent_dim,
            mu_ref: cfg.pnode.mu_ref,
        }
    }

    pub fn features(&self, t: f64, mus: &[f64]) -> Tensor {
        let mut data = Vec::with_capacity(3 * mus.len());
        for &mu in mus {
            data.extend_from_slice(&[t, mu / self.mu_ref, self.mu_ref / mu]);
        }
        Tensor::new(mus.len(), 3, data)
    }

    pub fn eval(&self, alpha: Var<'t>, t: f64, mus: &[f64]) -> Result<Var<'t>> {
        let (r, c) = alpha.shape();
        if r != mus.len() || c != self.latent_dim {
            return Err(Error::Dimension {
                what: "latent state batch",
                expected: mus.len() * self.latent_dim,
                got: r * c,
            });
        }
        let tape = alpha.tape();
        let mut z = alpha.concat_cols(tape.constant(self.features(t, mus)));
        let last = self.layers.len() - 1;
        for (k, (w, b)) in self.layers.iter().enumerate() {
            z = z.matmul(*w) + b.broadcast_rows(r);
            if k < last {
                z = z.tanh();
            }
        }
        Ok(z)
    }
}

/// State arithmetic needed by the integrator.
pub trait OdeState: Clone {
    fn add_scaled(&self, a: f64, k: &Self) -> Self;
    fn rk4_update(&self, h: f64, k: [&Self; 4]) -> Self;
    fn all_finite(&self) -> bool;
}

impl OdeState for Vec<f64> {
    fn add_scaled(&self, a: f64, k: &Self) -> Self {
        self.iter().zip(k).map(|(y, k)| y + a * k).collect()
    }

    fn rk4_update(&self, h: f64, k: [&Self; 4]) -> Self {
        (0..self.len())
            .map(|i| self[i] + h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]))
            .collect()
    }

    fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

impl<'t> OdeState for Var<'t> {
    fn add_scaled(&self, a: f64, k: &Self) -> Self {
        *self + k.scale(a)
    }

    fn rk4_update(&self, h: f64, k: [&Self; 4]) -> Self {
        let incr = *k[0] + k[1].scale(2.0) + k[2].scale(2.0) + *k[3];
        *self + incr.scale(h / 6.0)
    }

    fn all_finite(&self) -> bool {
        self.value().is_finite()
    }
}

/// Classical RK4 over the nodes of `times`. Returns the states at every node
/// and the vector field evaluated there (the first stage of each step, plus
/// one extra evaluation at the last node).
pub fn rk4<S: OdeState>(
    initial: S,
    times: &[f64],
    mut f: impl FnMut(&S, f64) -> Result<S>,
) -> Result<(Vec<S>, Vec<S>)> {
    check_time_grid(times)?;
    let mut states = Vec::with_capacity(times.len());
    let mut rates = Vec::with_capacity(times.len());
    let mut y = initial;
    for step in 0..times.len() - 1 {
        let (t, h) = (times[step], times[step + 1] - times[step]);
        let k1 = f(&y, t)?;
        let k2 = f(&y.add_scaled(h / 2.0, &k1), t + h / 2.0)?;
        let k3 = f(&y.add_scaled(h / 2.0, &k2), t + h / 2.0)?;
        let k4 = f(&y.add_scaled(h, &k3), t + h)?;
        let next = y.rk4_update(h, [&k1, &k2, &k3, &k4]);
        if !next.all_finite() {
            return Err(Error::NonFiniteState { step: step + 1 });
        }
        states.push(y);
        rates.push(k1);
        y = next;
    }
    let last = f(&y, times[times.len() - 1])?;
    states.push(y);
    rates.push(last);
    Ok((states, rates))
}

fn check_time_grid(times: &[f64]) -> Result<()> {
    if times.len() < 2 || times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidConfig(
            "time grid must start at 0 with at least two strictly increasing nodes".into(),
        ));
    }
    Ok(())
}

/// `n + 1` equally spaced nodes on `[0, t_max]`.
pub fn time_grid(t_max: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|j| crate::oracle::uniform_node(0.0, t_max, n, j)).collect()
}

/// Latent states of a batch of μ on a tape, one `nμ × d_α` node per time node.
pub struct TapeTrajectory<'t> {
    pub times: Vec<f64>,
    pub mus: Vec<f64>,
    pub states: Vec<Var<'t>>,
    pub rates: Vec<Var<'t>>,
}

impl<'t> TapeTrajectory<'t> {
    /// Row `m` of the state at node `j`, as `1 × d_α`.
    pub fn state(&self, j: usize, m: usize) -> Var<'t> {
        row_of(self.states[j], m)
    }

    pub fn rate(&self, j: usize, m: usize) -> Var<'t> {
        row_of(self.rates[j], m)
    }

    pub fn node_of(&self, t: f64) -> Result<usize> {
        self.times.iter().position(|&s| s == t).ok_or(Error::TimeOffGrid { t })
    }
}

fn row_of<'t>(v: Var<'t>, m: usize) -> Var<'t> {
    if v.shape().0 == 1 {
        return v;
    }
    v.t().slice_cols(m, 1).t()
}

/// Integrate a batch of initial latents (one row per μ) on a tape.
pub fn integrate_on_tape<'t>(
    field: &VectorField<'t>,
    initial: Var<'t>,
    mus: &[f64],
    times: &[f64],
) -> Result<TapeTrajectory<'t>> {
    let (states, rates) = rk4(initial, times, |y, t| field.eval(*y, t, mus))?;
    Ok(TapeTrajectory {
        times: times.to_vec(),
        mus: mus.to_vec(),
        states,
        rates,
    })
}

/// Detached latent trajectory for one μ.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTrajectory {
    pub mu: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub rates: Vec<Vec<f64>>,
}

impl LatentTrajectory {
    pub fn at(&self, t: f64) -> Result<&[f64]> {
        let j = self
            .times
            .iter()
            .position(|&s| s == t)
            .ok_or(Error::TimeOffGrid { t })?;
        Ok(&self.states[j])
    }
}

/// Integrate one field's latent dynamics for a single μ.
pub fn integrate_latent(
    bank: &ParameterBank,
    cfg: &ModelConfig,
    field: Field,
    initial: &[f64],
    mu: f64,
    times: &[f64],
) -> Result<LatentTrajectory> {
    if initial.len() != cfg.latent_dim {
        return Err(Error::Dimension {
            what: "initial latent",
            expected: cfg.latent_dim,
            got: initial.len(),
        });
    }
    if !(mu > 0.0) {
        return Err(Error::NonPositiveMu(mu));
    }
    let tape = Tape::new();
    let bound = Bound::bind(&tape, bank, None);
    let vf = VectorField::bind(&bound, cfg, field);
    let init = tape.constant(Tensor::row(initial.to_vec()));
    let traj = integrate_on_tape(&vf, init, &[mu], times)?;
    Ok(LatentTrajectory {
        mu,
        times: times.to_vec(),
        states: traj.states.iter().map(|s| s.value().into_data()).collect(),
        rates: traj.rates.iter().map(|s| s.value().into_data()).collect(),
    })
}

/// `D(x, α)` for a single point.
pub fn decoder_forward(bank: &ParameterBank, cfg: &ModelConfig, field: Field, x: f64, alpha: &[f64]) -> Result<f64> {
    let tape = Tape::new();
    let bound = Bound::bind(&tape, bank, None);
    let dec = Decoder::bind(&bound, cfg, field);
    let xv = tape.constant(Tensor::scalar(x));
    let av = tape.constant(Tensor::new(1, alpha.len(), alpha.to_vec()));
    Ok(dec.forward(xv, av)?.item())
}

/// `f(α, t, μ)` for a single latent.
pub fn pnode_rhs(
    bank: &ParameterBank,
    cfg: &ModelConfig,
    field: Field,
    alpha: &[f64],
    t: f64,
    mu: f64,
) -> Result<Vec<f64>> {
    let tape = Tape::new();
    let bound = Bound::bind(&tape, bank, None);
    let vf = VectorField::bind(&bound, cfg, field);
    let av = tape.constant(Tensor::new(1, alpha.len(), alpha.to_vec()));
    Ok(vf.eval(av, t, &[mu])?.value().into_data())
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..=1.0) * bound).collect();
    Tensor::new(rows, cols, data)
}

/// Per-entry init bound of the generated decoder weights at α = 0.
fn generated_bounds(cfg: &DecoderConfig) -> Vec<f64> {
    let h = cfg.hidden_width as f64;
    let w = (6.0 / h).sqrt();
    let b = (1.0 / h).sqrt();
    let mut out = Vec::with_capacity(cfg.generated_count());
    for _ in 1..cfg.layers {
        out.extend(std::iter::repeat_n(w, cfg.hidden_width * cfg.hidden_width));
        out.extend(std::iter::repeat_n(b, cfg.hidden_width));
    }
    out.extend(std::iter::repeat_n(b, cfg.hidden_width));
    out.push(b);
    out
}

fn push_decoder(bank: &mut ParameterBank, rng: &mut ChaCha8Rng, cfg: &ModelConfig, field: Field) {
    let p = field.decoder_prefix();
    let part = match field {
        Field::Primary => Partition::Psi,
        Field::Auxiliary => Partition::Xi,
    };
    let dc = &cfg.decoder;
    let per_layer = dc.freq_scale / (dc.layers as f64).sqrt();
    for l in 0..dc.layers {
        bank.push_section(
            format!("{p}.freq.{l}"),
            part,
            uniform(rng, 1, dc.filters_per_layer, per_layer),
        );
    }
    let bounds = generated_bounds(dc);
    let d = cfg.latent_dim;
    let g = bounds.len();
    let mut hw = Tensor::zeros(d, g);
    for r in 0..d {
        for (c, b) in bounds.iter().enumerate() {
            hw.data_mut()[r * g + c] = rng.gen_range(-1.0..=1.0) * b * dc.hyper_scale;
        }
    }
    let hb = Tensor::row(bounds.iter().map(|b| rng.gen_range(-1.0..=1.0) * b).collect());
    bank.push_section(format!("{p}.hyper_w"), part, hw);
    bank.push_section(format!("{p}.hyper_b"), part, hb);
}

fn push_pnode(bank: &mut ParameterBank, rng: &mut ChaCha8Rng, cfg: &ModelConfig, field: Field) {
    let p = field.pnode_prefix();
    let mut fan_in = cfg.latent_dim + 3;
    for k in 0..=cfg.pnode.hidden_layers {
        let out = if k == cfg.pnode.hidden_layers {
            cfg.latent_dim
        } else {
            cfg.pnode.width
        };
        let bound = 1.0 / (fan_in as f64).sqrt();
        bank.push_section(
            format!("{p}.l{k}.w"),
            Partition::Theta,
            uniform(rng, fan_in, out, bound),
        );
        bank.push_section(format!("{p}.l{k}.b"), Partition::Theta, uniform(rng, 1, out, bound));
        fan_in = out;
    }
}

/// Deterministic initial bank: both decoders, both vector fields, and a zero
/// auxiliary initial latent for every training μ.
pub fn init_parameters(cfg: &ModelConfig, mu_train: &[f64], seed: u64) -> Result<ParameterBank> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bank = ParameterBank::new(cfg.latent_dim);
    push_decoder(&mut bank, &mut rng, cfg, Field::Primary);
    push_decoder(&mut bank, &mut rng, cfg, Field::Auxiliary);
    push_pnode(&mut bank, &mut rng, cfg, Field::Primary);
    push_pnode(&mut bank, &mut rng, cfg, Field::Auxiliary);
    for &mu in mu_train {
        if !(mu > 0.0) {
            return Err(Error::NonPositiveMu(mu));
        }
        bank.add_beta0(mu, Tensor::zeros(1, cfg.latent_dim))?;
    }
    Ok(bank)
}
