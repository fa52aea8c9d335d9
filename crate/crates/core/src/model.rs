//! The constrained field `û = g + φ D`, the auxiliary field ṽ, their
//! derivatives, and the Burgers residual.

use std::ops::{Add, Mul, Sub};

use cnf_autodiff::{Tape, Tensor, Var};

use crate::bank::{Bound, ParameterBank};
use crate::error::{Error, Result};
use crate::geometry::{Adf, BoundaryExtension, DomainSpec};
use crate::networks::{Decoder, Field, LatentTrajectory, ModelConfig};

/// `r = u_t + u u_x − v_x / μ`, shared by the network path and the analytic oracle.
pub fn burgers_residual<T>(u: T, u_t: T, u_x: T, v_x: T, inv_mu: f64) -> T
where
    T: Copy + Add<Output = T> + Sub<Output = T> + Mul<Output = T> + Mul<f64, Output = T>,
{
    u_t + u * u_x - v_x * inv_mu
}

/// Every quantity the losses need at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldEvaluation {
    pub x: f64,
    pub t: f64,
    pub mu: f64,
    pub u: f64,
    pub u_x: f64,
    pub u_t: f64,
    pub v: f64,
    pub v_x: f64,
    pub residual: f64,
}

/// Distance function, extension and their derivatives on a column of x at fixed (t, μ).
/// Derivatives are zero where they are undefined; `interior` flags the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceConstants {
    pub phi: Tensor,
    pub phi_x: Tensor,
    pub phi_t: Tensor,
    pub g: Tensor,
    pub g_x: Tensor,
    pub interior: Vec<bool>,
}

impl SliceConstants {
    pub fn new(adf: &Adf, ext: &BoundaryExtension, xs: &[f64], t: f64, mu: f64) -> Self {
        let n = xs.len();
        let (mut phi, mut phi_x, mut phi_t) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut interior = vec![false; n];
        for (i, &x) in xs.iter().enumerate() {
            phi[i] = adf.eval(x, t);
            if let Ok((gx, gt)) = adf.grad(x, t) {
                phi_x[i] = gx;
                phi_t[i] = gt;
                interior[i] = true;
            }
        }
        Self {
            phi: Tensor::column(phi),
            phi_x: Tensor::column(phi_x),
            phi_t: Tensor::column(phi_t),
            g: Tensor::column(xs.iter().map(|&x| ext.eval(x, t, mu)).collect()),
            g_x: Tensor::column(xs.iter().map(|&x| ext.grad_x(x, t, mu)).collect()),
            interior,
        }
    }

    pub fn mask(&self) -> Tensor {
        Tensor::column(self.interior.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
    }
}

/// Filters of one decoder on a column of x, with their x-derivatives.
pub struct Filters<'t> {
    pub values: Vec<Var<'t>>,
    pub dx: Vec<Var<'t>>,
}

impl<'t> Filters<'t> {
    pub fn new(dec: &Decoder<'t>, x: Var<'t>) -> Result<Self> {
        let values = dec.filters(x);
        let ones = x.tape().constant(Tensor::ones(x.shape().0, 1));
        let dx = x.tape().jvp(&[(x, ones)], &values)?;
        Ok(Self { values, dx })
    }
}

/// Latent inputs for one (t, μ) slice.
#[derive(Clone, Copy)]
pub struct SliceLatents<'t> {
    pub alpha: Var<'t>,
    /// `f_θ(α, t, μ)`; needed for `u_t`.
    pub rate: Option<Var<'t>>,
    /// Auxiliary latent; needed for `v`.
    pub beta: Option<Var<'t>>,
}

/// Columns of field values over one slice of x.
pub struct SliceFields<'t> {
    pub u: Var<'t>,
    pub u_x: Option<Var<'t>>,
    pub u_t: Option<Var<'t>>,
    pub v: Option<Var<'t>>,
    pub v_x: Option<Var<'t>>,
}

/// What to compute for a slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Needs {
    pub u_x: bool,
    pub u_t: bool,
    pub v: bool,
}

impl Needs {
    pub const VALUE: Needs = Needs {
        u_x: false,
        u_t: false,
        v: false,
    };
    pub const ALL: Needs = Needs {
        u_x: true,
        u_t: true,
        v: true,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub domain: DomainSpec,
    pub adf: Adf,
    pub extension: BoundaryExtension,
}

impl Model {
    pub fn new(config: ModelConfig, domain: DomainSpec) -> Result<Self> {
        config.validate()?;
        domain.validate()?;
        Ok(Self {
            adf: Adf::new(&domain, config.adf),
            extension: BoundaryExtension,
            config,
            domain,
        })
    }

    pub fn constants(&self, xs: &[f64], t: f64, mu: f64) -> SliceConstants {
        SliceConstants::new(&self.adf, &self.extension, xs, t, mu)
    }

    /// Assemble û (and optionally its derivatives and ṽ) on one slice.
    /// Derivative rows where `consts.interior` is false carry no meaning.
    pub fn slice_fields<'t>(
        &self,
        primary: (&Decoder<'t>, &Filters<'t>),
        auxiliary: Option<(&Decoder<'t>, &Filters<'t>)>,
        latents: SliceLatents<'t>,
        consts: &SliceConstants,
        needs: Needs,
    ) -> Result<SliceFields<'t>> {
        let (dec, filt) = primary;
        let tape = latents.alpha.tape();
        let start = tape.len();
        let gen = dec.generate(latents.alpha)?;
        let d = dec.apply(gen, &filt.values);
        let phi = tape.constant(consts.phi.clone());
        let g = tape.constant(consts.g.clone());
        let u = g + phi * d;

        let u_x = if needs.u_x {
            let seeds: Vec<_> = filt.values.iter().copied().zip(filt.dx.iter().copied()).collect();
            let d_x = tape.jvp_from(start, &seeds, &[d])?[0];
            let g_x = tape.constant(consts.g_x.clone());
            let phi_x = tape.constant(consts.phi_x.clone());
            Some(g_x + phi_x * d + phi * d_x)
        } else {
            None
        };

        let u_t = if needs.u_t {
            let rate = latents
                .rate
                .ok_or(Error::InvalidConfig("u_t needs the latent rate".into()))?;
            let d_a = tape.jvp_from(start, &[(latents.alpha, rate)], &[d])?[0];
            let phi_t = tape.constant(consts.phi_t.clone());
            Some(phi_t * d + phi * d_a)
        } else {
            None
        };

        let (v, v_x) = if needs.v {
            let (aux, afilt) = auxiliary.ok_or(Error::InvalidConfig("v needs the auxiliary decoder".into()))?;
            let beta = latents
                .beta
                .ok_or(Error::InvalidConfig("v needs the auxiliary latent".into()))?;
            let astart = tape.len();
            let agen = aux.generate(beta)?;
            let v = aux.apply(agen, &afilt.values);
            let seeds: Vec<_> = afilt.values.iter().copied().zip(afilt.dx.iter().copied()).collect();
            let v_x = tape.jvp_from(astart, &seeds, &[v])?[0];
            (Some(v), Some(v_x))
        } else {
            (None, None)
        };

        Ok(SliceFields { u, u_x, u_t, v, v_x })
    }

    /// All fields at one point from detached latent values.
    fn point(
        &self,
        bank: &ParameterBank,
        x: f64,
        t: f64,
        mu: f64,
        alpha: &[f64],
        rate: Option<&[f64]>,
        beta: Option<&[f64]>,
        needs: Needs,
    ) -> Result<(SliceConstants, [Option<f64>; 5])> {
        if !(mu > 0.0) {
            return Err(Error::NonPositiveMu(mu));
        }
        let tape = Tape::new();
        let bound = Bound::bind(&tape, bank, None);
        let xv = tape.constant(Tensor::scalar(x));
        let dec = Decoder::bind(&bound, &self.config, Field::Primary);
        let aux = Decoder::bind(&bound, &self.config, Field::Auxiliary);
        let filt = Filters::new(&dec, xv)?;
        let afilt = if needs.v { Some(Filters::new(&aux, xv)?) } else { None };
        let row = |v: &[f64]| tape.constant(Tensor::new(1, v.len(), v.to_vec()));
        let latents = SliceLatents {
            alpha: row(alpha),
            rate: rate.map(row),
            beta: beta.map(row),
        };
        let consts = self.constants(&[x], t, mu);
        let f = self.slice_fields(
            (&dec, &filt),
            afilt.as_ref().map(|a| (&aux, a)),
            latents,
            &consts,
            needs,
        )?;
        let item = |v: Option<Var<'_>>| v.map(|v| v.item());
        Ok((
            consts,
            [Some(f.u.item()), item(f.u_x), item(f.u_t), item(f.v), item(f.v_x)],
        ))
    }

    /// `û(x, t; μ)` with α read from a trajectory node.
    pub fn u_hat(&self, bank: &ParameterBank, x: f64, t: f64, mu: f64, traj: &LatentTrajectory) -> Result<f64> {
        let alpha = traj.at(t)?;
        let (_, v) = self.point(bank, x, t, mu, alpha, None, None, Needs::VALUE)?;
        Ok(v[0].unwrap_or_default())
    }

    /// `∂ₜû = ∂ₜφ D + φ (∂_α D · f)` at an interior point.
    pub fn u_hat_time_derivative(
        &self,
        bank: &ParameterBank,
        x: f64,
        t: f64,
        mu: f64,
        traj: &LatentTrajectory,
    ) -> Result<f64> {
        self.adf.grad(x, t)?;
        let j = node(traj, t)?;
        let needs = Needs {
            u_t: true,
            ..Needs::VALUE
        };
        let (_, v) = self.point(bank, x, t, mu, &traj.states[j], Some(&traj.rates[j]), None, needs)?;
        Ok(v[2].unwrap_or_default())
    }

    /// `ṽ(x, t; μ) = D_ξ(x, β)`, not wrapped by the distance function.
    pub fn v_tilde(&self, bank: &ParameterBank, x: f64, t: f64, beta_traj: &LatentTrajectory) -> Result<(f64, f64)> {
        let tape = Tape::new();
        let bound = Bound::bind(&tape, bank, None);
        let aux = Decoder::bind(&bound, &self.config, Field::Auxiliary);
        let xv = tape.constant(Tensor::scalar(x));
        let filt = Filters::new(&aux, xv)?;
        let b = beta_traj.at(t)?;
        let beta = tape.constant(Tensor::new(1, b.len(), b.to_vec()));
        let start = tape.len();
        let v = aux.apply(aux.generate(beta)?, &filt.values);
        let seeds: Vec<_> = filt.values.iter().copied().zip(filt.dx.iter().copied()).collect();
        let v_x = tape.jvp_from(start, &seeds, &[v])?[0];
        Ok((v.item(), v_x.item()))
    }

    /// Every field and the residual at an interior point.
    pub fn evaluate_point(
        &self,
        bank: &ParameterBank,
        x: f64,
        t: f64,
        mu: f64,
        alpha_traj: &LatentTrajectory,
        beta_traj: &LatentTrajectory,
    ) -> Result<FieldEvaluation> {
        self.adf.grad(x, t)?;
        let j = node(alpha_traj, t)?;
        let jb = node(beta_traj, t)?;
        let (_, v) = self.point(
            bank,
            x,
            t,
            mu,
            &alpha_traj.states[j],
            Some(&alpha_traj.rates[j]),
            Some(&beta_traj.states[jb]),
            Needs::ALL,
        )?;
        let [u, u_x, u_t, vv, v_x] = v.map(|o| o.unwrap_or(f64::NAN));
        let residual = burgers_residual(u, u_t, u_x, v_x, 1.0 / mu);
        for (term, val) in [
            ("u", u),
            ("u_x", u_x),
            ("u_t", u_t),
            ("v", vv),
            ("v_x", v_x),
            ("residual", residual),
        ] {
            if !val.is_finite() {
                return Err(Error::NonFiniteTerm { term, x, t, mu });
            }
        }
        Ok(FieldEvaluation {
            x,
            t,
            mu,
            u,
            u_x,
            u_t,
            v: vv,
            v_x,
            residual,
        })
    }

    pub fn pde_residual(
        &self,
        bank: &ParameterBank,
        x: f64,
        t: f64,
        mu: f64,
        alpha_traj: &LatentTrajectory,
        beta_traj: &LatentTrajectory,
    ) -> Result<f64> {
        Ok(self.evaluate_point(bank, x, t, mu, alpha_traj, beta_traj)?.residual)
    }
}

fn node(traj: &LatentTrajectory, t: f64) -> Result<usize> {
    traj.times.iter().position(|&s| s == t).ok_or(Error::TimeOffGrid { t })
}
