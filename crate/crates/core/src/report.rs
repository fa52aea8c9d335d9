//! Error reports over space-time grids, split into the training horizon and
//! the forecast region, plus absolute-error heatmaps.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use cnf_autodiff::{Tape, Tensor};

use crate::bank::{Bound, ParameterBank};
use crate::error::{Error, Result};
use crate::model::{Filters, Model, Needs, SliceLatents};
use crate::networks::{integrate_on_tape, Decoder, Field, VectorField};
use crate::oracle::{exact_solution, uniform_node};

/// Training time nodes up to `t_final`, continued with the same step up to
/// `t_max`; the last step is shortened to land on `t_max`.
pub fn extended_time_grid(t_final: f64, nt: usize, t_max: f64) -> Vec<f64> {
    let mut times: Vec<f64> = (0..=nt).map(|j| uniform_node(0.0, t_final, nt, j)).collect();
    let dt = t_final / nt as f64;
    let mut k = 1;
    loop {
        let t = t_final + k as f64 * dt;
        if t >= t_max - 1e-9 * dt {
            break;
        }
        times.push(t);
        k += 1;
    }
    if t_max > t_final {
        times.push(t_max);
    }
    times
}

/// `û` on every (t, x) node for one μ, rows per time node.
pub fn predict_grid(model: &Model, bank: &ParameterBank, mu: f64, xs: &[f64], times: &[f64]) -> Result<Vec<f64>> {
    if !(mu > 0.0) {
        return Err(Error::NonPositiveMu(mu));
    }
    let tape = Tape::new();
    let bound = Bound::bind(&tape, bank, None);
    let dec = Decoder::bind(&bound, &model.config, Field::Primary);
    let vf = VectorField::bind(&bound, &model.config, Field::Primary);
    let alpha0 = tape.constant(Tensor::zeros(1, model.config.latent_dim));
    let traj = integrate_on_tape(&vf, alpha0, &[mu], times)?;
    let filt = Filters::new(&dec, tape.constant(Tensor::column(xs.to_vec())))?;
    let mut out = Vec::with_capacity(xs.len() * times.len());
    for (j, &t) in times.iter().enumerate() {
        let consts = model.constants(xs, t, mu);
        let latents = SliceLatents {
            alpha: traj.state(j, 0),
            rate: None,
            beta: None,
        };
        let f = model.slice_fields((&dec, &filt), None, latents, &consts, Needs::VALUE)?;
        out.extend_from_slice(f.u.value().data());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRow {
    pub mu: f64,
    pub in_training_set: bool,
    /// Relative L2 over `t ≤ T`.
    pub rel_l2_horizon: f64,
    /// Relative L2 over `T < t ≤ t_max`; `None` when `t_max = T`.
    pub rel_l2_forecast: Option<f64>,
}

/// Absolute error on one grid, rows per time node.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub mu: f64,
    pub xs: Vec<f64>,
    pub times: Vec<f64>,
    pub abs_error: Vec<f64>,
}

impl Heatmap {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,t,abs_error\n");
        for (j, t) in self.times.iter().enumerate() {
            for (i, x) in self.xs.iter().enumerate() {
                let _ = writeln!(s, "{x:e},{t:e},{:e}", self.abs_error[j * self.xs.len() + i]);
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub t_final: f64,
    pub t_max: f64,
    pub rows: Vec<EvaluationRow>,
    pub heatmaps: Vec<Heatmap>,
}

impl EvaluationReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("mu,in_training_set,rel_l2_t_le_T,rel_l2_t_gt_T\n");
        for r in &self.rows {
            let forecast = r.rel_l2_forecast.map_or(String::new(), |v| format!("{v:e}"));
            let _ = writeln!(
                s,
                "{:e},{},{:e},{}",
                r.mu, r.in_training_set, r.rel_l2_horizon, forecast
            );
        }
        s
    }

    pub fn row(&self, mu: f64) -> Option<&EvaluationRow> {
        self.rows.iter().find(|r| r.mu == mu)
    }
}

fn split_rel_l2(pred: &[f64], truth: &[f64], nx: usize, times: &[f64], t_final: f64) -> (f64, Option<f64>) {
    let (mut e_in, mut r_in, mut e_out, mut r_out) = (0.0, 0.0, 0.0, 0.0);
    let mut has_out = false;
    for (j, &t) in times.iter().enumerate() {
        for i in 0..nx {
            let k = j * nx + i;
            let (e, r) = ((pred[k] - truth[k]).powi(2), truth[k] * truth[k]);
            if t <= t_final {
                e_in += e;
                r_in += r;
            } else {
                has_out = true;
                e_out += e;
                r_out += r;
            }
        }
    }
    let rel = |e: f64, r: f64| if r > 0.0 { (e / r).sqrt() } else { e.sqrt() };
    (rel(e_in, r_in), has_out.then(|| rel(e_out, r_out)))
}

/// Compare `predict(μ)` with the closed form for every μ on an `nx`-node
/// grid over `times`. μ values are sorted and deduplicated.
pub fn evaluate_with(
    mus: &[f64],
    mu_train: &[f64],
    xs: &[f64],
    times: &[f64],
    t_final: f64,
    mut predict: impl FnMut(f64) -> Result<Vec<f64>>,
) -> Result<EvaluationReport> {
    if mus.is_empty() {
        return Err(Error::EmptyMuList);
    }
    if let Some(&mu) = mus.iter().find(|&&m| !(m > 0.0)) {
        return Err(Error::NonPositiveMu(mu));
    }
    let ordered: BTreeSet<u64> = mus.iter().map(|m| m.to_bits()).collect();
    let mut sorted: Vec<f64> = ordered.into_iter().map(f64::from_bits).collect();
    sorted.sort_by(f64::total_cmp);
    let mut rows = Vec::new();
    let mut heatmaps = Vec::new();
    for mu in sorted {
        let truth: Vec<f64> = times
            .iter()
            .flat_map(|&t| xs.iter().map(move |&x| exact_solution(x, t, mu)))
            .collect();
        let pred = predict(mu)?;
        if pred.len() != truth.len() {
            return Err(Error::ShapeMismatch(
                (times.len(), xs.len()),
                (pred.len() / xs.len().max(1), xs.len()),
            ));
        }
        let (h, f) = split_rel_l2(&pred, &truth, xs.len(), times, t_final);
        rows.push(EvaluationRow {
            mu,
            in_training_set: mu_train.contains(&mu),
            rel_l2_horizon: h,
            rel_l2_forecast: f,
        });
        heatmaps.push(Heatmap {
            mu,
            xs: xs.to_vec(),
            times: times.to_vec(),
            abs_error: pred.iter().zip(&truth).map(|(p, t)| (p - t).abs()).collect(),
        });
    }
    Ok(EvaluationReport {
        t_final,
        t_max: *times.last().unwrap_or(&t_final),
        rows,
        heatmaps,
    })
}

/// Evaluate a model on the training grid extended to `t_max`.
pub fn evaluate_model(
    model: &Model,
    bank: &ParameterBank,
    mus: &[f64],
    mu_train: &[f64],
    nx: usize,
    nt: usize,
    t_max: f64,
) -> Result<EvaluationReport> {
    let d = &model.domain;
    if t_max < d.t_final {
        return Err(Error::InvalidConfig(format!(
            "t_max ({t_max}) must be at least T ({})",
            d.t_final
        )));
    }
    if nx < 2 || nt < 1 {
        return Err(Error::InvalidConfig("evaluation grid needs nx >= 2 and nt >= 1".into()));
    }
    let xs: Vec<f64> = (0..nx).map(|i| uniform_node(d.x_lo, d.x_hi, nx - 1, i)).collect();
    let times = extended_time_grid(d.t_final, nt, t_max);
    evaluate_with(mus, mu_train, &xs, &times, d.t_final, |mu| {
        predict_grid(model, bank, mu, &xs, &times)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extended_grid_keeps_training_nodes() {
        let g = extended_time_grid(1.0, 50, 1.25);
        assert_eq!(g.len(), 51 + 13);
        assert_eq!(g[50], 1.0);
        assert_eq!(*g.last().unwrap(), 1.25);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        let g = extended_time_grid(1.0, 100, 1.25);
        assert_eq!(g.len(), 126);
        assert_eq!(extended_time_grid(1.0, 4, 1.0).len(), 5);
    }

    #[test]
    fn exact_against_itself_is_zero() {
        let xs: Vec<f64> = (0..9).map(|i| i as f64 * 0.25).collect();
        let times = extended_time_grid(1.0, 10, 1.25);
        let mus = [15.0, 20.0, 25.0, 110.0, 20.0];
        let r = evaluate_with(&mus, &[20.0], &xs, &times, 1.0, |mu| {
            Ok(times
                .iter()
                .flat_map(|&t| xs.iter().map(move |&x| exact_solution(x, t, mu)))
                .collect())
        })
        .unwrap();
        assert_eq!(r.rows.len(), 4);
        assert!(r
            .rows
            .iter()
            .all(|row| row.rel_l2_horizon == 0.0 && row.rel_l2_forecast == Some(0.0)));
        assert!(r.row(20.0).unwrap().in_training_set);
        assert!(!r.row(110.0).unwrap().in_training_set);
        let h = &r.heatmaps[0];
        assert_eq!(h.abs_error.len(), 9 * times.len());
        assert_eq!(h.to_csv().lines().count(), 1 + 9 * times.len());
    }

    #[test]
    fn regions_are_split_at_the_horizon() {
        let xs = [0.5, 1.0];
        let times = [0.0, 1.0, 1.5];
        let r = evaluate_with(&[20.0], &[], &xs, &times, 1.0, |mu| {
            let mut v: Vec<f64> = times
                .iter()
                .flat_map(|&t| xs.iter().map(move |&x| exact_solution(x, t, mu)))
                .collect();
            v[4] *= 1.5;
            v[5] *= 1.5;
            Ok(v)
        })
        .unwrap();
        assert_eq!(r.rows[0].rel_l2_horizon, 0.0);
        assert!((r.rows[0].rel_l2_forecast.unwrap() - 0.5).abs() < 1e-14);
        assert!(evaluate_with(&[-1.0], &[], &xs, &times, 1.0, |_| Ok(vec![])).is_err());
    }
}
