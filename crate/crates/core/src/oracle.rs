//! Closed-form viscous Burgers solution on [0, 2] with homogeneous Dirichlet
//! data, its derivatives, a backward-Euler full-order solver, and error
//! metrics.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Smallest admissible denominator of the closed form on the physical domain.
const DENOMINATOR_GUARD: f64 = 0.2;

/// Viscous Burgers problem `u_t + u u_x = u_xx / mu` on `[0, 2] × [0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BurgersProblem {
    pub mu: f64,
    pub t_final: f64,
}

impl BurgersProblem {
    pub fn new(mu: f64, t_final: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::NonPositiveMu(mu));
        }
        Ok(Self { mu, t_final })
    }
}

struct Terms {
    c: f64,
    num: f64,
    den: f64,
    num_x: f64,
    num_xx: f64,
    num_t: f64,
    den_x: f64,
    den_xx: f64,
    den_t: f64,
}

fn terms(x: f64, t: f64, mu: f64) -> Terms {
    let e1 = (-PI * PI * t / mu).exp();
    let e2 = (-4.0 * PI * PI * t / mu).exp();
    let (s1, c1) = (PI * x).sin_cos();
    let (s2, c2) = (2.0 * PI * x).sin_cos();
    let num = 0.25 * e1 * s1 + e2 * s2;
    let den = 1.0 + 0.25 * e1 * c1 + 0.5 * e2 * c2;
    assert!(
        den > DENOMINATOR_GUARD,
        "closed-form denominator {den} too small at x={x}, t={t}, mu={mu}"
    );
    let num_x = 0.25 * PI * e1 * c1 + 2.0 * PI * e2 * c2;
    Terms {
        c: 2.0 * PI / mu,
        num,
        den,
        num_x,
        num_xx: -0.25 * PI * PI * e1 * s1 - 4.0 * PI * PI * e2 * s2,
        num_t: -(PI * PI / mu) * 0.25 * e1 * s1 - (4.0 * PI * PI / mu) * e2 * s2,
        den_x: -PI * num,
        den_xx: -PI * num_x,
        den_t: -(PI * PI / mu) * 0.25 * e1 * c1 - (4.0 * PI * PI / mu) * 0.5 * e2 * c2,
    }
}

/// `u_ex(x, t; mu)`.
pub fn exact_solution(x: f64, t: f64, mu: f64) -> f64 {
    let k = terms(x, t, mu);
    k.c * k.num / k.den
}

/// `u_ex(x, 0; mu)`.
pub fn initial_condition(x: f64, mu: f64) -> f64 {
    exact_solution(x, 0.0, mu)
}

/// Analytic partial derivatives of the closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactDerivatives {
    pub u: f64,
    pub u_t: f64,
    pub u_x: f64,
    pub u_xx: f64,
}

pub fn exact_derivatives(x: f64, t: f64, mu: f64) -> ExactDerivatives {
    let k = terms(x, t, mu);
    let d2 = k.den * k.den;
    let qx = (k.num_x * k.den - k.num * k.den_x) / d2;
    let qt = (k.num_t * k.den - k.num * k.den_t) / d2;
    let qxx = (k.num_xx * k.den - k.num * k.den_xx) / d2 - 2.0 * qx * k.den_x / k.den;
    ExactDerivatives {
        u: k.c * k.num / k.den,
        u_t: k.c * qt,
        u_x: k.c * qx,
        u_xx: k.c * qxx,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Exact,
    Fom,
    Model,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Exact => "exact",
            Provenance::Fom => "fom",
            Provenance::Model => "model",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "exact" => Some(Provenance::Exact),
            "fom" => Some(Provenance::Fom),
            "model" => Some(Provenance::Model),
            _ => None,
        }
    }
}

/// Field samples on a uniform space-time grid: `nt + 1` rows (time nodes, the
/// initial slice first) of `nx` columns (space nodes, both boundaries
/// included).
#[derive(Debug, Clone, PartialEq)]
pub struct GridSolution {
    pub nx: usize,
    pub nt: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub t_final: f64,
    pub mu: f64,
    pub provenance: Provenance,
    pub values: Vec<f64>,
}

impl GridSolution {
    pub fn x(&self, i: usize) -> f64 {
        uniform_node(self.x_lo, self.x_hi, self.nx - 1, i)
    }

    pub fn t(&self, j: usize) -> f64 {
        uniform_node(0.0, self.t_final, self.nt, j)
    }

    pub fn at(&self, j: usize, i: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.nx..(j + 1) * self.nx]
    }

    pub fn sample(
        mu: f64,
        nx: usize,
        nt: usize,
        t_final: f64,
        provenance: Provenance,
        f: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let mut g = GridSolution {
            nx,
            nt,
            x_lo: 0.0,
            x_hi: 2.0,
            t_final,
            mu,
            provenance,
            values: Vec::with_capacity(nx * (nt + 1)),
        };
        for j in 0..=nt {
            let t = g.t(j);
            for i in 0..nx {
                let x = g.x(i);
                g.values.push(f(x, t));
            }
        }
        g
    }

    /// Closed-form samples on the grid.
    pub fn exact(mu: f64, nx: usize, nt: usize, t_final: f64) -> Self {
        Self::sample(mu, nx, nt, t_final, Provenance::Exact, |x, t| exact_solution(x, t, mu))
    }

    /// One metadata line, then one comma-separated line per time node.
    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "# nx={},nt={},T={:e},mu={:e},provenance={}\n",
            self.nx,
            self.nt,
            self.t_final,
            self.mu,
            self.provenance.as_str()
        );
        for j in 0..=self.nt {
            let row: Vec<String> = self.row(j).iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::MalformedGrid(m.to_string());
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file"))?;
        let header = header.strip_prefix("# ").ok_or_else(|| bad("missing metadata line"))?;
        let (mut nx, mut nt, mut t_final, mut mu, mut prov) = (None, None, None, None, None);
        for kv in header.split(',') {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad("metadata entry without '='"))?;
            match k.trim() {
                "nx" => nx = v.parse::<usize>().ok(),
                "nt" => nt = v.parse::<usize>().ok(),
                "T" => t_final = v.parse::<f64>().ok(),
                "mu" => mu = v.parse::<f64>().ok(),
                "provenance" => prov = Provenance::parse(v),
                other => return Err(bad(&format!("unknown metadata key '{other}'"))),
            }
        }
        let nx = nx.ok_or_else(|| bad("nx"))?;
        let nt = nt.ok_or_else(|| bad("nt"))?;
        let mut values = Vec::with_capacity(nx * (nt + 1));
        for (j, line) in lines.enumerate() {
            let row: std::result::Result<Vec<f64>, _> = line.split(',').map(str::parse).collect();
            let row = row.map_err(|e| bad(&format!("row {j}: {e}")))?;
            if row.len() != nx {
                return Err(bad(&format!("row {j} has {} values, expected {nx}", row.len())));
            }
            values.extend(row);
        }
        if values.len() != nx * (nt + 1) {
            return Err(bad("row count does not match nt + 1"));
        }
        Ok(GridSolution {
            nx,
            nt,
            x_lo: 0.0,
            x_hi: 2.0,
            t_final: t_final.ok_or_else(|| bad("T"))?,
            mu: mu.ok_or_else(|| bad("mu"))?,
            provenance: prov.ok_or_else(|| bad("provenance"))?,
            values,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

/// `lo + k (hi - lo) / intervals`, exact at both ends.
pub fn uniform_node(lo: f64, hi: f64, intervals: usize, k: usize) -> f64 {
    if k == intervals {
        hi
    } else {
        lo + (hi - lo) * k as f64 / intervals as f64
    }
}

/// Backward Euler in time, second-order central differences in space, Newton
/// on each step with the tridiagonal Jacobian.
pub fn fom_solve(mu: f64, nx: usize, nt: usize, t_final: f64) -> Result<GridSolution> {
    const TOL: f64 = 1e-10;
    const MAX_ITERS: usize = 50;
    BurgersProblem::new(mu, t_final)?;
    if nx < 3 {
        return Err(Error::InvalidConfig(format!("fom needs nx >= 3, got {nx}")));
    }
    if nt < 1 {
        return Err(Error::InvalidConfig("fom needs nt >= 1".into()));
    }
    let mut grid = GridSolution {
        nx,
        nt,
        x_lo: 0.0,
        x_hi: 2.0,
        t_final,
        mu,
        provenance: Provenance::Fom,
        values: vec![0.0; nx * (nt + 1)],
    };
    for i in 0..nx {
        grid.values[i] = initial_condition(grid.x(i), mu);
    }
    grid.values[0] = 0.0;
    grid.values[nx - 1] = 0.0;

    let dx = 2.0 / (nx - 1) as f64;
    let dt = t_final / nt as f64;
    let nu = 1.0 / mu;
    let m = nx - 2;
    let (mut lower, mut diag, mut upper, mut rhs) = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);

    for step in 1..=nt {
        let prev: Vec<f64> = grid.row(step - 1).to_vec();
        let mut u = prev.clone();
        let mut converged = false;
        let mut res_norm = f64::INFINITY;
        for _ in 0..MAX_ITERS {
            res_norm = 0.0;
            for k in 0..m {
                let i = k + 1;
                let (ul, uc, ur) = (u[i - 1], u[i], u[i + 1]);
                let f = (uc - prev[i]) / dt + uc * (ur - ul) / (2.0 * dx) - nu * (ur - 2.0 * uc + ul) / (dx * dx);
                rhs[k] = -f;
                res_norm = f64::max(res_norm, f.abs());
                diag[k] = 1.0 / dt + (ur - ul) / (2.0 * dx) + 2.0 * nu / (dx * dx);
                lower[k] = -uc / (2.0 * dx) - nu / (dx * dx);
                upper[k] = uc / (2.0 * dx) - nu / (dx * dx);
            }
            if res_norm <= TOL {
                converged = true;
                break;
            }
            let delta = solve_tridiagonal(&lower, &diag, &upper, &rhs);
            for k in 0..m {
                u[k + 1] += delta[k];
            }
        }
        if !converged || !res_norm.is_finite() {
            return Err(Error::NewtonDiverged {
                step,
                residual: res_norm,
            });
        }
        grid.values[step * nx..(step + 1) * nx].copy_from_slice(&u);
    }
    Ok(grid)
}

/// Thomas algorithm; `lower[0]` and `upper[n-1]` are ignored.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - lower[i] * c[i - 1];
        c[i] = if i + 1 < n { upper[i] / denom } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// `‖pred − truth‖₂ / ‖truth‖₂`.
pub fn relative_l2(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::ShapeMismatch((pred.len(), 1), (truth.len(), 1)));
    }
    let num: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    let den: f64 = truth.iter().map(|t| t * t).sum();
    if den == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((num / den).sqrt())
}

pub fn grid_relative_l2(pred: &GridSolution, truth: &GridSolution) -> Result<f64> {
    if (pred.nx, pred.nt) != (truth.nx, truth.nt) {
        return Err(Error::ShapeMismatch((pred.nx, pred.nt), (truth.nx, truth.nt)));
    }
    relative_l2(&pred.values, &truth.values)
}
