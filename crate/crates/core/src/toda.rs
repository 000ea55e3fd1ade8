//! Hermitian-Einstein metric of the symmetric ansatz: the affine Toda system
//! for ψ_0..ψ_{k−1} on the truncated cylinder, solved by a descent flow on the
//! Donaldson–Simpson functional followed by an optional Newton polish, and
//! the unitary-gauge Hitchin fields built from the solution.
//!
//! Field layout is node-major: `psi[node * k + j]` with `node = i * n_t + t`,
//! `i` indexing x¹ and `t` indexing x².

use std::io::{BufRead, BufReader, Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ansatz::{dphi_component, phi_component, slopes, twist_diagonal, twist_matrix, CylinderGrid};
use crate::error::{Error, Result};
use crate::sparse::{factor, BlockMatrix, GridTopology, Symbolic};
use crate::spectral::ChainParams;

/// Stopping rules and step control of the solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TodaConfig {
    /// Target sup-norm of Δψ − |c|^{2/k}·RHS.
    pub tol: f64,
    /// Maximum number of explicit flow steps.
    pub max_steps: usize,
    /// Residual at which the flow hands over to Newton; `None` disables Newton.
    pub newton_switch: Option<f64>,
    pub max_newton: usize,
    /// Multiplier on the stable explicit step, at most 1.
    pub dt_factor: f64,
    /// Flow steps between recorded functional values.
    pub record_every: usize,
}

impl Default for TodaConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_steps: 200_000,
            newton_switch: Some(1e-4),
            max_newton: 60,
            dt_factor: 1.0,
            record_every: 50,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TodaSolution {
    pub params: ChainParams,
    pub grid: CylinderGrid,
    pub psi: Vec<f64>,
    pub residual_sup: f64,
    pub flow_steps: usize,
    pub newton_steps: usize,
    pub converged: bool,
    pub ds_history: Vec<f64>,
}

impl TodaSolution {
    pub fn psi_at(&self, j: usize, i: usize, t: usize) -> f64 {
        self.psi[(i * self.grid.n_t + t) * self.params.k + j]
    }

    /// Largest |Σ_j ψ_j| over the grid.
    pub fn trace_defect(&self) -> f64 {
        self.psi
            .chunks(self.params.k)
            .map(|c| c.iter().sum::<f64>().abs())
            .fold(0.0, f64::max)
    }
}

/// Precomputed data of the discrete problem.
pub struct TodaProblem {
    pub params: ChainParams,
    pub grid: CylinderGrid,
    /// |φ_j|² at every node, node-major.
    phi2: Vec<f64>,
    slope: Vec<f64>,
    c2k: f64,
}

impl TodaProblem {
    pub fn new(params: &ChainParams, grid: &CylinderGrid) -> Self {
        let k = params.k;
        let mut phi2 = vec![0.0; grid.len() * k];
        for i in 0..grid.n_r {
            for t in 0..grid.n_t {
                let s = grid.s(i, t);
                for j in 0..k {
                    phi2[(i * grid.n_t + t) * k + j] = phi_component(params, j, s).norm_sqr();
                }
            }
        }
        Self {
            params: params.clone(),
            grid: grid.clone(),
            phi2,
            slope: slopes(params),
            c2k: params.c_abs.powf(2.0 / k as f64),
        }
    }

    fn k(&self) -> usize {
        self.params.k
    }

    /// Index of ψ_j at (i, t) with the twisted wrap ψ_j(x² + 2π/β) = ψ_{j+2l}(x²).
    #[inline]
    fn wrapped(&self, j: usize, i: usize, t: isize) -> usize {
        let k = self.k();
        let nt = self.grid.n_t as isize;
        let shift = 2 * self.params.l;
        let (tt, jj) = if t >= nt {
            (t - nt, (j + shift) % k)
        } else if t < 0 {
            (t + nt, (j + k * shift - shift) % k)
        } else {
            (t, j)
        };
        (i * self.grid.n_t + tt as usize) * k + jj
    }

    /// F = Δψ + boundary data − |c|^{2/k}·RHS at every node.
    pub fn residual_field(&self, psi: &[f64]) -> Vec<f64> {
        let k = self.k();
        let g = &self.grid;
        let (ir2, it2) = (1.0 / (g.h_r * g.h_r), 1.0 / (g.h_t * g.h_t));
        let mut out = vec![0.0; psi.len()];
        for i in 0..g.n_r {
            for t in 0..g.n_t {
                let node = i * g.n_t + t;
                for j in 0..k {
                    let here = psi[node * k + j];
                    let lap_r = if i == 0 {
                        2.0 * (psi[(node + g.n_t) * k + j] - here) * ir2 + 2.0 * self.slope[j] / g.h_r
                    } else if i + 1 == g.n_r {
                        2.0 * (psi[(node - g.n_t) * k + j] - here) * ir2 + 2.0 * self.slope[j] / g.h_r
                    } else {
                        (psi[(node + g.n_t) * k + j] + psi[(node - g.n_t) * k + j] - 2.0 * here) * ir2
                    };
                    let up = psi[self.wrapped(j, i, t as isize + 1)];
                    let dn = psi[self.wrapped(j, i, t as isize - 1)];
                    let lap_t = (up + dn - 2.0 * here) * it2;
                    out[node * k + j] = lap_r + lap_t - self.c2k * self.source(psi, node, j);
                }
            }
        }
        out
    }

    /// |φ_{j+1}|² e^{ψ_j−ψ_{j+1}} − |φ_j|² e^{ψ_{j−1}−ψ_j} at a node.
    #[inline]
    fn source(&self, psi: &[f64], node: usize, j: usize) -> f64 {
        let k = self.k();
        if k == 1 {
            return 0.0;
        }
        let b = node * k;
        let jp = (j + 1) % k;
        let jm = (j + k - 1) % k;
        self.phi2[b + jp] * (psi[b + j] - psi[b + jp]).exp() - self.phi2[b + j] * (psi[b + jm] - psi[b + j]).exp()
    }

    /// Trapezoid-rule Donaldson–Simpson functional including the boundary
    /// work of the Neumann data; its gradient is −|c|^{−2/k}·W·F.
    pub fn functional(&self, psi: &[f64]) -> f64 {
        let k = self.k();
        let g = &self.grid;
        let ic = 1.0 / self.c2k;
        let mut grad = Kahan::default();
        let mut pot = Kahan::default();
        let mut bdry = Kahan::default();
        for i in 0..g.n_r {
            let wr = g.weight(i) / (g.h_t * g.h_t);
            for t in 0..g.n_t {
                let node = i * g.n_t + t;
                let w = g.weight(i);
                for j in 0..k {
                    let here = psi[node * k + j];
                    if i + 1 < g.n_r {
                        let d = psi[(node + g.n_t) * k + j] - here;
                        grad.add(0.5 * g.h_t / g.h_r * d * d);
                    }
                    let d = psi[self.wrapped(j, i, t as isize + 1)] - here;
                    grad.add(0.5 * wr * d * d);
                    if k > 1 {
                        let jp = (j + 1) % k;
                        pot.add(w * self.phi2[node * k + jp] * (here - psi[node * k + jp]).exp());
                    }
                    if i == 0 || i + 1 == g.n_r {
                        bdry.add(g.h_t * self.slope[j] * here);
                    }
                }
            }
        }
        ic * (grad.sum - bdry.sum) + pot.sum
    }

    /// Largest coefficient of the exponential terms, times |c|^{2/k}.
    fn stiffness(&self, psi: &[f64]) -> f64 {
        let k = self.k();
        if k == 1 {
            return 0.0;
        }
        let mut best: f64 = 0.0;
        for node in 0..self.grid.len() {
            let b = node * k;
            for j in 0..k {
                let jp = (j + 1) % k;
                best = best.max(self.phi2[b + jp] * (psi[b + j] - psi[b + jp]).exp());
            }
        }
        self.c2k * best
    }

    /// Hessian of the functional plus a trace penalty, as a block matrix with
    /// one k×k block per node.
    pub fn hessian(&self, psi: &[f64], topo: &Arc<GridTopology>) -> BlockMatrix<f64> {
        let k = self.k();
        let g = &self.grid;
        let ic = 1.0 / self.c2k;
        let mut h = BlockMatrix::zeros(topo.clone(), k);
        let kr = ic * g.h_t / g.h_r;
        let penalty = ic * (1.0 / (g.h_r * g.h_r) + 1.0 / (g.h_t * g.h_t));
        let shift = 2 * self.params.l;
        for i in 0..g.n_r {
            let kt = ic * g.weight(i) / (g.h_t * g.h_t);
            for t in 0..g.n_t {
                let node = i * g.n_t + t;
                let w = g.weight(i);
                for j in 0..k {
                    if i + 1 < g.n_r {
                        let nb = node + g.n_t;
                        h.add_diagonal(node, j, kr);
                        h.add_diagonal(nb, j, kr);
                        h.add_coupling(node, j, nb, j, -kr);
                    }
                    let (nb, jb) = if t + 1 == g.n_t {
                        (i * g.n_t, (j + shift) % k)
                    } else {
                        (node + 1, j)
                    };
                    h.add_diagonal(node, j, kt);
                    h.add_diagonal(nb, jb, kt);
                    h.add_coupling(node, j, nb, jb, -kt);
                    h.add_diagonal(node, j, w * penalty);
                    for j2 in 0..j {
                        h.add_coupling(node, j, node, j2, w * penalty);
                    }
                    if k > 1 {
                        let jp = (j + 1) % k;
                        let a = w * self.phi2[node * k + jp] * (psi[node * k + j] - psi[node * k + jp]).exp();
                        h.add_diagonal(node, j, a);
                        h.add_diagonal(node, jp, a);
                        h.add_coupling(node, j, node, jp, -a);
                    }
                }
            }
        }
        h
    }
}

#[derive(Default)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

fn sup(v: &[f64]) -> Result<f64> {
    let mut m: f64 = 0.0;
    for x in v {
        if !x.is_finite() {
            return Err(Error::NumericalBlowup("non-finite value in Toda fields".into()));
        }
        m = m.max(x.abs());
    }
    Ok(m)
}

fn project_trace(psi: &mut [f64], k: usize) {
    for c in psi.chunks_mut(k) {
        let mean = c.iter().sum::<f64>() / k as f64;
        c.iter_mut().for_each(|x| *x -= mean);
    }
}

/// sup over nodes and j of |Δψ_j − |c|^{2/k}(|φ_{j+1}|²e^{ψ_j−ψ_{j+1}} − |φ_j|²e^{ψ_{j−1}−ψ_j})|,
/// i.e. the residual of the Toda equation scaled by |c|^{2/k}.
pub fn toda_residual(params: &ChainParams, grid: &CylinderGrid, psi: &[f64]) -> Result<f64> {
    sup(&TodaProblem::new(params, grid).residual_field(psi))
}

pub fn ds_functional(params: &ChainParams, grid: &CylinderGrid, psi: &[f64]) -> f64 {
    TodaProblem::new(params, grid).functional(psi)
}

/// ψ_j = slope_j·sqrt(x¹² + 1).
pub fn initial_guess(params: &ChainParams, grid: &CylinderGrid) -> Vec<f64> {
    let k = params.k;
    let sl = slopes(params);
    let mut psi = vec![0.0; grid.len() * k];
    for i in 0..grid.n_r {
        let x = grid.x1(i);
        let r = (x * x + 1.0).sqrt();
        for t in 0..grid.n_t {
            for j in 0..k {
                psi[(i * grid.n_t + t) * k + j] = sl[j] * r;
            }
        }
    }
    psi
}

/// Nested-dissection leaf size suited to `b` unknowns per node.
pub fn leaf_nodes(b: usize) -> usize {
    (96 / b.max(1)).clamp(4, 48)
}

pub fn heat_flow(params: &ChainParams, grid: &CylinderGrid, cfg: &TodaConfig) -> Result<TodaSolution> {
    solve_from(params, grid, cfg, initial_guess(params, grid))
}

/// Runs the flow and the Newton polish from a given starting field.
pub fn solve_from(
    params: &ChainParams,
    grid: &CylinderGrid,
    cfg: &TodaConfig,
    mut psi: Vec<f64>,
) -> Result<TodaSolution> {
    if !(cfg.tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let k = params.k;
    if psi.len() != grid.len() * k {
        return Err(Error::IncompatibleGrid("field size does not match grid".into()));
    }
    if k % 2 == 0 && grid.n_t % 2 != 0 {
        return Err(Error::IncompatibleGrid("n_t must be even for even k".into()));
    }
    project_trace(&mut psi, k);
    let prob = TodaProblem::new(params, grid);
    let g = grid;
    let base = 4.0 / (g.h_r * g.h_r) + 4.0 / (g.h_t * g.h_t);
    let switch = cfg.newton_switch.unwrap_or(0.0).max(cfg.tol);
    let mut energy = prob.functional(&psi);
    let mut history = vec![energy];
    let mut f = prob.residual_field(&psi);
    let mut res = sup(&f)?;
    let mut steps = 0;
    let mut since_record = 0;
    let mut trial = vec![0.0; psi.len()];
    while res >= switch && steps < cfg.max_steps {
        let mut dt = cfg.dt_factor.min(1.0) / (base + 4.0 * prob.stiffness(&psi));
        loop {
            for ((t, p), d) in trial.iter_mut().zip(&psi).zip(&f) {
                *t = p + dt * d;
            }
            project_trace(&mut trial, k);
            let e = prob.functional(&trial);
            if !e.is_finite() {
                return Err(Error::NumericalBlowup("functional became non-finite".into()));
            }
            if e <= energy || dt < 1e-300 {
                energy = e;
                break;
            }
            dt *= 0.5;
        }
        std::mem::swap(&mut psi, &mut trial);
        steps += 1;
        since_record += 1;
        if since_record >= cfg.record_every.max(1) {
            history.push(energy);
            since_record = 0;
        }
        f = prob.residual_field(&psi);
        res = sup(&f)?;
    }
    if since_record > 0 {
        history.push(energy);
    }
    let mut newton_steps = 0;
    if cfg.newton_switch.is_some() && res >= cfg.tol {
        let topo = Arc::new(GridTopology::new(g.n_r, g.n_t, true));
        let sym = Symbolic::nested_dissection(topo.clone(), leaf_nodes(k));
        let ic = 1.0 / prob.c2k;
        while res >= cfg.tol && newton_steps < cfg.max_newton {
            let h = prob.hessian(&psi, &topo);
            let fac = factor(&sym, &h, 0.0)?;
            let mut d: Vec<f64> = (0..psi.len()).map(|n| ic * g.weight(n / k / g.n_t) * f[n]).collect();
            fac.solve_in_place(&mut d, 1);
            project_trace(&mut d, k);
            let decrease: f64 = d
                .iter()
                .enumerate()
                .map(|(n, x)| x * ic * g.weight(n / k / g.n_t) * f[n])
                .sum();
            let mut alpha = 1.0;
            let accepted = loop {
                for ((t, p), s) in trial.iter_mut().zip(&psi).zip(&d) {
                    *t = p + alpha * s;
                }
                let e = prob.functional(&trial);
                let tiny = decrease * alpha < 1e-13 * energy.abs().max(1.0);
                if e.is_finite()
                    && (e <= energy - 1e-4 * alpha * decrease || (tiny && e <= energy + 1e-13 * energy.abs().max(1.0)))
                {
                    break Some(e);
                }
                alpha *= 0.5;
                if alpha < 1e-10 {
                    break None;
                }
            };
            let Some(e) = accepted else { break };
            energy = e.min(energy);
            std::mem::swap(&mut psi, &mut trial);
            project_trace(&mut psi, k);
            newton_steps += 1;
            history.push(energy);
            f = prob.residual_field(&psi);
            res = sup(&f)?;
        }
    }
    Ok(TodaSolution {
        params: params.clone(),
        grid: grid.clone(),
        psi,
        residual_sup: res,
        flow_steps: steps,
        newton_steps,
        converged: res < cfg.tol,
        ds_history: history,
    })
}

/// max |ψ_j(x¹, x² + π/β) − ψ_{j+l}(x¹, x²)|.
pub fn symmetry_check(params: &ChainParams, sol: &TodaSolution) -> Result<f64> {
    let g = &sol.grid;
    if g.n_t % 2 != 0 {
        return Err(Error::IncompatibleGrid(
            "n_t must be even for the half-period shift".into(),
        ));
    }
    let k = params.k;
    let prob = TodaProblem::new(params, g);
    let half = (g.n_t / 2) as isize;
    let mut worst: f64 = 0.0;
    for i in 0..g.n_r {
        for t in 0..g.n_t {
            for j in 0..k {
                let a = sol.psi[prob.wrapped(j, i, t as isize + half)];
                let b = sol.psi[(i * g.n_t + t) * k + (j + params.l) % k];
                worst = worst.max((a - b).abs());
            }
        }
    }
    Ok(worst)
}

/// max over x² and j of |ψ_j(x¹) − ψ_j(−x¹)|.
pub fn reflection_defect(sol: &TodaSolution) -> f64 {
    let g = &sol.grid;
    let k = sol.params.k;
    let mut worst: f64 = 0.0;
    for i in 0..g.n_r {
        for t in 0..g.n_t {
            for j in 0..k {
                worst = worst.max((sol.psi_at(j, i, t) - sol.psi_at(j, g.n_r - 1 - i, t)).abs());
            }
        }
    }
    worst
}

/// Unitary-gauge Hitchin fields. With `node = i·n_t + t` and index
/// `node·k + j`:
/// - `f[j]` is the (j−1, j) entry of φ,
/// - `g[j]` is the (j−1, j) entry of D_sφ,
/// - `a1[j]`, `a2[j]` are real with A₁ = i·diag(a1), A₂ = i·diag(a2).
#[derive(Clone, Debug)]
pub struct HitchinFields {
    pub params: ChainParams,
    pub grid: CylinderGrid,
    pub f: Vec<Complex64>,
    pub g: Vec<Complex64>,
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    pub twist_u: nalgebra::DMatrix<Complex64>,
    /// Diagonal part of U = Σ^{2l}·diag(d).
    pub twist_d: Vec<Complex64>,
}

pub fn assemble_hitchin(params: &ChainParams, sol: &TodaSolution) -> HitchinFields {
    let k = params.k;
    let g = &sol.grid;
    let prob = TodaProblem::new(params, g);
    let sl = slopes(params);
    let n = g.len() * k;
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    for i in 0..g.n_r {
        for t in 0..g.n_t {
            let node = i * g.n_t + t;
            for j in 0..k {
                d1[node * k + j] = if i == 0 {
                    -sl[j]
                } else if i + 1 == g.n_r {
                    sl[j]
                } else {
                    (sol.psi[(node + g.n_t) * k + j] - sol.psi[(node - g.n_t) * k + j]) / (2.0 * g.h_r)
                };
                d2[node * k + j] = (sol.psi[prob.wrapped(j, i, t as isize + 1)]
                    - sol.psi[prob.wrapped(j, i, t as isize - 1)])
                    / (2.0 * g.h_t);
            }
        }
    }
    let ck = params.c_root();
    let mut f = vec![Complex64::new(0.0, 0.0); n];
    let mut gg = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..g.n_r {
        for t in 0..g.n_t {
            let node = i * g.n_t + t;
            let s = g.s(i, t);
            for j in 0..k {
                let jm = (j + k - 1) % k;
                let b = node * k;
                let e = ck * ((sol.psi[b + jm] - sol.psi[b + j]) / 2.0).exp();
                let ph = phi_component(params, j, s);
                let ds_m = Complex64::new(d1[b + jm], -d2[b + jm]) * 0.5;
                let ds_j = Complex64::new(d1[b + j], -d2[b + j]) * 0.5;
                f[b + j] = e * ph;
                gg[b + j] = e * ((ds_m - ds_j) * ph + dphi_component(params, j, s));
            }
        }
    }
    let a1 = d2.iter().map(|x| -0.5 * x).collect();
    let a2 = d1.iter().map(|x| 0.5 * x).collect();
    HitchinFields {
        params: params.clone(),
        grid: g.clone(),
        f,
        g: gg,
        a1,
        a2,
        twist_u: twist_matrix(params),
        twist_d: twist_diagonal(params),
    }
}

impl HitchinFields {
    fn k(&self) -> usize {
        self.params.k
    }

    /// φ at a grid point as a dense matrix.
    pub fn phi_matrix(&self, i: usize, t: usize) -> nalgebra::DMatrix<Complex64> {
        let k = self.k();
        let node = i * self.grid.n_t + t;
        let mut m = nalgebra::DMatrix::zeros(k, k);
        for j in 0..k {
            m[((j + k - 1) % k, j)] += self.f[node * k + j];
        }
        m
    }

    /// f_j at (i, t) for any integer t, using φ(x² + 2π/β) = U⁻¹φ(x²)U.
    pub fn f_wrapped(&self, j: usize, i: usize, t: isize) -> Complex64 {
        let k = self.k();
        let nt = self.grid.n_t as isize;
        let shift = 2 * self.params.l;
        let (tt, mut jj, mut phase) = (t.rem_euclid(nt), j, Complex64::new(1.0, 0.0));
        let mut wraps = t.div_euclid(nt);
        while wraps > 0 {
            let jm = (jj + k - 1) % k;
            phase *= self.twist_d[jm].conj() * self.twist_d[jj];
            jj = (jj + shift) % k;
            wraps -= 1;
        }
        while wraps < 0 {
            jj = (jj + k * shift - shift) % k;
            let jm = (jj + k - 1) % k;
            phase *= (self.twist_d[jm].conj() * self.twist_d[jj]).conj();
            wraps += 1;
        }
        phase * self.f[(i * self.grid.n_t + tt as usize) * k + jj]
    }

    fn diag_wrapped(&self, field: &[f64], j: usize, i: usize, t: isize) -> f64 {
        let k = self.k();
        let nt = self.grid.n_t as isize;
        let shift = 2 * self.params.l;
        let wraps = t.div_euclid(nt);
        let jj = (j as isize + wraps * shift as isize).rem_euclid(k as isize) as usize;
        field[(i * self.grid.n_t + t.rem_euclid(nt) as usize) * k + jj]
    }

    /// sup over |x¹| ≤ 3L/4 of |F₁₂ − (i/2)[φ, φ†]|, F₁₂ from central
    /// differences of A. The band next to x¹ = ±L is left out: the wide
    /// stencil there picks up the first-order truncation of the Neumann rows.
    pub fn curvature_residual(&self) -> f64 {
        let k = self.k();
        let g = &self.grid;
        let mut worst: f64 = 0.0;
        let inside = |i: usize| i >= 2 && i + 2 < g.n_r && g.x1(i).abs() <= 0.75 * g.half_length;
        for i in (0..g.n_r).filter(|&i| inside(i)) {
            for t in 0..g.n_t {
                let node = i * g.n_t + t;
                for j in 0..k {
                    let d1a2 = (self.a2[(node + g.n_t) * k + j] - self.a2[(node - g.n_t) * k + j]) / (2.0 * g.h_r);
                    let d2a1 = (self.diag_wrapped(&self.a1, j, i, t as isize + 1)
                        - self.diag_wrapped(&self.a1, j, i, t as isize - 1))
                        / (2.0 * g.h_t);
                    let f12 = d1a2 - d2a1;
                    let comm = self.f[node * k + (j + 1) % k].norm_sqr() - self.f[node * k + j].norm_sqr();
                    worst = worst.max((f12 - 0.5 * comm).abs());
                }
            }
        }
        worst
    }

    /// sup over interior points of |∂₁φ + i∂₂φ + [A₁ + iA₂, φ]|.
    pub fn holomorphy_residual(&self) -> f64 {
        let k = self.k();
        let g = &self.grid;
        let mut worst: f64 = 0.0;
        for i in 1..g.n_r - 1 {
            for t in 0..g.n_t {
                let node = i * g.n_t + t;
                let ti = t as isize;
                for j in 0..k {
                    let jm = (j + k - 1) % k;
                    let d1 = (self.f[(node + g.n_t) * k + j] - self.f[(node - g.n_t) * k + j]) / (2.0 * g.h_r);
                    let d2 = (self.f_wrapped(j, i, ti + 1) - self.f_wrapped(j, i, ti - 1)) / (2.0 * g.h_t);
                    let b = node * k;
                    let conn = Complex64::new(0.0, 1.0) * (self.a1[b + jm] - self.a1[b + j])
                        - (self.a2[b + jm] - self.a2[b + j]);
                    let r = d1 + Complex64::i() * d2 + conn * self.f[b + j];
                    worst = worst.max(r.norm());
                }
            }
        }
        worst
    }

    /// max over x² of ‖[φ, φ†]‖∞ (largest diagonal entry) at column i.
    pub fn commutator_profile(&self) -> Vec<f64> {
        let k = self.k();
        let g = &self.grid;
        (0..g.n_r)
            .map(|i| {
                let mut m: f64 = 0.0;
                for t in 0..g.n_t {
                    let b = (i * g.n_t + t) * k;
                    for j in 0..k {
                        m = m.max((self.f[b + (j + 1) % k].norm_sqr() - self.f[b + j].norm_sqr()).abs());
                    }
                }
                m
            })
            .collect()
    }

    /// Largest deviation from φ(x² + 2π/β) = U⁻¹φ(x²)U using the fields at
    /// t = n_t − 1 extrapolated one step against the wrapped values.
    pub fn twist_consistency(&self) -> f64 {
        let k = self.k();
        let g = &self.grid;
        let nt = g.n_t as isize;
        let mut worst: f64 = 0.0;
        for i in 0..g.n_r {
            for j in 0..k {
                // second-order extrapolation from the last three columns
                let a = self.f_wrapped(j, i, nt - 1);
                let b = self.f_wrapped(j, i, nt - 2);
                let c = self.f_wrapped(j, i, nt - 3);
                let extrap = a * 3.0 - b * 3.0 + c;
                let wrapped = self.f_wrapped(j, i, nt);
                let scale = wrapped.norm().max(1.0);
                worst = worst.max((extrap - wrapped).norm() / scale);
            }
        }
        worst
    }
}

const CHECKPOINT_MAGIC: &str = "MONOCHAIN-PSI 1";

/// Writes ψ as text: a magic line, a header line
/// `k l beta c_abs c_phase L n_r n_t`, then one value per line in node-major
/// order, 17 significant digits.
pub fn write_checkpoint<W: Write>(mut w: W, sol: &TodaSolution) -> std::io::Result<()> {
    let p = &sol.params;
    let g = &sol.grid;
    writeln!(w, "{CHECKPOINT_MAGIC}")?;
    writeln!(
        w,
        "{} {} {:.16e} {:.16e} {:.16e} {:.16e} {} {}",
        p.k, p.l, p.beta, p.c_abs, p.c_phase, g.half_length, g.n_r, g.n_t
    )?;
    for x in &sol.psi {
        writeln!(w, "{x:.16e}")?;
    }
    Ok(())
}

/// Header fields and values of a checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub k: usize,
    pub l: usize,
    pub beta: f64,
    pub c_abs: f64,
    pub c_phase: f64,
    pub half_length: f64,
    pub n_r: usize,
    pub n_t: usize,
    pub psi: Vec<f64>,
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<Checkpoint> {
    let bad = |m: &str| Error::InvalidParameter(format!("checkpoint: {m}"));
    let mut lines = BufReader::new(r).lines();
    let mut next = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| bad("truncated"))?
            .map_err(|e| bad(&e.to_string()))
    };
    if next()?.trim() != CHECKPOINT_MAGIC {
        return Err(bad("bad magic line"));
    }
    let head = next()?;
    let f: Vec<&str> = head.split_whitespace().collect();
    if f.len() != 8 {
        return Err(bad("bad header"));
    }
    let pu = |s: &str| s.parse::<usize>().map_err(|_| bad("bad integer"));
    let pf = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
    let (k, l, n_r, n_t) = (pu(f[0])?, pu(f[1])?, pu(f[6])?, pu(f[7])?);
    let mut psi = Vec::with_capacity(k * n_r * n_t);
    for _ in 0..k * n_r * n_t {
        psi.push(pf(next()?.trim())?);
    }
    Ok(Checkpoint {
        k,
        l,
        beta: pf(f[2])?,
        c_abs: pf(f[3])?,
        c_phase: pf(f[4])?,
        half_length: pf(f[5])?,
        n_r,
        n_t,
        psi,
    })
}
