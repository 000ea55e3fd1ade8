//! Numerical Nahm transform: the positive operator D̸ᵧD̸ᵧ† on the truncated
//! cylinder, its two near-zero modes, the transformed Higgs field φ̂ and the
//! energy density 𝓔 = △‖φ̂‖² on a lattice in monopole space.
//!
//! Spinors carry 2k components per grid point, ordered [top | bottom], and
//! live on the interior columns i = 1..n_r−2 (Dirichlet at x¹ = ±L). The
//! unknown for (i, t) is node `(i − 1) * n_t + t`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ansatz::CylinderGrid;
use crate::eigen::{dot, smallest_eigenpairs, EigenOptions, EigenResult};
use crate::error::{Error, Result};
use crate::sparse::{BlockMatrix, GridTopology, Symbolic};
use crate::spectral::ChainParams;
use crate::toda::{leaf_nodes, HitchinFields};

type C64 = Complex64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// y-independent part of the discretized operator, shared by all y-points.
#[derive(Debug)]
pub struct NahmContext {
    pub params: ChainParams,
    pub grid: CylinderGrid,
    topo: Arc<GridTopology>,
    sym: Arc<Symbolic>,
    /// Potential of the diagonal, per node and component (2k).
    potential: Vec<f64>,
    /// f_j per node.
    f: Vec<C64>,
    /// g_j per node.
    g: Vec<C64>,
    /// Link from (i, t) to (i + 1, t), per node and j.
    link1: Vec<C64>,
    /// Link from (i, t) to (i, t + 1) without the y₃ phase, per node and j.
    /// At t = n_t − 1 it already contains the twist factor conj(d_j).
    link2: Vec<C64>,
}

impl NahmContext {
    pub fn new(fields: &HitchinFields) -> Self {
        let p = &fields.params;
        let g = &fields.grid;
        let k = p.k;
        let (ni, nt) = (g.n_r - 2, g.n_t);
        let topo = Arc::new(GridTopology::new(ni, nt, true));
        let sym = Arc::new(Symbolic::nested_dissection(topo.clone(), leaf_nodes(2 * k)));
        let nodes = ni * nt;
        let mut potential = vec![0.0; nodes * 2 * k];
        let mut f = vec![ZERO; nodes * k];
        let mut gg = vec![ZERO; nodes * k];
        let mut link1 = vec![ZERO; nodes * k];
        let mut link2 = vec![ZERO; nodes * k];
        let lap = 2.0 / (g.h_r * g.h_r) + 2.0 / (g.h_t * g.h_t);
        let shift = 2 * p.l;
        for i in 1..g.n_r - 1 {
            for t in 0..nt {
                let src = (i * nt + t) * k;
                let u = (i - 1) * nt + t;
                for j in 0..k {
                    let jp = (j + 1) % k;
                    // (φφ†)_jj and (φ†φ)_jj
                    let pp = fields.f[src + jp].norm_sqr();
                    let qq = fields.f[src + j].norm_sqr();
                    potential[u * 2 * k + j] = 1.5 * pp - 0.5 * qq + lap;
                    potential[u * 2 * k + k + j] = 1.5 * qq - 0.5 * pp + lap;
                    f[u * k + j] = fields.f[src + j];
                    gg[u * k + j] = fields.g[src + j];
                    let nxt = ((i + 1) * nt + t) * k;
                    let a1 = 0.5 * (fields.a1[src + j] + fields.a1[nxt + j]);
                    link1[u * k + j] = C64::from_polar(1.0, g.h_r * a1);
                    link2[u * k + j] = if t + 1 < nt {
                        let a2 = 0.5 * (fields.a2[src + j] + fields.a2[src + k + j]);
                        C64::from_polar(1.0, g.h_t * a2)
                    } else {
                        let j2 = (j + shift) % k;
                        let a2 = 0.5 * (fields.a2[src + j] + fields.a2[i * nt * k + j2]);
                        C64::from_polar(1.0, g.h_t * a2) * fields.twist_d[j].conj()
                    };
                }
            }
        }
        Self {
            params: p.clone(),
            grid: g.clone(),
            topo,
            sym,
            potential,
            f,
            g: gg,
            link1,
            link2,
        }
    }

    pub fn block_size(&self) -> usize {
        2 * self.params.k
    }

    pub fn nodes(&self) -> usize {
        self.topo.nodes()
    }

    pub fn symbolic(&self) -> &Arc<Symbolic> {
        &self.sym
    }

    /// Discretized D̸ᵧD̸ᵧ† at y.
    pub fn assemble(&self, y: [f64; 3]) -> Result<DiracOperator> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite y = {y:?}")));
        }
        let k = self.params.k;
        let b = 2 * k;
        let (ni, nt) = (self.topo.ni, self.topo.nt);
        let (hr2, ht2) = (self.grid.h_r * self.grid.h_r, self.grid.h_t * self.grid.h_t);
        let yc = C64::new(y[0], y[1]);
        let y2 = yc.norm_sqr();
        let y3ph = C64::from_polar(1.0, self.grid.h_t * y[2]);
        let shift = 2 * self.params.l;
        let mut m = BlockMatrix::zeros(self.topo.clone(), b);
        for i in 0..ni {
            for t in 0..nt {
                let u = i * nt + t;
                for r in 0..b {
                    m.add_diagonal(u, r, self.potential[u * b + r] + y2);
                }
                for j in 0..k {
                    let jm = (j + k - 1) % k;
                    let fj = self.f[u * k + j];
                    let off = -yc.conj() * fj;
                    for half in [0, k] {
                        m.add_coupling(u, half + jm, u, half + j, off);
                    }
                    m.add_coupling(u, jm, u, k + j, self.g[u * k + j] * -2.0);
                    if i + 1 < ni {
                        let v = u + nt;
                        let val = -self.link1[u * k + j] / hr2;
                        for half in [0, k] {
                            m.add_coupling(u, half + j, v, half + j, val);
                        }
                    }
                    let val = -self.link2[u * k + j] * y3ph / ht2;
                    let (v, j2) = if t + 1 < nt {
                        (u + 1, j)
                    } else {
                        (i * nt, (j + shift) % k)
                    };
                    for half in [0, k] {
                        m.add_coupling(u, half + j, v, half + j2, val);
                    }
                }
            }
        }
        Ok(DiracOperator {
            y,
            matrix: m,
            weight: self.grid.h_r * self.grid.h_t,
            symbolic: self.sym.clone(),
        })
    }

    /// ‖φ̂‖² at a single y-point.
    pub fn phihat_norm2_at(&self, y: [f64; 3], opts: &EigenOptions) -> Result<f64> {
        let op = self.assemble(y)?;
        let pair = zero_modes_with(&op, opts, &[])?;
        if !pair.converged {
            return Err(Error::EigenNonConvergence(format!("at y = {y:?}")));
        }
        Ok(phihat_norm2(&higgs_field(&pair, &self.grid)))
    }
}

/// The assembled operator at one y-point.
#[derive(Clone, Debug)]
pub struct DiracOperator {
    pub y: [f64; 3],
    pub matrix: BlockMatrix<C64>,
    /// Quadrature weight h_r·h_t of the discrete L² product.
    pub weight: f64,
    pub symbolic: Arc<Symbolic>,
}

impl DiracOperator {
    pub fn size(&self) -> usize {
        self.matrix.dim()
    }
}

/// Builds the operator directly from the Hitchin fields.
pub fn assemble_operator(fields: &HitchinFields, y: [f64; 3]) -> Result<DiracOperator> {
    NahmContext::new(fields).assemble(y)
}

#[derive(Clone, Debug)]
pub struct ZeroModePair {
    pub y: [f64; 3],
    /// Z₁, Z₂, orthonormal in the weighted L² product.
    pub z: [Vec<C64>; 2],
    pub lambda: [f64; 3],
    pub gram: Matrix2<C64>,
    /// max(|λ₁|, |λ₂|) < 0.01·λ₃.
    pub gap_ok: bool,
    /// Gap failed or λ₂ and λ₃ within 1% of each other.
    pub degraded: bool,
    pub converged: bool,
    /// Largest eigen-residual relative to ‖M‖.
    pub residual: f64,
    /// Gershgorin bound of the operator.
    pub norm: f64,
    /// Ritz block kept for warm starts.
    pub ritz: Vec<Vec<C64>>,
    pub shift: f64,
}

impl ZeroModePair {
    /// Smallest Ritz value over ‖M‖; negative values are O(h²) artefacts.
    pub fn psd_defect(&self) -> f64 {
        self.lambda[0] / self.norm
    }

    pub fn gap_ratio(&self) -> f64 {
        self.lambda[0].abs().max(self.lambda[1].abs()) / self.lambda[2]
    }
}

pub fn zero_modes(op: &DiracOperator) -> Result<ZeroModePair> {
    zero_modes_with(op, &EigenOptions::default(), &[])
}

/// Three lowest eigenpairs, warm-started from `start` when given.
pub fn zero_modes_with(op: &DiracOperator, opts: &EigenOptions, start: &[Vec<C64>]) -> Result<ZeroModePair> {
    let res: EigenResult = smallest_eigenpairs(&op.symbolic, &op.matrix, opts, start)?;
    let scale = 1.0 / op.weight.sqrt();
    let z = [
        res.vectors[0].iter().map(|v| v * scale).collect::<Vec<_>>(),
        res.vectors[1].iter().map(|v| v * scale).collect::<Vec<_>>(),
    ];
    let mut gram = Matrix2::zeros();
    for a in 0..2 {
        for b in 0..2 {
            gram[(a, b)] = dot(&z[a], &z[b]) * op.weight;
        }
    }
    let lambda = [res.values[0], res.values[1], res.values[2]];
    let gap_ok = lambda[0].abs().max(lambda[1].abs()) < 0.01 * lambda[2];
    let degraded = !gap_ok || (lambda[2] - lambda[1]).abs() < 0.01 * lambda[2].abs();
    let residual = res.residuals[..3].iter().cloned().fold(0.0, f64::max) / res.norm;
    Ok(ZeroModePair {
        y: op.y,
        z,
        lambda,
        gram,
        gap_ok,
        degraded,
        converged: res.converged,
        residual,
        norm: res.norm,
        ritz: res.vectors,
        shift: res.shift,
    })
}

/// φ̂_ab = i ∫ x¹ Z_a† Z_b dx¹dx². The x¹ trapezoid end weights multiply
/// the Dirichlet zeros, so interior nodes carry the full weight h_r·h_t.
pub fn higgs_field(pair: &ZeroModePair, grid: &CylinderGrid) -> Matrix2<C64> {
    let nodes = (grid.n_r - 2) * grid.n_t;
    let b = pair.z[0].len() / nodes;
    let w = grid.h_r * grid.h_t;
    let mut s = [[ZERO; 2]; 2];
    for u in 0..nodes {
        let x1 = grid.x1(u / grid.n_t + 1);
        for a in 0..2 {
            for c in 0..2 {
                let za = &pair.z[a][u * b..(u + 1) * b];
                let zc = &pair.z[c][u * b..(u + 1) * b];
                s[a][c] += dot(za, zc) * x1;
            }
        }
    }
    let i = C64::new(0.0, w);
    Matrix2::new(i * s[0][0], i * s[0][1], i * s[1][0], i * s[1][1])
}

/// ½ Tr(φ̂ φ̂†).
pub fn phihat_norm2(ph: &Matrix2<C64>) -> f64 {
    0.5 * ph.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

/// Rectangular lattice in monopole space: a centred square of half-width
/// `half_width` with `n12` points per axis in (y₁, y₂), and `n3` points
/// covering one period [0, β) in y₃.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YLattice {
    pub half_width: f64,
    pub n12: usize,
    pub n3: usize,
    pub beta: f64,
}

impl YLattice {
    pub fn new(half_width: f64, n12: usize, n3: usize, beta: f64) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) || !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter("lattice extents must be positive".into()));
        }
        if n12 < 3 || n3 < 3 {
            return Err(Error::InvalidParameter(
                "need at least 3 lattice points per axis".into(),
            ));
        }
        Ok(Self {
            half_width,
            n12,
            n3,
            beta,
        })
    }

    /// Half-width 3k/β, 33 points per transverse axis, 16 per period.
    pub fn default_for(p: &ChainParams) -> Self {
        Self {
            half_width: 3.0 * p.k as f64 / p.beta,
            n12: 33,
            n3: 16,
            beta: p.beta,
        }
    }

    pub fn h12(&self) -> f64 {
        2.0 * self.half_width / (self.n12 - 1) as f64
    }

    pub fn h3(&self) -> f64 {
        self.beta / self.n3 as f64
    }

    pub fn coord(&self, a: usize) -> f64 {
        -self.half_width + a as f64 * self.h12()
    }

    pub fn point(&self, a: usize, b: usize, c: usize) -> [f64; 3] {
        [self.coord(a), self.coord(b), c as f64 * self.h3()]
    }

    pub fn len(&self) -> usize {
        self.n12 * self.n12 * self.n3
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, a: usize, b: usize, c: usize) -> usize {
        (a * self.n12 + b) * self.n3 + c
    }

    pub fn is_interior(&self, a: usize, b: usize) -> bool {
        a > 0 && b > 0 && a + 1 < self.n12 && b + 1 < self.n12
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointQuality {
    pub lambda: [f64; 3],
    pub gap_ok: bool,
    pub degraded: bool,
    /// Eigensolver failed; the value was interpolated from neighbours.
    pub flagged: bool,
    /// Tr φ̂, reported only.
    pub trace: [f64; 2],
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonopoleGrid {
    pub lattice: YLattice,
    pub phihat_norm2: Vec<f64>,
    /// 𝓔 on interior (y₁, y₂) columns; `None` on the lattice boundary.
    pub energy: Vec<Option<f64>>,
    pub quality: Vec<PointQuality>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanOptions {
    pub eigen: EigenOptions,
    /// Worker threads; 0 means one.
    pub threads: usize,
    pub max_flagged_fraction: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            eigen: EigenOptions::default(),
            threads: 1,
            max_flagged_fraction: 0.05,
        }
    }
}

struct PointResult {
    norm2: f64,
    quality: PointQuality,
}

fn evaluate(ctx: &NahmContext, y: [f64; 3], opts: &mut EigenOptions, warm: &mut Vec<Vec<C64>>) -> PointResult {
    let failed = |lambda| PointResult {
        norm2: f64::NAN,
        quality: PointQuality {
            lambda,
            gap_ok: false,
            degraded: true,
            flagged: true,
            trace: [0.0; 2],
            residual: f64::NAN,
        },
    };
    let op = match ctx.assemble(y) {
        Ok(op) => op,
        Err(_) => return failed([f64::NAN; 3]),
    };
    match zero_modes_with(&op, opts, warm) {
        Ok(pair) if pair.converged => {
            let ph = higgs_field(&pair, &ctx.grid);
            let tr = ph[(0, 0)] + ph[(1, 1)];
            // The next point starts from a slightly smaller shift so a
            // temporary increase does not stick for the rest of the scan.
            opts.shift = (pair.shift * 0.5).max(opts.shift.min(pair.shift));
            *warm = pair.ritz.clone();
            PointResult {
                norm2: phihat_norm2(&ph),
                quality: PointQuality {
                    lambda: pair.lambda,
                    gap_ok: pair.gap_ok,
                    degraded: pair.degraded,
                    flagged: false,
                    trace: [tr.re, tr.im],
                    residual: pair.residual,
                },
            }
        }
        Ok(pair) => {
            warm.clear();
            failed(pair.lambda)
        }
        Err(_) => {
            warm.clear();
            failed([f64::NAN; 3])
        }
    }
}

/// Serpentine visiting order of the (b, c) plane for row `a`, so that
/// consecutive points are lattice neighbours and warm starts stay useful.
fn row_order(lat: &YLattice, a: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(lat.n12 * lat.n3);
    for bi in 0..lat.n12 {
        let b = if a % 2 == 0 { bi } else { lat.n12 - 1 - bi };
        for ci in 0..lat.n3 {
            let c = if out.len() / lat.n3 % 2 == 0 {
                ci
            } else {
                lat.n3 - 1 - ci
            };
            out.push((b, c));
        }
    }
    out
}

/// Evaluates ‖φ̂‖² over the lattice and forms the energy density.
pub fn scan(ctx: &NahmContext, lat: &YLattice, opts: &ScanOptions) -> Result<MonopoleGrid> {
    let threads = opts.threads.max(1).min(lat.n12);
    let rows: Vec<usize> = (0..lat.n12).collect();
    let chunk = lat.n12.div_ceil(threads);
    let run_rows = |rows: &[usize]| -> Vec<(usize, PointResult)> {
        let mut eo = opts.eigen.clone();
        let mut warm = Vec::new();
        let mut out = Vec::new();
        for &a in rows {
            for (b, c) in row_order(lat, a) {
                let r = evaluate(ctx, lat.point(a, b, c), &mut eo, &mut warm);
                out.push((lat.index(a, b, c), r));
            }
        }
        out
    };
    let parts: Vec<Vec<(usize, PointResult)>> = if threads == 1 {
        vec![run_rows(&rows)]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = rows.chunks(chunk).map(|rs| s.spawn(move || run_rows(rs))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("scan worker panicked"))
                .collect()
        })
    };
    let mut norm2 = vec![f64::NAN; lat.len()];
    let mut quality = vec![None; lat.len()];
    for part in parts {
        for (idx, r) in part {
            norm2[idx] = r.norm2;
            quality[idx] = Some(r.quality);
        }
    }
    let quality: Vec<PointQuality> = quality.into_iter().map(|q| q.expect("point not visited")).collect();
    let flagged = quality.iter().filter(|q| q.flagged).count();
    if flagged as f64 > opts.max_flagged_fraction * lat.len() as f64 {
        return Err(Error::ScanQuality(format!(
            "{flagged} of {} points failed to converge",
            lat.len()
        )));
    }
    fill_flagged(lat, &mut norm2, &quality);
    let energy = energy_density(lat, &norm2);
    Ok(MonopoleGrid {
        lattice: lat.clone(),
        phihat_norm2: norm2,
        energy,
        quality,
    })
}

/// Replaces flagged values by the mean of their unflagged axis neighbours.
fn fill_flagged(lat: &YLattice, v: &mut [f64], q: &[PointQuality]) {
    let orig = v.to_vec();
    for a in 0..lat.n12 {
        for b in 0..lat.n12 {
            for c in 0..lat.n3 {
                let idx = lat.index(a, b, c);
                if !q[idx].flagged {
                    continue;
                }
                let mut nb = vec![
                    lat.index(a, b, (c + 1) % lat.n3),
                    lat.index(a, b, (c + lat.n3 - 1) % lat.n3),
                ];
                if a > 0 {
                    nb.push(lat.index(a - 1, b, c));
                }
                if a + 1 < lat.n12 {
                    nb.push(lat.index(a + 1, b, c));
                }
                if b > 0 {
                    nb.push(lat.index(a, b - 1, c));
                }
                if b + 1 < lat.n12 {
                    nb.push(lat.index(a, b + 1, c));
                }
                let good: Vec<f64> = nb.into_iter().filter(|&n| !q[n].flagged).map(|n| orig[n]).collect();
                if !good.is_empty() {
                    v[idx] = good.iter().sum::<f64>() / good.len() as f64;
                }
            }
        }
    }
}

/// 7-point Laplacian, periodic in y₃, on interior (y₁, y₂) columns.
pub fn energy_density(lat: &YLattice, f: &[f64]) -> Vec<Option<f64>> {
    let (h12, h3) = (lat.h12(), lat.h3());
    let mut e = vec![None; lat.len()];
    for a in 1..lat.n12 - 1 {
        for b in 1..lat.n12 - 1 {
            for c in 0..lat.n3 {
                let at = |a: usize, b: usize, c: usize| f[lat.index(a, b, c)];
                let mid = at(a, b, c);
                let lap = (at(a + 1, b, c) + at(a - 1, b, c) - 2.0 * mid) / (h12 * h12)
                    + (at(a, b + 1, c) + at(a, b - 1, c) - 2.0 * mid) / (h12 * h12)
                    + (at(a, b, (c + 1) % lat.n3) + at(a, b, (c + lat.n3 - 1) % lat.n3) - 2.0 * mid) / (h3 * h3);
                e[lat.index(a, b, c)] = Some(lap);
            }
        }
    }
    e
}

/// Image of y under the generator of ℤ₂ₖ^(2l): rotation by π/k in the
/// (y₁, y₂) plane together with the shift lβ/k along y₃.
pub fn symmetry_image(p: &ChainParams, y: [f64; 3]) -> [f64; 3] {
    let (s, c) = (PI / p.k as f64).sin_cos();
    [
        c * y[0] - s * y[1],
        s * y[0] + c * y[1],
        y[2] + p.l as f64 * p.beta / p.k as f64,
    ]
}

/// A local maximum of the in-core energy profile along y₃.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyMaximum {
    pub y: [f64; 3],
    pub energy: f64,
}

impl MonopoleGrid {
    pub fn energy_at(&self, a: usize, b: usize, c: usize) -> Option<f64> {
        self.energy[self.lattice.index(a, b, c)]
    }

    /// Fraction of points meeting the 1% gap criterion.
    pub fn gap_fraction(&self) -> f64 {
        self.quality.iter().filter(|q| q.gap_ok).count() as f64 / self.quality.len() as f64
    }

    pub fn flagged_count(&self) -> usize {
        self.quality.iter().filter(|q| q.flagged).count()
    }

    /// Largest |Tr φ̂| over the lattice.
    pub fn max_trace(&self) -> f64 {
        self.quality
            .iter()
            .map(|q| q.trace[0].hypot(q.trace[1]))
            .fold(0.0, f64::max)
    }

    /// (min, max) of the defined energy values.
    pub fn energy_range(&self) -> Option<(f64, f64)> {
        let mut it = self.energy.iter().flatten();
        let first = *it.next()?;
        Some(it.fold((first, first), |(lo, hi), &v| (lo.min(v), hi.max(v))))
    }

    /// Sum of the energy over defined points times the cell volume.
    pub fn total_energy(&self) -> f64 {
        let h = self.lattice.h12();
        self.energy.iter().flatten().sum::<f64>() * h * h * self.lattice.h3()
    }

    /// Energy maxima per y₃-period. For every y₃ slice the largest energy
    /// among interior columns within `core_radius` of the axis is taken; the
    /// periodic local maxima of this profile are the lumps of the chain.
    pub fn maxima_per_period(&self, core_radius: f64) -> Vec<EnergyMaximum> {
        let lat = &self.lattice;
        let mut profile = Vec::with_capacity(lat.n3);
        for c in 0..lat.n3 {
            let mut best: Option<(f64, usize, usize)> = None;
            for a in 1..lat.n12 - 1 {
                for b in 1..lat.n12 - 1 {
                    if lat.coord(a).hypot(lat.coord(b)) > core_radius + 1e-12 {
                        continue;
                    }
                    if let Some(e) = self.energy_at(a, b, c) {
                        if best.is_none_or(|(v, _, _)| e > v) {
                            best = Some((e, a, b));
                        }
                    }
                }
            }
            profile.push(best);
        }
        let n = lat.n3;
        let mut out = Vec::new();
        for c in 0..n {
            let Some((v, a, b)) = profile[c] else { continue };
            let prev = profile[(c + n - 1) % n].map_or(f64::NEG_INFINITY, |p| p.0);
            let next = profile[(c + 1) % n].map_or(f64::NEG_INFINITY, |p| p.0);
            if v > prev && v >= next {
                out.push(EnergyMaximum {
                    y: lat.point(a, b, c),
                    energy: v,
                });
            }
        }
        out
    }

    /// Trilinear interpolation of the energy at y (periodic in y₃) with the
    /// error estimate ⅛ Σ_d h_d² |∂_d²𝓔| from second differences on the
    /// enclosing cell. `None` if the cell leaves the defined region.
    pub fn interpolate_energy(&self, y: [f64; 3]) -> Option<(f64, f64)> {
        let lat = &self.lattice;
        let (h, h3) = (lat.h12(), lat.h3());
        let fa = (y[0] + lat.half_width) / h;
        let fb = (y[1] + lat.half_width) / h;
        let fc = y[2].rem_euclid(lat.beta) / h3;
        // snap coordinates that sit on a lattice plane up to roundoff
        let snap = |x: f64| if (x - x.round()).abs() < 1e-9 { x.round() } else { x };
        let (fa, fb, fc) = (snap(fa), snap(fb), snap(fc));
        let (a0, b0, c0) = (fa.floor() as isize, fb.floor() as isize, fc.floor() as isize);
        let (ta, tb, tc) = (fa - a0 as f64, fb - b0 as f64, fc - c0 as f64);
        let n12 = lat.n12 as isize;
        // the second-difference stencil needs one more interior column on each side
        if a0 < 2 || b0 < 2 || a0 + 3 > n12 - 1 || b0 + 3 > n12 - 1 {
            return None;
        }
        let e = |a: isize, b: isize, c: isize| -> Option<f64> {
            let c = c.rem_euclid(lat.n3 as isize) as usize;
            self.energy_at(a as usize, b as usize, c)
        };
        let mut val = 0.0;
        for (da, wa) in [(0, 1.0 - ta), (1, ta)] {
            for (db, wb) in [(0, 1.0 - tb), (1, tb)] {
                for (dc, wc) in [(0, 1.0 - tc), (1, tc)] {
                    val += wa * wb * wc * e(a0 + da, b0 + db, c0 + dc)?;
                }
            }
        }
        let mut d2 = [0.0f64; 3];
        for da in 0..2 {
            for db in 0..2 {
                for dc in 0..2 {
                    let (a, b, c) = (a0 + da, b0 + db, c0 + dc);
                    let mid = e(a, b, c)?;
                    d2[0] = d2[0].max((e(a + 1, b, c)? + e(a - 1, b, c)? - 2.0 * mid).abs());
                    d2[1] = d2[1].max((e(a, b + 1, c)? + e(a, b - 1, c)? - 2.0 * mid).abs());
                    d2[2] = d2[2].max((e(a, b, c + 1)? + e(a, b, c - 1)? - 2.0 * mid).abs());
                }
            }
        }
        // second differences already carry the h_d² factor
        let est = 0.125 * (d2[0] + d2[1] + d2[2]);
        Some((val, est))
    }
}

/// Comparison of the energy at lattice points with the trilinearly
/// interpolated energy at their images under the symmetry generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryDefect {
    /// Points whose image cell lies inside the defined region.
    pub points: usize,
    /// max |𝓔(P) − 𝓔(image)|.
    pub max_abs: f64,
    /// max |𝓔(P) − 𝓔(image)| / interpolation error estimate.
    pub max_ratio: f64,
}

impl MonopoleGrid {
    pub fn symmetry_defect(&self, p: &ChainParams) -> SymmetryDefect {
        let lat = &self.lattice;
        let mut out = SymmetryDefect {
            points: 0,
            max_abs: 0.0,
            max_ratio: 0.0,
        };
        let scale = self.energy_range().map_or(1.0, |(lo, hi)| lo.abs().max(hi.abs()));
        for a in 1..lat.n12 - 1 {
            for b in 1..lat.n12 - 1 {
                for c in 0..lat.n3 {
                    let Some(e) = self.energy_at(a, b, c) else { continue };
                    let Some((v, est)) = self.interpolate_energy(symmetry_image(p, lat.point(a, b, c))) else {
                        continue;
                    };
                    let d = (e - v).abs();
                    out.points += 1;
                    out.max_abs = out.max_abs.max(d);
                    // floor keeps exact lattice-to-lattice images from
                    // dividing roundoff by a vanishing estimate
                    out.max_ratio = out.max_ratio.max(d / (est + 1e-10 * scale));
                }
            }
        }
        out
    }
}

/// Least-squares slope of ‖φ̂‖ against ln ρ.
pub fn log_slope(samples: &[(f64, f64)]) -> f64 {
    let n = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(samples).map(|(x, s)| (x - mx) * (s.1 - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// ‖φ̂‖ at `n` radii evenly spaced in [ρ₀, ρ₁] along the ray at angle
/// `angle` and height y₃, evaluated with warm starts along the ray.
pub fn radial_profile(
    ctx: &NahmContext,
    rho: (f64, f64),
    n: usize,
    angle: f64,
    y3: f64,
    opts: &EigenOptions,
) -> Result<Vec<(f64, f64)>> {
    let mut warm = Vec::new();
    let mut eo = opts.clone();
    let mut out = Vec::with_capacity(n);
    for q in 0..n {
        let r = rho.0 + (rho.1 - rho.0) * q as f64 / (n.max(2) - 1) as f64;
        let y = [r * angle.cos(), r * angle.sin(), y3];
        let res = evaluate(ctx, y, &mut eo, &mut warm);
        if res.quality.flagged {
            return Err(Error::EigenNonConvergence(format!("radial sample at rho = {r}")));
        }
        out.push((r, res.norm2.sqrt()));
    }
    Ok(out)
}
