//! Block-sparse hermitian matrices on (possibly periodic) grids and a
//! multifrontal Cholesky factorization ordered by geometric nested dissection.
//!
//! Every grid node carries `b` unknowns. Nodes couple to their four lattice
//! neighbours through dense `b×b` blocks, which covers twisted periodic
//! boundary conditions as well as plain ones.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Node adjacency of an `ni × nt` grid, optionally periodic in the second index.
#[derive(Clone, Debug)]
pub struct GridTopology {
    pub ni: usize,
    pub nt: usize,
    pub periodic: bool,
    offsets: Vec<usize>,
    nbrs: Vec<usize>,
}

impl GridTopology {
    pub fn new(ni: usize, nt: usize, periodic: bool) -> Self {
        let mut offsets = vec![0];
        let mut nbrs = Vec::new();
        for i in 0..ni {
            for t in 0..nt {
                let mut list = Vec::with_capacity(4);
                if i > 0 {
                    list.push((i - 1) * nt + t);
                }
                if i + 1 < ni {
                    list.push((i + 1) * nt + t);
                }
                if periodic {
                    list.push(i * nt + (t + nt - 1) % nt);
                    list.push(i * nt + (t + 1) % nt);
                } else {
                    if t > 0 {
                        list.push(i * nt + t - 1);
                    }
                    if t + 1 < nt {
                        list.push(i * nt + t + 1);
                    }
                }
                let me = i * nt + t;
                list.retain(|&v| v != me);
                list.sort_unstable();
                list.dedup();
                nbrs.extend(list);
                offsets.push(nbrs.len());
            }
        }
        Self {
            ni,
            nt,
            periodic,
            offsets,
            nbrs,
        }
    }

    pub fn nodes(&self) -> usize {
        self.ni * self.nt
    }

    pub fn node(&self, i: usize, t: usize) -> usize {
        i * self.nt + t
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.nbrs[self.offsets[u]..self.offsets[u + 1]]
    }

    /// Global edge index of the directed edge u → v.
    pub fn edge(&self, u: usize, v: usize) -> Option<usize> {
        let start = self.offsets[u];
        self.neighbors(u).iter().position(|&w| w == v).map(|p| start + p)
    }

    pub fn edges(&self) -> usize {
        self.nbrs.len()
    }
}

/// Hermitian block-sparse matrix. Block (u, v) is stored for both directions
/// and assembly is expected to keep A(v, u) = A(u, v)†.
#[derive(Clone, Debug)]
pub struct BlockMatrix<T> {
    topo: Arc<GridTopology>,
    b: usize,
    diag: Vec<T>,
    off: Vec<T>,
}

impl<T: Scalar> BlockMatrix<T> {
    pub fn zeros(topo: Arc<GridTopology>, b: usize) -> Self {
        let bb = b * b;
        Self {
            diag: vec![T::zero(); topo.nodes() * bb],
            off: vec![T::zero(); topo.edges() * bb],
            topo,
            b,
        }
    }

    pub fn topology(&self) -> &Arc<GridTopology> {
        &self.topo
    }

    pub fn block_size(&self) -> usize {
        self.b
    }

    pub fn dim(&self) -> usize {
        self.topo.nodes() * self.b
    }

    /// Row-major diagonal block of node u.
    pub fn diag_block(&self, u: usize) -> &[T] {
        let bb = self.b * self.b;
        &self.diag[u * bb..(u + 1) * bb]
    }

    pub fn diag_block_mut(&mut self, u: usize) -> &mut [T] {
        let bb = self.b * self.b;
        &mut self.diag[u * bb..(u + 1) * bb]
    }

    /// Row-major block A(u, v) of an adjacent pair.
    pub fn block(&self, u: usize, v: usize) -> &[T] {
        let e = self.topo.edge(u, v).expect("nodes are not adjacent");
        let bb = self.b * self.b;
        &self.off[e * bb..(e + 1) * bb]
    }

    pub fn block_mut(&mut self, u: usize, v: usize) -> &mut [T] {
        let e = self.topo.edge(u, v).expect("nodes are not adjacent");
        let bb = self.b * self.b;
        &mut self.off[e * bb..(e + 1) * bb]
    }

    /// Adds a real number to the diagonal entry (u·b + r, u·b + r).
    pub fn add_diagonal(&mut self, u: usize, r: usize, x: f64) {
        let b = self.b;
        self.diag_block_mut(u)[r * b + r] += T::from_re(x);
    }

    /// Adds `val` at (u·b + r, v·b + c) and its conjugate at the mirrored
    /// position, keeping the matrix hermitian. When both positions coincide
    /// the entry receives val + conj(val).
    pub fn add_coupling(&mut self, u: usize, r: usize, v: usize, c: usize, val: T) {
        let b = self.b;
        if u == v {
            let d = self.diag_block_mut(u);
            d[r * b + c] += val;
            if r == c {
                d[r * b + r] += val.conj();
            } else {
                d[c * b + r] += val.conj();
            }
        } else {
            self.block_mut(u, v)[r * b + c] += val;
            self.block_mut(v, u)[c * b + r] += val.conj();
        }
    }

    /// y = A x.
    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        let b = self.b;
        let bb = b * b;
        for u in 0..self.topo.nodes() {
            let yu = &mut y[u * b..(u + 1) * b];
            yu.iter_mut().for_each(|v| *v = T::zero());
            gemv_acc(&self.diag[u * bb..(u + 1) * bb], &x[u * b..(u + 1) * b], yu, b);
            let start = self.topo.offsets[u];
            for (p, &v) in self.topo.neighbors(u).iter().enumerate() {
                let e = start + p;
                gemv_acc(&self.off[e * bb..(e + 1) * bb], &x[v * b..(v + 1) * b], yu, b);
            }
        }
    }

    /// Gershgorin bound on the spectral radius.
    pub fn norm_bound(&self) -> f64 {
        let b = self.b;
        let mut best: f64 = 0.0;
        for u in 0..self.topo.nodes() {
            let mut rows = vec![0.0; b];
            let d = self.diag_block(u);
            for r in 0..b {
                for c in 0..b {
                    rows[r] += d[r * b + c].abs2().sqrt();
                }
            }
            for &v in self.topo.neighbors(u) {
                let blk = self.block(u, v);
                for r in 0..b {
                    for c in 0..b {
                        rows[r] += blk[r * b + c].abs2().sqrt();
                    }
                }
            }
            best = rows.into_iter().fold(best, f64::max);
        }
        best
    }

    /// max |A − A†| entrywise.
    pub fn hermiticity_defect(&self) -> f64 {
        let b = self.b;
        let mut worst: f64 = 0.0;
        for u in 0..self.topo.nodes() {
            let d = self.diag_block(u);
            for r in 0..b {
                for c in 0..b {
                    worst = worst.max((d[r * b + c] - d[c * b + r].conj()).abs2().sqrt());
                }
            }
            for &v in self.topo.neighbors(u) {
                let a = self.block(u, v);
                let t = self.block(v, u);
                for r in 0..b {
                    for c in 0..b {
                        worst = worst.max((a[r * b + c] - t[c * b + r].conj()).abs2().sqrt());
                    }
                }
            }
        }
        worst
    }

    /// Dense copy, row-major.
    pub fn to_dense(&self) -> Vec<T> {
        let n = self.dim();
        let b = self.b;
        let mut out = vec![T::zero(); n * n];
        for u in 0..self.topo.nodes() {
            let d = self.diag_block(u);
            for r in 0..b {
                for c in 0..b {
                    out[(u * b + r) * n + u * b + c] = d[r * b + c];
                }
            }
            for &v in self.topo.neighbors(u) {
                let blk = self.block(u, v);
                for r in 0..b {
                    for c in 0..b {
                        out[(u * b + r) * n + v * b + c] = blk[r * b + c];
                    }
                }
            }
        }
        out
    }
}

#[inline]
fn gemv_acc<T: Scalar>(a: &[T], x: &[T], y: &mut [T], b: usize) {
    for r in 0..b {
        let row = &a[r * b..(r + 1) * b];
        let mut s = T::zero();
        for c in 0..b {
            s += row[c] * x[c];
        }
        y[r] += s;
    }
}

/// A grid region: rows `i0..i1` and either all columns (periodic) or the arc
/// `t0, t0+1, …, t0+tlen−1` taken mod nt.
#[derive(Clone, Copy, Debug)]
struct Region {
    i0: usize,
    i1: usize,
    t0: usize,
    tlen: usize,
    periodic: bool,
}

impl Region {
    fn contains(&self, topo: &GridTopology, node: usize) -> bool {
        let (i, t) = (node / topo.nt, node % topo.nt);
        if i < self.i0 || i >= self.i1 {
            return false;
        }
        self.periodic || (t + topo.nt - self.t0) % topo.nt < self.tlen
    }

    fn size(&self) -> usize {
        (self.i1 - self.i0) * self.tlen
    }

    fn nodes(&self, topo: &GridTopology) -> Vec<usize> {
        let mut v = Vec::with_capacity(self.size());
        for i in self.i0..self.i1 {
            for dt in 0..self.tlen {
                v.push(topo.node(i, (self.t0 + dt) % topo.nt));
            }
        }
        v
    }
}

#[derive(Clone, Debug)]
struct FrontPattern {
    sep: Vec<usize>,
    bnd: Vec<usize>,
    nchildren: usize,
}

/// Elimination tree from nested dissection, in postorder.
#[derive(Clone, Debug)]
pub struct Symbolic {
    topo: Arc<GridTopology>,
    fronts: Vec<FrontPattern>,
}

impl Symbolic {
    /// Nested dissection down to regions of at most `leaf` nodes.
    pub fn nested_dissection(topo: Arc<GridTopology>, leaf: usize) -> Self {
        let mut fronts = Vec::new();
        let root = Region {
            i0: 0,
            i1: topo.ni,
            t0: 0,
            tlen: topo.nt,
            periodic: topo.periodic,
        };
        if root.size() > 0 {
            dissect(&topo, root, leaf.max(1), &mut fronts);
        }
        Self { topo, fronts }
    }

    pub fn topology(&self) -> &Arc<GridTopology> {
        &self.topo
    }

    pub fn front_count(&self) -> usize {
        self.fronts.len()
    }

    /// Multiply-adds of a factorization with `b` unknowns per node.
    pub fn factor_macs(&self, b: usize) -> f64 {
        let mut tot = 0.0;
        for f in &self.fronts {
            let nf = ((f.sep.len() + f.bnd.len()) * b) as f64;
            let ns = (f.sep.len() * b) as f64;
            // Σ_{j<ns} (nf − j)² / 2
            tot += (nf.powi(3) - (nf - ns).powi(3)) / 6.0;
        }
        tot
    }

    /// Largest front dimension in nodes.
    pub fn max_front_nodes(&self) -> usize {
        self.fronts.iter().map(|f| f.sep.len() + f.bnd.len()).max().unwrap_or(0)
    }
}

fn dissect(topo: &GridTopology, r: Region, leaf: usize, out: &mut Vec<FrontPattern>) {
    let ilen = r.i1 - r.i0;
    let mut children = Vec::new();
    let sep: Vec<usize>;
    if r.size() <= leaf {
        sep = r.nodes(topo);
    } else if r.periodic {
        if ilen >= 3 && ilen > topo.nt / 2 {
            let im = r.i0 + ilen / 2;
            sep = (0..topo.nt).map(|t| topo.node(im, t)).collect();
            children.push(Region { i1: im, ..r });
            children.push(Region { i0: im + 1, ..r });
        } else {
            sep = (r.i0..r.i1).map(|i| topo.node(i, r.t0)).collect();
            children.push(Region {
                t0: (r.t0 + 1) % topo.nt,
                tlen: topo.nt - 1,
                periodic: false,
                ..r
            });
        }
    } else if r.tlen >= ilen {
        let half = r.tlen / 2;
        let tm = (r.t0 + half) % topo.nt;
        sep = (r.i0..r.i1).map(|i| topo.node(i, tm)).collect();
        children.push(Region { tlen: half, ..r });
        children.push(Region {
            t0: (tm + 1) % topo.nt,
            tlen: r.tlen - half - 1,
            ..r
        });
    } else {
        let im = r.i0 + ilen / 2;
        sep = (0..r.tlen).map(|dt| topo.node(im, (r.t0 + dt) % topo.nt)).collect();
        children.push(Region { i1: im, ..r });
        children.push(Region { i0: im + 1, ..r });
    }
    let mut nchildren = 0;
    for c in children {
        if c.size() > 0 {
            dissect(topo, c, leaf, out);
            nchildren += 1;
        }
    }
    let mut bnd = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for u in r.nodes(topo) {
        for &v in topo.neighbors(u) {
            if !r.contains(topo, v) && seen.insert(v) {
                bnd.push(v);
            }
        }
    }
    out.push(FrontPattern { sep, bnd, nchildren });
}

#[derive(Clone, Debug)]
struct FrontFactor<T> {
    dofs: Vec<usize>,
    ns: usize,
    /// nf × ns, column-major; lower trapezoid is meaningful.
    l: Vec<T>,
}

/// Cholesky factor L Lᴴ of A + σI.
#[derive(Clone, Debug)]
pub struct CholeskyFactor<T> {
    n: usize,
    fronts: Vec<FrontFactor<T>>,
}

/// Factors `A + shift·I`. Fails with `Error::Factorization` when a pivot is
/// not positive, i.e. the shifted matrix is not positive definite.
pub fn factor<T: Scalar>(sym: &Symbolic, a: &BlockMatrix<T>, shift: f64) -> Result<CholeskyFactor<T>> {
    let topo = &sym.topo;
    let b = a.b;
    let mut pos = vec![usize::MAX; topo.nodes()];
    let mut stack: Vec<(Vec<T>, Vec<usize>)> = Vec::new();
    let mut fronts = Vec::with_capacity(sym.fronts.len());
    for fp in &sym.fronts {
        let nodes: Vec<usize> = fp.sep.iter().chain(fp.bnd.iter()).copied().collect();
        for (p, &u) in nodes.iter().enumerate() {
            pos[u] = p;
        }
        let nf = nodes.len() * b;
        let ns = fp.sep.len() * b;
        let mut f = vec![T::zero(); nf * nf];
        for (pu, &u) in fp.sep.iter().enumerate() {
            let d = a.diag_block(u);
            for r in 0..b {
                for c in 0..=r {
                    f[(pu * b + r) + (pu * b + c) * nf] += d[r * b + c];
                }
                f[(pu * b + r) * (nf + 1)] += T::from_re(shift);
            }
            for &v in topo.neighbors(u) {
                let pv = pos[v];
                if pv == usize::MAX || (pv >= pu && pv < fp.sep.len()) {
                    continue;
                }
                let blk = a.block(u, v);
                if pv < pu {
                    for r in 0..b {
                        for c in 0..b {
                            f[(pu * b + r) + (pv * b + c) * nf] += blk[r * b + c];
                        }
                    }
                } else {
                    for r in 0..b {
                        for c in 0..b {
                            f[(pv * b + c) + (pu * b + r) * nf] += blk[r * b + c].conj();
                        }
                    }
                }
            }
        }
        for _ in 0..fp.nchildren {
            let (upd, cb) = stack.pop().expect("elimination tree out of order");
            let nc = cb.len() * b;
            for (q2, &v2) in cb.iter().enumerate() {
                let p2 = pos[v2];
                debug_assert!(p2 != usize::MAX);
                for (q1, &v1) in cb.iter().enumerate().skip(q2) {
                    let p1 = pos[v1];
                    for c in 0..b {
                        let r0 = if q1 == q2 { c } else { 0 };
                        for r in r0..b {
                            let val = upd[(q1 * b + r) + (q2 * b + c) * nc];
                            let (gr, gc) = (p1 * b + r, p2 * b + c);
                            if gr >= gc {
                                f[gr + gc * nf] += val;
                            } else {
                                f[gc + gr * nf] += val.conj();
                            }
                        }
                    }
                }
            }
        }
        for &u in &nodes {
            pos[u] = usize::MAX;
        }
        partial_cholesky(&mut f, nf, ns)
            .map_err(|j| Error::Factorization(format!("non-positive pivot at local column {j} (shift {shift:e})")))?;
        let nb = nf - ns;
        if nb > 0 {
            let mut upd = vec![T::zero(); nb * nb];
            for c in 0..nb {
                let src = &f[(ns + c) * nf + ns..(ns + c + 1) * nf];
                upd[c * nb + c..(c + 1) * nb].copy_from_slice(&src[c..]);
            }
            stack.push((upd, fp.bnd.clone()));
        }
        f.truncate(nf * ns);
        let dofs = nodes.iter().flat_map(|&u| (0..b).map(move |r| u * b + r)).collect();
        fronts.push(FrontFactor { dofs, ns, l: f });
    }
    Ok(CholeskyFactor { n: a.dim(), fronts })
}

const PANEL: usize = 32;

/// Factors the leading `ns` columns of the hermitian `nf × nf` column-major
/// matrix (lower triangle) and leaves the Schur complement in the trailing block.
fn partial_cholesky<T: Scalar>(f: &mut [T], nf: usize, ns: usize) -> std::result::Result<(), usize> {
    let mut pre = Vec::new();
    let mut pim = Vec::new();
    let mut p0 = 0;
    while p0 < ns {
        let p1 = (p0 + PANEL).min(ns);
        for j in p0..p1 {
            let d = f[j + j * nf].re();
            if !(d > 0.0) || !d.is_finite() {
                return Err(j);
            }
            let d = d.sqrt();
            f[j + j * nf] = T::from_re(d);
            let inv = 1.0 / d;
            for v in &mut f[j * nf + j + 1..(j + 1) * nf] {
                *v = v.scale(inv);
            }
            for c in j + 1..p1 {
                let (left, right) = f.split_at_mut(c * nf);
                let colj = &left[j * nf..(j + 1) * nf];
                let lc = colj[c].conj();
                let colc = &mut right[..nf];
                for r in c..nf {
                    colc[r] -= colj[r] * lc;
                }
            }
        }
        let w = p1 - p0;
        let m = nf - p1;
        if m > 0 {
            let wp = w.div_ceil(4) * 4;
            pre.clear();
            pre.resize(m * wp, 0.0);
            if T::IS_COMPLEX {
                pim.clear();
                pim.resize(m * wp, 0.0);
            }
            for q in 0..w {
                let col = &f[(p0 + q) * nf + p1..(p0 + q + 1) * nf];
                for (r, v) in col.iter().enumerate() {
                    pre[r * wp + q] = v.re();
                    if T::IS_COMPLEX {
                        pim[r * wp + q] = v.im();
                    }
                }
            }
            if T::IS_COMPLEX {
                herk_tiled(f, nf, p1, m, wp, &pre, &pim);
                p0 = p1;
                continue;
            }
            for c in 0..m {
                let col = &mut f[(p1 + c) * nf + p1..(p1 + c + 1) * nf];
                let cr = &pre[c * wp..(c + 1) * wp];
                if T::IS_COMPLEX {
                    let ci = &pim[c * wp..(c + 1) * wp];
                    for r in c..m {
                        let (sr, si) = dot_herm(&pre[r * wp..(r + 1) * wp], &pim[r * wp..(r + 1) * wp], cr, ci);
                        col[r] -= T::from_parts(sr, si);
                    }
                } else {
                    for r in c..m {
                        col[r] -= T::from_re(dot_real(&pre[r * wp..(r + 1) * wp], cr));
                    }
                }
            }
        }
        p0 = p1;
    }
    Ok(())
}

/// Trailing update F[p1.., p1..] −= P Pᴴ (lower triangle) for complex P held
/// as split parts, `m` rows of stride `wp`, two rows by two columns at a time.
fn herk_tiled<T: Scalar>(f: &mut [T], nf: usize, p1: usize, m: usize, wp: usize, pre: &[f64], pim: &[f64]) {
    let row = |r: usize| (&pre[r * wp..(r + 1) * wp], &pim[r * wp..(r + 1) * wp]);
    let mut c = 0;
    while c < m {
        if c + 1 == m {
            let (cr, ci) = row(c);
            let (sr, si) = dot_herm(cr, ci, cr, ci);
            f[(p1 + c) * nf + p1 + c] -= T::from_parts(sr, si);
            break;
        }
        let (c0r, c0i) = row(c);
        let (c1r, c1i) = row(c + 1);
        // 2×2 diagonal tile: (c, c), (c+1, c), (c+1, c+1)
        {
            let (s00r, s00i) = dot_herm(c0r, c0i, c0r, c0i);
            let (s10r, s10i) = dot_herm(c1r, c1i, c0r, c0i);
            let (s11r, s11i) = dot_herm(c1r, c1i, c1r, c1i);
            f[(p1 + c) * nf + p1 + c] -= T::from_parts(s00r, s00i);
            f[(p1 + c) * nf + p1 + c + 1] -= T::from_parts(s10r, s10i);
            f[(p1 + c + 1) * nf + p1 + c + 1] -= T::from_parts(s11r, s11i);
        }
        let mut r = c + 2;
        while r + 1 < m {
            let (a0r, a0i) = row(r);
            let (a1r, a1i) = row(r + 1);
            let s = dot_herm_2x2([a0r, a0i, a1r, a1i], [c0r, c0i, c1r, c1i]);
            f[(p1 + c) * nf + p1 + r] -= T::from_parts(s[0], s[1]);
            f[(p1 + c) * nf + p1 + r + 1] -= T::from_parts(s[2], s[3]);
            f[(p1 + c + 1) * nf + p1 + r] -= T::from_parts(s[4], s[5]);
            f[(p1 + c + 1) * nf + p1 + r + 1] -= T::from_parts(s[6], s[7]);
            r += 2;
        }
        if r < m {
            let (ar, ai) = row(r);
            let (s0r, s0i) = dot_herm(ar, ai, c0r, c0i);
            let (s1r, s1i) = dot_herm(ar, ai, c1r, c1i);
            f[(p1 + c) * nf + p1 + r] -= T::from_parts(s0r, s0i);
            f[(p1 + c + 1) * nf + p1 + r] -= T::from_parts(s1r, s1i);
        }
        c += 2;
    }
}

/// a_i·conj(b_j) sums for two rows a and two rows b, returned as
/// [(a0,b0), (a1,b0), (a0,b1), (a1,b1)] in (re, im) pairs.
#[inline(always)]
fn dot_herm_2x2(a: [&[f64]; 4], b: [&[f64]; 4]) -> [f64; 8] {
    let mut acc = [[0.0f64; 2]; 8];
    let it = a[0]
        .chunks_exact(2)
        .zip(a[1].chunks_exact(2))
        .zip(a[2].chunks_exact(2).zip(a[3].chunks_exact(2)))
        .zip(b[0].chunks_exact(2).zip(b[1].chunks_exact(2)))
        .zip(b[2].chunks_exact(2).zip(b[3].chunks_exact(2)));
    for ((((x0r, x0i), (x1r, x1i)), (y0r, y0i)), (y1r, y1i)) in it {
        for l in 0..2 {
            acc[0][l] += x0r[l] * y0r[l] + x0i[l] * y0i[l];
            acc[1][l] += x0i[l] * y0r[l] - x0r[l] * y0i[l];
            acc[2][l] += x1r[l] * y0r[l] + x1i[l] * y0i[l];
            acc[3][l] += x1i[l] * y0r[l] - x1r[l] * y0i[l];
            acc[4][l] += x0r[l] * y1r[l] + x0i[l] * y1i[l];
            acc[5][l] += x0i[l] * y1r[l] - x0r[l] * y1i[l];
            acc[6][l] += x1r[l] * y1r[l] + x1i[l] * y1i[l];
            acc[7][l] += x1i[l] * y1r[l] - x1r[l] * y1i[l];
        }
    }
    let mut out = [0.0; 8];
    for (o, a) in out.iter_mut().zip(acc) {
        *o = a[0] + a[1];
    }
    out
}

/// Σ a·conj(b) for split real/imaginary parts; lengths are multiples of 4.
#[inline(always)]
fn dot_herm(ar: &[f64], ai: &[f64], br: &[f64], bi: &[f64]) -> (f64, f64) {
    let mut sr = [0.0f64; 4];
    let mut si = [0.0f64; 4];
    for (((a, b), c), d) in ar
        .chunks_exact(4)
        .zip(ai.chunks_exact(4))
        .zip(br.chunks_exact(4))
        .zip(bi.chunks_exact(4))
    {
        for l in 0..4 {
            sr[l] += a[l] * c[l] + b[l] * d[l];
            si[l] += b[l] * c[l] - a[l] * d[l];
        }
    }
    (sr[0] + sr[1] + sr[2] + sr[3], si[0] + si[1] + si[2] + si[3])
}

#[inline(always)]
fn dot_real(a: &[f64], b: &[f64]) -> f64 {
    let mut s = [0.0f64; 4];
    for (x, y) in a.chunks_exact(4).zip(b.chunks_exact(4)) {
        for l in 0..4 {
            s[l] += x[l] * y[l];
        }
    }
    s[0] + s[1] + s[2] + s[3]
}

impl<T: Scalar> CholeskyFactor<T> {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored factor entries.
    pub fn nnz(&self) -> usize {
        self.fronts.iter().map(|f| f.l.len()).sum()
    }

    /// Solves (A + σI) X = B in place. `x` holds `nrhs` right-hand sides
    /// interleaved per unknown: `x[dof * nrhs + q]`.
    pub fn solve_in_place(&self, x: &mut [T], nrhs: usize) {
        assert_eq!(x.len(), self.n * nrhs);
        let mut w: Vec<T> = Vec::new();
        for fr in &self.fronts {
            let nf = fr.dofs.len();
            gather(&mut w, x, &fr.dofs, nrhs);
            for j in 0..fr.ns {
                let col = &fr.l[j * nf..(j + 1) * nf];
                let inv = 1.0 / col[j].re();
                let (head, tail) = w.split_at_mut((j + 1) * nrhs);
                let wj = &mut head[j * nrhs..];
                for v in wj.iter_mut() {
                    *v = v.scale(inv);
                }
                for r in j + 1..nf {
                    let lr = col[r];
                    let wr = &mut tail[(r - j - 1) * nrhs..(r - j) * nrhs];
                    for q in 0..nrhs {
                        wr[q] -= lr * wj[q];
                    }
                }
            }
            for (p, &d) in fr.dofs.iter().enumerate() {
                x[d * nrhs..(d + 1) * nrhs].copy_from_slice(&w[p * nrhs..(p + 1) * nrhs]);
            }
        }
        for fr in self.fronts.iter().rev() {
            let nf = fr.dofs.len();
            gather(&mut w, x, &fr.dofs, nrhs);
            let mut acc = vec![T::zero(); nrhs];
            for j in (0..fr.ns).rev() {
                let col = &fr.l[j * nf..(j + 1) * nf];
                acc.copy_from_slice(&w[j * nrhs..(j + 1) * nrhs]);
                for r in j + 1..nf {
                    let lr = col[r].conj();
                    let wr = &w[r * nrhs..(r + 1) * nrhs];
                    for q in 0..nrhs {
                        acc[q] -= lr * wr[q];
                    }
                }
                let inv = 1.0 / col[j].re();
                for q in 0..nrhs {
                    w[j * nrhs + q] = acc[q].scale(inv);
                }
            }
            for (p, &d) in fr.dofs[..fr.ns].iter().enumerate() {
                x[d * nrhs..(d + 1) * nrhs].copy_from_slice(&w[p * nrhs..(p + 1) * nrhs]);
            }
        }
    }
}

fn gather<T: Scalar>(w: &mut Vec<T>, x: &[T], dofs: &[usize], nrhs: usize) {
    w.clear();
    for &d in dofs {
        w.extend_from_slice(&x[d * nrhs..(d + 1) * nrhs]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(topo: Arc<GridTopology>, b: usize, seed: u64) -> BlockMatrix<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = BlockMatrix::zeros(topo.clone(), b);
        for u in 0..topo.nodes() {
            for r in 0..b {
                a.add_diagonal(u, r, 20.0);
                for c in 0..r {
                    let z = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
                    a.add_coupling(u, r, u, c, z);
                }
            }
            for &v in topo.neighbors(u) {
                if v > u {
                    for r in 0..b {
                        for c in 0..b {
                            let z = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
                            a.add_coupling(u, r, v, c, z);
                        }
                    }
                }
            }
        }
        a
    }

    fn check_solve(ni: usize, nt: usize, periodic: bool, b: usize, leaf: usize) {
        let topo = Arc::new(GridTopology::new(ni, nt, periodic));
        let a = random_matrix(topo.clone(), b, 7);
        assert_eq!(a.hermiticity_defect(), 0.0);
        let sym = Symbolic::nested_dissection(topo, leaf);
        let shift = 0.5;
        let fac = factor(&sym, &a, shift).unwrap();
        let n = a.dim();
        let nrhs = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<Complex64> = (0..n * nrhs)
            .map(|_| Complex64::new(rng.random::<f64>(), rng.random::<f64>()))
            .collect();
        let mut bvec = vec![Complex64::new(0.0, 0.0); n * nrhs];
        for q in 0..nrhs {
            let xq: Vec<Complex64> = (0..n).map(|d| xs[d * nrhs + q]).collect();
            let mut yq = vec![Complex64::new(0.0, 0.0); n];
            a.matvec(&xq, &mut yq);
            for d in 0..n {
                bvec[d * nrhs + q] = yq[d] + xq[d] * shift;
            }
        }
        fac.solve_in_place(&mut bvec, nrhs);
        let err = bvec.iter().zip(&xs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10, "solve error {err}");
    }

    #[test]
    fn solves_periodic_grids() {
        check_solve(7, 9, true, 2, 4);
        check_solve(12, 6, true, 3, 8);
        check_solve(5, 16, true, 1, 1);
    }

    #[test]
    fn solves_open_grids() {
        check_solve(6, 7, false, 2, 4);
        check_solve(1, 10, false, 4, 2);
    }

    #[test]
    fn detects_indefinite() {
        let topo = Arc::new(GridTopology::new(4, 4, true));
        let mut a = BlockMatrix::<f64>::zeros(topo.clone(), 1);
        for u in 0..topo.nodes() {
            a.add_diagonal(u, 0, 1.0);
        }
        let sym = Symbolic::nested_dissection(topo, 2);
        assert!(factor(&sym, &a, -2.0).is_err());
        assert!(factor(&sym, &a, 0.0).is_ok());
    }
}
