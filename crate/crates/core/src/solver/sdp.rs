//! Infeasible-start primal-dual interior point method for block SDPs.
//!
//! Internally the SDPA pair is rewritten as
//! `min ⟨C, X⟩ s.t. ⟨A_i, X⟩ = b_i, X ⪰ 0` with `C = −F_0`, `A_i = F_i`,
//! `b = c`, whose dual `max bᵀy s.t. Σ y_i A_i + Z = C` gives `x = −y`.
//! Search directions are HKM with a Mehrotra predictor-corrector.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{SolverError, Status};
use crate::sdp_model::SdpaProblem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BlockMatrix {
    Dense(DMatrix<f64>),
    Diagonal(Vec<f64>),
}

impl BlockMatrix {
    pub fn size(&self) -> usize {
        match self {
            BlockMatrix::Dense(m) => m.nrows(),
            BlockMatrix::Diagonal(v) => v.len(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            BlockMatrix::Dense(m) => m.clone(),
            BlockMatrix::Diagonal(v) => DMatrix::from_diagonal(&DVector::from_column_slice(v)),
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        match self {
            BlockMatrix::Dense(m) => {
                if m.nrows() == 0 {
                    return f64::INFINITY;
                }
                let s = (m + m.transpose()) * 0.5;
                s.symmetric_eigenvalues().min()
            }
            BlockMatrix::Diagonal(v) => v.iter().cloned().fold(f64::INFINITY, f64::min),
        }
    }

    fn inner(&self, o: &BlockMatrix) -> f64 {
        match (self, o) {
            (BlockMatrix::Dense(a), BlockMatrix::Dense(b)) => a.dot(b),
            (BlockMatrix::Diagonal(a), BlockMatrix::Diagonal(b)) => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            _ => unreachable!("block kinds differ"),
        }
    }

    fn norm2(&self) -> f64 {
        self.inner(self)
    }

    fn axpy(&mut self, alpha: f64, o: &BlockMatrix) {
        match (self, o) {
            (BlockMatrix::Dense(a), BlockMatrix::Dense(b)) => a.zip_apply(b, |x, y| *x += alpha * y),
            (BlockMatrix::Diagonal(a), BlockMatrix::Diagonal(b)) => {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += alpha * y;
                }
            }
            _ => unreachable!("block kinds differ"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: Status,
    /// `cᵀx`.
    pub primal_objective: f64,
    /// `⟨F_0, Y⟩`.
    pub dual_objective: f64,
    pub x: Vec<f64>,
    /// Dual matrix `Y`.
    pub y: Vec<BlockMatrix>,
    /// Slack `Σ x_i F_i − F_0`.
    pub slack: Vec<BlockMatrix>,
    pub relative_gap: f64,
    /// Relative residual of `⟨F_i, Y⟩ = c_i`.
    pub equality_residual: f64,
    /// Relative residual of the slack identity.
    pub slack_residual: f64,
    pub iterations: usize,
}

impl SolveResult {
    /// Midpoint of the two objectives.
    pub fn objective(&self) -> f64 {
        0.5 * (self.primal_objective + self.dual_objective)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdpOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Fraction of the distance to the boundary taken per step.
    pub step_fraction: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100, step_fraction: 0.98 }
    }
}

pub fn solve_sdp(p: &SdpaProblem, tol: f64, max_iter: usize) -> Result<SolveResult, SolverError> {
    solve_sdp_with(p, &SdpOptions { tol, max_iter, ..SdpOptions::default() })
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    k: usize,
    l: usize,
    v: f64,
}

struct Data {
    m: usize,
    diag: Vec<bool>,
    sizes: Vec<usize>,
    c: Vec<BlockMatrix>,
    b: Vec<f64>,
    scale: Vec<f64>,
    /// Per block: constraints touching it with their upper-triangle entries.
    by_block: Vec<Vec<(usize, Vec<Entry>)>>,
}

impl Data {
    fn new(p: &SdpaProblem) -> Result<Self, SolverError> {
        p.validate().map_err(|e| SolverError::InvalidProblem(e.to_string()))?;
        let nb = p.blocks.len();
        let sizes: Vec<usize> = (0..nb).map(|b| p.block_size(b)).collect();
        let diag: Vec<bool> = (0..nb).map(|b| p.is_diagonal(b)).collect();
        let canon = p.canonical();
        let mut c: Vec<BlockMatrix> = (0..nb)
            .map(|b| if diag[b] { BlockMatrix::Diagonal(vec![0.0; sizes[b]]) } else { BlockMatrix::Dense(DMatrix::zeros(sizes[b], sizes[b])) })
            .collect();
        let mut raw: Vec<Vec<Vec<Entry>>> = vec![vec![Vec::new(); nb]; p.m];
        let mut norm2 = vec![0.0; p.m];
        for e in &canon.entries {
            if e.mat == 0 {
                match &mut c[e.block] {
                    BlockMatrix::Dense(a) => {
                        a[(e.i, e.j)] -= e.value;
                        if e.i != e.j {
                            a[(e.j, e.i)] -= e.value;
                        }
                    }
                    BlockMatrix::Diagonal(a) => a[e.i] -= e.value,
                }
            } else {
                let i = e.mat - 1;
                norm2[i] += if e.i == e.j { e.value * e.value } else { 2.0 * e.value * e.value };
                raw[i][e.block].push(Entry { k: e.i, l: e.j, v: e.value });
            }
        }
        let scale: Vec<f64> = norm2.iter().map(|s| s.sqrt()).collect();
        if let Some(i) = scale.iter().position(|&s| s == 0.0) {
            return Err(SolverError::InvalidProblem(format!("constraint matrix F_{} is zero", i + 1)));
        }
        let mut by_block: Vec<Vec<(usize, Vec<Entry>)>> = vec![Vec::new(); nb];
        for (i, blocks) in raw.into_iter().enumerate() {
            for (b, mut ents) in blocks.into_iter().enumerate() {
                if ents.is_empty() {
                    continue;
                }
                for e in ents.iter_mut() {
                    e.v /= scale[i];
                }
                by_block[b].push((i, ents));
            }
        }
        let b = p.c.iter().zip(&scale).map(|(v, s)| v / s).collect();
        Ok(Data { m: p.m, diag, sizes, c, b, scale, by_block })
    }

    fn zeros(&self) -> Vec<BlockMatrix> {
        (0..self.sizes.len())
            .map(|b| {
                if self.diag[b] {
                    BlockMatrix::Diagonal(vec![0.0; self.sizes[b]])
                } else {
                    BlockMatrix::Dense(DMatrix::zeros(self.sizes[b], self.sizes[b]))
                }
            })
            .collect()
    }

    /// `⟨A_i, Y⟩` for all `i`; `Y` need not be symmetric.
    fn apply(&self, y: &[BlockMatrix]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (b, cons) in self.by_block.iter().enumerate() {
            match &y[b] {
                BlockMatrix::Dense(a) => {
                    for (i, ents) in cons {
                        let mut s = 0.0;
                        for e in ents {
                            s += if e.k == e.l { e.v * a[(e.k, e.k)] } else { e.v * (a[(e.k, e.l)] + a[(e.l, e.k)]) };
                        }
                        out[*i] += s;
                    }
                }
                BlockMatrix::Diagonal(a) => {
                    for (i, ents) in cons {
                        out[*i] += ents.iter().map(|e| e.v * a[e.k]).sum::<f64>();
                    }
                }
            }
        }
        out
    }

    /// `Σ y_i A_i`.
    fn apply_t(&self, y: &[f64]) -> Vec<BlockMatrix> {
        let mut out = self.zeros();
        for (b, cons) in self.by_block.iter().enumerate() {
            match &mut out[b] {
                BlockMatrix::Dense(a) => {
                    for (i, ents) in cons {
                        for e in ents {
                            a[(e.k, e.l)] += y[*i] * e.v;
                            if e.k != e.l {
                                a[(e.l, e.k)] += y[*i] * e.v;
                            }
                        }
                    }
                }
                BlockMatrix::Diagonal(a) => {
                    for (i, ents) in cons {
                        for e in ents {
                            a[e.k] += y[*i] * e.v;
                        }
                    }
                }
            }
        }
        out
    }

    /// Schur complement `M_ij = Σ_b tr(A_i X A_j Z⁻¹)`.
    fn schur(&self, x: &[BlockMatrix], zinv: &[BlockMatrix]) -> DMatrix<f64> {
        let m = self.m;
        let mut big = DMatrix::<f64>::zeros(m, m);
        for (b, cons) in self.by_block.iter().enumerate() {
            if cons.is_empty() {
                continue;
            }
            match (&x[b], &zinv[b]) {
                (BlockMatrix::Dense(xm), BlockMatrix::Dense(g)) => schur_dense(&mut big, cons, xm, g),
                (BlockMatrix::Diagonal(xv), BlockMatrix::Diagonal(gv)) => schur_diag(&mut big, cons, xv, gv, self.sizes[b]),
                _ => unreachable!(),
            }
        }
        (&big + big.transpose()) * 0.5
    }
}

fn schur_dense(big: &mut DMatrix<f64>, cons: &[(usize, Vec<Entry>)], x: &DMatrix<f64>, g: &DMatrix<f64>) {
    let n = x.nrows();
    // Positions (upper triangle) needed when evaluating ⟨A_i, T⟩.
    let mut mask = vec![false; n * n];
    let mut support: Vec<(usize, usize)> = Vec::new();
    for (_, ents) in cons {
        for e in ents {
            if !mask[e.k * n + e.l] {
                mask[e.k * n + e.l] = true;
                support.push((e.k, e.l));
            }
        }
    }
    let mut t = DMatrix::<f64>::zeros(n, n);
    let mut rows: Vec<usize> = Vec::new();
    let mut row_mark = vec![false; n];
    for (j, ents) in cons {
        let full = ents.iter().map(|e| if e.k == e.l { 1 } else { 2 }).sum::<usize>();
        rows.clear();
        for e in ents {
            for r in [e.k, e.l] {
                if !row_mark[r] {
                    row_mark[r] = true;
                    rows.push(r);
                }
            }
        }
        for &r in &rows {
            row_mark[r] = false;
        }
        let masked_cost = full * 2 * support.len();
        let product_cost = n * n * rows.len() + full * n;
        if masked_cost < product_cost {
            for &(k, l) in &support {
                let mut tkl = 0.0;
                let mut tlk = 0.0;
                for e in ents {
                    let (p, q, v) = (e.k, e.l, e.v);
                    tkl += v * x[(k, p)] * g[(q, l)];
                    tlk += v * x[(l, p)] * g[(q, k)];
                    if p != q {
                        tkl += v * x[(k, q)] * g[(p, l)];
                        tlk += v * x[(l, q)] * g[(p, k)];
                    }
                }
                t[(k, l)] = tkl;
                t[(l, k)] = tlk;
            }
        } else {
            // T = X A_j G using only the rows of A_j that are nonzero.
            let r = rows.len();
            let mut ag = DMatrix::<f64>::zeros(r, n);
            let pos = |row: usize| rows.iter().position(|&q| q == row).unwrap();
            for e in ents {
                let pk = pos(e.k);
                for c in 0..n {
                    ag[(pk, c)] += e.v * g[(e.l, c)];
                }
                if e.k != e.l {
                    let pl = pos(e.l);
                    for c in 0..n {
                        ag[(pl, c)] += e.v * g[(e.k, c)];
                    }
                }
            }
            let xs = x.select_columns(rows.iter());
            t = &xs * &ag;
        }
        for (i, ients) in cons {
            let mut s = 0.0;
            for e in ients {
                s += if e.k == e.l { e.v * t[(e.k, e.k)] } else { e.v * (t[(e.k, e.l)] + t[(e.l, e.k)]) };
            }
            big[(*i, *j)] += s;
        }
    }
}

fn schur_diag(big: &mut DMatrix<f64>, cons: &[(usize, Vec<Entry>)], x: &[f64], g: &[f64], n: usize) {
    let total: usize = cons.iter().map(|(_, e)| e.len()).sum();
    let avg = total as f64 / n.max(1) as f64;
    if avg * avg * (n as f64) < 0.25 * (cons.len() * cons.len()) as f64 * n as f64 {
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, ents) in cons {
            for e in ents {
                cols[e.k].push((*i, e.v));
            }
        }
        for (k, col) in cols.iter().enumerate() {
            let d = x[k] * g[k];
            for &(i, a) in col {
                for &(j, c) in col {
                    big[(i, j)] += d * a * c;
                }
            }
        }
    } else {
        let idx: Vec<usize> = cons.iter().map(|(i, _)| *i).collect();
        let mut bmat = DMatrix::<f64>::zeros(idx.len(), n);
        for (r, (_, ents)) in cons.iter().enumerate() {
            for e in ents {
                bmat[(r, e.k)] += e.v * (x[e.k] * g[e.k]).sqrt();
            }
        }
        let prod = &bmat * bmat.transpose();
        for (r, &i) in idx.iter().enumerate() {
            for (s, &j) in idx.iter().enumerate() {
                big[(i, j)] += prod[(r, s)];
            }
        }
    }
}

fn inner(a: &[BlockMatrix], b: &[BlockMatrix]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.inner(y)).sum()
}

fn norm(a: &[BlockMatrix]) -> f64 {
    a.iter().map(|x| x.norm2()).sum::<f64>().sqrt()
}

fn vnorm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn inverse(a: &BlockMatrix) -> Option<BlockMatrix> {
    match a {
        BlockMatrix::Dense(m) => {
            let ch = m.clone().cholesky()?;
            let inv = ch.inverse();
            Some(BlockMatrix::Dense((&inv + inv.transpose()) * 0.5))
        }
        BlockMatrix::Diagonal(v) => {
            if v.iter().any(|&x| x <= 0.0) {
                None
            } else {
                Some(BlockMatrix::Diagonal(v.iter().map(|x| 1.0 / x).collect()))
            }
        }
    }
}

/// Largest `α` with `X + α dX ⪰ 0` (infinite when `dX ⪰ 0`).
fn max_step(x: &BlockMatrix, dx: &BlockMatrix) -> Option<f64> {
    match (x, dx) {
        (BlockMatrix::Dense(xm), BlockMatrix::Dense(dm)) => {
            if xm.nrows() == 0 {
                return Some(f64::INFINITY);
            }
            let ch = xm.clone().cholesky()?;
            let l = ch.l();
            let w1 = l.solve_lower_triangular(dm)?;
            let w = l.solve_lower_triangular(&w1.transpose())?;
            let w = (&w + w.transpose()) * 0.5;
            let lmin = w.symmetric_eigenvalues().min();
            Some(if lmin >= 0.0 { f64::INFINITY } else { -1.0 / lmin })
        }
        (BlockMatrix::Diagonal(xv), BlockMatrix::Diagonal(dv)) => {
            let mut a = f64::INFINITY;
            for (x, d) in xv.iter().zip(dv) {
                if *x <= 0.0 {
                    return None;
                }
                if *d < 0.0 {
                    a = a.min(-x / d);
                }
            }
            Some(a)
        }
        _ => unreachable!(),
    }
}

fn mat(b: &BlockMatrix) -> &DMatrix<f64> {
    match b {
        BlockMatrix::Dense(m) => m,
        _ => unreachable!(),
    }
}

fn solve_schur(mut big: DMatrix<f64>, rhs_list: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, SolverError> {
    let dmax = (0..big.nrows()).map(|i| big[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    for shift in [0.0, 1e-14, 1e-12, 1e-10] {
        if shift > 0.0 {
            for i in 0..big.nrows() {
                big[(i, i)] += shift * dmax;
            }
        }
        if let Some(ch) = big.clone().cholesky() {
            return Ok(rhs_list.iter().map(|r| ch.solve(&DVector::from_column_slice(r)).as_slice().to_vec()).collect());
        }
    }
    let lu = big.lu();
    rhs_list
        .iter()
        .map(|r| {
            lu.solve(&DVector::from_column_slice(r))
                .map(|v| v.as_slice().to_vec())
                .ok_or_else(|| SolverError::Numerical("singular Schur complement".into()))
        })
        .collect()
}

struct Iterate {
    x: Vec<BlockMatrix>,
    y: Vec<f64>,
    z: Vec<BlockMatrix>,
}

pub fn solve_sdp_with(p: &SdpaProblem, opts: &SdpOptions) -> Result<SolveResult, SolverError> {
    let d = Data::new(p)?;
    let nblocks = d.sizes.len();
    let ntotal: usize = d.sizes.iter().sum();
    let nrm_b = vnorm(&p.c);
    let nrm_c = norm(&d.c);

    let mut it = initial_point(&d);
    let mut stalls = 0usize;
    for iter in 0..opts.max_iter {
        let ax = d.apply(&it.x);
        let rp: Vec<f64> = d.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let aty = d.apply_t(&it.y);
        let mut rd = d.c.clone();
        for b in 0..nblocks {
            rd[b].axpy(-1.0, &it.z[b]);
            rd[b].axpy(-1.0, &aty[b]);
        }
        let pobj = inner(&d.c, &it.x);
        let dobj: f64 = d.b.iter().zip(&it.y).map(|(b, y)| b * y).sum();
        let xz = inner(&it.x, &it.z);
        let stats = Stats::new(&d, &it, &rp, &rd, nrm_b, nrm_c, pobj, dobj, xz);
        if stats.converged(opts.tol) {
            return Ok(result(&d, &it, Status::Optimal, iter, &stats));
        }
        // Certificates: a diverging dual ray proves the equality system
        // infeasible, a diverging primal ray proves the matrix inequality is.
        let aty_z = {
            let mut s = aty.clone();
            for b in 0..nblocks {
                s[b].axpy(1.0, &it.z[b]);
            }
            norm(&s)
        };
        if dobj > 0.0 && aty_z < 1e-8 * dobj && vnorm(&it.y) > 1e6 {
            return Ok(result(&d, &it, Status::Unbounded, iter, &stats));
        }
        if pobj < 0.0 && vnorm(&ax) < 1e-8 * -pobj && norm(&it.x) > 1e6 {
            return Ok(result(&d, &it, Status::Infeasible, iter, &stats));
        }

        let mu = xz / ntotal as f64;
        let zinv: Vec<BlockMatrix> = it
            .z
            .iter()
            .map(inverse)
            .collect::<Option<_>>()
            .ok_or_else(|| no_interior(&d, &it, iter, &stats))?;
        let big = d.schur(&it.x, &zinv);
        // X Rd Z⁻¹, shared by predictor and corrector.
        let xrdg: Vec<BlockMatrix> = (0..nblocks)
            .map(|b| match (&it.x[b], &rd[b], &zinv[b]) {
                (BlockMatrix::Dense(x), BlockMatrix::Dense(r), BlockMatrix::Dense(g)) => BlockMatrix::Dense(x * r * g),
                (BlockMatrix::Diagonal(x), BlockMatrix::Diagonal(r), BlockMatrix::Diagonal(g)) => {
                    BlockMatrix::Diagonal(x.iter().zip(r).zip(g).map(|((a, b), c)| a * b * c).collect())
                }
                _ => unreachable!(),
            })
            .collect();
        let a_xrdg = d.apply(&xrdg);
        let a_zinv = d.apply(&zinv);

        // Predictor.
        let rhs_p: Vec<f64> = (0..d.m).map(|i| d.b[i] + a_xrdg[i]).collect();
        let dy_p = solve_schur(big.clone(), &[rhs_p])?.remove(0);
        let (dx_p, dz_p) = directions(&d, &it, &rd, &zinv, &dy_p, 0.0, None);
        let ap = step_or_fail(&it.x, &dx_p).ok_or_else(|| no_interior(&d, &it, iter, &stats))?;
        let ad = step_or_fail(&it.z, &dz_p).ok_or_else(|| no_interior(&d, &it, iter, &stats))?;
        let (ap1, ad1) = (ap.min(1.0), ad.min(1.0));
        let mut xa = it.x.clone();
        let mut za = it.z.clone();
        for b in 0..nblocks {
            xa[b].axpy(ap1, &dx_p[b]);
            za[b].axpy(ad1, &dz_p[b]);
        }
        let mu_aff = inner(&xa, &za) / ntotal as f64;
        let expon = (3.0 * ap1.min(ad1).powi(2)).max(1.0);
        let sigma = if mu > 0.0 { (mu_aff / mu).max(0.0).powf(expon).min(1.0) } else { 0.0 };

        // Corrector with the second-order term dXp dZp Z⁻¹.
        let k2: Vec<BlockMatrix> = (0..nblocks)
            .map(|b| match (&dx_p[b], &dz_p[b], &zinv[b]) {
                (BlockMatrix::Dense(a), BlockMatrix::Dense(c), BlockMatrix::Dense(g)) => BlockMatrix::Dense(a * c * g),
                (BlockMatrix::Diagonal(a), BlockMatrix::Diagonal(c), BlockMatrix::Diagonal(g)) => {
                    BlockMatrix::Diagonal(a.iter().zip(c).zip(g).map(|((x, y), z)| x * y * z).collect())
                }
                _ => unreachable!(),
            })
            .collect();
        let a_k2 = d.apply(&k2);
        let smu = sigma * mu;
        let rhs_c: Vec<f64> = (0..d.m).map(|i| d.b[i] - smu * a_zinv[i] + a_xrdg[i] + a_k2[i]).collect();
        let dy = solve_schur(big, &[rhs_c])?.remove(0);
        let (dx, dz) = directions(&d, &it, &rd, &zinv, &dy, smu, Some(&k2));
        let ap = step_or_fail(&it.x, &dx).ok_or_else(|| no_interior(&d, &it, iter, &stats))?;
        let ad = step_or_fail(&it.z, &dz).ok_or_else(|| no_interior(&d, &it, iter, &stats))?;
        let gamma = opts.step_fraction.min(0.9 + 0.09 * ap.min(ad).min(1.0));
        let ap = (gamma * ap).min(1.0);
        let ad = (gamma * ad).min(1.0);
        for b in 0..nblocks {
            it.x[b].axpy(ap, &dx[b]);
            it.z[b].axpy(ad, &dz[b]);
        }
        for i in 0..d.m {
            it.y[i] += ad * dy[i];
        }
        if ap.max(ad) < 1e-8 {
            stalls += 1;
            if stalls >= 3 {
                return Err(no_interior(&d, &it, iter + 1, &stats));
            }
        } else {
            stalls = 0;
        }
    }
    let ax = d.apply(&it.x);
    let rp: Vec<f64> = d.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let aty = d.apply_t(&it.y);
    let mut rd = d.c.clone();
    for b in 0..nblocks {
        rd[b].axpy(-1.0, &it.z[b]);
        rd[b].axpy(-1.0, &aty[b]);
    }
    let pobj = inner(&d.c, &it.x);
    let dobj: f64 = d.b.iter().zip(&it.y).map(|(b, y)| b * y).sum();
    let xz = inner(&it.x, &it.z);
    let stats = Stats::new(&d, &it, &rp, &rd, nrm_b, nrm_c, pobj, dobj, xz);
    let status = if stats.converged(opts.tol) { Status::Optimal } else { Status::MaxIter };
    Ok(result(&d, &it, status, opts.max_iter, &stats))
}

fn step_or_fail(x: &[BlockMatrix], dx: &[BlockMatrix]) -> Option<f64> {
    let mut a = f64::INFINITY;
    for (xb, db) in x.iter().zip(dx) {
        a = a.min(max_step(xb, db)?);
    }
    Some(a)
}

/// `dZ = Rd − Σ dy_i A_i`, `dX = σμ Z⁻¹ − X − X dZ Z⁻¹ − K`, symmetrized.
fn directions(
    d: &Data,
    it: &Iterate,
    rd: &[BlockMatrix],
    zinv: &[BlockMatrix],
    dy: &[f64],
    smu: f64,
    k2: Option<&Vec<BlockMatrix>>,
) -> (Vec<BlockMatrix>, Vec<BlockMatrix>) {
    let atdy = d.apply_t(dy);
    let mut dz = rd.to_vec();
    for b in 0..dz.len() {
        dz[b].axpy(-1.0, &atdy[b]);
    }
    let dx = (0..dz.len())
        .map(|b| match (&it.x[b], &dz[b], &zinv[b]) {
            (BlockMatrix::Dense(x), BlockMatrix::Dense(dzb), BlockMatrix::Dense(g)) => {
                let mut r = g * smu - x - x * dzb * g;
                if let Some(k) = k2 {
                    r -= mat(&k[b]);
                }
                BlockMatrix::Dense((&r + r.transpose()) * 0.5)
            }
            (BlockMatrix::Diagonal(x), BlockMatrix::Diagonal(dzb), BlockMatrix::Diagonal(g)) => {
                let mut r: Vec<f64> = (0..x.len()).map(|k| smu * g[k] - x[k] - x[k] * dzb[k] * g[k]).collect();
                if let Some(BlockMatrix::Diagonal(kv)) = k2.map(|k| &k[b]) {
                    for (a, c) in r.iter_mut().zip(kv) {
                        *a -= c;
                    }
                }
                BlockMatrix::Diagonal(r)
            }
            _ => unreachable!(),
        })
        .collect();
    (dx, dz)
}

fn initial_point(d: &Data) -> Iterate {
    let nblocks = d.sizes.len();
    let mut x = Vec::with_capacity(nblocks);
    let mut z = Vec::with_capacity(nblocks);
    for b in 0..nblocks {
        let n = d.sizes[b] as f64;
        let mut xi = 10f64.max(n.sqrt());
        let mut eta = 10f64.max(n.sqrt());
        for (i, ents) in &d.by_block[b] {
            let nrm = ents.iter().map(|e| if e.k == e.l { e.v * e.v } else { 2.0 * e.v * e.v }).sum::<f64>().sqrt();
            xi = xi.max(n * (1.0 + d.b[*i].abs()) / (1.0 + nrm));
            eta = eta.max(nrm);
        }
        eta = eta.max(d.c[b].norm2().sqrt());
        if d.diag[b] {
            x.push(BlockMatrix::Diagonal(vec![xi; d.sizes[b]]));
            z.push(BlockMatrix::Diagonal(vec![eta; d.sizes[b]]));
        } else {
            x.push(BlockMatrix::Dense(DMatrix::identity(d.sizes[b], d.sizes[b]) * xi));
            z.push(BlockMatrix::Dense(DMatrix::identity(d.sizes[b], d.sizes[b]) * eta));
        }
    }
    Iterate { x, y: vec![0.0; d.m], z }
}

struct Stats {
    pobj: f64,
    dobj: f64,
    rel_gap: f64,
    pinf: f64,
    dinf: f64,
}

impl Stats {
    #[allow(clippy::too_many_arguments)]
    fn new(d: &Data, _it: &Iterate, rp: &[f64], rd: &[BlockMatrix], nrm_b: f64, nrm_c: f64, pobj: f64, dobj: f64, xz: f64) -> Self {
        let rp_orig: f64 = rp.iter().zip(&d.scale).map(|(r, s)| (r * s).powi(2)).sum::<f64>().sqrt();
        let denom = 1.0 + pobj.abs() + dobj.abs();
        Stats {
            pobj,
            dobj,
            rel_gap: ((pobj - dobj).abs()).max(xz.abs()) / denom,
            pinf: rp_orig / (1.0 + nrm_b),
            dinf: norm(rd) / (1.0 + nrm_c),
        }
    }

    fn converged(&self, tol: f64) -> bool {
        self.rel_gap <= tol && self.pinf <= tol && self.dinf <= tol
    }
}

fn result(d: &Data, it: &Iterate, status: Status, iterations: usize, s: &Stats) -> SolveResult {
    let x: Vec<f64> = it.y.iter().zip(&d.scale).map(|(y, sc)| -y / sc).collect();
    SolveResult {
        status,
        primal_objective: -s.dobj,
        dual_objective: -s.pobj,
        x,
        y: it.x.clone(),
        slack: it.z.clone(),
        relative_gap: s.rel_gap,
        equality_residual: s.pinf,
        slack_residual: s.dinf,
        iterations,
    }
}

fn no_interior(d: &Data, it: &Iterate, iterations: usize, s: &Stats) -> SolverError {
    SolverError::NoInterior { iterations, last: Box::new(result(d, it, Status::MaxIter, iterations, s)) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp_model::SdpaBuilder;

    #[test]
    fn diagonal_block_lp() {
        // min x1 + x2 with x1, x2 >= 0 and x1 + x2 >= 1.
        let mut b = SdpaBuilder::new(vec![-3], vec![1.0, 1.0]);
        b.add(1, 0, 0, 0, 1.0);
        b.add(2, 0, 1, 1, 1.0);
        b.add(1, 0, 2, 2, 1.0);
        b.add(2, 0, 2, 2, 1.0);
        b.add(0, 0, 2, 2, 1.0);
        let r = solve_sdp(&b.build(), 1e-9, 100).unwrap();
        assert_eq!(r.status, Status::Optimal);
        assert!((r.primal_objective - 1.0).abs() < 1e-7, "{r:?}");
    }

    #[test]
    fn two_by_two_lmi() {
        // [[x, 1], [1, x]] ⪰ 0 forces x >= 1.
        let mut b = SdpaBuilder::new(vec![2], vec![1.0]);
        b.add(0, 0, 0, 1, -1.0);
        b.add(1, 0, 0, 0, 1.0);
        b.add(1, 0, 1, 1, 1.0);
        let r = solve_sdp(&b.build(), 1e-9, 100).unwrap();
        assert_eq!(r.status, Status::Optimal);
        assert!((r.x[0] - 1.0).abs() < 1e-7);
        assert!((r.dual_objective - 1.0).abs() < 1e-7);
        assert!(r.slack[0].min_eigenvalue() > -1e-9);
        assert!(r.y[0].min_eigenvalue() > -1e-9);
    }

    #[test]
    fn largest_eigenvalue() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.5, -1.0, 3.0, 0.0, 0.5, 0.0, 1.0]);
        let mut b = SdpaBuilder::new(vec![3], vec![1.0]);
        for i in 0..3 {
            b.add(1, 0, i, i, 1.0);
            for j in i..3 {
                b.add(0, 0, i, j, a[(i, j)]);
            }
        }
        let r = solve_sdp(&b.build(), 1e-10, 100).unwrap();
        let lmax = a.symmetric_eigenvalues().max();
        assert!((r.primal_objective - lmax).abs() < 1e-8);
    }

    #[test]
    fn lovasz_theta_of_pentagon() {
        let n = 5;
        let mut c = vec![1.0];
        c.extend(std::iter::repeat(0.0).take(n));
        let mut b = SdpaBuilder::new(vec![n as i64], c);
        for i in 0..n {
            b.add(1, 0, i, i, 1.0);
            for j in i..n {
                b.add(0, 0, i, j, 1.0);
            }
            b.add(2 + i, 0, i, (i + 1) % n, 1.0);
        }
        let r = solve_sdp(&b.build(), 1e-9, 100).unwrap();
        assert_eq!(r.status, Status::Optimal);
        assert!((r.dual_objective - 5f64.sqrt()).abs() < 1e-7, "{}", r.dual_objective);
    }

    #[test]
    fn infeasible_matrix_inequality() {
        // diag(x - 1, -x - 1) ⪰ 0 has no solution.
        let mut b = SdpaBuilder::new(vec![-2], vec![0.0]);
        b.add(1, 0, 0, 0, 1.0);
        b.add(1, 0, 1, 1, -1.0);
        b.add(0, 0, 0, 0, 1.0);
        b.add(0, 0, 1, 1, 1.0);
        let r = solve_sdp(&b.build(), 1e-8, 200).unwrap();
        assert_eq!(r.status, Status::Infeasible);
    }

    #[test]
    fn unbounded_objective() {
        // min -x subject to x >= 0.
        let mut b = SdpaBuilder::new(vec![-1], vec![-1.0]);
        b.add(1, 0, 0, 0, 1.0);
        let r = solve_sdp(&b.build(), 1e-8, 200).unwrap();
        assert_eq!(r.status, Status::Unbounded);
    }

    #[test]
    fn zero_constraint_matrix_is_rejected() {
        let b = SdpaBuilder::new(vec![1], vec![1.0]);
        assert!(matches!(solve_sdp(&b.build(), 1e-8, 10), Err(SolverError::InvalidProblem(_))));
    }
}
