//! Reductions of an invariant program to SDPA block form.
//!
//! `reduce_direct` keeps the `n × n` matrix inequality, `reduce_regular`
//! replaces it by the left regular representation (size `M`), and
//! `reduce_block` by the blocks of a verified block diagonalization. The
//! first three produce matrix-inequality (LMI) programs in the orbit
//! variables; the parametrized block mode produces a Gram-form program whose
//! variables are the block entries.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{InvariantSdp, SdpModelError, SdpaBuilder, SdpaProblem};
use crate::linalg::{self, C64};
use crate::perm_groups::{PairOrbitStructure, StructureConstants};
use crate::solver::{RowKind, SolveResult};
use crate::star_algebra::{regular_rep, BlockDiagonalization};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Form {
    /// `min cᵀx s.t. Σ x_i F_i − F_0 ⪰ 0`, variables are orbit coordinates.
    Lmi,
    /// `max ⟨F_0, Y⟩ s.t. ⟨F_i, Y⟩ = c_i`, variables are block entries.
    Gram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockMode {
    Coefficient,
    Parametrized,
}

/// Affine map from an SDPA solution back to orbit coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub base: Vec<f64>,
    pub from_x: Vec<Vec<(usize, f64)>>,
    /// `(block, i, j, coefficient)` terms read from the dual matrix `Y`.
    pub from_y: Vec<Vec<(usize, usize, usize, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedProgram {
    pub sdpa: SdpaProblem,
    pub form: Form,
    /// Original objective `= sign · (SDPA objective) + offset`.
    pub sign: f64,
    pub offset: f64,
    pub recovery: Recovery,
    pub warnings: Vec<String>,
}

impl ReducedProgram {
    pub fn original_objective(&self, res: &SolveResult) -> f64 {
        self.sign * res.objective() + self.offset
    }

    pub fn recover(&self, res: &SolveResult) -> Vec<f64> {
        let r = &self.recovery;
        let dense: Vec<DMatrix<f64>> = if r.from_y.iter().any(|t| !t.is_empty()) { res.y.iter().map(|b| b.to_dense()).collect() } else { Vec::new() };
        (0..r.base.len())
            .map(|k| {
                let mut v = r.base[k];
                for &(i, c) in &r.from_x[k] {
                    v += c * res.x[i];
                }
                for &(b, i, j, c) in &r.from_y[k] {
                    v += c * dense[b][(i, j)];
                }
                v
            })
            .collect()
    }

    pub fn max_block(&self) -> usize {
        self.sdpa.blocks.iter().filter(|&&b| b > 0).map(|&b| b as usize).max().unwrap_or(0)
    }
}

/// Sparse upper-triangle entries `(block, i, j, value)` of one matrix.
type Triplets = Vec<(usize, usize, usize, f64)>;

fn check_profit(sdp: &InvariantSdp, warnings: &mut Vec<String>) {
    if sdp.m() >= sdp.n * sdp.n && sdp.n > 1 {
        warnings.push(format!("reduction not profitable: {} orbits for a {}×{} matrix", sdp.m(), sdp.n, sdp.n));
    }
}

/// The program with its original `n × n` matrix inequality.
pub fn reduce_direct(sdp: &InvariantSdp, orbits: &PairOrbitStructure) -> Result<ReducedProgram, SdpModelError> {
    sdp.validate()?;
    if orbits.m != sdp.m() || orbits.n != sdp.n {
        return Err(SdpModelError::Invalid("orbit structure does not match the program".into()));
    }
    let classes = sdp.classes();
    let mut class_of = vec![0; sdp.m()];
    for (q, cl) in classes.iter().enumerate() {
        for &r in cl {
            class_of[r] = q;
        }
    }
    let mut g: Vec<Triplets> = vec![Vec::new(); classes.len()];
    for i in 0..sdp.n {
        for j in i..sdp.n {
            g[class_of[orbits.id(i, j)]].push((0, i, j, 1.0));
        }
    }
    lmi_form(sdp, &classes, vec![sdp.n], &g, Vec::new())
}

/// Replaces `X ⪰ 0` by `Σ x_r L(C_r) ⪰ 0` with the regular representation.
pub fn reduce_regular(sdp: &InvariantSdp, sc: &StructureConstants) -> Result<ReducedProgram, SdpModelError> {
    sdp.validate()?;
    if sc.m != sdp.m() || sc.transpose_map != sdp.transpose_map {
        return Err(SdpModelError::Invalid("structure constants do not match the program".into()));
    }
    let mut warnings = Vec::new();
    check_profit(sdp, &mut warnings);
    let rr = regular_rep(sc);
    let classes = sdp.classes();
    let m = sdp.m();
    let g: Vec<Triplets> = classes
        .iter()
        .map(|cl| {
            let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
            for &r in cl {
                for &(s, t, v) in &rr.entries[r] {
                    *acc.entry((s.min(t), s.max(t))).or_insert(0.0) += if s == t { v.value() } else { 0.5 * v.value() };
                }
            }
            let scale = acc.values().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
            acc.into_iter().filter(|(_, v)| v.abs() > 1e-13 * scale).map(|((i, j), v)| (0, i, j, v)).collect()
        })
        .collect();
    lmi_form(sdp, &classes, vec![m], &g, warnings)
}

fn upper_triplets(block: usize, a: &DMatrix<f64>) -> Triplets {
    let tol = 1e-13 * linalg::max_abs(a).max(1e-300);
    let mut out = Vec::new();
    for i in 0..a.nrows() {
        for j in i..a.ncols() {
            if a[(i, j)].abs() > tol {
                out.push((block, i, j, a[(i, j)]));
            }
        }
    }
    out
}

fn block_is_real(bd: &BlockDiagonalization, k: usize) -> bool {
    bd.images.iter().all(|img| linalg::is_real_matrix(&img[k], 1e-10))
}

/// Replaces `X ⪰ 0` by the blocks of `bd` (a block diagonalization of the
/// orbit basis in orbit order).
pub fn reduce_block(sdp: &InvariantSdp, bd: &BlockDiagonalization, mode: BlockMode, tol: f64) -> Result<ReducedProgram, SdpModelError> {
    sdp.validate()?;
    if bd.basis_dim() != sdp.m() || bd.transform.first().is_some_and(|w| w.nrows() != sdp.n) {
        return Err(SdpModelError::Invalid("block diagonalization does not match the program".into()));
    }
    if !(bd.residual <= tol) {
        return Err(SdpModelError::UnverifiedIsomorphism { residual: bd.residual, tol });
    }
    let mut warnings = Vec::new();
    check_profit(sdp, &mut warnings);
    let real: Vec<bool> = (0..bd.block_sizes.len()).map(|k| block_is_real(bd, k)).collect();
    let sizes: Vec<usize> = bd.block_sizes.iter().zip(&real).map(|(&s, &re)| if re { s } else { 2 * s }).collect();
    if real.iter().any(|r| !r) {
        warnings.push("complex blocks embedded as real blocks of twice the size".into());
    }
    match mode {
        BlockMode::Coefficient => {
            let classes = sdp.classes();
            let g: Vec<Triplets> = classes
                .iter()
                .map(|cl| {
                    let mut out = Vec::new();
                    for k in 0..bd.block_sizes.len() {
                        let mut h = DMatrix::<C64>::zeros(bd.block_sizes[k], bd.block_sizes[k]);
                        for &r in cl {
                            h += &bd.images[r][k];
                        }
                        let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
                        let a = if real[k] { h.map(|v| v.re) } else { linalg::real_embedding(&h) };
                        out.extend(upper_triplets(k, &a));
                    }
                    out
                })
                .collect();
            lmi_form(sdp, &classes, sizes, &g, warnings)
        }
        BlockMode::Parametrized => gram_form(sdp, bd, &real, sizes, warnings),
    }
}

/// Solves the equality rows for pivot classes: `x = x0 + N z`.
fn eliminate(rows: &[(Vec<f64>, f64)], q: usize) -> Result<(Vec<f64>, DMatrix<f64>), SdpModelError> {
    if rows.is_empty() {
        return Ok((vec![0.0; q], DMatrix::identity(q, q)));
    }
    let mut a = DMatrix::<f64>::zeros(rows.len(), q + 1);
    for (i, (coef, b)) in rows.iter().enumerate() {
        let s = coef.iter().fold(b.abs(), |m, v| m.max(v.abs())).max(1e-300);
        for j in 0..q {
            a[(i, j)] = coef[j] / s;
        }
        a[(i, q)] = b / s;
    }
    let pivots = linalg::rref(&mut a, 1e-10);
    if pivots.contains(&q) {
        return Err(SdpModelError::Infeasible("linear equalities are inconsistent".into()));
    }
    let free: Vec<usize> = (0..q).filter(|j| !pivots.contains(j)).collect();
    let mut x0 = vec![0.0; q];
    let mut n = DMatrix::<f64>::zeros(q, free.len());
    for (k, &f) in free.iter().enumerate() {
        n[(f, k)] = 1.0;
    }
    for (row, &p) in pivots.iter().enumerate() {
        x0[p] = a[(row, q)];
        for (k, &f) in free.iter().enumerate() {
            n[(p, k)] = -a[(row, f)];
        }
    }
    Ok((x0, n))
}

fn lmi_form(
    sdp: &InvariantSdp,
    classes: &[Vec<usize>],
    psd_sizes: Vec<usize>,
    g: &[Triplets],
    warnings: Vec<String>,
) -> Result<ReducedProgram, SdpModelError> {
    let q = classes.len();
    let class_vec = |v: &[f64]| -> Vec<f64> { classes.iter().map(|cl| cl.iter().map(|&r| v[r]).sum()).collect() };
    let cq = class_vec(&sdp.objective);
    let eq: Vec<(Vec<f64>, f64)> = sdp.rows.iter().filter(|r| r.kind == RowKind::Eq).map(|r| (class_vec(&r.coeffs), r.rhs)).collect();
    let (x0, nmat) = eliminate(&eq, q)?;
    let nfree = nmat.ncols();
    let sign = if sdp.maximize { -1.0 } else { 1.0 };
    let offset: f64 = cq.iter().zip(&x0).map(|(c, x)| c * x).sum();

    // Sign rows Σ coef_q x_q + konst ≥ 0.
    let mut lp_rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for (k, cl) in classes.iter().enumerate() {
        if sdp.nonnegative[cl[0]] {
            let mut e = vec![0.0; q];
            e[k] = 1.0;
            lp_rows.push((e, 0.0));
        }
    }
    for r in &sdp.rows {
        let a = class_vec(&r.coeffs);
        match r.kind {
            RowKind::Eq => {}
            RowKind::Ge => lp_rows.push((a, -r.rhs)),
            RowKind::Le => lp_rows.push((a.iter().map(|v| -v).collect(), r.rhs)),
        }
    }
    let mut lp_kept: Vec<(Vec<f64>, f64)> = Vec::new();
    for (coef, konst) in lp_rows {
        let in_z: Vec<f64> = (0..nfree).map(|k| (0..q).map(|j| coef[j] * nmat[(j, k)]).sum()).collect();
        let c0 = konst + coef.iter().zip(&x0).map(|(a, b)| a * b).sum::<f64>();
        let scale = coef.iter().fold(konst.abs(), |m, v| m.max(v.abs())).max(1e-300);
        if in_z.iter().all(|v| v.abs() <= 1e-12 * scale) {
            if c0 < -1e-9 * scale {
                return Err(SdpModelError::Infeasible("a sign constraint contradicts the equalities".into()));
            }
            continue;
        }
        lp_kept.push((in_z, c0));
    }

    let mut blocks: Vec<i64> = psd_sizes.iter().map(|&s| s as i64).collect();
    let lp_block = blocks.len();
    if !lp_kept.is_empty() {
        blocks.push(-(lp_kept.len() as i64));
    }
    // Accumulate F_k = Σ_q N_qk G_q and F_0 = −Σ_q x0_q G_q.
    let mut fk: Vec<BTreeMap<(usize, usize, usize), f64>> = vec![BTreeMap::new(); nfree + 1];
    for (qq, trip) in g.iter().enumerate() {
        for &(b, i, j, v) in trip {
            if x0[qq] != 0.0 {
                *fk[0].entry((b, i, j)).or_insert(0.0) -= x0[qq] * v;
            }
            for k in 0..nfree {
                let w = nmat[(qq, k)];
                if w != 0.0 {
                    *fk[k + 1].entry((b, i, j)).or_insert(0.0) += w * v;
                }
            }
        }
    }
    for (row, (in_z, c0)) in lp_kept.iter().enumerate() {
        if *c0 != 0.0 {
            *fk[0].entry((lp_block, row, row)).or_insert(0.0) -= c0;
        }
        for k in 0..nfree {
            if in_z[k] != 0.0 {
                *fk[k + 1].entry((lp_block, row, row)).or_insert(0.0) += in_z[k];
            }
        }
    }
    let cz: Vec<f64> = (0..nfree).map(|k| sign * (0..q).map(|j| cq[j] * nmat[(j, k)]).sum::<f64>()).collect();
    let mut kept_vars = Vec::new();
    for k in 0..nfree {
        let big = fk[k + 1].values().fold(0.0f64, |m, v| m.max(v.abs()));
        if big <= 1e-12 {
            if cz[k].abs() > 1e-12 {
                return Err(SdpModelError::Unbounded(format!("free direction {k} is unconstrained")));
            }
            continue;
        }
        kept_vars.push(k);
    }
    let mut builder = SdpaBuilder::new(blocks, kept_vars.iter().map(|&k| cz[k]).collect());
    for (&(b, i, j), &v) in &fk[0] {
        builder.add(0, b, i, j, v);
    }
    for (new, &k) in kept_vars.iter().enumerate() {
        for (&(b, i, j), &v) in &fk[k + 1] {
            if v.abs() > 1e-14 {
                builder.add(new + 1, b, i, j, v);
            }
        }
    }
    let mut base = vec![0.0; sdp.m()];
    let mut from_x = vec![Vec::new(); sdp.m()];
    for (qq, cl) in classes.iter().enumerate() {
        let terms: Vec<(usize, f64)> =
            kept_vars.iter().enumerate().filter(|(_, &k)| nmat[(qq, k)] != 0.0).map(|(new, &k)| (new, nmat[(qq, k)])).collect();
        for &r in cl {
            base[r] = x0[qq];
            from_x[r] = terms.clone();
        }
    }
    Ok(ReducedProgram {
        sdpa: builder.build(),
        form: Form::Lmi,
        sign,
        offset,
        recovery: Recovery { base, from_x, from_y: vec![Vec::new(); sdp.m()] },
        warnings,
    })
}

/// Gram form: the block entries are the variables and `x = Φ⁻¹ vec(X_k)`.
fn gram_form(
    sdp: &InvariantSdp,
    bd: &BlockDiagonalization,
    real: &[bool],
    sizes: Vec<usize>,
    warnings: Vec<String>,
) -> Result<ReducedProgram, SdpModelError> {
    let m = sdp.m();
    let psi = bd.inverse_coordinate_matrix()?;
    // Variable index of upper entry (i, j) in each real block.
    let mut var_of: Vec<Vec<usize>> = Vec::new();
    let mut var_pos: Vec<(usize, usize, usize)> = Vec::new();
    for (k, &s) in sizes.iter().enumerate() {
        let mut map = vec![usize::MAX; s * s];
        for i in 0..s {
            for j in i..s {
                map[i * s + j] = var_pos.len();
                map[j * s + i] = var_pos.len();
                var_pos.push((k, i, j));
            }
        }
        var_of.push(map);
    }
    let nv_psd = var_pos.len();
    // ℓ_r: complex coefficients of x_r on the symmetric block variables.
    let mut ell: Vec<BTreeMap<usize, C64>> = vec![BTreeMap::new(); m];
    let half = C64::new(0.5, 0.0);
    let ihalf = C64::new(0.0, 0.5);
    for r in 0..m {
        let mut col = 0;
        for (k, &mk) in bd.block_sizes.iter().enumerate() {
            let s = sizes[k];
            for u in 0..mk {
                for v in 0..mk {
                    let w = psi[(r, col)];
                    col += 1;
                    if w.norm() < 1e-14 {
                        continue;
                    }
                    let mut add = |a: usize, b: usize, c: C64| {
                        *ell[r].entry(var_of[k][a * s + b]).or_insert(C64::new(0.0, 0.0)) += w * c;
                    };
                    if real[k] {
                        add(u, v, C64::new(1.0, 0.0));
                    } else {
                        add(u, v, half);
                        add(u + mk, v + mk, half);
                        add(u + mk, v, ihalf);
                        add(u, v + mk, -ihalf);
                    }
                }
            }
        }
    }
    let re = |r: usize| -> BTreeMap<usize, f64> { ell[r].iter().map(|(&k, v)| (k, v.re)).collect() };
    let classes = sdp.classes();

    // Rows over [block variables | slack variables] with right-hand sides.
    let mut rows: Vec<(BTreeMap<usize, f64>, f64)> = Vec::new();
    for r in 0..m {
        let im: BTreeMap<usize, f64> = ell[r].iter().map(|(&k, v)| (k, v.im)).filter(|(_, v)| v.abs() > 1e-12).collect();
        if !im.is_empty() {
            rows.push((im, 0.0));
        }
    }
    let combine = |coeffs: &[f64]| -> BTreeMap<usize, f64> {
        let mut acc = BTreeMap::new();
        for r in 0..m {
            if coeffs[r] != 0.0 {
                for (k, v) in re(r) {
                    *acc.entry(k).or_insert(0.0) += coeffs[r] * v;
                }
            }
        }
        acc
    };
    let mut nslack = 0usize;
    for row in &sdp.rows {
        let mut acc = combine(&row.coeffs);
        match row.kind {
            RowKind::Eq => {}
            RowKind::Le => {
                acc.insert(nv_psd + nslack, 1.0);
                nslack += 1;
            }
            RowKind::Ge => {
                acc.insert(nv_psd + nslack, -1.0);
                nslack += 1;
            }
        }
        rows.push((acc, row.rhs));
    }
    for cl in &classes {
        if sdp.nonnegative[cl[0]] {
            let mut acc = re(cl[0]);
            acc.insert(nv_psd + nslack, -1.0);
            nslack += 1;
            rows.push((acc, 0.0));
        }
    }
    let nv = nv_psd + nslack;
    let keep = independent_rows(&rows, nv)?;

    let sign = if sdp.maximize { 1.0 } else { -1.0 };
    let mut obj = BTreeMap::new();
    for r in 0..m {
        if sdp.objective[r] != 0.0 {
            for (k, v) in re(r) {
                *obj.entry(k).or_insert(0.0) += sign * sdp.objective[r] * v;
            }
        }
    }
    let mut blocks: Vec<i64> = sizes.iter().map(|&s| s as i64).collect();
    let slack_block = blocks.len();
    if nslack > 0 {
        blocks.push(-(nslack as i64));
    }
    let position = |var: usize| -> (usize, usize, usize) {
        if var < nv_psd {
            var_pos[var]
        } else {
            (slack_block, var - nv_psd, var - nv_psd)
        }
    };
    // ⟨F, Y⟩ with F_ij = w/2 off the diagonal reproduces Σ w Y_ij over i ≤ j.
    let entry = |var: usize, w: f64| -> (usize, usize, usize, f64) {
        let (b, i, j) = position(var);
        (b, i, j, if i == j { w } else { 0.5 * w })
    };
    let mut builder = SdpaBuilder::new(blocks, keep.iter().map(|&i| rows[i].1).collect());
    for (&var, &w) in &obj {
        let (b, i, j, v) = entry(var, w);
        builder.add(0, b, i, j, v);
    }
    for (new, &i) in keep.iter().enumerate() {
        for (&var, &w) in &rows[i].0 {
            if w.abs() > 1e-14 {
                let (b, a, c, v) = entry(var, w);
                builder.add(new + 1, b, a, c, v);
            }
        }
    }
    let from_y = (0..m)
        .map(|r| {
            re(r)
                .into_iter()
                .filter(|(_, v)| v.abs() > 1e-15)
                .map(|(var, w)| {
                    let (b, i, j) = position(var);
                    (b, i, j, w)
                })
                .collect()
        })
        .collect();
    Ok(ReducedProgram {
        sdpa: builder.build(),
        form: Form::Gram,
        sign,
        offset: 0.0,
        recovery: Recovery { base: vec![0.0; m], from_x: vec![Vec::new(); m], from_y },
        warnings,
    })
}

/// Indices of a maximal independent subset of rows; fails on inconsistency.
fn independent_rows(rows: &[(BTreeMap<usize, f64>, f64)], nv: usize) -> Result<Vec<usize>, SdpModelError> {
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let mut aug = DMatrix::<f64>::zeros(rows.len(), nv + 1);
    let mut t = DMatrix::<f64>::zeros(nv, rows.len());
    for (i, (coef, b)) in rows.iter().enumerate() {
        let s = coef.values().fold(b.abs(), |m, v| m.max(v.abs())).max(1e-300);
        for (&k, &v) in coef {
            aug[(i, k)] = v / s;
            t[(k, i)] = v / s;
        }
        aug[(i, nv)] = b / s;
    }
    let piv = linalg::rref(&mut aug, 1e-10);
    if piv.contains(&nv) {
        return Err(SdpModelError::Infeasible("reduced equalities are inconsistent".into()));
    }
    Ok(linalg::rref(&mut t, 1e-10))
}
