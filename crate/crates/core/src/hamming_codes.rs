//! Bounds for codes in the Hamming space `q^n`: Krawtchouk polynomials, the
//! Delsarte linear program and the binary triple bound over the Terwilliger
//! algebra.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::DMatrix;
use num::{BigInt, BigRational, One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, SparseMatrix, C64};
use crate::perm_groups::{GroupAction, Permutation, StructureConstants};
use crate::sdp_model::{SdpaBuilder, SdpaProblem};
use crate::solver::{self, Arithmetic, LpProblem, RowKind, SolveResult, SolverError, Status};
use crate::star_algebra::{block_diagonalize, regular_rep, AlgebraBasis, AlgebraError, BlockDiagonalization};

#[derive(Debug, Error)]
pub enum HammingError {
    #[error("argument out of range: {0}")]
    Range(String),
    #[error("{0} words exceed the enumeration cap")]
    TooLarge(u64),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("solver finished with status {0}")]
    NotSolved(Status),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HammingSpace {
    pub q: usize,
    pub n: usize,
}

impl HammingSpace {
    pub fn new(q: usize, n: usize) -> Result<Self, HammingError> {
        if q < 2 || n < 1 {
            return Err(HammingError::Range(format!("need q >= 2 and n >= 1, got q={q}, n={n}")));
        }
        Ok(Self { q, n })
    }

    pub fn size(&self) -> u64 {
        (self.q as u64).saturating_pow(self.n as u32)
    }

    /// Base-`q` digits of word `w`, least significant first.
    pub fn digits(&self, mut w: usize) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.n);
        for _ in 0..self.n {
            d.push(w % self.q);
            w /= self.q;
        }
        d
    }

    pub fn distance(&self, u: usize, v: usize) -> usize {
        let (mut u, mut v, mut d) = (u, v, 0);
        for _ in 0..self.n {
            if u % self.q != v % self.q {
                d += 1;
            }
            u /= self.q;
            v /= self.q;
        }
        d
    }
}

pub fn binomial(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut r = BigInt::one();
    for i in 0..k {
        r = r * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    r
}

fn binom_f(n: usize, k: usize) -> f64 {
    use num::ToPrimitive;
    binomial(n, k).to_f64().unwrap_or(f64::INFINITY)
}

/// `P_i(x) = Σ_k (−1)^k C(x,k) C(n−x,i−k) (q−1)^{i−k}`.
pub fn krawtchouk(i: usize, x: usize, n: usize, q: usize) -> Result<BigInt, HammingError> {
    if i > n || x > n || q < 2 {
        return Err(HammingError::Range(format!("P_{i}({x}) with n={n}, q={q}")));
    }
    let mut s = BigInt::zero();
    let qm1 = BigInt::from(q - 1);
    for k in 0..=i {
        let term = binomial(x, k) * binomial(n - x, i - k) * num::pow(qm1.clone(), i - k);
        if k % 2 == 0 {
            s += term;
        } else {
            s -= term;
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrawtchoukTable {
    pub n: usize,
    pub q: usize,
    /// `values[i][j] = P_i(j)`.
    pub values: Vec<Vec<BigInt>>,
}

impl KrawtchoukTable {
    pub fn new(n: usize, q: usize) -> Result<Self, HammingError> {
        let values = (0..=n).map(|i| (0..=n).map(|j| krawtchouk(i, j, n, q)).collect::<Result<Vec<_>, _>>()).collect::<Result<_, _>>()?;
        Ok(Self { n, q, values })
    }

    pub fn weight(&self, j: usize) -> BigInt {
        binomial(self.n, j) * num::pow(BigInt::from(self.q - 1), j)
    }

    /// `Σ_j w_j P_i(j) P_k(j)`; zero unless `i = k`.
    pub fn orthogonality(&self, i: usize, k: usize) -> BigInt {
        (0..=self.n).map(|j| self.weight(j) * &self.values[i][j] * &self.values[k][j]).sum()
    }
}

/// The distance matrices `A_0..A_n` of `q^n` as an algebra basis.
pub fn distance_basis(space: HammingSpace, max_words: u64) -> Result<AlgebraBasis, HammingError> {
    let size = space.size();
    if size > max_words {
        return Err(HammingError::TooLarge(size));
    }
    let size = size as usize;
    let mut trip: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); space.n + 1];
    for u in 0..size {
        for v in 0..size {
            trip[space.distance(u, v)].push((u, v, 1.0));
        }
    }
    let elements = trip.iter().map(|t| SparseMatrix::from_real_triplets(size, size, t)).collect();
    let labels = (0..=space.n).map(|i| format!("A{i}")).collect();
    Ok(AlgebraBasis::new(size, elements, labels)?)
}

/// Generators of `Aut(q, n)` acting on the words.
pub fn hamming_group(space: HammingSpace) -> GroupAction {
    let size = space.size() as usize;
    let pow: Vec<usize> = (0..space.n).map(|k| space.q.pow(k as u32)).collect();
    let word = |d: &[usize]| d.iter().zip(&pow).map(|(a, b)| a * b).sum::<usize>();
    let mut gens = Vec::new();
    let mut push = |f: &dyn Fn(Vec<usize>) -> Vec<usize>| {
        let imgs: Vec<usize> = (0..size).map(|w| word(&f(space.digits(w)))).collect();
        gens.push(Permutation::new(imgs).expect("coordinate maps are bijections"));
    };
    if space.n > 1 {
        push(&|mut d| {
            d.swap(0, 1);
            d
        });
        push(&|mut d| {
            d.rotate_left(1);
            d
        });
    }
    let q = space.q;
    push(&|mut d| {
        d[0] = (d[0] + 1) % q;
        d
    });
    if q > 2 {
        push(&|mut d| {
            d[0] = match d[0] {
                0 => 1,
                1 => 0,
                s => s,
            };
            d
        });
    }
    GroupAction::new(size, gens).expect("generators act on the words")
}

/// Edges of `Γ_q(n, d)`: distinct words at distance below `d`.
pub fn gamma_edges(space: HammingSpace, d: usize) -> Vec<(usize, usize)> {
    let size = space.size() as usize;
    let mut out = Vec::new();
    for u in 0..size {
        for v in u + 1..size {
            if space.distance(u, v) < d {
                out.push((u, v));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelsarteBound {
    pub bound: f64,
    pub exact: Option<BigRational>,
    /// `x_0..x_n`.
    pub x: Vec<f64>,
}

/// `max Σ_i C(n,i)(q−1)^i x_i` over `x_0 = 1`, `x_1..x_{d−1} = 0`, `x ≥ 0`,
/// `Σ_i x_i P_i(j) ≥ 0`.
pub fn delsarte_lp(n: usize, d: usize, q: usize, mode: Arithmetic) -> Result<DelsarteBound, HammingError> {
    use num::ToPrimitive;
    if d < 1 || d > n || q < 2 {
        return Err(HammingError::Range(format!("need 1 <= d <= n and q >= 2, got n={n}, d={d}, q={q}")));
    }
    let table = KrawtchoukTable::new(n, q)?;
    let vars: Vec<usize> = (d..=n).collect();
    let obj: Vec<f64> = vars.iter().map(|&i| table.values[i][0].to_f64().unwrap()).collect();
    let mut lp = LpProblem::new(obj, true);
    for j in 0..=n {
        let coeffs = vars.iter().enumerate().map(|(k, &i)| (k, table.values[i][j].to_f64().unwrap())).collect();
        lp.add_row(coeffs, RowKind::Ge, -1.0);
    }
    let sol = solver::solve_lp(&lp, mode)?;
    if sol.status != Status::Optimal {
        return Err(HammingError::NotSolved(sol.status));
    }
    let mut x = vec![0.0; n + 1];
    x[0] = 1.0;
    for (k, &i) in vars.iter().enumerate() {
        x[i] = sol.x[k];
    }
    let exact = sol.exact_objective.map(|v| v + BigRational::one());
    Ok(DelsarteBound { bound: sol.objective + 1.0, exact, x })
}

/// Orbits `(i, j, t)` of pairs under the stabilizer of the zero word:
/// `|u| = i`, `|v| = j`, `|u ∧ v| = t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleOrbitIndex {
    pub n: usize,
    pub triples: Vec<(usize, usize, usize)>,
    pub lookup: HashMap<(usize, usize, usize), usize>,
    /// Class of each triple under reordering the three words.
    pub class_of: Vec<usize>,
    pub classes: Vec<Vec<usize>>,
}

impl TripleOrbitIndex {
    pub fn index(&self, i: usize, j: usize, t: usize) -> usize {
        self.lookup[&(i, j, t)]
    }

    /// Pairwise distances of the words `0, u, v`.
    pub fn distances(&self, r: usize) -> [usize; 3] {
        let (i, j, t) = self.triples[r];
        [i, j, i + j - 2 * t]
    }

    pub fn orbit_size(&self, r: usize) -> u64 {
        use num::ToPrimitive;
        let (i, j, t) = self.triples[r];
        (binomial(self.n, i) * binomial(i, t) * binomial(self.n - i, j - t)).to_u64().unwrap_or(u64::MAX)
    }

    pub fn transpose(&self, r: usize) -> usize {
        let (i, j, t) = self.triples[r];
        self.index(j, i, t)
    }
}

pub fn triple_orbit_index(n: usize) -> TripleOrbitIndex {
    let mut triples = Vec::new();
    for i in 0..=n {
        for j in 0..=n {
            for t in 0..=i.min(j) {
                if i + j - t <= n {
                    triples.push((i, j, t));
                }
            }
        }
    }
    let lookup: HashMap<(usize, usize, usize), usize> = triples.iter().enumerate().map(|(k, &v)| (v, k)).collect();
    let mut class_of = vec![usize::MAX; triples.len()];
    let mut classes = Vec::new();
    for start in 0..triples.len() {
        if class_of[start] != usize::MAX {
            continue;
        }
        let c = classes.len();
        let mut members = vec![start];
        class_of[start] = c;
        let mut k = 0;
        while k < members.len() {
            let (i, j, t) = triples[members[k]];
            for nb in [(j, i, t), (i, i + j - 2 * t, i - t)] {
                let idx = lookup[&nb];
                if class_of[idx] == usize::MAX {
                    class_of[idx] = c;
                    members.push(idx);
                }
            }
            k += 1;
        }
        members.sort_unstable();
        classes.push(members);
    }
    TripleOrbitIndex { n, triples, lookup, class_of, classes }
}

fn orbit_of_pair(u: u32, v: u32) -> (usize, usize, usize) {
    (u.count_ones() as usize, v.count_ones() as usize, (u & v).count_ones() as usize)
}

/// Explicit `2^n × 2^n` basis `A_{i,j}^t` in [`triple_orbit_index`] order.
pub fn terwilliger_basis(n: usize) -> Result<AlgebraBasis, HammingError> {
    if n > 12 {
        return Err(HammingError::TooLarge(1u64 << n.min(63)));
    }
    let idx = triple_orbit_index(n);
    let size = 1usize << n;
    let mut trip: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); idx.triples.len()];
    for u in 0..size {
        for v in 0..size {
            let r = idx.lookup[&orbit_of_pair(u as u32, v as u32)];
            trip[r].push((u, v, 1.0));
        }
    }
    let elements = trip.iter().map(|t| SparseMatrix::from_real_triplets(size, size, t)).collect();
    let labels = idx.triples.iter().map(|(i, j, t)| format!("A({i},{j},{t})")).collect();
    Ok(AlgebraBasis::new(size, elements, labels)?)
}

/// Structure constants of the Terwilliger algebra by counting, for each
/// orbit representative `(x, y)`, the words `z` between them.
pub fn terwilliger_structure_constants(n: usize) -> Result<StructureConstants, HammingError> {
    if n > 14 {
        return Err(HammingError::TooLarge(1u64 << n.min(63)));
    }
    let idx = triple_orbit_index(n);
    let m = idx.triples.len();
    let mut entries: Vec<(usize, usize, usize, u64)> = Vec::new();
    for (w, &(i, j, t)) in idx.triples.iter().enumerate() {
        // x has support {0..i}, y has support {i−t..i+j−t}.
        let x: u32 = if i == 0 { 0 } else { (1u32 << i) - 1 };
        let y: u32 = (((1u64 << j) - 1) as u32) << (i - t);
        let mut count: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        for z in 0..(1u32 << n) {
            let r = idx.lookup[&orbit_of_pair(x, z)];
            let s = idx.lookup[&orbit_of_pair(z, y)];
            *count.entry((r, s)).or_insert(0) += 1;
        }
        for ((r, s), p) in count {
            entries.push((r, s, w, p));
        }
    }
    entries.sort_unstable();
    let unit = (0..=n).map(|i| idx.index(i, i, i)).collect();
    Ok(StructureConstants {
        m,
        orbit_sizes: (0..m).map(|r| idx.orbit_size(r)).collect(),
        transpose_map: (0..m).map(|r| idx.transpose(r)).collect(),
        unit,
        entries,
    })
}

/// Block diagonalization of the Terwilliger algebra, computed numerically
/// from the explicit basis.
pub fn terwilliger_blocks(n: usize, seed: u64) -> Result<BlockDiagonalization, HammingError> {
    let basis = terwilliger_basis(n)?;
    Ok(block_diagonalize(&basis, seed, 1e-9)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Backend {
    Regular,
    BlockDiag,
}

#[derive(Debug, Clone)]
pub struct TripleBound {
    pub bound: f64,
    pub sdpa: SdpaProblem,
    pub result: SolveResult,
    /// Value of each triple-orbit variable at the optimum.
    pub x: Vec<f64>,
}

/// Real symmetric images of the basis elements under a backend, block by block.
pub struct TripleImages {
    pub block_sizes: Vec<usize>,
    pub images: Vec<Vec<DMatrix<f64>>>,
}

impl TripleImages {
    pub fn regular(n: usize) -> Result<Self, HammingError> {
        let sc = terwilliger_structure_constants(n)?;
        let rr = regular_rep(&sc);
        Ok(Self { block_sizes: vec![sc.m], images: (0..sc.m).map(|r| vec![rr.matrix(r)]).collect() })
    }

    pub fn from_blocks(bd: &BlockDiagonalization) -> Self {
        let nb = bd.block_sizes.len();
        let real: Vec<bool> = (0..nb).map(|k| bd.images.iter().all(|im| linalg::is_real_matrix(&im[k], 1e-9))).collect();
        let sizes = (0..nb).map(|k| if real[k] { bd.block_sizes[k] } else { 2 * bd.block_sizes[k] }).collect();
        let images = bd
            .images
            .iter()
            .map(|im| {
                (0..nb)
                    .map(|k| {
                        let a = if real[k] { im[k].map(|v: C64| v.re) } else { linalg::real_embedding(&im[k]) };
                        let floor = 1e-10 * a.amax().max(1.0);
                        a.map(|v| if v.abs() < floor { 0.0 } else { v })
                    })
                    .collect()
            })
            .collect();
        Self { block_sizes: sizes, images }
    }
}

/// The triple bound with variables `x_{i,j}^t` normalized by `x_{0,0}^0 = 1`:
/// maximize `Σ_i C(n,i) x_{i,0}^0` subject to `0 ≤ x_{i,j}^t ≤ x_{i,0}^0`,
/// zeros for forbidden distances, equality across reorderings, and
/// `Σ x A ⪰ 0`, `Σ (x_{i+j−2t,0}^0 − x) A ⪰ 0`.
pub fn schrijver_triple_sdp(n: usize, d: usize, backend: Backend) -> Result<TripleBound, HammingError> {
    if d < 1 || d > n {
        return Err(HammingError::Range(format!("need 1 <= d <= n, got n={n}, d={d}")));
    }
    let images = match backend {
        Backend::Regular => TripleImages::regular(n)?,
        Backend::BlockDiag => TripleImages::from_blocks(&terwilliger_blocks(n, 0x7e5)?),
    };
    schrijver_with_images(n, d, &images, 1e-8)
}

pub fn schrijver_with_images(n: usize, d: usize, images: &TripleImages, tol: f64) -> Result<TripleBound, HammingError> {
    let idx = triple_orbit_index(n);
    let m = idx.triples.len();
    let forbidden = |r: usize| idx.distances(r).iter().any(|&k| k >= 1 && k < d);
    let fixed = idx.class_of[idx.index(0, 0, 0)];
    // SDPA variable of each class: None for zero or fixed classes.
    let mut var_of = vec![None; idx.classes.len()];
    let mut nvar = 0;
    for (c, members) in idx.classes.iter().enumerate() {
        if c != fixed && !forbidden(members[0]) {
            var_of[c] = Some(nvar);
            nvar += 1;
        }
    }
    // Coefficients (class → weight) of the two matrix combinations per orbit.
    let head = |r: usize| {
        let (i, j, t) = idx.triples[r];
        idx.class_of[idx.index(i + j - 2 * t, 0, 0)]
    };
    let nb = images.block_sizes.len();
    let mut blocks: Vec<i64> = images.block_sizes.iter().chain(images.block_sizes.iter()).map(|&s| s as i64).collect();
    // Upper rows of the LP block: (class with +1, class with −1).
    let mut lp_rows: BTreeSet<(usize, Option<usize>)> = BTreeSet::new();
    for r in 0..m {
        let c = idx.class_of[r];
        if c == fixed || forbidden(r) {
            continue;
        }
        let (i, _, _) = idx.triples[r];
        lp_rows.insert((c, None));
        let up = idx.class_of[idx.index(i, 0, 0)];
        if up != c {
            lp_rows.insert((up, Some(c)));
        }
    }
    let lp_rows: Vec<(usize, Option<usize>)> = lp_rows.into_iter().collect();
    if !lp_rows.is_empty() {
        blocks.push(-(lp_rows.len() as i64));
    }
    let mut c = vec![0.0; nvar];
    for i in 0..=n {
        let cl = idx.class_of[idx.index(i, 0, 0)];
        if let Some(v) = var_of[cl] {
            c[v] -= binom_f(n, i);
        }
    }
    let mut acc: Vec<BTreeMap<(usize, usize, usize), f64>> = vec![BTreeMap::new(); nvar + 1];
    // Adds w·(image of orbit r) on block set `set` to the matrix of class `cl`.
    let mut add = |cl: usize, set: usize, r: usize, w: f64| {
        let target = if cl == fixed {
            Some(0)
        } else {
            var_of[cl].map(|v| v + 1)
        };
        let Some(mat) = target else { return };
        let w = if mat == 0 { -w } else { w };
        for k in 0..nb {
            let a = &images.images[r][k];
            for p in 0..a.nrows() {
                for q in p..a.ncols() {
                    let v = 0.5 * (a[(p, q)] + a[(q, p)]);
                    if v != 0.0 {
                        *acc[mat].entry((set * nb + k, p, q)).or_insert(0.0) += w * v;
                    }
                }
            }
        }
    };
    for r in 0..m {
        let cl = idx.class_of[r];
        add(cl, 0, r, 1.0);
        add(head(r), 1, r, 1.0);
        add(cl, 1, r, -1.0);
    }
    let lp_block = 2 * nb;
    for (row, &(plus, minus)) in lp_rows.iter().enumerate() {
        if plus == fixed {
            *acc[0].entry((lp_block, row, row)).or_insert(0.0) -= 1.0;
        } else if let Some(v) = var_of[plus] {
            *acc[v + 1].entry((lp_block, row, row)).or_insert(0.0) += 1.0;
        }
        if let Some(mc) = minus {
            if let Some(v) = var_of[mc] {
                *acc[v + 1].entry((lp_block, row, row)).or_insert(0.0) -= 1.0;
            }
        }
    }
    let mut b = SdpaBuilder::new(blocks, c);
    for (mat, map) in acc.iter().enumerate() {
        for (&(blk, p, q), &v) in map {
            if v.abs() > 1e-13 {
                b.add(mat, blk, p, q, v);
            }
        }
    }
    let (sdpa, _) = b.build().drop_common_kernel(1e-9);
    let result = solver::solve_sdp(&sdpa, tol, 200)?;
    if result.status != Status::Optimal {
        return Err(HammingError::NotSolved(result.status));
    }
    let mut x = vec![0.0; m];
    for r in 0..m {
        let cl = idx.class_of[r];
        x[r] = if cl == fixed { 1.0 } else { var_of[cl].map_or(0.0, |v| result.x[v]) };
    }
    // The dual objective bounds the minimum from below, so this side is a valid upper bound.
    let bound = 1.0 - result.dual_objective;
    Ok(TripleBound { bound, sdpa, result, x })
}

/// Minimum distance of a set of binary words (`None` for fewer than two).
pub fn min_distance(code: &[u32]) -> Option<usize> {
    let mut best = None;
    for (a, &u) in code.iter().enumerate() {
        for &v in &code[a + 1..] {
            let d = (u ^ v).count_ones() as usize;
            best = Some(best.map_or(d, |b: usize| b.min(d)));
        }
    }
    best
}

/// Greedy lexicographic code of length `n` and minimum distance `d`.
pub fn lexicode(n: usize, d: usize) -> Vec<u32> {
    let mut code: Vec<u32> = Vec::new();
    for w in 0..(1u32 << n) {
        if code.iter().all(|&c| ((c ^ w).count_ones() as usize) >= d) {
            code.push(w);
        }
    }
    code
}

/// Explicit codes shipped for validation: lexicodes, even-weight and
/// repetition codes.
pub fn explicit_codes(n: usize, d: usize) -> Vec<Vec<u32>> {
    let mut out = vec![lexicode(n, d)];
    if d <= 2 {
        out.push((0..(1u32 << n)).filter(|w| w.count_ones() % 2 == 0).collect());
    }
    if d <= n {
        out.push(vec![0, (1u32 << n) - 1]);
    }
    out.retain(|c| min_distance(c).is_none_or(|m| m >= d));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_degree_krawtchouk() {
        for (n, q) in [(5, 2), (6, 3), (4, 4)] {
            for x in 0..=n {
                assert_eq!(krawtchouk(0, x, n, q).unwrap(), BigInt::one());
                let p1 = BigInt::from((n - x) * (q - 1)) - BigInt::from(x);
                assert_eq!(krawtchouk(1, x, n, q).unwrap(), p1);
            }
            let s: BigInt = (0..=n).map(|i| krawtchouk(i, 0, n, q).unwrap()).sum();
            assert_eq!(s, num::pow(BigInt::from(q), n));
        }
        assert!(krawtchouk(3, 1, 2, 2).is_err());
    }

    #[test]
    fn orthogonality_is_exact() {
        let t = KrawtchoukTable::new(9, 3).unwrap();
        for i in 0..=9 {
            for k in 0..=9 {
                let v = t.orthogonality(i, k);
                if i != k {
                    assert!(v.is_zero());
                } else {
                    assert!(v > BigInt::zero());
                }
            }
        }
    }

    #[test]
    fn small_distance_bases() {
        let b = distance_basis(HammingSpace::new(2, 1).unwrap(), 1 << 12).unwrap();
        assert_eq!(b.elements[0].to_real_dense(), DMatrix::identity(2, 2));
        assert_eq!(b.elements[1].to_real_dense(), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        let b = distance_basis(HammingSpace::new(2, 2).unwrap(), 1 << 12).unwrap();
        let a1 = b.elements[1].to_real_dense();
        assert!(a1.row_iter().all(|r| r.sum() == 2.0));
        let total = b.elements.iter().fold(DMatrix::zeros(4, 4), |acc, e| acc + e.to_real_dense());
        assert_eq!(total, DMatrix::from_element(4, 4, 1.0));
        assert!(matches!(distance_basis(HammingSpace::new(2, 13).unwrap(), 1 << 12), Err(HammingError::TooLarge(_))));
    }

    #[test]
    fn delsarte_small_cases() {
        let r = delsarte_lp(3, 3, 2, Arithmetic::Rational).unwrap();
        assert_eq!(r.exact.unwrap(), BigRational::from_integer(2.into()));
        for (n, q) in [(4, 2), (3, 3)] {
            let r = delsarte_lp(n, 1, q, Arithmetic::Rational).unwrap();
            assert_eq!(r.exact.unwrap(), BigRational::from_integer(num::pow(BigInt::from(q), n)));
        }
        let f = delsarte_lp(7, 3, 2, Arithmetic::Float).unwrap();
        assert!((f.bound - 16.0).abs() < 1e-9);
    }

    #[test]
    fn triple_counts() {
        assert_eq!(triple_orbit_index(1).triples.len(), 4);
        assert_eq!(triple_orbit_index(2).triples.len(), 10);
        for n in 1..=8 {
            let idx = triple_orbit_index(n);
            assert_eq!(BigInt::from(idx.triples.len()), binomial(n + 3, 3));
            assert!(idx.triples.iter().all(|&(i, j, t)| i + j - t <= n));
            let total: u64 = (0..idx.triples.len()).map(|r| idx.orbit_size(r)).sum();
            assert_eq!(total, 1u64 << (2 * n));
        }
    }

    #[test]
    fn terwilliger_constants_are_exact() {
        for n in 1..=4 {
            let sc = terwilliger_structure_constants(n).unwrap();
            assert!(sc.verify_exact(), "n = {n}");
        }
        let sc = terwilliger_structure_constants(1).unwrap();
        assert_eq!(sc.m, 4);
        let basis = terwilliger_basis(1).unwrap();
        for r in 0..4 {
            for s in 0..4 {
                let prod = basis.elements[r].mul_sparse(&basis.elements[s]).to_real_dense();
                let mut want = DMatrix::zeros(2, 2);
                for t in 0..4 {
                    want += basis.elements[t].to_real_dense() * sc.get(r, s, t) as f64;
                }
                assert_eq!(prod, want);
            }
        }
    }

    #[test]
    fn lexicodes_have_their_distance() {
        assert_eq!(lexicode(7, 3).len(), 16);
        assert_eq!(lexicode(8, 4).len(), 16);
        for n in 1..=8 {
            for d in 1..=n {
                for c in explicit_codes(n, d) {
                    assert!(min_distance(&c).is_none_or(|m| m >= d));
                }
            }
        }
    }

    #[test]
    fn triple_bound_small() {
        let r = schrijver_triple_sdp(4, 2, Backend::Regular).unwrap();
        assert!((r.bound - 8.0).abs() < 1e-6, "{}", r.bound);
        let r = schrijver_triple_sdp(5, 3, Backend::BlockDiag).unwrap();
        let del = delsarte_lp(5, 3, 2, Arithmetic::Float).unwrap().bound;
        assert!(r.bound <= del + 1e-6 && r.bound >= 4.0 - 1e-6, "{} vs {del}", r.bound);
    }

    #[test]
    fn backends_agree() {
        let bd = terwilliger_blocks(6, 3).unwrap();
        let images = TripleImages::from_blocks(&bd);
        assert_eq!(images.block_sizes, vec![7, 5, 3, 1]);
        for d in 1..=6 {
            let a = schrijver_triple_sdp(6, d, Backend::Regular).unwrap().bound;
            let b = schrijver_with_images(6, d, &images, 1e-8).unwrap().bound;
            assert!((a - b).abs() < 1e-5, "d = {d}: {a} vs {b}");
        }
    }
}
