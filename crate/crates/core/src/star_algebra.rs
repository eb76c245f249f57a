//! Matrix *-algebras: the regular *-representation built from structure
//! constants, numerical block diagonalization into full matrix algebras,
//! isomorphism verification and psd factorization inside the algebra.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, SparseMatrix, C64};
use crate::perm_groups::{PairOrbitStructure, StructureConstants};

const MAX_ATTEMPTS: u64 = 8;
const CLUSTER_GAP: f64 = 1e-7;
const RELATION_GAP: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgebraError {
    #[error("no generic sample found after {attempts} attempts")]
    DegenerateSample { attempts: u64 },
    #[error("basis does not span a *-algebra: {0}")]
    NotAnAlgebra(String),
    #[error("matrix is not positive semidefinite (minimum eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("matrix is not in the span of the basis (residual {0:e})")]
    NotInAlgebra(f64),
    #[error("invalid basis: {0}")]
    InvalidBasis(String),
}

/// A basis of a matrix *-algebra acting on `C^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraBasis {
    pub n: usize,
    pub elements: Vec<SparseMatrix>,
    pub labels: Vec<String>,
}

impl AlgebraBasis {
    pub fn new(n: usize, elements: Vec<SparseMatrix>, labels: Vec<String>) -> Result<Self, AlgebraError> {
        if elements.is_empty() {
            return Err(AlgebraError::InvalidBasis("empty basis".into()));
        }
        if labels.len() != elements.len() {
            return Err(AlgebraError::InvalidBasis("label count differs from element count".into()));
        }
        for (r, e) in elements.iter().enumerate() {
            if e.nrows != n || e.ncols != n {
                return Err(AlgebraError::InvalidBasis(format!("element {r} is {}x{}, expected {n}x{n}", e.nrows, e.ncols)));
            }
        }
        Ok(Self { n, elements, labels })
    }

    /// The canonical 0/1 basis `C_1..C_M` of an orbit structure.
    pub fn from_orbits(orbits: &PairOrbitStructure) -> Self {
        let n = orbits.n;
        let mut trip = vec![Vec::new(); orbits.m];
        for i in 0..n {
            for j in 0..n {
                trip[orbits.id(i, j)].push((i, j, 1.0));
            }
        }
        let elements = trip.iter().map(|t| SparseMatrix::from_real_triplets(n, n, t)).collect();
        let labels = orbits.representatives.iter().map(|(i, j)| format!("C({i},{j})")).collect();
        Self { n, elements, labels }
    }

    pub fn dim(&self) -> usize {
        self.elements.len()
    }

    pub fn is_real(&self) -> bool {
        self.elements.iter().all(|e| e.is_real())
    }

    pub fn gram(&self) -> DMatrix<C64> {
        let m = self.dim();
        let mut g = DMatrix::zeros(m, m);
        for a in 0..m {
            for b in a..m {
                let v = self.elements[a].inner(&self.elements[b]);
                g[(a, b)] = v;
                g[(b, a)] = v.conj();
            }
        }
        g
    }

    /// Linear combination `Σ x_r B_r`.
    pub fn combine(&self, x: &[C64]) -> SparseMatrix {
        let refs: Vec<&SparseMatrix> = self.elements.iter().collect();
        SparseMatrix::linear_combination(&refs, x)
    }

    /// Least-squares coordinates of `a` in the basis and the residual norm.
    pub fn coordinates(&self, a: &SparseMatrix) -> (Vec<C64>, f64) {
        self.coordinates_with(&self.gram(), a)
    }

    fn coordinates_with(&self, gram: &DMatrix<C64>, a: &SparseMatrix) -> (Vec<C64>, f64) {
        let rhs = DVector::from_iterator(self.dim(), self.elements.iter().map(|e| e.inner(a)));
        let x = gram.clone().lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(self.dim()));
        let x: Vec<C64> = x.iter().copied().collect();
        let approx = self.combine(&x);
        let diff = SparseMatrix::linear_combination(&[a, &approx], &[C64::one(), -C64::one()]);
        (x, diff.frobenius_norm())
    }

    /// Largest residual of projecting all products `B_r B_s` and adjoints
    /// `B_r^*` back onto the span, relative to their norms.
    pub fn verify_closure(&self) -> f64 {
        let gram = self.gram();
        let m = self.dim();
        let pairs: Vec<(usize, usize)> = (0..m).flat_map(|r| (0..m).map(move |s| (r, s))).collect();
        let prod = pairs
            .par_iter()
            .map(|&(r, s)| {
                let p = self.elements[r].mul_sparse(&self.elements[s]);
                let (_, res) = self.coordinates_with(&gram, &p);
                res / p.frobenius_norm().max(1.0)
            })
            .reduce(|| 0.0, f64::max);
        let adj = (0..m)
            .map(|r| {
                let a = self.elements[r].adjoint();
                let (_, res) = self.coordinates_with(&gram, &a);
                res / a.frobenius_norm().max(1.0)
            })
            .fold(0.0, f64::max);
        prod.max(adj)
    }

    /// Smallest singular value of the normalized Gram matrix (independence check).
    pub fn independence_margin(&self) -> f64 {
        let g = self.gram();
        let d: Vec<f64> = (0..self.dim()).map(|i| g[(i, i)].re.sqrt().max(1e-300)).collect();
        let gn = DMatrix::from_fn(self.dim(), self.dim(), |i, j| g[(i, j)] / (d[i] * d[j]));
        linalg::hermitian_eigenvalues(&gn)[0]
    }

    /// Reads `{"n": .., "elements": [[[i, j, re(, im)], ...], ...], "labels": [..]}`.
    pub fn from_json(text: &str) -> Result<Self, String> {
        #[derive(Deserialize)]
        struct Raw {
            n: usize,
            elements: Vec<Vec<Vec<f64>>>,
            #[serde(default)]
            labels: Vec<String>,
        }
        let raw: Raw = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let mut elements = Vec::new();
        for (r, el) in raw.elements.iter().enumerate() {
            let mut trip = Vec::new();
            for t in el {
                if t.len() != 3 && t.len() != 4 {
                    return Err(format!("element {r}: triplet must have 3 or 4 numbers"));
                }
                let (i, j) = (t[0] as usize, t[1] as usize);
                if t[0] < 0.0 || t[1] < 0.0 || i >= raw.n || j >= raw.n || t[0].fract() != 0.0 || t[1].fract() != 0.0 {
                    return Err(format!("element {r}: bad index ({}, {})", t[0], t[1]));
                }
                trip.push((i, j, C64::new(t[2], t.get(3).copied().unwrap_or(0.0))));
            }
            elements.push(SparseMatrix::from_triplets(raw.n, raw.n, trip));
        }
        let labels = if raw.labels.is_empty() {
            (0..elements.len()).map(|r| format!("B{r}")).collect()
        } else {
            raw.labels
        };
        Self::new(raw.n, elements, labels).map_err(|e| e.to_string())
    }

    pub fn to_json(&self) -> String {
        let elements: Vec<Vec<Vec<f64>>> = self
            .elements
            .iter()
            .map(|e| {
                e.triplets()
                    .map(|(i, j, v)| {
                        if v.im == 0.0 {
                            vec![i as f64, j as f64, v.re]
                        } else {
                            vec![i as f64, j as f64, v.re, v.im]
                        }
                    })
                    .collect()
            })
            .collect();
        serde_json::json!({ "n": self.n, "elements": elements, "labels": self.labels }).to_string()
    }
}

/// An exact entry `coeff · sqrt(num / den)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SqrtRatio {
    pub coeff: u64,
    pub num: u64,
    pub den: u64,
}

impl SqrtRatio {
    pub fn value(&self) -> f64 {
        if self.num == self.den {
            self.coeff as f64
        } else {
            self.coeff as f64 * (self.num as f64 / self.den as f64).sqrt()
        }
    }
}

/// Left multiplication in the orthonormal basis `C_r / ‖C_r‖`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularRep {
    pub m: usize,
    /// Sparse entries `(s, t, L(C_r)_{st})` for each `r`.
    pub entries: Vec<Vec<(usize, usize, SqrtRatio)>>,
}

impl RegularRep {
    pub fn matrix(&self, r: usize) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.m, self.m);
        for &(s, t, v) in &self.entries[r] {
            d[(s, t)] = v.value();
        }
        d
    }

    pub fn sparse(&self, r: usize) -> SparseMatrix {
        let trip: Vec<(usize, usize, f64)> = self.entries[r].iter().map(|&(s, t, v)| (s, t, v.value())).collect();
        SparseMatrix::from_real_triplets(self.m, self.m, &trip)
    }

    /// `Σ_r x_r L(C_r)`.
    pub fn combine(&self, x: &[f64]) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.m, self.m);
        for (r, &w) in x.iter().enumerate() {
            if w != 0.0 {
                for &(s, t, v) in &self.entries[r] {
                    d[(s, t)] += w * v.value();
                }
            }
        }
        d
    }

    pub fn image_map(&self) -> ImageMap {
        ImageMap {
            block_sizes: vec![self.m],
            multiplicities: None,
            kernel_dim: 0,
            images: (0..self.m).map(|r| vec![linalg::to_complex(&self.matrix(r))]).collect(),
        }
    }
}

/// `L(C_r)_{st} = (‖C_s‖/‖C_t‖)·p^s_{rt}`.
pub fn regular_rep(sc: &StructureConstants) -> RegularRep {
    let mut entries = vec![Vec::new(); sc.m];
    for &(r, t, s, p) in &sc.entries {
        entries[r].push((s, t, SqrtRatio { coeff: p, num: sc.orbit_sizes[s], den: sc.orbit_sizes[t] }));
    }
    for e in &mut entries {
        e.sort_by_key(|&(s, t, _)| (s, t));
    }
    RegularRep { m: sc.m, entries }
}

/// A *-isomorphism onto `⊕_k C^{m_k×m_k}` given by the images of the basis.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDiagonalization {
    pub d: usize,
    pub block_sizes: Vec<usize>,
    /// Dimension of the irreducible module behind each block.
    pub multiplicities: Vec<usize>,
    /// Dimension of the common kernel of the algebra (the zero block).
    pub kernel_dim: usize,
    /// `images[r][k] = φ(B_r)_k`.
    pub images: Vec<Vec<DMatrix<C64>>>,
    /// Orthonormal `n×m_k` matrices `W_k` with `B W_k = W_k φ_k(B)`.
    pub transform: Vec<DMatrix<C64>>,
    pub residual: f64,
    pub seed: u64,
}

impl BlockDiagonalization {
    pub fn basis_dim(&self) -> usize {
        self.images.len()
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.images.iter().flatten().all(|b| linalg::is_real_matrix(b, tol))
    }

    /// `Σ_r x_r φ(B_r)` block by block.
    pub fn image_of(&self, x: &[C64]) -> Vec<DMatrix<C64>> {
        let mut out: Vec<DMatrix<C64>> = self.block_sizes.iter().map(|&m| DMatrix::zeros(m, m)).collect();
        for (r, &w) in x.iter().enumerate() {
            if !w.is_zero() {
                for (k, b) in self.images[r].iter().enumerate() {
                    out[k] += b * w;
                }
            }
        }
        out
    }

    /// Matrix whose column `r` stacks the entries of `φ(B_r)` (block, row, column order).
    pub fn coordinate_matrix(&self) -> DMatrix<C64> {
        let m = self.basis_dim();
        let rows: usize = self.block_sizes.iter().map(|s| s * s).sum();
        let mut phi = DMatrix::zeros(rows, m);
        for r in 0..m {
            let mut row = 0;
            for b in &self.images[r] {
                for u in 0..b.nrows() {
                    for v in 0..b.ncols() {
                        phi[(row, r)] = b[(u, v)];
                        row += 1;
                    }
                }
            }
        }
        phi
    }

    /// The inverse of [`coordinate_matrix`](Self::coordinate_matrix): maps stacked
    /// block entries to basis coordinates.
    pub fn inverse_coordinate_matrix(&self) -> Result<DMatrix<C64>, AlgebraError> {
        let phi = self.coordinate_matrix();
        if phi.nrows() != phi.ncols() {
            return Err(AlgebraError::NotAnAlgebra(format!(
                "block dimension {} differs from basis dimension {}",
                phi.nrows(),
                phi.ncols()
            )));
        }
        phi.try_inverse()
            .ok_or_else(|| AlgebraError::NotAnAlgebra("block images are linearly dependent".into()))
    }

    pub fn image_map(&self) -> ImageMap {
        ImageMap {
            block_sizes: self.block_sizes.clone(),
            multiplicities: Some(self.multiplicities.clone()),
            kernel_dim: self.kernel_dim,
            images: self.images.clone(),
        }
    }
}

enum Failure {
    Degenerate,
    Fatal(AlgebraError),
}

/// Numerical block diagonalization of the algebra spanned by `basis`.
///
/// A random Hermitian element is diagonalized; its eigenspaces refine to
/// the irreducible submodules when the sample is generic, which is checked
/// by requiring every basis element to act as a scalar on each eigenspace
/// (tested on a random vector). Non-generic samples are retried with the
/// next seed, alternating real and complex samples for real bases.
pub fn block_diagonalize(basis: &AlgebraBasis, seed: u64, tol: f64) -> Result<BlockDiagonalization, AlgebraError> {
    let real = basis.is_real();
    for attempt in 0..MAX_ATTEMPTS {
        let (use_real, s) = if real {
            (attempt % 2 == 0, seed.wrapping_add(attempt / 2))
        } else {
            (false, seed.wrapping_add(attempt))
        };
        match attempt_once(basis, s, use_real, tol) {
            Ok(bd) => return Ok(bd),
            Err(Failure::Fatal(e)) => return Err(e),
            Err(Failure::Degenerate) => continue,
        }
    }
    if basis.dim() <= 200 {
        let closure = basis.verify_closure();
        if closure > 1e-8 {
            return Err(AlgebraError::NotAnAlgebra(format!("closure residual {closure:e}")));
        }
    }
    Err(AlgebraError::DegenerateSample { attempts: MAX_ATTEMPTS })
}

fn random_coef(rng: &mut ChaCha8Rng, real: bool) -> C64 {
    if real {
        C64::new(rng.gen_range(-1.0..1.0), 0.0)
    } else {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    }
}

fn attempt_once(basis: &AlgebraBasis, seed: u64, use_real: bool, tol: f64) -> Result<BlockDiagonalization, Failure> {
    let n = basis.n;
    let m = basis.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let norms: Vec<f64> = basis.elements.iter().map(|e| e.frobenius_norm().max(1e-300)).collect();

    // (1) random Hermitian element
    let mut h = DMatrix::<C64>::zeros(n, n);
    for (r, e) in basis.elements.iter().enumerate() {
        let a = random_coef(&mut rng, true) / norms[r];
        let b = if use_real { C64::zero() } else { random_coef(&mut rng, true) / norms[r] };
        for (i, j, v) in e.triplets() {
            let herm = a * v + C64::i() * b * v;
            h[(i, j)] += herm;
            h[(j, i)] += herm.conj();
        }
    }

    // (2) eigenspaces
    let (vals, vecs) = if use_real {
        let hr = h.map(|z| z.re);
        let (v, u) = linalg::symmetric_eigen(&hr);
        (v, linalg::to_complex(&u))
    } else {
        linalg::hermitian_eigen(&h)
    };
    let hscale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let mut clusters: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for i in 1..=n {
        if i == n || vals[i] - vals[i - 1] > CLUSTER_GAP * hscale {
            clusters.push((start, i));
            start = i;
        }
    }
    let k = clusters.len();

    // (3) a random element and random unit vectors in each eigenspace
    let rcoef: Vec<C64> = (0..m).map(|r| random_coef(&mut rng, use_real) / norms[r]).collect();
    let rmat = basis.combine(&rcoef);
    let mut probes = Vec::with_capacity(k);
    for &(a, b) in &clusters {
        let g = DVector::from_iterator(b - a, (a..b).map(|_| random_coef(&mut rng, use_real)));
        let g = &g / C64::new(g.norm(), 0.0);
        let v = vecs.columns(a, b - a) * &g;
        probes.push((g, v));
    }
    let rv: Vec<Vec<C64>> = probes.iter().map(|(_, v)| rmat.mul_vec(v.as_slice())).collect();
    let rsv: Vec<Vec<C64>> = probes.iter().map(|(_, v)| rmat.adjoint_mul_vec(v.as_slice())).collect();
    let rscale = rv.iter().chain(&rsv).map(|x| vnorm(x)).fold(0.0f64, f64::max).max(1e-300);

    // coordinates of R v_j in the eigenbasis
    let rv_mat = DMatrix::from_fn(n, k, |i, j| rv[j][i]);
    let coords = vecs.adjoint() * rv_mat;
    let mut block_norm = DMatrix::<f64>::zeros(k, k);
    for (ci, &(a, b)) in clusters.iter().enumerate() {
        for j in 0..k {
            block_norm[(ci, j)] = coords.view((a, j), (b - a, 1)).norm();
        }
    }

    // scalar action on each eigenspace
    for (j, &(a, b)) in clusters.iter().enumerate() {
        let g = &probes[j].0;
        let y = coords.view((a, j), (b - a, 1)).into_owned();
        let lambda = g.dotc(&y);
        let defect = (&y - g * lambda).norm();
        if defect > 1e-6 * rscale {
            return Err(Failure::Degenerate);
        }
    }

    // kernel
    let kernel: Vec<bool> = (0..k)
        .map(|j| vnorm(&rv[j]) <= RELATION_GAP * rscale && vnorm(&rsv[j]) <= RELATION_GAP * rscale)
        .collect();
    let kernel_dim: usize = (0..k).filter(|&j| kernel[j]).map(|j| clusters[j].1 - clusters[j].0).sum();

    // (4) equivalence classes
    let max_block = block_norm.iter().fold(0.0f64, |a, &v| a.max(v)).max(1e-300);
    let mut parent: Vec<usize> = (0..k).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let nx = p[y];
            p[y] = r;
            y = nx;
        }
        r
    }
    for i in 0..k {
        for j in 0..k {
            if i != j && !kernel[i] && !kernel[j] && block_norm[(i, j)] > RELATION_GAP * max_block {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for j in 0..k {
        if !kernel[j] {
            let root = find(&mut parent, j);
            classes.entry(root).or_default().push(j);
        }
    }

    // (5) alignment within each class
    let mut blocks: Vec<(DMatrix<C64>, usize)> = Vec::new();
    for members in classes.values() {
        let size = clusters[members[0]].1 - clusters[members[0]].0;
        if members.iter().any(|&c| clusters[c].1 - clusters[c].0 != size) {
            return Err(Failure::Degenerate);
        }
        let w1 = probes[members[0]].1.clone();
        let mut w = DMatrix::<C64>::zeros(n, members.len());
        w.set_column(0, &w1);
        if members.len() > 1 {
            let mut best: Vec<(f64, DVector<C64>)> = vec![(0.0, DVector::zeros(n)); members.len()];
            for e in &basis.elements {
                let x = DVector::from_vec(e.adjoint_mul_vec(w1.as_slice()));
                for (pos, &c) in members.iter().enumerate().skip(1) {
                    let (a, b) = clusters[c];
                    let u = vecs.columns(a, b - a);
                    let proj = u.adjoint() * &x;
                    let nrm = proj.norm();
                    if nrm > best[pos].0 {
                        best[pos] = (nrm, u * proj);
                    }
                }
            }
            for (pos, (nrm, v)) in best.into_iter().enumerate().skip(1) {
                if nrm <= RELATION_GAP * rscale {
                    return Err(Failure::Degenerate);
                }
                w.set_column(pos, &(v / C64::new(nrm, 0.0)));
            }
        }
        blocks.push((w, size));
    }
    blocks.sort_by(|a, b| b.0.ncols().cmp(&a.0.ncols()).then(b.1.cmp(&a.1)));

    let block_sizes: Vec<usize> = blocks.iter().map(|b| b.0.ncols()).collect();
    let dim: usize = block_sizes.iter().map(|s| s * s).sum();
    if dim != m {
        return Err(Failure::Fatal(AlgebraError::NotAnAlgebra(format!(
            "block dimensions sum to {dim}, basis has {m} elements"
        ))));
    }

    // (6) images and residual
    let total: usize = block_sizes.iter().sum();
    let mut wall = DMatrix::<C64>::zeros(n, total);
    let mut offs = Vec::new();
    let mut off = 0;
    for (w, _) in &blocks {
        wall.columns_mut(off, w.ncols()).copy_from(w);
        offs.push(off);
        off += w.ncols();
    }
    let orth = (wall.adjoint() * &wall - DMatrix::<C64>::identity(total, total)).norm();
    let per_elem: Vec<(Vec<DMatrix<C64>>, f64)> = basis
        .elements
        .par_iter()
        .enumerate()
        .map(|(r, e)| {
            let bw = e.mul_dense(&wall);
            let mut imgs = Vec::with_capacity(blocks.len());
            let mut res = 0.0f64;
            for (bi, (w, _)) in blocks.iter().enumerate() {
                let cols = bw.columns(offs[bi], w.ncols());
                let img = w.adjoint() * cols;
                let diff = (cols - w * &img).norm();
                res = res.max(diff / norms[r].max(1.0));
                imgs.push(img);
            }
            (imgs, res)
        })
        .collect();
    let residual = per_elem.iter().fold(orth, |a, x| a.max(x.1));
    if residual > 1e3 * tol.max(1e-12) {
        return Err(Failure::Degenerate);
    }
    let images = per_elem.into_iter().map(|x| x.0).collect();
    Ok(BlockDiagonalization {
        d: blocks.len(),
        multiplicities: blocks.iter().map(|b| b.1).collect(),
        transform: blocks.into_iter().map(|b| b.0).collect(),
        block_sizes,
        kernel_dim,
        images,
        residual,
        seed,
    })
}

fn vnorm(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Block images of every basis element, from either construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageMap {
    pub block_sizes: Vec<usize>,
    pub multiplicities: Option<Vec<usize>>,
    pub kernel_dim: usize,
    pub images: Vec<Vec<DMatrix<C64>>>,
}

/// What the images are checked against.
#[derive(Debug, Clone, Copy, Default)]
pub struct Reference<'a> {
    pub constants: Option<&'a StructureConstants>,
    pub basis: Option<&'a AlgebraBasis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub multiplicativity_error: f64,
    pub adjoint_error: f64,
    pub block_dimension: usize,
    pub basis_dimension: usize,
    pub image_rank: usize,
    pub eigenvalue_error: Option<f64>,
    pub tol: f64,
    pub passed: bool,
}

/// Checks multiplicativity, the adjoint law, injectivity, the dimension count for
/// block maps and (when the basis is available) spectra of five seeded Hermitian
/// elements.
pub fn verify_star_isomorphism(map: &ImageMap, reference: Reference<'_>, tol: f64) -> VerificationReport {
    let m = map.images.len();
    let table = reference.constants.map(|sc| sc.product_table());
    let gram = reference.basis.map(|b| b.gram());
    let product_coef = |r: usize, s: usize| -> Vec<(usize, C64)> {
        if let Some(t) = &table {
            t.get(&(r, s))
                .map(|v| v.iter().map(|&(t, p)| (t, C64::new(p as f64, 0.0))).collect())
                .unwrap_or_default()
        } else {
            let b = reference.basis.expect("reference needs constants or a basis");
            let p = b.elements[r].mul_sparse(&b.elements[s]);
            let (x, _) = b.coordinates_with(gram.as_ref().unwrap(), &p);
            x.into_iter().enumerate().filter(|(_, v)| v.norm() > 1e-14).collect()
        }
    };
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|r| (0..m).map(move |s| (r, s))).collect();
    let mult = pairs
        .par_iter()
        .map(|&(r, s)| {
            let coef = product_coef(r, s);
            let mut err = 0.0f64;
            for k in 0..map.block_sizes.len() {
                let mut d = &map.images[r][k] * &map.images[s][k];
                for &(t, c) in &coef {
                    d -= &map.images[t][k] * c;
                }
                err = err.max(linalg::max_abs_c(&d));
            }
            err
        })
        .reduce(|| 0.0, f64::max);

    let mut adj = 0.0f64;
    for r in 0..m {
        let coef: Vec<(usize, C64)> = if let Some(sc) = reference.constants {
            vec![(sc.transpose_map[r], C64::one())]
        } else {
            let b = reference.basis.unwrap();
            let (x, _) = b.coordinates_with(gram.as_ref().unwrap(), &b.elements[r].adjoint());
            x.into_iter().enumerate().filter(|(_, v)| v.norm() > 1e-14).collect()
        };
        for k in 0..map.block_sizes.len() {
            let mut d = map.images[r][k].adjoint();
            for &(t, c) in &coef {
                d -= &map.images[t][k] * c;
            }
            adj = adj.max(linalg::max_abs_c(&d));
        }
    }

    let block_dimension: usize = map.block_sizes.iter().map(|s| s * s).sum();
    let image_rank = image_rank(map);
    let eigenvalue_error = reference.basis.map(|b| spectrum_error(map, b));
    let passed = mult <= tol
        && adj <= tol
        && image_rank == m
        && (map.multiplicities.is_none() || block_dimension == m)
        && eigenvalue_error.map_or(true, |e| e <= tol);
    VerificationReport {
        multiplicativity_error: mult,
        adjoint_error: adj,
        block_dimension,
        basis_dimension: m,
        image_rank,
        eigenvalue_error,
        tol,
        passed,
    }
}

fn image_rank(map: &ImageMap) -> usize {
    let m = map.images.len();
    let rows: usize = map.block_sizes.iter().map(|s| 2 * s * s).sum();
    let mut a = DMatrix::<f64>::zeros(rows, m);
    for (r, img) in map.images.iter().enumerate() {
        let mut k = 0;
        for blk in img {
            for v in blk.iter() {
                a[(k, r)] = v.re;
                a[(k + 1, r)] = v.im;
                k += 2;
            }
        }
    }
    let sv = a.singular_values();
    let top = sv.max();
    sv.iter().filter(|&&s| s > 1e-9 * top.max(1e-300)).count()
}

fn spectrum_error(map: &ImageMap, basis: &AlgebraBasis) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let m = basis.dim();
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let x: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let coef: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
        let a = basis.combine(&coef).to_dense();
        let herm = (&a + a.adjoint()) * C64::new(0.5, 0.0);
        let full = linalg::hermitian_eigenvalues(&herm);
        let mut reduced = Vec::new();
        for k in 0..map.block_sizes.len() {
            let mut b = DMatrix::<C64>::zeros(map.block_sizes[k], map.block_sizes[k]);
            for (r, &w) in coef.iter().enumerate() {
                b += &map.images[r][k] * w;
            }
            let hb = (&b + b.adjoint()) * C64::new(0.5, 0.0);
            let ev = linalg::hermitian_eigenvalues(&hb);
            let times = map.multiplicities.as_ref().map_or(1, |mu| mu[k]);
            for v in ev {
                reduced.extend(std::iter::repeat(v).take(times));
            }
        }
        let err = if map.multiplicities.is_some() {
            reduced.extend(std::iter::repeat(0.0).take(map.kernel_dim));
            reduced.sort_by(f64::total_cmp);
            if reduced.len() != full.len() {
                return f64::INFINITY;
            }
            full.iter().zip(&reduced).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        } else {
            let dist = |v: f64, set: &[f64]| set.iter().map(|w| (v - w).abs()).fold(f64::INFINITY, f64::min);
            let a = full.iter().map(|&v| dist(v, &reduced)).fold(0.0, f64::max);
            let b = reduced.iter().map(|&v| dist(v, &full)).fold(0.0, f64::max);
            a.max(b)
        };
        worst = worst.max(err);
    }
    worst
}

/// A factor `B` with `A = B^*B`, together with its basis coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdFactor {
    pub matrix: DMatrix<C64>,
    pub coordinates: Vec<C64>,
    pub residual: f64,
}

/// Square root of a psd element of the algebra. The spectral square root
/// equals `p(A)` for any polynomial with `p(λ) = sqrt(λ)` on the spectrum
/// and `p(0) = 0`, so it stays inside the algebra.
pub fn psd_decompose(a: &DMatrix<C64>, basis: &AlgebraBasis, tol: f64) -> Result<PsdFactor, AlgebraError> {
    let sa = SparseMatrix::from_dense(a);
    let scale = linalg::max_abs_c(a).max(1.0);
    let (_, res) = basis.coordinates(&sa);
    if res > tol * scale * (basis.n as f64) {
        return Err(AlgebraError::NotInAlgebra(res));
    }
    let herm = (a + a.adjoint()) * C64::new(0.5, 0.0);
    let (vals, vecs) = linalg::hermitian_eigen(&herm);
    if let Some(&lo) = vals.first() {
        if lo < -tol * scale {
            return Err(AlgebraError::NotPsd(lo));
        }
    }
    let root = DMatrix::from_diagonal(&DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&v| C64::new(v.max(0.0).sqrt(), 0.0)),
    ));
    let b = &vecs * root * vecs.adjoint();
    let (coordinates, _) = basis.coordinates(&SparseMatrix::from_dense(&b));
    let residual = linalg::max_abs_c(&(b.adjoint() * &b - a));
    Ok(PsdFactor { matrix: b, coordinates, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perm_groups::{cyclic_group, pair_orbits, structure_constants, symmetric_group, GroupAction};

    fn unit(n: usize, i: usize, j: usize) -> SparseMatrix {
        SparseMatrix::from_real_triplets(n, n, &[(i, j, 1.0)])
    }

    fn labels(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("B{i}")).collect()
    }

    #[test]
    fn regular_rep_of_s3_matches_hand_values() {
        let g = symmetric_group(3);
        let o = pair_orbits(&g);
        let sc = structure_constants(&o, &g).unwrap();
        let rr = regular_rep(&sc);
        assert_eq!(rr.matrix(0), DMatrix::identity(2, 2));
        let l2 = rr.matrix(1);
        let s2 = 2f64.sqrt();
        let expect = DMatrix::from_row_slice(2, 2, &[0.0, s2, s2, 1.0]);
        assert!((l2 - &expect).abs().max() < 1e-15);
        let ev = linalg::symmetric_eigenvalues(&expect);
        assert!((ev[0] + 1.0).abs() < 1e-12 && (ev[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn regular_rep_adjoint_law_for_cyclic_group() {
        let g = cyclic_group(5);
        let o = pair_orbits(&g);
        let sc = structure_constants(&o, &g).unwrap();
        let rr = regular_rep(&sc);
        for r in 0..sc.m {
            assert_eq!(rr.matrix(sc.transpose_map[r]), rr.matrix(r).transpose());
        }
        let rep = verify_star_isomorphism(&rr.image_map(), Reference { constants: Some(&sc), basis: None }, 1e-12);
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn diagonal_units_give_scalar_blocks() {
        let b = AlgebraBasis::new(3, (0..3).map(|i| unit(3, i, i)).collect(), labels(3)).unwrap();
        let bd = block_diagonalize(&b, 1, 1e-10).unwrap();
        assert_eq!(bd.block_sizes, vec![1, 1, 1]);
    }

    #[test]
    fn full_matrix_algebra_is_one_block() {
        let els = vec![unit(2, 0, 0), unit(2, 0, 1), unit(2, 1, 0), unit(2, 1, 1)];
        let b = AlgebraBasis::new(2, els, labels(4)).unwrap();
        let bd = block_diagonalize(&b, 3, 1e-10).unwrap();
        assert_eq!(bd.block_sizes, vec![2]);
        assert_eq!(bd.multiplicities, vec![1]);
        let rep = verify_star_isomorphism(&bd.image_map(), Reference { constants: None, basis: Some(&b) }, 1e-8);
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn s3_invariant_algebra_blocks() {
        let g = symmetric_group(3);
        let o = pair_orbits(&g);
        let sc = structure_constants(&o, &g).unwrap();
        let b = AlgebraBasis::from_orbits(&o);
        let bd = block_diagonalize(&b, 7, 1e-10).unwrap();
        assert_eq!(bd.block_sizes, vec![1, 1]);
        let mut mult = bd.multiplicities.clone();
        mult.sort();
        assert_eq!(mult, vec![1, 2]);
        let rep = verify_star_isomorphism(&bd.image_map(), Reference { constants: Some(&sc), basis: Some(&b) }, 1e-8);
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn cyclic_group_needs_complex_blocks() {
        let g = cyclic_group(5);
        let o = pair_orbits(&g);
        let b = AlgebraBasis::from_orbits(&o);
        let bd = block_diagonalize(&b, 1, 1e-10).unwrap();
        assert_eq!(bd.block_sizes, vec![1; 5]);
        assert!(!bd.is_real(1e-9));
    }

    #[test]
    fn algebra_without_identity_reports_kernel() {
        let b = AlgebraBasis::new(3, vec![unit(3, 0, 0)], labels(1)).unwrap();
        let bd = block_diagonalize(&b, 2, 1e-10).unwrap();
        assert_eq!(bd.block_sizes, vec![1]);
        assert_eq!(bd.kernel_dim, 2);
    }

    #[test]
    fn span_that_is_not_closed_is_rejected() {
        let e = SparseMatrix::from_real_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 1.0)]);
        let b = AlgebraBasis::new(2, vec![e], labels(1)).unwrap();
        assert!(matches!(block_diagonalize(&b, 1, 1e-10), Err(AlgebraError::NotAnAlgebra(_))));
    }

    #[test]
    fn corrupted_image_fails_verification() {
        let g = symmetric_group(3);
        let o = pair_orbits(&g);
        let sc = structure_constants(&o, &g).unwrap();
        let b = AlgebraBasis::from_orbits(&o);
        let mut map = block_diagonalize(&b, 7, 1e-10).unwrap().image_map();
        map.images[1][0][(0, 0)] += C64::new(1.0, 0.0);
        let rep = verify_star_isomorphism(&map, Reference { constants: Some(&sc), basis: None }, 1e-8);
        assert!(!rep.passed);
        assert!(rep.multiplicativity_error > 0.5);
    }

    #[test]
    fn psd_square_roots() {
        let g = symmetric_group(3);
        let b = AlgebraBasis::from_orbits(&pair_orbits(&g));
        let id = DMatrix::<C64>::identity(3, 3);
        let f = psd_decompose(&id, &b, 1e-10).unwrap();
        assert!(linalg::max_abs_c(&(&f.matrix - &id)) < 1e-12);
        let j = DMatrix::from_element(3, 3, C64::new(1.0, 0.0));
        let f = psd_decompose(&j, &b, 1e-10).unwrap();
        assert!(linalg::max_abs_c(&(&f.matrix - &j / C64::new(3f64.sqrt(), 0.0))) < 1e-12);
        assert!(f.residual < 1e-12);
        let neg = &j - &id * C64::new(2.0, 0.0);
        assert!(matches!(psd_decompose(&neg, &b, 1e-10), Err(AlgebraError::NotPsd(_))));
    }

    #[test]
    fn psd_decompose_rejects_elements_outside_the_algebra() {
        let g = symmetric_group(3);
        let b = AlgebraBasis::from_orbits(&pair_orbits(&g));
        let mut a = DMatrix::<C64>::identity(3, 3);
        a[(0, 0)] = C64::new(2.0, 0.0);
        assert!(matches!(psd_decompose(&a, &b, 1e-10), Err(AlgebraError::NotInAlgebra(_))));
    }

    #[test]
    fn basis_json_round_trip() {
        let g = GroupAction::new(2, vec![crate::perm_groups::Permutation::new(vec![1, 0]).unwrap()]).unwrap();
        let b = AlgebraBasis::from_orbits(&pair_orbits(&g));
        let back = AlgebraBasis::from_json(&b.to_json()).unwrap();
        assert_eq!(back, b);
        assert!(AlgebraBasis::from_json("{\"n\":2,\"elements\":[[[0,5,1]]]}").is_err());
    }
}
