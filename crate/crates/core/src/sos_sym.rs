//! Sums of squares with symmetry: the representation `π(g)` of a linear
//! group on polynomials of bounded degree in the graded-lex monomial basis,
//! the symmetry-reduced Gram matrix program and certificate reconstruction.
//!
//! The Gram program is normalized as `max t` such that `p − t·ν` is a sum
//! of squares, with `ν = zᵀNz` for the invariant positive definite `N`;
//! `p` is a sum of squares iff the optimum is `≥ 0`. An optimal moment
//! functional with negative value on `p` separates `p` from the cone of
//! sums of squares.

use std::collections::{BTreeMap, HashMap, HashSet};

use nalgebra::{DMatrix, DVector};
use num::{BigInt, BigRational, One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, SparseMatrix, C64};
use crate::sdp_model::SdpaBuilder;
use crate::solver::{self, BlockMatrix, SolverError, Status};
use crate::star_algebra::{self, AlgebraBasis, AlgebraError};

/// Groups up to this order are enumerated and averaged over.
pub const ENUMERATION_LIMIT: usize = 10_000;

#[derive(Debug, Error)]
pub enum SosError {
    #[error("invalid input: {0}")]
    Range(String),
    #[error("generator {0} is singular")]
    Singular(usize),
    #[error("polynomial is not invariant under generator {generator} (deviation {deviation:e})")]
    NotInvariant { generator: usize, deviation: f64 },
    #[error("no sum of squares representation at degree {}; separating functional has value {:e}", .0.degree, .0.shifted_value)]
    Infeasible(Box<SeparatingFunctional>),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("solver finished with status {0}")]
    NotSolved(Status),
}

/// Sparse real polynomial in `n` variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub n: usize,
    pub terms: BTreeMap<Vec<u32>, f64>,
}

impl Polynomial {
    pub fn new(n: usize, terms: impl IntoIterator<Item = (Vec<u32>, f64)>) -> Result<Self, SosError> {
        let mut map: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (e, c) in terms {
            if e.len() != n {
                return Err(SosError::Range(format!("exponent {e:?} has length {}, expected {n}", e.len())));
            }
            if !c.is_finite() {
                return Err(SosError::Range(format!("coefficient {c} of {e:?}")));
            }
            *map.entry(e).or_insert(0.0) += c;
        }
        map.retain(|_, c| *c != 0.0);
        Ok(Self { n, terms: map })
    }

    pub fn zero(n: usize) -> Self {
        Self { n, terms: BTreeMap::new() }
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn coefficient(&self, e: &[u32]) -> f64 {
        self.terms.get(e).copied().unwrap_or(0.0)
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(e, c)| c * e.iter().zip(x).map(|(&k, &xi)| xi.powi(k as i32)).product::<f64>()).sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        for (e, c) in &other.terms {
            *terms.entry(e.clone()).or_insert(0.0) += c;
        }
        terms.retain(|_, c| *c != 0.0);
        Self { n: self.n, terms }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut terms: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (a, x) in &self.terms {
            for (b, y) in &other.terms {
                let e: Vec<u32> = a.iter().zip(b).map(|(i, j)| i + j).collect();
                *terms.entry(e).or_insert(0.0) += x * y;
            }
        }
        terms.retain(|_, c| *c != 0.0);
        Self { n: self.n, terms }
    }

    /// `p(A x)`.
    pub fn substitute(&self, a: &DMatrix<f64>) -> Self {
        let forms: Vec<Self> = (0..self.n)
            .map(|i| Self::new(self.n, (0..self.n).map(|j| (unit(self.n, j), a[(i, j)]))).unwrap())
            .collect();
        let mut out = Self::zero(self.n);
        for (e, c) in &self.terms {
            let mut t = Self::new(self.n, [(vec![0; self.n], *c)]).unwrap();
            for (i, &k) in e.iter().enumerate() {
                for _ in 0..k {
                    t = t.mul(&forms[i]);
                }
            }
            out = out.add(&t);
        }
        out
    }

    /// JSON list of `[exponents, coefficient]` pairs.
    pub fn from_json(text: &str) -> Result<Self, SosError> {
        let raw: Vec<(Vec<u32>, f64)> = serde_json::from_str(text).map_err(|e| SosError::Range(format!("polynomial JSON: {e}")))?;
        let n = raw.first().map(|(e, _)| e.len()).ok_or_else(|| SosError::Range("empty polynomial".into()))?;
        Self::new(n, raw)
    }

    pub fn to_json(&self) -> String {
        let raw: Vec<(&Vec<u32>, f64)> = self.terms.iter().map(|(e, c)| (e, *c)).collect();
        serde_json::to_string(&raw).unwrap()
    }

    /// `x₁⁴x₂² + x₁²x₂⁴ − 3x₁²x₂² + 1`.
    pub fn motzkin() -> Self {
        Self::new(2, [(vec![4, 2], 1.0), (vec![2, 4], 1.0), (vec![2, 2], -3.0), (vec![0, 0], 1.0)]).unwrap()
    }
}

fn unit(n: usize, j: usize) -> Vec<u32> {
    let mut e = vec![0; n];
    e[j] = 1;
    e
}

/// Exponent vectors of degree `≤ d`, graded, lexicographically descending
/// within each degree: `1, x₁, x₂, x₁², x₁x₂, x₂², …`.
pub fn monomials(n: usize, d: u32) -> Vec<Vec<u32>> {
    fn fill(prefix: &mut Vec<u32>, n: usize, left: u32, out: &mut Vec<Vec<u32>>) {
        if prefix.len() + 1 == n {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in (0..=left).rev() {
            prefix.push(k);
            fill(prefix, n, left - k, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for deg in 0..=d {
        if n == 0 {
            if deg == 0 {
                out.push(Vec::new());
            }
            continue;
        }
        fill(&mut Vec::new(), n, deg, &mut out);
    }
    out
}

/// `π(g)` for the generators on polynomials of degree `≤ d`: column `β`
/// holds the coefficients of `x^β ∘ g⁻¹`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonomialRep {
    pub n: usize,
    pub d: u32,
    pub monomials: Vec<Vec<u32>>,
    pub matrices: Vec<DMatrix<f64>>,
}

impl MonomialRep {
    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn index(&self) -> HashMap<Vec<u32>, usize> {
        self.monomials.iter().cloned().enumerate().map(|(i, e)| (e, i)).collect()
    }
}

type RMat = Vec<Vec<BigRational>>;

fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite entry")
}

fn to_rational(a: &DMatrix<f64>) -> RMat {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| rational(a[(i, j)])).collect()).collect()
}

/// Exact Gauss–Jordan inverse of a matrix with float entries.
fn rational_inverse(a: &DMatrix<f64>) -> Option<RMat> {
    let n = a.nrows();
    let mut m = to_rational(a);
    let mut inv: RMat = (0..n).map(|i| (0..n).map(|j| if i == j { BigRational::one() } else { BigRational::zero() }).collect()).collect();
    for c in 0..n {
        let p = (c..n).find(|&r| !m[r][c].is_zero())?;
        m.swap(c, p);
        inv.swap(c, p);
        let piv = m[c][c].clone();
        for j in 0..n {
            m[c][j] = &m[c][j] / &piv;
            inv[c][j] = &inv[c][j] / &piv;
        }
        for r in 0..n {
            if r != c && !m[r][c].is_zero() {
                let f = m[r][c].clone();
                for j in 0..n {
                    let (a, b) = (&m[c][j] * &f, &inv[c][j] * &f);
                    m[r][j] -= a;
                    inv[r][j] -= b;
                }
            }
        }
    }
    Some(inv)
}

type RPoly = BTreeMap<Vec<u32>, BigRational>;

fn rpoly_mul(a: &RPoly, b: &RPoly) -> RPoly {
    let mut out = RPoly::new();
    for (x, c) in a {
        for (y, e) in b {
            let k: Vec<u32> = x.iter().zip(y).map(|(i, j)| i + j).collect();
            *out.entry(k).or_insert_with(BigRational::zero) += c * e;
        }
    }
    out.retain(|_, c| !c.is_zero());
    out
}

/// `π` from `g⁻¹` in exact arithmetic.
fn pi_exact(ginv: &RMat, monos: &[Vec<u32>], index: &HashMap<Vec<u32>, usize>) -> Vec<Vec<BigRational>> {
    let n = ginv.len();
    let size = monos.len();
    let forms: Vec<RPoly> = (0..n)
        .map(|i| (0..n).filter(|&j| !ginv[i][j].is_zero()).map(|j| (unit(n, j), ginv[i][j].clone())).collect())
        .collect();
    let mut out = vec![vec![BigRational::zero(); size]; size];
    for (col, beta) in monos.iter().enumerate() {
        let mut acc: RPoly = [(vec![0; n], BigRational::one())].into_iter().collect();
        for (i, &k) in beta.iter().enumerate() {
            for _ in 0..k {
                acc = rpoly_mul(&acc, &forms[i]);
            }
        }
        for (e, c) in acc {
            out[index[&e]][col] = c;
        }
    }
    out
}

fn pi_float(ginv: &RMat, monos: &[Vec<u32>], index: &HashMap<Vec<u32>, usize>) -> DMatrix<f64> {
    let ex = pi_exact(ginv, monos, index);
    DMatrix::from_fn(monos.len(), monos.len(), |i, j| ex[i][j].to_f64().unwrap())
}

fn check_generators(gens: &[DMatrix<f64>], n: usize) -> Result<(), SosError> {
    for (k, g) in gens.iter().enumerate() {
        if g.nrows() != n || g.ncols() != n {
            return Err(SosError::Range(format!("generator {k} is {}x{}, expected {n}x{n}", g.nrows(), g.ncols())));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(SosError::Range(format!("generator {k} has a non-finite entry")));
        }
    }
    Ok(())
}

/// The substitution action `p ↦ p(g⁻¹x)` on polynomials of degree `≤ d`.
pub fn monomial_rep(gens: &[DMatrix<f64>], n: usize, d: u32) -> Result<MonomialRep, SosError> {
    check_generators(gens, n)?;
    let inverses = gens.iter().enumerate().map(|(k, g)| rational_inverse(g).ok_or(SosError::Singular(k))).collect::<Result<Vec<_>, _>>()?;
    Ok(rep_from_exact_inverses(&inverses, n, d))
}

/// As [`monomial_rep`], given the inverses `g⁻¹` directly.
pub fn monomial_rep_from_inverses(inverses: &[DMatrix<f64>], n: usize, d: u32) -> Result<MonomialRep, SosError> {
    check_generators(inverses, n)?;
    for (k, g) in inverses.iter().enumerate() {
        if rational_inverse(g).is_none() {
            return Err(SosError::Singular(k));
        }
    }
    Ok(rep_from_exact_inverses(&inverses.iter().map(to_rational).collect::<Vec<_>>(), n, d))
}

fn rep_from_exact_inverses(inverses: &[RMat], n: usize, d: u32) -> MonomialRep {
    let monos = monomials(n, d);
    let index: HashMap<Vec<u32>, usize> = monos.iter().cloned().enumerate().map(|(i, e)| (e, i)).collect();
    let matrices = inverses.iter().map(|gi| pi_float(gi, &monos, &index)).collect();
    MonomialRep { n, d, monomials: monos, matrices }
}

/// All products of the generators, or `None` past `limit` elements.
pub fn enumerate_matrix_group(gens: &[DMatrix<f64>], n: usize, limit: usize) -> Option<Vec<DMatrix<f64>>> {
    let key = |m: &DMatrix<f64>| -> Vec<i64> { m.iter().map(|v| (v * 1e8).round() as i64).collect() };
    let id = DMatrix::<f64>::identity(n, n);
    let mut seen: HashSet<Vec<i64>> = HashSet::new();
    seen.insert(key(&id));
    let mut elems = vec![id];
    let mut head = 0;
    while head < elems.len() {
        let cur = elems[head].clone();
        head += 1;
        for g in gens {
            let next = g * &cur;
            if seen.insert(key(&next)) {
                if elems.len() >= limit {
                    return None;
                }
                elems.push(next);
            }
        }
    }
    Some(elems)
}

/// Largest `|p(g⁻¹x) − p(x)|` over seeded random points, per generator.
fn check_invariance(p: &Polynomial, gens: &[DMatrix<f64>], seed: u64) -> Result<(), SosError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (k, g) in gens.iter().enumerate() {
        let ginv = g.clone().try_inverse().ok_or(SosError::Singular(k))?;
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let x = DVector::from_fn(p.n, |_, _| rng.gen_range(-1.5..1.5));
            let y = &ginv * &x;
            let (a, b) = (p.eval(x.as_slice()), p.eval(y.as_slice()));
            worst = worst.max((a - b).abs() / (1.0 + a.abs()));
        }
        if worst > 1e-9 {
            return Err(SosError::NotInvariant { generator: k, deviation: worst });
        }
    }
    Ok(())
}

/// The space of invariant Gram matrices `X` (`π(g) X π(g)ᵀ = X`) written
/// as `X = Σ_k Σ_{u,v} Z^k_{uv} M^k_{uv}` with `Z^k ⪰ 0`.
#[derive(Debug, Clone)]
pub struct GramStructure {
    pub monomials: Vec<Vec<u32>>,
    /// Real sizes of the psd blocks; a complex block of size `m` appears as
    /// its real embedding of size `2m`.
    pub block_sizes: Vec<usize>,
    /// Sizes of the blocks of the commutant itself.
    pub algebra_block_sizes: Vec<usize>,
    pub maps: Vec<Vec<DMatrix<f64>>>,
    /// Invariant positive definite `N`, here `avg π(g)π(g)ᵀ`.
    pub normalizer: DMatrix<f64>,
    /// `S = N^{1/2}`: `X ↦ S⁻¹XS⁻ᵀ` maps invariant matrices into the commutant
    /// of the orthogonal representation `S⁻¹πS`.
    pub sqrt_normalizer: DMatrix<f64>,
    pub commutant: AlgebraBasis,
    pub group_order: Option<usize>,
}

impl GramStructure {
    /// `X` from the block variables.
    pub fn gram(&self, z: &[DMatrix<f64>]) -> DMatrix<f64> {
        let n = self.monomials.len();
        let mut x = DMatrix::zeros(n, n);
        for (k, zk) in z.iter().enumerate() {
            let m = self.block_sizes[k];
            for u in 0..m {
                for v in 0..m {
                    if zk[(u, v)] != 0.0 {
                        x += &self.maps[k][u * m + v] * zk[(u, v)];
                    }
                }
            }
        }
        x
    }
}

fn sym_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let e = a.clone().symmetric_eigen();
    &e.eigenvectors * DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0).sqrt())) * e.eigenvectors.transpose()
}

/// Invariant Gram structure at degree `d` for the group generated by `gens`.
pub fn gram_structure(gens: &[DMatrix<f64>], n: usize, d: u32, seed: u64) -> Result<GramStructure, SosError> {
    check_generators(gens, n)?;
    let rep = monomial_rep(gens, n, d)?;
    let size = rep.len();
    let elements = enumerate_matrix_group(gens, n, ENUMERATION_LIMIT);
    let (normalizer, pis) = match &elements {
        Some(el) => {
            let pis = monomial_rep(el, n, d)?.matrices;
            let mut nm = DMatrix::zeros(size, size);
            for p in &pis {
                nm += p * p.transpose();
            }
            (nm / pis.len() as f64, Some(pis))
        }
        None => {
            for (k, p) in rep.matrices.iter().enumerate() {
                if (p * p.transpose() - DMatrix::identity(size, size)).amax() > 1e-9 {
                    return Err(SosError::Range(format!("generator {k}: group too large to average and π(g) is not orthogonal")));
                }
            }
            (DMatrix::identity(size, size), None)
        }
    };
    let s = sym_sqrt(&normalizer);
    let s_inv = s.clone().try_inverse().ok_or_else(|| SosError::Range("singular normalizer".into()))?;
    let conj = |p: &DMatrix<f64>| &s_inv * p * &s;
    // Commutant of the orthogonal representation U = S⁻¹πS.
    let candidates: Vec<DMatrix<f64>> = match &pis {
        Some(pis) => {
            let us: Vec<DMatrix<f64>> = pis.iter().map(conj).collect();
            let mut out = Vec::new();
            for i in 0..size {
                for j in 0..size {
                    let mut acc = DMatrix::zeros(size, size);
                    for u in &us {
                        acc += u.column(i) * u.column(j).transpose();
                    }
                    out.push(acc / us.len() as f64);
                }
            }
            out
        }
        None => {
            let us: Vec<DMatrix<f64>> = rep.matrices.iter().map(conj).collect();
            let mut sys = DMatrix::zeros(us.len() * size * size, size * size);
            for (g, u) in us.iter().enumerate() {
                // (U X − X U)_{ij} = Σ_k U_ik X_kj − X_ik U_kj, X column-major.
                for i in 0..size {
                    for j in 0..size {
                        let row = g * size * size + j * size + i;
                        for k in 0..size {
                            sys[(row, j * size + k)] += u[(i, k)];
                            sys[(row, k * size + i)] -= u[(k, j)];
                        }
                    }
                }
            }
            let ns = linalg::null_space(&sys, 1e-9);
            (0..ns.ncols()).map(|c| DMatrix::from_column_slice(size, size, ns.column(c).as_slice())).collect()
        }
    };
    let mut stacked = DMatrix::from_fn(size * size, candidates.len(), |r, c| candidates[c][r]);
    let pivots = linalg::rref(&mut stacked, 1e-9);
    let basis_elems: Vec<DMatrix<f64>> = pivots.iter().map(|&c| candidates[c].clone()).collect();
    let dim = basis_elems.len();
    let commutant = AlgebraBasis::new(
        size,
        basis_elems.iter().map(SparseMatrix::from_real_dense).collect(),
        (0..dim).map(|r| format!("C{r}")).collect(),
    )?;
    let lift = |a: &DMatrix<f64>| &s * a * s.transpose();
    let (block_sizes, algebra_block_sizes, maps) = if dim == size * size {
        // Trivial action: one full block of matrix units.
        let maps = (0..size * size)
            .map(|r| {
                let mut e = DMatrix::zeros(size, size);
                e[(r / size, r % size)] = 1.0;
                lift(&e)
            })
            .collect();
        (vec![size], vec![size], vec![maps])
    } else {
        let bd = star_algebra::block_diagonalize(&commutant, seed, 1e-9)?;
        let inv = bd.inverse_coordinate_matrix()?;
        let combine = |col: usize| -> DMatrix<C64> {
            let mut acc = DMatrix::<C64>::zeros(size, size);
            for (r, b) in basis_elems.iter().enumerate() {
                let w = inv[(r, col)];
                if w.norm() > 0.0 {
                    acc += linalg::to_complex(b) * w;
                }
            }
            acc
        };
        let mut sizes = Vec::new();
        let mut maps = Vec::new();
        let mut offset = 0;
        for (k, &m) in bd.block_sizes.iter().enumerate() {
            let real = bd.images.iter().all(|im| linalg::is_real_matrix(&im[k], 1e-9));
            let units: Vec<DMatrix<C64>> = (0..m * m).map(|c| combine(offset + c)).collect();
            offset += m * m;
            if real {
                sizes.push(m);
                maps.push(units.iter().map(|e| lift(&e.map(|v| v.re))).collect());
            } else {
                let r = 2 * m;
                let mut block = vec![DMatrix::zeros(size, size); r * r];
                for u in 0..m {
                    for v in 0..m {
                        let e = &units[u * m + v];
                        let (re, im) = (lift(&e.map(|v| v.re)) * 0.5, lift(&e.map(|v| v.im)) * 0.5);
                        block[u * r + v] += &re;
                        block[(m + u) * r + (m + v)] += &re;
                        block[(m + u) * r + v] -= &im;
                        block[u * r + (m + v)] += &im;
                    }
                }
                sizes.push(r);
                maps.push(block);
            }
        }
        (sizes, bd.block_sizes.clone(), maps)
    };
    Ok(GramStructure {
        monomials: rep.monomials,
        block_sizes,
        algebra_block_sizes,
        maps,
        normalizer,
        sqrt_normalizer: s,
        commutant,
        group_order: elements.map(|e| e.len()),
    })
}

/// `p = Σ_i w_i (l_iᵀ z)²` with rational weights `w_i ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalCertificate {
    pub monomials: Vec<Vec<u32>>,
    pub weights: Vec<BigRational>,
    pub vectors: Vec<Vec<BigRational>>,
}

impl RationalCertificate {
    /// Exact coefficients of `Σ w_i (l_iᵀ z)²`.
    pub fn expand(&self) -> BTreeMap<Vec<u32>, BigRational> {
        let mut out: BTreeMap<Vec<u32>, BigRational> = BTreeMap::new();
        for (w, l) in self.weights.iter().zip(&self.vectors) {
            for (a, la) in l.iter().enumerate() {
                if la.is_zero() {
                    continue;
                }
                for (b, lb) in l.iter().enumerate() {
                    if lb.is_zero() {
                        continue;
                    }
                    let e: Vec<u32> = self.monomials[a].iter().zip(&self.monomials[b]).map(|(i, j)| i + j).collect();
                    *out.entry(e).or_insert_with(BigRational::zero) += w * la * lb;
                }
            }
        }
        out.retain(|_, c| !c.is_zero());
        out
    }

    /// Exact identity with the (float-valued, exactly converted) polynomial.
    pub fn matches(&self, p: &Polynomial) -> bool {
        let target: BTreeMap<Vec<u32>, BigRational> = p.terms.iter().map(|(e, c)| (e.clone(), rational(*c))).collect();
        self.expand() == target
    }
}

#[derive(Debug, Clone)]
pub struct SosCertificate {
    /// `max t` with `p − t·ν` a sum of squares.
    pub t_star: f64,
    pub squares: Vec<Polynomial>,
    /// `max |Σ q_i² − p|` over coefficients.
    pub max_error: f64,
    pub gram: DMatrix<f64>,
    pub block_sizes: Vec<usize>,
    pub algebra_block_sizes: Vec<usize>,
    pub group_order: Option<usize>,
    pub rational: Option<RationalCertificate>,
}

/// A linear functional `L` on polynomials of degree `≤ 2d` with
/// `L(q²) ≥ 0` for all `q` of degree `≤ d` and `L(p) < 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatingFunctional {
    pub degree: u32,
    /// `L(x^α)`.
    pub values: Vec<(Vec<u32>, f64)>,
    /// `L(p)` as returned by the solver.
    pub value_on_p: f64,
    /// Smallest eigenvalue of the moment matrix `[L(z_β z_γ)]`.
    pub min_moment_eigenvalue: f64,
    /// Multiple of the Gaussian moment functional added to make the moment matrix psd.
    pub gaussian_shift: f64,
    /// `L(p)` after the shift; negative when the separation is verified.
    pub shifted_value: f64,
    pub verified: bool,
}

/// `E(x^α) = Π (α_i − 1)!!` for all `α_i` even, else 0.
fn gaussian_moment(e: &[u32]) -> f64 {
    e.iter()
        .map(|&k| {
            if k % 2 == 1 {
                0.0
            } else {
                (1..k).step_by(2).map(|j| j as f64).product::<f64>()
            }
        })
        .product()
}

/// Checks `L` as a separator of `p` from sums of squares of degree `≤ d`:
/// builds the full moment matrix, shifts by the Gaussian moment functional
/// until it is psd and evaluates on `p`.
pub fn verify_separation(p: &Polynomial, d: u32, values: &HashMap<Vec<u32>, f64>) -> SeparatingFunctional {
    let z = monomials(p.n, d);
    let add = |a: &[u32], b: &[u32]| -> Vec<u32> { a.iter().zip(b).map(|(i, j)| i + j).collect() };
    let moment = DMatrix::from_fn(z.len(), z.len(), |i, j| values.get(&add(&z[i], &z[j])).copied().unwrap_or(0.0));
    let gauss = DMatrix::from_fn(z.len(), z.len(), |i, j| gaussian_moment(&add(&z[i], &z[j])));
    let lam = linalg::min_eigenvalue(&moment);
    let lam_g = linalg::min_eigenvalue(&gauss);
    let shift = if lam < 0.0 { -lam / lam_g * (1.0 + 1e-6) + 1e-15 } else { 0.0 };
    let value_on_p: f64 = p.terms.iter().map(|(e, c)| c * values.get(e).copied().unwrap_or(0.0)).sum();
    let gauss_p: f64 = p.terms.iter().map(|(e, c)| c * gaussian_moment(e)).sum();
    let shifted = value_on_p + shift * gauss_p;
    let scale = 1.0 + values.values().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut vals: Vec<(Vec<u32>, f64)> = values.iter().map(|(e, v)| (e.clone(), *v)).collect();
    vals.sort_by(|a, b| a.0.cmp(&b.0));
    SeparatingFunctional {
        degree: d,
        values: vals,
        value_on_p,
        min_moment_eigenvalue: lam,
        gaussian_shift: shift,
        shifted_value: shifted,
        verified: lam_g > 0.0 && shifted < -1e-9 * scale * (1.0 + p.max_abs_coefficient()),
    }
}

/// Symmetry-reduced sum of squares test for `p` of even degree `2d`,
/// invariant under the group generated by `gens` (substitution `x ↦ g⁻¹x`).
pub fn sos_gram_sdp(p: &Polynomial, gens: &[DMatrix<f64>], seed: u64) -> Result<SosCertificate, SosError> {
    let deg = p.degree();
    if deg % 2 == 1 || p.terms.is_empty() {
        return Err(SosError::Range(format!("need a nonzero polynomial of even degree, got degree {deg}")));
    }
    check_generators(gens, p.n)?;
    check_invariance(p, gens, seed)?;
    let d = deg / 2;
    let gs = gram_structure(gens, p.n, d, seed)?;
    let full = monomials(p.n, 2 * d);
    let full_index: HashMap<Vec<u32>, usize> = full.iter().cloned().enumerate().map(|(i, e)| (e, i)).collect();
    let z = &gs.monomials;
    let nz = z.len();
    // Coefficient of x^α in zᵀMz.
    let pair_alpha: Vec<usize> = (0..nz * nz)
        .map(|r| {
            let e: Vec<u32> = z[r / nz].iter().zip(&z[r % nz]).map(|(i, j)| i + j).collect();
            full_index[&e]
        })
        .collect();
    let coeffs_of = |m: &DMatrix<f64>| -> Vec<f64> {
        let mut out = vec![0.0; full.len()];
        for i in 0..nz {
            for j in 0..nz {
                out[pair_alpha[i * nz + j]] += m[(i, j)];
            }
        }
        out
    };
    // Packed columns: per block the upper triangle, then t.
    let mut cols: Vec<(usize, usize, usize)> = Vec::new();
    for (k, &m) in gs.block_sizes.iter().enumerate() {
        for u in 0..m {
            for v in u..m {
                cols.push((k, u, v));
            }
        }
    }
    let ncol = cols.len() + 1;
    let mut a = DMatrix::zeros(full.len(), ncol);
    for (c, &(k, u, v)) in cols.iter().enumerate() {
        let m = gs.block_sizes[k];
        let mut coef = coeffs_of(&gs.maps[k][u * m + v]);
        if u != v {
            for (x, y) in coef.iter_mut().zip(coeffs_of(&gs.maps[k][v * m + u])) {
                *x += y;
            }
        }
        for (alpha, val) in coef.into_iter().enumerate() {
            a[(alpha, c)] = val;
        }
    }
    let nu = coeffs_of(&gs.normalizer);
    for (alpha, val) in nu.iter().enumerate() {
        a[(alpha, ncol - 1)] = *val;
    }
    let pvec: Vec<f64> = full.iter().map(|e| p.coefficient(e)).collect();
    let pscale = p.max_abs_coefficient();
    // Independent coefficient equations.
    let mut at = a.transpose();
    let kept = linalg::rref(&mut at, 1e-9 * (1.0 + a.amax()));
    let ak = DMatrix::from_fn(kept.len(), ncol, |i, j| a[(kept[i], j)]);
    {
        // Dropped rows must be implied by kept ones.
        let svd = ak.transpose().svd(true, true);
        let pk = DVector::from_iterator(kept.len(), kept.iter().map(|&r| pvec[r]));
        for r in 0..full.len() {
            if kept.contains(&r) {
                continue;
            }
            let row = DVector::from_iterator(ncol, (0..ncol).map(|j| a[(r, j)]));
            let w = svd.solve(&row, 1e-12).map_err(|e| SosError::Inconclusive(e.to_string()))?;
            let implied = w.dot(&pk);
            if (implied - pvec[r]).abs() > 1e-8 * (1.0 + pscale) {
                return Err(SosError::Inconclusive(format!("coefficient of {:?} is not reachable by invariant Gram matrices", full[r])));
            }
        }
    }
    let mut blocks: Vec<i64> = gs.block_sizes.iter().map(|&m| m as i64).collect();
    blocks.push(-2);
    let tb = blocks.len() - 1;
    let mut b = SdpaBuilder::new(blocks, kept.iter().map(|&r| pvec[r]).collect());
    b.add(0, tb, 0, 0, 1.0);
    b.add(0, tb, 1, 1, -1.0);
    for (i, &r) in kept.iter().enumerate() {
        for (c, &(k, u, v)) in cols.iter().enumerate() {
            let val = a[(r, c)];
            if val != 0.0 {
                b.add(i + 1, k, u, v, if u == v { val } else { val / 2.0 });
            }
        }
        b.add(i + 1, tb, 0, 0, nu[r]);
        b.add(i + 1, tb, 1, 1, -nu[r]);
    }
    let res = match solver::solve_sdp(&b.build(), 1e-9, 200) {
        Ok(r) => r,
        Err(SolverError::NoInterior { last, .. }) if last.relative_gap < 1e-5 && last.equality_residual < 1e-5 => *last,
        Err(e) => return Err(e.into()),
    };
    if !matches!(res.status, Status::Optimal | Status::MaxIter) {
        return Err(SosError::NotSolved(res.status));
    }
    let tdiag = res.y[tb].to_dense();
    let t_star = tdiag[(0, 0)] - tdiag[(1, 1)];
    let tol = 1e-7 * (1.0 + pscale);
    if t_star < -tol {
        // Moment functional on kept rows, zero elsewhere, then averaged.
        let mut l = vec![0.0; full.len()];
        for (i, &r) in kept.iter().enumerate() {
            l[r] = res.x[i];
        }
        let l = match enumerate_matrix_group(gens, p.n, ENUMERATION_LIMIT) {
            Some(el) if !gens.is_empty() => {
                let pis = monomial_rep(&el, p.n, 2 * d)?.matrices;
                let lv = DVector::from_vec(l);
                let mut acc = DVector::zeros(full.len());
                for pi in &pis {
                    acc += pi.transpose() * &lv;
                }
                (acc / pis.len() as f64).as_slice().to_vec()
            }
            _ => l,
        };
        let values: HashMap<Vec<u32>, f64> = full.iter().cloned().zip(l).collect();
        let sep = verify_separation(p, d, &values);
        return Err(if sep.verified {
            SosError::Infeasible(Box::new(sep))
        } else {
            SosError::Inconclusive(format!("t* = {t_star:e} but the separating functional did not verify"))
        });
    }
    let z_blocks: Vec<DMatrix<f64>> = res.y[..tb].iter().map(BlockMatrix::to_dense).collect();
    let gram = gs.gram(&z_blocks) + &gs.normalizer * t_star;
    let gram = (&gram + gram.transpose()) * 0.5;
    // Factor inside the commutant: X' = S⁻¹XS⁻ᵀ = B'ᵀB', q = B'Sᵀz.
    let s = &gs.sqrt_normalizer;
    let s_inv = s.clone().try_inverse().unwrap();
    let xp = &s_inv * &gram * s_inv.transpose();
    let fac = star_algebra::psd_decompose(&linalg::to_complex(&xp), &gs.commutant, 1e-6)?;
    let bq = fac.matrix.map(|v| v.re) * s.transpose();
    let cut = 1e-12 * (1.0 + bq.amax());
    let squares: Vec<Polynomial> = (0..nz)
        .filter(|&i| bq.row(i).amax() > cut)
        .map(|i| Polynomial::new(p.n, (0..nz).map(|j| (z[j].clone(), bq[(i, j)]))).unwrap())
        .collect();
    let sum = squares.iter().fold(Polynomial::zero(p.n), |acc, q| acc.add(&q.mul(q)));
    let max_error = full.iter().map(|e| (sum.coefficient(e) - p.coefficient(e)).abs()).fold(0.0, f64::max);
    let rational = rational_certificate(p, z, &gram);
    Ok(SosCertificate {
        t_star,
        squares,
        max_error,
        gram,
        block_sizes: gs.block_sizes.clone(),
        algebra_block_sizes: gs.algebra_block_sizes.clone(),
        group_order: gs.group_order,
        rational,
    })
}

/// Rounds a Gram matrix to dyadic rationals, projects exactly onto the
/// coefficient equations and factors by exact `LDLᵀ`.
pub fn rational_certificate(p: &Polynomial, z: &[Vec<u32>], gram: &DMatrix<f64>) -> Option<RationalCertificate> {
    let nz = z.len();
    let denom = BigRational::from_integer(BigInt::from(1u64 << 20));
    let round = |x: f64| BigRational::from_integer(BigInt::from((x * (1u64 << 20) as f64).round() as i64)) / &denom;
    let mut x: RMat = (0..nz).map(|i| (0..nz).map(|j| round(0.5 * (gram[(i, j)] + gram[(j, i)]))).collect()).collect();
    let add = |a: &[u32], b: &[u32]| -> Vec<u32> { a.iter().zip(b).map(|(i, j)| i + j).collect() };
    // Each entry feeds exactly one coefficient, so the projection is diagonal.
    let mut groups: BTreeMap<Vec<u32>, Vec<(usize, usize)>> = BTreeMap::new();
    for i in 0..nz {
        for j in 0..nz {
            groups.entry(add(&z[i], &z[j])).or_default().push((i, j));
        }
    }
    for e in p.terms.keys() {
        if !groups.contains_key(e) {
            return None;
        }
    }
    for (e, cells) in &groups {
        let target = p.terms.get(e).map(|&c| rational(c)).unwrap_or_else(BigRational::zero);
        let cur: BigRational = cells.iter().map(|&(i, j)| x[i][j].clone()).sum();
        let fix = (target - cur) / BigRational::from_integer(BigInt::from(cells.len()));
        if !fix.is_zero() {
            for &(i, j) in cells {
                x[i][j] += &fix;
            }
        }
    }
    // Exact LDLᵀ.
    let mut weights = Vec::new();
    let mut vectors = Vec::new();
    for k in 0..nz {
        let piv = x[k][k].clone();
        if piv.is_negative() {
            return None;
        }
        if piv.is_zero() {
            if (k..nz).any(|j| !x[k][j].is_zero()) {
                return None;
            }
            continue;
        }
        let l: Vec<BigRational> = (0..nz).map(|j| if j < k { BigRational::zero() } else { &x[k][j] / &piv }).collect();
        for i in k + 1..nz {
            if x[k][i].is_zero() {
                continue;
            }
            for j in k + 1..nz {
                let delta = &x[k][i] * &l[j];
                x[i][j] -= delta;
            }
        }
        for j in k..nz {
            x[k][j] = BigRational::zero();
            x[j][k] = BigRational::zero();
        }
        weights.push(piv);
        vectors.push(l);
    }
    let cert = RationalCertificate { monomials: z.to_vec(), weights, vectors };
    cert.matches(p).then_some(cert)
}
