//! Bounds for spherical codes: normalized Jacobi polynomials, the Delsarte
//! linear program, the one-forbidden-angle bound and the three-point
//! semidefinite program built from the matrices `Y_k` and `S_k`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num::{BigInt, BigRational, One, ToPrimitive, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sdp_model::SdpaBuilder;
use crate::solver::{self, Arithmetic, BlockMatrix, LpProblem, RowKind, SolverError, Status};

#[derive(Debug, Error)]
pub enum SphereError {
    #[error("argument out of range: {0}")]
    Range(String),
    #[error("no negative value among P_0..P_{k_max}(s); minimum {min} gives {value}")]
    NoNegativeValue { k_max: usize, min: f64, value: f64 },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("solver finished with status {0}")]
    NotSolved(Status),
}

/// Jacobi polynomials `P_k^{(α,β)}` normalized by `P_k(1) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobiFamily {
    pub alpha: f64,
    pub beta: f64,
}

impl JacobiFamily {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, SphereError> {
        if !(alpha > -1.0 && beta > -1.0) {
            return Err(SphereError::Range(format!("need α, β > −1, got ({alpha}, {beta})")));
        }
        Ok(Self { alpha, beta })
    }

    /// The family `P_k^n` of the sphere `S^{n−1}`: `α = β = (n−3)/2`.
    pub fn sphere(n: usize) -> Result<Self, SphereError> {
        if n < 2 {
            return Err(SphereError::Range(format!("need n >= 2, got {n}")));
        }
        Self::new((n as f64 - 3.0) / 2.0, (n as f64 - 3.0) / 2.0)
    }

    /// `P_0(t), …, P_kmax(t)` by the three-term recurrence.
    pub fn values(&self, kmax: usize, t: f64) -> Vec<f64> {
        let (a, b) = (self.alpha, self.beta);
        let mut raw = Vec::with_capacity(kmax + 1);
        raw.push(1.0);
        if kmax >= 1 {
            raw.push((a + 1.0) + (a + b + 2.0) * (t - 1.0) / 2.0);
        }
        for k in 1..kmax {
            let kf = k as f64;
            let s = 2.0 * kf + a + b;
            let c1 = 2.0 * (kf + 1.0) * (kf + a + b + 1.0) * s;
            let c2 = (s + 1.0) * ((s + 2.0) * s * t + a * a - b * b);
            let c3 = 2.0 * (kf + a) * (kf + b) * (s + 2.0);
            raw.push((c2 * raw[k] - c3 * raw[k - 1]) / c1);
        }
        let mut norm = 1.0;
        for (k, v) in raw.iter_mut().enumerate() {
            if k > 0 {
                norm *= (a + k as f64) / k as f64;
            }
            *v /= norm;
        }
        raw
    }

    pub fn value(&self, k: usize, t: f64) -> f64 {
        self.values(k, t)[k]
    }
}

/// `P_k^{(α,β)}(t)`, normalized to `P_k(1) = 1`.
pub fn jacobi(k: usize, t: f64, alpha: f64, beta: f64) -> Result<f64, SphereError> {
    Ok(JacobiFamily::new(alpha, beta)?.value(k, t))
}

/// Exact monomial coefficients (constant term first) of the normalized
/// `P_k^{(α,β)}` for rational parameters.
pub fn jacobi_coefficients(k: usize, alpha: &BigRational, beta: &BigRational) -> Vec<BigRational> {
    let one = BigRational::one();
    let two = BigRational::from_integer(2.into());
    let (a, b) = (alpha.clone(), beta.clone());
    let mut polys: Vec<Vec<BigRational>> = vec![vec![one.clone()]];
    if k >= 1 {
        // (α+1) + (α+β+2)(t−1)/2
        let slope = (&a + &b + &two) / &two;
        polys.push(vec![&a + &one - &slope, slope]);
    }
    for j in 1..k {
        let kf = BigRational::from_integer(BigInt::from(j));
        let s = &kf * &two + &a + &b;
        let c1 = &two * (&kf + &one) * (&kf + &a + &b + &one) * &s;
        let lin = (&s + &one) * (&s + &two) * &s;
        let cst = (&s + &one) * (&a * &a - &b * &b);
        let c3 = &two * (&kf + &a) * (&kf + &b) * (&s + &two);
        let mut next = vec![BigRational::zero(); j + 2];
        for (d, c) in polys[j].iter().enumerate() {
            next[d + 1] += &lin * c;
            next[d] += &cst * c;
        }
        for (d, c) in polys[j - 1].iter().enumerate() {
            next[d] -= &c3 * c;
        }
        for c in next.iter_mut() {
            *c /= &c1;
        }
        polys.push(next);
    }
    let p = polys.swap_remove(k);
    let at_one: BigRational = p.iter().sum();
    p.into_iter().map(|c| c / &at_one).collect()
}

/// `h_k^n = C(n+k−1, k) − C(n+k−3, k−2)`, the dimension of the degree-`k`
/// harmonic polynomials in `n` variables.
pub fn harmonic_dimension(n: usize, k: usize) -> u64 {
    let binom = |a: usize, b: usize| -> u64 {
        let mut r = 1u64;
        for i in 0..b {
            r = r * (a - i) as u64 / (i + 1) as u64;
        }
        r
    };
    let first = binom(n + k - 1, k);
    if k >= 2 {
        first - binom(n + k - 3, k - 2)
    } else {
        first
    }
}

/// Chebyshev points of the first kind mapped to `[lo, hi]`, increasing.
pub fn chebyshev_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let mut g: Vec<f64> = (0..count)
        .map(|i| {
            let x = -((2 * i + 1) as f64 * PI / (2 * count) as f64).cos();
            lo + (hi - lo) * (x + 1.0) / 2.0
        })
        .collect();
    g.sort_by(|a, b| a.total_cmp(b));
    g
}

/// Chebyshev–Lobatto points on `[lo, hi]`, endpoints included.
pub fn lobatto_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count)
        .map(|i| {
            let x = -((i as f64) * PI / (count - 1) as f64).cos();
            lo + (hi - lo) * (x + 1.0) / 2.0
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Certify {
    Grid,
    Sos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereLpBound {
    pub bound: f64,
    /// `f_1..f_d`.
    pub f: Vec<f64>,
    pub certified: bool,
    /// Largest value of `1 + Σ f_k P_k` found on `[−1, s]` by the audit.
    pub audit_max: f64,
    pub note: Option<String>,
}

fn lp_polynomial(fam: &JacobiFamily, f: &[f64], t: f64) -> f64 {
    let p = fam.values(f.len(), t);
    1.0 + f.iter().enumerate().map(|(k, fk)| fk * p[k + 1]).sum::<f64>()
}

/// `inf 1 + Σ_{k=1}^d f_k` over `f ≥ 0` with `1 + Σ f_k P_k^n(t) ≤ 0` on
/// `[−1, cos θ_min]`.
pub fn delsarte_lp_sphere(n: usize, theta_min: f64, d: usize, certify: Certify) -> Result<SphereLpBound, SphereError> {
    delsarte_lp_sphere_with(n, theta_min, d, certify, 2000)
}

pub fn delsarte_lp_sphere_with(n: usize, theta_min: f64, d: usize, certify: Certify, grid: usize) -> Result<SphereLpBound, SphereError> {
    if !(theta_min > 0.0 && theta_min < PI) || d == 0 {
        return Err(SphereError::Range(format!("need 0 < θ < π and d >= 1, got θ={theta_min}, d={d}")));
    }
    let fam = JacobiFamily::sphere(n)?;
    let s = theta_min.cos();
    let solved = match certify {
        Certify::Grid => lp_on_grid(&fam, s, d, grid)?,
        Certify::Sos => lp_lukacs(&fam, s, d)?,
    };
    let Some((mut f, certified_identity)) = solved else {
        return Ok(SphereLpBound {
            bound: f64::INFINITY,
            f: vec![0.0; d],
            certified: false,
            audit_max: f64::INFINITY,
            note: Some(format!("no admissible polynomial of degree {d}; raise d")),
        });
    };
    let fine = chebyshev_grid(-1.0, s, 10 * grid.max(200));
    let audit_max = fine.par_iter().map(|&t| lp_polynomial(&fam, &f, t)).reduce(|| f64::NEG_INFINITY, f64::max);
    let audit_max = audit_max.max(lp_polynomial(&fam, &f, -1.0)).max(lp_polynomial(&fam, &f, s));
    let mut certified = audit_max <= 1e-9;
    if let Some(eps) = certified_identity {
        // Scaling f by 1+δ turns p ≤ ε into p ≤ 0.
        if eps > 0.0 && eps < 1.0 {
            let delta = eps / (1.0 - eps);
            f.iter_mut().for_each(|v| *v *= 1.0 + delta);
        }
        certified = eps < 1.0;
    }
    Ok(SphereLpBound { bound: 1.0 + f.iter().sum::<f64>(), f, certified, audit_max, note: None })
}

fn lp_on_grid(fam: &JacobiFamily, s: f64, d: usize, grid: usize) -> Result<Option<(Vec<f64>, Option<f64>)>, SphereError> {
    let mut lp = LpProblem::new(vec![1.0; d], false);
    let mut pts = chebyshev_grid(-1.0, s, grid);
    pts.push(-1.0);
    pts.push(s);
    for &t in &pts {
        let p = fam.values(d, t);
        lp.add_row((1..=d).map(|k| (k - 1, p[k])).collect(), RowKind::Le, -1.0);
    }
    let sol = solver::solve_lp(&lp, Arithmetic::Float)?;
    match sol.status {
        Status::Optimal => Ok(Some((sol.x, None))),
        Status::Infeasible => Ok(None),
        other => Err(SphereError::NotSolved(other)),
    }
}

/// Lukács: `g ≥ 0` on `[a, b]` with `deg g = 2m` iff `g = σ₀ + (t−a)(b−t)σ₁`,
/// with `deg g = 2m+1` iff `g = (t−a)σ₀ + (b−t)σ₁`, `σ_i` sums of squares.
/// Returns `f` and a bound `ε` with `1 + Σ f_k P_k ≤ ε` on `[−1, s]`.
fn lp_lukacs(fam: &JacobiFamily, s: f64, d: usize) -> Result<Option<(Vec<f64>, Option<f64>)>, SphereError> {
    let (lo, hi) = (-1.0, s);
    let (w0, w1, deg0, deg1): (Box<dyn Fn(f64) -> f64>, Box<dyn Fn(f64) -> f64>, usize, usize) = if d % 2 == 0 {
        (Box::new(|_| 1.0), Box::new(move |t| (t - lo) * (hi - t)), d / 2, (d / 2).saturating_sub(1))
    } else {
        (Box::new(move |t| t - lo), Box::new(move |t| hi - t), d / 2, d / 2)
    };
    let has_sigma1 = d >= 2;
    // Chebyshev polynomials of the interval as Gram bases.
    let basis = |t: f64, deg: usize| -> Vec<f64> {
        let x = (2.0 * t - lo - hi) / (hi - lo);
        let mut b = vec![1.0, x];
        for j in 2..=deg {
            b.push(2.0 * x * b[j - 1] - b[j - 2]);
        }
        b.truncate(deg + 1);
        b
    };
    let nodes = chebyshev_grid(lo, hi, d + 1);
    let (n0, n1) = (deg0 + 1, deg1 + 1);
    let mut blocks = vec![n0 as i64];
    if has_sigma1 {
        blocks.push(n1 as i64);
    }
    blocks.push(-(d as i64));
    let fblock = blocks.len() - 1;
    let mut b = SdpaBuilder::new(blocks, vec![-1.0; nodes.len()]);
    for k in 0..d {
        b.add(0, fblock, k, k, -1.0);
    }
    for (l, &t) in nodes.iter().enumerate() {
        let p = fam.values(d, t);
        for k in 0..d {
            b.add(l + 1, fblock, k, k, p[k + 1]);
        }
        let v0 = basis(t, deg0);
        for i in 0..n0 {
            for j in i..n0 {
                b.add(l + 1, 0, i, j, w0(t) * v0[i] * v0[j]);
            }
        }
        if has_sigma1 {
            let v1 = basis(t, deg1);
            for i in 0..n1 {
                for j in i..n1 {
                    b.add(l + 1, 1, i, j, w1(t) * v1[i] * v1[j]);
                }
            }
        }
    }
    let res = solver::solve_sdp(&b.build(), 1e-9, 200)?;
    match res.status {
        Status::Optimal => {}
        Status::Unbounded | Status::Infeasible => return Ok(None),
        other => return Err(SphereError::NotSolved(other)),
    }
    // Certificate cleanup: nonnegative f, psd Gram matrices.
    let psd = |m: &BlockMatrix| {
        let e = m.to_dense().symmetric_eigen();
        let vals = e.eigenvalues.map(|v| v.max(0.0));
        &e.eigenvectors * DMatrix::from_diagonal(&vals) * e.eigenvectors.transpose()
    };
    let q0 = psd(&res.y[0]);
    let q1 = if has_sigma1 { Some(psd(&res.y[1])) } else { None };
    let f: Vec<f64> = match &res.y[fblock] {
        BlockMatrix::Diagonal(v) => v.iter().map(|x| x.max(0.0)).collect(),
        BlockMatrix::Dense(m) => (0..d).map(|k| m[(k, k)].max(0.0)).collect(),
    };
    // Residual r = −(1 + Σ f P) − w₀σ₀ − w₁σ₁ at the nodes; p ≤ −r on the interval.
    let mut worst = 0.0f64;
    for &t in &nodes {
        let v0 = DVector::from_vec(basis(t, deg0));
        let mut sig = w0(t) * (v0.transpose() * &q0 * &v0)[(0, 0)];
        if let Some(q1) = &q1 {
            let v1 = DVector::from_vec(basis(t, deg1));
            sig += w1(t) * (v1.transpose() * q1 * &v1)[(0, 0)];
        }
        let r = -lp_polynomial(fam, &f, t) - sig;
        worst = worst.max(r.abs());
    }
    // Lebesgue constant of d+1 Chebyshev nodes.
    let lebesgue = 1.0 + 2.0 / PI * ((d + 1) as f64).ln();
    Ok(Some((f, Some(lebesgue * worst))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvoidAngle {
    /// `m(s) = min_k P_k^n(s)`.
    pub min: f64,
    pub argmin: usize,
    pub value: f64,
    /// `|P_k(s)| < |m(s)|` held for the last 50 degrees searched.
    pub tail_ok: bool,
}

/// `m(s)/(m(s)−1)` with `m(s)` the minimum of `P_k^n(cos θ)` over
/// `0 ≤ k ≤ k_search`.
pub fn theta2_avoid_angle(n: usize, theta: f64, k_search: usize) -> Result<AvoidAngle, SphereError> {
    if !(theta > 0.0 && theta <= PI) {
        return Err(SphereError::Range(format!("need 0 < θ <= π, got {theta}")));
    }
    let fam = JacobiFamily::sphere(n)?;
    let s = if theta == PI { -1.0 } else { theta.cos() };
    let vals = fam.values(k_search, s);
    let (argmin, min) = vals.iter().copied().enumerate().fold((0, f64::INFINITY), |acc, (k, v)| if v < acc.1 { (k, v) } else { acc });
    let value = min / (min - 1.0);
    if min >= 0.0 {
        return Err(SphereError::NoNegativeValue { k_max: k_search, min, value });
    }
    let tail_start = k_search.saturating_sub(49);
    let tail_ok = vals[tail_start..].iter().enumerate().all(|(i, v)| tail_start + i == argmin || v.abs() < min.abs());
    Ok(AvoidAngle { min, argmin, value, tail_ok })
}

/// `Q_k^{n−1}(u, v, t)` in polynomial form: with `P_k^{n−1}(w) = Σ_j a_j w^j`
/// (only `j ≡ k mod 2`), `Q_k = Σ_j a_j (t−uv)^j ((1−u²)(1−v²))^{(k−j)/2}`.
#[derive(Debug, Clone)]
pub struct YkEvaluator {
    pub n: usize,
    pub d: usize,
    /// Monomial coefficients of `P_k^{n−1}` for `k = 0..=d`.
    coeffs: Vec<Vec<f64>>,
}

impl YkEvaluator {
    pub fn new(n: usize, d: usize) -> Result<Self, SphereError> {
        if n < 3 {
            return Err(SphereError::Range(format!("need n >= 3, got {n}")));
        }
        let a = BigRational::new(BigInt::from(n as i64 - 4), BigInt::from(2));
        let coeffs = (0..=d).map(|k| jacobi_coefficients(k, &a, &a).iter().map(|c| c.to_f64().unwrap()).collect()).collect();
        Ok(Self { n, d, coeffs })
    }

    pub fn q(&self, k: usize, u: f64, v: f64, t: f64) -> f64 {
        let w = t - u * v;
        let r = (1.0 - u * u) * (1.0 - v * v);
        let a = &self.coeffs[k];
        let mut sum = 0.0;
        let mut j = k;
        let mut rp = 1.0;
        loop {
            sum += a[j] * w.powi(j as i32) * rp;
            if j < 2 {
                break;
            }
            j -= 2;
            rp *= r;
        }
        sum
    }

    /// `Y_k(u, v, t)`, of size `d−k+1`.
    pub fn yk(&self, k: usize, u: f64, v: f64, t: f64) -> DMatrix<f64> {
        let q = self.q(k, u, v, t);
        let size = self.d - k + 1;
        DMatrix::from_fn(size, size, |i, j| u.powi(i as i32) * v.powi(j as i32) * q)
    }

    /// `S_k(u, v, t)`: the average of `Y_k` over the six orderings of the
    /// arguments.
    pub fn sk(&self, k: usize, u: f64, v: f64, t: f64) -> DMatrix<f64> {
        let perms = [(u, v, t), (v, u, t), (u, t, v), (t, u, v), (v, t, u), (t, v, u)];
        let size = self.d - k + 1;
        let mut acc = DMatrix::zeros(size, size);
        for (a, b, c) in perms {
            acc += self.yk(k, a, b, c);
        }
        acc / 6.0
    }
}

pub fn yk_eval(n: usize, d: usize, k: usize, u: f64, v: f64, t: f64) -> Result<DMatrix<f64>, SphereError> {
    if k > d {
        return Err(SphereError::Range(format!("need k <= d, got k={k}, d={d}")));
    }
    Ok(YkEvaluator::new(n, d)?.yk(k, u, v, t))
}

pub fn sk_symmetrize(n: usize, d: usize, k: usize, u: f64, v: f64, t: f64) -> Result<DMatrix<f64>, SphereError> {
    if k > d {
        return Err(SphereError::Range(format!("need k <= d, got k={k}, d={d}")));
    }
    Ok(YkEvaluator::new(n, d)?.sk(k, u, v, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreePointOptions {
    /// Grid points per axis on the box `[−1, s]³`.
    pub box_grid: usize,
    /// Grid points on the segment `[−1, s]`.
    pub segment_grid: usize,
    /// Keep only box points `(u, v, t)` that are inner products of three unit vectors.
    pub elliptope: bool,
    /// Audit grid refinement factor.
    pub audit_factor: usize,
    /// Audit tolerance on the constraint values.
    pub audit_tol: f64,
}

impl Default for ThreePointOptions {
    fn default() -> Self {
        Self { box_grid: 60, segment_grid: 400, elliptope: false, audit_factor: 4, audit_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThreePointBound {
    pub bound: f64,
    /// `F_0..F_d`.
    pub f: Vec<DMatrix<f64>>,
    /// Always set: constraints hold on grids only.
    pub grid_relaxed: bool,
    pub audit_passed: bool,
    /// Largest violation on the refined grids, rows scaled to unit max
    /// coefficient: box rows (`≤ 0`) and segment rows (`≤ −1/3`).
    pub audit_box: f64,
    pub audit_segment: f64,
    /// Margin by which the scaled grid rows were tightened.
    pub margin: f64,
    pub rounds: usize,
    pub active_rows: usize,
}

/// Coefficient vectors `⟨E, S_k(u, v, t)⟩` over the packed entries of
/// `F_0..F_d` (upper triangles, off-diagonal counted twice). The packed
/// variables live in the Chebyshev basis `T_i(u)` rather than `u^i`: the
/// congruence `F = Tᵀ F' T` keeps `F ⪰ 0` and `⟨F_0, J⟩` (`T_i(1) = 1`) and
/// conditions the program far better.
struct Packing {
    offsets: Vec<usize>,
    sizes: Vec<usize>,
    total: usize,
    /// Row `i` holds the monomial coefficients of `T_i`.
    cheb: Vec<DMatrix<f64>>,
}

fn chebyshev_matrix(size: usize) -> DMatrix<f64> {
    let mut t = DMatrix::zeros(size, size);
    t[(0, 0)] = 1.0;
    if size > 1 {
        t[(1, 1)] = 1.0;
    }
    for i in 2..size {
        for j in 0..size {
            let up = if j > 0 { 2.0 * t[(i - 1, j - 1)] } else { 0.0 };
            t[(i, j)] = up - t[(i - 2, j)];
        }
    }
    t
}

impl Packing {
    fn new(d: usize) -> Self {
        let sizes: Vec<usize> = (0..=d).map(|k| d - k + 1).collect();
        let mut offsets = Vec::new();
        let mut total = 0;
        for &s in &sizes {
            offsets.push(total);
            total += s * (s + 1) / 2;
        }
        let cheb = sizes.iter().map(|&s| chebyshev_matrix(s)).collect();
        Self { offsets, sizes, total, cheb }
    }

    fn row(&self, ev: &YkEvaluator, u: f64, v: f64, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.total];
        for (k, &size) in self.sizes.iter().enumerate() {
            let s = &self.cheb[k] * ev.sk(k, u, v, t) * self.cheb[k].transpose();
            let mut idx = self.offsets[k];
            for i in 0..size {
                for j in i..size {
                    out[idx] = if i == j { s[(i, i)] } else { 2.0 * s[(i, j)] };
                    idx += 1;
                }
            }
        }
        out
    }

    fn unpack(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        self.sizes
            .iter()
            .enumerate()
            .map(|(k, &size)| {
                let mut m = DMatrix::zeros(size, size);
                let mut idx = self.offsets[k];
                for i in 0..size {
                    for j in i..size {
                        m[(i, j)] = x[idx];
                        m[(j, i)] = x[idx];
                        idx += 1;
                    }
                }
                self.cheb[k].transpose() * m * &self.cheb[k]
            })
            .collect()
    }
}

fn box_points(grid: &[f64], elliptope: bool) -> Vec<(f64, f64, f64)> {
    let mut pts = Vec::new();
    for (a, &u) in grid.iter().enumerate() {
        for (b, &v) in grid.iter().enumerate().skip(a) {
            for &t in &grid[b..] {
                if !elliptope || 1.0 + 2.0 * u * v * t - u * u - v * v - t * t >= -1e-12 {
                    pts.push((u, v, t));
                }
            }
        }
    }
    pts
}

/// `inf 1 + ⟨F_0, J⟩` over `F_k ⪰ 0` with `Σ ⟨F_k, S_k(u,u,1)⟩ ≤ −1/3` for
/// `u ∈ [−1, s]` and `Σ ⟨F_k, S_k(u,v,t)⟩ ≤ 0` on `[−1, s]³`, both imposed
/// on grids. The box constraints enter by cutting planes: rows are added at
/// the most violated grid points until none is violated.
pub fn three_point_sdp(n: usize, theta_min: f64, d: usize, opts: &ThreePointOptions) -> Result<ThreePointBound, SphereError> {
    if !(theta_min > 0.0 && theta_min < PI) {
        return Err(SphereError::Range(format!("need 0 < θ < π, got {theta_min}")));
    }
    let s = theta_min.cos();
    let ev = YkEvaluator::new(n, d)?;
    let pack = Packing::new(d);
    let seg: Vec<f64> = lobatto_grid(-1.0, s, opts.segment_grid);
    let seg_rows: Vec<Vec<f64>> = seg.par_iter().map(|&u| pack.row(&ev, u, u, 1.0)).collect();
    let grid = lobatto_grid(-1.0, s, opts.box_grid);
    let pts = box_points(&grid, opts.elliptope);
    let rows_all: Vec<Vec<f64>> = pts.par_iter().map(|&(u, v, t)| pack.row(&ev, u, v, t)).collect();
    let norm = |r: &[f64]| r.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let seg_rows: Vec<(Vec<f64>, f64)> = seg_rows.into_iter().map(|r| (r.iter().map(|v| v / norm(&r)).collect(), 1.0 / (3.0 * norm(&r)))).collect();
    let rows_all: Vec<Vec<f64>> = rows_all.into_iter().map(|r| r.iter().map(|v| v / norm(&r)).collect()).collect();
    // Start from a coarse sub-grid.
    let step = (opts.box_grid / 8).max(1);
    let coarse: Vec<f64> = grid.iter().enumerate().filter(|(k, _)| k % step == 0 || *k + 1 == grid.len()).map(|(_, &g)| g).collect();
    let on = |x: f64| coarse.contains(&x);
    let mut active: Vec<usize> = (0..pts.len()).filter(|&i| on(pts[i].0) && on(pts[i].1) && on(pts[i].2)).collect();
    let mut in_active = vec![false; pts.len()];
    for &i in &active {
        in_active[i] = true;
    }
    let fine = lobatto_grid(-1.0, s, opts.box_grid * opts.audit_factor);
    let fine_pts = box_points(&fine, opts.elliptope);
    let fine_seg = lobatto_grid(-1.0, s, opts.segment_grid * opts.audit_factor);
    // Scaled values: box rows must be ≤ 0, segment rows ≤ −1/3.
    let audit = |x: &[f64]| {
        let bx = fine_pts
            .par_iter()
            .map(|&(u, v, t)| {
                let r = pack.row(&ev, u, v, t);
                dot(&r, x) / norm(&r)
            })
            .reduce(|| f64::NEG_INFINITY, f64::max);
        let sg = fine_seg
            .par_iter()
            .map(|&u| {
                let r = pack.row(&ev, u, u, 1.0);
                (dot(&r, x) + 1.0 / 3.0) / norm(&r)
            })
            .reduce(|| f64::NEG_INFINITY, f64::max);
        (bx.max(0.0), sg.max(0.0))
    };
    // Cutting planes on the grid, then a safety margin raised until the
    // refined grid passes.
    let mut rounds = 0;
    let mut margin = 0.0;
    let mut passes = 0;
    let (x, audit_box, audit_segment) = loop {
        passes += 1;
        let x = loop {
            rounds += 1;
            let x = solve_three_point(&pack, &seg_rows, &rows_all, &active, margin)?;
            let mut viol: Vec<(usize, f64)> = rows_all
                .par_iter()
                .enumerate()
                .filter(|(i, _)| !in_active[*i])
                .map(|(i, r)| (i, dot(r, &x)))
                .filter(|(_, v)| *v > -margin + 1e-10)
                .collect();
            if viol.is_empty() || rounds > 60 {
                break x;
            }
            viol.sort_by(|a, b| b.1.total_cmp(&a.1));
            for &(i, _) in viol.iter().take(400) {
                in_active[i] = true;
                active.push(i);
            }
        };
        let (bx, sg) = audit(&x);
        if (bx <= opts.audit_tol && sg <= opts.audit_tol) || passes >= 6 {
            break (x, bx, sg);
        }
        margin += 1.5 * bx.max(sg);
    };
    let f = pack.unpack(&x);
    let bound = 1.0 + f[0].sum();
    let audit_passed = audit_box <= opts.audit_tol && audit_segment <= opts.audit_tol;
    Ok(ThreePointBound { bound, f, grid_relaxed: true, audit_passed, audit_box, audit_segment, margin, rounds, active_rows: active.len() })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The program on the segment rows and the given box rows, in the LMI form
/// with the packed entries of `F_k` as variables.
fn solve_three_point(pack: &Packing, seg_rows: &[(Vec<f64>, f64)], box_rows: &[Vec<f64>], active: &[usize], margin: f64) -> Result<Vec<f64>, SphereError> {
    let m = pack.total;
    let mut c = vec![0.0; m];
    // ⟨F_0, J⟩ counts off-diagonal entries twice.
    let s0 = pack.sizes[0];
    let mut idx = 0;
    for i in 0..s0 {
        for j in i..s0 {
            c[idx] = if i == j { 1.0 } else { 2.0 };
            idx += 1;
        }
    }
    let nlp = seg_rows.len() + active.len();
    let mut blocks: Vec<i64> = pack.sizes.iter().map(|&s| s as i64).collect();
    blocks.push(-(nlp as i64));
    let lp = pack.sizes.len();
    let mut b = SdpaBuilder::new(blocks, c);
    for (k, &size) in pack.sizes.iter().enumerate() {
        let mut idx = pack.offsets[k];
        for i in 0..size {
            for j in i..size {
                b.add(idx + 1, k, i, j, 1.0);
                idx += 1;
            }
        }
    }
    // Row r·x ≤ −h − margin becomes −r·x − (h + margin) ≥ 0.
    let rows = seg_rows.iter().map(|(r, h)| (r, *h)).chain(active.iter().map(|&a| (&box_rows[a], 0.0)));
    for (l, (r, h)) in rows.enumerate() {
        for (i, &v) in r.iter().enumerate() {
            if v != 0.0 {
                b.add(i + 1, lp, l, l, -v);
            }
        }
        b.add(0, lp, l, l, h + margin);
    }
    // Any primal feasible point is a valid certificate, so a stalled run
    // still yields a bound when its slack is consistent.
    let res = match solver::solve_sdp(&b.build(), 1e-8, 200) {
        Ok(r) => r,
        Err(SolverError::NoInterior { last, .. }) if last.slack_residual < 1e-8 && last.relative_gap < 1e-2 => *last,
        Err(e) => return Err(e.into()),
    };
    match res.status {
        Status::Optimal => Ok(res.x),
        Status::MaxIter if res.slack_residual < 1e-8 && res.relative_gap < 1e-2 => Ok(res.x),
        other => Err(SphereError::NotSolved(other)),
    }
}

/// Smallest angle (radians) between distinct vectors of a code, after
/// normalizing.
pub fn min_angle(code: &[Vec<f64>]) -> f64 {
    let unit: Vec<DVector<f64>> = code.iter().map(|v| DVector::from_column_slice(v).normalize()).collect();
    let mut best = PI;
    for i in 0..unit.len() {
        for j in i + 1..unit.len() {
            best = best.min(unit[i].dot(&unit[j]).clamp(-1.0, 1.0).acos());
        }
    }
    best
}

/// A random orthogonal image of a code (QR of a Gaussian matrix).
pub fn random_rotation<R: Rng>(code: &[Vec<f64>], rng: &mut R) -> Vec<Vec<f64>> {
    let n = code.first().map_or(0, |v| v.len());
    let g = DMatrix::from_fn(n, n, |_, _| {
        let (a, b): (f64, f64) = (rng.gen::<f64>().max(1e-300), rng.gen());
        (-2.0 * a.ln()).sqrt() * (2.0 * PI * b).cos()
    });
    let q = g.qr().q();
    code.iter().map(|v| (&q * DVector::from_column_slice(v)).as_slice().to_vec()).collect()
}

/// The 12 vertices of the icosahedron.
pub fn icosahedron() -> Vec<Vec<f64>> {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut out = Vec::new();
    for a in [-1.0, 1.0] {
        for b in [-phi, phi] {
            out.push(vec![0.0, a, b]);
            out.push(vec![a, b, 0.0]);
            out.push(vec![b, 0.0, a]);
        }
    }
    out
}

/// `n + 1` vertices of a regular simplex in `R^n`.
pub fn simplex(n: usize) -> Vec<Vec<f64>> {
    // Centred standard basis of R^{n+1}, expressed in an orthonormal basis of the hyperplane.
    let m = n + 1;
    let pts: Vec<DVector<f64>> = (0..m).map(|i| DVector::from_fn(m, |j, _| if i == j { 1.0 } else { 0.0 } - 1.0 / m as f64)).collect();
    let mat = DMatrix::from_columns(&pts);
    let svd = mat.clone().svd(true, false);
    let u = svd.u.unwrap();
    let basis = u.columns(0, n).into_owned();
    pts.iter().map(|p| (basis.transpose() * p).as_slice().to_vec()).collect()
}

/// `±e_i`, the `2n` vertices of the cross-polytope.
pub fn cross_polytope(n: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..n {
        for sgn in [1.0, -1.0] {
            let mut v = vec![0.0; n];
            v[i] = sgn;
            out.push(v);
        }
    }
    out
}

/// The 240 roots of `E_8`.
pub fn e8_roots() -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..8 {
        for j in i + 1..8 {
            for (a, b) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut v = vec![0.0; 8];
                v[i] = a;
                v[j] = b;
                out.push(v);
            }
        }
    }
    for mask in 0u32..256 {
        if mask.count_ones() % 2 == 0 {
            out.push((0..8).map(|k| if mask >> k & 1 == 1 { -0.5 } else { 0.5 }).collect());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn jacobi_basic_values() {
        let leg = JacobiFamily::sphere(3).unwrap();
        assert_eq!(leg.value(0, 0.3), 1.0);
        assert!((leg.value(2, 0.0) + 0.5).abs() < 1e-15);
        for n in [3, 4, 8, 24] {
            let fam = JacobiFamily::sphere(n).unwrap();
            let at_one = fam.values(50, 1.0);
            let at_minus = fam.values(50, -1.0);
            for k in 0..=50 {
                assert!((at_one[k] - 1.0).abs() < 1e-12, "n={n} k={k}");
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                assert!((at_minus[k] - sign).abs() < 1e-12);
            }
        }
        assert!(JacobiFamily::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn exact_coefficients() {
        let zero = q(0, 1);
        // Legendre: P_2 = (3t² − 1)/2, P_3 = (5t³ − 3t)/2.
        assert_eq!(jacobi_coefficients(2, &zero, &zero), vec![q(-1, 2), q(0, 1), q(3, 2)]);
        assert_eq!(jacobi_coefficients(3, &zero, &zero), vec![q(0, 1), q(-3, 2), q(0, 1), q(5, 2)]);
        // Chebyshev (α = β = −1/2): T_4 = 8t⁴ − 8t² + 1.
        let h = q(-1, 2);
        assert_eq!(jacobi_coefficients(4, &h, &h), vec![q(1, 1), q(0, 1), q(-8, 1), q(0, 1), q(8, 1)]);
        // α = β = 1/2 is U_k/(k+1): U_2 = 4t² − 1.
        let h = q(1, 2);
        assert_eq!(jacobi_coefficients(2, &h, &h), vec![q(-1, 3), q(0, 1), q(4, 3)]);
        // α = 1, β = 0: P_1 = (3t − 1)/2 normalized.
        // α = 1, β = 0: P_1 ∝ (3t + 1)/2.
        assert_eq!(jacobi_coefficients(1, &q(1, 1), &q(0, 1)), vec![q(1, 4), q(3, 4)]);
        for n in 2..=10i64 {
            let a = q(n - 3, 2);
            for k in 0..=50 {
                let c = jacobi_coefficients(k, &a, &a);
                assert_eq!(c.iter().sum::<BigRational>(), q(1, 1));
                assert_eq!(c.len(), k + 1);
                assert!(!c[k].is_zero());
            }
        }
    }

    #[test]
    fn recurrence_matches_coefficients() {
        for n in [3usize, 5, 8] {
            let fam = JacobiFamily::sphere(n).unwrap();
            let a = q(n as i64 - 3, 2);
            for k in 0..=12 {
                let c: Vec<f64> = jacobi_coefficients(k, &a, &a).iter().map(|x| x.to_f64().unwrap()).collect();
                for &t in &[-0.9f64, -0.3, 0.0, 0.4, 0.95] {
                    let direct: f64 = c.iter().enumerate().map(|(j, cj)| cj * t.powi(j as i32)).sum();
                    assert!((direct - fam.value(k, t)).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn harmonic_dimensions() {
        for n in 2..10 {
            assert_eq!(harmonic_dimension(n, 0), 1);
            assert_eq!(harmonic_dimension(n, 1), n as u64);
        }
        assert_eq!(harmonic_dimension(3, 2), 5);
        assert_eq!(harmonic_dimension(3, 7), 15);
    }

    #[test]
    fn gegenbauer_kernels_are_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 2..=6 {
            let pts: Vec<DVector<f64>> = (0..40).map(|_| DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5).normalize()).collect();
            let fam = JacobiFamily::sphere(n).unwrap();
            for k in 0..6 {
                let g = DMatrix::from_fn(40, 40, |i, j| fam.value(k, pts[i].dot(&pts[j]).clamp(-1.0, 1.0)));
                assert!(g.symmetric_eigen().eigenvalues.min() > -1e-9, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn avoid_angle_values() {
        let r = theta2_avoid_angle(3, PI, 200).unwrap();
        assert!((r.min + 1.0).abs() < 1e-12 && (r.value - 0.5).abs() < 1e-12);
        let r = theta2_avoid_angle(3, PI / 2.0, 200).unwrap();
        assert_eq!(r.argmin, 2);
        assert!((r.value - 1.0 / 3.0).abs() < 1e-9);
        assert!(r.tail_ok);
        for n in 3..8 {
            for th in [0.3, 1.0, 2.0, 2.9] {
                let r = theta2_avoid_angle(n, th, 200).unwrap();
                assert!(r.value > 0.0 && r.value < 1.0);
            }
        }
    }

    #[test]
    fn yk_identities() {
        let ev = YkEvaluator::new(4, 5).unwrap();
        let (u, v, t) = (0.3, -0.45, 0.2);
        let y0 = ev.yk(0, u, v, t);
        for i in 0..=5 {
            for j in 0..=5 {
                assert!((y0[(i, j)] - u.powi(i as i32) * v.powi(j as i32)).abs() < 1e-14);
            }
        }
        for k in 0..=5 {
            let a = ev.yk(k, u, v, t);
            let b = ev.yk(k, v, u, t);
            assert!((a.transpose() - b).amax() < 1e-14);
            let diag = ev.yk(k, 0.35, 0.35, 1.0);
            for i in 0..=5 - k {
                for j in 0..=5 - k {
                    let want = 0.35f64.powi((i + j) as i32) * (1.0 - 0.35f64 * 0.35).powi(k as i32);
                    assert!((diag[(i, j)] - want).abs() < 1e-13);
                }
            }
        }
        // Realizable points: the polynomial form matches the defining formula.
        let fam = JacobiFamily::sphere(3).unwrap();
        let r = ((1.0 - u * u) * (1.0 - v * v)) as f64;
        for k in 0..=5 {
            let want = r.powf(k as f64 / 2.0) * fam.value(k, (t - u * v) / r.sqrt());
            assert!((ev.q(k, u, v, t) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn sk_at_the_corner() {
        let ev = YkEvaluator::new(3, 6).unwrap();
        assert!((ev.sk(0, 1.0, 1.0, 1.0) - DMatrix::from_element(7, 7, 1.0)).amax() < 1e-14);
        for k in 1..=6 {
            assert!(ev.sk(k, 1.0, 1.0, 1.0).amax() < 1e-14);
        }
        let (u, v, t) = (0.1, -0.7, 0.4);
        for k in 0..=6 {
            let a = ev.sk(k, u, v, t);
            assert!((&a - a.transpose()).amax() < 1e-14);
            for (x, y, z) in [(v, u, t), (u, t, v), (t, v, u)] {
                assert!((ev.sk(k, x, y, z) - &a).amax() < 1e-13);
            }
        }
    }

    #[test]
    fn yk_kernels_are_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 4;
        let ev = YkEvaluator::new(n, 4).unwrap();
        let e = DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let pts: Vec<DVector<f64>> = (0..30).map(|_| DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5).normalize()).collect();
        for k in 0..=4 {
            let size = 5 - k;
            let a = DMatrix::from_fn(size, size, |_, _| rng.gen::<f64>() - 0.5);
            let f = &a * a.transpose();
            let g = DMatrix::from_fn(30, 30, |i, j| {
                let y = ev.yk(k, e.dot(&pts[i]), e.dot(&pts[j]), pts[i].dot(&pts[j]));
                (f.component_mul(&y)).sum()
            });
            let sym = (&g + g.transpose()) * 0.5;
            assert!(sym.clone().symmetric_eigen().eigenvalues.min() > -1e-9 * (1.0 + sym.amax()), "k={k}");
        }
    }

    #[test]
    fn codes_and_validator() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ico = random_rotation(&icosahedron(), &mut rng);
        assert_eq!(ico.len(), 12);
        assert!((min_angle(&ico) - (1.0 / 5f64.sqrt()).acos()).abs() < 1e-9);
        assert!(min_angle(&ico) >= PI / 3.0);
        let e8 = e8_roots();
        assert_eq!(e8.len(), 240);
        assert!((min_angle(&e8) - PI / 3.0).abs() < 1e-9);
        for n in 2..6 {
            let s = simplex(n);
            assert!((min_angle(&s) - (-1.0 / n as f64).acos()).abs() < 1e-9);
            assert!((min_angle(&cross_polytope(n)) - PI / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_lp_small() {
        // Antipodal pair: θ_min close to π leaves only 2 points.
        let r = delsarte_lp_sphere(3, 0.95 * PI, 3, Certify::Sos).unwrap();
        assert!(r.certified);
        assert!(r.bound >= 2.0 - 1e-9 && r.bound < 2.2, "{}", r.bound);
        // Kissing configuration in dimension 3: the LP gives about 13.16.
        let mut last = f64::INFINITY;
        for d in [6, 8, 10] {
            let r = delsarte_lp_sphere(3, PI / 3.0, d, Certify::Sos).unwrap();
            assert!(r.certified);
            assert!(r.bound >= 12.0);
            assert!(r.bound <= last + 1e-6);
            last = r.bound;
        }
        let g = delsarte_lp_sphere_with(3, PI / 3.0, 10, Certify::Grid, 500).unwrap();
        assert!((g.bound - last).abs() < 1e-3, "{} vs {last}", g.bound);
    }

    #[test]
    fn three_point_small() {
        let o = ThreePointOptions { box_grid: 16, segment_grid: 80, ..Default::default() };
        let r = three_point_sdp(3, PI / 3.0, 6, &o).unwrap();
        assert!(r.grid_relaxed && r.audit_passed);
        assert!(r.bound > 12.0 && r.bound < 14.0, "{}", r.bound);
        for f in &r.f {
            assert!(f.clone().symmetric_eigen().eigenvalues.min() > -1e-7);
        }
        // Degree 2 admits no feasible point at 60°.
        assert!(three_point_sdp(3, PI / 3.0, 2, &o).is_err());
    }
}
