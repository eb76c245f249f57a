//! Two-phase tableau simplex over `f64` or exact rationals.

use num::{BigInt, BigRational, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::{SolverError, Status};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowKind {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpRow {
    pub coeffs: Vec<(usize, f64)>,
    pub kind: RowKind,
    pub rhs: f64,
}

/// `max` or `min` of `objectiveᵀx` subject to rows and bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub maximize: bool,
    pub rows: Vec<LpRow>,
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
}

impl LpProblem {
    /// All variables nonnegative, no rows.
    pub fn new(objective: Vec<f64>, maximize: bool) -> Self {
        let n = objective.len();
        Self { objective, maximize, rows: Vec::new(), lower: vec![Some(0.0); n], upper: vec![None; n] }
    }

    pub fn n(&self) -> usize {
        self.objective.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, kind: RowKind, rhs: f64) {
        self.rows.push(LpRow { coeffs, kind, rhs });
    }

    pub fn set_free(&mut self, j: usize) {
        self.lower[j] = None;
        self.upper[j] = None;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arithmetic {
    Float,
    Rational,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: Status,
    pub objective: f64,
    pub x: Vec<f64>,
    /// Exact optimum and point when solved in rational arithmetic.
    pub exact_objective: Option<BigRational>,
    pub exact_x: Option<Vec<BigRational>>,
    pub pivots: usize,
}

pub fn solve_lp(p: &LpProblem, arithmetic: Arithmetic) -> Result<LpSolution, SolverError> {
    validate(p)?;
    match arithmetic {
        Arithmetic::Float => {
            let (status, obj, x, pivots) = simplex::<f64>(p)?;
            Ok(LpSolution { status, objective: obj, x, exact_objective: None, exact_x: None, pivots })
        }
        Arithmetic::Rational => {
            let (status, obj, x, pivots) = simplex::<BigRational>(p)?;
            Ok(LpSolution {
                status,
                objective: Field::to_f64(&obj),
                x: x.iter().map(Field::to_f64).collect(),
                exact_objective: Some(obj),
                exact_x: Some(x),
                pivots,
            })
        }
    }
}

fn validate(p: &LpProblem) -> Result<(), SolverError> {
    let n = p.n();
    if p.lower.len() != n || p.upper.len() != n {
        return Err(SolverError::InvalidProblem("bound vectors do not match the variable count".into()));
    }
    let finite = |v: f64| v.is_finite();
    if !p.objective.iter().all(|&v| finite(v)) {
        return Err(SolverError::InvalidProblem("objective is not finite".into()));
    }
    for (k, r) in p.rows.iter().enumerate() {
        if !finite(r.rhs) || r.coeffs.iter().any(|&(j, v)| j >= n || !finite(v)) {
            return Err(SolverError::InvalidProblem(format!("row {k} is malformed")));
        }
    }
    for j in 0..n {
        if let (Some(l), Some(u)) = (p.lower[j], p.upper[j]) {
            if l > u {
                return Err(SolverError::InvalidProblem(format!("variable {j} has lower bound above upper bound")));
            }
        }
    }
    Ok(())
}

trait Field: Clone + std::fmt::Debug {
    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(v: f64) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn is_pos(&self) -> bool;
    fn is_neg(&self) -> bool;
    fn lt(&self, o: &Self) -> bool;
    fn nonzero(&self) -> bool;
    fn to_f64(&self) -> f64;
    fn exact() -> bool;
}

const EPS: f64 = 1e-9;

impl Field for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn is_pos(&self) -> bool {
        *self > EPS
    }
    fn is_neg(&self) -> bool {
        *self < -EPS
    }
    fn lt(&self, o: &Self) -> bool {
        self < o
    }
    fn nonzero(&self) -> bool {
        *self != 0.0
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn exact() -> bool {
        false
    }
}

impl Field for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        num::One::one()
    }
    fn from_f64(v: f64) -> Self {
        BigRational::from_float(v).unwrap_or_else(|| BigRational::from_integer(BigInt::zero()))
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn is_pos(&self) -> bool {
        self.is_positive()
    }
    fn is_neg(&self) -> bool {
        self.is_negative()
    }
    fn lt(&self, o: &Self) -> bool {
        self < o
    }
    fn nonzero(&self) -> bool {
        !self.is_zero()
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn exact() -> bool {
        true
    }
}

/// How each original variable is recovered from standard-form columns.
enum VarMap {
    Shift { col: usize, shift: f64 },
    Mirror { col: usize, shift: f64 },
    Split { pos: usize, neg: usize },
}

struct Tableau<T> {
    /// Rows `0..m` are constraints, row `m` is the objective (reduced costs).
    a: Vec<Vec<T>>,
    basis: Vec<usize>,
    cols: usize,
    pivots: usize,
}

impl<T: Field> Tableau<T> {
    fn rhs(&self, i: usize) -> &T {
        &self.a[i][self.cols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        self.pivots += 1;
        let piv = self.a[r][c].clone();
        let inv = T::one().div(&piv);
        for v in self.a[r].iter_mut() {
            *v = v.mul(&inv);
        }
        let prow = self.a[r].clone();
        for (i, row) in self.a.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c].clone();
            if f.nonzero() {
                for (v, p) in row.iter_mut().zip(prow.iter()) {
                    *v = v.sub(&f.mul(p));
                }
            }
            row[c] = T::zero();
        }
        self.basis[r] = c;
    }

    /// Minimizes the objective row over the columns allowed by `allowed`.
    fn optimize(&mut self, allowed: &dyn Fn(usize) -> bool, limit: usize) -> Result<bool, SolverError> {
        let m = self.basis.len();
        let mut degenerate_run = 0usize;
        for _ in 0..limit {
            let bland = degenerate_run > 50;
            let obj = &self.a[m];
            let mut enter = None;
            let mut best = T::zero();
            for j in 0..self.cols {
                if !allowed(j) || !obj[j].is_neg() {
                    continue;
                }
                if bland {
                    enter = Some(j);
                    break;
                }
                if obj[j].lt(&best) {
                    best = obj[j].clone();
                    enter = Some(j);
                }
            }
            let Some(c) = enter else { return Ok(true) };
            let mut leave: Option<usize> = None;
            let mut ratio = T::zero();
            for i in 0..m {
                if !self.a[i][c].is_pos() {
                    continue;
                }
                let q = self.rhs(i).div(&self.a[i][c]);
                let better = match leave {
                    None => true,
                    Some(l) => {
                        let d = q.sub(&ratio);
                        if d.is_neg() {
                            true
                        } else if d.is_pos() {
                            false
                        } else {
                            self.basis[i] < self.basis[l]
                        }
                    }
                };
                if better {
                    leave = Some(i);
                    ratio = q;
                }
            }
            let Some(r) = leave else { return Ok(false) };
            if ratio.is_pos() {
                degenerate_run = 0;
            } else {
                degenerate_run += 1;
            }
            self.pivot(r, c);
        }
        Err(SolverError::IterationLimit(limit))
    }
}

fn simplex<T: Field>(p: &LpProblem) -> Result<(Status, T, Vec<T>, usize), SolverError> {
    let n = p.n();
    let sign = if p.maximize { -1.0 } else { 1.0 };
    let mut maps = Vec::with_capacity(n);
    let mut ns = 0usize;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        match (p.lower[j], p.upper[j]) {
            (Some(l), u) => {
                maps.push(VarMap::Shift { col: ns, shift: l });
                if let Some(u) = u {
                    bound_rows.push((ns, u - l));
                }
                ns += 1;
            }
            (None, Some(u)) => {
                maps.push(VarMap::Mirror { col: ns, shift: u });
                ns += 1;
            }
            (None, None) => {
                maps.push(VarMap::Split { pos: ns, neg: ns + 1 });
                ns += 2;
            }
        }
    }

    // Rows over structural columns, objective in minimization form.
    let mut rows: Vec<(Vec<T>, RowKind, T)> = Vec::new();
    let expand = |coeffs: &[(usize, f64)], rhs: f64| -> (Vec<T>, T) {
        let mut a = vec![T::zero(); ns];
        let mut b = T::from_f64(rhs);
        for &(j, v) in coeffs {
            let v = T::from_f64(v);
            match maps[j] {
                VarMap::Shift { col, shift } => {
                    a[col] = a[col].add(&v);
                    b = b.sub(&v.mul(&T::from_f64(shift)));
                }
                VarMap::Mirror { col, shift } => {
                    a[col] = a[col].sub(&v);
                    b = b.sub(&v.mul(&T::from_f64(shift)));
                }
                VarMap::Split { pos, neg } => {
                    a[pos] = a[pos].add(&v);
                    a[neg] = a[neg].sub(&v);
                }
            }
        }
        (a, b)
    };
    for r in &p.rows {
        let (a, b) = expand(&r.coeffs, r.rhs);
        rows.push((a, r.kind, b));
    }
    for &(col, ub) in &bound_rows {
        let mut a = vec![T::zero(); ns];
        a[col] = T::one();
        rows.push((a, RowKind::Le, T::from_f64(ub)));
    }
    let obj_coeffs: Vec<(usize, f64)> = p.objective.iter().enumerate().map(|(j, &c)| (j, sign * c)).collect();
    let (cost, neg_const) = expand(&obj_coeffs, 0.0);
    let constant = neg_const.neg();

    for row in rows.iter_mut() {
        if row.2.is_neg() {
            for v in row.0.iter_mut() {
                *v = v.neg();
            }
            row.2 = row.2.neg();
            row.1 = match row.1 {
                RowKind::Le => RowKind::Ge,
                RowKind::Ge => RowKind::Le,
                RowKind::Eq => RowKind::Eq,
            };
        }
    }
    let m = rows.len();
    let nslack = rows.iter().filter(|r| r.1 != RowKind::Eq).count();
    let nart = rows.iter().filter(|r| r.1 != RowKind::Le).count();
    let cols = ns + nslack + nart;
    let art_start = ns + nslack;
    let mut a = vec![vec![T::zero(); cols + 1]; m + 1];
    let mut basis = vec![0usize; m];
    let (mut si, mut ai) = (ns, art_start);
    for (i, (coef, kind, b)) in rows.into_iter().enumerate() {
        a[i][..ns].clone_from_slice(&coef);
        a[i][cols] = b;
        match kind {
            RowKind::Le => {
                a[i][si] = T::one();
                basis[i] = si;
                si += 1;
            }
            RowKind::Ge => {
                a[i][si] = T::one().neg();
                si += 1;
                a[i][ai] = T::one();
                basis[i] = ai;
                ai += 1;
            }
            RowKind::Eq => {
                a[i][ai] = T::one();
                basis[i] = ai;
                ai += 1;
            }
        }
    }
    for i in 0..m {
        if basis[i] >= art_start {
            for j in 0..=cols {
                if j < art_start || j == cols {
                    a[m][j] = a[m][j].sub(&a[i][j]);
                }
            }
        }
    }
    let mut t = Tableau { a, basis, cols, pivots: 0 };
    let limit = 50 * (m + cols) + 1000;
    if nart > 0 {
        t.optimize(&|_| true, limit)?;
        let infeas = t.a[m][cols].neg();
        let scale = 1.0 + p.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
        let bad = if T::exact() { infeas.is_pos() } else { infeas.to_f64() > 1e-7 * scale };
        if bad {
            return Ok((Status::Infeasible, T::zero(), vec![T::zero(); n], t.pivots));
        }
        for i in 0..m {
            if t.basis[i] < art_start {
                continue;
            }
            let mut best: Option<usize> = None;
            for j in 0..art_start {
                let v = &t.a[i][j];
                if v.is_pos() || v.is_neg() {
                    best = Some(j);
                    break;
                }
            }
            if let Some(j) = best {
                t.pivot(i, j);
            }
        }
    }
    let mut obj = vec![T::zero(); cols + 1];
    obj[..ns].clone_from_slice(&cost);
    for i in 0..m {
        let cb = if t.basis[i] < ns { cost[t.basis[i]].clone() } else { T::zero() };
        if cb.nonzero() {
            for j in 0..=cols {
                obj[j] = obj[j].sub(&cb.mul(&t.a[i][j]));
            }
        }
    }
    for &b in &t.basis {
        obj[b] = T::zero();
    }
    t.a[m] = obj;
    let bounded = t.optimize(&|j| j < art_start, limit)?;
    if !bounded {
        return Ok((Status::Unbounded, T::zero(), vec![T::zero(); n], t.pivots));
    }
    let mut col_val = vec![T::zero(); ns];
    for i in 0..m {
        if t.basis[i] < ns {
            col_val[t.basis[i]] = t.a[i][cols].clone();
        }
    }
    let x: Vec<T> = maps
        .iter()
        .map(|mp| match *mp {
            VarMap::Shift { col, shift } => col_val[col].add(&T::from_f64(shift)),
            VarMap::Mirror { col, shift } => T::from_f64(shift).sub(&col_val[col]),
            VarMap::Split { pos, neg } => col_val[pos].sub(&col_val[neg]),
        })
        .collect();
    let z = t.a[m][cols].neg().add(&constant);
    let z = if p.maximize { z.neg() } else { z };
    Ok((Status::Optimal, z, x, t.pivots))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> LpProblem {
        let mut p = LpProblem::new(vec![1.0, 1.0], true);
        p.add_row(vec![(0, 1.0), (1, 2.0)], RowKind::Le, 4.0);
        p.add_row(vec![(0, 3.0), (1, 1.0)], RowKind::Le, 6.0);
        p
    }

    #[test]
    fn vertex_optimum_is_exact() {
        let s = solve_lp(&small(), Arithmetic::Rational).unwrap();
        assert_eq!(s.status, Status::Optimal);
        let r = |a: i64, b: i64| BigRational::new(a.into(), b.into());
        assert_eq!(s.exact_objective.unwrap(), r(14, 5));
        assert_eq!(s.exact_x.unwrap(), vec![r(8, 5), r(6, 5)]);
        let f = solve_lp(&small(), Arithmetic::Float).unwrap();
        assert!((f.objective - 2.8).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut p = LpProblem::new(vec![1.0], true);
        p.add_row(vec![(0, 1.0)], RowKind::Ge, 2.0);
        p.add_row(vec![(0, 1.0)], RowKind::Le, 1.0);
        for a in [Arithmetic::Float, Arithmetic::Rational] {
            assert_eq!(solve_lp(&p, a).unwrap().status, Status::Infeasible);
        }
        let q = LpProblem::new(vec![1.0], true);
        assert_eq!(solve_lp(&q, Arithmetic::Float).unwrap().status, Status::Unbounded);
    }

    #[test]
    fn free_and_bounded_variables() {
        let mut p = LpProblem::new(vec![1.0, 0.0], false);
        p.set_free(0);
        p.upper[1] = Some(3.0);
        p.add_row(vec![(0, 1.0), (1, 1.0)], RowKind::Eq, 1.0);
        let s = solve_lp(&p, Arithmetic::Rational).unwrap();
        assert_eq!(s.x, vec![-2.0, 3.0]);
        let mut q = LpProblem::new(vec![-1.0], true);
        q.lower[0] = Some(-1.0);
        q.upper[0] = Some(2.0);
        assert_eq!(solve_lp(&q, Arithmetic::Float).unwrap().x, vec![-1.0]);
        let mut m = LpProblem::new(vec![1.0], true);
        m.lower[0] = None;
        m.upper[0] = Some(-0.5);
        assert_eq!(solve_lp(&m, Arithmetic::Float).unwrap().objective, -0.5);
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let mut p = LpProblem::new(vec![1.0, 2.0], true);
        p.add_row(vec![(0, 1.0), (1, 1.0)], RowKind::Eq, 1.0);
        p.add_row(vec![(0, 2.0), (1, 2.0)], RowKind::Eq, 2.0);
        let s = solve_lp(&p, Arithmetic::Rational).unwrap();
        assert_eq!(s.objective, 2.0);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's example cycles under the textbook rule without a fallback.
        let mut p = LpProblem::new(vec![0.75, -150.0, 0.02, -6.0], true);
        p.add_row(vec![(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)], RowKind::Le, 0.0);
        p.add_row(vec![(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)], RowKind::Le, 0.0);
        p.add_row(vec![(2, 1.0)], RowKind::Le, 1.0);
        let s = solve_lp(&p, Arithmetic::Rational).unwrap();
        assert!((s.objective - 0.05).abs() < 1e-12, "{}", s.objective);
        assert!((solve_lp(&p, Arithmetic::Float).unwrap().objective - 0.05).abs() < 1e-12);
    }
}
