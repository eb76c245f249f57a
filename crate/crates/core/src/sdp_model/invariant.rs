//! Programs over the invariant algebra, written in orbit coordinates.
//!
//! An invariant feasible matrix is `X = Σ_r x_r C_r`; the program reads
//! `opt Σ_r c_r x_r` subject to linear rows in `x`, `X ⪰ 0` and optional
//! sign constraints `x_r ≥ 0`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{SdpaProblem, SdpModelError};
use crate::perm_groups::{pair_orbits, GroupAction, PairOrbitStructure};
use crate::solver::RowKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitRow {
    pub coeffs: Vec<f64>,
    pub kind: RowKind,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantSdp {
    pub n: usize,
    pub orbit_sizes: Vec<u64>,
    pub transpose_map: Vec<usize>,
    pub diagonal: Vec<bool>,
    /// `c_r = ⟨C_r, C⟩`.
    pub objective: Vec<f64>,
    pub rows: Vec<OrbitRow>,
    pub nonnegative: Vec<bool>,
    pub maximize: bool,
}

impl InvariantSdp {
    pub fn m(&self) -> usize {
        self.orbit_sizes.len()
    }

    /// Empty program (no rows, free orbits) over an orbit structure.
    pub fn over(orbits: &PairOrbitStructure, maximize: bool) -> Self {
        Self {
            n: orbits.n,
            orbit_sizes: orbits.orbit_sizes.clone(),
            transpose_map: orbits.transpose_map.clone(),
            diagonal: (0..orbits.m).map(|r| orbits.is_diagonal(r)).collect(),
            objective: vec![0.0; orbits.m],
            rows: Vec::new(),
            nonnegative: vec![false; orbits.m],
            maximize,
        }
    }

    /// Real symmetric matrices force `x_r = x_{rᵀ}`; each class lists its orbits.
    pub fn classes(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for r in 0..self.m() {
            let t = self.transpose_map[r];
            if t == r {
                out.push(vec![r]);
            } else if r < t {
                out.push(vec![r, t]);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), SdpModelError> {
        let m = self.m();
        let bad = |s: String| Err(SdpModelError::Invalid(s));
        if self.transpose_map.len() != m || self.diagonal.len() != m || self.objective.len() != m || self.nonnegative.len() != m {
            return bad("orbit-indexed vectors have inconsistent lengths".into());
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.coeffs.len() != m {
                return bad(format!("row {i} has {} coefficients for {m} orbits", row.coeffs.len()));
            }
        }
        for r in 0..m {
            let t = self.transpose_map[r];
            if t >= m || self.transpose_map[t] != r {
                return bad(format!("transpose map is not an involution at {r}"));
            }
            let sym = |v: &[f64]| (v[r] - v[t]).abs() <= 1e-9 * (1.0 + v[r].abs());
            if !sym(&self.objective) || self.rows.iter().any(|row| !sym(&row.coeffs)) {
                return bad(format!("coordinates of orbit {r} and its transpose {t} differ"));
            }
            if self.nonnegative[r] != self.nonnegative[t] {
                return bad(format!("sign constraints of orbit {r} and its transpose differ"));
            }
        }
        Ok(())
    }

    /// Value of the objective at orbit coordinates `x`.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of the rows and sign constraints at `x`.
    pub fn row_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for row in &self.rows {
            let v: f64 = row.coeffs.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - row.rhs;
            let viol = match row.kind {
                RowKind::Eq => v.abs(),
                RowKind::Le => v.max(0.0),
                RowKind::Ge => (-v).max(0.0),
            };
            worst = worst.max(viol);
        }
        for (r, &nn) in self.nonnegative.iter().enumerate() {
            if nn {
                worst = worst.max(-x[r]);
            }
        }
        worst
    }
}

/// Projects `opt ⟨C, X⟩ s.t. ⟨A_i, X⟩ = b_i, X ⪰ 0` onto the invariant
/// algebra of `action`, after checking the data really is invariant.
pub fn restrict_to_invariant(
    c: &DMatrix<f64>,
    constraints: &[(DMatrix<f64>, f64)],
    action: &GroupAction,
    maximize: bool,
) -> Result<(InvariantSdp, PairOrbitStructure), SdpModelError> {
    let n = action.n;
    let square = |a: &DMatrix<f64>| a.nrows() == n && a.ncols() == n;
    if !square(c) || constraints.iter().any(|(a, _)| !square(a)) {
        return Err(SdpModelError::Invalid(format!("data matrices must be {n}×{n}")));
    }
    let sym_tol = 1e-12 * (1.0 + c.abs().max());
    if (c - c.transpose()).abs().max() > sym_tol || constraints.iter().any(|(a, _)| (a - a.transpose()).abs().max() > 1e-12 * (1.0 + a.abs().max())) {
        return Err(SdpModelError::Invalid("data matrices must be symmetric".into()));
    }
    for (gi, g) in action.generators.iter().enumerate() {
        let permute = |a: &DMatrix<f64>| DMatrix::from_fn(n, n, |i, j| a[(g.apply(i), g.apply(j))]);
        let tol = |a: &DMatrix<f64>| 1e-10 * (1.0 + a.abs().max());
        if (permute(c) - c).abs().max() > tol(c) {
            return Err(SdpModelError::NotInvariant { generator: gi, what: "objective".into() });
        }
        for (i, (a, b)) in constraints.iter().enumerate() {
            let pa = permute(a);
            let found = constraints
                .iter()
                .any(|(a2, b2)| (b - b2).abs() <= 1e-10 * (1.0 + b.abs()) && (&pa - a2).abs().max() <= tol(a));
            if !found {
                return Err(SdpModelError::NotInvariant { generator: gi, what: format!("constraint {}", i + 1) });
            }
        }
    }
    let orbits = pair_orbits(action);
    let mut sdp = InvariantSdp::over(&orbits, maximize);
    sdp.objective = orbit_sums(c, &orbits);
    for (a, b) in constraints {
        let coeffs = orbit_sums(a, &orbits);
        let dup = sdp.rows.iter().any(|r| {
            (r.rhs - b).abs() <= 1e-12 * (1.0 + b.abs()) && r.coeffs.iter().zip(&coeffs).all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + x.abs()))
        });
        if !dup {
            sdp.rows.push(OrbitRow { coeffs, kind: RowKind::Eq, rhs: *b });
        }
    }
    Ok((sdp, orbits))
}

/// `⟨C_r, A⟩` for every orbit.
fn orbit_sums(a: &DMatrix<f64>, orbits: &PairOrbitStructure) -> Vec<f64> {
    let mut out = vec![0.0; orbits.m];
    for i in 0..orbits.n {
        for j in 0..orbits.n {
            out[orbits.id(i, j)] += a[(i, j)];
        }
    }
    out
}

/// Reads a single-block problem `max ⟨F_0, Y⟩ s.t. ⟨F_i, Y⟩ = c_i, Y ⪰ 0`.
pub fn from_sdpa(p: &SdpaProblem, action: &GroupAction) -> Result<(InvariantSdp, PairOrbitStructure), SdpModelError> {
    if p.blocks.len() != 1 || p.blocks[0] <= 0 {
        return Err(SdpModelError::Invalid("expected exactly one dense block".into()));
    }
    let n = p.blocks[0] as usize;
    if n != action.n {
        return Err(SdpModelError::Invalid(format!("block size {n} differs from group degree {}", action.n)));
    }
    let mut mats = vec![DMatrix::<f64>::zeros(n, n); p.m + 1];
    for e in &p.entries {
        mats[e.mat][(e.i, e.j)] += e.value;
        if e.i != e.j {
            mats[e.mat][(e.j, e.i)] += e.value;
        }
    }
    let cons: Vec<(DMatrix<f64>, f64)> = mats[1..].iter().cloned().zip(p.c.iter().cloned()).collect();
    restrict_to_invariant(&mats[0], &cons, action, true)
}

/// The unreduced single-block SDPA form of `restrict_to_invariant` input.
pub fn to_sdpa(c: &DMatrix<f64>, constraints: &[(DMatrix<f64>, f64)]) -> SdpaProblem {
    let n = c.nrows();
    let mut b = super::SdpaBuilder::new(vec![n as i64], constraints.iter().map(|(_, v)| *v).collect());
    for (mat, a) in std::iter::once(c).chain(constraints.iter().map(|(a, _)| a)).enumerate() {
        for i in 0..n {
            for j in i..n {
                b.add(mat, 0, i, j, a[(i, j)]);
            }
        }
    }
    b.build()
}

/// ϑ′ of a graph: `max ⟨J, X⟩ s.t. tr X = 1, X_uv = 0 on edges, X ≥ 0, X ⪰ 0`.
pub fn build_theta_prime(
    n: usize,
    edges: &[(usize, usize)],
    action: Option<&GroupAction>,
) -> Result<(InvariantSdp, PairOrbitStructure), SdpModelError> {
    let trivial = GroupAction::trivial(n);
    let action = action.unwrap_or(&trivial);
    if action.n != n {
        return Err(SdpModelError::Invalid(format!("group degree {} differs from vertex count {n}", action.n)));
    }
    let mut adj = vec![false; n * n];
    for &(u, v) in edges {
        if u >= n || v >= n || u == v {
            return Err(SdpModelError::Invalid(format!("edge ({u}, {v}) is not a simple edge on {n} vertices")));
        }
        adj[u * n + v] = true;
        adj[v * n + u] = true;
    }
    for (gi, g) in action.generators.iter().enumerate() {
        for &(u, v) in edges {
            if !adj[g.apply(u) * n + g.apply(v)] {
                return Err(SdpModelError::ActionNotAutomorphism { generator: gi, edge: (u, v) });
            }
        }
    }
    let orbits = pair_orbits(action);
    let mut sdp = InvariantSdp::over(&orbits, true);
    let mut edge_orbit = vec![false; orbits.m];
    for u in 0..n {
        for v in 0..n {
            if adj[u * n + v] {
                edge_orbit[orbits.id(u, v)] = true;
            }
        }
    }
    sdp.objective = orbits.orbit_sizes.iter().map(|&s| s as f64).collect();
    let trace: Vec<f64> = (0..orbits.m).map(|r| if sdp.diagonal[r] { orbits.orbit_sizes[r] as f64 } else { 0.0 }).collect();
    sdp.rows.push(OrbitRow { coeffs: trace, kind: RowKind::Eq, rhs: 1.0 });
    for r in 0..orbits.m {
        let t = orbits.transpose_map[r];
        if edge_orbit[r] && r <= t {
            let mut coeffs = vec![0.0; orbits.m];
            coeffs[r] = 1.0;
            coeffs[t] = 1.0;
            sdp.rows.push(OrbitRow { coeffs, kind: RowKind::Eq, rhs: 0.0 });
        }
    }
    sdp.nonnegative = vec![true; orbits.m];
    Ok((sdp, orbits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perm_groups::{symmetric_group, Permutation};

    #[test]
    fn all_ones_objective_under_s3() {
        let j = DMatrix::from_element(3, 3, 1.0);
        let i = DMatrix::identity(3, 3);
        let (sdp, orbits) = restrict_to_invariant(&j, &[(i, 1.0)], &symmetric_group(3), true).unwrap();
        assert_eq!(orbits.m, 2);
        assert_eq!(sdp.objective, vec![3.0, 6.0]);
        assert_eq!(sdp.rows.len(), 1);
        assert_eq!(sdp.rows[0].coeffs, vec![3.0, 0.0]);
        sdp.validate().unwrap();
    }

    #[test]
    fn trivial_group_keeps_every_entry() {
        let c = DMatrix::from_fn(3, 3, |i, j| (i + j) as f64);
        let (sdp, orbits) = restrict_to_invariant(&c, &[], &GroupAction::trivial(3), false).unwrap();
        assert_eq!(orbits.m, 9);
        assert_eq!(sdp.classes().len(), 6);
    }

    #[test]
    fn non_invariant_objective_is_reported() {
        let mut c = DMatrix::identity(3, 3);
        c[(0, 0)] = 2.0;
        let g = GroupAction::new(3, vec![Permutation::from_cycles(3, &[&[0, 1, 2]]).unwrap()]).unwrap();
        match restrict_to_invariant(&c, &[], &g, true) {
            Err(SdpModelError::NotInvariant { generator: 0, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn permuted_constraint_sets_are_accepted() {
        let e = |k: usize| {
            let mut a = DMatrix::zeros(2, 2);
            a[(k, k)] = 1.0;
            a
        };
        let swap = GroupAction::new(2, vec![Permutation::new(vec![1, 0]).unwrap()]).unwrap();
        let (sdp, _) = restrict_to_invariant(&DMatrix::identity(2, 2), &[(e(0), 1.0), (e(1), 1.0)], &swap, false).unwrap();
        assert_eq!(sdp.rows.len(), 1);
    }

    #[test]
    fn theta_rejects_non_automorphism() {
        let g = GroupAction::new(3, vec![Permutation::new(vec![1, 2, 0]).unwrap()]).unwrap();
        assert!(matches!(build_theta_prime(3, &[(0, 1)], Some(&g)), Err(SdpModelError::ActionNotAutomorphism { .. })));
    }
}
