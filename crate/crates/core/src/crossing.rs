//! Lower bounds for the crossing number of `K_{m,n}` from the semidefinite
//! program `α_m = min{⟨X, C⟩ : X ≥ 0, X ⪰ 0, ⟨X, J⟩ = 1}` over cyclic
//! permutations, reduced with the regular *-representation.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perm_groups::{GroupAction, Permutation, StructureConstants};
use crate::sdp_model::{reduce_regular, InvariantSdp, OrbitRow, SdpModelError, SdpaBuilder};
use crate::solver::{self, RowKind, SolverError, Status};

#[derive(Debug, Error)]
pub enum CrossingError {
    #[error("m = {0} outside the supported range 3..=9")]
    Range(usize),
    #[error(transparent)]
    Model(#[from] SdpModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("solver finished with status {0}")]
    NotSolved(Status),
}

/// A cyclic permutation of `0..m` written as its cycle starting at 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CyclicPerm {
    pub cycle: Vec<u8>,
}

impl CyclicPerm {
    /// `(0, 1, …, m−1)`.
    pub fn standard(m: usize) -> Self {
        Self { cycle: (0..m as u8).collect() }
    }

    /// Canonical form of any rotation of a cycle.
    pub fn from_sequence(seq: &[u8]) -> Self {
        let start = seq.iter().position(|&a| a == 0).expect("label 0 present");
        let mut cycle = seq[start..].to_vec();
        cycle.extend_from_slice(&seq[..start]);
        Self { cycle }
    }

    pub fn m(&self) -> usize {
        self.cycle.len()
    }

    /// `σ⁻¹`: the cycle read backwards.
    pub fn inverse(&self) -> Self {
        let mut c = vec![0u8];
        c.extend(self.cycle[1..].iter().rev());
        Self { cycle: c }
    }

    /// `π σ π⁻¹`, i.e. every label `a` renamed to `π(a)`.
    pub fn relabel(&self, pi: &[u8]) -> Self {
        let seq: Vec<u8> = self.cycle.iter().map(|&a| pi[a as usize]).collect();
        Self::from_sequence(&seq)
    }

    /// The relabeling that sends `self` to the standard cycle.
    pub fn standardizer(&self) -> Vec<u8> {
        let mut pi = vec![0u8; self.m()];
        for (k, &a) in self.cycle.iter().enumerate() {
            pi[a as usize] = k as u8;
        }
        pi
    }

    /// Position in the lexicographic list of [`enumerate_cyclic`].
    pub fn rank(&self) -> usize {
        let tail = &self.cycle[1..];
        let mut r = 0;
        for (k, &a) in tail.iter().enumerate() {
            let smaller = tail[k + 1..].iter().filter(|&&b| b < a).count();
            r = r * (tail.len() - k) + smaller;
        }
        r
    }
}

impl fmt::Display for CyclicPerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<String> = self.cycle.iter().map(|a| (a + 1).to_string()).collect();
        write!(f, "({})", labels.join(","))
    }
}

/// All `(m−1)!` cyclic permutations of `0..m`, lexicographically.
pub fn enumerate_cyclic(m: usize) -> Result<Vec<CyclicPerm>, CrossingError> {
    if !(3..=9).contains(&m) {
        return Err(CrossingError::Range(m));
    }
    let mut out = Vec::new();
    let mut tail: Vec<u8> = (1..m as u8).collect();
    loop {
        let mut c = vec![0u8];
        c.extend_from_slice(&tail);
        out.push(CyclicPerm { cycle: c });
        // Next permutation of the tail.
        let Some(k) = (0..tail.len().saturating_sub(1)).rev().find(|&k| tail[k] < tail[k + 1]) else { break };
        let l = (k + 1..tail.len()).rev().find(|&l| tail[l] > tail[k]).unwrap();
        tail.swap(k, l);
        tail[k + 1..].reverse();
    }
    Ok(out)
}

/// Fewest swaps of cyclically adjacent entries turning the standard cycle
/// into each cycle, indexed by rank.
fn swap_distances(m: usize, n: usize) -> Vec<u32> {
    let mut dist = vec![u32::MAX; n];
    let start = CyclicPerm::standard(m);
    dist[start.rank()] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(c) = queue.pop_front() {
        let d = dist[c.rank()];
        for k in 0..m {
            let mut seq = c.cycle.clone();
            seq.swap(k, (k + 1) % m);
            let next = CyclicPerm::from_sequence(&seq);
            let r = next.rank();
            if dist[r] == u32::MAX {
                dist[r] = d + 1;
                queue.push_back(next);
            }
        }
    }
    dist
}

/// `C_{σ,τ}`: minimum number of crossings of a drawing of `K_{m,2}` whose
/// two degree-`m` vertices have rotations `σ` and `τ`. Computed as the
/// number of cyclically adjacent swaps turning `σ` into `τ⁻¹`.
pub fn star_crossing(sigma: &CyclicPerm, tau: &CyclicPerm) -> u32 {
    let table = StarCrossingTable::new(sigma.m());
    table.value(sigma, tau)
}

/// Swap distances from the standard cycle, for repeated evaluation of `C`.
#[derive(Debug, Clone)]
pub struct StarCrossingTable {
    pub m: usize,
    dist: Vec<u32>,
}

impl StarCrossingTable {
    pub fn new(m: usize) -> Self {
        let n = (1..m).product();
        Self { m, dist: swap_distances(m, n) }
    }

    pub fn value(&self, sigma: &CyclicPerm, tau: &CyclicPerm) -> u32 {
        let pi = sigma.standardizer();
        self.dist[tau.inverse().relabel(&pi).rank()]
    }
}

/// Independent evaluation of `C_{σ,τ}` for small `m`: the plane minus the two
/// centres is an annulus, and minimal drawings of the `m` paths are straight
/// lines in its universal cover. Minimizes the crossing count over the
/// homotopy classes (integer lifts) of the paths.
pub fn star_crossing_by_lifts(sigma: &CyclicPerm, tau: &CyclicPerm) -> u32 {
    let m = sigma.m() as i64;
    let inv = tau.inverse();
    let pos = |c: &CyclicPerm| {
        let mut p = vec![0i64; c.m()];
        for (k, &a) in c.cycle.iter().enumerate() {
            p[a as usize] = k as i64;
        }
        p
    };
    let p = pos(sigma);
    let q = pos(&inv);
    let mu = m as usize;
    let mut best = u32::MAX;
    let combos = 3usize.pow((mu - 1) as u32);
    for shift in 0..m {
        for code in 0..combos {
            let mut top = vec![q[0] + shift; mu];
            let mut c = code;
            for (i, t) in top.iter_mut().enumerate().skip(1) {
                *t = q[i] + shift + m * ((c % 3) as i64 - 1);
                c /= 3;
            }
            let mut total = 0u32;
            for i in 0..mu {
                for j in i + 1..mu {
                    let a = (p[i] - p[j]).div_euclid(m);
                    let b = (top[i] - top[j]).div_euclid(m);
                    total += (a - b).unsigned_abs() as u32;
                }
            }
            best = best.min(total);
        }
    }
    best
}

/// `⌊(m−1)²/4⌋`, the value of `C` on the diagonal.
pub fn diagonal_crossings(m: usize) -> u64 {
    ((m as u64 - 1) * (m as u64 - 1)) / 4
}

/// `Z(m, n) = ⌊(m−1)²/4⌋·⌊(n−1)²/4⌋`.
pub fn zarankiewicz(m: usize, n: usize) -> u64 {
    diagonal_crossings(m) * diagonal_crossings(n)
}

/// `½n²α_m − ½n⌊(m−1)²/4⌋`.
pub fn crossing_bound(m: usize, n: usize, alpha: f64) -> f64 {
    let n = n as f64;
    0.5 * n * n * alpha - 0.5 * n * diagonal_crossings(m) as f64
}

/// Generators of `h_{π,i}(σ) = πσ^iπ⁻¹` as a permutation action on `Z_m`
/// (points are ranks).
pub fn cyclic_action(m: usize) -> Result<GroupAction, CrossingError> {
    let cycles = enumerate_cyclic(m)?;
    let swap: Vec<u8> = (0..m as u8).map(|a| if a < 2 { 1 - a } else { a }).collect();
    let shift: Vec<u8> = (0..m as u8).map(|a| (a + 1) % m as u8).collect();
    let gens = [
        cycles.iter().map(|c| c.relabel(&swap).rank()).collect::<Vec<_>>(),
        cycles.iter().map(|c| c.relabel(&shift).rank()).collect(),
        cycles.iter().map(|c| c.inverse().rank()).collect(),
    ];
    let gens = gens.into_iter().map(|g| Permutation::new(g).expect("bijection on cycles")).collect();
    Ok(GroupAction::new(cycles.len(), gens).expect("consistent degree"))
}

/// Orbits of `G = S_m × {±1}` on `Z_m × Z_m`, each represented by
/// `(σ₀, τ)` with `σ₀ = (1, …, m)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossingOrbits {
    pub m: usize,
    /// `(m−1)!`.
    pub n: usize,
    /// Orbit of `(σ₀, τ)` by rank of `τ`.
    pub orbit_of: Vec<usize>,
    /// Rank of the representative `τ` of each orbit.
    pub representatives: Vec<usize>,
    pub orbit_sizes: Vec<u64>,
    pub transpose_map: Vec<usize>,
    /// `C` on each orbit.
    pub crossings: Vec<u32>,
    #[serde(skip)]
    cycles: Vec<CyclicPerm>,
}

impl CrossingOrbits {
    pub fn len(&self) -> usize {
        self.representatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.representatives.is_empty()
    }

    pub fn cycles(&self) -> &[CyclicPerm] {
        &self.cycles
    }

    /// Orbit of an arbitrary pair `(σ, τ)` of ranks.
    pub fn orbit(&self, sigma: usize, tau: usize) -> usize {
        let pi = self.cycles[sigma].standardizer();
        self.orbit_of[self.cycles[tau].relabel(&pi).rank()]
    }

    /// Exact structure constants, counting `z` between `σ₀` and each
    /// representative.
    pub fn structure_constants(&self) -> StructureConstants {
        let standardizers: Vec<Vec<u8>> = self.cycles.iter().map(|c| c.standardizer()).collect();
        let per_target: Vec<Vec<(usize, usize, usize, u64)>> = (0..self.len())
            .into_par_iter()
            .map(|t| {
                let y = &self.cycles[self.representatives[t]];
                let mut count: BTreeMap<(usize, usize), u64> = BTreeMap::new();
                for (z, pi) in standardizers.iter().enumerate() {
                    let r = self.orbit_of[z];
                    let s = self.orbit_of[y.relabel(pi).rank()];
                    *count.entry((r, s)).or_insert(0) += 1;
                }
                count.into_iter().map(|((r, s), p)| (r, s, t, p)).collect()
            })
            .collect();
        let mut entries: Vec<(usize, usize, usize, u64)> = per_target.into_iter().flatten().collect();
        entries.sort_unstable();
        StructureConstants {
            m: self.len(),
            orbit_sizes: self.orbit_sizes.clone(),
            transpose_map: self.transpose_map.clone(),
            unit: vec![self.orbit_of[0]],
            entries,
        }
    }
}

/// Orbit structure of `Z_m × Z_m` through the dihedral stabilizer of `σ₀`.
pub fn orbit_structure(m: usize) -> Result<CrossingOrbits, CrossingError> {
    let cycles = enumerate_cyclic(m)?;
    let n = cycles.len();
    let mu = m as u8;
    // Stabilizer of σ₀: rotations a ↦ a+k, and reflections a ↦ k−a after inversion.
    let rotations: Vec<Vec<u8>> = (0..mu).map(|k| (0..mu).map(|a| (a + k) % mu).collect()).collect();
    let reflections: Vec<Vec<u8>> = (0..mu).map(|k| (0..mu).map(|a| (k + mu - a) % mu).collect()).collect();
    let mut orbit_of = vec![usize::MAX; n];
    let mut representatives = Vec::new();
    let mut counts = Vec::new();
    for start in 0..n {
        if orbit_of[start] != usize::MAX {
            continue;
        }
        let id = representatives.len();
        representatives.push(start);
        orbit_of[start] = id;
        let mut stack = vec![start];
        let mut size = 0u64;
        while let Some(r) = stack.pop() {
            size += 1;
            let c = &cycles[r];
            let inv = c.inverse();
            for pi in &rotations {
                let img = c.relabel(pi).rank();
                if orbit_of[img] == usize::MAX {
                    orbit_of[img] = id;
                    stack.push(img);
                }
            }
            for pi in &reflections {
                let img = inv.relabel(pi).rank();
                if orbit_of[img] == usize::MAX {
                    orbit_of[img] = id;
                    stack.push(img);
                }
            }
        }
        counts.push(size);
    }
    let table = StarCrossingTable::new(m);
    let sigma0 = &cycles[0];
    let crossings: Vec<u32> = representatives.par_iter().map(|&t| table.value(sigma0, &cycles[t])).collect();
    let mut out = CrossingOrbits {
        m,
        n,
        orbit_of,
        orbit_sizes: counts.iter().map(|c| c * n as u64).collect(),
        transpose_map: Vec::new(),
        crossings,
        representatives,
        cycles,
    };
    out.transpose_map = (0..out.len()).map(|t| out.orbit(out.representatives[t], 0)).collect();
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlphaResult {
    pub m: usize,
    pub alpha: f64,
    /// Number of orbits, the order of the reduced matrix inequality.
    pub orbits: usize,
    pub variables: usize,
    pub iterations: usize,
    pub relative_gap: f64,
}

/// The orbit program of `α_m`: minimize `Σ_r |R_r| C_r x_r` over
/// `x ≥ 0`, `Σ_r |R_r| x_r = 1` and `Σ_r x_r C_r ⪰ 0`.
pub fn alpha_program(orbits: &CrossingOrbits) -> InvariantSdp {
    let m = orbits.len();
    InvariantSdp {
        n: orbits.n,
        orbit_sizes: orbits.orbit_sizes.clone(),
        transpose_map: orbits.transpose_map.clone(),
        diagonal: (0..m).map(|r| r == orbits.orbit_of[0]).collect(),
        objective: (0..m).map(|r| orbits.orbit_sizes[r] as f64 * orbits.crossings[r] as f64).collect(),
        rows: vec![OrbitRow { coeffs: orbits.orbit_sizes.iter().map(|&s| s as f64).collect(), kind: RowKind::Eq, rhs: 1.0 }],
        nonnegative: vec![true; m],
        maximize: false,
    }
}

/// `α_m` through the regular *-representation of the orbit algebra.
pub fn alpha_m(m: usize, tol: f64) -> Result<AlphaResult, CrossingError> {
    let orbits = orbit_structure(m)?;
    let sc = orbits.structure_constants();
    let program = alpha_program(&orbits);
    let reduced = reduce_regular(&program, &sc)?;
    let res = solver::solve_sdp(&reduced.sdpa, tol, 200)?;
    if res.status != Status::Optimal {
        return Err(CrossingError::NotSolved(res.status));
    }
    Ok(AlphaResult {
        m,
        alpha: reduced.original_objective(&res),
        orbits: orbits.len(),
        variables: reduced.sdpa.m,
        iterations: res.iterations,
        relative_gap: res.relative_gap,
    })
}

/// `α_m` from the full `(m−1)! × (m−1)!` program, written in the dual SDPA
/// form with `Y = X ⊕ diag(s)` and `X_{στ} = s_{στ}` off the diagonal.
pub fn alpha_m_full(m: usize, tol: f64) -> Result<f64, CrossingError> {
    let cycles = enumerate_cyclic(m)?;
    let n = cycles.len();
    let table = StarCrossingTable::new(m);
    let pairs = n * (n - 1) / 2;
    let mut c = vec![1.0];
    c.extend(std::iter::repeat_n(0.0, pairs));
    let mut b = SdpaBuilder::new(vec![n as i64, -(pairs as i64)], c);
    let mut k = 0;
    for i in 0..n {
        b.add(0, 0, i, i, -(table.value(&cycles[i], &cycles[i]) as f64));
        b.add(1, 0, i, i, 1.0);
        for j in i + 1..n {
            let cij = table.value(&cycles[i], &cycles[j]) as f64;
            if cij != 0.0 {
                b.add(0, 0, i, j, -cij);
            }
            b.add(1, 0, i, j, 1.0);
            b.add(2 + k, 0, i, j, 0.5);
            b.add(2 + k, 1, k, k, -1.0);
            k += 1;
        }
    }
    let res = solver::solve_sdp(&b.build(), tol, 200)?;
    if res.status != Status::Optimal {
        return Err(CrossingError::NotSolved(res.status));
    }
    Ok(-res.objective())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perm_groups::pair_orbits;

    #[test]
    fn enumeration_and_rank() {
        assert_eq!(enumerate_cyclic(3).unwrap().len(), 2);
        assert_eq!(enumerate_cyclic(4).unwrap().len(), 6);
        let five = enumerate_cyclic(5).unwrap();
        assert_eq!(five.len(), 24);
        for (r, c) in five.iter().enumerate() {
            assert_eq!(c.rank(), r);
            assert_eq!(c.cycle[0], 0);
        }
        assert!(five.windows(2).all(|w| w[0] < w[1]));
        assert!(matches!(enumerate_cyclic(2), Err(CrossingError::Range(2))));
        assert!(matches!(enumerate_cyclic(10), Err(CrossingError::Range(10))));
        assert_eq!(CyclicPerm::standard(3).to_string(), "(1,2,3)");
    }

    #[test]
    fn star_crossing_small_values() {
        let c = enumerate_cyclic(3).unwrap();
        assert_eq!(star_crossing(&c[0], &c[1]), 0);
        assert_eq!(star_crossing(&c[0], &c[0]), 1);
    }

    #[test]
    fn swap_distance_matches_lifted_drawings() {
        for m in 3..=5 {
            let cycles = enumerate_cyclic(m).unwrap();
            let table = StarCrossingTable::new(m);
            for s in &cycles {
                for t in &cycles {
                    assert_eq!(table.value(s, t), star_crossing_by_lifts(s, t), "m={m} {s} {t}");
                }
            }
        }
    }

    #[test]
    fn crossing_matrix_invariants() {
        for m in 3..=6 {
            let cycles = enumerate_cyclic(m).unwrap();
            let table = StarCrossingTable::new(m);
            let action = cyclic_action(m).unwrap();
            for (i, s) in cycles.iter().enumerate() {
                assert_eq!(table.value(s, s) as u64, diagonal_crossings(m));
                let mut row_min = u32::MAX;
                for (j, t) in cycles.iter().enumerate() {
                    let v = table.value(s, t);
                    row_min = row_min.min(v);
                    assert_eq!(v, table.value(t, s));
                    for g in &action.generators {
                        assert_eq!(v, table.value(&cycles[g.apply(i)], &cycles[g.apply(j)]));
                    }
                }
                assert_eq!(row_min, 0);
                assert_eq!(table.value(s, &s.inverse()), 0);
            }
        }
    }

    #[test]
    fn orbits_match_generic_enumeration() {
        let three = orbit_structure(3).unwrap();
        assert_eq!(three.len(), 2);
        for m in 3..=6 {
            let o = orbit_structure(m).unwrap();
            assert!(o.len() <= o.n);
            let generic = pair_orbits(&cyclic_action(m).unwrap());
            assert_eq!(generic.m, o.len(), "m={m}");
            let total: u64 = o.orbit_sizes.iter().sum();
            assert_eq!(total, (o.n * o.n) as u64);
            let table = StarCrossingTable::new(m);
            let mut seen = vec![None; o.len()];
            for i in 0..o.n {
                for j in 0..o.n {
                    let r = o.orbit(i, j);
                    let v = table.value(&o.cycles()[i], &o.cycles()[j]);
                    assert_eq!(v, o.crossings[r]);
                    let g = generic.id(i, j);
                    assert_eq!(*seen[r].get_or_insert(g), g);
                }
            }
        }
    }

    #[test]
    fn structure_constants_are_exact() {
        for m in 3..=6 {
            assert!(orbit_structure(m).unwrap().structure_constants().verify_exact(), "m={m}");
        }
    }

    #[test]
    fn alpha_three_is_one_half() {
        let r = alpha_m(3, 1e-10).unwrap();
        assert!((r.alpha - 0.5).abs() < 1e-8, "{}", r.alpha);
        assert!((alpha_m_full(3, 1e-10).unwrap() - 0.5).abs() < 1e-8);
    }

    #[test]
    fn reduced_matches_full() {
        for m in 4..=5 {
            let a = alpha_m(m, 1e-9).unwrap().alpha;
            let b = alpha_m_full(m, 1e-9).unwrap();
            assert!((a - b).abs() < 1e-6, "m={m}: {a} vs {b}");
        }
    }

    #[test]
    fn bounds_and_zarankiewicz() {
        assert_eq!(zarankiewicz(3, 5), 4);
        for n in 1..=30 {
            let b = crossing_bound(3, n, 0.5);
            let n2 = n as f64;
            assert!((b - (n2 * n2 / 4.0 - n2 / 2.0)).abs() < 1e-12);
            assert!(b.ceil() as i64 <= zarankiewicz(3, n) as i64);
        }
    }
}
