//! Permutation group actions on `{0..n-1}`: orbits on ordered pairs, the
//! canonical 0/1 basis they induce, structure constants and group averaging.
//!
//! Group elements are never enumerated. Orbits are closed under the
//! generators by breadth-first search, so large groups are fine as long as
//! the pair set itself is small.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroupError {
    #[error("permutation is not a bijection on 0..{n}: {detail}")]
    NotBijection { n: usize, detail: String },
    #[error("generator {index} acts on {got} points, expected {n}")]
    WrongDegree { index: usize, n: usize, got: usize },
    #[error("structure constant for orbit {orbit} depends on the representative ({first} vs {second})")]
    RepresentativeMismatch { orbit: usize, first: u64, second: u64 },
    #[error("matrix is {rows}x{cols}, expected {n}x{n}")]
    SizeMismatch { rows: usize, cols: usize, n: usize },
}

/// A permutation of `{0..n-1}` given by its image list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    pub fn new(images: Vec<usize>) -> Result<Self, GroupError> {
        let n = images.len();
        let mut seen = vec![false; n];
        for &x in &images {
            if x >= n || seen[x] {
                return Err(GroupError::NotBijection {
                    n,
                    detail: format!("image {x} out of range or repeated"),
                });
            }
            seen[x] = true;
        }
        Ok(Self { images })
    }

    pub fn identity(n: usize) -> Self {
        Self { images: (0..n).collect() }
    }

    /// Builds a permutation from disjoint cycles, e.g. `&[&[0, 1, 2]]`.
    pub fn from_cycles(n: usize, cycles: &[&[usize]]) -> Result<Self, GroupError> {
        let mut images: Vec<usize> = (0..n).collect();
        let mut touched = vec![false; n];
        for cyc in cycles {
            for (k, &a) in cyc.iter().enumerate() {
                if a >= n || touched[a] {
                    return Err(GroupError::NotBijection {
                        n,
                        detail: format!("cycle entry {a} out of range or repeated"),
                    });
                }
                touched[a] = true;
                images[a] = cyc[(k + 1) % cyc.len()];
            }
        }
        Ok(Self { images })
    }

    pub fn degree(&self) -> usize {
        self.images.len()
    }

    #[inline]
    pub fn apply(&self, i: usize) -> usize {
        self.images[i]
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        Permutation {
            images: other.images.iter().map(|&x| self.images[x]).collect(),
        }
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.images.len()];
        for (i, &x) in self.images.iter().enumerate() {
            inv[x] = i;
        }
        Permutation { images: inv }
    }

    pub fn is_identity(&self) -> bool {
        self.images.iter().enumerate().all(|(i, &x)| i == x)
    }
}

/// A finite group acting on `{0..n-1}`, given by generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAction {
    pub n: usize,
    pub generators: Vec<Permutation>,
}

impl GroupAction {
    pub fn new(n: usize, generators: Vec<Permutation>) -> Result<Self, GroupError> {
        for (index, g) in generators.iter().enumerate() {
            if g.degree() != n {
                return Err(GroupError::WrongDegree { index, n, got: g.degree() });
            }
        }
        Ok(Self { n, generators })
    }

    pub fn trivial(n: usize) -> Self {
        Self { n, generators: Vec::new() }
    }

    /// Parses `{ "n": 3, "generators": [[1,2,0]] }`.
    pub fn from_json(text: &str) -> Result<Self, String> {
        #[derive(Deserialize)]
        struct Raw {
            n: usize,
            generators: Vec<Vec<usize>>,
        }
        let raw: Raw = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let gens = raw
            .generators
            .into_iter()
            .map(Permutation::new)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        Self::new(raw.n, gens).map_err(|e| e.to_string())
    }

    pub fn to_json(&self) -> String {
        let gens: Vec<&[usize]> = self.generators.iter().map(|g| g.images()).collect();
        serde_json::json!({ "n": self.n, "generators": gens }).to_string()
    }

    /// Orbits of the action on points, each sorted, in order of smallest element.
    pub fn point_orbits(&self) -> Vec<Vec<usize>> {
        let mut id = vec![usize::MAX; self.n];
        let mut orbits = Vec::new();
        for start in 0..self.n {
            if id[start] != usize::MAX {
                continue;
            }
            let k = orbits.len();
            let mut orbit = vec![start];
            id[start] = k;
            let mut head = 0;
            while head < orbit.len() {
                let x = orbit[head];
                head += 1;
                for g in &self.generators {
                    let y = g.apply(x);
                    if id[y] == usize::MAX {
                        id[y] = k;
                        orbit.push(y);
                    }
                }
            }
            orbit.sort_unstable();
            orbits.push(orbit);
        }
        orbits
    }
}

/// Orbits of the group on `[n]×[n]`, numbered in lexicographic first-encounter order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOrbitStructure {
    pub n: usize,
    /// Row-major `n*n` table of orbit ids.
    pub orbit_id: Vec<usize>,
    pub m: usize,
    pub orbit_sizes: Vec<u64>,
    pub transpose_map: Vec<usize>,
    /// First pair of each orbit in lexicographic order.
    pub representatives: Vec<(usize, usize)>,
}

impl PairOrbitStructure {
    #[inline]
    pub fn id(&self, i: usize, j: usize) -> usize {
        self.orbit_id[i * self.n + j]
    }

    /// Whether orbit `r` lies on the diagonal.
    pub fn is_diagonal(&self, r: usize) -> bool {
        let (i, j) = self.representatives[r];
        i == j
    }

    /// All pairs of orbit `r` in lexicographic order.
    pub fn pairs(&self, r: usize) -> Vec<(usize, usize)> {
        let n = self.n;
        (0..n * n)
            .filter(|&p| self.orbit_id[p] == r)
            .map(|p| (p / n, p % n))
            .collect()
    }

    /// The 0/1 matrix `C_r`.
    pub fn canonical_matrix(&self, r: usize) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |i, j| if self.id(i, j) == r { 1.0 } else { 0.0 })
    }

    /// `Σ_r x_r C_r`.
    pub fn combine(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |i, j| x[self.id(i, j)])
    }

    /// Coordinates `⟨C_r, A⟩ = Σ_{(i,j)∈R_r} A_ij` of a matrix.
    pub fn coordinates(&self, a: &DMatrix<f64>) -> Vec<f64> {
        let mut c = vec![0.0; self.m];
        for i in 0..self.n {
            for j in 0..self.n {
                c[self.id(i, j)] += a[(i, j)];
            }
        }
        c
    }

    /// True when reduction does not shrink the problem.
    pub fn unprofitable(&self) -> bool {
        self.m >= self.n * self.n
    }
}

/// Orbit decomposition of `[n]×[n]` under the generators.
pub fn pair_orbits(action: &GroupAction) -> PairOrbitStructure {
    let n = action.n;
    let mut orbit_id = vec![usize::MAX; n * n];
    let mut orbit_sizes = Vec::new();
    let mut representatives = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n * n {
        if orbit_id[start] != usize::MAX {
            continue;
        }
        let r = orbit_sizes.len();
        orbit_id[start] = r;
        representatives.push((start / n, start % n));
        let mut size = 1u64;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            let (i, j) = (p / n, p % n);
            for g in &action.generators {
                let q = g.apply(i) * n + g.apply(j);
                if orbit_id[q] == usize::MAX {
                    orbit_id[q] = r;
                    size += 1;
                    queue.push_back(q);
                }
            }
        }
        orbit_sizes.push(size);
    }
    let m = orbit_sizes.len();
    let transpose_map = representatives
        .iter()
        .map(|&(i, j)| orbit_id[j * n + i])
        .collect();
    PairOrbitStructure { n, orbit_id, m, orbit_sizes, transpose_map, representatives }
}

/// Sparse tensor of structure constants `C_r C_s = Σ_t p^t_{rs} C_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureConstants {
    pub m: usize,
    /// `|R_r|`, so that `‖C_r‖ = sqrt(orbit_sizes[r])`.
    pub orbit_sizes: Vec<u64>,
    pub transpose_map: Vec<usize>,
    /// Orbits whose canonical matrices sum to the identity.
    pub unit: Vec<usize>,
    /// Entries `(r, s, t, p^t_{rs})` with nonzero value, sorted.
    pub entries: Vec<(usize, usize, usize, u64)>,
}

impl StructureConstants {
    pub fn norms(&self) -> Vec<f64> {
        self.orbit_sizes.iter().map(|&s| (s as f64).sqrt()).collect()
    }

    /// Dense lookup `p^t_{rs}`; linear scan, meant for tests and small M.
    pub fn get(&self, r: usize, s: usize, t: usize) -> u64 {
        self.entries
            .binary_search_by(|e| (e.0, e.1, e.2).cmp(&(r, s, t)))
            .map(|k| self.entries[k].3)
            .unwrap_or(0)
    }

    /// Product coefficients of `C_r C_s`, grouped by `(r, s)`.
    pub fn product_table(&self) -> BTreeMap<(usize, usize), Vec<(usize, u64)>> {
        let mut table: BTreeMap<(usize, usize), Vec<(usize, u64)>> = BTreeMap::new();
        for &(r, s, t, v) in &self.entries {
            table.entry((r, s)).or_default().push((t, v));
        }
        table
    }

    /// Integer left-regular matrices `(P_r)_{st} = p^s_{rt}`, sparse per `r`.
    pub fn left_regular_integer(&self) -> Vec<Vec<(usize, usize, u64)>> {
        let mut mats = vec![Vec::new(); self.m];
        for &(r, t, s, v) in &self.entries {
            mats[r].push((s, t, v));
        }
        mats
    }

    /// Checks `P_r P_s = Σ_t p^t_{rs} P_t` in exact integer arithmetic for
    /// all pairs. Equivalent to associativity of the multiplication table.
    pub fn verify_exact(&self) -> bool {
        let m = self.m;
        let mats = self.left_regular_integer();
        let table = self.product_table();
        let dense = |entries: &[(usize, usize, u64)]| {
            let mut d = vec![0i128; m * m];
            for &(a, b, v) in entries {
                d[a * m + b] += v as i128;
            }
            d
        };
        let dense_mats: Vec<Vec<i128>> = mats.iter().map(|e| dense(e)).collect();
        for r in 0..m {
            for s in 0..m {
                let mut lhs = vec![0i128; m * m];
                for &(a, k, v) in &mats[r] {
                    for b in 0..m {
                        lhs[a * m + b] += v as i128 * dense_mats[s][k * m + b];
                    }
                }
                if let Some(terms) = table.get(&(r, s)) {
                    for &(t, v) in terms {
                        for (l, &x) in dense_mats[t].iter().enumerate() {
                            lhs[l] -= v as i128 * x;
                        }
                    }
                }
                if lhs.iter().any(|&x| x != 0) {
                    return false;
                }
            }
        }
        true
    }
}

/// Counts `p^t_{rs} = |{k : (i,k) ∈ R_r, (k,j) ∈ R_s}|` from the first
/// representative of every orbit, auditing with a second representative.
pub fn structure_constants(
    orbits: &PairOrbitStructure,
    action: &GroupAction,
) -> Result<StructureConstants, GroupError> {
    let n = orbits.n;
    debug_assert!(action.generators.iter().all(|g| {
        (0..n * n).all(|p| orbits.id(g.apply(p / n), g.apply(p % n)) == orbits.orbit_id[p])
    }));
    let mut entries = Vec::new();
    let mut row = BTreeMap::new();
    for t in 0..orbits.m {
        let (i, j) = orbits.representatives[t];
        row.clear();
        for k in 0..n {
            *row.entry((orbits.id(i, k), orbits.id(k, j))).or_insert(0u64) += 1;
        }
        if orbits.orbit_sizes[t] > 1 {
            let (i2, j2) = second_representative(orbits, t);
            let mut other = BTreeMap::new();
            for k in 0..n {
                *other.entry((orbits.id(i2, k), orbits.id(k, j2))).or_insert(0u64) += 1;
            }
            if other != row {
                let key = row.keys().chain(other.keys()).find(|key| row.get(key) != other.get(key));
                let key = key.copied().unwrap_or((0, 0));
                return Err(GroupError::RepresentativeMismatch {
                    orbit: t,
                    first: row.get(&key).copied().unwrap_or(0),
                    second: other.get(&key).copied().unwrap_or(0),
                });
            }
        }
        for (&(r, s), &v) in &row {
            entries.push((r, s, t, v));
        }
    }
    entries.sort_unstable();
    let unit = (0..orbits.m).filter(|&r| orbits.is_diagonal(r)).collect();
    Ok(StructureConstants {
        m: orbits.m,
        orbit_sizes: orbits.orbit_sizes.clone(),
        transpose_map: orbits.transpose_map.clone(),
        unit,
        entries,
    })
}

fn second_representative(orbits: &PairOrbitStructure, t: usize) -> (usize, usize) {
    let n = orbits.n;
    let first = orbits.representatives[t];
    (0..n * n)
        .rev()
        .map(|p| (p / n, p % n))
        .find(|&(i, j)| orbits.id(i, j) == t && (i, j) != first)
        .unwrap_or(first)
}

/// Replaces every entry by the mean of `x` over its orbit.
pub fn group_average(x: &DMatrix<f64>, orbits: &PairOrbitStructure) -> Result<DMatrix<f64>, GroupError> {
    let n = orbits.n;
    if x.nrows() != n || x.ncols() != n {
        return Err(GroupError::SizeMismatch { rows: x.nrows(), cols: x.ncols(), n });
    }
    let sums = orbits.coordinates(x);
    let means: Vec<f64> = sums
        .iter()
        .zip(&orbits.orbit_sizes)
        .map(|(s, &k)| s / k as f64)
        .collect();
    Ok(orbits.combine(&means))
}

/// The symmetric group on `n` points, generated by a transposition and an n-cycle.
pub fn symmetric_group(n: usize) -> GroupAction {
    let mut gens = Vec::new();
    if n >= 2 {
        gens.push(Permutation::from_cycles(n, &[&[0, 1]]).expect("valid"));
    }
    if n >= 3 {
        let cyc: Vec<usize> = (0..n).collect();
        gens.push(Permutation::from_cycles(n, &[&cyc]).expect("valid"));
    }
    GroupAction { n, generators: gens }
}

/// The cyclic group generated by `i ↦ i+1 mod n`.
pub fn cyclic_group(n: usize) -> GroupAction {
    let images = (0..n).map(|i| (i + 1) % n).collect();
    GroupAction { n, generators: vec![Permutation { images }] }
}

/// The dihedral group of the n-gon.
pub fn dihedral_group(n: usize) -> GroupAction {
    let mut g = cyclic_group(n);
    let images = (0..n).map(|i| (n - i) % n).collect();
    g.generators.push(Permutation { images });
    g
}
