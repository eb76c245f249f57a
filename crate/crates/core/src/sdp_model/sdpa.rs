//! SDPA sparse format (`.dat-s`).
//!
//! The file describes the pair
//! `min cᵀx s.t. Σ x_i F_i − F_0 ⪰ 0` and `max ⟨F_0, Y⟩ s.t. ⟨F_i, Y⟩ = c_i, Y ⪰ 0`.
//! Matrix 0 is `F_0`; negative block sizes denote diagonal blocks.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SdpaError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdpaEntry {
    /// 0 for `F_0`, `i` for `F_i`.
    pub mat: usize,
    /// Block index, 0-based.
    pub block: usize,
    /// Row and column inside the block, 0-based, `i <= j`.
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpaProblem {
    pub m: usize,
    /// Signed block sizes; negative means diagonal.
    pub blocks: Vec<i64>,
    pub c: Vec<f64>,
    pub entries: Vec<SdpaEntry>,
}

impl SdpaProblem {
    pub fn block_size(&self, b: usize) -> usize {
        self.blocks[b].unsigned_abs() as usize
    }

    pub fn is_diagonal(&self, b: usize) -> bool {
        self.blocks[b] < 0
    }

    pub fn validate(&self) -> Result<(), SdpaError> {
        if self.c.len() != self.m {
            return Err(SdpaError::Invalid(format!("{} objective entries for {} variables", self.c.len(), self.m)));
        }
        for (k, e) in self.entries.iter().enumerate() {
            if e.mat > self.m || e.block >= self.blocks.len() {
                return Err(SdpaError::Invalid(format!("entry {k} refers to matrix {} block {}", e.mat, e.block + 1)));
            }
            let size = self.block_size(e.block);
            if e.i > e.j || e.j >= size {
                return Err(SdpaError::Invalid(format!("entry {k} at ({}, {}) outside upper triangle of block size {size}", e.i + 1, e.j + 1)));
            }
            if self.is_diagonal(e.block) && e.i != e.j {
                return Err(SdpaError::Invalid(format!("entry {k} is off-diagonal in a diagonal block")));
            }
            if !e.value.is_finite() {
                return Err(SdpaError::Invalid(format!("entry {k} is not finite")));
            }
        }
        Ok(())
    }

    /// Entries sorted and merged so that equal problems compare equal.
    pub fn canonical(&self) -> SdpaProblem {
        let mut acc: BTreeMap<(usize, usize, usize, usize), f64> = BTreeMap::new();
        for e in &self.entries {
            *acc.entry((e.mat, e.block, e.i, e.j)).or_insert(0.0) += e.value;
        }
        let entries = acc
            .into_iter()
            .filter(|(_, v)| *v != 0.0)
            .map(|((mat, block, i, j), value)| SdpaEntry { mat, block, i, j, value })
            .collect();
        SdpaProblem { m: self.m, blocks: self.blocks.clone(), c: self.c.clone(), entries }
    }

    /// Restricts every block to the orthogonal complement of the common
    /// kernel of `F_0..F_m`. Such directions are zero for every `x`, so the
    /// LMI has no interior while they are present. Returns the reduced
    /// problem and, per original block, the basis (columns) it was projected
    /// onto; blocks with an empty basis are removed.
    pub fn drop_common_kernel(&self, tol: f64) -> (SdpaProblem, Vec<DMatrix<f64>>) {
        let nb = self.blocks.len();
        let mut mats: Vec<BTreeMap<usize, DMatrix<f64>>> = vec![BTreeMap::new(); nb];
        for e in &self.entries {
            let size = self.block_size(e.block);
            let a = mats[e.block].entry(e.mat).or_insert_with(|| DMatrix::zeros(size, size));
            a[(e.i, e.j)] += e.value;
            if e.i != e.j {
                a[(e.j, e.i)] += e.value;
            }
        }
        let mut bases = Vec::with_capacity(nb);
        for (b, ms) in mats.iter().enumerate() {
            let size = self.block_size(b);
            let basis = if self.is_diagonal(b) {
                let keep: Vec<usize> = (0..size).filter(|&k| ms.values().any(|a| a[(k, k)].abs() > tol)).collect();
                let mut q = DMatrix::zeros(size, keep.len());
                for (c, &k) in keep.iter().enumerate() {
                    q[(k, c)] = 1.0;
                }
                q
            } else {
                let mut s = DMatrix::zeros(size, size);
                for a in ms.values() {
                    let scale = a.amax().max(1e-300);
                    s += (a * a) / (scale * scale);
                }
                let eig = s.symmetric_eigen();
                let top = eig.eigenvalues.amax();
                let keep: Vec<usize> = (0..size).filter(|&k| eig.eigenvalues[k] > tol * top).collect();
                if keep.len() == size {
                    DMatrix::identity(size, size)
                } else if keep.is_empty() {
                    DMatrix::zeros(size, 0)
                } else {
                    DMatrix::from_columns(&keep.iter().map(|&k| eig.eigenvectors.column(k).into_owned()).collect::<Vec<_>>())
                }
            };
            bases.push(basis);
        }
        let mut blocks = Vec::new();
        let mut new_index = vec![None; nb];
        for b in 0..nb {
            let r = bases[b].ncols();
            if r > 0 {
                new_index[b] = Some(blocks.len());
                blocks.push(if self.is_diagonal(b) { -(r as i64) } else { r as i64 });
            }
        }
        let mut entries = Vec::new();
        for (b, ms) in mats.iter().enumerate() {
            let Some(nbi) = new_index[b] else { continue };
            let q = &bases[b];
            let identity = q.nrows() == q.ncols() && !self.is_diagonal(b);
            for (&mat, a) in ms {
                let red = if identity { a.clone() } else { q.transpose() * a * q };
                let floor = 1e-14 * red.amax();
                for i in 0..red.nrows() {
                    for j in i..red.ncols() {
                        if red[(i, j)].abs() > floor && (!self.is_diagonal(b) || i == j) {
                            entries.push(SdpaEntry { mat, block: nbi, i, j, value: red[(i, j)] });
                        }
                    }
                }
            }
        }
        (SdpaProblem { m: self.m, blocks, c: self.c.clone(), entries }, bases)
    }

    pub fn to_sdpa_string(&self) -> String {
        let p = self.canonical();
        let mut s = String::new();
        let _ = writeln!(s, "\"symmetra\"");
        let _ = writeln!(s, "{}", p.m);
        let _ = writeln!(s, "{}", p.blocks.len());
        let sizes: Vec<String> = p.blocks.iter().map(|b| b.to_string()).collect();
        let _ = writeln!(s, "{}", sizes.join(" "));
        let rhs: Vec<String> = p.c.iter().map(|&v| fmt17(v)).collect();
        let _ = writeln!(s, "{}", rhs.join(" "));
        for e in &p.entries {
            let _ = writeln!(s, "{} {} {} {} {}", e.mat, e.block + 1, e.i + 1, e.j + 1, fmt17(e.value));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, SdpaError> {
        let mut header: Vec<(usize, String)> = Vec::new();
        let mut body_start = None;
        let lines: Vec<&str> = text.lines().collect();
        for (idx, raw) in lines.iter().enumerate() {
            let line = strip_comment(raw);
            if line.trim().is_empty() {
                continue;
            }
            if header.len() < 4 {
                header.push((idx + 1, line.to_string()));
                if header.len() == 4 {
                    body_start = Some(idx + 1);
                }
            }
        }
        if header.len() < 4 {
            return Err(SdpaError::Parse { line: lines.len(), msg: "truncated header".into() });
        }
        let num = |(line, s): &(usize, String)| -> Result<i64, SdpaError> {
            first_token(s)
                .parse::<i64>()
                .map_err(|e| SdpaError::Parse { line: *line, msg: format!("expected integer: {e}") })
        };
        let m = num(&header[0])?;
        if m < 0 {
            return Err(SdpaError::Parse { line: header[0].0, msg: "negative constraint count".into() });
        }
        let m = m as usize;
        let nblocks = num(&header[1])?;
        if nblocks <= 0 {
            return Err(SdpaError::Parse { line: header[1].0, msg: "block count must be positive".into() });
        }
        let (bline, btext) = &header[2];
        let blocks: Vec<i64> = tokens(btext)
            .take(nblocks as usize)
            .map(|t| t.parse::<i64>().map_err(|e| SdpaError::Parse { line: *bline, msg: format!("bad block size '{t}': {e}") }))
            .collect::<Result<_, _>>()?;
        if blocks.len() != nblocks as usize || blocks.iter().any(|&b| b == 0) {
            return Err(SdpaError::Parse { line: *bline, msg: format!("expected {nblocks} nonzero block sizes") });
        }
        let (cline, ctext) = &header[3];
        let c: Vec<f64> = tokens(ctext)
            .take(m)
            .map(|t| parse_f64(t).ok_or_else(|| SdpaError::Parse { line: *cline, msg: format!("bad number '{t}'") }))
            .collect::<Result<_, _>>()?;
        if c.len() != m {
            return Err(SdpaError::Parse { line: *cline, msg: format!("expected {m} objective values") });
        }
        let mut entries = Vec::new();
        for (idx, raw) in lines.iter().enumerate().skip(body_start.unwrap_or(lines.len())) {
            let line = strip_comment(raw);
            if line.trim().is_empty() {
                continue;
            }
            let t: Vec<&str> = tokens(line).collect();
            let err = |msg: String| SdpaError::Parse { line: idx + 1, msg };
            if t.len() < 5 {
                return Err(err("expected 'matno blkno i j value'".into()));
            }
            let ints: Vec<usize> = t[..4]
                .iter()
                .map(|s| s.parse::<usize>().map_err(|e| err(format!("bad index '{s}': {e}"))))
                .collect::<Result<_, _>>()?;
            let value = parse_f64(t[4]).ok_or_else(|| err(format!("bad value '{}'", t[4])))?;
            let (mat, block, i, j) = (ints[0], ints[1], ints[2], ints[3]);
            if mat > m || block == 0 || block > blocks.len() || i == 0 || j == 0 {
                return Err(err("index out of range".into()));
            }
            let size = blocks[block - 1].unsigned_abs() as usize;
            if i > size || j > size {
                return Err(err(format!("position ({i}, {j}) outside block of size {size}")));
            }
            if blocks[block - 1] < 0 && i != j {
                return Err(err("off-diagonal entry in a diagonal block".into()));
            }
            let (i, j) = if i <= j { (i, j) } else { (j, i) };
            entries.push(SdpaEntry { mat, block: block - 1, i: i - 1, j: j - 1, value });
        }
        Ok(SdpaProblem { m, blocks, c, entries })
    }
}

fn strip_comment(line: &str) -> &str {
    let cut = line.find(['"', '*']).unwrap_or(line.len());
    &line[..cut]
}

fn tokens(s: &str) -> impl Iterator<Item = &str> {
    s.split(|c: char| c.is_whitespace() || c == ',' || c == '{' || c == '}' || c == '(' || c == ')')
        .filter(|t| !t.is_empty())
}

fn first_token(s: &str) -> &str {
    tokens(s).next().unwrap_or("")
}

fn parse_f64(t: &str) -> Option<f64> {
    t.replace(['d', 'D'], "e").parse::<f64>().ok()
}

fn fmt17(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.16e}")
    }
}

pub fn write_sdpa(p: &SdpaProblem, path: &Path) -> Result<(), SdpaError> {
    p.validate()?;
    std::fs::write(path, p.to_sdpa_string())?;
    Ok(())
}

pub fn read_sdpa(path: &Path) -> Result<SdpaProblem, SdpaError> {
    let text = std::fs::read_to_string(path)?;
    SdpaProblem::parse(&text)
}

/// Accumulates entries, folding lower-triangle positions onto the upper one.
#[derive(Debug, Clone, Default)]
pub struct SdpaBuilder {
    pub blocks: Vec<i64>,
    pub c: Vec<f64>,
    acc: BTreeMap<(usize, usize, usize, usize), f64>,
}

impl SdpaBuilder {
    pub fn new(blocks: Vec<i64>, c: Vec<f64>) -> Self {
        Self { blocks, c, acc: BTreeMap::new() }
    }

    /// Adds `value` at `(i, j)` of matrix `mat`; pass each symmetric pair once.
    pub fn add(&mut self, mat: usize, block: usize, i: usize, j: usize, value: f64) {
        if value == 0.0 {
            return;
        }
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        *self.acc.entry((mat, block, i, j)).or_insert(0.0) += value;
    }

    pub fn build(self) -> SdpaProblem {
        let entries = self
            .acc
            .into_iter()
            .filter(|(_, v)| *v != 0.0)
            .map(|((mat, block, i, j), value)| SdpaEntry { mat, block, i, j, value })
            .collect();
        SdpaProblem { m: self.c.len(), blocks: self.blocks, c: self.c, entries }
    }
}
