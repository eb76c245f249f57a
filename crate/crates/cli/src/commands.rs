//! One function per subcommand.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use symmetra::crossing::{alpha_m, crossing_bound, zarankiewicz};
use symmetra::hamming_codes::{delsarte_lp, schrijver_triple_sdp, Backend};
use symmetra::nalgebra::DMatrix;
use symmetra::perm_groups::{pair_orbits, structure_constants, GroupAction};
use symmetra::sdp_model::{
    from_sdpa, read_sdpa, reduce_block, reduce_direct, reduce_regular, write_sdpa, BlockMode, Form, Recovery, ReducedProgram,
};
use symmetra::solver::{solve_sdp, Arithmetic, SolverError, Status};
use symmetra::sos_sym::{sos_gram_sdp, Polynomial, SosError};
use symmetra::sphere_codes::{delsarte_lp_sphere_with, three_point_sdp, Certify, ThreePointOptions};
use symmetra::star_algebra::{block_diagonalize, verify_star_isomorphism, AlgebraBasis, Reference};

use crate::format::{complex, fixed, list, sci};
use crate::{BackendArg, CertifyArg, Failure, ModeArg, Outcome, ReduceArgs, SolveArgs};

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

fn read_group(path: &Path) -> Result<GroupAction, Failure> {
    GroupAction::from_json(&read_text(path)?).map_err(|e| Failure { name: "GroupError::Parse".into(), message: e, usage: false })
}

pub fn orbits(group: &Path) -> Result<Outcome, Failure> {
    let action = read_group(group)?;
    let mut out = Outcome::default();
    let orbits = out.time("orbits", || pair_orbits(&action));
    out.line(format!("n = {}", orbits.n));
    out.line(format!("M = {}", orbits.m));
    out.line("orbit  size  representative  transpose");
    for r in 0..orbits.m {
        let (i, j) = orbits.representatives[r];
        out.line(format!("{r:>5}  {:>4}  ({i}, {j}){:pad$}  {}", orbits.orbit_sizes[r], "", orbits.transpose_map[r], pad = 10usize.saturating_sub(format!("({i}, {j})").len())));
    }
    if orbits.unprofitable() {
        out.line("warning: reduction not profitable (M >= n^2)");
    }
    out.result("m", orbits.m);
    out.result("orbit_sizes", &orbits.orbit_sizes);
    out.result("representatives", &orbits.representatives);
    out.result("transpose_map", &orbits.transpose_map);
    Ok(out)
}

pub fn blockdiag(basis: &Path, seed: u64, tol: f64) -> Result<Outcome, Failure> {
    let basis = AlgebraBasis::from_json(&read_text(basis)?).map_err(|e| Failure { name: "AlgebraError::Parse".into(), message: e, usage: false })?;
    let mut out = Outcome::default();
    let bd = out.time("block_diagonalize", || block_diagonalize(&basis, seed, tol)).map_err(|e| Failure::from_error("AlgebraError", e))?;
    let report = out.time("verify", || verify_star_isomorphism(&bd.image_map(), Reference { constants: None, basis: Some(&basis) }, tol.max(1e-8)));
    out.line(format!("basis dimension {}, acting on C^{}", basis.dim(), basis.n));
    out.line(format!("block sizes     {}", list(&bd.block_sizes)));
    out.line(format!("multiplicities  {}", list(&bd.multiplicities)));
    out.line(format!("kernel dimension {}", bd.kernel_dim));
    out.line(format!("sum of squares of block sizes {}", bd.block_sizes.iter().map(|m| m * m).sum::<usize>()));
    out.line("verification");
    out.line(format!("  multiplicativity error {}", sci(report.multiplicativity_error)));
    out.line(format!("  adjoint error          {}", sci(report.adjoint_error)));
    out.line(format!("  image rank             {}", report.image_rank));
    if let Some(e) = report.eigenvalue_error {
        out.line(format!("  eigenvalue error       {}", sci(e)));
    }
    out.line(format!("  passed                 {}", report.passed));
    out.line("images");
    for (r, blocks) in bd.images.iter().enumerate() {
        for (k, b) in blocks.iter().enumerate() {
            out.line(format!("{} block {k}:", basis.labels[r]));
            for i in 0..b.nrows() {
                let row: Vec<String> = (0..b.ncols()).map(|j| complex(b[(i, j)], 6)).collect();
                out.line(format!("  [{}]", row.join(", ")));
            }
        }
    }
    let images: Vec<Vec<Vec<Vec<[f64; 2]>>>> = bd
        .images
        .iter()
        .map(|bl| bl.iter().map(|b| (0..b.nrows()).map(|i| (0..b.ncols()).map(|j| [b[(i, j)].re, b[(i, j)].im]).collect()).collect()).collect())
        .collect();
    out.result("block_sizes", &bd.block_sizes);
    out.result("multiplicities", &bd.multiplicities);
    out.result("kernel_dim", bd.kernel_dim);
    out.result("images", images);
    out.result("verification", &report);
    out.audit.insert("star_isomorphism".into(), report.passed);
    if !report.passed {
        return Err(Failure { name: "AlgebraError::Verification".into(), message: "block images fail the *-isomorphism checks".into(), usage: false });
    }
    Ok(out)
}

/// Everything `solve --recover` needs besides the SDPA file.
#[derive(Debug, Serialize, Deserialize)]
pub struct Sidecar {
    pub step: String,
    pub form: Form,
    pub sign: f64,
    pub offset: f64,
    pub orbits: usize,
    pub recovery: Recovery,
    pub warnings: Vec<String>,
}

pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn reduce(a: &ReduceArgs, seed: u64) -> Result<Outcome, Failure> {
    let p = read_sdpa(&a.sdpa).map_err(|e| Failure::from_error("SdpaError", e))?;
    let action = read_group(&a.group)?;
    let mut out = Outcome::default();
    let (sdp, orbits) = out.time("restrict", || from_sdpa(&p, &action)).map_err(|e| Failure::from_error("SdpModelError", e))?;
    let model = |e| Failure::from_error("SdpModelError", e);
    let rp: ReducedProgram = match a.step.as_str() {
        "1" => reduce_direct(&sdp, &orbits).map_err(model)?,
        "1.5" => {
            let sc = structure_constants(&orbits, &action).map_err(|e| Failure::from_error("GroupError", e))?;
            out.time("reduce", || reduce_regular(&sdp, &sc)).map_err(model)?
        }
        "2" => {
            let basis = AlgebraBasis::from_orbits(&orbits);
            let bd = out.time("block_diagonalize", || block_diagonalize(&basis, seed, a.tol)).map_err(|e| Failure::from_error("AlgebraError", e))?;
            let mode = match a.mode {
                ModeArg::Coefficient => BlockMode::Coefficient,
                ModeArg::Parametrized => BlockMode::Parametrized,
            };
            out.time("reduce", || reduce_block(&sdp, &bd, mode, 1e-8)).map_err(model)?
        }
        other => return Err(Failure::usage(format!("--step must be 1, 1.5 or 2, got {other}"))),
    };
    write_sdpa(&rp.sdpa, &a.output).map_err(|e| Failure::from_error("SdpaError", e))?;
    let side = Sidecar {
        step: a.step.clone(),
        form: rp.form,
        sign: rp.sign,
        offset: rp.offset,
        orbits: orbits.m,
        recovery: rp.recovery.clone(),
        warnings: rp.warnings.clone(),
    };
    let side_path = sidecar_path(&a.output);
    std::fs::write(&side_path, serde_json::to_string_pretty(&side).expect("sidecar serializes") + "\n").map_err(|e| Failure::io(&side_path, e))?;
    out.line(format!("input: {} variables, block {}", p.m, list(&p.blocks)));
    out.line(format!("orbits M = {}", orbits.m));
    out.line(format!("step {}: {:?} form, {} variables, blocks {}", a.step, rp.form, rp.sdpa.m, list(&rp.sdpa.blocks)));
    out.line(format!("largest block {}", rp.max_block()));
    out.line(format!("objective map: original = {} * reduced + {}", fixed(rp.sign, 1), fixed(rp.offset, 12)));
    for w in &rp.warnings {
        out.line(format!("warning: {w}"));
    }
    out.line(format!("wrote {}", a.output.display()));
    out.line(format!("wrote {}", side_path.display()));
    out.result("orbits", orbits.m);
    out.result("form", rp.form);
    out.result("variables", rp.sdpa.m);
    out.result("blocks", &rp.sdpa.blocks);
    out.result("warnings", &rp.warnings);
    Ok(out)
}

pub fn solve(a: &SolveArgs) -> Result<Outcome, Failure> {
    let p = read_sdpa(&a.file).map_err(|e| Failure::from_error("SdpaError", e))?;
    let mut out = Outcome::default();
    let res = match out.time("solve", || solve_sdp(&p, a.tol, a.max_iter)) {
        Ok(r) => r,
        Err(SolverError::NoInterior { iterations, last }) => {
            return Err(Failure {
                name: "SolverError::NoInterior".into(),
                message: format!(
                    "no progress after {iterations} iterations; last primal {}, dual {}, gap {}",
                    fixed(last.primal_objective, 10),
                    fixed(last.dual_objective, 10),
                    sci(last.relative_gap)
                ),
                usage: false,
            })
        }
        Err(e) => return Err(Failure::from_error("SolverError", e)),
    };
    out.line(format!("status      {}", res.status));
    out.line(format!("primal      {}", fixed(res.primal_objective, 10)));
    out.line(format!("dual        {}", fixed(res.dual_objective, 10)));
    out.line(format!("objective   {}", fixed(res.objective(), 10)));
    out.line(format!("gap         {}", sci(res.relative_gap)));
    out.line(format!("residuals   {} {}", sci(res.equality_residual), sci(res.slack_residual)));
    out.line(format!("iterations  {}", res.iterations));
    out.result("status", res.status);
    out.result("objective", res.objective());
    out.result("primal_objective", res.primal_objective);
    out.result("dual_objective", res.dual_objective);
    out.result("relative_gap", res.relative_gap);
    out.result("iterations", res.iterations);
    out.audit.insert("optimal".into(), res.status == Status::Optimal);
    if let Some(path) = &a.recover {
        let side: Sidecar = serde_json::from_str(&read_text(path)?)
            .map_err(|e| Failure { name: "SdpModelError::Sidecar".into(), message: e.to_string(), usage: false })?;
        let rp = ReducedProgram { sdpa: p.clone(), form: side.form, sign: side.sign, offset: side.offset, recovery: side.recovery, warnings: side.warnings };
        let original = rp.original_objective(&res);
        let x = rp.recover(&res);
        out.line(format!("original objective {}", fixed(original, 10)));
        out.line(format!("orbit coordinates  {}", x.iter().map(|v| fixed(*v, 8)).collect::<Vec<_>>().join(" ")));
        out.result("original_objective", original);
        out.result("orbit_coordinates", x);
    }
    if let Some(path) = &a.emit_solution {
        let text = serde_json::to_string_pretty(&res).expect("solution serializes");
        std::fs::write(path, text + "\n").map_err(|e| Failure::io(path, e))?;
        out.line(format!("wrote {}", path.display()));
    }
    Ok(out)
}

pub fn delsarte(n: usize, d: usize, q: usize, rational: bool) -> Result<Outcome, Failure> {
    let mode = if rational { Arithmetic::Rational } else { Arithmetic::Float };
    let mut out = Outcome::default();
    let b = out.time("solve", || delsarte_lp(n, d, q, mode)).map_err(|e| Failure::from_error("HammingError", e))?;
    out.line(format!("Delsarte LP bound, n={n} d={d} q={q}"));
    match &b.exact {
        Some(v) => {
            out.line(format!("bound: {v}"));
            out.line(format!("bound (float): {}", fixed(b.bound, 10)));
            out.result("exact", v.to_string());
        }
        None => out.line(format!("bound: {}", fixed(b.bound, 10))),
    }
    out.line(format!("floor: {}", floor_tol(b.bound)));
    out.line("distance  x_i");
    for (i, x) in b.x.iter().enumerate() {
        out.line(format!("{i:>8}  {}", fixed(*x, 10)));
    }
    out.result("bound", b.bound);
    out.result("distance_distribution", &b.x);
    Ok(out)
}

pub fn schrijver(n: usize, d: usize, backend: BackendArg) -> Result<Outcome, Failure> {
    let be = match backend {
        BackendArg::Regular => Backend::Regular,
        BackendArg::Blockdiag => Backend::BlockDiag,
    };
    let mut out = Outcome::default();
    let t = out.time("triple", || schrijver_triple_sdp(n, d, be)).map_err(|e| Failure::from_error("HammingError", e))?;
    let lp = out.time("delsarte", || delsarte_lp(n, d, 2, Arithmetic::Float)).map_err(|e| Failure::from_error("HammingError", e))?;
    out.line(format!("binary codes, n={n} d={d}, backend {backend:?}").to_lowercase());
    out.line("bound      value           floor");
    out.line(format!("delsarte   {:<15} {}", fixed(lp.bound, 8), floor_tol(lp.bound)));
    out.line(format!("triple     {:<15} {}", fixed(t.bound, 8), floor_tol(t.bound)));
    out.line(format!("blocks {}", list(&t.sdpa.blocks)));
    out.line(format!("status {}, iterations {}, gap {}", t.result.status, t.result.iterations, sci(t.result.relative_gap)));
    out.result("bound", t.bound);
    out.result("delsarte", lp.bound);
    out.result("blocks", &t.sdpa.blocks);
    out.audit.insert("optimal".into(), t.result.status == Status::Optimal);
    Ok(out)
}

fn radians(theta: f64) -> Result<f64, Failure> {
    if !(theta > 0.0 && theta < 180.0) {
        return Err(Failure::usage(format!("--theta must lie strictly between 0 and 180 degrees, got {theta}")));
    }
    Ok(theta * PI / 180.0)
}

pub fn sphere_lp(n: usize, theta: f64, d: usize, certify: CertifyArg, grid: usize) -> Result<Outcome, Failure> {
    let th = radians(theta)?;
    let mode = match certify {
        CertifyArg::Grid => Certify::Grid,
        CertifyArg::Sos => Certify::Sos,
    };
    let mut out = Outcome::default();
    let b = out.time("solve", || delsarte_lp_sphere_with(n, th, d, mode, grid)).map_err(|e| Failure::from_error("SphereError", e))?;
    out.line(format!("spherical codes in S^{}, angle {theta} degrees, degree {d}", n - 1));
    out.line(format!("bound      {}", fixed(b.bound, 8)));
    out.line(format!("certified  {}", b.certified));
    out.line(format!("audit max  {}", sci(b.audit_max)));
    if let Some(note) = &b.note {
        out.line(format!("note: {note}"));
    }
    out.line("k  f_k");
    for (k, f) in b.f.iter().enumerate() {
        out.line(format!("{:<2} {}", k + 1, fixed(*f, 10)));
    }
    out.result("bound", b.bound);
    out.result("f", &b.f);
    out.result("note", &b.note);
    out.audit.insert("certified".into(), b.certified);
    Ok(out)
}

pub fn sphere_3pt(n: usize, theta: f64, d: usize, grid: usize, segment_grid: usize) -> Result<Outcome, Failure> {
    let th = radians(theta)?;
    let opts = ThreePointOptions { box_grid: grid, segment_grid, ..ThreePointOptions::default() };
    let mut out = Outcome::default();
    let b = out.time("solve", || three_point_sdp(n, th, d, &opts)).map_err(|e| Failure::from_error("SphereError", e))?;
    out.line(format!("spherical codes in S^{}, angle {theta} degrees, degree {d}, grid {grid}/{segment_grid}", n - 1));
    out.line(format!("bound          {}", fixed(b.bound, 6)));
    out.line(format!("floor          {}", floor_tol(b.bound)));
    out.line(format!("grid relaxed   {}", b.grid_relaxed));
    out.line(format!("audit passed   {}", b.audit_passed));
    out.line(format!("audit box      {}", sci(b.audit_box)));
    out.line(format!("audit segment  {}", sci(b.audit_segment)));
    out.line(format!("margin         {}", sci(b.margin)));
    out.line(format!("rounds {}, active rows {}", b.rounds, b.active_rows));
    out.result("bound", b.bound);
    out.result("audit_box", b.audit_box);
    out.result("audit_segment", b.audit_segment);
    out.result("margin", b.margin);
    out.audit.insert("grid_relaxed".into(), b.grid_relaxed);
    out.audit.insert("audit_passed".into(), b.audit_passed);
    Ok(out)
}

pub fn crossing(m: usize, long: bool, n: Option<usize>, tol: f64) -> Result<Outcome, Failure> {
    if m >= 8 && !long {
        return Err(Failure::usage(format!("m = {m} is a long computation; pass --long to run it")));
    }
    let mut out = Outcome::default();
    let a = out.time("alpha", || alpha_m(m, tol)).map_err(|e| Failure::from_error("CrossingError", e))?;
    out.line(format!("m = {m}"));
    out.line(format!("orbits {}, variables {}, iterations {}, gap {}", a.orbits, a.variables, a.iterations, sci(a.relative_gap)));
    out.line(format!("alpha_m  {}", fixed(a.alpha, 8)));
    out.result("alpha", a.alpha);
    out.result("orbits", a.orbits);
    if let Some(n) = n {
        let lb = crossing_bound(m, n, a.alpha);
        let z = zarankiewicz(m, n);
        out.line(format!("n = {n}"));
        out.line(format!("cr(K_m,n) >= {}", fixed(lb, 4)));
        out.line(format!("Z(m,n)     = {z}"));
        out.line(format!("ratio      {}", fixed(lb / z as f64, 6)));
        out.result("n", n);
        out.result("crossing_bound", lb);
        out.result("zarankiewicz", z);
    }
    Ok(out)
}

/// Generators as matrices: `{"n", "matrices": [[[..]..]..]}` or a permutation
/// group `{"n", "generators": [[images]]}` acting by permuting variables.
fn read_linear_group(path: &Path) -> Result<Vec<DMatrix<f64>>, Failure> {
    #[derive(Deserialize)]
    struct Raw {
        n: usize,
        #[serde(default)]
        matrices: Option<Vec<Vec<Vec<f64>>>>,
        #[serde(default)]
        generators: Option<Vec<Vec<usize>>>,
    }
    let parse = |m: String| Failure { name: "SosError::Range".into(), message: m, usage: false };
    let text = read_text(path)?;
    let raw: Raw = serde_json::from_str(&text).map_err(|e| parse(e.to_string()))?;
    if let Some(ms) = raw.matrices {
        ms.into_iter()
            .enumerate()
            .map(|(k, rows)| {
                if rows.len() != raw.n || rows.iter().any(|r| r.len() != raw.n) {
                    return Err(parse(format!("matrix {k} is not {0}x{0}", raw.n)));
                }
                Ok(DMatrix::from_fn(raw.n, raw.n, |i, j| rows[i][j]))
            })
            .collect()
    } else if raw.generators.is_some() {
        let action = GroupAction::from_json(&text).map_err(parse)?;
        Ok(action
            .generators
            .iter()
            .map(|g| DMatrix::from_fn(action.n, action.n, |i, j| if g.apply(j) == i { 1.0 } else { 0.0 }))
            .collect())
    } else {
        Err(parse("group file needs \"matrices\" or \"generators\"".into()))
    }
}

fn show_polynomial(p: &Polynomial) -> String {
    let mut parts = Vec::new();
    for (e, c) in p.terms.iter().rev() {
        let mono: Vec<String> = e
            .iter()
            .enumerate()
            .filter(|(_, &k)| k > 0)
            .map(|(i, &k)| if k == 1 { format!("x{}", i + 1) } else { format!("x{}^{k}", i + 1) })
            .collect();
        let c = fixed(*c, 8);
        parts.push(if mono.is_empty() { c } else { format!("{c}*{}", mono.join("*")) });
    }
    if parts.is_empty() {
        "0".into()
    } else {
        parts.join(" + ").replace("+ -", "- ")
    }
}

pub fn sos(poly: &Path, group: Option<&Path>, seed: u64) -> Result<Outcome, Failure> {
    let p = Polynomial::from_json(&read_text(poly)?).map_err(|e| Failure::from_error("SosError", e))?;
    let gens = match group {
        Some(g) => read_linear_group(g)?,
        None => Vec::new(),
    };
    let mut out = Outcome::default();
    out.line(format!("p = {}", show_polynomial(&p)));
    out.line(format!("variables {}, degree {}, generators {}", p.n, p.degree(), gens.len()));
    match out.time("sos", || sos_gram_sdp(&p, &gens, seed)) {
        Ok(c) => {
            out.line("status: sum of squares");
            out.line(format!("t* = {}", fixed(c.t_star, 10)));
            if let Some(order) = c.group_order {
                out.line(format!("group order {order}"));
            }
            out.line(format!("algebra blocks {}", list(&c.algebra_block_sizes)));
            out.line(format!("gram blocks    {}", list(&c.block_sizes)));
            out.line(format!("squares {}, max coefficient error {}", c.squares.len(), sci(c.max_error)));
            for (i, q) in c.squares.iter().enumerate() {
                out.line(format!("q{} = {}", i + 1, show_polynomial(q)));
            }
            let exact = c.rational.as_ref().is_some_and(|r| r.matches(&p));
            out.line(format!("exact rational certificate {exact}"));
            out.result("status", "sos");
            out.result("t_star", c.t_star);
            out.result("max_error", c.max_error);
            out.result("squares", c.squares.iter().map(|q| q.to_json()).collect::<Vec<_>>());
            out.audit.insert("coefficient_match".into(), c.max_error <= 1e-7 * (1.0 + p.max_abs_coefficient()));
            out.audit.insert("rational".into(), exact);
        }
        Err(SosError::Infeasible(f)) => {
            out.line("status: not a sum of squares");
            out.line(format!("separating functional of degree {}", f.degree));
            out.line(format!("L(p) from solver     {}", fixed(f.value_on_p, 10)));
            out.line(format!("min moment eigenvalue {}", sci(f.min_moment_eigenvalue)));
            out.line(format!("gaussian shift        {}", sci(f.gaussian_shift)));
            out.line(format!("shifted L(p)          {}", fixed(f.shifted_value, 10)));
            out.line(format!("verified {}", f.verified));
            out.result("status", "infeasible");
            out.result("functional", &*f);
            out.audit.insert("separation_verified".into(), f.verified);
        }
        Err(e) => return Err(Failure::from_error("SosError", e)),
    }
    Ok(out)
}

/// Integer part of a bound, forgiving solver error of order `1e-6` relative.
fn floor_tol(v: f64) -> f64 {
    (v + 1e-6 * v.abs().max(1.0)).floor()
}
