//! Block-diagonal semidefinite programs and a primal-dual interior-point
//! solver.
//!
//! Programs are stated over free real variables `x`:
//!
//! ```text
//! minimize   cᵀx + c₀
//! subject to S_k = C_k + Σ_i x_i A_{k,i} ⪰ 0   for every block k
//!            E x = f
//! ```
//!
//! with dual
//!
//! ```text
//! maximize   −Σ_k ⟨C_k, X_k⟩ + fᵀw + c₀
//! subject to Σ_k ⟨A_{k,i}, X_k⟩ + (Eᵀw)_i = c_i,   X_k ⪰ 0.
//! ```
//!
//! The solver is an infeasible-start path-following method with the HKM
//! search direction and Mehrotra predictor-corrector steps. Equalities are
//! orthonormalized up front, which also detects inconsistent systems.

use std::ops::{Add, Mul, Neg, Sub};

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::{cholesky_in_place, cholesky_in_place_scratch, LltRegularization};
use faer::linalg::cholesky::llt::solve::{solve_in_place, solve_in_place_scratch};
use faer::linalg::solvers::DenseSolveCore;
use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::{Mat, Par, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `Σ coef·x_var + constant`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(i: usize) -> Self {
        Self::term(i, 1.0)
    }

    pub fn term(i: usize, coef: f64) -> Self {
        Self {
            terms: vec![(i, coef)],
            constant: 0.0,
        }
    }

    pub fn sum_vars(vars: impl IntoIterator<Item = usize>) -> Self {
        Self {
            terms: vars.into_iter().map(|v| (v, 1.0)).collect(),
            constant: 0.0,
        }
    }

    pub fn add_term(&mut self, i: usize, coef: f64) {
        self.terms.push((i, coef));
    }

    pub fn add_scaled(&mut self, other: &AffineExpr, s: f64) {
        self.terms.extend(other.terms.iter().map(|&(i, c)| (i, c * s)));
        self.constant += other.constant * s;
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            terms: self.terms.iter().map(|&(i, c)| (i, c * s)).collect(),
            constant: self.constant * s,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }

    /// Merges repeated variables and drops zero coefficients.
    pub fn compact(&mut self) {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for &(i, c) in &self.terms {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += c,
                _ => out.push((i, c)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        self.terms = out;
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.1 == 0.0)
    }
}

impl Add for AffineExpr {
    type Output = AffineExpr;
    fn add(mut self, rhs: AffineExpr) -> AffineExpr {
        self.add_scaled(&rhs, 1.0);
        self
    }
}

impl Sub for AffineExpr {
    type Output = AffineExpr;
    fn sub(mut self, rhs: AffineExpr) -> AffineExpr {
        self.add_scaled(&rhs, -1.0);
        self
    }
}

impl Neg for AffineExpr {
    type Output = AffineExpr;
    fn neg(self) -> AffineExpr {
        self.scaled(-1.0)
    }
}

impl Mul<f64> for AffineExpr {
    type Output = AffineExpr;
    fn mul(self, s: f64) -> AffineExpr {
        self.scaled(s)
    }
}

impl From<f64> for AffineExpr {
    fn from(c: f64) -> Self {
        AffineExpr::constant(c)
    }
}

/// Symmetric matrix-valued affine map; only the lower triangle (`i ≥ j`) is
/// stored.
#[derive(Clone, Debug)]
pub struct PsdBlock {
    pub dim: usize,
    pub entries: Vec<(usize, usize, AffineExpr)>,
}

impl PsdBlock {
    pub fn eval(&self, x: &[f64]) -> Mat<f64> {
        let mut m = Mat::zeros(self.dim, self.dim);
        for (i, j, e) in &self.entries {
            let v = e.eval(x);
            m[(*i, *j)] += v;
            if i != j {
                m[(*j, *i)] += v;
            }
        }
        m
    }
}

/// A semidefinite program in the form described in the module docs.
#[derive(Clone, Debug, Default)]
pub struct ConicProgram {
    n_vars: usize,
    objective: AffineExpr,
    blocks: Vec<PsdBlock>,
    equalities: Vec<AffineExpr>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self) -> usize {
        self.n_vars += 1;
        self.n_vars - 1
    }

    /// Adds `k` variables and returns the index of the first.
    pub fn add_vars(&mut self, k: usize) -> usize {
        self.n_vars += k;
        self.n_vars - k
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    /// Sets the objective to be minimized.
    pub fn minimize(&mut self, obj: AffineExpr) {
        self.objective = obj;
        self.objective.compact();
    }

    pub fn objective(&self) -> &AffineExpr {
        &self.objective
    }

    /// Adds the constraint `[f(i, j)] ⪰ 0`; `f` is called for `i ≥ j` only.
    pub fn add_psd(&mut self, dim: usize, mut f: impl FnMut(usize, usize) -> AffineExpr) {
        let mut entries = Vec::new();
        for i in 0..dim {
            for j in 0..=i {
                let mut e = f(i, j);
                e.compact();
                if !e.terms.is_empty() || e.constant != 0.0 {
                    entries.push((i, j, e));
                }
            }
        }
        self.blocks.push(PsdBlock { dim, entries });
    }

    /// Adds `expr = 0`.
    pub fn add_equality(&mut self, mut expr: AffineExpr) {
        expr.compact();
        self.equalities.push(expr);
    }

    pub fn blocks(&self) -> &[PsdBlock] {
        &self.blocks
    }

    pub fn equalities(&self) -> &[AffineExpr] {
        &self.equalities
    }

    pub fn validate(&self) -> Result<()> {
        let check = |e: &AffineExpr, what: &str| -> Result<()> {
            if let Some(&(i, c)) = e.terms.iter().find(|t| t.0 >= self.n_vars || !t.1.is_finite()) {
                return Err(Error::Invalid(format!("{what} references variable {i} with coefficient {c}")));
            }
            if !e.constant.is_finite() {
                return Err(Error::Invalid(format!("{what} has a non-finite constant")));
            }
            Ok(())
        };
        check(&self.objective, "objective")?;
        for (k, b) in self.blocks.iter().enumerate() {
            for (i, j, e) in &b.entries {
                if *i >= b.dim || j > i {
                    return Err(Error::Invalid(format!("block {k} entry ({i}, {j}) outside lower triangle")));
                }
                check(e, &format!("block {k} entry ({i}, {j})"))?;
            }
        }
        for (r, e) in self.equalities.iter().enumerate() {
            check(e, &format!("equality {r}"))?;
        }
        Ok(())
    }

    /// Packed-lower-triangle JSON form for cross-checking with external
    /// solvers. Packed index of `(i, j)`, `i ≥ j`, is `i(i+1)/2 + j`.
    pub fn to_json(&self) -> ProgramJson {
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                let mut constant = vec![0.0; b.dim * (b.dim + 1) / 2];
                let mut coefs: std::collections::BTreeMap<usize, Vec<(usize, f64)>> = Default::default();
                for (i, j, e) in &b.entries {
                    let k = i * (i + 1) / 2 + j;
                    constant[k] += e.constant;
                    for &(v, c) in &e.terms {
                        coefs.entry(v).or_default().push((k, c));
                    }
                }
                BlockJson {
                    dim: b.dim,
                    constant,
                    coefficients: coefs
                        .into_iter()
                        .map(|(var, es)| CoefficientJson {
                            var,
                            packed_index: es.iter().map(|e| e.0).collect(),
                            values: es.iter().map(|e| e.1).collect(),
                        })
                        .collect(),
                }
            })
            .collect();
        ProgramJson {
            schema_version: crate::SCHEMA_VERSION,
            n_vars: self.n_vars,
            objective: ExprJson::from(&self.objective),
            blocks,
            equalities: self.equalities.iter().map(ExprJson::from).collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExprJson {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl From<&AffineExpr> for ExprJson {
    fn from(e: &AffineExpr) -> Self {
        Self {
            terms: e.terms.clone(),
            constant: e.constant,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoefficientJson {
    pub var: usize,
    pub packed_index: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockJson {
    pub dim: usize,
    pub constant: Vec<f64>,
    pub coefficients: Vec<CoefficientJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProgramJson {
    pub schema_version: u32,
    pub n_vars: usize,
    pub objective: ExprJson,
    pub blocks: Vec<BlockJson>,
    /// Each entry is `expr = 0`.
    pub equalities: Vec<ExprJson>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-8,
            feas_tol: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Stopped on slow progress with gap and residuals below `1e-6`.
    NearOptimal,
    Infeasible,
    Unbounded,
    MaxIter,
    NumericalFailure,
}

impl SolveStatus {
    pub fn is_solved(&self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::NearOptimal)
    }
}

/// One line of the iteration log.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub step_primal: f64,
    pub step_dual: f64,
}

#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
    pub dual_objective: f64,
    /// Relative residual of `S = C + A(x)` and `Ex = f`.
    pub primal_residual: f64,
    /// Relative residual of `A*(X) + Eᵀw = c`.
    pub dual_residual: f64,
    /// Relative duality gap.
    pub duality_gap: f64,
    pub iterations: usize,
    /// Dual matrices `X_k`.
    pub dual_blocks: Vec<Mat<f64>>,
    pub log: Vec<IterationRecord>,
}

impl ConicSolution {
    fn failed(status: SolveStatus, n: usize) -> Self {
        Self {
            status,
            x: vec![0.0; n],
            objective_value: f64::NAN,
            dual_objective: f64::NAN,
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
            duality_gap: f64::INFINITY,
            iterations: 0,
            dual_blocks: Vec::new(),
            log: Vec::new(),
        }
    }
}

/// Interchangeable solver backends.
pub trait ConicBackend: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, prog: &ConicProgram, opts: &SolverOptions) -> ConicSolution;
}

/// The built-in interior-point solver.
#[derive(Clone, Copy, Debug, Default)]
pub struct InteriorPoint;

impl ConicBackend for InteriorPoint {
    fn name(&self) -> &'static str {
        "interior-point"
    }

    fn solve(&self, prog: &ConicProgram, opts: &SolverOptions) -> ConicSolution {
        solve(prog, opts)
    }
}

struct CompiledBlock {
    n: usize,
    c: Mat<f64>,
    /// `(var, lower-triangle entries)` sorted by variable.
    vars: Vec<(usize, Vec<(usize, usize, f64)>)>,
}

struct Compiled {
    m: usize,
    c: Vec<f64>,
    c0: f64,
    blocks: Vec<CompiledBlock>,
    /// Orthonormal equality rows.
    e: Vec<Vec<f64>>,
    f: Vec<f64>,
}

enum EqOutcome {
    Ok(Vec<Vec<f64>>, Vec<f64>),
    Inconsistent,
}

/// Gram–Schmidt on `[E | f]`, dropping dependent rows.
fn orthonormalize_equalities(m: usize, eqs: &[AffineExpr]) -> EqOutcome {
    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut g: Vec<f64> = Vec::new();
    for e in eqs {
        let mut row = vec![0.0; m];
        for &(i, c) in &e.terms {
            row[i] += c;
        }
        let mut rhs = -e.constant;
        let norm0 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        for _ in 0..2 {
            for (qk, gk) in q.iter().zip(&g) {
                let d: f64 = qk.iter().zip(&row).map(|(a, b)| a * b).sum();
                if d != 0.0 {
                    for (r, qv) in row.iter_mut().zip(qk) {
                        *r -= d * qv;
                    }
                    rhs -= d * gk;
                }
            }
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-10 * norm0.max(1.0) {
            if rhs.abs() > 1e-9 * (1.0 + e.constant.abs()) {
                return EqOutcome::Inconsistent;
            }
            continue;
        }
        q.push(row.iter().map(|v| v / norm).collect());
        g.push(rhs / norm);
    }
    EqOutcome::Ok(q, g)
}

fn compile(prog: &ConicProgram) -> Option<Compiled> {
    let m = prog.n_vars;
    let mut c = vec![0.0; m];
    for &(i, v) in &prog.objective.terms {
        c[i] += v;
    }
    let blocks = prog
        .blocks
        .iter()
        .map(|b| {
            let mut cm = Mat::zeros(b.dim, b.dim);
            let mut per_var: std::collections::BTreeMap<usize, Vec<(usize, usize, f64)>> = Default::default();
            for (i, j, e) in &b.entries {
                cm[(*i, *j)] += e.constant;
                if i != j {
                    cm[(*j, *i)] += e.constant;
                }
                for &(v, coef) in &e.terms {
                    per_var.entry(v).or_default().push((*i, *j, coef));
                }
            }
            CompiledBlock {
                n: b.dim,
                c: cm,
                vars: per_var.into_iter().collect(),
            }
        })
        .collect();
    match orthonormalize_equalities(m, &prog.equalities) {
        EqOutcome::Inconsistent => None,
        EqOutcome::Ok(e, f) => Some(Compiled {
            m,
            c,
            c0: prog.objective.constant,
            blocks,
            e,
            f,
        }),
    }
}

impl Compiled {
    /// `Σ_i x_i A_{k,i}` (+ `C_k` when `with_constant`).
    fn apply(&self, k: usize, x: &[f64], with_constant: bool) -> Mat<f64> {
        let b = &self.blocks[k];
        let mut s = if with_constant { b.c.clone() } else { Mat::zeros(b.n, b.n) };
        for (v, es) in &b.vars {
            let xv = x[*v];
            if xv == 0.0 {
                continue;
            }
            for &(i, j, a) in es {
                s[(i, j)] += xv * a;
                if i != j {
                    s[(j, i)] += xv * a;
                }
            }
        }
        s
    }

    /// `A*(G)` accumulated into `out`; `G` need not be symmetric.
    fn adjoint_into(&self, k: usize, g: &Mat<f64>, out: &mut [f64]) {
        for (v, es) in &self.blocks[k].vars {
            out[*v] += inner_entries(es, g);
        }
    }

    fn e_apply(&self, x: &[f64]) -> Vec<f64> {
        self.e.iter().map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    fn e_adjoint(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (r, wr) in self.e.iter().zip(w) {
            for (o, a) in out.iter_mut().zip(r) {
                *o += a * wr;
            }
        }
        out
    }
}

#[inline]
fn inner_entries(es: &[(usize, usize, f64)], g: &Mat<f64>) -> f64 {
    let mut acc = 0.0;
    for &(i, j, a) in es {
        acc += if i == j { a * g[(i, i)] } else { a * (g[(i, j)] + g[(j, i)]) };
    }
    acc
}

fn frob(m: &Mat<f64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            acc += m[(i, j)] * m[(i, j)];
        }
    }
    acc.sqrt()
}

fn inner(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += a[(i, j)] * b[(i, j)];
        }
    }
    acc
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn symmetrize(m: &mut Mat<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in j + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn identity(n: usize, s: f64) -> Mat<f64> {
    Mat::from_fn(n, n, |i, j| if i == j { s } else { 0.0 })
}

/// Largest `α` with `X + α dX ⪰ 0` for positive definite `X`.
fn max_step(x: &Mat<f64>, dx: &Mat<f64>) -> Option<f64> {
    let llt = x.llt(Side::Lower).ok()?;
    let l = llt.L();
    let mut w = dx.clone();
    solve_lower_triangular_in_place(l, w.as_mut(), Par::Seq);
    let mut w2 = w.transpose().to_owned();
    solve_lower_triangular_in_place(l, w2.as_mut(), Par::Seq);
    symmetrize(&mut w2);
    let eig = w2.self_adjoint_eigenvalues(Side::Lower).ok()?;
    let lmin = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    Some(if lmin >= 0.0 { f64::INFINITY } else { -1.0 / lmin })
}

/// Dense Schur complement with a Cholesky factor stored in place.
struct Schur {
    l: Mat<f64>,
    /// `M⁻¹ Eᵀ`, one column per equality.
    y: Mat<f64>,
    /// Cholesky factor of `E M⁻¹ Eᵀ`.
    k: Option<Mat<f64>>,
}

fn cholesky(mut a: Mat<f64>, reg: f64) -> Option<Mat<f64>> {
    let n = a.nrows();
    let dmax = (0..n).map(|i| a[(i, i)].abs()).fold(0.0f64, f64::max);
    let delta = reg * (1.0 + dmax);
    for i in 0..n {
        a[(i, i)] += delta;
    }
    let mut buf = MemBuffer::new(cholesky_in_place_scratch::<f64>(n, Par::Seq, Default::default()));
    let stack = MemStack::new(&mut buf);
    cholesky_in_place(a.as_mut(), LltRegularization::default(), Par::Seq, stack, Default::default()).ok()?;
    Some(a)
}

fn chol_solve(l: &Mat<f64>, rhs: &mut Mat<f64>) {
    let mut buf = MemBuffer::new(solve_in_place_scratch::<f64>(l.nrows(), rhs.ncols(), Par::Seq));
    let stack = MemStack::new(&mut buf);
    solve_in_place(l.as_ref(), rhs.as_mut(), Par::Seq, stack);
}

fn col(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

impl Schur {
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut r = col(rhs);
        chol_solve(&self.l, &mut r);
        (0..rhs.len()).map(|i| r[(i, 0)]).collect()
    }

    /// Solves `M dx − Eᵀ dw = g1`, `E dx = g2`.
    fn kkt_solve(&self, cp: &Compiled, g1: &[f64], g2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let u = self.solve(g1);
        let Some(kf) = &self.k else {
            return (u, Vec::new());
        };
        let eu = cp.e_apply(&u);
        let rhs: Vec<f64> = g2.iter().zip(&eu).map(|(a, b)| a - b).collect();
        let mut dwm = col(&rhs);
        chol_solve(kf, &mut dwm);
        let dw: Vec<f64> = (0..rhs.len()).map(|i| dwm[(i, 0)]).collect();
        let dx = (0..u.len())
            .map(|i| u[i] + (0..dw.len()).map(|r| self.y[(i, r)] * dw[r]).sum::<f64>())
            .collect();
        (dx, dw)
    }
}

/// Acceptance level for [`SolveStatus::NearOptimal`].
pub const NEAR_TOL: f64 = 1e-6;

/// Iterations without a better iterate before giving up.
const STAGNATION_ITERS: usize = 15;

/// Iterative-refinement rounds on each Newton solve.
const REFINEMENT_STEPS: usize = 2;

/// `M v = A*(X A(v) Z)` without forming `M`.
fn schur_apply(cp: &Compiled, xs: &[Mat<f64>], zs: &[Mat<f64>], v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; cp.m];
    for k in 0..cp.blocks.len() {
        let t = cp.apply(k, v, false);
        let xt = &xs[k] * &t;
        let p = &xt * &zs[k];
        cp.adjoint_into(k, &p, &mut out);
    }
    out
}

/// Builds `M_ij = ⟨A_i, X A_j Z⟩` (lower triangle) with `Z = S⁻¹`.
fn schur_matrix(prog: &Compiled, xs: &[Mat<f64>], zs: &[Mat<f64>]) -> Mat<f64> {
    let m = prog.m;
    let mut mm = Mat::<f64>::zeros(m, m);
    for (k, b) in prog.blocks.iter().enumerate() {
        let (x, z) = (&xs[k], &zs[k]);
        let n = b.n;
        let mut t = Mat::<f64>::zeros(n, n);
        for (jj, (vj, ej)) in b.vars.iter().enumerate() {
            // T = A_j Z, P = X T.
            for c in 0..n {
                for r in 0..n {
                    t[(r, c)] = 0.0;
                }
            }
            for &(p, q, a) in ej {
                for c in 0..n {
                    t[(p, c)] += a * z[(q, c)];
                }
                if p != q {
                    for c in 0..n {
                        t[(q, c)] += a * z[(p, c)];
                    }
                }
            }
            let pmat = x * &t;
            for (vi, ei) in &b.vars[..=jj] {
                let val = inner_entries(ei, &pmat);
                let (r, c) = if vi >= vj { (*vi, *vj) } else { (*vj, *vi) };
                mm[(r, c)] += val;
            }
        }
    }
    mm
}

struct Direction {
    dx: Vec<f64>,
    dw: Vec<f64>,
    ds: Vec<Mat<f64>>,
    dxm: Vec<Mat<f64>>,
}

struct State {
    x: Vec<f64>,
    w: Vec<f64>,
    xm: Vec<Mat<f64>>,
    s: Vec<Mat<f64>>,
}

/// Solves `prog` with the built-in interior-point method.
pub fn solve(prog: &ConicProgram, opts: &SolverOptions) -> ConicSolution {
    if let Err(e) = prog.validate() {
        log::error!("malformed conic program: {e}");
        return ConicSolution::failed(SolveStatus::NumericalFailure, prog.n_vars);
    }
    let Some(cp) = compile(prog) else {
        log::debug!("equality constraints are inconsistent");
        return ConicSolution::failed(SolveStatus::Infeasible, prog.n_vars);
    };
    ipm(&cp, opts)
}

fn initial_state(cp: &Compiled) -> State {
    let mut xm = Vec::new();
    let mut s = Vec::new();
    for b in &cp.blocks {
        let n = b.n as f64;
        let mut xi = 10.0f64.max(n.sqrt());
        let mut nrm_max = frob(&b.c);
        for (v, es) in &b.vars {
            let mut nrm = 0.0;
            for &(i, j, a) in es {
                nrm += if i == j { a * a } else { 2.0 * a * a };
            }
            let nrm = nrm.sqrt();
            nrm_max = nrm_max.max(nrm);
            xi = xi.max(n * (1.0 + cp.c[*v].abs()) / (1.0 + nrm));
        }
        let eta = 10.0f64.max(n.sqrt()).max((1.0 + nrm_max) / n.sqrt());
        xm.push(identity(b.n, xi));
        s.push(identity(b.n, eta));
    }
    State {
        x: vec![0.0; cp.m],
        w: vec![0.0; cp.e.len()],
        xm,
        s,
    }
}

fn ipm(cp: &Compiled, opts: &SolverOptions) -> ConicSolution {
    let m = cp.m;
    let n_total: usize = cp.blocks.iter().map(|b| b.n).sum();
    let norm_c = norm2(&cp.c);
    let norm_cc = cp.blocks.iter().map(|b| frob(&b.c)).fold(0.0f64, |a, b| a.hypot(b));
    let norm_f = norm2(&cp.f);
    let mut st = initial_state(cp);
    let mut log_records = Vec::new();
    let mut stall = 0usize;
    let mut reg = 1e-15;
    let mut status = SolveStatus::MaxIter;
    let mut last = (f64::NAN, f64::NAN, f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut iterations = 0;
    let mut prev_steps = (1.0, 1.0);
    // Best iterate by `max(gap, pinf, dinf)`, returned if the run ends short
    // of the tolerances.
    let mut best: Option<(f64, usize, Vec<f64>, Vec<Mat<f64>>)> = None;
    let mut best_last = last;

    for iter in 0..=opts.max_iter {
        iterations = iter;
        // Residuals.
        let mut zs = Vec::with_capacity(cp.blocks.len());
        let mut ok = true;
        for s in &st.s {
            match s.llt(Side::Lower) {
                Ok(llt) => zs.push({
                    let mut z = llt.inverse();
                    symmetrize(&mut z);
                    z
                }),
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            status = SolveStatus::NumericalFailure;
            break;
        }
        let mut atx = vec![0.0; m];
        for (k, xk) in st.xm.iter().enumerate() {
            cp.adjoint_into(k, xk, &mut atx);
        }
        let etw = cp.e_adjoint(&st.w);
        let r_p: Vec<f64> = (0..m).map(|i| cp.c[i] - atx[i] - etw[i]).collect();
        let r_d: Vec<Mat<f64>> = (0..cp.blocks.len())
            .map(|k| {
                let mut r = cp.apply(k, &st.x, true);
                r -= &st.s[k];
                r
            })
            .collect();
        let ex = cp.e_apply(&st.x);
        let r_e: Vec<f64> = cp.f.iter().zip(&ex).map(|(f, e)| f - e).collect();

        let gap_abs: f64 = st.xm.iter().zip(&st.s).map(|(x, s)| inner(x, s)).sum();
        let mu = gap_abs / n_total.max(1) as f64;
        let pobj = dot(&cp.c, &st.x) + cp.c0;
        let cx: f64 = cp.blocks.iter().zip(&st.xm).map(|(b, x)| inner(&b.c, x)).sum();
        let dobj = -cx + dot(&cp.f, &st.w) + cp.c0;
        let rel_gap = gap_abs.max((pobj - dobj).abs()) / (1.0 + pobj.abs() + dobj.abs());
        let rd_norm = r_d.iter().map(frob).fold(0.0f64, |a, b| a.hypot(b));
        let pinf = (rd_norm / (1.0 + norm_cc)).max(norm2(&r_e) / (1.0 + norm_f));
        let dinf = norm2(&r_p) / (1.0 + norm_c);
        last = (pobj, dobj, rel_gap, pinf, dinf);
        let merit = rel_gap.max(pinf).max(dinf);
        if best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, iter, st.x.clone(), st.xm.clone()));
            best_last = last;
        }
        log::debug!(
            "iter {iter:3}  pobj {pobj:+.10e}  dobj {dobj:+.10e}  gap {rel_gap:.2e}  pinf {pinf:.2e}  dinf {dinf:.2e}  mu {mu:.2e}  steps {:.2e} {:.2e}", prev_steps.0, prev_steps.1
        );
        log_records.push(IterationRecord {
            iter,
            primal_objective: pobj,
            dual_objective: dobj,
            gap: rel_gap,
            primal_residual: pinf,
            dual_residual: dinf,
            step_primal: prev_steps.1,
            step_dual: prev_steps.0,
        });

        if rel_gap <= opts.gap_tol && pinf <= opts.feas_tol && dinf <= opts.feas_tol {
            status = SolveStatus::Optimal;
            break;
        }
        // Infeasibility certificates.
        let inf_tol = 1e-8;
        let dray = -cx + dot(&cp.f, &st.w);
        if dray > 0.0 {
            let aty: f64 = (0..m).map(|i| (atx[i] + etw[i]).powi(2)).sum::<f64>().sqrt();
            if aty / dray < inf_tol && pinf > opts.feas_tol {
                status = SolveStatus::Infeasible;
                break;
            }
        }
        let pray = -dot(&cp.c, &st.x);
        if pray > 0.0 {
            let ax_minus_s: f64 = r_d
                .iter()
                .zip(&cp.blocks)
                .map(|(r, b)| {
                    let mut t = r.clone();
                    t -= &b.c;
                    frob(&t)
                })
                .fold(0.0f64, |a, b| a.hypot(b));
            if ax_minus_s.max(norm2(&ex)) / pray < inf_tol && dinf > opts.feas_tol {
                status = SolveStatus::Unbounded;
                break;
            }
        }
        if iter == opts.max_iter {
            break;
        }
        if let Some(b) = &best {
            if iter >= b.1 + STAGNATION_ITERS {
                log::debug!("no progress for {STAGNATION_ITERS} iterations");
                status = SolveStatus::NumericalFailure;
                break;
            }
        }

        // Newton system.
        let mut schur = None;
        while reg <= 1e-6 {
            if let Some(l) = cholesky(schur_matrix(cp, &st.xm, &zs), reg) {
                schur = Some(l);
                break;
            }
            log::debug!("Schur factorization failed; regularization raised to {:.0e}", reg * 100.0);
            reg *= 100.0;
        }
        let Some(l) = schur else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let p = cp.e.len();
        let (y, kf) = if p > 0 {
            let mut y = Mat::from_fn(m, p, |i, r| cp.e[r][i]);
            chol_solve(&l, &mut y);
            let kmat = Mat::from_fn(p, p, |r, s| (0..m).map(|i| cp.e[r][i] * y[(i, s)]).sum::<f64>());
            let kf = cholesky(kmat, 1e-12);
            if kf.is_none() {
                status = SolveStatus::NumericalFailure;
                break;
            }
            (y, kf)
        } else {
            (Mat::zeros(m, 0), None)
        };
        let schur = Schur { l, y, k: kf };

        let direction = |sigma_mu: f64, corr: Option<&[Mat<f64>]>| -> Direction {
            // G_k = σμZ − X − corr − X R_d Z.
            let mut g_all = Vec::with_capacity(cp.blocks.len());
            let mut h = r_p.clone();
            let mut atg = vec![0.0; m];
            for k in 0..cp.blocks.len() {
                let n = cp.blocks[k].n;
                let xr = &st.xm[k] * &r_d[k];
                let xrz = &xr * &zs[k];
                let mut g = Mat::from_fn(n, n, |i, j| sigma_mu * zs[k][(i, j)] - st.xm[k][(i, j)] - xrz[(i, j)]);
                if let Some(cs) = corr {
                    g -= &cs[k];
                }
                cp.adjoint_into(k, &g, &mut atg);
                g_all.push(g);
            }
            for i in 0..m {
                h[i] -= atg[i];
            }
            let neg_h: Vec<f64> = h.iter().map(|v| -v).collect();
            let (mut dx, mut dw) = schur.kkt_solve(cp, &neg_h, &r_e);
            for _ in 0..REFINEMENT_STEPS {
                let mdx = schur_apply(cp, &st.xm, &zs, &dx);
                let etdw = cp.e_adjoint(&dw);
                let g1: Vec<f64> = (0..m).map(|i| neg_h[i] - mdx[i] + etdw[i]).collect();
                let edx = cp.e_apply(&dx);
                let g2: Vec<f64> = r_e.iter().zip(&edx).map(|(a, b)| a - b).collect();
                let (cx, cw) = schur.kkt_solve(cp, &g1, &g2);
                dx.iter_mut().zip(&cx).for_each(|(a, b)| *a += b);
                dw.iter_mut().zip(&cw).for_each(|(a, b)| *a += b);
            }
            let mut ds = Vec::with_capacity(cp.blocks.len());
            let mut dxm = Vec::with_capacity(cp.blocks.len());
            for k in 0..cp.blocks.len() {
                let mut dsk = cp.apply(k, &dx, false);
                dsk += &r_d[k];
                let n = cp.blocks[k].n;
                let xds = &st.xm[k] * &dsk;
                let xdsz = &xds * &zs[k];
                let mut dxk = Mat::from_fn(n, n, |i, j| sigma_mu * zs[k][(i, j)] - st.xm[k][(i, j)] - xdsz[(i, j)]);
                if let Some(cs) = corr {
                    dxk -= &cs[k];
                }
                symmetrize(&mut dxk);
                ds.push(dsk);
                dxm.push(dxk);
            }
            Direction { dx, dw, ds, dxm }
        };

        let steps = |d: &Direction| -> Option<(f64, f64)> {
            let mut ap = f64::INFINITY;
            let mut ad = f64::INFINITY;
            for k in 0..cp.blocks.len() {
                ap = ap.min(max_step(&st.xm[k], &d.dxm[k])?);
                ad = ad.min(max_step(&st.s[k], &d.ds[k])?);
            }
            Some((ap, ad))
        };

        // Predictor.
        let pred = direction(0.0, None);
        let Some((ap_max, ad_max)) = steps(&pred) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let ap = ap_max.min(1.0);
        let ad = ad_max.min(1.0);
        let mut mu_aff = 0.0;
        for k in 0..cp.blocks.len() {
            let mut xa = st.xm[k].clone();
            xa += &(&pred.dxm[k] * faer::Scale(ap));
            let mut sa = st.s[k].clone();
            sa += &(&pred.ds[k] * faer::Scale(ad));
            mu_aff += inner(&xa, &sa);
        }
        mu_aff /= n_total.max(1) as f64;
        let expon = 1.0f64.max(3.0 * ap.min(ad).powi(2));
        let sigma = if mu > 0.0 { (mu_aff / mu).max(0.0).powf(expon).min(1.0) } else { 0.0 };
        let corr: Vec<Mat<f64>> = (0..cp.blocks.len())
            .map(|k| {
                let t = &pred.dxm[k] * &pred.ds[k];
                &t * &zs[k]
            })
            .collect();
        let dirn = direction(sigma * mu, Some(&corr));
        let Some((ap_max, ad_max)) = steps(&dirn) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let gamma = 0.9 + 0.09 * ap.min(ad);
        let ap = (gamma * ap_max).min(1.0);
        let ad = (gamma * ad_max).min(1.0);
        prev_steps = (ap, ad);

        for k in 0..cp.blocks.len() {
            st.xm[k] += &(&dirn.dxm[k] * faer::Scale(ap));
            st.s[k] += &(&dirn.ds[k] * faer::Scale(ad));
            symmetrize(&mut st.xm[k]);
            symmetrize(&mut st.s[k]);
        }
        for (w, d) in st.w.iter_mut().zip(&dirn.dw) {
            *w += ap * d;
        }
        for (x, d) in st.x.iter_mut().zip(&dirn.dx) {
            *x += ad * d;
        }

        if ap.max(ad) < 1e-7 {
            stall += 1;
            if stall >= 5 {
                status = SolveStatus::NumericalFailure;
                break;
            }
        } else {
            stall = 0;
        }
    }

    let unfinished = matches!(status, SolveStatus::NumericalFailure | SolveStatus::MaxIter);
    if unfinished {
        if let Some((_, _, x, xm)) = best {
            st.x = x;
            st.xm = xm;
            last = best_last;
        }
    }
    let (pobj, dobj, gap, pinf, dinf) = last;
    if unfinished && gap <= NEAR_TOL && pinf <= NEAR_TOL && dinf <= NEAR_TOL {
        status = SolveStatus::NearOptimal;
    }
    ConicSolution {
        status,
        x: st.x,
        objective_value: pobj,
        dual_objective: dobj,
        primal_residual: pinf,
        dual_residual: dinf,
        duality_gap: gap,
        iterations,
        dual_blocks: st.xm,
        log: log_records,
    }
}

/// Outcome of [`feasibility`].
#[derive(Clone, Debug)]
pub enum Feasibility {
    Feasible { x: Vec<f64> },
    /// `margin` is a certified lower bound on the phase-I objective.
    Infeasible { margin: f64 },
    Inconclusive { status: SolveStatus },
}

/// Phase-I feasibility test: minimize `t` subject to every block plus `t·I`
/// being PSD and `t ≥ −1`. Feasible iff `t* ≤ feas_tol`.
pub fn feasibility(prog: &ConicProgram, opts: &SolverOptions) -> (Feasibility, ConicSolution) {
    let mut p1 = ConicProgram::new();
    p1.add_vars(prog.n_vars());
    let t = p1.add_var();
    for b in prog.blocks() {
        let mut entries = b.entries.clone();
        for i in 0..b.dim {
            match entries.iter_mut().find(|(r, c, _)| *r == i && *c == i) {
                Some(e) => e.2.add_term(t, 1.0),
                None => entries.push((i, i, AffineExpr::var(t))),
            }
        }
        p1.blocks.push(PsdBlock { dim: b.dim, entries });
    }
    p1.add_psd(1, |_, _| AffineExpr::var(t) + AffineExpr::constant(1.0));
    for e in prog.equalities() {
        p1.add_equality(e.clone());
    }
    p1.minimize(AffineExpr::var(t));
    let sol = solve(&p1, opts);
    let outcome = match sol.status {
        SolveStatus::Infeasible => Feasibility::Infeasible { margin: f64::INFINITY },
        s if s.is_solved() || s == SolveStatus::MaxIter => {
            let tstar = sol.x[t];
            if tstar <= opts.feas_tol && s.is_solved() {
                Feasibility::Feasible {
                    x: sol.x[..prog.n_vars()].to_vec(),
                }
            } else if sol.dual_objective > opts.feas_tol && s.is_solved() {
                Feasibility::Infeasible {
                    margin: sol.dual_objective,
                }
            } else {
                Feasibility::Inconclusive { status: s }
            }
        }
        s => Feasibility::Inconclusive { status: s },
    };
    (outcome, sol)
}

/// Independent replay of a candidate point against the original program.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckReport {
    pub objective: f64,
    pub max_equality_violation: f64,
    pub min_block_eigenvalues: Vec<f64>,
}

impl CheckReport {
    pub fn min_eigenvalue(&self) -> f64 {
        self.min_block_eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn satisfied(&self, tol: f64) -> bool {
        self.max_equality_violation <= tol && self.min_eigenvalue() >= -tol
    }
}

pub fn check_solution(prog: &ConicProgram, x: &[f64]) -> Result<CheckReport> {
    if x.len() != prog.n_vars() {
        return Err(Error::Dimension(format!(
            "point has {} entries, program has {} variables",
            x.len(),
            prog.n_vars()
        )));
    }
    let max_eq = prog.equalities().iter().map(|e| e.eval(x).abs()).fold(0.0, f64::max);
    let mins = prog
        .blocks()
        .iter()
        .map(|b| {
            let m = b.eval(x);
            m.self_adjoint_eigenvalues(Side::Lower)
                .map(|v| v.iter().cloned().fold(f64::INFINITY, f64::min))
                .map_err(|_| Error::NoConvergence)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CheckReport {
        objective: prog.objective().eval(x),
        max_equality_violation: max_eq,
        min_block_eigenvalues: mins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> SolverOptions {
        SolverOptions::default()
    }

    #[test]
    fn two_by_two_boundary() {
        let mut p = ConicProgram::new();
        let x = p.add_var();
        p.add_psd(2, |i, j| if i == j { AffineExpr::var(x) } else { AffineExpr::constant(1.0) });
        p.minimize(AffineExpr::var(x));
        let s = solve(&p, &opts());
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-7, "{}", s.x[0]);
    }

    #[test]
    fn diagonal_infeasible() {
        let mut p = ConicProgram::new();
        let x = p.add_var();
        p.add_psd(2, |i, j| match (i, j) {
            (0, 0) => AffineExpr::var(x),
            (1, 1) => AffineExpr::constant(-1.0) - AffineExpr::var(x),
            _ => AffineExpr::zero(),
        });
        let s = solve(&p, &opts());
        assert_eq!(s.status, SolveStatus::Infeasible);
        assert!(matches!(feasibility(&p, &opts()).0, Feasibility::Infeasible { .. }));
    }

    #[test]
    fn contradictory_equalities() {
        let mut p = ConicProgram::new();
        let x = p.add_var();
        p.add_psd(1, |_, _| AffineExpr::constant(1.0));
        p.add_equality(AffineExpr::var(x));
        p.add_equality(AffineExpr::var(x) - AffineExpr::constant(1.0));
        assert_eq!(solve(&p, &opts()).status, SolveStatus::Infeasible);
        assert!(matches!(feasibility(&p, &opts()).0, Feasibility::Infeasible { .. }));
    }

    #[test]
    fn identity_block_feasible() {
        let mut p = ConicProgram::new();
        p.add_var();
        p.add_psd(3, |i, j| AffineExpr::constant(if i == j { 1.0 } else { 0.0 }));
        assert!(matches!(feasibility(&p, &opts()).0, Feasibility::Feasible { .. }));
    }

    #[test]
    fn equality_constrained_lp() {
        // min x + 2y s.t. x, y ≥ 0, x + y = 1 → 1 at (1, 0).
        let mut p = ConicProgram::new();
        let x = p.add_var();
        let y = p.add_var();
        p.add_psd(1, |_, _| AffineExpr::var(x));
        p.add_psd(1, |_, _| AffineExpr::var(y));
        p.add_equality(AffineExpr::var(x) + AffineExpr::var(y) - AffineExpr::constant(1.0));
        p.minimize(AffineExpr::var(x) + AffineExpr::term(y, 2.0));
        let s = solve(&p, &opts());
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective_value - 1.0).abs() < 1e-7);
        let chk = check_solution(&p, &s.x).unwrap();
        assert!(chk.satisfied(1e-7));
    }

    #[test]
    fn unbounded_detected() {
        let mut p = ConicProgram::new();
        let x = p.add_var();
        p.add_psd(1, |_, _| AffineExpr::var(x));
        p.minimize(-AffineExpr::var(x));
        assert_eq!(solve(&p, &opts()).status, SolveStatus::Unbounded);
    }

    #[test]
    fn max_eigenvalue_of_fixed_matrix() {
        // min t s.t. tI − A ⪰ 0 gives λ_max(A) = 3 for A = [[2,1],[1,2]].
        let mut p = ConicProgram::new();
        let t = p.add_var();
        p.add_psd(2, |i, j| {
            let a = if i == j { 2.0 } else { 1.0 };
            let mut e = AffineExpr::constant(-a);
            if i == j {
                e.add_term(t, 1.0);
            }
            e
        });
        p.minimize(AffineExpr::var(t));
        let s = solve(&p, &opts());
        assert!((s.objective_value - 3.0).abs() < 1e-7);
    }

    #[test]
    fn json_dump_packs_lower_triangle() {
        let mut p = ConicProgram::new();
        let x = p.add_var();
        p.add_psd(2, |i, j| if i == j { AffineExpr::var(x) } else { AffineExpr::constant(1.0) });
        let j = p.to_json();
        assert_eq!(j.blocks[0].constant, vec![0.0, 1.0, 0.0]);
        assert_eq!(j.blocks[0].coefficients[0].packed_index, vec![0, 2]);
    }
}
