//! Steering programs: trusted-side SR/SW of assemblages and the
//! device-independent relaxations built from assemblage moment matrices.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conic::{self, AffineExpr, ConicProgram, ConicSolution, Feasibility, SolveStatus, SolverOptions};
use crate::error::{Error, Result};
use crate::matlin::{c64, intersect_projectors, projector_basis, support_projector, ComplexMatrix, HermitianMatrix};
use crate::moments::{build_layout, EntryClass, LayoutOptions, Projector, ReducedLayout};
use crate::quantum::StateAssemblage;
use crate::scenario::{
    enumerate_responses, enumerate_strategies, BellFunctional, BellScenario, CorrelationTable, DeterministicStrategy,
    DEFAULT_STRATEGY_CAP,
};

/// Imaginary parts below this are dropped and the real embedding skipped.
pub const REAL_DATA_TOL: f64 = 1e-12;

/// Slack allowed when deciding that a Bell value is at or below the local
/// bound.
pub const LOCAL_BOUND_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Sr,
    Sw,
    Ir,
    Tsirelson,
    Membership,
}

impl Quantity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Quantity::Sr => "sr",
            Quantity::Sw => "sw",
            Quantity::Ir => "ir",
            Quantity::Tsirelson => "tsirelson",
            Quantity::Membership => "membership",
        }
    }
}

/// Outcome attached to a report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportStatus {
    Optimal,
    NearOptimal,
    /// Membership query answered positively.
    Feasible,
    /// Program infeasible: non-quantum data or an unattainable Bell value.
    Infeasible,
    /// Phase-I finished without a decision.
    Inconclusive,
    MaxIter,
    NumericalFailure,
}

impl ReportStatus {
    fn from_solve(s: SolveStatus) -> Self {
        match s {
            SolveStatus::Optimal => ReportStatus::Optimal,
            SolveStatus::NearOptimal => ReportStatus::NearOptimal,
            SolveStatus::Infeasible => ReportStatus::Infeasible,
            SolveStatus::Unbounded | SolveStatus::NumericalFailure => ReportStatus::NumericalFailure,
            SolveStatus::MaxIter => ReportStatus::MaxIter,
        }
    }

    /// True when `value` is a trustworthy optimum or membership answer.
    pub fn is_success(&self) -> bool {
        matches!(
            self,
            ReportStatus::Optimal | ReportStatus::NearOptimal | ReportStatus::Feasible
        )
    }
}

/// Solver statistics carried by a report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverSummary {
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub duality_gap: f64,
    pub n_vars: usize,
    pub n_blocks: usize,
    pub max_block_dim: usize,
}

impl SolverSummary {
    fn new(sol: &ConicSolution, prog: &ConicProgram) -> Self {
        Self {
            status: sol.status,
            iterations: sol.iterations,
            primal_objective: sol.objective_value,
            dual_objective: sol.dual_objective,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual,
            duality_gap: sol.duality_gap,
            n_vars: prog.n_vars(),
            n_blocks: prog.blocks().len(),
            max_block_dim: prog.blocks().iter().map(|b| b.dim).max().unwrap_or(0),
        }
    }
}

/// One deterministic component `P(a,b|x,y) = δ_{a,λ_x} δ_{b,μ_y}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalComponent {
    pub weight: f64,
    pub alice: Vec<usize>,
    pub bob: Vec<usize>,
}

/// Mixture of deterministic strategies reproducing a Bell value.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalWitness {
    pub components: Vec<LocalComponent>,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub quantity: Quantity,
    pub value: f64,
    pub level: Option<usize>,
    pub status: ReportStatus,
    pub gap: f64,
    pub runtime_ms: u64,
    pub inputs_digest: String,
    pub schema_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<BellScenario>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<LocalWitness>,
}

impl RobustnessReport {
    pub(crate) fn from_solution(
        quantity: Quantity,
        value: f64,
        level: Option<usize>,
        sol: &ConicSolution,
        prog: &ConicProgram,
        started: Instant,
        inputs_digest: String,
    ) -> Self {
        Self {
            quantity,
            value,
            level,
            status: ReportStatus::from_solve(sol.status),
            gap: sol.duality_gap,
            runtime_ms: started.elapsed().as_millis() as u64,
            inputs_digest,
            schema_version: crate::SCHEMA_VERSION,
            scenario: None,
            solver: Some(SolverSummary::new(sol, prog)),
            witness: None,
        }
    }
}

/// Hex SHA-256 of a canonical JSON rendering of the inputs.
pub fn inputs_digest(value: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(value).expect("JSON values always serialize");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn matrix_digest_value(m: &HermitianMatrix) -> serde_json::Value {
    let d = m.dim();
    let entries: Vec<[f64; 2]> = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| {
            let z = m.get(i, j);
            [z.re, z.im]
        })
        .collect();
    serde_json::json!(entries)
}

pub(crate) fn assemblage_digest_value(elements: impl Iterator<Item = Vec<HermitianMatrix>>) -> serde_json::Value {
    serde_json::Value::Array(
        elements
            .map(|row| serde_json::Value::Array(row.iter().map(matrix_digest_value).collect()))
            .collect(),
    )
}

/// Hermitian matrix of affine expressions, stored as full real and
/// imaginary parts.
#[derive(Clone, Debug)]
pub(crate) struct HermExpr {
    pub d: usize,
    pub complex: bool,
    pub re: Vec<Vec<AffineExpr>>,
    pub im: Vec<Vec<AffineExpr>>,
}

impl HermExpr {
    pub fn zeros(d: usize, complex: bool) -> Self {
        Self {
            d,
            complex,
            re: vec![vec![AffineExpr::zero(); d]; d],
            im: vec![vec![AffineExpr::zero(); d]; d],
        }
    }

    pub fn constant(m: &HermitianMatrix, complex: bool) -> Self {
        let d = m.dim();
        let mut h = Self::zeros(d, complex);
        for i in 0..d {
            for j in 0..d {
                let z = m.get(i, j);
                h.re[i][j] = AffineExpr::constant(z.re);
                if complex {
                    h.im[i][j] = AffineExpr::constant(z.im);
                }
            }
        }
        h
    }

    /// Fresh Hermitian variable: `d(d+1)/2` real parts plus `d(d−1)/2`
    /// imaginary parts when complex.
    pub fn variable(prog: &mut ConicProgram, d: usize, complex: bool) -> Self {
        let mut h = Self::zeros(d, complex);
        for i in 0..d {
            for j in 0..=i {
                let v = prog.add_var();
                h.re[i][j] = AffineExpr::var(v);
                h.re[j][i] = AffineExpr::var(v);
            }
        }
        if complex {
            for i in 0..d {
                for j in 0..i {
                    let v = prog.add_var();
                    h.im[i][j] = AffineExpr::var(v);
                    h.im[j][i] = AffineExpr::term(v, -1.0);
                }
            }
        }
        h
    }

    pub fn add_scaled(&mut self, other: &HermExpr, s: f64) {
        for i in 0..self.d {
            for j in 0..self.d {
                self.re[i][j].add_scaled(&other.re[i][j], s);
                if self.complex {
                    self.im[i][j].add_scaled(&other.im[i][j], s);
                }
            }
        }
    }

    pub fn trace(&self) -> AffineExpr {
        let mut t = AffineExpr::zero();
        for i in 0..self.d {
            t.add_scaled(&self.re[i][i], 1.0);
        }
        t
    }

    /// `M self M†` for a `m × d` matrix `M`; imaginary parts of `M` are
    /// ignored for real expressions.
    pub fn congruence(&self, m: &ComplexMatrix) -> HermExpr {
        let rows = m.nrows();
        let mut out = HermExpr::zeros(rows, self.complex);
        for i in 0..rows {
            for j in 0..rows {
                for p in 0..self.d {
                    for q in 0..self.d {
                        let c = m[(i, p)] * m[(j, q)].conj();
                        if self.complex {
                            out.re[i][j].add_scaled(&self.re[p][q], c.re);
                            out.re[i][j].add_scaled(&self.im[p][q], -c.im);
                            out.im[i][j].add_scaled(&self.im[p][q], c.re);
                            out.im[i][j].add_scaled(&self.re[p][q], c.im);
                        } else {
                            out.re[i][j].add_scaled(&self.re[p][q], c.re);
                        }
                    }
                }
                out.re[i][j].compact();
                out.im[i][j].compact();
            }
        }
        out
    }

    /// Adds `self ⪰ 0`, through `[[Re, −Im], [Im, Re]] ⪰ 0` when complex.
    pub fn add_psd(&self, prog: &mut ConicProgram) {
        let d = self.d;
        if !self.complex {
            prog.add_psd(d, |i, j| self.re[i][j].clone());
            return;
        }
        prog.add_psd(2 * d, |i, j| match (i < d, j < d) {
            (true, true) => self.re[i][j].clone(),
            (false, false) => self.re[i - d][j - d].clone(),
            (false, true) => self.im[i - d][j].clone(),
            (true, false) => unreachable!("only the lower triangle is requested"),
        });
    }
}

/// Which side of the LHS decomposition the assemblage sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum LhsDirection {
    /// `Σ_λ D σ_λ ⪰ target`; robustness-type programs.
    Dominate,
    /// `target ⪰ Σ_λ D σ_λ`; weight-type programs.
    Fit,
}

/// Adds `σ_λ ⪰ 0` for every deterministic strategy and the per-`(a, x)`
/// comparison with `targets[x][a]`. Returns the `σ_λ` in lexicographic
/// strategy order.
pub(crate) fn add_lhs_constraints(
    prog: &mut ConicProgram,
    targets: &[Vec<HermExpr>],
    strategies: &[DeterministicStrategy],
    direction: LhsDirection,
) -> Vec<HermExpr> {
    let d = targets[0][0].d;
    let complex = targets[0][0].complex;
    let sigmas: Vec<HermExpr> = strategies
        .iter()
        .map(|_| {
            let s = HermExpr::variable(prog, d, complex);
            s.add_psd(prog);
            s
        })
        .collect();
    for (x, row) in targets.iter().enumerate() {
        for (a, target) in row.iter().enumerate() {
            let mut sum = HermExpr::zeros(d, complex);
            for (s, lam) in sigmas.iter().zip(strategies) {
                if lam.outcome(x) == a {
                    sum.add_scaled(s, 1.0);
                }
            }
            match direction {
                LhsDirection::Dominate => sum.add_scaled(target, -1.0),
                LhsDirection::Fit => {
                    let mut t = target.clone();
                    t.add_scaled(&sum, -1.0);
                    sum = t;
                }
            }
            sum.add_psd(prog);
        }
    }
    sigmas
}

/// `Σ_λ D σ_λ ⪯ ρ_{a|x}` for constant targets, facially reduced: each
/// `σ_λ = W_λ Y_λ W_λ†` lives on the intersection of the supports of the
/// `ρ_{λ(x)|x}` it feeds, and each comparison is compressed onto the support
/// of its target. Rank-deficient assemblages otherwise leave the cone
/// without interior. Returns the `Y_λ`; `tr σ_λ = tr Y_λ`.
fn add_reduced_fit_constraints(
    prog: &mut ConicProgram,
    asm: &StateAssemblage,
    strategies: &[DeterministicStrategy],
    complex: bool,
) -> Result<Vec<HermExpr>> {
    let d = asm.dim();
    let scale = (0..asm.n_settings())
        .flat_map(|x| (0..asm.n_outcomes()).map(move |a| (a, x)))
        .map(|(a, x)| asm.get(a, x).frobenius_norm())
        .fold(0.0f64, f64::max);
    let tol = SUPPORT_TOL * scale.max(f64::MIN_POSITIVE);
    let real_basis = |p: &HermitianMatrix| {
        let b = projector_basis(p);
        if complex {
            b
        } else {
            ComplexMatrix::from_fn(b.nrows(), b.ncols(), |i, j| c64::new(b[(i, j)].re, 0.0))
        }
    };
    let supports: Vec<Vec<HermitianMatrix>> = (0..asm.n_settings())
        .map(|x| (0..asm.n_outcomes()).map(|a| support_projector(asm.get(a, x), tol)).collect())
        .collect::<Result<_>>()?;
    let mut lifted: Vec<(usize, HermExpr)> = Vec::new();
    let mut ys = Vec::new();
    for (k, lam) in strategies.iter().enumerate() {
        let ps: Vec<&HermitianMatrix> = (0..asm.n_settings()).map(|x| &supports[x][lam.outcome(x)]).collect();
        let w = real_basis(&intersect_projectors(&ps, d)?);
        if w.ncols() == 0 {
            continue;
        }
        let y = HermExpr::variable(prog, w.ncols(), complex);
        y.add_psd(prog);
        lifted.push((k, y.congruence(&w)));
        ys.push(y);
    }
    for x in 0..asm.n_settings() {
        for a in 0..asm.n_outcomes() {
            let v = real_basis(&supports[x][a]);
            if v.ncols() == 0 {
                continue;
            }
            let vh = v.adjoint().to_owned();
            let mut block = HermExpr::constant(&asm.get(a, x).sandwich(vh.as_ref()), complex);
            for (k, sigma) in &lifted {
                if strategies[*k].outcome(x) == a {
                    block.add_scaled(&sigma.congruence(&vh), -1.0);
                }
            }
            block.add_psd(prog);
        }
    }
    Ok(ys)
}

/// Relative eigenvalue cutoff for supports in the facially reduced fit.
const SUPPORT_TOL: f64 = 1e-10;

fn assemblage_targets(asm: &StateAssemblage) -> (Vec<Vec<HermExpr>>, bool) {
    let complex = !asm.is_real(REAL_DATA_TOL);
    let targets = (0..asm.n_settings())
        .map(|x| {
            (0..asm.n_outcomes())
                .map(|a| HermExpr::constant(asm.get(a, x), complex))
                .collect()
        })
        .collect();
    (targets, complex)
}

fn assemblage_digest(tag: &str, asm: &StateAssemblage, opts: &SolverOptions) -> String {
    let elements = (0..asm.n_settings()).map(|x| (0..asm.n_outcomes()).map(|a| asm.get(a, x).clone()).collect());
    inputs_digest(&serde_json::json!({
        "program": tag,
        "assemblage": assemblage_digest_value(elements),
        "solver": opts,
    }))
}

/// Options shared by the trusted-side programs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrustedOptions {
    pub solver: SolverOptions,
    pub strategy_cap: usize,
}

impl Default for TrustedOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            strategy_cap: DEFAULT_STRATEGY_CAP,
        }
    }
}

/// Steering robustness: `min Σ_λ tr σ_λ − 1` subject to `σ_λ ⪰ 0` and
/// `Σ_λ D(a|x,λ) σ_λ ⪰ ρ_{a|x}`.
pub fn sr_assemblage(asm: &StateAssemblage, opts: &TrustedOptions) -> Result<RobustnessReport> {
    trusted_program(asm, opts, Quantity::Sr)
}

/// Steerable weight: `min 1 − Σ_λ tr σ_λ` subject to `σ_λ ⪰ 0` and
/// `ρ_{a|x} ⪰ Σ_λ D(a|x,λ) σ_λ`.
pub fn sw_assemblage(asm: &StateAssemblage, opts: &TrustedOptions) -> Result<RobustnessReport> {
    trusted_program(asm, opts, Quantity::Sw)
}

fn trusted_program(asm: &StateAssemblage, opts: &TrustedOptions, quantity: Quantity) -> Result<RobustnessReport> {
    let started = Instant::now();
    let strategies = enumerate_responses(asm.n_settings(), asm.n_outcomes(), opts.strategy_cap)?;
    let (targets, complex) = assemblage_targets(asm);
    let mut prog = ConicProgram::new();
    let sigmas = match quantity {
        Quantity::Sr => add_lhs_constraints(&mut prog, &targets, &strategies, LhsDirection::Dominate),
        _ => add_reduced_fit_constraints(&mut prog, asm, &strategies, complex)?,
    };
    let mut total = AffineExpr::zero();
    for s in &sigmas {
        total.add_scaled(&s.trace(), 1.0);
    }
    let obj = match quantity {
        Quantity::Sr => total - AffineExpr::constant(1.0),
        _ => AffineExpr::constant(1.0) - total,
    };
    prog.minimize(obj);
    let sol = conic::solve(&prog, &opts.solver);
    let digest = assemblage_digest(quantity.as_str(), asm, &opts.solver);
    Ok(RobustnessReport::from_solution(
        quantity,
        sol.objective_value,
        None,
        &sol,
        &prog,
        started,
        digest,
    ))
}

/// Transposed table `p'(b,a|y,x)`: Bob becomes the steering party.
pub fn swap_roles(table: &CorrelationTable) -> CorrelationTable {
    table.swapped()
}

/// Options for the moment-matrix programs.
#[derive(Clone, Debug, PartialEq)]
pub struct DiOptions {
    pub level: usize,
    /// Extra rows appended to the level-ℓ word list.
    pub extra_words: Vec<Vec<Projector>>,
    pub layout: LayoutOptions,
    pub solver: SolverOptions,
    pub strategy_cap: usize,
    /// Bell-value form: constrain `S ≥ S_obs` instead of `S = S_obs`.
    pub at_least: bool,
}

impl DiOptions {
    pub fn level(level: usize) -> Self {
        Self {
            level,
            extra_words: Vec::new(),
            layout: LayoutOptions::default(),
            solver: SolverOptions::default(),
            strategy_cap: DEFAULT_STRATEGY_CAP,
            at_least: false,
        }
    }
}

/// Observed data for the robustness relaxations.
#[derive(Clone, Copy, Debug)]
pub enum DiInput<'a> {
    /// Full correlation table; every trace and observed entry is fixed.
    Table(&'a CorrelationTable),
    /// Only the value `S_obs` of a Bell functional is known.
    BellValue {
        functional: &'a BellFunctional,
        s_obs: f64,
    },
}

impl DiInput<'_> {
    fn scenario(&self) -> BellScenario {
        match self {
            DiInput::Table(t) => *t.scenario(),
            DiInput::BellValue { functional, .. } => *functional.scenario(),
        }
    }

    fn digest_value(&self) -> serde_json::Value {
        match self {
            DiInput::Table(t) => serde_json::json!({ "table": t.as_slice(), "scenario": t.scenario() }),
            DiInput::BellValue { functional, s_obs } => serde_json::json!({
                "functional": functional.name,
                "beta": functional.coefficients(),
                "scenario": functional.scenario(),
                "s_obs": s_obs,
            }),
        }
    }
}

/// Moment-matrix blocks `χ[ρ_{a|x}]` with the no-signaling constraint
/// `Σ_a χ[ρ_{a|x}] = R` built in: blocks `a < |A|−1` own their free moments
/// and the last block is `R − Σ_{a<|A|−1} χ[ρ_{a|x}]`.
struct AmmBlocks {
    scenario: BellScenario,
    layout: ReducedLayout,
    /// `[x][a]`.
    trace: Vec<Vec<AffineExpr>>,
    /// `[x][a][y][b]` for `b < |B|−1`.
    observed: Vec<Vec<Vec<Vec<AffineExpr>>>>,
    /// `[x][a][k]`.
    free: Vec<Vec<Vec<AffineExpr>>>,
}

impl AmmBlocks {
    fn build(prog: &mut ConicProgram, scenario: BellScenario, data: Option<&CorrelationTable>, opts: &DiOptions) -> Result<Self> {
        let layout = build_layout(&scenario, opts.level, &opts.extra_words, opts.layout)?.reduced();
        let BellScenario { nx, ny, na, nb } = scenario;
        let nf = layout.n_free;
        let r0 = prog.add_vars(nf);
        let mut trace = vec![vec![AffineExpr::zero(); na]; nx];
        let mut observed = vec![vec![vec![vec![AffineExpr::zero(); nb - 1]; ny]; na]; nx];
        match data {
            Some(t) => {
                for x in 0..nx {
                    for a in 0..na {
                        trace[x][a] = AffineExpr::constant(t.marginal_a(a, x));
                        for y in 0..ny {
                            for b in 0..nb - 1 {
                                observed[x][a][y][b] = AffineExpr::constant(t.p(x, y, a, b));
                            }
                        }
                    }
                }
            }
            None => {
                let pb0 = prog.add_vars(ny * (nb - 1));
                for x in 0..nx {
                    let mut tr_rest = AffineExpr::constant(1.0);
                    let mut ob_rest: Vec<Vec<AffineExpr>> = (0..ny)
                        .map(|y| (0..nb - 1).map(|b| AffineExpr::var(pb0 + y * (nb - 1) + b)).collect())
                        .collect();
                    for a in 0..na - 1 {
                        let pa = prog.add_var();
                        trace[x][a] = AffineExpr::var(pa);
                        tr_rest.add_term(pa, -1.0);
                        for y in 0..ny {
                            for b in 0..nb - 1 {
                                let v = prog.add_var();
                                observed[x][a][y][b] = AffineExpr::var(v);
                                ob_rest[y][b].add_term(v, -1.0);
                            }
                        }
                    }
                    trace[x][na - 1] = tr_rest;
                    observed[x][na - 1] = ob_rest;
                }
            }
        }
        let mut free = vec![vec![Vec::new(); na]; nx];
        for x in 0..nx {
            let mut rest: Vec<AffineExpr> = (0..nf).map(|k| AffineExpr::var(r0 + k)).collect();
            for a in 0..na - 1 {
                let u0 = prog.add_vars(nf);
                free[x][a] = (0..nf).map(|k| AffineExpr::var(u0 + k)).collect();
                for (k, r) in rest.iter_mut().enumerate() {
                    r.add_term(u0 + k, -1.0);
                }
            }
            free[x][na - 1] = rest;
        }
        let blocks = Self {
            scenario,
            layout,
            trace,
            observed,
            free,
        };
        for x in 0..nx {
            for a in 0..na {
                let dim = blocks.layout.dim();
                prog.add_psd(dim, |i, j| blocks.entry(x, a, blocks.layout.entry(i, j)));
            }
        }
        Ok(blocks)
    }

    fn entry(&self, x: usize, a: usize, cls: EntryClass) -> AffineExpr {
        match cls {
            EntryClass::Trace => self.trace[x][a].clone(),
            EntryClass::Observed { setting, outcome } => self.observed[x][a][setting][outcome].clone(),
            EntryClass::Zero => AffineExpr::zero(),
            EntryClass::Free { index, .. } => self.free[x][a][index].clone(),
        }
    }

    /// `P(a,b|x,y)` as an affine expression.
    fn prob(&self, x: usize, y: usize, a: usize, b: usize) -> AffineExpr {
        let nb = self.scenario.nb;
        if b < nb - 1 {
            return self.observed[x][a][y][b].clone();
        }
        let mut e = self.trace[x][a].clone();
        for bb in 0..nb - 1 {
            e.add_scaled(&self.observed[x][a][y][bb], -1.0);
        }
        e
    }

    fn bell(&self, f: &BellFunctional) -> AffineExpr {
        let s = self.scenario;
        let mut e = AffineExpr::zero();
        for x in 0..s.nx {
            for y in 0..s.ny {
                for a in 0..s.na {
                    for b in 0..s.nb {
                        let c = f.beta(x, y, a, b);
                        if c != 0.0 {
                            e.add_scaled(&self.prob(x, y, a, b), c);
                        }
                    }
                }
            }
        }
        e.compact();
        e
    }

    /// LHS blocks `χ[σ_λ]` with every entry free, and the comparison
    /// blocks against `χ[ρ_{a|x}]`. Returns `Σ_λ tr σ_λ`.
    fn add_lhs(&self, prog: &mut ConicProgram, direction: LhsDirection, cap: usize) -> Result<AffineExpr> {
        let s = self.scenario;
        let strategies = enumerate_strategies(&s, cap)?;
        let nf = self.layout.n_free;
        let n_obs = s.ny * (s.nb - 1);
        let per = 1 + n_obs + nf;
        let dim = self.layout.dim();
        let sigma_entry = |base: usize, cls: EntryClass| -> Option<usize> {
            match cls {
                EntryClass::Trace => Some(base),
                EntryClass::Observed { setting, outcome } => Some(base + 1 + setting * (s.nb - 1) + outcome),
                EntryClass::Zero => None,
                EntryClass::Free { index, .. } => Some(base + 1 + n_obs + index),
            }
        };
        let bases: Vec<usize> = strategies.iter().map(|_| prog.add_vars(per)).collect();
        let mut total = AffineExpr::zero();
        for &base in &bases {
            prog.add_psd(dim, |i, j| match sigma_entry(base, self.layout.entry(i, j)) {
                Some(v) => AffineExpr::var(v),
                None => AffineExpr::zero(),
            });
            total.add_term(base, 1.0);
        }
        for x in 0..s.nx {
            for a in 0..s.na {
                let members: Vec<usize> = strategies
                    .iter()
                    .zip(&bases)
                    .filter(|(lam, _)| lam.outcome(x) == a)
                    .map(|(_, &b)| b)
                    .collect();
                let sign = match direction {
                    LhsDirection::Dominate => 1.0,
                    LhsDirection::Fit => -1.0,
                };
                prog.add_psd(dim, |i, j| {
                    let cls = self.layout.entry(i, j);
                    let mut e = self.entry(x, a, cls).scaled(-sign);
                    for &base in &members {
                        if let Some(v) = sigma_entry(base, cls) {
                            e.add_term(v, sign);
                        }
                    }
                    e
                });
            }
        }
        Ok(total)
    }
}

fn di_digest(tag: &str, input: serde_json::Value, opts: &DiOptions) -> String {
    let extra: Vec<Vec<(usize, usize)>> = opts
        .extra_words
        .iter()
        .map(|w| w.iter().map(|p| (p.setting, p.outcome)).collect())
        .collect();
    inputs_digest(&serde_json::json!({
        "program": tag,
        "input": input,
        "level": opts.level,
        "extra_words": extra,
        "at_least": opts.at_least,
        "solver": opts.solver,
    }))
}

/// Level-ℓ membership test: does the table admit PSD moment matrices?
/// `value` is the phase-I optimum; `status` is `feasible` or `infeasible`.
pub fn di_membership(table: &CorrelationTable, opts: &DiOptions) -> Result<RobustnessReport> {
    let started = Instant::now();
    let mut prog = ConicProgram::new();
    AmmBlocks::build(&mut prog, *table.scenario(), Some(table), opts)?;
    let (outcome, sol) = conic::feasibility(&prog, &opts.solver);
    let digest = di_digest(
        "membership",
        serde_json::json!({ "table": table.as_slice(), "scenario": table.scenario() }),
        opts,
    );
    let mut report = RobustnessReport::from_solution(
        Quantity::Membership,
        sol.objective_value,
        Some(opts.level),
        &sol,
        &prog,
        started,
        digest,
    );
    report.status = match outcome {
        Feasibility::Feasible { .. } => ReportStatus::Feasible,
        Feasibility::Infeasible { .. } => ReportStatus::Infeasible,
        Feasibility::Inconclusive { .. } => ReportStatus::Inconclusive,
    };
    report.scenario = Some(*table.scenario());
    Ok(report)
}

/// Level-ℓ upper bound on the maximal quantum value of `functional`.
pub fn di_tsirelson(functional: &BellFunctional, opts: &DiOptions) -> Result<RobustnessReport> {
    let started = Instant::now();
    let mut prog = ConicProgram::new();
    let blocks = AmmBlocks::build(&mut prog, *functional.scenario(), None, opts)?;
    prog.minimize(-blocks.bell(functional));
    let sol = conic::solve(&prog, &opts.solver);
    let digest = di_digest(
        "tsirelson",
        serde_json::json!({ "functional": functional.name, "beta": functional.coefficients(), "scenario": functional.scenario() }),
        opts,
    );
    let mut report = RobustnessReport::from_solution(
        Quantity::Tsirelson,
        -sol.objective_value,
        Some(opts.level),
        &sol,
        &prog,
        started,
        digest,
    );
    report.scenario = Some(*functional.scenario());
    Ok(report)
}

/// Level-ℓ lower bound on the steering robustness of any quantum
/// realization of the input.
pub fn di_sr(input: DiInput<'_>, opts: &DiOptions) -> Result<RobustnessReport> {
    di_robustness(input, opts, Quantity::Sr)
}

/// Level-ℓ lower bound on the steerable weight of any quantum realization
/// of the input.
pub fn di_sw(input: DiInput<'_>, opts: &DiOptions) -> Result<RobustnessReport> {
    di_robustness(input, opts, Quantity::Sw)
}

fn di_robustness(input: DiInput<'_>, opts: &DiOptions, quantity: Quantity) -> Result<RobustnessReport> {
    let started = Instant::now();
    let scenario = input.scenario();
    let digest = di_digest(quantity.as_str(), input.digest_value(), opts);
    if let DiInput::BellValue { functional, s_obs } = input {
        let upper = functional.algebraic_bound();
        let lower = functional.algebraic_lower_bound();
        if !s_obs.is_finite() || s_obs > upper + LOCAL_BOUND_TOL || s_obs < lower - LOCAL_BOUND_TOL {
            return Err(Error::UnattainableValue {
                value: s_obs,
                level: opts.level,
                bound: upper,
            });
        }
        if s_obs <= functional.local_bound + LOCAL_BOUND_TOL {
            let witness = local_witness(functional, s_obs, opts.strategy_cap)?;
            return Ok(RobustnessReport {
                quantity,
                value: 0.0,
                level: Some(opts.level),
                status: ReportStatus::Optimal,
                gap: 0.0,
                runtime_ms: started.elapsed().as_millis() as u64,
                inputs_digest: digest,
                schema_version: crate::SCHEMA_VERSION,
                scenario: Some(scenario),
                solver: None,
                witness: Some(witness),
            });
        }
    }
    let mut prog = ConicProgram::new();
    let data = match input {
        DiInput::Table(t) => Some(t),
        DiInput::BellValue { .. } => None,
    };
    let blocks = AmmBlocks::build(&mut prog, scenario, data, opts)?;
    if let DiInput::BellValue { functional, s_obs } = input {
        let bell = blocks.bell(functional) - AffineExpr::constant(s_obs);
        if opts.at_least {
            prog.add_psd(1, |_, _| bell.clone());
        } else {
            prog.add_equality(bell);
        }
    }
    let direction = match quantity {
        Quantity::Sr => LhsDirection::Dominate,
        _ => LhsDirection::Fit,
    };
    let total = blocks.add_lhs(&mut prog, direction, opts.strategy_cap)?;
    let obj = match quantity {
        Quantity::Sr => total - AffineExpr::constant(1.0),
        _ => AffineExpr::constant(1.0) - total,
    };
    prog.minimize(obj);
    let sol = conic::solve(&prog, &opts.solver);
    let mut report = RobustnessReport::from_solution(
        quantity,
        sol.objective_value,
        Some(opts.level),
        &sol,
        &prog,
        started,
        digest,
    );
    report.scenario = Some(scenario);
    Ok(report)
}

/// Mixture of two deterministic strategies whose Bell value is exactly
/// `s_obs`, for `min_local ≤ s_obs ≤ local_bound`.
pub fn local_witness(functional: &BellFunctional, s_obs: f64, cap: usize) -> Result<LocalWitness> {
    let s = functional.scenario();
    let alice = enumerate_responses(s.nx, s.na, cap)?;
    let bob = enumerate_responses(s.ny, s.nb, cap)?;
    let mut best: Option<(f64, usize, usize)> = None;
    let mut worst: Option<(f64, usize, usize)> = None;
    for (i, la) in alice.iter().enumerate() {
        for (j, mb) in bob.iter().enumerate() {
            let mut v = 0.0;
            for x in 0..s.nx {
                for y in 0..s.ny {
                    v += functional.beta(x, y, la.lambda[x], mb.lambda[y]);
                }
            }
            if best.is_none_or(|b| v > b.0) {
                best = Some((v, i, j));
            }
            if worst.is_none_or(|w| v < w.0) {
                worst = Some((v, i, j));
            }
        }
    }
    let (best, worst) = (best.expect("at least one strategy"), worst.expect("at least one strategy"));
    if s_obs > best.0 + LOCAL_BOUND_TOL || s_obs < worst.0 - LOCAL_BOUND_TOL {
        return Err(Error::Invalid(format!(
            "Bell value {s_obs} outside the local range [{}, {}]",
            worst.0, best.0
        )));
    }
    let w = if best.0 > worst.0 {
        ((s_obs - worst.0) / (best.0 - worst.0)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let mut components = vec![LocalComponent {
        weight: w,
        alice: alice[best.1].lambda.clone(),
        bob: bob[best.2].lambda.clone(),
    }];
    if w < 1.0 {
        components.push(LocalComponent {
            weight: 1.0 - w,
            alice: alice[worst.1].lambda.clone(),
            bob: bob[worst.2].lambda.clone(),
        });
    }
    Ok(LocalWitness {
        components,
        value: w * best.0 + (1.0 - w) * worst.0,
    })
}

impl LocalWitness {
    /// The witnessed table.
    pub fn table(&self, scenario: BellScenario) -> Result<CorrelationTable> {
        let mut p = vec![0.0; scenario.len()];
        for c in &self.components {
            let t = CorrelationTable::deterministic(scenario, &c.alice, &c.bob)?;
            for (q, v) in p.iter_mut().zip(t.as_slice()) {
                *q += c.weight * v;
            }
        }
        CorrelationTable::new(scenario, p)
    }
}

/// One row of a Bell-value sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub s_obs: f64,
    pub bound: f64,
    pub level: usize,
    pub status: ReportStatus,
}

/// Bell-value form of `quantity` on `steps` evenly spaced values in
/// `[from, to]`, solved on up to `jobs` threads. Rows come back in grid
/// order.
pub fn sweep(
    functional: &BellFunctional,
    from: f64,
    to: f64,
    steps: usize,
    quantity: Quantity,
    opts: &DiOptions,
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    if steps == 0 {
        return Err(Error::Invalid("sweep needs at least one step".into()));
    }
    if !matches!(quantity, Quantity::Sr | Quantity::Sw) {
        return Err(Error::Invalid(format!("cannot sweep {}", quantity.as_str())));
    }
    let grid: Vec<f64> = (0..steps)
        .map(|i| {
            if steps == 1 {
                from
            } else {
                from + (to - from) * i as f64 / (steps - 1) as f64
            }
        })
        .collect();
    let jobs = jobs.max(1).min(steps);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results: Vec<std::sync::Mutex<Option<Result<SweepRow>>>> = grid.iter().map(|_| Default::default()).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= grid.len() {
                    break;
                }
                let input = DiInput::BellValue {
                    functional,
                    s_obs: grid[i],
                };
                let r = di_robustness(input, opts, quantity).map(|rep| SweepRow {
                    s_obs: grid[i],
                    bound: rep.value,
                    level: opts.level,
                    status: rep.status,
                });
                *results[i].lock().expect("no poisoned sweep slot") = Some(r);
            });
        }
    });
    results
        .into_iter()
        .map(|m| m.into_inner().expect("no poisoned sweep slot").expect("every grid point is visited"))
        .collect()
}

/// Raises the level from `start` until two consecutive values agree within
/// `tol` or `max_level` is reached. Returns every report computed.
pub fn escalate(
    start: usize,
    max_level: usize,
    tol: f64,
    mut run: impl FnMut(usize) -> Result<RobustnessReport>,
) -> Result<Vec<RobustnessReport>> {
    let mut out: Vec<RobustnessReport> = Vec::new();
    for level in start..=max_level {
        let r = run(level)?;
        let done = out.last().is_some_and(|p| (p.value - r.value).abs() <= tol);
        out.push(r);
        if done {
            break;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{fixtures, steer, DensityMatrix};
    use crate::scenario::builtin_functional;

    #[test]
    fn chsh_tsirelson_level_one() {
        let f = builtin_functional("chsh").unwrap();
        let r = di_tsirelson(&f, &DiOptions::level(1)).unwrap();
        assert_eq!(r.status, ReportStatus::Optimal);
        assert!((r.value - 2.0 * 2f64.sqrt()).abs() < 1e-6, "{}", r.value);
    }

    #[test]
    fn mub_pair_sr() {
        let asm = steer(&fixtures::phi_plus(2), &fixtures::measurement("mub-pair").unwrap()).unwrap();
        let r = sr_assemblage(&asm, &TrustedOptions::default()).unwrap();
        let expect = (2f64.sqrt() - 1.0).powi(2);
        assert!((r.value - expect).abs() < 1e-6, "{}", r.value);
    }

    #[test]
    fn separable_assemblage_zero() {
        let rho = DensityMatrix::product(
            &fixtures::bloch_operator(0.5, [0.0, 0.0, 0.5]),
            &fixtures::bloch_operator(0.5, [0.3, 0.0, 0.0]),
        )
        .unwrap();
        let asm = steer(&rho, &fixtures::measurement("mub-pair").unwrap()).unwrap();
        let sr = sr_assemblage(&asm, &TrustedOptions::default()).unwrap();
        let sw = sw_assemblage(&asm, &TrustedOptions::default()).unwrap();
        assert!(sr.value.abs() < 1e-7, "{}", sr.value);
        assert!(sw.value.abs() < 1e-7, "{}", sw.value);
    }

    #[test]
    fn pure_assemblage_weight_is_one() {
        // Every ρ_{a|x} is rank one and no two supports overlap, so the
        // facially reduced program has no σ_λ at all.
        let asm = steer(&fixtures::phi_plus(2), &fixtures::measurement("mub-pair").unwrap()).unwrap();
        let sw = sw_assemblage(&asm, &TrustedOptions::default()).unwrap();
        assert_eq!(sw.status, ReportStatus::Optimal);
        assert!((sw.value - 1.0).abs() < 1e-9, "{}", sw.value);
    }

    #[test]
    fn chsh_local_value_short_circuits() {
        let f = builtin_functional("chsh").unwrap();
        let r = di_sr(DiInput::BellValue { functional: &f, s_obs: 2.0 }, &DiOptions::level(1)).unwrap();
        assert_eq!(r.value, 0.0);
        let w = r.witness.unwrap();
        let t = w.table(*f.scenario()).unwrap();
        assert!((f.evaluate(&t).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn chsh_bell_value_sr() {
        let f = builtin_functional("chsh").unwrap();
        let t = 2.4;
        let r = di_sr(DiInput::BellValue { functional: &f, s_obs: t }, &DiOptions::level(1)).unwrap();
        let expect = (t - 2.0) * (2f64.sqrt() - 1.0) / 2.0;
        assert!(r.status.is_success());
        assert!((r.value - expect).abs() < 5e-3, "{} vs {expect}", r.value);
    }

    #[test]
    fn digest_is_stable() {
        let a = inputs_digest(&serde_json::json!({"k": 1}));
        assert_eq!(a.len(), 64);
        assert_eq!(a, inputs_digest(&serde_json::json!({"k": 1})));
    }
}
