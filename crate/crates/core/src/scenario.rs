//! Bell scenarios, correlation tables, Bell functionals and deterministic
//! strategies.
//!
//! Tables are stored flat in `(x, y, a, b)` row-major order with 0-based
//! outcomes. Outcome `0` corresponds to the `+1` eigenvalue in correlator
//! conventions, so `E_xy = Σ (−1)^{a+b} P(a,b|x,y)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on `|A|^|X|` for strategy enumeration.
pub const DEFAULT_STRATEGY_CAP: usize = 10_000;

/// Tolerance on `Σ_{a,b} P(a,b|x,y) = 1`.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Tolerance on negative probabilities.
pub const NONNEGATIVITY_TOL: f64 = 1e-12;

/// Default no-signaling tolerance.
pub const DEFAULT_NS_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BellScenario {
    pub nx: usize,
    pub ny: usize,
    pub na: usize,
    pub nb: usize,
}

impl BellScenario {
    pub fn new(nx: usize, ny: usize, na: usize, nb: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || na == 0 || nb == 0 {
            return Err(Error::Invalid(format!(
                "scenario cardinalities must be positive, got {{nx: {nx}, ny: {ny}, na: {na}, nb: {nb}}}"
            )));
        }
        Ok(Self { nx, ny, na, nb })
    }

    /// Alice and Bob exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            nx: self.ny,
            ny: self.nx,
            na: self.nb,
            nb: self.na,
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.na * self.nb
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, a: usize, b: usize) -> usize {
        debug_assert!(x < self.nx && y < self.ny && a < self.na && b < self.nb);
        ((x * self.ny + y) * self.na + a) * self.nb + b
    }

    pub fn is_binary(&self) -> bool {
        self.na == 2 && self.nb == 2
    }

    /// `|A|^|X|`, saturating.
    pub fn strategy_count(&self) -> usize {
        checked_pow(self.na, self.nx).unwrap_or(usize::MAX)
    }
}

fn checked_pow(base: usize, exp: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

/// `D(a|x,λ) = δ_{a,λ_x}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeterministicStrategy {
    pub lambda: Vec<usize>,
}

impl DeterministicStrategy {
    pub fn outcome(&self, x: usize) -> usize {
        self.lambda[x]
    }

    pub fn d(&self, a: usize, x: usize) -> f64 {
        if self.lambda[x] == a {
            1.0
        } else {
            0.0
        }
    }
}

/// All `n_outcomes^n_settings` deterministic response functions in
/// lexicographic order (first setting most significant).
pub fn enumerate_responses(
    n_settings: usize,
    n_outcomes: usize,
    cap: usize,
) -> Result<Vec<DeterministicStrategy>> {
    let count = checked_pow(n_outcomes, n_settings).unwrap_or(usize::MAX);
    if count > cap {
        return Err(Error::CapExceeded {
            what: "deterministic strategy",
            count,
            cap,
        });
    }
    let mut out = Vec::with_capacity(count);
    let mut lambda = vec![0usize; n_settings];
    for _ in 0..count {
        out.push(DeterministicStrategy {
            lambda: lambda.clone(),
        });
        for slot in lambda.iter_mut().rev() {
            *slot += 1;
            if *slot < n_outcomes {
                break;
            }
            *slot = 0;
        }
    }
    Ok(out)
}

/// Alice's deterministic strategies for `scenario`.
pub fn enumerate_strategies(scenario: &BellScenario, cap: usize) -> Result<Vec<DeterministicStrategy>> {
    enumerate_responses(scenario.nx, scenario.na, cap)
}

/// Observed conditional distribution `P(a,b|x,y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationTable {
    scenario: BellScenario,
    p: Vec<f64>,
}

impl CorrelationTable {
    /// Validates shape, normalization and nonnegativity. Signaling above
    /// `DEFAULT_NS_TOL` is logged, not rejected; use [`Self::new_strict`] to
    /// reject it.
    pub fn new(scenario: BellScenario, p: Vec<f64>) -> Result<Self> {
        let table = Self::new_unchecked_ns(scenario, p)?;
        let defect = table.signaling_defect();
        if defect > DEFAULT_NS_TOL {
            log::warn!("correlation table violates no-signaling by {defect:.3e}");
        }
        Ok(table)
    }

    /// As [`Self::new`] but rejects tables that signal by more than `ns_tol`.
    pub fn new_strict(scenario: BellScenario, p: Vec<f64>, ns_tol: f64) -> Result<Self> {
        let table = Self::new_unchecked_ns(scenario, p)?;
        let defect = table.signaling_defect();
        if defect > ns_tol {
            return Err(Error::Invalid(format!(
                "correlation table violates no-signaling by {defect:.3e} (tolerance {ns_tol:.1e})"
            )));
        }
        Ok(table)
    }

    fn new_unchecked_ns(scenario: BellScenario, p: Vec<f64>) -> Result<Self> {
        if p.len() != scenario.len() {
            return Err(Error::Dimension(format!(
                "table has {} entries, scenario needs {}",
                p.len(),
                scenario.len()
            )));
        }
        if let Some(i) = p.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite probability at flat index {i}")));
        }
        let table = Self { scenario, p };
        for x in 0..scenario.nx {
            for y in 0..scenario.ny {
                let mut total = 0.0;
                for a in 0..scenario.na {
                    for b in 0..scenario.nb {
                        let v = table.p(x, y, a, b);
                        if v < -NONNEGATIVITY_TOL {
                            return Err(Error::Invalid(format!(
                                "negative probability P({a},{b}|{x},{y}) = {v:.3e}"
                            )));
                        }
                        total += v;
                    }
                }
                if (total - 1.0).abs() > NORMALIZATION_TOL {
                    return Err(Error::Invalid(format!(
                        "P(·,·|{x},{y}) sums to {total}, expected 1"
                    )));
                }
            }
        }
        Ok(table)
    }

    /// Builds a table from `f(x, y, a, b)`.
    pub fn from_fn(scenario: BellScenario, f: impl Fn(usize, usize, usize, usize) -> f64) -> Result<Self> {
        let mut p = vec![0.0; scenario.len()];
        for x in 0..scenario.nx {
            for y in 0..scenario.ny {
                for a in 0..scenario.na {
                    for b in 0..scenario.nb {
                        p[scenario.index(x, y, a, b)] = f(x, y, a, b);
                    }
                }
            }
        }
        Self::new(scenario, p)
    }

    /// `p[x][y][a][b]`.
    pub fn from_nested(p: &[Vec<Vec<Vec<f64>>>]) -> Result<Self> {
        let scenario = nested_shape(p)?;
        Self::from_fn(scenario, |x, y, a, b| p[x][y][a][b])
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<Vec<f64>>>> {
        let s = self.scenario;
        (0..s.nx)
            .map(|x| {
                (0..s.ny)
                    .map(|y| {
                        (0..s.na)
                            .map(|a| (0..s.nb).map(|b| self.p(x, y, a, b)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    /// Product of deterministic responses `a = λ_x`, `b = μ_y`.
    pub fn deterministic(scenario: BellScenario, lambda: &[usize], mu: &[usize]) -> Result<Self> {
        if lambda.len() != scenario.nx || mu.len() != scenario.ny {
            return Err(Error::Dimension("strategy length does not match settings".into()));
        }
        if lambda.iter().any(|&a| a >= scenario.na) || mu.iter().any(|&b| b >= scenario.nb) {
            return Err(Error::Invalid("strategy outcome out of range".into()));
        }
        Self::from_fn(scenario, |x, y, a, b| {
            if lambda[x] == a && mu[y] == b {
                1.0
            } else {
                0.0
            }
        })
    }

    pub fn uniform(scenario: BellScenario) -> Self {
        let v = 1.0 / (scenario.na * scenario.nb) as f64;
        Self {
            scenario,
            p: vec![v; scenario.len()],
        }
    }

    /// The PR box: `a ⊕ b = x·y`.
    pub fn pr_box() -> Self {
        let s = BellScenario { nx: 2, ny: 2, na: 2, nb: 2 };
        Self::from_fn(s, |x, y, a, b| if (a ^ b) == (x & y) { 0.5 } else { 0.0 })
            .expect("PR box is a valid table")
    }

    pub fn scenario(&self) -> &BellScenario {
        &self.scenario
    }

    #[inline]
    pub fn p(&self, x: usize, y: usize, a: usize, b: usize) -> f64 {
        self.p[self.scenario.index(x, y, a, b)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    /// `Σ_b P(a,b|x,y)` averaged over `y`.
    pub fn marginal_a(&self, a: usize, x: usize) -> f64 {
        let s = &self.scenario;
        let total: f64 = (0..s.ny)
            .map(|y| (0..s.nb).map(|b| self.p(x, y, a, b)).sum::<f64>())
            .sum();
        total / s.ny as f64
    }

    /// `Σ_a P(a,b|x,y)` averaged over `x`.
    pub fn marginal_b(&self, b: usize, y: usize) -> f64 {
        let s = &self.scenario;
        let total: f64 = (0..s.nx)
            .map(|x| (0..s.na).map(|a| self.p(x, y, a, b)).sum::<f64>())
            .sum();
        total / s.nx as f64
    }

    /// Largest deviation of either party's marginals across the other
    /// party's settings.
    pub fn signaling_defect(&self) -> f64 {
        let s = &self.scenario;
        let mut worst = 0.0f64;
        for x in 0..s.nx {
            for a in 0..s.na {
                let m: Vec<f64> = (0..s.ny)
                    .map(|y| (0..s.nb).map(|b| self.p(x, y, a, b)).sum())
                    .collect();
                worst = worst.max(spread(&m));
            }
        }
        for y in 0..s.ny {
            for b in 0..s.nb {
                let m: Vec<f64> = (0..s.nx)
                    .map(|x| (0..s.na).map(|a| self.p(x, y, a, b)).sum())
                    .collect();
                worst = worst.max(spread(&m));
            }
        }
        worst
    }

    /// `E_xy = Σ_{a,b} (−1)^{a+b} P(a,b|x,y)`.
    pub fn correlator(&self, x: usize, y: usize) -> Result<f64> {
        if !self.scenario.is_binary() {
            return Err(Error::Invalid("correlators need binary outcomes on both sides".into()));
        }
        if x >= self.scenario.nx || y >= self.scenario.ny {
            return Err(Error::Invalid(format!("setting ({x}, {y}) out of range")));
        }
        Ok(self.p(x, y, 0, 0) - self.p(x, y, 0, 1) - self.p(x, y, 1, 0) + self.p(x, y, 1, 1))
    }

    /// `α·self + (1−α)·other`.
    pub fn mix(&self, other: &CorrelationTable, alpha: f64) -> Result<Self> {
        if self.scenario != other.scenario {
            return Err(Error::Dimension("mixing tables of different scenarios".into()));
        }
        let p = self
            .p
            .iter()
            .zip(&other.p)
            .map(|(u, v)| alpha * u + (1.0 - alpha) * v)
            .collect();
        Self::new(self.scenario, p)
    }

    /// `p'(b,a|y,x) = p(a,b|x,y)`.
    pub fn swapped(&self) -> Self {
        let s = self.scenario;
        let t = s.swapped();
        let mut p = vec![0.0; t.len()];
        for x in 0..s.nx {
            for y in 0..s.ny {
                for a in 0..s.na {
                    for b in 0..s.nb {
                        p[t.index(y, x, b, a)] = self.p(x, y, a, b);
                    }
                }
            }
        }
        Self { scenario: t, p }
    }

    pub fn max_abs_diff(&self, other: &CorrelationTable) -> f64 {
        if self.scenario != other.scenario {
            return f64::INFINITY;
        }
        self.p
            .iter()
            .zip(&other.p)
            .fold(0.0, |m, (u, v)| m.max((u - v).abs()))
    }
}

fn spread(v: &[f64]) -> f64 {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if v.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

fn nested_shape(p: &[Vec<Vec<Vec<f64>>>]) -> Result<BellScenario> {
    let nx = p.len();
    let ny = p.first().map_or(0, |v| v.len());
    let na = p.first().and_then(|v| v.first()).map_or(0, |v| v.len());
    let nb = p
        .first()
        .and_then(|v| v.first())
        .and_then(|v| v.first())
        .map_or(0, |v| v.len());
    let scenario = BellScenario::new(nx, ny, na, nb)?;
    for (x, px) in p.iter().enumerate() {
        if px.len() != ny {
            return Err(Error::Dimension(format!("p[{x}] has {} settings, expected {ny}", px.len())));
        }
        for (y, pxy) in px.iter().enumerate() {
            if pxy.len() != na {
                return Err(Error::Dimension(format!("p[{x}][{y}] has {} outcomes, expected {na}", pxy.len())));
            }
            for (a, row) in pxy.iter().enumerate() {
                if row.len() != nb {
                    return Err(Error::Dimension(format!(
                        "p[{x}][{y}][{a}] has {} outcomes, expected {nb}",
                        row.len()
                    )));
                }
            }
        }
    }
    Ok(scenario)
}

/// `Σ β^{xy}_{ab} P(a,b|x,y) ≤ L`.
#[derive(Clone, Debug, PartialEq)]
pub struct BellFunctional {
    pub name: String,
    scenario: BellScenario,
    beta: Vec<f64>,
    pub local_bound: f64,
}

impl BellFunctional {
    pub fn new(name: impl Into<String>, scenario: BellScenario, beta: Vec<f64>, local_bound: f64) -> Result<Self> {
        if beta.len() != scenario.len() {
            return Err(Error::Dimension(format!(
                "functional has {} coefficients, scenario needs {}",
                beta.len(),
                scenario.len()
            )));
        }
        if beta.iter().any(|v| !v.is_finite()) || !local_bound.is_finite() {
            return Err(Error::Invalid("non-finite functional coefficient".into()));
        }
        Ok(Self {
            name: name.into(),
            scenario,
            beta,
            local_bound,
        })
    }

    pub fn from_fn(
        name: impl Into<String>,
        scenario: BellScenario,
        local_bound: f64,
        f: impl Fn(usize, usize, usize, usize) -> f64,
    ) -> Self {
        let mut beta = vec![0.0; scenario.len()];
        for x in 0..scenario.nx {
            for y in 0..scenario.ny {
                for a in 0..scenario.na {
                    for b in 0..scenario.nb {
                        beta[scenario.index(x, y, a, b)] = f(x, y, a, b);
                    }
                }
            }
        }
        Self {
            name: name.into(),
            scenario,
            beta,
            local_bound,
        }
    }

    /// Correlator-form functional `Σ s_xy E_xy` on binary outcomes.
    pub fn from_correlators(name: impl Into<String>, signs: &[Vec<f64>], local_bound: f64) -> Result<Self> {
        let nx = signs.len();
        let ny = signs.first().map_or(0, |r| r.len());
        if signs.iter().any(|r| r.len() != ny) {
            return Err(Error::Dimension("ragged correlator coefficient matrix".into()));
        }
        let scenario = BellScenario::new(nx, ny, 2, 2)?;
        Ok(Self::from_fn(name, scenario, local_bound, |x, y, a, b| {
            let sign = if (a + b) % 2 == 0 { 1.0 } else { -1.0 };
            signs[x][y] * sign
        }))
    }

    pub fn scenario(&self) -> &BellScenario {
        &self.scenario
    }

    #[inline]
    pub fn beta(&self, x: usize, y: usize, a: usize, b: usize) -> f64 {
        self.beta[self.scenario.index(x, y, a, b)]
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.beta
    }

    pub fn evaluate(&self, table: &CorrelationTable) -> Result<f64> {
        if table.scenario() != &self.scenario {
            return Err(Error::Dimension(format!(
                "functional '{}' is defined on {:?}, table on {:?}",
                self.name,
                self.scenario,
                table.scenario()
            )));
        }
        Ok(self.beta.iter().zip(table.as_slice()).map(|(b, p)| b * p).sum())
    }

    /// `β'^{yx}_{ba} = β^{xy}_{ab}`.
    pub fn swapped(&self) -> Self {
        let s = self.scenario;
        Self::from_fn(format!("{}-swapped", self.name), s.swapped(), self.local_bound, |y, x, b, a| {
            self.beta(x, y, a, b)
        })
    }

    /// Maximum over all deterministic product tables, by enumeration.
    pub fn local_bound_enumerated(&self, cap: usize) -> Result<f64> {
        let s = &self.scenario;
        let alice = enumerate_responses(s.nx, s.na, cap)?;
        let bob = enumerate_responses(s.ny, s.nb, cap)?;
        let mut best = f64::NEG_INFINITY;
        for la in &alice {
            for mb in &bob {
                let mut v = 0.0;
                for x in 0..s.nx {
                    for y in 0..s.ny {
                        v += self.beta(x, y, la.lambda[x], mb.lambda[y]);
                    }
                }
                best = best.max(v);
            }
        }
        Ok(best)
    }

    /// Deterministic product table attaining [`Self::local_bound_enumerated`].
    pub fn optimal_local_table(&self, cap: usize) -> Result<CorrelationTable> {
        let s = self.scenario;
        let alice = enumerate_responses(s.nx, s.na, cap)?;
        let bob = enumerate_responses(s.ny, s.nb, cap)?;
        let mut best = (f64::NEG_INFINITY, 0, 0);
        for (i, la) in alice.iter().enumerate() {
            for (j, mb) in bob.iter().enumerate() {
                let mut v = 0.0;
                for x in 0..s.nx {
                    for y in 0..s.ny {
                        v += self.beta(x, y, la.lambda[x], mb.lambda[y]);
                    }
                }
                if v > best.0 {
                    best = (v, i, j);
                }
            }
        }
        CorrelationTable::deterministic(s, &alice[best.1].lambda, &bob[best.2].lambda)
    }

    /// `max |β|` summed over settings: an upper bound on the functional over
    /// any table.
    pub fn algebraic_bound(&self) -> f64 {
        let s = &self.scenario;
        let mut total = 0.0;
        for x in 0..s.nx {
            for y in 0..s.ny {
                let mut m = f64::NEG_INFINITY;
                for a in 0..s.na {
                    for b in 0..s.nb {
                        m = m.max(self.beta(x, y, a, b));
                    }
                }
                total += m;
            }
        }
        total
    }

    /// Minimum of the functional over all tables (per-setting minima).
    pub fn algebraic_lower_bound(&self) -> f64 {
        let s = &self.scenario;
        let mut total = 0.0;
        for x in 0..s.nx {
            for y in 0..s.ny {
                let mut m = f64::INFINITY;
                for a in 0..s.na {
                    for b in 0..s.nb {
                        m = m.min(self.beta(x, y, a, b));
                    }
                }
                total += m;
            }
        }
        total
    }
}

/// Names accepted by [`builtin_functional`].
pub const BUILTIN_FUNCTIONALS: [&str; 5] = ["chsh", "elegant", "i3322", "i2233", "i3plus"];

/// Named Bell functionals.
///
/// * `chsh`: `E₁₁ + E₁₂ + E₂₁ − E₂₂ ≤ 2`.
/// * `elegant`: the twelve-correlator inequality
///   `E₁₁+E₁₂+E₁₃+E₂₁−E₂₂−E₂₃−E₃₁+E₃₂−E₃₃−E₄₁−E₄₂+E₄₃ ≤ 6`.
/// * `i3322`: Collins–Gisin form on outcome 0,
///   `−2P_A(0|1) − P_A(0|2) − P_B(0|1) + Σ J_xy P(00|xy) ≤ 0` with
///   `J = [[1,1,1],[1,1,−1],[1,−1,0]]`.
/// * `i2233`: `(I_CGLMP − 2)/3 ≤ 0` for the three-outcome CGLMP expression.
/// * `i3plus`: the three-outcome CHSH game, `β = 1` iff `a + b ≡ x·y (mod 3)`,
///   local bound 6.
pub fn builtin_functional(name: &str) -> Result<BellFunctional> {
    match name {
        "chsh" => BellFunctional::from_correlators("chsh", &[vec![1.0, 1.0], vec![1.0, -1.0]], 2.0),
        "elegant" => BellFunctional::from_correlators(
            "elegant",
            &[
                vec![1.0, 1.0, 1.0],
                vec![1.0, -1.0, -1.0],
                vec![-1.0, 1.0, -1.0],
                vec![-1.0, -1.0, 1.0],
            ],
            6.0,
        ),
        "i3322" => Ok(i3322()),
        "i2233" => Ok(i2233()),
        "i3plus" => Ok(i3plus()),
        other => Err(Error::UnknownName(other.to_string())),
    }
}

fn i3322() -> BellFunctional {
    let s = BellScenario { nx: 3, ny: 3, na: 2, nb: 2 };
    let joint = [[1.0, 1.0, 1.0], [1.0, 1.0, -1.0], [1.0, -1.0, 0.0]];
    let alice = [-2.0, -1.0, 0.0];
    let bob = [-1.0, 0.0, 0.0];
    // Marginal terms are spread evenly over the other party's settings.
    BellFunctional::from_fn("i3322", s, 0.0, |x, y, a, b| {
        let mut v = 0.0;
        if a == 0 && b == 0 {
            v += joint[x][y];
        }
        if a == 0 {
            v += alice[x] / s.ny as f64;
        }
        if b == 0 {
            v += bob[y] / s.nx as f64;
        }
        v
    })
}

fn i2233() -> BellFunctional {
    let s = BellScenario { nx: 2, ny: 2, na: 3, nb: 3 };
    let d = 3;
    // The constant −2/3 is folded in using Σ_{a,b} P(a,b|x,y) = 1.
    let shift = -2.0 / 3.0 / (s.nx * s.ny) as f64;
    BellFunctional::from_fn("i2233", s, 0.0, move |x, y, a, b| {
        let plus = |k: usize| if (b + d - a) % d == k % d { 1.0 } else { 0.0 };
        let minus_one = |k: usize| if (a + d - b) % d == k % d { 1.0 } else { 0.0 };
        let v = match (x, y) {
            // P(A1 = B1) − P(A1 = B1 − 1)
            (0, 0) => plus(0) - plus(1),
            // P(B2 = A1) − P(B2 = A1 − 1)
            (0, 1) => plus(0) - minus_one(1),
            // P(B1 = A2 + 1) − P(B1 = A2)
            (1, 0) => plus(1) - plus(0),
            // P(A2 = B2) − P(A2 = B2 − 1)
            _ => plus(0) - plus(1),
        };
        v / 3.0 + shift
    })
}

fn i3plus() -> BellFunctional {
    let s = BellScenario { nx: 3, ny: 3, na: 3, nb: 3 };
    BellFunctional::from_fn("i3plus", s, 6.0, |x, y, a, b| {
        if (a + b) % 3 == (x * y) % 3 {
            1.0
        } else {
            0.0
        }
    })
}

/// Wire form of [`BellScenario`].
pub type ScenarioJson = BellScenario;

/// Wire form of [`CorrelationTable`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TableJson {
    #[serde(default)]
    pub schema_version: Option<u32>,
    pub scenario: Option<BellScenario>,
    pub p: Vec<Vec<Vec<Vec<f64>>>>,
}

impl TableJson {
    pub fn from_table(t: &CorrelationTable) -> Self {
        Self {
            schema_version: Some(crate::SCHEMA_VERSION),
            scenario: Some(*t.scenario()),
            p: t.to_nested(),
        }
    }

    pub fn into_table(self) -> Result<CorrelationTable> {
        let table = CorrelationTable::from_nested(&self.p)?;
        if let Some(s) = self.scenario {
            if &s != table.scenario() {
                return Err(Error::Dimension(format!(
                    "declared scenario {s:?} does not match table shape {:?}",
                    table.scenario()
                )));
            }
        }
        Ok(table)
    }
}

/// Wire form of [`BellFunctional`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FunctionalJson {
    #[serde(default)]
    pub schema_version: Option<u32>,
    pub name: String,
    pub scenario: BellScenario,
    pub beta: Vec<Vec<Vec<Vec<f64>>>>,
    pub local_bound: f64,
}

impl FunctionalJson {
    pub fn from_functional(f: &BellFunctional) -> Self {
        let s = *f.scenario();
        let beta = (0..s.nx)
            .map(|x| {
                (0..s.ny)
                    .map(|y| {
                        (0..s.na)
                            .map(|a| (0..s.nb).map(|b| f.beta(x, y, a, b)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self {
            schema_version: Some(crate::SCHEMA_VERSION),
            name: f.name.clone(),
            scenario: s,
            beta,
            local_bound: f.local_bound,
        }
    }

    pub fn into_functional(self) -> Result<BellFunctional> {
        let shape = nested_shape(&self.beta)?;
        if shape != self.scenario {
            return Err(Error::Dimension(format!(
                "declared scenario {:?} does not match coefficient shape {shape:?}",
                self.scenario
            )));
        }
        let s = self.scenario;
        let beta = &self.beta;
        let f = BellFunctional::from_fn(self.name.clone(), s, self.local_bound, |x, y, a, b| beta[x][y][a][b]);
        BellFunctional::new(f.name.clone(), s, f.coefficients().to_vec(), self.local_bound)
    }
}
