//! Measurement incompatibility: robustness SDP, steering-equivalent
//! observables, the Busch criterion and the IR/SR chain.
//!
//! The robustness program substitutes `G_λ = (1+t)·G'_λ` for a joint POVM
//! `G'_λ` of the mixed assemblage `(M_{a|x} + t N_{a|x})/(1+t)`. Then
//! `t N_{a|x} = Σ_λ D(a|x,λ) G_λ − M_{a|x} ⪰ 0` and `Σ_λ G_λ = (1+t)·I`, so
//! `t = tr(Σ_λ G_λ)/d − 1` is minimized over `G_λ ⪰ 0` with
//! `Σ_λ D(a|x,λ) G_λ ⪰ M_{a|x}` and `Σ_λ G_λ` proportional to the identity.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::conic::{self, AffineExpr, ConicProgram};
use crate::error::{Error, Result};
use crate::matlin::{c64, eig_hermitian, min_eigenvalue, pinv_sqrt, HermitianMatrix};
use crate::programs::{
    add_lhs_constraints, assemblage_digest_value, inputs_digest, sr_assemblage, HermExpr, LhsDirection, Quantity,
    RobustnessReport, TrustedOptions, REAL_DATA_TOL,
};
use crate::quantum::{fixtures, steer, DensityMatrix, MeasurementAssemblage, Povm, StateAssemblage};
use crate::scenario::enumerate_responses;

/// Slack for the Busch inequality and bias checks.
pub const BUSCH_TOL: f64 = 1e-12;

/// Slack used by [`verify_chain`] when asserting the ordering.
pub const CHAIN_SLACK: f64 = 1e-6;

/// Binary qubit observable with `O_+ = ((1+α)·I + r·σ)/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QubitBinaryObservable {
    pub alpha: f64,
    pub r: [f64; 3],
}

impl QubitBinaryObservable {
    /// Checks `‖r‖ ≤ 1 − |α|`, which makes both effects PSD.
    pub fn new(alpha: f64, r: [f64; 3]) -> Result<Self> {
        let o = Self { alpha, r };
        if !alpha.is_finite() || r.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("observable has non-finite entries".into()));
        }
        let excess = o.norm() - (1.0 - alpha.abs());
        if excess > BUSCH_TOL {
            return Err(Error::NotPsd(-excess));
        }
        Ok(o)
    }

    pub fn unbiased(r: [f64; 3]) -> Result<Self> {
        Self::new(0.0, r)
    }

    pub fn norm(&self) -> f64 {
        self.r.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `O_+`.
    pub fn plus(&self) -> HermitianMatrix {
        fixtures::bloch_operator((1.0 + self.alpha) / 2.0, self.r.map(|v| v / 2.0))
    }

    /// `{O_+, O_−}`.
    pub fn povm(&self) -> Result<Povm> {
        let plus = self.plus();
        let minus = HermitianMatrix::identity(2).sub(&plus);
        Povm::new(vec![plus, minus])
    }
}

/// Measurement assemblage of binary qubit observables.
pub fn observables_assemblage(obs: &[QubitBinaryObservable]) -> Result<MeasurementAssemblage> {
    MeasurementAssemblage::new(obs.iter().map(|o| o.povm()).collect::<Result<Vec<_>>>()?)
}

fn add3(a: [f64; 3], b: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

fn norm3(a: [f64; 3]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Left side of the Busch inequality `‖r₁ + r₂‖ + ‖r₁ − r₂‖`.
pub fn busch_lhs(r1: [f64; 3], r2: [f64; 3]) -> f64 {
    norm3(add3(r1, r2, 1.0)) + norm3(add3(r1, r2, -1.0))
}

/// Joint measurability of two unbiased qubit observables:
/// `‖r₁ + r₂‖ + ‖r₁ − r₂‖ ≤ 2`.
pub fn busch_jm(o1: &QubitBinaryObservable, o2: &QubitBinaryObservable) -> Result<bool> {
    if o1.alpha != 0.0 || o2.alpha != 0.0 {
        return Err(Error::Invalid(
            "the Busch criterion is decisive only for unbiased observables".into(),
        ));
    }
    Ok(busch_lhs(o1.r, o2.r) <= 2.0 + BUSCH_TOL)
}

/// Closed-form IR of the qubit X/Z pair with its optimal noise.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BuschCertificate {
    /// `(√2 − 1)² = 3 − 2√2`.
    pub value: f64,
    pub r1: [f64; 3],
    pub r2: [f64; 3],
    /// Optimal noise directions `q₁ = −r₁`, `q₂ = −r₂`.
    pub q1: [f64; 3],
    pub q2: [f64; 3],
    /// `(‖r₁+r₂+t(q₁+q₂)‖ + ‖r₁−r₂+t(q₁−q₂)‖)/(1+t)` at `t = value`.
    pub lhs_at_value: f64,
}

/// Mixed-noise Busch left side `(‖r₁+r₂+t(q₁+q₂)‖ + ‖r₁−r₂+t(q₁−q₂)‖)/(1+t)`.
pub fn busch_mixed_lhs(r1: [f64; 3], r2: [f64; 3], q1: [f64; 3], q2: [f64; 3], t: f64) -> f64 {
    let plus = add3(add3(r1, r2, 1.0), add3(q1, q2, 1.0), t);
    let minus = add3(add3(r1, r2, -1.0), add3(q1, q2, -1.0), t);
    (norm3(plus) + norm3(minus)) / (1.0 + t)
}

pub fn busch_ir_mub() -> BuschCertificate {
    let r1 = fixtures::X;
    let r2 = fixtures::Z;
    let q1 = r1.map(|v| -v);
    let q2 = r2.map(|v| -v);
    // With q = −r the left side is 2√2(1−t)/(1+t); equality with 2 gives
    // t = (√2−1)/(√2+1) = (√2−1)².
    let value = 3.0 - 2.0 * std::f64::consts::SQRT_2;
    BuschCertificate {
        value,
        r1,
        r2,
        q1,
        q2,
        lhs_at_value: busch_mixed_lhs(r1, r2, q1, q2, value),
    }
}

fn measurement_digest(tag: &str, m: &MeasurementAssemblage, opts: &TrustedOptions) -> String {
    let elements = m.povms().iter().map(|p| p.elements().to_vec());
    inputs_digest(&serde_json::json!({
        "program": tag,
        "measurements": assemblage_digest_value(elements),
        "solver": opts.solver,
    }))
}

/// Incompatibility robustness via the program in the module docs.
pub fn ir(m: &MeasurementAssemblage, opts: &TrustedOptions) -> Result<RobustnessReport> {
    let started = Instant::now();
    let strategies = enumerate_responses(m.n_settings(), m.n_outcomes(), opts.strategy_cap)?;
    let d = m.dim();
    let complex = !m.povms().iter().flat_map(|p| p.elements()).all(|e| e.is_real(REAL_DATA_TOL));
    let targets: Vec<Vec<HermExpr>> = (0..m.n_settings())
        .map(|x| {
            (0..m.n_outcomes())
                .map(|a| HermExpr::constant(m.element(a, x), complex))
                .collect()
        })
        .collect();
    let mut prog = ConicProgram::new();
    let gs = add_lhs_constraints(&mut prog, &targets, &strategies, LhsDirection::Dominate);
    let mut total = HermExpr::zeros(d, complex);
    for g in &gs {
        total.add_scaled(g, 1.0);
    }
    for i in 0..d {
        for j in 0..i {
            prog.add_equality(total.re[i][j].clone());
            if complex {
                prog.add_equality(total.im[i][j].clone());
            }
        }
        if i > 0 {
            prog.add_equality(total.re[i][i].clone() - total.re[0][0].clone());
        }
    }
    prog.minimize(total.trace().scaled(1.0 / d as f64) - AffineExpr::constant(1.0));
    let sol = conic::solve(&prog, &opts.solver);
    Ok(RobustnessReport::from_solution(
        Quantity::Ir,
        sol.objective_value,
        None,
        &sol,
        &prog,
        started,
        measurement_digest("ir", m, opts),
    ))
}

/// Steering-equivalent observables `Π (ρ_B)^{−1/2} ρ_{a|x} (ρ_B)^{−1/2} Π`
/// written in an orthonormal basis of `range(ρ_B)`.
pub fn se_observables(asm: &StateAssemblage, rank_tol: f64) -> Result<MeasurementAssemblage> {
    let rho_b = asm.reduced_state();
    let inv = pinv_sqrt(&rho_b, Some(rank_tol))?;
    let eig = eig_hermitian(&rho_b)?;
    let d = rho_b.dim();
    let lmax = eig.values.iter().cloned().fold(0.0f64, f64::max);
    let range: Vec<usize> = (0..d).filter(|&k| eig.values[k] > rank_tol * lmax).collect();
    if range.len() != inv.rank {
        return Err(Error::Invalid("rank of the reduced state is ambiguous at this tolerance".into()));
    }
    let r = range.len();
    let v = faer::Mat::<c64>::from_fn(d, r, |i, k| eig.vectors[(i, range[k])]);
    let sandwich = v.adjoint() * inv.result.as_mat();
    let mut povms = Vec::with_capacity(asm.n_settings());
    for x in 0..asm.n_settings() {
        let elements = (0..asm.n_outcomes())
            .map(|a| {
                let e = &(&sandwich * asm.get(a, x).as_mat()) * sandwich.adjoint();
                let h = HermitianMatrix::hermitize(e.as_ref());
                let lmin = min_eigenvalue(&h)?;
                if lmin < -rank_tol {
                    return Err(Error::NotPsd(lmin));
                }
                Ok(h)
            })
            .collect::<Result<Vec<_>>>()?;
        povms.push(Povm::new(elements)?);
    }
    MeasurementAssemblage::new(povms)
}

/// The three quantities of the chain `IR(A) ≥ IR(B̃) ≥ SR`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainReport {
    pub ir_alice: RobustnessReport,
    pub ir_se: RobustnessReport,
    pub sr: RobustnessReport,
    /// `IR(A) − IR(B̃)`.
    pub gap_alice_se: f64,
    /// `IR(B̃) − SR`.
    pub gap_se_sr: f64,
    /// Both gaps are at least `−CHAIN_SLACK`.
    pub ordered: bool,
}

/// Computes `IR(A)`, `IR(B̃)` and `SR` for the assemblage Alice's
/// measurements steer from `state`; solves run on separate threads when
/// `concurrent`.
pub fn verify_chain(
    state: &DensityMatrix,
    alice: &MeasurementAssemblage,
    opts: &TrustedOptions,
    concurrent: bool,
) -> Result<ChainReport> {
    let asm = steer(state, alice)?;
    let se = se_observables(&asm, crate::matlin::DEFAULT_RANK_TOL)?;
    let (ir_alice, ir_se, sr) = if concurrent {
        std::thread::scope(|s| {
            let h1 = s.spawn(|| ir(alice, opts));
            let h2 = s.spawn(|| ir(&se, opts));
            let h3 = s.spawn(|| sr_assemblage(&asm, opts));
            (
                h1.join().expect("IR solve panicked"),
                h2.join().expect("IR solve panicked"),
                h3.join().expect("SR solve panicked"),
            )
        })
    } else {
        (ir(alice, opts), ir(&se, opts), sr_assemblage(&asm, opts))
    };
    let (ir_alice, ir_se, sr) = (ir_alice?, ir_se?, sr?);
    let gap_alice_se = ir_alice.value - ir_se.value;
    let gap_se_sr = ir_se.value - sr.value;
    Ok(ChainReport {
        ordered: gap_alice_se >= -CHAIN_SLACK && gap_se_sr >= -CHAIN_SLACK,
        ir_alice,
        ir_se,
        sr,
        gap_alice_se,
        gap_se_sr,
    })
}
