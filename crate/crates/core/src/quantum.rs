//! States, POVMs, assemblages and the maps between them.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matlin::{
    c, c64, eig_hermitian, hermitian_defect, kron, min_eigenvalue, orthonormal_complement, ComplexMatrix,
    HermitianMatrix,
};
use crate::scenario::{BellScenario, CorrelationTable};

/// PSD and trace tolerance for states.
pub const STATE_TOL: f64 = 1e-10;
/// Completeness tolerance for POVMs.
pub const POVM_SUM_TOL: f64 = 1e-9;
/// Reduced-state consistency tolerance for assemblages.
pub const ASSEMBLAGE_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct DensityMatrix {
    mat: HermitianMatrix,
    dims: (usize, usize),
}

impl DensityMatrix {
    /// Bipartite state on `C^{d_A} ⊗ C^{d_B}`.
    pub fn new(mat: HermitianMatrix, dims: (usize, usize)) -> Result<Self> {
        if dims.0 * dims.1 != mat.dim() {
            return Err(Error::Dimension(format!(
                "state of dimension {} declared as {}x{}",
                mat.dim(),
                dims.0,
                dims.1
            )));
        }
        let tr = mat.trace();
        if (tr - 1.0).abs() > STATE_TOL {
            return Err(Error::Invalid(format!("state has trace {tr}")));
        }
        let lmin = min_eigenvalue(&mat)?;
        if lmin < -STATE_TOL {
            return Err(Error::NotPsd(lmin));
        }
        Ok(Self { mat, dims })
    }

    /// Single-system state.
    pub fn single(mat: HermitianMatrix) -> Result<Self> {
        let d = mat.dim();
        Self::new(mat, (1, d))
    }

    pub fn pure(v: &[c64], dims: (usize, usize)) -> Result<Self> {
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Invalid("zero state vector".into()));
        }
        let v: Vec<c64> = v.iter().map(|z| z / norm).collect();
        Self::new(HermitianMatrix::outer(&v), dims)
    }

    pub fn product(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<Self> {
        let m = kron(a.as_mat(), b.as_mat());
        Self::new(HermitianMatrix::hermitize(m.as_ref()), (a.dim(), b.dim()))
    }

    pub fn mat(&self) -> &HermitianMatrix {
        &self.mat
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    /// `p·self + (1−p)·other`.
    pub fn mix(&self, other: &DensityMatrix, p: f64) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::Dimension("mixing states of different dimensions".into()));
        }
        Self::new(self.mat.scale(p).add(&other.mat.scale(1.0 - p)), self.dims)
    }
}

#[derive(Clone, Debug)]
pub struct Povm {
    elements: Vec<HermitianMatrix>,
}

impl Povm {
    pub fn new(elements: Vec<HermitianMatrix>) -> Result<Self> {
        let Some(first) = elements.first() else {
            return Err(Error::Invalid("POVM needs at least one element".into()));
        };
        let d = first.dim();
        let mut sum = HermitianMatrix::zeros(d);
        for (k, e) in elements.iter().enumerate() {
            if e.dim() != d {
                return Err(Error::Dimension(format!("POVM element {k} has dimension {}, expected {d}", e.dim())));
            }
            let l = min_eigenvalue(e)?;
            if l < -STATE_TOL {
                return Err(Error::NotPsd(l));
            }
            sum = sum.add(e);
        }
        let dev = sum.max_abs_diff(&HermitianMatrix::identity(d));
        if dev > POVM_SUM_TOL {
            return Err(Error::Invalid(format!("POVM elements sum to identity only within {dev:.3e}")));
        }
        Ok(Self { elements })
    }

    /// Projective measurement from an orthonormal basis given as columns.
    pub fn from_basis(u: &ComplexMatrix) -> Result<Self> {
        let elements = (0..u.ncols())
            .map(|k| {
                let v: Vec<c64> = (0..u.nrows()).map(|i| u[(i, k)]).collect();
                HermitianMatrix::outer(&v)
            })
            .collect();
        Self::new(elements)
    }

    pub fn elements(&self) -> &[HermitianMatrix] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    /// Largest violation of `E² = E` and `E_i E_j = 0`.
    pub fn projectivity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, ei) in self.elements.iter().enumerate() {
            for (j, ej) in self.elements.iter().enumerate() {
                let prod = ei.as_mat() * ej.as_mat();
                let target = if i == j { ei.as_mat().to_owned() } else { Mat::zeros(ei.dim(), ei.dim()) };
                worst = worst.max(crate::matlin::max_abs_diff(prod.as_ref(), target.as_ref()));
            }
        }
        worst
    }

    pub fn is_projective(&self, tol: f64) -> bool {
        self.projectivity_defect() <= tol
    }
}

/// One POVM per setting, all on the same space and with the same number of
/// outcomes.
#[derive(Clone, Debug)]
pub struct MeasurementAssemblage {
    povms: Vec<Povm>,
}

impl MeasurementAssemblage {
    pub fn new(povms: Vec<Povm>) -> Result<Self> {
        let Some(first) = povms.first() else {
            return Err(Error::Invalid("measurement assemblage needs at least one setting".into()));
        };
        let (d, n) = (first.dim(), first.len());
        for (x, p) in povms.iter().enumerate() {
            if p.dim() != d {
                return Err(Error::Dimension(format!("setting {x} acts on dimension {}, expected {d}", p.dim())));
            }
            if p.len() != n {
                return Err(Error::Dimension(format!("setting {x} has {} outcomes, expected {n}", p.len())));
            }
        }
        Ok(Self { povms })
    }

    pub fn povms(&self) -> &[Povm] {
        &self.povms
    }

    pub fn n_settings(&self) -> usize {
        self.povms.len()
    }

    pub fn n_outcomes(&self) -> usize {
        self.povms[0].len()
    }

    pub fn dim(&self) -> usize {
        self.povms[0].dim()
    }

    /// `M_{a|x}`.
    pub fn element(&self, a: usize, x: usize) -> &HermitianMatrix {
        &self.povms[x].elements[a]
    }

    pub fn is_projective(&self, tol: f64) -> bool {
        self.povms.iter().all(|p| p.is_projective(tol))
    }

    /// `{U M U†}`.
    pub fn conjugate_by(&self, u: &ComplexMatrix) -> Result<Self> {
        let povms = self
            .povms
            .iter()
            .map(|p| Povm::new(p.elements.iter().map(|e| e.conjugate_by(u.as_ref())).collect()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(povms)
    }

    /// Complex conjugate of every element (transpose, for Hermitian input).
    pub fn transposed(&self) -> Self {
        let povms = self
            .povms
            .iter()
            .map(|p| Povm {
                elements: p.elements.iter().map(transpose).collect(),
            })
            .collect();
        Self { povms }
    }
}

fn transpose(m: &HermitianMatrix) -> HermitianMatrix {
    let n = m.dim();
    let t = Mat::from_fn(n, n, |i, j| m.get(j, i));
    HermitianMatrix::hermitize(t.as_ref())
}

/// Subnormalized conditional states `ρ_{a|x}` on Bob's side.
#[derive(Clone, Debug)]
pub struct StateAssemblage {
    /// Indexed `[x][a]`.
    states: Vec<Vec<HermitianMatrix>>,
}

impl StateAssemblage {
    /// Validates PSD, normalization and reduced-state consistency.
    pub fn new(states_xa: Vec<Vec<HermitianMatrix>>) -> Result<Self> {
        let asm = Self::from_parts(states_xa)?;
        let report = validate_assemblage(&asm, ASSEMBLAGE_TOL);
        if let Some(v) = report.violations.first() {
            return Err(Error::Invalid(format!("invalid assemblage: {v}")));
        }
        Ok(asm)
    }

    /// Checks only shapes.
    pub fn from_parts(states_xa: Vec<Vec<HermitianMatrix>>) -> Result<Self> {
        let nx = states_xa.len();
        if nx == 0 || states_xa[0].is_empty() {
            return Err(Error::Invalid("assemblage needs at least one setting and outcome".into()));
        }
        let na = states_xa[0].len();
        let d = states_xa[0][0].dim();
        for (x, row) in states_xa.iter().enumerate() {
            if row.len() != na {
                return Err(Error::Dimension(format!("setting {x} has {} outcomes, expected {na}", row.len())));
            }
            if let Some(bad) = row.iter().find(|m| m.dim() != d) {
                return Err(Error::Dimension(format!("state of dimension {} in setting {x}, expected {d}", bad.dim())));
            }
        }
        Ok(Self { states: states_xa })
    }

    pub fn n_settings(&self) -> usize {
        self.states.len()
    }

    pub fn n_outcomes(&self) -> usize {
        self.states[0].len()
    }

    pub fn dim(&self) -> usize {
        self.states[0][0].dim()
    }

    /// `ρ_{a|x}`.
    pub fn get(&self, a: usize, x: usize) -> &HermitianMatrix {
        &self.states[x][a]
    }

    /// `Σ_a ρ_{a|x}`.
    pub fn reduced(&self, x: usize) -> HermitianMatrix {
        self.states[x]
            .iter()
            .fold(HermitianMatrix::zeros(self.dim()), |acc, m| acc.add(m))
    }

    /// Average over settings of `Σ_a ρ_{a|x}`.
    pub fn reduced_state(&self) -> HermitianMatrix {
        let nx = self.n_settings();
        (0..nx)
            .fold(HermitianMatrix::zeros(self.dim()), |acc, x| acc.add(&self.reduced(x)))
            .scale(1.0 / nx as f64)
    }

    /// True when every element has negligible imaginary part.
    pub fn is_real(&self, tol: f64) -> bool {
        self.states.iter().flatten().all(|m| m.is_real(tol))
    }

    /// `p·self + (1−p)·other`.
    pub fn mix(&self, other: &StateAssemblage, p: f64) -> Result<Self> {
        if self.n_settings() != other.n_settings() || self.n_outcomes() != other.n_outcomes() || self.dim() != other.dim()
        {
            return Err(Error::Dimension("mixing assemblages of different shapes".into()));
        }
        let states = self
            .states
            .iter()
            .zip(&other.states)
            .map(|(r, s)| r.iter().zip(s).map(|(u, v)| u.scale(p).add(&v.scale(1.0 - p))).collect())
            .collect();
        Ok(Self { states })
    }

    /// `tr(ρ_{a|x} B_{b|y})` table.
    pub fn born_table(&self, bob: &MeasurementAssemblage) -> Result<CorrelationTable> {
        if bob.dim() != self.dim() {
            return Err(Error::Dimension(format!(
                "assemblage dimension {} does not match Bob's measurements on dimension {}",
                self.dim(),
                bob.dim()
            )));
        }
        let s = BellScenario::new(self.n_settings(), bob.n_settings(), self.n_outcomes(), bob.n_outcomes())?;
        let mut p = vec![0.0; s.len()];
        for x in 0..s.nx {
            for y in 0..s.ny {
                for a in 0..s.na {
                    for b in 0..s.nb {
                        p[s.index(x, y, a, b)] = self.get(a, x).trace_product(bob.element(b, y)).max(0.0);
                    }
                }
            }
        }
        CorrelationTable::new(s, p)
    }
}

/// Findings from [`validate_assemblage`].
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct AssemblageReport {
    pub violations: Vec<String>,
    pub min_eigenvalue: f64,
    pub signaling: f64,
    pub trace: f64,
}

impl AssemblageReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_assemblage(asm: &StateAssemblage, tol: f64) -> AssemblageReport {
    let mut report = AssemblageReport {
        min_eigenvalue: f64::INFINITY,
        ..Default::default()
    };
    for x in 0..asm.n_settings() {
        for a in 0..asm.n_outcomes() {
            let m = asm.get(a, x);
            let defect = hermitian_defect(m.as_mat());
            if defect > tol {
                report
                    .violations
                    .push(format!("ρ[a={a}, x={x}] is not Hermitian (defect {defect:.3e})"));
            }
            match min_eigenvalue(m) {
                Ok(l) => {
                    report.min_eigenvalue = report.min_eigenvalue.min(l);
                    if l < -STATE_TOL.max(tol * 0.1) {
                        report
                            .violations
                            .push(format!("ρ[a={a}, x={x}] is not PSD (min eigenvalue {l:.3e})"));
                    }
                }
                Err(e) => report.violations.push(format!("ρ[a={a}, x={x}]: {e}")),
            }
        }
    }
    let r0 = asm.reduced(0);
    for x in 1..asm.n_settings() {
        let d = asm.reduced(x).max_abs_diff(&r0);
        report.signaling = report.signaling.max(d);
    }
    if report.signaling > tol {
        report.violations.push(format!(
            "reduced states differ across settings by {:.3e} (signaling)",
            report.signaling
        ));
    }
    report.trace = r0.trace();
    if (report.trace - 1.0).abs() > tol {
        report
            .violations
            .push(format!("reduced state has trace {} instead of 1", report.trace));
    }
    report
}

fn check_bipartite(state: &DensityMatrix, da: usize, db: Option<usize>) -> Result<()> {
    let (sa, sb) = state.dims();
    if sa != da || db.is_some_and(|d| d != sb) {
        return Err(Error::Dimension(format!(
            "state is {sa}x{sb}, measurements act on {da}x{}",
            db.map_or("?".to_string(), |d| d.to_string())
        )));
    }
    Ok(())
}

/// `ρ_{a|x} = tr_A[(A_{a|x} ⊗ 1) ρ_AB]`.
pub fn steer(state: &DensityMatrix, alice: &MeasurementAssemblage) -> Result<StateAssemblage> {
    let (da, db) = state.dims();
    check_bipartite(state, alice.dim(), None)?;
    let rho = state.mat().as_mat();
    let states = alice
        .povms()
        .iter()
        .map(|povm| {
            povm.elements()
                .iter()
                .map(|e| {
                    let m = Mat::from_fn(db, db, |k, l| {
                        let mut acc = c(0.0, 0.0);
                        for i in 0..da {
                            for j in 0..da {
                                acc += e.get(i, j) * rho[(j * db + k, i * db + l)];
                            }
                        }
                        acc
                    });
                    HermitianMatrix::hermitize(m.as_ref())
                })
                .collect()
        })
        .collect();
    StateAssemblage::from_parts(states)
}

/// `P(a,b|x,y) = tr[(A_{a|x} ⊗ B_{b|y}) ρ_AB]`.
pub fn born_table(state: &DensityMatrix, alice: &MeasurementAssemblage, bob: &MeasurementAssemblage) -> Result<CorrelationTable> {
    check_bipartite(state, alice.dim(), Some(bob.dim()))?;
    steer(state, alice)?.born_table(bob)
}

/// Neumark dilation of a measurement assemblage.
#[derive(Clone, Debug)]
pub struct NeumarkDilation {
    /// Projective measurements on `C^n`, one projector per original outcome.
    pub assemblage: MeasurementAssemblage,
    /// Rank-1 projectors per setting, grouped by original outcome.
    pub refined: Vec<Vec<Vec<HermitianMatrix>>>,
    pub input_dim: usize,
    pub dim: usize,
}

impl NeumarkDilation {
    /// `ρ ⊕ 0` on `C^n`.
    pub fn embed(&self, rho: &HermitianMatrix) -> Result<HermitianMatrix> {
        embed_operator(rho, self.dim)
    }
}

/// Zero-pads an operator on `C^d` to `C^n`.
pub fn embed_operator(rho: &HermitianMatrix, n: usize) -> Result<HermitianMatrix> {
    let d = rho.dim();
    if n < d {
        return Err(Error::Dimension(format!("cannot embed dimension {d} into {n}")));
    }
    let m = Mat::from_fn(n, n, |i, j| if i < d && j < d { rho.get(i, j) } else { c(0.0, 0.0) });
    Ok(HermitianMatrix::hermitize(m.as_ref()))
}

/// Rank threshold for POVM refinement.
const REFINE_TOL: f64 = 1e-12;

pub fn neumark_dilate(bob: &MeasurementAssemblage) -> Result<NeumarkDilation> {
    let d = bob.dim();
    // Rank-1 refinement: E_a = Σ_k w_{a,k} w_{a,k}†.
    let mut refinements: Vec<Vec<(usize, Vec<c64>)>> = Vec::with_capacity(bob.n_settings());
    for povm in bob.povms() {
        let mut vecs = Vec::new();
        for (a, e) in povm.elements().iter().enumerate() {
            let eig = eig_hermitian(e)?;
            let scale = eig.values.iter().fold(0.0f64, |m, &l| m.max(l.abs())).max(1.0);
            for (k, &l) in eig.values.iter().enumerate() {
                if l > REFINE_TOL * scale {
                    let s = l.sqrt();
                    vecs.push((a, (0..d).map(|i| eig.vectors[(i, k)] * s).collect()));
                }
            }
        }
        refinements.push(vecs);
    }
    let n = refinements.iter().map(|r| r.len()).max().unwrap_or(d).max(d);
    let na = bob.n_outcomes();
    let mut povms = Vec::with_capacity(bob.n_settings());
    let mut refined_all = Vec::with_capacity(bob.n_settings());
    for vecs in &refinements {
        // Isometry V: row j is w_j†; padding rows are zero.
        let v = Mat::from_fn(n, d, |j, i| if j < vecs.len() { vecs[j].1[i].conj() } else { c(0.0, 0.0) });
        let gram = v.adjoint() * &v;
        let defect = crate::matlin::max_abs_diff(gram.as_ref(), HermitianMatrix::identity(d).as_mat());
        if defect > 1e-9 {
            return Err(Error::Invalid(format!("refined POVM does not give an isometry (defect {defect:.3e})")));
        }
        let comp = orthonormal_complement(v.as_ref(), 1e-10);
        if comp.ncols() != n - d {
            return Err(Error::Invalid("isometry completion is numerically singular".into()));
        }
        let u = Mat::from_fn(n, n, |i, j| if j < d { v[(i, j)] } else { comp[(i, j - d)] });
        let mut refined: Vec<Vec<HermitianMatrix>> = vec![Vec::new(); na];
        for j in 0..n {
            let row: Vec<c64> = (0..n).map(|k| u[(j, k)].conj()).collect();
            // Null padding vectors join the last outcome.
            let a = if j < vecs.len() { vecs[j].0 } else { na - 1 };
            refined[a].push(HermitianMatrix::outer(&row));
        }
        let grouped = refined
            .iter()
            .map(|ps| ps.iter().fold(HermitianMatrix::zeros(n), |acc, p| acc.add(p)))
            .collect();
        povms.push(Povm::new(grouped)?);
        refined_all.push(refined);
    }
    Ok(NeumarkDilation {
        assemblage: MeasurementAssemblage::new(povms)?,
        refined: refined_all,
        input_dim: d,
        dim: n,
    })
}

pub mod fixtures {
    //! Named states and measurements.

    use super::*;

    pub fn pauli(k: usize) -> ComplexMatrix {
        let z = c(0.0, 0.0);
        let o = c(1.0, 0.0);
        match k {
            0 => Mat::from_fn(2, 2, |i, j| if i == j { o } else { z }),
            1 => Mat::from_fn(2, 2, |i, j| if i != j { o } else { z }),
            2 => Mat::from_fn(2, 2, |i, j| match (i, j) {
                (0, 1) => c(0.0, -1.0),
                (1, 0) => c(0.0, 1.0),
                _ => z,
            }),
            3 => Mat::from_fn(2, 2, |i, j| match (i, j) {
                (0, 0) => o,
                (1, 1) => -o,
                _ => z,
            }),
            _ => panic!("Pauli index {k} out of range"),
        }
    }

    /// `(α·I + r·σ)` as a Hermitian matrix.
    pub fn bloch_operator(alpha: f64, r: [f64; 3]) -> HermitianMatrix {
        let m = Mat::from_fn(2, 2, |i, j| {
            pauli(0)[(i, j)] * alpha + pauli(1)[(i, j)] * r[0] + pauli(2)[(i, j)] * r[1] + pauli(3)[(i, j)] * r[2]
        });
        HermitianMatrix::hermitize(m.as_ref())
    }

    /// `{(I + r·σ)/2, (I − r·σ)/2}`; projective for unit `r`.
    pub fn qubit_measurement(r: [f64; 3]) -> Result<Povm> {
        Povm::new(vec![
            bloch_operator(0.5, [r[0] / 2.0, r[1] / 2.0, r[2] / 2.0]),
            bloch_operator(0.5, [-r[0] / 2.0, -r[1] / 2.0, -r[2] / 2.0]),
        ])
    }

    pub fn qubit_measurements(dirs: &[[f64; 3]]) -> Result<MeasurementAssemblage> {
        MeasurementAssemblage::new(dirs.iter().map(|&r| qubit_measurement(r)).collect::<Result<Vec<_>>>()?)
    }

    /// `|Φ⁺⟩ = Σ_j |jj⟩/√d`.
    pub fn phi_plus(d: usize) -> DensityMatrix {
        let s = 1.0 / (d as f64).sqrt();
        let v: Vec<c64> = (0..d * d)
            .map(|k| if k / d == k % d { c(s, 0.0) } else { c(0.0, 0.0) })
            .collect();
        DensityMatrix::pure(&v, (d, d)).expect("maximally entangled state is valid")
    }

    pub fn maximally_mixed(da: usize, db: usize) -> DensityMatrix {
        DensityMatrix::new(HermitianMatrix::identity(da * db).scale(1.0 / (da * db) as f64), (da, db))
            .expect("maximally mixed state is valid")
    }

    pub const X: [f64; 3] = [1.0, 0.0, 0.0];
    pub const Y: [f64; 3] = [0.0, 1.0, 0.0];
    pub const Z: [f64; 3] = [0.0, 0.0, 1.0];

    /// Regular tetrahedron directions `(±1, ±1, ±1)/√3` with an even number
    /// of minus signs.
    pub fn tetrahedron_directions() -> [[f64; 3]; 4] {
        let s = 1.0 / 3f64.sqrt();
        [[s, s, s], [s, -s, -s], [-s, s, -s], [-s, -s, s]]
    }

    /// Qutrit basis `k`: computational for `None`, otherwise vectors
    /// `ω^{k j² + a j}/√3`.
    pub fn qutrit_basis(k: Option<usize>) -> ComplexMatrix {
        match k {
            None => HermitianMatrix::identity(3).into_mat(),
            Some(k) => {
                let s = 1.0 / 3f64.sqrt();
                Mat::from_fn(3, 3, |j, a| {
                    let phase = 2.0 * std::f64::consts::PI * ((k * j * j + a * j) % 3) as f64 / 3.0;
                    c(phase.cos() * s, phase.sin() * s)
                })
            }
        }
    }

    /// Named measurement assemblages.
    pub fn measurement(name: &str) -> Result<MeasurementAssemblage> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match name {
            "mub-pair" | "xz" => qubit_measurements(&[X, Z]),
            "zx" => qubit_measurements(&[Z, X]),
            "mub-triple" | "xyz" => qubit_measurements(&[X, Y, Z]),
            "tetrahedron" => qubit_measurements(&tetrahedron_directions()),
            "chsh-alice" => qubit_measurements(&[Z, X]),
            "chsh-bob" => qubit_measurements(&[[h, 0.0, h], [-h, 0.0, h]]),
            // With |Φ⁺⟩ the correlation matrix is diag(1, −1, 1); Alice's
            // directions are that reflection applied to the sign rows.
            "elegant-alice" => {
                let s = 1.0 / 3f64.sqrt();
                qubit_measurements(&[[s, -s, s], [s, s, -s], [-s, -s, -s], [-s, s, s]])
            }
            "elegant-bob" => qubit_measurements(&[X, Y, Z]),
            "qutrit-mubs" => MeasurementAssemblage::new(vec![
                Povm::from_basis(&qutrit_basis(None))?,
                Povm::from_basis(&qutrit_basis(Some(0)))?,
                Povm::from_basis(&qutrit_basis(Some(1)))?,
            ]),
            "qutrit-mub-pair" => MeasurementAssemblage::new(vec![
                Povm::from_basis(&qutrit_basis(None))?,
                Povm::from_basis(&qutrit_basis(Some(0)))?,
            ]),
            "trine" => {
                let povm = trine()?;
                MeasurementAssemblage::new(vec![povm])
            }
            other => Err(Error::UnknownName(other.to_string())),
        }
    }

    /// Qubit trine POVM `{(2/3)|ψ_k⟩⟨ψ_k|}` with Bloch vectors 120° apart.
    pub fn trine() -> Result<Povm> {
        let els = (0..3)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
                bloch_operator(1.0 / 3.0, [t.sin() / 3.0, 0.0, t.cos() / 3.0])
            })
            .collect();
        Povm::new(els)
    }

    pub const MEASUREMENT_NAMES: [&str; 12] = [
        "mub-pair",
        "xz",
        "zx",
        "mub-triple",
        "xyz",
        "tetrahedron",
        "chsh-alice",
        "chsh-bob",
        "elegant-alice",
        "elegant-bob",
        "qutrit-mubs",
        "qutrit-mub-pair",
    ];

    /// Named states: `phi-plus-d<d>`, `mixed-d<d>`.
    pub fn state(name: &str) -> Result<DensityMatrix> {
        let parse = |p: &str| -> Result<usize> {
            name.strip_prefix(p)
                .and_then(|s| s.parse().ok())
                .filter(|&d| (1..=16).contains(&d))
                .ok_or_else(|| Error::UnknownName(name.to_string()))
        };
        if name.starts_with("phi-plus-d") {
            Ok(phi_plus(parse("phi-plus-d")?))
        } else if name.starts_with("mixed-d") {
            let d = parse("mixed-d")?;
            Ok(maximally_mixed(d, d))
        } else {
            Err(Error::UnknownName(name.to_string()))
        }
    }
}

/// JSON form of a complex matrix: rows of `[re, im]` pairs.
pub type MatrixJson = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_json(m: &HermitianMatrix) -> MatrixJson {
    (0..m.dim())
        .map(|i| (0..m.dim()).map(|j| [m.get(i, j).re, m.get(i, j).im]).collect())
        .collect()
}

pub fn matrix_from_json(rows: &MatrixJson) -> Result<HermitianMatrix> {
    let n = rows.len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(Error::Dimension(format!("matrix row {i} has {} entries, expected {n}", r.len())));
    }
    let m = Mat::from_fn(n, n, |i, j| c(rows[i][j][0], rows[i][j][1]));
    HermitianMatrix::new(m, 1e-9)
}

/// JSON form of a state: `{dims: [dA, dB], matrix}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateJson {
    #[serde(default)]
    pub schema_version: Option<u32>,
    pub dims: [usize; 2],
    pub matrix: MatrixJson,
}

impl StateJson {
    pub fn into_state(self) -> Result<DensityMatrix> {
        DensityMatrix::new(matrix_from_json(&self.matrix)?, (self.dims[0], self.dims[1]))
    }

    pub fn from_state(s: &DensityMatrix) -> Self {
        Self {
            schema_version: Some(crate::SCHEMA_VERSION),
            dims: [s.dims().0, s.dims().1],
            matrix: matrix_to_json(s.mat()),
        }
    }
}

/// JSON form of a measurement assemblage: `povms[x][a]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeasurementsJson {
    #[serde(default)]
    pub schema_version: Option<u32>,
    pub povms: Vec<Vec<MatrixJson>>,
}

impl MeasurementsJson {
    pub fn into_assemblage(self) -> Result<MeasurementAssemblage> {
        let povms = self
            .povms
            .iter()
            .map(|els| Povm::new(els.iter().map(matrix_from_json).collect::<Result<Vec<_>>>()?))
            .collect::<Result<Vec<_>>>()?;
        MeasurementAssemblage::new(povms)
    }

    pub fn from_assemblage(m: &MeasurementAssemblage) -> Self {
        Self {
            schema_version: Some(crate::SCHEMA_VERSION),
            povms: m
                .povms()
                .iter()
                .map(|p| p.elements().iter().map(matrix_to_json).collect())
                .collect(),
        }
    }
}

/// JSON form of a state assemblage: `states[a][x]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssemblageJson {
    #[serde(default)]
    pub schema_version: Option<u32>,
    pub dim: usize,
    pub states: Vec<Vec<MatrixJson>>,
}

impl AssemblageJson {
    pub fn into_assemblage(self) -> Result<StateAssemblage> {
        let na = self.states.len();
        let nx = self.states.first().map_or(0, |r| r.len());
        if self.states.iter().any(|r| r.len() != nx) {
            return Err(Error::Dimension("ragged states[a][x] array".into()));
        }
        let mut xa = Vec::with_capacity(nx);
        for x in 0..nx {
            let mut row = Vec::with_capacity(na);
            for a in 0..na {
                let m = matrix_from_json(&self.states[a][x])?;
                if m.dim() != self.dim {
                    return Err(Error::Dimension(format!(
                        "states[{a}][{x}] has dimension {}, declared {}",
                        m.dim(),
                        self.dim
                    )));
                }
                row.push(m);
            }
            xa.push(row);
        }
        StateAssemblage::new(xa)
    }

    pub fn from_assemblage(s: &StateAssemblage) -> Self {
        Self {
            schema_version: Some(crate::SCHEMA_VERSION),
            dim: s.dim(),
            states: (0..s.n_outcomes())
                .map(|a| (0..s.n_settings()).map(|x| matrix_to_json(s.get(a, x))).collect())
                .collect(),
        }
    }
}
