//! Seeded invariant checks. Each returns a description of the violation.

use amm::incompat::{ir, verify_chain};
use amm::programs::{di_membership, di_sr, di_sw, di_tsirelson, sr_assemblage, sw_assemblage, DiInput, DiOptions, ReportStatus, RobustnessReport, TrustedOptions};
use amm::quantum::{born_table, neumark_dilate, steer, StateAssemblage};
use amm::scenario::{BellFunctional, BellScenario, CorrelationTable};
use rand::Rng;

use super::*;

pub const SLACK: f64 = 1e-6;

pub type Check = Result<(), String>;

fn solved(r: &RobustnessReport) -> Check {
    match r.status {
        ReportStatus::Optimal | ReportStatus::NearOptimal => Ok(()),
        s => Err(format!("{} solve ended {s:?}", r.quantity.as_str())),
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: amm::Error) -> String {
    e.to_string()
}

/// IR of Alice's measurements bounds the SR of what they steer.
pub fn ir_bounds_sr(seed: u64) -> Check {
    let mut rng = rng(seed);
    let rank = rng.random_range(1..=4);
    let state = random_state(&mut rng, (2, 2), rank);
    let (n, projective) = (rng.random_range(2..=3), rng.random_bool(0.5));
    let alice = random_qubit_observables(&mut rng, n, projective);
    let opts = TrustedOptions::default();
    let i = ir(&alice, &opts).map_err(err)?;
    let s = sr_assemblage(&steer(&state, &alice).map_err(err)?, &opts).map_err(err)?;
    solved(&i)?;
    solved(&s)?;
    ensure(i.value >= s.value - SLACK, || format!("IR {} < SR {}", i.value, s.value))
}

/// `IR(A) ≥ IR(SE) ≥ SR` on random qubit and qutrit instances.
pub fn steering_equivalent_chain(seed: u64) -> Check {
    let mut rng = rng(seed);
    let d = rng.random_range(2..=3);
    let rank = rng.random_range(1..=d * d);
    let state = random_state(&mut rng, (d, d), rank);
    let outcomes = rng.random_range(2..=3);
    let alice = random_measurements(&mut rng, d, 2, outcomes);
    let chain = verify_chain(&state, &alice, &TrustedOptions::default(), false).map_err(err)?;
    solved(&chain.ir_alice)?;
    solved(&chain.ir_se)?;
    solved(&chain.sr)?;
    ensure(chain.ir_alice.value >= chain.ir_se.value - SLACK, || {
        format!("IR(A) {} < IR(SE) {}", chain.ir_alice.value, chain.ir_se.value)
    })?;
    ensure(chain.ir_se.value >= chain.sr.value - SLACK, || {
        format!("IR(SE) {} < SR {}", chain.ir_se.value, chain.sr.value)
    })?;
    ensure(chain.ordered, || "chain report not ordered".into())
}

/// SR and SW vanish on assemblages steered from separable states.
pub fn separable_unsteerable(seed: u64) -> Check {
    let mut rng = rng(seed);
    let d = rng.random_range(2..=3);
    let terms = rng.random_range(1..=4);
    let state = random_separable(&mut rng, (d, d), terms);
    let outcomes = rng.random_range(2..=3);
    let asm = steer(&state, &random_measurements(&mut rng, d, 2, outcomes)).map_err(err)?;
    let opts = TrustedOptions::default();
    let sr = sr_assemblage(&asm, &opts).map_err(err)?;
    let sw = sw_assemblage(&asm, &opts).map_err(err)?;
    solved(&sr)?;
    solved(&sw)?;
    ensure(sr.value.abs() <= SLACK, || format!("SR {}", sr.value))?;
    ensure(sw.value.abs() <= SLACK, || format!("SW {}", sw.value))
}

/// Device-independent SR/SW never exceed the trusted values.
pub fn di_below_trusted(seed: u64) -> Check {
    let mut rng = rng(seed);
    let rank = rng.random_range(1..=2);
    let state = random_state(&mut rng, (2, 2), rank);
    let alice = random_measurements(&mut rng, 2, 2, 2);
    let bob = random_measurements(&mut rng, 2, 2, 2);
    let table = born_table(&state, &alice, &bob).map_err(err)?;
    let asm = steer(&state, &alice).map_err(err)?;
    let trusted = TrustedOptions::default();
    let opts = DiOptions::level(1);
    let dsr = di_sr(DiInput::Table(&table), &opts).map_err(err)?;
    let dsw = di_sw(DiInput::Table(&table), &opts).map_err(err)?;
    let sr = sr_assemblage(&asm, &trusted).map_err(err)?;
    let sw = sw_assemblage(&asm, &trusted).map_err(err)?;
    for r in [&dsr, &dsw, &sr, &sw] {
        solved(r)?;
    }
    ensure(dsr.value <= sr.value + SLACK, || format!("DI-SR {} > SR {}", dsr.value, sr.value))?;
    ensure(dsw.value <= sw.value + SLACK, || format!("DI-SW {} > SW {}", dsw.value, sw.value))
}

/// Tsirelson bounds of random CHSH-scenario functionals at ℓ = 1, 2, 3
/// never increase.
pub fn tsirelson_monotone(seed: u64) -> Check {
    let mut rng = rng(seed);
    let s = BellScenario::new(2, 2, 2, 2).map_err(err)?;
    let beta: Vec<f64> = (0..s.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let local = BellFunctional::new("random", s, beta.clone(), 0.0)
        .and_then(|f| f.local_bound_enumerated(16))
        .map_err(err)?;
    let f = BellFunctional::new("random", s, beta, local).map_err(err)?;
    let mut values = Vec::new();
    for l in 1..=3 {
        let r = di_tsirelson(&f, &DiOptions::level(l)).map_err(err)?;
        solved(&r)?;
        values.push(r.value);
    }
    ensure(values.windows(2).all(|w| w[1] <= w[0] + SLACK), || format!("Tsirelson bounds {values:?}"))
}

/// DI-SR bounds of random quantum tables at ℓ = 1, 2 never decrease.
pub fn di_sr_monotone(seed: u64) -> Check {
    let mut rng = rng(seed);
    let state = random_state(&mut rng, (2, 2), 1);
    let alice = random_qubit_observables(&mut rng, 2, true);
    let bob = random_qubit_observables(&mut rng, 2, true);
    let table = born_table(&state, &alice, &bob).map_err(err)?;
    let mut values = Vec::new();
    for l in 1..=2 {
        let r = di_sr(DiInput::Table(&table), &DiOptions::level(l)).map_err(err)?;
        solved(&r)?;
        values.push(r.value);
    }
    ensure(values[1] >= values[0] - SLACK, || format!("DI-SR bounds {values:?}"))
}

/// Local deterministic tables pass membership at ℓ = 1, 2.
pub fn deterministic_feasible(seed: u64) -> Check {
    let mut rng = rng(seed);
    let (nx, ny) = (rng.random_range(2..=3), rng.random_range(2..=3));
    let na = rng.random_range(2..=3);
    let nb = if ny == 2 { rng.random_range(2..=3) } else { 2 };
    let s = BellScenario::new(nx, ny, na, nb).map_err(err)?;
    let lambda: Vec<usize> = (0..nx).map(|_| rng.random_range(0..na)).collect();
    let mu: Vec<usize> = (0..ny).map(|_| rng.random_range(0..nb)).collect();
    let table = CorrelationTable::deterministic(s, &lambda, &mu).map_err(err)?;
    for level in 1..=2 {
        let r = di_membership(&table, &DiOptions::level(level)).map_err(err)?;
        ensure(r.status == ReportStatus::Feasible, || {
            format!("deterministic table {lambda:?}/{mu:?} in {s:?} is {:?} at level {level}", r.status)
        })?;
    }
    Ok(())
}

/// PR boxes mixed with white noise beyond the Tsirelson visibility fail
/// membership at ℓ = 1.
pub fn noisy_pr_box_infeasible(seed: u64) -> Check {
    let mut rng = rng(seed);
    let visibility = rng.random_range(0.75..=1.0);
    let s = BellScenario::new(2, 2, 2, 2).map_err(err)?;
    let table = CorrelationTable::pr_box()
        .mix(&CorrelationTable::uniform(s), visibility)
        .map_err(err)?;
    let r = di_membership(&table, &DiOptions::level(1)).map_err(err)?;
    ensure(r.status == ReportStatus::Infeasible, || {
        format!("PR box at visibility {visibility} is {:?}", r.status)
    })
}

/// Neumark dilation of Bob's POVMs reproduces every probability and is
/// projective. Returns the largest probability change and projectivity
/// defect.
pub fn neumark_preserves(seed: u64) -> Result<(f64, f64), String> {
    let mut rng = rng(seed);
    let (da, db) = (rng.random_range(2..=3), rng.random_range(2..=3));
    let rank = rng.random_range(1..=da * db);
    let state = random_state(&mut rng, (da, db), rank);
    let (nx, na) = (rng.random_range(1..=3), rng.random_range(2..=3));
    let (ny, nb) = (rng.random_range(1..=3), rng.random_range(2..=4));
    let alice = random_measurements(&mut rng, da, nx, na);
    let bob = random_measurements(&mut rng, db, ny, nb);
    let direct = born_table(&state, &alice, &bob).map_err(err)?;
    let asm = steer(&state, &alice).map_err(err)?;
    let dil = neumark_dilate(&bob).map_err(err)?;
    let embedded = (0..asm.n_settings())
        .map(|x| (0..asm.n_outcomes()).map(|a| dil.embed(asm.get(a, x))).collect())
        .collect::<amm::Result<Vec<Vec<_>>>>()
        .map_err(err)?;
    let dilated = StateAssemblage::from_parts(embedded)
        .and_then(|a| a.born_table(&dil.assemblage))
        .map_err(err)?;
    let diff = direct.max_abs_diff(&dilated);
    let defect = dil
        .assemblage
        .povms()
        .iter()
        .map(|p| p.projectivity_defect())
        .fold(0.0, f64::max);
    Ok((diff, defect))
}
