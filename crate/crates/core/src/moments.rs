//! Symbolic layout of assemblage moment matrices.
//!
//! Bob's operator alphabet is `{1} ∪ {B_{b|y} : b < |B| − 1}`. A level-ℓ
//! block is indexed by all ℓ-tuples over that alphabet; entry `(i, j)` is
//! `tr(ρ_{a|x} W_j† W_i)` with `W_i` the product of the tuple's operators.
//! Each entry is classified by reducing `rev(w_j)·w_i` with the projector
//! relations `B_{b|y} B_{b'|y} = δ_{bb'} B_{b|y}`.

use std::collections::BTreeMap;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matlin::{c, c64, HermitianMatrix};
use crate::quantum::{MeasurementAssemblage, StateAssemblage};
use crate::scenario::BellScenario;

/// Default cap on the hierarchy level.
pub const DEFAULT_MAX_LEVEL: usize = 6;

/// `B_{b|y}`, 0-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Projector {
    pub setting: usize,
    pub outcome: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OperatorSymbol {
    Identity,
    Projector(Projector),
}

/// Identity-free operator word; the empty word is the identity.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Word(pub Vec<Projector>);

impl Word {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn reversed(&self) -> Word {
        Word(self.0.iter().rev().copied().collect())
    }

    /// The lexicographically smaller of `self` and its reversal.
    pub fn symmetric_key(&self) -> Word {
        let r = self.reversed();
        if r < *self {
            r
        } else {
            self.clone()
        }
    }
}

/// Reduces a product of projectors; `None` is the zero operator.
pub fn canon<I: IntoIterator<Item = Projector>>(symbols: I) -> Option<Word> {
    let mut stack: Vec<Projector> = Vec::new();
    for s in symbols {
        if let Some(top) = stack.last() {
            if top.setting == s.setting {
                if top.outcome == s.outcome {
                    continue;
                }
                return None;
            }
        }
        stack.push(s);
    }
    Some(Word(stack))
}

/// Classification of one moment-matrix entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EntryClass {
    /// `tr ρ_{a|x}`.
    Trace,
    /// `tr(ρ_{a|x} B_{b|y})`.
    Observed { setting: usize, outcome: usize },
    Zero,
    /// Free moment `index`; `conjugate` marks the entry whose reduced word is
    /// the reversal of the stored key.
    Free { index: usize, conjugate: bool },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutOptions {
    pub max_level: usize,
}

impl Default for LayoutOptions {
    fn default() -> Self {
        Self {
            max_level: DEFAULT_MAX_LEVEL,
        }
    }
}

/// Layout of one AMM block, shared by every `(a, x)` block and by the LHS
/// blocks.
#[derive(Clone, Debug)]
pub struct MomentLayout {
    pub level: usize,
    pub n_settings: usize,
    pub n_outcomes: usize,
    /// Row index tuples; extra words are appended verbatim.
    pub rows: Vec<Vec<OperatorSymbol>>,
    /// Canonical word per row, `None` for rows that reduce to zero.
    pub row_words: Vec<Option<Word>>,
    /// Row-major `n × n` classification.
    entries: Vec<EntryClass>,
    /// Key word per free moment.
    pub free_words: Vec<Word>,
}

/// Operator alphabet `{1} ∪ {B_{b|y} : b < nb − 1}` in fixed order.
pub fn alphabet(ny: usize, nb: usize) -> Vec<OperatorSymbol> {
    let mut out = vec![OperatorSymbol::Identity];
    for y in 0..ny {
        for b in 0..nb.saturating_sub(1) {
            out.push(OperatorSymbol::Projector(Projector { setting: y, outcome: b }));
        }
    }
    out
}

fn projectors(tuple: &[OperatorSymbol]) -> impl Iterator<Item = Projector> + '_ {
    tuple.iter().filter_map(|s| match s {
        OperatorSymbol::Identity => None,
        OperatorSymbol::Projector(p) => Some(*p),
    })
}

/// Level-ℓ layout over Bob's operators for `scenario`, with optional extra
/// rows appended after the ℓ-tuples.
pub fn build_layout(
    scenario: &BellScenario,
    level: usize,
    extra_words: &[Vec<Projector>],
    opts: LayoutOptions,
) -> Result<MomentLayout> {
    if level == 0 {
        return Err(Error::Invalid("hierarchy level must be at least 1".into()));
    }
    if level > opts.max_level {
        return Err(Error::CapExceeded {
            what: "hierarchy level",
            count: level,
            cap: opts.max_level,
        });
    }
    let (ny, nb) = (scenario.ny, scenario.nb);
    for w in extra_words {
        if let Some(p) = w.iter().find(|p| p.setting >= ny || p.outcome + 1 >= nb) {
            return Err(Error::Invalid(format!(
                "extra word uses B[b={}, y={}], outside the operator alphabet",
                p.outcome + 1,
                p.setting + 1
            )));
        }
    }
    let alpha = alphabet(ny, nb);
    let mut rows: Vec<Vec<OperatorSymbol>> = vec![Vec::new()];
    for _ in 0..level {
        rows = rows
            .into_iter()
            .flat_map(|r| {
                alpha.iter().map(move |s| {
                    let mut t = r.clone();
                    t.push(*s);
                    t
                })
            })
            .collect();
    }
    rows.extend(
        extra_words
            .iter()
            .map(|w| w.iter().map(|p| OperatorSymbol::Projector(*p)).collect()),
    );
    let row_words: Vec<Option<Word>> = rows.iter().map(|r| canon(projectors(r))).collect();
    let n = rows.len();
    let mut entries = vec![EntryClass::Zero; n * n];
    let mut free_index: BTreeMap<Word, usize> = BTreeMap::new();
    let mut free_words = Vec::new();
    // Classify each distinct pair of canonical row words once.
    let mut cache: BTreeMap<(Word, Word), EntryClass> = BTreeMap::new();
    for i in 0..n {
        for j in 0..n {
            let (Some(wi), Some(wj)) = (&row_words[i], &row_words[j]) else {
                continue;
            };
            let key = (wi.clone(), wj.clone());
            let class = if let Some(cls) = cache.get(&key) {
                *cls
            } else {
                let cls = classify(wj.0.iter().rev().chain(wi.0.iter()).copied(), &mut free_index, &mut free_words);
                cache.insert(key, cls);
                cls
            };
            entries[i * n + j] = class;
        }
    }
    Ok(MomentLayout {
        level,
        n_settings: ny,
        n_outcomes: nb,
        rows,
        row_words,
        entries,
        free_words,
    })
}

fn classify(
    product: impl Iterator<Item = Projector>,
    free_index: &mut BTreeMap<Word, usize>,
    free_words: &mut Vec<Word>,
) -> EntryClass {
    match canon(product) {
        None => EntryClass::Zero,
        Some(w) if w.is_empty() => EntryClass::Trace,
        Some(w) if w.len() == 1 => EntryClass::Observed {
            setting: w.0[0].setting,
            outcome: w.0[0].outcome,
        },
        Some(w) => {
            let key = w.symmetric_key();
            let conjugate = key != w;
            let next = free_words.len();
            let index = *free_index.entry(key.clone()).or_insert_with(|| {
                free_words.push(key);
                next
            });
            EntryClass::Free { index, conjugate }
        }
    }
}

impl MomentLayout {
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn n_free(&self) -> usize {
        self.free_words.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> EntryClass {
        self.entries[i * self.dim() + j]
    }

    /// Indices of one representative row per distinct nonzero canonical
    /// word, in first-occurrence order.
    pub fn distinct_rows(&self) -> Vec<usize> {
        let mut seen = std::collections::HashSet::new();
        (0..self.dim())
            .filter(|&i| match &self.row_words[i] {
                Some(w) => seen.insert(w.clone()),
                None => false,
            })
            .collect()
    }

    /// Layout restricted to [`Self::distinct_rows`]. Repeated and zero rows
    /// only duplicate or pad the moment matrix, so positivity of the full
    /// block is equivalent to positivity of the reduced one.
    pub fn reduced(&self) -> ReducedLayout {
        let rows = self.distinct_rows();
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for &i in &rows {
            for &j in &rows {
                entries.push(self.entry(i, j));
            }
        }
        ReducedLayout {
            words: rows.iter().map(|&i| self.row_words[i].clone().unwrap_or_default()).collect(),
            entries,
            n_free: self.n_free(),
        }
    }

    /// Row operators `W_i` for numeric evaluation.
    fn row_operators(&self, bob: &MeasurementAssemblage) -> Vec<Mat<c64>> {
        let d = bob.dim();
        let id = HermitianMatrix::identity(d).into_mat();
        self.rows
            .iter()
            .map(|tuple| {
                let mut w = id.clone();
                for p in projectors(tuple) {
                    w = &w * bob.element(p.outcome, p.setting).as_mat();
                }
                w
            })
            .collect()
    }

    pub fn to_json(&self) -> LayoutJson {
        let n = self.dim();
        LayoutJson {
            schema_version: crate::SCHEMA_VERSION,
            level: self.level,
            dim: n,
            n_free: self.n_free(),
            rows: self
                .rows
                .iter()
                .map(|t| {
                    t.iter()
                        .map(|s| match s {
                            OperatorSymbol::Identity => "1".to_string(),
                            OperatorSymbol::Projector(p) => format!("B{}|{}", p.outcome + 1, p.setting + 1),
                        })
                        .collect()
                })
                .collect(),
            entries: (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| match self.entry(i, j) {
                            EntryClass::Trace => "tr".to_string(),
                            EntryClass::Zero => "0".to_string(),
                            EntryClass::Observed { setting, outcome } => format!("P{}|{}", outcome + 1, setting + 1),
                            EntryClass::Free { index, conjugate } => {
                                format!("u{}{}", index + 1, if conjugate { "*" } else { "" })
                            }
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

/// Deduplicated block used when assembling programs.
#[derive(Clone, Debug)]
pub struct ReducedLayout {
    pub words: Vec<Word>,
    entries: Vec<EntryClass>,
    pub n_free: usize,
}

impl ReducedLayout {
    pub fn dim(&self) -> usize {
        self.words.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> EntryClass {
        self.entries[i * self.dim() + j]
    }
}

/// Human-readable layout dump; labels are 1-based.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LayoutJson {
    pub schema_version: u32,
    pub level: usize,
    pub dim: usize,
    pub n_free: usize,
    pub rows: Vec<Vec<String>>,
    pub entries: Vec<Vec<String>>,
}

/// Numeric block `χ[ρ_{a|x}]_{ij} = tr(ρ_{a|x} W_j† W_i)`.
pub fn evaluate_block(
    layout: &MomentLayout,
    asm: &StateAssemblage,
    bob: &MeasurementAssemblage,
    a: usize,
    x: usize,
    strict: bool,
) -> Result<HermitianMatrix> {
    if bob.dim() != asm.dim() {
        return Err(Error::Dimension(format!(
            "assemblage on dimension {} but Bob's measurements on {}",
            asm.dim(),
            bob.dim()
        )));
    }
    if bob.n_settings() != layout.n_settings || bob.n_outcomes() != layout.n_outcomes {
        return Err(Error::Dimension("Bob's measurements do not match the layout scenario".into()));
    }
    if strict && !bob.is_projective(1e-9) {
        return Err(Error::Invalid("Bob's measurements are not projective; dilate them first".into()));
    }
    let ops = layout.row_operators(bob);
    let rho = asm.get(a, x).as_mat();
    // ρ W_j† for each j, then entries tr(ρ W_j† W_i) = Σ (W_i)_{kl} (ρ W_j†)_{lk}.
    let rw: Vec<Mat<c64>> = ops.iter().map(|w| rho * w.adjoint()).collect();
    let n = layout.dim();
    let d = asm.dim();
    let m = Mat::from_fn(n, n, |i, j| {
        let mut acc = c(0.0, 0.0);
        for k in 0..d {
            for l in 0..d {
                acc += ops[i][(k, l)] * rw[j][(l, k)];
            }
        }
        acc
    });
    Ok(HermitianMatrix::hermitize(m.as_ref()))
}

/// `(n_blocks, block_dim, n_free)` for one scenario and level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockStats {
    pub n_blocks: usize,
    pub block_dim: usize,
    pub n_free_per_block: usize,
    pub distinct_rows: usize,
}

pub fn block_stats(layout: &MomentLayout, scenario: &BellScenario) -> BlockStats {
    BlockStats {
        n_blocks: scenario.na * scenario.nx,
        block_dim: layout.dim(),
        n_free_per_block: layout.n_free(),
        distinct_rows: layout.distinct_rows().len(),
    }
}

/// Parses words like `"B1|2 B2|1"` (1-based outcome|setting, space separated)
/// into projector lists.
pub fn parse_word(s: &str) -> Result<Vec<Projector>> {
    s.split_whitespace()
        .map(|tok| {
            let body = tok
                .strip_prefix('B')
                .ok_or_else(|| Error::Invalid(format!("word symbol '{tok}' must look like B<b>|<y>")))?;
            let (b, y) = body
                .split_once('|')
                .ok_or_else(|| Error::Invalid(format!("word symbol '{tok}' must look like B<b>|<y>")))?;
            let parse = |v: &str| -> Result<usize> {
                v.parse::<usize>()
                    .ok()
                    .filter(|&k| k >= 1)
                    .ok_or_else(|| Error::Invalid(format!("bad label in word symbol '{tok}'")))
            };
            Ok(Projector {
                setting: parse(y)? - 1,
                outcome: parse(b)? - 1,
            })
        })
        .collect()
}
