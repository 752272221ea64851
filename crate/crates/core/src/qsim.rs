//! Sparse statevector simulation of the parallel-query model.
//!
//! A basis configuration is a `u128` with every register packed at a fixed
//! offset. Only the nonzero amplitudes are stored, in a `BTreeMap`, so that
//! iteration order (and therefore sampling) is deterministic.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::DepthLedger;
use crate::oracle::{OracleAccess, OracleError, OracleParams, ShuffledValue};

/// Amplitudes with modulus below this are dropped.
pub const PRUNE_EPS: f64 = 1e-12;
/// Norm tolerance for states and ensemble weights.
pub const NORM_TOL: f64 = 1e-9;
/// Widest layout [`SparseState::dense_statevector`] will expand.
pub const DENSE_CAP_BITS: usize = 20;
/// Default cap on the number of pure components in a distance computation.
pub const DEFAULT_DISTANCE_CAP: usize = 1 << 12;
/// Gram eigenvalues below this fraction of the largest are treated as zero.
const GRAM_RANK_TOL: f64 = 1e-12;

const MAX_LAYOUT_BITS: usize = 128;
const MAX_REGISTER_BITS: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QsimError {
    #[error("layout: {0}")]
    Layout(String),
    #[error("register {name} is {width} bits, expected {expected}")]
    RegisterWidth {
        name: String,
        width: usize,
        expected: usize,
    },
    #[error("query spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("dense expansion needs {0} bits, cap is {DENSE_CAP_BITS}")]
    DenseTooWide(usize),
    #[error("{components} components exceed the distance cap {cap}")]
    DistanceCap { components: usize, cap: usize },
    #[error("ensemble: {0}")]
    Ensemble(String),
    #[error("states have different layouts")]
    LayoutMismatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegId(pub usize);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Register {
    pub name: String,
    pub width: usize,
    pub offset: usize,
}

/// Named registers packed low to high in declaration order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterLayout {
    regs: Vec<Register>,
    total: usize,
}

impl RegisterLayout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, width: usize) -> Result<RegId, QsimError> {
        if width == 0 || width > MAX_REGISTER_BITS {
            return Err(QsimError::Layout(format!("register {name} has width {width}")));
        }
        if self.regs.iter().any(|r| r.name == name) {
            return Err(QsimError::Layout(format!("duplicate register {name}")));
        }
        if self.total + width > MAX_LAYOUT_BITS {
            return Err(QsimError::Layout(format!(
                "layout would need {} bits, limit {MAX_LAYOUT_BITS}",
                self.total + width
            )));
        }
        self.regs.push(Register {
            name: name.to_string(),
            width,
            offset: self.total,
        });
        self.total += width;
        Ok(RegId(self.regs.len() - 1))
    }

    pub fn total_bits(&self) -> usize {
        self.total
    }

    pub fn registers(&self) -> &[Register] {
        &self.regs
    }

    pub fn reg(&self, id: RegId) -> &Register {
        &self.regs[id.0]
    }

    pub fn find(&self, name: &str) -> Option<RegId> {
        self.regs.iter().position(|r| r.name == name).map(RegId)
    }

    #[inline]
    pub fn get(&self, cfg: u128, id: RegId) -> u64 {
        let r = &self.regs[id.0];
        ((cfg >> r.offset) & reg_mask(r.width)) as u64
    }

    #[inline]
    pub fn set(&self, cfg: u128, id: RegId, value: u64) -> u128 {
        let r = &self.regs[id.0];
        let m = reg_mask(r.width) << r.offset;
        (cfg & !m) | (((value as u128) << r.offset) & m)
    }

    /// Concatenation: `other`'s registers land above ours.
    pub fn concat(&self, other: &RegisterLayout) -> Result<RegisterLayout, QsimError> {
        let mut out = self.clone();
        for r in &other.regs {
            out.add(&r.name, r.width)?;
        }
        Ok(out)
    }
}

#[inline]
fn reg_mask(width: usize) -> u128 {
    (1u128 << width) - 1
}

/// One parallel query: `target ^= f_level(input)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySlot {
    pub level: usize,
    pub input: RegId,
    pub target: RegId,
}

/// Width of an answer register at `level`: value bits plus the `⊥` flag.
pub fn answer_register_width(params: OracleParams, level: usize) -> usize {
    params.answer_bits(level) + 1
}

/// Reversible encoding of an oracle answer; `⊥` is the flag with zero value.
pub fn encode_answer(params: OracleParams, level: usize, v: ShuffledValue) -> u64 {
    match v {
        ShuffledValue::Value(x) => x,
        ShuffledValue::Bot => 1u64 << params.answer_bits(level),
    }
}

/// Reads an input register as an oracle argument. Anything with bits at or
/// above the domain width (a raised `⊥` flag included) is a `⊥` input.
pub fn decode_input(params: OracleParams, raw: u64) -> Option<u64> {
    let bits = params.domain_bits();
    (bits >= 64 || raw >> bits == 0).then_some(raw)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparseState {
    layout: RegisterLayout,
    amps: BTreeMap<u128, Complex64>,
}

#[derive(Serialize, Deserialize)]
struct DumpEntry {
    config: String,
    re: f64,
    im: f64,
}

impl SparseState {
    /// `|cfg⟩`.
    pub fn basis(layout: RegisterLayout, cfg: u128) -> Self {
        let mut amps = BTreeMap::new();
        amps.insert(cfg, Complex64::new(1.0, 0.0));
        Self { layout, amps }
    }

    /// Uniform superposition over the low `bits` bits of `reg`, zero elsewhere.
    pub fn init_uniform(layout: RegisterLayout, reg: RegId, bits: usize) -> Result<Self, QsimError> {
        let r = layout.reg(reg);
        if bits > r.width || bits > 30 {
            return Err(QsimError::Layout(format!(
                "cannot spread {bits} bits over register {}",
                r.name
            )));
        }
        let a = Complex64::new(((1u64 << bits) as f64).sqrt().recip(), 0.0);
        let amps = (0..1u64 << bits).map(|x| (layout.set(0, reg, x), a)).collect();
        Ok(Self { layout, amps })
    }

    pub fn from_amplitudes(layout: RegisterLayout, entries: impl IntoIterator<Item = (u128, Complex64)>) -> Self {
        let mut amps = BTreeMap::new();
        for (k, a) in entries {
            *amps.entry(k).or_insert(Complex64::new(0.0, 0.0)) += a;
        }
        let mut s = Self { layout, amps };
        s.prune();
        s
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &BTreeMap<u128, Complex64> {
        &self.amps
    }

    pub fn support_len(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitude(&self, cfg: u128) -> Complex64 {
        self.amps.get(&cfg).copied().unwrap_or_default()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }

    fn prune(&mut self) {
        self.amps.retain(|_, a| a.norm() >= PRUNE_EPS);
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &SparseState) -> Result<Complex64, QsimError> {
        if self.layout.total_bits() != other.layout.total_bits() {
            return Err(QsimError::LayoutMismatch);
        }
        let (small, big, flip) = if self.amps.len() <= other.amps.len() {
            (self, other, false)
        } else {
            (other, self, true)
        };
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, a) in &small.amps {
            if let Some(b) = big.amps.get(k) {
                acc += if flip { b.conj() * a } else { a.conj() * b };
            }
        }
        Ok(acc)
    }

    /// `self ⊗ other`, with `other`'s registers above ours.
    pub fn tensor(&self, other: &SparseState) -> Result<SparseState, QsimError> {
        let layout = self.layout.concat(&other.layout)?;
        let shift = self.layout.total_bits();
        let mut amps = BTreeMap::new();
        for (ka, a) in &self.amps {
            for (kb, b) in &other.amps {
                amps.insert(ka | (kb << shift), a * b);
            }
        }
        let mut s = SparseState { layout, amps };
        s.prune();
        Ok(s)
    }

    /// Checks a query spec against the layout and oracle widths.
    pub fn validate_spec(&self, params: OracleParams, slots: &[QuerySlot]) -> Result<(), QsimError> {
        for (i, s) in slots.iter().enumerate() {
            if s.level > params.d {
                return Err(OracleError::LevelOutOfRange {
                    level: s.level,
                    d: params.d,
                }
                .into());
            }
            for id in [s.input, s.target] {
                if id.0 >= self.layout.regs.len() {
                    return Err(QsimError::Spec(format!("unknown register {}", id.0)));
                }
            }
            let t = self.layout.reg(s.target);
            let expected = answer_register_width(params, s.level);
            if t.width != expected {
                return Err(QsimError::RegisterWidth {
                    name: t.name.clone(),
                    width: t.width,
                    expected,
                });
            }
            if s.input == s.target {
                return Err(QsimError::Spec(format!("slot {i} reads its own target")));
            }
            if slots[..i].iter().any(|o| o.target == s.target) {
                return Err(QsimError::Spec(format!("overlapping target register {}", t.name)));
            }
        }
        // Inputs may read other slots' targets (values are taken before any
        // write) as long as the dependencies do not loop.
        for start in 0..slots.len() {
            let mut cur = start;
            for _ in 0..=slots.len() {
                match slots.iter().position(|o| o.target == slots[cur].input) {
                    Some(p) if p == start => return Err(QsimError::Spec("cyclic query dependencies".into())),
                    Some(p) => cur = p,
                    None => break,
                }
            }
        }
        Ok(())
    }

    /// One parallel oracle layer. Returns the number of branch-level answers
    /// served from `f_d^*` on `S_d`, and charges one layer to `ledger`.
    pub fn apply_oracle_xor(
        &mut self,
        oracle: &dyn OracleAccess,
        slots: &[QuerySlot],
        ledger: &mut DepthLedger,
    ) -> Result<u64, QsimError> {
        let hits = self.apply_oracle_xor_unmetered(oracle, slots)?;
        ledger.record_oracle_layer(hits);
        Ok(hits)
    }

    /// [`Self::apply_oracle_xor`] without the ledger charge.
    pub fn apply_oracle_xor_unmetered(
        &mut self,
        oracle: &dyn OracleAccess,
        slots: &[QuerySlot],
    ) -> Result<u64, QsimError> {
        let params = oracle.params();
        self.validate_spec(params, slots)?;
        let mut hits = 0;
        let mut out = BTreeMap::new();
        let mut answers = Vec::with_capacity(slots.len());
        for (&cfg, &a) in &self.amps {
            answers.clear();
            for s in slots {
                let ans = match decode_input(params, self.layout.get(cfg, s.input)) {
                    Some(x) => oracle.query(s.level, x)?,
                    None => ShuffledValue::Bot,
                };
                if s.level == params.d && !ans.is_bot() {
                    hits += 1;
                }
                answers.push(encode_answer(params, s.level, ans));
            }
            let mut next = cfg;
            for (s, &v) in slots.iter().zip(&answers) {
                let t = self.layout.get(next, s.target);
                next = self.layout.set(next, s.target, t ^ v);
            }
            out.insert(next, a);
        }
        self.amps = out;
        Ok(hits)
    }

    /// Born-rule distribution of `reg`, keyed by outcome.
    pub fn outcome_probabilities(&self, reg: RegId) -> BTreeMap<u64, f64> {
        let mut probs = BTreeMap::new();
        for (&k, a) in &self.amps {
            *probs.entry(self.layout.get(k, reg)).or_insert(0.0) += a.norm_sqr();
        }
        probs
    }

    /// Projective measurement of `reg`; collapses and renormalizes.
    pub fn measure<R: Rng + ?Sized>(&mut self, reg: RegId, rng: &mut R) -> u64 {
        let probs = self.outcome_probabilities(reg);
        let total: f64 = probs.values().sum();
        let mut r = rng.gen::<f64>() * total;
        let mut outcome = *probs.keys().next_back().expect("nonempty state");
        for (&v, &p) in &probs {
            if r < p {
                outcome = v;
                break;
            }
            r -= p;
        }
        self.collapse(reg, outcome);
        outcome
    }

    /// Projects onto `reg = value` and renormalizes.
    pub fn collapse(&mut self, reg: RegId, value: u64) {
        let layout = &self.layout;
        self.amps.retain(|&k, _| layout.get(k, reg) == value);
        let norm = self.norm_sqr().sqrt();
        if norm > 0.0 {
            for a in self.amps.values_mut() {
                *a /= norm;
            }
        }
    }

    /// Measures every register at once.
    pub fn measure_all<R: Rng + ?Sized>(&mut self, rng: &mut R) -> u128 {
        let total = self.norm_sqr();
        let mut r = rng.gen::<f64>() * total;
        let mut outcome = *self.amps.keys().next_back().expect("nonempty state");
        for (&k, a) in &self.amps {
            let p = a.norm_sqr();
            if r < p {
                outcome = k;
                break;
            }
            r -= p;
        }
        self.amps.clear();
        self.amps.insert(outcome, Complex64::new(1.0, 0.0));
        outcome
    }

    /// `H^⊗w` on the whole register.
    pub fn hadamard(&mut self, reg: RegId) {
        let r = self.layout.reg(reg).clone();
        for b in r.offset..r.offset + r.width {
            let bit = 1u128 << b;
            let mut out: BTreeMap<u128, Complex64> = BTreeMap::new();
            for (&k, &a) in &self.amps {
                let a = a * FRAC_1_SQRT_2;
                let lo = k & !bit;
                *out.entry(lo).or_default() += a;
                *out.entry(lo | bit).or_default() += if k & bit != 0 { -a } else { a };
            }
            self.amps = out;
            self.prune();
        }
    }

    /// XORs a constant into `reg`.
    pub fn xor_const(&mut self, reg: RegId, value: u64) {
        let layout = &self.layout;
        self.amps = std::mem::take(&mut self.amps)
            .into_iter()
            .map(|(k, a)| (layout.set(k, reg, layout.get(k, reg) ^ value), a))
            .collect();
    }

    pub fn dense_statevector(&self) -> Result<Vec<Complex64>, QsimError> {
        let bits = self.layout.total_bits();
        if bits > DENSE_CAP_BITS {
            return Err(QsimError::DenseTooWide(bits));
        }
        let mut v = vec![Complex64::new(0.0, 0.0); 1 << bits];
        for (&k, &a) in &self.amps {
            v[k as usize] = a;
        }
        Ok(v)
    }

    pub fn from_dense(layout: RegisterLayout, v: &[Complex64]) -> Result<Self, QsimError> {
        if v.len() != 1usize << layout.total_bits() {
            return Err(QsimError::Layout(format!(
                "dense vector of length {} for a {}-bit layout",
                v.len(),
                layout.total_bits()
            )));
        }
        Ok(Self::from_amplitudes(
            layout,
            v.iter().enumerate().map(|(i, &a)| (i as u128, a)),
        ))
    }

    /// JSON list of `{config, re, im}` with hex configurations.
    pub fn dump_json(&self) -> String {
        let entries: Vec<DumpEntry> = self
            .amps
            .iter()
            .map(|(k, a)| DumpEntry {
                config: format!("{k:x}"),
                re: a.re,
                im: a.im,
            })
            .collect();
        serde_json::to_string(&entries).expect("plain data serializes")
    }
}

/// A finite mixture of pure states over one layout.
#[derive(Clone, Debug)]
pub struct MixedEnsemble {
    components: Vec<(f64, SparseState)>,
}

impl MixedEnsemble {
    pub fn new(components: Vec<(f64, SparseState)>) -> Result<Self, QsimError> {
        if components.is_empty() {
            return Err(QsimError::Ensemble("no components".into()));
        }
        let total: f64 = components.iter().map(|(p, _)| p).sum();
        if (total - 1.0).abs() > NORM_TOL || components.iter().any(|(p, _)| *p < 0.0) {
            return Err(QsimError::Ensemble(format!("weights sum to {total}")));
        }
        let bits = components[0].1.layout().total_bits();
        if components.iter().any(|(_, s)| s.layout().total_bits() != bits) {
            return Err(QsimError::LayoutMismatch);
        }
        Ok(Self { components })
    }

    pub fn pure(state: SparseState) -> Self {
        Self {
            components: vec![(1.0, state)],
        }
    }

    /// Equal-weight mixture.
    pub fn uniform(states: Vec<SparseState>) -> Result<Self, QsimError> {
        let w = 1.0 / states.len().max(1) as f64;
        Self::new(states.into_iter().map(|s| (w, s)).collect())
    }

    pub fn components(&self) -> &[(f64, SparseState)] {
        &self.components
    }
}

type CMat = DMatrix<Complex64>;

fn weighted_overlaps(a: &MixedEnsemble, b: &MixedEnsemble) -> Result<CMat, QsimError> {
    let (k, m) = (a.components.len(), b.components.len());
    let mut x = CMat::zeros(k, m);
    for (i, (p, psi)) in a.components.iter().enumerate() {
        for (j, (q, phi)) in b.components.iter().enumerate() {
            x[(i, j)] = psi.inner(phi)? * (p * q).sqrt();
        }
    }
    Ok(x)
}

fn check_cap(a: &MixedEnsemble, b: &MixedEnsemble, cap: usize) -> Result<(), QsimError> {
    let components = a.components.len() + b.components.len();
    if components > cap {
        return Err(QsimError::DistanceCap { components, cap });
    }
    Ok(())
}

/// `F(ρ, σ) = ‖√ρ √σ‖_1`, computed as the trace norm of the weighted overlap
/// matrix between the two decompositions.
pub fn fidelity_capped(a: &MixedEnsemble, b: &MixedEnsemble, cap: usize) -> Result<f64, QsimError> {
    check_cap(a, b, cap)?;
    let x = weighted_overlaps(a, b)?;
    let sv = x.singular_values();
    Ok(sv.iter().sum::<f64>().clamp(0.0, 1.0))
}

pub fn fidelity(a: &MixedEnsemble, b: &MixedEnsemble) -> Result<f64, QsimError> {
    fidelity_capped(a, b, DEFAULT_DISTANCE_CAP)
}

pub fn bures_distance(a: &MixedEnsemble, b: &MixedEnsemble) -> Result<f64, QsimError> {
    let f = fidelity(a, b)?;
    Ok((2.0 - 2.0 * f).max(0.0).sqrt())
}

/// `½ Tr|ρ − σ|`. With `C = [A B]` stacking the weighted components,
/// `ρ − σ = C J C†`, whose nonzero spectrum matches `G^½ J G^½` for the Gram
/// matrix `G = C†C`.
pub fn trace_distance_capped(a: &MixedEnsemble, b: &MixedEnsemble, cap: usize) -> Result<f64, QsimError> {
    check_cap(a, b, cap)?;
    let all: Vec<(f64, &SparseState, f64)> = a
        .components
        .iter()
        .map(|(p, s)| (*p, s, 1.0))
        .chain(b.components.iter().map(|(q, s)| (*q, s, -1.0)))
        .collect();
    let k = all.len();
    let mut g = CMat::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let v = all[i].1.inner(all[j].1)? * (all[i].0 * all[j].0).sqrt();
            g[(i, j)] = v;
            g[(j, i)] = v.conj();
        }
    }
    // Work in the column space of C: with G = V Λ V†, the nonzero spectrum is
    // that of Λ^½ V† J V Λ^½ over the eigenvalues that are not rounding noise.
    let eig = SymmetricEigen::new(g);
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..k)
        .filter(|&i| eig.eigenvalues[i] > GRAM_RANK_TOL * top.max(1.0))
        .collect();
    let r = keep.len();
    let mut w = CMat::zeros(k, r);
    for (c, &i) in keep.iter().enumerate() {
        let scale = Complex64::new(eig.eigenvalues[i].sqrt(), 0.0);
        for row in 0..k {
            w[(row, c)] = eig.eigenvectors[(row, i)] * scale;
        }
    }
    let j = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
        k,
        all.iter().map(|t| Complex64::new(t.2, 0.0)),
    ));
    let mut m = w.adjoint() * j * &w;
    // Symmetrize away rounding before the Hermitian solve.
    m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let spectrum = SymmetricEigen::new(m).eigenvalues;
    Ok((0.5 * spectrum.iter().map(|l| l.abs()).sum::<f64>()).clamp(0.0, 1.0))
}

pub fn trace_distance(a: &MixedEnsemble, b: &MixedEnsemble) -> Result<f64, QsimError> {
    trace_distance_capped(a, b, DEFAULT_DISTANCE_CAP)
}
