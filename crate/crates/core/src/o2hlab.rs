//! Hidden sets, shadow oracles, and numerical checks of the one-way-to-hiding
//! and finding-probability bounds.

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{run_trials, ExecMode};
use crate::oracle::{
    sample_shuffling, BackendKind, OracleAccess, OracleError, OracleParams, SampleOptions, ShuffledValue,
    ShufflingOracle,
};
use crate::qsim::{
    answer_register_width, bures_distance, decode_input, MixedEnsemble, QsimError, QuerySlot, RegisterLayout,
    SparseState,
};
use crate::schemes::{wilson_interval, SuccessEstimate};
use crate::simon::{sample_decision_instance, SimonError};
use crate::solver::SolverRegisters;

/// Per-sample comparisons allow this much float slack.
pub const O2H_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum O2hError {
    #[error("hidden sets require materialized oracle")]
    RequiresMaterialized,
    #[error("level {level} out of range 1..={d}")]
    Level { level: usize, d: usize },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Qsim(#[from] QsimError),
    #[error(transparent)]
    Instance(#[from] SimonError),
    #[error("{0}")]
    Probe(String),
}

/// The family `vecS^(ℓ) = (S_ℓ^(ℓ), …, S_d^(ℓ))` for `ℓ = 0..=d`, stored as
/// membership bitmaps over the shuffled domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HiddenSets {
    params: OracleParams,
    /// `family[ℓ][j - ℓ]`; level 0 is the whole domain and is not stored.
    family: Vec<Vec<Vec<bool>>>,
}

impl HiddenSets {
    pub fn params(&self) -> OracleParams {
        self.params
    }

    /// Whether `x ∈ S_j^(ℓ)`. Undefined pairs (`j < ℓ`) contain nothing.
    pub fn contains(&self, ell: usize, j: usize, x: u64) -> bool {
        if j < ell || j > self.params.d {
            return false;
        }
        if ell == 0 {
            return x >> self.params.domain_bits() == 0;
        }
        self.family[ell][j - ell].get(x as usize).copied().unwrap_or(false)
    }

    pub fn size(&self, ell: usize, j: usize) -> usize {
        if j < ell || j > self.params.d {
            return 0;
        }
        if ell == 0 {
            return 1 << self.params.domain_bits();
        }
        self.family[ell][j - ell].iter().filter(|&&b| b).count()
    }

    pub fn members(&self, ell: usize, j: usize) -> Vec<u64> {
        (0..1u64 << self.params.domain_bits())
            .filter(|&x| self.contains(ell, j, x))
            .collect()
    }
}

/// Nested hidden sets: `S_ℓ^(ℓ)` is a uniform subset of `S_ℓ^(ℓ-1)` of
/// relative size `2^-n` containing `S_ℓ`; later members are its images.
pub fn sample_hidden_sets<R: Rng + ?Sized>(oracle: &ShufflingOracle, rng: &mut R) -> Result<HiddenSets, O2hError> {
    if oracle.backend_kind() != BackendKind::Materialized {
        return Err(O2hError::RequiresMaterialized);
    }
    let p = oracle.params();
    let size = 1usize << p.domain_bits();
    let chains = oracle.chains()?;
    let mut family: Vec<Vec<Vec<bool>>> = vec![Vec::new()];
    for ell in 1..=p.d {
        // S_ℓ^(ℓ-1): everything for ℓ = 1, else the image of S_{ℓ-1}^(ℓ-1).
        let parent: Vec<u64> = if ell == 1 {
            (0..size as u64).collect()
        } else {
            let prev = &family[ell - 1][1];
            (0..size as u64).filter(|&x| prev[x as usize]).collect()
        };
        let mut bitmap = vec![false; size];
        for &x in &chains[ell] {
            bitmap[x as usize] = true;
        }
        let rest: Vec<u64> = parent.iter().copied().filter(|&x| !bitmap[x as usize]).collect();
        let target = parent.len() >> p.n;
        let extra = target - chains[ell].len();
        for i in index::sample(rng, rest.len(), extra).iter() {
            bitmap[rest[i] as usize] = true;
        }
        let mut row = vec![bitmap];
        for j in ell..p.d {
            let f = oracle.permutation(j)?;
            let mut next = vec![false; size];
            for (x, &inside) in row.last().unwrap().iter().enumerate() {
                if inside {
                    next[f[x] as usize] = true;
                }
            }
            row.push(next);
        }
        family.push(row);
    }
    Ok(HiddenSets { params: p, family })
}

/// The base oracle with `⊥` on `S_j^(ℓ)` for every `j ≥ ℓ`.
pub struct ShadowOracle<'a> {
    base: &'a ShufflingOracle,
    hidden: &'a HiddenSets,
    ell: usize,
}

pub fn shadow<'a>(base: &'a ShufflingOracle, hidden: &'a HiddenSets, ell: usize) -> Result<ShadowOracle<'a>, O2hError> {
    let d = base.params().d;
    if ell > d || hidden.params() != base.params() {
        return Err(O2hError::Level { level: ell, d });
    }
    Ok(ShadowOracle { base, hidden, ell })
}

impl ShadowOracle<'_> {
    pub fn level(&self) -> usize {
        self.ell
    }
}

impl OracleAccess for ShadowOracle<'_> {
    fn params(&self) -> OracleParams {
        self.base.params()
    }

    fn query(&self, level: usize, x: u64) -> Result<ShuffledValue, OracleError> {
        let ans = self.base.query(level, x)?;
        if self.hidden.contains(self.ell, level, x) {
            return Ok(ShuffledValue::Bot);
        }
        Ok(ans)
    }
}

/// Squared-amplitude mass of configurations that query some `S_j^(ℓ)` with
/// `j ≥ ℓ` through a slot of `spec`.
pub fn p_find(state: &SparseState, spec: &[QuerySlot], hidden: &HiddenSets, ell: usize) -> f64 {
    let p = hidden.params();
    let layout = state.layout();
    let total: f64 = state
        .amplitudes()
        .iter()
        .filter(|(&cfg, _)| {
            spec.iter().any(|s| {
                s.level >= ell
                    && decode_input(p, layout.get(cfg, s.input)).is_some_and(|x| hidden.contains(ell, s.level, x))
            })
        })
        .map(|(_, a)| a.norm_sqr())
        .sum();
    total.clamp(0.0, 1.0)
}

/// Query state and spec handed to the O2H check.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum O2hProbe {
    /// The solver's state just before it queries level ℓ.
    #[default]
    SolverStep,
    /// A uniform superposition over the whole domain queried at level ℓ.
    UniformDomain,
    /// A uniform superposition over the whole domain queried at level ℓ-1,
    /// which no hidden set can see.
    BelowLevel,
}

impl O2hProbe {
    pub fn build(self, oracle: &ShufflingOracle, ell: usize) -> Result<(SparseState, Vec<QuerySlot>), O2hError> {
        let p = oracle.params();
        if ell == 0 || ell > p.d {
            return Err(O2hError::Level { level: ell, d: p.d });
        }
        match self {
            Self::SolverStep => {
                let regs = SolverRegisters::new(p)?;
                let mut st = regs.initial_state()?;
                for level in 0..ell {
                    st.apply_oracle_xor_unmetered(oracle, &[regs.slot(level)])?;
                }
                Ok((st, vec![regs.slot(ell)]))
            }
            Self::UniformDomain | Self::BelowLevel => {
                let level = if self == Self::UniformDomain { ell } else { ell - 1 };
                if p.domain_bits() > 20 {
                    return Err(O2hError::Probe("domain too wide for a uniform probe".into()));
                }
                let mut layout = RegisterLayout::new();
                let x = layout.add("X", p.domain_bits())?;
                let t = layout.add("T", answer_register_width(p, level))?;
                let st = SparseState::init_uniform(layout, x, p.domain_bits())?;
                Ok((
                    st,
                    vec![QuerySlot {
                        level,
                        input: x,
                        target: t,
                    }],
                ))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct O2hReport {
    /// Bures distance between the pooled base and shadow output ensembles.
    pub lhs: f64,
    /// `√(2·E[p_find])`.
    pub rhs: f64,
    pub per_sample_pass: usize,
    pub samples: usize,
    pub mean_p_find: f64,
    /// Largest `‖ψ_f − ψ_g‖² − 2·p_find` seen.
    pub worst_gap: f64,
    pub holds: bool,
}

/// Applies one query layer through the base oracle and through its ℓ-shadow
/// on each sample and compares the outputs.
pub fn check_o2h(
    samples: &[(ShufflingOracle, HiddenSets)],
    ell: usize,
    probe: O2hProbe,
) -> Result<O2hReport, O2hError> {
    let mut outs_f = Vec::with_capacity(samples.len());
    let mut outs_g = Vec::with_capacity(samples.len());
    let mut pass = 0;
    let mut sum_p = 0.0;
    let mut worst_gap = f64::NEG_INFINITY;
    for (oracle, hidden) in samples {
        let (state, spec) = probe.build(oracle, ell)?;
        let g = shadow(oracle, hidden, ell)?;
        let pf = p_find(&state, &spec, hidden, ell);
        let mut psi_f = state.clone();
        psi_f.apply_oracle_xor_unmetered(oracle, &spec)?;
        let mut psi_g = state;
        psi_g.apply_oracle_xor_unmetered(&g, &spec)?;
        // ‖ψ_f − ψ_g‖² = 2 − 2·Re⟨ψ_f|ψ_g⟩ for unit vectors.
        let dist2 = (psi_f.norm_sqr() + psi_g.norm_sqr() - 2.0 * psi_f.inner(&psi_g)?.re).max(0.0);
        let gap = dist2 - 2.0 * pf;
        worst_gap = worst_gap.max(gap);
        if gap <= O2H_TOL {
            pass += 1;
        }
        sum_p += pf;
        outs_f.push(psi_f);
        outs_g.push(psi_g);
    }
    let n = samples.len().max(1) as f64;
    let lhs = bures_distance(&MixedEnsemble::uniform(outs_f)?, &MixedEnsemble::uniform(outs_g)?)?;
    let rhs = (2.0 * sum_p / n).sqrt();
    Ok(O2hReport {
        lhs,
        rhs,
        per_sample_pass: pass,
        samples: samples.len(),
        mean_p_find: sum_p / n,
        worst_gap,
        holds: pass == samples.len() && lhs <= rhs + O2H_TOL,
    })
}

/// Draws `count` (oracle, hidden sets) pairs on independent streams.
pub fn sample_o2h_pairs(
    n: usize,
    d: usize,
    count: usize,
    seed: u64,
    mode: ExecMode,
) -> Result<Vec<(ShufflingOracle, HiddenSets)>, O2hError> {
    run_trials(count, seed, mode, |_, rng| {
        let inst = sample_decision_instance(n, rng)?;
        let oracle = sample_shuffling(inst, d, rng, SampleOptions::materialized())?;
        let hidden = sample_hidden_sets(&oracle, rng)?;
        Ok((oracle, hidden))
    })
    .into_iter()
    .collect()
}

/// Whether the query state was fixed before the hidden sets were drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSource {
    #[default]
    Fixed,
    /// Built after looking at each hidden-set sample: concentrated on `S_ℓ^(ℓ)`.
    Adaptive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FindBoundReport {
    pub q: usize,
    pub resamples: usize,
    pub mean: f64,
    pub sigma: f64,
    /// `q·2^-n`.
    pub bound: f64,
    pub holds: bool,
    pub precondition_violated: bool,
}

/// `q` slots `x, x⊕c_2, …, x⊕c_q` over a uniform `x`; every slot is uniform
/// on the domain on its own.
pub fn correlated_slots_state(
    params: OracleParams,
    level: usize,
    q: usize,
    offsets: &[u64],
) -> Result<(SparseState, Vec<QuerySlot>), O2hError> {
    let bits = params.domain_bits();
    if bits > 20 || offsets.len() + 1 != q {
        return Err(O2hError::Probe(format!("{q} slots over {bits} bits")));
    }
    let mut layout = RegisterLayout::new();
    let mut slots = Vec::with_capacity(q);
    for i in 0..q {
        let input = layout.add(&format!("X{i}"), bits)?;
        let target = layout.add(&format!("T{i}"), answer_register_width(params, level))?;
        slots.push(QuerySlot { level, input, target });
    }
    let amp = num_complex::Complex64::new(((1u64 << bits) as f64).sqrt().recip(), 0.0);
    let entries = (0..1u64 << bits).map(|x| {
        let mut cfg = layout.set(0, slots[0].input, x);
        for (s, &c) in slots[1..].iter().zip(offsets) {
            cfg = layout.set(cfg, s.input, x ^ c);
        }
        (cfg, amp)
    });
    Ok((SparseState::from_amplitudes(layout.clone(), entries), slots))
}

/// Resamples hidden sets for one fixed oracle and averages `p_find`.
///
/// With [`StateSource::Fixed`] the state is chosen first, so the average
/// must respect `q·2^-n` up to 3σ. With [`StateSource::Adaptive`] the state
/// sees each sample; a bound failure is then reported as a broken
/// precondition rather than a broken lemma.
pub fn check_find_bound<R: Rng + ?Sized>(
    oracle: &ShufflingOracle,
    ell: usize,
    q: usize,
    source: StateSource,
    resamples: usize,
    rng: &mut R,
) -> Result<FindBoundReport, O2hError> {
    let p = oracle.params();
    if ell == 0 || ell > p.d {
        return Err(O2hError::Level { level: ell, d: p.d });
    }
    let size = 1u64 << p.domain_bits();
    let offsets: Vec<u64> = (1..q).map(|_| rng.gen_range(0..size)).collect();
    let fixed = match source {
        StateSource::Fixed => Some(correlated_slots_state(p, ell, q, &offsets)?),
        StateSource::Adaptive => None,
    };
    let mut vals = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let hidden = sample_hidden_sets(oracle, rng)?;
        let v = match &fixed {
            Some((st, spec)) => p_find(st, spec, &hidden, ell),
            None => {
                let mut layout = RegisterLayout::new();
                let x = layout.add("X", p.domain_bits())?;
                let t = layout.add("T", answer_register_width(p, ell))?;
                let members = hidden.members(ell, ell);
                let amp = num_complex::Complex64::new((members.len() as f64).sqrt().recip(), 0.0);
                let st =
                    SparseState::from_amplitudes(layout.clone(), members.iter().map(|&m| (layout.set(0, x, m), amp)));
                p_find(
                    &st,
                    &[QuerySlot {
                        level: ell,
                        input: x,
                        target: t,
                    }],
                    &hidden,
                    ell,
                )
            }
        };
        vals.push(v);
    }
    let k = vals.len().max(1) as f64;
    let mean = vals.iter().sum::<f64>() / k;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
    let sigma = (var / k).sqrt();
    let bound = q as f64 * (-(p.n as f64)).exp2();
    let holds = mean <= bound + 3.0 * sigma + O2H_TOL;
    Ok(FindBoundReport {
        q,
        resamples,
        mean,
        sigma,
        bound,
        holds,
        precondition_violated: source == StateSource::Adaptive,
    })
}

/// Which point's membership is tracked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MembershipPoint {
    /// A fixed domain point.
    Fixed(u64),
    /// The level-j point on the path from this `x0`.
    OnPath(u64),
}

/// Which membership probability to estimate: `x ∈ S_j^(ℓ)` at depth `d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MembershipQuery {
    pub n: usize,
    pub d: usize,
    pub j: usize,
    pub ell: usize,
    pub point: MembershipPoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipEstimate {
    pub draws: usize,
    /// Draws where the point was in `S_j^(ℓ-1)`.
    pub conditioned: usize,
    pub estimate: SuccessEstimate,
}

/// Monte Carlo `Pr[x ∈ S_j^(ℓ) | x ∈ S_j^(ℓ-1)]` over fresh oracles and
/// hidden sets.
pub fn estimate_membership(
    query: MembershipQuery,
    draws: usize,
    seed: u64,
    mode: ExecMode,
) -> Result<MembershipEstimate, O2hError> {
    let MembershipQuery { n, d, j, ell, point } = query;
    if ell == 0 || ell > j || j > d {
        return Err(O2hError::Level { level: ell, d });
    }
    let outcomes = run_trials(
        draws,
        seed,
        mode,
        |_, rng: &mut ChaCha8Rng| -> Result<Option<bool>, O2hError> {
            let inst = sample_decision_instance(n, rng)?;
            let oracle = sample_shuffling(inst, d, rng, SampleOptions::materialized())?;
            let hidden = sample_hidden_sets(&oracle, rng)?;
            let x = match point {
                MembershipPoint::Fixed(x) => x,
                MembershipPoint::OnPath(x0) => oracle.chains()?[j][x0 as usize],
            };
            if !hidden.contains(ell - 1, j, x) {
                return Ok(None);
            }
            Ok(Some(hidden.contains(ell, j, x)))
        },
    );
    let mut conditioned = 0;
    let mut hits = 0;
    for o in outcomes {
        if let Some(h) = o? {
            conditioned += 1;
            hits += usize::from(h);
        }
    }
    Ok(MembershipEstimate {
        draws,
        conditioned,
        estimate: wilson_interval(hits, conditioned),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simon::sample_simon;
    use rand::SeedableRng;

    fn pair(n: usize, d: usize, seed: u64) -> (ShufflingOracle, HiddenSets) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let inst = sample_simon(n, &mut r).unwrap();
        let o = sample_shuffling(inst, d, &mut r, SampleOptions::materialized()).unwrap();
        let h = sample_hidden_sets(&o, &mut r).unwrap();
        (o, h)
    }

    #[test]
    fn procedure_one_shapes() {
        let (o, h) = pair(2, 1, 1);
        assert_eq!(h.size(1, 1), 16);
        assert_eq!(h.size(0, 1), 64);
        let sets = o.level_sets().unwrap();
        assert!(sets.sets[1].iter().all(|&x| h.contains(1, 1, x)));
        assert!(!h.contains(1, 0, 0));
        assert_eq!(h.family[1].len(), 1);

        let (o, h) = pair(2, 2, 2);
        let f1 = o.permutation(1).unwrap();
        let mut img: Vec<u64> = h.members(1, 1).iter().map(|&x| f1[x as usize] as u64).collect();
        img.sort_unstable();
        assert_eq!(img, h.members(1, 2));
        assert_eq!(h.size(2, 2), h.size(1, 2) / 4);
        assert!(h.members(2, 2).iter().all(|&x| h.contains(1, 2, x)));
        let sets = o.level_sets().unwrap();
        for j in 1..=2 {
            for ell in 1..=j {
                assert!(sets.sets[j].iter().all(|&x| h.contains(ell, j, x)));
            }
        }
    }

    #[test]
    fn lazy_oracle_rejected() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let inst = sample_simon(2, &mut r).unwrap();
        let o = sample_shuffling(inst, 1, &mut r, SampleOptions::lazy()).unwrap();
        assert_eq!(sample_hidden_sets(&o, &mut r), Err(O2hError::RequiresMaterialized));
    }

    #[test]
    fn shadow_agrees_off_hidden_sets() {
        for (n, d) in [(2, 1), (2, 2), (3, 1), (1, 3)] {
            let (o, h) = pair(n, d, 4 + d as u64);
            for ell in 1..=d {
                let g = shadow(&o, &h, ell).unwrap();
                for level in 0..=d {
                    for x in 0..1u64 << o.params().domain_bits() {
                        let hidden = level >= ell && h.contains(ell, level, x);
                        let ans = g.query(level, x).unwrap();
                        if hidden {
                            assert_eq!(ans, ShuffledValue::Bot);
                        } else {
                            assert_eq!(ans, o.query(level, x).unwrap());
                        }
                    }
                }
            }
            // the ℓ=d shadow hides f_d^* completely
            let g = shadow(&o, &h, d).unwrap();
            for x0 in 0..1u64 << n {
                assert_eq!(g.path(x0).unwrap().output(), ShuffledValue::Bot);
            }
        }
    }

    #[test]
    fn p_find_examples() {
        let (o, h) = pair(2, 1, 5);
        let (st, spec) = O2hProbe::BelowLevel.build(&o, 1).unwrap();
        assert_eq!(p_find(&st, &spec, &h, 1), 0.0);
        let (st, spec) = O2hProbe::SolverStep.build(&o, 1).unwrap();
        assert!((p_find(&st, &spec, &h, 1) - 1.0).abs() < 1e-12);
        let (st, spec) = O2hProbe::UniformDomain.build(&o, 1).unwrap();
        assert!((p_find(&st, &spec, &h, 1) - 0.25).abs() < 1e-9);
        // uniform over S_2^(1), queried against S_2^(2): exactly 2^-n
        let (o, h) = pair(2, 2, 6);
        let mut layout = RegisterLayout::new();
        let x = layout.add("X", 8).unwrap();
        let t = layout.add("T", 3).unwrap();
        let m = h.members(1, 2);
        let a = num_complex::Complex64::new((m.len() as f64).sqrt().recip(), 0.0);
        let st = SparseState::from_amplitudes(layout.clone(), m.iter().map(|&v| (layout.set(0, x, v), a)));
        let spec = [QuerySlot {
            level: 2,
            input: x,
            target: t,
        }];
        assert!((p_find(&st, &spec, &h, 2) - 0.25).abs() < 1e-9);
        let _ = o;
    }

    #[test]
    fn o2h_small_sweep() {
        let samples = sample_o2h_pairs(2, 1, 10, 11, ExecMode::Serial).unwrap();
        for probe in [O2hProbe::SolverStep, O2hProbe::UniformDomain] {
            let rep = check_o2h(&samples, 1, probe).unwrap();
            assert_eq!(rep.per_sample_pass, 10);
            assert!(rep.holds, "{rep:?}");
        }
        let rep = check_o2h(&samples, 1, O2hProbe::BelowLevel).unwrap();
        assert!(rep.lhs < 1e-6 && rep.rhs == 0.0);
    }

    #[test]
    fn find_bound_single_slot_is_exact() {
        let (o, _) = pair(2, 1, 7);
        let mut r = ChaCha8Rng::seed_from_u64(8);
        let rep = check_find_bound(&o, 1, 1, StateSource::Fixed, 50, &mut r).unwrap();
        assert!((rep.mean - 0.25).abs() < 1e-12 && rep.holds);
        let rep = check_find_bound(&o, 1, 1, StateSource::Adaptive, 20, &mut r).unwrap();
        assert!(rep.precondition_violated && !rep.holds);
    }

    #[test]
    fn membership_on_path_is_certain() {
        let est = estimate_membership(
            MembershipQuery {
                n: 2,
                d: 2,
                j: 2,
                ell: 2,
                point: MembershipPoint::OnPath(1),
            },
            200,
            9,
            ExecMode::Serial,
        )
        .unwrap();
        assert_eq!(est.conditioned, 200);
        assert_eq!(est.estimate.rate, 1.0);
    }
}
