//! The 2d+1 oracle-layer solver for search and decision variants.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf2lin::{null_space_basis, rank, span_nonzero, BitMatrix, BitVector};
use crate::ledger::{DepthLedger, PathCost};
use crate::oracle::{OracleAccess, OracleError, OracleParams, ShuffledValue};
use crate::qsim::{answer_register_width, QsimError, QuerySlot, RegId, RegisterLayout, SparseState};
use crate::simon::InstanceKind;

/// Candidates a decision run will path-check before giving up.
pub const MAX_DECISION_CANDIDATES: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error(transparent)]
    Qsim(#[from] QsimError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("rank deficiency persists after {rounds} rounds")]
    RankDeficiency { rounds: usize },
}

/// How the answer registers `N_0 .. N_{d-1}` are cleared after `N_d` is
/// measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncomputeSchedule {
    /// One level per layer, `f_{d-1}` down to `f_0`: 2d+1 layers per round.
    #[default]
    Sequential,
    /// All levels in one parallel layer: d+2 layers per round (d+1 when d=0).
    SingleLayer,
}

impl UncomputeSchedule {
    pub fn layers_per_round(self, d: usize) -> u64 {
        match self {
            Self::Sequential => 2 * d as u64 + 1,
            Self::SingleLayer => d as u64 + 1 + u64::from(d > 0),
        }
    }
}

/// Register layout of one round: `Q` (n bits) then `N_0 .. N_d`.
#[derive(Clone, Debug)]
pub struct SolverRegisters {
    pub params: OracleParams,
    pub layout: RegisterLayout,
    pub q: RegId,
    pub answers: Vec<RegId>,
}

impl SolverRegisters {
    pub fn new(params: OracleParams) -> Result<Self, QsimError> {
        Self::with_prefix(params, "")
    }

    /// Same shape with every register name prefixed, for running copies side
    /// by side.
    pub fn with_prefix(params: OracleParams, prefix: &str) -> Result<Self, QsimError> {
        let mut layout = RegisterLayout::new();
        let q = layout.add(&format!("{prefix}Q"), params.n)?;
        let answers = (0..=params.d)
            .map(|i| layout.add(&format!("{prefix}N{i}"), answer_register_width(params, i)))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            params,
            layout,
            q,
            answers,
        })
    }

    /// `N_i ^= f_i(Q or N_{i-1})`.
    pub fn slot(&self, level: usize) -> QuerySlot {
        QuerySlot {
            level,
            input: if level == 0 { self.q } else { self.answers[level - 1] },
            target: self.answers[level],
        }
    }

    pub fn uncompute_layers(&self, schedule: UncomputeSchedule) -> Vec<Vec<QuerySlot>> {
        let d = self.params.d;
        match schedule {
            UncomputeSchedule::Sequential => (0..d).rev().map(|i| vec![self.slot(i)]).collect(),
            UncomputeSchedule::SingleLayer if d > 0 => vec![(0..d).map(|i| self.slot(i)).collect()],
            UncomputeSchedule::SingleLayer => Vec::new(),
        }
    }

    pub fn initial_state(&self) -> Result<SparseState, QsimError> {
        SparseState::init_uniform(self.layout.clone(), self.q, self.params.n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub j: BitVector,
    pub ledger: DepthLedger,
}

/// Intermediate states of a round, for cross-checks.
#[derive(Clone, Debug)]
pub struct RoundTrace {
    pub after_forward: SparseState,
    pub core_outcome: u64,
    pub after_core_measurement: SparseState,
    pub after_uncompute: SparseState,
    pub after_hadamard: SparseState,
    pub max_support: usize,
}

pub fn run_simon_round<R: Rng + ?Sized>(
    oracle: &dyn OracleAccess,
    schedule: UncomputeSchedule,
    rng: &mut R,
) -> Result<RoundResult, SolverError> {
    round(oracle, schedule, rng, None)
}

pub fn run_simon_round_traced<R: Rng + ?Sized>(
    oracle: &dyn OracleAccess,
    schedule: UncomputeSchedule,
    rng: &mut R,
) -> Result<(RoundResult, RoundTrace), SolverError> {
    let mut slot = None;
    let res = round(oracle, schedule, rng, Some(&mut slot))?;
    Ok((res, slot.expect("trace filled")))
}

fn round<R: Rng + ?Sized>(
    oracle: &dyn OracleAccess,
    schedule: UncomputeSchedule,
    rng: &mut R,
    trace: Option<&mut Option<RoundTrace>>,
) -> Result<RoundResult, SolverError> {
    let p = oracle.params();
    let regs = SolverRegisters::new(p)?;
    let mut ledger = DepthLedger::new();
    ledger.begin_circuit();
    let mut state = regs.initial_state()?;
    let mut max_support = state.support_len();
    for level in 0..=p.d {
        state.apply_oracle_xor(oracle, &[regs.slot(level)], &mut ledger)?;
        max_support = max_support.max(state.support_len());
    }
    let after_forward = trace.is_some().then(|| state.clone());
    let core_outcome = state.measure(regs.answers[p.d], rng);
    let after_core = trace.is_some().then(|| state.clone());
    for layer in regs.uncompute_layers(schedule) {
        state.apply_oracle_xor(oracle, &layer, &mut ledger)?;
        max_support = max_support.max(state.support_len());
    }
    let after_uncompute = trace.is_some().then(|| state.clone());
    state.hadamard(regs.q);
    max_support = max_support.max(state.support_len());
    let after_hadamard = trace.is_some().then(|| state.clone());
    let j = state.measure(regs.q, rng);
    if let Some(t) = trace {
        *t = Some(RoundTrace {
            after_forward: after_forward.unwrap(),
            core_outcome,
            after_core_measurement: after_core.unwrap(),
            after_uncompute: after_uncompute.unwrap(),
            after_hadamard: after_hadamard.unwrap(),
            max_support,
        });
    }
    Ok(RoundResult {
        j: BitVector::new(j, p.n).expect("measured value fits"),
        ledger,
    })
}

/// Path query charged to `ledger`. A path always ends in `f_d^*` on `S_d`.
pub(crate) fn metered_path(
    oracle: &dyn OracleAccess,
    x0: u64,
    cost: PathCost,
    ledger: &mut DepthLedger,
) -> Result<ShuffledValue, OracleError> {
    let path = oracle.path(x0)?;
    let out = path.output();
    ledger.record_classical(cost.charge(oracle.params().d), u64::from(!out.is_bot()));
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub shift: BitVector,
    pub rounds: usize,
    pub verifications: usize,
    pub ledger: DepthLedger,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SolverOptions {
    pub schedule: UncomputeSchedule,
    pub path_cost: PathCost,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            schedule: UncomputeSchedule::Sequential,
            path_cost: PathCost::One,
        }
    }
}

/// Collects rounds until the samples pin a single nonzero candidate, then
/// checks it with two path queries. A failed check discards the samples.
pub fn solve_search<R: Rng + ?Sized>(
    oracle: &dyn OracleAccess,
    max_rounds: usize,
    rng: &mut R,
) -> Result<SearchReport, SolverError> {
    solve_search_with(oracle, max_rounds, SolverOptions::default(), rng)
}

pub fn solve_search_with<R: Rng + ?Sized>(
    oracle: &dyn OracleAccess,
    max_rounds: usize,
    opts: SolverOptions,
    rng: &mut R,
) -> Result<SearchReport, SolverError> {
    let n = oracle.params().n;
    let mut ledger = DepthLedger::new();
    let mut rows = BitMatrix::new(n).expect("instance width is valid");
    let mut rounds = 0;
    let mut verifications = 0;
    loop {
        let r = rank(&rows);
        if r + 1 == n {
            let cand = null_space_basis(&rows)[0];
            verifications += 1;
            let y0 = metered_path(oracle, 0, opts.path_cost, &mut ledger)?;
            let y1 = metered_path(oracle, cand.bits(), opts.path_cost, &mut ledger)?;
            if y0 == y1 {
                return Ok(SearchReport {
                    shift: cand,
                    rounds,
                    verifications,
                    ledger,
                });
            }
            rows = BitMatrix::new(n).expect("instance width is valid");
        } else if r == n {
            rows = BitMatrix::new(n).expect("instance width is valid");
        }
        if rounds >= max_rounds {
            return Err(SolverError::RankDeficiency { rounds });
        }
        let res = round(oracle, opts.schedule, rng, None)?;
        ledger.absorb(&res.ledger);
        rows.push(res.j).expect("widths agree");
        rounds += 1;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionReport {
    pub decision: InstanceKind,
    pub rank: usize,
    pub candidates_checked: usize,
    pub ledger: DepthLedger,
}

/// Default round count for [`solve_decision`].
pub fn default_decision_rounds(n: usize) -> usize {
    n + 10
}

/// Full rank means one-to-one. Otherwise every nonzero vector of the null
/// space (up to [`MAX_DECISION_CANDIDATES`]) is path-checked against `f(0)`.
pub fn solve_decision<R: Rng + ?Sized>(
    oracle: &dyn OracleAccess,
    rounds: usize,
    rng: &mut R,
) -> Result<DecisionReport, SolverError> {
    solve_decision_with(oracle, rounds, SolverOptions::default(), rng)
}

pub fn solve_decision_with<R: Rng + ?Sized>(
    oracle: &dyn OracleAccess,
    rounds: usize,
    opts: SolverOptions,
    rng: &mut R,
) -> Result<DecisionReport, SolverError> {
    let n = oracle.params().n;
    let mut ledger = DepthLedger::new();
    let mut rows = BitMatrix::new(n).expect("instance width is valid");
    for _ in 0..rounds {
        let res = round(oracle, opts.schedule, rng, None)?;
        ledger.absorb(&res.ledger);
        rows.push(res.j).expect("widths agree");
    }
    let r = rank(&rows);
    let mut decision = InstanceKind::OneToOne;
    let mut checked = 0;
    if r < n {
        let basis = null_space_basis(&rows);
        let y0 = metered_path(oracle, 0, opts.path_cost, &mut ledger)?;
        for cand in span_nonzero(&basis).take(MAX_DECISION_CANDIDATES) {
            checked += 1;
            if metered_path(oracle, cand.bits(), opts.path_cost, &mut ledger)? == y0 {
                decision = InstanceKind::Simon;
                break;
            }
        }
    }
    Ok(DecisionReport {
        decision,
        rank: r,
        candidates_checked: checked,
        ledger,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf2lin::dot;
    use crate::oracle::{sample_shuffling, BackendKind, SampleOptions, ShufflingOracle};
    use crate::simon::{sample_one_to_one, sample_simon};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn simon(n: usize, d: usize, seed: u64, backend: BackendKind) -> (ShufflingOracle, ChaCha8Rng) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let inst = sample_simon(n, &mut r).unwrap();
        let o = sample_shuffling(inst, d, &mut r, SampleOptions::with_backend(backend)).unwrap();
        (o, r)
    }

    fn perm(n: usize, d: usize, seed: u64) -> (ShufflingOracle, ChaCha8Rng) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let inst = sample_one_to_one(n, &mut r).unwrap();
        let o = sample_shuffling(inst, d, &mut r, SampleOptions::materialized()).unwrap();
        (o, r)
    }

    #[test]
    fn rounds_are_orthogonal_and_exact_depth() {
        for d in 0..=3 {
            let (o, mut r) = simon(3, d, d as u64, BackendKind::Lazy);
            let s = o.instance().shift().unwrap();
            for _ in 0..20 {
                let res = run_simon_round(&o, UncomputeSchedule::Sequential, &mut r).unwrap();
                assert!(!dot(&res.j, &s).unwrap());
                assert_eq!(res.ledger.oracle_layers_current_circuit, 2 * d as u64 + 1);
                assert_eq!(res.ledger.circuits_invoked, 1);
            }
        }
    }

    #[test]
    fn single_layer_schedule_is_shorter_and_still_orthogonal() {
        let (o, mut r) = simon(3, 2, 5, BackendKind::Materialized);
        let s = o.instance().shift().unwrap();
        for _ in 0..20 {
            let res = run_simon_round(&o, UncomputeSchedule::SingleLayer, &mut r).unwrap();
            assert!(!dot(&res.j, &s).unwrap());
            assert_eq!(res.ledger.oracle_layers_current_circuit, 4);
        }
        assert_eq!(UncomputeSchedule::SingleLayer.layers_per_round(0), 1);
    }

    #[test]
    fn uncompute_leaves_coset_pair_with_clean_answers() {
        for n in 1..=3 {
            for d in 0..=2 {
                let (o, mut r) = simon(n, d, (n * 7 + d) as u64, BackendKind::Materialized);
                let regs = SolverRegisters::new(o.params()).unwrap();
                let s = o.instance().shift().unwrap().bits();
                for sched in [UncomputeSchedule::Sequential, UncomputeSchedule::SingleLayer] {
                    let (_, t) = run_simon_round_traced(&o, sched, &mut r).unwrap();
                    let keys: Vec<u128> = t.after_uncompute.amplitudes().keys().copied().collect();
                    assert_eq!(keys.len(), 2);
                    let xs: Vec<u64> = keys.iter().map(|&k| regs.layout.get(k, regs.q)).collect();
                    assert_eq!(xs[0] ^ xs[1], s);
                    for &k in &keys {
                        for &a in &regs.answers[..d] {
                            assert_eq!(regs.layout.get(k, a), 0);
                        }
                        assert_eq!(regs.layout.get(k, regs.answers[d]), t.core_outcome);
                    }
                    assert!(t.max_support <= 1 << n);
                }
            }
        }
    }

    #[test]
    fn one_to_one_rounds_are_uniform() {
        let (o, mut r) = perm(3, 1, 3);
        let mut counts = [0usize; 8];
        let trials = 10_000;
        for _ in 0..trials {
            let res = run_simon_round(&o, UncomputeSchedule::Sequential, &mut r).unwrap();
            counts[res.j.bits() as usize] += 1;
        }
        // chi-square, 7 dof; 99.9% quantile is 24.32
        let e = trials as f64 / 8.0;
        let chi: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        assert!(chi < 24.32, "{counts:?}");
    }

    #[test]
    fn search_finds_shift() {
        for n in 1..=5 {
            for d in 0..=2 {
                let (o, mut r) = simon(n, d, (100 + n * 3 + d) as u64, BackendKind::Lazy);
                let rep = solve_search(&o, 10 * n + 20, &mut r).unwrap();
                assert_eq!(Some(rep.shift), o.instance().shift());
                assert_eq!(rep.ledger.total_oracle_layers, rep.rounds as u64 * (2 * d as u64 + 1));
                assert_eq!(rep.ledger.classical_queries, 2 * rep.verifications as u64);
            }
        }
        let (o, mut r) = simon(1, 0, 1, BackendKind::Materialized);
        let rep = solve_search(&o, 0, &mut r).unwrap();
        assert_eq!((rep.shift.bits(), rep.rounds), (1, 0));
    }

    #[test]
    fn search_gives_up_on_permutations() {
        let (o, mut r) = perm(3, 1, 4);
        let err = solve_search(&o, 30, &mut r).unwrap_err();
        assert!(err.to_string().starts_with("rank deficiency persists"));
    }

    #[test]
    fn decision_examples() {
        let (o, mut r) = simon(3, 1, 6, BackendKind::Materialized);
        for rounds in [0, 1, 13] {
            let rep = solve_decision(&o, rounds, &mut r).unwrap();
            assert_eq!(rep.decision, InstanceKind::Simon);
            assert!(rep.rank < 3);
        }
        let mut right = 0;
        for seed in 0..100 {
            let (o, mut r) = perm(3, 1, 1000 + seed);
            if solve_decision(&o, default_decision_rounds(3), &mut r).unwrap().decision == InstanceKind::OneToOne {
                right += 1;
            }
        }
        assert!(right >= 95, "{right}");
    }

    #[test]
    fn path_cost_option() {
        let (o, mut r) = simon(3, 2, 9, BackendKind::Materialized);
        let opts = SolverOptions {
            path_cost: PathCost::PerLevel,
            ..SolverOptions::default()
        };
        let rep = solve_search_with(&o, 50, opts, &mut r).unwrap();
        assert_eq!(rep.ledger.classical_queries, 6 * rep.verifications as u64);
    }
}
