//! Depth-budgeted d-CQ and d-QC harnesses and the adversaries that run in
//! them.
//!
//! Adversaries never touch the oracle directly. They talk to a session that
//! owns the ledger, so every query is charged and every budget is checked
//! before anything executes.

use std::collections::HashMap;

use rand::seq::index;
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{run_trials, ExecMode};
use crate::gf2lin::{null_space_basis, rank, BitMatrix, BitVector};
use crate::ledger::{DepthLedger, PathCost};
use crate::oracle::{OracleAccess, OracleError, OracleParams, ShuffledValue};
use crate::qsim::{QsimError, QuerySlot, RegId, RegisterLayout, SparseState};
use crate::simon::InstanceKind;
use crate::solver::{metered_path, SolverRegisters, UncomputeSchedule};

/// 95% two-sided normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchemeError {
    #[error("depth violation: circuit needs {requested} oracle layers, budget is {budget}")]
    DepthViolation { requested: u64, budget: u64 },
    #[error("circuit budget of {budget} invocations exhausted")]
    CircuitBudget { budget: u64 },
    #[error("classical query cap of {cap} exceeded")]
    ClassicalBudget { cap: u64 },
    #[error("session aborted after a violation")]
    Aborted,
    #[error("invalid budget: {0}")]
    InvalidBudget(String),
    #[error("register: {0}")]
    Register(String),
    #[error(transparent)]
    Qsim(#[from] QsimError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeBudget {
    /// Oracle layers per circuit (d-CQ) or in total (d-QC).
    pub depth: u64,
    /// Circuit invocations, d-CQ only.
    pub max_circuits: u64,
    pub classical_query_cap: u64,
    pub path_cost: PathCost,
}

impl SchemeBudget {
    pub fn new(depth: u64, max_circuits: u64, classical_query_cap: u64) -> Result<Self, SchemeError> {
        if depth == 0 || max_circuits == 0 || classical_query_cap == 0 {
            return Err(SchemeError::InvalidBudget(format!(
                "depth={depth} circuits={max_circuits} classical={classical_query_cap}"
            )));
        }
        Ok(Self {
            depth,
            max_circuits,
            classical_query_cap,
            path_cost: PathCost::One,
        })
    }

    pub fn with_path_cost(mut self, path_cost: PathCost) -> Self {
        self.path_cost = path_cost;
        self
    }
}

/// What an adversary hands back.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "guess", content = "value")]
pub enum Guess {
    Shift(BitVector),
    Kind(InstanceKind),
    Abstain,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    Search,
    Decision,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeRun<T> {
    pub outcome: Result<T, SchemeError>,
    pub ledger: DepthLedger,
}

struct Meter<'a> {
    oracle: &'a dyn OracleAccess,
    budget: SchemeBudget,
    ledger: DepthLedger,
    failed: Option<SchemeError>,
    rng: &'a mut dyn RngCore,
}

impl Meter<'_> {
    fn alive(&self) -> Result<(), SchemeError> {
        match self.failed {
            Some(_) => Err(SchemeError::Aborted),
            None => Ok(()),
        }
    }

    fn violate(&mut self, err: SchemeError) -> SchemeError {
        self.ledger.record_violation(err.to_string());
        self.failed = Some(err.clone());
        err
    }

    fn charge_classical(&mut self, cost: u64) -> Result<(), SchemeError> {
        self.alive()?;
        if self.ledger.classical_queries + cost > self.budget.classical_query_cap {
            let cap = self.budget.classical_query_cap;
            return Err(self.violate(SchemeError::ClassicalBudget { cap }));
        }
        Ok(())
    }

    fn classical_query(&mut self, level: usize, x: u64) -> Result<ShuffledValue, SchemeError> {
        self.charge_classical(1)?;
        let ans = self.oracle.query(level, x)?;
        let core = level == self.oracle.params().d && !ans.is_bot();
        self.ledger.record_classical(1, u64::from(core));
        Ok(ans)
    }

    fn path_query(&mut self, x0: u64) -> Result<ShuffledValue, SchemeError> {
        let cost = self.budget.path_cost.charge(self.oracle.params().d);
        self.charge_classical(cost)?;
        Ok(metered_path(self.oracle, x0, self.budget.path_cost, &mut self.ledger)?)
    }

    fn finish<T>(self, out: Result<T, SchemeError>) -> SchemeRun<T> {
        let outcome = match self.failed {
            Some(e) => Err(e),
            None => out,
        };
        SchemeRun {
            outcome,
            ledger: self.ledger,
        }
    }
}

/// A gate or oracle layer inside a d-CQ circuit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CircuitOp {
    Hadamard(RegId),
    Xor(RegId, u64),
    Oracle(Vec<QuerySlot>),
}

/// Starts in `|0…0⟩` and ends in a measurement of every register.
#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    pub layout: RegisterLayout,
    pub ops: Vec<CircuitOp>,
}

impl Circuit {
    pub fn oracle_layers(&self) -> u64 {
        self.ops.iter().filter(|op| matches!(op, CircuitOp::Oracle(_))).count() as u64
    }
}

/// The d-CQ capability surface: classical queries, path queries, and
/// bounded-depth circuits whose only output is a full measurement.
pub struct CqSession<'a> {
    meter: Meter<'a>,
}

impl CqSession<'_> {
    pub fn params(&self) -> OracleParams {
        self.meter.oracle.params()
    }

    pub fn budget(&self) -> SchemeBudget {
        self.meter.budget
    }

    pub fn rng(&mut self) -> &mut dyn RngCore {
        &mut *self.meter.rng
    }

    pub fn ledger(&self) -> &DepthLedger {
        &self.meter.ledger
    }

    pub fn classical_query(&mut self, level: usize, x: u64) -> Result<ShuffledValue, SchemeError> {
        self.meter.classical_query(level, x)
    }

    /// The final value of the path from `x0`.
    pub fn path_query(&mut self, x0: u64) -> Result<ShuffledValue, SchemeError> {
        self.meter.path_query(x0)
    }

    /// Runs `circuit` and returns the measured configuration.
    pub fn run_circuit(&mut self, circuit: &Circuit) -> Result<u128, SchemeError> {
        let m = &mut self.meter;
        m.alive()?;
        if m.ledger.circuits_invoked >= m.budget.max_circuits {
            let budget = m.budget.max_circuits;
            return Err(m.violate(SchemeError::CircuitBudget { budget }));
        }
        let requested = circuit.oracle_layers();
        if requested > m.budget.depth {
            let budget = m.budget.depth;
            return Err(m.violate(SchemeError::DepthViolation { requested, budget }));
        }
        m.ledger.begin_circuit();
        let mut state = SparseState::basis(circuit.layout.clone(), 0);
        for op in &circuit.ops {
            match op {
                CircuitOp::Hadamard(r) => state.hadamard(*r),
                CircuitOp::Xor(r, v) => state.xor_const(*r, *v),
                CircuitOp::Oracle(slots) => {
                    state.apply_oracle_xor(m.oracle, slots, &mut m.ledger)?;
                }
            }
        }
        Ok(state.measure_all(&mut *m.rng))
    }
}

pub trait CqAdversary {
    type Output;
    fn run(&mut self, session: &mut CqSession<'_>) -> Result<Self::Output, SchemeError>;
}

pub fn run_d_cq<A: CqAdversary>(
    adversary: &mut A,
    oracle: &dyn OracleAccess,
    budget: SchemeBudget,
    rng: &mut dyn RngCore,
) -> SchemeRun<A::Output> {
    let mut session = CqSession {
        meter: Meter {
            oracle,
            budget,
            ledger: DepthLedger::new(),
            failed: None,
            rng,
        },
    };
    let out = adversary.run(&mut session);
    session.meter.finish(out)
}

/// A quantum state kept as a product of independent factors; two factors
/// merge only when an oracle slot spans them.
#[derive(Clone, Debug, Default)]
pub struct ProductState {
    factors: Vec<Option<SparseState>>,
    regs: Vec<(usize, RegId)>,
    names: HashMap<String, RegId>,
}

impl ProductState {
    pub fn new() -> Self {
        Self::default()
    }

    /// A fresh register in `|0⟩`, as its own factor.
    pub fn alloc(&mut self, name: &str, width: usize) -> Result<RegId, SchemeError> {
        if self.names.contains_key(name) {
            return Err(SchemeError::Register(format!("duplicate register {name}")));
        }
        let mut layout = RegisterLayout::new();
        let local = layout.add(name, width)?;
        self.factors.push(Some(SparseState::basis(layout, 0)));
        let id = RegId(self.regs.len());
        self.regs.push((self.factors.len() - 1, local));
        self.names.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn register(&self, name: &str) -> Option<RegId> {
        self.names.get(name).copied()
    }

    fn locate(&self, id: RegId) -> Result<(usize, RegId), SchemeError> {
        self.regs
            .get(id.0)
            .copied()
            .ok_or_else(|| SchemeError::Register(format!("unknown register {}", id.0)))
    }

    fn factor_mut(&mut self, f: usize) -> &mut SparseState {
        self.factors[f].as_mut().expect("live factor")
    }

    fn merge(&mut self, a: usize, b: usize) -> Result<(), SchemeError> {
        if a == b {
            return Ok(());
        }
        let fb = self.factors[b].take().expect("live factor");
        let fa = self.factors[a].as_ref().expect("live factor");
        let shift = fa.layout().registers().len();
        self.factors[a] = Some(fa.tensor(&fb)?);
        for r in &mut self.regs {
            if r.0 == b {
                *r = (a, RegId(r.1 .0 + shift));
            }
        }
        Ok(())
    }

    pub fn hadamard(&mut self, id: RegId) -> Result<(), SchemeError> {
        let (f, local) = self.locate(id)?;
        self.factor_mut(f).hadamard(local);
        Ok(())
    }

    pub fn xor_const(&mut self, id: RegId, v: u64) -> Result<(), SchemeError> {
        let (f, local) = self.locate(id)?;
        self.factor_mut(f).xor_const(local, v);
        Ok(())
    }

    pub fn measure(&mut self, id: RegId, rng: &mut dyn RngCore) -> Result<u64, SchemeError> {
        let (f, local) = self.locate(id)?;
        Ok(self.factor_mut(f).measure(local, rng))
    }

    /// One parallel oracle layer; returns the `f_d^*` hit count.
    pub fn apply_oracle(&mut self, oracle: &dyn OracleAccess, slots: &[QuerySlot]) -> Result<u64, SchemeError> {
        for (i, s) in slots.iter().enumerate() {
            if slots[..i].iter().any(|o| o.target == s.target) {
                return Err(QsimError::Spec("overlapping target registers".into()).into());
            }
            let (a, _) = self.locate(s.input)?;
            let (b, _) = self.locate(s.target)?;
            self.merge(a, b)?;
        }
        // Slots that chain through each other's registers now share a factor.
        let mut groups: Vec<(usize, Vec<QuerySlot>)> = Vec::new();
        for s in slots {
            let (f, input) = self.locate(s.input)?;
            let (_, target) = self.locate(s.target)?;
            let local = QuerySlot {
                level: s.level,
                input,
                target,
            };
            match groups.iter_mut().find(|g| g.0 == f) {
                Some(g) => g.1.push(local),
                None => groups.push((f, vec![local])),
            }
        }
        let mut hits = 0;
        for (f, local) in groups {
            hits += self.factor_mut(f).apply_oracle_xor_unmetered(oracle, &local)?;
        }
        Ok(hits)
    }

    /// The factor holding `id`, for inspection.
    pub fn factor_of(&self, id: RegId) -> Result<&SparseState, SchemeError> {
        let (f, _) = self.locate(id)?;
        Ok(self.factors[f].as_ref().expect("live factor"))
    }
}

/// The d-QC capability surface: one persistent quantum state, at most
/// `budget.depth` oracle layers overall, partial measurements in between.
pub struct QcSession<'a> {
    meter: Meter<'a>,
    state: ProductState,
    layers: u64,
}

impl QcSession<'_> {
    pub fn params(&self) -> OracleParams {
        self.meter.oracle.params()
    }

    pub fn budget(&self) -> SchemeBudget {
        self.meter.budget
    }

    pub fn rng(&mut self) -> &mut dyn RngCore {
        &mut *self.meter.rng
    }

    pub fn ledger(&self) -> &DepthLedger {
        &self.meter.ledger
    }

    pub fn state(&self) -> &ProductState {
        &self.state
    }

    pub fn alloc(&mut self, name: &str, width: usize) -> Result<RegId, SchemeError> {
        self.meter.alive()?;
        self.state.alloc(name, width)
    }

    pub fn hadamard(&mut self, id: RegId) -> Result<(), SchemeError> {
        self.meter.alive()?;
        self.state.hadamard(id)
    }

    pub fn xor_const(&mut self, id: RegId, v: u64) -> Result<(), SchemeError> {
        self.meter.alive()?;
        self.state.xor_const(id, v)
    }

    pub fn oracle_layer(&mut self, slots: &[QuerySlot]) -> Result<u64, SchemeError> {
        let m = &mut self.meter;
        m.alive()?;
        if self.layers + 1 > m.budget.depth {
            let budget = m.budget.depth;
            return Err(m.violate(SchemeError::DepthViolation {
                requested: self.layers + 1,
                budget,
            }));
        }
        let hits = self.state.apply_oracle(m.oracle, slots)?;
        self.layers += 1;
        m.ledger.record_oracle_layer(hits);
        Ok(hits)
    }

    /// Measures the chosen registers in order.
    pub fn measure(&mut self, regs: &[RegId]) -> Result<Vec<u64>, SchemeError> {
        self.meter.alive()?;
        regs.iter()
            .map(|&r| self.state.measure(r, &mut *self.meter.rng))
            .collect()
    }

    pub fn classical_query(&mut self, level: usize, x: u64) -> Result<ShuffledValue, SchemeError> {
        self.meter.classical_query(level, x)
    }

    pub fn path_query(&mut self, x0: u64) -> Result<ShuffledValue, SchemeError> {
        self.meter.path_query(x0)
    }
}

pub trait QcAdversary {
    type Output;
    fn run(&mut self, session: &mut QcSession<'_>) -> Result<Self::Output, SchemeError>;
}

pub fn run_d_qc<A: QcAdversary>(
    adversary: &mut A,
    oracle: &dyn OracleAccess,
    budget: SchemeBudget,
    rng: &mut dyn RngCore,
) -> SchemeRun<A::Output> {
    let mut session = QcSession {
        meter: Meter {
            oracle,
            budget,
            ledger: DepthLedger::new(),
            failed: None,
            rng,
        },
        state: ProductState::new(),
        layers: 0,
    };
    session.meter.ledger.begin_circuit();
    let out = adversary.run(&mut session);
    session.meter.finish(out)
}

fn shift_from_rows(rows: &BitMatrix) -> Option<BitVector> {
    let n = rows.width();
    (rank(rows) + 1 == n).then(|| null_space_basis(rows)[0])
}

/// The solver as a d-CQ scheme: one circuit of 2d+1 layers per round.
///
/// The mid-circuit measurement of `N_d` is deferred to the final
/// measurement, which leaves the distribution of `Q` unchanged.
#[derive(Clone, Debug)]
pub struct SolverCq {
    pub task: Task,
    pub max_rounds: usize,
    pub schedule: UncomputeSchedule,
}

impl SolverCq {
    pub fn new(task: Task, n: usize) -> Self {
        Self {
            task,
            max_rounds: match task {
                Task::Search => 4 * n + 20,
                Task::Decision => n + 10,
            },
            schedule: UncomputeSchedule::Sequential,
        }
    }

    pub fn circuit(&self, params: OracleParams) -> Result<(Circuit, RegId), SchemeError> {
        let regs = SolverRegisters::new(params)?;
        let mut ops = vec![CircuitOp::Hadamard(regs.q)];
        ops.extend((0..=params.d).map(|i| CircuitOp::Oracle(vec![regs.slot(i)])));
        ops.extend(regs.uncompute_layers(self.schedule).into_iter().map(CircuitOp::Oracle));
        ops.push(CircuitOp::Hadamard(regs.q));
        Ok((
            Circuit {
                layout: regs.layout,
                ops,
            },
            regs.q,
        ))
    }
}

impl CqAdversary for SolverCq {
    type Output = Guess;

    fn run(&mut self, s: &mut CqSession<'_>) -> Result<Guess, SchemeError> {
        let p = s.params();
        let (circuit, q) = self.circuit(p)?;
        let sample = |s: &mut CqSession<'_>| -> Result<BitVector, SchemeError> {
            let cfg = s.run_circuit(&circuit)?;
            Ok(BitVector::new(circuit.layout.get(cfg, q), p.n).expect("register fits"))
        };
        let mut rows = BitMatrix::new(p.n).expect("valid width");
        match self.task {
            Task::Search => {
                for round in 0..=self.max_rounds {
                    if let Some(c) = shift_from_rows(&rows) {
                        if s.path_query(0)? == s.path_query(c.bits())? {
                            return Ok(Guess::Shift(c));
                        }
                        rows = BitMatrix::new(p.n).expect("valid width");
                    }
                    if rank(&rows) == p.n {
                        rows = BitMatrix::new(p.n).expect("valid width");
                    }
                    if round < self.max_rounds {
                        rows.push(sample(s)?).expect("widths agree");
                    }
                }
                Ok(Guess::Abstain)
            }
            Task::Decision => {
                for _ in 0..self.max_rounds {
                    rows.push(sample(s)?).expect("widths agree");
                }
                if rank(&rows) == p.n {
                    return Ok(Guess::Kind(InstanceKind::OneToOne));
                }
                let y0 = s.path_query(0)?;
                let basis = null_space_basis(&rows);
                for c in crate::gf2lin::span_nonzero(&basis).take(crate::solver::MAX_DECISION_CANDIDATES) {
                    if s.path_query(c.bits())? == y0 {
                        return Ok(Guess::Kind(InstanceKind::Simon));
                    }
                }
                Ok(Guess::Kind(InstanceKind::OneToOne))
            }
        }
    }
}

/// The solver as a single d-QC run: `copies` rounds side by side, sharing
/// each of the 2d+1 oracle layers. Post-processing is purely classical.
#[derive(Clone, Debug)]
pub struct SolverQc {
    pub task: Task,
    pub copies: usize,
    pub schedule: UncomputeSchedule,
}

impl SolverQc {
    pub fn new(task: Task, n: usize) -> Self {
        Self {
            task,
            copies: n + 10,
            schedule: UncomputeSchedule::Sequential,
        }
    }
}

impl QcAdversary for SolverQc {
    type Output = Guess;

    fn run(&mut self, s: &mut QcSession<'_>) -> Result<Guess, SchemeError> {
        let p = s.params();
        let mut copies = Vec::with_capacity(self.copies);
        for c in 0..self.copies {
            let shape = SolverRegisters::with_prefix(p, &format!("c{c}."))?;
            let q = s.alloc(&shape.layout.reg(shape.q).name, p.n)?;
            let mut answers = Vec::new();
            for &a in &shape.answers {
                let r = shape.layout.reg(a);
                answers.push(s.alloc(&r.name, r.width)?);
            }
            s.hadamard(q)?;
            copies.push((q, answers));
        }
        let slot = |q: RegId, answers: &[RegId], level: usize| QuerySlot {
            level,
            input: if level == 0 { q } else { answers[level - 1] },
            target: answers[level],
        };
        for level in 0..=p.d {
            let layer: Vec<_> = copies.iter().map(|(q, a)| slot(*q, a, level)).collect();
            s.oracle_layer(&layer)?;
        }
        let cores: Vec<RegId> = copies.iter().map(|(_, a)| a[p.d]).collect();
        s.measure(&cores)?;
        let uncompute: Vec<Vec<usize>> = match self.schedule {
            UncomputeSchedule::Sequential => (0..p.d).rev().map(|i| vec![i]).collect(),
            UncomputeSchedule::SingleLayer if p.d > 0 => vec![(0..p.d).collect()],
            UncomputeSchedule::SingleLayer => Vec::new(),
        };
        for levels in uncompute {
            let layer: Vec<_> = copies
                .iter()
                .flat_map(|(q, a)| levels.iter().map(move |&i| slot(*q, a, i)))
                .collect();
            s.oracle_layer(&layer)?;
        }
        let qs: Vec<RegId> = copies.iter().map(|(q, _)| *q).collect();
        for &q in &qs {
            s.hadamard(q)?;
        }
        let js = s.measure(&qs)?;
        let mut rows = BitMatrix::new(p.n).expect("valid width");
        for j in js {
            rows.push(BitVector::new(j, p.n).expect("register fits"))
                .expect("widths agree");
        }
        Ok(match self.task {
            Task::Search => shift_from_rows(&rows).map_or(Guess::Abstain, Guess::Shift),
            Task::Decision if rank(&rows) == p.n => Guess::Kind(InstanceKind::OneToOne),
            Task::Decision => Guess::Kind(InstanceKind::Simon),
        })
    }
}

/// Path queries at `q` distinct random inputs; a collision of final values
/// yields the shift.
#[derive(Clone, Copy, Debug)]
pub struct ClassicalCollision {
    pub q: usize,
}

impl CqAdversary for ClassicalCollision {
    type Output = Guess;

    fn run(&mut self, s: &mut CqSession<'_>) -> Result<Guess, SchemeError> {
        let n = s.params().n;
        let size = 1usize << n;
        let xs = index::sample(s.rng(), size, self.q.min(size));
        let mut seen: HashMap<ShuffledValue, u64> = HashMap::new();
        for x in xs.iter() {
            let y = s.path_query(x as u64)?;
            if let Some(&x1) = seen.get(&y) {
                return Ok(Guess::Shift(BitVector::new(x1 ^ x as u64, n).expect("fits")));
            }
            seen.insert(y, x as u64);
        }
        Ok(Guess::Abstain)
    }
}

/// Runs [`ClassicalCollision`] under a budget that admits exactly `q` path
/// queries and no circuit use.
pub fn classical_collision_adversary(oracle: &dyn OracleAccess, q: usize, rng: &mut dyn RngCore) -> SchemeRun<Guess> {
    let cost = PathCost::One.charge(oracle.params().d);
    let budget = SchemeBudget::new(1, 1, (q as u64 * cost).max(1)).expect("positive budget");
    run_d_cq(&mut ClassicalCollision { q }, oracle, budget, rng)
}

/// The solver's forward chase cut to the depth budget. Each probe prepares
/// a uniform `Q`, chases `min(depth, d+1)` levels, and measures everything.
/// Two probes with different `x` and equal endpoint reveal a collision and
/// the guess is Simon. Otherwise the guess is one-to-one if the chase reached
/// `f_d`, and a coin flip if it did not.
#[derive(Clone, Copy, Debug)]
pub struct TruncatedQuantum {
    pub probes: usize,
}

impl CqAdversary for TruncatedQuantum {
    type Output = Guess;

    fn run(&mut self, s: &mut CqSession<'_>) -> Result<Guess, SchemeError> {
        let p = s.params();
        let layers = (s.budget().depth as usize).min(p.d + 1);
        let regs = SolverRegisters::new(p)?;
        let mut ops = vec![CircuitOp::Hadamard(regs.q)];
        ops.extend((0..layers).map(|i| CircuitOp::Oracle(vec![regs.slot(i)])));
        let circuit = Circuit {
            layout: regs.layout.clone(),
            ops,
        };
        let end = if layers == 0 { regs.q } else { regs.answers[layers - 1] };
        let mut seen: HashMap<u64, u64> = HashMap::new();
        for _ in 0..self.probes {
            let cfg = s.run_circuit(&circuit)?;
            let x = regs.layout.get(cfg, regs.q);
            let y = regs.layout.get(cfg, end);
            match seen.get(&y) {
                Some(&x1) if x1 != x => return Ok(Guess::Kind(InstanceKind::Simon)),
                _ => {
                    seen.insert(y, x);
                }
            }
        }
        if layers == p.d + 1 {
            // Endpoints were f values; no collision among them is evidence.
            return Ok(Guess::Kind(InstanceKind::OneToOne));
        }
        Ok(Guess::Kind(if s.rng().gen::<bool>() {
            InstanceKind::Simon
        } else {
            InstanceKind::OneToOne
        }))
    }
}

/// Asks for one oracle layer more than the budget allows.
#[derive(Clone, Copy, Debug, Default)]
pub struct DepthViolator;

impl CqAdversary for DepthViolator {
    type Output = Guess;

    fn run(&mut self, s: &mut CqSession<'_>) -> Result<Guess, SchemeError> {
        let p = s.params();
        let mut layout = RegisterLayout::new();
        let q = layout.add("Q", p.n)?;
        let a = layout.add("N0", crate::qsim::answer_register_width(p, 0))?;
        let slot = QuerySlot {
            level: 0,
            input: q,
            target: a,
        };
        let layers = s.budget().depth as usize + 1;
        let circuit = Circuit {
            layout,
            ops: vec![CircuitOp::Oracle(vec![slot]); layers],
        };
        s.run_circuit(&circuit)?;
        Ok(Guess::Abstain)
    }
}

impl QcAdversary for DepthViolator {
    type Output = Guess;

    fn run(&mut self, s: &mut QcSession<'_>) -> Result<Guess, SchemeError> {
        let p = s.params();
        let q = s.alloc("Q", p.n)?;
        let a = s.alloc("N0", crate::qsim::answer_register_width(p, 0))?;
        let slot = QuerySlot {
            level: 0,
            input: q,
            target: a,
        };
        for _ in 0..=s.budget().depth {
            s.oracle_layer(&[slot])?;
        }
        Ok(Guess::Abstain)
    }
}

/// Success rate with a Wilson 95% interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessEstimate {
    pub successes: usize,
    pub trials: usize,
    pub rate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

pub fn wilson_interval(successes: usize, trials: usize) -> SuccessEstimate {
    if trials == 0 {
        return SuccessEstimate {
            successes,
            trials,
            rate: 0.0,
            ci_lo: 0.0,
            ci_hi: 1.0,
        };
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    SuccessEstimate {
        successes,
        trials,
        rate: p,
        ci_lo: (centre - half).max(0.0).min(p),
        ci_hi: (centre + half).min(1.0).max(p),
    }
}

/// Runs `trial` on independent streams and summarizes the successes.
pub fn estimate_success<F>(trials: usize, seed: u64, mode: ExecMode, trial: F) -> SuccessEstimate
where
    F: Fn(&mut ChaCha8Rng) -> bool + Sync + Send,
{
    let wins = run_trials(trials, seed, mode, |_, rng| trial(rng))
        .into_iter()
        .filter(|&w| w)
        .count();
    wilson_interval(wins, trials)
}
