//! The (d, f)-shuffling oracle.
//!
//! A shuffling of `f: Z_2^n -> Z_2^n` is a tuple `(f_0, ..., f_d)` where
//! `f_0 .. f_{d-1}` are uniform permutations of `Z_2^{(d+2)n}` and `f_d`
//! maps `S_d = f_{d-1} ∘ ... ∘ f_0(Z_2^n)` onto the values of `f`, answering
//! `⊥` everywhere else. `Z_2^n` sits inside the big domain as the points
//! whose high bits are zero.
//!
//! Two backends share one query surface:
//!
//! * [`BackendKind::Materialized`] samples every table up front. Required for
//!   anything that enumerates sets (level sets, hidden sets, shadows).
//! * [`BackendKind::Lazy`] reveals permutation entries on first use, so the
//!   big domain can be as wide as 63 bits. Only forward queries exist.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::simon::SimonInstance;

/// Default cap on `(d+2)·n` for the materialized backend.
pub const DEFAULT_MATERIALIZE_CAP_BITS: usize = 20;
/// Largest domain the lazy backend addresses.
pub const MAX_LAZY_DOMAIN_BITS: usize = 63;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("level {level} out of range for depth {d}")]
    LevelOutOfRange { level: usize, d: usize },
    #[error("point {x:#x} outside the {bits}-bit domain")]
    OutOfDomain { x: u64, bits: usize },
    #[error("materialized oracle needs {bits} domain bits, cap is {cap}")]
    CapacityExceeded { bits: usize, cap: usize },
    #[error("lazy oracle domain of {0} bits exceeds {MAX_LAZY_DOMAIN_BITS}")]
    DomainTooWide(usize),
    #[error("{0} require materialized oracle")]
    RequiresMaterialized(&'static str),
    #[error("inverse queries are not supported by the lazy backend")]
    InverseUnsupported,
    #[error("injective sampler exhausted: all {0} images revealed")]
    Exhausted(u64),
}

/// An oracle answer: a domain value or the distinguished `⊥`.
///
/// Serializes as a JSON number, or as the string `"bot"` for `⊥`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ShuffledValue {
    Value(u64),
    Bot,
}

impl ShuffledValue {
    pub fn value(self) -> Option<u64> {
        match self {
            Self::Value(v) => Some(v),
            Self::Bot => None,
        }
    }

    pub fn is_bot(self) -> bool {
        matches!(self, Self::Bot)
    }
}

impl fmt::Display for ShuffledValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Value(v) => write!(f, "{v}"),
            Self::Bot => f.write_str("⊥"),
        }
    }
}

impl Serialize for ShuffledValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Value(v) => s.serialize_u64(*v),
            Self::Bot => s.serialize_str("bot"),
        }
    }
}

impl<'de> Deserialize<'de> for ShuffledValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = ShuffledValue;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an unsigned integer or \"bot\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<ShuffledValue, E> {
                Ok(ShuffledValue::Value(v))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<ShuffledValue, E> {
                if v == "bot" {
                    Ok(ShuffledValue::Bot)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OracleParams {
    pub n: usize,
    pub d: usize,
}

impl OracleParams {
    /// Width of the shuffled domain, `(d+2)·n`.
    pub fn domain_bits(&self) -> usize {
        (self.d + 2) * self.n
    }

    /// Width of a non-`⊥` answer at `level`.
    pub fn answer_bits(&self, level: usize) -> usize {
        if level < self.d {
            self.domain_bits()
        } else {
            self.n
        }
    }

    pub(crate) fn check_point(&self, level: usize, x: u64) -> Result<(), OracleError> {
        if level > self.d {
            return Err(OracleError::LevelOutOfRange { level, d: self.d });
        }
        let bits = self.domain_bits();
        if bits < 64 && x >> bits != 0 {
            return Err(OracleError::OutOfDomain { x, bits });
        }
        Ok(())
    }
}

/// A chain `(x_0, ..., x_{d+1})` with `f_i(x_i) = x_{i+1}`.
///
/// Once a step answers `⊥` every later step is `⊥` too.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Path {
    pub steps: Vec<ShuffledValue>,
}

impl Path {
    pub fn start(&self) -> u64 {
        self.steps[0].value().expect("path starts in Z_2^n")
    }

    pub fn output(&self) -> ShuffledValue {
        *self.steps.last().expect("nonempty path")
    }
}

/// Forward query access shared by real oracles, shadows, and recorders.
pub trait OracleAccess: Sync {
    fn params(&self) -> OracleParams;

    /// `f_level(x)`. Levels below `d` never answer `⊥` on a real oracle.
    fn query(&self, level: usize, x: u64) -> Result<ShuffledValue, OracleError>;

    /// Chases `x0 ∈ Z_2^n` through every level.
    fn path(&self, x0: u64) -> Result<Path, OracleError> {
        let p = self.params();
        if p.n < 64 && x0 >> p.n != 0 {
            return Err(OracleError::OutOfDomain { x: x0, bits: p.n });
        }
        let mut steps = Vec::with_capacity(p.d + 2);
        steps.push(ShuffledValue::Value(x0));
        let mut cur = ShuffledValue::Value(x0);
        for level in 0..=p.d {
            cur = match cur {
                ShuffledValue::Value(x) => self.query(level, x)?,
                ShuffledValue::Bot => ShuffledValue::Bot,
            };
            steps.push(cur);
        }
        Ok(Path { steps })
    }
}

impl<T: OracleAccess + ?Sized> OracleAccess for &T {
    fn params(&self) -> OracleParams {
        (**self).params()
    }
    fn query(&self, level: usize, x: u64) -> Result<ShuffledValue, OracleError> {
        (**self).query(level, x)
    }
    fn path(&self, x0: u64) -> Result<Path, OracleError> {
        (**self).path(x0)
    }
}

/// Incrementally revealed uniform injection of `{0..size}` into itself.
///
/// Each fresh input receives an image drawn uniformly from the images not
/// yet used, which is exactly the conditional law of a uniform permutation
/// given the revealed prefix.
#[derive(Clone, Debug)]
pub struct InjectiveSampler {
    size: u64,
    forward: HashMap<u64, u64>,
    used: HashSet<u64>,
}

impl InjectiveSampler {
    pub fn new(size: u64) -> Self {
        Self {
            size,
            forward: HashMap::new(),
            used: HashSet::new(),
        }
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn revealed(&self) -> usize {
        self.forward.len()
    }

    pub fn get(&self, x: u64) -> Option<u64> {
        self.forward.get(&x).copied()
    }

    /// Draws an image nobody has used yet.
    pub fn next_image<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<u64, OracleError> {
        if self.used.len() as u64 >= self.size {
            return Err(OracleError::Exhausted(self.size));
        }
        loop {
            let y = rng.gen_range(0..self.size);
            if self.used.insert(y) {
                return Ok(y);
            }
        }
    }

    /// The image of `x`, revealing it if necessary.
    pub fn image<R: Rng + ?Sized>(&mut self, x: u64, rng: &mut R) -> Result<u64, OracleError> {
        if x >= self.size {
            return Err(OracleError::OutOfDomain {
                x,
                bits: 64 - self.size.saturating_sub(1).leading_zeros() as usize,
            });
        }
        if let Some(y) = self.forward.get(&x) {
            return Ok(*y);
        }
        let y = self.next_image(rng)?;
        self.forward.insert(x, y);
        Ok(y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Materialized,
    Lazy,
}

impl std::str::FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "materialized" => Ok(Self::Materialized),
            "lazy" => Ok(Self::Lazy),
            other => Err(format!("unknown backend {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SampleOptions {
    pub backend: BackendKind,
    pub materialize_cap_bits: usize,
}

impl SampleOptions {
    pub fn materialized() -> Self {
        Self {
            backend: BackendKind::Materialized,
            materialize_cap_bits: DEFAULT_MATERIALIZE_CAP_BITS,
        }
    }

    pub fn lazy() -> Self {
        Self {
            backend: BackendKind::Lazy,
            ..Self::materialized()
        }
    }

    pub fn with_backend(backend: BackendKind) -> Self {
        Self {
            backend,
            ..Self::materialized()
        }
    }
}

struct Tables {
    perms: Vec<Vec<u32>>,
    /// `chains[j][x0]` is the level-`j` point on the path from `x0`.
    chains: Vec<Vec<u64>>,
    /// `f_d^*`: S_d point -> f value.
    core: HashMap<u64, u64>,
}

struct LazyState {
    n: usize,
    rng: ChaCha8Rng,
    levels: Vec<InjectiveSampler>,
    /// `members[j]`: known points of `S_j` (j >= 1) with their origin `x0`.
    members: Vec<HashMap<u64, u64>>,
}

enum Backend {
    Materialized(Tables),
    Lazy(Box<Mutex<LazyState>>),
}

/// A sampled shuffling of a [`SimonInstance`].
pub struct ShufflingOracle {
    params: OracleParams,
    instance: SimonInstance,
    backend: Backend,
}

impl fmt::Debug for ShufflingOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ShufflingOracle")
            .field("params", &self.params)
            .field("backend", &self.backend_kind())
            .finish()
    }
}

/// Draws `f_0 .. f_{d-1}` uniformly and fixes `f_d^*` so the composition
/// reproduces `instance`.
pub fn sample_shuffling<R: Rng + ?Sized>(
    instance: SimonInstance,
    d: usize,
    rng: &mut R,
    options: SampleOptions,
) -> Result<ShufflingOracle, OracleError> {
    let params = OracleParams { n: instance.n(), d };
    let bits = params.domain_bits();
    let backend = match options.backend {
        BackendKind::Materialized => {
            if bits > options.materialize_cap_bits || bits > 32 {
                return Err(OracleError::CapacityExceeded {
                    bits,
                    cap: options.materialize_cap_bits.min(32),
                });
            }
            Backend::Materialized(materialize(&instance, d, rng))
        }
        BackendKind::Lazy => {
            if bits > MAX_LAZY_DOMAIN_BITS {
                return Err(OracleError::DomainTooWide(bits));
            }
            let size = 1u64 << bits;
            Backend::Lazy(Box::new(Mutex::new(LazyState {
                n: params.n,
                rng: ChaCha8Rng::seed_from_u64(rng.gen()),
                levels: (0..d).map(|_| InjectiveSampler::new(size)).collect(),
                members: vec![HashMap::new(); d + 1],
            })))
        }
    };
    Ok(ShufflingOracle {
        params,
        instance,
        backend,
    })
}

fn materialize<R: Rng + ?Sized>(instance: &SimonInstance, d: usize, rng: &mut R) -> Tables {
    let n = instance.n();
    let size = 1usize << ((d + 2) * n);
    let mut perms = Vec::with_capacity(d);
    for _ in 0..d {
        let mut p: Vec<u32> = (0..size as u32).collect();
        p.shuffle(rng);
        perms.push(p);
    }
    let mut chains = vec![(0..1u64 << n).collect::<Vec<_>>()];
    for p in &perms {
        let next = chains.last().unwrap().iter().map(|&x| p[x as usize] as u64).collect();
        chains.push(next);
    }
    let core = chains[d]
        .iter()
        .enumerate()
        .map(|(x0, &y)| (y, instance.eval(x0 as u64)))
        .collect();
    Tables { perms, chains, core }
}

impl LazyState {
    fn reveal(&mut self, level: usize, x: u64) -> Result<u64, OracleError> {
        let y = self.levels[level].image(x, &mut self.rng)?;
        let origin = if level == 0 {
            (x >> self.n == 0).then_some(x)
        } else {
            self.members[level].get(&x).copied()
        };
        if let Some(x0) = origin {
            self.members[level + 1].insert(y, x0);
        }
        Ok(y)
    }
}

impl ShufflingOracle {
    pub fn params(&self) -> OracleParams {
        self.params
    }

    pub fn instance(&self) -> &SimonInstance {
        &self.instance
    }

    pub fn backend_kind(&self) -> BackendKind {
        match self.backend {
            Backend::Materialized(_) => BackendKind::Materialized,
            Backend::Lazy(_) => BackendKind::Lazy,
        }
    }

    fn tables(&self, what: &'static str) -> Result<&Tables, OracleError> {
        match &self.backend {
            Backend::Materialized(t) => Ok(t),
            Backend::Lazy(_) => Err(OracleError::RequiresMaterialized(what)),
        }
    }

    /// The full table of `f_level` for `level < d`.
    pub fn permutation(&self, level: usize) -> Result<&[u32], OracleError> {
        if level >= self.params.d {
            return Err(OracleError::LevelOutOfRange {
                level,
                d: self.params.d,
            });
        }
        Ok(&self.tables("permutation tables")?.perms[level])
    }

    /// `chains[j][x0]`: the level-`j` point reached from `x0`.
    pub fn chains(&self) -> Result<&[Vec<u64>], OracleError> {
        Ok(&self.tables("chains")?.chains)
    }

    pub fn level_sets(&self) -> Result<LevelSets, OracleError> {
        let t = self.tables("level sets")?;
        let sets = t
            .chains
            .iter()
            .map(|c| {
                let mut s = c.clone();
                s.sort_unstable();
                s
            })
            .collect();
        Ok(LevelSets { sets })
    }

    /// The unique `x` with `f_level(x) = y`. Materialized only.
    pub fn query_inverse(&self, level: usize, y: u64) -> Result<Option<u64>, OracleError> {
        self.params.check_point(level, y)?;
        let t = match &self.backend {
            Backend::Materialized(t) => t,
            Backend::Lazy(_) => return Err(OracleError::InverseUnsupported),
        };
        if level < self.params.d {
            Ok(t.perms[level].iter().position(|&v| v as u64 == y).map(|p| p as u64))
        } else {
            Ok(None)
        }
    }

    fn core_answer(&self, t: &Tables, y: u64) -> ShuffledValue {
        match t.core.get(&y) {
            Some(&v) => ShuffledValue::Value(v),
            None => ShuffledValue::Bot,
        }
    }

    fn lazy_query(&self, state: &mut LazyState, level: usize, x: u64) -> Result<ShuffledValue, OracleError> {
        let p = self.params;
        if level < p.d {
            return state.reveal(level, x).map(ShuffledValue::Value);
        }
        if p.d == 0 {
            return Ok(if x >> p.n == 0 {
                ShuffledValue::Value(self.instance.eval(x))
            } else {
                ShuffledValue::Bot
            });
        }
        if let Some(&x0) = state.members[p.d].get(&x) {
            return Ok(ShuffledValue::Value(self.instance.eval(x0)));
        }
        let full = 1usize << p.n;
        if state.members[p.d].len() < full {
            // Membership of an unseen point is still random; settle it by
            // revealing every chain from Z_2^n (forward queries only).
            for x0 in 0..full as u64 {
                let mut cur = x0;
                for level in 0..p.d {
                    cur = state.reveal(level, cur)?;
                }
            }
        }
        Ok(match state.members[p.d].get(&x) {
            Some(&x0) => ShuffledValue::Value(self.instance.eval(x0)),
            None => ShuffledValue::Bot,
        })
    }
}

impl OracleAccess for ShufflingOracle {
    fn params(&self) -> OracleParams {
        self.params
    }

    fn query(&self, level: usize, x: u64) -> Result<ShuffledValue, OracleError> {
        self.params.check_point(level, x)?;
        match &self.backend {
            Backend::Materialized(t) => Ok(if level < self.params.d {
                ShuffledValue::Value(t.perms[level][x as usize] as u64)
            } else {
                self.core_answer(t, x)
            }),
            Backend::Lazy(m) => {
                let mut state = m.lock().expect("lazy oracle lock");
                self.lazy_query(&mut state, level, x)
            }
        }
    }

    fn path(&self, x0: u64) -> Result<Path, OracleError> {
        let p = self.params;
        if x0 >> p.n != 0 {
            return Err(OracleError::OutOfDomain { x: x0, bits: p.n });
        }
        let mut steps = Vec::with_capacity(p.d + 2);
        steps.push(ShuffledValue::Value(x0));
        match &self.backend {
            Backend::Materialized(t) => {
                for j in 1..=p.d {
                    steps.push(ShuffledValue::Value(t.chains[j][x0 as usize]));
                }
            }
            Backend::Lazy(m) => {
                let mut state = m.lock().expect("lazy oracle lock");
                let mut cur = x0;
                for level in 0..p.d {
                    cur = state.reveal(level, cur)?;
                    steps.push(ShuffledValue::Value(cur));
                }
            }
        }
        steps.push(ShuffledValue::Value(self.instance.eval(x0)));
        Ok(Path { steps })
    }
}

/// `S_0 .. S_d`, each sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelSets {
    pub sets: Vec<Vec<u64>>,
}

impl LevelSets {
    pub fn contains(&self, level: usize, x: u64) -> bool {
        self.sets[level].binary_search(&x).is_ok()
    }
}

/// One logged query.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub level: usize,
    pub input: u64,
    pub answer: ShuffledValue,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub n: usize,
    pub d: usize,
    pub entries: Vec<TranscriptEntry>,
}

/// Wraps an oracle and logs every point query it answers.
pub struct RecordingOracle<O> {
    inner: O,
    log: Mutex<Vec<TranscriptEntry>>,
}

impl<O: OracleAccess> RecordingOracle<O> {
    pub fn new(inner: O) -> Self {
        Self {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn transcript(&self) -> Transcript {
        let p = self.inner.params();
        Transcript {
            n: p.n,
            d: p.d,
            entries: self.log.lock().expect("transcript lock").clone(),
        }
    }
}

impl<O: OracleAccess> OracleAccess for RecordingOracle<O> {
    fn params(&self) -> OracleParams {
        self.inner.params()
    }

    fn query(&self, level: usize, x: u64) -> Result<ShuffledValue, OracleError> {
        let answer = self.inner.query(level, x)?;
        self.log.lock().expect("transcript lock").push(TranscriptEntry {
            level,
            input: x,
            answer,
        });
        Ok(answer)
    }
}
