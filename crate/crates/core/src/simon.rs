//! Simon and one-to-one function instances on Z_2^n.

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf2lin::BitVector;

/// Dense tables are capped well below what memory allows; instances are
/// desk-scale and the oracle handles blown-up domains.
pub const MAX_INSTANCE_WIDTH: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimonError {
    #[error("instance width must be in 1..={MAX_INSTANCE_WIDTH}, got {0}")]
    InvalidWidth(usize),
    #[error("malformed instance: {0}")]
    Malformed(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    Simon,
    OneToOne,
}

/// A hidden function f: Z_2^n -> Z_2^n stored as a full table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "InstanceRecord", into = "InstanceRecord")]
pub struct SimonInstance {
    n: usize,
    kind: InstanceKind,
    shift: Option<u64>,
    table: Vec<u64>,
}

/// Wire form: `{n, kind, s?, table}`.
#[derive(Serialize, Deserialize)]
struct InstanceRecord {
    n: usize,
    kind: InstanceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    s: Option<u64>,
    table: Vec<u64>,
}

impl From<SimonInstance> for InstanceRecord {
    fn from(i: SimonInstance) -> Self {
        Self {
            n: i.n,
            kind: i.kind,
            s: i.shift,
            table: i.table,
        }
    }
}

impl TryFrom<InstanceRecord> for SimonInstance {
    type Error = SimonError;

    fn try_from(r: InstanceRecord) -> Result<Self, Self::Error> {
        SimonInstance::from_parts(r.n, r.kind, r.s, r.table)
    }
}

fn check_width(n: usize) -> Result<(), SimonError> {
    if n == 0 || n > MAX_INSTANCE_WIDTH {
        return Err(SimonError::InvalidWidth(n));
    }
    Ok(())
}

impl SimonInstance {
    /// Builds an instance from raw parts, validating the kind invariants.
    pub fn from_parts(n: usize, kind: InstanceKind, shift: Option<u64>, table: Vec<u64>) -> Result<Self, SimonError> {
        check_width(n)?;
        let size = 1usize << n;
        if table.len() != size {
            return Err(SimonError::Malformed(format!(
                "table has {} entries, expected {size}",
                table.len()
            )));
        }
        if table.iter().any(|&y| y >> n != 0) {
            return Err(SimonError::Malformed("table value out of range".into()));
        }
        match (kind, shift) {
            (InstanceKind::Simon, Some(s)) => {
                if s == 0 || s >> n != 0 {
                    return Err(SimonError::Malformed(format!("invalid shift {s}")));
                }
                let mut seen = vec![false; size];
                for x in 0..size as u64 {
                    if table[x as usize] != table[(x ^ s) as usize] {
                        return Err(SimonError::Malformed("table is not s-periodic".into()));
                    }
                    if x < x ^ s {
                        let y = table[x as usize] as usize;
                        if seen[y] {
                            return Err(SimonError::Malformed("table is not two-to-one".into()));
                        }
                        seen[y] = true;
                    }
                }
            }
            (InstanceKind::OneToOne, None) => {
                let mut seen = vec![false; size];
                for &y in &table {
                    if std::mem::replace(&mut seen[y as usize], true) {
                        return Err(SimonError::Malformed("table is not injective".into()));
                    }
                }
            }
            _ => {
                return Err(SimonError::Malformed(
                    "shift must be present exactly for Simon instances".into(),
                ))
            }
        }
        Ok(Self { n, kind, shift, table })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> InstanceKind {
        self.kind
    }

    pub fn shift(&self) -> Option<BitVector> {
        self.shift.map(|s| BitVector::new(s, self.n).expect("validated shift"))
    }

    pub fn table(&self) -> &[u64] {
        &self.table
    }

    /// f(x) for `x < 2^n`.
    #[inline]
    pub fn eval(&self, x: u64) -> u64 {
        self.table[x as usize]
    }

    /// True iff `candidate` is a nonzero period of the table.
    pub fn verify_shift(&self, candidate: &BitVector) -> bool {
        if candidate.width() != self.n || candidate.is_zero() {
            return false;
        }
        let c = candidate.bits();
        (0..self.table.len() as u64).all(|x| self.eval(x) == self.eval(x ^ c))
    }
}

/// Uniform Simon function: uniform nonzero shift, then a uniform injection
/// from the 2^(n-1) cosets {x, x^s} into Z_2^n.
pub fn sample_simon<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<SimonInstance, SimonError> {
    check_width(n)?;
    let size = 1usize << n;
    let s = rng.gen_range(1..size as u64);
    // Coset representative: the member with the top bit of s cleared.
    let top = 63 - s.leading_zeros();
    let outputs = index::sample(rng, size, size / 2);
    let mut table = vec![0u64; size];
    let mut reps = (0..size as u64).filter(|x| (x >> top) & 1 == 0);
    for y in outputs.iter() {
        let x = reps.next().expect("2^(n-1) representatives");
        table[x as usize] = y as u64;
        table[(x ^ s) as usize] = y as u64;
    }
    Ok(SimonInstance {
        n,
        kind: InstanceKind::Simon,
        shift: Some(s),
        table,
    })
}

/// Uniform permutation of Z_2^n.
pub fn sample_one_to_one<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<SimonInstance, SimonError> {
    check_width(n)?;
    let mut table: Vec<u64> = (0..1u64 << n).collect();
    table.shuffle(rng);
    Ok(SimonInstance {
        n,
        kind: InstanceKind::OneToOne,
        shift: None,
        table,
    })
}

/// Simon or one-to-one with equal probability.
pub fn sample_decision_instance<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<SimonInstance, SimonError> {
    if rng.gen::<bool>() {
        sample_simon(n, rng)
    } else {
        sample_one_to_one(n, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn distinct(t: &[u64]) -> usize {
        t.iter().collect::<HashSet<_>>().len()
    }

    #[test]
    fn n1_simon_has_shift_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let inst = sample_simon(1, &mut rng).unwrap();
            assert_eq!(inst.shift().unwrap().bits(), 1);
            assert_eq!(inst.eval(0), inst.eval(1));
        }
    }

    #[test]
    fn simon_is_two_to_one_and_periodic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 1..=8 {
            for _ in 0..20 {
                let inst = sample_simon(n, &mut rng).unwrap();
                assert_eq!(distinct(inst.table()), 1 << (n - 1));
                let s = inst.shift().unwrap();
                assert!(inst.verify_shift(&s));
                assert!(!inst.verify_shift(&BitVector::zero(n).unwrap()));
                // {x, x^s} partition the domain
                let mut covered = vec![0u8; 1 << n];
                for x in 0..1u64 << n {
                    if x < x ^ s.bits() {
                        covered[x as usize] += 1;
                        covered[(x ^ s.bits()) as usize] += 1;
                    }
                }
                assert!(covered.iter().all(|&c| c == 1));
            }
        }
    }

    #[test]
    fn n2_simon_has_two_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = sample_simon(2, &mut rng).unwrap();
        assert_eq!(distinct(inst.table()), 2);
    }

    #[test]
    fn shift_is_uniform_n3() {
        // Multinomial over 7 nonzero shifts, 1000 draws: every count within
        // 3 sigma of 1000/7.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut counts = [0usize; 8];
        for _ in 0..1000 {
            counts[sample_simon(3, &mut rng).unwrap().shift().unwrap().bits() as usize] += 1;
        }
        assert_eq!(counts[0], 0);
        let p: f64 = 1.0 / 7.0;
        let mean = 1000.0 * p;
        let sd = (1000.0 * p * (1.0 - p)).sqrt();
        for &c in &counts[1..] {
            assert!((c as f64 - mean).abs() <= 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn one_to_one_is_injective() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut seen = HashSet::new();
        for _ in 0..200 {
            let inst = sample_one_to_one(1, &mut rng).unwrap();
            seen.insert(inst.table().to_vec());
        }
        assert_eq!(seen.len(), 2);
        assert_eq!(distinct(sample_one_to_one(2, &mut rng).unwrap().table()), 4);
        for _ in 0..1000 {
            let inst = sample_one_to_one(3, &mut rng).unwrap();
            assert_eq!(distinct(inst.table()), 8);
            let c = BitVector::new(rng.gen_range(1..8), 3).unwrap();
            assert!(!inst.verify_shift(&c));
        }
    }

    #[test]
    fn decision_mix_is_balanced() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let trials = 10_000;
        let simon = (0..trials)
            .filter(|_| sample_decision_instance(3, &mut rng).unwrap().kind() == InstanceKind::Simon)
            .count();
        let sd = (trials as f64 * 0.25).sqrt();
        assert!((simon as f64 - trials as f64 / 2.0).abs() <= 3.0 * sd);
    }

    #[test]
    fn decision_instances_replay_and_validate() {
        let a = sample_decision_instance(1, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_decision_instance(1, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        for seed in 0..20 {
            let i = sample_decision_instance(1, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            SimonInstance::from_parts(1, i.kind(), i.shift().map(|s| s.bits()), i.table().to_vec()).unwrap();
        }
    }

    #[test]
    fn width_zero_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_simon(0, &mut rng), Err(SimonError::InvalidWidth(0)));
        assert_eq!(sample_one_to_one(0, &mut rng), Err(SimonError::InvalidWidth(0)));
    }

    #[test]
    fn json_roundtrip_and_validation() {
        let inst = sample_simon(3, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let js = serde_json::to_string(&inst).unwrap();
        assert!(js.contains("\"kind\":\"simon\""));
        assert_eq!(serde_json::from_str::<SimonInstance>(&js).unwrap(), inst);
        let bad = r#"{"n":2,"kind":"one_to_one","table":[0,0,1,2]}"#;
        assert!(serde_json::from_str::<SimonInstance>(bad).is_err());
        let perm = sample_one_to_one(2, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert!(!serde_json::to_string(&perm).unwrap().contains("\"s\""));
    }
}
