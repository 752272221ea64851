//! Reference implementations used only by tests: a dense statevector
//! simulator, dense density matrices, and goodness-of-fit helpers.

#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use shufflesim::oracle::ShufflingOracle;
use shufflesim::qsim::{MixedEnsemble, QuerySlot, RegId, Register, RegisterLayout, SparseState};

pub type CMat = DMatrix<Complex64>;

/// Full truth table of every level, built from the raw permutations rather
/// than the oracle's query path. `None` is `⊥`.
pub fn level_tables(o: &ShufflingOracle) -> Vec<Vec<Option<u64>>> {
    let p = o.params();
    let size = 1usize << p.domain_bits();
    let mut out: Vec<Vec<Option<u64>>> = (0..p.d)
        .map(|l| o.permutation(l).unwrap().iter().map(|&y| Some(y as u64)).collect())
        .collect();
    let mut last = vec![None; size];
    for x0 in 0..1u64 << p.n {
        let end = out.iter().fold(x0, |x, t| t[x as usize].unwrap());
        last[end as usize] = Some(o.instance().table()[x0 as usize]);
    }
    out.push(last);
    out
}

fn field(idx: usize, r: &Register) -> u64 {
    ((idx >> r.offset) as u64) & ((1u64 << r.width) - 1)
}

fn with_field(idx: usize, r: &Register, v: u64) -> usize {
    let mask = ((1usize << r.width) - 1) << r.offset;
    (idx & !mask) | ((v as usize) << r.offset)
}

/// Gate-by-gate dense simulation over a register layout.
pub struct DenseSim {
    pub layout: RegisterLayout,
    pub amps: Vec<Complex64>,
}

impl DenseSim {
    pub fn uniform(layout: RegisterLayout, reg: RegId, bits: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << layout.total_bits()];
        let r = layout.reg(reg).clone();
        let a = 1.0 / ((1u64 << bits) as f64).sqrt();
        for x in 0..1u64 << bits {
            amps[with_field(0, &r, x)] = Complex64::new(a, 0.0);
        }
        Self { layout, amps }
    }

    pub fn query(&mut self, tables: &[Vec<Option<u64>>], domain_bits: usize, slots: &[QuerySlot]) {
        let d = tables.len() - 1;
        let mut out = vec![Complex64::new(0.0, 0.0); self.amps.len()];
        for (idx, &a) in self.amps.iter().enumerate() {
            if a.norm_sqr() == 0.0 {
                continue;
            }
            let mut next = idx;
            for s in slots {
                let inp = field(idx, self.layout.reg(s.input));
                let ans = if inp >> domain_bits != 0 {
                    None
                } else {
                    tables[s.level][inp as usize]
                };
                let tr = self.layout.reg(s.target);
                let value_bits = tr.width - 1;
                let enc = ans.unwrap_or(1 << value_bits);
                debug_assert!(s.level < d || value_bits < domain_bits);
                next = with_field(next, tr, field(next, tr) ^ enc);
            }
            out[next] += a;
        }
        self.amps = out;
    }

    pub fn project(&mut self, reg: RegId, value: u64) {
        let r = self.layout.reg(reg).clone();
        let mut norm = 0.0;
        for (idx, a) in self.amps.iter_mut().enumerate() {
            if field(idx, &r) != value {
                *a = Complex64::new(0.0, 0.0);
            }
            norm += a.norm_sqr();
        }
        let k = 1.0 / norm.sqrt();
        for a in &mut self.amps {
            *a *= k;
        }
    }

    /// Walsh-Hadamard on one register as an explicit sum over its values.
    pub fn hadamard(&mut self, reg: RegId) {
        let r = self.layout.reg(reg).clone();
        let k = 1.0 / ((1u64 << r.width) as f64).sqrt();
        let mut out = vec![Complex64::new(0.0, 0.0); self.amps.len()];
        for (idx, slot) in out.iter_mut().enumerate() {
            let y = field(idx, &r);
            let mut acc = Complex64::new(0.0, 0.0);
            for x in 0..1u64 << r.width {
                let sign = if (x & y).count_ones().is_multiple_of(2) {
                    1.0
                } else {
                    -1.0
                };
                acc += self.amps[with_field(idx, &r, x)] * sign;
            }
            *slot = acc * k;
        }
        self.amps = out;
    }

    pub fn max_diff(&self, s: &SparseState) -> f64 {
        let v = s.dense_statevector().unwrap();
        assert_eq!(v.len(), self.amps.len());
        v.iter()
            .zip(&self.amps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

pub fn random_state<R: Rng>(layout: &RegisterLayout, support: usize, rng: &mut R) -> SparseState {
    let size = 1u128 << layout.total_bits();
    let mut entries: Vec<(u128, Complex64)> = (0..support)
        .map(|_| {
            (
                rng.gen_range(0..size),
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            )
        })
        .collect();
    let norm: f64 = {
        let s = SparseState::from_amplitudes(layout.clone(), entries.clone());
        s.norm_sqr().sqrt()
    };
    for e in &mut entries {
        e.1 /= norm;
    }
    SparseState::from_amplitudes(layout.clone(), entries)
}

pub fn random_ensemble<R: Rng>(layout: &RegisterLayout, k: usize, rng: &mut R) -> MixedEnsemble {
    let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum();
    let support = 1usize << layout.total_bits();
    MixedEnsemble::new(
        w.into_iter()
            .map(|p| (p / total, random_state(layout, rng.gen_range(1..=support), rng)))
            .collect(),
    )
    .unwrap()
}

pub fn density(e: &MixedEnsemble) -> CMat {
    let dim = e.components()[0].1.dense_statevector().unwrap().len();
    let mut rho = CMat::zeros(dim, dim);
    for (p, s) in e.components() {
        let v = nalgebra::DVector::from_vec(s.dense_statevector().unwrap());
        rho += &v * v.adjoint() * Complex64::new(*p, 0.0);
    }
    rho
}

fn psd_sqrt(m: &CMat) -> CMat {
    let eig = m.clone().symmetric_eigen();
    // Rank-deficient inputs: eigenvalues at rounding level are exact zeros.
    let d = CMat::from_diagonal(
        &eig.eigenvalues
            .map(|l| Complex64::new(if l > 1e-12 { l.sqrt() } else { 0.0 }, 0.0)),
    );
    &eig.eigenvectors * d * eig.eigenvectors.adjoint()
}

/// `‖√ρ √σ‖_1`.
pub fn dense_fidelity(rho: &CMat, sigma: &CMat) -> f64 {
    (psd_sqrt(rho) * psd_sqrt(sigma)).singular_values().iter().sum()
}

pub fn dense_trace_distance(rho: &CMat, sigma: &CMat) -> f64 {
    0.5 * (rho - sigma)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|l| l.abs())
        .sum::<f64>()
}

/// Pearson statistic of `observed` against `probs` (cells with zero
/// probability must be empty).
pub fn chi_square(observed: &[usize], probs: &[f64]) -> f64 {
    let total: usize = observed.iter().sum();
    observed
        .iter()
        .zip(probs)
        .map(|(&o, &p)| {
            if p == 0.0 {
                assert_eq!(o, 0, "count in an impossible cell");
                return 0.0;
            }
            let e = p * total as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum()
}

/// Upper `alpha` quantile of the chi-square law with `df` degrees of freedom.
pub fn chi_square_critical(df: usize, alpha: f64) -> f64 {
    ChiSquared::new(df as f64).unwrap().inverse_cdf(1.0 - alpha)
}

/// Homogeneity statistic for two count vectors over the same cells.
pub fn chi_square_two_sample(a: &[usize], b: &[usize]) -> (f64, usize) {
    let (na, nb) = (a.iter().sum::<usize>() as f64, b.iter().sum::<usize>() as f64);
    let mut stat = 0.0;
    let mut cells = 0;
    for (&x, &y) in a.iter().zip(b) {
        let col = (x + y) as f64;
        if col == 0.0 {
            continue;
        }
        cells += 1;
        let ea = col * na / (na + nb);
        let eb = col * nb / (na + nb);
        stat += (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb;
    }
    (stat, cells.max(2) - 1)
}
