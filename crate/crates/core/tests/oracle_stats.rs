mod common;

use common::{chi_square, chi_square_critical};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use shufflesim::oracle::{sample_shuffling, InjectiveSampler, OracleAccess, SampleOptions, ShuffledValue};
use shufflesim::simon::sample_simon;

const RUNS: usize = 10_000;
const ALPHA: f64 = 1e-3;

// Reveal sequence at n=2, d=1: a = f_0(0), b = f_0(3), then whether f_1(7) is ⊥.
fn cell(a: u64, b: u64, bot: bool) -> usize {
    (a % 4) as usize * 8 + (b % 4) as usize * 2 + usize::from(bot)
}

fn exact_cells() -> Vec<f64> {
    let mut probs = vec![0.0; 32];
    let w = 1.0 / (64.0 * 63.0);
    for a in 0..64u64 {
        for b in (0..64u64).filter(|&b| b != a) {
            // 7 lies in S_1 if it is a or b, or one of the two unseen images.
            let inside = if a == 7 || b == 7 { 1.0 } else { 2.0 / 62.0 };
            probs[cell(a, b, false)] += w * inside;
            probs[cell(a, b, true)] += w * (1.0 - inside);
        }
    }
    probs
}

#[test]
fn backends_share_the_exact_answer_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inst = sample_simon(2, &mut rng).unwrap();
    let exact = exact_cells();
    assert!((exact.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let crit = chi_square_critical(31, ALPHA);
    for options in [SampleOptions::materialized(), SampleOptions::lazy()] {
        let mut counts = vec![0usize; 32];
        for _ in 0..RUNS {
            let o = sample_shuffling(inst.clone(), 1, &mut rng, options).unwrap();
            let a = o.query(0, 0).unwrap().value().unwrap();
            let b = o.query(0, 3).unwrap().value().unwrap();
            let bot = o.query(1, 7).unwrap().is_bot();
            assert_eq!(o.query(1, a).unwrap(), ShuffledValue::Value(inst.table()[0]));
            counts[cell(a, b, bot)] += 1;
        }
        let stat = chi_square(&counts, &exact);
        assert!(stat < crit, "{:?}: chi2 {stat} >= {crit}", options);
    }
}

#[test]
fn first_reveals_are_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut first = vec![0usize; 8];
    let mut pair = vec![0usize; 64];
    for _ in 0..RUNS {
        let mut s = InjectiveSampler::new(8);
        let y = s.image(5, &mut rng).unwrap();
        let z = s.image(2, &mut rng).unwrap();
        assert_eq!(s.image(5, &mut rng).unwrap(), y);
        first[y as usize] += 1;
        pair[(y * 8 + z) as usize] += 1;
    }
    assert!(chi_square(&first, &[1.0 / 8.0; 8]) < chi_square_critical(7, ALPHA));
    let joint: Vec<f64> = (0..64).map(|i| if i / 8 == i % 8 { 0.0 } else { 1.0 / 56.0 }).collect();
    assert!(chi_square(&pair, &joint) < chi_square_critical(55, ALPHA));
}
