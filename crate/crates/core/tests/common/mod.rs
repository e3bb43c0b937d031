#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use samplecurve::GeneratorSpec;

/// The three reference populations: (predictors, prevalence, AUC).
pub const CASES: [(usize, f64, f64); 3] = [(10, 0.063, 0.82), (44, 0.11, 0.86), (17, 0.25, 0.80)];
pub const REFERENCE_N: [u64; 3] = [3510, 4198, 1439];

pub fn case_spec(i: usize) -> GeneratorSpec {
    let (p, prev, auc) = CASES[i];
    GeneratorSpec::binary(p, prev, auc)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Concordant pairs plus half the ties, over all positive/negative pairs.
pub fn pairwise_auc(scores: &[f64], labels: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &yi) in labels.iter().enumerate() {
        if yi != 1.0 {
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj != 0.0 {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                num += 1.0;
            } else if scores[i] == scores[j] {
                num += 0.5;
            }
        }
    }
    num / pairs
}

/// Gaussian elimination with partial pivoting on a dense system.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Scores with deliberate ties and labels containing both classes.
pub fn tied_instance(r: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let n = r.random_range(2..=200);
    let levels = r.random_range(2..=12) as f64;
    let mut labels: Vec<f64> = (0..n).map(|_| if r.random_bool(0.4) { 1.0 } else { 0.0 }).collect();
    labels[0] = 1.0;
    labels[n - 1] = 0.0;
    let scores = labels
        .iter()
        .map(|y| ((r.random::<f64>() + 0.3 * y) * levels).floor() / levels)
        .collect();
    (scores, labels)
}
