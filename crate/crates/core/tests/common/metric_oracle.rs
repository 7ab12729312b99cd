//! Brute-force metric oracle: enumerates pixels as sets and applies the
//! textbook set formulas, without going through confusion counts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segunet::metrics::{confusion_counts, metrics_from_counts, Scores};
use segunet::Tensor;

/// `[accuracy, dice, iou, recall, precision, f1, specificity]` for binary
/// pixel sets given as boolean slices.
pub fn brute_force(pred: &[bool], gt: &[bool]) -> [f64; 7] {
    let n = pred.len();
    let p: Vec<usize> = (0..n).filter(|&i| pred[i]).collect();
    let g: Vec<usize> = (0..n).filter(|&i| gt[i]).collect();
    let inter = p.iter().filter(|&&i| gt[i]).count() as f64;
    let union = (0..n).filter(|&i| pred[i] || gt[i]).count() as f64;
    let agree = (0..n).filter(|&i| pred[i] == gt[i]).count() as f64;
    let neg_gt = (0..n).filter(|&i| !gt[i]).count() as f64;
    let true_neg = (0..n).filter(|&i| !gt[i] && !pred[i]).count() as f64;
    let (np, ng) = (p.len() as f64, g.len() as f64);

    let div = |a: f64, b: f64, empty: f64| if b == 0.0 { empty } else { a / b };
    let precision = div(inter, np, 0.0);
    let recall = div(inter, ng, 1.0);
    let f1 = if precision + recall == 0.0 || inter == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    [
        agree / n as f64,
        div(2.0 * inter, np + ng, 0.0),
        div(inter, union, 0.0),
        recall,
        precision,
        f1,
        div(true_neg, neg_gt, 1.0),
    ]
}

pub struct MetricOracleResult {
    pub max_abs_err: f64,
    pub dice_f1_exact: bool,
    pub max_identity_err: f64,
}

/// Compares the library against [`brute_force`] on `pairs` random
/// `size x size` prediction/ground-truth pairs.
pub fn run_metric_oracle(pairs: usize, size: usize, seed: u64) -> MetricOracleResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = MetricOracleResult { max_abs_err: 0.0, dice_f1_exact: true, max_identity_err: 0.0 };
    for k in 0..pairs {
        // vary the foreground density, including empty and full masks
        let pd = [0.0, 1.0, 0.5, rng.random::<f64>()][k % 4];
        let gd = [0.5, 0.0, 1.0, rng.random::<f64>()][(k / 4) % 4];
        let prob: Vec<f32> = (0..size * size)
            .map(|_| if rng.random_bool(pd) { rng.random_range(0.51..1.0) } else { rng.random_range(0.0..0.5) })
            .collect();
        let gt: Vec<f32> = (0..size * size).map(|_| if rng.random_bool(gd) { 1.0 } else { 0.0 }).collect();
        let want = brute_force(&prob.iter().map(|&p| p > 0.5).collect::<Vec<_>>(), &gt.iter().map(|&g| g > 0.5).collect::<Vec<_>>());
        let pt = Tensor::from_vec([1, 1, size, size], prob).unwrap();
        let gtt = Tensor::from_vec([1, 1, size, size], gt).unwrap();
        let got: Scores = metrics_from_counts(&confusion_counts(&pt, &gtt, 0.5).unwrap()).unwrap();
        for (a, b) in got.as_array().iter().zip(want) {
            out.max_abs_err = out.max_abs_err.max((a - b).abs());
        }
        out.dice_f1_exact &= got.dice == got.f1;
        if got.iou > 0.0 {
            out.max_identity_err = out.max_identity_err.max((got.dice - 2.0 * got.iou / (1.0 + got.iou)).abs());
        }
    }
    out
}
