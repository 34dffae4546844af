//! Summaries over sweep rows.

use actknow_core::training::Mode;

use crate::commands::SweepRow;

/// One-sided exact sign test: the probability of at least `wins` successes
/// among `wins + losses` fair coin flips. Ties are dropped before calling;
/// with no untied pairs the result is 1.
pub fn sign_test(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let mut choose = 1.0;
    let mut tail = 0.0;
    for k in 0..=n {
        if k >= wins {
            tail += choose;
        }
        choose = choose * (n - k) as f64 / (k + 1) as f64;
    }
    tail / 2f64.powi(n as i32)
}

/// Mean accuracy of `mode` at `fraction` over the seeds present.
pub fn mean_accuracy(rows: &[SweepRow], fraction: f64, mode: Mode) -> Option<f64> {
    let accs: Vec<f64> = rows
        .iter()
        .filter(|r| r.fraction == fraction && r.mode == mode)
        .map(|r| r.accuracy)
        .collect();
    (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64)
}

/// Per-seed wins and losses of `a` over `b` at `fraction`; exact ties count
/// as neither.
pub fn paired_record(rows: &[SweepRow], fraction: f64, a: Mode, b: Mode) -> (usize, usize) {
    let acc = |mode: Mode, seed: u64| {
        rows.iter()
            .find(|r| r.fraction == fraction && r.mode == mode && r.seed == seed)
            .map(|r| r.accuracy)
    };
    let mut seeds: Vec<u64> = rows.iter().filter(|r| r.fraction == fraction).map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let (mut wins, mut losses) = (0, 0);
    for s in seeds {
        if let (Some(x), Some(y)) = (acc(a, s), acc(b, s)) {
            if x > y {
                wins += 1;
            } else if x < y {
                losses += 1;
            }
        }
    }
    (wins, losses)
}
