//! Straightforward reference simulator: spike times are prefix sums, the
//! pooled stream is a sort, and the membrane is replayed event by event.

#![allow(dead_code)]

use htif_core::engine::Mark;
use htif_core::time::Ticks;

/// `(time, neuron)` of the first `count` pooled events. `rows[j][i]` is the
/// `j`-th ISI of neuron `i`; offsets are zero.
pub fn reference_events(rows: &[Vec<Ticks>], synchronized: bool, count: usize) -> Vec<(Ticks, usize)> {
    let n = rows[0].len();
    let mut all = Vec::new();
    if synchronized {
        // round j starts when the slowest neuron of round j - 1 has fired
        let mut start = 0u128;
        for row in rows {
            let mut end = start;
            for (i, t) in row.iter().enumerate() {
                all.push((Ticks(start + t.0), i));
                end = end.max(start + t.0);
            }
            start = end;
        }
    } else {
        for i in 0..n {
            let mut t = 0u128;
            for row in rows {
                t += row[i].0;
                all.push((Ticks(t), i));
            }
        }
    }
    all.sort();
    // beyond the table a free-running neuron has no more spikes, so only
    // events before the earliest exhaustion are trustworthy
    if !synchronized {
        let horizon = (0..n)
            .map(|i| rows.iter().map(|r| r[i].0).sum::<u128>())
            .min()
            .unwrap();
        all.retain(|(t, _)| t.0 < horizon);
    }
    all.truncate(count);
    all
}

/// `(Z_i, M_i)` of a perfect integrator over the pool's events.
pub fn reference_train(events: &[(Ticks, usize)], marks: &[Mark], pool: &[usize], b: i64) -> Vec<(Ticks, u64)> {
    let mut out = Vec::new();
    let (mut y, mut seen, mut last) = (0i64, 0u64, 0u128);
    for &(t, i) in events {
        if !pool.contains(&i) {
            continue;
        }
        seen += 1;
        y += if marks[i] == Mark::Excitatory { 1 } else { -1 };
        if y == b {
            out.push((Ticks(t.0 - last), seen));
            last = t.0;
            y = 0;
        }
    }
    out
}
