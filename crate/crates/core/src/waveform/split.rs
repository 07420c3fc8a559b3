use std::ops::Range;

use super::RawTrace;

/// Cycle boundaries of a trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleSplit {
    /// Contiguous, non-overlapping sample ranges, each starting at a positive
    /// voltage apex.
    pub cycles: Vec<Range<usize>>,
    /// Samples before the first apex.
    pub leading: usize,
    /// Samples of a trailing partial cycle that was dropped.
    pub trailing_dropped: usize,
}

fn argmax(u: &[f64], range: Range<usize>) -> Option<usize> {
    let mut best: Option<usize> = None;
    for k in range {
        if best.is_none_or(|b| u[k] > u[b]) {
            best = Some(k);
        }
    }
    best
}

/// Split at the maximum of `U` within each nominal period.
///
/// The first apex is the argmax over the first period. Each following apex is
/// searched in `[prev + P/2, prev + 3P/2)`. The segment after the last apex is
/// kept if it spans at least `P - 1` samples.
pub fn split_cycles(trace: &RawTrace) -> CycleSplit {
    let n = trace.len();
    let p = trace.samples_per_cycle.max(2);
    let Some(first) = argmax(&trace.u, 0..p.min(n)) else {
        return CycleSplit {
            cycles: Vec::new(),
            leading: 0,
            trailing_dropped: 0,
        };
    };
    let mut apexes = vec![first];
    loop {
        let prev = *apexes.last().unwrap();
        let lo = prev + p / 2;
        let hi = (prev + p + p / 2).min(n);
        if lo >= n || prev + p > n {
            break;
        }
        match argmax(&trace.u, lo..hi) {
            // The maximum of a truncated window may sit on a slope.
            Some(a) if a + 1 < n && trace.u[a] >= trace.u[a - 1] && trace.u[a] >= trace.u[a + 1] => {
                apexes.push(a)
            }
            _ => break,
        }
    }
    let mut cycles: Vec<Range<usize>> = apexes.windows(2).map(|w| w[0]..w[1]).collect();
    let last = *apexes.last().unwrap();
    let mut trailing_dropped = 0;
    if n - last >= p - 1 {
        cycles.push(last..n);
    } else {
        trailing_dropped = n - last;
    }
    CycleSplit {
        cycles,
        leading: first,
        trailing_dropped,
    }
}
