use super::split::split_cycles;
use super::RawTrace;

/// Window parameters of the adaptive moving average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothConfig {
    /// Window far from any SET location (odd).
    pub max_window: usize,
    /// Window at a SET location (odd).
    pub min_window: usize,
    /// Distance over which the window ramps between the two.
    pub ramp_span: usize,
}

impl Default for SmoothConfig {
    fn default() -> Self {
        Self {
            max_window: 25,
            min_window: 3,
            ramp_span: 25,
        }
    }
}

/// Full window width at distance `d` from the nearest SET location.
pub fn window_at(d: usize, cfg: &SmoothConfig) -> usize {
    let h_min = cfg.min_window / 2;
    let h_max = cfg.max_window / 2;
    if cfg.ramp_span == 0 {
        return 2 * h_max + 1;
    }
    let frac = d.min(cfg.ramp_span) as f64 / cfg.ramp_span as f64;
    let h = h_min + ((h_max - h_min) as f64 * frac).round() as usize;
    2 * h + 1
}

/// Centered moving average of the current channel whose window shrinks
/// linearly towards each SET location. Windows are truncated at the trace
/// ends. The voltage channel is copied unchanged.
pub fn smooth_adaptive(trace: &RawTrace, set_locations: &[usize], cfg: &SmoothConfig) -> RawTrace {
    let n = trace.len();
    let mut dist = vec![usize::MAX; n];
    for &s in set_locations.iter().filter(|&&s| s < n) {
        dist[s] = 0;
    }
    for k in 1..n {
        if dist[k - 1] != usize::MAX {
            dist[k] = dist[k].min(dist[k - 1] + 1);
        }
    }
    for k in (0..n.saturating_sub(1)).rev() {
        if dist[k + 1] != usize::MAX {
            dist[k] = dist[k].min(dist[k + 1] + 1);
        }
    }
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in &trace.i {
        acc += v;
        prefix.push(acc);
    }
    let i = (0..n)
        .map(|k| {
            let h = window_at(dist[k], cfg) / 2;
            let lo = k.saturating_sub(h);
            let hi = (k + h + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect();
    RawTrace {
        u: trace.u.clone(),
        i,
        samples_per_cycle: trace.samples_per_cycle,
    }
}

/// SET locations found on the raw current.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetDetection {
    pub indices: Vec<usize>,
    /// Cycles without a crossing.
    pub missing: usize,
}

/// First downward crossing of `threshold` in each cycle.
pub fn detect_set_locations(trace: &RawTrace, threshold: f64) -> SetDetection {
    assert!(threshold < 0.0, "SET threshold must be negative");
    let split = split_cycles(trace);
    let mut indices = Vec::with_capacity(split.cycles.len());
    let mut missing = 0;
    for c in &split.cycles {
        let hit = (c.start + 1..c.end).find(|&k| trace.i[k - 1] > threshold && trace.i[k] <= threshold);
        match hit {
            Some(k) => indices.push(k),
            None => missing += 1,
        }
    }
    if missing > 0 {
        log::info!("{missing} cycles have no SET crossing");
    }
    SetDetection { indices, missing }
}
