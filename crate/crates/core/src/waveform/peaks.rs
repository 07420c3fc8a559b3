//! Local maxima and their topographic prominence.

/// Indices of local maxima. Flat peaks report their middle sample (rounded
/// down); the first and last samples are never peaks.
pub fn local_maxima(x: &[f64]) -> Vec<usize> {
    let n = x.len();
    let mut peaks = Vec::new();
    if n < 3 {
        return peaks;
    }
    let mut i = 1;
    while i < n - 1 {
        if x[i - 1] < x[i] {
            let mut ahead = i + 1;
            while ahead < n - 1 && x[ahead] == x[i] {
                ahead += 1;
            }
            if x[ahead] < x[i] {
                peaks.push((i + ahead - 1) / 2);
            }
            i = ahead;
        } else {
            i += 1;
        }
    }
    peaks
}

/// Prominence of each peak: height above the higher of the two minima found
/// by walking left and right until a strictly higher sample (or the end of
/// the data) is reached.
pub fn prominences(x: &[f64], peaks: &[usize]) -> Vec<f64> {
    peaks
        .iter()
        .map(|&p| {
            let h = x[p];
            let mut left_min = h;
            let mut i = p;
            loop {
                if x[i] > h {
                    break;
                }
                left_min = left_min.min(x[i]);
                if i == 0 {
                    break;
                }
                i -= 1;
            }
            let mut right_min = h;
            for &v in &x[p..] {
                if v > h {
                    break;
                }
                right_min = right_min.min(v);
            }
            h - left_min.max(right_min)
        })
        .collect()
}

/// Index of the first peak with prominence at least `min_prominence`, or of
/// the most prominent peak when none qualifies (first one on ties).
pub fn select_peak(x: &[f64], min_prominence: f64) -> Option<usize> {
    let peaks = local_maxima(x);
    let prom = prominences(x, &peaks);
    if let Some(k) = prom.iter().position(|&p| p >= min_prominence) {
        return Some(peaks[k]);
    }
    let mut best: Option<usize> = None;
    for (k, &p) in prom.iter().enumerate() {
        if best.is_none_or(|b| p > prom[b]) {
            best = Some(k);
        }
    }
    best.map(|k| peaks[k])
}
