//! Local-maximum peak picking with prominence and spacing filters.

/// Indices of local maxima. Flat tops report their middle sample; the
/// first and last samples are never peaks.
pub fn local_maxima(x: &[f64]) -> Vec<usize> {
    let mut peaks = Vec::new();
    if x.len() < 3 {
        return peaks;
    }
    let mut i = 1;
    let last = x.len() - 1;
    while i < last {
        if x[i - 1] < x[i] {
            let mut ahead = i + 1;
            while ahead < last && x[ahead] == x[i] {
                ahead += 1;
            }
            if x[ahead] < x[i] {
                peaks.push((i + ahead - 1) / 2);
                i = ahead;
                continue;
            }
        }
        i += 1;
    }
    peaks
}

/// Height of a peak above the higher of its two bases. Each base is the
/// lowest point between the peak and the nearest strictly higher sample on
/// that side (or the signal edge).
pub fn prominence(x: &[f64], peak: usize) -> f64 {
    let h = x[peak];
    let mut left_min = h;
    for &v in x[..peak].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &x[peak + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

/// Peaks with height ≥ `min_height` and prominence ≥ `min_prominence`,
/// thinned so no two survivors are closer than `min_separation` in `t`.
/// Taller peaks win the thinning. Returned in time order.
pub fn find_peaks(
    x: &[f64],
    t: &[f64],
    min_height: f64,
    min_prominence: f64,
    min_separation: f64,
) -> Vec<usize> {
    debug_assert_eq!(x.len(), t.len());
    let candidates: Vec<usize> = local_maxima(x)
        .into_iter()
        .filter(|&i| x[i] >= min_height && prominence(x, i) >= min_prominence)
        .collect();

    let mut by_height = candidates.clone();
    by_height.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in by_height {
        if kept.iter().all(|&k| (t[k] - t[i]).abs() >= min_separation) {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept
}
