//! Prominence-based peak picking on sampled curves.
//!
//! A point is a local maximum if it rises strictly above both neighbours;
//! flat-topped maxima are reported at their lowest-index sample. The
//! prominence of a maximum is its height above the higher of the two minima
//! separating it from the nearest taller samples on either side (or the
//! signal edge), the usual topographic definition. Peaks that clear the
//! prominence threshold are refined to sub-grid accuracy by fitting a
//! parabola through the three samples around the maximum.

/// One detected peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// Sample index of the (unrefined) maximum.
    pub idx: usize,
    /// Abscissa after parabolic refinement.
    pub freq: f64,
    /// Ordinate at the grid maximum.
    pub height: f64,
    /// Topographic prominence.
    pub prominence: f64,
}

/// Find peaks of `y` over abscissa `x` whose prominence is at least
/// `min_prominence_rel` times the full signal range `max(y) - min(y)`.
///
/// Boundary samples never count as peaks. Results are ordered by increasing
/// abscissa.
pub fn find_peaks(x: &[f64], y: &[f64], min_prominence_rel: f64) -> Vec<Peak> {
    assert_eq!(x.len(), y.len(), "abscissa/ordinate length mismatch");
    let n = y.len();
    if n < 3 {
        return Vec::new();
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in y {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let range = hi - lo;
    if !(range > 0.0) {
        return Vec::new();
    }
    let threshold = min_prominence_rel * range;

    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if y[i] > y[i - 1] {
            // Scan across a possible flat top.
            let mut j = i;
            while j + 1 < n && y[j + 1] == y[i] {
                j += 1;
            }
            if j + 1 < n && y[j + 1] < y[i] {
                let prominence = prominence_at(y, i);
                if prominence >= threshold {
                    peaks.push(Peak {
                        idx: i,
                        freq: refined_abscissa(x, y, i),
                        height: y[i],
                        prominence,
                    });
                }
                i = j + 1;
                continue;
            }
            i = j + 1;
            continue;
        }
        i += 1;
    }
    peaks
}

/// The tallest peak, ties resolved toward the lower abscissa. `None` when no
/// peak clears the threshold.
pub fn dominant_peak(x: &[f64], y: &[f64], min_prominence_rel: f64) -> Option<Peak> {
    let peaks = find_peaks(x, y, min_prominence_rel);
    let mut best: Option<Peak> = None;
    for p in peaks {
        let better = match &best {
            None => true,
            Some(b) => p.height > b.height,
        };
        if better {
            best = Some(p);
        }
    }
    best
}

/// Topographic prominence of the local maximum at `i`.
fn prominence_at(y: &[f64], i: usize) -> f64 {
    let h = y[i];
    // Walk left to the nearest strictly taller sample (or the edge), tracking
    // the valley floor along the way; same to the right.
    let mut left_min = h;
    let mut j = i;
    while j > 0 {
        j -= 1;
        if y[j] > h {
            break;
        }
        left_min = left_min.min(y[j]);
    }
    let mut right_min = h;
    let mut j = i;
    while j + 1 < y.len() {
        j += 1;
        if y[j] > h {
            break;
        }
        right_min = right_min.min(y[j]);
    }
    h - left_min.max(right_min)
}

/// Vertex abscissa of the parabola through the three samples around `i`;
/// falls back to the grid point when the fit is degenerate or escapes the
/// bracketing interval.
fn refined_abscissa(x: &[f64], y: &[f64], i: usize) -> f64 {
    if i == 0 || i + 1 >= x.len() {
        return x[i];
    }
    let (x1, x2, x3) = (x[i - 1], x[i], x[i + 1]);
    let (y1, y2, y3) = (y[i - 1], y[i], y[i + 1]);
    let num = (x2 - x1).powi(2) * (y2 - y3) - (x2 - x3).powi(2) * (y2 - y1);
    let den = (x2 - x1) * (y2 - y3) - (x2 - x3) * (y2 - y1);
    if den.abs() < 1e-300 {
        return x2;
    }
    let v = x2 - 0.5 * num / den;
    if v.is_finite() && v > x1 && v < x3 {
        v
    } else {
        x2
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
