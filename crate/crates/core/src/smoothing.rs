//! Savitzky–Golay smoothing (quadratic, symmetric window) for output traces.

/// Result of [`smooth_trace`]; `unfiltered` is set when the series was too short.
#[derive(Debug, Clone, PartialEq)]
pub struct Smoothed {
    pub values: Vec<f64>,
    pub unfiltered: bool,
}

/// Odd window length in samples, at least 5.
pub fn window_samples(window: f64, rate: f64) -> usize {
    let n = ((window * rate).round() as usize).max(5);
    if n.is_multiple_of(2) {
        n + 1
    } else {
        n
    }
}

/// Order-2 smoothing coefficient for half-width `m` (window 2m+1), offset `j`.
fn coefficient(m: usize, j: i64) -> f64 {
    let m = m as f64;
    let j = j as f64;
    (3.0 * (3.0 * m * m + 3.0 * m - 1.0) - 15.0 * j * j) / ((2.0 * m - 1.0) * (2.0 * m + 1.0) * (2.0 * m + 3.0))
}

/// Savitzky–Golay, order 2. Near the edges the window shrinks symmetrically, down to a
/// single sample at the ends.
pub fn smooth_trace(series: &[f64], window: f64, rate: f64) -> Smoothed {
    let n = window_samples(window, rate);
    if series.len() < n {
        return Smoothed { values: series.to_vec(), unfiltered: true };
    }
    let half = n / 2;
    let tables: Vec<Vec<f64>> =
        (0..=half).map(|m| (-(m as i64)..=m as i64).map(|j| coefficient(m, j)).collect()).collect();
    let len = series.len();
    let values = (0..len)
        .map(|i| {
            let m = half.min(i).min(len - 1 - i);
            tables[m].iter().enumerate().map(|(k, c)| c * series[i + k - m]).sum()
        })
        .collect();
    Smoothed { values, unfiltered: false }
}
