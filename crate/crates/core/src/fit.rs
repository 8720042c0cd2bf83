//! Least-squares power-law fits for the diagnostic series.

/// Result of fitting `ln y = intercept + slope · ln t`.
#[derive(Clone, Copy, Debug)]
pub struct PowerLawFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope under the usual normal-theory model.
    pub slope_stderr: f64,
    pub n_points: usize,
}

/// Fit a power law to the positive samples of `(t, y)` with `t` inside
/// `window`. Returns `None` when fewer than three usable points remain.
pub fn fit_power_law(ts: &[f64], ys: &[f64], window: (f64, f64)) -> Option<PowerLawFit> {
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .zip(ys.iter())
        .filter(|(&t, &y)| t >= window.0 && t <= window.1 && t > 0.0 && y > 0.0)
        .map(|(&t, &y)| (t.ln(), y.ln()))
        .collect();
    let n = pts.len();
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let slope_stderr = if n > 2 {
        (ss_res / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some(PowerLawFit { slope, intercept, slope_stderr, n_points: n })
}
