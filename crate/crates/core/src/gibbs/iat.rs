use serde::Serialize;

/// Integrated autocorrelation time `1 + 2 sum_k rho_k`, truncated by Geyer's
/// initial positive sequence: lags are summed in adjacent pairs until a pair
/// sum turns non-positive. A constant series returns 1.
pub fn integrated_autocorrelation_time(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return 1.0;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c0 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if !(c0 > 0.0) {
        log::warn!("autocorrelation time of a constant series set to 1");
        return 1.0;
    }
    let acf = |k: usize| -> f64 {
        let s: f64 = (0..n - k).map(|t| (x[t] - mean) * (x[t + k] - mean)).sum();
        s / n as f64 / c0
    };
    // Gamma_m = rho_2m + rho_2m+1, with rho_0 = 1
    let mut sum = 0.0;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = if m == 0 { 1.0 } else { acf(2 * m) } + acf(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        m += 1;
    }
    (2.0 * sum - 1.0).max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IatStats {
    pub parameters: usize,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

/// Autocorrelation times of every stored parameter, named by draws column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IatSummary {
    pub entries: Vec<(String, f64)>,
}

impl IatSummary {
    pub fn max(&self) -> f64 {
        self.entries.iter().map(|e| e.1).fold(1.0, f64::max)
    }

    /// Median and range over the parameters whose name passes `keep`.
    pub fn stats(&self, keep: impl Fn(&str) -> bool) -> Option<IatStats> {
        let mut v: Vec<f64> = self.entries.iter().filter(|e| keep(&e.0)).map(|e| e.1).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let k = v.len();
        let median = if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) };
        Some(IatStats {
            parameters: k,
            median,
            min: v[0],
            max: v[k - 1],
        })
    }

    pub fn write_csv(&self, path: &std::path::Path) -> crate::Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(crate::FusionError::from)?;
        w.write_record(["parameter", "iat"])?;
        for (name, v) in &self.entries {
            w.write_record([name.as_str(), &v.to_string()])?;
        }
        w.flush().map_err(|e| crate::FusionError::io(path, e))?;
        Ok(())
    }
}
