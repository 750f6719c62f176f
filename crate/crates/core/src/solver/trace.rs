use crate::error::{Error, Result};

/// One recorded row.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub k: u64,
    pub values: Vec<f64>,
}

/// Why a run stopped early.
#[derive(Clone, Debug, PartialEq)]
pub struct Failure {
    pub k: u64,
    pub message: String,
}

/// Metric series of a single run, recorded at increasing iteration indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub metrics: Vec<String>,
    pub records: Vec<Record>,
    pub failure: Option<Failure>,
    /// Extra per-run flags (e.g. a controller leaving the stabilizing set).
    pub notes: Vec<String>,
}

impl Trace {
    pub fn new(metrics: Vec<String>) -> Self {
        Self {
            metrics,
            records: Vec::new(),
            failure: None,
            notes: Vec::new(),
        }
    }

    /// Appends a row; indices must strictly increase.
    pub fn push(&mut self, k: u64, values: Vec<f64>) {
        assert_eq!(values.len(), self.metrics.len(), "row width mismatch");
        if let Some(last) = self.records.last() {
            assert!(k > last.k, "trace indices must strictly increase");
        }
        self.records.push(Record { k, values });
    }

    pub fn is_flagged(&self) -> bool {
        self.failure.is_some()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.metrics.iter().position(|m| m == name)
    }

    /// `(k, value)` pairs of one metric.
    pub fn series(&self, name: &str) -> Option<Vec<(u64, f64)>> {
        let c = self.column(name)?;
        Some(self.records.iter().map(|r| (r.k, r.values[c])).collect())
    }

    pub fn last(&self, name: &str) -> Option<f64> {
        let c = self.column(name)?;
        self.records.last().map(|r| r.values[c])
    }
}

/// Least-squares fit of `log(metric)` against `log(k)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Fits the power-law exponent on the tail of a series.
///
/// The window keeps points with `k ≥ (1 − window)·k_max` and `k ≥ 1`.
pub fn estimate_rate(series: &[(u64, f64)], window: f64) -> Result<RateFit> {
    if !(window > 0.0 && window <= 1.0) {
        return Err(Error::Config(format!("tail window {window} outside (0, 1]")));
    }
    let k_max = series.iter().map(|p| p.0).max().unwrap_or(0);
    let cut = (1.0 - window) * k_max as f64;
    let tail: Vec<(u64, f64)> = series
        .iter()
        .copied()
        .filter(|&(k, _)| k >= 1 && k as f64 >= cut)
        .collect();
    if let Some(&(k, value)) = tail.iter().find(|p| !(p.1 > 0.0)) {
        return Err(Error::NonPositiveMetric { k, value });
    }
    if tail.len() < 2 {
        return Err(Error::Config(format!(
            "rate fit needs at least two points in the window, found {}",
            tail.len()
        )));
    }
    let n = tail.len() as f64;
    let xs: Vec<f64> = tail.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = tail.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Config("rate fit window spans a single k".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        points: tail.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power_law(c: f64, p: f64) -> Vec<(u64, f64)> {
        (0..=200u64).map(|i| (i * 50, c * ((i * 50) as f64).powf(p))).collect()
    }

    #[test]
    fn exact_inverse_law() {
        let fit = estimate_rate(&power_law(5.0, -1.0), 0.5).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-9);
        assert!((fit.intercept - 5f64.ln()).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_sqrt_law() {
        let fit = estimate_rate(&power_law(3.0, -0.5), 0.3).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-9);
    }

    #[test]
    fn nonpositive_metric_names_k() {
        let mut s = power_law(1.0, -1.0);
        s[150].1 = 0.0;
        match estimate_rate(&s, 0.5) {
            Err(Error::NonPositiveMetric { k, .. }) => assert_eq!(k, 150 * 50),
            other => panic!("unexpected {other:?}"),
        }
        // outside the window it is ignored
        let mut s = power_law(1.0, -1.0);
        s[10].1 = -1.0;
        assert!(estimate_rate(&s, 0.5).is_ok());
    }

    #[test]
    #[should_panic]
    fn indices_must_increase() {
        let mut t = Trace::new(vec!["z".into()]);
        t.push(3, vec![1.0]);
        t.push(3, vec![1.0]);
    }
}
