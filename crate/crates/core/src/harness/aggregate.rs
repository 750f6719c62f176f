use crate::error::{Error, Result};
use crate::solver::{Failure, Trace};

/// Across-replica mean and standard error of each metric at each recorded k.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateSeries {
    pub metrics: Vec<String>,
    pub ks: Vec<u64>,
    /// `mean[i][j]`: metric `j` at `ks[i]`.
    pub mean: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub completed: usize,
    /// Replica index and failure of each excluded trace.
    pub flagged: Vec<(usize, Failure)>,
}

impl AggregateSeries {
    pub fn empty(metrics: Vec<String>) -> Self {
        Self {
            metrics,
            ks: Vec::new(),
            mean: Vec::new(),
            stderr: Vec::new(),
            completed: 0,
            flagged: Vec::new(),
        }
    }

    /// Reduces traces in index order. Flagged traces are excluded and
    /// counted; the rest must share one k grid. The standard error uses the
    /// `n − 1` sample deviation and is zero for a single trace.
    pub fn from_traces(traces: &[Trace]) -> Result<Self> {
        let first = traces
            .first()
            .ok_or_else(|| Error::Config("no traces to aggregate".into()))?;
        let mut agg = Self::empty(first.metrics.clone());
        let mut good: Vec<&Trace> = Vec::new();
        for (i, t) in traces.iter().enumerate() {
            if t.metrics != agg.metrics {
                return Err(Error::Config("traces record different metrics".into()));
            }
            match &t.failure {
                Some(f) => agg.flagged.push((i, f.clone())),
                None => good.push(t),
            }
        }
        if good.is_empty() {
            let (i, f) = &agg.flagged[0];
            return Err(Error::AllReplicasFailed {
                runs: traces.len(),
                first: format!("replica {i} at k={}: {}", f.k, f.message),
            });
        }
        agg.completed = good.len();
        agg.ks = good[0].records.iter().map(|r| r.k).collect();
        for t in &good[1..] {
            if t.records.len() != agg.ks.len() || t.records.iter().zip(&agg.ks).any(|(r, k)| r.k != *k) {
                return Err(Error::Config("completed traces disagree on recorded k".into()));
            }
        }
        let n = good.len() as f64;
        let width = agg.metrics.len();
        for row in 0..agg.ks.len() {
            let mut mean = vec![0.0; width];
            for t in &good {
                for (m, v) in mean.iter_mut().zip(&t.records[row].values) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n);
            let mut se = vec![0.0; width];
            if good.len() > 1 {
                for t in &good {
                    for ((s, v), m) in se.iter_mut().zip(&t.records[row].values).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                se.iter_mut().for_each(|s| *s = (*s / (n - 1.0)).sqrt() / n.sqrt());
            }
            agg.mean.push(mean);
            agg.stderr.push(se);
        }
        Ok(agg)
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.metrics.iter().position(|m| m == name)
    }

    /// `(k, mean)` pairs of a metric.
    pub fn mean_series(&self, name: &str) -> Option<Vec<(u64, f64)>> {
        let c = self.column(name)?;
        Some(self.ks.iter().zip(&self.mean).map(|(k, row)| (*k, row[c])).collect())
    }

    pub fn stderr_series(&self, name: &str) -> Option<Vec<(u64, f64)>> {
        let c = self.column(name)?;
        Some(self.ks.iter().zip(&self.stderr).map(|(k, row)| (*k, row[c])).collect())
    }

    pub fn final_mean(&self, name: &str) -> Option<f64> {
        let c = self.column(name)?;
        self.mean.last().map(|row| row[c])
    }

    /// Mean of `name` at the recorded index `k`.
    pub fn mean_at(&self, name: &str, k: u64) -> Option<f64> {
        let c = self.column(name)?;
        let i = self.ks.iter().position(|&x| x == k)?;
        Some(self.mean[i][c])
    }
}

/// Running minimum of a series.
pub fn running_min(series: &[(u64, f64)]) -> Vec<(u64, f64)> {
    let mut best = f64::INFINITY;
    series
        .iter()
        .map(|&(k, v)| {
            best = best.min(v);
            (k, best)
        })
        .collect()
}
