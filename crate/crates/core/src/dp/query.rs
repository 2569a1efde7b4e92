use serde::{Deserialize, Serialize};

use super::DpError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Query {
    Count,
    BoundedSum { lo: f64, hi: f64 },
    /// Mean over a fixed, public number of records `n`.
    BoundedMean { lo: f64, hi: f64, n: usize },
    /// Buckets `[edges[i], edges[i+1])`, the last one closed.
    Histogram { edges: Vec<f64> },
    /// Sum without declared bounds. Its sensitivity is unbounded.
    Sum,
}

impl Query {
    pub fn name(&self) -> &'static str {
        match self {
            Query::Count => "count",
            Query::BoundedSum { .. } => "bounded_sum",
            Query::BoundedMean { .. } => "bounded_mean",
            Query::Histogram { .. } => "histogram",
            Query::Sum => "sum",
        }
    }

    pub fn validate(&self) -> Result<(), DpError> {
        let bounds = |lo: f64, hi: f64| {
            if lo.is_finite() && hi.is_finite() && lo < hi {
                Ok(())
            } else {
                Err(DpError::InvalidQuery(format!("bounds [{lo}, {hi}] need lo < hi")))
            }
        };
        match self {
            Query::Count => Ok(()),
            Query::BoundedSum { lo, hi } => bounds(*lo, *hi),
            Query::BoundedMean { lo, hi, n } => {
                bounds(*lo, *hi)?;
                if *n == 0 {
                    return Err(DpError::InvalidQuery("bounded_mean needs n >= 1".into()));
                }
                Ok(())
            }
            Query::Histogram { edges } => {
                if edges.len() < 2 || edges.iter().any(|e| !e.is_finite()) {
                    return Err(DpError::InvalidQuery("histogram needs at least two finite edges".into()));
                }
                if edges.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(DpError::InvalidQuery("histogram edges must be strictly increasing".into()));
                }
                Ok(())
            }
            Query::Sum => Err(DpError::UnsupportedQuery("sum without bounds has unbounded sensitivity".into())),
        }
    }
}

/// L1 sensitivity of `q`.
///
/// Count and histogram are bounded for adding or removing a record. The
/// bounded kinds use `hi - lo`, which bounds replacing one record by another;
/// the mean additionally fixes `n`.
pub fn sensitivity(q: &Query) -> Result<f64, DpError> {
    q.validate()?;
    Ok(match q {
        Query::Count | Query::Histogram { .. } => 1.0,
        Query::BoundedSum { lo, hi } => hi - lo,
        Query::BoundedMean { lo, hi, n } => (hi - lo) / *n as f64,
        Query::Sum => unreachable!("rejected by validate"),
    })
}

/// Exact answer; bounded queries clamp each record into `[lo, hi]`.
pub fn true_answer(q: &Query, data: &[f64]) -> Result<Vec<f64>, DpError> {
    q.validate()?;
    Ok(match q {
        Query::Count => vec![data.len() as f64],
        Query::BoundedSum { lo, hi } => vec![data.iter().map(|x| x.clamp(*lo, *hi)).sum()],
        Query::BoundedMean { lo, hi, n } => {
            if data.len() != *n {
                return Err(DpError::DataMismatch(format!("bounded_mean declared n = {n}, got {}", data.len())));
            }
            vec![data.iter().map(|x| x.clamp(*lo, *hi)).sum::<f64>() / *n as f64]
        }
        Query::Histogram { edges } => {
            let mut counts = vec![0.0; edges.len() - 1];
            let last = *edges.last().expect("validated");
            for &x in data {
                if x < edges[0] || x > last {
                    continue;
                }
                let i = edges.partition_point(|&e| e <= x).min(edges.len() - 1) - 1;
                counts[i] += 1.0;
            }
            counts
        }
        Query::Sum => unreachable!("rejected by validate"),
    })
}
