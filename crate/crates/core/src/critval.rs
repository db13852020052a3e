//! Simulated least-favorable critical values and the test decision.
//!
//! Critical values are the empirical `(1 − α)` quantile of the scaled
//! statistic simulated under the least-favorable null: the constant-
//! missingness design evaluated at the boundary parameter `(θ̄₁, 0)`, where
//! the conditional moment binds at every covariate value. A flat binding
//! mean produces the largest null distribution of every statistic here, so
//! the resulting tests control size across the null.
//!
//! Values are cached on disk keyed by the statistic fingerprint (family,
//! exponent, weighting, bandwidth, grids, sample size), since critical
//! values dominate runtime and are reused across a power grid.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{boundary_theta1, median_reg_moment, simulate_missing_data, MissingDataDesign};
use crate::seed::{derive_rng, Stream};
use crate::stats::{Fingerprint, PreparedStatistic, StatisticSpec, StatisticValue};
use crate::util::upper_quantile;

/// The null data-generating process used for critical-value simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LfDesign {
    pub design: MissingDataDesign,
    pub theta: [f64; 2],
}

impl LfDesign {
    /// The default least-favorable null: constant missingness at the
    /// identified-set boundary, where the conditional mean is identically
    /// zero.
    pub fn standard() -> Self {
        let design = MissingDataDesign::design(1).expect("design 1 exists");
        let theta1 = boundary_theta1(&design).expect("design 1 is nondegenerate");
        LfDesign {
            design,
            theta: [theta1, 0.0],
        }
    }
}

/// A simulated critical value together with everything needed to reproduce
/// and to validate its use.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalValue {
    pub alpha: f64,
    pub value: f64,
    pub n: usize,
    pub n_sims: usize,
    pub seed: u64,
    pub fingerprint: Fingerprint,
}

/// Test decision, strict-inequality convention: reject iff the scaled
/// statistic strictly exceeds the critical value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Reject,
    Accept,
}

/// Simulates the least-favorable critical value for `spec` at sample size
/// `n` and level `alpha`: `n_sims` datasets from `lf`, the scaled statistic
/// for each, and the empirical `(1 − α)` quantile (higher order statistic of
/// rank `⌈(1−α)·n_sims⌉`).
///
/// Replications run in parallel over ChaCha streams derived from
/// `(seed, critval, sim index)`; the quantile is taken after a full sort, so
/// the result is identical across thread counts.
pub fn simulate_lf_critval(
    spec: &StatisticSpec,
    n: usize,
    alpha: f64,
    n_sims: usize,
    seed: u64,
    lf: &LfDesign,
) -> Result<CriticalValue> {
    if n_sims < 1000 {
        return Err(Error::InvalidArgument(format!(
            "critical value simulation needs at least 1000 replications, got {n_sims}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let prepared = PreparedStatistic::new(spec.clone())?;
    let model = median_reg_moment();
    let draws: Vec<Result<f64>> = (0..n_sims)
        .into_par_iter()
        .map(|sim| {
            let mut rng = derive_rng(seed, Stream::Critval, &[sim as u64]);
            let sample = simulate_missing_data(&lf.design, n, &mut rng)?;
            Ok(prepared.evaluate(&sample, &model, &lf.theta)?.scaled)
        })
        .collect();
    let mut values = Vec::with_capacity(n_sims);
    for d in draws {
        values.push(d?);
    }
    Ok(CriticalValue {
        alpha,
        value: upper_quantile(&values, alpha),
        n,
        n_sims,
        seed,
        fingerprint: spec.fingerprint(n),
    })
}

/// Rejects iff `stat.scaled > cv.value`. Errors if the statistic was
/// computed under a different spec fingerprint than the critical value.
pub fn decide(stat: &StatisticValue, cv: &CriticalValue) -> Result<Decision> {
    if stat.fingerprint != cv.fingerprint {
        return Err(Error::SpecMismatch {
            stat: stat.fingerprint.to_string(),
            critval: cv.fingerprint.to_string(),
        });
    }
    Ok(if stat.scaled > cv.value {
        Decision::Reject
    } else {
        Decision::Accept
    })
}

/// On-disk cache of critical values: one record per line,
/// `fingerprint,alpha,n,n_sims,seed,value`, human-readable.
#[derive(Debug, Clone)]
pub struct CritvalCache {
    path: PathBuf,
}

const CACHE_HEADER: &str = "fingerprint,alpha,n,n_sims,seed,critval";

impl CritvalCache {
    pub fn new(path: impl AsRef<Path>) -> Self {
        CritvalCache {
            path: path.as_ref().to_path_buf(),
        }
    }

    /// Cache file location from the `CMI_CACHE_DIR` environment variable,
    /// or `None` when unset.
    pub fn from_env() -> Option<Self> {
        std::env::var_os("CMI_CACHE_DIR").map(|dir| {
            let mut p = PathBuf::from(dir);
            p.push("critvals.csv");
            CritvalCache::new(p)
        })
    }

    fn lookup(
        &self,
        fingerprint: &Fingerprint,
        alpha: f64,
        n: usize,
        n_sims: usize,
        seed: u64,
    ) -> Result<Option<CriticalValue>> {
        let text = match std::fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        for line in text.lines().skip(1) {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                continue;
            }
            if fields[0] == fingerprint.0
                && fields[1].parse::<f64>().ok() == Some(alpha)
                && fields[2].parse::<usize>().ok() == Some(n)
                && fields[3].parse::<usize>().ok() == Some(n_sims)
                && fields[4].parse::<u64>().ok() == Some(seed)
            {
                let value = fields[5]
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidData(format!("corrupt cache line: {e}")))?;
                return Ok(Some(CriticalValue {
                    alpha,
                    value,
                    n,
                    n_sims,
                    seed,
                    fingerprint: fingerprint.clone(),
                }));
            }
        }
        Ok(None)
    }

    fn append(&self, cv: &CriticalValue) -> Result<()> {
        if let Some(parent) = self.path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let exists = self.path.exists();
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)?;
        if !exists {
            writeln!(file, "{CACHE_HEADER}")?;
        }
        writeln!(
            file,
            "{},{},{},{},{},{}",
            cv.fingerprint, cv.alpha, cv.n, cv.n_sims, cv.seed, cv.value
        )?;
        Ok(())
    }
}

/// Cached wrapper around [`simulate_lf_critval`]: returns the cached record
/// when one matches `(fingerprint, alpha, n, n_sims, seed)`, simulating and
/// appending otherwise.
pub fn lf_critval_cached(
    cache: Option<&CritvalCache>,
    spec: &StatisticSpec,
    n: usize,
    alpha: f64,
    n_sims: usize,
    seed: u64,
    lf: &LfDesign,
) -> Result<CriticalValue> {
    let fingerprint = spec.fingerprint(n);
    if let Some(cache) = cache {
        if let Some(hit) = cache.lookup(&fingerprint, alpha, n, n_sims, seed)? {
            return Ok(hit);
        }
    }
    let cv = simulate_lf_critval(spec, n, alpha, n_sims, seed, lf)?;
    if let Some(cache) = cache {
        cache.append(&cv)?;
    }
    Ok(cv)
}
