//! Unbiased pass@k estimation: `1 - C(n-c, k) / C(n, k)`, evaluated with
//! exact integer arithmetic and rounded to f64 at the end.

use num_bigint::BigUint;
use num_rational::Ratio;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Per-problem sampling outcome: `n` samples drawn, `c` passed the grader.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PassKRecord {
    pub problem_id: String,
    pub n: usize,
    pub c: usize,
}

impl PassKRecord {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 || self.c > self.n {
            return Err(Error::Domain(format!(
                "pass@k record '{}' needs 1 <= n and c <= n, got n={} c={}",
                self.problem_id, self.n, self.c
            )));
        }
        Ok(())
    }
}

fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let mut result = BigUint::one();
    for i in 0..k.min(n - k) {
        result = result * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    result
}

/// Exact rational form of the estimator.
pub fn pass_at_k_exact(n: usize, c: usize, k: usize) -> Result<Ratio<BigUint>> {
    if k < 1 || k > n {
        return Err(Error::Domain(format!("pass@k needs 1 <= k <= n, got k={k} n={n}")));
    }
    if c > n {
        return Err(Error::Domain(format!("pass@k needs c <= n, got c={c} n={n}")));
    }
    let miss = Ratio::new(binomial(n - c, k), binomial(n, k));
    Ok(Ratio::one() - miss)
}

/// f64 rounding of the exact value. 0 when c=0; 1 when c >= n-k+1.
pub fn pass_at_k(n: usize, c: usize, k: usize) -> Result<f64> {
    let exact = pass_at_k_exact(n, c, k)?;
    Ok(exact.to_f64().expect("pass@k ratio is in [0,1]"))
}

/// Arithmetic mean of pass@k over records, per k. Non-decreasing in k.
pub fn pass_at_k_curve(records: &[PassKRecord], ks: &[usize]) -> Result<Vec<(usize, f64)>> {
    if records.is_empty() {
        return Err(Error::Domain("pass@k curve needs at least one record".into()));
    }
    for record in records {
        record.validate()?;
    }
    let mut curve = Vec::with_capacity(ks.len());
    for &k in ks {
        let mut total = 0.0f64;
        for record in records {
            if k > record.n {
                return Err(Error::Domain(format!(
                    "k={k} exceeds n={} for record '{}'",
                    record.n, record.problem_id
                )));
            }
            total += pass_at_k(record.n, record.c, k)?;
        }
        curve.push((k, total / records.len() as f64));
    }
    Ok(curve)
}
