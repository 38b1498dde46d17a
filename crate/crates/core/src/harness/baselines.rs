//! Non-robust and classical robust baselines for the mean.

use crate::error::{Error, Result};
use crate::linalg;
use crate::types::PointSet;

pub fn sample_mean(s: &PointSet) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Err(Error::Empty);
    }
    Ok(s.mean())
}

pub fn coordinate_median(s: &PointSet) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Err(Error::Empty);
    }
    let n = s.len();
    Ok((0..s.dim())
        .map(|j| {
            let mut col: Vec<f64> = s.points().map(|p| p[j]).collect();
            col.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if n % 2 == 1 {
                col[n / 2]
            } else {
                0.5 * (col[n / 2 - 1] + col[n / 2])
            }
        })
        .collect())
}

/// Weiszfeld iterations for the point minimising the sum of distances.
pub fn geometric_median(s: &PointSet) -> Result<Vec<f64>> {
    let mut y = coordinate_median(s)?;
    for _ in 0..1000 {
        let mut num = vec![0.0; s.dim()];
        let mut den = 0.0;
        for p in s.points() {
            let dist = linalg::norm(&linalg::sub(p, &y)).max(1e-12);
            for (a, b) in num.iter_mut().zip(p) {
                *a += b / dist;
            }
            den += 1.0 / dist;
        }
        let next: Vec<f64> = num.iter().map(|a| a / den).collect();
        let step = linalg::norm(&linalg::sub(&next, &y));
        y = next;
        if step <= 1e-10 * (1.0 + linalg::norm(&y)) {
            break;
        }
    }
    Ok(y)
}
