//! Generalized (eps, delta, k)-stability.
//!
//! S is stable about mu when every S' subset of S with |S'| >= (1-eps)|S|
//! satisfies ||mu_{S'} - mu|| <= delta and |<V, Sigma_{S'} - I>| <= delta^2/eps
//! for all rank-k projections V, where Sigma_{S'} is the second moment about mu.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::types::{PointSet, ProjectionBudget};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum StabilityMode {
    /// Enumerate removal sets; refuses inputs with more than `max_n` points.
    Exhaustive { max_n: usize },
    /// Greedy and local search; yields a lower bound on the true delta.
    Heuristic { restarts: usize },
}

impl StabilityMode {
    pub fn exhaustive() -> Self {
        StabilityMode::Exhaustive { max_n: 22 }
    }

    pub fn heuristic() -> Self {
        StabilityMode::Heuristic { restarts: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub epsilon: f64,
    pub k: usize,
    pub n: usize,
    pub exhaustive: bool,
    pub worst_mean_dev: f64,
    pub worst_second_moment_dev: f64,
    /// max(worst_mean_dev, sqrt(eps * worst_second_moment_dev)).
    pub implied_delta: f64,
    /// Indices removed to attain the worst mean deviation.
    pub mean_witness: Vec<usize>,
    /// Indices removed to attain the worst second-moment deviation.
    pub second_moment_witness: Vec<usize>,
    pub witness_projection: ProjectionBudget,
}

fn removal_count(eps: f64, n: usize) -> usize {
    (eps * n as f64 + 1e-9).floor() as usize
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Calls `f` on every strictly increasing j-subset of 0..n.
pub fn for_each_combination(n: usize, j: usize, mut f: impl FnMut(&[usize])) {
    if j > n {
        return;
    }
    let mut idx: Vec<usize> = (0..j).collect();
    loop {
        f(&idx);
        let mut i = j;
        while i > 0 && idx[i - 1] == n - j + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for t in i..j {
            idx[t] = idx[t - 1] + 1;
        }
    }
}

struct Prepared {
    d: usize,
    n: usize,
    centred: Vec<Vec<f64>>,
    outer: Vec<DMatrix<f64>>,
    sum: Vec<f64>,
    outer_sum: DMatrix<f64>,
}

fn prepare(s: &PointSet, mu: &[f64]) -> Prepared {
    let d = s.dim();
    let centred: Vec<Vec<f64>> = s.points().map(|p| linalg::sub(p, mu)).collect();
    let outer: Vec<DMatrix<f64>> = centred
        .iter()
        .map(|y| {
            let v = linalg::dvec(y);
            &v * v.transpose()
        })
        .collect();
    let mut sum = vec![0.0; d];
    for y in &centred {
        for j in 0..d {
            sum[j] += y[j];
        }
    }
    let outer_sum = outer.iter().fold(DMatrix::zeros(d, d), |a, b| a + b);
    Prepared {
        d,
        n: s.len(),
        centred,
        outer,
        sum,
        outer_sum,
    }
}

impl Prepared {
    fn mean_dev(&self, removed: &[usize]) -> f64 {
        let mut s = self.sum.clone();
        for &r in removed {
            for j in 0..self.d {
                s[j] -= self.centred[r][j];
            }
        }
        let m = (self.n - removed.len()) as f64;
        linalg::norm(&s) / m
    }

    fn second_moment_minus_identity(&self, removed: &[usize]) -> DMatrix<f64> {
        let mut acc = self.outer_sum.clone();
        for &r in removed {
            acc -= &self.outer[r];
        }
        acc / (self.n - removed.len()) as f64 - DMatrix::identity(self.d, self.d)
    }

    fn complement(&self, removed: &[usize]) -> Vec<usize> {
        let mut keep = vec![true; self.n];
        for &r in removed {
            keep[r] = false;
        }
        (0..self.n).filter(|&i| keep[i]).collect()
    }
}

fn validate(s: &PointSet, mu: &[f64], eps: f64, k: usize) -> Result<()> {
    if s.is_empty() {
        return Err(Error::Empty);
    }
    if mu.len() != s.dim() {
        return Err(Error::DimensionMismatch("mean and points differ in dimension".into()));
    }
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::invalid(format!("epsilon {eps} outside (0, 1/2)")));
    }
    if k == 0 || k > s.dim() {
        return Err(Error::InvalidRank { k, d: s.dim() });
    }
    Ok(())
}

/// Computes the smallest delta for which S is (eps, delta, k)-stable about mu
/// (exhaustive mode) or a lower bound on it (heuristic mode).
pub fn check_stability(
    s: &PointSet,
    mu: &[f64],
    eps: f64,
    k: usize,
    mode: StabilityMode,
) -> Result<StabilityReport> {
    validate(s, mu, eps, k)?;
    let p = prepare(s, mu);
    let m = removal_count(eps, p.n);
    let (mean_dev, mean_wit, sm_dev, sm_wit, proj, exhaustive) = match mode {
        StabilityMode::Exhaustive { max_n } => {
            check_work(p.n, m, max_n)?;
            let (md, mw) = exhaustive_mean(&p, m);
            let (sd, sw, pr) = exhaustive_second_moment(&p, m, k)?;
            (md, mw, sd, sw, pr, true)
        }
        StabilityMode::Heuristic { restarts } => {
            let (md, mw) = heuristic_mean(&p, m, restarts);
            let (sd, sw, pr) = heuristic_second_moment(&p, m, k)?;
            (md, mw, sd, sw, pr, false)
        }
    };
    Ok(StabilityReport {
        epsilon: eps,
        k,
        n: p.n,
        exhaustive,
        worst_mean_dev: mean_dev,
        worst_second_moment_dev: sm_dev,
        implied_delta: mean_dev.max((eps * sm_dev).sqrt()),
        mean_witness: mean_wit,
        second_moment_witness: sm_wit,
        witness_projection: proj,
    })
}

fn check_work(n: usize, m: usize, max_n: usize) -> Result<()> {
    if n > max_n {
        return Err(Error::WorkLimit(format!(
            "exhaustive stability check limited to n <= {max_n}, got n = {n}"
        )));
    }
    let work: f64 = (0..=m).map(|j| binom(n, j)).sum();
    if work > 2e7 {
        return Err(Error::WorkLimit(format!("{work:.0} subsets to enumerate")));
    }
    Ok(())
}

// The mean deviation is convex in the subset weights, so its maximum over the
// capped simplex sits at a vertex: removals of exactly m points suffice.
fn exhaustive_mean(p: &Prepared, m: usize) -> (f64, Vec<usize>) {
    let mut best = (p.mean_dev(&[]), vec![]);
    for_each_combination(p.n, m, |r| {
        let v = p.mean_dev(r);
        if v > best.0 {
            best = (v, r.to_vec());
        }
    });
    best
}

fn exhaustive_second_moment(
    p: &Prepared,
    m: usize,
    k: usize,
) -> Result<(f64, Vec<usize>, ProjectionBudget)> {
    let (v0, w0) = linalg::signed_extreme_with_witness(&p.second_moment_minus_identity(&[]), k)?;
    let mut best = (v0, vec![], w0);
    let mut err = None;
    for j in 1..=m {
        for_each_combination(p.n, j, |r| {
            if err.is_some() {
                return;
            }
            match linalg::signed_extreme_budget(&p.second_moment_minus_identity(r), k) {
                Ok(v) if v > best.0 => best = (v, r.to_vec(), best.2.clone()),
                Ok(_) => {}
                Err(e) => err = Some(e),
            }
        });
    }
    if let Some(e) = err {
        return Err(e);
    }
    let (_, w) = linalg::signed_extreme_with_witness(&p.second_moment_minus_identity(&best.1), k)?;
    Ok((best.0, best.1, w))
}

/// Removes the m points with the smallest projection on `dir`.
fn remove_lowest(scores: &[f64], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap().then(a.cmp(&b)));
    let mut r = idx[..m].to_vec();
    r.sort_unstable();
    r
}

/// Best-improvement single swaps between removed and kept points.
fn local_swaps(p: &Prepared, removed: &mut Vec<usize>, value: &mut f64, eval: &dyn Fn(&[usize]) -> f64) {
    if removed.is_empty() || p.n > 200 {
        return;
    }
    for _ in 0..50 {
        let kept = p.complement(removed);
        let mut improved = None;
        for a in 0..removed.len() {
            for &b in &kept {
                let mut trial = removed.clone();
                trial[a] = b;
                let v = eval(&trial);
                if v > *value * (1.0 + 1e-12) && improved.as_ref().map(|(bv, _)| v > *bv).unwrap_or(true) {
                    improved = Some((v, trial));
                }
            }
        }
        match improved {
            Some((v, mut t)) => {
                t.sort_unstable();
                *removed = t;
                *value = v;
            }
            None => return,
        }
    }
}

fn heuristic_mean(p: &Prepared, m: usize, restarts: usize) -> (f64, Vec<usize>) {
    let d = p.d;
    let mut best = (p.mean_dev(&[]), vec![]);
    if m == 0 {
        return best;
    }
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    let s_norm = linalg::norm(&p.sum);
    if s_norm > 0.0 {
        dirs.push(p.sum.iter().map(|x| x / s_norm).collect());
    }
    if let Ok(eig) = linalg::sym_eigen(&p.outer_sum) {
        for c in 0..d.min(restarts.max(1)) {
            let v: Vec<f64> = eig.vectors.column(c).iter().copied().collect();
            dirs.push(v.clone());
            dirs.push(v.iter().map(|x| -x).collect());
        }
    }
    for start in dirs {
        let mut dir = start;
        let mut removed = Vec::new();
        for _ in 0..20 {
            let scores: Vec<f64> = p.centred.iter().map(|y| linalg::dot(y, &dir)).collect();
            let r = remove_lowest(&scores, m);
            if r == removed {
                break;
            }
            removed = r;
            let mut s = p.sum.clone();
            for &i in &removed {
                for j in 0..d {
                    s[j] -= p.centred[i][j];
                }
            }
            let ns = linalg::norm(&s);
            if ns == 0.0 {
                break;
            }
            dir = s.iter().map(|x| x / ns).collect();
        }
        let mut v = p.mean_dev(&removed);
        local_swaps(p, &mut removed, &mut v, &|r| p.mean_dev(r));
        if v > best.0 {
            best = (v, removed);
        }
    }
    best
}

fn heuristic_second_moment(
    p: &Prepared,
    m: usize,
    k: usize,
) -> Result<(f64, Vec<usize>, ProjectionBudget)> {
    let d = p.d;
    let eval = |r: &[usize]| -> f64 {
        linalg::signed_extreme_budget(&p.second_moment_minus_identity(r), k).unwrap_or(0.0)
    };
    let mut best = (eval(&[]), Vec::<usize>::new());
    for upper in [true, false] {
        let mut removed: Vec<usize> = Vec::new();
        for _ in 0..20 {
            let a = p.second_moment_minus_identity(&removed);
            let eig = linalg::sym_eigen(&a)?;
            let cols: Vec<usize> = if upper { (0..k).collect() } else { (d - k..d).collect() };
            let q: Vec<f64> = p
                .centred
                .iter()
                .map(|y| {
                    cols.iter()
                        .map(|&c| {
                            let z: f64 = (0..d).map(|r| eig.vectors[(r, c)] * y[r]).sum();
                            z * z
                        })
                        .sum()
                })
                .collect();
            // Raising the quadratic form drops small scores; lowering drops large ones.
            let scores: Vec<f64> = if upper { q } else { q.iter().map(|x| -x).collect() };
            let mut round_best: Option<(f64, Vec<usize>)> = None;
            for j in 0..=m {
                let r = remove_lowest(&scores, j);
                let v = eval(&r);
                if round_best.as_ref().map(|(bv, _)| v > *bv).unwrap_or(true) {
                    round_best = Some((v, r));
                }
            }
            let (_, r) = round_best.unwrap();
            if r == removed {
                break;
            }
            removed = r;
        }
        let mut v = eval(&removed);
        local_swaps(p, &mut removed, &mut v, &eval);
        if v > best.0 {
            best = (v, removed);
        }
    }
    let (_, w) = linalg::signed_extreme_with_witness(&p.second_moment_minus_identity(&best.1), k)?;
    Ok((best.0, best.1, w))
}

/// Tail assumptions for the stability-rate lookup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum RateFamily {
    Subgaussian,
    BoundedKthMoment { order: u32, sigma: f64 },
    BoundedCovariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateQuery {
    pub family: RateFamily,
    pub epsilon: f64,
    /// Sample size; `None` for the n -> infinity limit.
    pub n: Option<u64>,
    pub d: usize,
    /// Failure probability in (0, 1].
    pub tau: f64,
}

/// Stability-rate delta with unit leading constants.
///
/// * subgaussian: eps sqrt(log 1/eps) + sqrt(d/n) + sqrt(log(1/tau)/n)
/// * bounded k-th moment: sigma eps^{1-1/k} + sqrt(d log d / n) + sqrt(log(1/tau)/n)
/// * bounded covariance: sqrt(eps) + sqrt(d log d / n) + sqrt(log(1/tau)/n)
pub fn rate_formula(q: &RateQuery, c_small: f64) -> Result<f64> {
    let eps = q.epsilon;
    if !(0.0..0.5).contains(&eps) {
        return Err(Error::invalid(format!("epsilon {eps} outside [0, 1/2)")));
    }
    if !(q.tau > 0.0 && q.tau <= 1.0) {
        return Err(Error::invalid(format!("tau {} outside (0, 1]", q.tau)));
    }
    if q.d == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    let log_tau = (1.0 / q.tau).ln();
    let inv_n = match q.n {
        Some(0) => return Err(Error::invalid("n must be positive")),
        Some(n) => 1.0 / n as f64,
        None => 0.0,
    };
    if eps + log_tau * inv_n >= c_small {
        return Err(Error::invalid(format!(
            "eps + log(1/tau)/n = {} is not below c_small = {c_small}",
            eps + log_tau * inv_n
        )));
    }
    let d = q.d as f64;
    let conf = (log_tau * inv_n).sqrt();
    let dlogd = (d * d.ln() * inv_n).sqrt();
    let v = match q.family {
        RateFamily::Subgaussian => {
            let head = if eps > 0.0 { eps * (1.0 / eps).ln().sqrt() } else { 0.0 };
            head + (d * inv_n).sqrt() + conf
        }
        RateFamily::BoundedKthMoment { order, sigma } => {
            if order < 2 {
                return Err(Error::invalid("moment order must be at least 2"));
            }
            sigma * eps.powf(1.0 - 1.0 / order as f64) + dlogd + conf
        }
        RateFamily::BoundedCovariance => eps.sqrt() + dlogd + conf,
    };
    Ok(v)
}

/// Minimal delta under the main definition and under two alternative
/// characterisations, each floored at eps (the definitions require delta >= eps).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub delta_main: f64,
    /// Full-set mean and upper second-moment bound, subset lower bound.
    pub delta_alt1: f64,
    /// Full-set conditions plus small-subset mass.
    pub delta_alt2: f64,
    pub ratio_alt1: f64,
    pub ratio_alt2: f64,
}

/// Exhaustively evaluates the three characterisations of stability.
pub fn verify_equivalence_lemma(
    s: &PointSet,
    mu: &[f64],
    eps: f64,
    k: usize,
    max_n: usize,
) -> Result<EquivalenceReport> {
    validate(s, mu, eps, k)?;
    let p = prepare(s, mu);
    let m = removal_count(eps, p.n);
    check_work(p.n, m, max_n)?;
    let main = check_stability(s, mu, eps, k, StabilityMode::Exhaustive { max_n })?;
    let delta_main = main.implied_delta.max(eps);

    let full_mean = p.mean_dev(&[]);
    let full = p.second_moment_minus_identity(&[]);
    let full_upper = linalg::top_k_sum(&full, k)?.max(0.0);
    let mut lower = 0.0f64;
    for j in 0..=m {
        let mut err = None;
        for_each_combination(p.n, j, |r| {
            let a = p.second_moment_minus_identity(r);
            match linalg::top_k_sum(&(-a), k) {
                Ok(v) => lower = lower.max(v),
                Err(e) => err = Some(e),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
    }
    let delta_alt1 = full_mean
        .max((eps * full_upper).sqrt())
        .max((eps * lower).sqrt())
        .max(eps);

    let mut mass = 0.0f64;
    let mut err = None;
    for_each_combination(p.n, m, |t| {
        let acc = t.iter().fold(DMatrix::zeros(p.d, p.d), |a, &i| a + &p.outer[i]) / p.n as f64;
        match linalg::top_k_sum(&acc, k) {
            Ok(v) => mass = mass.max(v),
            Err(e) => err = Some(e),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    let delta_alt2 = full_mean
        .max((eps * full_upper).sqrt())
        .max((eps * mass).sqrt())
        .max(eps);
    Ok(EquivalenceReport {
        delta_main,
        delta_alt1,
        delta_alt2,
        ratio_alt1: delta_alt1 / delta_main,
        ratio_alt2: delta_alt2 / delta_main,
    })
}
