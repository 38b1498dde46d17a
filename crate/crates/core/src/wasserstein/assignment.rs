//! Minimum-cost perfect matching (Hungarian method with potentials, O(n^3)).

/// Returns `assign` with row i matched to column `assign[i]`, and the total cost.
pub fn solve_assignment(n: usize, cost: impl Fn(usize, usize) -> f64) -> (Vec<usize>, f64) {
    if n == 0 {
        return (vec![], 0.0);
    }
    // 1-indexed arrays; column 0 is a sentinel.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![inf; n + 1];
    let mut used = vec![false; n + 1];
    let mut row_cost = vec![0.0; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = inf);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for (j, rc) in row_cost.iter_mut().enumerate().skip(1) {
                if !used[j] {
                    *rc = cost(i0 - 1, j - 1);
                }
            }
            for j in 1..=n {
                if !used[j] {
                    let cur = row_cost[j] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    let total = (0..n).map(|i| cost(i, assign[i])).sum();
    (assign, total)
}
