//! Exact balanced transportation problem via the network simplex method.
//!
//! Supplies and demands are integers, so every basic solution is integral and
//! the method is exact up to floating-point cost arithmetic. The spanning tree
//! keeps parent pointers and node potentials (c_ij = pi_row + pi_col on basic
//! cells); the initial basis is greedy by cost, and after each pivot only the detached subtree is re-hung and re-priced.

use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

/// A positive-flow cell of an optimal plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flow {
    pub row: usize,
    pub col: usize,
    pub amount: u64,
}

struct Tree {
    m: usize,
    n: usize,
    cost: Vec<f64>,
    // Basic arcs (row, col, flow).
    arcs: Vec<(usize, usize, u64)>,
    adj: Vec<Vec<usize>>,
    parent: Vec<usize>,
    parent_arc: Vec<usize>,
    depth: Vec<usize>,
    pot: Vec<f64>,
}

impl Tree {
    fn c(&self, r: usize, c: usize) -> f64 {
        self.cost[r * self.n + c]
    }

    fn arc_cost(&self, a: usize) -> f64 {
        let (r, c, _) = self.arcs[a];
        self.c(r, c)
    }

    fn other(&self, a: usize, node: usize) -> usize {
        let (r, c, _) = self.arcs[a];
        let cn = self.m + c;
        if node == r {
            cn
        } else {
            r
        }
    }

    /// Hangs the component containing `start` below `parent` (NONE for the root).
    fn hang(&mut self, start: usize, parent: usize, via: usize) {
        let mut stack = vec![(start, parent, via)];
        while let Some((node, par, arc)) = stack.pop() {
            self.parent[node] = par;
            self.parent_arc[node] = arc;
            if par == NONE {
                self.depth[node] = 0;
                self.pot[node] = 0.0;
            } else {
                self.depth[node] = self.depth[par] + 1;
                self.pot[node] = self.arc_cost(arc) - self.pot[par];
            }
            for idx in 0..self.adj[node].len() {
                let a = self.adj[node][idx];
                if a == arc {
                    continue;
                }
                let next = self.other(a, node);
                stack.push((next, node, a));
            }
        }
    }
}

fn push_arc(t: &mut Tree, i: usize, j: usize, f: u64) {
    let id = t.arcs.len();
    t.arcs.push((i, j, f));
    t.adj[i].push(id);
    t.adj[t.m + j].push(id);
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    /// Merges the sets of a and b; false if already joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra] = rb;
        true
    }
}

/// Solves min sum c_ij x_ij subject to row sums `supply`, column sums `demand`.
/// `cost` is row-major `m x n`.
pub fn solve_transport(supply: &[u64], demand: &[u64], cost: Vec<f64>) -> Result<(Vec<Flow>, f64)> {
    let (m, n) = (supply.len(), demand.len());
    if m == 0 || n == 0 {
        return Err(Error::Empty);
    }
    if cost.len() != m * n {
        return Err(Error::DimensionMismatch("cost matrix size".into()));
    }
    if supply.iter().sum::<u64>() != demand.iter().sum::<u64>() {
        return Err(Error::invalid("unbalanced transportation problem"));
    }
    let nodes = m + n;
    let mut t = Tree {
        m,
        n,
        cost,
        arcs: Vec::with_capacity(nodes - 1),
        adj: vec![Vec::new(); nodes],
        parent: vec![NONE; nodes],
        parent_arc: vec![NONE; nodes],
        depth: vec![0; nodes],
        pot: vec![0.0; nodes],
    };

    // Greedy cheapest-cell basis. Each positive cell exhausts its row or column,
    // so positive cells form a forest; zero-flow cells complete it to a spanning tree.
    let mut order: Vec<u32> = (0..(m * n) as u32).collect();
    order.sort_unstable_by(|&a, &b| t.cost[a as usize].total_cmp(&t.cost[b as usize]));
    let mut a_rem = supply.to_vec();
    let mut b_rem = demand.to_vec();
    let mut uf = UnionFind::new(nodes);
    let mut zero_candidates = Vec::new();
    for &cell in &order {
        let (i, j) = (cell as usize / n, cell as usize % n);
        let f = a_rem[i].min(b_rem[j]);
        if f > 0 {
            a_rem[i] -= f;
            b_rem[j] -= f;
            uf.union(i, m + j);
            push_arc(&mut t, i, j, f);
        } else if t.arcs.len() + zero_candidates.len() < nodes - 1 + nodes {
            zero_candidates.push(cell);
        }
    }
    for &cell in zero_candidates.iter().chain(order.iter()) {
        if t.arcs.len() == nodes - 1 {
            break;
        }
        let (i, j) = (cell as usize / n, cell as usize % n);
        if uf.union(i, m + j) {
            push_arc(&mut t, i, j, 0);
        }
    }
    drop(order);
    t.hang(0, NONE, NONE);

    let cmax = t.cost.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
    let tol = 1e-11 * (1.0 + cmax);
    let cells = m * n;
    let block = ((cells as f64).sqrt() as usize).max(32).min(cells);
    let mut cursor = 0usize;
    let max_pivots = 50 * cells + 10_000;
    let mut pivots = 0usize;

    loop {
        // Block pricing: scan up to `block` cells, enter the most negative seen.
        let mut best = (0.0f64, NONE);
        let mut scanned = 0usize;
        let (mut r, mut c) = (cursor / n, cursor % n);
        let mut since_block = 0usize;
        while scanned < cells {
            let cell = r * n + c;
            let rc = t.cost[cell] - t.pot[r] - t.pot[m + c];
            if rc < best.0 - tol {
                best = (rc, cell);
            }
            scanned += 1;
            since_block += 1;
            c += 1;
            if c == n {
                c = 0;
                r += 1;
                if r == m {
                    r = 0;
                }
            }
            if since_block == block {
                since_block = 0;
                if best.1 != NONE {
                    break;
                }
            }
        }
        cursor = r * n + c;
        if best.1 == NONE {
            break;
        }
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::Solver("transport simplex exceeded its pivot limit".into()));
        }
        let (er, ec) = (best.1 / n, best.1 % n);
        pivot(&mut t, er, ec);
    }

    let mut flows = Vec::new();
    let mut total = 0.0;
    for &(r, c, f) in &t.arcs {
        if f > 0 {
            flows.push(Flow { row: r, col: c, amount: f });
            total += f as f64 * t.c(r, c);
        }
    }
    Ok((flows, total))
}

fn pivot(t: &mut Tree, er: usize, ec: usize) {
    let m = t.m;
    let (mut x, mut y) = (er, m + ec);
    // Arcs from each endpoint up to the apex, in upward order.
    let mut path_r = Vec::new();
    let mut path_c = Vec::new();
    while t.depth[x] > t.depth[y] {
        path_r.push(t.parent_arc[x]);
        x = t.parent[x];
    }
    while t.depth[y] > t.depth[x] {
        path_c.push(t.parent_arc[y]);
        y = t.parent[y];
    }
    while x != y {
        path_r.push(t.parent_arc[x]);
        x = t.parent[x];
        path_c.push(t.parent_arc[y]);
        y = t.parent[y];
    }
    // Along each path the arc adjacent to the entering cell loses flow, then signs alternate.
    let mut theta = u64::MAX;
    for (p, &a) in path_r.iter().enumerate() {
        if p % 2 == 0 {
            theta = theta.min(t.arcs[a].2);
        }
    }
    for (p, &a) in path_c.iter().enumerate() {
        if p % 2 == 0 {
            theta = theta.min(t.arcs[a].2);
        }
    }
    // Last blocking arc when the cycle is walked apex -> row side -> entering -> column side -> apex.
    let mut leave = None;
    for (p, &a) in path_c.iter().enumerate().rev() {
        if p % 2 == 0 && t.arcs[a].2 == theta {
            leave = Some((a, false));
            break;
        }
    }
    if leave.is_none() {
        for (p, &a) in path_r.iter().enumerate() {
            if p % 2 == 0 && t.arcs[a].2 == theta {
                leave = Some((a, true));
                break;
            }
        }
    }
    let (leave, on_row_side) = leave.expect("cycle has a blocking arc");
    for (p, &a) in path_r.iter().enumerate() {
        if p % 2 == 0 {
            t.arcs[a].2 -= theta;
        } else {
            t.arcs[a].2 += theta;
        }
    }
    for (p, &a) in path_c.iter().enumerate() {
        if p % 2 == 0 {
            t.arcs[a].2 -= theta;
        } else {
            t.arcs[a].2 += theta;
        }
    }
    // Replace the leaving arc's slot with the entering cell.
    let (lr, lc, _) = t.arcs[leave];
    t.adj[lr].retain(|&a| a != leave);
    t.adj[m + lc].retain(|&a| a != leave);
    t.arcs[leave] = (er, ec, theta);
    t.adj[er].push(leave);
    t.adj[m + ec].push(leave);
    // The endpoint on the side that contained the leaving arc is in the cut-off subtree.
    if on_row_side {
        t.hang(er, m + ec, leave);
    } else {
        t.hang(m + ec, er, leave);
    }
}
