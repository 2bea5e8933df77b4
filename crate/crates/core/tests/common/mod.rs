//! Independent reference solutions shared by the integration tests.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use minilp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem};

use crowdflow::BoundarySpec;

/// Optimal density of a 1-D correction problem and its range over the set
/// of optimal solutions.
pub struct LpStrip {
    pub rho: Vec<f64>,
    pub objective: f64,
    pub rho_min: Vec<f64>,
    pub rho_max: Vec<f64>,
}

impl LpStrip {
    /// Largest spread of a cell density over the optimal set.
    pub fn ambiguity(&self) -> f64 {
        self.rho_min
            .iter()
            .zip(&self.rho_max)
            .fold(0.0, |a, (lo, hi)| a.max(hi - lo))
    }
}

/// Minimum-flow problem on an `m x 1` strip with a wall on the left and an
/// exit on the right, written as an LP over split face fluxes:
///
/// min h^2 tau k sum (a_f + b_f)
/// s.t. rho_i - tau/h (phi_{i+1} - phi_i) = target_i, phi_f = a_f - b_f, phi_0 = 0,
///      0 <= rho <= 1, a, b >= 0.
pub fn strip_lp(target: &[f64], h: f64, tau: f64, k: f64) -> LpStrip {
    let build = |dir: OptimizationDirection, cell_obj: Option<usize>, cap: Option<f64>| {
        let m = target.len();
        let mut lp = Problem::new(dir);
        let cost = h * h * tau * k;
        let rho: Vec<_> = (0..m)
            .map(|i| lp.add_var(if cell_obj == Some(i) { 1.0 } else { 0.0 }, (0.0, 1.0)))
            .collect();
        let flow_obj = if cell_obj.is_some() { 0.0 } else { cost };
        // faces 1..=m; face m is the exit
        let plus: Vec<_> = (0..m).map(|_| lp.add_var(flow_obj, (0.0, f64::INFINITY))).collect();
        let minus: Vec<_> = (0..m).map(|_| lp.add_var(flow_obj, (0.0, f64::INFINITY))).collect();
        let c = tau / h;
        for i in 0..m {
            let mut e = LinearExpr::empty();
            e.add(rho[i], 1.0);
            // right face of cell i is face i+1 -> index i
            e.add(plus[i], -c);
            e.add(minus[i], c);
            if i > 0 {
                e.add(plus[i - 1], c);
                e.add(minus[i - 1], -c);
            }
            lp.add_constraint(e, ComparisonOp::Eq, target[i]);
        }
        if let Some(cap) = cap {
            let mut e = LinearExpr::empty();
            for f in 0..m {
                e.add(plus[f], cost);
                e.add(minus[f], cost);
            }
            lp.add_constraint(e, ComparisonOp::Le, cap);
        }
        let sol = lp.solve().expect("strip LP is feasible");
        let values: Vec<f64> = rho.iter().map(|v| *sol.var_value(*v)).collect();
        (sol.objective(), values)
    };
    let (objective, rho) = build(OptimizationDirection::Minimize, None, None);
    let cap = objective * (1.0 + 1e-9) + 1e-12;
    let m = target.len();
    let rho_min = (0..m)
        .map(|i| build(OptimizationDirection::Minimize, Some(i), Some(cap)).1[i])
        .collect();
    let rho_max = (0..m)
        .map(|i| build(OptimizationDirection::Maximize, Some(i), Some(cap)).1[i])
        .collect();
    LpStrip {
        rho,
        objective,
        rho_min,
        rho_max,
    }
}

/// Quadratic-cost correction on the same strip through its dual obstacle
/// problem
///
/// min_q sum q+ - sum q target + tau/2 sum_faces ((q_{i+1} - q_i)/h)^2,
///
/// with `q = 0` beyond the exit, solved by proximal gradient descent. The
/// density is recovered as `target + tau * laplacian(q)`.
pub fn strip_obstacle(target: &[f64], h: f64, tau: f64) -> (Vec<f64>, Vec<f64>) {
    let m = target.len();
    let lap = |q: &[f64], i: usize| {
        let left = if i > 0 { q[i - 1] - q[i] } else { 0.0 };
        let right = if i + 1 < m { q[i + 1] - q[i] } else { -q[i] };
        (left + right) / (h * h)
    };
    let step = 1.0 / (tau * 4.0 / (h * h));
    let mut q = vec![0.0; m];
    for _ in 0..2_000_000 {
        let mut change: f64 = 0.0;
        let grad: Vec<f64> = (0..m).map(|i| -target[i] - tau * lap(&q, i)).collect();
        for i in 0..m {
            let v = q[i] - step * grad[i];
            // prox of step * max(q, 0)
            let next = if v > step {
                v - step
            } else if v >= 0.0 {
                0.0
            } else {
                v
            };
            change = change.max((next - q[i]).abs());
            q[i] = next;
        }
        if change < 1e-15 {
            break;
        }
    }
    let rho = (0..m).map(|i| target[i] + tau * lap(&q, i)).collect();
    (rho, q)
}

#[derive(PartialEq)]
struct Item(f64, usize);
impl Eq for Item {}
impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Item {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.partial_cmp(&self.0).expect("finite distances")
    }
}

/// Unit-speed travel distance on the 8-neighbour cell graph. Door cells
/// start at half a cell, the distance from their center to the exit face.
pub fn graph_distance(b: &BoundarySpec) -> Vec<f64> {
    let g = *b.grid();
    let (m, n, h) = (g.m() as i64, g.n() as i64, g.h());
    let mut dist = vec![f64::INFINITY; g.num_cells()];
    let mut heap = BinaryHeap::new();
    for c in 0..g.num_cells() {
        if b.door_cell_mask()[c] && !b.obstacle_mask()[c] {
            dist[c] = 0.5 * h;
            heap.push(Item(0.5 * h, c));
        }
    }
    while let Some(Item(d, c)) = heap.pop() {
        if d > dist[c] {
            continue;
        }
        let (i, j) = ((c / g.n()) as i64, (c % g.n()) as i64);
        for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)] {
            let (a, bb) = (i + di, j + dj);
            if a < 0 || bb < 0 || a >= m || bb >= n {
                continue;
            }
            let k = g.cell(a as usize, bb as usize);
            if b.obstacle_mask()[k] {
                continue;
            }
            // diagonal moves must not cut an obstacle corner
            if di != 0 && dj != 0 {
                let side1 = g.cell(a as usize, j as usize);
                let side2 = g.cell(i as usize, bb as usize);
                if b.obstacle_mask()[side1] || b.obstacle_mask()[side2] {
                    continue;
                }
            }
            let nd = d + h * ((di * di + dj * dj) as f64).sqrt();
            if nd < dist[k] {
                dist[k] = nd;
                heap.push(Item(nd, k));
            }
        }
    }
    dist
}
