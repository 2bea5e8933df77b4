//! Weighted eikonal equation `|grad(phi)| = f`, `phi = 0` on exits, and the
//! spontaneous velocity field derived from its solution.
//!
//! The travel cost is the maximiser of `h^2 sum u` over grid functions with
//! `u = 0` on door cells and `|grad_h u| <= f` on every face pair (see
//! [`FacePairs`]). The problem is solved with primal-dual iterations: the
//! primal proximal step adds the step size to every free cell and resets the
//! door cells, the dual proximal step is the Moreau complement of a
//! pointwise ball projection, i.e. a vector shrinkage with threshold
//! `alpha * f`.

use crate::error::{Error, Result};
use crate::field::{FluxField, ScalarField};
use crate::grid::BoundarySpec;
use crate::ops::{divergence_into, gradient_into, operator_norm_estimate, FacePairs};
use crate::pd::{PdParams, SolverSettings};

/// Travel cost assigned to cells that cannot reach any exit.
pub const UNREACHABLE_COST: f64 = 1e6;

/// Below this cell-gradient magnitude the velocity is set to zero.
pub const GRADIENT_FLOOR: f64 = 1e-8;

/// Number of consecutive small-change iterations required to stop.
const STALL_WINDOW: usize = 10;

/// Output of [`solve_eikonal`].
#[derive(Debug, Clone)]
pub struct EikonalSolution {
    pub phi: ScalarField,
    /// `max |u_{l+1} - u_l| / max |u_{l+1}|` per iteration.
    pub residuals: Vec<f64>,
    /// `h^2 sum u` per iteration.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Cells with no open path to a door; they carry [`UNREACHABLE_COST`].
    pub unreachable: Vec<bool>,
}

impl EikonalSolution {
    /// Whether the windowed objective (means over blocks of 50 iterations,
    /// after the first 100) never decreases by more than `slack` relative.
    pub fn objective_monotone(&self, slack: f64) -> bool {
        const SKIP: usize = 100;
        const WINDOW: usize = 50;
        if self.objective.len() < SKIP + 2 * WINDOW {
            return true;
        }
        let means: Vec<f64> = self.objective[SKIP..]
            .chunks_exact(WINDOW)
            .map(|c| c.iter().sum::<f64>() / WINDOW as f64)
            .collect();
        means
            .windows(2)
            .all(|w| w[1] >= w[0] - slack * w[0].abs().max(1e-12))
    }

    /// `max_pairs (|grad_h phi| - f)` over cells that can reach an exit.
    pub fn max_constraint_excess(&self, boundary: &BoundarySpec, f: &ScalarField) -> Result<f64> {
        let mut phi = self.phi.clone();
        for (v, u) in phi.as_mut_slice().iter_mut().zip(&self.unreachable) {
            if *u {
                *v = 0.0;
            }
        }
        let grad = crate::ops::gradient(boundary, &phi)?;
        Ok(FacePairs::new(boundary).max_excess_over(&grad, f))
    }
}

/// Default primal-dual parameters for the eikonal problem on `boundary`.
pub fn default_params(boundary: &BoundarySpec, settings: &SolverSettings) -> Result<PdParams> {
    PdParams::from_norm(operator_norm_estimate(boundary), settings.step_ratio, settings)
}

/// Solve the eikonal problem from a zero initial guess.
pub fn solve_eikonal(boundary: &BoundarySpec, f: &ScalarField, params: &PdParams) -> Result<EikonalSolution> {
    solve_eikonal_from(boundary, f, params, None)
}

/// Solve the eikonal problem, optionally warm-started from a previous
/// potential (the coupled-speed mode re-solves with a slowly changing `f`).
pub fn solve_eikonal_from(
    boundary: &BoundarySpec,
    f: &ScalarField,
    params: &PdParams,
    init: Option<&ScalarField>,
) -> Result<EikonalSolution> {
    let grid = *boundary.grid();
    f.check_grid(&grid)?;
    if !boundary.has_doors() {
        return Err(Error::config("eikonal problem needs at least one open door face"));
    }
    let obstacles = boundary.obstacle_mask();
    if let Some(k) = f
        .as_slice()
        .iter()
        .zip(obstacles)
        .position(|(v, o)| !*o && !(*v > 0.0 && v.is_finite()))
    {
        return Err(Error::domain(format!(
            "speed field must be positive on fluid cells, got {} at cell ({}, {})",
            f.as_slice()[k],
            k / grid.n(),
            k % grid.n()
        )));
    }
    params.check(operator_norm_estimate(boundary))?;

    let reachable = boundary.reachable_from_doors();
    let free: Vec<f64> = (0..grid.num_cells())
        .map(|c| {
            if reachable[c] && !boundary.door_cell_mask()[c] {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let pairs = FacePairs::new(boundary);
    let bound = f.as_slice();

    let mut u = match init {
        Some(u0) => {
            u0.check_grid(&grid)?;
            u0.as_slice().iter().zip(&free).map(|(v, w)| v * w).collect()
        }
        None => vec![0.0; grid.num_cells()],
    };
    let mut u_next = vec![0.0; grid.num_cells()];
    let mut div = vec![0.0; grid.num_cells()];
    let (nx, ny) = (grid.num_x_faces(), grid.num_y_faces());
    let (mut qx, mut qy) = (vec![0.0; nx], vec![0.0; ny]);
    let (mut qbx, mut qby) = (vec![0.0; nx], vec![0.0; ny]);
    let (mut gx, mut gy) = (vec![0.0; nx], vec![0.0; ny]);
    let (alpha, beta, theta) = (params.alpha, params.beta, params.theta);
    let area = grid.area();

    let mut residuals = Vec::new();
    let mut objective = Vec::new();
    let mut calm = 0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iter {
        iterations += 1;
        // primal: u <- prox_{beta A}(u + beta div(q_bar))
        divergence_into(boundary, &qbx, &qby, &mut div);
        let mut change: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for c in 0..u.len() {
            let v = free[c] * (u[c] + beta * div[c] + beta);
            change = change.max((v - u[c]).abs());
            scale = scale.max(v.abs());
            u_next[c] = v;
        }
        std::mem::swap(&mut u, &mut u_next);
        // dual: q <- prox_{alpha B*}(q + alpha grad u)
        gradient_into(boundary, &u, &mut gx, &mut gy);
        qbx.copy_from_slice(&qx);
        qby.copy_from_slice(&qy);
        qx.iter_mut().zip(&gx).for_each(|(q, g)| *q += alpha * g);
        qy.iter_mut().zip(&gy).for_each(|(q, g)| *q += alpha * g);
        pairs.shrink(&mut qx, &mut qy, bound, alpha);
        // extrapolation: q_bar = q + theta (q - q_old), q_old held in q_bar
        for k in 0..nx {
            qbx[k] = qx[k] + theta * (qx[k] - qbx[k]);
        }
        for k in 0..ny {
            qby[k] = qy[k] + theta * (qy[k] - qby[k]);
        }

        let rel = if scale > 0.0 { change / scale } else { change };
        residuals.push(rel);
        objective.push(area * u.iter().sum::<f64>());
        calm = if rel < params.tol { calm + 1 } else { 0 };
        if calm >= STALL_WINDOW {
            converged = true;
            break;
        }
    }

    let unreachable: Vec<bool> = (0..grid.num_cells())
        .map(|c| !reachable[c] && !obstacles[c])
        .collect();
    for c in 0..u.len() {
        if unreachable[c] {
            u[c] = UNREACHABLE_COST;
        } else if obstacles[c] {
            u[c] = 0.0;
        }
    }
    Ok(EikonalSolution {
        phi: ScalarField::from_vec(grid, u)?,
        residuals,
        objective,
        iterations,
        converged,
        unreachable,
    })
}

/// Unit spontaneous velocity with both its cell vectors and face values.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    /// x-component per cell.
    pub cell_x: ScalarField,
    /// y-component per cell.
    pub cell_y: ScalarField,
    /// Normal components on faces, the layout used by the transport step.
    pub faces: FluxField,
}

impl VelocityField {
    pub fn zeros(boundary: &BoundarySpec) -> Self {
        let g = *boundary.grid();
        VelocityField {
            cell_x: ScalarField::zeros(g),
            cell_y: ScalarField::zeros(g),
            faces: FluxField::zeros(g),
        }
    }

    /// Face values from cell vectors: interior faces take the mean of the
    /// two adjacent normal components, door faces the interior cell's value,
    /// walls zero.
    pub fn from_cell_vectors(boundary: &BoundarySpec, vx: ScalarField, vy: ScalarField) -> Result<Self> {
        let g = *boundary.grid();
        vx.check_grid(&g)?;
        vy.check_grid(&g)?;
        let (m, n) = (g.m(), g.n());
        let (ax, ay) = (vx.as_slice(), vy.as_slice());
        let mut faces = FluxField::zeros(g);
        let (fx, fy) = faces.slices_mut();
        for i in 0..=m {
            for j in 0..n {
                fx[g.x_face(i, j)] = match (i > 0, i < m) {
                    (true, true) => 0.5 * (ax[g.cell(i - 1, j)] + ax[g.cell(i, j)]),
                    (false, _) => ax[g.cell(0, j)],
                    (_, false) => ax[g.cell(m - 1, j)],
                };
            }
        }
        for i in 0..m {
            for j in 0..=n {
                fy[g.y_face(i, j)] = match (j > 0, j < n) {
                    (true, true) => 0.5 * (ay[g.cell(i, j - 1)] + ay[g.cell(i, j)]),
                    (false, _) => ay[g.cell(i, 0)],
                    (_, false) => ay[g.cell(i, n - 1)],
                };
            }
        }
        faces.enforce_walls(boundary);
        Ok(VelocityField {
            cell_x: vx,
            cell_y: vy,
            faces,
        })
    }

    /// Wrap prescribed face velocities. Each cell component is the larger of
    /// the biggest adjacent face speed and the rate leaving through the two
    /// faces on that axis, so the CFL bound on cells keeps the upwind step
    /// monotone for any face field.
    pub fn from_faces(boundary: &BoundarySpec, mut faces: FluxField) -> Result<Self> {
        let g = *boundary.grid();
        faces.check_grid(&g)?;
        faces.enforce_walls(boundary);
        let (fx, fy) = (faces.x(), faces.y());
        let cell_x = ScalarField::from_array(
            g,
            ndarray::Array2::from_shape_fn((g.m(), g.n()), |(i, j)| {
                let (l, r) = (fx[(i, j)], fx[(i + 1, j)]);
                l.abs().max(r.abs()).max((-l).max(0.0) + r.max(0.0))
            }),
        )?;
        let cell_y = ScalarField::from_array(
            g,
            ndarray::Array2::from_shape_fn((g.m(), g.n()), |(i, j)| {
                let (d, u) = (fy[(i, j)], fy[(i, j + 1)]);
                d.abs().max(u.abs()).max((-d).max(0.0) + u.max(0.0))
            }),
        )?;
        Ok(VelocityField { cell_x, cell_y, faces })
    }

    /// Largest cell speed `max |V_{i,j}|`.
    pub fn max_speed(&self) -> f64 {
        self.cell_x
            .as_slice()
            .iter()
            .zip(self.cell_y.as_slice())
            .fold(0.0, |a, (x, y)| a.max(x.hypot(*y)))
    }
}

/// `V = -g / |g|` per cell, with `g` the cell gradient of `phi` obtained by
/// averaging the two adjacent face gradients along each axis. Cells with
/// `|g| < GRADIENT_FLOOR`, obstacles and unreachable cells get zero velocity.
pub fn velocity_from_potential(sol: &EikonalSolution, boundary: &BoundarySpec) -> Result<VelocityField> {
    let g = *boundary.grid();
    sol.phi.check_grid(&g)?;
    let mut phi = sol.phi.clone();
    // unreachable cells never share an open face with reachable ones, but
    // zeroing keeps the cap value out of the difference quotients entirely
    for (v, u) in phi.as_mut_slice().iter_mut().zip(&sol.unreachable) {
        if *u {
            *v = 0.0;
        }
    }
    let grad = crate::ops::gradient(boundary, &phi)?;
    let (gx, gy) = (grad.x(), grad.y());
    let mut vx = ScalarField::zeros(g);
    let mut vy = ScalarField::zeros(g);
    for i in 0..g.m() {
        for j in 0..g.n() {
            let c = g.cell(i, j);
            if boundary.obstacle_mask()[c] || sol.unreachable[c] {
                continue;
            }
            let cx = 0.5 * (gx[(i, j)] + gx[(i + 1, j)]);
            let cy = 0.5 * (gy[(i, j)] + gy[(i, j + 1)]);
            let norm = cx.hypot(cy);
            if norm >= GRADIENT_FLOOR {
                vx.set(i, j, -cx / norm);
                vy.set(i, j, -cy / norm);
            }
        }
    }
    VelocityField::from_cell_vectors(boundary, vx, vy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Edge, GridSpec};

    fn right_door_square(h: f64) -> BoundarySpec {
        let g = GridSpec::unit_square(h).unwrap();
        let mut b = BoundarySpec::walled(g);
        b.add_door_segment(Edge::Right, 0.0, 1.0).unwrap();
        b
    }

    #[test]
    fn linear_ramp_gives_unit_x_velocity() {
        let b = right_door_square(0.1);
        let g = *b.grid();
        let sol = EikonalSolution {
            phi: ScalarField::from_fn(g, |x, _| 1.0 - x),
            residuals: vec![],
            objective: vec![],
            iterations: 0,
            converged: true,
            unreachable: vec![false; g.num_cells()],
        };
        let v = velocity_from_potential(&sol, &b).unwrap();
        // interior x-faces are exactly 1; the wall column at x = 0 is 0
        for i in 1..g.m() {
            for j in 0..g.n() {
                assert!((v.faces.x()[(i, j)] - 1.0).abs() < 1e-12, "face ({i},{j})");
            }
        }
        assert!(v.faces.y().iter().all(|x| x.abs() < 1e-12));
        assert!(v.faces.x().row(0).iter().all(|x| *x == 0.0));
    }

    #[test]
    fn constant_potential_gives_zero_velocity() {
        let g = GridSpec::new(4, 4, 0.25).unwrap();
        let mut b = BoundarySpec::walled(g);
        b.add_door_segment(Edge::Right, 0.0, 1.0).unwrap();
        // zero everywhere: door faces see a zero exterior too
        let sol = EikonalSolution {
            phi: ScalarField::zeros(g),
            residuals: vec![],
            objective: vec![],
            iterations: 0,
            converged: true,
            unreachable: vec![false; 16],
        };
        let v = velocity_from_potential(&sol, &b).unwrap();
        assert_eq!(v.max_speed(), 0.0);
        assert_eq!(v.faces.max_abs(), 0.0);
    }

    #[test]
    fn missing_door_is_a_configuration_error() {
        let g = GridSpec::new(4, 4, 0.25).unwrap();
        let b = BoundarySpec::walled(g);
        let p = PdParams {
            alpha: 0.01,
            beta: 0.01,
            theta: 1.0,
            max_iter: 10,
            tol: 1e-6,
            gap_tol: 1e-4,
            };
        let err = solve_eikonal(&b, &ScalarField::constant(g, 1.0), &p).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn nonpositive_speed_is_a_domain_error() {
        let b = right_door_square(0.25);
        let g = *b.grid();
        let mut f = ScalarField::constant(g, 1.0);
        f.set(1, 1, 0.0);
        let p = default_params(&b, &SolverSettings::EIKONAL).unwrap();
        assert!(matches!(solve_eikonal(&b, &f, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn ramp_on_coarse_grid() {
        let b = right_door_square(0.1);
        let g = *b.grid();
        let p = default_params(&b, &SolverSettings::EIKONAL).unwrap();
        let sol = solve_eikonal(&b, &ScalarField::constant(g, 1.0), &p).unwrap();
        let mut err: f64 = 0.0;
        for i in 0..g.m() {
            for j in 0..g.n() {
                let (x, _) = g.cell_center(i, j);
                err = err.max((sol.phi.get(i, j) - (1.0 - x)).abs());
            }
        }
        assert!(sol.converged, "iterations {}", sol.iterations);
        assert!(err <= 2.0 * g.h(), "err {err}");
    }
}
