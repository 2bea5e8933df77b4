//! Correction step: project an overcrowded density back onto `0 <= rho <= 1`
//! by a weighted minimum-flow problem
//!
//! ```text
//! min  h^2 sum_pairs tau F(Phi)   s.t.  rho - tau div_h Phi = rho_target,  0 <= rho <= 1
//! ```
//!
//! with `F(xi) = k |xi|` (homogeneous) or `F(xi) = |xi|^2 / 2` (quadratic),
//! solved by primal-dual iterations on `((rho, Phi), p)` with the linear map
//! `L(rho, Phi) = rho - tau div_h Phi` and adjoint `L*(p) = (p, tau grad_h p)`.
//!
//! `Phi` is the negative mass flux: the mass crossing a face in the direction
//! of its axis during the step is `-tau h Phi`. The reported pressure is
//! `-p`, which is nonnegative and supported where the corrected density is
//! saturated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FluxField, ScalarField};
use crate::grid::{BoundarySpec, Face};
use crate::ops::{divergence_into, dot, gradient_into, operator_norm_estimate, FacePairs};
use crate::pd::{PdParams, SolverSettings};

/// Certificates are evaluated every this many iterations.
const CHECK_EVERY: usize = 10;

/// Floor for the relative duality-gap test.
const GAP_FLOOR: f64 = 1e-12;

/// Cost of moving mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostMode {
    /// `F(xi) = k |xi|`.
    #[default]
    Homogeneous,
    /// `F(xi) = |xi|^2 / 2`; the weight field is ignored.
    Quadratic,
}

/// One correction problem.
#[derive(Debug, Clone)]
pub struct CorrectionProblem<'a> {
    pub boundary: &'a BoundarySpec,
    /// Predicted density, `>= 0` and possibly above `1`.
    pub rho_tilde: ScalarField,
    /// Congestion weight `k >= 0` (homogeneous mode only).
    pub weight: ScalarField,
    pub tau: f64,
    /// Inflow rate on source faces (mass per unit length and time), zero elsewhere.
    pub eta: FluxField,
    pub mode: CostMode,
}

impl<'a> CorrectionProblem<'a> {
    /// A source-free problem.
    pub fn new(
        boundary: &'a BoundarySpec,
        rho_tilde: ScalarField,
        weight: ScalarField,
        tau: f64,
        mode: CostMode,
    ) -> Self {
        let eta = FluxField::zeros(*boundary.grid());
        CorrectionProblem {
            boundary,
            rho_tilde,
            weight,
            tau,
            eta,
            mode,
        }
    }

    /// Set a constant inflow `rate` on every source face of the boundary.
    pub fn with_source_rate(mut self, rate: f64) -> Self {
        self.eta = source_field(self.boundary, rate);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let g = *self.boundary.grid();
        self.rho_tilde.check_grid(&g)?;
        self.weight.check_grid(&g)?;
        self.eta.check_grid(&g)?;
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config(format!("tau must be positive, got {}", self.tau)));
        }
        if let Some(v) = self.rho_tilde.as_slice().iter().find(|v| !(**v >= -BOX_TOL && v.is_finite())) {
            return Err(Error::domain(format!("predicted density must be finite and >= 0, got {v}")));
        }
        let obstacles = self.boundary.obstacle_mask();
        for (c, k) in self.weight.as_slice().iter().enumerate() {
            let bad = match self.mode {
                CostMode::Homogeneous if !obstacles[c] => !(*k > 0.0 && k.is_finite()),
                _ => !(*k >= 0.0 && k.is_finite()),
            };
            if bad {
                return Err(Error::domain(format!(
                    "congestion weight must be positive on fluid cells, got {k} at cell {c}"
                )));
            }
        }
        Ok(())
    }

    /// `rho_tilde + tau * eta / h` deposited in the cells next to source faces.
    pub fn rho_target(&self) -> ScalarField {
        let g = *self.boundary.grid();
        let mut t = self.rho_tilde.clone();
        let scale = self.tau / g.h();
        for face in self.boundary.source_faces() {
            let rate = match *face {
                Face::X { i, j } => self.eta.x()[(i, j)],
                Face::Y { i, j } => self.eta.y()[(i, j)],
            };
            if let Some((i, j)) = face.interior_cell(&g) {
                t.set(i, j, t.get(i, j) + scale * rate);
            }
        }
        t
    }

    /// Mass injected by the sources during one step, `tau h sum eta`.
    pub fn source_mass(&self) -> f64 {
        let h = self.boundary.grid().h();
        let total: f64 = self
            .boundary
            .source_faces()
            .iter()
            .map(|f| match *f {
                Face::X { i, j } => self.eta.x()[(i, j)],
                Face::Y { i, j } => self.eta.y()[(i, j)],
            })
            .sum();
        self.tau * h * total
    }
}

/// Flux field holding `rate` on every source face of `boundary`.
pub fn source_field(boundary: &BoundarySpec, rate: f64) -> FluxField {
    let mut eta = FluxField::zeros(*boundary.grid());
    for face in boundary.source_faces() {
        match *face {
            Face::X { i, j } => eta.x_mut()[(i, j)] = rate,
            Face::Y { i, j } => eta.y_mut()[(i, j)] = rate,
        }
    }
    eta
}

/// `sqrt(1 + tau^2 ||grad_h||^2)`, the norm of `L` (up to the power-iteration
/// estimate of `||grad_h||`).
pub fn operator_norm(boundary: &BoundarySpec, tau: f64) -> f64 {
    let g = operator_norm_estimate(boundary);
    (1.0 + tau * tau * g * g).sqrt()
}

impl CostMode {
    /// Solver defaults tuned for this cost.
    pub fn default_settings(self) -> SolverSettings {
        match self {
            CostMode::Homogeneous => SolverSettings::CORRECTION,
            CostMode::Quadratic => SolverSettings::CORRECTION_QUADRATIC,
        }
    }
}

/// Default correction steps for `boundary` and time step `tau`.
pub fn default_params(boundary: &BoundarySpec, tau: f64, settings: &SolverSettings) -> Result<PdParams> {
    PdParams::from_norm(operator_norm(boundary, tau), settings.step_ratio, settings)
}

/// Residuals certifying optimality.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Certificates {
    /// `max(q+ (1 - rho), q- rho)` over fluid cells, `q` the pressure: the
    /// distance from `rho in Sign+(q)`.
    pub sign_comp: f64,
    /// `max(0, max_pairs |grad_h q| - k)`; zero in quadratic mode.
    pub dual_feas: f64,
    /// `max |rho - tau div_h Phi - rho_target|`.
    pub constraint_res: f64,
}

/// Slack on the unit box accepted for densities that come out of an
/// earlier correction.
pub const BOX_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct PdResult {
    /// `rho_target + tau div_h Phi`; inside `[0, 1]` up to `constraint_res`.
    pub rho: ScalarField,
    pub flux: FluxField,
    /// `q = -p >= 0`, supported on the saturated region.
    pub pressure: ScalarField,
    /// Primal objective minus the dual objective at a feasible rescaling of `q`.
    pub gap: f64,
    pub primal_value: f64,
    pub dual_value: f64,
    pub certificates: Certificates,
    pub iterations: usize,
    pub converged: bool,
    /// Mass that left through the doors, `-tau h sum_doors Phi . n_out`.
    pub door_outflux: f64,
}

/// Values of the primal and dual objectives and the certificates at a state.
#[derive(Debug, Clone, Copy)]
pub struct GapReport {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub certificates: Certificates,
}

/// Evaluate the duality gap at `(rho, phi)` with pressure `q`.
///
/// In homogeneous mode `q` is scaled by `min(1, 1 / max(|grad_h q| / k))`
/// before evaluating the dual objective so that it is dual feasible.
pub fn duality_gap(
    problem: &CorrectionProblem,
    rho: &ScalarField,
    phi: &FluxField,
    pressure: &ScalarField,
) -> Result<GapReport> {
    let g = *problem.boundary.grid();
    rho.check_grid(&g)?;
    phi.check_grid(&g)?;
    pressure.check_grid(&g)?;
    let ws = Workspace::new(problem);
    let q: Vec<f64> = pressure.as_slice().to_vec();
    let mut div = vec![0.0; g.num_cells()];
    divergence_into(problem.boundary, phi.x_slice(), phi.y_slice(), &mut div);
    Ok(ws.evaluate(problem, rho.as_slice(), phi.x_slice(), phi.y_slice(), &q, &div, QSign::Pressure))
}

/// Primal proximal map: clamp to `[0, 1]` (`0` on obstacles) and shrink the
/// flux with threshold `beta tau k` per face pair, or scale it by
/// `1 / (1 + beta tau)` in quadratic mode. Wall faces are zeroed.
pub fn prox_primal(
    rho: &ScalarField,
    phi: &FluxField,
    beta: f64,
    problem: &CorrectionProblem,
) -> Result<(ScalarField, FluxField)> {
    let g = *problem.boundary.grid();
    rho.check_grid(&g)?;
    phi.check_grid(&g)?;
    let ws = Workspace::new(problem);
    let mut r = rho.clone();
    ws.clamp(r.as_mut_slice());
    let mut f = phi.clone();
    f.enforce_walls(problem.boundary);
    let (x, y) = f.slices_mut();
    ws.shrink_flux(problem, x, y, beta);
    Ok((r, f))
}

/// Dual proximal map `p - alpha rho_target`.
pub fn prox_dual(p: &ScalarField, alpha: f64, rho_target: &ScalarField) -> Result<ScalarField> {
    p.check_grid(rho_target.grid())?;
    let mut out = p.clone();
    for (o, t) in out.as_mut_slice().iter_mut().zip(rho_target.as_slice()) {
        *o -= alpha * t;
    }
    Ok(out)
}

/// Solve from the cold start `rho = clamp(rho_target)`, `Phi = 0`, `p = 0`.
pub fn pd_solve(problem: &CorrectionProblem, params: &PdParams) -> Result<PdResult> {
    pd_solve_from(problem, params, None)
}

/// Solve, optionally warm-starting the flux and pressure from an earlier
/// result on the same grid.
pub fn pd_solve_from(problem: &CorrectionProblem, params: &PdParams, warm: Option<&PdResult>) -> Result<PdResult> {
    problem.validate()?;
    let b = problem.boundary;
    let g = *b.grid();
    params.check(operator_norm(b, problem.tau))?;
    let ws = Workspace::new(problem);
    let t = &ws.target;
    let tau = problem.tau;
    let (nc, nx, ny) = (g.num_cells(), g.num_x_faces(), g.num_y_faces());
    let theta = params.theta;
    let (alpha, beta) = (params.alpha, params.beta);

    let mut rho = t.to_vec();
    ws.clamp(&mut rho);
    let (mut fx, mut fy, mut p) = match warm {
        Some(w) => {
            w.flux.check_grid(&g)?;
            w.pressure.check_grid(&g)?;
            let mut flux = w.flux.clone();
            flux.enforce_walls(b);
            let p: Vec<f64> = w.pressure.as_slice().iter().map(|q| -q).collect();
            (flux.x_slice().to_vec(), flux.y_slice().to_vec(), p)
        }
        None => (vec![0.0; nx], vec![0.0; ny], vec![0.0; nc]),
    };
    let mut p_bar = p.clone();
    let (mut gx, mut gy) = (vec![0.0; nx], vec![0.0; ny]);
    let mut div = vec![0.0; nc];

    let mut best: Option<(f64, State)> = None;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iter {
        iterations += 1;
        // primal: (rho, Phi) <- prox_{beta G}((rho, Phi) - beta L*(p_bar))
        gradient_into(b, &p_bar, &mut gx, &mut gy);
        for c in 0..nc {
            rho[c] -= beta * p_bar[c];
        }
        ws.clamp(&mut rho);
        let s = beta * tau;
        fx.iter_mut().zip(&gx).for_each(|(f, d)| *f -= s * d);
        fy.iter_mut().zip(&gy).for_each(|(f, d)| *f -= s * d);
        ws.shrink_flux(problem, &mut fx, &mut fy, beta);
        // dual: p <- prox_{alpha F*}(p + alpha L(rho, Phi)), then extrapolate
        divergence_into(b, &fx, &fy, &mut div);
        let mut res: f64 = 0.0;
        for c in 0..nc {
            let r = rho[c] - tau * div[c] - t[c];
            res = res.max(r.abs());
            let old = p[c];
            let new = old + alpha * r;
            p[c] = new;
            p_bar[c] = new + theta * (new - old);
        }

        if iterations % CHECK_EVERY == 0 || iterations == params.max_iter {
            // the gap is only worth evaluating once the constraint holds
            let mut merit = res / params.tol;
            if merit <= 1.0 {
                let rep = ws.evaluate(problem, &rho, &fx, &fy, &p, &div, QSign::Multiplier);
                let scale = rep.primal.abs().max(rep.dual.abs()).max(GAP_FLOOR);
                merit = merit.max(rep.gap / (params.gap_tol * scale));
            }
            if merit <= 1.0 {
                converged = true;
                break;
            }
            if best.as_ref().is_none_or(|(m, _)| merit < *m) {
                let state = State {
                    rho: rho.clone(),
                    fx: fx.clone(),
                    fy: fy.clone(),
                    p: p.clone(),
                };
                best = Some((merit, state));
            }
        }
    }

    let state = match best {
        Some((_, s)) if !converged => s,
        _ => State { rho, fx, fy, p },
    };
    divergence_into(b, &state.fx, &state.fy, &mut div);
    let report = ws.evaluate(problem, &state.rho, &state.fx, &state.fy, &state.p, &div, QSign::Multiplier);
    let door_outflux = door_outflux(b, &state.fx, &state.fy, tau);
    // Return the density that the flux transports exactly. It differs from
    // the box-feasible iterate by the constraint residual, so mass is
    // accounted to rounding and the box holds up to `constraint_res`.
    let rho: Vec<f64> = t.iter().zip(&div).map(|(t, d)| t + tau * d).collect();
    let State { fx, fy, p, .. } = state;
    let flux = FluxField::from_arrays(
        g,
        ndarray::Array2::from_shape_vec((g.m() + 1, g.n()), fx).expect("x faces"),
        ndarray::Array2::from_shape_vec((g.m(), g.n() + 1), fy).expect("y faces"),
    )?;
    Ok(PdResult {
        rho: ScalarField::from_vec(g, rho)?,
        flux,
        pressure: ScalarField::from_vec(g, p.into_iter().map(|v| -v).collect())?,
        gap: report.gap,
        primal_value: report.primal,
        dual_value: report.dual,
        certificates: report.certificates,
        iterations,
        converged,
        door_outflux,
    })
}

fn door_outflux(b: &BoundarySpec, fx: &[f64], fy: &[f64], tau: f64) -> f64 {
    let g = b.grid();
    let total: f64 = b
        .door_faces()
        .iter()
        .map(|face| match *face {
            Face::X { i, j } => face.outward_sign(g) * fx[g.x_face(i, j)],
            Face::Y { i, j } => face.outward_sign(g) * fy[g.y_face(i, j)],
        })
        .sum();
    -tau * g.h() * total
}

struct State {
    rho: Vec<f64>,
    fx: Vec<f64>,
    fy: Vec<f64>,
    p: Vec<f64>,
}

#[derive(Clone, Copy)]
enum QSign {
    /// The slice holds the pressure `q`.
    Pressure,
    /// The slice holds the multiplier `p = -q`.
    Multiplier,
}

/// Per-problem data reused by every iteration.
struct Workspace {
    pairs: FacePairs,
    upper: Vec<f64>,
    target: Vec<f64>,
}

impl Workspace {
    fn new(problem: &CorrectionProblem) -> Self {
        let upper = problem
            .boundary
            .obstacle_mask()
            .iter()
            .map(|o| if *o { 0.0 } else { 1.0 })
            .collect();
        Workspace {
            pairs: FacePairs::new(problem.boundary),
            upper,
            target: problem.rho_target().as_slice().to_vec(),
        }
    }

    fn clamp(&self, rho: &mut [f64]) {
        for (r, u) in rho.iter_mut().zip(&self.upper) {
            *r = r.clamp(0.0, *u);
        }
    }

    fn shrink_flux(&self, problem: &CorrectionProblem, x: &mut [f64], y: &mut [f64], beta: f64) {
        match problem.mode {
            CostMode::Homogeneous => {
                self.pairs
                    .shrink(x, y, problem.weight.as_slice(), beta * problem.tau)
            }
            CostMode::Quadratic => {
                let s = 1.0 / (1.0 + beta * problem.tau);
                x.iter_mut().chain(y.iter_mut()).for_each(|v| *v *= s);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn evaluate(
        &self,
        problem: &CorrectionProblem,
        rho: &[f64],
        fx: &[f64],
        fy: &[f64],
        q_or_p: &[f64],
        div: &[f64],
        sign: QSign,
    ) -> GapReport {
        let b = problem.boundary;
        let g = b.grid();
        let area = g.area();
        let tau = problem.tau;
        let t = &self.target;
        let mut q: Vec<f64> = match sign {
            QSign::Pressure => q_or_p.to_vec(),
            QSign::Multiplier => q_or_p.iter().map(|v| -v).collect(),
        };
        let obstacles = b.obstacle_mask();

        let constraint_res = (0..rho.len())
            .map(|c| (rho[c] - tau * div[c] - t[c]).abs())
            .fold(0.0, f64::max);
        let sign_comp = (0..rho.len())
            .filter(|c| !obstacles[*c])
            .map(|c| (q[c].max(0.0) * (1.0 - rho[c])).max((-q[c]).max(0.0) * rho[c]))
            .fold(0.0, f64::max);

        let mut gx = vec![0.0; g.num_x_faces()];
        let mut gy = vec![0.0; g.num_y_faces()];
        gradient_into(b, &q, &mut gx, &mut gy);
        let (primal, dual, dual_feas) = match problem.mode {
            CostMode::Homogeneous => {
                let k = problem.weight.as_slice();
                let primal = area * tau * self.pairs.weighted_norm_sum(fx, fy, k);
                let dual_feas = self.pairs.max_excess(&gx, &gy, k).max(0.0);
                let ratio = self.pairs.max_ratio(&gx, &gy, k);
                if ratio > 1.0 {
                    q.iter_mut().for_each(|v| *v /= ratio);
                }
                (primal, area * self.linear_dual(&q, t), dual_feas)
            }
            CostMode::Quadratic => {
                let primal = 0.5 * area * tau * (dot(fx, fx) + dot(fy, fy));
                let smooth = 0.5 * area * tau * (dot(&gx, &gx) + dot(&gy, &gy));
                (primal, area * self.linear_dual(&q, t) - smooth, 0.0)
            }
        };
        GapReport {
            primal,
            dual,
            gap: primal - dual,
            certificates: Certificates {
                sign_comp,
                dual_feas,
                constraint_res,
            },
        }
    }

    /// `sum q rho_target - upper q+`.
    fn linear_dual(&self, q: &[f64], t: &[f64]) -> f64 {
        q.iter()
            .zip(t)
            .zip(&self.upper)
            .map(|((q, t), u)| q * t - u * q.max(0.0))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Edge, GridSpec};

    fn strip(m: usize) -> BoundarySpec {
        let g = GridSpec::new(m, 1, 1.0).unwrap();
        let mut b = BoundarySpec::walled(g);
        b.add_door(Face::X { i: m, j: 0 }).unwrap();
        b
    }

    #[test]
    fn prox_primal_clamps_and_shrinks() {
        let b = strip(3);
        let g = *b.grid();
        let rho = ScalarField::from_vec(g, vec![1.7, -0.3, 0.5]).unwrap();
        let mut phi = FluxField::zeros(g);
        phi.x_mut()[(1, 0)] = 0.5;
        phi.x_mut()[(2, 0)] = 3.0;
        let prob = CorrectionProblem::new(&b, rho.clone(), ScalarField::constant(g, 1.0), 1.0, CostMode::Homogeneous);
        let (r, f) = prox_primal(&rho, &phi, 1.0, &prob).unwrap();
        assert_eq!(r.as_slice(), &[1.0, 0.0, 0.5]);
        assert_eq!(f.x()[(1, 0)], 0.0);
        assert_eq!(f.x()[(2, 0)], 2.0);

        let prob = CorrectionProblem { mode: CostMode::Quadratic, ..prob };
        let (_, f) = prox_primal(&rho, &phi, 1.0, &prob).unwrap();
        assert_eq!(f.x()[(2, 0)], 1.5);
    }

    #[test]
    fn prox_dual_is_a_shift() {
        let g = GridSpec::new(2, 2, 1.0).unwrap();
        let t = ScalarField::from_vec(g, vec![1.0, 2.0, 0.0, 0.5]).unwrap();
        let p = ScalarField::from_vec(g, vec![0.7, 1.4, 0.0, 0.35]).unwrap();
        assert!(prox_dual(&p, 0.7, &t).unwrap().as_slice().iter().all(|v| v.abs() < 1e-15));
        let z = ScalarField::zeros(g);
        assert_eq!(prox_dual(&p, 0.7, &z).unwrap(), p);
    }

    #[test]
    fn source_deposit_lands_next_to_face() {
        let g = GridSpec::new(4, 4, 0.25).unwrap();
        let mut b = BoundarySpec::walled(g);
        b.add_door_segment(Edge::Right, 0.0, 1.0).unwrap();
        b.add_source_segment(Edge::Left, 0.5, 0.75).unwrap();
        let prob = CorrectionProblem::new(&b, ScalarField::zeros(g), ScalarField::constant(g, 1.0), 0.1, CostMode::Homogeneous)
            .with_source_rate(2.0);
        let t = prob.rho_target();
        assert!((t.get(0, 2) - 0.8).abs() < 1e-15);
        assert!((t.integral() - prob.source_mass()).abs() < 1e-15);
        assert!((prob.source_mass() - 0.1 * 0.25 * 2.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let b = strip(3);
        let g = *b.grid();
        let mut rho = ScalarField::zeros(g);
        rho.set(0, 0, -1.0);
        let prob = CorrectionProblem::new(&b, rho, ScalarField::constant(g, 1.0), 1.0, CostMode::Homogeneous);
        assert!(matches!(prob.validate(), Err(Error::Domain(_))));
        let prob = CorrectionProblem::new(&b, ScalarField::zeros(g), ScalarField::zeros(g), 1.0, CostMode::Homogeneous);
        assert!(matches!(prob.validate(), Err(Error::Domain(_))));
        let prob = CorrectionProblem { mode: CostMode::Quadratic, ..prob };
        assert!(prob.validate().is_ok());
    }

    #[test]
    fn single_overloaded_cell_pushes_mass_out() {
        let b = strip(5);
        let g = *b.grid();
        let rho = ScalarField::from_vec(g, vec![2.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let prob = CorrectionProblem::new(&b, rho, ScalarField::constant(g, 1.0), 1.0, CostMode::Homogeneous);
        let p = default_params(&b, 1.0, &SolverSettings::CORRECTION).unwrap();
        let r = pd_solve(&prob, &p).unwrap();
        assert!(r.converged, "{} iterations, {:?}", r.iterations, r.certificates);
        let want = [1.0, 1.0, 0.0, 0.0, 0.0];
        for (a, w) in r.rho.as_slice().iter().zip(want) {
            assert!((a - w).abs() < 1e-3, "{:?}", r.rho.as_slice());
        }
        assert!((r.primal_value - 1.0).abs() < 1e-4);
    }
}
