//! Prediction-correction time loop.
//!
//! Every step transports the density along the current velocity, adds the
//! boundary inflow and corrects the result back into `[0, 1]`. The velocity
//! comes from one eikonal solve, repeated every `couple_every` steps with
//! the speed `f = f_base (1 + c_p q)` when pressure coupling is enabled.

use crate::beckmann::{self, pd_solve_from, source_field, CorrectionProblem, PdResult};
use crate::eikonal::{self, solve_eikonal_from, velocity_from_potential, EikonalSolution, VelocityField};
use crate::error::{Error, Result};
use crate::field::{FluxField, ScalarField};
use crate::pd::PdParams;
use crate::scenario::{Rect, Scenario};
use crate::transport::upwind_step;

/// Scalar diagnostics after a step (or of the initial state, step 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub step: usize,
    pub time: f64,
    /// `h^2 sum rho`.
    pub total_mass: f64,
    /// Mass that left through the doors so far, both stages.
    pub door_outflux_cum: f64,
    /// Mass injected by the sources so far.
    pub source_cum: f64,
    pub max_density: f64,
    pub pd_iterations: usize,
    pub gap: f64,
    pub pd_converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub rho: ScalarField,
    pub pressure: ScalarField,
    pub metrics: StepMetrics,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Step 0, every `snapshot_every`-th step and the final step.
    pub snapshots: Vec<Snapshot>,
    /// One row per step, starting with step 0.
    pub history: Vec<StepMetrics>,
    /// Number of corrections that hit their iteration budget.
    pub unconverged_corrections: usize,
    pub eikonal_iterations: Vec<usize>,
}

/// A scenario being stepped.
pub struct Simulation<'a> {
    scenario: &'a Scenario,
    rho: ScalarField,
    pressure: ScalarField,
    velocity: VelocityField,
    potential: Option<EikonalSolution>,
    eikonal_params: Option<PdParams>,
    correction_params: PdParams,
    eta: FluxField,
    previous: Option<PdResult>,
    metrics: StepMetrics,
    unconverged: usize,
    eikonal_iterations: Vec<usize>,
}

impl<'a> Simulation<'a> {
    /// Validate the scenario and compute the initial velocity.
    pub fn new(scenario: &'a Scenario) -> Result<Self> {
        scenario.validate()?;
        let b = &scenario.boundary;
        let eikonal_params = eikonal::default_params(b, &scenario.eikonal)?;
        let mut sim = Self::bare(scenario, VelocityField::zeros(b))?;
        sim.eikonal_params = Some(eikonal_params);
        sim.refresh_velocity(0)?;
        Ok(sim)
    }

    /// Step with a prescribed velocity instead of the eikonal one. Doors are
    /// not required, which makes closed rooms and frozen crowds testable.
    pub fn with_velocity(scenario: &'a Scenario, velocity: VelocityField) -> Result<Self> {
        velocity.faces.check_grid(scenario.grid())?;
        Self::bare(scenario, velocity)
    }

    fn bare(scenario: &'a Scenario, velocity: VelocityField) -> Result<Self> {
        let b = &scenario.boundary;
        let g = *b.grid();
        let correction_params = beckmann::default_params(b, scenario.tau, &scenario.correction)?;
        let total_mass = scenario.rho0.integral();
        Ok(Simulation {
            scenario,
            rho: scenario.rho0.clone(),
            pressure: ScalarField::zeros(g),
            velocity,
            potential: None,
            eikonal_params: None,
            correction_params,
            eta: source_field(b, scenario.source_rate),
            previous: None,
            metrics: StepMetrics {
                step: 0,
                time: 0.0,
                total_mass,
                door_outflux_cum: 0.0,
                source_cum: 0.0,
                max_density: scenario.rho0.max(),
                pd_iterations: 0,
                gap: 0.0,
                pd_converged: true,
            },
            unconverged: 0,
            eikonal_iterations: Vec::new(),
        })
    }

    fn refresh_velocity(&mut self, step: usize) -> Result<()> {
        let Some(params) = self.eikonal_params else {
            return Ok(());
        };
        let s = self.scenario;
        let mut f = s.speed.clone();
        if s.coupling != 0.0 {
            for (v, q) in f.as_mut_slice().iter_mut().zip(self.pressure.as_slice()) {
                *v *= 1.0 + s.coupling * q.max(0.0);
            }
        }
        let warm = self.potential.as_ref().map(|p| &p.phi);
        let sol = solve_eikonal_from(&s.boundary, &f, &params, warm).map_err(|e| e.at_step(step))?;
        self.velocity = velocity_from_potential(&sol, &s.boundary)?;
        self.eikonal_iterations.push(sol.iterations);
        self.potential = Some(sol);
        Ok(())
    }

    pub fn rho(&self) -> &ScalarField {
        &self.rho
    }

    pub fn pressure(&self) -> &ScalarField {
        &self.pressure
    }

    pub fn velocity(&self) -> &VelocityField {
        &self.velocity
    }

    pub fn potential(&self) -> Option<&EikonalSolution> {
        self.potential.as_ref()
    }

    pub fn metrics(&self) -> &StepMetrics {
        &self.metrics
    }

    pub fn is_finished(&self) -> bool {
        self.metrics.step >= self.scenario.num_steps()
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            step: self.metrics.step,
            time: self.metrics.time,
            rho: self.rho.clone(),
            pressure: self.pressure.clone(),
            metrics: self.metrics,
        }
    }

    /// Advance by one time step.
    pub fn step(&mut self) -> Result<&StepMetrics> {
        let s = self.scenario;
        let k = self.metrics.step;
        if s.couple_every > 0 && k > 0 && k.is_multiple_of(s.couple_every) {
            self.refresh_velocity(k + 1)?;
        }
        let stage = |e: Error| e.at_step(k + 1);
        let pred = upwind_step(&self.rho, &self.velocity, s.tau, &s.boundary).map_err(stage)?;
        let mut problem = CorrectionProblem::new(&s.boundary, pred.rho_out, s.weight.clone(), s.tau, s.mode);
        problem.eta = self.eta.clone();
        let injected = problem.source_mass();
        let result = pd_solve_from(&problem, &self.correction_params, self.previous.as_ref()).map_err(stage)?;
        if !result.converged {
            self.unconverged += 1;
        }
        self.rho = result.rho.clone();
        self.pressure = result.pressure.clone();
        self.metrics = StepMetrics {
            step: k + 1,
            time: (k + 1) as f64 * s.tau,
            total_mass: self.rho.integral(),
            door_outflux_cum: self.metrics.door_outflux_cum + pred.door_outflux + result.door_outflux,
            source_cum: self.metrics.source_cum + injected,
            max_density: self.rho.max(),
            pd_iterations: result.iterations,
            gap: result.gap,
            pd_converged: result.converged,
        };
        self.previous = Some(result);
        Ok(&self.metrics)
    }
}

/// Run a scenario to its final time.
pub fn run(scenario: &Scenario) -> Result<RunOutput> {
    let mut sim = Simulation::new(scenario)?;
    drive(&mut sim)
}

/// Run an already constructed simulation to its final time.
pub fn drive(sim: &mut Simulation) -> Result<RunOutput> {
    let every = sim.scenario.snapshot_every.max(1);
    let mut snapshots = vec![sim.snapshot()];
    let mut history = vec![*sim.metrics()];
    while !sim.is_finished() {
        let m = *sim.step()?;
        history.push(m);
        if m.step % every == 0 || sim.is_finished() {
            snapshots.push(sim.snapshot());
        }
    }
    Ok(RunOutput {
        snapshots,
        history,
        unconverged_corrections: sim.unconverged,
        eikonal_iterations: sim.eikonal_iterations.clone(),
    })
}

/// One row of a lockstep comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub step: usize,
    pub time: f64,
    pub mass_a: f64,
    pub mass_b: f64,
    /// Mean density over the cells next to a door.
    pub door_density_a: f64,
    pub door_density_b: f64,
    pub linf_diff: f64,
    /// `sqrt(h^2 sum (rho_a - rho_b)^2)`.
    pub l2_diff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    pub fn last(&self) -> &ComparisonRow {
        self.rows.last().expect("comparison has at least the initial row")
    }

    /// Row at the first step whose time reaches `t`.
    pub fn at_time(&self, t: f64) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.time >= t - 1e-9)
    }
}

/// Step two scenarios on the same grid side by side.
pub fn compare_runs(a: &Scenario, b: &Scenario) -> Result<ComparisonReport> {
    if a.grid() != b.grid() {
        return Err(Error::config("compared scenarios must share the grid"));
    }
    if a.tau != b.tau || a.num_steps() != b.num_steps() {
        return Err(Error::config("compared scenarios must share tau and T"));
    }
    let mut sa = Simulation::new(a)?;
    let mut sb = Simulation::new(b)?;
    lockstep(&mut sa, &mut sb)
}

fn lockstep(sa: &mut Simulation, sb: &mut Simulation) -> Result<ComparisonReport> {
    let mut rows = vec![compare_states(sa, sb)];
    while !sa.is_finished() {
        sa.step()?;
        sb.step()?;
        rows.push(compare_states(sa, sb));
    }
    Ok(ComparisonReport { rows })
}

fn compare_states(a: &Simulation, b: &Simulation) -> ComparisonRow {
    let g = a.scenario.grid();
    let (ra, rb) = (a.rho.as_slice(), b.rho.as_slice());
    let (mut linf, mut sq) = (0.0f64, 0.0);
    for (x, y) in ra.iter().zip(rb) {
        let d = x - y;
        linf = linf.max(d.abs());
        sq += d * d;
    }
    ComparisonRow {
        step: a.metrics.step,
        time: a.metrics.time,
        mass_a: a.metrics.total_mass,
        mass_b: b.metrics.total_mass,
        door_density_a: door_average(a),
        door_density_b: door_average(b),
        linf_diff: linf,
        l2_diff: (g.area() * sq).sqrt(),
    }
}

fn door_average(sim: &Simulation) -> f64 {
    let mask = sim.scenario.boundary.door_cell_mask();
    let (sum, count) = sim
        .rho
        .as_slice()
        .iter()
        .zip(mask)
        .filter(|(_, d)| **d)
        .fold((0.0, 0usize), |(s, c), (v, _)| (s + v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Compare the scenario without (run `a`) and with (run `b`) the obstacles.
/// Initial mass inside the obstacles is removed in both runs so that they
/// start from the same state.
pub fn obstacle_study(scenario: &Scenario, obstacles: &[Rect]) -> Result<ComparisonReport> {
    let mut with = scenario.clone();
    for r in obstacles {
        with.boundary.add_obstacle_rect(r.x0, r.x1, r.y0, r.y1)?;
    }
    with.boundary
        .validate()
        .map_err(|_| Error::config("obstacle touches a door"))?;
    with.rho0.mask_obstacles(&with.boundary);
    let mut without = scenario.clone();
    without.rho0 = with.rho0.clone();
    compare_runs(&without, &with)
}
