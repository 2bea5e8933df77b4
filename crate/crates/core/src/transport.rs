//! Explicit upwind (donor-cell) step for `d_t rho + div(rho V) = 0`.

use crate::eikonal::VelocityField;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::BoundarySpec;

/// Largest admissible `max |V| tau / h` (exclusive).
pub const CFL_LIMIT: f64 = 0.5;

/// Output values below this are treated as a broken monotone scheme.
const NEGATIVITY_FLOOR: f64 = -1e-12;

#[derive(Debug, Clone)]
pub struct TransportStepReport {
    pub rho_out: ScalarField,
    /// `h^2 sum rho` before the step.
    pub mass_before: f64,
    /// `h^2 sum rho_out`.
    pub mass_after: f64,
    /// Mass that left through the doors during the step.
    pub door_outflux: f64,
    pub cfl_number: f64,
}

/// `max |V_{i,j}| tau / h`.
pub fn cfl_number(v: &VelocityField, tau: f64, h: f64) -> f64 {
    v.max_speed() * tau / h
}

/// [`cfl_number`], refusing values at or above [`CFL_LIMIT`].
pub fn cfl_check(v: &VelocityField, tau: f64, h: f64) -> Result<f64> {
    if !(tau > 0.0 && h > 0.0) {
        return Err(Error::config(format!("tau and h must be positive, got {tau} and {h}")));
    }
    let cfl = cfl_number(v, tau, h);
    if !(cfl < CFL_LIMIT) {
        return Err(Error::Cfl { cfl });
    }
    Ok(cfl)
}

/// One upwind step of length `tau`.
///
/// Each open face carries `F = v * rho_upwind`, the density of the cell the
/// face velocity comes from. Door faces see an empty exterior, so they only
/// let mass out. Walls and obstacle faces carry nothing.
pub fn upwind_step(
    rho: &ScalarField,
    v: &VelocityField,
    tau: f64,
    boundary: &BoundarySpec,
) -> Result<TransportStepReport> {
    let g = *boundary.grid();
    rho.check_grid(&g)?;
    v.faces.check_grid(&g)?;
    let cfl_number = cfl_check(v, tau, g.h())?;
    let (m, n, h) = (g.m(), g.n(), g.h());
    let r = rho.as_slice();
    let (vx, vy) = (v.faces.x_slice(), v.faces.y_slice());
    let (xo, yo) = (boundary.x_open(), boundary.y_open());

    // net outgoing flux per cell
    let mut net = vec![0.0; g.num_cells()];
    let mut door_flux = 0.0;
    for i in 0..=m {
        for j in 0..n {
            let f = g.x_face(i, j);
            let u = vx[f] * xo[f];
            if u == 0.0 {
                continue;
            }
            let left = (i > 0).then(|| g.cell(i - 1, j));
            let right = (i < m).then(|| g.cell(i, j));
            let donor = if u > 0.0 { left } else { right };
            let flux = u * donor.map_or(0.0, |c| r[c]);
            if let Some(c) = left {
                net[c] += flux;
            }
            if let Some(c) = right {
                net[c] -= flux;
            }
            if left.is_none() {
                door_flux -= flux;
            } else if right.is_none() {
                door_flux += flux;
            }
        }
    }
    for i in 0..m {
        for j in 0..=n {
            let f = g.y_face(i, j);
            let u = vy[f] * yo[f];
            if u == 0.0 {
                continue;
            }
            let below = (j > 0).then(|| g.cell(i, j - 1));
            let above = (j < n).then(|| g.cell(i, j));
            let donor = if u > 0.0 { below } else { above };
            let flux = u * donor.map_or(0.0, |c| r[c]);
            if let Some(c) = below {
                net[c] += flux;
            }
            if let Some(c) = above {
                net[c] -= flux;
            }
            if below.is_none() {
                door_flux -= flux;
            } else if above.is_none() {
                door_flux += flux;
            }
        }
    }

    let lambda = tau / h;
    let out: Vec<f64> = r.iter().zip(&net).map(|(p, q)| p - lambda * q).collect();
    // Each output is a nonnegative combination of inputs with weights
    // summing to less than 3 under the CFL bound, so slightly negative
    // inputs (a correction within tolerance) may only carry over.
    let floor = NEGATIVITY_FLOOR + 3.0 * rho.min().min(0.0);
    let min = out.iter().copied().fold(f64::INFINITY, f64::min);
    if min < floor {
        return Err(Error::Monotonicity { min });
    }
    let rho_out = ScalarField::from_vec(g, out)?;
    Ok(TransportStepReport {
        mass_before: rho.integral(),
        mass_after: rho_out.integral(),
        door_outflux: tau * h * door_flux,
        rho_out,
        cfl_number,
    })
}
