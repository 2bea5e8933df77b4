//! Discrete divergence and gradient on the staggered grid.
//!
//! `div_h` and `grad_h` form an adjoint pair for the `h^2`-weighted inner
//! products on cells and faces: `<grad_h p, phi> = -<p, div_h phi>` for every
//! flux `phi` that vanishes on wall faces. Door faces see a zero exterior
//! value, which is how the Dirichlet condition on exits enters the gradient.

use crate::error::Result;
use crate::field::{FluxField, ScalarField};
use crate::grid::{BoundarySpec, GridSpec};

/// `(div_h phi)_{i,j} = (phi^x_{i+1,j} - phi^x_{i,j} + phi^y_{i,j+1} - phi^y_{i,j}) / h`,
/// with wall faces read as zero.
pub fn divergence(boundary: &BoundarySpec, phi: &FluxField) -> Result<ScalarField> {
    let grid = *boundary.grid();
    phi.check_grid(&grid)?;
    let mut out = ScalarField::zeros(grid);
    divergence_into(boundary, phi.x_slice(), phi.y_slice(), out.as_mut_slice());
    Ok(out)
}

/// Negative adjoint of [`divergence`]: difference quotients across open
/// faces, one-sided against a zero exterior value on doors, zero on walls.
pub fn gradient(boundary: &BoundarySpec, p: &ScalarField) -> Result<FluxField> {
    let grid = *boundary.grid();
    p.check_grid(&grid)?;
    let mut out = FluxField::zeros(grid);
    let (gx, gy) = out.slices_mut();
    gradient_into(boundary, p.as_slice(), gx, gy);
    Ok(out)
}

/// `<u, v> = h^2 sum u v` over cells.
pub fn inner_product(u: &ScalarField, v: &ScalarField) -> Result<f64> {
    u.check_grid(v.grid())?;
    Ok(u.grid().area() * dot(u.as_slice(), v.as_slice()))
}

/// `<a, b> = h^2 sum a b` over both face families.
pub fn inner_product_flux(a: &FluxField, b: &FluxField) -> Result<f64> {
    a.check_grid(b.grid())?;
    let s = dot(a.x_slice(), b.x_slice()) + dot(a.y_slice(), b.y_slice());
    Ok(a.grid().area() * s)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn divergence_into(boundary: &BoundarySpec, x: &[f64], y: &[f64], out: &mut [f64]) {
    let g = boundary.grid();
    let (m, n) = (g.m(), g.n());
    let inv_h = 1.0 / g.h();
    let (xo, yo) = (boundary.x_open(), boundary.y_open());
    for i in 0..m {
        let xl = &x[i * n..(i + 1) * n];
        let xr = &x[(i + 1) * n..(i + 2) * n];
        let ol = &xo[i * n..(i + 1) * n];
        let or = &xo[(i + 1) * n..(i + 2) * n];
        let yc = &y[i * (n + 1)..(i + 1) * (n + 1)];
        let oy = &yo[i * (n + 1)..(i + 1) * (n + 1)];
        let row = &mut out[i * n..(i + 1) * n];
        for j in 0..n {
            row[j] = (xr[j] * or[j] - xl[j] * ol[j] + yc[j + 1] * oy[j + 1] - yc[j] * oy[j]) * inv_h;
        }
    }
}

pub(crate) fn gradient_into(boundary: &BoundarySpec, p: &[f64], gx: &mut [f64], gy: &mut [f64]) {
    let g = boundary.grid();
    let (m, n) = (g.m(), g.n());
    let inv_h = 1.0 / g.h();
    let (xo, yo) = (boundary.x_open(), boundary.y_open());
    for i in 0..=m {
        for j in 0..n {
            let left = if i > 0 { p[(i - 1) * n + j] } else { 0.0 };
            let right = if i < m { p[i * n + j] } else { 0.0 };
            let f = i * n + j;
            gx[f] = xo[f] * (right - left) * inv_h;
        }
    }
    for i in 0..m {
        let col = &p[i * n..(i + 1) * n];
        for j in 0..=n {
            let below = if j > 0 { col[j - 1] } else { 0.0 };
            let above = if j < n { col[j] } else { 0.0 };
            let f = i * (n + 1) + j;
            gy[f] = yo[f] * (above - below) * inv_h;
        }
    }
}

const NO_FACE: usize = usize::MAX;

#[derive(Debug, Clone, Copy)]
struct Pair {
    x: usize,
    y: usize,
    cell: usize,
}

/// Grouping of faces into per-location vectors for pointwise norms.
///
/// Pair `(i, j)`, for `i in 0..=m` and `j in 0..=n`, holds the x-face on the
/// left of cell `(i, j)` and the y-face below it; components that fall off
/// the grid are absent. Every face belongs to exactly one pair, so a
/// per-pair vector shrinkage or ball projection is an exact proximal map.
/// Cell-valued weights are read at the nearest cell (`(min(i, m-1), min(j, n-1))`).
/// Only pairs with at least one open face are kept.
#[derive(Debug, Clone)]
pub struct FacePairs {
    pairs: Vec<Pair>,
}

impl FacePairs {
    pub fn new(boundary: &BoundarySpec) -> Self {
        let g = boundary.grid();
        let (m, n) = (g.m(), g.n());
        let (xo, yo) = (boundary.x_open(), boundary.y_open());
        let mut pairs = Vec::new();
        for i in 0..=m {
            for j in 0..=n {
                let x = if j < n && xo[g.x_face(i, j)] != 0.0 { g.x_face(i, j) } else { NO_FACE };
                let y = if i < m && yo[g.y_face(i, j)] != 0.0 { g.y_face(i, j) } else { NO_FACE };
                if x == NO_FACE && y == NO_FACE {
                    continue;
                }
                let cell = g.cell(i.min(m - 1), j.min(n - 1));
                pairs.push(Pair { x, y, cell });
            }
        }
        FacePairs { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    #[inline]
    fn components(p: &Pair, x: &[f64], y: &[f64]) -> (f64, f64) {
        let a = if p.x != NO_FACE { x[p.x] } else { 0.0 };
        let b = if p.y != NO_FACE { y[p.y] } else { 0.0 };
        (a, b)
    }

    #[inline]
    fn scale(p: &Pair, x: &mut [f64], y: &mut [f64], s: f64) {
        if p.x != NO_FACE {
            x[p.x] *= s;
        }
        if p.y != NO_FACE {
            y[p.y] *= s;
        }
    }

    /// In-place vector shrinkage `v <- max(0, 1 - t/|v|) v` with threshold
    /// `t = scale * weight[cell]` on every pair.
    pub(crate) fn shrink(&self, x: &mut [f64], y: &mut [f64], weight: &[f64], scale: f64) {
        for p in &self.pairs {
            let (a, b) = Self::components(p, x, y);
            let norm = (a * a + b * b).sqrt();
            let t = scale * weight[p.cell];
            let s = if norm > t { 1.0 - t / norm } else { 0.0 };
            Self::scale(p, x, y, s);
        }
    }

    /// `sum_pairs weight * |v|` (without the `h^2` factor).
    pub(crate) fn weighted_norm_sum(&self, x: &[f64], y: &[f64], weight: &[f64]) -> f64 {
        self.pairs
            .iter()
            .map(|p| {
                let (a, b) = Self::components(p, x, y);
                weight[p.cell] * a.hypot(b)
            })
            .sum()
    }

    /// `max_pairs (|v| - bound)`, or `-inf` when there are no pairs.
    pub(crate) fn max_excess(&self, x: &[f64], y: &[f64], bound: &[f64]) -> f64 {
        self.pairs
            .iter()
            .map(|p| {
                let (a, b) = Self::components(p, x, y);
                a.hypot(b) - bound[p.cell]
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest `|v| / bound` over pairs with a positive bound.
    pub(crate) fn max_ratio(&self, x: &[f64], y: &[f64], bound: &[f64]) -> f64 {
        self.pairs
            .iter()
            .filter(|p| bound[p.cell] > 0.0)
            .map(|p| {
                let (a, b) = Self::components(p, x, y);
                a.hypot(b) / bound[p.cell]
            })
            .fold(0.0, f64::max)
    }

    /// Pointwise magnitudes of a face field, one entry per stored pair.
    pub fn magnitudes(&self, phi: &FluxField) -> Vec<f64> {
        let (x, y) = (phi.x_slice(), phi.y_slice());
        self.pairs
            .iter()
            .map(|p| {
                let (a, b) = Self::components(p, x, y);
                a.hypot(b)
            })
            .collect()
    }

    /// `max_pairs (|phi| - bound)` for a cell-valued bound.
    pub fn max_excess_over(&self, phi: &FluxField, bound: &ScalarField) -> f64 {
        self.max_excess(phi.x_slice(), phi.y_slice(), bound.as_slice())
    }
}

/// Power-iteration estimate of `||grad_h||` on the given boundary
/// configuration. The estimate is a Rayleigh quotient, so it never exceeds
/// the true norm, which itself is at most `sqrt(8) / h`.
pub fn operator_norm_estimate(boundary: &BoundarySpec) -> f64 {
    operator_norm_with(boundary, 2000, 1e-13)
}

pub(crate) fn operator_norm_with(boundary: &BoundarySpec, max_iter: usize, rtol: f64) -> f64 {
    let g: GridSpec = *boundary.grid();
    let (m, n) = (g.m(), g.n());
    // checkerboard start: the top eigenvector of the Neumann Laplacian
    let mut v: Vec<f64> = (0..m * n)
        .map(|k| if (k / n + k % n) % 2 == 0 { 1.0 } else { -1.0 })
        .collect();
    for (vk, o) in v.iter_mut().zip(boundary.obstacle_mask()) {
        if *o {
            *vk = 0.0;
        }
    }
    let mut gx = vec![0.0; g.num_x_faces()];
    let mut gy = vec![0.0; g.num_y_faces()];
    let mut w = vec![0.0; m * n];
    let mut lambda = 0.0_f64;
    for _ in 0..max_iter {
        let norm = dot(&v, &v).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        gradient_into(boundary, &v, &mut gx, &mut gy);
        let next = dot(&gx, &gx) + dot(&gy, &gy);
        divergence_into(boundary, &gx, &gy, &mut w);
        for (vk, wk) in v.iter_mut().zip(&w) {
            *vk = -wk;
        }
        let done = (next - lambda).abs() <= rtol * next;
        lambda = next;
        if done {
            break;
        }
    }
    lambda.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Edge, Face};

    fn strip_with_right_door(m: usize) -> BoundarySpec {
        let g = GridSpec::new(m, 1, 1.0).unwrap();
        let mut b = BoundarySpec::walled(g);
        b.add_door(Face::X { i: m, j: 0 }).unwrap();
        b
    }

    #[test]
    fn zero_flux_has_zero_divergence() {
        let b = strip_with_right_door(4);
        let d = divergence(&b, &FluxField::zeros(*b.grid())).unwrap();
        assert!(d.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_cell_door_flux() {
        let b = strip_with_right_door(1);
        let mut phi = FluxField::zeros(*b.grid());
        phi.x_mut()[(1, 0)] = 2.0;
        let d = divergence(&b, &phi).unwrap();
        assert_eq!(d.get(0, 0), 2.0);
    }

    #[test]
    fn constant_pressure_gradient_lives_on_doors_only() {
        let g = GridSpec::new(4, 3, 0.5).unwrap();
        let mut b = BoundarySpec::walled(g);
        b.add_door_segment(Edge::Right, 0.0, 1.5).unwrap();
        let c = 2.0;
        let gr = gradient(&b, &ScalarField::constant(g, c)).unwrap();
        for i in 0..=4 {
            for j in 0..3 {
                let want = if i == 4 { -c / 0.5 } else { 0.0 };
                assert_eq!(gr.x()[(i, j)], want);
            }
        }
        assert!(gr.y().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn wall_zeroing_is_idempotent() {
        let g = GridSpec::new(3, 3, 1.0).unwrap();
        let mut b = BoundarySpec::walled(g);
        b.set_obstacle(1, 1);
        let mut phi = FluxField::zeros(g);
        phi.x_mut().fill(1.0);
        phi.y_mut().fill(-1.0);
        phi.enforce_walls(&b);
        let once = phi.clone();
        phi.enforce_walls(&b);
        assert_eq!(once, phi);
        assert_eq!(phi.x()[(0, 0)], 0.0);
        assert_eq!(phi.x()[(1, 1)], 0.0);
        assert_eq!(phi.x()[(1, 0)], 1.0);
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let b = strip_with_right_door(3);
        let other = GridSpec::new(4, 1, 1.0).unwrap();
        assert!(divergence(&b, &FluxField::zeros(other)).is_err());
        assert!(gradient(&b, &ScalarField::zeros(other)).is_err());
    }

    #[test]
    fn unit_inner_product() {
        let g = GridSpec::unit_square(0.1).unwrap();
        let one = ScalarField::constant(g, 1.0);
        assert!((inner_product(&one, &one).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(inner_product(&ScalarField::zeros(g), &one).unwrap(), 0.0);
    }

    #[test]
    fn pairs_cover_each_open_face_once() {
        let g = GridSpec::new(4, 3, 1.0).unwrap();
        let mut b = BoundarySpec::walled(g);
        b.add_door_segment(Edge::Right, 0.0, 3.0).unwrap();
        b.add_door_segment(Edge::Bottom, 1.0, 2.0).unwrap();
        let pairs = FacePairs::new(&b);
        let mut xs = vec![0; g.num_x_faces()];
        let mut ys = vec![0; g.num_y_faces()];
        for p in &pairs.pairs {
            if p.x != NO_FACE {
                xs[p.x] += 1;
            }
            if p.y != NO_FACE {
                ys[p.y] += 1;
            }
        }
        for (k, c) in xs.iter().enumerate() {
            assert_eq!(*c as f64, b.x_open()[k]);
        }
        for (k, c) in ys.iter().enumerate() {
            assert_eq!(*c as f64, b.y_open()[k]);
        }
    }

    #[test]
    fn shrink_kills_small_vectors_and_shortens_large_ones() {
        let g = GridSpec::new(2, 2, 1.0).unwrap();
        let mut b = BoundarySpec::walled(g);
        b.add_door(Face::X { i: 2, j: 0 }).unwrap();
        let pairs = FacePairs::new(&b);
        let mut phi = FluxField::zeros(g);
        // pair (1,1): x-face (1,1) and y-face (1,1)
        phi.x_mut()[(1, 1)] = 3.0;
        phi.y_mut()[(1, 1)] = 4.0;
        // pair (1,0): x-face (1,0) only (y-face (1,0) is a wall)
        phi.x_mut()[(1, 0)] = 0.5;
        let w = vec![1.0; 4];
        let (x, y) = phi.slices_mut();
        pairs.shrink(x, y, &w, 1.0);
        assert!((phi.x()[(1, 1)] - 3.0 * 0.8).abs() < 1e-15);
        assert!((phi.y()[(1, 1)] - 4.0 * 0.8).abs() < 1e-15);
        assert_eq!(phi.x()[(1, 0)], 0.0);
    }

    #[test]
    fn norm_estimate_scales_with_inverse_h() {
        let mk = |h: f64| {
            let g = GridSpec::new(6, 5, h).unwrap();
            let mut b = BoundarySpec::walled(g);
            b.add_door(Face::X { i: 6, j: 2 }).unwrap();
            operator_norm_estimate(&b)
        };
        let (a, b) = (mk(0.2), mk(0.1));
        assert!((b / a - 2.0).abs() < 1e-6 * 2.0);
        assert!(a <= 8f64.sqrt() / 0.2 * (1.0 + 1e-6));
    }
}
