//! Cell-centred scalar fields and staggered face fields.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid::{BoundarySpec, GridSpec};

/// Cell averages on an `m x n` grid (density, pressure, speed, weight...).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Array2<f64>,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        ScalarField {
            grid,
            values: Array2::from_elem((grid.m(), grid.n()), c),
        }
    }

    pub fn from_array(grid: GridSpec, values: Array2<f64>) -> Result<Self> {
        let want = (grid.m(), grid.n());
        if values.dim() != want {
            return Err(Error::Dimension {
                expected: format!("{want:?}"),
                found: format!("{:?}", values.dim()),
            });
        }
        // force standard layout so the flat accessors are valid
        let values = values.as_standard_layout().into_owned();
        Ok(ScalarField { grid, values })
    }

    /// Field from a function of the cell-center coordinates.
    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let values = Array2::from_shape_fn((grid.m(), grid.n()), |(i, j)| {
            let (x, y) = grid.cell_center(i, j);
            f(x, y)
        });
        ScalarField { grid, values }
    }

    pub fn from_vec(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_cells() {
            return Err(Error::Dimension {
                expected: format!("{} cell values", grid.num_cells()),
                found: format!("{}", values.len()),
            });
        }
        let values = Array2::from_shape_vec((grid.m(), grid.n()), values).expect("shape checked");
        Ok(ScalarField { grid, values })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[(i, j)] = v;
    }

    /// Flat x-major view, index `i * n + j`.
    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice().expect("standard layout")
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        self.values.as_slice_mut().expect("standard layout")
    }

    pub fn max(&self) -> f64 {
        self.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.as_slice().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `h^2 * sum` of the values.
    pub fn integral(&self) -> f64 {
        self.grid.area() * self.as_slice().iter().sum::<f64>()
    }

    /// Zero the field on obstacle cells.
    pub fn mask_obstacles(&mut self, boundary: &BoundarySpec) {
        for (v, o) in self.as_mut_slice().iter_mut().zip(boundary.obstacle_mask()) {
            if *o {
                *v = 0.0;
            }
        }
    }

    pub(crate) fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        same_grid(&self.grid, grid)
    }
}

/// Face-valued vector field: x-components on the `(m+1) x n` x-faces and
/// y-components on the `m x (n+1)` y-faces.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxField {
    grid: GridSpec,
    x: Array2<f64>,
    y: Array2<f64>,
}

impl FluxField {
    pub fn zeros(grid: GridSpec) -> Self {
        FluxField {
            grid,
            x: Array2::zeros((grid.m() + 1, grid.n())),
            y: Array2::zeros((grid.m(), grid.n() + 1)),
        }
    }

    pub fn from_arrays(grid: GridSpec, x: Array2<f64>, y: Array2<f64>) -> Result<Self> {
        let wx = (grid.m() + 1, grid.n());
        let wy = (grid.m(), grid.n() + 1);
        if x.dim() != wx || y.dim() != wy {
            return Err(Error::Dimension {
                expected: format!("x {wx:?}, y {wy:?}"),
                found: format!("x {:?}, y {:?}", x.dim(), y.dim()),
            });
        }
        Ok(FluxField {
            grid,
            x: x.as_standard_layout().into_owned(),
            y: y.as_standard_layout().into_owned(),
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &Array2<f64> {
        &self.y
    }

    pub fn x_mut(&mut self) -> &mut Array2<f64> {
        &mut self.x
    }

    pub fn y_mut(&mut self) -> &mut Array2<f64> {
        &mut self.y
    }

    pub fn x_slice(&self) -> &[f64] {
        self.x.as_slice().expect("standard layout")
    }

    pub fn y_slice(&self) -> &[f64] {
        self.y.as_slice().expect("standard layout")
    }

    pub fn slices_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (
            self.x.as_slice_mut().expect("standard layout"),
            self.y.as_slice_mut().expect("standard layout"),
        )
    }

    /// Largest absolute face value.
    pub fn max_abs(&self) -> f64 {
        self.x_slice()
            .iter()
            .chain(self.y_slice())
            .fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Set every wall face (exterior walls and obstacle faces) to zero.
    pub fn enforce_walls(&mut self, boundary: &BoundarySpec) {
        let (xo, yo) = (boundary.x_open(), boundary.y_open());
        let (x, y) = self.slices_mut();
        x.iter_mut().zip(xo).for_each(|(v, o)| *v *= o);
        y.iter_mut().zip(yo).for_each(|(v, o)| *v *= o);
    }

    pub(crate) fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        same_grid(&self.grid, grid)
    }
}

fn same_grid(a: &GridSpec, b: &GridSpec) -> Result<()> {
    if a != b {
        return Err(Error::Dimension {
            expected: format!("{}x{} grid, h = {}", b.m(), b.n(), b.h()),
            found: format!("{}x{} grid, h = {}", a.m(), a.n(), a.h()),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_array_checks_shape() {
        let g = GridSpec::new(3, 2, 1.0).unwrap();
        assert!(ScalarField::from_array(g, Array2::zeros((2, 3))).is_err());
        assert!(FluxField::from_arrays(g, Array2::zeros((4, 2)), Array2::zeros((3, 2))).is_err());
        assert!(FluxField::from_arrays(g, Array2::zeros((4, 2)), Array2::zeros((3, 3))).is_ok());
    }

    #[test]
    fn integral_uses_cell_area() {
        let g = GridSpec::unit_square(0.1).unwrap();
        assert!((ScalarField::constant(g, 1.0).integral() - 1.0).abs() < 1e-12);
    }
}
