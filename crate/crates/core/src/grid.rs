//! Uniform cell grid and boundary classification.
//!
//! Cells are indexed `(i, j)` with `i` along x (`0..m`) and `j` along y
//! (`0..n`). Cell `(i, j)` covers `[i h, (i+1) h] x [j h, (j+1) h]`.
//!
//! Faces live on a staggered layout:
//! * x-faces `(i, j)` for `i in 0..=m`, `j in 0..n`, at `x = i h`, between
//!   cells `(i-1, j)` and `(i, j)`;
//! * y-faces `(i, j)` for `i in 0..m`, `j in 0..=n`, at `y = j h`, between
//!   cells `(i, j-1)` and `(i, j)`.
//!
//! Every exterior face is either a door (free flux) or a wall (zero normal
//! flux). Interior faces touching an obstacle cell are walls as well.

use crate::error::{Error, Result};

/// Uniform `m x n` grid of square cells of side `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    m: usize,
    n: usize,
    h: f64,
}

impl GridSpec {
    pub fn new(m: usize, n: usize, h: f64) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::config(format!("grid must have at least one cell per axis, got {m}x{n}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::config(format!("mesh size must be positive, got {h}")));
        }
        Ok(GridSpec { m, n, h })
    }

    /// Grid covering `[0, width] x [0, height]`; both extents must be
    /// multiples of `h` up to rounding.
    pub fn from_extent(width: f64, height: f64, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::config(format!("mesh size must be positive, got {h}")));
        }
        let cells = |len: f64, axis: &str| -> Result<usize> {
            let c = (len / h).round();
            if c < 1.0 || ((c * h) - len).abs() > 1e-9 * len.max(1.0) {
                return Err(Error::config(format!(
                    "{axis} extent {len} is not a positive multiple of h = {h}"
                )));
            }
            Ok(c as usize)
        };
        GridSpec::new(cells(width, "x")?, cells(height, "y")?, h)
    }

    pub fn unit_square(h: f64) -> Result<Self> {
        Self::from_extent(1.0, 1.0, h)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn width(&self) -> f64 {
        self.m as f64 * self.h
    }

    pub fn height(&self) -> f64 {
        self.n as f64 * self.h
    }

    pub fn num_cells(&self) -> usize {
        self.m * self.n
    }

    pub fn num_x_faces(&self) -> usize {
        (self.m + 1) * self.n
    }

    pub fn num_y_faces(&self) -> usize {
        self.m * (self.n + 1)
    }

    /// Flat index of cell `(i, j)` (x-major).
    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    #[inline]
    pub fn x_face(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    #[inline]
    pub fn y_face(&self, i: usize, j: usize) -> usize {
        i * (self.n + 1) + j
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.h, (j as f64 + 0.5) * self.h)
    }

    /// Cell-area weight `h^2` of the discrete inner products.
    pub fn area(&self) -> f64 {
        self.h * self.h
    }
}

/// One side of the rectangular domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Edge {
    /// `x = 0`
    Left,
    /// `x = width`
    Right,
    /// `y = 0`
    Bottom,
    /// `y = height`
    Top,
}

impl Edge {
    /// The boundary edge a point lies on. Vertical edges win at corners.
    pub fn of_point(grid: &GridSpec, x: f64, y: f64) -> Option<Edge> {
        let tol = 1e-9 * grid.h;
        if x.abs() <= tol {
            Some(Edge::Left)
        } else if (x - grid.width()).abs() <= tol {
            Some(Edge::Right)
        } else if y.abs() <= tol {
            Some(Edge::Bottom)
        } else if (y - grid.height()).abs() <= tol {
            Some(Edge::Top)
        } else {
            None
        }
    }

    /// Length of the edge, i.e. the range of its tangential coordinate.
    fn length(self, grid: &GridSpec) -> f64 {
        match self {
            Edge::Left | Edge::Right => grid.height(),
            Edge::Bottom | Edge::Top => grid.width(),
        }
    }

    fn faces(self, grid: &GridSpec) -> usize {
        match self {
            Edge::Left | Edge::Right => grid.n,
            Edge::Bottom | Edge::Top => grid.m,
        }
    }

    /// The `k`-th face along the edge.
    fn face(self, grid: &GridSpec, k: usize) -> Face {
        match self {
            Edge::Left => Face::X { i: 0, j: k },
            Edge::Right => Face::X { i: grid.m, j: k },
            Edge::Bottom => Face::Y { i: k, j: 0 },
            Edge::Top => Face::Y { i: k, j: grid.n },
        }
    }
}

/// A face of the staggered grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Face {
    X { i: usize, j: usize },
    Y { i: usize, j: usize },
}

impl Face {
    /// The interior cell next to an exterior face, `None` for interior faces.
    pub fn interior_cell(&self, grid: &GridSpec) -> Option<(usize, usize)> {
        match *self {
            Face::X { i: 0, j } => Some((0, j)),
            Face::X { i, j } if i == grid.m => Some((grid.m - 1, j)),
            Face::Y { i, j: 0 } => Some((i, 0)),
            Face::Y { i, j } if j == grid.n => Some((i, grid.n - 1)),
            _ => None,
        }
    }

    /// Outward normal sign of an exterior face along its axis.
    pub fn outward_sign(&self, grid: &GridSpec) -> f64 {
        match *self {
            Face::X { i: 0, .. } | Face::Y { j: 0, .. } => -1.0,
            Face::X { i, .. } if i == grid.m => 1.0,
            Face::Y { j, .. } if j == grid.n => 1.0,
            _ => 0.0,
        }
    }
}

/// Door/wall classification of the boundary, obstacle mask and inflow faces.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySpec {
    grid: GridSpec,
    x_door: Vec<bool>,
    y_door: Vec<bool>,
    obstacle: Vec<bool>,
    sources: Vec<Face>,
    // derived
    x_open: Vec<f64>,
    y_open: Vec<f64>,
    door_cell: Vec<bool>,
}

impl BoundarySpec {
    /// A closed room: every exterior face is a wall.
    pub fn walled(grid: GridSpec) -> Self {
        let mut b = BoundarySpec {
            grid,
            x_door: vec![false; grid.num_x_faces()],
            y_door: vec![false; grid.num_y_faces()],
            obstacle: vec![false; grid.num_cells()],
            sources: Vec::new(),
            x_open: Vec::new(),
            y_open: Vec::new(),
            door_cell: Vec::new(),
        };
        b.refresh();
        b
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Turn every face of `edge` whose midpoint lies in `[lo, hi]` into a
    /// door. A degenerate interval (`lo == hi`) selects the face(s) whose
    /// extent contains the point. Returns the number of faces selected.
    pub fn add_door_segment(&mut self, edge: Edge, lo: f64, hi: f64) -> Result<usize> {
        let faces = self.segment_faces(edge, lo, hi)?;
        for f in &faces {
            if self.sources.contains(f) {
                return Err(Error::config(format!("face {f:?} is both a door and a source")));
            }
            self.set_door(*f);
        }
        self.refresh();
        Ok(faces.len())
    }

    pub fn add_door(&mut self, face: Face) -> Result<()> {
        if face.interior_cell(&self.grid).is_none() {
            return Err(Error::config(format!("{face:?} is not an exterior face")));
        }
        self.set_door(face);
        self.refresh();
        Ok(())
    }

    /// Mark wall faces of `edge` inside `[lo, hi]` as inflow faces.
    pub fn add_source_segment(&mut self, edge: Edge, lo: f64, hi: f64) -> Result<usize> {
        let faces = self.segment_faces(edge, lo, hi)?;
        for f in &faces {
            if self.is_door(*f) {
                return Err(Error::config(format!("source face {f:?} overlaps a door")));
            }
            if !self.sources.contains(f) {
                self.sources.push(*f);
            }
        }
        self.sources.sort();
        Ok(faces.len())
    }

    /// Mark every cell whose center lies in the closed rectangle as an
    /// obstacle. Returns the number of cells marked.
    pub fn add_obstacle_rect(&mut self, x0: f64, x1: f64, y0: f64, y1: f64) -> Result<usize> {
        let g = self.grid;
        if !(x0 <= x1 && y0 <= y1) {
            return Err(Error::config(format!("empty obstacle rectangle [{x0},{x1}]x[{y0},{y1}]")));
        }
        let tol = 1e-9 * g.h;
        let mut count = 0;
        for i in 0..g.m {
            for j in 0..g.n {
                let (x, y) = g.cell_center(i, j);
                if x >= x0 - tol && x <= x1 + tol && y >= y0 - tol && y <= y1 + tol {
                    self.obstacle[g.cell(i, j)] = true;
                    count += 1;
                }
            }
        }
        self.refresh();
        Ok(count)
    }

    pub fn set_obstacle(&mut self, i: usize, j: usize) {
        let c = self.grid.cell(i, j);
        self.obstacle[c] = true;
        self.refresh();
    }

    /// Same boundary with every obstacle removed.
    pub fn without_obstacles(&self) -> Self {
        let mut b = self.clone();
        b.obstacle.iter_mut().for_each(|o| *o = false);
        b.refresh();
        b
    }

    fn set_door(&mut self, face: Face) {
        match face {
            Face::X { i, j } => self.x_door[self.grid.x_face(i, j)] = true,
            Face::Y { i, j } => self.y_door[self.grid.y_face(i, j)] = true,
        }
    }

    fn segment_faces(&self, edge: Edge, lo: f64, hi: f64) -> Result<Vec<Face>> {
        let g = &self.grid;
        let len = edge.length(g);
        let tol = 1e-9 * g.h;
        if !(lo <= hi) || lo < -tol || hi > len + tol {
            return Err(Error::config(format!(
                "segment [{lo}, {hi}] does not lie on the {edge:?} edge of length {len}"
            )));
        }
        let point = (hi - lo).abs() <= tol;
        let faces: Vec<Face> = (0..edge.faces(g))
            .filter(|&k| {
                let a = k as f64 * g.h;
                let b = a + g.h;
                if point {
                    lo >= a - tol && lo <= b + tol
                } else {
                    let mid = 0.5 * (a + b);
                    mid >= lo - tol && mid <= hi + tol
                }
            })
            .map(|k| edge.face(g, k))
            .collect();
        if faces.is_empty() {
            return Err(Error::config(format!(
                "segment [{lo}, {hi}] on the {edge:?} edge selects no face at h = {}",
                g.h
            )));
        }
        Ok(faces)
    }

    fn refresh(&mut self) {
        let g = self.grid;
        let (m, n) = (g.m, g.n);
        let fluid = |i: usize, j: usize| !self.obstacle[g.cell(i, j)];
        let mut x_open = vec![0.0; g.num_x_faces()];
        for i in 0..=m {
            for j in 0..n {
                let open = if i == 0 {
                    self.x_door[g.x_face(i, j)] && fluid(0, j)
                } else if i == m {
                    self.x_door[g.x_face(i, j)] && fluid(m - 1, j)
                } else {
                    fluid(i - 1, j) && fluid(i, j)
                };
                x_open[g.x_face(i, j)] = if open { 1.0 } else { 0.0 };
            }
        }
        let mut y_open = vec![0.0; g.num_y_faces()];
        for i in 0..m {
            for j in 0..=n {
                let open = if j == 0 {
                    self.y_door[g.y_face(i, j)] && fluid(i, 0)
                } else if j == n {
                    self.y_door[g.y_face(i, j)] && fluid(i, n - 1)
                } else {
                    fluid(i, j - 1) && fluid(i, j)
                };
                y_open[g.y_face(i, j)] = if open { 1.0 } else { 0.0 };
            }
        }
        let mut door_cell = vec![false; g.num_cells()];
        for f in self.door_faces() {
            if let Some((i, j)) = f.interior_cell(&g) {
                door_cell[g.cell(i, j)] = true;
            }
        }
        self.x_open = x_open;
        self.y_open = y_open;
        self.door_cell = door_cell;
    }

    pub fn is_door(&self, face: Face) -> bool {
        match face {
            Face::X { i, j } => self.x_door[self.grid.x_face(i, j)],
            Face::Y { i, j } => self.y_door[self.grid.y_face(i, j)],
        }
    }

    /// Whether flux may cross the face (interior fluid face or door face).
    pub fn is_open(&self, face: Face) -> bool {
        match face {
            Face::X { i, j } => self.x_open[self.grid.x_face(i, j)] != 0.0,
            Face::Y { i, j } => self.y_open[self.grid.y_face(i, j)] != 0.0,
        }
    }

    /// Exterior door faces, x-faces first, in index order.
    pub fn door_faces(&self) -> Vec<Face> {
        let g = &self.grid;
        let mut out = Vec::new();
        for i in [0, g.m] {
            for j in 0..g.n {
                if self.x_door[g.x_face(i, j)] && !out.contains(&Face::X { i, j }) {
                    out.push(Face::X { i, j });
                }
            }
        }
        for j in [0, g.n] {
            for i in 0..g.m {
                if self.y_door[g.y_face(i, j)] && !out.contains(&Face::Y { i, j }) {
                    out.push(Face::Y { i, j });
                }
            }
        }
        out
    }

    /// Exterior wall faces (all exterior faces that are not doors).
    pub fn wall_faces(&self) -> Vec<Face> {
        let g = &self.grid;
        let mut out = Vec::new();
        for i in [0, g.m] {
            for j in 0..g.n {
                let f = Face::X { i, j };
                if !self.is_door(f) && !out.contains(&f) {
                    out.push(f);
                }
            }
        }
        for j in [0, g.n] {
            for i in 0..g.m {
                let f = Face::Y { i, j };
                if !self.is_door(f) && !out.contains(&f) {
                    out.push(f);
                }
            }
        }
        out
    }

    pub fn source_faces(&self) -> &[Face] {
        &self.sources
    }

    pub fn has_doors(&self) -> bool {
        self.door_faces().iter().any(|f| self.is_open(*f))
    }

    pub fn is_obstacle(&self, i: usize, j: usize) -> bool {
        self.obstacle[self.grid.cell(i, j)]
    }

    pub fn obstacle_mask(&self) -> &[bool] {
        &self.obstacle
    }

    pub fn obstacle_count(&self) -> usize {
        self.obstacle.iter().filter(|o| **o).count()
    }

    /// Cells adjacent to a door face.
    pub fn is_door_cell(&self, i: usize, j: usize) -> bool {
        self.door_cell[self.grid.cell(i, j)]
    }

    pub fn door_cell_mask(&self) -> &[bool] {
        &self.door_cell
    }

    /// 1.0 on open x-faces, 0.0 on walls.
    pub(crate) fn x_open(&self) -> &[f64] {
        &self.x_open
    }

    pub(crate) fn y_open(&self) -> &[f64] {
        &self.y_open
    }

    /// Rejects obstacle cells that sit next to a door.
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        for i in 0..g.m {
            for j in 0..g.n {
                if self.is_obstacle(i, j) && self.is_door_cell(i, j) {
                    return Err(Error::config(format!("obstacle cell ({i}, {j}) touches a door")));
                }
            }
        }
        Ok(())
    }

    /// Cells connected to a door cell through open faces. Obstacle cells are
    /// never reachable.
    pub fn reachable_from_doors(&self) -> Vec<bool> {
        let g = self.grid;
        let mut seen = vec![false; g.num_cells()];
        let mut stack: Vec<(usize, usize)> = Vec::new();
        for i in 0..g.m {
            for j in 0..g.n {
                let c = g.cell(i, j);
                if self.door_cell[c] && !self.obstacle[c] {
                    seen[c] = true;
                    stack.push((i, j));
                }
            }
        }
        while let Some((i, j)) = stack.pop() {
            let mut visit = |ii: usize, jj: usize, open: bool, seen: &mut Vec<bool>| {
                let c = g.cell(ii, jj);
                if open && !seen[c] {
                    seen[c] = true;
                    stack.push((ii, jj));
                }
            };
            if i > 0 {
                visit(i - 1, j, self.x_open[g.x_face(i, j)] != 0.0, &mut seen);
            }
            if i + 1 < g.m {
                visit(i + 1, j, self.x_open[g.x_face(i + 1, j)] != 0.0, &mut seen);
            }
            if j > 0 {
                visit(i, j - 1, self.y_open[g.y_face(i, j)] != 0.0, &mut seen);
            }
            if j + 1 < g.n {
                visit(i, j + 1, self.y_open[g.y_face(i, j + 1)] != 0.0, &mut seen);
            }
        }
        seen
    }
}
