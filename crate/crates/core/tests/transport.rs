use crowdflow::eikonal::VelocityField;
use crowdflow::transport::upwind_step;
use crowdflow::{BoundarySpec, Edge, FluxField, GridSpec, ScalarField};
use proptest::prelude::*;

/// Straightforward donor-cell update: every cell looks at its four faces.
fn reference_step(rho: &ScalarField, v: &VelocityField, tau: f64, b: &BoundarySpec) -> Vec<f64> {
    let g = *b.grid();
    let (m, n, h) = (g.m(), g.n(), g.h());
    let (fx, fy) = (v.faces.x(), v.faces.y());
    let open_x = |i: usize, j: usize| {
        if i == 0 || i == m {
            b.is_door(crowdflow::Face::X { i, j })
        } else {
            !b.is_obstacle(i - 1, j) && !b.is_obstacle(i, j)
        }
    };
    let open_y = |i: usize, j: usize| {
        if j == 0 || j == n {
            b.is_door(crowdflow::Face::Y { i, j })
        } else {
            !b.is_obstacle(i, j - 1) && !b.is_obstacle(i, j)
        }
    };
    let val = |i: isize, j: isize| {
        if i < 0 || j < 0 || i >= m as isize || j >= n as isize {
            0.0
        } else {
            rho.get(i as usize, j as usize)
        }
    };
    let mut out = vec![0.0; g.num_cells()];
    for i in 0..m {
        for j in 0..n {
            let (ii, jj) = (i as isize, j as isize);
            let flux = |u: f64, behind: f64, ahead: f64| if u > 0.0 { u * behind } else { u * ahead };
            let right = if open_x(i + 1, j) { flux(fx[(i + 1, j)], val(ii, jj), val(ii + 1, jj)) } else { 0.0 };
            let left = if open_x(i, j) { flux(fx[(i, j)], val(ii - 1, jj), val(ii, jj)) } else { 0.0 };
            let up = if open_y(i, j + 1) { flux(fy[(i, j + 1)], val(ii, jj), val(ii, jj + 1)) } else { 0.0 };
            let down = if open_y(i, j) { flux(fy[(i, j)], val(ii, jj - 1), val(ii, jj)) } else { 0.0 };
            out[g.cell(i, j)] = rho.get(i, j) - tau / h * (right - left + up - down);
        }
    }
    out
}

#[derive(Debug, Clone)]
struct Case {
    b: BoundarySpec,
    rho: ScalarField,
    v: VelocityField,
    tau: f64,
}

fn case() -> impl Strategy<Value = Case> {
    (2usize..9, 2usize..9, prop::collection::vec(0.0..1.0f64, 4), any::<bool>(), 0.05..0.49f64).prop_flat_map(
        |(m, n, door_at, obstacle, cfl)| {
            let cells = prop::collection::vec(0.0..=1.0f64, m * n);
            let xf = prop::collection::vec(-1.0..1.0f64, (m + 1) * n);
            let yf = prop::collection::vec(-1.0..1.0f64, m * (n + 1));
            (cells, xf, yf).prop_map(move |(cells, xf, yf)| {
                let g = GridSpec::new(m, n, 0.1).unwrap();
                let mut b = BoundarySpec::walled(g);
                for (k, edge) in [Edge::Left, Edge::Right, Edge::Bottom, Edge::Top].into_iter().enumerate() {
                    if door_at[k] < 0.7 {
                        let len = if k < 2 { g.height() } else { g.width() };
                        b.add_door_segment(edge, door_at[k] * len, (door_at[k] + 0.3) * len).ok();
                    }
                }
                if obstacle && m > 2 && n > 2 {
                    b.set_obstacle(1, 1);
                }
                let mut rho = ScalarField::from_vec(g, cells).unwrap();
                rho.mask_obstacles(&b);
                let faces = FluxField::from_arrays(
                    g,
                    ndarray::Array2::from_shape_vec((m + 1, n), xf).unwrap(),
                    ndarray::Array2::from_shape_vec((m, n + 1), yf).unwrap(),
                )
                .unwrap();
                let v = VelocityField::from_faces(&b, faces).unwrap();
                let speed = v.max_speed().max(1e-3);
                Case { b, rho, v, tau: cfl * 0.1 / speed }
            })
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn matches_reference_and_keeps_invariants(c in case()) {
        let out = upwind_step(&c.rho, &c.v, c.tau, &c.b).unwrap();
        let reference = reference_step(&c.rho, &c.v, c.tau, &c.b);
        for (a, r) in out.rho_out.as_slice().iter().zip(&reference) {
            prop_assert!((a - r).abs() <= 1e-14, "{a} vs {r}");
        }
        prop_assert!(out.rho_out.min() >= 0.0);
        prop_assert!(out.door_outflux >= 0.0);
        prop_assert!((out.mass_after - out.mass_before + out.door_outflux).abs() <= 1e-12);
        for (c_out, o) in out.rho_out.as_slice().iter().zip(c.b.obstacle_mask()) {
            if *o {
                prop_assert_eq!(*c_out, 0.0);
            }
        }
    }

    #[test]
    fn mass_moves_at_most_one_cell(c in case(), ci in 0usize..8, cj in 0usize..8) {
        let g = *c.b.grid();
        let (ci, cj) = (ci % g.m(), cj % g.n());
        prop_assume!(!c.b.is_obstacle(ci, cj));
        let mut rho = ScalarField::zeros(g);
        rho.set(ci, cj, 1.0);
        let out = upwind_step(&rho, &c.v, c.tau, &c.b).unwrap();
        for i in 0..g.m() {
            for j in 0..g.n() {
                if out.rho_out.get(i, j) != 0.0 {
                    prop_assert!(i.abs_diff(ci) + j.abs_diff(cj) <= 1);
                }
            }
        }
    }
}
