use amlmc_web::{density, field_grid, mesh_cells, MAX_MESH};

fn total_area(cells: &[f64], stride: usize) -> f64 {
    cells.chunks(stride).map(|c| c[2] * c[2]).sum()
}

#[test]
fn mesh_cells_cover_the_domain() {
    for k in [0, 2] {
        let c = mesh_cells(0, k).unwrap();
        assert_eq!(c.len() % 3, 0);
        assert!((total_area(&c, 3) - 2.0).abs() < 1e-12);
    }
    assert!(mesh_cells(0, 3).unwrap().len() > mesh_cells(0, 2).unwrap().len());
}

#[test]
fn invalid_requests_are_rejected() {
    assert!(mesh_cells(3, 0).is_err());
    assert!(mesh_cells(0, MAX_MESH + 1).is_err());
    assert!(field_grid(1.0, 1, 1).is_err());
    assert!(field_grid(-1.0, 1, 8).is_err());
}

#[test]
fn field_grid_is_reproducible() {
    let a = field_grid(1.0, 3, 16).unwrap();
    assert_eq!(a.len(), 16 * 8);
    assert_eq!(a, field_grid(1.0, 3, 16).unwrap());
    assert_ne!(a, field_grid(1.0, 4, 16).unwrap());
}

#[test]
fn density_has_one_value_per_cell() {
    let d = density(1.0, 2, 1).unwrap();
    assert_eq!(d.cells.len() % 4, 0);
    assert!((total_area(&d.cells, 4) - 2.0).abs() < 1e-12);
    assert!(d.qoi.is_finite() && d.qoi > 0.0);
    assert!(d.cells.chunks(4).all(|c| c[3].is_finite()));
}
