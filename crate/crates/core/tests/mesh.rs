mod common;

use amlmc::mesh::{QuadMesh, VertexKind};
use common::random_refinement;
use proptest::prelude::*;

fn check_invariants(m: &QuadMesh) {
    assert!(m.is_balanced());
    let area: f64 = (0..m.n_leaves()).map(|k| m.leaf_size(k).powi(2)).sum();
    assert!((area - m.domain().area()).abs() < 1e-12);
    for v in 0..m.n_vertices() {
        match m.hanging_masters(v) {
            Some([a, b]) => {
                assert!(!m.is_hanging(a) && !m.is_hanging(b), "masters of {v} are constrained");
                let (p, pa, pb) = (m.vertex_point(v), m.vertex_point(a), m.vertex_point(b));
                assert!((p[0] - 0.5 * (pa[0] + pb[0])).abs() < 1e-14 && (p[1] - 0.5 * (pa[1] + pb[1])).abs() < 1e-14);
                assert!(m.dof_of_vertex(v).is_none());
            }
            None => {
                let free = m.vertex_kind(v) != VertexKind::Dirichlet;
                assert_eq!(m.dof_of_vertex(v).is_some(), free);
            }
        }
    }
    let dofs: std::collections::BTreeSet<usize> = (0..m.n_vertices()).filter_map(|v| m.dof_of_vertex(v)).collect();
    assert_eq!(dofs.len(), m.n_free());
    assert_eq!(dofs.iter().next_back().map_or(0, |d| d + 1), m.n_free());
}

#[test]
fn base_mesh_layout() {
    let m = QuadMesh::reference_domain(4, 2).unwrap();
    assert_eq!(m.n_leaves(), 8);
    assert_eq!(m.n_vertices(), 15);
    assert_eq!(m.leaf_size(0), 0.5);
    assert_eq!(m.n_hanging(), 0);
    check_invariants(&m);
}

#[test]
fn neumann_segment_on_top_left() {
    let m = QuadMesh::reference_domain(4, 2).unwrap().refine_uniform(1);
    for v in 0..m.n_vertices() {
        let [x, y] = m.vertex_point(v);
        let kind = m.vertex_kind(v);
        if y == 0.0 && x < 0.0 && x > -1.0 {
            assert_eq!(kind, VertexKind::Neumann, "({x}, {y})");
        } else if x.abs() == 1.0 || y == -1.0 || (y == 0.0 && x >= 0.0) {
            assert_eq!(kind, VertexKind::Dirichlet, "({x}, {y})");
        } else {
            assert_eq!(kind, VertexKind::Interior);
        }
    }
}

#[test]
fn uniform_refinement_counts() {
    let m = QuadMesh::reference_domain(4, 2).unwrap();
    for r in 0..4 {
        let u = m.refine_uniform(r);
        let (nx, ny) = (4 << r, 2 << r);
        assert_eq!(u.n_leaves(), nx * ny);
        assert_eq!(u.n_vertices(), (nx + 1) * (ny + 1));
        assert_eq!(u.n_hanging(), 0);
    }
}

#[test]
fn malformed_text_is_rejected() {
    assert!(QuadMesh::from_text("").is_err());
    assert!(QuadMesh::from_text("not a mesh\n").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_refinements_keep_invariants(seed in any::<u64>(), rounds in 1usize..5, frac in 0.05f64..0.6) {
        let base = QuadMesh::reference_domain(4, 2).unwrap();
        let m = random_refinement(&base, rounds, frac, seed);
        check_invariants(&m);
        prop_assert_eq!(QuadMesh::from_text(&m.to_text()).unwrap(), m.clone());
    }

    #[test]
    fn refinement_only_adds_cells(seed in any::<u64>(), frac in 0.05f64..0.6) {
        let base = QuadMesh::reference_domain(4, 2).unwrap();
        let m = random_refinement(&base, 2, frac, seed);
        let marks: Vec<usize> = (0..m.n_leaves()).step_by(3).collect();
        let r = m.refine_cells(&marks).unwrap();
        prop_assert!(r.n_leaves() >= m.n_leaves() + 3 * marks.len());
        prop_assert!(r.smallest_cell_size() <= m.smallest_cell_size());
        for k in 0..r.n_leaves() {
            let c = r.leaf_center(k);
            let parent = m.locate(c).unwrap();
            prop_assert!(m.leaf_size(parent) >= r.leaf_size(k));
        }
    }
}
