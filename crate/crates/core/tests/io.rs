use std::fs;

use amlmc::io::{load_hierarchy, read_csv, save_hierarchy, write_csv, ConvergenceRow, WorkRow};
use amlmc::setup::{Example, Setup};

#[test]
fn hierarchy_round_trip_is_exact() {
    let setup = Setup::new(Example::LognormalConstant, 1.0);
    let h = setup.hierarchy().unwrap();
    h.level(3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let saved = save_hierarchy(dir.path(), &h, 1.0, None).unwrap();
    assert_eq!(saved.meshes.len(), 4);

    let (loaded, manifest) = load_hierarchy(dir.path(), setup.problem()).unwrap();
    assert_eq!(manifest, saved);
    assert_eq!(loaded.len(), 4);
    for k in 0..4 {
        let (a, b) = (h.level(k).unwrap(), loaded.level(k).unwrap());
        assert_eq!(a.ctx.mesh.to_text(), b.ctx.mesh.to_text());
        assert_eq!(a.unit_summary(false).unwrap().qoi.to_bits(), b.unit_summary(false).unwrap().qoi.to_bits());
    }
    // Meshes generated after loading continue the same sequence.
    assert_eq!(h.level(4).unwrap().ctx.mesh.to_text(), loaded.level(4).unwrap().ctx.mesh.to_text());

    let first = fs::read(dir.path().join("manifest.json")).unwrap();
    let again = tempfile::tempdir().unwrap();
    let (h4, _) = load_hierarchy(dir.path(), setup.problem()).unwrap();
    save_hierarchy(again.path(), &h4, 1.0, None).unwrap();
    assert_eq!(first, fs::read(again.path().join("manifest.json")).unwrap());
}

#[test]
fn missing_manifest_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load_hierarchy(dir.path(), Setup::new(Example::Matern, 1.0).problem()).is_err());
}

#[test]
fn csv_tables_round_trip_with_config_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("conv.csv");
    let rows = vec![
        ConvergenceRow {
            ladder: "adaptive".into(),
            mesh: 0,
            dofs: 21,
            cells: 8,
            smallest_cell: 0.5,
            qoi: 1.25,
            e_est: -0.1,
            e_est_abs: 0.3,
            l1: 2.0,
            l_half: 1.0,
        },
        ConvergenceRow { ladder: "uniform".into(), mesh: 1, dofs: 65, cells: 32, smallest_cell: 0.25, qoi: 1.5, e_est: 0.01, e_est_abs: 0.02, l1: 3.0, l_half: 0.5 },
    ];
    write_csv(&path, "abc123", &rows).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# config abc123\nladder,mesh,dofs,"));
    assert_eq!(read_csv::<ConvergenceRow>(&path).unwrap(), rows);

    let work = vec![WorkRow { tol: 0.125, realization: 3, estimate: 8.4, error: -0.01, levels: 3, total_work: 1e6, sqrt_work_tol2: 125.0 }];
    write_csv(&path, "h", &work).unwrap();
    assert_eq!(read_csv::<WorkRow>(&path).unwrap(), work);
}
