//! File-level behaviour of the harness: mesh round trips, reproducible CSV
//! and VTK export.

use biot_core::harness::{compare_schemes, compute_benchmark, export_vtk, parse_vtk, write_csv, RunStatus, CSV_HEADER};
use biot_core::mesh::{gmsh, reservoir, ReservoirGeometry};
use biot_core::problems::{build_test_case, Problem, TestCase, SECONDS_PER_DAY};
use biot_core::schemes::{initialize, SchemeConfig, SchemeKind};

#[test]
fn reservoir_mesh_survives_a_gmsh_file_round_trip() {
    let mesh = reservoir(&ReservoirGeometry::default(), 800).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("reservoir.msh");
    gmsh::write_gmsh(&mesh, &path).unwrap();
    let back = gmsh::read_gmsh(&path).unwrap();
    assert_eq!(back, mesh);
    assert_eq!(gmsh::to_string(&back), std::fs::read_to_string(&path).unwrap());
    assert!((back.total_area() - ReservoirGeometry::default().area()).abs() < 0.01 * back.total_area());
}

fn comparison_csv() -> String {
    let case = TestCase::Test2;
    let tau = 0.1 * SECONDS_PER_DAY;
    let fine = Problem::from_config(&build_test_case(case, 600)).unwrap();
    let bench = compute_benchmark(fine, tau, 3.0 * tau, 1e-10).unwrap();
    let coarse = Problem::from_config(&build_test_case(case, 250)).unwrap();
    let forms = coarse.assemble().unwrap();
    let template = SchemeConfig::new(SchemeKind::CoupledTheta, tau, 3.0 * tau).with_tolerance(1e-10);
    let kinds = [
        SchemeKind::CoupledTheta,
        SchemeKind::AdditiveD,
        SchemeKind::FixedStressRU,
    ];
    let records = compare_schemes(&coarse, &forms, &bench, &kinds, &template, "small").unwrap();
    for r in &records {
        assert_eq!(r.status, RunStatus::Completed, "{}", r.scheme);
        assert_eq!(r.rows.len(), 4);
        assert!(r.rows.windows(2).all(|w| w[1].time_days > w[0].time_days));
    }
    let mut out = Vec::new();
    write_csv(&records, &mut out, false).unwrap();
    String::from_utf8(out).unwrap()
}

#[test]
fn comparison_csv_is_bit_identical_across_runs() {
    let a = comparison_csv();
    let b = comparison_csv();
    assert_eq!(a, b);
    assert_eq!(a.lines().next(), Some(CSV_HEADER));
    assert_eq!(a.lines().count(), 1 + 3 * 4);
}

#[test]
fn exported_vtk_matches_the_mesh() {
    let problem = Problem::from_config(&build_test_case(TestCase::Test1, 300)).unwrap();
    let forms = problem.assemble().unwrap();
    let state = initialize(&problem, &forms, 1e-10).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("initial.vtk");
    export_vtk(
        &problem.mesh,
        &problem.dofs_u,
        &state.u_curr,
        &state.p_curr,
        &problem.materials,
        &path,
    )
    .unwrap();
    let summary = parse_vtk(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(summary.n_points, problem.mesh.n_vertices());
    assert_eq!(summary.n_cells, problem.mesh.n_cells());
    let p = summary.array("p").unwrap();
    assert_eq!(p.values.len(), problem.mesh.n_vertices());
    let vm = summary.array("von_mises").unwrap();
    assert!(vm.values.iter().all(|v| v.is_finite() && *v >= 0.0));
    assert_eq!(summary.array("u").unwrap().components, 3);
}
