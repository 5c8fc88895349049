use std::path::Path;
use std::process::{Command, Output};

use biot_core::assembly::MaterialParams;
use biot_core::problems::{build_terzaghi, manufactured_material, ProblemConfig};

fn biot_split(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biot-split"))
        .arg("--output-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const UNIT_SQUARE: &str = "$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
4
1 0 0 0
2 1 0 0
3 1 1 0
4 0 1 0
$EndNodes
$Elements
6
1 1 2 1 1 1 2
2 1 2 2 2 2 3
3 1 2 3 3 3 4
4 1 2 4 4 4 1
5 2 2 0 1 1 2 3
6 2 2 0 1 1 3 4
$EndElements
";

#[test]
fn mesh_info_summarizes_a_gmsh_file() {
    let dir = tempfile::tempdir().unwrap();
    let msh = dir.path().join("square.msh");
    std::fs::write(&msh, UNIT_SQUARE).unwrap();
    let copy = dir.path().join("copy.msh");
    let o = biot_split(
        dir.path(),
        &["mesh-info", msh.to_str().unwrap(), "--write", copy.to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("4 vertices, 2 cells, 5 edges"), "{text}");
    assert!(text.contains("tag 3: 1 facets"), "{text}");
    let again = biot_split(dir.path(), &["mesh-info", copy.to_str().unwrap()]);
    assert!(stdout(&again).starts_with("4 vertices, 2 cells"));
}

#[test]
fn usage_errors_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["frobnicate"],
        vec!["run", "--scheme", "nope"],
        vec!["run", "--tau-days", "-1", "--cells", "200"],
        vec!["mesh-info", "/nonexistent/file.msh"],
    ] {
        let o = biot_split(dir.path(), &args);
        assert_eq!(
            o.status.code(),
            Some(1),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(!o.stderr.is_empty());
    }
    let help = biot_split(dir.path(), &["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(stdout(&help).contains("compare"));
}

#[test]
fn run_writes_records_metadata_and_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("column.json");
    let column: ProblemConfig = build_terzaghi(manufactured_material(), 1.0, 1, 6);
    std::fs::write(&cfg, column.to_json().unwrap()).unwrap();
    let o = biot_split(
        dir.path(),
        &[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--scheme",
            "RU",
            "--tau-days",
            "0.5",
            "--t-max-days",
            "2",
            "--vtk-every",
            "2",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("run_RU.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run_RU.json")).unwrap()).unwrap();
    assert_eq!(meta["scheme"]["kind"], "FixedStressRU");
    assert_eq!(meta["cells"], 12);
    for f in [
        "RU_step_0000.vtk",
        "RU_step_0002.vtk",
        "RU_step_0004.vtk",
        "RU_final.vtk",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn diverging_solves_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("column.json");
    let mut column = build_terzaghi(manufactured_material(), 1.0, 1, 4);
    column.material = MaterialParams {
        mu: 1e308,
        lambda: 1e308,
        ..column.material
    };
    std::fs::write(&cfg, column.to_json().unwrap()).unwrap();
    let o = biot_split(
        dir.path(),
        &[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--tau-days",
            "1",
            "--t-max-days",
            "2",
        ],
    );
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn compare_output_is_reproducible() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let args = [
            "compare",
            "--case",
            "test2",
            "--cells",
            "250",
            "--fine-cells",
            "600",
            "--t-max-days",
            "0.3",
            "--schemes",
            "coupled,D,RL",
        ];
        let o = biot_split(dir.path(), &args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(dir.path().join("compare_test2.csv")).unwrap()
    };
    let a = run();
    assert_eq!(a.lines().count(), 1 + 3 * 4);
    assert_eq!(a, run());
}

#[test]
fn energy_and_column_checks_report_violations_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let ok = biot_split(
        dir.path(),
        &["energy", "--case", "test1", "--cells", "300", "--t-max-days", "0.5"],
    );
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let csv = std::fs::read_to_string(dir.path().join("energy_test1.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 6);

    let pass = biot_split(dir.path(), &["terzaghi", "--ny", "20", "--samples", "0.1"]);
    assert!(pass.status.success(), "{}", String::from_utf8_lossy(&pass.stderr));
    let fail = biot_split(
        dir.path(),
        &["terzaghi", "--ny", "20", "--samples", "0.1", "--max-error", "1e-9"],
    );
    assert_eq!(fail.status.code(), Some(3));
}
