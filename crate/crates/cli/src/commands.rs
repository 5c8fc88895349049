use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use biot_core::assembly::MaterialParams;
use biot_core::harness::{
    assess_dichotomy, compare_schemes, compute_benchmark, energy_audit, export_vtk, fitted_order, spatial_convergence,
    temporal_convergence, terzaghi_study, timing_report, write_csv_file, write_timing_csv, RunStatus, TerzaghiSetup,
};
use biot_core::mesh::{gmsh, reservoir, reservoir_geo_script, Mesh, ReservoirGeometry};
use biot_core::problems::{
    build_energy_case, build_test_case, consolidation_coefficient, manufactured_material, Problem, ProblemConfig,
    SECONDS_PER_DAY, TERZAGHI_HEIGHT,
};
use biot_core::schemes::{run_simulation, RunOptions, SchemeKind};
use serde::Serialize;

use crate::{Command, Failure, Global};

type CmdResult = Result<(), Failure>;

pub(crate) fn dispatch(g: &Global, cmd: &Command) -> CmdResult {
    match cmd {
        Command::Run { config, vtk_every } => run(g, config.as_deref(), *vtk_every),
        Command::Compare { fine_cells, wall_times } => compare(g, *fine_cells, *wall_times),
        Command::Converge {
            levels,
            space_theta,
            space_tau,
            space_t_max,
            time_mesh,
            taus,
            time_theta,
            time_t_max,
            refine,
            no_space,
            no_time,
        } => {
            if !no_space {
                converge_space(g, levels, *space_theta, *space_tau, *space_t_max)?;
            }
            if !no_time {
                converge_time(g, *time_mesh, taus, *time_theta, *time_t_max, *refine)?;
            }
            Ok(())
        }
        Command::Energy { thetas, slack } => energy(g, thetas, *slack),
        Command::Terzaghi {
            nx,
            ny,
            permeability,
            samples,
            steps_per_sample,
            max_error,
        } => terzaghi(g, *nx, *ny, *permeability, samples, *steps_per_sample, *max_error),
        Command::Timing => timing(g),
        Command::MeshInfo { path, write, geo } => mesh_info(g, path.as_deref(), write.as_deref(), geo.as_deref()),
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Input(format!("{}: {e}", path.display()))
}

fn output_file(g: &Global, name: &str) -> Result<PathBuf, Failure> {
    fs::create_dir_all(&g.output_dir).map_err(|e| io_failure(&g.output_dir, e))?;
    Ok(g.output_dir.join(name))
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    problem: &'a ProblemConfig,
    scheme: &'a biot_core::schemes::SchemeConfig,
    cells: usize,
    vertices: usize,
    load_time: &'static str,
    step_count: &'static str,
}

fn run(g: &Global, config: Option<&Path>, vtk_every: Option<usize>) -> CmdResult {
    let problem_cfg = match config {
        Some(path) => ProblemConfig::from_json(&fs::read_to_string(path).map_err(|e| io_failure(path, e))?)?,
        None => build_test_case(g.case, g.coarse_cells()),
    };
    let cfg = g.template(g.scheme);
    cfg.validate()?;
    let problem = Problem::from_config(&problem_cfg)?;
    let forms = problem.assemble()?;
    log::info!(
        "{} cells, {} u dofs, {} p dofs",
        problem.mesh.n_cells(),
        problem.dofs_u.n_dofs(),
        problem.dofs_p.n_dofs()
    );
    let result = run_simulation(
        &problem,
        &forms,
        &cfg,
        &RunOptions {
            snapshot_every: vtk_every,
        },
    )?;

    let scheme = cfg.kind.short_name();
    let meta = RunMetadata {
        problem: &problem_cfg,
        scheme: &cfg,
        cells: problem.mesh.n_cells(),
        vertices: problem.mesh.n_vertices(),
        load_time: "coupled: theta-weighted time; split schemes: new time level",
        step_count: "floor(t_max / tau)",
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Failure::Input(e.to_string()))?;
    write_text(&output_file(g, &format!("run_{scheme}.json"))?, &json)?;

    let mut csv = String::from("step,time_days,e_a,e_c,iters,step_seconds\n");
    for r in &result.records {
        csv.push_str(&format!(
            "{},{},{:e},{:e},{},{}\n",
            r.step,
            r.time / SECONDS_PER_DAY,
            r.e_a,
            r.e_c,
            r.iterations,
            r.wall_seconds
        ));
    }
    write_text(&output_file(g, &format!("run_{scheme}.csv"))?, &csv)?;
    for s in &result.snapshots {
        let path = output_file(g, &format!("{scheme}_step_{:04}.vtk", s.step))?;
        export_vtk(&problem.mesh, &problem.dofs_u, &s.u, &s.p, &problem.materials, &path)?;
    }
    let state = &result.final_state;
    export_vtk(
        &problem.mesh,
        &problem.dofs_u,
        &state.u_curr,
        &state.p_curr,
        &problem.materials,
        &output_file(g, &format!("{scheme}_final.vtk"))?,
    )?;

    let last = result.records.last().expect("initial record");
    println!(
        "{scheme}: {} steps to {:.4} days, {} solver iterations",
        last.step,
        last.time / SECONDS_PER_DAY,
        result.records.iter().map(|r| r.iterations).sum::<usize>()
    );
    match result.failure {
        Some(e) => Err(Failure::from(e)),
        None => Ok(()),
    }
}

fn compare(g: &Global, fine_cells: usize, wall_times: bool) -> CmdResult {
    let template = g.template(SchemeKind::CoupledTheta);
    template.validate()?;
    let kinds = g.scheme_list(&SchemeKind::ALL);
    let fine = Problem::from_config(&build_test_case(g.case, fine_cells))?;
    println!("benchmark: {} cells", fine.mesh.n_cells());
    let bench = compute_benchmark(fine, template.tau, template.t_max, template.tolerance)?;
    let coarse = Problem::from_config(&build_test_case(g.case, g.coarse_cells()))?;
    let forms = coarse.assemble()?;
    let mesh_id = format!("{}-{}", g.case.name(), coarse.mesh.n_cells());
    let records = compare_schemes(&coarse, &forms, &bench, &kinds, &template, &mesh_id)?;
    write_csv_file(
        &records,
        &output_file(g, &format!("compare_{}.csv", g.case.name()))?,
        wall_times,
    )?;

    let mut failed = Vec::new();
    for r in &records {
        let status = match &r.status {
            RunStatus::Completed => "completed".to_string(),
            RunStatus::Unstable => "UNSTABLE".to_string(),
            RunStatus::Failed(m) => {
                failed.push(format!("{}: {m}", r.scheme));
                "failed".to_string()
            }
        };
        println!(
            "{:>7} {status:>9} steps {:>3} final eps_p {:.4e}",
            r.scheme.short_name(),
            r.rows.last().map_or(0, |row| row.step),
            r.final_eps().unwrap_or(f64::NAN)
        );
    }
    if kinds == SchemeKind::ALL {
        let verdict = assess_dichotomy(g.case, &records);
        for l in &verdict.lines {
            println!("  {l}");
        }
        println!("expected pattern: {}", if verdict.pass { "yes" } else { "no" });
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numerical(failed.join("; ")))
    }
}

fn converge_space(g: &Global, levels: &[usize], theta: f64, tau: f64, t_max: f64) -> CmdResult {
    if levels.len() < 2 {
        return Err(Failure::Input("need at least two mesh levels".into()));
    }
    let rows = spatial_convergence(levels, theta, tau, t_max, g.tolerance.min(1e-10))?;
    let mut csv = String::from("n,h,tau,err_p_l2,err_u_h1\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{:e},{:e}\n",
            r.n, r.h, r.tau, r.err_p_l2, r.err_u_h1
        ));
        println!("n = {:>3}: p L2 {:.4e}, u H1 {:.4e}", r.n, r.err_p_l2, r.err_u_h1);
    }
    write_text(&output_file(g, "converge_space.csv")?, &csv)?;
    let h: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let ep: Vec<f64> = rows.iter().map(|r| r.err_p_l2).collect();
    let eu: Vec<f64> = rows.iter().map(|r| r.err_u_h1).collect();
    println!(
        "fitted orders: p L2 {:.3}, u H1 {:.3}",
        fitted_order(&h, &ep),
        fitted_order(&h, &eu)
    );
    Ok(())
}

fn converge_time(g: &Global, n: usize, taus: &[f64], theta: f64, t_max: f64, refine: usize) -> CmdResult {
    if taus.len() < 2 {
        return Err(Failure::Input("need at least two time steps".into()));
    }
    let rows = temporal_convergence(n, taus, theta, t_max, refine, g.tolerance.min(1e-10))?;
    let mut csv = String::from("tau,err_p_l2\n");
    for r in &rows {
        csv.push_str(&format!("{},{:e}\n", r.tau, r.err_p_l2));
        println!("tau = {:<8}: p L2 {:.4e}", r.tau, r.err_p_l2);
    }
    write_text(&output_file(g, "converge_time.csv")?, &csv)?;
    let e: Vec<f64> = rows.iter().map(|r| r.err_p_l2).collect();
    println!("fitted temporal order (θ = {theta}): {:.3}", fitted_order(taus, &e));
    Ok(())
}

fn energy(g: &Global, thetas: &[f64], slack: f64) -> CmdResult {
    let thetas: Vec<f64> = g.theta.map_or_else(|| thetas.to_vec(), |t| vec![t]);
    let problem = Problem::from_config(&build_energy_case(g.case, g.cells.unwrap_or(2500)))?;
    let forms = problem.assemble()?;
    let mut csv = String::from("theta,step,energy\n");
    let mut violations = Vec::new();
    for &theta in &thetas {
        let cfg = g.template(SchemeKind::CoupledTheta).with_theta(theta);
        cfg.validate()?;
        let audit = energy_audit(&problem, &forms, &cfg)?;
        for (step, e) in audit.energies.iter().enumerate() {
            csv.push_str(&format!("{theta},{step},{e:e}\n"));
        }
        let ok = audit.nonincreasing(slack);
        println!(
            "θ = {theta}: {} steps, worst relative increase {:.3e} {}",
            audit.energies.len() - 1,
            audit.worst_relative_increase,
            if ok { "ok" } else { "VIOLATION" }
        );
        if !ok {
            violations.push(format!("energy grows for θ = {theta}"));
        }
    }
    write_text(&output_file(g, &format!("energy_{}.csv", g.case.name()))?, &csv)?;
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Failure::Violation(violations.join("; ")))
    }
}

fn terzaghi(
    g: &Global,
    nx: usize,
    ny: usize,
    permeability: f64,
    samples: &[f64],
    steps_per_sample: usize,
    max_error: f64,
) -> CmdResult {
    if samples.is_empty() || samples.iter().any(|s| !(*s > 0.0)) || steps_per_sample == 0 {
        return Err(Failure::Input("sample times and steps must be positive".into()));
    }
    let material = MaterialParams {
        permeability,
        ..manufactured_material()
    };
    material.validate()?;
    let cv = consolidation_coefficient(&material);
    let l2 = TERZAGHI_HEIGHT * TERZAGHI_HEIGHT;
    let first = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let setup = TerzaghiSetup {
        material,
        p0: 1.0,
        nx,
        ny,
        tau: first * l2 / cv / steps_per_sample as f64,
        theta: g.theta.unwrap_or(1.0),
        n_terms: 100,
        tolerance: g.tolerance.min(1e-10),
    };
    let times: Vec<f64> = samples
        .iter()
        .map(|f| (f * l2 / cv / setup.tau).round() * setup.tau)
        .collect();
    let rows = terzaghi_study(&setup, &times)?;
    let mut csv = String::from("cv_t_over_l2,time,rel_l2\n");
    let mut worst = 0.0_f64;
    for r in &rows {
        let s = r.time * cv / l2;
        csv.push_str(&format!("{s},{},{:e}\n", r.time, r.rel_l2));
        println!("c_v t / L² = {s:.4}: relative L2 error {:.3e}", r.rel_l2);
        worst = worst.max(r.rel_l2);
    }
    write_text(&output_file(g, "terzaghi.csv")?, &csv)?;
    if worst > max_error {
        Err(Failure::Violation(format!(
            "relative error {worst:.3e} exceeds {max_error}"
        )))
    } else {
        Ok(())
    }
}

fn timing(g: &Global) -> CmdResult {
    let template = g.template(SchemeKind::CoupledTheta);
    template.validate()?;
    let kinds = g.scheme_list(&[SchemeKind::CoupledTheta, SchemeKind::FixedStressRU]);
    let problem = Problem::from_config(&build_test_case(g.case, g.coarse_cells()))?;
    let forms = problem.assemble()?;
    let rows = timing_report(&problem, &forms, &kinds, &template)?;
    let path = output_file(g, &format!("timing_{}.csv", g.case.name()))?;
    let mut out = Vec::new();
    write_timing_csv(&rows, &mut out).map_err(|e| io_failure(&path, e))?;
    fs::write(&path, out).map_err(|e| io_failure(&path, e))?;
    println!("{} cells", problem.mesh.n_cells());
    for r in &rows {
        println!(
            "{:>7}: median {:.4} s/step over {} steps, {} solver iterations",
            r.scheme.short_name(),
            r.median_step_seconds,
            r.steps,
            r.total_iterations
        );
    }
    Ok(())
}

fn describe(mesh: &Mesh, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(
        out,
        "{} vertices, {} cells, {} edges",
        mesh.n_vertices(),
        mesh.n_cells(),
        mesh.n_edges()
    )?;
    let (lo, hi) = mesh.bounding_box();
    writeln!(out, "bounding box [{}, {}] x [{}, {}]", lo[0], hi[0], lo[1], hi[1])?;
    writeln!(
        out,
        "area {:.6}, longest edge {:.6}",
        mesh.total_area(),
        mesh.max_edge_length()
    )?;
    for tag in mesh.tags() {
        let b = mesh.boundary_entities(tag);
        writeln!(
            out,
            "tag {tag}: {} facets, {} vertices",
            b.facets.len(),
            b.vertices.len()
        )?;
    }
    let report = mesh.load_report();
    if report.flipped_cells > 0 || report.dropped_vertices > 0 || report.untagged_facets > 0 {
        writeln!(
            out,
            "repairs: {} flipped cells, {} dropped vertices, {} untagged facets",
            report.flipped_cells, report.dropped_vertices, report.untagged_facets
        )?;
    }
    for w in &report.warnings {
        writeln!(out, "warning: {w}")?;
    }
    Ok(())
}

fn mesh_info(g: &Global, path: Option<&Path>, write: Option<&Path>, geo: Option<&Path>) -> CmdResult {
    let geometry = ReservoirGeometry::default();
    let mesh = match path {
        Some(p) => gmsh::read_gmsh(p)?,
        None => reservoir(&geometry, g.coarse_cells())?,
    };
    let mut text = Vec::new();
    describe(&mesh, &mut text).expect("writing to memory");
    print!("{}", String::from_utf8_lossy(&text));
    if let Some(w) = write {
        gmsh::write_gmsh(&mesh, w)?;
    }
    if let Some(geo) = geo {
        // Characteristic length giving roughly the requested cell count.
        let h = (4.0 * geometry.area() / (3f64.sqrt() * g.coarse_cells() as f64)).sqrt();
        write_text(geo, &reservoir_geo_script(&geometry, h))?;
    }
    Ok(())
}
