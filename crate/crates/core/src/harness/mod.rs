//! Experiment drivers: fine-mesh benchmark, ε_p error, scheme comparison,
//! timing and VTK export.

pub mod studies;
pub mod vtk;

use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use serde::Serialize;

use crate::assembly::FormMatrices;
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point, PointLocator};
use crate::problems::{Problem, SECONDS_PER_DAY};
use crate::schemes::{run_simulation_with, Control, RunOptions, SchemeConfig, SchemeKind};
use crate::spaces::{quadrature, DofHandler, SpaceKind, Tabulation};

pub use studies::{
    adjointness_defect, assess_dichotomy, energy_audit, error_u_h1, fitted_order, observed_orders, spatial_convergence,
    temporal_convergence, terzaghi_study, DichotomyVerdict, EnergyAudit, SpatialLevel, TemporalLevel, TerzaghiSample,
    TerzaghiSetup,
};
pub use vtk::{export_vtk, parse_vtk, von_mises_at_vertices, VtkSummary};

/// ε_p growth factor over its initial value that marks a run unstable.
pub const UNSTABLE_FACTOR: f64 = 1e6;
/// Quadrature degree of the ε_p integral.
pub const ERROR_DEGREE: usize = 4;

/// `‖p_h − p_e‖_{L2}` on the mesh of `p_h`, with `p_e` sampled at quadrature points.
pub fn error_ep(mesh: &Mesh, dofs_p: &DofHandler, p: &[f64], p_e: impl Fn(Point) -> f64) -> Result<f64> {
    let tab = Tabulation::new(SpaceKind::P1Scalar, quadrature(ERROR_DEGREE)?);
    let mut sum = 0.0;
    for cell in 0..mesh.n_cells() {
        let geom = mesh.cell_geometry(cell)?;
        let dofs = dofs_p.cell_dofs(cell);
        for (q, (xi, w)) in tab.rule.points.iter().zip(&tab.rule.weights).enumerate() {
            let ph: f64 = (0..3).map(|i| tab.values[q][i] * p[dofs[i]]).sum();
            let e = ph - p_e(geom.map(xi[0], xi[1]));
            sum += e * e * w * geom.det;
        }
    }
    Ok(sum.sqrt())
}

/// Coarse-mesh quadrature points located in a fine mesh, for repeated ε_p
/// evaluation against P1 fields on the fine mesh.
#[derive(Debug, Clone)]
pub struct CrossMeshSampler {
    /// Per coarse quadrature point: fine cell vertices and barycentric weights.
    samples: Vec<([usize; 3], [f64; 3])>,
    weights: Vec<f64>,
    values: Vec<[f64; 3]>,
    coarse_dofs: Vec<[usize; 3]>,
    n_qp: usize,
}

impl CrossMeshSampler {
    pub fn new(coarse: &Mesh, coarse_p: &DofHandler, fine: &Mesh) -> Result<Self> {
        let tab = Tabulation::new(SpaceKind::P1Scalar, quadrature(ERROR_DEGREE)?);
        let locator = PointLocator::new(fine);
        let n_qp = tab.rule.len();
        let mut samples = Vec::with_capacity(coarse.n_cells() * n_qp);
        let mut weights = Vec::with_capacity(samples.capacity());
        let mut coarse_dofs = Vec::with_capacity(coarse.n_cells());
        for cell in 0..coarse.n_cells() {
            let geom = coarse.cell_geometry(cell)?;
            let d = coarse_p.cell_dofs(cell);
            coarse_dofs.push([d[0], d[1], d[2]]);
            for (xi, w) in tab.rule.points.iter().zip(&tab.rule.weights) {
                let (fc, bary) = locator.locate(geom.map(xi[0], xi[1]));
                samples.push((fine.cells()[fc], bary));
                weights.push(w * geom.det);
            }
        }
        let values = (0..n_qp).map(|q| [0, 1, 2].map(|i| tab.values[q][i])).collect();
        Ok(Self {
            samples,
            weights,
            values,
            coarse_dofs,
            n_qp,
        })
    }

    /// ε_p between a coarse P1 field and a fine P1 field (fine vertex values).
    pub fn error(&self, p_coarse: &[f64], p_fine: &[f64]) -> f64 {
        let mut sum = 0.0;
        for (k, ((cells, bary), w)) in self.samples.iter().zip(&self.weights).enumerate() {
            let (cell, q) = (k / self.n_qp, k % self.n_qp);
            let d = &self.coarse_dofs[cell];
            let ph: f64 = (0..3).map(|i| self.values[q][i] * p_coarse[d[i]]).sum();
            let pe: f64 = (0..3).map(|i| bary[i] * p_fine[cells[i]]).sum();
            sum += (ph - pe) * (ph - pe) * w;
        }
        sum.sqrt()
    }
}

/// Pressure snapshots of the coupled θ = 1 scheme on the fine mesh.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub problem: Problem,
    /// Index `n` holds the pressure at `n τ`; index 0 is the initial state.
    pub snapshots: Vec<Vec<f64>>,
    pub tau: f64,
}

impl Benchmark {
    /// P1 interpolation of snapshot `step` at `x`.
    pub fn evaluate(&self, locator: &PointLocator<'_>, step: usize, x: Point) -> f64 {
        locator.interpolate_p1(&self.snapshots[step], x)
    }

    /// Benchmark pressure at time `t`, linear in time between snapshots and
    /// held constant past the last one.
    pub fn pressure_at(&self, t: f64) -> std::borrow::Cow<'_, [f64]> {
        use std::borrow::Cow;
        let last = self.snapshots.len() - 1;
        let s = (t / self.tau).max(0.0);
        let n = s.floor() as usize;
        if n >= last {
            return Cow::Borrowed(&self.snapshots[last]);
        }
        let w = s - n as f64;
        if w < 1e-9 {
            return Cow::Borrowed(&self.snapshots[n]);
        }
        if w > 1.0 - 1e-9 {
            return Cow::Borrowed(&self.snapshots[n + 1]);
        }
        let (a, b) = (&self.snapshots[n], &self.snapshots[n + 1]);
        Cow::Owned(a.iter().zip(b).map(|(x, y)| (1.0 - w) * x + w * y).collect())
    }

    pub fn sampler(&self, coarse: &Problem) -> Result<CrossMeshSampler> {
        CrossMeshSampler::new(&coarse.mesh, &coarse.dofs_p, &self.problem.mesh)
    }
}

pub fn compute_benchmark(fine: Problem, tau: f64, t_max: f64, tolerance: f64) -> Result<Benchmark> {
    let forms = fine.assemble()?;
    let cfg = SchemeConfig::new(SchemeKind::CoupledTheta, tau, t_max).with_tolerance(tolerance);
    let opts = RunOptions {
        snapshot_every: Some(1),
    };
    let result = crate::schemes::run_simulation(&fine, &forms, &cfg, &opts)?;
    if let Some(e) = result.failure {
        return Err(e);
    }
    let snapshots = result.snapshots.into_iter().map(|s| s.p).collect();
    Ok(Benchmark {
        problem: fine,
        snapshots,
        tau,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordRow {
    pub step: usize,
    pub time_days: f64,
    pub eps_p: f64,
    pub e_a: f64,
    pub e_c: f64,
    pub iters: usize,
    pub step_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", content = "detail", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// ε_p exceeded the growth threshold; the run was truncated.
    Unstable,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub scheme: SchemeKind,
    pub theta: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub mesh_id: String,
    pub tau: f64,
    pub status: RunStatus,
    pub rows: Vec<RecordRow>,
}

impl RunRecord {
    pub fn final_eps(&self) -> Option<f64> {
        self.rows.last().map(|r| r.eps_p)
    }

    pub fn is_unstable(&self) -> bool {
        self.status == RunStatus::Unstable
    }

    /// Median wall time of the completed steps.
    pub fn median_step_seconds(&self) -> f64 {
        let mut t: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.step > 0)
            .map(|r| r.step_seconds)
            .collect();
        median(&mut t)
    }
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs one scheme against the benchmark.
pub fn run_against_benchmark(
    problem: &Problem,
    forms: &FormMatrices,
    config: &SchemeConfig,
    benchmark: &Benchmark,
    sampler: &CrossMeshSampler,
    mesh_id: &str,
) -> RunRecord {
    let mut rows = Vec::new();
    let mut initial: Option<f64> = None;
    let mut unstable = false;
    let outcome = run_simulation_with(problem, forms, config, &RunOptions::default(), |state, rec| {
        let eps = sampler.error(&state.p_curr, &benchmark.pressure_at(state.time));
        rows.push(RecordRow {
            step: rec.step,
            time_days: rec.time / SECONDS_PER_DAY,
            eps_p: eps,
            e_a: rec.e_a,
            e_c: rec.e_c,
            iters: rec.iterations,
            step_seconds: rec.wall_seconds,
        });
        if initial.is_none() && eps > 0.0 {
            initial = Some(eps);
        }
        if !eps.is_finite() || initial.is_some_and(|e0| eps > UNSTABLE_FACTOR * e0) {
            unstable = true;
            return Control::Stop;
        }
        Control::Continue
    });
    let status = match outcome {
        Err(e) => RunStatus::Failed(e.to_string()),
        Ok(r) => match r.failure {
            Some(e) => RunStatus::Failed(e.to_string()),
            None if unstable => RunStatus::Unstable,
            None => RunStatus::Completed,
        },
    };
    RunRecord {
        scheme: config.kind,
        theta: config.theta,
        theta1: config.theta1,
        theta2: config.theta2,
        mesh_id: mesh_id.into(),
        tau: config.tau,
        status,
        rows,
    }
}

/// Worker count: `BIOT_SPLIT_THREADS` capped by the machine and the job count.
pub fn worker_count(jobs: usize) -> usize {
    let hw = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cap = std::env::var("BIOT_SPLIT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(hw);
    cap.min(hw).min(jobs).max(1)
}

/// Runs every scheme in `kinds` with the settings of `template`; failures
/// are isolated per scheme. Records come back in the order of `kinds`.
pub fn compare_schemes(
    problem: &Problem,
    forms: &FormMatrices,
    benchmark: &Benchmark,
    kinds: &[SchemeKind],
    template: &SchemeConfig,
    mesh_id: &str,
) -> Result<Vec<RunRecord>> {
    let sampler = benchmark.sampler(problem)?;
    let slots: Vec<Mutex<Option<RunRecord>>> = kinds.iter().map(|_| Mutex::new(None)).collect();
    let next = Mutex::new(0usize);
    std::thread::scope(|scope| {
        for _ in 0..worker_count(kinds.len()) {
            scope.spawn(|| loop {
                let i = {
                    let mut n = next.lock().expect("work counter");
                    let i = *n;
                    *n += 1;
                    i
                };
                if i >= kinds.len() {
                    break;
                }
                let cfg = SchemeConfig {
                    kind: kinds[i],
                    ..*template
                };
                let rec = run_against_benchmark(problem, forms, &cfg, benchmark, &sampler, mesh_id);
                *slots[i].lock().expect("result slot") = Some(rec);
            });
        }
    });
    Ok(slots
        .into_iter()
        .map(|s| s.into_inner().expect("result slot").expect("every job ran"))
        .collect())
}

pub const CSV_HEADER: &str = "scheme,step,time_days,eps_p,e_a,e_c,iters,step_seconds";

/// One CSV for all records. `include_timing = false` writes 0 for the wall
/// time so the file is reproducible bit for bit.
pub fn write_csv(records: &[RunRecord], out: &mut impl Write, include_timing: bool) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        for row in &r.rows {
            writeln!(
                out,
                "{},{},{},{:e},{:e},{:e},{},{}",
                r.scheme,
                row.step,
                row.time_days,
                row.eps_p,
                row.e_a,
                row.e_c,
                row.iters,
                if include_timing { row.step_seconds } else { 0.0 }
            )?;
        }
    }
    Ok(())
}

pub fn write_csv_file(records: &[RunRecord], path: &Path, include_timing: bool) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    write_csv(records, &mut f, include_timing).map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub scheme: SchemeKind,
    pub steps: usize,
    pub median_step_seconds: f64,
    pub total_seconds: f64,
    pub total_iterations: usize,
}

/// Median per-step wall time of each scheme, run one after another.
pub fn timing_report(
    problem: &Problem,
    forms: &FormMatrices,
    kinds: &[SchemeKind],
    template: &SchemeConfig,
) -> Result<Vec<TimingRow>> {
    kinds
        .iter()
        .map(|&kind| {
            let cfg = SchemeConfig { kind, ..*template };
            let r = crate::schemes::run_simulation(problem, forms, &cfg, &RunOptions::default())?;
            if let Some(e) = r.failure {
                return Err(e);
            }
            let steps: Vec<_> = r.records.iter().filter(|s| s.step > 0).collect();
            let mut t: Vec<f64> = steps.iter().map(|s| s.wall_seconds).collect();
            Ok(TimingRow {
                scheme: kind,
                steps: steps.len(),
                median_step_seconds: median(&mut t),
                total_seconds: t.iter().sum(),
                total_iterations: steps.iter().map(|s| s.iterations).sum(),
            })
        })
        .collect()
}

pub fn write_timing_csv(rows: &[TimingRow], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "scheme,steps,median_step_seconds,total_seconds,total_iterations")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.scheme, r.steps, r.median_step_seconds, r.total_seconds, r.total_iterations
        )?;
    }
    Ok(())
}
