//! Verification studies: energy audit, operator adjointness, convergence
//! orders and the consolidation column.

use std::time::Instant;

use serde::Serialize;

use crate::assembly::{assemble_weighted_mass, FormMatrices, MaterialParams};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::problems::{
    build_manufactured, build_terzaghi, manufactured_material, terzaghi_pressure, ManufacturedSolution, Problem,
    TestCase, TimeProfile, TERZAGHI_HEIGHT,
};
use crate::schemes::{run_simulation, run_simulation_with, Control, RunOptions, SchemeConfig, SchemeKind, TimeState};
use crate::spaces::{quadrature, DofHandler, SpaceKind, Tabulation};

use super::{error_ep, RunRecord, RunStatus, ERROR_DEGREE};

/// `|u_h − u_e|_{H1}` for a P2 vector field; `grad_e[i][j] = ∂u_i/∂x_j`.
pub fn error_u_h1(mesh: &Mesh, dofs_u: &DofHandler, u: &[f64], grad_e: impl Fn(Point) -> [[f64; 2]; 2]) -> Result<f64> {
    let tab = Tabulation::new(SpaceKind::P2Vector, quadrature(ERROR_DEGREE)?);
    let mut sum = 0.0;
    for cell in 0..mesh.n_cells() {
        let geom = mesh.cell_geometry(cell)?;
        let dofs = dofs_u.cell_dofs(cell);
        for (q, (xi, w)) in tab.rule.points.iter().zip(&tab.rule.weights).enumerate() {
            let mut gh = [[0.0; 2]; 2];
            for (k, g_ref) in tab.gradients[q].iter().enumerate() {
                let g = geom.push_gradient(*g_ref);
                for c in 0..2 {
                    let v = u[dofs[2 * k + c]];
                    gh[c][0] += v * g[0];
                    gh[c][1] += v * g[1];
                }
            }
            let ge = grad_e(geom.map(xi[0], xi[1]));
            let e: f64 = (0..2)
                .flat_map(|i| (0..2).map(move |j| (i, j)))
                .map(|(i, j)| (gh[i][j] - ge[i][j]).powi(2))
                .sum();
            sum += e * w * geom.det;
        }
    }
    Ok(sum.sqrt())
}

/// `log(e_k / e_{k+1}) / log(h_k / h_{k+1})` for consecutive levels.
pub fn observed_orders(h: &[f64], e: &[f64]) -> Vec<f64> {
    h.windows(2)
        .zip(e.windows(2))
        .map(|(h, e)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect()
}

/// Least-squares slope of `log e` against `log h` over all levels.
pub fn fitted_order(h: &[f64], e: &[f64]) -> f64 {
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Energy history `uᵀAu + pᵀCp` of one run.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyAudit {
    pub theta: f64,
    pub energies: Vec<f64>,
    /// Largest `(E_{n+1} − E_n) / E_n` over all steps; negative when the
    /// energy strictly decreases throughout.
    pub worst_relative_increase: f64,
    pub seconds: f64,
}

impl EnergyAudit {
    pub fn nonincreasing(&self, slack: f64) -> bool {
        self.worst_relative_increase <= slack
    }
}

/// Runs the coupled θ scheme and records the energy after every step.
pub fn energy_audit(problem: &Problem, forms: &FormMatrices, config: &SchemeConfig) -> Result<EnergyAudit> {
    if config.kind != SchemeKind::CoupledTheta {
        return Err(Error::Config("the energy audit runs the coupled scheme".into()));
    }
    let start = Instant::now();
    let result = run_simulation(problem, forms, config, &RunOptions::default())?;
    if let Some(e) = result.failure {
        return Err(e);
    }
    let energies: Vec<f64> = result.records.iter().map(|r| r.e_a + r.e_c).collect();
    let worst_relative_increase = energies
        .windows(2)
        .map(|w| (w[1] - w[0]) / w[0].abs().max(f64::MIN_POSITIVE))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(EnergyAudit {
        theta: config.theta,
        energies,
        worst_relative_increase,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// `‖D + Gᵀ‖_max` over dofs away from the boundary, and `‖D‖_max` for scale.
pub fn adjointness_defect(problem: &Problem, forms: &FormMatrices) -> (f64, f64) {
    let iu = problem.dofs_u.interior_dofs(&problem.mesh);
    let ip = problem.dofs_p.interior_dofs(&problem.mesh);
    let d = forms.d.submatrix(&ip, &iu);
    let gt = forms.g.transpose().submatrix(&ip, &iu);
    (d.linear_combination(1.0, &gt, 1.0).max_abs(), forms.d.max_abs())
}

/// Errors of one spatial level at the final time.
#[derive(Debug, Clone, Serialize)]
pub struct SpatialLevel {
    pub n: usize,
    pub h: f64,
    pub tau: f64,
    pub err_p_l2: f64,
    pub err_u_h1: f64,
}

/// Manufactured solution on `n x n` meshes for each `n` in `levels`, with
/// `τ = tau_coarsest · (n_0 / n)²`.
pub fn spatial_convergence(
    levels: &[usize],
    theta: f64,
    tau_coarsest: f64,
    t_max: f64,
    tolerance: f64,
) -> Result<Vec<SpatialLevel>> {
    let n0 = *levels.first().ok_or_else(|| Error::Config("no mesh levels".into()))? as f64;
    levels
        .iter()
        .map(|&n| {
            let r = n0 / n as f64;
            let tau = t_max / (t_max / (tau_coarsest * r * r)).round().max(1.0);
            let cfg = SchemeConfig::new(SchemeKind::CoupledTheta, tau, t_max)
                .with_theta(theta)
                .with_tolerance(tolerance);
            let problem = Problem::from_config(&build_manufactured(n, TimeProfile::Sine, manufactured_material()))?;
            let state = final_state(&problem, &cfg)?;
            let exact = manufactured(&problem)?;
            let t = state.time;
            Ok(SpatialLevel {
                n,
                h: 1.0 / n as f64,
                tau,
                err_p_l2: error_ep(&problem.mesh, &problem.dofs_p, &state.p_curr, |x| exact.pressure(x, t))?,
                err_u_h1: error_u_h1(&problem.mesh, &problem.dofs_u, &state.u_curr, |x| {
                    exact.displacement_gradient(x, t)
                })?,
            })
        })
        .collect()
}

/// Pressure error of one time step size against a reference run.
#[derive(Debug, Clone, Serialize)]
pub struct TemporalLevel {
    pub tau: f64,
    pub err_p_l2: f64,
}

/// Temporal self-convergence on a fixed `n x n` mesh: each `τ` is compared
/// with a run at `τ_min / refine`, so the spatial error cancels.
pub fn temporal_convergence(
    n: usize,
    taus: &[f64],
    theta: f64,
    t_max: f64,
    refine: usize,
    tolerance: f64,
) -> Result<Vec<TemporalLevel>> {
    let problem = Problem::from_config(&build_manufactured(n, TimeProfile::Sine, manufactured_material()))?;
    let mass = assemble_weighted_mass(&problem.mesh, &problem.dofs_p, |_| 1.0)?;
    let run = |tau: f64| -> Result<TimeState> {
        let cfg = SchemeConfig::new(SchemeKind::CoupledTheta, tau, t_max)
            .with_theta(theta)
            .with_tolerance(tolerance);
        if (cfg.n_steps() as f64 * tau - t_max).abs() > 1e-9 * t_max {
            return Err(Error::Config(format!("τ = {tau} does not divide t_max = {t_max}")));
        }
        final_state(&problem, &cfg)
    };
    let tau_min = taus.iter().copied().fold(f64::INFINITY, f64::min);
    let reference = run(tau_min / refine.max(1) as f64)?;
    taus.iter()
        .map(|&tau| {
            let s = run(tau)?;
            let d: Vec<f64> = s.p_curr.iter().zip(&reference.p_curr).map(|(a, b)| a - b).collect();
            Ok(TemporalLevel {
                tau,
                err_p_l2: mass.bilinear(&d, &d).sqrt(),
            })
        })
        .collect()
}

/// Outcome of the stable/unstable comparison of one test case.
#[derive(Debug, Clone, Serialize)]
pub struct DichotomyVerdict {
    pub pass: bool,
    /// One line per scheme: status, final ε_p and its ratio to the coupled run.
    pub lines: Vec<String>,
}

/// Test 1: every scheme completes. Test 2: the additive schemes are flagged
/// or end at least 10x above the coupled error, and the regularized ones
/// complete within 5x of it.
pub fn assess_dichotomy(case: TestCase, records: &[RunRecord]) -> DichotomyVerdict {
    let find = |k: SchemeKind| records.iter().find(|r| r.scheme == k);
    let coupled = find(SchemeKind::CoupledTheta)
        .filter(|r| r.status == RunStatus::Completed)
        .and_then(|r| r.final_eps());
    let mut pass = true;
    let mut lines = Vec::new();
    for kind in SchemeKind::ALL {
        let Some(r) = find(kind) else {
            pass = false;
            lines.push(format!("{kind}: missing"));
            continue;
        };
        let eps = r.final_eps().unwrap_or(f64::NAN);
        let ratio = coupled.map_or(f64::NAN, |c| eps / c);
        let completed = r.status == RunStatus::Completed;
        let ok = match (case, kind) {
            (TestCase::Test1, _) | (_, SchemeKind::CoupledTheta) => completed,
            (TestCase::Test2, SchemeKind::AdditiveD | SchemeKind::AdditiveL | SchemeKind::AdditiveU) => {
                r.is_unstable() || (completed && ratio >= 10.0)
            }
            (TestCase::Test2, _) => completed && ratio <= 5.0,
        };
        pass &= ok;
        let status = match &r.status {
            RunStatus::Completed => "completed".to_string(),
            RunStatus::Unstable => "UNSTABLE".to_string(),
            RunStatus::Failed(e) => format!("failed ({e})"),
        };
        lines.push(format!(
            "{:<3} {status:<9} steps={:<2} eps_p={eps:.3e} ratio={ratio:.2} {}",
            kind.short_name(),
            r.rows.len().saturating_sub(1),
            if ok { "ok" } else { "VIOLATION" }
        ));
    }
    DichotomyVerdict { pass, lines }
}

/// Relative pressure error on the consolidation column at one time.
#[derive(Debug, Clone, Serialize)]
pub struct TerzaghiSample {
    pub time: f64,
    pub rel_l2: f64,
}

/// Settings of the consolidation column study.
#[derive(Debug, Clone, Copy)]
pub struct TerzaghiSetup {
    pub material: MaterialParams,
    pub p0: f64,
    pub nx: usize,
    pub ny: usize,
    pub tau: f64,
    pub theta: f64,
    pub n_terms: usize,
    pub tolerance: f64,
}

/// Runs the column and samples the relative L2 pressure error at `times`,
/// each of which must be a multiple of `τ`.
pub fn terzaghi_study(setup: &TerzaghiSetup, times: &[f64]) -> Result<Vec<TerzaghiSample>> {
    let problem = Problem::from_config(&build_terzaghi(setup.material, setup.p0, setup.nx, setup.ny))?;
    let forms = problem.assemble()?;
    let steps: Vec<usize> = times
        .iter()
        .map(|&t| {
            let n = (t / setup.tau).round();
            if n < 1.0 || (n * setup.tau - t).abs() > 1e-9 * t {
                Err(Error::Config(format!(
                    "sample time {t} is not a multiple of τ = {}",
                    setup.tau
                )))
            } else {
                Ok(n as usize)
            }
        })
        .collect::<Result<_>>()?;
    let last = *steps
        .iter()
        .max()
        .ok_or_else(|| Error::Config("no sample times".into()))?;
    let cfg = SchemeConfig::new(SchemeKind::CoupledTheta, setup.tau, last as f64 * setup.tau)
        .with_theta(setup.theta)
        .with_tolerance(setup.tolerance);
    let mut fields: Vec<Option<Vec<f64>>> = vec![None; times.len()];
    let result = run_simulation_with(&problem, &forms, &cfg, &RunOptions::default(), |state, _| {
        for (slot, &n) in fields.iter_mut().zip(&steps) {
            if state.step == n {
                *slot = Some(state.p_curr.clone());
            }
        }
        Control::Continue
    })?;
    if let Some(e) = result.failure {
        return Err(e);
    }
    let m = setup.material;
    times
        .iter()
        .zip(fields)
        .map(|(&t, p)| {
            let p = p.ok_or_else(|| Error::Config(format!("no state at t = {t}")))?;
            let exact = |x: Point| {
                terzaghi_pressure(&m, setup.p0, TERZAGHI_HEIGHT, TERZAGHI_HEIGHT - x[1], t, setup.n_terms)
                    .unwrap_or(f64::NAN)
            };
            let err = error_ep(&problem.mesh, &problem.dofs_p, &p, exact)?;
            let zero = vec![0.0; p.len()];
            let norm = error_ep(&problem.mesh, &problem.dofs_p, &zero, exact)?;
            Ok(TerzaghiSample {
                time: t,
                rel_l2: err / norm,
            })
        })
        .collect()
}

fn manufactured(problem: &Problem) -> Result<ManufacturedSolution> {
    problem
        .config
        .manufactured
        .ok_or_else(|| Error::Config("problem has no manufactured solution".into()))
}

fn final_state(problem: &Problem, cfg: &SchemeConfig) -> Result<TimeState> {
    let forms = problem.assemble()?;
    let result = run_simulation(problem, &forms, cfg, &RunOptions::default())?;
    match result.failure {
        Some(e) => Err(e),
        None => Ok(result.final_state),
    }
}
