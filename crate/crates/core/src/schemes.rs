//! Time integrators: the weighted coupled scheme, additive D/L/U splittings
//! and the regularized undrained (RL) and fixed-stress (RU) splits.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assembly::{
    assemble_divergence, assemble_load, assemble_weighted_mass, eliminate, Constraints, FormMatrices,
};
use crate::error::{Error, Result};
use crate::linalg::{
    cg_solve_into, gmres_solve_into, lump_rows, norm2, rcm_ordering, CsrMatrix, Ilu0, Preconditioner, SolverReport,
    SolverSettings, DEFAULT_TOLERANCE,
};
use crate::problems::{Problem, SECONDS_PER_DAY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemeKind {
    CoupledTheta,
    AdditiveD,
    AdditiveL,
    AdditiveU,
    UndrainedRL,
    FixedStressRU,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 6] = [
        SchemeKind::CoupledTheta,
        SchemeKind::AdditiveD,
        SchemeKind::AdditiveL,
        SchemeKind::AdditiveU,
        SchemeKind::UndrainedRL,
        SchemeKind::FixedStressRU,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            SchemeKind::CoupledTheta => "coupled",
            SchemeKind::AdditiveD => "D",
            SchemeKind::AdditiveL => "L",
            SchemeKind::AdditiveU => "U",
            SchemeKind::UndrainedRL => "RL",
            SchemeKind::FixedStressRU => "RU",
        }
    }

    /// Needs `U^{n-1}` and therefore a coupled first step.
    pub fn is_three_level(self) -> bool {
        matches!(
            self,
            SchemeKind::AdditiveD | SchemeKind::AdditiveL | SchemeKind::AdditiveU | SchemeKind::FixedStressRU
        )
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let k = match s.trim().to_ascii_lowercase().as_str() {
            "coupled" | "coupledtheta" | "theta" => SchemeKind::CoupledTheta,
            "d" | "additived" => SchemeKind::AdditiveD,
            "l" | "additivel" => SchemeKind::AdditiveL,
            "u" | "additiveu" => SchemeKind::AdditiveU,
            "rl" | "undrained" | "undrainedrl" => SchemeKind::UndrainedRL,
            "ru" | "fixedstress" | "fixed-stress" | "fixedstressru" => SchemeKind::FixedStressRU,
            other => return Err(Error::Config(format!("unknown scheme '{other}'"))),
        };
        Ok(k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    pub theta: f64,
    pub theta1: f64,
    pub theta2: f64,
    /// Seconds.
    pub tau: f64,
    /// Seconds.
    pub t_max: f64,
    /// Regularization strength; `None` means `α_grad · α_div`.
    pub beta_reg: Option<f64>,
    /// Relative tolerance of every linear solve.
    pub tolerance: f64,
}

impl SchemeConfig {
    pub fn new(kind: SchemeKind, tau: f64, t_max: f64) -> Self {
        Self {
            kind,
            theta: 1.0,
            theta1: 1.0,
            theta2: 0.0,
            tau,
            t_max,
            beta_reg: None,
            tolerance: DEFAULT_TOLERANCE,
        }
    }

    pub fn from_days(kind: SchemeKind, tau_days: f64, t_max_days: f64) -> Self {
        Self::new(kind, tau_days * SECONDS_PER_DAY, t_max_days * SECONDS_PER_DAY)
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config("tau must be positive".into()));
        }
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return Err(Error::Config("t_max must be non-negative".into()));
        }
        for (name, v) in [("theta", self.theta), ("theta1", self.theta1)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if !self.theta2.is_finite() {
            return Err(Error::Config("theta2 must be finite".into()));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(Error::Config("tolerance must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Number of whole steps that fit in `t_max`.
    pub fn n_steps(&self) -> usize {
        (self.t_max / self.tau + 1e-9).floor() as usize
    }

    fn solver_settings(&self) -> SolverSettings {
        SolverSettings::with_tolerance(self.tolerance)
    }
}

/// Current and previous time levels.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeState {
    pub u_curr: Vec<f64>,
    pub p_curr: Vec<f64>,
    pub u_prev: Vec<f64>,
    pub p_prev: Vec<f64>,
    /// Seconds.
    pub time: f64,
    pub step: usize,
}

impl TimeState {
    pub fn zeros(n_u: usize, n_p: usize) -> Self {
        Self {
            u_curr: vec![0.0; n_u],
            p_curr: vec![0.0; n_p],
            u_prev: vec![0.0; n_u],
            p_prev: vec![0.0; n_p],
            time: 0.0,
            step: 0,
        }
    }

    fn advance(&self, u: Vec<f64>, p: Vec<f64>, tau: f64) -> Self {
        Self {
            u_prev: self.u_curr.clone(),
            p_prev: self.p_curr.clone(),
            u_curr: u,
            p_curr: p,
            time: self.time + tau,
            step: self.step + 1,
        }
    }
}

/// Lowest residual reduction asked of a solve, relative to its right-hand side.
const RESIDUAL_FLOOR: f64 = 1e-14;

/// A square operator with Dirichlet rows eliminated, scaled, reordered and
/// factored once.
#[derive(Debug)]
struct PreparedSystem {
    full: CsrMatrix,
    /// Scaled, eliminated and permuted operator.
    scaled: CsrMatrix,
    scale: Vec<f64>,
    mask: Vec<bool>,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    ilu: Ilu0,
    symmetric: bool,
}

impl PreparedSystem {
    fn new(full: CsrMatrix, mask: Vec<bool>, symmetric: bool) -> Result<Self> {
        let elim = eliminate(&full, &mask)?;
        let scale: Vec<f64> = elim
            .diagonal()
            .iter()
            .map(|d| if *d != 0.0 { 1.0 / d.abs().sqrt() } else { 1.0 })
            .collect();
        let scaled = elim.scale_rows_cols(&scale, &scale);
        let perm = rcm_ordering(&scaled);
        let scaled = scaled.permute_symmetric(&perm);
        let ilu = Ilu0::factor(&scaled)?;
        if ilu.shifted_pivots() > 0 {
            log::debug!("ILU(0): {} pivots shifted", ilu.shifted_pivots());
        }
        Ok(Self {
            full,
            scaled,
            scale,
            mask,
            perm,
            ilu,
            symmetric,
        })
    }

    /// Scaled, permuted `rhs − full·x` with constrained rows zeroed.
    fn residual(&self, rhs: &[f64], x: &[f64]) -> Vec<f64> {
        let mut r = rhs.to_vec();
        self.full.spmv_add(-1.0, x, &mut r);
        self.perm
            .iter()
            .map(|&i| if self.mask[i] { 0.0 } else { r[i] * self.scale[i] })
            .collect()
    }

    /// Solves `full x = rhs` for the free dofs; `x` enters with the
    /// constrained values and an initial guess elsewhere, and leaves with
    /// the solution. The Krylov solver works on the correction, so the
    /// tolerance is a reduction of the guess's residual, floored at
    /// `RESIDUAL_FLOOR` times the right-hand side of the eliminated system.
    fn solve(&self, rhs: &[f64], x: &mut [f64], settings: &SolverSettings, stage: &str) -> Result<SolverReport> {
        let r = self.residual(rhs, x);
        let r_norm = norm2(&r);
        if r_norm == 0.0 {
            return Ok(SolverReport {
                iterations: 0,
                final_residual: 0.0,
                converged: true,
            });
        }
        let lifted: Vec<f64> = x
            .iter()
            .zip(&self.mask)
            .map(|(v, m)| if *m { *v } else { 0.0 })
            .collect();
        let b_norm = norm2(&self.residual(rhs, &lifted));
        let settings = SolverSettings {
            tolerance: settings.tolerance.max(RESIDUAL_FLOOR * b_norm / r_norm),
            ..*settings
        };
        if settings.tolerance >= 1.0 {
            return Ok(SolverReport {
                iterations: 0,
                final_residual: 1.0,
                converged: true,
            });
        }
        let settings = &settings;
        let mut y = vec![0.0; r.len()];
        let precond: &dyn Preconditioner = &self.ilu;
        let report = if self.symmetric {
            match cg_solve_into(&self.scaled, &r, &mut y, settings, Some(precond)) {
                Ok(rep) if rep.converged => rep,
                outcome => {
                    log::debug!("{stage}: CG gave {outcome:?}; retrying with GMRES");
                    y.iter_mut().for_each(|v| *v = 0.0);
                    let rep = gmres_solve_into(&self.scaled, &r, &mut y, settings, Some(precond))?;
                    SolverReport {
                        iterations: rep.iterations + outcome.map_or(0, |o| o.iterations),
                        ..rep
                    }
                }
            }
        } else {
            gmres_solve_into(&self.scaled, &r, &mut y, settings, Some(precond))?
        };
        if !report.converged || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolverFailed {
                stage: stage.into(),
                report,
            });
        }
        for (yi, &i) in y.iter().zip(&self.perm) {
            x[i] += yi * self.scale[i];
        }
        Ok(report)
    }
}

/// Initial guess `2 xⁿ − xⁿ⁻¹` for the next level.
fn extrapolate(curr: &[f64], prev: &[f64]) -> Vec<f64> {
    curr.iter().zip(prev).map(|(c, p)| 2.0 * c - p).collect()
}

/// Solver activity in one step.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StepInfo {
    pub reports: Vec<SolverReport>,
    /// The step was a coupled bootstrap of a three-level scheme.
    pub bootstrap: bool,
}

impl StepInfo {
    pub fn iterations(&self) -> usize {
        self.reports.iter().map(|r| r.iterations).sum()
    }
}

/// Elastic solve `A u = rhs` used for the initial state.
pub fn initialize(problem: &Problem, forms: &FormMatrices, tolerance: f64) -> Result<TimeState> {
    let p0 = problem.initial_pressure()?;
    let uc = problem.u_constraints(0.0)?;
    let sys = PreparedSystem::new(forms.a.clone(), uc.mask(problem.dofs_u.n_dofs()), true)?;
    let mut rhs = vec![0.0; problem.dofs_u.n_dofs()];
    forms.g.spmv_add(-1.0, &p0, &mut rhs);
    let mut u = vec![0.0; rhs.len()];
    uc.impose(&mut u);
    sys.solve(
        &rhs,
        &mut u,
        &SolverSettings::with_tolerance(tolerance),
        "initial elasticity",
    )?;
    Ok(TimeState {
        u_prev: u.clone(),
        p_prev: p0.clone(),
        u_curr: u,
        p_curr: p0,
        time: 0.0,
        step: 0,
    })
}

/// `(uᵀAu, pᵀCp)` on the unconstrained operators.
pub fn energy(state: &TimeState, forms: &FormMatrices) -> (f64, f64) {
    (
        forms.a.bilinear(&state.u_curr, &state.u_curr),
        forms.c.bilinear(&state.p_curr, &state.p_curr),
    )
}

/// One scheme, prepared for repeated steps on a fixed problem.
pub struct Stepper<'p> {
    problem: &'p Problem,
    forms: &'p FormMatrices,
    config: SchemeConfig,
    settings: SolverSettings,
    u_mask: Vec<bool>,
    p_mask: Vec<bool>,
    coupled: Option<PreparedSystem>,
    elastic: Option<PreparedSystem>,
    pressure: Option<PreparedSystem>,
    /// `β D₀ᵀ C_L⁻¹ D₀` (RL) or `β/K_dr`-weighted mass (RU).
    regularization: Option<CsrMatrix>,
}

impl<'p> Stepper<'p> {
    pub fn new(problem: &'p Problem, forms: &'p FormMatrices, config: SchemeConfig) -> Result<Self> {
        config.validate()?;
        let (nu, np) = (problem.dofs_u.n_dofs(), problem.dofs_p.n_dofs());
        let u_mask = problem.u_constraints(0.0)?.mask(nu);
        let p_mask = problem.p_constraints(0.0)?.mask(np);
        let tau = config.tau;
        let beta = config
            .beta_reg
            .unwrap_or(problem.config.material.alpha_grad * problem.config.material.alpha_div);
        let mut s = Self {
            problem,
            forms,
            config,
            settings: config.solver_settings(),
            u_mask,
            p_mask,
            coupled: None,
            elastic: None,
            pressure: None,
            regularization: None,
        };
        let kind = config.kind;
        if kind == SchemeKind::CoupledTheta {
            s.coupled = Some(s.prepare_coupled(config.theta)?);
        } else if kind.is_three_level() {
            s.coupled = Some(s.prepare_coupled(config.theta1)?);
        }
        match kind {
            SchemeKind::CoupledTheta => {}
            SchemeKind::AdditiveD | SchemeKind::AdditiveL | SchemeKind::AdditiveU => {
                s.elastic = Some(PreparedSystem::new(forms.a.clone(), s.u_mask.clone(), true)?);
                let m = forms.c.linear_combination(1.0 / tau, &forms.b, config.theta1);
                s.pressure = Some(PreparedSystem::new(m, s.p_mask.clone(), true)?);
            }
            SchemeKind::UndrainedRL => {
                let d0 = assemble_divergence(&problem.mesh, &problem.dofs_u, &problem.dofs_p, |_| 1.0)?;
                let cl = lump_rows(&forms.c);
                let inv: Vec<f64> = cl.iter().map(|v| beta / v).collect();
                let r = d0.transpose().matmul(&CsrMatrix::from_diagonal(&inv)).matmul(&d0);
                let m = forms.a.linear_combination(1.0, &r, 1.0);
                s.elastic = Some(PreparedSystem::new(m, s.u_mask.clone(), true)?);
                let mp = forms.c.linear_combination(1.0 / tau, &forms.b, 1.0);
                s.pressure = Some(PreparedSystem::new(mp, s.p_mask.clone(), true)?);
                s.regularization = Some(r);
            }
            SchemeKind::FixedStressRU => {
                let mats = &problem.materials;
                let ms = assemble_weighted_mass(&problem.mesh, &problem.dofs_p, |c| beta / mats[c].k_dr())?;
                let m = forms
                    .c
                    .linear_combination(1.0 / tau, &ms, 1.0 / tau)
                    .linear_combination(1.0, &forms.b, 1.0);
                s.pressure = Some(PreparedSystem::new(m, s.p_mask.clone(), true)?);
                s.elastic = Some(PreparedSystem::new(forms.a.clone(), s.u_mask.clone(), true)?);
                s.regularization = Some(ms);
            }
        }
        Ok(s)
    }

    /// Block system with the pressure rows multiplied by τ:
    /// `[A, G; D, C + θτB]`. With `D = −Gᵀ` its symmetric part is positive
    /// definite, which the Jacobi scaling preserves.
    fn prepare_coupled(&self, theta: f64) -> Result<PreparedSystem> {
        let f = self.forms;
        let tau = self.config.tau;
        let (nu, np) = (self.u_mask.len(), self.p_mask.len());
        let pp = f.c.linear_combination(1.0, &f.b, theta * tau);
        let m = CsrMatrix::block2x2([[Some(&f.a), Some(&f.g)], [Some(&f.d), Some(&pp)]], [nu, np], [nu, np]);
        let mask = self.u_mask.iter().chain(&self.p_mask).copied().collect();
        PreparedSystem::new(m, mask, false)
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    fn load(&self, t: f64) -> Result<Vec<f64>> {
        if self.problem.has_source() {
            assemble_load(
                &self.problem.mesh,
                &self.problem.dofs_p,
                |x, s| self.problem.source(x, s),
                t,
            )
        } else {
            Ok(vec![0.0; self.p_mask.len()])
        }
    }

    fn constraints(&self, t: f64) -> Result<(Constraints, Constraints)> {
        Ok((self.problem.u_constraints(t)?, self.problem.p_constraints(t)?))
    }

    /// Advances one step.
    pub fn step(&self, state: &TimeState) -> Result<(TimeState, StepInfo)> {
        let kind = self.config.kind;
        if kind == SchemeKind::CoupledTheta {
            return self.step_coupled(state, self.config.theta);
        }
        if kind.is_three_level() && state.step == 0 {
            let (next, mut info) = self.step_coupled(state, self.config.theta1)?;
            info.bootstrap = true;
            return Ok((next, info));
        }
        match kind {
            SchemeKind::AdditiveD | SchemeKind::AdditiveL | SchemeKind::AdditiveU => self.step_additive(state),
            SchemeKind::UndrainedRL => self.step_undrained(state),
            SchemeKind::FixedStressRU => self.step_fixed_stress(state),
            SchemeKind::CoupledTheta => unreachable!(),
        }
    }

    fn step_coupled(&self, state: &TimeState, theta: f64) -> Result<(TimeState, StepInfo)> {
        let f = self.forms;
        let tau = self.config.tau;
        let t_next = state.time + tau;
        let (nu, np) = (self.u_mask.len(), self.p_mask.len());
        let load = self.load(theta * t_next + (1.0 - theta) * state.time)?;

        let mut rhs = vec![0.0; nu + np];
        {
            let rp = &mut rhs[nu..];
            f.d.spmv_add(1.0 / tau, &state.u_curr, rp);
            f.c.spmv_add(1.0 / tau, &state.p_curr, rp);
            f.b.spmv_add(-(1.0 - theta), &state.p_curr, rp);
            rp.iter_mut().zip(&load).for_each(|(r, l)| *r += l);
            rp.iter_mut().for_each(|r| *r *= tau);
        }
        let (uc, pc) = self.constraints(t_next)?;
        let mut x = extrapolate(&state.u_curr, &state.u_prev);
        x.extend(extrapolate(&state.p_curr, &state.p_prev));
        uc.impose(&mut x[..nu]);
        pc.impose(&mut x[nu..]);
        let sys = self.coupled.as_ref().expect("coupled system prepared");
        let report = sys.solve(&rhs, &mut x, &self.settings, "coupled block")?;
        let p = x.split_off(nu);
        Ok((
            state.advance(x, p, tau),
            StepInfo {
                reports: vec![report],
                bootstrap: false,
            },
        ))
    }

    fn step_additive(&self, state: &TimeState) -> Result<(TimeState, StepInfo)> {
        let f = self.forms;
        let c = &self.config;
        let tau = c.tau;
        let t_next = state.time + tau;
        let (uc, pc) = self.constraints(t_next)?;
        let du: Vec<f64> = state.u_curr.iter().zip(&state.u_prev).map(|(a, b)| a - b).collect();
        let dp: Vec<f64> = state.p_curr.iter().zip(&state.p_prev).map(|(a, b)| a - b).collect();
        let load = self.load(t_next)?;

        // pressure rhs common to all splittings, divided by τ:
        // C pⁿ/τ − B((1−θ₁−θ₂)pⁿ + θ₂pⁿ⁻¹) + l
        let mut rp = load;
        f.c.spmv_add(1.0 / tau, &state.p_curr, &mut rp);
        f.b.spmv_add(-(1.0 - c.theta1 - c.theta2), &state.p_curr, &mut rp);
        f.b.spmv_add(-c.theta2, &state.p_prev, &mut rp);

        let elastic = self.elastic.as_ref().expect("elastic system prepared");
        let pressure = self.pressure.as_ref().expect("pressure system prepared");
        let mut reports = Vec::with_capacity(2);
        let mut u = extrapolate(&state.u_curr, &state.u_prev);
        uc.impose(&mut u);
        let mut p = extrapolate(&state.p_curr, &state.p_prev);
        pc.impose(&mut p);

        match c.kind {
            SchemeKind::AdditiveD | SchemeKind::AdditiveL => {
                let mut ru = f.a.spmv(&state.u_curr);
                f.g.spmv_add(-1.0, &dp, &mut ru);
                reports.push(elastic.solve(&ru, &mut u, &self.settings, "displacement")?);
                if c.kind == SchemeKind::AdditiveD {
                    f.d.spmv_add(-1.0 / tau, &du, &mut rp);
                } else {
                    let dnew: Vec<f64> = u.iter().zip(&state.u_curr).map(|(a, b)| a - b).collect();
                    f.d.spmv_add(-1.0 / tau, &dnew, &mut rp);
                }
                reports.push(pressure.solve(&rp, &mut p, &self.settings, "pressure")?);
            }
            SchemeKind::AdditiveU => {
                f.d.spmv_add(-1.0 / tau, &du, &mut rp);
                reports.push(pressure.solve(&rp, &mut p, &self.settings, "pressure")?);
                let mut ru = f.a.spmv(&state.u_curr);
                let dpn: Vec<f64> = p.iter().zip(&state.p_curr).map(|(a, b)| a - b).collect();
                f.g.spmv_add(-1.0, &dpn, &mut ru);
                reports.push(elastic.solve(&ru, &mut u, &self.settings, "displacement")?);
            }
            _ => unreachable!(),
        }
        Ok((
            state.advance(u, p, tau),
            StepInfo {
                reports,
                bootstrap: false,
            },
        ))
    }

    fn step_undrained(&self, state: &TimeState) -> Result<(TimeState, StepInfo)> {
        let f = self.forms;
        let tau = self.config.tau;
        let t_next = state.time + tau;
        let (uc, pc) = self.constraints(t_next)?;
        let r = self.regularization.as_ref().expect("regularization prepared");

        let mut ru = r.spmv(&state.u_curr);
        f.g.spmv_add(-1.0, &state.p_curr, &mut ru);
        let mut u = extrapolate(&state.u_curr, &state.u_prev);
        uc.impose(&mut u);
        let elastic = self.elastic.as_ref().expect("elastic system prepared");
        let r1 = elastic.solve(&ru, &mut u, &self.settings, "regularized displacement")?;

        let mut rp = self.load(t_next)?;
        f.c.spmv_add(1.0 / tau, &state.p_curr, &mut rp);
        let dnew: Vec<f64> = u.iter().zip(&state.u_curr).map(|(a, b)| a - b).collect();
        f.d.spmv_add(-1.0 / tau, &dnew, &mut rp);
        let mut p = extrapolate(&state.p_curr, &state.p_prev);
        pc.impose(&mut p);
        let pressure = self.pressure.as_ref().expect("pressure system prepared");
        let r2 = pressure.solve(&rp, &mut p, &self.settings, "pressure")?;
        Ok((
            state.advance(u, p, tau),
            StepInfo {
                reports: vec![r1, r2],
                bootstrap: false,
            },
        ))
    }

    fn step_fixed_stress(&self, state: &TimeState) -> Result<(TimeState, StepInfo)> {
        let f = self.forms;
        let tau = self.config.tau;
        let t_next = state.time + tau;
        let (uc, pc) = self.constraints(t_next)?;
        let ms = self.regularization.as_ref().expect("regularization prepared");

        let mut rp = self.load(t_next)?;
        f.c.spmv_add(1.0 / tau, &state.p_curr, &mut rp);
        let extrap: Vec<f64> = state
            .p_curr
            .iter()
            .zip(&state.p_prev)
            .map(|(a, b)| 2.0 * a - b)
            .collect();
        ms.spmv_add(1.0 / tau, &extrap, &mut rp);
        let du: Vec<f64> = state.u_curr.iter().zip(&state.u_prev).map(|(a, b)| a - b).collect();
        f.d.spmv_add(-1.0 / tau, &du, &mut rp);
        let mut p = extrapolate(&state.p_curr, &state.p_prev);
        pc.impose(&mut p);
        let pressure = self.pressure.as_ref().expect("pressure system prepared");
        let r1 = pressure.solve(&rp, &mut p, &self.settings, "stabilized pressure")?;

        let mut ru = vec![0.0; self.u_mask.len()];
        f.g.spmv_add(-1.0, &p, &mut ru);
        let mut u = extrapolate(&state.u_curr, &state.u_prev);
        uc.impose(&mut u);
        let elastic = self.elastic.as_ref().expect("elastic system prepared");
        let r2 = elastic.solve(&ru, &mut u, &self.settings, "displacement")?;
        Ok((
            state.advance(u, p, tau),
            StepInfo {
                reports: vec![r1, r2],
                bootstrap: false,
            },
        ))
    }
}

fn single_step(
    state: &TimeState,
    problem: &Problem,
    forms: &FormMatrices,
    config: &SchemeConfig,
    allowed: &[SchemeKind],
) -> Result<TimeState> {
    if !allowed.contains(&config.kind) {
        return Err(Error::Config(format!("scheme {} not valid for this step", config.kind)));
    }
    Ok(Stepper::new(problem, forms, *config)?.step(state)?.0)
}

/// One step of the weighted coupled scheme.
pub fn step_coupled_theta(
    state: &TimeState,
    problem: &Problem,
    forms: &FormMatrices,
    config: &SchemeConfig,
) -> Result<TimeState> {
    single_step(state, problem, forms, config, &[SchemeKind::CoupledTheta])
}

/// One step of an additive splitting (a coupled bootstrap when `state.step == 0`).
pub fn step_additive(
    state: &TimeState,
    problem: &Problem,
    forms: &FormMatrices,
    config: &SchemeConfig,
) -> Result<TimeState> {
    single_step(
        state,
        problem,
        forms,
        config,
        &[SchemeKind::AdditiveD, SchemeKind::AdditiveL, SchemeKind::AdditiveU],
    )
}

pub fn step_undrained(
    state: &TimeState,
    problem: &Problem,
    forms: &FormMatrices,
    config: &SchemeConfig,
) -> Result<TimeState> {
    single_step(state, problem, forms, config, &[SchemeKind::UndrainedRL])
}

pub fn step_fixed_stress(
    state: &TimeState,
    problem: &Problem,
    forms: &FormMatrices,
    config: &SchemeConfig,
) -> Result<TimeState> {
    single_step(state, problem, forms, config, &[SchemeKind::FixedStressRU])
}

/// Per-step summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    /// Seconds.
    pub time: f64,
    pub e_a: f64,
    pub e_c: f64,
    pub iterations: usize,
    pub reports: Vec<SolverReport>,
    pub bootstrap: bool,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Store full fields every this many steps (the initial state is step 0).
    pub snapshot_every: Option<usize>,
}

/// Result of a run; `failure` is set when a step aborted, and every record
/// before it is kept.
#[derive(Debug)]
pub struct SimulationResult {
    pub config: SchemeConfig,
    /// Record 0 is the initial state.
    pub records: Vec<StepRecord>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: TimeState,
    pub failure: Option<Error>,
    /// The observer stopped the run early.
    pub stopped: bool,
}

pub fn run_simulation(
    problem: &Problem,
    forms: &FormMatrices,
    config: &SchemeConfig,
    options: &RunOptions,
) -> Result<SimulationResult> {
    run_simulation_with(problem, forms, config, options, |_, _| Control::Continue)
}

/// Runs a simulation, calling `observer` after the initial state and each step.
pub fn run_simulation_with(
    problem: &Problem,
    forms: &FormMatrices,
    config: &SchemeConfig,
    options: &RunOptions,
    mut observer: impl FnMut(&TimeState, &StepRecord) -> Control,
) -> Result<SimulationResult> {
    let stepper = Stepper::new(problem, forms, *config)?;
    let mut state = initialize(problem, forms, config.tolerance)?;
    let (e_a, e_c) = energy(&state, forms);
    let first = StepRecord {
        step: 0,
        time: 0.0,
        e_a,
        e_c,
        iterations: 0,
        reports: Vec::new(),
        bootstrap: false,
        wall_seconds: 0.0,
    };
    let mut snapshots = Vec::new();
    let snap = |s: &TimeState, out: &mut Vec<Snapshot>| {
        if options.snapshot_every.is_some_and(|k| k > 0 && s.step.is_multiple_of(k)) {
            out.push(Snapshot {
                step: s.step,
                time: s.time,
                u: s.u_curr.clone(),
                p: s.p_curr.clone(),
            });
        }
    };
    snap(&state, &mut snapshots);
    let mut stopped = observer(&state, &first) == Control::Stop;
    let mut records = vec![first];
    let mut failure = None;
    if !stopped {
        for n in 0..config.n_steps() {
            let start = Instant::now();
            let (next, info) = match stepper.step(&state) {
                Ok(v) => v,
                Err(e) => {
                    log::warn!("{}: step {} failed: {e}", config.kind, n + 1);
                    failure = Some(e);
                    break;
                }
            };
            let wall_seconds = start.elapsed().as_secs_f64();
            // exact multiples avoid drift from repeated addition
            state = TimeState {
                time: (n + 1) as f64 * config.tau,
                ..next
            };
            let (e_a, e_c) = energy(&state, forms);
            let rec = StepRecord {
                step: state.step,
                time: state.time,
                e_a,
                e_c,
                iterations: info.iterations(),
                reports: info.reports,
                bootstrap: info.bootstrap,
                wall_seconds,
            };
            snap(&state, &mut snapshots);
            let ctl = observer(&state, &rec);
            records.push(rec);
            if ctl == Control::Stop {
                stopped = true;
                break;
            }
        }
    }
    Ok(SimulationResult {
        config: *config,
        records,
        snapshots,
        final_state: state,
        failure,
        stopped,
    })
}
