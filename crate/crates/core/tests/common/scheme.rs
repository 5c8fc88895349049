//! Dense block solves of one step of every scheme, written out directly on
//! the assembled forms.

use biot_core::assembly::{assemble_load, FormMatrices, MaterialParams};
use biot_core::linalg::CsrMatrix;
use biot_core::problems::{
    build_manufactured, build_terzaghi, manufactured_material, Problem, SourceTerm, TimeProfile,
};
use biot_core::schemes::{
    step_additive, step_coupled_theta, step_fixed_stress, step_undrained, SchemeConfig, SchemeKind, TimeState,
};

type Dense = Vec<Vec<f64>>;

fn dense(m: &CsrMatrix) -> Dense {
    m.to_dense()
}

fn zeros(r: usize, c: usize) -> Dense {
    vec![vec![0.0; c]; r]
}

fn add(a: &Dense, b: &Dense, sb: f64) -> Dense {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + sb * y).collect())
        .collect()
}

fn scale(a: &Dense, s: f64) -> Dense {
    a.iter().map(|r| r.iter().map(|v| v * s).collect()).collect()
}

fn vscale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|v| v * s).collect()
}

fn mul(a: &Dense, x: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

fn matmul(a: &Dense, b: &Dense) -> Dense {
    let m = b[0].len();
    a.iter()
        .map(|r| (0..m).map(|j| r.iter().zip(b).map(|(x, rb)| x * rb[j]).sum()).collect())
        .collect()
}

fn transpose(a: &Dense) -> Dense {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

fn block(b: [[&Dense; 2]; 2]) -> Dense {
    let mut out = Vec::new();
    for row in b {
        for i in 0..row[0].len() {
            let mut r = row[0][i].clone();
            r.extend_from_slice(&row[1][i]);
            out.push(r);
        }
    }
    out
}

fn vsub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn vadd(a: &[f64], b: &[f64], sb: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + sb * y).collect()
}

fn cat(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().chain(b).copied().collect()
}

/// Row replacement for Dirichlet dofs, then Gaussian elimination with
/// partial pivoting.
fn solve_dirichlet(mut k: Dense, mut rhs: Vec<f64>, fixed: &[(usize, f64)]) -> Vec<f64> {
    let n = rhs.len();
    for &(d, v) in fixed {
        k[d] = vec![0.0; n];
        k[d][d] = 1.0;
        rhs[d] = v;
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&a, &b| k[a][col].abs().total_cmp(&k[b][col].abs()))
            .unwrap();
        k.swap(col, piv);
        rhs.swap(col, piv);
        let d = k[col][col];
        assert!(d != 0.0, "singular oracle system");
        for r in col + 1..n {
            let f = k[r][col] / d;
            if f != 0.0 {
                for c in col..n {
                    k[r][c] -= f * k[col][c];
                }
                rhs[r] -= f * rhs[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| k[i][j] * x[j]).sum();
        x[i] = (rhs[i] - s) / k[i][i];
    }
    x
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

pub struct Fixture {
    pub problem: Problem,
    pub forms: FormMatrices,
    a: Dense,
    g: Dense,
    d: Dense,
    c: Dense,
    b: Dense,
    pub state: TimeState,
}

impl Fixture {
    pub fn new(problem: Problem, step: usize) -> Self {
        let forms = problem.assemble().unwrap();
        let (nu, np) = (problem.dofs_u.n_dofs(), problem.dofs_p.n_dofs());
        let wave = |n: usize, phase: f64| -> Vec<f64> { (0..n).map(|i| (1.3 * i as f64 + phase).sin()).collect() };
        let state = TimeState {
            u_curr: wave(nu, 0.1),
            p_curr: wave(np, 0.7),
            u_prev: wave(nu, 0.4),
            p_prev: wave(np, 1.9),
            time: 0.3,
            step,
        };
        Self {
            a: dense(&forms.a),
            g: dense(&forms.g),
            d: dense(&forms.d),
            c: dense(&forms.c),
            b: dense(&forms.b),
            forms,
            problem,
            state,
        }
    }

    fn nu(&self) -> usize {
        self.problem.dofs_u.n_dofs()
    }

    fn np(&self) -> usize {
        self.problem.dofs_p.n_dofs()
    }

    fn load(&self, t: f64) -> Vec<f64> {
        assemble_load(
            &self.problem.mesh,
            &self.problem.dofs_p,
            |x, s| self.problem.source(x, s),
            t,
        )
        .unwrap()
    }

    fn fixed_u(&self, t: f64) -> Vec<(usize, f64)> {
        let c = self.problem.u_constraints(t).unwrap();
        c.dofs().iter().copied().zip(c.values().iter().copied()).collect()
    }

    fn fixed_p(&self, t: f64, offset: usize) -> Vec<(usize, f64)> {
        let c = self.problem.p_constraints(t).unwrap();
        c.dofs()
            .iter()
            .map(|d| d + offset)
            .zip(c.values().iter().copied())
            .collect()
    }

    fn fixed_all(&self, t: f64) -> Vec<(usize, f64)> {
        let mut f = self.fixed_u(t);
        f.extend(self.fixed_p(t, self.nu()));
        f
    }

    fn split(&self, w: Vec<f64>) -> (Vec<f64>, Vec<f64>) {
        let mut u = w;
        let p = u.split_off(self.nu());
        (u, p)
    }

    pub fn coupled(&self, tau: f64, theta: f64) -> (Vec<f64>, Vec<f64>) {
        let s = &self.state;
        let t1 = s.time + tau;
        let k = block([
            [&self.a, &self.g],
            [
                &scale(&self.d, 1.0 / tau),
                &add(&scale(&self.c, 1.0 / tau), &self.b, theta),
            ],
        ]);
        let mut rp = vadd(
            &mul(&scale(&self.d, 1.0 / tau), &s.u_curr),
            &mul(&self.c, &s.p_curr),
            1.0 / tau,
        );
        rp = vadd(&rp, &mul(&self.b, &s.p_curr), -(1.0 - theta));
        rp = vadd(&rp, &self.load(theta * t1 + (1.0 - theta) * s.time), 1.0);
        let rhs = cat(&vec![0.0; self.nu()], &rp);
        self.split(solve_dirichlet(k, rhs, &self.fixed_all(t1)))
    }

    /// `𝔹₀(Uⁿ⁺¹−Uⁿ)/τ + 𝔹₁(Uⁿ−Uⁿ⁻¹)/τ + 𝔸(θ₁Uⁿ⁺¹ + (1−θ₁−θ₂)Uⁿ + θ₂Uⁿ⁻¹) = F`
    pub fn additive(&self, kind: SchemeKind, tau: f64, theta1: f64, theta2: f64) -> (Vec<f64>, Vec<f64>) {
        let s = &self.state;
        let (nu, np) = (self.nu(), self.np());
        let zu = zeros(nu, np);
        let zp = zeros(np, nu);
        let zuu = zeros(nu, nu);
        let bb = block([[&self.a, &self.g], [&self.d, &self.c]]);
        let aa = block([[&zuu, &zu], [&zp, &self.b]]);
        let b0 = match kind {
            SchemeKind::AdditiveD => block([[&self.a, &zu], [&zp, &self.c]]),
            SchemeKind::AdditiveL => block([[&self.a, &zu], [&self.d, &self.c]]),
            SchemeKind::AdditiveU => block([[&self.a, &self.g], [&zp, &self.c]]),
            _ => unreachable!(),
        };
        let b1 = add(&bb, &b0, -1.0);
        let un = cat(&s.u_curr, &s.p_curr);
        let um = cat(&s.u_prev, &s.p_prev);
        let k = add(&scale(&b0, 1.0 / tau), &aa, theta1);
        let mut rhs = vscale(&mul(&b0, &un), 1.0 / tau);
        rhs = vadd(&rhs, &mul(&b1, &vsub(&un, &um)), -1.0 / tau);
        let mix: Vec<f64> = un
            .iter()
            .zip(&um)
            .map(|(x, y)| (1.0 - theta1 - theta2) * x + theta2 * y)
            .collect();
        rhs = vadd(&rhs, &mul(&aa, &mix), -1.0);
        rhs = vadd(&rhs, &cat(&vec![0.0; nu], &self.load(s.time + tau)), 1.0);
        self.split(solve_dirichlet(k, rhs, &self.fixed_all(s.time + tau)))
    }

    pub fn undrained(&self, tau: f64, beta: f64) -> (Vec<f64>, Vec<f64>) {
        let s = &self.state;
        let t1 = s.time + tau;
        let alpha_div = self.problem.config.material.alpha_div;
        let d0 = scale(&self.d, 1.0 / alpha_div);
        let inv_lumped: Dense = (0..self.np())
            .map(|i| {
                let mut r = vec![0.0; self.np()];
                r[i] = beta / self.c[i].iter().sum::<f64>();
                r
            })
            .collect();
        let r = matmul(&matmul(&transpose(&d0), &inv_lumped), &d0);
        let ru = vadd(&mul(&r, &s.u_curr), &mul(&self.g, &s.p_curr), -1.0);
        let u = solve_dirichlet(add(&self.a, &r, 1.0), ru, &self.fixed_u(t1));
        let mut rp = vadd(&mul(&self.c, &s.p_curr), &mul(&self.d, &vsub(&u, &s.u_curr)), -1.0);
        rp = vscale(&rp, 1.0 / tau);
        rp = vadd(&rp, &self.load(t1), 1.0);
        let p = solve_dirichlet(add(&scale(&self.c, 1.0 / tau), &self.b, 1.0), rp, &self.fixed_p(t1, 0));
        (u, p)
    }

    pub fn fixed_stress(&self, tau: f64, beta: f64) -> (Vec<f64>, Vec<f64>) {
        let s = &self.state;
        let t1 = s.time + tau;
        let m = &self.problem.config.material;
        // uniform material: the unweighted mass is C / S
        let ms = scale(&self.c, beta / m.k_dr() / m.storage);
        let k = add(&add(&scale(&self.c, 1.0 / tau), &ms, 1.0 / tau), &self.b, 1.0);
        let extrap: Vec<f64> = s.p_curr.iter().zip(&s.p_prev).map(|(a, b)| 2.0 * a - b).collect();
        let mut rp = vadd(&mul(&self.c, &s.p_curr), &mul(&ms, &extrap), 1.0);
        rp = vadd(&rp, &mul(&self.d, &vsub(&s.u_curr, &s.u_prev)), -1.0);
        rp = vscale(&rp, 1.0 / tau);
        rp = vadd(&rp, &self.load(t1), 1.0);
        let p = solve_dirichlet(k, rp, &self.fixed_p(t1, 0));
        let ru = vscale(&mul(&self.g, &p), -1.0);
        let u = solve_dirichlet(self.a.clone(), ru, &self.fixed_u(t1));
        (u, p)
    }
}

pub fn manufactured_fixture(step: usize) -> Fixture {
    let cfg = build_manufactured(2, TimeProfile::Sine, manufactured_material());
    let p = Problem::from_config(&cfg).unwrap();
    assert_eq!(p.mesh.n_cells(), 8);
    Fixture::new(p, step)
}

/// Column with natural boundaries, unequal coupling coefficients and a
/// constant source.
pub fn column_fixture(step: usize) -> Fixture {
    let material = MaterialParams {
        mu: 3.0,
        lambda: 2.0,
        storage: 0.5,
        permeability: 0.2,
        fluid_viscosity: 1.0,
        alpha_grad: 0.8,
        alpha_div: 0.6,
    };
    let mut cfg = build_terzaghi(material, 1.0, 1, 4);
    cfg.source = SourceTerm::Constant { value: 0.3 };
    let p = Problem::from_config(&cfg).unwrap();
    assert_eq!(p.mesh.n_cells(), 8);
    Fixture::new(p, step)
}

pub fn config(kind: SchemeKind, tau: f64) -> SchemeConfig {
    SchemeConfig::new(kind, tau, 10.0 * tau).with_tolerance(1e-13)
}

pub fn fixtures(step: usize) -> Vec<(&'static str, Fixture)> {
    vec![
        ("manufactured", manufactured_fixture(step)),
        ("column", column_fixture(step)),
    ]
}

/// Largest relative deviation of a library step from its oracle.
pub fn step_error(got: &TimeState, want: (Vec<f64>, Vec<f64>)) -> f64 {
    rel_err(&got.u_curr, &want.0).max(rel_err(&got.p_curr, &want.1))
}

pub fn coupled_checks() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (name, f) in fixtures(3) {
        for theta in [0.5, 0.75, 1.0] {
            let cfg = config(SchemeKind::CoupledTheta, 0.1).with_theta(theta);
            let got = step_coupled_theta(&f.state, &f.problem, &f.forms, &cfg).unwrap();
            out.push((
                format!("{name} coupled θ={theta}"),
                step_error(&got, f.coupled(0.1, theta)),
            ));
        }
    }
    out
}

pub fn additive_checks() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (name, f) in fixtures(3) {
        for kind in [SchemeKind::AdditiveD, SchemeKind::AdditiveL, SchemeKind::AdditiveU] {
            for (t1, t2) in [(1.0, 0.0), (0.75, 0.25), (0.5, 0.0)] {
                let mut cfg = config(kind, 0.2);
                cfg.theta1 = t1;
                cfg.theta2 = t2;
                let got = step_additive(&f.state, &f.problem, &f.forms, &cfg).unwrap();
                out.push((
                    format!("{name} {kind} θ₁={t1} θ₂={t2}"),
                    step_error(&got, f.additive(kind, 0.2, t1, t2)),
                ));
            }
        }
    }
    out
}

pub fn undrained_checks() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (name, f) in fixtures(3) {
        let m = f.problem.config.material;
        for beta in [None, Some(0.3)] {
            let mut cfg = config(SchemeKind::UndrainedRL, 0.1);
            cfg.beta_reg = beta;
            let got = step_undrained(&f.state, &f.problem, &f.forms, &cfg).unwrap();
            let b = beta.unwrap_or(m.alpha_grad * m.alpha_div);
            out.push((format!("{name} RL β={b}"), step_error(&got, f.undrained(0.1, b))));
        }
    }
    out
}

pub fn fixed_stress_checks() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (name, f) in fixtures(3) {
        let m = f.problem.config.material;
        for beta in [None, Some(2.0)] {
            let mut cfg = config(SchemeKind::FixedStressRU, 0.1);
            cfg.beta_reg = beta;
            let got = step_fixed_stress(&f.state, &f.problem, &f.forms, &cfg).unwrap();
            let b = beta.unwrap_or(m.alpha_grad * m.alpha_div);
            out.push((format!("{name} RU β={b}"), step_error(&got, f.fixed_stress(0.1, b))));
        }
    }
    out
}

/// Three-level schemes start with a coupled step at `θ = θ₁`.
pub fn bootstrap_checks() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (name, f) in fixtures(0) {
        for kind in [
            SchemeKind::AdditiveD,
            SchemeKind::AdditiveL,
            SchemeKind::AdditiveU,
            SchemeKind::FixedStressRU,
        ] {
            let mut cfg = config(kind, 0.1);
            cfg.theta1 = 0.75;
            let got = if kind == SchemeKind::FixedStressRU {
                step_fixed_stress(&f.state, &f.problem, &f.forms, &cfg)
            } else {
                step_additive(&f.state, &f.problem, &f.forms, &cfg)
            }
            .unwrap();
            out.push((
                format!("{name} {kind} bootstrap"),
                step_error(&got, f.coupled(0.1, 0.75)),
            ));
        }
    }
    out
}

pub fn all_checks() -> Vec<(String, f64)> {
    let mut out = coupled_checks();
    out.extend(additive_checks());
    out.extend(undrained_checks());
    out.extend(fixed_stress_checks());
    out.extend(bootstrap_checks());
    out
}
