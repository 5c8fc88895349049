//! Problem definitions: the reservoir test cases, a manufactured solution and a
//! Terzaghi consolidation column.

use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::assembly::{Constraints, FormMatrices, MaterialParams};
use crate::error::{Error, Result};
use crate::linalg::{lanczos_extreme_ritz, CsrMatrix};
use crate::mesh::{self, Mesh, Point, ReservoirGeometry, Tags};
use crate::spaces::{build_dof_handler, DofHandler, SpaceKind};

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Approximate cell count of the coarse reservoir mesh.
pub const COARSE_CELLS: usize = 10_000;
/// Approximate cell count of the fine (benchmark) reservoir mesh.
pub const FINE_CELLS: usize = 40_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeshSource {
    Gmsh {
        path: PathBuf,
    },
    /// 100 m x 100 m square with injector and producer holes.
    Reservoir {
        target_cells: usize,
    },
    Rectangle {
        nx: usize,
        ny: usize,
        width: f64,
        height: f64,
    },
}

impl MeshSource {
    pub fn build(&self) -> Result<Mesh> {
        match self {
            MeshSource::Gmsh { path } => mesh::gmsh::read_gmsh(path),
            MeshSource::Reservoir { target_cells } => mesh::reservoir(&ReservoirGeometry::default(), *target_cells),
            MeshSource::Rectangle { nx, ny, width, height } => {
                if *nx == 0 || *ny == 0 || *width <= 0.0 || *height <= 0.0 {
                    return Err(Error::Config("rectangle needs positive sizes".into()));
                }
                Ok(mesh::structured_rectangle(*nx, *ny, *width, *height))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisplacementBcKind {
    FixedBoth,
    /// `u_x` prescribed, tangential traction free.
    RollerX,
    TractionFree,
    /// Both components from the manufactured solution.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplacementBc {
    pub tag: i32,
    pub kind: DisplacementBcKind,
    #[serde(default)]
    pub values: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PressureBcKind {
    Dirichlet,
    NoFlux,
    /// Value from the manufactured solution.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressureBc {
    pub tag: i32,
    pub kind: PressureBcKind,
    #[serde(default)]
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceTerm {
    Zero,
    Constant { value: f64 },
    Manufactured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeProfile {
    /// `g(t) = t`
    Linear,
    /// `g(t) = sin(2t)`
    Sine,
}

impl TimeProfile {
    fn eval(self, t: f64) -> (f64, f64) {
        match self {
            TimeProfile::Linear => (t, 1.0),
            TimeProfile::Sine => ((2.0 * t).sin(), 2.0 * (2.0 * t).cos()),
        }
    }
}

/// Exact fields on the unit square with `φ = sin(πx) sin(πy)`:
/// `p* = c_p g(t) φ` and `u* = c_u g(t) ∇φ`, where `c_u` balances the
/// displacement equation without a body force.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManufacturedSolution {
    pub amplitude: f64,
    pub profile: TimeProfile,
    pub material: MaterialParams,
}

impl ManufacturedSolution {
    pub fn displacement_amplitude(&self) -> f64 {
        let m = &self.material;
        -m.alpha_grad * self.amplitude / (2.0 * PI * PI * m.k_dr())
    }

    fn phi(x: Point) -> (f64, [f64; 2], [[f64; 2]; 2]) {
        let (sx, cx) = (PI * x[0]).sin_cos();
        let (sy, cy) = (PI * x[1]).sin_cos();
        let hess = [
            [-PI * PI * sx * sy, PI * PI * cx * cy],
            [PI * PI * cx * cy, -PI * PI * sx * sy],
        ];
        (sx * sy, [PI * cx * sy, PI * sx * cy], hess)
    }

    pub fn pressure(&self, x: Point, t: f64) -> f64 {
        self.amplitude * self.profile.eval(t).0 * Self::phi(x).0
    }

    pub fn pressure_gradient(&self, x: Point, t: f64) -> [f64; 2] {
        let g = self.amplitude * self.profile.eval(t).0;
        Self::phi(x).1.map(|v| g * v)
    }

    pub fn displacement(&self, x: Point, t: f64) -> [f64; 2] {
        let g = self.displacement_amplitude() * self.profile.eval(t).0;
        Self::phi(x).1.map(|v| g * v)
    }

    /// `∂u_i/∂x_j`
    pub fn displacement_gradient(&self, x: Point, t: f64) -> [[f64; 2]; 2] {
        let g = self.displacement_amplitude() * self.profile.eval(t).0;
        Self::phi(x).2.map(|row| row.map(|v| g * v))
    }

    /// `f = α_div ∂_t div u* + S ∂_t p* − (k/ν) Δp*`
    pub fn source(&self, x: Point, t: f64) -> f64 {
        let m = &self.material;
        let (g, dg) = self.profile.eval(t);
        let phi = Self::phi(x).0;
        let lap = -2.0 * PI * PI * phi;
        m.alpha_div * self.displacement_amplitude() * dg * lap + m.storage * self.amplitude * dg * phi
            - m.mobility() * self.amplitude * g * lap
    }
}

/// Unit annotations written next to the configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub length: String,
    pub time: String,
    pub pressure: String,
    pub moduli: String,
    pub storage: String,
    pub permeability: String,
    pub viscosity: String,
}

impl Default for Units {
    fn default() -> Self {
        Self {
            length: "m".into(),
            time: "s".into(),
            pressure: "Pa".into(),
            moduli: "Pa".into(),
            storage: "1/Pa".into(),
            permeability: "m^2".into(),
            viscosity: "Pa*s".into(),
        }
    }
}

/// Material override for cells whose centroid lies in an axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialRegion {
    pub min: Point,
    pub max: Point,
    pub material: MaterialParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub name: String,
    pub mesh: MeshSource,
    pub material: MaterialParams,
    #[serde(default)]
    pub material_regions: Vec<MaterialRegion>,
    pub bc_displacement: Vec<DisplacementBc>,
    pub bc_pressure: Vec<PressureBc>,
    pub p_initial: f64,
    pub source: SourceTerm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manufactured: Option<ManufacturedSolution>,
    #[serde(default)]
    pub units: Units,
}

impl ProblemConfig {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.material.validate()?;
        for r in &self.material_regions {
            r.material.validate()?;
        }
        let needs_exact = self.source == SourceTerm::Manufactured
            || self.bc_displacement.iter().any(|b| b.kind == DisplacementBcKind::Exact)
            || self.bc_pressure.iter().any(|b| b.kind == PressureBcKind::Exact);
        if needs_exact && self.manufactured.is_none() {
            return Err(Error::Config("manufactured data requested but not provided".into()));
        }
        if !self.p_initial.is_finite() {
            return Err(Error::Config("p_initial must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestCase {
    Test1,
    Test2,
}

impl std::str::FromStr for TestCase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "test1" | "1" => Ok(TestCase::Test1),
            "test2" | "2" => Ok(TestCase::Test2),
            other => Err(Error::Config(format!(
                "unknown test case '{other}' (expected test1 or test2)"
            ))),
        }
    }
}

impl TestCase {
    /// Table of reservoir properties; α = 1.
    pub fn material(self) -> MaterialParams {
        let (m, mu, lambda, k) = match self {
            TestCase::Test1 => (5.0e9, 5.0e9, 5.0e9, 1e-17),
            TestCase::Test2 => (50.0e9, 15.0e9, 10.0e9, 1e-18),
        };
        MaterialParams {
            mu,
            lambda,
            storage: 1.0 / m,
            permeability: k,
            fluid_viscosity: 1e-3,
            alpha_grad: 1.0,
            alpha_div: 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TestCase::Test1 => "test1",
            TestCase::Test2 => "test2",
        }
    }
}

pub const INITIAL_PRESSURE: f64 = 10.0e6;
pub const INJECTOR_PRESSURE: f64 = 10.01e6;
pub const PRODUCER_PRESSURE: f64 = 9.99e6;

fn reservoir_displacement_bcs() -> Vec<DisplacementBc> {
    let bc = |tag, kind| DisplacementBc {
        tag,
        kind,
        values: [0.0; 2],
    };
    vec![
        bc(Tags::TOP, DisplacementBcKind::TractionFree),
        bc(Tags::SIDES, DisplacementBcKind::RollerX),
        bc(Tags::BOTTOM, DisplacementBcKind::FixedBoth),
        bc(Tags::INJECTOR, DisplacementBcKind::TractionFree),
        bc(Tags::PRODUCER, DisplacementBcKind::TractionFree),
    ]
}

/// Reservoir test case on a mesh of roughly `target_cells` cells.
pub fn build_test_case(id: TestCase, target_cells: usize) -> ProblemConfig {
    let pbc = |tag, kind, value| PressureBc { tag, kind, value };
    ProblemConfig {
        name: id.name().into(),
        mesh: MeshSource::Reservoir { target_cells },
        material: id.material(),
        material_regions: Vec::new(),
        bc_displacement: reservoir_displacement_bcs(),
        bc_pressure: vec![
            pbc(Tags::TOP, PressureBcKind::NoFlux, 0.0),
            pbc(Tags::SIDES, PressureBcKind::NoFlux, 0.0),
            pbc(Tags::BOTTOM, PressureBcKind::NoFlux, 0.0),
            pbc(Tags::INJECTOR, PressureBcKind::Dirichlet, INJECTOR_PRESSURE),
            pbc(Tags::PRODUCER, PressureBcKind::Dirichlet, PRODUCER_PRESSURE),
        ],
        p_initial: INITIAL_PRESSURE,
        source: SourceTerm::Zero,
        manufactured: None,
        units: Units::default(),
    }
}

/// Variant of the reservoir case for energy audits: the pressure vanishes
/// wherever the displacement is free (top and both wells), so the discrete
/// energy identity holds without boundary work terms.
pub fn build_energy_case(id: TestCase, target_cells: usize) -> ProblemConfig {
    let mut cfg = build_test_case(id, target_cells);
    cfg.name = format!("{}-energy", id.name());
    for bc in &mut cfg.bc_pressure {
        if [Tags::TOP, Tags::INJECTOR, Tags::PRODUCER].contains(&bc.tag) {
            bc.kind = PressureBcKind::Dirichlet;
            bc.value = 0.0;
        }
    }
    cfg
}

/// Unit-order material used by the manufactured solution.
pub fn manufactured_material() -> MaterialParams {
    MaterialParams {
        mu: 1.0,
        lambda: 1.0,
        storage: 1.0,
        permeability: 1.0,
        fluid_viscosity: 1.0,
        alpha_grad: 1.0,
        alpha_div: 1.0,
    }
}

/// Manufactured problem on an `n x n` unit square with exact Dirichlet data everywhere.
pub fn build_manufactured(n: usize, profile: TimeProfile, material: MaterialParams) -> ProblemConfig {
    let exact = ManufacturedSolution {
        amplitude: 1.0,
        profile,
        material,
    };
    let tags = [Tags::TOP, Tags::SIDES, Tags::BOTTOM];
    ProblemConfig {
        name: format!("manufactured-{n}"),
        mesh: MeshSource::Rectangle {
            nx: n,
            ny: n,
            width: 1.0,
            height: 1.0,
        },
        material,
        material_regions: Vec::new(),
        bc_displacement: tags
            .iter()
            .map(|&tag| DisplacementBc {
                tag,
                kind: DisplacementBcKind::Exact,
                values: [0.0; 2],
            })
            .collect(),
        bc_pressure: tags
            .iter()
            .map(|&tag| PressureBc {
                tag,
                kind: PressureBcKind::Exact,
                value: 0.0,
            })
            .collect(),
        p_initial: 0.0,
        source: SourceTerm::Manufactured,
        manufactured: Some(exact),
        units: Units::default(),
    }
}

pub const TERZAGHI_WIDTH: f64 = 1.0;
pub const TERZAGHI_HEIGHT: f64 = 10.0;

/// Consolidation column: drained top, rollers on the sides, fixed base.
pub fn build_terzaghi(material: MaterialParams, p0: f64, nx: usize, ny: usize) -> ProblemConfig {
    let dbc = |tag, kind| DisplacementBc {
        tag,
        kind,
        values: [0.0; 2],
    };
    ProblemConfig {
        name: "terzaghi".into(),
        mesh: MeshSource::Rectangle {
            nx,
            ny,
            width: TERZAGHI_WIDTH,
            height: TERZAGHI_HEIGHT,
        },
        material,
        material_regions: Vec::new(),
        bc_displacement: vec![
            dbc(Tags::TOP, DisplacementBcKind::TractionFree),
            dbc(Tags::SIDES, DisplacementBcKind::RollerX),
            dbc(Tags::BOTTOM, DisplacementBcKind::FixedBoth),
        ],
        bc_pressure: vec![PressureBc {
            tag: Tags::TOP,
            kind: PressureBcKind::Dirichlet,
            value: 0.0,
        }],
        p_initial: p0,
        source: SourceTerm::Zero,
        manufactured: None,
        units: Units::default(),
    }
}

/// One-dimensional consolidation coefficient `(k/ν) / (S + α²/K_dr)`.
pub fn consolidation_coefficient(params: &MaterialParams) -> f64 {
    params.mobility() / (params.storage + params.alpha_grad * params.alpha_div / params.k_dr())
}

/// Series solution of the consolidation column of height `length`; `x` is
/// the distance from the drained end.
pub fn terzaghi_pressure(params: &MaterialParams, p0: f64, length: f64, x: f64, t: f64, n_terms: usize) -> Result<f64> {
    if n_terms < 1 {
        return Err(Error::Config("terzaghi_pressure needs at least one term".into()));
    }
    let cv = consolidation_coefficient(params);
    let sum: f64 = (0..n_terms)
        .map(|m| {
            let k = (2 * m + 1) as f64;
            4.0 / (PI * k)
                * (k * PI * x / (2.0 * length)).sin()
                * (-k * k * PI * PI * cv * t / (4.0 * length * length)).exp()
        })
        .sum();
    Ok(p0 * sum)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum BoundaryValue {
    Constant(f64),
    ExactU(usize),
    ExactP,
}

/// A discretized problem: mesh, dof maps, coefficients and boundary data.
#[derive(Debug, Clone)]
pub struct Problem {
    pub config: ProblemConfig,
    pub mesh: Mesh,
    pub dofs_u: DofHandler,
    pub dofs_p: DofHandler,
    /// Coefficients per cell.
    pub materials: Vec<MaterialParams>,
    u_bc: Vec<(usize, BoundaryValue)>,
    p_bc: Vec<(usize, BoundaryValue)>,
    pub warnings: Vec<String>,
}

impl Problem {
    pub fn from_config(config: &ProblemConfig) -> Result<Self> {
        config.validate()?;
        let mesh = config.mesh.build()?;
        Self::with_mesh(config, mesh)
    }

    pub fn with_mesh(config: &ProblemConfig, mesh: Mesh) -> Result<Self> {
        config.validate()?;
        let dofs_u = build_dof_handler(&mesh, SpaceKind::P2Vector);
        let dofs_p = build_dof_handler(&mesh, SpaceKind::P1Scalar);
        let mut warnings = mesh.load_report().warnings.clone();

        let materials = (0..mesh.n_cells())
            .map(|c| {
                let [a, b, d] = mesh.cells()[c].map(|v| mesh.vertices()[v]);
                let x = [(a[0] + b[0] + d[0]) / 3.0, (a[1] + b[1] + d[1]) / 3.0];
                config
                    .material_regions
                    .iter()
                    .rev()
                    .find(|r| x[0] >= r.min[0] && x[0] <= r.max[0] && x[1] >= r.min[1] && x[1] <= r.max[1])
                    .map_or(config.material, |r| r.material)
            })
            .collect();

        let mut u_bc = Vec::new();
        for bc in &config.bc_displacement {
            let ents = mesh.boundary_entities(bc.tag);
            warnings.extend(ents.warning.clone());
            let comps: &[usize] = match bc.kind {
                DisplacementBcKind::FixedBoth | DisplacementBcKind::Exact => &[0, 1],
                DisplacementBcKind::RollerX => &[0],
                DisplacementBcKind::TractionFree => &[],
            };
            for &c in comps {
                for d in dofs_u.entity_dofs(&ents, Some(c)) {
                    let v = match bc.kind {
                        DisplacementBcKind::Exact => BoundaryValue::ExactU(c),
                        _ => BoundaryValue::Constant(bc.values[c]),
                    };
                    u_bc.push((d, v));
                }
            }
        }
        let mut p_bc = Vec::new();
        for bc in &config.bc_pressure {
            let ents = mesh.boundary_entities(bc.tag);
            warnings.extend(ents.warning.clone());
            let value = match bc.kind {
                PressureBcKind::NoFlux => continue,
                PressureBcKind::Dirichlet => BoundaryValue::Constant(bc.value),
                PressureBcKind::Exact => BoundaryValue::ExactP,
            };
            p_bc.extend(dofs_p.entity_dofs(&ents, None).into_iter().map(|d| (d, value)));
        }
        let problem = Self {
            config: config.clone(),
            mesh,
            dofs_u,
            dofs_p,
            materials,
            u_bc,
            p_bc,
            warnings,
        };
        // surfaces conflicting data at construction time
        problem.u_constraints(0.0)?;
        problem.p_constraints(0.0)?;
        Ok(problem)
    }

    fn exact(&self) -> &ManufacturedSolution {
        self.config
            .manufactured
            .as_ref()
            .expect("validated config carries manufactured data")
    }

    fn eval(&self, v: BoundaryValue, x: Point, t: f64) -> f64 {
        match v {
            BoundaryValue::Constant(c) => c,
            BoundaryValue::ExactU(c) => self.exact().displacement(x, t)[c],
            BoundaryValue::ExactP => self.exact().pressure(x, t),
        }
    }

    pub fn u_constraints(&self, t: f64) -> Result<Constraints> {
        Constraints::new(
            self.u_bc
                .iter()
                .map(|&(d, v)| (d, self.eval(v, self.dofs_u.dof_coordinate(d), t)))
                .collect(),
        )
    }

    pub fn p_constraints(&self, t: f64) -> Result<Constraints> {
        Constraints::new(
            self.p_bc
                .iter()
                .map(|&(d, v)| (d, self.eval(v, self.dofs_p.dof_coordinate(d), t)))
                .collect(),
        )
    }

    /// True when boundary values depend on time.
    pub fn time_dependent_boundary(&self) -> bool {
        self.u_bc
            .iter()
            .chain(&self.p_bc)
            .any(|(_, v)| !matches!(v, BoundaryValue::Constant(_)))
    }

    pub fn has_source(&self) -> bool {
        self.config.source != SourceTerm::Zero
    }

    pub fn source(&self, x: Point, t: f64) -> f64 {
        match self.config.source {
            SourceTerm::Zero => 0.0,
            SourceTerm::Constant { value } => value,
            SourceTerm::Manufactured => self.exact().source(x, t),
        }
    }

    /// Initial pressure with Dirichlet values at `t = 0` imposed.
    pub fn initial_pressure(&self) -> Result<Vec<f64>> {
        let mut p = match self.config.manufactured {
            Some(ex) if self.config.source == SourceTerm::Manufactured => {
                self.dofs_p.interpolate_scalar(|x| ex.pressure(x, 0.0))
            }
            _ => vec![self.config.p_initial; self.dofs_p.n_dofs()],
        };
        self.p_constraints(0.0)?.impose(&mut p);
        Ok(p)
    }

    pub fn assemble(&self) -> Result<FormMatrices> {
        FormMatrices::assemble(&self.mesh, &self.dofs_u, &self.dofs_p, &self.materials)
    }

    /// Extreme Ritz values of the elastic block restricted to free dofs,
    /// after symmetric diagonal scaling.
    pub fn elastic_ritz_range(&self, forms: &FormMatrices, iterations: usize) -> Result<(f64, f64)> {
        let mask = self.u_constraints(0.0)?.mask(self.dofs_u.n_dofs());
        let free: Vec<usize> = (0..mask.len()).filter(|&d| !mask[d]).collect();
        let a = forms.a.submatrix(&free, &free);
        let s: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d.abs().sqrt()).collect();
        let scaled: CsrMatrix = a.scale_rows_cols(&s, &s);
        Ok(lanczos_extreme_ritz(&scaled, iterations))
    }
}
