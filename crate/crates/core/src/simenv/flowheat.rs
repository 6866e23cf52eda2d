//! 2D coupled single-phase flow and heat transport.
//!
//! Cell-centred finite volumes on a uniform Cartesian grid, implicit Euler
//! in time, two-point fluxes with harmonic permeability averages, first
//! order upwinding of the advected mass and enthalpy. Gravity is ignored.
//! Density is linear in pressure and temperature. The outer boundary holds
//! the initial pressure and temperature through half-cell ghost faces, and
//! cold fluid is injected into the centre cell.
//!
//! Unknowns are stored cell by cell as (p, T), p in MPa and T in K. Mass
//! rows are divided by `V φ ρ0 c_p` and energy rows by `V C_eff`, so both
//! residuals read as MPa and K equivalents.

use super::builder::{build_solver, CELL_BLOCK};
use super::{Attempt, EnvError, Simulation, TimingMode};
use crate::config_space::{ConfigSpace, SolverConfig};
use crate::context::{extract_context, Context, ContextSchema, FaceSnapshot, FlowSnapshot};
use crate::sparse::{solve, CsrMatrix, COST_UNIT_SECONDS};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Pressure unknowns are in MPa.
pub const PRESSURE_SCALE: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowHeatParams {
    pub nx: usize,
    pub ny: usize,
    /// Cell edge lengths and layer thickness \[m\].
    pub dx: f64,
    pub dy: f64,
    pub thickness: f64,
    pub porosity: f64,
    /// Geometric mean permeability \[m²\].
    pub k_mean: f64,
    /// Standard deviation of ln K; 0 gives a uniform field.
    pub k_log_std: f64,
    /// Box-filter passes applied to the log-permeability noise.
    pub k_smoothing: usize,
    /// Viscosity \[Pa s\].
    pub viscosity: f64,
    /// Reference density \[kg/m³\] and compressibilities \[1/Pa\], \[1/K\].
    pub rho0: f64,
    pub comp_p: f64,
    pub comp_t: f64,
    /// Initial and boundary pressure \[Pa\] and temperature \[K\].
    pub p0: f64,
    pub t0: f64,
    /// Fluid heat capacity \[J/(kg K)\].
    pub c_fluid: f64,
    pub rock_density: f64,
    pub rock_heat_capacity: f64,
    /// Bulk thermal conductivity \[W/(m K)\].
    pub conductivity: f64,
    /// Injected volume rate \[m³/s\] and temperature \[K\].
    pub injection_rate: f64,
    pub injection_temperature: f64,
    pub dt_initial: f64,
    pub dt_growth: f64,
    pub dt_max: f64,
    pub dt_floor: f64,
    pub t_end: f64,
    /// Newton stops when the scaled residual drops below `newton_rtol`
    /// times the step's first residual, or below `newton_atol`.
    pub newton_rtol: f64,
    pub newton_atol: f64,
    pub newton_max_iter: usize,
    pub timing: TimingMode,
}

impl Default for FlowHeatParams {
    fn default() -> Self {
        Self {
            nx: 32,
            ny: 32,
            dx: 10.0,
            dy: 10.0,
            thickness: 10.0,
            porosity: 0.2,
            k_mean: 1e-13,
            k_log_std: 1.0,
            k_smoothing: 2,
            viscosity: 3e-4,
            rho0: 1000.0,
            comp_p: 1e-9,
            comp_t: 3e-4,
            p0: 35e6,
            t0: 393.0,
            c_fluid: 4200.0,
            rock_density: 2650.0,
            rock_heat_capacity: 900.0,
            conductivity: 2.5,
            injection_rate: 1e-3,
            injection_temperature: 313.0,
            dt_initial: 1e5,
            dt_growth: 1.5,
            dt_max: 5e6,
            dt_floor: 1e2,
            t_end: 5e7,
            newton_rtol: 1e-5,
            newton_atol: 1e-10,
            newton_max_iter: 8,
            timing: TimingMode::CostProxy,
        }
    }
}

impl FlowHeatParams {
    fn check(&self) -> Result<(), EnvError> {
        let bad = |what: &str| Err(EnvError::Config(what.to_string()));
        if self.nx == 0 || self.ny == 0 {
            return bad("grid must have at least one cell per direction");
        }
        let positive = [
            self.dx,
            self.dy,
            self.thickness,
            self.porosity,
            self.k_mean,
            self.viscosity,
            self.rho0,
            self.c_fluid,
            self.conductivity,
            self.dt_initial,
            self.dt_max,
            self.dt_floor,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("geometry, rock, fluid and time-step parameters must be positive");
        }
        if self.porosity >= 1.0 {
            return bad("porosity must be below 1");
        }
        if self.dt_growth < 1.0 || self.newton_max_iter == 0 {
            return bad("dt_growth must be >= 1 and newton_max_iter >= 1");
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn heterogeneous(&self) -> bool {
        self.k_log_std > 0.0
    }

    fn volume(&self) -> f64 {
        self.dx * self.dy * self.thickness
    }

    /// Volumetric heat capacity of the rock matrix share \[J/(m³ K)\].
    fn rock_capacity(&self) -> f64 {
        (1.0 - self.porosity) * self.rock_density * self.rock_heat_capacity
    }

    fn mass_scale(&self) -> f64 {
        self.volume() * self.porosity * self.rho0 * self.comp_p * PRESSURE_SCALE
    }

    fn energy_scale(&self) -> f64 {
        self.volume() * (self.porosity * self.rho0 * self.c_fluid + self.rock_capacity())
    }

    fn density(&self, p: f64, t: f64) -> f64 {
        self.rho0 * (1.0 + self.comp_p * (p - self.p0) - self.comp_t * (t - self.t0))
    }

    fn injection_cell(&self) -> usize {
        (self.ny / 2) * self.nx + self.nx / 2
    }
}

/// Seeded log-normal permeability with box-filtered correlation.
pub fn permeability_field(params: &FlowHeatParams, seed: u64) -> Vec<f64> {
    let (nx, ny) = (params.nx, params.ny);
    if !params.heterogeneous() {
        return vec![params.k_mean; nx * ny];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g: Vec<f64> = (0..nx * ny).map(|_| StandardNormal.sample(&mut rng)).collect();
    for _ in 0..params.k_smoothing {
        let mut s = vec![0.0; g.len()];
        for j in 0..ny {
            for i in 0..nx {
                let (mut sum, mut cnt) = (0.0, 0.0);
                for jj in j.saturating_sub(1)..(j + 2).min(ny) {
                    for ii in i.saturating_sub(1)..(i + 2).min(nx) {
                        sum += g[jj * nx + ii];
                        cnt += 1.0;
                    }
                }
                s[j * nx + i] = sum / cnt;
            }
        }
        g = s;
    }
    let n = g.len() as f64;
    let mean = g.iter().sum::<f64>() / n;
    let sd = (g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    g.iter()
        .map(|v| params.k_mean * (params.k_log_std * (v - mean) / sd).exp())
        .collect()
}

/// One face of the grid: `j` is `None` for a boundary ghost.
#[derive(Debug, Clone, Copy)]
struct Face {
    i: usize,
    j: Option<usize>,
    trans: f64,
    cond: f64,
    area: f64,
}

/// Grid, rock and the current and previous (p, T) fields.
#[derive(Debug, Clone)]
pub struct FlowHeatModel {
    params: FlowHeatParams,
    permeability: Vec<f64>,
    faces: Vec<Face>,
    pub pressure: Vec<f64>,
    pub temperature: Vec<f64>,
    old_pressure: Vec<f64>,
    old_temperature: Vec<f64>,
    pub time: f64,
    pub dt: f64,
}

struct FaceFlux {
    /// Volumetric flux from `i` to `j` \[m³/s\].
    q: f64,
    upwind_is_i: bool,
    rho_up: f64,
    t_up: f64,
    t_j: f64,
    p_j: f64,
}

impl FlowHeatModel {
    pub fn new(params: FlowHeatParams, permeability: Vec<f64>) -> Result<Self, EnvError> {
        params.check()?;
        if permeability.len() != params.cells() || permeability.iter().any(|k| !(*k > 0.0)) {
            return Err(EnvError::Config(
                "permeability must be positive with one value per cell".into(),
            ));
        }
        let (nx, ny) = (params.nx, params.ny);
        let ax = params.dy * params.thickness;
        let ay = params.dx * params.thickness;
        let mu = params.viscosity;
        let kappa = params.conductivity;
        let mut faces = Vec::new();
        let harmonic = |a: f64, b: f64| 2.0 * a * b / (a + b);
        for j in 0..ny {
            for i in 0..nx {
                let c = j * nx + i;
                let k = permeability[c];
                if i + 1 < nx {
                    let kh = harmonic(k, permeability[c + 1]);
                    faces.push(Face {
                        i: c,
                        j: Some(c + 1),
                        trans: ax * kh / (mu * params.dx),
                        cond: ax * kappa / params.dx,
                        area: ax,
                    });
                }
                if j + 1 < ny {
                    let kh = harmonic(k, permeability[c + nx]);
                    faces.push(Face {
                        i: c,
                        j: Some(c + nx),
                        trans: ay * kh / (mu * params.dy),
                        cond: ay * kappa / params.dy,
                        area: ay,
                    });
                }
                let ghost_x = usize::from(i == 0) + usize::from(i + 1 == nx);
                let ghost_y = usize::from(j == 0) + usize::from(j + 1 == ny);
                for _ in 0..ghost_x {
                    faces.push(Face {
                        i: c,
                        j: None,
                        trans: ax * k / (mu * 0.5 * params.dx),
                        cond: ax * kappa / (0.5 * params.dx),
                        area: ax,
                    });
                }
                for _ in 0..ghost_y {
                    faces.push(Face {
                        i: c,
                        j: None,
                        trans: ay * k / (mu * 0.5 * params.dy),
                        cond: ay * kappa / (0.5 * params.dy),
                        area: ay,
                    });
                }
            }
        }
        let n = params.cells();
        Ok(Self {
            pressure: vec![params.p0; n],
            temperature: vec![params.t0; n],
            old_pressure: vec![params.p0; n],
            old_temperature: vec![params.t0; n],
            time: 0.0,
            dt: params.dt_initial,
            params,
            permeability,
            faces,
        })
    }

    pub fn params(&self) -> &FlowHeatParams {
        &self.params
    }

    pub fn permeability(&self) -> &[f64] {
        &self.permeability
    }

    fn flux(&self, f: &Face) -> FaceFlux {
        let pr = &self.params;
        let (p_j, t_j) = match f.j {
            Some(j) => (self.pressure[j], self.temperature[j]),
            None => (pr.p0, pr.t0),
        };
        let (p_i, t_i) = (self.pressure[f.i], self.temperature[f.i]);
        let q = f.trans * (p_i - p_j);
        let upwind_is_i = q >= 0.0;
        let (p_up, t_up) = if upwind_is_i { (p_i, t_i) } else { (p_j, t_j) };
        FaceFlux {
            q,
            upwind_is_i,
            rho_up: pr.density(p_up, t_up),
            t_up,
            t_j,
            p_j,
        }
    }

    /// Scaled residual of the current iterate.
    pub fn residual(&self) -> Vec<f64> {
        self.assemble_inner(false).1
    }

    /// Scaled Jacobian and Newton right-hand side `-R` at the current
    /// iterate. The upwind direction is taken from the current iterate and
    /// held fixed in the derivatives.
    pub fn assemble(&self) -> (CsrMatrix, Vec<f64>) {
        let (a, r) = self.assemble_inner(true);
        (a.expect("jacobian requested"), r.iter().map(|v| -v).collect())
    }

    fn assemble_inner(&self, with_jacobian: bool) -> (Option<CsrMatrix>, Vec<f64>) {
        let pr = &self.params;
        let n = pr.cells();
        let v = pr.volume();
        let phi = pr.porosity;
        let cf = pr.c_fluid;
        let cs = pr.rock_capacity();
        let drho_dp = pr.rho0 * pr.comp_p;
        let drho_dt = -pr.rho0 * pr.comp_t;
        let dt = self.dt;
        let sm = 1.0 / pr.mass_scale();
        let se = 1.0 / pr.energy_scale();
        let ps = PRESSURE_SCALE;

        let mut r = vec![0.0; 2 * n];
        let mut trip: Vec<(usize, usize, f64)> = Vec::new();
        if with_jacobian {
            trip.reserve(12 * n);
        }
        let mut add = |row: usize, col: usize, val: f64| {
            if with_jacobian {
                trip.push((row, col, val));
            }
        };

        for c in 0..n {
            let (p, t) = (self.pressure[c], self.temperature[c]);
            let (pn, tn) = (self.old_pressure[c], self.old_temperature[c]);
            let rho = pr.density(p, t);
            let rho_n = pr.density(pn, tn);
            r[2 * c] += sm * v * phi * (rho - rho_n);
            r[2 * c + 1] += se * v * ((phi * rho * cf + cs) * t - (phi * rho_n * cf + cs) * tn);
            add(2 * c, 2 * c, sm * v * phi * drho_dp * ps);
            add(2 * c, 2 * c + 1, sm * v * phi * drho_dt);
            add(2 * c + 1, 2 * c, se * v * phi * cf * drho_dp * t * ps);
            add(
                2 * c + 1,
                2 * c + 1,
                se * v * (phi * rho * cf + cs + phi * cf * drho_dt * t),
            );
        }

        if pr.injection_rate != 0.0 {
            let c = pr.injection_cell();
            let rho_inj = pr.density(pr.p0, pr.injection_temperature);
            let m = pr.injection_rate * rho_inj;
            r[2 * c] -= sm * dt * m;
            r[2 * c + 1] -= se * dt * m * cf * pr.injection_temperature;
        }

        for f in &self.faces {
            let fl = self.flux(f);
            let i = f.i;
            let dp = self.pressure[i] - fl.p_j;
            let mass = fl.rho_up * fl.q;
            let heat = cf * fl.rho_up * fl.t_up * fl.q + f.cond * (self.temperature[i] - fl.t_j);
            r[2 * i] += sm * dt * mass;
            r[2 * i + 1] += se * dt * heat;
            if let Some(j) = f.j {
                r[2 * j] -= sm * dt * mass;
                r[2 * j + 1] -= se * dt * heat;
            }
            if !with_jacobian {
                continue;
            }
            // Derivatives of the outgoing mass and heat flux of `i`.
            let up = if fl.upwind_is_i { Some(i) } else { f.j };
            let mut dm: Vec<(usize, f64)> = Vec::with_capacity(4);
            let mut de: Vec<(usize, f64)> = Vec::with_capacity(4);
            // Pressure difference.
            dm.push((2 * i, fl.rho_up * f.trans * ps));
            de.push((2 * i, cf * fl.rho_up * fl.t_up * f.trans * ps));
            if let Some(j) = f.j {
                dm.push((2 * j, -fl.rho_up * f.trans * ps));
                de.push((2 * j, -cf * fl.rho_up * fl.t_up * f.trans * ps));
            }
            // Upwind state.
            if let Some(u) = up {
                dm.push((2 * u, drho_dp * f.trans * dp * ps));
                de.push((2 * u, cf * drho_dp * fl.t_up * f.trans * dp * ps));
                dm.push((2 * u + 1, drho_dt * f.trans * dp));
                de.push((2 * u + 1, cf * f.trans * dp * (fl.rho_up + fl.t_up * drho_dt)));
            }
            // Conduction.
            de.push((2 * i + 1, f.cond));
            if let Some(j) = f.j {
                de.push((2 * j + 1, -f.cond));
            }
            for &(col, d) in &dm {
                add(2 * i, col, sm * dt * d);
                if let Some(j) = f.j {
                    add(2 * j, col, -sm * dt * d);
                }
            }
            for &(col, d) in &de {
                add(2 * i + 1, col, se * dt * d);
                if let Some(j) = f.j {
                    add(2 * j + 1, col, -se * dt * d);
                }
            }
        }
        let a = with_jacobian
            .then(|| CsrMatrix::from_triplets(2 * n, &trip).expect("assembled pattern is valid"));
        (a, r)
    }

    /// Apply a Newton update in scaled units.
    pub fn update(&mut self, dx: &[f64]) {
        for c in 0..self.params.cells() {
            self.pressure[c] += PRESSURE_SCALE * dx[2 * c];
            self.temperature[c] += dx[2 * c + 1];
        }
    }

    fn accept_step(&mut self) {
        self.old_pressure.clone_from(&self.pressure);
        self.old_temperature.clone_from(&self.temperature);
        self.time += self.dt;
    }

    fn restore_step(&mut self) {
        self.pressure.clone_from(&self.old_pressure);
        self.temperature.clone_from(&self.old_temperature);
    }

    /// Raw quantities of the current iterate for context extraction.
    pub fn snapshot(&self) -> FlowSnapshot {
        let faces = self
            .faces
            .iter()
            .map(|f| {
                let fl = self.flux(f);
                FaceSnapshot {
                    velocity: fl.q / f.area,
                    advective_flux: self.params.c_fluid * fl.rho_up * fl.t_up * fl.q,
                    diffusive_flux: f.cond * (self.temperature[f.i] - fl.t_j),
                }
            })
            .collect();
        FlowSnapshot {
            time_step: self.dt,
            temperature: self.temperature.clone(),
            faces,
            cell_length: self.params.dx.min(self.params.dy),
            permeability: self.params.heterogeneous().then(|| self.permeability.clone()),
            permeability_threshold: self.params.k_mean,
        }
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct System {
    matrix: CsrMatrix,
    rhs: Vec<f64>,
    context: Context,
}

/// Newton-Raphson time stepping that emits one linear system per Newton
/// iteration. An unsolved system halves the time step and restarts it.
pub struct FlowHeatSim {
    model: FlowHeatModel,
    space: Arc<ConfigSpace>,
    schema: ContextSchema,
    system: Option<System>,
    solution: Option<Vec<f64>>,
    newton_iter: usize,
    first_residual: f64,
    emitted: u64,
    steps: usize,
    cuts: usize,
    error: Option<EnvError>,
}

impl FlowHeatSim {
    pub fn new(
        params: FlowHeatParams,
        space: Arc<ConfigSpace>,
        seed: u64,
    ) -> Result<Self, EnvError> {
        params.check()?;
        let k = permeability_field(&params, seed);
        let schema = ContextSchema::flow_heat(params.heterogeneous());
        let model = FlowHeatModel::new(params, k)?;
        Self::from_model(model, space, schema)
    }

    pub fn from_model(
        model: FlowHeatModel,
        space: Arc<ConfigSpace>,
        schema: ContextSchema,
    ) -> Result<Self, EnvError> {
        let mut sim = Self {
            model,
            space,
            schema,
            system: None,
            solution: None,
            newton_iter: 0,
            first_residual: 0.0,
            emitted: 0,
            steps: 0,
            cuts: 0,
            error: None,
        };
        sim.settle()?;
        Ok(sim)
    }

    pub fn model(&self) -> &FlowHeatModel {
        &self.model
    }

    /// Accepted time steps so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Time-step cuts so far.
    pub fn cuts(&self) -> usize {
        self.cuts
    }

    /// Matrix and right-hand side of the current system.
    pub fn system(&self) -> Option<(&CsrMatrix, &[f64])> {
        self.system.as_ref().map(|s| (&s.matrix, s.rhs.as_slice()))
    }

    /// The error that ended the simulation early, if any.
    pub fn error(&self) -> Option<&EnvError> {
        self.error.as_ref()
    }

    fn cut(&mut self) -> Result<(), EnvError> {
        self.cuts += 1;
        self.model.dt *= 0.5;
        self.model.restore_step();
        self.newton_iter = 0;
        if self.model.dt < self.model.params.dt_floor {
            return Err(EnvError::TimeStepUnderflow {
                dt: self.model.dt,
                floor: self.model.params.dt_floor,
                time: self.model.time,
            });
        }
        Ok(())
    }

    /// Step forward until a linear system is needed or the end is reached.
    fn settle(&mut self) -> Result<(), EnvError> {
        self.system = None;
        self.solution = None;
        loop {
            let pr = &self.model.params;
            let remaining = pr.t_end - self.model.time;
            if remaining < pr.dt_floor {
                return Ok(());
            }
            if self.model.dt > remaining {
                self.model.dt = remaining;
            }
            let r = self.model.residual();
            let norm = inf_norm(&r);
            if !norm.is_finite() {
                self.cut()?;
                continue;
            }
            if self.newton_iter == 0 {
                self.first_residual = norm;
            }
            let pr = &self.model.params;
            if norm <= pr.newton_atol
                || (self.newton_iter > 0 && norm <= pr.newton_rtol * self.first_residual)
            {
                self.model.accept_step();
                self.steps += 1;
                self.newton_iter = 0;
                let pr = &self.model.params;
                self.model.dt = (self.model.dt * pr.dt_growth).min(pr.dt_max);
                continue;
            }
            if self.newton_iter >= pr.newton_max_iter {
                self.cut()?;
                continue;
            }
            let (matrix, rhs) = self.model.assemble();
            let context = extract_context(&self.model.snapshot(), &self.schema)
                .map_err(|e| EnvError::Config(e.to_string()))?;
            self.system = Some(System {
                matrix,
                rhs,
                context,
            });
            self.emitted += 1;
            return Ok(());
        }
    }
}

impl Simulation for FlowHeatSim {
    fn schema(&self) -> &ContextSchema {
        &self.schema
    }

    fn current(&self) -> Option<&Context> {
        self.system.as_ref().map(|s| &s.context)
    }

    fn attempt(&mut self, config: &SolverConfig, _encoding: &[f64]) -> Attempt {
        let Some(sys) = &self.system else {
            return Attempt {
                success: false,
                time: 0.0,
                iterations: 0,
            };
        };
        let spec = match build_solver(&self.space, config) {
            Ok(s) => s,
            Err(_) => {
                let (n, nnz) = (sys.matrix.n(), sys.matrix.nnz());
                let max_iter = crate::sparse::GmresParams::default().max_iter;
                return Attempt {
                    success: false,
                    time: (max_iter * (nnz + 2 * n)) as f64 * COST_UNIT_SECONDS,
                    iterations: 0,
                };
            }
        };
        debug_assert_eq!(sys.matrix.n() % CELL_BLOCK, 0);
        let out = solve(&spec, &sys.matrix, &sys.rhs);
        let time = match self.model.params.timing {
            TimingMode::CostProxy => out.cost_seconds(),
            TimingMode::Wall => out.wall_time,
        };
        let success = out.converged && out.x.iter().all(|v| v.is_finite());
        if success {
            self.solution = Some(out.x);
        }
        Attempt {
            success,
            time,
            iterations: out.iterations,
        }
    }

    fn advance(&mut self, solved: bool) -> Result<(), EnvError> {
        if self.system.is_none() {
            return Err(EnvError::Finished);
        }
        let step = match (solved, self.solution.take()) {
            (true, Some(x)) => {
                self.model.update(&x);
                self.newton_iter += 1;
                Ok(())
            }
            _ => self.cut(),
        };
        let result = step.and_then(|_| self.settle());
        if let Err(e) = &result {
            self.system = None;
            self.error = Some(e.clone());
        }
        result
    }

    fn systems_emitted(&self) -> u64 {
        self.emitted
    }
}

/// `n_sims` simulations on the same grid, each with its own permeability
/// realization.
pub fn make_sequence(
    params: &FlowHeatParams,
    space: Arc<ConfigSpace>,
    n_sims: usize,
    seed: u64,
) -> Result<Vec<FlowHeatSim>, EnvError> {
    (0..n_sims)
        .map(|i| {
            FlowHeatSim::new(
                params.clone(),
                space.clone(),
                super::derive_seed(seed, "flowheat-field", i as u64),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_space::builtin;

    fn small(nx: usize) -> FlowHeatParams {
        FlowHeatParams {
            nx,
            ny: nx,
            ..Default::default()
        }
    }

    #[test]
    fn equilibrium_emits_nothing() {
        let p = FlowHeatParams {
            injection_rate: 0.0,
            k_log_std: 0.0,
            ..small(8)
        };
        let space = Arc::new(builtin::sequence_a_analog());
        let sim = FlowHeatSim::new(p, space, 1).unwrap();
        assert!(sim.finished());
        assert_eq!(sim.systems_emitted(), 0);
        assert!(sim.steps() > 0);
        assert!(sim.model().residual().iter().all(|&r| r == 0.0));
    }

    /// Centred finite differences of the residual against the assembled
    /// Jacobian, with a non-trivial state.
    #[test]
    fn jacobian_matches_finite_differences() {
        let mut m = FlowHeatModel::new(small(4), permeability_field(&small(4), 3)).unwrap();
        for c in 0..16 {
            m.pressure[c] += 1e5 * (1.7 * c as f64).sin();
            m.temperature[c] -= 3.0 * (c % 3) as f64;
        }
        let (a, _) = m.assemble();
        let dense = a.to_dense();
        for col in 0..32 {
            let h = if col % 2 == 0 { 1e-4 } else { 1e-3 };
            let mut plus = m.clone();
            let mut e = vec![0.0; 32];
            e[col] = h;
            plus.update(&e);
            let mut minus = m.clone();
            e[col] = -h;
            minus.update(&e);
            let (rp, rm) = (plus.residual(), minus.residual());
            for row in 0..32 {
                let fd = (rp[row] - rm[row]) / (2.0 * h);
                let scale = dense[row].iter().fold(1e-12_f64, |s, v| s.max(v.abs()));
                assert!(
                    (fd - dense[row][col]).abs() <= 1e-5 * scale,
                    "({row},{col}) fd {fd} vs {}",
                    dense[row][col]
                );
            }
        }
    }

    #[test]
    fn injection_cools_monotonically() {
        let p = FlowHeatParams {
            t_end: 1e7,
            ..small(8)
        };
        let space = Arc::new(builtin::sequence_a_analog());
        let mut sim = FlowHeatSim::new(p.clone(), space.clone(), 5).unwrap();
        let direct = space
            .enumerate()
            .into_iter()
            .find(|c| c.to_string().contains("direct"))
            .unwrap();
        let mut last_min = f64::INFINITY;
        let mut last_step = 0;
        while !sim.finished() {
            let a = sim.attempt(&direct, &[]);
            assert!(a.success);
            sim.advance(true).unwrap();
            if sim.steps() != last_step {
                last_step = sim.steps();
                let min = sim.model().old_temperature.iter().copied().fold(f64::INFINITY, f64::min);
                assert!(min <= last_min + 1e-9, "{min} > {last_min}");
                assert!(min >= p.injection_temperature - 1e-6, "{min}");
                last_min = min;
            }
        }
        assert!(last_min < p.t0 - 10.0, "{last_min}");
        assert_eq!(sim.cuts(), 0);
    }

    /// 3×3 grid, no flow: the centre T row is accumulation plus a five-point
    /// conduction stencil, so its T-block row sum is the accumulation term.
    #[test]
    fn stencil_audit_3x3() {
        let p = FlowHeatParams {
            k_log_std: 0.0,
            injection_rate: 0.0,
            ..small(3)
        };
        let m = FlowHeatModel::new(p.clone(), vec![p.k_mean; 9]).unwrap();
        let (a, rhs) = m.assemble();
        assert!(rhs.iter().all(|&v| v == 0.0));
        let d = a.to_dense();
        let v = 10.0 * 10.0 * 10.0;
        let c_eff = 0.2 * 1000.0 * 4200.0 + 0.8 * 2650.0 * 900.0;
        let acc = (c_eff - 0.2 * 4200.0 * 1000.0 * 3e-4 * 393.0) / c_eff;
        let lam = 1e5 * 2.5 * (10.0 * 10.0) / 10.0 / (v * c_eff);
        let row = 2 * 4 + 1;
        assert!((d[row][row] - (acc + 4.0 * lam)).abs() < 1e-14);
        for nb in [1, 3, 5, 7] {
            assert!((d[row][2 * nb + 1] + lam).abs() < 1e-16);
        }
        let t_sum: f64 = (0..9).map(|c| d[row][2 * c + 1]).sum();
        assert!((t_sum - acc).abs() < 1e-14, "{t_sum} vs {acc}");
        // A boundary row also sees its ghost faces.
        let corner: f64 = (0..9).map(|c| d[1][2 * c + 1]).sum();
        assert!((corner - (acc + 4.0 * lam)).abs() < 1e-14);
    }

    #[test]
    fn context_matches_snapshot() {
        let space = Arc::new(builtin::sequence_a_analog());
        let mut sim = FlowHeatSim::new(small(8), space.clone(), 2).unwrap();
        let direct = space
            .enumerate()
            .into_iter()
            .find(|c| c.to_string().contains("direct"))
            .unwrap();
        for _ in 0..6 {
            let again = extract_context(&sim.model().snapshot(), sim.schema()).unwrap();
            assert_eq!(sim.current().unwrap(), &again);
            assert!(sim.attempt(&direct, &[]).success);
            sim.advance(true).unwrap();
        }
    }

    #[test]
    fn unsolved_system_halves_the_step() {
        let space = Arc::new(builtin::sequence_a_analog());
        let mut sim = FlowHeatSim::new(small(8), space, 2).unwrap();
        let dt = sim.model().dt;
        sim.advance(false).unwrap();
        assert_eq!(sim.model().dt, dt / 2.0);
        assert_eq!(sim.cuts(), 1);
        let floor = FlowHeatParams {
            dt_floor: 0.6e5,
            ..small(8)
        };
        let space = Arc::new(builtin::sequence_a_analog());
        let mut sim = FlowHeatSim::new(floor, space, 2).unwrap();
        assert!(matches!(sim.advance(false), Err(EnvError::TimeStepUnderflow { .. })));
        assert!(sim.finished());
    }

    #[test]
    fn fields_vary_with_seed_only() {
        let p = FlowHeatParams::default();
        assert_eq!(permeability_field(&p, 4), permeability_field(&p, 4));
        let (a, b) = (permeability_field(&p, 4), permeability_field(&p, 5));
        assert!(a.iter().zip(&b).any(|(x, y)| x != y));
        assert!(a.iter().all(|&k| k > 0.0));
    }
}
