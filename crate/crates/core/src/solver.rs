//! Time integration of the damped Lagrangian perturbation flow and of its
//! inertialess (Darcy) reduction.
//!
//! The unknown is the perturbation omega(t, y) = x(t, y) - y of the flow
//! map about the stationary column, with velocity v = d omega / dt. With
//! sigma = nu (hbar - y), iota = 1/(gamma-1) and
//! Phi(s) = (1 + s)^{-gamma} - 1, the momentum balance reads
//!
//! ```text
//!     sigma^iota (d2w/dt2 + dw/dt) + d/dy (sigma^{iota+1} Phi(dw/dy)) = 0,
//! ```
//!
//! the bottom particle is pinned and the top node y = hbar carries the
//! vacuum boundary. Away from the boundary nodes the spatial term is
//! discretized in flux-difference form over cell midpoints,
//!
//! ```text
//!     [d/dy (sigma^{iota+1} Phi)]_j ~ (F_{j+1/2} - F_{j-1/2}) / w_j,
//! ```
//!
//! which is the gradient of a discrete potential and therefore keeps the
//! spectrum of the linearization real and nonpositive. At the vacuum node
//! the prefactor sigma^{-iota} would make that quotient 0/0; there the
//! product-rule expansion
//!
//! ```text
//!     sigma^{-iota} d/dy (sigma^{iota+1} Phi) = sigma dPhi/dy - nu (iota+1) Phi
//! ```
//!
//! is used instead (d sigma/dy = -nu), which is regular at sigma = 0.
//! The pinned bottom node carries no acceleration at all: evolving it and
//! re-clamping would pump node-scale noise into the high-order norms.

use crate::energy::{energy_report, EnergyReport};
use crate::error::{Error, Result};
use crate::model::{reconstruct_eulerian, GasParams};
use crate::weighted::{derivative, one_sided_start, Grid1D};

/// Lagrangian state at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct State1D {
    pub time: f64,
    /// Perturbation omega(t, y_j); omega[0] == 0 (fixed bottom).
    pub omega: Vec<f64>,
    /// Velocity v(t, y_j) = d omega/dt; vel[0] == 0.
    pub vel: Vec<f64>,
}

impl State1D {
    pub fn zero(grid: &Grid1D) -> Self {
        State1D {
            time: 0.0,
            omega: vec![0.0; grid.len()],
            vel: vec![0.0; grid.len()],
        }
    }

    fn check(&self, grid: &Grid1D) -> Result<()> {
        grid.check_len(self.omega.len())?;
        grid.check_len(self.vel.len())?;
        if self.omega[0] != 0.0 || self.vel[0] != 0.0 {
            return Err(Error::InvalidParameter {
                name: "state",
                value: self.omega[0],
                reason: "bottom node must satisfy omega(0) = v(0) = 0",
            });
        }
        Ok(())
    }
}

/// Which flow to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Full damped dynamics (second order in time).
    EulerDamped,
    /// Inertialess reduction sigma^iota dw/dt = -d/dy(sigma^{iota+1} Phi),
    /// sharing the same stationary solution.
    Darcy,
}

/// Built-in initial-data families.
#[derive(Debug, Clone, PartialEq)]
pub enum InitFamily {
    /// omega_0 = eps sin(k pi y / (2 hbar)); k = 1 displaces the top.
    SineMode,
    /// omega_0 = eps u^3 (1-u)^2 / (108/3125) with u = y/hbar, peaking at
    /// eps. Zero slope at both ends and zero curvature at the bottom, so
    /// the initial pressure-flux gradient vanishes there; refinement
    /// studies on this family see clean second order.
    PolynomialBump,
    /// Piecewise-linear table of (y, omega, v), interpolated onto the grid.
    CustomTable(Vec<[f64; 3]>),
}

/// Initial perturbation and velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub family: InitFamily,
    /// Displacement amplitude eps.
    pub amplitude: f64,
    /// Mode number k >= 1 (sine family).
    pub mode: u32,
    /// Velocity amplitude; the velocity uses the same spatial shape.
    pub vel_amplitude: f64,
}

/// Largest admissible max |d omega_0 / dy|. Keeps the initial data well
/// inside the invertibility margin 1 + dw/dy >= 1/2.
pub const MAX_INIT_SLOPE: f64 = 0.4;

/// Peak value of u^3 (1-u)^2, attained at u = 3/5.
const BUMP_PEAK: f64 = 108.0 / 3125.0;

impl InitialData {
    pub fn sine(amplitude: f64, mode: u32, vel_amplitude: f64) -> Self {
        InitialData {
            family: InitFamily::SineMode,
            amplitude,
            mode,
            vel_amplitude,
        }
    }

    /// Samples (omega_0, v_0) on the grid and validates the boundary and
    /// smallness constraints.
    pub fn evaluate(&self, grid: &Grid1D) -> Result<(Vec<f64>, Vec<f64>)> {
        if !self.amplitude.is_finite() || !self.vel_amplitude.is_finite() {
            return Err(Error::InvalidParameter {
                name: "amplitude",
                value: self.amplitude,
                reason: "must be finite",
            });
        }
        let (omega, vel) = match &self.family {
            InitFamily::SineMode => {
                if self.mode < 1 {
                    return Err(Error::InvalidParameter {
                        name: "mode",
                        value: self.mode as f64,
                        reason: "sine mode number must be >= 1",
                    });
                }
                let k = self.mode as f64;
                let shape = |y: f64| (k * std::f64::consts::PI * y / (2.0 * grid.hbar)).sin();
                let omega = grid.nodes.iter().map(|&y| self.amplitude * shape(y)).collect();
                let vel = grid
                    .nodes
                    .iter()
                    .map(|&y| self.vel_amplitude * shape(y))
                    .collect();
                (omega, vel)
            }
            InitFamily::PolynomialBump => {
                let shape = |y: f64| {
                    let u = y / grid.hbar;
                    u * u * u * (1.0 - u) * (1.0 - u) / BUMP_PEAK
                };
                let omega = grid.nodes.iter().map(|&y| self.amplitude * shape(y)).collect();
                let vel = grid
                    .nodes
                    .iter()
                    .map(|&y| self.vel_amplitude * shape(y))
                    .collect();
                (omega, vel)
            }
            InitFamily::CustomTable(points) => {
                if points.len() < 2 || points.windows(2).any(|p| p[1][0] <= p[0][0]) {
                    return Err(Error::InvalidParameter {
                        name: "table",
                        value: points.len() as f64,
                        reason: "needs >= 2 rows with strictly increasing y",
                    });
                }
                let interp = |col: usize| -> Vec<f64> {
                    grid.nodes
                        .iter()
                        .map(|&y| {
                            let i = points
                                .windows(2)
                                .position(|p| y <= p[1][0])
                                .unwrap_or(points.len() - 2);
                            let (a, b) = (&points[i], &points[i + 1]);
                            let t = ((y - a[0]) / (b[0] - a[0])).clamp(0.0, 1.0);
                            a[col] + t * (b[col] - a[col])
                        })
                        .collect()
                };
                (interp(1), interp(2))
            }
        };
        if omega[0] != 0.0 || vel[0] != 0.0 {
            return Err(Error::InvalidParameter {
                name: "init",
                value: omega[0],
                reason: "initial data must vanish at the bottom",
            });
        }
        let max_slope = derivative(grid, &omega)
            .iter()
            .fold(0.0f64, |m, d| m.max(d.abs()));
        if max_slope > MAX_INIT_SLOPE {
            return Err(Error::InvalidParameter {
                name: "amplitude",
                value: max_slope,
                reason: "initial slope exceeds the smallness gate 0.4",
            });
        }
        Ok((omega, vel))
    }
}

/// Everything a run needs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: GasParams,
    pub grid: Grid1D,
    /// Time step; `run` shrinks it slightly so that an integer number of
    /// steps lands exactly on `t_final`.
    pub dt: f64,
    pub t_final: f64,
    pub model: ModelKind,
    pub init: InitialData,
    /// Fraction of the stability limit the step may use, in (0, 1].
    pub cfl_safety: f64,
    /// Steps between recorded snapshots.
    pub output_every: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, value: f64, reason| Err(Error::InvalidParameter { name, value, reason });
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad("dt", self.dt, "must be a positive finite time step");
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return bad("t_final", self.t_final, "must be positive");
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return bad("cfl_safety", self.cfl_safety, "must lie in (0, 1]");
        }
        if self.output_every == 0 {
            return bad("output_every", 0.0, "must be >= 1");
        }
        Ok(())
    }
}

/// Phi(s) = (1+s)^{-gamma} - 1, evaluated in log space so its error stays
/// relative for tiny s.
#[inline]
fn pressure_excess(gamma: f64, s: f64) -> f64 {
    (-gamma * s.ln_1p()).exp_m1()
}

/// Phi'(s) = -gamma (1+s)^{-gamma-1}.
#[inline]
fn pressure_excess_slope(gamma: f64, s: f64) -> f64 {
    -gamma * ((-gamma - 1.0) * s.ln_1p()).exp()
}

/// Precomputed geometry for the spatial operator on a fixed grid.
pub(crate) struct FluxOp {
    gamma: f64,
    /// nu (iota + 1), the coefficient of the regular top-node expansion.
    damp_coef: f64,
    /// Cell sizes h_{j+1/2}.
    hc: Vec<f64>,
    /// sigma^{iota+1} at cell midpoints.
    sigma_mid_pow: Vec<f64>,
    /// 1 / (w_j sigma_j^iota); zero at the top node.
    inv_wsig: Vec<f64>,
    /// One-sided 3-point slope coefficients at y = 0.
    bottom_stencil: [f64; 3],
    /// sigma(0)^{iota+1}, for the boundary flux at the bottom.
    sigma_bottom_pow: f64,
    /// Darcy stability limit, state-independent.
    darcy_limit: f64,
    /// min_j (y_{j+1} - y_j) for the acoustic limit.
    min_dy: f64,
}

impl FluxOp {
    pub(crate) fn new(params: &GasParams, grid: &Grid1D) -> FluxOp {
        let n = grid.n_cells;
        let y = &grid.nodes;
        let hc: Vec<f64> = (0..n).map(|c| y[c + 1] - y[c]).collect();
        let sigma_mid_pow: Vec<f64> = (0..n)
            .map(|c| {
                let mid = 0.5 * (y[c] + y[c + 1]);
                (params.nu * (grid.hbar - mid)).powf(params.iota + 1.0)
            })
            .collect();
        let mut inv_wsig = vec![0.0; n + 1];
        for j in 0..n {
            inv_wsig[j] = 1.0 / (grid.quad_weights[j] * grid.sigma[j].powf(params.iota));
        }
        let bottom_stencil = {
            let e = |j: usize| {
                let mut f = [0.0; 3];
                f[j] = 1.0;
                one_sided_start(y[0], y[1], y[2], f[0], f[1], f[2])
            };
            [e(0), e(1), e(2)]
        };
        let min_dy = hc.iter().copied().fold(f64::INFINITY, f64::min);
        let sigma_max = grid.sigma.iter().copied().fold(0.0f64, f64::max);
        FluxOp {
            gamma: params.gamma,
            damp_coef: params.nu * (params.iota + 1.0),
            hc,
            sigma_mid_pow,
            inv_wsig,
            bottom_stencil,
            sigma_bottom_pow: grid.sigma[0].powf(params.iota + 1.0),
            darcy_limit: min_dy * min_dy / (2.0 * params.gamma * sigma_max),
            min_dy,
        }
    }

    fn bottom_slope(&self, f: &[f64]) -> f64 {
        self.bottom_stencil[0] * f[0] + self.bottom_stencil[1] * f[1] + self.bottom_stencil[2] * f[2]
    }

    /// Acceleration from the pressure flux alone (no damping):
    /// -sigma^{-iota} d/dy (sigma^{iota+1} Phi). The bottom node uses the
    /// boundary flux from a one-sided slope (its value is diagnostic: the
    /// stepper never moves the pinned node).
    ///
    /// The vacuum-node slope is the last-cell difference quotient. That
    /// makes the row coincide with the flux-difference form under the
    /// cell-averaged top mass, so the undamped semi-discrete system
    /// conserves its discrete energy exactly.
    pub(crate) fn accel(&self, omega: &[f64], time: f64, out: &mut Vec<f64>) -> Result<()> {
        let n = omega.len() - 1;
        out.clear();
        out.resize(n + 1, 0.0);
        // midpoint fluxes F_{c+1/2} = sigma^{iota+1} Phi(slope)
        let slope0 = self.bottom_slope(omega);
        if 1.0 + slope0 <= 0.0 {
            return Err(Error::ParticleCrossing {
                node: 0,
                time: Some(time),
            });
        }
        let mut prev_flux = self.sigma_bottom_pow * pressure_excess(self.gamma, slope0);
        let mut last_slope = 0.0;
        for c in 0..n {
            let s = (omega[c + 1] - omega[c]) / self.hc[c];
            if 1.0 + s <= 0.0 {
                return Err(Error::ParticleCrossing {
                    node: c,
                    time: Some(time),
                });
            }
            let flux = self.sigma_mid_pow[c] * pressure_excess(self.gamma, s);
            out[c] = -(flux - prev_flux) * self.inv_wsig[c];
            prev_flux = flux;
            last_slope = s;
        }
        // top node: sigma = 0 kills sigma dPhi/dy, leaving nu(iota+1) Phi
        out[n] = self.damp_coef * pressure_excess(self.gamma, last_slope);
        Ok(())
    }

    /// Time derivative of `accel` along d omega/dt = v.
    pub(crate) fn accel_rate(
        &self,
        omega: &[f64],
        v: &[f64],
        time: f64,
        out: &mut Vec<f64>,
    ) -> Result<()> {
        let n = omega.len() - 1;
        out.clear();
        out.resize(n + 1, 0.0);
        let slope0 = self.bottom_slope(omega);
        if 1.0 + slope0 <= 0.0 {
            return Err(Error::ParticleCrossing {
                node: 0,
                time: Some(time),
            });
        }
        let mut prev_rate =
            self.sigma_bottom_pow * pressure_excess_slope(self.gamma, slope0) * self.bottom_slope(v);
        let mut last = (0.0, 0.0);
        for c in 0..n {
            let s = (omega[c + 1] - omega[c]) / self.hc[c];
            if 1.0 + s <= 0.0 {
                return Err(Error::ParticleCrossing {
                    node: c,
                    time: Some(time),
                });
            }
            let sv = (v[c + 1] - v[c]) / self.hc[c];
            let rate = self.sigma_mid_pow[c] * pressure_excess_slope(self.gamma, s) * sv;
            out[c] = -(rate - prev_rate) * self.inv_wsig[c];
            prev_rate = rate;
            last = (s, sv);
        }
        out[n] = self.damp_coef * pressure_excess_slope(self.gamma, last.0) * last.1;
        Ok(())
    }

    /// Largest signal speed sqrt(gamma sigma (1 + dw/dy)^{-gamma-1}), with
    /// a small floor so the limit stays finite on degenerate data.
    fn max_wave_speed(&self, grid: &Grid1D, omega: &[f64]) -> f64 {
        let dw = derivative(grid, omega);
        let mut c2max = 0.0f64;
        for (s, d) in grid.sigma.iter().zip(&dw) {
            let c2 = self.gamma * s * ((-self.gamma - 1.0) * d.ln_1p()).exp();
            c2max = c2max.max(c2);
        }
        c2max.sqrt() + 1e-12
    }

    fn euler_limit(&self, grid: &Grid1D, omega: &[f64]) -> f64 {
        self.min_dy / self.max_wave_speed(grid, omega)
    }
}

/// Full acceleration d2 omega/dt2 = -v - sigma^{-iota} d/dy(sigma^{iota+1} Phi).
///
/// The stationary state is an exact fixed point: Phi(0) = 0 makes every
/// flux vanish identically, so zero data returns exactly zero.
pub fn rhs_acceleration(params: &GasParams, grid: &Grid1D, state: &State1D) -> Result<Vec<f64>> {
    state.check(grid)?;
    let op = FluxOp::new(params, grid);
    let mut a = Vec::new();
    op.accel(&state.omega, state.time, &mut a)?;
    for (aj, vj) in a.iter_mut().zip(&state.vel) {
        *aj -= vj;
    }
    Ok(a)
}

/// Pressure-flux acceleration alone (no damping term); the quantity the
/// Verlet core integrates.
pub fn flux_acceleration(params: &GasParams, grid: &Grid1D, state: &State1D) -> Result<Vec<f64>> {
    state.check(grid)?;
    let op = FluxOp::new(params, grid);
    let mut a = Vec::new();
    op.accel(&state.omega, state.time, &mut a)?;
    Ok(a)
}

/// Time derivative of the pressure-flux acceleration along the state's own
/// velocity, expanded analytically in (v, dv/dy). Used for the third time
/// derivative of omega in the energy tables.
pub fn flux_acceleration_rate(
    params: &GasParams,
    grid: &Grid1D,
    state: &State1D,
) -> Result<Vec<f64>> {
    state.check(grid)?;
    let op = FluxOp::new(params, grid);
    let mut a = Vec::new();
    op.accel_rate(&state.omega, &state.vel, state.time, &mut a)?;
    Ok(a)
}

fn check_finite(state: &State1D) -> Result<()> {
    if state.omega.iter().chain(&state.vel).all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            what: "state",
            time: state.time,
        })
    }
}

fn strang_step(op: &FluxOp, state: &mut State1D, dt: f64, scratch: &mut Vec<f64>) -> Result<()> {
    // The pinned bottom node is a constraint, not a degree of freedom: all
    // updates skip index 0. Integrating it and re-clamping would inject a
    // node-scale defect of size O(dt^2 a_0) every step.
    let half_damp = (-0.5 * dt).exp();
    // damping half-step, exact: v' = -v alone has solution e^{-t} v
    for v in state.vel.iter_mut().skip(1) {
        *v *= half_damp;
    }
    // velocity-Verlet on the conservative core
    op.accel(&state.omega, state.time, scratch)?;
    for (v, a) in state.vel.iter_mut().zip(scratch.iter()).skip(1) {
        *v += 0.5 * dt * a;
    }
    for (w, v) in state.omega.iter_mut().zip(&state.vel).skip(1) {
        *w += dt * v;
    }
    op.accel(&state.omega, state.time, scratch)?;
    for (v, a) in state.vel.iter_mut().zip(scratch.iter()).skip(1) {
        *v = (*v + 0.5 * dt * a) * half_damp;
    }
    state.omega[0] = 0.0;
    state.vel[0] = 0.0;
    state.time += dt;
    Ok(())
}

/// One step of the damped flow: exact exponential damping wrapped in
/// Strang fashion around a velocity-Verlet step of the pressure core.
pub fn step_euler_damped(config: &RunConfig, state: &State1D) -> Result<State1D> {
    config.validate()?;
    state.check(&config.grid)?;
    let op = FluxOp::new(&config.params, &config.grid);
    let limit = config.cfl_safety * op.euler_limit(&config.grid, &state.omega);
    if config.dt > limit {
        return Err(Error::CflViolation {
            dt: config.dt,
            limit,
            time: state.time,
        });
    }
    let mut next = state.clone();
    let mut scratch = Vec::new();
    strang_step(&op, &mut next, config.dt, &mut scratch)?;
    check_finite(&next)?;
    Ok(next)
}

/// One conservative Verlet step with the damping factors disabled.
/// Verification hook: the undamped core conserves the quadratic energy to
/// O(dt^2) over bounded horizons.
pub fn step_undamped(config: &RunConfig, state: &State1D) -> Result<State1D> {
    config.validate()?;
    state.check(&config.grid)?;
    let op = FluxOp::new(&config.params, &config.grid);
    let mut next = state.clone();
    let mut scratch = Vec::new();
    let dt = config.dt;
    op.accel(&next.omega, next.time, &mut scratch)?;
    for (v, a) in next.vel.iter_mut().zip(scratch.iter()).skip(1) {
        *v += 0.5 * dt * a;
    }
    for (w, v) in next.omega.iter_mut().zip(&next.vel).skip(1) {
        *w += dt * v;
    }
    op.accel(&next.omega, next.time, &mut scratch)?;
    for (v, a) in next.vel.iter_mut().zip(scratch.iter()).skip(1) {
        *v += 0.5 * dt * a;
    }
    next.omega[0] = 0.0;
    next.vel[0] = 0.0;
    next.time += dt;
    check_finite(&next)?;
    Ok(next)
}

/// One explicit Euler step of the Darcy flow
/// sigma^iota dw/dt = -d/dy(sigma^{iota+1} Phi), with the same regular
/// expansion at the top. The stored velocity is the Darcy velocity used
/// for the update.
pub fn step_darcy(config: &RunConfig, state: &State1D) -> Result<State1D> {
    config.validate()?;
    state.check(&config.grid)?;
    let op = FluxOp::new(&config.params, &config.grid);
    let limit = config.cfl_safety * op.darcy_limit;
    if config.dt > limit {
        return Err(Error::CflViolation {
            dt: config.dt,
            limit,
            time: state.time,
        });
    }
    let mut next = state.clone();
    let mut rate = Vec::new();
    darcy_step_inner(&op, &mut next, config.dt, &mut rate)?;
    check_finite(&next)?;
    Ok(next)
}

fn darcy_step_inner(op: &FluxOp, state: &mut State1D, dt: f64, rate: &mut Vec<f64>) -> Result<()> {
    op.accel(&state.omega, state.time, rate)?;
    for (w, r) in state.omega.iter_mut().zip(rate.iter()).skip(1) {
        *w += dt * r;
    }
    state.omega[0] = 0.0;
    state.vel.copy_from_slice(rate);
    state.vel[0] = 0.0;
    state.time += dt;
    Ok(())
}

/// Stability limit for the configured model evaluated on the initial data;
/// multiply by the safety factor to get a concrete step.
pub fn stable_dt(params: &GasParams, grid: &Grid1D, init: &InitialData, model: ModelKind) -> Result<f64> {
    let (omega, _) = init.evaluate(grid)?;
    let op = FluxOp::new(params, grid);
    Ok(match model {
        ModelKind::EulerDamped => op.euler_limit(grid, &omega),
        ModelKind::Darcy => op.darcy_limit,
    })
}

/// One recorded snapshot of a run.
#[derive(Debug, Clone)]
pub struct Record {
    pub time: f64,
    pub state: State1D,
    pub energy: EnergyReport,
    /// Vacuum boundary position Gamma(t) = hbar + omega(t, hbar).
    pub gamma_boundary: f64,
    pub max_abs_v: f64,
    /// Relative deviation of the reconstructed Eulerian mass from M.
    pub mass_rel_err: f64,
}

/// Full trajectory of a run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<Record>,
    /// The actual step used (dt shrunk to divide t_final).
    pub dt: f64,
    pub n_steps: usize,
}

/// Integrates the configured model over [0, t_final], recording every
/// `output_every` steps (plus the initial and final instants).
///
/// The trajectory is deterministic: identical configs produce bit-identical
/// records. Step failures propagate with the failing time attached.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let grid = &config.grid;
    let (omega, vel) = config.init.evaluate(grid)?;
    let mut state = State1D {
        time: 0.0,
        omega,
        vel,
    };

    let n_steps = (config.t_final / config.dt).ceil().max(1.0) as usize;
    let dt = config.t_final / n_steps as f64;
    let op = FluxOp::new(&config.params, grid);

    let mut records = Vec::with_capacity(n_steps / config.output_every + 2);
    let mut scratch = Vec::new();
    let record = |state: &State1D, records: &mut Vec<Record>| -> Result<()> {
        let energy = energy_report_for(&config.params, grid, state)?;
        let eul = reconstruct_eulerian(&config.params, grid, state)?;
        records.push(Record {
            time: state.time,
            gamma_boundary: eul.boundary,
            max_abs_v: state.vel.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            mass_rel_err: (eul.trapezoid_mass() - config.params.total_mass).abs()
                / config.params.total_mass,
            energy,
            state: state.clone(),
        });
        Ok(())
    };

    record(&state, &mut records)?;
    for k in 1..=n_steps {
        match config.model {
            ModelKind::EulerDamped => {
                let limit = config.cfl_safety * op.euler_limit(grid, &state.omega);
                if dt > limit {
                    return Err(Error::CflViolation {
                        dt,
                        limit,
                        time: state.time,
                    });
                }
                strang_step(&op, &mut state, dt, &mut scratch)?;
            }
            ModelKind::Darcy => {
                let limit = config.cfl_safety * op.darcy_limit;
                if dt > limit {
                    return Err(Error::CflViolation {
                        dt,
                        limit,
                        time: state.time,
                    });
                }
                darcy_step_inner(&op, &mut state, dt, &mut scratch)?;
            }
        }
        // uniform steps: keep time as a product, not a sum of increments
        state.time = if k == n_steps {
            config.t_final
        } else {
            k as f64 * dt
        };
        check_finite(&state)?;
        if k % config.output_every == 0 || k == n_steps {
            record(&state, &mut records)?;
        }
    }
    Ok(RunOutput {
        records,
        dt,
        n_steps,
    })
}

/// Energy tables for a state, with the acceleration supplied by the model
/// equation itself.
pub fn energy_report_for(params: &GasParams, grid: &Grid1D, state: &State1D) -> Result<EnergyReport> {
    let accel = rhs_acceleration(params, grid, state)?;
    energy_report(params, grid, state, &accel)
}

/// Kinetic masses w_j sigma_j^iota, with the vacuum node carrying the
/// cell-averaged weight of its half cell instead of the (zero) nodal value.
/// These are the masses under which the flux-difference operator is
/// symmetric, so the matching discrete energies are exactly conserved by
/// the undamped semi-discrete flow.
fn kinetic_masses(params: &GasParams, grid: &Grid1D) -> Vec<f64> {
    let n = grid.n_cells;
    let mut m: Vec<f64> = (0..=n)
        .map(|j| grid.quad_weights[j] * grid.sigma[j].powf(params.iota))
        .collect();
    let w_top = grid.quad_weights[n];
    m[n] = w_top * params.nu.powf(params.iota) * w_top.powf(params.iota) / (params.iota + 1.0);
    m
}

fn potential_energy(params: &GasParams, grid: &Grid1D, omega: &[f64], quadratic: bool) -> f64 {
    let gamma = params.gamma;
    let mut pot = 0.0;
    for c in 0..grid.n_cells {
        let h = grid.nodes[c + 1] - grid.nodes[c];
        let mid = 0.5 * (grid.nodes[c] + grid.nodes[c + 1]);
        let smw = (params.nu * (grid.hbar - mid)).powf(params.iota + 1.0);
        let s = (omega[c + 1] - omega[c]) / h;
        let density = if quadratic {
            0.5 * gamma * s * s
        } else {
            // W(s) = s - ((1+s)^{1-gamma} - 1)/(1-gamma): convex, W(0)=W'(0)=0
            s - ((1.0 - gamma) * s.ln_1p()).exp_m1() / (1.0 - gamma)
        };
        pot += h * smw * density;
    }
    pot
}

/// Quadratic (small-amplitude) energy
/// 1/2 sum m_j v_j^2 + gamma/2 sum_cells h sigma_mid^{iota+1} s^2:
/// the Lyapunov functional of the linearized damped flow.
pub fn quadratic_energy(params: &GasParams, grid: &Grid1D, state: &State1D) -> f64 {
    let m = kinetic_masses(params, grid);
    let kin: f64 = m
        .iter()
        .zip(&state.vel)
        .map(|(mj, v)| mj * v * v)
        .sum();
    0.5 * kin + potential_energy(params, grid, &state.omega, true)
}

/// Full discrete energy with the nonlinear cell potential; the undamped
/// Verlet core conserves it to O(dt^2) and the damped flow dissipates it.
pub fn discrete_energy(params: &GasParams, grid: &Grid1D, state: &State1D) -> f64 {
    let m = kinetic_masses(params, grid);
    let kin: f64 = m
        .iter()
        .zip(&state.vel)
        .map(|(mj, v)| mj * v * v)
        .sum();
    0.5 * kin + potential_energy(params, grid, &state.omega, false)
}
