//! Euler–Maruyama/TPFA time steppers.
//!
//! With `w = u^{n−1} + g(u^{n−1})·Δ_nW` every variant solves one step of
//!
//! ```text
//! (M + τA) u + τ M ψ_ε(u) = M w
//! ```
//!
//! * [`StepVariant::Coupled`] solves it exactly (semismooth Newton),
//! * [`StepVariant::Splitting`] replaces it by `(I + τψ_ε)⁻¹ (M + τA)⁻¹ M w`,
//! * [`StepVariant::Heat`] drops `ψ_ε` altogether.

use std::io::Write;
use std::str::FromStr;

use crate::assembly::{assemble_mass, assemble_stiffness, DiagonalOperator, SparseOperator};
use crate::constraint::{psi_eps, resolvent_in_place, YosidaParams};
use crate::linalg::{solve_diagonal_shift, ShiftedSolver, SolverOptions};
use crate::mesh::{DiscreteField, Mesh};
use crate::numfmt::fmt_f64;
use crate::stochastic::DiffusionCoefficient;
use crate::{Error, Result};

/// How `ε` is chosen from the time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonSchedule {
    Fixed(f64),
    /// `ε = coefficient · τ^exponent`.
    Power { coefficient: f64, exponent: f64 },
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule::Power { coefficient: 0.1, exponent: 0.4 }
    }
}

impl EpsilonSchedule {
    pub fn epsilon(&self, tau: f64) -> Result<f64> {
        let eps = match *self {
            EpsilonSchedule::Fixed(e) => e,
            EpsilonSchedule::Power { coefficient, exponent } => coefficient * tau.powf(exponent),
        };
        if eps.is_finite() && eps > 0.0 {
            Ok(eps)
        } else {
            Err(Error::InvalidConfig(format!("epsilon schedule {self:?} gives epsilon = {eps} at tau = {tau}")))
        }
    }

    /// `θ > 0` with `τ = O(ε^{2+θ})`, when the power rule couples `τ` and `ε`
    /// that way.
    pub fn coupling_theta(&self) -> Option<f64> {
        match *self {
            EpsilonSchedule::Power { exponent, .. } if exponent > 0.0 => {
                Some(1.0 / exponent - 2.0).filter(|&t| t > 0.0)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepVariant {
    #[default]
    Splitting,
    Coupled,
    Heat,
}

impl FromStr for StepVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "splitting" => Ok(StepVariant::Splitting),
            "coupled" => Ok(StepVariant::Coupled),
            "heat" => Ok(StepVariant::Heat),
            other => Err(Error::InvalidConfig(format!("unknown scheme variant {other:?}"))),
        }
    }
}

impl std::fmt::Display for StepVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StepVariant::Splitting => "splitting",
            StepVariant::Coupled => "coupled",
            StepVariant::Heat => "heat",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeParams {
    pub horizon: f64,
    pub steps: usize,
    pub epsilon: EpsilonSchedule,
    pub diffusion: DiffusionCoefficient,
    pub variant: StepVariant,
}

impl SchemeParams {
    pub fn new(horizon: f64, steps: usize, epsilon: EpsilonSchedule, amplitude: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidConfig(format!("time horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::InvalidConfig("number of time steps must be at least 1".into()));
        }
        let params = Self {
            horizon,
            steps,
            epsilon,
            diffusion: DiffusionCoefficient::new(amplitude)?,
            variant: StepVariant::default(),
        };
        params.epsilon_value()?;
        Ok(params)
    }

    pub fn with_variant(mut self, variant: StepVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn tau(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn epsilon_value(&self) -> Result<f64> {
        self.epsilon.epsilon(self.tau())
    }

    pub fn yosida(&self) -> Result<YosidaParams> {
        YosidaParams::new(self.epsilon_value()?, self.tau())
    }
}

/// A mesh with its assembled operators.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Mesh,
    pub mass: DiagonalOperator,
    pub stiffness: SparseOperator,
}

impl Discretization {
    pub fn new(mesh: Mesh) -> Self {
        let mass = assemble_mass(&mesh);
        let stiffness = assemble_stiffness(&mesh);
        Self { mesh, mass, stiffness }
    }

    pub fn num_cells(&self) -> usize {
        self.mesh.num_cells()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Bound on `max_K |F_K(u)| / m_min`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tolerance: 1e-11, max_iterations: 100 }
    }
}

/// One time step of a fixed `(τ, ε, g)` on a fixed discretization.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    disc: &'a Discretization,
    solver: ShiftedSolver<'a>,
    yosida: YosidaParams,
    diffusion: DiffusionCoefficient,
    variant: StepVariant,
    newton: NewtonOptions,
}

impl<'a> Stepper<'a> {
    pub fn new(disc: &'a Discretization, params: &SchemeParams) -> Result<Self> {
        Self::with_options(disc, params, SolverOptions::default(), NewtonOptions::default())
    }

    pub fn with_options(
        disc: &'a Discretization,
        params: &SchemeParams,
        solver_options: SolverOptions,
        newton: NewtonOptions,
    ) -> Result<Self> {
        let yosida = params.yosida()?;
        let solver = ShiftedSolver::with_options(&disc.mass, &disc.stiffness, yosida.tau(), solver_options)?;
        Ok(Self { disc, solver, yosida, diffusion: params.diffusion, variant: params.variant, newton })
    }

    pub fn discretization(&self) -> &'a Discretization {
        self.disc
    }

    pub fn solver(&self) -> &ShiftedSolver<'a> {
        &self.solver
    }

    pub fn yosida(&self) -> YosidaParams {
        self.yosida
    }

    pub fn variant(&self) -> StepVariant {
        self.variant
    }

    /// `u + g(u)·dw`.
    fn drive(&self, u: &DiscreteField, dw: f64) -> Result<Vec<f64>> {
        u.check_len(self.disc.num_cells())?;
        if !dw.is_finite() {
            return Err(Error::NonFinite("Brownian increment"));
        }
        Ok(u.iter().map(|&v| v + self.diffusion.eval(v) * dw).collect())
    }

    /// `(M + τA)⁻¹ M (u + g(u)·dw)`.
    pub fn heat_step(&self, u: &DiscreteField, dw: f64) -> Result<DiscreteField> {
        let w = self.drive(u, dw)?;
        finite(self.solver.apply_markov_raw(&w)?)
    }

    /// Heat substep followed by the componentwise resolvent.
    pub fn splitting_step(&self, u: &DiscreteField, dw: f64) -> Result<DiscreteField> {
        let w = self.drive(u, dw)?;
        let mut v = self.solver.apply_markov_raw(&w)?;
        resolvent_in_place(&mut v, &self.yosida);
        finite(v)
    }

    /// Exact solution of `(M + τA)u + τMψ_ε(u) = M w`.
    pub fn coupled_step(&self, u: &DiscreteField, dw: f64) -> Result<DiscreteField> {
        let w = self.drive(u, dw)?;
        let mut guess = self.solver.apply_markov_raw(&w)?;
        resolvent_in_place(&mut guess, &self.yosida);
        self.solve_coupled(&w, guess).and_then(finite)
    }

    pub fn step(&self, u: &DiscreteField, dw: f64) -> Result<DiscreteField> {
        match self.variant {
            StepVariant::Splitting => self.splitting_step(u, dw),
            StepVariant::Coupled => self.coupled_step(u, dw),
            StepVariant::Heat => self.heat_step(u, dw),
        }
    }

    /// Residual `F(u) = (M + τA)u + τMψ_ε(u) − Mw`.
    fn coupled_residual(&self, u: &[f64], mw: &[f64]) -> Vec<f64> {
        let (tau, eps) = (self.yosida.tau(), self.yosida.epsilon());
        let mut f = self.disc.stiffness.apply(u);
        for (k, fk) in f.iter_mut().enumerate() {
            let m = self.disc.mass.diag()[k];
            *fk = m * u[k] + tau * *fk + tau * m * psi_eps(u[k], eps) - mw[k];
        }
        f
    }

    /// Convex potential whose gradient is [`Self::coupled_residual`].
    fn coupled_energy(&self, u: &[f64], mw: &[f64]) -> f64 {
        let (tau, eps) = (self.yosida.tau(), self.yosida.epsilon());
        let au = self.disc.stiffness.apply(u);
        let mut e = 0.0;
        for k in 0..u.len() {
            let m = self.disc.mass.diag()[k];
            let excess = if u[k] < 0.0 { u[k] } else if u[k] > 1.0 { u[k] - 1.0 } else { 0.0 };
            e += 0.5 * m * u[k] * u[k] + 0.5 * tau * u[k] * au[k] + tau * m * excess * excess / (2.0 * eps)
                - u[k] * mw[k];
        }
        e
    }

    /// Semismooth Newton with the active-set Jacobian
    /// `M + τA + (τ/ε)·M·D`, `D_K = 1` outside `[0, 1]`, safeguarded by
    /// backtracking on the convex potential.
    fn solve_coupled(&self, w: &[f64], mut u: Vec<f64>) -> Result<Vec<f64>> {
        let m = self.disc.mass.diag();
        let m_min = self.disc.mesh.regularity().m_min;
        let (tau, eps) = (self.yosida.tau(), self.yosida.epsilon());
        let mw = self.disc.mass.apply(w);
        let scaled = |f: &[f64]| f.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())) / m_min;

        let mut f = self.coupled_residual(&u, &mw);
        let mut residual = scaled(&f);
        for _ in 0..self.newton.max_iterations {
            if residual <= self.newton.tolerance {
                return Ok(u);
            }
            let active = u.iter().any(|&v| !(0.0..=1.0).contains(&v));
            let delta = if active {
                let diag: Vec<f64> = u
                    .iter()
                    .zip(m)
                    .map(|(&v, &mk)| if (0.0..=1.0).contains(&v) { mk } else { mk * (1.0 + tau / eps) })
                    .collect();
                solve_diagonal_shift(&diag, &self.disc.stiffness, tau, &f, self.solver.options())?
            } else {
                self.solver.solve_raw(&f)?
            };

            let energy = self.coupled_energy(&u, &mw);
            let mut step = 1.0;
            let mut candidate: Vec<f64>;
            loop {
                candidate = u.iter().zip(&delta).map(|(a, d)| a - step * d).collect();
                let e = self.coupled_energy(&candidate, &mw);
                if e <= energy + 1e-13 * energy.abs().max(1e-300) || step < 1e-10 {
                    break;
                }
                step *= 0.5;
            }
            u = candidate;
            f = self.coupled_residual(&u, &mw);
            residual = scaled(&f);
        }
        if residual <= self.newton.tolerance {
            Ok(u)
        } else {
            Err(Error::NewtonDiverged { iterations: self.newton.max_iterations, residual })
        }
    }

    /// Applies [`Self::step`] once per increment, calling `visit(n, &state)`
    /// after step `n` (1-based).
    pub fn advance<F>(&self, u0: &DiscreteField, increments: &[f64], mut visit: F) -> Result<DiscreteField>
    where
        F: FnMut(usize, &DiscreteField),
    {
        u0.check_len(self.disc.num_cells())?;
        let mut u = u0.clone();
        for (i, &dw) in increments.iter().enumerate() {
            u = self.step(&u, dw)?;
            visit(i + 1, &u);
        }
        Ok(u)
    }
}

fn finite(v: Vec<f64>) -> Result<DiscreteField> {
    DiscreteField::new(v).map_err(|_| Error::NonFinite("time step"))
}

/// Which states of a trajectory are retained.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Recording {
    Full,
    #[default]
    Final,
    /// The listed steps (1-based) and the final state.
    Checkpoints(Vec<usize>),
}

impl Recording {
    fn keeps(&self, n: usize, last: usize) -> bool {
        n == last
            || match self {
                Recording::Full => true,
                Recording::Final => false,
                Recording::Checkpoints(c) => c.contains(&n),
            }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: Vec<(usize, DiscreteField)>,
}

impl Trajectory {
    pub fn get(&self, n: usize) -> Option<&DiscreteField> {
        self.states.iter().find(|(k, _)| *k == n).map(|(_, s)| s)
    }

    pub fn final_state(&self) -> &DiscreteField {
        &self.states.last().expect("trajectory holds at least the final state").1
    }

    pub fn states(&self) -> &[(usize, DiscreteField)] {
        &self.states
    }

    /// Writes `n,cell,value` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n,cell,value")?;
        for (n, state) in &self.states {
            for (k, v) in state.iter().enumerate() {
                writeln!(out, "{n},{k},{}", fmt_f64(*v))?;
            }
        }
        Ok(())
    }
}

/// Runs `N = increments.len()` steps of the stepper's variant from `u0`.
pub fn run_trajectory(
    stepper: &Stepper<'_>,
    u0: &DiscreteField,
    increments: &[f64],
    recording: &Recording,
) -> Result<Trajectory> {
    if increments.is_empty() {
        return Err(Error::InvalidConfig("trajectory needs at least one increment".into()));
    }
    let last = increments.len();
    let mut states = Vec::new();
    stepper.advance(u0, increments, |n, u| {
        if recording.keeps(n, last) {
            states.push((n, u.clone()));
        }
    })?;
    Ok(Trajectory { states })
}
