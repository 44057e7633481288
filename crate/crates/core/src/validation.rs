//! Randomized invariant checks and the reference-table reproduction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{assemble_mass, assemble_stiffness};
use crate::constraint::{psi_eps, resolvent};
use crate::golden;
use crate::linalg::ShiftedSolver;
use crate::mesh::{build_uniform_mesh, cell_average, DiscreteField};
use crate::scheme::{Discretization, EpsilonSchedule, Recording, SchemeParams, StepVariant, Stepper, run_trajectory};
use crate::stochastic::NoisePath;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// Iterates of the three reference scenarios on the 2×2 mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct TableReproduction {
    pub splitting_n2: Vec<DiscreteField>,
    pub heat_n2: Vec<DiscreteField>,
    pub splitting_n4: Vec<DiscreteField>,
}

impl TableReproduction {
    /// Largest absolute deviation from the stored reference values, per table.
    pub fn deviations(&self) -> [f64; 3] {
        fn dev(states: &[DiscreteField], expected: &[[f64; 4]]) -> f64 {
            states
                .iter()
                .zip(expected)
                .flat_map(|(s, e)| s.iter().zip(e).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max)
        }
        [
            dev(&self.splitting_n2, &golden::SPLITTING_N2),
            dev(&self.heat_n2, &golden::HEAT_N2),
            dev(&self.splitting_n4, &golden::SPLITTING_N4),
        ]
    }

    pub fn max_deviation(&self) -> f64 {
        self.deviations().into_iter().fold(0.0, f64::max)
    }
}

/// Runs the reference scenarios (`L = 2`, `a = 10`, `ε = 0.1·τ^{1/3}`) on a
/// four-step path; the two-step runs use pairwise sums of its increments.
pub fn reproduce_tables(path: &NoisePath) -> Result<TableReproduction> {
    let mesh = build_uniform_mesh(2)?;
    let u0 = cell_average(&golden::initial_datum(), &mesh)?;
    let disc = Discretization::new(mesh);
    let eps = EpsilonSchedule::Power { coefficient: golden::EPS_COEFFICIENT, exponent: golden::EPS_EXPONENT };
    let run = |steps: usize, variant: StepVariant| -> Result<Vec<DiscreteField>> {
        let params = SchemeParams::new(path.horizon(), steps, eps, golden::AMPLITUDE)?.with_variant(variant);
        let stepper = Stepper::new(&disc, &params)?;
        let dw = path.aggregate_increments(steps)?;
        let traj = run_trajectory(&stepper, &u0, &dw, &Recording::Full)?;
        Ok(traj.states().iter().map(|(_, s)| s.clone()).collect())
    };
    Ok(TableReproduction {
        splitting_n2: run(2, StepVariant::Splitting)?,
        heat_n2: run(2, StepVariant::Heat)?,
        splitting_n4: run(4, StepVariant::Splitting)?,
    })
}

/// The reference four-increment path on `[0, 1]`.
pub fn reference_path() -> NoisePath {
    NoisePath::from_increments(1.0, golden::QUARTER_INCREMENTS.to_vec()).expect("finite increments")
}

fn random_field(rng: &mut ChaCha8Rng, len: usize, lo: f64, hi: f64) -> DiscreteField {
    DiscreteField::new((0..len).map(|_| rng.random_range(lo..hi)).collect()).expect("finite")
}

/// Stiffness symmetry, zero row sums and semi-definiteness, positivity,
/// `𝟏`-fixing and mass conservation of `(M + τA)⁻¹M`, and the resolvent
/// inverse identity; `cases` random draws each over `L ∈ 1..=8`.
pub fn matrix_suite(cases: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let discs: Vec<Discretization> = (1..=8).map(|l| build_uniform_mesh(l).map(Discretization::new)).collect::<Result<_>>()?;

    let mut sym = 0.0_f64;
    let mut row_sum = 0.0_f64;
    let mut min_quad = f64::INFINITY;
    let mut min_markov = f64::INFINITY;
    let mut fix = 0.0_f64;
    let mut mass = 0.0_f64;
    let mut inverse = 0.0_f64;
    for _ in 0..cases {
        let disc = &discs[rng.random_range(0..discs.len())];
        let (m, a) = (assemble_mass(&disc.mesh), assemble_stiffness(&disc.mesh));
        let d = a.dim();
        for i in 0..d {
            let mut s = 0.0;
            for (j, v) in a.row(i) {
                sym = sym.max((v - a.get(j, i)).abs());
                s += v;
            }
            row_sum = row_sum.max(s.abs());
        }
        let x = random_field(&mut rng, d, -1.0, 1.0);
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        min_quad = min_quad.min(a.quadratic_form(&x) / norm2.max(f64::MIN_POSITIVE));

        let tau = 10f64.powf(rng.random_range(-4.0..1.0));
        let solver = ShiftedSolver::new(&m, &a, tau)?;
        let pos = random_field(&mut rng, d, 0.0, 1.0);
        let out = solver.apply_markov(&pos)?;
        min_markov = min_markov.min(out.iter().copied().fold(f64::INFINITY, f64::min));
        let ones = solver.apply_markov(&DiscreteField::constant(d, 1.0))?;
        fix = fix.max(ones.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max));
        let y = random_field(&mut rng, d, -5.0, 5.0);
        let my = solver.apply_markov(&y)?;
        let (before, after) = (m.weighted_sum(&y), m.weighted_sum(&my));
        let scale: f64 = m.diag().iter().zip(y.iter()).map(|(a, b)| (a * b).abs()).sum();
        mass = mass.max((before - after).abs() / scale);

        let r = rng.random_range(-100.0..100.0);
        let t = 10f64.powf(rng.random_range(-6.0..1.0));
        let eps = 10f64.powf(rng.random_range(-6.0..1.0));
        let v = resolvent(r, t, eps);
        let back = v + t * psi_eps(v, eps) - r;
        inverse = inverse.max(back.abs() / (r.abs().max(1.0) * (1.0 + t / eps)));
    }

    Ok(vec![
        CheckOutcome::new("stiffness symmetry", sym == 0.0, format!("max |a_KL - a_LK| = {sym:e}")),
        CheckOutcome::new("stiffness zero row sums", row_sum <= 1e-12, format!("max |row sum| = {row_sum:e}")),
        CheckOutcome::new("stiffness semi-definite", min_quad >= -1e-12, format!("min xAx/|x|^2 = {min_quad:e}")),
        CheckOutcome::new("heat map positivity", min_markov >= -1e-12, format!("min output = {min_markov:e}")),
        CheckOutcome::new("heat map fixes constants", fix <= 1e-12, format!("max |out - 1| = {fix:e}")),
        CheckOutcome::new("heat map conserves mass", mass <= 1e-10, format!("max rel. mass change = {mass:e}")),
        CheckOutcome::new("resolvent inverse identity", inverse <= 1e-14, format!("max scaled defect = {inverse:e}")),
    ])
}

/// Constant propagation, stationarity of `0` and `𝟏`, and sign trapping for
/// both steppers over random meshes, amplitudes and increments.
pub fn structure_suite(cases: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let discs: Vec<Discretization> = (1..=8).map(|l| build_uniform_mesh(l).map(Discretization::new)).collect::<Result<_>>()?;
    let random_stepper = |rng: &mut ChaCha8Rng| -> Result<(usize, SchemeParams)> {
        let l = rng.random_range(0..discs.len());
        let steps = rng.random_range(2..64);
        let eps = 10f64.powf(rng.random_range(-3.0..0.0));
        let a = rng.random_range(0.0..60.0);
        Ok((l, SchemeParams::new(1.0, steps, EpsilonSchedule::Fixed(eps), a)?))
    };
    let increments = |rng: &mut ChaCha8Rng, params: &SchemeParams| -> Vec<f64> {
        let s = params.tau().sqrt();
        (0..params.steps.min(8)).map(|_| rng.random_range(-3.0 * s..3.0 * s)).collect()
    };

    let mut spread = 0.0_f64;
    let mut stationary = 0.0_f64;
    let mut trapped_below = f64::NEG_INFINITY;
    let mut trapped_above = f64::INFINITY;
    for _ in 0..cases {
        let (l, params) = random_stepper(&mut rng)?;
        let disc = &discs[l];
        let stepper = Stepper::new(disc, &params)?;
        let d = disc.num_cells();
        let dw = increments(&mut rng, &params);

        let c = rng.random_range(0.0..1.0);
        let (mut u, mut v) = (DiscreteField::constant(d, c), DiscreteField::constant(d, c));
        for &w in &dw {
            u = stepper.splitting_step(&u, w)?;
            v = stepper.coupled_step(&v, w)?;
            spread = spread.max(u.spread()).max(v.spread());
        }

        for c in [0.0, 1.0] {
            let (mut u, mut v) = (DiscreteField::constant(d, c), DiscreteField::constant(d, c));
            for &w in &dw {
                u = stepper.splitting_step(&u, w)?;
                v = stepper.coupled_step(&v, w)?;
                stationary = stationary
                    .max(u.iter().chain(v.iter()).map(|x| (x - c).abs()).fold(0.0, f64::max));
            }
        }

        let w = dw[0];
        let below = random_field(&mut rng, d, -2.0, 0.0);
        let above = random_field(&mut rng, d, 1.0, 3.0);
        for out in [stepper.splitting_step(&below, w)?, stepper.coupled_step(&below, w)?] {
            trapped_below = trapped_below.max(out.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
        for out in [stepper.splitting_step(&above, w)?, stepper.coupled_step(&above, w)?] {
            trapped_above = trapped_above.min(out.iter().copied().fold(f64::INFINITY, f64::min));
        }
    }

    Ok(vec![
        CheckOutcome::new("constants propagate", spread <= 1e-10, format!("max spread = {spread:e}")),
        CheckOutcome::new("0 and 1 are stationary", stationary <= 1e-12, format!("max drift = {stationary:e}")),
        CheckOutcome::new("trapping below 0", trapped_below <= 1e-10, format!("max output = {trapped_below:e}")),
        CheckOutcome::new(
            "trapping above 1",
            trapped_above >= 1.0 - 1e-10,
            format!("min output - 1 = {:e}", trapped_above - 1.0),
        ),
    ])
}

/// Reference tables, matrix suite and structure suite.
pub fn run_all(seed: u64) -> Result<Vec<CheckOutcome>> {
    let tables = reproduce_tables(&reference_path())?;
    let dev = tables.max_deviation();
    let mut checks = vec![CheckOutcome::new("reference tables", dev <= 1e-5, format!("max deviation = {dev:e}"))];
    checks.extend(matrix_suite(1000, seed)?);
    checks.extend(structure_suite(200, seed.wrapping_add(1))?);
    Ok(checks)
}
