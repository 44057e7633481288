//! Monte Carlo drivers: expectation drift, time-refinement error curves,
//! fitted convergence orders and the splitting-versus-coupled error study.
//!
//! Every path `i` draws one fine Brownian path keyed by `(seed, i)`; coarser
//! step counts reuse it through increment aggregation. Per-path results are
//! collected in path order and reduced with compensated summation, so the
//! output does not depend on the number of worker threads.

use std::io::Write;

use rayon::prelude::*;

use crate::golden;
use crate::mesh::{build_uniform_mesh_on, cell_average, squared_l2_distance, DiscreteField, SeparablePolynomial};
use crate::numfmt::{compensated_sum, fmt_f64};
use crate::scheme::{Discretization, EpsilonSchedule, SchemeParams, StepVariant, Stepper};
use crate::stochastic::sample_path;
use crate::{Error, Result};

/// Initial condition, projected onto the mesh by cell averages.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialDatum {
    /// The non-symmetric quartic reference datum.
    Reference,
    /// `scale · reference + shift`.
    Affine { scale: f64, shift: f64 },
    Constant(f64),
    Polynomial(SeparablePolynomial),
}

impl InitialDatum {
    pub fn discretize(&self, disc: &Discretization) -> Result<DiscreteField> {
        match self {
            InitialDatum::Reference => cell_average(&golden::initial_datum(), &disc.mesh),
            InitialDatum::Affine { scale, shift } => {
                let base = cell_average(&golden::initial_datum(), &disc.mesh)?;
                DiscreteField::new(base.iter().map(|v| scale * v + shift).collect())
            }
            InitialDatum::Constant(c) => Ok(DiscreteField::constant(disc.num_cells(), *c)),
            InitialDatum::Polynomial(p) => cell_average(p, &disc.mesh),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub half_width: f64,
    pub horizon: f64,
    /// Cells per axis, shared by the reference and the approximations.
    pub cells_per_axis: usize,
    /// Step count of expectation studies.
    pub steps: usize,
    pub n_max: usize,
    pub n_list: Vec<usize>,
    pub paths: usize,
    pub amplitudes: Vec<f64>,
    pub epsilon: EpsilonSchedule,
    pub seed: u64,
    pub checkpoints: Vec<usize>,
    pub variant: StepVariant,
    pub initial: InitialDatum,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self::desk_convergence()
    }
}

impl StudyConfig {
    /// Reduced-scale time-refinement study.
    pub fn desk_convergence() -> Self {
        Self {
            half_width: 1.0,
            horizon: 1.0,
            cells_per_axis: 4,
            steps: 512,
            n_max: 4032,
            n_list: vec![42, 56, 84, 112, 168, 252, 336, 504],
            paths: 200,
            amplitudes: vec![1.0, 5.0, 30.0, 60.0],
            epsilon: EpsilonSchedule::default(),
            seed: 42,
            checkpoints: vec![2, 64, 512],
            variant: StepVariant::Splitting,
            initial: InitialDatum::Reference,
        }
    }

    /// Full-scale time-refinement study. Hours of CPU time.
    pub fn full_convergence() -> Self {
        Self {
            n_max: 40320,
            n_list: vec![210, 280, 360, 504, 630, 840, 1008, 1260, 1680, 2520, 3360, 4032, 5040],
            paths: 9000,
            ..Self::desk_convergence()
        }
    }

    /// Long-horizon refinement for large amplitudes: `N_max = 403200`.
    pub fn full_convergence_extended() -> Self {
        let mut n_list = Self::full_convergence().n_list;
        n_list.extend([6300, 8400, 10080, 12600, 16800, 25200, 33600, 40320, 50400]);
        Self { n_max: 403200, n_list, paths: 3000, amplitudes: vec![60.0], ..Self::full_convergence() }
    }

    pub fn desk_expectation() -> Self {
        Self {
            cells_per_axis: 5,
            steps: 512,
            paths: 1000,
            amplitudes: vec![1.0, 3.0, 10.0, 40.0],
            checkpoints: vec![2, 64, 512],
            ..Self::desk_convergence()
        }
    }

    pub fn full_expectation() -> Self {
        Self { steps: 2048, paths: 3000, checkpoints: vec![2, 64, 2048], ..Self::desk_expectation() }
    }

    /// Coupled-versus-splitting study at fixed `ε`; the initial datum leaves
    /// `[0, 1]` so the penalty is active from the first step.
    pub fn desk_splitting_error() -> Self {
        Self {
            cells_per_axis: 4,
            n_max: 256,
            n_list: vec![16, 32, 64, 128, 256],
            paths: 100,
            amplitudes: vec![1.0],
            epsilon: EpsilonSchedule::Fixed(0.05),
            initial: InitialDatum::Affine { scale: 2.0, shift: -0.5 },
            ..Self::desk_convergence()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.half_width.is_finite() && self.half_width > 0.0) {
            return bad(format!("domain half width must be positive, got {}", self.half_width));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad(format!("time horizon must be positive, got {}", self.horizon));
        }
        if self.cells_per_axis == 0 {
            return bad("cells per axis must be at least 1".into());
        }
        if self.paths == 0 {
            return bad("path count must be at least 1".into());
        }
        if self.steps == 0 || self.n_max == 0 {
            return bad("step counts must be at least 1".into());
        }
        if let Some(n) = self.n_list.iter().find(|&&n| n == 0 || !self.n_max.is_multiple_of(n)) {
            return bad(format!("step count {n} does not divide N_max = {}", self.n_max));
        }
        if let Some(a) = self.amplitudes.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return bad(format!("amplitude must be finite and nonnegative, got {a}"));
        }
        if let Some(n) = self.checkpoints.iter().find(|&&n| n == 0 || n > self.steps) {
            return bad(format!("checkpoint {n} outside 1..={}", self.steps));
        }
        for n in self.n_list.iter().chain([&self.n_max, &self.steps]) {
            self.epsilon.epsilon(self.horizon / *n as f64)?;
        }
        Ok(())
    }

    pub fn discretization(&self) -> Result<Discretization> {
        Ok(Discretization::new(build_uniform_mesh_on(self.cells_per_axis, self.half_width)?))
    }

    pub fn scheme(&self, steps: usize, amplitude: f64) -> Result<SchemeParams> {
        Ok(SchemeParams::new(self.horizon, steps, self.epsilon, amplitude)?.with_variant(self.variant))
    }
}

/// Monte Carlo means at one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationEstimate {
    pub amplitude: f64,
    pub n: usize,
    pub steps: usize,
    /// `E_K`, per cell.
    pub cell_means: Vec<f64>,
    /// Unweighted average of `E_K` over the cells.
    pub mean: f64,
    pub initial_mean: f64,
    /// `|E(u⁰) − E(ũⁿ)|`.
    pub abs_diff: f64,
}

/// Unweighted cell average.
pub fn field_mean(u: &DiscreteField) -> f64 {
    compensated_sum(u.iter().copied()) / u.len() as f64
}

/// Per-cell sample means of `ũⁿ` for every configured checkpoint `n`, with
/// `N = config.steps`.
pub fn estimate_expectation(config: &StudyConfig, amplitude: f64) -> Result<Vec<ExpectationEstimate>> {
    config.validate()?;
    let disc = config.discretization()?;
    let params = config.scheme(config.steps, amplitude)?;
    let stepper = Stepper::new(&disc, &params)?;
    let u0 = config.initial.discretize(&disc)?;
    let checkpoints = &config.checkpoints;
    let last = checkpoints.iter().copied().max().unwrap_or(0);
    let d = disc.num_cells();

    let per_path: Vec<Vec<Vec<f64>>> = (0..config.paths as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<Vec<f64>>> {
            let path = sample_path(config.seed, i, config.horizon, config.steps)?;
            let mut snaps = vec![Vec::new(); checkpoints.len()];
            stepper.advance(&u0, &path.increments()[..last], |n, u| {
                for (slot, &c) in snaps.iter_mut().zip(checkpoints) {
                    if c == n {
                        *slot = u.to_vec();
                    }
                }
            })?;
            Ok(snaps)
        })
        .collect::<Result<_>>()?;

    let initial_mean = field_mean(&u0);
    Ok(checkpoints
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let cell_means: Vec<f64> = (0..d)
                .map(|k| compensated_sum(per_path.iter().map(|p| p[j][k])) / config.paths as f64)
                .collect();
            let mean = compensated_sum(cell_means.iter().copied()) / d as f64;
            ExpectationEstimate {
                amplitude,
                n,
                steps: config.steps,
                cell_means,
                mean,
                initial_mean,
                abs_diff: (initial_mean - mean).abs(),
            }
        })
        .collect())
}

/// Least-squares line through `(log τ, log E)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Slope and intercept of `log E ≈ m log τ + c`.
pub fn fit_convergence_order(points: &[(f64, f64)]) -> Result<LineFit> {
    if points.len() < 2 {
        return Err(Error::InvalidConfig("a convergence fit needs at least two points".into()));
    }
    if let Some(p) = points.iter().find(|(t, e)| !(t.is_finite() && e.is_finite() && *t > 0.0 && *e > 0.0)) {
        return Err(Error::InvalidConfig(format!("convergence fit needs positive (tau, E), got {p:?}")));
    }
    let n = points.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|(t, e)| (t.ln(), e.ln())).unzip();
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    if sxx <= 1e-300 * n || sxx <= f64::EPSILON * xs.iter().map(|x| x * x).sum::<f64>() {
        return Err(Error::InvalidConfig("convergence fit needs at least two distinct time steps".into()));
    }
    let slope = sxy / sxx;
    Ok(LineFit { slope, intercept: ym - slope * xm })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve {
    pub amplitude: f64,
    /// `(N, τ, E)`, ordered as requested.
    pub points: Vec<(usize, f64, f64)>,
    /// `None` when some `E` vanishes.
    pub fit: Option<LineFit>,
}

impl ErrorCurve {
    fn new(amplitude: f64, points: Vec<(usize, f64, f64)>) -> Self {
        let pairs: Vec<(f64, f64)> = points.iter().map(|&(_, t, e)| (t, e)).collect();
        let fit = fit_convergence_order(&pairs).ok();
        Self { amplitude, points, fit }
    }

    pub fn slope(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    /// Fit restricted to the points with `N` in `steps`.
    pub fn fit_subset(&self, steps: &[usize]) -> Result<LineFit> {
        let pairs: Vec<(f64, f64)> =
            self.points.iter().filter(|p| steps.contains(&p.0)).map(|&(_, t, e)| (t, e)).collect();
        fit_convergence_order(&pairs)
    }
}

/// Mean squared `L²` distance between `ũ_{N_max}^{N_max}` and `ũ_N^N` for
/// every `N` in `config.n_list`, on shared paths.
pub fn error_curve(config: &StudyConfig, amplitude: f64) -> Result<ErrorCurve> {
    config.validate()?;
    let disc = config.discretization()?;
    let u0 = config.initial.discretize(&disc)?;
    let fine_params = config.scheme(config.n_max, amplitude)?;
    let fine = Stepper::new(&disc, &fine_params)?;
    let coarse_params: Vec<SchemeParams> =
        config.n_list.iter().map(|&n| config.scheme(n, amplitude)).collect::<Result<_>>()?;
    let coarse: Vec<Stepper<'_>> = coarse_params.iter().map(|p| Stepper::new(&disc, p)).collect::<Result<_>>()?;

    let per_path: Vec<Vec<f64>> = (0..config.paths as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let path = sample_path(config.seed, i, config.horizon, config.n_max)?;
            let reference = fine.advance(&u0, path.increments(), |_, _| {})?;
            config
                .n_list
                .iter()
                .zip(&coarse)
                .map(|(&n, stepper)| {
                    let dw = path.aggregate_increments(n)?;
                    let approx = stepper.advance(&u0, &dw, |_, _| {})?;
                    squared_l2_distance(&reference, &approx, &disc.mesh)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let points = config
        .n_list
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let e = compensated_sum(per_path.iter().map(|p| p[j])) / config.paths as f64;
            (n, config.horizon / n as f64, e)
        })
        .collect();
    Ok(ErrorCurve::new(amplitude, points))
}

/// [`error_curve`] for a single step count `N`.
pub fn estimate_error(config: &StudyConfig, steps: usize, amplitude: f64) -> Result<f64> {
    let single = StudyConfig { n_list: vec![steps], ..config.clone() };
    Ok(error_curve(&single, amplitude)?.points[0].2)
}

/// `sup_n E[max_K |uⁿ_K − ũⁿ_K|]` between the coupled and the splitting
/// scheme for each `N` in `config.n_list`; `ε` must be fixed.
pub fn splitting_error_study(config: &StudyConfig, amplitude: f64) -> Result<ErrorCurve> {
    config.validate()?;
    if !matches!(config.epsilon, EpsilonSchedule::Fixed(_)) {
        return Err(Error::InvalidConfig("splitting error study needs a fixed epsilon".into()));
    }
    let disc = config.discretization()?;
    let u0 = config.initial.discretize(&disc)?;
    let mut points = Vec::with_capacity(config.n_list.len());
    for &n in &config.n_list {
        let params = config.scheme(n, amplitude)?;
        let stepper = Stepper::new(&disc, &params)?;
        let per_path: Vec<Vec<f64>> = (0..config.paths as u64)
            .into_par_iter()
            .map(|i| -> Result<Vec<f64>> {
                let path = sample_path(config.seed, i, config.horizon, config.n_max)?;
                let dw = path.aggregate_increments(n)?;
                let (mut u, mut v) = (u0.clone(), u0.clone());
                dw.iter()
                    .map(|&w| {
                        u = stepper.coupled_step(&u, w)?;
                        v = stepper.splitting_step(&v, w)?;
                        Ok(u.max_abs_diff(&v))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let sup = (0..n)
            .map(|k| compensated_sum(per_path.iter().map(|p| p[k])) / config.paths as f64)
            .fold(0.0, f64::max);
        points.push((n, config.horizon / n as f64, sup));
    }
    Ok(ErrorCurve::new(amplitude, points))
}

pub fn write_expectation_csv<W: Write>(mut out: W, rows: &[ExpectationEstimate]) -> Result<()> {
    writeln!(out, "a,n,N,E,absdiff")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{}", fmt_f64(r.amplitude), r.n, r.steps, fmt_f64(r.mean), fmt_f64(r.abs_diff))?;
    }
    Ok(())
}

pub fn write_error_csv<W: Write>(mut out: W, curves: &[ErrorCurve]) -> Result<()> {
    writeln!(out, "a,N,tau,E")?;
    for c in curves {
        for &(n, tau, e) in &c.points {
            writeln!(out, "{},{n},{},{}", fmt_f64(c.amplitude), fmt_f64(tau), fmt_f64(e))?;
        }
    }
    Ok(())
}

/// Curves without a fit (vanishing errors) are skipped.
pub fn write_fit_csv<W: Write>(mut out: W, curves: &[ErrorCurve]) -> Result<()> {
    writeln!(out, "a,m,intercept")?;
    for c in curves {
        if let Some(f) = c.fit {
            writeln!(out, "{},{},{}", fmt_f64(c.amplitude), fmt_f64(f.slope), fmt_f64(f.intercept))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> StudyConfig {
        StudyConfig {
            cells_per_axis: 2,
            steps: 16,
            n_max: 48,
            n_list: vec![4, 8, 12, 24, 48],
            paths: 12,
            amplitudes: vec![1.0],
            checkpoints: vec![2, 16],
            ..StudyConfig::desk_convergence()
        }
    }

    #[test]
    fn fit_examples() {
        let taus = [0.5, 0.25, 0.1, 0.01];
        let lin: Vec<_> = taus.iter().map(|&t| (t, 3.0 * t)).collect();
        let quad: Vec<_> = taus.iter().map(|&t| (t, 5.0 * t * t)).collect();
        let f1 = fit_convergence_order(&lin).unwrap();
        assert!((f1.slope - 1.0).abs() < 1e-12);
        assert!((f1.intercept - 3f64.ln()).abs() < 1e-12);
        assert!((fit_convergence_order(&quad).unwrap().slope - 2.0).abs() < 1e-12);
        assert!(fit_convergence_order(&lin[..1]).is_err());
        assert!(fit_convergence_order(&[(0.1, 1.0), (0.1, 2.0)]).is_err());
        assert!(fit_convergence_order(&[(0.1, 0.0), (0.2, 2.0)]).is_err());
    }

    #[test]
    fn config_validation() {
        tiny().validate().unwrap();
        StudyConfig::full_convergence().validate().unwrap();
        StudyConfig::full_convergence_extended().validate().unwrap();
        StudyConfig::full_expectation().validate().unwrap();
        StudyConfig::desk_expectation().validate().unwrap();
        StudyConfig::desk_splitting_error().validate().unwrap();
        assert!(StudyConfig { n_list: vec![5], ..tiny() }.validate().is_err());
        assert!(StudyConfig { paths: 0, ..tiny() }.validate().is_err());
        assert!(StudyConfig { amplitudes: vec![-1.0], ..tiny() }.validate().is_err());
        assert!(StudyConfig { checkpoints: vec![17], ..tiny() }.validate().is_err());
        assert!(StudyConfig { epsilon: EpsilonSchedule::Fixed(0.0), ..tiny() }.validate().is_err());
    }

    #[test]
    fn reference_mean_on_five_by_five() {
        let config = StudyConfig::desk_expectation();
        let u0 = config.initial.discretize(&config.discretization().unwrap()).unwrap();
        assert!((field_mean(&u0) - golden::INITIAL_MEAN).abs() < 1e-7);
    }

    #[test]
    fn affine_datum() {
        let config = StudyConfig { cells_per_axis: 2, ..tiny() };
        let disc = config.discretization().unwrap();
        let base = InitialDatum::Reference.discretize(&disc).unwrap();
        let affine = InitialDatum::Affine { scale: 2.0, shift: -0.5 }.discretize(&disc).unwrap();
        for (b, a) in base.iter().zip(affine.iter()) {
            assert!((a - (2.0 * b - 0.5)).abs() < 1e-14);
        }
    }

    #[test]
    fn noiseless_expectation_is_conserved() {
        let rows = estimate_expectation(&tiny(), 0.0).unwrap();
        assert_eq!(rows.len(), 2);
        for r in rows {
            assert!(r.abs_diff <= 1e-9, "{r:?}");
        }
    }

    #[test]
    fn error_vanishes_at_n_max_and_for_constants() {
        let config = tiny();
        assert_eq!(estimate_error(&config, 48, 1.0).unwrap(), 0.0);
        let flat = StudyConfig { initial: InitialDatum::Constant(0.3), epsilon: EpsilonSchedule::Fixed(0.01), ..tiny() };
        let curve = error_curve(&flat, 0.0).unwrap();
        assert!(curve.points.iter().all(|p| p.2 <= 1e-12));
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let config = tiny();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
                (error_curve(&config, 5.0).unwrap(), estimate_expectation(&config, 10.0).unwrap())
            })
        };
        let (a, b) = (run(1), run(4));
        assert_eq!(a, b);
        let (mut x, mut y) = (Vec::new(), Vec::new());
        write_error_csv(&mut x, std::slice::from_ref(&a.0)).unwrap();
        write_error_csv(&mut y, &[b.0]).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn fit_is_scale_invariant() {
        let curve = error_curve(&StudyConfig { n_list: vec![4, 8, 12, 24], ..tiny() }, 1.0).unwrap();
        let fit = curve.fit.unwrap();
        let scaled: Vec<_> = curve.points.iter().map(|&(_, t, e)| (t, 7.5 * e)).collect();
        let refit = fit_convergence_order(&scaled).unwrap();
        assert!((refit.slope - fit.slope).abs() < 1e-12);
        assert!((refit.intercept - fit.intercept - 7.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn splitting_study_trivial_and_guarded() {
        let flat = StudyConfig {
            initial: InitialDatum::Constant(0.4),
            epsilon: EpsilonSchedule::Fixed(0.05),
            n_max: 16,
            n_list: vec![4, 8, 16],
            paths: 4,
            ..tiny()
        };
        let curve = splitting_error_study(&flat, 0.0).unwrap();
        assert!(curve.points.iter().all(|p| p.2 == 0.0));
        assert!(curve.fit.is_none());
        let power = StudyConfig { epsilon: EpsilonSchedule::default(), ..flat };
        assert!(splitting_error_study(&power, 0.0).is_err());
    }

    #[test]
    fn csv_headers() {
        let rows = estimate_expectation(&StudyConfig { paths: 2, ..tiny() }, 1.0).unwrap();
        let mut buf = Vec::new();
        write_expectation_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "a,n,N,E,absdiff");
        assert!(text.lines().nth(1).unwrap().starts_with("1.0000000000000000e0,2,16,"));
        let mut buf = Vec::new();
        write_fit_csv(&mut buf, &[]).unwrap();
        assert_eq!(buf, b"a,m,intercept\n");
    }
}
