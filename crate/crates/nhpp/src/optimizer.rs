//! Constrained maximum-likelihood fitting of spline rate coefficients.
//!
//! Minimizes the weighted negative log-likelihood `Σ_l w_l f_l(c)` subject to
//! `c_m ≥ coefficient_floor` with a log-barrier interior-point method.
//! Nonnegative coefficients are a sufficient condition for a nonnegative rate
//! because the basis functions are nonnegative; an optional flag adds barrier
//! terms on `λ(t)` at grid points for the functional form of the constraint.
//!
//! Each barrier stage runs backtracking Newton with the analytic gradient
//! and Hessian, then shrinks the barrier weight until the projected gradient
//! of the unbarriered objective meets the requested tolerance. When the
//! Newton system is ill-conditioned the step falls back to steepest descent.

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::likelihood::{EventSeries, WeightedEventDesign};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Solver settings. Defaults follow conventional interior-point practice;
/// the initial coefficient vector defaults to all ones.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    /// Cap on Newton/descent steps summed across all barrier stages.
    pub max_iterations: usize,
    /// Convergence threshold on the sup-norm of the projected gradient.
    pub gradient_tolerance: f64,
    /// Starting barrier weight.
    pub barrier_initial: f64,
    /// Barrier shrink factor per stage, in (0, 1).
    pub barrier_shrink: f64,
    /// Lower bound enforced on every coefficient.
    pub coefficient_floor: f64,
    /// Starting point; `None` means all ones.
    pub initial_coefficients: Option<Vec<f64>>,
    /// When positive, adds barrier terms on the rate at this many uniform
    /// grid points, realizing the pointwise-nonnegativity constraint
    /// directly. Zero disables the grid terms.
    pub rate_grid_constraints: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iterations: 200,
            gradient_tolerance: 1e-8,
            barrier_initial: 1.0,
            barrier_shrink: 0.2,
            coefficient_floor: 1e-10,
            initial_coefficients: None,
            rate_grid_constraints: 0,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if self.gradient_tolerance <= 0.0 {
            return Err(Error::InvalidArgument(
                "gradient tolerance must be positive".into(),
            ));
        }
        if !(self.barrier_shrink > 0.0 && self.barrier_shrink < 1.0) {
            return Err(Error::InvalidArgument(
                "barrier shrink factor must lie in (0, 1)".into(),
            ));
        }
        if self.barrier_initial <= 0.0 {
            return Err(Error::InvalidArgument(
                "initial barrier weight must be positive".into(),
            ));
        }
        if self.coefficient_floor < 0.0 || !self.coefficient_floor.is_finite() {
            return Err(Error::InvalidArgument(
                "coefficient floor must be finite and nonnegative".into(),
            ));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "iteration budget must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of a fit. `objective_trace` records the unbarriered objective at
/// the starting point and after each barrier stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub coefficients: Vec<f64>,
    pub final_objective: f64,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Condition-estimate threshold beyond which the Newton step is replaced by
/// steepest descent.
const CONDITION_LIMIT: f64 = 1e12;
const ARMIJO_SLOPE: f64 = 1e-4;

/// Fits coefficients minimizing `Σ_l w_l f_l(c)` over `c_m ≥ floor`.
///
/// With unit weights this is the pooled maximum-likelihood problem; with
/// responsibility weights it is the mixture M-step coefficient problem.
/// Non-convergence within the iteration budget is reported through
/// `converged`, not an error.
pub fn fit_mle(
    series_set: &[(&EventSeries, f64)],
    basis: &BasisSpec,
    config: &FitConfig,
) -> Result<FitReport> {
    config.validate()?;
    if series_set.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one weighted series".into(),
        ));
    }
    let design = WeightedEventDesign::build(basis, series_set)?;
    if design.total_weight() <= 0.0 {
        return Err(Error::InvalidArgument(
            "all series weights are zero".into(),
        ));
    }
    let n = basis.basis_count();
    let floor = config.coefficient_floor;

    let mut coeffs = match &config.initial_coefficients {
        Some(init) => {
            if init.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "initial coefficient count {} does not match basis count {n}",
                    init.len()
                )));
            }
            if init.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidArgument(
                    "initial coefficients must be finite".into(),
                ));
            }
            // Lift boundary or infeasible starts into the strict interior.
            init.iter().map(|&c| c.max(floor + 1e-6)).collect()
        }
        None => vec![1.0f64; n],
    };

    let grid = GridBarrier::build(basis, config.rate_grid_constraints);
    let n_barrier_terms = (n + grid.rows.len()) as f64;
    // Stage cutoff analogous to the duality gap μ·(constraint count).
    let mu_min = config.gradient_tolerance / n_barrier_terms;

    let mut mu = config.barrier_initial;
    let mut trace = vec![design.objective(&coeffs)];
    let mut steps = 0usize;
    let mut best_pg = f64::INFINITY;
    let mut pg_stalled = 0usize;

    let converged = loop {
        newton_stage(&design, &grid, &mut coeffs, floor, mu, config, &mut steps)?;
        trace.push(design.objective(&coeffs));
        if mu <= mu_min {
            let pg = projected_gradient_norm(&design, &coeffs, floor)?;
            if pg < config.gradient_tolerance {
                break true;
            }
            // Shrinking μ further only helps while it still moves the KKT
            // residual; stop once that has flatlined.
            if pg < 0.99 * best_pg {
                best_pg = pg;
                pg_stalled = 0;
            } else {
                pg_stalled += 1;
                if pg_stalled >= 4 {
                    break false;
                }
            }
        }
        if steps >= config.max_iterations || mu < 1e-30 {
            break projected_gradient_norm(&design, &coeffs, floor)?
                < config.gradient_tolerance;
        }
        // Predictor: a coefficient pinned by the barrier sits at
        // c - floor ≈ μ / ∇F with the objective effectively linear there
        // (negligible curvature over that distance). Rescaling it with μ
        // starts the next stage near its central point instead of recovering
        // from the shrink. Interior coefficients (curvature-dominated) are
        // left alone, as is anything the rescale would underflow onto the
        // floor.
        let grad = design.gradient(&coeffs)?;
        let curvature = design.hessian_diagonal(&coeffs)?;
        for ((c, &g), &h) in coeffs.iter_mut().zip(&grad).zip(&curvature) {
            let distance = *c - floor;
            let on_barrier_path = g > 0.0 && (distance * g / mu - 1.0).abs() < 0.5;
            let locally_linear = h * distance <= 0.1 * g;
            let shrunk = floor + distance * config.barrier_shrink;
            if on_barrier_path && locally_linear && shrunk > floor {
                *c = shrunk;
            }
        }
        mu *= config.barrier_shrink;
    };

    let final_objective = *trace.last().expect("trace is never empty");
    Ok(FitReport {
        coefficients: coeffs,
        final_objective,
        objective_trace: trace,
        iterations: steps,
        converged,
    })
}

/// Barrier terms on `λ(t_g)` at uniform grid points (empty when disabled).
struct GridBarrier {
    rows: Vec<(usize, Vec<f64>)>,
}

impl GridBarrier {
    fn build(basis: &BasisSpec, points: usize) -> Self {
        let rows = match points {
            0 => Vec::new(),
            1 => vec![basis.nonzero_at(0.5 * basis.domain_end())],
            p => (0..p)
                .map(|g| {
                    let t = basis.domain_end() * g as f64 / (p - 1) as f64;
                    basis.nonzero_at(t)
                })
                .collect(),
        };
        GridBarrier { rows }
    }

    fn rate(&self, row: &(usize, Vec<f64>), coeffs: &[f64]) -> f64 {
        row.1
            .iter()
            .zip(&coeffs[row.0..row.0 + row.1.len()])
            .map(|(v, c)| v * c)
            .sum()
    }
}

/// One barrier stage: backtracking Newton on
/// `F(c) - μ Σ ln(c_m - floor) - μ Σ_g ln λ(t_g)`.
fn newton_stage(
    design: &WeightedEventDesign,
    grid: &GridBarrier,
    coeffs: &mut Vec<f64>,
    floor: f64,
    mu: f64,
    config: &FitConfig,
    steps: &mut usize,
) -> Result<()> {
    let n = design.n_basis();
    let inner_tol = (0.1 * mu).max(0.1 * config.gradient_tolerance);
    let mut best_grad_norm = f64::INFINITY;
    let mut stalled_steps = 0usize;

    while *steps < config.max_iterations {
        let mut grad = design.gradient(coeffs)?;
        for (g, &c) in grad.iter_mut().zip(coeffs.iter()) {
            *g -= mu / (c - floor);
        }
        for row in &grid.rows {
            let rate = grid.rate(row, coeffs);
            let scale = mu / rate;
            for (j, v) in row.1.iter().enumerate() {
                grad[row.0 + j] -= scale * v;
            }
        }
        let grad_norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if grad_norm <= inner_tol {
            return Ok(());
        }
        // Stop the stage once the residual has hit its numerical floor.
        if grad_norm < 0.999 * best_grad_norm {
            best_grad_norm = grad_norm;
            stalled_steps = 0;
        } else {
            stalled_steps += 1;
            if stalled_steps >= 8 {
                return Ok(());
            }
        }

        let mut hess = DMatrix::zeros(n, n);
        design.add_hessian(coeffs, &mut hess)?;
        for (j, &c) in coeffs.iter().enumerate() {
            let d = c - floor;
            hess[(j, j)] += mu / (d * d);
        }
        for row in &grid.rows {
            let rate = grid.rate(row, coeffs);
            let scale = mu / (rate * rate);
            for (s, vs) in row.1.iter().enumerate() {
                for (u, vu) in row.1.iter().enumerate() {
                    hess[(row.0 + s, row.0 + u)] += scale * vs * vu;
                }
            }
        }

        let direction = newton_or_descent_direction(hess, &grad);
        let descent_slope: f64 = grad.iter().zip(&direction).map(|(g, d)| g * d).sum();
        // A non-descent direction means the system solve went bad; fall back.
        let (direction, descent_slope) = if descent_slope < 0.0 {
            (direction, descent_slope)
        } else {
            let d: Vec<f64> = grad.iter().map(|g| -g).collect();
            let slope = -grad.iter().map(|g| g * g).sum::<f64>();
            (d, slope)
        };

        if direction.iter().any(|d| !d.is_finite()) {
            return Ok(());
        }
        let phi0 = barrier_objective(design, grid, coeffs, floor, mu);
        // Backtrack by halving from the full step, skipping infeasible
        // candidates before evaluating the objective; halving (rather than
        // jumping to the feasibility boundary) avoids deep overshoot past
        // the barrier's central point. The noise allowance keeps the
        // sufficient-decrease test from stalling once the true decrease per
        // step falls below the rounding noise of φ.
        let noise_slack = 1e-12 * (1.0 + phi0.abs());
        let mut alpha: f64 = 1.0;
        let mut accepted = false;
        while alpha > 1e-18 {
            let candidate: Vec<f64> = coeffs
                .iter()
                .zip(&direction)
                .map(|(c, d)| c + alpha * d)
                .collect();
            if candidate.iter().all(|&c| c > floor && c.is_finite()) {
                let phi = barrier_objective(design, grid, &candidate, floor, mu);
                if phi <= phi0 + ARMIJO_SLOPE * alpha * descent_slope + noise_slack {
                    *coeffs = candidate;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        *steps += 1;
        if !accepted {
            // Numerical floor: no feasible decrease along the search direction.
            return Ok(());
        }
    }
    Ok(())
}

fn newton_or_descent_direction(hess: DMatrix<f64>, grad: &[f64]) -> Vec<f64> {
    match hess.cholesky() {
        Some(chol) => {
            let diag = chol.l_dirty().diagonal();
            let max_d = diag.iter().fold(0.0f64, |m, d| m.max(*d));
            let min_d = diag.iter().fold(f64::INFINITY, |m, d| m.min(*d));
            let condition = (max_d / min_d).powi(2);
            if !condition.is_finite() || condition > CONDITION_LIMIT {
                grad.iter().map(|g| -g).collect()
            } else {
                let rhs = DVector::from_iterator(grad.len(), grad.iter().map(|g| -g));
                chol.solve(&rhs).iter().copied().collect()
            }
        }
        None => grad.iter().map(|g| -g).collect(),
    }
}

fn barrier_objective(
    design: &WeightedEventDesign,
    grid: &GridBarrier,
    coeffs: &[f64],
    floor: f64,
    mu: f64,
) -> f64 {
    let mut value = design.objective(coeffs);
    for &c in coeffs {
        value -= mu * (c - floor).ln();
    }
    for row in &grid.rows {
        value -= mu * grid.rate(row, coeffs).ln();
    }
    value
}

/// Sup-norm of `c - Π(c - ∇F)` where Π clamps to the feasible box; the KKT
/// residual for bound-constrained minimization.
fn projected_gradient_norm(
    design: &WeightedEventDesign,
    coeffs: &[f64],
    floor: f64,
) -> Result<f64> {
    let grad = design.gradient(coeffs)?;
    Ok(coeffs
        .iter()
        .zip(&grad)
        .map(|(&c, &g)| (c - (c - g).max(floor)).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::RateModel;
    use approx::assert_relative_eq;

    fn evenly_spaced_series(n: usize, window: f64) -> EventSeries {
        let times: Vec<f64> = (1..=n).map(|i| window * i as f64 / (n + 1) as f64).collect();
        EventSeries::new("s", times, window).unwrap()
    }

    /// Events concentrated in the first half of the window, pseudo-random but
    /// deterministic.
    fn front_loaded_series(id: &str, n: usize, window: f64, salt: u64) -> EventSeries {
        let mut times: Vec<f64> = (0..n)
            .map(|i| {
                let x = ((i as u64 + 1).wrapping_mul(2654435761).wrapping_add(salt * 97) % 100_000)
                    as f64
                    / 100_000.0;
                0.5 * window * (0.02 + 0.96 * x)
            })
            .collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup();
        EventSeries::new(id, times, window).unwrap()
    }

    #[test]
    fn homogeneous_mle_has_closed_form() {
        // One constant basis function: λ ≡ c, minimizer of cT − N ln c is N/T.
        let window = 2.0;
        let basis = BasisSpec::uniform(1, 1, window).unwrap();
        let series = evenly_spaced_series(37, window);
        let report = fit_mle(&[(&series, 1.0)], &basis, &FitConfig::default()).unwrap();
        assert!(report.converged);
        assert_relative_eq!(report.coefficients[0], 37.0 / window, max_relative = 1e-8);
    }

    #[test]
    fn duplicated_half_weight_series_match_single_unit_weight() {
        let basis = BasisSpec::cubic(8, 1.0).unwrap();
        let series = evenly_spaced_series(40, 1.0);
        let single = fit_mle(&[(&series, 1.0)], &basis, &FitConfig::default()).unwrap();
        let split = fit_mle(
            &[(&series, 0.5), (&series, 0.5)],
            &basis,
            &FitConfig::default(),
        )
        .unwrap();
        for (a, b) in single.coefficients.iter().zip(&split.coefficients) {
            assert_relative_eq!(a, b, epsilon = 1e-9, max_relative = 1e-9);
        }
    }

    #[test]
    fn objective_trace_is_monotone_and_improves_on_start() {
        let basis = BasisSpec::cubic(10, 1.0).unwrap();
        let series = evenly_spaced_series(60, 1.0);
        let report = fit_mle(&[(&series, 1.0)], &basis, &FitConfig::default()).unwrap();
        for pair in report.objective_trace.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-9,
                "trace increased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
        assert!(report.final_objective <= report.objective_trace[0]);
    }

    #[test]
    fn solution_is_feasible_everywhere() {
        let basis = BasisSpec::cubic(12, 2.0).unwrap();
        let series = front_loaded_series("f", 80, 2.0, 1);
        let config = FitConfig::default();
        let report = fit_mle(&[(&series, 1.0)], &basis, &config).unwrap();
        assert!(report
            .coefficients
            .iter()
            .all(|&c| c >= config.coefficient_floor));
        let model = RateModel::new(basis, report.coefficients).unwrap();
        for i in 0..=10_000 {
            let t = 2.0 * i as f64 / 10_000.0;
            assert!(model.rate_at(t).unwrap() >= 0.0);
        }
    }

    #[test]
    fn unsupported_basis_regions_are_floored_not_failures() {
        // No events in the second half of the window: trailing coefficients
        // are driven to the floor, and the fit still converges.
        let basis = BasisSpec::cubic(12, 2.0).unwrap();
        let series = front_loaded_series("f", 120, 2.0, 3);
        let config = FitConfig::default();
        let report = fit_mle(&[(&series, 1.0)], &basis, &config).unwrap();
        assert!(report.converged);
        let last = *report.coefficients.last().unwrap();
        assert!(
            last <= config.coefficient_floor + 1e-6,
            "expected floored trailing coefficient, got {last}"
        );
    }

    #[test]
    fn doubling_iteration_budget_does_not_move_the_optimum() {
        let basis = BasisSpec::cubic(10, 1.0).unwrap();
        let series = evenly_spaced_series(50, 1.0);
        let base = fit_mle(&[(&series, 1.0)], &basis, &FitConfig::default()).unwrap();
        let doubled = fit_mle(
            &[(&series, 1.0)],
            &basis,
            &FitConfig {
                max_iterations: 400,
                ..FitConfig::default()
            },
        )
        .unwrap();
        let rel = (base.final_objective - doubled.final_objective).abs()
            / base.final_objective.abs().max(1.0);
        assert!(rel < 1e-6, "objective moved by rel {rel}");
    }

    #[test]
    fn weight_scaling_leaves_the_argmin_unchanged() {
        let basis = BasisSpec::cubic(9, 1.0).unwrap();
        let a = evenly_spaced_series(300, 1.0);
        let b = front_loaded_series("b", 250, 1.0, 7);
        let plain = fit_mle(&[(&a, 1.0), (&b, 2.0)], &basis, &FitConfig::default()).unwrap();
        let scaled = fit_mle(&[(&a, 10.0), (&b, 20.0)], &basis, &FitConfig::default()).unwrap();
        for (x, y) in plain.coefficients.iter().zip(&scaled.coefficients) {
            assert!((x - y).abs() < 1e-6, "coefficients diverged: {x} vs {y}");
        }
    }

    #[test]
    fn zero_weights_are_rejected() {
        let basis = BasisSpec::cubic(8, 1.0).unwrap();
        let series = evenly_spaced_series(10, 1.0);
        assert!(matches!(
            fit_mle(&[(&series, 0.0)], &basis, &FitConfig::default()),
            Err(Error::InvalidArgument(_))
        ));
        assert!(fit_mle(&[], &basis, &FitConfig::default()).is_err());
    }

    #[test]
    fn tiny_iteration_budget_reports_non_convergence() {
        let basis = BasisSpec::cubic(10, 1.0).unwrap();
        let series = evenly_spaced_series(50, 1.0);
        let report = fit_mle(
            &[(&series, 1.0)],
            &basis,
            &FitConfig {
                max_iterations: 2,
                ..FitConfig::default()
            },
        )
        .unwrap();
        assert!(!report.converged);
        assert_eq!(report.iterations, 2);
    }

    #[test]
    fn grid_constraint_barrier_agrees_with_coefficient_bounds() {
        let basis = BasisSpec::cubic(8, 1.0).unwrap();
        let series = evenly_spaced_series(40, 1.0);
        let plain = fit_mle(&[(&series, 1.0)], &basis, &FitConfig::default()).unwrap();
        let gridded = fit_mle(
            &[(&series, 1.0)],
            &basis,
            &FitConfig {
                rate_grid_constraints: 64,
                ..FitConfig::default()
            },
        )
        .unwrap();
        assert!(gridded.converged);
        for (a, b) in plain.coefficients.iter().zip(&gridded.coefficients) {
            assert!((a - b).abs() < 1e-4, "grid barrier moved solution: {a} vs {b}");
        }
    }

    #[test]
    fn infeasible_start_is_lifted_into_the_interior() {
        let basis = BasisSpec::cubic(6, 1.0).unwrap();
        let series = evenly_spaced_series(20, 1.0);
        let report = fit_mle(
            &[(&series, 1.0)],
            &basis,
            &FitConfig {
                initial_coefficients: Some(vec![0.0; 6]),
                ..FitConfig::default()
            },
        )
        .unwrap();
        assert!(report.converged);
    }

    #[test]
    fn pooled_fit_recovers_the_slow_sinusoid() {
        // 10 series thinned from 100·sin²(t/2); the fitted rate is compared
        // to the generator on a dense grid. Threshold calibrated once over
        // seeds 0..9 (range 0.121..0.151) and frozen.
        use crate::simulate::{thin, RateSpec, DEFAULT_SYNTHETIC_WINDOW};
        let window = DEFAULT_SYNTHETIC_WINDOW;
        let basis = BasisSpec::cubic(100, window).unwrap();
        let rate = RateSpec::sinusoidal_slow(window);
        let series: Vec<EventSeries> = (0..10).map(|i| thin(&rate, i).unwrap()).collect();
        let weighted: Vec<(&EventSeries, f64)> = series.iter().map(|s| (s, 1.0)).collect();
        let report = fit_mle(&weighted, &basis, &FitConfig::default()).unwrap();
        assert!(report.converged);
        let model = RateModel::new(basis, report.coefficients).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for g in 0..=2000 {
            let t = window * g as f64 / 2000.0;
            let diff = model.rate_at(t).unwrap() - rate.rate_at(t);
            num += diff * diff;
            den += rate.rate_at(t).powi(2);
        }
        let rel_l2 = (num / den).sqrt();
        assert!(rel_l2 < 0.15, "relative L2 error {rel_l2}");
    }

    #[test]
    fn weighted_fit_matches_pooled_fit_with_indicator_weights() {
        // Weight 1 on two series and 0 on a third = pooled fit of the two.
        let basis = BasisSpec::cubic(8, 1.0).unwrap();
        let a = evenly_spaced_series(30, 1.0);
        let b = front_loaded_series("b", 20, 1.0, 11);
        let c = front_loaded_series("c", 35, 1.0, 13);
        let with_zero = fit_mle(
            &[(&a, 1.0), (&b, 1.0), (&c, 0.0)],
            &basis,
            &FitConfig::default(),
        )
        .unwrap();
        let pooled = fit_mle(&[(&a, 1.0), (&b, 1.0)], &basis, &FitConfig::default()).unwrap();
        for (x, y) in with_zero.coefficients.iter().zip(&pooled.coefficients) {
            assert_relative_eq!(x, y, epsilon = 1e-10, max_relative = 1e-10);
        }
    }
}
