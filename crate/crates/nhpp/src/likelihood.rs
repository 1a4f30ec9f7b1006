//! NHPP likelihood machinery for spline rate functions.
//!
//! A rate model is `λ(t) = Σ_m c_m B_m(t)` with nonnegative coefficients.
//! The log-likelihood of a series observed on `(0, T]` is
//! `-M(T) + Σ_i ln λ(χ_i)` with `M(T) = ∫_0^T λ`; all event terms are
//! accumulated in log space so series with tens of thousands of events
//! never form a product of rates.

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// One observation: strictly increasing event times on `(0, window_end]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEventSeries", into = "RawEventSeries")]
pub struct EventSeries {
    id: String,
    times: Vec<f64>,
    window_end: f64,
}

#[derive(Serialize, Deserialize)]
struct RawEventSeries {
    id: String,
    times: Vec<f64>,
    window_end: f64,
}

impl From<EventSeries> for RawEventSeries {
    fn from(s: EventSeries) -> Self {
        RawEventSeries {
            id: s.id,
            times: s.times,
            window_end: s.window_end,
        }
    }
}

impl TryFrom<RawEventSeries> for EventSeries {
    type Error = Error;
    fn try_from(raw: RawEventSeries) -> Result<Self> {
        EventSeries::new(raw.id, raw.times, raw.window_end)
    }
}

impl EventSeries {
    /// Validates that every time lies in `(0, window_end]` and the sequence is
    /// strictly increasing. Empty series are allowed.
    pub fn new(id: impl Into<String>, times: Vec<f64>, window_end: f64) -> Result<Self> {
        if !(window_end.is_finite() && window_end > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "window end must be finite and positive, got {window_end}"
            )));
        }
        for &t in &times {
            if !t.is_finite() || t <= 0.0 || t > window_end {
                return Err(Error::OutOfWindow { t, window_end });
            }
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "event times must be strictly increasing (duplicates rejected)".into(),
            ));
        }
        Ok(EventSeries {
            id: id.into(),
            times,
            window_end,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Same series under a different identifier.
    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn window_end(&self) -> f64 {
        self.window_end
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// A spline rate function: a basis plus nonnegative coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRateModel", into = "RawRateModel")]
pub struct RateModel {
    basis: BasisSpec,
    coeffs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawRateModel {
    basis: BasisSpec,
    coeffs: Vec<f64>,
}

impl From<RateModel> for RawRateModel {
    fn from(m: RateModel) -> Self {
        RawRateModel {
            basis: m.basis,
            coeffs: m.coeffs,
        }
    }
}

impl TryFrom<RawRateModel> for RateModel {
    type Error = Error;
    fn try_from(raw: RawRateModel) -> Result<Self> {
        RateModel::new(raw.basis, raw.coeffs)
    }
}

impl RateModel {
    /// Coefficients must be finite and nonnegative, which guarantees
    /// `λ(t) ≥ 0` everywhere since the basis functions are nonnegative.
    pub fn new(basis: BasisSpec, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.basis_count() {
            return Err(Error::InvalidArgument(format!(
                "coefficient count {} does not match basis count {}",
                coeffs.len(),
                basis.basis_count()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidArgument(
                "coefficients must be finite and nonnegative".into(),
            ));
        }
        Ok(RateModel { basis, coeffs })
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `λ(t) = Σ_m c_m B_m(t)`.
    pub fn rate_at(&self, t: f64) -> Result<f64> {
        let (offset, values) = self.basis.evaluate_nonzero(t)?;
        Ok(sparse_dot(&self.coeffs, offset, &values))
    }

    /// `M(T) = Σ_m c_m ∫_0^T B_m`, the expected event count on the window.
    pub fn cumulative_intensity(&self) -> f64 {
        self.basis
            .integrals()
            .iter()
            .zip(&self.coeffs)
            .map(|(i, c)| i * c)
            .sum()
    }

    /// `-M(T) + Σ_i ln λ(χ_i)`; returns `-inf` when the rate vanishes at any
    /// event time (an impossible sample, not an error).
    pub fn log_likelihood(&self, series: &EventSeries) -> Result<f64> {
        check_window(series, &self.basis)?;
        let mut sum = -self.cumulative_intensity();
        for &t in series.times() {
            let rate = sparse_rate(&self.basis, &self.coeffs, t);
            if rate <= 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            sum += rate.ln();
        }
        Ok(sum)
    }
}

/// The fitting objective `f(c) = M(T) - Σ_i ln λ(χ_i)`, the negative
/// log-likelihood minimized by the solver.
pub fn objective(model: &RateModel, series: &EventSeries) -> Result<f64> {
    Ok(-model.log_likelihood(series)?)
}

/// Gradient of the objective: `∇_j f = ∫_0^T B_j - Σ_i B_j(χ_i) / λ(χ_i)`.
///
/// Unlike [`RateModel::log_likelihood`], a vanishing rate at an event time is
/// an error here: gradient-based solvers must stay strictly interior.
pub fn objective_gradient(model: &RateModel, series: &EventSeries) -> Result<Vec<f64>> {
    check_window(series, &model.basis)?;
    let design = WeightedEventDesign::build(&model.basis, &[(series, 1.0)])?;
    design.gradient(&model.coeffs)
}

/// Hessian of the objective:
/// `H_{s,u} = Σ_i B_s(χ_i) B_u(χ_i) / λ(χ_i)²`, symmetric PSD.
pub fn objective_hessian(model: &RateModel, series: &EventSeries) -> Result<DMatrix<f64>> {
    check_window(series, &model.basis)?;
    let design = WeightedEventDesign::build(&model.basis, &[(series, 1.0)])?;
    design.hessian(&model.coeffs)
}

fn check_window(series: &EventSeries, basis: &BasisSpec) -> Result<()> {
    if series.window_end() != basis.domain_end() {
        return Err(Error::WindowMismatch {
            series: series.window_end(),
            basis: basis.domain_end(),
        });
    }
    Ok(())
}

fn sparse_dot(coeffs: &[f64], offset: usize, values: &[f64]) -> f64 {
    values
        .iter()
        .zip(&coeffs[offset..offset + values.len()])
        .map(|(v, c)| v * c)
        .sum()
}

fn sparse_rate(basis: &BasisSpec, coeffs: &[f64], t: f64) -> f64 {
    let (offset, values) = basis.nonzero_at(t);
    sparse_dot(coeffs, offset, &values)
}

/// Precomputed basis values at every event of a weighted series collection.
///
/// `B_j(χ_i)` does not depend on the coefficients, so the solver assembles
/// this once per fit; objective, gradient, and Hessian evaluations then cost
/// `O(events × order)` / `O(events × order²)`.
#[derive(Debug, Clone)]
pub(crate) struct WeightedEventDesign {
    n_basis: usize,
    integrals: Vec<f64>,
    total_weight: f64,
    rows: Vec<DesignRow>,
}

#[derive(Debug, Clone)]
struct DesignRow {
    offset: usize,
    values: Vec<f64>,
    weight: f64,
    time: f64,
}

impl WeightedEventDesign {
    /// Events from zero-weight series are dropped; negative or non-finite
    /// weights are rejected.
    pub(crate) fn build(basis: &BasisSpec, series_set: &[(&EventSeries, f64)]) -> Result<Self> {
        let mut rows = Vec::new();
        let mut total_weight = 0.0;
        for (series, weight) in series_set {
            if !weight.is_finite() || *weight < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "series weight must be finite and nonnegative, got {weight}"
                )));
            }
            check_window(series, basis)?;
            total_weight += weight;
            if *weight == 0.0 {
                continue;
            }
            for &t in series.times() {
                let (offset, values) = basis.nonzero_at(t);
                rows.push(DesignRow {
                    offset,
                    values,
                    weight: *weight,
                    time: t,
                });
            }
        }
        Ok(WeightedEventDesign {
            n_basis: basis.basis_count(),
            integrals: basis.integrals(),
            total_weight,
            rows,
        })
    }

    pub(crate) fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub(crate) fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// `Σ_l w_l f_l(c)`; `+inf` when the rate vanishes at a weighted event.
    pub(crate) fn objective(&self, coeffs: &[f64]) -> f64 {
        let linear: f64 = self
            .integrals
            .iter()
            .zip(coeffs)
            .map(|(i, c)| i * c)
            .sum();
        let mut value = self.total_weight * linear;
        for row in &self.rows {
            let rate = sparse_dot(coeffs, row.offset, &row.values);
            if rate <= 0.0 {
                return f64::INFINITY;
            }
            value -= row.weight * rate.ln();
        }
        value
    }

    pub(crate) fn gradient(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        let mut grad: Vec<f64> = self
            .integrals
            .iter()
            .map(|i| i * self.total_weight)
            .collect();
        for row in &self.rows {
            let rate = sparse_dot(coeffs, row.offset, &row.values);
            if rate <= 0.0 {
                return Err(Error::ZeroRateAtEvent { t: row.time });
            }
            let scale = row.weight / rate;
            for (j, v) in row.values.iter().enumerate() {
                grad[row.offset + j] -= scale * v;
            }
        }
        Ok(grad)
    }

    pub(crate) fn hessian(&self, coeffs: &[f64]) -> Result<DMatrix<f64>> {
        let mut hess = DMatrix::zeros(self.n_basis, self.n_basis);
        self.add_hessian(coeffs, &mut hess)?;
        Ok(hess)
    }

    /// Diagonal of the event-term Hessian, `Σ_i w_i B_j(χ_i)² / λ(χ_i)²`.
    pub(crate) fn hessian_diagonal(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        let mut diag = vec![0.0; self.n_basis];
        for row in &self.rows {
            let rate = sparse_dot(coeffs, row.offset, &row.values);
            if rate <= 0.0 {
                return Err(Error::ZeroRateAtEvent { t: row.time });
            }
            let scale = row.weight / (rate * rate);
            for (j, v) in row.values.iter().enumerate() {
                diag[row.offset + j] += scale * v * v;
            }
        }
        Ok(diag)
    }

    /// Accumulates the event-term Hessian into `hess` (which the solver has
    /// already seeded with barrier curvature).
    pub(crate) fn add_hessian(&self, coeffs: &[f64], hess: &mut DMatrix<f64>) -> Result<()> {
        for row in &self.rows {
            let rate = sparse_dot(coeffs, row.offset, &row.values);
            if rate <= 0.0 {
                return Err(Error::ZeroRateAtEvent { t: row.time });
            }
            let scale = row.weight / (rate * rate);
            for (s, vs) in row.values.iter().enumerate() {
                for (u, vu) in row.values.iter().enumerate() {
                    hess[(row.offset + s, row.offset + u)] += scale * vs * vu;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn constant_model(value: f64, n_basis: usize, window: f64) -> RateModel {
        let basis = BasisSpec::cubic(n_basis, window).unwrap();
        RateModel::new(basis.clone(), vec![value; basis.basis_count()]).unwrap()
    }

    fn random_model_and_series(seed: u64, n_events: usize) -> (RateModel, EventSeries) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = BasisSpec::cubic(8, 1.0).unwrap();
        let coeffs: Vec<f64> = (0..8).map(|_| rng.gen_range(0.5..2.0)).collect();
        let model = RateModel::new(basis, coeffs).unwrap();
        let mut times: Vec<f64> = (0..n_events)
            .map(|_| rng.gen_range(1e-3..1.0))
            .collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup();
        let series = EventSeries::new("t", times, 1.0).unwrap();
        (model, series)
    }

    #[test]
    fn series_validation_rejects_bad_times() {
        assert!(EventSeries::new("a", vec![0.0], 1.0).is_err()); // t = 0 excluded
        assert!(EventSeries::new("a", vec![1.5], 1.0).is_err());
        assert!(EventSeries::new("a", vec![0.3, 0.3], 1.0).is_err()); // duplicate
        assert!(EventSeries::new("a", vec![0.5, 0.3], 1.0).is_err()); // unsorted
        assert!(EventSeries::new("a", vec![], 1.0).is_ok()); // empty allowed
        assert!(EventSeries::new("a", vec![1.0], 1.0).is_ok()); // t = T included
    }

    #[test]
    fn unit_coefficients_give_unit_rate() {
        // Partition of unity: all c_m = 1 makes λ ≡ 1.
        let model = constant_model(1.0, 12, 2.0);
        for i in 0..=50 {
            let t = 2.0 * i as f64 / 50.0;
            assert_relative_eq!(model.rate_at(t).unwrap(), 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_coefficients_give_zero_rate() {
        let model = constant_model(0.0, 8, 1.0);
        assert_eq!(model.rate_at(0.4).unwrap(), 0.0);
        assert_eq!(model.cumulative_intensity(), 0.0);
    }

    #[test]
    fn rate_matches_direct_dot_product() {
        let (model, _) = random_model_and_series(7, 0);
        let t = 0.5;
        let dense = model.basis().evaluate(t).unwrap();
        let oracle: f64 = dense
            .iter()
            .zip(model.coeffs())
            .map(|(b, c)| b * c)
            .sum();
        assert_relative_eq!(model.rate_at(t).unwrap(), oracle, max_relative = 1e-14);
    }

    #[test]
    fn unit_rate_cumulative_intensity_is_window_length() {
        let model = constant_model(1.0, 10, 10.0);
        assert_relative_eq!(model.cumulative_intensity(), 10.0, max_relative = 1e-12);
    }

    #[test]
    fn cumulative_intensity_matches_grid_quadrature() {
        let (model, _) = random_model_and_series(3, 0);
        let n = 200_000usize;
        let h = 1.0 / n as f64;
        let mut oracle = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            oracle += w * h * model.rate_at(i as f64 * h).unwrap();
        }
        assert_relative_eq!(model.cumulative_intensity(), oracle, max_relative = 1e-8);
    }

    #[test]
    fn empty_series_likelihood_is_negative_cumulative_intensity() {
        let model = constant_model(1.0, 10, 5.0);
        let series = EventSeries::new("e", vec![], 5.0).unwrap();
        assert_relative_eq!(
            model.log_likelihood(&series).unwrap(),
            -5.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn single_event_unit_rate_likelihood() {
        let model = constant_model(1.0, 10, 1.0);
        let series = EventSeries::new("s", vec![0.3], 1.0).unwrap();
        assert_relative_eq!(
            model.log_likelihood(&series).unwrap(),
            -1.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn piecewise_constant_likelihood_matches_hand_enumeration() {
        // λ = 2 on [0, 0.5), 4 on [0.5, 1]; events at 0.25, 0.6, 0.9.
        let basis = BasisSpec::new(1, vec![0.0, 0.5, 1.0], 1.0).unwrap();
        let model = RateModel::new(basis, vec![2.0, 4.0]).unwrap();
        let series = EventSeries::new("s", vec![0.25, 0.6, 0.9], 1.0).unwrap();
        let expected = -(2.0 * 0.5 + 4.0 * 0.5) + 2.0f64.ln() + 2.0 * 4.0f64.ln();
        assert_relative_eq!(
            model.log_likelihood(&series).unwrap(),
            expected,
            max_relative = 1e-12
        );
    }

    #[test]
    fn zero_rate_at_event_gives_neg_infinity_likelihood() {
        let basis = BasisSpec::new(1, vec![0.0, 0.5, 1.0], 1.0).unwrap();
        let model = RateModel::new(basis, vec![0.0, 4.0]).unwrap();
        let series = EventSeries::new("s", vec![0.25], 1.0).unwrap();
        assert_eq!(model.log_likelihood(&series).unwrap(), f64::NEG_INFINITY);
        // Gradient and Hessian treat the same point as an error.
        assert!(matches!(
            objective_gradient(&model, &series),
            Err(Error::ZeroRateAtEvent { .. })
        ));
        assert!(matches!(
            objective_hessian(&model, &series),
            Err(Error::ZeroRateAtEvent { .. })
        ));
    }

    #[test]
    fn window_mismatch_is_an_error() {
        let model = constant_model(1.0, 8, 1.0);
        let series = EventSeries::new("s", vec![0.5], 2.0).unwrap();
        assert!(matches!(
            model.log_likelihood(&series),
            Err(Error::WindowMismatch { .. })
        ));
    }

    #[test]
    fn objective_is_negated_log_likelihood() {
        let (model, series) = random_model_and_series(11, 20);
        let ll = model.log_likelihood(&series).unwrap();
        let f = objective(&model, &series).unwrap();
        assert_eq!(f, -ll);
    }

    #[test]
    fn gradient_of_empty_series_is_the_integral_vector() {
        let model = constant_model(1.5, 9, 2.0);
        let series = EventSeries::new("e", vec![], 2.0).unwrap();
        let grad = objective_gradient(&model, &series).unwrap();
        let ints = model.basis().integrals();
        for (g, i) in grad.iter().zip(&ints) {
            assert_relative_eq!(g, i, max_relative = 1e-14);
        }
    }

    #[test]
    fn unit_rate_gradient_has_unit_denominator() {
        // With λ ≡ 1 and one event at t: ∇_j f = ∫B_j − B_j(t).
        let model = constant_model(1.0, 9, 1.0);
        let t = 0.37;
        let series = EventSeries::new("s", vec![t], 1.0).unwrap();
        let grad = objective_gradient(&model, &series).unwrap();
        let ints = model.basis().integrals();
        let basis_at_t = model.basis().evaluate(t).unwrap();
        for j in 0..9 {
            assert_relative_eq!(grad[j], ints[j] - basis_at_t[j], max_relative = 1e-12);
        }
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        // 20 random feasible instances, step 1e-6, rel err < 1e-6 (abs floor 1e-8).
        for seed in 0..20 {
            let (model, series) = random_model_and_series(seed, 15);
            let grad = objective_gradient(&model, &series).unwrap();
            let h = 1e-6;
            for j in 0..model.coeffs().len() {
                let mut up = model.coeffs().to_vec();
                up[j] += h;
                let mut dn = model.coeffs().to_vec();
                dn[j] -= h;
                let f_up = objective(
                    &RateModel::new(model.basis().clone(), up).unwrap(),
                    &series,
                )
                .unwrap();
                let f_dn = objective(
                    &RateModel::new(model.basis().clone(), dn).unwrap(),
                    &series,
                )
                .unwrap();
                let fd = (f_up - f_dn) / (2.0 * h);
                let err = (grad[j] - fd).abs();
                let tol = 1e-6 * grad[j].abs().max(1e-8 / 1e-6);
                assert!(
                    err <= tol.max(1e-8),
                    "seed {seed} comp {j}: grad {} vs fd {}",
                    grad[j],
                    fd
                );
            }
        }
    }

    #[test]
    fn hessian_of_empty_series_is_zero() {
        let model = constant_model(1.0, 7, 1.0);
        let series = EventSeries::new("e", vec![], 1.0).unwrap();
        let hess = objective_hessian(&model, &series).unwrap();
        assert!(hess.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hessian_matches_explicit_design_matrix_product() {
        // H = XᵀX with X_{i,j} = B_j(χ_i) / λ(χ_i).
        let (model, series) = random_model_and_series(5, 12);
        let hess = objective_hessian(&model, &series).unwrap();
        let n = model.coeffs().len();
        let mut x = DMatrix::zeros(series.len(), n);
        for (i, &t) in series.times().iter().enumerate() {
            let rate = model.rate_at(t).unwrap();
            for (j, b) in model.basis().evaluate(t).unwrap().iter().enumerate() {
                x[(i, j)] = b / rate;
            }
        }
        let oracle = x.transpose() * &x;
        for s in 0..n {
            for u in 0..n {
                assert!(
                    (hess[(s, u)] - oracle[(s, u)]).abs() <= 1e-10,
                    "H[{s},{u}] = {} vs XᵀX = {}",
                    hess[(s, u)],
                    oracle[(s, u)]
                );
            }
        }
    }

    #[test]
    fn hessian_is_symmetric_and_psd() {
        for seed in [1, 2, 3] {
            let (model, series) = random_model_and_series(seed, 10);
            let hess = objective_hessian(&model, &series).unwrap();
            let n = model.coeffs().len();
            for s in 0..n {
                for u in 0..n {
                    assert!((hess[(s, u)] - hess[(u, s)]).abs() < 1e-12);
                }
            }
            let eigen = hess.clone().symmetric_eigen();
            let max = eigen.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
            let min = eigen
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            assert!(min >= -1e-8 * max, "min eig {min}, max eig {max}");
        }
    }

    #[test]
    fn hessian_matches_finite_differences_of_gradient() {
        let (model, series) = random_model_and_series(9, 10);
        let hess = objective_hessian(&model, &series).unwrap();
        let h = 1e-5;
        let n = model.coeffs().len();
        for j in 0..n {
            let mut up = model.coeffs().to_vec();
            up[j] += h;
            let mut dn = model.coeffs().to_vec();
            dn[j] -= h;
            let g_up = objective_gradient(
                &RateModel::new(model.basis().clone(), up).unwrap(),
                &series,
            )
            .unwrap();
            let g_dn = objective_gradient(
                &RateModel::new(model.basis().clone(), dn).unwrap(),
                &series,
            )
            .unwrap();
            for s in 0..n {
                let fd = (g_up[s] - g_dn[s]) / (2.0 * h);
                let denom = hess[(s, j)].abs().max(1e-4);
                assert!(
                    (hess[(s, j)] - fd).abs() / denom < 1e-4,
                    "H[{s},{j}] {} vs fd {}",
                    hess[(s, j)],
                    fd
                );
            }
        }
    }

    #[test]
    fn objective_is_convex_along_random_segments() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (model, series) = random_model_and_series(21, 25);
        let basis = model.basis().clone();
        let n = basis.basis_count();
        for _ in 0..5 {
            let c1: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..3.0)).collect();
            let c2: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..3.0)).collect();
            let f1 = objective(&RateModel::new(basis.clone(), c1.clone()).unwrap(), &series)
                .unwrap();
            let f2 = objective(&RateModel::new(basis.clone(), c2.clone()).unwrap(), &series)
                .unwrap();
            for k in 1..=10 {
                let theta = k as f64 / 11.0;
                let mix: Vec<f64> = c1
                    .iter()
                    .zip(&c2)
                    .map(|(a, b)| theta * a + (1.0 - theta) * b)
                    .collect();
                let f_mix =
                    objective(&RateModel::new(basis.clone(), mix).unwrap(), &series).unwrap();
                assert!(
                    f_mix <= theta * f1 + (1.0 - theta) * f2 + 1e-9,
                    "convexity violated at θ={theta}"
                );
            }
        }
    }
}
