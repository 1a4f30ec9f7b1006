//! B-spline basis functions: evaluation by the Cox–de Boor recursion and
//! exact integration over the observation window.
//!
//! Every rate function in this crate is a nonnegative linear combination of
//! these basis functions. The basis is clamped on `[0, T]`: boundary knots
//! are repeated `order` times so the first (last) basis function takes the
//! value 1 at 0 (at T).

use crate::error::{Error, Result};
use crate::numeric::gauss_legendre;
use serde::{Deserialize, Serialize};

/// A clamped B-spline family on `[0, domain_end]`.
///
/// `order` is the polynomial degree plus one (cubic splines have order 4).
/// The number of basis functions is `knots.len() - order`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBasisSpec", into = "RawBasisSpec")]
pub struct BasisSpec {
    order: usize,
    knots: Vec<f64>,
    domain_end: f64,
}

#[derive(Serialize, Deserialize)]
struct RawBasisSpec {
    order: usize,
    knots: Vec<f64>,
    domain_end: f64,
}

impl From<BasisSpec> for RawBasisSpec {
    fn from(spec: BasisSpec) -> Self {
        RawBasisSpec {
            order: spec.order,
            knots: spec.knots,
            domain_end: spec.domain_end,
        }
    }
}

impl TryFrom<RawBasisSpec> for BasisSpec {
    type Error = Error;

    fn try_from(raw: RawBasisSpec) -> Result<Self> {
        BasisSpec::new(raw.order, raw.knots, raw.domain_end)
    }
}

impl BasisSpec {
    /// Build a spec from an explicit knot vector.
    ///
    /// The knots must be finite, nondecreasing, and clamped: exactly `order`
    /// copies of 0 at the start and `order` copies of `domain_end` at the end.
    pub fn new(order: usize, knots: Vec<f64>, domain_end: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidBasis("order must be at least 1".into()));
        }
        if !(domain_end.is_finite() && domain_end > 0.0) {
            return Err(Error::InvalidBasis(format!(
                "domain end must be finite and positive, got {domain_end}"
            )));
        }
        if knots.len() < 2 * order {
            return Err(Error::InvalidBasis(format!(
                "need at least {} knots for order {order}, got {}",
                2 * order,
                knots.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::InvalidBasis("knots must be finite".into()));
        }
        if knots.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidBasis("knots must be nondecreasing".into()));
        }
        if knots[..order].iter().any(|&k| k != 0.0) {
            return Err(Error::InvalidBasis(format!(
                "first {order} knots must equal 0"
            )));
        }
        let tail = &knots[knots.len() - order..];
        if tail.iter().any(|&k| k != domain_end) {
            return Err(Error::InvalidBasis(format!(
                "last {order} knots must equal the domain end {domain_end}"
            )));
        }
        // "Exactly order-fold" clamping: the adjacent knots must leave the boundary.
        if knots.len() > 2 * order && (knots[order] <= 0.0 || knots[knots.len() - order - 1] >= domain_end)
        {
            return Err(Error::InvalidBasis(
                "boundary knots must be repeated exactly `order` times".into(),
            ));
        }
        Ok(BasisSpec {
            order,
            knots,
            domain_end,
        })
    }

    /// Uniformly spaced interior knots with clamped boundaries.
    ///
    /// `n_basis` must be at least `order`; the interior holds
    /// `n_basis - order` knots splitting `[0, domain_end]` into
    /// `n_basis - order + 1` equal spans.
    pub fn uniform(order: usize, n_basis: usize, domain_end: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidBasis("order must be at least 1".into()));
        }
        if n_basis < order {
            return Err(Error::InvalidBasis(format!(
                "need at least {order} basis functions for order {order}, got {n_basis}"
            )));
        }
        if !(domain_end.is_finite() && domain_end > 0.0) {
            return Err(Error::InvalidBasis(format!(
                "domain end must be finite and positive, got {domain_end}"
            )));
        }
        let spans = n_basis - order + 1;
        let mut knots = Vec::with_capacity(n_basis + order);
        knots.extend(std::iter::repeat_n(0.0, order));
        for j in 1..spans {
            knots.push(domain_end * j as f64 / spans as f64);
        }
        knots.extend(std::iter::repeat_n(domain_end, order));
        Self::new(order, knots, domain_end)
    }

    /// Cubic (order 4) uniform spec; the default family for rate fitting.
    pub fn cubic(n_basis: usize, domain_end: f64) -> Result<Self> {
        Self::uniform(4, n_basis, domain_end)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of basis functions (`knots.len() - order`).
    pub fn basis_count(&self) -> usize {
        self.knots.len() - self.order
    }

    pub fn domain_end(&self) -> f64 {
        self.domain_end
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    fn check_domain(&self, t: f64) -> Result<()> {
        if !t.is_finite() || t < 0.0 || t > self.domain_end {
            return Err(Error::OutOfWindow {
                t,
                window_end: self.domain_end,
            });
        }
        Ok(())
    }

    /// All basis function values at `t` as a dense vector of length
    /// `basis_count()`. At most `order` entries are nonzero and they sum to 1.
    pub fn evaluate(&self, t: f64) -> Result<Vec<f64>> {
        self.check_domain(t)?;
        let (offset, values) = self.nonzero_at(t);
        let mut dense = vec![0.0; self.basis_count()];
        dense[offset..offset + values.len()].copy_from_slice(&values);
        Ok(dense)
    }

    /// The nonzero basis values at `t`: `(first_index, values)` with
    /// `values.len() == order`, covering indices `first_index..first_index+order`.
    pub fn evaluate_nonzero(&self, t: f64) -> Result<(usize, Vec<f64>)> {
        self.check_domain(t)?;
        Ok(self.nonzero_at(t))
    }

    /// Cox–de Boor evaluation on a pre-validated `t`.
    pub(crate) fn nonzero_at(&self, t: f64) -> (usize, Vec<f64>) {
        let degree = self.order - 1;
        let span = self.find_span(t);
        let values = self.basis_values(span, t);
        (span - degree, values)
    }

    /// Knot span index with `knots[span] <= t < knots[span+1]`, clamped so the
    /// span is always nonempty (t == domain_end maps to the last span).
    fn find_span(&self, t: f64) -> usize {
        let degree = self.order - 1;
        let n = self.basis_count() - 1;
        if t >= self.knots[n + 1] {
            return n;
        }
        if t <= self.knots[degree] {
            return degree;
        }
        let mut lo = degree;
        let mut hi = n + 1;
        let mut mid = (lo + hi) / 2;
        while t < self.knots[mid] || t >= self.knots[mid + 1] {
            if t < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
            mid = (lo + hi) / 2;
        }
        mid
    }

    /// The `order` nonzero basis values on `span` (Cox–de Boor triangle).
    fn basis_values(&self, span: usize, t: f64) -> Vec<f64> {
        let degree = self.order - 1;
        let mut values = vec![0.0; self.order];
        let mut left = vec![0.0; self.order];
        let mut right = vec![0.0; self.order];
        values[0] = 1.0;
        for j in 1..=degree {
            left[j] = t - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = values[r] / (right[r + 1] + left[j - r]);
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        values
    }

    /// Exact integrals `∫_0^T B_m` for every basis function.
    ///
    /// Uses per-span Gauss–Legendre quadrature of order `ceil(order / 2)`,
    /// which is exact for the piecewise polynomials of the basis degree.
    pub fn integrals(&self) -> Vec<f64> {
        let q = self.order.div_ceil(2);
        let (nodes, weights) = gauss_legendre(q);
        let mut out = vec![0.0; self.basis_count()];
        let degree = self.order - 1;
        for span in degree..self.basis_count() {
            let a = self.knots[span];
            let b = self.knots[span + 1];
            if b <= a {
                continue;
            }
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (x, w) in nodes.iter().zip(&weights) {
                let t = mid + half * x;
                let values = self.basis_values(span, t);
                for (j, v) in values.iter().enumerate() {
                    out[span - degree + j] += w * half * v;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn clamped_end_knot_puts_all_mass_on_first_function() {
        let spec = BasisSpec::cubic(10, 1.0).unwrap();
        let values = spec.evaluate(0.0).unwrap();
        assert_relative_eq!(values[0], 1.0, max_relative = 1e-14);
        assert!(values[1..].iter().all(|&v| v == 0.0));
        let values_end = spec.evaluate(1.0).unwrap();
        assert_relative_eq!(values_end[9], 1.0, max_relative = 1e-14);
    }

    #[test]
    fn order_one_basis_is_an_indicator() {
        let spec = BasisSpec::new(1, vec![0.0, 0.5, 1.0], 1.0).unwrap();
        assert_eq!(spec.basis_count(), 2);
        let values = spec.evaluate(0.25).unwrap();
        assert_eq!(values, vec![1.0, 0.0]);
        let values = spec.evaluate(0.75).unwrap();
        assert_eq!(values, vec![0.0, 1.0]);
    }

    #[test]
    fn order_one_integrals_are_span_widths() {
        let spec = BasisSpec::new(1, vec![0.0, 0.5, 1.0], 1.0).unwrap();
        let ints = spec.integrals();
        assert_relative_eq!(ints[0], 0.5, max_relative = 1e-14);
        assert_relative_eq!(ints[1], 0.5, max_relative = 1e-14);
    }

    #[test]
    fn integrals_sum_to_domain_length() {
        for (order, n_basis, end) in [(1, 5, 2.0), (2, 7, 3.0), (4, 10, 1.0), (4, 100, 6.5)] {
            let spec = BasisSpec::uniform(order, n_basis, end).unwrap();
            let total: f64 = spec.integrals().iter().sum();
            assert_relative_eq!(total, end, max_relative = 1e-12);
        }
    }

    #[test]
    fn integrals_match_dense_grid_quadrature() {
        // Composite-trapezoid oracle on a 10^5-point grid.
        let spec = BasisSpec::cubic(10, 1.0).unwrap();
        let n_grid = 100_000usize;
        let h = 1.0 / n_grid as f64;
        let mut oracle = vec![0.0; spec.basis_count()];
        for i in 0..=n_grid {
            let t = i as f64 * h;
            let weight = if i == 0 || i == n_grid { 0.5 } else { 1.0 };
            for (j, v) in spec.evaluate(t).unwrap().iter().enumerate() {
                oracle[j] += weight * h * v;
            }
        }
        let exact = spec.integrals();
        for (e, o) in exact.iter().zip(&oracle) {
            assert_relative_eq!(e, o, max_relative = 1e-8);
        }
    }

    #[test]
    fn local_support_bounded_by_order() {
        let spec = BasisSpec::cubic(20, 2.0).unwrap();
        for i in 0..=1000 {
            let t = 2.0 * i as f64 / 1000.0;
            let nonzero = spec
                .evaluate(t)
                .unwrap()
                .iter()
                .filter(|&&v| v > 0.0)
                .count();
            assert!(nonzero <= spec.order(), "support {nonzero} at t={t}");
        }
    }

    #[test]
    fn out_of_domain_is_an_error() {
        let spec = BasisSpec::cubic(10, 1.0).unwrap();
        assert!(matches!(
            spec.evaluate(-0.1),
            Err(Error::OutOfWindow { .. })
        ));
        assert!(matches!(spec.evaluate(1.1), Err(Error::OutOfWindow { .. })));
        assert!(spec.evaluate(f64::NAN).is_err());
    }

    #[test]
    fn rejects_malformed_knot_vectors() {
        assert!(BasisSpec::new(4, vec![0.0; 3], 1.0).is_err());
        // Not clamped at the end.
        assert!(BasisSpec::new(2, vec![0.0, 0.0, 0.5, 0.9], 1.0).is_err());
        // Decreasing interior.
        assert!(BasisSpec::new(2, vec![0.0, 0.0, 0.7, 0.3, 1.0, 1.0], 1.0).is_err());
        // Over-clamped boundary (order+1 repeats).
        assert!(BasisSpec::new(2, vec![0.0, 0.0, 0.0, 1.0, 1.0], 1.0).is_err());
        assert!(BasisSpec::uniform(4, 3, 1.0).is_err());
        assert!(BasisSpec::uniform(4, 10, -1.0).is_err());
    }

    #[test]
    fn minimal_clamped_spec_has_single_span() {
        // n_basis == order: Bernstein basis on [0, T].
        let spec = BasisSpec::uniform(4, 4, 2.0).unwrap();
        let values = spec.evaluate(1.0).unwrap();
        assert_relative_eq!(values.iter().sum::<f64>(), 1.0, max_relative = 1e-14);
        // Bernstein at the midpoint: (1/8, 3/8, 3/8, 1/8).
        assert_relative_eq!(values[0], 0.125, max_relative = 1e-12);
        assert_relative_eq!(values[1], 0.375, max_relative = 1e-12);
    }

    #[test]
    fn serde_round_trip_preserves_spec() {
        let spec = BasisSpec::cubic(12, 3.5).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back: BasisSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
        // Deserialization re-validates.
        let bad = r#"{"order":4,"knots":[0.0,0.0,0.0,0.0,1.0,1.0,1.0,1.0],"domain_end":2.0}"#;
        assert!(serde_json::from_str::<BasisSpec>(bad).is_err());
    }

    proptest! {
        #[test]
        fn partition_of_unity(t in 0.0f64..=5.0, n_basis in 4usize..40, order in 1usize..6) {
            let n_basis = n_basis.max(order);
            let spec = BasisSpec::uniform(order, n_basis, 5.0).unwrap();
            let values = spec.evaluate(t).unwrap();
            let sum: f64 = values.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12, "sum {} at t={}", sum, t);
            prop_assert!(values.iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn dense_and_sparse_evaluation_agree(t in 0.0f64..=1.0) {
            let spec = BasisSpec::cubic(15, 1.0).unwrap();
            let dense = spec.evaluate(t).unwrap();
            let (offset, values) = spec.evaluate_nonzero(t).unwrap();
            for (j, d) in dense.iter().enumerate() {
                let sparse = if j >= offset && j < offset + values.len() {
                    values[j - offset]
                } else {
                    0.0
                };
                prop_assert!((d - sparse).abs() < 1e-15);
            }
        }
    }
}
