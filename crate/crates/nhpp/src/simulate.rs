//! Event generation by thinning, plus the built-in synthetic benchmark rates.
//!
//! Thinning draws candidates from a homogeneous process at a ceiling rate and
//! keeps each candidate at `t` with probability `λ(t) / ceiling`. The four
//! built-in rates (two squared sinusoids, an increasing and a decreasing step
//! function) combine into three labeled benchmark data sets.

use crate::classify::LabeledDataset;
use crate::error::{Error, Result};
use crate::likelihood::{EventSeries, RateModel};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Default observation window for the synthetic data sets: one full period
/// of the slow sinusoid, shared by all four generator rates.
pub const DEFAULT_SYNTHETIC_WINDOW: f64 = 2.0 * std::f64::consts::PI;

/// Functional form of a simulated rate.
#[derive(Debug, Clone)]
pub enum RateKind {
    /// `amplitude · sin²(angular_frequency · t)`.
    SquaredSine {
        amplitude: f64,
        angular_frequency: f64,
    },
    /// Four constant levels on the window quarters.
    Step { levels: [f64; 4] },
    /// A fitted spline rate.
    Spline(RateModel),
    /// Linear interpolation of uniform grid samples over the window.
    Table { values: Vec<f64> },
}

/// A simulable rate: functional form, window, and a ceiling that must
/// dominate the rate everywhere (checked per candidate during thinning).
#[derive(Debug, Clone)]
pub struct RateSpec {
    kind: RateKind,
    domain_end: f64,
    rate_ceiling: f64,
}

impl RateSpec {
    pub fn new(kind: RateKind, domain_end: f64, rate_ceiling: f64) -> Result<Self> {
        if !(domain_end.is_finite() && domain_end > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "domain end must be finite and positive, got {domain_end}"
            )));
        }
        if !rate_ceiling.is_finite() || rate_ceiling < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "rate ceiling must be finite and nonnegative, got {rate_ceiling}"
            )));
        }
        match &kind {
            RateKind::SquaredSine { amplitude, .. } => {
                if !amplitude.is_finite() || *amplitude < 0.0 {
                    return Err(Error::InvalidArgument(
                        "sinusoid amplitude must be finite and nonnegative".into(),
                    ));
                }
            }
            RateKind::Step { levels } => {
                if levels.iter().any(|l| !l.is_finite() || *l < 0.0) {
                    return Err(Error::InvalidArgument(
                        "step levels must be finite and nonnegative".into(),
                    ));
                }
            }
            RateKind::Spline(model) => {
                if model.basis().domain_end() != domain_end {
                    return Err(Error::InvalidArgument(
                        "spline domain must match the simulation window".into(),
                    ));
                }
            }
            RateKind::Table { values } => {
                if values.len() < 2 {
                    return Err(Error::InvalidArgument(
                        "table rates need at least two samples".into(),
                    ));
                }
                if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::InvalidArgument(
                        "table samples must be finite and nonnegative".into(),
                    ));
                }
            }
        }
        let spec = RateSpec {
            kind,
            domain_end,
            rate_ceiling,
        };
        if rate_ceiling == 0.0 {
            // A zero ceiling generates no candidates, so violations would go
            // undetected; insist the rate really is zero.
            for g in 0..=100 {
                let t = domain_end * g as f64 / 100.0;
                let rate = spec.rate_at(t);
                if rate > 0.0 {
                    return Err(Error::CeilingViolation {
                        t,
                        rate,
                        ceiling: 0.0,
                    });
                }
            }
        }
        Ok(spec)
    }

    /// `amplitude · sin²(t/2)`: one full period over `[0, 2π]`.
    pub fn sinusoidal_slow(domain_end: f64) -> Self {
        RateSpec::new(
            RateKind::SquaredSine {
                amplitude: 100.0,
                angular_frequency: 0.5,
            },
            domain_end,
            100.0,
        )
        .expect("built-in rate is valid")
    }

    /// `amplitude · sin²(t)`: twice the frequency of the slow sinusoid.
    pub fn sinusoidal_fast(domain_end: f64) -> Self {
        RateSpec::new(
            RateKind::SquaredSine {
                amplitude: 100.0,
                angular_frequency: 1.0,
            },
            domain_end,
            100.0,
        )
        .expect("built-in rate is valid")
    }

    /// Step levels 20/40/60/80 on the window quarters.
    pub fn step_up(domain_end: f64) -> Self {
        RateSpec::new(
            RateKind::Step {
                levels: [20.0, 40.0, 60.0, 80.0],
            },
            domain_end,
            80.0,
        )
        .expect("built-in rate is valid")
    }

    /// Step levels 80/60/40/20 on the window quarters.
    pub fn step_down(domain_end: f64) -> Self {
        RateSpec::new(
            RateKind::Step {
                levels: [80.0, 60.0, 40.0, 20.0],
            },
            domain_end,
            80.0,
        )
        .expect("built-in rate is valid")
    }

    /// Wraps a fitted spline rate; the ceiling is the maximum over a
    /// 10^4-point grid with a 1% safety margin, backed by the per-candidate
    /// runtime check.
    pub fn from_spline(model: RateModel) -> Result<Self> {
        let domain_end = model.basis().domain_end();
        let mut max_rate = 0.0f64;
        for g in 0..=10_000 {
            let t = domain_end * g as f64 / 10_000.0;
            max_rate = max_rate.max(model.rate_at(t)?);
        }
        RateSpec::new(RateKind::Spline(model), domain_end, max_rate * 1.01)
    }

    /// Linear-interpolation rate from uniform grid samples.
    pub fn from_table(values: Vec<f64>, domain_end: f64) -> Result<Self> {
        let max_rate = values.iter().copied().fold(0.0f64, f64::max);
        RateSpec::new(RateKind::Table { values }, domain_end, max_rate * 1.01)
    }

    pub fn domain_end(&self) -> f64 {
        self.domain_end
    }

    pub fn rate_ceiling(&self) -> f64 {
        self.rate_ceiling
    }

    /// The rate at `t`, clamped into the window.
    pub fn rate_at(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.domain_end);
        match &self.kind {
            RateKind::SquaredSine {
                amplitude,
                angular_frequency,
            } => amplitude * (angular_frequency * t).sin().powi(2),
            RateKind::Step { levels } => {
                let quarter = (4.0 * t / self.domain_end).floor() as usize;
                levels[quarter.min(3)]
            }
            RateKind::Spline(model) => model.rate_at(t).expect("t clamped into domain"),
            RateKind::Table { values } => {
                let x = t / self.domain_end * (values.len() - 1) as f64;
                let i = (x.floor() as usize).min(values.len() - 2);
                let frac = x - i as f64;
                values[i] * (1.0 - frac) + values[i + 1] * frac
            }
        }
    }
}

/// Generates one event series by thinning.
///
/// Candidates arrive as a homogeneous process at the ceiling rate on
/// `(0, domain_end]`; each candidate at `t` survives with probability
/// `λ(t) / ceiling`. A candidate where the rate exceeds the ceiling is a
/// [`Error::CeilingViolation`].
pub fn thin(rate: &RateSpec, rng_seed: u64) -> Result<EventSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let ceiling = rate.rate_ceiling;
    let mut times = Vec::new();
    if ceiling > 0.0 {
        let mut t = 0.0;
        loop {
            let u: f64 = rng.gen();
            let gap = -(1.0 - u).ln() / ceiling;
            if gap <= 0.0 {
                continue;
            }
            t += gap;
            if t > rate.domain_end {
                break;
            }
            let value = rate.rate_at(t);
            if value > ceiling {
                return Err(Error::CeilingViolation {
                    t,
                    rate: value,
                    ceiling,
                });
            }
            if rng.gen::<f64>() * ceiling < value {
                times.push(t);
            }
        }
    }
    EventSeries::new(format!("sim-{rng_seed}"), times, rate.domain_end)
}

/// The generator rates of benchmark set 1 (two sinusoids), 2 (two steps), or
/// 3 (all four), in class-label order.
pub fn class_generators(which: u8, window_end: f64) -> Result<Vec<RateSpec>> {
    match which {
        1 => Ok(vec![
            RateSpec::sinusoidal_slow(window_end),
            RateSpec::sinusoidal_fast(window_end),
        ]),
        2 => Ok(vec![
            RateSpec::step_up(window_end),
            RateSpec::step_down(window_end),
        ]),
        3 => Ok(vec![
            RateSpec::sinusoidal_slow(window_end),
            RateSpec::sinusoidal_fast(window_end),
            RateSpec::step_up(window_end),
            RateSpec::step_down(window_end),
        ]),
        other => Err(Error::InvalidArgument(format!(
            "unknown synthetic data set {other}; expected 1, 2, or 3"
        ))),
    }
}

/// Synthetic benchmark data on the default `2π` window.
pub fn make_synthetic_dataset(
    which: u8,
    observations_per_class: usize,
    rng_seed: u64,
) -> Result<LabeledDataset> {
    make_synthetic_dataset_in_window(
        which,
        observations_per_class,
        DEFAULT_SYNTHETIC_WINDOW,
        rng_seed,
    )
}

/// Synthetic benchmark data on a caller-chosen window.
///
/// Observation ids are `c<class>_o<index>` (1-based); per-series seeds derive
/// deterministically from `rng_seed`.
pub fn make_synthetic_dataset_in_window(
    which: u8,
    observations_per_class: usize,
    window_end: f64,
    rng_seed: u64,
) -> Result<LabeledDataset> {
    if observations_per_class == 0 {
        return Err(Error::InvalidArgument(
            "need at least one observation per class".into(),
        ));
    }
    let generators = class_generators(which, window_end)?;
    let mut master = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut observations = Vec::new();
    let mut labels = Vec::new();
    for (class, generator) in generators.iter().enumerate() {
        for index in 0..observations_per_class {
            let child_seed = master.next_u64();
            let series = thin(generator, child_seed)?
                .with_id(format!("c{}_o{}", class + 1, index + 1));
            observations.push(series);
            labels.push(class);
        }
    }
    LabeledDataset::new(observations, labels, generators.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_generates_nothing() {
        let rate = RateSpec::from_table(vec![0.0, 0.0], 1.0).unwrap();
        for seed in 0..20 {
            assert!(thin(&rate, seed).unwrap().is_empty());
        }
    }

    #[test]
    fn constant_rate_mean_count_matches_poisson_mean() {
        // λ ≡ 50 on [0, 1]: mean count over 1000 seeds within 3·√(50/1000).
        let rate = RateSpec::from_table(vec![50.0, 50.0], 1.0).unwrap();
        let replicates = 1000;
        let total: usize = (0..replicates)
            .map(|seed| thin(&rate, seed).unwrap().len())
            .sum();
        let mean = total as f64 / replicates as f64;
        let tolerance = 3.0 * (50.0 / replicates as f64).sqrt();
        assert!(
            (mean - 50.0).abs() <= tolerance,
            "mean {mean} outside 50 ± {tolerance}"
        );
    }

    #[test]
    fn slow_sinusoid_mean_count_matches_quadrature() {
        // ∫ λ over the window by dense trapezoid, then a 3-standard-error check.
        let window = DEFAULT_SYNTHETIC_WINDOW;
        let rate = RateSpec::sinusoidal_slow(window);
        let n_grid = 100_000;
        let h = window / n_grid as f64;
        let mut integral = 0.0;
        for i in 0..=n_grid {
            let w = if i == 0 || i == n_grid { 0.5 } else { 1.0 };
            integral += w * h * rate.rate_at(i as f64 * h);
        }
        let replicates = 1000;
        let total: usize = (0..replicates)
            .map(|seed| thin(&rate, seed).unwrap().len())
            .sum();
        let mean = total as f64 / replicates as f64;
        let tolerance = 3.0 * (integral / replicates as f64).sqrt();
        assert!(
            (mean - integral).abs() <= tolerance,
            "mean {mean} outside {integral} ± {tolerance}"
        );
    }

    #[test]
    fn identical_seeds_give_identical_series() {
        let rate = RateSpec::sinusoidal_fast(DEFAULT_SYNTHETIC_WINDOW);
        let a = thin(&rate, 42).unwrap();
        let b = thin(&rate, 42).unwrap();
        assert_eq!(a.times(), b.times());
        let c = thin(&rate, 43).unwrap();
        assert_ne!(a.times(), c.times());
    }

    #[test]
    fn generated_times_lie_strictly_inside_the_window() {
        let rate = RateSpec::step_up(DEFAULT_SYNTHETIC_WINDOW);
        for seed in 0..10 {
            let series = thin(&rate, seed).unwrap();
            assert!(series
                .times()
                .iter()
                .all(|&t| t > 0.0 && t <= DEFAULT_SYNTHETIC_WINDOW));
            assert!(series.times().windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn undersized_ceiling_is_detected() {
        let rate = RateSpec::new(
            RateKind::SquaredSine {
                amplitude: 100.0,
                angular_frequency: 0.5,
            },
            DEFAULT_SYNTHETIC_WINDOW,
            50.0,
        )
        .unwrap();
        assert!(matches!(
            thin(&rate, 7),
            Err(Error::CeilingViolation { .. })
        ));
    }

    #[test]
    fn zero_ceiling_with_positive_rate_is_rejected_up_front() {
        assert!(matches!(
            RateSpec::new(
                RateKind::Step {
                    levels: [1.0, 1.0, 1.0, 1.0]
                },
                1.0,
                0.0
            ),
            Err(Error::CeilingViolation { .. })
        ));
    }

    #[test]
    fn step_rate_uses_quarter_breakpoints() {
        let rate = RateSpec::step_up(4.0);
        assert_eq!(rate.rate_at(0.5), 20.0);
        assert_eq!(rate.rate_at(1.0), 40.0); // left-closed quarters
        assert_eq!(rate.rate_at(1.5), 40.0);
        assert_eq!(rate.rate_at(2.5), 60.0);
        assert_eq!(rate.rate_at(3.5), 80.0);
        assert_eq!(rate.rate_at(4.0), 80.0);
    }

    #[test]
    fn table_rate_interpolates_linearly() {
        let rate = RateSpec::from_table(vec![0.0, 10.0, 0.0], 2.0).unwrap();
        assert_eq!(rate.rate_at(0.5), 5.0);
        assert_eq!(rate.rate_at(1.0), 10.0);
        assert_eq!(rate.rate_at(1.5), 5.0);
    }

    #[test]
    fn dataset_shapes_match_the_request() {
        let data = make_synthetic_dataset(1, 20, 7).unwrap();
        assert_eq!(data.len(), 40);
        assert_eq!(data.class_count(), 2);
        assert_eq!(data.labels().iter().filter(|&&g| g == 0).count(), 20);

        let tiny = make_synthetic_dataset(3, 1, 5).unwrap();
        assert_eq!(tiny.len(), 4);
        assert_eq!(tiny.labels(), &[0, 1, 2, 3]);
        assert_eq!(tiny.observations()[0].id(), "c1_o1");

        assert!(make_synthetic_dataset(4, 5, 0).is_err());
        assert!(make_synthetic_dataset(1, 0, 0).is_err());
    }

    #[test]
    fn step_class_mean_counts_match_the_piecewise_integral() {
        // ∫λ_3 = ∫λ_4 = 50·T by the quarter-step construction.
        let window = DEFAULT_SYNTHETIC_WINDOW;
        let expected = 50.0 * window;
        let replicates = 300;
        let mut totals = [0usize; 2];
        for seed in 0..replicates {
            let data = make_synthetic_dataset(2, 1, seed).unwrap();
            for (series, &label) in data.observations().iter().zip(data.labels()) {
                totals[label] += series.len();
            }
        }
        for (label, &total) in totals.iter().enumerate() {
            let mean = total as f64 / replicates as f64;
            let tolerance = 3.0 * (expected / replicates as f64).sqrt();
            assert!(
                (mean - expected).abs() <= tolerance,
                "class {label}: mean {mean} outside {expected} ± {tolerance}"
            );
        }
    }

    #[test]
    fn dataset_generation_is_deterministic() {
        let a = make_synthetic_dataset(3, 2, 99).unwrap();
        let b = make_synthetic_dataset(3, 2, 99).unwrap();
        for (x, y) in a.observations().iter().zip(b.observations()) {
            assert_eq!(x.times(), y.times());
        }
    }
}
