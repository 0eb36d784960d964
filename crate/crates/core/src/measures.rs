//! Entanglement (and privacy) measures written as functions of concurrence.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum MeasureError {
    #[error("concurrence {0} outside [0, 1]")]
    ConcurrenceOutOfRange(f64),
    #[error("efficiency Q = {0} outside the open interval (0, 1)")]
    EfficiencyOutOfRange(f64),
    #[error("probability λ = {0} outside [0, 1]")]
    LambdaOutOfRange(f64),
    #[error("exponent {0} outside (0, 1]")]
    ExponentOutOfRange(f64),
}

/// A nondecreasing, continuous function 𝓔(C) of two-qubit concurrence.
pub trait EntanglementMeasure: Send + Sync {
    fn eval(&self, c: f64) -> f64;
}

impl<M: EntanglementMeasure + ?Sized> EntanglementMeasure for &M {
    fn eval(&self, c: f64) -> f64 {
        (**self).eval(c)
    }
}

/// Optimal LOCC conversion probability to a target state of concurrence 1 − Q.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EqMeasure {
    q: f64,
    lambda_q: f64,
    norm: f64,
}

impl EqMeasure {
    pub fn new(q: f64) -> Result<Self, MeasureError> {
        if !(q > 0.0 && q < 1.0) {
            return Err(MeasureError::EfficiencyOutOfRange(q));
        }
        let target = 1.0 - q;
        let norm = one_minus_sqrt_one_minus_sq(target);
        Ok(Self {
            q,
            lambda_q: norm / 2.0,
            norm,
        })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Smaller Schmidt weight of the target state, 2√(λ_Q(1−λ_Q)) = 1 − Q.
    pub fn lambda_q(&self) -> f64 {
        self.lambda_q
    }
}

/// 1 − √(1 − c²), written without cancellation for small c.
fn one_minus_sqrt_one_minus_sq(c: f64) -> f64 {
    let c2 = c * c;
    c2 / (1.0 + (1.0 - c2).max(0.0).sqrt())
}

impl EntanglementMeasure for EqMeasure {
    fn eval(&self, c: f64) -> f64 {
        let c = c.clamp(0.0, 1.0);
        if c >= 1.0 - self.q {
            1.0
        } else {
            (one_minus_sqrt_one_minus_sq(c) / self.norm).min(1.0)
        }
    }
}

/// 𝓔(C) = C^a for 0 < a ≤ 1. Strictly concave for a < 1; a = 1 is the
/// linear measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerMeasure {
    exponent: f64,
}

impl PowerMeasure {
    pub fn new(exponent: f64) -> Result<Self, MeasureError> {
        if !(exponent > 0.0 && exponent <= 1.0) {
            return Err(MeasureError::ExponentOutOfRange(exponent));
        }
        Ok(Self { exponent })
    }

    pub fn linear() -> Self {
        Self { exponent: 1.0 }
    }

    /// Slope of the tangent at C = 1 − Q, a valid μ for the concavity check.
    pub fn tangent_slope(&self, q: f64) -> f64 {
        self.exponent * (1.0 - q).powf(self.exponent - 1.0)
    }
}

impl EntanglementMeasure for PowerMeasure {
    fn eval(&self, c: f64) -> f64 {
        c.clamp(0.0, 1.0).powf(self.exponent)
    }
}

/// 𝓔_Q(C) with range checks on both arguments.
pub fn eq_eval(c: f64, q: f64) -> Result<f64, MeasureError> {
    if !(0.0..=1.0).contains(&c) {
        return Err(MeasureError::ConcurrenceOutOfRange(c));
    }
    Ok(EqMeasure::new(q)?.eval(c))
}

/// Width of the window around C = 1 − Q excluded from the concavity check.
pub const MU_EXCLUSION: f64 = 1e-9;

/// Default number of grid intervals for [`mu_condition_check`].
pub const MU_GRID: usize = 10_000;

/// Checks 𝓔(C) − μ(C − 1 + Q) < 𝓔(1 − Q) on the grid {0, 1/N, …, 1},
/// skipping points within [`MU_EXCLUSION`] of 1 − Q. Meaningful for μ > 0.
pub fn mu_condition_check<M: EntanglementMeasure + ?Sized>(
    m: &M,
    q: f64,
    mu: f64,
    grid_n: usize,
) -> bool {
    let pivot = 1.0 - q;
    let reference = m.eval(pivot);
    (0..=grid_n).all(|i| {
        let c = i as f64 / grid_n as f64;
        if (c - pivot).abs() <= MU_EXCLUSION {
            return true;
        }
        m.eval(c) - mu * (c - pivot) < reference
    })
}

/// Residual privacy K(λ) = 𝓔(2√(λ(1−λ))).
pub fn privacy_k<M: EntanglementMeasure + ?Sized>(lambda: f64, m: &M) -> Result<f64, MeasureError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(MeasureError::LambdaOutOfRange(lambda));
    }
    Ok(m.eval(2.0 * (lambda * (1.0 - lambda)).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const QS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

    #[test]
    fn eq_examples() {
        assert_eq!(eq_eval(0.0, 0.2).unwrap(), 0.0);
        assert_eq!(eq_eval(0.8, 0.2).unwrap(), 1.0);
        assert_eq!(eq_eval(0.95, 0.2).unwrap(), 1.0);
        assert!((eq_eval(0.6, 0.2).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn eq_rejects_out_of_range() {
        assert!(matches!(eq_eval(1.1, 0.2), Err(MeasureError::ConcurrenceOutOfRange(_))));
        assert!(matches!(eq_eval(-0.1, 0.2), Err(MeasureError::ConcurrenceOutOfRange(_))));
        assert!(matches!(eq_eval(0.5, 0.0), Err(MeasureError::EfficiencyOutOfRange(_))));
        assert!(matches!(eq_eval(0.5, 1.0), Err(MeasureError::EfficiencyOutOfRange(_))));
    }

    #[test]
    fn lambda_q_reconstructs_target() {
        for q in QS {
            let m = EqMeasure::new(q).unwrap();
            let l = m.lambda_q();
            assert!(l > 0.0 && l <= 0.5);
            assert!((2.0 * (l * (1.0 - l)).sqrt() - (1.0 - q)).abs() < 1e-12);
        }
    }

    #[test]
    fn eq_is_monotone_and_continuous() {
        let n = 10_000;
        for q in QS {
            let m = EqMeasure::new(q).unwrap();
            let vals: Vec<f64> = (0..=n).map(|i| m.eval(i as f64 / n as f64)).collect();
            for w in vals.windows(2) {
                assert!(w[1] >= w[0]);
                // Slope of E_Q is bounded by its value at 1 − Q.
                assert!(w[1] - w[0] < 1e-2);
            }
            // Strictly increasing below 1 − Q.
            let k = ((1.0 - q) * n as f64).floor() as usize;
            for w in vals[..k].windows(2) {
                assert!(w[1] > w[0]);
            }
        }
    }

    #[test]
    fn mu_condition_examples() {
        let m = EqMeasure::new(0.2).unwrap();
        assert!(mu_condition_check(&m, 0.2, 0.5, MU_GRID));
        assert!(!mu_condition_check(&m, 0.2, 2.0, MU_GRID));
        for mu in [0.5, 1.0, 2.0] {
            assert!(!mu_condition_check(&PowerMeasure::linear(), 0.2, mu, MU_GRID));
        }
    }

    #[test]
    fn mu_condition_holds_below_threshold() {
        for q in QS {
            let m = EqMeasure::new(q).unwrap();
            for f in [0.1, 0.5, 0.9] {
                assert!(mu_condition_check(&m, q, f / (1.0 - q), MU_GRID), "q={q} f={f}");
            }
        }
    }

    #[test]
    fn strictly_concave_power_measure_passes_at_tangent() {
        let m = PowerMeasure::new(0.5).unwrap();
        for q in QS {
            assert!(mu_condition_check(&m, q, m.tangent_slope(q), MU_GRID));
        }
    }

    #[test]
    fn privacy_examples() {
        let m = EqMeasure::new(0.2).unwrap();
        assert_eq!(privacy_k(0.5, &m).unwrap(), 1.0);
        assert_eq!(privacy_k(0.0, &m).unwrap(), 0.0);
        assert!((privacy_k(0.8, &m).unwrap() - 1.0).abs() < 1e-12);
        assert!(privacy_k(1.5, &m).is_err());
        for i in 0..=100 {
            let l = i as f64 / 100.0;
            let k = privacy_k(l, &m).unwrap();
            assert!((k - privacy_k(1.0 - l, &m).unwrap()).abs() < 1e-12);
            assert_eq!(k, m.eval(2.0 * (l * (1.0 - l)).sqrt()));
        }
    }
}
