//! Gaussian-mechanism noise calibration for the private optimizers.
//!
//! Each calibration turns a budget `(epsilon, delta, T, N, B)` into the
//! per-iteration variance of the entrywise Gaussian noise added to the
//! gradient. The constants `c` and `c2` have no published values; they
//! default to 1 and are carried in every [`NoisePlan`] so a result can be
//! re-derived from its audit record.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mechanism {
    /// Full-gradient noisy GGD: `c T ln^2(1/delta) / (eps^2 N^2)`.
    Nggd,
    /// Minibatch noisy GGD: `c2 (B/N)^2 T ln(1/delta) / (eps^2 N^2)`.
    Nsggd,
    /// Full-batch REAPER GD/MD: `32 T ln^2(T/delta) / (eps^2 N^2)`.
    ReapFull,
    /// Minibatch REAPER SGD/SMD: `c2 (B/N)^2 T ln(1/delta) / (eps^2 N^2)`.
    ReapStochastic,
}

impl Mechanism {
    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Nggd => "nggd",
            Mechanism::Nsggd => "nsggd",
            Mechanism::ReapFull => "reap_full",
            Mechanism::ReapStochastic => "reap_stochastic",
        }
    }

    pub fn formula(self) -> &'static str {
        match self {
            Mechanism::Nggd => "sigma2 = c*T*ln(1/delta)^2/(epsilon^2*N^2)",
            Mechanism::Nsggd | Mechanism::ReapStochastic => {
                "sigma2 = c2*(B/N)^2*T*ln(1/delta)/(epsilon^2*N^2)"
            }
            Mechanism::ReapFull => "sigma2 = 32*T*ln(T/delta)^2/(epsilon^2*N^2)",
        }
    }

    fn is_stochastic(self) -> bool {
        matches!(self, Mechanism::Nsggd | Mechanism::ReapStochastic)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
    pub iterations: usize,
    pub n: usize,
    pub batch_size: Option<usize>,
    pub c: f64,
    pub c2: f64,
}

impl PrivacyBudget {
    /// Budget with unit calibration constants and no batch size.
    pub fn new(epsilon: f64, delta: f64, iterations: usize, n: usize) -> Self {
        Self {
            epsilon,
            delta,
            iterations,
            n,
            batch_size: None,
            c: 1.0,
            c2: 1.0,
        }
    }

    /// `delta = 1/sqrt(N)`.
    pub fn with_default_delta(epsilon: f64, iterations: usize, n: usize) -> Self {
        Self::new(epsilon, 1.0 / (n as f64).sqrt(), iterations, n)
    }

    pub fn with_batch(mut self, batch_size: usize) -> Self {
        self.batch_size = Some(batch_size);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter("N must be positive".into()));
        }
        if !(self.c > 0.0 && self.c2 > 0.0) {
            return Err(Error::InvalidParameter("calibration constants must be positive".into()));
        }
        if let Some(b) = self.batch_size {
            if b == 0 || b > self.n {
                return Err(Error::InvalidParameter(format!("batch size must lie in [1, N], got {b}")));
            }
        }
        Ok(())
    }

    fn sampling_ratio(&self) -> Result<f64> {
        let b = self
            .batch_size
            .ok_or_else(|| Error::InvalidParameter("minibatch calibration needs a batch size".into()))?;
        Ok(b as f64 / self.n as f64)
    }
}

/// A calibrated noise level together with the inputs that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePlan {
    pub sigma2: f64,
    pub mechanism: Mechanism,
    pub budget: PrivacyBudget,
}

impl NoisePlan {
    /// Recomputes the variance from the recorded mechanism and budget.
    pub fn reevaluate(&self) -> Result<f64> {
        Ok(calibrate(self.mechanism, &self.budget)?.sigma2)
    }

    /// Flat `key=value` lines for audit output.
    pub fn key_values(&self) -> Vec<(String, String)> {
        let b = &self.budget;
        let mut kv = vec![
            ("mechanism".to_string(), self.mechanism.name().to_string()),
            ("formula".to_string(), self.mechanism.formula().to_string()),
            ("epsilon".to_string(), format!("{:.16e}", b.epsilon)),
            ("delta".to_string(), format!("{:.16e}", b.delta)),
            ("T".to_string(), b.iterations.to_string()),
            ("N".to_string(), b.n.to_string()),
        ];
        if let Some(bs) = b.batch_size {
            kv.push(("B".to_string(), bs.to_string()));
        }
        kv.push(("c".to_string(), format!("{:.16e}", b.c)));
        kv.push(("c2".to_string(), format!("{:.16e}", b.c2)));
        kv.push(("sigma2".to_string(), format!("{:.16e}", self.sigma2)));
        kv
    }
}

impl fmt::Display for NoisePlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.key_values() {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

pub fn calibrate(mechanism: Mechanism, budget: &PrivacyBudget) -> Result<NoisePlan> {
    budget.validate()?;
    let t = budget.iterations as f64;
    let n = budget.n as f64;
    let eps2n2 = budget.epsilon * budget.epsilon * n * n;
    let sigma2 = match mechanism {
        Mechanism::Nggd => {
            let l = (1.0 / budget.delta).ln();
            budget.c * t * l * l / eps2n2
        }
        Mechanism::Nsggd | Mechanism::ReapStochastic => {
            let q = budget.sampling_ratio()?;
            budget.c2 * q * q * t * (1.0 / budget.delta).ln() / eps2n2
        }
        Mechanism::ReapFull => {
            if budget.iterations == 0 {
                0.0
            } else {
                let l = (t / budget.delta).ln();
                32.0 * t * l * l / eps2n2
            }
        }
    };
    Ok(NoisePlan {
        sigma2,
        mechanism,
        budget: *budget,
    })
}

pub fn calibrate_nggd(budget: &PrivacyBudget) -> Result<NoisePlan> {
    calibrate(Mechanism::Nggd, budget)
}

pub fn calibrate_nsggd(budget: &PrivacyBudget) -> Result<NoisePlan> {
    calibrate(Mechanism::Nsggd, budget)
}

pub fn calibrate_reap_full(budget: &PrivacyBudget) -> Result<NoisePlan> {
    calibrate(Mechanism::ReapFull, budget)
}

pub fn calibrate_reap_stochastic(budget: &PrivacyBudget) -> Result<NoisePlan> {
    calibrate(Mechanism::ReapStochastic, budget)
}

/// Minibatch size `ceil(max(N sqrt(eps / (4T)), 1))`, clamped to `[1, N]`.
///
/// Values within 1e-9 of an integer are rounded to it before the ceiling, so
/// `N = 2000, eps = 0.8, T = 2000` gives exactly 20.
pub fn batch_size_rule(n: usize, epsilon: f64, iterations: usize) -> usize {
    if n == 0 {
        return 1;
    }
    let raw = (n as f64 * (epsilon / (4.0 * iterations as f64)).sqrt()).max(1.0);
    let nearest = raw.round();
    let b = if (raw - nearest).abs() <= 1e-9 { nearest } else { raw.ceil() };
    if !b.is_finite() {
        return n;
    }
    (b as usize).clamp(1, n)
}

#[derive(Debug, Clone, PartialEq)]
pub enum BudgetWarning {
    /// `T > N^2 eps^2`, beyond the iteration ceiling of the convergence theory.
    IterationCeiling { iterations: usize, ceiling: f64 },
    /// `eps >= c T` (or `eps >= c q^2 T` for minibatch mechanisms).
    EpsilonRegime { epsilon: f64, limit: f64 },
}

impl fmt::Display for BudgetWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BudgetWarning::IterationCeiling { iterations, ceiling } => write!(
                f,
                "T = {iterations} exceeds the iteration ceiling N^2 eps^2 = {ceiling}"
            ),
            BudgetWarning::EpsilonRegime { epsilon, limit } => write!(
                f,
                "epsilon = {epsilon} is outside the calibrated regime (needs epsilon < {limit})"
            ),
        }
    }
}

/// Non-blocking sanity checks on a budget.
pub fn validate_budget(budget: &PrivacyBudget, mechanism: Mechanism) -> Vec<BudgetWarning> {
    let mut warnings = Vec::new();
    let n = budget.n as f64;
    let t = budget.iterations as f64;
    let ceiling = n * n * budget.epsilon * budget.epsilon;
    if t > ceiling {
        warnings.push(BudgetWarning::IterationCeiling {
            iterations: budget.iterations,
            ceiling,
        });
    }
    let limit = if mechanism.is_stochastic() {
        let q = budget.batch_size.map(|b| b as f64 / n).unwrap_or(1.0);
        budget.c * q * q * t
    } else {
        budget.c * t
    };
    if budget.epsilon >= limit {
        warnings.push(BudgetWarning::EpsilonRegime {
            epsilon: budget.epsilon,
            limit,
        });
    }
    warnings
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_budget() -> PrivacyBudget {
        PrivacyBudget::with_default_delta(0.8, 2000, 2000)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn nggd_reference_value() {
        let sigma2 = calibrate_nggd(&reference_budget()).unwrap().sigma2;
        // 2000 * ln(sqrt(2000))^2 / (0.64 * 2000^2), evaluated independently
        let l = 0.5 * 2000f64.ln();
        let expected = 2000.0 * l * l / (0.64 * 4.0e6);
        assert!(rel(sigma2, expected) < 1e-12);
        assert!(rel(sigma2, 1.128_392_933_583_454_4e-2) < 1e-12, "{sigma2}");
    }

    #[test]
    fn nggd_scales_with_inverse_n_squared() {
        let a = calibrate_nggd(&PrivacyBudget::new(0.8, 0.01, 500, 1000)).unwrap().sigma2;
        let b = calibrate_nggd(&PrivacyBudget::new(0.8, 0.01, 500, 2000)).unwrap().sigma2;
        assert!(rel(a / 4.0, b) < 1e-14);
    }

    #[test]
    fn zero_iterations_give_zero_noise() {
        for m in [Mechanism::Nggd, Mechanism::Nsggd, Mechanism::ReapFull, Mechanism::ReapStochastic] {
            let b = PrivacyBudget::new(0.8, 0.01, 0, 100).with_batch(10);
            assert_eq!(calibrate(m, &b).unwrap().sigma2, 0.0);
        }
    }

    #[test]
    fn nsggd_full_batch_and_halving() {
        let b = PrivacyBudget::new(0.5, 0.05, 300, 400);
        let full = calibrate_nsggd(&b.with_batch(400)).unwrap().sigma2;
        let expected = 300.0 * (1.0f64 / 0.05).ln() / (0.25 * 160_000.0);
        assert!(rel(full, expected) < 1e-14);
        let b40 = calibrate_nsggd(&b.with_batch(40)).unwrap().sigma2;
        let b20 = calibrate_nsggd(&b.with_batch(20)).unwrap().sigma2;
        assert!(rel(b40 / 4.0, b20) < 1e-14);
        assert!(calibrate_nsggd(&b).is_err());
    }

    #[test]
    fn reap_stochastic_matches_nsggd() {
        let b = reference_budget().with_batch(20);
        let x = calibrate_reap_stochastic(&b).unwrap().sigma2;
        let y = calibrate_nsggd(&b).unwrap().sigma2;
        assert_eq!(x, y);
        let full = reference_budget().with_batch(2000);
        assert_eq!(
            calibrate_reap_stochastic(&full).unwrap().sigma2,
            calibrate_nsggd(&full).unwrap().sigma2
        );
    }

    #[test]
    fn reap_full_single_iteration() {
        let b = PrivacyBudget::new(0.8, 0.01, 1, 100);
        let l = (1.0f64 / 0.01).ln();
        let expected = 32.0 * l * l / (0.64 * 10_000.0);
        assert!(rel(calibrate_reap_full(&b).unwrap().sigma2, expected) < 1e-14);
    }

    #[test]
    fn monotone_in_t_n_eps() {
        let base = PrivacyBudget::new(0.8, 0.02, 1000, 1500).with_batch(30);
        for m in [Mechanism::Nggd, Mechanism::Nsggd, Mechanism::ReapFull, Mechanism::ReapStochastic] {
            let s = calibrate(m, &base).unwrap().sigma2;
            let more_t = calibrate(m, &PrivacyBudget { iterations: 2000, ..base }).unwrap().sigma2;
            let more_n = calibrate(m, &PrivacyBudget { n: 3000, ..base }).unwrap().sigma2;
            let more_eps = calibrate(m, &PrivacyBudget { epsilon: 1.6, ..base }).unwrap().sigma2;
            assert!(more_t > s && more_n < s && more_eps < s, "{m:?}");
        }
    }

    #[test]
    fn provenance_reproduces_sigma2() {
        let plan = calibrate_nsggd(&reference_budget().with_batch(20)).unwrap();
        assert_eq!(plan.reevaluate().unwrap(), plan.sigma2);
        let text = plan.to_string();
        assert!(text.contains("mechanism=nsggd"));
        assert!(text.contains("sigma2="));
    }

    #[test]
    fn invalid_budgets() {
        assert!(calibrate_nggd(&PrivacyBudget::new(0.0, 0.1, 10, 10)).is_err());
        assert!(calibrate_nggd(&PrivacyBudget::new(1.0, 1.0, 10, 10)).is_err());
        assert!(calibrate_nggd(&PrivacyBudget::new(1.0, 0.1, 10, 0)).is_err());
        assert!(calibrate_nsggd(&PrivacyBudget::new(1.0, 0.1, 10, 10).with_batch(11)).is_err());
    }

    #[test]
    fn batch_rule() {
        assert_eq!(batch_size_rule(2000, 0.8, 2000), 20);
        assert_eq!(batch_size_rule(100, 1000.0, 1), 100);
        assert_eq!(batch_size_rule(100, 1e-9, 1000), 1);
        assert_eq!(batch_size_rule(1000, 0.8, 4000), 8); // 1000 * sqrt(5e-5) = 7.07
    }

    #[test]
    fn budget_warnings() {
        // N^2 eps^2 = 100^2 * 0.01 = 100
        let half = PrivacyBudget::new(0.1, 0.01, 50, 100);
        assert!(validate_budget(&half, Mechanism::Nggd).is_empty());
        let double = PrivacyBudget::new(0.1, 0.01, 200, 100);
        assert!(matches!(
            validate_budget(&double, Mechanism::Nggd)[..],
            [BudgetWarning::IterationCeiling { .. }]
        ));
        let wide = PrivacyBudget::new(5.0, 0.01, 3, 100);
        assert!(validate_budget(&wide, Mechanism::Nggd)
            .iter()
            .any(|w| matches!(w, BudgetWarning::EpsilonRegime { .. })));
    }
}
