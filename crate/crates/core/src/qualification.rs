//! Classical qualification order, maximal qualification and the map
//! `Θ(t) = √t ρ(t)` that turns noise levels into regularization scales.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::filters::FilterFamily;
use crate::grid::log_space;
use crate::spectral::IndexFunction;

/// Bound ratio allowed between the smallest and the largest α decade.
pub const GROWTH_THRESHOLD: f64 = 1.5;
pub const DEFAULT_MU_MAX: f64 = 8.0;
pub const DEFAULT_TOL: f64 = 0.025;

/// Smallest α probed by the qualification scans.
const ALPHA_FLOOR: f64 = 1e-120;
const ALPHA_PER_DECADE: f64 = 10.0;
/// Multiples of α merged into every λ grid so the scans see the same
/// relative positions in each α decade.
const LAMBDA_MULTIPLES: [f64; 9] = [0.1, 0.5, 1.0 - 1e-9, 1.0, 2.0, 3.0, 10.0, 100.0, 1000.0];

/// α grid on `[1e-120, α₀)` at ten points per decade.
pub fn qualification_alphas(alpha_max: f64) -> Vec<f64> {
    let hi = alpha_max * (1.0 - 1e-9);
    let n = ((hi / ALPHA_FLOOR).log10() * ALPHA_PER_DECADE).ceil() as usize + 1;
    log_space(ALPHA_FLOOR, hi, n.max(2))
}

/// Shared λ grid on `[1e-12·cap, cap]`, 256 points.
pub fn qualification_lambdas(cap: f64) -> Vec<f64> {
    log_space(1e-12 * cap, cap, 256)
}

fn lambdas_at(alpha: f64, shared: &[f64], cap: f64) -> impl Iterator<Item = f64> + '_ {
    shared.iter().copied().chain(
        LAMBDA_MULTIPLES
            .iter()
            .map(move |m| m * alpha)
            .filter(move |&l| l > 0.0 && l <= cap),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundTest {
    pub bounded: bool,
    /// Max of `B(α)` over the smallest α decade divided by the max over the largest.
    pub growth_factor: f64,
    /// Overall max of `B(α) = max_λ λ^μ|r_α(λ)|/α^μ`.
    pub witnessed_k: f64,
}

fn decade_split(alphas: &[f64], values: &[f64]) -> (f64, f64) {
    let amin = alphas.iter().copied().fold(f64::INFINITY, f64::min);
    let amax = alphas.iter().copied().fold(0.0_f64, f64::max);
    let mut small = f64::NEG_INFINITY;
    let mut large = f64::NEG_INFINITY;
    for (&a, &v) in alphas.iter().zip(values) {
        if a <= 10.0 * amin {
            small = small.max(v);
        }
        if a >= amax / 10.0 {
            large = large.max(v);
        }
    }
    (small, large)
}

/// Tests `λ^μ|r_α(λ)| ≤ k α^μ` on the grids. The bound function is handled in
/// logarithms, so huge `(λ/α)^μ` factors against tiny residuals stay finite.
pub fn classical_bound_test(fam: &FilterFamily, mu: f64, alphas: &[f64], lambdas: &[f64], cap: f64) -> Result<BoundTest> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::invalid(format!("mu must be >= 0, got {mu}")));
    }
    let log_b = alphas
        .iter()
        .map(|&a| {
            let mut best = f64::NEG_INFINITY;
            for l in lambdas_at(a, lambdas, cap) {
                let r = fam.r_eval(a, l)?.abs();
                if r > 0.0 {
                    best = best.max(mu * (l.ln() - a.ln()) + r.ln());
                }
            }
            Ok(best)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (small, large) = decade_split(alphas, &log_b);
    let overall = log_b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_growth = if small == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        small - large
    };
    Ok(BoundTest {
        bounded: log_growth <= GROWTH_THRESHOLD.ln(),
        growth_factor: log_growth.exp(),
        witnessed_k: overall.exp(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MuDiagnostic {
    pub mu: f64,
    pub bounded: bool,
    pub growth_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualificationEstimate {
    pub family: String,
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub sentinel_infinite: bool,
    /// Bounded μ never lies above an unbounded one in the diagnostics.
    pub monotone: bool,
    pub diagnostics: Vec<MuDiagnostic>,
}

/// Bisection on μ over `[0, mu_max]` until the bracket is at most `tol` wide.
pub fn estimate_classical_order(fam: &FilterFamily, cap: f64, mu_max: f64, tol: f64) -> Result<QualificationEstimate> {
    if !(mu_max > 0.0 && tol > 0.0) {
        return Err(Error::invalid("mu_max and tol must be positive"));
    }
    let alphas = qualification_alphas(fam.alpha_max());
    let lambdas = qualification_lambdas(cap);
    let mut diagnostics = Vec::new();
    let mut test = |mu: f64| -> Result<bool> {
        let t = classical_bound_test(fam, mu, &alphas, &lambdas, cap)?;
        diagnostics.push(MuDiagnostic {
            mu,
            bounded: t.bounded,
            growth_factor: t.growth_factor,
        });
        Ok(t.bounded)
    };
    let (mu_lo, mu_hi, sentinel) = if test(mu_max)? {
        (mu_max, mu_max, true)
    } else if !test(0.0)? {
        (0.0, 0.0, false)
    } else {
        let (mut lo, mut hi) = (0.0, mu_max);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if test(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo, hi, false)
    };
    let monotone = diagnostics
        .iter()
        .all(|b| !b.bounded || diagnostics.iter().all(|u| u.bounded || u.mu > b.mu));
    Ok(QualificationEstimate {
        family: fam.name().to_string(),
        mu_lo,
        mu_hi,
        sentinel_infinite: sentinel,
        monotone,
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaximalCheck {
    /// `max_α sup_λ |r_α(λ)|ρ(λ)/ρ(α)`.
    pub gamma_witness: f64,
    pub gamma_growth: f64,
    /// `(λ, min_α |r_α(λ)|/ρ(α))` for each probe.
    pub c_witness: Vec<(f64, f64)>,
    /// Per probe, min over the smallest α decade divided by the min over the largest.
    pub c_decay: Vec<f64>,
    pub passed: bool,
}

/// Maximal qualification: the upper ratio may not grow into the smallest α
/// decade, and at each probe λ the lower ratio must stay positive without
/// decaying by more than the growth threshold.
pub fn check_maximal(
    fam: &FilterFamily,
    rho: &IndexFunction,
    cap: f64,
    alphas: &[f64],
    lambda_probes: &[f64],
) -> Result<MaximalCheck> {
    let lambdas = qualification_lambdas(cap);
    let eval_rho = |t: f64| -> Result<f64> {
        let v = rho.eval(t);
        if v.is_finite() && v > 0.0 {
            Ok(v)
        } else {
            Err(Error::Evaluation {
                lambda: t,
                message: format!("index function {} is not positive and finite ({v})", rho.name()),
            })
        }
    };
    let upper = alphas
        .iter()
        .map(|&a| {
            let ra = eval_rho(a)?;
            let mut best = 0.0_f64;
            for l in lambdas_at(a, &lambdas, cap) {
                best = best.max(fam.r_eval(a, l)?.abs() * eval_rho(l)? / ra);
            }
            Ok(best)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (small, large) = decade_split(alphas, &upper);
    let gamma_witness = upper.iter().copied().fold(0.0, f64::max);
    let gamma_growth = small / large;
    let mut passed = gamma_witness.is_finite() && gamma_growth <= GROWTH_THRESHOLD;

    let mut c_witness = Vec::new();
    let mut c_decay = Vec::new();
    for &l in lambda_probes {
        let lower = alphas
            .iter()
            .map(|&a| Ok(fam.r_eval(a, l)?.abs() / eval_rho(a)?))
            .collect::<Result<Vec<f64>>>()?;
        let neg: Vec<f64> = lower.iter().map(|v| -v).collect();
        let (s, g) = decade_split(alphas, &neg);
        let decay = (-s) / (-g);
        let cmin = lower.iter().copied().fold(f64::INFINITY, f64::min);
        passed &= cmin > 0.0 && decay >= 1.0 / GROWTH_THRESHOLD;
        c_witness.push((l, cmin));
        c_decay.push(decay);
    }
    Ok(MaximalCheck {
        gamma_witness,
        gamma_growth,
        c_witness,
        c_decay,
        passed,
    })
}

/// `Θ(t) = √t ρ(t)` on `(0, t_max]`, verified increasing at construction.
#[derive(Debug, Clone)]
pub struct ThetaMap {
    rho: IndexFunction,
    domain_cap: f64,
    t_max: f64,
    theta_max: f64,
}

impl ThetaMap {
    const VERIFY_POINTS: usize = 1024;
    /// Lowest `t` considered; below it Θ underflows for every supported ρ.
    const T_FLOOR: f64 = 1e-250;

    /// `domain_cap` is ‖T‖² and `alpha_max` is α₀; Θ is inverted on
    /// `(0, Θ(min(α₀, ‖T‖²)))`.
    pub fn new(rho: IndexFunction, domain_cap: f64, alpha_max: f64) -> Result<Self> {
        if !(domain_cap > 0.0 && alpha_max > 0.0) {
            return Err(Error::invalid("Theta map needs positive domain cap and alpha_max"));
        }
        let t_max = alpha_max.min(domain_cap);
        let grid = log_space(Self::T_FLOOR.max(t_max * 1e-200), t_max, Self::VERIFY_POINTS);
        let mut prev = f64::NEG_INFINITY;
        for &t in &grid {
            let v = t.sqrt() * rho.eval(t);
            if !(v.is_finite() && v > prev) {
                return Err(Error::invalid(format!(
                    "Theta for {} is not strictly increasing near t = {t:e}",
                    rho.name()
                )));
            }
            prev = v;
        }
        Ok(ThetaMap {
            theta_max: prev,
            rho,
            domain_cap,
            t_max,
        })
    }

    pub fn rho(&self) -> &IndexFunction {
        &self.rho
    }

    pub fn domain_cap(&self) -> f64 {
        self.domain_cap
    }

    /// Right end of the invertible range `(0, Θ(t_max))`.
    pub fn delta_max(&self) -> f64 {
        self.theta_max
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn theta_eval(&self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t <= self.domain_cap) {
            return Err(Error::OutOfRange {
                what: "t",
                value: t,
                lo: 0.0,
                hi: self.domain_cap,
            });
        }
        Ok(t.sqrt() * self.rho.eval(t))
    }

    /// Solves `Θ(t) = δ` by bisection in `ln t`.
    pub fn theta_inv(&self, delta: f64) -> Result<f64> {
        if !(delta > 0.0 && delta < self.theta_max) {
            return Err(Error::OutOfRange {
                what: "delta",
                value: delta,
                lo: 0.0,
                hi: self.theta_max,
            });
        }
        let theta = |t: f64| t.sqrt() * self.rho.eval(t);
        let mut hi = self.t_max;
        let mut lo = hi;
        while theta(lo) >= delta {
            lo *= 1e-10;
            if lo < Self::T_FLOOR {
                return Err(Error::OutOfRange {
                    what: "delta",
                    value: delta,
                    lo: theta(Self::T_FLOOR),
                    hi: self.theta_max,
                });
            }
        }
        for _ in 0..400 {
            let mid = (0.5 * (lo.ln() + hi.ln())).exp();
            if mid <= lo || mid >= hi {
                break;
            }
            let v = theta(mid);
            if ((v - delta) / delta).abs() <= 1e-12 * 1e-3 {
                return Ok(mid);
            }
            if v < delta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (vl, vh) = (theta(lo), theta(hi));
        let t = if (vl - delta).abs() <= (vh - delta).abs() { lo } else { hi };
        if ((theta(t) - delta) / delta).abs() <= 1e-12 {
            Ok(t)
        } else {
            Err(Error::NumericFailure(format!("Theta inversion stalled at delta = {delta:e}")))
        }
    }

    /// Saturation profile `ψ(δ) = ρ(Θ⁻¹(δ))`.
    pub fn profile(&self, delta: f64) -> Result<f64> {
        Ok(self.rho.eval(self.theta_inv(delta)?))
    }
}

/// `2μ₀/(2μ₀ + 1)`.
pub fn saturation_rate_classical(mu0: f64) -> Result<f64> {
    if !(mu0 > 0.0 && mu0.is_finite()) {
        return Err(Error::invalid(format!("mu0 must be positive, got {mu0}")));
    }
    Ok(2.0 * mu0 / (2.0 * mu0 + 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates() {
        assert!((saturation_rate_classical(1.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(saturation_rate_classical(0.5).unwrap(), 0.5);
        assert!((saturation_rate_classical(2.0).unwrap() - 0.8).abs() < 1e-15);
        assert!(saturation_rate_classical(0.0).is_err());
    }

    #[test]
    fn tikhonov_bound_tests() {
        let f = FilterFamily::tikhonov();
        let a = qualification_alphas(1.0);
        let l = qualification_lambdas(1.0);
        let t = classical_bound_test(&f, 1.0, &a, &l, 1.0).unwrap();
        assert!(t.bounded && t.witnessed_k <= 1.0 + 1e-12, "{t:?}");
        assert!(!classical_bound_test(&f, 1.5, &a, &l, 1.0).unwrap().bounded);
        let s = classical_bound_test(&FilterFamily::tsvd(), 3.0, &a, &l, 1.0).unwrap();
        assert!(s.bounded && s.witnessed_k <= 1.0 + 1e-12);
    }

    #[test]
    fn order_estimates() {
        let t = estimate_classical_order(&FilterFamily::tikhonov(), 1.0, DEFAULT_MU_MAX, DEFAULT_TOL).unwrap();
        assert!(t.mu_lo <= 1.0 && 1.0 <= t.mu_hi && t.mu_hi - t.mu_lo <= 0.05, "{t:?}");
        assert!(t.monotone);
        let s = estimate_classical_order(&FilterFamily::tsvd(), 1.0, DEFAULT_MU_MAX, DEFAULT_TOL).unwrap();
        assert!(s.sentinel_infinite);
    }

    #[test]
    fn theta_closed_forms() {
        let m = ThetaMap::new(IndexFunction::InverseLog, 0.3, 0.3).unwrap();
        let t = (-2.0_f64).exp();
        // 1/(2e), 40-digit evaluation
        assert!((m.theta_eval(t).unwrap() - 0.183_939_720_585_721_16).abs() < 1e-16);
        assert!((m.theta_inv(0.183_939_720_585_721_16).unwrap() - t).abs() < 1e-14);

        let p = ThetaMap::new(IndexFunction::Power(1.0), 5.0, 5.0).unwrap();
        assert!((p.theta_inv(8.0).unwrap() - 4.0).abs() < 1e-13);
        assert!((p.theta_inv(1.0).unwrap() - 1.0).abs() < 1e-13);
        assert!(matches!(p.theta_inv(12.0), Err(Error::OutOfRange { .. })));

        let e4 = ThetaMap::new(IndexFunction::LogDamped, 0.3, 0.1).unwrap();
        assert!((e4.theta_eval(0.1).unwrap() - 0.030_278_811_918_818_361).abs() < 1e-16);
    }

    #[test]
    fn theta_rejects_non_monotone_rho() {
        assert!(ThetaMap::new(IndexFunction::LogDamped, 0.9, 0.9).is_err());
    }

    #[test]
    fn maximal_examples() {
        let e3 = FilterFamily::example3(0.5).unwrap();
        let a = qualification_alphas(e3.alpha_max());
        let m = check_maximal(&e3, &IndexFunction::InverseLog, 0.3, &a, &[1e-3, 0.1]).unwrap();
        assert!(m.passed, "{m:?}");
        let t = FilterFamily::tikhonov();
        let m = check_maximal(&t, &IndexFunction::Power(0.5), 1.0, &qualification_alphas(1.0), &[1e-3, 0.1]).unwrap();
        assert!(!m.passed);
    }
}
