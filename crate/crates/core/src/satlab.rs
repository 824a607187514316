//! Saturation experiments: total-error curves over δ, log-log rate fits and
//! empirical versions of the order relations between convergence rates.
//!
//! Verdicts are trend proxies computed from finitely many samples; they do
//! not certify limits as δ → 0.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::FilterFamily;
use crate::qualification::{check_maximal, qualification_alphas, saturation_rate_classical, ThetaMap};
use crate::rng::stream_rng;
use crate::spectral::{source_element_general, source_element_power, IndexFunction, SpectralElement, SpectralOperator};
use crate::toterr::{total_error, worst_case_error, AlphaGridSpec};

/// Relative slack allowed when asserting that E^tot grows with δ.
pub const MONOTONE_SLACK: f64 = 1e-9;
pub const MIN_CURVE_POINTS: usize = 8;
pub const MIN_FIT_POINTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceTag {
    /// `mu=<μ>` or `rho=<name>`.
    pub label: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    /// Strictly decreasing.
    pub deltas: Vec<f64>,
    pub values: Vec<f64>,
    /// Minimizing α per sample; empty for closed-form curves.
    pub alpha_stars: Vec<f64>,
    pub boundary_flags: Vec<bool>,
    pub source_tag: SourceTag,
}

impl ErrorCurve {
    /// Curve from given values (closed-form profiles, synthetic data).
    pub fn from_values(deltas: Vec<f64>, values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if deltas.len() != values.len() {
            return Err(Error::invalid("deltas and values differ in length"));
        }
        check_decreasing(&deltas)?;
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("curve values must be positive and finite"));
        }
        Ok(ErrorCurve {
            boundary_flags: vec![false; deltas.len()],
            deltas,
            values,
            alpha_stars: Vec::new(),
            source_tag: SourceTag {
                label: label.into(),
                seed: 0,
            },
        })
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    /// Index of the first sample whose value exceeds that of a larger δ by
    /// more than the monotonicity slack.
    pub fn monotonicity_violation(&self) -> Option<usize> {
        (1..self.len()).find(|&i| self.values[i] > self.values[i - 1] * (1.0 + MONOTONE_SLACK))
    }
}

fn check_decreasing(deltas: &[f64]) -> Result<()> {
    if deltas.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::invalid("noise levels must be positive"));
    }
    if deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("delta grid must be strictly decreasing"));
    }
    Ok(())
}

fn check_geometric(deltas: &[f64]) -> Result<()> {
    check_decreasing(deltas)?;
    if deltas.len() < MIN_CURVE_POINTS {
        return Err(Error::invalid(format!(
            "delta grid needs at least {MIN_CURVE_POINTS} points, got {}",
            deltas.len()
        )));
    }
    let q = (deltas[1] / deltas[0]).ln();
    if deltas
        .windows(2)
        .any(|w| ((w[1] / w[0]).ln() - q).abs() > 1e-9 * q.abs().max(1.0))
    {
        return Err(Error::invalid("delta grid must be geometric"));
    }
    Ok(())
}

/// `E^tot(x, δ)` along a geometric δ grid.
///
/// After the per-δ minimizations every sample is also evaluated at the other
/// samples' minimizers and keeps the smallest value. All these are genuine
/// upper bounds of the infimum, and pooling them makes the curve exactly
/// monotone in δ whenever the worst-case error is.
pub fn sample_total_error(
    op: &SpectralOperator,
    fam: &FilterFamily,
    x: &SpectralElement,
    deltas: &[f64],
    alpha_spec: &AlphaGridSpec,
    tag: SourceTag,
) -> Result<ErrorCurve> {
    check_geometric(deltas)?;
    let total = deltas.len();
    let results: Vec<Result<_>> = deltas
        .par_iter()
        .map(|&d| total_error(op, fam, x, d, alpha_spec))
        .collect();
    let mut samples = Vec::with_capacity(total);
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => samples.push(s),
            Err(e) => {
                return Err(Error::PartialCurve {
                    completed: i,
                    total,
                    prefix: samples.iter().map(|s| s.value).collect(),
                    source: Box::new(e),
                })
            }
        }
    }
    let stars: Vec<f64> = samples.iter().map(|s| s.alpha_star).collect();
    let pooled = deltas
        .par_iter()
        .zip(samples.par_iter())
        .map(|(&d, s)| {
            let mut best = (s.value, s.alpha_star);
            for &a in &stars {
                if a != s.alpha_star {
                    let v = worst_case_error(op, fam, a, x, d)?.value;
                    if v < best.0 {
                        best = (v, a);
                    }
                }
            }
            Ok(best)
        })
        .collect::<Result<Vec<_>>>()?;
    let grid = alpha_spec.build(fam.alpha_max())?;
    let n = grid.len();
    let curve = ErrorCurve {
        deltas: deltas.to_vec(),
        values: pooled.iter().map(|p| p.0).collect(),
        alpha_stars: pooled.iter().map(|p| p.1).collect(),
        boundary_flags: pooled.iter().map(|p| p.1 <= grid[1] || p.1 >= grid[n - 2]).collect(),
        source_tag: tag,
    };
    if let Some(i) = curve.monotonicity_violation() {
        return Err(Error::NumericFailure(format!(
            "total error not monotone in delta: E({:e}) = {:e} > E({:e}) = {:e}",
            curve.deltas[i],
            curve.values[i],
            curve.deltas[i - 1],
            curve.values[i - 1]
        )));
    }
    Ok(curve)
}

/// Which samples may enter a rate fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowPolicy {
    pub exclude_boundary: bool,
    /// Samples whose minimizing α falls below this are excluded.
    pub min_alpha: Option<f64>,
    pub min_len: usize,
}

impl Default for WindowPolicy {
    fn default() -> Self {
        WindowPolicy {
            exclude_boundary: true,
            min_alpha: None,
            min_len: MIN_FIT_POINTS,
        }
    }
}

impl WindowPolicy {
    /// Also drops samples with `α* < 0.1 λ_min`, where the finite model no
    /// longer behaves like an ill-posed problem.
    pub fn resolved(op: &SpectralOperator) -> Self {
        WindowPolicy {
            min_alpha: Some(0.1 * op.smallest()),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub slope: f64,
    pub intercept: f64,
    pub max_abs_residual: f64,
    /// Half-open index range `[start, end)` into the curve.
    pub window: (usize, usize),
}

/// Ordinary least squares `(slope, intercept)` of `y` on `x`.
fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Log-log least squares over the longest contiguous run of usable samples
/// (earliest run on ties).
pub fn fit_rate(curve: &ErrorCurve, policy: &WindowPolicy) -> Result<RateEstimate> {
    let usable = |i: usize| {
        let boundary = policy.exclude_boundary && curve.boundary_flags.get(i).copied().unwrap_or(false);
        let unresolved = match (policy.min_alpha, curve.alpha_stars.get(i)) {
            (Some(m), Some(&a)) => a < m,
            _ => false,
        };
        !boundary && !unresolved && curve.values[i] > 0.0
    };
    let mut best = (0, 0);
    let mut start = None;
    for i in 0..=curve.len() {
        if i < curve.len() && usable(i) {
            start.get_or_insert(i);
        } else if let Some(s) = start.take() {
            if i - s > best.1 - best.0 {
                best = (s, i);
            }
        }
    }
    let need = policy.min_len.max(2);
    let got = best.1 - best.0;
    if got < need {
        return Err(Error::InsufficientData { needed: need, got });
    }
    let (a, b) = best;
    let lx: Vec<f64> = curve.deltas[a..b].iter().map(|d| d.ln()).collect();
    let ly: Vec<f64> = curve.values[a..b].iter().map(|v| v.ln()).collect();
    let (slope, intercept) = ols(&lx, &ly);
    let max_abs_residual = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - slope * x - intercept).abs())
        .fold(0.0, f64::max);
    Ok(RateEstimate {
        slope,
        intercept,
        max_abs_residual,
        window: best,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// Allowed distance of fitted slopes from the theoretical exponent.
    pub slope_tol: f64,
    /// Log-ratio slope separating equivalence from strict precedence.
    pub trend: f64,
    /// Max/min ratio allowed for equivalence, and growth allowed for precedence.
    pub band_cap: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            slope_tol: 0.06,
            trend: 0.05,
            band_cap: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Precedes,
    StrictlyPrecedes,
    Equivalent,
    Incomparable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonVerdict {
    pub relation: Relation,
    /// The relation holds from `b` to `a` rather than from `a` to `b`.
    pub reversed: bool,
    pub ratio_head: f64,
    pub ratio_tail: f64,
    /// OLS slope of `ln(a/b)` against `ln δ`.
    pub trend: f64,
    /// Max over min of `a/b` in the window.
    pub band: f64,
}

impl ComparisonVerdict {
    /// `a ≺ b`.
    pub fn strictly_precedes(&self) -> bool {
        self.relation == Relation::StrictlyPrecedes && !self.reversed
    }
}

/// Empirical order relation between two curves on a shared δ grid, using
/// the samples where neither curve is boundary-flagged.
pub fn compare_curves(a: &ErrorCurve, b: &ErrorCurve, th: &Thresholds) -> Result<ComparisonVerdict> {
    if a.deltas.len() != b.deltas.len()
        || a.deltas
            .iter()
            .zip(&b.deltas)
            .any(|(x, y)| (x - y).abs() > 1e-12 * x.abs().max(y.abs()))
    {
        return Err(Error::invalid("curves are sampled on different delta grids"));
    }
    let idx: Vec<usize> = (0..a.len())
        .filter(|&i| !a.boundary_flags.get(i).copied().unwrap_or(false) && !b.boundary_flags.get(i).copied().unwrap_or(false))
        .collect();
    if idx.len() < 3 {
        return Err(Error::InsufficientData { needed: 3, got: idx.len() });
    }
    let lx: Vec<f64> = idx.iter().map(|&i| a.deltas[i].ln()).collect();
    let lr: Vec<f64> = idx.iter().map(|&i| (a.values[i] / b.values[i]).ln()).collect();
    let (trend, _) = ols(&lx, &lr);
    let ratios: Vec<f64> = lr.iter().map(|v| v.exp()).collect();
    let rmax = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let rmin = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let head = ratios[0];
    let tail = *ratios.last().expect("at least 3 samples");
    let band = rmax / rmin;
    let (relation, reversed) = if trend.abs() < th.trend && band <= th.band_cap {
        (Relation::Equivalent, false)
    } else if trend >= th.trend {
        (Relation::StrictlyPrecedes, false)
    } else if trend <= -th.trend {
        (Relation::StrictlyPrecedes, true)
    } else if rmax <= th.band_cap * head {
        (Relation::Precedes, false)
    } else if rmin >= head / th.band_cap {
        (Relation::Precedes, true)
    } else {
        (Relation::Incomparable, false)
    };
    Ok(ComparisonVerdict {
        relation,
        reversed,
        ratio_head: head,
        ratio_tail: tail,
        trend,
        band,
    })
}

/// `ξ_i = ±i^{−0.51}`: alternating signs, permuted by a seeded shuffle.
pub fn default_xi(n: usize, seed: u64) -> SpectralElement {
    let mut signs: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    signs.shuffle(&mut stream_rng(seed, 0));
    SpectralElement::new(
        signs
            .into_iter()
            .enumerate()
            .map(|(i, s)| s * ((i + 1) as f64).powf(-0.51))
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub mu_or_rho: String,
    pub mu: Option<f64>,
    pub rate: Option<RateEstimate>,
    /// Why no rate could be fitted, if so.
    pub rate_error: Option<String>,
    pub curve: ErrorCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaturationSweepReport {
    pub family: String,
    pub entries: Vec<SweepEntry>,
    pub theoretical_exponent: Option<f64>,
    pub clamp_verdict: bool,
    pub invariance_verdict: bool,
    /// `None` when no sub-saturation source was swept.
    pub optimality_verdict: Option<bool>,
    /// Verdict against the saturation profile (maximal sweeps only).
    pub profile_verdict: Option<ComparisonVerdict>,
    pub note: String,
}

const EMPIRICAL_NOTE: &str =
    "empirical: verdicts are trend proxies on finitely many noise levels and do not certify limits as delta -> 0";

/// Sweep options shared by the classical and maximal experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub alpha: AlphaGridSpec,
    pub thresholds: Thresholds,
    pub window: WindowPolicy,
}

impl SweepOptions {
    pub fn for_operator(op: &SpectralOperator) -> Self {
        SweepOptions {
            alpha: AlphaGridSpec::default(),
            thresholds: Thresholds::default(),
            window: WindowPolicy::resolved(op),
        }
    }
}

/// Total-error sweeps for the sources `x_μ = (T*T)^μ ξ`, `μ ∈ mu_list`.
pub fn saturation_sweep_classical(
    op: &SpectralOperator,
    fam: &FilterFamily,
    mu0: f64,
    mu_list: &[f64],
    xi: &SpectralElement,
    seed: u64,
    deltas: &[f64],
    opts: &SweepOptions,
) -> Result<SaturationSweepReport> {
    let theory = saturation_rate_classical(mu0)?;
    if !mu_list.iter().any(|&m| m >= mu0) {
        return Err(Error::invalid("mu list needs at least one value at or above mu0"));
    }
    let entries = mu_list
        .iter()
        .map(|&mu| {
            let x = source_element_power(op, mu, xi)?;
            let tag = SourceTag {
                label: format!("mu={mu}"),
                seed,
            };
            let curve = sample_total_error(op, fam, &x, deltas, &opts.alpha, tag)?;
            let (rate, rate_error) = match fit_rate(&curve, &opts.window) {
                Ok(r) => (Some(r), None),
                Err(e @ Error::InsufficientData { .. }) => (None, Some(e.to_string())),
                Err(e) => return Err(e),
            };
            Ok(SweepEntry {
                mu_or_rho: format!("{mu}"),
                mu: Some(mu),
                rate,
                rate_error,
                curve,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let tol = opts.thresholds.slope_tol;
    let slope = |e: &SweepEntry| e.rate.as_ref().map(|r| r.slope);
    let above: Vec<&SweepEntry> = entries.iter().filter(|e| e.mu.unwrap() >= mu0).collect();
    let below: Vec<&SweepEntry> = entries.iter().filter(|e| e.mu.unwrap() < mu0).collect();
    let clamp_verdict = above.iter().all(|e| slope(e).is_some_and(|s| (s - theory).abs() <= tol))
        && below.iter().all(|e| slope(e).is_some_and(|s| s < theory - tol));

    let mut invariance_verdict = true;
    for (i, a) in above.iter().enumerate() {
        for b in &above[i + 1..] {
            let v = compare_curves(&a.curve, &b.curve, &opts.thresholds)?;
            invariance_verdict &= v.relation == Relation::Equivalent;
        }
    }

    let optimality_verdict = if below.is_empty() {
        None
    } else {
        let deltas = &entries[0].curve.deltas;
        let profile = ErrorCurve::from_values(
            deltas.clone(),
            deltas.iter().map(|d| d.powf(theory)).collect(),
            format!("delta^{theory}"),
        )?;
        let mut ok = true;
        for e in &below {
            let v = compare_curves(&e.curve, &profile, &opts.thresholds)?;
            ok &= !v.strictly_precedes() && slope(e).is_some_and(|s| s < theory);
        }
        Some(ok)
    };

    Ok(SaturationSweepReport {
        family: fam.name().to_string(),
        entries,
        theoretical_exponent: Some(theory),
        clamp_verdict,
        invariance_verdict,
        optimality_verdict,
        profile_verdict: None,
        note: EMPIRICAL_NOTE.to_string(),
    })
}

/// Curve for `x = ρ(T*T)ξ`, the profile `ψ(δ) = ρ(Θ⁻¹(δ))` on the same grid,
/// and their comparison. No qualification precondition is enforced here.
pub fn profile_comparison(
    op: &SpectralOperator,
    fam: &FilterFamily,
    rho: &IndexFunction,
    xi: &SpectralElement,
    seed: u64,
    deltas: &[f64],
    opts: &SweepOptions,
) -> Result<(ErrorCurve, ErrorCurve, ComparisonVerdict)> {
    let theta = ThetaMap::new(rho.clone(), op.norm_sq(), fam.alpha_max())?;
    let psi = deltas.iter().map(|&d| theta.profile(d)).collect::<Result<Vec<_>>>()?;
    let x = source_element_general(op, rho, xi)?;
    let tag = SourceTag {
        label: format!("rho={}", rho.name()),
        seed,
    };
    let curve = sample_total_error(op, fam, &x, deltas, &opts.alpha, tag)?;
    let profile = ErrorCurve::from_values(deltas.to_vec(), psi, format!("psi:{}", rho.name()))?;
    let verdict = compare_curves(&curve, &profile, &opts.thresholds)?;
    Ok((curve, profile, verdict))
}

/// Probe points for the lower maximal-qualification witness.
fn probes(cap: f64) -> Vec<f64> {
    [1e-3, 1e-2, 1e-1].iter().map(|p| p * cap).collect()
}

/// Sweep for a family with maximal qualification `ρ`; requires `ρ` to pass
/// [`check_maximal`].
pub fn saturation_sweep_maximal(
    op: &SpectralOperator,
    fam: &FilterFamily,
    rho: &IndexFunction,
    xi: &SpectralElement,
    seed: u64,
    deltas: &[f64],
    opts: &SweepOptions,
) -> Result<SaturationSweepReport> {
    let cap = op.norm_sq();
    let maximal = check_maximal(fam, rho, cap, &qualification_alphas(fam.alpha_max()), &probes(cap))?;
    if !maximal.passed {
        return Err(Error::invalid(format!(
            "{} is not a maximal qualification of {} (upper growth {:.3e}, lower decay {:?})",
            rho.name(),
            fam.name(),
            maximal.gamma_growth,
            maximal.c_decay
        )));
    }
    let (curve, _, verdict) = profile_comparison(op, fam, rho, xi, seed, deltas, opts)?;
    let (rate, rate_error) = match fit_rate(&curve, &opts.window) {
        Ok(r) => (Some(r), None),
        Err(e @ Error::InsufficientData { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let clamp = verdict.relation == Relation::Equivalent;
    Ok(SaturationSweepReport {
        family: fam.name().to_string(),
        entries: vec![SweepEntry {
            mu_or_rho: rho.name(),
            mu: None,
            rate,
            rate_error,
            curve,
        }],
        theoretical_exponent: None,
        clamp_verdict: clamp,
        invariance_verdict: clamp,
        optimality_verdict: None,
        profile_verdict: Some(verdict),
        note: EMPIRICAL_NOTE.to_string(),
    })
}
