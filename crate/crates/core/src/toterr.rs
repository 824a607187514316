//! Worst-case reconstruction error over the noise ball and its infimum over α.
//!
//! In the eigenbasis the error of `R_α y^δ` is `b + D e` with bias
//! `b_i = −r_α(λ_i) x_i`, amplification `d_i = √λ_i g_α(λ_i)` and noise `e`,
//! `‖e‖ ≤ δ`. Maximizing a convex function over a ball, the optimum sits on
//! the sphere and satisfies `e_i = d_i b_i / (ν − d_i²)` with `ν ≥ max d²`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::FilterFamily;
use crate::grid::log_space;
use crate::spectral::{l2_norm, SpectralElement, SpectralOperator};

const MAX_ITER: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstCaseSolution {
    pub noise: Vec<f64>,
    pub value: f64,
    pub multiplier: f64,
    pub hard_case: bool,
}

/// Maximizes `‖b + diag(d) e‖` over `‖e‖ ≤ δ`.
pub fn worst_case_from_parts(b: &[f64], d: &[f64], delta: f64) -> Result<WorstCaseSolution> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid(format!("noise level must be positive, got {delta}")));
    }
    if b.len() != d.len() || b.is_empty() {
        return Err(Error::invalid(format!(
            "bias and amplification lengths differ or are empty ({} vs {})",
            b.len(),
            d.len()
        )));
    }
    if b.iter().chain(d).any(|v| !v.is_finite()) {
        return Err(Error::invalid("bias and amplification must be finite"));
    }
    let m = d.iter().fold(0.0_f64, |acc, x| acc.max(x * x));
    let gap: Vec<f64> = d.iter().map(|x| m - x * x).collect();
    let db: Vec<f64> = d.iter().zip(b).map(|(x, y)| x * y).collect();

    let finish = |u: Vec<f64>, t: f64, hard: bool| -> WorstCaseSolution {
        let value = error_norm(b, d, &u, delta);
        let n = l2_norm(&u);
        let scale = if n > 0.0 { delta / n } else { 0.0 };
        WorstCaseSolution {
            value,
            noise: u.iter().map(|v| v * scale).collect(),
            multiplier: m + t,
            hard_case: hard,
        }
    };

    let active = gap.iter().zip(&db).any(|(&g, &v)| g == 0.0 && v != 0.0);
    if !active {
        // bounded secular function at t = 0; check for the hard case
        let q0: Vec<f64> = gap
            .iter()
            .zip(&db)
            .map(|(&g, &v)| if v == 0.0 { 0.0 } else { v / g })
            .collect();
        let phi0 = l2_norm(&q0);
        if phi0 <= delta {
            let j = gap.iter().position(|&g| g == 0.0).expect("some index attains the max");
            let mut e = q0;
            // (δ − φ)(δ + φ) avoids cancellation in δ² − φ²
            e[j] = ((delta - phi0) * (delta + phi0)).sqrt();
            if e.iter().all(|&v| v == 0.0) {
                e[j] = delta;
            }
            return Ok(finish(e, 0.0, true));
        }
    }

    // f(t) = 1/‖q(t)‖ − 1/δ with q_i = d_i b_i/(gap_i + t): increasing and concave
    let q_of = |t: f64| -> Vec<f64> {
        gap.iter()
            .zip(&db)
            .map(|(&g, &v)| if v == 0.0 { 0.0 } else { v / (g + t) })
            .collect()
    };
    let f_and_df = |t: f64| -> (f64, f64) {
        let q = q_of(t);
        let n = l2_norm(&q);
        if n == 0.0 {
            return (f64::INFINITY, 0.0);
        }
        if !n.is_finite() {
            return (-1.0 / delta, 0.0);
        }
        let s: f64 = q.iter().zip(&gap).map(|(qi, g)| (qi / n).powi(2) / (g + t)).sum();
        (1.0 / n - 1.0 / delta, s / n)
    };

    let mut lo = gap
        .iter()
        .zip(&db)
        .filter(|(_, &v)| v != 0.0)
        .map(|(&g, &v)| v.abs() / delta - g)
        .fold(0.0_f64, f64::max);
    let mut hi = l2_norm(&db) / delta;
    let mut expand = 0;
    while f_and_df(hi).0 < 0.0 {
        hi *= 2.0;
        expand += 1;
        if expand > 64 {
            return Err(Error::NumericFailure("secular equation bracket could not be closed".into()));
        }
    }
    if f_and_df(lo).0 > 0.0 {
        lo = 0.0;
    }
    // from the left Newton on a concave increasing function never overshoots
    let mut t = lo;
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let (f, df) = f_and_df(t);
        if f.abs() <= 4.0 * f64::EPSILON / delta {
            converged = true;
            break;
        }
        if f < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            converged = true;
            break;
        }
        let newton = t - f / df;
        t = if df > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    if !converged {
        return Err(Error::NumericFailure(format!(
            "secular equation did not converge in {MAX_ITER} iterations (delta = {delta:e})"
        )));
    }
    Ok(finish(q_of(t), t, false))
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Double-double `√(Σ v_i²)`.
fn dd_norm(v: impl Iterator<Item = (f64, f64)>) -> (f64, f64) {
    let (mut hi, mut lo) = (0.0_f64, 0.0_f64);
    for (x, x_lo) in v {
        let (sq, mut sq_lo) = two_prod(x, x);
        sq_lo = (2.0 * x).mul_add(x_lo, sq_lo);
        let (s, s_lo) = two_sum(hi, sq);
        lo += s_lo + sq_lo;
        hi = s;
    }
    let (hi, lo) = two_sum(hi, lo);
    if hi == 0.0 {
        return (0.0, 0.0);
    }
    let r = hi.sqrt();
    two_sum(r, ((-r).mul_add(r, hi) + lo) / (2.0 * r))
}

/// `‖b + δ·diag(d) u/‖u‖‖` in double-double, so the result is rounded once.
///
/// At the maximizer the terms `b_i` and `d_i e_i` share signs, so the value
/// inherits only the rounding of its inputs; this keeps it homogeneous in
/// `(b, δ)` to within a couple of ulps.
fn error_norm(b: &[f64], d: &[f64], u: &[f64], delta: f64) -> f64 {
    let (n, n_lo) = dd_norm(u.iter().map(|&x| (x, 0.0)));
    // c = δ/‖u‖ as a double-double
    let (c, c_lo) = if n == 0.0 {
        (0.0, 0.0)
    } else {
        let c = delta / n;
        (c, ((-c).mul_add(n, delta) - c * n_lo) / n)
    };
    let top = b
        .iter()
        .zip(d)
        .zip(u)
        .fold(0.0_f64, |m, ((bi, di), ui)| m.max(bi.abs() + (di * ui * c).abs()));
    if top == 0.0 || !top.is_finite() {
        return top;
    }
    // power-of-two scaling is exact
    let scale = 2f64.powi(-(top.log2().floor() as i32));
    let terms = b.iter().zip(d).zip(u).map(|((&bi, &di), &ui)| {
        let (w, mut w_lo) = two_prod(c * scale, ui);
        w_lo = (c_lo * scale).mul_add(ui, w_lo);
        let (x, mut x_lo) = two_prod(di, w);
        x_lo = di.mul_add(w_lo, x_lo);
        let (e, e_lo) = two_sum(bi * scale, x);
        (e, e_lo + x_lo)
    });
    dd_norm(terms).0 / scale
}

/// `(‖b‖, d)` with `b_i = −r_α(λ_i)x_i` and `d_i = √λ_i g_α(λ_i)`.
pub fn bias_noise_profile(
    op: &SpectralOperator,
    fam: &FilterFamily,
    alpha: f64,
    x: &SpectralElement,
) -> Result<(f64, Vec<f64>)> {
    let (b, d) = bias_and_amplification(op, fam, alpha, x)?;
    Ok((l2_norm(&b), d))
}

fn bias_and_amplification(
    op: &SpectralOperator,
    fam: &FilterFamily,
    alpha: f64,
    x: &SpectralElement,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != op.dim() {
        return Err(Error::invalid(format!(
            "element has {} coefficients but the operator has dimension {}",
            x.len(),
            op.dim()
        )));
    }
    fam.check_alpha(alpha)?;
    let mut b = Vec::with_capacity(x.len());
    let mut d = Vec::with_capacity(x.len());
    for (&l, &c) in op.eigenvalues().iter().zip(&x.coeffs) {
        let (g, r) = fam.eval(alpha, l)?;
        b.push(-r * c);
        d.push(l.sqrt() * g);
    }
    Ok((b, d))
}

/// Worst-case error of `R_α` at noise level `δ` for the exact solution `x`.
pub fn worst_case_error(
    op: &SpectralOperator,
    fam: &FilterFamily,
    alpha: f64,
    x: &SpectralElement,
    delta: f64,
) -> Result<WorstCaseSolution> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid(format!("noise level must be positive, got {delta}")));
    }
    if x.is_zero() {
        return Err(Error::DegenerateSource("exact solution is identically zero".into()));
    }
    let (b, d) = bias_and_amplification(op, fam, alpha, x)?;
    worst_case_from_parts(&b, &d, delta)
}

/// Log-spaced α scan on `[alpha_min, α₀(1 − 1e-9)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlphaGridSpec {
    pub alpha_min: f64,
    pub points: usize,
    /// Golden-section stops once the bracket is this wide relative to α.
    pub rel_width: f64,
}

impl Default for AlphaGridSpec {
    fn default() -> Self {
        AlphaGridSpec {
            alpha_min: 1e-10,
            points: 96,
            rel_width: 1e-6,
        }
    }
}

impl AlphaGridSpec {
    pub fn build(&self, alpha_max: f64) -> Result<Vec<f64>> {
        let hi = alpha_max * (1.0 - 1e-9);
        if !(self.alpha_min > 0.0 && self.alpha_min < hi) {
            return Err(Error::invalid(format!(
                "alpha grid needs 0 < alpha_min < alpha_max, got alpha_min = {:e}, alpha_max = {alpha_max:e}",
                self.alpha_min
            )));
        }
        if self.points < 4 {
            return Err(Error::invalid("alpha grid needs at least 4 points"));
        }
        if !(self.rel_width > 0.0 && self.rel_width < 1.0) {
            return Err(Error::invalid("rel_width must lie in (0, 1)"));
        }
        Ok(log_space(self.alpha_min, hi, self.points))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TotalErrorResult {
    pub alpha_star: f64,
    pub value: f64,
    pub boundary_hit: bool,
    /// `(α, worst-case error)` on the scan grid.
    pub profile: Vec<(f64, f64)>,
}

/// `inf_α sup_{‖e‖≤δ} ‖R_α(Tx + e) − x‖`: a global scan over the α grid,
/// then golden-section search in `ln α` inside the best three-point bracket.
pub fn total_error(
    op: &SpectralOperator,
    fam: &FilterFamily,
    x: &SpectralElement,
    delta: f64,
    spec: &AlphaGridSpec,
) -> Result<TotalErrorResult> {
    let grid = spec.build(fam.alpha_max())?;
    let eval = |a: f64| worst_case_error(op, fam, a, x, delta).map(|s| s.value);
    let values = grid.par_iter().map(|&a| eval(a)).collect::<Result<Vec<f64>>>()?;
    let n = grid.len();
    let i = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("non-empty grid");
    let mut best = (grid[i], values[i]);

    let (mut lo, mut hi) = (grid[i.saturating_sub(1)].ln(), grid[(i + 1).min(n - 1)].ln());
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let tol = spec.rel_width.ln_1p();
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = eval(c.exp())?;
    let mut fd = eval(d.exp())?;
    while hi - lo > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = eval(c.exp())?;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = eval(d.exp())?;
        }
        for (t, v) in [(c, fc), (d, fd)] {
            if v < best.1 {
                best = (t.exp(), v);
            }
        }
    }
    let boundary_hit = best.0 <= grid[1] || best.0 >= grid[n - 2];
    Ok(TotalErrorResult {
        alpha_star: best.0,
        value: best.1,
        boundary_hit,
        profile: grid.into_iter().zip(values).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_worst_case() {
        let s = worst_case_from_parts(&[0.3], &[2.0], 0.1).unwrap();
        assert!((s.value - 0.5).abs() < 1e-15);
        assert!((s.noise[0] - 0.1).abs() < 1e-17);
        let s = worst_case_from_parts(&[-0.3], &[2.0], 0.1).unwrap();
        assert!((s.noise[0] + 0.1).abs() < 1e-17);
    }

    #[test]
    fn zero_amplification_is_hard_case() {
        let s = worst_case_from_parts(&[0.3, -0.4], &[0.0, 0.0], 0.2).unwrap();
        assert!(s.hard_case);
        assert!((s.value - 0.5).abs() < 1e-15);
        assert!((l2_norm(&s.noise) - 0.2).abs() < 1e-16);
    }

    #[test]
    fn hard_case_with_zero_bias_on_top_direction() {
        // max d on index 0 where b vanishes; small pull from index 1
        let s = worst_case_from_parts(&[0.0, 1e-3], &[2.0, 1.0], 0.5).unwrap();
        assert!(s.hard_case);
        assert!((l2_norm(&s.noise) - 0.5).abs() < 1e-15);
        // brute force on the circle
        let mut best = 0.0_f64;
        for k in 0..200_000 {
            let th = k as f64 / 200_000.0 * std::f64::consts::TAU;
            let (e0, e1) = (0.5 * th.cos(), 0.5 * th.sin());
            best = best.max(((2.0 * e0).powi(2) + (1e-3 + e1).powi(2)).sqrt());
        }
        assert!((s.value - best).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(worst_case_from_parts(&[1.0], &[1.0], 0.0).is_err());
        assert!(worst_case_from_parts(&[1.0], &[1.0, 2.0], 0.1).is_err());
        let op = SpectralOperator::from_eigenvalues(vec![1.0]).unwrap();
        let zero = SpectralElement::new(vec![0.0]);
        assert!(matches!(
            worst_case_error(&op, &FilterFamily::tikhonov(), 0.5, &zero, 0.1),
            Err(Error::DegenerateSource(_))
        ));
    }

    #[test]
    fn single_mode_tikhonov_total_error() {
        let op = SpectralOperator::from_eigenvalues(vec![1.0]).unwrap();
        let x = SpectralElement::new(vec![1.0]);
        let fam = FilterFamily::tikhonov();
        let r = total_error(&op, &fam, &x, 0.25, &AlphaGridSpec::default()).unwrap();
        assert!((r.value - 0.25).abs() < 1e-9);
        assert!(r.boundary_hit);
        // δ > 1: (α+δ)/(1+α) decreases toward α₀ = 1
        let r = total_error(&op, &fam, &x, 2.0, &AlphaGridSpec::default()).unwrap();
        let a0 = 1.0 - 1e-9;
        assert!((r.value - (a0 + 2.0) / (1.0 + a0)).abs() < 1e-9);
        assert!(r.boundary_hit);
        for &(a, v) in &r.profile {
            assert!((v - (a + 2.0) / (1.0 + a)).abs() < 1e-14);
        }
    }

    #[test]
    fn bias_profile_examples() {
        let op = SpectralOperator::from_eigenvalues(vec![1.0]).unwrap();
        let x = SpectralElement::new(vec![1.0]);
        let (bias, d) = bias_noise_profile(&op, &FilterFamily::tikhonov(), 1.0 - 1e-12, &x).unwrap();
        assert!((bias - 0.5).abs() < 1e-12 && (d[0] - 0.5).abs() < 1e-12);
        let op = SpectralOperator::from_eigenvalues(vec![0.3, 0.01]).unwrap();
        let (_, d) = bias_noise_profile(&op, &FilterFamily::example4(), 0.05, &SpectralElement::new(vec![1.0, 1.0])).unwrap();
        assert!(d[0] > 0.0 && d[1] == 0.0);
    }

    #[test]
    fn monotone_in_delta_probe() {
        let op = SpectralOperator::power(100, 2.0).unwrap();
        let x = crate::spectral::source_element_power(&op, 1.0, &SpectralElement::new(vec![1.0; 100])).unwrap();
        let fam = FilterFamily::tikhonov();
        let a = total_error(&op, &fam, &x, 1e-4, &AlphaGridSpec::default()).unwrap();
        let b = total_error(&op, &fam, &x, 2e-4, &AlphaGridSpec::default()).unwrap();
        assert!(a.value <= b.value);
    }
}
