//! Grid-based verification of the hypotheses saturation results place on a
//! filter family.
//!
//! Every inequality is tested with a relative margin `(rhs − lhs)/scale`; the
//! reported `slack` is the smallest margin plus `1e-12`, so a check passes
//! exactly when its slack is nonnegative. Existence claims without a supplied
//! constant run in search mode and report the best constant the grid
//! supports. Growth-type conditions (uniform bounds in `α` or `λ`) cannot be
//! certified from samples and are decided by comparing the extreme decade of
//! the grid against the rest.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::FilterFamily;
use crate::grid::{log_space, Grids};
use crate::spectral::{IndexFunction, SpectralOperator};

const REL_TOL: f64 = 1e-12;
/// Allowed growth of `|λ g|` from the bulk of the λ grid into its smallest decade.
const H2_GROWTH: f64 = 1.5;
/// Allowed growth of `G_α √α` from the bulk of the α grid into its smallest decade.
const H4_GROWTH: f64 = 1.05;
/// Allowed growth of the maximal-qualification ratio into the smallest α decade.
const M3_GROWTH: f64 = 1.5;
const M4_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CheckId {
    H2,
    H3,
    H4,
    /// `√λ`-weighted form of H4: `√α · sup_λ √λ|g_α(λ)|` bounded.
    H4w,
    #[serde(rename = "iiA")]
    IiA,
    #[serde(rename = "iiB")]
    IiB,
    #[serde(rename = "iiC")]
    IiC,
    #[serde(rename = "iiD")]
    IiD,
    #[serde(rename = "iiE")]
    IiE,
    #[serde(rename = "iv")]
    Iv,
    M1,
    M2a,
    M2b,
    M2c,
    M2d,
    M2e,
    M3upper,
    M3lower,
    M4,
    M5,
    #[serde(rename = "LUT")]
    Lut,
    #[serde(rename = "INV")]
    Inv,
}

impl CheckId {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckId::H2 => "H2",
            CheckId::H3 => "H3",
            CheckId::H4 => "H4",
            CheckId::H4w => "H4w",
            CheckId::IiA => "iiA",
            CheckId::IiB => "iiB",
            CheckId::IiC => "iiC",
            CheckId::IiD => "iiD",
            CheckId::IiE => "iiE",
            CheckId::Iv => "iv",
            CheckId::M1 => "M1",
            CheckId::M2a => "M2a",
            CheckId::M2b => "M2b",
            CheckId::M2c => "M2c",
            CheckId::M2d => "M2d",
            CheckId::M2e => "M2e",
            CheckId::M3upper => "M3upper",
            CheckId::M3lower => "M3lower",
            CheckId::M4 => "M4",
            CheckId::M5 => "M5",
            CheckId::Lut => "LUT",
            CheckId::Inv => "INV",
        }
    }
}

impl fmt::Display for CheckId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub id: CheckId,
    pub passed: bool,
    pub witnessed_constant: Option<f64>,
    /// `(α, λ)` of the tightest or violating sample. `LUT` reports `(s, t)`
    /// and `M1` the offending eigenvalue pair.
    pub worst_point: Option<(f64, f64)>,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub family: String,
    pub params: std::collections::BTreeMap<String, f64>,
    pub checks: Vec<CheckResult>,
    pub grids: String,
}

impl HypothesisReport {
    pub fn get(&self, id: CheckId) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.id == id)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Relative margin of `lhs ≤ rhs`.
fn margin_le(lhs: f64, rhs: f64) -> f64 {
    let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
    (rhs - lhs) / scale
}

/// Tracks the smallest margin seen and where it occurred.
struct Margin {
    min: f64,
    at: Option<(f64, f64)>,
}

impl Margin {
    fn new() -> Self {
        Margin {
            min: f64::INFINITY,
            at: None,
        }
    }

    fn push(&mut self, m: f64, at: (f64, f64)) {
        // NaN margins count as violations
        let m = if m.is_nan() { f64::NEG_INFINITY } else { m };
        if m < self.min || self.at.is_none() {
            self.min = m.min(self.min);
            self.at = Some(at);
        }
    }

    fn finish(self, id: CheckId, witnessed: Option<f64>) -> CheckResult {
        let slack = if self.min.is_finite() { self.min + REL_TOL } else if self.min > 0.0 { f64::MAX } else { f64::MIN };
        CheckResult {
            id,
            passed: slack >= 0.0,
            witnessed_constant: witnessed,
            worst_point: self.at,
            slack,
        }
    }
}

/// Whether the maximum over the "small" samples exceeds `limit` times the
/// maximum over the rest; returns the relative margin of `small ≤ limit·rest`.
fn growth_margin(small: f64, rest: f64, limit: f64) -> f64 {
    if !small.is_finite() || !rest.is_finite() {
        return f64::NEG_INFINITY;
    }
    if small == 0.0 && rest == 0.0 {
        return 0.0;
    }
    margin_le(small, limit * rest)
}

fn positive(v: &[f64]) -> impl Iterator<Item = f64> + '_ {
    v.iter().copied().filter(|&l| l > 0.0)
}

/// H2: `|λ g_α(λ)| ≤ C` uniformly. Without `c` the check passes when the
/// maximum does not grow into the smallest λ decade.
pub fn check_h2(fam: &FilterFamily, grids: &Grids, c: Option<f64>) -> Result<CheckResult> {
    let lmin = grids.lambdas.iter().copied().find(|&l| l > 0.0).ok_or_else(|| Error::invalid("empty lambda grid"))?;
    let edge = 10.0 * lmin;
    let (mut small, mut rest) = (0.0_f64, 0.0_f64);
    let mut best = (f64::NEG_INFINITY, (f64::NAN, f64::NAN));
    for &a in &grids.alphas {
        for l in grids.lambdas_for(a, &[1.0, 2.0, 3.0]) {
            let v = (l * fam.g_eval(a, l)?).abs();
            if l > 0.0 && l <= edge {
                small = small.max(v);
            } else {
                rest = rest.max(v);
            }
            if v > best.0 || v.is_nan() {
                best = (v, (a, l));
            }
        }
    }
    let mut m = Margin::new();
    m.push(growth_margin(small, rest, H2_GROWTH), best.1);
    if let Some(c) = c {
        m.push(margin_le(best.0, c), best.1);
    }
    Ok(m.finish(CheckId::H2, Some(best.0)))
}

/// H3 in the scaled form `|λ g_α(λ) − 1| → 0`. `alphas` must decrease
/// strictly to at most 1e-8. Per λ the last residual must be below 1e-6 or
/// have dropped by at least 1% over the final α decade.
pub fn check_h3(fam: &FilterFamily, lambdas: &[f64], alphas: &[f64]) -> Result<CheckResult> {
    if alphas.len() < 2 || alphas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("H3 needs a strictly decreasing alpha sequence"));
    }
    let last = *alphas.last().expect("checked length");
    if last > 1e-8 {
        return Err(Error::invalid(format!("H3 alpha sequence must reach 1e-8, ends at {last:e}")));
    }
    let dec = alphas.iter().rposition(|&a| a >= 10.0 * last).unwrap_or(0);
    let mut m = Margin::new();
    let mut worst_err = 0.0_f64;
    for l in positive(lambdas) {
        let e_last = fam.r_eval(last, l)?.abs();
        let e_dec = fam.r_eval(alphas[dec], l)?.abs();
        worst_err = worst_err.max(e_last);
        let reached = margin_le(e_last, 1e-6);
        let falling = margin_le(e_last, 0.99 * e_dec);
        m.push(reached.max(falling), (last, l));
    }
    Ok(m.finish(CheckId::H3, Some(worst_err)))
}

/// `max_λ w(λ)|g_α(λ)|` over the shared grid, branch points and the
/// family's analytic maximizers, with the maximizing λ.
fn weighted_sup(fam: &FilterFamily, grids: &Grids, a: f64, w: impl Fn(f64) -> f64) -> Result<(f64, f64)> {
    let mut best = (f64::NEG_INFINITY, f64::NAN);
    let mut ls = grids.lambdas_for(a, &[1.0, 2.0, 3.0]);
    ls.extend(fam.analytic_maximizers(a).into_iter().filter(|&l| l <= grids.lambda_cap));
    for l in ls {
        let v = w(l) * fam.g_eval(a, l)?.abs();
        if v > best.0 || v.is_nan() {
            best = (v, l);
        }
    }
    Ok(best)
}

fn h4_like(fam: &FilterFamily, grids: &Grids, id: CheckId, w: impl Fn(f64) -> f64 + Copy) -> Result<CheckResult> {
    let amin = grids.alphas.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut small, mut rest) = (0.0_f64, 0.0_f64);
    let mut best = (f64::NEG_INFINITY, (f64::NAN, f64::NAN));
    for &a in &grids.alphas {
        let (s, l) = weighted_sup(fam, grids, a, w)?;
        let v = s * a.sqrt();
        if a <= 10.0 * amin {
            small = small.max(v);
        } else {
            rest = rest.max(v);
        }
        if v > best.0 || v.is_nan() {
            best = (v, (a, l));
        }
    }
    let mut m = Margin::new();
    m.push(growth_margin(small, rest, H4_GROWTH), best.1);
    Ok(m.finish(id, Some(best.0)))
}

/// H4: `G_α = ‖g_α‖_∞ = O(1/√α)`, witnessed as `max_α √α G_α`.
pub fn check_h4(fam: &FilterFamily, grids: &Grids) -> Result<CheckResult> {
    h4_like(fam, grids, CheckId::H4, |_| 1.0)
}

/// Weighted H4: `√λ |g_α(λ)| ≤ β/√α`, witnessed as `max_α √α sup_λ √λ|g_α(λ)|`.
pub fn check_h4_weighted(fam: &FilterFamily, grids: &Grids) -> Result<CheckResult> {
    h4_like(fam, grids, CheckId::H4w, f64::sqrt)
}

/// Constants of hypotheses ii.a–e (equivalently M2.a–e). `None` puts the
/// corresponding check in search mode; `c1` then defaults to 2 and `lambda1`
/// to the λ cap.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IiConstants {
    pub lambda1: Option<f64>,
    pub gamma1: Option<f64>,
    pub c1: Option<f64>,
    pub gamma2: Option<f64>,
}

/// Label set to report the five sub-checks under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IiLabel {
    Classical,
    Maximal,
}

impl IiLabel {
    fn ids(self) -> [CheckId; 5] {
        match self {
            IiLabel::Classical => [CheckId::IiA, CheckId::IiB, CheckId::IiC, CheckId::IiD, CheckId::IiE],
            IiLabel::Maximal => [CheckId::M2a, CheckId::M2b, CheckId::M2c, CheckId::M2d, CheckId::M2e],
        }
    }
}

/// ii.a `0 ≤ r ≤ 1` on `[0, λ₁]`; ii.b `r ≥ γ₁` for `λ < α ≤ λ₁`; ii.c `|r|`
/// nondecreasing in α; ii.d `α g_α(c₁α) ≥ γ₂` for `c₁α ≤ λ₁`; ii.e `g_α`
/// nonincreasing on `[α, λ₁]`.
pub fn check_ii(
    fam: &FilterFamily,
    consts: &IiConstants,
    grids: &Grids,
    label: IiLabel,
) -> Result<Vec<CheckResult>> {
    let cap = grids.lambda_cap;
    let l1 = consts.lambda1.unwrap_or(cap);
    let c1 = consts.c1.unwrap_or(2.0);
    if !(l1 > 0.0 && l1 <= cap) {
        return Err(Error::invalid(format!("lambda1 must lie in (0, {cap:e}], got {l1:e}")));
    }
    if !(c1 > 1.0) {
        return Err(Error::invalid(format!("c1 must exceed 1, got {c1}")));
    }
    for (name, v) in [("gamma1", consts.gamma1), ("gamma2", consts.gamma2)] {
        if let Some(v) = v {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
    }
    let [id_a, id_b, id_c, id_d, id_e] = label.ids();
    let branch = [1.0 - 1e-6, 1.0, 2.0, 3.0 * (1.0 - 1e-6), 3.0, c1];

    // a)
    let mut ma = Margin::new();
    let mut rmax = f64::NEG_INFINITY;
    for &a in &grids.alphas {
        for l in grids.lambdas_for(a, &branch).into_iter().filter(|&l| l <= l1) {
            let r = fam.r_eval(a, l)?;
            rmax = rmax.max(r);
            ma.push(margin_le(0.0, r).min(margin_le(r, 1.0)), (a, l));
        }
    }
    let res_a = ma.finish(id_a, Some(rmax));

    // b)
    let mut mb = Margin::new();
    let mut rmin = f64::INFINITY;
    for &a in grids.alphas.iter().filter(|&&a| a <= l1) {
        let mut ls: Vec<f64> = grids.lambdas.iter().copied().filter(|&l| l < a).collect();
        ls.extend([0.5 * a, 0.9 * a, a * (1.0 - 1e-6), a * (1.0 - 1e-12)]);
        for l in ls {
            let r = fam.r_eval(a, l)?;
            if r < rmin {
                rmin = r;
            }
            if let Some(g1) = consts.gamma1 {
                mb.push(margin_le(g1, r), (a, l));
            } else {
                mb.push(if r > 0.0 { 1.0 } else { -1.0 }, (a, l));
            }
        }
    }
    let res_b = mb.finish(id_b, Some(rmin));

    // c)
    let mut mc = Margin::new();
    let mut alphas = grids.alphas.clone();
    alphas.sort_by(f64::total_cmp);
    for l in positive(&grids.lambdas) {
        let mut prev = fam.r_eval(alphas[0], l)?.abs();
        for &a in &alphas[1..] {
            let cur = fam.r_eval(a, l)?.abs();
            mc.push(margin_le(prev, cur), (a, l));
            prev = cur;
        }
    }
    let res_c = mc.finish(id_c, None);

    // d)
    let mut md = Margin::new();
    let mut wmin = f64::INFINITY;
    for &a in grids.alphas.iter().filter(|&&a| c1 * a <= l1) {
        let v = a * fam.g_eval(a, c1 * a)?;
        wmin = wmin.min(v);
        match consts.gamma2 {
            Some(g2) => md.push(margin_le(g2, v), (a, c1 * a)),
            None => md.push(if v > 0.0 { 1.0 } else { -1.0 }, (a, c1 * a)),
        }
    }
    let res_d = md.finish(id_d, Some(wmin));

    // e)
    let mut me = Margin::new();
    for &a in grids.alphas.iter().filter(|&&a| a <= l1) {
        let ls: Vec<f64> = grids
            .lambdas_for(a, &branch)
            .into_iter()
            .filter(|&l| l >= a && l <= l1)
            .collect();
        let mut prev: Option<f64> = None;
        for l in ls {
            let g = fam.g_eval(a, l)?;
            if let Some(p) = prev {
                me.push(margin_le(g, p), (a, l));
            }
            prev = Some(g);
        }
    }
    let res_e = me.finish(id_e, None);

    Ok(vec![res_a, res_b, res_c, res_d, res_e])
}

/// iv: `(λ/α)^{μ₀}|r_α(λ)| ≥ γ` for `cα ≤ λ ≤ ‖T‖²`. Without `gamma` the
/// grid minimum is witnessed and must be positive.
pub fn check_iv(fam: &FilterFamily, mu0: f64, c: f64, gamma: Option<f64>, grids: &Grids) -> Result<CheckResult> {
    if !(mu0 > 0.0 && c > 0.0) {
        return Err(Error::invalid("iv needs mu0 > 0 and c > 0"));
    }
    let mut m = Margin::new();
    let mut vmin = f64::INFINITY;
    for &a in &grids.alphas {
        for l in grids
            .lambdas_for(a, &[c, 2.0 * c, 3.0 * c, 1.0, 3.0])
            .into_iter()
            .filter(|&l| l >= c * a)
        {
            let v = (l / a).powf(mu0) * fam.r_eval(a, l)?.abs();
            vmin = vmin.min(v);
            match gamma {
                Some(g) => m.push(margin_le(g, v), (a, l)),
                None => m.push(if v > 0.0 { 1.0 } else { -1.0 }, (a, l)),
            }
        }
    }
    Ok(m.finish(CheckId::Iv, Some(vmin)))
}

/// M1: consecutive eigenvalue ratios bounded by `c` (witnessed when `None`).
pub fn check_m1(op: &SpectralOperator, c: Option<f64>) -> CheckResult {
    let ev = op.eigenvalues();
    let mut m = Margin::new();
    for w in ev.windows(2) {
        let ratio = w[0] / w[1];
        match c {
            Some(c) => m.push(margin_le(ratio, c), (w[0], w[1])),
            None => m.push(if ratio.is_finite() { 1.0 } else { -1.0 }, (w[0], w[1])),
        }
    }
    m.finish(CheckId::M1, Some(op.ratio_bound()))
}

/// M3: the upper maximal-qualification bound `|r_α(λ)|ρ(λ) ≤ γρ(α)` and the
/// lower bound `ρ(λ)|r_α(λ)|/ρ(α) ≥ a` for `kα ≤ λ ≤ ‖T‖²`.
///
/// In search mode the upper check passes when the ratio does not grow into
/// the smallest α decade, and the lower check when its minimum is positive.
pub fn check_m3(
    fam: &FilterFamily,
    rho: &IndexFunction,
    a: Option<f64>,
    k: f64,
    gamma: Option<f64>,
    grids: &Grids,
) -> Result<(CheckResult, CheckResult)> {
    if !(k > 0.0) {
        return Err(Error::invalid(format!("M3 needs k > 0, got {k}")));
    }
    let amin = grids.alphas.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut small, mut rest) = (0.0_f64, 0.0_f64);
    let mut up_best = (f64::NEG_INFINITY, (f64::NAN, f64::NAN));
    let mut lo = Margin::new();
    let mut lo_min = f64::INFINITY;
    let mut up = Margin::new();
    for &al in &grids.alphas {
        let ra = rho_checked(rho, al)?;
        let mut amax = 0.0_f64;
        for l in positive(&grids.lambdas_for(al, &[1.0 - 1e-6, 1.0, 2.0, 3.0, k])) {
            let ratio = rho_checked(rho, l)? * fam.r_eval(al, l)?.abs() / ra;
            amax = amax.max(ratio);
            if ratio > up_best.0 || ratio.is_nan() {
                up_best = (ratio, (al, l));
            }
            if let Some(g) = gamma {
                up.push(margin_le(ratio, g), (al, l));
            }
            if l >= k * al {
                lo_min = lo_min.min(ratio);
                match a {
                    Some(a) => lo.push(margin_le(a, ratio), (al, l)),
                    None => lo.push(if ratio > 0.0 { 1.0 } else { -1.0 }, (al, l)),
                }
            }
        }
        if al <= 10.0 * amin {
            small = small.max(amax);
        } else {
            rest = rest.max(amax);
        }
    }
    if gamma.is_none() {
        up.push(growth_margin(small, rest, M3_GROWTH), up_best.1);
    }
    Ok((
        up.finish(CheckId::M3upper, Some(up_best.0)),
        lo.finish(CheckId::M3lower, Some(lo_min)),
    ))
}

fn rho_checked(rho: &IndexFunction, t: f64) -> Result<f64> {
    let v = rho.eval(t);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Evaluation {
            lambda: t,
            message: format!("index function {} is not finite ({v})", rho.name()),
        })
    }
}

/// `r_α(λ₁) − r_α(λ₀)` without cancelling the leading 1 when both products
/// `λg` are small, with the magnitude its rounding error scales with.
fn residual_step(p0: (f64, f64, f64), p1: (f64, f64, f64)) -> (f64, f64) {
    let (l0, g0, r0) = p0;
    let (l1, g1, r1) = p1;
    let (q0, q1) = ((l0 * g0).abs(), (l1 * g1).abs());
    if q0 <= 0.5 && q1 <= 0.5 {
        (l0 * g0 - l1 * g1, q0.max(q1))
    } else {
        (r1 - r0, r0.abs().max(r1.abs()))
    }
}

/// M4: `λ ↦ r_α(λ)²` convex on `(0, ‖T‖²]`, tested through nondecreasing
/// divided differences with tolerance 1e-10 relative. Each slope also gets
/// its own rounding allowance, which matters across the 1e-6·α gaps placed
/// around branch points.
pub fn check_m4(fam: &FilterFamily, grids: &Grids) -> Result<CheckResult> {
    let mut m = Margin::new();
    for &a in &grids.alphas {
        let pts = positive(&grids.lambdas_for(a, &[1.0 - 1e-6, 1.0, 1.0 + 1e-6, 2.0, 3.0 * (1.0 - 1e-6), 3.0]))
            .map(|l| fam.eval(a, l).map(|(g, r)| (l, g, r)))
            .collect::<Result<Vec<_>>>()?;
        // (slope, rounding bound, right end)
        let slopes: Vec<(f64, f64, f64)> = pts
            .windows(2)
            .map(|w| {
                let (dr, mag) = residual_step(w[0], w[1]);
                let h = w[1].0 - w[0].0;
                let err = 8.0 * f64::EPSILON * mag * (w[0].2.abs() + w[1].2.abs()) / h;
                (dr * (w[0].2 + w[1].2) / h, err, w[1].0)
            })
            .collect();
        for s in slopes.windows(2) {
            let (s0, s1) = (s[0].0, s[1].0);
            let scale = s0.abs().max(s1.abs()).max(f64::MIN_POSITIVE);
            m.push((s1 - s0 + s[0].1 + s[1].1) / scale + M4_TOL - REL_TOL, (a, s[0].2));
        }
    }
    Ok(m.finish(CheckId::M4, None))
}

/// M5: `√α · sup_λ √λ|g_α(λ)| ≥ b` for every α (witnessed minimum when `b` is `None`).
pub fn check_m5(fam: &FilterFamily, b: Option<f64>, grids: &Grids) -> Result<CheckResult> {
    let mut m = Margin::new();
    let mut wmin = f64::INFINITY;
    for &a in &grids.alphas {
        let (s, l) = weighted_sup(fam, grids, a, f64::sqrt)?;
        let v = s * a.sqrt();
        wmin = wmin.min(v);
        match b {
            Some(b) => m.push(margin_le(b, v), (a, l)),
            None => m.push(if v > 0.0 { 1.0 } else { -1.0 }, (a, l)),
        }
    }
    Ok(m.finish(CheckId::M5, Some(wmin)))
}

/// Local upper type: `ρ(t) ≤ d s^{−β} ρ(st)` on a product grid of `n × n`
/// points, `s ∈ [1e-12, 1]` and `t ∈ [1e-12·cap, cap]`. The witnessed constant
/// is the smallest `d` the grid supports.
pub fn check_local_upper_type(rho: &IndexFunction, beta: f64, d: f64, cap: f64, n: usize) -> Result<CheckResult> {
    if !(beta >= 0.0 && d > 0.0 && cap > 0.0) || n < 2 {
        return Err(Error::invalid("local upper type needs beta >= 0, d > 0, cap > 0, n >= 2"));
    }
    let mut m = Margin::new();
    let mut dmin = 0.0_f64;
    for s in log_space(1e-12, 1.0, n) {
        for t in log_space(1e-12 * cap, cap, n) {
            let lhs = rho_checked(rho, t)?;
            let rhs = s.powf(-beta) * rho.eval(s * t);
            dmin = dmin.max(lhs / rhs);
            m.push(margin_le(lhs, d * rhs), (s, t));
        }
    }
    Ok(m.finish(CheckId::Lut, Some(dmin)))
}

/// `r_α(T*T)` invertible: `min_i |r_α(λ_i)| > 0` for every α on the grid.
pub fn check_invertibility(fam: &FilterFamily, op: &SpectralOperator, alphas: &[f64]) -> Result<CheckResult> {
    let mut m = Margin::new();
    let mut rmin = f64::INFINITY;
    for &a in alphas {
        for &l in op.eigenvalues() {
            let r = fam.r_eval(a, l)?.abs();
            rmin = rmin.min(r);
            m.push(if r > 0.0 { 1.0 } else { -1.0 }, (a, l));
        }
    }
    Ok(m.finish(CheckId::Inv, Some(rmin)))
}

/// Runs every applicable check with the constants each built-in family is
/// constructed to satisfy. `cap` is the λ cap (‖T‖² of the model).
pub fn constants_report(fam: &FilterFamily, cap: f64, op: Option<&SpectralOperator>) -> Result<HypothesisReport> {
    let grids = Grids::standard(cap, fam.alpha_max());
    constants_report_on(fam, &grids, op)
}

pub fn constants_report_on(fam: &FilterFamily, grids: &Grids, op: Option<&SpectralOperator>) -> Result<HypothesisReport> {
    let cap = grids.lambda_cap;
    let mut checks = Vec::new();

    let h3_alphas: Vec<f64> = grids.alphas.iter().rev().copied().collect();
    let a_last = *h3_alphas.last().ok_or_else(|| Error::invalid("empty alpha grid"))?;
    let h3_lambdas: Vec<f64> = grids.lambdas.iter().copied().filter(|&l| l >= 100.0 * a_last).collect();

    let name = fam.name().to_string();
    let h2_c = match name.as_str() {
        "tikhonov" | "example3" => Some(1.0),
        "example2" => Some(1.0 + cap.powf(1.5) * fam.alpha_max().powf(fam.params()["k"])),
        _ => None,
    };
    checks.push(check_h2(fam, grids, h2_c)?);
    checks.push(check_h3(fam, &h3_lambdas, &h3_alphas)?);
    checks.push(check_h4(fam, grids)?);
    checks.push(check_h4_weighted(fam, grids)?);

    match name.as_str() {
        "tikhonov" => {
            let ii = IiConstants {
                lambda1: Some(cap),
                gamma1: Some(0.5),
                c1: Some(1.5),
                gamma2: Some(0.4),
            };
            checks.extend(check_ii(fam, &ii, grids, IiLabel::Classical)?);
            checks.push(check_iv(fam, 1.0, 1.0, Some(0.5), grids)?);
            let (up, _) = check_m3(fam, &IndexFunction::Power(1.0), None, 1.0, None, grids)?;
            checks.push(up);
            checks.push(check_m4(fam, grids)?);
            checks.push(check_m5(fam, Some(0.5), grids)?);
        }
        "example2" => {
            let k = fam.params()["k"];
            let gamma2 = example2_gamma2(k);
            let ii = IiConstants {
                lambda1: Some(cap.min(1.0)),
                gamma1: Some((-1.0_f64).exp()),
                c1: Some(2.0),
                gamma2: Some(gamma2),
            };
            checks.extend(check_ii(fam, &ii, grids, IiLabel::Classical)?);
            checks.push(check_iv(fam, k, 3.0, Some(1.0), grids)?);
            checks.push(check_m5(fam, Some(gamma2 * 2.0_f64.sqrt()), grids)?);
        }
        "example3" => {
            let eps = fam.params()["eps"];
            let gamma2 = example3_gamma2(eps);
            let ii = IiConstants {
                lambda1: Some(cap.min(0.6)),
                gamma1: Some(1.0 / (1.0 + 1.0 / (3.0 * std::f64::consts::E))),
                c1: Some(2.0),
                gamma2: Some(gamma2),
            };
            checks.extend(check_ii(fam, &ii, grids, IiLabel::Maximal)?);
            let (up, lo) = check_m3(fam, &IndexFunction::InverseLog, Some(1.0), 1.0, None, grids)?;
            checks.push(up);
            checks.push(lo);
            checks.push(check_m4(fam, grids)?);
            checks.push(check_m5(fam, Some(gamma2 * 2.0_f64.sqrt()), grids)?);
            checks.push(check_local_upper_type(&IndexFunction::InverseLog, 1.0, 1.0, cap, 97)?);
        }
        "example4" => {
            checks.extend(check_ii(fam, &IiConstants::default(), grids, IiLabel::Maximal)?);
            let (up, lo) = check_m3(fam, &IndexFunction::LogDamped, None, 1.0, None, grids)?;
            checks.push(up);
            checks.push(lo);
            checks.push(check_m4(fam, grids)?);
            checks.push(check_m5(fam, None, grids)?);
        }
        _ => {
            checks.extend(check_ii(fam, &IiConstants::default(), grids, IiLabel::Classical)?);
            checks.push(check_iv(fam, 1.0, 1.0, None, grids)?);
        }
    }
    if let Some(op) = op {
        checks.push(check_m1(op, None));
        checks.push(check_invertibility(fam, op, &grids.alphas)?);
    }
    checks.sort_by_key(|c| c.id);
    Ok(HypothesisReport {
        family: name,
        params: fam.params(),
        checks,
        grids: grids.describe(),
    })
}

/// `(1 − e^{−√2})/2 − √2·3^{−3/2−k}`.
pub fn example2_gamma2(k: f64) -> f64 {
    (1.0 - (-(2.0_f64.sqrt())).exp()) / 2.0 - 2.0_f64.sqrt() * 3.0_f64.powf(-1.5 - k)
}

/// `s(0.3) = (1 + ln 0.3)/(2 ln 0.3 − 2^{−ε})`.
pub fn example3_gamma2(eps: f64) -> f64 {
    let l = 0.3_f64.ln();
    (1.0 + l) / (2.0 * l - 2.0_f64.powf(-eps))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grids(cap: f64, amax: f64) -> Grids {
        Grids::with_resolution(cap, amax, 128, 32)
    }

    #[test]
    fn frozen_gamma2_values() {
        // 40-digit evaluations
        assert!((example2_gamma2(1.0) - 0.287_719_790_457_590_00).abs() < 1e-15);
        assert!((example2_gamma2(2.0) - 0.348_201_018_674_458_60).abs() < 1e-15);
        assert!((example3_gamma2(0.5) - 0.065_479_734_784_337_364).abs() < 1e-15);
        assert!((1.0 / (1.0 + 1.0 / (3.0 * std::f64::consts::E)) - 0.890_768_227_426_964_07).abs() < 1e-15);
    }

    #[test]
    fn h2_examples() {
        let g = small_grids(1.0, 1.0);
        let t = check_h2(&FilterFamily::tikhonov(), &g, Some(1.0)).unwrap();
        assert!(t.passed);
        assert!((t.witnessed_constant.unwrap() - 1.0).abs() < 1e-3);

        let bad = FilterFamily::custom_filter("inv-sq", 1.0, |_, l| if l == 0.0 { 0.0 } else { 1.0 / (l * l) });
        let r = check_h2(&bad, &g, None).unwrap();
        assert!(!r.passed);
        let (_, l) = r.worst_point.unwrap();
        assert_eq!(l, g.lambdas[1]);
    }

    #[test]
    fn h3_examples() {
        let alphas: Vec<f64> = log_space(0.5, 1e-8, 40);
        let lambdas = log_space(1e-6, 1.0, 64);
        assert!(check_h3(&FilterFamily::tikhonov(), &lambdas, &alphas).unwrap().passed);
        let ex4: Vec<f64> = log_space(0.09, 1e-8, 40);
        assert!(check_h3(&FilterFamily::example4(), &lambdas, &ex4).unwrap().passed);
        let constant = FilterFamily::custom_filter("one", 1.0, |_, _| 1.0);
        let r = check_h3(&constant, &[0.5], &alphas).unwrap();
        assert!(!r.passed);
        assert_eq!(r.worst_point.unwrap().1, 0.5);
        assert!(check_h3(&constant, &[0.5], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn h4_both_forms() {
        let g = small_grids(1.0, 1.0);
        assert!(!check_h4(&FilterFamily::tikhonov(), &g).unwrap().passed);
        assert!(!check_h4(&FilterFamily::tsvd(), &g).unwrap().passed);
        let w = check_h4_weighted(&FilterFamily::tikhonov(), &g).unwrap();
        assert!(w.passed && (w.witnessed_constant.unwrap() - 0.5).abs() < 1e-12);
        let e2 = FilterFamily::example2(1.0, 1.0).unwrap();
        let w = check_h4_weighted(&e2, &Grids::with_resolution(1.0, e2.alpha_max(), 128, 32)).unwrap();
        assert!(w.passed && w.witnessed_constant.unwrap() <= 1.0 + 1e-12);
    }

    #[test]
    fn tikhonov_ii_constants() {
        let g = small_grids(1.0, 1.0);
        let ii = IiConstants {
            lambda1: Some(1.0),
            gamma1: Some(0.5),
            c1: Some(1.5),
            gamma2: Some(0.4),
        };
        let res = check_ii(&FilterFamily::tikhonov(), &ii, &g, IiLabel::Classical).unwrap();
        for r in &res {
            assert!(r.passed, "{r:?}");
            assert!(r.slack >= 0.0);
        }
        let bad = IiConstants { c1: Some(1.0), ..ii };
        assert!(check_ii(&FilterFamily::tikhonov(), &bad, &g, IiLabel::Classical).is_err());
        let bad = IiConstants { gamma1: Some(0.0), ..ii };
        assert!(check_ii(&FilterFamily::tikhonov(), &bad, &g, IiLabel::Classical).is_err());
    }

    #[test]
    fn iv_examples() {
        let g = small_grids(1.0, 1.0);
        assert!(check_iv(&FilterFamily::tikhonov(), 1.0, 1.0, Some(0.5), &g).unwrap().passed);
        let e2 = FilterFamily::example2(2.0, 1.0).unwrap();
        let g2 = small_grids(1.0, e2.alpha_max());
        assert!(check_iv(&e2, 2.0, 3.0, Some(1.0), &g2).unwrap().passed);
        let t = check_iv(&FilterFamily::tsvd(), 1.0, 1.0, None, &g).unwrap();
        assert!(!t.passed);
        let (a, l) = t.worst_point.unwrap();
        assert_eq!(a, l);
    }

    #[test]
    fn m3_tikhonov_upper() {
        let g = small_grids(1.0, 1.0);
        let (up, _) = check_m3(&FilterFamily::tikhonov(), &IndexFunction::Power(1.0), None, 1.0, None, &g).unwrap();
        assert!(up.passed);
        assert!(up.witnessed_constant.unwrap() <= 1.0);
        assert!(up.witnessed_constant.unwrap() > 0.99);
    }

    #[test]
    fn m4_examples() {
        let g = small_grids(1.0, 1.0);
        assert!(check_m4(&FilterFamily::tikhonov(), &g).unwrap().passed);
        let wavy = FilterFamily::custom_residual("sin", 1.0, |_, l| (10.0 * l).sin());
        assert!(!check_m4(&wavy, &g).unwrap().passed);
    }

    #[test]
    fn m5_examples() {
        let g = small_grids(1.0, 1.0);
        let t = check_m5(&FilterFamily::tikhonov(), Some(0.5), &g).unwrap();
        assert!(t.passed);
        assert!((t.witnessed_constant.unwrap() - 0.5).abs() < 1e-12);
        let e2 = FilterFamily::example2(1.0, 1.0).unwrap();
        let g2 = small_grids(1.0, e2.alpha_max());
        assert!(check_m5(&e2, Some(example2_gamma2(1.0) * 2.0_f64.sqrt()), &g2).unwrap().passed);
        let zero = FilterFamily::custom_filter("zero", 1.0, |_, _| 0.0);
        assert!(!check_m5(&zero, None, &g).unwrap().passed);
    }

    #[test]
    fn local_upper_type_examples() {
        assert!(check_local_upper_type(&IndexFunction::InverseLog, 1.0, 1.0, 0.3, 65).unwrap().passed);
        assert!(check_local_upper_type(&IndexFunction::Power(1.7), 1.7, 1.0, 1.0, 65).unwrap().passed);
        assert!(!check_local_upper_type(&IndexFunction::ExpInverse, 1.0, 1.0, 1.0, 65).unwrap().passed);
    }

    #[test]
    fn invertibility_examples() {
        let op = SpectralOperator::power(50, 2.0).unwrap();
        let alphas = log_space(1e-8, 0.5, 16);
        let t = check_invertibility(&FilterFamily::tikhonov(), &op, &alphas).unwrap();
        assert!(t.passed);
        assert!((t.witnessed_constant.unwrap() - 1e-8 / (1.0 + 1e-8)).abs() < 1e-20);
        assert!(!check_invertibility(&FilterFamily::tsvd(), &op, &alphas).unwrap().passed);
        let e2 = FilterFamily::example2(1.0, 1.0).unwrap();
        assert!(check_invertibility(&e2, &op, &log_space(1e-8, 0.3, 16)).unwrap().passed);
    }

    #[test]
    fn m1_ratio() {
        let op = SpectralOperator::power(400, 2.0).unwrap();
        let r = check_m1(&op, Some(4.0));
        assert!(r.passed);
        assert!(!check_m1(&op, Some(3.9)).passed);
    }

    #[test]
    fn failed_checks_carry_points() {
        let rep = constants_report(&FilterFamily::tsvd(), 1.0, None).unwrap();
        for c in &rep.checks {
            if !c.passed {
                assert!(c.worst_point.is_some(), "{c:?}");
            }
        }
        assert!(!rep.get(CheckId::Iv).unwrap().passed);
    }

    #[test]
    fn check_ids_serialize_to_report_names() {
        for id in [CheckId::IiA, CheckId::M2e, CheckId::Lut, CheckId::M3upper, CheckId::Iv, CheckId::H4w] {
            assert_eq!(serde_json::to_string(&id).unwrap(), format!("\"{}\"", id.as_str()));
        }
    }
}
