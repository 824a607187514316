//! Spectral filter families `{g_α}` and their residuals `r_α(λ) = 1 − λ g_α(λ)`.
//!
//! Built-ins: Tikhonov, the three saturating constructions (`example2` with
//! parameter `k`, `example3` with parameter `eps`, `example4`), and truncated
//! SVD as a control whose residual vanishes above the cutoff.
//!
//! Each built-in has closed forms for both `g` and `r`. The pair returned by
//! [`FilterFamily::eval`] takes `g` from its closed form while `λg ≤ 1/2` and
//! derives `r = 1 − λg`; past that point `r` is small, so the closed form of
//! `r` is kept and `g = (1 − r)/λ`. Either way `r − (1 − λg)` stays within a
//! few ulps, and tiny residuals keep their relative accuracy.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::log_space;
use crate::spectral::IndexFunction;

type Rule = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Tikhonov,
    Example2 { k: f64 },
    Example3 { eps: f64 },
    Example4,
    Tsvd,
    CustomFilter { name: String, g: Rule },
    CustomResidual { name: String, r: Rule },
}

/// A parametrized filter family on `α ∈ (0, alpha_max)`.
#[derive(Clone)]
pub struct FilterFamily {
    kind: Kind,
    alpha_max: f64,
}

impl fmt::Debug for FilterFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FilterFamily")
            .field("name", &self.name())
            .field("params", &self.params())
            .field("alpha_max", &self.alpha_max)
            .finish()
    }
}

impl FilterFamily {
    /// `g_α(λ) = 1/(λ + α)`, `α₀ = 1`.
    pub fn tikhonov() -> Self {
        FilterFamily {
            kind: Kind::Tikhonov,
            alpha_max: 1.0,
        }
    }

    /// `k ≥ 1`; `α₀ = min{1/3, ‖T‖²/3}`.
    pub fn example2(k: f64, norm_sq: f64) -> Result<Self> {
        if !(k >= 1.0 && k.is_finite()) {
            return Err(Error::invalid(format!("example2 requires k >= 1, got {k}")));
        }
        if !(norm_sq > 0.0 && norm_sq.is_finite()) {
            return Err(Error::invalid(format!("operator norm must be positive, got {norm_sq}")));
        }
        Ok(FilterFamily {
            kind: Kind::Example2 { k },
            alpha_max: (1.0_f64 / 3.0).min(norm_sq / 3.0),
        })
    }

    /// `ε ∈ (0, 1)`; `α₀ = 0.3`.
    pub fn example3(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::invalid(format!("example3 requires eps in (0,1), got {eps}")));
        }
        Ok(FilterFamily {
            kind: Kind::Example3 { eps },
            alpha_max: 0.3,
        })
    }

    /// `α₀ = 0.1`.
    pub fn example4() -> Self {
        FilterFamily {
            kind: Kind::Example4,
            alpha_max: 0.1,
        }
    }

    /// Truncated SVD: `g = 1/λ` for `λ ≥ α`, else 0. `α₀ = 1`.
    pub fn tsvd() -> Self {
        FilterFamily {
            kind: Kind::Tsvd,
            alpha_max: 1.0,
        }
    }

    /// Family given by its filter `g(α, λ)`; `r = 1 − λ g`.
    pub fn custom_filter(
        name: impl Into<String>,
        alpha_max: f64,
        g: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        FilterFamily {
            kind: Kind::CustomFilter {
                name: name.into(),
                g: Arc::new(g),
            },
            alpha_max,
        }
    }

    /// Family given by its residual `r(α, λ)` for `λ > 0`; `g = (1 − r)/λ`,
    /// and at `λ = 0` the pair `(g, r) = (0, 1)` is used.
    pub fn custom_residual(
        name: impl Into<String>,
        alpha_max: f64,
        r: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        FilterFamily {
            kind: Kind::CustomResidual {
                name: name.into(),
                r: Arc::new(r),
            },
            alpha_max,
        }
    }

    pub fn with_alpha_max(mut self, alpha_max: f64) -> Result<Self> {
        if !(alpha_max > 0.0 && alpha_max.is_finite()) {
            return Err(Error::invalid(format!("alpha_max must be positive, got {alpha_max}")));
        }
        if matches!(self.kind, Kind::Example3 { .. }) && alpha_max >= (-1.0_f64).exp() {
            return Err(Error::invalid(format!(
                "example3 requires alpha_max < e^-1, got {alpha_max}"
            )));
        }
        if matches!(self.kind, Kind::Example4) && alpha_max >= 1.0 {
            return Err(Error::invalid(format!("example4 requires alpha_max < 1, got {alpha_max}")));
        }
        self.alpha_max = alpha_max;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        match &self.kind {
            Kind::Tikhonov => "tikhonov",
            Kind::Example2 { .. } => "example2",
            Kind::Example3 { .. } => "example3",
            Kind::Example4 => "example4",
            Kind::Tsvd => "tsvd",
            Kind::CustomFilter { name, .. } | Kind::CustomResidual { name, .. } => name,
        }
    }

    pub fn params(&self) -> BTreeMap<String, f64> {
        let mut p = BTreeMap::new();
        match self.kind {
            Kind::Example2 { k } => {
                p.insert("k".to_string(), k);
            }
            Kind::Example3 { eps } => {
                p.insert("eps".to_string(), eps);
            }
            _ => {}
        }
        p
    }

    pub fn alpha_max(&self) -> f64 {
        self.alpha_max
    }

    /// Classical qualification order the family is built to have, if finite and positive.
    pub fn claimed_order(&self) -> Option<f64> {
        match self.kind {
            Kind::Tikhonov => Some(1.0),
            Kind::Example2 { k } => Some(k),
            _ => None,
        }
    }

    /// Maximal qualification the family is built to have.
    pub fn claimed_rho(&self) -> Option<IndexFunction> {
        match self.kind {
            Kind::Tikhonov => Some(IndexFunction::Power(1.0)),
            Kind::Example2 { k } => Some(IndexFunction::Power(k)),
            Kind::Example3 { .. } => Some(IndexFunction::InverseLog),
            Kind::Example4 => Some(IndexFunction::LogDamped),
            _ => None,
        }
    }

    /// Largest `‖T‖²` on which the claimed index function is finite and increasing.
    pub fn natural_lambda_cap(&self) -> f64 {
        match self.kind {
            Kind::Example3 { .. } | Kind::Example4 => 0.3,
            _ => 1.0,
        }
    }

    pub fn check_alpha(&self, alpha: f64) -> Result<()> {
        if alpha > 0.0 && alpha < self.alpha_max {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                what: "alpha",
                value: alpha,
                lo: 0.0,
                hi: self.alpha_max,
            })
        }
    }

    pub fn g_eval(&self, alpha: f64, lambda: f64) -> Result<f64> {
        self.eval(alpha, lambda).map(|(g, _)| g)
    }

    pub fn r_eval(&self, alpha: f64, lambda: f64) -> Result<f64> {
        self.eval(alpha, lambda).map(|(_, r)| r)
    }

    /// `(g_α(λ), r_α(λ))` for `0 < α < α₀` and `λ ≥ 0`.
    pub fn eval(&self, alpha: f64, lambda: f64) -> Result<(f64, f64)> {
        self.check_alpha(alpha)?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Evaluation {
                lambda,
                message: "spectral point must be a finite number >= 0".into(),
            });
        }
        let (g, r) = self.eval_unchecked(alpha, lambda);
        if g.is_finite() && r.is_finite() {
            Ok((g, r))
        } else {
            Err(Error::Evaluation {
                lambda,
                message: format!("{} at alpha = {alpha:e} gives g = {g}, r = {r}", self.name()),
            })
        }
    }

    fn eval_unchecked(&self, alpha: f64, lambda: f64) -> (f64, f64) {
        match &self.kind {
            Kind::CustomFilter { g, .. } => {
                let gv = g(alpha, lambda);
                (gv, 1.0 - lambda * gv)
            }
            Kind::CustomResidual { r, .. } => {
                if lambda == 0.0 {
                    (0.0, 1.0)
                } else {
                    let rv = r(alpha, lambda);
                    ((1.0 - rv) / lambda, rv)
                }
            }
            _ => {
                if lambda == 0.0 {
                    return (self.g_at_zero(alpha), 1.0);
                }
                let g = self.closed_g(alpha, lambda);
                if lambda * g <= 0.5 {
                    (g, 1.0 - lambda * g)
                } else {
                    let r = self.closed_r(alpha, lambda);
                    ((1.0 - r) / lambda, r)
                }
            }
        }
    }

    fn g_at_zero(&self, alpha: f64) -> f64 {
        match self.kind {
            Kind::Tikhonov => 1.0 / alpha,
            Kind::Example2 { .. } => 1.0 / alpha.sqrt(),
            _ => 0.0,
        }
    }

    fn closed_g(&self, a: f64, l: f64) -> f64 {
        match self.kind {
            Kind::Tikhonov => 1.0 / (l + a),
            Kind::Example2 { k } => {
                let poly = a.powf(k) * l.sqrt();
                if l < a {
                    -(-l / a.sqrt()).exp_m1() / l - poly
                } else if l < 3.0 * a {
                    -(-(l / a).sqrt()).exp_m1() / l - poly
                } else {
                    (-(-(l / a).sqrt()).exp_m1() - (a / l).powf(k)) / l - poly
                }
            }
            Kind::Example3 { eps } => {
                let ln_a = a.ln();
                let h = if l < a { a } else { a.powf(1.0 + eps) };
                (1.0 + ln_a) / (l * ln_a - l.powf(-eps) * h)
            }
            Kind::Example4 => {
                if l < a {
                    0.0
                } else {
                    (l / a.ln()).exp() / l
                }
            }
            Kind::Tsvd => {
                if l < a {
                    0.0
                } else {
                    1.0 / l
                }
            }
            Kind::CustomFilter { .. } | Kind::CustomResidual { .. } => unreachable!("custom rules handled in eval"),
        }
    }

    fn closed_r(&self, a: f64, l: f64) -> f64 {
        match self.kind {
            Kind::Tikhonov => a / (a + l),
            Kind::Example2 { k } => {
                let s = if l < a {
                    (-l / a.sqrt()).exp()
                } else if l < 3.0 * a {
                    (-(l / a).sqrt()).exp()
                } else {
                    (-(l / a).sqrt()).exp() + (a / l).powf(k)
                };
                a.powf(k) * l.powf(1.5) + s
            }
            Kind::Example3 { eps } => {
                let h = if l < a { a } else { a.powf(1.0 + eps) };
                let le = l.powf(1.0 + eps);
                (h + le) / (h - le * a.ln())
            }
            Kind::Example4 => {
                if l < a {
                    1.0
                } else {
                    -(l / a.ln()).exp_m1()
                }
            }
            Kind::Tsvd => {
                if l < a {
                    1.0
                } else {
                    0.0
                }
            }
            Kind::CustomFilter { .. } | Kind::CustomResidual { .. } => unreachable!("custom rules handled in eval"),
        }
    }

    /// Spectral points where `|g_α|` is known to peak (jumps and endpoints).
    pub fn analytic_maximizers(&self, alpha: f64) -> Vec<f64> {
        match self.kind {
            Kind::Tikhonov => vec![0.0],
            Kind::Example2 { .. } => vec![0.0, alpha],
            Kind::Example3 { .. } => vec![alpha],
            Kind::Example4 | Kind::Tsvd => vec![alpha],
            _ => vec![0.0],
        }
    }

    /// `G_α = sup_λ |g_α(λ)|` over `{0} ∪` a log grid of `grid` points on
    /// `[1e-12·cap, cap]` plus the analytic maximizers inside `[0, cap]`.
    pub fn sup_g(&self, alpha: f64, lambda_cap: f64, grid: usize) -> Result<f64> {
        if grid < 64 {
            return Err(Error::invalid(format!("sup_g needs at least 64 grid points, got {grid}")));
        }
        if !(lambda_cap > 0.0) {
            return Err(Error::invalid("lambda cap must be positive"));
        }
        let mut best = self.g_eval(alpha, 0.0)?.abs();
        for l in log_space(1e-12 * lambda_cap, lambda_cap, grid)
            .into_iter()
            .chain(self.analytic_maximizers(alpha).into_iter().filter(|&l| l <= lambda_cap))
        {
            best = best.max(self.g_eval(alpha, l)?.abs());
        }
        Ok(best)
    }
}

/// Family description in experiment configs and on the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_max: Option<f64>,
}

/// Parameter schema of a built-in family, for `families` listings.
#[derive(Debug, Clone, Serialize)]
pub struct FamilySchema {
    pub name: &'static str,
    pub params: Vec<ParamSchema>,
    pub default_alpha_max: &'static str,
    pub description: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamSchema {
    pub name: &'static str,
    pub constraint: &'static str,
    pub default: Option<f64>,
}

pub fn builtin_schemas() -> Vec<FamilySchema> {
    vec![
        FamilySchema {
            name: "tikhonov",
            params: vec![],
            default_alpha_max: "1",
            description: "g(a,l) = 1/(l+a)",
        },
        FamilySchema {
            name: "example2",
            params: vec![ParamSchema {
                name: "k",
                constraint: "k >= 1",
                default: Some(1.0),
            }],
            default_alpha_max: "min(1/3, |T|^2/3)",
            description: "g = 1/l - a^k sqrt(l) - h(a,l), classical qualification of order k",
        },
        FamilySchema {
            name: "example3",
            params: vec![ParamSchema {
                name: "eps",
                constraint: "0 < eps < 1",
                default: Some(0.5),
            }],
            default_alpha_max: "0.3 (must stay below 1/e)",
            description: "g = (1+ln a)/(l ln a - l^-eps h(a,l)), maximal qualification -1/ln a",
        },
        FamilySchema {
            name: "example4",
            params: vec![],
            default_alpha_max: "0.1",
            description: "g = exp(l/ln a)/l for l >= a, else 0",
        },
        FamilySchema {
            name: "tsvd",
            params: vec![],
            default_alpha_max: "1",
            description: "g = 1/l for l >= a, else 0",
        },
    ]
}

impl FamilySpec {
    pub fn named(name: &str) -> Self {
        FamilySpec {
            name: name.to_string(),
            params: BTreeMap::new(),
            alpha_max: None,
        }
    }

    /// Builds the family for an operator with largest eigenvalue `norm_sq`.
    pub fn build(&self, norm_sq: f64) -> Result<FilterFamily> {
        let allowed: &[&str] = match self.name.as_str() {
            "tikhonov" | "example4" | "tsvd" => &[],
            "example2" => &["k"],
            "example3" => &["eps"],
            other => {
                return Err(Error::invalid(format!(
                    "unknown family '{other}' (expected tikhonov, example2, example3, example4, tsvd)"
                )))
            }
        };
        if let Some(bad) = self.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::invalid(format!(
                "family '{}' has no parameter '{bad}'",
                self.name
            )));
        }
        let fam = match self.name.as_str() {
            "tikhonov" => FilterFamily::tikhonov(),
            "example2" => FilterFamily::example2(*self.params.get("k").unwrap_or(&1.0), norm_sq)?,
            "example3" => FilterFamily::example3(*self.params.get("eps").unwrap_or(&0.5))?,
            "example4" => FilterFamily::example4(),
            _ => FilterFamily::tsvd(),
        };
        match self.alpha_max {
            Some(a) => fam.with_alpha_max(a),
            None => Ok(fam),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::log_space;

    fn builtins() -> Vec<FilterFamily> {
        vec![
            FilterFamily::tikhonov(),
            FilterFamily::example2(1.0, 1.0).unwrap(),
            FilterFamily::example2(2.5, 1.0).unwrap(),
            FilterFamily::example3(0.5).unwrap(),
            FilterFamily::example3(0.1).unwrap(),
            FilterFamily::example4(),
            FilterFamily::tsvd(),
        ]
    }

    #[test]
    fn tikhonov_values() {
        let t = FilterFamily::tikhonov();
        assert!((t.g_eval(0.1, 0.3).unwrap() - 2.5).abs() < 1e-15);
        assert!((t.r_eval(0.1, 0.3).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(t.g_eval(0.1, 0.0).unwrap(), 10.0);
    }

    #[test]
    fn example2_at_zero_is_inverse_sqrt_alpha() {
        let f = FilterFamily::example2(2.0, 1.0).unwrap();
        for a in [0.3, 1e-2, 1e-6] {
            assert!((f.g_eval(a, 0.0).unwrap() - 1.0 / a.sqrt()).abs() < 1e-12 / a.sqrt());
            // continuity of the limit from the right
            let near = f.g_eval(a, 1e-14 * a).unwrap();
            assert!((near - 1.0 / a.sqrt()).abs() < 1e-6 / a.sqrt());
        }
    }

    #[test]
    fn example2_residual_closed_form() {
        // r = α^k λ^{3/2} + s_α^k(λ) in each branch
        let k = 2.0;
        let f = FilterFamily::example2(k, 1.0).unwrap();
        let a: f64 = 0.01;
        for l in [0.004, 0.02, 0.5] {
            let s = if l < a {
                (-l / a.sqrt()).exp()
            } else if l < 3.0 * a {
                (-(l / a).sqrt()).exp()
            } else {
                (-(l / a).sqrt()).exp() + (a / l).powf(k)
            };
            let expect = a.powf(k) * l.powf(1.5) + s;
            assert!((f.r_eval(a, l).unwrap() - expect).abs() <= 1e-14 * expect);
        }
    }

    #[test]
    fn example4_branches() {
        let f = FilterFamily::example4();
        assert_eq!(f.g_eval(0.05, 0.01).unwrap(), 0.0);
        assert_eq!(f.r_eval(0.05, 0.01).unwrap(), 1.0);
        let a: f64 = 0.05;
        let l = 0.2;
        let r = f.r_eval(a, l).unwrap();
        assert!((r - (1.0 - (l / a.ln()).exp())).abs() < 1e-15);
        assert!(f.with_alpha_max(0.3).unwrap().g_eval(0.2, 0.1).unwrap() == 0.0);
    }

    #[test]
    fn example3_limit_at_zero_and_residual() {
        let f = FilterFamily::example3(0.5).unwrap();
        assert_eq!(f.g_eval(0.1, 0.0).unwrap(), 0.0);
        let (a, l, eps) = (0.1_f64, 0.2_f64, 0.5_f64);
        let h = a.powf(1.0 + eps);
        let le = l.powf(1.0 + eps);
        let expect = (h + le) / (h - le * a.ln());
        assert!((f.r_eval(a, l).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn residual_at_zero_is_one() {
        for f in builtins() {
            assert_eq!(f.r_eval(f.alpha_max() / 2.0, 0.0).unwrap(), 1.0, "{}", f.name());
        }
    }

    #[test]
    fn residual_identity_on_grids() {
        for f in builtins() {
            let alphas = log_space(1e-8, f.alpha_max() * (1.0 - 1e-9), 64);
            let mut lambdas = vec![0.0];
            lambdas.extend(log_space(1e-12, 1.0, 256));
            for &a in &alphas {
                for &l in &lambdas {
                    let (g, r) = f.eval(a, l).unwrap();
                    let lg = l * g;
                    assert!(
                        (r - (1.0 - lg)).abs() <= 1e-15 * lg.abs().max(1.0),
                        "{} a={a:e} l={l:e}: r={r:e} 1-lg={:e}",
                        f.name(),
                        1.0 - lg
                    );
                }
            }
        }
    }

    #[test]
    fn h2_witness_bounds() {
        let alphas_for = |f: &FilterFamily| log_space(1e-8, f.alpha_max() * (1.0 - 1e-9), 64);
        let mut lambdas = vec![0.0];
        lambdas.extend(log_space(1e-12, 1.0, 256));
        let max_lg = |f: &FilterFamily| {
            alphas_for(f)
                .iter()
                .flat_map(|&a| lambdas.iter().map(move |&l| (a, l)))
                .map(|(a, l)| (l * f.g_eval(a, l).unwrap()).abs())
                .fold(0.0_f64, f64::max)
        };
        assert!(max_lg(&FilterFamily::tikhonov()) <= 1.0 + 1e-12);
        assert!(max_lg(&FilterFamily::example3(0.5).unwrap()) <= 1.0 + 1e-12);
        let k = 2.0;
        let e2 = FilterFamily::example2(k, 1.0).unwrap();
        assert!(max_lg(&e2) <= 1.0 + e2.alpha_max().powf(k) + 1e-9);
    }

    #[test]
    fn weighted_h4_witness_bounded() {
        // √α · sup_λ √λ |g_α(λ)|
        for f in [FilterFamily::tikhonov(), FilterFamily::example2(1.0, 1.0).unwrap()] {
            let mut lambdas = log_space(1e-12, 1.0, 256);
            for a in log_space(1e-8, f.alpha_max() * (1.0 - 1e-9), 64) {
                lambdas.extend([a, 2.0 * a, 3.0 * a]);
                let w = lambdas
                    .iter()
                    .map(|&l| l.sqrt() * f.g_eval(a, l).unwrap().abs())
                    .fold(0.0_f64, f64::max)
                    * a.sqrt();
                assert!(w <= 1.0 + 1e-12, "{} a={a:e} w={w}", f.name());
            }
        }
    }

    #[test]
    fn sup_g_values() {
        let t = FilterFamily::tikhonov();
        assert!((t.sup_g(0.01, 1.0, 64).unwrap() - 100.0).abs() < 1e-12);
        let s = FilterFamily::tsvd();
        assert!((s.sup_g(0.01, 1.0, 64).unwrap() - 100.0).abs() < 1e-12);
        // the jump at λ = α dominates 1/√α for Example 2
        let e2 = FilterFamily::example2(1.0, 1.0).unwrap();
        let a: f64 = 1e-4;
        let jump = (1.0 - (-1.0_f64).exp()) / a - a.powf(1.5);
        let g = e2.sup_g(a, 1.0, 512).unwrap();
        assert!((g - jump.max(1.0 / a.sqrt())).abs() < 1e-9 * g);
        assert!(t.sup_g(0.01, 1.0, 10).is_err());
    }

    #[test]
    fn construction_constraints() {
        assert!(FilterFamily::example2(0.5, 1.0).is_err());
        assert!(FilterFamily::example3(1.0).is_err());
        assert!(FilterFamily::example3(0.0).is_err());
        assert!(FilterFamily::example3(0.5).unwrap().with_alpha_max(0.4).is_err());
        let e2 = FilterFamily::example2(1.0, 0.6).unwrap();
        assert!((e2.alpha_max() - 0.2).abs() < 1e-15);
        assert!(FilterFamily::tikhonov().g_eval(0.0, 0.5).is_err());
        assert!(FilterFamily::tikhonov().g_eval(1.0, 0.5).is_err());
    }

    #[test]
    fn family_spec_build() {
        let spec: FamilySpec = serde_json::from_str(r#"{"name":"example2","params":{"k":2}}"#).unwrap();
        let f = spec.build(1.0).unwrap();
        assert_eq!(f.params().get("k"), Some(&2.0));
        let bad: FamilySpec = serde_json::from_str(r#"{"name":"tikhonov","params":{"k":2}}"#).unwrap();
        assert!(bad.build(1.0).is_err());
        assert!(FamilySpec::named("landweber").build(1.0).is_err());
        assert_eq!(builtin_schemas().len(), 5);
        for s in builtin_schemas() {
            assert!(FamilySpec::named(s.name).build(1.0).is_ok());
        }
    }
}
