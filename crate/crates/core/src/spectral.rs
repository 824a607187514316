//! Finite diagonal models of `T*T` and the spectral calculus on them.
//!
//! A self-adjoint operator with pure point spectrum is, in its eigenbasis, a
//! multiplication by its eigenvalues. Every quantity built from `f(T*T)`
//! therefore reduces to componentwise products, and `T` itself acts through
//! the singular values `√λ_i`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::FilterFamily;

/// Positive eigenvalues of `T*T`, strictly descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralOperator {
    eigenvalues: Vec<f64>,
    ratio_bound: f64,
}

impl SpectralOperator {
    pub fn from_eigenvalues(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::invalid("spectrum must contain at least one eigenvalue"));
        }
        for (i, &l) in eigenvalues.iter().enumerate() {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::invalid(format!(
                    "eigenvalue #{i} = {l:e} is not a positive finite number"
                )));
            }
        }
        if let Some(i) = eigenvalues.windows(2).position(|w| w[1] >= w[0]) {
            return Err(Error::invalid(format!(
                "eigenvalues must be strictly descending (#{} = {:e}, #{} = {:e})",
                i,
                eigenvalues[i],
                i + 1,
                eigenvalues[i + 1]
            )));
        }
        let ratio_bound = eigenvalues
            .windows(2)
            .map(|w| w[0] / w[1])
            .fold(1.0_f64, f64::max);
        Ok(SpectralOperator {
            eigenvalues,
            ratio_bound,
        })
    }

    /// `λ_i = i^{-s}`, `i = 1..n`.
    pub fn power(n: usize, s: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("power spectrum needs n >= 2, got {n}")));
        }
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::invalid(format!("power spectrum needs s > 0, got {s}")));
        }
        Self::from_eigenvalues((1..=n).map(|i| (i as f64).powf(-s)).collect())
    }

    /// `λ_i = q^{i-1}`, `i = 1..n`.
    pub fn geometric(n: usize, q: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::invalid(format!("geometric ratio must lie in (0,1), got {q}")));
        }
        if n == 0 {
            return Err(Error::invalid("geometric spectrum needs n >= 1"));
        }
        let mut values = Vec::with_capacity(n);
        let mut v = 1.0;
        for _ in 0..n {
            values.push(v);
            v *= q;
        }
        let mut op = Self::from_eigenvalues(values)?;
        if n >= 2 {
            op.ratio_bound = 1.0 / q;
        }
        Ok(op)
    }

    /// Multiplies every eigenvalue by `factor > 0`; ratios are unchanged.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::invalid(format!("scale factor must be positive, got {factor}")));
        }
        Ok(SpectralOperator {
            eigenvalues: self.eigenvalues.iter().map(|l| l * factor).collect(),
            ratio_bound: self.ratio_bound,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `‖T‖²`, the largest eigenvalue.
    pub fn norm_sq(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn smallest(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty spectrum")
    }

    /// Largest ratio of consecutive eigenvalues (`c` of the M1 condition).
    pub fn ratio_bound(&self) -> f64 {
        self.ratio_bound
    }

    /// Orders of magnitude spanned by the spectrum.
    pub fn decades(&self) -> f64 {
        (self.norm_sq() / self.smallest()).log10()
    }
}

/// Coordinates of an element in the eigenbasis of the paired operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralElement {
    pub coeffs: Vec<f64>,
}

impl SpectralElement {
    pub fn new(coeffs: Vec<f64>) -> Self {
        SpectralElement { coeffs }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.coeffs)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    fn check_paired(&self, op: &SpectralOperator) -> Result<()> {
        if self.len() != op.dim() {
            return Err(Error::invalid(format!(
                "element has {} coefficients but the operator has dimension {}",
                self.len(),
                op.dim()
            )));
        }
        Ok(())
    }
}

/// Euclidean norm with rescaling, so tiny or huge coefficients neither underflow nor overflow.
pub fn l2_norm(v: &[f64]) -> f64 {
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * v.iter().map(|x| (x / scale).powi(2)).sum::<f64>().sqrt()
}

/// Componentwise `f(λ_i)·x_i`.
pub fn apply_spectral_function(
    op: &SpectralOperator,
    f: impl Fn(f64) -> f64,
    x: &SpectralElement,
) -> Result<SpectralElement> {
    x.check_paired(op)?;
    let coeffs = op
        .eigenvalues
        .iter()
        .zip(&x.coeffs)
        .map(|(&l, &c)| {
            let fl = f(l);
            if fl.is_finite() {
                Ok(fl * c)
            } else {
                Err(Error::Evaluation {
                    lambda: l,
                    message: format!("spectral function is not finite ({fl})"),
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectralElement { coeffs })
}

/// `x = (T*T)^μ ξ`.
pub fn source_element_power(op: &SpectralOperator, mu: f64, xi: &SpectralElement) -> Result<SpectralElement> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::invalid(format!("smoothness exponent must be >= 0, got {mu}")));
    }
    let x = apply_spectral_function(op, |l| l.powf(mu), xi)?;
    reject_zero(x)
}

/// `x = ρ(T*T) ξ`.
pub fn source_element_general(
    op: &SpectralOperator,
    rho: &IndexFunction,
    xi: &SpectralElement,
) -> Result<SpectralElement> {
    let x = apply_spectral_function(op, |l| rho.eval(l), xi)?;
    reject_zero(x)
}

fn reject_zero(x: SpectralElement) -> Result<SpectralElement> {
    if x.is_zero() {
        Err(Error::DegenerateSource(
            "source element is identically zero".into(),
        ))
    } else {
        Ok(x)
    }
}

/// `‖R_α T x − x‖ = ‖r_α(T*T) x‖`.
pub fn residual_norm(op: &SpectralOperator, fam: &FilterFamily, alpha: f64, x: &SpectralElement) -> Result<f64> {
    x.check_paired(op)?;
    fam.check_alpha(alpha)?;
    let terms = op
        .eigenvalues
        .iter()
        .zip(&x.coeffs)
        .map(|(&l, &c)| Ok(fam.r_eval(alpha, l)? * c))
        .collect::<Result<Vec<_>>>()?;
    Ok(l2_norm(&terms))
}

/// Index functions used as source conditions and qualifications.
#[derive(Clone)]
pub enum IndexFunction {
    /// `t^μ`
    Power(f64),
    /// `−1/ln t`
    InverseLog,
    /// `t·e^{t/ln t}`
    LogDamped,
    /// `e^{−1/t}`
    ExpInverse,
    Custom {
        name: String,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl IndexFunction {
    pub fn custom(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        IndexFunction::Custom {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            IndexFunction::Power(mu) => t.powf(*mu),
            IndexFunction::InverseLog => -1.0 / t.ln(),
            IndexFunction::LogDamped => t * (t / t.ln()).exp(),
            IndexFunction::ExpInverse => (-1.0 / t).exp(),
            IndexFunction::Custom { f, .. } => f(t),
        }
    }

    pub fn name(&self) -> String {
        match self {
            IndexFunction::Power(mu) => format!("power:{mu}"),
            IndexFunction::InverseLog => "inverse-log".into(),
            IndexFunction::LogDamped => "log-damped".into(),
            IndexFunction::ExpInverse => "exp-inverse".into(),
            IndexFunction::Custom { name, .. } => name.clone(),
        }
    }

    /// Parses the names produced by [`IndexFunction::name`] (custom functions excluded).
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "inverse-log" => Ok(IndexFunction::InverseLog),
            "log-damped" => Ok(IndexFunction::LogDamped),
            "exp-inverse" => Ok(IndexFunction::ExpInverse),
            _ => match s.strip_prefix("power:") {
                Some(mu) => mu
                    .parse::<f64>()
                    .ok()
                    .filter(|m| *m > 0.0 && m.is_finite())
                    .map(IndexFunction::Power)
                    .ok_or_else(|| Error::invalid(format!("bad power exponent in index function '{s}'"))),
                None => Err(Error::invalid(format!(
                    "unknown index function '{s}' (expected inverse-log, log-damped, exp-inverse or power:<mu>)"
                ))),
            },
        }
    }
}

impl fmt::Debug for IndexFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IndexFunction({})", self.name())
    }
}

/// Spectrum description in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SpectrumSpec {
    Power {
        n: usize,
        s: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scale: Option<f64>,
    },
    Geometric {
        n: usize,
        q: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scale: Option<f64>,
    },
    Explicit {
        values: Vec<f64>,
    },
}

impl SpectrumSpec {
    pub fn build(&self) -> Result<SpectralOperator> {
        let (op, scale) = match self {
            SpectrumSpec::Power { n, s, scale } => (SpectralOperator::power(*n, *s)?, *scale),
            SpectrumSpec::Geometric { n, q, scale } => (SpectralOperator::geometric(*n, *q)?, *scale),
            SpectrumSpec::Explicit { values } => (SpectralOperator::from_eigenvalues(values.clone())?, None),
        };
        match scale {
            Some(c) => op.scaled(c),
            None => Ok(op),
        }
    }
}
