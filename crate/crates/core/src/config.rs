//! Experiment configuration files and their validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{FamilySpec, FilterFamily};
use crate::grid::{log_space, DeltaGridSpec};
use crate::qualification::ThetaMap;
use crate::satlab::{default_xi, SweepOptions, Thresholds, WindowPolicy};
use crate::spectral::{IndexFunction, SpectralElement, SpectralOperator, SpectrumSpec};
use crate::toterr::AlphaGridSpec;

/// Either a list of Hölder exponents or a named index function.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    /// Classical qualification of the family; defaults to the family's own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
}

/// Optional overrides of the window policy; unset fields take the resolved default.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclude_boundary: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_len: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: FamilySpec,
    pub spectrum: SpectrumSpec,
    pub source: SourceSpec,
    #[serde(default)]
    pub delta_grid: DeltaGridSpec,
    #[serde(default)]
    pub alpha_grid: AlphaGridSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub thresholds: Option<Thresholds>,
    #[serde(default)]
    pub window: Option<WindowSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone)]
pub enum Source {
    Classical { mu0: f64, mus: Vec<f64> },
    Maximal { rho: IndexFunction },
}

/// A validated configuration with every object built.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub op: SpectralOperator,
    pub family: FilterFamily,
    pub source: Source,
    pub deltas: Vec<f64>,
    pub xi: SpectralElement,
    pub seed: u64,
    pub options: SweepOptions,
}

/// Turns a serde_json error into `origin:line:col: message`.
fn anchored(origin: &str, e: serde_json::Error) -> Error {
    let msg = e.to_string();
    // serde_json appends " at line L column C"; the anchor carries that already.
    let msg = match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg,
    };
    Error::invalid(format!("{origin}:{}:{}: {msg}", e.line(), e.column()))
}

impl ExperimentConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| anchored(origin, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// Validates everything and builds the experiment; nothing numeric runs
    /// beyond object construction.
    pub fn build(&self) -> Result<Experiment> {
        let op = self.spectrum.build()?;
        let family = self.family.build(op.norm_sq())?;
        let source = match (&self.source.mu, &self.source.rho) {
            (Some(_), Some(_)) => return Err(Error::invalid("source: give either mu or rho, not both")),
            (None, None) => return Err(Error::invalid("source: one of mu or rho is required")),
            (Some(mus), None) => {
                if mus.is_empty() || mus.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
                    return Err(Error::invalid("source.mu must be a non-empty list of positive exponents"));
                }
                let mu0 = match self.source.mu0.or_else(|| family.claimed_order()) {
                    Some(m) if m.is_finite() && m > 0.0 => m,
                    Some(m) => return Err(Error::invalid(format!("source.mu0 must be positive, got {m}"))),
                    None => {
                        return Err(Error::invalid(format!(
                            "family {} has no classical order; set source.mu0",
                            family.name()
                        )))
                    }
                };
                Source::Classical { mu0, mus: mus.clone() }
            }
            (None, Some(name)) => {
                if self.source.mu0.is_some() {
                    return Err(Error::invalid("source.mu0 only applies to mu sources"));
                }
                Source::Maximal {
                    rho: IndexFunction::parse(name)?,
                }
            }
        };
        let deltas = self.deltas(&source, &op, &family)?;
        self.alpha_grid.build(family.alpha_max())?;
        let thresholds = self.thresholds.unwrap_or_default();
        if !(thresholds.slope_tol > 0.0 && thresholds.trend > 0.0 && thresholds.band_cap > 1.0) {
            return Err(Error::invalid("thresholds need slope_tol > 0, trend > 0 and band_cap > 1"));
        }
        let mut window = WindowPolicy::resolved(&op);
        if let Some(w) = self.window {
            window.exclude_boundary = w.exclude_boundary.unwrap_or(window.exclude_boundary);
            window.min_alpha = w.min_alpha.or(window.min_alpha);
            window.min_len = w.min_len.unwrap_or(window.min_len);
        }
        let xi = default_xi(op.dim(), self.seed);
        Ok(Experiment {
            op,
            family,
            source,
            deltas,
            xi,
            seed: self.seed,
            options: SweepOptions {
                alpha: self.alpha_grid,
                thresholds,
                window,
            },
        })
    }

    fn deltas(&self, source: &Source, op: &SpectralOperator, fam: &FilterFamily) -> Result<Vec<f64>> {
        let g = &self.delta_grid;
        if !g.theta {
            return g.build();
        }
        let Source::Maximal { rho } = source else {
            return Err(Error::invalid("delta_grid.theta needs a rho source"));
        };
        let theta = ThetaMap::new(rho.clone(), op.norm_sq(), fam.alpha_max())?;
        if !(g.start > 0.0 && g.stop > 0.0 && g.start != g.stop && g.points >= 2) {
            return Err(Error::invalid("delta_grid with theta needs distinct positive start/stop and >= 2 points"));
        }
        let (a, b) = (theta.theta_eval(g.start)?, theta.theta_eval(g.stop)?);
        Ok(log_space(a.max(b), a.min(b), g.points))
    }
}
