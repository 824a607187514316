//! Log-spaced sampling grids shared by the checkers and the error sweeps.

use serde::{Deserialize, Serialize};

/// `n` points log-spaced from `start` to `stop` (either order), endpoints exact.
pub fn log_space(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let (a, b) = (start.ln(), stop.ln());
            let step = (b - a) / (n - 1) as f64;
            let mut out: Vec<f64> = (0..n).map(|i| (a + step * i as f64).exp()).collect();
            out[0] = start;
            out[n - 1] = stop;
            out
        }
    }
}

/// Grids used by the hypothesis checks.
///
/// The λ grid is shared across α; per-α branch points (α, 2α, 3α and any
/// caller constants times α) are merged in by [`Grids::lambdas_for`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grids {
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub lambda_cap: f64,
}

impl Grids {
    pub const LAMBDA_POINTS: usize = 512;
    pub const ALPHA_POINTS: usize = 128;

    /// Default grids: 512 log points on [1e-12·cap, cap] plus λ = 0, and 128
    /// log points for α on [1e-8, α₀(1 − 1e-9)].
    pub fn standard(lambda_cap: f64, alpha_max: f64) -> Self {
        Self::with_resolution(lambda_cap, alpha_max, Self::LAMBDA_POINTS, Self::ALPHA_POINTS)
    }

    pub fn with_resolution(lambda_cap: f64, alpha_max: f64, n_lambda: usize, n_alpha: usize) -> Self {
        let mut lambdas = vec![0.0];
        lambdas.extend(log_space(1e-12 * lambda_cap, lambda_cap, n_lambda));
        let alpha_hi = alpha_max * (1.0 - 1e-9);
        let alpha_lo = 1e-8_f64.min(alpha_hi * 1e-3);
        Grids {
            alphas: log_space(alpha_lo, alpha_hi, n_alpha),
            lambdas,
            lambda_cap,
        }
    }

    /// Shared λ grid merged with `multiples·α` (kept only inside [0, cap]), sorted and deduplicated.
    pub fn lambdas_for(&self, alpha: f64, multiples: &[f64]) -> Vec<f64> {
        let mut out = self.lambdas.clone();
        out.extend(
            multiples
                .iter()
                .map(|m| m * alpha)
                .filter(|&l| l >= 0.0 && l <= self.lambda_cap),
        );
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    pub fn describe(&self) -> String {
        format!(
            "alpha: {} log points on [{:e}, {:e}]; lambda: {} points on {{0}} ∪ [{:e}, {:e}] plus per-alpha branch points",
            self.alphas.len(),
            self.alphas.first().copied().unwrap_or(f64::NAN),
            self.alphas.last().copied().unwrap_or(f64::NAN),
            self.lambdas.len(),
            self.lambdas.get(1).copied().unwrap_or(f64::NAN),
            self.lambda_cap,
        )
    }
}

/// Geometric δ grid, descending from `start` to `stop`.
///
/// With `theta` set, `start` and `stop` are regularization scales `t` and the
/// grid runs geometrically from `Θ(start)` to `Θ(stop)` for the experiment's `ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaGridSpec {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub theta: bool,
}

impl Default for DeltaGridSpec {
    fn default() -> Self {
        DeltaGridSpec {
            start: 1e-2,
            stop: 1e-8,
            points: 12,
            theta: false,
        }
    }
}

impl DeltaGridSpec {
    pub fn build(&self) -> crate::Result<Vec<f64>> {
        if !(self.start > 0.0 && self.stop > 0.0 && self.start > self.stop) {
            return Err(crate::Error::invalid(format!(
                "delta grid needs start > stop > 0, got start={:e} stop={:e}",
                self.start, self.stop
            )));
        }
        if self.points < 2 {
            return Err(crate::Error::invalid("delta grid needs at least 2 points"));
        }
        Ok(log_space(self.start, self.stop, self.points))
    }
}
