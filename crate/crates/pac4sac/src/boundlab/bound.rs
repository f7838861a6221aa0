//! Numeric evaluation of the PAC-Bayes complexity term
//!
//! ```text
//! sqrt( (log(c₂·N / (c₁·B·δ)) + KL) / (N/(B·c₁) − 1) )
//! ```
//!
//! where `B` is a squared scale constant whose form differs between the
//! main-text bound, the appendix bound, and the `Q_max`-parameterized
//! variant. All three share the template above and its monotonicity:
//! increasing in KL, decreasing in N and in δ.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which convention supplies the squared scale constant `B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum BoundVariant {
    /// `B = (r_max + |r_min|)²`.
    MainText,
    /// `B = r_max² / (r_max − r_min)²`, the derivation-final form.
    #[default]
    Appendix,
    /// `B = Q_max²`, for a known value-function bound.
    QMax,
}

/// Inputs to the bound evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Empirical risk `R_N` (for the full composition; the complexity term
    /// itself does not depend on it).
    #[serde(default)]
    pub empirical_risk: f64,
    /// KL divergence from the posterior to the prior.
    pub kl: f64,
    /// Sample count.
    pub n: usize,
    pub reward_min: f64,
    pub reward_max: f64,
    /// Tolerance level, in (0, 1).
    pub delta: f64,
    /// Predetermined constant, > 0.
    pub c1: f64,
    /// Predetermined constant, > 0.
    pub c2: f64,
    /// Value-function bound for [`BoundVariant::QMax`].
    #[serde(default)]
    pub q_max: Option<f64>,
    /// Expected predictive-variance correction, subtracted in the full
    /// composition; zero when unknown.
    #[serde(default)]
    pub correction: f64,
}

/// Evaluated bound: the square-root complexity term alone, and the full
/// composition `R_N − correction + term` for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacBound {
    pub complexity_term: f64,
    pub full_bound: f64,
}

fn scale_constant(inputs: &BoundInputs, variant: BoundVariant) -> Result<f64> {
    match variant {
        BoundVariant::MainText => {
            let b = inputs.reward_max + inputs.reward_min.abs();
            if b <= 0.0 {
                return Err(Error::Domain(
                    "main-text scale needs r_max + |r_min| > 0".into(),
                ));
            }
            Ok(b * b)
        }
        BoundVariant::Appendix => {
            let range = inputs.reward_max - inputs.reward_min;
            if range <= 0.0 {
                return Err(Error::Domain("appendix scale needs r_max > r_min".into()));
            }
            if inputs.reward_max == 0.0 {
                return Err(Error::Domain("appendix scale needs r_max != 0".into()));
            }
            Ok(inputs.reward_max * inputs.reward_max / (range * range))
        }
        BoundVariant::QMax => {
            let q_max = inputs
                .q_max
                .ok_or_else(|| Error::Domain("q_max variant needs a q_max value".into()))?;
            if q_max <= 0.0 {
                return Err(Error::Domain("q_max must be positive".into()));
            }
            Ok(q_max * q_max)
        }
    }
}

/// Evaluate the complexity term and the full bound composition.
///
/// Fails with a sample-size error when `N` is not large enough to keep the
/// denominator positive; the error names the minimum admissible `N`.
pub fn compute_pac_bound(inputs: &BoundInputs, variant: BoundVariant) -> Result<PacBound> {
    if !(inputs.delta > 0.0 && inputs.delta < 1.0) {
        return Err(Error::Domain(format!("delta {} outside (0, 1)", inputs.delta)));
    }
    if inputs.c1 <= 0.0 || inputs.c2 <= 0.0 {
        return Err(Error::Domain("constants c1 and c2 must be positive".into()));
    }
    if inputs.kl < 0.0 {
        return Err(Error::Domain(format!("kl divergence {} is negative", inputs.kl)));
    }
    let scale = scale_constant(inputs, variant)?;
    let denominator = inputs.n as f64 / (scale * inputs.c1) - 1.0;
    if denominator <= 0.0 {
        let min_n = (scale * inputs.c1).floor() as usize + 1;
        return Err(Error::SampleSize { n: inputs.n, min_n });
    }
    let log_arg = inputs.c2 * inputs.n as f64 / (inputs.c1 * scale * inputs.delta);
    let numerator = log_arg.ln() + inputs.kl;
    if numerator < 0.0 {
        return Err(Error::Domain(format!(
            "bound undefined: log term {} more negative than kl {}",
            log_arg.ln(),
            inputs.kl
        )));
    }
    let complexity_term = (numerator / denominator).sqrt();
    Ok(PacBound {
        complexity_term,
        full_bound: inputs.empirical_risk - inputs.correction + complexity_term,
    })
}
