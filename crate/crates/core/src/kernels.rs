//! Reproducing kernels on real vectors.
//!
//! Four base kernels are supported (linear, Gaussian, Laplacian and
//! polynomial) together with convex mixtures of base kernels. Mixtures are
//! one level deep; a mixture term may not itself be a mixture.
//!
//! The serialized form is a flat tagged record:
//!
//! ```json
//! {"kind":"mixture","terms":[{"w":0.6,"kind":"gaussian","sigma":0.8},
//!                            {"w":0.4,"kind":"laplacian","sigma":1.0}]}
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernel", into = "RawKernel")]
pub enum KernelSpec {
    Linear,
    Gaussian { sigma: f64 },
    Laplacian { sigma: f64 },
    Polynomial { degree: u32 },
    Mixture(Vec<MixtureTerm>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureTerm {
    pub weight: f64,
    pub kernel: KernelSpec,
}

impl MixtureTerm {
    pub fn new(weight: f64, kernel: KernelSpec) -> Self {
        Self { weight, kernel }
    }
}

impl KernelSpec {
    pub fn gaussian(sigma: f64) -> Self {
        KernelSpec::Gaussian { sigma }
    }

    pub fn laplacian(sigma: f64) -> Self {
        KernelSpec::Laplacian { sigma }
    }

    pub fn polynomial(degree: u32) -> Self {
        KernelSpec::Polynomial { degree }
    }

    pub fn mixture(terms: impl IntoIterator<Item = (f64, KernelSpec)>) -> Self {
        KernelSpec::Mixture(
            terms
                .into_iter()
                .map(|(w, k)| MixtureTerm::new(w, k))
                .collect(),
        )
    }

    /// Check every invariant, returning the first violation found.
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Gaussian { sigma } | KernelSpec::Laplacian { sigma } => {
                if sigma.is_finite() && *sigma > 0.0 {
                    Ok(())
                } else {
                    Err(Error::validation(format!(
                        "σ must be positive (got {sigma})"
                    )))
                }
            }
            KernelSpec::Polynomial { degree } => {
                if *degree >= 1 {
                    Ok(())
                } else {
                    Err(Error::validation("polynomial degree must be at least 1"))
                }
            }
            KernelSpec::Mixture(terms) => {
                if terms.is_empty() {
                    return Err(Error::validation("mixture needs at least one term"));
                }
                let mut total = 0.0;
                for (idx, term) in terms.iter().enumerate() {
                    if matches!(term.kernel, KernelSpec::Mixture(_)) {
                        return Err(Error::validation(format!(
                            "mixture term {idx} is itself a mixture; nesting is not allowed"
                        )));
                    }
                    if !(term.weight.is_finite() && term.weight >= 0.0) {
                        return Err(Error::validation(format!(
                            "mixture weight {idx} must be non-negative (got {})",
                            term.weight
                        )));
                    }
                    term.kernel.validate()?;
                    total += term.weight;
                }
                if (total - 1.0).abs() > WEIGHT_SUM_TOL {
                    return Err(Error::validation(format!(
                        "mixture weights must sum to 1 (got {total})"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Evaluate κ(a, b).
    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::input(format!(
                "kernel arguments differ in dimension ({} vs {})",
                a.len(),
                b.len()
            )));
        }
        self.validate()?;
        Ok(self.eval_unchecked(a, b))
    }

    /// Evaluate without validating the spec or the argument lengths.
    ///
    /// Hot loops validate once up front and call this afterwards.
    #[inline]
    pub fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            KernelSpec::Linear => dot(a, b),
            KernelSpec::Gaussian { sigma } => {
                let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-sq / (2.0 * sigma * sigma)).exp()
            }
            KernelSpec::Laplacian { sigma } => {
                let l1: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
                (-l1 / sigma).exp()
            }
            KernelSpec::Polynomial { degree } => (dot(a, b) + 1.0).powi(*degree as i32),
            KernelSpec::Mixture(terms) => terms
                .iter()
                .map(|t| t.weight * t.kernel.eval_unchecked(a, b))
                .sum(),
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum KernelKind {
    Linear,
    Gaussian,
    Laplacian,
    Polynomial,
    Mixture,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernel {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    w: Option<f64>,
    kind: KernelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    degree: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    terms: Option<Vec<RawKernel>>,
}

impl RawKernel {
    fn into_spec(self, allow_weight: bool) -> std::result::Result<KernelSpec, String> {
        if self.w.is_some() && !allow_weight {
            return Err("field `w` is only allowed on mixture terms".into());
        }
        let no_extra = |name: &str, present: bool| {
            if present {
                Err(format!("field `{name}` not allowed for this kernel kind"))
            } else {
                Ok(())
            }
        };
        let spec = match self.kind {
            KernelKind::Linear => {
                no_extra("sigma", self.sigma.is_some())?;
                no_extra("degree", self.degree.is_some())?;
                no_extra("terms", self.terms.is_some())?;
                KernelSpec::Linear
            }
            KernelKind::Gaussian | KernelKind::Laplacian => {
                no_extra("degree", self.degree.is_some())?;
                no_extra("terms", self.terms.is_some())?;
                let sigma = self.sigma.ok_or("missing field `sigma`")?;
                if self.kind == KernelKind::Gaussian {
                    KernelSpec::Gaussian { sigma }
                } else {
                    KernelSpec::Laplacian { sigma }
                }
            }
            KernelKind::Polynomial => {
                no_extra("sigma", self.sigma.is_some())?;
                no_extra("terms", self.terms.is_some())?;
                KernelSpec::Polynomial {
                    degree: self.degree.ok_or("missing field `degree`")?,
                }
            }
            KernelKind::Mixture => {
                if allow_weight {
                    return Err("mixture terms may not be mixtures".into());
                }
                no_extra("sigma", self.sigma.is_some())?;
                no_extra("degree", self.degree.is_some())?;
                let terms = self
                    .terms
                    .ok_or("missing field `terms`")?
                    .into_iter()
                    .map(|raw| {
                        let w = raw.w.ok_or("mixture term missing weight `w`")?;
                        Ok(MixtureTerm::new(w, raw.into_spec(true)?))
                    })
                    .collect::<std::result::Result<Vec<_>, String>>()?;
                KernelSpec::Mixture(terms)
            }
        };
        Ok(spec)
    }
}

impl TryFrom<RawKernel> for KernelSpec {
    type Error = String;

    fn try_from(raw: RawKernel) -> std::result::Result<Self, String> {
        raw.into_spec(false)
    }
}

impl From<KernelSpec> for RawKernel {
    fn from(spec: KernelSpec) -> Self {
        let mut raw = RawKernel {
            w: None,
            kind: KernelKind::Linear,
            sigma: None,
            degree: None,
            terms: None,
        };
        match spec {
            KernelSpec::Linear => {}
            KernelSpec::Gaussian { sigma } => {
                raw.kind = KernelKind::Gaussian;
                raw.sigma = Some(sigma);
            }
            KernelSpec::Laplacian { sigma } => {
                raw.kind = KernelKind::Laplacian;
                raw.sigma = Some(sigma);
            }
            KernelSpec::Polynomial { degree } => {
                raw.kind = KernelKind::Polynomial;
                raw.degree = Some(degree);
            }
            KernelSpec::Mixture(terms) => {
                raw.kind = KernelKind::Mixture;
                raw.terms = Some(
                    terms
                        .into_iter()
                        .map(|t| {
                            let mut inner = RawKernel::from(t.kernel);
                            inner.w = Some(t.weight);
                            inner
                        })
                        .collect(),
                );
            }
        }
        raw
    }
}
