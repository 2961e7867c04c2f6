//! Catalogue of mean and log-variance functions with certified class constants.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wavelet::{besov_tail_with_remainder, function_ladder, BesovMode, HolderBound, FUNCTION_TAIL_LEVELS};

/// Levels at which class membership is certified.
pub const CERTIFIED_LEVELS: u32 = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeanFixture {
    Zero,
    /// amplitude·sin(2πt)
    Sine { amplitude: f64 },
    /// 4·amplitude·t(1 − t)
    Polynomial { amplitude: f64 },
    /// Constant on the right-closed dyadic cells ((c−1)/p, c/p].
    PiecewiseHaar { values: Vec<f64> },
}

impl MeanFixture {
    pub fn from_name(name: &str, amplitude: f64) -> Result<Self> {
        match name {
            "zero" => Ok(MeanFixture::Zero),
            "sine" => Ok(MeanFixture::Sine { amplitude }),
            "polynomial" => Ok(MeanFixture::Polynomial { amplitude }),
            "piecewise" => Ok(MeanFixture::PiecewiseHaar {
                values: [1.0, -0.5, 0.25, 0.75].iter().map(|v| v * amplitude).collect(),
            }),
            other => Err(Error::UnknownFixture(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MeanFixture::Zero => "zero",
            MeanFixture::Sine { .. } => "sine",
            MeanFixture::Polynomial { .. } => "polynomial",
            MeanFixture::PiecewiseHaar { .. } => "piecewise",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MeanFixture::Zero => Ok(()),
            MeanFixture::Sine { amplitude } | MeanFixture::Polynomial { amplitude } => {
                crate::error::finite("amplitude", *amplitude).map(|_| ())
            }
            MeanFixture::PiecewiseHaar { values } => {
                if values.is_empty() || !values.len().is_power_of_two() {
                    return Err(Error::NonDyadic(values.len()));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Shape("non-finite piecewise value".into()));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            MeanFixture::Zero => 0.0,
            MeanFixture::Sine { amplitude } => amplitude * (2.0 * PI * t).sin(),
            MeanFixture::Polynomial { amplitude } => 4.0 * amplitude * t * (1.0 - t),
            MeanFixture::PiecewiseHaar { values } => {
                let p = values.len();
                let cell = (t * p as f64).ceil() as usize;
                values[cell.clamp(1, p) - 1]
            }
        }
    }

    /// Hölder modulus, absent for discontinuous fixtures.
    pub fn holder(&self) -> Option<HolderBound> {
        let lipschitz = |c: f64| {
            Some(HolderBound {
                constant: c,
                exponent: 1.0,
            })
        };
        match self {
            MeanFixture::Zero => lipschitz(0.0),
            MeanFixture::Sine { amplitude } => lipschitz(2.0 * PI * amplitude.abs()),
            MeanFixture::Polynomial { amplitude } => lipschitz(4.0 * amplitude.abs()),
            MeanFixture::PiecewiseHaar { .. } => None,
        }
    }

    /// Level below which all Haar detail of the fixture lives, if finite.
    pub fn detail_cutoff(&self) -> Option<u32> {
        match self {
            MeanFixture::Zero => Some(0),
            MeanFixture::PiecewiseHaar { values } => Some(values.len().trailing_zeros()),
            _ => None,
        }
    }

    pub fn grid(&self, n: usize) -> Vec<f64> {
        (1..=n).map(|i| self.eval(i as f64 / n as f64)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogVarianceFixture {
    Constant { level: f64 },
    /// intercept + slope·t
    Linear { slope: f64, intercept: f64 },
    /// scale·t²
    Quadratic { scale: f64 },
    /// amplitude·sin(2πt)
    Smooth { amplitude: f64 },
}

impl LogVarianceFixture {
    pub fn from_name(name: &str, param: f64) -> Result<Self> {
        match name {
            "constant" => Ok(LogVarianceFixture::Constant { level: param }),
            "linear" => Ok(LogVarianceFixture::Linear {
                slope: param,
                intercept: 0.0,
            }),
            "quadratic" => Ok(LogVarianceFixture::Quadratic { scale: param }),
            "smooth" => Ok(LogVarianceFixture::Smooth { amplitude: param }),
            other => Err(Error::UnknownFixture(other.to_string())),
        }
    }

    /// Default parameter for each catalogue entry.
    pub fn default_param(name: &str) -> f64 {
        match name {
            "linear" => 0.5,
            "quadratic" => 1.0,
            "smooth" => 0.1,
            _ => 0.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LogVarianceFixture::Constant { .. } => "constant",
            LogVarianceFixture::Linear { .. } => "linear",
            LogVarianceFixture::Quadratic { .. } => "quadratic",
            LogVarianceFixture::Smooth { .. } => "smooth",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let values: &[f64] = match self {
            LogVarianceFixture::Constant { level } => &[*level],
            LogVarianceFixture::Linear { slope, intercept } => &[*slope, *intercept],
            LogVarianceFixture::Quadratic { scale } => &[*scale],
            LogVarianceFixture::Smooth { amplitude } => &[*amplitude],
        };
        for &v in values {
            crate::error::finite("log-variance parameter", v)?;
        }
        Ok(())
    }

    pub fn is_constant(&self) -> bool {
        match self {
            LogVarianceFixture::Constant { .. } => true,
            LogVarianceFixture::Linear { slope, .. } => *slope == 0.0,
            LogVarianceFixture::Quadratic { scale } => *scale == 0.0,
            LogVarianceFixture::Smooth { amplitude } => *amplitude == 0.0,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            LogVarianceFixture::Constant { level } => *level,
            LogVarianceFixture::Linear { slope, intercept } => intercept + slope * t,
            LogVarianceFixture::Quadratic { scale } => scale * t * t,
            LogVarianceFixture::Smooth { amplitude } => amplitude * (2.0 * PI * t).sin(),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            LogVarianceFixture::Constant { .. } => 0.0,
            LogVarianceFixture::Linear { slope, .. } => *slope,
            LogVarianceFixture::Quadratic { scale } => 2.0 * scale * t,
            LogVarianceFixture::Smooth { amplitude } => 2.0 * PI * amplitude * (2.0 * PI * t).cos(),
        }
    }

    /// Average of τ over [a, b], in closed form.
    pub fn block_average(&self, a: f64, b: f64) -> f64 {
        match self {
            LogVarianceFixture::Constant { level } => *level,
            LogVarianceFixture::Linear { slope, intercept } => intercept + slope * 0.5 * (a + b),
            LogVarianceFixture::Quadratic { scale } => scale * (a * a + a * b + b * b) / 3.0,
            LogVarianceFixture::Smooth { amplitude } => {
                let w = 2.0 * PI;
                // cos(wa) − cos(wb) = 2 sin(w(a+b)/2) sin(w(b−a)/2)
                let num = 2.0 * (0.5 * w * (a + b)).sin() * (0.5 * w * (b - a)).sin();
                amplitude * num / (w * (b - a))
            }
        }
    }

    /// Certified M in (2.3) for exponents α₁ ∈ (1, 2].
    pub fn holder_constant(&self) -> f64 {
        match self {
            LogVarianceFixture::Constant { .. } => 0.0,
            LogVarianceFixture::Linear { slope, .. } => slope.abs(),
            LogVarianceFixture::Quadratic { scale } => 2.0 * scale.abs(),
            LogVarianceFixture::Smooth { amplitude } => 4.0 * PI * PI * amplitude.abs(),
        }
    }

    /// Largest α₁ for which [`Self::holder_constant`] is certified.
    pub fn max_alpha1(&self) -> f64 {
        match self {
            LogVarianceFixture::Constant { .. } | LogVarianceFixture::Linear { .. } => f64::INFINITY,
            _ => 2.0,
        }
    }

    pub fn grid(&self, n: usize) -> Vec<f64> {
        (1..=n).map(|i| self.eval(i as f64 / n as f64)).collect()
    }
}

/// Decreasing envelope γ_k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GammaSequence {
    /// scale·2^{−decay·k}
    Geometric { scale: f64, decay: f64 },
    /// Explicit values; the last entry extends to all larger k.
    Table { values: Vec<f64> },
}

impl GammaSequence {
    pub fn at(&self, k: u32) -> f64 {
        match self {
            GammaSequence::Geometric { scale, decay } => scale * (-decay * k as f64).exp2(),
            GammaSequence::Table { values } => values[(k as usize).min(values.len() - 1)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GammaSequence::Geometric { scale, decay } => {
                crate::error::positive("gamma scale", *scale)?;
                if !(*decay >= 0.0 && decay.is_finite()) {
                    return Err(Error::InvalidParameter {
                        name: "gamma decay",
                        value: *decay,
                    });
                }
            }
            GammaSequence::Table { values } => {
                if values.is_empty() {
                    return Err(Error::Shape("empty gamma table".into()));
                }
                for w in values.windows(2) {
                    if w[1] > w[0] {
                        return Err(Error::InvalidParameter {
                            name: "gamma table (increasing)",
                            value: w[1],
                        });
                    }
                }
                for &v in values {
                    crate::error::positive("gamma table", v)?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub alpha: f64,
    pub alpha1: f64,
    pub holder_m: f64,
    pub gamma: GammaSequence,
}

impl ClassSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.5 && self.alpha <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                value: self.alpha,
            });
        }
        if !(self.alpha1 > 1.0 && self.alpha1.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "alpha1",
                value: self.alpha1,
            });
        }
        if !(self.holder_m >= 0.0 && self.holder_m.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "holder_m",
                value: self.holder_m,
            });
        }
        self.gamma.validate()
    }

    pub fn gamma_at(&self, k: u32) -> f64 {
        self.gamma.at(k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixtureParams {
    pub alpha: f64,
    pub alpha1: f64,
    pub mean_amplitude: f64,
    pub logvar_param: Option<f64>,
}

impl Default for FixtureParams {
    fn default() -> Self {
        Self {
            alpha: 0.75,
            alpha1: 2.0,
            mean_amplitude: 1.0,
            logvar_param: None,
        }
    }
}

/// Membership of the mean in the tail classes, relative to unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Tails at index ½ within γ_k in both modes.
    pub index_half: bool,
    /// Tails at index α within γ_k in the 2,2 mode.
    pub index_alpha_l2: bool,
    /// Tails at index α within γ_k in the ∞,1 mode.
    pub index_alpha_sup: bool,
    /// Smallest scale C with every index-α tail ≤ C·γ_k/γ_0.
    pub index_alpha_scale: f64,
    /// Numerical check of (2.3) for τ on a grid.
    pub log_variance_holder: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub mean: MeanFixture,
    pub log_variance: LogVarianceFixture,
    pub class: ClassSpec,
    pub certificate: Certificate,
}

impl Fixture {
    pub fn mean_grid(&self, n: usize) -> Vec<f64> {
        self.mean.grid(n)
    }

    pub fn tau_grid(&self, n: usize) -> Vec<f64> {
        self.log_variance.grid(n)
    }
}

/// γ_k certified for a mean fixture at smoothness α.
pub fn certified_gamma(mean: &MeanFixture, alpha: f64) -> Result<GammaSequence> {
    mean.validate()?;
    let decay = 1.0 - alpha;
    match mean.holder() {
        Some(h) if h.constant > 0.0 => Ok(GammaSequence::Geometric {
            scale: h.constant,
            decay,
        }),
        Some(_) => Ok(GammaSequence::Geometric { scale: 1.0, decay }),
        None => {
            // finitely many nonzero levels: take the smallest admissible scale
            let tails = tail_profile(mean, 0.5)?;
            let mut scale = f64::MIN_POSITIVE;
            for (k, (l2, sup)) in tails.iter().enumerate() {
                let weight = (-decay * k as f64).exp2();
                scale = scale.max(l2 / weight).max(sup / weight);
            }
            Ok(GammaSequence::Geometric { scale, decay })
        }
    }
}

/// Tails (2,2 and ∞,1) of the mean at the given index for k = 0..=CERTIFIED_LEVELS.
pub fn tail_profile(mean: &MeanFixture, index: f64) -> Result<Vec<(f64, f64)>> {
    let levels = match mean.detail_cutoff() {
        Some(c) => c.max(CERTIFIED_LEVELS),
        None => FUNCTION_TAIL_LEVELS,
    };
    let ladder = function_ladder(|t| mean.eval(t), 0, levels, mean.detail_cutoff().unwrap_or(0))?;
    let beyond = if mean.detail_cutoff().is_some() { None } else { mean.holder() };
    (0..=CERTIFIED_LEVELS)
        .map(|k| {
            let l2 = besov_tail_with_remainder(&ladder, index, BesovMode::L2L2, k, beyond)?;
            let sup = besov_tail_with_remainder(&ladder, index, BesovMode::SupL1, k, beyond)?;
            Ok((l2, sup))
        })
        .collect()
}

/// Check (2.3) for τ on a grid of `points` + 1 nodes.
pub fn verify_log_variance_holder(tau: &LogVarianceFixture, m: f64, alpha1: f64, points: usize) -> bool {
    let slack = 1.0 + 1e-9;
    let nodes: Vec<f64> = (0..=points).map(|i| i as f64 / points as f64).collect();
    let derivs: Vec<f64> = nodes.iter().map(|&t| tau.derivative(t)).collect();
    if derivs.iter().any(|d| d.abs() > m * slack + 1e-15) {
        return false;
    }
    let stride = (points / 128).max(1);
    for a in (0..=points).step_by(stride) {
        for b in (a + 1..=points).step_by(stride) {
            let gap = nodes[b] - nodes[a];
            if (derivs[b] - derivs[a]).abs() > m * gap.powf(alpha1 - 1.0) * slack + 1e-15 {
                return false;
            }
        }
    }
    true
}

/// Build a fixture from catalogue names and certify its class.
pub fn make_fixture(mean_name: &str, logvar_name: &str, params: &FixtureParams) -> Result<Fixture> {
    let mean = MeanFixture::from_name(mean_name, params.mean_amplitude)?;
    let param = params
        .logvar_param
        .unwrap_or_else(|| LogVarianceFixture::default_param(logvar_name));
    let log_variance = LogVarianceFixture::from_name(logvar_name, param)?;
    certify(mean, log_variance, params.alpha, params.alpha1)
}

/// Certify a mean/log-variance pair at smoothness (α, α₁).
pub fn certify(mean: MeanFixture, log_variance: LogVarianceFixture, alpha: f64, alpha1: f64) -> Result<Fixture> {
    mean.validate()?;
    log_variance.validate()?;
    if alpha1 > log_variance.max_alpha1() {
        return Err(Error::InvalidParameter {
            name: "alpha1",
            value: alpha1,
        });
    }
    let class = ClassSpec {
        alpha,
        alpha1,
        holder_m: log_variance.holder_constant(),
        gamma: certified_gamma(&mean, alpha)?,
    };
    class.validate()?;

    let half = tail_profile(&mean, 0.5)?;
    let at_alpha = tail_profile(&mean, alpha)?;
    let slack = 1.0 + 1e-9;
    let mut index_half = true;
    let mut index_alpha_l2 = true;
    let mut index_alpha_sup = true;
    let mut index_alpha_scale = 0.0f64;
    for k in 0..=CERTIFIED_LEVELS {
        let g = class.gamma_at(k);
        let (l2h, suph) = half[k as usize];
        let (l2a, supa) = at_alpha[k as usize];
        index_half &= l2h <= g * slack && suph <= g * slack;
        index_alpha_l2 &= l2a <= g * slack;
        index_alpha_sup &= supa <= g * slack;
        let unit = g / class.gamma_at(0);
        index_alpha_scale = index_alpha_scale.max(l2a / unit).max(supa / unit);
    }
    let log_variance_holder = verify_log_variance_holder(&log_variance, class.holder_m, alpha1, 4096);
    Ok(Fixture {
        mean,
        log_variance,
        class,
        certificate: Certificate {
            index_half,
            index_alpha_l2,
            index_alpha_sup,
            index_alpha_scale,
            log_variance_holder,
        },
    })
}
