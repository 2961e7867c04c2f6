//! Kullback–Leibler divergences: closed forms, series bounds and a quadrature oracle.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{finite, positive, Error, Result};
use crate::quadrature::{integrate, Integral, QuadOptions};
use crate::special::{digamma, gamma_p, gamma_q, ln_gamma, ln_gamma_taylor_remainder, stirling_correction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub shape: f64,
    pub scale: f64,
}

impl GammaParams {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        positive("shape", shape)?;
        positive("scale", scale)?;
        Ok(Self { shape, scale })
    }

    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    pub fn variance(&self) -> f64 {
        self.shape * self.scale * self.scale
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        (self.shape - 1.0) * x.ln() - x / self.scale - ln_gamma(self.shape) - self.shape * self.scale.ln()
    }

    /// Interval carrying all but a negligible fraction of the mass.
    pub fn effective_support(&self) -> (f64, f64) {
        let sd = self.variance().sqrt();
        let lo = (self.mean() - 40.0 * sd).max(0.0);
        let hi = self.mean() + 40.0 * sd + 60.0 * self.scale;
        (lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalParams {
    pub mean: f64,
    pub variance: f64,
}

impl NormalParams {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        finite("mean", mean)?;
        positive("variance", variance)?;
        Ok(Self { mean, variance })
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let z = x - self.mean;
        -0.5 * (2.0 * std::f64::consts::PI * self.variance).ln() - z * z / (2.0 * self.variance)
    }
}

/// ½[σ₁²/σ₂² − 1 − log(σ₁²/σ₂²)] + (μ₁−μ₂)²/(2σ₂²)
pub fn kl_normal(p: &NormalParams, q: &NormalParams) -> f64 {
    let ratio = p.variance / q.variance;
    let d = p.mean - q.mean;
    // ratio − 1 − ln ratio without cancellation near ratio = 1
    let x = (p.variance - q.variance) / q.variance;
    let var_part = if x.abs() < 1e-4 {
        x * x / 2.0 - x * x * x / 3.0 + x.powi(4) / 4.0
    } else {
        ratio - 1.0 - ratio.ln()
    };
    0.5 * var_part + d * d / (2.0 * q.variance)
}

/// D(Γ(α₁, β₁) ‖ Γ(α₂, β₂)), shape/scale parameterisation.
pub fn kl_gamma(p: &GammaParams, q: &GammaParams) -> f64 {
    let delta = q.shape - p.shape;
    let x = (p.scale - q.scale) / q.scale;
    let shape_part = ln_gamma_taylor_remainder(p.shape, delta);
    let scale_part = p.shape * x - q.shape * x.ln_1p();
    (shape_part + scale_part).max(0.0)
}

/// Same-mean gamma KL written through the equal-mean substitution β₁/β₂ = α₂/α₁.
pub fn kl_gamma_same_mean(alpha1: f64, alpha2: f64) -> Result<f64> {
    positive("alpha1", alpha1)?;
    positive("alpha2", alpha2)?;
    let delta = alpha2 - alpha1;
    // α₁(β₁−β₂)/β₂ = δ and α₂ log(β₂/β₁) = −α₂ log(1 + δ/α₁)
    let value = ln_gamma_taylor_remainder(alpha1, delta) + delta - alpha2 * (delta / alpha1).ln_1p();
    Ok(value.max(0.0))
}

/// Leading term (α₁ − α₂)²/(2α₁²) of the same-mean gamma KL.
pub fn gamma_same_mean_leading(alpha1: f64, alpha2: f64) -> Result<f64> {
    positive("alpha1", alpha1)?;
    positive("alpha2", alpha2)?;
    let d = alpha1 - alpha2;
    Ok(d * d / (2.0 * alpha1 * alpha1))
}

/// Leading terms of the bound on D(Γ(α₁,·) ‖ Poisson(λ)-shape mixture).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoncentralBound {
    pub value: f64,
    /// Leading-order bound with O-terms dropped; always set.
    pub omits_remainder: bool,
}

pub fn gamma_noncentral_kl_bound(alpha1: f64, alpha2: f64, lambda: f64) -> Result<NoncentralBound> {
    if !(alpha1 > 1.0 && alpha1.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "alpha1",
            value: alpha1,
        });
    }
    positive("alpha2", alpha2)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "lambda",
            value: lambda,
        });
    }
    let value = gamma_same_mean_leading(alpha1, alpha2)? + lambda * lambda / (2.0 * alpha2) + lambda / (alpha1 - 1.0);
    Ok(NoncentralBound {
        value,
        omits_remainder: true,
    })
}

/// Poisson(λ) weights with tail mass below 1e-12 trimmed, as (k, log weight).
fn poisson_log_weights(lambda: f64) -> Vec<(u64, f64)> {
    if lambda == 0.0 {
        return vec![(0, 0.0)];
    }
    let log_w = |k: u64| k as f64 * lambda.ln() - lambda - ln_gamma(k as f64 + 1.0);
    let mode = lambda.floor() as u64;
    let mut out = Vec::new();
    let mut k = mode;
    loop {
        let lw = log_w(k);
        if lw < (1e-12f64).ln() - 10.0 && k < mode {
            break;
        }
        out.push((k, lw));
        if k == 0 {
            break;
        }
        k -= 1;
    }
    let mut k = mode + 1;
    let mut upper = 0.0;
    loop {
        let lw = log_w(k);
        out.push((k, lw));
        if k > mode + 2 {
            upper += lw.exp();
            // remaining tail is below the current term times a geometric factor
            if lw.exp() * (k as f64 + 1.0) / (k as f64 + 1.0 - lambda) < 1e-12 * 1e-3 {
                break;
            }
        }
        k += 1;
    }
    let _ = upper;
    out.sort_by_key(|p| p.0);
    out
}

/// Log-density of the Poisson(λ) mixture of Γ(shape + K, scale).
pub fn poisson_gamma_mixture_ln_pdf(x: f64, shape: f64, scale: f64, lambda: f64, weights: &[(u64, f64)]) -> f64 {
    let _ = lambda;
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let terms: Vec<f64> = weights
        .iter()
        .map(|&(k, lw)| {
            let a = shape + k as f64;
            lw + (a - 1.0) * x.ln() - x / scale - ln_gamma(a) - a * scale.ln()
        })
        .collect();
    let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
}

/// D(P ‖ Σ_K Poisson(λ)(K)·Γ(shape + K, scale)) by quadrature.
pub fn kl_gamma_vs_poisson_mixture(p: &GammaParams, shape: f64, scale: f64, lambda: f64) -> Result<f64> {
    positive("mixture shape", shape)?;
    positive("mixture scale", scale)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "lambda",
            value: lambda,
        });
    }
    let weights = poisson_log_weights(lambda);
    let (lo, hi) = p.effective_support();
    let r = kl_quadrature(
        |x| p.ln_pdf(x),
        |x| poisson_gamma_mixture_ln_pdf(x, shape, scale, lambda, &weights),
        Support::Interval(lo, hi),
    )?;
    Ok(r.value.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogGammaNormal {
    pub exact: f64,
    pub bound: f64,
}

/// D(N(log α, 1/α) ‖ law of log X), X ~ Γ(α, 1), with the bound 1/(3α).
pub fn kl_loggamma_vs_normal(alpha: f64) -> Result<LogGammaNormal> {
    positive("alpha", alpha)?;
    // E_N[log φ − log g] reduces to Stirling's remainder plus the lognormal mean
    let exact = stirling_correction(alpha) + alpha * (0.5 / alpha).exp_m1() - 0.5;
    Ok(LogGammaNormal {
        exact: exact.max(0.0),
        bound: 1.0 / (3.0 * alpha),
    })
}

/// Quadrature evaluation of [`kl_loggamma_vs_normal`].
pub fn kl_loggamma_vs_normal_quadrature(alpha: f64) -> Result<f64> {
    positive("alpha", alpha)?;
    let normal = NormalParams::new(alpha.ln(), 1.0 / alpha)?;
    let lg = ln_gamma(alpha);
    let sd = alpha.powf(-0.5);
    let r = kl_quadrature(
        |y| normal.ln_pdf(y),
        |y| alpha * y - y.exp() - lg,
        Support::Interval(alpha.ln() - 40.0 * sd, alpha.ln() + 40.0 * sd),
    )?;
    Ok(r.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Support {
    Real,
    Positive,
    Interval(f64, f64),
}

/// ∫ p log(p/q) from log-densities.
pub fn kl_quadrature<P, Q>(ln_p: P, ln_q: Q, support: Support) -> Result<Integral>
where
    P: Fn(f64) -> f64,
    Q: Fn(f64) -> f64,
{
    let mismatch = std::cell::Cell::new(None);
    let integrand = |x: f64| {
        let lp = ln_p(x);
        if lp == f64::NEG_INFINITY {
            return 0.0;
        }
        let p = lp.exp();
        if p == 0.0 {
            return 0.0;
        }
        let lq = ln_q(x);
        if lq == f64::NEG_INFINITY {
            mismatch.set(Some(x));
            return 0.0;
        }
        p * (lp - lq)
    };
    let (a, b) = match support {
        Support::Real => (f64::NEG_INFINITY, f64::INFINITY),
        Support::Positive => (0.0, f64::INFINITY),
        Support::Interval(a, b) => (a, b),
    };
    // large log-densities leave a round-off floor near 1e-12
    let opts = QuadOptions {
        abs_tol: 1e-11,
        rel_tol: 1e-10,
        max_intervals: 20_000,
    };
    let r = integrate(integrand, a, b, &opts)?;
    if let Some(x) = mismatch.get() {
        return Err(Error::SupportMismatch(x));
    }
    if r.abs_err > 1e-9 {
        return Err(Error::Quadrature(format!("error estimate {:.3e}", r.abs_err)));
    }
    Ok(r)
}

/// Independent gammas X_i ~ Γ(δ_i N, σ_i²/N).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSumSpec {
    pub weights: Vec<f64>,
    pub log_scales: Vec<f64>,
    pub n: f64,
}

impl GammaSumSpec {
    pub fn new(weights: Vec<f64>, log_scales: Vec<f64>, n: f64) -> Result<Self> {
        if weights.is_empty() || weights.len() != log_scales.len() {
            return Err(Error::Shape(format!(
                "{} weights against {} log-scales",
                weights.len(),
                log_scales.len()
            )));
        }
        for &w in &weights {
            positive("weight", w)?;
        }
        for &l in &log_scales {
            finite("log-scale", l)?;
        }
        positive("n", n)?;
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter {
                name: "weight sum",
                value: total,
            });
        }
        Ok(Self { weights, log_scales, n })
    }

    /// log σ̄² = Σ δ_i log σ_i².
    pub fn log_geometric_scale(&self) -> f64 {
        self.weights.iter().zip(&self.log_scales).map(|(d, l)| d * l).sum()
    }

    /// r_i = log σ_i² − log σ̄².
    pub fn residuals(&self) -> Vec<f64> {
        let bar = self.log_geometric_scale();
        self.log_scales.iter().map(|l| l - bar).collect()
    }

    pub fn components(&self) -> Vec<GammaParams> {
        self.weights
            .iter()
            .zip(&self.log_scales)
            .map(|(d, l)| GammaParams {
                shape: d * self.n,
                scale: l.exp() / self.n,
            })
            .collect()
    }

    pub fn target(&self) -> GammaParams {
        GammaParams {
            shape: self.n,
            scale: self.log_geometric_scale().exp() / self.n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaSumKl {
    /// D(ΣX_i ‖ Γ(N, σ̄²/N)) from a grid convolution.
    pub numeric: f64,
    /// Σ D(X_i ‖ Γ(δ_i(1+r_i)N, σ̄²/N)).
    pub joint: f64,
    /// Σ [Nδ_i r_i⁴/8 + r_i²/4].
    pub paper_bound: f64,
}

pub const CONVOLUTION_CELLS: usize = 1 << 16;

/// Cell masses of a gamma law on [c·h, (c+1)·h).
fn gamma_cell_masses(g: &GammaParams, h: f64, cells: usize) -> Vec<f64> {
    if g.shape >= 1.5 {
        let lg = ln_gamma(g.shape) + g.shape * g.scale.ln();
        (0..cells)
            .map(|c| {
                let x = (c as f64 + 0.5) * h;
                h * ((g.shape - 1.0) * x.ln() - x / g.scale - lg).exp()
            })
            .collect()
    } else {
        let mean = g.mean();
        let cdf_gap = |a: f64, b: f64| {
            let (xa, xb) = (a / g.scale, b / g.scale);
            if b <= mean {
                gamma_p(g.shape, xb) - gamma_p(g.shape, xa)
            } else {
                gamma_q(g.shape, xa) - gamma_q(g.shape, xb)
            }
        };
        (0..cells)
            .map(|c| cdf_gap(c as f64 * h, (c + 1) as f64 * h).max(0.0))
            .collect()
    }
}

/// Lemma-style bounds for a sum of gammas with unequal scales.
pub fn kl_gamma_sum(spec: &GammaSumSpec) -> Result<GammaSumKl> {
    let residuals = spec.residuals();
    if residuals.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "residual",
            value: f64::NAN,
        });
    }
    let target = spec.target();
    let mut joint = 0.0;
    let mut paper_bound = 0.0;
    for ((x, d), r) in spec.components().iter().zip(&spec.weights).zip(&residuals) {
        if 1.0 + r <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "1 + residual",
                value: 1.0 + r,
            });
        }
        let star = GammaParams {
            shape: d * (1.0 + r) * spec.n,
            scale: target.scale,
        };
        joint += kl_gamma(x, &star);
        paper_bound += spec.n * d * r.powi(4) / 8.0 + r * r / 4.0;
    }
    let first = spec.log_scales[0];
    let numeric = if spec.log_scales.iter().all(|&l| l == first) {
        0.0
    } else {
        convolution_kl(spec, &target)?
    };
    Ok(GammaSumKl {
        numeric,
        joint,
        paper_bound,
    })
}

fn convolution_kl(spec: &GammaSumSpec, target: &GammaParams) -> Result<f64> {
    let parts = spec.components();
    let mean: f64 = parts.iter().map(|g| g.mean()).sum();
    let var: f64 = parts.iter().map(|g| g.variance()).sum();
    let length = mean + 12.0 * var.sqrt();
    let cells = CONVOLUTION_CELLS;
    let h = length / cells as f64;
    let size = 2 * cells;

    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(size);
    let inverse = planner.plan_fft_inverse(size);
    let mut acc: Vec<Complex<f64>> = vec![Complex::new(1.0, 0.0); size];
    for g in &parts {
        let masses = gamma_cell_masses(g, h, cells);
        let mut buf: Vec<Complex<f64>> = masses.iter().map(|&m| Complex::new(m, 0.0)).collect();
        buf.resize(size, Complex::new(0.0, 0.0));
        forward.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a *= b;
        }
    }
    inverse.process(&mut acc);
    let scale = 1.0 / size as f64;
    let masses: Vec<f64> = acc[..cells].iter().map(|c| c.re * scale).collect();
    let peak = masses.iter().cloned().fold(0.0f64, f64::max);
    if !(peak > 0.0) {
        return Err(Error::Resource("convolution grid underflow".into()));
    }

    // sums of cell midpoints sit half a cell per component to the right
    let offset = 0.5 * parts.len() as f64;
    let mut kl = 0.0;
    let mut c_kahan = 0.0;
    for (c, &p_mass) in masses.iter().enumerate() {
        if p_mass <= peak * 1e-14 {
            continue;
        }
        let x = (c as f64 + offset) * h;
        let q_mass = h * target.ln_pdf(x).exp();
        if q_mass <= 0.0 {
            return Err(Error::SupportMismatch(x));
        }
        let term = p_mass * (p_mass / q_mass).ln() - p_mass + q_mass;
        let y = term - c_kahan;
        let t = kl + y;
        c_kahan = (t - kl) - y;
        kl = t;
    }
    Ok(kl.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaylorRemainder {
    pub exact: f64,
    pub expansion: f64,
}

/// log(Γ(α+δ)/Γ(α)) − δψ(α) and its four-term expansion.
pub fn loggamma_taylor_remainder(alpha: f64, delta: f64) -> Result<TaylorRemainder> {
    positive("alpha", alpha)?;
    finite("delta", delta)?;
    if alpha + delta <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "alpha + delta",
            value: alpha + delta,
        });
    }
    let exact = ln_gamma_taylor_remainder(alpha, delta);
    let expansion = delta * delta / 2.0 * (1.0 / alpha + 1.0 / (2.0 * alpha * alpha))
        - delta.powi(3) / (6.0 * alpha * alpha)
        + delta.powi(4) / (12.0 * alpha.powi(3));
    Ok(TaylorRemainder { exact, expansion })
}

/// Direct digamma form of the Taylor remainder, for cross-checks.
pub fn loggamma_taylor_remainder_direct(alpha: f64, delta: f64) -> f64 {
    ln_gamma(alpha + delta) - ln_gamma(alpha) - delta * digamma(alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingPenalty {
    /// Exact S_ℓ for ℓ = 1..m₁.
    pub exact: Vec<f64>,
    /// 3(n−m₀)/(128m₁)·(r_{ℓ−1} − r_ℓ)².
    pub second_difference_bound: Vec<f64>,
    /// [M²(n−m₀)/m₁]·m₁^{−2α₁}, for interior blocks.
    pub interior_envelope: Option<f64>,
    /// [M²(n−m₀)/m₁]·m₁^{−2}, for the two edge blocks.
    pub edge_envelope: Option<f64>,
}

/// Smoothed log-variances and their block composites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedLogVariances {
    /// log σ̄_j², j = 1..m₀.
    pub cells: Vec<f64>,
    /// log σ*_ℓ², ℓ = 1..m₁.
    pub composite: Vec<f64>,
}

/// ζ_{ℓ,j} for 1-based block ℓ and cell j.
pub fn hat_weight(block: usize, cell: usize, m0: usize, m1: usize) -> f64 {
    let j_over = cell as f64 / m0 as f64;
    let half = 1.0 / (2.0 * m1 as f64);
    if j_over <= half {
        return if block == 1 { 1.0 } else { 0.0 };
    }
    if j_over > 1.0 - half {
        return if block == m1 { 1.0 } else { 0.0 };
    }
    let t = (2 * cell - 1) as f64 / (2.0 * m0 as f64);
    (1.0 - (t * m1 as f64 - (block as f64 - 0.5)).abs()).max(0.0)
}

pub(crate) fn check_block_ratio(m0: usize, m1: usize) -> Result<usize> {
    if m1 == 0 || m0 < m1 || m0 % m1 != 0 || (m0 / m1) % 2 != 0 {
        return Err(Error::Shape(format!("m0 = {m0} is not an even multiple of m1 = {m1}")));
    }
    Ok(m0 / m1)
}

/// Apply the hat weights to block log-variances.
pub fn smooth_log_variances(block_logs: &[f64], m0: usize) -> Result<SmoothedLogVariances> {
    let m1 = block_logs.len();
    let per = check_block_ratio(m0, m1)?;
    let cells: Vec<f64> = (1..=m0)
        .map(|j| {
            // at most the two neighbouring blocks carry weight
            let home = (j - 1) / per + 1;
            let lo = home.saturating_sub(1).max(1);
            let hi = (home + 1).min(m1);
            let mut weighted = (lo..=hi)
                .map(|l| (l, hat_weight(l, j, m0, m1)))
                .filter(|&(_, z)| z > 0.0);
            let (a, _) = weighted.next().expect("every cell has a block");
            // written as a + ζ_b(b − a) so equal neighbours reproduce exactly
            weighted.fold(block_logs[a - 1], |acc, (b, z)| acc + z * (block_logs[b - 1] - block_logs[a - 1]))
        })
        .collect();
    let composite = (0..m1)
        .map(|l| cells[l * per..(l + 1) * per].iter().sum::<f64>() / per as f64)
        .collect();
    Ok(SmoothedLogVariances { cells, composite })
}

/// S_ℓ = E log(g_{σ*_ℓ}(X)/g_{σ_ℓ}(X)) with its bounds.
pub fn smoothing_penalty(
    block_logs: &[f64],
    n: usize,
    m0: usize,
    holder: Option<(f64, f64)>,
) -> Result<SmoothingPenalty> {
    let m1 = block_logs.len();
    if m1 < 2 {
        return Err(Error::Shape("smoothing penalty needs at least two blocks".into()));
    }
    let per = check_block_ratio(m0, m1)?;
    if n <= m0 {
        return Err(Error::Shape(format!("n = {n} must exceed m0 = {m0}")));
    }
    let smoothed = smooth_log_variances(block_logs, m0)?;
    let factor = (n - m0) as f64 / (2.0 * m0 as f64);
    let mut exact = Vec::with_capacity(m1);
    let mut bound = Vec::with_capacity(m1);
    for l in 0..m1 {
        let log_block = block_logs[l];
        let log_star = smoothed.composite[l];
        let mut s = 0.0;
        for &log_cell in &smoothed.cells[l * per..(l + 1) * per] {
            // log(σ²/σ*²) + σ̄²/σ² − σ̄²/σ*²
            s += (log_block - log_star) + (log_cell - log_block).exp() - (log_cell - log_star).exp();
        }
        exact.push(factor * s);
        let prev = if l == 0 { log_block } else { block_logs[l - 1] };
        let next = if l + 1 == m1 { log_block } else { block_logs[l + 1] };
        let (r_prev, r_here) = (log_block - prev, next - log_block);
        bound.push(3.0 * (n - m0) as f64 / (128.0 * m1 as f64) * (r_prev - r_here).powi(2));
    }
    let (interior_envelope, edge_envelope) = match holder {
        Some((m, alpha1)) => {
            let base = m * m * (n - m0) as f64 / m1 as f64;
            (
                Some(base * (m1 as f64).powf(-2.0 * alpha1)),
                Some(base / (m1 as f64 * m1 as f64)),
            )
        }
        None => (None, None),
    };
    Ok(SmoothingPenalty {
        exact,
        second_difference_bound: bound,
        interior_envelope,
        edge_envelope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn normal_examples() {
        let p = NormalParams::new(0.0, 1.0).unwrap();
        assert_eq!(kl_normal(&p, &p), 0.0);
        let q = NormalParams::new(1.0, 1.0).unwrap();
        assert_relative_eq!(kl_normal(&q, &p), 0.5, epsilon = 1e-15);
        let w = NormalParams::new(0.0, 2.0).unwrap();
        assert_relative_eq!(kl_normal(&w, &p), 0.5 * (1.0 - 2f64.ln()), epsilon = 1e-15);
        assert!(NormalParams::new(0.0, 0.0).is_err());
    }

    #[test]
    fn gamma_examples() {
        let p = GammaParams::new(2.0, 1.0).unwrap();
        let q = GammaParams::new(1.0, 2.0).unwrap();
        assert_eq!(kl_gamma(&p, &p), 0.0);
        assert_relative_eq!(kl_gamma(&p, &q), 0.115_931_515_7, epsilon = 1e-9);
        let a = GammaParams::new(100.0, 0.01).unwrap();
        let b = GammaParams::new(90.0, 1.0 / 90.0).unwrap();
        assert_relative_eq!(kl_gamma(&a, &b), 0.002_689_516_9, epsilon = 1e-10);
        assert_relative_eq!(kl_gamma_same_mean(100.0, 90.0).unwrap(), kl_gamma(&a, &b), epsilon = 1e-15);
        assert_relative_eq!(gamma_same_mean_leading(100.0, 90.0).unwrap(), 0.005, epsilon = 1e-16);
    }

    #[test]
    fn noncentral_bound_value() {
        let b = gamma_noncentral_kl_bound(50.0, 50.0, 1.0).unwrap();
        assert_relative_eq!(b.value, 0.01 + 1.0 / 49.0, epsilon = 1e-15);
        assert_eq!(
            gamma_noncentral_kl_bound(100.0, 90.0, 0.0).unwrap().value,
            gamma_same_mean_leading(100.0, 90.0).unwrap()
        );
        assert!(gamma_noncentral_kl_bound(1.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn loggamma_normal_values() {
        let one = kl_loggamma_vs_normal(1.0).unwrap();
        assert_relative_eq!(one.exact, 0.229_782, epsilon = 1e-6);
        assert!(one.exact <= one.bound);
        assert!(kl_loggamma_vs_normal(0.5).unwrap().exact <= 2.0 / 3.0);
    }

    #[test]
    fn taylor_spot_value() {
        let t = loggamma_taylor_remainder(50.0, 1.0).unwrap();
        assert_relative_eq!(t.exact, 0.010_033_332_0, epsilon = 1e-9);
        assert_eq!(loggamma_taylor_remainder(7.0, 0.0).unwrap().exact, 0.0);
        assert!(loggamma_taylor_remainder(2.0, -2.0).is_err());
    }

    #[test]
    fn gamma_sum_equal_scales_is_zero() {
        let spec = GammaSumSpec::new(vec![0.25, 0.75], vec![0.3, 0.3], 40.0).unwrap();
        let r = kl_gamma_sum(&spec).unwrap();
        assert_eq!(r.numeric, 0.0);
        assert!(r.joint.abs() < 1e-15);
        assert!(GammaSumSpec::new(vec![0.5, 0.6], vec![0.0, 0.0], 10.0).is_err());
    }

    #[test]
    fn hat_weights_sum_to_one() {
        let (m0, m1) = (32, 4);
        for l in 1..=m1 {
            let s: f64 = (1..=m0).map(|j| hat_weight(l, j, m0, m1)).sum::<f64>() * m1 as f64 / m0 as f64;
            assert_relative_eq!(s, 1.0, epsilon = 1e-14);
        }
        for j in 1..=m0 {
            let s: f64 = (1..=m1).map(|l| hat_weight(l, j, m0, m1)).sum();
            assert_relative_eq!(s, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn composite_weights() {
        let logs = [1.0, 2.0, 4.0, 8.0];
        let s = smooth_log_variances(&logs, 16).unwrap();
        assert_relative_eq!(s.composite[0], 7.0 / 8.0 + 2.0 / 8.0, epsilon = 1e-14);
        assert_relative_eq!(s.composite[1], 1.0 / 8.0 + 1.5 + 4.0 / 8.0, epsilon = 1e-14);
        assert_relative_eq!(s.composite[3], 4.0 / 8.0 + 7.0, epsilon = 1e-14);
        assert!(smooth_log_variances(&logs, 12).is_err());
        assert!(smooth_log_variances(&logs, 4).is_err());
    }

    #[test]
    fn constant_logs_have_no_penalty() {
        let p = smoothing_penalty(&[0.4; 8], 4096, 64, Some((1.0, 2.0))).unwrap();
        assert!(p.exact.iter().all(|&s| s == 0.0));
    }
}
