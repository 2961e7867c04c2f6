//! Term-by-term divergence decompositions, bound evaluation, two-sample
//! statistics and rate sweeps.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::couplings::{pbar_to_q, tau_hat};
use crate::divergence::{
    gamma_noncentral_kl_bound, kl_gamma, kl_gamma_sum, kl_gamma_vs_poisson_mixture, kl_loggamma_vs_normal,
    smoothing_penalty, GammaParams, GammaSumSpec,
};
use crate::error::{Error, Result};
use crate::experiments::{detail_blocks, sample_q, sample_sequence, DrawValues, ExperimentDraw, ModelConfig, ModelSpec};
use crate::fixtures::{ClassSpec, GammaSequence, LogVarianceFixture, MeanFixture};
use crate::quadrature::{integrate, QuadOptions};
use crate::samplers::RngStream;
use crate::special::ln_gamma_taylor_remainder;
use crate::stats::{auc, fit_line, kahan_sum, ks_two_sample, AucEstimate, KsResult, LineFit};

/// Slack applied where a bound drops unquantified remainder terms.
pub const REMAINDER_SLACK: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decomposition {
    Theorem1,
    Theorem1Reverse,
    Lemma2,
    Pipeline7,
    LogProcess,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    ClosedForm,
    Quadrature,
    Convolution,
    DirectSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub name: String,
    pub value: f64,
    pub method: Method,
    pub bound: Option<f64>,
    /// Multiplier on `bound` when checking; above one only for bounds with
    /// dropped remainders.
    pub slack: f64,
}

impl Term {
    fn new(name: &str, value: f64, method: Method, bound: Option<f64>, slack: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            method,
            bound,
            slack,
        }
    }

    /// Whether the value respects its bound; `None` when there is no bound.
    pub fn verified(&self) -> Option<bool> {
        self.bound.map(|b| self.value <= b * self.slack)
    }
}

/// A reported quantity that is not part of the total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockTerms {
    pub block: usize,
    pub variance: f64,
    pub top: f64,
    pub detail: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceBreakdown {
    pub id: Decomposition,
    pub terms: Vec<Term>,
    pub diagnostics: Vec<Diagnostic>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub blocks: Vec<BlockTerms>,
    pub total: f64,
    /// √total, an upper bound on total variation.
    pub tv_surrogate: f64,
}

impl DivergenceBreakdown {
    fn new(id: Decomposition, terms: Vec<Term>, diagnostics: Vec<Diagnostic>, blocks: Vec<BlockTerms>) -> Self {
        let total = kahan_sum(terms.iter().map(|t| t.value));
        Self {
            id,
            terms,
            diagnostics,
            blocks,
            total,
            tv_surrogate: total.max(0.0).sqrt(),
        }
    }

    pub fn term(&self, name: &str) -> Option<&Term> {
        self.terms.iter().find(|t| t.name == name)
    }

    pub fn diagnostic(&self, name: &str) -> Option<f64> {
        self.diagnostics.iter().find(|d| d.name == name).map(|d| d.value)
    }

    pub fn all_verified(&self) -> bool {
        self.terms.iter().all(|t| t.verified() != Some(false))
    }
}

fn diag(name: &str, value: f64) -> Diagnostic {
    Diagnostic {
        name: name.to_string(),
        value,
    }
}

/// Σθ² over the detail coefficients of each support block.
fn detail_energy_by_block(spec: &ModelSpec) -> Vec<f64> {
    let mut out = vec![0.0; spec.m1()];
    for (t, b) in spec.mean_ladder().flat_details().iter().zip(detail_blocks(spec)) {
        out[b] += t * t;
    }
    out
}

/// D(Γ(α₁) ‖ Poisson(λ)-mixture of Γ(α₂ + K)) at equal base means.
fn variance_stage(alpha1: f64, alpha2: f64, lambda: f64) -> Result<(f64, Method)> {
    let native = GammaParams::new(alpha1, 1.0 / alpha1)?;
    if lambda == 0.0 {
        let estimate = GammaParams::new(alpha2, 1.0 / alpha2)?;
        return Ok((kl_gamma(&native, &estimate), Method::ClosedForm));
    }
    Ok((kl_gamma_vs_poisson_mixture(&native, alpha2, 1.0 / alpha2, lambda)?, Method::Quadrature))
}

/// ln x − ψ(x) without cancellation.
fn log_minus_digamma(x: f64) -> f64 {
    ln_gamma_taylor_remainder(x, 1.0)
}

/// D(Q ‖ K P̄) for the forward map of [`pbar_to_q`].
pub fn decompose_theorem1(spec: &ModelSpec) -> Result<DivergenceBreakdown> {
    let (n, m) = (spec.n(), spec.m0());
    if n <= 2 {
        return Err(Error::Shape(format!("n = {n} leaves E[1/V] undefined")));
    }
    let (nf, mf) = (n as f64, m as f64);
    let sigma2 = spec.sigma() * spec.sigma();
    let energy: f64 = detail_energy_by_block(spec).iter().sum();
    let mu = nf * energy / sigma2;
    let gamma = spec.class().gamma_at(spec.k0());

    let (alpha1, alpha2) = (nf / 2.0, (nf - mf) / 2.0);
    let (variance, method) = variance_stage(alpha1, alpha2, mu / 2.0)?;
    let conventional = gamma_noncentral_kl_bound(alpha1, alpha2, mu / 2.0)?.value;
    let literal = gamma_noncentral_kl_bound(alpha1, alpha2, mu)?.value;
    let top = mf / 2.0 * log_minus_digamma(nf / 2.0);
    let detail = nf * nf / (2.0 * (nf - 2.0)) * energy / sigma2;

    let terms = vec![
        Term::new("variance statistic", variance, method, Some(conventional), REMAINDER_SLACK),
        Term::new("top coefficients", top, Method::ClosedForm, Some(mf / (nf - 2.0)), 1.0),
        Term::new("detail coefficients", detail, Method::ClosedForm, Some(nf / mf * gamma * gamma), 1.0),
    ];
    let diagnostics = vec![
        diag("noncentrality", mu),
        diag("variance bound, Poisson(mu) mixing", literal),
        diag("variance bound, leading terms", mf * mf / (2.0 * nf * nf) + (mu * mu + 3.0 * mu) / (2.0 * (nf - mf))),
        diag("balance target 3 gamma_k0", 3.0 * gamma),
        diag("m/n", mf / nf),
        diag("(n/m) gamma_k0^2", nf / mf * gamma * gamma),
    ];
    Ok(DivergenceBreakdown::new(Decomposition::Theorem1, terms, diagnostics, Vec::new()))
}

/// D(K Q ‖ P̄) for the reverse map: redrawn details against their true means,
/// plus the top-coefficient variance term.
pub fn decompose_theorem1_reverse(spec: &ModelSpec) -> Result<DivergenceBreakdown> {
    let (n, m) = (spec.n() as f64, spec.m0() as f64);
    let sigma2 = spec.sigma() * spec.sigma();
    let energy: f64 = detail_energy_by_block(spec).iter().sum();
    let gamma = spec.class().gamma_at(spec.k0());
    let terms = vec![
        Term::new("detail coefficients", n * energy / (2.0 * sigma2), Method::ClosedForm, Some(n / m * gamma * gamma), 1.0),
        Term::new("top coefficients", m / 2.0 * log_minus_digamma(n / 2.0), Method::ClosedForm, Some(m / (n - 2.0)), 1.0),
    ];
    Ok(DivergenceBreakdown::new(Decomposition::Theorem1Reverse, terms, Vec::new(), Vec::new()))
}

/// Largest |log σ_ℓ² − log σ̄²|.
fn variance_spread(spec: &ModelSpec) -> f64 {
    let centre = spec.log_sigma_bar_sq();
    crate::experiments::block_log_variances(spec)
        .blocks
        .iter()
        .map(|l| (l - centre).abs())
        .fold(0.0, f64::max)
}

/// γ_{k₀} relative to σ̄ rather than σ.
fn gamma_relative_to_bar(spec: &ModelSpec) -> f64 {
    spec.class().gamma_at(spec.k0()) * spec.sigma() / (0.5 * spec.log_sigma_bar_sq()).exp()
}

/// The blockwise analogue of [`decompose_theorem1`].
pub fn decompose_lemma2(spec: &ModelSpec) -> Result<DivergenceBreakdown> {
    let (n, m0, m1) = (spec.n(), spec.m0(), spec.m1());
    if n <= 2 * m1 {
        return Err(Error::Shape(format!("n = {n} must exceed 2 m1 = {}", 2 * m1)));
    }
    let (nf, m0f, m1f) = (n as f64, m0 as f64, m1 as f64);
    let logs = crate::experiments::block_log_variances(spec).blocks;
    let energy = detail_energy_by_block(spec);
    let alpha1 = nf / (2.0 * m1f);
    let alpha2 = (nf - m0f) / (2.0 * m1f);
    let top_per_block = m0f / m1f / 2.0 * log_minus_digamma(alpha1);

    let mut blocks = Vec::with_capacity(m1);
    let mut bound = 0.0;
    let mut mus = 0.0;
    for l in 0..m1 {
        let var = logs[l].exp();
        let mu = nf * energy[l] / var;
        mus += mu;
        let (variance, _) = variance_stage(alpha1, alpha2, mu / 2.0)?;
        bound += gamma_noncentral_kl_bound(alpha1, alpha2, mu / 2.0)?.value;
        let detail = nf / 2.0 * energy[l] / (var * (1.0 - 2.0 * m1f / nf));
        blocks.push(BlockTerms {
            block: l + 1,
            variance,
            top: top_per_block,
            detail,
        });
    }
    let method = if mus == 0.0 { Method::ClosedForm } else { Method::Quadrature };
    let spread = spec.class().holder_m.max(variance_spread(spec));
    let gamma = gamma_relative_to_bar(spec);
    let terms = vec![
        Term::new(
            "variance statistic",
            kahan_sum(blocks.iter().map(|b| b.variance)),
            method,
            Some(bound),
            REMAINDER_SLACK,
        ),
        Term::new(
            "top coefficients",
            kahan_sum(blocks.iter().map(|b| b.top)),
            Method::ClosedForm,
            Some(m1f * m0f / nf),
            1.0,
        ),
        Term::new(
            "detail coefficients",
            kahan_sum(blocks.iter().map(|b| b.detail)),
            Method::ClosedForm,
            Some(spread.exp() * nf * m0f.powf(-2.0 * spec.class().alpha) * gamma * gamma),
            1.0,
        ),
    ];
    let diagnostics = vec![
        diag("noncentrality", mus),
        diag("variance bound, leading terms", m1f.powi(3) / (nf * nf) + 3.0 * m1f / nf * mus),
    ];
    Ok(DivergenceBreakdown::new(Decomposition::Lemma2, terms, diagnostics, blocks))
}

/// Terms of the chain from blocked coefficients to heteroscedastic regression.
pub fn decompose_pipeline7(spec: &ModelSpec) -> Result<DivergenceBreakdown> {
    let (n, m0, m1) = (spec.n(), spec.m0(), spec.m1());
    if m1 < 2 {
        return Err(Error::Shape("the variance smoothing chain needs m1 >= 2".into()));
    }
    let per = m0 / m1;
    let (nf, m0f, m1f) = (n as f64, m0 as f64, m1 as f64);
    let class = spec.class();
    let big_m = class.holder_m;
    let e_m = big_m.max(variance_spread(spec)).exp();
    let gamma = gamma_relative_to_bar(spec);
    let logs = crate::experiments::block_log_variances(spec);

    // mean tail dropped from the details
    let energy = detail_energy_by_block(spec);
    let tail = kahan_sum((0..m1).map(|l| nf * energy[l] / (2.0 * logs.blocks[l].exp())));
    let tail_bound = e_m * nf * m0f.powf(-2.0 * class.alpha) * gamma * gamma;

    // top coefficients move from σ_ℓ² to σ̄_j²
    let top = kahan_sum((0..m0).map(|j| {
        let d = logs.cells[j] - logs.blocks[j / per];
        0.5 * (d.exp_m1() - d)
    }));

    // Dirichlet split: each V̂_j* is a sum of gammas with scales σ_ℓ²
    let shape_cell = (nf - m0f) / (2.0 * m0f);
    let weights = crate::couplings::WeightTable::new(m0, m1)?;
    let mut split = 0.0;
    let mut split_bound = 0.0;
    for cell in &weights.cells {
        if cell.len() < 2 {
            continue;
        }
        let w: Vec<f64> = cell.iter().map(|&(_, z)| z).collect();
        let s: Vec<f64> = cell.iter().map(|&(l, _)| logs.blocks[l - 1]).collect();
        let r = kl_gamma_sum(&GammaSumSpec::new(w, s, shape_cell)?)?;
        split += r.numeric;
        split_bound += r.paper_bound;
    }

    // recombination: the block sums against Γ with σ_ℓ*², plus the S_ℓ shift to σ_ℓ²
    let shape_block = (nf - m0f) / (2.0 * m1f);
    let penalty = smoothing_penalty(&logs.blocks, n, m0, Some((big_m, class.alpha1)))?;
    let mut recombine = 0.0;
    let mut recombine_bound = 0.0;
    for l in 0..m1 {
        let cells = &logs.cells[l * per..(l + 1) * per];
        let r = kl_gamma_sum(&GammaSumSpec::new(vec![1.0 / per as f64; per], cells.to_vec(), shape_block)?)?;
        recombine += r.numeric + penalty.exact[l];
        let envelope = if l == 0 || l + 1 == m1 {
            penalty.edge_envelope
        } else {
            penalty.interior_envelope
        };
        recombine_bound += r.paper_bound + envelope.unwrap_or(0.0);
    }

    // regression sampling: means and variances per observation
    let fine = spec.fine_scaling();
    let root_n = nf.sqrt();
    let cell_of = |i: usize| i * m0 / n;
    let mean_part = kahan_sum((0..n).map(|i| {
        let j = cell_of(i);
        // √m₀ϑ_{k₀,j} is the cell average of f, equal to √n times the fine scaling average
        let avg = root_n * fine[j * (n / m0)..(j + 1) * (n / m0)].iter().sum::<f64>() / (n / m0) as f64;
        (spec.mean_grid()[i] - avg).powi(2) / (2.0 * logs.cells[j].exp())
    }));
    let var_part = kahan_sum((0..n).map(|i| {
        let d = spec.tau_grid()[i] - logs.cells[cell_of(i)];
        0.5 * (d.exp_m1() - d)
    }));
    let var_root = big_m * nf.sqrt() * (m1f.powf(-class.alpha1) + 1.0 / m0f);

    let terms = vec![
        Term::new("mean tail", tail, Method::ClosedForm, Some(tail_bound), 1.0),
        Term::new("top variance mismatch", top, Method::ClosedForm, Some(m0f * big_m * big_m / (m1f * m1f)), 1.0),
        Term::new("variance split", split, Method::Convolution, Some(split_bound), REMAINDER_SLACK),
        Term::new("recombination", recombine, Method::Convolution, Some(recombine_bound), REMAINDER_SLACK),
        Term::new("sampling mean", mean_part, Method::DirectSum, Some(e_m * nf * m0f.powf(-2.0 * class.alpha) * gamma * gamma), 1.0),
        Term::new("sampling variance", var_part, Method::DirectSum, Some(var_root * var_root), 1.0),
    ];
    let diagnostics = vec![
        diag("split envelope", big_m.powi(4) * nf / m1f.powi(4) + big_m * big_m * m0f / (m1f * m1f)),
        diag(
            "recombination envelope",
            big_m.powi(4) * (nf - m0f) / (16.0 * m1f.powi(4)) + big_m * big_m * m0f / (4.0 * m1f * m1f),
        ),
        diag("smoothing penalty", kahan_sum(penalty.exact.iter().copied())),
    ];
    Ok(DivergenceBreakdown::new(Decomposition::Pipeline7, terms, diagnostics, Vec::new()))
}

/// ‖τ̂ − τ‖₂² for τ̂ interpolating the block averages of τ.
pub fn drift_l2_error(tau: &LogVarianceFixture, m1: usize) -> Result<f64> {
    let knots: Vec<f64> = (0..m1)
        .map(|l| tau.block_average(l as f64 / m1 as f64, (l + 1) as f64 / m1 as f64))
        .collect();
    let opts = QuadOptions {
        abs_tol: 1e-15,
        rel_tol: 1e-12,
        ..QuadOptions::default()
    };
    let mut total = 0.0;
    // τ̂ is linear between consecutive knots, so integrate piece by piece
    let mut edges: Vec<f64> = vec![0.0];
    edges.extend((0..m1).map(|l| (2 * l + 1) as f64 / (2.0 * m1 as f64)));
    edges.push(1.0);
    for w in edges.windows(2) {
        total += integrate(|t| (tau_hat(&knots, t) - tau.eval(t)).powi(2), w[0], w[1], &opts)?.value;
    }
    Ok(total)
}

/// Terms of the log-statistic and process construction.
pub fn decompose_log_process(spec: &ModelSpec) -> Result<DivergenceBreakdown> {
    let (n, m1) = (spec.n() as f64, spec.m1());
    if m1 < 2 {
        return Err(Error::Shape("the process construction needs m1 >= 2".into()));
    }
    let m1f = m1 as f64;
    let class = spec.class();
    let big_m = class.holder_m;
    let logs = m1f * kl_loggamma_vs_normal(n / (2.0 * m1f))?.exact;
    let l2 = drift_l2_error(spec.log_variance(), m1)?;
    let l2_bound = 4.0 * big_m * big_m * m1f.powf(-2.0 * class.alpha1) + big_m * big_m * m1f.powi(-3);
    let terms = vec![
        Term::new("log statistics", logs, Method::ClosedForm, Some(m1f * m1f / n), 1.0),
        Term::new("drift", n / 4.0 * l2, Method::Quadrature, Some(n / 4.0 * l2_bound), 1.0),
    ];
    let diagnostics = vec![diag("drift L2 squared", l2), diag("drift L2 squared bound", l2_bound)];
    Ok(DivergenceBreakdown::new(Decomposition::LogProcess, terms, diagnostics, Vec::new()))
}

/// Σ_ℓ(√n ϑ_{k,ℓ} − f(ℓ/n))²/(2σ²) and its bound ¼γ_k².
pub fn regression_mean_mismatch(spec: &ModelSpec) -> Term {
    let root_n = (spec.n() as f64).sqrt();
    let s2 = spec.sigma() * spec.sigma();
    let value = kahan_sum(
        spec.fine_scaling()
            .iter()
            .zip(spec.mean_grid())
            .map(|(t, f)| (root_n * t - f).powi(2) / (2.0 * s2)),
    );
    let g = spec.class().gamma_at(spec.k());
    Term::new("regression mean mismatch", value, Method::DirectSum, Some(0.25 * g * g), 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Feasible,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub alpha: f64,
    pub alpha1: f64,
    /// ¼((2α−1)/α − 1/α₁).
    pub epsilon: f64,
    /// α > 3/4 and α₁ > max(1, α/(2α−1)).
    pub rate_conditions: bool,
    /// 3/4 < α < 1, 1 < α₁ < 3/2 and ε > 0.
    pub example_range: bool,
    /// A point with ζ₀ ≥ 1/(2α), ζ₁ > 1/(2α₁), ζ₀ + ζ₁ < 1, ζ₀ < 2ζ₁.
    pub zeta: Option<(f64, f64)>,
    /// Exponents of the recommended m₀ = n^{1/(2α)} and m₁ = n^{1/(2α₁)+ε}.
    pub recommended_exponents: (f64, f64),
    pub reasons: Vec<String>,
    pub verdict: Verdict,
}

pub fn feasibility(alpha: f64, alpha1: f64) -> Feasibility {
    let epsilon = 0.25 * ((2.0 * alpha - 1.0) / alpha - 1.0 / alpha1);
    let mut reasons = Vec::new();
    if alpha <= 0.75 {
        reasons.push(format!("alpha = {alpha} does not exceed 3/4"));
    }
    let alpha1_floor = if alpha > 0.5 { (alpha / (2.0 * alpha - 1.0)).max(1.0) } else { f64::INFINITY };
    if alpha1 <= alpha1_floor {
        reasons.push(format!("alpha1 = {alpha1} does not exceed {alpha1_floor}"));
    }
    let zeta0 = 1.0 / (2.0 * alpha);
    let lo = (1.0 / (2.0 * alpha1)).max(zeta0 / 2.0);
    let hi = 1.0 - zeta0;
    let zeta = if lo < hi { Some((zeta0, 0.5 * (lo + hi))) } else { None };
    if zeta.is_none() {
        reasons.push(format!("no zeta1 in ({lo}, {hi}) with zeta0 = {zeta0}"));
    }
    let rate_conditions = alpha > 0.75 && alpha1 > alpha1_floor;
    let example_range = alpha > 0.75 && alpha < 1.0 && alpha1 > 1.0 && alpha1 < 1.5 && epsilon > 0.0;
    let verdict = if rate_conditions && zeta.is_some() {
        Verdict::Feasible
    } else {
        Verdict::Infeasible
    };
    Feasibility {
        alpha,
        alpha1,
        epsilon,
        rate_conditions,
        example_range,
        zeta,
        recommended_exponents: (zeta0, 1.0 / (2.0 * alpha1) + epsilon),
        reasons,
        verdict,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord {
    pub n: usize,
    pub m0: usize,
    pub m1: usize,
    /// 2γ_{k₀}^{½}.
    pub mean_tail: f64,
    /// 2M^{½}n^{−ε/(2(1+ε))} for γ_k = M2^{−εk}.
    pub mean_tail_geometric: Option<f64>,
    /// 2M^{½}γ_{k₀} for γ_k = M2^{−εk}.
    pub mean_tail_closing: Option<f64>,
    /// 2m₁^{½}m₀^{½}n^{−½} + e^{M/2}m₀^{−α}n^{½}γ_{k₀}.
    pub variance_stage_forward: f64,
    /// m₁^{½}m₀^{½}n^{−½} + e^{M/2}m₀^{−α}n^{½}γ_{k₀}.
    pub variance_stage_reverse: f64,
    /// Five bridge terms times 2e^{M/2}.
    pub regression_bridge: f64,
    pub log_variance_process: f64,
    pub feasibility: Feasibility,
}

pub fn evaluate_bounds(spec: &ModelSpec) -> BoundRecord {
    let (n, m0, m1) = (spec.n() as f64, spec.m0() as f64, spec.m1() as f64);
    let class = spec.class();
    let (alpha, alpha1, big_m) = (class.alpha, class.alpha1, class.holder_m);
    let gamma = class.gamma_at(spec.k0());
    let root_n = n.sqrt();
    let (mean_tail_geometric, mean_tail_closing) = match class.gamma {
        GammaSequence::Geometric { scale, decay } => (
            Some(2.0 * scale.sqrt() * n.powf(-decay / (2.0 * (1.0 + decay)))),
            Some(2.0 * scale.sqrt() * gamma),
        ),
        GammaSequence::Table { .. } => (None, None),
    };
    let half = (0.5 * big_m).exp();
    let mean_term = half * m0.powf(-alpha) * root_n * gamma;
    let cross = m1.sqrt() * m0.sqrt() / root_n;
    BoundRecord {
        n: spec.n(),
        m0: spec.m0(),
        m1: spec.m1(),
        mean_tail: 2.0 * gamma.sqrt(),
        mean_tail_geometric,
        mean_tail_closing,
        variance_stage_forward: 2.0 * cross + mean_term,
        variance_stage_reverse: cross + mean_term,
        regression_bridge: 2.0
            * half
            * (root_n * m0.powf(-alpha) * gamma
                + root_n * m1.powf(-alpha1)
                + m0.sqrt() / m1
                + root_n / m0
                + root_n * m1.powf(-1.5)),
        log_variance_process: m1 / root_n + 2.0 * big_m * root_n * m1.powf(-alpha1) + big_m * root_n * m1.powf(-1.5),
        feasibility: feasibility(alpha, alpha1),
    }
}

/// Coarse level k₀ whose m = 2^{k₀} is nearest to nγ_{k₀} on the log scale.
pub fn choose_coarse_level(k: u32, class: &ClassSpec) -> Result<u32> {
    if k < 2 {
        return Err(Error::Shape(format!("n = 2^{k} has no admissible coarse level")));
    }
    let gap = |k0: u32| ((k as f64 + class.gamma_at(k0).log2()) - k0 as f64).abs();
    Ok((1..k)
        .min_by(|a, b| gap(*a).partial_cmp(&gap(*b)).expect("finite gamma"))
        .expect("nonempty range"))
}

/// Summary features of a draw used by the two-sample checks.
pub fn draw_features(draw: &ExperimentDraw) -> Vec<f64> {
    let moments = |xs: &[f64], scale: f64| {
        let len = xs.len().max(1) as f64;
        let z: Vec<f64> = xs.iter().map(|x| x * scale).collect();
        vec![
            z.iter().sum::<f64>() / len,
            z.iter().map(|v| v * v).sum::<f64>() / len,
            z.iter().map(|v| v.powi(4)).sum::<f64>() / len,
            z.iter().fold(0.0f64, |a, v| a.max(v.abs())),
            z.first().copied().unwrap_or(0.0),
        ]
    };
    match &draw.values {
        DrawValues::Regression { y } => moments(y, 1.0),
        DrawValues::Sequence { top, detail } | DrawValues::Mixed { top, detail, .. } => {
            let n = (top.len() + detail.len()) as f64;
            let mut f = Vec::new();
            if let Some(v) = draw.variances() {
                f.push(v.iter().sum::<f64>() / v.len() as f64);
            }
            f.extend(moments(detail, n.sqrt()));
            f.push(top[0] * n.sqrt());
            f
        }
        DrawValues::Process { dv, dy } => {
            let cells = dv.len() as f64;
            let mut f = moments(dv, cells.sqrt());
            f.extend(moments(dy, cells.sqrt()));
            f
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleReport {
    pub samples: (usize, usize),
    pub ks: Vec<KsResult>,
    /// Smallest KS p-value times the number of features, capped at one.
    pub bonferroni_p: f64,
    pub mean_difference: Vec<f64>,
    /// Largest absolute entry of the difference of feature covariances.
    pub covariance_difference: f64,
    pub auc: AucEstimate,
}

impl TwoSampleReport {
    pub fn passes(&self, level: f64) -> bool {
        self.bonferroni_p > level
    }
}

fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = rows[0].len();
    let len = rows.len() as f64;
    let means: Vec<f64> = (0..d).map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / len).collect();
    (0..d)
        .map(|a| {
            (0..d)
                .map(|b| rows.iter().map(|r| (r[a] - means[a]) * (r[b] - means[b])).sum::<f64>() / (len - 1.0).max(1.0))
                .collect()
        })
        .collect()
}

const STUMP_QUANTILES: usize = 9;

/// Weighted quantile stumps per feature, fit on one half and scored on the other.
fn stump_auc(pos: &[Vec<f64>], neg: &[Vec<f64>]) -> AucEstimate {
    let split = |rows: &[Vec<f64>]| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (i, r) in rows.iter().enumerate() {
            if i % 2 == 0 { train.push(r.clone()) } else { test.push(r.clone()) }
        }
        (train, test)
    };
    let (pos_train, pos_test) = split(pos);
    let (neg_train, neg_test) = split(neg);
    if pos_test.is_empty() || neg_test.is_empty() {
        return auc(&[0.0], &[0.0]);
    }
    let d = pos[0].len();
    let mut stumps = Vec::new();
    for f in 0..d {
        let mut pooled: Vec<f64> = pos_train.iter().chain(&neg_train).map(|r| r[f]).collect();
        pooled.sort_by(|a, b| a.total_cmp(b));
        for q in 1..=STUMP_QUANTILES {
            let t = pooled[(q * pooled.len() / (STUMP_QUANTILES + 1)).min(pooled.len() - 1)];
            let above = |rows: &[Vec<f64>]| rows.iter().filter(|r| r[f] > t).count() as f64 / rows.len() as f64;
            let w = above(&pos_train) - above(&neg_train);
            stumps.push((f, t, w));
        }
    }
    let score = |r: &Vec<f64>| -> f64 {
        stumps.iter().filter(|&&(f, t, _)| r[f] > t).map(|&(_, _, w)| w).sum()
    };
    let sp: Vec<f64> = pos_test.iter().map(score).collect();
    let sn: Vec<f64> = neg_test.iter().map(score).collect();
    auc(&sp, &sn)
}

/// Compare two sets of draws of the same shape.
pub fn two_sample_report(coupled: &[ExperimentDraw], native: &[ExperimentDraw]) -> Result<TwoSampleReport> {
    if coupled.is_empty() || native.is_empty() {
        return Err(Error::Shape("two-sample report needs draws on both sides".into()));
    }
    let a: Vec<Vec<f64>> = coupled.iter().map(draw_features).collect();
    let b: Vec<Vec<f64>> = native.iter().map(draw_features).collect();
    let d = a[0].len();
    if a.iter().chain(&b).any(|r| r.len() != d) {
        return Err(Error::Shape("draws have different shapes".into()));
    }
    let column = |rows: &[Vec<f64>], i: usize| rows.iter().map(|r| r[i]).collect::<Vec<f64>>();
    let ks: Vec<KsResult> = (0..d).map(|i| ks_two_sample(&column(&a, i), &column(&b, i))).collect();
    let min_p = ks.iter().map(|k| k.p_value).fold(1.0, f64::min);
    let mean_difference = (0..d)
        .map(|i| crate::stats::mean(&column(&a, i)) - crate::stats::mean(&column(&b, i)))
        .collect();
    let (ca, cb) = (covariance(&a), covariance(&b));
    let covariance_difference = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| (ca[i][j] - cb[i][j]).abs())
        .fold(0.0, f64::max);
    Ok(TwoSampleReport {
        samples: (a.len(), b.len()),
        bonferroni_p: (min_p * d as f64).min(1.0),
        ks,
        mean_difference,
        covariance_difference,
        auc: stump_auc(&a, &b),
    })
}

/// Inputs shared by every cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTemplate {
    pub mean: MeanFixture,
    pub class: ClassSpec,
    pub sigma: f64,
}

impl SweepTemplate {
    /// Constant-variance spec at n = 2^k with the balanced coarse level.
    pub fn spec(&self, k: u32) -> Result<ModelSpec> {
        let k0 = choose_coarse_level(k, &self.class)?;
        ModelSpec::new(ModelConfig {
            k,
            k0,
            k1: 0,
            mean: self.mean.clone(),
            log_variance: LogVarianceFixture::Constant {
                level: 2.0 * self.sigma.ln(),
            },
            class: self.class.clone(),
            sigma: self.sigma,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub m: usize,
    pub m0: usize,
    pub m1: usize,
    pub zeta0: f64,
    pub zeta1: f64,
    /// 3γ_{k₀}.
    pub bound: f64,
    pub kl_total: f64,
    pub tv_surrogate: f64,
    pub auc: Option<AucEstimate>,
    pub bonferroni_p: Option<f64>,
    /// Slope of log √total against log n over the rows so far.
    pub slope_partial: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// log total KL against log n.
    pub kl_slope: Option<LineFit>,
    /// log 3γ_{k₀} against log n.
    pub bound_slope: Option<LineFit>,
}

pub const SWEEP_CSV_HEADER: &str = "n,m,m0,m1,zeta0,zeta1,bound,kl_total,tv_surrogate,auc,auc_lo,auc_hi,slope_partial";

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let (a, lo, hi) = r.auc.map_or((f64::NAN, f64::NAN, f64::NAN), |a| (a.auc, a.lower, a.upper));
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.n, r.m, r.m0, r.m1, r.zeta0, r.zeta1, r.bound, r.kl_total, r.tv_surrogate, a, lo, hi, r.slope_partial
            ));
        }
        out
    }
}

/// Largest n a sweep accepts.
pub const MAX_SWEEP_LEVEL: u32 = 20;

/// Exact decomposition totals across n = 2^k, with optional coupled-versus-native
/// draws (`replicates` per side; zero skips the empirical part).
pub fn rate_sweep(template: &SweepTemplate, levels: &[u32], replicates: usize, seed: u64) -> Result<SweepReport> {
    if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Shape("sweep levels must be nonempty and ascending".into()));
    }
    if let Some(&k) = levels.iter().find(|&&k| k > MAX_SWEEP_LEVEL) {
        return Err(Error::Resource(format!("n = 2^{k} exceeds the sweep limit 2^{MAX_SWEEP_LEVEL}")));
    }
    let base = RngStream::new(seed, 0);
    let cells: Vec<Result<SweepRow>> = levels
        .par_iter()
        .enumerate()
        .map(|(idx, &k)| {
            let start = Instant::now();
            let spec = template.spec(k)?;
            let breakdown = decompose_theorem1(&spec)?;
            let (auc_est, p) = if replicates > 0 {
                let stream = base.substream(idx as u64);
                let coupled: Vec<ExperimentDraw> = (0..replicates)
                    .map(|r| {
                        let mut rng = stream.substream(2 * r as u64);
                        let p = sample_sequence(&spec, false, &mut rng);
                        pbar_to_q(&p, &spec, &mut rng).map(|o| o.draw)
                    })
                    .collect::<Result<_>>()?;
                let native: Vec<ExperimentDraw> = (0..replicates)
                    .map(|r| sample_q(&spec, false, &mut stream.substream(2 * r as u64 + 1)))
                    .collect();
                let report = two_sample_report(&coupled, &native)?;
                (Some(report.auc), Some(report.bonferroni_p))
            } else {
                (None, None)
            };
            let ln_n = (spec.n() as f64).ln();
            Ok(SweepRow {
                n: spec.n(),
                m: spec.m0(),
                m0: spec.m0(),
                m1: spec.m1(),
                zeta0: (spec.m0() as f64).ln() / ln_n,
                zeta1: (spec.m1() as f64).ln() / ln_n,
                bound: 3.0 * spec.class().gamma_at(spec.k0()),
                kl_total: breakdown.total,
                tv_surrogate: breakdown.tv_surrogate,
                auc: auc_est,
                bonferroni_p: p,
                slope_partial: f64::NAN,
                wall_seconds: start.elapsed().as_secs_f64(),
            })
        })
        .collect();
    let mut rows = cells.into_iter().collect::<Result<Vec<_>>>()?;
    let ln_n: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ln_tv: Vec<f64> = rows.iter().map(|r| r.tv_surrogate.ln()).collect();
    for i in 1..rows.len() {
        rows[i].slope_partial = fit_line(&ln_n[..=i], &ln_tv[..=i]).slope;
    }
    let (kl_slope, bound_slope) = if rows.len() >= 3 {
        let ln_kl: Vec<f64> = rows.iter().map(|r| r.kl_total.ln()).collect();
        let ln_b: Vec<f64> = rows.iter().map(|r| r.bound.ln()).collect();
        (Some(fit_line(&ln_n, &ln_kl)), Some(fit_line(&ln_n, &ln_b)))
    } else {
        (None, None)
    };
    Ok(SweepReport {
        rows,
        kl_slope,
        bound_slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::sample_regression;

    fn class(holder_m: f64) -> ClassSpec {
        ClassSpec {
            alpha: 1.0,
            alpha1: 2.0,
            holder_m,
            gamma: GammaSequence::Geometric {
                scale: 2.0 * std::f64::consts::PI,
                decay: 0.0,
            },
        }
    }

    fn spec(k: u32, k0: u32, k1: u32, mean: MeanFixture, tau: LogVarianceFixture) -> ModelSpec {
        let holder_m = tau.holder_constant();
        ModelSpec::new(ModelConfig {
            k,
            k0,
            k1,
            mean,
            log_variance: tau,
            class: class(holder_m),
            sigma: 1.0,
        })
        .unwrap()
    }

    fn sine() -> MeanFixture {
        MeanFixture::Sine { amplitude: 1.0 }
    }

    #[test]
    fn forward_decomposition_zero_mean_is_closed_form() {
        let s = spec(10, 5, 0, MeanFixture::Zero, LogVarianceFixture::Constant { level: 0.0 });
        let b = decompose_theorem1(&s).unwrap();
        let v = b.term("variance statistic").unwrap();
        assert_eq!(v.method, Method::ClosedForm);
        assert_eq!(b.term("detail coefficients").unwrap().value, 0.0);
        assert!(b.all_verified());
        assert!((b.tv_surrogate - b.total.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn forward_decomposition_sine_terms_within_bounds() {
        let s = spec(10, 6, 0, sine(), LogVarianceFixture::Constant { level: 0.0 });
        let b = decompose_theorem1(&s).unwrap();
        assert!(b.all_verified(), "{b:#?}");
        assert!(b.diagnostic("noncentrality").unwrap() > 0.0);
    }

    #[test]
    fn blockwise_with_one_block_matches_forward() {
        let s = spec(9, 5, 0, sine(), LogVarianceFixture::Constant { level: 0.0 });
        let a = decompose_theorem1(&s).unwrap();
        let b = decompose_lemma2(&s).unwrap();
        for name in ["variance statistic", "top coefficients", "detail coefficients"] {
            let (x, y) = (a.term(name).unwrap().value, b.term(name).unwrap().value);
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{name}: {x} vs {y}");
        }
    }

    #[test]
    fn blockwise_blocks_sum_to_terms() {
        let s = spec(10, 5, 2, sine(), LogVarianceFixture::Linear { slope: 1.0, intercept: 0.0 });
        let b = decompose_lemma2(&s).unwrap();
        assert_eq!(b.blocks.len(), 4);
        let v: f64 = b.blocks.iter().map(|x| x.variance).sum();
        assert!((v - b.term("variance statistic").unwrap().value).abs() < 1e-14);
        assert!(b.all_verified(), "{b:#?}");
    }

    #[test]
    fn pipeline7_constant_variance_has_no_variance_terms() {
        let s = spec(10, 5, 2, sine(), LogVarianceFixture::Constant { level: 0.3 });
        let b = decompose_pipeline7(&s).unwrap();
        for name in ["top variance mismatch", "variance split", "recombination", "sampling variance"] {
            assert!(b.term(name).unwrap().value.abs() < 1e-15, "{name}");
        }
        assert!(b.term("mean tail").unwrap().value > 0.0);
    }

    #[test]
    fn pipeline7_quadratic_within_bounds() {
        let s = spec(12, 6, 3, MeanFixture::Zero, LogVarianceFixture::Quadratic { scale: 1.0 });
        let b = decompose_pipeline7(&s).unwrap();
        assert!(b.all_verified(), "{b:#?}");
        assert!(b.term("variance split").unwrap().value > 0.0);
    }

    #[test]
    fn log_process_within_bounds_and_exact_for_constant() {
        let s = spec(12, 6, 3, MeanFixture::Zero, LogVarianceFixture::Quadratic { scale: 1.0 });
        let b = decompose_log_process(&s).unwrap();
        assert!(b.all_verified(), "{b:#?}");
        // a constant τ is reproduced exactly by the interpolant
        let flat = drift_l2_error(&LogVarianceFixture::Constant { level: 0.7 }, 8).unwrap();
        assert!(flat < 1e-28);
    }

    #[test]
    fn regression_mismatch_within_quarter_gamma_squared() {
        let s = spec(10, 5, 0, sine(), LogVarianceFixture::Constant { level: 0.0 });
        let t = regression_mean_mismatch(&s);
        assert!(t.value > 0.0);
        assert_eq!(t.verified(), Some(true));
    }

    #[test]
    fn feasibility_verdicts() {
        let f = feasibility(1.0, 2.0);
        assert_eq!(f.verdict, Verdict::Feasible);
        let (z0, z1) = f.zeta.unwrap();
        assert!((z0 - 0.5).abs() < 1e-15 && (z1 - 0.375).abs() < 1e-15);
        assert!(!f.example_range);

        let low = feasibility(0.7, 2.0);
        assert_eq!(low.verdict, Verdict::Infeasible);
        assert!(low.reasons.iter().any(|r| r.contains("3/4")));

        let f = feasibility(0.8, 1.3);
        assert_eq!(f.verdict, Verdict::Infeasible);
        assert!(f.zeta.is_none());

        let f = feasibility(0.9, 1.4);
        assert_eq!(f.verdict, Verdict::Feasible);
        assert!(f.example_range && f.epsilon > 0.0);
    }

    #[test]
    fn bounds_record_orders_forward_and_reverse() {
        let s = spec(12, 6, 3, sine(), LogVarianceFixture::Quadratic { scale: 1.0 });
        let r = evaluate_bounds(&s);
        assert!(r.variance_stage_forward > r.variance_stage_reverse);
        assert!(r.mean_tail_geometric.is_some());
        assert!(r.regression_bridge > 0.0 && r.log_variance_process > 0.0);
    }

    #[test]
    fn coarse_level_balances_m_against_n_gamma() {
        let c = ClassSpec {
            alpha: 0.75,
            alpha1: 2.0,
            holder_m: 0.0,
            gamma: GammaSequence::Geometric { scale: 1.0, decay: 0.5 },
        };
        // n γ_{k0} = 2^{16 − k0/2} = 2^{k0} at k0 = 32/3
        assert_eq!(choose_coarse_level(16, &c).unwrap(), 11);
        assert!(choose_coarse_level(1, &c).is_err());
    }

    #[test]
    fn identical_samples_are_null() {
        let s = spec(6, 3, 0, sine(), LogVarianceFixture::Constant { level: 0.0 });
        let draws: Vec<ExperimentDraw> = (0..200)
            .map(|i| sample_regression(&s, false, &mut RngStream::new(5, i)))
            .collect();
        let r = two_sample_report(&draws, &draws).unwrap();
        assert_eq!(r.auc.auc, 0.5);
        assert_eq!(r.bonferroni_p, 1.0);
        assert!(r.mean_difference.iter().all(|&d| d == 0.0));
        assert_eq!(r.covariance_difference, 0.0);
    }

    #[test]
    fn sweep_rows_and_csv() {
        let t = SweepTemplate {
            mean: sine(),
            class: ClassSpec {
                alpha: 0.75,
                alpha1: 2.0,
                holder_m: 0.0,
                gamma: GammaSequence::Geometric {
                    scale: 2.0 * std::f64::consts::PI,
                    decay: 0.25,
                },
            },
            sigma: 1.0,
        };
        let r = rate_sweep(&t, &[6, 7, 8], 50, 11).unwrap();
        assert_eq!(r.rows.len(), 3);
        assert!(r.rows[0].slope_partial.is_nan() && r.rows[2].slope_partial.is_finite());
        assert!(r.kl_slope.is_some());
        let csv = r.to_csv();
        assert!(csv.starts_with(SWEEP_CSV_HEADER));
        assert_eq!(csv.lines().count(), 4);
        let again = rate_sweep(&t, &[6, 7, 8], 50, 11).unwrap();
        assert_eq!(r.rows[1].auc, again.rows[1].auc);
        assert!(rate_sweep(&t, &[21], 0, 1).is_err());
    }
}
