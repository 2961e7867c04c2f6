//! The seven experiments, sampled from a validated [`ModelSpec`].

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::divergence::{smooth_log_variances, SmoothedLogVariances};
use crate::error::{positive, Error, Result};
use crate::fixtures::{ClassSpec, LogVarianceFixture, MeanFixture};
use crate::quadrature::gauss_legendre5;
use crate::samplers::{draw_gamma, RngStream};
use crate::wavelet::{besov_tail_with_remainder, function_ladder, haar_synthesize, BesovMode, HaarLadder};

/// Largest supported sample size exponent.
pub const MAX_LEVEL: u32 = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// n = 2^k
    pub k: u32,
    /// m₀ = 2^k0
    pub k0: u32,
    /// m₁ = 2^k1
    pub k1: u32,
    pub mean: MeanFixture,
    pub log_variance: LogVarianceFixture,
    pub class: ClassSpec,
    /// Standard deviation for the constant-variance experiments.
    pub sigma: f64,
}

/// A validated model with its derived coefficient and variance tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelConfig", into = "ModelConfig")]
pub struct ModelSpec {
    config: ModelConfig,
    mean_ladder: HaarLadder,
    fine_scaling: Vec<f64>,
    mean_grid: Vec<f64>,
    tau_grid: Vec<f64>,
    block_logs: Vec<f64>,
    smoothed: SmoothedLogVariances,
    hash: String,
}

impl TryFrom<ModelConfig> for ModelSpec {
    type Error = Error;
    fn try_from(c: ModelConfig) -> Result<Self> {
        ModelSpec::new(c)
    }
}

impl From<ModelSpec> for ModelConfig {
    fn from(s: ModelSpec) -> Self {
        s.config
    }
}

impl ModelSpec {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let ModelConfig { k, k0, k1, .. } = config;
        if k > MAX_LEVEL {
            return Err(Error::Resource(format!("n = 2^{k} exceeds 2^{MAX_LEVEL}")));
        }
        if k0 >= k {
            return Err(Error::LevelOrder { coarse: k0, fine: k });
        }
        if k1 >= k0 {
            return Err(Error::Shape(format!("m0 = 2^{k0} is not an even multiple of m1 = 2^{k1}")));
        }
        positive("sigma", config.sigma)?;
        config.class.validate()?;
        config.mean.validate()?;
        config.log_variance.validate()?;

        let n = 1usize << k;
        let m1 = 1usize << k1;
        let cutoff = config.mean.detail_cutoff().unwrap_or(0);
        let f = |t: f64| config.mean.eval(t);
        let deep = function_ladder(f, k0, k.max(cutoff), cutoff)?;
        let mean_ladder = deep.truncated(k)?;

        // membership in the index-½ classes, relative to σ
        let beyond = if config.mean.detail_cutoff().is_some() { None } else { config.mean.holder() };
        for level in k0..=k {
            let g = config.class.gamma_at(level) * config.sigma * (1.0 + 1e-9);
            for mode in [BesovMode::L2L2, BesovMode::SupL1] {
                let tail = besov_tail_with_remainder(&deep, 0.5, mode, level, beyond)?;
                if tail > g {
                    return Err(Error::InvalidParameter {
                        name: "mean tail relative to gamma*sigma",
                        value: tail / g,
                    });
                }
            }
        }

        let fine_scaling = haar_synthesize(&mean_ladder);
        let mean_grid = config.mean.grid(n);
        let tau_grid = config.log_variance.grid(n);
        let block_logs: Vec<f64> = (0..m1)
            .map(|l| {
                config
                    .log_variance
                    .block_average(l as f64 / m1 as f64, (l + 1) as f64 / m1 as f64)
            })
            .collect();
        let smoothed = smooth_log_variances(&block_logs, 1usize << k0)?;
        let json = serde_json::to_string(&config).expect("config serializes");
        let hash = Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        Ok(Self {
            config,
            mean_ladder,
            fine_scaling,
            mean_grid,
            tau_grid,
            block_logs,
            smoothed,
            hash,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn k(&self) -> u32 {
        self.config.k
    }

    pub fn k0(&self) -> u32 {
        self.config.k0
    }

    pub fn k1(&self) -> u32 {
        self.config.k1
    }

    pub fn n(&self) -> usize {
        1usize << self.config.k
    }

    pub fn m0(&self) -> usize {
        1usize << self.config.k0
    }

    pub fn m1(&self) -> usize {
        1usize << self.config.k1
    }

    pub fn sigma(&self) -> f64 {
        self.config.sigma
    }

    pub fn class(&self) -> &ClassSpec {
        &self.config.class
    }

    pub fn mean(&self) -> &MeanFixture {
        &self.config.mean
    }

    pub fn log_variance(&self) -> &LogVarianceFixture {
        &self.config.log_variance
    }

    /// Continuous coefficients ϑ_{k0,·} and θ_{i,·}, k0 ≤ i < k.
    pub fn mean_ladder(&self) -> &HaarLadder {
        &self.mean_ladder
    }

    /// Level-k scaling coefficients ϑ_{k,·}.
    pub fn fine_scaling(&self) -> &[f64] {
        &self.fine_scaling
    }

    /// f(i/n), i = 1..n.
    pub fn mean_grid(&self) -> &[f64] {
        &self.mean_grid
    }

    /// τ(i/n), i = 1..n.
    pub fn tau_grid(&self) -> &[f64] {
        &self.tau_grid
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// log σ̄² = ∫ τ.
    pub fn log_sigma_bar_sq(&self) -> f64 {
        self.config.log_variance.block_average(0.0, 1.0)
    }

    /// Same shape with zero mean, unit variance and flat log-variance.
    pub fn placeholder(&self) -> Result<ModelSpec> {
        ModelSpec::new(ModelConfig {
            mean: MeanFixture::Zero,
            log_variance: LogVarianceFixture::Constant { level: 0.0 },
            sigma: 1.0,
            ..self.config.clone()
        })
    }

    /// Number of detail coefficients, n − m₀.
    pub fn detail_len(&self) -> usize {
        self.n() - self.m0()
    }
}

/// Zero-based block of coefficient `j0` at `level` (level ≥ k1).
pub fn block_of(level: u32, j0: usize, k1: u32) -> usize {
    j0 >> (level - k1)
}

/// Block of each detail coefficient in level-major order.
pub fn detail_blocks(spec: &ModelSpec) -> Vec<usize> {
    (spec.k0()..spec.k())
        .flat_map(|i| (0..1usize << i).map(move |j| (i, j)))
        .map(|(i, j)| block_of(i, j, spec.k1()))
        .collect()
}

/// Block of each top coefficient.
pub fn top_blocks(spec: &ModelSpec) -> Vec<usize> {
    (0..spec.m0()).map(|j| block_of(spec.k0(), j, spec.k1())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockLogVariances {
    /// log σ_ℓ², ℓ = 1..m₁.
    pub blocks: Vec<f64>,
    /// log σ̄_j², j = 1..m₀.
    pub cells: Vec<f64>,
    /// log σ*_ℓ², ℓ = 1..m₁.
    pub composite: Vec<f64>,
}

pub fn block_log_variances(spec: &ModelSpec) -> BlockLogVariances {
    BlockLogVariances {
        blocks: spec.block_logs.clone(),
        cells: spec.smoothed.cells.clone(),
        composite: spec.smoothed.composite.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    P,
    PBar,
    Q,
    PTilde,
    QTilde,
    PCheck,
    QCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DrawValues {
    /// Y_i, i = 1..n.
    Regression { y: Vec<f64> },
    /// Top coefficients and level-major details.
    Sequence { top: Vec<f64>, detail: Vec<f64> },
    /// Variance statistics followed by conditionally normal coefficients.
    Mixed {
        variances: Vec<f64>,
        top: Vec<f64>,
        detail: Vec<f64>,
    },
    /// Increments of V(t) and Y(t) on a uniform grid.
    Process { dv: Vec<f64>, dy: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentDraw {
    pub label: Label,
    pub values: DrawValues,
    pub spec_hash: String,
    pub seed: u64,
    pub stream_id: u64,
}

impl ExperimentDraw {
    pub fn new(label: Label, values: DrawValues, spec: &ModelSpec, rng: &RngStream) -> Self {
        Self {
            label,
            values,
            spec_hash: spec.hash().to_string(),
            seed: rng.seed(),
            stream_id: rng.stream_id(),
        }
    }

    pub fn regression(&self) -> Option<&[f64]> {
        match &self.values {
            DrawValues::Regression { y } => Some(y),
            _ => None,
        }
    }

    pub fn top(&self) -> Option<&[f64]> {
        match &self.values {
            DrawValues::Sequence { top, .. } | DrawValues::Mixed { top, .. } => Some(top),
            _ => None,
        }
    }

    pub fn detail(&self) -> Option<&[f64]> {
        match &self.values {
            DrawValues::Sequence { detail, .. } | DrawValues::Mixed { detail, .. } => Some(detail),
            _ => None,
        }
    }

    pub fn variances(&self) -> Option<&[f64]> {
        match &self.values {
            DrawValues::Mixed { variances, .. } => Some(variances),
            _ => None,
        }
    }
}

fn block_sds(spec: &ModelSpec, blocked: bool) -> Vec<f64> {
    if blocked {
        spec.block_logs.iter().map(|l| (0.5 * l).exp()).collect()
    } else {
        vec![spec.sigma(); spec.m1()]
    }
}

/// Y_i = f(i/n) + σξ_i, or σ(i/n)ξ_i when heteroscedastic.
pub fn sample_regression(spec: &ModelSpec, heteroscedastic: bool, rng: &mut RngStream) -> ExperimentDraw {
    let y = spec
        .mean_grid
        .iter()
        .zip(&spec.tau_grid)
        .map(|(f, tau)| {
            let sd = if heteroscedastic { (0.5 * tau).exp() } else { spec.sigma() };
            f + sd * rng.standard_normal()
        })
        .collect();
    let label = if heteroscedastic { Label::PCheck } else { Label::P };
    ExperimentDraw::new(label, DrawValues::Regression { y }, spec, rng)
}

/// Coefficients with variance σ²/n, or σ_ℓ²/n by support block.
pub fn sample_sequence(spec: &ModelSpec, blocked: bool, rng: &mut RngStream) -> ExperimentDraw {
    let sds = block_sds(spec, blocked);
    let root_n = (spec.n() as f64).sqrt();
    let ladder = &spec.mean_ladder;
    let top = ladder
        .scaling()
        .iter()
        .zip(top_blocks(spec))
        .map(|(mean, b)| mean + sds[b] * (rng.standard_normal() / root_n))
        .collect();
    let detail = ladder
        .flat_details()
        .iter()
        .zip(detail_blocks(spec))
        .map(|(mean, b)| mean + sds[b] * (rng.standard_normal() / root_n))
        .collect();
    let label = if blocked { Label::PTilde } else { Label::PBar };
    ExperimentDraw::new(label, DrawValues::Sequence { top, detail }, spec, rng)
}

/// Variance statistics, then coefficients normal given them with variance V/n.
pub fn sample_q(spec: &ModelSpec, blocked: bool, rng: &mut RngStream) -> ExperimentDraw {
    let n = spec.n() as f64;
    let (count, vars): (usize, Vec<f64>) = if blocked {
        (spec.m1(), spec.block_logs.iter().map(|l| (0.5 * l).exp()).map(|s| s * s).collect())
    } else {
        (1, vec![spec.sigma() * spec.sigma()])
    };
    let c = count as f64;
    let variances: Vec<f64> = vars
        .iter()
        .map(|v| draw_gamma(n / (2.0 * c), 2.0 * v * c / n, rng).expect("positive gamma parameters"))
        .collect();
    let sds: Vec<f64> = variances.iter().map(|v| (v / n).sqrt()).collect();
    let sd_of = |b: usize| if blocked { sds[b] } else { sds[0] };
    let ladder = &spec.mean_ladder;
    let top = ladder
        .scaling()
        .iter()
        .zip(top_blocks(spec))
        .map(|(mean, b)| mean + sd_of(b) * rng.standard_normal())
        .collect();
    let detail = ladder
        .flat_details()
        .iter()
        .zip(detail_blocks(spec))
        .map(|(mean, b)| mean + sd_of(b) * rng.standard_normal())
        .collect();
    let label = if blocked { Label::QTilde } else { Label::Q };
    ExperimentDraw::new(label, DrawValues::Mixed { variances, top, detail }, spec, rng)
}

/// Default grid for the continuous experiments.
pub fn default_grid_cells(spec: &ModelSpec) -> usize {
    (1usize << 12).max(16 * spec.m1())
}

/// Increments of dV = τ dt + √(2/n) dW₂ and dY = f dt + Z_ℓ n^{−½} dW₁.
pub fn sample_q_check(spec: &ModelSpec, cells: usize, rng: &mut RngStream) -> Result<ExperimentDraw> {
    let m1 = spec.m1();
    if !cells.is_power_of_two() || cells < m1 {
        return Err(Error::Shape(format!("{cells} cells do not refine {m1} blocks")));
    }
    let n = spec.n() as f64;
    let dt = 1.0 / cells as f64;
    let tau = spec.log_variance();
    let dv: Vec<f64> = (0..cells)
        .map(|c| {
            let (a, b) = (c as f64 * dt, (c + 1) as f64 * dt);
            tau.block_average(a, b) * dt + (2.0 * dt / n).sqrt() * rng.standard_normal()
        })
        .collect();
    let per = cells / m1;
    let z: Vec<f64> = dv
        .chunks(per)
        .map(|block| (0.5 * m1 as f64 * block.iter().sum::<f64>()).exp())
        .collect();
    let mean = spec.mean();
    let dy: Vec<f64> = (0..cells)
        .map(|c| {
            let (a, b) = (c as f64 * dt, (c + 1) as f64 * dt);
            let drift = gauss_legendre5(|t| mean.eval(t), a, b);
            drift + z[c / per] * (dt / n).sqrt() * rng.standard_normal()
        })
        .collect();
    Ok(ExperimentDraw::new(Label::QCheck, DrawValues::Process { dv, dy }, spec, rng))
}
