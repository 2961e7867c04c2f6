//! Randomized, parameter-free maps between experiment draws.
//!
//! Every function here reads only shape metadata (n, m₀, m₁, levels) from the
//! [`ModelSpec`]; the mean and variance functions are never consulted.

use serde::{Deserialize, Serialize};

use crate::divergence::{check_block_ratio, hat_weight};
use crate::error::{Error, Result};
use crate::experiments::{detail_blocks, DrawValues, ExperimentDraw, Label, ModelSpec};
use crate::samplers::{draw_bridge_process, draw_conditional_gaussians, draw_dirichlet, kernel_masses, RngStream};
use crate::wavelet::{haar_analyze, haar_synthesize, HaarLadder};

/// Hat weights ζ_{ℓ,j} and δ_{ℓ,j} = (m₁/m₀)ζ_{ℓ,j} on the overlap windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    pub m0: usize,
    pub m1: usize,
    /// For each cell j (0-based), the blocks (1-based) with ζ > 0 and their ζ.
    pub cells: Vec<Vec<(usize, f64)>>,
}

impl WeightTable {
    pub fn new(m0: usize, m1: usize) -> Result<Self> {
        check_block_ratio(m0, m1)?;
        let cells = (1..=m0)
            .map(|j| {
                (1..=m1)
                    .map(|l| (l, hat_weight(l, j, m0, m1)))
                    .filter(|&(_, z)| z > 0.0)
                    .collect()
            })
            .collect();
        Ok(Self { m0, m1, cells })
    }

    pub fn zeta(&self, block: usize, cell: usize) -> f64 {
        self.cells[cell - 1]
            .iter()
            .find(|&&(l, _)| l == block)
            .map_or(0.0, |&(_, z)| z)
    }

    pub fn delta(&self, block: usize, cell: usize) -> f64 {
        self.m1 as f64 / self.m0 as f64 * self.zeta(block, cell)
    }

    /// Cells (1-based) and δ for one block, ascending.
    pub fn window(&self, block: usize) -> Vec<(usize, f64)> {
        let scale = self.m1 as f64 / self.m0 as f64;
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(j, ws)| {
                ws.iter()
                    .find(|&&(l, _)| l == block)
                    .map(|&(_, z)| (j + 1, scale * z))
            })
            .collect()
    }
}

/// Intermediate statistics carried alongside a coupled draw.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Intermediates {
    /// V̂ or V̂_ℓ.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vhat: Vec<f64>,
    /// V̂_j*.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vstar: Vec<f64>,
    /// τ̂ averaged over each grid cell.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub drift: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingOutput {
    pub draw: ExperimentDraw,
    pub intermediates: Intermediates,
}

/// Normalizer for the per-block variance statistic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockNormalizer {
    /// nm₁/(n − m₀): unbiased for σ_ℓ².
    #[default]
    Unbiased,
    /// nm₁/(n − m₁).
    FineCount,
}

fn expect_label(draw: &ExperimentDraw, allowed: &[Label]) -> Result<()> {
    if allowed.contains(&draw.label) {
        Ok(())
    } else {
        Err(Error::Shape(format!("expected one of {allowed:?}, got {:?}", draw.label)))
    }
}

fn sequence_parts<'a>(draw: &'a ExperimentDraw, spec: &ModelSpec) -> Result<(&'a [f64], &'a [f64])> {
    let (top, detail) = match &draw.values {
        DrawValues::Sequence { top, detail } | DrawValues::Mixed { top, detail, .. } => (top, detail),
        _ => return Err(Error::Shape("draw carries no coefficients".into())),
    };
    if top.len() != spec.m0() || detail.len() != spec.detail_len() {
        return Err(Error::Shape(format!(
            "coefficient counts {}+{} do not match m0 = {}, n = {}",
            top.len(),
            detail.len(),
            spec.m0(),
            spec.n()
        )));
    }
    Ok((top, detail))
}

fn output(label: Label, values: DrawValues, spec: &ModelSpec, rng: &RngStream, intermediates: Intermediates) -> CouplingOutput {
    CouplingOutput {
        draw: ExperimentDraw::new(label, values, spec, rng),
        intermediates,
    }
}

/// Per-block sums of squares scaled to variance statistics, then fresh
/// coefficients normal with variance V̂_b/n in block b.
fn squares_to_mixed(
    top: &[f64],
    detail: &[f64],
    blocks: &[usize],
    count: usize,
    scale: f64,
    n: usize,
    rng: &mut RngStream,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut sums = vec![0.0; count];
    for (x, &b) in detail.iter().zip(blocks) {
        sums[b] += x * x;
    }
    let vhat: Vec<f64> = sums.iter().map(|s| scale * s).collect();
    let sds: Vec<f64> = vhat.iter().map(|v| (v / n as f64).sqrt()).collect();
    let fresh = blocks.iter().map(|&b| sds[b] * rng.standard_normal()).collect();
    (vhat, top.to_vec(), fresh)
}

/// Sphere coordinates with Σx² = c·v/n for each block, assigned in level-major order.
fn mixed_to_squares(
    variances: &[f64],
    blocks: &[usize],
    per_block: usize,
    n: usize,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let c = per_block as f64;
    let spheres = variances
        .iter()
        .map(|&v| draw_conditional_gaussians(c * c * v / n as f64, per_block, rng))
        .collect::<Result<Vec<_>>>()?;
    let mut cursor = vec![0usize; variances.len()];
    Ok(blocks
        .iter()
        .map(|&b| {
            let x = spheres[b][cursor[b]];
            cursor[b] += 1;
            x
        })
        .collect())
}

/// P̄ → Q: V̂ = n/(n−m)·Σ X²_{i,j}, top kept, details redrawn given V̂.
pub fn pbar_to_q(draw: &ExperimentDraw, spec: &ModelSpec, rng: &mut RngStream) -> Result<CouplingOutput> {
    pbar_to_q_with(draw, spec, true, rng)
}

/// [`pbar_to_q`] with the n/(n−m) normalizer optionally dropped; the
/// unnormalized form is wrong on purpose and serves as a detection check.
pub fn pbar_to_q_with(draw: &ExperimentDraw, spec: &ModelSpec, normalize: bool, rng: &mut RngStream) -> Result<CouplingOutput> {
    expect_label(draw, &[Label::PBar])?;
    let (top, detail) = sequence_parts(draw, spec)?;
    let (n, m) = (spec.n(), spec.m0());
    if m >= n {
        return Err(Error::Shape(format!("m = {m} must be below n = {n}")));
    }
    let scale = if normalize { n as f64 / (n - m) as f64 } else { 1.0 };
    let blocks = vec![0; detail.len()];
    let (vhat, top, detail) = squares_to_mixed(top, detail, &blocks, 1, scale, n, rng);
    let values = DrawValues::Mixed {
        variances: vhat.clone(),
        top,
        detail,
    };
    Ok(output(Label::Q, values, spec, rng, Intermediates { vhat, ..Default::default() }))
}

/// Q → P̄: n sphere coordinates of radius √V, the first n − m become details.
pub fn q_to_pbar(draw: &ExperimentDraw, spec: &ModelSpec, rng: &mut RngStream) -> Result<CouplingOutput> {
    expect_label(draw, &[Label::Q])?;
    let (top, _) = sequence_parts(draw, spec)?;
    let v = match draw.variances() {
        Some([v]) => *v,
        _ => return Err(Error::Shape("Q draw must carry one variance statistic".into())),
    };
    let n = spec.n();
    let blocks = vec![0; spec.detail_len()];
    let detail = mixed_to_squares(&[v], &blocks, n, n, rng)?;
    let values = DrawValues::Sequence {
        top: top.to_vec(),
        detail,
    };
    Ok(output(Label::PBar, values, spec, rng, Intermediates::default()))
}

/// P̃ → Q̃: the [`pbar_to_q`] construction within each support block.
pub fn ptilde_to_qtilde(
    draw: &ExperimentDraw,
    spec: &ModelSpec,
    normalizer: BlockNormalizer,
    rng: &mut RngStream,
) -> Result<CouplingOutput> {
    expect_label(draw, &[Label::PTilde])?;
    let (top, detail) = sequence_parts(draw, spec)?;
    let (n, m0, m1) = (spec.n(), spec.m0(), spec.m1());
    let denominator = match normalizer {
        BlockNormalizer::Unbiased => n - m0,
        BlockNormalizer::FineCount => n - m1,
    };
    let scale = (n * m1) as f64 / denominator as f64;
    let (vhat, top, detail) = squares_to_mixed(top, detail, &detail_blocks(spec), m1, scale, n, rng);
    let values = DrawValues::Mixed {
        variances: vhat.clone(),
        top,
        detail,
    };
    Ok(output(Label::QTilde, values, spec, rng, Intermediates { vhat, ..Default::default() }))
}

/// Q̃ → P̃: each V_ℓ spread over n/m₁ sphere coordinates, the first
/// (n − m₀)/m₁ of which become the block's details.
pub fn qtilde_to_ptilde(draw: &ExperimentDraw, spec: &ModelSpec, rng: &mut RngStream) -> Result<CouplingOutput> {
    expect_label(draw, &[Label::QTilde])?;
    let (top, _) = sequence_parts(draw, spec)?;
    let variances = draw
        .variances()
        .filter(|v| v.len() == spec.m1())
        .ok_or_else(|| Error::Shape("Q̃ draw must carry m1 variance statistics".into()))?;
    let detail = mixed_to_squares(variances, &detail_blocks(spec), spec.n() / spec.m1(), spec.n(), rng)?;
    let values = DrawValues::Sequence {
        top: top.to_vec(),
        detail,
    };
    Ok(output(Label::PTilde, values, spec, rng, Intermediates::default()))
}

/// P → P̄ or P̌ → P̃: cascade of Y_i/√n down to level k₀.
pub fn regression_to_sequence(draw: &ExperimentDraw, spec: &ModelSpec) -> Result<CouplingOutput> {
    expect_label(draw, &[Label::P, Label::PCheck])?;
    let y = draw.regression().expect("regression label");
    if y.len() != spec.n() {
        return Err(Error::Shape(format!("{} observations for n = {}", y.len(), spec.n())));
    }
    let root_n = (spec.n() as f64).sqrt();
    let scaled: Vec<f64> = y.iter().map(|v| v / root_n).collect();
    let ladder = haar_analyze(&scaled, spec.k0())?;
    let label = if draw.label == Label::P { Label::PBar } else { Label::PTilde };
    let values = DrawValues::Sequence {
        top: ladder.scaling().to_vec(),
        detail: ladder.flat_details(),
    };
    Ok(CouplingOutput {
        draw: ExperimentDraw {
            label,
            values,
            spec_hash: spec.hash().to_string(),
            seed: draw.seed,
            stream_id: draw.stream_id,
        },
        intermediates: Intermediates::default(),
    })
}

fn ladder_from_parts(top: &[f64], detail: &[f64], spec: &ModelSpec) -> Result<HaarLadder> {
    let mut ladder = HaarLadder::zeros(spec.k0(), spec.k())?;
    ladder.scaling_mut().copy_from_slice(top);
    ladder.set_flat_details(detail)?;
    Ok(ladder)
}

/// P̄ → P or P̃ → P̌: synthesis back to Y_i.
pub fn sequence_to_regression(draw: &ExperimentDraw, spec: &ModelSpec) -> Result<CouplingOutput> {
    expect_label(draw, &[Label::PBar, Label::PTilde])?;
    let (top, detail) = sequence_parts(draw, spec)?;
    let root_n = (spec.n() as f64).sqrt();
    let y = haar_synthesize(&ladder_from_parts(top, detail, spec)?)
        .into_iter()
        .map(|v| v * root_n)
        .collect();
    let label = if draw.label == Label::PBar { Label::P } else { Label::PCheck };
    Ok(CouplingOutput {
        draw: ExperimentDraw {
            label,
            values: DrawValues::Regression { y },
            spec_hash: spec.hash().to_string(),
            seed: draw.seed,
            stream_id: draw.stream_id,
        },
        intermediates: Intermediates::default(),
    })
}

/// Split each V̂_ℓ over its window by Dirichlet proportions with shapes
/// δ_{ℓ,j}(n − m₀)/(2m₁); V̂_j* = (m₀/m₁)·Σ_ℓ ξ_{ℓ,j}V̂_ℓ.
pub fn redistribute_variances(vhat: &[f64], weights: &WeightTable, n: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    let (m0, m1) = (weights.m0, weights.m1);
    if vhat.len() != m1 {
        return Err(Error::Shape(format!("{} statistics for m1 = {m1}", vhat.len())));
    }
    if n <= m0 {
        return Err(Error::Shape(format!("n = {n} must exceed m0 = {m0}")));
    }
    let shape_scale = (n - m0) as f64 / (2.0 * m1 as f64);
    let mut pieces = vec![0.0; m0];
    for (l, &v) in vhat.iter().enumerate() {
        let window = weights.window(l + 1);
        let alphas: Vec<f64> = window.iter().map(|&(_, d)| d * shape_scale).collect();
        let xi = draw_dirichlet(&alphas, rng)?;
        for (&(j, _), x) in window.iter().zip(xi) {
            pieces[j - 1] += x * v;
        }
    }
    let up = m0 as f64 / m1 as f64;
    Ok(pieces.into_iter().map(|p| up * p).collect())
}

/// (m₁/m₀)·Σ_{j∈J_ℓ} V_j* over the consecutive cells of each block.
pub fn recombine_variances(vstar: &[f64], m1: usize) -> Result<Vec<f64>> {
    let m0 = vstar.len();
    let per = check_block_ratio(m0, m1)?;
    let down = m1 as f64 / m0 as f64;
    Ok(vstar.chunks(per).map(|c| down * c.iter().sum::<f64>()).collect())
}

/// n regression values from top coefficients and per-cell variance statistics:
/// (n − m₀)/m₀ conditional normals per cell, then synthesis.
pub fn synthesize_regression(top: &[f64], vstar: &[f64], spec: &ModelSpec, rng: &mut RngStream) -> Result<Vec<f64>> {
    let (n, m0) = (spec.n(), spec.m0());
    if top.len() != m0 || vstar.len() != m0 {
        return Err(Error::Shape(format!("expected {m0} top coefficients and statistics")));
    }
    let per_cell = (n - m0) / m0;
    if per_cell * m0 != n - m0 {
        return Err(Error::Shape(format!("(n - m0)/m0 is not an integer for n = {n}, m0 = {m0}")));
    }
    let mut ladder = HaarLadder::zeros(spec.k0(), spec.k())?;
    ladder.scaling_mut().copy_from_slice(top);
    let c = per_cell as f64;
    for (j, &v) in vstar.iter().enumerate() {
        let coords = draw_conditional_gaussians(c * c * v / n as f64, per_cell, rng)?;
        let mut it = coords.into_iter();
        for i in spec.k0()..spec.k() {
            let width = 1usize << (i - spec.k0());
            for slot in &mut ladder.level_mut(i)[j * width..(j + 1) * width] {
                *slot = it.next().expect("per-cell count matches");
            }
        }
    }
    let root_n = (n as f64).sqrt();
    Ok(haar_synthesize(&ladder).into_iter().map(|v| v * root_n).collect())
}

/// P̃ → P̌: block statistics, Dirichlet redistribution, then synthesis.
pub fn ptilde_to_pcheck(draw: &ExperimentDraw, spec: &ModelSpec, rng: &mut RngStream) -> Result<CouplingOutput> {
    expect_label(draw, &[Label::PTilde])?;
    let (top, detail) = sequence_parts(draw, spec)?;
    let (n, m0, m1) = (spec.n(), spec.m0(), spec.m1());
    let mut sums = vec![0.0; m1];
    for (x, b) in detail.iter().zip(detail_blocks(spec)) {
        sums[b] += x * x;
    }
    let scale = (n * m1) as f64 / (n - m0) as f64;
    let vhat: Vec<f64> = sums.iter().map(|s| scale * s).collect();
    let vstar = redistribute_variances(&vhat, &WeightTable::new(m0, m1)?, n, rng)?;
    let y = synthesize_regression(top, &vstar, spec, rng)?;
    Ok(output(
        Label::PCheck,
        DrawValues::Regression { y },
        spec,
        rng,
        Intermediates {
            vhat,
            vstar,
            ..Default::default()
        },
    ))
}

/// Knot-interpolated drift: τ̂(t*_ℓ) = z_ℓ at t*_ℓ = (2ℓ−1)/(2m₁), linear
/// between knots and constant beyond the extreme ones.
pub fn tau_hat(z: &[f64], t: f64) -> f64 {
    let m1 = z.len() as f64;
    let s = t * m1 - 0.5;
    if s <= 0.0 {
        return z[0];
    }
    if s >= m1 - 1.0 {
        return z[z.len() - 1];
    }
    let i = s.floor() as usize;
    let w = s - i as f64;
    (1.0 - w) * z[i] + w * z[i + 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogVarianceProcess {
    /// Increments of V*(t) per grid cell.
    pub dv: Vec<f64>,
    /// Drift integral over each cell divided by the cell width.
    pub drift: Vec<f64>,
}

/// dV* = Σ_ℓ Z_ℓK_ℓ/m₁ dt + √2 n^{−½} m₁^{−½} Σ_ℓ dB_ℓ with reflected hat
/// kernels K_ℓ and independent K_ℓ-bridges B_ℓ.
pub fn build_logvariance_process(
    z: &[f64],
    n: usize,
    cells: usize,
    with_noise: bool,
    rng: &mut RngStream,
) -> Result<LogVarianceProcess> {
    let m1 = z.len();
    if m1 < 2 {
        return Err(Error::Shape("the log-variance process needs at least two blocks".into()));
    }
    if let Some(bad) = z.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "log statistic",
            value: *bad,
        });
    }
    let width = 1.0 / cells as f64;
    let mut drift = vec![0.0; cells];
    let mut dv = vec![0.0; cells];
    let noise_scale = (2.0 / (n as f64 * m1 as f64)).sqrt();
    for (l, &zl) in z.iter().enumerate() {
        let kappa = kernel_masses(l + 1, m1, cells)?;
        for (d, k) in drift.iter_mut().zip(&kappa) {
            *d += zl * k / m1 as f64;
        }
        if with_noise {
            let bridge = draw_bridge_process(l + 1, m1, cells, rng)?;
            for (d, b) in dv.iter_mut().zip(&bridge.increments) {
                *d += noise_scale * b;
            }
        }
    }
    for (d, a) in dv.iter_mut().zip(&drift) {
        *d += a;
    }
    let drift = drift.into_iter().map(|a| a / width).collect();
    Ok(LogVarianceProcess { dv, drift })
}

/// Q̃ → Q̌: Z_ℓ = log V_ℓ drives V*(t); Y(t) is rebuilt from the coefficients
/// with sub-cell noise of variance V_ℓΔ/n.
pub fn qtilde_to_qcheck(draw: &ExperimentDraw, spec: &ModelSpec, cells: usize, rng: &mut RngStream) -> Result<CouplingOutput> {
    expect_label(draw, &[Label::QTilde])?;
    let (top, detail) = sequence_parts(draw, spec)?;
    let variances = draw
        .variances()
        .filter(|v| v.len() == spec.m1())
        .ok_or_else(|| Error::Shape("Q̃ draw must carry m1 variance statistics".into()))?
        .to_vec();
    let (n, m1) = (spec.n(), spec.m1());
    if !cells.is_power_of_two() || cells < 2 * m1 {
        return Err(Error::Shape(format!("{cells} cells do not refine {m1} kernels")));
    }
    let z: Vec<f64> = variances.iter().map(|v| v.ln()).collect();
    let process = build_logvariance_process(&z, n, cells, true, rng)?;

    // level-k cell increments ϑ_{k,i}·n^{−½}
    let root_n = (n as f64).sqrt();
    let fine: Vec<f64> = haar_synthesize(&ladder_from_parts(top, detail, spec)?)
        .into_iter()
        .map(|v| v / root_n)
        .collect();
    let dy = if cells <= n {
        fine.chunks(n / cells).map(|c| c.iter().sum()).collect()
    } else {
        let split = cells / n;
        let sub = 1.0 / cells as f64;
        let mut out = Vec::with_capacity(cells);
        for (i, &total) in fine.iter().enumerate() {
            let block = i * m1 / n;
            let sd = (variances[block] * sub / n as f64).sqrt();
            let noise: Vec<f64> = (0..split).map(|_| sd * rng.standard_normal()).collect();
            let mean_noise = noise.iter().sum::<f64>() / split as f64;
            out.extend(noise.iter().map(|e| total / split as f64 + e - mean_noise));
        }
        out
    };
    Ok(output(
        Label::QCheck,
        DrawValues::Process { dv: process.dv, dy },
        spec,
        rng,
        Intermediates {
            vhat: variances,
            drift: process.drift,
            ..Default::default()
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{sample_q, sample_regression, sample_sequence, ModelConfig};
    use crate::fixtures::{ClassSpec, GammaSequence, LogVarianceFixture, MeanFixture};

    fn spec(k: u32, k0: u32, k1: u32, tau: LogVarianceFixture) -> ModelSpec {
        ModelSpec::new(ModelConfig {
            k,
            k0,
            k1,
            mean: MeanFixture::Sine { amplitude: 0.5 },
            log_variance: tau,
            class: ClassSpec {
                alpha: 0.75,
                alpha1: 2.0,
                holder_m: 2.0,
                gamma: GammaSequence::Geometric {
                    scale: 2.0 * std::f64::consts::PI,
                    decay: 0.25,
                },
            },
            sigma: 1.0,
        })
        .unwrap()
    }

    #[test]
    fn weight_windows_sum_to_one() {
        for (m0, m1) in [(4, 2), (16, 4), (64, 8), (64, 32)] {
            let w = WeightTable::new(m0, m1).unwrap();
            for l in 1..=m1 {
                let s: f64 = w.window(l).iter().map(|&(_, d)| d).sum();
                assert!((s - 1.0).abs() < 1e-12, "m0 {m0} m1 {m1} block {l}: {s}");
            }
            for (j, ws) in w.cells.iter().enumerate() {
                let s: f64 = ws.iter().map(|&(_, z)| z).sum();
                assert!((s - 1.0).abs() < 1e-12, "cell {}", j + 1);
            }
        }
        assert!(WeightTable::new(8, 8).is_err());
    }

    #[test]
    fn top_coefficients_pass_through() {
        let s = spec(8, 4, 1, LogVarianceFixture::Constant { level: 0.0 });
        let mut rng = RngStream::new(3, 0);
        let p = sample_sequence(&s, false, &mut rng);
        let q = pbar_to_q(&p, &s, &mut rng).unwrap();
        assert_eq!(q.draw.top(), p.top());
        let back = q_to_pbar(&q.draw, &s, &mut rng).unwrap();
        assert_eq!(back.draw.top(), p.top());
        assert_eq!(back.draw.detail().unwrap().len(), s.detail_len());
    }

    #[test]
    fn sphere_radius_is_exact() {
        let s = spec(6, 3, 1, LogVarianceFixture::Constant { level: 0.0 });
        let mut rng = RngStream::new(5, 0);
        let q = sample_q(&s, false, &mut rng);
        let v = q.variances().unwrap()[0];
        let all = mixed_to_squares(&[v], &vec![0; s.n()], s.n(), s.n(), &mut RngStream::new(9, 9)).unwrap();
        let ss: f64 = all.iter().map(|x| x * x).sum();
        assert!((ss - v).abs() < 1e-12 * v);
    }

    #[test]
    fn single_block_matches_unblocked() {
        let s = spec(8, 3, 0, LogVarianceFixture::Constant { level: 0.0 });
        let p = sample_sequence(&s, true, &mut RngStream::new(1, 1));
        let a = ptilde_to_qtilde(&p, &s, BlockNormalizer::Unbiased, &mut RngStream::new(2, 2)).unwrap();
        let pbar = ExperimentDraw { label: Label::PBar, ..p.clone() };
        let b = pbar_to_q(&pbar, &s, &mut RngStream::new(2, 2)).unwrap();
        assert_eq!(a.draw.values, b.draw.values);
    }

    #[test]
    fn regression_round_trip() {
        let s = spec(10, 4, 2, LogVarianceFixture::Linear { slope: 0.5, intercept: 0.0 });
        let p = sample_regression(&s, true, &mut RngStream::new(4, 0));
        let seq = regression_to_sequence(&p, &s).unwrap();
        assert_eq!(seq.draw.label, Label::PTilde);
        let back = sequence_to_regression(&seq.draw, &s).unwrap();
        for (a, b) in back.draw.regression().unwrap().iter().zip(p.regression().unwrap()) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn redistribution_conserves_mass() {
        let (n, m0, m1) = (4096, 64, 8);
        let w = WeightTable::new(m0, m1).unwrap();
        let vhat: Vec<f64> = (0..m1).map(|l| 1.0 + 0.1 * l as f64).collect();
        let vstar = redistribute_variances(&vhat, &w, n, &mut RngStream::new(8, 0)).unwrap();
        let total: f64 = vstar.iter().sum::<f64>() * m1 as f64 / m0 as f64;
        assert!((total - vhat.iter().sum::<f64>()).abs() < 1e-12 * total);
        let back = recombine_variances(&vstar, m1).unwrap();
        assert_eq!(back.len(), m1);
        assert!((back.iter().sum::<f64>() - total).abs() < 1e-12 * total);
    }

    #[test]
    fn edge_cells_see_only_edge_block() {
        let (n, m0, m1) = (1024, 32, 4);
        let w = WeightTable::new(m0, m1).unwrap();
        let per = m0 / m1;
        let base = vec![1.0; m1];
        let mut bumped = base.clone();
        bumped[1] = 5.0;
        let a = redistribute_variances(&base, &w, n, &mut RngStream::new(1, 0)).unwrap();
        let b = redistribute_variances(&bumped, &w, n, &mut RngStream::new(1, 0)).unwrap();
        for j in 0..per / 2 {
            assert_eq!(a[j], b[j]);
        }
        assert_ne!(a[per / 2], b[per / 2]);
    }

    #[test]
    fn noiseless_process_interpolates_knots() {
        let z = [0.1, -0.3, 0.7, 0.2];
        let cells = 1 << 10;
        let p = build_logvariance_process(&z, 256, cells, false, &mut RngStream::new(0, 0)).unwrap();
        for (c, d) in p.drift.iter().enumerate() {
            let (a, b) = (c as f64 / cells as f64, (c + 1) as f64 / cells as f64);
            // τ̂ is linear inside each grid cell, so its cell average is the midpoint value
            let mid = tau_hat(&z, 0.5 * (a + b));
            assert!((d - mid).abs() < 1e-12, "cell {c}: {d} vs {mid}");
        }
        for (l, &zl) in z.iter().enumerate() {
            assert_eq!(tau_hat(&z, (2 * l + 1) as f64 / 8.0), zl);
        }
        assert!(build_logvariance_process(&z[..1], 256, cells, false, &mut RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn qcheck_coupling_shapes() {
        let s = spec(8, 4, 2, LogVarianceFixture::Linear { slope: 0.5, intercept: 0.0 });
        let q = sample_q(&s, true, &mut RngStream::new(1, 0));
        for cells in [64, 256, 1024] {
            let out = qtilde_to_qcheck(&q, &s, cells, &mut RngStream::new(2, 0)).unwrap();
            match out.draw.values {
                DrawValues::Process { dv, dy } => {
                    assert_eq!(dv.len(), cells);
                    let ys: f64 = dy.iter().sum();
                    // Y(1) = ϑ_{0,0} = √m₀-weighted sum of the top coefficients
                    let expected: f64 = q.top().unwrap().iter().sum::<f64>() / (s.m0() as f64).sqrt();
                    assert!((ys - expected).abs() < 1e-10);
                }
                _ => panic!("process expected"),
            }
        }
    }
}
