//! Seeded random variate generation.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{positive, Error, Result};

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A ChaCha stream addressed by (seed, stream id).
#[derive(Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream for job `index`, independent of this stream's position.
    pub fn substream(&self, index: u64) -> RngStream {
        let id = splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(1)));
        RngStream::new(self.seed, id)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

pub fn draw_gamma(shape: f64, scale: f64, rng: &mut RngStream) -> Result<f64> {
    positive("shape", shape)?;
    positive("scale", scale)?;
    let dist = Gamma::new(shape, scale).map_err(|_| Error::InvalidParameter {
        name: "shape",
        value: shape,
    })?;
    Ok(dist.sample(rng))
}

pub fn draw_dirichlet(alphas: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
    if alphas.is_empty() {
        return Err(Error::Shape("empty Dirichlet parameter".into()));
    }
    for &a in alphas {
        positive("dirichlet alpha", a)?;
    }
    if alphas.len() == 1 {
        return Ok(vec![1.0]);
    }
    let draws = alphas
        .iter()
        .map(|&a| draw_gamma(a, 1.0, rng))
        .collect::<Result<Vec<f64>>>()?;
    let total: f64 = draws.iter().sum();
    if total <= 0.0 {
        return Err(Error::Resource("all Dirichlet gamma draws underflowed".into()));
    }
    let last = draws.len() - 1;
    let mut pieces: Vec<f64> = draws.iter().map(|g| g / total).collect();
    let head: f64 = pieces[..last].iter().sum();
    pieces[last] = (1.0 - head).max(0.0);
    Ok(pieces)
}

/// χ²_df(λ) as a Poisson(λ/2) mixture of central χ² laws.
pub fn draw_noncentral_chisq(df: f64, lambda: f64, rng: &mut RngStream) -> Result<f64> {
    positive("df", df)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "noncentrality",
            value: lambda,
        });
    }
    let extra = if lambda > 0.0 {
        let p = Poisson::new(lambda / 2.0).map_err(|_| Error::InvalidParameter {
            name: "noncentrality",
            value: lambda,
        })?;
        p.sample(rng)
    } else {
        0.0
    };
    draw_gamma(0.5 * df + extra, 2.0, rng)
}

/// `count` values uniform on the sphere Σ(√count·x)² = total.
pub fn draw_conditional_gaussians(total: f64, count: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    positive("total", total)?;
    if count == 0 {
        return Err(Error::Shape("count must be at least one".into()));
    }
    let z: Vec<f64> = loop {
        let z: Vec<f64> = (0..count).map(|_| rng.standard_normal()).collect();
        if z.iter().any(|&v| v != 0.0) {
            break z;
        }
    };
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    let radius = (total / count as f64).sqrt();
    Ok(z.iter().map(|v| v / norm * radius).collect())
}

/// Increments of one kernel bridge on a uniform grid of `increments.len()` cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeNoise {
    pub kernel: usize,
    pub increments: Vec<f64>,
}

impl BridgeNoise {
    pub fn cells(&self) -> usize {
        self.increments.len()
    }

    /// Path values at the right end of each cell.
    pub fn path(&self) -> Vec<f64> {
        self.increments
            .iter()
            .scan(0.0, |acc, d| {
                *acc += d;
                Some(*acc)
            })
            .collect()
    }
}

fn check_kernel_grid(kernel: usize, m1: usize, cells: usize) -> Result<()> {
    if m1 == 0 || kernel == 0 || kernel > m1 {
        return Err(Error::Shape(format!("kernel {kernel} outside 1..={m1}")));
    }
    if cells == 0 || !cells.is_power_of_two() {
        return Err(Error::NonDyadic(cells));
    }
    if !m1.is_power_of_two() {
        return Err(Error::NonDyadic(m1));
    }
    if cells < 2 * m1 {
        return Err(Error::Shape(format!(
            "{cells} grid cells do not refine the half-blocks of {m1} kernels"
        )));
    }
    Ok(())
}

/// Antiderivative of the unreflected hat K_ℓ on the real line.
fn hat_cdf(x: f64, centre: f64, m1: f64) -> f64 {
    let u = (m1 * (x - centre)).clamp(-1.0, 1.0);
    if u <= 0.0 {
        0.5 * (1.0 + u) * (1.0 + u)
    } else {
        1.0 - 0.5 * (1.0 - u) * (1.0 - u)
    }
}

/// Mass of the reflected hat K_ℓ in each grid cell; sums to one.
pub fn kernel_masses(kernel: usize, m1: usize, cells: usize) -> Result<Vec<f64>> {
    check_kernel_grid(kernel, m1, cells)?;
    let m = m1 as f64;
    let centre = (2 * kernel - 1) as f64 / (2.0 * m);
    let width = 1.0 / cells as f64;
    let mass = |a: f64, b: f64| hat_cdf(b, centre, m) - hat_cdf(a, centre, m);
    Ok((0..cells)
        .map(|c| {
            let (a, b) = (c as f64 * width, (c + 1) as f64 * width);
            // direct part plus the parts folded in from below 0 and above 1
            mass(a, b) + mass(-b, -a) + mass(2.0 - b, 2.0 - a)
        })
        .collect())
}

/// A Brownian bridge in the time scale of the reflected hat K_ℓ.
pub fn draw_bridge_process(kernel: usize, m1: usize, cells: usize, rng: &mut RngStream) -> Result<BridgeNoise> {
    let kappa = kernel_masses(kernel, m1, cells)?;
    let mut increments: Vec<f64> = kappa.iter().map(|k| k.sqrt() * rng.standard_normal()).collect();
    let total: f64 = increments.iter().sum();
    for (d, k) in increments.iter_mut().zip(&kappa) {
        *d -= k * total;
    }
    Ok(BridgeNoise { kernel, increments })
}
