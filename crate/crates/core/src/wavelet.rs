//! Orthonormal Haar cascade on [0, 1] and Besov sequence tails.
//!
//! Wavelet ψ_{i,j} (j = 1..2^i) is supported on ((j−1)2^{−i}, j2^{−i}], positive
//! on its left half. Arrays are stored zero-based, so slot `j − 1` holds θ_{i,j}.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre5;

/// Levels of detail used when a tail is computed from a function.
pub const FUNCTION_TAIL_LEVELS: u32 = 20;

/// Minimum cell resolution used for function coefficients.
const MIN_CELL_LEVEL: u32 = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LadderRecord", into = "LadderRecord")]
pub struct HaarLadder {
    coarse_level: u32,
    fine_level: u32,
    scaling: Vec<f64>,
    wavelets: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct LadderRecord {
    k0: u32,
    k: u32,
    scaling: Vec<f64>,
    wavelets: Vec<Vec<f64>>,
}

impl TryFrom<LadderRecord> for HaarLadder {
    type Error = Error;
    fn try_from(r: LadderRecord) -> Result<Self> {
        HaarLadder::new(r.k0, r.k, r.scaling, r.wavelets)
    }
}

impl From<HaarLadder> for LadderRecord {
    fn from(l: HaarLadder) -> Self {
        LadderRecord {
            k0: l.coarse_level,
            k: l.fine_level,
            scaling: l.scaling,
            wavelets: l.wavelets,
        }
    }
}

pub fn dyadic_level(len: usize) -> Result<u32> {
    if len == 0 || !len.is_power_of_two() {
        return Err(Error::NonDyadic(len));
    }
    Ok(len.trailing_zeros())
}

impl HaarLadder {
    pub fn new(coarse_level: u32, fine_level: u32, scaling: Vec<f64>, wavelets: Vec<Vec<f64>>) -> Result<Self> {
        if coarse_level > fine_level {
            return Err(Error::LevelOrder {
                coarse: coarse_level,
                fine: fine_level,
            });
        }
        if fine_level > 40 {
            return Err(Error::Resource(format!("fine level {fine_level} too large")));
        }
        if scaling.len() != 1usize << coarse_level {
            return Err(Error::LevelMismatch(format!(
                "{} scaling coefficients at level {coarse_level}",
                scaling.len()
            )));
        }
        if wavelets.len() != (fine_level - coarse_level) as usize {
            return Err(Error::LevelMismatch(format!(
                "{} detail levels between {coarse_level} and {fine_level}",
                wavelets.len()
            )));
        }
        for (offset, level) in wavelets.iter().enumerate() {
            let i = coarse_level as usize + offset;
            if level.len() != 1usize << i {
                return Err(Error::LevelMismatch(format!(
                    "level {i} holds {} coefficients",
                    level.len()
                )));
            }
        }
        Ok(Self {
            coarse_level,
            fine_level,
            scaling,
            wavelets,
        })
    }

    pub fn zeros(coarse_level: u32, fine_level: u32) -> Result<Self> {
        if coarse_level > fine_level {
            return Err(Error::LevelOrder {
                coarse: coarse_level,
                fine: fine_level,
            });
        }
        let wavelets = (coarse_level..fine_level).map(|i| vec![0.0; 1usize << i]).collect();
        Self::new(coarse_level, fine_level, vec![0.0; 1usize << coarse_level], wavelets)
    }

    pub fn coarse_level(&self) -> u32 {
        self.coarse_level
    }

    pub fn fine_level(&self) -> u32 {
        self.fine_level
    }

    pub fn len(&self) -> usize {
        1usize << self.fine_level
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn scaling(&self) -> &[f64] {
        &self.scaling
    }

    pub fn scaling_mut(&mut self) -> &mut [f64] {
        &mut self.scaling
    }

    pub fn wavelets(&self) -> &[Vec<f64>] {
        &self.wavelets
    }

    /// Detail coefficients at absolute level `i`.
    pub fn level(&self, i: u32) -> &[f64] {
        &self.wavelets[(i - self.coarse_level) as usize]
    }

    pub fn level_mut(&mut self, i: u32) -> &mut [f64] {
        &mut self.wavelets[(i - self.coarse_level) as usize]
    }

    /// Detail coefficients in level-major order.
    pub fn flat_details(&self) -> Vec<f64> {
        self.wavelets.iter().flatten().copied().collect()
    }

    /// Overwrite the detail coefficients from a level-major slice.
    pub fn set_flat_details(&mut self, values: &[f64]) -> Result<()> {
        let expected = self.len() - self.scaling.len();
        if values.len() != expected {
            return Err(Error::Shape(format!("expected {expected} details, got {}", values.len())));
        }
        let mut at = 0;
        for level in self.wavelets.iter_mut() {
            let w = level.len();
            level.copy_from_slice(&values[at..at + w]);
            at += w;
        }
        Ok(())
    }

    /// Drop detail levels at or above `fine_level`.
    pub fn truncated(&self, fine_level: u32) -> Result<Self> {
        if fine_level < self.coarse_level || fine_level > self.fine_level {
            return Err(Error::LevelMismatch(format!(
                "cannot truncate levels [{}, {}) at {fine_level}",
                self.coarse_level, self.fine_level
            )));
        }
        let keep = (fine_level - self.coarse_level) as usize;
        Self::new(
            self.coarse_level,
            fine_level,
            self.scaling.clone(),
            self.wavelets[..keep].to_vec(),
        )
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.scaling.iter().chain(self.wavelets.iter().flatten()).map(|x| x * x).sum()
    }
}

/// Discrete orthonormal Haar analysis down to `coarse_level`.
pub fn haar_analyze(signal: &[f64], coarse_level: u32) -> Result<HaarLadder> {
    let k = dyadic_level(signal.len())?;
    if coarse_level > k {
        return Err(Error::LevelOrder {
            coarse: coarse_level,
            fine: k,
        });
    }
    let mut s = signal.to_vec();
    let mut wavelets = vec![Vec::new(); (k - coarse_level) as usize];
    for i in (coarse_level..k).rev() {
        let half = 1usize << i;
        let mut next = Vec::with_capacity(half);
        let mut detail = Vec::with_capacity(half);
        for j in 0..half {
            let (a, b) = (s[2 * j], s[2 * j + 1]);
            next.push((a + b) * FRAC_1_SQRT_2);
            detail.push((a - b) * FRAC_1_SQRT_2);
        }
        wavelets[(i - coarse_level) as usize] = detail;
        s = next;
    }
    HaarLadder::new(coarse_level, k, s, wavelets)
}

/// Inverse cascade.
pub fn haar_synthesize(ladder: &HaarLadder) -> Vec<f64> {
    let mut s = ladder.scaling.clone();
    for detail in &ladder.wavelets {
        let mut next = Vec::with_capacity(2 * s.len());
        for (a, d) in s.iter().zip(detail.iter()) {
            next.push((a + d) * FRAC_1_SQRT_2);
            next.push((a - d) * FRAC_1_SQRT_2);
        }
        s = next;
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BesovMode {
    /// sqrt(Σ_i 2^{2αi} Σ_j θ²)
    #[serde(rename = "2,2")]
    L2L2,
    /// Σ_i 2^{i(α+½)} sup_j |θ|
    #[serde(rename = "inf,1")]
    SupL1,
}

impl std::str::FromStr for BesovMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2,2" => Ok(BesovMode::L2L2),
            "inf,1" => Ok(BesovMode::SupL1),
            other => Err(Error::Shape(format!("unknown Besov mode `{other}`"))),
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name: "alpha", value: alpha })
    }
}

/// Unrooted contribution of the ladder's levels at or above `from_level`.
fn tail_parts(ladder: &HaarLadder, alpha: f64, mode: BesovMode, from_level: u32) -> Result<f64> {
    check_alpha(alpha)?;
    if from_level < ladder.coarse_level {
        return Err(Error::LevelMismatch(format!(
            "tail from level {from_level} needs coefficients below coarse level {}",
            ladder.coarse_level
        )));
    }
    let mut acc = 0.0;
    for i in from_level..ladder.fine_level {
        let level = ladder.level(i);
        let fi = i as f64;
        acc += match mode {
            BesovMode::L2L2 => (2.0 * alpha * fi).exp2() * level.iter().map(|t| t * t).sum::<f64>(),
            BesovMode::SupL1 => {
                ((alpha + 0.5) * fi).exp2() * level.iter().fold(0.0f64, |m, t| m.max(t.abs()))
            }
        };
    }
    Ok(acc)
}

/// Besov sequence tail from `from_level` over the levels held by the ladder.
pub fn besov_tail(ladder: &HaarLadder, alpha: f64, mode: BesovMode, from_level: u32) -> Result<f64> {
    let acc = tail_parts(ladder, alpha, mode, from_level)?;
    Ok(match mode {
        BesovMode::L2L2 => acc.sqrt(),
        BesovMode::SupL1 => acc,
    })
}

/// Hölder modulus |f(x) − f(y)| ≤ constant·|x − y|^exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderBound {
    pub constant: f64,
    pub exponent: f64,
}

impl HolderBound {
    /// Bound on |θ_{i,j}| implied by the modulus.
    pub fn coefficient_bound(&self, level: u32) -> f64 {
        let i = level as f64;
        self.constant * (0.5 * i).exp2() * (-(i + 1.0) * (self.exponent + 1.0)).exp2()
    }

    /// Unrooted tail contribution of all levels at or above `from_level`.
    fn remainder(&self, alpha: f64, mode: BesovMode, from_level: u32) -> f64 {
        if self.constant == 0.0 {
            return 0.0;
        }
        if alpha >= self.exponent {
            return f64::INFINITY;
        }
        let i = from_level as f64;
        let c = self.constant * (-(self.exponent + 1.0)).exp2();
        match mode {
            BesovMode::L2L2 => {
                let ratio = (2.0 * (alpha - self.exponent)).exp2();
                c * c * ratio.powf(i) / (1.0 - ratio)
            }
            BesovMode::SupL1 => {
                let ratio = (alpha - self.exponent).exp2();
                c * ratio.powf(i) / (1.0 - ratio)
            }
        }
    }
}

/// Tail of a function's coefficients: the ladder's levels plus a certified
/// bound for the levels beyond it.
pub fn besov_tail_with_remainder(
    ladder: &HaarLadder,
    alpha: f64,
    mode: BesovMode,
    from_level: u32,
    beyond: Option<HolderBound>,
) -> Result<f64> {
    let numeric = if from_level >= ladder.fine_level {
        check_alpha(alpha)?;
        0.0
    } else {
        tail_parts(ladder, alpha, mode, from_level)?
    };
    let rest = beyond.map_or(0.0, |h| h.remainder(alpha, mode, from_level.max(ladder.fine_level)));
    let acc = numeric + rest;
    Ok(match mode {
        BesovMode::L2L2 => acc.sqrt(),
        BesovMode::SupL1 => acc,
    })
}

/// Continuous Haar coefficients of `f` at levels `[coarse_level, fine_level)`.
///
/// Cell integrals are taken with a five-point Gauss–Legendre rule on cells of
/// width 2^{−max(fine_level, 12, min_cell_level)} and pushed through the cascade.
pub fn function_ladder<F: Fn(f64) -> f64>(
    f: F,
    coarse_level: u32,
    fine_level: u32,
    min_cell_level: u32,
) -> Result<HaarLadder> {
    if coarse_level > fine_level {
        return Err(Error::LevelOrder {
            coarse: coarse_level,
            fine: fine_level,
        });
    }
    let cell_level = fine_level.max(MIN_CELL_LEVEL).max(min_cell_level);
    if cell_level > 24 {
        return Err(Error::Resource(format!("cell level {cell_level} too fine")));
    }
    let cells = 1usize << cell_level;
    let width = 1.0 / cells as f64;
    let norm = (0.5 * cell_level as f64).exp2();
    let signal: Vec<f64> = (0..cells)
        .map(|c| norm * gauss_legendre5(&f, c as f64 * width, (c + 1) as f64 * width))
        .collect();
    haar_analyze(&signal, coarse_level)?.truncated(fine_level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_signal_has_no_detail() {
        let c = 1.7;
        let ladder = haar_analyze(&[c; 64], 0).unwrap();
        assert_relative_eq!(ladder.scaling()[0], c * 8.0, max_relative = 1e-15);
        assert!(ladder.flat_details().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn small_example() {
        let ladder = haar_analyze(&[1.0, 2.0, 3.0, 4.0], 0).unwrap();
        assert_relative_eq!(ladder.scaling()[0], 5.0, epsilon = 1e-15);
        assert_relative_eq!(ladder.level(0)[0], -2.0, epsilon = 1e-15);
        assert_relative_eq!(ladder.level(1)[0], -FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_relative_eq!(ladder.level(1)[1], -FRAC_1_SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert_eq!(haar_analyze(&[1.0; 3], 0), Err(Error::NonDyadic(3)));
        assert!(matches!(haar_analyze(&[1.0; 4], 3), Err(Error::LevelOrder { .. })));
        assert!(HaarLadder::new(1, 2, vec![0.0], vec![vec![0.0, 0.0]]).is_err());
    }

    #[test]
    fn single_coefficient_tail() {
        let mut ladder = HaarLadder::zeros(0, 5).unwrap();
        ladder.level_mut(3)[2] = 0.25;
        let alpha = 0.6;
        let t = besov_tail(&ladder, alpha, BesovMode::L2L2, 0).unwrap();
        assert_relative_eq!(t, ((2.0 * alpha * 3.0).exp2() * 0.0625).sqrt(), max_relative = 1e-14);
        let s = besov_tail(&ladder, alpha, BesovMode::SupL1, 0).unwrap();
        assert_relative_eq!(s, ((alpha + 0.5) * 3.0).exp2() * 0.25, max_relative = 1e-14);
        assert_eq!(besov_tail(&ladder, alpha, BesovMode::L2L2, 4).unwrap(), 0.0);
        assert!(besov_tail(&ladder, 0.0, BesovMode::L2L2, 0).is_err());
        assert!(besov_tail(&ladder, 1.2, BesovMode::L2L2, 0).is_err());
    }

    #[test]
    fn ladder_json_shape() {
        let ladder = haar_analyze(&[1.0, 2.0, 3.0, 4.0], 1).unwrap();
        let json = serde_json::to_value(&ladder).unwrap();
        assert_eq!(json["k0"], 1);
        assert_eq!(json["k"], 2);
        let back: HaarLadder = serde_json::from_value(json).unwrap();
        assert_eq!(back, ladder);
        let bad = serde_json::json!({"k0": 1, "k": 2, "scaling": [1.0], "wavelets": [[0.0, 0.0]]});
        assert!(serde_json::from_value::<HaarLadder>(bad).is_err());
    }

    #[test]
    fn holder_bound_dominates_sine_coefficients() {
        let f = |t: f64| (2.0 * std::f64::consts::PI * t).sin();
        let ladder = function_ladder(f, 0, 12, 0).unwrap();
        let h = HolderBound {
            constant: 2.0 * std::f64::consts::PI,
            exponent: 1.0,
        };
        for i in 0..12 {
            let sup = ladder.level(i).iter().fold(0.0f64, |m, t| m.max(t.abs()));
            assert!(sup <= h.coefficient_bound(i) * (1.0 + 1e-9), "level {i}");
        }
    }
}
