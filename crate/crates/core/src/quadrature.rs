//! Adaptive Gauss–Kronrod integration on finite and infinite intervals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_600_525_478_826,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// Gauss weights for the odd-indexed Kronrod nodes.
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_663_992_797_626_878_299_4,
    -0.538_469_310_105_683_091_036_314_420_700_2,
    0.0,
    0.538_469_310_105_683_091_036_314_420_700_2,
    0.906_179_845_938_663_992_797_626_878_299_4,
];

const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_087_514_264_040_719_9,
    0.478_628_670_499_366_468_041_291_514_835_6,
    0.568_888_888_888_888_888_888_888_888_888_9,
    0.478_628_670_499_366_468_041_291_514_835_6,
    0.236_926_885_056_189_087_514_264_040_719_9,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-12,
            max_intervals: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub abs_err: f64,
    pub intervals: usize,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<Segment> {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    if !fc.is_finite() {
        return Err(Error::NonIntegrable(centre));
    }
    let mut k = WGK[10] * fc;
    let mut g = 0.0;
    for i in 0..10 {
        let dx = half * XGK[i];
        let (x1, x2) = (centre - dx, centre + dx);
        let (f1, f2) = (f(x1), f(x2));
        if !f1.is_finite() {
            return Err(Error::NonIntegrable(x1));
        }
        if !f2.is_finite() {
            return Err(Error::NonIntegrable(x2));
        }
        k += WGK[i] * (f1 + f2);
        if i % 2 == 1 {
            g += WG[i / 2] * (f1 + f2);
        }
    }
    let value = k * half;
    let err = ((k - g) * half).abs();
    Ok(Segment { a, b, value, err })
}

fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, opts: &QuadOptions) -> Result<Integral> {
    let first = kronrod(f, a, b)?;
    let mut total = first.value;
    let mut err = first.err;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    let mut count = 1;
    loop {
        let tol = opts.abs_tol.max(opts.rel_tol * total.abs());
        if err <= tol {
            break;
        }
        if count >= opts.max_intervals {
            // accept a result that is at the rounding floor
            if err <= 1e3 * f64::EPSILON * total.abs().max(opts.abs_tol) {
                break;
            }
            return Err(Error::Quadrature(format!(
                "error estimate {err:.3e} above tolerance {tol:.3e} after {count} intervals"
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            count = opts.max_intervals;
            continue;
        }
        let left = kronrod(f, worst.a, mid)?;
        let right = kronrod(f, mid, worst.b)?;
        total += left.value + right.value - worst.value;
        err += left.err + right.err - worst.err;
        heap.push(left);
        heap.push(right);
        count += 1;
    }
    // recompute from pieces to shed accumulated update error
    let mut value = 0.0;
    let mut abs_err = 0.0;
    for s in heap.iter() {
        value += s.value;
        abs_err += s.err;
    }
    Ok(Integral {
        value,
        abs_err,
        intervals: count,
    })
}

/// Integrate `f` over `[a, b]`; either endpoint may be infinite.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<Integral> {
    if a.is_nan() || b.is_nan() {
        return Err(Error::Quadrature("NaN endpoint".into()));
    }
    if a == b {
        return Ok(Integral {
            value: 0.0,
            abs_err: 0.0,
            intervals: 0,
        });
    }
    if a > b {
        let r = integrate(f, b, a, opts)?;
        return Ok(Integral {
            value: -r.value,
            ..r
        });
    }
    match (a.is_finite(), b.is_finite()) {
        (true, true) => adaptive(&f, a, b, opts),
        (true, false) => {
            let g = |t: f64| {
                if t >= 1.0 {
                    return 0.0;
                }
                let s = 1.0 - t;
                let v = f(a + t / s) / (s * s);
                if v.is_nan() { 0.0 } else { v }
            };
            adaptive(&g, 0.0, 1.0, opts)
        }
        (false, true) => {
            let g = |t: f64| {
                if t >= 1.0 {
                    return 0.0;
                }
                let s = 1.0 - t;
                let v = f(b - t / s) / (s * s);
                if v.is_nan() { 0.0 } else { v }
            };
            adaptive(&g, 0.0, 1.0, opts)
        }
        (false, false) => {
            let g = |t: f64| {
                let s = 1.0 - t * t;
                if s <= 0.0 {
                    return 0.0;
                }
                let v = f(t / s) * (1.0 + t * t) / (s * s);
                if v.is_nan() { 0.0 } else { v }
            };
            adaptive(&g, -1.0, 1.0, opts)
        }
    }
}

/// Five-point Gauss–Legendre rule on `[a, b]`.
pub fn gauss_legendre5<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (x, w) in GL5_NODES.iter().zip(GL5_WEIGHTS.iter()) {
        acc += w * f(centre + half * x);
    }
    acc * half
}
