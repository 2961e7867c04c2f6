//! One PASS/FAIL line per acceptance criterion.

use std::process::ExitCode;
use std::time::Instant;

use eqlab::couplings::{
    pbar_to_q, pbar_to_q_with, ptilde_to_qtilde, q_to_pbar, recombine_variances, redistribute_variances,
    BlockNormalizer, WeightTable,
};
use eqlab::divergence::{
    gamma_same_mean_leading, kl_gamma, kl_gamma_same_mean, kl_gamma_sum, kl_loggamma_vs_normal,
    kl_loggamma_vs_normal_quadrature, kl_normal, kl_quadrature, loggamma_taylor_remainder, smooth_log_variances,
    smoothing_penalty, GammaParams, GammaSumSpec, NormalParams, Support,
};
use eqlab::experiments::{sample_q, sample_sequence, ExperimentDraw};
use eqlab::fixtures::{certify, make_fixture, FixtureParams, LogVarianceFixture, MeanFixture};
use eqlab::harness::{
    choose_coarse_level, decompose_theorem1, drift_l2_error, feasibility, regression_mean_mismatch,
    two_sample_report, Verdict,
};
use eqlab::special::{digamma, gamma_p};
use eqlab::stats::ks_one_sample;
use eqlab::wavelet::{haar_analyze, haar_synthesize};
use eqlab::{ModelConfig, ModelSpec, RngStream};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion1() -> Outcome {
    let start = Instant::now();
    let mut worst = [0.0f64; 3];
    for i in 0..50 {
        let t = i as f64 / 49.0;
        let p = NormalParams::new(-1.0 + 2.0 * t, 0.2 + 2.0 * t).unwrap();
        let q = NormalParams::new(0.5 * t.sin(), 1.5 - t).unwrap();
        let quad = kl_quadrature(|x| p.ln_pdf(x), |x| q.ln_pdf(x), Support::Real).unwrap().value;
        worst[0] = worst[0].max((kl_normal(&p, &q) - quad).abs());

        let p = GammaParams::new(0.8 + 20.0 * t, 0.5 + t).unwrap();
        let q = GammaParams::new(1.0 + 15.0 * t * t, 0.7 + 0.5 * t).unwrap();
        let quad = kl_quadrature(|x| p.ln_pdf(x), |x| q.ln_pdf(x), Support::Positive).unwrap().value;
        worst[1] = worst[1].max((kl_gamma(&p, &q) - quad).abs());

        let alpha = 0.5 * 2f64.powf(11.0 * t);
        let exact = kl_loggamma_vs_normal(alpha).unwrap().exact;
        worst[2] = worst[2].max((exact - kl_loggamma_vs_normal_quadrature(alpha).unwrap()).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst.iter().all(|&w| w <= 1e-8) && secs < 10.0,
        format!("max |closed - quadrature| normal {:.1e}, gamma {:.1e}, log-gamma {:.1e}; {secs:.2}s", worst[0], worst[1], worst[2]),
    )
}

fn criterion2() -> Outcome {
    let mut worst_ratio = 0.0f64;
    for &a1 in &[20.0, 50.0, 100.0, 300.0, 1000.0, 3000.0, 1e4] {
        for &f in &[-1.0, -0.6, -0.3, -0.1, 0.1, 0.3, 0.6, 1.0] {
            let a2 = a1 + f * a1 / 10.0;
            let exact = kl_gamma_same_mean(a1, a2).unwrap();
            let bound = gamma_same_mean_leading(a1, a2).unwrap() * (1.0 + 10.0 / a1);
            worst_ratio = worst_ratio.max(exact / bound);
        }
    }
    let spot = kl_gamma_same_mean(100.0, 90.0).unwrap();
    check(
        worst_ratio <= 1.0 && (spot - 0.00269).abs() < 5e-6 && spot <= 0.005,
        format!("max exact/bound {worst_ratio:.4}; spot {spot:.6}"),
    )
}

fn criterion3() -> Outcome {
    let grid: Vec<f64> = (0..=110).map(|i| 0.5 * 2f64.powf(i as f64 / 10.0)).collect();
    let values: Vec<f64> = grid.iter().map(|&a| kl_loggamma_vs_normal(a).unwrap().exact).collect();
    let within = grid.iter().zip(&values).all(|(a, v)| *v <= 1.0 / (3.0 * a));
    let monotone = values.windows(2).all(|w| w[1] < w[0]);
    check(
        within && monotone,
        format!("{} grid points, bound {within}, decreasing {monotone}", grid.len()),
    )
}

fn criterion4() -> Outcome {
    let start = Instant::now();
    let mut cases = 0;
    let mut failures = Vec::new();
    for &m in &[2usize, 4] {
        for &n in &[100.0, 1000.0] {
            for &r in &[0.01, 0.05, 0.1] {
                let logs: Vec<f64> = (0..m).map(|i| if i % 2 == 0 { r } else { -r }).collect();
                let spec = GammaSumSpec::new(vec![1.0 / m as f64; m], logs, n).unwrap();
                let k = kl_gamma_sum(&spec).unwrap();
                cases += 1;
                if !(k.numeric <= k.joint && k.joint <= 1.5 * k.paper_bound) {
                    failures.push(format!("m={m} n={n} r={r}: {k:?}"));
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        failures.is_empty() && secs < 60.0,
        format!("{cases} cases, {} violations {:?}; {secs:.2}s", failures.len(), failures),
    )
}

fn criterion5() -> Outcome {
    let mut worst = 0.0f64;
    for &a in &[5.0, 10.0, 20.0, 50.0, 100.0, 1000.0] {
        for &d in &[-2.0, -1.0, -0.5, -0.1, 0.1, 0.5, 1.0, 2.0] {
            let t = loggamma_taylor_remainder(a, d).unwrap();
            let allowed = 10.0 * (f64::abs(d).powi(5) / a.powi(4) + d * d / a.powi(3));
            worst = worst.max((t.exact - t.expansion).abs() / allowed);
        }
    }
    let spot = loggamma_taylor_remainder(50.0, 1.0).unwrap().exact;
    // ln x − ψ(x) = 1/(2x) + 1/(12x²) − 1/(120x⁴) + 1/(252x⁶) − …
    let x: f64 = 50.0;
    let series = 1.0 / (2.0 * x) + 1.0 / (12.0 * x * x) - 1.0 / (120.0 * x.powi(4)) + 1.0 / (252.0 * x.powi(6));
    let direct = x.ln() - digamma(x);
    check(
        worst <= 1.0 && (spot - series).abs() <= 1e-9 && (spot - direct).abs() <= 1e-9 && (spot - 0.0100334).abs() < 1e-7,
        format!("max error/allowance {worst:.3}; ln 50 - psi(50) = {spot:.10}"),
    )
}

fn criterion6() -> Outcome {
    let start = Instant::now();
    let fixture = certify(MeanFixture::Sine { amplitude: 1.0 }, LogVarianceFixture::Constant { level: 0.0 }, 0.75, 2.0)
        .map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    for k in 8..=16u32 {
        let k0 = choose_coarse_level(k, &fixture.class).unwrap();
        let spec = ModelSpec::new(ModelConfig {
            k,
            k0,
            k1: 0,
            mean: fixture.mean.clone(),
            log_variance: fixture.log_variance.clone(),
            class: fixture.class.clone(),
            sigma: 1.0,
        })
        .map_err(|e| e.to_string())?;
        let b = decompose_theorem1(&spec).map_err(|e| e.to_string())?;
        rows.push((k, b.total, 3.0 * fixture.class.gamma_at(k0), b.tv_surrogate));
    }
    let secs = start.elapsed().as_secs_f64();
    let bounded = rows.iter().all(|r| r.1 <= r.2);
    let decreasing = rows.windows(2).all(|w| w[1].3 < w[0].3);
    let summary: Vec<String> = rows.iter().map(|r| format!("2^{}: {:.4}/{:.3}", r.0, r.1, r.2)).collect();
    check(
        bounded && decreasing && secs < 300.0,
        format!("total/3gamma {}; sqrt total decreasing {decreasing}; {secs:.1}s", summary.join(", ")),
    )
}

fn zero_mean_spec(k: u32, k0: u32, k1: u32) -> ModelSpec {
    let f = certify(MeanFixture::Zero, LogVarianceFixture::Constant { level: 0.0 }, 0.75, 2.0).unwrap();
    ModelSpec::new(ModelConfig {
        k,
        k0,
        k1,
        mean: f.mean,
        log_variance: f.log_variance,
        class: f.class,
        sigma: 1.0,
    })
    .unwrap()
}

fn criterion7() -> Outcome {
    let spec = zero_mean_spec(10, 4, 0);
    let samples = 20_000u64;
    let seed = 20_240;
    let root = RngStream::new(seed, 0);
    let draws = |f: &dyn Fn(&mut RngStream) -> ExperimentDraw, offset: u64| -> Vec<ExperimentDraw> {
        (0..samples).map(|i| f(&mut root.substream(offset + i))).collect()
    };
    let forward = draws(&|r| pbar_to_q(&sample_sequence(&spec, false, r), &spec, r).unwrap().draw, 0);
    let native_q = draws(&|r| sample_q(&spec, false, r), samples);
    let reverse = draws(&|r| q_to_pbar(&sample_q(&spec, false, r), &spec, r).unwrap().draw, 2 * samples);
    let native_p = draws(&|r| sample_sequence(&spec, false, r), 3 * samples);
    let broken = draws(
        &|r| pbar_to_q_with(&sample_sequence(&spec, false, r), &spec, false, r).unwrap().draw,
        4 * samples,
    );
    let f = two_sample_report(&forward, &native_q).map_err(|e| e.to_string())?;
    let r = two_sample_report(&reverse, &native_p).map_err(|e| e.to_string())?;
    let b = two_sample_report(&broken, &native_q).map_err(|e| e.to_string())?;
    let in_band = |a: f64| (0.48..=0.52).contains(&a);
    check(
        f.passes(0.001) && r.passes(0.001) && in_band(f.auc.auc) && in_band(r.auc.auc) && b.auc.auc > 0.55,
        format!(
            "forward p {:.3} auc {:.4}; reverse p {:.3} auc {:.4}; broken auc {:.4}",
            f.bonferroni_p, f.auc.auc, r.bonferroni_p, r.auc.auc, b.auc.auc
        ),
    )
}

fn tau_fixtures() -> Vec<LogVarianceFixture> {
    vec![
        LogVarianceFixture::Constant { level: 0.3 },
        LogVarianceFixture::Linear { slope: 0.5, intercept: 0.0 },
        LogVarianceFixture::Quadratic { scale: 1.0 },
        LogVarianceFixture::Smooth { amplitude: 0.1 },
    ]
}

fn block_logs(tau: &LogVarianceFixture, m1: usize) -> Vec<f64> {
    (0..m1)
        .map(|l| tau.block_average(l as f64 / m1 as f64, (l + 1) as f64 / m1 as f64))
        .collect()
}

fn criterion8() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;

    // (a) mass conservation and gamma marginals
    let spec = zero_mean_spec(12, 6, 3);
    let (n, m0, m1) = (spec.n(), spec.m0(), spec.m1());
    let weights = WeightTable::new(m0, m1).unwrap();
    let root = RngStream::new(808, 0);
    let mut worst_mass = 0.0f64;
    let (mut interior, mut edge, mut block) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..3000 {
        let mut rng = root.substream(i);
        let p = sample_sequence(&spec, true, &mut rng);
        let q = ptilde_to_qtilde(&p, &spec, BlockNormalizer::Unbiased, &mut rng).unwrap().draw;
        let vhat = q.variances().unwrap().to_vec();
        let vstar = redistribute_variances(&vhat, &weights, n, &mut rng).unwrap();
        let back = recombine_variances(&vstar, m1).unwrap();
        let (a, b): (f64, f64) = (vhat.iter().sum(), back.iter().sum());
        worst_mass = worst_mass.max((a - b).abs() / a);
        interior.push(vstar[m0 / 2]);
        edge.push(vstar[0]);
        block.push(back[m1 / 2]);
    }
    let cell_shape = (n - m0) as f64 / (2.0 * m0 as f64);
    let block_shape = (n - m0) as f64 / (2.0 * m1 as f64);
    let ks_cell = |x: &[f64]| ks_one_sample(x, |v| gamma_p(cell_shape, v * cell_shape)).p_value;
    let p_interior = ks_cell(&interior);
    let p_edge = ks_cell(&edge);
    let p_block = ks_one_sample(&block, |v| gamma_p(block_shape, v * block_shape)).p_value;
    let a_ok = worst_mass <= 1e-12 && p_interior.min(p_edge).min(p_block) * 3.0 > 0.001;
    ok &= a_ok;
    notes.push(format!(
        "(a) mass {worst_mass:.1e}, KS p {p_interior:.3}/{p_edge:.3}/{p_block:.3} {}",
        pass(a_ok)
    ));

    // (b) smoothed cells stay within M/m₁ of their block
    let mut b_ok = true;
    for tau in tau_fixtures() {
        let big_m = tau.holder_constant();
        for &m1 in &[8usize, 16, 32] {
            let logs = block_logs(&tau, m1);
            let s = smooth_log_variances(&logs, 4 * m1).unwrap();
            for (j, c) in s.cells.iter().enumerate() {
                b_ok &= (c - logs[j / 4]).abs() <= big_m / m1 as f64 * (1.0 + 1e-12);
            }
        }
    }
    ok &= b_ok;
    notes.push(format!("(b) {}", pass(b_ok)));

    // (c) interpolation error of the drift
    let mut c_ok = true;
    let mut worst_c = 0.0f64;
    for tau in tau_fixtures() {
        let big_m = tau.holder_constant();
        let alpha1 = tau.max_alpha1().min(2.0);
        for &m1 in &[8usize, 16, 32] {
            let m1f = m1 as f64;
            let bound = 4.0 * big_m * big_m * m1f.powf(-2.0 * alpha1) + big_m * big_m * m1f.powi(-3);
            let err = drift_l2_error(&tau, m1).unwrap();
            c_ok &= err <= bound;
            if bound > 0.0 {
                worst_c = worst_c.max(err / bound);
            }
        }
    }
    ok &= c_ok;
    notes.push(format!("(c) max error/bound {worst_c:.3} {}", pass(c_ok)));

    // (d) interior smoothing penalties
    let mut d_ok = true;
    let mut worst_d = 0.0f64;
    for tau in tau_fixtures() {
        let big_m = tau.holder_constant();
        for &(n, m0, m1) in &[(4096usize, 64usize, 8usize), (1 << 14, 128, 16), (1 << 16, 256, 32)] {
            let p = smoothing_penalty(&block_logs(&tau, m1), n, m0, Some((big_m, 2.0))).unwrap();
            let env = p.interior_envelope.unwrap();
            for s in &p.exact[1..m1 - 1] {
                d_ok &= *s <= env;
                if env > 0.0 {
                    worst_d = worst_d.max(s / env);
                }
            }
        }
    }
    ok &= d_ok;
    notes.push(format!("(d) max S/envelope {worst_d:.3} {}", pass(d_ok)));
    check(ok, notes.join("; "))
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "violated"
    }
}

fn criterion9() -> Outcome {
    let mut rng = RngStream::new(99, 0);
    let mut worst_round = 0.0f64;
    let mut worst_parseval = 0.0f64;
    for k in 1..=16u32 {
        let n = 1usize << k;
        let x: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let ladder = haar_analyze(&x, 0).unwrap();
        let y = haar_synthesize(&ladder);
        let energy: f64 = x.iter().map(|v| v * v).sum();
        worst_round = worst_round.max(x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        worst_parseval = worst_parseval.max((ladder.sum_of_squares() - energy).abs() / energy);
    }
    let mut mismatch = Vec::new();
    let mut mismatch_ok = true;
    for name in ["zero", "sine", "polynomial", "piecewise"] {
        let f = make_fixture(name, "constant", &FixtureParams::default()).map_err(|e| e.to_string())?;
        let mut worst = 0.0f64;
        for &k in &[6u32, 10, 14] {
            let spec = ModelSpec::new(ModelConfig {
                k,
                k0: 3,
                k1: 0,
                mean: f.mean.clone(),
                log_variance: f.log_variance.clone(),
                class: f.class.clone(),
                sigma: 1.0,
            })
            .map_err(|e| e.to_string())?;
            let t = regression_mean_mismatch(&spec);
            mismatch_ok &= t.verified() == Some(true);
            worst = worst.max(t.value / t.bound.unwrap());
        }
        mismatch.push(format!("{name} {worst:.3}"));
    }
    check(
        worst_round <= 1e-12 && worst_parseval <= 1e-12 && mismatch_ok,
        format!(
            "round trip {worst_round:.1e}, Parseval {worst_parseval:.1e}; mismatch/bound {}",
            mismatch.join(", ")
        ),
    )
}

fn criterion10() -> Outcome {
    let rejected = feasibility(0.7, 2.0);
    let accepted = feasibility(1.0, 2.0);
    let zeta = accepted.zeta;
    let zeta_ok = zeta.is_some_and(|(z0, z1)| z0 >= 0.5 && z1 > 0.25 && z0 + z1 < 1.0 && z0 < 2.0 * z1);
    // just above 3/4 the window 1 − 3/(4α) closes and α₁ must exceed α/(2α−1) ≈ 3/2
    let edge = feasibility(0.76, 1.6);
    let edge_low = feasibility(0.76, 1.4);
    check(
        rejected.verdict == Verdict::Infeasible
            && accepted.verdict == Verdict::Feasible
            && zeta_ok
            && edge.verdict == Verdict::Feasible
            && edge_low.verdict == Verdict::Infeasible,
        format!(
            "alpha=0.7 {:?}; alpha=1, alpha1=2 zeta {:?}; alpha=0.76 needs alpha1 > {:.4}: 1.6 {:?}, 1.4 {:?}",
            rejected.verdict,
            zeta,
            0.76 / (2.0 * 0.76 - 1.0),
            edge.verdict,
            edge_low.verdict
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "divergence closed forms", criterion1),
        (2, "equal-mean gamma bound", criterion2),
        (3, "log-gamma against normal", criterion3),
        (4, "gamma sums", criterion4),
        (5, "log-gamma Taylor remainder", criterion5),
        (6, "homoscedastic pipeline", criterion6),
        (7, "coupling fidelity", criterion7),
        (8, "heteroscedastic machinery", criterion8),
        (9, "Haar layer", criterion9),
        (10, "feasibility", criterion10),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        match run() {
            Ok(detail) => println!("criterion {id} PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id} FAIL {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
