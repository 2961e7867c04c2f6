use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use eqlab::couplings::{
    pbar_to_q, ptilde_to_pcheck, ptilde_to_qtilde, q_to_pbar, qtilde_to_ptilde, qtilde_to_qcheck,
    regression_to_sequence, sequence_to_regression, BlockNormalizer, CouplingOutput,
};
use eqlab::divergence::{
    gamma_same_mean_leading, kl_gamma, kl_gamma_same_mean, kl_gamma_sum, kl_loggamma_vs_normal,
    kl_loggamma_vs_normal_quadrature, kl_normal, kl_quadrature, loggamma_taylor_remainder,
    loggamma_taylor_remainder_direct, GammaParams, GammaSumSpec, NormalParams, Support,
};
use eqlab::experiments::{
    default_grid_cells, sample_q, sample_q_check, sample_regression, sample_sequence, ExperimentDraw,
};
use eqlab::fixtures::{make_fixture, FixtureParams};
use eqlab::harness::{
    choose_coarse_level, decompose_lemma2, decompose_pipeline7, decompose_log_process, decompose_theorem1,
    decompose_theorem1_reverse, evaluate_bounds, rate_sweep, SweepTemplate, Verdict,
};
use eqlab::{Label, ModelConfig, ModelSpec, RngStream};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "eqlab", version, about = "Couplings and divergences between regression experiments")]
struct Cli {
    /// key=value file with model settings; flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// write JSON here instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// write a CSV table here (sweep only)
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ModelArgs {
    /// sample size, a power of two
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    k0: Option<u32>,
    #[arg(long)]
    k1: Option<u32>,
    /// zero, sine, polynomial or piecewise
    #[arg(long = "fixture-mean")]
    fixture_mean: Option<String>,
    /// constant, linear, quadratic or smooth
    #[arg(long = "fixture-logvar")]
    fixture_logvar: Option<String>,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long = "logvar-param")]
    logvar_param: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    alpha1: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum LabelArg {
    P,
    Pbar,
    Q,
    Ptilde,
    Qtilde,
    Pcheck,
    Qcheck,
}

impl From<LabelArg> for Label {
    fn from(l: LabelArg) -> Self {
        match l {
            LabelArg::P => Label::P,
            LabelArg::Pbar => Label::PBar,
            LabelArg::Q => Label::Q,
            LabelArg::Ptilde => Label::PTilde,
            LabelArg::Qtilde => Label::QTilde,
            LabelArg::Pcheck => Label::PCheck,
            LabelArg::Qcheck => Label::QCheck,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum Family {
    Normal,
    Gamma,
    GammaSameMean,
    LoggammaNormal,
    GammaSum,
    Taylor,
}

#[derive(Copy, Clone, ValueEnum)]
enum Which {
    Theorem1,
    Theorem1Reverse,
    Lemma2,
    Pipeline7,
    LogProcess,
}

#[derive(Subcommand)]
enum Command {
    /// Draw from one experiment
    Simulate {
        #[arg(long, value_enum)]
        label: LabelArg,
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Draw from one experiment and map it to another
    Couple {
        #[arg(long, value_enum)]
        from: LabelArg,
        #[arg(long, value_enum)]
        to: LabelArg,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Closed-form divergence with its bound and quadrature oracle
    Divergence {
        #[arg(long, value_enum)]
        family: Family,
        /// comma-separated parameters
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        params: Vec<f64>,
    },
    /// Term-by-term divergence decomposition
    Decompose {
        #[arg(long, value_enum, default_value = "theorem1")]
        which: Which,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Exact totals and optional two-sample checks over n = 2^k
    Sweep {
        #[arg(long = "k-min", default_value_t = 8)]
        k_min: u32,
        #[arg(long = "k-max", default_value_t = 16)]
        k_max: u32,
        #[arg(long, default_value_t = 0)]
        replicates: usize,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Analytic bounds and the feasibility verdict
    Bounds {
        #[command(flatten)]
        model: ModelArgs,
    },
}

/// Parse `key = value` lines; `#` starts a comment.
fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{}:{}: expected key=value", path.display(), i + 1))?;
        out.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(out)
}

struct Settings {
    file: BTreeMap<String, String>,
}

impl Settings {
    fn get<T: std::str::FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            Some(v) => v.parse().map(Some).map_err(|e| anyhow!("config key {key}: {e}")),
            None => Ok(None),
        }
    }

    fn model(&self, m: &ModelArgs) -> Result<ModelConfig> {
        let n: u64 = self.get("n", m.n)?.unwrap_or(1024);
        if !n.is_power_of_two() || n < 4 {
            bail!("n = {n} must be a power of two of at least 4");
        }
        let k = n.trailing_zeros();
        let params = FixtureParams {
            alpha: self.get("alpha", m.alpha)?.unwrap_or(0.75),
            alpha1: self.get("alpha1", m.alpha1)?.unwrap_or(2.0),
            mean_amplitude: self.get("amplitude", m.amplitude)?.unwrap_or(1.0),
            logvar_param: self.get("logvar_param", m.logvar_param)?,
        };
        let mean = self.get("fixture_mean", m.fixture_mean.clone())?.unwrap_or_else(|| "sine".into());
        let logvar = self.get("fixture_logvar", m.fixture_logvar.clone())?.unwrap_or_else(|| "constant".into());
        let fixture = make_fixture(&mean, &logvar, &params)?;
        let k0 = match self.get("k0", m.k0)? {
            Some(k0) => k0,
            None => choose_coarse_level(k, &fixture.class)?,
        };
        let k1 = self.get("k1", m.k1)?.unwrap_or(0);
        Ok(ModelConfig {
            k,
            k0,
            k1,
            mean: fixture.mean,
            log_variance: fixture.log_variance,
            class: fixture.class,
            sigma: self.get("sigma", m.sigma)?.unwrap_or(1.0),
        })
    }

    fn spec(&self, m: &ModelArgs) -> Result<ModelSpec> {
        Ok(ModelSpec::new(self.model(m)?)?)
    }
}

fn sample(label: Label, spec: &ModelSpec, rng: &mut RngStream) -> Result<ExperimentDraw> {
    Ok(match label {
        Label::P => sample_regression(spec, false, rng),
        Label::PCheck => sample_regression(spec, true, rng),
        Label::PBar => sample_sequence(spec, false, rng),
        Label::PTilde => sample_sequence(spec, true, rng),
        Label::Q => sample_q(spec, false, rng),
        Label::QTilde => sample_q(spec, true, rng),
        Label::QCheck => sample_q_check(spec, default_grid_cells(spec), rng)?,
    })
}

fn couple(from: Label, to: Label, spec: &ModelSpec, rng: &mut RngStream) -> Result<CouplingOutput> {
    let source = sample(from, spec, rng)?;
    Ok(match (from, to) {
        (Label::PBar, Label::Q) => pbar_to_q(&source, spec, rng)?,
        (Label::Q, Label::PBar) => q_to_pbar(&source, spec, rng)?,
        (Label::PTilde, Label::QTilde) => ptilde_to_qtilde(&source, spec, BlockNormalizer::Unbiased, rng)?,
        (Label::QTilde, Label::PTilde) => qtilde_to_ptilde(&source, spec, rng)?,
        (Label::P, Label::PBar) | (Label::PCheck, Label::PTilde) => regression_to_sequence(&source, spec)?,
        (Label::PBar, Label::P) => sequence_to_regression(&source, spec)?,
        (Label::PTilde, Label::PCheck) => ptilde_to_pcheck(&source, spec, rng)?,
        (Label::QTilde, Label::QCheck) => qtilde_to_qcheck(&source, spec, default_grid_cells(spec), rng)?,
        (a, b) => bail!("no coupling from {a:?} to {b:?}"),
    })
}

fn expect_params(params: &[f64], count: usize, names: &str) -> Result<()> {
    if params.len() != count {
        bail!("expected {count} parameters ({names}), got {}", params.len());
    }
    Ok(())
}

fn divergence(family: Family, p: &[f64]) -> Result<Value> {
    let (name, exact, bound, oracle): (&str, f64, Option<f64>, Option<f64>) = match family {
        Family::Normal => {
            expect_params(p, 4, "mean1, var1, mean2, var2")?;
            let (a, b) = (NormalParams::new(p[0], p[1])?, NormalParams::new(p[2], p[3])?);
            let q = kl_quadrature(|x| a.ln_pdf(x), |x| b.ln_pdf(x), Support::Real)?.value;
            ("normal", kl_normal(&a, &b), None, Some(q))
        }
        Family::Gamma => {
            expect_params(p, 4, "shape1, scale1, shape2, scale2")?;
            let (a, b) = (GammaParams::new(p[0], p[1])?, GammaParams::new(p[2], p[3])?);
            let q = kl_quadrature(|x| a.ln_pdf(x), |x| b.ln_pdf(x), Support::Positive)?.value;
            ("gamma", kl_gamma(&a, &b), None, Some(q))
        }
        Family::GammaSameMean => {
            expect_params(p, 2, "shape1, shape2")?;
            let (a, b) = (GammaParams::new(p[0], 1.0 / p[0])?, GammaParams::new(p[1], 1.0 / p[1])?);
            let q = kl_quadrature(|x| a.ln_pdf(x), |x| b.ln_pdf(x), Support::Positive)?.value;
            let bound = gamma_same_mean_leading(p[0], p[1])? * (1.0 + 10.0 / p[0]);
            ("gamma_same_mean", kl_gamma_same_mean(p[0], p[1])?, Some(bound), Some(q))
        }
        Family::LoggammaNormal => {
            expect_params(p, 1, "shape")?;
            let r = kl_loggamma_vs_normal(p[0])?;
            ("loggamma_normal", r.exact, Some(r.bound), Some(kl_loggamma_vs_normal_quadrature(p[0])?))
        }
        Family::GammaSum => {
            if p.len() < 3 || p.len() % 2 == 0 {
                bail!("expected shape followed by weight, log-scale pairs");
            }
            let (w, s): (Vec<f64>, Vec<f64>) = p[1..].chunks(2).map(|c| (c[0], c[1])).unzip();
            let r = kl_gamma_sum(&GammaSumSpec::new(w, s, p[0])?)?;
            ("gamma_sum", r.numeric, Some(r.paper_bound), Some(r.joint))
        }
        Family::Taylor => {
            expect_params(p, 2, "alpha, delta")?;
            let r = loggamma_taylor_remainder(p[0], p[1])?;
            let allowance = 10.0 * (p[1].abs().powi(5) / p[0].powi(4) + p[1] * p[1] / p[0].powi(3));
            ("taylor", r.exact, Some(r.expansion + allowance), Some(loggamma_taylor_remainder_direct(p[0], p[1])))
        }
    };
    Ok(json!({
        "family": name,
        "params": p,
        "exact": exact,
        "bound": bound,
        "oracle": oracle,
        "abs_err": oracle.map(|o| (o - exact).abs()),
    }))
}

fn emit(out: Option<&Path>, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display())),
        None => match writeln!(std::io::stdout().lock(), "{text}") {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
            r => r.context("writing stdout"),
        },
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if cli.csv.is_some() && !matches!(cli.command, Command::Sweep { .. }) {
        bail!("--csv applies to sweep only");
    }
    let settings = Settings {
        file: match &cli.config {
            Some(p) => read_config(p)?,
            None => BTreeMap::new(),
        },
    };
    let seed = settings.get("seed", cli.seed)?.unwrap_or(0);
    let out = cli.out.as_deref();
    let mut code = ExitCode::SUCCESS;
    let value = match &cli.command {
        Command::Simulate { label, count, model } => {
            let spec = settings.spec(model)?;
            let root = RngStream::new(seed, 0);
            let draws = (0..*count)
                .map(|i| sample((*label).into(), &spec, &mut root.substream(i)))
                .collect::<Result<Vec<_>>>()?;
            serde_json::to_value(draws)?
        }
        Command::Couple { from, to, model } => {
            let spec = settings.spec(model)?;
            serde_json::to_value(couple((*from).into(), (*to).into(), &spec, &mut RngStream::new(seed, 0))?)?
        }
        Command::Divergence { family, params } => divergence(*family, params)?,
        Command::Decompose { which, model } => {
            let spec = settings.spec(model)?;
            let b = match which {
                Which::Theorem1 => decompose_theorem1(&spec)?,
                Which::Theorem1Reverse => decompose_theorem1_reverse(&spec)?,
                Which::Lemma2 => decompose_lemma2(&spec)?,
                Which::Pipeline7 => decompose_pipeline7(&spec)?,
                Which::LogProcess => decompose_log_process(&spec)?,
            };
            serde_json::to_value(b)?
        }
        Command::Sweep {
            k_min,
            k_max,
            replicates,
            model,
        } => {
            let mut model = model.clone();
            model.n = Some(1 << k_min);
            let config = settings.model(&model)?;
            let template = SweepTemplate {
                mean: config.mean,
                class: config.class,
                sigma: config.sigma,
            };
            let levels: Vec<u32> = (*k_min..=*k_max).collect();
            let report = rate_sweep(&template, &levels, *replicates, seed)?;
            if let Some(p) = &cli.csv {
                fs::write(p, report.to_csv()).with_context(|| format!("writing {}", p.display()))?;
            }
            serde_json::to_value(report)?
        }
        Command::Bounds { model } => {
            let record = evaluate_bounds(&settings.spec(model)?);
            if record.feasibility.verdict == Verdict::Infeasible {
                code = ExitCode::from(2);
            }
            serde_json::to_value(record)?
        }
    };
    emit(out, &value)?;
    Ok(code)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
