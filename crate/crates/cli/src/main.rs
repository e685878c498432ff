use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use substable::asymptotics::{delta_covariance, jacobian_audit, JacMode};
use substable::estimators::{
    estimate_all, AlphaMethod, EstimateOptions, EstimationReport, FrequencyPair, MuScale,
};
use substable::montecarlo::{
    emit_table, preset, run_experiment, ExperimentSpec, TableFormat, DEFAULT_REPLICATIONS,
    PRESET_NAMES,
};
use substable::{sample_subgaussian, PackedSymmetric, RngSpec, SampleMatrix, StableParams};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "substable",
    version,
    about = "Sub-Gaussian alpha-stable simulation and estimation"
)]
struct Cli {
    /// Suppress the human-readable summary on stderr.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a sample and write it as CSV.
    Sample(SampleArgs),
    /// Estimate (alpha, Sigma, mu) from a sample CSV.
    Estimate(EstimateArgs),
    /// Delta-method covariance and confidence intervals.
    Cov(CovArgs),
    /// Bias/RMSE replication study.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    alpha: f64,
    /// Comma-separated location; zero when omitted.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    mu: Option<Vec<f64>>,
    /// Dense p x p scale matrix as headerless CSV.
    #[arg(long)]
    sigma_file: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    stream: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FreqArgs {
    #[arg(long, default_value_t = substable::estimators::DEFAULT_S1)]
    s1: f64,
    #[arg(long, default_value_t = substable::estimators::DEFAULT_S2)]
    s2: f64,
}

impl FreqArgs {
    fn pair(&self) -> Result<FrequencyPair<f64>> {
        Ok(FrequencyPair::new(self.s1, self.s2)?)
    }
}

#[derive(Args)]
struct EstimateArgs {
    /// Sample CSV (header x1..xp); `-` reads stdin.
    #[arg(long, short)]
    input: PathBuf,
    #[command(flatten)]
    freq: FreqArgs,
    /// press, mult or single:k.
    #[arg(long, default_value = "mult")]
    alpha_method: String,
    /// Re-estimate alpha after standardizing each component.
    #[arg(long)]
    rescale: bool,
    /// Replace an indefinite Sigma estimate by its PSD projection.
    #[arg(long)]
    psd_project: bool,
    /// `auto` or comma-separated positive location scales M.
    #[arg(long = "mu-M", default_value = "auto")]
    mu_m: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CovArgs {
    /// Law as JSON: {"alpha", "mu", "sigma": {"dim", "diag", "subdiag"}}.
    #[arg(long, conflicts_with = "report", required_unless_present = "report")]
    params: Option<PathBuf>,
    /// Report written by `estimate`; its estimates are plugged in.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Sample size for standard errors; defaults to the report's n.
    #[arg(long)]
    n: Option<usize>,
    #[command(flatten)]
    freq: FreqArgs,
    #[arg(long, default_value = "fd")]
    jacobian: String,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Audit the analytic Jacobian against finite differences.
    #[arg(long)]
    check: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment spec as JSON.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    spec: Option<PathBuf>,
    /// table2 ... table8.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// csv or markdown.
    #[arg(long, default_value = "csv")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Envelope shared by the JSON outputs.
#[derive(Serialize)]
struct Report {
    params: Value,
    estimates: Value,
    covariance: Value,
    ci: Value,
    meta: Value,
}

fn read_input(path: &Path) -> Result<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn note(quiet: bool, msg: impl AsRef<str>) {
    if !quiet {
        eprintln!("{}", msg.as_ref());
    }
}

fn cmd_sample(a: &SampleArgs, quiet: bool) -> Result<()> {
    let sigma_text = read_input(&a.sigma_file)?;
    let sigma = PackedSymmetric::<f64>::read_csv(sigma_text.as_bytes())?;
    let mu = a.mu.clone().unwrap_or_else(|| vec![0.0; sigma.dim()]);
    let params = StableParams::new(a.alpha, mu, sigma)?;
    let sample = sample_subgaussian(&params, a.n, &RngSpec::new(a.seed, a.stream))?;
    let meta = format!(
        "substable {VERSION} sample alpha={} n={} seed={} stream={} params={}",
        a.alpha,
        a.n,
        a.seed,
        a.stream,
        serde_json::to_string(&params)?
    );
    let mut buf = Vec::new();
    sample.write_csv(&mut buf, Some(&meta))?;
    write_output(a.out.as_deref(), std::str::from_utf8(&buf)?)?;
    note(
        quiet,
        format!(
            "wrote {} x {} sample (seed {}, stream {})",
            a.n,
            params.dim(),
            a.seed,
            a.stream
        ),
    );
    Ok(())
}

/// `seed=<u64>` from the first comment line of a sample CSV.
fn seed_from_comment(text: &str) -> Option<u64> {
    text.lines()
        .take_while(|l| l.starts_with('#'))
        .flat_map(|l| l.split_whitespace())
        .find_map(|tok| tok.strip_prefix("seed=").and_then(|v| v.parse().ok()))
}

fn parse_mu_scale(s: &str) -> Result<MuScale<f64>> {
    if s == "auto" {
        return Ok(MuScale::Auto);
    }
    let vals = s
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| anyhow!("bad --mu-M entry {v:?}: {e}"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MuScale::Fixed(vals))
}

fn report_params(r: &EstimationReport<f64>) -> Value {
    match StableParams::new(r.alpha_hat, r.mu_or_zero(), r.sigma_hat.clone()) {
        Ok(p) => serde_json::to_value(p).unwrap_or(Value::Null),
        Err(_) => Value::Null,
    }
}

fn cmd_estimate(a: &EstimateArgs, quiet: bool) -> Result<()> {
    let fp = a.freq.pair()?;
    let method: AlphaMethod = a.alpha_method.parse()?;
    let text = read_input(&a.input)?;
    let sample = SampleMatrix::<f64>::read_csv(text.as_bytes())?;
    let opts = EstimateOptions {
        alpha_method: method,
        rescale: a.rescale,
        psd_project: a.psd_project,
        mu_scale: parse_mu_scale(&a.mu_m)?,
        diag_s: None,
    };
    let r = estimate_all(&sample, &fp, &opts)?;

    let report = Report {
        params: report_params(&r),
        estimates: serde_json::to_value(&r)?,
        covariance: Value::Null,
        ci: Value::Null,
        meta: json!({
            "command": "estimate",
            "seed": seed_from_comment(&text),
            "s1": fp.s1(),
            "s2": fp.s2(),
            "method": method.to_string(),
            "rescale": a.rescale,
            "psd_project": a.psd_project,
            "mu_M": a.mu_m,
            "input": a.input.display().to_string(),
            "version": VERSION,
        }),
    };
    write_output(
        a.out.as_deref(),
        &(serde_json::to_string_pretty(&report)? + "\n"),
    )?;

    if !quiet {
        eprintln!(
            "n={} p={} s1={} s2={} method={}",
            r.n,
            r.p,
            fp.s1(),
            fp.s2(),
            r.alpha_method
        );
        eprintln!("alpha_hat  {:.6}", r.alpha_hat);
        for (i, row) in r.sigma_hat.to_dense().iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:>12.6e}")).collect();
            eprintln!(
                "{}  {}",
                if i == 0 { "sigma_hat" } else { "         " },
                cells.join(" ")
            );
        }
        let mu: Vec<String> = r
            .mu_hat
            .iter()
            .map(|m| m.map_or("failed".to_string(), |v| format!("{v:.6}")))
            .collect();
        eprintln!("mu_hat     {}", mu.join(" "));
        for w in &r.warnings {
            eprintln!("warning: {w}");
        }
    }
    Ok(())
}

fn params_from_report(v: &Value) -> Result<(StableParams<f64>, usize)> {
    let est: EstimationReport<f64> = serde_json::from_value(
        v.get("estimates")
            .cloned()
            .ok_or_else(|| anyhow!("report has no \"estimates\" field"))?,
    )
    .context("reading estimates from report")?;
    let params = StableParams::new(est.alpha_hat, est.mu_or_zero(), est.sigma_hat.clone()).context(
        "estimated law is not a valid plug-in (alpha must lie below 2 and Sigma must be PSD; try estimate --psd-project)",
    )?;
    Ok((params, est.n))
}

fn cmd_cov(a: &CovArgs, quiet: bool) -> Result<()> {
    let fp = a.freq.pair()?;
    let mode: JacMode = a.jacobian.parse()?;
    let (params, report_n, source) = match (&a.params, &a.report) {
        (Some(p), _) => {
            let params: StableParams<f64> = serde_json::from_str(&read_input(p)?)
                .with_context(|| format!("parsing {}", p.display()))?;
            (params, None, p.display().to_string())
        }
        (None, Some(r)) => {
            let v: Value = serde_json::from_str(&read_input(r)?)
                .with_context(|| format!("parsing {}", r.display()))?;
            let (params, n) = params_from_report(&v)?;
            (params, Some(n), r.display().to_string())
        }
        (None, None) => bail!("one of --params or --report is required"),
    };
    let n =
        a.n.or(report_n)
            .ok_or_else(|| anyhow!("--n is required with --params"))?;
    let d = delta_covariance(&params, &fp, n, a.level, mode)?;

    let audit = if a.check {
        let audit = jacobian_audit(&params, &fp)?;
        note(quiet, audit.render());
        serde_json::to_value(&audit)?
    } else {
        Value::Null
    };

    let ci: Vec<Value> = d
        .labels
        .iter()
        .zip(&d.ci)
        .zip(&d.std_errors)
        .map(|((l, c), s)| json!({"name": l, "lower": c.lower, "upper": c.upper, "std_error": s}))
        .collect();
    let estimates: serde_json::Map<String, Value> = d
        .labels
        .iter()
        .zip(&d.estimates)
        .map(|(l, v)| (l.clone(), json!(v)))
        .collect();
    let report = Report {
        params: serde_json::to_value(&params)?,
        estimates: Value::Object(estimates),
        covariance: json!({"labels": d.labels, "matrix": d.covariance.to_rows(), "lambda_min": d.lambda_min}),
        ci: Value::Array(ci),
        meta: json!({
            "command": "cov",
            "seed": Value::Null,
            "s1": fp.s1(),
            "s2": fp.s2(),
            "method": "mult",
            "jacobian": mode.to_string(),
            "level": a.level,
            "n": n,
            "source": source,
            "audit": audit,
            "version": VERSION,
        }),
    };
    write_output(
        a.out.as_deref(),
        &(serde_json::to_string_pretty(&report)? + "\n"),
    )?;

    if !quiet {
        eprintln!("delta method, n={n}, level={}, jacobian={mode}", a.level);
        for ((l, e), (c, s)) in d
            .labels
            .iter()
            .zip(&d.estimates)
            .zip(d.ci.iter().zip(&d.std_errors))
        {
            eprintln!(
                "{l:<9} {e:>12.6} se {s:>10.3e}  [{:.6}, {:.6}]",
                c.lower, c.upper
            );
        }
    }
    Ok(())
}

fn cmd_bench(a: &BenchArgs, quiet: bool) -> Result<()> {
    let format: TableFormat = a.format.parse()?;
    let mut spec: ExperimentSpec<f64> = match (&a.spec, &a.preset) {
        (Some(p), _) => serde_json::from_str(&read_input(p)?)
            .with_context(|| format!("parsing {}", p.display()))?,
        (None, Some(name)) => {
            if !PRESET_NAMES.contains(&name.as_str()) {
                bail!(
                    "unknown preset {name:?}; expected one of {}",
                    PRESET_NAMES.join(", ")
                );
            }
            preset(name, DEFAULT_REPLICATIONS, 1)?
        }
        (None, None) => bail!("one of --spec or --preset is required"),
    };
    if let Some(r) = a.replications {
        spec.replications = r;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if a.workers.is_some() {
        spec.workers = a.workers;
    }
    let result = run_experiment(&spec)?;
    let estimators: Vec<String> = spec.estimators.iter().map(|e| e.to_string()).collect();
    let meta = format!(
        "substable {VERSION} bench name={} seed={} replications={} s1={} s2={} estimators={}",
        spec.name.as_deref().unwrap_or("custom"),
        spec.seed,
        spec.replications,
        result.s1,
        result.s2,
        estimators.join(",")
    );
    let body = emit_table(&result, format);
    let text = match format {
        TableFormat::Csv => format!("# {meta}\n{body}"),
        TableFormat::Markdown => format!("<!-- {meta} -->\n{body}"),
    };
    write_output(a.out.as_deref(), &text)?;
    for c in &result.cells {
        if c.failures > 0 {
            note(
                quiet,
                format!(
                    "alpha={} n={}: {} of {} replications excluded",
                    c.alpha, c.sample_size, c.failures, c.replications
                ),
            );
        }
    }
    result.check()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Sample(a) => cmd_sample(a, cli.quiet),
        Command::Estimate(a) => cmd_estimate(a, cli.quiet),
        Command::Cov(a) => cmd_cov(a, cli.quiet),
        Command::Bench(a) => cmd_bench(a, cli.quiet),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
