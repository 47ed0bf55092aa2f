//! The `edpm` command line.
//!
//! Parameter precedence, lowest first: built-in defaults, the `--config`
//! file, command-line flags. The output directory is `--out`, else the
//! config key `out`, else `$EDPM_OUT_DIR`, else `./edpm-out`.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 numerical
//! failure, 4 I/O or malformed input file.

pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use edpm::bounds::{exact_bound_mc, l1_bound, min_truncation, BoundQuery, McEstimate};
use edpm::chain::{ChainDraw, ChainWriter};
use edpm::gibbs::{run_chain_with, ChainConfig, InitPolicy, PilotConfig, TruncationSpec};
use edpm::inference::{DrawPredictor, PredictiveSummary};
use edpm::model::{Dataset, Truncation};
use edpm::rng::stream;
use edpm::simstudy::{run_study, simulate, write_report, DgpConfig, StudyConfig};
use edpm::stats::{batch_means_se, mean, sample_sd, sample_variance};
use edpm::urn::{run_pu_chain_with, UrnConfig};
use edpm::{EdpmError, Result};
use serde::Serialize;

use config::{parse_config, parse_sampler, Config, TruncMode};
use manifest::OutputDir;

pub const OUT_DIR_ENV: &str = "EDPM_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "edpm", version, about = "Truncated enriched Dirichlet process mixtures of normals")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// JSON file with flat dotted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// RNG stream index.
    #[arg(long)]
    stream: Option<u64>,
}

#[derive(Args, Debug, Default)]
struct ChainFlags {
    /// Training CSV with header y,x1..xp.
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a training set from the two-regime toy model.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Number of covariates.
        #[arg(long)]
        p: Option<usize>,
        /// Number of observations.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Fit with the truncated blocked Gibbs sampler.
    FitBlocked {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        chain: ChainFlags,
        #[arg(long = "N")]
        trunc_n: Option<usize>,
        #[arg(long = "M")]
        trunc_m: Option<usize>,
        /// Pick (N, M) from a pilot run so that the L1 bound is at most this.
        #[arg(long)]
        auto_eps: Option<f64>,
        /// prior-draw or single-cluster.
        #[arg(long)]
        init: Option<String>,
    },
    /// Fit with the marginal Pólya-urn sampler.
    FitPolya {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        chain: ChainFlags,
        /// Auxiliary components per update.
        #[arg(long)]
        m_aux: Option<usize>,
    },
    /// L1 truncation bound at a given (N, M), plus the minimal pair for --eps.
    Bounds {
        #[command(flatten)]
        common: Common,
        /// Sample size.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long = "N")]
        trunc_n: Option<usize>,
        #[arg(long = "M")]
        trunc_m: Option<usize>,
        #[arg(long)]
        alpha_theta: Option<f64>,
        #[arg(long)]
        alpha_psi: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        /// Also estimate the exact bound with this many Monte-Carlo draws.
        #[arg(long)]
        mc_draws: Option<usize>,
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Smallest (N, M) whose L1 bound is at most --eps.
    ///
    /// Each of the two terms of the bound gets half the budget: N is the
    /// smallest value with 4n exp{-(N-1)/alpha_theta} <= eps/2 and M the
    /// smallest with 4n exp{-(M-1)/alpha_psi} <= eps/2.
    MinTrunc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        alpha_theta: Option<f64>,
        #[arg(long)]
        alpha_psi: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Posterior summaries of E[Y|x] for new covariate rows.
    Predict {
        #[command(flatten)]
        common: Common,
        /// Chain JSONL written by fit-blocked or fit-polya.
        #[arg(long)]
        chain: Option<String>,
        /// CSV with header x1..xp (a leading y column is ignored).
        #[arg(long)]
        x: Option<String>,
    },
    /// Trace summaries and a truncation suggestion for a chain.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        chain: Option<String>,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Simulation study: accuracy and mixing over datasets and samplers.
    Study {
        #[command(flatten)]
        common: Common,
        /// Comma-separated covariate counts.
        #[arg(long, value_delimiter = ',')]
        ps: Option<Vec<usize>>,
        #[arg(long)]
        datasets: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        test_size: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// blocked:N:M, auto:EPS or urn; repeatable.
        #[arg(long = "sampler")]
        samplers: Vec<String>,
    },
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn load_config(common: &Common) -> Result<Config> {
    let mut cfg = match &common.config {
        Some(p) => parse_config(p)?,
        None => Config::default(),
    };
    if common.out.is_some() {
        cfg.out = common.out.clone();
    }
    set(&mut cfg.seed, common.seed);
    set(&mut cfg.stream, common.stream);
    Ok(cfg)
}

fn apply_chain_flags(cfg: &mut Config, f: ChainFlags) {
    if f.data.is_some() {
        cfg.data = f.data;
    }
    set(&mut cfg.chain.iterations, f.iterations);
    set(&mut cfg.chain.burn_in, f.burn_in);
    set(&mut cfg.chain.thin, f.thin);
}

fn out_dir(cfg: &Config) -> PathBuf {
    cfg.out
        .clone()
        .or_else(|| std::env::var(OUT_DIR_ENV).ok().filter(|s| !s.is_empty()))
        .unwrap_or_else(|| "edpm-out".into())
        .into()
}

fn required<'a>(v: &'a Option<String>, key: &str) -> Result<&'a str> {
    v.as_deref().ok_or_else(|| EdpmError::config(key, "required"))
}

fn prefixed(prefix: &str) -> impl Fn(EdpmError) -> EdpmError + '_ {
    move |e| match e {
        EdpmError::Config { key, msg } => EdpmError::config(format!("{prefix}.{key}"), msg),
        e => e,
    }
}

/// Writes the resolved config and the manifest.
fn finish(mut out: OutputDir, sub: &str, cfg: &Config, config_path: Option<&Path>) -> Result<()> {
    let resolved = cfg.resolved_json(sub);
    out.write("config.json", resolved.as_bytes())?;
    let params = serde_json::from_str(&resolved)?;
    let m = out.finish(sub, config_path, params, cfg.seed)?;
    eprintln!("manifest: {}", m.display());
    Ok(())
}

fn chain_config(cfg: &Config) -> Result<ChainConfig> {
    let trunc = match cfg.trunc.mode {
        TruncMode::Fixed => TruncationSpec::Fixed(
            Truncation::new(cfg.trunc.n, cfg.trunc.m).map_err(|e| EdpmError::config("trunc", e.to_string()))?,
        ),
        TruncMode::Auto => TruncationSpec::Auto {
            eps: cfg.trunc.eps,
            pilot: PilotConfig {
                iterations: cfg.pilot.iterations,
                burn_in: cfg.pilot.burn_in,
                trunc: Truncation::new(cfg.pilot.n, cfg.pilot.m)
                    .map_err(|e| EdpmError::config("pilot", e.to_string()))?,
            },
        },
    };
    let c = ChainConfig {
        iterations: cfg.chain.iterations,
        burn_in: cfg.chain.burn_in,
        thin: cfg.chain.thin,
        seed: cfg.seed,
        stream: cfg.stream,
        trunc,
        init: cfg.chain.init,
    };
    c.validate().map_err(prefixed("chain"))?;
    Ok(c)
}

fn open_chain_writer(out: &mut OutputDir) -> Result<ChainWriter<BufWriter<File>>> {
    let jsonl = out.path("chain.jsonl");
    let summary = out.path("chain_summary.csv");
    let w = ChainWriter::new(BufWriter::new(File::create(&jsonl)?))
        .with_summary(Box::new(BufWriter::new(File::create(&summary)?)))?;
    out.record(jsonl);
    out.record(summary);
    Ok(w)
}

fn load_data(cfg: &Config) -> Result<Dataset> {
    Dataset::load(required(&cfg.data, "data")?)
}

fn cmd_simulate(common: Common, p: Option<usize>, n: Option<usize>) -> Result<()> {
    let mut cfg = load_config(&common)?;
    set(&mut cfg.simulate.p, p);
    set(&mut cfg.simulate.n, n);
    if cfg.simulate.n == 0 {
        return Err(EdpmError::config("simulate.n", "must be positive"));
    }
    let dgp = DgpConfig::new(cfg.simulate.p, cfg.simulate.n).map_err(prefixed("simulate"))?;
    let data = simulate(&dgp, &mut stream(cfg.seed, cfg.stream))?;
    let mut out = OutputDir::create(&out_dir(&cfg))?;
    let path = out.path("data.csv");
    data.save(&path)?;
    out.record(path.clone());
    println!("wrote {} rows with p={} to {}", data.n(), data.p(), path.display());
    finish(out, "simulate", &cfg, common.config.as_deref())
}

#[derive(Serialize)]
struct FitReport {
    sampler: &'static str,
    n: usize,
    p: usize,
    draws: usize,
    truncation: Option<(usize, usize)>,
    pilot_concentrations: Option<(f64, f64)>,
}

fn cmd_fit_blocked(
    common: Common,
    flags: ChainFlags,
    trunc_n: Option<usize>,
    trunc_m: Option<usize>,
    auto_eps: Option<f64>,
    init: Option<String>,
) -> Result<()> {
    let mut cfg = load_config(&common)?;
    apply_chain_flags(&mut cfg, flags);
    set(&mut cfg.trunc.n, trunc_n);
    set(&mut cfg.trunc.m, trunc_m);
    if let Some(eps) = auto_eps {
        cfg.trunc.mode = TruncMode::Auto;
        cfg.trunc.eps = eps;
    } else if trunc_n.is_some() || trunc_m.is_some() {
        cfg.trunc.mode = TruncMode::Fixed;
    }
    if let Some(s) = init {
        cfg.chain.init = serde_json::from_value::<InitPolicy>(serde_json::Value::String(s.clone()))
            .map_err(|_| EdpmError::config("chain.init", format!("unknown policy `{s}`")))?;
    }
    let data = load_data(&cfg)?;
    let hp = cfg.prior.resolve(&data)?;
    let cc = chain_config(&cfg)?;

    let mut out = OutputDir::create(&out_dir(&cfg))?;
    let mut writer = open_chain_writer(&mut out)?;
    let summary = run_chain_with(&data, &hp, &cc, |d| writer.write(d))?;
    let report = FitReport {
        sampler: "blocked",
        n: data.n(),
        p: data.p(),
        draws: summary.draws,
        truncation: Some((summary.trunc.n(), summary.trunc.m())),
        pilot_concentrations: summary.pilot_concentrations,
    };
    out.write("fit.json", (serde_json::to_string_pretty(&report)? + "\n").as_bytes())?;
    if let Some((a, b)) = summary.pilot_concentrations {
        println!("pilot estimates: alpha_theta={a:.4} alpha_psi_max={b:.4}");
    }
    println!(
        "blocked Gibbs: N={} M={}, {} draws kept",
        summary.trunc.n(),
        summary.trunc.m(),
        summary.draws
    );
    finish(out, "fit-blocked", &cfg, common.config.as_deref())
}

fn cmd_fit_polya(common: Common, flags: ChainFlags, m_aux: Option<usize>) -> Result<()> {
    let mut cfg = load_config(&common)?;
    apply_chain_flags(&mut cfg, flags);
    set(&mut cfg.urn.m_aux, m_aux);
    let data = load_data(&cfg)?;
    let hp = cfg.prior.resolve(&data)?;
    let uc = UrnConfig {
        iterations: cfg.chain.iterations,
        burn_in: cfg.chain.burn_in,
        thin: cfg.chain.thin,
        seed: cfg.seed,
        stream: cfg.stream,
        m_aux: cfg.urn.m_aux,
    };
    uc.validate().map_err(prefixed("chain"))?;

    let mut out = OutputDir::create(&out_dir(&cfg))?;
    let mut writer = open_chain_writer(&mut out)?;
    let draws = run_pu_chain_with(&data, &hp, &uc, |d| writer.write(d))?;
    let report = FitReport {
        sampler: "polya-urn",
        n: data.n(),
        p: data.p(),
        draws,
        truncation: None,
        pilot_concentrations: None,
    };
    out.write("fit.json", (serde_json::to_string_pretty(&report)? + "\n").as_bytes())?;
    println!("Pólya urn: {draws} draws kept");
    finish(out, "fit-polya", &cfg, common.config.as_deref())
}

#[derive(Serialize)]
struct BoundsReport {
    n: usize,
    alpha_theta: f64,
    alpha_psi: f64,
    trunc_n: Option<usize>,
    trunc_m: Option<usize>,
    bound: Option<f64>,
    eps: f64,
    min_n: usize,
    min_m: usize,
    bound_at_min: f64,
    mc: Option<McEstimate>,
}

fn fmt_bound(v: f64) -> String {
    format!("{v:.3e}")
}

fn bounds_report(cfg: &Config, at_given: bool) -> Result<BoundsReport> {
    let b = &cfg.bounds;
    let to_cfg = |e: EdpmError| match e {
        EdpmError::Domain(m) => EdpmError::config("bounds", m),
        e => e,
    };
    let (min_n, min_m) = min_truncation(b.n, b.alpha_theta, b.alpha_psi, b.eps).map_err(to_cfg)?;
    let at_min = l1_bound(&BoundQuery {
        n: b.n,
        trunc_n: min_n,
        trunc_m: min_m,
        alpha_theta: b.alpha_theta,
        alpha_psi: b.alpha_psi,
    })?;
    let (mut bound, mut mc) = (None, None);
    if at_given {
        let q = BoundQuery {
            n: b.n,
            trunc_n: b.trunc_n,
            trunc_m: b.trunc_m,
            alpha_theta: b.alpha_theta,
            alpha_psi: b.alpha_psi,
        };
        bound = Some(l1_bound(&q).map_err(to_cfg)?.bound);
        if b.mc_draws > 0 {
            mc = Some(exact_bound_mc(&q, b.mc_draws, &mut stream(cfg.seed, cfg.stream)).map_err(to_cfg)?);
        }
    }
    Ok(BoundsReport {
        n: b.n,
        alpha_theta: b.alpha_theta,
        alpha_psi: b.alpha_psi,
        trunc_n: at_given.then_some(b.trunc_n),
        trunc_m: at_given.then_some(b.trunc_m),
        bound,
        eps: b.eps,
        min_n,
        min_m,
        bound_at_min: at_min.bound,
        mc,
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_bounds(
    common: Common,
    n: Option<usize>,
    trunc_n: Option<usize>,
    trunc_m: Option<usize>,
    alpha_theta: Option<f64>,
    alpha_psi: Option<f64>,
    eps: Option<f64>,
    mc_draws: Option<usize>,
    json: bool,
) -> Result<()> {
    let mut cfg = load_config(&common)?;
    let b = &mut cfg.bounds;
    set(&mut b.n, n);
    set(&mut b.trunc_n, trunc_n);
    set(&mut b.trunc_m, trunc_m);
    set(&mut b.alpha_theta, alpha_theta);
    set(&mut b.alpha_psi, alpha_psi);
    set(&mut b.eps, eps);
    set(&mut b.mc_draws, mc_draws);
    let r = bounds_report(&cfg, true)?;
    let text = serde_json::to_string_pretty(&r)? + "\n";
    if json {
        print!("{text}");
    } else {
        println!(
            "L1 bound at N={} M={}: {}",
            cfg.bounds.trunc_n,
            cfg.bounds.trunc_m,
            fmt_bound(r.bound.unwrap_or(f64::NAN))
        );
        if let Some(mc) = r.mc {
            println!("exact bound (Monte Carlo): {} ± {}", fmt_bound(mc.estimate), fmt_bound(mc.stderr));
        }
        println!(
            "minimal truncation for eps={}: N={} M={} (bound {})",
            r.eps,
            r.min_n,
            r.min_m,
            fmt_bound(r.bound_at_min)
        );
    }
    let mut out = OutputDir::create(&out_dir(&cfg))?;
    out.write("bounds.json", text.as_bytes())?;
    finish(out, "bounds", &cfg, common.config.as_deref())
}

fn cmd_min_trunc(
    common: Common,
    n: Option<usize>,
    alpha_theta: Option<f64>,
    alpha_psi: Option<f64>,
    eps: Option<f64>,
    json: bool,
) -> Result<()> {
    let mut cfg = load_config(&common)?;
    let b = &mut cfg.bounds;
    set(&mut b.n, n);
    set(&mut b.alpha_theta, alpha_theta);
    set(&mut b.alpha_psi, alpha_psi);
    set(&mut b.eps, eps);
    let r = bounds_report(&cfg, false)?;
    let text = serde_json::to_string_pretty(&r)? + "\n";
    if json {
        print!("{text}");
    } else {
        println!("N={} M={}", r.min_n, r.min_m);
        println!("L1 bound at this pair: {}", fmt_bound(r.bound_at_min));
    }
    let mut out = OutputDir::create(&out_dir(&cfg))?;
    out.write("min_trunc.json", text.as_bytes())?;
    finish(out, "min-trunc", &cfg, common.config.as_deref())
}

/// Streams a chain file draw by draw.
fn for_each_draw(path: &str, mut f: impl FnMut(&ChainDraw) -> Result<()>) -> Result<usize> {
    let reader = BufReader::new(File::open(path)?);
    let mut count = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let draw: ChainDraw = serde_json::from_str(&line)
            .map_err(|e| EdpmError::Data(format!("{path} line {}: {e}", i + 1)))?;
        draw.validate()
            .map_err(|e| EdpmError::Data(format!("{path} line {}: {e}", i + 1)))?;
        f(&draw)?;
        count += 1;
    }
    if count == 0 {
        return Err(EdpmError::Data(format!("{path} holds no draws")));
    }
    Ok(count)
}

/// Reads covariate rows from a CSV headed `x1..xp` or `y,x1..xp`.
pub fn read_covariates(path: &str) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let skip = usize::from(headers.first().map(String::as_str) == Some("y"));
    let xs = &headers[skip..];
    if xs.is_empty() || xs.iter().enumerate().any(|(l, h)| *h != format!("x{}", l + 1)) {
        return Err(EdpmError::Data(format!(
            "{path}: header must be x1..xp, optionally after y; got {}",
            headers.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != headers.len() {
            return Err(EdpmError::Data(format!("{path} row {}: expected {} fields", i + 1, headers.len())));
        }
        let row = rec
            .iter()
            .skip(skip)
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| EdpmError::Data(format!("{path} row {}: bad number `{f}`", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(EdpmError::Data(format!("{path} has no rows")));
    }
    Ok(rows)
}

fn cmd_predict(common: Common, chain: Option<String>, x: Option<String>) -> Result<()> {
    let mut cfg = load_config(&common)?;
    if chain.is_some() {
        cfg.predict.chain = chain;
    }
    if x.is_some() {
        cfg.predict.x = x;
    }
    let chain_path = required(&cfg.predict.chain, "predict.chain")?.to_string();
    let rows = read_covariates(required(&cfg.predict.x, "predict.x")?)?;
    let mut traces: Vec<Vec<f64>> = vec![Vec::new(); rows.len()];
    for_each_draw(&chain_path, |d| {
        if d.p() != rows[0].len() {
            return Err(EdpmError::Data(format!(
                "chain has p={} but the rows have {} covariates",
                d.p(),
                rows[0].len()
            )));
        }
        let pred = DrawPredictor::new(d);
        for (t, r) in traces.iter_mut().zip(&rows) {
            t.push(pred.mean(r)?);
        }
        Ok(())
    })?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "mean", "q025", "q25", "q75", "q975"])?;
    for (i, t) in traces.iter().enumerate() {
        let s = PredictiveSummary::of(t)?;
        let mut rec = vec![(i + 1).to_string(), format!("{:?}", s.mean)];
        rec.extend(s.quantiles.iter().map(|q| format!("{q:?}")));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| EdpmError::Io(e.into_error()))?;
    let mut out = OutputDir::create(&out_dir(&cfg))?;
    let p = out.write("predict.csv", &bytes)?;
    println!("{} rows summarised over {} draws -> {}", rows.len(), traces[0].len(), p.display());
    finish(out, "predict", &cfg, common.config.as_deref())
}

#[derive(Serialize)]
struct TraceSummary {
    name: &'static str,
    mean: f64,
    sd: f64,
    mcse: f64,
    ess: f64,
}

#[derive(Serialize)]
struct DiagnoseReport {
    draws: usize,
    n: usize,
    traces: Vec<TraceSummary>,
    alpha_theta_hat: f64,
    alpha_psi_max_hat: f64,
    eps: f64,
    suggested_n: usize,
    suggested_m: usize,
}

fn cmd_diagnose(common: Common, chain: Option<String>, eps: Option<f64>) -> Result<()> {
    let mut cfg = load_config(&common)?;
    if chain.is_some() {
        cfg.diagnose.chain = chain;
    }
    set(&mut cfg.diagnose.eps, eps);
    let path = required(&cfg.diagnose.chain, "diagnose.chain")?.to_string();
    let (mut at, mut ap, mut occ) = (Vec::new(), Vec::new(), Vec::new());
    let mut n = 0;
    let draws = for_each_draw(&path, |d| {
        at.push(d.alpha_theta);
        ap.push(d.alpha_psi_max());
        occ.push(d.occupancy().iter().filter(|&&c| c > 0).count() as f64);
        n = d.k.len();
        Ok(())
    })?;
    if draws < 4 {
        return Err(EdpmError::Data(format!("{path}: need at least 4 draws, found {draws}")));
    }
    let summarize = |name, xs: &[f64]| {
        let mcse = batch_means_se(xs);
        TraceSummary {
            name,
            mean: mean(xs),
            sd: sample_sd(xs),
            mcse,
            ess: if mcse > 0.0 { sample_variance(xs) / (mcse * mcse) } else { xs.len() as f64 },
        }
    };
    let (a_t, a_p) = (mean(&at), mean(&ap));
    let (sn, sm) = min_truncation(n, a_t, a_p, cfg.diagnose.eps)
        .map_err(|e| EdpmError::config("diagnose.eps", e.to_string()))?;
    let report = DiagnoseReport {
        draws,
        n,
        traces: vec![
            summarize("alpha_theta", &at),
            summarize("alpha_psi_max", &ap),
            summarize("occupied_theta_clusters", &occ),
        ],
        alpha_theta_hat: a_t,
        alpha_psi_max_hat: a_p,
        eps: cfg.diagnose.eps,
        suggested_n: sn,
        suggested_m: sm,
    };
    println!("{draws} draws, n={n}");
    println!("{:<26}{:>12}{:>12}{:>12}{:>10}", "trace", "mean", "sd", "mcse", "ess");
    for t in &report.traces {
        println!("{:<26}{:>12.4}{:>12.4}{:>12.4}{:>10.0}", t.name, t.mean, t.sd, t.mcse, t.ess);
    }
    println!("suggested truncation for eps={}: N={sn} M={sm}", cfg.diagnose.eps);
    let mut out = OutputDir::create(&out_dir(&cfg))?;
    out.write("diagnose.json", (serde_json::to_string_pretty(&report)? + "\n").as_bytes())?;
    finish(out, "diagnose", &cfg, common.config.as_deref())
}

#[allow(clippy::too_many_arguments)]
fn cmd_study(
    common: Common,
    ps: Option<Vec<usize>>,
    datasets: Option<usize>,
    n: Option<usize>,
    test_size: Option<usize>,
    iterations: Option<usize>,
    burn_in: Option<usize>,
    batch_size: Option<usize>,
    samplers: Vec<String>,
) -> Result<()> {
    let mut cfg = load_config(&common)?;
    let s = &mut cfg.study;
    set(&mut s.ps, ps);
    set(&mut s.datasets, datasets);
    set(&mut s.n, n);
    set(&mut s.test_size, test_size);
    set(&mut s.batch_size, batch_size);
    if !samplers.is_empty() {
        s.samplers = samplers;
    }
    set(&mut cfg.chain.iterations, iterations);
    set(&mut cfg.chain.burn_in, burn_in);
    let sc = StudyConfig {
        ps: cfg.study.ps.clone(),
        datasets: cfg.study.datasets,
        n: cfg.study.n,
        test_size: cfg.study.test_size,
        iterations: cfg.chain.iterations,
        burn_in: cfg.chain.burn_in,
        thin: cfg.chain.thin,
        samplers: cfg.study.samplers.iter().map(|s| parse_sampler(s)).collect::<Result<_>>()?,
        seed: cfg.seed,
        batch_size: cfg.study.batch_size,
        m_aux: cfg.urn.m_aux,
        pilot: PilotConfig {
            iterations: cfg.pilot.iterations,
            burn_in: cfg.pilot.burn_in,
            trunc: Truncation::new(cfg.pilot.n, cfg.pilot.m).map_err(|e| EdpmError::config("pilot", e.to_string()))?,
        },
        figure_points: cfg.study.figure_points,
    };
    sc.validate().map_err(prefixed("study"))?;
    let report = run_study(&sc)?;
    let mut out = OutputDir::create(&out_dir(&cfg))?;
    for p in write_report(&report, out.root())? {
        out.record(p);
    }
    println!("{:<4}{:<28}{:>10}{:>10}{:>10}{:>10}", "p", "sampler", "l1", "sd", "l2", "sd");
    for a in &report.accuracy {
        println!(
            "{:<4}{:<28}{:>10.4}{:>10.4}{:>10.4}{:>10.4}",
            a.p, a.sampler, a.l1_mean, a.l1_sd, a.l2_mean, a.l2_sd
        );
    }
    finish(out, "study", &cfg, common.config.as_deref())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { common, p, n } => cmd_simulate(common, p, n),
        Command::FitBlocked {
            common,
            chain,
            trunc_n,
            trunc_m,
            auto_eps,
            init,
        } => cmd_fit_blocked(common, chain, trunc_n, trunc_m, auto_eps, init),
        Command::FitPolya { common, chain, m_aux } => cmd_fit_polya(common, chain, m_aux),
        Command::Bounds {
            common,
            n,
            trunc_n,
            trunc_m,
            alpha_theta,
            alpha_psi,
            eps,
            mc_draws,
            json,
        } => cmd_bounds(common, n, trunc_n, trunc_m, alpha_theta, alpha_psi, eps, mc_draws, json),
        Command::MinTrunc {
            common,
            n,
            alpha_theta,
            alpha_psi,
            eps,
            json,
        } => cmd_min_trunc(common, n, alpha_theta, alpha_psi, eps, json),
        Command::Predict { common, chain, x } => cmd_predict(common, chain, x),
        Command::Diagnose { common, chain, eps } => cmd_diagnose(common, chain, eps),
        Command::Study {
            common,
            ps,
            datasets,
            n,
            test_size,
            iterations,
            burn_in,
            batch_size,
            samplers,
        } => cmd_study(common, ps, datasets, n, test_size, iterations, burn_in, batch_size, samplers),
    }
}

pub fn exit_code(e: &EdpmError) -> i32 {
    match e {
        EdpmError::Config { .. } | EdpmError::Domain(_) => 2,
        EdpmError::Numerical(_) | EdpmError::Matrix(_) | EdpmError::InvalidStick(_) => 3,
        EdpmError::Io(_) | EdpmError::Csv(_) | EdpmError::Json(_) | EdpmError::Data(_) => 4,
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit status.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli.cmd) {
        Ok(()) => {
            let _ = std::io::stdout().flush();
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
