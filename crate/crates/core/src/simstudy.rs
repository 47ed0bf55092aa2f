//! The two-regime toy model and the accuracy and mixing protocols run on it.
//!
//! Covariates are multivariate normal with mean 4, variance 4, and
//! covariance 3.5 inside two blocks: `{x_1} ∪ {x_l : l even}` and
//! `{x_l : l odd, l ≥ 3}`. The response follows `y = x_1 + ε` near
//! `x_1 = 4` and `y = 4.5 + 0.1 x_1 + ε` near `x_1 = 6`, switching smoothly
//! with a Gaussian-kernel weight.

use std::path::{Path, PathBuf};

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::ChainDraw;
use crate::error::{EdpmError, Result};
use crate::gibbs::{run_chain_with, ChainConfig, InitPolicy, PilotConfig, TruncationSpec};
use crate::inference::{prediction_errors, DrawPredictor, PredictiveSummary, QUANTILE_LEVELS};
use crate::model::{Dataset, Hyperparameters, Truncation};
use crate::rng::stream;
use crate::stats::{mean, sample_sd};
use crate::urn::{run_pu_chain_with, UrnConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub p: usize,
    pub n: usize,
    pub beta1: [f64; 2],
    pub sigma1_sq: f64,
    pub beta2: [f64; 2],
    pub sigma2_sq: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub x_mean: f64,
    pub x_var: f64,
    pub x_cov: f64,
}

impl DgpConfig {
    pub fn new(p: usize, n: usize) -> Result<Self> {
        let cfg = DgpConfig {
            p,
            n,
            beta1: [0.0, 1.0],
            sigma1_sq: 1.0 / 16.0,
            beta2: [4.5, 0.1],
            sigma2_sq: 1.0 / 8.0,
            mu1: 4.0,
            mu2: 6.0,
            omega1: 2.0,
            omega2: 2.0,
            x_mean: 4.0,
            x_var: 4.0,
            x_cov: 3.5,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(EdpmError::config("p", "must be positive"));
        }
        if !(self.sigma1_sq > 0.0 && self.sigma2_sq > 0.0 && self.omega1 > 0.0 && self.omega2 > 0.0) {
            return Err(EdpmError::config("dgp", "variances and precisions must be positive"));
        }
        self.covariance_cholesky().map(|_| ())
    }

    /// Block of covariate `l` (0-based): `true` for the block holding `x_1`.
    pub fn in_first_block(l: usize) -> bool {
        // 1-based index 1 or even
        l == 0 || (l + 1) % 2 == 0
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.p, self.p, |h, l| {
            if h == l {
                self.x_var
            } else if Self::in_first_block(h) == Self::in_first_block(l) {
                self.x_cov
            } else {
                0.0
            }
        })
    }

    fn covariance_cholesky(&self) -> Result<DMatrix<f64>> {
        Cholesky::new(self.covariance())
            .map(|c| c.l())
            .ok_or_else(|| EdpmError::Matrix("covariate covariance is not positive definite".into()))
    }
}

/// Probability of the first regime at `x1`.
pub fn mixing_weight(x1: f64, cfg: &DgpConfig) -> f64 {
    let a = cfg.omega1.ln() - 0.5 * cfg.omega1 * (x1 - cfg.mu1).powi(2);
    let b = cfg.omega2.ln() - 0.5 * cfg.omega2 * (x1 - cfg.mu2).powi(2);
    1.0 / (1.0 + (b - a).exp())
}

pub fn true_conditional_mean(x1: f64, cfg: &DgpConfig) -> f64 {
    let w = mixing_weight(x1, cfg);
    w * (cfg.beta1[0] + cfg.beta1[1] * x1) + (1.0 - w) * (cfg.beta2[0] + cfg.beta2[1] * x1)
}

pub fn generate_covariates<R: Rng + ?Sized>(cfg: &DgpConfig, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let l = cfg.covariance_cholesky()?;
    Ok((0..n)
        .map(|_| {
            let z = DVector::from_fn(cfg.p, |_, _| StandardNormal.sample(rng));
            (&l * z).iter().map(|v| v + cfg.x_mean).collect()
        })
        .collect())
}

pub fn generate_response<R: Rng + ?Sized>(rows: &[Vec<f64>], cfg: &DgpConfig, rng: &mut R) -> Vec<f64> {
    rows.iter()
        .map(|r| {
            let x1 = r[0];
            let z: f64 = StandardNormal.sample(rng);
            if rng.random::<f64>() < mixing_weight(x1, cfg) {
                cfg.beta1[0] + cfg.beta1[1] * x1 + cfg.sigma1_sq.sqrt() * z
            } else {
                cfg.beta2[0] + cfg.beta2[1] * x1 + cfg.sigma2_sq.sqrt() * z
            }
        })
        .collect()
}

pub fn simulate<R: Rng + ?Sized>(cfg: &DgpConfig, rng: &mut R) -> Result<Dataset> {
    let rows = generate_covariates(cfg, cfg.n, rng)?;
    let y = generate_response(&rows, cfg, rng);
    Dataset::from_rows(y, &rows)
}

/// Base-measure defaults for fitting the toy model: least-squares `β_0`,
/// unit-information `C_y = X*ᵀX*/n`, `a = b = 2` at both levels,
/// `m` = covariate means, `c_x = 0.5`, `Gamma(1, 1)` concentration priors.
pub fn default_hyperparameters(data: &Dataset) -> Result<Hyperparameters> {
    let (n, p) = (data.n(), data.p());
    let x = DMatrix::from_fn(n, p + 1, |r, c| if c == 0 { 1.0 } else { data.row(r)[c - 1] });
    let y = DVector::from_column_slice(data.y());
    let xtx = x.tr_mul(&x);
    let chol = Cholesky::new(xtx.clone())
        .ok_or_else(|| EdpmError::Matrix("design matrix is rank deficient".into()))?;
    let beta0 = chol.solve(&x.tr_mul(&y));
    let c_y = xtx / n as f64;
    let mut hp = Hyperparameters::default_for(p);
    hp.beta0 = beta0.iter().copied().collect();
    hp.c_y = (0..=p).map(|i| (0..=p).map(|j| c_y[(i, j)]).collect()).collect();
    hp.m = (0..p).map(|l| data.column_mean(l)).collect();
    hp.c_x = vec![0.5; p];
    Ok(hp)
}

/// New subjects with `x_1` evenly spaced on `[-0.5, 8]` and every other
/// covariate at its conditional mean given `x_1`.
pub fn figure_grid(cfg: &DgpConfig, points: usize) -> Vec<Vec<f64>> {
    let slope = cfg.x_cov / cfg.x_var;
    (0..points)
        .map(|i| {
            let x1 = -0.5 + 8.5 * i as f64 / (points - 1).max(1) as f64;
            (0..cfg.p)
                .map(|l| {
                    if l == 0 {
                        x1
                    } else if DgpConfig::in_first_block(l) {
                        cfg.x_mean + slope * (x1 - cfg.x_mean)
                    } else {
                        cfg.x_mean
                    }
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingRow {
    pub statistic: String,
    /// Mean over batches, averaged over subjects.
    pub mean: f64,
    /// Standard deviation over batches, averaged over subjects.
    pub sd: f64,
}

pub const MIXING_STATISTICS: [&str; 5] = ["mean", "q025", "q25", "q75", "q975"];

/// Batch summaries of per-subject `E[Y|x]` traces. For each subject and each
/// statistic (mean and the four quantiles), the statistic is computed per
/// window of `batch_size` draws; its mean and SD across windows are then
/// averaged over subjects. Draws beyond the last whole batch are dropped.
pub fn batch_mixing_stats(traces: &[Vec<f64>], batch_size: usize) -> Result<Vec<MixingRow>> {
    if traces.is_empty() || batch_size == 0 {
        return Err(EdpmError::domain("need at least one subject and a positive batch size"));
    }
    let mut means = [0.0; 5];
    let mut sds = [0.0; 5];
    for t in traces {
        let batches = t.len() / batch_size;
        if batches < 2 {
            return Err(EdpmError::domain(format!(
                "{} draws give {batches} batches of {batch_size}; need at least 2",
                t.len()
            )));
        }
        let mut per: [Vec<f64>; 5] = Default::default();
        for b in t.chunks_exact(batch_size) {
            let s = PredictiveSummary::of(b)?;
            per[0].push(s.mean);
            for (i, q) in s.quantiles.iter().enumerate() {
                per[i + 1].push(*q);
            }
        }
        for i in 0..5 {
            means[i] += mean(&per[i]);
            sds[i] += sample_sd(&per[i]);
        }
    }
    let m = traces.len() as f64;
    Ok((0..5)
        .map(|i| MixingRow {
            statistic: MIXING_STATISTICS[i].to_string(),
            mean: means[i] / m,
            sd: sds[i] / m,
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SamplerSpec {
    Blocked { n: usize, m: usize },
    BlockedAuto { eps: f64 },
    Urn,
}

impl SamplerSpec {
    pub fn label(&self) -> String {
        match self {
            SamplerSpec::Blocked { n, m } => format!("blocked(N={n},M={m})"),
            SamplerSpec::BlockedAuto { eps } => format!("blocked-auto(eps={eps})"),
            SamplerSpec::Urn => "urn".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub ps: Vec<usize>,
    pub datasets: usize,
    pub n: usize,
    pub test_size: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub samplers: Vec<SamplerSpec>,
    pub seed: u64,
    pub batch_size: usize,
    pub m_aux: usize,
    pub pilot: PilotConfig,
    pub figure_points: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            ps: vec![1, 5, 10, 15],
            datasets: 10,
            n: 200,
            test_size: 200,
            iterations: 100_000,
            burn_in: 20_000,
            thin: 1,
            samplers: vec![SamplerSpec::Blocked { n: 10, m: 50 }, SamplerSpec::BlockedAuto { eps: 0.01 }],
            seed: 0,
            batch_size: 100,
            m_aux: 3,
            pilot: PilotConfig::default(),
            figure_points: 20,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ps.is_empty() || self.ps.contains(&0) {
            return Err(EdpmError::config("ps", "need at least one positive p"));
        }
        if self.datasets == 0 || self.n < 2 || self.test_size == 0 {
            return Err(EdpmError::config("datasets", "datasets, n and test_size must be positive"));
        }
        if self.samplers.is_empty() {
            return Err(EdpmError::config("samplers", "need at least one sampler"));
        }
        if self.batch_size == 0 {
            return Err(EdpmError::config("batch_size", "must be positive"));
        }
        for s in &self.samplers {
            if let SamplerSpec::Blocked { n, m } = s {
                Truncation::new(*n, *m).map_err(|e| EdpmError::config("samplers", e.to_string()))?;
            }
        }
        self.chain_config(SamplerSpec::Urn, 0).validate()?;
        self.urn_config(0).validate()
    }

    fn chain_config(&self, s: SamplerSpec, stream: u64) -> ChainConfig {
        let trunc = match s {
            SamplerSpec::Blocked { n, m } => TruncationSpec::Fixed(Truncation::new(n.max(2), m.max(2)).expect("valid")),
            SamplerSpec::BlockedAuto { eps } => TruncationSpec::Auto { eps, pilot: self.pilot },
            SamplerSpec::Urn => TruncationSpec::Fixed(Truncation::new(2, 2).expect("valid")),
        };
        ChainConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            seed: self.seed,
            stream,
            trunc,
            init: InitPolicy::PriorDraw,
        }
    }

    fn urn_config(&self, stream: u64) -> UrnConfig {
        UrnConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            seed: self.seed,
            stream,
            m_aux: self.m_aux,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FigureRow {
    pub x1: f64,
    pub truth: f64,
    pub summary: PredictiveSummary,
}

/// One dataset fitted by one sampler.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub p: usize,
    pub dataset: usize,
    pub sampler: String,
    pub hyperparameters: Hyperparameters,
    pub truncation: Option<(usize, usize)>,
    pub draws: usize,
    pub l1: f64,
    pub l2: f64,
    pub mixing: Option<Vec<MixingRow>>,
    pub figure: Vec<FigureRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub p: usize,
    pub sampler: String,
    pub datasets: usize,
    pub l1_mean: f64,
    pub l1_sd: f64,
    pub l2_mean: f64,
    pub l2_sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingSummary {
    pub p: usize,
    pub sampler: String,
    /// Averaged over datasets.
    pub rows: Vec<MixingRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub cells: Vec<CellResult>,
    pub accuracy: Vec<AccuracyRow>,
    pub mixing: Vec<MixingSummary>,
}

fn data_stream(p: usize, d: usize) -> u64 {
    ((p as u64) << 40) | ((d as u64) << 20)
}

/// Training set and test covariates of dataset `d` at dimension `p`.
pub fn study_data(cfg: &StudyConfig, p: usize, d: usize) -> Result<(DgpConfig, Dataset, Vec<Vec<f64>>)> {
    let dgp = DgpConfig::new(p, cfg.n)?;
    let mut rng = stream(cfg.seed, data_stream(p, d));
    let data = simulate(&dgp, &mut rng)?;
    let test = generate_covariates(&dgp, cfg.test_size, &mut rng)?;
    Ok((dgp, data, test))
}

/// Fits one cell and reduces its chain to per-subject `E[Y|x]` traces on the
/// fly, so draws are never stored.
pub fn run_cell(cfg: &StudyConfig, p: usize, d: usize, s_idx: usize) -> Result<CellResult> {
    let sampler = cfg.samplers[s_idx];
    let (dgp, data, test) = study_data(cfg, p, d)?;
    let hp = default_hyperparameters(&data)?;
    let grid = if d == 0 { figure_grid(&dgp, cfg.figure_points) } else { Vec::new() };
    let points: Vec<&Vec<f64>> = test.iter().chain(grid.iter()).collect();
    let mut traces: Vec<Vec<f64>> = vec![Vec::new(); points.len()];
    let mut sink = |draw: &ChainDraw| -> Result<()> {
        let pred = DrawPredictor::new(draw);
        for (t, x) in traces.iter_mut().zip(&points) {
            t.push(pred.mean(x)?);
        }
        Ok(())
    };
    let chain_stream = data_stream(p, d) | (s_idx as u64 + 1);
    let (truncation, draws) = match sampler {
        SamplerSpec::Urn => (None, run_pu_chain_with(&data, &hp, &cfg.urn_config(chain_stream), &mut sink)?),
        _ => {
            let r = run_chain_with(&data, &hp, &cfg.chain_config(sampler, chain_stream), &mut sink)?;
            (Some((r.trunc.n(), r.trunc.m())), r.draws)
        }
    };
    let (test_traces, grid_traces) = traces.split_at(test.len());
    let estimates: Vec<f64> = test_traces.iter().map(|t| mean(t)).collect();
    let truths: Vec<f64> = test.iter().map(|x| true_conditional_mean(x[0], &dgp)).collect();
    let (l1, l2) = prediction_errors(&estimates, &truths)?;
    let mixing = batch_mixing_stats(test_traces, cfg.batch_size).ok();
    let figure = grid
        .iter()
        .zip(grid_traces)
        .map(|(x, t)| {
            Ok(FigureRow {
                x1: x[0],
                truth: true_conditional_mean(x[0], &dgp),
                summary: PredictiveSummary::of(t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CellResult {
        p,
        dataset: d,
        sampler: sampler.label(),
        hyperparameters: hp,
        truncation,
        draws,
        l1,
        l2,
        mixing,
        figure,
    })
}

/// Aggregates cells into accuracy rows (mean and SD over datasets) and
/// mixing tables (averaged over datasets).
pub fn aggregate(cells: &[CellResult]) -> (Vec<AccuracyRow>, Vec<MixingSummary>) {
    let mut keys: Vec<(usize, String)> = Vec::new();
    for c in cells {
        let key = (c.p, c.sampler.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    let mut accuracy = Vec::new();
    let mut mixing = Vec::new();
    for (p, sampler) in keys {
        let group: Vec<&CellResult> = cells.iter().filter(|c| c.p == p && c.sampler == sampler).collect();
        let l1: Vec<f64> = group.iter().map(|c| c.l1).collect();
        let l2: Vec<f64> = group.iter().map(|c| c.l2).collect();
        let sd = |v: &[f64]| if v.len() > 1 { sample_sd(v) } else { 0.0 };
        accuracy.push(AccuracyRow {
            p,
            sampler: sampler.clone(),
            datasets: group.len(),
            l1_mean: mean(&l1),
            l1_sd: sd(&l1),
            l2_mean: mean(&l2),
            l2_sd: sd(&l2),
        });
        let tables: Vec<&Vec<MixingRow>> = group.iter().filter_map(|c| c.mixing.as_ref()).collect();
        if !tables.is_empty() {
            let rows = (0..MIXING_STATISTICS.len())
                .map(|i| MixingRow {
                    statistic: MIXING_STATISTICS[i].to_string(),
                    mean: tables.iter().map(|t| t[i].mean).sum::<f64>() / tables.len() as f64,
                    sd: tables.iter().map(|t| t[i].sd).sum::<f64>() / tables.len() as f64,
                })
                .collect();
            mixing.push(MixingSummary { p, sampler, rows });
        }
    }
    (accuracy, mixing)
}

pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize, usize)> = cfg
        .ps
        .iter()
        .flat_map(|&p| (0..cfg.datasets).flat_map(move |d| (0..cfg.samplers.len()).map(move |s| (p, d, s))))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(p, d, s)| run_cell(cfg, p, d, s))
        .collect::<Result<Vec<_>>>()?;
    let (accuracy, mixing) = aggregate(&cells);
    Ok(StudyReport {
        config: cfg.clone(),
        cells,
        accuracy,
        mixing,
    })
}

/// Writes `report.json`, `cells.csv`, `accuracy.csv`, `mixing.csv` and
/// `figure.csv` into `dir`; returns the paths written.
pub fn write_report(report: &StudyReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    let json = dir.join("report.json");
    std::fs::write(&json, serde_json::to_string_pretty(report)?)?;
    out.push(json);

    let path = dir.join("cells.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["p", "sampler", "dataset", "N", "M", "draws", "l1", "l2"])?;
    for c in &report.cells {
        let (tn, tm) = c.truncation.map_or((String::new(), String::new()), |(a, b)| (a.to_string(), b.to_string()));
        w.write_record([
            c.p.to_string(),
            c.sampler.clone(),
            c.dataset.to_string(),
            tn,
            tm,
            c.draws.to_string(),
            format!("{:?}", c.l1),
            format!("{:?}", c.l2),
        ])?;
    }
    w.flush()?;
    out.push(path);

    let path = dir.join("accuracy.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["p", "sampler", "datasets", "l1_mean", "l1_sd", "l2_mean", "l2_sd"])?;
    for a in &report.accuracy {
        w.write_record([
            a.p.to_string(),
            a.sampler.clone(),
            a.datasets.to_string(),
            format!("{:?}", a.l1_mean),
            format!("{:?}", a.l1_sd),
            format!("{:?}", a.l2_mean),
            format!("{:?}", a.l2_sd),
        ])?;
    }
    w.flush()?;
    out.push(path);

    let path = dir.join("mixing.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["p", "sampler", "statistic", "mean", "sd"])?;
    for m in &report.mixing {
        for r in &m.rows {
            w.write_record([
                m.p.to_string(),
                m.sampler.clone(),
                r.statistic.clone(),
                format!("{:?}", r.mean),
                format!("{:?}", r.sd),
            ])?;
        }
    }
    w.flush()?;
    out.push(path);

    let path = dir.join("figure.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec!["p".to_string(), "sampler".into(), "x1".into(), "truth".into(), "mean".into()];
    header.extend(QUANTILE_LEVELS.iter().map(|q| format!("q{}", q.to_string().trim_start_matches("0."))));
    w.write_record(&header)?;
    for c in report.cells.iter().filter(|c| !c.figure.is_empty()) {
        for f in &c.figure {
            let mut rec = vec![
                c.p.to_string(),
                c.sampler.clone(),
                format!("{:?}", f.x1),
                format!("{:?}", f.truth),
                format!("{:?}", f.summary.mean),
            ];
            rec.extend(f.summary.quantiles.iter().map(|q| format!("{q:?}")));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    out.push(path);
    Ok(out)
}
