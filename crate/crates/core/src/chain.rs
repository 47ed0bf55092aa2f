//! Posterior draws and their on-disk formats.
//!
//! A chain is stored as JSON lines, one [`ChainDraw`] per line, next to a
//! compact CSV with `iter,alpha_theta,alpha_psi_max,occupied,counts` for quick
//! diagnostics (`counts` is the `;`-separated θ-cluster occupancy).

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{EdpmError, Result};
use crate::model::{GibbsState, PsiAtom, ThetaAtom};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    /// Truncated stick-breaking state.
    Blocked,
    /// Occupied clusters of the marginal sampler plus one trailing
    /// new-cluster component at each level.
    Urn,
}

/// One posterior draw of the random mixing measure, in a form shared by both
/// samplers: θ-components with weights, and inside each a list of weighted
/// ψ-components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainDraw {
    pub iter: usize,
    pub representation: Representation,
    pub theta_weights: Vec<f64>,
    pub psi_weights: Vec<Vec<f64>>,
    pub theta_atoms: Vec<ThetaAtom>,
    pub psi_atoms: Vec<Vec<PsiAtom>>,
    /// 0-based θ label per observation.
    pub k: Vec<usize>,
    /// 0-based ψ label (within its θ-cluster) per observation.
    pub j: Vec<usize>,
    pub alpha_theta: f64,
    pub alpha_psi: Vec<f64>,
}

impl ChainDraw {
    pub fn from_state(iter: usize, s: &GibbsState) -> Self {
        ChainDraw {
            iter,
            representation: Representation::Blocked,
            theta_weights: s.theta_weights.weights().to_vec(),
            psi_weights: s.psi_weights.iter().map(|w| w.weights().to_vec()).collect(),
            theta_atoms: s.theta_atoms.clone(),
            psi_atoms: s.psi_atoms.clone(),
            k: s.k.clone(),
            j: s.j.clone(),
            alpha_theta: s.alpha_theta,
            alpha_psi: s.alpha_psi.clone(),
        }
    }

    pub fn alpha_psi_max(&self) -> f64 {
        self.alpha_psi.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn p(&self) -> usize {
        self.psi_atoms
            .first()
            .and_then(|r| r.first())
            .map_or(0, |a| a.mu.len())
    }

    /// Per-θ-component observation counts.
    pub fn occupancy(&self) -> Vec<usize> {
        let mut c = vec![0; self.theta_weights.len()];
        for &k in &self.k {
            if k < c.len() {
                c[k] += 1;
            }
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.theta_weights.len();
        let bad = |m: &str| Err(EdpmError::Data(format!("draw {}: {m}", self.iter)));
        if self.theta_atoms.len() != n || self.psi_weights.len() != n || self.psi_atoms.len() != n {
            return bad("component arrays disagree in length");
        }
        if self.psi_weights.iter().zip(&self.psi_atoms).any(|(w, a)| w.len() != a.len()) {
            return bad("ψ weights and atoms disagree in length");
        }
        if self.k.len() != self.j.len() {
            return bad("label vectors differ in length");
        }
        let sum = |w: &[f64]| w.iter().sum::<f64>();
        if (sum(&self.theta_weights) - 1.0).abs() > 1e-9
            || self.psi_weights.iter().any(|w| (sum(w) - 1.0).abs() > 1e-9)
        {
            return bad("weights do not sum to one");
        }
        Ok(())
    }
}

/// Retained draws of one chain, in iteration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Chain {
    pub draws: Vec<ChainDraw>,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn alpha_theta_trace(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.alpha_theta).collect()
    }

    pub fn alpha_psi_max_trace(&self) -> Vec<f64> {
        self.draws.iter().map(ChainDraw::alpha_psi_max).collect()
    }

    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let mut draws = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let d: ChainDraw = serde_json::from_str(&line).map_err(|e| {
                EdpmError::Data(format!("chain line {}: {e}", lineno + 1))
            })?;
            d.validate()?;
            draws.push(d);
        }
        Ok(Chain { draws })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_jsonl(std::io::BufReader::new(f))
    }
}

/// Streams draws to a JSONL sink and, optionally, the summary CSV. Lines are
/// flushed per draw so an interrupted run keeps what it completed.
pub struct ChainWriter<W: Write> {
    jsonl: W,
    summary: Option<csv::Writer<Box<dyn Write>>>,
}

impl<W: Write> ChainWriter<W> {
    pub fn new(jsonl: W) -> Self {
        ChainWriter {
            jsonl,
            summary: None,
        }
    }

    pub fn with_summary(mut self, summary: Box<dyn Write>) -> Result<Self> {
        let mut w = csv::Writer::from_writer(summary);
        w.write_record(["iter", "alpha_theta", "alpha_psi_max", "occupied", "counts"])?;
        self.summary = Some(w);
        Ok(self)
    }

    pub fn write(&mut self, draw: &ChainDraw) -> Result<()> {
        serde_json::to_writer(&mut self.jsonl, draw)?;
        self.jsonl.write_all(b"\n")?;
        self.jsonl.flush()?;
        if let Some(w) = self.summary.as_mut() {
            let occ = draw.occupancy();
            let counts: Vec<String> = occ.iter().map(|c| c.to_string()).collect();
            w.write_record([
                draw.iter.to_string(),
                format!("{:?}", draw.alpha_theta),
                format!("{:?}", draw.alpha_psi_max()),
                occ.iter().filter(|&&c| c > 0).count().to_string(),
                counts.join(";"),
            ])?;
            w.flush()?;
        }
        Ok(())
    }
}
