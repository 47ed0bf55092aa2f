//! Run configuration: a JSON object with flat dotted keys such as
//! `"chain.iterations": 5000`. Keys absent from the file keep their
//! defaults; unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use edpm::gibbs::InitPolicy;
use edpm::model::{Dataset, Hyperparameters};
use edpm::simstudy::{default_hyperparameters, SamplerSpec};
use edpm::{EdpmError, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Training CSV (`y,x1..xp`).
    pub data: Option<String>,
    pub seed: u64,
    pub stream: u64,
    /// Output directory; not part of the resolved parameters.
    pub out: Option<String>,
    pub chain: ChainSection,
    pub trunc: TruncSection,
    pub pilot: PilotSection,
    pub urn: UrnSection,
    pub prior: PriorSection,
    pub simulate: SimulateSection,
    pub bounds: BoundsSection,
    pub predict: PredictSection,
    pub diagnose: DiagnoseSection,
    pub study: StudySection,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            data: None,
            seed: 0,
            stream: 0,
            out: None,
            chain: ChainSection::default(),
            trunc: TruncSection::default(),
            pilot: PilotSection::default(),
            urn: UrnSection::default(),
            prior: PriorSection::default(),
            simulate: SimulateSection::default(),
            bounds: BoundsSection::default(),
            predict: PredictSection::default(),
            diagnose: DiagnoseSection::default(),
            study: StudySection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainSection {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub init: InitPolicy,
}

impl Default for ChainSection {
    fn default() -> Self {
        ChainSection {
            iterations: 100_000,
            burn_in: 20_000,
            thin: 1,
            init: InitPolicy::PriorDraw,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruncMode {
    Fixed,
    Auto,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruncSection {
    pub mode: TruncMode,
    pub n: usize,
    pub m: usize,
    /// Target L1 error in auto mode.
    pub eps: f64,
}

impl Default for TruncSection {
    fn default() -> Self {
        TruncSection {
            mode: TruncMode::Fixed,
            n: 10,
            m: 50,
            eps: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PilotSection {
    pub iterations: usize,
    pub burn_in: usize,
    pub n: usize,
    pub m: usize,
}

impl Default for PilotSection {
    fn default() -> Self {
        PilotSection {
            iterations: 10_000,
            burn_in: 2_000,
            n: 10,
            m: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UrnSection {
    pub m_aux: usize,
}

impl Default for UrnSection {
    fn default() -> Self {
        UrnSection { m_aux: 3 }
    }
}

/// Base-measure settings. Unset entries are filled from the data:
/// least-squares `beta0`, `c_y = XᵀX/n`, `m` = covariate means, and
/// `a = b = 2`, `c_x = 0.5`, `eta = 1`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSection {
    pub beta0: Option<Vec<f64>>,
    pub c_y: Option<Vec<Vec<f64>>>,
    pub a_y: Option<f64>,
    pub b_y: Option<f64>,
    pub m: Option<Vec<f64>>,
    pub c_x: Option<Vec<f64>>,
    pub a_x: Option<f64>,
    pub b_x: Option<f64>,
    pub eta_y1: Option<f64>,
    pub eta_y2: Option<f64>,
    pub eta_x1: Option<f64>,
    pub eta_x2: Option<f64>,
    pub alpha_psi_shared: Option<bool>,
}

impl PriorSection {
    /// Fills unset entries for `data`, writes them back, and returns the
    /// validated hyperparameters.
    pub fn resolve(&mut self, data: &Dataset) -> Result<Hyperparameters> {
        let mut hp = if self.beta0.is_none() || self.c_y.is_none() {
            default_hyperparameters(data)?
        } else {
            let mut hp = Hyperparameters::default_for(data.p());
            hp.m = (0..data.p()).map(|l| data.column_mean(l)).collect();
            hp
        };
        macro_rules! fill {
            ($($f:ident),*) => {$(
                match &self.$f {
                    Some(v) => hp.$f = v.clone(),
                    None => self.$f = Some(hp.$f.clone()),
                }
            )*};
        }
        fill!(beta0, c_y, a_y, b_y, m, c_x, a_x, b_x, eta_y1, eta_y2, eta_x1, eta_x2, alpha_psi_shared);
        hp.prepare(data.p())
            .map_err(|e| EdpmError::config("prior", e.to_string()))?;
        Ok(hp)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub p: usize,
    pub n: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection { p: 1, n: 200 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsSection {
    pub n: usize,
    pub trunc_n: usize,
    pub trunc_m: usize,
    pub alpha_theta: f64,
    pub alpha_psi: f64,
    pub eps: f64,
    /// Monte-Carlo draws for the exact bound; 0 skips it.
    pub mc_draws: usize,
}

impl Default for BoundsSection {
    fn default() -> Self {
        BoundsSection {
            n: 200,
            trunc_n: 10,
            trunc_m: 50,
            alpha_theta: 1.0,
            alpha_psi: 1.0,
            eps: 0.01,
            mc_draws: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictSection {
    pub chain: Option<String>,
    /// CSV of new covariate rows, `x1..xp` (a leading `y` column is ignored).
    pub x: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnoseSection {
    pub chain: Option<String>,
    /// Target L1 error for the suggested truncation.
    pub eps: f64,
}

impl Default for DiagnoseSection {
    fn default() -> Self {
        DiagnoseSection { chain: None, eps: 0.01 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySection {
    pub ps: Vec<usize>,
    pub datasets: usize,
    pub n: usize,
    pub test_size: usize,
    pub batch_size: usize,
    /// `blocked:N:M`, `auto:EPS` or `urn`.
    pub samplers: Vec<String>,
    pub figure_points: usize,
}

impl Default for StudySection {
    fn default() -> Self {
        StudySection {
            ps: vec![1, 5, 10, 15],
            datasets: 10,
            n: 200,
            test_size: 200,
            batch_size: 100,
            samplers: vec!["blocked:10:50".into(), "auto:0.01".into()],
            figure_points: 20,
        }
    }
}

pub fn parse_sampler(s: &str) -> Result<SamplerSpec> {
    let bad = || EdpmError::config("study.samplers", format!("cannot parse sampler `{s}`"));
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["urn"] => Ok(SamplerSpec::Urn),
        ["auto", eps] => Ok(SamplerSpec::BlockedAuto {
            eps: eps.parse().map_err(|_| bad())?,
        }),
        ["blocked", n, m] => Ok(SamplerSpec::Blocked {
            n: n.parse().map_err(|_| bad())?,
            m: m.parse().map_err(|_| bad())?,
        }),
        _ => Err(bad()),
    }
}

fn flatten_into(prefix: &str, v: &Value, out: &mut BTreeMap<String, Value>) {
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_into(&key, v, out);
            }
        }
        _ => {
            out.insert(prefix.to_string(), v.clone());
        }
    }
}

fn unflatten(flat: &BTreeMap<String, Value>) -> Value {
    let mut root = Map::new();
    for (key, v) in flat {
        let mut node = &mut root;
        let mut parts = key.split('.').peekable();
        while let Some(part) = parts.next() {
            if parts.peek().is_none() {
                node.insert(part.to_string(), v.clone());
            } else {
                node = node
                    .entry(part.to_string())
                    .or_insert_with(|| Value::Object(Map::new()))
                    .as_object_mut()
                    .expect("sections are objects");
            }
        }
    }
    Value::Object(root)
}

impl Config {
    /// Every key with its current value.
    pub fn to_flat(&self) -> BTreeMap<String, Value> {
        let mut out = BTreeMap::new();
        flatten_into("", &serde_json::to_value(self).expect("config serializes"), &mut out);
        out
    }

    pub fn known_keys() -> Vec<String> {
        Config::default().to_flat().into_keys().collect()
    }

    pub fn from_flat(flat: &BTreeMap<String, Value>) -> Result<Self> {
        let known = Config::known_keys();
        if let Some(k) = flat.keys().find(|k| !known.contains(k)) {
            return Err(EdpmError::config(k.clone(), "unknown key"));
        }
        match serde_json::from_value(unflatten(flat)) {
            Ok(c) => Ok(c),
            Err(e) => {
                for (k, v) in flat {
                    let one = BTreeMap::from([(k.clone(), v.clone())]);
                    if let Err(e) = serde_json::from_value::<Config>(unflatten(&one)) {
                        return Err(EdpmError::config(k.clone(), e.to_string()));
                    }
                }
                Err(EdpmError::config("<config>", e.to_string()))
            }
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(s).map_err(|e| EdpmError::config("<config>", e.to_string()))?;
        let Value::Object(map) = v else {
            return Err(EdpmError::config("<config>", "top level must be a JSON object"));
        };
        Self::from_flat(&map.into_iter().collect())
    }

    /// Flat keys relevant to `subcommand`, pretty-printed. `out` is left out
    /// so that the same parameters written to another directory produce
    /// identical files.
    pub fn resolved_json(&self, subcommand: &str) -> String {
        let sections = sections_for(subcommand);
        let map: Map<String, Value> = self
            .to_flat()
            .into_iter()
            .filter(|(k, _)| match k.split_once('.') {
                None => k != "out",
                Some((s, _)) => sections.contains(&s),
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&Value::Object(map)).expect("json");
        s.push('\n');
        s
    }
}

fn sections_for(subcommand: &str) -> &'static [&'static str] {
    match subcommand {
        "simulate" => &["simulate"],
        "fit-blocked" => &["chain", "trunc", "pilot", "prior"],
        "fit-polya" => &["chain", "urn", "prior"],
        "bounds" | "min-trunc" => &["bounds"],
        "predict" => &["predict"],
        "diagnose" => &["diagnose"],
        "study" => &["chain", "pilot", "urn", "study"],
        _ => &[],
    }
}

pub fn parse_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path)?;
    Config::from_json_str(&text)
}
