//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use ini::Ini;
use sha2::{Digest, Sha256};

use crate::calibration::{AggregatorKind, GridCaps};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::losses::{Design, EnvConfig, LossFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Saew,
    Eg,
    Rda,
    Calibrate,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Saew => "saew",
            Algorithm::Eg => "eg",
            Algorithm::Rda => "rda",
            Algorithm::Calibrate => "calibrate",
        }
    }
}

/// How excess risk is measured for the metric columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskEval {
    /// Closed form when the environment has one, Monte-Carlo otherwise.
    Exact,
    /// Monte-Carlo on the seeded holdout, with standard errors.
    Mc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub loss: LossFamily,
    pub d: usize,
    pub d0: usize,
    pub noise_sd: f64,
    pub design: Design,
    pub noise_bound: Option<f64>,
    pub algorithm: Algorithm,
    pub horizon: u64,
    pub seeds: Vec<u64>,
    pub u: f64,
    pub alpha: f64,
    pub b: f64,
    pub delta: f64,
    /// Sparsity budget handed to the accelerated procedure.
    pub saew_d0: usize,
    pub gamma: f64,
    pub rho: f64,
    pub lambda: f64,
    pub y: f64,
    pub budget: Option<u64>,
    pub caps: GridCaps,
    pub aggregator: AggregatorKind,
    pub out: PathBuf,
    pub trace_bounds: bool,
    pub risk_eval: RiskEval,
    pub holdout: usize,
    pub execution: Execution,
}

const KEYS: &[&str] = &[
    "loss", "d", "d0", "noise_sd", "alpha_q", "design", "design_bound", "noise_bound", "seed",
    "seeds", "algorithm", "T", "U", "alpha", "B", "delta", "saew_d0", "gamma", "rho", "lambda",
    "Y", "budget", "grid_alpha", "grid_U", "grid_B", "out", "trace_bounds", "risk_eval",
    "holdout", "parallel", "aggregator",
];

struct Raw(BTreeMap<String, String>);

impl Raw {
    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|s| s.trim())
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::config(key, format!("cannot parse `{v}`"))),
        }
    }

    fn required<T: FromStr>(&self, key: &str) -> Result<T> {
        self.parse(key)?
            .ok_or_else(|| Error::config(key, "missing required key"))
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some("false") | Some("0") | Some("no") => Ok(false),
            Some(v) => Err(Error::config(key, format!("expected true/false, got `{v}`"))),
        }
    }

    fn exp_range(&self, key: &str) -> Result<Option<(i32, i32)>> {
        let Some(v) = self.get(key) else {
            return Ok(None);
        };
        let bad = || Error::config(key, format!("expected `lo..hi` exponents, got `{v}`"));
        let (lo, hi) = v.split_once("..").ok_or_else(bad)?;
        let lo: i32 = lo.trim().parse().map_err(|_| bad())?;
        let hi: i32 = hi.trim().parse().map_err(|_| bad())?;
        if lo > hi {
            return Err(bad());
        }
        Ok(Some((lo, hi)))
    }
}

fn parse_seeds(v: &str) -> Result<Vec<u64>> {
    let bad = || Error::config("seeds", format!("expected `a,b,c` or `a-b`, got `{v}`"));
    if let Some((a, b)) = v.split_once('-') {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    v.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::config(key, format!("must be finite and > 0, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_ini_str(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::config("<file>", e.to_string()))?;
        if let Some(name) = ini.sections().flatten().next() {
            return Err(Error::config(name, "sections are not supported; use flat keys"));
        }
        let mut map = BTreeMap::new();
        for (k, v) in ini.general_section().iter() {
            if !KEYS.contains(&k) {
                return Err(Error::config(k, "unknown key"));
            }
            map.insert(k.to_string(), v.to_string());
        }
        ExperimentConfig::from_map(Raw(map))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        ExperimentConfig::from_ini_str(&text)
    }

    fn from_map(raw: Raw) -> Result<Self> {
        let loss = match raw.get("loss").unwrap_or("square") {
            "square" => LossFamily::Square,
            "quantile" => {
                let alpha_q: f64 = raw.or("alpha_q", 0.5)?;
                if !(alpha_q > 0.0 && alpha_q < 1.0) {
                    return Err(Error::config("alpha_q", "must lie in (0,1)"));
                }
                LossFamily::Quantile { alpha_q }
            }
            other => return Err(Error::config("loss", format!("unknown loss `{other}`"))),
        };
        let d: usize = raw.required("d")?;
        let d0: usize = raw.required("d0")?;
        if d == 0 || d0 == 0 || d0 > d {
            return Err(Error::config("d0", format!("need 1 <= d0 <= d, got d0 = {d0}, d = {d}")));
        }
        let design = match raw.get("design").unwrap_or("gaussian") {
            "gaussian" => Design::Gaussian,
            "truncated" => Design::TruncatedGaussian {
                bound: positive("design_bound", raw.required("design_bound")?)?,
            },
            other => return Err(Error::config("design", format!("unknown design `{other}`"))),
        };
        let noise_bound = match raw.parse::<f64>("noise_bound")? {
            Some(v) => Some(positive("noise_bound", v)?),
            None => None,
        };
        let algorithm = match raw.get("algorithm").unwrap_or("saew") {
            "saew" => Algorithm::Saew,
            "eg" => Algorithm::Eg,
            "rda" => Algorithm::Rda,
            "calibrate" => Algorithm::Calibrate,
            other => return Err(Error::config("algorithm", format!("unknown algorithm `{other}`"))),
        };
        let horizon: u64 = raw.required("T")?;
        if horizon == 0 {
            return Err(Error::config("T", "must be >= 1"));
        }
        let seeds = match (raw.get("seeds"), raw.get("seed")) {
            (Some(_), Some(_)) => return Err(Error::config("seed", "give either seed or seeds")),
            (Some(v), None) => parse_seeds(v)?,
            (None, Some(_)) => vec![raw.required("seed")?],
            (None, None) => vec![1],
        };
        if seeds.is_empty() {
            return Err(Error::config("seeds", "must not be empty"));
        }
        let delta: f64 = raw.or("delta", 0.05)?;
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::config("delta", "must lie in (0,1)"));
        }
        let intercept = usize::from(matches!(loss, LossFamily::Quantile { .. }));
        let dim = d + intercept;
        let saew_d0: usize = raw.or("saew_d0", d0 + intercept)?;
        if saew_d0 == 0 || saew_d0 > dim {
            return Err(Error::config("saew_d0", format!("must lie in 1..={dim}")));
        }
        let gamma = positive("gamma", raw.or("gamma", 1.0)?)?;
        let rho: f64 = raw.or("rho", 0.0)?;
        let lambda: f64 = raw.or("lambda", 0.0)?;
        if !(rho >= 0.0 && lambda >= 0.0) {
            return Err(Error::config("rho", "rho and lambda must be >= 0"));
        }
        let risk_eval = match raw.get("risk_eval").unwrap_or("exact") {
            "exact" => RiskEval::Exact,
            "mc" => RiskEval::Mc,
            other => return Err(Error::config("risk_eval", format!("unknown mode `{other}`"))),
        };
        let holdout: usize = raw.or("holdout", crate::losses::HOLDOUT_SIZE)?;
        if holdout < 2 {
            return Err(Error::config("holdout", "must be >= 2"));
        }
        let budget = raw.parse::<u64>("budget")?;
        let aggregator = match raw.get("aggregator").unwrap_or("ew") {
            "ew" => AggregatorKind::ExpWeights,
            "boa" => AggregatorKind::Boa,
            other => return Err(Error::config("aggregator", format!("unknown aggregator `{other}`"))),
        };
        let execution = if raw.flag("parallel", true)? {
            Execution::Parallel
        } else {
            Execution::Sequential
        };
        Ok(ExperimentConfig {
            loss,
            d,
            d0,
            noise_sd: {
                let v: f64 = raw.or("noise_sd", 0.1)?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::config("noise_sd", "must be >= 0"));
                }
                v
            },
            design,
            noise_bound,
            algorithm,
            horizon,
            seeds,
            u: positive("U", raw.or("U", 1.0)?)?,
            alpha: positive("alpha", raw.or("alpha", 1.0)?)?,
            b: positive("B", raw.or("B", 1.0)?)?,
            delta,
            saew_d0,
            gamma,
            rho,
            lambda,
            y: positive("Y", raw.or("Y", 4.0)?)?,
            budget,
            caps: GridCaps {
                alpha: raw.exp_range("grid_alpha")?,
                u: raw.exp_range("grid_U")?,
                b: raw.exp_range("grid_B")?,
            },
            aggregator,
            out: PathBuf::from(raw.get("out").unwrap_or("out")),
            trace_bounds: raw.flag("trace_bounds", false)?,
            risk_eval,
            holdout,
            execution,
        })
    }

    pub fn algorithm_name(&self) -> &'static str {
        self.algorithm.name()
    }

    /// Environment settings for one seed.
    pub fn env_config(&self, seed: u64) -> EnvConfig {
        EnvConfig {
            loss: self.loss,
            d: self.d,
            d0: self.d0,
            noise_sd: self.noise_sd,
            design: self.design,
            noise_bound: self.noise_bound,
            seed,
        }
    }

    /// Canonical text form listing every key; parsing it gives back `self`.
    pub fn to_ini_string(&self) -> String {
        let mut lines: Vec<String> = Vec::new();
        let mut put = |k: &str, v: String| lines.push(format!("{k} = {v}"));
        match self.loss {
            LossFamily::Square => put("loss", "square".into()),
            LossFamily::Quantile { alpha_q } => {
                put("loss", "quantile".into());
                put("alpha_q", alpha_q.to_string());
            }
        }
        put("d", self.d.to_string());
        put("d0", self.d0.to_string());
        put("noise_sd", self.noise_sd.to_string());
        match self.design {
            Design::Gaussian => put("design", "gaussian".into()),
            Design::TruncatedGaussian { bound } => {
                put("design", "truncated".into());
                put("design_bound", bound.to_string());
            }
        }
        if let Some(nb) = self.noise_bound {
            put("noise_bound", nb.to_string());
        }
        put("algorithm", self.algorithm.name().into());
        put("T", self.horizon.to_string());
        let seeds: Vec<String> = self.seeds.iter().map(|s| s.to_string()).collect();
        put("seeds", seeds.join(","));
        put("U", self.u.to_string());
        put("alpha", self.alpha.to_string());
        put("B", self.b.to_string());
        put("delta", self.delta.to_string());
        put("saew_d0", self.saew_d0.to_string());
        put("gamma", self.gamma.to_string());
        put("rho", self.rho.to_string());
        put("lambda", self.lambda.to_string());
        put("Y", self.y.to_string());
        if let Some(b) = self.budget {
            put("budget", b.to_string());
        }
        for (k, cap) in [
            ("grid_alpha", self.caps.alpha),
            ("grid_U", self.caps.u),
            ("grid_B", self.caps.b),
        ] {
            if let Some((lo, hi)) = cap {
                put(k, format!("{lo}..{hi}"));
            }
        }
        put(
            "aggregator",
            match self.aggregator {
                AggregatorKind::ExpWeights => "ew".into(),
                AggregatorKind::Boa => "boa".into(),
            },
        );
        put("out", self.out.display().to_string());
        put("trace_bounds", self.trace_bounds.to_string());
        put(
            "risk_eval",
            match self.risk_eval {
                RiskEval::Exact => "exact".into(),
                RiskEval::Mc => "mc".into(),
            },
        );
        put("holdout", self.holdout.to_string());
        put("parallel", (self.execution == Execution::Parallel).to_string());
        lines.join("\n") + "\n"
    }

    /// First 16 hex digits of the SHA-256 of the canonical form, ignoring `out` and
    /// `parallel`, which do not change results.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        c.execution = Execution::default();
        let digest = Sha256::digest(c.to_ini_string().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
