//! Run configuration.
//!
//! A configuration is a TOML document. The four window keys
//! `window_start`, `window_len`, `h0` and `h` are required in a file;
//! everything else has a default. Unknown keys are rejected and every
//! error carries the line it refers to.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Largest window the CLI accepts.
pub const MAX_WINDOW_LEN: u64 = 100_000_000;

/// Largest prime-window top the CLI accepts.
pub const MAX_H: u64 = 10_000_000;

/// Eigenvalue route for `spectrum`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumMethod {
    Lanczos,
    Dense,
}

/// Trace route for `trace`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TraceRoute {
    All,
    Dense,
    Walk,
    Stochastic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumParams {
    pub method: SpectrumMethod,
    /// Number of eigenvalues of largest magnitude.
    pub count: usize,
    /// Also report the restriction to `X₀ ∩ Y_ℓ`.
    pub exclude: bool,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        Self { method: SpectrumMethod::Lanczos, count: 4, exclude: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceParams {
    pub method: TraceRoute,
    pub samples: usize,
}

impl Default for TraceParams {
    fn default() -> Self {
        Self { method: TraceRoute::All, samples: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelftestParams {
    pub trials: usize,
}

impl Default for SelftestParams {
    fn default() -> Self {
        Self { trials: 200 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KubiliusParams {
    pub q: u64,
    pub a: u64,
    pub alphas: Vec<i64>,
    /// Patterns with at most this many dividing primes are listed.
    pub max_events: usize,
    /// Patterns below this model value are listed but not summarised.
    pub min_model: f64,
}

impl Default for KubiliusParams {
    fn default() -> Self {
        Self { q: 1, a: 0, alphas: vec![0, 1], max_events: 2, min_model: 1e-3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WalkParams {
    pub kappa: usize,
    pub rho: usize,
}

impl Default for WalkParams {
    fn default() -> Self {
        Self { kappa: 2, rho: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChowlaParams {
    pub x: u64,
    pub w: f64,
    pub grid_points: usize,
    /// Function names as accepted by `ArithFn::from_str`.
    pub f1: String,
    pub f2: String,
    pub shift: u64,
    pub absolute: bool,
}

impl Default for ChowlaParams {
    fn default() -> Self {
        Self {
            x: 10_000_000,
            w: 1e3,
            grid_points: 64,
            f1: "liouville".into(),
            f2: "liouville".into(),
            shift: 1,
            absolute: false,
        }
    }
}

/// Validated configuration of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub window_start: u64,
    pub window_len: u64,
    pub h0: u64,
    pub h: u64,
    /// Threshold multiplier `K` of the set X₀.
    #[serde(rename = "K", alias = "k_exclude", default = "default_k_exclude")]
    pub k_exclude: f64,
    #[serde(default = "default_ell")]
    pub ell: usize,
    /// Walk half-length: traces use `Tr A^{2k}`, the census uses `2k` positions.
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_threads")]
    pub thread_count: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub spectrum: SpectrumParams,
    #[serde(default)]
    pub trace: TraceParams,
    #[serde(default)]
    pub selftest: SelftestParams,
    #[serde(default)]
    pub kubilius: KubiliusParams,
    #[serde(default)]
    pub walks: WalkParams,
    #[serde(default)]
    pub chowla: ChowlaParams,
}

fn default_k_exclude() -> f64 {
    4.0
}

fn default_ell() -> usize {
    2
}

fn default_k() -> usize {
    2
}

fn default_seed() -> u64 {
    1
}

fn default_threads() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("divlab-out")
}

impl Default for RunConfig {
    /// The window `(10⁶, 10⁶ + 10⁴]` with `𝐏` the primes of `[11, 101]`.
    fn default() -> Self {
        Self {
            window_start: 1_000_000,
            window_len: 10_000,
            h0: 11,
            h: 101,
            k_exclude: default_k_exclude(),
            ell: default_ell(),
            k: default_k(),
            seed: default_seed(),
            thread_count: default_threads(),
            output_dir: default_output_dir(),
            spectrum: SpectrumParams::default(),
            trace: TraceParams::default(),
            selftest: SelftestParams::default(),
            kubilius: KubiliusParams::default(),
            walks: WalkParams::default(),
            chowla: ChowlaParams::default(),
        }
    }
}

/// A configuration error, with the offending line when it is known.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config line {l}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// A range violation, located by its section and key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RangeError {
    pub section: Option<&'static str>,
    pub key: &'static str,
    pub message: String,
}

fn range(section: Option<&'static str>, key: &'static str, message: String) -> RangeError {
    RangeError { section, key, message }
}

impl RunConfig {
    /// Checks every documented range.
    pub fn validate(&self) -> Result<(), RangeError> {
        let top = |key, msg: String| Err(range(None, key, msg));
        if self.window_start < 1 {
            return top("window_start", "window_start must be at least 1".into());
        }
        if !(1..=MAX_WINDOW_LEN).contains(&self.window_len) {
            return top("window_len", format!("window_len must lie in [1, {MAX_WINDOW_LEN}]"));
        }
        if self.h0 < 2 {
            return top("h0", "h0 must be at least 2".into());
        }
        if self.h0 > self.h {
            return top("h0", format!("h0 = {} exceeds h = {}", self.h0, self.h));
        }
        if self.h > MAX_H {
            return top("h", format!("h must be at most {MAX_H}"));
        }
        if !(self.k_exclude > 0.0 && self.k_exclude.is_finite()) {
            return top("K", "K must be a positive number".into());
        }
        if !(1..=4).contains(&self.ell) {
            return top("ell", "ell must lie in [1, 4]".into());
        }
        if !(1..=8).contains(&self.k) {
            return top("k", "k must lie in [1, 8]".into());
        }
        if !(1..=1024).contains(&self.thread_count) {
            return top("thread_count", "thread_count must lie in [1, 1024]".into());
        }
        let sp = &self.spectrum;
        if !(1..=64).contains(&sp.count) {
            return Err(range(Some("spectrum"), "count", "count must lie in [1, 64]".into()));
        }
        if self.trace.samples < 8 {
            return Err(range(Some("trace"), "samples", "samples must be at least 8".into()));
        }
        if self.selftest.trials < 1 {
            return Err(range(Some("selftest"), "trials", "trials must be at least 1".into()));
        }
        let kb = &self.kubilius;
        if kb.q < 1 || kb.a >= kb.q {
            return Err(range(Some("kubilius"), "a", format!("need 0 ≤ a < q, got a = {}, q = {}", kb.a, kb.q)));
        }
        if kb.alphas.is_empty() || kb.alphas.len() > 4 {
            return Err(range(Some("kubilius"), "alphas", "between one and four shifts are supported".into()));
        }
        if kb.max_events > 4 {
            return Err(range(Some("kubilius"), "max_events", "max_events must be at most 4".into()));
        }
        let w = &self.walks;
        if w.kappa < 1 || w.kappa > 4 || w.rho > 4 {
            return Err(range(Some("walks"), "kappa", "need 1 ≤ kappa ≤ 4 and rho ≤ 4".into()));
        }
        let c = &self.chowla;
        if !(c.w > std::f64::consts::E && c.w <= c.x as f64) {
            return Err(range(Some("chowla"), "w", format!("need e < w ≤ x, got w = {}, x = {}", c.w, c.x)));
        }
        if c.grid_points < 8 {
            return Err(range(Some("chowla"), "grid_points", "grid_points must be at least 8".into()));
        }
        for (key, name) in [("f1", &c.f1), ("f2", &c.f2)] {
            if let Err(e) = name.parse::<divlab::correlations::ArithFn>() {
                return Err(range(Some("chowla"), key, e.to_string()));
            }
        }
        Ok(())
    }

    /// Canonical TOML text of the configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

/// 1-based line of a byte offset.
fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line on which `key` is assigned inside `section` (`None` for the top level).
fn line_of_key(text: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            current = Some(name.trim().to_string());
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else { continue };
        let lhs = lhs.trim().trim_matches('"');
        let matches_key = lhs == key || (key == "K" && lhs == "k_exclude");
        if matches_key && current.as_deref() == section {
            return Some(i + 1);
        }
    }
    None
}

/// Parses and validates configuration text.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError {
        line: e.span().map(|s| line_of_offset(text, s.start)),
        message: e.message().trim().to_string(),
    })?;
    cfg.validate().map_err(|e| ConfigError { line: line_of_key(text, e.section, e.key), message: e.message })?;
    Ok(cfg)
}

/// Reads, parses and validates a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError { line: None, message: format!("cannot read {}: {e}", path.display()) })?;
    parse_config(&text)
}
