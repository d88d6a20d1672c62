//! Declarative end-to-end runs: generate → detect → correlate → fit → report.
//!
//! A [`ScenarioConfig`] is a TOML document whose physical keys carry explicit
//! unit suffixes. [`run_scenario`] wires the pipeline for the chosen
//! experiment, writes CSV curves and a JSON summary into the output directory
//! and returns the summary. Identical configurations produce identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detchain::{detect, DetectorParams, LossBudget, DEFAULT_DARK_RATE, DEFAULT_DEAD_TIME, DEFAULT_JITTER_SIGMA};
use crate::error::{non_negative, positive, Error, Result};
use crate::fitmodels::{
    fit_bunching, fit_g2, initial_guess, purity, tau_w, CorrelationKind, G2Fit,
};
use crate::rng::derive_seed;
use crate::sourcesim::{generate_routed_pairs, generate_thermal_routed, PairKind, Routing, ShardPlan, SourceParams};
use crate::stream::{write_tags, TimeTagStream};
use crate::tcspc::{car, correlate, correlogram_to_csv, g2_normalize, g2_to_csv, heralded_g2, CorrelogramData, G2Curve};

/// Channel name used when a per-channel table has no entry for a channel.
pub const DEFAULT_CHANNEL: &str = "default";

/// Half-width of the raw coincidence window, in coherence times, when not configured.
pub const COINCIDENCE_WINDOW_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Degenerate pairs split 50/50 onto detectors `a` and `b`.
    SelfDegenerate,
    /// Idler and signal on separate detectors.
    CrossNondegenerate,
    /// One arm of the pair source (single-mode thermal light) split onto `a` and `b`.
    ThermalIdler,
    /// Idler heralds; the signal is split 50/50 onto `a` and `b`.
    Heralded,
}

impl Experiment {
    pub fn channels(self) -> &'static [&'static str] {
        match self {
            Experiment::CrossNondegenerate => &["idler", "signal"],
            Experiment::SelfDegenerate | Experiment::ThermalIdler => &["a", "b"],
            Experiment::Heralded => &["herald", "a", "b"],
        }
    }

    fn pair_kind(self) -> PairKind {
        match self {
            Experiment::SelfDegenerate => PairKind::Degenerate,
            _ => PairKind::Nondegenerate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    /// Defaults to the kind implied by the experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<PairKind>,
    pub rate_slope_mhz_per_mw: f64,
    pub pump_power_mw: f64,
    /// Overrides `rate_slope_mhz_per_mw * pump_power_mw` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_rate_mhz: Option<f64>,
    pub coherence_time_ps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    #[serde(default = "default_jitter_ps")]
    pub jitter_ps: f64,
    #[serde(default = "default_dark_rate_hz")]
    pub dark_rate_hz: f64,
    #[serde(default = "default_dead_time_ns")]
    pub dead_time_ns: f64,
}

fn default_jitter_ps() -> f64 {
    DEFAULT_JITTER_SIGMA * 1e12
}

fn default_dark_rate_hz() -> f64 {
    DEFAULT_DARK_RATE
}

fn default_dead_time_ns() -> f64 {
    DEFAULT_DEAD_TIME * 1e9
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            jitter_ps: default_jitter_ps(),
            dark_rate_hz: default_dark_rate_hz(),
            dead_time_ns: default_dead_time_ns(),
        }
    }
}

impl DetectorConfig {
    /// Detector parameters with unit transmittance; loss is applied at the source.
    pub fn params(&self) -> DetectorParams {
        DetectorParams {
            transmittance: 1.0,
            jitter_sigma: self.jitter_ps * 1e-12,
            dark_rate: self.dark_rate_hz,
            dead_time: self.dead_time_ns * 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramConfig {
    #[serde(default = "default_bin_width_ps")]
    pub bin_width_ps: f64,
    #[serde(default = "default_max_delay_ps")]
    pub max_delay_ps: f64,
    /// Half-width of the raw coincidence window; defaults to three coherence times.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coincidence_half_window_ps: Option<f64>,
    /// Fit the correlation peak. When off, the configured coherence time sets the
    /// coincidence window and CAR wings (useful when bins are too coarse to resolve it).
    #[serde(default = "default_fit_peak")]
    pub fit_peak: bool,
}

fn default_fit_peak() -> bool {
    true
}

fn default_bin_width_ps() -> f64 {
    50.0
}

fn default_max_delay_ps() -> f64 {
    20_000.0
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self {
            bin_width_ps: default_bin_width_ps(),
            max_delay_ps: default_max_delay_ps(),
            coincidence_half_window_ps: None,
            fit_peak: default_fit_peak(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeraldedConfig {
    #[serde(default = "default_windows_ns")]
    pub windows_ns: Vec<f64>,
}

fn default_windows_ns() -> Vec<f64> {
    vec![0.25, 0.5, 1.0, 2.0, 5.0]
}

impl Default for HeraldedConfig {
    fn default() -> Self {
        Self {
            windows_ns: default_windows_ns(),
        }
    }
}

fn default_shard_length_s() -> f64 {
    crate::sourcesim::DEFAULT_SHARD_LENGTH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub experiment: Experiment,
    pub duration_s: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Also write the detected time-tag streams.
    #[serde(default)]
    pub write_streams: bool,
    #[serde(default = "default_shard_length_s")]
    pub shard_length_s: f64,
    pub source: SourceConfig,
    /// Loss budget per channel, with `default` as the fallback.
    #[serde(default)]
    pub losses: BTreeMap<String, LossBudget>,
    /// Detector model per channel, with `default` as the fallback.
    #[serde(default)]
    pub detectors: BTreeMap<String, DetectorConfig>,
    #[serde(default)]
    pub histogram: HistogramConfig,
    #[serde(default)]
    pub heralded: HeraldedConfig,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses `text`, applies `key=value` overrides (dotted keys, TOML values;
    /// bare words are taken as strings) and validates the result.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: Self = doc.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        non_negative("duration_s", self.duration_s)?;
        positive("shard_length_s", self.shard_length_s)?;
        self.source_params()?;
        let h = &self.histogram;
        positive("bin_width_ps", h.bin_width_ps)?;
        if !(h.max_delay_ps >= h.bin_width_ps) {
            return Err(Error::Config(format!(
                "max_delay_ps ({}) must be at least bin_width_ps ({})",
                h.max_delay_ps, h.bin_width_ps
            )));
        }
        if let Some(w) = h.coincidence_half_window_ps {
            positive("coincidence_half_window_ps", w)?;
        }
        if self.experiment == Experiment::Heralded && self.heralded.windows_ns.is_empty() {
            return Err(Error::Config("heralded experiment needs at least one window".into()));
        }
        for &w in &self.heralded.windows_ns {
            positive("heralded window", w)?;
        }
        for b in self.losses.values() {
            b.validate()?;
        }
        for d in self.detectors.values() {
            d.params().validate()?;
        }
        let known = self.experiment.channels();
        for name in self.losses.keys().chain(self.detectors.keys()) {
            if name != DEFAULT_CHANNEL && !known.contains(&name.as_str()) {
                return Err(Error::Config(format!(
                    "unknown channel `{name}` for {:?}; expected one of {known:?} or `{DEFAULT_CHANNEL}`",
                    self.experiment
                )));
            }
        }
        Ok(())
    }

    pub fn source_params(&self) -> Result<SourceParams> {
        let s = &self.source;
        let kind = self.experiment.pair_kind();
        if let Some(k) = s.kind {
            if self.experiment != Experiment::ThermalIdler && k != kind {
                return Err(Error::Config(format!(
                    "source kind {k:?} does not match experiment {:?}",
                    self.experiment
                )));
            }
        }
        let tc = s.coherence_time_ps * 1e-12;
        let mut p = SourceParams::from_power(s.rate_slope_mhz_per_mw * 1e6, s.pump_power_mw, tc, kind)?;
        if let Some(r) = s.pair_rate_mhz {
            p.pair_rate = non_negative("pair_rate_mhz", r)? * 1e6;
        }
        Ok(p)
    }

    pub fn transmittance(&self, channel: &str) -> f64 {
        self.losses
            .get(channel)
            .or_else(|| self.losses.get(DEFAULT_CHANNEL))
            .map_or(1.0, LossBudget::transmittance)
    }

    pub fn detector(&self, channel: &str) -> DetectorConfig {
        self.detectors
            .get(channel)
            .or_else(|| self.detectors.get(DEFAULT_CHANNEL))
            .copied()
            .unwrap_or_default()
    }

    /// SHA-256 of the canonical configuration, excluding the output directory.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        Ok(sha256_hex(c.to_toml()?.as_bytes()))
    }
}

fn apply_override(doc: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key `{key}` is malformed")));
    }
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key `{key}`: `{part}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    pub bin_width_ps: f64,
    pub total_coincidences: u64,
    pub coincidence_half_window_ps: f64,
    /// Raw coincidence rate within the half window, accidentals included.
    pub coincidence_rate_hz: f64,
    pub accidental_rate_hz: f64,
    pub g2_zero_bin: Option<f64>,
    pub car: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFitSummary {
    pub kind: CorrelationKind,
    pub pair_rate_hz: f64,
    pub pair_rate_error_hz: f64,
    pub coherence_time_ps: f64,
    pub coherence_time_error_ps: f64,
    pub bandwidth_hz: f64,
    pub bandwidth_error_hz: f64,
    pub smearing_ps: f64,
    pub reduced_chi2: f64,
    pub iterations: usize,
}

impl PairFitSummary {
    fn from_fit(f: &G2Fit) -> Self {
        Self {
            kind: f.params.kind,
            pair_rate_hz: f.params.pair_rate,
            pair_rate_error_hz: f.pair_rate_error,
            coherence_time_ps: f.params.coherence_time * 1e12,
            coherence_time_error_ps: f.coherence_time_error * 1e12,
            bandwidth_hz: f.bandwidth,
            bandwidth_error_hz: f.bandwidth_error,
            smearing_ps: f.params.smearing * 1e12,
            reduced_chi2: f.residual_norm * f.residual_norm,
            iterations: f.iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BunchingSummary {
    pub g2_zero: f64,
    pub g2_zero_error: f64,
    pub coherence_time_ps: f64,
    pub coherence_time_error_ps: f64,
    pub smearing_ps: f64,
    pub purity: Option<f64>,
    pub schmidt_number: Option<f64>,
    pub reduced_chi2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeraldedSummary {
    pub window_ns: f64,
    pub g2: Option<f64>,
    /// Poisson error from the triple-coincidence count.
    pub g2_error: Option<f64>,
    pub heralds: u64,
    pub with_a: u64,
    pub with_b: u64,
    pub with_both: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub experiment: Experiment,
    pub duration_s: f64,
    pub seed: u64,
    pub config_sha256: String,
    pub configured_pair_rate_hz: f64,
    pub configured_coherence_time_ps: f64,
    pub insufficient_data: bool,
    pub singles_hz: BTreeMap<String, f64>,
    pub correlation: Option<CorrelationSummary>,
    pub pair_fit: Option<PairFitSummary>,
    pub bunching: Option<BunchingSummary>,
    pub heralded: Vec<HeraldedSummary>,
    /// Output file name to SHA-256 of its contents.
    pub files: BTreeMap<String, String>,
}

impl ReportSummary {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

pub const SUMMARY_FILE: &str = "summary.json";

/// Writes files into the output directory and removes them again on failure.
struct OutputSet {
    dir: PathBuf,
    created_dir: bool,
    written: Vec<PathBuf>,
    hashes: BTreeMap<String, String>,
    committed: bool,
}

impl OutputSet {
    fn open(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created_dir,
            written: Vec::new(),
            hashes: BTreeMap::new(),
            committed: false,
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.written.push(path);
        self.hashes.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }
}

impl Drop for OutputSet {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
        let _ = fs::remove_dir(self.dir.join("streams"));
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

/// Runs the configured experiment, writes its outputs and returns the summary.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ReportSummary> {
    stage("config", config.validate())?;
    let mut out = stage("output", OutputSet::open(&config.output_dir))?;
    let summary = execute(config, &mut out)?;
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    stage("output", out.write(SUMMARY_FILE, format!("{json}\n").as_bytes()))?;
    out.committed = true;
    Ok(summary)
}

fn execute(config: &ScenarioConfig, out: &mut OutputSet) -> Result<ReportSummary> {
    let source = stage("config", config.source_params())?;
    let plan = stage("config", ShardPlan::new(config.shard_length_s))?;
    let duration = config.duration_s;
    let channels = config.experiment.channels();

    let raw = stage("generate", generate(config, &source, plan))?;
    let detected: Vec<TimeTagStream> = stage(
        "detect",
        raw.iter()
            .zip(channels)
            .map(|(s, ch)| {
                let params = config.detector(ch).params();
                detect(s, &params, duration, derive_seed(config.seed, &format!("detect/{ch}")))
            })
            .collect(),
    )?;

    if config.write_streams {
        for (s, ch) in detected.iter().zip(channels) {
            let mut buf = Vec::new();
            stage(
                "output",
                write_tags(&mut buf, s, Some(config.seed)).map_err(|e| Error::io(format!("streams/{ch}.tags"), e)),
            )?;
            stage("output", out.write(&format!("streams/{ch}.tags"), &buf))?;
        }
    }

    let mut summary = ReportSummary {
        experiment: config.experiment,
        duration_s: duration,
        seed: config.seed,
        config_sha256: stage("config", config.hash())?,
        configured_pair_rate_hz: source.pair_rate,
        configured_coherence_time_ps: source.coherence_time * 1e12,
        insufficient_data: false,
        singles_hz: channels
            .iter()
            .zip(&detected)
            .map(|(ch, s)| (ch.to_string(), s.rate()))
            .collect(),
        correlation: None,
        pair_fit: None,
        bunching: None,
        heralded: Vec::new(),
        files: BTreeMap::new(),
    };

    match config.experiment {
        Experiment::CrossNondegenerate | Experiment::SelfDegenerate | Experiment::ThermalIdler => {
            correlation_analysis(config, &source, &detected, out, &mut summary)?
        }
        Experiment::Heralded => heralded_analysis(config, &detected, out, &mut summary)?,
    }
    summary.files = out.hashes.clone();
    Ok(summary)
}

fn generate(config: &ScenarioConfig, source: &SourceParams, plan: ShardPlan) -> Result<Vec<TimeTagStream>> {
    let seed = derive_seed(config.seed, "generate");
    let duration = config.duration_s;
    let labels = config.experiment.channels();
    let eta = |ch: &str| config.transmittance(ch);
    match config.experiment {
        Experiment::CrossNondegenerate => {
            let idler = Routing::new(vec![eta("idler"), 0.0])?;
            let signal = Routing::new(vec![0.0, eta("signal")])?;
            generate_routed_pairs(source, duration, &idler, &signal, labels, seed, plan)
        }
        Experiment::SelfDegenerate => {
            let both = Routing::new(vec![0.5 * eta("a"), 0.5 * eta("b")])?;
            generate_routed_pairs(source, duration, &both, &both, labels, seed, plan)
        }
        Experiment::ThermalIdler => {
            let split = Routing::new(vec![0.5 * eta("a"), 0.5 * eta("b")])?;
            generate_thermal_routed(source.pair_rate, source.coherence_time, duration, &split, labels, seed, plan)
        }
        Experiment::Heralded => {
            let herald = Routing::new(vec![eta("herald"), 0.0, 0.0])?;
            let signal = Routing::new(vec![0.0, 0.5 * eta("a"), 0.5 * eta("b")])?;
            generate_routed_pairs(source, duration, &herald, &signal, labels, seed, plan)
        }
    }
}

fn empty_correlogram(bin_width: f64) -> CorrelogramData {
    CorrelogramData {
        bin_width,
        delays: Vec::new(),
        counts: Vec::new(),
        rate1: 0.0,
        rate2: 0.0,
        total_time: 0.0,
    }
}

fn empty_curve() -> G2Curve {
    G2Curve {
        delays: Vec::new(),
        values: Vec::new(),
        errors: Vec::new(),
        accidental_rate: 0.0,
    }
}

fn correlation_analysis(
    config: &ScenarioConfig,
    source: &SourceParams,
    detected: &[TimeTagStream],
    out: &mut OutputSet,
    summary: &mut ReportSummary,
) -> Result<()> {
    let bin = config.histogram.bin_width_ps * 1e-12;
    let max_delay = config.histogram.max_delay_ps * 1e-12;
    let (a, b) = (&detected[0], &detected[1]);

    if a.is_empty() || b.is_empty() || config.duration_s == 0.0 {
        summary.insufficient_data = true;
        stage("output", out.write("correlogram.csv", correlogram_to_csv(&empty_correlogram(bin)).as_bytes()))?;
        stage("output", out.write("g2.csv", g2_to_csv(&empty_curve(), None).as_bytes()))?;
        return Ok(());
    }

    let hist = stage("correlate", correlate(a, b, bin, max_delay))?;
    let curve = stage("correlate", g2_normalize(&hist))?;
    stage("output", out.write("correlogram.csv", correlogram_to_csv(&hist).as_bytes()))?;
    stage("output", out.write("g2.csv", g2_to_csv(&curve, Some(&hist)).as_bytes()))?;

    let channels = config.experiment.channels();
    let (ja, jb) = (
        config.detector(channels[0]).jitter_ps * 1e-12,
        config.detector(channels[1]).jitter_ps * 1e-12,
    );
    // Root-mean-square of the two jitters, so that equal detectors reduce to the single-detector form.
    let jitter = (0.5 * (ja * ja + jb * jb)).sqrt();
    let smearing = stage("fit", tau_w(jitter, bin))?;

    let insufficient = hist.total_counts() == 0;
    summary.insufficient_data = insufficient;
    let mut tc_for_window = source.coherence_time;

    if !insufficient && config.histogram.fit_peak {
        match config.experiment {
            Experiment::ThermalIdler => {
                let fit = stage("fit", fit_bunching(&curve, smearing, source.coherence_time))?;
                let p = purity(fit.g2_zero).ok();
                tc_for_window = fit.coherence_time;
                summary.bunching = Some(BunchingSummary {
                    g2_zero: fit.g2_zero,
                    g2_zero_error: fit.g2_zero_error,
                    coherence_time_ps: fit.coherence_time * 1e12,
                    coherence_time_error_ps: fit.coherence_time_error * 1e12,
                    smearing_ps: smearing * 1e12,
                    purity: p.map(|p| p.purity),
                    schmidt_number: p.map(|p| p.schmidt_number),
                    reduced_chi2: fit.residual_norm * fit.residual_norm,
                });
            }
            _ => {
                let kind = match config.experiment {
                    Experiment::SelfDegenerate => CorrelationKind::SelfDegenerate,
                    _ => CorrelationKind::CrossNondegenerate,
                };
                let init = stage("fit", initial_guess(&curve, kind, smearing))?;
                let fit = stage("fit", fit_g2(&curve, kind, &init))?;
                tc_for_window = fit.params.coherence_time;
                summary.pair_fit = Some(PairFitSummary::from_fit(&fit));
            }
        }
    }

    let half_window = config
        .histogram
        .coincidence_half_window_ps
        .map_or(COINCIDENCE_WINDOW_FACTOR * tc_for_window, |w| w * 1e-12);
    summary.correlation = Some(CorrelationSummary {
        bin_width_ps: config.histogram.bin_width_ps,
        total_coincidences: hist.total_counts(),
        coincidence_half_window_ps: half_window * 1e12,
        coincidence_rate_hz: hist.coincidence_rate(half_window),
        accidental_rate_hz: curve.accidental_rate,
        g2_zero_bin: curve.at_zero(),
        car: car(&curve, tc_for_window).ok(),
    });
    Ok(())
}

fn heralded_analysis(
    config: &ScenarioConfig,
    detected: &[TimeTagStream],
    out: &mut OutputSet,
    summary: &mut ReportSummary,
) -> Result<()> {
    let (h, a, b) = (&detected[0], &detected[1], &detected[2]);
    let mut csv = String::from("# kind: heralded_g2\nwindow_ns,g2,g2_err,heralds,with_a,with_b,with_both\n");
    for &w in &config.heralded.windows_ns {
        let row = match heralded_g2(h, a, b, w * 1e-9) {
            Ok(r) => HeraldedSummary {
                window_ns: w,
                g2: Some(r.value),
                g2_error: (r.with_both > 0).then(|| r.value / (r.with_both as f64).sqrt()),
                heralds: r.heralds,
                with_a: r.with_a,
                with_b: r.with_b,
                with_both: r.with_both,
            },
            Err(Error::InsufficientStatistics { heralds, with_a, with_b }) => {
                summary.insufficient_data = true;
                HeraldedSummary {
                    window_ns: w,
                    g2: None,
                    g2_error: None,
                    heralds,
                    with_a,
                    with_b,
                    with_both: 0,
                }
            }
            Err(e) => return Err(e.in_stage("heralded")),
        };
        let fmt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            row.window_ns,
            fmt(row.g2),
            fmt(row.g2_error),
            row.heralds,
            row.with_a,
            row.with_b,
            row.with_both
        );
        summary.heralded.push(row);
    }
    stage("output", out.write("heralded.csv", csv.as_bytes()))
}

/// Weighted straight-line fit `y = slope x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub slope_error: f64,
    pub intercept: f64,
    pub intercept_error: f64,
    /// `|intercept| <= 3 * intercept_error`.
    pub intercept_consistent_with_zero: bool,
}

/// Weighted least squares with weights `1 / sigma^2`; `None` for fewer than two
/// distinct abscissae.
pub fn weighted_linear_fit(x: &[f64], y: &[f64], sigma: &[f64]) -> Option<LinearFit> {
    if x.len() < 2 || x.len() != y.len() || x.len() != sigma.len() {
        return None;
    }
    let w: Vec<f64> = sigma.iter().map(|s| 1.0 / (s * s)).collect();
    if w.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return None;
    }
    let s: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    let sy: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * x * x).sum();
    let sxy: f64 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * x * y).sum();
    let det = s * sxx - sx * sx;
    if !(det > 0.0) {
        return None;
    }
    let slope = (s * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let slope_error = (s / det).sqrt();
    let intercept_error = (sxx / det).sqrt();
    Some(LinearFit {
        slope,
        slope_error,
        intercept,
        intercept_error,
        intercept_consistent_with_zero: intercept.abs() <= 3.0 * intercept_error,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub pump_power_mw: f64,
    pub output_dir: PathBuf,
    pub summary: ReportSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    /// Fitted pair rate (MHz) against pump power (mW); absent for fewer than two powers.
    pub rate_fit: Option<LinearFit>,
    pub car_strictly_decreasing: Option<bool>,
}

pub const SWEEP_FILE: &str = "sweep.json";

/// Runs the scenario at each pump power (in parallel, same seed schedule) and
/// regresses the fitted pair rate against power.
pub fn power_sweep(config: &ScenarioConfig, powers_mw: &[f64]) -> Result<SweepReport> {
    if powers_mw.is_empty() {
        return Err(Error::Config("power sweep needs at least one power".into()));
    }
    for &p in powers_mw {
        non_negative("pump_power_mw", p)?;
    }
    let configs: Vec<ScenarioConfig> = powers_mw
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let mut c = config.clone();
            c.source.pump_power_mw = p;
            c.source.pair_rate_mhz = None;
            c.output_dir = config.output_dir.join(format!("point_{i:02}"));
            c
        })
        .collect();
    let points = configs
        .par_iter()
        .map(|c| {
            run_scenario(c).map(|summary| SweepPoint {
                pump_power_mw: c.source.pump_power_mw,
                output_dir: c.output_dir.clone(),
                summary,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("sweep"))?;

    let fits: Option<Vec<&PairFitSummary>> = points.iter().map(|p| p.summary.pair_fit.as_ref()).collect();
    let rate_fit = fits.and_then(|f| {
        let x: Vec<f64> = points.iter().map(|p| p.pump_power_mw).collect();
        let y: Vec<f64> = f.iter().map(|f| f.pair_rate_hz * 1e-6).collect();
        let s: Vec<f64> = f.iter().map(|f| f.pair_rate_error_hz * 1e-6).collect();
        weighted_linear_fit(&x, &y, &s)
    });
    let cars: Option<Vec<f64>> = points
        .iter()
        .map(|p| p.summary.correlation.as_ref().and_then(|c| c.car))
        .collect();
    let car_strictly_decreasing = cars.filter(|c| c.len() >= 2).map(|c| {
        let mut order: Vec<usize> = (0..c.len()).collect();
        order.sort_by(|&i, &j| powers_mw[i].total_cmp(&powers_mw[j]));
        order.windows(2).all(|w| c[w[1]] < c[w[0]])
    });
    let report = SweepReport {
        points,
        rate_fit,
        car_strictly_decreasing,
    };
    let json = serde_json::to_string_pretty(&report).expect("sweep report serializes");
    let path = config.output_dir.join(SWEEP_FILE);
    fs::write(&path, format!("{json}\n")).map_err(|e| Error::io(&path, e).in_stage("output"))?;
    Ok(report)
}

/// Human-readable rendering of a summary.
pub fn render_report(s: &ReportSummary) -> String {
    let mut o = String::new();
    let _ = writeln!(o, "experiment      {:?}", s.experiment);
    let _ = writeln!(o, "duration        {} s (seed {})", s.duration_s, s.seed);
    let _ = writeln!(o, "config sha256   {}", s.config_sha256);
    let _ = writeln!(
        o,
        "source          R = {:.4} MHz, tau_c = {:.2} ps",
        s.configured_pair_rate_hz * 1e-6,
        s.configured_coherence_time_ps
    );
    for (ch, r) in &s.singles_hz {
        let _ = writeln!(o, "singles {ch:<8} {r:.2} Hz");
    }
    if s.insufficient_data {
        let _ = writeln!(o, "insufficient data: no estimate for some quantities");
    }
    if let Some(c) = &s.correlation {
        let _ = writeln!(
            o,
            "coincidences    {} total, {:.2} Hz within +/-{:.1} ps",
            c.total_coincidences, c.coincidence_rate_hz, c.coincidence_half_window_ps
        );
        if let Some(g) = c.g2_zero_bin {
            let _ = writeln!(o, "g2(0) bin       {g:.4}");
        }
        if let Some(car) = c.car {
            let _ = writeln!(o, "CAR             {car:.1}");
        }
    }
    if let Some(f) = &s.pair_fit {
        let _ = writeln!(
            o,
            "fit R           {:.4} +/- {:.4} MHz",
            f.pair_rate_hz * 1e-6,
            f.pair_rate_error_hz * 1e-6
        );
        let _ = writeln!(
            o,
            "fit tau_c       {:.2} +/- {:.2} ps (bandwidth {:.4} +/- {:.4} GHz)",
            f.coherence_time_ps,
            f.coherence_time_error_ps,
            f.bandwidth_hz * 1e-9,
            f.bandwidth_error_hz * 1e-9
        );
        let _ = writeln!(o, "reduced chi2    {:.3}", f.reduced_chi2);
    }
    if let Some(b) = &s.bunching {
        let _ = writeln!(o, "fit g2(0)       {:.4} +/- {:.4}", b.g2_zero, b.g2_zero_error);
        let _ = writeln!(o, "fit tau_c       {:.2} +/- {:.2} ps", b.coherence_time_ps, b.coherence_time_error_ps);
        if let (Some(p), Some(k)) = (b.purity, b.schmidt_number) {
            let _ = writeln!(o, "purity          {p:.4} (Schmidt number {k:.4})");
        }
    }
    for h in &s.heralded {
        match (h.g2, h.g2_error) {
            (Some(g), Some(e)) => {
                let _ = writeln!(o, "heralded g2 {:>5} ns  {g:.4} +/- {e:.4} ({} heralds)", h.window_ns, h.heralds);
            }
            (Some(g), None) => {
                let _ = writeln!(o, "heralded g2 {:>5} ns  {g:.4} ({} heralds)", h.window_ns, h.heralds);
            }
            _ => {
                let _ = writeln!(o, "heralded g2 {:>5} ns  n/a", h.window_ns);
            }
        }
    }
    o
}
