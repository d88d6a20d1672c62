//! Photon-pair and thermal-marginal stream synthesis.
//!
//! Pair emission is a homogeneous Poisson process. The idler carries the
//! emission time and the signal trails (or leads) it by a Laplace-distributed
//! delay of scale `coherence_time`, which gives the cross-correlation kernel
//! `exp(-|tau| / coherence_time)`.
//!
//! All generators shard `[0, duration]` into fixed-length intervals, each with
//! its own derived random substream. Output depends only on the seed and the
//! shard plan, never on the number of worker threads.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{non_negative, positive, Error, Result};
use crate::rng::{shard_rng, StageRng};
use crate::stream::TimeTagStream;

/// Default shard length in seconds.
pub const DEFAULT_SHARD_LENGTH: f64 = 1.0;

/// Acceptance ceiling for the thermal intensity, in units of its mean.
/// The intensity is exponentially distributed, so values above the ceiling
/// occur with probability `exp(-20)` and are accepted with probability one.
const THERMAL_INTENSITY_CEILING: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    Degenerate,
    Nondegenerate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceParams {
    /// Pair generation rate in Hz.
    pub pair_rate: f64,
    /// Coherence time of the down-converted photons in seconds.
    pub coherence_time: f64,
    /// Generation rate per unit pump power, Hz per mW.
    pub rate_slope: f64,
    /// On-chip pump power, mW.
    pub pump_power: f64,
    pub kind: PairKind,
}

impl SourceParams {
    /// Source with a directly specified pair rate. Slope and power are left at zero.
    pub fn new(pair_rate: f64, coherence_time: f64, kind: PairKind) -> Result<Self> {
        let p = Self {
            pair_rate,
            coherence_time,
            rate_slope: 0.0,
            pump_power: 0.0,
            kind,
        };
        p.validate()?;
        Ok(p)
    }

    /// Source whose pair rate is `rate_slope * pump_power`.
    pub fn from_power(
        rate_slope: f64,
        pump_power: f64,
        coherence_time: f64,
        kind: PairKind,
    ) -> Result<Self> {
        let pair_rate = pair_rate_from_power(pump_power, rate_slope)?;
        let p = Self {
            pair_rate,
            coherence_time,
            rate_slope,
            pump_power,
            kind,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        non_negative("pair_rate", self.pair_rate)?;
        positive("coherence_time", self.coherence_time)?;
        non_negative("rate_slope", self.rate_slope)?;
        non_negative("pump_power", self.pump_power)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEvent {
    pub t_idler: f64,
    pub t_signal: f64,
}

/// Pair rate for a given pump power, linear in power.
pub fn pair_rate_from_power(power: f64, slope: f64) -> Result<f64> {
    non_negative("pump_power", power)?;
    non_negative("rate_slope", slope)?;
    Ok(slope * power)
}

/// Fixed partition of `[0, duration]` into generation shards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShardPlan {
    pub shard_length: f64,
}

impl Default for ShardPlan {
    fn default() -> Self {
        Self {
            shard_length: DEFAULT_SHARD_LENGTH,
        }
    }
}

impl ShardPlan {
    pub fn new(shard_length: f64) -> Result<Self> {
        positive("shard_length", shard_length)?;
        Ok(Self { shard_length })
    }

    fn intervals(&self, duration: f64) -> Vec<(u64, f64, f64)> {
        if duration <= 0.0 {
            return Vec::new();
        }
        let n = (duration / self.shard_length).ceil().max(1.0) as u64;
        (0..n)
            .map(|i| {
                let start = i as f64 * self.shard_length;
                let end = if i + 1 == n {
                    duration
                } else {
                    (i + 1) as f64 * self.shard_length
                };
                (i, start, end)
            })
            .collect()
    }
}

fn laplace(rng: &mut StageRng, scale: f64) -> f64 {
    let magnitude: f64 = Exp1.sample(rng);
    if rng.gen::<bool>() {
        scale * magnitude
    } else {
        -scale * magnitude
    }
}

/// Calls `emit` for each arrival of a Poisson process with `rate` on `[start, end)`.
fn poisson_arrivals(rng: &mut StageRng, rate: f64, start: f64, end: f64, mut emit: impl FnMut(&mut StageRng, f64)) {
    if rate <= 0.0 {
        return;
    }
    let mut t = start;
    loop {
        let gap: f64 = Exp1.sample(rng);
        t += gap / rate;
        if t >= end {
            break;
        }
        emit(rng, t);
    }
}

fn check_duration(duration: f64) -> Result<()> {
    non_negative("duration", duration).map(|_| ())
}

/// Generates photon pairs over `[0, duration]` with the default shard plan.
pub fn generate_pairs(params: &SourceParams, duration: f64, seed: u64) -> Result<Vec<PairEvent>> {
    generate_pairs_sharded(params, duration, seed, ShardPlan::default())
}

pub fn generate_pairs_sharded(
    params: &SourceParams,
    duration: f64,
    seed: u64,
    plan: ShardPlan,
) -> Result<Vec<PairEvent>> {
    params.validate()?;
    check_duration(duration)?;
    let shards: Vec<Vec<PairEvent>> = plan
        .intervals(duration)
        .into_par_iter()
        .map(|(index, start, end)| {
            let mut rng = shard_rng(seed, "pairs", index);
            let mut out = Vec::new();
            poisson_arrivals(&mut rng, params.pair_rate, start, end, |rng, t| {
                let t_signal = t + laplace(rng, params.coherence_time);
                if (0.0..=duration).contains(&t_signal) {
                    out.push(PairEvent {
                        t_idler: t,
                        t_signal,
                    });
                }
            });
            out
        })
        .collect();
    Ok(shards.concat())
}

/// Idler times of `pairs` as a stream.
pub fn idler_stream(pairs: &[PairEvent], duration: f64, label: &str) -> TimeTagStream {
    TimeTagStream::from_sorted(pairs.iter().map(|p| p.t_idler).collect(), duration, label)
}

pub fn signal_stream(pairs: &[PairEvent], duration: f64, label: &str) -> TimeTagStream {
    let mut tags: Vec<f64> = pairs.iter().map(|p| p.t_signal).collect();
    tags.par_sort_unstable_by(f64::total_cmp);
    TimeTagStream::from_sorted(tags, duration, label)
}

/// Both photons of every pair in one stream (degenerate emission into one mode).
pub fn photon_stream(pairs: &[PairEvent], duration: f64, label: &str) -> TimeTagStream {
    idler_stream(pairs, duration, label).merge(&signal_stream(pairs, duration, label), label)
}

/// Probability that a photon ends up in each output channel. The remainder
/// `1 - sum` is lost.
#[derive(Debug, Clone, PartialEq)]
pub struct Routing(Vec<f64>);

impl Routing {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        for &p in &probabilities {
            crate::error::fraction("routing probability", p)?;
        }
        let total: f64 = probabilities.iter().sum();
        if total > 1.0 + 1e-12 {
            return Err(Error::ParameterDomain {
                name: "routing probabilities",
                value: total,
                reason: "must sum to at most 1",
            });
        }
        Ok(Self(probabilities))
    }

    pub fn channels(&self) -> usize {
        self.0.len()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    fn detected(&self) -> f64 {
        self.0.iter().sum::<f64>().min(1.0)
    }
}

/// Picks index `i` with probability `weights[i] / total`; `weights.len()` means "none".
fn pick(rng: &mut StageRng, weights: &[f64], total: f64) -> usize {
    let mut u = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.len()
}

/// Generates pairs and routes each photon independently to an output channel
/// or to loss, returning one detected stream per channel.
///
/// Distributionally identical to `generate_pairs` followed by per-photon
/// splitting and Bernoulli thinning, but only pairs with at least one
/// surviving photon are ever materialized. The first photon of a pair is the
/// idler (emission anchor) and the second the Laplace-delayed signal.
pub fn generate_routed_pairs(
    params: &SourceParams,
    duration: f64,
    first: &Routing,
    second: &Routing,
    labels: &[&str],
    seed: u64,
    plan: ShardPlan,
) -> Result<Vec<TimeTagStream>> {
    params.validate()?;
    check_duration(duration)?;
    let k = first.channels();
    if second.channels() != k || labels.len() != k {
        return Err(Error::Config(format!(
            "routing channel counts disagree: first {}, second {}, labels {}",
            k,
            second.channels(),
            labels.len()
        )));
    }
    // Outcome weights for the (first, second) photon fates, with index k = lost.
    let fate = |r: &Routing| {
        let mut w = r.probabilities().to_vec();
        w.push((1.0 - r.detected()).max(0.0));
        w
    };
    let (wf, ws) = (fate(first), fate(second));
    let mut class_weights = Vec::with_capacity((k + 1) * (k + 1));
    for &a in &wf {
        for &b in &ws {
            class_weights.push(a * b);
        }
    }
    // Drop the class where both photons are lost.
    let lost_both = class_weights.pop().unwrap_or(0.0);
    let any_detected = (1.0 - lost_both).clamp(0.0, 1.0);
    let rate = params.pair_rate * any_detected;
    let weight_total: f64 = class_weights.iter().sum();

    let shards: Vec<Vec<Vec<f64>>> = plan
        .intervals(duration)
        .into_par_iter()
        .map(|(index, start, end)| {
            let mut rng = shard_rng(seed, "routed-pairs", index);
            let mut out = vec![Vec::new(); k];
            poisson_arrivals(&mut rng, rate, start, end, |rng, t| {
                let class = pick(rng, &class_weights, weight_total).min(class_weights.len() - 1);
                let (ci, cj) = (class / (k + 1), class % (k + 1));
                let t2 = t + laplace(rng, params.coherence_time);
                if !(0.0..=duration).contains(&t2) {
                    return;
                }
                if ci < k {
                    out[ci].push(t);
                }
                if cj < k {
                    out[cj].push(t2);
                }
            });
            out
        })
        .collect();

    Ok((0..k)
        .into_par_iter()
        .map(|c| {
            let mut tags: Vec<f64> = shards.iter().flat_map(|s| s[c].iter().copied()).collect();
            tags.sort_unstable_by(f64::total_cmp);
            TimeTagStream::from_sorted(tags, duration, labels[c])
        })
        .collect())
}

/// Unit-variance real Ornstein-Uhlenbeck coordinate pair forming a complex
/// field whose squared magnitude has unit mean.
struct ThermalField {
    x: f64,
    y: f64,
    correlation_time: f64,
}

impl ThermalField {
    fn stationary(rng: &mut StageRng, correlation_time: f64) -> Self {
        Self {
            x: rng.sample(StandardNormal),
            y: rng.sample(StandardNormal),
            correlation_time,
        }
    }

    fn advance(&mut self, rng: &mut StageRng, dt: f64) {
        let rho = (-dt / self.correlation_time).exp();
        let kick = (1.0 - rho * rho).max(0.0).sqrt();
        let nx: f64 = rng.sample(StandardNormal);
        let ny: f64 = rng.sample(StandardNormal);
        self.x = rho * self.x + kick * nx;
        self.y = rho * self.y + kick * ny;
    }

    fn intensity(&self) -> f64 {
        0.5 * (self.x * self.x + self.y * self.y)
    }
}

/// Thermal (single-mode chaotic) photon stream with mean rate `mean_rate`.
///
/// The intensity is `|E|^2` for a complex Ornstein-Uhlenbeck field with
/// correlation time `2 * coherence_time`, so `g2(tau) = 1 + exp(-|tau| / coherence_time)`.
pub fn generate_thermal(mean_rate: f64, coherence_time: f64, duration: f64, seed: u64) -> Result<TimeTagStream> {
    let routing = Routing::new(vec![1.0])?;
    let mut out = generate_thermal_routed(
        mean_rate,
        coherence_time,
        duration,
        &routing,
        &["thermal"],
        seed,
        ShardPlan::default(),
    )?;
    Ok(out.remove(0))
}

/// Thermal stream split into channels with the given routing. All channels
/// share one underlying field, so this equals splitting and thinning the
/// output of [`generate_thermal`].
///
/// Each shard starts from an independent stationary field, which decorrelates
/// photons straddling a shard boundary; the affected fraction is of order
/// `coherence_time / shard_length`.
pub fn generate_thermal_routed(
    mean_rate: f64,
    coherence_time: f64,
    duration: f64,
    routing: &Routing,
    labels: &[&str],
    seed: u64,
    plan: ShardPlan,
) -> Result<Vec<TimeTagStream>> {
    non_negative("mean_rate", mean_rate)?;
    positive("coherence_time", coherence_time)?;
    check_duration(duration)?;
    let k = routing.channels();
    if labels.len() != k {
        return Err(Error::Config(format!(
            "thermal routing has {k} channels but {} labels",
            labels.len()
        )));
    }
    let detected = routing.detected();
    let candidate_rate = mean_rate * detected * THERMAL_INTENSITY_CEILING;
    let weights = routing.probabilities().to_vec();

    let shards: Vec<Vec<Vec<f64>>> = plan
        .intervals(duration)
        .into_par_iter()
        .map(|(index, start, end)| {
            let mut rng = shard_rng(seed, "thermal", index);
            let mut field = ThermalField::stationary(&mut rng, 2.0 * coherence_time);
            let mut last = start;
            let mut out = vec![Vec::new(); k];
            poisson_arrivals(&mut rng, candidate_rate, start, end, |rng, t| {
                field.advance(rng, t - last);
                last = t;
                let accept = field.intensity() / THERMAL_INTENSITY_CEILING;
                if rng.gen::<f64>() < accept {
                    let c = pick(rng, &weights, detected).min(k - 1);
                    out[c].push(t);
                }
            });
            out
        })
        .collect();

    Ok((0..k)
        .map(|c| {
            let tags: Vec<f64> = shards.iter().flat_map(|s| s[c].iter().copied()).collect();
            TimeTagStream::from_sorted(tags, duration, labels[c])
        })
        .collect())
}
