//! Detection chain: loss, timing jitter, dark counts, dead time and beam splitting.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{fraction, non_negative, Result};
use crate::rng::stage_rng;
use crate::stream::TimeTagStream;

/// Default single-detector timing jitter (standard deviation), seconds.
/// Placeholder value; not a measured device number.
pub const DEFAULT_JITTER_SIGMA: f64 = 50e-12;
/// Default dark-count rate, Hz. Placeholder value.
pub const DEFAULT_DARK_RATE: f64 = 100.0;
/// Default non-paralyzable dead time, seconds. Placeholder value.
pub const DEFAULT_DEAD_TIME: f64 = 10e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    /// Probability that an incident photon produces a click.
    pub transmittance: f64,
    /// Gaussian timing jitter standard deviation, seconds.
    pub jitter_sigma: f64,
    pub dark_rate: f64,
    pub dead_time: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            transmittance: 1.0,
            jitter_sigma: DEFAULT_JITTER_SIGMA,
            dark_rate: DEFAULT_DARK_RATE,
            dead_time: DEFAULT_DEAD_TIME,
        }
    }
}

impl DetectorParams {
    /// A perfect detector: no loss, jitter, dark counts or dead time.
    pub fn ideal() -> Self {
        Self {
            transmittance: 1.0,
            jitter_sigma: 0.0,
            dark_rate: 0.0,
            dead_time: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        fraction("transmittance", self.transmittance)?;
        non_negative("jitter_sigma", self.jitter_sigma)?;
        non_negative("dark_rate", self.dark_rate)?;
        non_negative("dead_time", self.dead_time)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossStage {
    pub label: String,
    pub db: f64,
}

/// Ordered list of loss contributions in dB.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LossBudget {
    pub stages: Vec<LossStage>,
}

impl LossBudget {
    pub fn new(stages: impl IntoIterator<Item = (impl Into<String>, f64)>) -> Result<Self> {
        let stages = stages
            .into_iter()
            .map(|(label, db)| LossStage {
                label: label.into(),
                db,
            })
            .collect();
        let b = Self { stages };
        b.validate()?;
        Ok(b)
    }

    /// Interface losses of the reference device: ring-to-waveguide, fiber-to-chip,
    /// off-chip silicon filter, DWDM and detector efficiency.
    pub fn reference_device() -> Self {
        Self::new([
            ("microring-to-waveguide", 3.0),
            ("fiber-to-chip", 3.5),
            ("silicon filter", 3.0),
            ("DWDM", 6.0),
            ("detector efficiency", 10.0),
        ])
        .expect("static budget is valid")
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.stages {
            non_negative("loss stage dB", s.db)?;
        }
        Ok(())
    }

    pub fn total_db(&self) -> f64 {
        self.stages.iter().map(|s| s.db).sum()
    }

    pub fn transmittance(&self) -> f64 {
        db_to_transmittance(self.total_db())
    }
}

pub fn db_to_transmittance(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

pub fn transmittance_to_db(t: f64) -> f64 {
    -10.0 * t.log10()
}

/// Keeps each tag independently with probability `transmittance`.
pub fn thin(stream: &TimeTagStream, transmittance: f64, seed: u64) -> Result<TimeTagStream> {
    fraction("transmittance", transmittance)?;
    if transmittance == 1.0 {
        return Ok(stream.clone());
    }
    let mut rng = stage_rng(seed, "thin");
    let kept = stream
        .tags()
        .iter()
        .copied()
        .filter(|_| rng.gen::<f64>() < transmittance)
        .collect();
    Ok(TimeTagStream::from_sorted(kept, stream.duration(), stream.label()))
}

/// Routes each tag to output A with probability `ratio`, otherwise to B.
pub fn split(stream: &TimeTagStream, ratio: f64, seed: u64) -> Result<(TimeTagStream, TimeTagStream)> {
    fraction("ratio", ratio)?;
    let mut rng = stage_rng(seed, "split");
    let mut a = Vec::with_capacity((stream.len() as f64 * ratio) as usize + 1);
    let mut b = Vec::with_capacity((stream.len() as f64 * (1.0 - ratio)) as usize + 1);
    for &t in stream.tags() {
        if rng.gen::<f64>() < ratio {
            a.push(t);
        } else {
            b.push(t);
        }
    }
    let label = stream.label();
    Ok((
        TimeTagStream::from_sorted(a, stream.duration(), format!("{label}.a")),
        TimeTagStream::from_sorted(b, stream.duration(), format!("{label}.b")),
    ))
}

/// Non-paralyzable dead time: a tag closer than `dead_time` to the previously
/// kept tag is discarded.
pub fn apply_dead_time(tags: &[f64], dead_time: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(tags.len());
    let mut last = f64::NEG_INFINITY;
    for &t in tags {
        if t - last >= dead_time {
            out.push(t);
            last = t;
        }
    }
    out
}

/// Full detector model: thin, jitter, dark counts, re-sort, dead time.
///
/// Jittered tags falling outside `[0, duration]` are dropped.
pub fn detect(stream: &TimeTagStream, params: &DetectorParams, duration: f64, seed: u64) -> Result<TimeTagStream> {
    params.validate()?;
    non_negative("duration", duration)?;
    let thinned = thin(stream, params.transmittance, crate::rng::derive_seed(seed, "detect/thin"))?;
    let mut tags = thinned.into_tags();

    if params.jitter_sigma > 0.0 {
        let mut rng = stage_rng(seed, "detect/jitter");
        tags = tags
            .into_iter()
            .map(|t| {
                let z: f64 = rng.sample(StandardNormal);
                t + params.jitter_sigma * z
            })
            .filter(|t| (0.0..=duration).contains(t))
            .collect();
        tags.sort_unstable_by(f64::total_cmp);
    }

    if params.dark_rate > 0.0 && duration > 0.0 {
        let mut rng = stage_rng(seed, "detect/dark");
        let mut dark = Vec::new();
        let mut t = 0.0;
        loop {
            let gap: f64 = Exp1.sample(&mut rng);
            t += gap / params.dark_rate;
            if t > duration {
                break;
            }
            dark.push(t);
        }
        let merged = TimeTagStream::from_sorted(tags, duration, "")
            .merge(&TimeTagStream::from_sorted(dark, duration, ""), "");
        tags = merged.into_tags();
    }

    if params.dead_time > 0.0 {
        tags = apply_dead_time(&tags, params.dead_time);
    }
    Ok(TimeTagStream::from_sorted(tags, duration, stream.label()))
}
