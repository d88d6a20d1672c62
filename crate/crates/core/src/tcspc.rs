//! Time-correlated single photon counting: delay histograms, normalization to
//! g2, coincidence-to-accidental ratio and heralded autocorrelation.

use std::fmt::Write as _;
use std::io::BufRead;

use rayon::prelude::*;

use crate::error::{positive, Error, Result};
use crate::stream::TimeTagStream;

/// Histogram wings used for the accidental floor start at this many coherence times.
pub const WING_FACTOR: f64 = 10.0;

/// Tags of stream `a` processed per parallel task.
const CHUNK: usize = 1 << 15;

/// Binned coincidence counts between two streams.
///
/// Bin `k` (for `k` in `-n..=n`) is centered at `k * bin_width` and holds delays
/// `t_b - t_a` that round to `k` bin widths; rounding is half away from zero,
/// which keeps the histogram exactly mirror-symmetric under swapping streams.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelogramData {
    pub bin_width: f64,
    pub delays: Vec<f64>,
    pub counts: Vec<u64>,
    pub rate1: f64,
    pub rate2: f64,
    pub total_time: f64,
}

impl CorrelogramData {
    pub fn total_counts(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Raw (not background-subtracted) coincidence rate within `|delay| <= half_window`.
    pub fn coincidence_rate(&self, half_window: f64) -> f64 {
        if self.total_time <= 0.0 {
            return 0.0;
        }
        let n: u64 = self
            .delays
            .iter()
            .zip(&self.counts)
            .filter(|(d, _)| d.abs() <= half_window * (1.0 + 1e-12))
            .map(|(_, c)| c)
            .sum();
        n as f64 / self.total_time
    }
}

/// Coincidence histogram normalized by the accidental rate.
#[derive(Debug, Clone, PartialEq)]
pub struct G2Curve {
    pub delays: Vec<f64>,
    pub values: Vec<f64>,
    /// Poisson standard error of each value, from `max(count, 1)`.
    pub errors: Vec<f64>,
    pub accidental_rate: f64,
}

impl G2Curve {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value in the bin nearest zero delay.
    pub fn at_zero(&self) -> Option<f64> {
        self.delays
            .iter()
            .zip(&self.values)
            .min_by(|a, b| a.0.abs().total_cmp(&b.0.abs()))
            .map(|(_, v)| *v)
    }
}

fn bin_index(delay: f64, bin_width: f64) -> i64 {
    (delay / bin_width).round() as i64
}

/// Delay histogram of `t_b - t_a` over `[-max_delay, max_delay]`.
pub fn correlate(a: &TimeTagStream, b: &TimeTagStream, bin_width: f64, max_delay: f64) -> Result<CorrelogramData> {
    positive("bin_width", bin_width)?;
    if !(max_delay >= bin_width) {
        return Err(Error::ParameterDomain {
            name: "max_delay",
            value: max_delay,
            reason: "must be at least one bin width",
        });
    }
    a.ensure_sorted("first")?;
    b.ensure_sorted("second")?;

    let half = (max_delay / bin_width).round() as i64;
    let nbins = (2 * half + 1) as usize;
    let reach = (half as f64 + 0.5) * bin_width;
    let (ta, tb) = (a.tags(), b.tags());

    let counts = ta
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut hist = vec![0u64; nbins];
            let Some(&first) = chunk.first() else {
                return hist;
            };
            let mut lo = tb.partition_point(|&t| t < first - reach);
            for &t in chunk {
                while lo < tb.len() && tb[lo] < t - reach {
                    lo += 1;
                }
                for &u in &tb[lo..] {
                    let d = u - t;
                    if d > reach {
                        break;
                    }
                    let k = bin_index(d, bin_width);
                    if k.abs() <= half {
                        hist[(k + half) as usize] += 1;
                    }
                }
            }
            hist
        })
        .reduce(
            || vec![0u64; nbins],
            |mut x, y| {
                for (p, q) in x.iter_mut().zip(y) {
                    *p += q;
                }
                x
            },
        );

    let total_time = a.duration().max(b.duration());
    Ok(CorrelogramData {
        bin_width,
        delays: (-half..=half).map(|k| k as f64 * bin_width).collect(),
        counts,
        rate1: a.rate(),
        rate2: b.rate(),
        total_time,
    })
}

/// Normalizes coincidence counts by the accidental expectation `R1 R2 tau_b T`.
pub fn g2_normalize(c: &CorrelogramData) -> Result<G2Curve> {
    if !(c.rate1 > 0.0 && c.rate2 > 0.0 && c.total_time > 0.0) {
        return Err(Error::DegenerateInput(format!(
            "cannot normalize: rate1 {} Hz, rate2 {} Hz, total time {} s",
            c.rate1, c.rate2, c.total_time
        )));
    }
    let accidental_rate = c.rate1 * c.rate2 * c.bin_width;
    let norm = accidental_rate * c.total_time;
    Ok(G2Curve {
        delays: c.delays.clone(),
        values: c.counts.iter().map(|&n| n as f64 / norm).collect(),
        errors: c.counts.iter().map(|&n| (n.max(1) as f64).sqrt() / norm).collect(),
        accidental_rate,
    })
}

/// Coincidence-to-accidental ratio with wings at `|delay| > 10 * coherence_time`.
pub fn car(g: &G2Curve, coherence_time: f64) -> Result<f64> {
    positive("coherence_time", coherence_time)?;
    car_with_wings(g, WING_FACTOR * coherence_time)
}

/// Peak value divided by the mean over bins with `|delay| > wing_start`.
pub fn car_with_wings(g: &G2Curve, wing_start: f64) -> Result<f64> {
    if g.is_empty() {
        return Err(Error::DegenerateInput("empty g2 curve".into()));
    }
    let peak = g.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(peak > 0.0) {
        return Err(Error::DegenerateInput("all-zero g2 curve".into()));
    }
    let wings: Vec<f64> = g
        .delays
        .iter()
        .zip(&g.values)
        .filter(|(d, _)| d.abs() > wing_start)
        .map(|(_, v)| *v)
        .collect();
    if wings.is_empty() {
        return Err(Error::DegenerateInput(format!(
            "no histogram bins beyond the wing start {wing_start:e} s"
        )));
    }
    let floor = wings.iter().sum::<f64>() / wings.len() as f64;
    if !(floor > 0.0) {
        return Err(Error::DegenerateInput("accidental floor is zero".into()));
    }
    Ok(peak / floor)
}

/// Herald counts behind a heralded g2 estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeraldedG2 {
    pub value: f64,
    pub heralds: u64,
    pub with_a: u64,
    pub with_b: u64,
    pub with_both: u64,
}

/// Advances `cursor` past tags earlier than `lo` and reports whether a tag lies in `[lo, hi]`.
fn any_in_window(tags: &[f64], cursor: &mut usize, lo: f64, hi: f64) -> bool {
    while *cursor < tags.len() && tags[*cursor] < lo {
        *cursor += 1;
    }
    *cursor < tags.len() && tags[*cursor] <= hi
}

/// Heralded zero-delay autocorrelation `N_hab N_h / (N_ha N_hb)`.
///
/// A herald counts toward `N_ha` when at least one `a` tag lies within
/// `window / 2` of it (several tags still count once), likewise for `b`;
/// `N_hab` counts heralds with both.
pub fn heralded_g2(herald: &TimeTagStream, a: &TimeTagStream, b: &TimeTagStream, window: f64) -> Result<HeraldedG2> {
    positive("window", window)?;
    herald.ensure_sorted("herald")?;
    a.ensure_sorted("a")?;
    b.ensure_sorted("b")?;
    let half = 0.5 * window;
    let (ta, tb) = (a.tags(), b.tags());
    let (mut ia, mut ib) = (0usize, 0usize);
    let (mut with_a, mut with_b, mut with_both) = (0u64, 0u64, 0u64);
    for &h in herald.tags() {
        let hit_a = any_in_window(ta, &mut ia, h - half, h + half);
        let hit_b = any_in_window(tb, &mut ib, h - half, h + half);
        with_a += u64::from(hit_a);
        with_b += u64::from(hit_b);
        with_both += u64::from(hit_a && hit_b);
    }
    let heralds = herald.len() as u64;
    if with_a == 0 || with_b == 0 {
        return Err(Error::InsufficientStatistics {
            heralds,
            with_a,
            with_b,
        });
    }
    let value = (with_both as f64 * heralds as f64) / (with_a as f64 * with_b as f64);
    Ok(HeraldedG2 {
        value,
        heralds,
        with_a,
        with_b,
        with_both,
    })
}

fn ps(seconds: f64) -> f64 {
    seconds * 1e12
}

/// Serializes a correlogram as CSV `delay_ps,counts` with a `#` metadata header.
pub fn correlogram_to_csv(c: &CorrelogramData) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# kind: correlogram");
    let _ = writeln!(s, "# bin_width_ps: {}", ps(c.bin_width));
    let _ = writeln!(s, "# rate1_hz: {}", c.rate1);
    let _ = writeln!(s, "# rate2_hz: {}", c.rate2);
    let _ = writeln!(s, "# total_time_s: {}", c.total_time);
    let _ = writeln!(s, "delay_ps,counts");
    for (d, n) in c.delays.iter().zip(&c.counts) {
        let _ = writeln!(s, "{},{}", ps(*d), n);
    }
    s
}

/// Serializes a g2 curve as CSV `delay_ps,g2,g2_err`.
pub fn g2_to_csv(g: &G2Curve, c: Option<&CorrelogramData>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# kind: g2");
    if let Some(c) = c {
        let _ = writeln!(s, "# bin_width_ps: {}", ps(c.bin_width));
        let _ = writeln!(s, "# rate1_hz: {}", c.rate1);
        let _ = writeln!(s, "# rate2_hz: {}", c.rate2);
        let _ = writeln!(s, "# total_time_s: {}", c.total_time);
    }
    let _ = writeln!(s, "# accidental_rate_hz: {}", g.accidental_rate);
    let _ = writeln!(s, "delay_ps,g2,g2_err");
    for ((d, v), e) in g.delays.iter().zip(&g.values).zip(&g.errors) {
        let _ = writeln!(s, "{},{},{}", ps(*d), v, e);
    }
    s
}

struct CsvTable {
    meta: Vec<(String, String)>,
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl CsvTable {
    fn meta_f64(&self, key: &str) -> Option<f64> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .and_then(|(_, v)| v.parse().ok())
    }
}

fn read_table<R: BufRead>(input: R) -> Result<CsvTable> {
    let mut meta = Vec::new();
    let mut columns = Vec::new();
    let mut rows = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(m) = line.strip_prefix('#') {
            if let Some((k, v)) = m.split_once(':') {
                meta.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        if columns.is_empty() {
            columns = line.split(',').map(|c| c.trim().to_string()).collect();
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
        if row.len() != columns.len() {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected {} fields, found {}", columns.len(), row.len()),
            });
        }
        rows.push(row);
    }
    Ok(CsvTable { meta, columns, rows })
}

/// Reads a correlogram CSV written by [`correlogram_to_csv`].
pub fn read_correlogram_csv<R: BufRead>(input: R) -> Result<CorrelogramData> {
    let t = read_table(input)?;
    if t.columns.len() < 2 || t.columns[1] != "counts" {
        return Err(Error::Parse {
            line: 0,
            message: "expected columns delay_ps,counts".into(),
        });
    }
    let need = |k: &str| {
        t.meta_f64(k).ok_or_else(|| Error::Parse {
            line: 0,
            message: format!("missing header `{k}`"),
        })
    };
    Ok(CorrelogramData {
        bin_width: need("bin_width_ps")? * 1e-12,
        rate1: need("rate1_hz")?,
        rate2: need("rate2_hz")?,
        total_time: need("total_time_s")?,
        delays: t.rows.iter().map(|r| r[0] * 1e-12).collect(),
        counts: t.rows.iter().map(|r| r[1].max(0.0).round() as u64).collect(),
    })
}

/// Reads a g2 CSV written by [`g2_to_csv`]. A missing error column defaults
/// to unit weights.
pub fn read_g2_csv<R: BufRead>(input: R) -> Result<G2Curve> {
    let t = read_table(input)?;
    if t.columns.len() < 2 || t.columns[1] != "g2" {
        return Err(Error::Parse {
            line: 0,
            message: "expected columns delay_ps,g2[,g2_err]".into(),
        });
    }
    Ok(G2Curve {
        delays: t.rows.iter().map(|r| r[0] * 1e-12).collect(),
        values: t.rows.iter().map(|r| r[1]).collect(),
        errors: t
            .rows
            .iter()
            .map(|r| r.get(2).copied().unwrap_or(1.0))
            .collect(),
        accidental_rate: t.meta_f64("accidental_rate_hz").unwrap_or(0.0),
    })
}
