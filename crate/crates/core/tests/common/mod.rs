//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use ringpair::detchain::{detect, DetectorParams};
use ringpair::ringdesign::{DispersionSample, DispersionTable, Resonance};
use ringpair::scenario::ScenarioConfig;
use ringpair::TimeTagStream;

/// Homogeneous Poisson stream, produced as dark counts of an ideal detector.
pub fn poisson_stream(rate: f64, duration: f64, seed: u64, label: &str) -> TimeTagStream {
    let params = DetectorParams {
        dark_rate: rate,
        ..DetectorParams::ideal()
    };
    detect(&TimeTagStream::empty(duration, label), &params, duration, seed).unwrap()
}

/// Upper `p` quantile of the standard normal distribution for the levels used here.
pub fn z_quantile(p: f64) -> f64 {
    match p {
        p if (p - 0.995).abs() < 1e-12 => 2.575_829_303_549,
        p if (p - 0.005).abs() < 1e-12 => -2.575_829_303_549,
        p if (p - 0.975).abs() < 1e-12 => 1.959_963_984_540,
        p if (p - 0.025).abs() < 1e-12 => -1.959_963_984_540,
        _ => panic!("unsupported quantile {p}"),
    }
}

/// Chi-square quantile by the Wilson–Hilferty cube approximation, accurate to
/// well under a percent for more than a few dozen degrees of freedom.
pub fn chi2_quantile(dof: f64, p: f64) -> f64 {
    let a = 2.0 / (9.0 * dof);
    dof * (1.0 - a + z_quantile(p) * a.sqrt()).powi(3)
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// KS rejection threshold at the 1% level for sample sizes `n` and `m`.
pub fn ks_critical_1pct(n: usize, m: usize) -> f64 {
    1.628 * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

#[allow(clippy::too_many_arguments)]
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Unsmeared peak excess `exp(-|s|/tc) / (2 tc)` convolved numerically with a
/// zero-mean Gaussian of width `tw`, evaluated at delay `tau`.
///
/// The integrand is split at its kink (`s = 0`) and at the Gaussian centre,
/// and truncated where `exp(-d^2 / 2 tw^2 + d / tc)` drops below `exp(-45)`.
pub fn convolved_kernel(tau: f64, tc: f64, tw: f64) -> f64 {
    let norm = 1.0 / (2.0 * tc * (2.0 * std::f64::consts::PI).sqrt() * tw);
    // Work in units of tw so the quadrature sees O(1) abscissae.
    let f = |u: f64| {
        let s = tau + u * tw;
        (-s.abs() / tc - 0.5 * u * u).exp()
    };
    let r = tw / tc;
    let reach = r + (r * r + 90.0).sqrt();
    let (lo, hi) = (-reach, reach);
    let kink = -tau / tw;
    let mut cuts = [lo, 0.0_f64.clamp(lo, hi), kink.clamp(lo, hi), hi];
    cuts.sort_by(f64::total_cmp);
    let peak = cuts.iter().map(|&u| f(u)).fold(0.0, f64::max).max(f(kink.clamp(lo, hi)));
    let total: f64 = cuts
        .windows(2)
        .map(|w| integrate(&f, w[0], w[1], 1e-14 * peak.max(f64::MIN_POSITIVE)))
        .sum();
    total * tw * norm
}

/// Synthetic dispersion tables whose index difference at the matched
/// wavelengths is `0.1 (w - 1.10 µm)`.
pub fn linear_crossing_tables() -> (DispersionTable, DispersionTable) {
    let mut vis = Vec::new();
    let mut ir = Vec::new();
    for i in 0..=24 {
        let w = 0.7 + 0.05 * i as f64;
        for &(l, n0) in &[(770.0, 1.93), (775.0, 1.92), (780.0, 1.91)] {
            vis.push(DispersionSample {
                width_um: w,
                wavelength_nm: l,
                n_eff: n0 + 0.35 * (w - 1.0),
            });
        }
        for &(l, n0) in &[(1540.0, 1.91), (1550.0, 1.90), (1560.0, 1.89)] {
            ir.push(DispersionSample {
                width_um: w,
                wavelength_nm: l,
                n_eff: n0 + 0.25 * (w - 1.0) + 0.03,
            });
        }
    }
    (
        DispersionTable::new("TM2", &vis).unwrap(),
        DispersionTable::new("TM0", &ir).unwrap(),
    )
}

pub fn comb(modes: impl IntoIterator<Item = (i64, f64)>) -> Vec<Resonance> {
    modes
        .into_iter()
        .map(|(m, f)| Resonance {
            m,
            wavelength_nm: 299_792_458.0 / f * 1e9,
            frequency_hz: f,
        })
        .collect()
}

/// Every (signal, idler) order pair that conserves order and energy, by exhaustive search.
pub fn brute_force_pairs(vis: &[Resonance], ir: &[Resonance], pump_m: i64, tol: f64) -> Vec<(i64, i64)> {
    let Some(p) = vis.iter().find(|r| r.m == pump_m) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for s in ir {
        for i in ir {
            if s.m >= i.m && s.m + i.m == pump_m && (p.frequency_hz - s.frequency_hz - i.frequency_hz).abs() <= tol {
                out.push((s.m, i.m));
            }
        }
    }
    out.sort();
    out
}

pub fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

/// Loads one of the shipped scenario configs and redirects its output.
pub fn shipped_config(name: &str, output_dir: &Path) -> ScenarioConfig {
    let mut c = ScenarioConfig::load(&config_path(name), &[]).unwrap();
    c.output_dir = output_dir.to_path_buf();
    c
}

/// Reads every regular file under `dir` as (relative path, bytes), sorted by path.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}
