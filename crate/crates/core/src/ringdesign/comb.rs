//! Resonance combs, down-conversion mode pairs and simple efficiency scalings.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{non_negative, positive, Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const FIXED_POINT_TOLERANCE: f64 = 1e-14;
const FIXED_POINT_MAX_ITER: usize = 500;

pub fn wavelength_nm_to_hz(wavelength_nm: f64) -> f64 {
    SPEED_OF_LIGHT / (wavelength_nm * 1e-9)
}

/// Effective index as a function of wavelength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EffectiveIndex {
    Constant { n_eff: f64 },
    /// `sum_k coefficients[k] * (lambda - center_nm)^k`, wavelength in nm.
    Taylor { center_nm: f64, coefficients: Vec<f64> },
    /// Piecewise-linear interpolation; undefined outside the sampled range.
    Table { wavelength_nm: Vec<f64>, n_eff: Vec<f64> },
}

impl EffectiveIndex {
    pub fn eval(&self, wavelength_nm: f64) -> Option<f64> {
        match self {
            EffectiveIndex::Constant { n_eff } => Some(*n_eff),
            EffectiveIndex::Taylor {
                center_nm,
                coefficients,
            } => {
                let d = wavelength_nm - center_nm;
                Some(coefficients.iter().rev().fold(0.0, |acc, c| acc * d + c))
            }
            EffectiveIndex::Table { wavelength_nm: xs, n_eff } => {
                if xs.len() != n_eff.len() || xs.is_empty() {
                    return None;
                }
                if xs.len() == 1 {
                    return (wavelength_nm == xs[0]).then_some(n_eff[0]);
                }
                if !(wavelength_nm >= xs[0] && wavelength_nm <= xs[xs.len() - 1]) {
                    return None;
                }
                let i = xs.partition_point(|&x| x <= wavelength_nm).clamp(1, xs.len() - 1) - 1;
                let u = (wavelength_nm - xs[i]) / (xs[i + 1] - xs[i]);
                Some(n_eff[i] * (1.0 - u) + n_eff[i + 1] * u)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingSpec {
    pub radius_um: f64,
    /// Loaded quality factor per azimuthal mode number.
    #[serde(default)]
    pub mode_q: BTreeMap<i64, f64>,
    pub index: EffectiveIndex,
}

impl RingSpec {
    pub fn new(radius_um: f64, index: EffectiveIndex) -> Result<Self> {
        positive("radius_um", radius_um)?;
        Ok(Self {
            radius_um,
            mode_q: BTreeMap::new(),
            index,
        })
    }

    fn circumference_nm(&self) -> f64 {
        2.0 * PI * self.radius_um * 1e3
    }

    /// Continuous azimuthal order `n_eff(lambda) L / lambda`.
    pub fn azimuthal_order(&self, wavelength_nm: f64) -> Option<f64> {
        Some(self.index.eval(wavelength_nm)? * self.circumference_nm() / wavelength_nm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub m: i64,
    pub wavelength_nm: f64,
    pub frequency_hz: f64,
}

/// Solves `n_eff(lambda) * 2 pi r = m * lambda` for one azimuthal order.
fn solve_resonance(ring: &RingSpec, m: i64, guess_nm: f64) -> Result<Option<f64>> {
    let l = ring.circumference_nm();
    let mut lambda = guess_nm;
    for _ in 0..FIXED_POINT_MAX_ITER {
        let Some(n) = ring.index.eval(lambda) else {
            return Ok(None);
        };
        let next = l * n / m as f64;
        if !next.is_finite() || next <= 0.0 {
            break;
        }
        if (next - lambda).abs() <= FIXED_POINT_TOLERANCE * next {
            return Ok(Some(next));
        }
        lambda = next;
    }
    Err(Error::Numeric(format!("resonance fixed point did not converge for m = {m}")))
}

/// All resonances with wavelength in `[band.0, band.1]` nm, ordered by `m`.
pub fn resonance_comb(ring: &RingSpec, band: (f64, f64)) -> Result<Vec<Resonance>> {
    positive("radius_um", ring.radius_um)?;
    let (lo, hi) = band;
    if !(lo < hi) || lo <= 0.0 {
        return Ok(Vec::new());
    }
    let probes = 64;
    let orders: Vec<f64> = (0..=probes)
        .filter_map(|k| ring.azimuthal_order(lo + (hi - lo) * k as f64 / probes as f64))
        .collect();
    if orders.is_empty() {
        return Err(Error::Config(format!(
            "effective index undefined over band [{lo}, {hi}] nm"
        )));
    }
    let m_min = (orders.iter().copied().fold(f64::INFINITY, f64::min).floor() as i64 - 1).max(1);
    let m_max = orders.iter().copied().fold(f64::NEG_INFINITY, f64::max).ceil() as i64 + 1;
    let center = 0.5 * (lo + hi);
    let n_center = ring
        .index
        .eval(center)
        .or_else(|| ring.index.eval(lo))
        .ok_or_else(|| Error::Config("effective index undefined at band center".into()))?;
    let mut out = Vec::new();
    for m in m_min..=m_max {
        let guess = ring.circumference_nm() * n_center / m as f64;
        if let Some(lambda) = solve_resonance(ring, m, guess)? {
            if lambda >= lo && lambda <= hi {
                out.push(Resonance {
                    m,
                    wavelength_nm: lambda,
                    frequency_hz: wavelength_nm_to_hz(lambda),
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeRef {
    pub m: i64,
    pub frequency_hz: f64,
}

impl From<&Resonance> for ModeRef {
    fn from(r: &Resonance) -> Self {
        Self {
            m: r.m,
            frequency_hz: r.frequency_hz,
        }
    }
}

/// Pump, signal and idler modes of one down-conversion channel. The signal is
/// the higher-order (higher-frequency) mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModePair {
    pub pump: ModeRef,
    pub signal: ModeRef,
    pub idler: ModeRef,
}

impl ModePair {
    pub fn is_degenerate(&self) -> bool {
        self.signal.m == self.idler.m
    }

    /// `nu_pump - nu_signal - nu_idler` in Hz.
    pub fn energy_mismatch(&self) -> f64 {
        self.pump.frequency_hz - self.signal.frequency_hz - self.idler.frequency_hz
    }
}

/// Signal/idler mode pairs of `comb_ir` that conserve azimuthal order exactly
/// and energy within `tolerance_hz` for the visible pump mode of order `pump_m`.
pub fn spdc_pairs(comb_vis: &[Resonance], comb_ir: &[Resonance], pump_m: i64, tolerance_hz: f64) -> Vec<ModePair> {
    let Some(pump) = comb_vis.iter().find(|r| r.m == pump_m) else {
        return Vec::new();
    };
    let by_m: BTreeMap<i64, &Resonance> = comb_ir.iter().map(|r| (r.m, r)).collect();
    let mut out = Vec::new();
    for (&m_s, signal) in by_m.iter().rev() {
        let m_i = pump_m - m_s;
        if m_i > m_s {
            break;
        }
        let Some(idler) = by_m.get(&m_i) else {
            continue;
        };
        let pair = ModePair {
            pump: pump.into(),
            signal: (*signal).into(),
            idler: (*idler).into(),
        };
        if pair.energy_mismatch().abs() <= tolerance_hz {
            out.push(pair);
        }
    }
    out.sort_by_key(|p| p.signal.m - p.idler.m);
    out
}

/// Cavity linewidth `nu / Q` in Hz.
pub fn linewidth_hz(frequency_hz: f64, q: f64) -> Result<f64> {
    positive("quality factor", q)?;
    Ok(frequency_hz / q)
}

/// Second-harmonic power `eta * P_pump^2`.
pub fn shg_power(eta_per_w: f64, pump_w: f64) -> Result<f64> {
    non_negative("eta", eta_per_w)?;
    non_negative("pump power", pump_w)?;
    Ok(eta_per_w * pump_w * pump_w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairFlux {
    pub pair: ModePair,
    pub rate_hz: f64,
}

/// Relative pair flux per channel, `base * (Q_s / Q_ref) * (Q_i / Q_ref)`,
/// halved for the degenerate channel.
pub fn pair_flux_comb(pairs: &[ModePair], q: &BTreeMap<i64, f64>, base_hz: f64, q_ref: f64) -> Result<Vec<PairFlux>> {
    non_negative("base rate", base_hz)?;
    positive("reference Q", q_ref)?;
    let lookup = |m: i64| -> Result<f64> {
        let v = *q
            .get(&m)
            .ok_or_else(|| Error::Config(format!("no quality factor for mode m = {m}")))?;
        positive("quality factor", v)
    };
    pairs
        .iter()
        .map(|p| {
            let (qs, qi) = (lookup(p.signal.m)?, lookup(p.idler.m)?);
            let weight = if p.is_degenerate() { 0.5 } else { 1.0 };
            Ok(PairFlux {
                pair: *p,
                rate_hz: base_hz * weight * (qs / q_ref) * (qi / q_ref),
            })
        })
        .collect()
}

/// Attenuation in dB of a path of `length_cm` through a medium of `coeff_db_per_cm`.
pub fn attenuation_budget(coeff_db_per_cm: f64, length_cm: f64) -> Result<f64> {
    non_negative("attenuation coefficient", coeff_db_per_cm)?;
    non_negative("length", length_cm)?;
    Ok(coeff_db_per_cm * length_cm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_ring(radius_um: f64) -> RingSpec {
        RingSpec::new(radius_um, EffectiveIndex::Constant { n_eff: 2.0 }).unwrap()
    }

    #[test]
    fn constant_index_comb() {
        let ring = constant_ring(30.0);
        let comb = resonance_comb(&ring, (1540.0, 1560.0)).unwrap();
        let r = comb.iter().find(|r| r.m == 243).expect("m = 243 present");
        let want = 2.0 * PI * 30e3 * 2.0 / 243.0;
        assert!(((r.wavelength_nm - want) / want).abs() < 1e-6);
        for r in &comb {
            let m = ring.azimuthal_order(r.wavelength_nm).unwrap();
            assert!(((m - r.m as f64) / r.m as f64).abs() < 1e-9);
        }
        assert!(comb.windows(2).all(|w| w[1].m == w[0].m + 1));
    }

    #[test]
    fn empty_band() {
        assert!(resonance_comb(&constant_ring(30.0), (1550.0, 1550.0)).unwrap().is_empty());
        assert!(resonance_comb(&constant_ring(30.0), (1560.0, 1540.0)).unwrap().is_empty());
    }

    #[test]
    fn dispersive_comb_satisfies_resonance() {
        let ring = RingSpec::new(
            40.0,
            EffectiveIndex::Taylor {
                center_nm: 1550.0,
                coefficients: vec![1.9, -2e-4, 1e-8],
            },
        )
        .unwrap();
        let comb = resonance_comb(&ring, (1500.0, 1600.0)).unwrap();
        assert!(comb.len() > 10);
        for r in &comb {
            let m = ring.azimuthal_order(r.wavelength_nm).unwrap();
            assert!(((m - r.m as f64) / r.m as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn shg_and_attenuation() {
        assert_eq!(shg_power(1.16, 0.0).unwrap(), 0.0);
        assert!((shg_power(1.16, 1e-3).unwrap() - 1.16e-6).abs() < 1e-18);
        assert_eq!(shg_power(1.16, 2e-3).unwrap(), 4.0 * shg_power(1.16, 1e-3).unwrap());
        assert!(shg_power(-1.0, 1.0).is_err());
        assert!((attenuation_budget(1740.0, 0.01).unwrap() - 17.4).abs() < 1e-12);
        assert_eq!(attenuation_budget(90.0, 1.0).unwrap(), 90.0);
        assert_eq!(attenuation_budget(1740.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn missing_q_is_config_error() {
        let pair = ModePair {
            pump: ModeRef { m: 10, frequency_hz: 2.0 },
            signal: ModeRef { m: 6, frequency_hz: 1.2 },
            idler: ModeRef { m: 4, frequency_hz: 0.8 },
        };
        let q = BTreeMap::from([(6, 1e5)]);
        assert!(matches!(pair_flux_comb(&[pair], &q, 1.0, 1e5), Err(Error::Config(_))));
    }

    fn comb_from(freqs: impl IntoIterator<Item = (i64, f64)>) -> Vec<Resonance> {
        freqs
            .into_iter()
            .map(|(m, f)| Resonance {
                m,
                wavelength_nm: SPEED_OF_LIGHT / f * 1e9,
                frequency_hz: f,
            })
            .collect()
    }

    /// IR comb around order `n` with free spectral range `fsr` and a quadratic
    /// (group-velocity dispersion) term `d * (m - n)^2`.
    fn gvd_comb(n: i64, half: i64, nu0: f64, fsr: f64, d: f64) -> Vec<Resonance> {
        comb_from((n - half..=n + half).map(|m| {
            let k = (m - n) as f64;
            (m, nu0 + fsr * k + d * k * k)
        }))
    }

    fn brute_force(vis: &[Resonance], ir: &[Resonance], pump_m: i64, tol: f64) -> Vec<(i64, i64)> {
        let Some(p) = vis.iter().find(|r| r.m == pump_m) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for s in ir {
            for i in ir {
                if s.m >= i.m
                    && s.m + i.m == pump_m
                    && (p.frequency_hz - s.frequency_hz - i.frequency_hz).abs() <= tol
                {
                    out.push((s.m, i.m));
                }
            }
        }
        out.sort();
        out
    }

    fn as_orders(pairs: &[ModePair]) -> Vec<(i64, i64)> {
        let mut v: Vec<_> = pairs.iter().map(|p| (p.signal.m, p.idler.m)).collect();
        v.sort();
        v
    }

    #[test]
    fn symmetric_comb_accepts_all_pairs() {
        let (n, nu0) = (243, 193.4e12);
        let ir = gvd_comb(n, 40, nu0, 800e9, 0.0);
        let vis = comb_from([(2 * n, 2.0 * nu0)]);
        let pairs = spdc_pairs(&vis, &ir, 2 * n, 1.0);
        assert_eq!(pairs.len(), 41);
        assert!(pairs[0].is_degenerate());
        assert_eq!(pairs[0].signal.m, n);
        for p in &pairs {
            assert_eq!(p.signal.m + p.idler.m, 2 * n);
            assert!(p.energy_mismatch().abs() <= 1.0);
        }
    }

    #[test]
    fn gvd_band_edge() {
        let (n, nu0) = (243, 193.4e12);
        let d = 50e6;
        let ir = gvd_comb(n, 60, nu0, 800e9, d);
        let vis = comb_from([(2 * n, 2.0 * nu0)]);
        let lw = linewidth_hz(nu0, 1e5).unwrap();
        let pairs = spdc_pairs(&vis, &ir, 2 * n, lw);
        // Mismatch of the (N+k, N-k) pair is 2 d k^2; the band ends where it exceeds the linewidth.
        let k_max = ((lw / (2.0 * d)).sqrt()).floor() as i64;
        assert_eq!(pairs.len() as i64, k_max + 1);
        assert_eq!(as_orders(&pairs), brute_force(&vis, &ir, 2 * n, lw));
    }

    #[test]
    fn matches_brute_force_on_random_combs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let size = rng.gen_range(1..=200);
            let start = rng.gen_range(100..300);
            let d = rng.gen_range(-1e8..1e8);
            let jitter = rng.gen_range(0.0..5e8);
            let ir = comb_from((start..start + size).map(|m| {
                let k = (m - start) as f64;
                (m, 190e12 + 700e9 * k + d * k * k + rng.gen_range(-jitter..=jitter))
            }));
            let pump_m = 2 * start + rng.gen_range(0..size);
            let pump_f = ir[0].frequency_hz * 2.0 + 700e9 * (pump_m - 2 * start) as f64;
            let vis = comb_from([(pump_m, pump_f + rng.gen_range(-1e9..1e9))]);
            let tol = rng.gen_range(0.0..3e9);
            let fast = spdc_pairs(&vis, &ir, pump_m, tol);
            assert_eq!(as_orders(&fast), brute_force(&vis, &ir, pump_m, tol));
            for p in &fast {
                assert_eq!(p.signal.m + p.idler.m, p.pump.m);
                assert!(p.energy_mismatch().abs() <= tol);
            }
        }
    }

    #[test]
    fn missing_pump_gives_empty() {
        let ir = gvd_comb(100, 5, 190e12, 1e12, 0.0);
        assert!(spdc_pairs(&[], &ir, 200, 1e9).is_empty());
    }

    #[test]
    fn degenerate_pair_from_ring_combs() {
        // Visible mode of order 2N aligned with IR mode N: n_vis = n_ir at half the wavelength.
        let ring = constant_ring(30.0);
        let ir = resonance_comb(&ring, (1500.0, 1600.0)).unwrap();
        let vis = resonance_comb(&ring, (750.0, 800.0)).unwrap();
        let n = 243;
        let lw = linewidth_hz(ir[0].frequency_hz, 1e5).unwrap();
        let pairs = spdc_pairs(&vis, &ir, 2 * n, lw);
        assert!(pairs.iter().any(|p| p.is_degenerate() && p.signal.m == n));
    }

    #[test]
    fn doubling_radius_doubles_density() {
        let band = (1500.0, 1600.0);
        let a = resonance_comb(&constant_ring(30.0), band).unwrap().len() as i64;
        let b = resonance_comb(&constant_ring(60.0), band).unwrap().len() as i64;
        assert!((b - 2 * a).abs() <= 1, "{a} -> {b}");
    }

    fn pair(s: i64, i: i64) -> ModePair {
        ModePair {
            pump: ModeRef { m: s + i, frequency_hz: (s + i) as f64 },
            signal: ModeRef { m: s, frequency_hz: s as f64 },
            idler: ModeRef { m: i, frequency_hz: i as f64 },
        }
    }

    #[test]
    fn pair_flux_scalings() {
        let pairs = [pair(10, 10), pair(11, 9), pair(12, 8)];
        let q: BTreeMap<i64, f64> = (8..=12).map(|m| (m, 1e5)).collect();
        let flux = pair_flux_comb(&pairs, &q, 5.8e6, 1e5).unwrap();
        assert_eq!(flux[1].rate_hz, flux[2].rate_hz);
        // Degenerate vs non-degenerate at equal Q against the measured 3.0 : 5.8 MHz/mW.
        let ratio = flux[0].rate_hz / flux[1].rate_hz;
        assert!((ratio - 3.0 / 5.8).abs() / (3.0 / 5.8) < 0.1);

        let mut halved = q.clone();
        halved.insert(12, 0.5e5);
        let h = pair_flux_comb(&pairs, &halved, 5.8e6, 1e5).unwrap();
        assert_eq!(h[2].rate_hz, 0.5 * flux[2].rate_hz);
        assert_eq!(h[1].rate_hz, flux[1].rate_hz);
    }
}
