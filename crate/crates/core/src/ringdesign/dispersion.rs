//! Effective-index tables and phase-matching width search.

use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{positive, Error, Result};

/// Target width resolution of the phase-matching search, µm.
const WIDTH_TOLERANCE_UM: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionSample {
    pub width_um: f64,
    pub wavelength_nm: f64,
    pub n_eff: f64,
}

/// Effective index of one waveguide mode sampled on a (width, wavelength) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionTable {
    mode_label: String,
    widths: Vec<f64>,
    wavelengths: Vec<f64>,
    /// Row-major `[width][wavelength]`.
    grid: Vec<f64>,
}

fn sorted_unique(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Index `i` with `xs[i] <= x <= xs[i + 1]` and the fractional position, or
/// `None` outside the range. A single-point axis only matches exactly.
fn locate(xs: &[f64], x: f64) -> Option<(usize, f64)> {
    if xs.len() == 1 {
        return ((x - xs[0]).abs() <= 1e-12 * xs[0].abs().max(1.0)).then_some((0, 0.0));
    }
    let (first, last) = (xs[0], xs[xs.len() - 1]);
    if !(x >= first && x <= last) {
        return None;
    }
    let i = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1) - 1;
    Some((i, (x - xs[i]) / (xs[i + 1] - xs[i])))
}

impl DispersionTable {
    /// Builds a table from samples forming a complete rectangular grid.
    pub fn new(mode_label: impl Into<String>, samples: &[DispersionSample]) -> Result<Self> {
        let mode_label = mode_label.into();
        if samples.is_empty() {
            return Err(Error::Config(format!("dispersion table `{mode_label}` is empty")));
        }
        for s in samples {
            positive("width_um", s.width_um)?;
            positive("wavelength_nm", s.wavelength_nm)?;
            if !(s.n_eff > 1.0) || !s.n_eff.is_finite() {
                return Err(Error::ParameterDomain {
                    name: "n_eff",
                    value: s.n_eff,
                    reason: "effective index must exceed 1",
                });
            }
        }
        let widths = sorted_unique(samples.iter().map(|s| s.width_um));
        let wavelengths = sorted_unique(samples.iter().map(|s| s.wavelength_nm));
        let mut grid = vec![f64::NAN; widths.len() * wavelengths.len()];
        for s in samples {
            let i = widths.partition_point(|&w| w < s.width_um);
            let j = wavelengths.partition_point(|&l| l < s.wavelength_nm);
            grid[i * wavelengths.len() + j] = s.n_eff;
        }
        if grid.iter().any(|v| v.is_nan()) {
            return Err(Error::Config(format!(
                "dispersion table `{mode_label}` is not a rectangular grid ({} widths x {} wavelengths, {} samples)",
                widths.len(),
                wavelengths.len(),
                samples.len()
            )));
        }
        Ok(Self {
            mode_label,
            widths,
            wavelengths,
            grid,
        })
    }

    pub fn mode_label(&self) -> &str {
        &self.mode_label
    }

    pub fn width_range(&self) -> (f64, f64) {
        (self.widths[0], self.widths[self.widths.len() - 1])
    }

    pub fn wavelength_range(&self) -> (f64, f64) {
        (self.wavelengths[0], self.wavelengths[self.wavelengths.len() - 1])
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.grid[i * self.wavelengths.len() + j]
    }

    /// Bilinear interpolation; `None` outside the sampled grid.
    pub fn n_eff(&self, width_um: f64, wavelength_nm: f64) -> Option<f64> {
        let (i, u) = locate(&self.widths, width_um)?;
        let (j, v) = locate(&self.wavelengths, wavelength_nm)?;
        let i1 = (i + 1).min(self.widths.len() - 1);
        let j1 = (j + 1).min(self.wavelengths.len() - 1);
        let lo = self.at(i, j) * (1.0 - v) + self.at(i, j1) * v;
        let hi = self.at(i1, j) * (1.0 - v) + self.at(i1, j1) * v;
        Some(lo * (1.0 - u) + hi * u)
    }

    /// Wavelength dependence at a fixed width.
    pub fn at_width(&self, width_um: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self
            .wavelengths
            .iter()
            .map(|&l| self.n_eff(width_um, l))
            .collect::<Option<Vec<_>>>()?;
        Some((self.wavelengths.clone(), n))
    }

    pub fn samples(&self) -> Vec<DispersionSample> {
        let mut out = Vec::with_capacity(self.grid.len());
        for (i, &w) in self.widths.iter().enumerate() {
            for (j, &l) in self.wavelengths.iter().enumerate() {
                out.push(DispersionSample {
                    width_um: w,
                    wavelength_nm: l,
                    n_eff: self.at(i, j),
                });
            }
        }
        out
    }

    /// CSV with a `# mode: <label>` header and columns `width_um,wavelength_nm,n_eff`.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# mode: {}", self.mode_label);
        let _ = writeln!(s, "width_um,wavelength_nm,n_eff");
        for d in self.samples() {
            let _ = writeln!(s, "{},{},{}", d.width_um, d.wavelength_nm, d.n_eff);
        }
        s
    }

    pub fn from_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut label = String::new();
        let mut samples = Vec::new();
        let mut seen_header = false;
        for (idx, line) in input.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some(("mode", v)) = meta.split_once(':').map(|(k, v)| (k.trim(), v.trim())) {
                    label = v.to_string();
                }
                continue;
            }
            if !seen_header {
                seen_header = true;
                if line.starts_with(|c: char| c.is_ascii_alphabetic()) {
                    continue;
                }
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected 3 fields, found {}", fields.len()),
                });
            }
            let parse = |f: &str| {
                f.parse::<f64>().map_err(|e| Error::Parse {
                    line: lineno,
                    message: format!("`{f}`: {e}"),
                })
            };
            samples.push(DispersionSample {
                width_um: parse(fields[0])?,
                wavelength_nm: parse(fields[1])?,
                n_eff: parse(fields[2])?,
            });
        }
        Self::new(label, &samples)
    }
}

/// Waveguide width at which the visible pump mode and the IR mode at twice the
/// wavelength have equal effective index, found by bisection on the
/// interpolated index difference.
pub fn phase_match_width(vis: &DispersionTable, ir: &DispersionTable, vis_nm: f64, ir_nm: f64) -> Result<f64> {
    positive("visible wavelength", vis_nm)?;
    positive("IR wavelength", ir_nm)?;
    if ((ir_nm - 2.0 * vis_nm) / ir_nm).abs() > 1e-3 {
        return Err(Error::ParameterDomain {
            name: "IR wavelength",
            value: ir_nm,
            reason: "must be twice the visible wavelength within 0.1%",
        });
    }
    let (v0, v1) = vis.width_range();
    let (i0, i1) = ir.width_range();
    let (mut lo, mut hi) = (v0.max(i0), v1.min(i1));
    if !(lo < hi) {
        return Err(Error::Config("dispersion tables share no width range".into()));
    }
    let delta = |w: f64| -> Result<f64> {
        let nv = vis.n_eff(w, vis_nm);
        let ni = ir.n_eff(w, ir_nm);
        match (nv, ni) {
            (Some(a), Some(b)) => Ok(a - b),
            _ => Err(Error::Config(format!(
                "dispersion tables do not cover width {w} um at {vis_nm} / {ir_nm} nm"
            ))),
        }
    };
    let (mut dlo, dhi) = (delta(lo)?, delta(hi)?);
    if dlo == 0.0 {
        return Ok(lo);
    }
    if dhi == 0.0 {
        return Ok(hi);
    }
    if dlo.signum() == dhi.signum() {
        return Err(Error::NoCrossing {
            dn_low: dlo,
            dn_high: dhi,
        });
    }
    while hi - lo > WIDTH_TOLERANCE_UM {
        let mid = 0.5 * (lo + hi);
        let dm = delta(mid)?;
        if dm == 0.0 {
            return Ok(mid);
        }
        if dm.signum() == dlo.signum() {
            lo = mid;
            dlo = dm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
