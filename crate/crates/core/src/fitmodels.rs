//! Analytic second-order correlation models and their least-squares fits.
//!
//! The pair-correlation peak is a two-sided exponential `exp(-|tau| / tau_c)`
//! convolved with a Gaussian of width `tau_w` that lumps detector jitter and
//! bin width together. Writing `p(tau)` for the unit-area smeared kernel,
//!
//! * cross-correlation of non-degenerate pairs: `g2 = 1 + p(tau) / R`
//! * self-correlation of degenerate pairs behind a 50/50 splitter: `g2 = 1 + p(tau) / (2 R)`
//! * thermal marginal: `g2 = 1 + B * 2 tau_c * p(tau)`, with `B = g2(0) - 1` before smearing.
//!
//! The closed form of `p` multiplies `exp(tau_w^2 / 2 tau_c^2)` by erfc tails
//! times `exp(+-tau / tau_c)`; both factors are folded into a scaled erfc so
//! nothing overflows when `|tau|` or `tau_w / tau_c` is large.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{non_negative, positive, Error, Result};
use crate::special::{erfc, erfcx};
use crate::tcspc::G2Curve;

const MAX_ITERATIONS: usize = 200;
const STEP_TOLERANCE: f64 = 1e-8;
/// Lower bound on a fitted coherence time, as a fraction of the bin width.
const COLLAPSE_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    /// Degenerate pairs split 50/50 onto two detectors.
    SelfDegenerate,
    /// Signal and idler on separate detectors.
    CrossNondegenerate,
}

impl CorrelationKind {
    /// Weight of the smeared kernel relative to `1 / R`.
    fn kernel_weight(self) -> f64 {
        match self {
            CorrelationKind::SelfDegenerate => 0.5,
            CorrelationKind::CrossNondegenerate => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2ModelParams {
    /// Pair generation rate, Hz.
    pub pair_rate: f64,
    /// Coherence time, seconds.
    pub coherence_time: f64,
    /// Gaussian smearing width `tau_w`, seconds. Zero gives the unsmeared peak.
    pub smearing: f64,
    pub kind: CorrelationKind,
}

impl G2ModelParams {
    pub fn validate(&self) -> Result<()> {
        positive("pair_rate", self.pair_rate)?;
        positive("coherence_time", self.coherence_time)?;
        non_negative("smearing", self.smearing)?;
        Ok(())
    }

    /// Prefactor of `exp(tau_w^2/2tau_c^2) [f+ + f-]`: `1/(8 R tau_c)` for
    /// degenerate self-correlation, `1/(4 R tau_c)` for cross-correlation.
    pub fn amplitude(&self) -> f64 {
        self.kind.kernel_weight() / (4.0 * self.pair_rate * self.coherence_time)
    }

    pub fn bandwidth(&self) -> f64 {
        bandwidth(self.coherence_time)
    }
}

/// Photon bandwidth `1 / (2 pi tau_c)` in Hz.
pub fn bandwidth(coherence_time: f64) -> f64 {
    1.0 / (2.0 * PI * coherence_time)
}

pub fn coherence_time_from_bandwidth(bandwidth: f64) -> f64 {
    1.0 / (2.0 * PI * bandwidth)
}

/// Combined Gaussian smearing `sqrt(2 tau_j^2 + (tau_b / 2)^2)` of two detectors
/// with jitter `tau_j` and a histogram of bin width `tau_b`.
pub fn tau_w(jitter_sigma: f64, bin_width: f64) -> Result<f64> {
    non_negative("jitter_sigma", jitter_sigma)?;
    non_negative("bin_width", bin_width)?;
    Ok((2.0 * jitter_sigma * jitter_sigma + 0.25 * bin_width * bin_width).sqrt())
}

/// `erfc(x) * exp(tau / tau_c + tau_w^2 / 2 tau_c^2)` evaluated without overflow,
/// where `x = (tau + tau_w^2 / tau_c) / (sqrt 2 tau_w)`. The minus branch is the
/// same with `tau -> -tau`.
fn tail(tau: f64, tc: f64, tw: f64) -> f64 {
    let x = (tau + tw * tw / tc) / (SQRT_2 * tw);
    if x >= 0.0 {
        erfcx(x) * (-(tau * tau) / (2.0 * tw * tw)).exp()
    } else {
        erfc(x) * (tau / tc + tw * tw / (2.0 * tc * tc)).exp()
    }
}

/// Unit-area two-sided exponential of scale `tc` convolved with a zero-mean
/// Gaussian of standard deviation `tw`.
pub fn smeared_kernel(tau: f64, tc: f64, tw: f64) -> f64 {
    if tw == 0.0 {
        return (-tau.abs() / tc).exp() / (2.0 * tc);
    }
    (tail(tau, tc, tw) + tail(-tau, tc, tw)) / (4.0 * tc)
}

/// Kernel value and its derivative with respect to `tc`.
fn smeared_kernel_dtc(tau: f64, tc: f64, tw: f64) -> (f64, f64) {
    if tw == 0.0 {
        let p = (-tau.abs() / tc).exp() / (2.0 * tc);
        return (p, p * (tau.abs() / (tc * tc) - 1.0 / tc));
    }
    let tp = tail(tau, tc, tw);
    let tm = tail(-tau, tc, tw);
    let p = (tp + tm) / (4.0 * tc);
    let gauss = (2.0 / PI).sqrt() * tw / (tc * tc) * (-(tau * tau) / (2.0 * tw * tw)).exp();
    let a = tw * tw / (tc * tc * tc);
    let b = tau / (tc * tc);
    let dtp = gauss - tp * (b + a);
    let dtm = gauss + tm * (b - a);
    (p, -p / tc + (dtp + dtm) / (4.0 * tc))
}

/// Second-order correlation at `delay` for the given pair model.
pub fn g2_model(delay: f64, p: &G2ModelParams) -> f64 {
    1.0 + p.kind.kernel_weight() / p.pair_rate * smeared_kernel(delay, p.coherence_time, p.smearing)
}

/// Unsmeared degenerate self-correlation `1 + exp(-|tau|/tau_c) / (4 R tau_c)`.
pub fn g2_self_ideal(delay: f64, pair_rate: f64, coherence_time: f64) -> f64 {
    1.0 + (-delay.abs() / coherence_time).exp() / (4.0 * pair_rate * coherence_time)
}

/// Thermal bunching model `1 + bunching * exp(-|tau|/tau_c)` smeared by `smearing`.
pub fn g2_thermal_model(delay: f64, bunching: f64, coherence_time: f64, smearing: f64) -> f64 {
    1.0 + bunching * 2.0 * coherence_time * smeared_kernel(delay, coherence_time, smearing)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Poisson maximum likelihood on the underlying counts (damped Fisher
    /// scoring on the deviance). Observed-count weights would bias sparse
    /// histograms toward low peaks.
    #[default]
    Poisson,
    Unweighted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub weighting: Weighting,
    pub max_iterations: usize,
    pub step_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            weighting: Weighting::Poisson,
            max_iterations: MAX_ITERATIONS,
            step_tolerance: STEP_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Fit {
    pub params: G2ModelParams,
    pub pair_rate_error: f64,
    pub coherence_time_error: f64,
    /// `sqrt(chi2 / dof)`.
    pub residual_norm: f64,
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
    pub bandwidth: f64,
    pub bandwidth_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BunchingFit {
    /// Unsmeared zero-delay value `1 + B`.
    pub g2_zero: f64,
    pub g2_zero_error: f64,
    pub coherence_time: f64,
    pub coherence_time_error: f64,
    pub smearing: f64,
    pub residual_norm: f64,
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
}

/// Two-parameter peak model in log parameters `(ln amplitude, ln tau_c)`.
trait PeakModel {
    /// Returns `g2` and its gradient with respect to the log parameters.
    fn eval(&self, tau: f64, theta: [f64; 2]) -> (f64, [f64; 2]);
}

struct PairPeak {
    weight: f64,
    smearing: f64,
    /// Coherence times below this are outside the model's domain.
    min_coherence_time: f64,
}

impl PeakModel for PairPeak {
    fn eval(&self, tau: f64, theta: [f64; 2]) -> (f64, [f64; 2]) {
        let (r, tc) = (theta[0].exp(), theta[1].exp());
        if tc < self.min_coherence_time {
            return (f64::NAN, [f64::NAN; 2]);
        }
        let (p, dp) = smeared_kernel_dtc(tau, tc, self.smearing);
        let s = self.weight / r;
        (1.0 + s * p, [-s * p, s * tc * dp])
    }
}

struct ThermalPeak {
    smearing: f64,
}

impl PeakModel for ThermalPeak {
    fn eval(&self, tau: f64, theta: [f64; 2]) -> (f64, [f64; 2]) {
        let (b, tc) = (theta[0].exp(), theta[1].exp());
        let (p, dp) = smeared_kernel_dtc(tau, tc, self.smearing);
        let excess = 2.0 * b * tc * p;
        (1.0 + excess, [excess, 2.0 * b * tc * (p + tc * dp)])
    }
}

struct Solution {
    theta: [f64; 2],
    covariance: [[f64; 2]; 2],
    chi2: f64,
    dof: usize,
    iterations: usize,
}

/// Objective value, Fisher (Gauss-Newton) matrix and the descent vector
/// `J^T W r` at one parameter point.
type Linearization = (f64, [[f64; 2]; 2], [f64; 2]);

/// Accumulates `J^T W J` and `J^T W r` for residuals `y - g` with standard
/// deviations from `sigma(i, g)`.
fn normal_equations<M: PeakModel>(
    model: &M,
    x: &[f64],
    y: &[f64],
    theta: [f64; 2],
    sigma: impl Fn(usize, f64) -> f64,
) -> ([[f64; 2]; 2], [f64; 2], f64) {
    let mut jtj = [[0.0; 2]; 2];
    let mut jtr = [0.0; 2];
    let mut pearson = 0.0;
    for (i, (&t, &v)) in x.iter().zip(y).enumerate() {
        let (g, grad) = model.eval(t, theta);
        let s = sigma(i, g);
        let r = (v - g) / s;
        let j = [grad[0] / s, grad[1] / s];
        pearson += r * r;
        for a in 0..2 {
            jtr[a] += j[a] * r;
            for b in 0..2 {
                jtj[a][b] += j[a] * j[b];
            }
        }
    }
    (jtj, jtr, pearson)
}

/// Weighted sum of squares with fixed per-bin standard deviations.
fn least_squares<M: PeakModel>(model: &M, x: &[f64], y: &[f64], sigma: &[f64], theta: [f64; 2]) -> Linearization {
    let (jtj, jtr, chi2) = normal_equations(model, x, y, theta, |i, _| sigma[i]);
    (chi2, jtj, jtr)
}

/// Poisson deviance of counts `k_i y_i` against means `k_i g_i`. The normal
/// equations use the model's own variance `g_i / k_i`, so damped steps on them
/// are Fisher scoring toward the maximum-likelihood point.
fn poisson_deviance<M: PeakModel>(model: &M, x: &[f64], y: &[f64], k: &[f64], theta: [f64; 2]) -> Linearization {
    let mut deviance = 0.0;
    for ((&t, &v), &k) in x.iter().zip(y).zip(k) {
        let mu = k * model.eval(t, theta).0;
        let c = k * v;
        if !(mu > 0.0) {
            return (f64::INFINITY, [[0.0; 2]; 2], [0.0; 2]);
        }
        deviance += 2.0 * (mu - c + if c > 0.0 { c * (c / mu).ln() } else { 0.0 });
    }
    let (jtj, jtr, _) = normal_equations(model, x, y, theta, |i, g| (g / k[i]).sqrt());
    (deviance, jtj, jtr)
}

fn solve2(m: [[f64; 2]; 2], rhs: [f64; 2]) -> Option<[f64; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if !(det.abs() > 0.0) || !det.is_finite() {
        return None;
    }
    Some([
        (rhs[0] * m[1][1] - rhs[1] * m[0][1]) / det,
        (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det,
    ])
}

fn invert2(m: [[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if !(det.abs() > 0.0) || !det.is_finite() {
        return None;
    }
    Some([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]])
}

/// Levenberg-Marquardt over two log parameters, accepting a step only when it
/// does not increase the objective.
fn levenberg_marquardt(
    objective: impl Fn([f64; 2]) -> Linearization,
    start: [f64; 2],
    opts: &FitOptions,
) -> Result<([f64; 2], [[f64; 2]; 2], usize)> {
    let mut theta = start;
    let (mut value, mut jtj, mut jtr) = objective(theta);
    if !value.is_finite() {
        return Err(Error::Numeric("model is not finite at the initial parameters".into()));
    }
    let mut lambda = 1e-3;
    let mut trace = vec![value];
    for iteration in 1..=opts.max_iterations {
        let damped = [
            [jtj[0][0] * (1.0 + lambda), jtj[0][1]],
            [jtj[1][0], jtj[1][1] * (1.0 + lambda)],
        ];
        let Some(step) = solve2(damped, jtr) else {
            return Err(Error::Numeric(
                "normal matrix is singular; parameters are not identifiable from this curve".into(),
            ));
        };
        let size = step[0].abs().max(step[1].abs());
        let trial = [theta[0] + step[0], theta[1] + step[1]];
        let (v2, m2, r2) = objective(trial);
        if v2.is_finite() && v2 <= value {
            theta = trial;
            value = v2;
            jtj = m2;
            jtr = r2;
            lambda = (lambda * 0.1).max(1e-12);
            trace.push(value);
        } else {
            lambda *= 10.0;
        }
        if size < opts.step_tolerance {
            return Ok((theta, jtj, iteration));
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iterations,
        last_chi2: value,
        trace,
    })
}

fn solution(theta: [f64; 2], jtj: [[f64; 2]; 2], chi2: f64, n: usize, iterations: usize) -> Result<Solution> {
    let covariance = invert2(jtj)
        .ok_or_else(|| Error::Numeric("singular covariance at the optimum".into()))?;
    Ok(Solution {
        theta,
        covariance,
        chi2,
        dof: n.saturating_sub(2),
        iterations,
    })
}

/// Fit under `opts.weighting`. Poisson fits maximize the Poisson likelihood of
/// the underlying counts, recovered from each bin's value and error; the
/// reported chi-square is Pearson's, with the fitted model's variances.
fn weighted_fit<M: PeakModel>(model: &M, curve: &G2Curve, start: [f64; 2], opts: &FitOptions) -> Result<Solution> {
    let (x, y) = (&curve.delays, &curve.values);
    let sigma = sigmas(curve, opts.weighting)?;
    match opts.weighting {
        Weighting::Unweighted => {
            let (theta, jtj, iterations) =
                levenberg_marquardt(|t| least_squares(model, x, y, &sigma, t), start, opts)?;
            let chi2 = least_squares(model, x, y, &sigma, theta).0;
            solution(theta, jtj, chi2, x.len(), iterations)
        }
        Weighting::Poisson => {
            // Counts per unit g2 in each bin; empty bins carry an error of one count.
            let k: Vec<f64> = y
                .iter()
                .zip(&sigma)
                .map(|(&v, &e)| if v > 0.0 { v / (e * e) } else { 1.0 / e })
                .collect();
            let (theta, jtj, iterations) =
                levenberg_marquardt(|t| poisson_deviance(model, x, y, &k, t), start, opts)?;
            let (_, _, chi2) = normal_equations(model, x, y, theta, |i, g| (g / k[i]).sqrt());
            solution(theta, jtj, chi2, x.len(), iterations)
        }
    }
}

fn sigmas(curve: &G2Curve, weighting: Weighting) -> Result<Vec<f64>> {
    match weighting {
        Weighting::Unweighted => Ok(vec![1.0; curve.len()]),
        Weighting::Poisson => {
            if curve.errors.len() != curve.len() || curve.errors.iter().any(|e| !(*e > 0.0)) {
                return Err(Error::ContractViolation(
                    "Poisson weighting needs a positive error for every bin".into(),
                ));
            }
            Ok(curve.errors.clone())
        }
    }
}

fn check_span(curve: &G2Curve, coherence_time: f64) -> Result<()> {
    if curve.len() < 10 || curve.delays.len() != curve.values.len() {
        return Err(Error::ContractViolation(format!(
            "need at least 10 bins to fit, got {}",
            curve.len()
        )));
    }
    let lo = curve.delays.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = curve.delays.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let reach = 5.0 * coherence_time;
    if !(lo < -reach && hi > reach) {
        return Err(Error::ContractViolation(format!(
            "curve spans [{lo:e}, {hi:e}] s, must extend beyond +-5 tau_c = {reach:e} s"
        )));
    }
    Ok(())
}

/// Scales log-space covariance into parameter errors. Unweighted fits rescale
/// by the reduced chi-square since the noise level is unknown.
fn errors(sol: &Solution, weighting: Weighting) -> ([f64; 2], [f64; 2], f64) {
    let values = [sol.theta[0].exp(), sol.theta[1].exp()];
    let scale = match weighting {
        Weighting::Poisson => 1.0,
        Weighting::Unweighted if sol.dof > 0 => sol.chi2 / sol.dof as f64,
        Weighting::Unweighted => 1.0,
    };
    let errs = [
        values[0] * (sol.covariance[0][0] * scale).max(0.0).sqrt(),
        values[1] * (sol.covariance[1][1] * scale).max(0.0).sqrt(),
    ];
    let norm = if sol.dof > 0 {
        (sol.chi2 / sol.dof as f64).sqrt()
    } else {
        0.0
    };
    (values, errs, norm)
}

/// Fits pair rate and coherence time with the smearing width held at `init.smearing`.
pub fn fit_g2(curve: &G2Curve, kind: CorrelationKind, init: &G2ModelParams) -> Result<G2Fit> {
    fit_g2_with(curve, kind, init, &FitOptions::default())
}

pub fn fit_g2_with(curve: &G2Curve, kind: CorrelationKind, init: &G2ModelParams, opts: &FitOptions) -> Result<G2Fit> {
    init.validate()?;
    check_span(curve, init.coherence_time)?;
    // A peak narrower than a thousandth of a bin is unresolvable; the fit
    // reaching that floor means the data are sharper than the smeared model.
    let floor = COLLAPSE_FRACTION * bin_spacing(curve);
    let model = PairPeak {
        weight: kind.kernel_weight(),
        smearing: init.smearing,
        min_coherence_time: floor,
    };
    let start = [init.pair_rate.ln(), init.coherence_time.ln()];
    let sol = weighted_fit(&model, curve, start, opts)?;
    let ([rate, tc], [rate_err, tc_err], residual_norm) = errors(&sol, opts.weighting);
    if tc < 2.0 * floor {
        return Err(Error::Numeric(format!(
            "coherence time collapsed to {tc:.3e} s: the measured peak is narrower than the smearing \
             width {:.3e} s allows; use finer bins or fix the coherence time",
            init.smearing
        )));
    }
    let bw = bandwidth(tc);
    Ok(G2Fit {
        params: G2ModelParams {
            pair_rate: rate,
            coherence_time: tc,
            smearing: init.smearing,
            kind,
        },
        pair_rate_error: rate_err,
        coherence_time_error: tc_err,
        residual_norm,
        chi2: sol.chi2,
        dof: sol.dof,
        iterations: sol.iterations,
        bandwidth: bw,
        bandwidth_error: bw * tc_err / tc,
    })
}

/// Fits the thermal bunching amplitude and coherence time at fixed smearing.
pub fn fit_bunching(curve: &G2Curve, smearing: f64, init_coherence_time: f64) -> Result<BunchingFit> {
    fit_bunching_with(curve, smearing, init_coherence_time, &FitOptions::default())
}

pub fn fit_bunching_with(
    curve: &G2Curve,
    smearing: f64,
    init_coherence_time: f64,
    opts: &FitOptions,
) -> Result<BunchingFit> {
    non_negative("smearing", smearing)?;
    positive("coherence_time", init_coherence_time)?;
    check_span(curve, init_coherence_time)?;
    let peak = curve.values.iter().copied().fold(f64::NEG_INFINITY, f64::max) - 1.0;
    let start = [peak.max(1e-3).ln(), init_coherence_time.ln()];
    let model = ThermalPeak { smearing };
    let sol = weighted_fit(&model, curve, start, opts)?;
    let ([b, tc], [b_err, tc_err], residual_norm) = errors(&sol, opts.weighting);
    Ok(BunchingFit {
        g2_zero: 1.0 + b,
        g2_zero_error: b_err,
        coherence_time: tc,
        coherence_time_error: tc_err,
        smearing,
        residual_norm,
        chi2: sol.chi2,
        dof: sol.dof,
        iterations: sol.iterations,
    })
}

/// Moment-based starting point for [`fit_g2`]: peak area gives the pair rate
/// and peak variance (less the smearing) gives the coherence time.
pub fn initial_guess(curve: &G2Curve, kind: CorrelationKind, smearing: f64) -> Result<G2ModelParams> {
    let width = peak_width(curve)?;
    let bin = bin_spacing(curve);
    let region = 10.0 * width;
    let (mut area, mut second) = (0.0, 0.0);
    for (&t, &v) in curve.delays.iter().zip(&curve.values) {
        if t.abs() <= region {
            area += (v - 1.0) * bin;
            second += (v - 1.0) * t * t * bin;
        }
    }
    if !(area > 0.0) {
        return Err(Error::DegenerateInput("no positive correlation peak".into()));
    }
    let variance = second / area;
    let tc = ((variance - smearing * smearing) / 2.0)
        .max(0.25 * width * width)
        .sqrt();
    Ok(G2ModelParams {
        pair_rate: kind.kernel_weight() / area,
        coherence_time: tc,
        smearing,
        kind,
    })
}

fn bin_spacing(curve: &G2Curve) -> f64 {
    curve
        .delays
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(f64::INFINITY, f64::min)
}

/// Distance from the peak to where the excess first drops below `1/e` of its maximum.
pub fn peak_width(curve: &G2Curve) -> Result<f64> {
    if curve.len() < 3 {
        return Err(Error::DegenerateInput("curve too short".into()));
    }
    let (imax, vmax) = curve
        .values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let excess = vmax - 1.0;
    if !(excess > 0.0) {
        return Err(Error::DegenerateInput("no correlation peak above 1".into()));
    }
    let level = 1.0 + excess / std::f64::consts::E;
    let right = (imax..curve.len()).find(|&i| curve.values[i] < level).unwrap_or(curve.len() - 1);
    let left = (0..=imax).rev().find(|&i| curve.values[i] < level).unwrap_or(0);
    let w = 0.5 * (curve.delays[right] - curve.delays[left]);
    Ok(w.max(bin_spacing(curve)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Purity {
    pub purity: f64,
    pub schmidt_number: f64,
    /// Set when the measured purity exceeds one (possible under noise).
    pub over_unity: bool,
}

/// Heralded purity `P = g2(0) - 1` and Schmidt number `K = 1 / P` from a marginal `g2(0)`.
pub fn purity(g2_zero: f64) -> Result<Purity> {
    if !g2_zero.is_finite() || g2_zero < 1.0 {
        return Err(Error::ParameterDomain {
            name: "g2_zero",
            value: g2_zero,
            reason: "marginal g2(0) must be at least 1",
        });
    }
    let p = g2_zero - 1.0;
    Ok(Purity {
        purity: p,
        schmidt_number: 1.0 / p,
        over_unity: p > 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(kind: CorrelationKind, r: f64, tc: f64, tw: f64) -> G2ModelParams {
        G2ModelParams {
            pair_rate: r,
            coherence_time: tc,
            smearing: tw,
            kind,
        }
    }

    fn check_gradient<M: PeakModel>(model: &M, theta: [f64; 2], tau: f64) {
        let (_, grad) = model.eval(tau, theta);
        for k in 0..2 {
            let h = 1e-5;
            let (mut up, mut down) = (theta, theta);
            up[k] += h;
            down[k] -= h;
            let fd = (model.eval(tau, up).0 - model.eval(tau, down).0) / (2.0 * h);
            let scale = grad[k].abs().max(1e-12);
            assert!(
                (grad[k] - fd).abs() / scale < 1e-6,
                "parameter {k} at tau {tau:e}: analytic {} vs numeric {fd}",
                grad[k]
            );
        }
    }

    #[test]
    fn analytic_jacobian_matches_central_differences() {
        let tc: f64 = 144.7e-12;
        for &(weight, tw) in &[(1.0, 77.6e-12), (0.5, 30e-12), (1.0, 0.0), (0.5, 400e-12)] {
            let model = PairPeak {
                weight,
                smearing: tw,
                min_coherence_time: 0.0,
            };
            let theta = [(5.9e6f64).ln(), tc.ln()];
            for i in -20..=20 {
                check_gradient(&model, theta, i as f64 * 0.5 * tc + 1e-13);
            }
        }
        let thermal = ThermalPeak { smearing: 50e-9 };
        for i in -20..=20 {
            check_gradient(&thermal, [0.0, (1e-6f64).ln()], i as f64 * 0.4e-6 + 1e-9);
        }
    }

    #[test]
    fn tau_w_examples() {
        assert_eq!(tau_w(0.0, 0.0).unwrap(), 0.0);
        assert!((tau_w(0.0, 64e-12).unwrap() - 32e-12).abs() < 1e-24);
        // sqrt(2 * 50^2 + 32^2) = sqrt(6024) ps
        let v = tau_w(50e-12, 64e-12).unwrap();
        assert!((v - 77.614_431_69e-12).abs() < 1e-19, "{v}");
        assert!(tau_w(-1e-12, 0.0).is_err());
    }

    #[test]
    fn unsmeared_self_matches_ideal_form() {
        let (r, tc) = (5.9e6, 144.7e-12);
        let p = params(CorrelationKind::SelfDegenerate, r, tc, 0.0);
        for k in -40..=40 {
            let tau = k as f64 * 0.25 * tc;
            let want = g2_self_ideal(tau, r, tc);
            assert!(((g2_model(tau, &p) - want) / want).abs() < 1e-10);
        }
    }

    #[test]
    fn cross_zero_delay_limit() {
        let tc = coherence_time_from_bandwidth(1.1e9);
        let p = params(CorrelationKind::CrossNondegenerate, 11.0e6, tc, 0.0);
        let v = g2_model(0.0, &p);
        assert!((v - (1.0 + 1.0 / (2.0 * 11.0e6 * tc))).abs() < 1e-9);
        assert!((v - 315.1).abs() < 0.1, "{v}");
    }

    #[test]
    fn far_wing_is_one() {
        let tc = 144.7e-12;
        let p = params(CorrelationKind::CrossNondegenerate, 11e6, tc, 75e-12);
        assert!((g2_model(20.0 * tc, &p) - 1.0).abs() < 1e-6);
        assert!((g2_model(-20.0 * tc, &p) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn large_delays_do_not_overflow() {
        let v = g2_model(1e-3, &params(CorrelationKind::CrossNondegenerate, 1e6, 1e-10, 1e-11));
        assert_eq!(v, 1.0);
        let v = smeared_kernel(0.0, 1e-12, 1e-9);
        assert!(v.is_finite() && v > 0.0);
    }

    #[test]
    fn cross_excess_is_twice_self_excess() {
        for &(r, tc, tw) in &[(1e6, 1e-10, 5e-11), (5.9e6, 144.7e-12, 7.5e-11), (2e5, 1e-9, 3e-9)] {
            for k in -30..=30 {
                let tau = k as f64 * 0.3 * tc;
                let c = g2_model(tau, &params(CorrelationKind::CrossNondegenerate, r, tc, tw)) - 1.0;
                let s = g2_model(tau, &params(CorrelationKind::SelfDegenerate, r, tc, tw)) - 1.0;
                assert!((c - 2.0 * s).abs() <= 1e-12 * c.abs());
            }
        }
    }

    #[test]
    fn smearing_limit_is_continuous() {
        let (r, tc) = (5.9e6, 144.7e-12);
        for k in [-3.0, -1.0, -0.1, 0.0, 0.2, 1.0, 4.0] {
            let tau = k * tc;
            let limit = g2_self_ideal(tau, r, tc);
            let mut prev_err = f64::INFINITY;
            for decade in 1..=6 {
                let tw = tc * 10f64.powi(-decade - 1);
                let v = g2_model(tau, &params(CorrelationKind::SelfDegenerate, r, tc, tw));
                let err = ((v - limit) / limit).abs();
                assert!(v.is_finite());
                if tau != 0.0 && decade >= 3 {
                    assert!(err < 1e-6, "tau {tau} tw {tw} err {err}");
                }
                assert!(err <= prev_err * 1.0001 + 1e-15);
                prev_err = err;
            }
        }
    }

    #[test]
    fn purity_examples() {
        let p = purity(2.0).unwrap();
        assert_eq!((p.purity, p.schmidt_number, p.over_unity), (1.0, 1.0, false));
        let p = purity(2.07).unwrap();
        assert!((p.purity - 1.07).abs() < 1e-12);
        assert!((p.schmidt_number - 0.934).abs() < 1e-3);
        assert!(p.over_unity);
        let p = purity(1.5).unwrap();
        assert_eq!((p.purity, p.schmidt_number), (0.5, 2.0));
        assert!(purity(0.9).is_err());
    }

    fn exact_curve(p: &G2ModelParams, bin: f64, half: i64) -> G2Curve {
        let delays: Vec<f64> = (-half..=half).map(|k| k as f64 * bin).collect();
        let values: Vec<f64> = delays.iter().map(|&t| g2_model(t, p)).collect();
        G2Curve {
            errors: values.iter().map(|v| 0.01 * v).collect(),
            delays,
            values,
            accidental_rate: 1.0,
        }
    }

    #[test]
    fn noiseless_fit_recovers_parameters() {
        let truth = params(CorrelationKind::SelfDegenerate, 5.9e6, 144.7e-12, 75e-12);
        let curve = exact_curve(&truth, 20e-12, 150);
        let init = params(CorrelationKind::SelfDegenerate, 3e6, 250e-12, 75e-12);
        let fit = fit_g2(&curve, CorrelationKind::SelfDegenerate, &init).unwrap();
        assert!((fit.params.pair_rate / 5.9e6 - 1.0).abs() < 1e-3);
        assert!((fit.params.coherence_time / 144.7e-12 - 1.0).abs() < 1e-3);
        assert!((fit.bandwidth - bandwidth(fit.params.coherence_time)).abs() < 1e-3);
        assert!(fit.pair_rate_error >= 0.0 && fit.coherence_time_error >= 0.0);
    }

    #[test]
    fn peak_sharper_than_smearing_is_rejected() {
        // An unsmeared 20 ps peak sampled with 500 ps bins, fitted with 260 ps of smearing.
        let truth = params(CorrelationKind::CrossNondegenerate, 3.5e6, 20e-12, 0.0);
        let curve = exact_curve(&truth, 500e-12, 40);
        let init = params(CorrelationKind::CrossNondegenerate, 3e6, 150e-12, 260e-12);
        let err = fit_g2(&curve, CorrelationKind::CrossNondegenerate, &init).unwrap_err();
        assert!(err.to_string().contains("collapsed"), "{err}");
    }

    #[test]
    fn fit_checks_span_and_bins() {
        let truth = params(CorrelationKind::CrossNondegenerate, 1e6, 1e-10, 5e-11);
        let narrow = exact_curve(&truth, 1e-11, 20);
        assert!(matches!(
            fit_g2(&narrow, CorrelationKind::CrossNondegenerate, &truth),
            Err(Error::ContractViolation(_))
        ));
        let tiny = exact_curve(&truth, 1e-9, 3);
        assert!(fit_g2(&tiny, CorrelationKind::CrossNondegenerate, &truth).is_err());
    }

    #[test]
    fn non_convergence_reports_trace() {
        let truth = params(CorrelationKind::CrossNondegenerate, 1e6, 1e-10, 5e-11);
        let curve = exact_curve(&truth, 1e-11, 1000);
        let init = params(CorrelationKind::CrossNondegenerate, 1e8, 1e-9, 5e-11);
        let opts = FitOptions {
            max_iterations: 2,
            ..FitOptions::default()
        };
        match fit_g2_with(&curve, CorrelationKind::CrossNondegenerate, &init, &opts) {
            Err(Error::NonConvergence { iterations, trace, .. }) => {
                assert_eq!(iterations, 2);
                assert!(!trace.is_empty());
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn initial_guess_is_close() {
        let truth = params(CorrelationKind::CrossNondegenerate, 11e6, 144.7e-12, 75e-12);
        let curve = exact_curve(&truth, 25e-12, 200);
        let g = initial_guess(&curve, CorrelationKind::CrossNondegenerate, 75e-12).unwrap();
        assert!((g.pair_rate / 11e6 - 1.0).abs() < 0.05);
        assert!((g.coherence_time / 144.7e-12 - 1.0).abs() < 0.1);
    }

    #[test]
    fn bunching_fit_recovers_thermal_curve() {
        let (tc, tw) = (1e-6, 2.5e-8);
        let delays: Vec<f64> = (-200..=200).map(|k| k as f64 * 5e-8).collect();
        let values: Vec<f64> = delays.iter().map(|&t| g2_thermal_model(t, 1.0, tc, tw)).collect();
        let curve = G2Curve {
            errors: vec![0.01; values.len()],
            delays,
            values,
            accidental_rate: 1.0,
        };
        let fit = fit_bunching(&curve, tw, 0.5e-6).unwrap();
        assert!((fit.g2_zero - 2.0).abs() < 1e-6);
        assert!((fit.coherence_time / tc - 1.0).abs() < 1e-6);
    }
}
