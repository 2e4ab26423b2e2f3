//! Spectrum container, baseline removal, Lorentzian multi-peak fitting and
//! σ/π classification.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{EitError, Result};
use crate::liouville::SusceptibilitySample;
use crate::lm::{levenberg_marquardt, LeastSquares, LmOptions};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumSource {
    Simulated,
    Imported,
}

/// What the `absorption` column holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    /// Raw absorption, transparency features are dips.
    Absorption,
    /// Background minus absorption, transparency features are positive peaks.
    TwoPhoton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryEcho {
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub beta_l: f64,
    pub beta_t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumPoint<T> {
    pub delta_p: T,
    pub absorption: T,
    pub transmission: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<T> {
    pub points: Vec<SpectrumPoint<T>>,
    pub source: SpectrumSource,
    pub kind: SignalKind,
    pub geometry: Option<GeometryEcho>,
}

/// Transmission `exp(−α·a/a_max)` of an absorption trace, normalized so the
/// strongest absorption transmits `exp(−α)`. A trace without absorption
/// transmits fully.
pub fn transmission<T: Real>(absorption: &[T], alpha: T) -> Vec<T> {
    let max = absorption.iter().fold(T::zero(), |m, &a| m.max(a));
    absorption
        .iter()
        .map(|&a| {
            if max > T::zero() {
                (-alpha * a / max).exp()
            } else {
                T::one()
            }
        })
        .collect()
}

impl<T: Real> Spectrum<T> {
    pub fn new(points: Vec<SpectrumPoint<T>>, source: SpectrumSource, kind: SignalKind) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !(p.delta_p.is_finite() && p.absorption.is_finite() && p.transmission.is_finite()) {
                return Err(EitError::invalid(format!("spectrum point {i} is not finite")));
            }
        }
        if points.windows(2).any(|w| !(w[1].delta_p > w[0].delta_p)) {
            return Err(EitError::invalid("spectrum detunings must be strictly increasing"));
        }
        Ok(Self {
            points,
            source,
            kind,
            geometry: None,
        })
    }

    /// Absorption `Im χ` with transmission normalized at `exp(−ln 2)`.
    pub fn from_samples(samples: &[SusceptibilitySample<T>]) -> Result<Self> {
        let abs: Vec<T> = samples.iter().map(|s| s.chi.im).collect();
        let x: Vec<T> = samples.iter().map(|s| s.delta_p).collect();
        Self::from_absorption(&x, &abs, SpectrumSource::Simulated)
    }

    pub fn from_absorption(delta_p: &[T], absorption: &[T], source: SpectrumSource) -> Result<Self> {
        if delta_p.len() != absorption.len() {
            return Err(EitError::invalid("detuning and absorption lengths differ"));
        }
        let t = transmission(absorption, T::LN_2());
        let points = delta_p
            .iter()
            .zip(absorption)
            .zip(t)
            .map(|((&d, &a), t)| SpectrumPoint {
                delta_p: d,
                absorption: a,
                transmission: t,
            })
            .collect();
        Self::new(points, source, SignalKind::Absorption)
    }

    pub fn with_geometry(mut self, g: GeometryEcho) -> Self {
        self.geometry = Some(g);
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn detunings(&self) -> Vec<T> {
        self.points.iter().map(|p| p.delta_p).collect()
    }

    pub fn absorption(&self) -> Vec<T> {
        self.points.iter().map(|p| p.absorption).collect()
    }

    /// Writes `delta_p_mhz,im_chi,transmission` with shortest round-trip
    /// float formatting.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| EitError::invalid(format!("csv write: {e}"));
        out.write_record(["delta_p_mhz", "im_chi", "transmission"])
            .map_err(io)?;
        for p in &self.points {
            out.write_record([
                p.delta_p.to_string(),
                p.absorption.to_string(),
                p.transmission.to_string(),
            ])
            .map_err(io)?;
        }
        out.flush().map_err(|e| EitError::invalid(format!("csv write: {e}")))?;
        Ok(())
    }
}

/// Meaning of the `signal` column of an imported file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalConvention {
    #[default]
    Absorption,
    /// Converted with `−ln T`; values must be positive.
    Transmission,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImportOptions<T> {
    /// MHz per sample. When set the detuning column is read as a sample
    /// index and rescaled.
    pub calibration: Option<T>,
    pub convention: SignalConvention,
}

/// Reads `delta_p_mhz,signal` or a previously written
/// `delta_p_mhz,im_chi,transmission` file. `#` lines are ignored.
pub fn read_csv<T: Real, R: Read>(r: R, opts: &ImportOptions<T>) -> Result<Spectrum<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r);
    let headers = rdr.headers().map_err(|e| EitError::Import(e.to_string()))?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let native = match names.as_slice() {
        ["delta_p_mhz", "signal"] => false,
        ["delta_p_mhz", "im_chi", "transmission"] => true,
        _ => {
            return Err(EitError::Import(format!(
                "expected header `delta_p_mhz,signal` or `delta_p_mhz,im_chi,transmission`, found `{}`",
                names.join(",")
            )))
        }
    };
    let mut x = Vec::new();
    let mut a = Vec::new();
    let mut t = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| EitError::Import(e.to_string()))?;
        let field = |k: usize| -> Result<T> {
            let s = rec
                .get(k)
                .ok_or_else(|| EitError::Import(format!("record {} is short", line + 1)))?;
            let v: f64 = s
                .parse()
                .map_err(|_| EitError::Import(format!("record {}: `{s}` is not a number", line + 1)))?;
            if !v.is_finite() {
                return Err(EitError::Import(format!("record {}: value is not finite", line + 1)));
            }
            Ok(T::lit(v))
        };
        let d = field(0)?;
        x.push(match opts.calibration {
            Some(c) => d * c,
            None => d,
        });
        if native {
            a.push(field(1)?);
            t.push(field(2)?);
        } else {
            let s = field(1)?;
            a.push(match opts.convention {
                SignalConvention::Absorption => s,
                SignalConvention::Transmission => {
                    if !(s > T::zero()) {
                        return Err(EitError::Import(format!(
                            "record {}: transmission must be positive",
                            line + 1
                        )));
                    }
                    -s.ln()
                }
            });
        }
    }
    if let Some(c) = opts.calibration {
        if !(c.is_finite() && c > T::zero()) {
            return Err(EitError::Import("calibration must be positive".into()));
        }
    }
    let map = |e: EitError| EitError::Import(e.to_string());
    if native {
        let points = x
            .into_iter()
            .zip(a)
            .zip(t)
            .map(|((d, a), t)| SpectrumPoint {
                delta_p: d,
                absorption: a,
                transmission: t,
            })
            .collect();
        Spectrum::new(points, SpectrumSource::Imported, SignalKind::Absorption).map_err(map)
    } else {
        Spectrum::from_absorption(&x, &a, SpectrumSource::Imported).map_err(map)
    }
}

/// Lorentzian of height `a` and full width `w` at `c`.
pub fn lorentzian<T: Real>(x: T, c: T, a: T, w: T) -> T {
    let u = T::lit(2.0) * (x - c) / w;
    a / (T::one() + u * u)
}

// ---------------------------------------------------------------- baseline

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineOptions<T> {
    /// Dips deeper than this many noise σ below the closing are masked.
    pub mask_sigma: T,
    /// Mask also anything deeper than this fraction of the deepest dip.
    pub mask_fraction: T,
    /// Structuring width (MHz) of the morphological closing that bridges
    /// narrow dips.
    pub feature_width: T,
    /// Half-width (MHz) of the masked local-linear smoother applied on top of
    /// the Lorentzian background. `None` keeps the bare Lorentzian + line.
    pub smooth_half_width: Option<T>,
}

impl<T: Real> Default for BaselineOptions<T> {
    fn default() -> Self {
        Self {
            mask_sigma: T::lit(4.0),
            mask_fraction: T::lit(0.02),
            feature_width: T::lit(1.0),
            smooth_half_width: Some(T::lit(1.0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineFit<T> {
    /// `c₀ + c₁u + A/(1 + ((u − u₀)/w)²)` in the scaled coordinate
    /// `u = (Δ_p − centre)/half_span`.
    pub params: [T; 5],
    pub centre: T,
    pub half_span: T,
    /// Total background (Lorentzian + line + smooth correction) per point.
    pub background: Vec<T>,
    pub masked: Vec<bool>,
    pub noise: T,
}

struct BackgroundModel<'a, T> {
    u: &'a [T],
    y: &'a [T],
    keep: &'a [usize],
}

fn background_at<T: Real>(p: &[T], u: T) -> T {
    let s = (u - p[3]) / p[4];
    p[0] + p[1] * u + p[2] / (T::one() + s * s)
}

impl<T: Real> LeastSquares<T> for BackgroundModel<'_, T> {
    fn residual_count(&self) -> usize {
        self.keep.len()
    }

    fn eval(&self, p: &[T], r: &mut [T], jac: Option<&mut [T]>) {
        for (k, &i) in self.keep.iter().enumerate() {
            r[k] = background_at(p, self.u[i]) - self.y[i];
        }
        if let Some(j) = jac {
            for (k, &i) in self.keep.iter().enumerate() {
                let u = self.u[i];
                let s = (u - p[3]) / p[4];
                let den = T::one() + s * s;
                let l = T::one() / den;
                let dl = p[2] * T::lit(2.0) * s / (den * den) / p[4];
                let row = &mut j[5 * k..5 * k + 5];
                row[0] = T::one();
                row[1] = u;
                row[2] = l;
                row[3] = dl;
                row[4] = dl * s;
            }
        }
    }
}

fn median<T: Real>(mut v: Vec<T>) -> T {
    if v.is_empty() {
        return T::zero();
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) * T::lit(0.5)
    }
}

/// Robust noise σ from second differences (insensitive to smooth structure).
pub fn noise_sigma<T: Real>(y: &[T]) -> T {
    if y.len() < 4 {
        return T::zero();
    }
    let d: Vec<T> = y.windows(3).map(|w| (w[2] - w[1] - w[1] + w[0]).abs()).collect();
    median(d) * T::lit(1.4826) / T::lit(6.0).sqrt()
}

/// Tricube-weighted local quadratic regression of `y` over unmasked points.
fn masked_smooth<T: Real>(x: &[T], y: &[T], masked: &[bool], h: T) -> Vec<T> {
    let free: Vec<usize> = (0..x.len()).filter(|&i| !masked[i]).collect();
    x.iter()
        .map(|&x0| {
            // widen until enough free points fall inside
            let mut hw = h;
            loop {
                let mut m = [[T::zero(); 3]; 3];
                let mut v = [T::zero(); 3];
                let mut count = 0;
                for &i in &free {
                    let d = (x[i] - x0) / hw;
                    if d.abs() >= T::one() {
                        continue;
                    }
                    let w = (T::one() - d.abs().powi(3)).powi(3);
                    let b = [T::one(), d, d * d];
                    for r in 0..3 {
                        v[r] += w * b[r] * y[i];
                        for c in 0..3 {
                            m[r][c] += w * b[r] * b[c];
                        }
                    }
                    count += 1;
                }
                if count >= 6 {
                    let a = crate::linalg::DenseMatrix::from_fn(3, 3, |r, c| m[r][c]);
                    if let Ok(sol) = crate::linalg::solve_real(a, &v) {
                        if sol[0].is_finite() {
                            return sol[0];
                        }
                    }
                }
                if free.len() < 6 {
                    return T::zero();
                }
                hw *= T::lit(1.5);
            }
        })
        .collect()
}

/// Removes the one-photon background and returns the two-photon signal
/// (background − absorption, transparency features positive).
pub fn subtract_baseline<T: Real>(spectrum: &Spectrum<T>) -> Result<Spectrum<T>> {
    subtract_baseline_with(spectrum, &BaselineOptions::default()).map(|(s, _)| s)
}

pub fn subtract_baseline_with<T: Real>(
    spectrum: &Spectrum<T>,
    opts: &BaselineOptions<T>,
) -> Result<(Spectrum<T>, BaselineFit<T>)> {
    let n = spectrum.len();
    if n < 50 {
        return Err(EitError::Baseline(format!("need at least 50 points, got {n}")));
    }
    if spectrum.kind != SignalKind::Absorption {
        return Err(EitError::Baseline("input is already baseline-subtracted".into()));
    }
    let x = spectrum.detunings();
    let y = spectrum.absorption();
    let centre = (x[0] + x[n - 1]) * T::lit(0.5);
    let half_span = (x[n - 1] - x[0]) * T::lit(0.5);
    let u: Vec<T> = x.iter().map(|&v| (v - centre) / half_span).collect();
    let y_scale = y
        .iter()
        .fold(T::zero(), |m, v| m.max(v.abs()))
        .max(T::min_positive_value());
    let ys: Vec<T> = y.iter().map(|&v| v / y_scale).collect();

    let noise = noise_sigma(&ys);
    let closed = closing(&x, &ys, opts.feature_width);
    let depth: Vec<T> = closed.iter().zip(&ys).map(|(&c, &v)| c - v).collect();
    let top = depth.iter().fold(T::zero(), |m, &v| m.max(v));
    let thr = (opts.mask_sigma * noise).max(opts.mask_fraction * top);
    let mut masked: Vec<bool> = depth.iter().map(|&d| d > thr).collect();
    dilate(&mut masked);
    let keep: Vec<usize> = (0..n).filter(|&i| !masked[i]).collect();
    if keep.len() < 10 {
        return Err(EitError::Baseline(
            "too few background points left after masking".into(),
        ));
    }
    let lo = ys.iter().fold(T::infinity(), |m, &v| m.min(v));
    let hi = ys.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let model = BackgroundModel {
        u: &u,
        y: &ys,
        keep: &keep,
    };
    let lm = LmOptions {
        max_iterations: 500,
        ..LmOptions::default()
    };
    let mut params = [T::zero(); 5];
    match levenberg_marquardt(&model, &[lo, T::zero(), hi - lo, T::zero(), T::one()], &lm) {
        Ok(fit) => params.copy_from_slice(&fit.params),
        // no Lorentzian trend: straight line, the smoother takes the rest
        Err(EitError::Fit { .. }) => {
            let (c0, c1) = line_fit(&keep.iter().map(|&i| (u[i], ys[i])).collect::<Vec<_>>());
            params = [c0, c1, T::zero(), T::zero(), T::one()];
        }
        Err(e) => return Err(EitError::Baseline(format!("background fit: {e}"))),
    }
    let lorentz: Vec<T> = u.iter().map(|&v| background_at(&params, v)).collect();
    let smooth = match opts.smooth_half_width {
        Some(h) => {
            let resid: Vec<T> = lorentz.iter().zip(&ys).map(|(&b, &v)| v - b).collect();
            masked_smooth(&x, &resid, &masked, h)
        }
        None => vec![T::zero(); n],
    };
    let background: Vec<T> = lorentz.iter().zip(&smooth).map(|(&b, &s)| b + s).collect();
    if background.iter().any(|b| !b.is_finite()) {
        return Err(EitError::Baseline("background is not finite".into()));
    }
    let points = spectrum
        .points
        .iter()
        .zip(&background)
        .map(|(p, &b)| SpectrumPoint {
            delta_p: p.delta_p,
            absorption: (b * y_scale) - p.absorption,
            transmission: p.transmission,
        })
        .collect();
    let out = Spectrum {
        points,
        source: spectrum.source,
        kind: SignalKind::TwoPhoton,
        geometry: spectrum.geometry,
    };
    Ok((
        out,
        BaselineFit {
            params,
            centre,
            half_span,
            background: background.iter().map(|&b| b * y_scale).collect(),
            masked,
            noise: noise * y_scale,
        },
    ))
}

fn line_fit<T: Real>(pts: &[(T, T)]) -> (T, T) {
    let n = T::lit(pts.len() as f64);
    let mx = pts.iter().map(|p| p.0).sum::<T>() / n;
    let my = pts.iter().map(|p| p.1).sum::<T>() / n;
    let sxx = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<T>();
    let sxy = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<T>();
    let slope = if sxx > T::zero() { sxy / sxx } else { T::zero() };
    (my - slope * mx, slope)
}

/// Grey-scale closing (running max then running min) over a window of
/// `width` MHz; fills dips narrower than the window.
fn closing<T: Real>(x: &[T], y: &[T], width: T) -> Vec<T> {
    let half = width * T::lit(0.5);
    let sweep = |v: &[T], pick: fn(T, T) -> T| -> Vec<T> {
        let n = v.len();
        let mut out = Vec::with_capacity(n);
        let (mut lo, mut hi) = (0, 0);
        for i in 0..n {
            while x[i] - x[lo] > half {
                lo += 1;
            }
            while hi + 1 < n && x[hi + 1] - x[i] <= half {
                hi += 1;
            }
            out.push(v[lo..=hi].iter().skip(1).fold(v[lo], |m, &w| pick(m, w)));
        }
        out
    };
    let dil = sweep(y, T::max);
    sweep(&dil, T::min)
}

/// Extends each masked run by its own length on both sides.
fn dilate(mask: &mut [bool]) {
    let n = mask.len();
    let src = mask.to_vec();
    let mut i = 0;
    while i < n {
        if !src[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && src[i] {
            i += 1;
        }
        let len = (i - start).max(2);
        mask[start.saturating_sub(len)..(i + len).min(n)].fill(true);
    }
}

// ---------------------------------------------------------------- peaks

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeakClass {
    Sigma,
    Pi,
}

impl PeakClass {
    pub fn from_index(index: i32) -> Self {
        if index % 2 == 0 {
            PeakClass::Sigma
        } else {
            PeakClass::Pi
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub center: f64,
    /// Height above the background.
    pub amplitude: f64,
    /// FWHM, MHz.
    pub width: f64,
    pub index: Option<i32>,
    pub klass: Option<PeakClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakSet {
    pub peaks: Vec<Peak>,
    pub spacing_estimate: Option<f64>,
    /// RMS residual of the multi-Lorentzian fit.
    pub fit_residual: f64,
    /// Fitted structure below the significance threshold.
    pub rejected: Vec<Peak>,
}

impl PeakSet {
    pub fn by_index(&self, index: i32) -> Option<&Peak> {
        self.peaks.iter().find(|p| p.index == Some(index))
    }

    pub fn count(&self, klass: PeakClass) -> usize {
        self.peaks.iter().filter(|p| p.klass == Some(klass)).count()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.peaks.iter().map(|p| p.center).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Peaks below this fraction of the tallest are rejected.
    pub significance: f64,
    /// Candidate prominence threshold in noise σ.
    pub prominence_sigma: f64,
    pub max_iterations: usize,
    /// Re-center each peak on the parabola vertex over `±refine_window·FWHM`
    /// when the fit residual exceeds three noise σ. `None` keeps the global fit.
    pub refine_window: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            significance: 0.02,
            prominence_sigma: 5.0,
            max_iterations: 400,
            refine_window: Some(0.3),
        }
    }
}

struct MultiLorentz<'a> {
    x: &'a [f64],
    y: &'a [f64],
}

impl LeastSquares<f64> for MultiLorentz<'_> {
    fn residual_count(&self) -> usize {
        self.x.len()
    }

    // p = [offset, (c, a, w)...]
    fn eval(&self, p: &[f64], r: &mut [f64], jac: Option<&mut [f64]>) {
        let k = (p.len() - 1) / 3;
        for (i, (&x, &y)) in self.x.iter().zip(self.y).enumerate() {
            let mut v = p[0];
            for j in 0..k {
                v += lorentzian(x, p[1 + 3 * j], p[2 + 3 * j], p[3 + 3 * j]);
            }
            r[i] = v - y;
        }
        if let Some(jm) = jac {
            let n = p.len();
            for (i, &x) in self.x.iter().enumerate() {
                let row = &mut jm[i * n..(i + 1) * n];
                row[0] = 1.0;
                for j in 0..k {
                    let (c, a, w) = (p[1 + 3 * j], p[2 + 3 * j], p[3 + 3 * j]);
                    let u = 2.0 * (x - c) / w;
                    let den = 1.0 + u * u;
                    let l = 1.0 / den;
                    let g = a * 2.0 * u / (den * den);
                    row[1 + 3 * j] = g * 2.0 / w;
                    row[2 + 3 * j] = l;
                    row[3 + 3 * j] = g * u / w;
                }
            }
        }
    }
}

/// Moves each center to the vertex of a least-squares parabola through the
/// points within `±factor·FWHM` (at least two steps) of the sampled maximum,
/// after subtracting the other fitted peaks. A vertex outside that window
/// keeps the global value.
fn refine(x: &[f64], y: &[f64], peaks: &mut [Peak], factor: f64) {
    let step = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
    let snapshot = peaks.to_vec();
    let resid = |k: usize, i: usize| -> f64 {
        y[i] - snapshot
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, q)| lorentzian(x[i], q.center, q.amplitude, q.width))
            .sum::<f64>()
    };
    for (k, peak) in peaks.iter_mut().enumerate() {
        let half = (factor * peak.width).max(2.0 * step);
        let near: Vec<usize> = (0..x.len()).filter(|&i| (x[i] - peak.center).abs() <= half).collect();
        let Some(&top) = near.iter().max_by(|&&a, &&b| resid(k, a).total_cmp(&resid(k, b))) else {
            continue;
        };
        let idx: Vec<usize> = (0..x.len())
            .filter(|&i| (x[i] - x[top]).abs() <= half + 1e-9 * step)
            .collect();
        if idx.len() < 3 {
            continue;
        }
        let mut m = [[0.0; 3]; 3];
        let mut v = [0.0; 3];
        for &i in &idx {
            let d = (x[i] - x[top]) / step;
            let b = [1.0, d, d * d];
            let r = resid(k, i);
            for a in 0..3 {
                v[a] += b[a] * r;
                for c in 0..3 {
                    m[a][c] += b[a] * b[c];
                }
            }
        }
        let Ok(sol) = crate::linalg::solve_real(crate::linalg::DenseMatrix::from_fn(3, 3, |a, c| m[a][c]), &v) else {
            continue;
        };
        if sol[2] < 0.0 {
            let c = x[top] - sol[1] / (2.0 * sol[2]) * step;
            if (c - peak.center).abs() < half {
                peak.center = c;
            }
        }
    }
}

/// Quadratic five-point Savitzky–Golay smoothing.
fn savgol5(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    (0..n)
        .map(|i| {
            if i < 2 || i + 2 >= n {
                y[i]
            } else {
                (-3.0 * (y[i - 2] + y[i + 2]) + 12.0 * (y[i - 1] + y[i + 1]) + 17.0 * y[i]) / 35.0
            }
        })
        .collect()
}

struct Candidate {
    at: usize,
    prominence: f64,
    width: f64,
}

fn candidates(x: &[f64], y: &[f64]) -> Vec<Candidate> {
    let n = y.len();
    let mut out = Vec::new();
    for i in 1..n.saturating_sub(1) {
        if !(y[i] > y[i - 1] && y[i] >= y[i + 1]) {
            continue;
        }
        let mut left_min = y[i];
        let mut l = i;
        while l > 0 && y[l - 1] <= y[i] {
            l -= 1;
            left_min = left_min.min(y[l]);
        }
        let mut right_min = y[i];
        let mut r = i;
        while r + 1 < n && y[r + 1] <= y[i] {
            r += 1;
            right_min = right_min.min(y[r]);
        }
        let base = left_min.max(right_min);
        let prominence = y[i] - base;
        let half = y[i] - prominence / 2.0;
        let mut a = i;
        while a > 0 && y[a] > half {
            a -= 1;
        }
        let mut b = i;
        while b + 1 < n && y[b] > half {
            b += 1;
        }
        let step = (x[n - 1] - x[0]) / (n - 1) as f64;
        out.push(Candidate {
            at: i,
            prominence,
            width: (x[b] - x[a]).max(2.0 * step),
        });
    }
    out
}

/// Fits a sum of Lorentzians plus a constant to a baseline-subtracted
/// spectrum. Candidates come from prominent local maxima of the smoothed
/// trace; with `expected` only the most prominent that many are seeded.
pub fn fit_peaks<T: Real>(spectrum: &Spectrum<T>, expected: Option<usize>) -> Result<PeakSet> {
    fit_peaks_with(spectrum, expected, &FitOptions::default())
}

pub fn fit_peaks_with<T: Real>(spectrum: &Spectrum<T>, expected: Option<usize>, opts: &FitOptions) -> Result<PeakSet> {
    if spectrum.len() < 10 {
        return Err(EitError::invalid("peak fitting needs at least 10 points"));
    }
    let x: Vec<f64> = spectrum.points.iter().map(|p| p.delta_p.to_f64_lossy()).collect();
    let y: Vec<f64> = spectrum.points.iter().map(|p| p.absorption.to_f64_lossy()).collect();
    let sm = savgol5(&y);
    let noise = noise_sigma(&y);
    let mut cands = candidates(&x, &sm);
    let top = cands.iter().fold(0.0f64, |m, c| m.max(c.prominence));
    let floor = (opts.prominence_sigma * noise).max(opts.significance * top);
    cands.retain(|c| c.prominence > floor && c.prominence > 0.0);
    cands.sort_by(|a, b| b.prominence.total_cmp(&a.prominence));
    if let Some(k) = expected {
        cands.truncate(k);
    }
    if cands.is_empty() {
        return Ok(PeakSet {
            peaks: Vec::new(),
            spacing_estimate: None,
            fit_residual: (y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64).sqrt(),
            rejected: Vec::new(),
        });
    }
    cands.sort_by_key(|c| c.at);
    let mut p = vec![0.0];
    for c in &cands {
        p.extend([x[c.at], c.prominence, c.width]);
    }
    let span = x[x.len() - 1] - x[0];
    let model = MultiLorentz { x: &x, y: &y };
    let lm = LmOptions {
        max_iterations: opts.max_iterations,
        ..LmOptions::default()
    };
    let mut rejected = Vec::new();
    loop {
        let fit = levenberg_marquardt(&model, &p, &lm)?;
        let peaks: Vec<Peak> = fit.params[1..]
            .chunks(3)
            .map(|c| Peak {
                center: c[0],
                amplitude: c[1],
                width: c[2].abs(),
                index: None,
                klass: None,
            })
            .collect();
        let amax = peaks.iter().fold(0.0f64, |m, q| m.max(q.amplitude));
        let (keep, drop): (Vec<Peak>, Vec<Peak>) = peaks.into_iter().partition(|q| {
            q.amplitude > opts.significance * amax
                && q.width < span
                && q.center >= x[0]
                && q.center <= x[x.len() - 1]
                && q.amplitude.is_finite()
        });
        if drop.is_empty() {
            let mut peaks = keep;
            let rms = (fit.cost / x.len() as f64).sqrt();
            if let Some(f) = opts.refine_window {
                // refine only on lineshape misfit
                if rms > 3.0 * noise {
                    refine(&x, &y, &mut peaks, f);
                }
            }
            peaks.sort_by(|a, b| a.center.total_cmp(&b.center));
            return Ok(PeakSet {
                peaks,
                spacing_estimate: None,
                fit_residual: (fit.cost / x.len() as f64).sqrt(),
                rejected,
            });
        }
        rejected.extend(drop);
        p = vec![fit.params[0]];
        for q in &keep {
            p.extend([q.center, q.amplitude, q.width]);
        }
        if keep.is_empty() {
            return Ok(PeakSet {
                peaks: Vec::new(),
                spacing_estimate: None,
                fit_residual: (fit.cost / x.len() as f64).sqrt(),
                rejected,
            });
        }
    }
}

/// Assigns `index = round(center/δ)` and the σ/π class by parity. Any peak
/// further than δ/4 from its grid point is an error.
pub fn classify_peaks(set: &PeakSet, spacing: f64) -> Result<PeakSet> {
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(EitError::invalid("peak spacing must be positive"));
    }
    let mut offenders = Vec::new();
    let mut out = set.clone();
    for p in &mut out.peaks {
        let k = (p.center / spacing).round();
        if (p.center - k * spacing).abs() > spacing / 4.0 {
            offenders.push(p.center);
            continue;
        }
        p.index = Some(k as i32);
        p.klass = Some(PeakClass::from_index(k as i32));
    }
    if !offenders.is_empty() {
        return Err(EitError::Classification { offenders, spacing });
    }
    out.spacing_estimate = Some(spacing);
    Ok(out)
}

/// Which model produced the spectrum; decides how peak positions map to δ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeakMode {
    /// Seven-peak comb at {0, ±δ, ±2δ, ±3δ}. A central peak with a single
    /// pair is the σ-only triplet at {0, ±2δ}; no central peak means only the
    /// π peaks at odd multiples are present.
    #[default]
    Full,
    /// Three-peak comb at {0, ±δ}.
    Toy,
}

/// Least-squares slope of centers against their indices.
pub fn refine_spacing(peaks: &[Peak]) -> Option<f64> {
    let (num, den) = peaks.iter().fold((0.0, 0.0), |(n, d), p| match p.index {
        Some(k) if k != 0 => (n + k as f64 * p.center, d + (k * k) as f64),
        _ => (n, d),
    });
    (den > 0.0).then(|| num / den)
}

/// Estimates δ from unclassified peak centers.
pub fn estimate_spacing(peaks: &[Peak], mode: PeakMode) -> Result<f64> {
    let mut c: Vec<f64> = peaks.iter().map(|p| p.center).collect();
    c.sort_by(f64::total_cmp);
    if c.len() < 2 {
        return Err(EitError::invalid("need at least two peaks to estimate the spacing"));
    }
    let gaps: Vec<f64> = c.windows(2).map(|w| w[1] - w[0]).collect();
    let g = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(g > 0.0) {
        return Err(EitError::invalid("coincident peak centers"));
    }
    let central = c.iter().any(|&v| v.abs() < g / 4.0);
    let fundamental = match mode {
        PeakMode::Toy => g,
        PeakMode::Full if !central => g / 2.0,
        PeakMode::Full => {
            // a central peak with only ±g partners is the σ triplet
            let max_k = c.iter().map(|&v| (v / g).round().abs() as i32).max().unwrap_or(0);
            if max_k <= 1 && c.len() <= 3 {
                g / 2.0
            } else {
                g
            }
        }
    };
    let trial: Vec<Peak> = peaks
        .iter()
        .map(|p| Peak {
            index: Some((p.center / fundamental).round() as i32),
            ..*p
        })
        .collect();
    Ok(refine_spacing(&trial).unwrap_or(fundamental))
}

/// Splits peaks into those on the best-supported comb `{kδ}` (|k| ≤ 3 in
/// full mode, ≤ 1 in toy mode) and off-comb structure. The comb maximizes
/// the summed amplitude of peaks within δ/8 of a tooth; ties go to the
/// larger δ.
pub fn comb_inliers(peaks: &[Peak], mode: PeakMode) -> (Vec<Peak>, Vec<Peak>) {
    let kmax = match mode {
        PeakMode::Full => 3,
        PeakMode::Toy => 1,
    };
    let on = |p: &Peak, d: f64| {
        let k = (p.center / d).round();
        k.abs() <= kmax as f64 && (p.center - k * d).abs() <= d / 8.0
    };
    let top = peaks.iter().fold(0.0f64, |m, p| m.max(p.amplitude.abs()));
    let mut best: Option<(f64, f64)> = None;
    for p in peaks {
        for k in 1..=kmax {
            let d = p.center.abs() / k as f64;
            if !(d > 0.0) {
                continue;
            }
            let score: f64 = peaks.iter().filter(|q| on(q, d)).map(|q| q.amplitude.abs()).sum();
            let better = match best {
                None => true,
                Some((s, bd)) => score > s + 1e-9 * top || ((score - s).abs() <= 1e-9 * top && d > bd),
            };
            if better {
                best = Some((score, d));
            }
        }
    }
    match best {
        Some((_, d)) => peaks.iter().partition(|p| on(p, d)),
        None => (peaks.to_vec(), Vec::new()),
    }
}

/// Baseline removal, fitting, spacing estimation and classification.
pub fn analyze<T: Real>(spectrum: &Spectrum<T>, mode: PeakMode, expected: Option<usize>) -> Result<PeakSet> {
    let signal = match spectrum.kind {
        SignalKind::Absorption => subtract_baseline(spectrum)?,
        SignalKind::TwoPhoton => spectrum.clone(),
    };
    let mut set = fit_peaks(&signal, expected)?;
    if set.peaks.len() > 2 {
        let (inliers, off) = comb_inliers(&set.peaks, mode);
        set.peaks = inliers;
        set.rejected.extend(off);
    }
    if set.peaks.is_empty() {
        return Ok(set);
    }
    let spacing = if set.peaks.len() == 1 {
        return Ok(classify_peaks(&set, f64::MAX / 8.0).unwrap_or(set));
    } else {
        estimate_spacing(&set.peaks, mode)?
    };
    let mut out = classify_peaks(&set, spacing)?;
    if let Some(s) = refine_spacing(&out.peaks) {
        out.spacing_estimate = Some(s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(n: usize, a: f64, b: f64) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    fn two_photon(x: &[f64], y: &[f64]) -> Spectrum<f64> {
        let mut s = Spectrum::from_absorption(x, y, SpectrumSource::Simulated).unwrap();
        s.kind = SignalKind::TwoPhoton;
        s
    }

    #[test]
    fn rejects_unsorted_and_nonfinite() {
        assert!(Spectrum::from_absorption(&[1.0, 0.0], &[0.0, 0.0], SpectrumSource::Simulated).is_err());
        assert!(Spectrum::from_absorption(&[0.0, 1.0], &[f64::NAN, 0.0], SpectrumSource::Simulated).is_err());
    }

    #[test]
    fn transmission_normalization() {
        let t = transmission(&[0.0, 1.0, 2.0], std::f64::consts::LN_2);
        assert_abs_diff_eq!(t[2], 0.5, epsilon = 1e-15);
        assert_eq!(transmission(&[0.0, 0.0], 1.0), vec![1.0, 1.0]);
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let x = grid(60, -3.0, 3.0);
        let y: Vec<f64> = x.iter().map(|v| 0.1 / (1.0 + v * v) + 1e-17 * v).collect();
        let s = Spectrum::from_absorption(&x, &y, SpectrumSource::Simulated).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back: Spectrum<f64> = read_csv(buf.as_slice(), &ImportOptions::default()).unwrap();
        assert_eq!(back.points, s.points);
    }

    #[test]
    fn import_with_comments_and_calibration() {
        let text = "# scope dump\ndelta_p_mhz,signal\n0,0.5\n# gap\n1,0.25\n2,1.0\n";
        let opts = ImportOptions {
            calibration: Some(0.5),
            convention: SignalConvention::Transmission,
        };
        let s: Spectrum<f64> = read_csv(text.as_bytes(), &opts).unwrap();
        assert_eq!(s.detunings(), vec![0.0, 0.5, 1.0]);
        assert_abs_diff_eq!(s.points[1].absorption, 4f64.ln(), epsilon = 1e-15);
        assert!(read_csv::<f64, _>("x,y\n1,2\n".as_bytes(), &ImportOptions::default()).is_err());
        assert!(read_csv::<f64, _>("delta_p_mhz,signal\n1,abc\n".as_bytes(), &ImportOptions::default()).is_err());
    }

    #[test]
    fn flat_baseline_leaves_zero() {
        let x = grid(200, -20.0, 20.0);
        let y = vec![3.0; 200];
        let s = Spectrum::from_absorption(&x, &y, SpectrumSource::Simulated).unwrap();
        let out = subtract_baseline(&s).unwrap();
        assert!(out.absorption().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn baseline_removes_broad_line_and_keeps_dips() {
        let x = grid(801, -20.0, 20.0);
        let y: Vec<f64> = x
            .iter()
            .map(|&v| {
                1.0 / (1.0 + (v / 30.0).powi(2)) + 0.002 * v
                    - 0.2 * lorentzian(v, 4.0, 1.0, 0.4)
                    - 0.1 * lorentzian(v, -8.0, 1.0, 0.4)
            })
            .collect();
        let s = Spectrum::from_absorption(&x, &y, SpectrumSource::Simulated).unwrap();
        let at = |a: &[f64], c: f64| a[x.iter().position(|&v| (v - c).abs() < 1e-9).unwrap()];
        let bare = BaselineOptions {
            smooth_half_width: None,
            feature_width: 3.0,
            ..BaselineOptions::default()
        };
        let a = subtract_baseline_with(&s, &bare).unwrap().0.absorption();
        assert_abs_diff_eq!(at(&a, 4.0), 0.2, epsilon = 2e-3);
        assert_abs_diff_eq!(at(&a, -8.0), 0.1, epsilon = 2e-3);
        assert!(at(&a, 15.0).abs() < 2e-3);
        // the local smoother trims the far Lorentzian wings
        let a = subtract_baseline(&s).unwrap().absorption();
        assert_abs_diff_eq!(at(&a, 4.0), 0.2, epsilon = 0.01);
        assert_abs_diff_eq!(at(&a, -8.0), 0.1, epsilon = 0.006);
        assert!(at(&a, 15.0).abs() < 1e-3);
    }

    #[test]
    fn single_lorentzian_recovered() {
        let x = grid(801, -20.0, 20.0);
        let y: Vec<f64> = x.iter().map(|&v| lorentzian(v, 3.0, 1.0, 0.5)).collect();
        let set = fit_peaks(&two_photon(&x, &y), None).unwrap();
        assert_eq!(set.peaks.len(), 1);
        let p = set.peaks[0];
        assert_abs_diff_eq!(p.center, 3.0, epsilon = 1e-6);
        assert_abs_diff_eq!(p.amplitude, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(p.width, 0.5, epsilon = 1e-6);
    }

    #[test]
    fn small_peaks_are_rejected() {
        let x = grid(801, -20.0, 20.0);
        let y: Vec<f64> = x
            .iter()
            .map(|&v| lorentzian(v, 0.0, 1.0, 0.5) + lorentzian(v, 6.0, 0.01, 0.5))
            .collect();
        let set = fit_peaks(&two_photon(&x, &y), None).unwrap();
        assert_eq!(set.peaks.len(), 1);
    }

    #[test]
    fn classification_examples() {
        let mk = |c: &[f64]| PeakSet {
            peaks: c
                .iter()
                .map(|&center| Peak {
                    center,
                    amplitude: 1.0,
                    width: 0.3,
                    index: None,
                    klass: None,
                })
                .collect(),
            spacing_estimate: None,
            fit_residual: 0.0,
            rejected: vec![],
        };
        let s = classify_peaks(&mk(&[-8.34, 0.0, 8.34]), 4.17).unwrap();
        assert_eq!(
            s.peaks.iter().map(|p| p.index.unwrap()).collect::<Vec<_>>(),
            vec![-2, 0, 2]
        );
        assert_eq!(s.count(PeakClass::Sigma), 3);
        let s = classify_peaks(&mk(&[-12.51, -4.17, 4.17, 12.51]), 4.17).unwrap();
        assert_eq!(s.count(PeakClass::Pi), 4);
        match classify_peaks(&mk(&[2.0]), 4.17) {
            Err(EitError::Classification { offenders, .. }) => assert_eq!(offenders, vec![2.0]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn spacing_from_centers() {
        let mk = |c: &[f64]| -> Vec<Peak> {
            c.iter()
                .map(|&center| Peak {
                    center,
                    amplitude: 1.0,
                    width: 0.3,
                    index: None,
                    klass: None,
                })
                .collect()
        };
        let d = 4.17;
        assert_abs_diff_eq!(
            estimate_spacing(&mk(&[-2.0 * d, 0.0, 2.0 * d]), PeakMode::Full).unwrap(),
            d,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            estimate_spacing(&mk(&[-3.0 * d, -d, d, 3.0 * d]), PeakMode::Full).unwrap(),
            d,
            epsilon = 1e-12
        );
        let seven: Vec<f64> = (-3..=3).map(|k| k as f64 * d).collect();
        assert_abs_diff_eq!(
            estimate_spacing(&mk(&seven), PeakMode::Full).unwrap(),
            d,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            estimate_spacing(&mk(&[-d, 0.0, d]), PeakMode::Toy).unwrap(),
            d,
            epsilon = 1e-12
        );
    }

    #[test]
    fn analyze_synthetic_comb() {
        let x = grid(801, -20.0, 20.0);
        let d = 4.2;
        let y: Vec<f64> = x
            .iter()
            .map(|&v| {
                (-3..=3)
                    .map(|k| lorentzian(v, k as f64 * d, 1.0 - 0.1 * (k as f64).abs(), 0.4))
                    .sum()
            })
            .collect();
        let set = analyze(&two_photon(&x, &y), PeakMode::Full, None).unwrap();
        assert_eq!(set.peaks.len(), 7);
        assert_abs_diff_eq!(set.spacing_estimate.unwrap(), d, epsilon = 1e-6);
        assert_eq!(set.count(PeakClass::Pi), 4);
    }
}
