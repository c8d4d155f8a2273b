//! Weighted nonlinear least squares for the scan models, linear heating-rate
//! fits and sideband-ratio thermometry.

use crate::spectro::{
    freq_scan_model, kerr_spectrum, time_scan_model, FreqScanParams, KerrSpectrumParams,
    TimeScanParams,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("fit did not converge (chi2 = {:.6e})", .best.chi2)]
    NoConvergence { best: Box<FitResult> },
    #[error("jacobian is singular at the solution")]
    SingularJacobian,
    #[error("abscissa values are all equal")]
    DegenerateAbscissa,
    #[error("sideband ratio {0} is not below 1")]
    RatioOutOfRange(f64),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid fit setup: {0}")]
    InvalidSetup(String),
}

/// Measured points with standard errors.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScanData {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma: Vec<f64>,
    #[serde(default)]
    pub metadata: String,
}

impl ScanData {
    pub fn new(x: Vec<f64>, y: Vec<f64>, sigma: Vec<f64>) -> Result<Self, FitError> {
        let d = Self {
            x,
            y,
            sigma,
            metadata: String::new(),
        };
        d.validate(0)?;
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Check lengths, finiteness and that there are more points than `n_params`.
    pub fn validate(&self, n_params: usize) -> Result<(), FitError> {
        let n = self.x.len();
        if self.y.len() != n || self.sigma.len() != n {
            return Err(FitError::InvalidData("x, y and sigma differ in length".into()));
        }
        if n < n_params + 1 || n == 0 {
            return Err(FitError::InvalidData(format!(
                "{n} points are too few for {n_params} free parameters"
            )));
        }
        if let Some(i) = self.sigma.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(FitError::InvalidData(format!("sigma must be positive (row {})", i + 1)));
        }
        if self.x.iter().chain(&self.y).any(|v| !v.is_finite()) {
            return Err(FitError::InvalidData("non-finite value".into()));
        }
        Ok(())
    }

    /// Parse CSV with a header naming `x`, `y` and `sigma` columns. Lines
    /// starting with `#` are collected into `metadata`.
    pub fn from_csv(text: &str) -> Result<Self, FitError> {
        let metadata: Vec<&str> = text
            .lines()
            .filter_map(|l| l.trim_start().strip_prefix('#'))
            .map(str::trim)
            .collect();
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr
            .headers()
            .map_err(|e| FitError::InvalidData(format!("header: {e}")))?
            .clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(name))
                .ok_or_else(|| {
                    FitError::InvalidData(format!(
                        "missing column '{name}' (found: {})",
                        headers.iter().collect::<Vec<_>>().join(", ")
                    ))
                })
        };
        let (ix, iy, is) = (col("x")?, col("y")?, col("sigma")?);
        let mut d = Self {
            metadata: metadata.join("\n"),
            ..Self::default()
        };
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| FitError::InvalidData(format!("row {}: {e}", row + 1)))?;
            let get = |i: usize| -> Result<f64, FitError> {
                let field = rec.get(i).unwrap_or("");
                field.parse().map_err(|_| {
                    FitError::InvalidData(format!("row {}: cannot parse '{field}'", row + 1))
                })
            };
            d.x.push(get(ix)?);
            d.y.push(get(iy)?);
            d.sigma.push(get(is)?);
        }
        d.validate(0)?;
        Ok(d)
    }
}

/// A named model with a fixed parameter order.
pub trait Model {
    fn name(&self) -> &str;
    fn param_names(&self) -> Vec<&'static str>;
    fn eval(&self, params: &[f64], x: f64) -> f64;
    /// Map parameters to a canonical representative of their symmetry
    /// class; returns the sign of ∂new/∂old for each parameter.
    fn gauge(&self, params: &mut [f64]) -> Vec<f64> {
        vec![1.0; params.len()]
    }
}

/// Models available by name.
#[derive(Debug, Clone, PartialEq)]
pub enum ScanModel {
    /// x in MHz; params a, r0_khz, tau_us, delta_ws_mhz, p0.
    FreqScan,
    /// x in µs; params a, r0_khz, phi_rad, gamma_per_ms, y0.
    TimeScan,
    /// y = intercept + slope·x.
    Line,
    /// x in MHz; params nbar_xr, nbar_yr with everything else fixed.
    KerrOccupations(Box<KerrSpectrumParams>),
}

impl ScanModel {
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "freq_scan" => Some(Self::FreqScan),
            "time_scan" => Some(Self::TimeScan),
            "line" => Some(Self::Line),
            _ => None,
        }
    }
}

fn wrap_phase(phi: f64) -> f64 {
    // into (−π, π]
    let w = phi - TAU * ((phi + PI) / TAU).floor();
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

impl Model for ScanModel {
    fn name(&self) -> &str {
        match self {
            Self::FreqScan => "freq_scan",
            Self::TimeScan => "time_scan",
            Self::Line => "line",
            Self::KerrOccupations(_) => "kerr_occupations",
        }
    }

    fn param_names(&self) -> Vec<&'static str> {
        match self {
            Self::FreqScan => vec!["a", "r0_khz", "tau_us", "delta_ws_mhz", "p0"],
            Self::TimeScan => vec!["a", "r0_khz", "phi_rad", "gamma_per_ms", "y0"],
            Self::Line => vec!["intercept", "slope"],
            Self::KerrOccupations(_) => vec!["nbar_xr", "nbar_yr"],
        }
    }

    fn eval(&self, p: &[f64], x: f64) -> f64 {
        match self {
            Self::FreqScan => freq_scan_model(
                &FreqScanParams {
                    a: p[0],
                    r0_khz: p[1],
                    tau_us: p[2],
                    delta_ws_mhz: p[3],
                    p0: p[4],
                },
                x,
            ),
            Self::TimeScan => time_scan_model(
                &TimeScanParams {
                    a: p[0],
                    r0_khz: p[1],
                    phi_rad: p[2],
                    gamma_per_ms: p[3],
                    y0: p[4],
                },
                x,
            ),
            Self::Line => p[0] + p[1] * x,
            Self::KerrOccupations(base) => {
                let mut k = (**base).clone();
                k.nbar_xr = p[0];
                k.nbar_yr = p[1];
                kerr_spectrum(&k, x)
            }
        }
    }

    fn gauge(&self, p: &mut [f64]) -> Vec<f64> {
        let mut s = vec![1.0; p.len()];
        match self {
            // Even in r₀.
            Self::FreqScan if p[1] < 0.0 => {
                p[1] = -p[1];
                s[1] = -1.0;
            }
            Self::TimeScan => {
                // (A, r₀, φ) ~ (−A, −r₀, −φ) ~ (−A, r₀, φ + π)
                if p[1] < 0.0 {
                    p[0] = -p[0];
                    p[1] = -p[1];
                    p[2] = -p[2];
                    s[0] = -1.0;
                    s[1] = -1.0;
                    s[2] = -1.0;
                }
                if p[0] < 0.0 {
                    p[0] = -p[0];
                    p[2] += PI;
                    s[0] = -s[0];
                }
                p[2] = wrap_phase(p[2]);
            }
            _ => {}
        }
        s
    }
}

/// Outcome of a fit. Parameter order follows the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub param_names: Vec<String>,
    pub params: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub confidence_68: Vec<f64>,
    pub chi2: f64,
    pub chi2_reduced: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.param_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.params[i])
    }

    pub fn width(&self, name: &str) -> Option<f64> {
        self.param_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.confidence_68[i])
    }

    /// JSON with parameters keyed by name.
    pub fn to_json(&self) -> serde_json::Value {
        let named = |v: &[f64]| {
            serde_json::Value::Object(
                self.param_names
                    .iter()
                    .zip(v)
                    .map(|(n, x)| (n.clone(), serde_json::json!(x)))
                    .collect(),
            )
        };
        serde_json::json!({
            "model": self.model,
            "param_names": self.param_names,
            "params": named(&self.params),
            "confidence_68": named(&self.confidence_68),
            "covariance": self.covariance,
            "chi2": self.chi2,
            "chi2_reduced": self.chi2_reduced,
            "iterations": self.iterations,
            "converged": self.converged,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Inclusive box bounds per parameter; empty means unbounded.
    pub bounds: Vec<(f64, f64)>,
    pub max_iterations: usize,
    /// Perturbed restarts tried when the first attempt does not converge.
    pub restarts: usize,
    pub seed: u64,
    /// Relative χ² decrease treated as stagnation.
    pub ftol: f64,
    /// Relative parameter step treated as stagnation.
    pub xtol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            bounds: vec![],
            max_iterations: 500,
            restarts: 5,
            seed: 0,
            ftol: 1e-13,
            xtol: 1e-12,
        }
    }
}

struct Problem<'a, M: Model + ?Sized> {
    model: &'a M,
    data: &'a ScanData,
    bounds: Vec<(f64, f64)>,
}

impl<M: Model + ?Sized> Problem<'_, M> {
    fn residuals(&self, p: &[f64]) -> DVector<f64> {
        let d = self.data;
        DVector::from_iterator(
            d.len(),
            (0..d.len()).map(|i| (d.y[i] - self.model.eval(p, d.x[i])) / d.sigma[i]),
        )
    }

    fn clamp(&self, p: &mut [f64]) {
        for (v, (lo, hi)) in p.iter_mut().zip(&self.bounds) {
            *v = v.clamp(*lo, *hi);
        }
    }

    // Jacobian of model/σ with respect to the parameters.
    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let d = self.data;
        let mut j = DMatrix::zeros(d.len(), p.len());
        let mut q = p.to_vec();
        for k in 0..p.len() {
            let h = 1e-6 * p[k].abs().max(1e-3);
            let (lo, hi) = self.bounds[k];
            let (a, b) = if p[k] - h < lo {
                (p[k], p[k] + h)
            } else if p[k] + h > hi {
                (p[k] - h, p[k])
            } else {
                (p[k] - h, p[k] + h)
            };
            for i in 0..d.len() {
                q[k] = b;
                let fb = self.model.eval(&q, d.x[i]);
                q[k] = a;
                let fa = self.model.eval(&q, d.x[i]);
                j[(i, k)] = (fb - fa) / ((b - a) * d.sigma[i]);
            }
            q[k] = p[k];
        }
        j
    }

    fn solve(&self, start: &[f64], opts: &FitOptions) -> (Vec<f64>, f64, usize, bool) {
        let mut p = start.to_vec();
        self.clamp(&mut p);
        let mut r = self.residuals(&p);
        let mut chi2 = r.norm_squared();
        let mut lambda = 1e-3;
        for it in 1..=opts.max_iterations {
            if chi2 == 0.0 {
                return (p, chi2, it, true);
            }
            let j = self.jacobian(&p);
            let mut jtj = j.transpose() * &j;
            let mut g = j.transpose() * &r;
            // Hold parameters on a bound whose descent direction points outward;
            // clamping a free step there drags the others along a bad direction.
            for (k, (lo, hi)) in self.bounds.iter().enumerate() {
                if (p[k] <= *lo && g[k] < 0.0) || (p[k] >= *hi && g[k] > 0.0) {
                    jtj.row_mut(k).fill(0.0);
                    jtj.column_mut(k).fill(0.0);
                    jtj[(k, k)] = 1.0;
                    g[k] = 0.0;
                }
            }
            let dmax = jtj.diagonal().max().max(1e-300);
            let mut accepted = false;
            while lambda < 1e16 {
                let mut a = jtj.clone();
                for k in 0..p.len() {
                    a[(k, k)] += lambda * jtj[(k, k)].max(1e-12 * dmax);
                }
                let Some(step) = a.cholesky().map(|c| c.solve(&g)) else {
                    lambda *= 10.0;
                    continue;
                };
                let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                self.clamp(&mut trial);
                let r_new = self.residuals(&trial);
                let chi2_new = r_new.norm_squared();
                if chi2_new.is_finite() && chi2_new < chi2 {
                    let small_step = trial
                        .iter()
                        .zip(&p)
                        .all(|(a, b)| (a - b).abs() <= opts.xtol * (b.abs() + opts.xtol));
                    let small_drop = chi2 - chi2_new <= opts.ftol * chi2;
                    p = trial;
                    r = r_new;
                    chi2 = chi2_new;
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    if small_step || small_drop {
                        return (p, chi2, it, true);
                    }
                    break;
                }
                lambda *= 10.0;
            }
            if !accepted {
                // No downhill step at any damping: stationary to working precision.
                return (p, chi2, it, true);
            }
        }
        (p, chi2, opts.max_iterations, false)
    }
}

/// Minimize Σ((y − model)/σ)² from `guess`.
pub fn fit_model<M: Model + ?Sized>(
    data: &ScanData,
    model: &M,
    guess: &[f64],
    opts: &FitOptions,
) -> Result<FitResult, FitError> {
    let names = model.param_names();
    if guess.len() != names.len() {
        return Err(FitError::InvalidSetup(format!(
            "{} expects {} parameters, got {}",
            model.name(),
            names.len(),
            guess.len()
        )));
    }
    data.validate(names.len())?;
    let bounds = if opts.bounds.is_empty() {
        vec![(f64::NEG_INFINITY, f64::INFINITY); names.len()]
    } else if opts.bounds.len() == names.len() {
        opts.bounds.clone()
    } else {
        return Err(FitError::InvalidSetup("one bound pair per parameter required".into()));
    };
    for (g, (lo, hi)) in guess.iter().zip(&bounds) {
        if !(lo <= g && g <= hi) {
            return Err(FitError::InvalidSetup(format!("guess {g} outside [{lo}, {hi}]")));
        }
    }
    let prob = Problem { model, data, bounds };

    let mut best = prob.solve(guess, opts);
    if !best.3 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for _ in 0..opts.restarts {
            let start: Vec<f64> = guess
                .iter()
                .zip(&prob.bounds)
                .map(|(g, (lo, hi))| {
                    let scale = if g.abs() > 0.0 {
                        0.1 * g.abs()
                    } else if (hi - lo).is_finite() {
                        0.1 * (hi - lo)
                    } else {
                        0.1
                    };
                    (g + scale * rng.random_range(-1.0..1.0)).clamp(*lo, *hi)
                })
                .collect();
            let attempt = prob.solve(&start, opts);
            let better = (attempt.3 && !best.3) || (attempt.3 == best.3 && attempt.1 < best.1);
            if better {
                best = attempt;
            }
            if best.3 {
                break;
            }
        }
    }
    let (mut params, chi2, iterations, converged) = best;

    let j = prob.jacobian(&params);
    let jtj = j.transpose() * &j;
    let cov = invert_spd(&jtj).ok_or(FitError::SingularJacobian)?;

    let signs = model.gauge(&mut params);
    let n = params.len();
    let covariance: Vec<Vec<f64>> = (0..n)
        .map(|a| (0..n).map(|b| signs[a] * signs[b] * cov[(a, b)]).collect())
        .collect();
    let confidence_68 = (0..n).map(|k| covariance[k][k].max(0.0).sqrt()).collect();
    let dof = (data.len() - n) as f64;
    let result = FitResult {
        model: model.name().to_string(),
        param_names: names.iter().map(|s| s.to_string()).collect(),
        params,
        covariance,
        confidence_68,
        chi2,
        chi2_reduced: chi2 / dof,
        iterations,
        converged,
    };
    if converged {
        Ok(result)
    } else {
        Err(FitError::NoConvergence {
            best: Box::new(result),
        })
    }
}

// Inverse of a symmetric positive-definite matrix, rejecting ill-conditioned input.
fn invert_spd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    // Scale to unit diagonal so the conditioning check is unit-free.
    let d: Vec<f64> = (0..n).map(|i| m[(i, i)].sqrt()).collect();
    if d.iter().any(|x| !(*x > 0.0)) {
        return None;
    }
    let s = DMatrix::from_fn(n, n, |i, j| m[(i, j)] / (d[i] * d[j]));
    let eig = s.clone().symmetric_eigen();
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &e| (a.min(e), b.max(e)));
    if !(lo > 1e-14 * hi) {
        return None;
    }
    let inv = s.cholesky()?.inverse();
    Some(DMatrix::from_fn(n, n, |i, j| inv[(i, j)] / (d[i] * d[j])))
}

/// `n` seeded draws from N(0, σ²); all zeros when σ ≤ 0.
pub fn gaussian_noise(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
    if !(sigma > 0.0) {
        return vec![0.0; n];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).expect("finite sigma");
    (0..n).map(|_| noise.sample(&mut rng)).collect()
}

/// Gaussian-noise synthetic data from `model` at `params`.
pub fn synthesize<M: Model + ?Sized>(
    model: &M,
    params: &[f64],
    x: &[f64],
    sigma: f64,
    seed: u64,
) -> ScanData {
    let noise = gaussian_noise(x.len(), sigma, seed);
    let y = x
        .iter()
        .zip(noise)
        .map(|(&xi, e)| model.eval(params, xi) + e)
        .collect();
    ScanData {
        x: x.to_vec(),
        y,
        sigma: vec![if sigma > 0.0 { sigma } else { 1.0 }; x.len()],
        metadata: String::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatingFit {
    pub slope_per_s: f64,
    pub intercept: f64,
    pub slope_sigma_per_s: f64,
    pub intercept_sigma: f64,
}

/// Weighted straight-line fit to n̄ versus delay (x in ms).
pub fn fit_heating_rate(data: &ScanData) -> Result<HeatingFit, FitError> {
    data.validate(2)?;
    if data.len() < 3 {
        return Err(FitError::InvalidData("at least 3 points required".into()));
    }
    let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..data.len() {
        let w = 1.0 / (data.sigma[i] * data.sigma[i]);
        let (x, y) = (data.x[i], data.y[i]);
        s += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    let det = s * sxx - sx * sx;
    let spread = data.x.iter().fold(0.0f64, |m, x| m.max((x - data.x[0]).abs()));
    if spread == 0.0 || det <= 1e-14 * s * sxx {
        return Err(FitError::DegenerateAbscissa);
    }
    let slope = (s * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    Ok(HeatingFit {
        slope_per_s: slope * 1e3,
        intercept,
        slope_sigma_per_s: (s / det).sqrt() * 1e3,
        intercept_sigma: (sxx / det).sqrt(),
    })
}

/// Thermal-state occupation from red/blue sideband excitation,
/// n̄ = R/(1 − R) with R = p_rsb/p_bsb.
pub fn nbar_from_sidebands(p_rsb: f64, p_bsb: f64) -> Result<f64, FitError> {
    if !(0.0..=1.0).contains(&p_rsb) || !(0.0..=1.0).contains(&p_bsb) || p_bsb <= 0.0 {
        return Err(FitError::InvalidData(format!(
            "sideband probabilities ({p_rsb}, {p_bsb}) outside [0, 1] or p_bsb = 0"
        )));
    }
    let r = p_rsb / p_bsb;
    if r >= 1.0 {
        return Err(FitError::RatioOutOfRange(r));
    }
    Ok(r / (1.0 - r))
}

/// Fit the two rocking-mode occupations with everything else in `base` fixed.
pub fn fit_kerr_occupations(
    data: &ScanData,
    base: &KerrSpectrumParams,
    guess: (f64, f64),
    opts: &FitOptions,
) -> Result<FitResult, FitError> {
    let model = ScanModel::KerrOccupations(Box::new(base.clone()));
    let opts = FitOptions {
        bounds: vec![(0.0, f64::INFINITY); 2],
        ..opts.clone()
    };
    fit_model(data, &model, &[guess.0.max(0.0), guess.1.max(0.0)], &opts)
}
