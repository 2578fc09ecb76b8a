//! Strain-load synthesis: Gaussian-process samples, sinusoids, piecewise
//! linear ramps, and resampling of signals onto a different time grid.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::rng::{self, standard_normal};
use crate::{Error, Result};

/// Uniform time grid inclusive of both endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub n_points: usize,
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid {
            t_start: 0.0,
            t_end: 1.0,
            n_points: 101,
        }
    }
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, n_points: usize) -> Result<Self> {
        let grid = TimeGrid {
            t_start,
            t_end,
            n_points,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_points < 2 {
            return Err(Error::invalid(format!(
                "time grid needs at least 2 points, got {}",
                self.n_points
            )));
        }
        if !(self.t_start.is_finite() && self.t_end.is_finite()) || self.t_end <= self.t_start {
            return Err(Error::invalid(format!(
                "time grid span [{}, {}] is empty",
                self.t_start, self.t_end
            )));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / (self.n_points - 1) as f64
    }

    /// Time of sample `j`. The last sample is exactly `t_end`.
    pub fn t(&self, j: usize) -> f64 {
        if j + 1 == self.n_points {
            return self.t_end;
        }
        self.t_start + (self.t_end - self.t_start) * j as f64 / (self.n_points - 1) as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.t(j)).collect()
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpLoadParams {
    pub mean: f64,
    pub std: f64,
    /// Coefficient of the squared distance in `exp(-gamma |t - t'|^2)`, 1/s^2.
    pub gamma: f64,
    /// Multiply each path by `sin(pi t)` so that it vanishes at integer times.
    pub window: bool,
    pub jitter: f64,
    pub seed: u64,
}

impl Default for GpLoadParams {
    fn default() -> Self {
        GpLoadParams {
            mean: 0.0,
            std: 3e-3,
            gamma: 20.0,
            window: true,
            jitter: 1e-10,
            seed: 0,
        }
    }
}

impl GpLoadParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.std > 0.0 && self.std.is_finite()) {
            return Err(Error::invalid(format!("GP std must be positive, got {}", self.std)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(format!("GP gamma must be positive, got {}", self.gamma)));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::invalid(format!("jitter must be non-negative, got {}", self.jitter)));
        }
        if !self.mean.is_finite() {
            return Err(Error::invalid("GP mean must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalKind {
    Gp,
    Sinusoid,
    Piecewise,
    File,
}

/// A strain history sampled on a [`TimeGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct LoadSignal {
    pub grid: TimeGrid,
    pub strain: Vec<f64>,
    pub label: SignalKind,
}

impl LoadSignal {
    pub fn new(grid: TimeGrid, strain: Vec<f64>, label: SignalKind) -> Result<Self> {
        grid.validate()?;
        if strain.len() != grid.n_points {
            return Err(Error::shape(format!(
                "signal has {} samples but grid has {}",
                strain.len(),
                grid.n_points
            )));
        }
        if let Some(j) = strain.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite strain at sample {j}")));
        }
        Ok(LoadSignal { grid, strain, label })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        LoadSignal {
            grid,
            strain: vec![0.0; grid.n_points],
            label: SignalKind::Piecewise,
        }
    }

    /// Writes `t,strain` rows with 17 significant digits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "strain"])?;
        for (j, s) in self.strain.iter().enumerate() {
            w.write_record([fmt_f64(self.grid.t(j)), fmt_f64(*s)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a `t,strain` file. The time column must be uniform.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "strain" {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("expected header `t,strain`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut t = Vec::new();
        let mut strain = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            t.push(parse_f64(&rec[0], path)?);
            strain.push(parse_f64(&rec[1], path)?);
        }
        if t.len() < 2 {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: "signal needs at least two rows".into(),
            });
        }
        let grid = TimeGrid::new(t[0], t[t.len() - 1], t.len())?;
        let tol = 1e-9 * grid.dt().max(1.0);
        for (j, tj) in t.iter().enumerate() {
            if (tj - grid.t(j)).abs() > tol {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    message: format!("time column is not uniform at row {j}"),
                });
            }
        }
        LoadSignal::new(grid, strain, SignalKind::File)
    }
}

/// Seventeen significant digits, enough to round-trip any double.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn parse_f64(s: &str, path: &Path) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: format!("bad number `{s}`: {e}"),
    })
}

/// Stationary squared-exponential covariance on the grid plus diagonal jitter.
pub fn rbf_kernel_matrix(grid: &TimeGrid, gamma: f64, jitter: f64) -> Result<DMatrix<f64>> {
    grid.validate()?;
    if !(gamma > 0.0) {
        return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
    }
    if !(jitter >= 0.0) {
        return Err(Error::invalid(format!("jitter must be non-negative, got {jitter}")));
    }
    let t = grid.times();
    let n = t.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0 + jitter;
        for j in 0..i {
            let d = t[i] - t[j];
            let v = (-gamma * d * d).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// `sin(pi t)`, snapped to exactly zero at integer times.
fn envelope(t: f64) -> f64 {
    if t.fract() == 0.0 {
        0.0
    } else {
        (PI * t).sin()
    }
}

/// Reusable GP sampler: the Cholesky factor is computed once per grid.
#[derive(Clone, Debug)]
pub struct GpSampler {
    params: GpLoadParams,
    grid: TimeGrid,
    chol: DMatrix<f64>,
    envelope: Vec<f64>,
}

impl GpSampler {
    pub fn new(params: GpLoadParams, grid: TimeGrid) -> Result<Self> {
        params.validate()?;
        let k = rbf_kernel_matrix(&grid, params.gamma, params.jitter)?;
        let n = k.nrows();
        let chol = k
            .cholesky()
            .ok_or(Error::Factorization {
                n,
                jitter: params.jitter,
            })?
            .unpack();
        let envelope = grid
            .times()
            .into_iter()
            .map(|t| if params.window { envelope(t) } else { 1.0 })
            .collect();
        Ok(GpSampler {
            params,
            grid,
            chol,
            envelope,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn sample(&self, seed: u64) -> LoadSignal {
        let n = self.grid.n_points;
        let mut rng = rng::seeded(seed);
        let z = DVector::from_fn(n, |_, _| standard_normal(&mut rng));
        let path = &self.chol * z;
        let strain = (0..n)
            .map(|j| self.params.mean + self.envelope[j] * self.params.std * path[j])
            .collect();
        LoadSignal {
            grid: self.grid,
            strain,
            label: SignalKind::Gp,
        }
    }
}

/// One GP draw using `params.seed`.
pub fn sample_gp_load(params: &GpLoadParams, grid: &TimeGrid) -> Result<LoadSignal> {
    Ok(GpSampler::new(*params, *grid)?.sample(params.seed))
}

pub fn sinusoid_load(grid: &TimeGrid, amplitude: f64, period: f64) -> Result<LoadSignal> {
    grid.validate()?;
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::invalid(format!("period must be positive, got {period}")));
    }
    let strain = grid
        .times()
        .into_iter()
        .map(|t| amplitude * (2.0 * PI * t / period).sin())
        .collect();
    LoadSignal::new(*grid, strain, SignalKind::Sinusoid)
}

pub fn piecewise_linear_load(grid: &TimeGrid, knots: &[(f64, f64)]) -> Result<LoadSignal> {
    grid.validate()?;
    if knots.len() < 2 {
        return Err(Error::invalid("piecewise load needs at least two knots"));
    }
    if knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::invalid("knot times must be strictly increasing"));
    }
    if knots.iter().any(|(t, s)| !t.is_finite() || !s.is_finite()) {
        return Err(Error::invalid("knots must be finite"));
    }
    let tol = 1e-12 * (grid.t_end - grid.t_start);
    let (first, last) = (knots[0].0, knots[knots.len() - 1].0);
    if first > grid.t_start + tol || last < grid.t_end - tol {
        return Err(Error::invalid(format!(
            "knots span [{first}, {last}] but grid spans [{}, {}]",
            grid.t_start, grid.t_end
        )));
    }
    let mut seg = 0;
    let strain = grid
        .times()
        .into_iter()
        .map(|t| {
            while seg + 2 < knots.len() && t >= knots[seg + 1].0 {
                seg += 1;
            }
            let (t0, s0) = knots[seg];
            let (t1, s1) = knots[seg + 1];
            if t == t0 {
                s0
            } else if t == t1 {
                s1
            } else {
                s0 + (s1 - s0) * (t - t0) / (t1 - t0)
            }
        })
        .collect();
    LoadSignal::new(*grid, strain, SignalKind::Piecewise)
}

/// Maps the source time span affinely onto the target span and linearly
/// interpolates. Signals with content above the target Nyquist rate alias.
pub fn resample_load(signal: &LoadSignal, target: &TimeGrid) -> Result<LoadSignal> {
    target.validate()?;
    Ok(LoadSignal {
        grid: *target,
        strain: resample_series(&signal.strain, target.n_points),
        label: signal.label,
    })
}

/// Linear interpolation of uniformly sampled values onto `n_target` uniform
/// samples spanning the same interval. Endpoints are preserved exactly.
pub fn resample_series(src: &[f64], n_target: usize) -> Vec<f64> {
    let n_src = src.len();
    assert!(n_src >= 2 && n_target >= 2, "resampling needs at least two samples");
    let scale = (n_src - 1) as f64 / (n_target - 1) as f64;
    (0..n_target)
        .map(|j| {
            if j + 1 == n_target {
                return src[n_src - 1];
            }
            let pos = j as f64 * scale;
            let k = (pos.floor() as usize).min(n_src - 2);
            let w = pos - k as f64;
            if w == 0.0 {
                src[k]
            } else {
                src[k] + w * (src[k + 1] - src[k])
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn grid_defaults() {
        let g = TimeGrid::default();
        assert_relative_eq!(g.dt(), 0.01, epsilon = 1e-15);
        assert_eq!(g.t(100), 1.0);
        assert_eq!(g.t(0), 0.0);
        assert!(TimeGrid::new(0.0, 1.0, 1).is_err());
        assert!(TimeGrid::new(1.0, 1.0, 5).is_err());
    }

    #[test]
    fn kernel_entries() {
        let g = TimeGrid::default();
        let k = rbf_kernel_matrix(&g, 20.0, 1e-10).unwrap();
        assert_eq!(k[(3, 3)], 1.0 + 1e-10);
        // |t_i - t_j| = 0.1
        assert_relative_eq!(k[(0, 10)], (-0.2f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(k[(0, 10)], 0.818_730_753_077_981_9, epsilon = 1e-12);
        assert_eq!(k, k.transpose());
        assert!(k.clone().cholesky().is_some());
        assert!(rbf_kernel_matrix(&g, 0.0, 1e-10).is_err());
    }

    #[test]
    fn gp_endpoints_are_zero() {
        let g = TimeGrid::default();
        for seed in 0..20 {
            let p = GpLoadParams { seed, ..Default::default() };
            let s = sample_gp_load(&p, &g).unwrap();
            assert_eq!(s.strain[0], 0.0);
            assert_eq!(s.strain[100], 0.0);
            assert!(s.strain[50] != 0.0);
        }
    }

    #[test]
    fn gp_is_deterministic() {
        let g = TimeGrid::default();
        let p = GpLoadParams { seed: 42, ..Default::default() };
        let a = sample_gp_load(&p, &g).unwrap();
        let b = sample_gp_load(&p, &g).unwrap();
        let bits = |s: &LoadSignal| s.strain.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let c = sample_gp_load(&GpLoadParams { seed: 43, ..p }, &g).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn gp_tiny_sigma_is_nearly_zero() {
        let g = TimeGrid::default();
        let p = GpLoadParams { std: 1e-300, ..Default::default() };
        let s = sample_gp_load(&p, &g).unwrap();
        assert!(s.strain.iter().all(|v| v.abs() < 1e-290));
        assert!(sample_gp_load(&GpLoadParams { std: 0.0, ..p }, &g).is_err());
    }

    #[test]
    fn gp_factorization_failure_is_reported() {
        let g = TimeGrid::new(0.0, 1.0, 400).unwrap();
        let p = GpLoadParams { jitter: 0.0, gamma: 1.0, ..Default::default() };
        assert!(matches!(sample_gp_load(&p, &g), Err(Error::Factorization { .. })));
    }

    #[test]
    fn sinusoid_examples() {
        let g = TimeGrid::new(0.0, 2.0, 201).unwrap();
        let s = sinusoid_load(&g, 3e-3, 1.0).unwrap();
        let peak = s.strain.iter().cloned().fold(f64::MIN, f64::max);
        assert_relative_eq!(peak, 3e-3, epsilon = 1e-15);
        // quarter period
        assert_relative_eq!(s.strain[25], 3e-3, epsilon = 1e-18);
        assert_relative_eq!(s.strain[125], 3e-3, epsilon = 1e-17);
        let z = sinusoid_load(&g, 0.0, 1.0).unwrap();
        assert!(z.strain.iter().all(|v| *v == 0.0));
        assert!(sinusoid_load(&g, 1.0, 0.0).is_err());
        assert!(sinusoid_load(&g, 1.0, -1.0).is_err());
    }

    #[test]
    fn piecewise_examples() {
        let g = TimeGrid::default();
        let z = piecewise_linear_load(&g, &[(0.0, 0.0), (1.0, 0.0)]).unwrap();
        assert!(z.strain.iter().all(|v| *v == 0.0));

        let tri = piecewise_linear_load(&g, &[(0.0, 0.0), (0.5, 2e-3), (1.0, 0.0)]).unwrap();
        assert_relative_eq!(tri.strain[25], 1e-3, epsilon = 1e-18);
        assert_eq!(tri.strain[50], 2e-3);
        assert_eq!(tri.strain[100], 0.0);

        let g2 = TimeGrid::new(0.0, 2.0, 201).unwrap();
        let ramp = piecewise_linear_load(&g2, &[(0.0, 0.0), (2.0, 4e-3)]).unwrap();
        for (j, v) in ramp.strain.iter().enumerate() {
            assert_relative_eq!(*v, 2e-3 * g2.t(j), epsilon = 1e-18);
        }
    }

    #[test]
    fn piecewise_rejects_bad_knots() {
        let g = TimeGrid::default();
        assert!(piecewise_linear_load(&g, &[(0.0, 0.0), (0.0, 1.0), (1.0, 0.0)]).is_err());
        assert!(piecewise_linear_load(&g, &[(0.0, 0.0), (0.5, 1.0)]).is_err());
        assert!(piecewise_linear_load(&g, &[(0.1, 0.0), (1.0, 1.0)]).is_err());
        assert!(piecewise_linear_load(&g, &[(0.0, 0.0)]).is_err());
    }

    #[test]
    fn resample_identity_and_ramp() {
        let g = TimeGrid::default();
        let s = sample_gp_load(&GpLoadParams { seed: 3, ..Default::default() }, &g).unwrap();
        let r = resample_load(&s, &g).unwrap();
        assert_eq!(r.strain, s.strain);

        let g2 = TimeGrid::new(0.0, 2.0, 201).unwrap();
        let ramp = piecewise_linear_load(&g2, &[(0.0, 1e-3), (2.0, 5e-3)]).unwrap();
        let r = resample_load(&ramp, &g).unwrap();
        assert_eq!(r.strain.len(), 101);
        assert_eq!(r.strain[0], 1e-3);
        assert_eq!(r.strain[100], 5e-3);
        for (j, v) in r.strain.iter().enumerate() {
            assert!((v - (1e-3 + 4e-3 * g.t(j))).abs() <= 1e-12);
        }
    }

    #[test]
    fn resample_aliases_high_frequency() {
        // period 0.01 s sampled onto a 0.01 s grid lands on the zeros of the sine
        let fine = TimeGrid::new(0.0, 1.0, 10_001).unwrap();
        let s = sinusoid_load(&fine, 1e-3, 0.01).unwrap();
        let r = resample_load(&s, &TimeGrid::default()).unwrap();
        let max = r.strain.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max < 1e-12, "aliased to a near-zero signal, max {max}");
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = TimeGrid::default();
        let s = sample_gp_load(&GpLoadParams { seed: 11, ..Default::default() }, &g).unwrap();
        let path = dir.path().join("load.csv");
        s.write_csv(&path).unwrap();
        let back = LoadSignal::read_csv(&path).unwrap();
        assert_eq!(back.strain, s.strain);
        assert_eq!(back.grid.n_points, 101);
        assert_eq!(back.grid.t_end, 1.0);
    }
}
