//! Passive scalars on the `M × M` lattice: the pulsed diffusion
//! `Φ_ν g = e^{νΔ}(g ∘ T)`, a split-step solver for `∂_t f + u·∇f = νΔf`
//! with the alternating shear field, and decay-rate fits.
//!
//! Norms are discrete: `‖f‖₂` is the root mean square over grid points, so
//! values are comparable across `M`.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{domain, Result};
use crate::grid::{check_level, flow_inverse_permutation, grid_mean, pullback, stable_sum, sup_norm, t_permutation};
use crate::stats::{linear_fit, LinearFit};
use crate::torus::MapParams;

type C64 = Complex<f64>;

/// A real field on the `2^level` lattice, row-major with `y` as the row.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub level: u32,
    pub values: Vec<f64>,
}

impl SpectralField {
    pub fn new(level: u32, values: Vec<f64>) -> Result<Self> {
        let m = check_level(level)?;
        if values.len() != m * m {
            return domain(format!("field has {} samples, expected {}", values.len(), m * m));
        }
        Ok(SpectralField { level, values })
    }

    pub fn from_fn(level: u32, f: impl Fn(f64, f64) -> f64 + Sync) -> Result<Self> {
        Ok(SpectralField { level, values: crate::grid::sample_field(level, f)? })
    }

    pub fn side(&self) -> usize {
        1 << self.level
    }

    pub fn mean(&self) -> f64 {
        grid_mean(&self.values)
    }

    pub fn l2(&self) -> f64 {
        (stable_sum(self.values.iter().map(|v| v * v)) / self.values.len() as f64).sqrt()
    }

    pub fn linf(&self) -> f64 {
        sup_norm(&self.values)
    }

    /// `‖self − other‖₂`.
    pub fn distance(&self, other: &SpectralField) -> f64 {
        let s = stable_sum(self.values.iter().zip(&other.values).map(|(a, b)| (a - b) * (a - b)));
        (s / self.values.len() as f64).sqrt()
    }

    fn check_mean_zero(&self) -> Result<()> {
        let mean = self.mean();
        if mean.abs() > 1e-12 * self.linf().max(f64::MIN_POSITIVE) {
            return domain(format!("initial field is not mean zero (mean {mean:e})"));
        }
        Ok(())
    }
}

/// Named initial fields.
pub fn initial_field(name: &str, level: u32) -> Result<SpectralField> {
    let f: fn(f64, f64) -> f64 = match name {
        "sin_y" => |_, y| (2.0 * PI * y).sin(),
        "sin_x" => |x, _| (2.0 * PI * x).sin(),
        "cos_x" => |x, _| (2.0 * PI * x).cos(),
        "sin_x_cos_y" => |x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).cos(),
        "sin_x_plus_cos_y" => |x, y| (2.0 * PI * x).sin() + (2.0 * PI * y).cos(),
        _ => return domain(format!("unknown initial field '{name}'")),
    };
    SpectralField::from_fn(level, f)
}

/// `ν ≥ (4/M)²`: the diffusive length must span at least four cells.
pub fn check_resolution(nu: f64, level: u32) -> Result<()> {
    let m = check_level(level)? as f64;
    let min = (4.0 / m).powi(2);
    if nu < min {
        return domain(format!(
            "nu = {nu:e} is under-resolved on M = {m}: need nu >= (4/M)^2 = {min:e}"
        ));
    }
    Ok(())
}

/// Signed wave number of FFT index `i`.
fn wave(i: usize, m: usize) -> f64 {
    if i <= m / 2 {
        i as f64
    } else {
        i as f64 - m as f64
    }
}

fn transpose(src: &[f64], m: usize) -> Vec<f64> {
    const B: usize = 64;
    let mut dst = vec![0.0; m * m];
    dst.par_chunks_mut(m * B.min(m)).enumerate().for_each(|(bj, block)| {
        let rows = block.len() / m;
        for i0 in (0..m).step_by(B) {
            for r in 0..rows {
                let j = bj * B.min(m) + r;
                for i in i0..(i0 + B).min(m) {
                    block[r * m + i] = src[i * m + j];
                }
            }
        }
    });
    dst
}

/// FFT plans and line operations for one lattice size.
pub struct SpectralGrid {
    pub level: u32,
    pub m: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralGrid").field("level", &self.level).finish()
    }
}

impl SpectralGrid {
    pub fn new(level: u32) -> Result<Self> {
        let m = check_level(level)?;
        let mut planner = FftPlanner::new();
        Ok(SpectralGrid { level, m, fwd: planner.plan_fft_forward(m), inv: planner.plan_fft_inverse(m) })
    }

    fn check(&self, f: &SpectralField) {
        assert_eq!(f.level, self.level, "field and grid sizes differ");
    }

    /// Applies the real, even multiplier `mult(k)` along every row. Rows are
    /// packed in pairs as real and imaginary parts, which a real even
    /// multiplier keeps apart.
    fn rows_even_multiplier(&self, data: &mut [f64], mult: &[f64]) {
        let m = self.m;
        let scale = 1.0 / m as f64;
        data.par_chunks_mut(2 * m).for_each_init(
            || vec![C64::default(); m],
            |buf, pair| {
                let (a, b) = pair.split_at_mut(m);
                for i in 0..m {
                    buf[i] = C64::new(a[i], b[i]);
                }
                self.fwd.process(buf);
                for (c, g) in buf.iter_mut().zip(mult) {
                    *c *= g * scale;
                }
                self.inv.process(buf);
                for i in 0..m {
                    a[i] = buf[i].re;
                    b[i] = buf[i].im;
                }
            },
        );
    }

    fn heat_multiplier(&self, nu_t: f64) -> Vec<f64> {
        (0..self.m).map(|i| (-4.0 * PI * PI * nu_t * wave(i, self.m).powi(2)).exp()).collect()
    }

    /// `e^{νtΔ}`: multiplies mode `(k₁, k₂)` by `exp(−4π²νt(k₁² + k₂²))`, one
    /// direction at a time.
    pub fn heat_step(&self, f: &mut SpectralField, nu_t: f64) -> Result<()> {
        self.check(f);
        if !(nu_t >= 0.0) {
            return domain(format!("heat step needs nu*t >= 0, got {nu_t}"));
        }
        if nu_t == 0.0 {
            return Ok(());
        }
        let g = self.heat_multiplier(nu_t);
        self.rows_even_multiplier(&mut f.values, &g);
        let mut t = transpose(&f.values, self.m);
        self.rows_even_multiplier(&mut t, &g);
        f.values = transpose(&t, self.m);
        Ok(())
    }

    /// 2D transform with the `1/M²` factor, so coefficients are the Fourier
    /// coefficients of the trigonometric interpolant.
    pub fn spectrum(&self, f: &SpectralField) -> Vec<C64> {
        self.check(f);
        let m = self.m;
        let mut buf: Vec<C64> = f.values.iter().map(|&v| C64::new(v, 0.0)).collect();
        buf.par_chunks_mut(m).for_each(|row| self.fwd.process(row));
        let mut cols = transpose_c(&buf, m);
        cols.par_chunks_mut(m).for_each(|c| self.fwd.process(c));
        let s = 1.0 / (m * m) as f64;
        cols.iter_mut().for_each(|c| *c *= s);
        // cols[i * m + j] holds mode (k_x = wave(i), k_y = wave(j))
        cols
    }

    /// `‖∇f‖₂²` of the trigonometric interpolant.
    pub fn grad_sq(&self, f: &SpectralField) -> f64 {
        let spec = self.spectrum(f);
        let m = self.m;
        stable_sum(spec.iter().enumerate().map(|(idx, c)| {
            let (kx, ky) = (wave(idx / m, m), wave(idx % m, m));
            4.0 * PI * PI * (kx * kx + ky * ky) * c.norm_sqr()
        }))
    }

    /// Heat step that also returns `ν∫‖∇f‖₂² dt` over the step, computed mode by
    /// mode as `Σ |f̂_k|² (1 − e^{−2λ_k t}) / 2`.
    pub fn heat_step_tracked(&self, f: &mut SpectralField, nu: f64, t: f64) -> Result<f64> {
        if !(nu >= 0.0 && t >= 0.0) {
            return domain(format!("heat step needs nu, t >= 0, got {nu}, {t}"));
        }
        let spec = self.spectrum(f);
        let m = self.m;
        let dissipated = stable_sum(spec.iter().enumerate().map(|(idx, c)| {
            let (kx, ky) = (wave(idx / m, m), wave(idx % m, m));
            let lam = 4.0 * PI * PI * nu * (kx * kx + ky * ky);
            c.norm_sqr() * -(-2.0 * lam * t).exp_m1() / 2.0
        }));
        self.heat_step(f, nu * t)?;
        Ok(dissipated)
    }

    /// `out(x, y) = in(x + d(y), y)`: every row is translated by its own
    /// displacement through a Fourier phase shift. Rows with equal
    /// displacement are packed into one complex transform.
    fn shift_rows(&self, data: &mut [f64], d: impl Fn(usize) -> f64 + Sync) {
        let m = self.m;
        // rows r and m - r share |y - 1/2|, hence the displacement
        let mut pairs: Vec<(usize, Option<usize>)> = (1..m / 2).map(|r| (r, Some(m - r))).collect();
        pairs.push((0, None));
        pairs.push((m / 2, None));
        let rows: Vec<Vec<f64>> = pairs
            .par_iter()
            .map_init(
                || vec![C64::default(); m],
                |buf, &(r, s)| {
                    let shift = d(r);
                    for i in 0..m {
                        buf[i] = C64::new(data[r * m + i], s.map_or(0.0, |s| data[s * m + i]));
                    }
                    self.fwd.process(buf);
                    let scale = 1.0 / m as f64;
                    for (i, c) in buf.iter_mut().enumerate() {
                        let k = wave(i, m);
                        let phase = 2.0 * PI * k * shift;
                        *c *= if i == m / 2 { C64::new(phase.cos(), 0.0) } else { C64::from_polar(1.0, phase) };
                        *c *= scale;
                    }
                    self.inv.process(buf);
                    let mut out = Vec::with_capacity(2 * m);
                    out.extend(buf.iter().map(|c| c.re));
                    if s.is_some() {
                        out.extend(buf.iter().map(|c| c.im));
                    }
                    out
                },
            )
            .collect();
        for ((r, s), vals) in pairs.iter().zip(rows) {
            data[r * m..(r + 1) * m].copy_from_slice(&vals[..m]);
            if let Some(s) = s {
                data[s * m..(s + 1) * m].copy_from_slice(&vals[m..]);
            }
        }
    }

    /// Transport for time `tau` by the vertical shear: `f(x, y + 2α|x − 1/2|τ)`.
    pub fn vertical_shear(&self, f: &mut SpectralField, p: &MapParams, tau: f64) {
        self.check(f);
        let (m, a) = (self.m, p.alpha() as f64);
        let mut t = transpose(&f.values, m);
        self.shift_rows(&mut t, |i| 2.0 * a * (i as f64 / m as f64 - 0.5).abs() * tau);
        f.values = transpose(&t, m);
    }

    /// Transport for time `tau` by the horizontal shear: `f(x + 2α|y − 1/2|τ, y)`.
    pub fn horizontal_shear(&self, f: &mut SpectralField, p: &MapParams, tau: f64) {
        self.check(f);
        let (m, a) = (self.m, p.alpha() as f64);
        self.shift_rows(&mut f.values, |j| 2.0 * a * (j as f64 / m as f64 - 0.5).abs() * tau);
    }
}

fn transpose_c(src: &[C64], m: usize) -> Vec<C64> {
    let mut dst = vec![C64::default(); m * m];
    dst.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = src[j * m + i];
        }
    });
    dst
}

/// `out(z) = in(T z)`, an exact permutation of the samples.
pub fn transport_step(f: &SpectralField, perm: &[u32]) -> SpectralField {
    SpectralField { level: f.level, values: pullback(&f.values, perm) }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayPoint {
    /// Step index (pulsed) or time (continuous).
    pub t: f64,
    pub l2: f64,
    pub linf: f64,
    /// `ν∫‖∇f‖₂²` accumulated up to `t`, when tracked.
    pub dissipated: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayCurve {
    pub nu: f64,
    pub alpha: u32,
    pub m: usize,
    pub field: String,
    pub scheme: String,
    pub points: Vec<DecayPoint>,
}

impl DecayCurve {
    /// First `t` with `l2(t)/l2(0) <= threshold`, interpolating `log l2`
    /// linearly between records; `None` if the curve never gets there.
    pub fn crossing(&self, threshold: f64) -> Option<f64> {
        let l0 = self.points.first()?.l2;
        let target = (threshold * l0).ln();
        self.points.windows(2).find_map(|w| {
            let (a, b) = (w[0], w[1]);
            if b.l2 > threshold * l0 {
                return None;
            }
            let (la, lb) = (a.l2.ln(), b.l2.ln());
            let frac = if la == lb { 1.0 } else { ((la - target) / (la - lb)).clamp(0.0, 1.0) };
            Some(a.t + frac * (b.t - a.t))
        })
    }
}

/// Iterates `Φ_ν = e^{νΔ}(· ∘ T)` until `‖f‖₂` falls to `threshold ‖f₀‖₂` or
/// `n_max` steps.
pub fn pulsed_evolve(
    f0: &SpectralField,
    p: &MapParams,
    nu: f64,
    n_max: usize,
    threshold: f64,
    field: &str,
) -> Result<DecayCurve> {
    f0.check_mean_zero()?;
    check_resolution(nu, f0.level)?;
    let grid = SpectralGrid::new(f0.level)?;
    let perm = t_permutation(f0.level, p)?;
    let mut f = f0.clone();
    let l0 = f.l2();
    let mut points = vec![DecayPoint { t: 0.0, l2: l0, linf: f.linf(), dissipated: 0.0 }];
    for n in 1..=n_max {
        f = transport_step(&f, &perm);
        grid.heat_step(&mut f, nu)?;
        let l2 = f.l2();
        points.push(DecayPoint { t: n as f64, l2, linf: f.linf(), dissipated: 0.0 });
        if l2 <= threshold * l0 {
            break;
        }
    }
    Ok(DecayCurve { nu, alpha: p.alpha(), m: f0.side(), field: field.into(), scheme: "pulsed".into(), points })
}

/// Time at which pure diffusion brings `‖f₀‖₂` down to `threshold ‖f₀‖₂`, from
/// the spectrum of `f₀` (bisection on `Σ|f̂|²e^{−2λt}`).
pub fn heat_only_crossing(f0: &SpectralField, nu: f64, threshold: f64) -> Result<f64> {
    if !(nu > 0.0 && threshold > 0.0 && threshold < 1.0) {
        return domain("heat_only_crossing needs nu > 0 and threshold in (0, 1)");
    }
    let grid = SpectralGrid::new(f0.level)?;
    let m = grid.m;
    let modes: Vec<(f64, f64)> = grid
        .spectrum(f0)
        .iter()
        .enumerate()
        .filter(|(_, c)| c.norm_sqr() > 0.0)
        .map(|(idx, c)| {
            let (kx, ky) = (wave(idx / m, m), wave(idx % m, m));
            (4.0 * PI * PI * nu * (kx * kx + ky * ky), c.norm_sqr())
        })
        .collect();
    let total: f64 = modes.iter().map(|m| m.1).sum();
    let ratio = |t: f64| (modes.iter().map(|(l, w)| w * (-2.0 * l * t).exp()).sum::<f64>() / total).sqrt();
    if modes.iter().any(|(l, w)| *l == 0.0 && *w > threshold * threshold * total) {
        return domain("field has a non-decaying mean component");
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while ratio(hi) > threshold {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid) > threshold {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Output of [`continuous_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousRun {
    pub curve: DecayCurve,
    /// The field at every whole time `0, 1, ..., t_end`.
    pub snapshots: Vec<SpectralField>,
    /// `ν∫₀^t ‖∇f‖₂²` over the run.
    pub dissipated: f64,
    /// `|‖f(t)‖² + 2ν∫‖∇f‖² − ‖f₀‖²| / ‖f₀‖²`.
    pub energy_defect: f64,
}

/// Strang splitting of `∂_t f + u·∇f = νΔf` for whole periods: each half
/// period is `substeps` steps of half heat, exact shear translation, half heat.
pub fn continuous_solve(
    f0: &SpectralField,
    p: &MapParams,
    nu: f64,
    periods: usize,
    substeps: usize,
    field: &str,
) -> Result<ContinuousRun> {
    f0.check_mean_zero()?;
    if substeps == 0 {
        return domain("continuous_solve needs at least one substep per half period");
    }
    if nu > 0.0 {
        check_resolution(nu, f0.level)?;
    } else if nu < 0.0 {
        return domain("viscosity must be nonnegative");
    }
    let grid = SpectralGrid::new(f0.level)?;
    let tau = 0.5 / substeps as f64;
    let mut f = f0.clone();
    let e0 = f.l2().powi(2);
    let mut dissipated = 0.0;
    let mut points = vec![DecayPoint { t: 0.0, l2: f.l2(), linf: f.linf(), dissipated: 0.0 }];
    let mut snapshots = vec![f.clone()];
    let heat = |f: &mut SpectralField, t: f64| -> Result<f64> {
        if nu == 0.0 {
            Ok(0.0)
        } else {
            grid.heat_step_tracked(f, nu, t)
        }
    };
    for period in 0..periods {
        for half in 0..2 {
            for s in 0..substeps {
                dissipated += heat(&mut f, 0.5 * tau)?;
                if half == 0 {
                    grid.vertical_shear(&mut f, p, tau);
                } else {
                    grid.horizontal_shear(&mut f, p, tau);
                }
                dissipated += heat(&mut f, 0.5 * tau)?;
                let t = period as f64 + 0.5 * half as f64 + tau * (s + 1) as f64;
                points.push(DecayPoint { t, l2: f.l2(), linf: f.linf(), dissipated });
            }
        }
        snapshots.push(f.clone());
    }
    let energy_defect = (f.l2().powi(2) + 2.0 * dissipated - e0).abs() / e0;
    Ok(ContinuousRun {
        curve: DecayCurve { nu, alpha: p.alpha(), m: f0.side(), field: field.into(), scheme: "continuous".into(), points },
        snapshots,
        dissipated,
        energy_defect,
    })
}

/// `f₀ ∘ φ₁⁻¹` by the lattice permutation of `T1 ∘ T2`.
pub fn one_period_transport(f0: &SpectralField, p: &MapParams) -> Result<SpectralField> {
    Ok(transport_step(f0, &flow_inverse_permutation(f0.level, p)?))
}

/// `‖F_d(2k) − f(k)‖₂` for `k = 0..=n` with both dissipation integrals.
#[derive(Debug, Clone, PartialEq)]
pub struct PulsedContinuousComparison {
    pub nu: f64,
    pub errors: Vec<f64>,
    /// `ν∫₀^{2n} ‖∇F_d‖₂²`.
    pub pulsed_dissipation: f64,
    /// `ν∫₀^n ‖∇f‖₂²`.
    pub continuous_dissipation: f64,
}

impl PulsedContinuousComparison {
    pub fn max_error(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, f64::max)
    }
}

/// `F_d` alternates pure transport by the flow for unit time with pure heat
/// for unit time; `f` is the continuous solution.
pub fn compare_pulsed_continuous(
    f0: &SpectralField,
    p: &MapParams,
    nu: f64,
    n: usize,
    substeps: usize,
) -> Result<PulsedContinuousComparison> {
    let run = continuous_solve(f0, p, nu, n, substeps, "compare")?;
    let grid = SpectralGrid::new(f0.level)?;
    let perm = flow_inverse_permutation(f0.level, p)?;
    let mut fd = f0.clone();
    let mut errors = vec![fd.distance(&run.snapshots[0])];
    let mut pulsed_dissipation = 0.0;
    for k in 1..=n {
        fd = transport_step(&fd, &perm);
        pulsed_dissipation += grid.heat_step_tracked(&mut fd, nu, 1.0)?;
        errors.push(fd.distance(&run.snapshots[k]));
    }
    Ok(PulsedContinuousComparison { nu, errors, pulsed_dissipation, continuous_dissipation: run.dissipated })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateEntry {
    pub nu: f64,
    pub log_nu: f64,
    /// `None` when the curve never crossed the threshold.
    pub n_star: Option<f64>,
}

/// Threshold-crossing steps against `|log ν|`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub threshold: f64,
    pub entries: Vec<RateEntry>,
    /// Least squares of `n*` on `|log ν|` over uncensored entries.
    pub fit: Option<LinearFit>,
    pub residuals: Vec<f64>,
    /// `max(n*/|log ν|) / min(n*/|log ν|)`.
    pub dispersion: f64,
}

pub fn fit_rate(curves: &[DecayCurve], threshold: f64) -> Result<RateFit> {
    let mut nus: Vec<f64> = curves.iter().map(|c| c.nu).collect();
    nus.sort_by(f64::total_cmp);
    nus.dedup();
    if nus.len() < 3 {
        return domain("fit_rate needs at least three distinct viscosities");
    }
    let entries: Vec<RateEntry> = curves
        .iter()
        .map(|c| RateEntry { nu: c.nu, log_nu: c.nu.ln().abs(), n_star: c.crossing(threshold) })
        .collect();
    let done: Vec<&RateEntry> = entries.iter().filter(|e| e.n_star.is_some()).collect();
    let xs: Vec<f64> = done.iter().map(|e| e.log_nu).collect();
    let ys: Vec<f64> = done.iter().map(|e| e.n_star.unwrap()).collect();
    let fit = if done.len() >= 2 { linear_fit(&xs, &ys) } else { None };
    let residuals = match &fit {
        Some(f) => xs.iter().zip(&ys).map(|(x, y)| y - (f.slope * x + f.intercept)).collect(),
        None => Vec::new(),
    };
    let ratios: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y / x).collect();
    let dispersion = if ratios.is_empty() {
        f64::INFINITY
    } else {
        ratios.iter().copied().fold(f64::MIN, f64::max) / ratios.iter().copied().fold(f64::MAX, f64::min)
    };
    Ok(RateFit { threshold, entries, fit, residuals, dispersion })
}
