//! The kicked chain `z ↦ T(z + √(2ν) ξ)`, binned transition densities and
//! Doeblin-type convergence bounds.

use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::dynamics::apply_t_inv;
use crate::error::{domain, Result};
use crate::rng::{polar_normal_pair, stream, StreamRng};
use crate::stats::{clopper_pearson, linear_fit, LinearFit};
use crate::torus::{MapParams, TorusPoint, Word};

const CHUNK: usize = 1 << 14;

/// Endpoints of `samples` independent chains started at `z0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainEnsemble {
    pub z0: TorusPoint<u64>,
    pub nu: f64,
    pub n: usize,
    pub samples: usize,
    pub seed: u64,
    pub endpoints: Vec<TorusPoint<u64>>,
}

fn kick(rng: &mut StreamRng, scale: f64) -> TorusPoint<u64> {
    let g = polar_normal_pair(rng);
    TorusPoint::from_f64(scale * g[0], scale * g[1])
}

fn step(z: TorusPoint<u64>, rng: &mut StreamRng, scale: f64, p: &MapParams) -> TorusPoint<u64> {
    if scale == 0.0 {
        crate::dynamics::apply_t(z, p)
    } else {
        crate::dynamics::apply_t(z + kick(rng, scale), p)
    }
}

fn check_nu(nu: f64) -> Result<f64> {
    if !(nu >= 0.0 && nu.is_finite()) {
        return domain(format!("viscosity must be finite and nonnegative, got {nu}"));
    }
    Ok((2.0 * nu).sqrt())
}

/// Sample `i` uses stream `(seed, i)`; its kicks coincide with
/// `KickSequence::for_viscosity(n, nu, seed, i)`.
pub fn simulate_chain(
    z0: TorusPoint<u64>,
    nu: f64,
    n: usize,
    samples: usize,
    seed: u64,
    p: &MapParams,
) -> Result<ChainEnsemble> {
    let scale = check_nu(nu)?;
    let endpoints = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            (0..n).fold(z0, |z, _| step(z, &mut rng, scale, p))
        })
        .collect();
    Ok(ChainEnsemble { z0, nu, n, samples, seed, endpoints })
}

/// Bin counts on the `2^b × 2^b` dyadic grid, row-major with `y` as the row.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityHistogram {
    pub b: u32,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl DensityHistogram {
    pub fn empty(b: u32) -> Result<Self> {
        if b == 0 || b > 12 {
            return domain(format!("histogram level must lie in 1..=12, got {b}"));
        }
        Ok(DensityHistogram { b, counts: vec![0; 1 << (2 * b)], total: 0 })
    }

    pub fn from_points(b: u32, points: &[TorusPoint<u64>]) -> Result<Self> {
        let mut h = Self::empty(b)?;
        for &z in points {
            h.add(z);
        }
        Ok(h)
    }

    fn bin(&self, z: TorusPoint<u64>) -> usize {
        ((z.y.dyadic_index(self.b) << self.b) | z.x.dyadic_index(self.b)) as usize
    }

    pub fn add(&mut self, z: TorusPoint<u64>) {
        let k = self.bin(z);
        self.counts[k] += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: &DensityHistogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.total as f64).collect()
    }

    /// Density of bin `k`: mass times the number of bins.
    pub fn density(&self, k: usize) -> f64 {
        self.counts[k] as f64 * self.bins() as f64 / self.total as f64
    }

    pub fn min_density(&self) -> f64 {
        let k = *self.counts.iter().min().unwrap();
        k as f64 * self.bins() as f64 / self.total as f64
    }

    pub fn max_density(&self) -> f64 {
        let k = *self.counts.iter().max().unwrap();
        k as f64 * self.bins() as f64 / self.total as f64
    }

    /// Lower bound for the smallest bin density holding for all bins at once
    /// with the given confidence (one-sided Clopper-Pearson, Bonferroni over bins).
    pub fn min_density_lower(&self, confidence: f64) -> f64 {
        let k = *self.counts.iter().min().unwrap();
        let alpha = 2.0 * (1.0 - confidence) / self.bins() as f64;
        clopper_pearson(k, self.total, 1.0 - alpha).0 * self.bins() as f64
    }
}

/// `½ Σ |mass − 1/bins|`.
pub fn tv_to_uniform(h: &DensityHistogram) -> f64 {
    let u = 1.0 / h.bins() as f64;
    0.5 * crate::grid::stable_sum(h.masses().into_iter().map(|m| (m - u).abs()))
}

/// `b = ⌊log2(1/√ν)⌋`, so bins have side `2^{-b}` in `[√ν, 2√ν)`.
pub fn bins_for_viscosity(nu: f64) -> Result<u32> {
    if !(nu > 0.0 && nu < 1.0) {
        return domain(format!("binning needs 0 < nu < 1, got {nu}"));
    }
    Ok(((1.0 / nu.sqrt()).log2().floor() as u32).max(1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityPoint {
    pub n: usize,
    pub min_density: f64,
    pub min_lower: f64,
    pub max_density: f64,
    pub tv: f64,
}

/// Histogram statistics of the chain after each of `1..=n_max` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityCurve {
    pub nu: f64,
    pub z0: TorusPoint<u64>,
    pub b: u32,
    pub samples: usize,
    pub points: Vec<DensityPoint>,
}

impl DensityCurve {
    /// Mean of the minimum density over the last `tail` steps.
    pub fn plateau(&self, tail: usize) -> f64 {
        let t = tail.clamp(1, self.points.len());
        self.points[self.points.len() - t..].iter().map(|q| q.min_density).sum::<f64>() / t as f64
    }

    /// First step at which the minimum density reaches half the plateau,
    /// linearly interpolated between steps (step 0 has density 0).
    pub fn onset(&self, tail: usize) -> Option<f64> {
        let half = 0.5 * self.plateau(tail);
        let mut prev = (0.0, 0.0);
        for q in &self.points {
            if q.min_density >= half {
                let (n0, d0) = prev;
                return Some(n0 + (half - d0) / (q.min_density - d0) * (q.n as f64 - n0));
            }
            prev = (q.n as f64, q.min_density);
        }
        None
    }
}

pub fn density_curve(
    z0: TorusPoint<u64>,
    nu: f64,
    b: u32,
    n_max: usize,
    samples: usize,
    seed: u64,
    confidence: f64,
    p: &MapParams,
) -> Result<DensityCurve> {
    let scale = check_nu(nu)?;
    if samples == 0 || n_max == 0 {
        return domain("density_curve needs samples > 0 and n_max > 0");
    }
    let empty = DensityHistogram::empty(b)?;
    let chunks = samples.div_ceil(CHUNK);
    let hists = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut hs = vec![empty.clone(); n_max];
            for i in c * CHUNK..((c + 1) * CHUNK).min(samples) {
                let mut rng = stream(seed, i as u64);
                let mut z = z0;
                for h in hs.iter_mut() {
                    z = step(z, &mut rng, scale, p);
                    h.add(z);
                }
            }
            hs
        })
        .reduce(
            || vec![empty.clone(); n_max],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| x.merge(y));
                a
            },
        );
    let points = hists
        .iter()
        .enumerate()
        .map(|(k, h)| DensityPoint {
            n: k + 1,
            min_density: h.min_density(),
            min_lower: h.min_density_lower(confidence),
            max_density: h.max_density(),
            tv: tv_to_uniform(h),
        })
        .collect();
    Ok(DensityCurve { nu, z0, b, samples, points })
}

/// `2(1 − λ)^k`.
pub fn doeblin_bound(lambda: f64, k: u32) -> Result<f64> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return domain(format!("minorization constant must lie in (0, 1], got {lambda}"));
    }
    Ok(2.0 * (1.0 - lambda).powi(k as i32))
}

/// `2 exp(−δ₂ n / n₀)`.
pub fn pulsed_bound(delta2: f64, n: f64, n0: f64) -> Result<f64> {
    if !(delta2 > 0.0 && n0 > 0.0) {
        return domain("pulsed_bound needs delta2 > 0 and n0 > 0");
    }
    Ok(2.0 * (-delta2 * n / n0).exp())
}

/// Minorization constant read off a density curve at step `n0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinorizationReport {
    pub n0: usize,
    pub lambda: f64,
    /// `2(1 − λ̂)^k` for `k = 0..=k_max`.
    pub bounds: Vec<f64>,
}

pub fn minorization(curve: &DensityCurve, n0: usize, k_max: u32) -> Result<MinorizationReport> {
    let q = curve
        .points
        .iter()
        .find(|q| q.n == n0)
        .ok_or_else(|| crate::Error::Domain(format!("step {n0} is not on the curve")))?;
    let lambda = q.min_density.clamp(0.0, 1.0);
    let bounds = (0..=k_max).map(|k| doeblin_bound(lambda, k)).collect::<Result<_>>()?;
    Ok(MinorizationReport { n0, lambda, bounds })
}

/// Onset steps against `|log ν|` across several curves.
#[derive(Debug, Clone, PartialEq)]
pub struct OnsetFit {
    pub plateaus: Vec<f64>,
    pub onsets: Vec<Option<f64>>,
    pub fit: Option<LinearFit>,
}

pub fn onset_fit(curves: &[DensityCurve], tail: usize) -> OnsetFit {
    let plateaus = curves.iter().map(|c| c.plateau(tail)).collect();
    let onsets: Vec<Option<f64>> = curves.iter().map(|c| c.onset(tail)).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        curves.iter().zip(&onsets).filter_map(|(c, o)| o.map(|o| (c.nu.ln().abs(), o))).unzip();
    OnsetFit { plateaus, onsets, fit: linear_fit(&xs, &ys) }
}

/// Probability that a centred normal of deviation `sigma`, wrapped to the
/// circle, lands in `[a, b) ⊂ [−1/2, 1/2)`.
fn wrapped_mass(a: f64, b: f64, sigma: f64) -> f64 {
    let g = Normal::new(0.0, sigma).unwrap();
    let images = (6.0 * sigma).ceil() as i64 + 1;
    (-images..=images).map(|k| g.cdf(b + k as f64) - g.cdf(a + k as f64)).sum()
}

/// χ² goodness of fit of the one-step displacement `T⁻¹(z₁) − z₀` against the
/// wrapped Gaussian of covariance `2ν I`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneStepTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

pub fn one_step_chi_square(ens: &ChainEnsemble, p: &MapParams, cells: usize) -> Result<OneStepTest> {
    if ens.n != 1 || ens.nu <= 0.0 {
        return domain("the one-step test needs n = 1 and nu > 0");
    }
    let sigma = (2.0 * ens.nu).sqrt();
    let edges: Vec<f64> = (0..=cells).map(|i| -0.5 + i as f64 / cells as f64).collect();
    let probs: Vec<f64> = edges.windows(2).map(|w| wrapped_mass(w[0], w[1], sigma)).collect();
    let cell = |t: f64| (((t + 0.5) * cells as f64) as usize).min(cells - 1);
    let mut counts = vec![0u64; cells * cells];
    for &z in &ens.endpoints {
        let d = apply_t_inv(z, p) - ens.z0;
        let (dx, dy) = d.to_f64();
        let (dx, dy) = (dx - dx.round(), dy - dy.round());
        counts[cell(dy) * cells + cell(dx)] += 1;
    }
    let n = ens.endpoints.len() as f64;
    // pool cells with expected count under 5
    let (mut stat, mut used) = (0.0, 0usize);
    let (mut pool_obs, mut pool_exp) = (0.0, 0.0);
    for j in 0..cells {
        for i in 0..cells {
            let e = n * probs[i] * probs[j];
            let o = counts[j * cells + i] as f64;
            if e < 5.0 {
                pool_obs += o;
                pool_exp += e;
            } else {
                stat += (o - e) * (o - e) / e;
                used += 1;
            }
        }
    }
    if pool_exp > 0.0 {
        stat += (pool_obs - pool_exp) * (pool_obs - pool_exp) / pool_exp;
        used += 1;
    }
    if used < 2 {
        return domain("too few cells for a chi-square test");
    }
    let dof = used - 1;
    let p_value = 1.0 - ChiSquared::new(dof as f64).unwrap().cdf(stat);
    Ok(OneStepTest { statistic: stat, dof, p_value })
}
