//! Overlaps `m(T^n_ξ(R) ∩ Q)` of dyadic squares, the geometric mixing scale,
//! correlations, and the Jacobian of the intersection map
//! `F_{n,ξ} = (Π_x ∘ T^n_{θⁿξ}, Π_y ∘ T^{-n}_ξ)`.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::complexity::{kick_schedule, sample_parameter, USegment};
use crate::dynamics::{apply_t, gradient_itinerary, inverse_gradient_itinerary, iterate_kicked, Itinerary, KickSequence};
use crate::error::{domain, Error, Result};
use crate::geometry::{
    kick_vector, rat, rat_to_f64, torus_intersections, LengthRule, Piece, Polygon, Rat, Side, Tracked,
};
use crate::grid::{check_level, grid_mean, pullback, stable_sum, sup_norm, t_permutation};
use crate::rng::{derive_seed, stream};
use crate::stats::{clopper_pearson, z_value, MeanEstimate};
use crate::torus::{big_to_f64, DyadicSquare, IntMatrix, MapParams, TorusPoint, Word};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapMethod {
    MonteCarlo,
    ExactPolygon,
}

impl OverlapMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            OverlapMethod::MonteCarlo => "monte-carlo",
            OverlapMethod::ExactPolygon => "exact-polygon",
        }
    }
}

/// An estimate of `m(T^n_ξ(R) ∩ Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapEstimate {
    pub value: f64,
    pub ci: (f64, f64),
    pub method: OverlapMethod,
    pub n: usize,
    pub xi: String,
    pub r: DyadicSquare,
    pub q: DyadicSquare,
    /// The exact rational value for the polygon method.
    pub exact: Option<Rat>,
    pub samples: u64,
}

impl OverlapEstimate {
    fn scale(&self) -> f64 {
        self.r.area_f64() * self.q.area_f64()
    }

    /// `overlap / (m(R) m(Q))`.
    pub fn ratio(&self) -> f64 {
        self.value / self.scale()
    }

    pub fn ratio_ci(&self) -> (f64, f64) {
        (self.ci.0 / self.scale(), self.ci.1 / self.scale())
    }
}

/// Short text naming a kick sequence, used in reports.
pub fn describe_kicks(xi: &KickSequence) -> String {
    if xi.is_empty() || xi.scale == 0.0 {
        "none".to_string()
    } else {
        format!("gaussian(len={},scale={:e})", xi.len(), xi.scale)
    }
}

const MC_CHUNK: u64 = 1 << 16;

/// Monte Carlo overlap: uniform lattice points of `R` are iterated exactly by
/// the kicked map and counted in the closed square `Q`.
#[allow(clippy::too_many_arguments)]
pub fn overlap_mc(
    r: DyadicSquare,
    q: DyadicSquare,
    n: usize,
    xi: &KickSequence,
    p: &MapParams,
    samples: u64,
    seed: u64,
    confidence: f64,
) -> Result<OverlapEstimate> {
    if samples == 0 {
        return domain("overlap_mc needs at least one sample");
    }
    let chunks = samples.div_ceil(MC_CHUNK);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, c);
            let len = MC_CHUNK.min(samples - c * MC_CHUNK);
            let mut h = 0u64;
            for _ in 0..len {
                let z: TorusPoint<u64> = r.point_at(rng.random(), rng.random());
                if q.contains(iterate_kicked(z, xi, n, p)) {
                    h += 1;
                }
            }
            h
        })
        .sum();
    let m = r.area_f64();
    let (lo, hi) = clopper_pearson(hits, samples, confidence);
    Ok(OverlapEstimate {
        value: m * hits as f64 / samples as f64,
        ci: (m * lo, m * hi),
        method: OverlapMethod::MonteCarlo,
        n,
        xi: describe_kicks(xi),
        r,
        q,
        exact: None,
        samples,
    })
}

fn square_polygon(s: &DyadicSquare) -> Polygon {
    let [x0, y0] = s.corner();
    let side = s.side();
    Polygon::rectangle(x0.clone(), y0.clone(), x0 + &side, y0 + side)
}

/// Exact overlap by pushing `R` forward as rational polygons. Kicks are taken
/// at their lattice values, matching [`overlap_mc`].
pub fn overlap_exact(
    r: DyadicSquare,
    q: DyadicSquare,
    n: usize,
    xi: &KickSequence,
    p: &MapParams,
    budget: usize,
) -> Result<OverlapEstimate> {
    let mut polys = vec![square_polygon(&r)];
    for i in 0..n {
        let kick = kick_vector(xi, i);
        let mut next = Vec::new();
        for poly in &polys {
            next.extend(poly.step(p, Side::Forward, &kick));
            if next.len() > budget {
                return Err(Error::Resource(format!(
                    "polygon pushforward exceeds {budget} pieces at step {}",
                    i + 1
                )));
            }
        }
        polys = next;
    }
    let [qx, qy] = q.corner();
    let side = q.side();
    let (qx1, qy1) = (&qx + &side, &qy + &side);
    let total: Rat = polys.iter().map(|poly| poly.overlap_area_mod1(&qx, &qy, &qx1, &qy1)).sum();
    let v = rat_to_f64(&total);
    Ok(OverlapEstimate {
        value: v,
        ci: (v, v),
        method: OverlapMethod::ExactPolygon,
        n,
        xi: describe_kicks(xi),
        r,
        q,
        exact: Some(total),
        samples: polys.len() as u64,
    })
}

/// Geometric mixing scale of a lattice field.
#[derive(Debug, Clone, PartialEq)]
pub struct MixScaleResult {
    pub kappa: f64,
    /// `2^-N*` for the largest qualifying `N*`.
    pub mix: f64,
    pub level: u32,
    /// `max_R |avg_R f| / ‖f‖∞` over the squares of each level `N = 0..=level`.
    pub worst: Vec<f64>,
}

/// `inf {2^-N : |avg_R f| <= κ‖f‖∞ for all R of level N}` for a mean-zero
/// field on the `2^level` lattice. Square sums come from a sum pyramid.
pub fn mixing_scale(field: &[f64], level: u32, kappa: f64) -> Result<MixScaleResult> {
    let m = check_level(level)?;
    if field.len() != m * m {
        return domain(format!("field has {} samples, expected {}", field.len(), m * m));
    }
    if !(kappa > 0.0 && kappa < 1.0) {
        return domain(format!("kappa must lie in (0, 1), got {kappa}"));
    }
    let sup = sup_norm(field);
    if sup == 0.0 || !sup.is_finite() {
        return domain("field must be finite and not identically zero");
    }
    let mean = grid_mean(field);
    if mean.abs() > 1e-12 * sup {
        return domain(format!("field is not mean zero (mean {mean:e})"));
    }
    let mut worst = vec![0.0; level as usize + 1];
    let mut sums = field.to_vec();
    let mut side = m;
    for lv in (0..=level).rev() {
        let cells = (m / side) as f64;
        let w = sums.iter().fold(0.0f64, |a, s| a.max(s.abs())) / (cells * cells) / sup;
        worst[lv as usize] = w;
        if lv == 0 {
            break;
        }
        let half = side / 2;
        let mut next = vec![0.0; half * half];
        for j in 0..half {
            for i in 0..half {
                let a = 2 * j * side + 2 * i;
                next[j * half + i] =
                    stable_sum([sums[a], sums[a + 1], sums[a + side], sums[a + side + 1]]);
            }
        }
        sums = next;
        side = half;
    }
    // level 0 is the whole torus; its average is the (zero) mean
    worst[0] = mean.abs() / sup;
    let best = (0..=level).rev().find(|&lv| worst[lv as usize] <= kappa).unwrap_or(0);
    Ok(MixScaleResult { kappa, mix: 2f64.powi(-(best as i32)), level, worst })
}

/// Mixing scale of a seeded random shuffle of the field: the value reached by
/// a field with no spatial structure left on this lattice.
pub fn grid_floor(field: &[f64], level: u32, kappa: f64, seed: u64) -> Result<MixScaleResult> {
    let mut shuffled = field.to_vec();
    shuffled.shuffle(&mut stream(seed, 0));
    mixing_scale(&shuffled, level, kappa)
}

/// How `f ∘ T^n` is sampled from a lattice field `f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pullback {
    /// Exact permutation of the lattice samples. Once `α^{2n}` exceeds the
    /// lattice size the result aliases: `T` preserves lattice residues modulo
    /// `α`, so the lattice orbits never equidistribute.
    Lattice,
    /// Exact 64-bit orbits of one seeded uniform point per lattice cell, with
    /// `f` read by bilinear interpolation at the image points. A common shift
    /// would not do: the branches are affine with integer matrices, so the
    /// image of a shifted lattice is again a lattice coset.
    Jittered { seed: u64 },
}

fn bilinear(field: &[f64], level: u32, z: TorusPoint<u64>) -> f64 {
    let m = 1usize << level;
    let scale = 2f64.powi(-64);
    let ix = (z.x >> (64 - level)) as usize;
    let iy = (z.y >> (64 - level)) as usize;
    let fx = (z.x << level) as f64 * scale;
    let fy = (z.y << level) as f64 * scale;
    let (ix1, iy1) = ((ix + 1) & (m - 1), (iy + 1) & (m - 1));
    let a = field[iy * m + ix] * (1.0 - fx) + field[iy * m + ix1] * fx;
    let b = field[iy1 * m + ix] * (1.0 - fx) + field[iy1 * m + ix1] * fx;
    a * (1.0 - fy) + b * fy
}

fn jittered_points(level: u32, seed: u64) -> Vec<TorusPoint<u64>> {
    let m = 1usize << level;
    let mut pts = vec![TorusPoint::origin(); m * m];
    pts.par_chunks_mut(m).enumerate().for_each(|(j, row)| {
        let mut rng = stream(seed, j as u64);
        let y0 = u64::from_dyadic(j as u64, level);
        for (i, z) in row.iter_mut().enumerate() {
            let x0 = u64::from_dyadic(i as u64, level);
            *z = TorusPoint::new(x0 + (rng.random::<u64>() >> level), y0 + (rng.random::<u64>() >> level));
        }
    });
    pts
}

/// Calls `visit(n, samples of f ∘ T^n)` for `n = 0..=n_max`, plus the samples
/// of the base points themselves (for evaluating a second field there).
fn pullback_series(
    field: &[f64],
    level: u32,
    n_max: usize,
    p: &MapParams,
    how: Pullback,
    mut visit: impl FnMut(usize, &[f64]) -> Result<()>,
) -> Result<()> {
    match how {
        Pullback::Lattice => {
            let perm = t_permutation(level, p)?;
            let mut f = field.to_vec();
            for n in 0..=n_max {
                if n > 0 {
                    f = pullback(&f, &perm);
                }
                visit(n, &f)?;
            }
        }
        Pullback::Jittered { seed } => {
            let mut pts = jittered_points(level, seed);
            for n in 0..=n_max {
                if n > 0 {
                    pts.par_iter_mut().for_each(|z| *z = apply_t(*z, p));
                }
                let f: Vec<f64> = pts.par_iter().map(|&z| bilinear(field, level, z)).collect();
                visit(n, &f)?;
            }
        }
    }
    Ok(())
}

/// The second field at the base points of a pullback.
fn base_samples(field: &[f64], level: u32, how: Pullback) -> Vec<f64> {
    match how {
        Pullback::Lattice => field.to_vec(),
        Pullback::Jittered { seed } => jittered_points(level, seed).par_iter().map(|&z| bilinear(field, level, z)).collect(),
    }
}

/// `mix_κ(f ∘ T^n)` for `n = 0..=n_max`. Jittered samples are recentred to
/// mean zero, since their sample mean is only zero up to quadrature error.
pub fn mixing_scale_series(
    field: &[f64],
    level: u32,
    kappa: f64,
    n_max: usize,
    p: &MapParams,
    how: Pullback,
) -> Result<Vec<MixScaleResult>> {
    let m = check_level(level)?;
    if field.len() != m * m {
        return domain(format!("field has {} samples, expected {}", field.len(), m * m));
    }
    mixing_scale(field, level, kappa)?;
    let mut out = Vec::with_capacity(n_max + 1);
    pullback_series(field, level, n_max, p, how, |_, f| {
        let r = match how {
            Pullback::Lattice => mixing_scale(f, level, kappa)?,
            Pullback::Jittered { .. } => {
                let mean = grid_mean(f);
                let centred: Vec<f64> = f.iter().map(|v| v - mean).collect();
                mixing_scale(&centred, level, kappa)?
            }
        };
        out.push(r);
        Ok(())
    })?;
    Ok(out)
}

fn covariance(f: &[f64], g: &[f64]) -> f64 {
    let prod = stable_sum(f.iter().zip(g).map(|(a, b)| a * b)) / f.len() as f64;
    prod - grid_mean(f) * grid_mean(g)
}

/// `∬(f ∘ T^n) g − ∬f ∬g` by equal-weight quadrature over the lattice.
pub fn correlation(f: &[f64], g: &[f64], level: u32, n: usize, p: &MapParams, how: Pullback) -> Result<f64> {
    Ok(*correlation_series(f, g, level, n, p, how)?.last().expect("n + 1 entries"))
}

/// Correlations for `n = 0..=n_max`.
pub fn correlation_series(
    f: &[f64],
    g: &[f64],
    level: u32,
    n_max: usize,
    p: &MapParams,
    how: Pullback,
) -> Result<Vec<f64>> {
    let m = check_level(level)?;
    if f.len() != m * m || g.len() != m * m {
        return domain(format!("fields must have {} samples", m * m));
    }
    let g0 = base_samples(g, level, how);
    let mut out = Vec::with_capacity(n_max + 1);
    pullback_series(f, level, n_max, p, how, |_, fn_| {
        out.push(covariance(fn_, &g0));
        Ok(())
    })?;
    Ok(out)
}

/// Quadrature noise level `‖f‖∞‖g‖∞ / M` of a correlation on the `M` lattice.
pub fn correlation_floor(f: &[f64], g: &[f64], level: u32) -> f64 {
    sup_norm(f) * sup_norm(g) / (1u64 << level) as f64
}

/// Jacobians of `F_{n,ξ}` and of the arclength maps at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianReport {
    pub z: TorusPoint<u64>,
    pub n: usize,
    pub j_f: f64,
    /// `|∇T^n_ξ(z̄) e_x|` at `z̄ = T^{-n}_ξ(z)`.
    pub j_u: f64,
    /// `|∇T^{-n}_{θⁿξ}(w) e_y|` at `w = T^n_{θⁿξ}(z)`.
    pub j_s: f64,
    /// `|J_u J_s / J_F − 1|`.
    pub deviation: f64,
    /// `|J_F / (J_u J_s) − 1|`.
    pub reciprocal_deviation: f64,
    pub forward: Itinerary,
    pub backward: Itinerary,
}

fn column_norm(m: &IntMatrix, j: usize) -> f64 {
    let c = m.column(j);
    big_to_f64(&c[0]).hypot(big_to_f64(&c[1]))
}

/// `J_F = |det ∇F|` where the rows of `∇F` are the `x` row of `fwd = ∇T^n_{θⁿξ}`
/// and the `y` row of `bwd = ∇T^{-n}_ξ`.
fn jacobian_of_f(fwd: &IntMatrix, bwd: &IntMatrix) -> BigInt {
    let r0 = fwd.row(0);
    let r1 = bwd.row(1);
    (&r0[0] * &r1[1] - &r0[1] * &r1[0]).abs()
}

/// Ratio `a / b` of huge integers as an `f64`, by aligning their bit lengths.
fn big_ratio(a: &BigInt, b: &BigInt) -> f64 {
    let shift = a.bits().max(b.bits()).saturating_sub(900);
    big_to_f64(&(a >> shift)) / big_to_f64(&(b >> shift))
}

/// The Jacobian report at `z`; the orbit must avoid the singularity lines of
/// both `T^{-n}_ξ` and `T^n_{θⁿξ}`.
pub fn jacobians_at(z: TorusPoint<u64>, n: usize, xi: &KickSequence, p: &MapParams) -> Result<JacobianReport> {
    let forward = gradient_itinerary(z, n, &xi.shift(n), p)?;
    let backward = inverse_gradient_itinerary(z, n, xi, p)?;
    let jf = jacobian_of_f(&forward.product, &backward.product);
    if jf.is_zero() {
        return domain("the Jacobian of F vanishes");
    }
    // ∇T^n_ξ(z̄) = (∇T^{-n}_ξ(z))^{-1} and ∇T^{-n}_{θⁿξ}(w) = (∇T^n_{θⁿξ}(z))^{-1}
    let du = backward.product.inverse_unimodular();
    let ds = forward.product.inverse_unimodular();
    let cu = du.column(0);
    let cs = ds.column(1);
    let nu = &cu[0] * &cu[0] + &cu[1] * &cu[1];
    let ns = &cs[0] * &cs[0] + &cs[1] * &cs[1];
    // J_u J_s / J_F = sqrt(nu * ns / J_F^2), exact up to the final rounding
    let ratio = big_ratio(&(nu * ns), &(&jf * &jf)).sqrt();
    Ok(JacobianReport {
        z,
        n,
        j_f: big_to_f64(&jf),
        j_u: column_norm(&du, 0),
        j_s: column_norm(&ds, 1),
        deviation: (ratio - 1.0).abs(),
        reciprocal_deviation: (1.0 / ratio - 1.0).abs(),
        forward,
        backward,
    })
}

/// Deviation statistics of the Jacobian comparison at one `(α, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianSummary {
    pub alpha: u32,
    pub n: usize,
    pub samples: u64,
    pub max_dev: f64,
    pub p99_dev: f64,
    /// `α · max_dev`, the constant `C` in `dev <= C/α`.
    pub fitted_c: f64,
    /// Draws rejected for meeting a singularity line.
    pub singular: u64,
    pub min_jf: f64,
}

/// Samples `samples` nonsingular lattice points with fresh Gaussian kicks of
/// the given scale (zero for the unkicked map).
pub fn jacobian_summary(
    p: &MapParams,
    n: usize,
    samples: u64,
    kick_scale: f64,
    seed: u64,
) -> Result<JacobianSummary> {
    if samples == 0 {
        return domain("jacobian_summary needs at least one sample");
    }
    let results: Vec<(f64, f64, u64)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i);
            let mut singular = 0;
            loop {
                let xi = if kick_scale == 0.0 {
                    KickSequence::unkicked()
                } else {
                    KickSequence::gaussian(2 * n, kick_scale, rng.random(), 0)
                };
                let z = TorusPoint::new(rng.random(), rng.random());
                match jacobians_at(z, n, &xi, p) {
                    Ok(r) => return (r.deviation.max(r.reciprocal_deviation), r.j_f, singular),
                    Err(_) => singular += 1,
                }
            }
        })
        .collect();
    let mut devs: Vec<f64> = results.iter().map(|r| r.0).collect();
    devs.sort_by(f64::total_cmp);
    let max_dev = *devs.last().expect("nonempty");
    let p99 = devs[((devs.len() as f64 * 0.99).ceil() as usize).clamp(1, devs.len()) - 1];
    Ok(JacobianSummary {
        alpha: p.alpha(),
        n,
        samples,
        max_dev,
        p99_dev: p99,
        fitted_c: max_dev * p.alpha() as f64,
        singular: results.iter().map(|r| r.2).sum(),
        min_jf: results.iter().map(|r| r.1).fold(f64::INFINITY, f64::min),
    })
}

/// How [`intersection_sum`] evaluates the double sum over generation pieces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntersectionMode {
    /// Enumerate both generations and all intersecting pairs.
    Exhaustive { budget: usize },
    /// Draw leaf pairs with probability proportional to their masses.
    Sampled { samples: u64, seed: u64, confidence: f64 },
    /// Exhaustive within the budget, otherwise sampled.
    Auto { budget: usize, samples: u64, seed: u64, confidence: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionEstimate {
    pub value: f64,
    pub ci: (f64, f64),
    pub std_err: f64,
    pub exhaustive: bool,
    /// Candidate pairs tested (exhaustive) or leaf pairs drawn (sampled).
    pub pairs: u64,
    pub intersections: u64,
    /// `n` is below `1 + N log 2 + log(8α)` for `|W_u| = 2^-N`.
    pub below_threshold: bool,
}

/// The step count `⌈1 + ln(1/|W|) + ln(8α)⌉` from which the intersection sum
/// is bounded below.
pub fn intersection_threshold(length: f64, alpha: u32) -> usize {
    crate::complexity::complexity_horizon(length, alpha)
}

/// `J_F` on a forward leaf with linear part `m` (`∇T^n_ξ`) meeting a backward
/// leaf with linear part `b` (`∇T^{-n}_{θⁿξ}`).
fn leaf_jacobian(m: &IntMatrix, b: &IntMatrix) -> BigInt {
    jacobian_of_f(&b.inverse_unimodular(), &m.inverse_unimodular())
}

fn check_intersection_inputs(wu: &USegment, ws: &USegment) -> Result<()> {
    if wu.side != Side::Forward || ws.side != Side::Backward {
        return domain("intersection_sum needs a forward W_u and a backward W_s");
    }
    Ok(())
}

/// `Σ_{z ∈ T^n_ξ(W_u) ∩ T^{-n}_{θⁿξ}(W_s)} 1/J_F(z)`.
pub fn intersection_sum(
    wu: &USegment,
    ws: &USegment,
    n: usize,
    xi: &KickSequence,
    p: &MapParams,
    mode: IntersectionMode,
) -> Result<IntersectionEstimate> {
    check_intersection_inputs(wu, ws)?;
    let below = n < intersection_threshold(wu.length(), p.alpha());
    let mut est = match mode {
        IntersectionMode::Exhaustive { budget } => intersection_exhaustive(wu, ws, n, xi, p, budget)?,
        IntersectionMode::Sampled { samples, seed, confidence } => {
            intersection_sampled(wu, ws, n, xi, p, samples, seed, confidence)?
        }
        IntersectionMode::Auto { budget, samples, seed, confidence } => {
            match intersection_exhaustive(wu, ws, n, xi, p, budget) {
                Err(Error::Resource(_)) => intersection_sampled(wu, ws, n, xi, p, samples, seed, confidence)?,
                other => other?,
            }
        }
    };
    est.below_threshold = below;
    Ok(est)
}

fn generation_pieces(seg: &USegment, kicks: &[[Rat; 2]], p: &MapParams, budget: usize) -> Result<Vec<Piece>> {
    let cap = LengthRule::standard(p).cap;
    let mut pieces = vec![seg.piece()];
    for kick in kicks {
        let mut next = Vec::new();
        for q in &pieces {
            for img in q.step(p, seg.side, kick) {
                next.extend(img.subdivide(&cap));
            }
            if next.len() > budget {
                return Err(Error::Resource(format!("generation exceeds {budget} pieces")));
            }
        }
        pieces = next;
    }
    Ok(pieces)
}

/// Cells `(i, j)` mod `cells` of the hash grid met by the bounding box of a piece.
fn piece_cells(piece: &Piece, cells: i64) -> Vec<(i64, i64)> {
    let a = piece.start();
    let b = piece.end();
    let c = Rat::from_integer(cells.into());
    let range = |u: &Rat, v: &Rat| {
        let (lo, hi) = if u <= v { (u, v) } else { (v, u) };
        let lo = (lo * &c).floor().to_integer().to_i64().expect("cell index");
        let hi = (hi * &c).floor().to_integer().to_i64().expect("cell index");
        (lo, hi)
    };
    let (x0, x1) = range(&a[0], &b[0]);
    let (y0, y1) = range(&a[1], &b[1]);
    let mut out = Vec::new();
    for i in x0..=x1 {
        for j in y0..=y1 {
            out.push((i.rem_euclid(cells), j.rem_euclid(cells)));
        }
    }
    out
}

fn intersection_exhaustive(
    wu: &USegment,
    ws: &USegment,
    n: usize,
    xi: &KickSequence,
    p: &MapParams,
    budget: usize,
) -> Result<IntersectionEstimate> {
    let fwd = generation_pieces(wu, &kick_schedule(xi, n, Side::Forward), p, budget)?;
    let bwd = generation_pieces(ws, &kick_schedule(&xi.shift(n), n, Side::Backward), p, budget)?;
    let cells = p.alpha_i64();
    let mut table: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, piece) in fwd.iter().enumerate() {
        for c in piece_cells(piece, cells) {
            table.entry(c).or_default().push(i);
        }
    }
    let mut total = 0.0;
    let mut pairs = 0u64;
    let mut hits = 0u64;
    for v in &bwd {
        let mut cand: Vec<usize> =
            piece_cells(v, cells).iter().filter_map(|c| table.get(c)).flatten().copied().collect();
        cand.sort_unstable();
        cand.dedup();
        for i in cand {
            pairs += 1;
            let k = torus_intersections(&fwd[i], v).len();
            if k > 0 {
                hits += k as u64;
                total += k as f64 / big_to_f64(&leaf_jacobian(&fwd[i].jac, &v.jac));
            }
        }
    }
    Ok(IntersectionEstimate {
        value: total,
        ci: (total, total),
        std_err: 0.0,
        exhaustive: true,
        pairs,
        intersections: hits,
        below_threshold: false,
    })
}

/// The leaf of `seg`'s generation containing parameter `s`, subdivided at `cap`.
fn trace_leaf(seg: &USegment, kicks: &[[Rat; 2]], p: &MapParams, cap: &Rat, s: &Rat) -> Piece {
    let mut t = Tracked::new(&seg.piece(), s);
    for kick in kicks {
        t.step(p, seg.side, kick);
        t.subdivide(cap);
    }
    t.to_piece()
}

#[allow(clippy::too_many_arguments)]
fn intersection_sampled(
    wu: &USegment,
    ws: &USegment,
    n: usize,
    xi: &KickSequence,
    p: &MapParams,
    samples: u64,
    seed: u64,
    confidence: f64,
) -> Result<IntersectionEstimate> {
    if samples == 0 {
        return domain("intersection sampling needs at least one sample");
    }
    let kf = kick_schedule(xi, n, Side::Forward);
    let kb = kick_schedule(&xi.shift(n), n, Side::Backward);
    // long leaves keep most sampled pairs intersecting
    let cap = LengthRule::terminal().cap;
    let draws: Vec<(f64, u64)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i);
            let su = sample_parameter(&wu.extent, &mut rng);
            let ss = sample_parameter(&ws.extent, &mut rng);
            let a = trace_leaf(wu, &kf, p, &cap, &su);
            let b = trace_leaf(ws, &kb, p, &cap, &ss);
            let k = torus_intersections(&a, &b).len() as u64;
            if k == 0 {
                return (0.0, 0);
            }
            let pu = rat_to_f64(&(a.extent() / &wu.extent));
            let ps = rat_to_f64(&(b.extent() / &ws.extent));
            let jf = big_to_f64(&leaf_jacobian(&a.jac, &b.jac));
            (k as f64 / (jf * pu * ps), k)
        })
        .collect();
    let ys: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let est = MeanEstimate::from_samples(&ys, confidence);
    Ok(IntersectionEstimate {
        value: est.mean,
        ci: (est.lo, est.hi),
        std_err: est.std_err,
        exhaustive: false,
        pairs: samples,
        intersections: draws.iter().map(|d| d.1).sum(),
        below_threshold: false,
    })
}

/// Midpoint quadrature of the intersection sum over `(x', y') ∈ Π_x(Q) × Π_y(R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaQuadrature {
    /// Approximation of `m(T^{2n}_ξ(R) ∩ Q)`.
    pub value: f64,
    pub ci: (f64, f64),
    pub grid: usize,
    pub values: Vec<f64>,
}

/// Averages the intersection sum of the horizontal chord of `R` at height `y'`
/// and the vertical chord of `Q` at `x'` over a `grid × grid` midpoint rule.
#[allow(clippy::too_many_arguments)]
pub fn area_quadrature(
    r: DyadicSquare,
    q: DyadicSquare,
    n: usize,
    xi: &KickSequence,
    p: &MapParams,
    grid: usize,
    samples_per_point: u64,
    seed: u64,
    confidence: f64,
) -> Result<AreaQuadrature> {
    if grid == 0 {
        return domain("quadrature grid must be positive");
    }
    let [rx, ry] = r.corner();
    let [qx, qy] = q.corner();
    let (rs, qs) = (r.side(), q.side());
    let g = grid as i64;
    let mut values = Vec::with_capacity(grid * grid);
    let mut var = 0.0;
    let z = z_value(confidence);
    for a in 0..grid {
        for b in 0..grid {
            let xp = &qx + &qs * rat(2 * a as i64 + 1, 2 * g);
            let yp = &ry + &rs * rat(2 * b as i64 + 1, 2 * g);
            let wu = USegment::horizontal(p, [rx.clone(), yp], rs.clone())?;
            let ws = USegment::vertical(p, [xp, qy.clone()], qs.clone())?;
            let sub = derive_seed(&[seed, a as u64, b as u64]);
            let mode = IntersectionMode::Sampled { samples: samples_per_point, seed: sub, confidence };
            let e = intersection_sum(&wu, &ws, n, xi, p, mode)?;
            var += e.std_err * e.std_err;
            values.push(e.value);
        }
    }
    let cells = (grid * grid) as f64;
    let area = rat_to_f64(&(&rs * &qs));
    let mean = stable_sum(values.iter().copied()) / cells;
    let half = z * var.sqrt() / cells * area;
    let value = mean * area;
    Ok(AreaQuadrature { value, ci: (value - half, value + half), grid, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::sample_field;
    use std::f64::consts::PI;

    fn p(alpha: u32) -> MapParams {
        MapParams::with_alpha(alpha).unwrap()
    }

    #[test]
    fn overlap_at_time_zero() {
        let prm = p(16);
        let r = DyadicSquare::new(2, 1, 2).unwrap();
        let e = overlap_mc(r, r, 0, &KickSequence::unkicked(), &prm, 1000, 1, 0.99).unwrap();
        assert_eq!(e.value, 1.0 / 16.0);
        let other = DyadicSquare::new(2, 3, 0).unwrap();
        let e = overlap_exact(r, other, 0, &KickSequence::unkicked(), &prm, 10).unwrap();
        assert_eq!(e.exact, Some(Rat::zero()));
        let whole = DyadicSquare::whole_torus();
        let e = overlap_mc(whole, whole, 5, &KickSequence::unkicked(), &prm, 1000, 1, 0.99).unwrap();
        assert_eq!(e.value, 1.0);
    }

    #[test]
    fn exact_overlap_conserves_area() {
        let prm = p(4);
        let r = DyadicSquare::new(1, 0, 0).unwrap();
        let whole = DyadicSquare::whole_torus();
        let e = overlap_exact(r, whole, 2, &KickSequence::unkicked(), &prm, 1 << 16).unwrap();
        assert_eq!(e.exact, Some(rat(1, 4)));
    }

    #[test]
    fn exact_and_monte_carlo_overlaps_agree() {
        let prm = p(4);
        let r = DyadicSquare::new(1, 0, 0).unwrap();
        let ex = overlap_exact(r, r, 1, &KickSequence::unkicked(), &prm, 1 << 16).unwrap();
        let mc = overlap_mc(r, r, 1, &KickSequence::unkicked(), &prm, 200_000, 3, 0.99).unwrap();
        assert!(mc.ci.0 <= ex.value && ex.value <= mc.ci.1, "{ex:?} vs {mc:?}");
    }

    #[test]
    fn polygon_budget_is_a_resource_error() {
        let prm = p(16);
        let r = DyadicSquare::new(1, 0, 0).unwrap();
        let e = overlap_exact(r, r, 3, &KickSequence::unkicked(), &prm, 100);
        assert!(matches!(e, Err(Error::Resource(_))));
    }

    #[test]
    fn sine_has_mixing_scale_one() {
        let f = sample_field(8, |_, y| (2.0 * PI * y).sin()).unwrap();
        let r = mixing_scale(&f, 8, 0.5).unwrap();
        assert_eq!(r.mix, 1.0);
        assert!((r.worst[1] - 2.0 / PI).abs() < 1e-3);
    }

    #[test]
    fn sum_of_two_modes_has_mixing_scale_one_half() {
        let f = sample_field(8, |x, y| (2.0 * PI * x).sin() + (2.0 * PI * y).cos()).unwrap();
        assert_eq!(mixing_scale(&f, 8, 0.5).unwrap().mix, 0.5);
    }

    #[test]
    fn nonzero_mean_is_rejected() {
        let f = vec![1.0; 16];
        assert!(mixing_scale(&f, 2, 0.5).is_err());
    }

    #[test]
    fn correlation_at_time_zero() {
        let prm = p(16);
        let f = sample_field(6, |_, y| (2.0 * PI * y).sin()).unwrap();
        let c = correlation(&f, &f, 6, 0, &prm, Pullback::Lattice).unwrap();
        assert!((c - 0.5).abs() < 1e-12);
        let c = correlation(&f, &f, 6, 0, &prm, Pullback::Jittered { seed: 3 }).unwrap();
        assert!((c - 0.5).abs() < 1e-3);
        let one = vec![1.0; f.len()];
        for how in [Pullback::Lattice, Pullback::Jittered { seed: 1 }] {
            assert!(correlation(&one, &f, 6, 3, &prm, how).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn pullbacks_agree_while_the_lattice_resolves_the_map() {
        let prm = p(4);
        let f = sample_field(10, |x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).cos()).unwrap();
        let a = correlation_series(&f, &f, 10, 1, &prm, Pullback::Lattice).unwrap();
        let b = correlation_series(&f, &f, 10, 1, &prm, Pullback::Jittered { seed: 2 }).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 2e-3, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn bilinear_reads_lattice_values_exactly() {
        let f = sample_field(4, |x, y| x + 10.0 * y).unwrap();
        let z = TorusPoint::new(u64::from_dyadic(3, 4), u64::from_dyadic(5, 4));
        assert_eq!(bilinear(&f, 4, z), f[5 * 16 + 3]);
        let mid = TorusPoint::new(z.x + (1u64 << 59), z.y);
        assert!((bilinear(&f, 4, mid) - (f[5 * 16 + 3] + 1.0 / 32.0)).abs() < 1e-12);
    }

    #[test]
    fn unstable_column_at_alpha_4() {
        let prm = p(4);
        // z̄ = (5/8, 1/8) has itinerary A1; z = T z̄
        let zbar: TorusPoint<u64> = TorusPoint::from_f64(0.625, 0.125);
        let z = crate::dynamics::apply_t(zbar, &prm);
        let r = jacobians_at(z, 1, &KickSequence::unkicked(), &prm).unwrap();
        assert!((r.j_u - 305f64.sqrt()).abs() < 1e-12, "{}", r.j_u);
        assert!(r.j_f > 0.0);
    }

    #[test]
    fn singular_points_are_reported() {
        let prm = p(16);
        let z = TorusPoint::new(0u64, 1u64 << 62);
        assert!(matches!(
            jacobians_at(z, 2, &KickSequence::unkicked(), &prm),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn exhaustive_and_sampled_intersection_sums_agree() {
        let prm = p(4);
        let wu = USegment::horizontal(&prm, [rat(1, 7), rat(1, 3)], rat(1, 4)).unwrap();
        let ws = USegment::vertical(&prm, [rat(3, 5), rat(1, 9)], rat(1, 4)).unwrap();
        let xi = KickSequence::unkicked();
        let ex = intersection_sum(&wu, &ws, 1, &xi, &prm, IntersectionMode::Exhaustive { budget: 1 << 16 }).unwrap();
        let mode = IntersectionMode::Sampled { samples: 20_000, seed: 9, confidence: 0.999 };
        let sa = intersection_sum(&wu, &ws, 1, &xi, &prm, mode).unwrap();
        assert!(ex.value > 0.0);
        assert!(sa.ci.0 <= ex.value && ex.value <= sa.ci.1, "{ex:?} vs {sa:?}");
    }
}
